#![no_main]

use libfuzzer_sys::fuzz_target;
use proctor_core::pool::{accuracy_per_model, parse_questions, parse_responses, QuestionPool};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let fixed = "{\"id\":\"a\",\"text\":\"t\"}\n{\"id\":\"b\",\"text\":\"t\"}\n";
    let pool = QuestionPool::from_questions(parse_questions(fixed, "fixed").unwrap()).unwrap();
    if let Ok(matrix) = parse_responses(text, "fuzz", &pool) {
        for accuracy in accuracy_per_model(&matrix).values() {
            assert!((0.0..=1.0).contains(accuracy));
        }
    }
});
