#![no_main]

use libfuzzer_sys::fuzz_target;
use proctor_core::pool::{parse_and_attach_embeddings, parse_questions, QuestionPool};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let fixed = "{\"id\":\"a\",\"text\":\"t\"}\n{\"id\":\"b\",\"text\":\"t\"}\n{\"id\":\"c\",\"text\":\"t\"}\n";
    let mut questions = parse_questions(fixed, "fixed").unwrap();
    if parse_and_attach_embeddings(&mut questions, text, "fuzz").is_ok() {
        // attached vectors must be unit norm and dimension-consistent
        let _ = QuestionPool::from_questions(questions);
    }
});
