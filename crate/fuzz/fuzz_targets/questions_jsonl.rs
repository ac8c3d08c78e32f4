#![no_main]

use libfuzzer_sys::fuzz_target;
use proctor_core::pool::{parse_questions, QuestionPool};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(questions) = parse_questions(text, "fuzz") {
        // anything that parses must also validate or reject cleanly
        let _ = QuestionPool::from_questions(questions);
    }
});
