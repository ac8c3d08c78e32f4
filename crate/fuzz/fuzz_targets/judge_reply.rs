#![no_main]

use libfuzzer_sys::fuzz_target;
use proctor_core::judge::extract::{extract_first_json_object, parse_first_json_object};
use proctor_core::judge::transport::{ChatRequest, ChatTransport};
use proctor_core::judge::{Judge, JudgeConfig, JudgePolicy};
use proctor_core::pool::Question;
use proctor_core::selection::CandidateSet;

struct Echo(String);

impl ChatTransport for Echo {
    fn complete(&self, _request: &ChatRequest) -> proctor_core::Result<String> {
        Ok(self.0.clone())
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };

    // the extractor never panics and returns balanced objects only
    if let Some(object) = extract_first_json_object(text) {
        assert!(object.starts_with('{') && object.ends_with('}'));
    }
    let _ = parse_first_json_object(text);

    // an arbitrary reply can never steer the decision outside the
    // candidate set
    let candidates = CandidateSet {
        ids: vec!["q0".into(), "q1".into(), "q2".into()],
        difficulties: vec![-0.5, 0.0, 0.5],
        min_distances: vec![1.0, 2.0, 0.5],
        band_relaxed: false,
    };
    let questions: Vec<Question> = candidates
        .ids
        .iter()
        .map(|id| Question {
            id: id.clone(),
            text: String::new(),
            image_ref: None,
            options: None,
            answer_key: None,
            category: None,
            embedding: None,
            difficulty: None,
        })
        .collect();
    let refs: Vec<&Question> = questions.iter().collect();
    let judge = Judge::with_transport(
        JudgeConfig {
            policy: JudgePolicy::Llm,
            endpoint: Some("http://fuzz".into()),
            model_name: Some("fuzz".into()),
            max_retries: 0,
            ..JudgeConfig::default()
        },
        Box::new(Echo(text.to_string())),
    );
    let decision = judge
        .select_question("(empty)", 0.0, &candidates, &refs, 0)
        .unwrap();
    assert!(candidates.ids.contains(&decision.chosen_id));
});
