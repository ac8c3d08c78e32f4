//! Next-question choice and category assignment, either via an external
//! chat-completion judge using the versioned prompt templates, or via
//! deterministic built-in policies that mirror the ablations: a farthest
//! heuristic, difficulty-proximity weighted sampling, and uniform choice.

pub mod extract;
pub mod prompts;
pub mod transport;

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::logging;
use crate::pool::Question;
use crate::selection::CandidateSet;
use transport::{ChatRequest, ChatTransport, HttpTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgePolicy {
    Llm,
    FarthestHeuristic,
    DifficultyWeighted,
    RandomAmong,
}

impl std::str::FromStr for JudgePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "llm" => Ok(JudgePolicy::Llm),
            "farthest" | "farthest_heuristic" => Ok(JudgePolicy::FarthestHeuristic),
            "difficulty_weighted" => Ok(JudgePolicy::DifficultyWeighted),
            "random" | "random_among" => Ok(JudgePolicy::RandomAmong),
            other => Err(Error::InvalidConfig(format!(
                "unknown judge policy {other:?}"
            ))),
        }
    }
}

/// Additive smoothing for the difficulty-proximity weights; bounds the
/// weight of an exact match and keeps the kernel finite.
pub const WEIGHT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub policy: JudgePolicy,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub include_images: bool,
    /// False shows the judge an empty statistics table instead of the
    /// session memory (the no-memory ablation); tracking is unaffected.
    pub include_memory: bool,
    pub temperature: f64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            policy: JudgePolicy::FarthestHeuristic,
            endpoint: None,
            model_name: None,
            api_key_env: "JUDGE_API_KEY".into(),
            timeout_s: 30.0,
            max_retries: 2,
            include_images: true,
            include_memory: true,
            temperature: 0.0,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.policy == JudgePolicy::Llm && (self.endpoint.is_none() || self.model_name.is_none())
        {
            return Err(Error::InvalidConfig(
                "llm judge policy requires endpoint and model_name".into(),
            ));
        }
        if self.timeout_s <= 0.0 {
            return Err(Error::InvalidConfig("timeout_s must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeDecision {
    pub chosen_id: String,
    pub summary: String,
    pub rationale: String,
    /// The policy that actually produced the choice.
    pub policy: JudgePolicy,
    /// True iff the llm policy failed and the farthest heuristic substituted.
    pub fallback_used: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

pub struct Judge {
    config: JudgeConfig,
    transport: Option<Box<dyn ChatTransport>>,
}

impl Judge {
    /// Build from config; the llm policy gets an HTTP transport against the
    /// configured endpoint.
    pub fn from_config(config: JudgeConfig) -> Result<Self> {
        config.validate()?;
        let transport: Option<Box<dyn ChatTransport>> = if config.policy == JudgePolicy::Llm {
            let endpoint = config.endpoint.as_deref().expect("validated");
            Some(Box::new(HttpTransport::new(
                endpoint,
                &config.api_key_env,
                config.timeout_s,
            )))
        } else {
            None
        };
        Ok(Judge { config, transport })
    }

    /// Inject a transport; how the llm-policy tests fault the endpoint.
    pub fn with_transport(config: JudgeConfig, transport: Box<dyn ChatTransport>) -> Self {
        Judge {
            config,
            transport: Some(transport),
        }
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    /// Pick the next question from the candidate set. Always returns a
    /// member of `candidates`; the llm policy retries malformed or invalid
    /// replies up to `max_retries`, then falls back to the farthest
    /// heuristic with `fallback_used` set.
    pub fn select_question(
        &self,
        memory_markdown: &str,
        ability: f64,
        candidates: &CandidateSet,
        questions: &[&Question],
        seed: u64,
    ) -> Result<JudgeDecision> {
        if candidates.is_empty() {
            return Err(Error::Judge("empty candidate set".into()));
        }
        if questions.len() != candidates.len()
            || questions
                .iter()
                .zip(&candidates.ids)
                .any(|(q, id)| &q.id != id)
        {
            return Err(Error::Judge(
                "question payloads misaligned with candidate ids".into(),
            ));
        }
        match self.config.policy {
            JudgePolicy::FarthestHeuristic => Ok(self.pick_farthest(candidates, false, None)),
            JudgePolicy::DifficultyWeighted => Ok(self.pick_weighted(candidates, ability, seed)),
            JudgePolicy::RandomAmong => Ok(self.pick_uniform(candidates, seed)),
            JudgePolicy::Llm => Ok(self.pick_llm(memory_markdown, ability, candidates, questions)),
        }
    }

    fn pick_farthest(
        &self,
        candidates: &CandidateSet,
        fallback_used: bool,
        raw_response: Option<String>,
    ) -> JudgeDecision {
        let mut best = 0usize;
        for i in 1..candidates.len() {
            let better = candidates.min_distances[i] > candidates.min_distances[best]
                || (candidates.min_distances[i] == candidates.min_distances[best]
                    && candidates.ids[i] < candidates.ids[best]);
            if better {
                best = i;
            }
        }
        JudgeDecision {
            chosen_id: candidates.ids[best].clone(),
            summary: String::new(),
            rationale: String::new(),
            policy: JudgePolicy::FarthestHeuristic,
            fallback_used,
            raw_response,
        }
    }

    fn pick_weighted(&self, candidates: &CandidateSet, ability: f64, seed: u64) -> JudgeDecision {
        let mut rng = Pcg64::seed_from_u64(seed);
        let weights: Vec<f64> = candidates
            .difficulties
            .iter()
            .map(|d| 1.0 / ((d - ability).abs() + WEIGHT_SMOOTHING))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut chosen = candidates.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        JudgeDecision {
            chosen_id: candidates.ids[chosen].clone(),
            summary: String::new(),
            rationale: String::new(),
            policy: JudgePolicy::DifficultyWeighted,
            fallback_used: false,
            raw_response: None,
        }
    }

    fn pick_uniform(&self, candidates: &CandidateSet, seed: u64) -> JudgeDecision {
        let mut rng = Pcg64::seed_from_u64(seed);
        let chosen = rng.random_range(0..candidates.len());
        JudgeDecision {
            chosen_id: candidates.ids[chosen].clone(),
            summary: String::new(),
            rationale: String::new(),
            policy: JudgePolicy::RandomAmong,
            fallback_used: false,
            raw_response: None,
        }
    }

    fn pick_llm(
        &self,
        memory_markdown: &str,
        ability: f64,
        candidates: &CandidateSet,
        questions: &[&Question],
    ) -> JudgeDecision {
        let transport = match &self.transport {
            Some(t) => t,
            None => {
                logging::warn("llm judge has no transport; using farthest heuristic");
                return self.pick_farthest(candidates, true, None);
            }
        };
        let payload: Vec<(&Question, f64)> = questions
            .iter()
            .zip(&candidates.difficulties)
            .map(|(&q, &d)| (q, d))
            .collect();
        let (text, images) = prompts::render_select_question(
            memory_markdown,
            ability,
            &payload,
            self.config.include_images,
        );
        let request = ChatRequest {
            model: self.config.model_name.clone().unwrap_or_default(),
            text,
            images,
            temperature: self.config.temperature,
        };
        let mut last_raw = None;
        for attempt in 0..=self.config.max_retries {
            match transport.complete(&request) {
                Err(e) => {
                    logging::warn(&format!("judge call failed (attempt {attempt}): {e}"));
                }
                Ok(raw) => {
                    let parsed = parse_selection_reply(&raw, candidates);
                    last_raw = Some(raw);
                    match parsed {
                        Ok((chosen_id, summary, rationale)) => {
                            return JudgeDecision {
                                chosen_id,
                                summary,
                                rationale,
                                policy: JudgePolicy::Llm,
                                fallback_used: false,
                                raw_response: last_raw,
                            }
                        }
                        Err(e) => {
                            logging::warn(&format!(
                                "judge reply rejected (attempt {attempt}): {e}"
                            ));
                        }
                    }
                }
            }
        }
        logging::warn("judge exhausted retries; using farthest heuristic");
        self.pick_farthest(candidates, true, last_raw)
    }

    /// Batch category assignment for the initial questions (one category
    /// per question under the llm policy; ingested category or
    /// "uncategorized" otherwise). Never aborts a session.
    pub fn categorize_batch(
        &self,
        questions: &[&Question],
        difficulties: &[f64],
    ) -> BTreeMap<String, Vec<String>> {
        if self.config.policy != JudgePolicy::Llm {
            return questions
                .iter()
                .map(|q| (q.id.clone(), passthrough(q)))
                .collect();
        }
        let payload: Vec<(&Question, f64)> = questions
            .iter()
            .zip(difficulties)
            .map(|(&q, &d)| (q, d))
            .collect();
        let (text, images) = prompts::render_categorize_batch(&payload, self.config.include_images);
        let parsed = self.call_llm_parsed(text, images, extract::parse_first_json_object);
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for q in questions {
            let category = parsed
                .as_ref()
                .and_then(|v| v.get(&q.id))
                .and_then(Value::as_str)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty());
            match category {
                Some(c) => {
                    out.insert(q.id.clone(), vec![c]);
                }
                None => {
                    logging::warn(&format!(
                        "no category for {:?}; using \"uncategorized\"",
                        q.id
                    ));
                    out.insert(q.id.clone(), vec!["uncategorized".to_string()]);
                }
            }
        }
        out
    }

    /// Category assignment for one adaptive-step question against the
    /// existing category list. New names are admitted verbatim after
    /// whitespace trimming.
    pub fn categorize_single(
        &self,
        question: &Question,
        difficulty: f64,
        existing_categories: &[String],
    ) -> Vec<String> {
        if self.config.policy != JudgePolicy::Llm {
            return passthrough(question);
        }
        let (text, images) = prompts::render_categorize_single(
            question,
            difficulty,
            existing_categories,
            self.config.include_images,
        );
        let categories = self.call_llm_parsed(text, images, |raw| {
            let value = extract::parse_first_json_object(raw)?;
            match value.get("category")? {
                Value::Array(items) => {
                    let names: Vec<String> = items
                        .iter()
                        .filter_map(Value::as_str)
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    if names.is_empty() {
                        None
                    } else {
                        Some(names)
                    }
                }
                Value::String(s) if !s.trim().is_empty() => Some(vec![s.trim().to_string()]),
                _ => None,
            }
        });
        match categories {
            Some(c) => c,
            None => {
                logging::warn(&format!(
                    "unusable category reply for {:?}; using \"uncategorized\"",
                    question.id
                ));
                vec!["uncategorized".to_string()]
            }
        }
    }

    /// Send the prompt and retry until the reply parses, up to the retry
    /// budget; transport errors and malformed replies burn attempts alike.
    fn call_llm_parsed<T>(
        &self,
        text: String,
        images: Vec<String>,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Option<T> {
        let transport = self.transport.as_ref()?;
        let request = ChatRequest {
            model: self.config.model_name.clone().unwrap_or_default(),
            text,
            images,
            temperature: self.config.temperature,
        };
        for attempt in 0..=self.config.max_retries {
            match transport.complete(&request) {
                Ok(raw) => match parse(&raw) {
                    Some(value) => return Some(value),
                    None => {
                        logging::warn(&format!("unparseable categorize reply (attempt {attempt})"))
                    }
                },
                Err(e) => {
                    logging::warn(&format!("categorize call failed (attempt {attempt}): {e}"))
                }
            }
        }
        None
    }
}

fn passthrough(question: &Question) -> Vec<String> {
    match &question.category {
        Some(c) if !c.trim().is_empty() => vec![c.trim().to_string()],
        _ => vec!["uncategorized".to_string()],
    }
}

/// Validate a selection reply: the first JSON object must carry a
/// `question_index` equal to one of the candidate ids.
fn parse_selection_reply(raw: &str, candidates: &CandidateSet) -> Result<(String, String, String)> {
    let value = extract::parse_first_json_object(raw)
        .ok_or_else(|| Error::Judge("no JSON object in reply".into()))?;
    let chosen = match value.get("question_index") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(Error::Judge("reply lacks question_index".into())),
    };
    if !candidates.ids.iter().any(|id| id == &chosen) {
        return Err(Error::Judge(format!(
            "question_index {chosen:?} is not an offered candidate"
        )));
    }
    let summary = value
        .get("summary")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let rationale = value
        .get("think")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok((chosen, summary, rationale))
}
