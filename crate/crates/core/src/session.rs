//! One model's interview: the shared initial batch, then the iterative
//! select → answer → update loop under the δ·|Q| budget, with a complete
//! per-step audit trail.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::ability::{self, AbilityEstimate};
use crate::error::{Error, Result};
use crate::judge::{Judge, JudgeConfig};
use crate::memory::MemoryTable;
use crate::pool::{Question, QuestionPool, ResponseMatrix};
use crate::rasch::rasch_prob;
use crate::selection::{self, SelectionConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Fraction of the benchmark a session may ask (budget = ⌊δ·|Q|⌋).
    pub compression_ratio: f64,
    pub seed: u64,
    pub selection: SelectionConfig,
    pub judge: JudgeConfig,
    pub ability_bounds: (f64, f64),
    pub ability_tol: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            compression_ratio: 0.05,
            seed: 0,
            selection: SelectionConfig::default(),
            judge: JudgeConfig::default(),
            ability_bounds: ability::DEFAULT_BOUNDS,
            ability_tol: ability::DEFAULT_TOL,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if !(self.compression_ratio > 0.0 && self.compression_ratio <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "compression ratio must be in (0, 1], got {}",
                self.compression_ratio
            )));
        }
        self.selection.validate()?;
        self.judge.validate()?;
        let budget = self.budget(pool_size);
        if budget < self.selection.init_k {
            return Err(Error::InvalidConfig(format!(
                "budget {budget} is smaller than the initial batch ({})",
                self.selection.init_k
            )));
        }
        Ok(())
    }

    pub fn budget(&self, pool_size: usize) -> usize {
        ((self.compression_ratio * pool_size as f64).floor() as usize).min(pool_size)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub candidate_ids: Vec<String>,
    pub chosen_id: String,
    pub correct: bool,
    pub ability_after: f64,
    pub band_relaxed: bool,
    pub fallback_used: bool,
    pub judge_summary: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub model_id: String,
    /// Asked questions in order with the graded response.
    pub asked: Vec<(String, bool)>,
    pub ability: f64,
    pub ability_estimate: AbilityEstimate,
    pub memory: MemoryTable,
    pub steps: Vec<StepRecord>,
    /// The seeded batch every session in the run starts from.
    pub initial_batch: Vec<String>,
    /// Set when the session had a clamped initial ability (all-correct or
    /// all-wrong initial batch).
    pub initial_ability_clamped: bool,
}

impl SessionState {
    pub fn asked_ids(&self) -> Vec<String> {
        self.asked.iter().map(|(id, _)| id.clone()).collect()
    }
}

/// The evaluated model. One session calls `answer` strictly sequentially.
pub trait Respondent {
    fn model_id(&self) -> &str;
    fn answer(&mut self, question: &Question) -> Result<bool>;
}

/// Replays an offline response matrix; asking a question the matrix never
/// recorded is an error.
pub struct MatrixRespondent<'m> {
    model_id: String,
    matrix: &'m ResponseMatrix,
}

impl<'m> MatrixRespondent<'m> {
    pub fn new(model_id: &str, matrix: &'m ResponseMatrix) -> Self {
        MatrixRespondent {
            model_id: model_id.to_string(),
            matrix,
        }
    }
}

impl Respondent for MatrixRespondent<'_> {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn answer(&mut self, question: &Question) -> Result<bool> {
        self.matrix
            .get(&self.model_id, &question.id)
            .ok_or_else(|| Error::Respondent {
                model: self.model_id.clone(),
                question: question.id.clone(),
                why: "no recorded response in the matrix".into(),
            })
    }
}

/// Synthetic respondent: answers correctly with probability
/// rasch_prob(true_ability, d_q), the per-question randomness derived from
/// hash(seed, question id) so replays are stable in any ask order.
pub struct RaschSimRespondent {
    model_id: String,
    pub true_ability: f64,
    seed: u64,
    difficulties: BTreeMap<String, f64>,
}

impl RaschSimRespondent {
    pub fn new(
        model_id: &str,
        true_ability: f64,
        seed: u64,
        difficulties: BTreeMap<String, f64>,
    ) -> Self {
        RaschSimRespondent {
            model_id: model_id.to_string(),
            true_ability,
            seed,
            difficulties,
        }
    }

    /// Expected accuracy over the whole pool, the analytic reference score.
    pub fn expected_accuracy(&self) -> f64 {
        let n = self.difficulties.len() as f64;
        self.difficulties
            .values()
            .map(|&d| rasch_prob(self.true_ability, d))
            .sum::<f64>()
            / n
    }

    /// The deterministic uniform draw for one question.
    fn roll(&self, question_id: &str) -> f64 {
        let mut rng = Pcg64::seed_from_u64(stable_hash(self.seed, question_id.as_bytes()));
        rng.random()
    }
}

impl Respondent for RaschSimRespondent {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn answer(&mut self, question: &Question) -> Result<bool> {
        let d = self
            .difficulties
            .get(&question.id)
            .copied()
            .ok_or_else(|| Error::Respondent {
                model: self.model_id.clone(),
                question: question.id.clone(),
                why: "no true difficulty for this question".into(),
            })?;
        Ok(self.roll(&question.id) < rasch_prob(self.true_ability, d))
    }
}

/// FNV-1a over the question id, mixed with the seed. Stable across runs
/// and platforms, so replayed sessions see identical answers.
pub fn stable_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed.rotate_left(17);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Asks a chat endpoint and grades by case-insensitive exact match of the
/// option label in the reply's first token group.
pub struct ChatRespondent {
    model_id: String,
    transport: Box<dyn crate::judge::transport::ChatTransport>,
    model_name: String,
    temperature: f64,
}

impl ChatRespondent {
    pub fn new(
        model_id: &str,
        endpoint: &str,
        model_name: &str,
        api_key_env: &str,
        timeout_s: f64,
    ) -> Self {
        ChatRespondent {
            model_id: model_id.to_string(),
            transport: Box::new(crate::judge::transport::HttpTransport::new(
                endpoint,
                api_key_env,
                timeout_s,
            )),
            model_name: model_name.to_string(),
            temperature: 0.0,
        }
    }

    pub fn with_transport(
        model_id: &str,
        model_name: &str,
        transport: Box<dyn crate::judge::transport::ChatTransport>,
    ) -> Self {
        ChatRespondent {
            model_id: model_id.to_string(),
            transport,
            model_name: model_name.to_string(),
            temperature: 0.0,
        }
    }

    fn prompt_for(question: &Question) -> Result<String> {
        let options = question
            .options
            .as_ref()
            .filter(|o| !o.is_empty())
            .ok_or_else(|| Error::Respondent {
                model: "<chat>".into(),
                question: question.id.clone(),
                why: "chat grading requires options".into(),
            })?;
        let mut prompt = format!(
            "Answer the following multiple-choice question with the option label only.\n\n{}\n",
            question.text
        );
        for o in options {
            prompt.push_str(&format!("{}. {}\n", o.label, o.text));
        }
        prompt.push_str("\nAnswer:");
        Ok(prompt)
    }
}

/// First token group of a reply: leading alphanumerics after trimming
/// whitespace and punctuation.
pub fn first_token_group(reply: &str) -> &str {
    let trimmed = reply.trim_start_matches(|c: char| !c.is_alphanumeric());
    let end = trimmed
        .char_indices()
        .find(|(_, c)| !c.is_alphanumeric())
        .map(|(i, _)| i)
        .unwrap_or(trimmed.len());
    &trimmed[..end]
}

impl Respondent for ChatRespondent {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn answer(&mut self, question: &Question) -> Result<bool> {
        let key = question
            .answer_key
            .as_ref()
            .ok_or_else(|| Error::Respondent {
                model: self.model_id.clone(),
                question: question.id.clone(),
                why: "chat grading requires an answer key".into(),
            })?;
        let request = crate::judge::transport::ChatRequest {
            model: self.model_name.clone(),
            text: Self::prompt_for(question)?,
            images: question.image_ref.iter().cloned().collect(),
            temperature: self.temperature,
        };
        let reply = self
            .transport
            .complete(&request)
            .map_err(|e| Error::Respondent {
                model: self.model_id.clone(),
                question: question.id.clone(),
                why: e.to_string(),
            })?;
        Ok(first_token_group(&reply).eq_ignore_ascii_case(key))
    }
}

/// Domain-separated seed stream so the initial batch, candidate draws, and
/// judge draws never alias.
pub fn derive_seed(base: u64, domain: &str, index: u64) -> u64 {
    stable_hash(base ^ index.rotate_left(31), domain.as_bytes())
}

/// A session failure carrying everything asked so far, so callers can
/// persist the partial audit log.
#[derive(Debug)]
pub struct SessionFailure {
    pub error: Error,
    pub partial: SessionState,
}

fn estimate(
    asked: &[(String, bool)],
    pool: &QuestionPool,
    config: &SessionConfig,
) -> Result<AbilityEstimate> {
    let responses: Vec<(f64, bool)> = asked
        .iter()
        .map(|(id, correct)| pool.difficulty(id).map(|d| (d, *correct)))
        .collect::<Result<_>>()?;
    Ok(ability::estimate_ability(
        &responses,
        config.ability_bounds,
        config.ability_tol,
    ))
}

/// Run Algorithm-style adaptive evaluation for one model. The initial
/// batch is seeded from the run seed only, so every model in a run shares
/// it. Deterministic given the config seed and deterministic collaborators.
pub fn run_session(
    pool: &QuestionPool,
    respondent: &mut dyn Respondent,
    judge: &Judge,
    config: &SessionConfig,
) -> std::result::Result<SessionState, Box<SessionFailure>> {
    let initial_batch =
        selection::initial_batch(pool, &config.selection, derive_seed(config.seed, "init", 0))
            .map_err(|error| failure(error, respondent.model_id()))?;
    run_with_initial_batch(pool, respondent, judge, config, initial_batch)
}

/// Same loop with a precomputed shared initial batch (what multi-model
/// runs use so k-means happens once).
pub fn run_with_initial_batch(
    pool: &QuestionPool,
    respondent: &mut dyn Respondent,
    judge: &Judge,
    config: &SessionConfig,
    initial_batch: Vec<String>,
) -> std::result::Result<SessionState, Box<SessionFailure>> {
    let model_id = respondent.model_id().to_string();
    config
        .validate(pool.len())
        .map_err(|error| failure(error, &model_id))?;
    let budget = config.budget(pool.len());
    let model_seed = stable_hash(config.seed, model_id.as_bytes());

    let mut state = SessionState {
        model_id: model_id.clone(),
        asked: Vec::with_capacity(budget),
        ability: 0.0,
        ability_estimate: ability::estimate_ability_default(&[]),
        memory: MemoryTable::new(),
        steps: Vec::new(),
        initial_batch: initial_batch.clone(),
        initial_ability_clamped: false,
    };

    // initial batch: ask, estimate, categorize, seed the memory
    for id in &initial_batch {
        let question = match pool.get(id) {
            Some(q) => q,
            None => {
                return Err(failure_with(
                    Error::UnknownQuestion {
                        id: id.clone(),
                        line: 0,
                    },
                    state,
                ))
            }
        };
        match respondent.answer(question) {
            Ok(correct) => state.asked.push((id.clone(), correct)),
            Err(error) => {
                return Err(Box::new(SessionFailure {
                    error,
                    partial: state,
                }))
            }
        }
    }
    match estimate(&state.asked, pool, config) {
        Ok(est) => {
            state.ability = est.value;
            state.ability_estimate = est;
            state.initial_ability_clamped = est.clamped;
            if est.clamped {
                crate::logging::warn(&format!(
                    "{model_id}: initial batch answered uniformly; ability clamped at {}",
                    est.value
                ));
            }
        }
        Err(error) => {
            return Err(Box::new(SessionFailure {
                error,
                partial: state,
            }))
        }
    }
    let batch_questions: Vec<&Question> = initial_batch
        .iter()
        .map(|id| pool.get(id).expect("pool id"))
        .collect();
    let batch_difficulties: Vec<f64> = initial_batch
        .iter()
        .map(|id| pool.difficulty(id))
        .collect::<Result<_>>()
        .map_err(|error| failure_with(error, state.clone()))?;
    let categories = judge.categorize_batch(&batch_questions, &batch_difficulties);
    for (i, id) in initial_batch.iter().enumerate() {
        let cats = categories.get(id).cloned().unwrap_or_default();
        let correct = state.asked[i].1;
        state
            .memory
            .update(&cats, batch_difficulties[i], correct)
            .map_err(|error| failure_with(error, state.clone()))?;
    }

    // adaptive loop
    let adaptive_steps = budget - initial_batch.len().min(budget);
    for t in 1..=adaptive_steps {
        let asked_ids: Vec<String> = state.asked.iter().map(|(id, _)| id.clone()).collect();
        let candidates = selection::next_candidates(
            pool,
            &asked_ids,
            state.ability,
            &config.selection,
            derive_seed(model_seed, "candidates", t as u64),
        )
        .map_err(|error| failure_with(error, state.clone()))?;
        let payload: Vec<&Question> = candidates
            .ids
            .iter()
            .map(|id| pool.get(id).expect("candidates come from the pool"))
            .collect();
        let memory_view = if judge.config().include_memory {
            state.memory.render_markdown()
        } else {
            MemoryTable::new().render_markdown()
        };
        let decision = judge
            .select_question(
                &memory_view,
                state.ability,
                &candidates,
                &payload,
                derive_seed(model_seed, "judge", t as u64),
            )
            .map_err(|error| failure_with(error, state.clone()))?;
        let question = pool
            .get(&decision.chosen_id)
            .expect("chosen from candidates");
        let correct = match respondent.answer(question) {
            Ok(c) => c,
            Err(error) => {
                return Err(Box::new(SessionFailure {
                    error,
                    partial: state,
                }))
            }
        };
        state.asked.push((decision.chosen_id.clone(), correct));
        let est = estimate(&state.asked, pool, config)
            .map_err(|error| failure_with(error, state.clone()))?;
        state.ability = est.value;
        state.ability_estimate = est;
        let difficulty = pool
            .difficulty(&decision.chosen_id)
            .map_err(|error| failure_with(error, state.clone()))?;
        let existing: Vec<String> = state.memory.categories().map(str::to_string).collect();
        let cats = judge.categorize_single(question, difficulty, &existing);
        state
            .memory
            .update(&cats, difficulty, correct)
            .map_err(|error| failure_with(error, state.clone()))?;
        state.steps.push(StepRecord {
            step: t,
            candidate_ids: candidates.ids.clone(),
            chosen_id: decision.chosen_id,
            correct,
            ability_after: state.ability,
            band_relaxed: candidates.band_relaxed,
            fallback_used: decision.fallback_used,
            judge_summary: decision.summary,
        });
    }

    debug_assert_eq!(state.asked.len(), budget);
    let mut distinct: Vec<&str> = state.asked.iter().map(|(id, _)| id.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    assert_eq!(distinct.len(), state.asked.len(), "a question repeated");
    Ok(state)
}

/// Ask exactly the given questions in order, updating ability and memory
/// as run_session would, with no selection. Enables fixed-question replay
/// and audit reproduction.
pub fn replay_session(
    pool: &QuestionPool,
    respondent: &mut dyn Respondent,
    judge: &Judge,
    config: &SessionConfig,
    question_ids: &[String],
) -> std::result::Result<SessionState, Box<SessionFailure>> {
    let model_id = respondent.model_id().to_string();
    let mut state = SessionState {
        model_id: model_id.clone(),
        asked: Vec::with_capacity(question_ids.len()),
        ability: 0.0,
        ability_estimate: ability::estimate_ability_default(&[]),
        memory: MemoryTable::new(),
        steps: Vec::new(),
        initial_batch: Vec::new(),
        initial_ability_clamped: false,
    };
    let mut seen = std::collections::HashSet::new();
    for id in question_ids {
        if !seen.insert(id.clone()) {
            return Err(failure_with(
                Error::InvalidConfig(format!("replay list repeats {id:?}")),
                state,
            ));
        }
        let question = match pool.get(id) {
            Some(q) => q,
            None => {
                return Err(failure_with(
                    Error::UnknownQuestion {
                        id: id.clone(),
                        line: 0,
                    },
                    state,
                ))
            }
        };
        let correct = match respondent.answer(question) {
            Ok(c) => c,
            Err(error) => {
                return Err(Box::new(SessionFailure {
                    error,
                    partial: state,
                }))
            }
        };
        state.asked.push((id.clone(), correct));
        let est = estimate(&state.asked, pool, config)
            .map_err(|error| failure_with(error, state.clone()))?;
        state.ability = est.value;
        state.ability_estimate = est;
        let difficulty = pool
            .difficulty(id)
            .map_err(|error| failure_with(error, state.clone()))?;
        let existing: Vec<String> = state.memory.categories().map(str::to_string).collect();
        let cats = judge.categorize_single(question, difficulty, &existing);
        state
            .memory
            .update(&cats, difficulty, correct)
            .map_err(|error| failure_with(error, state.clone()))?;
    }
    Ok(state)
}

fn failure(error: Error, model_id: &str) -> Box<SessionFailure> {
    Box::new(SessionFailure {
        error,
        partial: SessionState {
            model_id: model_id.to_string(),
            asked: Vec::new(),
            ability: 0.0,
            ability_estimate: ability::estimate_ability_default(&[]),
            memory: MemoryTable::new(),
            steps: Vec::new(),
            initial_batch: Vec::new(),
            initial_ability_clamped: false,
        },
    })
}

fn failure_with(error: Error, partial: SessionState) -> Box<SessionFailure> {
    Box::new(SessionFailure { error, partial })
}
