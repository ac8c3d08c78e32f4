//! Synthetic ground-truth worlds: abilities, difficulties, clustered
//! embeddings, and offline response matrices, so every pipeline claim is
//! checkable at desk scale against known truth.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::{Judge, JudgeConfig};
use crate::metrics::{self, BaselineMethod, RankingReport};
use crate::pool::{Question, QuestionPool, ResponseMatrix};
use crate::rasch::{self, rasch_prob, CalibrationConfig, CalibrationResult};
use crate::selection::SelectionConfig;
use crate::session::{
    self, derive_seed, stable_hash, RaschSimRespondent, Respondent, SessionConfig,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub n_train_models: usize,
    pub n_test_models: usize,
    pub n_questions: usize,
    /// (mean, std) of the latent ability distribution.
    pub ability_dist: (f64, f64),
    /// (mean, std) of the latent difficulty distribution.
    pub difficulty_dist: (f64, f64),
    pub embedding_dim: usize,
    pub n_clusters_true: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            n_train_models: 60,
            n_test_models: 17,
            n_questions: 1000,
            ability_dist: (0.0, 1.0),
            difficulty_dist: (0.0, 2.0),
            embedding_dim: 16,
            n_clusters_true: 10,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_models == 0
            || self.n_test_models == 0
            || self.n_questions == 0
            || self.embedding_dim == 0
            || self.n_clusters_true == 0
        {
            return Err(Error::InvalidConfig("world counts must be ≥ 1".into()));
        }
        if self.ability_dist.1 < 0.0 || self.difficulty_dist.1 < 0.0 {
            return Err(Error::InvalidConfig("distribution stds must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldTruth {
    /// Every model's true ability, train and test together.
    pub abilities: BTreeMap<String, f64>,
    pub difficulties: BTreeMap<String, f64>,
    pub test_models: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub pool: QuestionPool,
    pub train_matrix: ResponseMatrix,
    pub truth: WorldTruth,
}

impl World {
    /// The deterministic simulated respondent for one test model. Answers
    /// depend only on (world seed, model id, question id), so replays and
    /// repeats see identical behavior.
    pub fn respondent(&self, model_id: &str) -> Result<RaschSimRespondent> {
        let ability = *self
            .truth
            .abilities
            .get(model_id)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model {model_id:?}")))?;
        Ok(RaschSimRespondent::new(
            model_id,
            ability,
            stable_hash(self.spec.seed, model_id.as_bytes()),
            self.truth.difficulties.clone(),
        ))
    }

    /// Expected full-pool accuracy per test model (the analytic reference).
    pub fn analytic_reference(&self) -> BTreeMap<String, f64> {
        self.truth
            .test_models
            .iter()
            .map(|m| {
                let a = self.truth.abilities[m];
                let mean = self
                    .truth
                    .difficulties
                    .values()
                    .map(|&d| rasch_prob(a, d))
                    .sum::<f64>()
                    / self.truth.difficulties.len() as f64;
                (m.clone(), mean)
            })
            .collect()
    }

    /// Simulated full-pool accuracy per test model (the empirical
    /// reference), using the same per-question draws sessions see.
    pub fn empirical_reference(&self) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for m in &self.truth.test_models {
            let mut respondent = self.respondent(m)?;
            let mut correct = 0usize;
            for q in self.pool.iter() {
                if respondent.answer(q)? {
                    correct += 1;
                }
            }
            out.insert(m.clone(), correct as f64 / self.pool.len() as f64);
        }
        Ok(out)
    }
}

/// Sample a complete world. Deterministic given `spec.seed`.
pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    let normal = StandardNormal;

    let mut abilities = BTreeMap::new();
    let mut train_ids = Vec::with_capacity(spec.n_train_models);
    let mut test_ids = Vec::with_capacity(spec.n_test_models);
    for i in 0..spec.n_train_models {
        let id = format!("train_{i:03}");
        let e: f64 = normal.sample(&mut rng);
        abilities.insert(id.clone(), spec.ability_dist.0 + spec.ability_dist.1 * e);
        train_ids.push(id);
    }
    for i in 0..spec.n_test_models {
        let id = format!("test_{i:03}");
        let e: f64 = normal.sample(&mut rng);
        abilities.insert(id.clone(), spec.ability_dist.0 + spec.ability_dist.1 * e);
        test_ids.push(id);
    }

    // blob centers on the unit sphere; questions draw a blob, jitter, and
    // land back on the sphere via normalization
    let mut centers = Vec::with_capacity(spec.n_clusters_true);
    for _ in 0..spec.n_clusters_true {
        let mut c: Vec<f64> = (0..spec.embedding_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        c.iter_mut().for_each(|x| *x /= norm);
        centers.push(c);
    }

    let mut questions = Vec::with_capacity(spec.n_questions);
    let mut difficulties = BTreeMap::new();
    for i in 0..spec.n_questions {
        let id = format!("q{i:05}");
        let e: f64 = normal.sample(&mut rng);
        let d = spec.difficulty_dist.0 + spec.difficulty_dist.1 * e;
        difficulties.insert(id.clone(), d);
        let blob = rng.random_range(0..spec.n_clusters_true);
        let mut v: Vec<f64> = centers[blob]
            .iter()
            .map(|c| {
                let jitter: f64 = normal.sample(&mut rng);
                c + 0.25 * jitter
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        questions.push(Question {
            id: id.clone(),
            text: format!("synthetic question {i} (blob {blob})"),
            image_ref: None,
            options: None,
            answer_key: None,
            category: Some(format!("blob_{blob}")),
            embedding: Some(v),
            difficulty: None,
        });
    }
    let pool = QuestionPool::from_questions(questions)?;

    let mut records = Vec::with_capacity(spec.n_train_models * spec.n_questions);
    for train in &train_ids {
        let a = abilities[train];
        for q in pool.iter() {
            let d = difficulties[&q.id];
            let correct = rng.random::<f64>() < rasch_prob(a, d);
            records.push((train.clone(), q.id.clone(), correct));
        }
    }
    let train_matrix = ResponseMatrix::from_records(&records)?;

    Ok(World {
        spec: spec.clone(),
        pool,
        train_matrix,
        truth: WorldTruth {
            abilities,
            difficulties,
            test_models: test_ids,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMethod {
    /// The adaptive interview engine.
    Adaptive,
    Baseline(BaselineMethod),
}

impl std::fmt::Display for ExperimentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentMethod::Adaptive => write!(f, "adaptive"),
            ExperimentMethod::Baseline(b) => write!(f, "{b}"),
        }
    }
}

impl std::str::FromStr for ExperimentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(ExperimentMethod::Adaptive);
        }
        Ok(ExperimentMethod::Baseline(s.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Noise-free expected accuracy; tighter and cheaper.
    Analytic,
    /// Full-pool simulation with the session's own respondent draws.
    Empirical,
}

/// Calibrate on the world's training matrix, then evaluate every test
/// respondent under the method and aggregate over `n_repeats` seeds.
pub fn run_experiment(
    world: &World,
    method: ExperimentMethod,
    delta: f64,
    n_repeats: usize,
    judge_config: &JudgeConfig,
    reference: ReferenceMode,
) -> Result<RankingReport> {
    let calibration = rasch::fit(
        &world.train_matrix,
        &CalibrationConfig {
            seed: world.spec.seed,
            ..CalibrationConfig::default()
        },
    )?;
    run_experiment_with_calibration(
        world,
        &calibration,
        method,
        delta,
        n_repeats,
        judge_config,
        reference,
    )
}

/// As [`run_experiment`] with calibration supplied, so several methods can
/// share one fit.
pub fn run_experiment_with_calibration(
    world: &World,
    calibration: &CalibrationResult,
    method: ExperimentMethod,
    delta: f64,
    n_repeats: usize,
    judge_config: &JudgeConfig,
    reference: ReferenceMode,
) -> Result<RankingReport> {
    if n_repeats == 0 {
        return Err(Error::InvalidConfig("n_repeats must be ≥ 1".into()));
    }
    let reference_scores = match reference {
        ReferenceMode::Analytic => world.analytic_reference(),
        ReferenceMode::Empirical => world.empirical_reference()?,
    };
    let mut calibrated_pool = world.pool.clone();
    calibrated_pool.apply_difficulties(&calibration.difficulty_means());

    let mut accuracies = Vec::with_capacity(n_repeats);
    let mut first_scores: Option<BTreeMap<String, f64>> = None;
    for repeat in 0..n_repeats {
        let repeat_seed = derive_seed(world.spec.seed, "repeat", repeat as u64);
        let scores = run_once(
            world,
            &calibrated_pool,
            calibration,
            method,
            delta,
            repeat_seed,
            judge_config,
        )?;
        accuracies.push(metrics::ranking_accuracy(&scores, &reference_scores)?);
        if first_scores.is_none() {
            first_scores = Some(scores);
        }
    }
    let repeats = metrics::aggregate_repeats(&accuracies)?;
    Ok(RankingReport {
        run_scores: first_scores.expect("n_repeats ≥ 1"),
        reference_scores,
        ranking_accuracy_pct: repeats.mean,
        n_models: world.truth.test_models.len(),
        repeats: Some(repeats),
    })
}

fn run_once(
    world: &World,
    calibrated_pool: &QuestionPool,
    calibration: &CalibrationResult,
    method: ExperimentMethod,
    delta: f64,
    repeat_seed: u64,
    judge_config: &JudgeConfig,
) -> Result<BTreeMap<String, f64>> {
    let budget = ((delta * world.pool.len() as f64).floor() as usize).min(world.pool.len());
    match method {
        ExperimentMethod::Adaptive => {
            let config = SessionConfig {
                compression_ratio: delta,
                seed: repeat_seed,
                selection: SelectionConfig::default(),
                judge: judge_config.clone(),
                ..SessionConfig::default()
            };
            let judge = Judge::from_config(judge_config.clone())?;
            let initial_batch = crate::selection::initial_batch(
                calibrated_pool,
                &config.selection,
                derive_seed(config.seed, "init", 0),
            )?;
            let mut scores = BTreeMap::new();
            for model in &world.truth.test_models {
                let mut respondent = world.respondent(model)?;
                let state = session::run_with_initial_batch(
                    calibrated_pool,
                    &mut respondent,
                    &judge,
                    &config,
                    initial_batch.clone(),
                )
                .map_err(|f| f.error)?;
                scores.insert(model.clone(), state.ability);
            }
            Ok(scores)
        }
        ExperimentMethod::Baseline(baseline) => {
            let mut scores = BTreeMap::new();
            match baseline {
                BaselineMethod::IrtOptimal => {
                    // adaptive per model; scored by the ability estimate
                    for model in &world.truth.test_models {
                        let mut respondent = world.respondent(model)?;
                        let subset = metrics::baseline_select(
                            calibrated_pool,
                            Some(calibration),
                            baseline,
                            budget,
                            repeat_seed,
                            Some(&mut respondent),
                        )?;
                        let mut replay = world.respondent(model)?;
                        let estimate =
                            metrics::subset_ability(calibrated_pool, &subset, &mut replay)?;
                        scores.insert(model.clone(), estimate.value);
                    }
                }
                _ => {
                    let subset = metrics::baseline_select(
                        calibrated_pool,
                        Some(calibration),
                        baseline,
                        budget,
                        repeat_seed,
                        None,
                    )?;
                    for model in &world.truth.test_models {
                        scores.insert(model.clone(), subset_accuracy(world, model, &subset)?);
                    }
                }
            }
            Ok(scores)
        }
    }
}

fn subset_accuracy(world: &World, model: &str, subset: &[String]) -> Result<f64> {
    let mut respondent = world.respondent(model)?;
    let mut correct = 0usize;
    for id in subset {
        let q = world.pool.get(id).ok_or_else(|| Error::UnknownQuestion {
            id: id.clone(),
            line: 0,
        })?;
        if respondent.answer(q)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / subset.len().max(1) as f64)
}
