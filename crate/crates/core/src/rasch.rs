//! One-parameter logistic (Rasch) model fitted by variational inference.
//!
//! Each latent ability and difficulty gets an independent Gaussian factor;
//! the ELBO is maximized with Adam over mini-batches of response entries,
//! gradients flowing through a reparameterized sample of the latents.
//! Posterior means become the fixed difficulties used during selection.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::ResponseMatrix;

/// P(correct) = sigmoid(ability − difficulty), stable for |z| up to ~700
/// and clamped into the open interval (0, 1).
pub fn rasch_prob(ability: f64, difficulty: f64) -> f64 {
    debug_assert!(ability.is_finite() && difficulty.is_finite());
    sigmoid(ability - difficulty).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln sigmoid(z) without overflow at large |z|.
#[inline]
pub(crate) fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// KL(N(mu, sigma²) ‖ N(0, prior_sigma²)), closed form.
pub fn gaussian_kl(mu: f64, sigma: f64, prior_sigma: f64) -> f64 {
    (prior_sigma / sigma).ln() + (sigma * sigma + mu * mu) / (2.0 * prior_sigma * prior_sigma) - 0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Entries per mini-batch; `None` means min(4096, entry count).
    pub batch_size: Option<usize>,
    pub elbo_rel_tol: f64,
    /// Moving-window length (in steps) for the convergence test.
    pub window: usize,
    pub prior_ability_std: f64,
    pub prior_difficulty_std: f64,
    pub init_ability_std: f64,
    /// The difficulty factors start deliberately vague.
    pub init_difficulty_std: f64,
    /// Reparameterization samples per step.
    pub n_mc_samples: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            learning_rate: 0.1,
            max_steps: 3200,
            batch_size: None,
            elbo_rel_tol: 1e-4,
            window: 100,
            prior_ability_std: 1.0,
            prior_difficulty_std: 1e3f64.sqrt(),
            init_ability_std: 1.0,
            init_difficulty_std: 1e3,
            n_mc_samples: 1,
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be ≥ 1".into()));
        }
        if self.elbo_rel_tol <= 0.0 {
            return Err(Error::InvalidConfig("elbo_rel_tol must be > 0".into()));
        }
        if self.window == 0 || self.n_mc_samples == 0 {
            return Err(Error::InvalidConfig(
                "window and n_mc_samples must be ≥ 1".into(),
            ));
        }
        for (name, v) in [
            ("prior_ability_std", self.prior_ability_std),
            ("prior_difficulty_std", self.prior_difficulty_std),
            ("init_ability_std", self.init_ability_std),
            ("init_difficulty_std", self.init_difficulty_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    fn effective_batch(&self, n_entries: usize) -> usize {
        self.batch_size
            .unwrap_or_else(|| n_entries.min(4096))
            .max(1)
    }
}

/// Gaussian variational factors. Stds are stored as logs so positivity
/// holds structurally under unconstrained gradient steps.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub ability_mean: Vec<f64>,
    pub ability_log_std: Vec<f64>,
    pub difficulty_mean: Vec<f64>,
    pub difficulty_log_std: Vec<f64>,
}

impl VariationalParams {
    pub fn init(n_models: usize, n_questions: usize, config: &CalibrationConfig) -> Self {
        VariationalParams {
            ability_mean: vec![0.0; n_models],
            ability_log_std: vec![config.init_ability_std.ln(); n_models],
            difficulty_mean: vec![0.0; n_questions],
            difficulty_log_std: vec![config.init_difficulty_std.ln(); n_questions],
        }
    }

    pub fn ability_std(&self) -> Vec<f64> {
        self.ability_log_std.iter().map(|r| r.exp()).collect()
    }

    pub fn difficulty_std(&self) -> Vec<f64> {
        self.difficulty_log_std.iter().map(|r| r.exp()).collect()
    }

    fn check_shapes(&self, matrix: &ResponseMatrix) -> Result<()> {
        if self.ability_mean.len() != matrix.n_models()
            || self.ability_log_std.len() != matrix.n_models()
            || self.difficulty_mean.len() != matrix.n_questions()
            || self.difficulty_log_std.len() != matrix.n_questions()
        {
            return Err(Error::InvalidConfig(format!(
                "variational shape mismatch: params ({}, {}) vs matrix ({}, {})",
                self.ability_mean.len(),
                self.difficulty_mean.len(),
                matrix.n_models(),
                matrix.n_questions()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PosteriorStat {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct CalibrationDiagnostics {
    /// Questions answered all-correct or all-wrong in the training matrix.
    /// Legal (the prior regularizes them) but worth surfacing.
    pub degenerate_questions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub config: CalibrationConfig,
    pub difficulties: BTreeMap<String, PosteriorStat>,
    pub train_abilities: BTreeMap<String, PosteriorStat>,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub steps_run: usize,
    #[serde(default)]
    pub diagnostics: CalibrationDiagnostics,
}

impl CalibrationResult {
    pub fn difficulty_means(&self) -> BTreeMap<String, f64> {
        self.difficulties
            .iter()
            .map(|(k, v)| (k.clone(), v.mean))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Malformed {
            path: "<calibration>".into(),
            line: 0,
            msg: e.to_string(),
        })
    }
}

struct Latents {
    ability: Vec<f64>,
    difficulty: Vec<f64>,
    ability_noise: Vec<f64>,
    difficulty_noise: Vec<f64>,
}

fn draw_latents(params: &VariationalParams, rng: &mut Pcg64) -> Latents {
    let normal = StandardNormal;
    let ability_noise: Vec<f64> = (0..params.ability_mean.len())
        .map(|_| normal.sample(rng))
        .collect();
    let difficulty_noise: Vec<f64> = (0..params.difficulty_mean.len())
        .map(|_| normal.sample(rng))
        .collect();
    let ability = params
        .ability_mean
        .iter()
        .zip(&params.ability_log_std)
        .zip(&ability_noise)
        .map(|((m, r), e)| m + r.exp() * e)
        .collect();
    let difficulty = params
        .difficulty_mean
        .iter()
        .zip(&params.difficulty_log_std)
        .zip(&difficulty_noise)
        .map(|((m, r), e)| m + r.exp() * e)
        .collect();
    Latents {
        ability,
        difficulty,
        ability_noise,
        difficulty_noise,
    }
}

fn kl_total(params: &VariationalParams, config: &CalibrationConfig) -> f64 {
    let mut kl = 0.0;
    for (m, r) in params.ability_mean.iter().zip(&params.ability_log_std) {
        kl += gaussian_kl(*m, r.exp(), config.prior_ability_std);
    }
    for (m, r) in params
        .difficulty_mean
        .iter()
        .zip(&params.difficulty_log_std)
    {
        kl += gaussian_kl(*m, r.exp(), config.prior_difficulty_std);
    }
    kl
}

/// Expected log-likelihood (reparameterized MC estimate) and closed-form KL
/// over the given entries. `scale` reweights the likelihood term when the
/// entries are a mini-batch of a larger matrix.
fn elbo_parts_over(
    params: &VariationalParams,
    entries: &[(u32, u32, bool)],
    config: &CalibrationConfig,
    noise_seed: u64,
    scale: f64,
) -> (f64, f64) {
    let mut rng = Pcg64::seed_from_u64(noise_seed);
    let mut loglik = 0.0;
    for _ in 0..config.n_mc_samples {
        let latents = draw_latents(params, &mut rng);
        let mut sample_ll = 0.0;
        for &(m, q, correct) in entries {
            let z = latents.ability[m as usize] - latents.difficulty[q as usize];
            sample_ll += if correct {
                log_sigmoid(z)
            } else {
                log_sigmoid(-z)
            };
        }
        loglik += sample_ll;
    }
    loglik *= scale / config.n_mc_samples as f64;
    (loglik, kl_total(params, config))
}

/// Single-sample (or `n_mc_samples`-sample) ELBO estimate over a full
/// matrix: E_q[log p(r|a,D)] minus the closed-form KL of every Gaussian
/// factor against its prior. Deterministic given `noise_seed`.
pub fn elbo(
    params: &VariationalParams,
    matrix: &ResponseMatrix,
    config: &CalibrationConfig,
    noise_seed: u64,
) -> Result<f64> {
    params.check_shapes(matrix)?;
    let (loglik, kl) = elbo_parts_over(params, matrix.entries(), config, noise_seed, 1.0);
    Ok(loglik - kl)
}

/// The two ELBO components (likelihood estimate, KL) separately.
pub fn elbo_parts(
    params: &VariationalParams,
    matrix: &ResponseMatrix,
    config: &CalibrationConfig,
    noise_seed: u64,
) -> Result<(f64, f64)> {
    params.check_shapes(matrix)?;
    Ok(elbo_parts_over(
        params,
        matrix.entries(),
        config,
        noise_seed,
        1.0,
    ))
}

#[derive(Debug, Clone)]
pub struct ElboGradient {
    pub ability_mean: Vec<f64>,
    pub ability_log_std: Vec<f64>,
    pub difficulty_mean: Vec<f64>,
    pub difficulty_log_std: Vec<f64>,
}

impl ElboGradient {
    fn zeros(n_models: usize, n_questions: usize) -> Self {
        ElboGradient {
            ability_mean: vec![0.0; n_models],
            ability_log_std: vec![0.0; n_models],
            difficulty_mean: vec![0.0; n_questions],
            difficulty_log_std: vec![0.0; n_questions],
        }
    }
}

/// ELBO value and its analytic gradient with respect to every variational
/// parameter, using the same noise stream as [`elbo`]. The gradient of the
/// likelihood flows through the reparameterized sample; the KL gradient is
/// exact.
pub fn elbo_grad(
    params: &VariationalParams,
    entries: &[(u32, u32, bool)],
    n_models: usize,
    n_questions: usize,
    config: &CalibrationConfig,
    noise_seed: u64,
    scale: f64,
) -> (f64, ElboGradient) {
    let mut rng = Pcg64::seed_from_u64(noise_seed);
    let mut grad = ElboGradient::zeros(n_models, n_questions);
    let mut loglik = 0.0;
    let weight = scale / config.n_mc_samples as f64;
    for _ in 0..config.n_mc_samples {
        let latents = draw_latents(params, &mut rng);
        for &(m, q, correct) in entries {
            let (m, q) = (m as usize, q as usize);
            let z = latents.ability[m] - latents.difficulty[q];
            loglik += weight
                * if correct {
                    log_sigmoid(z)
                } else {
                    log_sigmoid(-z)
                };
            // d log p / d z = (r − sigmoid(z))
            let g = (correct as u8 as f64 - sigmoid(z)) * weight;
            grad.ability_mean[m] += g;
            grad.ability_log_std[m] +=
                g * params.ability_log_std[m].exp() * latents.ability_noise[m];
            grad.difficulty_mean[q] -= g;
            grad.difficulty_log_std[q] -=
                g * params.difficulty_log_std[q].exp() * latents.difficulty_noise[q];
        }
    }
    // KL gradients: d/dmu = mu/s², d/d log sigma = sigma²/s² − 1
    let mut kl = 0.0;
    let sa2 = config.prior_ability_std * config.prior_ability_std;
    for i in 0..n_models {
        let (mu, sigma) = (params.ability_mean[i], params.ability_log_std[i].exp());
        kl += gaussian_kl(mu, sigma, config.prior_ability_std);
        grad.ability_mean[i] -= mu / sa2;
        grad.ability_log_std[i] -= sigma * sigma / sa2 - 1.0;
    }
    let sd2 = config.prior_difficulty_std * config.prior_difficulty_std;
    for i in 0..n_questions {
        let (mu, sigma) = (
            params.difficulty_mean[i],
            params.difficulty_log_std[i].exp(),
        );
        kl += gaussian_kl(mu, sigma, config.prior_difficulty_std);
        grad.difficulty_mean[i] -= mu / sd2;
        grad.difficulty_log_std[i] -= sigma * sigma / sd2 - 1.0;
    }
    (loglik - kl, grad)
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Ascent step (gradients point uphill).
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let b2t = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] += lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Moving-window convergence: means of the two most recent disjoint windows
/// differ relatively by less than the tolerance.
fn window_converged(trace: &[f64], window: usize, rel_tol: f64) -> bool {
    if trace.len() < 2 * window {
        return false;
    }
    let n = trace.len();
    let recent: f64 = trace[n - window..].iter().sum::<f64>() / window as f64;
    let previous: f64 = trace[n - 2 * window..n - window].iter().sum::<f64>() / window as f64;
    (recent - previous).abs() / previous.abs().max(1e-12) < rel_tol
}

/// Fit the Rasch model to an offline response matrix. Deterministic given
/// `config.seed`; single-threaded.
pub fn fit(matrix: &ResponseMatrix, config: &CalibrationConfig) -> Result<CalibrationResult> {
    config.validate()?;
    if matrix.n_entries() == 0 {
        return Err(Error::InvalidConfig("response matrix is empty".into()));
    }

    let n_models = matrix.n_models();
    let n_questions = matrix.n_questions();
    let n_entries = matrix.n_entries();
    let batch = config.effective_batch(n_entries);
    let full_batch = batch >= n_entries;
    let scale = n_entries as f64 / batch as f64;

    let mut params = VariationalParams::init(n_models, n_questions, config);
    let mut adam_am = Adam::new(n_models);
    let mut adam_ar = Adam::new(n_models);
    let mut adam_dm = Adam::new(n_questions);
    let mut adam_dr = Adam::new(n_questions);

    // Separate streams so batch choice never perturbs the noise sequence.
    let mut batch_rng = Pcg64::seed_from_u64(config.seed ^ 0x9e3779b97f4a7c15);
    let mut noise_seeds = Pcg64::seed_from_u64(config.seed);

    let mut trace = Vec::with_capacity(config.max_steps);
    let mut converged = false;
    let mut scratch: Vec<(u32, u32, bool)> = Vec::with_capacity(if full_batch { 0 } else { batch });

    for step in 0..config.max_steps {
        let noise_seed: u64 = rand::RngExt::random(&mut noise_seeds);
        let entries: &[(u32, u32, bool)] = if full_batch {
            matrix.entries()
        } else {
            scratch.clear();
            for _ in 0..batch {
                let i = rand::RngExt::random_range(&mut batch_rng, 0..n_entries);
                scratch.push(matrix.entries()[i]);
            }
            &scratch
        };
        let (value, grad) = elbo_grad(
            &params,
            entries,
            n_models,
            n_questions,
            config,
            noise_seed,
            if full_batch { 1.0 } else { scale },
        );
        if !value.is_finite() {
            return Err(Error::Numerical {
                step,
                what: "non-finite ELBO".into(),
            });
        }
        adam_am.step(
            &mut params.ability_mean,
            &grad.ability_mean,
            config.learning_rate,
        );
        adam_ar.step(
            &mut params.ability_log_std,
            &grad.ability_log_std,
            config.learning_rate,
        );
        adam_dm.step(
            &mut params.difficulty_mean,
            &grad.difficulty_mean,
            config.learning_rate,
        );
        adam_dr.step(
            &mut params.difficulty_log_std,
            &grad.difficulty_log_std,
            config.learning_rate,
        );
        if params.ability_mean.iter().any(|x| !x.is_finite())
            || params.difficulty_mean.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Numerical {
                step,
                what: "non-finite variational parameter".into(),
            });
        }
        trace.push(value);
        if window_converged(&trace, config.window, config.elbo_rel_tol) {
            converged = true;
            break;
        }
    }

    // Per-question answer totals, for the degeneracy diagnostic.
    let mut n_correct = vec![0usize; n_questions];
    let mut n_total = vec![0usize; n_questions];
    for &(_, q, c) in matrix.entries() {
        n_total[q as usize] += 1;
        if c {
            n_correct[q as usize] += 1;
        }
    }
    let degenerate: Vec<String> = (0..n_questions)
        .filter(|&q| n_correct[q] == 0 || n_correct[q] == n_total[q])
        .map(|q| matrix.question_ids()[q].clone())
        .collect();

    let difficulties = matrix
        .question_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                id.clone(),
                PosteriorStat {
                    mean: params.difficulty_mean[i],
                    std: params.difficulty_log_std[i].exp(),
                },
            )
        })
        .collect();
    let train_abilities = matrix
        .model_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                id.clone(),
                PosteriorStat {
                    mean: params.ability_mean[i],
                    std: params.ability_log_std[i].exp(),
                },
            )
        })
        .collect();

    let steps_run = trace.len();
    Ok(CalibrationResult {
        config: config.clone(),
        difficulties,
        train_abilities,
        elbo_trace: trace,
        converged,
        steps_run,
        diagnostics: CalibrationDiagnostics {
            degenerate_questions: degenerate,
        },
    })
}
