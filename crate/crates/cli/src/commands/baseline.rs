use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use proctor_core::metrics::{self, BaselineMethod};
use proctor_core::pool::{accuracy_per_model, load_pool, load_responses};
use proctor_core::rasch::CalibrationResult;
use proctor_core::session::{derive_seed, MatrixRespondent};
use proctor_core::Error;

use crate::manifest::{argv_snapshot, file_hash, run_id, RunManifest};
use crate::report::{rank_scores, RunReport};

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub questions: PathBuf,
    /// Required by the cluster method
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Required by the irt_optimal method
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Offline responses: the respondent for irt_optimal, the subset
    /// scores, and the full-benchmark reference ranking
    #[arg(long)]
    pub responses: PathBuf,
    /// random | stratified | cluster | irt_optimal
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

pub fn run(args: BaselineArgs) -> anyhow::Result<()> {
    let method: BaselineMethod = args.method.parse()?;
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(
            Error::InvalidConfig(format!("ratio must be in (0, 1], got {}", args.ratio)).into(),
        );
    }
    if args.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be ≥ 1".into()).into());
    }

    let mut pool = load_pool(&args.questions, args.embeddings.as_deref())?;
    let calibration = match &args.calibration {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Some(CalibrationResult::from_json(&text)?)
        }
        None => None,
    };
    if let Some(c) = &calibration {
        pool.apply_difficulties(&c.difficulty_means());
    }
    let matrix = load_responses(&args.responses, &pool)?;
    let reference = accuracy_per_model(&matrix);
    if reference.len() < 2 {
        return Err(Error::InvalidConfig("need ≥ 2 models in the responses".into()).into());
    }
    let budget = ((args.ratio * pool.len() as f64).floor() as usize).min(pool.len());
    if budget == 0 {
        return Err(Error::InvalidConfig("budget rounds to zero questions".into()).into());
    }

    let mut accuracies = Vec::with_capacity(args.repeats);
    let mut distances = Vec::new();
    let mut first_scores: Option<BTreeMap<String, f64>> = None;
    for repeat in 0..args.repeats {
        let repeat_seed = derive_seed(args.seed, "repeat", repeat as u64);
        let mut scores: BTreeMap<String, f64> = BTreeMap::new();
        match method {
            BaselineMethod::IrtOptimal => {
                // adaptive per model; scored by the ability estimate
                for model in matrix.model_ids() {
                    let mut respondent = MatrixRespondent::new(model, &matrix);
                    let subset = metrics::baseline_select(
                        &pool,
                        calibration.as_ref(),
                        method,
                        budget,
                        repeat_seed,
                        Some(&mut respondent),
                    )?;
                    let mut replay = MatrixRespondent::new(model, &matrix);
                    let estimate = metrics::subset_ability(&pool, &subset, &mut replay)?;
                    scores.insert(model.clone(), estimate.value);
                    if args.embeddings.is_some() && subset.len() >= 2 {
                        distances.push(metrics::mean_semantic_distance(&subset, &pool)?);
                    }
                }
            }
            _ => {
                let subset = metrics::baseline_select(
                    &pool,
                    calibration.as_ref(),
                    method,
                    budget,
                    repeat_seed,
                    None,
                )?;
                for model in matrix.model_ids() {
                    if let Some(score) = subset_score(&matrix, model, &subset) {
                        scores.insert(model.clone(), score);
                    }
                }
                if args.embeddings.is_some() && subset.len() >= 2 {
                    distances.push(metrics::mean_semantic_distance(&subset, &pool)?);
                }
            }
        }
        let shared: BTreeMap<String, f64> = reference
            .iter()
            .filter(|(m, _)| scores.contains_key(*m))
            .map(|(m, &v)| (m.clone(), v))
            .collect();
        if shared.len() < 2 {
            return Err(Error::InvalidConfig(
                "fewer than 2 models answered any selected question".into(),
            )
            .into());
        }
        accuracies.push(metrics::ranking_accuracy(&scores, &shared)?);
        if first_scores.is_none() {
            first_scores = Some(scores);
        }
    }

    let repeats = metrics::aggregate_repeats(&accuracies)?;
    let pool_hash = file_hash(&args.questions)?;
    let responses_hash = file_hash(&args.responses)?;
    let identity = serde_json::json!({
        "method": args.method,
        "ratio": args.ratio,
        "repeats": args.repeats,
        "seed": args.seed,
    });
    let snapshot = serde_json::json!({
        "argv": argv_snapshot(),
        "method": args.method,
        "ratio": args.ratio,
        "repeats": args.repeats,
        "seed": args.seed,
    });
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let report = RunReport {
        run_id: run_id(&identity, &[&pool_hash, &responses_hash]),
        method: method.to_string(),
        ratio: args.ratio,
        per_model: rank_scores(first_scores.as_ref().expect("repeats ≥ 1")),
        ranking_accuracy_pct: Some(repeats.mean),
        repeats: Some(repeats),
        mean_semantic_distance: if distances.is_empty() {
            None
        } else {
            Some(distances.iter().sum::<f64>() / distances.len() as f64)
        },
        threshold: args.threshold,
        meets_threshold: args.threshold.map(|t| repeats.mean >= t),
    };
    report.write(&args.out)?;
    RunManifest::new("baseline", snapshot, pool_hash, None).finish_and_write(&args.out)?;
    println!(
        "{method} @ δ={}: ranking accuracy {:.2}% ± {:.2} (std, {} repeats)",
        args.ratio, repeats.mean, repeats.std, args.repeats
    );
    Ok(())
}

/// A model's accuracy over its answered subset questions; None when it
/// answered none of them.
fn subset_score(
    matrix: &proctor_core::pool::ResponseMatrix,
    model: &str,
    subset: &[String],
) -> Option<f64> {
    let responses = matrix.responses_of(model);
    let on_subset: Vec<bool> = responses
        .iter()
        .filter(|(q, _)| subset.iter().any(|s| s == q))
        .map(|&(_, c)| c)
        .collect();
    if on_subset.is_empty() {
        None
    } else {
        Some(on_subset.iter().filter(|&&c| c).count() as f64 / on_subset.len() as f64)
    }
}
