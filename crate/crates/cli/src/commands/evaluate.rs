use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use proctor_core::judge::{Judge, JudgeConfig, JudgePolicy};
use proctor_core::metrics;
use proctor_core::pool::{accuracy_per_model, load_pool, load_responses};
use proctor_core::rasch::CalibrationResult;
use proctor_core::selection::{self, CandidateStrategy, SelectionConfig};
use proctor_core::session::{
    stable_hash, ChatRespondent, MatrixRespondent, RaschSimRespondent, SessionConfig,
};
use proctor_core::sim::WorldTruth;
use proctor_core::Error;

use crate::manifest::{argv_snapshot, file_hash, run_id, RunManifest};
use crate::report::{rank_scores, RunReport};
use crate::sessions::{run_all, write_session_log};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// calibration.json produced by `proctor calibrate`
    #[arg(long)]
    pub calibration: PathBuf,
    /// Compression ratio δ in (0, 1]
    #[arg(long)]
    pub ratio: f64,
    /// Judge policy: llm | farthest | difficulty_weighted | random_among
    #[arg(long, default_value = "farthest")]
    pub policy: String,
    /// Respondent: `matrix:<responses.csv>` | `rasch:<truth.json>` | `chat:<endpoint>`
    #[arg(long)]
    pub respondent: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// responses.csv with full-benchmark results, for ranking accuracy
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Candidate strategy: semantic_farthest | optimal_difficulty | random
    #[arg(long, default_value = "semantic_farthest")]
    pub strategy: String,
    #[arg(long, default_value_t = 0.2)]
    pub p_min: f64,
    #[arg(long, default_value_t = 0.8)]
    pub p_max: f64,
    #[arg(long, default_value_t = 5)]
    pub top_n: usize,
    #[arg(long, default_value_t = 10)]
    pub init_k: usize,
    #[arg(long, default_value_t = 50)]
    pub init_restarts: usize,
    /// Chat-completions endpoint for the llm judge policy
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Judge model name for the llm policy
    #[arg(long)]
    pub model_name: Option<String>,
    #[arg(long, default_value = "JUDGE_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    /// Attach question images to judge prompts (false = text-only context)
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub include_images: bool,
    /// Show the judge the session memory table (false = no-memory ablation)
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub include_memory: bool,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    /// Evaluated-model name for the chat respondent
    #[arg(long)]
    pub model_id: Option<String>,
    /// Parallel sessions (within-session order is always sequential)
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Optional consistency threshold (percent) recorded as pass/fail
    #[arg(long)]
    pub threshold: Option<f64>,
}

enum RespondentSpec {
    Matrix(PathBuf),
    Rasch(PathBuf),
    Chat(String),
}

fn parse_respondent(spec: &str) -> anyhow::Result<RespondentSpec> {
    if let Some(path) = spec.strip_prefix("matrix:") {
        Ok(RespondentSpec::Matrix(PathBuf::from(path)))
    } else if let Some(path) = spec.strip_prefix("rasch:") {
        Ok(RespondentSpec::Rasch(PathBuf::from(path)))
    } else if let Some(endpoint) = spec.strip_prefix("chat:") {
        Ok(RespondentSpec::Chat(endpoint.to_string()))
    } else {
        Err(Error::InvalidConfig(format!(
            "respondent must be matrix:<path>, rasch:<path>, or chat:<endpoint>, got {spec:?}"
        ))
        .into())
    }
}

pub fn run(args: EvaluateArgs) -> anyhow::Result<()> {
    // config validation happens before any file is touched
    let judge_config = JudgeConfig {
        policy: args.policy.parse::<JudgePolicy>()?,
        endpoint: args.endpoint.clone(),
        model_name: args.model_name.clone(),
        api_key_env: args.api_key_env.clone(),
        timeout_s: args.timeout,
        max_retries: args.max_retries,
        include_images: args.include_images,
        include_memory: args.include_memory,
        temperature: args.temperature,
    };
    judge_config.validate()?;
    let selection_config = SelectionConfig {
        p_min: args.p_min,
        p_max: args.p_max,
        top_n: args.top_n,
        init_k: args.init_k,
        init_restarts: args.init_restarts,
        candidate_strategy: args.strategy.parse::<CandidateStrategy>()?,
    };
    selection_config.validate()?;
    let session_config = SessionConfig {
        compression_ratio: args.ratio,
        seed: args.seed,
        selection: selection_config,
        judge: judge_config.clone(),
        ..SessionConfig::default()
    };
    let respondent_spec = parse_respondent(&args.respondent)?;

    let mut pool = load_pool(&args.questions, Some(&args.embeddings))?;
    let calibration_text = std::fs::read_to_string(&args.calibration)
        .with_context(|| format!("reading {}", args.calibration.display()))?;
    let calibration = CalibrationResult::from_json(&calibration_text)?;
    pool.apply_difficulties(&calibration.difficulty_means());
    let uncalibrated: Vec<&str> = pool
        .iter()
        .filter(|q| q.difficulty.is_none())
        .map(|q| q.id.as_str())
        .take(5)
        .collect();
    if !uncalibrated.is_empty() {
        return Err(Error::Uncalibrated {
            id: uncalibrated.join(", "),
        }
        .into());
    }
    session_config.validate(pool.len())?;

    let pool_hash = file_hash(&args.questions)?;
    let calibration_hash = file_hash(&args.calibration)?;
    // run identity excludes argv so output paths don't perturb it
    let identity = serde_json::json!({
        "session": session_config,
        "respondent": args.respondent,
        "reference": args.reference.is_some(),
        "threshold": args.threshold,
    });
    let id = run_id(&identity, &[&pool_hash, &calibration_hash]);
    let snapshot = serde_json::json!({
        "argv": argv_snapshot(),
        "session": session_config,
        "respondent": args.respondent,
    });

    // assets shared by all sessions in this run
    let initial_batch = selection::initial_batch(
        &pool,
        &session_config.selection,
        proctor_core::session::derive_seed(args.seed, "init", 0),
    )?;
    let judge = Judge::from_config(judge_config)?;

    // the matrix (if any) must outlive the scoped session threads
    let matrix;
    let truth: WorldTruth;
    // expected full-pool accuracy per model, available for simulated
    // respondents even without a --reference file
    let mut analytic_reference: Option<BTreeMap<String, f64>> = None;
    let (model_ids, outcomes) = match &respondent_spec {
        RespondentSpec::Matrix(path) => {
            matrix = load_responses(path, &pool)?;
            let ids: Vec<String> = matrix.model_ids().to_vec();
            let outcomes = run_all(
                &pool,
                &judge,
                &session_config,
                &initial_batch,
                &ids,
                |model| Box::new(MatrixRespondent::new(model, &matrix)),
                args.jobs,
            );
            (ids, outcomes)
        }
        RespondentSpec::Rasch(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            truth = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let ids = truth.test_models.clone();
            for id in &ids {
                if !truth.abilities.contains_key(id) {
                    return Err(Error::InvalidConfig(format!(
                        "truth file lists test model {id:?} without an ability"
                    ))
                    .into());
                }
            }
            let n = truth.difficulties.len().max(1) as f64;
            analytic_reference = Some(
                ids.iter()
                    .map(|m| {
                        let a = truth.abilities[m];
                        let expected = truth
                            .difficulties
                            .values()
                            .map(|&d| proctor_core::rasch::rasch_prob(a, d))
                            .sum::<f64>()
                            / n;
                        (m.clone(), expected)
                    })
                    .collect(),
            );
            let outcomes = run_all(
                &pool,
                &judge,
                &session_config,
                &initial_batch,
                &ids,
                |model| {
                    Box::new(RaschSimRespondent::new(
                        model,
                        truth.abilities[model],
                        stable_hash(args.seed, model.as_bytes()),
                        truth.difficulties.clone(),
                    ))
                },
                args.jobs,
            );
            (ids, outcomes)
        }
        RespondentSpec::Chat(endpoint) => {
            let model_id = args.model_id.clone().unwrap_or_else(|| "chat-model".into());
            let ids = vec![model_id.clone()];
            let outcomes = run_all(
                &pool,
                &judge,
                &session_config,
                &initial_batch,
                &ids,
                |model| {
                    Box::new(ChatRespondent::new(
                        model,
                        endpoint,
                        model,
                        &args.api_key_env,
                        args.timeout,
                    ))
                },
                args.jobs,
            );
            (ids, outcomes)
        }
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let run_dir = args.out.join(&id);
    for outcome in &outcomes {
        write_session_log(&run_dir, outcome, &id, &pool_hash)?;
    }
    if let Some(failed) = outcomes.into_iter().find_map(|o| o.error) {
        return Err(failed.into());
    }

    // every session completed; assemble the report
    let run_scores: BTreeMap<String, f64> = model_ids
        .iter()
        .map(|m| {
            let log = run_dir.join(format!(
                "{}.session.jsonl",
                crate::sessions::sanitize_model_id(m)
            ));
            let text = std::fs::read_to_string(&log).expect("just written");
            let footer: serde_json::Value =
                serde_json::from_str(text.lines().last().unwrap()).expect("footer");
            (m.clone(), footer["final_ability"].as_f64().unwrap())
        })
        .collect();

    let mut mean_distance = None;
    {
        let mut totals = Vec::new();
        for m in &model_ids {
            let log = run_dir.join(format!(
                "{}.session.jsonl",
                crate::sessions::sanitize_model_id(m)
            ));
            let text = std::fs::read_to_string(&log)?;
            let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap())?;
            let mut asked: Vec<String> = header["initial_batch"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_str().unwrap().to_string())
                .collect();
            for line in text.lines().skip(1) {
                if let Ok(step) = serde_json::from_str::<serde_json::Value>(line) {
                    if let Some(chosen) = step.get("chosen_id").and_then(|v| v.as_str()) {
                        asked.push(chosen.to_string());
                    }
                }
            }
            if asked.len() >= 2 {
                totals.push(metrics::mean_semantic_distance(&asked, &pool)?);
            }
        }
        if !totals.is_empty() {
            mean_distance = Some(totals.iter().sum::<f64>() / totals.len() as f64);
        }
    }

    let mut ranking = None;
    let mut repeats = None;
    let reference_all: Option<BTreeMap<String, f64>> = match &args.reference {
        Some(reference_path) => {
            let reference_matrix = load_responses(reference_path, &pool)?;
            Some(accuracy_per_model(&reference_matrix))
        }
        None => analytic_reference,
    };
    if let Some(reference_all) = reference_all {
        let shared: BTreeMap<String, f64> = reference_all
            .iter()
            .filter(|(m, _)| run_scores.contains_key(*m))
            .map(|(m, &v)| (m.clone(), v))
            .collect();
        if shared.len() >= 2 {
            let predicted: BTreeMap<String, f64> = run_scores
                .iter()
                .filter(|(m, _)| shared.contains_key(*m))
                .map(|(m, &v)| (m.clone(), v))
                .collect();
            let accuracy = metrics::ranking_accuracy(&predicted, &shared)?;
            ranking = Some(accuracy);
            repeats = Some(metrics::aggregate_repeats(&[accuracy])?);
        } else {
            proctor_core::logging::warn(
                "reference shares fewer than 2 models with the run; skipping ranking accuracy",
            );
        }
    }

    let report = RunReport {
        run_id: id.clone(),
        method: "adaptive".into(),
        ratio: args.ratio,
        per_model: rank_scores(&run_scores),
        ranking_accuracy_pct: ranking,
        repeats,
        mean_semantic_distance: mean_distance,
        threshold: args.threshold,
        meets_threshold: match (args.threshold, ranking) {
            (Some(t), Some(r)) => Some(r >= t),
            _ => None,
        },
    };
    report.write(&args.out)?;
    RunManifest::new("evaluate", snapshot, pool_hash, Some(calibration_hash))
        .finish_and_write(&args.out)?;
    match ranking {
        Some(r) => println!(
            "evaluated {} model(s); ranking accuracy {:.2}%",
            model_ids.len(),
            r
        ),
        None => println!("evaluated {} model(s)", model_ids.len()),
    }
    Ok(())
}
