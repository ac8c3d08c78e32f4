use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;

use proctor_core::judge::{JudgeConfig, JudgePolicy};
use proctor_core::rasch::{fit, CalibrationConfig};
use proctor_core::sim::{
    generate_world, run_experiment_with_calibration, ExperimentMethod, ReferenceMode, World,
    WorldSpec,
};

use crate::manifest::{argv_snapshot, run_id, sha256_hex, RunManifest};
use crate::report::{rank_scores, RunReport};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub questions: usize,
    #[arg(long, default_value_t = 60)]
    pub train_models: usize,
    #[arg(long, default_value_t = 17)]
    pub test_models: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub ability_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ability_std: f64,
    #[arg(long, default_value_t = 0.0)]
    pub difficulty_mean: f64,
    #[arg(long, default_value_t = 2.0)]
    pub difficulty_std: f64,
    /// Also run an experiment: adaptive | random | stratified | cluster | irt_optimal
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated compression ratios, e.g. 0.02,0.05,0.1
    #[arg(long, default_value = "0.05")]
    pub ratios: String,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Judge policy for the adaptive method
    #[arg(long, default_value = "farthest")]
    pub policy: String,
    /// Reference ranking: analytic | empirical
    #[arg(long, default_value = "analytic")]
    pub reference: String,
}

/// Write the world in the ingestion file formats plus truth.json.
pub fn write_world(world: &World, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut questions = std::fs::File::create(dir.join("questions.jsonl"))?;
    let mut embeddings = std::fs::File::create(dir.join("embeddings.jsonl"))?;
    for q in world.pool.iter() {
        let mut stripped = q.clone();
        stripped.embedding = None;
        stripped.difficulty = None;
        writeln!(questions, "{}", serde_json::to_string(&stripped)?)?;
        if let Some(e) = &q.embedding {
            writeln!(
                embeddings,
                "{}",
                serde_json::json!({"id": q.id, "vector": e})
            )?;
        }
    }

    let mut responses = std::fs::File::create(dir.join("responses.csv"))?;
    writeln!(responses, "model_id,question_id,correct")?;
    for &(m, q, correct) in world.train_matrix.entries() {
        writeln!(
            responses,
            "{},{},{}",
            world.train_matrix.model_ids()[m as usize],
            world.train_matrix.question_ids()[q as usize],
            correct as u8
        )?;
    }

    std::fs::write(
        dir.join("truth.json"),
        serde_json::to_string_pretty(&world.truth)?,
    )?;
    Ok(())
}

pub fn run(args: SimulateArgs) -> anyhow::Result<()> {
    let spec = WorldSpec {
        n_train_models: args.train_models,
        n_test_models: args.test_models,
        n_questions: args.questions,
        ability_dist: (args.ability_mean, args.ability_std),
        difficulty_dist: (args.difficulty_mean, args.difficulty_std),
        embedding_dim: args.dim,
        n_clusters_true: args.clusters,
        seed: args.seed,
    };
    let method: Option<ExperimentMethod> = match &args.method {
        Some(m) => Some(m.parse()?),
        None => None,
    };
    let reference = match args.reference.as_str() {
        "analytic" => ReferenceMode::Analytic,
        "empirical" => ReferenceMode::Empirical,
        other => {
            return Err(proctor_core::Error::InvalidConfig(format!(
                "reference must be analytic or empirical, got {other:?}"
            ))
            .into())
        }
    };
    let ratios: Vec<f64> = args
        .ratios
        .split(',')
        .map(|r| {
            r.trim()
                .parse::<f64>()
                .map_err(|_| proctor_core::Error::InvalidConfig(format!("bad ratio {r:?}")))
        })
        .collect::<Result<_, _>>()?;

    let world = generate_world(&spec)?;
    write_world(&world, &args.out)?;
    println!(
        "world written: {} questions, {} train + {} test models",
        world.pool.len(),
        spec.n_train_models,
        spec.n_test_models
    );

    let identity = serde_json::json!({
        "world": spec,
        "method": args.method,
        "ratios": ratios,
        "repeats": args.repeats,
        "policy": args.policy,
        "reference": args.reference,
    });
    let snapshot = serde_json::json!({
        "argv": argv_snapshot(),
        "world": spec,
        "method": args.method,
        "ratios": ratios,
        "repeats": args.repeats,
        "policy": args.policy,
        "reference": args.reference,
    });
    let pool_hash = sha256_hex(
        std::fs::read(args.out.join("questions.jsonl"))
            .context("hashing questions.jsonl")?
            .as_slice(),
    );

    if let Some(method) = method {
        let judge_config = JudgeConfig {
            policy: args.policy.parse::<JudgePolicy>()?,
            ..JudgeConfig::default()
        };
        let calibration = fit(
            &world.train_matrix,
            &CalibrationConfig {
                seed: spec.seed,
                ..CalibrationConfig::default()
            },
        )?;
        std::fs::write(args.out.join("calibration.json"), calibration.to_json())?;
        for &ratio in &ratios {
            let report = run_experiment_with_calibration(
                &world,
                &calibration,
                method,
                ratio,
                args.repeats,
                &judge_config,
                reference,
            )?;
            let run_dir = args.out.join("runs").join(format!("{method}_{ratio}"));
            std::fs::create_dir_all(&run_dir)?;
            let run_report = RunReport {
                run_id: run_id(&identity, &[&pool_hash, &format!("{ratio}")]),
                method: method.to_string(),
                ratio,
                per_model: rank_scores(&report.run_scores),
                ranking_accuracy_pct: Some(report.ranking_accuracy_pct),
                repeats: report.repeats,
                mean_semantic_distance: None,
                threshold: None,
                meets_threshold: None,
            };
            run_report.write(&run_dir)?;
            println!(
                "{method} @ δ={ratio}: ranking accuracy {:.2}% (over {} repeats)",
                report.ranking_accuracy_pct, args.repeats
            );
        }
    }

    RunManifest::new("simulate", snapshot, pool_hash, None).finish_and_write(&args.out)?;
    Ok(())
}
