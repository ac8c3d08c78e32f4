use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use proctor_core::pool::{load_pool, load_responses};
use proctor_core::rasch::{fit, CalibrationConfig};

use crate::manifest::{argv_snapshot, file_hash, RunManifest};

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// questions.jsonl
    #[arg(long)]
    pub questions: PathBuf,
    /// responses.csv with the offline training records
    #[arg(long)]
    pub responses: PathBuf,
    /// Optional JSON file with the full calibration config
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Output directory for calibration.json and the manifest
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: CalibrateArgs) -> anyhow::Result<()> {
    let mut config: CalibrationConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => CalibrationConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(lr) = args.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(steps) = args.max_steps {
        config.max_steps = steps;
    }
    if let Some(batch) = args.batch_size {
        config.batch_size = Some(batch);
    }
    config.validate()?;

    let pool = load_pool(&args.questions, None)?;
    let matrix = load_responses(&args.responses, &pool)?;
    proctor_core::logging::info(&format!(
        "fitting {} models × {} questions ({} entries)",
        matrix.n_models(),
        matrix.n_questions(),
        matrix.n_entries()
    ));
    let result = fit(&matrix, &config)?;
    if !result.converged {
        proctor_core::logging::warn(&format!(
            "calibration hit max_steps = {} without window convergence",
            config.max_steps
        ));
    }
    if !result.diagnostics.degenerate_questions.is_empty() {
        proctor_core::logging::warn(&format!(
            "{} question(s) answered uniformly (all-correct or all-wrong)",
            result.diagnostics.degenerate_questions.len()
        ));
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    std::fs::write(args.out.join("calibration.json"), result.to_json())
        .context("writing calibration.json")?;

    let snapshot = serde_json::json!({
        "argv": argv_snapshot(),
        "calibration": config,
    });
    RunManifest::new(
        "calibrate",
        snapshot,
        file_hash(&args.questions)?,
        Some(file_hash(&args.responses)?),
    )
    .finish_and_write(&args.out)?;
    println!(
        "calibrated {} questions in {} steps (converged: {})",
        result.difficulties.len(),
        result.steps_run,
        result.converged
    );
    Ok(())
}
