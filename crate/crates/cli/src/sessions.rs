//! Shared session-running machinery for the evaluate path: parallel
//! fan-out across models (within-session order untouched) and the JSONL
//! audit log writer.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use serde_json::json;

use proctor_core::judge::Judge;
use proctor_core::pool::QuestionPool;
use proctor_core::session::{run_with_initial_batch, Respondent, SessionConfig, SessionState};

pub struct SessionOutcome {
    pub state: SessionState,
    pub wall_time_s: f64,
    pub error: Option<proctor_core::Error>,
}

/// Run one session per model id, at most `jobs` in flight. Results come
/// back in `model_ids` order regardless of scheduling.
pub fn run_all<'r, F>(
    pool: &QuestionPool,
    judge: &Judge,
    config: &SessionConfig,
    initial_batch: &[String],
    model_ids: &[String],
    make_respondent: F,
    jobs: usize,
) -> Vec<SessionOutcome>
where
    F: Fn(&str) -> Box<dyn Respondent + Send + 'r> + Sync,
{
    let jobs = jobs.max(1).min(model_ids.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<SessionOutcome>>> =
        model_ids.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= model_ids.len() {
                    break;
                }
                let mut respondent = make_respondent(&model_ids[i]);
                let start = Instant::now();
                let outcome = match run_with_initial_batch(
                    pool,
                    respondent.as_mut(),
                    judge,
                    config,
                    initial_batch.to_vec(),
                ) {
                    Ok(state) => SessionOutcome {
                        state,
                        wall_time_s: start.elapsed().as_secs_f64(),
                        error: None,
                    },
                    Err(failure) => SessionOutcome {
                        state: failure.partial,
                        wall_time_s: start.elapsed().as_secs_f64(),
                        error: Some(failure.error),
                    },
                };
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every model ran"))
        .collect()
}

/// Model ids can contain path separators; keep log file names flat.
pub fn sanitize_model_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// One header line, one line per adaptive step, one footer line.
pub fn write_session_log(
    run_dir: &Path,
    outcome: &SessionOutcome,
    config_hash: &str,
    pool_hash: &str,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    let path = run_dir.join(format!(
        "{}.session.jsonl",
        sanitize_model_id(&outcome.state.model_id)
    ));
    let mut file =
        std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let state = &outcome.state;
    let header = json!({
        "model_id": state.model_id,
        "config_hash": config_hash,
        "pool_hash": pool_hash,
        "initial_batch": state.initial_batch,
        "initial_responses": state
            .asked
            .iter()
            .take(state.initial_batch.len())
            .map(|(_, c)| *c)
            .collect::<Vec<bool>>(),
    });
    writeln!(file, "{header}")?;
    for step in &state.steps {
        writeln!(
            file,
            "{}",
            serde_json::to_string(step).expect("step serializes")
        )?;
    }
    let mut footer = json!({
        "final_ability": state.ability,
        "n_asked": state.asked.len(),
        "wall_time_s": outcome.wall_time_s,
    });
    if let Some(e) = &outcome.error {
        footer["error"] = json!(e.to_string());
    }
    writeln!(file, "{footer}")?;
    Ok(())
}
