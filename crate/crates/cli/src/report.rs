//! The report.json shape shared by evaluate, baseline, and simulate runs,
//! plus helpers to rank scores and render the merged/sweep tables.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use proctor_core::metrics::RepeatStats;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerModel {
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub method: String,
    pub ratio: f64,
    pub per_model: BTreeMap<String, PerModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking_accuracy_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<RepeatStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_semantic_distance: Option<f64>,
    /// Pass/fail against a user-supplied consistency threshold, when one
    /// was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meets_threshold: Option<bool>,
}

impl RunReport {
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("report.json");
        let body = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Rank scores descending (rank 1 = best), ties broken by model id so the
/// output is deterministic.
pub fn rank_scores(scores: &BTreeMap<String, f64>) -> BTreeMap<String, PerModel> {
    let mut order: Vec<(&String, &f64)> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.1.partial_cmp(a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(i, (model, &score))| (model.clone(), PerModel { score, rank: i + 1 }))
        .collect()
}

/// Recursively collect every `report.json` under `dir`.
pub fn collect_reports(dir: &Path) -> anyhow::Result<Vec<RunReport>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "report.json") {
                out.push(RunReport::read(&path)?);
            }
        }
    }
    // deterministic processing order
    out.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(
                a.ratio
                    .partial_cmp(&b.ratio)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.run_id.cmp(&b.run_id))
    });
    Ok(out)
}
