//! Inversion-based ranking accuracy with dispersion statistics, mean
//! semantic distance, and the four comparison selection baselines.

use std::collections::{BTreeMap, HashSet};

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::ability;
use crate::error::{Error, Result};
use crate::pool::QuestionPool;
use crate::rasch::CalibrationResult;
use crate::semantic;
use crate::session::Respondent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatStats {
    pub mean: f64,
    pub std: f64,
    pub ci95_halfwidth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingReport {
    pub run_scores: BTreeMap<String, f64>,
    pub reference_scores: BTreeMap<String, f64>,
    pub ranking_accuracy_pct: f64,
    pub n_models: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<RepeatStats>,
}

/// 100 × (1 − inversions / C(n,2)). A pair is a full inversion when the
/// strict orders disagree; a pair tied in either map counts half.
pub fn ranking_accuracy(
    predicted: &BTreeMap<String, f64>,
    reference: &BTreeMap<String, f64>,
) -> Result<f64> {
    if predicted.len() != reference.len() || !predicted.keys().all(|k| reference.contains_key(k)) {
        return Err(Error::InvalidConfig(
            "predicted and reference rankings must share the same models".into(),
        ));
    }
    let n = predicted.len();
    if n < 2 {
        return Err(Error::InvalidConfig(
            "ranking accuracy needs ≥ 2 models".into(),
        ));
    }
    let keys: Vec<&String> = predicted.keys().collect();
    let mut inversions = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dp = predicted[keys[i]] - predicted[keys[j]];
            let dr = reference[keys[i]] - reference[keys[j]];
            if dp == 0.0 || dr == 0.0 {
                inversions += 0.5;
            } else if (dp > 0.0) != (dr > 0.0) {
                inversions += 1.0;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((1.0 - inversions / pairs) * 100.0)
}

/// Mean, sample standard deviation (n−1 denominator, 0 for a single run),
/// and the 1.96·std 95% half-width.
pub fn aggregate_repeats(scores: &[f64]) -> Result<RepeatStats> {
    if scores.is_empty() {
        return Err(Error::InvalidConfig("no scores to aggregate".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = if scores.len() == 1 {
        0.0
    } else {
        (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(RepeatStats {
        mean,
        std,
        ci95_halfwidth: 1.96 * std,
    })
}

/// Mean Euclidean distance over all unordered pairs of asked questions.
pub fn mean_semantic_distance(asked: &[String], pool: &QuestionPool) -> Result<f64> {
    if asked.len() < 2 {
        return Err(Error::InvalidConfig(
            "mean semantic distance needs ≥ 2 questions".into(),
        ));
    }
    let embeddings: Vec<&[f64]> = asked
        .iter()
        .map(|id| pool.embedding(id))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            total += semantic::euclidean(embeddings[i], embeddings[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Spearman rank correlation with average ranks on ties. Supplementary
/// diagnostic, not the headline metric.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidConfig(
            "spearman needs two equal series (n ≥ 2)".into(),
        ));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::InvalidConfig("constant series in spearman".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Random,
    Stratified,
    Cluster,
    IrtOptimal,
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BaselineMethod::Random),
            "stratified" => Ok(BaselineMethod::Stratified),
            "cluster" => Ok(BaselineMethod::Cluster),
            "irt_optimal" | "irt" => Ok(BaselineMethod::IrtOptimal),
            other => Err(Error::InvalidConfig(format!("unknown baseline {other:?}"))),
        }
    }
}

impl std::fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BaselineMethod::Random => "random",
            BaselineMethod::Stratified => "stratified",
            BaselineMethod::Cluster => "cluster",
            BaselineMethod::IrtOptimal => "irt_optimal",
        };
        write!(f, "{s}")
    }
}

/// Select a question subset by one of the comparison baselines.
///
/// - random: seeded uniform draw without replacement.
/// - stratified: per-category quotas differing by at most one, drawn
///   seeded within each category; uncategorized questions form their own
///   stratum.
/// - cluster: k-means with k = budget, one closest-to-centroid question
///   per cluster.
/// - irt_optimal: adaptive; ability starts at 0 (the analytic MLE of five
///   pseudo-responses at difficulty 0 with 2.5 correct), then repeatedly
///   asks the unasked question nearest the current ability and re-estimates
///   from the real responses.
pub fn baseline_select(
    pool: &QuestionPool,
    calibration: Option<&CalibrationResult>,
    method: BaselineMethod,
    budget: usize,
    seed: u64,
    respondent: Option<&mut dyn Respondent>,
) -> Result<Vec<String>> {
    let budget = budget.min(pool.len());
    if budget == 0 {
        return Err(Error::InvalidConfig("budget must be ≥ 1".into()));
    }
    match method {
        BaselineMethod::Random => {
            let mut rng = Pcg64::seed_from_u64(seed);
            let mut ids: Vec<String> = pool.ids().map(str::to_string).collect();
            let mut picked = Vec::with_capacity(budget);
            for _ in 0..budget {
                let i = rng.random_range(0..ids.len());
                picked.push(ids.swap_remove(i));
            }
            Ok(picked)
        }
        BaselineMethod::Stratified => {
            let mut rng = Pcg64::seed_from_u64(seed);
            let mut strata: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for q in pool.iter() {
                let category = q
                    .category
                    .clone()
                    .filter(|c| !c.trim().is_empty())
                    .unwrap_or_else(|| "uncategorized".to_string());
                strata.entry(category).or_default().push(q.id.clone());
            }
            if strata.len() < 2 {
                return Err(Error::InvalidConfig(
                    "stratified sampling requires ≥ 2 categories".into(),
                ));
            }
            // shuffle within each stratum, then deal one slot per stratum
            // round-robin so quotas never differ by more than one
            let mut decks: Vec<(String, Vec<String>)> = strata
                .into_iter()
                .map(|(category, mut members)| {
                    for i in (1..members.len()).rev() {
                        let j = rng.random_range(0..=i);
                        members.swap(i, j);
                    }
                    (category, members)
                })
                .collect();
            let mut picked = Vec::with_capacity(budget);
            'outer: loop {
                let mut any = false;
                for (_, deck) in decks.iter_mut() {
                    if let Some(id) = deck.pop() {
                        picked.push(id);
                        any = true;
                        if picked.len() == budget {
                            break 'outer;
                        }
                    }
                }
                if !any {
                    break;
                }
            }
            Ok(picked)
        }
        BaselineMethod::Cluster => {
            let assignment = semantic::kmeans(pool, budget, 1, seed)?;
            semantic::closest_to_centroids(&assignment, pool)
        }
        BaselineMethod::IrtOptimal => {
            let calibration = calibration.ok_or_else(|| {
                Error::InvalidConfig("irt_optimal baseline requires a calibration".into())
            })?;
            let respondent = respondent.ok_or_else(|| {
                Error::InvalidConfig("irt_optimal baseline requires a respondent".into())
            })?;
            let mut difficulties: Vec<(String, f64)> = pool
                .ids()
                .map(|id| {
                    calibration
                        .difficulties
                        .get(id)
                        .map(|s| (id.to_string(), s.mean))
                        .ok_or_else(|| Error::Uncalibrated { id: id.into() })
                })
                .collect::<Result<_>>()?;
            difficulties.sort_by(|a, b| a.0.cmp(&b.0));
            let mut asked: Vec<String> = Vec::with_capacity(budget);
            let mut asked_set: HashSet<usize> = HashSet::new();
            let mut responses: Vec<(f64, bool)> = Vec::new();
            let mut current = 0.0;
            while asked.len() < budget {
                let next = difficulties
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !asked_set.contains(i))
                    .min_by(|(_, a), (_, b)| {
                        (a.1 - current)
                            .abs()
                            .partial_cmp(&(b.1 - current).abs())
                            .unwrap()
                            .then_with(|| a.0.cmp(&b.0))
                    })
                    .map(|(i, _)| i)
                    .expect("budget ≤ pool size");
                let (id, difficulty) = difficulties[next].clone();
                let question = pool.get(&id).expect("pool id");
                let correct = respondent.answer(question)?;
                asked_set.insert(next);
                asked.push(id);
                responses.push((difficulty, correct));
                current = ability::estimate_ability_default(&responses).value;
            }
            Ok(asked)
        }
    }
}

/// Ability estimate from replaying a subset against a deterministic
/// respondent, with difficulties taken from the calibrated pool. How
/// adaptive selections (irt_optimal) are scored: a matched-difficulty
/// subset pins every model near 50% raw accuracy, so subset accuracy
/// carries no ranking signal there.
pub fn subset_ability(
    pool: &QuestionPool,
    subset: &[String],
    respondent: &mut dyn Respondent,
) -> Result<crate::ability::AbilityEstimate> {
    let mut responses = Vec::with_capacity(subset.len());
    for id in subset {
        let q = pool.get(id).ok_or_else(|| Error::UnknownQuestion {
            id: id.clone(),
            line: 0,
        })?;
        let d = pool.difficulty(id)?;
        responses.push((d, respondent.answer(q)?));
    }
    Ok(ability::estimate_ability_default(&responses))
}
