//! Per-iteration candidate production: filter unasked questions to an
//! ability-matched success-probability band, then diversify (or rank by
//! difficulty proximity, or sample) down to a small candidate set. Also
//! builds the shared, ability-independent initial batch.

use std::collections::HashSet;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::QuestionPool;
use crate::rasch::rasch_prob;
use crate::semantic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStrategy {
    /// Max-min embedding distance against the asked set.
    SemanticFarthest,
    /// Smallest |difficulty − ability|.
    OptimalDifficulty,
    /// Seeded uniform draw from the band.
    Random,
}

impl std::str::FromStr for CandidateStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic_farthest" => Ok(CandidateStrategy::SemanticFarthest),
            "optimal_difficulty" => Ok(CandidateStrategy::OptimalDifficulty),
            "random" => Ok(CandidateStrategy::Random),
            other => Err(Error::InvalidConfig(format!(
                "unknown candidate strategy {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub p_min: f64,
    pub p_max: f64,
    pub top_n: usize,
    pub init_k: usize,
    pub init_restarts: usize,
    pub candidate_strategy: CandidateStrategy,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            p_min: 0.2,
            p_max: 0.8,
            top_n: 5,
            init_k: 10,
            init_restarts: 50,
            candidate_strategy: CandidateStrategy::SemanticFarthest,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.p_min && self.p_min < self.p_max && self.p_max < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "require 0 < p_min < p_max < 1, got [{}, {}]",
                self.p_min, self.p_max
            )));
        }
        if self.top_n == 0 || self.init_k == 0 || self.init_restarts == 0 {
            return Err(Error::InvalidConfig(
                "top_n, init_k, init_restarts must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Candidates offered to the judge, aligned id/difficulty/min-distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSet {
    pub ids: Vec<String>,
    pub difficulties: Vec<f64>,
    /// Minimum embedding distance to the asked set (0 when the pool has no
    /// embeddings and a non-semantic strategy is in use).
    pub min_distances: Vec<f64>,
    /// True when no unasked question fit the probability band and the
    /// midpoint-proximity relaxation produced these candidates instead.
    pub band_relaxed: bool,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// The shared initial batch: k-means over the whole embedded pool, then one
/// closest-to-centroid question per cluster. Ability-independent, so a
/// single seeded batch serves every model in a run.
pub fn initial_batch(
    pool: &QuestionPool,
    config: &SelectionConfig,
    seed: u64,
) -> Result<Vec<String>> {
    let assignment = semantic::kmeans(pool, config.init_k, config.init_restarts, seed)?;
    semantic::closest_to_centroids(&assignment, pool)
}

/// Unasked questions whose predicted success probability for `ability`
/// lies inside [p_min, p_max]. Order follows the pool.
pub fn filter_band(
    pool: &QuestionPool,
    asked: &HashSet<String>,
    ability: f64,
    config: &SelectionConfig,
) -> Result<Vec<String>> {
    let mut band = Vec::new();
    for q in pool.iter() {
        if asked.contains(&q.id) {
            continue;
        }
        let d = q
            .difficulty
            .ok_or_else(|| Error::Uncalibrated { id: q.id.clone() })?;
        let p = rasch_prob(ability, d);
        if p >= config.p_min && p <= config.p_max {
            band.push(q.id.clone());
        }
    }
    Ok(band)
}

/// Produce the next candidate set for one step. `asked` must be the ordered
/// asked-so-far list so the semantic strategy can score against it.
pub fn next_candidates(
    pool: &QuestionPool,
    asked: &[String],
    ability: f64,
    config: &SelectionConfig,
    seed: u64,
) -> Result<CandidateSet> {
    let asked_set: HashSet<String> = asked.iter().cloned().collect();
    let unasked = pool.len() - asked_set.len();
    if unasked == 0 {
        return Err(Error::Other("question pool exhausted".into()));
    }

    let band = filter_band(pool, &asked_set, ability, config)?;
    let (ids, band_relaxed) = if band.is_empty() {
        // No question fits the band: rank every unasked question by
        // |p − band midpoint| ascending instead.
        let midpoint = 0.5 * (config.p_min + config.p_max);
        let mut scored: Vec<(String, f64)> = pool
            .iter()
            .filter(|q| !asked_set.contains(&q.id))
            .map(|q| {
                let p = rasch_prob(ability, q.difficulty.expect("checked by filter_band"));
                (q.id.clone(), (p - midpoint).abs())
            })
            .collect();
        scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(config.top_n);
        (
            scored.into_iter().map(|(id, _)| id).collect::<Vec<_>>(),
            true,
        )
    } else {
        let picked = match config.candidate_strategy {
            CandidateStrategy::SemanticFarthest => {
                if asked.is_empty() {
                    let mut sorted = band;
                    sorted.sort();
                    sorted.truncate(config.top_n);
                    sorted
                } else {
                    semantic::max_min_retrieve(&band, asked, pool, config.top_n)?
                }
            }
            CandidateStrategy::OptimalDifficulty => {
                let mut scored: Vec<(String, f64)> = band
                    .into_iter()
                    .map(|id| {
                        let d = pool.difficulty(&id).expect("band members calibrated");
                        (id, (d - ability).abs())
                    })
                    .collect();
                scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
                scored.truncate(config.top_n);
                scored.into_iter().map(|(id, _)| id).collect()
            }
            CandidateStrategy::Random => {
                let mut rng = Pcg64::seed_from_u64(seed);
                let mut remaining = band;
                let mut picked = Vec::new();
                while picked.len() < config.top_n && !remaining.is_empty() {
                    let i = rng.random_range(0..remaining.len());
                    picked.push(remaining.swap_remove(i));
                }
                picked
            }
        };
        (picked, false)
    };

    let difficulties: Vec<f64> = ids
        .iter()
        .map(|id| pool.difficulty(id))
        .collect::<Result<_>>()?;
    let min_distances = candidate_min_distances(pool, &ids, asked)?;
    Ok(CandidateSet {
        ids,
        difficulties,
        min_distances,
        band_relaxed,
    })
}

/// Min distance to the asked set per candidate; 0 when embeddings are
/// absent or nothing has been asked yet.
fn candidate_min_distances(
    pool: &QuestionPool,
    ids: &[String],
    asked: &[String],
) -> Result<Vec<f64>> {
    if asked.is_empty() || pool.embedding_dim().is_none() {
        return Ok(vec![0.0; ids.len()]);
    }
    let all_embedded = ids
        .iter()
        .chain(asked.iter())
        .all(|id| pool.get(id).map(|q| q.embedding.is_some()).unwrap_or(false));
    if !all_embedded {
        return Ok(vec![0.0; ids.len()]);
    }
    Ok(semantic::max_min_scores(ids, asked, pool)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}
