//! Distance computations over question embeddings, k-means clustering for
//! the initial batch, and max-min diversity retrieval for candidates.
//!
//! Embeddings are unit-norm after ingestion, so Euclidean distance is a
//! monotone transform of cosine distance; Euclidean is used everywhere.

use std::collections::HashMap;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{QuestionPool, ResponseMatrix};

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidConfig(format!(
            "euclidean over mismatched dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(squared_distance(a, b).sqrt())
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// question id → cluster index in [0, k)
    pub assignment: HashMap<String, usize>,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
    pub seed: u64,
}

/// The embedded subset of a pool, in file order.
fn embedded_questions(pool: &QuestionPool) -> Result<Vec<(&str, &[f64])>> {
    let embedded: Vec<(&str, &[f64])> = pool
        .iter()
        .filter_map(|q| q.embedding.as_deref().map(|e| (q.id.as_str(), e)))
        .collect();
    if embedded.is_empty() {
        return Err(Error::InvalidConfig("pool has no embeddings".into()));
    }
    Ok(embedded)
}

/// Lloyd's algorithm with k-means++ seeding, restarted `restarts` times
/// with per-restart seeds `seed + restart index`; the restart with minimum
/// inertia wins. Deterministic given `seed`.
pub fn kmeans(
    pool: &QuestionPool,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let points = embedded_questions(pool)?;
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidConfig("k and restarts must be ≥ 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds the {} embedded questions",
            points.len()
        )));
    }
    let mut best: Option<ClusterAssignment> = None;
    for restart in 0..restarts as u64 {
        let run = lloyd_once(&points, k, seed.wrapping_add(restart));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("restarts ≥ 1");
    best.seed = seed;
    Ok(best)
}

fn lloyd_once(points: &[(&str, &[f64])], k: usize, seed: u64) -> ClusterAssignment {
    let mut rng = Pcg64::seed_from_u64(seed);
    let dim = points[0].1.len();
    let n = points.len();

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].1.to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|&(_, p)| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining mass at existing centroids; pick uniformly
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].1.to_vec());
        for (i, &(_, p)) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, centroids.last().unwrap()));
        }
    }

    let mut assignment = vec![0usize; n];
    let mut previous_inertia = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    for _iter in 0..300 {
        // assign
        inertia = 0.0;
        for (i, &(_, p)) in points.iter().enumerate() {
            let mut best_c = 0;
            let mut best_d = squared_distance(p, &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = squared_distance(p, centroid);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            assignment[i] = best_c;
            inertia += best_d;
        }
        assert!(
            inertia <= previous_inertia + 1e-9,
            "inertia increased: {previous_inertia} -> {inertia}"
        );
        // update
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &(_, p)) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, x) in sums[assignment[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut moved = false;
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an emptied centroid at the point farthest from its
                // current centroid
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|&(i, &(_, p)), &(j, &(_, q))| {
                        let di = squared_distance(p, &centroids[assignment[i]]);
                        let dj = squared_distance(q, &centroids[assignment[j]]);
                        di.partial_cmp(&dj).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                centroids[c] = points[far].1.to_vec();
                moved = true;
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            if new != centroids[c] {
                moved = true;
                centroids[c] = new;
            }
        }
        if !moved {
            break;
        }
        previous_inertia = inertia;
    }

    ClusterAssignment {
        k,
        centroids,
        assignment: points
            .iter()
            .enumerate()
            .map(|(i, &(id, _))| (id.to_string(), assignment[i]))
            .collect(),
        inertia,
        seed,
    }
}

/// Re-run k-means keeping, instead of the minimum-inertia restart, the
/// restart whose closest-to-centroid batch best preserves the training
/// ranking: models are scored by their accuracy on the batch and compared
/// to their full-matrix accuracy by ranking accuracy.
pub fn kmeans_best_by_ranking(
    pool: &QuestionPool,
    k: usize,
    restarts: usize,
    seed: u64,
    train: &ResponseMatrix,
) -> Result<ClusterAssignment> {
    let points = embedded_questions(pool)?;
    if k == 0 || restarts == 0 || k > points.len() {
        return Err(Error::InvalidConfig("invalid k or restarts".into()));
    }
    let reference = crate::pool::accuracy_per_model(train);
    let mut best: Option<(f64, ClusterAssignment)> = None;
    for restart in 0..restarts as u64 {
        let run = lloyd_once(&points, k, seed.wrapping_add(restart));
        let batch = closest_to_centroids(&run, pool)?;
        let mut scores = std::collections::BTreeMap::new();
        for model in train.model_ids() {
            let responses = train.responses_of(model);
            let on_batch: Vec<bool> = responses
                .iter()
                .filter(|(q, _)| batch.iter().any(|b| b == q))
                .map(|&(_, c)| c)
                .collect();
            if !on_batch.is_empty() {
                let acc = on_batch.iter().filter(|&&c| c).count() as f64 / on_batch.len() as f64;
                scores.insert(model.clone(), acc);
            }
        }
        let quality = if scores.len() >= 2 {
            let shared: std::collections::BTreeMap<String, f64> = reference
                .iter()
                .filter(|(m, _)| scores.contains_key(*m))
                .map(|(m, &v)| (m.clone(), v))
                .collect();
            crate::metrics::ranking_accuracy(&scores, &shared).unwrap_or(0.0)
        } else {
            0.0
        };
        if best.as_ref().is_none_or(|(q, _)| quality > *q) {
            best = Some((quality, run));
        }
    }
    let (_, mut run) = best.expect("restarts ≥ 1");
    run.seed = seed;
    Ok(run)
}

/// One question per non-empty cluster: the member closest to its centroid,
/// ties broken by lexicographically smallest id, ordered by cluster index.
pub fn closest_to_centroids(
    assignment: &ClusterAssignment,
    pool: &QuestionPool,
) -> Result<Vec<String>> {
    let mut best: Vec<Option<(f64, &str)>> = vec![None; assignment.k];
    for q in pool.iter() {
        let Some(&cluster) = assignment.assignment.get(&q.id) else {
            continue;
        };
        let e = q
            .embedding
            .as_deref()
            .ok_or_else(|| Error::MissingEmbedding { id: q.id.clone() })?;
        let d = euclidean(e, &assignment.centroids[cluster])?;
        let candidate = (d, q.id.as_str());
        best[cluster] = Some(match best[cluster] {
            None => candidate,
            Some(current) => {
                if d < current.0 || (d == current.0 && candidate.1 < current.1) {
                    candidate
                } else {
                    current
                }
            }
        });
    }
    Ok(best
        .into_iter()
        .flatten()
        .map(|(_, id)| id.to_string())
        .collect())
}

/// One uniformly sampled member per non-empty cluster, seeded; an
/// alternative initial-batch mode to closest-to-centroid.
pub fn uniform_per_cluster(
    assignment: &ClusterAssignment,
    pool: &QuestionPool,
    seed: u64,
) -> Vec<String> {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); assignment.k];
    for q in pool.iter() {
        if let Some(&cluster) = assignment.assignment.get(&q.id) {
            members[cluster].push(&q.id);
        }
    }
    members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| m[rng.random_range(0..m.len())].to_string())
        .collect()
}

/// Score each candidate by its minimum distance to any selected question
/// and return the `top_n` best by descending score (all of them if fewer),
/// ties broken by smaller id. Scores are against the fixed `selected` set;
/// no greedy update happens between picks. An empty `selected` set makes
/// every score +∞ so the tie-break returns the `top_n` smallest ids.
pub fn max_min_retrieve(
    candidates: &[String],
    selected: &[String],
    pool: &QuestionPool,
    top_n: usize,
) -> Result<Vec<String>> {
    let scored = max_min_scores(candidates, selected, pool)?;
    Ok(top_by_score(scored, top_n)
        .into_iter()
        .map(|(id, _)| id)
        .collect())
}

/// (id, min distance to selected) for each candidate.
pub fn max_min_scores(
    candidates: &[String],
    selected: &[String],
    pool: &QuestionPool,
) -> Result<Vec<(String, f64)>> {
    let selected_embeddings: Vec<&[f64]> = selected
        .iter()
        .map(|id| pool.embedding(id))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(candidates.len());
    for id in candidates {
        let e = pool.embedding(id)?;
        let score = selected_embeddings
            .iter()
            .map(|s| squared_distance(e, s))
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        out.push((id.clone(), score));
    }
    Ok(out)
}

/// Descending score, ties by smaller id, truncated to `top_n`.
pub(crate) fn top_by_score(mut scored: Vec<(String, f64)>, top_n: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(top_n);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{Question, QuestionPool};
    use proptest::prelude::*;

    /// Pool whose embeddings are used verbatim: geometry tests need raw
    /// coordinates, so this bypasses the ingestion-time unit-norm check.
    fn raw_pool(points: &[(&str, Vec<f64>)]) -> QuestionPool {
        let questions: Vec<Question> = points
            .iter()
            .map(|(id, e)| Question {
                id: id.to_string(),
                text: String::new(),
                image_ref: None,
                options: None,
                answer_key: None,
                category: None,
                embedding: Some(e.clone()),
                difficulty: Some(0.0),
            })
            .collect();
        QuestionPool::from_questions_unchecked(questions)
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!((euclidean(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(euclidean(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pool = raw_pool(&[
            ("a", vec![0.0, 0.0]),
            ("b", vec![0.0, 1.0]),
            ("c", vec![1.0, 0.0]),
            ("d", vec![1.0, 1.0]),
        ]);
        let run = kmeans(&pool, 4, 5, 7).unwrap();
        assert!(run.inertia < 1e-12);
        let clusters: std::collections::HashSet<usize> = run.assignment.values().copied().collect();
        assert_eq!(clusters.len(), 4);
    }

    /// Brute-force optimal 2-partition oracle: enumerate every nonempty
    /// split, score by within-cluster sum of squared distances to the mean.
    fn best_two_partition(points: &[Vec<f64>]) -> (f64, Vec<bool>) {
        let n = points.len();
        let dim = points[0].len();
        let mut best = (f64::INFINITY, vec![false; n]);
        for mask in 1u32..(1 << (n - 1)) {
            let side: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let mut cost = 0.0;
            for group in [false, true] {
                let members: Vec<&Vec<f64>> = points
                    .iter()
                    .zip(&side)
                    .filter(|(_, &s)| s == group)
                    .map(|(p, _)| p)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let mut mean = vec![0.0; dim];
                for p in &members {
                    for (m, x) in mean.iter_mut().zip(p.iter()) {
                        *m += x;
                    }
                }
                for m in &mut mean {
                    *m /= members.len() as f64;
                }
                for p in &members {
                    cost += squared_distance(p, &mean);
                }
            }
            if cost < best.0 {
                best = (cost, side);
            }
        }
        best
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let mut rng = Pcg64::seed_from_u64(3);
        let mut points = Vec::new();
        let mut names = Vec::new();
        for i in 0..10 {
            points.push(vec![
                0.0 + rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ]);
            names.push(format!("a{i}"));
        }
        for i in 0..10 {
            points.push(vec![
                10.0 + rng.random_range(-0.3..0.3),
                10.0 + rng.random_range(-0.3..0.3),
            ]);
            names.push(format!("b{i}"));
        }
        let named: Vec<(&str, Vec<f64>)> = names
            .iter()
            .map(|n| n.as_str())
            .zip(points.iter().cloned())
            .collect();
        let pool = raw_pool(&named);
        let run = kmeans(&pool, 2, 10, 5).unwrap();

        let (oracle_cost, oracle_side) = best_two_partition(&points);
        assert!(
            (run.inertia - oracle_cost).abs() < 1e-9,
            "inertia {} vs oracle {}",
            run.inertia,
            oracle_cost
        );
        // the blobs are exactly the oracle partition
        let first = run.assignment["a0"];
        for i in 0..10 {
            assert_eq!(run.assignment[&format!("a{i}")], first);
            assert_ne!(run.assignment[&format!("b{i}")], first);
        }
        let a0_side = oracle_side[0];
        for (i, &s) in oracle_side.iter().enumerate() {
            assert_eq!(s == a0_side, i < 10);
        }
    }

    #[test]
    fn kmeans_deterministic() {
        let pool = raw_pool(&[
            ("a", vec![0.1, 0.2]),
            ("b", vec![0.9, 0.7]),
            ("c", vec![0.4, 0.4]),
            ("d", vec![0.8, 0.1]),
            ("e", vec![0.2, 0.9]),
        ]);
        let r1 = kmeans(&pool, 2, 8, 99).unwrap();
        let r2 = kmeans(&pool, 2, 8, 99).unwrap();
        assert_eq!(r1.assignment, r2.assignment);
        assert_eq!(r1.inertia, r2.inertia);
    }

    #[test]
    fn kmeans_rejects_oversized_k() {
        let pool = raw_pool(&[("a", vec![0.0]), ("b", vec![1.0])]);
        assert!(kmeans(&pool, 3, 1, 0).is_err());
    }

    #[test]
    fn closest_member_per_cluster() {
        let pool = raw_pool(&[
            ("far", vec![0.5, 0.0]),
            ("near", vec![0.1, 0.0]),
            ("lone", vec![10.0, 10.0]),
        ]);
        let assignment = ClusterAssignment {
            k: 2,
            centroids: vec![vec![0.0, 0.0], vec![10.0, 10.0]],
            assignment: [("far", 0), ("near", 0), ("lone", 1)]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b))
                .collect(),
            inertia: 0.0,
            seed: 0,
        };
        let picks = closest_to_centroids(&assignment, &pool).unwrap();
        assert_eq!(picks, vec!["near".to_string(), "lone".to_string()]);
    }

    #[test]
    fn closest_breaks_ties_by_id() {
        let pool = raw_pool(&[("zz", vec![1.0, 0.0]), ("aa", vec![-1.0, 0.0])]);
        let assignment = ClusterAssignment {
            k: 1,
            centroids: vec![vec![0.0, 0.0]],
            assignment: [("zz", 0), ("aa", 0)]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b))
                .collect(),
            inertia: 0.0,
            seed: 0,
        };
        let picks = closest_to_centroids(&assignment, &pool).unwrap();
        assert_eq!(picks, vec!["aa".to_string()]);
    }

    #[test]
    fn max_min_picks_farthest_point() {
        let pool = raw_pool(&[
            ("s", vec![0.0]),
            ("c1", vec![1.0]),
            ("c2", vec![2.0]),
            ("c3", vec![3.0]),
        ]);
        let picked = max_min_retrieve(
            &["c1".into(), "c2".into(), "c3".into()],
            &["s".into()],
            &pool,
            1,
        )
        .unwrap();
        assert_eq!(picked, vec!["c3".to_string()]);
    }

    #[test]
    fn max_min_truncates_to_available() {
        let pool = raw_pool(&[
            ("s", vec![0.0]),
            ("c1", vec![1.0]),
            ("c2", vec![2.0]),
            ("c3", vec![3.0]),
        ]);
        let picked = max_min_retrieve(
            &["c1".into(), "c2".into(), "c3".into()],
            &["s".into()],
            &pool,
            5,
        )
        .unwrap();
        assert_eq!(
            picked,
            vec!["c3".to_string(), "c2".to_string(), "c1".to_string()]
        );
    }

    #[test]
    fn max_min_uses_minimum_over_selected() {
        let pool = raw_pool(&[
            ("s1", vec![0.0, 0.0]),
            ("s2", vec![10.0, 0.0]),
            ("mid", vec![5.0, 0.0]),
            ("left", vec![-4.0, 0.0]),
        ]);
        let picked = max_min_retrieve(
            &["mid".into(), "left".into()],
            &["s1".into(), "s2".into()],
            &pool,
            1,
        )
        .unwrap();
        // min-distances: mid = 5, left = 4
        assert_eq!(picked, vec!["mid".to_string()]);
    }

    #[test]
    fn empty_selected_falls_back_to_smallest_ids() {
        let pool = raw_pool(&[("b", vec![0.0]), ("a", vec![1.0]), ("c", vec![2.0])]);
        let picked =
            max_min_retrieve(&["b".into(), "a".into(), "c".into()], &[], &pool, 2).unwrap();
        assert_eq!(picked, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn missing_embedding_is_an_error() {
        let questions = vec![
            Question {
                id: "has".into(),
                text: String::new(),
                image_ref: None,
                options: None,
                answer_key: None,
                category: None,
                embedding: Some(vec![1.0]),
                difficulty: None,
            },
            Question {
                id: "lacks".into(),
                text: String::new(),
                image_ref: None,
                options: None,
                answer_key: None,
                category: None,
                embedding: None,
                difficulty: None,
            },
        ];
        let pool = QuestionPool::from_questions(questions).unwrap();
        let err = max_min_retrieve(&["lacks".into()], &["has".into()], &pool, 1).unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding { .. }));
    }

    /// Brute-force evaluation of the max-min objective.
    fn brute_force_max_min(
        candidates: &[String],
        selected: &[String],
        pool: &QuestionPool,
        top_n: usize,
    ) -> Vec<String> {
        let mut scored: Vec<(String, f64)> = candidates
            .iter()
            .map(|c| {
                let ce = pool.embedding(c).unwrap();
                let s = selected
                    .iter()
                    .map(|s| euclidean(ce, pool.embedding(s).unwrap()).unwrap())
                    .fold(f64::INFINITY, f64::min);
                (c.clone(), s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.into_iter().take(top_n).map(|(id, _)| id).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn max_min_matches_brute_force(
            coords in proptest::collection::vec((-50i32..50, -50i32..50), 6..60),
            n_selected in 1usize..4,
            top_n in 1usize..7,
        ) {
            let named: Vec<(String, Vec<f64>)> = coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| (format!("q{i:03}"), vec![x as f64, y as f64]))
                .collect();
            let refs: Vec<(&str, Vec<f64>)> =
                named.iter().map(|(n, e)| (n.as_str(), e.clone())).collect();
            let pool = raw_pool(&refs);
            let selected: Vec<String> =
                named.iter().take(n_selected).map(|(n, _)| n.clone()).collect();
            let candidates: Vec<String> =
                named.iter().skip(n_selected).map(|(n, _)| n.clone()).collect();
            prop_assume!(!candidates.is_empty());
            let got = max_min_retrieve(&candidates, &selected, &pool, top_n).unwrap();
            let want = brute_force_max_min(&candidates, &selected, &pool, top_n);
            prop_assert_eq!(got, want);
        }

        /// Shuffling pool file order never changes the selected id set when
        /// scores are distinct.
        #[test]
        fn max_min_invariant_under_pool_order(
            mut coords in proptest::collection::vec(-1000i32..1000, 8..30),
        ) {
            coords.sort_unstable();
            coords.dedup();
            prop_assume!(coords.len() >= 5);
            let named: Vec<(String, Vec<f64>)> = coords
                .iter()
                .enumerate()
                .map(|(i, &x)| (format!("q{i:02}"), vec![x as f64]))
                .collect();
            let forward: Vec<(&str, Vec<f64>)> =
                named.iter().map(|(n, e)| (n.as_str(), e.clone())).collect();
            let mut reversed = forward.clone();
            reversed.reverse();
            let selected = vec![named[0].0.clone()];
            let candidates: Vec<String> = named[1..].iter().map(|(n, _)| n.clone()).collect();
            let a = max_min_retrieve(&candidates, &selected, &raw_pool(&forward), 3).unwrap();
            let b = max_min_retrieve(&candidates, &selected, &raw_pool(&reversed), 3).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
