//! How hard are the mined batches?
//!
//! Per anchor, the batch-hard triplet terms are the farthest same-pid
//! sample (`d_p`) and the nearest other-pid sample (`d_n`), with hinge
//! loss `max(d_p - d_n + margin, 0)`. Epoch diversity compares the class
//! groupings of consecutive epochs.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::FeatureSet;
use crate::samplers::EpochPlan;

pub const DEFAULT_MARGIN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchHardness {
    pub mean_hardest_negative_distance: f64,
    pub mean_hardest_positive_distance: f64,
    pub active_triplet_fraction: f64,
    pub batch_hard_loss: f64,
}

impl BatchHardness {
    fn mean_of(records: &[BatchHardness]) -> BatchHardness {
        let n = records.len() as f64;
        let sum = |f: fn(&BatchHardness) -> f64| records.iter().map(f).sum::<f64>() / n;
        BatchHardness {
            mean_hardest_negative_distance: sum(|r| r.mean_hardest_negative_distance),
            mean_hardest_positive_distance: sum(|r| r.mean_hardest_positive_distance),
            active_triplet_fraction: sum(|r| r.active_triplet_fraction),
            batch_hard_loss: sum(|r| r.batch_hard_loss),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessReport {
    pub per_batch: Vec<BatchHardness>,
    pub epoch_mean: BatchHardness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityStat {
    pub mean_consecutive_jaccard: f64,
}

/// Hardest positive and negative of one anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MinedTriplet {
    pub positive: usize,
    pub negative: usize,
    pub d_p: f64,
    pub d_n: f64,
}

pub(crate) fn pairwise_euclidean(rows: ArrayView2<'_, f64>) -> Array2<f64> {
    let b = rows.nrows();
    let mut dist = Array2::<f64>::zeros((b, b));
    for i in 0..b {
        for j in (i + 1)..b {
            let d = rows
                .row(i)
                .iter()
                .zip(rows.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    dist
}

pub(crate) fn check_batch_labels(pids: &[u32]) -> Result<()> {
    let mut counts = BTreeMap::new();
    for &p in pids {
        *counts.entry(p).or_insert(0usize) += 1;
    }
    if let Some((&pid, &count)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::DegenerateBatch { pid, count });
    }
    if counts.len() < 2 {
        return Err(Error::InvalidInput(
            "batch needs at least two identities to form negatives".into(),
        ));
    }
    Ok(())
}

/// Batch-hard mining over a precomputed distance matrix. Ties go to the
/// lowest index.
pub(crate) fn mine_batch_hard(dist: &Array2<f64>, pids: &[u32]) -> Vec<MinedTriplet> {
    (0..pids.len())
        .map(|a| {
            let mut pos = (usize::MAX, f64::NEG_INFINITY);
            let mut neg = (usize::MAX, f64::INFINITY);
            for j in 0..pids.len() {
                if j == a {
                    continue;
                }
                let d = dist[[a, j]];
                if pids[j] == pids[a] {
                    if d > pos.1 {
                        pos = (j, d);
                    }
                } else if d < neg.1 {
                    neg = (j, d);
                }
            }
            MinedTriplet {
                positive: pos.0,
                negative: neg.0,
                d_p: pos.1,
                d_n: neg.1,
            }
        })
        .collect()
}

pub fn batch_hardness(
    embeddings: ArrayView2<'_, f64>,
    pids: &[u32],
    margin: f64,
) -> Result<BatchHardness> {
    if embeddings.nrows() != pids.len() {
        return Err(Error::InvalidInput(format!(
            "{} embeddings but {} labels",
            embeddings.nrows(),
            pids.len()
        )));
    }
    check_batch_labels(pids)?;
    let dist = pairwise_euclidean(embeddings);
    let mined = mine_batch_hard(&dist, pids);
    let b = mined.len() as f64;
    let mut out = BatchHardness {
        mean_hardest_negative_distance: 0.0,
        mean_hardest_positive_distance: 0.0,
        active_triplet_fraction: 0.0,
        batch_hard_loss: 0.0,
    };
    for t in &mined {
        let loss = (t.d_p - t.d_n + margin).max(0.0);
        out.mean_hardest_negative_distance += t.d_n;
        out.mean_hardest_positive_distance += t.d_p;
        out.batch_hard_loss += loss;
        if loss > 0.0 {
            out.active_triplet_fraction += 1.0;
        }
    }
    out.mean_hardest_negative_distance /= b;
    out.mean_hardest_positive_distance /= b;
    out.batch_hard_loss /= b;
    out.active_triplet_fraction /= b;
    Ok(out)
}

pub fn epoch_hardness(fs: &FeatureSet, plan: &EpochPlan, margin: f64) -> Result<HardnessReport> {
    if plan.batches.is_empty() {
        return Err(Error::InvalidInput("plan has no batches".into()));
    }
    let feats = fs.features();
    let per_batch = plan
        .batches
        .par_iter()
        .map(|batch| {
            if let Some(&bad) = batch.iter().find(|&&i| i >= fs.num_samples()) {
                return Err(Error::InvalidInput(format!("sample {bad} out of range")));
            }
            let rows = Array2::from_shape_fn((batch.len(), fs.dim()), |(r, c)| {
                f64::from(feats[[batch[r], c]])
            });
            let labels: Vec<u32> = batch.iter().map(|&i| fs.pids()[i]).collect();
            batch_hardness(rows.view(), &labels, margin)
        })
        .collect::<Result<Vec<_>>>()?;
    let epoch_mean = BatchHardness::mean_of(&per_batch);
    Ok(HardnessReport {
        per_batch,
        epoch_mean,
    })
}

fn jaccard(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy maximum-Jaccard matching between the batches of two plans;
/// returns the mean of the matched values. Among equal values the pair
/// with the lowest `(i, j)` wins.
pub fn greedy_matched_jaccard(a: &[BTreeSet<u32>], b: &[BTreeSet<u32>]) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push((jaccard(x, y), i, j));
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut total = 0.0;
    let mut matched = 0usize;
    for (v, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            total += v;
            matched += 1;
        }
    }
    if matched == 0 {
        0.0
    } else {
        total / matched as f64
    }
}

/// Mean over consecutive plan pairs of their greedily matched batch
/// Jaccard similarity (on pid sets). `pids` labels the samples the plans
/// index into.
pub fn epoch_diversity(plans: &[EpochPlan], pids: &[u32]) -> Result<DiversityStat> {
    if plans.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "diversity needs at least 2 plans, got {}",
            plans.len()
        )));
    }
    let sets: Vec<Vec<BTreeSet<u32>>> = plans
        .iter()
        .map(|p| {
            p.batches
                .iter()
                .map(|b| b.iter().map(|&i| pids[i]).collect())
                .collect()
        })
        .collect();
    if sets.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput("a plan has no batches".into()));
    }
    let total: f64 = sets
        .windows(2)
        .map(|w| greedy_matched_jaccard(&w[0], &w[1]))
        .sum();
    Ok(DiversityStat {
        mean_consecutive_jaccard: total / (sets.len() - 1) as f64,
    })
}
