//! Re-identification retrieval metrics (CMC and mAP).
//!
//! Gallery entries sharing both pid and camera with the query are removed
//! before ranking. Queries left without any same-pid gallery entry do not
//! count. AP is the mean of precision at each relevant rank.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::{FeatureSet, LabeledFeatures};

/// Borrowed features plus labels for one side of a retrieval run.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalSet<'a, T> {
    pub features: ArrayView2<'a, T>,
    pub pids: &'a [u32],
    pub camids: &'a [u32],
}

impl<'a> From<&'a FeatureSet> for RetrievalSet<'a, f32> {
    fn from(fs: &'a FeatureSet) -> Self {
        RetrievalSet {
            features: fs.features(),
            pids: fs.pids(),
            camids: fs.camids(),
        }
    }
}

impl<'a> From<&'a LabeledFeatures> for RetrievalSet<'a, f32> {
    fn from(lf: &'a LabeledFeatures) -> Self {
        RetrievalSet {
            features: lf.features.view(),
            pids: &lf.pids,
            camids: &lf.camids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub map: f64,
    /// `cmc[r - 1]` is the fraction of valid queries matched within rank `r`.
    pub cmc: Vec<f64>,
    pub num_valid_queries: usize,
}

impl RetrievalResult {
    pub fn rank1(&self) -> f64 {
        self.cmc[0]
    }
}

fn distance<T: Copy + Into<f64>>(
    a: ndarray::ArrayView1<'_, T>,
    b: ndarray::ArrayView1<'_, T>,
) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `(rank of first match, average precision)` for one query, or `None` if
/// the query has no valid match.
fn score_query<T: Copy + Into<f64>>(
    q: usize,
    query: &RetrievalSet<'_, T>,
    gallery: &RetrievalSet<'_, T>,
) -> Option<(usize, f64)> {
    let (qp, qc) = (query.pids[q], query.camids[q]);
    let mut ranked: Vec<(f64, usize)> = (0..gallery.pids.len())
        .filter(|&g| !(gallery.pids[g] == qp && gallery.camids[g] == qc))
        .map(|g| (distance(query.features.row(q), gallery.features.row(g)), g))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut first = None;
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (pos, &(_, g)) in ranked.iter().enumerate() {
        if gallery.pids[g] == qp {
            hits += 1;
            precision_sum += hits as f64 / (pos + 1) as f64;
            first.get_or_insert(pos + 1);
        }
    }
    first.map(|r| (r, precision_sum / hits as f64))
}

pub fn evaluate_retrieval<'q, 'g, T>(
    query: RetrievalSet<'q, T>,
    gallery: RetrievalSet<'g, T>,
    max_rank: usize,
) -> Result<RetrievalResult>
where
    T: Copy + Into<f64> + Sync,
{
    if gallery.pids.is_empty() {
        return Err(Error::InvalidInput("empty gallery".into()));
    }
    if max_rank < 1 {
        return Err(Error::InvalidInput("max rank must be at least 1".into()));
    }
    if query.features.ncols() != gallery.features.ncols() {
        return Err(Error::InvalidInput(format!(
            "query dim {} differs from gallery dim {}",
            query.features.ncols(),
            gallery.features.ncols()
        )));
    }
    let consistent = |rows: usize, pids: &[u32], camids: &[u32]| {
        rows == pids.len() && pids.len() == camids.len()
    };
    if !consistent(query.features.nrows(), query.pids, query.camids)
        || !consistent(gallery.features.nrows(), gallery.pids, gallery.camids)
    {
        return Err(Error::InvalidInput(
            "features and labels differ in length".into(),
        ));
    }

    let scored: Vec<Option<(usize, f64)>> = (0..query.pids.len())
        .into_par_iter()
        .map(|q| score_query(q, &query, &gallery))
        .collect();

    let mut matched_at = vec![0usize; max_rank];
    let mut ap_sum = 0.0;
    let mut valid = 0usize;
    for (first, ap) in scored.into_iter().flatten() {
        valid += 1;
        ap_sum += ap;
        if first <= max_rank {
            matched_at[first - 1] += 1;
        }
    }
    if valid == 0 {
        return Err(Error::NoValidQueries);
    }
    let mut cum = 0usize;
    let cmc = matched_at
        .into_iter()
        .map(|c| {
            cum += c;
            cum as f64 / valid as f64
        })
        .collect();
    Ok(RetrievalResult {
        map: ap_sum / valid as f64,
        cmc,
        num_valid_queries: valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate, Array2, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set<'a>(f: &'a Array2<f64>, p: &'a [u32], c: &'a [u32]) -> RetrievalSet<'a, f64> {
        RetrievalSet {
            features: f.view(),
            pids: p,
            camids: c,
        }
    }

    #[test]
    fn perfect_duplicates_score_one() {
        let q = array![[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]];
        let qp = [0, 1, 2];
        let qc = [0, 0, 0];
        let gc = [1, 1, 1];
        let r = evaluate_retrieval(set(&q, &qp, &qc), set(&q, &qp, &gc), 3).unwrap();
        assert_eq!(r.cmc, vec![1.0, 1.0, 1.0]);
        assert_eq!(r.map, 1.0);
        assert_eq!(r.num_valid_queries, 3);
    }

    #[test]
    fn same_camera_match_is_excluded() {
        let q = array![[0.0]];
        let g = array![[0.0], [3.0]];
        let r = evaluate_retrieval(set(&q, &[0], &[0]), set(&g, &[0, 1], &[0, 0]), 1);
        assert!(matches!(r, Err(Error::NoValidQueries)));
    }

    #[test]
    fn rejects_empty_gallery_and_zero_rank() {
        let q = array![[0.0]];
        let g = Array2::<f64>::zeros((0, 1));
        assert!(evaluate_retrieval(set(&q, &[0], &[0]), set(&g, &[], &[]), 1).is_err());
        let g = array![[0.0]];
        assert!(evaluate_retrieval(set(&q, &[0], &[0]), set(&g, &[0], &[1]), 0).is_err());
    }

    #[test]
    fn hand_computed_ap() {
        // Ranked gallery: pid 0 (hit), pid 1, pid 0 (hit) → AP = (1 + 2/3) / 2.
        let q = array![[0.0]];
        let g = array![[1.0], [2.0], [3.0]];
        let r =
            evaluate_retrieval(set(&q, &[0], &[0]), set(&g, &[0, 1, 0], &[1, 1, 1]), 2).unwrap();
        assert!((r.map - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(r.cmc, vec![1.0, 1.0]);
    }

    /// AP and first-hit rank by counting predecessors, no sorting.
    fn oracle(
        q: &Array2<f64>,
        qp: &[u32],
        qc: &[u32],
        g: &Array2<f64>,
        gp: &[u32],
        gc: &[u32],
        max_rank: usize,
    ) -> Option<RetrievalResult> {
        let mut cmc = vec![0.0; max_rank];
        let mut aps = Vec::new();
        for i in 0..qp.len() {
            let valid: Vec<usize> = (0..gp.len())
                .filter(|&j| !(gp[j] == qp[i] && gc[j] == qc[i]))
                .collect();
            let d = |j: usize| -> f64 {
                (0..q.ncols())
                    .map(|c| (q[[i, c]] - g[[j, c]]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let rank = |j: usize| -> usize {
                1 + valid
                    .iter()
                    .filter(|&&o| d(o) < d(j) || (d(o) == d(j) && o < j))
                    .count()
            };
            let rel: Vec<usize> = valid.iter().copied().filter(|&j| gp[j] == qp[i]).collect();
            if rel.is_empty() {
                continue;
            }
            let mut ranks: Vec<usize> = rel.iter().map(|&j| rank(j)).collect();
            ranks.sort_unstable();
            let ap = ranks
                .iter()
                .map(|&r| ranks.iter().filter(|&&o| o <= r).count() as f64 / r as f64)
                .sum::<f64>()
                / ranks.len() as f64;
            aps.push(ap);
            let first = *ranks.iter().min().unwrap();
            for (r, slot) in cmc.iter_mut().enumerate() {
                if first <= r + 1 {
                    *slot += 1.0;
                }
            }
        }
        if aps.is_empty() {
            return None;
        }
        let n = aps.len() as f64;
        Some(RetrievalResult {
            map: aps.iter().sum::<f64>() / n,
            cmc: cmc.into_iter().map(|c| c / n).collect(),
            num_valid_queries: aps.len(),
        })
    }

    #[test]
    fn matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let nq = rng.random_range(1..=20usize);
            let ng = rng.random_range(1..=50usize);
            let q = Array2::from_shape_fn((nq, 3), |_| rng.random_range(-1.0..1.0));
            let g = Array2::from_shape_fn((ng, 3), |_| rng.random_range(-1.0..1.0));
            let qp: Vec<u32> = (0..nq).map(|_| rng.random_range(0..6)).collect();
            let gp: Vec<u32> = (0..ng).map(|_| rng.random_range(0..8)).collect();
            let qc: Vec<u32> = (0..nq).map(|_| rng.random_range(0..3)).collect();
            let gc: Vec<u32> = (0..ng).map(|_| rng.random_range(0..3)).collect();
            let got = evaluate_retrieval(set(&q, &qp, &qc), set(&g, &gp, &gc), 10);
            match oracle(&q, &qp, &qc, &g, &gp, &gc, 10) {
                Some(want) => assert_eq!(got.unwrap(), want),
                None => assert!(matches!(got, Err(Error::NoValidQueries))),
            }
        }
    }

    #[test]
    fn distractors_and_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0));
        let g = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
        let qp: Vec<u32> = (0..10).map(|i| i % 5).collect();
        let gp: Vec<u32> = (0..30).map(|i| i % 5).collect();
        let qc = vec![0u32; 10];
        let gc = vec![1u32; 30];
        let base = evaluate_retrieval(set(&q, &qp, &qc), set(&g, &gp, &gc), 5).unwrap();

        // A distractor identity never raises mAP.
        for _ in 0..10 {
            let extra = Array2::from_shape_fn((1, 4), |_| rng.random_range(-1.0..1.0));
            let g2 = concatenate![Axis(0), g, extra];
            let mut gp2 = gp.clone();
            gp2.push(99);
            let mut gc2 = gc.clone();
            gc2.push(1);
            let r = evaluate_retrieval(set(&q, &qp, &qc), set(&g2, &gp2, &gc2), 5).unwrap();
            assert!(r.map <= base.map);
        }

        // Duplicating the gallery under new cameras keeps rank-1.
        let g3 = concatenate![Axis(0), g, g];
        let gp3: Vec<u32> = gp.iter().chain(&gp).copied().collect();
        let gc3: Vec<u32> = gc
            .iter()
            .copied()
            .chain(std::iter::repeat_n(2, 30))
            .collect();
        let r = evaluate_retrieval(set(&q, &qp, &qc), set(&g3, &gp3, &gc3), 5).unwrap();
        assert_eq!(r.cmc[0], base.cmc[0]);

        // Permuting the gallery leaves mAP unchanged (distances are distinct).
        let perm: Vec<usize> = (0..30).rev().collect();
        let g4 = g.select(Axis(0), &perm);
        let gp4: Vec<u32> = perm.iter().map(|&i| gp[i]).collect();
        let r = evaluate_retrieval(set(&q, &qp, &qc), set(&g4, &gp4, &gc), 5).unwrap();
        assert!((r.map - base.map).abs() < 1e-12);
    }

    #[test]
    fn cmc_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = Array2::from_shape_fn((15, 2), |_| rng.random_range(-1.0..1.0));
        let g = Array2::from_shape_fn((40, 2), |_| rng.random_range(-1.0..1.0));
        let qp: Vec<u32> = (0..15).map(|i| i % 4).collect();
        let gp: Vec<u32> = (0..40).map(|i| i % 4).collect();
        let r = evaluate_retrieval(set(&q, &qp, &[0; 15]), set(&g, &gp, &[1; 40]), 20).unwrap();
        assert!(r.cmc.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.cmc.iter().all(|c| (0.0..=1.0).contains(c)));
        assert!((0.0..=1.0).contains(&r.map));
    }
}
