//! Class representatives and the pairwise class distance matrix.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::{write_matrix, ClassIndex, FeatureSet};

/// Where class representatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentativeMode {
    /// One externally supplied feature per class, fixed for the whole run.
    Prototype,
    /// Mean of the class's (current) sample features.
    ImageCentroid,
}

impl std::str::FromStr for RepresentativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prototype" => Ok(RepresentativeMode::Prototype),
            "image-centroid" | "image_centroid" => Ok(RepresentativeMode::ImageCentroid),
            other => Err(Error::InvalidConfig(format!(
                "unknown representative mode {other:?}"
            ))),
        }
    }
}

/// Symmetric N×N Euclidean distances with `+inf` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    /// Wraps an explicit matrix, checking the symmetry and diagonal rules.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || r < 2 {
            return Err(Error::InvalidInput(format!(
                "distance matrix must be square with n >= 2, got {r}x{c}"
            )));
        }
        for i in 0..r {
            if values[[i, i]] != f64::INFINITY {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry {i} is not +inf"
                )));
            }
            for j in (i + 1)..r {
                let v = values[[i, j]];
                if !(v.is_finite() && v >= 0.0) || v.to_bits() != values[[j, i]].to_bits() {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i},{j}) must be finite, non-negative and mirrored"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Dumps the matrix in the `.feat` layout; the diagonal is stored as the
    /// `f32` +infinity bit pattern.
    pub fn dump(&self, path: &Path) -> Result<()> {
        write_matrix(path, self.values.mapv(|v| v as f32).view())
    }
}

/// Per-class arithmetic mean of `rows`, grouped by `idx`.
pub fn class_centroids<T>(rows: ArrayView2<'_, T>, idx: &ClassIndex) -> Result<Array2<f64>>
where
    T: Copy + Into<f64>,
{
    let dim = rows.ncols();
    let mut out = Array2::<f64>::zeros((idx.num_ids(), dim));
    for (pid, members) in idx.by_pid().iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyClass(pid as u32));
        }
        let mut acc = out.row_mut(pid);
        for &r in members {
            for (a, &v) in acc.iter_mut().zip(rows.row(r)) {
                *a += v.into();
            }
        }
        acc.mapv_inplace(|v| v / members.len() as f64);
    }
    Ok(out)
}

pub fn class_representatives(
    fs: &FeatureSet,
    idx: &ClassIndex,
    mode: RepresentativeMode,
    prototypes: Option<ArrayView2<'_, f32>>,
) -> Result<Array2<f64>> {
    match (mode, prototypes) {
        (RepresentativeMode::Prototype, Some(p)) => {
            if p.nrows() != idx.num_ids() {
                return Err(Error::InvalidInput(format!(
                    "prototype matrix has {} rows, expected {}",
                    p.nrows(),
                    idx.num_ids()
                )));
            }
            Ok(p.mapv(f64::from))
        }
        (RepresentativeMode::Prototype, None) => Err(Error::InvalidInput(
            "prototype mode requires a prototype matrix".into(),
        )),
        (RepresentativeMode::ImageCentroid, Some(_)) => Err(Error::InvalidInput(
            "image-centroid mode does not take prototypes".into(),
        )),
        (RepresentativeMode::ImageCentroid, None) => class_centroids(fs.features(), idx),
    }
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn pairwise_distance(reps: ArrayView2<'_, f64>) -> Result<DistanceMatrix> {
    let n = reps.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 representatives, got {n}"
        )));
    }
    if reps.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite representative entry".into(),
        ));
    }
    // Each unordered pair is evaluated once (in row i) and mirrored.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| euclidean(reps.row(i), reps.row(j)))
                .collect()
        })
        .collect();
    let mut values = Array2::from_elem((n, n), f64::INFINITY);
    for (i, row) in upper.into_iter().enumerate() {
        for (off, d) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    Ok(DistanceMatrix { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurestore::build_class_index;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_four_five() {
        let dm = pairwise_distance(array![[0.0, 0.0], [3.0, 4.0]].view()).unwrap();
        assert_eq!(dm.get(0, 1), 5.0);
        assert_eq!(dm.get(1, 0), 5.0);
        assert_eq!(dm.get(0, 0), f64::INFINITY);
        assert_eq!(dm.get(1, 1), f64::INFINITY);
    }

    #[test]
    fn identical_rows_keep_infinite_diagonal() {
        let dm = pairwise_distance(array![[1.0, 2.0], [1.0, 2.0]].view()).unwrap();
        assert_eq!(dm.get(0, 1), 0.0);
        assert_eq!(dm.get(0, 0), f64::INFINITY);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(pairwise_distance(array![[1.0, 2.0]].view()).is_err());
        assert!(pairwise_distance(array![[1.0], [f64::NAN]].view()).is_err());
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let reps = Array2::from_shape_fn((16, 8), |_| rng.random_range(-5.0..5.0));
        let dm = pairwise_distance(reps.view()).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if i == j {
                    continue;
                }
                let mut acc = 0.0f64;
                for d in 0..8 {
                    let diff = reps[[i, d]] - reps[[j, d]];
                    acc += diff * diff;
                }
                let want = acc.sqrt();
                assert!((dm.get(i, j) - want).abs() <= 1e-6 * want.max(1e-12));
            }
        }
    }

    #[test]
    fn centroid_and_prototype_modes() {
        let fs = FeatureSet::new(
            array![[1.0f32, 1.0], [3.0, 3.0], [0.0, 5.0]],
            vec![0, 0, 1],
            vec![0, 1, 0],
        )
        .unwrap();
        let idx = build_class_index(&fs);
        let reps =
            class_representatives(&fs, &idx, RepresentativeMode::ImageCentroid, None).unwrap();
        assert_eq!(reps.row(0).to_vec(), vec![2.0, 2.0]);
        assert_eq!(reps.row(1).to_vec(), vec![0.0, 5.0]);

        let protos = array![[9.0f32, 8.0, 7.0], [6.0, 5.0, 4.0]];
        let got = class_representatives(
            &fs,
            &idx,
            RepresentativeMode::Prototype,
            Some(protos.view()),
        )
        .unwrap();
        assert_eq!(got, protos.mapv(f64::from));

        let short = array![[1.0f32]];
        assert!(class_representatives(
            &fs,
            &idx,
            RepresentativeMode::Prototype,
            Some(short.view())
        )
        .is_err());
    }

    #[test]
    fn centroid_matches_brute_force_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = 40;
        let pids: Vec<u32> = (0..s).map(|i| (i % 7) as u32).collect();
        let feats = Array2::from_shape_fn((s, 5), |_| rng.random_range(-3.0f32..3.0));
        let fs = FeatureSet::new(feats, pids, vec![0; s]).unwrap();
        let idx = build_class_index(&fs);
        let reps =
            class_representatives(&fs, &idx, RepresentativeMode::ImageCentroid, None).unwrap();
        for p in 0..7u32 {
            for d in 0..5 {
                let vals: Vec<f64> = (0..s)
                    .filter(|&i| fs.pids()[i] == p)
                    .map(|i| fs.features()[[i, d]] as f64)
                    .collect();
                let want = vals.iter().sum::<f64>() / vals.len() as f64;
                let got = reps[[p as usize, d]];
                assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn dump_encodes_infinity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.feat");
        let dm = pairwise_distance(array![[0.0, 0.0], [3.0, 4.0]].view()).unwrap();
        dm.dump(&path).unwrap();
        let back = crate::featurestore::read_matrix(&path).unwrap();
        assert_eq!(back[[0, 0]].to_bits(), f32::INFINITY.to_bits());
        assert_eq!(back[[0, 1]], 5.0);
    }

    fn arb_reps() -> impl Strategy<Value = Array2<f64>> {
        (2usize..10, 1usize..6).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-100.0f64..100.0, n * d)
                .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_metric(reps in arb_reps()) {
            let dm = pairwise_distance(reps.view()).unwrap();
            let n = dm.n();
            for i in 0..n {
                prop_assert_eq!(dm.get(i, i), f64::INFINITY);
                for j in 0..n {
                    if i == j { continue; }
                    prop_assert_eq!(dm.get(i, j).to_bits(), dm.get(j, i).to_bits());
                    prop_assert!(dm.get(i, j) >= 0.0 && dm.get(i, j).is_finite());
                    for k in 0..n {
                        if k == i || k == j { continue; }
                        prop_assert!(dm.get(i, j) <= dm.get(i, k) + dm.get(k, j) + 1e-5);
                    }
                }
            }
        }

        #[test]
        fn translation_invariant(reps in arb_reps(), shift in -50.0f64..50.0) {
            let a = pairwise_distance(reps.view()).unwrap();
            let b = pairwise_distance(reps.mapv(|v| v + shift).view()).unwrap();
            for i in 0..a.n() {
                for j in 0..a.n() {
                    if i == j { continue; }
                    let (x, y) = (a.get(i, j), b.get(i, j));
                    prop_assert!((x - y).abs() <= 1e-6 * x.max(1.0));
                }
            }
        }
    }
}
