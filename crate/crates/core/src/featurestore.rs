//! Labeled feature sets: persistence, identity/camera indexing, and a
//! synthetic generator with built-in hard samples.
//!
//! On disk a feature set is a pair of files sharing a stem:
//!
//! - `<stem>.feat`: magic `FEAT1\0`, `u32` LE rows, `u32` LE cols, then
//!   rows·cols `f32` LE values in row-major order.
//! - `<stem>.meta.csv`: header `sample_id,pid,camid`, one row per sample,
//!   `sample_id` strictly ascending from 0.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEAT_MAGIC: &[u8; 6] = b"FEAT1\0";
const HEADER_LEN: usize = 6 + 4 + 4;

/// Features with identity and camera labels whose pids form `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Array2<f32>,
    pids: Vec<u32>,
    camids: Vec<u32>,
    num_ids: usize,
}

impl FeatureSet {
    pub fn new(features: Array2<f32>, pids: Vec<u32>, camids: Vec<u32>) -> Result<Self> {
        let raw = LabeledFeatures::new(features, pids, camids)?;
        let num_ids = contiguous_id_count(&raw.pids)?;
        Ok(FeatureSet {
            features: raw.features,
            pids: raw.pids,
            camids: raw.camids,
            num_ids,
        })
    }

    /// Builds a feature set from arbitrary pid labels, remapping them to
    /// `0..N` in ascending label order. Returns the mapping new pid → label.
    pub fn from_raw_labels(
        features: Array2<f32>,
        pids: &[u32],
        camids: Vec<u32>,
    ) -> Result<(Self, Vec<u32>)> {
        let (dense, mapping) = remap_labels(pids);
        Ok((Self::new(features, dense, camids)?, mapping))
    }

    /// Rows at `indices`, in that order, with pids remapped to `0..N'`.
    pub fn subset(&self, indices: &[usize]) -> Result<(Self, Vec<u32>)> {
        let features = self.features.select(Axis(0), indices);
        let pids: Vec<u32> = indices.iter().map(|&i| self.pids[i]).collect();
        let camids = indices.iter().map(|&i| self.camids[i]).collect();
        Self::from_raw_labels(features, &pids, camids)
    }

    pub fn features(&self) -> ArrayView2<'_, f32> {
        self.features.view()
    }

    pub fn pids(&self) -> &[u32] {
        &self.pids
    }

    pub fn camids(&self) -> &[u32] {
        &self.camids
    }

    pub fn num_samples(&self) -> usize {
        self.pids.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_ids(&self) -> usize {
        self.num_ids
    }

    pub fn into_labeled(self) -> LabeledFeatures {
        LabeledFeatures {
            features: self.features,
            pids: self.pids,
            camids: self.camids,
        }
    }
}

/// Features with labels but no contiguity requirement on pids. Retrieval
/// galleries with distractor identities are the main user.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: Array2<f32>,
    pub pids: Vec<u32>,
    pub camids: Vec<u32>,
}

impl LabeledFeatures {
    pub fn new(features: Array2<f32>, pids: Vec<u32>, camids: Vec<u32>) -> Result<Self> {
        let (rows, cols) = features.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidFeatureSet(format!(
                "need at least one row and one column, got {rows}x{cols}"
            )));
        }
        if pids.len() != rows || camids.len() != rows {
            return Err(Error::RowCountMismatch {
                matrix: rows,
                meta: if pids.len() != rows {
                    pids.len()
                } else {
                    camids.len()
                },
            });
        }
        if let Some(((r, c), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidFeatureSet(format!(
                "non-finite value {v} at row {r}, column {c}"
            )));
        }
        Ok(LabeledFeatures {
            features,
            pids,
            camids,
        })
    }

    pub fn into_feature_set(self) -> Result<FeatureSet> {
        FeatureSet::new(self.features, self.pids, self.camids)
    }
}

fn contiguous_id_count(pids: &[u32]) -> Result<usize> {
    let max = pids.iter().copied().max().unwrap_or(0) as usize;
    let mut seen = vec![false; max + 1];
    for &p in pids {
        seen[p as usize] = true;
    }
    let num_ids = seen.iter().filter(|&&s| s).count();
    if num_ids != max + 1 {
        // The largest pid lies outside 0..num_ids whenever there is a gap.
        return Err(Error::NonContiguousPid {
            pid: max as u32,
            num_ids,
        });
    }
    Ok(num_ids)
}

/// Maps arbitrary labels onto `0..N` preserving their ascending order.
/// Returns the dense labels and the mapping dense → original.
pub fn remap_labels(labels: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut distinct: Vec<u32> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let lookup: BTreeMap<u32, u32> = distinct
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i as u32))
        .collect();
    (labels.iter().map(|l| lookup[l]).collect(), distinct)
}

/// Resolves the `.feat` / `.meta.csv` pair for a path given either as the
/// `.feat` file itself or as the bare stem.
pub fn feature_paths(path: &Path) -> Result<(PathBuf, PathBuf)> {
    if path.as_os_str().is_empty() {
        return Err(Error::InvalidInput("empty feature path".into()));
    }
    let stem: OsString = if path.extension().is_some_and(|e| e == "feat") {
        path.with_extension("").into_os_string()
    } else {
        path.as_os_str().to_owned()
    };
    let mut feat = stem.clone();
    feat.push(".feat");
    let mut meta = stem;
    meta.push(".meta.csv");
    Ok((feat.into(), meta.into()))
}

/// Writes a bare matrix in the `.feat` binary layout.
pub fn write_matrix(path: &Path, matrix: ArrayView2<'_, f32>) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::InvalidInput("empty matrix path".into()));
    }
    let (rows, cols) = matrix.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * rows * cols);
    buf.extend_from_slice(FEAT_MAGIC);
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in matrix.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a bare matrix in the `.feat` binary layout.
pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..6] != FEAT_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows * cols * 4;
    if payload.len() != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape checked above"))
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaRow {
    sample_id: usize,
    pid: u32,
    camid: u32,
}

fn read_metadata(path: &Path) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Metadata(format!("{}: {other:?}", path.display())),
    })?;
    let header = reader
        .headers()
        .map_err(|e| Error::Metadata(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["sample_id", "pid", "camid"] {
        return Err(Error::Metadata(format!(
            "{}: expected header sample_id,pid,camid",
            path.display()
        )));
    }
    let mut pids = Vec::new();
    let mut camids = Vec::new();
    for (i, row) in reader.deserialize::<MetaRow>().enumerate() {
        let row = row.map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))?;
        if row.sample_id != i {
            return Err(Error::Metadata(format!(
                "{}: sample_id {} at data row {i}, expected {i}",
                path.display(),
                row.sample_id
            )));
        }
        pids.push(row.pid);
        camids.push(row.camid);
    }
    Ok((pids, camids))
}

/// Reads a feature file pair without requiring contiguous pids.
pub fn load_labeled_features(path: &Path) -> Result<LabeledFeatures> {
    let (feat_path, meta_path) = feature_paths(path)?;
    let features = read_matrix(&feat_path)?;
    let (pids, camids) = read_metadata(&meta_path)?;
    if pids.len() != features.nrows() {
        return Err(Error::RowCountMismatch {
            matrix: features.nrows(),
            meta: pids.len(),
        });
    }
    LabeledFeatures::new(features, pids, camids)
}

pub fn load_feature_set(path: &Path) -> Result<FeatureSet> {
    load_labeled_features(path)?.into_feature_set()
}

pub fn write_labeled_features(
    path: &Path,
    features: ArrayView2<'_, f32>,
    pids: &[u32],
    camids: &[u32],
) -> Result<()> {
    let (feat_path, meta_path) = feature_paths(path)?;
    write_matrix(&feat_path, features)?;
    let mut out = String::from("sample_id,pid,camid\n");
    for (i, (p, c)) in pids.iter().zip(camids).enumerate() {
        out.push_str(&format!("{i},{p},{c}\n"));
    }
    let mut file = fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(&meta_path, e))
}

pub fn write_feature_set(fs: &FeatureSet, path: &Path) -> Result<()> {
    write_labeled_features(path, fs.features(), fs.pids(), fs.camids())
}

/// Sample indices grouped by identity and by identity × camera.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    by_pid: Vec<Vec<usize>>,
    cams_of: Vec<BTreeMap<u32, Vec<usize>>>,
}

impl ClassIndex {
    pub fn num_ids(&self) -> usize {
        self.by_pid.len()
    }

    pub fn samples(&self, pid: u32) -> Option<&[usize]> {
        self.by_pid.get(pid as usize).map(Vec::as_slice)
    }

    pub fn cameras(&self, pid: u32) -> Option<&BTreeMap<u32, Vec<usize>>> {
        self.cams_of.get(pid as usize)
    }

    pub fn by_pid(&self) -> &[Vec<usize>] {
        &self.by_pid
    }
}

pub fn build_class_index(fs: &FeatureSet) -> ClassIndex {
    let n = fs.num_ids();
    let mut by_pid = vec![Vec::new(); n];
    let mut cams_of = vec![BTreeMap::new(); n];
    for (i, (&p, &c)) in fs.pids().iter().zip(fs.camids()).enumerate() {
        by_pid[p as usize].push(i);
        cams_of[p as usize]
            .entry(c)
            .or_insert_with(Vec::new)
            .push(i);
    }
    ClassIndex { by_pid, cams_of }
}

/// Parameters of the synthetic identity/camera generator.
///
/// The first `round(twin_fraction * num_ids)` identities are paired as
/// twins `(0,1), (2,3), ...` whose centroids sit exactly `twin_gap` apart;
/// every other centroid is an independent standard normal draw, so typical
/// inter-centroid distances are near `sqrt(2 * dim)`. Each camera adds a
/// fixed bias vector of norm `camera_shift` to every sample it captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_ids: usize,
    pub samples_per_id: usize,
    pub num_cameras: usize,
    pub dim: usize,
    pub twin_fraction: f64,
    pub twin_gap: f64,
    pub camera_shift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_ids: 200,
            samples_per_id: 8,
            num_cameras: 4,
            dim: 64,
            twin_fraction: 0.5,
            twin_gap: 1.0,
            camera_shift: 0.5,
            noise_sigma: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn twin_count(&self) -> usize {
        (self.twin_fraction * self.num_ids as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_ids == 0 || self.samples_per_id == 0 || self.num_cameras == 0 || self.dim == 0 {
            return bad("num_ids, samples_per_id, num_cameras and dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.twin_fraction) {
            return bad(format!(
                "twin_fraction {} outside [0, 1]",
                self.twin_fraction
            ));
        }
        if !(self.twin_gap > 0.0 && self.twin_gap.is_finite()) {
            return bad(format!("twin_gap must be positive, got {}", self.twin_gap));
        }
        if !(self.camera_shift >= 0.0 && self.camera_shift.is_finite()) {
            return bad(format!(
                "camera_shift must be non-negative, got {}",
                self.camera_shift
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            ));
        }
        if !self.twin_count().is_multiple_of(2) {
            return bad(format!(
                "twin_fraction * num_ids rounds to {}, twins need an even count",
                self.twin_count()
            ));
        }
        Ok(())
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| StandardNormal.sample(rng))
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v = gaussian_vector(rng, dim);
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<FeatureSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let twins = cfg.twin_count();

    let mut centroids = Array2::<f64>::zeros((cfg.num_ids, cfg.dim));
    let mut pid = 0;
    while pid < cfg.num_ids {
        let base = gaussian_vector(&mut rng, cfg.dim);
        if pid < twins {
            let offset = unit_vector(&mut rng, cfg.dim) * (cfg.twin_gap / 2.0);
            centroids.row_mut(pid).assign(&(&base + &offset));
            centroids.row_mut(pid + 1).assign(&(&base - &offset));
            pid += 2;
        } else {
            centroids.row_mut(pid).assign(&base);
            pid += 1;
        }
    }

    let biases: Vec<Array1<f64>> = (0..cfg.num_cameras)
        .map(|_| unit_vector(&mut rng, cfg.dim) * cfg.camera_shift)
        .collect();

    let rows = cfg.num_ids * cfg.samples_per_id;
    let mut features = Array2::<f32>::zeros((rows, cfg.dim));
    let mut pids = Vec::with_capacity(rows);
    let mut camids = Vec::with_capacity(rows);
    for p in 0..cfg.num_ids {
        for j in 0..cfg.samples_per_id {
            let cam = j % cfg.num_cameras;
            let row = p * cfg.samples_per_id + j;
            let noise = gaussian_vector(&mut rng, cfg.dim) * cfg.noise_sigma;
            let x = &centroids.row(p) + &biases[cam] + &noise;
            features.row_mut(row).assign(&x.mapv(|v| v as f32));
            pids.push(p as u32);
            camids.push(cam as u32);
        }
    }
    FeatureSet::new(features, pids, camids)
}

/// Pairs of twinned pids produced by [`generate_synthetic`] for `cfg`.
pub fn twin_pairs(cfg: &SynthConfig) -> Vec<(u32, u32)> {
    (0..cfg.twin_count() / 2)
        .map(|i| (2 * i as u32, 2 * i as u32 + 1))
        .collect()
}

/// Pid-disjoint train/holdout partition. `*_labels[i]` is the pid in the
/// source set of dense pid `i` in the subset.
#[derive(Debug, Clone)]
pub struct PidSplit {
    pub train: FeatureSet,
    pub train_labels: Vec<u32>,
    pub holdout: FeatureSet,
    pub holdout_labels: Vec<u32>,
}

/// Number of identities [`split_by_pid`] sends to training.
pub fn train_id_count(num_ids: usize, train_fraction: f64) -> usize {
    ((train_fraction * num_ids as f64).ceil() as usize).min(num_ids)
}

/// Shuffles pids with `rng` and sends the first `ceil(train_fraction * N)`
/// to training, the rest to holdout.
pub fn split_by_pid(
    fs: &FeatureSet,
    train_fraction: f64,
    rng: &mut impl rand::Rng,
) -> Result<PidSplit> {
    let n = fs.num_ids();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    let n_train = train_id_count(n, train_fraction);
    if n_train < 2 || n - n_train < 2 {
        return Err(Error::InvalidInput(format!(
            "pid split leaves {n_train} train and {} holdout identities, need at least 2 each",
            n - n_train
        )));
    }
    let mut is_train = vec![false; n];
    for &p in &order[..n_train] {
        is_train[p as usize] = true;
    }
    let (train_rows, holdout_rows): (Vec<usize>, Vec<usize>) =
        (0..fs.num_samples()).partition(|&i| is_train[fs.pids()[i] as usize]);
    let (train, train_labels) = fs.subset(&train_rows)?;
    let (holdout, holdout_labels) = fs.subset(&holdout_rows)?;
    Ok(PidSplit {
        train,
        train_labels,
        holdout,
        holdout_labels,
    })
}
