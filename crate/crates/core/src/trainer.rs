//! A linear metric `z = W x` trained by plain gradient descent on the
//! batch-hard triplet loss, fed by any of the samplers.
//!
//! In image-centroid mode the class graph is rebuilt from the current
//! embeddings before every epoch; in prototype mode it is built once from
//! the supplied prototypes and kept fixed.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{class_centroids, pairwise_distance, RepresentativeMode};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_retrieval, RetrievalSet};
use crate::featurestore::{build_class_index, split_by_pid, ClassIndex, FeatureSet};
use crate::graph::{build_sample_graph, GraphConfig, SampleGraph};
use crate::hardness::{check_batch_labels, mine_batch_hard, pairwise_euclidean, DEFAULT_MARGIN};
use crate::samplers::{plan_epoch, SamplerConfig};

/// Share of identities used for training; the rest form the holdout.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Projection matrix of shape `embed_dim × input_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMetric {
    weights: Array2<f64>,
}

impl LinearMetric {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite weight".into()));
        }
        Ok(LinearMetric { weights })
    }

    /// Entries i.i.d. uniform in `[-1/sqrt(D), 1/sqrt(D)]`.
    pub fn random(embed_dim: usize, input_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let weights =
            Array2::from_shape_fn((embed_dim, input_dim), |_| rng.random_range(-bound..=bound));
        LinearMetric { weights }
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Row-wise embeddings of `rows` (shape `S × E`).
    pub fn embed<T: Copy + Into<f64>>(&self, rows: ArrayView2<'_, T>) -> Array2<f64> {
        rows.mapv(Into::into).dot(&self.weights.t())
    }
}

/// Mean batch-hard triplet loss of the embedded batch and its exact
/// gradient with respect to the weights.
///
/// Subgradient conventions: an anchor whose hinge is exactly zero
/// contributes nothing, and a pair at zero embedding distance contributes
/// a zero distance gradient.
pub fn triplet_loss_and_gradient(
    metric: &LinearMetric,
    batch: ArrayView2<'_, f64>,
    pids: &[u32],
    margin: f64,
) -> Result<(f64, Array2<f64>)> {
    if batch.nrows() != pids.len() || batch.ncols() != metric.input_dim() {
        return Err(Error::InvalidInput(format!(
            "batch is {}x{} with {} labels, metric expects {} columns",
            batch.nrows(),
            batch.ncols(),
            pids.len(),
            metric.input_dim()
        )));
    }
    check_batch_labels(pids)?;
    let z = batch.dot(&metric.weights.t());
    let dist = pairwise_euclidean(z.view());
    let mined = mine_batch_hard(&dist, pids);
    let b = pids.len() as f64;

    let mut loss = 0.0;
    let mut grad = Array2::<f64>::zeros(metric.weights.raw_dim());
    // d||z_i - z_j|| / dW = (z_i - z_j)(x_i - x_j)^T / ||z_i - z_j||
    let mut add_pair = |i: usize, j: usize, sign: f64| {
        let d = dist[[i, j]];
        if d == 0.0 {
            return;
        }
        let dz = &z.row(i) - &z.row(j);
        let dx = &batch.row(i) - &batch.row(j);
        let scale = sign / (d * b);
        for (e, &dze) in dz.iter().enumerate() {
            let mut row = grad.row_mut(e);
            row.scaled_add(dze * scale, &dx);
        }
    };
    for (a, t) in mined.iter().enumerate() {
        let hinge = t.d_p - t.d_n + margin;
        if hinge > 0.0 {
            loss += hinge;
            add_pair(a, t.positive, 1.0);
            add_pair(a, t.negative, -1.0);
        }
    }
    Ok((loss / b, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub embed_dim: usize,
    pub sampler: SamplerConfig,
    pub graph: GraphConfig,
    pub representative_mode: RepresentativeMode,
    pub refresh_graph_each_epoch: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            learning_rate: 1.0,
            margin: DEFAULT_MARGIN,
            embed_dim: 32,
            sampler: SamplerConfig::default(),
            graph: GraphConfig::default(),
            representative_mode: RepresentativeMode::ImageCentroid,
            refresh_graph_each_epoch: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "margin must be finite and non-negative, got {}",
                self.margin
            )));
        }
        if self.embed_dim == 0 || self.embed_dim > input_dim {
            return Err(Error::InvalidConfig(format!(
                "embed_dim must lie in 1..={input_dim}, got {}",
                self.embed_dim
            )));
        }
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub rank1_holdout: f64,
    pub graph_rebuilt: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metric: LinearMetric,
    pub history: Vec<EpochRecord>,
}

struct Holdout {
    query: Vec<usize>,
    gallery: Vec<usize>,
}

impl Holdout {
    /// The first sample of each holdout identity is its query; the rest
    /// form the gallery.
    fn new(idx: &ClassIndex) -> Self {
        let mut query = Vec::new();
        let mut gallery = Vec::new();
        for members in idx.by_pid() {
            query.push(members[0]);
            gallery.extend_from_slice(&members[1..]);
        }
        Holdout { query, gallery }
    }

    fn rank1(&self, metric: &LinearMetric, fs: &FeatureSet) -> Result<f64> {
        let z = metric.embed(fs.features());
        let pick = |rows: &[usize]| {
            (
                z.select(Axis(0), rows),
                rows.iter().map(|&i| fs.pids()[i]).collect::<Vec<_>>(),
                rows.iter().map(|&i| fs.camids()[i]).collect::<Vec<_>>(),
            )
        };
        let (qz, qp, qc) = pick(&self.query);
        let (gz, gp, gc) = pick(&self.gallery);
        let result = evaluate_retrieval(
            RetrievalSet {
                features: qz.view(),
                pids: &qp,
                camids: &qc,
            },
            RetrievalSet {
                features: gz.view(),
                pids: &gp,
                camids: &gc,
            },
            1,
        )?;
        Ok(result.rank1())
    }
}

fn build_graph(reps: &Array2<f64>, cfg: GraphConfig) -> Result<SampleGraph> {
    build_sample_graph(&pairwise_distance(reps.view())?, cfg)
}

/// Trains a linear metric on a pid-disjoint split of `fs`.
///
/// `prototypes` (one row per pid of `fs`) is required in prototype mode
/// and rejected otherwise.
pub fn train_linear_metric(
    fs: &FeatureSet,
    cfg: &TrainConfig,
    prototypes: Option<ArrayView2<'_, f32>>,
) -> Result<TrainOutcome> {
    cfg.validate(fs.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split = split_by_pid(fs, TRAIN_FRACTION, &mut rng)?;
    let mut metric = LinearMetric::random(cfg.embed_dim, fs.dim(), &mut rng);
    let train = &split.train;
    let idx = build_class_index(train);
    let holdout_idx = build_class_index(&split.holdout);
    if holdout_idx.by_pid().iter().all(|m| m.len() < 2) {
        return Err(Error::InvalidInput(
            "holdout identities need at least 2 samples each".into(),
        ));
    }
    let holdout = Holdout::new(&holdout_idx);

    let uses_graph = cfg.sampler.strategy.uses_graph();
    let fixed_reps = match (cfg.representative_mode, prototypes) {
        (RepresentativeMode::Prototype, Some(p)) => {
            if p.nrows() != fs.num_ids() {
                return Err(Error::InvalidInput(format!(
                    "prototype matrix has {} rows, expected {}",
                    p.nrows(),
                    fs.num_ids()
                )));
            }
            let rows: Vec<usize> = split.train_labels.iter().map(|&l| l as usize).collect();
            Some(p.select(Axis(0), &rows).mapv(f64::from))
        }
        (RepresentativeMode::Prototype, None) => {
            return Err(Error::InvalidInput(
                "prototype mode requires a prototype matrix".into(),
            ))
        }
        (RepresentativeMode::ImageCentroid, Some(_)) => {
            return Err(Error::InvalidInput(
                "image-centroid mode does not take prototypes".into(),
            ))
        }
        (RepresentativeMode::ImageCentroid, None) => None,
    };

    let mut graph: Option<SampleGraph> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rebuilt = false;
        if uses_graph {
            let refresh = match &fixed_reps {
                Some(_) => graph.is_none(),
                None => graph.is_none() || cfg.refresh_graph_each_epoch,
            };
            if refresh {
                let reps = match &fixed_reps {
                    Some(r) => r.clone(),
                    None => class_centroids(metric.embed(train.features()).view(), &idx)?,
                };
                graph = Some(build_graph(&reps, cfg.graph)?);
                rebuilt = true;
            }
        }

        let plan = plan_epoch(graph.as_ref(), &idx, &cfg.sampler, epoch as u64)?;
        let mut total = 0.0;
        for batch in &plan.batches {
            let rows = train.features().select(Axis(0), batch).mapv(f64::from);
            let labels: Vec<u32> = batch.iter().map(|&i| train.pids()[i]).collect();
            let (loss, grad) =
                triplet_loss_and_gradient(&metric, rows.view(), &labels, cfg.margin)?;
            total += loss;
            metric.weights.scaled_add(-cfg.learning_rate, &grad);
            if metric.weights.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "weights diverged in epoch {epoch}; lower the learning rate"
                )));
            }
        }
        let mean_loss = if plan.batches.is_empty() {
            0.0
        } else {
            total / plan.batches.len() as f64
        };
        history.push(EpochRecord {
            epoch,
            mean_loss,
            rank1_holdout: holdout.rank1(&metric, &split.holdout)?,
            graph_rebuilt: rebuilt,
        });
    }
    Ok(TrainOutcome { metric, history })
}
