//! Sampler comparison and (m, k) sweeps over a fixed feature set.

use anyhow::{bail, Result};
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hardbatch::{
    build_class_index, build_sample_graph, class_representatives, epoch_diversity, epoch_hardness,
    pairwise_distance, plan_epoch, BatchHardness, ClassIndex, DistanceMatrix, DiversityStat,
    EpochPlan, FeatureSet, GraphConfig, RepresentativeMode, SamplerConfig, Strategy,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub batch_size: usize,
    pub instances_per_class: usize,
    pub m: usize,
    pub k: usize,
    /// Neighbour count of the GS graph (GS always uses m = 0).
    pub gs_k: usize,
    pub shuffle: bool,
    pub representative_mode: RepresentativeMode,
    pub margin: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    pub strategy: Strategy,
    pub graph: Option<GraphConfig>,
    pub batches_per_epoch: Vec<usize>,
    pub epoch_means: Vec<BatchHardness>,
    pub mean_over_epochs: BatchHardness,
    pub diversity: Option<DiversityStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub k: usize,
    pub hardness: BatchHardness,
}

/// Class distances from raw-feature centroids or from given prototypes.
pub fn class_distances(
    fs: &FeatureSet,
    idx: &ClassIndex,
    mode: RepresentativeMode,
    prototypes: Option<ArrayView2<'_, f32>>,
) -> Result<DistanceMatrix> {
    let reps: Array2<f64> = class_representatives(fs, idx, mode, prototypes)?;
    Ok(pairwise_distance(reps.view())?)
}

pub fn sampler_config(cfg: &BenchConfig, strategy: Strategy) -> SamplerConfig {
    SamplerConfig {
        batch_size: cfg.batch_size,
        instances_per_class: cfg.instances_per_class,
        strategy,
        shuffle: cfg.shuffle,
        seed: cfg.seed,
    }
}

/// Default GS neighbour count: every other class, so an anchor always
/// takes its P - 1 nearest classes that are still unused.
pub fn default_gs_k(num_ids: usize) -> usize {
    num_ids.saturating_sub(1)
}

pub fn plan_epochs(
    graph: Option<&hardbatch::SampleGraph>,
    idx: &ClassIndex,
    cfg: &SamplerConfig,
    epochs: usize,
) -> Result<Vec<EpochPlan>> {
    (0..epochs as u64)
        .into_par_iter()
        .map(|e| plan_epoch(graph, idx, cfg, e).map_err(Into::into))
        .collect()
}

fn mean_record(records: &[BatchHardness]) -> BatchHardness {
    let n = records.len() as f64;
    let sum = |f: fn(&BatchHardness) -> f64| records.iter().map(f).sum::<f64>() / n;
    BatchHardness {
        mean_hardest_negative_distance: sum(|r| r.mean_hardest_negative_distance),
        mean_hardest_positive_distance: sum(|r| r.mean_hardest_positive_distance),
        active_triplet_fraction: sum(|r| r.active_triplet_fraction),
        batch_hard_loss: sum(|r| r.batch_hard_loss),
    }
}

fn hardness_of(fs: &FeatureSet, plans: &[EpochPlan], margin: f64) -> Result<Vec<BatchHardness>> {
    plans
        .iter()
        .map(|p| Ok(epoch_hardness(fs, p, margin)?.epoch_mean))
        .collect()
}

/// Plans `cfg.epochs` epochs with one strategy and summarises them.
pub fn run_sampler(
    fs: &FeatureSet,
    idx: &ClassIndex,
    dm: &DistanceMatrix,
    cfg: &BenchConfig,
    strategy: Strategy,
) -> Result<SamplerReport> {
    let graph_cfg = match strategy {
        Strategy::Pk => None,
        Strategy::Gs => Some(GraphConfig { m: 0, k: cfg.gs_k }),
        Strategy::Dfgs => Some(GraphConfig { m: cfg.m, k: cfg.k }),
    };
    let graph = graph_cfg.map(|g| build_sample_graph(dm, g)).transpose()?;
    let scfg = sampler_config(cfg, strategy);
    let plans = plan_epochs(graph.as_ref(), idx, &scfg, cfg.epochs)?;
    let epoch_means = hardness_of(fs, &plans, cfg.margin)?;
    let diversity = if plans.len() >= 2 {
        Some(epoch_diversity(&plans, fs.pids())?)
    } else {
        None
    };
    Ok(SamplerReport {
        strategy,
        graph: graph_cfg,
        batches_per_epoch: plans.iter().map(|p| p.batches.len()).collect(),
        mean_over_epochs: mean_record(&epoch_means),
        epoch_means,
        diversity,
    })
}

pub fn compare_samplers(
    fs: &FeatureSet,
    cfg: &BenchConfig,
    prototypes: Option<ArrayView2<'_, f32>>,
) -> Result<Vec<SamplerReport>> {
    if cfg.epochs == 0 {
        bail!("bench needs at least one epoch");
    }
    let idx = build_class_index(fs);
    let dm = class_distances(fs, &idx, cfg.representative_mode, prototypes)?;
    Strategy::ALL
        .iter()
        .map(|&s| run_sampler(fs, &idx, &dm, cfg, s))
        .collect()
}

/// DFGS hardness over the grid `ms × ks`, rows ordered by k then m.
pub fn sweep_grid(
    fs: &FeatureSet,
    cfg: &BenchConfig,
    prototypes: Option<ArrayView2<'_, f32>>,
    ms: &[usize],
    ks: &[usize],
) -> Result<Vec<SweepRow>> {
    let idx = build_class_index(fs);
    let dm = class_distances(fs, &idx, cfg.representative_mode, prototypes)?;
    let mut rows = Vec::with_capacity(ms.len() * ks.len());
    for &k in ks {
        for &m in ms {
            let point = BenchConfig {
                m,
                k,
                ..cfg.clone()
            };
            let report = run_sampler(fs, &idx, &dm, &point, Strategy::Dfgs)?;
            rows.push(SweepRow {
                m,
                k,
                hardness: report.mean_over_epochs,
            });
        }
    }
    Ok(rows)
}
