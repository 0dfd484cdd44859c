use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use hardbatch::distance::class_centroids;
use hardbatch::featurestore::{load_labeled_features, read_matrix, train_id_count, write_matrix};
use hardbatch::trainer::TRAIN_FRACTION;
use hardbatch::{
    build_class_index, build_sample_graph, evaluate_retrieval, generate_synthetic,
    load_feature_set, plan_epoch, train_linear_metric, write_feature_set, Error, FeatureSet,
    GraphConfig, RepresentativeMode, RetrievalSet, SamplerConfig, Strategy, SynthConfig,
    TrainConfig, DEFAULT_MARGIN,
};

use crate::bench::{
    class_distances, compare_samplers, default_gs_k, sweep_grid, BenchConfig, SamplerReport,
    SweepRow,
};
use crate::manifest::{ensure_dir, write_json, RunManifest};

pub const DEFAULT_M: usize = 2;
pub const DEFAULT_K: usize = 10;

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 200)]
    pub ids: usize,
    #[arg(long, default_value_t = 8)]
    pub per_id: usize,
    #[arg(long, default_value_t = 4)]
    pub cams: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub twin_frac: f64,
    #[arg(long, default_value_t = 1.0)]
    pub twin_gap: f64,
    #[arg(long, default_value_t = 0.5)]
    pub camera_shift: f64,
    #[arg(long, default_value_t = 0.3)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File stem of the generated pair inside `--out`.
    #[arg(long, default_value = "synth")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

impl GenArgs {
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            num_ids: self.ids,
            samples_per_id: self.per_id,
            num_cameras: self.cams,
            dim: self.dim,
            twin_fraction: self.twin_frac,
            twin_gap: self.twin_gap,
            camera_shift: self.camera_shift,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg = args.synth_config();
    cfg.validate()?;
    let fs = generate_synthetic(&cfg)?;
    ensure_dir(&args.out)?;
    let stem = args.out.join(&args.name);
    write_feature_set(&fs, &stem)?;
    #[derive(Serialize)]
    struct Snapshot<'a> {
        synth: &'a SynthConfig,
        name: &'a str,
    }
    let snapshot = Snapshot {
        synth: &cfg,
        name: &args.name,
    };
    let mut manifest = RunManifest::new("gen", &snapshot, cfg.seed)?;
    manifest.record(Path::new(&format!("{}.feat", args.name)));
    manifest.record(Path::new(&format!("{}.meta.csv", args.name)));
    manifest.write(&args.out)?;
    Ok(())
}

/// Flags shared by every command that plans epochs.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplerArgs {
    #[arg(long, default_value = "dfgs")]
    pub sampler: Strategy,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Instances per class.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Neighbour count (default 10 for dfgs, N - 1 for gs).
    #[arg(long)]
    pub k: Option<usize>,
    /// Difficulty offset (default 2 for dfgs, 0 for gs).
    #[arg(long)]
    pub m: Option<usize>,
    /// Shuffle neighbour lists each DFGS epoch.
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, default_value = "image-centroid")]
    pub mode: RepresentativeMode,
    /// Prototype matrix (one row per pid) for prototype mode.
    #[arg(long)]
    pub prototypes: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SamplerArgs {
    fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            batch_size: self.batch_size,
            instances_per_class: self.n,
            strategy: self.sampler,
            shuffle: self.shuffle,
            seed: self.seed,
        }
    }

    fn graph_config(&self, num_ids: usize) -> GraphConfig {
        match self.sampler {
            Strategy::Gs => GraphConfig {
                m: self.m.unwrap_or(0),
                k: self
                    .k
                    .unwrap_or(num_ids.saturating_sub(1 + self.m.unwrap_or(0))),
            },
            _ => GraphConfig {
                m: self.m.unwrap_or(DEFAULT_M),
                k: self.k.unwrap_or(DEFAULT_K),
            },
        }
    }

    fn warn_unused(&self) {
        if self.sampler != Strategy::Pk {
            if self.shuffle && self.sampler == Strategy::Gs {
                warn("--shuffle only affects dfgs; ignored");
            }
            return;
        }
        let mut ignored = Vec::new();
        if self.k.is_some() {
            ignored.push("--k");
        }
        if self.m.is_some() {
            ignored.push("--m");
        }
        if self.shuffle {
            ignored.push("--shuffle");
        }
        if self.prototypes.is_some() {
            ignored.push("--prototypes");
        }
        if !ignored.is_empty() {
            warn(&format!(
                "pk does not use a graph; ignoring {}",
                ignored.join(", ")
            ));
        }
    }
}

/// Prototype matrix for prototype mode: the supplied file, or the
/// raw-feature class centroids when none is given.
fn load_prototypes(
    fs: &FeatureSet,
    mode: RepresentativeMode,
    path: Option<&Path>,
) -> Result<Option<Array2<f32>>> {
    match (mode, path) {
        (RepresentativeMode::Prototype, Some(p)) => {
            Ok(Some(read_matrix(p).with_context(|| {
                format!("loading prototypes {}", p.display())
            })?))
        }
        (RepresentativeMode::Prototype, None) => {
            let centroids = class_centroids(fs.features(), &build_class_index(fs))?;
            Ok(Some(centroids.mapv(|v| v as f32)))
        }
        (RepresentativeMode::ImageCentroid, Some(_)) => {
            bail!("--prototypes requires --mode prototype")
        }
        (RepresentativeMode::ImageCentroid, None) => Ok(None),
    }
}

fn load_features(path: &Path) -> Result<FeatureSet> {
    load_feature_set(path).with_context(|| format!("loading features {}", path.display()))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SampleSnapshot<'a> {
    features: &'a Path,
    epochs: usize,
    sampler: SamplerConfig,
    graph: Option<GraphConfig>,
    representative_mode: RepresentativeMode,
    prototypes: Option<&'a Path>,
}

pub fn plan_file_name(epoch: usize) -> String {
    format!("plan_epoch{epoch:03}.json")
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let s = &args.sampler;
    s.warn_unused();
    let cfg = s.sampler_config();
    cfg.validate()?;
    let fs = load_features(&args.features)?;
    let idx = build_class_index(&fs);
    let graph_cfg = s.sampler.uses_graph().then(|| s.graph_config(fs.num_ids()));
    let graph = match graph_cfg {
        Some(gc) => {
            let prototypes = load_prototypes(&fs, s.mode, s.prototypes.as_deref())?;
            let dm = class_distances(&fs, &idx, s.mode, prototypes.as_ref().map(|p| p.view()))?;
            Some(build_sample_graph(&dm, gc)?)
        }
        None => None,
    };

    let snapshot = SampleSnapshot {
        features: &args.features,
        epochs: args.epochs,
        sampler: cfg,
        graph: graph_cfg,
        representative_mode: s.mode,
        prototypes: s.prototypes.as_deref(),
    };
    let mut manifest = RunManifest::new("sample", &snapshot, cfg.seed)?;
    ensure_dir(&args.out)?;
    if let Some(g) = &graph {
        std::fs::write(args.out.join("graph.json"), g.to_json()? + "\n")?;
        manifest.record(Path::new("graph.json"));
    }
    for epoch in 0..args.epochs {
        let plan = plan_epoch(graph.as_ref(), &idx, &cfg, epoch as u64)?;
        let name = plan_file_name(epoch);
        std::fs::write(args.out.join(&name), plan.to_json()? + "\n")?;
        manifest.record(Path::new(&name));
    }
    manifest.write(&args.out)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// DFGS neighbour count.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// DFGS difficulty offset.
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    /// GS neighbour count (default N - 1).
    #[arg(long)]
    pub gs_k: Option<usize>,
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, default_value = "image-centroid")]
    pub mode: RepresentativeMode,
    #[arg(long)]
    pub prototypes: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub sweep_m: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_k: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub samplers: Vec<SamplerReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diversity_notice: Option<String>,
}

pub const REPORT_FILE: &str = "bench_report.json";
pub const EPOCHS_FILE: &str = "bench_epochs.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

const HARDNESS_COLUMNS: [&str; 4] = [
    "mean_hardest_negative_distance",
    "mean_hardest_positive_distance",
    "active_triplet_fraction",
    "batch_hard_loss",
];

fn hardness_fields(h: &hardbatch::BatchHardness) -> [String; 4] {
    [
        h.mean_hardest_negative_distance.to_string(),
        h.mean_hardest_positive_distance.to_string(),
        h.active_triplet_fraction.to_string(),
        h.batch_hard_loss.to_string(),
    ]
}

fn write_epochs_csv(path: &Path, reports: &[SamplerReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sampler", "epoch", "batches"];
    header.extend(HARDNESS_COLUMNS);
    w.write_record(&header)?;
    for r in reports {
        for (e, h) in r.epoch_means.iter().enumerate() {
            let mut row = vec![
                r.strategy.to_string(),
                e.to_string(),
                r.batches_per_epoch[e].to_string(),
            ];
            row.extend(hardness_fields(h));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["m", "k"];
    header.extend(HARDNESS_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.m.to_string(), r.k.to_string()];
        row.extend(hardness_fields(&r.hardness));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let fs = load_features(&args.features)?;
    let prototypes = load_prototypes(&fs, args.mode, args.prototypes.as_deref())?;
    let cfg = BenchConfig {
        batch_size: args.batch_size,
        instances_per_class: args.n,
        m: args.m,
        k: args.k,
        gs_k: args.gs_k.unwrap_or(default_gs_k(fs.num_ids())),
        shuffle: args.shuffle,
        representative_mode: args.mode,
        margin: args.margin,
        epochs: args.epochs,
        seed: args.seed,
    };
    let samplers = compare_samplers(&fs, &cfg, prototypes.as_ref().map(|p| p.view()))?;
    let diversity_notice = (args.epochs < 2).then(|| {
        let msg = "diversity omitted: it compares consecutive epochs and needs --epochs >= 2";
        eprintln!("notice: {msg}");
        msg.to_string()
    });

    let sweep = if args.sweep_m.is_empty() && args.sweep_k.is_empty() {
        None
    } else {
        let ms = if args.sweep_m.is_empty() {
            vec![args.m]
        } else {
            args.sweep_m.clone()
        };
        let ks = if args.sweep_k.is_empty() {
            vec![args.k]
        } else {
            args.sweep_k.clone()
        };
        Some(sweep_grid(
            &fs,
            &cfg,
            prototypes.as_ref().map(|p| p.view()),
            &ms,
            &ks,
        )?)
    };

    #[derive(Serialize)]
    struct Snapshot<'a> {
        features: &'a Path,
        prototypes: Option<&'a Path>,
        bench: &'a BenchConfig,
        sweep_m: &'a [usize],
        sweep_k: &'a [usize],
    }
    let snapshot = Snapshot {
        features: &args.features,
        prototypes: args.prototypes.as_deref(),
        bench: &cfg,
        sweep_m: &args.sweep_m,
        sweep_k: &args.sweep_k,
    };
    let mut manifest = RunManifest::new("bench", &snapshot, cfg.seed)?;
    ensure_dir(&args.out)?;
    let report = BenchReport {
        config: cfg.clone(),
        samplers,
        diversity_notice,
    };
    write_json(&args.out.join(REPORT_FILE), &report)?;
    manifest.record(Path::new(REPORT_FILE));
    write_epochs_csv(&args.out.join(EPOCHS_FILE), &report.samplers)?;
    manifest.record(Path::new(EPOCHS_FILE));
    if let Some(rows) = sweep {
        write_sweep_csv(&args.out.join(SWEEP_FILE), &rows)?;
        manifest.record(Path::new(SWEEP_FILE));
    }
    manifest.write(&args.out)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    /// Number of runs; run i uses seed `--seed + i`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    /// Keep the initial graph instead of rebuilding it from current
    /// embeddings each epoch (image-centroid mode).
    #[arg(long)]
    pub no_refresh: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_rank1_holdout: Option<f64>,
    pub final_mean_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub sampler: Strategy,
    pub epochs: usize,
    pub runs: Vec<SeedSummary>,
    pub mean_final_rank1_holdout: Option<f64>,
    pub mean_final_loss: Option<f64>,
}

pub const SUMMARY_FILE: &str = "summary.json";

pub fn weights_file_name(seed: u64) -> String {
    format!("weights_seed{seed}.feat")
}

pub fn history_file_name(seed: u64) -> String {
    format!("history_seed{seed}.json")
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let s = &args.sampler;
    s.warn_unused();
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let fs = load_features(&args.features)?;
    let prototypes = load_prototypes(&fs, s.mode, s.prototypes.as_deref())?;
    // The graph is built over the training split, which is smaller than N.
    let num_train_ids = train_id_count(fs.num_ids(), TRAIN_FRACTION);
    let base = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        margin: args.margin,
        embed_dim: args.embed_dim,
        sampler: s.sampler_config(),
        graph: s.graph_config(num_train_ids),
        representative_mode: s.mode,
        refresh_graph_each_epoch: !args.no_refresh,
        seed: s.seed,
    };
    base.validate(fs.dim())?;
    let configs: Vec<TrainConfig> = (0..args.seeds)
        .map(|i| {
            let seed = s.seed + i;
            TrainConfig {
                seed,
                sampler: SamplerConfig {
                    seed,
                    ..base.sampler
                },
                ..base.clone()
            }
        })
        .collect();
    let outcomes = configs
        .par_iter()
        .map(|cfg| train_linear_metric(&fs, cfg, prototypes.as_ref().map(|p| p.view())))
        .collect::<hardbatch::Result<Vec<_>>>()?;

    #[derive(Serialize)]
    struct Snapshot<'a> {
        features: &'a Path,
        prototypes: Option<&'a Path>,
        seeds: u64,
        train: &'a TrainConfig,
    }
    let snapshot = Snapshot {
        features: &args.features,
        prototypes: s.prototypes.as_deref(),
        seeds: args.seeds,
        train: &base,
    };
    let mut manifest = RunManifest::new("train", &snapshot, base.seed)?;
    ensure_dir(&args.out)?;
    let mut runs = Vec::new();
    for (cfg, outcome) in configs.iter().zip(&outcomes) {
        let weights = outcome.metric.weights().mapv(|v| v as f32);
        let wname = weights_file_name(cfg.seed);
        write_matrix(&args.out.join(&wname), weights.view())?;
        manifest.record(Path::new(&wname));
        let hname = history_file_name(cfg.seed);
        write_json(&args.out.join(&hname), &outcome.history)?;
        manifest.record(Path::new(&hname));
        let last = outcome.history.last();
        runs.push(SeedSummary {
            seed: cfg.seed,
            final_rank1_holdout: last.map(|r| r.rank1_holdout),
            final_mean_loss: last.map(|r| r.mean_loss),
        });
    }
    let summary = TrainSummary {
        sampler: s.sampler,
        epochs: args.epochs,
        mean_final_rank1_holdout: mean(runs.iter().map(|r| r.final_rank1_holdout)),
        mean_final_loss: mean(runs.iter().map(|r| r.final_mean_loss)),
        runs,
    };
    write_json(&args.out.join(SUMMARY_FILE), &summary)?;
    manifest.record(Path::new(SUMMARY_FILE));
    manifest.write(&args.out)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub max_rank: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub const RETRIEVAL_FILE: &str = "retrieval.json";

#[derive(Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum EvalOutput {
    Ok(hardbatch::RetrievalResult),
    NoValidQueries { num_valid_queries: usize },
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let load = |p: &Path| {
        load_labeled_features(p).with_context(|| format!("loading features {}", p.display()))
    };
    let query = load(&args.query)?;
    let gallery = load(&args.gallery)?;
    let result = evaluate_retrieval(
        RetrievalSet::from(&query),
        RetrievalSet::from(&gallery),
        args.max_rank,
    );
    let (output, failure) = match result {
        Ok(r) => (EvalOutput::Ok(r), None),
        Err(e @ Error::NoValidQueries) => (
            EvalOutput::NoValidQueries {
                num_valid_queries: 0,
            },
            Some(e),
        ),
        Err(e) => return Err(e.into()),
    };
    let mut manifest = RunManifest::new("eval", args, 0)?;
    ensure_dir(&args.out)?;
    write_json(&args.out.join(RETRIEVAL_FILE), &output)?;
    manifest.record(Path::new(RETRIEVAL_FILE));
    manifest.write(&args.out)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
