//! Hard-sample mini-batch mining for metric learning.
//!
//! The pipeline: class representatives → pairwise class distances →
//! difficulty-windowed neighbour graph → epoch plans (PK, GS or
//! depth-first DFGS) → batch hardness, retrieval metrics and a toy linear
//! metric learner to compare samplers end to end.

pub mod distance;
pub mod error;
pub mod evaluation;
pub mod featurestore;
pub mod graph;
pub mod hardness;
pub mod samplers;
pub mod trainer;

pub use distance::{class_representatives, pairwise_distance, DistanceMatrix, RepresentativeMode};
pub use error::{Error, Result};
pub use evaluation::{evaluate_retrieval, RetrievalResult, RetrievalSet};
pub use featurestore::{
    build_class_index, generate_synthetic, load_feature_set, write_feature_set, ClassIndex,
    FeatureSet, LabeledFeatures, SynthConfig,
};
pub use graph::{build_sample_graph, shuffle_adjacency, GraphConfig, SampleGraph};
pub use hardness::{
    batch_hardness, epoch_diversity, epoch_hardness, BatchHardness, DiversityStat, HardnessReport,
    DEFAULT_MARGIN,
};
pub use samplers::{
    diff_cid_sample, epoch_rng, plan_epoch, plan_epoch_dfgs, plan_epoch_gs, plan_epoch_pk,
    EpochPlan, SamplerConfig, Strategy,
};
pub use trainer::{
    train_linear_metric, triplet_loss_and_gradient, EpochRecord, LinearMetric, TrainConfig,
    TrainOutcome,
};
