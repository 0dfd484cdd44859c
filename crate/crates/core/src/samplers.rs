//! Epoch planners: random PK batches, anchor-plus-neighbours GS batches,
//! and depth-first traversal of the class graph (DFGS).
//!
//! Every planner emits batches of exactly `B = P * n` sample indices made
//! of `P` distinct classes with `n` samples each. GS and DFGS use each
//! class at most once per epoch.

use std::borrow::Cow;
use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::ClassIndex;
use crate::graph::{shuffle_adjacency, SampleGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Pk,
    Gs,
    Dfgs,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Pk, Strategy::Gs, Strategy::Dfgs];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Pk => "pk",
            Strategy::Gs => "gs",
            Strategy::Dfgs => "dfgs",
        }
    }

    pub fn uses_graph(self) -> bool {
        !matches!(self, Strategy::Pk)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pk" => Ok(Strategy::Pk),
            "gs" => Ok(Strategy::Gs),
            "dfgs" => Ok(Strategy::Dfgs),
            other => Err(Error::InvalidConfig(format!("unknown sampler {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub instances_per_class: usize,
    pub strategy: Strategy,
    /// Shuffle neighbour lists before each DFGS epoch. Ignored otherwise.
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            batch_size: 128,
            instances_per_class: 4,
            strategy: Strategy::Dfgs,
            shuffle: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let (b, n) = (self.batch_size, self.instances_per_class);
        if b == 0 || n == 0 {
            return Err(Error::InvalidConfig(
                "batch size and instances per class must be positive".into(),
            ));
        }
        if b % n != 0 {
            return Err(Error::InvalidConfig(format!(
                "batch size {b} is not a multiple of instances per class {n}"
            )));
        }
        if b / n < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch size {b} holds {} class(es), need at least 2",
                b / n
            )));
        }
        Ok(())
    }

    /// `P = B / n`.
    pub fn classes_per_batch(&self) -> usize {
        self.batch_size / self.instances_per_class
    }
}

/// Ordered fixed-size batches for one pass over the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub instances_per_class: usize,
    pub seed: u64,
    /// Times DFGS restarted from a fresh class after its stack ran dry.
    pub reseeds: usize,
    pub batches: Vec<Vec<usize>>,
}

impl EpochPlan {
    fn empty(cfg: &SamplerConfig) -> Self {
        EpochPlan {
            strategy: cfg.strategy,
            batch_size: cfg.batch_size,
            instances_per_class: cfg.instances_per_class,
            seed: cfg.seed,
            reseeds: 0,
            batches: Vec::new(),
        }
    }

    /// Distinct pids of each batch, in first-appearance order.
    pub fn batch_pids(&self, pids: &[u32]) -> Vec<Vec<u32>> {
        self.batches
            .iter()
            .map(|b| {
                let mut out: Vec<u32> = Vec::new();
                for &i in b {
                    if !out.contains(&pids[i]) {
                        out.push(pids[i]);
                    }
                }
                out
            })
            .collect()
    }

    /// Checks batch shape against sample labels `pids`, and when
    /// `unique_classes` is set, that no pid appears in two batches.
    pub fn check(&self, pids: &[u32], unique_classes: bool) -> Result<()> {
        let b = self.batch_size;
        let n = self.instances_per_class;
        let mut seen = BTreeSet::new();
        for (bi, batch) in self.batches.iter().enumerate() {
            if batch.len() != b {
                return Err(Error::InvalidInput(format!(
                    "batch {bi} has {} entries, expected {b}",
                    batch.len()
                )));
            }
            if let Some(&bad) = batch.iter().find(|&&i| i >= pids.len()) {
                return Err(Error::InvalidInput(format!(
                    "batch {bi} references sample {bad} outside 0..{}",
                    pids.len()
                )));
            }
            let mut counts = std::collections::BTreeMap::new();
            for &i in batch {
                *counts.entry(pids[i]).or_insert(0usize) += 1;
            }
            if counts.len() != b / n || counts.values().any(|&c| c != n) {
                return Err(Error::InvalidInput(format!(
                    "batch {bi} does not hold {} classes of {n} samples: {counts:?}",
                    b / n
                )));
            }
            if unique_classes {
                for p in counts.keys() {
                    if !seen.insert(*p) {
                        return Err(Error::InvalidInput(format!(
                            "pid {p} appears in more than one batch (again in batch {bi})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// The random stream for epoch `epoch` of a run seeded with `seed`.
pub fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng
}

/// Picks `n` samples of `pid`, spreading them over as many cameras as
/// possible.
///
/// Cameras are visited round-robin in a random order, each yielding its
/// samples in random order without replacement. If the class has fewer than
/// `n` samples, the shortfall is filled by re-drawing uniformly from the
/// samples already chosen.
pub fn diff_cid_sample(
    idx: &ClassIndex,
    pid: u32,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let cams = idx.cameras(pid).ok_or(Error::UnknownPid(pid))?;
    if cams.is_empty() {
        return Err(Error::EmptyClass(pid));
    }
    let mut queues: Vec<Vec<usize>> = cams.values().cloned().collect();
    queues.shuffle(rng);
    for q in &mut queues {
        q.shuffle(rng);
    }
    let mut chosen = Vec::with_capacity(n);
    'fill: while chosen.len() < n {
        let mut progressed = false;
        for q in &mut queues {
            if let Some(s) = q.pop() {
                chosen.push(s);
                progressed = true;
                if chosen.len() == n {
                    break 'fill;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    let distinct = chosen.len();
    while chosen.len() < n {
        chosen.push(chosen[rng.random_range(0..distinct)]);
    }
    Ok(chosen)
}

fn check_graph(g: &SampleGraph, idx: &ClassIndex) -> Result<()> {
    if g.n() != idx.num_ids() {
        return Err(Error::InvalidInput(format!(
            "graph has {} classes but the index has {}",
            g.n(),
            idx.num_ids()
        )));
    }
    Ok(())
}

pub fn plan_epoch_pk(
    idx: &ClassIndex,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<EpochPlan> {
    cfg.validate()?;
    let p = cfg.classes_per_batch();
    let n = cfg.instances_per_class;
    if idx.num_ids() < p {
        return Err(Error::InvalidInput(format!(
            "{} classes cannot fill a batch of {p} classes",
            idx.num_ids()
        )));
    }
    let mut order: Vec<u32> = (0..idx.num_ids() as u32).collect();
    order.shuffle(rng);
    let mut plan = EpochPlan::empty(cfg);
    for chunk in order.chunks_exact(p) {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for &pid in chunk {
            let members = idx.samples(pid).ok_or(Error::UnknownPid(pid))?;
            if members.is_empty() {
                return Err(Error::EmptyClass(pid));
            }
            if members.len() >= n {
                batch.extend(
                    index::sample(rng, members.len(), n)
                        .iter()
                        .map(|i| members[i]),
                );
            } else {
                batch.extend((0..n).map(|_| members[rng.random_range(0..members.len())]));
            }
        }
        plan.batches.push(batch);
    }
    Ok(plan)
}

pub fn plan_epoch_gs(
    g: &SampleGraph,
    idx: &ClassIndex,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<EpochPlan> {
    cfg.validate()?;
    check_graph(g, idx)?;
    let p = cfg.classes_per_batch();
    if g.config().k < p - 1 {
        return Err(Error::InvalidConfig(format!(
            "graph sampler needs k >= P - 1 = {}, got k = {}",
            p - 1,
            g.config().k
        )));
    }
    let mut anchors: Vec<u32> = (0..idx.num_ids() as u32).collect();
    anchors.shuffle(rng);
    let mut used = vec![false; idx.num_ids()];
    let mut plan = EpochPlan::empty(cfg);
    for anchor in anchors {
        if used[anchor as usize] {
            continue;
        }
        used[anchor as usize] = true;
        let mates: Vec<u32> = g
            .neighbors(anchor)
            .iter()
            .copied()
            .filter(|&v| !used[v as usize])
            .take(p - 1)
            .collect();
        if mates.len() < p - 1 {
            continue;
        }
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for pid in std::iter::once(anchor).chain(mates) {
            used[pid as usize] = true;
            batch.extend(diff_cid_sample(idx, pid, cfg.instances_per_class, rng)?);
        }
        plan.batches.push(batch);
    }
    Ok(plan)
}

/// Order in which DFGS consumed classes, and where it had to restart.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DfgsTrace {
    pub visit_order: Vec<u32>,
    /// Positions in `visit_order` that began a new traversal (the first
    /// entry is always 0).
    pub roots: Vec<usize>,
}

pub fn plan_epoch_dfgs(
    g: &SampleGraph,
    idx: &ClassIndex,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<EpochPlan> {
    plan_epoch_dfgs_traced(g, idx, cfg, rng).map(|(plan, _)| plan)
}

pub fn plan_epoch_dfgs_traced(
    g: &SampleGraph,
    idx: &ClassIndex,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<(EpochPlan, DfgsTrace)> {
    cfg.validate()?;
    check_graph(g, idx)?;
    let start = rng.random_range(0..g.n()) as u32;
    dfgs_from(g, idx, cfg, start, rng)
}

fn dfgs_from(
    g: &SampleGraph,
    idx: &ClassIndex,
    cfg: &SamplerConfig,
    start: u32,
    rng: &mut impl Rng,
) -> Result<(EpochPlan, DfgsTrace)> {
    let graph: Cow<'_, SampleGraph> = if cfg.shuffle {
        Cow::Owned(shuffle_adjacency(g, rng))
    } else {
        Cow::Borrowed(g)
    };
    let n_classes = graph.n();
    let mut consumed = vec![false; n_classes];
    let mut remaining = n_classes;
    let mut stack = vec![start];
    let mut pending = Vec::with_capacity(cfg.batch_size);
    let mut plan = EpochPlan::empty(cfg);
    let mut trace = DfgsTrace {
        visit_order: Vec::with_capacity(n_classes),
        roots: vec![0],
    };

    loop {
        while let Some(p) = stack.pop() {
            if consumed[p as usize] {
                continue;
            }
            pending.extend(diff_cid_sample(idx, p, cfg.instances_per_class, rng)?);
            consumed[p as usize] = true;
            remaining -= 1;
            trace.visit_order.push(p);
            if pending.len() == cfg.batch_size {
                plan.batches.push(std::mem::take(&mut pending));
            }
            for &v in graph.neighbors(p).iter().rev() {
                if !consumed[v as usize] {
                    stack.push(v);
                }
            }
        }
        if remaining == 0 {
            break;
        }
        // Unreachable classes remain: restart from a random one.
        let open: Vec<u32> = (0..n_classes as u32)
            .filter(|&p| !consumed[p as usize])
            .collect();
        stack.push(open[rng.random_range(0..open.len())]);
        plan.reseeds += 1;
        trace.roots.push(trace.visit_order.len());
    }
    Ok((plan, trace))
}

/// Plans epoch `epoch` with the strategy in `cfg`, drawing randomness from
/// [`epoch_rng`]. `graph` may be `None` only for PK.
pub fn plan_epoch(
    graph: Option<&SampleGraph>,
    idx: &ClassIndex,
    cfg: &SamplerConfig,
    epoch: u64,
) -> Result<EpochPlan> {
    let mut rng = epoch_rng(cfg.seed, epoch);
    let need_graph = || {
        graph.ok_or_else(|| {
            Error::InvalidInput(format!("sampler {} needs a sample graph", cfg.strategy))
        })
    };
    match cfg.strategy {
        Strategy::Pk => plan_epoch_pk(idx, cfg, &mut rng),
        Strategy::Gs => plan_epoch_gs(need_graph()?, idx, cfg, &mut rng),
        Strategy::Dfgs => plan_epoch_dfgs(need_graph()?, idx, cfg, &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use crate::featurestore::{build_class_index, FeatureSet};
    use crate::graph::GraphConfig;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn index_from(pids: Vec<u32>, camids: Vec<u32>) -> (FeatureSet, ClassIndex) {
        let fs = FeatureSet::new(Array2::zeros((pids.len(), 1)), pids, camids).unwrap();
        let idx = build_class_index(&fs);
        (fs, idx)
    }

    /// `per_class` samples per pid, cameras round-robin over `cams`.
    fn uniform_index(n_ids: usize, per_class: usize, cams: u32) -> (FeatureSet, ClassIndex) {
        let pids = (0..n_ids * per_class)
            .map(|i| (i / per_class) as u32)
            .collect();
        let camids = (0..n_ids * per_class)
            .map(|i| (i % per_class) as u32 % cams)
            .collect();
        index_from(pids, camids)
    }

    fn cfg(b: usize, n: usize, strategy: Strategy, shuffle: bool) -> SamplerConfig {
        SamplerConfig {
            batch_size: b,
            instances_per_class: n,
            strategy,
            shuffle,
            seed: 0,
        }
    }

    fn ring(n: usize) -> SampleGraph {
        SampleGraph::from_adjacency(
            (0..n as u32).map(|p| vec![(p + 1) % n as u32]).collect(),
            GraphConfig { m: 0, k: 1 },
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(cfg(100, 3, Strategy::Pk, false).validate().is_err());
        assert!(cfg(4, 4, Strategy::Pk, false).validate().is_err());
        assert!(cfg(128, 4, Strategy::Dfgs, true).validate().is_ok());
        assert_eq!(cfg(128, 4, Strategy::Dfgs, true).classes_per_batch(), 32);
    }

    #[test]
    fn diff_cid_spreads_over_cameras() {
        // cams {A:[0,1], B:[2]}
        let (_, idx) = index_from(vec![0, 0, 0], vec![0, 0, 1]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let got = diff_cid_sample(&idx, 0, 2, &mut rng).unwrap();
            assert!(got.contains(&2), "{got:?}");
            assert!(got.contains(&0) || got.contains(&1));
        }
    }

    #[test]
    fn diff_cid_repeats_when_short() {
        let (_, idx) = index_from(vec![0], vec![0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(diff_cid_sample(&idx, 0, 2, &mut rng).unwrap(), vec![0, 0]);
        assert!(matches!(
            diff_cid_sample(&idx, 5, 2, &mut rng),
            Err(Error::UnknownPid(5))
        ));
    }

    #[test]
    fn diff_cid_round_robin_trace() {
        // 6 samples over 3 cameras, 2 per camera.
        let (fs, idx) = index_from(vec![0; 6], vec![0, 1, 2, 0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut got = diff_cid_sample(&idx, 0, 6, &mut rng).unwrap();
        let mut per_cam = [0; 3];
        for &s in &got {
            per_cam[fs.camids()[s] as usize] += 1;
        }
        assert_eq!(per_cam, [2, 2, 2]);
        // The first three picks cover every camera.
        let first: BTreeSet<u32> = got[..3].iter().map(|&s| fs.camids()[s]).collect();
        assert_eq!(first.len(), 3);
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn pk_counts() {
        let (fs, idx) = uniform_index(4, 2, 2);
        let c = cfg(2, 1, Strategy::Pk, false);
        let plan = plan_epoch_pk(&idx, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(plan.batches.len(), 2);
        plan.check(fs.pids(), true).unwrap();

        let (_, idx5) = uniform_index(5, 2, 2);
        let plan = plan_epoch_pk(&idx5, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(plan.batches.len(), 2);

        let (_, idx1) = uniform_index(1, 2, 2);
        assert!(plan_epoch_pk(&idx1, &c, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn pk_is_deterministic() {
        let (_, idx) = uniform_index(30, 5, 3);
        let c = cfg(12, 3, Strategy::Pk, false);
        let a = plan_epoch(None, &idx, &c, 3).unwrap();
        let b = plan_epoch(None, &idx, &c, 3).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn gs_takes_first_available_neighbour() {
        let (fs, idx) = uniform_index(4, 2, 2);
        let g = SampleGraph::from_adjacency(
            vec![vec![2, 1, 3], vec![0, 2, 3], vec![3, 0, 1], vec![2, 1, 0]],
            GraphConfig { m: 0, k: 3 },
        )
        .unwrap();
        let c = cfg(4, 2, Strategy::Gs, false);
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = plan_epoch_gs(&g, &idx, &c, &mut rng).unwrap();
            plan.check(fs.pids(), true).unwrap();
            let classes = plan.batch_pids(fs.pids());
            if classes.first().and_then(|b| b.first()) == Some(&0) {
                assert_eq!(classes[0], vec![0, 2]);
            }
        }
    }

    #[test]
    fn gs_requires_enough_neighbours() {
        let (_, idx) = uniform_index(4, 2, 2);
        let c = cfg(6, 2, Strategy::Gs, false);
        let err = plan_epoch_gs(&ring(4), &idx, &c, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn dfgs_hand_trace_on_ring() {
        let (fs, idx) = uniform_index(4, 2, 2);
        let c = cfg(4, 2, Strategy::Dfgs, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (plan, trace) = dfgs_from(&ring(4), &idx, &c, 0, &mut rng).unwrap();
        assert_eq!(trace.visit_order, vec![0, 1, 2, 3]);
        assert_eq!(plan.reseeds, 0);
        assert_eq!(plan.batch_pids(fs.pids()), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn dfgs_seeded_start_matches_hand_trace() {
        let (fs, idx) = uniform_index(4, 2, 2);
        let c = cfg(4, 2, Strategy::Dfgs, false);
        let seed = (0..)
            .find(|&s| ChaCha8Rng::seed_from_u64(s).random_range(0..4usize) == 0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = plan_epoch_dfgs(&ring(4), &idx, &c, &mut rng).unwrap();
        assert_eq!(plan.batch_pids(fs.pids()), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn dfgs_discards_partial_tail() {
        let (fs, idx) = uniform_index(3, 2, 2);
        let c = cfg(4, 2, Strategy::Dfgs, false);
        let plan = plan_epoch_dfgs(&ring(3), &idx, &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(plan.batches.len(), 1);
        plan.check(fs.pids(), true).unwrap();
    }

    #[test]
    fn dfgs_reseeds_disconnected_components() {
        // Two 2-cycles: 0<->1, 2<->3.
        let g = SampleGraph::from_adjacency(
            vec![vec![1], vec![0], vec![3], vec![2]],
            GraphConfig { m: 0, k: 1 },
        )
        .unwrap();
        let (fs, idx) = uniform_index(4, 2, 2);
        let c = cfg(4, 2, Strategy::Dfgs, false);
        let (plan, trace) =
            plan_epoch_dfgs_traced(&g, &idx, &c, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(plan.reseeds, 1);
        assert_eq!(trace.roots, vec![0, 2]);
        assert_eq!(plan.batches.len(), 2);
        plan.check(fs.pids(), true).unwrap();
    }

    #[test]
    fn dfgs_follows_first_listed_neighbour() {
        let (_, idx) = uniform_index(40, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let adjacency = (0..40u32)
            .map(|p| {
                let mut others: Vec<u32> = (0..40).filter(|&q| q != p).collect();
                others.shuffle(&mut rng);
                others.truncate(3);
                others
            })
            .collect();
        let g = SampleGraph::from_adjacency(adjacency, GraphConfig { m: 0, k: 3 }).unwrap();
        let c = cfg(8, 2, Strategy::Dfgs, false);
        let (_, trace) = plan_epoch_dfgs_traced(&g, &idx, &c, &mut rng).unwrap();
        let mut consumed = [false; 40];
        for w in trace.visit_order.windows(2) {
            consumed[w[0] as usize] = true;
            let first_open = g.neighbors(w[0]).iter().find(|&&v| !consumed[v as usize]);
            if let Some(&v) = first_open {
                assert_eq!(w[1], v, "after {} expected {v}", w[0]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn planners_respect_shape(
            n_ids in 4usize..40,
            per_class in 1usize..6,
            n in 1usize..4,
            p in 2usize..5,
            k_extra in 0usize..4,
            seed in any::<u64>(),
            shuffle in any::<bool>(),
        ) {
            prop_assume!(n_ids >= p);
            let (fs, idx) = uniform_index(n_ids, per_class, 3);
            let k = (p - 1 + k_extra).min(n_ids - 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let adjacency = (0..n_ids as u32)
                .map(|q| {
                    let mut others: Vec<u32> = (0..n_ids as u32).filter(|&o| o != q).collect();
                    others.shuffle(&mut rng);
                    others.truncate(k);
                    others
                })
                .collect();
            let g = SampleGraph::from_adjacency(adjacency, GraphConfig { m: 0, k }).unwrap();
            for strategy in Strategy::ALL {
                let c = SamplerConfig { batch_size: p * n, instances_per_class: n, strategy, shuffle, seed };
                let plan = plan_epoch(Some(&g), &idx, &c, 0).unwrap();
                plan.check(fs.pids(), strategy != Strategy::Pk).unwrap();
                let again = plan_epoch(Some(&g), &idx, &c, 0).unwrap();
                prop_assert_eq!(&plan, &again);
                if strategy == Strategy::Dfgs {
                    prop_assert_eq!(plan.batches.len(), n_ids / p);
                }
            }
        }
    }
}
