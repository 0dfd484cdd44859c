//! Difficulty-windowed nearest-class graph.
//!
//! Each class points at the classes ranked `m+1 ..= m+k` by ascending
//! distance from it. `m` skips the very closest classes (a difficulty
//! offset) and `k` fixes the out-degree. Ties in distance are broken by
//! ascending pid so the graph is a pure function of the matrix.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub m: usize,
    pub k: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { m: 2, k: 10 }
    }
}

impl GraphConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if self.m + self.k > n.saturating_sub(1) {
            return Err(Error::InvalidConfig(format!(
                "window m + k = {} exceeds the {} other classes",
                self.m + self.k,
                n.saturating_sub(1)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleGraph {
    m: usize,
    k: usize,
    adjacency: Vec<Vec<u32>>,
}

impl SampleGraph {
    /// Wraps an explicit adjacency list after checking the shape rules.
    pub fn from_adjacency(adjacency: Vec<Vec<u32>>, config: GraphConfig) -> Result<Self> {
        let n = adjacency.len();
        for (p, row) in adjacency.iter().enumerate() {
            if row.len() != config.k {
                return Err(Error::InvalidInput(format!(
                    "pid {p} has {} neighbours, expected {}",
                    row.len(),
                    config.k
                )));
            }
            let mut seen = row.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != row.len() || row.iter().any(|&v| v as usize == p || v as usize >= n) {
                return Err(Error::InvalidInput(format!(
                    "pid {p} has an invalid neighbour list {row:?}"
                )));
            }
        }
        Ok(SampleGraph {
            m: config.m,
            k: config.k,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn config(&self) -> GraphConfig {
        GraphConfig {
            m: self.m,
            k: self.k,
        }
    }

    pub fn neighbors(&self, pid: u32) -> &[u32] {
        &self.adjacency[pid as usize]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// `hist[d]` counts classes with in-degree `d`.
    pub fn in_degree_histogram(&self) -> Vec<usize> {
        let mut indeg = vec![0usize; self.n()];
        for &v in self.adjacency.iter().flatten() {
            indeg[v as usize] += 1;
        }
        let max = indeg.iter().copied().max().unwrap_or(0);
        let mut hist = vec![0usize; max + 1];
        for d in indeg {
            hist[d] += 1;
        }
        hist
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn by_distance_then_pid(row: &[f64]) -> impl Fn(&u32, &u32) -> Ordering + '_ {
    move |&a, &b| row[a as usize].total_cmp(&row[b as usize]).then(a.cmp(&b))
}

pub fn build_sample_graph(dm: &DistanceMatrix, cfg: GraphConfig) -> Result<SampleGraph> {
    let n = dm.n();
    cfg.validate(n)?;
    let window_end = cfg.m + cfg.k;
    let adjacency = (0..n)
        .into_par_iter()
        .map(|p| {
            let row = dm.row(p).to_vec();
            let cmp = by_distance_then_pid(&row);
            let mut order: Vec<u32> = (0..n as u32).collect();
            // The +inf diagonal sorts last, so p never enters the window.
            if window_end < n {
                order.select_nth_unstable_by(window_end, &cmp);
                order.truncate(window_end);
            }
            order.sort_unstable_by(&cmp);
            order[cfg.m..window_end].to_vec()
        })
        .collect();
    Ok(SampleGraph {
        m: cfg.m,
        k: cfg.k,
        adjacency,
    })
}

/// Independently permutes every neighbour list (Fisher-Yates), visiting
/// pids in ascending order on the single stream `rng`.
pub fn shuffle_adjacency(g: &SampleGraph, rng: &mut impl Rng) -> SampleGraph {
    let mut out = g.clone();
    for row in &mut out.adjacency {
        row.shuffle(rng);
    }
    out
}
