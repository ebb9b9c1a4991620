//! Available colors and the local-uniformity burn-in experiment.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    block_step, greedy_initial_retry, Configuration, DynamicsError, Model, Scratch,
};
use crate::graph::Graph;
use crate::params::Params;
use crate::partition::BlockPartition;
use crate::percolation::wilson;
use crate::rng::seeded;

#[derive(Debug, Error)]
pub enum UniformityError {
    #[error("configuration is not a coloring")]
    NotColoring,
    #[error("probe vertex {vertex} has degree {deg} above dhat = {dhat}")]
    HighDegreeProbe {
        vertex: usize,
        deg: usize,
        dhat: f64,
    },
    #[error("only {available} low-degree vertices, {requested} probes requested")]
    TooFewProbes { available: usize, requested: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Colors in `0..k` not used by any neighbor of `v`.
pub fn available_colors(
    cfg: &Configuration,
    g: &Graph,
    v: usize,
) -> Result<Vec<usize>, UniformityError> {
    let Model::Coloring { k } = cfg.model else {
        return Err(UniformityError::NotColoring);
    };
    let mut free = vec![true; k];
    for &w in g.neighbors(v) {
        if cfg.spins[w] < k {
            free[cfg.spins[w]] = false;
        }
    }
    Ok((0..k).filter(|&c| free[c]).collect())
}

fn available_count(
    spins: &[usize],
    g: &Graph,
    v: usize,
    k: usize,
    mark: &mut [u32],
    stamp: u32,
) -> usize {
    let mut used = 0;
    for &w in g.neighbors(v) {
        let c = spins[w];
        if c < k && mark[c] != stamp {
            mark[c] = stamp;
            used += 1;
        }
    }
    k - used
}

/// `(1−ε²)·k·exp(−deg/k)`.
pub fn threshold(epsilon: f64, k: usize, deg: usize) -> f64 {
    (1.0 - epsilon * epsilon) * k as f64 * (-(deg as f64) / k as f64).exp()
}

/// The bad event `|A| ≤ 𝟙[updated]·threshold`, with a half-ulp guard on the
/// comparison.
pub fn violates(avail: usize, updated: bool, thresh: f64) -> bool {
    let bound = if updated { thresh } else { 0.0 };
    let a = avail as f64;
    a <= bound + bound.abs() * f64::EPSILON * 0.5
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityRecord {
    pub vertex: usize,
    pub deg: usize,
    pub t: u64,
    pub avail: usize,
    pub updated: bool,
    pub threshold: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub vertex: usize,
    pub deg: usize,
    pub threshold: f64,
    pub min_avail: usize,
    pub first_violation: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub n: usize,
    pub blocks: usize,
    pub k: usize,
    pub c0: f64,
    pub c: f64,
    pub window: (u64, u64),
    pub probes: Vec<ProbeSummary>,
    pub violating: usize,
    pub fraction: f64,
    pub fraction_ci95: (f64, f64),
    /// Whether every probe threshold lies above the worst case `k − Δ`.
    pub threshold_above_worst_case: bool,
}

/// Picks `count` distinct vertices with `deg ≤ d̂`.
pub fn pick_probes(
    g: &Graph,
    p: &Params,
    count: usize,
    seed: u64,
) -> Result<Vec<usize>, UniformityError> {
    let low: Vec<usize> = (0..g.n())
        .filter(|&v| p.is_low_degree(g.degree(v)))
        .collect();
    if low.len() < count {
        return Err(UniformityError::TooFewProbes {
            available: low.len(),
            requested: count,
        });
    }
    let mut rng = seeded(seed);
    let mut out: Vec<usize> = sample(&mut rng, low.len(), count)
        .into_iter()
        .map(|i| low[i])
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Runs block dynamics from a greedy coloring and watches the probes over
/// `t ∈ [C₀N, (C+C₀)N]`. Rows are emitted whenever a probe's available set
/// may have changed inside the window.
#[allow(clippy::too_many_arguments)]
pub fn uniformity_experiment(
    g: &Graph,
    part: &BlockPartition,
    p: &Params,
    c0: f64,
    c: f64,
    probes: &[usize],
    seed: u64,
    mut sink: impl FnMut(&UniformityRecord),
) -> Result<UniformityReport, UniformityError> {
    for &v in probes {
        if !p.is_low_degree(g.degree(v)) {
            return Err(UniformityError::HighDegreeProbe {
                vertex: v,
                deg: g.degree(v),
                dhat: p.dhat,
            });
        }
    }
    let k = p.k;
    let big_n = part.len() as f64;
    let start = (c0 * big_n).ceil() as u64;
    let end = ((c + c0) * big_n).floor() as u64;

    // Reverse index: for each vertex, the probes it can affect.
    let mut watchers: Vec<Vec<usize>> = vec![Vec::new(); g.n()];
    for (i, &v) in probes.iter().enumerate() {
        watchers[v].push(i);
        for &w in g.neighbors(v) {
            watchers[w].push(i);
        }
    }
    let thresholds: Vec<f64> = probes
        .iter()
        .map(|&v| threshold(p.epsilon, k, g.degree(v)))
        .collect();
    let mut summaries: Vec<ProbeSummary> = probes
        .iter()
        .zip(&thresholds)
        .map(|(&v, &th)| ProbeSummary {
            vertex: v,
            deg: g.degree(v),
            threshold: th,
            min_avail: k,
            first_violation: None,
        })
        .collect();

    let mut cfg = greedy_initial_retry(g, k, seed, 16)?;
    let mut rng = crate::rng::replica_stream(seed, 1);
    let mut scratch = Scratch::default();
    let mut updated = vec![false; part.len()];
    let mut mark = vec![0u32; k];
    let mut stamp = 0u32;
    let mut touched = vec![u64::MAX; probes.len()];

    let mut observe = |i: usize,
                       t: u64,
                       cfg: &Configuration,
                       updated: &[bool],
                       summaries: &mut [ProbeSummary],
                       stamp: &mut u32| {
        let v = probes[i];
        *stamp = stamp.wrapping_add(1);
        if *stamp == 0 {
            mark.iter_mut().for_each(|m| *m = 0);
            *stamp = 1;
        }
        let avail = available_count(&cfg.spins, g, v, k, &mut mark, *stamp);
        let up = updated[part.owner[v]];
        let bad = violates(avail, up, thresholds[i]);
        let s = &mut summaries[i];
        s.min_avail = s.min_avail.min(avail);
        if bad && s.first_violation.is_none() {
            s.first_violation = Some(t);
        }
        sink(&UniformityRecord {
            vertex: v,
            deg: s.deg,
            t,
            avail,
            updated: up,
            threshold: thresholds[i],
            violated: bad,
        });
    };

    for t in 1..=end {
        let b = block_step(&mut cfg, g, part, &mut rng, &mut scratch)?;
        updated[b] = true;
        if t == start {
            for i in 0..probes.len() {
                observe(i, t, &cfg, &updated, &mut summaries, &mut stamp);
            }
        } else if t > start {
            for &w in &part.blocks[b].vertices {
                for &i in &watchers[w] {
                    if touched[i] != t {
                        touched[i] = t;
                        observe(i, t, &cfg, &updated, &mut summaries, &mut stamp);
                    }
                }
            }
        }
    }
    let violating = summaries
        .iter()
        .filter(|s| s.first_violation.is_some())
        .count();
    let worst = k as f64 - g.max_degree() as f64;
    Ok(UniformityReport {
        n: g.n(),
        blocks: part.len(),
        k,
        c0,
        c,
        window: (start, end),
        violating,
        fraction: violating as f64 / probes.len().max(1) as f64,
        fraction_ci95: wilson(violating, probes.len()),
        threshold_above_worst_case: thresholds.iter().all(|&th| th > worst),
        probes: summaries,
    })
}
