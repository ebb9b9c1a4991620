//! Independent Bernoulli site percolation inside a block, the β-weights and
//! Z statistic, tail experiments and domination tests against the real
//! coupled block update.

use std::collections::VecDeque;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{coupled_block_update, CoupledState, CouplingError};
use crate::dynamics::{
    block_step, greedy_initial_retry, resample_block, Configuration, DynamicsError, Scratch,
};
use crate::graph::Graph;
use crate::params::Params;
use crate::partition::{Block, BlockPartition};
use crate::rng::{replica_stream, Rng};

#[derive(Debug, Error)]
pub enum PercolationError {
    #[error("vertex {0} is not in the block")]
    NotInBlock(usize),
    #[error("vertex {0} is not on the outer boundary of the block")]
    NotOuterBoundary(usize),
    #[error("slack probability undefined at vertex {vertex}: k = {k} <= deg = {deg}")]
    SlackUndefined { vertex: usize, k: usize, deg: usize },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Simple,
    Slack,
}

/// Site probability `p_v` of a block vertex.
pub fn percolation_prob(
    g: &Graph,
    block: &Block,
    v: usize,
    p: &Params,
    variant: Variant,
) -> Result<f64, PercolationError> {
    let i = block.position(v).ok_or(PercolationError::NotInBlock(v))?;
    let deg = g.degree(v);
    if !p.is_low_degree(deg) || block.on_cycle(v) {
        return Ok(1.0);
    }
    let simple = 1.0 / ((1.0 + p.epsilon) * block.deg_in[i].max(1) as f64);
    let q = match variant {
        Variant::Simple => simple,
        Variant::Slack => {
            if p.k <= deg {
                return Err(PercolationError::SlackUndefined {
                    vertex: v,
                    k: p.k,
                    deg,
                });
            }
            (1.0 + p.delta) * simple.min(1.0 / (p.k - deg) as f64)
        }
    };
    Ok(q.min(1.0))
}

/// `p_v` for every block vertex, aligned with `block.vertices`.
pub fn block_probabilities(
    g: &Graph,
    block: &Block,
    p: &Params,
    variant: Variant,
) -> Result<Vec<f64>, PercolationError> {
    block
        .vertices
        .iter()
        .map(|&v| percolation_prob(g, block, v, p, variant))
        .collect()
}

/// β-weights over `B ∪ {u*}`, rooted at `u*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaWeights {
    pub u_star: usize,
    /// Aligned with the block vertices.
    pub beta: Vec<f64>,
    /// Parent in the rooted spanning tree; `u*` for its block neighbors.
    pub parent: Vec<usize>,
}

fn check_u_star(g: &Graph, block: &Block, u_star: usize) -> Result<(), PercolationError> {
    if block.contains(u_star) || !g.neighbors(u_star).iter().any(|&w| block.contains(w)) {
        return Err(PercolationError::NotOuterBoundary(u_star));
    }
    Ok(())
}

/// Rooted BFS tree of `B ∪ {u*}`, ties broken by vertex index. On
/// unicyclic blocks the smallest cycle edge is removed first.
/// Returns the parents and the block positions in BFS order.
fn rooted_parents(g: &Graph, block: &Block, u_star: usize) -> (Vec<usize>, Vec<usize>) {
    let dropped = block.cycle.as_ref().map(|c| {
        let mut edges: Vec<(usize, usize)> = (0..c.len())
            .map(|i| {
                (
                    c[i].min(c[(i + 1) % c.len()]),
                    c[i].max(c[(i + 1) % c.len()]),
                )
            })
            .collect();
        edges.sort_unstable();
        edges[0]
    });
    let cut = |a: usize, b: usize| dropped == Some((a.min(b), a.max(b)));
    let mut parent = vec![usize::MAX; block.len()];
    let mut order = Vec::with_capacity(block.len());
    let mut queue = VecDeque::from([u_star]);
    while let Some(u) = queue.pop_front() {
        for &w in g.neighbors(u) {
            if let Some(i) = block.position(w) {
                if parent[i] == usize::MAX && !cut(u, w) {
                    parent[i] = u;
                    order.push(i);
                    queue.push_back(w);
                }
            }
        }
    }
    (parent, order)
}

pub fn beta_weights(
    g: &Graph,
    block: &Block,
    u_star: usize,
    p: &Params,
    variant: Variant,
) -> Result<BetaWeights, PercolationError> {
    check_u_star(g, block, u_star)?;
    let probs = block_probabilities(g, block, p, variant)?;
    let (parent, order) = rooted_parents(g, block, u_star);
    let mut beta = vec![f64::NAN; block.len()];
    let eps2 = p.epsilon * p.epsilon;
    for i in order {
        let par = parent[i];
        let (b_par, din_par) = if par == u_star {
            (1.0, 1usize)
        } else {
            let j = block.position(par).unwrap();
            (beta[j], block.deg_in[j].max(1))
        };
        beta[i] = (b_par / ((1.0 + eps2) * din_par as f64) / probs[i]).min(1.0);
    }
    Ok(BetaWeights {
        u_star,
        beta,
        parent,
    })
}

/// One percolation draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationSample {
    /// Revealed members of `S_p`.
    pub s_p: Vec<usize>,
    pub cluster: Vec<usize>,
    pub boundary_hits: Vec<usize>,
    pub z: f64,
}

/// Cluster of `u*` given a membership oracle, revealed in BFS order from the
/// block neighbors of `u*`.
pub fn grow_cluster_with(
    g: &Graph,
    block: &Block,
    u_star: usize,
    beta: Option<&[f64]>,
    mut member: impl FnMut(usize) -> bool,
) -> PercolationSample {
    let mut revealed = vec![false; block.len()];
    let mut s_p = Vec::new();
    let mut cluster = Vec::new();
    let mut queue = VecDeque::from([u_star]);
    while let Some(u) = queue.pop_front() {
        for &w in g.neighbors(u) {
            if let Some(i) = block.position(w) {
                if !revealed[i] {
                    revealed[i] = true;
                    if member(i) {
                        s_p.push(w);
                        cluster.push(w);
                        queue.push_back(w);
                    }
                }
            }
        }
    }
    cluster.sort_unstable();
    let boundary_hits: Vec<usize> = cluster
        .iter()
        .copied()
        .filter(|&w| block.inner_boundary.binary_search(&w).is_ok())
        .collect();
    let z = beta.map_or(0.0, |b| {
        cluster
            .iter()
            .map(|&w| b[block.position(w).unwrap()])
            .fold(0.0, |a, x| a + x)
    });
    PercolationSample {
        s_p,
        cluster,
        boundary_hits,
        z,
    }
}

pub fn grow_cluster(
    g: &Graph,
    block: &Block,
    u_star: usize,
    p: &Params,
    variant: Variant,
    rng: &mut Rng,
) -> Result<PercolationSample, PercolationError> {
    let beta = beta_weights(g, block, u_star, p, variant)?;
    let probs = block_probabilities(g, block, p, variant)?;
    Ok(grow_cluster_with(g, block, u_star, Some(&beta.beta), |i| {
        rng.random::<f64>() < probs[i]
    }))
}

/// 95% Wilson score interval.
pub fn wilson(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let nf = n as f64;
    let ph = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (ph + z * z / (2.0 * nf)) / denom;
    let half = z * (ph * (1.0 - ph) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub l: usize,
    pub survival: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Weighted least-squares fit of `ln S(ℓ) = a + b·ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub slope_ci95: (f64, f64),
    pub points: usize,
}

/// Empirical survival `Pr[X ≥ ℓ]` for `ℓ = 0..=max`.
pub fn survival(values: &[f64]) -> Vec<SurvivalPoint> {
    let n = values.len();
    let max = values.iter().copied().fold(0.0f64, f64::max).ceil() as usize;
    (0..=max)
        .map(|l| {
            let c = values.iter().filter(|&&x| x >= l as f64).count();
            let (lo, hi) = wilson(c, n);
            SurvivalPoint {
                l,
                survival: c as f64 / n.max(1) as f64,
                lo,
                hi,
            }
        })
        .collect()
}

/// Fits points with `ℓ ≥ 1`, `S < 1` and at least `min_hits` exceedances.
/// Weights are the delta-method inverse variances `nS/(1−S)`.
pub fn fit_log_survival(points: &[SurvivalPoint], n: usize, min_hits: usize) -> Option<LogFit> {
    let use_pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| {
            p.l >= 1
                && p.survival < 1.0
                && p.survival * n as f64 >= min_hits as f64 - 1e-9
                && p.survival > 0.0
        })
        .map(|p| {
            (
                p.l as f64,
                p.survival.ln(),
                n as f64 * p.survival / (1.0 - p.survival),
            )
        })
        .collect();
    if use_pts.len() < 2 {
        return None;
    }
    let sw: f64 = use_pts.iter().map(|p| p.2).sum();
    let mx = use_pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = use_pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = use_pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = use_pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let se = (1.0 / sxx).sqrt();
    let z = 1.959_963_984_540_054;
    Some(LogFit {
        slope,
        intercept: my - slope * mx,
        slope_se: se,
        slope_ci95: (slope - z * se, slope + z * se),
        points: use_pts.len(),
    })
}

/// One CSV row of a tail run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub trial: usize,
    pub cluster: usize,
    pub p: usize,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub trials: usize,
    pub variant: Variant,
    pub survival_p: Vec<SurvivalPoint>,
    pub survival_z: Vec<SurvivalPoint>,
    pub fit_p: Option<LogFit>,
    pub fit_z: Option<LogFit>,
    pub mean_cluster: f64,
    /// Boundary vertices with `β < 1/2`.
    pub beta_violations: usize,
}

/// Minimum exceedances for a survival point to enter the fit.
pub const FIT_MIN_HITS: usize = 10;

pub fn tail_experiment(
    g: &Graph,
    block: &Block,
    u_star: usize,
    p: &Params,
    variant: Variant,
    trials: usize,
    seed: u64,
) -> Result<(TailReport, Vec<TailRow>), PercolationError> {
    if trials == 0 {
        return Err(PercolationError::NoTrials);
    }
    let beta = beta_weights(g, block, u_star, p, variant)?;
    let probs = block_probabilities(g, block, p, variant)?;
    let chunk = 4096;
    let rows: Vec<TailRow> = (0..trials.div_ceil(chunk))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = replica_stream(seed, c as u64);
            let lo = c * chunk;
            let hi = (lo + chunk).min(trials);
            let mut out = Vec::with_capacity(hi - lo);
            for trial in lo..hi {
                let s = grow_cluster_with(g, block, u_star, Some(&beta.beta), |i| {
                    rng.random::<f64>() < probs[i]
                });
                out.push(TailRow {
                    trial,
                    cluster: s.cluster.len(),
                    p: s.boundary_hits.len(),
                    z: s.z,
                });
            }
            out
        })
        .collect();
    let pv: Vec<f64> = rows.iter().map(|r| r.p as f64).collect();
    let zv: Vec<f64> = rows.iter().map(|r| r.z).collect();
    let survival_p = survival(&pv);
    let survival_z = survival(&zv);
    let beta_violations = block
        .vertices
        .iter()
        .zip(&beta.beta)
        .filter(|(v, &b)| block.inner_boundary.binary_search(v).is_ok() && b < 0.5)
        .count();
    Ok((
        TailReport {
            trials,
            variant,
            fit_p: fit_log_survival(&survival_p, trials, FIT_MIN_HITS),
            fit_z: fit_log_survival(&survival_z, trials, FIT_MIN_HITS),
            survival_p,
            survival_z,
            mean_cluster: rows.iter().map(|r| r.cluster as f64).sum::<f64>() / trials as f64,
            beta_violations,
        },
        rows,
    ))
}

/// Survival comparison at one threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationPoint {
    pub l: usize,
    pub real: f64,
    pub percolation: f64,
    pub sigma: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub block: usize,
    pub block_size: usize,
    pub u_star: usize,
    pub trials: usize,
    pub points: Vec<DominationPoint>,
    /// `Pr[real ≥ ℓ] ≤ Pr[perc ≥ ℓ] + 3σ` at every ℓ.
    pub dominated: bool,
}

/// Compares `Pr[|D ∩ ∂_in B| ≥ ℓ]` after a coupled update of block `b` with
/// a single disagreement at `u*` against `Pr[|P_{u*}| ≥ ℓ]`.
///
/// Between trials the blocks owning `∂_out B` and `B` itself are resampled
/// once each, so the boundary configuration follows a Gibbs scan started
/// from a burnt-in state.
#[allow(clippy::too_many_arguments)]
pub fn domination_test(
    g: &Graph,
    part: &BlockPartition,
    p: &Params,
    b: usize,
    u_star: usize,
    variant: Variant,
    trials: usize,
    seed: u64,
) -> Result<DominationReport, PercolationError> {
    if trials == 0 {
        return Err(PercolationError::NoTrials);
    }
    let block = &part.blocks[b];
    check_u_star(g, block, u_star)?;
    let probs = block_probabilities(g, block, p, variant)?;
    let mut neighbor_blocks: Vec<usize> = block
        .outer_boundary
        .iter()
        .map(|&u| part.owner[u])
        .collect();
    neighbor_blocks.push(b);
    neighbor_blocks.sort_unstable();
    neighbor_blocks.dedup();
    let boundary = part.boundary_mask();

    let chunks = (rayon::current_num_threads() * 2).clamp(1, trials);
    let per = trials.div_ceil(chunks);
    let counts: Vec<(Vec<usize>, Vec<usize>)> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<_, PercolationError> {
            let todo = per.min(trials.saturating_sub(c * per));
            let mut rng = replica_stream(seed, c as u64);
            let mut x = greedy_initial_retry(g, p.k, seed.wrapping_add(c as u64), 16)?;
            let mut scratch = Scratch::default();
            for _ in 0..5 * part.len() {
                block_step(&mut x, g, part, &mut rng, &mut scratch)?;
            }
            let mut real = Vec::with_capacity(todo);
            let mut perc = Vec::with_capacity(todo);
            while real.len() < todo {
                for &nb in &neighbor_blocks {
                    resample_block(&mut x, g, part, nb, &mut rng, &mut scratch)?;
                }
                let Some(y) = recolor_one(g, &x, u_star, p.k, &mut rng) else {
                    continue;
                };
                let mut s = CoupledState::new(x.clone(), y, &boundary);
                coupled_block_update(&mut s, g, part, b, &mut rng)?;
                real.push(block.inner_boundary.iter().filter(|&&w| s.diff[w]).count());
                let sample =
                    grow_cluster_with(g, block, u_star, None, |i| rng.random::<f64>() < probs[i]);
                perc.push(sample.boundary_hits.len());
            }
            Ok((real, perc))
        })
        .collect::<Result<_, _>>()?;
    let real: Vec<usize> = counts.iter().flat_map(|c| c.0.iter().copied()).collect();
    let perc: Vec<usize> = counts.iter().flat_map(|c| c.1.iter().copied()).collect();
    let report = compare_survival(&real, &perc);
    Ok(DominationReport {
        block: b,
        block_size: block.len(),
        u_star,
        trials,
        dominated: report.iter().all(|pt| pt.ok),
        points: report,
    })
}

/// `Y` equal to `X` except at `u`, which takes a uniformly chosen other
/// color compatible with its neighbors.
pub fn recolor_one(
    g: &Graph,
    x: &Configuration,
    u: usize,
    k: usize,
    rng: &mut Rng,
) -> Option<Configuration> {
    let mut free = vec![true; k];
    for &w in g.neighbors(u) {
        if x.spins[w] < k {
            free[x.spins[w]] = false;
        }
    }
    free[x.spins[u]] = false;
    let alts: Vec<usize> = (0..k).filter(|&c| free[c]).collect();
    if alts.is_empty() {
        return None;
    }
    let mut y = x.clone();
    y.spins[u] = alts[rng.random_range(0..alts.len())];
    Some(y)
}

/// Pointwise survival comparison with a 3σ allowance.
pub fn compare_survival(real: &[usize], perc: &[usize]) -> Vec<DominationPoint> {
    let max = real.iter().chain(perc).copied().max().unwrap_or(0);
    let nr = real.len().max(1) as f64;
    let np = perc.len().max(1) as f64;
    (0..=max)
        .map(|l| {
            let r = real.iter().filter(|&&x| x >= l).count() as f64 / nr;
            let q = perc.iter().filter(|&&x| x >= l).count() as f64 / np;
            let sigma = (r * (1.0 - r) / nr + q * (1.0 - q) / np).sqrt();
            DominationPoint {
                l,
                real: r,
                percolation: q,
                sigma,
                ok: r <= q + 3.0 * sigma,
            }
        })
        .collect()
}
