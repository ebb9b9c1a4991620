//! Coupled pairs of block-dynamics chains: the weighted distance, the
//! vertex-by-vertex maximal block coupling, disagreement tracking and the
//! experiments built on top of them.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocksampler::{marginal_f64, sample_instance, Instance, SampleError};
use crate::dynamics::{
    block_step, debug_asserts, greedy_initial_retry, resample_block, Configuration, DynamicsError,
    Model, Scratch,
};
use crate::graph::Graph;
use crate::partition::BlockPartition;
use crate::rng::{replica_stream, Rng};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

/// Per-vertex metric weights: 1 for block-internal vertices, `n²·deg_out`
/// for vertices on a block boundary.
#[derive(Clone, Debug)]
pub struct DistanceWeights {
    pub boundary: Vec<bool>,
    pub deg_out: Vec<usize>,
    pub n_squared: BigUint,
}

impl DistanceWeights {
    pub fn new(g: &Graph, part: &BlockPartition) -> Self {
        let mut deg_out = vec![0; g.n()];
        for b in &part.blocks {
            for (i, &v) in b.vertices.iter().enumerate() {
                deg_out[v] = b.deg_out[i];
            }
        }
        let n = BigUint::from(g.n());
        DistanceWeights {
            boundary: part.boundary_mask(),
            deg_out,
            n_squared: &n * &n,
        }
    }

    pub fn weight(&self, v: usize) -> BigUint {
        if self.boundary[v] {
            &self.n_squared * BigUint::from(self.deg_out[v])
        } else {
            BigUint::from(1u32)
        }
    }

    /// Distance between two configurations.
    pub fn dist(&self, x: &[usize], y: &[usize]) -> BigUint {
        let mut internal = 0u64;
        let mut outer = 0u64;
        for v in 0..x.len() {
            if x[v] != y[v] {
                if self.boundary[v] {
                    outer += self.deg_out[v] as u64;
                } else {
                    internal += 1;
                }
            }
        }
        BigUint::from(internal) + &self.n_squared * BigUint::from(outer)
    }
}

/// Two chains plus disagreement bookkeeping.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub x: Configuration,
    pub y: Configuration,
    pub diff: Vec<bool>,
    pub diff_count: usize,
    /// Cumulative disagreements on the block boundaries.
    pub d_hist: Vec<bool>,
    pub d_hist_count: usize,
    /// Current disagreements on the block boundaries.
    pub d_now_count: usize,
    pub t: u64,
}

/// One row of the coupled-run CSV stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledRecord {
    pub t: u64,
    pub dist: String,
    pub diff: usize,
    pub d_t: usize,
    pub d_hist: usize,
}

impl CoupledState {
    pub fn new(x: Configuration, y: Configuration, boundary: &[bool]) -> Self {
        let n = x.spins.len();
        let diff: Vec<bool> = (0..n).map(|v| x.spins[v] != y.spins[v]).collect();
        let diff_count = diff.iter().filter(|&&d| d).count();
        let d_hist: Vec<bool> = (0..n).map(|v| diff[v] && boundary[v]).collect();
        let d_now_count = d_hist.iter().filter(|&&d| d).count();
        CoupledState {
            x,
            y,
            diff,
            diff_count,
            d_hist_count: d_now_count,
            d_hist,
            d_now_count,
            t: 0,
        }
    }

    pub fn coalesced(&self) -> bool {
        self.diff_count == 0
    }

    pub fn dist(&self, w: &DistanceWeights) -> BigUint {
        w.dist(&self.x.spins, &self.y.spins)
    }

    pub fn record(&self, w: &DistanceWeights) -> CoupledRecord {
        CoupledRecord {
            t: self.t,
            dist: self.dist(w).to_string(),
            diff: self.diff_count,
            d_t: self.d_now_count,
            d_hist: self.d_hist_count,
        }
    }

    fn refresh(&mut self, vertices: &[usize], boundary: &[bool]) {
        for &v in vertices {
            let d = self.x.spins[v] != self.y.spins[v];
            if d != self.diff[v] {
                self.diff[v] = d;
                if d {
                    self.diff_count += 1;
                } else {
                    self.diff_count -= 1;
                }
                if boundary[v] {
                    if d {
                        self.d_now_count += 1;
                    } else {
                        self.d_now_count -= 1;
                    }
                }
            }
            if d && boundary[v] && !self.d_hist[v] {
                self.d_hist[v] = true;
                self.d_hist_count += 1;
            }
        }
    }

    /// Re-derives the disagreement set and compares it with the incremental
    /// one.
    pub fn check_bookkeeping(&self) -> bool {
        let n = self.x.spins.len();
        (0..n).all(|v| self.diff[v] == (self.x.spins[v] != self.y.spins[v]))
            && self.diff_count == self.diff.iter().filter(|&&d| d).count()
    }
}

/// Maximal coupling of two distributions over `0..p.len()`.
pub fn max_couple(p: &[f64], q: &[f64], rng: &mut Rng) -> (usize, usize) {
    let overlap: Vec<f64> = p.iter().zip(q).map(|(a, b)| a.min(*b)).collect();
    let mass: f64 = overlap.iter().sum();
    let u: f64 = rng.random();
    if u < mass {
        let c = draw(&overlap, mass, rng);
        return (c, c);
    }
    let rp: Vec<f64> = p
        .iter()
        .zip(&overlap)
        .map(|(a, o)| (a - o).max(0.0))
        .collect();
    let rq: Vec<f64> = q
        .iter()
        .zip(&overlap)
        .map(|(a, o)| (a - o).max(0.0))
        .collect();
    let sp: f64 = rp.iter().sum();
    let sq: f64 = rq.iter().sum();
    // Rounding can leave an empty residual; fall back to the full law.
    let cx = if sp > 0.0 {
        draw(&rp, sp, rng)
    } else {
        draw(p, p.iter().sum(), rng)
    };
    let cy = if sq > 0.0 {
        draw(&rq, sq, rng)
    } else {
        draw(q, q.iter().sum(), rng)
    };
    (cx, cy)
}

fn draw(w: &[f64], total: f64, rng: &mut Rng) -> usize {
    let mut u = rng.random::<f64>() * total;
    let last = w.iter().rposition(|&x| x > 0.0).unwrap_or(0);
    for (i, &x) in w.iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        if u < x || i == last {
            return i;
        }
        u -= x;
    }
    last
}

/// Total variation distance.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn instance_for(g: &Graph, set: &[usize], cfg: &Configuration) -> Instance {
    match cfg.model {
        Model::Coloring { k } => Instance::coloring(g, set, &cfg.spins, k),
        Model::Hardcore { lambda } => Instance::hardcore(g, set, &cfg.occupied(), lambda),
    }
}

/// Heat-bath law of a single vertex given its neighbors.
fn single_site_law(g: &Graph, v: usize, cfg: &Configuration) -> Vec<f64> {
    match cfg.model {
        Model::Coloring { k } => {
            let mut free = vec![true; k];
            for &w in g.neighbors(v) {
                if w != v && cfg.spins[w] < k {
                    free[cfg.spins[w]] = false;
                }
            }
            let cnt = free.iter().filter(|&&f| f).count() as f64;
            free.iter()
                .map(|&f| if f { 1.0 / cnt } else { 0.0 })
                .collect()
        }
        Model::Hardcore { lambda } => {
            if g.neighbors(v).iter().any(|&w| cfg.spins[w] == 1) {
                vec![1.0, 0.0]
            } else {
                vec![1.0 / (1.0 + lambda), lambda / (1.0 + lambda)]
            }
        }
    }
}

/// Breadth-first order of a block from `seeds`, ties by vertex index, with
/// cycle vertices moved to the end.
fn coupling_order(g: &Graph, part: &BlockPartition, b: usize, seeds: &[usize]) -> Vec<usize> {
    let block = &part.blocks[b];
    let mut order = Vec::with_capacity(block.len());
    let mut seen = vec![false; block.len()];
    let mut queue = std::collections::VecDeque::new();
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    for s in seeds {
        let i = block.position(s).unwrap();
        if !seen[i] {
            seen[i] = true;
            queue.push_back(s);
        }
    }
    loop {
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &w in g.neighbors(u) {
                if let Some(i) = block.position(w) {
                    if !seen[i] {
                        seen[i] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        match (0..block.len()).find(|&i| !seen[i]) {
            Some(i) => {
                seen[i] = true;
                queue.push_back(block.vertices[i]);
            }
            None => break,
        }
    }
    let (mut off, on): (Vec<usize>, Vec<usize>) =
        order.into_iter().partition(|&v| !block.on_cycle(v));
    off.extend(on);
    off
}

/// Coupled update of block `b` in both chains.
pub fn coupled_block_update(
    s: &mut CoupledState,
    g: &Graph,
    part: &BlockPartition,
    b: usize,
    rng: &mut Rng,
) -> Result<(), CouplingError> {
    update_with(s, g, part, b, rng, &part.boundary_mask())
}

fn update_with(
    s: &mut CoupledState,
    g: &Graph,
    part: &BlockPartition,
    b: usize,
    rng: &mut Rng,
    boundary: &[bool],
) -> Result<(), CouplingError> {
    let block = &part.blocks[b];
    let boundary_disagrees = block.outer_boundary.iter().any(|&u| s.diff[u]);
    if !boundary_disagrees {
        // Identical conditional laws: one shared sample.
        let mut scratch = Scratch::default();
        resample_block(&mut s.x, g, part, b, rng, &mut scratch)?;
        for &v in &block.vertices {
            s.y.spins[v] = s.x.spins[v];
        }
    } else if block.len() == 1 {
        let v = block.vertices[0];
        let p = single_site_law(g, v, &s.x);
        let q = single_site_law(g, v, &s.y);
        let (a, c) = max_couple(&p, &q, rng);
        s.x.spins[v] = a;
        s.y.spins[v] = c;
    } else {
        let seeds: Vec<usize> = block
            .outer_boundary
            .iter()
            .filter(|&&u| s.diff[u])
            .flat_map(|&u| {
                g.neighbors(u)
                    .iter()
                    .copied()
                    .filter(|&w| block.contains(w))
            })
            .collect();
        let order = coupling_order(g, part, b, &seeds);
        let mut uncolored: Vec<usize> = block.vertices.clone();
        let mut done = vec![false; block.len()];
        loop {
            let disagrees = |w: usize, done: &[bool]| match block.position(w) {
                Some(i) => done[i] && s.x.spins[w] != s.y.spins[w],
                None => s.x.spins[w] != s.y.spins[w],
            };
            let next = order.iter().copied().find(|&v| {
                !done[block.position(v).unwrap()]
                    && g.neighbors(v).iter().any(|&w| disagrees(w, &done))
            });
            let Some(v) = next else { break };
            let li = uncolored.binary_search(&v).unwrap();
            let px = marginal_f64(&instance_for(g, &uncolored, &s.x), li)?;
            let py = marginal_f64(&instance_for(g, &uncolored, &s.y), li)?;
            let (a, c) = max_couple(&px, &py, rng);
            s.x.spins[v] = a;
            s.y.spins[v] = c;
            done[block.position(v).unwrap()] = true;
            uncolored.remove(li);
        }
        if !uncolored.is_empty() {
            // No uncolored vertex sees a disagreement, so both conditionals
            // of the remainder coincide.
            let inst = instance_for(g, &uncolored, &s.x);
            let sample = sample_instance(&inst, rng)?;
            for (&v, st) in uncolored.iter().zip(sample) {
                s.x.spins[v] = st;
                s.y.spins[v] = st;
            }
        }
    }
    s.x.step_count += 1;
    s.y.step_count += 1;
    s.t += 1;
    s.refresh(&block.vertices, boundary);
    if debug_asserts() {
        assert!(s.x.is_valid_around(g, &block.vertices) && s.y.is_valid_around(g, &block.vertices));
        assert!(s.check_bookkeeping());
    }
    Ok(())
}

/// A coupled run with cached boundary mask.
pub struct CoupledChain<'a> {
    pub g: &'a Graph,
    pub part: &'a BlockPartition,
    pub state: CoupledState,
    pub rng: Rng,
    boundary: Vec<bool>,
}

impl<'a> CoupledChain<'a> {
    pub fn new(
        g: &'a Graph,
        part: &'a BlockPartition,
        x: Configuration,
        y: Configuration,
        rng: Rng,
    ) -> Self {
        let boundary = part.boundary_mask();
        let state = CoupledState::new(x, y, &boundary);
        CoupledChain {
            g,
            part,
            state,
            rng,
            boundary,
        }
    }

    /// One coupled step on a uniformly chosen block; returns the block.
    pub fn step(&mut self) -> Result<usize, CouplingError> {
        let b = self.rng.random_range(0..self.part.len());
        self.update(b)?;
        Ok(b)
    }

    /// Coupled update of a given block.
    pub fn update(&mut self, b: usize) -> Result<(), CouplingError> {
        update_with(
            &mut self.state,
            self.g,
            self.part,
            b,
            &mut self.rng,
            &self.boundary,
        )
    }
}

/// Contraction estimate: mean one-step ratio `dist(X',Y')/dist(X,Y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub trials: usize,
    pub mean_ratio: f64,
    pub std_error: f64,
    /// `1 - 1/(2NΔ)`.
    pub bound: f64,
    pub blocks: usize,
    pub max_degree: usize,
}

/// Runs `pairs` single-disagreement one-step trials. The base state comes
/// from a block-dynamics run started at a greedy coloring and advanced `N`
/// steps between trials.
pub fn contraction_experiment(
    g: &Graph,
    part: &BlockPartition,
    k: usize,
    pairs: usize,
    seed: u64,
) -> Result<ContractionReport, CouplingError> {
    let delta = g.max_degree();
    if k <= 2 * delta {
        return Err(CouplingError::Precondition(format!(
            "k = {k} must exceed 2Δ = {}",
            2 * delta
        )));
    }
    if pairs == 0 {
        return Err(CouplingError::Precondition("need at least one pair".into()));
    }
    if let Some(girth) = g.girth() {
        let limit = (girth / 2).saturating_sub(3);
        if part
            .blocks
            .iter()
            .any(|b| b.len() > 1 && b.diameter(g) > limit)
        {
            return Err(CouplingError::Precondition(format!(
                "a block has diameter above g/2-3 = {limit}"
            )));
        }
    }
    let w = DistanceWeights::new(g, part);
    let threads = rayon::current_num_threads().max(1);
    let chunks = threads * 4;
    let per = pairs.div_ceil(chunks);
    let ratios: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>, CouplingError> {
            let todo = per.min(pairs.saturating_sub(c * per));
            let mut rng = replica_stream(seed, c as u64);
            let mut base = greedy_initial_retry(g, k, seed.wrapping_add(c as u64), 16)?;
            let mut scratch = Scratch::default();
            for _ in 0..10 * part.len() {
                block_step(&mut base, g, part, &mut rng, &mut scratch)?;
            }
            let mut out = Vec::with_capacity(todo);
            for _ in 0..todo {
                for _ in 0..part.len() {
                    block_step(&mut base, g, part, &mut rng, &mut scratch)?;
                }
                let u = rng.random_range(0..g.n());
                let law = single_site_law(g, u, &base);
                let alts: Vec<usize> = (0..k)
                    .filter(|&c| law[c] > 0.0 && c != base.spins[u])
                    .collect();
                let mut y = base.clone();
                y.spins[u] = alts[rng.random_range(0..alts.len())];
                let mut chain = CoupledChain {
                    g,
                    part,
                    state: CoupledState::new(base.clone(), y, &w.boundary),
                    rng: rng.clone(),
                    boundary: w.boundary.clone(),
                };
                let d0 = chain.state.dist(&w);
                chain.step()?;
                rng = chain.rng;
                let d1 = chain.state.dist(&w);
                out.push(ratio(&d1, &d0));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let all: Vec<f64> = ratios.into_iter().flatten().collect();
    let (mean, se) = mean_se(&all);
    Ok(ContractionReport {
        trials: all.len(),
        mean_ratio: mean,
        std_error: se,
        bound: 1.0 - 1.0 / (2.0 * part.len() as f64 * delta.max(1) as f64),
        blocks: part.len(),
        max_degree: delta,
    })
}

fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    if b.is_zero() {
        return f64::NAN;
    }
    // Both fit in f64 comfortably for desk-scale n.
    a.to_f64().unwrap() / b.to_f64().unwrap()
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Empirical propagation frequencies of a single boundary disagreement at
/// `u_star` into the vertices of block `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub block: usize,
    pub u_star: usize,
    pub trials: usize,
    /// `(vertex, frequency, std error)` for each block vertex.
    pub frequencies: Vec<(usize, f64, f64)>,
}

pub fn propagation_probe(
    g: &Graph,
    part: &BlockPartition,
    k: usize,
    b: usize,
    u_star: usize,
    trials: usize,
    seed: u64,
) -> Result<PropagationReport, CouplingError> {
    let block = &part.blocks[b];
    if !block.outer_boundary.contains(&u_star) {
        return Err(CouplingError::Precondition(format!(
            "{u_star} is not on the outer boundary of block {b}"
        )));
    }
    let mut rng = replica_stream(seed, 0);
    let mut base = greedy_initial_retry(g, k, seed, 16)?;
    let mut scratch = Scratch::default();
    for _ in 0..20 * part.len() {
        block_step(&mut base, g, part, &mut rng, &mut scratch)?;
    }
    let boundary = part.boundary_mask();
    let mut hits = vec![0usize; block.len()];
    let mut done = 0;
    while done < trials {
        for _ in 0..part.len() {
            block_step(&mut base, g, part, &mut rng, &mut scratch)?;
        }
        let law = single_site_law(g, u_star, &base);
        let alts: Vec<usize> = (0..k)
            .filter(|&c| law[c] > 0.0 && c != base.spins[u_star])
            .collect();
        if alts.is_empty() {
            continue;
        }
        let mut y = base.clone();
        y.spins[u_star] = alts[rng.random_range(0..alts.len())];
        let mut s = CoupledState::new(base.clone(), y, &boundary);
        coupled_block_update(&mut s, g, part, b, &mut rng)?;
        for (i, &v) in block.vertices.iter().enumerate() {
            if s.diff[v] {
                hits[i] += 1;
            }
        }
        done += 1;
    }
    let t = trials.max(1) as f64;
    let frequencies = block
        .vertices
        .iter()
        .zip(&hits)
        .map(|(&v, &h)| {
            let p = h as f64 / t;
            (v, p, (p * (1.0 - p) / t).sqrt())
        })
        .collect();
    Ok(PropagationReport {
        block: b,
        u_star,
        trials,
        frequencies,
    })
}

/// Coalescence times of coupled chains started from two independent
/// greedy colorings; `None` when censored at `t_max`.
pub fn coupling_time(
    g: &Graph,
    part: &BlockPartition,
    k: usize,
    t_max: u64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<Option<u64>>, CouplingError> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let rng = replica_stream(seed, r as u64);
            let x = greedy_initial_retry(g, k, seed.wrapping_add(2 * r as u64), 16)?;
            let y = greedy_initial_retry(g, k, seed.wrapping_add(2 * r as u64 + 1), 16)?;
            let mut chain = CoupledChain::new(g, part, x, y, rng);
            while chain.state.t < t_max {
                if chain.state.coalesced() {
                    return Ok(Some(chain.state.t));
                }
                chain.step()?;
            }
            Ok(chain.state.coalesced().then_some(chain.state.t))
        })
        .collect()
}
