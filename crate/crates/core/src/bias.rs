//! Exact marginal-bias checks for block vertices: the low-degree bound
//! `1/((1+ε)·max{1,|N(u)∖B⁺|})` and the deep-vertex bound
//! `(k−2)^{-1} + 20/d²`.

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::blocksampler::{marginal_exact, Instance, SampleError};
use crate::graph::Graph;
use crate::params::Params;
use crate::partition::Block;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// Low-degree, off-cycle vertex with no high-degree neighbor.
    LowDegree,
    /// High-degree vertex, neighbor of one, or cycle vertex.
    Deep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    pub vertex: usize,
    pub kind: BoundKind,
    pub max_marginal: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn low_degree_bound(epsilon: f64, free_neighbors: usize) -> f64 {
    1.0 / ((1.0 + epsilon) * free_neighbors.max(1) as f64)
}

pub fn deep_bound(k: usize, d: f64) -> f64 {
    1.0 / (k as f64 - 2.0) + 20.0 / (d * d)
}

/// Largest exact conditional marginal of `v` over colors, with the block
/// minus `pinned` free and everything else fixed by `sigma`.
fn max_marginal(
    g: &Graph,
    block: &Block,
    pinned: &[usize],
    sigma: &[usize],
    k: usize,
    v: usize,
) -> Result<f64, SampleError> {
    let set: Vec<usize> = block
        .vertices
        .iter()
        .copied()
        .filter(|w| !pinned.contains(w))
        .collect();
    let li = set
        .binary_search(&v)
        .map_err(|_| SampleError::NotInBlock(v))?;
    let inst = Instance::coloring(g, &set, sigma, k);
    let m = marginal_exact(&inst, li)?;
    Ok(m.iter()
        .map(|x| x.to_f64().unwrap_or(f64::NAN))
        .fold(0.0, f64::max))
}

/// Checks every eligible vertex of `block`. `sigma` must be a proper
/// coloring of the block and its outer boundary; `b_prime` is the pinned
/// subset `B'` used for the low-degree bound.
pub fn check_block(
    g: &Graph,
    block: &Block,
    sigma: &[usize],
    p: &Params,
    b_prime: &[usize],
) -> Result<Vec<BiasCheck>, SampleError> {
    let high = |v: usize| !p.is_low_degree(g.degree(v));
    let mut out = Vec::new();
    for &u in &block.vertices {
        let near_high = g.neighbors(u).iter().any(|&w| high(w));
        if !high(u) && !near_high && !block.on_cycle(u) {
            if b_prime.contains(&u) {
                continue;
            }
            let free = g
                .neighbors(u)
                .iter()
                .filter(|&&w| block.contains(w) && !b_prime.contains(&w))
                .count();
            let bound = low_degree_bound(p.epsilon, free);
            let m = max_marginal(g, block, b_prime, sigma, p.k, u)?;
            out.push(BiasCheck {
                vertex: u,
                kind: BoundKind::LowDegree,
                max_marginal: m,
                bound,
                ok: m <= bound,
            });
        } else {
            let bound = deep_bound(p.k, p.d);
            let mut m = 0.0f64;
            for &x in g.neighbors(u) {
                let pin: Vec<usize> = if block.contains(x) {
                    vec![x]
                } else {
                    Vec::new()
                };
                m = m.max(max_marginal(g, block, &pin, sigma, p.k, u)?);
            }
            if g.degree(u) == 0 {
                m = max_marginal(g, block, &[], sigma, p.k, u)?;
            }
            out.push(BiasCheck {
                vertex: u,
                kind: BoundKind::Deep,
                max_marginal: m,
                bound,
                ok: m <= bound,
            });
        }
    }
    Ok(out)
}
