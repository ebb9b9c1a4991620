//! Wall-clock cost of exact block updates and log-log exponent fits.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blocksampler::sample_block_coloring;
use crate::dynamics::{greedy_initial_retry, DynamicsError};
use crate::rng::seeded;
use crate::synth::{build, Shape, SynthSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub block_size: usize,
    pub k: usize,
    /// Median seconds per block update over the batches.
    pub seconds: f64,
}

/// Times exact resampling of a random recursive tree block of `m` vertices
/// with a sparse pendant boundary (total degree ≤ 4), `k` colors.
pub fn time_update(
    m: usize,
    k: usize,
    updates: usize,
    batches: usize,
    seed: u64,
) -> Result<CostPoint, DynamicsError> {
    let s = build(&SynthSpec {
        m,
        d: 2.0,
        shape: Shape::Recursive,
        cap: Some(4),
        cycle: None,
        hub_degree: None,
        seed,
    });
    let cfg = greedy_initial_retry(&s.g, k, seed, 16)?;
    let block = &s.part.blocks[s.block];
    let mut rng = seeded(seed ^ 0x5eed);
    // Warm up allocations and caches.
    sample_block_coloring(&s.g, block, &cfg.spins, k, &mut rng)?;
    let mut times = Vec::with_capacity(batches);
    for _ in 0..batches.max(1) {
        let t = Instant::now();
        for _ in 0..updates.max(1) {
            std::hint::black_box(sample_block_coloring(&s.g, block, &cfg.spins, k, &mut rng)?);
        }
        times.push(t.elapsed().as_secs_f64() / updates.max(1) as f64);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(CostPoint {
        block_size: m,
        k,
        seconds: times[times.len() / 2],
    })
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
