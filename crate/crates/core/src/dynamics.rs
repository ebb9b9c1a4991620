//! Heat-bath Glauber dynamics, block dynamics and their hard-core variants.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocksampler::{sample_block_coloring, sample_block_hardcore, SampleError};
use crate::graph::Graph;
use crate::partition::BlockPartition;
use crate::rng::{replica_stream, seeded, Rng};

/// Whether `BLOCKMIX_DEBUG_ASSERTS=1` is set; read once.
pub fn debug_asserts() -> bool {
    static FLAG: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    *FLAG.get_or_init(|| std::env::var("BLOCKMIX_DEBUG_ASSERTS").is_ok_and(|v| v == "1"))
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("greedy coloring got stuck at vertex {vertex} after {attempts} attempt(s)")]
    GreedyStuck { vertex: usize, attempts: usize },
    #[error("k = {k} < Δ + 2 = {need}; Glauber dynamics may be reducible (use force to override)")]
    NotErgodic { k: usize, need: usize },
    #[error("block dynamics smoke test visited a single state (use force to override)")]
    SmokeTest,
    #[error("block dynamics needs a partition")]
    MissingPartition,
    #[error("partition covers {got} vertices, graph has {want}")]
    PartitionMismatch { got: usize, want: usize },
    #[error("configuration is not a valid state of the model")]
    InvalidState,
    #[error("model mismatch: {0}")]
    ModelMismatch(&'static str),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "model")]
pub enum Model {
    Coloring { k: usize },
    Hardcore { lambda: f64 },
}

/// A chain state. For colorings `spins[v]` is the color, for the hard-core
/// model it is 1 for occupied and 0 for vacant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub model: Model,
    pub spins: Vec<usize>,
    pub step_count: u64,
    /// Step at which each unit (block, or vertex for Glauber) was last
    /// updated; `None` if never.
    pub last_update: Vec<Option<u64>>,
}

impl Configuration {
    pub fn coloring(colors: Vec<usize>, k: usize) -> Self {
        Configuration {
            model: Model::Coloring { k },
            spins: colors,
            step_count: 0,
            last_update: Vec::new(),
        }
    }

    pub fn hardcore(occupied: &[bool], lambda: f64) -> Self {
        Configuration {
            model: Model::Hardcore { lambda },
            spins: occupied.iter().map(|&o| o as usize).collect(),
            step_count: 0,
            last_update: Vec::new(),
        }
    }

    pub fn empty_hardcore(n: usize, lambda: f64) -> Self {
        Self::hardcore(&vec![false; n], lambda)
    }

    pub fn k(&self) -> Option<usize> {
        match self.model {
            Model::Coloring { k } => Some(k),
            Model::Hardcore { .. } => None,
        }
    }

    pub fn occupied(&self) -> Vec<bool> {
        self.spins.iter().map(|&s| s == 1).collect()
    }

    /// Proper coloring, or independent set.
    pub fn is_valid(&self, g: &Graph) -> bool {
        if self.spins.len() != g.n() {
            return false;
        }
        match self.model {
            Model::Coloring { k } => {
                self.spins.iter().all(|&c| c < k)
                    && g.edges().all(|(u, v)| self.spins[u] != self.spins[v])
            }
            Model::Hardcore { .. } => {
                self.spins.iter().all(|&s| s <= 1)
                    && g.edges().all(|(u, v)| self.spins[u] + self.spins[v] < 2)
            }
        }
    }

    /// Validity restricted to edges touching `vertices`.
    pub fn is_valid_around(&self, g: &Graph, vertices: &[usize]) -> bool {
        vertices.iter().all(|&v| {
            g.neighbors(v).iter().all(|&w| match self.model {
                Model::Coloring { k } => self.spins[v] < k && self.spins[v] != self.spins[w],
                Model::Hardcore { .. } => self.spins[v] + self.spins[w] < 2,
            })
        })
    }

    fn mark_updated(&mut self, unit: usize, units: usize) {
        if self.last_update.len() != units {
            self.last_update = vec![None; units];
        }
        self.last_update[unit] = Some(self.step_count);
    }
}

/// Sequential greedy coloring in a seeded random vertex order.
pub fn greedy_initial(g: &Graph, k: usize, seed: u64) -> Result<Configuration, DynamicsError> {
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.shuffle(&mut seeded(seed));
    let mut colors = vec![usize::MAX; g.n()];
    let mut used = vec![usize::MAX; k];
    for &v in &order {
        for &w in g.neighbors(v) {
            if colors[w] < k {
                used[colors[w]] = v;
            }
        }
        match (0..k).find(|&c| used[c] != v) {
            Some(c) => colors[v] = c,
            None => {
                return Err(DynamicsError::GreedyStuck {
                    vertex: v,
                    attempts: 1,
                })
            }
        }
    }
    Ok(Configuration::coloring(colors, k))
}

/// Retries [`greedy_initial`] with derived seeds, `retries` extra attempts.
pub fn greedy_initial_retry(
    g: &Graph,
    k: usize,
    seed: u64,
    retries: usize,
) -> Result<Configuration, DynamicsError> {
    let mut last = None;
    for attempt in 0..=retries {
        let s = if attempt == 0 {
            seed
        } else {
            seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        };
        match greedy_initial(g, k, s) {
            Ok(c) => return Ok(c),
            Err(DynamicsError::GreedyStuck { vertex, .. }) => last = Some(vertex),
            Err(e) => return Err(e),
        }
    }
    Err(DynamicsError::GreedyStuck {
        vertex: last.unwrap_or(0),
        attempts: retries + 1,
    })
}

/// Reusable buffer for heat-bath updates.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    stamp: Vec<u64>,
    tick: u64,
    avail: Vec<usize>,
}

/// Recolors `v` uniformly among the colors absent from its neighborhood.
pub fn heat_bath_color(
    colors: &mut [usize],
    g: &Graph,
    v: usize,
    k: usize,
    rng: &mut Rng,
    s: &mut Scratch,
) {
    if s.stamp.len() < k {
        s.stamp = vec![0; k];
        s.tick = 0;
    }
    s.tick += 1;
    for &w in g.neighbors(v) {
        let c = colors[w];
        if c < k {
            s.stamp[c] = s.tick;
        }
    }
    s.avail.clear();
    s.avail.extend((0..k).filter(|&c| s.stamp[c] != s.tick));
    colors[v] = s.avail[rng.random_range(0..s.avail.len())];
}

/// Hard-core heat bath at `v`.
pub fn heat_bath_hardcore(occ: &mut [usize], g: &Graph, v: usize, lambda: f64, rng: &mut Rng) {
    let blocked = g.neighbors(v).iter().any(|&w| occ[w] == 1);
    occ[v] = if blocked {
        0
    } else {
        rng.random_bool(lambda / (1.0 + lambda)) as usize
    };
}

/// One heat-bath Glauber step. Returns the updated vertex.
pub fn glauber_step(cfg: &mut Configuration, g: &Graph, rng: &mut Rng, s: &mut Scratch) -> usize {
    let v = rng.random_range(0..g.n());
    match cfg.model {
        Model::Coloring { k } => heat_bath_color(&mut cfg.spins, g, v, k, rng, s),
        Model::Hardcore { lambda } => heat_bath_hardcore(&mut cfg.spins, g, v, lambda, rng),
    }
    cfg.step_count += 1;
    cfg.mark_updated(v, g.n());
    v
}

/// Hard-core Glauber step (same as [`glauber_step`] on a hard-core state).
pub fn hardcore_glauber_step(cfg: &mut Configuration, g: &Graph, rng: &mut Rng) -> usize {
    debug_assert!(matches!(cfg.model, Model::Hardcore { .. }));
    glauber_step(cfg, g, rng, &mut Scratch::default())
}

/// Resamples block `b` exactly from its conditional law.
pub fn resample_block(
    cfg: &mut Configuration,
    g: &Graph,
    part: &BlockPartition,
    b: usize,
    rng: &mut Rng,
    s: &mut Scratch,
) -> Result<(), DynamicsError> {
    let block = &part.blocks[b];
    if block.len() == 1 {
        let v = block.vertices[0];
        match cfg.model {
            Model::Coloring { k } => heat_bath_color(&mut cfg.spins, g, v, k, rng, s),
            Model::Hardcore { lambda } => heat_bath_hardcore(&mut cfg.spins, g, v, lambda, rng),
        }
        return Ok(());
    }
    match cfg.model {
        Model::Coloring { k } => {
            let new = sample_block_coloring(g, block, &cfg.spins, k, rng)?;
            for (&v, c) in block.vertices.iter().zip(new) {
                cfg.spins[v] = c;
            }
        }
        Model::Hardcore { lambda } => {
            let occ = cfg.occupied();
            let new = sample_block_hardcore(g, block, &occ, lambda, rng)?;
            for (&v, o) in block.vertices.iter().zip(new) {
                cfg.spins[v] = o as usize;
            }
        }
    }
    Ok(())
}

/// One block-dynamics step. Returns the updated block index.
pub fn block_step(
    cfg: &mut Configuration,
    g: &Graph,
    part: &BlockPartition,
    rng: &mut Rng,
    s: &mut Scratch,
) -> Result<usize, DynamicsError> {
    let b = rng.random_range(0..part.len());
    resample_block(cfg, g, part, b, rng, s)?;
    cfg.step_count += 1;
    cfg.mark_updated(b, part.len());
    if debug_asserts() {
        assert!(
            cfg.is_valid_around(g, &part.blocks[b].vertices),
            "block {b} update produced an invalid configuration"
        );
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Glauber,
    Block,
}

/// Chain description: kind, optional partition, seed.
#[derive(Clone, Debug)]
pub struct ChainSpec<'a> {
    pub kind: ChainKind,
    pub partition: Option<&'a BlockPartition>,
    pub seed: u64,
    /// Skip the ergodicity guards.
    pub force: bool,
}

/// A running chain.
pub struct Chain<'a> {
    pub g: &'a Graph,
    pub spec: ChainSpec<'a>,
    pub cfg: Configuration,
    pub rng: Rng,
    scratch: Scratch,
}

impl<'a> Chain<'a> {
    pub fn new(
        g: &'a Graph,
        spec: ChainSpec<'a>,
        cfg: Configuration,
    ) -> Result<Self, DynamicsError> {
        Self::with_rng(g, spec.clone(), cfg, seeded(spec.seed))
    }

    pub fn with_rng(
        g: &'a Graph,
        spec: ChainSpec<'a>,
        cfg: Configuration,
        rng: Rng,
    ) -> Result<Self, DynamicsError> {
        if !cfg.is_valid(g) {
            return Err(DynamicsError::InvalidState);
        }
        if let Some(p) = spec.partition {
            if p.owner.len() != g.n() {
                return Err(DynamicsError::PartitionMismatch {
                    got: p.owner.len(),
                    want: g.n(),
                });
            }
        }
        match spec.kind {
            ChainKind::Glauber => {
                if let Model::Coloring { k } = cfg.model {
                    let need = g.max_degree() + 2;
                    if k < need && !spec.force {
                        return Err(DynamicsError::NotErgodic { k, need });
                    }
                }
            }
            ChainKind::Block => {
                let part = spec.partition.ok_or(DynamicsError::MissingPartition)?;
                if !spec.force && !smoke_test(g, part, &cfg, spec.seed)? {
                    return Err(DynamicsError::SmokeTest);
                }
            }
        }
        Ok(Chain {
            g,
            spec,
            cfg,
            rng,
            scratch: Scratch::default(),
        })
    }

    /// Number of units (vertices for Glauber, blocks otherwise).
    pub fn units(&self) -> usize {
        match self.spec.kind {
            ChainKind::Glauber => self.g.n(),
            ChainKind::Block => self.spec.partition.unwrap().len(),
        }
    }

    /// One step; returns the updated unit.
    pub fn step(&mut self) -> Result<usize, DynamicsError> {
        match self.spec.kind {
            ChainKind::Glauber => {
                let v = glauber_step(&mut self.cfg, self.g, &mut self.rng, &mut self.scratch);
                if debug_asserts() {
                    assert!(
                        self.cfg.is_valid_around(self.g, &[v]),
                        "vertex {v} update invalid"
                    );
                }
                Ok(v)
            }
            ChainKind::Block => block_step(
                &mut self.cfg,
                self.g,
                self.spec.partition.unwrap(),
                &mut self.rng,
                &mut self.scratch,
            ),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_state(&self.cfg, &self.rng)
    }
}

/// Block dynamics reachability smoke test: a short run from `cfg` (on a
/// derived stream) must visit at least two distinct states.
fn smoke_test(
    g: &Graph,
    part: &BlockPartition,
    cfg: &Configuration,
    seed: u64,
) -> Result<bool, DynamicsError> {
    let mut rng = replica_stream(seed, u64::MAX);
    let mut c = cfg.clone();
    let mut s = Scratch::default();
    let start = c.spins.clone();
    for _ in 0..(10 * part.len()).max(100) {
        block_step(&mut c, g, part, &mut rng, &mut s)?;
        if c.spins != start {
            return Ok(true);
        }
    }
    Ok(false)
}

pub type ProbeFn<'p> = Box<dyn FnMut(&Configuration) -> Vec<f64> + 'p>;

/// Periodic observation of a running chain.
pub struct Probe<'p> {
    pub name: String,
    pub cadence: u64,
    pub f: ProbeFn<'p>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub step: u64,
    pub probe: String,
    pub values: Vec<f64>,
}

/// Runs `steps` steps, calling each probe after every step whose index is a
/// multiple of its cadence.
pub fn run_chain(
    chain: &mut Chain,
    steps: u64,
    probes: &mut [Probe],
) -> Result<Vec<ProbeRecord>, DynamicsError> {
    let mut out = Vec::new();
    for _ in 0..steps {
        chain.step()?;
        let t = chain.cfg.step_count;
        for p in probes.iter_mut() {
            if p.cadence > 0 && t.is_multiple_of(p.cadence) {
                out.push(ProbeRecord {
                    step: t,
                    probe: p.name.clone(),
                    values: (p.f)(&chain.cfg),
                });
            }
        }
    }
    Ok(out)
}

/// Serializable chain snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupied: Option<Vec<usize>>,
    pub step_count: u64,
    pub rng_state: Rng,
}

impl Checkpoint {
    pub fn from_state(cfg: &Configuration, rng: &Rng) -> Self {
        let (colors, occupied) = match cfg.model {
            Model::Coloring { .. } => (Some(cfg.spins.clone()), None),
            Model::Hardcore { .. } => (
                None,
                Some(
                    (0..cfg.spins.len())
                        .filter(|&v| cfg.spins[v] == 1)
                        .collect(),
                ),
            ),
        };
        Checkpoint {
            model: cfg.model,
            colors,
            occupied,
            step_count: cfg.step_count,
            rng_state: rng.clone(),
        }
    }

    pub fn restore(&self, n: usize) -> Result<(Configuration, Rng), DynamicsError> {
        let spins = match (self.model, &self.colors, &self.occupied) {
            (Model::Coloring { .. }, Some(c), None) if c.len() == n => c.clone(),
            (Model::Hardcore { .. }, None, Some(o)) => {
                let mut s = vec![0; n];
                for &v in o {
                    *s.get_mut(v).ok_or(DynamicsError::InvalidState)? = 1;
                }
                s
            }
            _ => return Err(DynamicsError::InvalidState),
        };
        let cfg = Configuration {
            model: self.model,
            spins,
            step_count: self.step_count,
            last_update: Vec::new(),
        };
        Ok((cfg, self.rng_state.clone()))
    }
}
