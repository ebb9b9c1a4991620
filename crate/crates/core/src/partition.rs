//! Vertex weights, r-breakpoints, the sparse block partition of a graph and
//! its validator.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::params::Params;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("vertex sequence is not a path: {0}")]
    NotAPath(String),
    #[error("blocks seeded by cycles {first:?} and {second:?} overlap at vertex {vertex}")]
    CycleBlocksOverlap {
        first: Vec<usize>,
        second: Vec<usize>,
        vertex: usize,
    },
    #[error("block {block} ({size} vertices, {edges} edges) is neither a tree nor unicyclic")]
    NotSparse {
        block: usize,
        size: usize,
        edges: usize,
    },
    #[error("vertex {0} is not covered by any block")]
    Uncovered(usize),
    #[error("vertex {0} appears in more than one block")]
    Duplicate(usize),
    #[error("block {0} is empty")]
    EmptyBlock(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `ln W(u)`: `-ln(1+ε/10)` for low-degree vertices, `ln(d^15·deg)` otherwise.
#[inline]
pub fn log_vertex_weight(deg: usize, p: &Params) -> f64 {
    if p.is_low_degree(deg) {
        -(p.epsilon / 10.0).ln_1p()
    } else {
        15.0 * p.d.ln() + (deg as f64).ln()
    }
}

pub fn vertex_weight(v: usize, g: &Graph, p: &Params) -> f64 {
    log_vertex_weight(g.degree(v), p).exp()
}

/// Log of the product of vertex weights along a simple path.
pub fn path_weight(path: &[usize], g: &Graph, p: &Params) -> Result<f64, PartitionError> {
    if path.is_empty() {
        return Err(PartitionError::NotAPath("empty sequence".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for (i, &v) in path.iter().enumerate() {
        if v >= g.n() {
            return Err(PartitionError::NotAPath(format!("vertex {v} out of range")));
        }
        if !seen.insert(v) {
            return Err(PartitionError::NotAPath(format!("vertex {v} repeated")));
        }
        if i > 0 && !g.has_edge(path[i - 1], v) {
            return Err(PartitionError::NotAPath(format!(
                "{} and {v} not adjacent",
                path[i - 1]
            )));
        }
    }
    Ok(path
        .iter()
        .map(|&v| log_vertex_weight(g.degree(v), p))
        .sum())
}

/// Reusable buffers for [`is_breakpoint_with`].
pub struct BreakpointScratch {
    best: Vec<f64>,
    next: Vec<f64>,
    frontier: Vec<usize>,
    touched: Vec<usize>,
    in_next: Vec<bool>,
}

impl BreakpointScratch {
    pub fn new(n: usize) -> Self {
        BreakpointScratch {
            best: vec![f64::NEG_INFINITY; n],
            next: vec![f64::NEG_INFINITY; n],
            frontier: Vec::new(),
            touched: Vec::new(),
            in_next: vec![false; n],
        }
    }
}

/// Whether every walk of length `<= r` from `v` keeps all prefix log-weights
/// at or below zero.
///
/// Walks over-approximate paths, so a `true` answer is also a breakpoint in
/// the simple-path sense.
pub fn is_breakpoint(v: usize, g: &Graph, p: &Params, r: usize) -> bool {
    is_breakpoint_with(v, g, p, r, &mut BreakpointScratch::new(g.n()))
}

pub fn is_breakpoint_with(
    v: usize,
    g: &Graph,
    p: &Params,
    r: usize,
    s: &mut BreakpointScratch,
) -> bool {
    let w0 = log_vertex_weight(g.degree(v), p);
    if w0 > 0.0 {
        return false;
    }
    s.frontier.clear();
    s.frontier.push(v);
    s.best[v] = w0;
    let mut ok = true;
    'rounds: for _ in 0..r {
        s.touched.clear();
        for &u in &s.frontier {
            let bu = s.best[u];
            for &w in g.neighbors(u) {
                let cand = bu + log_vertex_weight(g.degree(w), p);
                if cand > 0.0 {
                    ok = false;
                    break 'rounds;
                }
                if !s.in_next[w] {
                    s.in_next[w] = true;
                    s.touched.push(w);
                    s.next[w] = cand;
                } else if cand > s.next[w] {
                    s.next[w] = cand;
                }
            }
        }
        for &u in &s.frontier {
            s.best[u] = f64::NEG_INFINITY;
        }
        std::mem::swap(&mut s.frontier, &mut s.touched);
        for &u in &s.frontier {
            s.best[u] = s.next[u];
            s.next[u] = f64::NEG_INFINITY;
            s.in_next[u] = false;
        }
        if s.frontier.is_empty() {
            break;
        }
    }
    for &u in s.frontier.iter().chain(s.touched.iter()) {
        s.best[u] = f64::NEG_INFINITY;
        s.next[u] = f64::NEG_INFINITY;
        s.in_next[u] = false;
    }
    ok
}

/// Breakpoint flags for every vertex, computed in parallel.
pub fn breakpoints(g: &Graph, p: &Params, r: usize) -> Vec<bool> {
    (0..g.n())
        .into_par_iter()
        .map_init(
            || BreakpointScratch::new(g.n()),
            |s, v| is_breakpoint_with(v, g, p, r, s),
        )
        .collect()
}

/// Length cap for cycle-seeded blocks: `max(3, ⌈4 ln n/(ln d)^5⌉)`.
pub fn cycle_cap(n: usize, d: f64) -> usize {
    let ld = d.ln();
    if n < 3 {
        return 3;
    }
    if ld <= 0.0 {
        return n.max(3);
    }
    let c = (4.0 * (n as f64).ln() / ld.powi(5)).ceil();
    if c.is_finite() {
        (c as usize).clamp(3, n.max(3))
    } else {
        n.max(3)
    }
}

/// Required distance from the boundary to a block cycle:
/// `max(1, ⌈max{2 ln(|C|Δ), (ln ln d/ln d)(|C| + ln Δ)}⌉)`.
pub fn cycle_radius(cycle_len: usize, max_degree: usize, d: f64) -> usize {
    let c = cycle_len as f64;
    let delta = (max_degree.max(1)) as f64;
    let a = 2.0 * (c * delta).ln();
    let ratio = if d > std::f64::consts::E {
        d.ln().ln() / d.ln()
    } else {
        0.0
    };
    let b = ratio * (c + delta.ln());
    let r = a.max(b).ceil();
    if r.is_finite() && r >= 1.0 {
        r as usize
    } else {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Singleton,
    Tree,
    Unicyclic,
    /// Disconnected, or more than one extra edge. Only produced for
    /// hand-built partitions, so the validator can flag it.
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Sorted ascending.
    pub vertices: Vec<usize>,
    pub kind: BlockKind,
    /// Smallest vertex.
    pub root: usize,
    /// Cycle of a unicyclic block, starting at its smallest vertex.
    pub cycle: Option<Vec<usize>>,
    pub inner_boundary: Vec<usize>,
    pub outer_boundary: Vec<usize>,
    /// Aligned with `vertices`.
    pub deg_in: Vec<usize>,
    pub deg_out: Vec<usize>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    #[inline]
    pub fn position(&self, v: usize) -> Option<usize> {
        self.vertices.binary_search(&v).ok()
    }

    #[inline]
    pub fn contains(&self, v: usize) -> bool {
        self.position(v).is_some()
    }

    pub fn deg_in_of(&self, v: usize) -> Option<usize> {
        self.position(v).map(|i| self.deg_in[i])
    }

    pub fn deg_out_of(&self, v: usize) -> Option<usize> {
        self.position(v).map(|i| self.deg_out[i])
    }

    pub fn on_cycle(&self, v: usize) -> bool {
        self.cycle.as_ref().is_some_and(|c| c.contains(&v))
    }

    /// Adjacency of the induced subgraph in local indices.
    pub fn local_adjacency(&self, g: &Graph) -> Vec<Vec<usize>> {
        self.vertices
            .iter()
            .map(|&v| {
                g.neighbors(v)
                    .iter()
                    .filter_map(|&w| self.position(w))
                    .collect()
            })
            .collect()
    }

    /// Built from a vertex set; the caller guarantees it is non-empty.
    pub fn from_vertices(g: &Graph, mut vertices: Vec<usize>) -> Block {
        vertices.sort_unstable();
        vertices.dedup();
        let pos = |v: usize| vertices.binary_search(&v).is_ok();
        let mut deg_in = Vec::with_capacity(vertices.len());
        let mut deg_out = Vec::with_capacity(vertices.len());
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        let mut edges2 = 0;
        for &v in &vertices {
            let din = g.neighbors(v).iter().filter(|&&w| pos(w)).count();
            edges2 += din;
            deg_in.push(din);
            deg_out.push(g.degree(v) - din);
            if din < g.degree(v) {
                inner.push(v);
            }
            outer.extend(g.neighbors(v).iter().copied().filter(|&w| !pos(w)));
        }
        outer.sort_unstable();
        outer.dedup();
        let edges = edges2 / 2;
        let size = vertices.len();
        let connected = induced_connected(g, &vertices);
        let (kind, cycle) = if size == 1 {
            (BlockKind::Singleton, None)
        } else if connected && edges + 1 == size {
            (BlockKind::Tree, None)
        } else if connected && edges == size {
            (BlockKind::Unicyclic, Some(find_unique_cycle(g, &vertices)))
        } else {
            (BlockKind::Other, None)
        };
        Block {
            root: vertices[0],
            vertices,
            kind,
            cycle,
            inner_boundary: inner,
            outer_boundary: outer,
            deg_in,
            deg_out,
        }
    }

    /// Number of edges of the induced subgraph.
    pub fn edge_count(&self) -> usize {
        self.deg_in.iter().sum::<usize>() / 2
    }

    /// Diameter of the induced subgraph (`usize::MAX` if disconnected).
    pub fn diameter(&self, g: &Graph) -> usize {
        let adj = self.local_adjacency(g);
        let m = adj.len();
        let mut best = 0;
        let mut dist = vec![usize::MAX; m];
        for s in 0..m {
            dist.iter_mut().for_each(|x| *x = usize::MAX);
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            let mut reached = 1;
            while let Some(u) = q.pop_front() {
                for &w in &adj[u] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        best = best.max(dist[w]);
                        reached += 1;
                        q.push_back(w);
                    }
                }
            }
            if reached < m {
                return usize::MAX;
            }
        }
        best
    }
}

fn induced_connected(g: &Graph, vertices: &[usize]) -> bool {
    let inside = |v: usize| vertices.binary_search(&v).is_ok();
    let mut seen = std::collections::HashSet::from([vertices[0]]);
    let mut stack = vec![vertices[0]];
    while let Some(u) = stack.pop() {
        for &w in g.neighbors(u) {
            if inside(w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == vertices.len()
}

/// The unique cycle of a connected unicyclic vertex set, by leaf peeling.
fn find_unique_cycle(g: &Graph, vertices: &[usize]) -> Vec<usize> {
    let idx = |v: usize| vertices.binary_search(&v).ok();
    let mut deg: Vec<usize> = vertices
        .iter()
        .map(|&v| g.neighbors(v).iter().filter(|&&w| idx(w).is_some()).count())
        .collect();
    let mut alive = vec![true; vertices.len()];
    let mut stack: Vec<usize> = (0..vertices.len()).filter(|&i| deg[i] <= 1).collect();
    while let Some(i) = stack.pop() {
        if !alive[i] {
            continue;
        }
        alive[i] = false;
        for &w in g.neighbors(vertices[i]) {
            if let Some(j) = idx(w) {
                if alive[j] {
                    deg[j] -= 1;
                    if deg[j] == 1 {
                        stack.push(j);
                    }
                }
            }
        }
    }
    let start = (0..vertices.len())
        .find(|&i| alive[i])
        .expect("unicyclic set has a cycle");
    let mut cycle = vec![vertices[start]];
    let mut prev = usize::MAX;
    let mut cur = vertices[start];
    loop {
        let next = g
            .neighbors(cur)
            .iter()
            .copied()
            .filter(|&w| w != prev && idx(w).is_some_and(|j| alive[j]))
            .min()
            .unwrap();
        if next == vertices[start] {
            break;
        }
        cycle.push(next);
        prev = cur;
        cur = next;
    }
    // Canonical orientation: smaller neighbor of the start second.
    if cycle.len() > 2 && cycle[1] > *cycle.last().unwrap() {
        cycle[1..].reverse();
    }
    cycle
}

/// A partition of the vertex set into blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Block>,
    pub owner: Vec<usize>,
    /// Sorted union of the inner boundaries.
    pub boundary: Vec<usize>,
}

impl BlockPartition {
    /// Builds a partition from explicit vertex sets, checking that they cover
    /// every vertex exactly once.
    pub fn from_blocks(g: &Graph, sets: Vec<Vec<usize>>) -> Result<Self, PartitionError> {
        let n = g.n();
        let mut owner = vec![usize::MAX; n];
        for (b, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(PartitionError::EmptyBlock(b));
            }
            for &v in set {
                if v >= n {
                    return Err(GraphError::VertexOutOfRange(v, n).into());
                }
                if owner[v] != usize::MAX {
                    return Err(PartitionError::Duplicate(v));
                }
                owner[v] = b;
            }
        }
        if let Some(v) = owner.iter().position(|&b| b == usize::MAX) {
            return Err(PartitionError::Uncovered(v));
        }
        let blocks: Vec<Block> = sets
            .into_par_iter()
            .map(|s| Block::from_vertices(g, s))
            .collect();
        let mut boundary: Vec<usize> = blocks
            .iter()
            .flat_map(|b| b.inner_boundary.iter().copied())
            .collect();
        boundary.sort_unstable();
        Ok(BlockPartition {
            blocks,
            owner,
            boundary,
        })
    }

    pub fn singletons(g: &Graph) -> Self {
        Self::from_blocks(g, (0..g.n()).map(|v| vec![v]).collect()).expect("singletons partition V")
    }

    pub fn whole(g: &Graph) -> Self {
        Self::from_blocks(g, vec![(0..g.n()).collect()]).expect("one block partitions V")
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_of(&self, v: usize) -> &Block {
        &self.blocks[self.owner[v]]
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.owner.len()];
        for &v in &self.boundary {
            m[v] = true;
        }
        m
    }

    /// Union of the outer boundaries, sorted.
    pub fn outer_union(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self
            .blocks
            .iter()
            .flat_map(|b| b.outer_boundary.iter().copied())
            .collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(Block::len).max().unwrap_or(0)
    }

    pub fn to_file(&self) -> PartitionFile {
        PartitionFile {
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .map(|(id, b)| BlockRecord {
                    id,
                    kind: b.kind,
                    vertices: b.vertices.clone(),
                    cycle: b.cycle.clone(),
                    inner_boundary: b.inner_boundary.clone(),
                    outer_boundary: b.outer_boundary.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds from serialized form; derived fields are recomputed from `g`
    /// and must agree with the file.
    pub fn from_file(g: &Graph, file: &PartitionFile) -> Result<Self, PartitionError> {
        let mut recs: Vec<&BlockRecord> = file.blocks.iter().collect();
        recs.sort_by_key(|r| r.id);
        let part = Self::from_blocks(g, recs.iter().map(|r| r.vertices.clone()).collect())?;
        for (b, r) in part.blocks.iter().zip(&recs) {
            if b.kind != r.kind
                || b.inner_boundary != r.inner_boundary
                || b.outer_boundary != r.outer_boundary
            {
                return Err(PartitionError::NotAPath(format!(
                    "block {} does not match the graph",
                    r.id
                )));
            }
        }
        Ok(part)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub id: usize,
    pub kind: BlockKind,
    pub vertices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<Vec<usize>>,
    pub inner_boundary: Vec<usize>,
    pub outer_boundary: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub blocks: Vec<BlockRecord>,
}

/// Builds the cycle-seeded / influence-path block partition.
pub fn build_partition(g: &Graph, p: &Params) -> Result<BlockPartition, PartitionError> {
    build_partition_with_cap(g, p, cycle_cap(g.n(), p.d))
}

pub fn build_partition_with_cap(
    g: &Graph,
    p: &Params,
    cap: usize,
) -> Result<BlockPartition, PartitionError> {
    let n = g.n();
    let bp = breakpoints(g, p, p.r);
    let cycles = g.short_cycles(cap.max(3))?;
    let delta = g.max_degree();
    let mut owner = vec![usize::MAX; n];
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut seed_of_block: Vec<usize> = Vec::new();

    for (ci, cycle) in cycles.cycles.iter().enumerate() {
        let rc = cycle_radius(cycle.len(), delta, p.d);
        let mut set = g.ball_around(cycle.iter().copied(), rc);
        // Influence closure: non-breakpoint components touching the ball.
        let mut mark: std::collections::HashSet<usize> = set.iter().copied().collect();
        let mut stack: Vec<usize> = set.iter().copied().filter(|&v| !bp[v]).collect();
        while let Some(u) = stack.pop() {
            for &w in g.neighbors(u) {
                if !bp[w] && mark.insert(w) {
                    set.push(w);
                    stack.push(w);
                }
            }
        }
        set.sort_unstable();
        let b = sets.len();
        for &v in &set {
            if owner[v] != usize::MAX {
                return Err(PartitionError::CycleBlocksOverlap {
                    first: cycles.cycles[seed_of_block[owner[v]]].clone(),
                    second: cycles.cycles[ci].clone(),
                    vertex: v,
                });
            }
            owner[v] = b;
        }
        sets.push(set);
        seed_of_block.push(ci);
    }

    for w in 0..n {
        if owner[w] != usize::MAX {
            continue;
        }
        let b = sets.len();
        owner[w] = b;
        let mut set = vec![w];
        if !bp[w] {
            let mut stack = vec![w];
            while let Some(u) = stack.pop() {
                for &x in g.neighbors(u) {
                    if !bp[x] && owner[x] == usize::MAX {
                        owner[x] = b;
                        set.push(x);
                        stack.push(x);
                    }
                }
            }
        }
        sets.push(set);
    }

    let part = BlockPartition::from_blocks(g, sets)?;
    for (i, b) in part.blocks.iter().enumerate() {
        if b.kind == BlockKind::Other {
            return Err(PartitionError::NotSparse {
                block: i,
                size: b.len(),
                edges: b.edge_count(),
            });
        }
    }
    Ok(part)
}

/// Pass/fail tally for one condition.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionTally {
    pub checked: usize,
    pub violations: usize,
    /// `(block, vertex)` pairs; the vertex is the block root for
    /// block-level conditions.
    pub witnesses: Vec<(usize, usize)>,
}

impl ConditionTally {
    fn record(&mut self, ok: bool, block: usize, vertex: usize) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            if self.witnesses.len() < 1000 {
                self.witnesses.push((block, vertex));
            }
        }
    }

    pub fn rate(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.violations as f64 / self.checked as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub cond1: ConditionTally,
    pub cond2a: ConditionTally,
    pub cond2b: ConditionTally,
    pub cond2c: ConditionTally,
    pub cond3: ConditionTally,
    /// Breakpoint sphere-growth check on every detected breakpoint on a
    /// multi-vertex block boundary.
    pub growth: ConditionTally,
    pub max_block_size: usize,
    pub blocks: usize,
    pub multi_vertex_blocks: usize,
    /// Cycle length bound actually searched for condition 3.
    pub cond3_cycle_limit: usize,
    /// True when `d² - 1` exceeded the search limit, so longer cycles were
    /// not examined.
    pub cond3_unchecked_above_limit: bool,
    /// `⌈ln ln n⌉`, natural logarithm.
    pub loglog_n: usize,
    /// The two boundary unions agreed.
    pub boundary_unions_agree: bool,
}

impl ValidationReport {
    /// Conditions 1, 2b and 3 have no violations.
    pub fn structural_ok(&self) -> bool {
        self.cond1.violations == 0 && self.cond2b.violations == 0 && self.cond3.violations == 0
    }

    pub fn all_ok(&self) -> bool {
        self.structural_ok() && self.cond2a.violations == 0 && self.cond2c.violations == 0
    }
}

/// Checks a partition against the sparse block partition conditions.
pub fn validate_partition(g: &Graph, part: &BlockPartition, p: &Params) -> ValidationReport {
    validate_partition_with_limit(g, part, p, cycle_cap(g.n(), p.d))
}

pub fn validate_partition_with_limit(
    g: &Graph,
    part: &BlockPartition,
    p: &Params,
    search_limit: usize,
) -> ValidationReport {
    let n = g.n();
    let loglog_n = if n > 2 {
        ((n as f64).ln().ln().ceil().max(0.0)) as usize
    } else {
        0
    };
    let d2 = (p.d * p.d).ceil() as usize;
    let wanted = d2.saturating_sub(1);
    let limit = wanted.min(search_limit.max(3));
    let on_short_cycle = if wanted >= 3 {
        match g.short_cycles(limit) {
            Ok(c) => c.vertex_mask(n),
            Err(_) => vec![false; n],
        }
    } else {
        vec![false; n]
    };
    let delta = g.max_degree();

    let mut cond1 = ConditionTally::default();
    let mut cond2a = ConditionTally::default();
    let mut cond2b = ConditionTally::default();
    let mut cond2c = ConditionTally::default();
    let mut cond3 = ConditionTally::default();
    let mut growth = ConditionTally::default();
    let mut scratch = BreakpointScratch::new(n);
    let growth_base = (1.0 + p.epsilon / 3.0) * p.d;

    for (bi, b) in part.blocks.iter().enumerate() {
        cond1.record(b.kind != BlockKind::Other, bi, b.root);
        for &u in &b.outer_boundary {
            cond3.record(!on_short_cycle[u], bi, u);
        }
        if b.len() < 2 {
            continue;
        }
        let diam = b.diameter(g);
        let horizon = diam.max(loglog_n).saturating_add(1).max(2).min(n + 1);
        let cyc_dist = b.cycle.as_ref().map(|c| {
            let rc = cycle_radius(c.len(), delta, p.d);
            (rc, g.multi_source_distances(c.iter().copied(), rc))
        });
        for &u in &b.outer_boundary {
            let inside = g.neighbors(u).iter().filter(|&&w| b.contains(w)).count();
            cond2b.record(inside == 1, bi, u);
            cond2a.record(is_breakpoint_with(u, g, p, horizon, &mut scratch), bi, u);
            if let Some((rc, dist)) = &cyc_dist {
                let ok = dist[u].is_none_or(|du| du >= *rc);
                cond2c.record(ok, bi, u);
            }
            if is_breakpoint_with(u, g, p, p.r, &mut scratch) {
                let sizes = g.sphere_sizes(u, p.r);
                let ok = sizes
                    .iter()
                    .enumerate()
                    .all(|(l, &s)| s as f64 <= growth_base.powi(l as i32) * (1.0 + 1e-12));
                growth.record(ok, bi, u);
            }
        }
    }
    let inner = part.boundary.clone();
    let outer = part.outer_union();
    ValidationReport {
        cond1,
        cond2a,
        cond2b,
        cond2c,
        cond3,
        growth,
        max_block_size: part.max_block_size(),
        blocks: part.len(),
        multi_vertex_blocks: part.blocks.iter().filter(|b| b.len() > 1).count(),
        cond3_cycle_limit: if wanted >= 3 { limit } else { 0 },
        cond3_unchecked_above_limit: wanted > limit,
        loglog_n,
        boundary_unions_agree: inner == outer,
    }
}

/// `450·Σ (ln deg(u) + deg(u)/k)` over the vertex degrees of a path.
pub fn j_value(degrees: &[usize], k: usize) -> f64 {
    450.0
        * degrees
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { (d as f64).ln() } + d as f64 / k as f64)
            .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDensity {
    /// One entry per (source, inner-boundary vertex) path.
    pub values: Vec<f64>,
    pub max: f64,
    /// Histogram over `[0, max]` as `(lower edge, count)`.
    pub histogram: Vec<(f64, usize)>,
}

/// J-values of shortest in-block paths from each high-degree vertex and
/// from each block cycle to every inner-boundary vertex of the same block.
pub fn path_density(g: &Graph, part: &BlockPartition, p: &Params) -> PathDensity {
    let mut values = Vec::new();
    for b in &part.blocks {
        if b.inner_boundary.is_empty() {
            continue;
        }
        let adj = b.local_adjacency(g);
        let mut sources: Vec<Vec<usize>> = b
            .vertices
            .iter()
            .enumerate()
            .filter(|&(_, &v)| !p.is_low_degree(g.degree(v)))
            .map(|(i, _)| vec![i])
            .collect();
        if let Some(c) = &b.cycle {
            sources.push(c.iter().map(|&v| b.position(v).unwrap()).collect());
        }
        for src in sources {
            let parent = bfs_parents(&adj, &src);
            for &t in &b.inner_boundary {
                let mut cur = b.position(t).unwrap();
                if parent[cur].is_none() {
                    continue;
                }
                let mut degs = vec![g.degree(t)];
                while let Some(Some(pu)) = parent.get(cur).copied().filter(|&x| x != Some(cur)) {
                    cur = pu;
                    degs.push(g.degree(b.vertices[cur]));
                }
                values.push(j_value(&degs, p.k));
            }
        }
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let bins = 20usize;
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in &values {
        let i = if max > 0.0 {
            ((v / max) * bins as f64).floor() as usize
        } else {
            0
        };
        *hist.entry(i.min(bins - 1)).or_default() += 1;
    }
    let histogram = if values.is_empty() {
        Vec::new()
    } else {
        (0..bins)
            .map(|i| (max * i as f64 / bins as f64, *hist.get(&i).unwrap_or(&0)))
            .collect()
    };
    PathDensity {
        values,
        max,
        histogram,
    }
}

/// BFS parents from a source set; sources point to themselves.
fn bfs_parents(adj: &[Vec<usize>], src: &[usize]) -> Vec<Option<usize>> {
    let mut parent = vec![None; adj.len()];
    let mut q = VecDeque::new();
    for &s in src {
        parent[s] = Some(s);
        q.push_back(s);
    }
    while let Some(u) = q.pop_front() {
        for &w in &adj[u] {
            if parent[w].is_none() {
                parent[w] = Some(u);
                q.push_back(w);
            }
        }
    }
    parent
}
