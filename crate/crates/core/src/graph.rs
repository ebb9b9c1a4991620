//! Simple undirected graphs in compressed adjacency form, the `G(n, d/n)`
//! generator, and the structural queries the partition code relies on
//! (balls, short cycles, girth, maximum degree).

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded;

/// Hard cap on the number of cycles `short_cycles` will report.
pub const MAX_CYCLES: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex {0} out of range for a graph on {1} vertices")]
    VertexOutOfRange(usize, usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("expected degree d={d} must satisfy 0 <= d <= n={n}")]
    BadDegree { n: usize, d: f64 },
    #[error("graph needs at least one vertex")]
    Empty,
    #[error("cycle length cap must be at least 3, got {0}")]
    CycleCap(usize),
    #[error("more than {MAX_CYCLES} cycles of length <= {0}")]
    TooManyCycles(usize),
    #[error("malformed graph file: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Immutable simple undirected graph on vertices `0..n`.
///
/// Neighbor lists are stored contiguously and sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops and duplicate
    /// edges (in either orientation).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n {
                return Err(GraphError::VertexOutOfRange(u, n));
            }
            if v >= n {
                return Err(GraphError::VertexOutOfRange(v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        Ok(Self::from_edges_unchecked(n, edges))
    }

    /// Same as [`Graph::from_edges`] but the caller guarantees simplicity.
    pub(crate) fn from_edges_unchecked(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut deg = vec![0usize; n];
        for &(u, v) in edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0usize; offsets[n]];
        for &(u, v) in edges {
            targets[fill[u]] = v;
            fill[u] += 1;
            targets[fill[v]] = u;
            fill[v] += 1;
        }
        for v in 0..n {
            targets[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Graph { offsets, targets }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of edges.
    pub fn m(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Maximum degree, 0 for an edgeless graph.
    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// BFS distances from `source`, truncated at `radius` (`None` beyond it).
    pub fn distances_within(&self, source: usize, radius: usize) -> Vec<Option<usize>> {
        self.multi_source_distances(std::iter::once(source), radius)
    }

    /// BFS distances from a set of sources, truncated at `radius`.
    pub fn multi_source_distances(
        &self,
        sources: impl IntoIterator<Item = usize>,
        radius: usize,
    ) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        for s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            if du == radius {
                continue;
            }
            for &w in self.neighbors(u) {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// `B(w, R)`: all vertices within distance `radius` of `w`, sorted.
    pub fn ball(&self, w: usize, radius: usize) -> Vec<usize> {
        self.ball_around(std::iter::once(w), radius)
    }

    /// Vertices within distance `radius` of any source, sorted.
    pub fn ball_around(
        &self,
        sources: impl IntoIterator<Item = usize>,
        radius: usize,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut queue = VecDeque::new();
        for s in sources {
            if seen.insert(s) {
                queue.push_back((s, 0usize));
            }
        }
        while let Some((u, du)) = queue.pop_front() {
            out.push(u);
            if du == radius {
                continue;
            }
            for &w in self.neighbors(u) {
                if seen.insert(w) {
                    queue.push_back((w, du + 1));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Sizes of the spheres `|{u : dist(v,u) = l}|` for `l = 0..=radius`.
    pub fn sphere_sizes(&self, v: usize, radius: usize) -> Vec<usize> {
        let mut sizes = vec![0usize; radius + 1];
        let mut seen = HashSet::new();
        seen.insert(v);
        let mut frontier = vec![v];
        sizes[0] = 1;
        for size in sizes.iter_mut().skip(1) {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in self.neighbors(u) {
                    if seen.insert(w) {
                        next.push(w);
                    }
                }
            }
            *size = next.len();
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        sizes
    }

    /// Length of the shortest cycle, `None` for forests.
    pub fn girth(&self) -> Option<usize> {
        let n = self.n();
        let mut best: Option<usize> = None;
        let mut dist = vec![usize::MAX; n];
        let mut parent = vec![usize::MAX; n];
        for s in 0..n {
            let mut touched = vec![s];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            'bfs: while let Some(u) = queue.pop_front() {
                if let Some(b) = best {
                    if 2 * dist[u] + 1 >= b {
                        break;
                    }
                }
                for &w in self.neighbors(u) {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        parent[w] = u;
                        touched.push(w);
                        queue.push_back(w);
                    } else if parent[u] != w {
                        let len = dist[u] + dist[w] + 1;
                        if best.is_none_or(|b| len < b) {
                            best = Some(len);
                        }
                        if len == 3 {
                            break 'bfs;
                        }
                    }
                }
            }
            for t in touched {
                dist[t] = usize::MAX;
                parent[t] = usize::MAX;
            }
            if best == Some(3) {
                break;
            }
        }
        best
    }

    /// All simple cycles of length at most `max_len`, each reported once.
    ///
    /// Every cycle is listed starting at its smallest vertex, with the
    /// smaller of the two neighbors of that vertex second. Search is a DFS
    /// rooted at each vertex `s` restricted to vertices `> s`, pruned by BFS
    /// distance back to `s`.
    pub fn short_cycles(&self, max_len: usize) -> Result<CycleList, GraphError> {
        if max_len < 3 {
            return Err(GraphError::CycleCap(max_len));
        }
        let n = self.n();
        let mut cycles = Vec::new();
        let mut on_path = vec![false; n];
        for s in 0..n {
            // Distances from s inside the subgraph induced by {v >= s}.
            let half = max_len / 2;
            let dist = self.distances_restricted(s, half);
            let mut path = vec![s];
            on_path[s] = true;
            self.cycle_dfs(s, max_len, &dist, &mut path, &mut on_path, &mut cycles)?;
            on_path[s] = false;
        }
        Ok(CycleList { cycles, max_len })
    }

    fn distances_restricted(
        &self,
        s: usize,
        radius: usize,
    ) -> std::collections::HashMap<usize, usize> {
        let mut dist = std::collections::HashMap::new();
        dist.insert(s, 0usize);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            if du == radius {
                continue;
            }
            for &w in self.neighbors(u) {
                if w > s && !dist.contains_key(&w) {
                    dist.insert(w, du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    fn cycle_dfs(
        &self,
        s: usize,
        max_len: usize,
        dist: &std::collections::HashMap<usize, usize>,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) -> Result<(), GraphError> {
        let u = *path.last().unwrap();
        for &w in self.neighbors(u) {
            if w == s && path.len() >= 3 {
                // Orientation filter: second vertex smaller than the last.
                if path[1] < u {
                    out.push(path.clone());
                    if out.len() > MAX_CYCLES {
                        return Err(GraphError::TooManyCycles(max_len));
                    }
                }
                continue;
            }
            if w <= s || on_path[w] || path.len() >= max_len {
                continue;
            }
            // Need to get back to s: remaining edges = max_len - path.len().
            match dist.get(&w) {
                Some(&dw) if path.len() + dw <= max_len => {}
                _ => continue,
            }
            on_path[w] = true;
            path.push(w);
            self.cycle_dfs(s, max_len, dist, path, on_path, out)?;
            path.pop();
            on_path[w] = false;
        }
        Ok(())
    }

    /// Subgraph induced by `vertices`, relabelled to `0..vertices.len()` in the
    /// given order.
    pub fn induced(&self, vertices: &[usize]) -> Graph {
        let index: std::collections::HashMap<usize, usize> =
            vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut edges = Vec::new();
        for (i, &v) in vertices.iter().enumerate() {
            for &w in self.neighbors(v) {
                if let Some(&j) = index.get(&w) {
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
        Graph::from_edges_unchecked(vertices.len(), &edges)
    }

    /// Text format: `n m` then one `u v` line per edge with `u < v`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.n(), self.m()).unwrap();
        for (u, v) in self.edges() {
            writeln!(s, "{u} {v}").unwrap();
        }
        s
    }

    pub fn read_text<R: Read>(reader: R) -> Result<Self, GraphError> {
        let mut lines = BufReader::new(reader).lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(GraphError::Parse("missing header".into())),
            }
        };
        let (n, m) = parse_pair(&header)?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (u, v) = parse_pair(&line)?;
            if u >= v {
                if u == v {
                    return Err(GraphError::SelfLoop(u));
                }
                return Err(GraphError::Parse(format!(
                    "edge {u} {v} not in ascending order"
                )));
            }
            edges.push((u, v));
        }
        if edges.len() != m {
            return Err(GraphError::Parse(format!(
                "header declares {m} edges, found {}",
                edges.len()
            )));
        }
        Graph::from_edges(n, &edges)
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize), GraphError> {
    let mut it = line.split_whitespace();
    let mut next = || -> Result<usize, GraphError> {
        it.next()
            .ok_or_else(|| GraphError::Parse(format!("expected two integers in {line:?}")))?
            .parse()
            .map_err(|e| GraphError::Parse(format!("{line:?}: {e}")))
    };
    let a = next()?;
    let b = next()?;
    Ok((a, b))
}

/// Cycles found by [`Graph::short_cycles`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleList {
    pub cycles: Vec<Vec<usize>>,
    pub max_len: usize,
}

impl CycleList {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Per-vertex flag: lies on at least one listed cycle.
    pub fn vertex_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for c in &self.cycles {
            for &v in c {
                mask[v] = true;
            }
        }
        mask
    }
}

/// Samples `G(n, d/n)` by geometric skipping over the `n(n-1)/2` vertex pairs.
///
/// `d = 0` yields the empty graph and `d = n` the complete graph.
pub fn gen_gnp(n: usize, d: f64, seed: u64) -> Result<Graph, GraphError> {
    if n == 0 {
        return Err(GraphError::Empty);
    }
    if !(d >= 0.0 && d <= n as f64) {
        return Err(GraphError::BadDegree { n, d });
    }
    let p = d / n as f64;
    let mut edges = Vec::new();
    if p >= 1.0 {
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        return Ok(Graph::from_edges_unchecked(n, &edges));
    }
    if p > 0.0 {
        let mut rng = seeded(seed);
        let log_q = (-p).ln_1p();
        // Batagelj-Brandes: walk the lower triangle (v < w) row by row.
        let mut w: i64 = 1;
        let mut v: i64 = -1;
        let n = n as i64;
        while w < n {
            let r: f64 = 1.0 - rng.random::<f64>();
            let skip = (r.ln() / log_q).floor();
            v += 1 + if skip.is_finite() { skip as i64 } else { n * n };
            while v >= w && w < n {
                v -= w;
                w += 1;
            }
            if w < n {
                edges.push((v as usize, w as usize));
            }
        }
    }
    Ok(Graph::from_edges_unchecked(n, &edges))
}

/// Small named graphs used throughout tests and the CLI.
pub mod named {
    use super::Graph;

    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges_unchecked(n, &edges)
    }

    pub fn cycle(n: usize) -> Graph {
        assert!(n >= 3);
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((0, n - 1));
        Graph::from_edges_unchecked(n, &edges)
    }

    pub fn complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Graph::from_edges_unchecked(n, &edges)
    }

    /// `K_{1,leaves}` with the center at vertex 0.
    pub fn star(leaves: usize) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Graph::from_edges_unchecked(leaves + 1, &edges)
    }

    pub fn empty(n: usize) -> Graph {
        Graph::from_edges_unchecked(n, &[])
    }

    pub fn petersen() -> Graph {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        let edges: Vec<_> = edges
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Graph::from_edges(10, &edges).expect("petersen is simple")
    }

    /// Incidence graph of the Fano plane: 14 vertices, cubic, girth 6.
    pub fn heawood() -> Graph {
        let mut edges = Vec::new();
        for i in 0..14 {
            edges.push((i, (i + 1) % 14));
        }
        for i in (0..14).step_by(2) {
            edges.push((i, (i + 5) % 14));
        }
        let edges: Vec<_> = edges
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Graph::from_edges(14, &edges).expect("heawood is simple")
    }

    /// Parses names like `path:5`, `cycle:4`, `complete:4`, `star:3`,
    /// `empty:3`, `petersen`, `heawood`.
    pub fn by_name(spec: &str) -> Option<Graph> {
        let (name, arg) = match spec.split_once(':') {
            Some((a, b)) => (a, b.parse::<usize>().ok()),
            None => (spec, None),
        };
        match (name, arg) {
            ("path", Some(n)) if n >= 1 => Some(path(n)),
            ("cycle", Some(n)) if n >= 3 => Some(cycle(n)),
            ("complete", Some(n)) if n >= 1 => Some(complete(n)),
            ("star", Some(n)) => Some(star(n)),
            ("empty", Some(n)) if n >= 1 => Some(empty(n)),
            ("petersen", None) => Some(petersen()),
            ("heawood", None) => Some(heawood()),
            _ => None,
        }
    }
}
