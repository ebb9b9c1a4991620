//! Synthetic blocks embedded in a pendant environment: a tree (optionally
//! with one extra edge closing a cycle) whose vertices are padded with
//! outside leaves up to a sampled total degree. Every outside leaf is its
//! own singleton block.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::partition::BlockPartition;
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// Vertex `i > 0` attaches to a uniform earlier vertex.
    Recursive,
    /// Vertex 0 has `children` children; later vertices attach uniformly
    /// to non-hub vertices.
    Hub { children: usize },
    /// A path `0-1-…-(m−1)`.
    Path,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub m: usize,
    pub d: f64,
    pub shape: Shape,
    /// Total-degree cap for padded vertices; tree degree is never cut.
    pub cap: Option<usize>,
    /// Close a cycle of this length through vertex 0's subtree.
    pub cycle: Option<usize>,
    /// Exact total degree of the hub (vertex 0), overriding the sample.
    pub hub_degree: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SyntheticBlock {
    pub g: Graph,
    pub part: BlockPartition,
    pub block: usize,
    /// Outside leaf attached to vertex 0.
    pub u_star: usize,
}

pub fn build(spec: &SynthSpec) -> SyntheticBlock {
    let m = spec.m.max(1);
    let mut rng = seeded(spec.seed);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut parent = vec![usize::MAX; m];
    for i in 1..m {
        let j = match spec.shape {
            Shape::Recursive => rng.random_range(0..i),
            Shape::Path => i - 1,
            Shape::Hub { children } => {
                if i <= children {
                    0
                } else {
                    rng.random_range(1..i)
                }
            }
        };
        parent[i] = j;
        edges.push((j, i));
    }
    if let Some(len) = spec.cycle {
        // Walk up from the deepest vertex until the path has `len` vertices.
        let depth = |mut v: usize| {
            let mut dpt = 0;
            while parent[v] != usize::MAX {
                v = parent[v];
                dpt += 1;
            }
            dpt
        };
        if let Some(start) = (0..m)
            .filter(|&v| depth(v) + 1 >= len)
            .max_by_key(|&v| (depth(v), v))
        {
            let mut top = start;
            for _ in 0..len - 1 {
                top = parent[top];
            }
            if len >= 3 {
                edges.push((top.min(start), top.max(start)));
            }
        }
    }
    let mut tree_deg = vec![0usize; m];
    for &(a, b) in &edges {
        tree_deg[a] += 1;
        tree_deg[b] += 1;
    }
    // Vertex 0 also touches u*.
    tree_deg[0] += 1;
    let pois = Poisson::new(spec.d.max(1e-9)).unwrap();
    let mut next = m;
    let u_star = next;
    edges.push((0, u_star));
    next += 1;
    for v in 0..m {
        let mut target = pois.sample(&mut rng) as usize;
        if let Some(c) = spec.cap {
            target = target.min(c);
        }
        if v == 0 {
            if let Some(h) = spec.hub_degree {
                target = h;
            }
        }
        for _ in tree_deg[v]..target.max(tree_deg[v]) {
            edges.push((v, next));
            next += 1;
        }
    }
    let g = Graph::from_edges(next, &edges).expect("synthetic edges are simple");
    let mut sets: Vec<Vec<usize>> = vec![(0..m).collect()];
    sets.extend((m..next).map(|v| vec![v]));
    let part = BlockPartition::from_blocks(&g, sets).expect("synthetic partition covers the graph");
    SyntheticBlock {
        g,
        part,
        block: 0,
        u_star,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shape: Shape) -> SynthSpec {
        SynthSpec {
            m: 30,
            d: 20.0,
            shape,
            cap: Some(20),
            cycle: None,
            hub_degree: None,
            seed: 4,
        }
    }

    #[test]
    fn tree_blocks_have_expected_structure() {
        for shape in [Shape::Recursive, Shape::Path, Shape::Hub { children: 12 }] {
            let s = build(&spec(shape));
            let b = &s.part.blocks[s.block];
            assert_eq!(b.len(), 30);
            assert_eq!(b.edge_count(), 29);
            assert!(b.outer_boundary.contains(&s.u_star));
            assert_eq!(s.g.degree(s.u_star), 1);
            for &v in &b.vertices {
                assert!(s.g.degree(v) <= 20 || s.g.degree(v) == b.deg_in_of(v).unwrap() + 1);
            }
        }
        let h = build(&spec(Shape::Hub { children: 12 }));
        assert_eq!(h.part.blocks[0].deg_in_of(0), Some(12));
    }

    #[test]
    fn cycle_closes_once() {
        let mut sp = spec(Shape::Path);
        sp.cycle = Some(5);
        let s = build(&sp);
        let b = &s.part.blocks[s.block];
        assert_eq!(b.edge_count(), 30);
        assert_eq!(b.cycle.as_ref().map(|c| c.len()), Some(5));
    }

    #[test]
    fn hub_degree_override() {
        let mut sp = spec(Shape::Hub { children: 5 });
        sp.hub_degree = Some(27);
        let s = build(&sp);
        assert_eq!(s.g.degree(0), 27);
    }
}
