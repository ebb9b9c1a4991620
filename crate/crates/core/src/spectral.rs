//! Exact checks on tiny instances: state enumeration, transition kernels and
//! generators, stationary laws, relaxation and mixing times, and the
//! block-versus-single-site comparison inequality.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dynamics::Model;
use crate::graph::Graph;
use crate::partition::BlockPartition;

/// Largest state space `enumerate_states` will build.
pub const MAX_STATES: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("state space exceeds {MAX_STATES} states")]
    TooLarge,
    #[error("state space is empty")]
    Empty,
    #[error("kernel is reducible")]
    Reducible,
    #[error("kernel is periodic")]
    Periodic,
    #[error("singular system while solving for the stationary law")]
    Singular,
    #[error("mixing time exceeds {0} steps")]
    NoMixing(usize),
}

/// All proper colorings or independent sets of a graph.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub model: Model,
    pub states: Vec<Vec<usize>>,
    pub index: HashMap<Vec<usize>, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Unnormalized stationary weight.
    pub fn weight(&self, i: usize) -> f64 {
        match self.model {
            Model::Coloring { .. } => 1.0,
            Model::Hardcore { lambda } => lambda.powi(self.states[i].iter().sum::<usize>() as i32),
        }
    }

    /// Exact stationary law from the weights.
    pub fn gibbs(&self) -> Vec<f64> {
        let w: Vec<f64> = (0..self.len()).map(|i| self.weight(i)).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }
}

/// Backtracking enumeration in vertex order.
pub fn enumerate_states(g: &Graph, model: Model) -> Result<StateSpace, SpectralError> {
    let q = match model {
        Model::Coloring { k } => k,
        Model::Hardcore { .. } => 2,
    };
    let n = g.n();
    let mut states = Vec::new();
    let mut cur = vec![0usize; n];
    fn ok(g: &Graph, cur: &[usize], v: usize, s: usize, model: Model) -> bool {
        g.neighbors(v)
            .iter()
            .filter(|&&w| w < v)
            .all(|&w| match model {
                Model::Coloring { .. } => cur[w] != s,
                Model::Hardcore { .. } => !(s == 1 && cur[w] == 1),
            })
    }
    fn rec(
        g: &Graph,
        v: usize,
        q: usize,
        model: Model,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<(), SpectralError> {
        if v == g.n() {
            if out.len() >= MAX_STATES {
                return Err(SpectralError::TooLarge);
            }
            out.push(cur.clone());
            return Ok(());
        }
        for s in 0..q {
            if ok(g, cur, v, s, model) {
                cur[v] = s;
                rec(g, v + 1, q, model, cur, out)?;
            }
        }
        Ok(())
    }
    rec(g, 0, q, model, &mut cur, &mut states)?;
    if states.is_empty() {
        return Err(SpectralError::Empty);
    }
    let index = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    Ok(StateSpace {
        model,
        states,
        index,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `P = (1/|units|) Σ P_unit`.
    Discrete,
    /// `L = Σ (P_unit − I)`.
    Generator,
}

#[derive(Clone, Debug)]
pub struct Kernel {
    pub kind: KernelKind,
    pub matrix: DMatrix<f64>,
}

/// Update units of single-site dynamics.
pub fn glauber_units(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|v| vec![v]).collect()
}

/// Update units of block dynamics.
pub fn block_units(part: &BlockPartition) -> Vec<Vec<usize>> {
    part.blocks.iter().map(|b| b.vertices.clone()).collect()
}

/// Groups states by their restriction outside `unit`.
fn outside_groups(space: &StateSpace, unit: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (i, s) in space.states.iter().enumerate() {
        let mut key = s.clone();
        for &v in unit {
            key[v] = usize::MAX;
        }
        groups.entry(key).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Exact heat-bath kernel of one unit: resample the unit from its
/// conditional law given everything else.
pub fn unit_kernel(space: &StateSpace, unit: &[usize]) -> DMatrix<f64> {
    let m = space.len();
    let mut p = DMatrix::zeros(m, m);
    for grp in outside_groups(space, unit) {
        let z: f64 = grp.iter().map(|&j| space.weight(j)).sum();
        for &i in &grp {
            for &j in &grp {
                p[(i, j)] = space.weight(j) / z;
            }
        }
    }
    p
}

pub fn kernel(space: &StateSpace, units: &[Vec<usize>], kind: KernelKind) -> Kernel {
    let m = space.len();
    let mut acc = DMatrix::zeros(m, m);
    for u in units {
        acc += unit_kernel(space, u);
    }
    let matrix = match kind {
        KernelKind::Discrete => acc / units.len() as f64,
        KernelKind::Generator => acc - DMatrix::identity(m, m) * units.len() as f64,
    };
    Kernel { kind, matrix }
}

impl Kernel {
    /// Rows sum to 1 (discrete) or 0 (generator) within `tol`.
    pub fn rows_ok(&self, tol: f64) -> bool {
        let target = match self.kind {
            KernelKind::Discrete => 1.0,
            KernelKind::Generator => 0.0,
        };
        self.matrix
            .row_iter()
            .all(|r| (r.sum() - target).abs() <= tol)
            && self.matrix.iter().enumerate().all(|(idx, &x)| {
                let m = self.matrix.nrows();
                let (i, j) = (idx % m, idx / m);
                x >= -tol || (self.kind == KernelKind::Generator && i == j)
            })
    }

    pub fn irreducible(&self) -> bool {
        let m = self.matrix.nrows();
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                if i != j && self.matrix[(i, j)] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        // Reversible kernels: forward reachability from one state suffices.
        seen.iter().all(|&s| s)
    }

    /// Sufficient check: an irreducible kernel with a positive diagonal
    /// entry is aperiodic.
    pub fn aperiodic(&self) -> bool {
        self.kind == KernelKind::Generator
            || (0..self.matrix.nrows()).any(|i| self.matrix[(i, i)] > 0.0)
    }

    /// Maximum detailed-balance defect `|π_i P_ij − π_j P_ji|`.
    pub fn balance_defect(&self, pi: &[f64]) -> f64 {
        let m = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..i {
                worst =
                    worst.max((pi[i] * self.matrix[(i, j)] - pi[j] * self.matrix[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Stationary law by a linear solve of `πP = π`, `Σπ = 1` (or `πL = 0`).
pub fn stationary(k: &Kernel) -> Result<Vec<f64>, SpectralError> {
    if !k.irreducible() {
        return Err(SpectralError::Reducible);
    }
    let m = k.matrix.nrows();
    let mut a = k.matrix.transpose();
    if k.kind == KernelKind::Discrete {
        a -= DMatrix::identity(m, m);
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(SpectralError::Singular)?;
    Ok(x.iter().copied().collect())
}

/// Eigenvalues of `D^{1/2} K D^{-1/2}` symmetrized, in decreasing order.
pub fn symmetric_spectrum(k: &Kernel, pi: &[f64]) -> Vec<f64> {
    let m = k.matrix.nrows();
    let s = DMatrix::from_fn(m, m, |i, j| pi[i].sqrt() * k.matrix[(i, j)] / pi[j].sqrt());
    let sym = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// Relaxation time `1/(1−λ₂)` (discrete) or `1/gap(L)` (generator). A
/// one-state space has relaxation time 0.
pub fn relaxation(k: &Kernel) -> Result<f64, SpectralError> {
    let pi = stationary(k)?;
    if pi.len() == 1 {
        return Ok(0.0);
    }
    let ev = symmetric_spectrum(k, &pi);
    let gap = match k.kind {
        KernelKind::Discrete => 1.0 - ev[1],
        KernelKind::Generator => -ev[1],
    };
    if gap <= 1e-14 {
        return Err(SpectralError::Reducible);
    }
    Ok(1.0 / gap)
}

/// Smallest `t` with `max_x ‖P^t(x,·) − π‖_TV ≤ eps`.
pub fn exact_tmix(k: &Kernel, eps: f64, max_steps: usize) -> Result<usize, SpectralError> {
    if k.kind != KernelKind::Discrete {
        return Err(SpectralError::Periodic);
    }
    if !k.aperiodic() {
        return Err(SpectralError::Periodic);
    }
    let pi = stationary(k)?;
    let m = pi.len();
    let mut pt = DMatrix::identity(m, m);
    for t in 1..=max_steps {
        pt = &pt * &k.matrix;
        let worst = (0..m)
            .map(|i| 0.5 * (0..m).map(|j| (pt[(i, j)] - pi[j]).abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        if worst <= eps {
            return Ok(t);
        }
    }
    Err(SpectralError::NoMixing(max_steps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tau: f64,
    pub tau_block: f64,
    #[serde(rename = "tau_B_max")]
    pub tau_b_max: f64,
    #[serde(rename = "Q_max")]
    pub q_max: f64,
    pub inequality_holds: bool,
    pub slack: f64,
    /// Distinct boundary conditions examined across all blocks.
    pub boundaries_checked: usize,
    pub states: usize,
}

/// `τ ≤ τ_block · max_B τ_B · max_v Q_v` in continuous time with rate 1 per
/// unit. `τ_B` is the relaxation time of single-site dynamics inside `B`
/// with the outside frozen, maximized over boundary conditions realized by
/// states of the space.
pub fn comparison_check(
    g: &Graph,
    part: &BlockPartition,
    model: Model,
) -> Result<ComparisonReport, SpectralError> {
    let space = enumerate_states(g, model)?;
    let tau = relaxation(&kernel(
        &space,
        &glauber_units(g.n()),
        KernelKind::Generator,
    ))?;
    let tau_block = relaxation(&kernel(&space, &block_units(part), KernelKind::Generator))?;
    let mut tau_b_max = 0.0f64;
    let mut checked = 0;
    for b in &part.blocks {
        let mut seen = std::collections::HashSet::new();
        for grp in outside_groups(&space, &b.vertices) {
            let key: Vec<usize> = b
                .outer_boundary
                .iter()
                .map(|&u| space.states[grp[0]][u])
                .collect();
            if !seen.insert(key) {
                continue;
            }
            checked += 1;
            let local = restricted(&space, &grp, &b.vertices);
            let t = relaxation(&kernel(
                &local,
                &glauber_units(b.len()),
                KernelKind::Generator,
            ))?;
            tau_b_max = tau_b_max.max(t);
        }
    }
    let q_max = 1.0;
    let rhs = tau_block * tau_b_max * q_max;
    Ok(ComparisonReport {
        tau,
        tau_block,
        tau_b_max,
        q_max,
        inequality_holds: tau <= rhs * (1.0 + 1e-9),
        slack: rhs - tau,
        boundaries_checked: checked,
        states: space.len(),
    })
}

/// The states of `grp` viewed as configurations of `vertices` alone.
fn restricted(space: &StateSpace, grp: &[usize], vertices: &[usize]) -> StateSpace {
    let states: Vec<Vec<usize>> = grp
        .iter()
        .map(|&i| vertices.iter().map(|&v| space.states[i][v]).collect())
        .collect();
    let index = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    StateSpace {
        model: space.model,
        states,
        index,
    }
}

/// Pearson χ² goodness of fit; returns `(statistic, df, p-value)`. Cells
/// with zero expected count must have zero observed count and are dropped.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        } else if o > 0 {
            return (f64::INFINITY, cells, 0.0);
        }
    }
    let df = cells.saturating_sub(1).max(1);
    let pval = 1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat);
    (stat, df, pval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocksampler::{count_block, ColorLists};
    use crate::graph::named;

    fn col(k: usize) -> Model {
        Model::Coloring { k }
    }

    #[test]
    fn state_counts() {
        assert_eq!(enumerate_states(&named::path(4), col(3)).unwrap().len(), 24);
        assert_eq!(
            enumerate_states(&named::complete(3), Model::Hardcore { lambda: 0.5 })
                .unwrap()
                .len(),
            4
        );
        assert_eq!(
            enumerate_states(&named::cycle(4), col(3)).unwrap().len(),
            18
        );
        // Chromatic polynomial of C_n: (k−1)^n + (−1)^n (k−1).
        assert_eq!(
            enumerate_states(&named::cycle(5), col(4)).unwrap().len(),
            243 - 3
        );
        assert_eq!(
            enumerate_states(&named::complete(4), col(3)).unwrap_err(),
            SpectralError::Empty
        );
        assert_eq!(
            enumerate_states(&named::empty(9), col(5)).unwrap_err(),
            SpectralError::TooLarge
        );
    }

    #[test]
    fn single_vertex_kernel() {
        let s = enumerate_states(&named::empty(1), col(5)).unwrap();
        let k = kernel(&s, &glauber_units(1), KernelKind::Discrete);
        assert!(k.matrix.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        assert!((relaxation(&k).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(exact_tmix(&k, 0.25, 10).unwrap(), 1);
        let ev = symmetric_spectrum(&k, &stationary(&k).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
        let one = enumerate_states(&named::empty(1), col(1)).unwrap();
        let k1 = kernel(&one, &glauber_units(1), KernelKind::Generator);
        assert_eq!(relaxation(&k1).unwrap(), 0.0);
    }

    #[test]
    fn one_block_has_identical_rows() {
        let g = named::path(3);
        let s = enumerate_states(&g, col(3)).unwrap();
        let part = BlockPartition::whole(&g);
        let k = kernel(&s, &block_units(&part), KernelKind::Discrete);
        for i in 1..s.len() {
            assert!((k.matrix.row(i) - k.matrix.row(0)).norm() < 1e-15);
        }
        assert!((relaxation(&k).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stationary_is_uniform_or_gibbs() {
        let g = named::path(3);
        let s = enumerate_states(&g, col(3)).unwrap();
        assert_eq!(s.len(), 12);
        let k = kernel(&s, &glauber_units(3), KernelKind::Discrete);
        assert!(k.rows_ok(1e-12));
        let pi = stationary(&k).unwrap();
        assert!(pi.iter().all(|&x| (x - 1.0 / 12.0).abs() < 1e-10));
        assert!(k.balance_defect(&pi) < 1e-12);

        let tri = named::complete(3);
        let hs = enumerate_states(&tri, Model::Hardcore { lambda: 0.5 }).unwrap();
        let hk = kernel(&hs, &glauber_units(3), KernelKind::Discrete);
        let pi = stationary(&hk).unwrap();
        let empty = hs.index[&vec![0, 0, 0]];
        assert!((pi[empty] - 0.4).abs() < 1e-12);
        for v in 0..3 {
            let mut st = vec![0, 0, 0];
            st[v] = 1;
            assert!((pi[hs.index[&st]] - 0.2).abs() < 1e-12);
        }
        assert!(hk.balance_defect(&pi) < 1e-12);
        let gen = kernel(&hs, &glauber_units(3), KernelKind::Generator);
        assert!(gen.rows_ok(1e-12));
        let pg = stationary(&gen).unwrap();
        assert!(pg.iter().zip(&pi).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn unit_kernel_matches_block_counts() {
        let g = named::path(5);
        let part = BlockPartition::from_blocks(&g, vec![vec![0, 1, 2], vec![3, 4]]).unwrap();
        let s = enumerate_states(&g, col(3)).unwrap();
        let b = &part.blocks[0];
        for grp in outside_groups(&s, &b.vertices) {
            let st = &s.states[grp[0]];
            let lists: Vec<Vec<usize>> = b
                .vertices
                .iter()
                .map(|&v| {
                    (0..3)
                        .filter(|&c| g.neighbors(v).iter().all(|&w| b.contains(w) || st[w] != c))
                        .collect()
                })
                .collect();
            let count = count_block(&g, b, &ColorLists::new(3, lists).unwrap()).unwrap();
            assert_eq!(count, num_bigint::BigUint::from(grp.len()));
        }
    }

    #[test]
    fn comparison_singletons_is_equality() {
        let g = named::path(4);
        let rep = comparison_check(&g, &BlockPartition::singletons(&g), col(3)).unwrap();
        assert!((rep.tau - rep.tau_block).abs() < 1e-9);
        assert!((rep.tau_b_max - 1.0).abs() < 1e-9);
        assert!(rep.inequality_holds);
    }

    #[test]
    fn comparison_one_block_and_two_blocks() {
        let g = named::path(4);
        let one = comparison_check(&g, &BlockPartition::whole(&g), col(3)).unwrap();
        assert!((one.tau_block - 1.0).abs() < 1e-9);
        assert!(one.inequality_holds);
        assert!((one.tau - one.tau_b_max).abs() < 1e-9);
        let g5 = named::path(5);
        let two = BlockPartition::from_blocks(&g5, vec![vec![0, 1], vec![2, 3, 4]]).unwrap();
        let rep = comparison_check(&g5, &two, col(3)).unwrap();
        assert!(rep.inequality_holds, "{rep:?}");
        assert!(rep.slack >= 0.0);
    }

    #[test]
    fn tmix_and_reducibility() {
        let g = named::path(2);
        let s = enumerate_states(&g, col(2)).unwrap();
        // k = 2 on an edge: Glauber is frozen.
        let k = kernel(&s, &glauber_units(2), KernelKind::Discrete);
        assert!(!k.irreducible());
        assert_eq!(stationary(&k).unwrap_err(), SpectralError::Reducible);
        let s3 = enumerate_states(&g, col(3)).unwrap();
        let k3 = kernel(&s3, &glauber_units(2), KernelKind::Discrete);
        let t = exact_tmix(&k3, 0.25, 1000).unwrap();
        assert!(t >= 1);
    }

    #[test]
    fn chi_square_basic() {
        let (stat, df, p) = chi_square(&[50, 50], &[0.5, 0.5]);
        assert_eq!(stat, 0.0);
        assert_eq!(df, 1);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, _, p) = chi_square(&[90, 10], &[0.5, 0.5]);
        assert!(p < 1e-10);
        assert_eq!(chi_square(&[1, 1], &[1.0, 0.0]).2, 0.0);
    }
}
