//! Exact conditional resampling of a block.
//!
//! A block (or any vertex subset whose components are trees or unicyclic) is
//! turned into an [`Instance`]: local adjacency, a per-vertex list of allowed
//! states and a per-state activity. Colorings use `q = k` states with the
//! "adjacent states differ" constraint, the hard-core model uses two states
//! with "not both occupied".
//!
//! Counting runs the tree DP over exact integers or rationals. Sampling runs
//! the same DP in floating point, draws each categorical decision with a
//! 53-bit uniform, and only accepts the decision when it is certified against
//! a rigorous rounding bound. Uncertified decisions are redone against the
//! exact tables, extending the uniform with fresh bits until the bin is
//! determined, so every returned sample follows the exact conditional law.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use thiserror::Error;

use crate::graph::Graph;
use crate::partition::{Block, BlockKind};

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("no configuration of the block is consistent with its boundary")]
    Infeasible,
    #[error("component containing local vertex {0} has more than one cycle")]
    TooManyCycles(usize),
    #[error("expected a {expected} instance")]
    WrongKind { expected: &'static str },
    #[error("color {color} outside [0, {k})")]
    BadColor { color: usize, k: usize },
    #[error("vertex {0} is not in the block")]
    NotInBlock(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Compat {
    /// Adjacent vertices take different states (proper coloring).
    Distinct,
    /// States are {vacant, occupied}; adjacent vertices are not both occupied.
    HardCore,
}

impl Compat {
    #[inline]
    pub fn ok(self, a: usize, b: usize) -> bool {
        match self {
            Compat::Distinct => a != b,
            Compat::HardCore => !(a == 1 && b == 1),
        }
    }
}

/// Per-vertex allowed colors over `[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorLists {
    pub k: usize,
    pub lists: Vec<Vec<usize>>,
}

impl ColorLists {
    pub fn new(k: usize, lists: Vec<Vec<usize>>) -> Result<Self, SampleError> {
        for l in &lists {
            if let Some(&c) = l.iter().find(|&&c| c >= k) {
                return Err(SampleError::BadColor { color: c, k });
            }
        }
        Ok(ColorLists { k, lists })
    }

    pub fn full(k: usize, m: usize) -> Self {
        ColorLists {
            k,
            lists: vec![(0..k).collect(); m],
        }
    }
}

/// A constrained spin system on a forest with at most one cycle per
/// component.
#[derive(Clone, Debug)]
pub struct Instance {
    /// Global ids, sorted ascending; local index `i` is `vertices[i]`.
    pub vertices: Vec<usize>,
    pub adj: Vec<Vec<usize>>,
    pub q: usize,
    pub compat: Compat,
    pub allowed: Vec<Vec<bool>>,
    pub activity: Vec<f64>,
}

impl Instance {
    pub fn m(&self) -> usize {
        self.vertices.len()
    }

    pub fn list_coloring(adj: Vec<Vec<usize>>, lists: &ColorLists) -> Self {
        let m = adj.len();
        let allowed = lists
            .lists
            .iter()
            .map(|l| {
                let mut a = vec![false; lists.k];
                for &c in l {
                    a[c] = true;
                }
                a
            })
            .collect();
        Instance {
            vertices: (0..m).collect(),
            adj,
            q: lists.k,
            compat: Compat::Distinct,
            allowed,
            activity: vec![1.0; lists.k],
        }
    }

    /// Colorings of `set` (sorted) given the colors of every other vertex.
    pub fn coloring(g: &Graph, set: &[usize], colors: &[usize], k: usize) -> Self {
        let adj = local_adjacency(g, set);
        let allowed = set
            .iter()
            .map(|&v| {
                let mut a = vec![true; k];
                for &w in g.neighbors(v) {
                    if set.binary_search(&w).is_err() && colors[w] < k {
                        a[colors[w]] = false;
                    }
                }
                a
            })
            .collect();
        Instance {
            vertices: set.to_vec(),
            adj,
            q: k,
            compat: Compat::Distinct,
            allowed,
            activity: vec![1.0; k],
        }
    }

    /// Independent sets of `set` (sorted) given the occupation of every
    /// other vertex, weighted by `lambda^|I|`.
    pub fn hardcore(g: &Graph, set: &[usize], occupied: &[bool], lambda: f64) -> Self {
        let adj = local_adjacency(g, set);
        let allowed = set
            .iter()
            .map(|&v| {
                let blocked = g
                    .neighbors(v)
                    .iter()
                    .any(|&w| set.binary_search(&w).is_err() && occupied[w]);
                vec![true, !blocked && lambda > 0.0]
            })
            .collect();
        Instance {
            vertices: set.to_vec(),
            adj,
            q: 2,
            compat: Compat::HardCore,
            allowed,
            activity: vec![1.0, lambda],
        }
    }

    #[inline]
    fn weight<N: Weight>(&self, v: usize, s: usize) -> N {
        if self.allowed[v][s] {
            N::from_activity(self.activity[s])
        } else {
            N::null()
        }
    }

    fn integral(&self) -> bool {
        self.activity.iter().all(|&a| a == 1.0)
    }
}

fn local_adjacency(g: &Graph, set: &[usize]) -> Vec<Vec<usize>> {
    set.iter()
        .map(|&v| {
            g.neighbors(v)
                .iter()
                .filter_map(|&w| set.binary_search(&w).ok())
                .collect()
        })
        .collect()
}

/// Semiring operations needed by the DP.
pub trait Weight: Clone {
    fn null() -> Self;
    fn from_activity(a: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    /// Multiplication; sets `flag` when floating-point range is exhausted.
    fn mul_checked(&self, o: &Self, flag: &mut bool) -> Self;
    fn is_null(&self) -> bool;
    /// Rescales the table in place and returns `e` such that the true
    /// values are the stored ones times `2^e`.
    fn renormalize(_t: &mut [Self]) -> i64 {
        0
    }
}

/// Values below this (relative to a table maximum of about 1) are treated as
/// an underflow risk and routed to the exact path.
const TINY: f64 = 1.0e-270;

impl Weight for f64 {
    fn null() -> Self {
        0.0
    }
    fn from_activity(a: f64) -> Self {
        a
    }
    #[inline]
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    #[inline]
    fn mul_checked(&self, o: &Self, flag: &mut bool) -> Self {
        let r = self * o;
        if r < TINY && *self != 0.0 && *o != 0.0 {
            *flag = true;
        }
        if !r.is_finite() {
            *flag = true;
        }
        r
    }
    fn is_null(&self) -> bool {
        *self == 0.0
    }
    fn renormalize(t: &mut [Self]) -> i64 {
        let max = t.iter().copied().fold(0.0f64, f64::max);
        if max == 0.0 || !max.is_finite() {
            return 0;
        }
        let e = max.log2().floor() as i32;
        if e == 0 {
            return 0;
        }
        let f = pow2(-e);
        for x in t.iter_mut() {
            *x *= f;
        }
        e as i64
    }
}

/// Exact `2^e` for `|e| <= 1000`.
fn pow2(e: i32) -> f64 {
    f64::from_bits(((1023 + e) as u64) << 52)
}

impl Weight for BigUint {
    fn null() -> Self {
        Zero::zero()
    }
    fn from_activity(a: f64) -> Self {
        assert!(
            a >= 0.0 && a.fract() == 0.0,
            "integer weights need integral activity"
        );
        BigUint::from(a as u64)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul_checked(&self, o: &Self, _: &mut bool) -> Self {
        if Zero::is_zero(self) || Zero::is_zero(o) {
            return Zero::zero();
        }
        self * o
    }
    fn is_null(&self) -> bool {
        Zero::is_zero(self)
    }
}

impl Weight for BigRational {
    fn null() -> Self {
        Zero::zero()
    }
    fn from_activity(a: f64) -> Self {
        BigRational::from_float(a).expect("finite activity")
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul_checked(&self, o: &Self, _: &mut bool) -> Self {
        if Zero::is_zero(self) || Zero::is_zero(o) {
            return Zero::zero();
        }
        self * o
    }
    fn is_null(&self) -> bool {
        Zero::is_zero(self)
    }
}

/// One connected component, rooted, with the cut cycle edge if unicyclic.
#[derive(Clone, Debug)]
struct Component {
    /// BFS order from the root over the spanning tree.
    order: Vec<usize>,
    /// `(a, b)` with `a < b` in local indices: the removed cycle edge.
    cut: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
struct Skeleton {
    comps: Vec<Component>,
    comp_of: Vec<usize>,
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl Skeleton {
    /// Components are rooted at their smallest local vertex, except the one
    /// containing `prefer`, which is rooted there.
    fn new(adj: &[Vec<usize>], prefer: Option<usize>) -> Result<Self, SampleError> {
        let m = adj.len();
        let mut comp_of = vec![usize::MAX; m];
        let mut comps = Vec::new();
        let mut parent = vec![usize::MAX; m];
        let mut children = vec![Vec::new(); m];
        let starts = prefer.into_iter().chain(0..m);
        for s in starts {
            if comp_of[s] != usize::MAX {
                continue;
            }
            let ci = comps.len();
            // First pass: collect members and count edges.
            let mut members = vec![s];
            comp_of[s] = ci;
            let mut i = 0;
            let mut deg_sum = 0;
            while i < members.len() {
                let u = members[i];
                i += 1;
                deg_sum += adj[u].len();
                for &w in &adj[u] {
                    if comp_of[w] == usize::MAX {
                        comp_of[w] = ci;
                        members.push(w);
                    }
                }
            }
            let edges = deg_sum / 2;
            let cut = if edges + 1 == members.len() {
                None
            } else if edges == members.len() {
                Some(smallest_cycle_edge(adj, &members))
            } else {
                return Err(SampleError::TooManyCycles(s));
            };
            // Second pass: BFS spanning tree avoiding the cut edge.
            let is_cut = |u: usize, w: usize| cut == Some((u.min(w), u.max(w)));
            let mut order = vec![s];
            let mut seen = std::collections::HashSet::from([s]);
            let mut j = 0;
            while j < order.len() {
                let u = order[j];
                j += 1;
                for &w in &adj[u] {
                    if !is_cut(u, w) && seen.insert(w) {
                        parent[w] = u;
                        children[u].push(w);
                        order.push(w);
                    }
                }
            }
            comps.push(Component { order, cut });
        }
        Ok(Skeleton {
            comps,
            comp_of,
            parent,
            children,
        })
    }
}

/// Smallest edge `(a, b)`, `a < b`, on the unique cycle of a unicyclic
/// component.
fn smallest_cycle_edge(adj: &[Vec<usize>], members: &[usize]) -> (usize, usize) {
    let mut deg: std::collections::HashMap<usize, usize> =
        members.iter().map(|&v| (v, adj[v].len())).collect();
    let mut stack: Vec<usize> = members.iter().copied().filter(|v| deg[v] <= 1).collect();
    let mut dead = std::collections::HashSet::new();
    while let Some(v) = stack.pop() {
        if !dead.insert(v) {
            continue;
        }
        for &w in &adj[v] {
            if !dead.contains(&w) {
                let e = deg.get_mut(&w).unwrap();
                *e -= 1;
                if *e == 1 {
                    stack.push(w);
                }
            }
        }
    }
    let mut best = (usize::MAX, usize::MAX);
    for &v in members {
        if dead.contains(&v) {
            continue;
        }
        for &w in &adj[v] {
            if v < w && !dead.contains(&w) && (v, w) < best {
                best = (v, w);
            }
        }
    }
    best
}

/// Messages from a child table to its parent's states.
fn message<N: Weight>(t: &[N], compat: Compat) -> Vec<N> {
    match compat {
        Compat::HardCore => vec![t[0].add(&t[1]), t[0].clone()],
        Compat::Distinct => {
            let q = t.len();
            // Sum over all states except s, without subtraction.
            let mut suffix = vec![N::null(); q + 1];
            for s in (0..q).rev() {
                suffix[s] = suffix[s + 1].add(&t[s]);
            }
            let mut out = Vec::with_capacity(q);
            let mut prefix = N::null();
            for s in 0..q {
                out.push(prefix.add(&suffix[s + 1]));
                prefix = prefix.add(&t[s]);
            }
            out
        }
    }
}

struct Tables<N> {
    t: Vec<Vec<N>>,
    scale: Vec<i64>,
    flag: bool,
}

impl<N: Weight> Tables<N> {
    fn new(m: usize) -> Self {
        Tables {
            t: vec![Vec::new(); m],
            scale: vec![0; m],
            flag: false,
        }
    }
}

/// Fills the subtree tables of one component. `cond` pins the first
/// endpoint of the cut edge to a state (unicyclic components only).
fn run_dp<N: Weight>(
    inst: &Instance,
    sk: &Skeleton,
    comp: &Component,
    cond: Option<usize>,
    tab: &mut Tables<N>,
) {
    let q = inst.q;
    for &v in comp.order.iter().rev() {
        let mut t: Vec<N> = (0..q).map(|s| inst.weight::<N>(v, s)).collect();
        if let (Some(sa), Some((a, b))) = (cond, comp.cut) {
            if v == a {
                for (s, x) in t.iter_mut().enumerate() {
                    if s != sa {
                        *x = N::null();
                    }
                }
            }
            if v == b {
                for (s, x) in t.iter_mut().enumerate() {
                    if !inst.compat.ok(sa, s) {
                        *x = N::null();
                    }
                }
            }
        }
        let mut e = 0i64;
        for &c in &sk.children[v] {
            let msg = message(&tab.t[c], inst.compat);
            for s in 0..q {
                if !t[s].is_null() {
                    t[s] = t[s].mul_checked(&msg[s], &mut tab.flag);
                }
            }
            e += tab.scale[c];
        }
        e += N::renormalize(&mut t);
        tab.t[v] = t;
        tab.scale[v] = e;
    }
}

fn sum<N: Weight>(xs: &[N]) -> N {
    xs.iter().fold(N::null(), |a, b| a.add(b))
}

/// Exact partition function of an instance (product over components).
pub fn partition_function<N: Weight + One>(inst: &Instance) -> Result<N, SampleError> {
    let sk = Skeleton::new(&inst.adj, None)?;
    let mut total = N::one();
    let mut flag = false;
    for comp in &sk.comps {
        let z = component_total::<N>(inst, &sk, comp);
        total = total.mul_checked(&z, &mut flag);
    }
    Ok(total)
}

fn component_total<N: Weight>(inst: &Instance, sk: &Skeleton, comp: &Component) -> N {
    let root = comp.order[0];
    let mut tab = Tables::<N>::new(inst.m());
    match comp.cut {
        None => {
            run_dp(inst, sk, comp, None, &mut tab);
            sum(&tab.t[root])
        }
        Some((a, _)) => {
            let mut z = N::null();
            for sa in 0..inst.q {
                if inst.allowed[a][sa] {
                    run_dp(inst, sk, comp, Some(sa), &mut tab);
                    z = z.add(&sum(&tab.t[root]));
                }
            }
            z
        }
    }
}

/// Number of proper list colorings of a forest.
pub fn count_list_colorings(
    adj: &[Vec<usize>],
    lists: &ColorLists,
) -> Result<BigUint, SampleError> {
    let inst = Instance::list_coloring(adj.to_vec(), lists);
    let sk = Skeleton::new(&inst.adj, None)?;
    if sk.comps.iter().any(|c| c.cut.is_some()) {
        return Err(SampleError::WrongKind { expected: "tree" });
    }
    partition_function::<BigUint>(&inst)
}

/// Number of proper list colorings of a connected unicyclic graph.
pub fn count_unicyclic(adj: &[Vec<usize>], lists: &ColorLists) -> Result<BigUint, SampleError> {
    let inst = Instance::list_coloring(adj.to_vec(), lists);
    let sk = Skeleton::new(&inst.adj, None)?;
    if sk.comps.len() != 1 || sk.comps[0].cut.is_none() {
        return Err(SampleError::WrongKind {
            expected: "unicyclic",
        });
    }
    partition_function::<BigUint>(&inst)
}

/// Counts list colorings of a partition block's induced subgraph.
pub fn count_block(g: &Graph, block: &Block, lists: &ColorLists) -> Result<BigUint, SampleError> {
    let adj = block.local_adjacency(g);
    match block.kind {
        BlockKind::Singleton | BlockKind::Tree => count_list_colorings(&adj, lists),
        BlockKind::Unicyclic => count_unicyclic(&adj, lists),
        BlockKind::Other => Err(SampleError::WrongKind {
            expected: "tree or unicyclic",
        }),
    }
}

/// Rigorous bound on the absolute error of a cumulative probability
/// computed by the float DP on `m` vertices with `q` states.
fn error_bound(m: usize, q: usize) -> f64 {
    4.0 * ((m * (q + 2) + 2 * q + 8) as f64) * f64::EPSILON
}

/// Exact tables, integer when all activities are 1.
enum ExactTables {
    Int(Tables<BigUint>),
    Rat(Tables<BigRational>),
}

impl ExactTables {
    fn compute(inst: &Instance, sk: &Skeleton, comp: &Component, cond: Option<usize>) -> Self {
        if inst.integral() {
            let mut t = Tables::new(inst.m());
            run_dp(inst, sk, comp, cond, &mut t);
            ExactTables::Int(t)
        } else {
            let mut t = Tables::new(inst.m());
            run_dp(inst, sk, comp, cond, &mut t);
            ExactTables::Rat(t)
        }
    }

    fn get(&self, v: usize, s: usize) -> BigRational {
        match self {
            ExactTables::Int(t) => BigRational::from_integer(BigInt::from(t.t[v][s].clone())),
            ExactTables::Rat(t) => t.t[v][s].clone(),
        }
    }

    fn root_total(&self, root: usize) -> BigRational {
        match self {
            ExactTables::Int(t) => BigRational::from_integer(BigInt::from(sum(&t.t[root]))),
            ExactTables::Rat(t) => sum(&t.t[root]),
        }
    }
}

/// Draws an index with probability proportional to the exact weights that
/// `wf` approximates, using the float weights when the draw is certified.
fn draw_index<R: RngCore + ?Sized>(
    wf: &[f64],
    err: f64,
    reliable: bool,
    rng: &mut R,
    exact: impl FnOnce() -> Vec<BigRational>,
) -> Result<usize, SampleError> {
    let u53 = rng.next_u64() >> 11;
    let unit = pow2(-53);
    if reliable {
        let total: f64 = wf.iter().sum();
        if total == 0.0 {
            return Err(SampleError::Infeasible);
        }
        if total.is_finite() {
            let lo = u53 as f64 * unit;
            let hi = lo + unit;
            let last = wf.iter().rposition(|&w| w > 0.0).unwrap();
            let mut cum = 0.0;
            for (i, &w) in wf.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let next = cum + w;
                if i != last && lo >= next / total + err {
                    cum = next;
                    continue;
                }
                let below_top = i == last || hi <= next / total - err;
                let above_bottom = cum == 0.0 || lo >= cum / total + err;
                if below_top && above_bottom {
                    return Ok(i);
                }
                break;
            }
        }
    }
    exact_draw(&exact(), u53, rng)
}

/// Exact categorical draw given the first 53 bits of the uniform; more bits
/// are drawn until the bin is determined.
fn exact_draw<R: RngCore + ?Sized>(
    w: &[BigRational],
    u53: u64,
    rng: &mut R,
) -> Result<usize, SampleError> {
    let total = w.iter().fold(BigRational::zero(), |a, b| a + b);
    if total.is_zero() {
        return Err(SampleError::Infeasible);
    }
    let mut k = BigInt::from(u53);
    let mut bits = 53u32;
    loop {
        let denom = BigInt::one() << bits;
        let lo = &total * BigRational::new(k.clone(), denom.clone());
        let hi = &total * BigRational::new(k.clone() + 1, denom);
        let mut cum = BigRational::zero();
        for (i, wi) in w.iter().enumerate() {
            if wi.is_zero() {
                continue;
            }
            let next = &cum + wi;
            if next <= lo {
                cum = next;
                continue;
            }
            if hi <= next {
                return Ok(i);
            }
            break;
        }
        k = (k << 64) + BigInt::from(rng.next_u64());
        bits += 64;
    }
}

/// Float tables plus the reliability verdict for one conditioning.
fn float_tables(
    inst: &Instance,
    sk: &Skeleton,
    comp: &Component,
    cond: Option<usize>,
) -> Tables<f64> {
    let mut t = Tables::new(inst.m());
    run_dp(inst, sk, comp, cond, &mut t);
    t
}

/// Combines per-condition float totals `(mantissa, exponent)` onto a common
/// scale. Returns `None` when the spread is too large to represent.
fn common_scale(zs: &[(f64, i64)]) -> Option<Vec<f64>> {
    let emax = zs.iter().filter(|z| z.0 > 0.0).map(|z| z.1).max();
    let Some(emax) = emax else {
        return Some(vec![0.0; zs.len()]);
    };
    let mut out = Vec::with_capacity(zs.len());
    for &(m, e) in zs {
        if m == 0.0 {
            out.push(0.0);
        } else if emax - e > 800 {
            return None;
        } else {
            out.push(m * pow2((e - emax) as i32));
        }
    }
    Some(out)
}

/// Samples one component into `out` (local indices).
fn sample_component<R: RngCore + ?Sized>(
    inst: &Instance,
    sk: &Skeleton,
    comp: &Component,
    rng: &mut R,
    out: &mut [usize],
) -> Result<(), SampleError> {
    let q = inst.q;
    let err = 2.0 * error_bound(comp.order.len(), q);
    let root = comp.order[0];
    let cond = match comp.cut {
        None => None,
        Some((a, _)) => {
            let mut zs = vec![(0.0, 0i64); q];
            let mut reliable = true;
            for (sa, z) in zs.iter_mut().enumerate() {
                if inst.allowed[a][sa] {
                    let t = float_tables(inst, sk, comp, Some(sa));
                    reliable &= !t.flag;
                    *z = (sum(&t.t[root]), t.scale[root]);
                }
            }
            let scaled = common_scale(&zs);
            let reliable = reliable && scaled.is_some();
            let wf = scaled.unwrap_or_else(|| vec![0.0; q]);
            let s = draw_index(&wf, err, reliable, rng, || {
                (0..q)
                    .map(|sa| {
                        if inst.allowed[a][sa] {
                            ExactTables::compute(inst, sk, comp, Some(sa)).root_total(root)
                        } else {
                            BigRational::zero()
                        }
                    })
                    .collect()
            })?;
            Some(s)
        }
    };
    let tf = float_tables(inst, sk, comp, cond);
    let reliable = !tf.flag;
    let mut exact: Option<ExactTables> = None;
    for &v in &comp.order {
        let parent_state = if v == root {
            None
        } else {
            Some(out[sk.parent[v]])
        };
        let mask = |s: usize| parent_state.is_none_or(|ps| inst.compat.ok(ps, s));
        let wf: Vec<f64> = (0..q)
            .map(|s| if mask(s) { tf.t[v][s] } else { 0.0 })
            .collect();
        let s = draw_index(&wf, err, reliable, rng, || {
            let ex = exact.get_or_insert_with(|| ExactTables::compute(inst, sk, comp, cond));
            (0..q)
                .map(|s| {
                    if mask(s) {
                        ex.get(v, s)
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })?;
        out[v] = s;
    }
    Ok(())
}

/// Exact sample of every vertex of the instance; entry `i` is the state of
/// local vertex `i`.
pub fn sample_instance<R: RngCore + ?Sized>(
    inst: &Instance,
    rng: &mut R,
) -> Result<Vec<usize>, SampleError> {
    let sk = Skeleton::new(&inst.adj, None)?;
    let mut out = vec![usize::MAX; inst.m()];
    for comp in &sk.comps {
        sample_component(inst, &sk, comp, rng, &mut out)?;
    }
    Ok(out)
}

/// Float marginal distribution of local vertex `v`. Falls back to exact
/// arithmetic when the float DP loses range.
pub fn marginal_f64(inst: &Instance, v: usize) -> Result<Vec<f64>, SampleError> {
    let sk = Skeleton::new(&inst.adj, Some(v))?;
    let comp = &sk.comps[sk.comp_of[v]];
    debug_assert_eq!(comp.order[0], v);
    let q = inst.q;
    let floats = match comp.cut {
        None => {
            let t = float_tables(inst, &sk, comp, None);
            (!t.flag).then(|| t.t[v].clone())
        }
        Some((a, _)) => {
            let mut per = Vec::new();
            let mut ok = true;
            for sa in 0..q {
                if inst.allowed[a][sa] {
                    let t = float_tables(inst, &sk, comp, Some(sa));
                    ok &= !t.flag;
                    per.push((t.t[v].clone(), t.scale[v]));
                }
            }
            let emax = per
                .iter()
                .filter(|p| p.0.iter().any(|&x| x > 0.0))
                .map(|p| p.1)
                .max();
            match emax {
                Some(emax) if ok && per.iter().all(|p| emax - p.1 <= 800) => {
                    let mut acc = vec![0.0; q];
                    for (t, e) in &per {
                        let f = pow2((e - emax) as i32);
                        for s in 0..q {
                            acc[s] += t[s] * f;
                        }
                    }
                    Some(acc)
                }
                Some(_) => None,
                None => Some(vec![0.0; q]),
            }
        }
    };
    if let Some(w) = floats {
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return Err(SampleError::Infeasible);
        }
        return Ok(w.iter().map(|x| x / total).collect());
    }
    let exact = marginal_exact_inner(inst, &sk, v)?;
    Ok(exact.iter().map(|r| r.to_f64().unwrap_or(0.0)).collect())
}

fn marginal_exact_inner(
    inst: &Instance,
    sk: &Skeleton,
    v: usize,
) -> Result<Vec<BigRational>, SampleError> {
    let comp = &sk.comps[sk.comp_of[v]];
    let q = inst.q;
    let mut acc = vec![BigRational::zero(); q];
    let conds: Vec<Option<usize>> = match comp.cut {
        None => vec![None],
        Some((a, _)) => (0..q).filter(|&s| inst.allowed[a][s]).map(Some).collect(),
    };
    for c in conds {
        let ex = ExactTables::compute(inst, sk, comp, c);
        for (s, x) in acc.iter_mut().enumerate() {
            *x += ex.get(v, s);
        }
    }
    let total = acc.iter().fold(BigRational::zero(), |a, b| a + b);
    if total.is_zero() {
        return Err(SampleError::Infeasible);
    }
    Ok(acc.into_iter().map(|x| x / &total).collect())
}

/// Exact marginal distribution of local vertex `v`.
pub fn marginal_exact(inst: &Instance, v: usize) -> Result<Vec<BigRational>, SampleError> {
    let sk = Skeleton::new(&inst.adj, Some(v))?;
    marginal_exact_inner(inst, &sk, v)
}

/// Uniform proper coloring of `block` given the colors outside it. Entry `i`
/// is the color of `block.vertices[i]`.
pub fn sample_block_coloring<R: RngCore + ?Sized>(
    g: &Graph,
    block: &Block,
    colors: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SampleError> {
    let inst = Instance::coloring(g, &block.vertices, colors, k);
    sample_instance(&inst, rng)
}

/// Independent set of `block` with probability proportional to
/// `lambda^|I|`, given the occupation outside it.
pub fn sample_block_hardcore<R: RngCore + ?Sized>(
    g: &Graph,
    block: &Block,
    occupied: &[bool],
    lambda: f64,
    rng: &mut R,
) -> Result<Vec<bool>, SampleError> {
    let inst = Instance::hardcore(g, &block.vertices, occupied, lambda);
    Ok(sample_instance(&inst, rng)?
        .into_iter()
        .map(|s| s == 1)
        .collect())
}

/// Exact `Pr[Z(v) = c]` for a uniform coloring of `block` given the colors
/// outside it.
pub fn marginal(
    g: &Graph,
    block: &Block,
    colors: &[usize],
    k: usize,
    v: usize,
    c: usize,
) -> Result<BigRational, SampleError> {
    let i = block.position(v).ok_or(SampleError::NotInBlock(v))?;
    if c >= k {
        return Err(SampleError::BadColor { color: c, k });
    }
    let inst = Instance::coloring(g, &block.vertices, colors, k);
    Ok(marginal_exact(&inst, i)?.swap_remove(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::named;
    use crate::partition::BlockPartition;
    use crate::rng::seeded;

    fn path_adj(m: usize) -> Vec<Vec<usize>> {
        (0..m)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < m {
                    v.push(i + 1);
                }
                v
            })
            .collect()
    }

    fn cycle_adj(m: usize) -> Vec<Vec<usize>> {
        let mut a = path_adj(m);
        a[0].push(m - 1);
        a[m - 1].push(0);
        a
    }

    /// Exhaustive count of list colorings.
    fn brute_count(adj: &[Vec<usize>], lists: &ColorLists) -> u64 {
        let m = adj.len();
        let k = lists.k;
        let mut count = 0;
        let total = (k as u64).pow(m as u32);
        for code in 0..total {
            let mut x = code;
            let col: Vec<usize> = (0..m)
                .map(|_| {
                    let c = (x % k as u64) as usize;
                    x /= k as u64;
                    c
                })
                .collect();
            let ok = (0..m).all(|v| lists.lists[v].contains(&col[v]))
                && (0..m).all(|v| adj[v].iter().all(|&w| col[v] != col[w]));
            if ok {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn counting_examples() {
        let full3 = ColorLists::full(3, 3);
        assert_eq!(
            count_list_colorings(&path_adj(3), &full3).unwrap(),
            BigUint::from(12u32)
        );
        let single = ColorLists::new(3, vec![vec![1, 2]]).unwrap();
        assert_eq!(
            count_list_colorings(&[vec![]], &single).unwrap(),
            BigUint::from(2u32)
        );
        assert_eq!(
            count_unicyclic(&cycle_adj(3), &full3).unwrap(),
            BigUint::from(6u32)
        );
        let full4 = ColorLists::full(3, 4);
        assert_eq!(
            count_unicyclic(&cycle_adj(4), &full4).unwrap(),
            BigUint::from(18u32)
        );
        assert!(count_list_colorings(&cycle_adj(4), &full4).is_err());
        assert!(count_unicyclic(&path_adj(4), &full4).is_err());
        assert!(ColorLists::new(3, vec![vec![3]]).is_err());
    }

    #[test]
    fn empty_list_gives_zero() {
        let lists = ColorLists::new(3, vec![vec![0], vec![]]).unwrap();
        assert!(count_list_colorings(&path_adj(2), &lists)
            .unwrap()
            .is_zero());
        let inst = Instance::list_coloring(path_adj(2), &lists);
        assert_eq!(
            sample_instance(&inst, &mut seeded(1)),
            Err(SampleError::Infeasible)
        );
    }

    #[test]
    fn count_equals_sum_of_root_pinned_counts() {
        let adj = path_adj(5);
        let lists = ColorLists::new(
            4,
            vec![
                vec![0, 1, 2],
                vec![1, 2, 3],
                vec![0, 3],
                vec![0, 1, 2, 3],
                vec![2],
            ],
        )
        .unwrap();
        let total = count_list_colorings(&adj, &lists).unwrap();
        let mut s = BigUint::zero();
        for c in 0..4 {
            let mut l = lists.clone();
            if l.lists[0].contains(&c) {
                l.lists[0] = vec![c];
                s += count_list_colorings(&adj, &l).unwrap();
            }
        }
        assert_eq!(s, total);
    }

    #[test]
    fn singleton_block_is_uniform_over_free_colors() {
        // Vertex 0 with neighbors colored 0 and 1 (zero-indexed), k = 4.
        let g = named::star(2);
        let part = BlockPartition::singletons(&g);
        let colors = vec![usize::MAX, 0, 1];
        let mut rng = seeded(3);
        let mut counts = [0usize; 4];
        for _ in 0..20_000 {
            let c = sample_block_coloring(&g, &part.blocks[0], &colors, 4, &mut rng).unwrap();
            counts[c[0]] += 1;
        }
        assert_eq!(counts[0] + counts[1], 0);
        assert!((counts[2] as f64 / 20_000.0 - 0.5).abs() < 0.02);
        let m = marginal(&g, &part.blocks[0], &colors, 4, 0, 2).unwrap();
        assert_eq!(m, BigRational::new(1.into(), 2.into()));
    }

    #[test]
    fn marginal_examples() {
        // Singleton v with its only neighbor colored 0, k = 3.
        let g = named::path(2);
        let part = BlockPartition::singletons(&g);
        let colors = vec![usize::MAX, 0];
        let m = marginal(&g, &part.blocks[0], &colors, 3, 0, 1).unwrap();
        assert_eq!(m, BigRational::new(1.into(), 2.into()));
        let total = (0..3)
            .map(|c| marginal(&g, &part.blocks[0], &colors, 3, 0, c).unwrap())
            .fold(BigRational::zero(), |a, b| a + b);
        assert!(total.is_one());
    }

    #[test]
    fn star_block_frequencies() {
        let g = named::star(3);
        let part = BlockPartition::whole(&g);
        let colors = vec![usize::MAX; 4];
        let mut rng = seeded(11);
        let mut counts = std::collections::HashMap::new();
        let draws = 100_000;
        for _ in 0..draws {
            let c = sample_block_coloring(&g, &part.blocks[0], &colors, 3, &mut rng).unwrap();
            *counts.entry(c).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 24);
        let p = 1.0 / 24.0;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (c, n) in counts {
            assert!((n as f64 - draws as f64 * p).abs() < 4.0 * sd, "{c:?}: {n}");
        }
    }

    #[test]
    fn hardcore_examples() {
        let inst = Instance::hardcore(&named::path(2), &[0, 1], &[false, false], 1.0);
        let z: BigRational = partition_function(&inst).unwrap();
        assert_eq!(z, BigRational::from_integer(3.into()));
        let m = marginal_exact(&inst, 0).unwrap();
        assert_eq!(m[0], BigRational::new(2.into(), 3.into()));
        let tri = named::complete(3);
        let inst = Instance::hardcore(&tri, &[0, 1, 2], &[false; 3], 0.5);
        let z: BigRational = partition_function(&inst).unwrap();
        assert_eq!(z, BigRational::new(5.into(), 2.into()));
        let m = marginal_exact(&inst, 1).unwrap();
        assert_eq!(m[1], BigRational::new(1.into(), 5.into()));
        // Boundary occupied: the neighbor must stay vacant.
        let g = named::path(2);
        let part = BlockPartition::singletons(&g);
        let mut rng = seeded(5);
        for _ in 0..100 {
            let s =
                sample_block_hardcore(&g, &part.blocks[1], &[true, false], 3.0, &mut rng).unwrap();
            assert!(!s[0]);
        }
    }

    #[test]
    fn exact_draw_matches_weights() {
        let w: Vec<BigRational> = [1u32, 0, 3]
            .iter()
            .map(|&x| BigRational::from_integer(x.into()))
            .collect();
        let mut rng = seeded(2);
        let mut hits = [0usize; 3];
        for _ in 0..40_000 {
            let u = rng.next_u64() >> 11;
            hits[exact_draw(&w, u, &mut rng).unwrap()] += 1;
        }
        assert_eq!(hits[1], 0);
        assert!((hits[0] as f64 / 40_000.0 - 0.25).abs() < 0.01);
    }

    #[test]
    fn forced_exact_path_agrees_with_float_path() {
        // With reliable=false every decision goes through the exact tables.
        let wf = [0.2, 0.3, 0.5];
        let exact = || {
            [2u32, 3, 5]
                .iter()
                .map(|&x| BigRational::from_integer(x.into()))
                .collect::<Vec<_>>()
        };
        let mut a = seeded(8);
        let mut b = seeded(8);
        for _ in 0..2000 {
            let x = draw_index(&wf, 1e-12, true, &mut a, exact).unwrap();
            let y = draw_index(&wf, 1e-12, false, &mut b, exact).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn extreme_activity_routes_to_exact_path() {
        // lambda tiny enough that products underflow the float range.
        let g = named::empty(60);
        let set: Vec<usize> = (0..60).collect();
        let mut inst = Instance::hardcore(&g, &set, &[false; 60], 1e-200);
        inst.adj = path_adj(60);
        let m = marginal_f64(&inst, 30).unwrap();
        assert!(m[1] > 0.0 && m[1] < 1e-199);
        let s = sample_instance(&inst, &mut seeded(4)).unwrap();
        assert!(s.iter().all(|&x| x == 0));
    }

    #[test]
    fn unicyclic_marginals_match_enumeration() {
        let adj = cycle_adj(5);
        let lists = ColorLists::new(
            3,
            vec![
                vec![0, 1, 2],
                vec![0, 1],
                vec![1, 2],
                vec![0, 1, 2],
                vec![0, 2],
            ],
        )
        .unwrap();
        let inst = Instance::list_coloring(adj.clone(), &lists);
        for v in 0..5 {
            let mf = marginal_f64(&inst, v).unwrap();
            let me = marginal_exact(&inst, v).unwrap();
            for c in 0..3 {
                let mut l = lists.clone();
                if !l.lists[v].contains(&c) {
                    assert!(me[c].is_zero());
                    continue;
                }
                l.lists[v] = vec![c];
                let num = brute_count(&adj, &l) as f64 / brute_count(&adj, &lists) as f64;
                assert!((mf[c] - num).abs() < 1e-12);
                assert!((me[c].to_f64().unwrap() - num).abs() < 1e-15);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        /// Random tree on m vertices plus optionally one extra edge.
        fn instance(extra: bool) -> impl Strategy<Value = (Vec<Vec<usize>>, ColorLists)> {
            (2usize..=7, 2usize..=4, any::<u64>()).prop_map(move |(m, k, seed)| {
                let mut rng = seeded(seed);
                let mut adj = vec![Vec::new(); m];
                for v in 1..m {
                    let p = rng.random_range(0..v);
                    adj[v].push(p);
                    adj[p].push(v);
                }
                if extra && m >= 3 {
                    loop {
                        let a = rng.random_range(0..m);
                        let b = rng.random_range(0..m);
                        if a != b && !adj[a].contains(&b) {
                            adj[a].push(b);
                            adj[b].push(a);
                            break;
                        }
                    }
                }
                let lists = (0..m)
                    .map(|_| (0..k).filter(|_| rng.random_bool(0.75)).collect())
                    .collect();
                (adj, ColorLists::new(k, lists).unwrap())
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn tree_counts_match_enumeration((adj, lists) in instance(false)) {
                let c = count_list_colorings(&adj, &lists).unwrap();
                prop_assert_eq!(c, BigUint::from(brute_count(&adj, &lists)));
            }

            #[test]
            fn unicyclic_counts_match_enumeration((adj, lists) in instance(true)) {
                if adj.len() >= 3 {
                    let c = count_unicyclic(&adj, &lists).unwrap();
                    prop_assert_eq!(c, BigUint::from(brute_count(&adj, &lists)));
                }
            }

            #[test]
            fn samples_are_proper((adj, lists) in instance(true), seed in any::<u64>()) {
                let inst = Instance::list_coloring(adj.clone(), &lists);
                match sample_instance(&inst, &mut seeded(seed)) {
                    Ok(col) => {
                        for v in 0..adj.len() {
                            prop_assert!(lists.lists[v].contains(&col[v]));
                            for &w in &adj[v] {
                                prop_assert_ne!(col[v], col[w]);
                            }
                        }
                    }
                    Err(e) => {
                        prop_assert_eq!(e, SampleError::Infeasible);
                        prop_assert_eq!(brute_count(&adj, &lists), 0);
                    }
                }
            }
        }
    }
}
