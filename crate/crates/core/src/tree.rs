//! The d-regular tree truncated at depth L: Green functions, the recursive
//! GFF sampler, killed Green functions, sphere hitting distributions and
//! forward clusters.
//!
//! Randomness is keyed per vertex: the key of a child is a hash of its
//! parent's key and its child index, and the innovation at a vertex is a
//! normal drawn from its key. A realisation is therefore a function of the
//! root key alone, identical across levels h and truncation depths, and
//! the lazy cluster explorer sees exactly the values a materialised ball
//! would hold.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Address;
use crate::rng::{child_key, derive_seed, keyed_normal};

pub fn tree_green(d: usize, dist: usize) -> f64 {
    let b = (d - 1) as f64;
    b / (b - 1.0) * b.powi(-(dist as i32))
}

/// Root key of the tree realisation with the given seed.
pub fn tree_root_key(seed: u64) -> u64 {
    derive_seed(seed, 0x7EE)
}

/// B_T(o, L) in BFS order. The root has children with indices 0..d; every
/// other vertex has children 0..d−1. The marked neighbour ō of the root is
/// its child 0, so the forward tree T⁺ consists of the root and the subtrees
/// of root children 1..d.
#[derive(Clone, Debug)]
pub struct TreeBall {
    d: usize,
    depth: usize,
    parent: Vec<u32>,
    level: Vec<u16>,
    child_index: Vec<u8>,
    first_child: Vec<u32>,
    level_start: Vec<usize>,
}

impl TreeBall {
    pub fn new(d: usize, depth: usize) -> Result<Self> {
        if d < 3 {
            return invalid(format!("degree must be at least 3, got {d}"));
        }
        let size = ball_size(d, depth);
        if size > 50_000_000 {
            return invalid(format!("ball of depth {depth} has {size} vertices; use lazy exploration"));
        }
        let mut parent = vec![u32::MAX];
        let mut level = vec![0u16];
        let mut child_index = vec![0u8];
        let mut first_child = Vec::with_capacity(size);
        let mut level_start = vec![0, 1];
        for k in 0..depth {
            for v in level_start[k]..level_start[k + 1] {
                first_child.push(parent.len() as u32);
                let nc = if v == 0 { d } else { d - 1 };
                for j in 0..nc {
                    parent.push(v as u32);
                    level.push(k as u16 + 1);
                    child_index.push(j as u8);
                }
            }
            level_start.push(parent.len());
        }
        while first_child.len() < parent.len() {
            first_child.push(parent.len() as u32);
        }
        Ok(TreeBall { d, depth, parent, level, child_index, first_child, level_start })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_vertices(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        (v != 0).then(|| self.parent[v] as usize)
    }

    pub fn level_of(&self, v: usize) -> usize {
        self.level[v] as usize
    }

    pub fn child_index(&self, v: usize) -> usize {
        self.child_index[v] as usize
    }

    pub fn children(&self, v: usize) -> Range<usize> {
        if self.level_of(v) >= self.depth {
            return 0..0;
        }
        let s = self.first_child[v] as usize;
        let nc = if v == 0 { self.d } else { self.d - 1 };
        s..s + nc
    }

    /// Neighbours of v inside the ball (parent first, then children).
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.parent(v).into_iter().chain(self.children(v)).collect()
    }

    /// S(o, k).
    pub fn level(&self, k: usize) -> Range<usize> {
        self.level_start[k]..self.level_start[k + 1]
    }

    /// B(o, k) is the index prefix `0..ball_end(k)`.
    pub fn ball_end(&self, k: usize) -> usize {
        self.level_start[k + 1]
    }

    pub fn address(&self, mut v: usize) -> Address {
        let mut a = Vec::with_capacity(self.level_of(v));
        while v != 0 {
            a.push(self.child_index[v]);
            v = self.parent[v] as usize;
        }
        a.reverse();
        a
    }

    pub fn vertex(&self, addr: &[u8]) -> Option<usize> {
        if addr.len() > self.depth {
            return None;
        }
        let mut v = 0usize;
        for &j in addr {
            let ch = self.children(v);
            if j as usize >= ch.len() {
                return None;
            }
            v = ch.start + j as usize;
        }
        Some(v)
    }

    pub fn dist(&self, mut u: usize, mut v: usize) -> usize {
        let mut dd = 0;
        while self.level[u] > self.level[v] {
            u = self.parent[u] as usize;
            dd += 1;
        }
        while self.level[v] > self.level[u] {
            v = self.parent[v] as usize;
            dd += 1;
        }
        while u != v {
            u = self.parent[u] as usize;
            v = self.parent[v] as usize;
            dd += 2;
        }
        dd
    }

    /// Membership in T⁺ (paths from o avoiding ō).
    pub fn is_forward(&self, mut v: usize) -> bool {
        if v == 0 {
            return true;
        }
        while self.parent[v] != 0 {
            v = self.parent[v] as usize;
        }
        self.child_index[v] != 0
    }

    pub fn forward_sphere(&self, k: usize) -> Vec<usize> {
        self.level(k).filter(|&v| self.is_forward(v)).collect()
    }

    /// Per-vertex keys of the realisation rooted at `root_key`.
    pub fn keys(&self, root_key: u64) -> Vec<u64> {
        let mut keys = vec![0u64; self.n_vertices()];
        keys[0] = root_key;
        for v in 1..self.n_vertices() {
            keys[v] = child_key(keys[self.parent[v] as usize], self.child_index[v] as usize);
        }
        keys
    }
}

/// |B_T(o, r)| = (d(d−1)^r − 2)/(d−2).
pub fn ball_size(d: usize, r: usize) -> usize {
    (d * (d - 1).pow(r as u32) - 2) / (d - 2)
}

/// Standard deviations of the root value and of the innovations Y_x.
pub fn recursion_sds(d: usize) -> (f64, f64) {
    let b = (d - 1) as f64;
    ((b / (b - 1.0)).sqrt(), (d as f64 / b).sqrt())
}

#[derive(Clone, Debug)]
pub struct TreeField<'a> {
    pub ball: &'a TreeBall,
    pub values: Vec<f64>,
    pub root_condition: Option<f64>,
}

/// Recursive sampler: φ(o) ~ N(0,(d−1)/(d−2)) or pinned, then
/// φ(x) = φ(x̄)/(d−1) + Y_x with Y_x ~ N(0, d/(d−1)).
pub fn sample_tree_gff(ball: &TreeBall, root_condition: Option<f64>, seed: u64) -> TreeField<'_> {
    let d = ball.d();
    let (sd0, sd1) = recursion_sds(d);
    let keys = ball.keys(tree_root_key(seed));
    let inv = 1.0 / (d - 1) as f64;
    let mut values = vec![0.0; ball.n_vertices()];
    values[0] = root_condition.unwrap_or_else(|| sd0 * keyed_normal(keys[0]));
    for v in 1..ball.n_vertices() {
        values[v] = values[ball.parent[v] as usize] * inv + sd1 * keyed_normal(keys[v]);
    }
    TreeField { ball, values, root_condition }
}

/// Killed Green function of a vertex set U strictly inside the ball, by a
/// dense Cholesky factorisation of I − P restricted to U.
pub struct KilledTreeSolver<'a> {
    ball: &'a TreeBall,
    set: Vec<usize>,
    index: Vec<usize>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> KilledTreeSolver<'a> {
    pub fn new(ball: &'a TreeBall, set: &[usize]) -> Result<Self> {
        let mut index = vec![usize::MAX; ball.n_vertices()];
        let mut uniq = Vec::with_capacity(set.len());
        for &u in set {
            if u >= ball.n_vertices() {
                return Err(Error::VertexOutOfRange(u));
            }
            if ball.level_of(u) >= ball.depth() {
                return Err(Error::Geometry(format!(
                    "vertex {u} lies on the truncation boundary; exit from U is not observable"
                )));
            }
            if index[u] == usize::MAX {
                index[u] = uniq.len();
                uniq.push(u);
            }
        }
        let m = uniq.len();
        let w = 1.0 / ball.d() as f64;
        let mut mat = DMatrix::<f64>::identity(m, m);
        for (i, &u) in uniq.iter().enumerate() {
            for v in ball.neighbors(u) {
                if index[v] != usize::MAX {
                    mat[(i, index[v])] -= w;
                }
            }
        }
        let chol = mat.cholesky().ok_or_else(|| Error::Numerical("killed operator not SPD".into()))?;
        Ok(KilledTreeSolver { ball, set: uniq, index, chol })
    }

    pub fn set(&self) -> &[usize] {
        &self.set
    }

    pub fn contains(&self, v: usize) -> bool {
        self.index[v] != usize::MAX
    }

    /// Column of g^U at y, indexed like `set()`.
    fn column(&self, y: usize) -> nalgebra::DVector<f64> {
        let mut e = nalgebra::DVector::zeros(self.set.len());
        e[self.index[y]] = 1.0;
        self.chol.solve(&e)
    }

    pub fn green(&self, x: usize, y: usize) -> f64 {
        if !self.contains(x) || !self.contains(y) {
            return 0.0;
        }
        self.column(y)[self.index[x]]
    }

    /// Full matrix of g^U, indexed like `set()`.
    pub fn green_matrix(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Exit distribution of the walk from x: pairs (vertex, probability)
    /// sorted by vertex.
    pub fn exit_distribution(&self, x: usize) -> Vec<(usize, f64)> {
        if !self.contains(x) {
            return vec![(x, 1.0)];
        }
        let col = self.column(x);
        let w = 1.0 / self.ball.d() as f64;
        let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
        for (i, &u) in self.set.iter().enumerate() {
            for v in self.ball.neighbors(u) {
                if !self.contains(v) {
                    *acc.entry(v).or_insert(0.0) += col[i] * w;
                }
            }
        }
        acc.into_iter().collect()
    }

    /// Outer boundary ∂U, sorted.
    pub fn boundary(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self
            .set
            .iter()
            .flat_map(|&u| self.ball.neighbors(u))
            .filter(|&v| !self.contains(v))
            .collect();
        b.sort_unstable();
        b.dedup();
        b
    }
}

/// g^U(x, y) on the truncated tree.
pub fn killed_tree_green(ball: &TreeBall, set: &[usize], x: usize, y: usize) -> Result<f64> {
    Ok(KilledTreeSolver::new(ball, set)?.green(x, y))
}

/// Law of X_{H_{S(o,R)}} from y ∈ B(o,R): probabilities aligned with the
/// vertices of `ball.level(R)`.
pub fn hitting_distribution_sphere(ball: &TreeBall, y: usize, radius: usize) -> Result<Vec<f64>> {
    if radius > ball.depth() {
        return invalid(format!("radius {radius} exceeds truncation depth {}", ball.depth()));
    }
    if y >= ball.n_vertices() || ball.level_of(y) > radius {
        return Err(Error::Geometry(format!("{y} is not in B(o,{radius})")));
    }
    let sphere = ball.level(radius);
    let mut out = vec![0.0; sphere.len()];
    if ball.level_of(y) == radius {
        out[y - sphere.start] = 1.0;
        return Ok(out);
    }
    let interior: Vec<usize> = (0..ball.ball_end(radius - 1)).collect();
    let solver = KilledTreeSolver::new(ball, &interior)?;
    for (z, p) in solver.exit_distribution(y) {
        out[z - sphere.start] = p;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TreeCluster {
    pub vertices: Vec<usize>,
    pub level_counts: Vec<u64>,
    /// The cluster reaches the truncation depth.
    pub censored: bool,
}

/// Component of {φ ≥ h} containing o, intersected with T⁺.
pub fn forward_cluster(field: &TreeField<'_>, h: f64) -> TreeCluster {
    let ball = field.ball;
    let mut counts = vec![0u64; ball.depth() + 1];
    let mut vertices = Vec::new();
    if field.values[0] >= h {
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            vertices.push(v);
            counts[ball.level_of(v)] += 1;
            for c in ball.children(v) {
                if v == 0 && ball.child_index(c) == 0 {
                    continue;
                }
                if field.values[c] >= h {
                    stack.push(c);
                }
            }
        }
        vertices.sort_unstable();
    }
    let censored = counts[ball.depth()] > 0;
    TreeCluster { vertices, level_counts: counts, censored }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LazyCluster {
    pub level_counts: Vec<u64>,
    pub size: u64,
    pub censored: bool,
    /// The exploration stopped at `size_cap`; counts are partial.
    pub capped: bool,
}

/// Forward cluster of the keyed realisation generated only along the cluster,
/// to depth `depth`. Optionally stops after `size_cap` vertices.
pub fn lazy_forward_cluster(
    d: usize,
    root_key: u64,
    root_condition: Option<f64>,
    h: f64,
    depth: usize,
    size_cap: Option<u64>,
) -> LazyCluster {
    let (sd0, sd1) = recursion_sds(d);
    let inv = 1.0 / (d - 1) as f64;
    let mut counts = vec![0u64; depth + 1];
    let root = root_condition.unwrap_or_else(|| sd0 * keyed_normal(root_key));
    let mut size = 0u64;
    let mut capped = false;
    if root >= h {
        let mut stack: Vec<(f64, u64, usize)> = vec![(root, root_key, 0)];
        while let Some((val, key, lev)) = stack.pop() {
            counts[lev] += 1;
            size += 1;
            if size_cap.is_some_and(|c| size >= c) {
                capped = true;
                break;
            }
            if lev == depth {
                continue;
            }
            let js = if lev == 0 { 1..d } else { 0..d - 1 };
            for j in js.rev() {
                let k = child_key(key, j);
                let cv = val * inv + sd1 * keyed_normal(k);
                if cv >= h {
                    stack.push((cv, k, lev + 1));
                }
            }
        }
    }
    LazyCluster { censored: counts[depth] > 0, level_counts: counts, size, capped }
}

/// Does the forward cluster of the keyed realisation reach depth `depth`?
/// Depth-first with early exit, so supercritical replicas stay cheap.
pub fn lazy_reaches_depth(d: usize, root_key: u64, root_condition: Option<f64>, h: f64, depth: usize) -> bool {
    let (sd0, sd1) = recursion_sds(d);
    let inv = 1.0 / (d - 1) as f64;
    let root = root_condition.unwrap_or_else(|| sd0 * keyed_normal(root_key));
    if root < h {
        return false;
    }
    let mut stack: Vec<(f64, u64, usize)> = vec![(root, root_key, 0)];
    while let Some((val, key, lev)) = stack.pop() {
        if lev == depth {
            return true;
        }
        let js = if lev == 0 { 1..d } else { 0..d - 1 };
        for j in js.rev() {
            let k = child_key(key, j);
            let cv = val * inv + sd1 * keyed_normal(k);
            if cv >= h {
                stack.push((cv, k, lev + 1));
            }
        }
    }
    false
}
