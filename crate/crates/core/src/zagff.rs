//! Zero-average Green function G = (I − P)^#, the exact field sampler,
//! harmonic solvers for hitting problems and the conditional law of the
//! field given its values on a set.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{self, RegularGraph, DENSE_THRESHOLD};
use crate::linalg::{self, cg, remove_mean, ChebyshevInvSqrt};
use crate::rng::{normal_vec, stream_rng};
use crate::tree::tree_green;

/// Largest system solved by a dense factorisation in the harmonic solvers.
pub const DENSE_SOLVE_LIMIT: usize = 3000;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct GreenOptions {
    pub dense_threshold: usize,
    pub cg_tol: f64,
    pub cheb_tol: f64,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions { dense_threshold: DENSE_THRESHOLD, cg_tol: 1e-12, cheb_tol: 1e-6 }
    }
}

enum Backend {
    Dense {
        g: DMatrix<f64>,
        /// V₊ diag(λ^{-1/2}); Ψ = sampler · ξ.
        sampler: DMatrix<f64>,
    },
    Iterative {
        cheb: ChebyshevInvSqrt,
        cache: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
    },
}

pub struct GreenOperator {
    graph: RegularGraph,
    gap: f64,
    options: GreenOptions,
    backend: Backend,
}

pub fn build_green(g: &RegularGraph) -> Result<GreenOperator> {
    GreenOperator::build_with(g, GreenOptions::default())
}

impl GreenOperator {
    pub fn build_with(g: &RegularGraph, options: GreenOptions) -> Result<Self> {
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        let n = g.n();
        if n <= options.dense_threshold {
            let mut l = -g.transition_matrix();
            for i in 0..n {
                l[(i, i)] += 1.0;
            }
            let eig = l.symmetric_eigen();
            let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            let tol = 1e-10 * max;
            let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() > tol).collect();
            if keep.len() != n - 1 {
                return Err(Error::Numerical(format!("kernel of I−P has dimension {}", n - keep.len())));
            }
            let mut sampler = DMatrix::zeros(n, keep.len());
            let mut gap = f64::INFINITY;
            for (j, &i) in keep.iter().enumerate() {
                let lam = eig.eigenvalues[i];
                gap = gap.min(lam);
                sampler.set_column(j, &(eig.eigenvectors.column(i) / lam.sqrt()));
            }
            let gm = &sampler * sampler.transpose();
            Ok(GreenOperator { graph: g.clone(), gap, options, backend: Backend::Dense { g: gm, sampler } })
        } else {
            let gap = linalg::lanczos_gap(g, 1e-8)?;
            let cheb = ChebyshevInvSqrt::new(gap * (1.0 - 1e-6), 2.0, options.cheb_tol)?;
            Ok(GreenOperator {
                graph: g.clone(),
                gap,
                options,
                backend: Backend::Iterative { cheb, cache: Mutex::new(HashMap::new()) },
            })
        }
    }

    pub fn graph(&self) -> &RegularGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn spectral_gap(&self) -> f64 {
        self.gap
    }

    pub fn options(&self) -> GreenOptions {
        self.options
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense { .. })
    }

    pub fn dense_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.backend {
            Backend::Dense { g, .. } => Some(g),
            Backend::Iterative { .. } => None,
        }
    }

    fn iterative_column(&self, y: usize, cache: &Mutex<HashMap<usize, Arc<Vec<f64>>>>) -> Arc<Vec<f64>> {
        if let Some(c) = cache.lock().unwrap().get(&y) {
            return c.clone();
        }
        let mut e = vec![0.0; self.n()];
        e[y] = 1.0;
        let col = Arc::new(self.solve_laplacian(&e));
        cache.lock().unwrap().insert(y, col.clone());
        col
    }

    /// Solution u ⊥ 1 of (I − P)u = f − mean(f), i.e. u = G f.
    fn solve_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let g = &self.graph;
        cg(|u, out| g.apply_laplacian(u, out), f, self.options.cg_tol, 20 * g.n() + 1000, true)
            .expect("CG on a connected graph converges")
    }

    /// Column G(·, y).
    pub fn column(&self, y: usize) -> Vec<f64> {
        match &self.backend {
            Backend::Dense { g, .. } => g.column(y).iter().cloned().collect(),
            Backend::Iterative { cache, .. } => self.iterative_column(y, cache).as_ref().clone(),
        }
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        match &self.backend {
            Backend::Dense { g, .. } => g[(x, y)],
            Backend::Iterative { cache, .. } => self.iterative_column(y, cache)[x],
        }
    }

    /// G(rows, col).
    pub fn entries(&self, rows: &[usize], col: usize) -> Vec<f64> {
        match &self.backend {
            Backend::Dense { g, .. } => rows.iter().map(|&r| g[(r, col)]).collect(),
            Backend::Iterative { cache, .. } => {
                let c = self.iterative_column(col, cache);
                rows.iter().map(|&r| c[r]).collect()
            }
        }
    }

    pub fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(idx.len(), idx.len());
        for (j, &c) in idx.iter().enumerate() {
            let col = self.entries(idx, c);
            for i in 0..idx.len() {
                m[(i, j)] = col[i];
            }
        }
        // symmetrise away solver noise
        (&m + m.transpose()) * 0.5
    }

    /// G f.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Dense { g, .. } => (g * DVector::from_column_slice(f)).iter().cloned().collect(),
            Backend::Iterative { .. } => self.solve_laplacian(f),
        }
    }

    /// One exact draw of Ψ (within the Chebyshev tolerance in the iterative regime).
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> Vec<f64> {
        match &self.backend {
            Backend::Dense { sampler, .. } => {
                let xi = DVector::from_vec(normal_vec(rng, sampler.ncols()));
                let mut v: Vec<f64> = (sampler * xi).iter().cloned().collect();
                remove_mean(&mut v);
                v
            }
            Backend::Iterative { cheb, .. } => {
                let mut xi = normal_vec(rng, self.n());
                remove_mean(&mut xi);
                let mut v = cheb.apply(&self.graph, &xi);
                remove_mean(&mut v);
                v
            }
        }
    }

    pub fn chebyshev_degree(&self) -> Option<usize> {
        match &self.backend {
            Backend::Iterative { cheb, .. } => Some(cheb.degree()),
            Backend::Dense { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphField {
    pub values: Vec<f64>,
}

impl GraphField {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn sample_zagff(green: &GreenOperator, seed: u64) -> GraphField {
    sample_zagff_replica(green, seed, 0)
}

/// Replica `r` of the sampler seeded by `seed` (independent streams).
pub fn sample_zagff_replica(green: &GreenOperator, seed: u64, r: u64) -> GraphField {
    let mut rng = stream_rng(seed, r);
    GraphField { values: green.sample(&mut rng) }
}

/// Hitting problems for a target set A: X_{H_A} and E_x[H_A] for all starts.
pub struct HarmonicSolver {
    n: usize,
    targets: Vec<usize>,
    /// Row x: law of X_{H_A} from x, columns aligned with `targets`.
    hit: DMatrix<f64>,
    hit_time: Vec<f64>,
}

impl HarmonicSolver {
    pub fn new(g: &RegularGraph, targets: &[usize]) -> Result<Self> {
        if targets.is_empty() {
            return invalid("target set A is empty");
        }
        let n = g.n();
        let mut tindex = vec![usize::MAX; n];
        let mut tg = Vec::with_capacity(targets.len());
        for &a in targets {
            g.check_vertex(a)?;
            if tindex[a] != usize::MAX {
                return invalid(format!("vertex {a} repeated in target set"));
            }
            tindex[a] = tg.len();
            tg.push(a);
        }
        let free: Vec<usize> = (0..n).filter(|&v| tindex[v] == usize::MAX).collect();
        let mut uindex = vec![usize::MAX; n];
        for (i, &u) in free.iter().enumerate() {
            uindex[u] = i;
        }
        let m = free.len();
        let k = tg.len();
        let w = 1.0 / g.d() as f64;
        // rhs columns: 1 (hit time), then P(u, a) for each target a
        let mut rhs = DMatrix::zeros(m, 1 + k);
        for (i, &u) in free.iter().enumerate() {
            rhs[(i, 0)] = 1.0;
            for &v in g.neighbors(u) {
                let t = tindex[v as usize];
                if t != usize::MAX {
                    rhs[(i, 1 + t)] += w;
                }
            }
        }
        let sol = if m == 0 {
            DMatrix::zeros(0, 1 + k)
        } else if m <= DENSE_SOLVE_LIMIT {
            let mut mat = DMatrix::<f64>::identity(m, m);
            for (i, &u) in free.iter().enumerate() {
                for &v in g.neighbors(u) {
                    let j = uindex[v as usize];
                    if j != usize::MAX {
                        mat[(i, j)] -= w;
                    }
                }
            }
            linalg::spd_solve(mat, &rhs)?
        } else {
            let apply = |x: &[f64], out: &mut [f64]| {
                for (i, &u) in free.iter().enumerate() {
                    let s: f64 = g
                        .neighbors(u)
                        .iter()
                        .filter_map(|&v| {
                            let j = uindex[v as usize];
                            (j != usize::MAX).then(|| x[j])
                        })
                        .sum();
                    out[i] = x[i] - w * s;
                }
            };
            let mut sol = DMatrix::zeros(m, 1 + k);
            for c in 0..1 + k {
                let b: Vec<f64> = rhs.column(c).iter().cloned().collect();
                let x = cg(apply, &b, 1e-13, 50 * m + 1000, false)?;
                sol.set_column(c, &DVector::from_vec(x));
            }
            sol
        };
        let mut hit = DMatrix::zeros(n, k);
        let mut hit_time = vec![0.0; n];
        for v in 0..n {
            if tindex[v] != usize::MAX {
                hit[(v, tindex[v])] = 1.0;
            } else {
                let i = uindex[v];
                hit_time[v] = sol[(i, 0)];
                for t in 0..k {
                    hit[(v, t)] = sol[(i, 1 + t)];
                }
            }
        }
        Ok(HarmonicSolver { n, targets: tg, hit, hit_time })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Law of X_{H_A} from x, aligned with `targets()`.
    pub fn hit_distribution(&self, x: usize) -> Vec<f64> {
        self.hit.row(x).iter().cloned().collect()
    }

    pub fn expected_hit_time(&self, x: usize) -> f64 {
        self.hit_time[x]
    }

    /// E_x[f(X_{H_A})] for f given on the targets.
    pub fn boundary_expectation(&self, x: usize, f: &[f64]) -> f64 {
        self.hit.row(x).iter().zip(f).map(|(p, v)| p * v).sum()
    }

    /// E_π[H_A] under the uniform start.
    pub fn pi_hit_time(&self) -> f64 {
        self.hit_time.iter().sum::<f64>() / self.n as f64
    }

    /// Law of X_{H_A} under the uniform start.
    pub fn pi_hit_distribution(&self) -> Vec<f64> {
        (0..self.targets.len()).map(|t| self.hit.column(t).sum() / self.n as f64).collect()
    }
}

/// Conditional mean and variance of Ψ(x) given Ψ = `observed` on A, built
/// from hitting quantities of the random walk.
pub fn conditional_law(green: &GreenOperator, set: &[usize], observed: &[f64], x: usize) -> Result<(f64, f64)> {
    let solver = HarmonicSolver::new(green.graph(), set)?;
    conditional_law_with(&solver, green, observed, x)
}

pub fn conditional_law_with(
    solver: &HarmonicSolver,
    green: &GreenOperator,
    observed: &[f64],
    x: usize,
) -> Result<(f64, f64)> {
    green.graph().check_vertex(x)?;
    if observed.len() != solver.targets().len() {
        return invalid("observed values do not match the conditioning set");
    }
    let pi_time = solver.pi_hit_time();
    let ratio = if pi_time > 0.0 { solver.expected_hit_time(x) / pi_time } else { 0.0 };
    let pi_hit = solver.pi_hit_distribution();
    let hx = solver.hit_distribution(x);
    let mean = linalg::dot(&hx, observed) - ratio * linalg::dot(&pi_hit, observed);
    let g_ax = green.entries(solver.targets(), x);
    let var = green.entry(x, x) - linalg::dot(&hx, &g_ax) + ratio * linalg::dot(&pi_hit, &g_ax);
    Ok((mean, var.max(0.0)))
}

/// Gaussian conditioning by a growing Cholesky factor of G on the observed
/// set. Vertices whose value is already determined by the observed ones
/// (zero conditional variance) are recorded but not added to the factor.
pub struct Conditioner<'a> {
    green: &'a GreenOperator,
    idx: Vec<usize>,
    /// Packed lower-triangular rows of the factor.
    l: Vec<f64>,
    /// L^{-1} ψ on the factor set.
    w: Vec<f64>,
    rel_tol: f64,
}

impl<'a> Conditioner<'a> {
    pub fn new(green: &'a GreenOperator) -> Self {
        Conditioner { green, idx: Vec::new(), l: Vec::new(), w: Vec::new(), rel_tol: 1e-11 }
    }

    fn solve_row(&self, u: usize) -> Vec<f64> {
        let c = self.green.entries(&self.idx, u);
        let mut z = vec![0.0; self.idx.len()];
        for i in 0..self.idx.len() {
            let row = &self.l[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
            let s: f64 = row[..i].iter().zip(&z[..i]).map(|(a, b)| a * b).sum();
            z[i] = (c[i] - s) / row[i];
        }
        z
    }

    /// (a, b): conditional mean and variance of Ψ(u) given the observed values.
    pub fn predict(&self, u: usize) -> (f64, f64) {
        let z = self.solve_row(u);
        let mean = linalg::dot(&z, &self.w);
        let var = self.green.entry(u, u) - linalg::dot(&z, &z);
        (mean, var.max(0.0))
    }

    pub fn observe(&mut self, u: usize, value: f64) {
        let z = self.solve_row(u);
        let guu = self.green.entry(u, u);
        let var = guu - linalg::dot(&z, &z);
        if var <= self.rel_tol * guu {
            return;
        }
        let piv = var.sqrt();
        let mean = linalg::dot(&z, &self.w);
        self.l.extend_from_slice(&z);
        self.l.push(piv);
        self.w.push((value - mean) / piv);
        self.idx.push(u);
    }

    /// Draw Ψ(u) from its conditional law and record it.
    pub fn generate(&mut self, u: usize, xi: f64) -> f64 {
        let (a, b) = self.predict(u);
        let v = a + xi * b.sqrt();
        self.observe(u, v);
        v
    }
}

/// Conditional law by the Schur complement of G on {x} ∪ A.
pub fn schur_conditional(green: &GreenOperator, set: &[usize], observed: &[f64], x: usize) -> Result<(f64, f64)> {
    if set.is_empty() {
        return invalid("conditioning set is empty");
    }
    if observed.len() != set.len() {
        return invalid("observed values do not match the conditioning set");
    }
    let mut c = Conditioner::new(green);
    for (&a, &v) in set.iter().zip(observed) {
        c.observe(a, v);
    }
    if let Some(i) = set.iter().position(|&a| a == x) {
        return Ok((observed[i], 0.0));
    }
    Ok(c.predict(x))
}

/// Generate Ψ vertex by vertex along `order` from successive conditional laws.
pub fn sequential_sample<R: RngCore>(green: &GreenOperator, order: &[usize], rng: &mut R) -> Vec<f64> {
    let mut c = Conditioner::new(green);
    let xi = normal_vec(rng, order.len());
    let mut out = vec![0.0; green.n()];
    for (&u, &z) in order.iter().zip(&xi) {
        out[u] = c.generate(u, z);
    }
    out
}

/// Killed Green function g^U of the walk on g, U a proper subset.
pub struct KilledGraphSolver {
    set: Vec<usize>,
    index: Vec<usize>,
    inverse: DMatrix<f64>,
}

impl KilledGraphSolver {
    pub fn new(g: &RegularGraph, set: &[usize]) -> Result<Self> {
        let n = g.n();
        let mut index = vec![usize::MAX; n];
        let mut uniq = Vec::new();
        for &u in set {
            g.check_vertex(u)?;
            if index[u] == usize::MAX {
                index[u] = uniq.len();
                uniq.push(u);
            }
        }
        if uniq.len() == n {
            return invalid("U must be a proper subset of the vertex set");
        }
        if uniq.len() > DENSE_SOLVE_LIMIT {
            return invalid(format!("killed Green function limited to |U| ≤ {DENSE_SOLVE_LIMIT}"));
        }
        let m = uniq.len();
        let w = 1.0 / g.d() as f64;
        let mut mat = DMatrix::<f64>::identity(m, m);
        for (i, &u) in uniq.iter().enumerate() {
            for &v in g.neighbors(u) {
                let j = index[v as usize];
                if j != usize::MAX {
                    mat[(i, j)] -= w;
                }
            }
        }
        let inverse = if m == 0 {
            DMatrix::zeros(0, 0)
        } else {
            mat.cholesky().ok_or_else(|| Error::Numerical("killed operator not SPD".into()))?.inverse()
        };
        Ok(KilledGraphSolver { set: uniq, index, inverse })
    }

    pub fn set(&self) -> &[usize] {
        &self.set
    }

    pub fn green(&self, x: usize, y: usize) -> f64 {
        let (i, j) = (self.index[x], self.index[y]);
        if i == usize::MAX || j == usize::MAX {
            0.0
        } else {
            self.inverse[(i, j)]
        }
    }

    /// g^U indexed like `set()`.
    pub fn green_matrix(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

pub fn killed_graph_green(g: &RegularGraph, set: &[usize], x: usize, y: usize) -> Result<f64> {
    g.check_vertex(x)?;
    g.check_vertex(y)?;
    Ok(KilledGraphSolver::new(g, set)?.green(x, y))
}

/// Right-hand side of the pointwise bound on G with the N-dependent terms.
pub fn green_upper_bound(d: usize, n: usize, alpha: f64, beta: f64, dist: usize) -> f64 {
    let c0 = alpha * beta / (d - 1) as f64;
    let nf = n as f64;
    16.0 / 7.0 * tree_green(d, dist) + 2.0 * nf.ln() * nf.powf(-c0 / beta) + 1.0 / (beta * nf.powf(c0))
}

/// Short-range bound 3·g_T(dist), valid for dist ≤ (c0/3)·log_{d−1}N.
pub fn green_short_range_bound(d: usize, dist: usize) -> f64 {
    3.0 * tree_green(d, dist)
}

/// Largest distance covered by the short-range bound.
pub fn short_range_radius(d: usize, n: usize, alpha: f64, beta: f64) -> f64 {
    alpha * beta / (d - 1) as f64 / 3.0 * graph::log_base(n as f64, (d - 1) as f64)
}
