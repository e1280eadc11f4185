//! Local couplings of the zero-average field with the tree field around
//! tree-like balls, variance bounds for boundary harmonic averages, and the
//! proximity of the graph conditional law to its tree limit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exploration::good_vertex_test;
use crate::graph::{cover_tree_image, log_base, min_preimage, Address, RegularGraph};
use crate::linalg::psd_factor;
use crate::rng::{normal_vec, stream_rng};
use crate::tree::{hitting_distribution_sphere, tree_green, KilledTreeSolver, TreeBall};
use crate::zagff::{conditional_law, GreenOperator, KilledGraphSolver};

/// Tree distance between two absolute addresses.
pub fn address_distance(a: &[u8], b: &[u8]) -> usize {
    let common = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    a.len() + b.len() - 2 * common
}

/// Neighbours of an absolute tree address: parent first, then children.
fn address_neighbors(d: usize, a: &[u8]) -> Vec<Address> {
    let mut out = Vec::with_capacity(d);
    if !a.is_empty() {
        out.push(a[..a.len() - 1].to_vec());
    }
    let nc = if a.is_empty() { d } else { d - 1 };
    for j in 0..nc {
        let mut c = a.to_vec();
        c.push(j as u8);
        out.push(c);
    }
    out
}

/// A ball B_T(c, R) of the absolute tree seen through a local frame
/// (a `TreeBall` rooted at c), with each vertex's image under π_{n,x}.
#[derive(Clone, Debug)]
pub struct LocalChart {
    pub graph_center: usize,
    pub tree_center: Address,
    /// Absolute address per local vertex.
    pub addresses: Vec<Address>,
    /// Graph image per local vertex.
    pub images: Vec<usize>,
}

impl LocalChart {
    /// Chart of B_T(tree_center, R) for the cover tree rooted at x. Fails
    /// unless π_{n,x} maps the tree ball bijectively onto B_g(image, R).
    pub fn new(g: &RegularGraph, x: usize, tree_center: Address, ball: &TreeBall) -> Result<Self> {
        let d = g.d();
        let n = ball.n_vertices();
        let mut addresses: Vec<Address> = Vec::with_capacity(n);
        addresses.push(tree_center.clone());
        for v in 1..n {
            let p = ball.parent(v).unwrap();
            let mut nb = address_neighbors(d, &addresses[p]);
            if let Some(pp) = ball.parent(p) {
                let back = &addresses[pp];
                let i = nb.iter().position(|a| a == back).expect("tree parent is a neighbour");
                nb.remove(i);
            }
            addresses.push(nb.swap_remove(ball.child_index(v)));
        }
        let images = addresses.iter().map(|a| cover_tree_image(g, x, a)).collect::<Result<Vec<_>>>()?;
        let graph_center = images[0];
        let mut target = g.ball(graph_center, ball.depth());
        target.sort_unstable();
        let mut got = images.clone();
        got.sort_unstable();
        let injective = got.windows(2).all(|w| w[0] != w[1]);
        if !injective || got != target {
            return Err(Error::Geometry(format!(
                "cover chart is not an isomorphism onto B({graph_center},{})",
                ball.depth()
            )));
        }
        Ok(LocalChart { graph_center, tree_center, addresses, images })
    }
}

/// Precomputed linear maps for repeated coupled draws.
pub struct CouplingPlan {
    pub x: usize,
    pub x_prime: Option<usize>,
    pub r: usize,
    pub big_r: usize,
    pub z: Option<Address>,
    charts: Vec<LocalChart>,
    /// D = B(x,R) ∪ B(x',R) in chart order.
    vertices: Vec<usize>,
    inner: Vec<bool>,
    /// Graph and tree exit operators of U = B(x,R−1) ∪ B(x',R−1) on D.
    h_graph: DMatrix<f64>,
    h_tree: DMatrix<f64>,
    psi_factor: DMatrix<f64>,
    /// Indices (into D) of the sphere vertices and the factor of the tree
    /// covariance there.
    sphere: Vec<usize>,
    phi_sphere_factor: DMatrix<f64>,
    g_dd: DMatrix<f64>,
    killed_tree: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoupledPair {
    pub x: usize,
    pub x_prime: Option<usize>,
    pub r: usize,
    pub big_r: usize,
    pub vertices: Vec<usize>,
    pub tree_addresses: Vec<Address>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub harmonic_graph: Vec<f64>,
    pub harmonic_tree: Vec<f64>,
    /// Ψ − E·[Ψ(X_{T_U})] on D.
    pub killed_graph: Vec<f64>,
    /// φ∘ρ − E·[φ(X_{T_{ρ(U)}})] on D.
    pub killed_tree: Vec<f64>,
    /// max |killed_graph − killed_tree|.
    pub identity_residual: f64,
    /// sup over the r-ball(s) of |Ψ − φ∘ρ|.
    pub sup_deviation: f64,
}

impl CouplingPlan {
    pub fn new(green: &GreenOperator, x: usize, x_prime: Option<usize>, r: usize, big_r: usize) -> Result<Self> {
        let g = green.graph();
        let d = g.d();
        g.check_vertex(x)?;
        if !(1 <= r && r < big_r) {
            return invalid(format!("need 1 ≤ r < R, got r = {r}, R = {big_r}"));
        }
        if g.ball_tree_excess(x, 2 * big_r) != 0 {
            return Err(Error::Geometry(format!("tx(B({x},{})) ≠ 0", 2 * big_r)));
        }
        let mut z = None;
        if let Some(xp) = x_prime {
            g.check_vertex(xp)?;
            if g.ball_tree_excess(xp, 2 * big_r) != 0 {
                return Err(Error::Geometry(format!("tx(B({xp},{})) ≠ 0", 2 * big_r)));
            }
            if g.distance(x, xp).is_none_or(|dd| dd <= 4 * big_r) {
                return Err(Error::Geometry(format!("B({x},{0}) and B({xp},{0}) intersect", 2 * big_r)));
            }
            z = Some(min_preimage(g, x, xp)?);
        }
        let ball = TreeBall::new(d, big_r)?;
        let mut charts = vec![LocalChart::new(g, x, Vec::new(), &ball)?];
        if let Some(za) = &z {
            charts.push(LocalChart::new(g, x, za.clone(), &ball)?);
        }
        let m = ball.n_vertices();
        let vertices: Vec<usize> = charts.iter().flat_map(|c| c.images.iter().cloned()).collect();
        let nd = vertices.len();
        let interior_end = ball.ball_end(big_r - 1);
        let inner: Vec<bool> = (0..nd).map(|i| ball.level_of(i % m) <= r).collect();

        // graph exit operator of U
        let u_set: Vec<usize> =
            charts.iter().flat_map(|c| c.images[..interior_end].iter().cloned()).collect();
        let killed = KilledGraphSolver::new(g, &u_set)?;
        let mut pos = std::collections::HashMap::new();
        for (i, &v) in vertices.iter().enumerate() {
            pos.insert(v, i);
        }
        let gu = killed.green_matrix();
        let w = 1.0 / d as f64;
        let mut h_graph = DMatrix::zeros(nd, nd);
        for i in 0..nd {
            if ball.level_of(i % m) == big_r {
                h_graph[(i, i)] = 1.0;
                continue;
            }
            let ki = killed.set().iter().position(|&u| u == vertices[i]).unwrap();
            for (ku, &u) in killed.set().iter().enumerate() {
                let gval = gu[(ki, ku)];
                for &t in g.neighbors(u) {
                    let t = t as usize;
                    if let Some(&j) = pos.get(&t) {
                        if ball.level_of(j % m) == big_r {
                            h_graph[(i, j)] += gval * w;
                        }
                    }
                }
            }
        }

        // tree exit operator of ρ(U), one local frame per ball
        let interior: Vec<usize> = (0..interior_end).collect();
        let tsolver = KilledTreeSolver::new(&ball, &interior)?;
        let mut h_tree = DMatrix::zeros(nd, nd);
        for (b, _) in charts.iter().enumerate() {
            for v in 0..m {
                for (t, p) in tsolver.exit_distribution(v) {
                    h_tree[(b * m + v, b * m + t)] += p;
                }
            }
        }
        let gt = tsolver.green_matrix();
        let mut killed_tree = DMatrix::zeros(nd, nd);
        for b in 0..charts.len() {
            for i in 0..interior_end {
                for j in 0..interior_end {
                    killed_tree[(b * m + i, b * m + j)] = gt[(i, j)];
                }
            }
        }

        let g_dd = green.submatrix(&vertices);
        let psi_factor = psd_factor(&g_dd);
        let sphere: Vec<usize> = (0..nd).filter(|&i| ball.level_of(i % m) == big_r).collect();
        let addr = |i: usize| &charts[i / m].addresses[i % m];
        let mut ct = DMatrix::zeros(sphere.len(), sphere.len());
        for (a, &i) in sphere.iter().enumerate() {
            for (b, &j) in sphere.iter().enumerate() {
                ct[(a, b)] = tree_green(d, address_distance(addr(i), addr(j)));
            }
        }
        let phi_sphere_factor = psd_factor(&ct);
        Ok(CouplingPlan {
            x,
            x_prime,
            r,
            big_r,
            z,
            charts,
            vertices,
            inner,
            h_graph,
            h_tree,
            psi_factor,
            sphere,
            phi_sphere_factor,
            g_dd,
            killed_tree,
        })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn tree_addresses(&self) -> Vec<Address> {
        self.charts.iter().flat_map(|c| c.addresses.iter().cloned()).collect()
    }

    /// max |(I − H)G(I − H)ᵀ − g^{ρ(U)}_T∘ρ| over D × D.
    pub fn killed_covariance_gap(&self) -> f64 {
        let nd = self.vertices.len();
        let a = DMatrix::<f64>::identity(nd, nd) - &self.h_graph;
        let cov = &a * &self.g_dd * a.transpose();
        (cov - &self.killed_tree).abs().max()
    }

    /// max |graph exit operator − tree exit operator through the chart|.
    pub fn exit_operator_gap(&self) -> f64 {
        (&self.h_graph - &self.h_tree).abs().max()
    }

    pub fn sample(&self, seed: u64, replica: u64) -> CoupledPair {
        let mut rng = stream_rng(seed, replica);
        let nd = self.vertices.len();
        let xi = DVector::from_vec(normal_vec(&mut rng, self.psi_factor.ncols()));
        let psi = &self.psi_factor * xi;
        let harmonic_graph = &self.h_graph * &psi;
        let killed = &psi - &harmonic_graph;
        let eta = DVector::from_vec(normal_vec(&mut rng, self.phi_sphere_factor.ncols()));
        let phi_s = &self.phi_sphere_factor * eta;
        let mut phi_boundary = DVector::zeros(nd);
        for (a, &i) in self.sphere.iter().enumerate() {
            phi_boundary[i] = phi_s[a];
        }
        let harmonic_tree = &self.h_tree * &phi_boundary;
        let phi = &killed + &harmonic_tree;
        let killed_tree = &phi - &self.h_tree * &phi;
        let identity_residual = (&killed - &killed_tree).abs().max();
        let sup_deviation = (0..nd)
            .filter(|&i| self.inner[i])
            .map(|i| (psi[i] - phi[i]).abs())
            .fold(0.0, f64::max);
        let v = |m: DVector<f64>| m.iter().cloned().collect::<Vec<f64>>();
        CoupledPair {
            x: self.x,
            x_prime: self.x_prime,
            r: self.r,
            big_r: self.big_r,
            vertices: self.vertices.clone(),
            tree_addresses: self.tree_addresses(),
            psi: v(psi),
            phi: v(phi),
            harmonic_graph: v(harmonic_graph),
            harmonic_tree: v(harmonic_tree),
            killed_graph: v(killed),
            killed_tree: v(killed_tree),
            identity_residual,
            sup_deviation,
        }
    }
}

pub fn couple_local(
    green: &GreenOperator,
    x: usize,
    x_prime: Option<usize>,
    r: usize,
    big_r: usize,
    seed: u64,
) -> Result<CoupledPair> {
    Ok(CouplingPlan::new(green, x, x_prime, r, big_r)?.sample(seed, 0))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DeviationTail {
    pub r: usize,
    pub big_r: usize,
    pub replicas: usize,
    pub epsilons: Vec<f64>,
    pub exceedances: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub max_identity_residual: f64,
}

/// Empirical P[sup deviation > ε] over independent coupled draws.
pub fn deviation_tail(plan: &CouplingPlan, epsilons: &[f64], replicas: usize, seed: u64) -> DeviationTail {
    use rayon::prelude::*;
    let draws: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let p = plan.sample(seed, k as u64);
            (p.sup_deviation, p.identity_residual)
        })
        .collect();
    let exceedances: Vec<usize> =
        epsilons.iter().map(|&e| draws.iter().filter(|(dv, _)| *dv > e).count()).collect();
    DeviationTail {
        r: plan.r,
        big_r: plan.big_r,
        replicas,
        epsilons: epsilons.to_vec(),
        frequencies: exceedances.iter().map(|&c| c as f64 / replicas.max(1) as f64).collect(),
        exceedances,
        max_identity_residual: draws.iter().map(|d| d.1).fold(0.0, f64::max),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundaryVarianceRow {
    /// Local vertex index (tree) or graph vertex.
    pub vertex: usize,
    pub dist: usize,
    pub exact: f64,
    pub bound: f64,
}

impl BoundaryVarianceRow {
    pub fn holds(&self) -> bool {
        self.exact <= self.bound * (1.0 + 1e-12)
    }
}

/// Var(E_y[φ(X_{H_S})]), S = S_T(o,R), for every y ∈ B_T(o,R), with the bound
/// d²/((d−1)(d−2))·(d−1)^{−(R−2|y|)}.
pub fn tree_boundary_variance(d: usize, big_r: usize) -> Result<Vec<BoundaryVarianceRow>> {
    if big_r == 0 {
        return invalid("R must be at least 1");
    }
    let ball = TreeBall::new(d, big_r)?;
    let sphere: Vec<usize> = ball.level(big_r).collect();
    let mut cov = DMatrix::zeros(sphere.len(), sphere.len());
    for (a, &u) in sphere.iter().enumerate() {
        for (b, &v) in sphere.iter().enumerate() {
            cov[(a, b)] = tree_green(d, ball.dist(u, v));
        }
    }
    let pref = (d * d) as f64 / ((d - 1) * (d - 2)) as f64;
    let b = (d - 1) as f64;
    (0..ball.n_vertices())
        .map(|y| {
            let h = DVector::from_vec(hitting_distribution_sphere(&ball, y, big_r)?);
            let exact = (h.transpose() * &cov * &h)[(0, 0)];
            let k = ball.level_of(y);
            Ok(BoundaryVarianceRow { vertex: y, dist: k, exact, bound: pref * b.powf(-(big_r as f64 - 2.0 * k as f64)) })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphBoundaryVariance {
    pub x: usize,
    pub big_r: usize,
    /// R ≤ (c0/6)·log_{d−1}N, the range in which the bound is asserted by theory.
    pub within_scale: bool,
    pub rows: Vec<BoundaryVarianceRow>,
}

/// Var(E_y[Ψ(X_{H_{S(x,R)}})]) for every y ∈ B(x,R), with the bound
/// 3d²/((d−1)(d−2))·(d−1)^{−(R−2 d(x,y))}. Requires tx(B(x,2R)) = 0.
pub fn graph_boundary_variance(green: &GreenOperator, x: usize, big_r: usize, c0: f64) -> Result<GraphBoundaryVariance> {
    let g = green.graph();
    let d = g.d();
    g.check_vertex(x)?;
    if big_r == 0 {
        return invalid("R must be at least 1");
    }
    if g.ball_tree_excess(x, 2 * big_r) != 0 {
        return Err(Error::Geometry(format!("tx(B({x},{})) ≠ 0", 2 * big_r)));
    }
    let dist = g.distances_from(x, big_r);
    let ball = g.ball(x, big_r);
    let sphere: Vec<usize> = ball.iter().cloned().filter(|&v| dist[v] as usize == big_r).collect();
    let interior: Vec<usize> = ball.iter().cloned().filter(|&v| (dist[v] as usize) < big_r).collect();
    let mut spos = vec![usize::MAX; g.n()];
    for (i, &v) in sphere.iter().enumerate() {
        spos[v] = i;
    }
    let killed = KilledGraphSolver::new(g, &interior)?;
    let gu = killed.green_matrix();
    let cov = green.submatrix(&sphere);
    let pref = 3.0 * (d * d) as f64 / ((d - 1) * (d - 2)) as f64;
    let b = (d - 1) as f64;
    let w = 1.0 / d as f64;
    let mut rows = Vec::with_capacity(ball.len());
    for &y in &ball {
        let mut h = DVector::zeros(sphere.len());
        if spos[y] != usize::MAX {
            h[spos[y]] = 1.0;
        } else {
            let ky = killed.set().iter().position(|&u| u == y).unwrap();
            for (ku, &u) in killed.set().iter().enumerate() {
                for &t in g.neighbors(u) {
                    let t = t as usize;
                    if spos[t] != usize::MAX {
                        h[spos[t]] += gu[(ky, ku)] * w;
                    }
                }
            }
        }
        let exact = (h.transpose() * &cov * &h)[(0, 0)];
        let k = dist[y] as usize;
        rows.push(BoundaryVarianceRow { vertex: y, dist: k, exact, bound: pref * b.powf(-(big_r as f64 - 2.0 * k as f64)) });
    }
    let within_scale = big_r as f64 <= c0 / 6.0 * log_base(g.n() as f64, b) + 1e-9;
    Ok(GraphBoundaryVariance { x, big_r, within_scale, rows })
}

/// P_x[H_A = T_{F_A}] for a good vertex: the probability that the biased walk
/// on ℤ (right w.p. (d−1)/d) from 1 hits 0 before s+1.
pub fn gamblers_ruin_closed_form(d: usize, s: usize) -> f64 {
    let q = 1.0 / (d - 1) as f64;
    1.0 - (1.0 - q) / (1.0 - q.powi(s as i32 + 1))
}

/// P_x[H_A = T_{F_A}] from a killed-walk solve on F_A(x, s).
pub fn ruin_probability(g: &RegularGraph, set: &[usize], x: usize, s: usize) -> Result<f64> {
    let verdict = good_vertex_test(g, set, x, s)?;
    let f = &verdict.f_set;
    let killed = KilledGraphSolver::new(g, f)?;
    let mut in_a = vec![false; g.n()];
    for &a in set {
        in_a[a] = true;
    }
    let kx = killed.set().iter().position(|&u| u == x).unwrap();
    let gu = killed.green_matrix();
    let w = 1.0 / g.d() as f64;
    let mut p = 0.0;
    for (ku, &u) in killed.set().iter().enumerate() {
        let to_a = g.neighbors(u).iter().filter(|&&t| in_a[t as usize]).count();
        p += gu[(kx, ku)] * w * to_a as f64;
    }
    Ok(p)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProximityReport {
    pub x: usize,
    pub parent: usize,
    pub mean: f64,
    pub variance: f64,
    pub tree_mean: f64,
    pub tree_variance: f64,
    pub mean_gap: f64,
    pub var_gap: f64,
}

/// Distance of the law of Ψ(x) given Ψ = `observed` on A from the tree limit
/// N(ψ(x̄)/(d−1), d/(d−1)), for a good vertex x. `b` and `b_prime` bound
/// |A|/ln N and sup|observed|/√(ln N).
#[allow(clippy::too_many_arguments)]
pub fn conditional_proximity_check(
    green: &GreenOperator,
    set: &[usize],
    x: usize,
    observed: &[f64],
    s: usize,
    b: f64,
    b_prime: f64,
) -> Result<ProximityReport> {
    let g = green.graph();
    let d = g.d();
    let ln_n = (g.n() as f64).ln();
    if set.len() as f64 > b * ln_n {
        return invalid(format!("|A| = {} exceeds b·ln N = {}", set.len(), b * ln_n));
    }
    let sup = observed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup > b_prime * ln_n.sqrt() {
        return invalid(format!("sup |ψ| on A = {sup} exceeds b'·√(ln N) = {}", b_prime * ln_n.sqrt()));
    }
    let verdict = good_vertex_test(g, set, x, s)?;
    if !verdict.is_good {
        return Err(Error::Geometry(format!("{x} is not a good vertex: {:?}", verdict.failure)));
    }
    let parent = verdict.unique_explored_neighbor.unwrap();
    let (mean, variance) = conditional_law(green, set, observed, x)?;
    let pi = set.iter().position(|&a| a == parent).unwrap();
    let tree_mean = observed[pi] / (d - 1) as f64;
    let tree_variance = d as f64 / (d - 1) as f64;
    Ok(ProximityReport {
        x,
        parent,
        mean,
        variance,
        tree_mean,
        tree_variance,
        mean_gap: (mean - tree_mean).abs(),
        var_gap: (variance - tree_variance).abs(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProximitySurvey {
    pub n: usize,
    pub set_size: usize,
    pub s: usize,
    pub samples: usize,
    /// Draws in which no good boundary vertex or admissible field was found.
    pub skipped: usize,
    pub reports: Vec<ProximityReport>,
    pub median_mean_gap: f64,
    pub median_var_gap: f64,
}

/// Proximity gaps at random good vertices. Each draw grows a random connected
/// set A of size ⌈ln N⌉ from a uniform vertex, observes an exact field sample
/// on A and picks a uniformly random good vertex of ∂A.
pub fn proximity_survey(green: &GreenOperator, s: usize, samples: usize, b_prime: f64, seed: u64) -> Result<ProximitySurvey> {
    use rand::seq::{IndexedRandom, SliceRandom};
    use rand::Rng;
    let g = green.graph();
    let n = g.n();
    let ln_n = (n as f64).ln();
    let m = ln_n.ceil() as usize;
    let mut reports = Vec::new();
    let mut skipped = 0;
    for k in 0..samples {
        let mut rng = stream_rng(seed, k as u64);
        let mut set = vec![rng.random_range(0..n)];
        let mut in_a = vec![false; n];
        in_a[set[0]] = true;
        while set.len() < m {
            let frontier: Vec<usize> = set
                .iter()
                .flat_map(|&a| g.neighbors(a).iter().map(|&u| u as usize))
                .filter(|&u| !in_a[u])
                .collect();
            let &u = frontier.choose(&mut rng).expect("connected graph");
            in_a[u] = true;
            set.push(u);
        }
        let field = green.sample(&mut rng);
        let observed: Vec<f64> = set.iter().map(|&a| field[a]).collect();
        let mut boundary: Vec<usize> = set
            .iter()
            .flat_map(|&a| g.neighbors(a).iter().map(|&u| u as usize))
            .filter(|&u| !in_a[u])
            .collect();
        boundary.sort_unstable();
        boundary.dedup();
        boundary.shuffle(&mut rng);
        let good = boundary.into_iter().find(|&x| good_vertex_test(g, &set, x, s).is_ok_and(|v| v.is_good));
        match good.map(|x| conditional_proximity_check(green, &set, x, &observed, s, 2.0, b_prime)) {
            Some(Ok(rep)) => reports.push(rep),
            _ => skipped += 1,
        }
    }
    let mg: Vec<f64> = reports.iter().map(|r| r.mean_gap).collect();
    let vg: Vec<f64> = reports.iter().map(|r| r.var_gap).collect();
    Ok(ProximitySurvey {
        n,
        set_size: m,
        s,
        samples,
        skipped,
        median_mean_gap: crate::stats::median(&mg),
        median_var_gap: crate::stats::median(&vg),
        reports,
    })
}
