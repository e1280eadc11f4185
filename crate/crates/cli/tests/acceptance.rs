//! Acceptance run: one PASS/FAIL line per criterion, every tolerance pinned
//! below. Exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gffperc_core::coupling::{graph_boundary_variance, ruin_probability, tree_boundary_variance};
use gffperc_core::estimators::{estimate_eta_plus, estimate_h_star, estimate_lambda};
use gffperc_core::experiment::{find_audited_graph, run_subcritical_experiment, run_supercritical_experiment, LadderConfig};
use gffperc_core::exploration::{explore_component, good_vertex_test, ExploreConfig};
use gffperc_core::graph::{ball_cycle_length, count_nonbacktracking_paths, generate_random_regular, RegularGraph};
use gffperc_core::percolation::level_components;
use gffperc_core::rng::{normal_vec, stream_rng};
use gffperc_core::stats::chi_square_homogeneity;
use gffperc_core::tree::{hitting_distribution_sphere, sample_tree_gff, TreeBall};
use gffperc_core::zagff::{
    build_green, conditional_law, green_short_range_bound, green_upper_bound, sample_zagff_replica, sequential_sample,
    short_range_radius, GreenOperator, HarmonicSolver, KilledGraphSolver,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

const IDENTITY_TOL: f64 = 1e-9;
const CLOSED_FORM_TOL: f64 = 1e-12;
const CONDITIONAL_TOL: f64 = 1e-8;
const CONDITIONAL_PAIRS: usize = 1000;
const MC_SE: f64 = 5.0;
const MC_REPLICAS: usize = 100_000;
const LAW_TRACES: usize = 100_000;
const LAW_P_MIN: f64 = 0.01;
const BOUND_SLACK: f64 = 1e-12;
const MAX_PATHS: u64 = 2;
const RUIN_TOL: f64 = 1e-10;
const H_STAR_GRID: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];
const TREE_DEPTH: usize = 25;
const TREE_REPLICAS: usize = 10_000;
const CI_WIDTH_MAX: f64 = 0.2;
const LOW_LEVEL: f64 = -6.0;
const LOW_LEVEL_LAMBDA: f64 = 2.0;
const LOW_LEVEL_TOL: f64 = 0.1;
const K_CAP: f64 = 20.0;
const LEVEL_OFFSET: f64 = 0.5;
const GAMMA_DELTA: f64 = 0.1;

type Verdict = (bool, String);

fn k4() -> RegularGraph {
    RegularGraph::complete(4).unwrap()
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1 << n) - 1).map(move |m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
}

/// Mean of x_i x_j and its standard error from the accumulated sums.
fn moment(s: f64, q: f64, n: f64) -> (f64, f64) {
    let m = s / n;
    (m, ((q / n - m * m).max(0.0) / n).sqrt())
}

/// Running sums of products, their squares and the values themselves.
struct Moments {
    n: usize,
    reps: f64,
    s: DMatrix<f64>,
    q: DMatrix<f64>,
    m: DVector<f64>,
    m2: DVector<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments { n, reps: 0.0, s: DMatrix::zeros(n, n), q: DMatrix::zeros(n, n), m: DVector::zeros(n), m2: DVector::zeros(n) }
    }

    fn add(&mut self, f: &[f64]) {
        self.reps += 1.0;
        for i in 0..self.n {
            self.m[i] += f[i];
            self.m2[i] += f[i] * f[i];
            for j in i..self.n {
                let p = f[i] * f[j];
                self.s[(i, j)] += p;
                self.q[(i, j)] += p * p;
            }
        }
    }

    fn mean(&self, i: usize) -> (f64, f64) {
        moment(self.m[i], self.m2[i], self.reps)
    }

    fn second(&self, i: usize, j: usize) -> (f64, f64) {
        let (a, b) = (i.min(j), i.max(j));
        moment(self.s[(a, b)], self.q[(a, b)], self.reps)
    }
}

/// Largest |empirical − target| in units of standard errors.
fn worst_z(m: &Moments, target: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.n {
        for j in i..m.n {
            let (v, se) = m.second(i, j);
            worst = worst.max((v - target[(i, j)]).abs() / se);
        }
    }
    worst
}

fn c1_green_identities() -> Verdict {
    let mut worst: f64 = 0.0;
    for g in [k4(), RegularGraph::petersen()] {
        let green = build_green(&g).unwrap();
        let n = g.n();
        for u in subsets(n) {
            let killed = KilledGraphSolver::new(&g, &u).unwrap();
            let outside: Vec<usize> = (0..n).filter(|v| !u.contains(v)).collect();
            let hs = HarmonicSolver::new(&g, &outside).unwrap();
            for x in 0..n {
                for y in 0..n {
                    let gy: Vec<f64> = outside.iter().map(|&z| green.entry(z, y)).collect();
                    let rhs = killed.green(x, y) + hs.boundary_expectation(x, &gy) - hs.expected_hit_time(x) / n as f64;
                    worst = worst.max((green.entry(x, y) - rhs).abs());
                }
            }
        }
    }
    let green = build_green(&k4()).unwrap();
    let mut closed: f64 = 0.0;
    for x in 0..4 {
        for y in 0..4 {
            let want = if x == y { 9.0 / 16.0 } else { -3.0 / 16.0 };
            closed = closed.max((green.entry(x, y) - want).abs());
        }
    }
    (
        worst <= IDENTITY_TOL && closed <= CLOSED_FORM_TOL,
        format!("exit residual {worst:.2e} ≤ {IDENTITY_TOL:e}; K4 closed form {closed:.2e} ≤ {CLOSED_FORM_TOL:e}"),
    )
}

/// Conditional mean and variance by inverting G on A.
fn schur(gm: &DMatrix<f64>, set: &[usize], obs: &[f64], x: usize) -> (f64, f64) {
    let k = set.len();
    let gaa = DMatrix::from_fn(k, k, |i, j| gm[(set[i], set[j])]);
    let gxa = DVector::from_fn(k, |i, _| gm[(x, set[i])]);
    let w = gaa.try_inverse().expect("G restricted to a proper subset is invertible") * &gxa;
    (w.dot(&DVector::from_column_slice(obs)), gm[(x, x)] - gxa.dot(&w))
}

fn c2_conditional_law() -> Verdict {
    let mut rng = stream_rng(2, 0);
    let graphs: Vec<GreenOperator> = [(3, 10), (3, 20), (3, 32), (3, 50), (4, 25), (5, 40)]
        .iter()
        .map(|&(d, n)| build_green(&generate_random_regular(d, n, 11).unwrap()).unwrap())
        .collect();
    let mut worst: f64 = 0.0;
    for p in 0..CONDITIONAL_PAIRS {
        let green = &graphs[p % graphs.len()];
        let n = green.n();
        let k = rng.random_range(1..=n - 2);
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let mut set = all[..k].to_vec();
        set.sort_unstable();
        let x = rng.random_range(0..n);
        let obs: Vec<f64> = set.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let (m, v) = conditional_law(green, &set, &obs, x).unwrap();
        let (ms, vs) = schur(green.dense_matrix().unwrap(), &set, &obs, x);
        worst = worst.max((m - ms).abs()).max((v - vs).abs());
    }
    let a = 0.7;
    let (m, v) = conditional_law(&build_green(&k4()).unwrap(), &[0], &[a], 1).unwrap();
    let k4_err = (m + a / 3.0).abs().max((v - 0.5).abs());
    (
        worst <= CONDITIONAL_TOL && k4_err <= CLOSED_FORM_TOL,
        format!("{CONDITIONAL_PAIRS} pairs, max deviation {worst:.2e} ≤ {CONDITIONAL_TOL:e}; K4 mean −a/3, variance 1/2 off by {k4_err:.1e}"),
    )
}

fn c3_sampler_fidelity() -> Verdict {
    let n = 32;
    let green = build_green(&generate_random_regular(3, n, 5).unwrap()).unwrap();
    let gm = green.dense_matrix().unwrap().clone();
    let mut direct = Moments::new(n);
    let mut seq = Moments::new(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(3, 1));
    let mut rng = stream_rng(3, 2);
    for r in 0..MC_REPLICAS {
        direct.add(&sample_zagff_replica(&green, 3, r as u64).values);
        seq.add(&sequential_sample(&green, &order, &mut rng));
    }
    let (zd, zs) = (worst_z(&direct, &gm), worst_z(&seq, &gm));
    (
        zd <= MC_SE && zs <= MC_SE,
        format!("N = {n}, {MC_REPLICAS} replicas: worst entry {zd:.2} SE (spectral), {zs:.2} SE (sequential) ≤ {MC_SE}"),
    )
}

fn tree_covariance(ball: &TreeBall) -> DMatrix<f64> {
    let b = (ball.d() - 1) as f64;
    let n = ball.n_vertices();
    DMatrix::from_fn(n, n, |u, v| b / (b - 1.0) * b.powi(-(ball.dist(u, v) as i32)))
}

fn c4_tree_recursion() -> Verdict {
    let (d, depth) = (5, 3);
    let ball = TreeBall::new(d, depth).unwrap();
    let n = ball.n_vertices();
    let chol = tree_covariance(&ball).cholesky().unwrap().l();
    let mut rec = Moments::new(n);
    let mut dense = Moments::new(n);
    let mut rng = stream_rng(4, 0);
    for r in 0..MC_REPLICAS {
        rec.add(&sample_tree_gff(&ball, None, r as u64).values);
        dense.add((&chol * DVector::from_vec(normal_vec(&mut rng, n))).as_slice());
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let ((a, sa), (b, sb)) = (rec.mean(i), dense.mean(i));
        worst = worst.max((a - b).abs() / sa.hypot(sb));
        for j in i..n {
            let ((a, sa), (b, sb)) = (rec.second(i, j), dense.second(i, j));
            worst = worst.max((a - b).abs() / sa.hypot(sb));
        }
    }
    let (v, se) = rec.second(0, 0);
    let want = (d - 1) as f64 / (d - 2) as f64;
    let zv = (v - want).abs() / se;
    (
        worst <= MC_SE && zv <= MC_SE,
        format!("{n}-vertex ball, {MC_REPLICAS} replicas: worst mean/covariance gap {worst:.2} SE; Var φ(o) = {v:.4} vs {want:.4} ({zv:.2} SE) ≤ {MC_SE}"),
    )
}

fn law_p_value(green: &GreenOperator, h: f64) -> f64 {
    let n = green.n();
    let mut cfg = ExploreConfig::new(2);
    cfg.k_cap = n as f64;
    let mut a = vec![0u64; n + 1];
    let mut b = vec![0u64; n + 1];
    for r in 0..LAW_TRACES as u64 {
        a[explore_component(green, 0, h, &cfg, 51, r).unwrap().cluster.len()] += 1;
        let f = sample_zagff_replica(green, 52, r);
        b[level_components(green.graph(), &f.values, h).component_size(0)] += 1;
    }
    chi_square_homogeneity(&a, &b).p_value
}

fn c5_law_equality() -> Verdict {
    let (g64, _) = find_audited_graph(3, 64, 0.2, 0.05, 5, 20, 4096).unwrap();
    let mut ps = Vec::new();
    for (name, green) in [("K4", build_green(&k4()).unwrap()), ("N=64", build_green(&g64).unwrap())] {
        for h in [-1.0, 0.0, 1.0] {
            ps.push((name, h, law_p_value(&green, h)));
        }
    }
    let min = ps.iter().map(|p| p.2).fold(1.0, f64::min);
    let list: Vec<String> = ps.iter().map(|(g, h, p)| format!("{g} h={h}: {p:.3}")).collect();
    (min >= LAW_P_MIN, format!("{LAW_TRACES} traces each, p-values [{}] ≥ {LAW_P_MIN}", list.join(", ")))
}

fn c6_hard_bounds() -> Verdict {
    let mut checked = 0usize;
    let mut violations = Vec::new();
    for d in [3, 4, 5] {
        for big_r in 1..=5 {
            let ball = TreeBall::new(d, big_r).unwrap();
            for y in 0..ball.n_vertices() {
                let bound = ((d - 1) as f64).powi(-((big_r - ball.level_of(y)) as i32));
                for p in hitting_distribution_sphere(&ball, y, big_r).unwrap() {
                    checked += 1;
                    if p > bound * (1.0 + BOUND_SLACK) {
                        violations.push(format!("hitting d={d} R={big_r} y={y}: {p} > {bound}"));
                    }
                }
            }
            for row in tree_boundary_variance(d, big_r).unwrap() {
                checked += 1;
                if !row.holds() {
                    violations.push(format!("tree variance d={d} R={big_r}: {row:?}"));
                }
            }
        }
    }
    let (alpha, beta) = (0.2, 0.05);
    for (d, n) in [(3, 1024), (4, 1024)] {
        let (g, audit) = find_audited_graph(d, n, alpha, beta, 6, 20, 4096).unwrap();
        let green = build_green(&g).unwrap();
        let c0 = audit.constants.c0;
        for big_r in 1..=3 {
            for x in (0..n).step_by(16).filter(|&x| g.ball_tree_excess(x, 2 * big_r) == 0) {
                for row in graph_boundary_variance(&green, x, big_r, c0).unwrap().rows {
                    checked += 1;
                    if !row.holds() {
                        violations.push(format!("graph variance d={d} x={x} R={big_r}: {row:?}"));
                    }
                }
            }
        }
        let radius = short_range_radius(d, n, alpha, beta);
        for x in 0..n {
            let dist = g.distances_from(x, usize::MAX);
            for (y, &dy) in dist.iter().enumerate() {
                let dd = dy as usize;
                let v = green.entry(x, y);
                checked += 1;
                if v > green_upper_bound(d, n, alpha, beta, dd) * (1.0 + BOUND_SLACK) {
                    violations.push(format!("long-range Green d={d} ({x},{y}): {v}"));
                }
                if dd as f64 <= radius {
                    checked += 1;
                    if v > green_short_range_bound(d, dd) * (1.0 + BOUND_SLACK) {
                        violations.push(format!("short-range Green d={d} ({x},{y}): {v}"));
                    }
                }
            }
        }
        for big_r in 4..=6 {
            for x in (0..n).filter(|&x| g.ball_tree_excess(x, big_r) == 1).take(25) {
                let ell = ball_cycle_length(&g, x, big_r).unwrap();
                for y in g.ball(x, big_r) {
                    let dxy = g.distance(x, y).unwrap();
                    checked += 1;
                    if count_nonbacktracking_paths(&g, x, y, big_r, (0, dxy)).unwrap() != 0 {
                        violations.push(format!("short path d={d} x={x} y={y}"));
                    }
                    for k in 0..=big_r {
                        let c = count_nonbacktracking_paths(&g, x, y, big_r, (k, ell.min(big_r + 1 - k))).unwrap();
                        checked += 1;
                        if c > MAX_PATHS {
                            violations.push(format!("path count d={d} x={x} y={y} R={big_r} k={k}: {c}"));
                        }
                    }
                }
            }
        }
    }
    let first = violations.first().cloned().unwrap_or_default();
    (violations.is_empty(), format!("{checked} assertions, {} violations {first}", violations.len()))
}

/// Probability that a walk on ℤ from 1, stepping up with probability (d−1)/d,
/// hits 0 before s + 1.
fn ruin_on_integers(d: usize, s: usize) -> f64 {
    let rho = 1.0 / (d - 1) as f64;
    let top = s as i32 + 1;
    (rho - rho.powi(top)) / (1.0 - rho.powi(top))
}

fn c7_gamblers_ruin() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (d, n) in [(3, 4000), (4, 20000)] {
        let g = generate_random_regular(d, n, 9).unwrap();
        let x0 = (0..n).find(|&x| g.ball_tree_excess(x, 5) == 0).unwrap();
        let x = g.neighbors(x0)[0] as usize;
        for s in [1, 2, 3] {
            let f = good_vertex_test(&g, &[x0], x, s).unwrap().f_set;
            let mut targets = vec![x0];
            for &u in &f {
                for &v in g.neighbors(u) {
                    let v = v as usize;
                    if v != x0 && !f.contains(&v) && !targets.contains(&v) {
                        targets.push(v);
                    }
                }
            }
            let hs = HarmonicSolver::new(&g, &targets).unwrap();
            let p = hs.hit_distribution(x)[0];
            let want = ruin_on_integers(d, s);
            worst = worst.max((p - want).abs()).max((ruin_probability(&g, &[x0], x, s).unwrap() - want).abs());
            cases += 1;
        }
    }
    (worst <= RUIN_TOL, format!("{cases} gadgets, max gap {worst:.2e} ≤ {RUIN_TOL:e}"))
}

fn c8_phase_transition() -> (Verdict, f64) {
    let rep = estimate_h_star(3, &H_STAR_GRID, TREE_DEPTH, TREE_REPLICAS, 1, 8).unwrap();
    let h_star = rep.report.estimate;
    let (lo, hi) = rep.report.ci.unwrap();
    let width = hi - lo;
    let below = rep.curve.iter().filter(|c| c.h < h_star).all(|c| c.lambda > 1.0);
    let above = rep.curve.iter().filter(|c| c.h > h_star).all(|c| c.lambda <= 1.0);
    let etas: Vec<f64> = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]
        .iter()
        .map(|&h| estimate_eta_plus(3, h, TREE_DEPTH, TREE_REPLICAS, 1).unwrap().estimate)
        .collect();
    let eta_ok = etas.windows(2).all(|w| w[1] <= w[0]);
    let low = estimate_lambda(3, LOW_LEVEL, 14, 500, 1).unwrap().estimate;
    let low_ok = (low - LOW_LEVEL_LAMBDA).abs() <= LOW_LEVEL_TOL;
    let pass = h_star > 0.0 && h_star.is_finite() && width <= CI_WIDTH_MAX && below && above && eta_ok && low_ok;
    (
        (
            pass,
            format!(
                "ĥ⋆ = {h_star:.4}, CI [{lo:.4}, {hi:.4}] width {width:.4} ≤ {CI_WIDTH_MAX}; λ̂ crosses 1 there: {}; η̂⁺ non-increasing: {eta_ok}; λ̂({LOW_LEVEL}) = {low:.4} within {LOW_LEVEL_LAMBDA} ± {LOW_LEVEL_TOL}",
                below && above
            ),
        ),
        h_star,
    )
}

fn c9_ladders(h_star: f64) -> Verdict {
    let cfg = LadderConfig::default();
    let sub = run_subcritical_experiment(&cfg, h_star + LEVEL_OFFSET, K_CAP).unwrap();
    let bounded = sub.rungs.iter().all(|r| r.ratio <= K_CAP) && sub.exceedance_non_increasing;
    let contrast = run_subcritical_experiment(&cfg, h_star - LEVEL_OFFSET, K_CAP).unwrap();
    let top = contrast.rungs.last().unwrap();
    let grows = top.mean_max > K_CAP * top.ln_n && contrast.rungs.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let h = h_star - LEVEL_OFFSET;
    let lam = estimate_lambda(cfg.d, h + GAMMA_DELTA, TREE_DEPTH, TREE_REPLICAS, cfg.seed).unwrap().estimate;
    let eta = estimate_eta_plus(cfg.d, h, TREE_DEPTH, TREE_REPLICAS, cfg.seed).unwrap().estimate;
    let sup = run_supercritical_experiment(&cfg, h, lam, eta).unwrap();
    let var_dec = sup.rungs.windows(2).all(|w| w[1].variance_over_n2 < w[0].variance_over_n2);
    let top_sup = sup.rungs.last().unwrap();
    let above_half = top_sup.mean_fraction >= eta / 2.0;
    let ratios: Vec<String> = sub.rungs.iter().map(|r| format!("{:.2}", r.ratio)).collect();
    let cratios: Vec<String> = contrast.rungs.iter().map(|r| format!("{:.1}", r.ratio)).collect();
    (
        bounded && grows && var_dec && above_half,
        format!(
            "N = 2^10..2^13; max/ln N at ĥ⋆+{LEVEL_OFFSET} [{}] ≤ {K_CAP}; at ĥ⋆−{LEVEL_OFFSET} [{}] increasing past K; Var/N² decreasing: {var_dec}; top mean fraction {:.4} ≥ η̂⁺/2 = {:.4}",
            ratios.join(", "),
            cratios.join(", "),
            top_sup.mean_fraction,
            eta / 2.0
        ),
    )
}

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gffperc-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Runs the binary with `--out` and returns (exit code, output bytes, manifest bytes).
fn run_cli(threads: usize, out: &Path, args: &[&str]) -> (i32, Vec<u8>, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_gffperc"))
        .arg("--threads")
        .arg(threads.to_string())
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
        .status;
    let manifest = std::fs::read(format!("{}.manifest.json", out.display())).unwrap_or_default();
    (status.code().unwrap_or(-1), std::fs::read(out).unwrap_or_default(), manifest)
}

fn c10_determinism() -> Verdict {
    let runs: &[&[&str]] = &[
        &["graph", "audit", "--n", "512", "--graph-seed", "3"],
        &["tree", "cluster", "--d", "3", "--h", "0.5", "--depth", "12", "--replicas", "300", "--seed", "2"],
        &["zagff", "sample", "--n", "200", "--replicas", "20", "--seed", "4"],
        &["--csv", "perc", "census", "--n", "256", "--seed", "3", "--h", "0.2", "--gamma", "0.3"],
        &["explore", "run", "--n", "256", "--audited", "--h", "0.5", "--replicas", "50", "--seed", "8"],
        &["explore", "dominate", "--n", "256", "--audited", "--h", "1.5", "--replicas", "50", "--seed", "8"],
        &["couple", "ruin", "--n", "2000", "--set", "0", "--s", "2"],
        &["--csv", "estimate", "h-star", "--depth", "15", "--replicas", "500", "--seed", "3"],
        &["estimate", "lambda", "--depth", "12", "--replicas", "300", "--h", "0,0.5,1"],
        &[
            "experiment", "supercritical", "--sizes", "256,512", "--replicas", "10", "--tree-depth", "15",
            "--tree-replicas", "500",
        ],
    ];
    let dir = scratch_dir();
    let mut failures = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let outs: Vec<_> = [1, 2, 4].iter().map(|&t| run_cli(t, &dir.join(format!("run{i}-t{t}")), args)).collect();
        let replay_out = dir.join(format!("run{i}-replay"));
        let manifest = format!("{}.manifest.json", dir.join(format!("run{i}-t1")).display());
        let replay = run_cli(3, &replay_out, &["replay", "--manifest", &manifest]);
        let ok = outs.iter().all(|o| o.0 != 1 && !o.1.is_empty() && o == &outs[0])
            && replay.0 == outs[0].0
            && replay.1 == outs[0].1
            && replay.2 == outs[0].2;
        if !ok {
            failures.push(args.join(" "));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    (
        failures.is_empty(),
        format!("{} runs at 1, 2, 4 threads plus replay at 3: byte-identical; mismatches {:?}", runs.len(), failures),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "Green identities", &mut c1_green_identities);
    report(2, "conditional law vs Schur complement", &mut c2_conditional_law);
    report(3, "sampler fidelity", &mut c3_sampler_fidelity);
    report(4, "tree recursion vs Cholesky", &mut c4_tree_recursion);
    report(5, "exploration law equality", &mut c5_law_equality);
    report(6, "hard bounds", &mut c6_hard_bounds);
    report(7, "gambler's ruin", &mut c7_gamblers_ruin);
    let mut h_star = None;
    report(8, "phase transition on the tree", &mut || {
        let (v, h) = c8_phase_transition();
        h_star = Some(h);
        v
    });
    report(9, "ladder experiments", &mut || match h_star {
        Some(h) => c9_ladders(h),
        None => (false, "no ĥ⋆ available".into()),
    });
    report(10, "CLI determinism and replay", &mut c10_determinism);
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
