use gffperc_core::rng::{derive_seed, stream_rng};
use gffperc_core::tree::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

/// P_k[walk on the level process hits 0 before L], drift ratio ρ = 1/(d−1).
fn ruin(d: usize, k: usize, l: usize) -> f64 {
    let rho = 1.0 / (d - 1) as f64;
    (rho.powi(k as i32) - rho.powi(l as i32)) / (1.0 - rho.powi(l as i32))
}

#[test]
fn green_closed_form_values() {
    assert_eq!(tree_green(3, 0), 2.0);
    assert_eq!(tree_green(3, 1), 1.0);
    assert_eq!(tree_green(3, 4), 0.125);
    assert!((tree_green(4, 2) - 1.5 / 9.0).abs() < 1e-15);
    // harmonic off the diagonal, Δ G = −δ at the root
    for d in 3..7 {
        let g = |k| tree_green(d, k);
        for k in 1..6 {
            let mean = (g(k - 1) + (d - 1) as f64 * g(k + 1)) / d as f64;
            assert!((mean - g(k)).abs() < 1e-14);
        }
        assert!((g(0) - g(1) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn ball_structure() {
    for (d, r) in [(3, 0), (3, 5), (4, 3), (5, 2)] {
        let b = TreeBall::new(d, r).unwrap();
        assert_eq!(b.n_vertices(), ball_size(d, r));
        for k in 1..=r {
            assert_eq!(b.level(k).len(), d * (d - 1).pow(k as u32 - 1));
            assert_eq!(b.forward_sphere(k).len(), (d - 1).pow(k as u32));
        }
        for v in 0..b.n_vertices() {
            assert_eq!(b.vertex(&b.address(v)), Some(v));
            assert_eq!(b.dist(0, v), b.level_of(v));
            let deg = b.neighbors(v).len();
            assert_eq!(deg, if b.level_of(v) == r { 1.min(v) } else { d });
        }
    }
    assert!(TreeBall::new(2, 3).is_err());
    let b = TreeBall::new(3, 3).unwrap();
    assert_eq!(b.vertex(&[3]), None);
    assert_eq!(b.vertex(&[0, 2]), None);
    assert_eq!(b.dist(b.vertex(&[0, 1]).unwrap(), b.vertex(&[2, 0, 1]).unwrap()), 5);
    assert!(!b.is_forward(b.vertex(&[0, 1]).unwrap()));
    assert!(b.is_forward(b.vertex(&[1, 1]).unwrap()));
}

#[test]
fn realisation_is_independent_of_truncation_depth() {
    let small = TreeBall::new(3, 4).unwrap();
    let big = TreeBall::new(3, 7).unwrap();
    for seed in 0..5 {
        let a = sample_tree_gff(&small, None, seed);
        let b = sample_tree_gff(&big, None, seed);
        assert_eq!(a.values[..], b.values[..small.n_vertices()]);
    }
    let pinned = sample_tree_gff(&small, Some(1.25), 3);
    assert_eq!(pinned.values[0], 1.25);
}

/// Covariance of the recursive sampler against the exact tree Green
/// function, and against samples from a dense Cholesky factor of the same
/// matrix drawn with an unrelated generator.
#[test]
fn recursion_matches_dense_cholesky_samples() {
    let ball = TreeBall::new(3, 3).unwrap();
    let n = ball.n_vertices();
    let cov = DMatrix::from_fn(n, n, |i, j| tree_green(3, ball.dist(i, j)));
    let l = cov.clone().cholesky().unwrap().l();
    let reps = 40_000;
    let mut acc_rec = Moments::new(n);
    let mut acc_chol = Moments::new(n);
    let mut rng = stream_rng(0xC401, 0);
    for r in 0..reps {
        acc_rec.push(&sample_tree_gff(&ball, None, derive_seed(5, r)).values);
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        acc_chol.push((&l * z).as_slice());
    }
    for i in 0..n {
        assert!(acc_rec.mean_z(i).abs() < 5.0);
        for j in i..n {
            let (m1, s1) = acc_rec.cov(i, j);
            let (m2, s2) = acc_chol.cov(i, j);
            assert!((m1 - cov[(i, j)]).abs() < 5.0 * s1, "({i},{j}) {m1} vs {}", cov[(i, j)]);
            assert!((m1 - m2).abs() < 5.0 * (s1 * s1 + s2 * s2).sqrt());
        }
    }
}

/// Running first and second moments with per-entry standard errors of the
/// product estimator.
struct Moments {
    n: usize,
    k: f64,
    s: Vec<f64>,
    ss: Vec<f64>,
    s4: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments { n, k: 0.0, s: vec![0.0; n], ss: vec![0.0; n * n], s4: vec![0.0; n * n] }
    }
    fn push(&mut self, x: &[f64]) {
        self.k += 1.0;
        for i in 0..self.n {
            self.s[i] += x[i];
            for j in i..self.n {
                let p = x[i] * x[j];
                self.ss[i * self.n + j] += p;
                self.s4[i * self.n + j] += p * p;
            }
        }
    }
    fn mean_z(&self, i: usize) -> f64 {
        let m = self.s[i] / self.k;
        let v = self.ss[i * self.n + i] / self.k - m * m;
        m / (v / self.k).sqrt()
    }
    /// E[X_i X_j] (the field is centred) and its standard error.
    fn cov(&self, i: usize, j: usize) -> (f64, f64) {
        let m = self.ss[i * self.n + j] / self.k;
        let v = self.s4[i * self.n + j] / self.k - m * m;
        (m, (v / self.k).sqrt())
    }
}

#[test]
fn recursion_standard_deviations() {
    for d in 3..8 {
        let (s0, s1) = recursion_sds(d);
        let b = (d - 1) as f64;
        assert!((s0 * s0 - b / (b - 1.0)).abs() < 1e-14);
        // stationarity: every vertex has variance G(0)
        assert!((s0 * s0 / (b * b) + s1 * s1 - s0 * s0).abs() < 1e-14);
    }
}

#[test]
fn killed_green_of_interior_ball_at_root() {
    for (d, l) in [(3, 2), (3, 6), (4, 4), (5, 3)] {
        let ball = TreeBall::new(d, l).unwrap();
        let interior: Vec<usize> = (0..ball.ball_end(l - 1)).collect();
        let g = killed_tree_green(&ball, &interior, 0, 0).unwrap();
        let expected = 1.0 / (1.0 - ruin(d, 1, l));
        assert!((g - expected).abs() < 1e-10, "d={d} L={l}: {g} vs {expected}");
        assert!(g < tree_green(d, 0));
    }
}

#[test]
fn killed_green_is_symmetric_and_dominated() {
    let ball = TreeBall::new(3, 5).unwrap();
    let set: Vec<usize> = (0..ball.ball_end(4)).filter(|&v| v % 3 != 2).collect();
    let s = KilledTreeSolver::new(&ball, &set).unwrap();
    let m = s.green_matrix();
    assert!((&m - m.transpose()).amax() < 1e-12);
    for (i, &u) in s.set().iter().enumerate() {
        for (j, &v) in s.set().iter().enumerate() {
            assert!(m[(i, j)] >= -1e-14);
            assert!(m[(i, j)] <= tree_green(3, ball.dist(u, v)) + 1e-12);
            assert!((s.green(u, v) - m[(i, j)]).abs() < 1e-12);
        }
    }
    let boundary = ball.level(5).start;
    assert!(KilledTreeSolver::new(&ball, &[boundary]).is_err());
}

#[test]
fn exit_distribution_is_a_probability() {
    let ball = TreeBall::new(4, 4).unwrap();
    let set: Vec<usize> = (0..ball.ball_end(3)).filter(|&v| v != 2 && v != 9).collect();
    let s = KilledTreeSolver::new(&ball, &set).unwrap();
    let boundary = s.boundary();
    for &x in s.set() {
        let ex = s.exit_distribution(x);
        let total: f64 = ex.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(ex.iter().all(|&(v, p)| p >= 0.0 && boundary.binary_search(&v).is_ok()));
    }
    assert_eq!(s.exit_distribution(2), vec![(2, 1.0)]);
}

#[test]
fn sphere_hitting_distribution_closed_forms() {
    for (d, r) in [(3, 4), (4, 3)] {
        let ball = TreeBall::new(d, r + 1).unwrap();
        let sphere = ball.level(r);
        let from_root = hitting_distribution_sphere(&ball, 0, r).unwrap();
        for p in &from_root {
            assert!((p - 1.0 / sphere.len() as f64).abs() < 1e-12);
        }
        let y = 1;
        let p = ruin(d, 1, r);
        let sub = (d - 1).pow(r as u32 - 1) as f64;
        let inside = (1.0 - p) + p / d as f64;
        let outside = p / d as f64;
        let dist = hitting_distribution_sphere(&ball, y, r).unwrap();
        for (i, z) in sphere.clone().enumerate() {
            let mut top = z;
            while ball.parent(top) != Some(0) {
                top = ball.parent(top).unwrap();
            }
            let want = if top == y { inside } else { outside } / sub;
            assert!((dist[i] - want).abs() < 1e-12, "d={d} z={z}: {} vs {want}", dist[i]);
        }
        let z = sphere.start + 1;
        let point = hitting_distribution_sphere(&ball, z, r).unwrap();
        assert_eq!(point[1], 1.0);
    }
    let ball = TreeBall::new(3, 3).unwrap();
    assert!(hitting_distribution_sphere(&ball, 0, 4).is_err());
    assert!(hitting_distribution_sphere(&ball, ball.level(3).start, 2).is_err());
}

#[test]
fn forward_cluster_avoids_the_marked_neighbour() {
    let ball = TreeBall::new(3, 6).unwrap();
    for seed in 0..50 {
        let f = sample_tree_gff(&ball, Some(10.0), seed);
        let c = forward_cluster(&f, -1.0);
        assert!(c.vertices.iter().all(|&v| ball.is_forward(v)));
        assert!(c.vertices.iter().all(|&v| f.values[v] >= -1.0));
        assert_eq!(c.level_counts.iter().sum::<u64>() as usize, c.vertices.len());
    }
    let f = sample_tree_gff(&ball, Some(0.0), 1);
    let c = forward_cluster(&f, 0.5);
    assert!(c.vertices.is_empty() && !c.censored);
    let c = forward_cluster(&f, f64::NEG_INFINITY);
    assert_eq!(c.vertices.len(), (0..=6).map(|k| 2usize.pow(k)).sum::<usize>());
    assert_eq!(c.level_counts[6], 64);
    assert!(c.censored);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lazy_cluster_matches_materialised(seed in 0u64..1_000_000, h in -2.0f64..2.0, pin in proptest::option::of(-1.0f64..4.0)) {
        let depth = 7;
        let ball = TreeBall::new(3, depth).unwrap();
        let f = sample_tree_gff(&ball, pin, seed);
        let eager = forward_cluster(&f, h);
        let lazy = lazy_forward_cluster(3, tree_root_key(seed), pin, h, depth, None);
        prop_assert_eq!(&eager.level_counts, &lazy.level_counts);
        prop_assert_eq!(eager.censored, lazy.censored);
        prop_assert_eq!(lazy.size as usize, eager.vertices.len());
        prop_assert!(!lazy.capped);
        prop_assert_eq!(lazy_reaches_depth(3, tree_root_key(seed), pin, h, depth), eager.censored);
    }

    #[test]
    fn cluster_is_monotone_in_level(seed in 0u64..1_000_000, h in -1.0f64..1.5, dh in 0.0f64..1.0) {
        let key = tree_root_key(seed);
        let hi = lazy_forward_cluster(3, key, None, h + dh, 9, None);
        let lo = lazy_forward_cluster(3, key, None, h, 9, None);
        prop_assert!(hi.size <= lo.size);
        for k in 0..=9 {
            prop_assert!(hi.level_counts[k] <= lo.level_counts[k]);
        }
    }

    #[test]
    fn size_cap_stops_early(seed in 0u64..1_000_000, cap in 1u64..50) {
        let c = lazy_forward_cluster(3, tree_root_key(seed), Some(5.0), -3.0, 12, Some(cap));
        prop_assert!(c.capped);
        prop_assert_eq!(c.size, cap);
    }
}
