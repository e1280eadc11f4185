use gffperc_core::coupling::*;
use gffperc_core::experiment::find_audited_graph;
use gffperc_core::graph::{generate_random_regular, RegularGraph};
use gffperc_core::zagff::{build_green, GreenOperator};
use gffperc_core::Error;

fn tree_green(d: usize, k: usize) -> f64 {
    let b = (d - 1) as f64;
    b / (d - 2) as f64 * b.powi(-(k as i32))
}

/// Variance of the sphere average of the tree field: from a sphere vertex of
/// S(o,R) there are (d−2)(d−1)^{j−1} sphere vertices at distance 2j for
/// j < R and (d−1)^R at distance 2R.
fn root_sphere_variance(d: usize, big_r: usize) -> f64 {
    let b = (d - 1) as f64;
    let size = d as f64 * b.powi(big_r as i32 - 1);
    let mut row = tree_green(d, 0);
    for j in 1..big_r {
        row += (d - 2) as f64 * b.powi(j as i32 - 1) * tree_green(d, 2 * j);
    }
    row += b.powi(big_r as i32) * tree_green(d, 2 * big_r);
    row / size
}

#[test]
fn tree_boundary_variance_at_the_root() {
    let rows = tree_boundary_variance(3, 4).unwrap();
    let root = &rows[0];
    assert_eq!(root.dist, 0);
    assert!((root.exact - 0.125).abs() < 1e-12);
    assert!((root.bound - 0.28125).abs() < 1e-12);
    for d in [3, 4, 5] {
        for big_r in 1..=4 {
            let rows = tree_boundary_variance(d, big_r).unwrap();
            assert!((rows[0].exact - root_sphere_variance(d, big_r)).abs() < 1e-12);
            assert!(rows.iter().all(|r| r.holds()), "d={d} R={big_r}");
            // sphere vertices see their own value
            for r in rows.iter().filter(|r| r.dist == big_r) {
                assert!((r.exact - tree_green(d, 0)).abs() < 1e-12);
            }
        }
    }
    assert!(tree_boundary_variance(3, 0).is_err());
}

fn tree_like(g: &RegularGraph, r: usize) -> usize {
    (0..g.n()).find(|&x| g.ball_tree_excess(x, r) == 0).expect("no tree-like ball")
}

#[test]
fn graph_boundary_variance_at_the_center() {
    let g = generate_random_regular(3, 6000, 2).unwrap();
    let green = build_green(&g).unwrap();
    let x = tree_like(&g, 6);
    let rep = graph_boundary_variance(&green, x, 3, 0.005).unwrap();
    assert!(!rep.within_scale);
    assert!(rep.rows.iter().all(|r| r.holds()));
    // from the center the hitting law of the sphere is uniform
    let dist = g.distances_from(x, 3);
    let sphere: Vec<usize> = (0..g.n()).filter(|&v| dist[v] == 3).collect();
    let mut sum = 0.0;
    for &u in &sphere {
        for &v in &sphere {
            sum += green.entry(u, v);
        }
    }
    let direct = sum / (sphere.len() * sphere.len()) as f64;
    let row = rep.rows.iter().find(|r| r.vertex == x).unwrap();
    assert!((row.exact - direct).abs() < 1e-8, "{} vs {direct}", row.exact);
    let cyc = (0..g.n()).find(|&v| g.ball_tree_excess(v, 6) != 0).unwrap();
    assert!(matches!(graph_boundary_variance(&green, cyc, 3, 0.005), Err(Error::Geometry(_))));
}

#[test]
fn gamblers_ruin_matches_killed_walk() {
    assert!((gamblers_ruin_closed_form(3, 1) - 1.0 / 3.0).abs() < 1e-15);
    for (d, n) in [(3, 4000), (4, 20000)] {
        let g = generate_random_regular(d, n, 9).unwrap();
        let x0 = tree_like(&g, 5);
        let x = g.neighbors(x0)[0] as usize;
        for s in [1, 2, 3] {
            let p = ruin_probability(&g, &[x0], x, s).unwrap();
            let q = gamblers_ruin_closed_form(d, s);
            assert!((p - q).abs() < 1e-10, "d={d} s={s}: {p} vs {q}");
        }
    }
}

#[test]
fn gamblers_ruin_increases_to_its_limit() {
    for d in [3, 4, 5] {
        let lim = 1.0 / (d - 1) as f64;
        let mut prev = 0.0;
        for s in 1..30 {
            let p = gamblers_ruin_closed_form(d, s);
            assert!(p >= prev && p <= lim);
            prev = p;
        }
        assert!((prev - lim).abs() < 1e-8);
    }
}

fn big_tree_like_graph() -> (GreenOperator, usize) {
    for seed in 3..10 {
        let g = generate_random_regular(3, 1 << 16, seed).unwrap();
        if let Some(x) = (0..g.n()).find(|&x| g.ball_tree_excess(x, 8) == 0) {
            return (build_green(&g).unwrap(), x);
        }
    }
    panic!("no tree-like B(x,8) found");
}

#[test]
fn coupling_identities_and_deviation_tail() {
    let (green, x) = big_tree_like_graph();
    let eps = [0.1, 0.2, 0.5, 1.0];
    let mut prev: Option<Vec<f64>> = None;
    for big_r in 2..=4 {
        let plan = CouplingPlan::new(&green, x, None, 1, big_r).unwrap();
        assert!(plan.exit_operator_gap() < 1e-9, "{}", plan.exit_operator_gap());
        assert!(plan.killed_covariance_gap() < 1e-9, "{}", plan.killed_covariance_gap());
        let pair = plan.sample(1, 0);
        assert!(pair.identity_residual <= 1e-10);
        let dev = pair
            .vertices
            .iter()
            .zip(&pair.tree_addresses)
            .filter(|(_, a)| a.len() <= 1)
            .map(|(i, _)| {
                let k = pair.vertices.iter().position(|v| v == i).unwrap();
                (pair.psi[k] - pair.phi[k]).abs()
            })
            .fold(0.0, f64::max);
        assert!((dev - pair.sup_deviation).abs() < 1e-12);
        let tail = deviation_tail(&plan, &eps, 2000, 3);
        assert!(tail.max_identity_residual <= 1e-10);
        assert!(tail.frequencies.windows(2).all(|w| w[0] >= w[1]));
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(&tail.frequencies) {
                assert!(b <= a, "R = {big_r}: {:?} after {:?}", tail.frequencies, p);
            }
        }
        prev = Some(tail.frequencies);
    }
    let pair = couple_local(&green, x, None, 1, 2, 4).unwrap();
    assert_eq!(pair.vertices.len(), 10);
    assert_eq!(pair.vertices[0], x);
}

#[test]
fn coupling_rejects_bad_geometry() {
    let g = generate_random_regular(3, 6000, 2).unwrap();
    let green = build_green(&g).unwrap();
    let x = tree_like(&g, 4);
    assert!(matches!(CouplingPlan::new(&green, x, None, 0, 2), Err(Error::InvalidParameter(_))));
    assert!(matches!(CouplingPlan::new(&green, x, None, 2, 2), Err(Error::InvalidParameter(_))));
    let cyc = (0..g.n()).find(|&v| g.ball_tree_excess(v, 4) != 0).unwrap();
    assert!(matches!(CouplingPlan::new(&green, cyc, None, 1, 2), Err(Error::Geometry(_))));
    let near = g.neighbors(x)[0] as usize;
    if g.ball_tree_excess(near, 4) == 0 {
        assert!(matches!(CouplingPlan::new(&green, x, Some(near), 1, 2), Err(Error::Geometry(_))));
    }
}

#[test]
fn two_ball_coupling_on_distant_vertices() {
    let g = generate_random_regular(3, 6000, 2).unwrap();
    let green = build_green(&g).unwrap();
    let dist_ok = |a: usize, b: usize| g.distance(a, b).is_none_or(|d| d > 8);
    let tl: Vec<usize> = (0..g.n()).filter(|&v| g.ball_tree_excess(v, 4) == 0).collect();
    let x = tl[0];
    let xp = *tl.iter().find(|&&v| dist_ok(x, v)).unwrap();
    let plan = CouplingPlan::new(&green, x, Some(xp), 1, 2).unwrap();
    assert!(plan.z.is_some());
    assert!(plan.exit_operator_gap() < 1e-9);
    let pair = plan.sample(7, 0);
    assert_eq!(pair.vertices.len(), 20);
    assert!(pair.identity_residual <= 1e-10);
}

/// With A = {x̄}, the conditional law of Ψ(x) is a one-point Schur complement.
#[test]
fn proximity_check_single_point_set() {
    let (g, _) = find_audited_graph(3, 256, 0.2, 0.05, 7, 20, 4096).unwrap();
    let green = build_green(&g).unwrap();
    let x0 = 5;
    let x = g.neighbors(x0)[0] as usize;
    let a = 0.7;
    let rep = conditional_proximity_check(&green, &[x0], x, &[a], 1, 2.0, 3.0).unwrap();
    let (gxx, gxy, gyy) = (green.entry(x, x), green.entry(x, x0), green.entry(x0, x0));
    assert!((rep.mean - gxy / gyy * a).abs() < 1e-8);
    assert!((rep.variance - (gxx - gxy * gxy / gyy)).abs() < 1e-8);
    assert!((rep.tree_mean - a / 2.0).abs() < 1e-15);
    assert!((rep.tree_variance - 1.5).abs() < 1e-15);
    assert_eq!(rep.parent, x0);
    let big = 3.0 * 256f64.ln().sqrt() + 1.0;
    assert!(conditional_proximity_check(&green, &[x0], x, &[big], 1, 2.0, 3.0).is_err());
}

/// Pilot medians over 200 draws: mean gap 3.1e-2, 1.1e-2, 3.7e-3 and
/// variance gap 2.5e-2, 8.2e-3, 2.3e-3 at N = 256, 1024, 4096.
#[test]
fn proximity_gaps_shrink_with_n() {
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for n in [256, 1024] {
        let (g, _) = find_audited_graph(3, n, 0.2, 0.05, 7, 20, 4096).unwrap();
        let green = build_green(&g).unwrap();
        let s = proximity_survey(&green, 2, 50, 3.0, 5).unwrap();
        assert!(s.reports.len() >= 40, "{} skipped", s.skipped);
        assert!(s.median_mean_gap < prev.0 && s.median_var_gap < prev.1, "N = {n}: {s:?}");
        prev = (s.median_mean_gap, s.median_var_gap);
    }
}
