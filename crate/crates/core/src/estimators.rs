//! Monte Carlo estimates of tree quantities: the forward percolation
//! probability η⁺(h), the growth rate λ_h, the critical level h⋆, the
//! exponential-moment fixed point and the sphere-growth event.
//!
//! Replica r of a run with seed s uses the keyed tree realisation with root
//! key `replica_key(s, r)`, so estimates at different levels and depths share
//! their randomness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, keyed_normal};
use crate::stats::{bootstrap_indices, mean_se, ols, quantile};
use crate::tree::{lazy_forward_cluster, lazy_reaches_depth, recursion_sds, tree_root_key};

/// Overflow guard for log-space accumulation of (1+δ)^|C|.
pub const LOG_GUARD: f64 = 700.0;

const BOOTSTRAP_TAG: u64 = 0xB007;

pub fn replica_key(seed: u64, r: usize) -> u64 {
    tree_root_key(derive_seed(seed, r as u64))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EstimateReport {
    pub quantity: String,
    pub estimate: f64,
    pub se: f64,
    pub replicas: usize,
    /// Replicas whose cluster reaches the truncation depth.
    pub censored: usize,
    pub seed: u64,
    pub d: usize,
    pub depth: usize,
    pub h_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// 95% interval where one is computed.
    pub ci: Option<(f64, f64)>,
    pub fit_residual: Option<f64>,
    pub flags: Vec<String>,
}

impl EstimateReport {
    fn new(quantity: &str, d: usize, depth: usize, replicas: usize, seed: u64) -> Self {
        EstimateReport {
            quantity: quantity.into(),
            estimate: f64::NAN,
            se: f64::NAN,
            replicas,
            censored: 0,
            seed,
            d,
            depth,
            h_grid: Vec::new(),
            delta_grid: Vec::new(),
            ci: None,
            fit_residual: None,
            flags: Vec::new(),
        }
    }
}

fn check_d(d: usize) -> Result<()> {
    if d < 3 {
        return invalid(format!("degree must be at least 3, got {d}"));
    }
    Ok(())
}

/// Fraction of replicas whose forward cluster at level h reaches `depth`.
pub fn estimate_eta_plus(d: usize, h: f64, depth: usize, replicas: usize, seed: u64) -> Result<EstimateReport> {
    check_d(d)?;
    if depth < 1 {
        return invalid("depth must be at least 1");
    }
    if replicas == 0 {
        return invalid("need at least one replica");
    }
    let hits: usize = (0..replicas)
        .into_par_iter()
        .map(|r| lazy_reaches_depth(d, replica_key(seed, r), None, h, depth) as usize)
        .sum();
    let p = hits as f64 / replicas as f64;
    let mut rep = EstimateReport::new("eta_plus", d, depth, replicas, seed);
    rep.estimate = p;
    rep.se = (p * (1.0 - p) / replicas as f64).sqrt();
    rep.censored = hits;
    rep.h_grid = vec![h];
    Ok(rep)
}

/// Per-replica counts |C ∩ S⁺(o,k)|, k = 0..=depth.
pub fn forward_level_counts(d: usize, h: f64, depth: usize, replicas: usize, seed: u64) -> Vec<Vec<u64>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| lazy_forward_cluster(d, replica_key(seed, r), None, h, depth, None).level_counts)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthFit {
    pub lambda: f64,
    pub rms_residual: f64,
    /// The window was cut short because deep levels held too few vertices,
    /// or a level inside it was empty and left out.
    pub floored: bool,
    pub all_empty: bool,
}

/// Deepest levels are fitted only while their summed count across replicas
/// reaches this, so rare survivors cannot dominate a subcritical fit.
pub const MIN_LEVEL_TOTAL: f64 = 50.0;

/// Growth-rate fit of the mean level counts over the window [top/2, top],
/// where top is the deepest level (at most `depth`) with at least
/// `MIN_LEVEL_TOTAL` vertices summed over the replicas; optionally on a
/// resample of the replicas.
pub fn growth_fit(counts: &[Vec<u64>], depth: usize, resample: Option<&[usize]>) -> GrowthFit {
    let n = resample.map_or(counts.len(), |r| r.len()) as f64;
    let mut sums = vec![0.0; depth + 1];
    let mut add = |c: &Vec<u64>| {
        for (s, &v) in sums.iter_mut().zip(c) {
            *s += v as f64;
        }
    };
    match resample {
        Some(idx) => idx.iter().for_each(|&i| add(&counts[i])),
        None => counts.iter().for_each(&mut add),
    }
    let all_empty = sums.iter().all(|&s| s == 0.0);
    let top = (0..=depth).rev().find(|&k| sums[k] >= MIN_LEVEL_TOTAL).unwrap_or(0);
    let lo = top.div_ceil(2);
    let kept: Vec<usize> = (lo..=top).filter(|&k| sums[k] > 0.0).collect();
    let xs: Vec<f64> = kept.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = kept.iter().map(|&k| (sums[k] / n).ln()).collect();
    let floored = top < depth || kept.len() < top + 1 - lo;
    match ols(&xs, &ys) {
        Some(f) => GrowthFit { lambda: f.slope.exp(), rms_residual: f.rms_residual, floored, all_empty: false },
        None => GrowthFit { lambda: 0.0, rms_residual: 0.0, floored, all_empty },
    }
}

/// Bootstrap standard error of the growth fit.
fn growth_se(counts: &[Vec<u64>], depth: usize, seed: u64, b: usize) -> f64 {
    let vals: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|k| {
            let idx = bootstrap_indices(derive_seed(seed, BOOTSTRAP_TAG), k as u64, counts.len());
            growth_fit(counts, depth, Some(&idx)).lambda
        })
        .collect();
    let (m, _) = mean_se(&vals);
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b.max(2) - 1) as f64).sqrt()
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

pub fn estimate_lambda(d: usize, h: f64, depth: usize, replicas: usize, seed: u64) -> Result<EstimateReport> {
    check_d(d)?;
    if depth < 5 {
        return invalid("depth must be at least 5");
    }
    if replicas == 0 {
        return invalid("need at least one replica");
    }
    let counts = forward_level_counts(d, h, depth, replicas, seed);
    let fit = growth_fit(&counts, depth, None);
    let mut rep = EstimateReport::new("lambda", d, depth, replicas, seed);
    rep.h_grid = vec![h];
    rep.censored = counts.iter().filter(|c| c[depth] > 0).count();
    rep.estimate = fit.lambda;
    rep.fit_residual = Some(fit.rms_residual);
    if fit.all_empty {
        rep.se = 0.0;
        rep.flags.push("all-empty".into());
        return Ok(rep);
    }
    if fit.lambda == 0.0 {
        rep.se = 0.0;
        rep.flags.push("too-few-populated-levels".into());
        return Ok(rep);
    }
    if fit.floored {
        rep.flags.push("fit-window-truncated".into());
    }
    rep.se = growth_se(&counts, depth, seed, BOOTSTRAP_RESAMPLES);
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub h: f64,
    pub lambda: f64,
    pub se: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HStarReport {
    pub report: EstimateReport,
    /// λ̂ at every evaluated level (grid and bisection points), sorted by h.
    pub curve: Vec<CurvePoint>,
    pub bootstrap_resamples: usize,
    /// Resamples without a crossing inside the evaluated range.
    pub bootstrap_failures: usize,
}

/// Crossing of ln λ = 0 by linear interpolation along a curve sorted by h.
fn crossing(hs: &[f64], lambdas: &[f64]) -> Option<f64> {
    let ln = |l: f64| if l > 0.0 { l.ln() } else { f64::NEG_INFINITY };
    for i in 0..hs.len().saturating_sub(1) {
        let (a, b) = (ln(lambdas[i]), ln(lambdas[i + 1]));
        if a > 0.0 && b <= 0.0 {
            if !b.is_finite() {
                return Some(hs[i + 1]);
            }
            return Some(hs[i] + (hs[i + 1] - hs[i]) * a / (a - b));
        }
    }
    None
}

/// Bisection for λ̂_h = 1 with common random numbers across h, and a
/// percentile bootstrap interval over replicas.
pub fn estimate_h_star(
    d: usize,
    h_grid: &[f64],
    depth: usize,
    replicas: usize,
    seed: u64,
    bisection_steps: usize,
) -> Result<HStarReport> {
    check_d(d)?;
    if depth < 5 {
        return invalid("depth must be at least 5");
    }
    if h_grid.len() < 2 {
        return invalid("h grid needs at least two levels");
    }
    let mut grid = h_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut evals: Vec<(f64, Vec<Vec<u64>>)> = Vec::new();
    let lam_at = |h: f64, evals: &mut Vec<(f64, Vec<Vec<u64>>)>| -> f64 {
        let c = forward_level_counts(d, h, depth, replicas, seed);
        let l = growth_fit(&c, depth, None).lambda;
        evals.push((h, c));
        l
    };
    let lams: Vec<f64> = grid.iter().map(|&h| lam_at(h, &mut evals)).collect();
    if !(lams[0] > 1.0 && *lams.last().unwrap() < 1.0) {
        return Err(Error::NoBracket(format!(
            "λ̂ = {:.4} at h = {} and {:.4} at h = {}; extend the h grid so that λ̂ > 1 at its minimum and < 1 at its maximum",
            lams[0],
            grid[0],
            lams.last().unwrap(),
            grid.last().unwrap()
        )));
    }
    let i = lams.iter().position(|&l| l <= 1.0).unwrap();
    let (mut lo, mut hi) = (grid[i - 1], grid[i]);
    for _ in 0..bisection_steps {
        let mid = 0.5 * (lo + hi);
        if lam_at(mid, &mut evals) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let hs: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let full: Vec<f64> = evals.iter().map(|e| growth_fit(&e.1, depth, None).lambda).collect();
    let estimate = crossing(&hs, &full).unwrap_or(0.5 * (lo + hi));

    let boot: Vec<Option<f64>> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let idx = bootstrap_indices(derive_seed(seed, BOOTSTRAP_TAG), b as u64, replicas);
            let l: Vec<f64> = evals.iter().map(|e| growth_fit(&e.1, depth, Some(&idx)).lambda).collect();
            crossing(&hs, &l)
        })
        .collect();
    let ok: Vec<f64> = boot.iter().flatten().cloned().collect();
    let failures = boot.len() - ok.len();
    let curve: Vec<CurvePoint> = evals
        .iter()
        .zip(&full)
        .map(|(e, &l)| CurvePoint { h: e.0, lambda: l, se: growth_se(&e.1, depth, seed, 50) })
        .collect();

    let mut rep = EstimateReport::new("h_star", d, depth, replicas, seed);
    rep.estimate = estimate;
    let (m, _) = mean_se(&ok);
    rep.se = (ok.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ok.len().max(2) - 1) as f64).sqrt();
    rep.ci = Some((quantile(&ok, 0.025), quantile(&ok, 0.975)));
    rep.h_grid = grid;
    if !(estimate > 0.0 && estimate.is_finite()) {
        rep.flags.push("h-star-not-positive-finite".into());
    }
    if failures > 0 {
        rep.flags.push(format!("{failures}-bootstrap-resamples-without-crossing"));
    }
    Ok(HStarReport { report: rep, curve, bootstrap_resamples: BOOTSTRAP_RESAMPLES, bootstrap_failures: failures })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExpMomentRow {
    pub delta: f64,
    pub a: f64,
    /// ĝ(a) = Ê_a[(1+δ)^{|C ∩ T⁺|}] to depth L.
    pub lhs: f64,
    pub lhs_se: f64,
    /// (1+δ)·(Ê^Y[ĝ(a/(d−1)+Y)])^{d−1} with ĝ to depth L−1.
    pub rhs: f64,
    pub rhs_se: f64,
    pub residual: f64,
    pub residual_se: f64,
    pub diverged: bool,
    /// Both sides estimated to relative SE ≤ `MAX_REL_SE`.
    pub precise: bool,
}

/// Relative precision below which an exponential-moment estimate counts as
/// bounded; heavier tails show up as a standard error comparable to the mean.
pub const MAX_REL_SE: f64 = 0.25;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExpMomentReport {
    pub d: usize,
    pub h: f64,
    pub depth: usize,
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
    pub rows: Vec<ExpMomentRow>,
    /// Largest δ with no divergence, relative SE at most `MAX_REL_SE` on both
    /// sides and every residual within 5 SE.
    pub largest_stable_delta: Option<f64>,
}

/// ln Ê[(1+δ)^S] by log-sum-exp; `None` once a term passes the guard.
fn log_mean_pow(sizes: &[u64], delta: f64) -> Option<(f64, f64)> {
    let l = (1.0 + delta).ln();
    let mut vals = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let e = s as f64 * l;
        if e > LOG_GUARD {
            return None;
        }
        vals.push(e.exp());
    }
    Some(mean_se(&vals))
}

/// Checks g_L(a) = (1+δ)·E^Y[g_{L−1}(a/(d−1)+Y)]^{d−1} for a ≥ h by nested
/// Monte Carlo, with g ≡ 1 below h.
#[allow(clippy::too_many_arguments)]
pub fn check_exp_moment_fixed_point(
    d: usize,
    h: f64,
    deltas: &[f64],
    a_grid: &[f64],
    depth: usize,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<ExpMomentReport> {
    check_d(d)?;
    if depth < 2 {
        return invalid("depth must be at least 2");
    }
    if outer < 2 || inner < 2 {
        return invalid("need at least two outer and two inner samples");
    }
    if let Some(&a) = a_grid.iter().find(|&&a| a < h) {
        return invalid(format!("a = {a} lies below h = {h}"));
    }
    if deltas.iter().any(|&dl| dl.is_nan() || dl < 0.0) {
        return invalid("δ must be non-negative");
    }
    let (_, sd1) = recursion_sds(d);
    let inv = 1.0 / (d - 1) as f64;
    let cap = Some(100_000_000u64);
    let mut rows = Vec::new();
    for (ai, &a) in a_grid.iter().enumerate() {
        let aseed = derive_seed(seed, ai as u64);
        let n_lhs = outer * inner;
        let lhs_sizes: Vec<u64> = (0..n_lhs)
            .into_par_iter()
            .map(|r| lazy_forward_cluster(d, replica_key(derive_seed(aseed, 1), r), Some(a), h, depth, cap).size)
            .collect();
        // outer unit k: child start b_k and the inner cluster sizes below it
        let outer_units: Vec<(f64, Vec<u64>)> = (0..outer)
            .into_par_iter()
            .map(|k| {
                let y = sd1 * keyed_normal(derive_seed(derive_seed(aseed, 2), k as u64));
                let b = a * inv + y;
                let sizes = if b < h {
                    Vec::new()
                } else {
                    let kseed = derive_seed(derive_seed(aseed, 3), k as u64);
                    (0..inner)
                        .map(|r| lazy_forward_cluster(d, replica_key(kseed, r), Some(b), h, depth - 1, cap).size)
                        .collect()
                };
                (b, sizes)
            })
            .collect();
        for &delta in deltas {
            let lhs = log_mean_pow(&lhs_sizes, delta);
            let unit_vals: Option<Vec<f64>> = outer_units
                .iter()
                .map(|(_, s)| if s.is_empty() { Some(1.0) } else { log_mean_pow(s, delta).map(|m| m.0) })
                .collect();
            let (Some((lhs, lhs_se)), Some(unit_vals)) = (lhs, unit_vals) else {
                rows.push(ExpMomentRow {
                    delta,
                    a,
                    lhs: f64::INFINITY,
                    lhs_se: f64::NAN,
                    rhs: f64::INFINITY,
                    rhs_se: f64::NAN,
                    residual: f64::NAN,
                    residual_se: f64::NAN,
                    diverged: true,
                    precise: false,
                });
                continue;
            };
            let rhs_of = |vals: &mut dyn Iterator<Item = f64>, n: usize| {
                let m = vals.sum::<f64>() / n as f64;
                (1.0 + delta) * m.powi(d as i32 - 1)
            };
            let rhs = rhs_of(&mut unit_vals.iter().cloned(), outer);
            let boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
                .map(|b| {
                    let idx = bootstrap_indices(derive_seed(aseed, BOOTSTRAP_TAG), b as u64, outer);
                    rhs_of(&mut idx.iter().map(|&i| unit_vals[i]), outer)
                })
                .collect();
            let (bm, _) = mean_se(&boot);
            let rhs_se = (boot.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (boot.len() - 1) as f64).sqrt();
            let residual_se = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
            rows.push(ExpMomentRow {
                delta,
                a,
                lhs,
                lhs_se,
                rhs,
                rhs_se,
                residual: (lhs - rhs).abs(),
                residual_se,
                diverged: false,
                precise: lhs_se <= MAX_REL_SE * lhs && rhs_se <= MAX_REL_SE * rhs,
            });
        }
    }
    let largest_stable_delta = deltas
        .iter()
        .cloned()
        .filter(|&dl| {
            rows.iter()
                .filter(|r| r.delta == dl)
                .all(|r| !r.diverged && r.precise && r.residual <= 5.0 * r.residual_se + 1e-12)
        })
        .fold(None, |m: Option<f64>, dl| Some(m.map_or(dl, |m| m.max(dl))));
    Ok(ExpMomentReport { d, h, depth, outer, inner, seed, rows, largest_stable_delta })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SphereGrowthRow {
    pub k: usize,
    /// λ̂^k / k².
    pub threshold: f64,
    pub frequency: f64,
    pub se: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SphereGrowthReport {
    pub h: f64,
    pub lambda_hat: f64,
    pub depth: usize,
    pub replicas: usize,
    /// Fraction of the same replicas reaching `depth`.
    pub eta_hat: f64,
    pub eta_se: f64,
    pub rows: Vec<SphereGrowthRow>,
}

/// Frequency of |C ∩ S⁺(o,k)| ≥ λ̂^k/k² for k in the fit window.
pub fn sphere_growth_check(
    d: usize,
    h: f64,
    lambda_hat: f64,
    depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<SphereGrowthReport> {
    check_d(d)?;
    if depth < 5 || replicas == 0 {
        return invalid("need depth ≥ 5 and at least one replica");
    }
    let counts = forward_level_counts(d, h, depth, replicas, seed);
    let n = replicas as f64;
    let eta = counts.iter().filter(|c| c[depth] > 0).count() as f64 / n;
    let (lo, hi) = (depth.div_ceil(2), depth);
    let rows = (lo..=hi)
        .map(|k| {
            let t = lambda_hat.powi(k as i32) / (k * k) as f64;
            let p = counts.iter().filter(|c| c[k] as f64 >= t).count() as f64 / n;
            SphereGrowthRow { k, threshold: t, frequency: p, se: (p * (1.0 - p) / n).sqrt() }
        })
        .collect();
    Ok(SphereGrowthReport {
        h,
        lambda_hat,
        depth,
        replicas,
        eta_hat: eta,
        eta_se: (eta * (1.0 - eta) / n).sqrt(),
        rows,
    })
}
