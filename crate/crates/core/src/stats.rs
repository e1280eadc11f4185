//! Small statistical helpers: summary moments, least squares, Wilson
//! intervals, chi-square homogeneity and bootstrap resampling indices.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::stream_rng;

/// (mean, standard error of the mean).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (v / n as f64).sqrt())
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Root mean squared residual.
    pub rms_residual: f64,
}

/// Ordinary least squares y = a + b·x.
pub fn ols(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if n > 2 { (rss / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    Some(LinearFit { slope, intercept, slope_se, rms_residual: (rss / n as f64).sqrt() })
}

/// Wilson score interval for k successes in n trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of categories after pooling.
    pub bins: usize,
}

/// Chi-square test that two samples of category counts come from the same
/// distribution. Categories with expected count below 5 in either sample are
/// pooled into their neighbour (in category order).
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquareResult {
    let k = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).cloned().unwrap_or(0) as f64;
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let tot = na + nb;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for i in 0..k {
        acc.0 += get(a, i);
        acc.1 += get(b, i);
        let col = acc.0 + acc.1;
        if col * na.min(nb) / tot >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        match bins.last_mut() {
            Some(l) => {
                l.0 += acc.0;
                l.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return ChiSquareResult { statistic: 0.0, dof: 0, p_value: 1.0, bins: bins.len() };
    }
    let mut stat = 0.0;
    for &(oa, ob) in &bins {
        let col = oa + ob;
        let ea = col * na / tot;
        let eb = col * nb / tot;
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let dof = bins.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat);
    ChiSquareResult { statistic: stat, dof, p_value, bins: bins.len() }
}

/// Bootstrap resample `b` of n units: indices drawn with replacement.
pub fn bootstrap_indices(seed: u64, b: u64, n: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, b);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Empirical quantile with linear interpolation, q ∈ [0,1].
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.iter().cloned().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}
