//! Ladder experiments for the sub- and supercritical regimes on audited
//! random regular graphs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{audit_assumptions_with, generate_random_regular, AssumptionReport, RegularGraph, ScaleConstants};
use crate::percolation::{level_components, mesoscopic_census};
use crate::rng::derive_seed;
use crate::stats::{mean_se, ols, sample_variance, LinearFit};
use crate::zagff::{sample_zagff_replica, GreenOperator, GreenOptions};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LadderConfig {
    pub d: usize,
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub dense_threshold: usize,
    /// Graph seeds tried per rung before giving up on the audit.
    pub graph_attempts: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            d: 3,
            sizes: vec![1 << 10, 1 << 11, 1 << 12, 1 << 13],
            replicas: 100,
            alpha: 0.2,
            beta: 0.05,
            seed: 1,
            dense_threshold: 1024,
            graph_attempts: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AuditedGraph {
    pub graph_seed: u64,
    pub attempts: usize,
    pub report: AssumptionReport,
    pub constants: ScaleConstants,
}

/// First graph from the derived seed sequence that passes all three audits.
pub fn find_audited_graph(
    d: usize,
    n: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    attempts: usize,
    dense_threshold: usize,
) -> Result<(RegularGraph, AuditedGraph)> {
    for a in 0..attempts {
        let gs = derive_seed(seed, a as u64);
        let g = match generate_random_regular(d, n, gs) {
            Ok(g) => g,
            Err(Error::GenerationFailed(_)) => continue,
            Err(e) => return Err(e),
        };
        let report = audit_assumptions_with(&g, alpha, beta, dense_threshold)?;
        if report.all_pass() {
            let constants = ScaleConstants::new(d, n, alpha, beta, report.spectral_gap)?;
            return Ok((g, AuditedGraph { graph_seed: gs, attempts: a + 1, report, constants }));
        }
    }
    Err(Error::InvalidParameter(format!(
        "no graph with d = {d}, N = {n} passed the audit in {attempts} attempts"
    )))
}

fn validate(config: &LadderConfig) -> Result<()> {
    if config.sizes.is_empty() || config.replicas < 2 {
        return invalid("ladder needs at least one size and two replicas");
    }
    Ok(())
}

fn build(config: &LadderConfig, rung: usize, n: usize) -> Result<(GreenOperator, AuditedGraph)> {
    let (g, audited) = find_audited_graph(
        config.d,
        n,
        config.alpha,
        config.beta,
        derive_seed(config.seed, 0x6EA0 + rung as u64),
        config.graph_attempts,
        config.dense_threshold,
    )?;
    let opts = GreenOptions { dense_threshold: config.dense_threshold, ..GreenOptions::default() };
    Ok((GreenOperator::build_with(&g, opts)?, audited))
}

fn field_seed(config: &LadderConfig, rung: usize) -> u64 {
    derive_seed(config.seed, 0xF1E1D + rung as u64)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SubcriticalRung {
    pub n: usize,
    pub ln_n: f64,
    pub graph: AuditedGraph,
    pub max_sizes: Vec<usize>,
    pub mean_max: f64,
    pub se_max: f64,
    pub ratio: f64,
    /// Empirical P[|C_max| ≥ K ln N].
    pub exceed_frequency: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SubcriticalReport {
    pub h: f64,
    pub k_cap: f64,
    pub rungs: Vec<SubcriticalRung>,
    /// Mean max size against ln N.
    pub fit: Option<LinearFit>,
    /// Exceedance frequency non-increasing in N.
    pub exceedance_non_increasing: bool,
}

/// Largest level-set component at level h across the ladder.
pub fn run_subcritical_experiment(config: &LadderConfig, h: f64, k_cap: f64) -> Result<SubcriticalReport> {
    validate(config)?;
    let mut rungs = Vec::new();
    for (i, &n) in config.sizes.iter().enumerate() {
        let (green, graph) = build(config, i, n)?;
        let fs = field_seed(config, i);
        let max_sizes: Vec<usize> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let f = sample_zagff_replica(&green, fs, r as u64);
                level_components(green.graph(), &f.values, h).max_size
            })
            .collect();
        let ln_n = (n as f64).ln();
        let xs: Vec<f64> = max_sizes.iter().map(|&m| m as f64).collect();
        let (mean_max, se_max) = mean_se(&xs);
        let exceed = max_sizes.iter().filter(|&&m| m as f64 >= k_cap * ln_n).count();
        rungs.push(SubcriticalRung {
            n,
            ln_n,
            graph,
            max_sizes,
            mean_max,
            se_max,
            ratio: mean_max / ln_n,
            exceed_frequency: exceed as f64 / config.replicas as f64,
        });
    }
    let fit = ols(&rungs.iter().map(|r| r.ln_n).collect::<Vec<_>>(), &rungs.iter().map(|r| r.mean_max).collect::<Vec<_>>());
    let exceedance_non_increasing = rungs.windows(2).all(|w| w[1].exceed_frequency <= w[0].exceed_frequency);
    Ok(SubcriticalReport { h, k_cap, rungs, fit, exceedance_non_increasing })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SupercriticalRung {
    pub n: usize,
    pub graph: AuditedGraph,
    pub gamma: f64,
    pub threshold: f64,
    /// Per replica #{x : |C_x| ≥ N^γ}/N.
    pub fractions: Vec<f64>,
    /// Per replica #{x : |C_x ∩ S⁺(x,r_n)| ≥ N^γ}/N.
    pub sphere_fractions: Vec<f64>,
    pub mean_fraction: f64,
    pub se_fraction: f64,
    /// Var(count)/N².
    pub variance_over_n2: f64,
    pub mean_sphere_fraction: f64,
    pub sphere_variance_over_n2: f64,
    /// Fraction of replicas with fraction ≥ η̂⁺/2.
    pub half_eta_frequency: f64,
    pub tree_like_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SupercriticalReport {
    pub h: f64,
    pub lambda_h: f64,
    pub eta_plus: f64,
    pub rungs: Vec<SupercriticalRung>,
    pub variance_strictly_decreasing: bool,
    pub half_eta_frequency_non_decreasing: bool,
    /// Mean fraction at the top rung ≥ η̂⁺/2.
    pub top_rung_above_half_eta: bool,
}

/// Mesoscopic census across the ladder at level h, with γ = (c0/20)·log_{d−1}λ_h
/// computed from the supplied growth rate.
pub fn run_supercritical_experiment(
    config: &LadderConfig,
    h: f64,
    lambda_h: f64,
    eta_plus: f64,
) -> Result<SupercriticalReport> {
    validate(config)?;
    if lambda_h.is_nan() || lambda_h <= 1.0 {
        return invalid(format!("supercritical census needs λ_h > 1, got {lambda_h}"));
    }
    let mut rungs = Vec::new();
    for (i, &n) in config.sizes.iter().enumerate() {
        let (green, graph) = build(config, i, n)?;
        let gamma = graph.constants.gamma(lambda_h);
        let fs = field_seed(config, i);
        let nf = n as f64;
        let census: Vec<(f64, f64, f64)> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let f = sample_zagff_replica(&green, fs, r as u64);
                let c = mesoscopic_census(green.graph(), &f.values, h, &graph.constants, gamma)
                    .expect("gamma is positive");
                (c.component_count as f64 / nf, c.sphere_count as f64 / nf, c.tree_like_fraction)
            })
            .collect();
        let fractions: Vec<f64> = census.iter().map(|c| c.0).collect();
        let sphere_fractions: Vec<f64> = census.iter().map(|c| c.1).collect();
        let (mean_fraction, se_fraction) = mean_se(&fractions);
        let half = fractions.iter().filter(|&&f| f >= eta_plus / 2.0).count();
        rungs.push(SupercriticalRung {
            n,
            gamma,
            threshold: nf.powf(gamma),
            mean_fraction,
            se_fraction,
            variance_over_n2: sample_variance(&fractions),
            mean_sphere_fraction: mean_se(&sphere_fractions).0,
            sphere_variance_over_n2: sample_variance(&sphere_fractions),
            half_eta_frequency: half as f64 / config.replicas as f64,
            tree_like_fraction: census[0].2,
            fractions,
            sphere_fractions,
            graph,
        });
    }
    let variance_strictly_decreasing = rungs.windows(2).all(|w| w[1].variance_over_n2 < w[0].variance_over_n2);
    let half_eta_frequency_non_decreasing = rungs.windows(2).all(|w| w[1].half_eta_frequency >= w[0].half_eta_frequency);
    let top_rung_above_half_eta = rungs.last().is_some_and(|r| r.mean_fraction >= eta_plus / 2.0);
    Ok(SupercriticalReport {
        h,
        lambda_h,
        eta_plus,
        rungs,
        variance_strictly_decreasing,
        half_eta_frequency_non_decreasing,
        top_rung_above_half_eta,
    })
}
