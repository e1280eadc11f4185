use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use gffperc_core::coupling::{
    deviation_tail, gamblers_ruin_closed_form, graph_boundary_variance, proximity_survey, ruin_probability,
    tree_boundary_variance, BoundaryVarianceRow, CouplingPlan,
};
use gffperc_core::estimators::{
    check_exp_moment_fixed_point, estimate_eta_plus, estimate_h_star, estimate_lambda, replica_key,
    sphere_growth_check,
};
use gffperc_core::experiment::{
    find_audited_graph, run_subcritical_experiment, run_supercritical_experiment, AuditedGraph, LadderConfig,
};
use gffperc_core::exploration::{explore_component, subtree_domination_experiment, ExploreConfig};
use gffperc_core::graph::{audit_assumptions_with, generate_random_regular, RegularGraph, ScaleConstants};
use gffperc_core::percolation::{level_components, mesoscopic_census};
use gffperc_core::tree::lazy_forward_cluster;
use gffperc_core::zagff::{conditional_law, sample_zagff_replica, GreenOperator, GreenOptions};

use crate::args::*;
use crate::manifest::{sha256_hex, GraphProvenance};
use crate::output::{num, Check, Outcome, Table};

/// Tolerance of exact identities that hold up to rounding.
const IDENTITY_TOL: f64 = 1e-10;
/// Levels searched for the ĥ⋆ bracket when it is estimated inside an experiment.
const H_STAR_GRID: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];
const H_STAR_BISECTION: usize = 8;

struct Loaded {
    g: RegularGraph,
    prov: GraphProvenance,
    audited: Option<AuditedGraph>,
}

fn load_graph(a: &GraphArgs) -> Result<Loaded> {
    if let Some(path) = &a.graph {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let g = RegularGraph::from_text(std::str::from_utf8(&bytes)?)?;
        let prov = GraphProvenance::File { path: path.clone(), sha256: sha256_hex(&bytes), n: g.n(), d: g.d() };
        return Ok(Loaded { g, prov, audited: None });
    }
    if let Some(named) = a.named {
        let (g, name) = match named {
            NamedGraph::K4 => (RegularGraph::complete(4)?, "k4"),
            NamedGraph::Petersen => (RegularGraph::petersen(), "petersen"),
        };
        let prov = GraphProvenance::Named { name: name.into(), n: g.n(), d: g.d() };
        return Ok(Loaded { g, prov, audited: None });
    }
    let n = a.n.ok_or_else(|| anyhow!("one of --graph, --named or --n is required"))?;
    if a.audited {
        let (g, au) = find_audited_graph(a.d, n, a.alpha, a.beta, a.graph_seed, 20, a.dense_threshold)?;
        let prov = GraphProvenance::Audited {
            d: a.d,
            n,
            requested_seed: a.graph_seed,
            graph_seed: au.graph_seed,
            attempts: au.attempts,
            sha256: sha256_hex(g.to_text().as_bytes()),
        };
        return Ok(Loaded { g, prov, audited: Some(au) });
    }
    let g = generate_random_regular(a.d, n, a.graph_seed)?;
    let prov = GraphProvenance::Generated { d: a.d, n, graph_seed: a.graph_seed, sha256: sha256_hex(g.to_text().as_bytes()) };
    Ok(Loaded { g, prov, audited: None })
}

fn green(a: &GraphArgs, g: &RegularGraph) -> Result<GreenOperator> {
    Ok(GreenOperator::build_with(g, GreenOptions { dense_threshold: a.dense_threshold, ..GreenOptions::default() })?)
}

/// Scale constants of the graph: from the audit if one was run, else computed now.
fn constants(a: &GraphArgs, l: &Loaded) -> Result<ScaleConstants> {
    if let Some(au) = &l.audited {
        return Ok(au.constants.clone());
    }
    let rep = audit_assumptions_with(&l.g, a.alpha, a.beta, a.dense_threshold)?;
    Ok(ScaleConstants::new(l.g.d(), l.g.n(), a.alpha, a.beta, rep.spectral_gap)?)
}

fn graph_seeds(a: &GraphArgs) -> Vec<u64> {
    if a.n.is_some() {
        vec![a.graph_seed]
    } else {
        Vec::new()
    }
}

fn read_field(f: &FieldArgs, gr: &GreenOperator) -> Result<Vec<f64>> {
    match &f.field {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let vals: Vec<f64> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.parse::<f64>().with_context(|| format!("bad field value {l:?}")))
                .collect::<Result<_>>()?;
            if vals.len() != gr.n() {
                bail!("field has {} values, graph has {} vertices", vals.len(), gr.n());
            }
            Ok(vals)
        }
        None => Ok(sample_zagff_replica(gr, f.seed, f.replica).values),
    }
}

fn variance_table(rows: &[BoundaryVarianceRow]) -> (Table, Check) {
    let mut t = Table::new(&["vertex", "dist", "exact", "bound", "holds"]);
    for r in rows {
        t.push(vec![num(r.vertex), num(r.dist), num(r.exact), num(r.bound), num(r.holds())]);
    }
    let bad = rows.iter().filter(|r| !r.holds()).count();
    (t, Check::new("variance_bound", bad == 0, format!("{bad} of {} rows violate the bound", rows.len())))
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Graph(c) => graph_cmd(c),
        Command::Tree(c) => tree_cmd(c),
        Command::Zagff(c) => zagff_cmd(c),
        Command::Perc(c) => perc_cmd(c),
        Command::Explore(c) => explore_cmd(c),
        Command::Couple(c) => couple_cmd(c),
        Command::Estimate(c) => estimate_cmd(c),
        Command::Experiment(c) => experiment_cmd(c),
    }
}

fn graph_cmd(c: &GraphCmd) -> Result<Outcome> {
    match c {
        GraphCmd::Generate { graph, save } => {
            let l = load_graph(graph)?;
            if let Some(p) = save {
                l.g.write_file(p)?;
            }
            let mut t = Table::new(&["n", "d", "sha256"]);
            let sha = sha256_hex(l.g.to_text().as_bytes());
            t.push(vec![num(l.g.n()), num(l.g.d()), sha.clone()]);
            Ok(Outcome {
                result: json!({ "n": l.g.n(), "d": l.g.d(), "sha256": sha, "audit": l.audited }),
                table: t,
                seeds: graph_seeds(graph),
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
        GraphCmd::Audit { graph } => {
            let l = load_graph(graph)?;
            let rep = audit_assumptions_with(&l.g, graph.alpha, graph.beta, graph.dense_threshold)?;
            let k = ScaleConstants::new(l.g.d(), l.g.n(), graph.alpha, graph.beta, rep.spectral_gap).ok();
            let mut t = Table::new(&[
                "alpha", "beta", "radius_checked", "max_tree_excess", "spectral_gap", "connected", "simple", "pass0",
                "pass1", "pass2",
            ]);
            t.push(vec![
                num(rep.alpha),
                num(rep.beta),
                num(rep.radius_checked),
                num(rep.max_tree_excess_in_ball),
                num(rep.spectral_gap),
                num(rep.connected),
                num(rep.simple),
                num(rep.passes[0]),
                num(rep.passes[1]),
                num(rep.passes[2]),
            ]);
            let checks = vec![Check::new("assumptions", rep.all_pass(), format!("passes = {:?}", rep.passes))];
            Ok(Outcome {
                result: json!({ "report": rep, "constants": k }),
                table: t,
                checks,
                seeds: graph_seeds(graph),
                graphs: vec![l.prov],
                constants: json!(k),
            })
        }
    }
}

fn tree_cmd(c: &TreeCmd) -> Result<Outcome> {
    match *c {
        TreeCmd::Cluster { d, h, depth, replicas, seed } => {
            if d < 3 {
                bail!("degree must be at least 3");
            }
            let clusters: Vec<_> = (0..replicas)
                .into_par_iter()
                .map(|r| lazy_forward_cluster(d, replica_key(seed, r), None, h, depth, None))
                .collect();
            let mut t = Table::new(&["replica", "size", "censored"]);
            for (r, cl) in clusters.iter().enumerate() {
                t.push(vec![num(r), num(cl.size), num(cl.censored)]);
            }
            let censored = clusters.iter().filter(|c| c.censored).count();
            let mean = clusters.iter().map(|c| c.size as f64).sum::<f64>() / replicas.max(1) as f64;
            Ok(Outcome {
                result: json!({
                    "mean_size": mean,
                    "censored_fraction": censored as f64 / replicas.max(1) as f64,
                    "sizes": clusters.iter().map(|c| c.size).collect::<Vec<_>>(),
                }),
                table: t,
                seeds: vec![seed],
                ..Outcome::default()
            })
        }
        TreeCmd::BoundaryVariance { d, big_r } => {
            let rows = tree_boundary_variance(d, big_r)?;
            let (t, check) = variance_table(&rows);
            Ok(Outcome { result: json!({ "rows": rows }), table: t, checks: vec![check], ..Outcome::default() })
        }
    }
}

fn zagff_cmd(c: &ZagffCmd) -> Result<Outcome> {
    match c {
        ZagffCmd::Green { graph, x } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            l.g.check_vertex(*x)?;
            let col = gr.column(*x);
            let mut t = Table::new(&["vertex", "green"]);
            for (v, g) in col.iter().enumerate() {
                t.push(vec![num(v), num(g)]);
            }
            Ok(Outcome {
                result: json!({ "x": x, "column": col, "spectral_gap": gr.spectral_gap() }),
                table: t,
                seeds: graph_seeds(graph),
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
        ZagffCmd::Sample { graph, replicas, seed } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let fields: Vec<Vec<f64>> =
                (0..*replicas as u64).into_par_iter().map(|r| sample_zagff_replica(&gr, *seed, r).values).collect();
            let mut t = Table::new(&["replica", "vertex", "value"]);
            for (r, f) in fields.iter().enumerate() {
                for (v, x) in f.iter().enumerate() {
                    t.push(vec![num(r), num(v), num(x)]);
                }
            }
            let mut seeds = graph_seeds(graph);
            seeds.push(*seed);
            Ok(Outcome {
                result: json!({ "fields": fields }),
                table: t,
                seeds,
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
        ZagffCmd::Conditional { graph, set, observed, x } => {
            if set.len() != observed.len() {
                bail!("--set has {} vertices but --observed has {} values", set.len(), observed.len());
            }
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let (mean, variance) = conditional_law(&gr, set, observed, *x)?;
            let mut t = Table::new(&["x", "mean", "variance"]);
            t.push(vec![num(x), num(mean), num(variance)]);
            Ok(Outcome {
                result: json!({ "x": x, "mean": mean, "variance": variance }),
                table: t,
                seeds: graph_seeds(graph),
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
    }
}

fn perc_cmd(c: &PercCmd) -> Result<Outcome> {
    match c {
        PercCmd::Components { graph, field, h } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let values = read_field(field, &gr)?;
            let comps = level_components(&l.g, &values, *h);
            let mut t = Table::new(&["label", "size"]);
            for &(lab, s) in &comps.sizes {
                t.push(vec![num(lab), num(s)]);
            }
            let mut seeds = graph_seeds(graph);
            if field.field.is_none() {
                seeds.push(field.seed);
            }
            Ok(Outcome {
                result: json!({
                    "h": h,
                    "components": comps.sizes.len(),
                    "level_set_size": comps.level_set_size(),
                    "max_size": comps.max_size,
                    "top_two": comps.top_two(),
                    "sizes": comps.sizes,
                }),
                table: t,
                seeds,
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
        PercCmd::Census { graph, field, h, gamma } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let values = read_field(field, &gr)?;
            let k = constants(graph, &l)?;
            let census = mesoscopic_census(&l.g, &values, *h, &k, *gamma)?;
            let mut t = Table::new(&["h", "gamma", "threshold", "component_count", "sphere_count", "tree_like_fraction"]);
            t.push(vec![
                num(census.h),
                num(census.gamma),
                num(census.threshold),
                num(census.component_count),
                num(census.sphere_count),
                num(census.tree_like_fraction),
            ]);
            let mut seeds = graph_seeds(graph);
            if field.field.is_none() {
                seeds.push(field.seed);
            }
            Ok(Outcome {
                result: json!(census),
                table: t,
                seeds,
                graphs: vec![l.prov],
                constants: json!({ "scale": k, "gamma": gamma }),
                ..Outcome::default()
            })
        }
    }
}

fn explore_config(e: &ExploreArgs) -> ExploreConfig {
    ExploreConfig { k_cap: e.k_cap, c_kappa: e.c_kappa, s: e.s, check_invariants: false }
}

fn explore_constants(e: &ExploreArgs, l: &Loaded) -> Value {
    let ln_n = (l.g.n() as f64).ln();
    json!({
        "s_used": e.s,
        "s_n_formula": l.audited.as_ref().map(|a| a.constants.s_n),
        "cap": e.k_cap * ln_n,
        "m_n": e.c_kappa * ln_n.sqrt(),
        "scale": l.audited.as_ref().map(|a| &a.constants),
    })
}

fn explore_cmd(c: &ExploreCmd) -> Result<Outcome> {
    match c {
        ExploreCmd::Run { graph, explore, x, h, replicas, seed, traces } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let cfg = explore_config(explore);
            let runs: Vec<_> = (0..*replicas as u64)
                .into_par_iter()
                .map(|r| explore_component(&gr, *x, *h, &cfg, *seed, r))
                .collect::<gffperc_core::Result<_>>()?;
            let mut t = Table::new(&["replica", "cluster_size", "k_end", "termination", "anomaly", "max_abs_value"]);
            for (r, tr) in runs.iter().enumerate() {
                t.push(vec![
                    num(r),
                    num(tr.cluster.len()),
                    num(tr.k_end),
                    serde_json::to_value(tr.termination)?.as_str().unwrap_or_default().to_string(),
                    num(tr.anomaly),
                    num(tr.max_abs_value),
                ]);
            }
            let summary: Vec<Value> = runs
                .iter()
                .map(|tr| json!({ "cluster_size": tr.cluster.len(), "k_end": tr.k_end, "termination": tr.termination, "anomaly": tr.anomaly }))
                .collect();
            let mut seeds = graph_seeds(graph);
            seeds.push(*seed);
            Ok(Outcome {
                result: if *traces { json!({ "runs": summary, "traces": runs }) } else { json!({ "runs": summary }) },
                table: t,
                seeds,
                constants: explore_constants(explore, &l),
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
        ExploreCmd::Dominate { graph, explore, x, h, epsilon, depth, replicas, seed, min_frequency } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let cfg = explore_config(explore);
            let rep = subtree_domination_experiment(&gr, *x, *h, *epsilon, *depth, *replicas, *seed, &cfg)?;
            let mut t = Table::new(&["comparisons", "dominated", "frequency", "wilson_low", "wilson_high", "anomalous"]);
            t.push(vec![
                num(rep.comparisons),
                num(rep.dominated),
                num(rep.frequency),
                num(rep.wilson_low),
                num(rep.wilson_high),
                num(rep.anomalous),
            ]);
            let checks = min_frequency
                .map(|m| vec![Check::new("domination_frequency", rep.frequency >= m, format!("{} vs {m}", rep.frequency))])
                .unwrap_or_default();
            let mut seeds = graph_seeds(graph);
            seeds.push(*seed);
            Ok(Outcome {
                result: json!(rep),
                table: t,
                checks,
                seeds,
                constants: explore_constants(explore, &l),
                graphs: vec![l.prov],
            })
        }
    }
}

fn tree_like_center(g: &RegularGraph, radius: usize) -> Result<usize> {
    (0..g.n())
        .find(|&v| g.ball_tree_excess(v, radius) == 0)
        .ok_or_else(|| anyhow!("no vertex has a tree-like ball of radius {radius}"))
}

fn couple_cmd(c: &CoupleCmd) -> Result<Outcome> {
    match c {
        CoupleCmd::Tail { graph, x, x_prime, r, big_r, eps, replicas, seed } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let x = match x {
                Some(x) => *x,
                None => tree_like_center(&l.g, 2 * big_r)?,
            };
            let plan = CouplingPlan::new(&gr, x, *x_prime, *r, *big_r)?;
            let exit_gap = plan.exit_operator_gap();
            let cov_gap = plan.killed_covariance_gap();
            let tail = deviation_tail(&plan, eps, *replicas, *seed);
            let mut t = Table::new(&["epsilon", "exceedances", "frequency"]);
            for i in 0..tail.epsilons.len() {
                t.push(vec![num(tail.epsilons[i]), num(tail.exceedances[i]), num(tail.frequencies[i])]);
            }
            let checks = vec![
                Check::new("identity_residual", tail.max_identity_residual <= IDENTITY_TOL, format!("{:e}", tail.max_identity_residual)),
                Check::new("exit_operator_gap", exit_gap <= IDENTITY_TOL, format!("{exit_gap:e}")),
                Check::new("killed_covariance_gap", cov_gap <= IDENTITY_TOL, format!("{cov_gap:e}")),
            ];
            let mut seeds = graph_seeds(graph);
            seeds.push(*seed);
            Ok(Outcome {
                result: json!({ "x": x, "exit_operator_gap": exit_gap, "killed_covariance_gap": cov_gap, "tail": tail }),
                table: t,
                checks,
                seeds,
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
        CoupleCmd::BoundaryVariance { graph, x, big_r } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let x = match x {
                Some(x) => *x,
                None => tree_like_center(&l.g, 2 * big_r)?,
            };
            let c0 = graph.alpha * graph.beta / (l.g.d() - 1) as f64;
            let rep = graph_boundary_variance(&gr, x, *big_r, c0)?;
            let (t, check) = variance_table(&rep.rows);
            Ok(Outcome {
                result: json!(rep),
                table: t,
                checks: vec![check],
                seeds: graph_seeds(graph),
                graphs: vec![l.prov],
                constants: json!({ "c0": c0 }),
            })
        }
        CoupleCmd::Ruin { graph, set, x, s } => {
            let l = load_graph(graph)?;
            let set = if set.is_empty() { vec![tree_like_center(&l.g, s + 2)?] } else { set.clone() };
            let x = match x {
                Some(x) => *x,
                None => set
                    .iter()
                    .flat_map(|&a| l.g.neighbors(a).iter().map(|&u| u as usize))
                    .find(|u| !set.contains(u))
                    .ok_or_else(|| anyhow!("A has no outer boundary"))?,
            };
            let p = ruin_probability(&l.g, &set, x, *s)?;
            let q = gamblers_ruin_closed_form(l.g.d(), *s);
            let applicable = set.len() == 1 && l.g.ball_tree_excess(set[0], s + 2) == 0;
            let mut t = Table::new(&["x", "s", "killed_walk", "closed_form", "abs_diff", "applicable"]);
            t.push(vec![num(x), num(s), num(p), num(q), num((p - q).abs()), num(applicable)]);
            let checks = if applicable {
                vec![Check::new("closed_form", (p - q).abs() <= IDENTITY_TOL, format!("|{p} − {q}|"))]
            } else {
                Vec::new()
            };
            Ok(Outcome {
                result: json!({ "set": set, "x": x, "s": s, "killed_walk": p, "closed_form": q, "applicable": applicable }),
                table: t,
                checks,
                seeds: graph_seeds(graph),
                graphs: vec![l.prov],
                ..Outcome::default()
            })
        }
        CoupleCmd::Proximity { graph, s, samples, b_prime, seed } => {
            let l = load_graph(graph)?;
            let gr = green(graph, &l.g)?;
            let rep = proximity_survey(&gr, *s, *samples, *b_prime, *seed)?;
            let mut t = Table::new(&["x", "parent", "mean", "variance", "tree_mean", "tree_variance", "mean_gap", "var_gap"]);
            for r in &rep.reports {
                t.push(vec![
                    num(r.x),
                    num(r.parent),
                    num(r.mean),
                    num(r.variance),
                    num(r.tree_mean),
                    num(r.tree_variance),
                    num(r.mean_gap),
                    num(r.var_gap),
                ]);
            }
            let mut seeds = graph_seeds(graph);
            seeds.push(*seed);
            Ok(Outcome { result: json!(rep), table: t, seeds, graphs: vec![l.prov], ..Outcome::default() })
        }
    }
}

fn sorted(h: &[f64]) -> Vec<f64> {
    let mut v = h.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn estimate_cmd(c: &EstimateCmd) -> Result<Outcome> {
    match c {
        EstimateCmd::Eta { mc, h } => {
            let hs = sorted(h);
            let reps = hs
                .iter()
                .map(|&h| estimate_eta_plus(mc.d, h, mc.depth, mc.replicas, mc.seed))
                .collect::<gffperc_core::Result<Vec<_>>>()?;
            let mut t = Table::new(&["h", "eta_plus", "se"]);
            for (h, r) in hs.iter().zip(&reps) {
                t.push(vec![num(h), num(r.estimate), num(r.se)]);
            }
            let mono = reps.windows(2).all(|w| w[1].estimate <= w[0].estimate);
            Ok(Outcome {
                result: json!({ "estimates": reps }),
                table: t,
                checks: vec![Check::new("eta_non_increasing", mono, "η̂⁺ along increasing h")],
                seeds: vec![mc.seed],
                ..Outcome::default()
            })
        }
        EstimateCmd::Lambda { mc, h } => {
            let hs = sorted(h);
            let reps = hs
                .iter()
                .map(|&h| estimate_lambda(mc.d, h, mc.depth, mc.replicas, mc.seed))
                .collect::<gffperc_core::Result<Vec<_>>>()?;
            let mut t = Table::new(&["h", "lambda", "se", "fit_residual", "flags"]);
            for (h, r) in hs.iter().zip(&reps) {
                t.push(vec![num(h), num(r.estimate), num(r.se), num(r.fit_residual.unwrap_or(f64::NAN)), r.flags.join(";")]);
            }
            Ok(Outcome { result: json!({ "estimates": reps }), table: t, seeds: vec![mc.seed], ..Outcome::default() })
        }
        EstimateCmd::HStar { mc, h_grid, bisection_steps } => {
            let rep = estimate_h_star(mc.d, h_grid, mc.depth, mc.replicas, mc.seed, *bisection_steps)?;
            let mut t = Table::new(&["h", "lambda", "se"]);
            for p in &rep.curve {
                t.push(vec![num(p.h), num(p.lambda), num(p.se)]);
            }
            let h = rep.report.estimate;
            let checks = vec![Check::new("h_star_positive_finite", h > 0.0 && h.is_finite(), format!("ĥ⋆ = {h}"))];
            Ok(Outcome {
                constants: json!({ "h_star": h, "ci": rep.report.ci }),
                result: json!(rep),
                table: t,
                checks,
                seeds: vec![mc.seed],
                ..Outcome::default()
            })
        }
        EstimateCmd::ExpMoment { d, h, deltas, a_grid, depth, outer, inner, seed } => {
            let a = if a_grid.is_empty() { vec![*h, h + 1.0] } else { a_grid.clone() };
            let rep = check_exp_moment_fixed_point(*d, *h, deltas, &a, *depth, *outer, *inner, *seed)?;
            let mut t = Table::new(&[
                "delta", "a", "lhs", "lhs_se", "rhs", "rhs_se", "residual", "residual_se", "diverged", "precise",
            ]);
            for r in &rep.rows {
                t.push(vec![
                    num(r.delta),
                    num(r.a),
                    num(r.lhs),
                    num(r.lhs_se),
                    num(r.rhs),
                    num(r.rhs_se),
                    num(r.residual),
                    num(r.residual_se),
                    num(r.diverged),
                    num(r.precise),
                ]);
            }
            Ok(Outcome { result: json!(rep), table: t, seeds: vec![*seed], ..Outcome::default() })
        }
        EstimateCmd::SphereGrowth { mc, h } => {
            let lam = estimate_lambda(mc.d, *h, mc.depth, mc.replicas, mc.seed)?;
            let rep = sphere_growth_check(mc.d, *h, lam.estimate, mc.depth, mc.replicas, mc.seed)?;
            let mut t = Table::new(&["k", "threshold", "frequency", "se", "z_vs_eta"]);
            for r in &rep.rows {
                let se = (r.se * r.se + rep.eta_se * rep.eta_se).sqrt();
                t.push(vec![num(r.k), num(r.threshold), num(r.frequency), num(r.se), num((r.frequency - rep.eta_hat) / se)]);
            }
            Ok(Outcome {
                constants: json!({ "lambda_hat": lam.estimate }),
                result: json!(rep),
                table: t,
                seeds: vec![mc.seed],
                ..Outcome::default()
            })
        }
    }
}

fn ladder(l: &LadderArgs) -> LadderConfig {
    LadderConfig {
        d: l.d,
        sizes: l.sizes.clone(),
        replicas: l.replicas,
        alpha: l.alpha,
        beta: l.beta,
        seed: l.seed,
        dense_threshold: l.dense_threshold,
        graph_attempts: l.graph_attempts,
    }
}

/// ĥ⋆ from the tree with the ladder's seed, when the level is not given.
fn h_star_for(l: &LadderArgs, level: &LevelArgs) -> Result<Option<f64>> {
    if level.h.is_some() {
        return Ok(None);
    }
    let rep = estimate_h_star(l.d, &H_STAR_GRID, level.tree_depth, level.tree_replicas, l.seed, H_STAR_BISECTION)?;
    Ok(Some(rep.report.estimate))
}

fn provenance(rungs: &[(usize, &AuditedGraph)], d: usize) -> Vec<GraphProvenance> {
    rungs
        .iter()
        .enumerate()
        .map(|(rung, (n, a))| GraphProvenance::Rung {
            rung,
            d,
            n: *n,
            graph_seed: a.graph_seed,
            attempts: a.attempts,
            sha256: {
                let g = generate_random_regular(d, *n, a.graph_seed).expect("audited graph regenerates");
                sha256_hex(g.to_text().as_bytes())
            },
        })
        .collect()
}

fn experiment_cmd(c: &ExperimentCmd) -> Result<Outcome> {
    match c {
        ExperimentCmd::Subcritical { ladder: la, level, k_cap, contrast_offset } => {
            let cfg = ladder(la);
            let h_star = h_star_for(la, level)?;
            let h = match (level.h, h_star) {
                (Some(h), _) => h,
                (None, Some(hs)) => hs + level.offset.unwrap_or(0.5),
                _ => unreachable!(),
            };
            let rep = run_subcritical_experiment(&cfg, h, *k_cap)?;
            let mut t = Table::new(&["run", "h", "n", "ln_n", "mean_max", "se_max", "ratio", "exceed_frequency"]);
            for r in &rep.rungs {
                t.push(vec!["main".into(), num(h), num(r.n), num(r.ln_n), num(r.mean_max), num(r.se_max), num(r.ratio), num(r.exceed_frequency)]);
            }
            let bounded = rep.rungs.iter().all(|r| r.ratio <= *k_cap);
            let mut checks = vec![
                Check::new("ratio_bounded", bounded, format!("mean max/ln N ≤ K = {k_cap} at every rung")),
                Check::new("exceedance_non_increasing", rep.exceedance_non_increasing, "P[max ≥ K ln N] along N"),
            ];
            let mut contrast = None;
            if let Some(off) = contrast_offset {
                let hs = h_star.ok_or_else(|| anyhow!("--contrast-offset needs ĥ⋆, so --h must be absent"))?;
                let hc = hs + off;
                let cr = run_subcritical_experiment(&cfg, hc, *k_cap)?;
                for r in &cr.rungs {
                    t.push(vec!["contrast".into(), num(hc), num(r.n), num(r.ln_n), num(r.mean_max), num(r.se_max), num(r.ratio), num(r.exceed_frequency)]);
                }
                let top = cr.rungs.last().expect("non-empty ladder");
                checks.push(Check::new(
                    "contrast_exceeds_cap",
                    top.mean_max > k_cap * top.ln_n,
                    format!("top rung mean max {} vs K ln N = {}", top.mean_max, k_cap * top.ln_n),
                ));
                checks.push(Check::new(
                    "contrast_ratio_increasing",
                    cr.rungs.windows(2).all(|w| w[1].ratio > w[0].ratio),
                    "mean max/ln N strictly increasing along N",
                ));
                contrast = Some(cr);
            }
            let rungs: Vec<_> = rep.rungs.iter().map(|r| (r.n, &r.graph)).collect();
            Ok(Outcome {
                constants: json!({
                    "h_star": h_star,
                    "h": h,
                    "contrast_h": contrast.as_ref().map(|c| c.h),
                    "k_cap": k_cap,
                    "rungs": rep.rungs.iter().map(|r| &r.graph.constants).collect::<Vec<_>>(),
                }),
                graphs: provenance(&rungs, la.d),
                result: json!({ "main": rep, "contrast": contrast }),
                table: t,
                checks,
                seeds: vec![la.seed],
            })
        }
        ExperimentCmd::Supercritical { ladder: la, level, delta } => {
            let cfg = ladder(la);
            let h_star = h_star_for(la, level)?;
            let h = match (level.h, h_star) {
                (Some(h), _) => h,
                (None, Some(hs)) => hs + level.offset.unwrap_or(-0.5),
                _ => unreachable!(),
            };
            let lam = estimate_lambda(la.d, h + delta, level.tree_depth, level.tree_replicas, la.seed)?;
            let eta = estimate_eta_plus(la.d, h, level.tree_depth, level.tree_replicas, la.seed)?;
            let rep = run_supercritical_experiment(&cfg, h, lam.estimate, eta.estimate)?;
            let mut t = Table::new(&[
                "n", "gamma", "threshold", "mean_fraction", "se_fraction", "variance_over_n2", "mean_sphere_fraction",
                "half_eta_frequency", "tree_like_fraction",
            ]);
            for r in &rep.rungs {
                t.push(vec![
                    num(r.n),
                    num(r.gamma),
                    num(r.threshold),
                    num(r.mean_fraction),
                    num(r.se_fraction),
                    num(r.variance_over_n2),
                    num(r.mean_sphere_fraction),
                    num(r.half_eta_frequency),
                    num(r.tree_like_fraction),
                ]);
            }
            let checks = vec![
                Check::new("variance_strictly_decreasing", rep.variance_strictly_decreasing, "Var(fraction) along N"),
                Check::new(
                    "top_rung_above_half_eta",
                    rep.top_rung_above_half_eta,
                    format!("mean fraction at the top rung vs η̂⁺/2 = {}", eta.estimate / 2.0),
                ),
                Check::new("half_eta_frequency_non_decreasing", rep.half_eta_frequency_non_decreasing, "along N"),
            ];
            let rungs: Vec<_> = rep.rungs.iter().map(|r| (r.n, &r.graph)).collect();
            Ok(Outcome {
                constants: json!({
                    "h_star": h_star,
                    "h": h,
                    "delta": delta,
                    "lambda_h_plus_delta": lam.estimate,
                    "eta_plus": eta.estimate,
                    "eta_se": eta.se,
                    "gamma": rep.rungs.iter().map(|r| r.gamma).collect::<Vec<_>>(),
                    "rungs": rep.rungs.iter().map(|r| &r.graph.constants).collect::<Vec<_>>(),
                }),
                graphs: provenance(&rungs, la.d),
                result: json!(rep),
                table: t,
                checks,
                seeds: vec![la.seed],
            })
        }
    }
}
