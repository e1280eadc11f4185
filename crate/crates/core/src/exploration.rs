//! The two-queue exploration of the level-set component of a vertex, with
//! field values generated from exact conditional Gaussian laws.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RegularGraph, UNREACHED};
use crate::rng::{child_key, derive_seed, keyed_normal, stream_rng};
use crate::stats::wilson_interval;
use crate::tree::{recursion_sds, tree_root_key};
use crate::zagff::{Conditioner, GreenOperator};
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    MultiNeighbor,
    TreeExcess,
    BoundaryPath,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GoodVertexVerdict {
    pub is_good: bool,
    pub unique_explored_neighbor: Option<usize>,
    /// F_A(x, s): component of x in B(A, s) ∖ A, sorted.
    pub f_set: Vec<usize>,
    pub failure: Option<FailureReason>,
}

/// Is x a good vertex at the boundary of A for radius s?
pub fn good_vertex_test(g: &RegularGraph, set: &[usize], x: usize, s: usize) -> Result<GoodVertexVerdict> {
    g.check_vertex(x)?;
    let mut in_a = vec![false; g.n()];
    for &a in set {
        g.check_vertex(a)?;
        in_a[a] = true;
    }
    if in_a[x] || !g.neighbors(x).iter().any(|&u| in_a[u as usize]) {
        return Err(Error::Geometry(format!("vertex {x} is not on the outer boundary of A")));
    }
    let mut explored_nb: Vec<usize> =
        g.neighbors(x).iter().map(|&u| u as usize).filter(|&u| in_a[u]).collect();
    explored_nb.dedup();
    let unique = (explored_nb.len() == 1).then(|| explored_nb[0]);

    let dist = g.distances_from_set(set, s);
    let mut seen = vec![false; g.n()];
    seen[x] = true;
    let mut f_set = vec![x];
    let mut i = 0;
    while i < f_set.len() {
        let v = f_set[i];
        i += 1;
        for &u in g.neighbors(v) {
            let u = u as usize;
            if !seen[u] && !in_a[u] && dist[u] != UNREACHED {
                seen[u] = true;
                f_set.push(u);
            }
        }
    }
    f_set.sort_unstable();
    let failure = if unique.is_none() {
        Some(FailureReason::MultiNeighbor)
    } else if g.tree_excess(&f_set) != 0 {
        Some(FailureReason::TreeExcess)
    } else if f_set.iter().any(|&v| v != x && g.neighbors(v).iter().any(|&u| in_a[u as usize])) {
        Some(FailureReason::BoundaryPath)
    } else {
        None
    };
    Ok(GoodVertexVerdict { is_good: failure.is_none(), unique_explored_neighbor: unique, f_set, failure })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExploreConfig {
    /// K: the run stops once |C| ≥ K·ln N.
    pub k_cap: f64,
    /// c_κ: anomaly threshold M_n = c_κ·√(ln N).
    pub c_kappa: f64,
    /// Radius s of the good-vertex test.
    pub s: usize,
    /// Assert the state invariants after every step.
    pub check_invariants: bool,
}

impl ExploreConfig {
    pub fn new(s: usize) -> Self {
        ExploreConfig { k_cap: 20.0, c_kappa: 3.0, s, check_invariants: false }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    TakeSecondary,
    TakePrimary,
    Defer,
    Generate,
    JoinCluster,
    Enqueue,
    StopCap,
    StopEmpty,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceEvent {
    pub step: usize,
    pub action: Action,
    pub vertex: usize,
    pub value: Option<f64>,
    pub pq: usize,
    pub sq: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    EmptyQueues,
    Cap,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExploredVertex {
    pub vertex: usize,
    pub value: f64,
    /// Standard normal used to generate the value.
    pub xi: f64,
    /// Index i of the bad vertex y_i current when this vertex was explored.
    pub subtree: usize,
    /// Unique explored neighbour for good vertices; `None` for bad ones.
    pub tree_parent: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExplorationTrace {
    pub start: usize,
    pub h: f64,
    pub cap: f64,
    pub m_n: f64,
    pub s: usize,
    pub events: Vec<TraceEvent>,
    /// E in exploration order.
    pub explored: Vec<ExploredVertex>,
    /// C in insertion order.
    pub cluster: Vec<usize>,
    /// y_1, …, y_{k_end}.
    pub bad_vertices: Vec<usize>,
    /// T^{y_i}, aligned with `bad_vertices`.
    pub subtrees: Vec<Vec<usize>>,
    pub k_end: usize,
    pub termination: Termination,
    pub max_abs_value: f64,
    /// sup |ψ| ≥ M_n over the explored set.
    pub anomaly: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Free,
    Primary,
    Secondary,
    Explored,
}

struct State<'a> {
    g: &'a RegularGraph,
    slot: Vec<Slot>,
    pq: VecDeque<usize>,
    sq: VecDeque<usize>,
    trace: ExplorationTrace,
    in_cluster: Vec<bool>,
}

impl State<'_> {
    fn log(&mut self, action: Action, vertex: usize, value: Option<f64>) {
        let step = self.trace.events.len();
        self.trace.events.push(TraceEvent { step, action, vertex, value, pq: self.pq.len(), sq: self.sq.len() });
    }

    fn explored_set(&self) -> Vec<usize> {
        self.trace.explored.iter().map(|e| e.vertex).collect()
    }

    fn push_neighbors(&mut self, y: usize) {
        for &u in self.g.neighbors(y) {
            let u = u as usize;
            if self.slot[u] == Slot::Free {
                self.slot[u] = Slot::Primary;
                self.pq.push_back(u);
                self.log(Action::Enqueue, u, None);
            }
        }
    }

    fn check(&self) {
        let t = &self.trace;
        let n = self.g.n();
        // E ⊆ B(C,1) ∪ {x}
        for e in &t.explored {
            let v = e.vertex;
            let ok = v == t.start
                || self.in_cluster[v]
                || self.g.neighbors(v).iter().any(|&u| self.in_cluster[u as usize]);
            assert!(ok, "explored vertex {v} is not within distance 1 of the cluster");
        }
        assert!((t.cluster.len() as f64) <= t.cap + 1.0, "cluster exceeds the cap");
        assert!((t.explored.len() as f64) <= self.g.d() as f64 * (t.cap + 1.0), "explored set too large");
        // C is the disjoint union of the subtrees
        let mut seen = vec![false; n];
        let mut total = 0;
        for s in &t.subtrees {
            for &v in s {
                assert!(!seen[v], "vertex {v} in two subtrees");
                assert!(self.in_cluster[v]);
                seen[v] = true;
                total += 1;
            }
        }
        assert_eq!(total, t.cluster.len(), "subtrees do not cover the cluster");
        // each vertex in at most one of PQ, SQ, E
        let mut count = vec![0u8; n];
        for &v in self.pq.iter().chain(self.sq.iter()) {
            count[v] += 1;
        }
        for e in &t.explored {
            count[e.vertex] += 1;
        }
        assert!(count.iter().all(|&c| c <= 1), "a vertex is in two of PQ, SQ, E");
    }
}

/// Runs the exploration from `x` at level `h`. The i.i.d. normals ξ come from
/// stream `replica` of `seed`, drawn in the order vertices are generated.
pub fn explore_component(
    green: &GreenOperator,
    x: usize,
    h: f64,
    config: &ExploreConfig,
    seed: u64,
    replica: u64,
) -> Result<ExplorationTrace> {
    let g = green.graph();
    g.check_vertex(x)?;
    let n = g.n();
    let ln_n = (n as f64).ln();
    let cap = config.k_cap * ln_n;
    let m_n = config.c_kappa * ln_n.sqrt();
    let mut rng = stream_rng(seed, replica);
    let mut cond = Conditioner::new(green);
    let mut st = State {
        g,
        slot: vec![Slot::Free; n],
        pq: VecDeque::new(),
        sq: VecDeque::from([x]),
        trace: ExplorationTrace {
            start: x,
            h,
            cap,
            m_n,
            s: config.s,
            events: Vec::new(),
            explored: Vec::new(),
            cluster: Vec::new(),
            bad_vertices: Vec::new(),
            subtrees: Vec::new(),
            k_end: 0,
            termination: Termination::EmptyQueues,
            max_abs_value: 0.0,
            anomaly: false,
        },
        in_cluster: vec![false; n],
    };
    st.slot[x] = Slot::Secondary;

    let mut generate = |st: &mut State, cond: &mut Conditioner, v: usize, parent: Option<usize>| -> f64 {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let value = cond.generate(v, xi);
        st.slot[v] = Slot::Explored;
        let subtree = st.trace.bad_vertices.len() - 1;
        st.trace.explored.push(ExploredVertex { vertex: v, value, xi, subtree, tree_parent: parent });
        st.trace.max_abs_value = st.trace.max_abs_value.max(value.abs());
        st.log(Action::Generate, v, Some(value));
        value
    };

    'outer: while let Some(y) = st.sq.pop_front() {
        st.log(Action::TakeSecondary, y, None);
        st.trace.bad_vertices.push(y);
        st.trace.subtrees.push(Vec::new());
        let i = st.trace.bad_vertices.len() - 1;
        let vy = generate(&mut st, &mut cond, y, None);
        if vy >= h {
            st.in_cluster[y] = true;
            st.trace.cluster.push(y);
            st.trace.subtrees[i].push(y);
            st.log(Action::JoinCluster, y, Some(vy));
            if st.trace.cluster.len() as f64 >= cap {
                st.trace.termination = Termination::Cap;
                st.log(Action::StopCap, y, None);
                break 'outer;
            }
            st.push_neighbors(y);
            while let Some(z) = st.pq.pop_front() {
                st.log(Action::TakePrimary, z, None);
                let explored = st.explored_set();
                let verdict = good_vertex_test(g, &explored, z, config.s)?;
                if !verdict.is_good {
                    st.slot[z] = Slot::Secondary;
                    st.sq.push_back(z);
                    st.log(Action::Defer, z, None);
                } else {
                    let vz = generate(&mut st, &mut cond, z, verdict.unique_explored_neighbor);
                    if vz >= h {
                        st.in_cluster[z] = true;
                        st.trace.cluster.push(z);
                        st.trace.subtrees[i].push(z);
                        st.log(Action::JoinCluster, z, Some(vz));
                        if st.trace.cluster.len() as f64 >= cap {
                            st.trace.termination = Termination::Cap;
                            st.log(Action::StopCap, z, None);
                            break 'outer;
                        }
                        st.push_neighbors(z);
                    }
                }
                if config.check_invariants {
                    st.check();
                }
            }
        }
        if config.check_invariants {
            st.check();
        }
    }
    if st.trace.termination == Termination::EmptyQueues {
        st.log(Action::StopEmpty, x, None);
    }
    if config.check_invariants {
        st.check();
    }
    st.trace.k_end = st.trace.bad_vertices.len();
    st.trace.anomaly = st.trace.max_abs_value >= m_n;
    Ok(st.trace)
}

/// Size of the tree cluster at level `level` of the field φ^i coupled to the
/// i-th subtree of a trace: on the image of the explored good vertices the
/// tree innovations are the ξ used by the exploration, elsewhere they are
/// fresh keyed normals. Returns (cluster size, max |ψ − φ∘τ| on the image).
pub fn coupled_tree_cluster(
    trace: &ExplorationTrace,
    i: usize,
    d: usize,
    level: f64,
    depth: usize,
    fresh_key: u64,
) -> (u64, f64) {
    let (_, sd1) = recursion_sds(d);
    let inv = 1.0 / (d - 1) as f64;
    let y = trace.bad_vertices[i];
    let root = trace.explored.iter().find(|e| e.vertex == y && e.subtree == i).expect("bad vertex explored");
    // trie of τ(B^i): node 0 is o; children[(node, slot)] = (node, ξ)
    let mut node_of: HashMap<usize, usize> = HashMap::from([(y, 0)]);
    let mut n_children: Vec<usize> = vec![0];
    let mut phi: Vec<f64> = vec![root.value];
    let mut children: HashMap<(usize, usize), (usize, f64)> = HashMap::new();
    let mut max_dev: f64 = 0.0;
    for e in trace.explored.iter().filter(|e| e.subtree == i && e.tree_parent.is_some()) {
        let p = node_of[&e.tree_parent.unwrap()];
        let slot = n_children[p];
        n_children[p] += 1;
        let node = phi.len();
        let val = phi[p] * inv + sd1 * e.xi;
        phi.push(val);
        n_children.push(0);
        node_of.insert(e.vertex, node);
        children.insert((p, slot), (node, e.xi));
        max_dev = max_dev.max((val - e.value).abs());
    }
    let mut size = 0u64;
    if root.value >= level {
        let mut stack: Vec<(f64, u64, usize, Option<usize>)> = vec![(root.value, fresh_key, 0, Some(0))];
        while let Some((val, key, lev, node)) = stack.pop() {
            size += 1;
            if lev == depth {
                continue;
            }
            let nc = if lev == 0 { d } else { d - 1 };
            for j in 0..nc {
                let k = child_key(key, j);
                let forced = node.and_then(|nd| children.get(&(nd, j)).cloned());
                let (cv, cn) = match forced {
                    Some((cn, xi)) => (val * inv + sd1 * xi, Some(cn)),
                    None => (val * inv + sd1 * keyed_normal(k), None),
                };
                if cv >= level {
                    stack.push((cv, k, lev + 1, cn));
                }
            }
        }
    }
    (size, max_dev)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DominationReport {
    pub h: f64,
    pub epsilon: f64,
    pub depth: usize,
    pub replicas: usize,
    /// Traces excluded because sup |ψ| ≥ M_n.
    pub anomalous: usize,
    /// Subtree comparisons (non-empty subtrees of retained traces).
    pub comparisons: usize,
    pub dominated: usize,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_k_end: f64,
    pub max_k_end: usize,
    pub max_coupling_deviation: f64,
}

/// Anomaly flag, subtrees compared, subtrees dominated, k_end, largest deviation.
type ReplicaDomination = (bool, usize, usize, usize, f64);

/// Frequency of |T^{y_i}| ≤ Z^i over subtrees of non-anomalous traces, with
/// Z^i the coupled tree cluster at level h − ε.
#[allow(clippy::too_many_arguments)]
pub fn subtree_domination_experiment(
    green: &GreenOperator,
    x: usize,
    h: f64,
    epsilon: f64,
    depth: usize,
    replicas: usize,
    seed: u64,
    config: &ExploreConfig,
) -> Result<DominationReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    use rayon::prelude::*;
    let d = green.graph().d();
    let per: Vec<Result<ReplicaDomination>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let trace = explore_component(green, x, h, config, seed, r as u64)?;
            if trace.anomaly {
                return Ok((true, 0, 0, trace.k_end, 0.0));
            }
            let mut cmp = 0;
            let mut dom = 0;
            let mut dev: f64 = 0.0;
            for (i, t) in trace.subtrees.iter().enumerate() {
                if t.is_empty() {
                    continue;
                }
                let key = tree_root_key(derive_seed(derive_seed(seed, r as u64), i as u64 + 1));
                let (z, dv) = coupled_tree_cluster(&trace, i, d, h - epsilon, depth, key);
                cmp += 1;
                if t.len() as u64 <= z {
                    dom += 1;
                }
                dev = dev.max(dv);
            }
            Ok((false, cmp, dom, trace.k_end, dev))
        })
        .collect();
    let mut anomalous = 0;
    let mut comparisons = 0;
    let mut dominated = 0;
    let mut k_sum = 0usize;
    let mut k_max = 0usize;
    let mut dev: f64 = 0.0;
    for p in per {
        let (a, c, dm, k, dv) = p?;
        anomalous += a as usize;
        comparisons += c;
        dominated += dm;
        k_sum += k;
        k_max = k_max.max(k);
        dev = dev.max(dv);
    }
    let (lo, hi) = wilson_interval(dominated, comparisons, 1.959_963_984_540_054);
    Ok(DominationReport {
        h,
        epsilon,
        depth,
        replicas,
        anomalous,
        comparisons,
        dominated,
        frequency: if comparisons > 0 { dominated as f64 / comparisons as f64 } else { 1.0 },
        wilson_low: lo,
        wilson_high: hi,
        mean_k_end: k_sum as f64 / replicas.max(1) as f64,
        max_k_end: k_max,
        max_coupling_deviation: dev,
    })
}
