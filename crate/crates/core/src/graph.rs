//! Finite d-regular graphs: generation, file format, balls, tree excess,
//! assumption audit, cover-tree charts and non-backtracking path counts.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::rng::stream_rng;

pub const UNREACHED: u32 = u32::MAX;

/// Default size up to which spectral quantities use a dense eigensolve.
pub const DENSE_THRESHOLD: usize = 4096;

/// Immutable d-regular multigraph. Neighbour lists are sorted; a self-loop
/// appears twice in its vertex's list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegularGraph {
    d: usize,
    n: usize,
    adj: Vec<u32>,
}

impl RegularGraph {
    pub fn from_adjacency(d: usize, lists: Vec<Vec<usize>>) -> Result<Self> {
        if d < 3 {
            return invalid(format!("degree must be at least 3, got {d}"));
        }
        let n = lists.len();
        if n < d + 1 {
            return invalid(format!("need at least d+1 = {} vertices, got {n}", d + 1));
        }
        let mut adj = Vec::with_capacity(n * d);
        for (v, l) in lists.iter().enumerate() {
            if l.len() != d {
                return Err(Error::Parse(format!("vertex {v} has {} neighbours, expected {d}", l.len())));
            }
            let mut l = l.clone();
            l.sort_unstable();
            for &u in &l {
                if u >= n {
                    return Err(Error::VertexOutOfRange(u));
                }
                adj.push(u as u32);
            }
        }
        let g = RegularGraph { d, n, adj };
        for v in 0..n {
            let nb = g.neighbors(v);
            let loops = nb.iter().filter(|&&u| u as usize == v).count();
            if loops % 2 != 0 {
                return Err(Error::Parse(format!("vertex {v} lists itself an odd number of times")));
            }
            for &u in nb {
                let u = u as usize;
                if u == v {
                    continue;
                }
                let a = nb.iter().filter(|&&w| w as usize == u).count();
                let b = g.neighbors(u).iter().filter(|&&w| w as usize == v).count();
                if a != b {
                    return Err(Error::Parse(format!("edge {v}-{u} is not symmetric")));
                }
            }
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let lists = (0..n).map(|v| (0..n).filter(|&u| u != v).collect()).collect();
        Self::from_adjacency(n.saturating_sub(1), lists)
    }

    pub fn petersen() -> Self {
        let mut lists = vec![Vec::new(); 10];
        let mut add = |a: usize, b: usize| {
            lists[a].push(b);
            lists[b].push(a);
        };
        for i in 0..5 {
            add(i, (i + 1) % 5);
            add(i, i + 5);
            add(5 + i, 5 + (i + 2) % 5);
        }
        Self::from_adjacency(3, lists).expect("petersen graph is 3-regular")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[v * self.d..(v + 1) * self.d]
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange(v))
        }
    }

    pub fn is_simple(&self) -> bool {
        (0..self.n).all(|v| {
            let nb = self.neighbors(v);
            nb.iter().all(|&u| u as usize != v) && nb.windows(2).all(|w| w[0] != w[1])
        })
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from(0, usize::MAX).iter().all(|&x| x != UNREACHED)
    }

    /// BFS distances from `x`, truncated at `max_r` (farther vertices get `UNREACHED`).
    pub fn distances_from(&self, x: usize, max_r: usize) -> Vec<u32> {
        self.distances_from_set(&[x], max_r)
    }

    pub fn distances_from_set(&self, set: &[usize], max_r: usize) -> Vec<u32> {
        let mut dist = vec![UNREACHED; self.n];
        let mut q = VecDeque::new();
        for &s in set {
            if dist[s] != 0 {
                dist[s] = 0;
                q.push_back(s);
            }
        }
        while let Some(v) = q.pop_front() {
            let dv = dist[v];
            if dv as usize >= max_r {
                continue;
            }
            for &u in self.neighbors(v) {
                let u = u as usize;
                if dist[u] == UNREACHED {
                    dist[u] = dv + 1;
                    q.push_back(u);
                }
            }
        }
        dist
    }

    pub fn distance(&self, x: usize, y: usize) -> Option<usize> {
        let d = self.distances_from(x, usize::MAX)[y];
        (d != UNREACHED).then_some(d as usize)
    }

    /// Vertices of B(x, r) in BFS order (ties by neighbour order).
    pub fn ball(&self, x: usize, r: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        self.ball_with(x, r, &mut seen)
    }

    fn ball_with(&self, x: usize, r: usize, seen: &mut [bool]) -> Vec<usize> {
        let mut out = vec![x];
        seen[x] = true;
        let mut start = 0;
        for _ in 0..r {
            let end = out.len();
            for i in start..end {
                let v = out[i];
                for &u in self.neighbors(v) {
                    let u = u as usize;
                    if !seen[u] {
                        seen[u] = true;
                        out.push(u);
                    }
                }
            }
            if out.len() == end {
                break;
            }
            start = end;
        }
        for &v in &out {
            seen[v] = false;
        }
        out
    }

    pub fn sphere(&self, x: usize, r: usize) -> Vec<usize> {
        let dist = self.distances_from(x, r);
        let mut s: Vec<usize> = (0..self.n).filter(|&v| dist[v] as usize == r).collect();
        s.sort_unstable();
        s
    }

    /// Number of edges with both endpoints in `set` (loops and parallel edges
    /// counted with multiplicity).
    pub fn induced_edges(&self, set: &[usize]) -> usize {
        let mut mark = vec![false; self.n];
        for &v in set {
            mark[v] = true;
        }
        let ends: usize = set
            .iter()
            .map(|&v| self.neighbors(v).iter().filter(|&&u| mark[u as usize]).count())
            .sum();
        ends / 2
    }

    /// Tree excess: induced edges − |set| + number of induced components.
    pub fn tree_excess(&self, set: &[usize]) -> usize {
        if set.is_empty() {
            return 0;
        }
        let mut mark = vec![false; self.n];
        for &v in set {
            mark[v] = true;
        }
        let mut comps = 0;
        let mut seen = vec![false; self.n];
        for &s in set {
            if seen[s] {
                continue;
            }
            comps += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &u in self.neighbors(v) {
                    let u = u as usize;
                    if mark[u] && !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        self.induced_edges(set) + comps - set.len()
    }

    pub fn ball_tree_excess(&self, x: usize, r: usize) -> usize {
        self.tree_excess(&self.ball(x, r))
    }

    /// Relabel vertices: new index of `v` is `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return invalid("permutation length mismatch");
        }
        let mut lists = vec![Vec::new(); self.n];
        for v in 0..self.n {
            lists[perm[v]] = self.neighbors(v).iter().map(|&u| perm[u as usize]).collect();
        }
        Self::from_adjacency(self.d, lists)
    }

    /// Dense transition matrix P = A/d.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n, self.n);
        let w = 1.0 / self.d as f64;
        for v in 0..self.n {
            for &u in self.neighbors(v) {
                p[(v, u as usize)] += w;
            }
        }
        p
    }

    /// out = P f.
    pub fn apply_transition(&self, f: &[f64], out: &mut [f64]) {
        let w = 1.0 / self.d as f64;
        for (v, o) in out.iter_mut().enumerate().take(self.n) {
            let s: f64 = self.neighbors(v).iter().map(|&u| f[u as usize]).sum();
            *o = s * w;
        }
    }

    /// out = (I − P) f.
    pub fn apply_laplacian(&self, f: &[f64], out: &mut [f64]) {
        let w = 1.0 / self.d as f64;
        for v in 0..self.n {
            let s: f64 = self.neighbors(v).iter().map(|&u| f[u as usize]).sum();
            out[v] = f[v] - s * w;
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.n * (4 + 8 * self.d));
        let _ = writeln!(s, "{} {}", self.d, self.n);
        for v in 0..self.n {
            let _ = write!(s, "{v}:");
            for &u in self.neighbors(v) {
                let _ = write!(s, " {u}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty file".into()))?;
        let mut it = header.split_whitespace();
        let parse = |t: Option<&str>, what: &str| -> Result<usize> {
            t.ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let d = parse(it.next(), "degree")?;
        let n = parse(it.next(), "vertex count")?;
        if it.next().is_some() {
            return Err(Error::Parse("trailing tokens in header".into()));
        }
        let mut lists: Vec<Option<Vec<usize>>> = vec![None; n];
        for line in lines {
            let (head, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("missing ':' in line {line:?}")))?;
            let v = parse(Some(head.trim()), "vertex index")?;
            if v >= n {
                return Err(Error::VertexOutOfRange(v));
            }
            if lists[v].is_some() {
                return Err(Error::Parse(format!("vertex {v} listed twice")));
            }
            let nb = rest
                .split_whitespace()
                .map(|t| parse(Some(t), "neighbour index"))
                .collect::<Result<Vec<_>>>()?;
            if nb.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Parse(format!("neighbours of {v} are not sorted")));
            }
            lists[v] = Some(nb);
        }
        let lists = lists
            .into_iter()
            .enumerate()
            .map(|(v, l)| l.ok_or_else(|| Error::Parse(format!("vertex {v} missing"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_adjacency(d, lists)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Configuration model with whole-restart rejection of loops and parallel
/// edges. Gives up after `10·n` attempts.
pub fn generate_random_regular(d: usize, n: usize, seed: u64) -> Result<RegularGraph> {
    if d < 3 {
        return invalid(format!("degree must be at least 3, got {d}"));
    }
    if !(n * d).is_multiple_of(2) {
        return invalid(format!("n·d = {} is odd", n * d));
    }
    if n <= d {
        return invalid(format!("need n > d, got n = {n}, d = {d}"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut stubs: Vec<u32> = (0..n * d).map(|i| (i / d) as u32).collect();
    let budget = (10 * n).max(1000);
    let mut lists: Vec<Vec<usize>> = vec![Vec::with_capacity(d); n];
    'attempt: for _ in 0..budget {
        stubs.shuffle(&mut rng);
        for l in lists.iter_mut() {
            l.clear();
        }
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0] as usize, pair[1] as usize);
            if a == b || lists[a].contains(&b) {
                continue 'attempt;
            }
            lists[a].push(b);
            lists[b].push(a);
        }
        return RegularGraph::from_adjacency(d, lists);
    }
    Err(Error::GenerationFailed(budget))
}

/// ⌊α·log_{d−1} N⌋, robust to rounding at exact powers.
pub fn audit_radius(d: usize, n: usize, alpha: f64) -> usize {
    floor_eps(alpha * log_base(n as f64, (d - 1) as f64))
}

pub fn log_base(x: f64, b: f64) -> f64 {
    x.ln() / b.ln()
}

pub(crate) fn floor_eps(x: f64) -> usize {
    let f = (x + 1e-9).floor();
    if f <= 0.0 {
        0
    } else {
        f as usize
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AssumptionReport {
    pub alpha: f64,
    pub beta: f64,
    pub radius_checked: usize,
    pub max_tree_excess_in_ball: usize,
    pub spectral_gap: f64,
    pub connected: bool,
    pub simple: bool,
    /// Assumptions (0), (1), (2) in that order.
    pub passes: [bool; 3],
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|&p| p)
    }
}

pub fn audit_assumptions(g: &RegularGraph, alpha: f64, beta: f64) -> Result<AssumptionReport> {
    audit_assumptions_with(g, alpha, beta, DENSE_THRESHOLD)
}

pub fn audit_assumptions_with(
    g: &RegularGraph,
    alpha: f64,
    beta: f64,
    dense_threshold: usize,
) -> Result<AssumptionReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("alpha must lie in (0,1], got {alpha}"));
    }
    if !(beta > 0.0 && beta <= 2.0) {
        return invalid(format!("beta must lie in (0,2], got {beta}"));
    }
    let radius = audit_radius(g.d(), g.n(), alpha);
    let mut seen = vec![false; g.n()];
    let mut mark = vec![false; g.n()];
    let mut max_tx = 0;
    for x in 0..g.n() {
        let ball = g.ball_with(x, radius, &mut seen);
        for &v in &ball {
            mark[v] = true;
        }
        let ends: usize = ball
            .iter()
            .map(|&v| g.neighbors(v).iter().filter(|&&u| mark[u as usize]).count())
            .sum();
        for &v in &ball {
            mark[v] = false;
        }
        // balls are connected, so tx = edges − vertices + 1
        max_tx = max_tx.max(ends / 2 + 1 - ball.len());
    }
    let connected = g.is_connected();
    let simple = g.is_simple();
    let spectral_gap = spectral_gap(g, dense_threshold)?;
    Ok(AssumptionReport {
        alpha,
        beta,
        radius_checked: radius,
        max_tree_excess_in_ball: max_tx,
        spectral_gap,
        connected,
        simple,
        passes: [connected && simple, max_tx <= 1, spectral_gap >= beta],
    })
}

/// Smallest non-zero eigenvalue of I − P.
pub fn spectral_gap(g: &RegularGraph, dense_threshold: usize) -> Result<f64> {
    if g.n() <= dense_threshold {
        let mut l = -g.transition_matrix();
        for i in 0..g.n() {
            l[(i, i)] += 1.0;
        }
        let ev = l.symmetric_eigenvalues();
        let max = ev.iter().cloned().fold(0.0f64, f64::max);
        let tol = 1e-10 * max;
        ev.iter()
            .cloned()
            .filter(|&l| l.abs() > tol)
            .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))))
            .ok_or_else(|| Error::Numerical("no non-zero eigenvalue".into()))
    } else {
        linalg::lanczos_gap(g, 1e-8)
    }
}

/// Derived scale constants.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScaleConstants {
    pub d: usize,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub s_n: usize,
    pub r_n: usize,
    pub big_r_n: usize,
    pub t_n: f64,
}

impl ScaleConstants {
    pub fn new(d: usize, n: usize, alpha: f64, beta: f64, spectral_gap: f64) -> Result<Self> {
        if d < 3 || n <= d {
            return invalid("need d ≥ 3 and N > d");
        }
        let c0 = alpha * beta / (d - 1) as f64;
        if !(c0 > 0.0 && c0 < 1.0) {
            return invalid(format!("c0 = {c0} must lie in (0,1)"));
        }
        if spectral_gap.is_nan() || spectral_gap <= 0.0 {
            return invalid("spectral gap must be positive");
        }
        let b = (d - 1) as f64;
        let logn = log_base(n as f64, b);
        Ok(ScaleConstants {
            d,
            n,
            alpha,
            beta,
            c0,
            s_n: floor_eps(8.0 * log_base(logn, b)).max(1),
            r_n: floor_eps(c0 / 18.0 * logn).max(1),
            big_r_n: floor_eps(c0 / 6.0 * logn).max(1),
            t_n: (n as f64).ln().powi(2) / spectral_gap,
        })
    }

    /// γ_h = (c0/20)·log_{d−1}(λ_h).
    pub fn gamma(&self, lambda_h: f64) -> f64 {
        self.c0 / 20.0 * log_base(lambda_h, (self.d - 1) as f64)
    }

    /// Anomaly threshold c_κ·√(ln N).
    pub fn m_n(&self, c_kappa: f64) -> f64 {
        c_kappa * (self.n as f64).ln().sqrt()
    }
}

/// A tree address: the sequence of child choices from the root. The root has
/// children `0..d`, every other vertex `0..d−1`.
pub type Address = Vec<u8>;

/// Children of `v` in the canonical chart: sorted neighbours with one
/// occurrence of the parent removed.
pub fn chart_children(g: &RegularGraph, v: usize, parent: Option<usize>) -> Vec<usize> {
    let mut out: Vec<usize> = g.neighbors(v).iter().map(|&u| u as usize).collect();
    if let Some(p) = parent {
        if let Some(i) = out.iter().position(|&u| u == p) {
            out.remove(i);
        }
    }
    out
}

/// π_{n,x}(addr): walk the non-backtracking path in g encoded by `addr`.
pub fn cover_tree_image(g: &RegularGraph, x: usize, addr: &[u8]) -> Result<usize> {
    g.check_vertex(x)?;
    let mut cur = x;
    let mut prev: Option<usize> = None;
    for &j in addr {
        let ch = chart_children(g, cur, prev);
        let next = *ch
            .get(j as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("child index {j} out of range")))?;
        prev = Some(cur);
        cur = next;
    }
    Ok(cur)
}

/// Chart index of neighbour `w` of `v` given the chart parent of `v`.
pub fn chart_child_index(g: &RegularGraph, v: usize, parent: Option<usize>, w: usize) -> Option<u8> {
    chart_children(g, v, parent).iter().position(|&u| u == w).map(|i| i as u8)
}

/// Minimal-depth preimage of `y` under π_{n,x}, ties broken lexicographically.
/// This is the address of the lexicographically first geodesic from x to y.
pub fn min_preimage(g: &RegularGraph, x: usize, y: usize) -> Result<Address> {
    g.check_vertex(x)?;
    g.check_vertex(y)?;
    let mut parent = vec![usize::MAX; g.n()];
    let mut seen = vec![false; g.n()];
    seen[x] = true;
    let mut q = VecDeque::from([x]);
    while let Some(v) = q.pop_front() {
        if v == y {
            break;
        }
        let p = (v != x).then(|| parent[v]);
        for u in chart_children(g, v, p) {
            if !seen[u] {
                seen[u] = true;
                parent[u] = v;
                q.push_back(u);
            }
        }
    }
    if !seen[y] {
        return Err(Error::Disconnected);
    }
    let mut path = vec![y];
    while *path.last().unwrap() != x {
        path.push(parent[*path.last().unwrap()]);
    }
    path.reverse();
    let mut addr = Vec::with_capacity(path.len() - 1);
    for i in 1..path.len() {
        let p = (i >= 2).then(|| path[i - 2]);
        addr.push(chart_child_index(g, path[i - 1], p, path[i]).expect("path edge"));
    }
    Ok(addr)
}

/// Number of non-backtracking paths from x to y that stay in B(x,R) and whose
/// length lies in `[window.0, window.0 + window.1)`. Paths are sequences of
/// edges that never immediately reuse the edge they arrived by.
pub fn count_nonbacktracking_paths(
    g: &RegularGraph,
    x: usize,
    y: usize,
    radius: usize,
    window: (usize, usize),
) -> Result<u64> {
    g.check_vertex(x)?;
    g.check_vertex(y)?;
    let ball = g.ball(x, radius);
    let dist = g.distances_from(x, radius);
    if dist[y] == UNREACHED {
        return Err(Error::Geometry(format!("{y} is not in B({x},{radius})")));
    }
    let tx = g.tree_excess(&ball);
    if tx >= 2 {
        return Err(Error::Unsupported(format!("B({x},{radius}) has tree excess {tx}")));
    }
    let (k, l) = window;
    let hi = k + l;
    if hi == 0 {
        return Ok(0);
    }
    // states are directed edge slots (v, i): arrived at v through slot i of
    // v's neighbour list (i = d means "no incoming edge", the start)
    let d = g.d();
    let idx: Vec<usize> = {
        let mut m = vec![usize::MAX; g.n()];
        for (i, &v) in ball.iter().enumerate() {
            m[v] = i;
        }
        m
    };
    let slots = d + 1;
    let mut cur = vec![0u64; ball.len() * slots];
    cur[idx[x] * slots + d] = 1;
    let mut total = if k == 0 && x == y { 1 } else { 0 };
    let mut next = vec![0u64; cur.len()];
    for len in 1..hi {
        next.iter_mut().for_each(|c| *c = 0);
        for (bi, &v) in ball.iter().enumerate() {
            let nb = g.neighbors(v);
            for s in 0..slots {
                let c = cur[bi * slots + s];
                if c == 0 {
                    continue;
                }
                for (j, &u) in nb.iter().enumerate() {
                    if s < d && j == s {
                        continue;
                    }
                    let u = u as usize;
                    if idx[u] == usize::MAX {
                        continue;
                    }
                    let back = reverse_slot(g, v, j, u);
                    next[idx[u] * slots + back] += c;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if len >= k {
            let yi = idx[y] * slots;
            total += cur[yi..yi + d].iter().sum::<u64>();
        }
    }
    Ok(total)
}

/// Slot of the edge (v, slot j) in u's list, pairing parallel edges in order.
fn reverse_slot(g: &RegularGraph, v: usize, j: usize, u: usize) -> usize {
    let nb_v = g.neighbors(v);
    if u == v {
        // a loop occupies two consecutive slots: leaving by one, arrive by the other
        let first = nb_v.iter().position(|&w| w as usize == v).unwrap();
        let rank = (j - first) / 2 * 2;
        return first + rank + (1 - (j - first) % 2);
    }
    let rank = nb_v[..j].iter().filter(|&&w| w as usize == u).count();
    let nb_u = g.neighbors(u);
    nb_u.iter()
        .enumerate()
        .filter(|(_, &w)| w as usize == v)
        .nth(rank)
        .map(|(i, _)| i)
        .unwrap()
}

/// Length of the unique cycle in B(x,R) when its tree excess is exactly 1.
pub fn ball_cycle_length(g: &RegularGraph, x: usize, radius: usize) -> Option<usize> {
    let ball = g.ball(x, radius);
    if g.tree_excess(&ball) != 1 {
        return None;
    }
    // peel leaves of the induced subgraph; what remains is the cycle
    let mut inb = vec![false; g.n()];
    for &v in &ball {
        inb[v] = true;
    }
    let mut deg: Vec<usize> = vec![0; g.n()];
    for &v in &ball {
        deg[v] = g.neighbors(v).iter().filter(|&&u| inb[u as usize]).count();
    }
    let mut stack: Vec<usize> = ball.iter().cloned().filter(|&v| deg[v] <= 1).collect();
    let mut alive = inb.clone();
    while let Some(v) = stack.pop() {
        if !alive[v] {
            continue;
        }
        alive[v] = false;
        for &u in g.neighbors(v) {
            let u = u as usize;
            if alive[u] {
                deg[u] -= 1;
                if deg[u] == 1 {
                    stack.push(u);
                }
            }
        }
    }
    Some(ball.iter().filter(|&&v| alive[v]).count())
}
