//! Level sets {Ψ ≥ h}, their connected components and the census counts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{cover_tree_image, RegularGraph, ScaleConstants};

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    /// Union keeping the smaller index as root, so roots are component minima.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo as u32;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ComponentDecomposition {
    pub h: f64,
    /// Component label per vertex (the smallest vertex of its component), or
    /// `None` outside the level set.
    pub labels: Vec<Option<usize>>,
    /// (label, size), sorted by label.
    pub sizes: Vec<(usize, usize)>,
    pub max_size: usize,
}

impl ComponentDecomposition {
    pub fn level_set_size(&self) -> usize {
        self.sizes.iter().map(|s| s.1).sum()
    }

    /// |C_x|, zero when x is outside the level set.
    pub fn component_size(&self, x: usize) -> usize {
        match self.labels[x] {
            None => 0,
            Some(l) => self.sizes.binary_search_by_key(&l, |s| s.0).map(|i| self.sizes[i].1).unwrap_or(0),
        }
    }

    /// The two largest component sizes.
    pub fn top_two(&self) -> (usize, usize) {
        let mut a = 0;
        let mut b = 0;
        for &(_, s) in &self.sizes {
            if s > a {
                b = a;
                a = s;
            } else if s > b {
                b = s;
            }
        }
        (a, b)
    }
}

pub fn level_components(g: &RegularGraph, values: &[f64], h: f64) -> ComponentDecomposition {
    let n = g.n();
    let mut uf = UnionFind::new(n);
    for v in 0..n {
        if values[v] < h {
            continue;
        }
        for &u in g.neighbors(v) {
            let u = u as usize;
            if u > v && values[u] >= h {
                uf.union(v, u);
            }
        }
    }
    let mut labels = vec![None; n];
    let mut counts = vec![0usize; n];
    for v in 0..n {
        if values[v] >= h {
            let r = uf.find(v);
            labels[v] = Some(r);
            counts[r] += 1;
        }
    }
    let sizes: Vec<(usize, usize)> = (0..n).filter(|&r| counts[r] > 0).map(|r| (r, counts[r])).collect();
    let max_size = sizes.iter().map(|s| s.1).max().unwrap_or(0);
    ComponentDecomposition { h, labels, sizes, max_size }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Census {
    pub h: f64,
    pub gamma: f64,
    /// N^γ.
    pub threshold: f64,
    pub radius: usize,
    /// #{x : |C_x ∩ S⁺(x, r_n)| ≥ N^γ}.
    pub sphere_count: usize,
    /// #{x : |C_x| ≥ N^γ}.
    pub component_count: usize,
    /// Fraction of x with tx(B(x, 2R_n)) = 0.
    pub tree_like_fraction: f64,
    pub non_tree_like: usize,
}

/// Images of the forward sphere S⁺_T(o, r) under the canonical chart at x
/// (addresses whose first step avoids child 0), deduplicated and sorted.
pub fn forward_sphere_image(g: &RegularGraph, x: usize, r: usize) -> Vec<usize> {
    let d = g.d();
    let mut out = Vec::new();
    if r == 0 {
        return vec![x];
    }
    let mut addr = vec![0u8; r];
    loop {
        if addr[0] != 0 {
            out.push(cover_tree_image(g, x, &addr).expect("valid address"));
        }
        // odometer over addresses: first digit 0..d, others 0..d−1
        let mut i = r;
        loop {
            if i == 0 {
                out.sort_unstable();
                out.dedup();
                return out;
            }
            i -= 1;
            let lim = if i == 0 { d } else { d - 1 } as u8;
            addr[i] += 1;
            if addr[i] < lim {
                break;
            }
            addr[i] = 0;
        }
    }
}

pub fn mesoscopic_census(
    g: &RegularGraph,
    values: &[f64],
    h: f64,
    constants: &ScaleConstants,
    gamma: f64,
) -> Result<Census> {
    if gamma.is_nan() || gamma <= 0.0 {
        return invalid(format!("gamma must be positive, got {gamma}"));
    }
    let n = g.n();
    let comps = level_components(g, values, h);
    let threshold = (n as f64).powf(gamma);
    let r = constants.r_n;
    let mut sphere_count = 0;
    let mut component_count = 0;
    for x in 0..n {
        let Some(lx) = comps.labels[x] else { continue };
        if comps.component_size(x) as f64 >= threshold {
            component_count += 1;
        }
        let hits = forward_sphere_image(g, x, r).into_iter().filter(|&v| comps.labels[v] == Some(lx)).count();
        if hits as f64 >= threshold {
            sphere_count += 1;
        }
    }
    let rr = 2 * constants.big_r_n;
    let non_tree_like = (0..n).filter(|&x| g.ball_tree_excess(x, rr) != 0).count();
    Ok(Census {
        h,
        gamma,
        threshold,
        radius: r,
        sphere_count,
        component_count,
        tree_like_fraction: (n - non_tree_like) as f64 / n as f64,
        non_tree_like,
    })
}
