#![allow(dead_code)]

use gffperc_core::graph::RegularGraph;

/// A 3-regular graph whose ball B(0,3) contains exactly one cycle, the
/// 5-cycle on vertices 0..5. Each cycle vertex carries a pendant binary tree
/// of depth 3; the 20 leaves are closed up through a ring of spacer vertices
/// at distance ≥ 4 from the cycle. Returns the graph and the cycle.
pub fn five_cycle_gadget() -> (RegularGraph, Vec<usize>) {
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); 5];
    let add = |lists: &mut Vec<Vec<usize>>, a: usize, b: usize| {
        let need = a.max(b) + 1;
        if lists.len() < need {
            lists.resize(need, Vec::new());
        }
        lists[a].push(b);
        lists[b].push(a);
    };
    for i in 0..5 {
        add(&mut lists, i, (i + 1) % 5);
    }
    let mut leaves = Vec::new();
    for i in 0..5 {
        let c = lists.len();
        add(&mut lists, i, c);
        let mut level = vec![c];
        for _ in 0..2 {
            let mut next = Vec::new();
            for &v in &level {
                for _ in 0..2 {
                    let w = lists.len();
                    add(&mut lists, v, w);
                    next.push(w);
                }
            }
            level = next;
        }
        leaves.extend(level);
    }
    // leaf k – spacer k – leaf k+1 around a ring; spacers pair up across it
    let l = leaves.len();
    let mut spacers = Vec::new();
    for &leaf in &leaves {
        let s = lists.len();
        add(&mut lists, leaf, s);
        spacers.push(s);
    }
    for k in 0..l {
        add(&mut lists, spacers[k], leaves[(k + 1) % l]);
    }
    for k in 0..l / 2 {
        add(&mut lists, spacers[k], spacers[k + l / 2]);
    }
    (RegularGraph::from_adjacency(3, lists).unwrap(), (0..5).collect())
}
