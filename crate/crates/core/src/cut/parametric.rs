//! Exact solver by divide and conquer over the sorted anchor levels: each
//! split solves one minimum cut at a threshold between two levels and sends
//! the nodes above it to the upper half. Minimal source sets keep the cuts
//! nested, which makes the recursion exact.

use super::maxflow::FlowNetwork;
use super::{Backend, L1Problem, L1Solution};

/// Largest rounded single capacity; leaves headroom for sums over millions of nodes.
const CAP_BITS: i32 = 36;

struct Csr {
    start: Vec<usize>,
    item: Vec<(usize, f64)>,
}

impl Csr {
    fn build(n: usize, entries: impl Iterator<Item = (usize, usize, f64)> + Clone) -> Self {
        let mut start = vec![0usize; n + 1];
        for (i, _, _) in entries.clone() {
            start[i + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut item = vec![(0, 0.0); start[n]];
        for (i, j, w) in entries {
            item[fill[i]] = (j, w);
            fill[i] += 1;
        }
        Self { start, item }
    }

    fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.item[self.start[i]..self.start[i + 1]]
    }
}

pub(super) fn solve(p: &L1Problem) -> L1Solution {
    let n = p.n;
    let mut levels: Vec<f64> = p.anchors.iter().map(|a| a.target).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.is_empty() {
        return L1Solution { values: vec![0.0; n], energy: 0.0, lower_bound: 0.0, iterations: 0, backend: Backend::MinCut, converged: true };
    }
    let level_of = |t: f64| levels.partition_point(|&l| l < t);
    let nbrs = Csr::build(n, p.pairs.iter().flat_map(|e| [(e.i, e.j, e.w), (e.j, e.i, e.w)]));
    let anch = Csr::build(n, p.anchors.iter().map(|a| (a.i, level_of(a.target), a.w)));

    let mut node_cap: f64 = 0.0;
    for i in 0..n {
        let s: f64 = nbrs.row(i).iter().map(|x| x.1).sum::<f64>() + anch.row(i).iter().map(|x| x.1).sum::<f64>();
        node_cap = node_cap.max(s);
    }
    let scale = if node_cap > 0.0 { 2f64.powi(CAP_BITS) / node_cap } else { 1.0 };
    let round = |c: f64| (c * scale).round() as i64;

    let m = levels.len();
    let mut lo_of = vec![0usize; n];
    let mut hi_of = vec![m - 1; n];
    let mut local = vec![u32::MAX; n];
    let mut stack: Vec<(Vec<usize>, usize, usize)> = vec![((0..n).collect(), 0, m - 1)];
    let mut rounding = 0.0;
    let mut cuts = 0usize;

    while let Some((nodes, lo, hi)) = stack.pop() {
        if nodes.is_empty() {
            continue;
        }
        if lo == hi {
            continue;
        }
        let mid = (lo + hi) / 2;
        for (k, &i) in nodes.iter().enumerate() {
            local[i] = k as u32;
        }
        let k = nodes.len();
        let (src, snk) = (k, k + 1);
        let mut g = FlowNetwork::with_capacity(k + 2, 8 * k);
        let mut arcs = 0usize;
        for (li, &i) in nodes.iter().enumerate() {
            // cost of placing i above the threshold, and of placing it below
            let (mut up, mut down) = (0.0, 0.0);
            for &(lvl, w) in anch.row(i) {
                if lvl <= mid {
                    up += w;
                } else {
                    down += w;
                }
            }
            for &(j, w) in nbrs.row(i) {
                if local[j] != u32::MAX {
                    if i < j {
                        let c = round(w);
                        if c > 0 {
                            g.add_edge(li, local[j] as usize, c, c);
                            arcs += 1;
                        }
                    }
                } else if hi_of[j] < lo {
                    up += w;
                } else {
                    down += w;
                }
            }
            let common = up.min(down);
            let (cu, cd) = (round(up - common), round(down - common));
            if cd > 0 {
                g.add_edge(src, li, cd, 0);
                arcs += 1;
            }
            if cu > 0 {
                g.add_edge(li, snk, cu, 0);
                arcs += 1;
            }
        }
        g.max_flow(src, snk);
        cuts += 1;
        rounding += arcs as f64 * 0.5 / scale * (levels[mid + 1] - levels[mid]);
        let side = g.source_side(src);
        let (mut upper, mut lower) = (Vec::new(), Vec::new());
        for (li, &i) in nodes.iter().enumerate() {
            if side[li] {
                lo_of[i] = mid + 1;
                upper.push(i);
            } else {
                hi_of[i] = mid;
                lower.push(i);
            }
        }
        for &i in &nodes {
            local[i] = u32::MAX;
        }
        stack.push((lower, lo, mid));
        stack.push((upper, mid + 1, hi));
    }
    let values: Vec<f64> = lo_of.iter().map(|&k| levels[k]).collect();
    let energy = p.energy(&values);
    L1Solution { values, energy, lower_bound: energy - rounding, iterations: cuts, backend: Backend::MinCut, converged: true }
}
