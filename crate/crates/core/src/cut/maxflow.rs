//! Dinic's algorithm on integer capacities.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    n: usize,
    // arcs 2k and 2k+1 are mutual reverses
    to: Vec<u32>,
    cap: Vec<i64>,
    first: Vec<usize>,
    order: Vec<u32>,
    tails: Vec<u32>,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        Self { n, to: Vec::new(), cap: Vec::new(), first: Vec::new(), order: Vec::new(), tails: Vec::new() }
    }

    pub fn with_capacity(n: usize, arcs: usize) -> Self {
        let mut g = Self::new(n);
        g.to.reserve(2 * arcs);
        g.cap.reserve(2 * arcs);
        g.tails.reserve(2 * arcs);
        g
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Add `u → v` with capacity `c_uv` and the reverse direction with `c_vu`.
    pub fn add_edge(&mut self, u: usize, v: usize, c_uv: i64, c_vu: i64) {
        debug_assert!(c_uv >= 0 && c_vu >= 0);
        self.to.push(v as u32);
        self.cap.push(c_uv);
        self.tails.push(u as u32);
        self.to.push(u as u32);
        self.cap.push(c_vu);
        self.tails.push(v as u32);
    }

    fn build_adjacency(&mut self) {
        let mut first = vec![0usize; self.n + 1];
        for &t in &self.tails {
            first[t as usize + 1] += 1;
        }
        for i in 0..self.n {
            first[i + 1] += first[i];
        }
        let mut fill = first.clone();
        let mut order = vec![0u32; self.tails.len()];
        for (a, &t) in self.tails.iter().enumerate() {
            order[fill[t as usize]] = a as u32;
            fill[t as usize] += 1;
        }
        self.first = first;
        self.order = order;
    }

    fn bfs(&self, s: usize, t: usize, level: &mut [u32]) -> bool {
        level.fill(u32::MAX);
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &a in &self.order[self.first[u]..self.first[u + 1]] {
                let a = a as usize;
                let v = self.to[a] as usize;
                if self.cap[a] > 0 && level[v] == u32::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        level[t] != u32::MAX
    }

    /// Run max-flow from `s` to `t`; returns the flow value.
    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        self.build_adjacency();
        let mut level = vec![u32::MAX; self.n];
        let mut it = vec![0usize; self.n];
        let mut total: i64 = 0;
        let mut path: Vec<usize> = Vec::new();
        while self.bfs(s, t, &mut level) {
            for u in 0..self.n {
                it[u] = self.first[u];
            }
            path.clear();
            let mut u = s;
            loop {
                if u == t {
                    let push = path.iter().map(|&a| self.cap[a]).min().unwrap_or(0);
                    let mut cut_at = path.len();
                    for (k, &a) in path.iter().enumerate() {
                        self.cap[a] -= push;
                        self.cap[a ^ 1] += push;
                        if self.cap[a] == 0 && cut_at == path.len() {
                            cut_at = k;
                        }
                    }
                    total += push;
                    path.truncate(cut_at);
                    u = match path.last() {
                        Some(&a) => self.to[a] as usize,
                        None => s,
                    };
                    continue;
                }
                let mut advanced = false;
                while it[u] < self.first[u + 1] {
                    let a = self.order[it[u]] as usize;
                    let v = self.to[a] as usize;
                    if self.cap[a] > 0 && level[v] == level[u] + 1 {
                        path.push(a);
                        u = v;
                        advanced = true;
                        break;
                    }
                    it[u] += 1;
                }
                if advanced {
                    continue;
                }
                // dead end: retire u from this phase
                level[u] = u32::MAX;
                match path.pop() {
                    Some(a) => {
                        u = self.tails[a] as usize;
                        it[u] += 1;
                    }
                    None => break,
                }
            }
        }
        total
    }

    /// Nodes reachable from `s` in the residual network: the minimal source side.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &a in &self.order[self.first[u]..self.first[u + 1]] {
                let a = a as usize;
                let v = self.to[a] as usize;
                if self.cap[a] > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1: max flow 23
        let mut g = FlowNetwork::new(6);
        let arcs = [(0, 1, 16), (0, 2, 13), (2, 1, 4), (1, 3, 12), (3, 2, 9), (2, 4, 14), (4, 3, 7), (3, 5, 20), (4, 5, 4)];
        for (u, v, c) in arcs {
            g.add_edge(u, v, c, 0);
        }
        assert_eq!(g.max_flow(0, 5), 23);
        let side = g.source_side(0);
        assert!(side[0] && !side[5]);
    }

    #[test]
    fn brute_force_cuts_on_small_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let n = 6;
            let mut caps = vec![vec![0i64; n]; n];
            let mut g = FlowNetwork::new(n);
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.gen_bool(0.6) {
                        let (a, b) = (rng.gen_range(0..10), rng.gen_range(0..10));
                        caps[u][v] = a;
                        caps[v][u] = b;
                        g.add_edge(u, v, a, b);
                    }
                }
            }
            let flow = g.max_flow(0, n - 1);
            let mut best = i64::MAX;
            for mask in 0..(1u32 << n) {
                if mask & 1 == 0 || mask & (1 << (n - 1)) != 0 {
                    continue;
                }
                let mut c = 0;
                for u in 0..n {
                    for v in 0..n {
                        if mask & (1 << u) != 0 && mask & (1 << v) == 0 {
                            c += caps[u][v];
                        }
                    }
                }
                best = best.min(c);
            }
            assert_eq!(flow, best);
        }
    }
}
