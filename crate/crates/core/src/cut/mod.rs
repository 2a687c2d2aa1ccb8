//! Weighted L¹ problems `min Σ w|v_i − v_j| + Σ w|v_i − b|`, the common core of
//! every perimeter and Dirichlet solve in the crate.
//!
//! Two independent backends: an exact parametric minimum cut and a diagonally
//! preconditioned primal–dual method that certifies its answer by a duality gap.

pub mod maxflow;
mod parametric;
mod pdhg;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub i: usize,
    pub target: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Default)]
pub struct L1Problem {
    pub n: usize,
    pub pairs: Vec<Pair>,
    pub anchors: Vec<Anchor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Backend {
    MinCut,
    FirstOrder,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative duality-gap target of the first-order backend.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Starting point for the first-order backend.
    pub init: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-3, max_iter: 200_000, init: None }
    }
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub values: Vec<f64>,
    pub energy: f64,
    /// Certified lower bound on the optimal energy.
    pub lower_bound: f64,
    pub iterations: usize,
    pub backend: Backend,
    pub converged: bool,
}

impl L1Solution {
    /// `(energy − lower_bound)/energy`, zero when both vanish.
    pub fn relative_gap(&self) -> f64 {
        let d = (self.energy - self.lower_bound).max(0.0);
        if d == 0.0 {
            0.0
        } else {
            d / self.energy.abs().max(f64::MIN_POSITIVE)
        }
    }
}

impl L1Problem {
    pub fn new(n: usize) -> Self {
        Self { n, pairs: Vec::new(), anchors: Vec::new() }
    }

    pub fn add_pair(&mut self, i: usize, j: usize, w: f64) {
        if w > 0.0 && i != j {
            self.pairs.push(Pair { i, j, w });
        }
    }

    pub fn add_anchor(&mut self, i: usize, target: f64, w: f64) {
        if w > 0.0 {
            self.anchors.push(Anchor { i, target, w });
        }
    }

    pub fn energy(&self, v: &[f64]) -> f64 {
        let p: f64 = self.pairs.iter().map(|e| e.w * (v[e.i] - v[e.j]).abs()).sum();
        let a: f64 = self.anchors.iter().map(|e| e.w * (v[e.i] - e.target).abs()).sum();
        p + a
    }

    fn validate(&self) -> Result<()> {
        for e in &self.pairs {
            if e.i >= self.n || e.j >= self.n || !e.w.is_finite() {
                return Err(invalid("pair term out of range or non-finite"));
            }
        }
        for e in &self.anchors {
            if e.i >= self.n || !e.w.is_finite() || !e.target.is_finite() {
                return Err(invalid("anchor term out of range or non-finite"));
            }
        }
        Ok(())
    }

    /// Smallest and largest anchor target; a minimizer exists inside this box.
    pub fn target_range(&self) -> Option<(f64, f64)> {
        self.anchors.iter().fold(None, |acc, a| match acc {
            None => Some((a.target, a.target)),
            Some((lo, hi)) => Some((lo.min(a.target), hi.max(a.target))),
        })
    }

    pub fn solve(&self, backend: Backend, opts: &SolveOptions) -> Result<L1Solution> {
        self.validate()?;
        match backend {
            Backend::MinCut => Ok(parametric::solve(self)),
            Backend::FirstOrder => pdhg::solve(self, opts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over assignments drawn from the anchor targets,
    /// which contain a minimizer of any weighted L¹ problem.
    fn brute_force(p: &L1Problem) -> f64 {
        let mut levels: Vec<f64> = p.anchors.iter().map(|a| a.target).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.is_empty() {
            return 0.0;
        }
        let m = levels.len();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; p.n];
        loop {
            let v: Vec<f64> = idx.iter().map(|&k| levels[k]).collect();
            best = best.min(p.energy(&v));
            let mut d = 0;
            while d < p.n {
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == p.n {
                break;
            }
        }
        best
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> L1Problem {
        let mut p = L1Problem::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.5) {
                    p.add_pair(i, j, rng.gen_range(0.1..2.0));
                }
            }
            if rng.gen_bool(0.6) {
                p.add_anchor(i, rng.gen_range(0..4) as f64 * 0.5, rng.gen_range(0.1..2.0));
            }
        }
        p
    }

    #[test]
    fn mincut_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let p = random_problem(&mut rng, 6);
            let s = p.solve(Backend::MinCut, &SolveOptions::default()).unwrap();
            let e = brute_force(&p);
            assert!((s.energy - e).abs() <= 1e-9 * (1.0 + e), "{} vs {}", s.energy, e);
        }
    }

    #[test]
    fn first_order_certifies_near_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let p = random_problem(&mut rng, 6);
            let opts = SolveOptions { gap_tol: 1e-6, ..Default::default() };
            let s = p.solve(Backend::FirstOrder, &opts).unwrap();
            let e = brute_force(&p);
            assert!(s.lower_bound <= e + 1e-9 * (1.0 + e));
            assert!(s.energy >= e - 1e-9 * (1.0 + e));
            assert!(s.energy - e <= 1e-5 * (1.0 + e), "{} vs {}", s.energy, e);
        }
    }

    #[test]
    fn unanchored_components_are_constant() {
        let mut p = L1Problem::new(4);
        p.add_pair(0, 1, 1.0);
        p.add_pair(2, 3, 1.0);
        p.add_anchor(0, 2.0, 1.0);
        let s = p.solve(Backend::MinCut, &SolveOptions::default()).unwrap();
        assert_eq!(s.values[0], 2.0);
        assert_eq!(s.values[1], 2.0);
        assert_eq!(s.values[2], s.values[3]);
        assert_eq!(s.energy, 0.0);
    }
}
