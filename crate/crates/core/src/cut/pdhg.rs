//! Diagonally preconditioned primal–dual hybrid gradient for the L¹ problem,
//! written as `min_v max_{|y|≤1} Σ_r w_r y_r (K_r v − c_r)` over the box of
//! anchor targets. The dual value `D(y) = −Σ w y c + Σ_i min_{v∈box} v (Kᵀ(w∘y))_i`
//! is a lower bound on the optimum, so the reported gap is a certificate.

use super::{Backend, L1Problem, L1Solution, SolveOptions};
use crate::error::{invalid, Result};

const CHECK_EVERY: usize = 20;

pub(super) fn solve(p: &L1Problem, opts: &SolveOptions) -> Result<L1Solution> {
    let n = p.n;
    let Some((lo, hi)) = p.target_range() else {
        let values = opts.init.clone().unwrap_or_else(|| vec![0.0; n]);
        let energy = p.energy(&values);
        return Ok(L1Solution { values, energy, lower_bound: 0.0, iterations: 0, backend: Backend::FirstOrder, converged: energy == 0.0 });
    };
    if !(opts.gap_tol > 0.0) {
        return Err(invalid("gap tolerance must be positive"));
    }
    let mut v: Vec<f64> = match &opts.init {
        Some(x) if x.len() == n => x.iter().map(|&t| t.clamp(lo, hi)).collect(),
        Some(_) => return Err(invalid("initial guess has the wrong length")),
        None => vec![0.5 * (lo + hi); n],
    };
    let mut tau = vec![0.0; n];
    for e in &p.pairs {
        tau[e.i] += e.w;
        tau[e.j] += e.w;
    }
    for a in &p.anchors {
        tau[a.i] += a.w;
    }
    for t in tau.iter_mut() {
        *t = if *t > 0.0 { 1.0 / *t } else { 0.0 };
    }
    let sgn = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let mut yp: Vec<f64> = p.pairs.iter().map(|e| sgn(v[e.i] - v[e.j])).collect();
    let mut ya: Vec<f64> = p.anchors.iter().map(|a| sgn(v[a.i] - a.target)).collect();

    let mut g = vec![0.0; n];
    let adjoint = |yp: &[f64], ya: &[f64], g: &mut [f64]| {
        g.fill(0.0);
        for (e, &y) in p.pairs.iter().zip(yp) {
            g[e.i] += e.w * y;
            g[e.j] -= e.w * y;
        }
        for (a, &y) in p.anchors.iter().zip(ya) {
            g[a.i] += a.w * y;
        }
    };
    let dual_value = |ya: &[f64], g: &[f64]| -> f64 {
        let lin: f64 = p.anchors.iter().zip(ya).map(|(a, &y)| -a.w * y * a.target).sum();
        lin + g.iter().map(|&gi| (lo * gi).min(hi * gi)).sum::<f64>()
    };

    let mut best_v = v.clone();
    let mut best_p = p.energy(&v);
    let mut best_d = f64::NEG_INFINITY;
    let mut v_old = v.clone();
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        adjoint(&yp, &ya, &mut g);
        if it % CHECK_EVERY == 1 {
            best_d = best_d.max(dual_value(&ya, &g));
        }
        v_old.copy_from_slice(&v);
        for i in 0..n {
            v[i] = (v[i] - tau[i] * g[i]).clamp(lo, hi);
        }
        // dual step on the extrapolated point 2v − v_old; σ_r = 1/(2w) for pairs, 1/w for anchors
        for (e, y) in p.pairs.iter().zip(yp.iter_mut()) {
            let d = (2.0 * v[e.i] - v_old[e.i]) - (2.0 * v[e.j] - v_old[e.j]);
            *y = (*y + 0.5 * d).clamp(-1.0, 1.0);
        }
        for (a, y) in p.anchors.iter().zip(ya.iter_mut()) {
            let d = 2.0 * v[a.i] - v_old[a.i] - a.target;
            *y = (*y + d).clamp(-1.0, 1.0);
        }
        if it % CHECK_EVERY == 0 {
            let e = p.energy(&v);
            if e < best_p {
                best_p = e;
                best_v.copy_from_slice(&v);
            }
            let gap = best_p - best_d;
            if gap <= opts.gap_tol * best_p.abs() || gap <= 0.0 {
                converged = true;
                break;
            }
        }
    }
    adjoint(&yp, &ya, &mut g);
    best_d = best_d.max(dual_value(&ya, &g));
    let e = p.energy(&v);
    if e < best_p {
        best_p = e;
        best_v = v;
    }
    converged = converged || best_p - best_d <= opts.gap_tol * best_p.abs();
    Ok(L1Solution {
        values: best_v,
        energy: best_p,
        lower_bound: best_d.min(best_p),
        iterations: it,
        backend: Backend::FirstOrder,
        converged,
    })
}
