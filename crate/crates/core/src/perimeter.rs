//! Relaxed perimeter `P(E,U)` and inner perimeter `P₊(Ω,U)` as fidelity-relaxed
//! cut problems, the exterior-weight sweep, Minkowski and Hausdorff content
//! estimators, local perimeter densities and the measure-property suite.

use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{link_density, DensityRule};
use crate::cut::{Backend, L1Problem, SolveOptions};
use crate::error::{invalid, Error, Result};
use crate::nodeset::NodeSet;
use crate::space::{Region, Space};

#[derive(Debug, Clone)]
pub struct PerimeterEstimate {
    pub value: f64,
    pub tau: f64,
    pub method: Backend,
    /// Relative optimality gap of the solve.
    pub residual: f64,
    /// `(tau, value)` for every fidelity weight tried, in the order given.
    pub sweep: Vec<(f64, f64)>,
    /// Minimizing field, zero outside `U`.
    pub minimizer: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PerimeterSolver {
    pub backend: Backend,
    pub options: SolveOptions,
}

impl Default for PerimeterSolver {
    fn default() -> Self {
        Self { backend: Backend::MinCut, options: SolveOptions::default() }
    }
}

impl PerimeterSolver {
    pub fn with_backend(backend: Backend) -> Self {
        Self { backend, ..Self::default() }
    }
}

/// Assemble `Σ_{links in U} c·ρ·|v_a − v_b| + (1/τ) Σ_{free} μ_i |v_i − data_i|` with
/// the nodes of `U` outside `free` held at zero.
fn fidelity_problem(
    space: &Space,
    u: &NodeSet,
    free: &NodeSet,
    data: impl Fn(usize) -> f64,
    density: impl Fn(usize) -> f64,
    tau: f64,
) -> (L1Problem, Vec<usize>) {
    let n = space.len();
    let mut local = vec![usize::MAX; n];
    let ids: Vec<usize> = free.iter().filter(|&i| u.contains(i)).collect();
    for (k, &i) in ids.iter().enumerate() {
        local[i] = k;
    }
    let mut p = L1Problem::new(ids.len());
    for (k, l) in space.links().iter().enumerate() {
        if !(u.contains(l.a) && u.contains(l.b)) {
            continue;
        }
        let w = l.crofton * density(k);
        match (local[l.a], local[l.b]) {
            (usize::MAX, usize::MAX) => {}
            (a, usize::MAX) => p.add_anchor(a, 0.0, w),
            (usize::MAX, b) => p.add_anchor(b, 0.0, w),
            (a, b) => p.add_pair(a, b, w),
        }
    }
    for (k, &i) in ids.iter().enumerate() {
        p.add_anchor(k, data(i), space.measure(i) / tau);
    }
    (p, ids)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("fidelity parameter tau must be positive, got {tau}")))
    }
}

fn solve_fidelity(space: &Space, p: L1Problem, ids: Vec<usize>, data_field: &[f64], tau: f64, solver: &PerimeterSolver) -> Result<PerimeterEstimate> {
    let mut opts = solver.options.clone();
    if opts.init.is_none() {
        opts.init = Some(ids.iter().map(|&i| data_field[i]).collect());
    }
    let sol = p.solve(solver.backend, &opts)?;
    let mut minimizer = vec![0.0; space.len()];
    for (k, &i) in ids.iter().enumerate() {
        minimizer[i] = sol.values[k];
    }
    let residual = sol.relative_gap();
    Ok(PerimeterEstimate { value: sol.energy, tau, method: solver.backend, residual, sweep: vec![(tau, sol.energy)], minimizer })
}

/// Relaxed perimeter of `E` in `U`: the minimum over `v` on `U` of the
/// minimum-density edge variation plus `(1/τ)·Σ μ_i |v_i − χ_E(i)|`.
pub fn perimeter_relaxed(space: &Space, e: &NodeSet, u: &NodeSet, tau: f64, solver: &PerimeterSolver) -> Result<PerimeterEstimate> {
    check_tau(tau)?;
    let links = space.links();
    let (p, ids) = fidelity_problem(
        space,
        u,
        u,
        |i| if e.contains(i) { 1.0 } else { 0.0 },
        |k| link_density(space, None, &links[k], DensityRule::MinSide),
        tau,
    );
    let chi: Vec<f64> = (0..space.len()).map(|i| if e.contains(i) { 1.0 } else { 0.0 }).collect();
    solve_fidelity(space, p, ids, &chi, tau, solver)
}

/// Inner perimeter of the domain in `U`: as [`perimeter_relaxed`] with `E = Ω`,
/// but `v` is held at zero on `U ∖ Ω` and links leaving the domain carry the
/// domain-side density.
pub fn inner_perimeter(space: &Space, region: &Region, u: &NodeSet, tau: f64, solver: &PerimeterSolver) -> Result<PerimeterEstimate> {
    check_tau(tau)?;
    let links = space.links();
    let (p, ids) = fidelity_problem(
        space,
        u,
        region.omega(),
        |_| 1.0,
        |k| link_density(space, Some(region), &links[k], DensityRule::InteriorSide),
        tau,
    );
    let chi: Vec<f64> = (0..space.len()).map(|i| if region.is_omega(i) { 1.0 } else { 0.0 }).collect();
    solve_fidelity(space, p, ids, &chi, tau, solver)
}

/// Run `estimate` for each fidelity weight and report the value at the smallest one.
pub fn tau_sweep(taus: &[f64], mut estimate: impl FnMut(f64) -> Result<PerimeterEstimate>) -> Result<PerimeterEstimate> {
    if taus.is_empty() {
        return Err(invalid("tau sweep needs at least one value"));
    }
    let mut sweep = Vec::with_capacity(taus.len());
    let mut best: Option<PerimeterEstimate> = None;
    for &t in taus {
        let est = estimate(t)?;
        sweep.push((t, est.value));
        if best.as_ref().map_or(true, |b| t < b.tau) {
            best = Some(est);
        }
    }
    let mut out = best.expect("nonempty sweep");
    out.sweep = sweep;
    Ok(out)
}

pub const DEFAULT_TAUS: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Debug, Clone)]
pub struct KappaSweep {
    pub values: Vec<(f64, f64)>,
    /// Inner perimeter of the unweighted-domain space, the limit of the sweep.
    pub inner: f64,
}

/// Relaxed perimeters of the domain after multiplying every non-domain
/// density by κ, alongside the κ-independent inner perimeter.
pub fn kappa_sweep(space: &Space, region: &Region, kappas: &[f64], tau: f64, solver: &PerimeterSolver) -> Result<KappaSweep> {
    if kappas.iter().any(|&k| !(k >= 1.0)) {
        return Err(invalid("kappa values must be at least 1"));
    }
    if kappas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("kappa values must be increasing"));
    }
    let all = NodeSet::full(space.len());
    let mut values = Vec::with_capacity(kappas.len());
    for &k in kappas {
        let dens: Vec<f64> = (0..space.len())
            .map(|i| if region.is_omega(i) { space.density(i) } else { k * space.density(i) })
            .collect();
        let sk = space.with_densities(&dens)?;
        values.push((k, perimeter_relaxed(&sk, region.omega(), &all, tau, solver)?.value));
    }
    let inner = inner_perimeter(space, region, &all, tau, solver)?.value;
    Ok(KappaSweep { values, inner })
}

/// Measured `P`, `P₊` and their ratio over the same `U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparability {
    pub relaxed: f64,
    pub inner: f64,
    pub ratio: f64,
}

pub fn comparability(space: &Space, region: &Region, u: &NodeSet, taus: &[f64], solver: &PerimeterSolver) -> Result<Comparability> {
    let relaxed = tau_sweep(taus, |t| perimeter_relaxed(space, region.omega(), u, t, solver))?.value;
    let inner = tau_sweep(taus, |t| inner_perimeter(space, region, u, t, solver))?.value;
    let ratio = if relaxed > 0.0 { inner / relaxed } else { f64::INFINITY };
    Ok(Comparability { relaxed, inner, ratio })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinkowskiEstimate {
    /// `(R, μ(∪ B(a,R))/(2R))` per radius.
    pub per_radius: Vec<(f64, f64)>,
    pub liminf: f64,
}

/// Minkowski-content estimate of `A` from the measure of its `R`-neighbourhoods.
pub fn minkowski_content(space: &Space, a: &NodeSet, radii: &[f64]) -> Result<MinkowskiEstimate> {
    let min = 2.0 * space.resolution();
    if radii.is_empty() {
        return Err(invalid("at least one radius is required"));
    }
    if let Some(&r) = radii.iter().find(|&&r| r < min * (1.0 - 1e-12)) {
        return Err(Error::BelowResolution { radius: r, min });
    }
    let mut per_radius = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut hit = vec![false; space.len()];
        for x in a.iter() {
            space.for_each_in_ball(space.pos(x), r, |k, _| hit[k] = true);
        }
        let m: f64 = hit.iter().enumerate().filter(|(_, &h)| h).map(|(k, _)| space.measure(k)).sum();
        per_radius.push((r, m / (2.0 * r)));
    }
    let liminf = per_radius.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    Ok(MinkowskiEstimate { per_radius, liminf })
}

/// Greedy upper bound on the codimension-one Hausdorff content of `A` at
/// scale `R`: balls of radius `R` centred on members of `A` are picked by
/// largest uncovered count, and `Σ μ(B)/R` is returned. Greedy covers are not
/// optimal, so the value bounds the infimum from above.
pub fn hausdorff_content(space: &Space, a: &NodeSet, r: f64) -> Result<f64> {
    let min = 2.0 * space.resolution();
    if r < min * (1.0 - 1e-12) {
        return Err(Error::BelowResolution { radius: r, min });
    }
    let centers: Vec<usize> = a.iter().collect();
    if centers.is_empty() {
        return Ok(0.0);
    }
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(centers.len());
    let mut mass = Vec::with_capacity(centers.len());
    for &c in &centers {
        let mut mem = Vec::new();
        let mut m = 0.0;
        space.for_each_in_ball(space.pos(c), r, |k, _| {
            m += space.measure(k);
            if a.contains(k) {
                mem.push(k);
            }
        });
        members.push(mem);
        mass.push(m);
    }
    let mut covered = vec![false; space.len()];
    let mut heap: BinaryHeap<(usize, std::cmp::Reverse<usize>)> =
        members.iter().enumerate().map(|(k, m)| (m.len(), std::cmp::Reverse(k))).collect();
    let mut left = centers.len();
    let mut total = 0.0;
    while left > 0 {
        let Some((count, std::cmp::Reverse(k))) = heap.pop() else { break };
        let fresh = members[k].iter().filter(|&&x| !covered[x]).count();
        if fresh < count {
            // stale priority: reinsert with the current count
            if fresh > 0 {
                heap.push((fresh, std::cmp::Reverse(k)));
            }
            continue;
        }
        for &x in &members[k] {
            if !covered[x] {
                covered[x] = true;
                left -= 1;
            }
        }
        total += mass[k] / r;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    /// `(node, ratio)` for every boundary node with positive local content.
    pub values: Vec<(usize, f64)>,
    pub skipped: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

/// Local perimeter density along `∂E`: cut mass of the relaxed minimizer inside
/// `B(x,r)` divided by the unweighted Crofton length of the boundary of `E`
/// inside the same ball.
pub fn density_theta_estimate(space: &Space, e: &NodeSet, u: &NodeSet, tau: f64, r: f64, solver: &PerimeterSolver) -> Result<ThetaEstimate> {
    let est = perimeter_relaxed(space, e, u, tau, solver)?;
    let v = &est.minimizer;
    let links = space.links();
    let mut boundary = NodeSet::empty(space.len());
    for l in links {
        if u.contains(l.a) && u.contains(l.b) && e.contains(l.a) != e.contains(l.b) {
            for x in [l.a, l.b] {
                if e.contains(x) {
                    boundary.insert(x);
                }
            }
        }
    }
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    let mut in_ball = vec![false; space.len()];
    for x in boundary.iter() {
        let members = space.ball_at(space.pos(x), r);
        for &k in &members {
            in_ball[k] = true;
        }
        let (mut cut, mut len) = (0.0, 0.0);
        for &k in &members {
            for &id in space.incident(k) {
                let l = &links[id];
                // count each link once, from its first endpoint
                if l.a != k || !in_ball[l.b] || !u.contains(l.a) || !u.contains(l.b) {
                    continue;
                }
                cut += l.crofton * link_density(space, None, l, DensityRule::MinSide) * (v[l.a] - v[l.b]).abs();
                if e.contains(l.a) != e.contains(l.b) {
                    len += l.crofton;
                }
            }
        }
        for &k in &members {
            in_ball[k] = false;
        }
        if len > 0.0 {
            values.push((x, cut / len));
        } else {
            skipped.push(x);
        }
    }
    let min = values.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let max = values.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(ThetaEstimate { values, skipped, min, max })
}

#[derive(Debug, Clone, Serialize)]
pub struct RadonTrial {
    pub trial: usize,
    pub additivity_error: f64,
    pub subadditivity_excess: f64,
    pub monotonicity_excess: f64,
    pub inner_regularity_loss: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadonReport {
    pub trials: Vec<RadonTrial>,
    pub exterior_only_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RadonTolerances {
    pub additivity: f64,
    pub slack: f64,
    pub inner_regularity: f64,
}

impl Default for RadonTolerances {
    fn default() -> Self {
        Self { additivity: 1e-6, slack: 1e-3, inner_regularity: 0.05 }
    }
}

/// Nodes of `u` whose closed ball of radius `h` lies in `u`: the largest
/// node set whose one-spacing closure stays inside `u`.
pub fn shrink(space: &Space, u: &NodeSet) -> NodeSet {
    let r = space.resolution() * (1.0 + 1e-9);
    NodeSet::from_fn(space.len(), |i| {
        if !u.contains(i) {
            return false;
        }
        let mut inside = true;
        space.for_each_in_ball(space.pos(i), r, |k, _| inside &= u.contains(k));
        inside
    })
}

fn half_plane(space: &Space, angle: f64, offset: f64, below: bool) -> NodeSet {
    let (c, s) = (angle.cos(), angle.sin());
    NodeSet::from_fn(space.len(), |i| {
        let p = space.pos(i);
        let t = c * p[0] + s * p[1];
        if below {
            t < offset
        } else {
            t > offset
        }
    })
}

/// Randomized checks that `U ↦ P₊(Ω,U)` behaves like a Radon measure on open
/// node sets: additivity on separated sets, subadditivity, monotonicity and
/// inner regularity. Test sets are half-planes through the domain.
pub fn radon_property_suite(
    space: &Space,
    region: &Region,
    seed: u64,
    trials: usize,
    tau: f64,
    tol: RadonTolerances,
    solver: &PerimeterSolver,
) -> Result<RadonReport> {
    if trials == 0 {
        return Err(invalid("the suite needs at least one trial"));
    }
    let h = space.resolution();
    let pplus = |u: &NodeSet| inner_perimeter(space, region, u, tau, solver).map(|e| e.value);
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let c = rng.gen_range(-0.4..0.4);
        let gap = 3.0 * h + rng.gen_range(0.0..0.2);
        let u1 = half_plane(space, angle, c - 0.5 * gap, true);
        let u2 = half_plane(space, angle, c + 0.5 * gap, false);
        let (p1, p2, p12) = (pplus(&u1)?, pplus(&u2)?, pplus(&u1.union(&u2))?);
        let additivity_error = (p12 - p1 - p2).abs() / p12.max(f64::MIN_POSITIVE);

        let w1 = half_plane(space, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-0.4..0.4), true);
        let w2 = half_plane(space, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-0.4..0.4), true);
        let (q1, q2, q12) = (pplus(&w1)?, pplus(&w2)?, pplus(&w1.union(&w2))?);
        let scale = q12.max(q1).max(q2).max(f64::MIN_POSITIVE);
        let subadditivity_excess = (q12 - q1 - q2) / scale;
        let monotonicity_excess = (q1.max(q2) - q12) / scale;

        let v1 = shrink(space, &u1);
        let pv = pplus(&v1)?;
        let inner_regularity_loss = (p1 - pv) / p1.max(f64::MIN_POSITIVE);

        let passed = additivity_error <= tol.additivity
            && subadditivity_excess <= tol.slack
            && monotonicity_excess <= tol.slack
            && inner_regularity_loss <= tol.inner_regularity;
        out.push(RadonTrial { trial: t, additivity_error, subadditivity_excess, monotonicity_excess, inner_regularity_loss, passed });
    }
    let exterior_only_value = pplus(region.exterior())?;
    let passed = out.iter().all(|t| t.passed) && exterior_only_value == 0.0;
    Ok(RadonReport { trials: out, exterior_only_value, passed })
}
