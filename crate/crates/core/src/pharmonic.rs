//! Graph p-Dirichlet problems and the continuation `p → 1`.
//!
//! The discrete energy is `E_p(u) = (1/κ_p) Σ_l W_l d_l |Δ_l u / d_l|^p` with
//! `W_l` the Crofton weight times the link density and `κ_p = ½∫_0^π |cos φ|^p dφ`,
//! the normalisation that makes `E_p` of a unit-slope affine field equal the
//! measure of the region. `E_1` is the edge total variation.
//!
//! Minimisation runs damped Newton on the smoothed energy with
//! `|t|^p ≈ (t² + ε²)^{p/2}` over a decreasing ε schedule. The result is clamped
//! to the range of the boundary data, which never increases the energy.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Side};
use serde::{Deserialize, Serialize};

use crate::calculus::{link_density, total_variation, DensityRule, LinkSelection};
use crate::error::{invalid, Error, Result};
use crate::nodeset::NodeSet;
use crate::space::{Region, Space};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SolverConfig {
    pub p: f64,
    pub epsilon_schedule: Vec<f64>,
    /// Newton iterations allowed per smoothing stage.
    pub max_iterations: usize,
    pub residual_tol: f64,
    pub seed: u64,
    pub rule: DensityRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            epsilon_schedule: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            max_iterations: 200,
            residual_tol: 1e-6,
            seed: 0,
            rule: DensityRule::Average,
        }
    }
}

impl SolverConfig {
    pub fn with_p(p: f64) -> Self {
        Self { p, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must exceed 1, got {}; use the direct solvers for p = 1", self.p)));
        }
        if self.epsilon_schedule.is_empty() {
            return Err(invalid("the smoothing schedule is empty"));
        }
        if self.epsilon_schedule.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(invalid("the smoothing schedule must be strictly decreasing"));
        }
        if self.epsilon_schedule.iter().any(|&e| !(e >= 1e-12)) {
            return Err(invalid("smoothing parameters must be at least 1e-12"));
        }
        if !(self.residual_tol > 0.0) {
            return Err(invalid("residual tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("at least one iteration per stage is required"));
        }
        Ok(())
    }
}

/// `κ_p = ½ ∫_0^π |cos φ|^p dφ = √π Γ((p+1)/2) / (2 Γ(p/2 + 1))`.
pub fn kappa_p(p: f64) -> f64 {
    std::f64::consts::PI.sqrt() * libm::tgamma(0.5 * (p + 1.0)) / (2.0 * libm::tgamma(0.5 * p + 1.0))
}

/// `E_p` of `u` over the selected links, using the average density rule.
pub fn energy(space: &Space, u: &[f64], p: f64, sel: LinkSelection<'_>) -> f64 {
    let links = space.links();
    let k = kappa_p(p);
    crate::calculus::selected_links(space, sel)
        .into_iter()
        .map(|(id, share)| {
            let l = &links[id];
            let t = (u[l.a] - u[l.b]).abs() / l.len;
            share * l.crofton * link_density(space, None, l, DensityRule::Average) * l.len * t.powf(p)
        })
        .sum::<f64>()
        / k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Unsmoothed p-energy over the links touching the free nodes.
    pub energy: f64,
    /// Edge total variation over the same links.
    pub tv: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub epsilon: f64,
    pub iteration: usize,
    /// Smoothed energy after the step.
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct PSolution {
    pub values: Vec<f64>,
    pub report: EnergyReport,
    pub log: Vec<IterationRecord>,
}

struct ActiveLink {
    a: usize,
    b: usize,
    // local indices, usize::MAX for fixed endpoints
    la: usize,
    lb: usize,
    w: f64,
    d: f64,
    // position of the off-diagonal entry in the lower-triangular pattern
    slot: usize,
}

struct Pattern {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    diag: Vec<usize>,
}

fn build_pattern(m: usize, links: &mut [ActiveLink]) -> Pattern {
    let mut cols: Vec<Vec<usize>> = (0..m).map(|j| vec![j]).collect();
    for l in links.iter() {
        if l.la != usize::MAX && l.lb != usize::MAX {
            let (r, c) = (l.la.max(l.lb), l.la.min(l.lb));
            cols[c].push(r);
        }
    }
    let mut col_ptr = Vec::with_capacity(m + 1);
    let mut row_idx = Vec::new();
    let mut diag = Vec::with_capacity(m);
    col_ptr.push(0);
    for c in cols.iter_mut() {
        c.sort_unstable();
        c.dedup();
        diag.push(row_idx.len());
        row_idx.extend_from_slice(c);
        col_ptr.push(row_idx.len());
    }
    for l in links.iter_mut() {
        if l.la != usize::MAX && l.lb != usize::MAX {
            let (r, c) = (l.la.max(l.lb), l.la.min(l.lb));
            let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            l.slot = col_ptr[c] + rows.binary_search(&r).expect("entry in pattern");
        }
    }
    Pattern { col_ptr, row_idx, diag }
}

struct Problem<'a> {
    links: Vec<ActiveLink>,
    free: Vec<usize>,
    u: Vec<f64>,
    lo: f64,
    hi: f64,
    p: f64,
    inv_kappa: f64,
    scale: Vec<f64>,
    pattern: Pattern,
    _space: &'a Space,
}

impl Problem<'_> {
    fn energy_at(&self, u: &[f64], eps: f64) -> f64 {
        let (p, e2) = (self.p, eps * eps);
        self.links
            .iter()
            .map(|l| {
                let t = (u[l.a] - u[l.b]) / l.d;
                l.w * l.d * (t * t + e2).powf(0.5 * p)
            })
            .sum::<f64>()
            * self.inv_kappa
    }

    /// Gradient and system matrix at `self.u`: the Newton Hessian, or the
    /// IRLS majoriser when `irls` is set.
    fn derivatives(&self, eps: f64, irls: bool, grad: &mut [f64], vals: &mut [f64]) {
        let (p, e2) = (self.p, eps * eps);
        grad.fill(0.0);
        vals.fill(0.0);
        let c = p * self.inv_kappa;
        for l in &self.links {
            let t = (self.u[l.a] - self.u[l.b]) / l.d;
            let s = t * t + e2;
            let g = c * l.w * t * s.powf(0.5 * p - 1.0);
            let hess = if irls {
                c * l.w / l.d * s.powf(0.5 * p - 1.0)
            } else {
                c * l.w / l.d * s.powf(0.5 * p - 2.0) * ((p - 1.0) * t * t + e2)
            };
            if l.la != usize::MAX {
                grad[l.la] += g;
                vals[self.pattern.diag[l.la]] += hess;
            }
            if l.lb != usize::MAX {
                grad[l.lb] -= g;
                vals[self.pattern.diag[l.lb]] += hess;
            }
            if l.la != usize::MAX && l.lb != usize::MAX {
                vals[l.slot] -= hess;
            }
        }
    }

    fn gradient_at(&self, u: &[f64], eps: f64, grad: &mut [f64]) {
        let (p, e2) = (self.p, eps * eps);
        let c = p * self.inv_kappa;
        grad.fill(0.0);
        for l in &self.links {
            let t = (u[l.a] - u[l.b]) / l.d;
            let g = c * l.w * t * (t * t + e2).powf(0.5 * p - 1.0);
            if l.la != usize::MAX {
                grad[l.la] += g;
            }
            if l.lb != usize::MAX {
                grad[l.lb] -= g;
            }
        }
    }

    fn residual(&self, grad: &[f64]) -> f64 {
        grad.iter().zip(&self.scale).map(|(g, s)| g.abs() / s).fold(0.0, f64::max)
    }
}

fn assemble<'a>(space: &'a Space, free: &NodeSet, f: &[f64], cfg: &SolverConfig, init: Option<&[f64]>) -> Result<Problem<'a>> {
    cfg.validate()?;
    let n = space.len();
    if f.len() != n {
        return Err(invalid("boundary data must have one value per node"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(invalid("boundary data must be finite"));
    }
    let fixed_mass: f64 = (0..n).filter(|&i| !free.contains(i)).map(|i| space.measure(i)).sum();
    if !(fixed_mass > 0.0) {
        return Err(invalid("the complement of the free set must have positive measure"));
    }
    let free_ids: Vec<usize> = free.iter().collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in free_ids.iter().enumerate() {
        local[i] = k;
    }
    let m = free_ids.len();
    let mut links = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut scale = vec![0.0; m];
    let inv_kappa = 1.0 / kappa_p(cfg.p);
    for l in space.links() {
        let (la, lb) = (local[l.a], local[l.b]);
        if la == usize::MAX && lb == usize::MAX {
            continue;
        }
        let w = l.crofton * link_density(space, None, l, cfg.rule);
        for (lx, other) in [(la, l.b), (lb, l.a)] {
            if lx != usize::MAX {
                scale[lx] += cfg.p * inv_kappa * w;
                if local[other] == usize::MAX {
                    lo = lo.min(f[other]);
                    hi = hi.max(f[other]);
                }
            }
        }
        links.push(ActiveLink { a: l.a, b: l.b, la, lb, w, d: l.len, slot: usize::MAX });
    }
    if m > 0 && !lo.is_finite() {
        return Err(invalid("the free set has no links to fixed nodes"));
    }
    let mut u: Vec<f64> = match init {
        Some(x) if x.len() == n => x.to_vec(),
        Some(_) => return Err(invalid("initial guess must have one value per node")),
        None => f.to_vec(),
    };
    for (i, v) in u.iter_mut().enumerate() {
        if local[i] == usize::MAX {
            *v = f[i];
        } else if lo.is_finite() {
            *v = v.clamp(lo, hi);
        }
    }
    let pattern = build_pattern(m, &mut links);
    for s in scale.iter_mut() {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    Ok(Problem { links, free: free_ids, u, lo, hi, p: cfg.p, inv_kappa, scale, pattern, _space: space })
}

/// Minimise the p-energy over the values on `free`, with `u = f` elsewhere.
pub fn solve_p_on(space: &Space, free: &NodeSet, f: &[f64], cfg: &SolverConfig, init: Option<&[f64]>) -> Result<PSolution> {
    let mut prob = assemble(space, free, f, cfg, init)?;
    let (log, residual, iterations, converged) = newton(&mut prob, cfg)?;

    let report = EnergyReport {
        energy: prob.energy_at(&prob.u, 0.0),
        tv: total_variation(space, &prob.u, LinkSelection::Touching(free), cfg.rule, None),
        residual,
        iterations,
        converged,
    };
    if !converged {
        return Err(Error::NotConverged { iterations, residual });
    }
    Ok(PSolution { values: prob.u, report, log })
}

fn factorize(
    sym: &mut Option<SymbolicLlt<usize>>,
    pattern: &Pattern,
    m: usize,
    vals: &[f64],
) -> Result<Llt<usize, f64>> {
    let symbolic = SymbolicSparseColMatRef::new_checked(m, m, &pattern.col_ptr, None, &pattern.row_idx);
    if sym.is_none() {
        *sym = Some(SymbolicLlt::try_new(symbolic, Side::Lower).map_err(|e| invalid(format!("symbolic factorization failed: {e:?}")))?);
    }
    let mat = SparseColMatRef::new(symbolic, vals);
    Llt::try_new_with_symbolic(sym.clone().expect("symbolic factor"), mat, Side::Lower)
        .map_err(|e| invalid(format!("Hessian factorization failed: {e:?}")))
}

struct Workspace {
    grad: Vec<f64>,
    vals: Vec<f64>,
    dir: Vec<f64>,
    trial: Vec<f64>,
    sym: Option<SymbolicLlt<usize>>,
}

impl Workspace {
    /// Solves `M d = −g` for the current matrix values.
    fn direction(&mut self, pattern: &Pattern) -> Result<()> {
        let m = self.dir.len();
        let llt = match factorize(&mut self.sym, pattern, m, &self.vals) {
            Ok(l) => l,
            Err(_) => {
                // retry on a slightly shifted matrix
                let shift = 1e-10 * pattern.diag.iter().map(|&k| self.vals[k]).fold(0.0, f64::max);
                for &k in &pattern.diag {
                    self.vals[k] += shift;
                }
                factorize(&mut self.sym, pattern, m, &self.vals)?
            }
        };
        for (d, g) in self.dir.iter_mut().zip(&self.grad) {
            *d = -g;
        }
        llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut self.dir, m, 1));
        Ok(())
    }
}

impl Problem<'_> {
    /// The full step along `ws.dir`, if its energy change is within rounding
    /// of `f0`; returns the trial energy and residual.
    fn full_step_in_noise(&self, ws: &mut Workspace, eps: f64, f0: f64) -> Option<(f64, f64)> {
        ws.trial.copy_from_slice(&self.u);
        for (k, &i) in self.free.iter().enumerate() {
            ws.trial[i] = self.u[i] + ws.dir[k];
        }
        let f1 = self.energy_at(&ws.trial, eps);
        if (f1 - f0).abs() > 1e-13 * f0.abs() {
            return None;
        }
        let mut g = vec![0.0; self.free.len()];
        self.gradient_at(&ws.trial, eps, &mut g);
        Some((f1, self.residual(&g)))
    }

    /// Armijo backtracking along `ws.dir` from `self.u`; leaves the accepted
    /// point in `ws.trial` and returns its energy and step.
    fn line_search(&self, ws: &mut Workspace, eps: f64, f0: f64) -> Option<(f64, f64)> {
        let slope: f64 = ws.dir.iter().zip(&ws.grad).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            return None;
        }
        let mut step = 1.0;
        for _ in 0..60 {
            ws.trial.copy_from_slice(&self.u);
            for (k, &i) in self.free.iter().enumerate() {
                ws.trial[i] = self.u[i] + step * ws.dir[k];
            }
            let f1 = self.energy_at(&ws.trial, eps);
            if f1 <= f0 + 1e-4 * step * slope {
                return Some((f1, step));
            }
            step *= 0.5;
        }
        None
    }
}

/// Iterations without halving the residual before a stage is abandoned.
const STALL_LIMIT: usize = 25;

fn newton(prob: &mut Problem<'_>, cfg: &SolverConfig) -> Result<(Vec<IterationRecord>, f64, usize, bool)> {
    let m = prob.free.len();
    let mut log = Vec::new();
    if m == 0 {
        return Ok((log, 0.0, 0, true));
    }
    let mut ws = Workspace {
        grad: vec![0.0; m],
        vals: vec![0.0; prob.pattern.row_idx.len()],
        dir: vec![0.0; m],
        trial: prob.u.clone(),
        sym: None,
    };
    let mut total = 0;
    let mut residual = f64::INFINITY;
    let last = cfg.epsilon_schedule.len() - 1;
    for (stage, &eps) in cfg.epsilon_schedule.iter().enumerate() {
        // intermediate stages only need to land near the next basin
        let tol = if stage == last { cfg.residual_tol } else { cfg.residual_tol.max(eps) };
        let mut f0 = prob.energy_at(&prob.u, eps);
        let mut stage_done = false;
        let (mut best_res, mut since_best) = (f64::INFINITY, 0);
        for it in 0..cfg.max_iterations {
            prob.derivatives(eps, false, &mut ws.grad, &mut ws.vals);
            residual = prob.residual(&ws.grad);
            if residual <= tol {
                stage_done = true;
                break;
            }
            if residual < 0.5 * best_res {
                (best_res, since_best) = (residual, 0);
            } else {
                since_best += 1;
                if since_best >= STALL_LIMIT {
                    break;
                }
            }
            total += 1;
            ws.direction(&prob.pattern)?;
            if let Some((f1, r1)) = prob.full_step_in_noise(&mut ws, eps, f0) {
                if r1 < residual {
                    // energy differences are below rounding here, so progress
                    // is judged by the stationarity defect instead
                    std::mem::swap(&mut prob.u, &mut ws.trial);
                    f0 = f1;
                    log.push(IterationRecord { epsilon: eps, iteration: it, energy: f0, residual, step: 1.0 });
                    continue;
                }
            }
            let newton = prob.line_search(&mut ws, eps, f0);
            let mut best = newton.map(|(f1, step)| (f1, step, ws.trial.clone()));
            if prob.p < 2.0 || !matches!(newton, Some((_, s)) if s == 1.0) {
                // for p < 2 Newton underestimates curvature away from the
                // smoothing scale, while the reweighted quadratic majorises the energy
                prob.derivatives(eps, true, &mut ws.grad, &mut ws.vals);
                ws.direction(&prob.pattern)?;
                if let Some((f1, step)) = prob.line_search(&mut ws, eps, f0) {
                    if best.as_ref().map_or(true, |b| f1 < b.0) {
                        best = Some((f1, step, ws.trial.clone()));
                    }
                }
            }
            let Some((f1, step, u1)) = best else {
                log.push(IterationRecord { epsilon: eps, iteration: it, energy: f0, residual, step: 0.0 });
                break;
            };
            prob.u = u1;
            f0 = f1;
            log.push(IterationRecord { epsilon: eps, iteration: it, energy: f0, residual, step });
        }
        if stage == last {
            // the minimiser obeys the maximum principle, and clamping cannot raise the energy
            for &i in &prob.free {
                prob.u[i] = prob.u[i].clamp(prob.lo, prob.hi);
            }
            prob.gradient_at(&prob.u, eps, &mut ws.grad);
            residual = prob.residual(&ws.grad);
            stage_done = residual <= tol;
        } else if !stage_done {
            prob.gradient_at(&prob.u, eps, &mut ws.grad);
            residual = prob.residual(&ws.grad);
            stage_done = residual <= tol;
        }
        if stage == last {
            return Ok((log, residual, total, stage_done));
        }
    }
    unreachable!("schedule is nonempty")
}

/// p-harmonic extension of `f` into the domain of `region`.
pub fn solve_p_dirichlet(space: &Space, region: &Region, f: &[f64], cfg: &SolverConfig) -> Result<PSolution> {
    if region.omega().is_empty() {
        return Err(Error::EmptyRegion("the domain has no nodes".into()));
    }
    solve_p_on(space, region.omega(), f, cfg, None)
}

/// Energies are over the domain cells, see [`LinkSelection::Cells`].
#[derive(Debug, Clone, Serialize)]
pub struct ContinuationStep {
    pub p: f64,
    pub energy_p: f64,
    pub tv: f64,
    /// μ-weighted L¹ distance to the previous step's field (0 for the first step).
    pub l1_delta: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `TV ≤ μ(Ω)^{1−1/p} E_p^{1/p}` on the domain cells.
    pub holder_ok: bool,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub p_sequence: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub steps: Vec<ContinuationStep>,
}

impl ContinuationResult {
    pub fn limit_field(&self) -> &[f64] {
        self.fields.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(E_p, TV)` per step.
    pub fn energy_trace(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|s| (s.energy_p, s.tv)).collect()
    }

    pub fn l1_deltas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.l1_delta).collect()
    }
}

pub const DEFAULT_P_SCHEDULE: [f64; 6] = [1.5, 1.25, 1.1, 1.05, 1.02, 1.01];

/// Solve on `free` for every p in the schedule, warm-starting each solve from the previous one.
pub fn continuation_on(space: &Space, free: &NodeSet, f: &[f64], schedule: &[f64], cfg: &SolverConfig) -> Result<ContinuationResult> {
    if schedule.is_empty() {
        return Err(invalid("the p schedule is empty"));
    }
    if schedule.windows(2).any(|w| !(w[0] > w[1])) || schedule.iter().any(|&p| !(p > 1.0 && p <= 2.0)) {
        return Err(invalid("the p schedule must decrease within (1, 2]"));
    }
    let mu: f64 = space.measure_of(free);
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(schedule.len());
    let mut steps = Vec::with_capacity(schedule.len());
    for &p in schedule {
        let c = SolverConfig { p, ..cfg.clone() };
        let sol = solve_p_on(space, free, f, &c, fields.last().map(Vec::as_slice))?;
        let cells = LinkSelection::Cells(free);
        let ep = energy(space, &sol.values, p, cells);
        let tv = total_variation(space, &sol.values, cells, DensityRule::Average, None);
        let l1_delta = match fields.last() {
            Some(prev) => free.iter().map(|i| space.measure(i) * (sol.values[i] - prev[i]).abs()).sum(),
            None => 0.0,
        };
        let bound = mu.powf(1.0 - 1.0 / p) * ep.powf(1.0 / p);
        steps.push(ContinuationStep {
            p,
            energy_p: ep,
            tv,
            l1_delta,
            iterations: sol.report.iterations,
            residual: sol.report.residual,
            holder_ok: tv <= bound * (1.0 + 1e-9),
        });
        fields.push(sol.values);
    }
    Ok(ContinuationResult { p_sequence: schedule.to_vec(), fields, steps })
}

pub fn continuation_p_to_1(space: &Space, region: &Region, f: &[f64], schedule: &[f64], cfg: &SolverConfig) -> Result<ContinuationResult> {
    if region.omega().is_empty() {
        return Err(Error::EmptyRegion("the domain has no nodes".into()));
    }
    continuation_on(space, region.omega(), f, schedule, cfg)
}
