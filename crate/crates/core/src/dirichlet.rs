//! Direct solvers for the two least-gradient Dirichlet problems, the domain
//! approximation pipelines built on p-harmonic continuation, and a randomized
//! least-gradient verifier.
//!
//! Both problems minimise a weighted L¹ energy over the values on the domain
//! with the data held fixed outside. They differ only in the density charged
//! on links that leave the domain:
//!
//! * (B) relaxes over the closure, so a jump at the boundary costs the cheaper
//!   side's density ([`DensityRule::MinSide`]);
//! * (T) pays `|v_i − f_j|` at the domain-side density ([`DensityRule::InteriorSide`]),
//!   with the one-cell value `v_i` standing in for the interior trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{link_density, range, DensityRule};
use crate::config::Tolerances;
use crate::cut::{Backend, L1Problem, SolveOptions};
use crate::error::{invalid, Error, Result};
use crate::nodeset::NodeSet;
use crate::pharmonic::{solve_p_on, SolverConfig};
use crate::space::{NodeClass, Region, Space};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    B,
    T,
}

impl Variant {
    pub fn interface_rule(self) -> DensityRule {
        match self {
            Variant::B => DensityRule::MinSide,
            Variant::T => DensityRule::InteriorSide,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct DirichletConfig {
    pub backend: Backend,
    /// Iteration cap of the first-order backend.
    pub max_iter: usize,
    pub tolerances: Tolerances,
    /// Settings of the p-harmonic solves inside the pipelines; `p` is overridden per stage.
    pub p_solver: SolverConfig,
}

impl Default for DirichletConfig {
    fn default() -> Self {
        Self { backend: Backend::MinCut, max_iter: 200_000, tolerances: Tolerances::default(), p_solver: SolverConfig::default() }
    }
}

impl DirichletConfig {
    pub fn with_backend(backend: Backend) -> Self {
        Self { backend, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletReport {
    pub variant: Variant,
    pub energy: f64,
    /// Certified lower bound on the optimal energy.
    pub lower_bound: f64,
    pub relative_gap: f64,
    pub backend: Backend,
    pub iterations: usize,
    pub converged: bool,
    /// No link leaves the domain, so the problem is unconstrained TV
    /// minimisation and every constant is optimal.
    pub interface_empty: bool,
}

#[derive(Debug, Clone)]
pub struct DirichletSolution {
    /// Minimiser on the domain, boundary data elsewhere.
    pub values: Vec<f64>,
    pub report: DirichletReport,
}

fn check_data(space: &Space, region: &Region, f: &[f64]) -> Result<()> {
    if f.len() != space.len() {
        return Err(invalid("boundary data must have one value per node"));
    }
    if region.omega().is_empty() {
        return Err(Error::EmptyRegion("the domain has no nodes".into()));
    }
    if (0..space.len()).any(|i| !region.is_omega(i) && !f[i].is_finite()) {
        return Err(invalid("boundary data must be finite outside the domain"));
    }
    Ok(())
}

/// Energy of `v` on the domain with `f` outside: interior links at the average
/// density, links leaving the domain at the variant's interface density.
pub fn energy(space: &Space, region: &Region, v: &[f64], f: &[f64], variant: Variant) -> f64 {
    let rule = variant.interface_rule();
    let val = |i: usize| if region.is_omega(i) { v[i] } else { f[i] };
    space
        .links()
        .iter()
        .filter(|l| region.is_omega(l.a) || region.is_omega(l.b))
        .map(|l| l.crofton * link_density(space, Some(region), l, rule) * (val(l.a) - val(l.b)).abs())
        .sum()
}

pub fn energy_b(space: &Space, region: &Region, v: &[f64], f: &[f64]) -> f64 {
    energy(space, region, v, f, Variant::B)
}

pub fn energy_t(space: &Space, region: &Region, v: &[f64], f: &[f64]) -> f64 {
    energy(space, region, v, f, Variant::T)
}

/// Boundary term of (T): `Σ c·ρ_interior·|v_i − f_j|` over links from a domain
/// node `i` to an outside node `j`.
pub fn trace_jump_energy(space: &Space, region: &Region, v: &[f64], f: &[f64]) -> f64 {
    space
        .links()
        .iter()
        .filter_map(|l| match (region.is_omega(l.a), region.is_omega(l.b)) {
            (true, false) => Some((l, l.a, l.b)),
            (false, true) => Some((l, l.b, l.a)),
            _ => None,
        })
        .map(|(l, i, j)| l.crofton * link_density(space, Some(region), l, DensityRule::InteriorSide) * (v[i] - f[j]).abs())
        .sum()
}

fn solve(space: &Space, region: &Region, f: &[f64], variant: Variant, cfg: &DirichletConfig) -> Result<DirichletSolution> {
    check_data(space, region, f)?;
    let n = space.len();
    let ids: Vec<usize> = region.omega().iter().collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in ids.iter().enumerate() {
        local[i] = k;
    }
    let rule = variant.interface_rule();
    let mut problem = L1Problem::new(ids.len());
    let mut interface = 0usize;
    for l in space.links() {
        let w = l.crofton * link_density(space, Some(region), l, rule);
        match (local[l.a], local[l.b]) {
            (usize::MAX, usize::MAX) => {}
            (a, usize::MAX) => {
                problem.add_anchor(a, f[l.b], w);
                interface += 1;
            }
            (usize::MAX, b) => {
                problem.add_anchor(b, f[l.a], w);
                interface += 1;
            }
            (a, b) => problem.add_pair(a, b, w),
        }
    }
    let opts = SolveOptions { gap_tol: cfg.tolerances.gap_tol, max_iter: cfg.max_iter, init: None };
    let sol = problem.solve(cfg.backend, &opts)?;
    let mut values = f.to_vec();
    for (k, &i) in ids.iter().enumerate() {
        values[i] = sol.values[k];
    }
    let report = DirichletReport {
        variant,
        energy: sol.energy,
        lower_bound: sol.lower_bound,
        relative_gap: sol.relative_gap(),
        backend: cfg.backend,
        iterations: sol.iterations,
        converged: sol.converged,
        interface_empty: interface == 0,
    };
    Ok(DirichletSolution { values, report })
}

pub fn solve_problem_t(space: &Space, region: &Region, f: &[f64], cfg: &DirichletConfig) -> Result<DirichletSolution> {
    solve(space, region, f, Variant::T, cfg)
}

pub fn solve_problem_b(space: &Space, region: &Region, f: &[f64], cfg: &DirichletConfig) -> Result<DirichletSolution> {
    solve(space, region, f, Variant::B, cfg)
}

pub fn solve_problem(space: &Space, region: &Region, f: &[f64], variant: Variant, cfg: &DirichletConfig) -> Result<DirichletSolution> {
    solve(space, region, f, variant, cfg)
}

#[derive(Debug, Clone)]
pub struct BackendComparison {
    pub min_cut: DirichletSolution,
    pub first_order: DirichletSolution,
    /// `|E_mc − E_fo| / max(E_mc, E_fo)`.
    pub relative_difference: f64,
    /// μ-weighted L¹ distance between the two minimisers on the domain.
    pub l1_distance: f64,
    /// Energies agree within `2·gap_tol`.
    pub agree: bool,
    /// Energies agree but the fields differ, which is allowed since
    /// minimisers need not be unique.
    pub degenerate_minimizer: bool,
}

/// Solves with both backends and compares the energies.
pub fn compare_backends(space: &Space, region: &Region, f: &[f64], variant: Variant, cfg: &DirichletConfig) -> Result<BackendComparison> {
    let mc = solve(space, region, f, variant, &DirichletConfig { backend: Backend::MinCut, ..cfg.clone() })?;
    let fo = solve(space, region, f, variant, &DirichletConfig { backend: Backend::FirstOrder, ..cfg.clone() })?;
    let (a, b) = (mc.report.energy, fo.report.energy);
    let scale = a.abs().max(b.abs());
    let relative_difference = if scale == 0.0 { 0.0 } else { (a - b).abs() / scale };
    let l1_distance: f64 = region.omega().iter().map(|i| space.measure(i) * (mc.values[i] - fo.values[i]).abs()).sum();
    let agree = relative_difference <= 2.0 * cfg.tolerances.gap_tol;
    let field_scale = space.measure_of(region.omega()) * range(f).max(f64::MIN_POSITIVE);
    let degenerate_minimizer = agree && l1_distance > cfg.tolerances.gap_tol * field_scale;
    Ok(BackendComparison { min_cut: mc, first_order: fo, relative_difference, l1_distance, agree, degenerate_minimizer })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Direction {
    Inner,
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineStage {
    pub width: f64,
    pub p: f64,
    /// Nodes of the approximating domain.
    pub nodes: usize,
    /// p-energy of the stage's solve on its own domain.
    pub energy_p: f64,
    /// Energy of the iterate for the target problem on the original domain.
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub direction: Direction,
    /// (B) for the outer pipeline, (T) for the inner one.
    pub variant: Variant,
    pub values: Vec<f64>,
    pub energy: f64,
    pub stages: Vec<PipelineStage>,
    pub iterates: Vec<Vec<f64>>,
}

/// Collar widths `8h, 4h, 2h`.
pub fn default_widths(h: f64) -> Vec<f64> {
    vec![8.0 * h, 4.0 * h, 2.0 * h]
}

pub const DEFAULT_PIPELINE_P: [f64; 3] = [1.2, 1.05, 1.02];

fn check_schedules(space: &Space, widths: &[f64], ps: &[f64]) -> Result<()> {
    if widths.is_empty() || widths.len() != ps.len() {
        return Err(invalid("the width and p schedules must be nonempty and of equal length"));
    }
    if widths.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(invalid("collar widths must be strictly decreasing"));
    }
    let min = 2.0 * space.resolution();
    if let Some(&w) = widths.iter().find(|&&w| w < min * (1.0 - 1e-9)) {
        return Err(Error::BelowResolution { radius: w, min });
    }
    if ps.windows(2).any(|w| !(w[0] > w[1])) || ps.iter().any(|&p| !(p > 1.0 && p <= 2.0)) {
        return Err(invalid("the p schedule must decrease within (1, 2]"));
    }
    Ok(())
}

fn run_pipeline(
    space: &Space,
    region: &Region,
    f: &[f64],
    widths: &[f64],
    ps: &[f64],
    cfg: &DirichletConfig,
    direction: Direction,
) -> Result<PipelineResult> {
    check_data(space, region, f)?;
    check_schedules(space, widths, ps)?;
    let variant = match direction {
        Direction::Outer => Variant::B,
        Direction::Inner => Variant::T,
    };
    let mut stages = Vec::with_capacity(widths.len());
    let mut iterates: Vec<Vec<f64>> = Vec::with_capacity(widths.len());
    for (&w, &p) in widths.iter().zip(ps) {
        let free = match direction {
            Direction::Outer => region.omega().union(&region.collar(w)),
            Direction::Inner => region.omega().difference(&region.inner_collar(w)),
        };
        if free.is_empty() {
            return Err(Error::EmptyRegion(format!("the inner approximant at width {w} is empty")));
        }
        let pc = SolverConfig { p, ..cfg.p_solver.clone() };
        let sol = solve_p_on(space, &free, f, &pc, iterates.last().map(Vec::as_slice))?;
        stages.push(PipelineStage {
            width: w,
            p,
            nodes: free.len(),
            energy_p: sol.report.energy,
            energy: energy(space, region, &sol.values, f, variant),
            iterations: sol.report.iterations,
            residual: sol.report.residual,
        });
        iterates.push(sol.values);
    }
    let values = iterates.last().cloned().expect("nonempty schedule");
    let energy = stages.last().expect("nonempty schedule").energy;
    Ok(PipelineResult { direction, variant, values, energy, stages, iterates })
}

/// p-harmonic solves on the domain enlarged by shrinking outer collars; the
/// result is scored with the (B) energy.
pub fn outer_approximation_pipeline(space: &Space, region: &Region, f: &[f64], widths: &[f64], ps: &[f64], cfg: &DirichletConfig) -> Result<PipelineResult> {
    run_pipeline(space, region, f, widths, ps, cfg, Direction::Outer)
}

/// p-harmonic solves on the domain minus shrinking inner collars, which take
/// their values from `f`; the result is scored with the (T) energy.
pub fn inner_approximation_pipeline(space: &Space, region: &Region, f: &[f64], widths: &[f64], ps: &[f64], cfg: &DirichletConfig) -> Result<PipelineResult> {
    run_pipeline(space, region, f, widths, ps, cfg, Direction::Inner)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TestClass {
    /// Perturbations whose support and its link neighbourhood stay off the boundary layer.
    CompactSupport,
    /// Perturbations vanishing on the boundary layer.
    ZeroTrace,
    /// As `ZeroTrace`, but free next to slit nodes.
    WeakZeroTrace,
}

/// Link-hop distance from every node to the complement of the domain.
pub fn hops_to_complement(space: &Space, region: &Region) -> Vec<usize> {
    let n = space.len();
    let mut hop = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for i in 0..n {
        if !region.is_omega(i) {
            hop[i] = 0;
            queue.push_back(i);
        }
    }
    let links = space.links();
    while let Some(i) = queue.pop_front() {
        for &k in space.incident(i) {
            let j = links[k].other(i);
            if hop[j] == usize::MAX {
                hop[j] = hop[i] + 1;
                queue.push_back(j);
            }
        }
    }
    hop
}

/// Nodes a perturbation of the given class may change.
pub fn perturbation_support(space: &Space, region: &Region, class: TestClass) -> NodeSet {
    let hop = hops_to_complement(space, region);
    let links = space.links();
    NodeSet::from_fn(space.len(), |i| match class {
        TestClass::CompactSupport => hop[i] >= 3 && hop[i] != usize::MAX,
        TestClass::ZeroTrace => hop[i] >= 2 && hop[i] != usize::MAX,
        TestClass::WeakZeroTrace => {
            (hop[i] >= 2 && hop[i] != usize::MAX)
                || (hop[i] == 1 && space.incident(i).iter().all(|&k| region.class(links[k].other(i)) != NodeClass::Exterior))
        }
    })
    .intersection(region.omega())
}

/// Total variation inside the domain, links leaving it excluded.
pub fn domain_tv(space: &Space, region: &Region, u: &[f64]) -> f64 {
    space
        .links()
        .iter()
        .filter(|l| region.is_omega(l.a) && region.is_omega(l.b))
        .map(|l| l.crofton * link_density(space, Some(region), l, DensityRule::Average) * (u[l.a] - u[l.b]).abs())
        .sum()
}

/// `TV_Ω(u + ψ) − TV_Ω(u)`, summed only over links where ψ is nonzero at an endpoint.
pub fn perturbation_delta(space: &Space, region: &Region, u: &[f64], psi: &[f64]) -> f64 {
    space
        .links()
        .iter()
        .filter(|l| region.is_omega(l.a) && region.is_omega(l.b) && (psi[l.a] != 0.0 || psi[l.b] != 0.0))
        .map(|l| {
            let w = l.crofton * link_density(space, Some(region), l, DensityRule::Average);
            w * ((u[l.a] + psi[l.a] - u[l.b] - psi[l.b]).abs() - (u[l.a] - u[l.b]).abs())
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifierReport {
    pub test_class: TestClass,
    pub trials: usize,
    /// Smallest energy change over the random trials; negative if some
    /// perturbation lowered the variation.
    pub worst_delta: f64,
    /// Best decrease found by the convex solve over the whole class.
    pub adversarial_improvement: Option<f64>,
    #[serde(skip)]
    pub adversarial_field: Option<Vec<f64>>,
    pub support_size: usize,
    pub slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct VerifyOptions {
    pub class: TestClass,
    pub trials: usize,
    pub seed: u64,
    pub adversarial: bool,
    pub tolerances: Tolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { class: TestClass::CompactSupport, trials: 200, seed: 0, adversarial: false, tolerances: Tolerances::default() }
    }
}

fn random_perturbation(space: &Space, region: &Region, support: &[usize], amp: f64, class: TestClass, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h = space.resolution();
    let mut psi = vec![0.0; space.len()];
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &i in support {
        let p = space.pos(i);
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(2.0 * h);
    let bumps = rng.gen_range(1..=3);
    for _ in 0..bumps {
        let c = space.pos(support[rng.gen_range(0..support.len())]);
        let r = rng.gen_range(2.0 * h..=(0.5 * span).max(2.0 * h));
        let a = amp * rng.gen_range(-1.0..=1.0);
        space.for_each_in_ball(c, r, |i, d2| {
            let s = 1.0 - d2 / (r * r);
            psi[i] += a * s * s;
        });
    }
    let damp = 3.0 * h;
    let dist = region.distance_to_complement();
    for (i, v) in psi.iter_mut().enumerate() {
        if !support.binary_search(&i).is_ok() {
            *v = 0.0;
        } else if class != TestClass::CompactSupport {
            // fade out towards the boundary so the trace stays zero
            *v *= (dist[i] / damp).min(1.0);
        }
    }
    psi
}

/// Random and optionally adversarial tests of `TV_Ω(u) ≤ TV_Ω(u + ψ)` over
/// perturbations `ψ` of the given class.
pub fn verify_least_gradient(space: &Space, region: &Region, u: &[f64], opts: &VerifyOptions) -> Result<VerifierReport> {
    if u.len() != space.len() {
        return Err(invalid("the field must have one value per node"));
    }
    let support_set = perturbation_support(space, region, opts.class);
    if support_set.is_empty() {
        return Err(Error::EmptyRegion(format!("the domain is too small for {:?} perturbations", opts.class)));
    }
    let support: Vec<usize> = support_set.iter().collect();
    let omega_vals: Vec<f64> = region.omega().iter().map(|i| u[i]).collect();
    let spread = range(&omega_vals);
    let amp = if spread > 0.0 { 0.5 * spread } else { 0.5 };
    let mut worst = if opts.trials == 0 { 0.0 } else { f64::INFINITY };
    for t in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(t as u64);
        let psi = random_perturbation(space, region, &support, amp, opts.class, &mut rng);
        worst = worst.min(perturbation_delta(space, region, u, &psi));
    }
    let slack = opts.tolerances.verifier_slack();
    let (adversarial_improvement, adversarial_field) = if opts.adversarial {
        let (gain, field) = adversarial(space, region, u, &support_set)?;
        (Some(gain), Some(field))
    } else {
        (None, None)
    };
    let passed = worst >= -slack && adversarial_improvement.map_or(true, |g| g <= slack);
    Ok(VerifierReport {
        test_class: opts.class,
        trials: opts.trials,
        worst_delta: worst,
        adversarial_improvement,
        adversarial_field,
        support_size: support.len(),
        slack,
        passed,
    })
}

/// Exact minimisation of `TV_Ω` over fields that agree with `u` off `support`.
fn adversarial(space: &Space, region: &Region, u: &[f64], support: &NodeSet) -> Result<(f64, Vec<f64>)> {
    let ids: Vec<usize> = support.iter().collect();
    let mut local = vec![usize::MAX; space.len()];
    for (k, &i) in ids.iter().enumerate() {
        local[i] = k;
    }
    let mut problem = L1Problem::new(ids.len());
    for l in space.links() {
        if !(region.is_omega(l.a) && region.is_omega(l.b)) {
            continue;
        }
        let w = l.crofton * link_density(space, Some(region), l, DensityRule::Average);
        match (local[l.a], local[l.b]) {
            (usize::MAX, usize::MAX) => {}
            (a, usize::MAX) => problem.add_anchor(a, u[l.b], w),
            (usize::MAX, b) => problem.add_anchor(b, u[l.a], w),
            (a, b) => problem.add_pair(a, b, w),
        }
    }
    let sol = problem.solve(Backend::MinCut, &SolveOptions::default())?;
    let mut psi = vec![0.0; space.len()];
    for (k, &i) in ids.iter().enumerate() {
        psi[i] = sol.values[k] - u[i];
    }
    let gain = -perturbation_delta(space, region, u, &psi);
    let field = u.iter().zip(&psi).map(|(a, b)| a + b).collect();
    Ok((gain, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid, GridOptions, MeasureWeights, Shape};

    #[test]
    fn zero_perturbation_has_zero_delta() {
        let (s, r) = build_grid(&Shape::Disk { r: 1.0 }, 0.125, &MeasureWeights::Uniform, &GridOptions::default()).unwrap();
        let u: Vec<f64> = (0..s.len()).map(|i| s.pos(i)[0].sin()).collect();
        assert_eq!(perturbation_delta(&s, &r, &u, &vec![0.0; s.len()]), 0.0);
    }

    #[test]
    fn supports_are_nested() {
        let (s, r) = build_grid(&Shape::SlitDisk { slits: vec![[[-1.0, 0.0], [0.0, 0.0]]] }, 1.0 / 16.0, &MeasureWeights::Uniform, &GridOptions::default()).unwrap();
        let c = perturbation_support(&s, &r, TestClass::CompactSupport);
        let z = perturbation_support(&s, &r, TestClass::ZeroTrace);
        let w = perturbation_support(&s, &r, TestClass::WeakZeroTrace);
        assert!(c.is_subset(&z) && z.is_subset(&w) && w.is_subset(r.omega()));
        assert!(w.len() > z.len());
    }
}
