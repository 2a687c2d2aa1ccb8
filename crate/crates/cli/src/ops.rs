//! The operations behind both the subcommands and scenario tasks. Each one
//! returns report rows and writes its field dumps and side files into `out`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use leastgrad::config::Tolerances;
use leastgrad::cut::Backend;
use leastgrad::dirichlet::{
    default_widths, inner_approximation_pipeline, outer_approximation_pipeline, solve_problem, verify_least_gradient, DirichletConfig, Direction,
    TestClass, Variant, VerifyOptions, DEFAULT_PIPELINE_P,
};
use leastgrad::io::{write_covering_json, write_field_csv};
use leastgrad::perimeter::{inner_perimeter, kappa_sweep, perimeter_relaxed, tau_sweep, PerimeterSolver};
use leastgrad::pharmonic::{continuation_p_to_1, solve_p_dirichlet, SolverConfig};
use leastgrad::space::{MeasureWeights, Region, Shape, Space};
use leastgrad::whitney::{partition_of_unity, verify_dc_bounds, whitney_cover};
use leastgrad::NodeSet;

use crate::common::{grid, num, outside_density, write_csv, DataSpec, Row};

/// Expected value of a report row with its relative tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub value: f64,
    pub tol: f64,
}

pub struct Instance {
    pub shape: Shape,
    pub h: f64,
    pub weights: MeasureWeights,
    pub tolerances: Tolerances,
    pub space: Space,
    pub region: Region,
    /// Directory relative data paths are resolved against.
    pub base: PathBuf,
}

impl Instance {
    pub fn new(shape: Shape, h: f64, weights: MeasureWeights, tolerances: Tolerances, base: PathBuf) -> Result<Self> {
        let (space, region) = grid(&shape, h, &weights, tolerances.null_density)?;
        Ok(Self { shape, h, weights, tolerances, space, region, base })
    }

    pub fn data(&self, data: &DataSpec) -> Result<Vec<f64>> {
        data.field(&self.space, &self.shape, &self.base)
    }

    pub fn alpha(&self) -> f64 {
        outside_density(&self.weights)
    }

    fn dump(&self, out: &Path, name: &str, values: &[f64]) -> Result<()> {
        let path = out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_field_csv(&self.space, values, BufWriter::new(file))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerimeterExpect {
    pub relaxed: Option<Expect>,
    pub inner: Option<Expect>,
    pub ratio: Option<Expect>,
}

impl PerimeterExpect {
    /// Known values for centred disks: `P = 2πr·min(1, α)` and `P₊ = 2πr`.
    pub fn known(inst: &Instance) -> Self {
        match inst.shape {
            Shape::Disk { r } => {
                let m = inst.alpha().min(1.0);
                Self {
                    relaxed: Some(Expect { value: 2.0 * PI * r * m, tol: 0.05 }),
                    inner: Some(Expect { value: 2.0 * PI * r, tol: 0.05 }),
                    ratio: Some(Expect { value: 1.0 / m, tol: 0.1 }),
                }
            }
            _ => Self::default(),
        }
    }

    fn or(self, other: Self) -> Self {
        Self { relaxed: self.relaxed.or(other.relaxed), inner: self.inner.or(other.inner), ratio: self.ratio.or(other.ratio) }
    }
}

fn row(q: &str, param: String, value: f64, e: Option<Expect>) -> Row {
    match e {
        Some(e) => Row::expect(q, param, value, e.value, e.tol),
        None => Row::info(q, param, value),
    }
}

/// `P` and `P₊` of the domain over the whole space with a τ-sweep, and an optional κ-sweep.
pub fn perimeter(inst: &Instance, taus: &[f64], kappas: &[f64], expect: PerimeterExpect) -> Result<Vec<Row>> {
    let (s, r) = (&inst.space, &inst.region);
    let all = NodeSet::full(s.len());
    let solver = PerimeterSolver { options: leastgrad::cut::SolveOptions { gap_tol: inst.tolerances.gap_tol, ..Default::default() }, ..Default::default() };
    let expect = expect.or(PerimeterExpect::known(inst));
    let p = tau_sweep(taus, |t| perimeter_relaxed(s, r.omega(), &all, t, &solver))?;
    let q = tau_sweep(taus, |t| inner_perimeter(s, r, &all, t, &solver))?;
    let mut rows = Vec::new();
    for &(t, v) in &p.sweep {
        rows.push(Row::info("P", format!("tau={t}"), v));
    }
    for &(t, v) in &q.sweep {
        rows.push(Row::info("P+", format!("tau={t}"), v));
    }
    rows.push(row("P", format!("tau={}", p.tau), p.value, expect.relaxed));
    rows.push(row("P+", format!("tau={}", q.tau), q.value, expect.inner));
    let ratio = if p.value > 0.0 { q.value / p.value } else { f64::INFINITY };
    rows.push(row("P+/P", format!("tau={}", p.tau), ratio, expect.ratio));
    if !kappas.is_empty() {
        let sw = kappa_sweep(s, r, kappas, p.tau, &solver)?;
        for &(k, v) in &sw.values {
            rows.push(Row::info("P_kappa", format!("kappa={k}"), v));
        }
        let worst = sw.values.windows(2).map(|w| (w[0].1 - w[1].1) / w[0].1.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        rows.push(Row::check("P_kappa_monotone", "max relative decrease", worst, worst <= 1e-6));
        let (k, last) = *sw.values.last().expect("nonempty kappa list");
        rows.push(Row::expect("P_kappa_limit", format!("kappa={k}"), last, sw.inner, 0.05));
    }
    Ok(rows)
}

fn dirichlet_config(inst: &Instance, backend: Backend) -> DirichletConfig {
    DirichletConfig { backend, tolerances: inst.tolerances.clone(), ..DirichletConfig::default() }
}

/// Known energies: the disk with affine data `ax + by` has (T) energy
/// `πr²·|(a,b)|`; the annulus with step data jumps across the inner circle.
pub fn known_dirichlet(inst: &Instance, data: &DataSpec, variant: Variant) -> Option<Expect> {
    let m = inst.alpha().min(1.0);
    match (&inst.shape, data, variant) {
        (Shape::Disk { r }, DataSpec::Affine(a, b), Variant::T) => Some(Expect { value: PI * r * r * a.hypot(*b), tol: 0.05 }),
        (Shape::Disk { r }, DataSpec::Affine(a, b), Variant::B) if m == 1.0 => Some(Expect { value: PI * r * r * a.hypot(*b), tol: 0.05 }),
        (Shape::Annulus { a, .. }, DataSpec::Step(None), Variant::T) => Some(Expect { value: 2.0 * PI * a, tol: 0.05 }),
        (Shape::Annulus { a, .. }, DataSpec::Step(None), Variant::B) => Some(Expect { value: 2.0 * PI * a * m, tol: 0.05 }),
        (_, DataSpec::Const(_), _) => Some(Expect { value: 0.0, tol: 1e-9 }),
        _ => None,
    }
}

fn method(variant: Variant, backend: Backend) -> String {
    let b = match backend {
        Backend::MinCut => "mincut",
        Backend::FirstOrder => "firstorder",
    };
    format!("{variant:?}/{b}")
}

pub fn dirichlet(inst: &Instance, data: &DataSpec, variant: Variant, backend: Backend, expect: Option<Expect>, out: &Path, prefix: &str) -> Result<Vec<Row>> {
    let f = inst.data(data)?;
    let sol = solve_problem(&inst.space, &inst.region, &f, variant, &dirichlet_config(inst, backend))?;
    inst.dump(out, &format!("{prefix}field.csv"), &sol.values)?;
    let e = expect.or_else(|| known_dirichlet(inst, data, variant));
    Ok(vec![row(&method(variant, backend), format!("data={data}"), sol.report.energy, e)])
}

pub fn pipeline(inst: &Instance, data: &DataSpec, direction: Direction, widths: Option<&[f64]>, ps: Option<&[f64]>, out: &Path, prefix: &str) -> Result<Vec<Row>> {
    let f = inst.data(data)?;
    let cfg = dirichlet_config(inst, Backend::MinCut);
    let default_w = default_widths(inst.h);
    let widths = widths.unwrap_or(&default_w);
    let ps = ps.unwrap_or(&DEFAULT_PIPELINE_P);
    let res = match direction {
        Direction::Outer => outer_approximation_pipeline(&inst.space, &inst.region, &f, widths, ps, &cfg)?,
        Direction::Inner => inner_approximation_pipeline(&inst.space, &inst.region, &f, widths, ps, &cfg)?,
    };
    let direct = solve_problem(&inst.space, &inst.region, &f, res.variant, &cfg)?;
    inst.dump(out, &format!("{prefix}field.csv"), &res.values)?;
    let name = format!("pipeline-{}", if direction == Direction::Outer { "outer" } else { "inner" });
    let mut rows: Vec<Row> = res
        .stages
        .iter()
        .map(|st| Row::info(format!("{name}/stage"), format!("width={},p={}", st.width, st.p), st.energy))
        .collect();
    rows.push(Row::expect(format!("{name}/{:?}", res.variant), format!("data={data}"), res.energy, direct.report.energy, inst.tolerances.pipeline_tol));
    Ok(rows)
}

pub fn solve_p(inst: &Instance, data: &DataSpec, p: f64, out: &Path, prefix: &str) -> Result<Vec<Row>> {
    let f = inst.data(data)?;
    let sol = solve_p_dirichlet(&inst.space, &inst.region, &f, &SolverConfig::with_p(p))?;
    inst.dump(out, &format!("{prefix}field.csv"), &sol.values)?;
    let rep = &sol.report;
    write_csv(
        &out.join(format!("{prefix}trace.csv")),
        &["p", "energy_p", "tv", "l1_delta", "iters", "residual"],
        [vec![num(p), num(rep.energy), num(rep.tv), num(0.0), rep.iterations.to_string(), num(rep.residual)]],
    )?;
    Ok(vec![Row::check("E_p", format!("p={p}"), rep.energy, rep.converged)])
}

pub fn continuation(inst: &Instance, data: &DataSpec, schedule: &[f64], out: &Path, prefix: &str) -> Result<(Vec<Row>, Vec<f64>)> {
    let f = inst.data(data)?;
    let res = continuation_p_to_1(&inst.space, &inst.region, &f, schedule, &SolverConfig::default())?;
    write_csv(
        &out.join(format!("{prefix}trace.csv")),
        &["p", "energy_p", "tv", "l1_delta", "iters", "residual"],
        res.steps.iter().map(|s| {
            vec![num(s.p), num(s.energy_p), num(s.tv), num(s.l1_delta), s.iterations.to_string(), num(s.residual)]
        }),
    )?;
    let limit = res.limit_field().to_vec();
    inst.dump(out, &format!("{prefix}field.csv"), &limit)?;
    let rows = res.steps.iter().map(|s| Row::check("holder", format!("p={}", s.p), s.tv, s.holder_ok)).collect();
    Ok((rows, limit))
}

pub fn parse_class(s: &str) -> Result<TestClass> {
    Ok(match s {
        "bvc" => TestClass::CompactSupport,
        "bv0" => TestClass::ZeroTrace,
        "wkbv0" => TestClass::WeakZeroTrace,
        _ => bail!("unknown test class `{s}`; expected bvc, bv0 or wkbv0"),
    })
}

pub fn verify(inst: &Instance, field: &[f64], class: TestClass, trials: usize, seed: u64, adversarial: bool) -> Result<Vec<Row>> {
    let opts = VerifyOptions { class, trials, seed, adversarial, tolerances: inst.tolerances.clone() };
    let rep = verify_least_gradient(&inst.space, &inst.region, field, &opts)?;
    let mut rows = vec![Row::check(format!("verify/{class:?}"), format!("trials={trials},seed={seed}"), rep.worst_delta, rep.worst_delta >= -rep.slack)];
    if let Some(g) = rep.adversarial_improvement {
        rows.push(Row::check(format!("verify/{class:?}/adversarial"), "improvement", g, g <= rep.slack));
    }
    Ok(rows)
}

pub fn whitney(inst: &Instance, data: &DataSpec, scale: f64, max_c: f64, out: &Path, prefix: &str) -> Result<Vec<Row>> {
    let u = inst.data(data)?;
    let cover = whitney_cover(&inst.space, inst.region.omega(), scale)?;
    let pou = partition_of_unity(&inst.space, &cover)?;
    let b = verify_dc_bounds(&inst.space, &u, &cover, &pou)?;
    let path = out.join(format!("{prefix}covering.json"));
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_covering_json(&cover, BufWriter::new(file))?;
    let sum_error = pou.sum_error(inst.region.omega());
    write_csv(
        &out.join(format!("{prefix}bounds.csv")),
        &["quantity", "value"],
        [
            ("balls", cover.len() as f64),
            ("overlap_count", cover.overlap_count as f64),
            ("repairs", cover.repairs.len() as f64),
            ("partition_sum_error", sum_error),
            ("scaled_lipschitz", pou.scaled_lipschitz),
            ("lip_constant", b.lip_constant),
            ("integral_lip", b.integral_lip),
            ("tv", b.tv),
            ("integral_constant", b.integral_constant),
            ("l1_error", b.l1_error),
            ("clipped", b.clipped as f64),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), num(v)]),
    )?;
    let param = format!("R={scale},data={data}");
    Ok(vec![
        Row::check("whitney/partition_sum_error", param.clone(), sum_error, sum_error <= 1e-12),
        Row::check("whitney/lip_constant", param.clone(), b.lip_constant, b.lip_constant <= max_c),
        Row::info("whitney/l1_error", param, b.l1_error),
    ])
}
