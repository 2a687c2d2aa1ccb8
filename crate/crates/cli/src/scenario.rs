//! Scenario files: several instances, each with a list of tasks, validated
//! up front and then run in order into one report.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use leastgrad::config::Tolerances;
use leastgrad::cut::Backend;
use leastgrad::dirichlet::{Direction, Variant, DEFAULT_PIPELINE_P};
use leastgrad::perimeter::DEFAULT_TAUS;
use leastgrad::pharmonic::DEFAULT_P_SCHEDULE;
use leastgrad::space::{MeasureWeights, Shape};

use crate::common::{ensure_dir, DataSpec, Row};
use crate::ops::{self, parse_class, Expect, Instance, PerimeterExpect};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub shape: Shape,
    pub h: f64,
    #[serde(default = "uniform")]
    pub weights: MeasureWeights,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub tasks: Vec<Task>,
}

fn uniform() -> MeasureWeights {
    MeasureWeights::Uniform
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", deny_unknown_fields)]
pub enum Task {
    Perimeter {
        #[serde(default)]
        taus: Option<Vec<f64>>,
        #[serde(default)]
        kappas: Vec<f64>,
        #[serde(default)]
        expect: PerimeterExpect,
    },
    Dirichlet {
        data: DataSpec,
        variant: Variant,
        #[serde(default = "mincut")]
        backend: Backend,
        #[serde(default)]
        expect: Option<Expect>,
    },
    Pipeline {
        data: DataSpec,
        direction: Direction,
        #[serde(default)]
        widths: Option<Vec<f64>>,
        #[serde(default)]
        ps: Option<Vec<f64>>,
    },
    Solve {
        data: DataSpec,
        p: f64,
    },
    Continuation {
        data: DataSpec,
        #[serde(default)]
        schedule: Option<Vec<f64>>,
    },
    /// Checks `field`, or the last field produced in the same scenario.
    Verify {
        #[serde(default)]
        field: Option<DataSpec>,
        class: String,
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default)]
        adversarial: bool,
        #[serde(default)]
        seed: Option<u64>,
    },
    Whitney {
        data: DataSpec,
        r: f64,
        #[serde(default = "default_max_c", rename = "maxC")]
        max_c: f64,
    },
}

fn mincut() -> Backend {
    Backend::MinCut
}

fn default_trials() -> usize {
    200
}

fn default_max_c() -> f64 {
    16.0
}

impl Task {
    fn op(&self) -> &'static str {
        match self {
            Task::Perimeter { .. } => "perimeter",
            Task::Dirichlet { .. } => "dirichlet",
            Task::Pipeline { .. } => "pipeline",
            Task::Solve { .. } => "solve",
            Task::Continuation { .. } => "continuation",
            Task::Verify { .. } => "verify",
            Task::Whitney { .. } => "whitney",
        }
    }

    fn produces_field(&self) -> bool {
        !matches!(self, Task::Perimeter { .. } | Task::Verify { .. } | Task::Whitney { .. })
    }
}

/// One step of the splitmix64 generator; used to derive per-task seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn task_seeds(s: &Scenario) -> Vec<u64> {
    let mut state = s.seed;
    s.tasks
        .iter()
        .map(|t| match t {
            Task::Verify { seed: Some(seed), .. } => *seed,
            _ => splitmix64(&mut state),
        })
        .collect()
}

/// Parses a config, or a manifest written by an earlier run (its `config` key).
pub fn parse(text: &str) -> Result<Config> {
    let value: Value = serde_json::from_str(text).map_err(|e| anyhow!("invalid JSON at line {}, column {}: {e}", e.line(), e.column()))?;
    if value.get("configHash").is_some() {
        let inner = value.get("config").ok_or_else(|| anyhow!("manifest has no `config` key"))?;
        return serde_json::from_value(inner.clone()).map_err(|e| anyhow!("invalid config in manifest: {e}"));
    }
    serde_json::from_str(text).map_err(|e| anyhow!("invalid config at line {}, column {}: {e}", e.line(), e.column()))
}

fn positive(what: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{what} must be positive and finite, got {v}");
    }
    Ok(())
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn check_data(data: &DataSpec, shape: &Shape, base: &Path) -> Result<()> {
    match data {
        DataSpec::Step(None) if !matches!(shape, Shape::Annulus { .. }) => bail!("step data needs a radius unless the shape is an annulus"),
        DataSpec::File(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            if !path.is_file() {
                bail!("field file {} does not exist", path.display());
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn validate_task(t: &Task, s: &Scenario, field_before: bool, base: &Path) -> Result<()> {
    let h = s.h;
    match t {
        Task::Perimeter { taus, kappas, .. } => {
            for &tau in taus.as_deref().unwrap_or(&DEFAULT_TAUS) {
                positive("tau", tau)?;
            }
            if taus.as_ref().is_some_and(|t| t.is_empty()) {
                bail!("the tau list must not be empty");
            }
            for &k in kappas {
                if !(k.is_finite() && k >= 1.0) {
                    bail!("kappa must be at least 1, got {k}");
                }
            }
            if kappas.windows(2).any(|w| !(w[0] < w[1])) {
                bail!("the kappa list must be strictly increasing");
            }
        }
        Task::Dirichlet { data, expect, .. } => {
            check_data(data, &s.shape, base)?;
            if let Some(e) = expect {
                positive("expect.tol", e.tol)?;
            }
        }
        Task::Pipeline { data, widths, ps, .. } => {
            check_data(data, &s.shape, base)?;
            let dw = leastgrad::dirichlet::default_widths(h);
            let widths = widths.as_deref().unwrap_or(&dw);
            let ps = ps.as_deref().unwrap_or(&DEFAULT_PIPELINE_P);
            if widths.is_empty() || widths.len() != ps.len() {
                bail!("the widths and ps lists must be nonempty and of equal length");
            }
            if let Some(w) = widths.iter().find(|&&w| w < 2.0 * h * (1.0 - 1e-9)) {
                bail!("collar width {w} is below 2h = {}", 2.0 * h);
            }
            if !strictly_decreasing(widths) {
                bail!("collar widths must be strictly decreasing");
            }
            if !strictly_decreasing(ps) || ps.iter().any(|&p| !(p > 1.0 && p <= 2.0)) {
                bail!("the p schedule must be strictly decreasing within (1, 2]");
            }
        }
        Task::Solve { data, p } => {
            check_data(data, &s.shape, base)?;
            if !(p.is_finite() && *p > 1.0) {
                bail!("p must exceed 1, got {p}");
            }
        }
        Task::Continuation { data, schedule } => {
            check_data(data, &s.shape, base)?;
            let sch = schedule.as_deref().unwrap_or(&DEFAULT_P_SCHEDULE);
            if sch.is_empty() || !strictly_decreasing(sch) || sch.iter().any(|&p| !(p > 1.0)) {
                bail!("the p schedule must be nonempty, strictly decreasing and above 1");
            }
        }
        Task::Verify { field, class, trials, .. } => {
            parse_class(class)?;
            if *trials == 0 {
                bail!("trials must be at least 1");
            }
            match field {
                Some(d) => check_data(d, &s.shape, base)?,
                None if !field_before => bail!("verify has no field: give `field` or put a dirichlet, pipeline, solve or continuation task before it"),
                None => {}
            }
        }
        Task::Whitney { data, r, max_c } => {
            check_data(data, &s.shape, base)?;
            positive("r", *r)?;
            positive("maxC", *max_c)?;
            if *r < 4.0 * h {
                bail!("Whitney scale r = {r} is below 4h = {}", 4.0 * h);
            }
        }
    }
    Ok(())
}

fn safe_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) && !name.starts_with('.')
}

/// Checks every scenario and task without solving anything.
pub fn validate(cfg: &Config, base: &Path) -> Result<()> {
    let mut names = HashSet::new();
    for s in &cfg.scenarios {
        let ctx = || format!("scenario `{}`", s.name);
        if !safe_name(&s.name) {
            bail!("scenario name `{}` must be nonempty and use only letters, digits, `_`, `-` and `.`", s.name);
        }
        if !names.insert(s.name.as_str()) {
            bail!("scenario name `{}` is used twice", s.name);
        }
        positive("h", s.h).with_context(ctx)?;
        let extent = s.shape.extent();
        if s.h > extent / 4.0 {
            return Err(anyhow!("h = {} is too coarse for the shape; it must be at most {}", s.h, extent / 4.0)).with_context(ctx);
        }
        s.shape.validate(s.h).with_context(ctx)?;
        let t = &s.tolerances;
        for (what, v) in [
            ("thetaTol", t.theta_tol),
            ("nullDensity", t.null_density),
            ("gapTol", t.gap_tol),
            ("traceTol", t.trace_tol),
            ("jumpFrac", t.jump_frac),
            ("pipelineTol", t.pipeline_tol),
        ] {
            positive(what, v).with_context(ctx)?;
        }
        let mut field_before = false;
        for (k, task) in s.tasks.iter().enumerate() {
            validate_task(task, s, field_before, base).with_context(|| format!("scenario `{}`, task {k} ({})", s.name, task.op()))?;
            field_before |= task.produces_field();
        }
    }
    Ok(())
}

/// sha256 of the config in canonical form (sorted keys, no whitespace).
pub fn config_hash(cfg: &Config) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(cfg)?)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Manifest<'a> {
    version: &'static str,
    config_hash: String,
    seeds: serde_json::Map<String, Value>,
    config: &'a Config,
}

/// Writes the report and field dumps under `out`. Returns whether every
/// checked row passed.
pub fn run(cfg: &Config, base: &Path, out: &Path) -> Result<bool> {
    validate(cfg, base)?;
    ensure_dir(out)?;
    let mut seeds = serde_json::Map::new();
    for s in &cfg.scenarios {
        seeds.insert(s.name.clone(), Value::from(task_seeds(s)));
    }
    let manifest = Manifest { version: env!("CARGO_PKG_VERSION"), config_hash: config_hash(cfg)?, seeds, config: cfg };
    let mut mf = File::create(out.join("manifest.json")).context("creating manifest.json")?;
    serde_json::to_writer_pretty(&mut mf, &manifest)?;
    writeln!(mf)?;

    let mut report = csv::Writer::from_path(out.join("report.csv")).context("creating report.csv")?;
    report.write_record(["scenario", "quantity", "parameter", "value", "reference", "rel_error", "pass"])?;
    report.flush()?;
    let mut ok = true;
    for s in &cfg.scenarios {
        let dir = out.join(&s.name);
        ensure_dir(&dir)?;
        let inst = Instance::new(s.shape.clone(), s.h, s.weights.clone(), s.tolerances.clone(), base.to_path_buf())?;
        let mut last: Option<Vec<f64>> = None;
        for ((k, task), seed) in s.tasks.iter().enumerate().zip(task_seeds(s)) {
            let prefix = format!("{k}-{}-", task.op());
            let rows = run_task(&inst, task, seed, &mut last, &dir, &prefix).with_context(|| format!("scenario `{}`, task {k} ({})", s.name, task.op()))?;
            for r in &rows {
                let mut rec = vec![s.name.clone(), r.quantity.clone(), r.parameter.clone()];
                rec.extend(r.tail());
                report.write_record(&rec)?;
                ok &= r.pass() != Some(false);
            }
            report.flush()?;
        }
    }
    Ok(ok)
}

fn last_field(inst: &Instance, dir: &Path, prefix: &str) -> Result<Vec<f64>> {
    let path: PathBuf = dir.join(format!("{prefix}field.csv"));
    DataSpec::File(path).field(&inst.space, &inst.shape, dir)
}

fn run_task(inst: &Instance, task: &Task, seed: u64, last: &mut Option<Vec<f64>>, dir: &Path, prefix: &str) -> Result<Vec<Row>> {
    Ok(match task {
        Task::Perimeter { taus, kappas, expect } => ops::perimeter(inst, taus.as_deref().unwrap_or(&DEFAULT_TAUS), kappas, expect.clone())?,
        Task::Dirichlet { data, variant, backend, expect } => {
            let rows = ops::dirichlet(inst, data, *variant, *backend, *expect, dir, prefix)?;
            *last = Some(last_field(inst, dir, prefix)?);
            rows
        }
        Task::Pipeline { data, direction, widths, ps } => {
            let rows = ops::pipeline(inst, data, *direction, widths.as_deref(), ps.as_deref(), dir, prefix)?;
            *last = Some(last_field(inst, dir, prefix)?);
            rows
        }
        Task::Solve { data, p } => {
            let rows = ops::solve_p(inst, data, *p, dir, prefix)?;
            *last = Some(last_field(inst, dir, prefix)?);
            rows
        }
        Task::Continuation { data, schedule } => {
            let (rows, limit) = ops::continuation(inst, data, schedule.as_deref().unwrap_or(&DEFAULT_P_SCHEDULE), dir, prefix)?;
            *last = Some(limit);
            rows
        }
        Task::Verify { field, class, trials, adversarial, .. } => {
            let u = match field {
                Some(d) => inst.data(d)?,
                None => last.clone().ok_or_else(|| anyhow!("no field to verify"))?,
            };
            ops::verify(inst, &u, parse_class(class)?, *trials, seed, *adversarial)?
        }
        Task::Whitney { data, r, max_c } => ops::whitney(inst, data, *r, *max_c, dir, prefix)?,
    })
}
