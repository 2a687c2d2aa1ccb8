//! `leastgrad`: run perimeter, Dirichlet and covering experiments from the
//! command line or from a scenario file.

mod common;
mod ops;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use leastgrad::config::Tolerances;
use leastgrad::cut::Backend;
use leastgrad::dirichlet::{Direction, Variant};
use leastgrad::perimeter::DEFAULT_TAUS;
use leastgrad::pharmonic::DEFAULT_P_SCHEDULE;

use common::{all_pass, ensure_dir, parse_real, weights, write_csv, DataSpec, Row, List, ShapeArg};
use ops::{parse_class, Instance, PerimeterExpect};

#[derive(Parser)]
#[command(name = "leastgrad", version, about = "Least-gradient problems on weighted planar graphs")]
struct Cli {
    /// Directory for reports and field dumps.
    #[arg(long, global = true, env = "LEASTGRAD_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Grid {
    /// disk[:R], annulus[:A,B], square[:S], slit[:X0,Y0,X1,Y1] or nslit:N
    #[arg(long, default_value = "disk")]
    shape: ShapeArg,
    /// Grid spacing; fractions like 1/64 are accepted.
    #[arg(long, default_value = "1/64", value_parser = parse_real)]
    h: f64,
    /// Density outside the domain (1 for the uniform measure).
    #[arg(long, default_value_t = 1.0, value_parser = parse_real)]
    alpha: f64,
}

impl Grid {
    fn instance(&self) -> Result<Instance> {
        let cwd = std::env::current_dir()?;
        Instance::new(self.shape.0.clone(), self.h, weights(self.alpha), Tolerances::default(), cwd)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    B,
    T,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mincut,
    Firstorder,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Inner,
    Outer,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every scenario of a config file (or of an earlier run's manifest.json).
    Run { config: PathBuf },
    /// Relaxed and inner perimeters of the domain, with τ- and κ-sweeps.
    Perimeter {
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        kappa_list: Option<List>,
        #[arg(long)]
        tau_list: Option<List>,
    },
    /// One p-Dirichlet solve.
    Solve {
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value = "x")]
        data: DataSpec,
        #[arg(long, default_value_t = 2.0, value_parser = parse_real)]
        p: f64,
    },
    /// Continuation p → 1 with a per-step trace.
    Continue {
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value = "x")]
        data: DataSpec,
        #[arg(long)]
        p_schedule: Option<List>,
    },
    /// Direct solve of a least-gradient Dirichlet problem.
    Dirichlet {
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value = "x")]
        data: DataSpec,
        #[arg(long, value_enum, default_value = "t")]
        variant: VariantArg,
        #[arg(long, value_enum, default_value = "mincut")]
        backend: BackendArg,
    },
    /// Collar pipeline, compared with the direct solve.
    Pipeline {
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value = "x")]
        data: DataSpec,
        #[arg(long, value_enum, default_value = "outer")]
        direction: DirectionArg,
    },
    /// Perturbation test of a field dump (or of boundary data used as a field).
    Verify {
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value = "x")]
        field: DataSpec,
        /// bvc, bv0 or wkbv0
        #[arg(long, default_value = "bv0")]
        class: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run the adversarial cut search.
        #[arg(long)]
        adversarial: bool,
    },
    /// Whitney covering, partition of unity and convolution bounds.
    Whitney {
        #[command(flatten)]
        grid: Grid,
        /// Largest ball radius.
        #[arg(long = "R", default_value = "0.1", value_parser = parse_real)]
        r: f64,
        #[arg(long, alias = "field", default_value = "x")]
        data: DataSpec,
    },
}

const PERIMETER_HEADER: [&str; 6] = ["quantity", "parameter", "value", "reference", "rel_error", "pass"];
const SOLVE_HEADER: [&str; 6] = ["method", "instance", "energy", "reference", "rel_error", "pass"];

fn report(out: &Path, header: &[&str], rows: &[Row]) -> Result<bool> {
    write_csv(
        &out.join("report.csv"),
        header,
        rows.iter().map(|r| {
            let mut rec = vec![r.quantity.clone(), r.parameter.clone()];
            rec.extend(r.tail());
            rec
        }),
    )?;
    for r in rows {
        let mark = match r.pass() {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "    ",
        };
        println!("{mark} {} [{}] = {}", r.quantity, r.parameter, r.value);
    }
    Ok(all_pass(rows))
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::B => Variant::B,
        VariantArg::T => Variant::T,
    }
}

fn backend(b: BackendArg) -> Backend {
    match b {
        BackendArg::Mincut => Backend::MinCut,
        BackendArg::Firstorder => Backend::FirstOrder,
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let out = cli.out;
    if let Cmd::Run { config } = &cli.cmd {
        let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
        let cfg = scenario::parse(&text)?;
        let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
        let ok = scenario::run(&cfg, &base, &out)?;
        println!("{} scenario(s); report in {}", cfg.scenarios.len(), out.join("report.csv").display());
        return Ok(ok);
    }
    ensure_dir(&out)?;
    match cli.cmd {
        Cmd::Run { .. } => unreachable!(),
        Cmd::Perimeter { grid, kappa_list, tau_list } => {
            let inst = grid.instance()?;
            let taus = tau_list.map_or(DEFAULT_TAUS.to_vec(), |l| l.0);
            let rows = ops::perimeter(&inst, &taus, &kappa_list.map(|l| l.0).unwrap_or_default(), PerimeterExpect::default())?;
            report(&out, &PERIMETER_HEADER, &rows)
        }
        Cmd::Solve { grid, data, p } => {
            let rows = ops::solve_p(&grid.instance()?, &data, p, &out, "")?;
            report(&out, &SOLVE_HEADER, &rows)
        }
        Cmd::Continue { grid, data, p_schedule } => {
            let schedule = p_schedule.map_or(DEFAULT_P_SCHEDULE.to_vec(), |l| l.0);
            let (rows, _) = ops::continuation(&grid.instance()?, &data, &schedule, &out, "")?;
            report(&out, &SOLVE_HEADER, &rows)
        }
        Cmd::Dirichlet { grid, data, variant: v, backend: b } => {
            let rows = ops::dirichlet(&grid.instance()?, &data, variant(v), backend(b), None, &out, "")?;
            report(&out, &SOLVE_HEADER, &rows)
        }
        Cmd::Pipeline { grid, data, direction } => {
            let d = match direction {
                DirectionArg::Inner => Direction::Inner,
                DirectionArg::Outer => Direction::Outer,
            };
            let rows = ops::pipeline(&grid.instance()?, &data, d, None, None, &out, "")?;
            report(&out, &SOLVE_HEADER, &rows)
        }
        Cmd::Verify { grid, field, class, trials, seed, adversarial } => {
            let inst = grid.instance()?;
            let u = inst.data(&field)?;
            let rows = ops::verify(&inst, &u, parse_class(&class)?, trials, seed, adversarial)?;
            report(&out, &SOLVE_HEADER, &rows)
        }
        Cmd::Whitney { grid, r, data } => {
            let rows = ops::whitney(&grid.instance()?, &data, r, 16.0, &out, "")?;
            report(&out, &PERIMETER_HEADER, &rows)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
