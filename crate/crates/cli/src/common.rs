//! Argument parsing shared by the subcommands and the scenario runner:
//! shapes, grid spacings, data fields and report rows.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use leastgrad::io::read_field_csv;
use leastgrad::space::{build_grid, GridOptions, MeasureWeights, Region, Shape, Space};

/// `disk:R`, `annulus:A,B`, `square:S`, `slit` or `slit:X0,Y0,X1,Y1`, `nslit:N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeArg(pub Shape);

fn numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| parse_real(t.trim())).collect()
}

impl FromStr for ShapeArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let args = if rest.is_empty() { Vec::new() } else { numbers(rest)? };
        let shape = match (kind, args.as_slice()) {
            ("disk", []) => Shape::Disk { r: 1.0 },
            ("disk", &[r]) => Shape::Disk { r },
            ("annulus", []) => Shape::Annulus { a: 0.5, b: 1.0 },
            ("annulus", &[a, b]) => Shape::Annulus { a, b },
            ("square", []) => Shape::Square { s: 1.0 },
            ("square", &[s]) => Shape::Square { s },
            ("slit", []) => Shape::SlitDisk { slits: vec![[[-1.0, 0.0], [0.0, 0.0]]] },
            ("slit", &[x0, y0, x1, y1]) => Shape::SlitDisk { slits: vec![[[x0, y0], [x1, y1]]] },
            ("nslit", &[n]) if n >= 1.0 && n.fract() == 0.0 => Shape::NSlitDisk { n: n as usize },
            _ => bail!("unrecognised shape `{s}`; expected disk:R, annulus:A,B, square:S, slit[:X0,Y0,X1,Y1] or nslit:N"),
        };
        Ok(ShapeArg(shape))
    }
}

/// A real number, also accepting fractions such as `1/64`.
pub fn parse_real(s: &str) -> Result<f64> {
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>()? / b.trim().parse::<f64>()?,
        None => s.parse::<f64>()?,
    };
    if !v.is_finite() {
        bail!("`{s}` is not a finite number");
    }
    Ok(v)
}

/// Comma-separated reals, e.g. `1,2,4` or `1/10,1/100`.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        numbers(s).map(List)
    }
}

/// Shortest round-trip form, switching to exponent notation for tiny and huge magnitudes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Outside density α: 1 gives the uniform measure.
pub fn weights(alpha: f64) -> MeasureWeights {
    if alpha == 1.0 {
        MeasureWeights::Uniform
    } else {
        MeasureWeights::TwoPhase { inside: 1.0, outside: alpha }
    }
}

pub fn outside_density(w: &MeasureWeights) -> f64 {
    match *w {
        MeasureWeights::TwoPhase { inside, outside } => outside / inside,
        _ => 1.0,
    }
}

pub fn grid(shape: &Shape, h: f64, w: &MeasureWeights, null_density: f64) -> Result<(Space, Region)> {
    let opts = GridOptions { null_density, ..GridOptions::default() };
    build_grid(shape, h, w, &opts).with_context(|| format!("building the grid for {shape:?} at h = {h}"))
}

/// Boundary data: `x`, `affine:A,B`, `step[:RHO]`, `const:C` or `file:PATH`
/// (a `node_id,x,y,value` dump on the same grid).
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Affine(f64, f64),
    /// 0 inside the circle of radius ρ, 1 outside; ρ defaults to the annulus mid radius.
    Step(Option<f64>),
    Const(f64),
    File(PathBuf),
}

impl FromStr for DataSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        Ok(match kind {
            "x" if rest.is_empty() => DataSpec::Affine(1.0, 0.0),
            "y" if rest.is_empty() => DataSpec::Affine(0.0, 1.0),
            "affine" => match numbers(rest)?.as_slice() {
                &[a, b] => DataSpec::Affine(a, b),
                _ => bail!("affine data needs two coefficients, got `{rest}`"),
            },
            "step" if rest.is_empty() => DataSpec::Step(None),
            "step" => DataSpec::Step(Some(parse_real(rest)?)),
            "const" => DataSpec::Const(parse_real(rest)?),
            "file" if !rest.is_empty() => DataSpec::File(PathBuf::from(rest)),
            _ => bail!("unrecognised data `{s}`; expected x, y, affine:A,B, step[:RHO], const:C or file:PATH"),
        })
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSpec::Affine(a, b) if (*a, *b) == (1.0, 0.0) => write!(f, "x"),
            DataSpec::Affine(a, b) if (*a, *b) == (0.0, 1.0) => write!(f, "y"),
            DataSpec::Affine(a, b) => write!(f, "affine:{a},{b}"),
            DataSpec::Step(None) => write!(f, "step"),
            DataSpec::Step(Some(r)) => write!(f, "step:{r}"),
            DataSpec::Const(c) => write!(f, "const:{c}"),
            DataSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for DataSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DataSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl DataSpec {
    pub fn field(&self, space: &Space, shape: &Shape, base: &Path) -> Result<Vec<f64>> {
        let pos = |i: usize| space.pos(i);
        Ok(match *self {
            DataSpec::Affine(a, b) => (0..space.len()).map(|i| a * pos(i)[0] + b * pos(i)[1]).collect(),
            DataSpec::Const(c) => vec![c; space.len()],
            DataSpec::Step(rho) => {
                let rho = match (rho, shape) {
                    (Some(r), _) => r,
                    (None, Shape::Annulus { a, b }) => 0.5 * (a + b),
                    (None, _) => bail!("step data needs a radius unless the shape is an annulus"),
                };
                (0..space.len()).map(|i| if pos(i)[0].hypot(pos(i)[1]) < rho { 0.0 } else { 1.0 }).collect()
            }
            DataSpec::File(ref p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let file = File::open(&path).with_context(|| format!("opening field dump {}", path.display()))?;
                read_field_csv(space, BufReader::new(file)).with_context(|| format!("reading field dump {}", path.display()))?
            }
        })
    }
}

/// One report line. `reference` and `tol` are set for rows with an expected
/// value; `verdict` for rows checked some other way.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub quantity: String,
    pub parameter: String,
    pub value: f64,
    pub reference: Option<f64>,
    pub tol: f64,
    pub verdict: Option<bool>,
}

impl Row {
    pub fn info(quantity: impl Into<String>, parameter: impl Into<String>, value: f64) -> Self {
        Self { quantity: quantity.into(), parameter: parameter.into(), value, reference: None, tol: 0.0, verdict: None }
    }

    pub fn expect(quantity: impl Into<String>, parameter: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        Self { reference: Some(reference), tol, ..Self::info(quantity, parameter, value) }
    }

    pub fn check(quantity: impl Into<String>, parameter: impl Into<String>, value: f64, ok: bool) -> Self {
        Self { verdict: Some(ok), ..Self::info(quantity, parameter, value) }
    }

    pub fn rel_error(&self) -> Option<f64> {
        self.reference.map(|r| if r == 0.0 { self.value.abs() } else { (self.value - r).abs() / r.abs() })
    }

    /// `None` for purely informational rows.
    pub fn pass(&self) -> Option<bool> {
        match (self.verdict, self.rel_error()) {
            (Some(v), _) => Some(v),
            (None, Some(e)) => Some(e <= self.tol),
            (None, None) => None,
        }
    }

    /// `value,reference,rel_error,pass` with empty cells where not applicable.
    pub fn tail(&self) -> [String; 4] {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        [num(self.value), opt(self.reference), opt(self.rel_error()), self.pass().map(|p| p.to_string()).unwrap_or_default()]
    }
}

pub fn all_pass(rows: &[Row]) -> bool {
    rows.iter().all(|r| r.pass() != Some(false))
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| anyhow!("cannot create output directory {}: {e}", dir.display()))
}
