//! Run configuration.
//!
//! Configs are TOML. Time functions are quoted strings in the grammar of
//! `susyinv::timefunc` (`"0.5"`, `"2*t"`, `"pi/4"`, `"0.3*sin(2*t)"`).
//! Scalars that are usually irrational (`T`, `dt`) may also be written as
//! constant expressions, e.g. `T = "2*pi"`.
//!
//! ```toml
//! [system]
//! family = "spin"        # or "oscillator"
//! j = 0.5                # spin only
//! N = 64                 # oscillator only
//! buffer = 8             # oscillator only, defaults to max(4, N/8)
//! b = 1.0                # H₊ = b J₃ (spin)
//!
//! [gauge]
//! theta = "pi/4"
//! phi = "2*t"
//!
//! [y]
//! f = "0.5"
//! g = "0"                # spin only
//!
//! [d0]
//! named = "Jplus"        # "Jplus" (spin) or "adag" (oscillator)
//! # file = "d0.csv"      # rows of re,im pairs, relative to the config
//!
//! [grid]
//! T = 10.0
//! dt = 1e-3
//!
//! [checks]
//! suites = ["superalgebra", "lvn"]   # default: all
//! negative_control = false
//! seed = 0
//! draws = 20
//! levels = 6
//!
//! [output]
//! dir = "out"
//! formats = ["csv", "json"]
//! rows = 101
//! samples = 5
//!
//! [phase]
//! steps = 2000
//!
//! [sweep]
//! parameter = "gauge.theta"
//! values = ["0.1", "0.2", "0.4"]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use susyinv::construction::SuperSystem;
use susyinv::dynamics::Grid;
use susyinv::operator::Matrix;
use susyinv::reps::{default_buffer, make_oscillator, make_spin};
use susyinv::{Operator, TimeFunction, C64};

use crate::error::CliError;

pub const SUITES: [&str; 10] = [
    "superalgebra",
    "spectrum",
    "pairing",
    "hermiticity",
    "closed_form",
    "lvn",
    "unitarity",
    "solutions",
    "propagation",
    "random_draws",
];

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Spin,
    Oscillator,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A float written either as a number or as a constant expression.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    family: FamilyName,
    j: Option<f64>,
    #[serde(rename = "N")]
    n: Option<usize>,
    buffer: Option<usize>,
    b: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGauge {
    theta: Option<String>,
    phi: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawY {
    f: Option<String>,
    g: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawD0 {
    named: Option<String>,
    file: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(rename = "T")]
    t_end: Scalar,
    dt: Scalar,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    suites: Option<Vec<String>>,
    negative_control: Option<bool>,
    seed: Option<u64>,
    draws: Option<usize>,
    levels: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    formats: Option<Vec<Format>>,
    rows: Option<usize>,
    samples: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    steps: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    #[serde(default)]
    gauge: RawGauge,
    #[serde(default)]
    y: RawY,
    #[serde(default)]
    d0: RawD0,
    grid: RawGrid,
    #[serde(default)]
    checks: RawChecks,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    phase: RawPhase,
    sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug)]
pub enum D0Source {
    Named,
    Matrix(Operator),
}

#[derive(Clone, Debug)]
pub enum SystemSpec {
    Spin { j: f64, b: f64 },
    Oscillator { n: usize, buffer: usize },
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub theta: TimeFunction,
    pub phi: TimeFunction,
    pub f: TimeFunction,
    pub g: TimeFunction,
    pub d0: D0Source,
    pub t_end: f64,
    pub dt: f64,
    pub suites: Vec<String>,
    pub negative_control: bool,
    pub seed: u64,
    pub draws: usize,
    pub levels: usize,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
    pub rows: usize,
    pub samples: usize,
    pub phase_steps: usize,
    pub sweep: Option<SweepSpec>,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn timefunc(field: &str, src: Option<&str>) -> Result<TimeFunction, CliError> {
    TimeFunction::parse(src.unwrap_or("0")).map_err(|e| bad(field, e))
}

fn scalar(field: &str, s: &Scalar) -> Result<f64, CliError> {
    match s {
        Scalar::Number(x) => Ok(*x),
        Scalar::Text(src) => {
            let f = TimeFunction::parse(src).map_err(|e| bad(field, e))?;
            if !f.is_constant() {
                return Err(bad(field, format!("{src:?} must not depend on t")));
            }
            Ok(f.eval(0.0))
        }
    }
}

/// Reads a square complex matrix stored as rows of `re,im` pairs.
pub fn read_matrix(path: &Path) -> Result<Operator, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad("d0.file", format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| bad("d0.file", format!("line {}: {e}", k + 1)))?;
        if vals.len() % 2 != 0 {
            return Err(bad("d0.file", format!("line {}: odd number of values", k + 1)));
        }
        rows.push(vals.chunks(2).map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>());
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(bad("d0.file", "matrix must be square and non-empty"));
    }
    let m = Matrix::from_fn(n, n, |r, c| rows[r][c]);
    Operator::new(m).map_err(|e| bad("d0.file", e))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses and validates config text. A relative `d0.file` resolves against
    /// `base`; the output directory is taken as given.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let system = match raw.system.family {
            FamilyName::Spin => {
                let j = raw.system.j.ok_or_else(|| bad("system.j", "required for the spin family"))?;
                make_spin(j).map_err(|e| bad("system.j", e))?;
                SystemSpec::Spin { j, b: raw.system.b.unwrap_or(1.0) }
            }
            FamilyName::Oscillator => {
                let n = raw.system.n.ok_or_else(|| bad("system.N", "required for the oscillator family"))?;
                let buffer = raw.system.buffer.unwrap_or_else(|| default_buffer(n));
                make_oscillator(n, buffer).map_err(|e| bad("system.buffer", e))?;
                SystemSpec::Oscillator { n, buffer }
            }
        };
        let theta = timefunc("gauge.theta", raw.gauge.theta.as_deref())?;
        let phi = timefunc("gauge.phi", raw.gauge.phi.as_deref())?;
        let f = timefunc("y.f", raw.y.f.as_deref())?;
        let g = timefunc("y.g", raw.y.g.as_deref())?;
        if matches!(system, SystemSpec::Oscillator { .. }) && !(g.is_constant() && g.eval(0.0) == 0.0) {
            return Err(bad("y.g", "the oscillator family only supports Y = f K3"));
        }

        let d0 = match (raw.d0.named.as_deref(), &raw.d0.file) {
            (Some(_), Some(_)) => return Err(bad("d0", "give either `named` or `file`, not both")),
            (None, Some(file)) => D0Source::Matrix(read_matrix(&base.join(file))?),
            (name, None) => {
                let expected = match system {
                    SystemSpec::Spin { .. } => "Jplus",
                    SystemSpec::Oscillator { .. } => "adag",
                };
                match name {
                    None => D0Source::Named,
                    Some(n) if n == expected => D0Source::Named,
                    Some(n) => return Err(bad("d0.named", format!("{n:?} does not fit this family (expected {expected:?})"))),
                }
            }
        };

        let t_end = scalar("grid.T", &raw.grid.t_end)?;
        let dt = scalar("grid.dt", &raw.grid.dt)?;
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(bad("grid.T", "must be positive"));
        }
        if !(dt > 0.0) {
            return Err(bad("grid.dt", "must be positive"));
        }
        if t_end / dt > 1e7 {
            return Err(bad("grid", format!("T/dt = {:.3e} exceeds 1e7 steps", t_end / dt)));
        }
        Grid::uniform(t_end, dt).map_err(|e| bad("grid", e))?;

        let suites = match raw.checks.suites {
            None => SUITES.iter().map(|s| s.to_string()).collect(),
            Some(list) => {
                if let Some(unknown) = list.iter().find(|s| !SUITES.contains(&s.as_str())) {
                    return Err(bad("checks.suites", format!("unknown suite {unknown:?}; known: {}", SUITES.join(", "))));
                }
                list
            }
        };
        let formats = raw.output.formats.unwrap_or_else(|| vec![Format::Csv, Format::Json]);
        let rows = raw.output.rows.unwrap_or(101);
        if rows < 2 {
            return Err(bad("output.rows", "need at least 2"));
        }
        let phase_steps = raw.phase.steps.unwrap_or(2000);
        if phase_steps == 0 {
            return Err(bad("phase.steps", "must be positive"));
        }
        if let Some(s) = &raw.sweep {
            if s.values.is_empty() {
                return Err(bad("sweep.values", "empty"));
            }
        }

        Ok(Self {
            system,
            theta,
            phi,
            f,
            g,
            d0,
            t_end,
            dt,
            suites,
            negative_control: raw.checks.negative_control.unwrap_or(false),
            seed: raw.checks.seed.unwrap_or(0),
            draws: raw.checks.draws.unwrap_or(20),
            levels: raw.checks.levels.unwrap_or(6),
            out_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
            formats,
            rows,
            samples: raw.output.samples.unwrap_or(5),
            phase_steps,
            sweep: raw.sweep,
        })
    }

    pub fn grid(&self) -> Grid {
        Grid::uniform(self.t_end, self.dt).expect("validated at load")
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn is_spin(&self) -> bool {
        matches!(self.system, SystemSpec::Spin { .. })
    }

    /// Overrides one parameter for a sweep cell.
    pub fn with_parameter(&self, name: &str, value: &str) -> Result<Self, CliError> {
        let mut out = self.clone();
        let field = format!("sweep.{name}");
        match name {
            "gauge.theta" => out.theta = timefunc(&field, Some(value))?,
            "gauge.phi" => out.phi = timefunc(&field, Some(value))?,
            "y.f" => out.f = timefunc(&field, Some(value))?,
            "y.g" if self.is_spin() => out.g = timefunc(&field, Some(value))?,
            "system.b" => match &mut out.system {
                SystemSpec::Spin { b, .. } => *b = scalar(&field, &Scalar::Text(value.into()))?,
                SystemSpec::Oscillator { .. } => return Err(bad(&field, "b only applies to the spin family")),
            },
            _ => return Err(bad("sweep.parameter", format!("cannot sweep {name:?}"))),
        }
        Ok(out)
    }

    pub fn build_system(&self) -> Result<SuperSystem, CliError> {
        let sys = match self.system {
            SystemSpec::Spin { j, b } => SuperSystem::spin(
                make_spin(j)?,
                b,
                self.theta.clone(),
                self.phi.clone(),
                self.f.clone(),
                self.g.clone(),
            )?,
            SystemSpec::Oscillator { n, buffer } => {
                SuperSystem::oscillator(make_oscillator(n, buffer)?, self.theta.clone(), self.phi.clone(), self.f.clone())?
            }
        };
        match &self.d0 {
            D0Source::Named => Ok(sys),
            D0Source::Matrix(m) => sys.with_d0(m.clone()).map_err(|e| bad("d0.file", e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPIN: &str = r#"
[system]
family = "spin"
j = 0.5
[gauge]
theta = "pi/4"
phi = "2*t"
[y]
f = "0.5"
[grid]
T = 1.0
dt = 0.01
"#;

    #[test]
    fn parses_minimal_spin() {
        let c = RunConfig::parse(SPIN, Path::new(".")).unwrap();
        assert!(c.is_spin());
        assert_eq!(c.suites.len(), SUITES.len());
        assert!((c.theta.eval(3.0) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(c.grid().len(), 101);
    }

    #[test]
    fn reports_field_on_bad_timefunc() {
        let err = RunConfig::parse(&SPIN.replace("2*t", "2*x"), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("gauge.phi"), "{err}");
    }

    #[test]
    fn reports_line_on_syntax_error() {
        let err = RunConfig::parse(&SPIN.replace("j = 0.5", "j = "), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn rejects_bad_grid_and_family_mismatch() {
        assert!(RunConfig::parse(&SPIN.replace("dt = 0.01", "dt = 0.0"), Path::new(".")).is_err());
        assert!(RunConfig::parse(&SPIN.replace("dt = 0.01", "dt = 1e-8"), Path::new(".")).is_err());
        let named = format!("{SPIN}\n[d0]\nnamed = \"adag\"\n");
        assert!(RunConfig::parse(&named, Path::new(".")).is_err());
    }

    #[test]
    fn accepts_expression_scalars() {
        let c = RunConfig::parse(&SPIN.replace("T = 1.0", "T = \"2*pi\"").replace("dt = 0.01", "dt = \"pi/100\""), Path::new("."))
            .unwrap();
        assert_eq!(c.grid().len(), 201);
    }

    #[test]
    fn sweep_overrides() {
        let c = RunConfig::parse(SPIN, Path::new(".")).unwrap();
        let d = c.with_parameter("y.f", "0.25").unwrap();
        assert_eq!(d.f.eval(0.0), 0.25);
        assert!(c.with_parameter("grid.T", "1").is_err());
    }
}
