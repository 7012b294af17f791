use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;
use susyinv::construction::{
    oscillator_mapped_closed_form, project_generators, run_prescription, spin_mapped_closed_form, Family,
    PartnerOutput,
};
use susyinv::dynamics::{berry_holonomy, infidelity, propagate, HolonomyResult};
use susyinv::operator::{eigh, frobenius, Matrix};
use susyinv::{Exec, State};

use crate::checks::{run_checks, CheckOptions, VerifyReport};
use crate::config::{D0Source, Format, RunConfig};
use crate::error::CliError;
use crate::output::{sample_times, write_json, ComplexMatrix, Table};

/// Settings shared by every subcommand.
#[derive(Clone, Copy, Debug)]
pub struct Common {
    pub tolerance_scale: f64,
    pub wrong_h: bool,
    pub seed: Option<u64>,
}

impl Common {
    fn check_options(&self, cfg: &RunConfig) -> CheckOptions {
        CheckOptions {
            tolerance_scale: self.tolerance_scale,
            wrong_h: self.wrong_h || cfg.negative_control,
            seed: self.seed.unwrap_or(cfg.seed),
        }
    }
}

fn prepare(cfg: &RunConfig) -> Result<PartnerOutput, CliError> {
    let out = run_prescription(&cfg.build_system()?)?;
    out.hminus(0.0)?;
    Ok(out)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Serialize)]
struct UnitarySample {
    t: f64,
    #[serde(flatten)]
    u: ComplexMatrix,
}

#[derive(Serialize)]
struct UnitaryFile {
    dim: usize,
    samples: Vec<UnitarySample>,
}

/// Writes `H_minus.csv`, `invariant_spectrum.csv` and `U_minus.json`.
pub fn build(cfg: &RunConfig) -> Result<bool, CliError> {
    let out = prepare(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let times = sample_times(cfg.t_end, cfg.rows);
    if cfg.wants(Format::Csv) {
        let rows = Exec::Parallel.map(&times, |&t| -> Result<Vec<f64>, CliError> {
            let h = out.hminus(t)?;
            let r = project_generators(out.family(), &h);
            let want = out.family().closed_form_r(&cfg.f, &cfg.theta, &cfg.phi, t);
            let mismatch = r.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(vec![t, r[0], r[1], r[2], h.hermiticity_defect(), mismatch])
        });
        let mut table = Table::new(["t", "R1", "R2", "R3", "hermiticity_defect", "closed_form_mismatch"]);
        for row in rows {
            table.push(&row?);
        }
        table.write(&cfg.out_dir.join("H_minus.csv"))?;

        let n = out.system.dim();
        let spectra = Exec::Parallel.map(&times, |&t| -> Result<Vec<f64>, CliError> {
            let mut row = vec![t];
            row.extend(eigh(&out.iminus(t))?.values);
            Ok(row)
        });
        let mut table = Table::new(std::iter::once("t".to_string()).chain((0..n).map(|k| format!("lambda_{k}"))));
        for row in spectra {
            table.push(&row?);
        }
        table.write(&cfg.out_dir.join("invariant_spectrum.csv"))?;
    }
    if cfg.wants(Format::Json) {
        let mut samples = Vec::new();
        for t in sample_times(cfg.t_end, cfg.samples) {
            samples.push(UnitarySample { t, u: ComplexMatrix::from(out.uminus(t)?.matrix()) });
        }
        write_json(&cfg.out_dir.join("U_minus.json"), &UnitaryFile { dim: out.system.dim(), samples })?;
    }
    println!("wrote build outputs to {}", cfg.out_dir.display());
    Ok(true)
}

pub fn print_report(report: &VerifyReport) {
    println!("{:<14} {:>12} {:>10}  result", "check", "residual", "tolerance");
    for c in &report.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("{:<14} {:>12.3e} {:>10.1e}  {verdict}", c.name, c.max_residual, c.tolerance);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn verify_report(cfg: &RunConfig, common: &Common) -> Result<VerifyReport, CliError> {
    let out = prepare(cfg)?;
    run_checks(cfg, &out, common.check_options(cfg))
}

pub fn verify(cfg: &RunConfig, common: &Common) -> Result<bool, CliError> {
    let report = verify_report(cfg, common)?;
    print_report(&report);
    if cfg.wants(Format::Json) {
        ensure_dir(&cfg.out_dir)?;
        write_json(&cfg.out_dir.join("verify.json"), &report)?;
    }
    Ok(report.pass)
}

/// Propagates one level numerically next to its closed form; writes `solution.csv`.
pub fn propagate_level(cfg: &RunConfig, common: &Common, level: Option<f64>) -> Result<bool, CliError> {
    let out = prepare(cfg)?;
    let grid = cfg.grid();
    let h = |t: f64| if common.check_options(cfg).wrong_h { out.hplus(t) } else { out.hminus(t).expect("checked") };

    let o = &out;
    type Closed<'a> = Box<dyn Fn(f64) -> Result<State, CliError> + 'a>;
    // initial bosonic state and the closed form of its partner
    let (psi_plus, closed): (State, Closed) = match o.family() {
        Family::Spin(s) => {
            let m = level.unwrap_or(-s.j);
            let psi = s.basis_state(m).ok_or_else(|| CliError::Config(format!("--level {m} is not a weight of j={}", s.j)))?;
            let closed: Closed = match cfg.d0 {
                D0Source::Named => Box::new(move |t| Ok(spin_mapped_closed_form(o, m, t)?)),
                D0Source::Matrix(_) => {
                    let p = psi.clone();
                    Box::new(move |t| Ok(o.mapped_solution(&p, t)?))
                }
            };
            (psi, closed)
        }
        Family::Oscillator(osc) => {
            let n = level.unwrap_or(0.0);
            if n < 0.0 || n.fract() != 0.0 {
                return Err(CliError::Config(format!("--level {n} is not a Fock index")));
            }
            let n = n as usize;
            let psi = susyinv::reps::hermite_state(osc, n)?;
            let closed: Closed = match cfg.d0 {
                D0Source::Named => Box::new(move |t| Ok(oscillator_mapped_closed_form(o, n, t)?)),
                D0Source::Matrix(_) => Box::new(|_| Err(CliError::Config("no closed form for this level".into()))),
            };
            (psi, closed)
        }
    };
    // zero modes have no partner: propagate the bare state instead
    let closed = if closed(0.0).is_ok() {
        Some(closed)
    } else {
        eprintln!("warning: level is a zero mode or has no closed form; writing numeric columns only");
        None
    };
    let start = match &closed {
        Some(f) => f(0.0)?,
        None => psi_plus.clone(),
    };
    let traj = propagate(h, &start, &grid)?;
    let n = start.len();
    let stride = ((grid.len() - 1) / (cfg.rows - 1)).max(1);
    let mut header = vec!["t".to_string()];
    for k in 0..n {
        header.push(format!("num_re_{k}"));
        header.push(format!("num_im_{k}"));
    }
    if closed.is_some() {
        for k in 0..n {
            header.push(format!("cf_re_{k}"));
            header.push(format!("cf_im_{k}"));
        }
        header.push("infidelity".into());
    }
    let mut table = Table::new(header);
    let mut last_infidelity = 0.0;
    let picks: Vec<usize> = (0..grid.len()).filter(|k| k % stride == 0 || *k == grid.len() - 1).collect();
    for k in picks {
        let t = grid.times()[k];
        let psi = &traj.states[k];
        let mut row = vec![t];
        row.extend(psi.iter().flat_map(|z| [z.re, z.im]));
        if let Some(f) = &closed {
            let want = f(t)?;
            row.extend(want.iter().flat_map(|z| [z.re, z.im]));
            last_infidelity = infidelity(psi, &want);
            row.push(last_infidelity);
        }
        table.push(&row);
    }
    if cfg.wants(Format::Csv) {
        ensure_dir(&cfg.out_dir)?;
        table.write(&cfg.out_dir.join("solution.csv"))?;
    }
    if closed.is_none() {
        return Ok(true);
    }
    let tol = if cfg.is_spin() { 1e-7 } else { 1e-5 } * common.tolerance_scale;
    let pass = last_infidelity <= tol;
    println!("final infidelity {last_infidelity:.3e} (tolerance {tol:.1e}) {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

#[derive(Serialize)]
struct LevelHolonomy {
    level: usize,
    value: f64,
    degeneracy: usize,
    gamma: ComplexMatrix,
    phases: Vec<f64>,
    unitarity_defect: f64,
    doubling_delta: f64,
}

#[derive(Serialize)]
struct HolonomyFile {
    steps: usize,
    reversed: bool,
    theta_start: f64,
    phi_winding: f64,
    levels: Vec<LevelHolonomy>,
}

/// Non-Abelian cyclic phases of the eigenspaces of `I₋` along the gauge loop.
pub fn phase(cfg: &RunConfig, common: &Common, only: Option<usize>, reverse: bool) -> Result<bool, CliError> {
    let t_end = cfg.t_end;
    let dtheta = cfg.theta.eval(t_end) - cfg.theta.eval(0.0);
    let winding = (cfg.phi.eval(t_end) - cfg.phi.eval(0.0)) / (2.0 * PI);
    if dtheta.abs() > 1e-9 || (winding - winding.round()).abs() > 1e-9 {
        return Err(CliError::Config(format!(
            "loop is not closed: theta(0)={}, theta(T)={}, phi(0)={}, phi(T)={}",
            cfg.theta.eval(0.0),
            cfg.theta.eval(t_end),
            cfg.phi.eval(0.0),
            cfg.phi.eval(t_end)
        )));
    }
    let out = prepare(cfg)?;
    let gauge = out.system.wminus.euler().ok_or_else(|| CliError::Config("phase needs an Euler gauge".into()))?;
    let eig = eigh(&out.invariant0.iminus)?;
    let groups: Vec<usize> = match out.family() {
        Family::Spin(_) => (0..eig.degeneracy_groups.len()).collect(),
        Family::Oscillator(_) => (0..eig.degeneracy_groups.len().min(cfg.levels)).collect(),
    };
    let groups: Vec<usize> = match only {
        Some(k) if groups.contains(&k) => vec![k],
        Some(k) => return Err(CliError::Config(format!("--level {k} out of range ({} levels)", groups.len()))),
        None => groups,
    };
    // columns of W beyond the highest occupied basis index are never needed
    let span = |e: &Matrix| (0..e.nrows()).rev().find(|&r| e.row(r).iter().any(|z| z.norm() > 1e-14)).map_or(0, |r| r + 1);
    let mut levels = Vec::new();
    let mut pass = true;
    for g in groups {
        let e = eig.group_vectors(g);
        let cols = match out.family() {
            Family::Spin(_) => e.nrows(),
            Family::Oscillator(_) => span(&e),
        };
        let e_top = e.rows(0, cols).into_owned();
        let frame = |s: f64| {
            let s = if reverse { 1.0 - s } else { s };
            let t = s * t_end;
            gauge.w_columns(cfg.theta.eval(t), cfg.phi.eval(t), cols) * &e_top
        };
        let coarse: HolonomyResult = berry_holonomy(frame, g, cfg.phase_steps)?;
        let fine = berry_holonomy(frame, g, 2 * cfg.phase_steps)?;
        let defect = coarse.unitarity_defect;
        pass &= defect <= 1e-8 * common.tolerance_scale;
        levels.push(LevelHolonomy {
            level: g,
            value: eig.group_value(g),
            degeneracy: e.ncols(),
            gamma: ComplexMatrix::from(&coarse.gamma),
            phases: coarse.phases(),
            unitarity_defect: defect,
            doubling_delta: frobenius(&(&coarse.gamma - &fine.gamma)),
        });
    }
    for l in &levels {
        println!(
            "level {:>3}  value {:>10.4}  phases {:?}  unitarity {:.2e}  doubling {:.2e}",
            l.level, l.value, l.phases, l.unitarity_defect, l.doubling_delta
        );
    }
    if cfg.wants(Format::Json) {
        ensure_dir(&cfg.out_dir)?;
        let file = HolonomyFile {
            steps: cfg.phase_steps,
            reversed: reverse,
            theta_start: cfg.theta.eval(0.0),
            phi_winding: winding.round(),
            levels,
        };
        write_json(&cfg.out_dir.join("holonomy.json"), &file)?;
    }
    Ok(pass)
}

#[derive(Serialize)]
struct SweepCell<'a> {
    parameter: &'a str,
    value: &'a str,
    #[serde(flatten)]
    report: &'a VerifyReport,
}

/// Runs `verify` once per value of the swept parameter, one output directory per cell.
pub fn sweep(cfg: &RunConfig, common: &Common) -> Result<bool, CliError> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep: missing [sweep] section".into()))?;
    let cells: Vec<RunConfig> =
        spec.values.iter().map(|v| cfg.with_parameter(&spec.parameter, v)).collect::<Result<_, _>>()?;
    let reports = cell_map(&cells, |c| verify_report(c, common));
    let mut pass = true;
    println!("{:<6} {:<24} result", "cell", &spec.parameter);
    for (k, (value, report)) in spec.values.iter().zip(reports).enumerate() {
        let report = report?;
        pass &= report.pass;
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let verdict = if report.pass { "PASS".to_string() } else { format!("FAIL ({})", failed.join(", ")) };
        println!("{k:<6} {value:<24} {verdict}");
        if cfg.wants(Format::Json) {
            let dir = cfg.out_dir.join(format!("cell_{k:03}"));
            ensure_dir(&dir)?;
            write_json(&dir.join("verify.json"), &SweepCell { parameter: &spec.parameter, value, report: &report })?;
        }
    }
    Ok(pass)
}

#[cfg(feature = "parallel")]
fn cell_map<R: Send>(cells: &[RunConfig], f: impl Fn(&RunConfig) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    cells.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn cell_map<R: Send>(cells: &[RunConfig], f: impl Fn(&RunConfig) -> R + Sync + Send) -> Vec<R> {
    cells.iter().map(f).collect()
}
