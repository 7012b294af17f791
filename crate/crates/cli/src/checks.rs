//! Verification suites driven by `verify` and `sweep`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use susyinv::construction::{
    closed_form_osc_r, closed_form_spin_r, hamiltonian_from_gauge, quadrupole_partner, Family, GaugeDraw,
    PartnerOutput, SuperSystem,
};
use susyinv::dynamics::{infidelity, lvn_defect, lvn_residual, propagate_many, schrodinger_residual};
use susyinv::exec::max_of;
use susyinv::operator::{eigh, unitarity_defect};
use susyinv::reps::hermite_state;
use susyinv::susy::{build_invariant, build_supercharge, check_superalgebra};
use susyinv::{Exec, Operator, State, TimeFunction};

use crate::config::{D0Source, RunConfig};
use crate::error::CliError;
use crate::output::sample_times;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub family: String,
    pub negative_control: bool,
    pub tolerance_scale: f64,
    pub seed: u64,
    pub pass: bool,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckResult>,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    pub tolerance_scale: f64,
    /// Substitute `H₊` wherever `H₋` is expected.
    pub wrong_h: bool,
    pub seed: u64,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a PartnerOutput,
    opts: CheckOptions,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn h(&self, t: f64) -> Operator {
        if self.opts.wrong_h {
            self.out.hplus(t)
        } else {
            self.out.hminus(t).expect("gauge validated before checks")
        }
    }

    fn result(&self, name: &str, residual: f64, tol: f64) -> CheckResult {
        let tolerance = tol * self.opts.tolerance_scale;
        // NaN never passes
        let pass = residual <= tolerance;
        CheckResult { name: name.into(), max_residual: residual, tolerance, pass }
    }

    fn spin(&self) -> bool {
        matches!(self.out.family(), Family::Spin(_))
    }

    /// Fock-space residuals are measured on the trusted block only.
    fn norm(&self, op: &Operator) -> f64 {
        match self.out.family() {
            Family::Spin(_) => op.norm(),
            Family::Oscillator(o) => o.interior_norm(op),
        }
    }

    /// `t = 0, 0.1, …` over the run, at most 101 points.
    fn times(&self) -> Vec<f64> {
        let n = ((self.cfg.t_end / 0.1).round() as usize).clamp(1, 100);
        sample_times(self.cfg.t_end, n + 1)
    }

    /// Initial bosonic states whose partners are checked.
    fn mapped_levels(&mut self) -> Vec<State> {
        match self.out.family() {
            Family::Spin(_) => {
                let levels = &self.out.pairing.levels;
                if levels.is_empty() {
                    self.warnings.push("I+ has no positive levels; nothing to map".into());
                }
                levels.iter().map(|l| l.plus.column(0).into_owned()).collect()
            }
            Family::Oscillator(o) => {
                if !matches!(self.cfg.d0, D0Source::Named) {
                    self.warnings.push("mapped solutions on Fock space need d0 = adag; skipped".into());
                    return Vec::new();
                }
                let top = self.cfg.levels.min(o.interior().saturating_sub(1));
                (0..top).map(|n| hermite_state(o, n).expect("inside interior")).collect()
            }
        }
    }
}

fn superalgebra(cx: &Ctx) -> Result<CheckResult, CliError> {
    let q = build_supercharge(&cx.out.system.d0);
    let inv = build_invariant(&q);
    let r = check_superalgebra(&q, &inv)?.max() / inv.i.norm().max(1.0);
    Ok(cx.result("superalgebra", r, 1e-12))
}

/// `I₊ = J₋J₊/2` has eigenvalues `(j − m)(j + m + 1)/2`; `a a†/2` has `(n + 1)/2`.
fn spectrum(cx: &mut Ctx) -> Result<Option<CheckResult>, CliError> {
    if !matches!(cx.cfg.d0, D0Source::Named) {
        cx.warnings.push("spectrum check needs a named d0; skipped".into());
        return Ok(None);
    }
    let iplus = &cx.out.invariant0.iplus;
    let r = match cx.out.family() {
        Family::Spin(s) => {
            let mut want: Vec<f64> =
                (0..s.dim()).map(|k| s.m_of(k)).map(|m| (s.j - m) * (s.j + m + 1.0) / 2.0).collect();
            want.sort_by(f64::total_cmp);
            let got = eigh(iplus)?.values;
            got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        }
        Family::Oscillator(o) => {
            let want = Operator::from_real_diagonal(&(0..o.dim()).map(|k| (k as f64 + 1.0) / 2.0).collect::<Vec<_>>());
            o.interior_norm(&(iplus - &want))
        }
    };
    Ok(Some(cx.result("spectrum", r, 1e-12)))
}

fn pairing(cx: &mut Ctx) -> CheckResult {
    let p = &cx.out.pairing;
    if p.levels.is_empty() {
        cx.warnings.push("no positive levels to pair".into());
    }
    let d0 = &cx.out.system.d0;
    let r = (p.pairing_residual(d0) / d0.norm().max(1.0)).max(p.unitarity_defect());
    cx.result("pairing", r, 1e-9)
}

fn hermiticity(cx: &Ctx, times: &[f64]) -> CheckResult {
    let r = max_of(&Exec::Parallel.map(times, |&t| cx.h(t).hermiticity_defect()));
    cx.result("hermiticity", r, 1e-12)
}

fn closed_form(cx: &Ctx, times: &[f64]) -> CheckResult {
    let c = cx.cfg;
    let out = cx.out;
    let diffs = Exec::Parallel.map(times, |&t| {
        let h = out.hminus(t).expect("gauge validated before checks");
        let want = match out.family() {
            Family::Spin(s) => quadrupole_partner(s, &c.f, &c.g, &c.theta, &c.phi, t),
            Family::Oscillator(o) => o.combine(closed_form_osc_r(&c.f, &c.theta, &c.phi, t)),
        };
        cx.norm(&(h - want))
    });
    cx.result("closed_form", max_of(&diffs), if cx.spin() { 1e-9 } else { 1e-6 })
}

fn lvn(cx: &Ctx, times: &[f64]) -> CheckResult {
    let out = cx.out;
    let r = Exec::Parallel.map(times, |&t| {
        if cx.spin() {
            lvn_residual(|t| out.iminus(t), |t| cx.h(t), t)
        } else {
            cx.norm(&lvn_defect(|t| out.iminus(t), |t| cx.h(t), t))
        }
    });
    cx.result("lvn", max_of(&r), if cx.spin() { 1e-6 } else { 1e-4 })
}

fn unitarity(cx: &mut Ctx, times: &[f64]) -> Result<Option<CheckResult>, CliError> {
    if !cx.spin() {
        cx.warnings.push("unitarity of U- is not defined on a truncated Fock space; skipped".into());
        return Ok(None);
    }
    let mut worst = 0.0f64;
    for &t in times {
        worst = worst.max(unitarity_defect(&cx.out.uminus(t)?));
    }
    Ok(Some(cx.result("unitarity", worst, 1e-10)))
}

fn solutions(cx: &Ctx, states: &[State]) -> Result<CheckResult, CliError> {
    let t_end = cx.cfg.t_end;
    let mut worst = 0.0f64;
    for psi in states {
        for t in [0.25 * t_end, 0.5 * t_end, t_end] {
            let step = 1e-6 * t.abs().max(1.0);
            let r = schrodinger_residual(|t| cx.out.mapped_solution(psi, t).expect("paired level"), |t| cx.h(t), t, step);
            worst = worst.max(r);
        }
    }
    Ok(cx.result("solutions", worst, 1e-5))
}

fn propagation(cx: &Ctx, states: &[State]) -> Result<CheckResult, CliError> {
    let grid = cx.cfg.grid();
    let starts: Vec<State> = states.iter().map(|s| cx.out.mapped_solution(s, 0.0)).collect::<Result<_, _>>()?;
    let trajs = propagate_many(|t| cx.h(t), &starts, &grid)?;
    let mut worst = 0.0f64;
    for (psi, traj) in states.iter().zip(&trajs) {
        let want = cx.out.mapped_solution(psi, grid.last())?;
        worst = worst.max(infidelity(traj.final_state(), &want));
    }
    Ok(cx.result("propagation", worst, if cx.spin() { 1e-7 } else { 1e-5 }))
}

/// Closed-form `R` against the gauge formula on seeded random gauges.
fn random_draws(cx: &Ctx) -> Result<CheckResult, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cx.opts.seed);
    let draws: Vec<GaugeDraw> =
        (0..cx.cfg.draws).map(|_| GaugeDraw::from_uniforms(std::array::from_fn(|_| rng.random()), 1.0)).collect();
    let times = sample_times(cx.cfg.t_end, 10);
    let family = cx.out.family().clone();
    let results = Exec::Parallel.map(&draws, |d| -> Result<f64, CliError> {
        let sys = match &family {
            Family::Spin(s) => {
                SuperSystem::spin(s.clone(), 1.0, d.theta.clone(), d.phi.clone(), d.f.clone(), TimeFunction::zero())?
            }
            Family::Oscillator(o) => SuperSystem::oscillator(o.clone(), d.theta.clone(), d.phi.clone(), d.f.clone())?,
        };
        let mut worst = 0.0f64;
        for &t in &times {
            let h = hamiltonian_from_gauge(&sys.wminus, &sys.yminus, t)?;
            let diff = match &family {
                Family::Spin(s) => (h - s.combine(closed_form_spin_r(&d.f, &d.theta, &d.phi, t))).norm(),
                Family::Oscillator(o) => o.interior_norm(&(h - o.combine(closed_form_osc_r(&d.f, &d.theta, &d.phi, t)))),
            };
            worst = worst.max(diff);
        }
        Ok(worst)
    });
    let worst = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(cx.result("random_draws", max_of(&worst), if cx.spin() { 1e-9 } else { 1e-6 }))
}

pub fn run_checks(cfg: &RunConfig, out: &PartnerOutput, opts: CheckOptions) -> Result<VerifyReport, CliError> {
    // fail early on an unusable gauge rather than inside a worker
    out.hminus(0.0)?;
    let mut cx = Ctx { cfg, out, opts, warnings: Vec::new() };
    let times = cx.times();
    let wants = |name: &str| cfg.suites.iter().any(|s| s == name);
    let states = if wants("solutions") || wants("propagation") { cx.mapped_levels() } else { Vec::new() };
    let mut checks = Vec::new();
    if wants("superalgebra") {
        checks.push(superalgebra(&cx)?);
    }
    if wants("spectrum") {
        checks.extend(spectrum(&mut cx)?);
    }
    if wants("pairing") {
        checks.push(pairing(&mut cx));
    }
    if wants("hermiticity") {
        checks.push(hermiticity(&cx, &times));
    }
    if wants("closed_form") {
        checks.push(closed_form(&cx, &times));
    }
    if wants("lvn") {
        checks.push(lvn(&cx, &times));
    }
    if wants("unitarity") {
        checks.extend(unitarity(&mut cx, &times)?);
    }
    if !states.is_empty() {
        if wants("solutions") {
            checks.push(solutions(&cx, &states)?);
        }
        if wants("propagation") {
            checks.push(propagation(&cx, &states)?);
        }
    }
    if wants("random_draws") {
        checks.push(random_draws(&cx)?);
    }
    let family = if cx.spin() { "spin" } else { "oscillator" }.to_string();
    Ok(VerifyReport {
        family,
        negative_control: opts.wrong_h,
        tolerance_scale: opts.tolerance_scale,
        seed: opts.seed,
        pass: checks.iter().all(|c| c.pass),
        warnings: cx.warnings,
        checks,
    })
}
