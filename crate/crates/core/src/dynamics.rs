//! Verification engine: a unitary midpoint propagator, Liouville–von Neumann
//! and intertwining residuals, the projected matrix Schrödinger equation of a
//! degenerate invariant level, and discretized non-Abelian holonomies.

use crate::error::{Error, Result};
use crate::operator::{eigenphases, eigh, polar_unitary, unitary_exp, Matrix, Operator, State, C64, I};

/// Strictly increasing sample times starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    times: Vec<f64>,
}

impl Grid {
    /// `0, dt, 2dt, …, T`. `T` must be a multiple of `dt` up to 1e-9 relative.
    pub fn uniform(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidGrid(format!("T={t_end}, dt={dt}")));
        }
        let steps = (t_end / dt).round();
        if (steps * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
            return Err(Error::InvalidGrid(format!("T={t_end} is not a multiple of dt={dt}")));
        }
        let times = (0..=steps as usize).map(|k| k as f64 * dt).collect();
        Ok(Self { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::InvalidGrid("grid must start at t=0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }

    /// Same span with every step halved.
    pub fn refined(&self) -> Self {
        let mut times = Vec::with_capacity(2 * self.times.len());
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
        times.push(self.last());
        Self { times }
    }
}

/// States sampled on a grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Grid,
    pub states: Vec<State>,
    /// `|‖ψ(t)‖ − ‖ψ(0)‖|` per grid point.
    pub norm_drift: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.norm_drift.iter().copied().fold(0.0, f64::max)
    }
}

/// Evolution operators sampled on a grid.
#[derive(Clone, Debug)]
pub struct OperatorTrajectory {
    pub grid: Grid,
    pub ops: Vec<Operator>,
    pub unitarity_defect: Vec<f64>,
}

fn check_step(h: &Operator, t: f64, dt: f64) -> Result<()> {
    // the induced 1-norm bounds the spectral norm
    let norm = h.one_norm();
    let product = norm * dt;
    if product >= 0.5 || !product.is_finite() {
        return Err(Error::StepTooLarge { t, product, suggested: 0.45 / norm });
    }
    Ok(())
}

/// `exp(−i dt H) Ψ` for a block of column states, by a Taylor series.
fn exp_apply_block(h: &Operator, dt: f64, psi: &Matrix) -> Matrix {
    let mut out = psi.clone();
    let mut term = psi.clone();
    let scale = crate::operator::frobenius(psi).max(f64::MIN_POSITIVE);
    for k in 1..60 {
        term = (h.matrix() * &term) * (-I * (dt / k as f64));
        out += &term;
        if crate::operator::frobenius(&term) < 1e-18 * scale {
            break;
        }
    }
    out
}

/// Integrates `i dψ/dt = H(t) ψ` with the midpoint rule: each step applies
/// `exp(−i Δt H(t + Δt/2))` exactly.
pub fn propagate<F>(h: F, psi0: &State, grid: &Grid) -> Result<Trajectory>
where
    F: Fn(f64) -> Operator,
{
    let norm = psi0.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm });
    }
    let block = Matrix::from_columns(std::slice::from_ref(psi0));
    let mut out = propagate_block(h, &block, grid)?;
    Ok(out.pop().expect("one column"))
}

/// Propagates several initial states under the same `H(t)`, sharing the
/// Hamiltonian evaluations. States need not be normalized.
pub fn propagate_many<F>(h: F, states: &[State], grid: &Grid) -> Result<Vec<Trajectory>>
where
    F: Fn(f64) -> Operator,
{
    if states.is_empty() {
        return Ok(Vec::new());
    }
    propagate_block(h, &Matrix::from_columns(states), grid)
}

fn propagate_block<F>(h: F, psi0: &Matrix, grid: &Grid) -> Result<Vec<Trajectory>>
where
    F: Fn(f64) -> Operator,
{
    let t = grid.times();
    let n0: Vec<f64> = psi0.column_iter().map(|c| c.norm()).collect();
    let mut samples = vec![psi0.clone()];
    let mut psi = psi0.clone();
    for w in t.windows(2) {
        let dt = w[1] - w[0];
        let mid = w[0] + 0.5 * dt;
        let hm = h(mid);
        if hm.dim() != psi.nrows() {
            return Err(Error::DimensionMismatch { left: hm.dim(), right: psi.nrows() });
        }
        check_step(&hm, mid, dt)?;
        psi = if 4 * psi.ncols() > hm.dim() {
            // one spectral exponential beats a Taylor series on many columns
            unitary_exp(&hm, dt)?.matrix() * &psi
        } else {
            exp_apply_block(&hm, dt, &psi)
        };
        samples.push(psi.clone());
    }
    Ok((0..psi0.ncols())
        .map(|k| {
            let states: Vec<State> = samples.iter().map(|m| m.column(k).into_owned()).collect();
            let norm_drift = states.iter().map(|s| (s.norm() - n0[k]).abs()).collect();
            Trajectory { grid: grid.clone(), states, norm_drift }
        })
        .collect())
}

/// Evolution operator `U(t)` with `U(0) = 1` by the same midpoint rule,
/// each factor a spectral exponential.
pub fn propagate_operator<F>(h: F, dim: usize, grid: &Grid) -> Result<OperatorTrajectory>
where
    F: Fn(f64) -> Operator,
{
    let mut u = Operator::identity(dim);
    let mut ops = vec![u.clone()];
    for w in grid.times().windows(2) {
        let dt = w[1] - w[0];
        let mid = w[0] + 0.5 * dt;
        let hm = h(mid);
        check_step(&hm, mid, dt)?;
        u = &unitary_exp(&hm, dt)? * &u;
        ops.push(u.clone());
    }
    let unitarity_defect = ops.iter().map(crate::operator::unitarity_defect).collect();
    Ok(OperatorTrajectory { grid: grid.clone(), ops, unitarity_defect })
}

/// Central-difference step `1e-5·max(1, |t|)` used by every diagnostic.
pub fn fd_step(t: f64) -> f64 {
    1e-5 * t.abs().max(1.0)
}

/// Fixed step for `dI/dt`. A step growing with `t` lets the truncation
/// error of fast invariants (`ω ~ 4`, `t ~ 10`) reach 1e-6 on its own.
pub const LVN_STEP: f64 = 1e-5;

/// `dI/dt − i[I, H]` at `t`, `dI/dt` by central differences.
pub fn lvn_defect<FI, FH>(invariant: FI, h: FH, t: f64) -> Operator
where
    FI: Fn(f64) -> Operator,
    FH: Fn(f64) -> Operator,
{
    let step = LVN_STEP;
    let di = (invariant(t + step) - invariant(t - step)).scale(0.5 / step);
    lvn_defect_exact(&invariant(t), &di, &h(t))
}

/// `dI/dt − i[I, H]` with a supplied derivative.
pub fn lvn_defect_exact(i: &Operator, di: &Operator, h: &Operator) -> Operator {
    di - &(&(i * h) - &(h * i)).scale_c(I)
}

/// `‖dI/dt − i[I, H]‖`.
pub fn lvn_residual<FI, FH>(invariant: FI, h: FH, t: f64) -> f64
where
    FI: Fn(f64) -> Operator,
    FH: Fn(f64) -> Operator,
{
    lvn_defect(invariant, h, t).norm()
}

/// `i ḋ − H₋ d + d H₊` at `t`, `ḋ` by central differences.
pub fn intertwining_defect<FD, FP, FM>(d: FD, hplus: FP, hminus: FM, t: f64) -> Operator
where
    FD: Fn(f64) -> Operator,
    FP: Fn(f64) -> Operator,
    FM: Fn(f64) -> Operator,
{
    let step = fd_step(t);
    let dd = (d(t + step) - d(t - step)).scale(0.5 / step);
    let dt = d(t);
    dd.scale_c(I) - &hminus(t) * &dt + &dt * &hplus(t)
}

/// `‖i ḋ − H₋ d + d H₊‖`.
pub fn intertwining_residual<FD, FP, FM>(d: FD, hplus: FP, hminus: FM, t: f64) -> f64
where
    FD: Fn(f64) -> Operator,
    FP: Fn(f64) -> Operator,
    FM: Fn(f64) -> Operator,
{
    intertwining_defect(d, hplus, hminus, t).norm()
}

/// `‖i dψ/dt − H ψ‖` for a state curve, central differences with step `h`.
pub fn schrodinger_residual<FS, FH>(psi: FS, h: FH, t: f64, step: f64) -> f64
where
    FS: Fn(f64) -> State,
    FH: Fn(f64) -> Operator,
{
    let dpsi = (psi(t + step) - psi(t - step)) * C64::new(0.5 / step, 0.0);
    (dpsi * I - h(t).apply(&psi(t))).norm()
}

/// `1 − |⟨a|b⟩|²` for normalized states, floored at zero against rounding.
pub fn infidelity(a: &State, b: &State) -> f64 {
    (1.0 - a.dotc(b).norm_sqr()).max(0.0)
}

/// Eigenframe of one invariant level together with its projected dynamics.
#[derive(Clone, Debug)]
pub struct ProjectedTrajectory {
    pub grid: Grid,
    pub value: f64,
    /// Continuous frame `|λ, a; t⟩` as columns.
    pub frames: Vec<Matrix>,
    /// `uⁿ(t)` with `uⁿ(0) = 1`.
    pub u: Vec<Matrix>,
}

impl ProjectedTrajectory {
    pub fn degeneracy(&self) -> usize {
        self.u[0].nrows()
    }

    /// `Σ_b uⁿ_{ba}(t) |λ, b; t⟩` at grid index `k`.
    pub fn solution(&self, k: usize, a: usize) -> State {
        &self.frames[k] * self.u[k].column(a)
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.u
            .iter()
            .map(|u| crate::operator::frobenius(&(u.adjoint() * u - Matrix::identity(u.nrows(), u.nrows()))))
            .fold(0.0, f64::max)
    }
}

/// Frame of the eigenvalue group nearest `value`, aligned with `previous`.
fn aligned_frame(inv: &Operator, value: f64, size: usize, previous: Option<&Matrix>, t: f64) -> Result<Matrix> {
    let es = eigh(inv)?;
    let (g, range) = es
        .degeneracy_groups
        .iter()
        .enumerate()
        .min_by(|a, b| (es.values[a.1.start] - value).abs().total_cmp(&(es.values[b.1.start] - value).abs()))
        .map(|(g, r)| (g, r.clone()))
        .ok_or(Error::LevelCrossing { t })?;
    let gap = crate::operator::degeneracy_gap(inv.norm());
    if range.len() != size || (es.group_value(g) - value).abs() > 1e3 * gap.max(1e-9) {
        return Err(Error::LevelCrossing { t });
    }
    let raw = es.group_vectors(g);
    Ok(match previous {
        // the unitary maximizing Re tr(F_prev† F) is the polar factor of raw† F_prev
        Some(prev) => &raw * polar_unitary(&(raw.adjoint() * prev)),
        None => raw,
    })
}

/// Solves `i duⁿ/dt = (ℰⁿ − 𝒜ⁿ) uⁿ`, `uⁿ(0) = 1`, on level `level` (index
/// into the distinct eigenvalues of `I(0)`, ascending). Frames are
/// recomputed at every grid point and half-step and kept continuous by
/// polar alignment; `𝒜ⁿ` comes from differences of neighbouring frames.
pub fn projected_schrodinger<FI, FH>(invariant: FI, h: FH, level: usize, grid: &Grid) -> Result<ProjectedTrajectory>
where
    FI: Fn(f64) -> Operator,
    FH: Fn(f64) -> Operator,
{
    let es0 = eigh(&invariant(0.0))?;
    let groups = es0.degeneracy_groups.len();
    if level >= groups {
        return Err(Error::NoSuchLevel { level, available: groups });
    }
    let value = es0.group_value(level);
    let size = es0.degeneracy_groups[level].len();
    let mut frame = aligned_frame(&invariant(0.0), value, size, None, 0.0)?;
    let mut frames = vec![frame.clone()];
    let mut u = Matrix::identity(size, size);
    let mut us = vec![u.clone()];
    for w in grid.times().windows(2) {
        let dt = w[1] - w[0];
        let mid = w[0] + 0.5 * dt;
        let fm = aligned_frame(&invariant(mid), value, size, Some(&frame), mid)?;
        let next = aligned_frame(&invariant(w[1]), value, size, Some(&fm), w[1])?;
        let energy = fm.adjoint() * h(mid).matrix() * &fm;
        let connection = (fm.adjoint() * (&next - &frame)) * (I / dt);
        let delta = energy - connection;
        let delta = (&delta + delta.adjoint()) * C64::new(0.5, 0.0);
        let step = unitary_exp(&Operator::new(delta)?, dt)?;
        u = step.matrix() * &u;
        frame = next;
        frames.push(frame.clone());
        us.push(u.clone());
    }
    Ok(ProjectedTrajectory { grid: grid.clone(), value, frames, u: us })
}

/// Discretized holonomy of a closed frame loop.
#[derive(Clone, Debug)]
pub struct HolonomyResult {
    pub level: usize,
    pub steps: usize,
    /// `Γ`, a `dₙ × dₙ` unitary.
    pub gamma: Matrix,
    pub unitarity_defect: f64,
}

impl HolonomyResult {
    /// Eigenphases of `Γ` in `(−π, π]`, ascending.
    pub fn phases(&self) -> Vec<f64> {
        eigenphases(&self.gamma)
    }
}

/// `Γ = M_{K−1} ⋯ M₀` with `M_k` the polar factor of `F(s_{k+1})† F(s_k)`,
/// for a frame `F(s)`, `s ∈ [0, 1]`, whose columns span the level. The loop
/// must close: `F(1) = F(0)`.
pub fn berry_holonomy<F>(frame: F, level: usize, steps: usize) -> Result<HolonomyResult>
where
    F: Fn(f64) -> Matrix,
{
    if steps == 0 {
        return Err(Error::InvalidGrid("holonomy needs at least one step".into()));
    }
    let start = frame(0.0);
    let mismatch = crate::operator::frobenius(&(frame(1.0) - &start));
    if mismatch > 1e-12 * start.norm().max(1.0) {
        return Err(Error::OpenLoop { mismatch });
    }
    let d = start.ncols();
    let mut gamma = Matrix::identity(d, d);
    let mut prev = start;
    for k in 1..=steps {
        let next = frame(k as f64 / steps as f64);
        gamma = polar_unitary(&(next.adjoint() * &prev)) * gamma;
        prev = next;
    }
    let unitarity_defect = crate::operator::frobenius(&(gamma.adjoint() * &gamma - Matrix::identity(d, d)));
    Ok(HolonomyResult { level, steps, gamma, unitarity_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{c, frobenius};
    use crate::reps::make_spin;
    use std::f64::consts::PI;

    #[test]
    fn grid_construction() {
        let g = Grid::uniform(1.0, 0.25).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.refined().len(), 9);
        assert!(Grid::uniform(1.0, 0.3).is_err());
        assert!(Grid::uniform(1.0, 0.0).is_err());
        assert!(Grid::from_times(vec![0.0, 0.5, 0.5]).is_err());
        assert!(Grid::from_times(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn constant_field_gives_phase() {
        let s = make_spin(1.0).unwrap();
        let h = s.j3.scale(0.7);
        let psi0 = s.basis_state(1.0).unwrap();
        let traj = propagate(|_| h.clone(), &psi0, &Grid::uniform(2.0, 0.01).unwrap()).unwrap();
        let want = psi0.clone() * (-I * 0.7 * 2.0).exp();
        assert!((traj.final_state() - want).norm() < 1e-12);
        assert!(traj.max_norm_drift() < 1e-13);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let psi0 = State::from_vec(vec![c(0.6), C64::new(0.0, 0.8)]);
        let traj = propagate(|_| Operator::zeros(2), &psi0, &Grid::uniform(1.0, 0.1).unwrap()).unwrap();
        assert_eq!(traj.final_state(), &psi0);
    }

    #[test]
    fn rejects_large_steps_and_bad_states() {
        let s = make_spin(0.5).unwrap();
        let psi0 = s.basis_state(0.5).unwrap();
        let err = propagate(|_| s.j3.scale(100.0), &psi0, &Grid::uniform(1.0, 0.1).unwrap()).unwrap_err();
        match err {
            Error::StepTooLarge { suggested, .. } => assert!((suggested - 0.009).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let bad = psi0 * c(2.0);
        assert!(matches!(propagate(|_| s.j3.clone(), &bad, &Grid::uniform(1.0, 0.1).unwrap()), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn second_order_convergence() {
        let s = make_spin(0.5).unwrap();
        let h = |t: f64| s.combine([(2.0 * t).cos(), (2.0 * t).sin(), 0.5]);
        let psi0 = s.basis_state(0.5).unwrap();
        let fine = propagate(h, &psi0, &Grid::uniform(2.0, 1e-4).unwrap()).unwrap();
        let err = |dt: f64| (propagate(h, &psi0, &Grid::uniform(2.0, dt).unwrap()).unwrap().final_state() - fine.final_state()).norm();
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn operator_propagation_is_unitary() {
        let s = make_spin(1.0).unwrap();
        let h = |t: f64| s.combine([t.sin(), 0.3, 1.0]);
        let traj = propagate_operator(h, 3, &Grid::uniform(1.0, 0.01).unwrap()).unwrap();
        assert!(traj.unitarity_defect.iter().all(|&d| d < 1e-12));
        let psi0 = s.basis_state(0.0).unwrap();
        let states = propagate(h, &psi0, &Grid::uniform(1.0, 0.01).unwrap()).unwrap();
        assert!((traj.ops.last().unwrap().apply(&psi0) - states.final_state()).norm() < 1e-12);
    }

    #[test]
    fn lvn_residual_trivial_cases() {
        let s = make_spin(1.0).unwrap();
        assert!(lvn_residual(|_| s.j3.clone(), |_| s.j3.scale(2.0), 0.5) < 1e-12);
        assert!(lvn_residual(|_| s.j3.clone(), |_| s.j1.clone(), 0.5) > 0.5);
    }

    #[test]
    fn intertwining_trivial_case() {
        let s = make_spin(1.0).unwrap();
        let h = s.j3.scale(1.5);
        let d = &s.jsquared * &s.j3;
        assert!(intertwining_residual(|_| d.clone(), |_| h.clone(), |_| h.clone(), 0.0) < 1e-12);
    }

    #[test]
    fn projected_constant_level() {
        let s = make_spin(1.0).unwrap();
        let inv = &s.j3 * &s.j3;
        let h = s.j3.scale(0.8);
        // level 1 of J₃² is the doublet m = ±1 with energies ±0.8
        let traj = projected_schrodinger(|_| inv.clone(), |_| h.clone(), 1, &Grid::uniform(1.0, 0.01).unwrap()).unwrap();
        assert_eq!(traj.degeneracy(), 2);
        assert!(traj.max_unitarity_defect() < 1e-12);
        let phases = eigenphases(traj.u.last().unwrap());
        assert!((phases[0] + 0.8).abs() < 1e-10 && (phases[1] - 0.8).abs() < 1e-10);
        assert!(matches!(
            projected_schrodinger(|_| inv.clone(), |_| h.clone(), 2, &Grid::uniform(1.0, 0.5).unwrap()),
            Err(Error::NoSuchLevel { .. })
        ));
    }

    #[test]
    fn crossing_is_detected() {
        let s = make_spin(0.5).unwrap();
        let inv = |t: f64| s.j3.scale(1.0 - t);
        let err = projected_schrodinger(inv, |_| Operator::zeros(2), 0, &Grid::uniform(2.0, 0.1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::LevelCrossing { .. }));
    }

    fn cone_frame(theta: f64) -> impl Fn(f64) -> Matrix {
        // spin-up along the direction (θ, φ = 2πs), single-valued in s
        move |s: f64| {
            let phi = 2.0 * PI * s;
            Matrix::from_column_slice(2, 1, &[c((theta / 2.0).cos()), (I * phi).exp() * (theta / 2.0).sin()])
        }
    }

    #[test]
    fn holonomy_constant_and_cone() {
        let h = berry_holonomy(|_| Matrix::identity(3, 2), 0, 50).unwrap();
        assert!(frobenius(&(h.gamma - Matrix::identity(2, 2))) < 1e-12);
        // solid angle: Γ = exp(−iπ(1 − cosθ)) for this frame
        let theta = PI / 3.0;
        let h = berry_holonomy(cone_frame(theta), 0, 4000).unwrap();
        let want = (-I * PI * (1.0 - theta.cos())).exp();
        assert!((h.gamma[(0, 0)] - want).norm() < 1e-5);
        assert!(h.unitarity_defect < 1e-12);
        let back = berry_holonomy(|s| cone_frame(theta)(1.0 - s), 0, 4000).unwrap();
        assert!((back.gamma[(0, 0)] - h.gamma[(0, 0)].conj()).norm() < 1e-12);
    }

    #[test]
    fn open_loop_rejected() {
        let f = |s: f64| Matrix::from_column_slice(2, 1, &[c((s * 1.0).cos()), c((s * 1.0).sin())]);
        assert!(matches!(berry_holonomy(f, 0, 10), Err(Error::OpenLoop { .. })));
        assert!(berry_holonomy(|_| Matrix::identity(2, 1), 0, 0).is_err());
    }

    #[test]
    fn holonomy_gauge_covariance() {
        let s = make_spin(1.0).unwrap();
        // doublet m = ±1 dragged around by a rotation about x; the frame closes
        let rot = |s_: f64| crate::operator::unitary_exp(&s.j1, -2.0 * PI * s_).unwrap();
        let base = Matrix::from_columns(&[s.basis_state(1.0).unwrap(), s.basis_state(-1.0).unwrap()]);
        let frame = |x: f64| rot(x).matrix() * &base;
        let h = berry_holonomy(frame, 0, 400).unwrap();
        let g = polar_unitary(&Matrix::from_row_slice(2, 2, &[c(1.0), C64::new(0.3, 0.2), c(-0.4), c(0.9)]));
        let h2 = berry_holonomy(|x| frame(x) * &g, 0, 400).unwrap();
        let want = g.adjoint() * &h.gamma * &g;
        assert!(frobenius(&(h2.gamma - want)) < 1e-8);
    }
}
