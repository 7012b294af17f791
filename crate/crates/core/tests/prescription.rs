use std::f64::consts::PI;

use susyinv::construction::{
    oscillator_mapped_closed_form, run_prescription, spin_mapped_closed_form, EulerGauge, SuperSystem,
};
use susyinv::dynamics::{
    berry_holonomy, infidelity, lvn_residual, projected_schrodinger, propagate, schrodinger_residual, Grid,
};
use susyinv::reps::{hermite_state, make_oscillator, make_spin};
use susyinv::TimeFunction;

fn tf(s: &str) -> TimeFunction {
    TimeFunction::parse(s).unwrap()
}

#[test]
fn spin_solutions_solve_partner_equation() {
    let s = make_spin(1.5).unwrap();
    let sys = SuperSystem::spin(s.clone(), 1.0, tf("0.5*sin(1.5*t)"), tf("t + 0.3*cos(t)"), tf("0.7"), tf("0.2")).unwrap();
    let out = run_prescription(&sys).unwrap();
    for m in [-1.5, -0.5, 0.5] {
        let psi0 = s.basis_state(m).unwrap();
        for t in [0.4, 2.0] {
            let res = schrodinger_residual(|t| out.mapped_solution(&psi0, t).unwrap(), |t| out.hminus(t).unwrap(), t, 1e-6);
            assert!(res < 1e-5, "m={m} t={t} res={res}");
        }
        let closed = spin_mapped_closed_form(&out, m, 1.0).unwrap();
        assert!((closed - out.mapped_solution(&psi0, 1.0).unwrap()).norm() < 1e-12);
    }
}

#[test]
fn bosonic_solutions_are_phases() {
    let s = make_spin(1.0).unwrap();
    let zero = TimeFunction::zero();
    let sys = SuperSystem::spin(s.clone(), 1.3, zero.clone(), zero.clone(), zero.clone(), zero).unwrap();
    let out = run_prescription(&sys).unwrap();
    let psi0 = s.basis_state(-1.0).unwrap();
    let traj = propagate(|t| out.hplus(t), &psi0, &Grid::uniform(3.0, 0.01).unwrap()).unwrap();
    assert!(infidelity(traj.final_state(), &out.plus_solution(&psi0, 3.0)) < 1e-12);
}

#[test]
fn projected_equation_reproduces_mapped_solution() {
    let s = make_spin(0.5).unwrap();
    let sys = SuperSystem::spin(s.clone(), 1.0, tf("0.6*sin(2*t)"), tf("2*t"), tf("0.5"), TimeFunction::zero()).unwrap();
    let out = run_prescription(&sys).unwrap();
    let grid = Grid::uniform(3.0, 1e-3).unwrap();
    // positive level of I₋ is the top of its spectrum
    let traj = projected_schrodinger(|t| out.iminus(t), |t| out.hminus(t).unwrap(), 1, &grid).unwrap();
    assert!((traj.value - 0.5).abs() < 1e-12);
    assert!(traj.max_unitarity_defect() < 1e-8);
    let down = s.basis_state(-0.5).unwrap();
    let mapped0 = out.mapped_solution(&down, 0.0).unwrap();
    let phase0 = traj.frames[0].column(0).dotc(&mapped0);
    let last = grid.len() - 1;
    let rebuilt = traj.solution(last, 0) * phase0;
    assert!(infidelity(&rebuilt, &out.mapped_solution(&down, 3.0).unwrap()) < 1e-6);
    assert!((rebuilt - out.mapped_solution(&down, 3.0).unwrap()).norm() < 1e-4);
}

#[test]
fn oscillator_prescription_dynamics() {
    let o = make_oscillator(48, 6).unwrap();
    let sys = SuperSystem::oscillator(o.clone(), tf("0.4*sin(t)"), tf("1.5*t"), tf("0.5 + 0.2*cos(t)")).unwrap();
    let out = run_prescription(&sys).unwrap();
    for t in [0.0, 1.3, 4.0] {
        let r = lvn_residual(|t| out.iminus(t), |t| out.hminus(t).unwrap(), t);
        let interior = o.interior_norm(&susyinv::dynamics::lvn_defect(|t| out.iminus(t), |t| out.hminus(t).unwrap(), t));
        assert!(interior < 1e-6, "t={t} interior={interior}");
        assert!(r.is_finite());
    }
    for n in [0, 2, 5] {
        let psi0 = hermite_state(&o, n).unwrap();
        let general = out.mapped_solution(&psi0, 2.0).unwrap();
        let closed = oscillator_mapped_closed_form(&out, n, 2.0).unwrap();
        assert!((general - closed).norm() < 1e-11);
        let start = oscillator_mapped_closed_form(&out, n, 0.0).unwrap();
        let traj = propagate(|t| out.hminus(t).unwrap(), &start, &Grid::uniform(2.0, 2e-3).unwrap()).unwrap();
        assert!(infidelity(traj.final_state(), &oscillator_mapped_closed_form(&out, n, 2.0).unwrap()) < 1e-8);
    }
}

#[test]
fn cone_holonomy_of_partner_frame() {
    let s = make_spin(0.5).unwrap();
    let theta = PI / 3.0;
    let gauge = EulerGauge::spin(&s, TimeFunction::constant(theta), TimeFunction::zero());
    let up = s.basis_state(0.5).unwrap();
    let frame = |x: f64| gauge.w_at(theta, 2.0 * PI * x).apply(&up);
    let h = berry_holonomy(|x| nalgebra::DMatrix::from_columns(&[frame(x)]), 0, 4000).unwrap();
    // exp(2πi m (cosθ − 1)) for m = 1/2
    let want = susyinv::C64::from_polar(1.0, PI * (theta.cos() - 1.0));
    assert!((h.gamma[(0, 0)] - want).norm() < 1e-5);
    assert!((h.phases()[0] - want.arg()).abs() < 1e-5);
}
