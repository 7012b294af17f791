use proptest::prelude::*;
use susyinv::construction::{
    closed_form_osc_r, closed_form_spin_r, hamiltonian_from_gauge, run_prescription, GaugeDraw, SuperSystem,
};
use susyinv::dynamics::{propagate, Grid};
use susyinv::operator::{unitarity_defect, Operator, C64};
use susyinv::reps::{make_oscillator, make_spin};
use susyinv::susy::{build_invariant, build_supercharge, check_superalgebra, pair_spectra};
use susyinv::TimeFunction;

fn complex_matrix(n: usize) -> impl Strategy<Value = Operator> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n)
        .prop_map(move |v| Operator::from_fn(n, |r, c| C64::new(v[2 * (r * n + c)], v[2 * (r * n + c) + 1])))
}

fn draw() -> impl Strategy<Value = GaugeDraw> {
    prop::array::uniform6(0.0f64..1.0).prop_map(|u| GaugeDraw::from_uniforms(u, 1.0))
}

fn two_j() -> impl Strategy<Value = f64> {
    (1u32..=4).prop_map(|k| k as f64 / 2.0)
}

fn simple_function() -> impl Strategy<Value = TimeFunction> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.5f64..4.0, -1.0f64..1.0).prop_map(|(a, b, w, p)| {
        TimeFunction::linear(a, b).add(&TimeFunction::sin(b, w, p)).add(&TimeFunction::cos(a, w, 0.0))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn antiderivative_inverts_derivative(f in simple_function(), t in -5.0f64..5.0) {
        let g = f.antiderivative().unwrap();
        prop_assert!(g.eval(0.0).abs() < 1e-12);
        prop_assert!((g.derivative().eval(t) - f.eval(t)).abs() < 1e-10 * (1.0 + t.abs()).powi(2));
    }

    #[test]
    fn product_rule(f in simple_function(), g in simple_function(), t in -3.0f64..3.0) {
        let lhs = f.mul(&g).unwrap().derivative().eval(t);
        let rhs = f.derivative().eval(t) * g.eval(t) + f.eval(t) * g.derivative().eval(t);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn display_parses_back(f in simple_function(), t in -3.0f64..3.0) {
        let back = TimeFunction::parse(&f.to_string()).unwrap();
        prop_assert!((back.eval(t) - f.eval(t)).abs() < 1e-9 * (1.0 + f.eval(t).abs()));
    }

    #[test]
    fn superalgebra_holds(d in complex_matrix(5)) {
        let q = build_supercharge(&d);
        let inv = build_invariant(&q);
        prop_assert!(check_superalgebra(&q, &inv).unwrap().max() < 1e-12);
        prop_assert!(inv.i.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn partners_share_positive_spectrum(d in complex_matrix(4)) {
        let inv = build_invariant(&build_supercharge(&d));
        let pairing = pair_spectra(&inv).unwrap();
        prop_assert!(pairing.pairing_residual(&d) < 1e-9);
        prop_assert!(pairing.unitarity_defect() < 1e-9);
    }

    #[test]
    fn spin_gauge_matches_closed_form(j in two_j(), d in draw(), t in 0.0f64..10.0) {
        let s = make_spin(j).unwrap();
        let sys = SuperSystem::spin(s.clone(), 1.0, d.theta.clone(), d.phi.clone(), d.f.clone(), TimeFunction::zero()).unwrap();
        let h = hamiltonian_from_gauge(&sys.wminus, &sys.yminus, t).unwrap();
        prop_assert!(h.hermiticity_defect() < 1e-13);
        let r = closed_form_spin_r(&d.f, &d.theta, &d.phi, t);
        prop_assert!((h - s.combine(r)).norm() < 1e-9);
    }

    #[test]
    fn oscillator_gauge_matches_closed_form(d in draw(), t in 0.0f64..10.0) {
        let o = make_oscillator(32, 4).unwrap();
        let sys = SuperSystem::oscillator(o.clone(), d.theta.clone(), d.phi.clone(), d.f.clone()).unwrap();
        let h = hamiltonian_from_gauge(&sys.wminus, &sys.yminus, t).unwrap();
        let r = closed_form_osc_r(&d.f, &d.theta, &d.phi, t);
        prop_assert!(o.interior_norm(&(h - o.combine(r))) < 1e-9);
    }

    #[test]
    fn invariant_transport(j in two_j(), d in draw(), t in 0.0f64..10.0) {
        let s = make_spin(j).unwrap();
        let sys = SuperSystem::spin(s, 1.0, d.theta, d.phi, d.f, TimeFunction::zero()).unwrap();
        let out = run_prescription(&sys).unwrap();
        let u = out.uminus(t).unwrap();
        prop_assert!(unitarity_defect(&u) < 1e-12);
        let moved = &(&u * &out.invariant0.iminus) * &u.adjoint();
        prop_assert!((moved - out.iminus(t)).norm() < 1e-9);
    }

    #[test]
    fn propagation_conserves_norm(d in draw()) {
        let s = make_spin(1.0).unwrap();
        let sys = SuperSystem::spin(s.clone(), 1.0, d.theta, d.phi, d.f, TimeFunction::zero()).unwrap();
        let out = run_prescription(&sys).unwrap();
        let psi0 = s.basis_state(0.0).unwrap();
        let traj = propagate(|t| out.hminus(t).unwrap(), &psi0, &Grid::uniform(1.0, 0.01).unwrap()).unwrap();
        prop_assert!(traj.max_norm_drift() < 1e-9);
    }
}
