//! Partner Hamiltonians from a unitary gauge curve.
//!
//! A Hamiltonian admitting the invariant `I(t) = W(t) I(0) W(t)†` has the
//! form `H = W Y W† − i W Ẇ†` with `[Y, I(0)] = 0`, and its evolution
//! operator is `U = W V` with `V = exp(−i∫₀ᵗ Y)` whenever the `Y(t)` commute.
//! Starting from a solvable `H₊` with known `U₊`, a constant `d₀` and a gauge
//! `W₋`, the prescription produces `d(t) = W₋ d₀ U₊†`, the invariants
//! `I₊ = d†d/2`, `I₋ = dd†/2` and the exactly solvable partner `H₋`.
//!
//! The closed-form gauges are `W[θ, φ] = e^{−iφZ} e^{−iθY} e^{iφZ}` with
//! `(Z, Y) = (J₃, J₂)` on a spin and `(K₃, K₂)` on the oscillator. Their
//! time derivatives are taken through `θ̇`, `φ̇` exactly.

use std::sync::Arc;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::operator::{c, eigh, unitarity_defect, EigenSystem, Matrix, Operator, State, C64, I};
use crate::reps::{squeeze_block, OscillatorRep, SpinRep};
use crate::susy::{build_invariant, build_supercharge, pair_spectra, SpectralPairing, SuperInvariant};
use crate::timefunc::TimeFunction;

/// Operator-valued function of time.
pub type OpFn = Arc<dyn Fn(f64) -> Operator + Send + Sync>;

/// Which representation a closed-form gauge lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaugeKind {
    SpinSu2,
    OscSu11,
}

impl GaugeKind {
    /// Generators `(G₁, G₂, G₃)` in the two-dimensional defining
    /// representation: `σᵢ/2` for su(2), `(iσ₁/2, iσ₂/2, σ₃/2)` for su(1,1).
    pub fn defining_generators(self) -> [Matrix2<C64>; 3] {
        let h = c(0.5);
        let z = c(0.0);
        let s1 = Matrix2::new(z, h, h, z);
        let s2 = Matrix2::new(z, -I * h, I * h, z);
        let s3 = Matrix2::new(h, z, z, -h);
        match self {
            GaugeKind::SpinSu2 => [s1, s2, s3],
            GaugeKind::OscSu11 => [s1 * I, s2 * I, s3],
        }
    }

    /// Coefficients of a traceless 2×2 matrix along the defining generators.
    pub fn decompose(self, m: &Matrix2<C64>) -> [C64; 3] {
        let g = self.defining_generators();
        let mut out = [c(0.0); 3];
        for (o, gi) in out.iter_mut().zip(&g) {
            *o = (m * gi).trace() / (gi * gi).trace();
        }
        out
    }
}

/// How `e^{−iθY}` is evaluated in the working basis.
#[derive(Clone)]
enum Middle {
    /// Finite representation: cached spectral decomposition of `Y`.
    Spectral { y: Operator, y_eig: EigenSystem },
    /// Fock space: leading block of the untruncated squeeze.
    Squeeze,
}

/// `W[θ(t), φ(t)] = e^{−iφZ} e^{−iθY} e^{iφZ}` with diagonal `Z`.
#[derive(Clone)]
pub struct EulerGauge {
    pub kind: GaugeKind,
    z: Vec<f64>,
    generators: [Operator; 3],
    middle: Middle,
    pub theta: TimeFunction,
    pub phi: TimeFunction,
    dtheta: TimeFunction,
    dphi: TimeFunction,
}

impl EulerGauge {
    pub fn spin(rep: &SpinRep, theta: TimeFunction, phi: TimeFunction) -> Self {
        let y_eig = eigh(&rep.j2).expect("generators are Hermitian");
        let middle = Middle::Spectral { y: rep.j2.clone(), y_eig };
        Self::new(GaugeKind::SpinSu2, rep.generators(), middle, theta, phi)
    }

    /// The oscillator gauge works with exact matrix elements of the infinite
    /// squeeze, so its leading block carries no truncation-edge error.
    pub fn oscillator(rep: &OscillatorRep, theta: TimeFunction, phi: TimeFunction) -> Self {
        Self::new(GaugeKind::OscSu11, rep.generators(), Middle::Squeeze, theta, phi)
    }

    fn new(kind: GaugeKind, gens: [&Operator; 3], middle: Middle, theta: TimeFunction, phi: TimeFunction) -> Self {
        let z = (0..gens[2].dim()).map(|k| gens[2].get(k, k).re).collect();
        let generators = gens.map(|g| g.clone());
        let dtheta = theta.derivative();
        let dphi = phi.derivative();
        Self { kind, z, generators, middle, theta, phi, dtheta, dphi }
    }

    /// `Σ rᵢ Gᵢ` on the working basis.
    pub fn embed(&self, r: [f64; 3]) -> Operator {
        embed(&self.generators, r)
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    fn phases(&self, phi: f64) -> Vec<C64> {
        self.z.iter().map(|&z| (-I * phi * z).exp()).collect()
    }

    /// `e^{−iθY}` on the working basis.
    pub fn middle(&self, theta: f64) -> Operator {
        match &self.middle {
            Middle::Spectral { y_eig, .. } => y_eig.function(|mu| (-I * theta * mu).exp()),
            Middle::Squeeze => {
                let b = squeeze_block(theta, self.dim(), self.dim());
                Operator::from_fn(self.dim(), |k, l| c(b[(k, l)]))
            }
        }
    }

    /// `Y e^{−iθY}` on the working basis.
    fn y_middle(&self, theta: f64) -> Operator {
        match &self.middle {
            Middle::Spectral { y, y_eig } => y * &y_eig.function(|mu| (-I * theta * mu).exp()),
            Middle::Squeeze => {
                // K₂ = i(a² − a†²)/4 couples k to k ± 2
                let n = self.dim();
                let b = squeeze_block(theta, n + 2, n);
                Operator::from_fn(n, |k, l| {
                    let up = ((k + 1) as f64 * (k + 2) as f64).sqrt() * b[(k + 2, l)];
                    let down = if k >= 2 { (k as f64 * (k - 1) as f64).sqrt() * b[(k - 2, l)] } else { 0.0 };
                    I * c(0.25 * (up - down))
                })
            }
        }
    }

    /// `A M A†` for `A = diag(a)`.
    fn conjugate_diag(a: &[C64], m: &Operator) -> Operator {
        Operator::from_fn(m.dim(), |k, l| a[k] * m.get(k, l) * a[l].conj())
    }

    pub fn w_at(&self, theta: f64, phi: f64) -> Operator {
        Self::conjugate_diag(&self.phases(phi), &self.middle(theta))
    }

    pub fn w(&self, t: f64) -> Operator {
        self.w_at(self.theta.eval(t), self.phi.eval(t))
    }

    /// First `count` columns of `W[θ, φ]`, without building the full squeeze.
    pub fn w_columns(&self, theta: f64, phi: f64, count: usize) -> Matrix {
        let count = count.min(self.dim());
        let a = self.phases(phi);
        let b: Matrix = match &self.middle {
            Middle::Spectral { .. } => self.middle(theta).matrix().columns(0, count).into_owned(),
            Middle::Squeeze => squeeze_block(theta, self.dim(), count).map(c),
        };
        Matrix::from_fn(self.dim(), count, |k, l| a[k] * b[(k, l)] * a[l].conj())
    }

    /// `Ẇ = Ȧ B A† + A Ḃ A† + A B Ȧ†` with `A = e^{−iφZ}`, `B = e^{−iθY}`.
    pub fn w_dot(&self, t: f64) -> Operator {
        let (theta, phi) = (self.theta.eval(t), self.phi.eval(t));
        let (th_dot, ph_dot) = (self.dtheta.eval(t), self.dphi.eval(t));
        let a = self.phases(phi);
        let w = Self::conjugate_diag(&a, &self.middle(theta));
        let yb = Self::conjugate_diag(&a, &self.y_middle(theta));
        let z = &self.z;
        Operator::from_fn(w.dim(), |k, l| {
            -I * ph_dot * z[k] * w.get(k, l) - I * th_dot * yb.get(k, l) + I * ph_dot * z[l] * w.get(k, l)
        })
    }

    /// `W` and `Ẇ` in the defining representation.
    pub fn defining(&self, t: f64) -> (Matrix2<C64>, Matrix2<C64>) {
        let [_, y, z] = self.kind.defining_generators();
        let (theta, phi) = (self.theta.eval(t), self.phi.eval(t));
        let (th_dot, ph_dot) = (self.dtheta.eval(t), self.dphi.eval(t));
        let a = (z * (-I * phi)).exp();
        let a_inv = (z * (I * phi)).exp();
        let b = (y * (-I * theta)).exp();
        let w = a * b * a_inv;
        let wd = z * w * (-I * ph_dot) + a * y * b * a_inv * (-I * th_dot) + w * z * (I * ph_dot);
        (w, wd)
    }

    /// Generator coefficients of `H = W Y W⁻¹ + i Ẇ W⁻¹` for `Y = y·G₃`,
    /// computed in the defining representation. Since `H` lies in the Lie
    /// algebra the coefficients hold in every representation.
    pub fn algebra_hamiltonian(&self, y: f64, t: f64) -> [f64; 3] {
        let [_, _, z] = self.kind.defining_generators();
        let (w, wd) = self.defining(t);
        let w_inv = w.try_inverse().expect("group elements are invertible");
        let h = w * z * w_inv * c(y) + wd * w_inv * I;
        self.kind.decompose(&h).map(|x| x.re)
    }

    /// Coefficients of `W X W⁻¹` for `X = Σ xᵢ Gᵢ`.
    pub fn algebra_conjugate(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let g = self.kind.defining_generators();
        let (w, _) = self.defining(t);
        let w_inv = w.try_inverse().expect("group elements are invertible");
        let m = g[0] * c(x[0]) + g[1] * c(x[1]) + g[2] * c(x[2]);
        self.kind.decompose(&(w * m * w_inv)).map(|v| v.re)
    }
}

/// A unitary curve `W(t)`.
#[derive(Clone)]
pub enum GaugeCurve {
    Euler(EulerGauge),
    /// Caller-supplied curve; `Ẇ` falls back to central differences when no
    /// derivative is given.
    Explicit { dim: usize, w: OpFn, dw: Option<OpFn> },
}

impl GaugeCurve {
    pub fn identity(dim: usize) -> Self {
        GaugeCurve::Explicit {
            dim,
            w: Arc::new(move |_| Operator::identity(dim)),
            dw: Some(Arc::new(move |_| Operator::zeros(dim))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GaugeCurve::Euler(g) => g.dim(),
            GaugeCurve::Explicit { dim, .. } => *dim,
        }
    }

    pub fn w(&self, t: f64) -> Operator {
        match self {
            GaugeCurve::Euler(g) => g.w(t),
            GaugeCurve::Explicit { w, .. } => w(t),
        }
    }

    pub fn has_exact_derivative(&self) -> bool {
        !matches!(self, GaugeCurve::Explicit { dw: None, .. })
    }

    pub fn w_dot(&self, t: f64) -> Operator {
        match self {
            GaugeCurve::Euler(g) => g.w_dot(t),
            GaugeCurve::Explicit { dw: Some(dw), .. } => dw(t),
            GaugeCurve::Explicit { w, dw: None, .. } => {
                let h = 1e-6 * t.abs().max(1.0);
                (w(t + h) - w(t - h)).scale(0.5 / h)
            }
        }
    }

    /// `‖W(0) − 1‖`; the prescription expects zero.
    pub fn initial_defect(&self) -> f64 {
        (self.w(0.0) - Operator::identity(self.dim())).norm()
    }

    /// Whether `W(t)` is exactly unitary on the working basis; the leading
    /// block of a Fock-space squeeze is not.
    pub fn is_unitary_block(&self) -> bool {
        !matches!(self, GaugeCurve::Euler(EulerGauge { middle: Middle::Squeeze, .. }))
    }

    pub fn euler(&self) -> Option<&EulerGauge> {
        match self {
            GaugeCurve::Euler(g) => Some(g),
            _ => None,
        }
    }
}

/// `Y(t)` commuting with the invariant at `t = 0`.
#[derive(Clone)]
pub enum YSpec {
    /// `f(t) D + g(t) D²` for a diagonal generator `D`; commutes at all times.
    Diagonal {
        d: Vec<f64>,
        f: TimeFunction,
        g: TimeFunction,
        big_f: TimeFunction,
        big_g: TimeFunction,
    },
    /// Arbitrary Hermitian `Y(t)`, no commuting guarantee.
    Explicit { dim: usize, y: OpFn },
}

impl YSpec {
    pub fn diagonal(generator: &Operator, f: TimeFunction, g: TimeFunction) -> Result<Self> {
        let n = generator.dim();
        let off = (0..n).flat_map(|k| (0..n).map(move |l| (k, l))).filter(|&(k, l)| k != l);
        if off.map(|(k, l)| generator.get(k, l).norm()).fold(0.0, f64::max) > 0.0 {
            return Err(Error::Unsupported("Y generator must be diagonal in the working basis".into()));
        }
        let d = (0..n).map(|k| generator.get(k, k).re).collect();
        let big_f = f.antiderivative()?;
        let big_g = g.antiderivative()?;
        Ok(YSpec::Diagonal { d, f, g, big_f, big_g })
    }

    pub fn zero(dim: usize) -> Self {
        YSpec::Diagonal {
            d: vec![0.0; dim],
            f: TimeFunction::zero(),
            g: TimeFunction::zero(),
            big_f: TimeFunction::zero(),
            big_g: TimeFunction::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            YSpec::Diagonal { d, .. } => d.len(),
            YSpec::Explicit { dim, .. } => *dim,
        }
    }

    /// `f(t)` when `Y(t) = f(t) D` with no quadratic part.
    pub fn axial_coefficient(&self, t: f64) -> Option<f64> {
        match self {
            YSpec::Diagonal { f, g, .. } if g.is_constant() && g.eval(0.0) == 0.0 => Some(f.eval(t)),
            _ => None,
        }
    }

    fn matches_axis(&self, z: &[f64]) -> bool {
        matches!(self, YSpec::Diagonal { d, .. } if d.as_slice() == z)
    }

    /// Diagonal of `Y(t)` when it is diagonal.
    pub fn diag_at(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            YSpec::Diagonal { d, f, g, .. } => {
                let (fv, gv) = (f.eval(t), g.eval(t));
                Some(d.iter().map(|&x| fv * x + gv * x * x).collect())
            }
            YSpec::Explicit { .. } => None,
        }
    }

    pub fn y(&self, t: f64) -> Operator {
        match self {
            YSpec::Diagonal { .. } => Operator::from_real_diagonal(&self.diag_at(t).expect("diagonal")),
            YSpec::Explicit { y, .. } => y(t),
        }
    }

    /// `y_k(t) = ⟨k|Y(t)|k⟩` integrated from 0, for diagonal specs.
    pub fn integrated_diag(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            YSpec::Diagonal { d, big_f, big_g, .. } => {
                let (fv, gv) = (big_f.eval(t), big_g.eval(t));
                Some(d.iter().map(|&x| fv * x + gv * x * x).collect())
            }
            YSpec::Explicit { .. } => None,
        }
    }

    /// `V(t) = exp(−i∫₀ᵗ Y)`.
    pub fn evolution(&self, t: f64) -> Result<Operator> {
        let phases = self.integrated_diag(t).ok_or(Error::NonCommutingY)?;
        let n = phases.len();
        Ok(Operator::from_fn(n, |k, l| if k == l { (-I * phases[k]).exp() } else { c(0.0) }))
    }

    /// `‖[Y(t), I₀]‖`.
    pub fn commutation_defect(&self, t: f64, invariant0: &Operator) -> f64 {
        let y = self.y(t);
        (&y * invariant0 - invariant0 * &y).norm()
    }
}

fn check_unitary(w: &Operator) -> Result<()> {
    let defect = unitarity_defect(w);
    if defect > 1e-10 {
        return Err(Error::NotUnitary { defect });
    }
    Ok(())
}

/// `H(t) = W Y W† − i W Ẇ†`.
///
/// Fock-space gauges with `Y = f K₃` are evaluated in the defining
/// representation and embedded on the truncated `Kᵢ`; this is the exact
/// leading block of the untruncated `H`. Every other case multiplies the
/// working matrices directly.
pub fn hamiltonian_from_gauge(w: &GaugeCurve, y: &YSpec, t: f64) -> Result<Operator> {
    if let (Some(gauge), Some(f)) = (w.euler(), y.axial_coefficient(t)) {
        if gauge.kind == GaugeKind::OscSu11 && y.matches_axis(&gauge.z) {
            let r = gauge.algebra_hamiltonian(f, t);
            return Ok(embed(&gauge.generators, r));
        }
    }
    hamiltonian_from_matrices(w, y, t)
}

/// The gauge formula with plain matrix products in the working basis.
pub fn hamiltonian_from_matrices(w: &GaugeCurve, y: &YSpec, t: f64) -> Result<Operator> {
    let wt = w.w(t);
    if w.is_unitary_block() {
        check_unitary(&wt)?;
    }
    let wdot = w.w_dot(t);
    let wy = match y.diag_at(t) {
        Some(diag) => Operator::from_fn(wt.dim(), |k, l| wt.get(k, l) * diag[l]),
        None => &wt * &y.y(t),
    };
    let dynamic = &wy * &wt.adjoint();
    let geometric = (&wt * &wdot.adjoint()).scale_c(-I);
    Ok(dynamic + geometric)
}

fn embed(gens: &[Operator; 3], r: [f64; 3]) -> Operator {
    &(&gens[0].scale(r[0]) + &gens[1].scale(r[1])) + &gens[2].scale(r[2])
}

/// `U(t) = W(t) V(t)`. Equals the propagator from `t = 0` when `W(0) = 1`.
pub fn evolution_from_gauge(w: &GaugeCurve, y: &YSpec, t: f64) -> Result<Operator> {
    let v = y.evolution(t)?;
    let wt = w.w(t);
    if w.is_unitary_block() {
        check_unitary(&wt)?;
    }
    Ok(&wt * &v)
}

/// `(R¹, R², R³)` of the spin partner `H₋ = Σ Rⁱ Jᵢ` for `Y₋ = f J₃`:
///
/// ```text
/// R¹ = sinθ cosφ (f − φ̇) − sinφ θ̇
/// R² = sinθ sinφ (f − φ̇) + cosφ θ̇
/// R³ = cosθ f + (1 − cosθ) φ̇
/// ```
pub fn closed_form_spin_r(f: &TimeFunction, theta: &TimeFunction, phi: &TimeFunction, t: f64) -> [f64; 3] {
    let (th, ph, fv) = (theta.eval(t), phi.eval(t), f.eval(t));
    let (th_dot, ph_dot) = (theta.derivative().eval(t), phi.derivative().eval(t));
    lie_r(th.sin(), th.cos(), ph, fv, th_dot, ph_dot)
}

/// Oscillator analogue in the `Kᵢ` basis: `sin, cos → sinh, cosh`.
pub fn closed_form_osc_r(f: &TimeFunction, theta: &TimeFunction, phi: &TimeFunction, t: f64) -> [f64; 3] {
    let (th, ph, fv) = (theta.eval(t), phi.eval(t), f.eval(t));
    let (th_dot, ph_dot) = (theta.derivative().eval(t), phi.derivative().eval(t));
    lie_r(th.sinh(), th.cosh(), ph, fv, th_dot, ph_dot)
}

fn lie_r(s: f64, co: f64, ph: f64, f: f64, th_dot: f64, ph_dot: f64) -> [f64; 3] {
    [
        s * ph.cos() * (f - ph_dot) - ph.sin() * th_dot,
        s * ph.sin() * (f - ph_dot) + ph.cos() * th_dot,
        co * f + (1.0 - co) * ph_dot,
    ]
}

/// Magnitude and direction factors of the precessing-field special case
/// (`θ` constant, `φ = ωt`): `H₋ = b r {f₁[cos ωt J₁ + sin ωt J₂] + f₂ J₃}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Precessing {
    pub r: f64,
    pub f1: f64,
    pub f2: f64,
}

impl Precessing {
    /// `b r (f₁ cos ωt, f₁ sin ωt, f₂)`.
    pub fn coefficients(&self, b: f64, omega: f64, t: f64) -> [f64; 3] {
        let s = b * self.r;
        [s * self.f1 * (omega * t).cos(), s * self.f1 * (omega * t).sin(), s * self.f2]
    }
}

pub fn precessing_special_case(f: &TimeFunction, theta: f64, omega: f64, b: f64, t: f64) -> Precessing {
    let fv = f.eval(t);
    let transverse = theta.sin() * (fv - omega);
    let axial = theta.cos() * fv + (1.0 - theta.cos()) * omega;
    let r = transverse.hypot(axial) / b;
    if r == 0.0 {
        return Precessing { r, f1: 0.0, f2: 0.0 };
    }
    Precessing { r, f1: transverse / (b * r), f2: axial / (b * r) }
}

/// `H′₋ = Σ Rⁱ Jᵢ + g (Σ R̃ⁱ Jᵢ)²` for `Y₋ = f J₃ + g J₃²`, with
/// `R̃ = (sinθ cosφ, sinθ sinφ, cosθ)`.
pub fn quadrupole_partner(
    spin: &SpinRep,
    f: &TimeFunction,
    g: &TimeFunction,
    theta: &TimeFunction,
    phi: &TimeFunction,
    t: f64,
) -> Operator {
    let linear = spin.combine(closed_form_spin_r(f, theta, phi, t));
    let (th, ph) = (theta.eval(t), phi.eval(t));
    let axis = spin.combine([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
    linear + (&axis * &axis).scale(g.eval(t))
}

/// The representation a system lives in.
#[derive(Clone, Debug)]
pub enum Family {
    Spin(SpinRep),
    Oscillator(OscillatorRep),
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Spin(s) => s.dim(),
            Family::Oscillator(o) => o.dim(),
        }
    }

    pub fn generators(&self) -> [&Operator; 3] {
        match self {
            Family::Spin(s) => s.generators(),
            Family::Oscillator(o) => o.generators(),
        }
    }

    pub fn combine(&self, r: [f64; 3]) -> Operator {
        match self {
            Family::Spin(s) => s.combine(r),
            Family::Oscillator(o) => o.combine(r),
        }
    }

    /// The diagonal generator `J₃` or `K₃`.
    pub fn axial(&self) -> &Operator {
        match self {
            Family::Spin(s) => &s.j3,
            Family::Oscillator(o) => &o.k3,
        }
    }

    /// Standard intertwiner: `J₊` or `a†`.
    pub fn raising(&self) -> &Operator {
        match self {
            Family::Spin(s) => &s.jplus,
            Family::Oscillator(o) => &o.adag,
        }
    }

    /// Norm used for acceptance comparisons: full for spins, interior for
    /// the truncated oscillator.
    pub fn trusted_norm(&self, op: &Operator) -> f64 {
        match self {
            Family::Spin(_) => op.norm(),
            Family::Oscillator(o) => o.interior_norm(op),
        }
    }

    pub fn closed_form_r(&self, f: &TimeFunction, theta: &TimeFunction, phi: &TimeFunction, t: f64) -> [f64; 3] {
        match self {
            Family::Spin(_) => closed_form_spin_r(f, theta, phi, t),
            Family::Oscillator(_) => closed_form_osc_r(f, theta, phi, t),
        }
    }
}

/// How the bosonic sector is gauged.
#[derive(Clone)]
pub enum PlusRoute {
    /// `W₊ = U₊`, `Y₊ = 0`.
    Evolution,
    /// A chosen `W₊` with `Y₊ = W₊† H₊ W₊ − i W₊† Ẇ₊`.
    Gauge(GaugeCurve),
}

/// Input to the four-step prescription.
#[derive(Clone)]
pub struct SuperSystem {
    pub family: Family,
    pub hplus: OpFn,
    pub uplus: OpFn,
    pub d0: Operator,
    pub wminus: GaugeCurve,
    pub yminus: YSpec,
    pub plus_route: PlusRoute,
    /// Whether `H₊` is known to be constant (enables cheaper residuals).
    pub static_hplus: bool,
}

/// Diagonal `H₊` and its exact evolution `exp(−i t H₊)`.
fn diagonal_plus(diag: Vec<f64>) -> (OpFn, OpFn) {
    let h = Operator::from_real_diagonal(&diag);
    let hplus: OpFn = Arc::new(move |_| h.clone());
    let uplus: OpFn = Arc::new(move |t| {
        Operator::from_fn(diag.len(), |k, l| if k == l { (-I * diag[k] * t).exp() } else { c(0.0) })
    });
    (hplus, uplus)
}

impl SuperSystem {
    /// Spin family: `H₊ = b J₃`, `d₀ = J₊`, `W₋ = W[θ, φ]`, `Y₋ = f J₃ + g J₃²`.
    pub fn spin(
        rep: SpinRep,
        b: f64,
        theta: TimeFunction,
        phi: TimeFunction,
        f: TimeFunction,
        g: TimeFunction,
    ) -> Result<Self> {
        let diag = (0..rep.dim()).map(|k| b * rep.m_of(k)).collect();
        let (hplus, uplus) = diagonal_plus(diag);
        let wminus = GaugeCurve::Euler(EulerGauge::spin(&rep, theta, phi));
        let yminus = YSpec::diagonal(&rep.j3, f, g)?;
        let d0 = rep.jplus.clone();
        Ok(Self {
            family: Family::Spin(rep),
            hplus,
            uplus,
            d0,
            wminus,
            yminus,
            plus_route: PlusRoute::Evolution,
            static_hplus: true,
        })
    }

    /// Oscillator family: `H₊ = a†a + ½`, `d₀ = a†`, `W₋ = W[θ, φ]` over
    /// su(1,1), `Y₋ = f K₃`.
    pub fn oscillator(rep: OscillatorRep, theta: TimeFunction, phi: TimeFunction, f: TimeFunction) -> Result<Self> {
        let diag = (0..rep.dim()).map(|k| k as f64 + 0.5).collect();
        let (hplus, uplus) = diagonal_plus(diag);
        let wminus = GaugeCurve::Euler(EulerGauge::oscillator(&rep, theta, phi));
        let yminus = YSpec::diagonal(&rep.k3, f, TimeFunction::zero())?;
        let d0 = rep.adag.clone();
        Ok(Self {
            family: Family::Oscillator(rep),
            hplus,
            uplus,
            d0,
            wminus,
            yminus,
            plus_route: PlusRoute::Evolution,
            static_hplus: true,
        })
    }

    pub fn with_d0(mut self, d0: Operator) -> Result<Self> {
        if d0.dim() != self.family.dim() {
            return Err(Error::DimensionMismatch { left: d0.dim(), right: self.family.dim() });
        }
        self.d0 = d0;
        Ok(self)
    }

    pub fn with_plus_route(mut self, route: PlusRoute) -> Self {
        self.plus_route = route;
        self
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// `max(‖U₊(0) − 1‖, ‖i U̇₊ − H₊ U₊‖)` over `times`, `U̇₊` by central differences.
    pub fn plus_defect(&self, times: &[f64]) -> f64 {
        let mut worst = ((self.uplus)(0.0) - Operator::identity(self.dim())).norm();
        for &t in times {
            let h = 1e-5 * t.abs().max(1.0);
            let du = ((self.uplus)(t + h) - (self.uplus)(t - h)).scale(0.5 / h);
            let r = du.scale_c(I) - (self.hplus)(t) * (self.uplus)(t);
            worst = worst.max(r.norm());
        }
        worst
    }
}

/// Everything the prescription produces, as functions of time.
#[derive(Clone)]
pub struct PartnerOutput {
    pub system: SuperSystem,
    pub invariant0: SuperInvariant,
    pub pairing: SpectralPairing,
    /// `I₋(0) = c₀ + Σ xᵢ Kᵢ` when a Fock-space invariant lies in the algebra.
    iminus_algebra: Option<(f64, [f64; 3])>,
}

/// Runs the four-step prescription.
pub fn run_prescription(sys: &SuperSystem) -> Result<PartnerOutput> {
    if sys.wminus.dim() != sys.dim() || sys.yminus.dim() != sys.dim() || sys.d0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { left: sys.wminus.dim(), right: sys.dim() });
    }
    let invariant0 = build_invariant(&build_supercharge(&sys.d0));
    let pairing = pair_spectra(&invariant0)?;
    let iminus_algebra = sys.wminus.euler().filter(|g| g.kind == GaugeKind::OscSu11).and_then(|_| {
        let i0 = &invariant0.iminus;
        let (c0, x, residual) = algebra_coordinates(&sys.family, i0);
        (residual <= 1e-12 * i0.norm().max(1.0)).then_some((c0, x))
    });
    Ok(PartnerOutput { system: sys.clone(), invariant0, pairing, iminus_algebra })
}

impl PartnerOutput {
    pub fn family(&self) -> &Family {
        &self.system.family
    }

    pub fn hplus(&self, t: f64) -> Operator {
        (self.system.hplus)(t)
    }

    pub fn uplus(&self, t: f64) -> Operator {
        (self.system.uplus)(t)
    }

    /// `W₊(t)`: `U₊(t)` on the default route.
    pub fn wplus(&self, t: f64) -> Operator {
        match &self.system.plus_route {
            PlusRoute::Evolution => self.uplus(t),
            PlusRoute::Gauge(g) => g.w(t),
        }
    }

    /// `Y₊(t)`: zero on the default route.
    pub fn yplus(&self, t: f64) -> Operator {
        match &self.system.plus_route {
            PlusRoute::Evolution => Operator::zeros(self.system.dim()),
            PlusRoute::Gauge(g) => {
                let w = g.w(t);
                let wd = g.w_dot(t);
                let wa = w.adjoint();
                &(&wa * &self.hplus(t)) * &w - (&wa * &wd).scale_c(I)
            }
        }
    }

    pub fn wminus(&self, t: f64) -> Operator {
        self.system.wminus.w(t)
    }

    /// `d(t) = W₋ d₀ W₊†`.
    pub fn d(&self, t: f64) -> Operator {
        &(&self.wminus(t) * &self.system.d0) * &self.wplus(t).adjoint()
    }

    /// `I₊(t) = U₊ I₊(0) U₊†`.
    pub fn iplus(&self, t: f64) -> Operator {
        let u = self.uplus(t);
        &(&u * &self.invariant0.iplus) * &u.adjoint()
    }

    /// `I₋(t) = W₋ I₋(0) W₋†`. On Fock space an invariant in the span of
    /// `1, Kᵢ` is conjugated in the defining representation, which keeps
    /// the leading block exact.
    pub fn iminus(&self, t: f64) -> Operator {
        if let (Some(g), Some((c0, x))) = (self.system.wminus.euler(), self.iminus_algebra) {
            let n = self.system.dim();
            return &g.embed(g.algebra_conjugate(x, t)) + &Operator::identity(n).scale(c0);
        }
        let w = self.wminus(t);
        &(&w * &self.invariant0.iminus) * &w.adjoint()
    }

    pub fn hminus(&self, t: f64) -> Result<Operator> {
        hamiltonian_from_gauge(&self.system.wminus, &self.system.yminus, t)
    }

    /// Closed-form `U₋(t) = W₋ V₋`.
    pub fn uminus(&self, t: f64) -> Result<Operator> {
        evolution_from_gauge(&self.system.wminus, &self.system.yminus, t)
    }

    /// Largest of `‖I₊ − d†d/2‖`, `‖I₋ − dd†/2‖` over `times`.
    pub fn factorization_defect(&self, times: &[f64]) -> f64 {
        times
            .iter()
            .map(|&t| {
                let d = self.d(t);
                let da = d.adjoint();
                let a = (self.iplus(t) - (&da * &d).scale(0.5)).norm();
                let b = (self.iminus(t) - (&d * &da).scale(0.5)).norm();
                a.max(b)
            })
            .fold(0.0, f64::max)
    }

    /// Largest `‖[Y₋(t), I₋(0)]‖` over `times`.
    pub fn y_commutation_defect(&self, times: &[f64]) -> f64 {
        times
            .iter()
            .map(|&t| self.system.yminus.commutation_defect(t, &self.invariant0.iminus))
            .fold(0.0, f64::max)
    }

    /// Index of the paired level containing `psi_plus0`, with its eigenvalue.
    fn level_of(&self, psi_plus0: &State) -> Result<(usize, f64)> {
        let iplus = &self.invariant0.iplus;
        let lambda = iplus.expect(psi_plus0).re / psi_plus0.norm_squared().max(f64::MIN_POSITIVE);
        let zero = crate::susy::zero_threshold(&self.invariant0);
        if lambda < zero {
            return Err(Error::ZeroMode { value: lambda });
        }
        let defect = (iplus.apply(psi_plus0) - psi_plus0 * c(lambda)).norm().max((psi_plus0.norm() - 1.0).abs());
        if defect > 1e-8 {
            return Err(Error::NotEigenvector { lambda, defect });
        }
        let k = self
            .pairing
            .levels
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.value - lambda).abs().total_cmp(&(b.1.value - lambda).abs()))
            .map(|(k, _)| k)
            .ok_or(Error::ZeroMode { value: lambda })?;
        Ok((k, self.pairing.levels[k].value))
    }

    /// Solution of the bosonic Schrödinger equation through `ψ₊(0)`.
    pub fn plus_solution(&self, psi_plus0: &State, t: f64) -> State {
        self.uplus(t).apply(psi_plus0)
    }

    /// Superpartner solution `(2λ)^{−1/2} Σ_b ⟨λ,b,−;0|V₋|χ⟩ d(t)|λ,b,+;t⟩`
    /// of the fermionic Schrödinger equation, where `χ = (2λ)^{−1/2} d₀ ψ₊(0)`
    /// and `|λ,b,+;t⟩ = W₊(t)|λ,b,+;0⟩`.
    pub fn mapped_solution(&self, psi_plus0: &State, t: f64) -> Result<State> {
        let (k, lambda) = self.level_of(psi_plus0)?;
        let level = &self.pairing.levels[k];
        let norm = c((2.0 * lambda).sqrt().recip());
        let d0 = &self.system.d0;
        let chi = d0.apply(psi_plus0) * norm;
        let v = self.system.yminus.evolution(t)?;
        let moved = v.apply(&chi);
        let dt = self.d(t);
        let wplus = self.wplus(t);
        let mut out = State::zeros(self.system.dim());
        for b in 0..level.degeneracy {
            let plus0: State = level.plus.column(b).into_owned();
            let minus0 = d0.apply(&plus0) * norm;
            let coef = minus0.dotc(&moved);
            let frame = dt.apply(&wplus.apply(&plus0)) * norm;
            out += frame * coef;
        }
        Ok(out)
    }
}

/// Spin closed form: `e^{i(m+1)(φ−F) − i(m+1)²G} e^{−iφJ₃} e^{−iθJ₂} |j, m+1⟩`,
/// the partner of `|j, m⟩` for `Y₋ = f J₃ + g J₃²`.
pub fn spin_mapped_closed_form(out: &PartnerOutput, m: f64, t: f64) -> Result<State> {
    let (Family::Spin(rep), Some(gauge)) = (out.family(), out.system.wminus.euler()) else {
        return Err(Error::Unsupported("spin closed form needs a spin system with an Euler gauge".into()));
    };
    let YSpec::Diagonal { big_f, big_g, .. } = &out.system.yminus else {
        return Err(Error::NonCommutingY);
    };
    if rep.index_of(m).is_none() || m >= rep.j {
        return Err(Error::ZeroMode { value: 0.0 });
    }
    let mp = m + 1.0;
    let (th, ph) = (gauge.theta.eval(t), gauge.phi.eval(t));
    let phase = (I * (mp * (ph - big_f.eval(t)) - mp * mp * big_g.eval(t))).exp();
    let rot = &expm_diag(&rep.j3, -ph) * &gauge.middle(th);
    Ok(rot.apply(&rep.basis_state(mp).expect("m+1 in range")) * phase)
}

/// Oscillator closed form: `e^{−iζₙ} e^{−iφK₃} e^{−iθK₂} |n+1⟩` with
/// `ζₙ(t) = (2n+3)(F − φ)/4`, the partner of `|n⟩` for `Y₋ = f K₃`.
pub fn oscillator_mapped_closed_form(out: &PartnerOutput, n: usize, t: f64) -> Result<State> {
    let (Family::Oscillator(rep), Some(gauge)) = (out.family(), out.system.wminus.euler()) else {
        return Err(Error::Unsupported("oscillator closed form needs an oscillator system with an Euler gauge".into()));
    };
    let YSpec::Diagonal { big_f, .. } = &out.system.yminus else {
        return Err(Error::NonCommutingY);
    };
    let target = crate::reps::hermite_state(rep, n + 1)?;
    let (th, ph) = (gauge.theta.eval(t), gauge.phi.eval(t));
    let zeta = oscillator_phase(n, big_f.eval(t), ph);
    let rot = &expm_diag(&rep.k3, -ph) * &gauge.middle(th);
    Ok(rot.apply(&target) * (-I * zeta).exp())
}

/// `ζₙ = (2n+3)(F − φ)/4`.
pub fn oscillator_phase(n: usize, big_f: f64, phi: f64) -> f64 {
    (2.0 * n as f64 + 3.0) * (big_f - phi) / 4.0
}

/// `exp(i s Z)` for diagonal `Z`.
fn expm_diag(z: &Operator, s: f64) -> Operator {
    Operator::from_fn(z.dim(), |k, l| if k == l { (I * s * z.get(k, k).re).exp() } else { c(0.0) })
}

/// `(c₀, [c₁, c₂, c₃], residual)` with `op ≈ c₀ 1 + Σ cᵢ Gᵢ`. The residual
/// is measured on the trusted block, so a nonzero value means `op` is not
/// in the span.
pub fn algebra_coordinates(family: &Family, op: &Operator) -> (f64, [f64; 3], f64) {
    match family {
        Family::Spin(s) => {
            let c0 = op.trace().re / s.dim() as f64;
            let r = s.project(&(op - &Operator::identity(s.dim()).scale(c0)));
            let fit = &s.combine(r) + &Operator::identity(s.dim()).scale(c0);
            (c0, r, (op - &fit).norm())
        }
        Family::Oscillator(o) => {
            // K₃ = (2k+1)/4 on the diagonal; K₁ + iK₂ = a²/2 above it
            let c3 = 2.0 * (op.get(1, 1).re - op.get(0, 0).re);
            let c0 = op.get(0, 0).re - c3 / 4.0;
            let h02 = op.get(0, 2) * (4.0 / 2f64.sqrt());
            let r = [h02.re, h02.im, c3];
            let fit = &o.combine(r) + &Operator::identity(o.dim()).scale(c0);
            (c0, r, o.interior_norm(&(op - &fit)))
        }
    }
}

/// Coefficients of `h` along the family generators.
pub fn project_generators(family: &Family, h: &Operator) -> [f64; 3] {
    algebra_coordinates(family, h).1
}

/// Uniform parameter draw for randomized checks: `f = a₀ + a₁ cos ωt`,
/// `θ = b₁ sin ωt`, `φ = c₀ t + c₁ sin ωt`. `u` holds six numbers in
/// `[0, 1)`; coefficients land in `[−2, 2]·scale` and `ω` in `[0.5, 4]`.
#[derive(Clone, Debug)]
pub struct GaugeDraw {
    pub f: TimeFunction,
    pub theta: TimeFunction,
    pub phi: TimeFunction,
    pub omega: f64,
}

impl GaugeDraw {
    pub fn from_uniforms(u: [f64; 6], theta_scale: f64) -> Self {
        let coef = |x: f64| 4.0 * x - 2.0;
        let omega = 0.5 + 3.5 * u[5];
        let f = TimeFunction::constant(coef(u[0])).add(&TimeFunction::cos(coef(u[1]), omega, 0.0));
        let theta = TimeFunction::sin(theta_scale * coef(u[2]), omega, 0.0);
        let phi = TimeFunction::linear(coef(u[3]), 0.0).add(&TimeFunction::sin(coef(u[4]), omega, 0.0));
        Self { f, theta, phi, omega }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::expm;
    use crate::reps::{make_oscillator, make_spin};
    use std::f64::consts::PI;

    fn tf(s: &str) -> TimeFunction {
        TimeFunction::parse(s).unwrap()
    }

    #[test]
    fn leading_columns_match_full_gauge() {
        let s = make_spin(1.5).unwrap();
        let g = EulerGauge::spin(&s, tf("0.7"), tf("t"));
        let full = g.w_at(0.7, 1.9);
        assert!(crate::operator::frobenius(&(g.w_columns(0.7, 1.9, 2) - full.matrix().columns(0, 2))) < 1e-15);
        let o = make_oscillator(32, 4).unwrap();
        let g = EulerGauge::oscillator(&o, tf("0.7"), tf("t"));
        let full = g.w_at(-0.4, 1.9);
        assert!(crate::operator::frobenius(&(g.w_columns(-0.4, 1.9, 5) - full.matrix().columns(0, 5))) < 1e-14);
    }

    /// Independent `−i W Ẇ†` from central differences of `W` with generic `expm`.
    fn fd_gauge_h(rep: &SpinRep, theta: &TimeFunction, phi: &TimeFunction, f: f64, t: f64) -> Operator {
        let w = |t: f64| {
            let a = expm(&rep.j3.scale_c(-I * phi.eval(t))).unwrap();
            let b = expm(&rep.j2.scale_c(-I * theta.eval(t))).unwrap();
            &(&a * &b) * &a.adjoint()
        };
        let h = 1e-5;
        let wd = (w(t + h) - w(t - h)).scale(0.5 / h);
        let wt = w(t);
        &(&(&wt * &rep.j3.scale(f)) * &wt.adjoint()) + &(&wt * &wd.adjoint()).scale_c(-I)
    }

    #[test]
    fn identity_gauge_gives_y() {
        let s = make_spin(1.0).unwrap();
        let y = YSpec::diagonal(&s.j3, tf("0.5 + 0.2*t"), TimeFunction::zero()).unwrap();
        let h = hamiltonian_from_gauge(&GaugeCurve::identity(3), &y, 2.0).unwrap();
        assert!((h - s.j3.scale(0.9)).norm() < 1e-15);
    }

    #[test]
    fn static_tilt_matches_closed_form() {
        let s = make_spin(0.5).unwrap();
        let (theta, phi, f) = (tf("0.7"), tf("0"), tf("0.5"));
        let g = GaugeCurve::Euler(EulerGauge::spin(&s, theta.clone(), phi.clone()));
        let y = YSpec::diagonal(&s.j3, f.clone(), TimeFunction::zero()).unwrap();
        let r = s.project(&hamiltonian_from_gauge(&g, &y, 0.3).unwrap());
        // f times the tilted axis (sinθ, 0, cosθ)
        let want = [0.5 * 0.7f64.sin(), 0.0, 0.5 * 0.7f64.cos()];
        for i in 0..3 {
            assert!((r[i] - want[i]).abs() < 1e-14);
        }
        assert_eq!(closed_form_spin_r(&f, &theta, &phi, 0.3), want);
    }

    #[test]
    fn rotating_polar_angle_is_j2() {
        let s = make_spin(0.5).unwrap();
        let (theta, phi) = (tf("t"), tf("0"));
        for t in [0.0, 0.4, 1.3] {
            let fd = fd_gauge_h(&s, &theta, &phi, 0.0, t);
            assert!((&fd - &s.j2).norm() < 1e-9);
            let r = closed_form_spin_r(&TimeFunction::zero(), &theta, &phi, t);
            assert!((r[0]).abs() < 1e-15 && (r[1] - 1.0).abs() < 1e-15 && r[2].abs() < 1e-15);
        }
    }

    #[test]
    fn exact_derivative_matches_finite_difference() {
        let s = make_spin(1.5).unwrap();
        let (theta, phi) = (tf("0.4*sin(1.3*t) + 0.2"), tf("2*t + 0.5*cos(t)"));
        let g = GaugeCurve::Euler(EulerGauge::spin(&s, theta.clone(), phi.clone()));
        let y = YSpec::diagonal(&s.j3, tf("0.7"), TimeFunction::zero()).unwrap();
        for t in [0.0, 0.9, 3.3] {
            let exact = hamiltonian_from_gauge(&g, &y, t).unwrap();
            let fd = fd_gauge_h(&s, &theta, &phi, 0.7, t);
            assert!((&exact - &fd).norm() < 1e-8, "{}", (&exact - &fd).norm());
            let r = closed_form_spin_r(&tf("0.7"), &theta, &phi, t);
            assert!((&exact - &s.combine(r)).norm() < 1e-12);
        }
    }

    #[test]
    fn closed_form_special_values() {
        let (f, zero) = (tf("0.5"), TimeFunction::zero());
        // θ = 0: only the θ̇ terms and the axial f survive
        let r = closed_form_spin_r(&f, &zero, &tf("3*t"), 1.0);
        assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15 && (r[2] - 0.5).abs() < 1e-15);
        let r = closed_form_spin_r(&f, &TimeFunction::constant(PI / 4.0), &tf("2*t"), 0.0);
        assert!((r[2] - (0.5 * (PI / 4.0).cos() + (1.0 - (PI / 4.0).cos()) * 2.0)).abs() < 1e-15);
        let r = closed_form_osc_r(&f, &TimeFunction::constant(1.0), &zero, 0.0);
        assert!((r[2] - 0.5 * 1f64.cosh()).abs() < 1e-15);
        let r = closed_form_osc_r(&zero, &zero, &tf("1.7*t"), 0.5);
        assert_eq!(r, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn oscillator_static_squeeze() {
        let o = make_oscillator(64, 8).unwrap();
        let (theta, phi, f) = (tf("0.3"), tf("0.4"), tf("0.5"));
        let g = GaugeCurve::Euler(EulerGauge::oscillator(&o, theta.clone(), phi.clone()));
        let y = YSpec::diagonal(&o.k3, f.clone(), TimeFunction::zero()).unwrap();
        let h = hamiltonian_from_gauge(&g, &y, 0.0).unwrap();
        let want = o.combine(closed_form_osc_r(&f, &theta, &phi, 0.0));
        assert!((h - want).norm() < 1e-12);
    }

    #[test]
    fn oscillator_strong_squeeze_interior() {
        let o = make_oscillator(64, 8).unwrap();
        let (theta, phi, f) = (tf("2*sin(1.5*t)"), tf("-1.2*t + 2*sin(1.5*t)"), tf("1.5 - 2*cos(1.5*t)"));
        let sys = SuperSystem::oscillator(o.clone(), theta.clone(), phi.clone(), f.clone()).unwrap();
        let out = run_prescription(&sys).unwrap();
        for t in [0.3, 1.0, 2.2] {
            let h = out.hminus(t).unwrap();
            let want = o.combine(closed_form_osc_r(&f, &theta, &phi, t));
            assert!(o.interior_norm(&(h - want)) < 1e-10);
        }
    }

    #[test]
    fn defining_route_matches_matrices_on_spin() {
        let s = make_spin(1.5).unwrap();
        let gauge = EulerGauge::spin(&s, tf("0.9*sin(2*t) + 0.3"), tf("1.1*t - 0.4*cos(t)"));
        let g = GaugeCurve::Euler(gauge.clone());
        let y = YSpec::diagonal(&s.j3, tf("0.7"), TimeFunction::zero()).unwrap();
        for t in [0.0, 1.4] {
            let h = hamiltonian_from_matrices(&g, &y, t).unwrap();
            let r = gauge.algebra_hamiltonian(0.7, t);
            assert!((h - s.combine(r)).norm() < 1e-12);
        }
    }

    #[test]
    fn squeeze_gauge_columns_match_padded_exponential() {
        let o = make_oscillator(64, 8).unwrap();
        let big = make_oscillator(300, 8).unwrap();
        let gauge = EulerGauge::oscillator(&o, tf("1.3"), tf("0.6"));
        let w = gauge.w(0.0);
        let a = expm(&big.k3.scale_c(-I * 0.6)).unwrap();
        let b = expm(&big.k2.scale_c(-I * 1.3)).unwrap();
        let wide = &(&a * &b) * &a.adjoint();
        for col in 0..6 {
            for row in 0..64 {
                assert!((w.get(row, col) - wide.get(row, col)).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn oscillator_invariant_coordinates() {
        let o = make_oscillator(32, 4).unwrap();
        let fam = Family::Oscillator(o.clone());
        let (c0, r, res) = algebra_coordinates(&fam, &(&o.number()).scale(0.5));
        assert!((c0 + 0.25).abs() < 1e-15 && r == [0.0, 0.0, 1.0] && res < 1e-14);
        let (_, r, res) = algebra_coordinates(&fam, &o.combine([0.3, -0.7, 1.1]));
        assert!((r[0] - 0.3).abs() < 1e-14 && (r[1] + 0.7).abs() < 1e-14 && res < 1e-13);
        let (_, _, res) = algebra_coordinates(&fam, &o.x);
        assert!(res > 1.0);
    }

    #[test]
    fn oscillator_invariant_transport() {
        let o = make_oscillator(48, 6).unwrap();
        let sys = SuperSystem::oscillator(o.clone(), tf("0.8*sin(t)"), tf("t"), tf("0.5")).unwrap();
        let out = run_prescription(&sys).unwrap();
        // at θ = 0 the invariant is untouched
        assert!((out.iminus(0.0) - out.invariant0.iminus.clone()).norm() < 1e-13);
        // leading block agrees with explicit conjugation by the squeeze columns
        let t = 1.2;
        let w = out.wminus(t);
        let i0 = &out.invariant0.iminus;
        let direct = &(&w * i0) * &w.adjoint();
        let got = out.iminus(t);
        let gap = crate::operator::frobenius(&(direct.leading_block(8) - got.leading_block(8)));
        assert!(gap < 1e-9, "{gap}");
        assert!(got.hermiticity_defect() < 1e-14);
    }

    #[test]
    fn evolution_is_unitary_and_starts_at_identity() {
        let s = make_spin(1.0).unwrap();
        let g = GaugeCurve::Euler(EulerGauge::spin(&s, tf("0.5*sin(t)"), tf("2*t")));
        let y = YSpec::diagonal(&s.j3, tf("0.5"), TimeFunction::zero()).unwrap();
        let u0 = evolution_from_gauge(&g, &y, 0.0).unwrap();
        assert!((u0 - Operator::identity(3)).norm() < 1e-14);
        let u = evolution_from_gauge(&g, &y, 2.7).unwrap();
        assert!(unitarity_defect(&u) < 1e-13);
        // U = e^{−iφJ₃} e^{−iθJ₂} e^{i(φ−F)J₃}
        let (th, ph, ff) = (0.5 * 2.7f64.sin(), 5.4, 0.5 * 2.7);
        let want = expm(&s.j3.scale_c(-I * ph)).unwrap()
            * expm(&s.j2.scale_c(-I * th)).unwrap()
            * expm(&s.j3.scale_c(I * (ph - ff))).unwrap();
        assert!((u - want).norm() < 1e-13);
    }

    #[test]
    fn explicit_y_rejected_for_evolution() {
        let y = YSpec::Explicit { dim: 2, y: Arc::new(|_| Operator::identity(2)) };
        assert_eq!(evolution_from_gauge(&GaugeCurve::identity(2), &y, 1.0).unwrap_err(), Error::NonCommutingY);
    }

    #[test]
    fn non_unitary_gauge_rejected() {
        let g = GaugeCurve::Explicit { dim: 2, w: Arc::new(|_| Operator::identity(2).scale(2.0)), dw: None };
        let y = YSpec::zero(2);
        assert!(matches!(hamiltonian_from_gauge(&g, &y, 0.0), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn precessing_factors() {
        let f = tf("0.5");
        let p = precessing_special_case(&f, PI / 2.0, 2.0, 1.0, 0.0);
        assert!((p.f2 - 2.0 / p.r).abs() < 1e-15);
        let theta = TimeFunction::constant(PI / 3.0);
        for t in [0.0, 0.7, 2.2] {
            let p = precessing_special_case(&f, PI / 3.0, 2.0, 1.3, t);
            let want = closed_form_spin_r(&f, &theta, &tf("2*t"), t);
            let got = p.coefficients(1.3, 2.0, t);
            for i in 0..3 {
                assert!((got[i] - want[i]).abs() < 1e-12);
            }
        }
        let p = precessing_special_case(&TimeFunction::zero(), 0.0, 0.0, 1.0, 0.0);
        assert_eq!(p, Precessing { r: 0.0, f1: 0.0, f2: 0.0 });
    }

    #[test]
    fn quadrupole_reductions() {
        let s = make_spin(1.0).unwrap();
        let (f, theta, phi) = (tf("0.5"), tf("0.3*sin(t)"), tf("t"));
        let lin = s.combine(closed_form_spin_r(&f, &theta, &phi, 0.8));
        let h0 = quadrupole_partner(&s, &f, &TimeFunction::zero(), &theta, &phi, 0.8);
        assert_eq!(h0, lin);
        let zero = TimeFunction::zero();
        let h = quadrupole_partner(&s, &zero, &tf("1"), &zero, &zero, 0.0);
        assert!((h - &s.j3 * &s.j3).norm() < 1e-15);
        let h = quadrupole_partner(&s, &zero, &tf("1"), &TimeFunction::constant(PI / 2.0), &zero, 0.0);
        assert!((h - &s.j1 * &s.j1).norm() < 1e-14);
    }

    #[test]
    fn prescription_identities_spin() {
        let s = make_spin(1.5).unwrap();
        let sys = SuperSystem::spin(s, 1.0, tf("0.4*sin(t)"), tf("2*t"), tf("0.5"), TimeFunction::zero()).unwrap();
        let out = run_prescription(&sys).unwrap();
        let times = [0.0, 0.5, 1.7, 4.0];
        assert!(out.factorization_defect(&times) < 1e-12);
        assert!(out.y_commutation_defect(&times) < 1e-12);
        assert!(sys.plus_defect(&times) < 1e-8);
        assert!(sys.wminus.initial_defect() < 1e-14);
        // d(t) = W₋ d₀ U₊†
        for &t in &times {
            let d = &(&out.wminus(t) * &sys.d0) * &out.uplus(t).adjoint();
            assert!((d - out.d(t)).norm() < 1e-14);
        }
    }

    #[test]
    fn static_gauge_keeps_invariant() {
        let s = make_spin(1.0).unwrap();
        let zero = TimeFunction::zero();
        let sys = SuperSystem::spin(s.clone(), 1.0, zero.clone(), zero.clone(), tf("0.5+t"), zero).unwrap();
        let out = run_prescription(&sys).unwrap();
        let h = out.hminus(1.5).unwrap();
        assert!((h - s.j3.scale(2.0)).norm() < 1e-14);
        assert!((out.iminus(3.0) - out.invariant0.iminus.clone()).norm() < 1e-14);
    }

    #[test]
    fn mapped_solution_matches_closed_forms() {
        let s = make_spin(1.0).unwrap();
        let sys = SuperSystem::spin(s.clone(), 1.0, tf("0.6*sin(t)"), tf("2*t"), tf("0.5"), tf("0.3")).unwrap();
        let out = run_prescription(&sys).unwrap();
        for m in [0.0, -1.0] {
            let psi0 = s.basis_state(m).unwrap();
            for t in [0.0, 0.8, 2.5] {
                let a = out.mapped_solution(&psi0, t).unwrap();
                let b = spin_mapped_closed_form(&out, m, t).unwrap();
                assert!((&a - &b).norm() < 1e-12, "m={m} t={t}");
                assert!((a.norm() - 1.0).abs() < 1e-12);
            }
        }
        let top = s.basis_state(1.0).unwrap();
        assert!(matches!(out.mapped_solution(&top, 1.0), Err(Error::ZeroMode { .. })));

        let o = make_oscillator(32, 4).unwrap();
        let sys = SuperSystem::oscillator(o.clone(), tf("0.2*sin(t)"), tf("t"), tf("0.5")).unwrap();
        let out = run_prescription(&sys).unwrap();
        for n in [0, 3] {
            let psi0 = crate::reps::hermite_state(&o, n).unwrap();
            let a = out.mapped_solution(&psi0, 1.1).unwrap();
            let b = oscillator_mapped_closed_form(&out, n, 1.1).unwrap();
            assert!((&a - &b).norm() < 1e-12);
        }
    }

    #[test]
    fn static_mapped_solution_is_stationary() {
        let s = make_spin(0.5).unwrap();
        let zero = TimeFunction::zero();
        let sys = SuperSystem::spin(s.clone(), 1.0, zero.clone(), zero.clone(), zero.clone(), zero).unwrap();
        let out = run_prescription(&sys).unwrap();
        let down = s.basis_state(-0.5).unwrap();
        let partner = s.jplus.apply(&down);
        for t in [0.0, 5.0] {
            assert!((out.mapped_solution(&down, t).unwrap() - &partner).norm() < 1e-15);
        }
    }

    #[test]
    fn alternative_plus_route() {
        let s = make_spin(1.0).unwrap();
        let sys = SuperSystem::spin(s.clone(), 1.3, tf("0.2"), tf("t"), tf("0.5"), TimeFunction::zero()).unwrap();
        let sys = sys.with_plus_route(PlusRoute::Gauge(GaugeCurve::identity(3)));
        let out = run_prescription(&sys).unwrap();
        // W₊ = 1 gives Y₊ = H₊ = b J₃ and d(t) = W₋ J₊
        assert!((out.yplus(0.7) - s.j3.scale(1.3)).norm() < 1e-14);
        assert!((out.d(0.7) - &out.wminus(0.7) * &s.jplus).norm() < 1e-14);
        let psi0 = s.basis_state(0.0).unwrap();
        let a = out.mapped_solution(&psi0, 0.7).unwrap();
        let b = spin_mapped_closed_form(&out, 0.0, 0.7).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn oscillator_phase_at_ground() {
        assert!((oscillator_phase(0, 0.0, 1.0) + 0.75).abs() < 1e-15);
        assert!((oscillator_phase(2, 1.0, 0.0) - 7.0 / 4.0).abs() < 1e-15);
    }
}
