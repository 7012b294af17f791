//! Dense complex operators: the matrix substrate for everything else.
//!
//! Norms are Frobenius unless a name says otherwise.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;
pub type State = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Block split of a graded space: the first `plus` basis vectors are bosonic,
/// the remaining `minus` fermionic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grading {
    pub plus: usize,
    pub minus: usize,
}

/// A dense square complex matrix, optionally carrying a grading.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: Matrix,
    grading: Option<Grading>,
}

impl Operator {
    pub fn new(mat: Matrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare { rows: mat.nrows(), cols: mat.ncols() });
        }
        Ok(Self { mat, grading: None })
    }

    /// Wraps a matrix already known to be square.
    pub(crate) fn from_square(mat: Matrix) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        Self { mat, grading: None }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_square(Matrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_square(Matrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| c(x)));
        Self::from_square(Matrix::from_diagonal(&d))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::from_square(Matrix::from_fn(dim, dim, f))
    }

    pub fn with_grading(mut self, grading: Grading) -> Result<Self> {
        if grading.plus + grading.minus != self.dim() {
            return Err(Error::InvalidGrading {
                plus: grading.plus,
                minus: grading.minus,
                dim: self.dim(),
            });
        }
        self.grading = Some(grading);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn grading(&self) -> Option<Grading> {
        self.grading
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint(), grading: self.grading }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: &self.mat * c(s), grading: self.grading }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self { mat: &self.mat * s, grading: self.grading }
    }

    pub fn norm(&self) -> f64 {
        frobenius(&self.mat)
    }

    /// Induced 1-norm (maximum absolute column sum); bounds the spectral norm
    /// from above for Hermitian operators.
    pub fn one_norm(&self) -> f64 {
        self.mat
            .column_iter()
            .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// ‖A − A†‖ / max(1, ‖A‖).
    pub fn hermiticity_defect(&self) -> f64 {
        frobenius(&(&self.mat - self.mat.adjoint())) / self.norm().max(1.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn apply(&self, psi: &State) -> State {
        &self.mat * psi
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut out = Self::identity(self.dim());
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Block (row block, column block) of a graded operator.
    pub fn block(&self, row: usize, col: usize) -> Option<Matrix> {
        let g = self.grading?;
        let (r0, rn) = if row == 0 { (0, g.plus) } else { (g.plus, g.minus) };
        let (c0, cn) = if col == 0 { (0, g.plus) } else { (g.plus, g.minus) };
        Some(self.mat.view((r0, c0), (rn, cn)).into_owned())
    }

    /// Norm of the off-diagonal blocks; zero for even operators.
    pub fn odd_part_norm(&self) -> Option<f64> {
        Some((frobenius(&self.block(0, 1)?).powi(2) + frobenius(&self.block(1, 0)?).powi(2)).sqrt())
    }

    /// Norm of the diagonal blocks; zero for odd operators.
    pub fn even_part_norm(&self) -> Option<f64> {
        Some((frobenius(&self.block(0, 0)?).powi(2) + frobenius(&self.block(1, 1)?).powi(2)).sqrt())
    }

    /// Principal submatrix on the first `k` basis vectors.
    pub fn leading_block(&self, k: usize) -> Matrix {
        self.mat.view((0, 0), (k, k)).into_owned()
    }

    pub fn expect(&self, psi: &State) -> C64 {
        psi.dotc(&(&self.mat * psi))
    }
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::from_square(&self.mat + &rhs.mat)
    }
}

impl Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::from_square(&self.mat - &rhs.mat)
    }
}

impl Mul<&Operator> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::from_square(&self.mat * &rhs.mat)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator::from_square(-&self.mat)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr<Operator> for Operator {
            type Output = Operator;
            fn $f(self, rhs: Operator) -> Operator {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&Operator> for Operator {
            type Output = Operator;
            fn $f(self, rhs: &Operator) -> Operator {
                (&self).$f(rhs)
            }
        }
        impl $tr<Operator> for &Operator {
            type Output = Operator;
            fn $f(self, rhs: Operator) -> Operator {
                self.$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

fn check_dims(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(())
}

/// `AB − BA`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dims(a, b)?;
    Ok(a * b - b * a)
}

/// `AB + BA`.
pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dims(a, b)?;
    Ok(a * b + b * a)
}

/// Block-diagonal direct sum with grading `(a.dim, b.dim)`.
pub fn block_diag(a: &Operator, b: &Operator) -> Operator {
    let (n, m) = (a.dim(), b.dim());
    let mut mat = Matrix::zeros(n + m, n + m);
    mat.view_mut((0, 0), (n, n)).copy_from(a.matrix());
    mat.view_mut((n, n), (m, m)).copy_from(b.matrix());
    Operator { mat, grading: Some(Grading { plus: n, minus: m }) }
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn expm(a: &Operator) -> Result<Operator> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(Operator::from_square(a.mat.exp()))
}

/// `exp(−i s H)` for Hermitian `H`, built from the spectral decomposition so
/// the result is unitary to rounding.
pub fn unitary_exp(h: &Operator, s: f64) -> Result<Operator> {
    let es = eigh(h)?;
    Ok(es.function(|lam| (-I * lam * s).exp()))
}

/// `‖U†U − 1‖`.
pub fn unitarity_defect(u: &Operator) -> f64 {
    let n = u.dim();
    frobenius(&(u.mat.adjoint() * &u.mat - Matrix::identity(n, n)))
}

/// Unitary factor of the polar decomposition `M = U P`.
pub fn polar_unitary(m: &Matrix) -> Matrix {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    u * v_t
}

/// Ascending spectrum of a Hermitian operator with its eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    /// Index ranges of (numerically) degenerate eigenvalues.
    pub degeneracy_groups: Vec<std::ops::Range<usize>>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> State {
        self.vectors.column(k).into_owned()
    }

    /// Columns of the eigenvectors in group `g`.
    pub fn group_vectors(&self, g: usize) -> Matrix {
        let r = self.degeneracy_groups[g].clone();
        self.vectors.columns(r.start, r.len()).into_owned()
    }

    pub fn group_value(&self, g: usize) -> f64 {
        let r = self.degeneracy_groups[g].clone();
        self.values[r.clone()].iter().sum::<f64>() / r.len() as f64
    }

    /// `V f(Λ) V†`.
    pub fn function(&self, f: impl Fn(f64) -> C64) -> Operator {
        let d = DVector::from_iterator(self.dim(), self.values.iter().map(|&x| f(x)));
        let mut scaled = self.vectors.clone();
        for (mut col, &s) in scaled.column_iter_mut().zip(d.iter()) {
            col *= s;
        }
        Operator::from_square(scaled * self.vectors.adjoint())
    }

    pub fn reconstruct(&self) -> Operator {
        self.function(c)
    }
}

/// Absolute gap below which neighbouring eigenvalues count as degenerate.
pub fn degeneracy_gap(norm: f64) -> f64 {
    1e-8 * norm.max(1.0)
}

/// Hermitian eigendecomposition; values ascending, degenerate values grouped.
pub fn eigh(a: &Operator) -> Result<EigenSystem> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let defect = a.hermiticity_defect();
    if defect > 1e-10 {
        return Err(Error::NotHermitian { defect });
    }
    let n = a.dim();
    let sym = (&a.mat + a.mat.adjoint()) * c(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    let degeneracy_groups = group_values(&values, degeneracy_gap(a.norm()));
    Ok(EigenSystem { values, vectors, degeneracy_groups })
}

pub(crate) fn group_values(values: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > gap {
            if k > start {
                groups.push(start..k);
            }
            start = k;
        }
    }
    groups
}

/// Applies `exp(−i s H)` to `psi` by a Taylor series on the vector. Converges
/// to rounding for `‖sH‖ ≲ 1`; callers keep the step inside that range.
pub fn exp_apply(h: &Operator, s: f64, psi: &State) -> State {
    let mut out = psi.clone();
    let mut term = psi.clone();
    let scale = psi.norm().max(f64::MIN_POSITIVE);
    for k in 1..60 {
        term = (&h.mat * &term) * (-I * (s / k as f64));
        out += &term;
        if term.norm() < 1e-18 * scale {
            break;
        }
    }
    out
}

/// Eigenphases of a unitary matrix in `(−π, π]`, ascending.
pub fn eigenphases(u: &Matrix) -> Vec<f64> {
    let values = u.clone().schur().eigenvalues().expect("complex Schur form is triangular");
    let mut p: Vec<f64> = values.iter().map(|z| z.arg()).collect();
    p.sort_by(f64::total_cmp);
    p
}

/// Fidelity `|⟨a|b⟩|` of two states.
pub fn overlap_abs(a: &State, b: &State) -> f64 {
    a.dotc(b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pauli() -> [Operator; 3] {
        let o = c(0.0);
        let l = c(1.0);
        [
            Operator::new(Matrix::from_row_slice(2, 2, &[o, l, l, o])).unwrap(),
            Operator::new(Matrix::from_row_slice(2, 2, &[o, -I, I, o])).unwrap(),
            Operator::new(Matrix::from_row_slice(2, 2, &[l, o, o, -l])).unwrap(),
        ]
    }

    #[test]
    fn commutator_of_self_vanishes() {
        let [s1, _, _] = pauli();
        assert_eq!(commutator(&s1, &s1).unwrap().norm(), 0.0);
    }

    #[test]
    fn commutator_rejects_mismatch() {
        let err = commutator(&Operator::identity(2), &Operator::identity(3)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { left: 2, right: 3 });
        assert!(anticommutator(&Operator::identity(2), &Operator::identity(3)).is_err());
    }

    #[test]
    fn pauli_anticommute() {
        // direct 2x2 arithmetic: σ1σ2 = iσ3 = −σ2σ1
        let [s1, s2, _] = pauli();
        assert_eq!(anticommutator(&s1, &s2).unwrap().norm(), 0.0);
        assert_eq!(anticommutator(&s1, &Operator::zeros(2)).unwrap().norm(), 0.0);
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(Operator::new(Matrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn expm_basics() {
        let z = expm(&Operator::zeros(3)).unwrap();
        assert_abs_diff_eq!((z - Operator::identity(3)).norm(), 0.0, epsilon = 1e-15);

        let d = Operator::from_fn(2, |i, j| if i == j { I * (i as f64 + 1.0) } else { c(0.0) });
        let e = expm(&d).unwrap();
        assert_abs_diff_eq!((e.get(0, 0) - I.exp()).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((e.get(1, 1) - (I * 2.0).exp()).norm(), 0.0, epsilon = 1e-14);

        let mut bad = Matrix::zeros(2, 2);
        bad[(0, 1)] = c(f64::NAN);
        assert_eq!(expm(&Operator::new(bad).unwrap()), Err(Error::NonFinite));
    }

    #[test]
    fn expm_rotation_closed_form() {
        // exp(−iθσ2/2) = cos(θ/2) − i sin(θ/2) σ2; at θ=π → ((0,−1),(1,0))
        let [_, s2, _] = pauli();
        let u = expm(&s2.scale_c(-I * std::f64::consts::PI * 0.5)).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        assert!(frobenius(&(u.matrix() - want)) < 1e-14);
    }

    #[test]
    fn unitarity_defect_examples() {
        assert_eq!(unitarity_defect(&Operator::identity(4)), 0.0);
        let two = Operator::identity(2).scale(2.0);
        assert_abs_diff_eq!(unitarity_defect(&two), 3.0 * 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn eigh_identity_single_group() {
        let es = eigh(&Operator::identity(5)).unwrap();
        assert!(es.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert_eq!(es.degeneracy_groups, vec![0..5]);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = Operator::new(Matrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)])).unwrap();
        assert!(matches!(eigh(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn exp_apply_matches_spectral() {
        let [s1, s2, s3] = pauli();
        let h = &(&s1.scale(0.3) + &s2.scale(-0.7)) + &s3.scale(0.2);
        let psi = State::from_vec(vec![c(0.6), C64::new(0.0, 0.8)]);
        let a = exp_apply(&h, 0.4, &psi);
        let b = unitary_exp(&h, 0.4).unwrap().apply(&psi);
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn polar_of_unitary_is_itself() {
        let [_, s2, _] = pauli();
        let u = expm(&s2.scale_c(-I * 0.3)).unwrap();
        assert!(frobenius(&(polar_unitary(u.matrix()) - u.matrix())) < 1e-14);
    }

    #[test]
    fn graded_blocks() {
        let a = Operator::identity(2);
        let b = Operator::identity(3).scale(2.0);
        let d = block_diag(&a, &b);
        assert_eq!(d.grading(), Some(Grading { plus: 2, minus: 3 }));
        assert_eq!(d.odd_part_norm(), Some(0.0));
        assert!(Operator::identity(4).with_grading(Grading { plus: 1, minus: 2 }).is_err());
    }
}
