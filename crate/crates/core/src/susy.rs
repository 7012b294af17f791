//! Supercharges, even supersymmetric invariants and the pairing of the
//! positive spectra of `I₊ = d†d/2` and `I₋ = dd†/2`.

use crate::error::{Error, Result};
use crate::operator::{
    anticommutator, block_diag, c, commutator, eigh, frobenius, polar_unitary, Grading, Matrix, Operator, State,
};

/// Odd nilpotent charge `Q = [[0, 0], [d, 0]]` on `ℋ₊ ⊕ ℋ₋`.
#[derive(Clone, Debug)]
pub struct SuperCharge {
    pub d: Operator,
    pub q: Operator,
}

/// `I = I₊ ⊕ I₋` with `I₊ = d†d/2`, `I₋ = dd†/2`.
#[derive(Clone, Debug)]
pub struct SuperInvariant {
    /// The intertwiner the invariant was built from.
    pub d: Operator,
    pub iplus: Operator,
    pub iminus: Operator,
    pub i: Operator,
}

pub fn build_supercharge(d: &Operator) -> SuperCharge {
    let n = d.dim();
    let mut q = Matrix::zeros(2 * n, 2 * n);
    q.view_mut((n, 0), (n, n)).copy_from(d.matrix());
    let q = Operator::new(q)
        .and_then(|q| q.with_grading(Grading { plus: n, minus: n }))
        .expect("square by construction");
    SuperCharge { d: d.clone(), q }
}

/// Accepts a raw matrix, rejecting unequal grading dimensions.
pub fn build_supercharge_from_matrix(d: Matrix) -> Result<SuperCharge> {
    Ok(build_supercharge(&Operator::new(d)?))
}

pub fn build_invariant(q: &SuperCharge) -> SuperInvariant {
    let d = &q.d;
    let dag = d.adjoint();
    let iplus = (&dag * d).scale(0.5);
    let iminus = (d * &dag).scale(0.5);
    let i = block_diag(&iplus, &iminus);
    SuperInvariant { d: d.clone(), iplus, iminus, i }
}

/// Residual norms of the N=1 superalgebra.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperalgebraReport {
    /// `‖Q²‖`
    pub nilpotency: f64,
    /// `‖[Q, I]‖`
    pub commutation: f64,
    /// `‖{Q, Q†} − 2I‖`
    pub anticommutation: f64,
}

impl SuperalgebraReport {
    pub fn max(&self) -> f64 {
        self.nilpotency.max(self.commutation).max(self.anticommutation)
    }
}

pub fn check_superalgebra(q: &SuperCharge, inv: &SuperInvariant) -> Result<SuperalgebraReport> {
    let nilpotency = (&q.q * &q.q).norm();
    let commutation = commutator(&q.q, &inv.i)?.norm();
    let anticommutation = (&anticommutator(&q.q, &q.q.adjoint())? - &inv.i.scale(2.0)).norm();
    Ok(SuperalgebraReport { nilpotency, commutation, anticommutation })
}

/// One shared positive eigenvalue of `I₊` and `I₋`.
#[derive(Clone, Debug)]
pub struct PairedLevel {
    pub value: f64,
    pub degeneracy: usize,
    /// Orthonormal eigenvectors of `I₊` as columns.
    pub plus: Matrix,
    /// Orthonormal eigenvectors of `I₋` as columns.
    pub minus: Matrix,
    /// Unitary with `d|λ,a,+⟩ = √(2λ) Σ_b v_{ba} |λ,b,−⟩`.
    pub v: Matrix,
}

#[derive(Clone, Debug)]
pub struct SpectralPairing {
    pub levels: Vec<PairedLevel>,
    pub kernel_plus: usize,
    pub kernel_minus: usize,
}

impl SpectralPairing {
    pub fn shared_positive_values(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.value).collect()
    }

    /// Largest `‖d P − √(2λ) M v‖` over levels.
    pub fn pairing_residual(&self, d: &Operator) -> f64 {
        self.levels
            .iter()
            .map(|l| frobenius(&(d.matrix() * &l.plus - &l.minus * &l.v * c((2.0 * l.value).sqrt()))))
            .fold(0.0, f64::max)
    }

    /// Largest `‖v†v − 1‖` over levels.
    pub fn unitarity_defect(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| frobenius(&(l.v.adjoint() * &l.v - Matrix::identity(l.degeneracy, l.degeneracy))))
            .fold(0.0, f64::max)
    }
}

/// Eigenvalues below this count as zero modes.
pub fn zero_threshold(inv: &SuperInvariant) -> f64 {
    1e-9 * inv.i.norm().max(1.0)
}

pub fn pair_spectra(inv: &SuperInvariant) -> Result<SpectralPairing> {
    let zero = zero_threshold(inv);
    let ep = eigh(&inv.iplus)?;
    let em = eigh(&inv.iminus)?;
    for values in [&ep.values, &em.values] {
        let kernel = values.iter().copied().filter(|&v| v < zero).fold(f64::NEG_INFINITY, f64::max);
        let positive = values.iter().copied().filter(|&v| v >= zero).fold(f64::INFINITY, f64::min);
        if positive < 1e3 * zero {
            return Err(Error::AmbiguousKernel { kernel: kernel.max(0.0), positive });
        }
    }
    let kernel_plus = ep.values.iter().filter(|&&v| v < zero).count();
    let kernel_minus = em.values.iter().filter(|&&v| v < zero).count();

    let positive_groups = |es: &crate::operator::EigenSystem| -> Vec<usize> {
        (0..es.degeneracy_groups.len()).filter(|&g| es.group_value(g) >= zero).collect()
    };
    let gp = positive_groups(&ep);
    let gm = positive_groups(&em);
    let tol = crate::operator::degeneracy_gap(inv.i.norm()) * 10.0;
    let mismatch = || Error::Unsupported("positive spectra of I+ and I- do not pair up".into());
    if gp.len() != gm.len() {
        return Err(mismatch());
    }
    let mut levels = Vec::with_capacity(gp.len());
    for (&a, &b) in gp.iter().zip(&gm) {
        let (va, vb) = (ep.group_value(a), em.group_value(b));
        let (na, nb) = (ep.degeneracy_groups[a].len(), em.degeneracy_groups[b].len());
        if na != nb || (va - vb).abs() > tol {
            return Err(mismatch());
        }
        let value = 0.5 * (va + vb);
        let plus = ep.group_vectors(a);
        let minus = em.group_vectors(b);
        let overlap = minus.adjoint() * inv.d.matrix() * &plus * c((2.0 * value).sqrt().recip());
        let v = polar_unitary(&overlap);
        levels.push(PairedLevel { value, degeneracy: na, plus, minus, v });
    }
    Ok(SpectralPairing { levels, kernel_plus, kernel_minus })
}

fn eigen_defect(op: &Operator, lambda: f64, psi: &State) -> f64 {
    (op.apply(psi) - psi * c(lambda)).norm()
}

/// `(2λ)^{−1/2} d ψ₊`: the superpartner of an `I₊` eigenvector.
pub fn susy_map_state(d: &Operator, lambda: f64, psi_plus: &State) -> Result<State> {
    if lambda <= 1e-9 * d.norm().max(1.0) {
        return Err(Error::ZeroMode { value: lambda });
    }
    let iplus = (&d.adjoint() * d).scale(0.5);
    let defect = (psi_plus.norm() - 1.0).abs().max(eigen_defect(&iplus, lambda, psi_plus));
    if defect > 1e-8 {
        return Err(Error::NotEigenvector { lambda, defect });
    }
    let out = d.apply(psi_plus) * c((2.0 * lambda).sqrt().recip());
    let iminus = (d * &d.adjoint()).scale(0.5);
    let post = (out.norm() - 1.0).abs().max(eigen_defect(&iminus, lambda, &out));
    if post > 1e-8 {
        return Err(Error::NotEigenvector { lambda, defect: post });
    }
    Ok(out)
}

/// `(2λ)^{−1/2} d† ψ₋`: inverse of [`susy_map_state`].
pub fn susy_unmap_state(d: &Operator, lambda: f64, psi_minus: &State) -> Result<State> {
    susy_map_state(&d.adjoint(), lambda, psi_minus)
}
