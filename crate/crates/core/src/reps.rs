//! Generator matrices for the two worked families: spin-j su(2) (exact),
//! truncated-Fock oscillator with its su(1,1) quadratic generators, and the
//! five quadrupole operators of a spin.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

use crate::operator::{c, commutator, Operator, State, I};

/// Spin-j representation in the basis `m = j, j−1, …, −j` (index `k ↔ m = j − k`).
#[derive(Clone, Debug)]
pub struct SpinRep {
    pub j: f64,
    pub j1: Operator,
    pub j2: Operator,
    pub j3: Operator,
    pub jplus: Operator,
    pub jminus: Operator,
    pub jsquared: Operator,
}

impl SpinRep {
    pub fn dim(&self) -> usize {
        self.j3.dim()
    }

    /// Magnetic quantum number of basis index `k`.
    pub fn m_of(&self, k: usize) -> f64 {
        self.j - k as f64
    }

    /// Basis index of magnetic quantum number `m`, if it belongs to the multiplet.
    pub fn index_of(&self, m: f64) -> Option<usize> {
        let k = self.j - m;
        let kr = k.round();
        ((k - kr).abs() < 1e-9 && kr >= 0.0 && (kr as usize) < self.dim()).then_some(kr as usize)
    }

    /// `|j, m⟩`.
    pub fn basis_state(&self, m: f64) -> Option<State> {
        let k = self.index_of(m)?;
        let mut v = State::zeros(self.dim());
        v[k] = c(1.0);
        Some(v)
    }

    pub fn generators(&self) -> [&Operator; 3] {
        [&self.j1, &self.j2, &self.j3]
    }

    /// `Σ rᵢ Jᵢ`.
    pub fn combine(&self, r: [f64; 3]) -> Operator {
        &(&self.j1.scale(r[0]) + &self.j2.scale(r[1])) + &self.j3.scale(r[2])
    }

    /// Coefficients of `h` along `J₁, J₂, J₃` (Hilbert–Schmidt projection).
    pub fn project(&self, h: &Operator) -> [f64; 3] {
        let mut r = [0.0; 3];
        for (ri, g) in r.iter_mut().zip(self.generators()) {
            let num = (g * h).trace().re;
            let den = (g * g).trace().re;
            *ri = if den > 0.0 { num / den } else { 0.0 };
        }
        r
    }
}

/// Builds the spin-`j` generators; `2j` must be a nonnegative integer.
pub fn make_spin(j: f64) -> Result<SpinRep> {
    let two_j = 2.0 * j;
    if !(j >= 0.0) || (two_j - two_j.round()).abs() > 1e-12 || two_j > 1.0e4 {
        return Err(Error::InvalidSpin(j));
    }
    let dim = two_j.round() as usize + 1;
    let j = two_j.round() / 2.0;
    let m = |k: usize| j - k as f64;

    let j3 = Operator::from_real_diagonal(&(0..dim).map(m).collect::<Vec<_>>());
    // J₊|m⟩ = √((j−m)(j+m+1)) |m+1⟩ and |m+1⟩ sits one index earlier
    let jplus = Operator::from_fn(dim, |r, col| {
        if col == r + 1 {
            let mm = m(col);
            c(((j - mm) * (j + mm + 1.0)).sqrt())
        } else {
            c(0.0)
        }
    });
    let jminus = jplus.adjoint();
    let j1 = (&jplus + &jminus).scale(0.5);
    let j2 = (&jplus - &jminus).scale_c(-I * 0.5);
    let jsquared = &(&(&j1 * &j1) + &(&j2 * &j2)) + &(&j3 * &j3);
    Ok(SpinRep { j, j1, j2, j3, jplus, jminus, jsquared })
}

/// Truncated Fock-space oscillator. The top `buffer` states are untrusted:
/// canonical relations only hold on the interior `0..N−buffer`.
#[derive(Clone, Debug)]
pub struct OscillatorRep {
    pub n: usize,
    pub buffer: usize,
    pub a: Operator,
    pub adag: Operator,
    pub x: Operator,
    pub p: Operator,
    pub k1: Operator,
    pub k2: Operator,
    pub k3: Operator,
    pub projector_interior: Operator,
}

/// Default untrusted margin `max(4, N/8)`, clamped to `N/4`.
pub fn default_buffer(n: usize) -> usize {
    (n / 8).max(4).min(n / 4).max(1)
}

pub fn make_oscillator(n: usize, buffer: usize) -> Result<OscillatorRep> {
    if n < 8 || buffer < 1 || buffer > n / 4 {
        return Err(Error::InvalidTruncation { n, buffer });
    }
    let a = Operator::from_fn(n, |r, col| if col == r + 1 { c((col as f64).sqrt()) } else { c(0.0) });
    let adag = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&a + &adag).scale(s);
    let p = (&a - &adag).scale_c(-I * s);
    // Quadratic generators are built normal-ordered from a and a†: products of
    // truncated ladders are exact for a², a†², a†a, so the su(1,1) relations
    // only fail at the last two Fock states.
    let a2 = &a * &a;
    let ad2 = &adag * &adag;
    let k1 = (&a2 + &ad2).scale(0.25);
    let k2 = (&a2 - &ad2).scale_c(I * 0.25);
    let k3 = Operator::from_real_diagonal(&(0..n).map(|k| (2.0 * k as f64 + 1.0) / 4.0).collect::<Vec<_>>());
    let interior = n - buffer;
    let projector_interior =
        Operator::from_real_diagonal(&(0..n).map(|k| if k < interior { 1.0 } else { 0.0 }).collect::<Vec<_>>());
    Ok(OscillatorRep { n, buffer, a, adag, x, p, k1, k2, k3, projector_interior })
}

impl OscillatorRep {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of trusted Fock states.
    pub fn interior(&self) -> usize {
        self.n - self.buffer
    }

    pub fn number(&self) -> Operator {
        &self.adag * &self.a
    }

    /// `H₊ = a†a + ½`.
    pub fn hamiltonian(&self) -> Operator {
        Operator::from_real_diagonal(&(0..self.n).map(|k| k as f64 + 0.5).collect::<Vec<_>>())
    }

    /// `P A P` with `P` the interior projector.
    pub fn project_interior(&self, op: &Operator) -> Operator {
        let k = self.interior();
        Operator::from_fn(self.n, |r, col| if r < k && col < k { op.get(r, col) } else { c(0.0) })
    }

    pub fn interior_norm(&self, op: &Operator) -> f64 {
        crate::operator::frobenius(&op.leading_block(self.interior()))
    }

    pub fn generators(&self) -> [&Operator; 3] {
        [&self.k1, &self.k2, &self.k3]
    }

    /// `Σ rᵢ Kᵢ`.
    pub fn combine(&self, r: [f64; 3]) -> Operator {
        &(&self.k1.scale(r[0]) + &self.k2.scale(r[1])) + &self.k3.scale(r[2])
    }
}

/// Exact `rows × cols` block of the untruncated squeeze `exp(−iθK₂)`.
///
/// With `r = θ/2` the operator factorizes as
/// `exp(−τ a†²) cosh(r)^{−(a†a+½)} exp(τ a²)`, `τ = tanh(r)/2`, so every
/// matrix element is a finite sum and the truncation edge never enters.
/// The sum alternates in sign; cancellation costs digits once both indices
/// are large and `|θ|` is of order one (about 1e-8 absolute at row and
/// column 64 for `θ = 1`), while columns with a small index stay exact.
pub fn squeeze_block(theta: f64, rows: usize, cols: usize) -> DMatrix<f64> {
    let r = theta / 2.0;
    let tau = r.tanh() / 2.0;
    let inner = rows.min(cols);
    if tau == 0.0 {
        return DMatrix::from_fn(rows, cols, |k, m| if k == m { 1.0 } else { 0.0 });
    }
    let ln_fact = ln_factorials(rows.max(cols));
    let ln_tau = tau.abs().ln();
    let ln_s = -r.cosh().ln();
    // ⟨k|exp(σ a†²)|j⟩ = σᵖ/p! √(k!/j!) with k = j + 2p
    let ladder = |k: usize, j: usize, negative: bool| -> f64 {
        if j > k || (k - j) % 2 == 1 {
            return 0.0;
        }
        let p = (k - j) / 2;
        let mag = (p as f64 * ln_tau - ln_fact[p] + 0.5 * (ln_fact[k] - ln_fact[j])).exp();
        let odd = p % 2 == 1 && (negative != (tau < 0.0));
        if odd { -mag } else { mag }
    };
    let left = DMatrix::from_fn(rows, inner, |k, j| ladder(k, j, true) * ((j as f64 + 0.5) * ln_s).exp());
    let right = DMatrix::from_fn(inner, cols, |j, m| ladder(m, j, false));
    left * right
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// `|n⟩` as a Fock coordinate vector; rejected inside the buffer.
pub fn hermite_state(osc: &OscillatorRep, n: usize) -> Result<State> {
    if n >= osc.interior() {
        return Err(Error::BufferZone { n, interior: osc.interior() });
    }
    let mut v = State::zeros(osc.n);
    v[n] = c(1.0);
    Ok(v)
}

/// The five quadrupole operators `e₀…e₄` of a spin and their commutator table.
#[derive(Clone, Debug)]
pub struct QuadrupoleBasis {
    pub parent: SpinRep,
    pub e: [Operator; 5],
    /// `t[α][β] = [e_α, e_β]`.
    pub t: Vec<Vec<Operator>>,
    /// Set for `j < 1`, where every quadrupole operator is a multiple of the identity.
    pub trivial: bool,
}

pub fn make_quadrupole(spin: &SpinRep) -> QuadrupoleBasis {
    let (j1, j2, j3) = (&spin.j1, &spin.j2, &spin.j3);
    let r3 = 3f64.sqrt().recip();
    let sym = |a: &Operator, b: &Operator| (a * b + b * a).scale(r3);
    let e = [
        &(j3 * j3) - &spin.jsquared.scale(1.0 / 3.0),
        sym(j1, j3),
        sym(j2, j3),
        (&(j1 * j1) - &(j2 * j2)).scale(r3),
        sym(j1, j2),
    ];
    let t = (0..5)
        .map(|a| (0..5).map(|b| commutator(&e[a], &e[b]).expect("same dim")).collect())
        .collect();
    QuadrupoleBasis { parent: spin.clone(), e, t, trivial: spin.j < 1.0 }
}

impl QuadrupoleBasis {
    /// `Σ ρ^α e_α`.
    pub fn combine(&self, rho: [f64; 5]) -> Operator {
        rho.iter()
            .zip(&self.e)
            .fold(Operator::zeros(self.parent.dim()), |acc, (&r, e)| &acc + &e.scale(r))
    }
}

/// Reference value `⟨j,m|J₋J₊|j,m⟩ = (j−m)(j+m+1)`.
pub fn ladder_weight(j: f64, m: f64) -> f64 {
    (j - m) * (j + m + 1.0)
}
