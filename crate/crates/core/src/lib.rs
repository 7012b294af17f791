//! Supersymmetric dynamical invariants on finite-dimensional representations.
//!
//! Given an exactly solvable Hamiltonian `H₊(t)`, a constant intertwiner `d₀`
//! and a unitary gauge curve `W₋(t)`, the crate builds the partner
//! Hamiltonian `H₋(t)`, the even invariant `I = I₊ ⊕ I₋` with
//! `I₊ = d†d/2`, `I₋ = dd†/2`, and the exact solutions of both Schrödinger
//! equations. The [`dynamics`] module checks all of it independently with a
//! unitary propagator, Liouville–von-Neumann residuals and Wilson-loop
//! holonomies.

pub mod construction;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod operator;
pub mod reps;
pub mod susy;
pub mod timefunc;

pub use error::{Error, Result};
pub use exec::Exec;
pub use operator::{Operator, State, C64};
pub use timefunc::TimeFunction;
