//! Matrix-free simulation of discrete Schrödinger operators `H = -Δ + V` on
//! finite boxes of `ℤ^d`, with the diagnostics needed to test transport
//! bounds: weighted moments `‖ψ‖_r`, Chebyshev propagation, commutator
//! stencils, spectral windows and Mourre forms.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod lattice;
pub mod operators;
pub mod potentials;
pub mod propagation;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use lattice::{BoxGeometry, LatticeState, WeightedNormOrder};
pub use operators::{Hamiltonian, OperatorExpr};
pub use potentials::{PotentialField, PotentialSpec};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
