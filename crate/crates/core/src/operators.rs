//! Matrix-free `H = -Δ + V`, the weight `Q = √(1+|n|²)` and the brackets
//! built from them, with Dirichlet truncation at the box surface.
//!
//! All kernels are gather stencils over slices so the same code serves real
//! basis vectors (dense materialization, power iteration) and complex states.

use std::io::Write;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::lattice::{BoxGeometry, LatticeState};
use crate::potentials::PotentialField;

/// Default cap on `total_sites` for dense materialization and diagonalization.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Scalar types the stencils act on.
pub trait Amplitude:
    Copy + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
}

impl<T> Amplitude for T where
    T: Copy + Zero + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> + Send + Sync
{
}

/// `(Δψ)_n = Σ_j (ψ_{n+e_j} + ψ_{n-e_j})`, out-of-box neighbors read as 0.
pub fn laplacian_into<T: Amplitude>(g: &BoxGeometry, src: &[T], dst: &mut [T]) {
    let l = g.radius();
    let strides = g.strides();
    for (i, out) in dst.iter_mut().enumerate() {
        let mut acc = T::zero();
        for (j, &s) in strides.iter().enumerate() {
            let c = g.coord(i, j);
            if c < l {
                acc = acc + src[i + s];
            }
            if c > -l {
                acc = acc + src[i - s];
            }
        }
        *out = acc;
    }
}

/// `([Q,H]ψ)_n = Σ_{j,±} (q_{n±e_j} - q_n) ψ_{n±e_j}` with `q = √(1+|n|²)`.
pub fn commutator_q_h_into<T: Amplitude>(g: &BoxGeometry, src: &[T], dst: &mut [T]) {
    weighted_hopping_difference_into(g, &g.weights(0.5), src, dst, 1.0);
}

/// `([H,Q^m]ψ)_n = Σ_{j,±} (w_n - w_{n±e_j}) ψ_{n±e_j}` with `w = (1+|n|²)^{m/2}`.
pub fn commutator_h_qm_into<T: Amplitude>(g: &BoxGeometry, m: u32, src: &[T], dst: &mut [T]) {
    weighted_hopping_difference_into(g, &g.weights(m as f64 / 2.0), src, dst, -1.0);
}

fn weighted_hopping_difference_into<T: Amplitude>(
    g: &BoxGeometry,
    w: &[f64],
    src: &[T],
    dst: &mut [T],
    sign: f64,
) {
    let l = g.radius();
    let strides = g.strides();
    for (i, out) in dst.iter_mut().enumerate() {
        let mut acc = T::zero();
        let wi = w[i];
        for (j, &s) in strides.iter().enumerate() {
            let c = g.coord(i, j);
            if c < l {
                acc = acc + src[i + s] * (sign * (w[i + s] - wi));
            }
            if c > -l {
                acc = acc + src[i - s] * (sign * (w[i - s] - wi));
            }
        }
        *out = acc;
    }
}

/// `([H,-Q²]ψ)_n = Σ_j ((2n_j+1) ψ_{n+e_j} - (2n_j-1) ψ_{n-e_j})`.
///
/// Integer coefficients; the potential cancels.
pub fn dilation_into<T: Amplitude>(g: &BoxGeometry, src: &[T], dst: &mut [T]) {
    let l = g.radius();
    let strides = g.strides();
    for (i, out) in dst.iter_mut().enumerate() {
        let mut acc = T::zero();
        for (j, &s) in strides.iter().enumerate() {
            let c = g.coord(i, j);
            if c < l {
                acc = acc + src[i + s] * (2 * c + 1) as f64;
            }
            if c > -l {
                acc = acc - src[i - s] * (2 * c - 1) as f64;
            }
        }
        *out = acc;
    }
}

/// `([V,[H,-Q²]]ψ)_n = Σ_j ((2n_j+1)(V_n - V_{n+e_j}) ψ_{n+e_j} - (2n_j-1)(V_n - V_{n-e_j}) ψ_{n-e_j})`.
pub fn potential_commutator_into<T: Amplitude>(
    g: &BoxGeometry,
    v: &[f64],
    src: &[T],
    dst: &mut [T],
) {
    let l = g.radius();
    let strides = g.strides();
    for (i, out) in dst.iter_mut().enumerate() {
        let mut acc = T::zero();
        let vi = v[i];
        for (j, &s) in strides.iter().enumerate() {
            let c = g.coord(i, j);
            if c < l {
                acc = acc + src[i + s] * ((2 * c + 1) as f64 * (vi - v[i + s]));
            }
            if c > -l {
                acc = acc - src[i - s] * ((2 * c - 1) as f64 * (vi - v[i - s]));
            }
        }
        *out = acc;
    }
}

/// Diagonal that turns the box bracket `[H_box,[H_box,-Q²]]` into the
/// compression `P[H,[H,-Q²]]P` of the lattice operator: `2(2L+1)` for every
/// face `|n_j| = L` the site touches. Independent of `V`.
pub fn boundary_face_correction(g: &BoxGeometry, index: usize) -> f64 {
    let l = g.radius();
    let faces = (0..g.dim()).filter(|&j| g.coord(index, j).abs() == l).count();
    (2 * (2 * l + 1)) as f64 * faces as f64
}

/// `H = -Δ + V` on a box with Dirichlet truncation.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    geometry: Arc<BoxGeometry>,
    potential: PotentialField,
}

impl Hamiltonian {
    pub fn new(potential: PotentialField) -> Self {
        Self {
            geometry: potential.geometry().clone(),
            potential,
        }
    }

    pub fn free(geometry: &Arc<BoxGeometry>) -> Self {
        Self::new(PotentialField::zero(geometry))
    }

    pub fn geometry(&self) -> &Arc<BoxGeometry> {
        &self.geometry
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    pub fn total_sites(&self) -> usize {
        self.geometry.total_sites()
    }

    /// `dst = Hψ`.
    pub fn apply_into<T: Amplitude>(&self, src: &[T], dst: &mut [T]) {
        laplacian_into(&self.geometry, src, dst);
        for ((o, &s), &v) in dst.iter_mut().zip(src).zip(self.potential.values()) {
            *o = s * v - *o;
        }
    }

    /// `[H,[H,-Q²]]ψ = H(Dψ) - D(Hψ)` with `D = [H,-Q²]`, all on the box.
    pub fn double_commutator_into<T: Amplitude>(&self, src: &[T], dst: &mut [T]) {
        let n = src.len();
        let mut a = vec![T::zero(); n];
        let mut b = vec![T::zero(); n];
        dilation_into(&self.geometry, src, &mut a);
        self.apply_into(&a, dst);
        self.apply_into(src, &mut a);
        dilation_into(&self.geometry, &a, &mut b);
        for (o, &x) in dst.iter_mut().zip(&b) {
            *o = *o - x;
        }
    }

    /// `P[H,[H,-Q²]]P`: the lattice double commutator compressed to the box.
    pub fn compressed_double_commutator_into<T: Amplitude>(&self, src: &[T], dst: &mut [T]) {
        self.double_commutator_into(src, dst);
        let g = &self.geometry;
        let l = g.radius();
        for (i, (o, &s)) in dst.iter_mut().zip(src).enumerate() {
            if (0..g.dim()).any(|j| g.coord(i, j).abs() == l) {
                *o = *o + s * boundary_face_correction(g, i);
            }
        }
    }

    fn check(&self, state: &LatticeState) -> Result<()> {
        if !self.geometry.same_as(state.geometry()) {
            return Err(Error::GeometryMismatch {
                expected: self.total_sites(),
                found: state.amplitudes().len(),
            });
        }
        Ok(())
    }

    fn map_state(
        &self,
        state: &LatticeState,
        f: impl FnOnce(&[Complex64], &mut [Complex64]),
    ) -> Result<LatticeState> {
        self.check(state)?;
        let mut out = LatticeState::zeros(&self.geometry);
        f(state.amplitudes(), out.amplitudes_mut());
        Ok(out)
    }

    pub fn apply(&self, state: &LatticeState) -> Result<LatticeState> {
        self.map_state(state, |s, d| self.apply_into(s, d))
    }

    pub fn commutator_q_h(&self, state: &LatticeState) -> Result<LatticeState> {
        self.map_state(state, |s, d| commutator_q_h_into(&self.geometry, s, d))
    }

    pub fn dilation(&self, state: &LatticeState) -> Result<LatticeState> {
        self.map_state(state, |s, d| dilation_into(&self.geometry, s, d))
    }

    pub fn double_commutator(&self, state: &LatticeState) -> Result<LatticeState> {
        self.map_state(state, |s, d| self.double_commutator_into(s, d))
    }

    pub fn compressed_double_commutator(&self, state: &LatticeState) -> Result<LatticeState> {
        self.map_state(state, |s, d| self.compressed_double_commutator_into(s, d))
    }

    pub fn potential_commutator(&self, state: &LatticeState) -> Result<LatticeState> {
        self.map_state(state, |s, d| {
            potential_commutator_into(&self.geometry, self.potential.values(), s, d)
        })
    }

    /// Applies `expr` to a slice.
    pub fn apply_expr_into<T: Amplitude>(&self, expr: OperatorExpr, src: &[T], dst: &mut [T]) {
        let g = &self.geometry;
        match expr {
            OperatorExpr::NegLaplacian => {
                laplacian_into(g, src, dst);
                for o in dst.iter_mut() {
                    *o = T::zero() - *o;
                }
            }
            OperatorExpr::Hamiltonian => self.apply_into(src, dst),
            OperatorExpr::WeightQ | OperatorExpr::QSquared => {
                let w = g.weights(if expr == OperatorExpr::WeightQ { 0.5 } else { 1.0 });
                for ((o, &s), &wi) in dst.iter_mut().zip(src).zip(w.iter()) {
                    *o = s * wi;
                }
            }
            OperatorExpr::CommutatorQH => commutator_q_h_into(g, src, dst),
            OperatorExpr::Dilation => dilation_into(g, src, dst),
            OperatorExpr::DoubleCommutator => self.double_commutator_into(src, dst),
            OperatorExpr::CompressedDoubleCommutator => {
                self.compressed_double_commutator_into(src, dst)
            }
            OperatorExpr::PotentialCommutator => {
                potential_commutator_into(g, self.potential.values(), src, dst)
            }
        }
    }
}

/// `-Δψ` on a state.
pub fn apply_neg_laplacian(state: &LatticeState) -> LatticeState {
    let mut out = LatticeState::zeros(state.geometry());
    laplacian_into(state.geometry(), state.amplitudes(), out.amplitudes_mut());
    for a in out.amplitudes_mut() {
        *a = -*a;
    }
    out
}

/// `Δψ` on a state.
pub fn apply_laplacian(state: &LatticeState) -> LatticeState {
    let mut out = LatticeState::zeros(state.geometry());
    laplacian_into(state.geometry(), state.amplitudes(), out.amplitudes_mut());
    out
}

pub fn apply_weight_q(state: &LatticeState) -> LatticeState {
    scale_by(state, 0.5)
}

pub fn apply_q_squared(state: &LatticeState) -> LatticeState {
    scale_by(state, 1.0)
}

fn scale_by(state: &LatticeState, r: f64) -> LatticeState {
    let w = state.geometry().weights(r);
    let amps = state
        .amplitudes()
        .iter()
        .zip(w.iter())
        .map(|(a, &wi)| a * wi)
        .collect();
    LatticeState::from_amplitudes(state.geometry(), amps).expect("same geometry")
}

/// Operator expressions that can be materialized densely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorExpr {
    NegLaplacian,
    Hamiltonian,
    WeightQ,
    QSquared,
    /// `[Q,H]`
    CommutatorQH,
    /// `[H,-Q²]`
    Dilation,
    /// `[H,[H,-Q²]]` on the box
    DoubleCommutator,
    /// `P[H,[H,-Q²]]P`
    CompressedDoubleCommutator,
    /// `[V,[H,-Q²]]`
    PotentialCommutator,
}

impl OperatorExpr {
    pub fn label(self) -> &'static str {
        match self {
            OperatorExpr::NegLaplacian => "-Delta",
            OperatorExpr::Hamiltonian => "H",
            OperatorExpr::WeightQ => "Q",
            OperatorExpr::QSquared => "Q^2",
            OperatorExpr::CommutatorQH => "[Q,H]",
            OperatorExpr::Dilation => "[H,-Q^2]",
            OperatorExpr::DoubleCommutator => "[H,[H,-Q^2]]",
            OperatorExpr::CompressedDoubleCommutator => "P[H,[H,-Q^2]]P",
            OperatorExpr::PotentialCommutator => "[V,[H,-Q^2]]",
        }
    }
}

/// Dense real matrix of an operator expression on a box.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub provenance: OperatorExpr,
}

impl DenseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |A - Aᵀ|` (`sign = 1`) or `max |A + Aᵀ|` (`sign = -1`).
    pub fn symmetry_defect(&self, sign: f64) -> f64 {
        let m = &self.matrix;
        let n = m.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((m[(i, j)] - sign * m[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Writes `n,m,value` row-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(format!("# operator={}\nn,m,value\n", self.provenance.label()).as_bytes())?;
        let m = &self.matrix;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.write_all(format!("{i},{j},{}\n", fmt_f64(m[(i, j)])).as_bytes())?;
            }
        }
        Ok(())
    }
}

/// Column-by-column materialization on basis vectors `δ_n`.
pub fn materialize_dense(h: &Hamiltonian, expr: OperatorExpr, cap: usize) -> Result<DenseOperator> {
    let n = h.total_sites();
    if n > cap {
        return Err(Error::DenseCapExceeded { sites: n, cap });
    }
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    let mut basis = vec![0.0f64; n];
    let mut col = vec![0.0f64; n];
    for k in 0..n {
        basis[k] = 1.0;
        h.apply_expr_into(expr, &basis, &mut col);
        matrix.column_mut(k).copy_from_slice(&col);
        basis[k] = 0.0;
    }
    Ok(DenseOperator {
        matrix,
        provenance: expr,
    })
}

/// Result of a power-iteration norm estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `A*A` for a real operator given `A` and `A*`.
///
/// Stops when the Rayleigh estimate changes by less than `rel_tol`
/// (relative) or after `max_iter` steps. The estimate never exceeds `‖A‖`.
pub fn power_iteration_norm(
    n: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    apply_adjoint: impl Fn(&[f64], &mut [f64]),
    max_iter: usize,
    rel_tol: f64,
    seed: u64,
) -> NormEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize_real(&mut x);
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut prev = 0.0;
    for it in 1..=max_iter {
        apply(&x, &mut y);
        let est = dot(&y, &y).sqrt();
        apply_adjoint(&y, &mut z);
        let zn = dot(&z, &z).sqrt();
        if zn == 0.0 {
            return NormEstimate {
                norm: 0.0,
                iterations: it,
                converged: true,
            };
        }
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi = zi / zn;
        }
        if it > 1 && (est - prev).abs() <= rel_tol * est {
            return NormEstimate {
                norm: est,
                iterations: it,
                converged: true,
            };
        }
        prev = est;
    }
    NormEstimate {
        norm: prev,
        iterations: max_iter,
        converged: false,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_real(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

/// Estimate of `‖[Q,H]‖`; `[Q,H]` is real antisymmetric so `A* = -A`.
pub fn commutator_q_h_norm(h: &Hamiltonian, max_iter: usize, seed: u64) -> NormEstimate {
    let g = h.geometry().clone();
    power_iteration_norm(
        g.total_sites(),
        |s, d| commutator_q_h_into(&g, s, d),
        |s, d| {
            commutator_q_h_into(&g, s, d);
            d.iter_mut().for_each(|v| *v = -*v);
        },
        max_iter,
        1e-10,
        seed,
    )
}

/// Estimate of `‖[H,Q^m] Q^{-(m-1)}‖`, the constant behind `‖[H,Q^m]ψ‖_0 ≲ ‖ψ‖_{m-1}`.
pub fn commutator_h_qm_relative_norm(h: &Hamiltonian, m: u32, max_iter: usize, seed: u64) -> NormEstimate {
    let g = h.geometry().clone();
    let inv = g.weights(-((m as f64) - 1.0) / 2.0);
    let n = g.total_sites();
    power_iteration_norm(
        n,
        |s, d| {
            let scaled: Vec<f64> = s.iter().zip(inv.iter()).map(|(a, w)| a * w).collect();
            commutator_h_qm_into(&g, m, &scaled, d);
        },
        |s, d| {
            // [H,Q^m] is antisymmetric
            commutator_h_qm_into(&g, m, s, d);
            d.iter_mut().zip(inv.iter()).for_each(|(v, w)| *v = -*v * w);
        },
        max_iter,
        1e-10,
        seed,
    )
}
