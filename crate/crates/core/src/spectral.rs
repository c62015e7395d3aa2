//! Dense eigendecomposition of the box Hamiltonian, spectral projections
//! `χ_I(H)`, Mourre quadratic forms on energy windows and the finite-box
//! surrogate for the absolutely continuous subspace.
//!
//! Mourre forms use the compression `P[H,[H,-Q²]]P` of the lattice double
//! commutator. The box bracket `[H_box,[H_box,-Q²]]` carries an `O(L)`
//! negative diagonal on the surface that has nothing to do with the lattice
//! operator; see [`crate::operators::boundary_face_correction`].

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::lattice::{BoxGeometry, LatticeState};
use crate::operators::{materialize_dense, power_iteration_norm, Hamiltonian, NormEstimate, OperatorExpr};
use crate::potentials::{decay_profile, satisfies_decay_hypothesis};

/// Closed endpoints include eigenvalues within this distance.
pub const ENDPOINT_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl EnergyInterval {
    pub fn open(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("interval requires lo < hi, got ({lo}, {hi})")));
        }
        Ok(Self { lo, hi, lo_closed: false, hi_closed: false })
    }

    /// `[lo, hi]`; a single point is allowed.
    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("interval requires lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, lo_closed: true, hi_closed: true })
    }

    pub fn whole_line() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY, lo_closed: false, hi_closed: false }
    }

    /// `J_θ = (-2d+θ, 2d-θ)` for `0 < θ < 2d`.
    pub fn j_theta(dim: usize, theta: f64) -> Result<Self> {
        let edge = 2.0 * dim as f64;
        if !(theta > 0.0 && theta < edge) {
            return Err(Error::invalid(format!("J_theta requires 0 < theta < {edge}, got {theta}")));
        }
        Self::open(-edge + theta, edge - theta)
    }

    /// Closure `[-2d+θ, 2d-θ]`, defined up to `θ = 2d` where it is the point `{0}`.
    pub fn j_theta_closure(dim: usize, theta: f64) -> Result<Self> {
        let edge = 2.0 * dim as f64;
        if !(theta > 0.0 && theta <= edge) {
            return Err(Error::invalid(format!("closure of J_theta requires 0 < theta <= {edge}")));
        }
        Self::closed(-edge + theta, edge - theta)
    }

    pub fn contains(&self, e: f64) -> bool {
        let above = if self.lo_closed { e >= self.lo - ENDPOINT_TIE_TOLERANCE } else { e > self.lo };
        let below = if self.hi_closed { e <= self.hi + ENDPOINT_TIE_TOLERANCE } else { e < self.hi };
        above && below
    }

    pub fn intersect(&self, other: &EnergyInterval) -> Option<EnergyInterval> {
        let (lo, lo_closed) = match self.lo.total_cmp(&other.lo) {
            std::cmp::Ordering::Greater => (self.lo, self.lo_closed),
            std::cmp::Ordering::Less => (other.lo, other.lo_closed),
            std::cmp::Ordering::Equal => (self.lo, self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.total_cmp(&other.hi) {
            std::cmp::Ordering::Less => (self.hi, self.hi_closed),
            std::cmp::Ordering::Greater => (other.hi, other.hi_closed),
            std::cmp::Ordering::Equal => (self.hi, self.hi_closed && other.hi_closed),
        };
        let nonempty = lo < hi || (lo == hi && lo_closed && hi_closed);
        nonempty.then_some(EnergyInterval { lo, hi, lo_closed, hi_closed })
    }

    pub fn overlaps(&self, other: &EnergyInterval) -> bool {
        self.intersect(other).is_some()
    }
}

/// Per-eigenvector localization measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeDelocalization {
    /// `Σ|v_n|⁴`
    pub ipr: f64,
    /// `Σ_{dist(n,∂) ≤ 2} |v_n|²`
    pub boundary_weight: f64,
}

/// Full eigendecomposition of a box Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    geometry: Arc<BoxGeometry>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    residual: f64,
    orthonormality_defect: f64,
}

/// Dense diagonalization; `total_sites` must not exceed `cap`.
pub fn dense_eigendecomposition(h: &Hamiltonian, cap: usize) -> Result<SpectralDecomposition> {
    let dense = materialize_dense(h, OperatorExpr::Hamiltonian, cap)?;
    let n = dense.dim();
    let eig = SymmetricEigen::try_new(dense.matrix.clone(), 1e-15, 0)
        .ok_or_else(|| Error::Eigensolver("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }

    let hv = &dense.matrix * &eigenvectors;
    let mut residual = 0.0f64;
    for k in 0..n {
        let r = (hv.column(k) - eigenvectors.column(k) * eigenvalues[k]).norm();
        residual = residual.max(r);
    }
    let gram = eigenvectors.tr_mul(&eigenvectors);
    let mut orthonormality_defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            orthonormality_defect = orthonormality_defect.max((gram[(i, j)] - target).abs());
        }
    }
    let scale = eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if residual > 1e-8 * scale || orthonormality_defect > 1e-9 {
        return Err(Error::Eigensolver(format!(
            "inaccurate decomposition: residual {residual:e}, orthonormality {orthonormality_defect:e}"
        )));
    }
    Ok(SpectralDecomposition {
        geometry: h.geometry().clone(),
        eigenvalues,
        eigenvectors,
        residual,
        orthonormality_defect,
    })
}

impl SpectralDecomposition {
    pub fn geometry(&self) -> &Arc<BoxGeometry> {
        &self.geometry
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `max_k ‖Hv_k - λ_k v_k‖`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `‖VᵀV - I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        self.orthonormality_defect
    }

    pub fn indices_in(&self, interval: &EnergyInterval) -> Vec<usize> {
        (0..self.eigenvalues.len())
            .filter(|&k| interval.contains(self.eigenvalues[k]))
            .collect()
    }

    pub fn count_in(&self, interval: &EnergyInterval) -> usize {
        self.indices_in(interval).len()
    }

    /// Columns of the eigenvectors with the given indices.
    pub fn basis(&self, indices: &[usize]) -> DMatrix<f64> {
        let n = self.eigenvectors.nrows();
        let mut p = DMatrix::<f64>::zeros(n, indices.len());
        for (c, &k) in indices.iter().enumerate() {
            p.set_column(c, &self.eigenvectors.column(k));
        }
        p
    }

    /// Coefficients `⟨v_k, ψ⟩` for all `k`.
    pub fn coefficients(&self, state: &LatticeState) -> Vec<Complex64> {
        let (re, im) = split(state);
        let cr = self.eigenvectors.tr_mul(&re);
        let ci = self.eigenvectors.tr_mul(&im);
        cr.iter().zip(ci.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    /// `Σ_k c_k v_k` as a state.
    pub fn synthesize(&self, coefficients: &[Complex64]) -> LatticeState {
        let re = DVector::from_iterator(coefficients.len(), coefficients.iter().map(|c| c.re));
        let im = DVector::from_iterator(coefficients.len(), coefficients.iter().map(|c| c.im));
        let xr = &self.eigenvectors * re;
        let xi = &self.eigenvectors * im;
        let amps = xr.iter().zip(xi.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
        LatticeState::from_amplitudes(&self.geometry, amps).expect("decomposition geometry")
    }

    fn project_by(&self, state: &LatticeState, keep: impl Fn(usize) -> bool) -> LatticeState {
        let mut c = self.coefficients(state);
        for (k, ck) in c.iter_mut().enumerate() {
            if !keep(k) {
                *ck = Complex64::new(0.0, 0.0);
            }
        }
        self.synthesize(&c)
    }

    pub fn delocalization(&self, k: usize) -> ModeDelocalization {
        let v = self.eigenvectors.column(k);
        let mut ipr = 0.0;
        let mut boundary_weight = 0.0;
        for (i, &x) in v.iter().enumerate() {
            let p = x * x;
            ipr += p * p;
            if self.geometry.boundary_distance(i) <= 2 {
                boundary_weight += p;
            }
        }
        ModeDelocalization { ipr, boundary_weight }
    }

    /// Writes `k,lambda,ipr,boundary_weight`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"k,lambda,ipr,boundary_weight\n")?;
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let m = self.delocalization(k);
            out.write_all(
                format!("{k},{},{},{}\n", fmt_f64(lambda), fmt_f64(m.ipr), fmt_f64(m.boundary_weight))
                    .as_bytes(),
            )?;
        }
        Ok(())
    }
}

fn split(state: &LatticeState) -> (DVector<f64>, DVector<f64>) {
    let a = state.amplitudes();
    (
        DVector::from_iterator(a.len(), a.iter().map(|c| c.re)),
        DVector::from_iterator(a.len(), a.iter().map(|c| c.im)),
    )
}

/// `χ_I(H)ψ = Σ_{λ_k ∈ I} v_k ⟨v_k, ψ⟩`.
pub fn spectral_projection_apply(
    decomposition: &SpectralDecomposition,
    interval: &EnergyInterval,
    state: &LatticeState,
) -> LatticeState {
    let ev = decomposition.eigenvalues();
    decomposition.project_by(state, |k| interval.contains(ev[k]))
}

/// `χ_{ℝ∖I}(H)ψ`.
pub fn complement_projection_apply(
    decomposition: &SpectralDecomposition,
    interval: &EnergyInterval,
    state: &LatticeState,
) -> LatticeState {
    let ev = decomposition.eigenvalues();
    decomposition.project_by(state, |k| !interval.contains(ev[k]))
}

/// `Pᵀ A P` for a matrix-free operator `A` and an orthonormal basis `P`.
pub fn project_operator(h: &Hamiltonian, expr: OperatorExpr, basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let m = basis.ncols();
    let mut applied = DMatrix::<f64>::zeros(n, m);
    let mut out = vec![0.0; n];
    for c in 0..m {
        let col: Vec<f64> = basis.column(c).iter().copied().collect();
        h.apply_expr_into(expr, &col, &mut out);
        applied.set_column(c, &DVector::from_column_slice(&out));
    }
    basis.tr_mul(&applied)
}

fn symmetrize(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let t = m.transpose();
    let defect = (m - &t).amax();
    ((m + t) * 0.5, defect)
}

/// Minimal Rayleigh quotient of a double-commutator form on a spectral window.
#[derive(Debug, Clone)]
pub struct MourreMinimum {
    pub interval: EnergyInterval,
    pub modes: usize,
    pub min_rayleigh: f64,
    /// Normalized real minimizer inside `Ran χ_I(H)`.
    pub witness: LatticeState,
    /// `max |M - Mᵀ|` of the projected form before symmetrization.
    pub symmetry_defect: f64,
}

/// `min spec(Pᵀ P[H,[H,-Q²]]P P)` over `P = Ran χ_I(H)`.
pub fn mourre_form_min(
    decomposition: &SpectralDecomposition,
    h: &Hamiltonian,
    interval: &EnergyInterval,
) -> Result<MourreMinimum> {
    mourre_form_min_with(decomposition, h, interval, OperatorExpr::CompressedDoubleCommutator)
}

/// As [`mourre_form_min`] with an explicit form (`DoubleCommutator` gives the box bracket).
pub fn mourre_form_min_with(
    decomposition: &SpectralDecomposition,
    h: &Hamiltonian,
    interval: &EnergyInterval,
    expr: OperatorExpr,
) -> Result<MourreMinimum> {
    let idx = decomposition.indices_in(interval);
    if idx.is_empty() {
        return Err(Error::EmptyInterval { lo: interval.lo, hi: interval.hi });
    }
    let p = decomposition.basis(&idx);
    let (m, symmetry_defect) = symmetrize(&project_operator(h, expr, &p));
    let eig = SymmetricEigen::new(m);
    let (kmin, &min_rayleigh) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty window");
    let w = &p * eig.eigenvectors.column(kmin);
    let amps = w.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut witness = LatticeState::from_amplitudes(decomposition.geometry(), amps)?;
    witness.normalize()?;
    Ok(MourreMinimum {
        interval: *interval,
        modes: idx.len(),
        min_rayleigh,
        witness,
        symmetry_defect,
    })
}

fn min_eigenvalue(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn spectral_norm_symmetric(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Split of the Mourre form into a free part and the correction `K = [V,[H,-Q²]]`.
#[derive(Debug, Clone, Serialize)]
pub struct CompactSplitReport {
    pub interval: EnergyInterval,
    pub theta: Option<f64>,
    pub modes: usize,
    /// Mourre minimum of `-Δ` on its own window `χ_I(-Δ)`.
    pub free_window_min: f64,
    /// Minimum of the free form on `Ran χ_I(H)`.
    pub free_part_min: f64,
    /// `‖χ_I(H) K χ_I(H)‖`
    pub compact_norm: f64,
    /// `free_part_min - compact_norm`; a lower bound for `full_min`.
    pub certified_bound: f64,
    /// Minimum of the full form on `Ran χ_I(H)`.
    pub full_min: f64,
    /// Decay-hypothesis label of the potential at box scale.
    pub decay_hypothesis: bool,
}

pub fn mourre_compact_split(
    decomposition_free: &SpectralDecomposition,
    decomposition_full: &SpectralDecomposition,
    h: &Hamiltonian,
    interval: &EnergyInterval,
    theta: Option<f64>,
) -> Result<CompactSplitReport> {
    let free_h = Hamiltonian::free(h.geometry());
    let free_window_min = mourre_form_min(decomposition_free, &free_h, interval)?.min_rayleigh;
    let idx = decomposition_full.indices_in(interval);
    if idx.is_empty() {
        return Err(Error::EmptyInterval { lo: interval.lo, hi: interval.hi });
    }
    let p = decomposition_full.basis(&idx);
    let split = window_split(&free_h, h, &p);
    Ok(CompactSplitReport {
        interval: *interval,
        theta,
        modes: idx.len(),
        free_window_min,
        free_part_min: split.free_min,
        compact_norm: split.compact_norm,
        certified_bound: split.free_min - split.compact_norm,
        full_min: split.full_min,
        decay_hypothesis: satisfies_decay_hypothesis(&decay_profile(h.potential())),
    })
}

struct WindowSplit {
    free_min: f64,
    compact_norm: f64,
    full_min: f64,
}

fn window_split(free_h: &Hamiltonian, h: &Hamiltonian, p: &DMatrix<f64>) -> WindowSplit {
    let free = symmetrize(&project_operator(free_h, OperatorExpr::CompressedDoubleCommutator, p)).0;
    let k = symmetrize(&project_operator(h, OperatorExpr::PotentialCommutator, p)).0;
    let full = symmetrize(&project_operator(h, OperatorExpr::CompressedDoubleCommutator, p)).0;
    WindowSplit {
        free_min: min_eigenvalue(free),
        compact_norm: spectral_norm_symmetric(k),
        full_min: min_eigenvalue(full),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShrinkRow {
    pub delta: f64,
    pub window: Option<EnergyInterval>,
    pub modes: usize,
    /// `‖χ_{I_1(δ)} K χ_{I_1(δ)}‖`, 0 for an empty window.
    pub compact_norm: f64,
    pub free_min: Option<f64>,
    pub certified_bound: Option<f64>,
    pub below_half_theta: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShrinkScan {
    pub e0: f64,
    pub theta: f64,
    pub rows: Vec<ShrinkRow>,
    /// Whether `compact_norm` is nondecreasing in `δ` over the grid (reported only).
    pub monotone: bool,
}

impl ShrinkScan {
    /// Smallest `δ` whose compact norm is at most `θ/2`.
    pub fn smallest_admissible(&self) -> Option<&ShrinkRow> {
        self.rows
            .iter()
            .filter(|r| r.modes > 0 && r.below_half_theta)
            .min_by(|a, b| a.delta.total_cmp(&b.delta))
    }
}

/// Scan `I_1(δ) = (E_0-δ, E_0+δ) ∩ I` over a grid of `δ`.
pub fn shrink_interval_scan(
    decomposition: &SpectralDecomposition,
    h: &Hamiltonian,
    e0: f64,
    deltas: &[f64],
    interval: &EnergyInterval,
    theta: f64,
) -> Result<ShrinkScan> {
    if !interval.contains(e0) {
        return Err(Error::invalid(format!("E_0 = {e0} outside the window")));
    }
    let free_h = Hamiltonian::free(h.geometry());
    let mut sorted: Vec<f64> = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(sorted.len());
    for &delta in &sorted {
        if !(delta > 0.0) {
            return Err(Error::invalid("delta must be positive"));
        }
        let window = EnergyInterval::open(e0 - delta, e0 + delta)?.intersect(interval);
        let idx = window.map(|w| decomposition.indices_in(&w)).unwrap_or_default();
        let row = if idx.is_empty() {
            ShrinkRow {
                delta,
                window,
                modes: 0,
                compact_norm: 0.0,
                free_min: None,
                certified_bound: None,
                below_half_theta: true,
            }
        } else {
            let p = decomposition.basis(&idx);
            let s = window_split(&free_h, h, &p);
            ShrinkRow {
                delta,
                window,
                modes: idx.len(),
                compact_norm: s.compact_norm,
                free_min: Some(s.free_min),
                certified_bound: Some(s.free_min - s.compact_norm),
                below_half_theta: s.compact_norm <= theta / 2.0,
            }
        };
        rows.push(row);
    }
    let monotone = rows.windows(2).all(|w| w[1].compact_norm >= w[0].compact_norm);
    Ok(ShrinkScan { e0, theta, rows, monotone })
}

/// Projector onto delocalized, boundary-light eigenmodes inside a window.
#[derive(Debug, Clone)]
pub struct AcSurrogate {
    pub interval: EnergyInterval,
    pub ipr_threshold: f64,
    pub boundary_threshold: f64,
    /// Eigenvalues inside the window.
    pub candidates: usize,
    /// Indices of the selected eigenvectors.
    pub selected: Vec<usize>,
}

impl AcSurrogate {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn pass_fraction(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.selected.len() as f64 / self.candidates as f64
        }
    }

    pub fn apply(&self, decomposition: &SpectralDecomposition, state: &LatticeState) -> LatticeState {
        let keep: std::collections::HashSet<usize> = self.selected.iter().copied().collect();
        decomposition.project_by(state, |k| keep.contains(&k))
    }
}

pub fn ac_surrogate_projection(
    decomposition: &SpectralDecomposition,
    interval: &EnergyInterval,
    ipr_threshold: f64,
    boundary_threshold: f64,
) -> Result<AcSurrogate> {
    for (name, t) in [("ipr_threshold", ipr_threshold), ("boundary_threshold", boundary_threshold)] {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::invalid(format!("{name} must lie in (0,1)")));
        }
    }
    let idx = decomposition.indices_in(interval);
    let selected = idx
        .iter()
        .copied()
        .filter(|&k| {
            let m = decomposition.delocalization(k);
            m.ipr <= ipr_threshold && m.boundary_weight <= boundary_threshold
        })
        .collect();
    Ok(AcSurrogate {
        interval: *interval,
        ipr_threshold,
        boundary_threshold,
        candidates: idx.len(),
        selected,
    })
}

/// Power-iteration estimate of `‖[Q, f(H)]‖` where `f(λ_k) = weights[k]`.
pub fn commutator_q_spectral_function_norm(
    decomposition: &SpectralDecomposition,
    weights: &[f64],
    max_iter: usize,
    seed: u64,
) -> NormEstimate {
    let v = decomposition.eigenvectors();
    let q = decomposition.geometry().weights(0.5);
    let n = v.nrows();
    let apply_f = |x: &DVector<f64>| -> DVector<f64> {
        let mut c = v.tr_mul(x);
        c.iter_mut().zip(weights).for_each(|(ci, w)| *ci *= w);
        v * c
    };
    let apply = |src: &[f64], dst: &mut [f64]| {
        let x = DVector::from_column_slice(src);
        let qx = DVector::from_iterator(n, x.iter().zip(q.iter()).map(|(a, b)| a * b));
        let fqx = apply_f(&qx);
        let fx = apply_f(&x);
        for i in 0..n {
            dst[i] = q[i] * fx[i] - fqx[i];
        }
    };
    // [Q, f(H)] is antisymmetric for real f
    power_iteration_norm(
        n,
        apply,
        |src, dst| {
            apply(src, dst);
            dst.iter_mut().for_each(|x| *x = -*x);
        },
        max_iter,
        1e-10,
        seed,
    )
}

/// JSON record for a Mourre evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct MourreRecord {
    pub interval: EnergyInterval,
    pub theta: Option<f64>,
    pub min_rayleigh: f64,
    pub compact_norm: f64,
    pub certified_bound: f64,
}
