//! Time evolution `ψ(t) = e^{-itH}ψ(0)`.
//!
//! The production path is a Chebyshev expansion of the rescaled operator
//! `H̃ = (H - b)/a`:
//!
//! ```text
//! e^{-iτH} = e^{-ibτ} Σ_k c_k T_k(H̃),   c_0 = J_0(aτ),  c_k = 2(-i)^k J_k(aτ)
//! ```
//!
//! The oracle path diagonalizes `H` densely.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, LatticeState};
use crate::operators::Hamiltonian;
use crate::spectral::SpectralDecomposition;

/// Norm drift per step beyond which a run is aborted.
pub const NORM_DRIFT_LIMIT: f64 = 1e-9;

/// Default Chebyshev tolerance on `|c_K|`.
pub const DEFAULT_TOLERANCE: f64 = 1e-14;

/// Default step: `a·τ = 20`.
pub const DEFAULT_A_TAU: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralBounds {
    pub e_min: f64,
    pub e_max: f64,
}

impl SpectralBounds {
    pub fn new(e_min: f64, e_max: f64) -> Result<Self> {
        if !(e_min.is_finite() && e_max.is_finite() && e_min < e_max) {
            return Err(Error::invalid(format!("spectral bounds [{e_min}, {e_max}] are not a proper interval")));
        }
        Ok(Self { e_min, e_max })
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.e_max + self.e_min)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.e_max - self.e_min)
    }
}

/// `±(2d + ‖V‖_∞)` widened by `1e-6·(4d + 2‖V‖_∞)`.
pub fn estimate_spectral_bounds(h: &Hamiltonian) -> SpectralBounds {
    let d = h.geometry().dim() as f64;
    let v = h.potential().sup_norm();
    let edge = 2.0 * d + v;
    let margin = 1e-6 * (4.0 * d + 2.0 * v);
    SpectralBounds { e_min: -edge - margin, e_max: edge + margin }
}

/// `J_0(x), …, J_n(x)` for `x ≥ 0` by downward recurrence, normalized with
/// `J_0 + 2ΣJ_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite(), "bessel argument must be finite and nonnegative");
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = n.max(x.ceil() as usize) + 40 + (12.0 * x.sqrt()).ceil() as usize;
    let start = start + start % 2;
    let mut next = 0.0f64; // J_{k+1}
    let mut cur = 1e-300f64; // J_k
    let mut even_sum = 0.0f64;
    for k in (1..=start).rev() {
        let prev = (2.0 * k as f64 / x) * cur - next;
        next = cur;
        cur = prev;
        // cur is J_{k-1}
        if k - 1 <= n {
            out[k - 1] = cur;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            even_sum += cur;
        }
        if cur.abs() > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            even_sum *= s;
            for v in out.iter_mut().skip(k - 1) {
                *v *= s;
            }
        }
    }
    let norm = cur + 2.0 * even_sum;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Coefficients of a truncated Chebyshev expansion of `e^{∓iτH}`.
#[derive(Debug, Clone, Serialize)]
pub struct ChebyshevPlan {
    pub bounds: SpectralBounds,
    /// Signed step; negative steps evolve backwards.
    pub tau: f64,
    pub tolerance: f64,
    /// Truncation order `K`; the sum runs over `0..=K`.
    pub order: usize,
    #[serde(skip)]
    coefficients: Vec<Complex64>,
    #[serde(skip)]
    phase: Complex64,
}

/// Plan for `e^{-iτH}` with `|c_K| ≤ tolerance` and `K ≥ ceil(aτ)` minimal.
pub fn plan_chebyshev(bounds: SpectralBounds, tau: f64, tolerance: f64) -> Result<ChebyshevPlan> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("time step must be finite and nonnegative, got {tau}")));
    }
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::invalid(format!("tolerance must lie in (0,1), got {tolerance}")));
    }
    let a = bounds.half_width();
    let b = bounds.center();
    let x = a * tau;
    if x == 0.0 {
        return Ok(ChebyshevPlan {
            bounds,
            tau,
            tolerance,
            order: 0,
            coefficients: vec![Complex64::new(1.0, 0.0)],
            phase: Complex64::new(1.0, 0.0),
        });
    }
    let cap = (10.0 * (x + 50.0)).floor() as usize;
    let first = x.ceil() as usize;
    let j = bessel_j_sequence(x, cap);
    let magnitude = |k: usize| if k == 0 { j[0].abs() } else { 2.0 * j[k].abs() };
    // magnitudes near the underflow range carry no relative accuracy
    let order = (first..=cap)
        .take_while(|&k| magnitude(k) >= 1e-300)
        .find(|&k| magnitude(k) <= tolerance)
        .ok_or(Error::ToleranceUnachievable { tolerance, cap })?;
    let mut coefficients = Vec::with_capacity(order + 1);
    let mut minus_i_pow = Complex64::new(1.0, 0.0);
    for (k, &jk) in j.iter().enumerate().take(order + 1) {
        let scale = if k == 0 { 1.0 } else { 2.0 };
        coefficients.push(minus_i_pow * (scale * jk));
        minus_i_pow *= Complex64::new(0.0, -1.0);
    }
    Ok(ChebyshevPlan {
        bounds,
        tau,
        tolerance,
        order,
        coefficients,
        phase: Complex64::from_polar(1.0, -b * tau),
    })
}

impl ChebyshevPlan {
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Plan for `e^{+iτH}`: conjugated coefficients and phase.
    pub fn reversed(&self) -> ChebyshevPlan {
        ChebyshevPlan {
            bounds: self.bounds,
            tau: -self.tau,
            tolerance: self.tolerance,
            order: self.order,
            coefficients: self.coefficients.iter().map(|c| c.conj()).collect(),
            phase: self.phase.conj(),
        }
    }
}

/// One Chebyshev step `ψ ↦ e^{-iτH}ψ`; aborts if the norm drifts by more than `1e-9`.
pub fn propagate(h: &Hamiltonian, plan: &ChebyshevPlan, state: &LatticeState) -> Result<LatticeState> {
    if !h.geometry().same_as(state.geometry()) {
        return Err(Error::GeometryMismatch {
            expected: h.total_sites(),
            found: state.amplitudes().len(),
        });
    }
    let src = state.amplitudes();
    let n = src.len();
    let a = plan.bounds.half_width();
    let b = plan.bounds.center();
    let rescaled = |x: &[Complex64], out: &mut [Complex64]| {
        h.apply_into(x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = (*o - xi * b) / a;
        }
    };

    let c = &plan.coefficients;
    let mut acc: Vec<Complex64> = src.iter().map(|&x| x * c[0]).collect();
    if plan.order > 0 {
        let mut prev = src.to_vec();
        let mut cur = vec![Complex64::new(0.0, 0.0); n];
        rescaled(&prev, &mut cur);
        for (o, &x) in acc.iter_mut().zip(&cur) {
            *o += x * c[1];
        }
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        for ck in &c[2..] {
            rescaled(&cur, &mut next);
            for ((nx, &pv), o) in next.iter_mut().zip(&prev).zip(acc.iter_mut()) {
                *nx = *nx * 2.0 - pv;
                *o += *nx * *ck;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    acc.iter_mut().for_each(|x| *x *= plan.phase);
    let out = LatticeState::from_amplitudes(state.geometry(), acc)?;
    let drift = (out.norm() - state.norm()).abs();
    if !(drift <= NORM_DRIFT_LIMIT) {
        return Err(Error::NormDrift { drift, time: plan.tau });
    }
    Ok(out)
}

/// Chebyshev propagator with a fixed maximal step and a plan cache.
#[derive(Debug)]
pub struct Propagator<'a> {
    h: &'a Hamiltonian,
    bounds: SpectralBounds,
    max_step: f64,
    tolerance: f64,
    plans: HashMap<u64, Arc<ChebyshevPlan>>,
}

impl<'a> Propagator<'a> {
    /// `max_step = None` picks `a·τ = 20`.
    pub fn new(h: &'a Hamiltonian, max_step: Option<f64>, tolerance: f64) -> Result<Self> {
        let bounds = estimate_spectral_bounds(h);
        let max_step = max_step.unwrap_or(DEFAULT_A_TAU / bounds.half_width());
        if !(max_step > 0.0 && max_step.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {max_step}")));
        }
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::invalid(format!("tolerance must lie in (0,1), got {tolerance}")));
        }
        Ok(Self { h, bounds, max_step, tolerance, plans: HashMap::new() })
    }

    pub fn bounds(&self) -> SpectralBounds {
        self.bounds
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Plan at the maximal step (for reporting).
    pub fn reference_plan(&mut self) -> Result<Arc<ChebyshevPlan>> {
        self.plan(self.max_step)
    }

    fn plan(&mut self, tau: f64) -> Result<Arc<ChebyshevPlan>> {
        if let Some(p) = self.plans.get(&tau.to_bits()) {
            return Ok(p.clone());
        }
        let plan = if tau < 0.0 {
            Arc::new(self.plan(-tau)?.reversed())
        } else {
            Arc::new(plan_chebyshev(self.bounds, tau, self.tolerance)?)
        };
        self.plans.insert(tau.to_bits(), plan.clone());
        Ok(plan)
    }

    /// Evolves by `dt` (either sign) in `ceil(|dt|/max_step)` equal steps.
    /// `t0` only labels drift errors.
    pub fn evolve(&mut self, state: &LatticeState, t0: f64, dt: f64) -> Result<LatticeState> {
        if dt == 0.0 {
            return Ok(state.clone());
        }
        let steps = (dt.abs() / self.max_step).ceil().max(1.0) as usize;
        let tau = dt / steps as f64;
        let plan = self.plan(tau)?;
        let mut psi = state.clone();
        for s in 0..steps {
            psi = propagate(self.h, &plan, &psi).map_err(|e| match e {
                Error::NormDrift { drift, .. } => Error::NormDrift { drift, time: t0 + (s + 1) as f64 * tau },
                other => other,
            })?;
        }
        Ok(psi)
    }
}

/// `ψ(t) = U e^{-itΛ} Uᵀ ψ(0)`.
pub fn dense_oracle_propagate(
    decomposition: &SpectralDecomposition,
    state: &LatticeState,
    t: f64,
) -> Result<LatticeState> {
    if !decomposition.geometry().same_as(state.geometry()) {
        return Err(Error::GeometryMismatch {
            expected: decomposition.geometry().total_sites(),
            found: state.amplitudes().len(),
        });
    }
    let mut c = decomposition.coefficients(state);
    for (ck, &lambda) in c.iter_mut().zip(decomposition.eigenvalues()) {
        *ck *= Complex64::from_polar(1.0, -t * lambda);
    }
    Ok(decomposition.synthesize(&c))
}

/// `t_max = safety·(L - support)/(2d)`.
pub fn light_cone_horizon(geometry: &BoxGeometry, initial_support_radius: i64, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::invalid(format!("safety must lie in (0,1), got {safety}")));
    }
    let l = geometry.radius();
    if initial_support_radius < 0 || initial_support_radius >= l {
        return Err(Error::invalid(format!(
            "initial support radius {initial_support_radius} not strictly inside the box (L = {l})"
        )));
    }
    Ok(safety * (l - initial_support_radius) as f64 / (2.0 * geometry.dim() as f64))
}
