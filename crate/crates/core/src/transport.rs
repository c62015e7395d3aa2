//! Moment time series `t ↦ ‖e^{-itH}u‖_r`, exponent fits and the bound checks
//! built on them.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::lattice::LatticeState;
use crate::operators::{commutator_h_qm_relative_norm, commutator_q_h_norm, Hamiltonian, OperatorExpr};
use crate::propagation::{dense_oracle_propagate, Propagator, SpectralBounds};
use crate::spectral::{mourre_form_min, project_operator, spectral_projection_apply, EnergyInterval, SpectralDecomposition};

/// Largest admissible moment order.
pub const MAX_ORDER: f64 = 3.0;

/// Default ballistic tolerance on the fitted slope.
pub const DEFAULT_SLOPE_TOLERANCE: f64 = 0.05;

/// Minimum number of samples in a fit window.
pub const MIN_FIT_SAMPLES: usize = 8;

/// Relative slack for the per-sample moment inequalities.
pub const MOMENT_INEQUALITY_SLACK: f64 = 1e-12;

/// Propagation metadata echoed into output headers.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SeriesHeader {
    pub config_hash: String,
    pub bounds: SpectralBounds,
    pub tau: f64,
    pub order: usize,
    pub tolerance: f64,
    pub horizon: f64,
}

impl SeriesHeader {
    pub fn comment_line(&self) -> String {
        format!(
            "# config_hash={} bounds=[{},{}] tau={} K={} tolerance={} horizon={}",
            self.config_hash,
            fmt_f64(self.bounds.e_min),
            fmt_f64(self.bounds.e_max),
            fmt_f64(self.tau),
            self.order,
            fmt_f64(self.tolerance),
            fmt_f64(self.horizon)
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSample {
    pub t: f64,
    /// `‖ψ(t)‖_r` in the order of [`MomentSeries::orders`].
    pub norms: Vec<f64>,
    /// In-ball probabilities in the order of [`MomentSeries::ball_radii`].
    pub balls: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSeries {
    pub header: SeriesHeader,
    pub orders: Vec<f64>,
    pub ball_radii: Vec<u64>,
    pub samples: Vec<MomentSample>,
}

/// What to record and when.
#[derive(Debug, Clone)]
pub struct RecordSpec {
    pub orders: Vec<f64>,
    pub times: Vec<f64>,
    pub ball_radii: Vec<u64>,
    pub horizon: f64,
}

/// `count` log-spaced times in `[t_lo, t_hi]`.
pub fn log_time_grid(t_lo: f64, t_hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_lo > 0.0 && t_hi > t_lo && count >= 2) {
        return Err(Error::invalid("log grid requires 0 < t_lo < t_hi and count >= 2"));
    }
    let (a, b) = (t_lo.ln(), t_hi.ln());
    Ok((0..count)
        .map(|k| {
            if k + 1 == count {
                t_hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// `count` equally spaced times in `[t_lo, t_hi]`.
pub fn linear_time_grid(t_lo: f64, t_hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_lo >= 0.0 && t_hi > t_lo && count >= 2) {
        return Err(Error::invalid("linear grid requires 0 <= t_lo < t_hi and count >= 2"));
    }
    Ok((0..count)
        .map(|k| t_lo + (t_hi - t_lo) * k as f64 / (count - 1) as f64)
        .collect())
}

fn validate_record_spec(spec: &RecordSpec) -> Result<()> {
    for &r in &spec.orders {
        if !(r.is_finite() && (0.0..=MAX_ORDER).contains(&r)) {
            return Err(Error::invalid(format!("moment order {r} outside [0, {MAX_ORDER}]")));
        }
    }
    if spec.times.is_empty() {
        return Err(Error::invalid("empty sample-time grid"));
    }
    if !(spec.times[0] >= 0.0) {
        return Err(Error::invalid("sample times must be nonnegative"));
    }
    if spec.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("sample times must be strictly increasing"));
    }
    let last = *spec.times.last().expect("nonempty");
    if last > spec.horizon {
        return Err(Error::HorizonViolation { t: last, t_max: spec.horizon });
    }
    Ok(())
}

/// One propagation sweep with moments at each sample time.
pub fn record_moments(prop: &mut Propagator<'_>, initial: &LatticeState, spec: &RecordSpec) -> Result<MomentSeries> {
    record_moments_with(prop, initial, spec, |_, _| {})
}

/// As [`record_moments`], calling `observer(t, ψ(t))` at every sample.
pub fn record_moments_with(
    prop: &mut Propagator<'_>,
    initial: &LatticeState,
    spec: &RecordSpec,
    mut observer: impl FnMut(f64, &LatticeState),
) -> Result<MomentSeries> {
    validate_record_spec(spec)?;
    let plan = prop.reference_plan()?;
    let header = SeriesHeader {
        config_hash: String::new(),
        bounds: prop.bounds(),
        tau: plan.tau,
        order: plan.order,
        tolerance: prop.tolerance(),
        horizon: spec.horizon,
    };
    let mut samples = Vec::with_capacity(spec.times.len());
    let mut psi = initial.clone();
    let mut t_now = 0.0;
    for &t in &spec.times {
        psi = prop.evolve(&psi, t_now, t - t_now)?;
        t_now = t;
        let norms = spec
            .orders
            .iter()
            .map(|&r| psi.weighted_norm_sq(r).map(f64::sqrt))
            .collect::<Result<Vec<_>>>()?;
        let balls = spec.ball_radii.iter().map(|&n| psi.ball_probability(n)).collect();
        observer(t, &psi);
        samples.push(MomentSample { t, norms, balls });
    }
    Ok(MomentSeries {
        header,
        orders: spec.orders.clone(),
        ball_radii: spec.ball_radii.clone(),
        samples,
    })
}

fn order_label(r: f64) -> String {
    if r.fract() == 0.0 && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        fmt_f64(r)
    }
}

impl MomentSeries {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn order_index(&self, r: f64) -> Result<usize> {
        self.orders.iter().position(|&x| x == r).ok_or(Error::MissingOrder(r))
    }

    /// `‖ψ(t)‖_r` over all samples.
    pub fn norms(&self, r: f64) -> Result<Vec<f64>> {
        let k = self.order_index(r)?;
        Ok(self.samples.iter().map(|s| s.norms[k]).collect())
    }

    pub fn balls(&self, radius: u64) -> Option<Vec<f64>> {
        let k = self.ball_radii.iter().position(|&x| x == radius)?;
        Some(self.samples.iter().map(|s| s.balls[k]).collect())
    }

    /// Header comment, then `t,r=…,ball_N…`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header.comment_line())?;
        let mut cols = vec!["t".to_string()];
        cols.extend(self.orders.iter().map(|&r| format!("r={}", order_label(r))));
        cols.extend(self.ball_radii.iter().map(|n| format!("ball_{n}")));
        writeln!(out, "{}", cols.join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt_f64(s.t)];
            row.extend(s.norms.iter().map(|&v| fmt_f64(v)));
            row.extend(s.balls.iter().map(|&v| fmt_f64(v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub r: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub samples: usize,
    /// Slope of `log‖ψ‖_r` against `r·log t`.
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// Max minus min slope over consecutive sub-windows.
    pub slope_spread: f64,
    /// `min` and `max` of `‖ψ(t)‖_r / t^r` over the window.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub tolerance: f64,
    pub ballistic: bool,
}

impl ExponentFit {
    pub fn ratio_spread(&self) -> f64 {
        self.ratio_max / self.ratio_min
    }
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Least-squares exponent on `[t_lo, t_hi]`.
pub fn fit_transport_exponent(series: &MomentSeries, r: f64, window: (f64, f64), tolerance: f64) -> Result<ExponentFit> {
    let (t_lo, t_hi) = window;
    if !(r > 0.0) {
        return Err(Error::DegenerateWindow(format!("order r = {r} has no exponent")));
    }
    if !(t_lo >= 1.0 && t_hi > t_lo) {
        return Err(Error::DegenerateWindow(format!("window [{t_lo}, {t_hi}] requires 1 <= t_lo < t_hi")));
    }
    let norms = series.norms(r)?;
    let times = series.times();
    let (first, last) = (times[0], *times.last().expect("nonempty series"));
    if t_lo < first || t_hi > last {
        return Err(Error::DegenerateWindow(format!(
            "window [{t_lo}, {t_hi}] outside sampled range [{first}, {last}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = 0.0f64;
    for (&t, &v) in times.iter().zip(&norms) {
        if t < t_lo || t > t_hi {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::ZeroNorm(t));
        }
        xs.push(r * t.ln());
        ys.push(v.ln());
        let ratio = v / t.powf(r);
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
    }
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateWindow(format!(
            "{} samples in window, at least {MIN_FIT_SAMPLES} required",
            xs.len()
        )));
    }
    let (slope, intercept, residual_rms) = least_squares(&xs, &ys);
    let parts = if xs.len() >= 9 { 3 } else { 2 };
    let chunk = xs.len() / parts;
    let sub: Vec<f64> = (0..parts)
        .map(|p| {
            let lo = p * chunk;
            let hi = if p + 1 == parts { xs.len() } else { lo + chunk };
            least_squares(&xs[lo..hi], &ys[lo..hi]).0
        })
        .collect();
    let slope_spread = sub.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - sub.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ExponentFit {
        r,
        t_lo,
        t_hi,
        samples: xs.len(),
        slope,
        intercept,
        residual_rms,
        slope_spread,
        ratio_min,
        ratio_max,
        tolerance,
        ballistic: (slope - 1.0).abs() <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperBoundReport {
    /// `‖[Q,H]‖` estimate.
    pub c1: f64,
    /// `‖[H,Q²]Q^{-1}‖` estimate.
    pub kappa: f64,
    pub times: Vec<f64>,
    pub norm1: Vec<f64>,
    /// `‖u‖_1 + c1‖u‖_0 t`
    pub envelope1: Vec<f64>,
    pub norm2: Vec<f64>,
    /// `‖u‖_2 + ‖u‖_1 t + (c1/2)‖u‖_0 t²`
    pub envelope2: Vec<f64>,
    pub order1_violations: usize,
    /// `max_t ‖ψ‖_1 / envelope1`.
    pub order1_max_ratio: f64,
    /// Smallest `ĉ_2` with `‖ψ‖_2 ≤ ‖u‖_2 + ‖u‖_1 t + ĉ_2‖u‖_0 t²` at all samples.
    pub c2_min: f64,
    /// `c1/2`
    pub c2_reference: f64,
    /// `κ·c1/2`, the constant of the envelope `‖u‖_2 + κ‖u‖_1 t + (κ c1/2)‖u‖_0 t²`.
    pub c2_corrected: f64,
    pub corrected_violations: usize,
    pub violation: bool,
}

/// Estimates `ĉ_1` and `κ` for `h` and checks both envelopes.
pub fn check_upper_bounds(series: &MomentSeries, h: &Hamiltonian, u: &LatticeState) -> Result<UpperBoundReport> {
    let c1 = commutator_q_h_norm(h, 500, 1).norm;
    let kappa = commutator_h_qm_relative_norm(h, 2, 500, 2).norm;
    check_upper_bounds_with(series, c1, kappa, u)
}

pub fn check_upper_bounds_with(series: &MomentSeries, c1: f64, kappa: f64, u: &LatticeState) -> Result<UpperBoundReport> {
    let norm1 = series.norms(1.0)?;
    let norm2 = series.norms(2.0)?;
    let times = series.times();
    let u0 = u.norm();
    let u1 = u.weighted_norm_sq(1.0)?.sqrt();
    let u2 = u.weighted_norm_sq(2.0)?.sqrt();
    let envelope1: Vec<f64> = times.iter().map(|&t| u1 + c1 * u0 * t).collect();
    let envelope2: Vec<f64> = times.iter().map(|&t| u2 + u1 * t + 0.5 * c1 * u0 * t * t).collect();
    let order1_violations = norm1.iter().zip(&envelope1).filter(|(n, e)| n > e).count();
    let order1_max_ratio = norm1.iter().zip(&envelope1).map(|(n, e)| n / e).fold(0.0, f64::max);
    let c2_min = times
        .iter()
        .zip(&norm2)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &n)| (n - u2 - u1 * t) / (u0 * t * t))
        .fold(0.0, f64::max);
    let c2_corrected = 0.5 * kappa * c1;
    let corrected_violations = times
        .iter()
        .zip(&norm2)
        .filter(|(&t, &n)| n > u2 + kappa * u1 * t + c2_corrected * u0 * t * t)
        .count();
    Ok(UpperBoundReport {
        c1,
        kappa,
        times,
        norm1,
        envelope1,
        norm2,
        envelope2,
        order1_violations,
        order1_max_ratio,
        c2_min,
        c2_reference: 0.5 * c1,
        c2_corrected,
        corrected_violations,
        violation: order1_violations > 0,
    })
}

/// `‖ψ‖_{r'}²·‖ψ‖_0^{2(r'/r-1)} ≥ ‖ψ‖_r^{2r'/r}` for `0 < r < r'`, as
/// `(holds, lhs/rhs - 1)`.
pub fn jensen_inequality(n0: f64, nr: f64, nr2: f64, r: f64, r2: f64) -> (bool, f64) {
    let p = r2 / r;
    let lhs = nr2.ln() * 2.0 + n0.ln() * 2.0 * (p - 1.0);
    let rhs = nr.ln() * 2.0 * p;
    let margin = (lhs - rhs).exp_m1();
    (margin >= -MOMENT_INEQUALITY_SLACK, margin)
}

/// `‖ψ‖_r² ≤ ‖ψ‖_m^{2(m+1-r)} ‖ψ‖_{m+1}^{2(r-m)}` for `m < r < m+1`, as
/// `(holds, rhs/lhs - 1)`.
pub fn interpolation_inequality(nm: f64, nr: f64, nm1: f64, m: f64, r: f64) -> (bool, f64) {
    let lhs = 2.0 * nr.ln();
    let rhs = 2.0 * (m + 1.0 - r) * nm.ln() + 2.0 * (r - m) * nm1.ln();
    let margin = (rhs - lhs).exp_m1();
    (margin >= -MOMENT_INEQUALITY_SLACK, margin)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct InequalityTally {
    pub checks: usize,
    pub violations: usize,
    pub min_margin: f64,
}

impl InequalityTally {
    fn push(&mut self, (ok, margin): (bool, f64)) {
        if self.checks == 0 || margin < self.min_margin {
            self.min_margin = margin;
        }
        self.checks += 1;
        if !ok {
            self.violations += 1;
        }
    }
}

/// Jensen for all order pairs and interpolation for all `(m, r, m+1)` triples
/// present in the series, at every sample.
pub fn moment_inequality_tallies(series: &MomentSeries) -> (InequalityTally, InequalityTally) {
    let mut jensen = InequalityTally::default();
    let mut interp = InequalityTally::default();
    let idx0 = series.order_index(0.0).ok();
    for s in &series.samples {
        for (i, &r) in series.orders.iter().enumerate() {
            for (j, &r2) in series.orders.iter().enumerate() {
                if let Some(k0) = idx0 {
                    if r > 0.0 && r2 > r {
                        jensen.push(jensen_inequality(s.norms[k0], s.norms[i], s.norms[j], r, r2));
                    }
                }
                let m = r.floor();
                if r2 > r && r2 < m + 1.0 && r == m {
                    if let Ok(k1) = series.order_index(m + 1.0) {
                        interp.push(interpolation_inequality(s.norms[i], s.norms[j], s.norms[k1], m, r2));
                    }
                }
            }
        }
    }
    (jensen, interp)
}

#[derive(Debug, Clone, Serialize)]
pub struct HeisenbergReport {
    pub times: Vec<f64>,
    /// `‖Q e^{-itH} χ_I u‖²` by oracle propagation.
    pub lhs: Vec<f64>,
    /// Real part of the expansion.
    pub rhs: Vec<f64>,
    /// `∫_0^t (t-σ)⟨w(σ), [H,[H,-Q²]] w(σ)⟩ dσ`
    pub integral_terms: Vec<f64>,
    pub max_defect: f64,
    pub max_imaginary: f64,
    /// `‖χ_I u‖²`
    pub window_norm_sq: f64,
    /// Compressed Mourre minimum on the window.
    pub theta_eff: f64,
    /// `min_t (integral - (θ_eff/2)‖χ_I u‖²t²)` over `t > 0`.
    pub lower_bound_margin: f64,
    pub final_step: f64,
    pub halvings: usize,
}

/// Maximal allowed step halvings after the initial step `1/64`.
pub const MAX_QUADRATURE_HALVINGS: usize = 8;

fn simpson(f: &dyn Fn(f64) -> f64, t: f64, h0: f64) -> (f64, f64) {
    let mut n = (t / h0).ceil() as usize;
    n += n % 2;
    let n = n.max(2);
    let h = t / n as f64;
    let mut s = f(0.0) + f(t);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    (s * h / 3.0, h)
}

/// Compares `‖Q e^{-itH}w‖²` with `⟨w,Q²w⟩ - it⟨w,[H,-Q²]w⟩ + ∫_0^t (t-σ)⟨w(σ),[H,[H,-Q²]]w(σ)⟩dσ`
/// for `w = χ_I(H)u`, using the box operators on both sides.
pub fn heisenberg_expansion_check(
    decomposition: &SpectralDecomposition,
    h: &Hamiltonian,
    interval: &EnergyInterval,
    u: &LatticeState,
    times: &[f64],
) -> Result<HeisenbergReport> {
    let idx = decomposition.indices_in(interval);
    if idx.is_empty() {
        return Err(Error::EmptyInterval { lo: interval.lo, hi: interval.hi });
    }
    let w = spectral_projection_apply(decomposition, interval, u);
    let window_norm_sq = w.norm().powi(2);
    let p = decomposition.basis(&idx);
    let c_form = project_operator(h, OperatorExpr::DoubleCommutator, &p);
    let all = decomposition.coefficients(&w);
    let coeffs: Vec<Complex64> = idx.iter().map(|&k| all[k]).collect();
    let lambdas: Vec<f64> = idx.iter().map(|&k| decomposition.eigenvalues()[k]).collect();
    let c_complex: DMatrix<Complex64> = c_form.map(|x| Complex64::new(x, 0.0));
    let integrand = |sigma: f64| -> f64 {
        let a = nalgebra::DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(&lambdas).map(|(c, &l)| c * Complex64::from_polar(1.0, -sigma * l)),
        );
        (a.adjoint() * (&c_complex * &a))[(0, 0)].re
    };

    let mut q2w = w.clone();
    let q2 = w.geometry().weights(1.0);
    q2w.amplitudes_mut().iter_mut().zip(q2.iter()).for_each(|(x, &q)| *x *= q);
    let zeroth = w.inner(&q2w);
    let dw = h.dilation(&w)?;
    let first = w.inner(&dw);

    let theta_eff = mourre_form_min(decomposition, h, interval)?.min_rayleigh;

    let mut report = HeisenbergReport {
        times: times.to_vec(),
        lhs: Vec::with_capacity(times.len()),
        rhs: Vec::with_capacity(times.len()),
        integral_terms: Vec::with_capacity(times.len()),
        max_defect: 0.0,
        max_imaginary: 0.0,
        window_norm_sq,
        theta_eff,
        lower_bound_margin: f64::INFINITY,
        final_step: 1.0 / 64.0,
        halvings: 0,
    };
    for &t in times {
        let psi = dense_oracle_propagate(decomposition, &w, t)?;
        let lhs = psi.weighted_norm_sq(1.0)?;
        let integral = if t == 0.0 {
            0.0
        } else {
            let kernel = |s: f64| (t - s) * integrand(s);
            let (mut prev, _) = simpson(&kernel, t, 1.0 / 64.0);
            let mut h0 = 1.0 / 64.0;
            let mut halvings = 0;
            loop {
                h0 /= 2.0;
                halvings += 1;
                let (next, step) = simpson(&kernel, t, h0);
                let change = (next - prev).abs();
                if change <= 1e-10 * next.abs().max(1.0) {
                    report.final_step = report.final_step.min(step);
                    report.halvings = report.halvings.max(halvings);
                    break next + (next - prev) / 15.0;
                }
                if halvings >= MAX_QUADRATURE_HALVINGS {
                    return Err(Error::QuadratureNotConverged { halvings, change });
                }
                prev = next;
            }
        };
        let rhs = zeroth - Complex64::new(0.0, t) * first + integral;
        report.max_imaginary = report.max_imaginary.max(rhs.im.abs());
        report.max_defect = report.max_defect.max((lhs - rhs.re).abs());
        if t > 0.0 {
            let margin = integral - 0.5 * theta_eff * window_norm_sq * t * t;
            report.lower_bound_margin = report.lower_bound_margin.min(margin);
        }
        report.lhs.push(lhs);
        report.rhs.push(rhs.re);
        report.integral_terms.push(integral);
    }
    if report.max_imaginary > 1e-9 {
        return Err(Error::invalid(format!(
            "first-order term not real: |Im| = {:e}",
            report.max_imaginary
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossTermReport {
    pub times: Vec<f64>,
    /// `|⟨Q e^{-itH}χ_I u, Q e^{-itH}χ_J u⟩|`
    pub magnitudes: Vec<f64>,
    /// Whether `‖Q e^{-itH}(χ_I+χ_J)u‖ > ½ max(‖Q e^{-itH}χ_I u‖, ‖Q e^{-itH}χ_J u‖)`.
    pub almost_orthogonal: Vec<bool>,
    pub almost_orthogonal_fraction: f64,
    /// `|C(0)|`
    pub initial_magnitude: f64,
    /// `½(‖χ_I u‖_1² + ‖χ_J u‖_1²)`
    pub measure_bound: f64,
    pub bound_violations: usize,
}

/// `C_{I,J}(0) = Σ_n (1+|n|²) conj(a_n) b_n`, summed site by site.
pub fn cross_term_direct(a: &LatticeState, b: &LatticeState) -> Complex64 {
    let g = a.geometry();
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .enumerate()
        .map(|(i, (x, y))| x.conj() * y * (1.0 + g.norm_sq(i) as f64))
        .sum()
}

fn weight_q(psi: &LatticeState) -> LatticeState {
    let q = psi.geometry().weights(0.5);
    let mut out = psi.clone();
    out.amplitudes_mut().iter_mut().zip(q.iter()).for_each(|(x, &w)| *x *= w);
    out
}

pub fn cross_term_series(
    decomposition: &SpectralDecomposition,
    i: &EnergyInterval,
    j: &EnergyInterval,
    u: &LatticeState,
    times: &[f64],
) -> Result<CrossTermReport> {
    if i.overlaps(j) {
        return Err(Error::OverlappingIntervals(i.lo, i.hi, j.lo, j.hi));
    }
    let a = spectral_projection_apply(decomposition, i, u);
    let b = spectral_projection_apply(decomposition, j, u);
    let measure_bound = 0.5 * (a.weighted_norm_sq(1.0)? + b.weighted_norm_sq(1.0)?);
    let initial_magnitude = weight_q(&a).inner(&weight_q(&b)).norm();
    let mut magnitudes = Vec::with_capacity(times.len());
    let mut almost_orthogonal = Vec::with_capacity(times.len());
    for &t in times {
        let qa = weight_q(&dense_oracle_propagate(decomposition, &a, t)?);
        let qb = weight_q(&dense_oracle_propagate(decomposition, &b, t)?);
        magnitudes.push(qa.inner(&qb).norm());
        let mut sum = qa.clone();
        sum.amplitudes_mut().iter_mut().zip(qb.amplitudes()).for_each(|(x, y)| *x += y);
        almost_orthogonal.push(sum.norm() > 0.5 * qa.norm().max(qb.norm()));
    }
    let holds = almost_orthogonal.iter().filter(|&&x| x).count();
    let bound_violations = magnitudes.iter().filter(|&&m| m > measure_bound).count();
    Ok(CrossTermReport {
        times: times.to_vec(),
        almost_orthogonal_fraction: if times.is_empty() { 0.0 } else { holds as f64 / times.len() as f64 },
        magnitudes,
        almost_orthogonal,
        initial_magnitude,
        measure_bound,
        bound_violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RageRadius {
    pub radius: u64,
    /// `sup_t P(|n| ≤ N)`
    pub sup: f64,
    /// `inf_t P(|n| ≤ N)`
    pub inf: f64,
    /// `(1/T)∫_0^T P dt` at every sample `T > 0` (trapezoid rule).
    pub running_average: Vec<(f64, f64)>,
    /// Last sample value.
    pub last: f64,
    pub label: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RageReport {
    pub radii: Vec<RageRadius>,
}

/// In-ball probability diagnostics. The labels are descriptive only.
pub fn rage_diagnostics(series: &MomentSeries) -> RageReport {
    let times = series.times();
    let radii = series
        .ball_radii
        .iter()
        .map(|&radius| {
            let p = series.balls(radius).expect("radius from series");
            let sup = p.iter().cloned().fold(0.0, f64::max);
            let inf = p.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut running_average = Vec::new();
            let mut integral = 0.0;
            for k in 1..p.len() {
                integral += 0.5 * (p[k] + p[k - 1]) * (times[k] - times[k - 1]);
                let span = times[k] - times[0];
                if span > 0.0 {
                    running_average.push((times[k], integral / span));
                }
            }
            let last = *p.last().unwrap_or(&0.0);
            let avg = running_average.last().map(|x| x.1).unwrap_or(last);
            let label = if inf >= 0.5 {
                "point-like"
            } else if avg <= 0.05 {
                "continuous-like"
            } else {
                "undetermined"
            };
            RageRadius { radius, sup, inf, running_average, last, label }
        })
        .collect();
    RageReport { radii }
}
