//! `verify <suite>`: invariant checks at desk scale, one PASS/FAIL line each.
//!
//! Reference values here come from closed forms or from a second,
//! independent evaluation path, never from the function under test alone.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, LatticeState};
use crate::operators::{commutator_q_h_norm, materialize_dense, Hamiltonian, OperatorExpr};
use crate::potentials::{realize, PotentialField, PotentialSpec};
use crate::propagation::{
    dense_oracle_propagate, estimate_spectral_bounds, light_cone_horizon, plan_chebyshev, propagate, Propagator,
    DEFAULT_TOLERANCE,
};
use crate::spectral::{
    ac_surrogate_projection, commutator_q_spectral_function_norm, complement_projection_apply,
    dense_eigendecomposition, mourre_compact_split, mourre_form_min, spectral_projection_apply, EnergyInterval,
};
use crate::transport::{
    check_upper_bounds, cross_term_direct, cross_term_series, fit_transport_exponent, heisenberg_expansion_check,
    interpolation_inequality, jensen_inequality, log_time_grid, record_moments, MomentSample, MomentSeries,
    RecordSpec, SeriesHeader,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Operators,
    Propagation,
    Spectral,
    Transport,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operators" => Ok(Suite::Operators),
            "propagation" => Ok(Suite::Propagation),
            "spectral" => Ok(Suite::Spectral),
            "transport" => Ok(Suite::Transport),
            "all" => Ok(Suite::All),
            other => Err(Error::Config {
                line: 0,
                field: "suite".into(),
                message: format!("unknown suite `{other}` (operators, propagation, spectral, transport, all)"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported only, never fails the suite.
    Info,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Info => "INFO",
        };
        write!(f, "{tag} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

struct Recorder {
    suite: &'static str,
    checks: Vec<Check>,
}

impl Recorder {
    fn new(suite: &'static str) -> Self {
        Self { suite, checks: Vec::new() }
    }

    /// Passes iff `measured <= bound`.
    fn at_most(&mut self, name: &str, measured: f64, bound: f64) {
        self.push(name, measured <= bound, format!("{measured:.3e} <= {bound:.1e}"));
    }

    fn at_least(&mut self, name: &str, measured: f64, bound: f64) {
        self.push(name, measured >= bound, format!("{measured:.6} >= {bound:.6}"));
    }

    fn push(&mut self, name: &str, ok: bool, detail: String) {
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        self.checks.push(Check { suite: self.suite, name: name.into(), verdict, detail });
    }

    fn info(&mut self, name: &str, detail: String) {
        self.checks.push(Check { suite: self.suite, name: name.into(), verdict: Verdict::Info, detail });
    }

    fn error(&mut self, name: &str, err: Error) {
        self.push(name, false, format!("error: {err}"));
    }
}

/// Runs a suite; `print` is called on each check as it completes.
pub fn verify(suite: Suite, mut print: impl FnMut(&Check)) -> Vec<Check> {
    let suites: &[fn() -> Vec<Check>] = match suite {
        Suite::Operators => &[operators_suite],
        Suite::Propagation => &[propagation_suite],
        Suite::Spectral => &[spectral_suite],
        Suite::Transport => &[transport_suite],
        Suite::All => &[operators_suite, propagation_suite, spectral_suite, transport_suite],
    };
    let mut all = Vec::new();
    for s in suites {
        for c in s() {
            print(&c);
            all.push(c);
        }
    }
    all
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.verdict != Verdict::Fail)
}

fn families(d: usize) -> Vec<PotentialSpec> {
    let mut v = vec![
        PotentialSpec::Zero,
        PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 },
        PotentialSpec::Anderson { lambda: 8.0, seed: 3 },
        PotentialSpec::Periodic { pattern: vec![1.0, -0.5, 0.25] },
    ];
    if d == 1 {
        v.push(PotentialSpec::WignerVonNeumann { c: 1.0, k: 1.0 });
    }
    v
}

/// `ψ_{n+e_j} + ψ_{n-e_j}` with Dirichlet truncation.
fn axis_hop(g: &BoxGeometry, axis: usize, src: &[Complex64]) -> Vec<Complex64> {
    (0..src.len())
        .map(|i| {
            let mut s = Complex64::new(0.0, 0.0);
            for fwd in [true, false] {
                if let Some(k) = g.neighbor(i, axis, fwd) {
                    s += src[k];
                }
            }
            s
        })
        .collect()
}

fn operators_suite() -> Vec<Check> {
    let mut r = Recorder::new("operators");
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    // [H,[H,-Q²]] = 2Σ_j(4 - Δ_j²) for V = 0
    for (d, l) in [(1usize, 50usize), (2, 12)] {
        let g = BoxGeometry::new(d, l).unwrap();
        let h = Hamiltonian::free(&g);
        let mut interior = 0.0f64;
        let mut compressed = 0.0f64;
        for _ in 0..20 {
            let psi = LatticeState::random(&g, &mut rng);
            let mut reference = vec![Complex64::new(0.0, 0.0); g.total_sites()];
            for j in 0..d {
                let once = axis_hop(&g, j, psi.amplitudes());
                let twice = axis_hop(&g, j, &once);
                for ((o, &p), &t) in reference.iter_mut().zip(psi.amplitudes()).zip(&twice) {
                    *o += (p * 4.0 - t) * 2.0;
                }
            }
            let box_form = h.double_commutator(&psi).unwrap();
            let comp = h.compressed_double_commutator(&psi).unwrap();
            for i in 0..g.total_sites() {
                // P Δ_j² P keeps the reflected path n → n±e_j → n that leaves the box
                let faces = (0..d).filter(|&j| g.coord(i, j).abs() == g.radius()).count() as f64;
                let lattice_ref = reference[i] - psi.amplitudes()[i] * (2.0 * faces);
                compressed = compressed.max((comp.amplitudes()[i] - lattice_ref).norm());
                if g.boundary_distance(i) >= 2 {
                    interior = interior.max((box_form.amplitudes()[i] - reference[i]).norm());
                }
            }
        }
        r.at_most(&format!("double_commutator_identity_d{d}_interior"), interior, 1e-12);
        r.at_most(&format!("double_commutator_identity_d{d}_compressed"), compressed, 1e-12);
    }

    // ‖[Q,H]‖ ≤ 2d√5
    for d in [1usize, 2] {
        let l = if d == 1 { 200 } else { 40 };
        let g = BoxGeometry::new(d, l).unwrap();
        let mut worst = 0.0f64;
        for spec in families(d) {
            let h = Hamiltonian::new(realize(&spec, &g).unwrap());
            worst = worst.max(commutator_q_h_norm(&h, 400, 7).norm);
        }
        r.at_most(&format!("commutator_q_h_bound_d{d}"), worst, 2.0 * d as f64 * 5f64.sqrt() + 1e-9);
    }

    // symmetry classes
    let g = BoxGeometry::new(2, 4).unwrap();
    let h = Hamiltonian::new(realize(&PotentialSpec::PowerLaw { c: 1.0, alpha: 1.5 }, &g).unwrap());
    for (expr, sign) in [
        (OperatorExpr::Hamiltonian, 1.0),
        (OperatorExpr::CommutatorQH, -1.0),
        (OperatorExpr::Dilation, -1.0),
        (OperatorExpr::DoubleCommutator, 1.0),
        (OperatorExpr::CompressedDoubleCommutator, 1.0),
        (OperatorExpr::PotentialCommutator, 1.0),
    ] {
        let m = materialize_dense(&h, expr, 4096).unwrap();
        r.at_most(&format!("symmetry_{}", expr.label()), m.symmetry_defect(sign), 1e-12);
    }

    // [Q,H] does not depend on V
    let g = BoxGeometry::new(1, 30).unwrap();
    let psi = LatticeState::random(&g, &mut rng);
    let a = Hamiltonian::free(&g).commutator_q_h(&psi).unwrap();
    let b = Hamiltonian::new(realize(&PotentialSpec::Anderson { lambda: 5.0, seed: 1 }, &g).unwrap())
        .commutator_q_h(&psi)
        .unwrap();
    r.at_most("commutator_q_h_potential_independent", a.l2_distance(&b), 0.0);

    // [H,-Q²]δ_0 = -δ_1 - δ_{-1}
    let d0 = LatticeState::delta(&g, &[0]).unwrap();
    let dd = Hamiltonian::free(&g).dilation(&d0).unwrap();
    let mut expected = LatticeState::zeros(&g);
    expected.amplitudes_mut()[g.index_of(&[1]).unwrap()] = Complex64::new(-1.0, 0.0);
    expected.amplitudes_mut()[g.index_of(&[-1]).unwrap()] = Complex64::new(-1.0, 0.0);
    r.at_most("dilation_delta_example", dd.l2_distance(&expected), 0.0);
    r.checks
}

fn random_hamiltonian(rng: &mut ChaCha8Rng, max_sites: usize) -> Hamiltonian {
    let d = rng.random_range(1..=2usize);
    let l = if d == 1 { rng.random_range(10..=255usize) } else { rng.random_range(3..=10usize) };
    let g = BoxGeometry::new(d, l).unwrap();
    assert!(g.total_sites() <= max_sites);
    let scale = rng.random_range(0.0..4.0);
    let v: Vec<f64> = (0..g.total_sites()).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
    Hamiltonian::new(PotentialField::from_values(&g, v).unwrap())
}

fn propagation_suite() -> Vec<Check> {
    let mut r = Recorder::new("propagation");
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut oracle = 0.0f64;
    let mut unitarity = 0.0f64;
    let mut reversal = 0.0f64;
    let mut semigroup = 0.0f64;
    for _ in 0..20 {
        let h = random_hamiltonian(&mut rng, 512);
        let g = h.geometry().clone();
        let psi = LatticeState::random(&g, &mut rng);
        let t = rng.random_range(0.0..50.0);
        let dec = match dense_eigendecomposition(&h, 4096) {
            Ok(d) => d,
            Err(e) => {
                r.error("oracle_equivalence", e);
                return r.checks;
            }
        };
        let mut prop = Propagator::new(&h, None, DEFAULT_TOLERANCE).unwrap();
        let cheb = match prop.evolve(&psi, 0.0, t) {
            Ok(x) => x,
            Err(e) => {
                r.error("oracle_equivalence", e);
                return r.checks;
            }
        };
        let exact = dense_oracle_propagate(&dec, &psi, t).unwrap();
        oracle = oracle.max(cheb.l2_distance(&exact));
        unitarity = unitarity.max((cheb.norm() - psi.norm()).abs());
        let back = prop.evolve(&cheb, t, -t).unwrap();
        reversal = reversal.max(back.l2_distance(&psi));
        let bounds = estimate_spectral_bounds(&h);
        let tau = t / 5.0;
        if tau > 0.0 {
            let small = plan_chebyshev(bounds, tau, DEFAULT_TOLERANCE).unwrap();
            let big = plan_chebyshev(bounds, t, DEFAULT_TOLERANCE).unwrap();
            let mut x = psi.clone();
            for _ in 0..5 {
                x = propagate(&h, &small, &x).unwrap();
            }
            semigroup = semigroup.max(x.l2_distance(&propagate(&h, &big, &psi).unwrap()));
        }
    }
    r.at_most("oracle_equivalence", oracle, 1e-10);
    r.at_most("unitarity", unitarity, 1e-11);
    r.at_most("time_reversal", reversal, 1e-9);
    r.at_most("semigroup", semigroup, 1e-9);

    // free second moment 2t² and the light cone, L = 256
    let g = BoxGeometry::new(1, 256).unwrap();
    let h = Hamiltonian::free(&g);
    let t_max = light_cone_horizon(&g, 0, 0.9).unwrap();
    let mut prop = Propagator::new(&h, None, DEFAULT_TOLERANCE).unwrap();
    let mut psi = LatticeState::delta(&g, &[0]).unwrap();
    let mut now = 0.0;
    let mut worst = 0.0f64;
    for t in log_time_grid(1.0, t_max, 25).unwrap() {
        psi = prop.evolve(&psi, now, t - now).unwrap();
        now = t;
        let m2: f64 = (0..g.total_sites())
            .map(|i| g.norm_sq(i) as f64 * psi.amplitudes()[i].norm_sqr())
            .sum();
        worst = worst.max((m2 - 2.0 * t * t).abs() / (2.0 * t * t));
    }
    r.at_most("free_second_moment", worst, 1e-3);
    let inside: f64 = (0..g.total_sites())
        .filter(|&i| g.coord(i, 0).abs() <= g.radius() - 2)
        .map(|i| psi.amplitudes()[i].norm_sqr())
        .sum();
    r.at_least("light_cone_containment", inside, 1.0 - 1e-8);
    r.checks
}

fn spectral_suite() -> Vec<Check> {
    let mut r = Recorder::new("spectral");
    let l = 100usize;
    let g = BoxGeometry::new(1, l).unwrap();
    let free = Hamiltonian::free(&g);
    let dec = dense_eigendecomposition(&free, 4096).unwrap();
    let n = 2 * l + 1;
    let mut sine = (1..=n).map(|k| -2.0 * (k as f64 * PI / (n + 1) as f64).cos()).collect::<Vec<_>>();
    sine.sort_by(f64::total_cmp);
    let defect = dec.eigenvalues().iter().zip(&sine).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    r.at_most("free_eigenvalues_closed_form", defect, 1e-12);
    r.at_most("orthonormality", dec.orthonormality_defect(), 1e-12);
    r.at_most("eigen_residual", dec.residual(), 1e-10);

    let gp = BoxGeometry::new(1, 60).unwrap();
    let hp = Hamiltonian::new(realize(&PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 }, &gp).unwrap());
    let decp = dense_eigendecomposition(&hp, 4096).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let psi = LatticeState::random(&gp, &mut rng);
    let i = EnergyInterval::open(-1.5, -0.5).unwrap();
    let j = EnergyInterval::open(0.5, 1.5).unwrap();
    let pi = spectral_projection_apply(&decp, &i, &psi);
    let pj = spectral_projection_apply(&decp, &j, &psi);
    r.at_most("projection_idempotent", spectral_projection_apply(&decp, &i, &pi).l2_distance(&pi), 1e-12);
    r.at_most("projection_disjoint_orthogonal", pi.inner(&pj).norm(), 1e-12);
    let mut sum = complement_projection_apply(&decp, &i, &psi);
    sum.amplitudes_mut().iter_mut().zip(pi.amplitudes()).for_each(|(a, b)| *a += b);
    r.at_most("projection_resolution_of_identity", sum.l2_distance(&psi), 1e-12);

    let gm = BoxGeometry::new(1, 200).unwrap();
    let hm = Hamiltonian::free(&gm);
    let decm = dense_eigendecomposition(&hm, 4096).unwrap();
    for theta in [0.5, 1.0] {
        let w = EnergyInterval::j_theta(1, theta).unwrap();
        match mourre_form_min(&decm, &hm, &w) {
            Ok(m) => {
                let symbol = 8.0 * theta * (1.0 - theta / 4.0);
                r.at_least(&format!("mourre_theta{theta}_lower"), m.min_rayleigh, 2.0 * theta);
                r.at_most(&format!("mourre_theta{theta}_symbol"), (m.min_rayleigh - symbol).abs() / symbol, 0.05);
            }
            Err(e) => r.error("mourre", e),
        }
    }

    let w = EnergyInterval::j_theta(1, 1.0).unwrap();
    let dec0 = dense_eigendecomposition(&Hamiltonian::free(&gp), 4096).unwrap();
    match mourre_compact_split(&dec0, &decp, &hp, &w, Some(1.0)) {
        Ok(s) => r.at_most("compact_split_certified_below_full", s.certified_bound - s.full_min, 1e-10),
        Err(e) => r.error("compact_split", e),
    }
    match mourre_compact_split(&dec0, &dec0, &Hamiltonian::free(&gp), &w, Some(1.0)) {
        Ok(s) => r.at_most("compact_split_zero_potential", s.compact_norm, 0.0),
        Err(e) => r.error("compact_split_zero_potential", e),
    }

    let s = ac_surrogate_projection(&decp, &w, 0.05, 0.2).unwrap();
    let px = s.apply(&decp, &psi);
    r.at_most("surrogate_idempotent", s.apply(&decp, &px).l2_distance(&px), 1e-12);
    r.info(
        "surrogate_selection",
        format!("{} of {} window modes selected", s.selected.len(), s.candidates),
    );

    // ‖[Q, φ(H)]‖ for a smooth window stays bounded in L; a sharp window grows
    let mut smooth = Vec::new();
    let mut sharp = Vec::new();
    for l in [50usize, 100, 200] {
        let gl = BoxGeometry::new(1, l).unwrap();
        let d = dense_eigendecomposition(&Hamiltonian::free(&gl), 4096).unwrap();
        let bump: Vec<f64> = d.eigenvalues().iter().map(|&e| (-(e * e) / (2.0 * 0.5 * 0.5)).exp()).collect();
        let ind: Vec<f64> = d.eigenvalues().iter().map(|&e| if w.contains(e) { 1.0 } else { 0.0 }).collect();
        smooth.push(commutator_q_spectral_function_norm(&d, &bump, 300, 5).norm);
        sharp.push(commutator_q_spectral_function_norm(&d, &ind, 300, 5).norm);
    }
    let spread = smooth.iter().cloned().fold(0.0, f64::max) / smooth.iter().cloned().fold(f64::INFINITY, f64::min);
    r.at_most("commutator_q_smooth_window_bounded", spread, 1.1);
    r.info("commutator_q_sharp_window", format!("L = 50, 100, 200: {sharp:.3?}"));
    r.checks
}

fn transport_suite() -> Vec<Check> {
    let mut r = Recorder::new("transport");
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let g = BoxGeometry::new(1, 64).unwrap();
    let mut jensen_bad = 0;
    let mut interp_bad = 0;
    for _ in 0..200 {
        let psi = LatticeState::random(&g, &mut rng);
        let n = |r: f64| psi.weighted_norm_sq(r).unwrap().sqrt();
        for (a, b) in [(0.5, 1.0), (1.0, 2.0), (0.5, 2.0), (1.0, 1.5)] {
            if !jensen_inequality(n(0.0), n(a), n(b), a, b).0 {
                jensen_bad += 1;
            }
        }
        if !interpolation_inequality(n(1.0), n(1.5), n(2.0), 1.0, 1.5).0 {
            interp_bad += 1;
        }
    }
    r.at_most("jensen_random_states", jensen_bad as f64, 0.0);
    r.at_most("interpolation_random_states", interp_bad as f64, 0.0);

    // synthetic 3t^r
    let times = log_time_grid(1.0, 100.0, 20).unwrap();
    let synthetic = MomentSeries {
        header: SeriesHeader {
            config_hash: String::new(),
            bounds: estimate_spectral_bounds(&Hamiltonian::free(&g)),
            tau: 1.0,
            order: 0,
            tolerance: DEFAULT_TOLERANCE,
            horizon: 100.0,
        },
        orders: vec![1.0],
        ball_radii: vec![],
        samples: times.iter().map(|&t| MomentSample { t, norms: vec![3.0 * t], balls: vec![] }).collect(),
    };
    let f = fit_transport_exponent(&synthetic, 1.0, (1.0, 100.0), 0.05).unwrap();
    r.at_most("fit_synthetic_slope", (f.slope - 1.0).abs(), 1e-12);
    r.at_most("fit_synthetic_ratio_band", (f.ratio_max - 3.0).abs().max((f.ratio_min - 3.0).abs()), 1e-12);

    // free ‖ψ‖_1² = 1 + 2t², order-1 envelope
    let gl = BoxGeometry::new(1, 512).unwrap();
    for (name, spec) in [
        ("free", PotentialSpec::Zero),
        ("power_law", PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 }),
        ("anderson", PotentialSpec::Anderson { lambda: 8.0, seed: 1 }),
    ] {
        let h = Hamiltonian::new(realize(&spec, &gl).unwrap());
        let u = LatticeState::delta(&gl, &[0]).unwrap();
        let horizon = light_cone_horizon(&gl, 0, 0.9).unwrap();
        let mut times = vec![0.0];
        times.extend(log_time_grid(1.0, horizon, 30).unwrap());
        let spec = RecordSpec { orders: vec![0.0, 1.0, 2.0], times, ball_radii: vec![25], horizon };
        let mut prop = Propagator::new(&h, None, DEFAULT_TOLERANCE).unwrap();
        let series = match record_moments(&mut prop, &u, &spec) {
            Ok(s) => s,
            Err(e) => {
                r.error(&format!("record_{name}"), e);
                continue;
            }
        };
        if name == "free" {
            let worst = series
                .samples
                .iter()
                .map(|s| (s.norms[1].powi(2) - (1.0 + 2.0 * s.t * s.t)).abs() / (1.0 + 2.0 * s.t * s.t))
                .fold(0.0, f64::max);
            r.at_most("free_first_moment_law", worst, 2e-3);
        }
        if name == "anderson" {
            let fit = fit_transport_exponent(&series, 1.0, (10.0, 200.0), 0.05).unwrap();
            r.at_most("anderson_exponent", fit.slope, 0.1);
        }
        let b = check_upper_bounds(&series, &h, &u).unwrap();
        r.at_most(&format!("order1_envelope_{name}"), b.order1_violations as f64, 0.0);
    }

    // Heisenberg expansion and cross terms on a dense box
    let gd = BoxGeometry::new(1, 100).unwrap();
    let hd = Hamiltonian::free(&gd);
    let dec = dense_eigendecomposition(&hd, 4096).unwrap();
    let u = LatticeState::gaussian(&gd, &[0.0], 4.0, &[PI / 2.0]).unwrap();
    let j1 = EnergyInterval::j_theta(1, 1.0).unwrap();
    match heisenberg_expansion_check(&dec, &hd, &j1, &u, &linear(0.0, 10.0, 11)) {
        Ok(h) => {
            r.at_most("heisenberg_defect", h.max_defect, 1e-6);
            r.at_least("heisenberg_integral_lower_bound", h.lower_bound_margin, 0.0);
        }
        Err(e) => r.error("heisenberg_defect", e),
    }
    let i = EnergyInterval::open(-1.5, -0.5).unwrap();
    let jj = EnergyInterval::open(0.5, 1.5).unwrap();
    let c = cross_term_series(&dec, &i, &jj, &u, &[0.0]).unwrap();
    let a = spectral_projection_apply(&dec, &i, &u);
    let b = spectral_projection_apply(&dec, &jj, &u);
    r.at_most(
        "cross_term_two_ways",
        (cross_term_direct(&a, &b).norm() - c.initial_magnitude).abs(),
        1e-12,
    );
    r.checks
}

fn linear(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}
