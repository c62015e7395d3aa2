//! Acceptance criteria 1-14, one PASS/FAIL line each, tolerances pinned.
//!
//! Criteria whose thresholds are known to be unreachable stay at their stated
//! thresholds and print FAIL; they are listed in `KNOWN_UNATTAINABLE` and do
//! not fail the binary. Any other FAIL exits nonzero.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use lattice_transport::experiment::{execute, ExperimentConfig};
use lattice_transport::operators::{commutator_q_h_norm, Hamiltonian};
use lattice_transport::potentials::{realize, PotentialField, PotentialSpec};
use lattice_transport::propagation::{dense_oracle_propagate, light_cone_horizon, Propagator, DEFAULT_TOLERANCE};
use lattice_transport::spectral::{
    dense_eigendecomposition, mourre_compact_split, mourre_form_min, shrink_interval_scan, EnergyInterval,
};
use lattice_transport::transport::{
    check_upper_bounds, fit_transport_exponent, heisenberg_expansion_check, interpolation_inequality,
    jensen_inequality, linear_time_grid, log_time_grid, moment_inequality_tallies, rage_diagnostics, record_moments,
    MomentSeries, RecordSpec, UpperBoundReport,
};
use lattice_transport::{BoxGeometry, LatticeState};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Order-2 envelope with the constant `ĉ_1/2`: the free walk alone has
/// `‖ψ(t)‖_2 ≈ √6 t²` against `ĉ_1/2 ≈ 1`.
const KNOWN_UNATTAINABLE: &[u32] = &[9];

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("{tag} [{:>2}] {}: {}", v.id, v.name, v.detail);
}

/// `ψ_{n+e_j} + ψ_{n-e_j}` inside the box.
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

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut details = Vec::new();
    let mut pass = true;
    for (d, l) in [(1usize, 50usize), (2, 12)] {
        let g = BoxGeometry::new(d, l).unwrap();
        let h = Hamiltonian::free(&g);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let psi = LatticeState::random(&g, &mut rng);
            let lhs = h.double_commutator(&psi).unwrap();
            let mut rhs = vec![Complex64::new(0.0, 0.0); g.total_sites()];
            for j in 0..d {
                let twice = axis_hop(&g, j, &axis_hop(&g, j, psi.amplitudes()));
                for ((o, &p), &t) in rhs.iter_mut().zip(psi.amplitudes()).zip(&twice) {
                    *o += (p * 4.0 - t) * 2.0;
                }
            }
            for i in (0..g.total_sites()).filter(|&i| g.boundary_distance(i) >= 2) {
                worst = worst.max((lhs.amplitudes()[i] - rhs[i]).norm());
            }
        }
        pass &= worst <= 1e-12;
        details.push(format!("d={d} L={l} max interior defect {worst:.2e}"));
    }
    Verdict { id: 1, name: "double-commutator identity", pass, detail: format!("{} (tol 1e-12)", details.join(", ")) }
}

fn families(d: usize) -> Vec<PotentialSpec> {
    let mut v = vec![
        PotentialSpec::Zero,
        PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 },
        PotentialSpec::Anderson { lambda: 8.0, seed: 1 },
        PotentialSpec::Periodic { pattern: vec![1.0, -1.0, 0.5] },
    ];
    if d == 1 {
        v.push(PotentialSpec::WignerVonNeumann { c: 1.0, k: 1.0 });
    }
    v
}

/// Returns the verdict and the d = 1 estimate of `ĉ_1`.
fn criterion_2() -> (Verdict, f64) {
    let mut details = Vec::new();
    let mut pass = true;
    let mut c1_d1 = 0.0f64;
    for d in [1usize, 2] {
        let g = BoxGeometry::new(d, 200).unwrap();
        let bound = 2.0 * d as f64 * 5f64.sqrt() + 1e-9;
        let mut worst = 0.0f64;
        for spec in families(d) {
            let h = Hamiltonian::new(realize(&spec, &g).unwrap());
            let est = commutator_q_h_norm(&h, 500, 1);
            worst = worst.max(est.norm);
        }
        if d == 1 {
            c1_d1 = worst;
        }
        pass &= worst <= bound;
        details.push(format!("d={d} max {worst:.6} <= {bound:.6}"));
    }
    let v = Verdict { id: 2, name: "commutator bound", pass, detail: details.join(", ") };
    (v, c1_d1)
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut diff, mut drift, mut rev) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let (d, l) = if rng.random::<bool>() { (1, rng.random_range(20..=255)) } else { (2, rng.random_range(3..=10)) };
        let g = BoxGeometry::new(d, l).unwrap();
        let scale = rng.random_range(0.0..6.0);
        let v = (0..g.total_sites()).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
        let h = Hamiltonian::new(PotentialField::from_values(&g, v).unwrap());
        let psi = LatticeState::random(&g, &mut rng);
        let t = rng.random_range(0.0..=50.0);
        let dec = dense_eigendecomposition(&h, 4096).unwrap();
        let mut prop = Propagator::new(&h, None, DEFAULT_TOLERANCE).unwrap();
        let out = prop.evolve(&psi, 0.0, t).unwrap();
        diff = diff.max(out.l2_distance(&dense_oracle_propagate(&dec, &psi, t).unwrap()));
        drift = drift.max((out.norm() - psi.norm()).abs());
        rev = rev.max(prop.evolve(&out, t, -t).unwrap().l2_distance(&psi));
    }
    Verdict {
        id: 3,
        name: "propagator oracle equivalence",
        pass: diff <= 1e-10 && drift <= 1e-11 && rev <= 1e-9,
        detail: format!(
            "l2 diff {diff:.2e} (tol 1e-10), unitarity {drift:.2e} (tol 1e-11), time reversal {rev:.2e} (tol 1e-9)"
        ),
    }
}

struct Run {
    label: String,
    h: Hamiltonian,
    u: LatticeState,
    series: MomentSeries,
    horizon: f64,
}

fn record(label: String, g: &Arc<BoxGeometry>, spec: &PotentialSpec, u: LatticeState, t_end: Option<f64>, count: usize) -> Run {
    let h = Hamiltonian::new(realize(spec, g).unwrap());
    let horizon = light_cone_horizon(g, u.support_radius(), 0.9).unwrap();
    let end = t_end.unwrap_or(horizon);
    assert!(end <= horizon);
    let mut times = vec![0.0];
    times.extend(log_time_grid(1.0, end, count).unwrap());
    let rs = RecordSpec { orders: vec![0.0, 0.5, 1.0, 1.5, 2.0], times, ball_radii: vec![25], horizon };
    let mut prop = Propagator::new(&h, None, DEFAULT_TOLERANCE).unwrap();
    let series = record_moments(&mut prop, &u, &rs).unwrap();
    Run { label, h, u, series, horizon }
}

fn band_center_gaussian(g: &Arc<BoxGeometry>) -> LatticeState {
    let mut u = LatticeState::gaussian(g, &[0.0], 10.0, &[PI / 2.0]).unwrap();
    u.normalize().unwrap();
    u
}

fn criterion_4(run: &Run) -> Verdict {
    let mut worst = 0.0f64;
    // second moment recomputed from ‖ψ‖_1² - ‖ψ‖_0² = Σ|n|²|ψ_n|²
    for s in run.series.samples.iter().filter(|s| s.t >= 1.0) {
        let m2 = s.norms[2].powi(2) - s.norms[0].powi(2);
        worst = worst.max((m2 - 2.0 * s.t * s.t).abs() / (2.0 * s.t * s.t));
    }
    let fit = fit_transport_exponent(&run.series, 1.0, (10.0, 400.0), 0.05).unwrap();
    let t_last = run.series.samples.last().unwrap().t;
    Verdict {
        id: 4,
        name: "free ballistic law",
        pass: worst <= 1e-3 && (fit.slope - 1.0).abs() <= 0.02 && t_last >= 450.0 - 1e-9,
        detail: format!(
            "max rel |Σn²|ψ|² - 2t²|/2t² = {worst:.2e} over t in [1, {t_last}] (tol 1e-3), r=1 slope {:.4} on [10,400] (1.00 ± 0.02)",
            fit.slope
        ),
    }
}

fn criterion_5(run: &Run) -> Verdict {
    let window = (10.0, 0.8 * run.horizon);
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [0.5, 1.0, 2.0] {
        let f = fit_transport_exponent(&run.series, r, window, 0.05).unwrap();
        pass &= (0.95..=1.05).contains(&f.slope);
        parts.push(format!("r={r} slope {:.4}", f.slope));
        if r == 1.0 {
            pass &= f.ratio_spread() <= 4.0;
            parts.push(format!("r=1 ratio band [{:.3}, {:.3}] max/min {:.3} (<= 4)", f.ratio_min, f.ratio_max, f.ratio_spread()));
        }
    }
    Verdict {
        id: 5,
        name: "power-law(1,2) ballistic stand-in",
        pass,
        detail: format!("L=8192 window [10, {:.1}]: {} (slopes in [0.95, 1.05])", window.1, parts.join(", ")),
    }
}

fn criterion_6(runs: &[(f64, Run)]) -> Verdict {
    let mut slopes = Vec::new();
    for (alpha, run) in runs {
        let f = fit_transport_exponent(&run.series, 1.0, (10.0, 0.8 * run.horizon), 0.05).unwrap();
        slopes.push((*alpha, f.slope));
    }
    let in_hyp = slopes.iter().filter(|(a, _)| *a >= 1.5).all(|(_, s)| *s >= 0.95);
    let monotone = slopes.windows(2).all(|w| w[1].1 >= w[0].1 - 0.03);
    let list: Vec<String> = slopes.iter().map(|(a, s)| format!("α={a}: {s:.4}")).collect();
    Verdict {
        id: 6,
        name: "decay-hypothesis sweep",
        pass: in_hyp && monotone,
        detail: format!(
            "{} (≥ 0.95 for α ≥ 1.5: {in_hyp}; nondecreasing within ±0.03: {monotone})",
            list.join(", ")
        ),
    }
}

fn criterion_7(run: &Run) -> Verdict {
    let f = fit_transport_exponent(&run.series, 1.0, (10.0, 200.0), 0.05).unwrap();
    let balls = run.series.balls(25).unwrap();
    let late: Vec<f64> = run.series.samples.iter().zip(&balls).filter(|(s, _)| s.t >= 10.0).map(|(_, &b)| b).collect();
    let sup = late.iter().cloned().fold(0.0, f64::max);
    let inf = late.iter().cloned().fold(f64::INFINITY, f64::min);
    let rage = rage_diagnostics(&run.series);
    Verdict {
        id: 7,
        name: "localization control",
        pass: f.slope <= 0.1 && sup >= 0.9,
        detail: format!(
            "Anderson λ=8 L=2048: r=1 slope {:.4} on [10,200] (<= 0.1), sup_(t>=10) in-ball(25) {sup:.4} (>= 0.9), inf {inf:.4}, label {}",
            f.slope, rage.radii[0].label
        ),
    }
}

fn envelopes(runs: &[&Run]) -> Vec<(String, UpperBoundReport)> {
    runs.iter().map(|r| (r.label.clone(), check_upper_bounds(&r.series, &r.h, &r.u).unwrap())).collect()
}

fn criterion_8(runs: &[&Run], reports: &[(String, UpperBoundReport)], c1_from_2: f64) -> Verdict {
    let mut own = 0;
    let mut shared = 0;
    let mut worst = 0.0f64;
    for (run, (_, rep)) in runs.iter().zip(reports) {
        own += rep.order1_violations;
        worst = worst.max(rep.order1_max_ratio);
        let u0 = run.u.norm();
        let u1 = run.u.weighted_norm_sq(1.0).unwrap().sqrt();
        for (t, n1) in rep.times.iter().zip(&rep.norm1) {
            if *n1 > u1 + c1_from_2 * u0 * t {
                shared += 1;
            }
        }
    }
    Verdict {
        id: 8,
        name: "order-1 envelope",
        pass: own == 0 && shared == 0,
        detail: format!(
            "{} runs: violations {own} with per-run ĉ_1, {shared} with ĉ_1 = {c1_from_2:.6} from [2]; max ‖ψ‖_1/envelope {worst:.4}",
            runs.len()
        ),
    }
}

fn criterion_9(reports: &[(String, UpperBoundReport)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut corrected = 0;
    for (label, rep) in reports {
        let limit = rep.c2_reference * 1.05;
        pass &= rep.c2_min <= limit;
        corrected += rep.corrected_violations;
        parts.push(format!("{label}: ĉ_2 {:.4} vs {:.4}", rep.c2_min, limit));
    }
    Verdict {
        id: 9,
        name: "order-2 envelope",
        pass,
        detail: format!(
            "{} (limit ĉ_1/2 + 5%); envelope with κ = ‖[H,Q²]Q⁻¹‖ violated {corrected} times",
            parts.join("; ")
        ),
    }
}

fn criterion_10() -> Verdict {
    let g = BoxGeometry::new(1, 200).unwrap();
    let h = Hamiltonian::free(&g);
    let dec = dense_eigendecomposition(&h, 4096).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for theta in [0.5, 1.0, 2.0] {
        let w = if theta < 2.0 {
            EnergyInterval::j_theta(1, theta).unwrap()
        } else {
            EnergyInterval::j_theta_closure(1, theta).unwrap()
        };
        let m = mourre_form_min(&dec, &h, &w).unwrap();
        let symbol = 8.0 * theta * (1.0 - theta / 4.0);
        let rel = (m.min_rayleigh - symbol).abs() / symbol;
        pass &= m.min_rayleigh >= 2.0 * theta && rel <= 0.05;
        parts.push(format!("θ={theta}: {:.4} (>= {}, symbol {symbol:.4}, rel {rel:.3})", m.min_rayleigh, 2.0 * theta));
    }
    let g2 = BoxGeometry::new(2, 20).unwrap();
    let h2 = Hamiltonian::free(&g2);
    let dec2 = dense_eigendecomposition(&h2, 4096).unwrap();
    let m2 = mourre_form_min(&dec2, &h2, &EnergyInterval::j_theta(2, 1.0).unwrap()).unwrap();
    Verdict {
        id: 10,
        name: "free Mourre form",
        pass,
        detail: format!("d=1 L=200 {}; d=2 L=20 θ=1 reported {:.4}", parts.join(", "), m2.min_rayleigh),
    }
}

fn criterion_11() -> Verdict {
    let g = BoxGeometry::new(1, 300).unwrap();
    let h = Hamiltonian::new(realize(&PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 }, &g).unwrap());
    let dec = dense_eigendecomposition(&h, 4096).unwrap();
    let free = dense_eigendecomposition(&Hamiltonian::free(&g), 4096).unwrap();
    let j = EnergyInterval::j_theta(1, 1.0).unwrap();
    let grid = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0];
    let scan = shrink_interval_scan(&dec, &h, 0.0, &grid, &j, 1.0).unwrap();
    let split = mourre_compact_split(&free, &dec, &h, &j, Some(1.0)).unwrap();
    let pick = scan.rows.iter().find(|r| r.compact_norm <= 0.5 && r.certified_bound.is_some_and(|c| c >= 0.5));
    let detail = match pick {
        Some(r) => format!(
            "δ={} norm {:.4} (<= 0.5), certified {:.4} (>= 0.5); full window: norm {:.4}, certified {:.4}, monotone {}",
            r.delta,
            r.compact_norm,
            r.certified_bound.unwrap(),
            split.compact_norm,
            split.certified_bound,
            scan.monotone
        ),
        None => format!("no admissible δ in {grid:?}"),
    };
    Verdict { id: 11, name: "compact-perturbation split", pass: pick.is_some(), detail }
}

fn criterion_12() -> Verdict {
    let g = BoxGeometry::new(1, 100).unwrap();
    let h = Hamiltonian::free(&g);
    let dec = dense_eigendecomposition(&h, 4096).unwrap();
    let u = band_center_gaussian_small(&g);
    let j = EnergyInterval::j_theta(1, 1.0).unwrap();
    match heisenberg_expansion_check(&dec, &h, &j, &u, &linear_time_grid(0.0, 10.0, 41).unwrap()) {
        Ok(r) => Verdict {
            id: 12,
            name: "Heisenberg expansion",
            pass: r.max_defect <= 1e-6 && r.lower_bound_margin >= 0.0,
            detail: format!(
                "max defect {:.2e} (tol 1e-6), |Im| {:.1e}, step {} after {} halvings; min(integral - θ_eff/2·‖χu‖²t²) = {:.4} (θ_eff {:.4})",
                r.max_defect, r.max_imaginary, r.final_step, r.halvings, r.lower_bound_margin, r.theta_eff
            ),
        },
        Err(e) => Verdict { id: 12, name: "Heisenberg expansion", pass: false, detail: format!("error: {e}") },
    }
}

fn band_center_gaussian_small(g: &Arc<BoxGeometry>) -> LatticeState {
    let mut u = LatticeState::gaussian(g, &[0.0], 4.0, &[PI / 2.0]).unwrap();
    u.normalize().unwrap();
    u
}

fn criterion_13(runs: &[&Run]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pairs = [(0.5, 1.0), (0.5, 2.0), (1.0, 1.5), (1.0, 2.0), (1.5, 2.0)];
    let (mut jv, mut iv, mut checks) = (0usize, 0usize, 0usize);
    for k in 0..1000 {
        let g = if k % 2 == 0 { BoxGeometry::new(1, 30).unwrap() } else { BoxGeometry::new(2, 6).unwrap() };
        let mut psi = LatticeState::random(&g, &mut rng);
        psi.normalize().unwrap();
        let n = |r: f64| psi.weighted_norm_sq(r).unwrap().sqrt();
        for (a, b) in pairs {
            jv += usize::from(!jensen_inequality(n(0.0), n(a), n(b), a, b).0);
        }
        for (m, r) in [(0.0, 0.5), (0.5, 1.0), (1.0, 1.5), (1.0, 1.75)] {
            iv += usize::from(!interpolation_inequality(n(m), n(r), n(m + 1.0), m, r).0);
        }
        checks += 1;
    }
    let (mut sj, mut si, mut sn) = (0usize, 0usize, 0usize);
    for run in runs {
        let (j, i) = moment_inequality_tallies(&run.series);
        sj += j.violations;
        si += i.violations;
        sn += j.checks + i.checks;
    }
    Verdict {
        id: 13,
        name: "moment inequalities",
        pass: jv == 0 && iv == 0 && sj == 0 && si == 0,
        detail: format!(
            "{checks} random states: Jensen {jv}, interpolation {iv} violations; {} series ({sn} checks): Jensen {sj}, interpolation {si} (slack 1e-12)",
            runs.len()
        ),
    }
}

fn criterion_14() -> Verdict {
    let cfg_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/free_1d.cfg");
    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = execute(&cfg, &dir.path().join("a")).unwrap();
    let b = execute(&cfg, &dir.path().join("b")).unwrap();
    let read = |p: &Path| std::fs::read(p).unwrap();
    let manifest = |p: &Path| -> serde_json::Value {
        serde_json::from_slice::<serde_json::Value>(&read(&p.join("manifest.json"))).unwrap()["outputs"].clone()
    };
    let mut same = 0;
    let mut files = 0;
    for entry in std::fs::read_dir(&a.dir).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            files += 1;
            same += usize::from(read(&a.dir.join(&name)) == read(&b.dir.join(&name)));
        }
    }
    let checksums = manifest(&a.dir) == manifest(&b.dir);
    Verdict {
        id: 14,
        name: "reproducibility",
        pass: files > 0 && same == files && checksums,
        detail: format!("{same}/{files} CSVs byte-identical, manifest checksums equal: {checksums}"),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut verdicts = Vec::new();
    let emit = |v: Verdict, verdicts: &mut Vec<Verdict>| {
        report(&v);
        verdicts.push(v);
    };
    emit(criterion_1(), &mut verdicts);
    let (v2, c1) = criterion_2();
    emit(v2, &mut verdicts);
    emit(criterion_3(), &mut verdicts);

    let g2048 = BoxGeometry::new(1, 2048).unwrap();
    let free = record("free".into(), &g2048, &PotentialSpec::Zero, LatticeState::delta(&g2048, &[0]).unwrap(), Some(450.0), 96);
    emit(criterion_4(&free), &mut verdicts);

    let g8192 = BoxGeometry::new(1, 8192).unwrap();
    let power = record(
        "power_law L=8192".into(),
        &g8192,
        &PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 },
        band_center_gaussian(&g8192),
        None,
        96,
    );
    emit(criterion_5(&power), &mut verdicts);

    let g4096 = BoxGeometry::new(1, 4096).unwrap();
    let sweep: Vec<(f64, Run)> = [0.5, 1.0, 1.5, 2.0, 3.0]
        .into_iter()
        .map(|alpha| {
            let spec = PotentialSpec::PowerLaw { c: 1.0, alpha };
            (alpha, record(format!("α={alpha}"), &g4096, &spec, band_center_gaussian(&g4096), None, 64))
        })
        .collect();
    emit(criterion_6(&sweep), &mut verdicts);

    let anderson = record(
        "anderson".into(),
        &g2048,
        &PotentialSpec::Anderson { lambda: 8.0, seed: 1 },
        LatticeState::delta(&g2048, &[0]).unwrap(),
        Some(450.0),
        64,
    );
    emit(criterion_7(&anderson), &mut verdicts);

    let mut runs: Vec<&Run> = vec![&free, &power];
    runs.extend(sweep.iter().map(|(_, r)| r));
    runs.push(&anderson);
    let reports = envelopes(&runs);
    emit(criterion_8(&runs, &reports, c1), &mut verdicts);
    emit(criterion_9(&reports), &mut verdicts);
    emit(criterion_10(), &mut verdicts);
    emit(criterion_11(), &mut verdicts);
    emit(criterion_12(), &mut verdicts);
    emit(criterion_13(&runs), &mut verdicts);
    emit(criterion_14(), &mut verdicts);

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    let unexpected: Vec<u32> = failed.iter().copied().filter(|id| !KNOWN_UNATTAINABLE.contains(id)).collect();
    println!(
        "{} of {} criteria passed in {:.1}s; failed {:?}, of which known unattainable {:?}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        start.elapsed().as_secs_f64(),
        failed,
        failed.iter().filter(|id| KNOWN_UNATTAINABLE.contains(id)).collect::<Vec<_>>()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
