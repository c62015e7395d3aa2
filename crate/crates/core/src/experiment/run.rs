//! `run`: realize, propagate, analyze, write outputs and a manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, InitialConfig};
use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, LatticeState};
use crate::operators::{Hamiltonian, OperatorExpr};
use crate::potentials::{decay_profile, realize};
use crate::propagation::{light_cone_horizon, Propagator};
use crate::spectral::{
    ac_surrogate_projection, dense_eigendecomposition, mourre_compact_split, mourre_form_min, mourre_form_min_with,
    shrink_interval_scan, EnergyInterval,
};
use crate::transport::{
    check_upper_bounds, fit_transport_exponent, moment_inequality_tallies, rage_diagnostics, record_moments,
    ExponentFit, RecordSpec,
};

/// Unitarity tolerance over a whole run.
pub const UNITARITY_TOLERANCE: f64 = 1e-11;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExitStatus {
    Ok = 0,
    AssertionFailed = 1,
    ConfigError = 2,
    NumericalAbort = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Maps an error to the exit-code contract.
    pub fn for_error(err: &Error) -> Self {
        match err {
            Error::NormDrift { .. }
            | Error::ToleranceUnachievable { .. }
            | Error::Eigensolver(_)
            | Error::QuadratureNotConverged { .. } => ExitStatus::NumericalAbort,
            _ => ExitStatus::ConfigError,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub check: String,
    pub measured: f64,
    pub threshold: f64,
    pub message: String,
}

/// Scalars reported per run (and per sweep point).
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub slope: Option<f64>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub min_rayleigh: Option<f64>,
    pub compact_norm: Option<f64>,
    pub certified_bound: Option<f64>,
    pub order1_violations: Option<usize>,
    pub c2_min: Option<f64>,
    pub ball_sup: Option<f64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub dir: PathBuf,
    pub config_hash: String,
    pub summary: RunSummary,
    pub fits: Vec<ExponentFit>,
    pub failures: Vec<Failure>,
}

/// Output root: explicit flag, then the config's `run.output`, then the
/// environment variable, then `runs`.
pub const OUTPUT_ROOT_ENV: &str = "LATTICE_TRANSPORT_OUT";

pub fn resolve_output_root(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn realize_initial(cfg: &ExperimentConfig, g: &std::sync::Arc<BoxGeometry>) -> Result<LatticeState> {
    match &cfg.initial {
        InitialConfig::Delta { site } => LatticeState::delta(g, site),
        InitialConfig::Gaussian { center, width, momentum } => LatticeState::gaussian(g, center, *width, momentum),
        InitialConfig::File { path } => {
            let text = std::fs::read_to_string(path)?;
            LatticeState::read_csv(g, &text)
        }
        InitialConfig::Random => Ok(LatticeState::random(g, &mut ChaCha8Rng::seed_from_u64(cfg.seed))),
    }
}

/// `J_θ` for `θ < 2d`, else the closed window `[-2d+θ, 2d-θ]`.
pub fn spectral_window(dim: usize, theta: f64) -> Result<EnergyInterval> {
    if theta < 2.0 * dim as f64 {
        EnergyInterval::j_theta(dim, theta)
    } else {
        EnergyInterval::j_theta_closure(dim, theta)
    }
}

struct Outputs {
    dir: PathBuf,
    hash: String,
    checksums: BTreeMap<String, String>,
}

impl Outputs {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let path = self.dir.join(name);
        let mut f = BufWriter::new(File::create(&path)?);
        f.write_all(&buf)?;
        f.flush()?;
        self.checksums.insert(name.to_string(), hex::encode(Sha256::digest(&buf)));
        Ok(())
    }

    fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let hash = self.hash.clone();
        self.write(name, |w| {
            writeln!(w, "# config_hash={hash}")?;
            body(w)
        })
    }

    fn json(&mut self, name: &str, value: serde_json::Value) -> Result<()> {
        let hash = self.hash.clone();
        self.write(name, |w| {
            let mut v = value;
            if let serde_json::Value::Object(m) = &mut v {
                m.insert("config_hash".into(), json!(hash));
            }
            serde_json::to_writer_pretty(&mut *w, &v)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

fn environment_fingerprint() -> serde_json::Value {
    json!({
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "family": std::env::consts::FAMILY,
        "threads": std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        "debug_assertions": cfg!(debug_assertions),
    })
}

/// Executes a validated config, writing into `dir`.
pub fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    let mut out = Outputs { dir: dir.to_path_buf(), hash: hash.clone(), checksums: BTreeMap::new() };
    out.write("config.cfg", |w| Ok(w.write_all(cfg.serialize().as_bytes())?))?;

    let g = BoxGeometry::new(cfg.geometry.dim, cfg.geometry.radius)?;
    let field = realize(&cfg.potential, &g)?;
    out.csv("potential.csv", |w| field.write_csv(w))?;
    let h = Hamiltonian::new(field);
    let u = realize_initial(cfg, &g)?;

    let mut summary = RunSummary::default();
    let mut failures = Vec::new();
    let mut fits = Vec::new();
    let e = &cfg.expect;

    if cfg.times.is_some() {
        let safety = cfg.times.as_ref().map_or(0.9, |t| t.safety);
        let horizon = light_cone_horizon(&g, u.support_radius(), safety)?;
        let times = cfg.sample_times()?;
        let spec = RecordSpec {
            orders: cfg.moments.orders.clone(),
            times,
            ball_radii: cfg.moments.ball_radii.clone(),
            horizon,
        };
        let mut prop = Propagator::new(&h, cfg.propagator.tau, cfg.propagator.tolerance)?;
        let mut series = record_moments(&mut prop, &u, &spec)?;
        series.header.config_hash = hash.clone();
        out.write("series.csv", |w| series.write_csv(w))?;

        let window = cfg.fit_window()?;
        for &r in series.orders.iter().filter(|&&r| r > 0.0) {
            fits.push(fit_transport_exponent(&series, r, window, cfg.fit.tolerance)?);
        }
        let main = fits.iter().find(|f| f.r == cfg.fit.order).expect("fit order validated");
        summary.slope = Some(main.slope);
        summary.ratio_min = Some(main.ratio_min);
        summary.ratio_max = Some(main.ratio_max);
        if let Some(min) = e.slope_min {
            if main.slope < min {
                failures.push(Failure {
                    check: "slope_min".into(),
                    measured: main.slope,
                    threshold: min,
                    message: format!("r = {} exponent below expectation", main.r),
                });
            }
        }
        if let Some(max) = e.slope_max {
            if main.slope > max {
                failures.push(Failure {
                    check: "slope_max".into(),
                    measured: main.slope,
                    threshold: max,
                    message: format!("r = {} exponent above expectation", main.r),
                });
            }
        }
        if let Some(max) = e.ratio_spread_max {
            if main.ratio_spread() > max {
                failures.push(Failure {
                    check: "ratio_spread_max".into(),
                    measured: main.ratio_spread(),
                    threshold: max,
                    message: "ratio band max/min too wide".into(),
                });
            }
        }
        out.json("fits.json", json!({ "window": [window.0, window.1], "fits": fits }))?;

        if let Ok(n0) = series.norms(0.0) {
            let u0 = u.norm();
            let drift = n0.iter().fold(0.0f64, |m, v| m.max((v - u0).abs()));
            if drift > UNITARITY_TOLERANCE {
                failures.push(Failure {
                    check: "unitarity".into(),
                    measured: drift,
                    threshold: UNITARITY_TOLERANCE,
                    message: "‖ψ(t)‖_0 drifted".into(),
                });
            }
        }
        let bounds = if series.order_index(1.0).is_ok() && series.order_index(2.0).is_ok() {
            let b = check_upper_bounds(&series, &h, &u)?;
            summary.order1_violations = Some(b.order1_violations);
            summary.c2_min = Some(b.c2_min);
            if b.violation {
                failures.push(Failure {
                    check: "order1_envelope".into(),
                    measured: b.order1_max_ratio,
                    threshold: 1.0,
                    message: format!("{} samples above ‖u‖_1 + ĉ_1‖u‖_0 t", b.order1_violations),
                });
            }
            Some(b)
        } else {
            None
        };
        let (jensen, interp) = moment_inequality_tallies(&series);
        for (name, t) in [("jensen", &jensen), ("interpolation", &interp)] {
            if t.violations > 0 {
                failures.push(Failure {
                    check: name.into(),
                    measured: t.min_margin,
                    threshold: -crate::transport::MOMENT_INEQUALITY_SLACK,
                    message: format!("{} of {} samples violate the inequality", t.violations, t.checks),
                });
            }
        }
        let rage = rage_diagnostics(&series);
        if let Some(first) = rage.radii.first() {
            summary.ball_sup = Some(first.sup);
            if let Some(min) = e.ball_sup_min {
                if first.sup < min {
                    failures.push(Failure {
                        check: "ball_sup_min".into(),
                        measured: first.sup,
                        threshold: min,
                        message: format!("sup in-ball(N = {}) too small", first.radius),
                    });
                }
            }
        }
        out.json(
            "bounds.json",
            json!({
                "upper_bounds": bounds,
                "jensen": jensen,
                "interpolation": interp,
                "rage": rage,
                "decay_profile": decay_profile(h.potential()),
            }),
        )?;
    }

    if let Some(sp) = &cfg.spectral {
        let dec = dense_eigendecomposition(&h, sp.dense_cap)?;
        out.csv("eigen.csv", |w| dec.write_csv(w))?;
        let window = spectral_window(g.dim(), sp.theta)?;
        let mourre = mourre_form_min(&dec, &h, &window)?;
        let box_bracket = mourre_form_min_with(&dec, &h, &window, OperatorExpr::DoubleCommutator)?;
        let free_dec = if h.potential().is_zero() {
            dec.clone()
        } else {
            dense_eigendecomposition(&Hamiltonian::free(&g), sp.dense_cap)?
        };
        let split = mourre_compact_split(&free_dec, &dec, &h, &window, Some(sp.theta))?;
        let scan = if !sp.delta_grid.is_empty() && window.contains(sp.e0) {
            Some(shrink_interval_scan(&dec, &h, sp.e0, &sp.delta_grid, &window, sp.theta)?)
        } else {
            None
        };
        let surrogate = ac_surrogate_projection(&dec, &window, sp.ipr_threshold, sp.boundary_threshold)?;
        summary.min_rayleigh = Some(mourre.min_rayleigh);
        summary.compact_norm = Some(split.compact_norm);
        summary.certified_bound = Some(split.certified_bound);
        if let Some(min) = e.min_rayleigh_min {
            if mourre.min_rayleigh < min {
                failures.push(Failure {
                    check: "min_rayleigh_min".into(),
                    measured: mourre.min_rayleigh,
                    threshold: min,
                    message: "Mourre form minimum below expectation".into(),
                });
            }
        }
        out.json(
            "mourre.json",
            json!({
                "theta": sp.theta,
                "window": window,
                "modes": mourre.modes,
                "min_rayleigh": mourre.min_rayleigh,
                "box_bracket_min": box_bracket.min_rayleigh,
                "eigensolver_residual": dec.residual(),
                "orthonormality_defect": dec.orthonormality_defect(),
                "compact_split": split,
                "shrink_scan": scan,
                "ac_surrogate": {
                    "candidates": surrogate.candidates,
                    "selected": surrogate.selected.len(),
                    "pass_fraction": surrogate.pass_fraction(),
                    "empty": surrogate.is_empty(),
                },
            }),
        )?;
    }

    let status = if failures.is_empty() { ExitStatus::Ok } else { ExitStatus::AssertionFailed };
    if !failures.is_empty() {
        out.json("failures.json", json!({ "failures": failures }))?;
    }
    let manifest = json!({
        "config_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started_unix,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "status": status.code(),
        "outputs": out.checksums,
        "environment": environment_fingerprint(),
    });
    let mut f = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    f.flush()?;

    Ok(RunOutcome { status, dir: dir.to_path_buf(), config_hash: hash, summary, fits, failures })
}

/// Loads, validates and executes a config file into `<root>/<name>`.
pub fn run_file(path: &Path, out_root: Option<&Path>) -> Result<RunOutcome> {
    let cfg = ExperimentConfig::from_file(path)?;
    let root = resolve_output_root(out_root, &cfg);
    execute(&cfg, &root.join(&cfg.name))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
[geometry]
dim = 1
radius = 200

[potential]
family = zero

[initial]
kind = delta

[moments]
orders = 0, 0.5, 1, 1.5, 2
ball_radii = 0, 25

[times]
start = 1
count = 24

[fit]
window = 10, 60

[expect]
slope_min = 0.95
slope_max = 1.05
";

    #[test]
    fn small_free_run_passes_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(SMALL, "small").unwrap();
        let a = execute(&cfg, &dir.path().join("a")).unwrap();
        let b = execute(&cfg, &dir.path().join("b")).unwrap();
        assert_eq!(a.status, ExitStatus::Ok, "{:?}", a.failures);
        assert!((a.summary.slope.unwrap() - 1.0).abs() < 0.05);
        for f in ["series.csv", "fits.json", "bounds.json", "potential.csv"] {
            let x = std::fs::read(a.dir.join(f)).unwrap();
            let y = std::fs::read(b.dir.join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(a.dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["config_hash"], json!(cfg.hash()));
        assert!(m["outputs"]["series.csv"].is_string());
    }

    #[test]
    fn failed_expectation_writes_failures() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(&SMALL.replace("slope_max = 1.05", "slope_max = 0.5"), "x").unwrap();
        let r = execute(&cfg, dir.path()).unwrap();
        assert_eq!(r.status, ExitStatus::AssertionFailed);
        let text = std::fs::read_to_string(dir.path().join("failures.json")).unwrap();
        assert!(text.contains("slope_max"));
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(ExitStatus::for_error(&Error::NormDrift { drift: 1.0, time: 0.0 }).code(), 3);
        assert_eq!(
            ExitStatus::for_error(&Error::Config { line: 1, field: "x".into(), message: "y".into() }).code(),
            2
        );
    }
}
