//! Line-oriented `key = value` configuration with `[sections]`.
//!
//! ```text
//! [geometry]
//! dim = 1
//! radius = 2048
//!
//! [potential]
//! family = power_law
//! c = 1
//! alpha = 2
//! ```
//!
//! `#` starts a comment. Lists are comma separated. Every error carries the
//! line number and the field name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::lattice::BoxGeometry;
use crate::operators::DEFAULT_DENSE_CAP;
use crate::potentials::PotentialSpec;
use crate::propagation::{light_cone_horizon, DEFAULT_TOLERANCE};
use crate::transport::{DEFAULT_SLOPE_TOLERANCE, MAX_ORDER};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryConfig {
    pub dim: usize,
    pub radius: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialConfig {
    Delta { site: Vec<i64> },
    Gaussian { center: Vec<f64>, width: f64, momentum: Vec<f64> },
    File { path: PathBuf },
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeEnd {
    Horizon,
    At(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimesConfig {
    pub start: f64,
    pub end: TimeEnd,
    pub count: usize,
    pub spacing: Spacing,
    pub safety: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentsConfig {
    pub orders: Vec<f64>,
    pub ball_radii: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    /// Defaults to `[10, 0.8·t_max]`.
    pub window: Option<(f64, f64)>,
    pub tolerance: f64,
    /// Order whose fit is checked against the expectations.
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagatorConfig {
    pub tau: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralConfig {
    pub theta: f64,
    pub e0: f64,
    pub delta_grid: Vec<f64>,
    pub ipr_threshold: f64,
    pub boundary_threshold: f64,
    pub dense_cap: usize,
}

/// Hard assertions checked by `run`; absent fields are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Expectations {
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
    pub ratio_spread_max: Option<f64>,
    pub ball_sup_min: Option<f64>,
    pub min_rayleigh_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub geometry: GeometryConfig,
    pub potential: PotentialSpec,
    pub initial: InitialConfig,
    pub moments: MomentsConfig,
    pub times: Option<TimesConfig>,
    pub fit: FitConfig,
    pub propagator: PropagatorConfig,
    pub spectral: Option<SpectralConfig>,
    pub expect: Expectations,
    /// Source line of each `section` and `section.key`; ignored by equality.
    #[serde(skip)]
    pub lines: FieldLines,
}

#[derive(Debug, Clone, Default)]
pub struct FieldLines(BTreeMap<String, usize>);

impl PartialEq for FieldLines {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl FieldLines {
    /// Line of `field`, falling back to its section, else 0.
    pub fn line_of(&self, field: &str) -> usize {
        self.0
            .get(field)
            .or_else(|| field.split('.').next().and_then(|s| self.0.get(s)))
            .copied()
            .unwrap_or(0)
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Raw {
    sections: BTreeMap<String, Section>,
}

fn config_error(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config { line, field: field.to_string(), message: message.into() }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["name", "seed", "output"]),
    ("geometry", &["dim", "radius"]),
    ("potential", &["family", "c", "alpha", "k", "lambda", "seed", "pattern"]),
    ("initial", &["kind", "site", "center", "width", "momentum", "path"]),
    ("moments", &["orders", "ball_radii"]),
    ("times", &["start", "end", "count", "spacing", "safety"]),
    ("fit", &["window", "tolerance", "order"]),
    ("propagator", &["tau", "tolerance"]),
    ("spectral", &["theta", "e0", "delta_grid", "ipr_threshold", "boundary_threshold", "dense_cap"]),
    ("expect", &["slope_min", "slope_max", "ratio_spread_max", "ball_sup_min", "min_rayleigh_min"]),
];

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn lex(text: &str) -> Result<Raw> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (k, raw_line) in text.lines().enumerate() {
        let line = k + 1;
        let body = strip_comment(raw_line).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| config_error(line, body, "unterminated section header"))?
                .trim()
                .to_string();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(config_error(line, &name, "unknown section"));
            }
            if sections.contains_key(&name) {
                return Err(config_error(line, &name, "duplicate section"));
            }
            sections.insert(name.clone(), Section { line, entries: BTreeMap::new() });
            current = Some(name);
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| config_error(line, body, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let section = current
            .as_ref()
            .ok_or_else(|| config_error(line, &key, "key outside of any section"))?;
        let allowed = SECTIONS.iter().find(|(s, _)| s == section).expect("known").1;
        if !allowed.contains(&key.as_str()) {
            return Err(config_error(line, &format!("{section}.{key}"), "unknown key"));
        }
        let entries = &mut sections.get_mut(section).expect("inserted").entries;
        if entries.contains_key(&key) {
            return Err(config_error(line, &format!("{section}.{key}"), "duplicate key"));
        }
        entries.insert(key, Entry { line, value: value.trim().to_string() });
    }
    Ok(Raw { sections })
}

struct Reader<'a> {
    name: &'a str,
    section: Option<&'a Section>,
}

impl<'a> Reader<'a> {
    fn field(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn line(&self) -> usize {
        self.section.map_or(0, |s| s.line)
    }

    fn raw(&self, key: &str) -> Option<&'a Entry> {
        self.section.and_then(|s| s.entries.get(key))
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| config_error(e.line, &self.field(key), format!("cannot parse `{}`", e.value))),
        }
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T> {
        self.opt(key)?
            .ok_or_else(|| config_error(self.line(), &self.field(key), "missing required field"))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>()
                        .map_err(|_| config_error(e.line, &self.field(key), format!("cannot parse list item `{s}`")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn error(&self, key: &str, message: impl Into<String>) -> Error {
        let line = self.raw(key).map_or(self.line(), |e| e.line);
        config_error(line, &self.field(key), message)
    }
}

impl Raw {
    fn field_lines(&self) -> FieldLines {
        let mut map = BTreeMap::new();
        for (name, sec) in &self.sections {
            map.insert(name.clone(), sec.line);
            for (key, e) in &sec.entries {
                map.insert(format!("{name}.{key}"), e.line);
            }
        }
        FieldLines(map)
    }

    fn reader<'a>(&'a self, name: &'a str) -> Reader<'a> {
        Reader { name, section: self.sections.get(name) }
    }
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn parse(text: &str, default_name: &str) -> Result<Self> {
        let cfg = Self::parse_unvalidated(text, default_name)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        let mut cfg = Self::parse_unvalidated(&text, stem)?;
        if let InitialConfig::File { path: p } = &mut cfg.initial {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_unvalidated(text: &str, default_name: &str) -> Result<Self> {
        let raw = lex(text)?;
        for required in ["geometry", "potential", "initial"] {
            if !raw.sections.contains_key(required) {
                return Err(config_error(0, required, "missing required section"));
            }
        }

        let run = raw.reader("run");
        let name = run.opt::<String>("name")?.unwrap_or_else(|| default_name.to_string());
        let seed = run.opt("seed")?.unwrap_or(0);
        let output = run.opt::<String>("output")?.map(PathBuf::from);

        let g = raw.reader("geometry");
        let geometry = GeometryConfig { dim: g.req("dim")?, radius: g.req("radius")? };

        let p = raw.reader("potential");
        let family: String = p.req("family")?;
        let potential = match family.as_str() {
            "zero" => PotentialSpec::Zero,
            "power_law" => PotentialSpec::PowerLaw { c: p.req("c")?, alpha: p.req("alpha")? },
            "wigner_von_neumann" => PotentialSpec::WignerVonNeumann { c: p.req("c")?, k: p.req("k")? },
            "anderson" => PotentialSpec::Anderson { lambda: p.req("lambda")?, seed: p.opt("seed")?.unwrap_or(seed) },
            "periodic" => PotentialSpec::Periodic {
                pattern: p.list("pattern")?.ok_or_else(|| p.error("pattern", "missing required field"))?,
            },
            other => return Err(p.error("family", format!("unknown potential family `{other}`"))),
        };

        let i = raw.reader("initial");
        let kind: String = i.req("kind")?;
        let d = geometry.dim;
        let initial = match kind.as_str() {
            "delta" => InitialConfig::Delta { site: i.list("site")?.unwrap_or_else(|| vec![0; d]) },
            "gaussian" => InitialConfig::Gaussian {
                center: i.list("center")?.unwrap_or_else(|| vec![0.0; d]),
                width: i.req("width")?,
                momentum: i
                    .list("momentum")?
                    .unwrap_or_else(|| vec![std::f64::consts::FRAC_PI_2; d]),
            },
            "file" => InitialConfig::File { path: PathBuf::from(i.req::<String>("path")?) },
            "random" => InitialConfig::Random,
            other => return Err(i.error("kind", format!("unknown initial state kind `{other}`"))),
        };

        let m = raw.reader("moments");
        let moments = MomentsConfig {
            orders: m.list("orders")?.unwrap_or_else(|| vec![0.0, 0.5, 1.0, 1.5, 2.0]),
            ball_radii: m.list("ball_radii")?.unwrap_or_else(|| vec![25]),
        };

        let times = if raw.sections.contains_key("times") {
            let t = raw.reader("times");
            let end = match t.opt::<String>("end")?.as_deref() {
                None | Some("horizon") => TimeEnd::Horizon,
                Some(v) => TimeEnd::At(v.parse().map_err(|_| t.error("end", "expected `horizon` or a number"))?),
            };
            let spacing = match t.opt::<String>("spacing")?.as_deref() {
                None | Some("log") => Spacing::Log,
                Some("linear") => Spacing::Linear,
                Some(other) => return Err(t.error("spacing", format!("unknown spacing `{other}`"))),
            };
            Some(TimesConfig {
                start: t.opt("start")?.unwrap_or(1.0),
                end,
                count: t.opt("count")?.unwrap_or(64),
                spacing,
                safety: t.opt("safety")?.unwrap_or(0.9),
            })
        } else {
            None
        };

        let f = raw.reader("fit");
        let window = match f.list::<f64>("window")? {
            None => None,
            Some(w) if w.len() == 2 => Some((w[0], w[1])),
            Some(_) => return Err(f.error("window", "expected two numbers `t_lo, t_hi`")),
        };
        let fit = FitConfig {
            window,
            tolerance: f.opt("tolerance")?.unwrap_or(DEFAULT_SLOPE_TOLERANCE),
            order: f.opt("order")?.unwrap_or(1.0),
        };

        let pr = raw.reader("propagator");
        let propagator = PropagatorConfig {
            tau: pr.opt("tau")?,
            tolerance: pr.opt("tolerance")?.unwrap_or(DEFAULT_TOLERANCE),
        };

        let spectral = if raw.sections.contains_key("spectral") {
            let s = raw.reader("spectral");
            Some(SpectralConfig {
                theta: s.req("theta")?,
                e0: s.opt("e0")?.unwrap_or(0.0),
                delta_grid: s.list("delta_grid")?.unwrap_or_default(),
                ipr_threshold: s.opt("ipr_threshold")?.unwrap_or(0.05),
                boundary_threshold: s.opt("boundary_threshold")?.unwrap_or(0.1),
                dense_cap: s.opt("dense_cap")?.unwrap_or(DEFAULT_DENSE_CAP),
            })
        } else {
            None
        };

        let e = raw.reader("expect");
        let expect = Expectations {
            slope_min: e.opt("slope_min")?,
            slope_max: e.opt("slope_max")?,
            ratio_spread_max: e.opt("ratio_spread_max")?,
            ball_sup_min: e.opt("ball_sup_min")?,
            min_rayleigh_min: e.opt("min_rayleigh_min")?,
        };

        Ok(ExperimentConfig {
            name,
            seed,
            output,
            geometry,
            potential,
            initial,
            moments,
            times,
            fit,
            propagator,
            spectral,
            expect,
            lines: raw.field_lines(),
        })
    }

    /// Support radius of the initial state, when known without realizing it.
    fn initial_support(&self) -> i64 {
        match &self.initial {
            InitialConfig::Delta { site } => site.iter().map(|x| x.abs()).max().unwrap_or(0),
            InitialConfig::Gaussian { center, width, .. } => {
                let c = center.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                (c + crate::lattice::GAUSSIAN_CUTOFF_WIDTHS * width).ceil() as i64
            }
            InitialConfig::File { .. } | InitialConfig::Random => 0,
        }
    }

    /// Light-cone horizon for this config.
    pub fn horizon(&self) -> Result<f64> {
        let g = BoxGeometry::new(self.geometry.dim, self.geometry.radius)?;
        let safety = self.times.as_ref().map_or(0.9, |t| t.safety);
        light_cone_horizon(&g, self.initial_support(), safety)
    }

    /// Sample times `[0, t_1, …, t_end]`.
    pub fn sample_times(&self) -> Result<Vec<f64>> {
        let Some(t) = &self.times else {
            return Ok(Vec::new());
        };
        let end = match t.end {
            TimeEnd::Horizon => self.horizon()?,
            TimeEnd::At(v) => v,
        };
        let grid = match t.spacing {
            Spacing::Log => crate::transport::log_time_grid(t.start, end, t.count)?,
            Spacing::Linear => crate::transport::linear_time_grid(t.start, end, t.count)?,
        };
        let mut times = vec![0.0];
        times.extend(grid.into_iter().filter(|&x| x > 0.0));
        Ok(times)
    }

    pub fn fit_window(&self) -> Result<(f64, f64)> {
        match self.fit.window {
            Some(w) => Ok(w),
            None => Ok((10.0, 0.8 * self.horizon()?)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(config_error(self.lines.line_of(field), field, msg));
        let g = match BoxGeometry::new(self.geometry.dim, self.geometry.radius) {
            Ok(g) => g,
            Err(e) => return err("geometry", e.to_string()),
        };
        if let Err(e) = self.potential.validate(&g) {
            return err("potential", e.to_string());
        }
        match &self.initial {
            InitialConfig::Delta { site } => {
                if site.len() != self.geometry.dim || g.index_of(site).is_none() {
                    return err("initial.site", format!("site {site:?} is not a site of the box"));
                }
            }
            InitialConfig::Gaussian { center, width, momentum } => {
                if center.len() != self.geometry.dim || momentum.len() != self.geometry.dim {
                    return err("initial.center", "center and momentum need one entry per axis".into());
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return err("initial.width", "width must be positive".into());
                }
            }
            InitialConfig::File { .. } | InitialConfig::Random => {}
        }
        for &r in &self.moments.orders {
            if !(r.is_finite() && (0.0..=MAX_ORDER).contains(&r)) {
                return err("moments.orders", format!("order {r} outside [0, {MAX_ORDER}]"));
            }
        }
        let tol = |field: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                err(field, format!("tolerance {v} must lie in (0,1)"))
            }
        };
        tol("fit.tolerance", self.fit.tolerance)?;
        tol("propagator.tolerance", self.propagator.tolerance)?;
        if let Some(tau) = self.propagator.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return err("propagator.tau", "tau must be positive".into());
            }
        }
        if let Some(t) = &self.times {
            if !(t.safety > 0.0 && t.safety < 1.0) {
                return err("times.safety", format!("safety {} must lie in (0,1)", t.safety));
            }
            if t.count < 2 {
                return err("times.count", "at least two sample times required".into());
            }
            let horizon = match self.horizon() {
                Ok(h) => h,
                Err(e) => return err("times", format!("horizon rule unsatisfiable: {e}")),
            };
            if let TimeEnd::At(end) = t.end {
                if end > horizon {
                    return err(
                        "times.end",
                        format!("t = {end} exceeds the light-cone horizon t_max = {horizon} (horizon rule)"),
                    );
                }
            }
            let end = match t.end {
                TimeEnd::Horizon => horizon,
                TimeEnd::At(v) => v,
            };
            if !(t.start > 0.0 && t.start < end) {
                return err("times.start", format!("start {} must lie in (0, {end})", t.start));
            }
            let (lo, hi) = self.fit_window()?;
            if !(lo >= 1.0 && hi > lo && hi <= end) {
                return err("fit.window", format!("window [{lo}, {hi}] must satisfy 1 <= t_lo < t_hi <= {end}"));
            }
            if !(self.fit.order > 0.0 && self.moments.orders.contains(&self.fit.order)) {
                return err("fit.order", format!("order {} must be positive and listed in moments.orders", self.fit.order));
            }
        }
        if let Some(s) = &self.spectral {
            if g.total_sites() > s.dense_cap {
                return err(
                    "spectral.dense_cap",
                    format!("{} sites exceed the dense cap {}", g.total_sites(), s.dense_cap),
                );
            }
            let edge = 2.0 * self.geometry.dim as f64;
            if !(s.theta > 0.0 && s.theta <= edge) {
                return err("spectral.theta", format!("theta must lie in (0, {edge}]"));
            }
            tol("spectral.ipr_threshold", s.ipr_threshold)?;
            tol("spectral.boundary_threshold", s.boundary_threshold)?;
            if s.delta_grid.iter().any(|&d| !(d > 0.0)) {
                return err("spectral.delta_grid", "deltas must be positive".into());
            }
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let list_f = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[run]\nname = {}\nseed = {}", self.name, self.seed);
        if let Some(o) = &self.output {
            let _ = writeln!(s, "output = {}", o.display());
        }
        let _ = writeln!(s, "\n[geometry]\ndim = {}\nradius = {}", self.geometry.dim, self.geometry.radius);
        let _ = writeln!(s, "\n[potential]\nfamily = {}", self.potential.family_name());
        match &self.potential {
            PotentialSpec::Zero => {}
            PotentialSpec::PowerLaw { c, alpha } => {
                let _ = writeln!(s, "c = {}\nalpha = {}", fmt_f64(*c), fmt_f64(*alpha));
            }
            PotentialSpec::WignerVonNeumann { c, k } => {
                let _ = writeln!(s, "c = {}\nk = {}", fmt_f64(*c), fmt_f64(*k));
            }
            PotentialSpec::Anderson { lambda, seed } => {
                let _ = writeln!(s, "lambda = {}\nseed = {}", fmt_f64(*lambda), seed);
            }
            PotentialSpec::Periodic { pattern } => {
                let _ = writeln!(s, "pattern = {}", list_f(pattern));
            }
        }
        s.push_str("\n[initial]\n");
        match &self.initial {
            InitialConfig::Delta { site } => {
                let site: Vec<String> = site.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(s, "kind = delta\nsite = {}", site.join(", "));
            }
            InitialConfig::Gaussian { center, width, momentum } => {
                let _ = writeln!(
                    s,
                    "kind = gaussian\ncenter = {}\nwidth = {}\nmomentum = {}",
                    list_f(center),
                    fmt_f64(*width),
                    list_f(momentum)
                );
            }
            InitialConfig::File { path } => {
                let _ = writeln!(s, "kind = file\npath = {}", path.display());
            }
            InitialConfig::Random => s.push_str("kind = random\n"),
        }
        let radii: Vec<String> = self.moments.ball_radii.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(
            s,
            "\n[moments]\norders = {}\nball_radii = {}",
            list_f(&self.moments.orders),
            radii.join(", ")
        );
        if let Some(t) = &self.times {
            let end = match t.end {
                TimeEnd::Horizon => "horizon".to_string(),
                TimeEnd::At(v) => fmt_f64(v),
            };
            let spacing = match t.spacing {
                Spacing::Log => "log",
                Spacing::Linear => "linear",
            };
            let _ = writeln!(
                s,
                "\n[times]\nstart = {}\nend = {end}\ncount = {}\nspacing = {spacing}\nsafety = {}",
                fmt_f64(t.start),
                t.count,
                fmt_f64(t.safety)
            );
        }
        s.push_str("\n[fit]\n");
        if let Some((lo, hi)) = self.fit.window {
            let _ = writeln!(s, "window = {}, {}", fmt_f64(lo), fmt_f64(hi));
        }
        let _ = writeln!(s, "tolerance = {}\norder = {}", fmt_f64(self.fit.tolerance), fmt_f64(self.fit.order));
        s.push_str("\n[propagator]\n");
        if let Some(tau) = self.propagator.tau {
            let _ = writeln!(s, "tau = {}", fmt_f64(tau));
        }
        let _ = writeln!(s, "tolerance = {}", fmt_f64(self.propagator.tolerance));
        if let Some(sp) = &self.spectral {
            let _ = writeln!(
                s,
                "\n[spectral]\ntheta = {}\ne0 = {}",
                fmt_f64(sp.theta),
                fmt_f64(sp.e0)
            );
            if !sp.delta_grid.is_empty() {
                let _ = writeln!(s, "delta_grid = {}", list_f(&sp.delta_grid));
            }
            let _ = writeln!(
                s,
                "ipr_threshold = {}\nboundary_threshold = {}\ndense_cap = {}",
                fmt_f64(sp.ipr_threshold),
                fmt_f64(sp.boundary_threshold),
                sp.dense_cap
            );
        }
        let e = &self.expect;
        let fields = [
            ("slope_min", e.slope_min),
            ("slope_max", e.slope_max),
            ("ratio_spread_max", e.ratio_spread_max),
            ("ball_sup_min", e.ball_sup_min),
            ("min_rayleigh_min", e.min_rayleigh_min),
        ];
        if fields.iter().any(|(_, v)| v.is_some()) {
            s.push_str("\n[expect]\n");
            for (k, v) in fields {
                if let Some(v) = v {
                    let _ = writeln!(s, "{k} = {}", fmt_f64(v));
                }
            }
        }
        s
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.serialize().as_bytes()))
    }
}
