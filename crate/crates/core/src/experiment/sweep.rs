//! Parameter sweeps over one config axis, run on a worker pool.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{execute, ExitStatus, RunSummary};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Power-law decay exponent.
    Alpha,
    /// Anderson disorder strength.
    Lambda,
    /// Mourre window parameter.
    Theta,
    /// Box radius.
    L,
    /// Moment order of the main fit.
    R,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "lambda" => Ok(SweepAxis::Lambda),
            "theta" => Ok(SweepAxis::Theta),
            "L" | "l" | "radius" => Ok(SweepAxis::L),
            "r" => Ok(SweepAxis::R),
            other => Err(Error::Config {
                line: 0,
                field: "axis".into(),
                message: format!("unknown sweep axis `{other}` (expected alpha, lambda, theta, L or r)"),
            }),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Theta => "theta",
            SweepAxis::L => "L",
            SweepAxis::R => "r",
        })
    }
}

fn axis_error(axis: SweepAxis, message: impl Into<String>) -> Error {
    Error::Config { line: 0, field: format!("axis {axis}"), message: message.into() }
}

/// Copy of `cfg` with the axis set to `value`, validated.
pub fn apply_axis(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Alpha => match &mut c.potential {
            PotentialSpec::PowerLaw { alpha, .. } => *alpha = value,
            _ => return Err(axis_error(axis, "requires a power_law potential")),
        },
        SweepAxis::Lambda => match &mut c.potential {
            PotentialSpec::Anderson { lambda, .. } => *lambda = value,
            _ => return Err(axis_error(axis, "requires an anderson potential")),
        },
        SweepAxis::Theta => match &mut c.spectral {
            Some(s) => s.theta = value,
            None => return Err(axis_error(axis, "requires a [spectral] section")),
        },
        SweepAxis::L => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(axis_error(axis, format!("box radius must be a positive integer, got {value}")));
            }
            c.geometry.radius = value as usize;
        }
        SweepAxis::R => {
            if !c.moments.orders.contains(&value) {
                c.moments.orders.push(value);
                c.moments.orders.sort_by(f64::total_cmp);
            }
            c.fit.order = value;
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: ExitStatus,
    pub summary: RunSummary,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub config_hash: String,
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        writeln!(out, "# config_hash={} axis={}", self.config_hash, self.axis)?;
        writeln!(
            out,
            "value,status,slope,ratio_min,ratio_max,min_rayleigh,compact_norm,certified_bound,message"
        )?;
        for r in &self.rows {
            let s = &r.summary;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},\"{}\"",
                fmt_f64(r.value),
                r.status.code(),
                opt(s.slope),
                opt(s.ratio_min),
                opt(s.ratio_max),
                opt(s.min_rayleigh),
                opt(s.compact_norm),
                opt(s.certified_bound),
                r.message.replace('"', "'")
            )?;
        }
        Ok(())
    }

    /// Worst exit status over the grid.
    pub fn status(&self) -> ExitStatus {
        self.rows
            .iter()
            .map(|r| r.status)
            .max_by_key(|s| match s {
                ExitStatus::Ok => 0,
                ExitStatus::AssertionFailed => 1,
                ExitStatus::NumericalAbort => 2,
                ExitStatus::ConfigError => 3,
            })
            .unwrap_or(ExitStatus::Ok)
    }
}

fn point_label(axis: SweepAxis, value: f64) -> String {
    format!("{axis}={}", fmt_f64(value))
}

/// Runs every grid point into `<root>/<name>-sweep-<axis>/<axis>=<value>` and
/// writes `sweep.csv` next to them. Per-point failures are recorded in-row.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    workers: usize,
    root: &Path,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(axis_error(axis, "empty axis grid"));
    }
    let dir = root.join(format!("{}-sweep-{axis}", cfg.name));
    std::fs::create_dir_all(&dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        values
            .par_iter()
            .map(|&value| {
                let outcome = apply_axis(cfg, axis, value)
                    .and_then(|c| execute(&c, &dir.join(point_label(axis, value))));
                match outcome {
                    Ok(o) => SweepRow {
                        value,
                        status: o.status,
                        message: o.failures.iter().map(|f| f.check.clone()).collect::<Vec<_>>().join(";"),
                        summary: o.summary,
                    },
                    Err(e) => SweepRow {
                        value,
                        status: ExitStatus::for_error(&e),
                        summary: RunSummary::default(),
                        message: e.to_string(),
                    },
                }
            })
            .collect()
    });
    let report = SweepReport { axis, config_hash: cfg.hash(), dir: dir.clone(), rows };
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("sweep.csv"))?);
    report.write_csv(&mut f)?;
    f.flush()?;
    Ok(report)
}
