use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lattice_transport::experiment::{
    self, resolve_output_root, run_file, ExitStatus, ExperimentConfig, Suite, SweepAxis,
};
use lattice_transport::fmt_f64;

#[derive(Parser)]
#[command(name = "lattice-transport", version, about = "Transport diagnostics for discrete Schrödinger operators")]
struct Cli {
    /// Output root. Falls back to the config's `run.output`, then
    /// `$LATTICE_TRANSPORT_OUT`, then `./runs`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config.
    Run { config: PathBuf },
    /// Run a verification suite: operators, propagation, spectral, transport or all.
    Verify { suite: String },
    /// Run a config over a grid of values on one axis.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "-".into())
}

fn fail(status: ExitStatus, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run { config } => match run_file(&config, cli.out.as_deref()) {
            Ok(o) => {
                println!("config_hash {}", o.config_hash);
                println!("output      {}", o.dir.display());
                for f in &o.fits {
                    println!(
                        "fit r={} slope={:.4} ratio=[{:.4}, {:.4}] ballistic={}",
                        f.r, f.slope, f.ratio_min, f.ratio_max, f.ballistic
                    );
                }
                if let Some(m) = o.summary.min_rayleigh {
                    println!("mourre min  {m:.6}  certified {}", opt(o.summary.certified_bound));
                }
                for f in &o.failures {
                    println!("FAIL {}: measured {} threshold {} ({})", f.check, f.measured, f.threshold, f.message);
                }
                println!("status      {}", o.status.code());
                ExitCode::from(o.status.code() as u8)
            }
            Err(e) => fail(ExitStatus::for_error(&e), e),
        },
        Command::Verify { suite } => {
            let suite: Suite = match suite.parse() {
                Ok(s) => s,
                Err(e) => return fail(ExitStatus::ConfigError, e),
            };
            let checks = experiment::verify(suite, |c| println!("{c}"));
            let failed = checks.iter().filter(|c| c.verdict == experiment::Verdict::Fail).count();
            println!("{} checks, {failed} failed", checks.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(ExitStatus::AssertionFailed.code() as u8)
            }
        }
        Command::Sweep { config, axis, values } => {
            let axis: SweepAxis = match axis.parse() {
                Ok(a) => a,
                Err(e) => return fail(ExitStatus::ConfigError, e),
            };
            let cfg = match ExperimentConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => return fail(ExitStatus::for_error(&e), e),
            };
            let root = resolve_output_root(cli.out.as_deref(), &cfg);
            match experiment::sweep(&cfg, axis, &values, cli.workers, &root) {
                Ok(report) => {
                    println!("{axis:>8} status slope min_rayleigh certified");
                    for r in &report.rows {
                        println!(
                            "{:>8} {:>6} {} {} {} {}",
                            fmt_f64(r.value),
                            r.status.code(),
                            opt(r.summary.slope),
                            opt(r.summary.min_rayleigh),
                            opt(r.summary.certified_bound),
                            r.message
                        );
                    }
                    println!("output {}", report.dir.display());
                    ExitCode::from(report.status().code() as u8)
                }
                Err(e) => fail(ExitStatus::for_error(&e), e),
            }
        }
    }
}
