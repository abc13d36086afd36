use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ionres_core::config::{Config, ConfigError, RawConfig};
use ionres_core::density::DensityMatrix;
use ionres_core::estimates::{estimate_report, EstimateInputs};
use ionres_core::sweep::{write_csv, SweepPlan};
use ionres_core::{
    bessel_first_zeros, classical_current, propagate, run_sweep, steady_current, validate,
    CurrentResult,
};

/// Periodically driven transport chain: steady currents, trajectories,
/// amplitude sweeps and order-of-magnitude estimates.
#[derive(Parser)]
#[command(name = "ionres", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key; may be repeated, later ones win.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write results here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Print JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Start with a single excitation on this site (1-based) instead of
        /// the empty chain.
        #[arg(long, value_name = "K")]
        site: Option<usize>,
    },
    /// Period-averaged steady current of the quantum model.
    Current {
        #[command(flatten)]
        common: Common,
    },
    /// Period-averaged steady current of the classical rate model.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the drive amplitude for each dephasing rate; writes CSV and a
    /// JSON report.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads (0 = one per core).
        #[arg(long, env = "IONRES_WORKERS", default_value_t = 0)]
        workers: usize,
        /// Where to write the JSON report; defaults to the CSV path with a
        /// `.json` extension, or stdout after the CSV.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Tunnelling, double-well and patch-clamp estimates.
    Estimate {
        #[arg(long)]
        json: bool,
    },
    /// Positive zeros of the Bessel function J_order.
    Bessel {
        #[arg(long)]
        order: u32,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        json: bool,
    },
}

/// Marks failures that exit with code 1; everything else is a failed
/// computation and exits with 2.
fn usage<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.into()))
}

#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_config(common: &Common) -> Result<Config> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::load(path).map_err(usage)?,
        None => RawConfig::default(),
    };
    for assignment in &common.overrides {
        raw.push_override(assignment).map_err(usage)?;
    }
    raw.resolve().map_err(|e: ConfigError| usage(e))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_current(common: &Common, result: &CurrentResult) -> Result<()> {
    let mut out = output(common.out.as_deref())?;
    if common.json {
        serde_json::to_writer_pretty(&mut out, result)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{:.6e}", result.current)?;
        if !result.converged {
            eprintln!(
                "warning: not converged after {} periods (last relative change {:.3e})",
                result.periods_used, result.rel_change_last
            );
        }
    }
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { common, site } => {
            let cfg = load_config(&common)?;
            let spec = validate(cfg.spec).map_err(usage)?;
            let n = spec.chain.n_sites;
            let initial = match site {
                Some(k) if (1..=n).contains(&k) => DensityMatrix::<f64>::site_excitation(n, k),
                Some(k) => return Err(usage(anyhow::anyhow!("--site {k} is outside 1..={n}"))),
                None => DensityMatrix::<f64>::vacuum(n),
            };
            let traj = propagate(&spec, &initial, cfg.horizon, cfg.sample_interval)?;
            let mut out = output(common.out.as_deref())?;
            if common.json {
                let value = serde_json::json!({
                    "times": traj.times,
                    "populations": traj.populations,
                    "incoherence": traj.incoherence,
                    "p_sink": traj.p_sink,
                    "max_trace_error": traj.max_trace_error,
                    "min_eigenvalue": traj.min_eigenvalue,
                });
                serde_json::to_writer(&mut out, &value)?;
                writeln!(out)?;
            } else {
                traj.write_csv(&mut out)?;
            }
            out.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Current { common } => {
            let cfg = load_config(&common)?;
            let spec = validate(cfg.spec).map_err(usage)?;
            let result = steady_current::<f64>(&spec)?;
            print_current(&common, &result)?;
            Ok(exit_for(result.converged))
        }
        Command::Baseline { common } => {
            let cfg = load_config(&common)?;
            let spec = validate(cfg.spec).map_err(usage)?;
            let result = classical_current::<f64>(&spec, cfg.broadening)?;
            print_current(&common, &result)?;
            Ok(exit_for(result.converged))
        }
        Command::Sweep {
            common,
            workers,
            report,
        } => {
            let cfg = load_config(&common)?;
            let plan = SweepPlan::from_settings(cfg.spec, &cfg.sweep, cfg.broadening, workers)
                .map_err(usage)?;
            let outcome = run_sweep(&plan)?;
            let report_path =
                report.or_else(|| common.out.as_ref().map(|p| p.with_extension("json")));
            let mut out = output(common.out.as_deref())?;
            write_csv(&outcome.rows, &mut out)?;
            out.flush()?;
            drop(out);
            let mut rep = output(report_path.as_deref())?;
            serde_json::to_writer_pretty(&mut rep, &outcome.analysis)?;
            writeln!(rep)?;
            rep.flush()?;
            for w in &outcome.analysis.warnings {
                eprintln!("warning: {w}");
            }
            let failed = outcome.rows.iter().filter(|r| !r.converged).count();
            if failed > 0 {
                eprintln!(
                    "warning: {failed} of {} points did not converge",
                    outcome.rows.len()
                );
            }
            Ok(exit_for(failed == 0))
        }
        Command::Estimate { json } => {
            let report = estimate_report(&EstimateInputs::default())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{report}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bessel { order, count, json } => {
            let zeros: Vec<f64> = bessel_first_zeros(order, count);
            if json {
                println!("{}", serde_json::to_string(&zeros)?);
            } else {
                for z in zeros {
                    println!("{z:.6}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for(converged: bool) -> ExitCode {
    if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
