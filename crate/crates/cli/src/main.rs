//! `covlab`: run kernel studies from a JSON config and/or flags, writing CSV,
//! plot data (`.dat`) and a `manifest.json` that reproduces the run.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical instability,
//! 4 I/O failure, 1 anything else.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, RunConfig, Study, OUT_ENV};
use run::OutSource;

#[derive(Parser)]
#[command(name = "covlab", version, about = "Width/depth limits of the neural covariance kernel")]
struct Cli {
    #[command(subcommand)]
    study: Command,

    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed (default 42).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for Monte Carlo trials.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory (default: $COVLAB_OUT, then ./covlab-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Trials per grid cell.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,

    /// Widths, comma separated.
    #[arg(long = "n-list", global = true, value_delimiter = ',', value_name = "N,...")]
    n_list: Option<Vec<usize>>,

    /// Depths, comma separated.
    #[arg(long = "l-list", global = true, value_delimiter = ',', value_name = "L,...")]
    l_list: Option<Vec<usize>>,

    /// Input correlation (theory study; d = 2 unit pair elsewhere).
    #[arg(long, global = true, allow_negative_numbers = true)]
    c0: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Dual function table, covariance flow and Euler traces.
    Theory,
    /// Per-layer Monte Carlo kernels of one network shape.
    Simulate,
    /// Monte Carlo statistics over an (n, L) grid.
    Grid,
    /// Depth convergence rate of the width-first kernel to the flow.
    DepthRate,
    /// Width convergence rate of the finite network to the flow.
    WidthRate,
    /// Distribution of the kernel in the proportional regime L = n.
    Joint,
}

impl Command {
    fn study(self) -> Study {
        match self {
            Command::Theory => Study::Theory,
            Command::Simulate => Study::Simulate,
            Command::Grid => Study::Grid,
            Command::DepthRate => Study::DepthRate,
            Command::WidthRate => Study::WidthRate,
            Command::Joint => Study::Joint,
        }
    }
}

fn configure(cli: &Cli) -> Result<(RunConfig, OutSource), ConfigError> {
    let file = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        study: Some(cli.study.study()),
        master_seed: cli.seed,
        workers: cli.workers,
        output_dir: cli.out.clone(),
        trials: cli.trials,
        n_list: cli.n_list.clone(),
        l_list: cli.l_list.clone(),
        c0: cli.c0,
        ..RunConfig::default()
    };
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let source = if cli.out.is_some() {
        OutSource::Flag
    } else if file.output_dir.is_some() {
        OutSource::File
    } else if env_out.is_some() {
        OutSource::Env
    } else {
        OutSource::Default
    };
    let cfg = file.overlay(flags)?.resolved(env_out)?;
    Ok((cfg, source))
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let (cfg, source) = configure(cli)?;
    let config_file = cli.config.as_ref().map(|p| p.display().to_string());
    let outcome = run::run(&cfg, config_file.as_deref(), source)?;
    let written = output::write_atomically(cfg.out_dir(), &outcome.artifacts)?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!("{}", serde_json::to_string_pretty(&outcome.results)?);
    Ok(())
}

/// Exit code and a kind label for the error line.
fn classify(err: &anyhow::Error) -> (u8, &'static str, Option<String>) {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<ConfigError>() {
            return (2, "config", Some(c.key.clone()));
        }
        if let Some(e) = cause.downcast_ref::<covlab::Error>() {
            if e.is_instability() {
                return (3, "instability", None);
            }
            if let covlab::Error::Invalid { key, .. } = e {
                return (2, "config", Some(key.clone()));
            }
            return (1, "domain", None);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (4, "io", None);
        }
    }
    (1, "internal", None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind, key) = classify(&e);
            let line = json!({ "error": { "kind": kind, "key": key, "message": format!("{e:#}") } });
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}
