//! Command-line driver.
//!
//! `rd-esprit sweep <config.toml> -o out.csv` runs the Monte-Carlo /
//! analytical sweep described by the config and writes one CSV row per
//! (variant, grid point, output kind). `rd-esprit closed-form --m M` prints
//! the single-source closed forms (MSE·ρ̂ coefficients, bound, efficiency).

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rd_esprit::mse::{
    efficiency_ls, efficiency_sls, single_source_crb, single_source_ls_mse,
    single_source_sls_mse,
};
use rd_esprit::sweep::{emit_csv, load_config, run_sweep, SweepMode};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rd-esprit", about = "ESPRIT-type estimators: sweeps and closed forms", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Snr,
    Geometry,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a TOML config and write a CSV.
    Sweep {
        /// Path to the sweep configuration file.
        config: PathBuf,
        /// Output CSV path.
        #[arg(short, long)]
        output: PathBuf,
        /// Override the trial count from the config.
        #[arg(long)]
        trials: Option<i64>,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the sweep axis (snr or geometry).
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Print single-source closed forms for a uniform array.
    ClosedForm {
        /// Number of sensors (1-D), or of the first dimension with --two-d.
        #[arg(long)]
        m: usize,
        /// Print the structured-least-squares figures instead (1-D only).
        #[arg(long)]
        sls: bool,
        /// Treat the array as M1 x M2 (overrides --m).
        #[arg(long, num_args = 2, value_names = ["M1", "M2"])]
        two_d: Option<Vec<usize>>,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Sweep { config, output, trials, seed, mode } => {
            let mut cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::Snr => SweepMode::Snr,
                    ModeArg::Geometry => SweepMode::Geometry,
                };
            }
            cfg.validate().context("validating config after overrides")?;
            let records = run_sweep(&cfg).context("running sweep")?;
            emit_csv(&records, &output, cfg.mode)
                .with_context(|| format!("writing {}", output.display()))?;
            eprintln!("wrote {} rows to {}", records.len(), output.display());
            Ok(())
        }
        Command::ClosedForm { m, sls, two_d } => {
            // all values are quoted times 1/rho_hat (the effective SNR)
            if let Some(dims) = two_d {
                if sls {
                    bail!("the structured-least-squares closed form is one-dimensional");
                }
                let (m1, m2) = (dims[0], dims[1]);
                if m1 < 2 || m2 < 2 {
                    bail!("each dimension needs at least two sensors");
                }
                let grid = [m1, m2];
                let mse = single_source_ls_mse(&grid, 1.0);
                let crb = single_source_crb(&grid, 1.0);
                println!("geometry: {m1} x {m2} uniform rectangular array, single source");
                for (r, (ms, cb)) in mse.iter().zip(&crb).enumerate() {
                    println!(
                        "mode {}: mse*rho = {:.12e}   crb*rho = {:.12e}   efficiency = {:.9}",
                        r + 1,
                        ms,
                        cb,
                        cb / ms
                    );
                }
                let (mt, ct): (f64, f64) = (mse.iter().sum(), crb.iter().sum());
                println!(
                    "total : mse*rho = {mt:.12e}   crb*rho = {ct:.12e}   efficiency = {:.9}",
                    ct / mt
                );
            } else {
                if m < 2 {
                    bail!("need at least two sensors");
                }
                let crb = single_source_crb(&[m], 1.0)[0];
                println!("geometry: {m}-element uniform linear array, single source");
                if sls {
                    let mse = single_source_sls_mse(m, 1.0);
                    println!("sls  : mse*rho = {mse:.12e}");
                    println!("crb  : crb*rho = {crb:.12e}");
                    println!("eta  : {:.9}", efficiency_sls(m));
                } else {
                    let mse = single_source_ls_mse(&[m], 1.0)[0];
                    println!("ls   : mse*rho = {mse:.12e}");
                    println!("crb  : crb*rho = {crb:.12e}");
                    println!("eta  : {:.9}", efficiency_ls(m));
                }
            }
            Ok(())
        }
    }
}
