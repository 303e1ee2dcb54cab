//! `gpiwt`: data generation, calibration, training, reconstruction,
//! evaluation and self-verification for the unrolled k-space interpolator.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 I/O or file-format error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gpiwt::data::Split;
use gpiwt::verify::Fault;
use gpiwt::Error;

use commands::ReconOptions;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "gpiwt", version, about = "Unrolled white-box transformer for multi-coil k-space interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the training and test datasets.
    GenData {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Calibrate one SPIRiT kernel per slice from its ACS block.
    Calibrate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Train the cascade and write the best-loss checkpoint.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Reconstruct every slice of a dataset.
    Reconstruct {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset directory (defaults to paths.test).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the zero-filled k-space instead of running the cascade.
        #[arg(long)]
        zero_fill: bool,
    },
    /// Score reconstructions against a reference dataset.
    Eval {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Directory of `slice_NNN.recon.cks` files.
        #[arg(long)]
        test: Option<PathBuf>,
        /// CSV destination (defaults to paths.reports/metrics.csv, or stdout
        /// without a config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the numerical self-check suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Gradient,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::ShapeMismatch { .. }
        | Error::Precondition(_)
        | Error::InfeasibleMask { .. }
        | Error::UnsupportedSize(_) => 1,
        Error::NonFinite(_)
        | Error::NotPositiveDefinite { .. }
        | Error::NotHermitian(_)
        | Error::NoConvergence(_)
        | Error::Calibration(_) => 2,
        Error::Io(_) | Error::Format(_) | Error::Truncated { .. } => 3,
    }
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidArgument(format!("cannot read config {}: {io}", path.display())),
        e => e,
    })
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::GenData { config } => commands::gen_data(&load(&config)?)?,
        Command::Calibrate { config, split } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            commands::calibrate_kernels(&load(&config)?, split)?
        }
        Command::Train { config } => commands::train(&load(&config)?)?,
        Command::Reconstruct {
            config,
            checkpoint,
            input,
            output,
            zero_fill,
        } => commands::reconstruct(
            &load(&config)?,
            &ReconOptions {
                checkpoint,
                input,
                output,
                zero_fill,
            },
        )?,
        Command::Eval {
            config,
            reference,
            test,
            out,
        } => {
            let cfg = config.as_deref().map(load).transpose()?;
            let missing = |what: &str| Error::InvalidArgument(format!("eval needs --{what} or a config"));
            let reference = reference
                .or_else(|| cfg.as_ref().map(|c| c.paths.test.clone()))
                .ok_or_else(|| missing("reference"))?;
            let test = test
                .or_else(|| cfg.as_ref().map(|c| c.paths.recon.clone()))
                .ok_or_else(|| missing("test"))?;
            let csv = commands::eval(&reference, &test)?;
            match out.or_else(|| cfg.as_ref().map(|c| c.paths.reports.join("metrics.csv"))) {
                Some(path) => {
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    std::fs::write(&path, csv)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Verify { seed, out, inject_fault } => {
            let fault = match inject_fault {
                Some(FaultArg::Gradient) => Fault::Gradient,
                None => Fault::None,
            };
            return commands::verify(seed, fault, out.as_deref());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
