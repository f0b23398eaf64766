//! Command-line experiment runner.
//!
//! `rds-dichotomy {ou-check|robustness|hyperbolic|wave} --config <file> [--out <dir>] [--seed <n>]`
//!
//! Exit status is [`EXIT_OK`] when every check holds, [`EXIT_FAILURE`] when a
//! certificate, threshold or diagnostic fails, and [`EXIT_USAGE`] for bad
//! arguments or configuration files.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use commands::{hyperbolic_rows, HyperbolicRow, Outcome};
pub use config::{Command, ExperimentConfig, InjectedPath, Kappa, ModelChoice};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sub {
    OuCheck,
    Robustness,
    Hyperbolic,
    Wave,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::OuCheck => Command::OuCheck,
            Sub::Robustness => Command::Robustness,
            Sub::Hyperbolic => Command::Hyperbolic,
            Sub::Wave => Command::Wave,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rds-dichotomy", about = "Dichotomy, robustness and random hyperbolic solution experiments")]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

/// Loads the configuration and applies the command-line overrides.
pub fn load_config(
    command: Command,
    text: &str,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::parse(text)?;
    match cfg.command {
        Some(c) if c != command => {
            return Err(Error::Config(format!(
                "field `command`: file is for `{}`, invoked as `{}`",
                c.name(),
                command.name()
            )))
        }
        _ => cfg.command = Some(command),
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Runs one command, writing its outputs into `out`.
pub fn execute(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<Outcome> {
    std::fs::create_dir_all(out)?;
    match cfg.command {
        Some(Command::OuCheck) => commands::ou_check(cfg, out),
        Some(Command::Robustness) => commands::robustness(cfg, out),
        Some(Command::Hyperbolic) => commands::hyperbolic(cfg, out),
        Some(Command::Wave) => commands::wave(cfg, out),
        None => Err(Error::Config("no command given".into())),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let command = Command::from(args.command);
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return EXIT_USAGE;
        }
    };
    let cfg = match load_config(command, &text, args.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return EXIT_USAGE;
        }
    };
    let out = args
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match execute(&cfg, &out) {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if o.passed {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
