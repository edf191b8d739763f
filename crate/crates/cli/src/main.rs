use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use itdloc::Error;

mod commands;
mod config;
mod manifest;

use config::RunConfig;

/// Sound-source localization with a self-rotating two-microphone array.
#[derive(Debug, Parser)]
#[command(name = "itdloc", version)]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// overrides `output_dir`
    #[arg(long, global = true, env = "ITDLOC_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    /// overrides `workers` (0 = all cores)
    #[arg(long, global = true, env = "ITDLOC_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record a rotation ITD series for the configured source
    Simulate {
        /// also record a translation series facing the true source
        #[arg(long)]
        translation: bool,
        /// write the two-channel recording (audio mode only)
        #[arg(long)]
        wav: bool,
    },
    /// Estimate orientation (and optionally distance) from a rotation series
    Localize {
        series: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
        /// translation series recorded while facing the source
        #[arg(long)]
        translation: Option<PathBuf>,
        /// simulate the translation phase for the configured source
        #[arg(long)]
        distance: bool,
    },
    /// Fit the RMSE-to-elevation calibration curve
    Calibrate,
    /// Sweep the observability rank over a state grid
    Observability {
        /// planar, spherical, azimuth-subsystem, elevation-subsystem or distance
        #[arg(long = "system")]
        systems: Vec<String>,
    },
    /// Rerun a simulation table (3-6) and write its summary
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(3..=6))]
        table: u8,
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Localize { .. } => "localize",
            Command::Calibrate => "calibrate",
            Command::Observability { .. } => "observability",
            Command::Reproduce { .. } => "reproduce",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotConverged(_) | Error::Diverged { .. } => 3,
        Error::Io(_) | Error::Wav(_) | Error::SignalAbsent | Error::Ambiguous(_) => 2,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> itdloc::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> itdloc::Result<u8> {
    let cfg = load_config(cli)?;
    let done = match &cli.command {
        Command::Simulate { translation, wav } => commands::simulate(&cfg, *translation, *wav)?,
        Command::Localize {
            series,
            curve,
            translation,
            distance,
        } => commands::localize(
            &cfg,
            series,
            curve.as_deref(),
            translation.as_deref(),
            *distance,
        )?,
        Command::Calibrate => commands::calibrate(&cfg)?,
        Command::Observability { systems } => commands::observability(&cfg, systems)?,
        Command::Reproduce { table, curve } => commands::reproduce(&cfg, *table, curve.as_deref())?,
    };
    // Output directory and worker count do not change results, so they stay out of the hash.
    let mut hashed = cfg.clone();
    hashed.output_dir = PathBuf::new();
    hashed.workers = 0;
    let manifest = done
        .outputs
        .finish(cli.command.name(), &hashed.canonical(), cfg.seed)?;
    println!("manifest: {}", manifest.display());
    match done.not_converged {
        Some(msg) => {
            eprintln!("error: not converged: {msg}");
            Ok(3)
        }
        None => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
