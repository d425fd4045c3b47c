//! The `bnls` batch runner: one TOML config per run, CSV data files and a
//! plain-text report per command.

mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_classify_scan, cmd_evolve, cmd_ground_state, cmd_pairs, cmd_virial_report, parse_family, parse_rational,
    read_scan_csv, write_scan_csv, ScanRow, POHOZAEV_TOLERANCE, SCAN_COLUMNS, VIRIAL_COLUMNS, VIRIAL_SLACK_P,
    VIRIAL_SLACK_REL,
};
pub use config::ExperimentConfig;
pub use report::{Report, SCHEMA_VERSION};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NotConverged { .. } | Error::LostPositivity(_) | Error::Solve { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bnls", version, about = "Radial biharmonic NLS experiments")]
struct Cli {
    /// Worker threads for scans (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the ground state and report its identities and thresholds.
    GroundState(Common),
    /// Evolve `amplitude * Q` (or a field CSV) and record the trajectory.
    Evolve(Common),
    /// Classify and evolve `c * Q` for every amplitude in the scan.
    ClassifyScan(Common),
    /// Compare the localized virial derivative with its upper bound.
    VirialReport(Common),
    /// Exact exponent-pair arithmetic.
    Pairs(PairsArgs),
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[arg(long = "N")]
    n: u32,
    /// S, B, Lambda_s or DualLambda_s.
    #[arg(long)]
    family: String,
    #[arg(long, allow_hyphen_values = true)]
    s: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, Error> {
    let dir = common.out.clone().or_else(|| cfg.output_dir()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn with_config<F>(common: &Common, f: F) -> Result<Report, Error>
where
    F: FnOnce(&ExperimentConfig, &Path) -> Result<Report, Error>,
{
    let cfg = ExperimentConfig::load(&common.config)?;
    let dir = out_dir(common, &cfg)?;
    f(&cfg, &dir)
}

fn summary(r: &Report) -> String {
    let keys = [
        "pohozaev.verdict",
        "gn.relative_gap",
        "initial.class",
        "run.termination",
        "run.t_termination",
        "scan.runs",
        "virial.verdict",
    ];
    keys.iter().filter_map(|k| r.get(k).map(|v| format!("{k}: {v}\n"))).collect()
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let threads = cli.threads;
    if threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return EXIT_CONFIG;
    }
    let result = match &cli.command {
        Command::GroundState(c) => with_config(c, cmd_ground_state).map(|r| summary(&r)),
        Command::Evolve(c) => with_config(c, cmd_evolve).map(|r| summary(&r)),
        Command::ClassifyScan(c) => with_config(c, |cfg, dir| cmd_classify_scan(cfg, dir, threads)).map(|r| summary(&r)),
        Command::VirialReport(c) => with_config(c, cmd_virial_report).map(|r| summary(&r)),
        Command::Pairs(p) => parse_family(&p.family, p.s.as_deref())
            .and_then(|fam| cmd_pairs(p.n, fam, p.q.as_deref(), p.r.as_deref()))
            .and_then(|text| {
                if let Some(dir) = &p.out {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("pairs.txt"), format!("schema_version: {SCHEMA_VERSION}\n{text}"))?;
                }
                Ok(text)
            }),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
