use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kahlerlab::artifacts::Summary;
use kahlerlab::config::{Experiment, ExperimentConfig, OUT_DIR_ENV};
use kahlerlab::{report, LabError, LabResult};

/// Run kahlerlab experiments and report their results.
///
/// Exit status: 0 all checks pass, 1 some bound fails, 2 config violation,
/// 3 numeric failure, 4 missing artifacts.
#[derive(Parser)]
#[command(name = "kahlerlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML config file; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment selected by `run.experiment` in the config file.
    Run { config: PathBuf },
    /// Properties of the regularized maximum and its width scaling.
    RegmaxCheck(ConfigArg),
    /// Scalar curvature of flat space and Fubini-Study metrics.
    CurvatureTruth(ConfigArg),
    /// Monge-Ampere solves on the flat torus.
    MaSolve(ConfigArg),
    /// Region scan and c-sweeps of the glued potential.
    GlueScan(ConfigArg),
    /// Decay exponents toward the divisors.
    DecayFit(ConfigArg),
    /// Every experiment in turn.
    All(ConfigArg),
    /// Tabulate summaries from a previous run.
    Report {
        /// Directory holding `*.json` summaries; defaults to the configured
        /// output directory.
        #[arg(short, long)]
        dir: Option<PathBuf>,
        /// Summary files to read instead of the whole directory.
        files: Vec<PathBuf>,
    },
    /// Print the default config as TOML.
    DefaultConfig,
}

fn load(arg: &ConfigArg) -> LabResult<ExperimentConfig> {
    match &arg.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn execute(cfg: &ExperimentConfig, which: Experiment) -> LabResult<Vec<Summary>> {
    let dir = cfg.out_dir();
    let summaries = kahlerlab::run(cfg, which, &dir)?;
    print!("{}", report::render(&summaries));
    println!("artifacts in {}", dir.display());
    Ok(summaries)
}

fn main_inner(cli: Cli) -> LabResult<bool> {
    let (cfg, which) = match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let which = cfg.run.experiment;
            (cfg, which)
        }
        Command::RegmaxCheck(a) => (load(&a)?, Experiment::RegmaxCheck),
        Command::CurvatureTruth(a) => (load(&a)?, Experiment::CurvatureTruth),
        Command::MaSolve(a) => (load(&a)?, Experiment::MaSolve),
        Command::GlueScan(a) => (load(&a)?, Experiment::GlueScan),
        Command::DecayFit(a) => (load(&a)?, Experiment::DecayFit),
        Command::All(a) => (load(&a)?, Experiment::All),
        Command::Report { dir, files } => {
            let dir = dir.unwrap_or_else(|| ExperimentConfig::default().out_dir());
            let summaries = report::load(&dir, &files)?;
            print!("{}", report::render(&summaries));
            return Ok(summaries.iter().all(|s| s.passed));
        }
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml());
            return Ok(true);
        }
    };
    let summaries = execute(&cfg, which)?;
    Ok(summaries.iter().all(|s| s.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("kahlerlab: {e}");
            if let LabError::Output { .. } = e {
                eprintln!("(set {OUT_DIR_ENV} or run.out_dir to a writable directory)");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
