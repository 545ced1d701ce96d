use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use conformal_cal::{execute, ExperimentConfig, ExperimentKind, HarnessError, RunSpec};

#[derive(Parser)]
#[command(
    name = "conformal-cal",
    version,
    about = "Conformal calibration experiments for wireless scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transmit power from conformal gain sets, unimodal vs multi-sample score.
    PowerControl(RunArgs),
    /// LTT vs aLTT scheduler hyperparameter certification over a latency sweep.
    Hyperparam(RunArgs),
    /// Global vs localized online calibration of beam candidate sets.
    Beam(RunArgs),
    /// Naive vs counterfactual conformal intervals for final backlogs.
    Counterfactual(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; missing sections and keys take their defaults.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trials: usize,
    /// Output directory for trace.csv, trials.csv, aggregate.json and report.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<bool, HarnessError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let spec = RunSpec {
        seed: args.seed,
        trials: args.trials,
        workers: args.workers,
    };
    let report = execute(kind, &cfg, &spec)?;
    report.write(&args.out)?;
    print!("{}", report.report_text());
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (kind, args) = match &cli.command {
        Command::PowerControl(a) => (ExperimentKind::PowerControl, a),
        Command::Hyperparam(a) => (ExperimentKind::Hyperparam, a),
        Command::Beam(a) => (ExperimentKind::Beam, a),
        Command::Counterfactual(a) => (ExperimentKind::Counterfactual, a),
    };
    match run(kind, args).with_context(|| format!("{kind} run failed")) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more acceptance targets were missed");
            ExitCode::from(3)
        }
        Err(e) => {
            let code = e
                .downcast_ref::<HarnessError>()
                .map_or(2, HarnessError::exit_code);
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
