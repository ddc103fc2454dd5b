use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavectl::{
    experiments::non_convergence, parse_config, run_axioms, run_certificate, run_lambda_sweep, run_mode_refinement,
    run_single, CliError, CliResult, ExperimentKind,
};

/// Approximate-controllability experiments for the periodic wave equation.
///
/// Thread count follows WAVECTL_THREADS when set.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once at control.lambda; trajectory, control and diagnostics.
    Run(Args),
    /// lambda_sweep or mode_refinement, per experiment.kind.
    Sweep(Args),
    /// Gramian certificates per control window and feasibility values.
    Certify(Args),
    /// Evolution-operator axiom residuals.
    Axioms(Args),
}

#[derive(clap::Args)]
struct Args {
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("WAVECTL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("WAVECTL_THREADS: '{v}' is not a thread count")))?;
    // a pool built earlier wins; not an error
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Run(a) => {
            let spec = parse_config(&a.config)?;
            let outcome = run_single(&spec, &a.out)?;
            if !outcome.converged {
                return Err(non_convergence(&outcome));
            }
        }
        Command::Sweep(a) => {
            let spec = parse_config(&a.config)?;
            match spec.kind {
                ExperimentKind::LambdaSweep => run_lambda_sweep(&spec, &a.out)?,
                ExperimentKind::ModeRefinement => run_mode_refinement(&spec, &a.out)?,
            };
        }
        Command::Certify(a) => {
            run_certificate(&parse_config(&a.config)?, &a.out)?;
        }
        Command::Axioms(a) => {
            run_axioms(&parse_config(&a.config)?, &a.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wavectl: {e}");
            (&e).into()
        }
    }
}
