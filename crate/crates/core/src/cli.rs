//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime, I/O or parse failures, 2 when a
//! config or argument fails validation.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{
    read_labeled, run_classification_grid, run_experiment, write_classification, write_experiment,
    AggregateResult, ClassificationConfig, ExperimentConfig, Method, RunOptions,
};

#[derive(Debug, Parser)]
#[command(name = "dpem", version, about = "Differentially private EM experiments")]
pub struct Cli {
    /// Maximum number of concurrent repetitions.
    #[arg(long, global = true, env = "DPEM_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a private simulation sweep.
    Run(RunArgs),
    /// Run the private classification pipeline on labeled CSV data.
    Classify(ClassifyArgs),
    /// Run the non-private gradient EM baseline on a simulation config.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disable privacy noise; only allowed when epsilon is "inf".
    #[arg(long)]
    pub silent_noise: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
        config.validate()?;
    }
    Ok(config)
}

fn summary(label: &str, result: &AggregateResult) -> String {
    let cells: Vec<String> = result
        .final_means()
        .iter()
        .map(|(v, m)| format!("{}={v}: {m:.6}", result.sweep_param))
        .collect();
    format!("{label} mean final error | {}", cells.join(" | "))
}

pub fn cmd_run(args: &RunArgs, jobs: Option<usize>) -> Result<String> {
    let config = load_config(&args.config, args.seed)?;
    if args.silent_noise {
        let finite = config
            .sweep
            .values
            .iter()
            .map(|&v| config.cell(v).map(|c| c.epsilon))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .any(f64::is_finite);
        if finite {
            return Err(Error::config("epsilon", "--silent-noise requires epsilon = \"inf\" in every cell"));
        }
    }
    let options = RunOptions {
        method: Method::Private,
        silent_noise: args.silent_noise,
        jobs,
    };
    let result = run_experiment(&config, &options)?;
    write_experiment(&result, &args.out)?;
    Ok(summary("private", &result))
}

pub fn cmd_baseline(args: &BaselineArgs, jobs: Option<usize>) -> Result<String> {
    let config = load_config(&args.config, args.seed)?;
    let options = RunOptions {
        method: Method::NonPrivate,
        silent_noise: false,
        jobs,
    };
    let result = run_experiment(&config, &options)?;
    write_experiment(&result, &args.out)?;
    Ok(summary("non-private", &result))
}

pub fn cmd_classify(args: &ClassifyArgs, jobs: Option<usize>) -> Result<String> {
    let config = ClassificationConfig::from_path(&args.config)?;
    let data = read_labeled(&args.data)?;
    let reports = run_classification_grid(&data, &config, jobs)?;
    write_classification(&reports, &args.out)?;
    let cells: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "s_hat={} epsilon={}: {:.4} ({:.4})",
                r.s_hat, r.epsilon, r.misclassification_rate, r.std_error
            )
        })
        .collect();
    Ok(format!("misclassification | {}", cells.join(" | ")))
}

/// Parses arguments, dispatches, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a, cli.jobs),
        Command::Classify(a) => cmd_classify(a, cli.jobs),
        Command::Baseline(a) => cmd_baseline(a, cli.jobs),
    };
    match outcome {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
