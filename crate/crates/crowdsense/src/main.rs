use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crowdsense::commands;
use crowdsense::spec::Experiment;
use crowdsense::HarnessError;
use crowdsense_core::mechanisms::MechanismKind;

#[derive(Parser)]
#[command(name = "crowdsense", version, about = "Truthful adaptive crowdsensing recruitment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every mechanism over the sweep and write metrics.csv, summary.json and traces.
    Compare {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Budget each mechanism needs to reach a target utility.
    BudgetFor {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Threshold payments on one seeded population.
    Payments {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        instance: u64,
        #[arg(long, default_value = "SeqTGreedy", value_parser = parse_mechanism)]
        mechanism: MechanismKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Property battery against the brute-force oracle.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest budget reduction factor certified on prior probes.
    OptimizeAlpha {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mechanism(s: &str) -> Result<MechanismKind, String> {
    MechanismKind::parse(s).ok_or_else(|| format!("unknown mechanism {s}"))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| HarnessError::Json { path: PathBuf::from("<stdout>"), source })?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Compare { spec, out } => {
            let exp = Experiment::load(&spec)?;
            let comparison = commands::compare(&exp, &out)?;
            eprintln!("wrote {} metric rows to {}", comparison.rows.len(), out.display());
        }
        Command::BudgetFor { spec, target, out } => {
            let exp = Experiment::load(&spec)?;
            print_json(&commands::budget_for(&exp, target, out.as_deref())?)?;
        }
        Command::Payments { spec, instance, mechanism, out } => {
            let exp = Experiment::load(&spec)?;
            print_json(&commands::payments(&exp, instance, mechanism, out.as_deref())?)?;
        }
        Command::Verify { spec, out } => {
            let exp = Experiment::load(&spec)?;
            let summary = commands::verify(&exp, out.as_deref())?;
            print_json(&summary)?;
            if !summary.passed {
                return Ok(ExitCode::from(2));
            }
        }
        Command::OptimizeAlpha { spec, out } => {
            let exp = Experiment::load(&spec)?;
            print_json(&commands::optimize_alpha(&exp, out.as_deref())?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let HarnessError::Core(crowdsense_core::Error::CapExceeded { .. }) = e {
                eprintln!("the instances exceed the oracle caps; shrink verify.n_users or verify.max_profiles");
            }
            ExitCode::from(1)
        }
    }
}
