use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vq_core::cli::{self, ErrorRecord, Invocation, Status, Task};

#[derive(Parser)]
#[command(name = "vq", version, about = "Vacuum-triggered photon emission: polaron sweeps, MPS spectra and quenches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Polaron ansatz over a range of couplings.
    Polaron(RunArgs),
    /// Ground and bound states by imaginary-time MPS evolution.
    Spectrum(RunArgs),
    /// Real-time coupling or detuning quench.
    Quench(RunArgs),
    /// Compare MPS and polaron results with exact diagonalization.
    Oracle(RunArgs),
    /// Summarize an output directory.
    Report {
        /// Directory holding manifest.json.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, replacing `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, replacing `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted key and JSON value, e.g. `model.g=0.3`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CHECKS: u8 = 3;

fn execute(task: Task, args: RunArgs) -> ExitCode {
    let inv = Invocation { config: args.config, overrides: args.overrides, seed: args.seed, out: args.out.clone() };
    let cfg = match cli::load(task, &inv) {
        Ok(c) => c,
        Err(e) => {
            let err = anyhow::Error::new(e);
            let record = ErrorRecord::from_error(&err);
            if let Some(dir) = &args.out {
                if std::fs::create_dir_all(dir).is_ok() {
                    let _ = cli::write_json(dir, cli::ERROR_RECORD, &record);
                }
            }
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_default());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match cli::run(&cfg) {
        Ok(out) => {
            for w in &out.warnings {
                log::warn!("{w}");
            }
            println!("{} {:?}: {} files in {}", task.name(), out.status, out.files.len(), out.dir.display());
            if out.status == Status::ChecksFailed { ExitCode::from(EXIT_CHECKS) } else { ExitCode::SUCCESS }
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&ErrorRecord::from_error(&e)).unwrap_or_default());
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Polaron(a) => execute(Task::PolaronSweep, a),
        Command::Spectrum(a) => execute(Task::Spectrum, a),
        Command::Quench(a) => execute(Task::Quench, a),
        Command::Oracle(a) => execute(Task::OracleCheck, a),
        Command::Report { dir } => match cli::report(&dir) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e:#}");
                ExitCode::from(EXIT_RUNTIME)
            }
        },
    }
}
