use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tailmoment::harness::{self, ExperimentConfig, ProfileFile, RunOptions};
use tailmoment::{Error, Result};

/// Moment-based tail bounds and Monte Carlo concentration experiments.
#[derive(Debug, Parser)]
#[command(name = "tailmoment", version)]
struct Cli {
    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicate execution.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path (records CSV for `run`, JSON for the other commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a tail bound from a moment profile file.
    Bound {
        profile: PathBuf,
        /// Deviation thresholds.
        #[arg(long = "t", required = true, num_args = 1.., value_delimiter = ',')]
        t: Vec<f64>,
        /// Largest even moment order scanned.
        #[arg(long, default_value_t = 40)]
        m_max: u32,
    },
    /// Run an experiment config; prints the summary as JSON.
    Run { config: PathBuf },
    /// Run a config at several sizes and fit the sd scaling slope.
    Scale {
        config: PathBuf,
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        n_list: Vec<usize>,
    },
    /// Recompute a summary from a records CSV.
    Report {
        records: PathBuf,
        /// Config that produced the records, to attach its bound curve.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(json: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write(path, json),
        None => print_stdout(json),
    }
}

/// Prints to stdout; a closed pipe (say, output piped into `head`) is not an error.
fn print_stdout(text: &str) -> Result<()> {
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let options = RunOptions {
        workers: cli.workers,
        output: None,
        base_seed: cli.seed,
    };
    match cli.command {
        Command::Bound { profile, t, m_max } => {
            let file = ProfileFile::from_json(&read(&profile)?)?;
            let results = file.evaluate(&t, m_max)?;
            emit(&serde_json::to_string_pretty(&results)?, cli.out.as_deref())
        }
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let records_path = cli.out.clone().or_else(|| config.output.clone());
            let run = harness::run_experiment(
                &config,
                &RunOptions {
                    output: records_path.clone(),
                    ..options
                },
            )?;
            for w in &run.summary.warnings {
                eprintln!("warning: {w}");
            }
            let json = serde_json::to_string_pretty(&run.summary)?;
            match records_path {
                Some(path) => {
                    let mut summary_path = path.into_os_string();
                    summary_path.push(".summary.json");
                    write(Path::new(&summary_path), &json)?;
                }
                None => eprintln!("warning: no output path given; records were not saved"),
            }
            print_stdout(&json)
        }
        Command::Scale { config, n_list } => {
            let config = ExperimentConfig::load(&config)?;
            let study = harness::scaling_study(&config, &n_list, &options)?;
            emit(&serde_json::to_string_pretty(&study)?, cli.out.as_deref())
        }
        Command::Report { records, config } => {
            let config = config.map(|p| ExperimentConfig::load(&p)).transpose()?;
            let summary = harness::report(&read(&records)?, config.as_ref())?;
            emit(&serde_json::to_string_pretty(&summary)?, cli.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
