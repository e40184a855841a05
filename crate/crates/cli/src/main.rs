//! `hdsim`: run, batch and diagnose heuristic-dynamics scenarios.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid scenario, 3 numerical failure.
//! Verbosity comes from the `HDSIM_LOG` environment variable (`error` .. `trace`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use heuristic_dynamics::harness::{self, Format, Scenario};
use heuristic_dynamics::Error;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "hdsim", version, about = "Bayesian-heuristic group decision dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trajectory and diagnostics.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate every `*.json` scenario in a directory, in parallel.
    Batch {
        dir: PathBuf,
        /// Defaults to `<dir>/results`; each scenario gets a subdirectory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Print verdicts and predictions without simulating trajectories.
    Diagnose { scenario: PathBuf },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        e if e.is_numerical() => 3,
        Error::DegenerateEvidence => 3,
        _ => 2,
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Error> {
    let mut scenario = harness::load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn run_one(path: &Path, out: &Path, format: Format, seed: Option<u64>) -> Result<Vec<PathBuf>, Error> {
    let scenario = load(path, seed)?;
    log::info!("running {} ({} agents, {} mode)", path.display(), scenario.n_agents(), scenario.mode);
    let report = harness::run(&scenario)?;
    harness::emit(&report, format, out)
}

fn batch(dir: &Path, out: &Path, format: Format) -> Result<u8, Error> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json") && p.is_file());
    paths.sort();
    let outcomes: Vec<(PathBuf, Result<Vec<PathBuf>, Error>)> = paths
        .par_iter()
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default();
            (p.clone(), run_one(p, &out.join(stem), format, None))
        })
        .collect();
    let mut code = 0;
    for (path, outcome) in outcomes {
        match outcome {
            Ok(files) => println!("ok    {} -> {}", path.display(), files[0].parent().unwrap_or(out).display()),
            Err(e) => {
                println!("fail  {}: {e}", path.display());
                code = code.max(exit_code(&e));
            }
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HDSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            format,
            seed,
        } => run_one(&scenario, &out, format.into(), seed).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
            0
        }),
        Command::Batch { dir, out, format } => {
            let out = out.unwrap_or_else(|| dir.join("results"));
            batch(&dir, &out, format.into())
        }
        Command::Diagnose { scenario } => load(&scenario, None)
            .and_then(|s| harness::diagnose(&s))
            .and_then(|d| harness::diagnostics_json(&d))
            .map(|text| {
                print!("{text}");
                0
            }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
