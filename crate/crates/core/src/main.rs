//! Command-line front end: `simulate`, `lyapunov`, `rates`, `sweep`, `check`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 degenerate-process
//! refusal, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pushsum_rates::config::FileConfig;
use pushsum_rates::error::Error;
use pushsum_rates::experiments::{self, ExperimentConfig, SweepParam};
use pushsum_rates::lyapunov::estimate_top2;
use pushsum_rates::process_gen::StepSampler;
use pushsum_rates::protocol::run_consensus;

#[derive(Parser)]
#[command(
    name = "pushsum-rates",
    about = "Push-sum consensus simulator with convergence-rate estimation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one consensus trajectory and emit a per-step CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate the top two Lyapunov exponents (JSON).
    Lyapunov {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Full rate report: QR, Birkhoff, and empirical slopes (JSON).
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep drop_rate or s over a grid of values and seeds (CSV).
    Sweep {
        /// Base config file; alternative to --preset.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named base config: async-p30-d10 (30 nodes, out-degree 10,
        /// asynchronous, 5000 steps).
        #[arg(long)]
        preset: Option<String>,
        /// Parameter to sweep: drop_rate or s.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        /// Comma-separated seeds, one row per (grid value, seed).
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Measure wall time per row (breaks byte-reproducibility of the CSV).
        #[arg(long)]
        timing: bool,
    },
    /// Verify the rate-theory hypotheses for a config.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Emit the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn write_stdout(contents: &str) -> Result<(), Error> {
    use std::io::Write;
    match std::io::stdout().write_all(contents.as_bytes()) {
        // A closed pipe (e.g. `pushsum-rates ... | head`) is not an error.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn write_output(path: &Option<PathBuf>, contents: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, contents)?,
        None => write_stdout(contents)?,
    }
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, output } => {
            let cfg = FileConfig::from_path(&config)?;
            let exp = cfg.build()?;
            let p = exp.process.topology.node_count();
            let x0 = exp.x0.resolve(p, exp.process.seed)?;
            let w0 = exp.w0.resolve(p, exp.process.seed.wrapping_add(1))?;
            let t = run_consensus(
                exp.process.topology.clone(),
                &x0,
                &w0,
                exp.n_steps,
                exp.process.seed,
                exp.process.drop_rate,
                exp.process.s,
                exp.process.mode,
            )?;
            write_output(&output, &experiments::trajectory_csv(&t))
        }
        Command::Lyapunov { config, output } => {
            let cfg = FileConfig::from_path(&config)?;
            let exp = cfg.build()?;
            let mut sampler = StepSampler::new(&exp.process)?;
            let estimate = estimate_top2(&mut sampler, exp.n_steps)?;
            let mut json = serde_json::to_string_pretty(&estimate)?;
            json.push('\n');
            write_output(&output, &json)
        }
        Command::Rates { config, output } => {
            let cfg = FileConfig::from_path(&config)?;
            let exp = cfg.build()?;
            let report = experiments::run_rate_experiment(&exp)?;
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            write_output(&output, &json)
        }
        Command::Sweep {
            config,
            preset,
            param,
            grid,
            seeds,
            output,
            timing,
        } => {
            let base: ExperimentConfig = match (&config, preset.as_deref()) {
                (Some(path), None) => FileConfig::from_path(path)?.build()?,
                (None, Some("async-p30-d10")) => ExperimentConfig::preset_async_30x10(0),
                (None, Some(other)) => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown preset '{other}' (expected async-p30-d10)"
                    )))
                }
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "sweep needs --config or --preset".into(),
                    ))
                }
                (Some(_), Some(_)) => unreachable!("clap forbids both"),
            };
            let param = SweepParam::parse(&param)?;
            let rows = experiments::sweep(&base, param, &grid, &seeds, timing)?;
            write_output(&output, &experiments::sweep_csv(&rows))
        }
        Command::Check { config, json } => {
            let cfg = FileConfig::from_path(&config)?;
            let exp = cfg.build()?;
            let report = experiments::check(&exp.process)?;
            if json {
                let mut text = serde_json::to_string_pretty(&report)?;
                text.push('\n');
                write_stdout(&text)
            } else {
                write_stdout(&format!("{report}\n"))
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::DegenerateProcess(_) => 3,
                Error::InvalidConfig(_)
                | Error::InvalidTopology(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::InvalidEntry(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
