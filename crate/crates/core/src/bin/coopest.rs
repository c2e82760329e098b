use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coopest_core::harness::{
    emit_metrics, render_metrics, render_summary, simulate, stability_check, sweep, Format,
    ScenarioConfig, SweepAxis,
};
use coopest_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "coopest",
    version,
    about = "Cooperative activity estimation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicates of one configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Replicates; defaults to the config's `runs`.
        #[arg(long)]
        runs: Option<usize>,
        /// Metric file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run replicates at every value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run formation and verify the result by enumerating deviations.
    StabilityCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>, runs: Option<usize>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            runs,
            out,
            format,
        } => {
            let format: Format = format.parse()?;
            let cfg = load(&config, seed, runs)?;
            let table = simulate(&cfg)?;
            match out {
                Some(path) => {
                    emit_metrics(&table, &path, format)?;
                    eprint!("{}", render_summary(&table));
                }
                None => print!("{}", render_metrics(&table, format)),
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            runs,
            seed,
            out,
            format,
        } => {
            let format: Format = format.parse()?;
            let axis: SweepAxis = axis.parse()?;
            let values = values
                .iter()
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("sweep value {v:?} is not a number"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let cfg = load(&config, seed, runs)?;
            let table = sweep(&cfg, axis, &values)?;
            emit_metrics(&table, &out, format)?;
            print!("{}", render_summary(&table));
        }
        Command::StabilityCheck { config, seed } => {
            let cfg = load(&config, seed, None)?;
            let report = stability_check(&cfg)?;
            println!("partition: {}", report.partition);
            println!("iterations: {}  joins: {}", report.iterations, report.joins);
            println!("engine nash-stable: {}", report.nash_stable);
            println!(
                "enumerated deviations: {}",
                report.brute_force_deviations.len()
            );
            for (node, target) in &report.brute_force_deviations {
                match target {
                    Some(t) => println!("  node {node} -> coalition {t}"),
                    None => println!("  node {node} -> alone"),
                }
            }
            if !report.passed() {
                return Err(Error::Invariant(format!(
                    "partition {} is not Nash-stable",
                    report.partition
                )));
            }
            println!("stable");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
