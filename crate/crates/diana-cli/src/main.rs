use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diana_cli::commands::{compare, run_scenario, RunOptions};
use diana_core::sim::SchedulerPolicy;

/// Network- and data-aware Grid scheduling simulator.
#[derive(Parser)]
#[command(name = "diana", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write jobs.csv + summary.txt.
    Run {
        /// Scenario file (TOML, schema 1).
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario (and DIANA_SEED) seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the per-job cost tables and cost matrices.
        #[arg(long)]
        explain: bool,
        /// Also write the event trace to trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Run a (scheduler x job count) sweep and write compare.csv.
    Compare {
        /// Scenario file (TOML, schema 1).
        scenario: PathBuf,
        /// Comma-separated schedulers, e.g. diana,data_local.
        #[arg(long, value_delimiter = ',', required = true)]
        schedulers: Vec<SchedulerPolicy>,
        /// Comma-separated job counts, e.g. 25,50,100.
        #[arg(long, value_delimiter = ',', required = true)]
        jobs: Vec<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario (and DIANA_SEED) seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Seed precedence: scenario file < DIANA_SEED < --seed.
fn effective_seed(flag: Option<u64>) -> Option<u64> {
    if flag.is_some() {
        return flag;
    }
    std::env::var("DIANA_SEED").ok().and_then(|v| v.parse().ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            explain,
            trace,
        } => {
            let options = RunOptions {
                seed: effective_seed(seed),
                explain,
                trace,
            };
            run_scenario(&scenario, &out, &options).map(|artifacts| {
                if let Some(text) = &artifacts.explain_text {
                    print!("{text}");
                }
                print!("{}", artifacts.summary_text);
                println!("wrote {}", artifacts.jobs_csv.display());
            })
        }
        Command::Compare {
            scenario,
            schedulers,
            jobs,
            out,
            seed,
        } => compare(&scenario, &schedulers, &jobs, &out, effective_seed(seed)).map(|artifacts| {
            for row in &artifacts.rows {
                println!(
                    "{} n={}: mean_queue={:.3} mean_exec={:.3} mean_completion={:.3}",
                    row.scheduler, row.n_jobs, row.mean_queue, row.mean_exec, row.mean_completion
                );
            }
            println!("wrote {}", artifacts.compare_csv.display());
        }),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
