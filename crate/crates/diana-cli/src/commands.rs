//! The two runner entry points: single-scenario runs and policy comparison
//! sweeps.

use std::path::{Path, PathBuf};

use thiserror::Error;

use diana_core::sim::{run, SchedulerPolicy, SimError, SimOutcome};

use crate::output::{
    render_explains, render_summary, write_compare_csv, write_jobs_csv, write_summary,
    write_trace_csv, CompareRow,
};
use crate::scenario::{load_scenario, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 for validation problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => 2,
            CliError::Sim(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub explain: bool,
    pub trace: bool,
}

/// Artifacts of a completed `run` invocation.
pub struct RunArtifacts {
    pub outcome: SimOutcome,
    pub jobs_csv: PathBuf,
    pub summary_txt: PathBuf,
    pub trace_csv: Option<PathBuf>,
    pub explain_text: Option<String>,
    pub summary_text: String,
}

/// Runs one scenario and writes jobs.csv plus summary.txt into `out_dir`.
pub fn run_scenario(
    path: &Path,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<RunArtifacts, CliError> {
    let scenario = load_scenario(path, options.seed)?;
    let mut sim = scenario.sim.clone();
    sim.capture_trace = options.trace;
    sim.capture_explain = options.explain;

    let outcome = run(&scenario.topology, &scenario.jobs, &scenario.weights, &sim)?;

    let jobs_csv = out_dir.join("jobs.csv");
    write_jobs_csv(&outcome.records, sim.policy.name(), &jobs_csv)?;
    let summary_txt = out_dir.join("summary.txt");
    write_summary(path, sim.policy.name(), sim.seed, &outcome.summary, &summary_txt)?;
    let trace_csv = if options.trace {
        let trace_path = out_dir.join("trace.csv");
        write_trace_csv(&outcome.trace, &trace_path)?;
        Some(trace_path)
    } else {
        None
    };
    let explain_text = options.explain.then(|| render_explains(&outcome.explains));
    let summary_text = render_summary(path, sim.policy.name(), sim.seed, &outcome.summary);

    Ok(RunArtifacts {
        outcome,
        jobs_csv,
        summary_txt,
        trace_csv,
        explain_text,
        summary_text,
    })
}

/// Artifacts of a completed `compare` invocation.
pub struct CompareArtifacts {
    pub rows: Vec<CompareRow>,
    pub compare_csv: PathBuf,
}

/// Runs the scenario once per (scheduler, job count) pair, all with the
/// same seed, and writes a long-format CSV of the aggregates.
pub fn compare(
    path: &Path,
    schedulers: &[SchedulerPolicy],
    job_counts: &[usize],
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<CompareArtifacts, CliError> {
    let scenario = load_scenario(path, seed)?;
    let rows = compare_loaded(&scenario, schedulers, job_counts)?;
    let compare_csv = out_dir.join("compare.csv");
    write_compare_csv(&rows, &compare_csv)?;
    Ok(CompareArtifacts { rows, compare_csv })
}

/// Sweep body, reusable from tests that already hold a loaded scenario.
pub fn compare_loaded(
    scenario: &Scenario,
    schedulers: &[SchedulerPolicy],
    job_counts: &[usize],
) -> Result<Vec<CompareRow>, CliError> {
    let mut rows = Vec::new();
    for &policy in schedulers {
        for &n in job_counts {
            let jobs = scenario.jobs_for_count(n)?;
            let mut sim = scenario.sim.clone();
            sim.policy = policy;
            let outcome = run(&scenario.topology, &jobs, &scenario.weights, &sim)?;
            rows.push(CompareRow {
                scheduler: policy.name().to_string(),
                n_jobs: n,
                mean_queue: outcome.summary.mean_queue,
                mean_exec: outcome.summary.mean_execution,
                mean_completion: outcome.summary.mean_completion,
            });
        }
    }
    Ok(rows)
}
