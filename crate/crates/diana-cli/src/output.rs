//! CSV and text output. Files are written atomically (temp file + rename)
//! and all formatting is deterministic, so identical runs produce
//! byte-identical artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use diana_core::sim::{ExplainRecord, JobRecord, SummaryStats, TraceRecord};

/// Column order of the per-job CSV; fixed, part of the output contract.
pub const JOB_CSV_HEADER: [&str; 12] = [
    "job_id",
    "scheduler",
    "submit_site",
    "exec_site",
    "submit_t",
    "transfer_done_t",
    "start_t",
    "finish_t",
    "queue_time",
    "exec_time",
    "completion_time",
    "exported",
];

/// Column order of the comparison CSV.
pub const COMPARE_CSV_HEADER: [&str; 5] =
    ["scheduler", "n_jobs", "mean_queue", "mean_exec", "mean_completion"];

fn float(value: f64) -> String {
    format!("{value}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn write_jobs_csv(records: &[JobRecord], scheduler: &str, path: &Path) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(JOB_CSV_HEADER).map_err(io_error)?;
    for record in records {
        writer
            .write_record([
                record.job.to_string(),
                scheduler.to_string(),
                record.submit_site.to_string(),
                record.placement.exec_site.to_string(),
                float(record.submit_time),
                float(record.transfer_done_time),
                float(record.start_time),
                float(record.finish_time),
                float(record.queue_time()),
                float(record.execution_time()),
                float(record.completion_time()),
                record.exported_from.is_some().to_string(),
            ])
            .map_err(io_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn write_trace_csv(trace: &[TraceRecord], path: &Path) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["time", "seq", "kind", "job", "site", "info"])
        .map_err(io_error)?;
    for event in trace {
        writer
            .write_record([
                float(event.time),
                event.seq.to_string(),
                event.kind.to_string(),
                event.job.clone(),
                event.site.clone(),
                event.info.clone(),
            ])
            .map_err(io_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

/// One comparison sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub scheduler: String,
    pub n_jobs: usize,
    pub mean_queue: f64,
    pub mean_exec: f64,
    pub mean_completion: f64,
}

pub fn write_compare_csv(rows: &[CompareRow], path: &Path) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(COMPARE_CSV_HEADER).map_err(io_error)?;
    for row in rows {
        writer
            .write_record([
                row.scheduler.clone(),
                row.n_jobs.to_string(),
                float(row.mean_queue),
                float(row.mean_exec),
                float(row.mean_completion),
            ])
            .map_err(io_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn render_summary(
    scenario: &Path,
    scheduler: &str,
    seed: u64,
    summary: &SummaryStats,
) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", scenario.display());
    let _ = writeln!(text, "scheduler: {scheduler}");
    let _ = writeln!(text, "seed: {seed}");
    let _ = writeln!(text, "jobs: {}", summary.jobs);
    let _ = writeln!(text, "exported: {}", summary.exported);
    let _ = writeln!(text, "mean queue time: {:.3}", summary.mean_queue);
    let _ = writeln!(text, "median queue time: {:.3}", summary.median_queue);
    let _ = writeln!(text, "mean execution time: {:.3}", summary.mean_execution);
    let _ = writeln!(text, "median execution time: {:.3}", summary.median_execution);
    let _ = writeln!(text, "mean completion time: {:.3}", summary.mean_completion);
    let _ = writeln!(text, "median completion time: {:.3}", summary.median_completion);
    text
}

pub fn write_summary(
    scenario: &Path,
    scheduler: &str,
    seed: u64,
    summary: &SummaryStats,
    path: &Path,
) -> io::Result<()> {
    write_atomic(path, render_summary(scenario, scheduler, seed, summary).as_bytes())
}

/// Renders the per-job cost tables and matrices captured in explain mode.
pub fn render_explains(explains: &[ExplainRecord]) -> String {
    let mut text = String::new();
    for record in explains {
        let _ = writeln!(
            text,
            "job {} (decided at t={}):",
            record.job, record.decided_at
        );
        let _ = writeln!(
            text,
            "  {:<16} {:>14} {:>12} {:>12} {:>14}",
            "candidate", "data_transfer", "compute", "network", "total"
        );
        for (site, breakdown) in &record.rows {
            let marker = if *site == record.chosen { "  <- selected" } else { "" };
            let _ = writeln!(
                text,
                "  {:<16} {:>14.3} {:>12.3} {:>12.5} {:>14.3}{marker}",
                site.to_string(),
                breakdown.data_transfer_cost,
                breakdown.compute_cost,
                breakdown.network_cost,
                breakdown.total,
            );
        }
        if let Some(matrix) = &record.matrix {
            let _ = writeln!(text, "  cost matrix (row: reference site, column: execution site):");
            let mut header = format!("  {:<16}", "");
            for site in matrix.sites() {
                let _ = write!(header, " {:>14}", site.to_string());
            }
            let _ = writeln!(text, "{header}");
            for from in matrix.sites() {
                let mut line = format!("  {:<16}", from.to_string());
                for to in matrix.sites() {
                    match matrix.get(from, to) {
                        Some(cost) => {
                            let _ = write!(line, " {cost:>14.3}");
                        }
                        None => {
                            let _ = write!(line, " {:>14}", "-");
                        }
                    }
                }
                let _ = writeln!(text, "{line}");
            }
        }
    }
    text
}

fn io_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}
