//! Per-job timing records and aggregate statistics.

use crate::matchmaker::Placement;
use crate::model::{JobId, SiteId};

/// Complete timing record of one job (or sub-job bundle).
///
/// For bundles, `start_time` is the first sub-job start and `finish_time`
/// the last sub-job finish; the bundle completes as a unit.
/// `output_done_time` extends `finish_time` by the output staging transfer
/// when one occurs, and completion time is measured against it.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub job: JobId,
    pub submit_site: SiteId,
    pub placement: Placement,
    pub submit_time: f64,
    pub transfer_done_time: f64,
    pub start_time: f64,
    pub finish_time: f64,
    pub output_done_time: f64,
    pub exported_from: Option<SiteId>,
}

impl JobRecord {
    pub fn queue_time(&self) -> f64 {
        self.start_time - self.submit_time
    }

    pub fn execution_time(&self) -> f64 {
        self.finish_time - self.start_time
    }

    pub fn completion_time(&self) -> f64 {
        self.output_done_time - self.submit_time
    }
}

/// Aggregates over a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub jobs: usize,
    pub exported: usize,
    pub mean_queue: f64,
    pub median_queue: f64,
    pub mean_execution: f64,
    pub median_execution: f64,
    pub mean_completion: f64,
    pub median_completion: f64,
}

impl SummaryStats {
    pub fn from_records(records: &[JobRecord]) -> Self {
        let queue: Vec<f64> = records.iter().map(JobRecord::queue_time).collect();
        let execution: Vec<f64> = records.iter().map(JobRecord::execution_time).collect();
        let completion: Vec<f64> = records.iter().map(JobRecord::completion_time).collect();
        Self {
            jobs: records.len(),
            exported: records.iter().filter(|r| r.exported_from.is_some()).count(),
            mean_queue: mean(&queue),
            median_queue: median(&queue),
            mean_execution: mean(&execution),
            median_execution: median(&execution),
            mean_completion: mean(&completion),
            median_completion: median(&completion),
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// One line of the event trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub seq: u64,
    pub kind: &'static str,
    pub job: String,
    pub site: String,
    pub info: String,
}
