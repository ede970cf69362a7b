//! Synthetic job stream generation: Poisson arrivals, uniform submit sites,
//! per-job dataset draws and bulk sub-job bundles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{DatasetId, JobDescriptor, JobId, SiteId, ValidatedTopology};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Default dataset size bounds for synthetic pools: 30 GB to 1.3 TB scaled
/// down 1000x for desk-scale runs, drawn log-uniformly.
pub const SYNTH_DATASET_MB_MIN: f64 = 30.0 * 1024.0 / 1000.0;
pub const SYNTH_DATASET_MB_MAX: f64 = 1300.0 * 1024.0 / 1000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("dataset pool is empty but jobs require at least {min_inputs} input(s)")]
    EmptyDatasetPool { min_inputs: u32 },
    #[error("profile dataset `{0}` is not registered in the topology")]
    UnknownDataset(DatasetId),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

/// Shape of a synthetic workload.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadProfile {
    pub jobs_per_day: f64,
    /// Target number of jobs processed in parallel; descriptive, used for
    /// capacity sizing rather than generation.
    pub parallel_target: u32,
    /// Candidate input datasets; empty means every registered dataset.
    pub dataset_pool: Vec<DatasetId>,
    /// Inclusive range of input datasets per job.
    pub inputs_per_job: (u32, u32),
    /// Inclusive range of compute demand per sub-job.
    pub demand_range: (f64, f64),
    /// Probability that a job is a bulk bundle.
    pub bulk_fraction: f64,
    /// Inclusive sub-job count range for bulk bundles.
    pub sub_jobs_per_bundle: (u32, u32),
    pub executable_mb: f64,
    pub output_mb: f64,
    /// Sites jobs are initiated from; empty means any site, uniformly.
    pub submit_sites: Vec<SiteId>,
    pub seed: u64,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        Self {
            jobs_per_day: 250.0,
            parallel_target: 50,
            dataset_pool: Vec::new(),
            inputs_per_job: (0, 10),
            demand_range: (60.0, 3600.0),
            bulk_fraction: 0.25,
            sub_jobs_per_bundle: (2, 10),
            executable_mb: 0.0,
            output_mb: 0.0,
            submit_sites: Vec::new(),
            seed: 0,
        }
    }
}

impl WorkloadProfile {
    fn validate(&self, topology: &ValidatedTopology) -> Result<Vec<DatasetId>, WorkloadError> {
        if !self.jobs_per_day.is_finite() || self.jobs_per_day <= 0.0 {
            return Err(WorkloadError::InvalidProfile(format!(
                "jobs_per_day must be > 0, got {}",
                self.jobs_per_day
            )));
        }
        if self.inputs_per_job.0 > self.inputs_per_job.1 {
            return Err(WorkloadError::InvalidProfile(
                "inputs_per_job range is reversed".into(),
            ));
        }
        if !self.demand_range.0.is_finite() || self.demand_range.0 <= 0.0 || self.demand_range.0 > self.demand_range.1 {
            return Err(WorkloadError::InvalidProfile(
                "demand_range must be positive and ordered".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.bulk_fraction) {
            return Err(WorkloadError::InvalidProfile(
                "bulk_fraction must be in [0, 1]".into(),
            ));
        }
        if self.sub_jobs_per_bundle.0 < 1 || self.sub_jobs_per_bundle.0 > self.sub_jobs_per_bundle.1
        {
            return Err(WorkloadError::InvalidProfile(
                "sub_jobs_per_bundle must be ordered and at least 1".into(),
            ));
        }
        let pool: Vec<DatasetId> = if self.dataset_pool.is_empty() {
            topology.datasets().keys().cloned().collect()
        } else {
            for dataset in &self.dataset_pool {
                if topology.dataset(dataset).is_none() {
                    return Err(WorkloadError::UnknownDataset(dataset.clone()));
                }
            }
            self.dataset_pool.clone()
        };
        if pool.is_empty() && self.inputs_per_job.0 > 0 {
            return Err(WorkloadError::EmptyDatasetPool {
                min_inputs: self.inputs_per_job.0,
            });
        }
        Ok(pool)
    }
}

/// Poisson arrivals at the profile rate until `horizon_seconds`.
pub fn generate(
    profile: &WorkloadProfile,
    horizon_seconds: f64,
    topology: &ValidatedTopology,
) -> Result<Vec<JobDescriptor>, WorkloadError> {
    generate_stream(profile, topology, Limit::Horizon(horizon_seconds))
}

/// Exactly the first `count` arrivals of the same seeded stream; used by
/// comparison sweeps so every sweep point is a prefix of the next.
pub fn generate_count(
    profile: &WorkloadProfile,
    count: usize,
    topology: &ValidatedTopology,
) -> Result<Vec<JobDescriptor>, WorkloadError> {
    generate_stream(profile, topology, Limit::Count(count))
}

enum Limit {
    Horizon(f64),
    Count(usize),
}

fn generate_stream(
    profile: &WorkloadProfile,
    topology: &ValidatedTopology,
    limit: Limit,
) -> Result<Vec<JobDescriptor>, WorkloadError> {
    let pool = profile.validate(topology)?;
    let sites: Vec<SiteId> = if profile.submit_sites.is_empty() {
        topology.site_ids().cloned().collect()
    } else {
        for site in &profile.submit_sites {
            if topology.site(site).is_none() {
                return Err(WorkloadError::InvalidProfile(format!(
                    "submit site `{site}` is not in the topology"
                )));
            }
        }
        profile.submit_sites.clone()
    };
    if sites.is_empty() {
        return Err(WorkloadError::InvalidProfile("topology has no sites".into()));
    }
    let rate_per_second = profile.jobs_per_day / SECONDS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut jobs = Vec::new();
    let mut t = 0.0_f64;

    loop {
        match limit {
            Limit::Count(count) if jobs.len() >= count => break,
            Limit::Count(_) => {}
            Limit::Horizon(_) => {}
        }
        let gap = exponential_gap(&mut rng, rate_per_second);
        let mut next = t + gap;
        if next <= t {
            // Tie perturbation: arrival times are strictly increasing.
            next = t + 1e-9;
        }
        t = next;
        if let Limit::Horizon(horizon) = limit {
            if t >= horizon {
                break;
            }
        }

        let submit_site = sites[rng.random_range(0..sites.len())].clone();
        let want_inputs = if profile.inputs_per_job.1 == 0 {
            0
        } else {
            rng.random_range(profile.inputs_per_job.0..=profile.inputs_per_job.1)
        };
        let inputs = draw_distinct(&mut rng, &pool, want_inputs as usize);
        let demand = if profile.demand_range.0 == profile.demand_range.1 {
            profile.demand_range.0
        } else {
            rng.random_range(profile.demand_range.0..=profile.demand_range.1)
        };
        let sub_jobs = if profile.bulk_fraction > 0.0 && rng.random_bool(profile.bulk_fraction) {
            rng.random_range(profile.sub_jobs_per_bundle.0..=profile.sub_jobs_per_bundle.1)
        } else {
            1
        };

        jobs.push(JobDescriptor {
            id: JobId::new(format!("job-{:05}", jobs.len())),
            submit_site,
            input_datasets: inputs,
            executable_mb: profile.executable_mb,
            output_mb: profile.output_mb,
            compute_demand: demand,
            sub_job_count: sub_jobs,
            submit_time: t,
            min_power_per_cpu: 0.0,
        });
    }
    Ok(jobs)
}

fn exponential_gap(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn draw_distinct(rng: &mut ChaCha8Rng, pool: &[DatasetId], want: usize) -> Vec<DatasetId> {
    let take = want.min(pool.len());
    if take == 0 {
        return Vec::new();
    }
    // Partial Fisher-Yates over an index view of the pool.
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for i in 0..take {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    indices[..take].iter().map(|&i| pool[i].clone()).collect()
}

/// Log-uniform synthetic dataset size in MB, within the default bounds.
pub fn synth_dataset_size_mb(rng: &mut ChaCha8Rng) -> f64 {
    let lo = SYNTH_DATASET_MB_MIN.ln();
    let hi = SYNTH_DATASET_MB_MAX.ln();
    (lo + rng.random::<f64>() * (hi - lo)).exp()
}

/// Synthetic dataset pool: `count` single-replica datasets assigned
/// round-robin over `sites`, sizes drawn uniformly from `size_mb` (or
/// log-uniformly from the default bounds when the range is unset).
pub fn synth_dataset_pool(
    count: usize,
    prefix: &str,
    sites: &[SiteId],
    size_mb: Option<(f64, f64)>,
    seed: u64,
) -> Vec<crate::model::DatasetDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let size = match size_mb {
                Some((lo, hi)) if lo < hi => rng.random_range(lo..=hi),
                Some((lo, _)) => lo,
                None => synth_dataset_size_mb(&mut rng),
            };
            crate::model::DatasetDescriptor::new(
                format!("{prefix}-{i:03}"),
                size,
                [sites[i % sites.len()].clone()],
            )
        })
        .collect()
}
