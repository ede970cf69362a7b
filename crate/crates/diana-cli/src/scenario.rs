//! Scenario file parsing and validation.
//!
//! Scenarios are TOML with a `schema = 1` header. Unknown keys anywhere in
//! the tree are rejected. See the repository README for the full format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use diana_core::model::{
    validate_topology, DatasetDescriptor, JobDescriptor, LinkMetrics, SiteDescriptor, SiteId,
    ValidatedTopology, ValidationError, WeightVector,
};
use diana_core::sim::{SchedulerPolicy, SimConfig};
use diana_core::workload::{
    generate, generate_count, synth_dataset_pool, WorkloadError, WorkloadProfile,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid topology: {0}")]
    Topology(#[from] ValidationError),
    #[error("invalid workload: {0}")]
    Workload(#[from] WorkloadError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: u32,
    #[serde(default)]
    seed: u64,
    scheduler: String,
    shortlist_k: Option<usize>,
    export_threshold: Option<f64>,
    weights: Option<WeightsSection>,
    telemetry: Option<TelemetrySection>,
    cost_overrides: Option<CostOverridesSection>,
    link_defaults: Option<LinkDefaultsSection>,
    dataset_gen: Option<DatasetGenSection>,
    sites: Vec<SiteSection>,
    #[serde(default)]
    links: Vec<LinkSection>,
    #[serde(default)]
    datasets: Vec<DatasetSection>,
    workload: WorkloadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSection {
    w1: Option<f64>,
    w2: Option<f64>,
    w3: Option<f64>,
    w5: Option<f64>,
    w6: Option<f64>,
    w7: Option<f64>,
    w8: Option<f64>,
    w9: Option<f64>,
    w10: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TelemetrySection {
    epoch_seconds: Option<f64>,
    window: Option<usize>,
    noise_frac: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostOverridesSection {
    #[serde(default)]
    background_jobs: u64,
    dtc_losses: Option<f64>,
    site_self_cost: Option<f64>,
    #[serde(default)]
    site_load: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDefaultsSection {
    rtt_ms: f64,
    #[serde(default)]
    loss: f64,
    #[serde(default)]
    jitter_ms: f64,
    bandwidth_mbps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteSection {
    id: String,
    cpus: u32,
    #[serde(default = "one")]
    power_per_cpu: f64,
    #[serde(default)]
    storage_mb: f64,
    /// Standing backlog visible to the cost model only.
    #[serde(default)]
    backlog: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSection {
    src: String,
    dst: String,
    rtt_ms: f64,
    #[serde(default)]
    loss: f64,
    #[serde(default)]
    jitter_ms: f64,
    bandwidth_mbps: f64,
}

/// Synthetic dataset pool appended to the explicit [[datasets]] list.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetGenSection {
    count: usize,
    #[serde(default = "default_pool_prefix")]
    prefix: String,
    sites: Vec<String>,
    /// Uniform size range in MB; omitted means the default log-uniform draw.
    size_mb: Option<[f64; 2]>,
    #[serde(default)]
    seed: u64,
}

fn default_pool_prefix() -> String {
    "pool".to_owned()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSection {
    id: String,
    size_mb: f64,
    replicas: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadSection {
    horizon_seconds: Option<f64>,
    jobs: Option<Vec<JobSection>>,
    profile: Option<ProfileSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobSection {
    id: String,
    submit_site: String,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    executable_mb: f64,
    #[serde(default)]
    output_mb: f64,
    compute_demand: f64,
    #[serde(default = "one_u32")]
    sub_jobs: u32,
    #[serde(default)]
    submit_time: f64,
    /// Minimum per-CPU power of candidate sites; 0 disables.
    #[serde(default)]
    min_power: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileSection {
    jobs_per_day: f64,
    parallel_target: Option<u32>,
    #[serde(default)]
    dataset_pool: Vec<String>,
    inputs_per_job: Option<[u32; 2]>,
    demand: Option<[f64; 2]>,
    bulk_fraction: Option<f64>,
    sub_jobs_per_bundle: Option<[u32; 2]>,
    #[serde(default)]
    executable_mb: f64,
    #[serde(default)]
    output_mb: f64,
    #[serde(default)]
    submit_sites: Vec<String>,
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

/// A parsed and validated scenario, ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: ValidatedTopology,
    pub jobs: Vec<JobDescriptor>,
    pub weights: WeightVector,
    pub sim: SimConfig,
    profile: Option<WorkloadProfile>,
    inline_jobs: Option<Vec<JobDescriptor>>,
}

impl Scenario {
    /// The same scenario restricted (or regenerated) to exactly `n` jobs.
    /// Profile workloads take the first `n` arrivals of the seeded stream;
    /// inline workloads take their first `n` entries.
    pub fn jobs_for_count(&self, n: usize) -> Result<Vec<JobDescriptor>, ScenarioError> {
        if let Some(profile) = &self.profile {
            return Ok(generate_count(profile, n, &self.topology)?);
        }
        let inline = self.inline_jobs.as_ref().expect("inline or profile");
        if inline.len() < n {
            return Err(ScenarioError::Invalid(format!(
                "workload lists {} inline job(s); cannot run a sweep point of {n}",
                inline.len()
            )));
        }
        Ok(inline[..n].to_vec())
    }
}

/// Loads and validates a scenario, optionally forcing the seed.
pub fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = toml::from_str(&text)?;

    if file.schema != SCHEMA_VERSION {
        return Err(ScenarioError::Invalid(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            file.schema
        )));
    }
    let policy: SchedulerPolicy = file
        .scheduler
        .parse()
        .map_err(ScenarioError::Invalid)?;
    let seed = seed_override.unwrap_or(file.seed);

    let weights = build_weights(file.weights.as_ref())?;

    let sites: Vec<SiteDescriptor> = file
        .sites
        .iter()
        .map(|s| {
            let mut desc = SiteDescriptor::new(s.id.as_str(), s.cpus, s.power_per_cpu);
            desc.storage_mb = s.storage_mb;
            desc
        })
        .collect();

    let mut links: Vec<LinkMetrics> = file
        .links
        .iter()
        .map(|l| {
            LinkMetrics::new(
                l.src.as_str(),
                l.dst.as_str(),
                l.rtt_ms,
                l.loss,
                l.jitter_ms,
                l.bandwidth_mbps,
            )
        })
        .collect();
    if let Some(defaults) = &file.link_defaults {
        fill_link_defaults(&mut links, &file.sites, defaults);
    }

    let mut datasets: Vec<DatasetDescriptor> = file
        .datasets
        .iter()
        .map(|d| DatasetDescriptor::new(d.id.as_str(), d.size_mb, d.replicas.iter().map(String::as_str)))
        .collect();
    if let Some(gen) = &file.dataset_gen {
        if gen.sites.is_empty() {
            return Err(ScenarioError::Invalid(
                "dataset_gen.sites must name at least one site".into(),
            ));
        }
        let sites: Vec<SiteId> = gen.sites.iter().map(|s| s.as_str().into()).collect();
        datasets.extend(synth_dataset_pool(
            gen.count,
            &gen.prefix,
            &sites,
            gen.size_mb.map(|[lo, hi]| (lo, hi)),
            gen.seed,
        ));
    }

    let inline_jobs: Option<Vec<JobDescriptor>> = file.workload.jobs.as_ref().map(|jobs| {
        jobs.iter()
            .map(|j| JobDescriptor {
                id: j.id.as_str().into(),
                submit_site: j.submit_site.as_str().into(),
                input_datasets: j.inputs.iter().map(|d| d.as_str().into()).collect(),
                executable_mb: j.executable_mb,
                output_mb: j.output_mb,
                compute_demand: j.compute_demand,
                sub_job_count: j.sub_jobs,
                submit_time: j.submit_time,
                min_power_per_cpu: j.min_power,
            })
            .collect()
    });

    match (&inline_jobs, &file.workload.profile) {
        (Some(_), Some(_)) => {
            return Err(ScenarioError::Invalid(
                "workload must define either inline jobs or a profile, not both".into(),
            ))
        }
        (None, None) => {
            return Err(ScenarioError::Invalid(
                "workload defines neither inline jobs nor a profile".into(),
            ))
        }
        _ => {}
    }

    let profile = file.workload.profile.as_ref().map(|p| {
        let defaults = WorkloadProfile::default();
        WorkloadProfile {
            jobs_per_day: p.jobs_per_day,
            parallel_target: p.parallel_target.unwrap_or(defaults.parallel_target),
            dataset_pool: p.dataset_pool.iter().map(|d| d.as_str().into()).collect(),
            inputs_per_job: p
                .inputs_per_job
                .map(|[a, b]| (a, b))
                .unwrap_or(defaults.inputs_per_job),
            demand_range: p.demand.map(|[a, b]| (a, b)).unwrap_or(defaults.demand_range),
            bulk_fraction: p.bulk_fraction.unwrap_or(defaults.bulk_fraction),
            sub_jobs_per_bundle: p
                .sub_jobs_per_bundle
                .map(|[a, b]| (a, b))
                .unwrap_or(defaults.sub_jobs_per_bundle),
            executable_mb: p.executable_mb,
            output_mb: p.output_mb,
            submit_sites: p.submit_sites.iter().map(|s| s.as_str().into()).collect(),
            seed,
        }
    });

    // Validate against the concrete job list (inline) or a generated one.
    let topology = validate_topology(sites, links, datasets, &[])?;
    let jobs = match (&inline_jobs, &profile) {
        (Some(jobs), None) => jobs.clone(),
        (None, Some(profile)) => {
            let horizon = file.workload.horizon_seconds.ok_or_else(|| {
                ScenarioError::Invalid(
                    "workload.horizon_seconds is required with a profile".into(),
                )
            })?;
            generate(profile, horizon, &topology)?
        }
        _ => unreachable!("checked above"),
    };
    let (sites, links, datasets) = topology.into_parts();
    let topology = validate_topology(sites, links, datasets, &jobs)?;

    if policy == SchedulerPolicy::Diana {
        require_full_mesh(&topology)?;
    }

    let mut sim = SimConfig {
        seed,
        policy,
        ..SimConfig::default()
    };
    if let Some(k) = file.shortlist_k {
        if k < 1 {
            return Err(ScenarioError::Invalid("shortlist_k must be at least 1".into()));
        }
        sim.shortlist_k = k;
    }
    if let Some(threshold) = file.export_threshold {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(ScenarioError::Invalid(
                "export_threshold must be finite and >= 0".into(),
            ));
        }
        sim.export_threshold = threshold;
    }
    if let Some(telemetry) = &file.telemetry {
        if let Some(epoch) = telemetry.epoch_seconds {
            if !epoch.is_finite() || epoch <= 0.0 {
                return Err(ScenarioError::Invalid(
                    "telemetry.epoch_seconds must be finite and > 0".into(),
                ));
            }
            sim.epoch_seconds = epoch;
        }
        if let Some(window) = telemetry.window {
            if window < 1 {
                return Err(ScenarioError::Invalid(
                    "telemetry.window must be at least 1".into(),
                ));
            }
            sim.telemetry_window = window;
        }
        if let Some(noise) = telemetry.noise_frac {
            if !(0.0..1.0).contains(&noise) {
                return Err(ScenarioError::Invalid(
                    "telemetry.noise_frac must be in [0, 1)".into(),
                ));
            }
            sim.telemetry_noise = noise;
        }
    }
    if let Some(overrides) = &file.cost_overrides {
        sim.background_jobs = overrides.background_jobs;
        if let Some(losses) = overrides.dtc_losses {
            if !losses.is_finite() || losses < 0.0 {
                return Err(ScenarioError::Invalid(
                    "cost_overrides.dtc_losses must be finite and >= 0".into(),
                ));
            }
        }
        sim.dtc_losses_override = overrides.dtc_losses;
        sim.site_self_cost = overrides.site_self_cost.unwrap_or(0.0);
        for (site, load) in &overrides.site_load {
            let id = SiteId::from(site.as_str());
            if topology.site(&id).is_none() {
                return Err(ScenarioError::Invalid(format!(
                    "cost_overrides.site_load names unknown site `{site}`"
                )));
            }
            if !load.is_finite() || *load < 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "cost_overrides.site_load for `{site}` must be finite and >= 0"
                )));
            }
            sim.site_load_override.insert(id, *load);
        }
    }
    for s in &file.sites {
        if s.backlog > 0 {
            sim.backlog.insert(s.id.as_str().into(), s.backlog);
        }
    }

    Ok(Scenario {
        topology,
        jobs,
        weights,
        sim,
        profile,
        inline_jobs,
    })
}

fn build_weights(section: Option<&WeightsSection>) -> Result<WeightVector, ScenarioError> {
    let mut weights = WeightVector::default();
    if let Some(w) = section {
        if let Some(v) = w.w1 {
            weights.rtt_weight = v;
        }
        if let Some(v) = w.w2 {
            weights.loss_weight = v;
        }
        if let Some(v) = w.w3 {
            weights.jitter_weight = v;
        }
        if let Some(v) = w.w5 {
            weights.local_queue_weight = v;
        }
        if let Some(v) = w.w6 {
            weights.global_queue_weight = v;
        }
        if let Some(v) = w.w7 {
            weights.site_load_weight = v;
        }
        if let Some(v) = w.w8 {
            weights.input_transfer_weight = v;
        }
        if let Some(v) = w.w9 {
            weights.staging_weight = v;
        }
        if let Some(v) = w.w10 {
            weights.candidate_site_weight = v;
        }
    }
    weights.validate()?;
    Ok(weights)
}

fn fill_link_defaults(
    links: &mut Vec<LinkMetrics>,
    sites: &[SiteSection],
    defaults: &LinkDefaultsSection,
) {
    let mut present: std::collections::BTreeSet<(String, String)> = links
        .iter()
        .map(|l| (l.src.to_string(), l.dst.to_string()))
        .collect();
    for a in sites {
        for b in sites {
            if a.id == b.id || present.contains(&(a.id.clone(), b.id.clone())) {
                continue;
            }
            links.push(LinkMetrics::new(
                a.id.as_str(),
                b.id.as_str(),
                defaults.rtt_ms,
                defaults.loss,
                defaults.jitter_ms,
                defaults.bandwidth_mbps,
            ));
            present.insert((a.id.clone(), b.id.clone()));
        }
    }
}

/// The cost-driven scheduler materialises pairwise matrices over arbitrary
/// shortlists, so it needs metrics for every ordered pair up front.
fn require_full_mesh(topology: &ValidatedTopology) -> Result<(), ScenarioError> {
    for a in topology.site_ids() {
        for b in topology.site_ids() {
            if a != b && !topology.links().contains_key(&(a.clone(), b.clone())) {
                return Err(ScenarioError::Invalid(format!(
                    "scheduler `diana` needs link metrics for every ordered site pair; \
                     missing {a} -> {b} (add the link or a [link_defaults] section)"
                )));
            }
        }
    }
    Ok(())
}
