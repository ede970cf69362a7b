//! Domain types shared by every other module, plus topology validation.
//!
//! Unit conventions, fixed globally: data sizes in megabytes, bandwidth in
//! megabits/second, simulation time in seconds, RTT and jitter in
//! milliseconds. GB values from scenario material convert to MB with a
//! factor of 1024.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Sentinel bandwidth for the implicit intra-site link (src == dst).
pub const INTRA_SITE_BANDWIDTH_MBPS: f64 = f64::INFINITY;

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type! {
    /// Opaque site identifier. The derived total order is the deterministic
    /// tie-break used everywhere a ranking can tie.
    SiteId
}

id_type! {
    /// Logical dataset identifier. A dataset is an atomic unit; physical
    /// file layout is not modelled.
    DatasetId
}

id_type! {
    /// Job (or sub-job bundle) identifier.
    JobId
}

/// A Grid site: a computing element with `cpu_count` identical CPUs and an
/// attached storage element.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDescriptor {
    pub id: SiteId,
    pub cpu_count: u32,
    /// Abstract compute units delivered per second by one CPU.
    pub power_per_cpu: f64,
    /// Descriptive only; capacity is never enforced during simulation.
    pub storage_mb: f64,
}

impl SiteDescriptor {
    pub fn new(id: impl Into<SiteId>, cpu_count: u32, power_per_cpu: f64) -> Self {
        Self {
            id: id.into(),
            cpu_count,
            power_per_cpu,
            storage_mb: 0.0,
        }
    }

    /// Total site power P_i = cpu_count × power_per_cpu.
    pub fn total_power(&self) -> f64 {
        f64::from(self.cpu_count) * self.power_per_cpu
    }
}

/// One directed network observation between two sites. Directional by
/// design: (src, dst) and (dst, src) may carry different values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    pub src: SiteId,
    pub dst: SiteId,
    pub rtt_ms: f64,
    /// Packet loss fraction in [0, 1].
    pub loss_rate: f64,
    pub jitter_ms: f64,
    /// Strictly positive: a zero-bandwidth link is an absent link.
    pub bandwidth_mbps: f64,
    /// Simulation time of the observation.
    pub observed_at: f64,
}

impl LinkMetrics {
    pub fn new(
        src: impl Into<SiteId>,
        dst: impl Into<SiteId>,
        rtt_ms: f64,
        loss_rate: f64,
        jitter_ms: f64,
        bandwidth_mbps: f64,
    ) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            rtt_ms,
            loss_rate,
            jitter_ms,
            bandwidth_mbps,
            observed_at: 0.0,
        }
    }

    /// The implicit zero-cost link every site has to itself.
    pub fn intra_site(site: &SiteId, observed_at: f64) -> Self {
        Self {
            src: site.clone(),
            dst: site.clone(),
            rtt_ms: 0.0,
            loss_rate: 0.0,
            jitter_ms: 0.0,
            bandwidth_mbps: INTRA_SITE_BANDWIDTH_MBPS,
            observed_at,
        }
    }
}

/// Directed link metrics keyed by (src, dst).
pub type LinkMap = BTreeMap<(SiteId, SiteId), LinkMetrics>;

/// A dataset with its replica locations. Replicas are exact copies, so the
/// size is a property of the dataset, not of the replica.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDescriptor {
    pub id: DatasetId,
    pub size_mb: f64,
    pub replicas: BTreeSet<SiteId>,
}

impl DatasetDescriptor {
    pub fn new<I, S>(id: impl Into<DatasetId>, size_mb: f64, replicas: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<SiteId>,
    {
        Self {
            id: id.into(),
            size_mb,
            replicas: replicas.into_iter().map(Into::into).collect(),
        }
    }
}

/// A job or sub-job bundle. When `sub_job_count > 1` all sub-jobs share the
/// same inputs and are placed on a single site; each sub-job occupies one
/// CPU for `compute_demand / power_per_cpu` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct JobDescriptor {
    pub id: JobId,
    pub submit_site: SiteId,
    pub input_datasets: Vec<DatasetId>,
    /// Executable size (the AD term of the transfer cost).
    pub executable_mb: f64,
    /// Expected output size (the OD term).
    pub output_mb: f64,
    /// Abstract compute units, per sub-job.
    pub compute_demand: f64,
    pub sub_job_count: u32,
    pub submit_time: f64,
    /// Minimum per-CPU power a candidate site must offer; 0 disables the
    /// filter.
    pub min_power_per_cpu: f64,
}

impl JobDescriptor {
    pub fn new(
        id: impl Into<JobId>,
        submit_site: impl Into<SiteId>,
        compute_demand: f64,
    ) -> Self {
        Self {
            id: id.into(),
            submit_site: submit_site.into(),
            input_datasets: Vec::new(),
            executable_mb: 0.0,
            output_mb: 0.0,
            compute_demand,
            sub_job_count: 1,
            submit_time: 0.0,
            min_power_per_cpu: 0.0,
        }
    }

    pub fn with_inputs<I, D>(mut self, inputs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: Into<DatasetId>,
    {
        self.input_datasets = inputs.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_sub_jobs(mut self, count: u32) -> Self {
        self.sub_job_count = count;
        self
    }

    pub fn with_submit_time(mut self, t: f64) -> Self {
        self.submit_time = t;
        self
    }

    pub fn with_io(mut self, executable_mb: f64, output_mb: f64) -> Self {
        self.executable_mb = executable_mb;
        self.output_mb = output_mb;
        self
    }

    pub fn with_min_power(mut self, min_power_per_cpu: f64) -> Self {
        self.min_power_per_cpu = min_power_per_cpu;
        self
    }

    /// Whether `site` satisfies the job's power requirement.
    pub fn eligible(&self, site: &SiteDescriptor) -> bool {
        site.power_per_cpu >= self.min_power_per_cpu
    }
}

/// Importance weights of the cost terms. Each weight is either 0 (term
/// deliberately ignored) or within [1, 20], 20 marking maximum significance.
/// The index gap between the jitter and local-queue weights is intentional;
/// there is no fourth weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    /// w1, applied to RTT in the network loss aggregate.
    pub rtt_weight: f64,
    /// w2, applied to the packet-loss fraction.
    pub loss_weight: f64,
    /// w3, applied to jitter.
    pub jitter_weight: f64,
    /// w5, applied to the local queue term Q_i/P_i.
    pub local_queue_weight: f64,
    /// w6, applied to the global queue term Q/P_i.
    pub global_queue_weight: f64,
    /// w7, applied to the site load.
    pub site_load_weight: f64,
    /// w8, applied to the input-data transfer term.
    pub input_transfer_weight: f64,
    /// w9, applied to the executable+output staging term.
    pub staging_weight: f64,
    /// w10, applied to the candidate-site self term.
    pub candidate_site_weight: f64,
}

impl Default for WeightVector {
    fn default() -> Self {
        Self {
            rtt_weight: 1.0,
            loss_weight: 1.0,
            jitter_weight: 1.0,
            local_queue_weight: 10.0,
            global_queue_weight: 5.0,
            site_load_weight: 20.0,
            input_transfer_weight: 10.0,
            staging_weight: 1.0,
            candidate_site_weight: 1.0,
        }
    }
}

impl WeightVector {
    /// Field views as (external key, value) pairs, in index order.
    pub fn entries(&self) -> [(&'static str, f64); 9] {
        [
            ("w1", self.rtt_weight),
            ("w2", self.loss_weight),
            ("w3", self.jitter_weight),
            ("w5", self.local_queue_weight),
            ("w6", self.global_queue_weight),
            ("w7", self.site_load_weight),
            ("w8", self.input_transfer_weight),
            ("w9", self.staging_weight),
            ("w10", self.candidate_site_weight),
        ]
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for (key, value) in self.entries() {
            let ok = value == 0.0 || (1.0..=20.0).contains(&value);
            if !ok {
                return Err(ValidationError::WeightOutOfRange {
                    key,
                    value,
                });
            }
        }
        Ok(())
    }

    /// Every weight multiplied by a common positive factor. Selection is
    /// invariant under this scaling.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rtt_weight: self.rtt_weight * factor,
            loss_weight: self.loss_weight * factor,
            jitter_weight: self.jitter_weight * factor,
            local_queue_weight: self.local_queue_weight * factor,
            global_queue_weight: self.global_queue_weight * factor,
            site_load_weight: self.site_load_weight * factor,
            input_transfer_weight: self.input_transfer_weight * factor,
            staging_weight: self.staging_weight * factor,
            candidate_site_weight: self.candidate_site_weight * factor,
        }
    }
}

/// Topology validation failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("duplicate site id `{0}`")]
    DuplicateSiteId(SiteId),
    #[error("duplicate dataset id `{0}`")]
    DuplicateDatasetId(DatasetId),
    #[error("site `{site}`: {reason}")]
    InvalidSite { site: SiteId, reason: String },
    #[error("link {src} -> {dst}: {reason}")]
    InvalidLink {
        src: SiteId,
        dst: SiteId,
        reason: String,
    },
    #[error("duplicate link {src} -> {dst}")]
    DuplicateLink { src: SiteId, dst: SiteId },
    #[error("link {src} -> {dst} has non-positive bandwidth")]
    NonPositiveBandwidth { src: SiteId, dst: SiteId },
    #[error("dataset `{dataset}` replicated on unknown site `{site}`")]
    UnknownReplicaSite { dataset: DatasetId, site: SiteId },
    #[error("dataset `{dataset}` has no replicas")]
    EmptyReplicas { dataset: DatasetId },
    #[error("dataset `{dataset}`: {reason}")]
    InvalidDataset { dataset: DatasetId, reason: String },
    #[error("job `{job}`: {reason}")]
    InvalidJob { job: JobId, reason: String },
    #[error("no link metrics for required pair {src} -> {dst}")]
    MissingLink { src: SiteId, dst: SiteId },
    #[error("weight {key} must be 0 (ignore) or within the 1 to 20 range, got {value}")]
    WeightOutOfRange { key: &'static str, value: f64 },
}

/// A checked topology: unique sites, well-formed links and datasets, and a
/// link for every ordered pair the given jobs can exercise.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedTopology {
    sites: BTreeMap<SiteId, SiteDescriptor>,
    links: LinkMap,
    datasets: BTreeMap<DatasetId, DatasetDescriptor>,
}

impl ValidatedTopology {
    pub fn sites(&self) -> &BTreeMap<SiteId, SiteDescriptor> {
        &self.sites
    }

    pub fn site(&self, id: &SiteId) -> Option<&SiteDescriptor> {
        self.sites.get(id)
    }

    pub fn site_ids(&self) -> impl Iterator<Item = &SiteId> {
        self.sites.keys()
    }

    pub fn links(&self) -> &LinkMap {
        &self.links
    }

    pub fn datasets(&self) -> &BTreeMap<DatasetId, DatasetDescriptor> {
        &self.datasets
    }

    pub fn dataset(&self, id: &DatasetId) -> Option<&DatasetDescriptor> {
        self.datasets.get(id)
    }

    /// Datasets with a replica on `site` (the inverse of the replica sets).
    pub fn hosted_datasets(&self, site: &SiteId) -> BTreeSet<&DatasetId> {
        self.datasets
            .values()
            .filter(|d| d.replicas.contains(site))
            .map(|d| &d.id)
            .collect()
    }

    /// Decomposes back into the raw parts accepted by [`validate_topology`].
    pub fn into_parts(self) -> (Vec<SiteDescriptor>, Vec<LinkMetrics>, Vec<DatasetDescriptor>) {
        (
            self.sites.into_values().collect(),
            self.links.into_values().collect(),
            self.datasets.into_values().collect(),
        )
    }
}

/// Validates a topology against the jobs that will run on it.
///
/// Link coverage is job-driven: for every dataset a job reads, each replica
/// host must reach every other site (any site may be chosen for execution,
/// and the locator ranks every replica), and each submission site needs its
/// full outgoing row (executables) and incoming column (output staging).
/// Pairs no job can exercise are not required.
pub fn validate_topology(
    sites: Vec<SiteDescriptor>,
    links: Vec<LinkMetrics>,
    datasets: Vec<DatasetDescriptor>,
    jobs: &[JobDescriptor],
) -> Result<ValidatedTopology, ValidationError> {
    let mut site_map = BTreeMap::new();
    for site in sites {
        if site.cpu_count < 1 {
            return Err(ValidationError::InvalidSite {
                site: site.id.clone(),
                reason: "cpu_count must be at least 1".into(),
            });
        }
        if !site.power_per_cpu.is_finite() || site.power_per_cpu <= 0.0 {
            return Err(ValidationError::InvalidSite {
                site: site.id.clone(),
                reason: format!("power_per_cpu must be > 0, got {}", site.power_per_cpu),
            });
        }
        if site.storage_mb < 0.0 {
            return Err(ValidationError::InvalidSite {
                site: site.id.clone(),
                reason: "storage_mb must be >= 0".into(),
            });
        }
        if site_map.contains_key(&site.id) {
            return Err(ValidationError::DuplicateSiteId(site.id));
        }
        site_map.insert(site.id.clone(), site);
    }

    let mut link_map: LinkMap = BTreeMap::new();
    for link in links {
        if link.src == link.dst {
            return Err(ValidationError::InvalidLink {
                src: link.src,
                dst: link.dst,
                reason: "intra-site links are implicit and must not be listed".into(),
            });
        }
        for endpoint in [&link.src, &link.dst] {
            if !site_map.contains_key(endpoint) {
                return Err(ValidationError::InvalidLink {
                    src: link.src.clone(),
                    dst: link.dst.clone(),
                    reason: format!("unknown endpoint `{endpoint}`"),
                });
            }
        }
        if !link.bandwidth_mbps.is_finite() || link.bandwidth_mbps <= 0.0 {
            return Err(ValidationError::NonPositiveBandwidth {
                src: link.src,
                dst: link.dst,
            });
        }
        if !(0.0..=1.0).contains(&link.loss_rate) {
            return Err(ValidationError::InvalidLink {
                src: link.src,
                dst: link.dst,
                reason: format!("loss_rate must be in [0, 1], got {}", link.loss_rate),
            });
        }
        if link.rtt_ms < 0.0 || link.jitter_ms < 0.0 {
            return Err(ValidationError::InvalidLink {
                src: link.src,
                dst: link.dst,
                reason: "rtt_ms and jitter_ms must be >= 0".into(),
            });
        }
        let key = (link.src.clone(), link.dst.clone());
        if link_map.contains_key(&key) {
            return Err(ValidationError::DuplicateLink {
                src: key.0,
                dst: key.1,
            });
        }
        link_map.insert(key, link);
    }

    let mut dataset_map = BTreeMap::new();
    for dataset in datasets {
        if !dataset.size_mb.is_finite() || dataset.size_mb <= 0.0 {
            return Err(ValidationError::InvalidDataset {
                dataset: dataset.id.clone(),
                reason: format!("size_mb must be > 0, got {}", dataset.size_mb),
            });
        }
        if dataset.replicas.is_empty() {
            return Err(ValidationError::EmptyReplicas {
                dataset: dataset.id,
            });
        }
        for replica in &dataset.replicas {
            if !site_map.contains_key(replica) {
                return Err(ValidationError::UnknownReplicaSite {
                    dataset: dataset.id.clone(),
                    site: replica.clone(),
                });
            }
        }
        if dataset_map.contains_key(&dataset.id) {
            return Err(ValidationError::DuplicateDatasetId(dataset.id));
        }
        dataset_map.insert(dataset.id.clone(), dataset);
    }

    for job in jobs {
        if !site_map.contains_key(&job.submit_site) {
            return Err(ValidationError::InvalidJob {
                job: job.id.clone(),
                reason: format!("unknown submit site `{}`", job.submit_site),
            });
        }
        if !job.compute_demand.is_finite() || job.compute_demand <= 0.0 {
            return Err(ValidationError::InvalidJob {
                job: job.id.clone(),
                reason: "compute_demand must be > 0".into(),
            });
        }
        if job.sub_job_count < 1 {
            return Err(ValidationError::InvalidJob {
                job: job.id.clone(),
                reason: "sub_job_count must be at least 1".into(),
            });
        }
        if job.executable_mb < 0.0 || job.output_mb < 0.0 {
            return Err(ValidationError::InvalidJob {
                job: job.id.clone(),
                reason: "executable_mb and output_mb must be >= 0".into(),
            });
        }
        if !job.submit_time.is_finite() || job.submit_time < 0.0 {
            return Err(ValidationError::InvalidJob {
                job: job.id.clone(),
                reason: "submit_time must be finite and >= 0".into(),
            });
        }
        for input in &job.input_datasets {
            if !dataset_map.contains_key(input) {
                return Err(ValidationError::InvalidJob {
                    job: job.id.clone(),
                    reason: format!("unknown input dataset `{input}`"),
                });
            }
        }
        if !site_map.values().any(|site| job.eligible(site)) {
            return Err(ValidationError::InvalidJob {
                job: job.id.clone(),
                reason: format!(
                    "no site offers the required per-CPU power {}",
                    job.min_power_per_cpu
                ),
            });
        }
    }

    // Required pair coverage. Sources: replica hosts of every dataset some
    // job reads. Rows and columns: each submission site.
    let mut required: BTreeSet<(SiteId, SiteId)> = BTreeSet::new();
    for job in jobs {
        for input in &job.input_datasets {
            let dataset = &dataset_map[input];
            for replica in &dataset.replicas {
                for site in site_map.keys() {
                    if site != replica {
                        required.insert((replica.clone(), site.clone()));
                    }
                }
            }
        }
        for site in site_map.keys() {
            if *site != job.submit_site {
                required.insert((job.submit_site.clone(), site.clone()));
                required.insert((site.clone(), job.submit_site.clone()));
            }
        }
    }
    for (src, dst) in required {
        if !link_map.contains_key(&(src.clone(), dst.clone())) {
            return Err(ValidationError::MissingLink { src, dst });
        }
    }

    Ok(ValidatedTopology {
        sites: site_map,
        links: link_map,
        datasets: dataset_map,
    })
}
