//! Placement cost estimation: network, computation and data-transfer cost,
//! combined into a total per (submission site, execution site) pair.
//!
//! All functions here are pure; identical inputs give bit-identical outputs.
//!
//! The three components:
//!
//! - network cost: `losses / bandwidth`, with
//!   `losses = rtt·w1 + loss·w2 + jitter·w3` and a proportionality constant
//!   of 1. Intra-site cost is exactly 0.
//! - computation cost: `(Q_i/P_i)·w5 + (Q/P_i)·w6 + SiteLoad_i·w7`, where
//!   `P_i` is the total site power and `SiteLoad_i` defaults to `Q_i/P_i`.
//! - data transfer cost:
//!   `w8·ID·nc(data→exec) + w9·(AD+OD)·nc(submit→exec) + w10·(N·(ID+AD)+OD)·nc_site(exec)`,
//!   where `ID` is the summed input size, `AD` the executable size, `OD` the
//!   output size and `N` the sub-job count placed at the candidate site.
//!   `nc_site` is the candidate site's internal staging cost and defaults
//!   to 0.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    DatasetId, JobDescriptor, LinkMap, LinkMetrics, SiteDescriptor, SiteId, ValidatedTopology,
    WeightVector,
};

/// Loss floor substituted when a rate estimate is needed on a zero-loss
/// link; the raw bound diverges there.
pub const DEFAULT_LOSS_FLOOR: f64 = 1e-6;

/// Default TCP maximum segment size used for rate estimates, in bytes.
pub const DEFAULT_MSS_BYTES: f64 = 1460.0;

/// Gigabyte to megabyte conversion used throughout scenario material.
pub const MB_PER_GB: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("loss rate is zero; the rate bound is infinite (substitute a loss floor)")]
    ZeroLoss,
    #[error("round-trip time must be > 0 for a rate estimate")]
    ZeroRtt,
    #[error("no link metrics for {src} -> {dst}")]
    MissingLink { src: SiteId, dst: SiteId },
    #[error("site `{0}` not present in the load snapshot or topology")]
    UnknownSite(SiteId),
    #[error("dataset `{0}` is not registered")]
    UnknownDataset(DatasetId),
    #[error("no site satisfies the job's resource requirements")]
    NoEligibleSites,
    #[error("no replica of `{dataset}` is reachable from `{site}`")]
    NoReachableReplica { dataset: DatasetId, site: SiteId },
}

/// Upper bound on a TCP transfer rate in bytes/second:
/// `(mss / rtt) × (1 / sqrt(loss))`.
pub fn mathis_rate(mss_bytes: f64, rtt_ms: f64, loss_rate: f64) -> Result<f64, CostError> {
    if rtt_ms <= 0.0 {
        return Err(CostError::ZeroRtt);
    }
    if loss_rate <= 0.0 {
        return Err(CostError::ZeroLoss);
    }
    let rtt_seconds = rtt_ms / 1000.0;
    Ok((mss_bytes / rtt_seconds) * (1.0 / loss_rate.sqrt()))
}

/// Total placement cost and its three components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub network_cost: f64,
    pub compute_cost: f64,
    pub data_transfer_cost: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(network_cost: f64, compute_cost: f64, data_transfer_cost: f64) -> Self {
        Self {
            network_cost,
            compute_cost,
            data_transfer_cost,
            total: network_cost + compute_cost + data_transfer_cost,
        }
    }
}

/// Queue state the computation cost is evaluated against.
///
/// The canonical constructor derives everything from per-site waiting-job
/// counts: `Q = Σ Q_i + background` and `SiteLoad_i = Q_i / P_i`.
/// `background_jobs` models backlog on sites outside the topology, and
/// `site_load` overrides exist so scenario fixtures can pin a reference
/// load value; both default to zero/empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalLoadSnapshot {
    per_site_queue: BTreeMap<SiteId, u64>,
    background_jobs: u64,
    site_load_override: BTreeMap<SiteId, f64>,
}

impl GlobalLoadSnapshot {
    pub fn from_queues<I, S>(queues: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<SiteId>,
    {
        Self {
            per_site_queue: queues.into_iter().map(|(s, q)| (s.into(), q)).collect(),
            background_jobs: 0,
            site_load_override: BTreeMap::new(),
        }
    }

    /// Zero queues for every site of the topology.
    pub fn empty(topology: &ValidatedTopology) -> Self {
        Self::from_queues(topology.site_ids().map(|s| (s.clone(), 0)))
    }

    pub fn with_background_jobs(mut self, jobs: u64) -> Self {
        self.background_jobs = jobs;
        self
    }

    /// Pins the load of one site to an explicit value instead of Q_i/P_i.
    pub fn with_site_load(mut self, site: impl Into<SiteId>, load: f64) -> Self {
        self.site_load_override.insert(site.into(), load);
        self
    }

    pub fn queue_at(&self, site: &SiteId) -> Option<u64> {
        self.per_site_queue.get(site).copied()
    }

    /// Q: waiting jobs over all modelled sites plus off-model background.
    pub fn total_waiting(&self) -> u64 {
        self.per_site_queue.values().sum::<u64>() + self.background_jobs
    }

    pub fn site_load(&self, site: &SiteDescriptor) -> Option<f64> {
        if let Some(load) = self.site_load_override.get(&site.id) {
            return Some(*load);
        }
        let queue = self.queue_at(&site.id)?;
        Some(queue as f64 / site.total_power())
    }
}

/// The cost engine: weight vector plus the few scenario-tunable constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub weights: WeightVector,
    /// When set, the transfer-cost terms use `override / bandwidth` as the
    /// network cost instead of the measured losses. Scenario fixtures use
    /// this to pin reference transfer arithmetic.
    pub dtc_losses_override: Option<f64>,
    /// `nc_site(j)`: the candidate site's internal staging cost.
    pub site_self_cost: f64,
    pub loss_floor: f64,
    pub mss_bytes: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self::new(WeightVector::default())
    }
}

impl CostModel {
    pub fn new(weights: WeightVector) -> Self {
        Self {
            weights,
            dtc_losses_override: None,
            site_self_cost: 0.0,
            loss_floor: DEFAULT_LOSS_FLOOR,
            mss_bytes: DEFAULT_MSS_BYTES,
        }
    }

    /// Weighted loss aggregate of one link:
    /// `rtt·w1 + loss·w2 + jitter·w3`.
    pub fn losses(&self, metrics: &LinkMetrics) -> f64 {
        metrics.rtt_ms * self.weights.rtt_weight
            + metrics.loss_rate * self.weights.loss_weight
            + metrics.jitter_ms * self.weights.jitter_weight
    }

    /// Network cost of one link: `losses / bandwidth`; exactly 0 intra-site.
    pub fn network_cost(&self, metrics: &LinkMetrics) -> f64 {
        if metrics.src == metrics.dst {
            return 0.0;
        }
        self.losses(metrics) / metrics.bandwidth_mbps
    }

    /// Network cost between two sites, looked up in a link map.
    pub fn network_cost_between(
        &self,
        links: &LinkMap,
        src: &SiteId,
        dst: &SiteId,
    ) -> Result<f64, CostError> {
        if src == dst {
            return Ok(0.0);
        }
        let metrics = lookup(links, src, dst)?;
        Ok(self.network_cost(metrics))
    }

    /// Network cost as seen by the transfer-cost terms: identical to
    /// [`Self::network_cost_between`] unless a losses override is pinned.
    pub fn transfer_network_cost(
        &self,
        links: &LinkMap,
        src: &SiteId,
        dst: &SiteId,
    ) -> Result<f64, CostError> {
        if src == dst {
            return Ok(0.0);
        }
        let metrics = lookup(links, src, dst)?;
        match self.dtc_losses_override {
            Some(losses) => Ok(losses / metrics.bandwidth_mbps),
            None => Ok(self.network_cost(metrics)),
        }
    }

    /// Computation cost of placing work at `site` under `snapshot`.
    pub fn compute_cost(
        &self,
        site: &SiteDescriptor,
        snapshot: &GlobalLoadSnapshot,
    ) -> Result<f64, CostError> {
        let queue = snapshot
            .queue_at(&site.id)
            .ok_or_else(|| CostError::UnknownSite(site.id.clone()))?;
        let load = snapshot
            .site_load(site)
            .ok_or_else(|| CostError::UnknownSite(site.id.clone()))?;
        let power = site.total_power();
        let w = &self.weights;
        Ok(queue as f64 / power * w.local_queue_weight
            + snapshot.total_waiting() as f64 / power * w.global_queue_weight
            + load * w.site_load_weight)
    }

    /// Data transfer cost with all inputs staged from a single data site.
    ///
    /// `nc` is the network-cost oracle used for both the input and the
    /// staging term; tests may inject arbitrary oracles.
    pub fn data_transfer_cost<F>(
        &self,
        topology: &ValidatedTopology,
        job: &JobDescriptor,
        data_site: &SiteId,
        exec_site: &SiteId,
        submit_site: &SiteId,
        nc: F,
    ) -> Result<f64, CostError>
    where
        F: Fn(&SiteId, &SiteId) -> Result<f64, CostError>,
    {
        let input_mb = self.total_input_mb(topology, job)?;
        let input_term = if input_mb > 0.0 {
            self.weights.input_transfer_weight * input_mb * nc(data_site, exec_site)?
        } else {
            0.0
        };
        Ok(input_term + self.staging_terms(job, input_mb, exec_site, submit_site, &nc)?)
    }

    /// Data transfer cost with an explicit replica choice per dataset; the
    /// input term is summed per dataset against its chosen source.
    pub fn data_transfer_cost_with_replicas<F>(
        &self,
        topology: &ValidatedTopology,
        job: &JobDescriptor,
        replicas: &BTreeMap<DatasetId, SiteId>,
        exec_site: &SiteId,
        submit_site: &SiteId,
        nc: F,
    ) -> Result<f64, CostError>
    where
        F: Fn(&SiteId, &SiteId) -> Result<f64, CostError>,
    {
        let mut input_term = 0.0;
        let mut input_mb = 0.0;
        for dataset_id in &job.input_datasets {
            let dataset = topology
                .dataset(dataset_id)
                .ok_or_else(|| CostError::UnknownDataset(dataset_id.clone()))?;
            let source = replicas
                .get(dataset_id)
                .ok_or_else(|| CostError::UnknownDataset(dataset_id.clone()))?;
            input_mb += dataset.size_mb;
            input_term +=
                self.weights.input_transfer_weight * dataset.size_mb * nc(source, exec_site)?;
        }
        Ok(input_term + self.staging_terms(job, input_mb, exec_site, submit_site, &nc)?)
    }

    fn staging_terms<F>(
        &self,
        job: &JobDescriptor,
        input_mb: f64,
        exec_site: &SiteId,
        submit_site: &SiteId,
        nc: &F,
    ) -> Result<f64, CostError>
    where
        F: Fn(&SiteId, &SiteId) -> Result<f64, CostError>,
    {
        let io_mb = job.executable_mb + job.output_mb;
        let staging_term = if io_mb > 0.0 {
            self.weights.staging_weight * io_mb * nc(submit_site, exec_site)?
        } else {
            0.0
        };
        let bundle_mb =
            f64::from(job.sub_job_count) * (input_mb + job.executable_mb) + job.output_mb;
        let candidate_term = self.weights.candidate_site_weight * bundle_mb * self.site_self_cost;
        Ok(staging_term + candidate_term)
    }

    /// Full placement cost with all inputs staged from one data site.
    #[allow(clippy::too_many_arguments)]
    pub fn total_cost(
        &self,
        topology: &ValidatedTopology,
        job: &JobDescriptor,
        data_site: &SiteId,
        exec_site: &SiteId,
        submit_site: &SiteId,
        snapshot: &GlobalLoadSnapshot,
        links: &LinkMap,
    ) -> Result<CostBreakdown, CostError> {
        let site = topology
            .site(exec_site)
            .ok_or_else(|| CostError::UnknownSite(exec_site.clone()))?;
        let network = self.network_cost_between(links, submit_site, exec_site)?;
        let compute = self.compute_cost(site, snapshot)?;
        let transfer = self.data_transfer_cost(topology, job, data_site, exec_site, submit_site, |a, b| {
            self.transfer_network_cost(links, a, b)
        })?;
        Ok(CostBreakdown::new(network, compute, transfer))
    }

    /// Full placement cost with an explicit replica choice per dataset.
    #[allow(clippy::too_many_arguments)]
    pub fn total_cost_with_replicas(
        &self,
        topology: &ValidatedTopology,
        job: &JobDescriptor,
        replicas: &BTreeMap<DatasetId, SiteId>,
        exec_site: &SiteId,
        submit_site: &SiteId,
        snapshot: &GlobalLoadSnapshot,
        links: &LinkMap,
    ) -> Result<CostBreakdown, CostError> {
        let site = topology
            .site(exec_site)
            .ok_or_else(|| CostError::UnknownSite(exec_site.clone()))?;
        let network = self.network_cost_between(links, submit_site, exec_site)?;
        let compute = self.compute_cost(site, snapshot)?;
        let transfer = self.data_transfer_cost_with_replicas(
            topology,
            job,
            replicas,
            exec_site,
            submit_site,
            |a, b| self.transfer_network_cost(links, a, b),
        )?;
        Ok(CostBreakdown::new(network, compute, transfer))
    }

    /// Achievable transfer rate over a link in Mbit/s: the nominal bandwidth
    /// capped by the loss/RTT rate bound (with the loss floor substituted on
    /// clean links). Intra-site rates are unbounded.
    pub fn effective_rate_mbps(&self, metrics: &LinkMetrics) -> f64 {
        if metrics.src == metrics.dst {
            return f64::INFINITY;
        }
        if metrics.rtt_ms <= 0.0 {
            return metrics.bandwidth_mbps;
        }
        let loss = metrics.loss_rate.max(self.loss_floor);
        let bytes_per_second = mathis_rate(self.mss_bytes, metrics.rtt_ms, loss)
            .expect("rtt and loss checked above");
        let rate_mbps = bytes_per_second * 8.0 / 1e6;
        metrics.bandwidth_mbps.min(rate_mbps)
    }

    /// Wall time to move `size_mb` over a link, in seconds.
    pub fn transfer_seconds(&self, size_mb: f64, metrics: &LinkMetrics) -> f64 {
        if metrics.src == metrics.dst {
            return 0.0;
        }
        size_mb * 8.0 / self.effective_rate_mbps(metrics)
    }

    fn total_input_mb(
        &self,
        topology: &ValidatedTopology,
        job: &JobDescriptor,
    ) -> Result<f64, CostError> {
        let mut total = 0.0;
        for dataset_id in &job.input_datasets {
            let dataset = topology
                .dataset(dataset_id)
                .ok_or_else(|| CostError::UnknownDataset(dataset_id.clone()))?;
            total += dataset.size_mb;
        }
        Ok(total)
    }
}

fn lookup<'a>(links: &'a LinkMap, src: &SiteId, dst: &SiteId) -> Result<&'a LinkMetrics, CostError> {
    links
        .get(&(src.clone(), dst.clone()))
        .ok_or_else(|| CostError::MissingLink {
            src: src.clone(),
            dst: dst.clone(),
        })
}
