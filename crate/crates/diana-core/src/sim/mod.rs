//! Deterministic discrete-event simulation of the Grid: local FCFS
//! non-preemptive queues, data transfers, time-varying telemetry, job
//! export and per-job timing records.
//!
//! One simulation instance is strictly single-threaded; distinct instances
//! share nothing. Identical (scenario, seed) inputs produce identical event
//! traces.

mod policy;
mod record;
mod telemetry;

pub use policy::SchedulerPolicy;
pub use record::{JobRecord, SummaryStats, TraceRecord};
pub use telemetry::TelemetryFeed;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cost::{CostBreakdown, CostError, CostModel, GlobalLoadSnapshot};
use crate::matchmaker::{
    build_cost_matrix, explain_rows, get_best_computing_element_filtered, shortlist_sites,
    CostMatrix, MatchmakerCache, Placement, DEFAULT_SHORTLIST_K,
};
use crate::model::{
    DatasetId, JobDescriptor, LinkMap, SiteId, ValidatedTopology, WeightVector,
};
use crate::replica::{best_reachable_source, ReplicaCatalog};

const TELEMETRY_SEED_SALT: u64 = 0x74656c65;
const POLICY_SEED_SALT: u64 = 0x706f6c69;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("simulation stalled at t={time} with {pending_jobs} unfinished job(s)")]
    Stalled { pending_jobs: usize, time: f64 },
}

/// Everything a run needs besides the topology, jobs and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub policy: SchedulerPolicy,
    pub shortlist_k: usize,
    /// A queued job is exported when the best remote estimate is strictly
    /// below `local estimate × threshold`; 0 disables exporting.
    pub export_threshold: f64,
    pub epoch_seconds: f64,
    pub telemetry_window: usize,
    pub telemetry_noise: f64,
    pub dtc_losses_override: Option<f64>,
    pub site_self_cost: f64,
    /// Standing per-site backlog added to cost snapshots (not simulated).
    pub backlog: BTreeMap<SiteId, u64>,
    /// Off-model waiting jobs added to the global queue total.
    pub background_jobs: u64,
    /// Pinned site loads, overriding Q_i/P_i in cost snapshots.
    pub site_load_override: BTreeMap<SiteId, f64>,
    pub capture_trace: bool,
    pub capture_explain: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            policy: SchedulerPolicy::Diana,
            shortlist_k: DEFAULT_SHORTLIST_K,
            export_threshold: 1.0,
            epoch_seconds: 60.0,
            telemetry_window: 5,
            telemetry_noise: 0.0,
            dtc_losses_override: None,
            site_self_cost: 0.0,
            backlog: BTreeMap::new(),
            background_jobs: 0,
            site_load_override: BTreeMap::new(),
            capture_trace: false,
            capture_explain: false,
        }
    }
}

/// Cost table captured at placement time for audit output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainRecord {
    pub job: crate::model::JobId,
    pub decided_at: f64,
    pub rows: Vec<(SiteId, CostBreakdown)>,
    pub matrix: Option<CostMatrix>,
    pub chosen: SiteId,
}

/// Result of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub records: Vec<JobRecord>,
    pub summary: SummaryStats,
    pub trace: Vec<TraceRecord>,
    pub explains: Vec<ExplainRecord>,
}

#[derive(Debug, Clone)]
enum EventPayload {
    JobSubmitted { job: usize },
    TransferCompleted { dataset: DatasetId, dst: SiteId },
    SubJobFinished { job: usize, sub: u32 },
    OutputStaged { job: usize },
    TelemetryEpoch,
}

#[derive(Debug)]
struct QueuedEvent {
    time: f64,
    seq: u64,
    payload: EventPayload,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueuedEvent {}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we need earliest-first.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SubRef {
    job: usize,
    sub: u32,
}

#[derive(Debug)]
struct JobState {
    desc: JobDescriptor,
    placement: Option<Placement>,
    /// Bumped on every (re-)placement; stale transfer waiters are dropped.
    generation: u32,
    pending_inputs: BTreeSet<DatasetId>,
    ready: bool,
    transfer_done_time: Option<f64>,
    first_start: Option<f64>,
    subs_running: u32,
    subs_done: u32,
    last_finish: Option<f64>,
    output_done: Option<f64>,
    exported_from: Option<SiteId>,
}

impl JobState {
    fn exec_site(&self) -> &SiteId {
        &self
            .placement
            .as_ref()
            .expect("job has been placed")
            .exec_site
    }

    fn complete(&self) -> bool {
        self.output_done.is_some()
    }
}

#[derive(Debug)]
struct SiteState {
    cpu_count: u32,
    power_per_cpu: f64,
    free_cpus: u32,
    queue: VecDeque<SubRef>,
    running: Vec<(SubRef, f64)>,
}

struct Engine<'a> {
    topology: &'a ValidatedTopology,
    model: CostModel,
    cfg: &'a SimConfig,
    feed: TelemetryFeed,
    catalog: ReplicaCatalog,
    sites: BTreeMap<SiteId, SiteState>,
    jobs: Vec<JobState>,
    pending_transfers: BTreeMap<(DatasetId, SiteId), Vec<(usize, u32)>>,
    heap: BinaryHeap<QueuedEvent>,
    seq: u64,
    clock: f64,
    queue_version: u64,
    policy_rng: ChaCha8Rng,
    cache: MatchmakerCache,
    trace: Vec<TraceRecord>,
    explains: Vec<ExplainRecord>,
}

/// Runs the scenario to completion and returns per-job records plus
/// aggregates.
pub fn run(
    topology: &ValidatedTopology,
    jobs: &[JobDescriptor],
    weights: &WeightVector,
    cfg: &SimConfig,
) -> Result<SimOutcome, SimError> {
    if cfg.shortlist_k < 1 {
        return Err(SimError::InvalidConfig("shortlist_k must be >= 1".into()));
    }
    if !cfg.epoch_seconds.is_finite() || cfg.epoch_seconds <= 0.0 {
        return Err(SimError::InvalidConfig("epoch_seconds must be > 0".into()));
    }
    if cfg.telemetry_window < 1 {
        return Err(SimError::InvalidConfig("telemetry window must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.telemetry_noise) {
        return Err(SimError::InvalidConfig(
            "telemetry_noise must be in [0, 1)".into(),
        ));
    }
    if cfg.export_threshold < 0.0 {
        return Err(SimError::InvalidConfig(
            "export_threshold must be >= 0".into(),
        ));
    }
    weights
        .validate()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let mut model = CostModel::new(weights.clone());
    model.dtc_losses_override = cfg.dtc_losses_override;
    model.site_self_cost = cfg.site_self_cost;

    let sites = topology
        .sites()
        .iter()
        .map(|(id, desc)| {
            (
                id.clone(),
                SiteState {
                    cpu_count: desc.cpu_count,
                    power_per_cpu: desc.power_per_cpu,
                    free_cpus: desc.cpu_count,
                    queue: VecDeque::new(),
                    running: Vec::new(),
                },
            )
        })
        .collect();

    let mut engine = Engine {
        topology,
        model,
        cfg,
        feed: TelemetryFeed::new(
            topology.links().clone(),
            cfg.telemetry_window,
            cfg.telemetry_noise,
            cfg.seed ^ TELEMETRY_SEED_SALT,
        ),
        catalog: ReplicaCatalog::from_topology(topology),
        sites,
        jobs: jobs
            .iter()
            .map(|desc| JobState {
                desc: desc.clone(),
                placement: None,
                generation: 0,
                pending_inputs: BTreeSet::new(),
                ready: false,
                transfer_done_time: None,
                first_start: None,
                subs_running: 0,
                subs_done: 0,
                last_finish: None,
                output_done: None,
                exported_from: None,
            })
            .collect(),
        pending_transfers: BTreeMap::new(),
        heap: BinaryHeap::new(),
        seq: 0,
        clock: 0.0,
        queue_version: 0,
        policy_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ POLICY_SEED_SALT),
        cache: MatchmakerCache::default(),
        trace: Vec::new(),
        explains: Vec::new(),
    };

    for index in 0..engine.jobs.len() {
        let at = engine.jobs[index].desc.submit_time;
        engine.schedule(at, EventPayload::JobSubmitted { job: index });
    }
    if !engine.jobs.is_empty() {
        engine.schedule(cfg.epoch_seconds, EventPayload::TelemetryEpoch);
    }

    engine.run_loop()?;
    engine.finish()
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, time: f64, payload: EventPayload) {
        let event = QueuedEvent {
            time,
            seq: self.seq,
            payload,
        };
        self.seq += 1;
        self.heap.push(event);
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        while let Some(event) = self.heap.pop() {
            debug_assert!(
                event.time >= self.clock,
                "event at {} scheduled before current time {}",
                event.time,
                self.clock
            );
            self.clock = event.time;
            match event.payload {
                EventPayload::JobSubmitted { job } => {
                    self.on_submitted(job, event.time, event.seq)?;
                }
                EventPayload::TransferCompleted { dataset, dst } => {
                    self.on_transfer_completed(&dataset, &dst, event.time, event.seq);
                }
                EventPayload::SubJobFinished { job, sub } => {
                    self.on_sub_finished(job, sub, event.time, event.seq)?;
                }
                EventPayload::OutputStaged { job } => {
                    self.jobs[job].output_done = Some(event.time);
                    let job_label = self.jobs[job].desc.id.to_string();
                    let site = self.jobs[job].desc.submit_site.to_string();
                    self.push_trace(
                        event.time,
                        event.seq,
                        "TransferCompleted",
                        job_label,
                        site,
                        "output staged back to submit site".into(),
                    );
                }
                EventPayload::TelemetryEpoch => {
                    self.on_telemetry_epoch(event.time, event.seq)?;
                }
            }
        }

        let pending = self.jobs.iter().filter(|j| !j.complete()).count();
        if pending > 0 {
            return Err(SimError::Stalled {
                pending_jobs: pending,
                time: self.clock,
            });
        }
        Ok(())
    }

    fn on_submitted(&mut self, job: usize, now: f64, seq: u64) -> Result<(), SimError> {
        let placement = self.decide_placement(job, now, None)?;
        let job_label = self.jobs[job].desc.id.to_string();
        let submit = self.jobs[job].desc.submit_site.to_string();
        self.push_trace(
            now,
            seq,
            "JobSubmitted",
            job_label,
            submit,
            format!("placed at {}", placement.exec_site),
        );
        self.apply_placement(job, placement, now);
        Ok(())
    }

    fn on_transfer_completed(&mut self, dataset: &DatasetId, dst: &SiteId, now: f64, seq: u64) {
        self.catalog.register(dataset, dst.clone());
        let waiters = self
            .pending_transfers
            .remove(&(dataset.clone(), dst.clone()))
            .unwrap_or_default();
        self.push_trace(
            now,
            seq,
            "TransferCompleted",
            String::new(),
            dst.to_string(),
            format!("dataset {dataset} replicated"),
        );
        for (job, generation) in waiters {
            let state = &mut self.jobs[job];
            if state.generation != generation {
                continue; // placement moved on; stale waiter
            }
            state.pending_inputs.remove(dataset);
            if state.pending_inputs.is_empty() && !state.ready {
                state.ready = true;
                state.transfer_done_time = Some(now);
            }
        }
        self.try_dispatch(dst, now);
    }

    fn on_sub_finished(&mut self, job: usize, sub: u32, now: f64, seq: u64) -> Result<(), SimError> {
        let site_id = self.jobs[job].exec_site().clone();
        {
            let site = self.sites.get_mut(&site_id).expect("site exists");
            site.free_cpus += 1;
            site.running
                .retain(|(r, _)| !(r.job == job && r.sub == sub));
        }
        let state = &mut self.jobs[job];
        state.subs_running -= 1;
        state.subs_done += 1;
        state.last_finish = Some(now);
        let bundle_done = state.subs_done == state.desc.sub_job_count;
        let label = sub_label(&state.desc, sub);
        self.push_trace(now, seq, "JobFinished", label, site_id.to_string(), String::new());

        if bundle_done {
            let state = &self.jobs[job];
            let desc = &state.desc;
            if desc.output_mb > 0.0 && *state.exec_site() != desc.submit_site {
                let key = (state.exec_site().clone(), desc.submit_site.clone());
                let metrics = self.feed.current().get(&key).ok_or(CostError::MissingLink {
                    src: key.0.clone(),
                    dst: key.1.clone(),
                })?;
                let duration = self.model.transfer_seconds(desc.output_mb, metrics);
                self.schedule(now + duration, EventPayload::OutputStaged { job });
            } else {
                self.jobs[job].output_done = Some(now);
            }
        }
        self.try_dispatch(&site_id, now);
        Ok(())
    }

    fn on_telemetry_epoch(&mut self, now: f64, seq: u64) -> Result<(), SimError> {
        self.feed.advance(now);
        self.push_trace(
            now,
            seq,
            "TelemetryEpoch",
            String::new(),
            String::new(),
            format!("epoch {}", self.feed.epoch()),
        );

        if self.cfg.export_threshold > 0.0 {
            let site_ids: Vec<SiteId> = self.sites.keys().cloned().collect();
            for site_id in site_ids {
                self.evaluate_exports(&site_id, now)?;
            }
        }

        if self.jobs.iter().any(|j| !j.complete()) {
            self.schedule(now + self.cfg.epoch_seconds, EventPayload::TelemetryEpoch);
        }
        Ok(())
    }

    /// Site-selection step shared by initial placement and export.
    fn decide_placement(
        &mut self,
        job: usize,
        now: f64,
        exclude: Option<&SiteId>,
    ) -> Result<Placement, SimError> {
        let snapshot = self.snapshot();
        let desc = self.jobs[job].desc.clone();
        let view = self.feed.averaged().clone();
        self.cache.set_state(self.feed.epoch(), self.queue_version);

        let placement = match self.cfg.policy {
            SchedulerPolicy::Diana => get_best_computing_element_filtered(
                self.topology,
                &self.catalog,
                &desc,
                &snapshot,
                &view,
                &self.model,
                self.cfg.shortlist_k,
                now,
                exclude,
                Some(&mut self.cache),
            )?,
            SchedulerPolicy::DataLocal => {
                let allowed = |site: &&SiteId| -> bool {
                    Some(*site) != exclude && desc.eligible(&self.topology.sites()[*site])
                };
                let hosting: Vec<SiteId> = self
                    .sites
                    .keys()
                    .filter(allowed)
                    .filter(|site| {
                        desc.input_datasets
                            .iter()
                            .any(|d| self.catalog.has_replica(d, site))
                    })
                    .cloned()
                    .collect();
                let home_allowed =
                    allowed(&&desc.submit_site) && desc.input_datasets.is_empty();
                let exec = if home_allowed {
                    desc.submit_site.clone()
                } else {
                    let candidates = if hosting.is_empty() {
                        self.sites.keys().filter(allowed).cloned().collect()
                    } else {
                        hosting
                    };
                    candidates
                        .into_iter()
                        .min_by_key(|site| (self.sites[site].queue.len(), site.clone()))
                        .ok_or(CostError::NoEligibleSites)?
                };
                self.manual_placement(&desc, exec, &snapshot, &view, now)?
            }
            SchedulerPolicy::ComputeGreedy => {
                let mut best: Option<(f64, SiteId)> = None;
                for (site_id, site) in self.topology.sites() {
                    if Some(site_id) == exclude || !desc.eligible(site) {
                        continue;
                    }
                    let cost = self.model.compute_cost(site, &snapshot)?;
                    let better = match &best {
                        None => true,
                        Some((best_cost, best_site)) => {
                            cost < *best_cost || (cost == *best_cost && site_id < best_site)
                        }
                    };
                    if better {
                        best = Some((cost, site_id.clone()));
                    }
                }
                let exec = best.map(|(_, site)| site).ok_or(CostError::NoEligibleSites)?;
                self.manual_placement(&desc, exec, &snapshot, &view, now)?
            }
            SchedulerPolicy::Random => {
                let candidates: Vec<SiteId> = self
                    .sites
                    .keys()
                    .filter(|site| {
                        Some(*site) != exclude && desc.eligible(&self.topology.sites()[*site])
                    })
                    .cloned()
                    .collect();
                if candidates.is_empty() {
                    return Err(CostError::NoEligibleSites.into());
                }
                let exec = candidates[self.policy_rng.random_range(0..candidates.len())].clone();
                self.manual_placement(&desc, exec, &snapshot, &view, now)?
            }
        };

        if self.cfg.capture_explain {
            let rows = explain_rows(
                self.topology,
                &self.catalog,
                &desc,
                &snapshot,
                &view,
                &self.model,
                self.cfg.shortlist_k,
            );
            if let Ok(rows) = rows {
                let matrix = shortlist_sites(
                    self.topology,
                    &self.catalog,
                    &desc,
                    &snapshot,
                    &view,
                    &self.model,
                    self.cfg.shortlist_k,
                )
                .and_then(|shortlist| {
                    build_cost_matrix(
                        &shortlist,
                        self.topology,
                        &self.catalog,
                        &desc,
                        &snapshot,
                        &view,
                        &self.model,
                    )
                })
                .ok();
                self.explains.push(ExplainRecord {
                    job: desc.id.clone(),
                    decided_at: now,
                    rows,
                    matrix,
                    chosen: placement.exec_site.clone(),
                });
            }
        }

        Ok(placement)
    }

    /// Placement record for a policy that picked `exec` directly: replicas
    /// are the cheapest reachable source per dataset and the breakdown is
    /// evaluated relative to the real submit site.
    fn manual_placement(
        &self,
        desc: &JobDescriptor,
        exec: SiteId,
        snapshot: &GlobalLoadSnapshot,
        view: &LinkMap,
        now: f64,
    ) -> Result<Placement, SimError> {
        let mut chosen = BTreeMap::new();
        for dataset in &desc.input_datasets {
            let source = best_reachable_source(&self.catalog, dataset, &exec, view, &self.model)?;
            chosen.insert(dataset.clone(), source);
        }
        let breakdown = self.model.total_cost_with_replicas(
            self.topology,
            desc,
            &chosen,
            &exec,
            &desc.submit_site,
            snapshot,
            view,
        )?;
        Ok(Placement {
            job: desc.id.clone(),
            exec_site: exec,
            chosen_replicas: chosen,
            breakdown,
            decided_at: now,
        })
    }

    /// Installs a placement: kicks off missing transfers, enqueues the
    /// sub-jobs and dispatches.
    fn apply_placement(&mut self, job: usize, placement: Placement, now: f64) {
        let exec = placement.exec_site.clone();
        let replicas = placement.chosen_replicas.clone();
        {
            let state = &mut self.jobs[job];
            state.generation += 1;
            state.placement = Some(placement);
            state.pending_inputs.clear();
            state.ready = false;
            state.transfer_done_time = None;
        }
        let generation = self.jobs[job].generation;

        for (dataset, source) in &replicas {
            if self.catalog.has_replica(dataset, &exec) {
                continue;
            }
            self.jobs[job].pending_inputs.insert(dataset.clone());
            let key = (dataset.clone(), exec.clone());
            if let Some(waiters) = self.pending_transfers.get_mut(&key) {
                waiters.push((job, generation));
                continue;
            }
            let size_mb = self
                .catalog
                .size_mb(dataset)
                .expect("placement datasets are registered");
            let metrics = self
                .feed
                .current()
                .get(&(source.clone(), exec.clone()))
                .expect("placement sources are link-reachable");
            let duration = self.model.transfer_seconds(size_mb, metrics);
            self.pending_transfers.insert(key, vec![(job, generation)]);
            self.schedule(
                now + duration,
                EventPayload::TransferCompleted {
                    dataset: dataset.clone(),
                    dst: exec.clone(),
                },
            );
        }

        {
            let state = &mut self.jobs[job];
            if state.pending_inputs.is_empty() {
                state.ready = true;
                state.transfer_done_time = Some(now);
            }
        }

        let sub_count = self.jobs[job].desc.sub_job_count;
        let site = self.sites.get_mut(&exec).expect("site exists");
        for sub in 0..sub_count {
            site.queue.push_back(SubRef { job, sub });
        }
        self.queue_version += 1;
        self.try_dispatch(&exec, now);
    }

    /// Starts queue-head sub-jobs while CPUs are free. Strict FCFS: a head
    /// still waiting on data blocks everything behind it.
    fn try_dispatch(&mut self, site_id: &SiteId, now: f64) {
        loop {
            let site = self.sites.get_mut(site_id).expect("site exists");
            if site.free_cpus == 0 {
                return;
            }
            let Some(&head) = site.queue.front() else {
                return;
            };
            if !self.jobs[head.job].ready {
                return;
            }
            site.queue.pop_front();
            site.free_cpus -= 1;
            self.queue_version += 1;
            let duration = self.jobs[head.job].desc.compute_demand / site.power_per_cpu;
            let finish = now + duration;
            site.running.push((head, finish));
            {
                let state = &mut self.jobs[head.job];
                state.subs_running += 1;
                if state.first_start.is_none() {
                    state.first_start = Some(now);
                }
            }
            let seq = self.seq;
            let label = sub_label(&self.jobs[head.job].desc, head.sub);
            self.push_trace(
                now,
                seq,
                "JobStarted",
                label,
                site_id.to_string(),
                format!("runs for {duration}"),
            );
            self.schedule(
                finish,
                EventPayload::SubJobFinished {
                    job: head.job,
                    sub: head.sub,
                },
            );
        }
    }

    /// Export pass for one site at a telemetry epoch: fully-queued bundles
    /// whose best remote estimate beats the local one re-enter matchmaking
    /// excluding this site.
    fn evaluate_exports(&mut self, site_id: &SiteId, now: f64) -> Result<(), SimError> {
        let queued_jobs: Vec<usize> = {
            let site = &self.sites[site_id];
            let mut seen = Vec::new();
            for entry in &site.queue {
                if !seen.contains(&entry.job) {
                    seen.push(entry.job);
                }
            }
            seen
        };
        let mut exported = 0usize;
        for job in queued_jobs {
            let state = &self.jobs[job];
            if state.exported_from.is_some() || state.subs_running > 0 || state.subs_done > 0 {
                continue;
            }
            let local = self.local_estimate(site_id, job, now);
            let Ok(remote_placement) = self.decide_export_target(job, now, site_id) else {
                continue;
            };
            let remote = self.remote_estimate(job, &remote_placement, now);
            if remote < local * self.cfg.export_threshold {
                let seq = self.seq;
                let remote_site = remote_placement.exec_site.clone();
                {
                    let site = self.sites.get_mut(site_id).expect("site exists");
                    site.queue.retain(|entry| entry.job != job);
                }
                self.queue_version += 1;
                self.jobs[job].exported_from = Some(site_id.clone());
                let label = self.jobs[job].desc.id.to_string();
                self.push_trace(
                    now,
                    seq,
                    "ExportEvaluated",
                    label,
                    site_id.to_string(),
                    format!(
                        "exported to {remote_site} (local est {local:.3}, remote est {remote:.3})"
                    ),
                );
                self.apply_placement(job, remote_placement, now);
                exported += 1;
            }
        }
        let seq = self.seq;
        self.push_trace(
            now,
            seq,
            "ExportEvaluated",
            String::new(),
            site_id.to_string(),
            format!("exported {exported} job(s)"),
        );
        // Local dispatch may be possible if the blocked head was exported.
        self.try_dispatch(site_id, now);
        Ok(())
    }

    /// The export decision always consults the cost-driven matchmaker, no
    /// matter the placement policy; exporting is the meta-scheduler's own
    /// safety valve.
    fn decide_export_target(
        &mut self,
        job: usize,
        now: f64,
        exclude: &SiteId,
    ) -> Result<Placement, CostError> {
        let snapshot = self.snapshot();
        let desc = self.jobs[job].desc.clone();
        let view = self.feed.averaged().clone();
        self.cache.set_state(self.feed.epoch(), self.queue_version);
        get_best_computing_element_filtered(
            self.topology,
            &self.catalog,
            &desc,
            &snapshot,
            &view,
            &self.model,
            self.cfg.shortlist_k,
            now,
            Some(exclude),
            Some(&mut self.cache),
        )
    }

    /// Estimated wait + run time if the bundle stays where it is.
    fn local_estimate(&self, site_id: &SiteId, job: usize, now: f64) -> f64 {
        let site = &self.sites[site_id];
        let desc = &self.jobs[job].desc;
        let mut ahead = 0.0;
        for entry in &site.queue {
            if entry.job == job {
                break;
            }
            ahead += self.jobs[entry.job].desc.compute_demand / site.power_per_cpu;
        }
        let running_rem: f64 = site
            .running
            .iter()
            .map(|(_, finish)| (finish - now).max(0.0))
            .sum();
        let wait = (ahead + running_rem) / f64::from(site.cpu_count);
        wait + bundle_runtime(desc, site)
    }

    /// Estimated transfer + wait + run time at the proposed remote site.
    fn remote_estimate(&self, job: usize, placement: &Placement, now: f64) -> f64 {
        let desc = &self.jobs[job].desc;
        let site = &self.sites[&placement.exec_site];
        let queued: f64 = site
            .queue
            .iter()
            .map(|entry| self.jobs[entry.job].desc.compute_demand / site.power_per_cpu)
            .sum();
        let running_rem: f64 = site
            .running
            .iter()
            .map(|(_, finish)| (finish - now).max(0.0))
            .sum();
        let wait = (queued + running_rem) / f64::from(site.cpu_count);

        let mut transfer = 0.0;
        for (dataset, source) in &placement.chosen_replicas {
            if self.catalog.has_replica(dataset, &placement.exec_site) {
                continue;
            }
            let size = self.catalog.size_mb(dataset).expect("dataset registered");
            if let Some(metrics) = self
                .feed
                .averaged()
                .get(&(source.clone(), placement.exec_site.clone()))
            {
                transfer += self.model.transfer_seconds(size, metrics);
            }
        }
        transfer + wait + bundle_runtime(desc, site)
    }

    /// Cost snapshot of the live queues plus configured standing backlog.
    fn snapshot(&self) -> GlobalLoadSnapshot {
        let queues = self.sites.iter().map(|(id, site)| {
            let backlog = self.cfg.backlog.get(id).copied().unwrap_or(0);
            (id.clone(), site.queue.len() as u64 + backlog)
        });
        let mut snapshot = GlobalLoadSnapshot::from_queues(queues)
            .with_background_jobs(self.cfg.background_jobs);
        for (site, load) in &self.cfg.site_load_override {
            snapshot = snapshot.with_site_load(site.clone(), *load);
        }
        snapshot
    }

    fn push_trace(&mut self, time: f64, seq: u64, kind: &'static str, job: String, site: String, info: String) {
        if !self.cfg.capture_trace {
            return;
        }
        self.trace.push(TraceRecord {
            time,
            seq,
            kind,
            job,
            site,
            info,
        });
    }

    fn finish(self) -> Result<SimOutcome, SimError> {
        let mut records = Vec::with_capacity(self.jobs.len());
        for state in &self.jobs {
            let placement = state.placement.clone().expect("completed jobs are placed");
            let record = JobRecord {
                job: state.desc.id.clone(),
                submit_site: state.desc.submit_site.clone(),
                placement,
                submit_time: state.desc.submit_time,
                transfer_done_time: state
                    .transfer_done_time
                    .expect("completed jobs finished staging"),
                start_time: state.first_start.expect("completed jobs started"),
                finish_time: state.last_finish.expect("completed jobs finished"),
                output_done_time: state.output_done.expect("completed jobs staged output"),
                exported_from: state.exported_from.clone(),
            };
            debug_assert!(record.submit_time <= record.transfer_done_time);
            debug_assert!(record.transfer_done_time <= record.start_time);
            debug_assert!(record.start_time <= record.finish_time);
            debug_assert!(record.finish_time <= record.output_done_time);
            records.push(record);
        }
        let summary = SummaryStats::from_records(&records);
        Ok(SimOutcome {
            records,
            summary,
            trace: self.trace,
            explains: self.explains,
        })
    }
}

fn bundle_runtime(desc: &JobDescriptor, site: &SiteState) -> f64 {
    let rounds = desc.sub_job_count.div_ceil(site.cpu_count);
    f64::from(rounds) * desc.compute_demand / site.power_per_cpu
}

fn sub_label(desc: &JobDescriptor, sub: u32) -> String {
    if desc.sub_job_count > 1 {
        format!("{}/{}", desc.id, sub)
    } else {
        desc.id.to_string()
    }
}
