//! Network- and data-aware meta-scheduling for Grid workloads.
//!
//! The crate is organised around the lifecycle of a scheduling decision:
//!
//! - [`model`] holds the domain types (sites, links, datasets, jobs, weights)
//!   and [`model::validate_topology`].
//! - [`cost`] computes the three placement cost components (network,
//!   computation, data transfer) and their total.
//! - [`replica`] is the in-process data location service: it lists and ranks
//!   dataset replicas against a target computing element.
//! - [`matchmaker`] shortlists candidate sites, builds the pairwise cost
//!   matrix and selects the execution site and replicas for a job.
//! - [`workload`] generates synthetic job streams (Poisson arrivals, bulk
//!   bundles).
//! - [`sim`] is a deterministic discrete-event simulator gluing the above
//!   together: FCFS non-preemptive site queues, data transfers, time-varying
//!   telemetry and job export.

pub mod cost;
pub mod matchmaker;
pub mod model;
pub mod replica;
pub mod sim;
pub mod testkit;
pub mod workload;

pub use cost::{mathis_rate, CostBreakdown, CostError, CostModel, GlobalLoadSnapshot};
pub use matchmaker::{
    build_cost_matrix, get_best_computing_element, shortlist_sites, CostMatrix, Placement,
};
pub use model::{
    validate_topology, DatasetDescriptor, DatasetId, JobDescriptor, JobId, LinkMap, LinkMetrics,
    SiteDescriptor, SiteId, ValidatedTopology, ValidationError, WeightVector,
};
pub use replica::{get_best_storage_element, list_replicas, rank_replicas, ReplicaCatalog};
pub use sim::{run, SchedulerPolicy, SimConfig, SimOutcome};
pub use workload::WorkloadProfile;
