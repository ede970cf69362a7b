//! Deterministic random fixtures: fully-meshed topologies, load snapshots,
//! weight vectors and jobs, all drawn from a caller-supplied seeded stream.
//!
//! Used by the property and oracle test suites; kept in the library so
//! downstream test targets can share one generator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cost::GlobalLoadSnapshot;
use crate::model::{
    validate_topology, DatasetDescriptor, JobDescriptor, LinkMetrics, SiteDescriptor, SiteId,
    ValidatedTopology, WeightVector,
};

/// Fully-meshed topology with `1..=max_sites` sites and a handful of
/// datasets replicated on random nonempty site subsets.
pub fn random_topology(rng: &mut ChaCha8Rng, max_sites: usize) -> ValidatedTopology {
    let site_count = rng.random_range(1..=max_sites.max(1));
    let sites: Vec<SiteDescriptor> = (0..site_count)
        .map(|i| {
            SiteDescriptor::new(
                format!("site-{i}"),
                rng.random_range(1..=4),
                [0.5, 1.0, 2.0][rng.random_range(0..3)],
            )
        })
        .collect();

    let mut links = Vec::new();
    for a in 0..site_count {
        for b in 0..site_count {
            if a == b {
                continue;
            }
            links.push(LinkMetrics::new(
                format!("site-{a}"),
                format!("site-{b}"),
                rng.random_range(1.0..50.0),
                rng.random_range(0.0..0.05),
                rng.random_range(0.0..5.0),
                [100.0, 622.0, 1000.0][rng.random_range(0..3)],
            ));
        }
    }

    let dataset_count = rng.random_range(1..=3);
    let datasets: Vec<DatasetDescriptor> = (0..dataset_count)
        .map(|i| {
            let replica_count = rng.random_range(1..=site_count);
            let mut indices: Vec<usize> = (0..site_count).collect();
            for k in 0..replica_count {
                let j = rng.random_range(k..indices.len());
                indices.swap(k, j);
            }
            DatasetDescriptor::new(
                format!("data-{i}"),
                rng.random_range(10.0..2000.0),
                indices[..replica_count]
                    .iter()
                    .map(|&s| format!("site-{s}")),
            )
        })
        .collect();

    validate_topology(sites, links, datasets, &[]).expect("generated topology is well formed")
}

/// Job with random inputs drawn from the topology's datasets.
pub fn random_job(rng: &mut ChaCha8Rng, topology: &ValidatedTopology, id: &str) -> JobDescriptor {
    let sites: Vec<&SiteId> = topology.site_ids().collect();
    let submit = sites[rng.random_range(0..sites.len())].clone();
    let datasets: Vec<_> = topology.datasets().keys().cloned().collect();
    let input_count = rng.random_range(0..=datasets.len().min(2));
    let mut indices: Vec<usize> = (0..datasets.len()).collect();
    for k in 0..input_count {
        let j = rng.random_range(k..indices.len());
        indices.swap(k, j);
    }
    let mut job = JobDescriptor::new(id, submit, rng.random_range(10.0..100.0))
        .with_inputs(indices[..input_count].iter().map(|&i| datasets[i].clone()));
    job.executable_mb = rng.random_range(0.0..5.0);
    job.output_mb = rng.random_range(0.0..50.0);
    if rng.random_bool(0.3) {
        job.sub_job_count = rng.random_range(2..=4);
    }
    job
}

/// Random queue snapshot over the topology's sites.
pub fn random_snapshot(rng: &mut ChaCha8Rng, topology: &ValidatedTopology) -> GlobalLoadSnapshot {
    let queues: Vec<(SiteId, u64)> = topology
        .site_ids()
        .map(|site| (site.clone(), rng.random_range(0..40)))
        .collect();
    GlobalLoadSnapshot::from_queues(queues)
        .with_background_jobs(rng.random_range(0..200))
}

/// Valid weight vector with every weight in [1, 20].
pub fn random_weights(rng: &mut ChaCha8Rng) -> WeightVector {
    let mut draw = || rng.random_range(1.0..=20.0);
    WeightVector {
        rtt_weight: draw(),
        loss_weight: draw(),
        jitter_weight: draw(),
        local_queue_weight: draw(),
        global_queue_weight: draw(),
        site_load_weight: draw(),
        input_transfer_weight: draw(),
        staging_weight: draw(),
        candidate_site_weight: draw(),
    }
}
