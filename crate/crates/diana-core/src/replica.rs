//! In-process data location service: lists dataset replicas and ranks them
//! by transfer cost relative to a target computing element.
//!
//! The registry is a snapshot: queries are read-only, and registering a new
//! replica produces a new catalog value rather than mutating in place under
//! readers.

use std::collections::{BTreeMap, BTreeSet};

use crate::cost::{CostError, CostModel};
use crate::model::{DatasetId, LinkMap, SiteId, ValidatedTopology};

/// Replica locations and sizes for every registered dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicaCatalog {
    replicas: BTreeMap<DatasetId, BTreeSet<SiteId>>,
    sizes: BTreeMap<DatasetId, f64>,
}

impl ReplicaCatalog {
    /// Catalog seeded from the topology's dataset descriptors.
    pub fn from_topology(topology: &ValidatedTopology) -> Self {
        let mut catalog = Self::default();
        for dataset in topology.datasets().values() {
            catalog
                .replicas
                .insert(dataset.id.clone(), dataset.replicas.clone());
            catalog.sizes.insert(dataset.id.clone(), dataset.size_mb);
        }
        catalog
    }

    /// Registers `site` as an additional replica location (after a
    /// simulated transfer completes, for example).
    pub fn register(&mut self, dataset: &DatasetId, site: SiteId) {
        if let Some(sites) = self.replicas.get_mut(dataset) {
            sites.insert(site);
        }
    }

    pub fn size_mb(&self, dataset: &DatasetId) -> Result<f64, CostError> {
        self.sizes
            .get(dataset)
            .copied()
            .ok_or_else(|| CostError::UnknownDataset(dataset.clone()))
    }

    pub fn replicas(&self, dataset: &DatasetId) -> Result<&BTreeSet<SiteId>, CostError> {
        self.replicas
            .get(dataset)
            .ok_or_else(|| CostError::UnknownDataset(dataset.clone()))
    }

    pub fn has_replica(&self, dataset: &DatasetId, site: &SiteId) -> bool {
        self.replicas
            .get(dataset)
            .map(|sites| sites.contains(site))
            .unwrap_or(false)
    }
}

/// One ranked replica location.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedReplica {
    pub site: SiteId,
    /// Dataset size times the network cost of the replica-to-CE link.
    pub transfer_cost: f64,
    /// Wall-clock estimate at the capped achievable rate.
    pub estimated_transfer_seconds: f64,
}

/// All replicas of one dataset, sorted ascending by transfer cost with ties
/// broken by site order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRanking {
    pub dataset: DatasetId,
    pub target_ce: SiteId,
    pub entries: Vec<RankedReplica>,
}

impl ReplicaRanking {
    /// Pagination window over the sorted entries.
    pub fn page(&self, offset: usize, limit: usize) -> &[RankedReplica] {
        let start = offset.min(self.entries.len());
        let end = start.saturating_add(limit).min(self.entries.len());
        &self.entries[start..end]
    }
}

/// The replica set of a dataset, straight from the catalog.
pub fn list_replicas<'a>(
    catalog: &'a ReplicaCatalog,
    dataset: &DatasetId,
) -> Result<&'a BTreeSet<SiteId>, CostError> {
    catalog.replicas(dataset)
}

/// Ranks every replica of `dataset` against the computing element `ce`.
pub fn rank_replicas(
    catalog: &ReplicaCatalog,
    dataset: &DatasetId,
    ce: &SiteId,
    links: &LinkMap,
    model: &CostModel,
) -> Result<ReplicaRanking, CostError> {
    let size_mb = catalog.size_mb(dataset)?;
    let mut entries = Vec::new();
    for site in catalog.replicas(dataset)? {
        let transfer_cost = size_mb * model.network_cost_between(links, site, ce)?;
        let estimated_transfer_seconds = if site == ce {
            0.0
        } else {
            let metrics = links
                .get(&(site.clone(), ce.clone()))
                .ok_or_else(|| CostError::MissingLink {
                    src: site.clone(),
                    dst: ce.clone(),
                })?;
            model.transfer_seconds(size_mb, metrics)
        };
        entries.push(RankedReplica {
            site: site.clone(),
            transfer_cost,
            estimated_transfer_seconds,
        });
    }
    entries.sort_by(|a, b| {
        a.transfer_cost
            .total_cmp(&b.transfer_cost)
            .then_with(|| a.site.cmp(&b.site))
    });
    Ok(ReplicaRanking {
        dataset: dataset.clone(),
        target_ce: ce.clone(),
        entries,
    })
}

/// The cheapest replica of `dataset` with respect to `ce`.
pub fn get_best_storage_element(
    catalog: &ReplicaCatalog,
    dataset: &DatasetId,
    ce: &SiteId,
    links: &LinkMap,
    model: &CostModel,
) -> Result<SiteId, CostError> {
    let ranking = rank_replicas(catalog, dataset, ce, links, model)?;
    Ok(ranking
        .entries
        .first()
        .expect("replica sets are nonempty by validation")
        .site
        .clone())
}

/// Cheapest replica restricted to sources with a usable link to `ce`.
///
/// Runtime-registered replicas may sit behind absent links on sparse
/// topologies; the simulator falls back to the original (always reachable)
/// locations through this filter instead of failing the transfer.
pub fn best_reachable_source(
    catalog: &ReplicaCatalog,
    dataset: &DatasetId,
    ce: &SiteId,
    links: &LinkMap,
    model: &CostModel,
) -> Result<SiteId, CostError> {
    let size_mb = catalog.size_mb(dataset)?;
    let mut best: Option<(f64, &SiteId)> = None;
    for site in catalog.replicas(dataset)? {
        let cost = if site == ce {
            0.0
        } else if let Ok(cost) = model.network_cost_between(links, site, ce) {
            cost
        } else {
            continue;
        };
        let cost = size_mb * cost;
        let better = match &best {
            None => true,
            Some((best_cost, best_site)) => {
                cost < *best_cost || (cost == *best_cost && site < *best_site)
            }
        };
        if better {
            best = Some((cost, site));
        }
    }
    best.map(|(_, site)| site.clone())
        .ok_or_else(|| CostError::NoReachableReplica {
            dataset: dataset.clone(),
            site: ce.clone(),
        })
}
