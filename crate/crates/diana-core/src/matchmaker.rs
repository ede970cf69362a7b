//! Matchmaking: shortlist candidate sites, build the pairwise cost matrix,
//! and select the execution site and replica set for a job.

use std::collections::{BTreeMap, HashMap};

use crate::cost::{CostBreakdown, CostError, CostModel, GlobalLoadSnapshot};
use crate::model::{DatasetId, JobDescriptor, LinkMap, SiteId, ValidatedTopology};
use crate::replica::{get_best_storage_element, ReplicaCatalog};

/// Default shortlist length.
pub const DEFAULT_SHORTLIST_K: usize = 5;

/// Total placement cost for every ordered pair of shortlisted sites. The
/// diagonal is absent: a row is read relative to its reference site, and
/// staying home is evaluated separately.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    sites: Vec<SiteId>,
    cells: BTreeMap<(SiteId, SiteId), f64>,
}

impl CostMatrix {
    /// Shortlisted sites in rank order.
    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    pub fn get(&self, from: &SiteId, to: &SiteId) -> Option<f64> {
        self.cells.get(&(from.clone(), to.clone())).copied()
    }

    pub fn cells(&self) -> &BTreeMap<(SiteId, SiteId), f64> {
        &self.cells
    }

    /// Minimum cell as (from, to, cost); ties resolved by (cost, to, from).
    pub fn min_cell(&self) -> Option<(&SiteId, &SiteId, f64)> {
        self.cells
            .iter()
            .map(|((from, to), cost)| (from, to, *cost))
            .min_by(|a, b| {
                a.2.total_cmp(&b.2)
                    .then_with(|| a.1.cmp(b.1))
                    .then_with(|| a.0.cmp(b.0))
            })
    }
}

/// A matchmaking decision for one job.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub job: crate::model::JobId,
    pub exec_site: SiteId,
    pub chosen_replicas: BTreeMap<DatasetId, SiteId>,
    pub breakdown: CostBreakdown,
    pub decided_at: f64,
}

/// Ranks every candidate site by computation cost plus the cheapest-replica
/// transfer cost of the job's datasets, and returns the best
/// `min(k, |sites|)` in rank order. Ties break by site order. Sites below
/// the job's power requirement are filtered out first.
pub fn shortlist_sites(
    topology: &ValidatedTopology,
    catalog: &ReplicaCatalog,
    job: &JobDescriptor,
    snapshot: &GlobalLoadSnapshot,
    links: &LinkMap,
    model: &CostModel,
    k: usize,
) -> Result<Vec<SiteId>, CostError> {
    let mut scored = Vec::new();
    for (site_id, site) in topology.sites() {
        if !job.eligible(site) {
            continue;
        }
        let compute = model.compute_cost(site, snapshot)?;
        let replicas = best_replicas(catalog, job, site_id, links, model)?;
        let transfer = model.data_transfer_cost_with_replicas(
            topology,
            job,
            &replicas,
            site_id,
            &job.submit_site,
            |a, b| model.transfer_network_cost(links, a, b),
        )?;
        scored.push((compute + transfer, site_id.clone()));
    }
    if scored.is_empty() {
        return Err(CostError::NoEligibleSites);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(scored
        .into_iter()
        .take(k.max(1))
        .map(|(_, site)| site)
        .collect())
}

/// Populates the pairwise matrix: cell (i, j) is the total cost of
/// executing at `j` relative to reference site `i`, with the job's best
/// replica per dataset chosen against `j`.
pub fn build_cost_matrix(
    shortlist: &[SiteId],
    topology: &ValidatedTopology,
    catalog: &ReplicaCatalog,
    job: &JobDescriptor,
    snapshot: &GlobalLoadSnapshot,
    links: &LinkMap,
    model: &CostModel,
) -> Result<CostMatrix, CostError> {
    let mut cells = BTreeMap::new();
    for to in shortlist {
        let replicas = best_replicas(catalog, job, to, links, model)?;
        for from in shortlist {
            if from == to {
                continue;
            }
            let breakdown = model.total_cost_with_replicas(
                topology, job, &replicas, to, from, snapshot, links,
            )?;
            cells.insert((from.clone(), to.clone()), breakdown.total);
        }
    }
    Ok(CostMatrix {
        sites: shortlist.to_vec(),
        cells,
    })
}

/// Selects the execution site for `job`: shortlist, matrix, then the
/// minimum of the submit site's row (including the stay-home candidate).
/// When the submit site was not shortlisted, falls back to the
/// shortlist-wide minimum cell. Replicas are then fixed against the chosen
/// site and the returned breakdown is always relative to the real submit
/// site.
#[allow(clippy::too_many_arguments)]
pub fn get_best_computing_element(
    topology: &ValidatedTopology,
    catalog: &ReplicaCatalog,
    job: &JobDescriptor,
    snapshot: &GlobalLoadSnapshot,
    links: &LinkMap,
    model: &CostModel,
    k: usize,
    decided_at: f64,
) -> Result<Placement, CostError> {
    get_best_computing_element_filtered(
        topology, catalog, job, snapshot, links, model, k, decided_at, None, None,
    )
}

/// As [`get_best_computing_element`], with an optional excluded site (used
/// by job export) and an optional matrix cache.
#[allow(clippy::too_many_arguments)]
pub fn get_best_computing_element_filtered(
    topology: &ValidatedTopology,
    catalog: &ReplicaCatalog,
    job: &JobDescriptor,
    snapshot: &GlobalLoadSnapshot,
    links: &LinkMap,
    model: &CostModel,
    k: usize,
    decided_at: f64,
    exclude: Option<&SiteId>,
    cache: Option<&mut MatchmakerCache>,
) -> Result<Placement, CostError> {
    let mut shortlist = shortlist_sites(topology, catalog, job, snapshot, links, model, k)?;
    if let Some(excluded) = exclude {
        shortlist.retain(|site| site != excluded);
        if shortlist.is_empty() {
            return Err(CostError::NoEligibleSites);
        }
    }

    let matrix = match cache {
        Some(cache) => cache.get_or_build(&shortlist, topology, catalog, job, snapshot, links, model)?,
        None => build_cost_matrix(&shortlist, topology, catalog, job, snapshot, links, model)?,
    };

    let submit = &job.submit_site;
    let exec_site = if shortlist.len() == 1 {
        shortlist[0].clone()
    } else if shortlist.contains(submit) {
        let mut best: Option<(f64, &SiteId)> = None;
        for candidate in &shortlist {
            let cost = if candidate == submit {
                let replicas = best_replicas(catalog, job, candidate, links, model)?;
                model
                    .total_cost_with_replicas(
                        topology, job, &replicas, candidate, submit, snapshot, links,
                    )?
                    .total
            } else {
                matrix
                    .get(submit, candidate)
                    .expect("matrix covers every off-diagonal shortlist pair")
            };
            let better = match best {
                None => true,
                Some((best_cost, best_site)) => {
                    cost < best_cost || (cost == best_cost && candidate < best_site)
                }
            };
            if better {
                best = Some((cost, candidate));
            }
        }
        best.expect("shortlist is nonempty").1.clone()
    } else {
        let (_, to, _) = matrix.min_cell().expect("matrix has cells");
        to.clone()
    };

    let chosen_replicas = best_replicas(catalog, job, &exec_site, links, model)?;
    let breakdown = model.total_cost_with_replicas(
        topology,
        job,
        &chosen_replicas,
        &exec_site,
        submit,
        snapshot,
        links,
    )?;
    Ok(Placement {
        job: job.id.clone(),
        exec_site,
        chosen_replicas,
        breakdown,
        decided_at,
    })
}

/// Per-candidate cost rows from the job's own submit site, sorted by total.
/// This is the audit view printed by the runner's explain mode.
pub fn explain_rows(
    topology: &ValidatedTopology,
    catalog: &ReplicaCatalog,
    job: &JobDescriptor,
    snapshot: &GlobalLoadSnapshot,
    links: &LinkMap,
    model: &CostModel,
    k: usize,
) -> Result<Vec<(SiteId, CostBreakdown)>, CostError> {
    let shortlist = shortlist_sites(topology, catalog, job, snapshot, links, model, k)?;
    let mut rows = Vec::new();
    for site in &shortlist {
        let replicas = best_replicas(catalog, job, site, links, model)?;
        let breakdown = model.total_cost_with_replicas(
            topology,
            job,
            &replicas,
            site,
            &job.submit_site,
            snapshot,
            links,
        )?;
        rows.push((site.clone(), breakdown));
    }
    rows.sort_by(|a, b| a.1.total.total_cmp(&b.1.total).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

/// Best storage element per input dataset, relative to `ce`.
pub fn best_replicas(
    catalog: &ReplicaCatalog,
    job: &JobDescriptor,
    ce: &SiteId,
    links: &LinkMap,
    model: &CostModel,
) -> Result<BTreeMap<DatasetId, SiteId>, CostError> {
    let mut chosen = BTreeMap::new();
    for dataset in &job.input_datasets {
        let best = get_best_storage_element(catalog, dataset, ce, links, model)?;
        chosen.insert(dataset.clone(), best);
    }
    Ok(chosen)
}

/// Cost-matrix cache. Matrices are reusable for jobs with the same data
/// signature while the telemetry epoch and queue state stand still; any
/// state change invalidates the whole cache, so lookups always behave as if
/// recomputed.
#[derive(Debug, Default)]
pub struct MatchmakerCache {
    state: (u64, u64),
    entries: HashMap<CacheKey, CostMatrix>,
    hits: u64,
    misses: u64,
}

// The submit site is deliberately absent: cells are relative to their row
// site, so jobs from different submitters share matrices within one state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    shortlist: Vec<SiteId>,
    datasets: Vec<DatasetId>,
    executable_mb_bits: u64,
    output_mb_bits: u64,
    sub_job_count: u32,
}

impl MatchmakerCache {
    /// Declares the current (telemetry epoch, queue version) pair; entries
    /// from any other state are dropped.
    pub fn set_state(&mut self, epoch: u64, queue_version: u64) {
        if self.state != (epoch, queue_version) {
            self.state = (epoch, queue_version);
            self.entries.clear();
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    #[allow(clippy::too_many_arguments)]
    fn get_or_build(
        &mut self,
        shortlist: &[SiteId],
        topology: &ValidatedTopology,
        catalog: &ReplicaCatalog,
        job: &JobDescriptor,
        snapshot: &GlobalLoadSnapshot,
        links: &LinkMap,
        model: &CostModel,
    ) -> Result<CostMatrix, CostError> {
        let mut datasets = job.input_datasets.clone();
        datasets.sort();
        let key = CacheKey {
            shortlist: shortlist.to_vec(),
            datasets,
            executable_mb_bits: job.executable_mb.to_bits(),
            output_mb_bits: job.output_mb.to_bits(),
            sub_job_count: job.sub_job_count,
        };
        if let Some(matrix) = self.entries.get(&key) {
            self.hits += 1;
            return Ok(matrix.clone());
        }
        self.misses += 1;
        let matrix = build_cost_matrix(shortlist, topology, catalog, job, snapshot, links, model)?;
        self.entries.insert(key, matrix.clone());
        Ok(matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::MB_PER_GB;
    use crate::model::{
        validate_topology, DatasetDescriptor, LinkMetrics, SiteDescriptor, WeightVector,
    };

    fn worked_example() -> (ValidatedTopology, ReplicaCatalog, CostModel, GlobalLoadSnapshot) {
        let sites = vec![
            SiteDescriptor::new("japan", 8, 1.0),
            SiteDescriptor::new("switzerland", 50, 1.0),
            SiteDescriptor::new("uk", 30, 1.0),
        ];
        let mut links = Vec::new();
        for (src, dst, bw) in [
            ("japan", "switzerland", 100.0),
            ("switzerland", "japan", 100.0),
            ("japan", "uk", 10.0 * 1024.0),
            ("uk", "japan", 10.0 * 1024.0),
            ("switzerland", "uk", 1000.0),
            ("uk", "switzerland", 1000.0),
        ] {
            links.push(LinkMetrics::new(src, dst, 20.0, 0.0, 0.0, bw));
        }
        let datasets = vec![DatasetDescriptor::new(
            "analysis-input",
            100.0 * MB_PER_GB,
            ["japan"],
        )];
        let topo = validate_topology(sites, links, datasets, &[]).unwrap();
        let catalog = ReplicaCatalog::from_topology(&topo);

        let weights = WeightVector {
            rtt_weight: 1.0,
            local_queue_weight: 10.0,
            global_queue_weight: 5.0,
            site_load_weight: 20.0,
            input_transfer_weight: 10.0,
            ..WeightVector::default()
        };
        let mut model = CostModel::new(weights);
        model.dtc_losses_override = Some(1.0);

        let snapshot =
            GlobalLoadSnapshot::from_queues([("japan", 20), ("switzerland", 2), ("uk", 10)])
                .with_background_jobs(968)
                .with_site_load("uk", 20.0 / 30.0);
        (topo, catalog, model, snapshot)
    }

    #[test]
    fn worked_example_selects_the_high_bandwidth_site() {
        let (topo, catalog, model, snapshot) = worked_example();
        let job = JobDescriptor::new("j1", "japan", 60.0).with_inputs(["analysis-input"]);
        let placement = get_best_computing_element(
            &topo,
            &catalog,
            &job,
            &snapshot,
            topo.links(),
            &model,
            DEFAULT_SHORTLIST_K,
            0.0,
        )
        .unwrap();
        assert_eq!(placement.exec_site, SiteId::from("uk"));
        assert!((placement.breakdown.total - 283.34).abs() < 283.34 * 0.005);
        assert_eq!(
            placement.chosen_replicas[&DatasetId::from("analysis-input")],
            SiteId::from("japan")
        );
    }

    #[test]
    fn shortlist_truncates_and_orders() {
        let (topo, catalog, model, snapshot) = worked_example();
        let job = JobDescriptor::new("j1", "japan", 60.0).with_inputs(["analysis-input"]);
        let all = shortlist_sites(&topo, &catalog, &job, &snapshot, topo.links(), &model, 5)
            .unwrap();
        assert_eq!(all.len(), 3);
        // compute + transfer: uk 283.33, japan 700, switzerland 10341.2.
        assert_eq!(all[0], SiteId::from("uk"));
        assert_eq!(all[1], SiteId::from("japan"));
        assert_eq!(all[2], SiteId::from("switzerland"));

        let one = shortlist_sites(&topo, &catalog, &job, &snapshot, topo.links(), &model, 1)
            .unwrap();
        assert_eq!(one, vec![SiteId::from("uk")]);
    }

    #[test]
    fn shortlist_keeps_exactly_k_of_many_sites() {
        let sites: Vec<SiteDescriptor> = (0..8)
            .map(|i| SiteDescriptor::new(format!("s{i}"), 1 + i, 1.0))
            .collect();
        let mut links = Vec::new();
        for a in 0..8 {
            for b in 0..8 {
                if a != b {
                    links.push(LinkMetrics::new(
                        format!("s{a}"),
                        format!("s{b}"),
                        10.0,
                        0.0,
                        0.0,
                        1000.0,
                    ));
                }
            }
        }
        let topo = validate_topology(sites, links, vec![], &[]).unwrap();
        let catalog = ReplicaCatalog::from_topology(&topo);
        let snapshot = GlobalLoadSnapshot::from_queues(
            topo.site_ids().enumerate().map(|(i, s)| (s.clone(), i as u64)),
        );
        let model = CostModel::default();
        let job = JobDescriptor::new("j", "s0", 5.0);
        let shortlist = shortlist_sites(
            &topo,
            &catalog,
            &job,
            &snapshot,
            topo.links(),
            &model,
            DEFAULT_SHORTLIST_K,
        )
        .unwrap();
        assert_eq!(shortlist.len(), 5);
    }

    #[test]
    fn power_requirement_filters_candidates() {
        let sites = vec![
            SiteDescriptor::new("slow", 8, 1.0),
            SiteDescriptor::new("fast", 2, 4.0),
        ];
        let links = vec![
            LinkMetrics::new("slow", "fast", 10.0, 0.0, 0.0, 1000.0),
            LinkMetrics::new("fast", "slow", 10.0, 0.0, 0.0, 1000.0),
        ];
        let topo = validate_topology(sites, links, vec![], &[]).unwrap();
        let catalog = ReplicaCatalog::from_topology(&topo);
        // The slow site is idle, the fast one is loaded; without the
        // requirement the idle slow site would win.
        let snapshot = GlobalLoadSnapshot::from_queues([("slow", 0), ("fast", 9)]);
        let model = CostModel::default();
        let job = JobDescriptor::new("picky", "slow", 5.0).with_min_power(2.0);
        let placement = get_best_computing_element(
            &topo, &catalog, &job, &snapshot, topo.links(), &model, 5, 0.0,
        )
        .unwrap();
        assert_eq!(placement.exec_site, SiteId::from("fast"));

        let impossible = JobDescriptor::new("greedy", "slow", 5.0).with_min_power(10.0);
        let err = shortlist_sites(
            &topo, &catalog, &impossible, &snapshot, topo.links(), &model, 5,
        )
        .unwrap_err();
        assert_eq!(err, CostError::NoEligibleSites);
    }

    #[test]
    fn matrix_covers_every_off_diagonal_pair() {
        let (topo, catalog, model, snapshot) = worked_example();
        let job = JobDescriptor::new("j1", "japan", 60.0).with_inputs(["analysis-input"]);
        let shortlist: Vec<SiteId> = vec!["japan".into(), "uk".into()];
        let matrix = build_cost_matrix(
            &shortlist,
            &topo,
            &catalog,
            &job,
            &snapshot,
            topo.links(),
            &model,
        )
        .unwrap();
        assert_eq!(matrix.cells().len(), 2);
        assert!(matrix.get(&"japan".into(), &"uk".into()).is_some());
        assert!(matrix.get(&"japan".into(), &"japan".into()).is_none());
    }

    #[test]
    fn symmetric_metrics_give_symmetric_cells() {
        let sites = vec![
            SiteDescriptor::new("a", 2, 1.0),
            SiteDescriptor::new("b", 2, 1.0),
        ];
        let links = vec![
            LinkMetrics::new("a", "b", 10.0, 0.01, 1.0, 100.0),
            LinkMetrics::new("b", "a", 10.0, 0.01, 1.0, 100.0),
        ];
        let topo = validate_topology(sites, links, vec![], &[]).unwrap();
        let catalog = ReplicaCatalog::from_topology(&topo);
        let snapshot = GlobalLoadSnapshot::from_queues([("a", 3), ("b", 3)]);
        let model = CostModel::default();
        let job = JobDescriptor::new("j", "a", 5.0);
        let shortlist: Vec<SiteId> = vec!["a".into(), "b".into()];
        let matrix = build_cost_matrix(
            &shortlist,
            &topo,
            &catalog,
            &job,
            &snapshot,
            topo.links(),
            &model,
        )
        .unwrap();
        assert_eq!(
            matrix.get(&"a".into(), &"b".into()),
            matrix.get(&"b".into(), &"a".into())
        );
    }

    #[test]
    fn single_site_topology_selects_that_site() {
        let sites = vec![SiteDescriptor::new("only", 1, 1.0)];
        let topo = validate_topology(sites, vec![], vec![], &[]).unwrap();
        let catalog = ReplicaCatalog::from_topology(&topo);
        let snapshot = GlobalLoadSnapshot::empty(&topo);
        let model = CostModel::default();
        let job = JobDescriptor::new("j", "only", 5.0);
        let placement = get_best_computing_element(
            &topo,
            &catalog,
            &job,
            &snapshot,
            topo.links(),
            &model,
            5,
            0.0,
        )
        .unwrap();
        assert_eq!(placement.exec_site, SiteId::from("only"));
        assert_eq!(placement.breakdown.total, 0.0);
    }

    #[test]
    fn weight_scaling_leaves_selection_unchanged() {
        let (topo, catalog, model, snapshot) = worked_example();
        let job = JobDescriptor::new("j1", "japan", 60.0).with_inputs(["analysis-input"]);
        let scaled = CostModel {
            weights: model.weights.scaled(3.5),
            ..model.clone()
        };
        let a = get_best_computing_element(
            &topo, &catalog, &job, &snapshot, topo.links(), &model, 5, 0.0,
        )
        .unwrap();
        let b = get_best_computing_element(
            &topo, &catalog, &job, &snapshot, topo.links(), &scaled, 5, 0.0,
        )
        .unwrap();
        assert_eq!(a.exec_site, b.exec_site);
        assert_eq!(a.chosen_replicas, b.chosen_replicas);
    }

    #[test]
    fn loading_the_selected_site_eventually_repels_selection() {
        let (topo, catalog, model, _) = worked_example();
        let job = JobDescriptor::new("j1", "japan", 60.0).with_inputs(["analysis-input"]);
        let base = GlobalLoadSnapshot::from_queues([("japan", 0), ("switzerland", 0), ("uk", 0)]);
        let first = get_best_computing_element(
            &topo, &catalog, &job, &base, topo.links(), &model, 5, 0.0,
        )
        .unwrap();
        let mut left = false;
        for queue in [10u64, 100, 1000, 100_000] {
            let queues: Vec<(SiteId, u64)> = topo
                .site_ids()
                .map(|site| {
                    let q = if *site == first.exec_site { queue } else { 0 };
                    (site.clone(), q)
                })
                .collect();
            let snapshot = GlobalLoadSnapshot::from_queues(queues);
            let next = get_best_computing_element(
                &topo, &catalog, &job, &snapshot, topo.links(), &model, 5, 0.0,
            )
            .unwrap();
            if next.exec_site != first.exec_site {
                left = true;
                break;
            }
        }
        assert!(left, "selection never left the loaded site");
    }

    #[test]
    fn cache_reuses_matrices_within_one_state() {
        let (topo, catalog, model, snapshot) = worked_example();
        let job = JobDescriptor::new("j1", "japan", 60.0).with_inputs(["analysis-input"]);
        let mut cache = MatchmakerCache::default();
        cache.set_state(1, 1);
        for _ in 0..3 {
            get_best_computing_element_filtered(
                &topo,
                &catalog,
                &job,
                &snapshot,
                topo.links(),
                &model,
                5,
                0.0,
                None,
                Some(&mut cache),
            )
            .unwrap();
        }
        assert_eq!(cache.hits(), 2);

        // Rows are relative to their reference site, so a job with the same
        // data shape from another submitter reuses the same matrix.
        let other = JobDescriptor::new("j2", "uk", 60.0).with_inputs(["analysis-input"]);
        get_best_computing_element_filtered(
            &topo,
            &catalog,
            &other,
            &snapshot,
            topo.links(),
            &model,
            5,
            0.0,
            None,
            Some(&mut cache),
        )
        .unwrap();
        assert_eq!(cache.hits(), 3);

        // A state change invalidates.
        cache.set_state(1, 2);
        get_best_computing_element_filtered(
            &topo,
            &catalog,
            &job,
            &snapshot,
            topo.links(),
            &model,
            5,
            0.0,
            None,
            Some(&mut cache),
        )
        .unwrap();
        assert_eq!(cache.hits(), 3, "post-invalidation lookup must rebuild");
    }
}
