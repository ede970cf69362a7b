//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `--nocapture`). Oracle code here recomputes
//! costs from raw link and queue fields, independent of the engine.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diana_cli::commands::{run_scenario, RunOptions};
use diana_cli::scenario::load_scenario;
use diana_core::cost::{mathis_rate, CostModel, GlobalLoadSnapshot};
use diana_core::matchmaker::get_best_computing_element;
use diana_core::model::{JobDescriptor, SiteDescriptor, SiteId, ValidatedTopology, WeightVector};
use diana_core::model::validate_topology;
use diana_core::replica::{rank_replicas, ReplicaCatalog};
use diana_core::sim::{run, SchedulerPolicy, SimConfig};
use diana_core::testkit;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn within(value: f64, expected: f64, rel: f64) -> bool {
    (value - expected).abs() <= expected.abs() * rel
}

/// Criterion 1: the three-site worked example reproduces the pinned
/// reference totals and the matchmaker selects the high-bandwidth site, in under a
/// second.
#[test]
fn worked_example_costs_and_selection() {
    let started = Instant::now();
    let scenario = load_scenario(&scenario_path("worked_example.toml"), None).unwrap();
    let mut sim = scenario.sim.clone();
    sim.capture_explain = true;
    let outcome = run(&scenario.topology, &scenario.jobs, &scenario.weights, &sim).unwrap();

    let rows: BTreeMap<String, f64> = outcome.explains[0]
        .rows
        .iter()
        .map(|(site, breakdown)| (site.to_string(), breakdown.total))
        .collect();
    assert_eq!(rows["japan"], 700.0, "home-site total must be exact");
    assert!(
        within(rows["switzerland"], 10341.4, 0.005),
        "switzerland total {}",
        rows["switzerland"]
    );
    assert!(within(rows["uk"], 283.34, 0.005), "uk total {}", rows["uk"]);
    assert_eq!(outcome.records[0].placement.exec_site, SiteId::from("uk"));

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("ACCEPTANCE 1 worked_example_costs_and_selection: PASS ({elapsed:?})");
}

/// Criterion 2: the five-site matrix fixture pins its pairwise totals
/// exactly and submission from italy selects switzerland at 45.
#[test]
fn cost_matrix_reproduction() {
    let scenario = load_scenario(&scenario_path("cost_matrix.toml"), None).unwrap();
    let mut sim = scenario.sim.clone();
    sim.capture_explain = true;
    let outcome = run(&scenario.topology, &scenario.jobs, &scenario.weights, &sim).unwrap();

    let matrix = outcome.explains[0].matrix.as_ref().expect("matrix captured");
    let cell = |from: &str, to: &str| matrix.get(&from.into(), &to.into()).unwrap();
    assert_eq!(cell("italy", "austria"), 50.0);
    assert_eq!(cell("austria", "italy"), 58.0);
    assert_eq!(cell("japan", "italy"), 70.0);
    assert_eq!(cell("italy", "switzerland"), 45.0);
    assert_eq!(
        outcome.records[0].placement.exec_site,
        SiteId::from("switzerland")
    );
    println!("ACCEPTANCE 2 cost_matrix_reproduction: PASS");
}

// ---------------------------------------------------------------------------
// Independent brute force for criterion 3: enumerates every execution site
// and every replica assignment, recomputing each total from raw fields.
// ---------------------------------------------------------------------------

fn raw_network_cost(topo: &ValidatedTopology, src: &SiteId, dst: &SiteId, w: &WeightVector) -> f64 {
    if src == dst {
        return 0.0;
    }
    let m = &topo.links()[&(src.clone(), dst.clone())];
    (m.rtt_ms * w.rtt_weight + m.loss_rate * w.loss_weight + m.jitter_ms * w.jitter_weight)
        / m.bandwidth_mbps
}

fn brute_force_best(
    topo: &ValidatedTopology,
    job: &JobDescriptor,
    queues: &BTreeMap<SiteId, u64>,
    background: u64,
    w: &WeightVector,
) -> (SiteId, f64) {
    let global: u64 = queues.values().sum::<u64>() + background;
    let replica_sets: Vec<Vec<SiteId>> = job
        .input_datasets
        .iter()
        .map(|d| topo.datasets()[d].replicas.iter().cloned().collect())
        .collect();
    let sizes: Vec<f64> = job
        .input_datasets
        .iter()
        .map(|d| topo.datasets()[d].size_mb)
        .collect();

    let mut best: Option<(f64, SiteId)> = None;
    for (site_id, site) in topo.sites() {
        let power = f64::from(site.cpu_count) * site.power_per_cpu;
        let q = queues[site_id] as f64;
        let compute = q / power * w.local_queue_weight
            + global as f64 / power * w.global_queue_weight
            + q / power * w.site_load_weight;
        let network = raw_network_cost(topo, &job.submit_site, site_id, w);
        let io = job.executable_mb + job.output_mb;
        let staging = if io > 0.0 {
            w.staging_weight * io * raw_network_cost(topo, &job.submit_site, site_id, w)
        } else {
            0.0
        };

        let mut site_best = f64::INFINITY;
        let mut odometer = vec![0usize; replica_sets.len()];
        loop {
            let mut input = 0.0;
            for (index, &pick) in odometer.iter().enumerate() {
                input += w.input_transfer_weight
                    * sizes[index]
                    * raw_network_cost(topo, &replica_sets[index][pick], site_id, w);
            }
            let total = network + compute + input + staging;
            if total < site_best {
                site_best = total;
            }
            let mut digit = 0;
            while digit < odometer.len() {
                odometer[digit] += 1;
                if odometer[digit] < replica_sets[digit].len() {
                    break;
                }
                odometer[digit] = 0;
                digit += 1;
            }
            if digit == odometer.len() {
                break;
            }
        }

        let better = match &best {
            None => true,
            Some((cost, site)) => site_best < *cost || (site_best == *cost && site_id < site),
        };
        if better {
            best = Some((site_best, site_id.clone()));
        }
    }
    let (total, site) = best.expect("nonempty topology");
    (site, total)
}

/// Criterion 3: over 1000 random topologies with at most five sites, the
/// matchmaker matches exhaustive minimisation over all sites and replica
/// choices. Zero mismatches.
#[test]
fn matchmaker_matches_brute_force() {
    let mut mismatches = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = testkit::random_topology(&mut rng, 5);
        let mut job = testkit::random_job(&mut rng, &topo, "probe");
        job.sub_job_count = 1;
        let weights = testkit::random_weights(&mut rng);
        let queues: BTreeMap<SiteId, u64> = topo
            .site_ids()
            .map(|s| (s.clone(), rng.random_range(0..40)))
            .collect();
        let background: u64 = rng.random_range(0..200);

        let snapshot =
            GlobalLoadSnapshot::from_queues(queues.clone()).with_background_jobs(background);
        let model = CostModel::new(weights.clone());
        let catalog = ReplicaCatalog::from_topology(&topo);
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
        let (oracle_site, oracle_total) =
            brute_force_best(&topo, &job, &queues, background, &weights);

        let agree = placement.exec_site == oracle_site
            || (placement.breakdown.total - oracle_total).abs()
                <= 1e-9 * (1.0 + oracle_total.abs());
        if !agree {
            mismatches += 1;
            eprintln!(
                "seed {seed}: matchmaker {} ({}) vs oracle {} ({})",
                placement.exec_site, placement.breakdown.total, oracle_site, oracle_total
            );
        }
    }
    assert_eq!(mismatches, 0, "matchmaker diverged from brute force");
    println!("ACCEPTANCE 3 matchmaker_matches_brute_force: PASS (1000 topologies, 0 mismatches)");
}

/// Criterion 4: rate-bound shape over ten thousand random tuples.
#[test]
fn tcp_rate_bound_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let mss = rng.random_range(100.0..9000.0);
        let rtt = rng.random_range(1.0..1000.0);
        let loss = rng.random_range(1e-6..=1.0);
        let factor = rng.random_range(1.05..8.0);

        let base = mathis_rate(mss, rtt, loss).unwrap();
        assert!(mathis_rate(mss, rtt * factor, loss).unwrap() < base);
        if loss * factor <= 1.0 {
            assert!(mathis_rate(mss, rtt, loss * factor).unwrap() < base);
        }

        let halved = mathis_rate(mss, rtt * 2.0, loss).unwrap();
        assert!(
            (halved - base / 2.0).abs() <= 1e-9 * base,
            "doubling rtt: {halved} vs {}",
            base / 2.0
        );

        // Full loss collapses the bound to exactly mss over rtt seconds.
        assert_eq!(mathis_rate(mss, rtt, 1.0).unwrap(), mss / (rtt / 1000.0));
    }
    println!("ACCEPTANCE 4 tcp_rate_bound_properties: PASS (10000 tuples)");
}

/// Criterion 5: on the canned heterogeneous grid, the cost-driven policy
/// is never worse than either baseline on mean queue and mean completion
/// time at every sweep point, its own mean queue time is non-decreasing in
/// the job count, and the completion-time improvement over the best
/// baseline grows from N=25 to N=1000. Entire sweep under a minute.
#[test]
fn policy_comparison_trends() {
    let started = Instant::now();
    let scenario = load_scenario(&scenario_path("heterogeneous.toml"), None).unwrap();
    let counts = [25usize, 50, 100, 250, 500, 1000];
    let policies = [
        SchedulerPolicy::Diana,
        SchedulerPolicy::DataLocal,
        SchedulerPolicy::ComputeGreedy,
    ];

    let mut queue = BTreeMap::new();
    let mut completion = BTreeMap::new();
    for policy in policies {
        for n in counts {
            let jobs = scenario.jobs_for_count(n).unwrap();
            let mut sim = scenario.sim.clone();
            sim.policy = policy;
            let outcome = run(&scenario.topology, &jobs, &scenario.weights, &sim).unwrap();
            queue.insert((policy.name(), n), outcome.summary.mean_queue);
            completion.insert((policy.name(), n), outcome.summary.mean_completion);
        }
    }

    for n in counts {
        for baseline in ["data_local", "compute_greedy"] {
            assert!(
                queue[&("diana", n)] <= queue[&(baseline, n)] + 1e-9,
                "mean queue at n={n}: diana {} vs {baseline} {}",
                queue[&("diana", n)],
                queue[&(baseline, n)]
            );
            assert!(
                completion[&("diana", n)] <= completion[&(baseline, n)] + 1e-9,
                "mean completion at n={n}: diana {} vs {baseline} {}",
                completion[&("diana", n)],
                completion[&(baseline, n)]
            );
        }
    }

    // Rising queue-time curve for the cost-driven policy itself.
    for pair in counts.windows(2) {
        assert!(
            queue[&("diana", pair[0])] <= queue[&("diana", pair[1])] + 1e-9,
            "diana mean queue fell between n={} and n={}",
            pair[0],
            pair[1]
        );
    }

    // Relative improvement over the best baseline, on the completion-time
    // objective, must grow with scale.
    let improvement = |n: usize| {
        let envelope = completion[&("data_local", n)].min(completion[&("compute_greedy", n)]);
        (envelope - completion[&("diana", n)]) / envelope
    };
    let early = improvement(25);
    let late = improvement(1000);
    assert!(
        late > early,
        "improvement did not grow: {:.3} at 25 vs {:.3} at 1000",
        early,
        late
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "sweep took {elapsed:?}");
    println!(
        "ACCEPTANCE 5 policy_comparison_trends: PASS (improvement {:.1}% -> {:.1}%, {elapsed:?})",
        early * 100.0,
        late * 100.0
    );
}

/// Criterion 6: with replicas behind 100/622/1000 Mbit/s links and equal
/// RTT and loss, the locator ranks the 1000 Mbit/s source first for every
/// probed dataset size and simulated transfer times order inversely with
/// bandwidth.
#[test]
fn replica_ranking_by_bandwidth() {
    let scenario = load_scenario(&scenario_path("replica_bandwidth.toml"), None).unwrap();
    let catalog = ReplicaCatalog::from_topology(&scenario.topology);
    let model = CostModel::new(scenario.weights.clone());
    for dataset in ["ranked-small", "ranked-mid", "ranked-large"] {
        let ranking = rank_replicas(
            &catalog,
            &dataset.into(),
            &"ce".into(),
            scenario.topology.links(),
            &model,
        )
        .unwrap();
        let order: Vec<String> = ranking.entries.iter().map(|e| e.site.to_string()).collect();
        assert_eq!(
            order,
            ["host1000", "host622", "host100"],
            "ranking for {dataset}"
        );
        assert!(
            ranking.entries[0].estimated_transfer_seconds
                < ranking.entries[1].estimated_transfer_seconds
        );
        assert!(
            ranking.entries[1].estimated_transfer_seconds
                < ranking.entries[2].estimated_transfer_seconds
        );
    }

    // Simulated transfers: one job pinned to each source link.
    let outcome = run(
        &scenario.topology,
        &scenario.jobs,
        &scenario.weights,
        &scenario.sim,
    )
    .unwrap();
    let transfer_of = |job: &str| {
        let record = outcome
            .records
            .iter()
            .find(|r| r.job.as_str() == job)
            .unwrap();
        record.transfer_done_time - record.submit_time
    };
    assert!(transfer_of("job-1000") < transfer_of("job-622"));
    assert!(transfer_of("job-622") < transfer_of("job-100"));
    println!("ACCEPTANCE 6 replica_ranking_by_bandwidth: PASS");
}

/// Criterion 7: with arrivals at five times one site's service rate and an
/// idle replica-holding remote site, the hot site never runs more jobs
/// than CPUs and at least one queued job is exported; a zero threshold
/// disables exporting entirely.
#[test]
fn overload_exports() {
    let scenario = load_scenario(&scenario_path("overload_export.toml"), None).unwrap();
    let mut sim = scenario.sim.clone();
    sim.capture_trace = true;
    let outcome = run(&scenario.topology, &scenario.jobs, &scenario.weights, &sim).unwrap();
    assert!(outcome.summary.exported >= 1, "no exports happened");

    let hot_cpus = i64::from(scenario.topology.site(&"hot".into()).unwrap().cpu_count);
    let mut running = 0i64;
    for event in &outcome.trace {
        if event.site == "hot" {
            match event.kind {
                "JobStarted" => {
                    running += 1;
                    assert!(running <= hot_cpus, "hot site oversubscribed");
                }
                "JobFinished" => running -= 1,
                _ => {}
            }
        }
    }

    let mut disabled = scenario.sim.clone();
    disabled.export_threshold = 0.0;
    let outcome = run(
        &scenario.topology,
        &scenario.jobs,
        &scenario.weights,
        &disabled,
    )
    .unwrap();
    assert_eq!(outcome.summary.exported, 0);
    println!("ACCEPTANCE 7 overload_exports: PASS");
}

/// Criterion 8: every shipped scenario produces byte-identical CSV output
/// across two runs with the same seed.
#[test]
fn deterministic_csv_output() {
    let scenarios = [
        "minimal.toml",
        "worked_example.toml",
        "cost_matrix.toml",
        "replica_bandwidth.toml",
        "overload_export.toml",
        "heterogeneous.toml",
    ];
    for name in scenarios {
        let path = scenario_path(name);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let options = RunOptions::default();
        run_scenario(&path, dir_a.path(), &options).unwrap();
        run_scenario(&path, dir_b.path(), &options).unwrap();
        let a = std::fs::read(dir_a.path().join("jobs.csv")).unwrap();
        let b = std::fs::read(dir_b.path().join("jobs.csv")).unwrap();
        assert_eq!(a, b, "jobs.csv differs for {name}");
        let a = std::fs::read(dir_a.path().join("summary.txt")).unwrap();
        let b = std::fs::read(dir_b.path().join("summary.txt")).unwrap();
        assert_eq!(a, b, "summary.txt differs for {name}");
    }
    println!("ACCEPTANCE 8 deterministic_csv_output: PASS ({} scenarios)", scenarios.len());
}

// ---------------------------------------------------------------------------
// Criterion 9: invariant suites, one thousand random cases each.
// ---------------------------------------------------------------------------

fn random_sim(seed: u64) -> (ValidatedTopology, Vec<JobDescriptor>, diana_core::sim::SimOutcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = testkit::random_topology(&mut rng, 4);
    let mut jobs = Vec::new();
    let mut t = 0.0;
    for i in 0..rng.random_range(1..=8) {
        let mut job = testkit::random_job(&mut rng, &topo, &format!("job-{i}"));
        t += rng.random_range(0.0..30.0);
        job.submit_time = t;
        jobs.push(job);
    }
    let weights = testkit::random_weights(&mut rng);
    let cfg = SimConfig {
        seed,
        policy: SchedulerPolicy::ALL[rng.random_range(0..SchedulerPolicy::ALL.len())],
        export_threshold: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        epoch_seconds: rng.random_range(20.0..120.0),
        telemetry_noise: rng.random_range(0.0..0.3),
        capture_trace: true,
        ..SimConfig::default()
    };
    let outcome = run(&topo, &jobs, &weights, &cfg).unwrap();
    (topo, jobs, outcome)
}

/// FCFS: on a single-CPU site, start order equals submission order.
#[test]
fn invariant_fcfs_start_order() {
    for seed in 0..1000u64 {
        let sites = vec![SiteDescriptor::new("only", 1, 1.0)];
        let topo = validate_topology(sites, vec![], vec![], &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jobs = Vec::new();
        let mut t = 0.0;
        for i in 0..rng.random_range(2..=10) {
            t += rng.random_range(0.0..20.0);
            jobs.push(
                JobDescriptor::new(format!("job-{i:02}"), "only", rng.random_range(1.0..40.0))
                    .with_submit_time(t),
            );
        }
        let cfg = SimConfig {
            seed,
            capture_trace: true,
            ..SimConfig::default()
        };
        let outcome = run(&topo, &jobs, &WeightVector::default(), &cfg).unwrap();
        let started: Vec<String> = outcome
            .trace
            .iter()
            .filter(|e| e.kind == "JobStarted")
            .map(|e| e.job.clone())
            .collect();
        let submitted: Vec<String> = jobs.iter().map(|j| j.id.to_string()).collect();
        assert_eq!(started, submitted, "seed {seed}");
    }
    println!("ACCEPTANCE 9a invariant_fcfs_start_order: PASS (1000 cases)");
}

/// Non-preemption: concurrent sub-jobs per site never exceed its CPUs.
#[test]
fn invariant_non_preemptive_slots() {
    for seed in 0..1000u64 {
        let (topo, _, outcome) = random_sim(seed);
        let mut running: BTreeMap<String, i64> = BTreeMap::new();
        for event in &outcome.trace {
            match event.kind {
                "JobStarted" => {
                    let count = running.entry(event.site.clone()).or_insert(0);
                    *count += 1;
                    let cpus = topo
                        .site(&SiteId::from(event.site.as_str()))
                        .unwrap()
                        .cpu_count;
                    assert!(*count <= i64::from(cpus), "seed {seed}: {} oversubscribed", event.site);
                }
                "JobFinished" => {
                    *running.entry(event.site.clone()).or_insert(0) -= 1;
                }
                _ => {}
            }
        }
    }
    println!("ACCEPTANCE 9b invariant_non_preemptive_slots: PASS (1000 cases)");
}

/// Conservation: every submitted job completes exactly once, exported or
/// not, with a consistent timing chain.
#[test]
fn invariant_job_conservation() {
    for seed in 0..1000u64 {
        let (_, jobs, outcome) = random_sim(seed);
        assert_eq!(outcome.records.len(), jobs.len(), "seed {seed}");
        let mut ids: Vec<&str> = outcome.records.iter().map(|r| r.job.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), jobs.len(), "seed {seed}: duplicated records");
        for record in &outcome.records {
            assert!(record.submit_time <= record.transfer_done_time, "seed {seed}");
            assert!(record.transfer_done_time <= record.start_time, "seed {seed}");
            assert!(record.start_time <= record.finish_time, "seed {seed}");
            assert!(record.finish_time <= record.output_done_time, "seed {seed}");
        }
    }
    println!("ACCEPTANCE 9c invariant_job_conservation: PASS (1000 cases)");
}

/// Sub-job co-location: every sub-job of a bundle runs on one site and the
/// bundle completes at its last sub-job finish.
#[test]
fn invariant_sub_job_colocation() {
    for seed in 0..1000u64 {
        let (_, _, outcome) = random_sim(seed);
        let mut bundle_sites: BTreeMap<String, String> = BTreeMap::new();
        let mut last_finish: BTreeMap<String, f64> = BTreeMap::new();
        for event in &outcome.trace {
            let bundle = event.job.split('/').next().unwrap_or_default().to_owned();
            match event.kind {
                "JobStarted" => {
                    let site = bundle_sites
                        .entry(bundle)
                        .or_insert_with(|| event.site.clone());
                    assert_eq!(site, &event.site, "seed {seed}: bundle split across sites");
                }
                "JobFinished" => {
                    let entry = last_finish.entry(bundle).or_insert(0.0);
                    if event.time > *entry {
                        *entry = event.time;
                    }
                }
                _ => {}
            }
        }
        for record in &outcome.records {
            let expected = last_finish[&record.job.to_string()];
            assert_eq!(record.finish_time, expected, "seed {seed}: bundle finish");
        }
    }
    println!("ACCEPTANCE 9d invariant_sub_job_colocation: PASS (1000 cases)");
}

/// Weight-scale invariance: multiplying every weight by a positive factor
/// never changes the selected site or replicas (transfer oracle pinned, so
/// every term scales linearly).
#[test]
fn invariant_weight_scale_argmin() {
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = testkit::random_topology(&mut rng, 5);
        let job = testkit::random_job(&mut rng, &topo, "probe");
        let weights = testkit::random_weights(&mut rng);
        let snapshot = testkit::random_snapshot(&mut rng, &topo);
        let factor = rng.random_range(0.05..0.95);
        let catalog = ReplicaCatalog::from_topology(&topo);

        let mut base = CostModel::new(weights.clone());
        base.dtc_losses_override = Some(rng.random_range(0.5..20.0));
        let mut scaled = CostModel::new(weights.scaled(factor));
        scaled.dtc_losses_override = base.dtc_losses_override;

        let a = get_best_computing_element(
            &topo, &catalog, &job, &snapshot, topo.links(), &base, 5, 0.0,
        )
        .unwrap();
        let b = get_best_computing_element(
            &topo, &catalog, &job, &snapshot, topo.links(), &scaled, 5, 0.0,
        )
        .unwrap();
        assert_eq!(a.exec_site, b.exec_site, "seed {seed}");
        assert_eq!(a.chosen_replicas, b.chosen_replicas, "seed {seed}");
    }
    println!("ACCEPTANCE 9e invariant_weight_scale_argmin: PASS (1000 cases)");
}
