//! Discrete-event simulation of the semi-open network.
//!
//! The simulator shares the model types with the analytic side but none of
//! its mathematics: it draws exponential variates, moves robots one event at
//! a time, and measures. Agreement between the two routes is therefore a
//! meaningful check of both.
//!
//! Determinism: every random stream is seeded from the configuration seed
//! alone, replications run on seeds derived from the replication index, and
//! simultaneous events break ties by creation order. The same configuration
//! always produces bit-identical results, replicated in parallel or not.

use crate::approximation::TurnoverDefinition;
use crate::error::{Error, Result};
use crate::model::{validate_model, ServiceDiscipline, SoqnModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

/// Seed used when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 1729;

/// A full simulation request.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: SoqnModel,
    /// Stations whose service completion finishes a task; empty means a
    /// task finishes when its robot returns to the pool.
    pub pick_labels: Vec<String>,
    pub turnover_definition: TurnoverDefinition,
    pub horizon_s: f64,
    /// Statistics ignore everything before this time.
    pub warmup_s: f64,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    /// Defaults: one million simulated seconds, a tenth of it warmup,
    /// twenty replications.
    pub fn new(model: SoqnModel) -> Self {
        SimConfig {
            model,
            pick_labels: Vec::new(),
            turnover_definition: TurnoverDefinition::Full,
            horizon_s: 1_000_000.0,
            warmup_s: 100_000.0,
            seed: DEFAULT_SEED,
            replications: 20,
        }
    }

    fn validate(&self) -> Result<()> {
        let report = validate_model(&self.model);
        if !report.is_ok() {
            return Err(Error::InvalidModel(report.violations));
        }
        if !self.horizon_s.is_finite() || self.horizon_s <= 0.0 {
            return Err(Error::Config(format!(
                "horizon {} must be positive and finite",
                self.horizon_s
            )));
        }
        if !self.warmup_s.is_finite() || self.warmup_s < 0.0 || self.warmup_s >= self.horizon_s {
            return Err(Error::Config(format!(
                "warmup {} must sit inside the horizon {}",
                self.warmup_s, self.horizon_s
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        for label in &self.pick_labels {
            let j = self
                .model
                .inner
                .label_index(label)
                .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
            if self.model.inner.node(j).discipline != ServiceDiscipline::FcfsSingleServer {
                return Err(Error::NotFcfs(label.clone()));
            }
        }
        Ok(())
    }
}

/// Measurements from a single run, all restricted to the window between
/// warmup and horizon. Task-based means cover tasks that both arrived and
/// completed inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub completed_tasks: u64,
    pub mean_external_wait_s: f64,
    pub mean_inner_processing_s: f64,
    pub mean_turnover_s: f64,
    pub mean_backlog: f64,
    pub robot_utilization: f64,
    pub per_node_mean_queue: BTreeMap<String, f64>,
    pub window_s: f64,
    /// Set when robots were busy more than 97% of the window; estimates
    /// this close to saturation converge too slowly to trust.
    pub near_saturation: bool,
}

/// A mean with a symmetric 95% confidence half-width, absent when only one
/// replication was run.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: Option<f64>,
}

/// Cross-replication summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub replications: usize,
    pub completed_tasks: Estimate,
    pub external_wait_s: Estimate,
    pub inner_processing_s: Estimate,
    pub turnover_s: Estimate,
    pub mean_backlog: Estimate,
    pub robot_utilization: Estimate,
    pub per_node_mean_queue: BTreeMap<String, Estimate>,
    pub any_near_saturation: bool,
}

/// Runs one replication (the first of the configured set).
pub fn simulate(config: &SimConfig) -> Result<SimStats> {
    config.validate()?;
    Ok(run_single(config, replication_seed(config.seed, 0)))
}

/// Runs all replications in parallel and summarizes them.
pub fn replicate(config: &SimConfig) -> Result<ReplicationSummary> {
    config.validate()?;
    let runs: Vec<SimStats> = (0..config.replications)
        .into_par_iter()
        .map(|i| run_single(config, replication_seed(config.seed, i as u64)))
        .collect();

    let collect = |f: &dyn Fn(&SimStats) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    let mut per_node = BTreeMap::new();
    for label in runs[0].per_node_mean_queue.keys() {
        let values: Vec<f64> = runs
            .iter()
            .map(|r| r.per_node_mean_queue[label])
            .collect();
        per_node.insert(label.clone(), summarize(&values));
    }
    Ok(ReplicationSummary {
        replications: config.replications,
        completed_tasks: summarize(&collect(&|r| r.completed_tasks as f64)),
        external_wait_s: summarize(&collect(&|r| r.mean_external_wait_s)),
        inner_processing_s: summarize(&collect(&|r| r.mean_inner_processing_s)),
        turnover_s: summarize(&collect(&|r| r.mean_turnover_s)),
        mean_backlog: summarize(&collect(&|r| r.mean_backlog)),
        robot_utilization: summarize(&collect(&|r| r.robot_utilization)),
        per_node_mean_queue: per_node,
        any_near_saturation: runs.iter().any(|r| r.near_saturation),
    })
}

fn summarize(values: &[f64]) -> Estimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate {
            mean,
            half_width: None,
        };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    Estimate {
        mean,
        half_width: Some(t * (var / n as f64).sqrt()),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn replication_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(splitmix64(index)))
}

fn stream_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// A task riding through the system. `start_s` is when a robot picked it
/// up; `station_s` accumulates queueing plus service at completion stations.
#[derive(Debug, Clone, Copy)]
struct Task {
    arrival_s: f64,
    start_s: f64,
    entered_s: f64,
    station_s: f64,
    done: bool,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival,
    IsDone { node: usize, task: Task },
    FcfsDone { node: usize },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time.total_cmp(&other.time).is_eq() && self.seq == other.seq
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so the binary heap pops the earliest event, ties broken by
    /// creation order.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Engine<'a> {
    config: &'a SimConfig,
    j_count: usize,
    pick: Vec<bool>,
    disciplines: Vec<ServiceDiscipline>,

    heap: BinaryHeap<Event>,
    seq: u64,
    last_t: f64,
    pool: usize,
    backlog: VecDeque<Task>,
    fcfs_queue: Vec<VecDeque<Task>>,
    is_busy: Vec<usize>,

    arrival_rng: ChaCha12Rng,
    arrival_dist: Exp<f64>,
    routing_rng: ChaCha12Rng,
    service_rng: Vec<ChaCha12Rng>,
    service_dist: Vec<Exp<f64>>,

    area_node: Vec<f64>,
    area_pool: f64,
    area_backlog: f64,
    sum_wait: f64,
    sum_inner: f64,
    sum_turnover: f64,
    completed: u64,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig, seed: u64) -> Self {
        let inner = &config.model.inner;
        let j_count = inner.node_count();
        let mut pick = vec![false; j_count + 1];
        for label in &config.pick_labels {
            pick[inner.label_index(label).expect("validated label")] = true;
        }
        let disciplines: Vec<ServiceDiscipline> =
            (1..=j_count).map(|j| inner.node(j).discipline).collect();
        Engine {
            config,
            j_count,
            pick,
            service_dist: (1..=j_count)
                .map(|j| Exp::new(inner.node(j).rate).expect("positive rate"))
                .collect(),
            service_rng: (1..=j_count)
                .map(|j| ChaCha12Rng::seed_from_u64(stream_seed(seed, 1 + j as u64)))
                .collect(),
            disciplines,
            heap: BinaryHeap::new(),
            seq: 0,
            last_t: 0.0,
            pool: config.model.pool_size,
            backlog: VecDeque::new(),
            fcfs_queue: vec![VecDeque::new(); j_count],
            is_busy: vec![0; j_count],
            arrival_rng: ChaCha12Rng::seed_from_u64(stream_seed(seed, 0)),
            arrival_dist: Exp::new(config.model.arrival_rate).expect("positive rate"),
            routing_rng: ChaCha12Rng::seed_from_u64(stream_seed(seed, 1)),
            area_node: vec![0.0; j_count],
            area_pool: 0.0,
            area_backlog: 0.0,
            sum_wait: 0.0,
            sum_inner: 0.0,
            sum_turnover: 0.0,
            completed: 0,
        }
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    /// Integrates time-weighted state over the slice of (last event, t]
    /// that falls inside the measurement window.
    fn advance(&mut self, t: f64) {
        let from = self.last_t.max(self.config.warmup_s);
        let to = t.min(self.config.horizon_s);
        if to > from {
            let dt = to - from;
            for j in 0..self.j_count {
                let present = match self.disciplines[j] {
                    ServiceDiscipline::InfiniteServer => self.is_busy[j],
                    ServiceDiscipline::FcfsSingleServer => self.fcfs_queue[j].len(),
                };
                self.area_node[j] += dt * present as f64;
            }
            self.area_pool += dt * self.pool as f64;
            self.area_backlog += dt * self.backlog.len() as f64;
        }
        self.last_t = t;
    }

    fn route_from(&mut self, from: usize) -> usize {
        let row = self.config.model.inner.routing().row(from);
        let u: f64 = self.routing_rng.random();
        let mut acc = 0.0;
        let mut dest = 0;
        for (j, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            dest = j;
            if u < acc {
                break;
            }
        }
        dest
    }

    fn dispatch(&mut self, mut task: Task, now: f64) {
        task.start_s = now;
        let dest = self.route_from(0);
        self.enter(dest, task, now);
    }

    fn enter(&mut self, node: usize, mut task: Task, now: f64) {
        debug_assert!(node >= 1);
        let j = node - 1;
        match self.disciplines[j] {
            ServiceDiscipline::InfiniteServer => {
                self.is_busy[j] += 1;
                let s = self.service_dist[j].sample(&mut self.service_rng[j]);
                self.push(now + s, EventKind::IsDone { node, task });
            }
            ServiceDiscipline::FcfsSingleServer => {
                task.entered_s = now;
                self.fcfs_queue[j].push_back(task);
                if self.fcfs_queue[j].len() == 1 {
                    let s = self.service_dist[j].sample(&mut self.service_rng[j]);
                    self.push(now + s, EventKind::FcfsDone { node });
                }
            }
        }
    }

    fn record_completion(&mut self, task: &Task, now: f64) {
        if task.arrival_s < self.config.warmup_s {
            return;
        }
        let inner = match self.config.turnover_definition {
            TurnoverDefinition::Full => now - task.start_s,
            TurnoverDefinition::ExcludeTravel => task.station_s,
        };
        self.sum_wait += task.start_s - task.arrival_s;
        self.sum_inner += inner;
        self.sum_turnover += (task.start_s - task.arrival_s) + inner;
        self.completed += 1;
    }

    fn depart(&mut self, node: usize, mut task: Task, now: f64) {
        if self.pick[node] && !task.done {
            task.done = true;
            if !self.config.pick_labels.is_empty() {
                self.record_completion(&task, now);
            }
        }
        let dest = self.route_from(node);
        if dest == 0 {
            if self.config.pick_labels.is_empty() {
                // Pool return is the completion point when no station is
                // marked; reuse the pick bookkeeping's convention.
                task.done = true;
                task.station_s = 0.0;
                self.record_completion(&task, now);
            }
            if let Some(next) = self.backlog.pop_front() {
                self.dispatch(next, now);
            } else {
                self.pool += 1;
            }
        } else {
            self.enter(dest, task, now);
        }
    }

    fn run(mut self) -> SimStats {
        let horizon = self.config.horizon_s;
        let first = self.arrival_dist.sample(&mut self.arrival_rng);
        self.push(first, EventKind::Arrival);

        while let Some(next) = self.heap.peek() {
            if next.time > horizon {
                break;
            }
            let event = self.heap.pop().expect("peeked");
            let now = event.time;
            self.advance(now);
            match event.kind {
                EventKind::Arrival => {
                    let task = Task {
                        arrival_s: now,
                        start_s: now,
                        entered_s: now,
                        station_s: 0.0,
                        done: false,
                    };
                    if self.pool > 0 {
                        self.pool -= 1;
                        self.dispatch(task, now);
                    } else {
                        self.backlog.push_back(task);
                    }
                    let gap = self.arrival_dist.sample(&mut self.arrival_rng);
                    self.push(now + gap, EventKind::Arrival);
                }
                EventKind::IsDone { node, task } => {
                    self.is_busy[node - 1] -= 1;
                    self.depart(node, task, now);
                }
                EventKind::FcfsDone { node } => {
                    let j = node - 1;
                    let mut task = self.fcfs_queue[j].pop_front().expect("a task in service");
                    if !self.fcfs_queue[j].is_empty() {
                        let s = self.service_dist[j].sample(&mut self.service_rng[j]);
                        self.push(now + s, EventKind::FcfsDone { node });
                    }
                    task.station_s += now - task.entered_s;
                    self.depart(node, task, now);
                }
            }
            debug_assert_eq!(
                self.pool
                    + self.is_busy.iter().sum::<usize>()
                    + self.fcfs_queue.iter().map(|q| q.len()).sum::<usize>(),
                self.config.model.pool_size,
                "robots leaked at t = {now}"
            );
            debug_assert!(
                self.backlog.is_empty() || self.pool == 0,
                "tasks queued while robots idled at t = {now}"
            );
        }
        self.advance(horizon);

        let window = horizon - self.config.warmup_s;
        let per_task = |sum: f64, count: u64| if count == 0 { 0.0 } else { sum / count as f64 };
        let mut per_node_mean_queue = BTreeMap::new();
        for j in 0..self.j_count {
            per_node_mean_queue.insert(
                self.config.model.inner.node(j + 1).label.clone(),
                self.area_node[j] / window,
            );
        }
        let utilization =
            1.0 - self.area_pool / (window * self.config.model.pool_size as f64);
        SimStats {
            completed_tasks: self.completed,
            mean_external_wait_s: per_task(self.sum_wait, self.completed),
            mean_inner_processing_s: per_task(self.sum_inner, self.completed),
            mean_turnover_s: per_task(self.sum_turnover, self.completed),
            mean_backlog: self.area_backlog / window,
            robot_utilization: utilization,
            per_node_mean_queue,
            window_s: window,
            near_saturation: utilization > 0.97,
        }
    }
}

fn run_single(config: &SimConfig, seed: u64) -> SimStats {
    Engine::new(config, seed).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximation::evaluate;
    use crate::model::{InnerNetwork, NodeSpec, RoutingMatrix};

    fn loop_model(node: NodeSpec, pool: usize, arrival: f64) -> SoqnModel {
        SoqnModel::new(
            InnerNetwork::new(
                vec![node],
                RoutingMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            ),
            pool,
            arrival,
        )
    }

    #[test]
    fn identical_seeds_reproduce_identical_results() {
        let model = loop_model(NodeSpec::fcfs("s", 1.0), 2, 0.4);
        let mut config = SimConfig::new(model);
        config.horizon_s = 5_000.0;
        config.warmup_s = 500.0;
        config.replications = 3;
        let a = replicate(&config).unwrap();
        let b = replicate(&config).unwrap();
        assert_eq!(a, b);
        config.seed += 1;
        let c = replicate(&config).unwrap();
        assert_ne!(a.turnover_s.mean, c.turnover_s.mean);
    }

    #[test]
    fn single_replication_has_no_interval() {
        let model = loop_model(NodeSpec::fcfs("s", 1.0), 2, 0.4);
        let mut config = SimConfig::new(model);
        config.horizon_s = 2_000.0;
        config.warmup_s = 100.0;
        config.replications = 1;
        let summary = replicate(&config).unwrap();
        assert_eq!(summary.external_wait_s.half_width, None);
        let single = simulate(&config).unwrap();
        assert_eq!(single.mean_external_wait_s, summary.external_wait_s.mean);
    }

    #[test]
    fn mm1_wait_falls_inside_the_interval() {
        // One robot and one unit-rate station at arrival 0.5: the external
        // wait is that of an M/M/1 queue, exactly one second.
        let model = loop_model(NodeSpec::fcfs("s", 1.0), 1, 0.5);
        let mut config = SimConfig::new(model);
        config.horizon_s = 60_000.0;
        config.warmup_s = 6_000.0;
        config.replications = 10;
        let summary = replicate(&config).unwrap();
        let hw = summary.external_wait_s.half_width.unwrap();
        let err = (summary.external_wait_s.mean - 1.0).abs();
        assert!(
            err < (3.0 * hw).max(0.05),
            "wait {} +- {hw} too far from 1.0",
            summary.external_wait_s.mean
        );
    }

    #[test]
    fn throughput_matches_arrivals_when_stable() {
        let model = loop_model(NodeSpec::infinite_server("t", 0.05), 30, 0.8);
        let mut config = SimConfig::new(model);
        config.horizon_s = 30_000.0;
        config.warmup_s = 3_000.0;
        config.replications = 4;
        let summary = replicate(&config).unwrap();
        let window = config.horizon_s - config.warmup_s;
        let rate = summary.completed_tasks.mean / window;
        assert!(
            (rate - 0.8).abs() / 0.8 < 0.02,
            "completion rate {rate} should track arrivals"
        );
        assert!(!summary.any_near_saturation);
    }

    #[test]
    fn little_law_ties_backlog_to_wait() {
        let model = loop_model(NodeSpec::fcfs("s", 1.0), 1, 0.5);
        let mut config = SimConfig::new(model);
        config.horizon_s = 80_000.0;
        config.warmup_s = 8_000.0;
        config.replications = 4;
        let summary = replicate(&config).unwrap();
        let implied_wait = summary.mean_backlog.mean / 0.5;
        let measured = summary.external_wait_s.mean;
        assert!(
            (implied_wait - measured).abs() / measured < 0.1,
            "backlog implies {implied_wait}, tasks measured {measured}"
        );
    }

    #[test]
    fn turnover_tracks_the_analytic_pipeline_loosely() {
        let inner = InnerNetwork::new(
            vec![
                NodeSpec::infinite_server("t", 0.1),
                NodeSpec::fcfs("p", 0.4),
            ],
            RoutingMatrix::from_rows(vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ])
            .unwrap(),
        );
        let model = SoqnModel::new(inner, 8, 0.25);
        let report = evaluate(&model, &[], TurnoverDefinition::Full).unwrap();
        let mut config = SimConfig::new(model);
        config.horizon_s = 50_000.0;
        config.warmup_s = 5_000.0;
        config.replications = 6;
        let summary = replicate(&config).unwrap();
        let analytic = report.turnover_s.unwrap();
        let rel = (summary.turnover_s.mean - analytic).abs() / analytic;
        assert!(
            rel < 0.1,
            "simulated {} vs analytic {analytic}",
            summary.turnover_s.mean
        );
    }

    #[test]
    fn saturated_runs_are_flagged_not_rejected() {
        let model = loop_model(NodeSpec::fcfs("s", 0.1), 2, 0.5);
        let mut config = SimConfig::new(model);
        config.horizon_s = 5_000.0;
        config.warmup_s = 500.0;
        config.replications = 1;
        let stats = simulate(&config).unwrap();
        assert!(stats.near_saturation);
        assert!(stats.mean_backlog > 10.0);
    }

    #[test]
    fn config_validation_guards_the_obvious() {
        let model = loop_model(NodeSpec::fcfs("s", 1.0), 1, 0.5);
        let mut config = SimConfig::new(model.clone());
        config.warmup_s = config.horizon_s;
        assert!(matches!(simulate(&config).unwrap_err(), Error::Config(_)));

        let mut config = SimConfig::new(model.clone());
        config.pick_labels = vec!["nope".into()];
        assert_eq!(
            simulate(&config).unwrap_err(),
            Error::UnknownLabel("nope".into())
        );

        let mut config = SimConfig::new(model);
        config.replications = 0;
        assert!(matches!(replicate(&config).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn pick_completion_splits_wait_and_inner_consistently() {
        let inner = InnerNetwork::new(
            vec![
                NodeSpec::infinite_server("t", 0.2),
                NodeSpec::fcfs("p", 0.5),
                NodeSpec::infinite_server("back", 0.1),
            ],
            RoutingMatrix::from_rows(vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0, 0.0],
            ])
            .unwrap(),
        );
        let model = SoqnModel::new(inner, 6, 0.2);
        let mut config = SimConfig::new(model);
        config.pick_labels = vec!["p".into()];
        config.horizon_s = 20_000.0;
        config.warmup_s = 2_000.0;
        config.replications = 2;
        let summary = replicate(&config).unwrap();
        // Turnover must equal wait plus inner by construction.
        let lhs = summary.turnover_s.mean;
        let rhs = summary.external_wait_s.mean + summary.inner_processing_s.mean;
        assert!((lhs - rhs).abs() < 1e-9);
        // The return leg (10 s mean) happens after completion, so the inner
        // time must sit well below the full tour mean of 5 + 2 + 10.
        assert!(summary.inner_processing_s.mean < 10.0);
        assert!(summary.inner_processing_s.mean > 6.9);
    }
}
