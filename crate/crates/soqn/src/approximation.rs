//! The semi-open network decomposition.
//!
//! The closed inner network is collapsed into a single state-dependent
//! station whose rate at population n is the exact closed-network throughput
//! X(n). The external queue then becomes a birth-death process that is cheap
//! to solve, and the inner time comes from a second closed-network pass with
//! the pool replaced by a fictitious server at an adjusted arrival rate, so
//! that robots inside the network see the congestion induced by the real
//! stream of tasks.

use crate::error::{Error, Result};
use crate::model::{self, InnerNetwork, ServiceDiscipline, SoqnModel, VisitRatios};
use crate::solver::{mva, ClosedNetworkInstance, ThroughputProfile};
use std::collections::BTreeMap;

/// Throughput of the closed inner network as a function of its population:
/// the service rates of the aggregated station.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEquivalentServer {
    rates: Vec<f64>,
}

impl FlowEquivalentServer {
    fn from_profile(profile: &ThroughputProfile) -> Self {
        FlowEquivalentServer {
            rates: profile.throughputs()[1..].to_vec(),
        }
    }

    pub fn max_population(&self) -> usize {
        self.rates.len()
    }

    /// Service rate with `n` robots busy, constant beyond the profile.
    pub fn rate(&self, n: usize) -> f64 {
        assert!(n >= 1, "the aggregated station is empty at n = 0");
        self.rates[n.min(self.rates.len()) - 1]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

/// Computes the flow equivalent server of a valid inner network for
/// populations 1 through `max_population`.
pub fn flow_equivalent_rates(
    inner: &InnerNetwork,
    max_population: usize,
) -> Result<FlowEquivalentServer> {
    let report = model::validate_network(inner);
    if !report.is_ok() {
        return Err(Error::InvalidModel(report.violations));
    }
    let eta = model::solve_visit_ratios(inner)?;
    let instance = ClosedNetworkInstance::from_inner(inner, &eta, max_population)?;
    Ok(FlowEquivalentServer::from_profile(&mva(&instance)))
}

/// Stationary distribution of the number of tasks in the system, where a
/// task counts from arrival until its robot returns to the pool.
///
/// States 0..=N are stored explicitly; beyond N every additional task waits
/// outside while all N robots work, so the tail is geometric with ratio
/// arrival rate over full-pool service rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalQueueDistribution {
    pi: Vec<f64>,
    tail_ratio: f64,
    mean_backlog: f64,
    mean_wait_s: f64,
}

impl ExternalQueueDistribution {
    /// P(exactly n tasks in the system), any n.
    pub fn prob(&self, n: usize) -> f64 {
        let cap = self.pi.len() - 1;
        if n <= cap {
            self.pi[n]
        } else {
            self.pi[cap] * self.tail_ratio.powi((n - cap) as i32)
        }
    }

    pub fn pool_size(&self) -> usize {
        self.pi.len() - 1
    }

    pub fn tail_ratio(&self) -> f64 {
        self.tail_ratio
    }

    /// Mean number of tasks waiting for a robot.
    pub fn mean_backlog(&self) -> f64 {
        self.mean_backlog
    }

    /// Mean time a task waits before a robot picks it up, in seconds.
    pub fn mean_wait_s(&self) -> f64 {
        self.mean_wait_s
    }

    /// Total probability mass including the geometric tail; one up to
    /// rounding, kept as a method so tests can assert it.
    pub fn total_mass(&self) -> f64 {
        let cap = self.pi.len() - 1;
        let head: f64 = self.pi[..cap].iter().sum();
        head + self.pi[cap] / (1.0 - self.tail_ratio)
    }
}

/// Solves the birth-death external queue for a given arrival rate and pool
/// size against an aggregated inner station.
pub fn external_queue_distribution(
    fes: &FlowEquivalentServer,
    arrival_rate: f64,
    pool_size: usize,
) -> Result<ExternalQueueDistribution> {
    if !(arrival_rate.is_finite() && arrival_rate > 0.0) {
        return Err(Error::Config(format!(
            "arrival rate {arrival_rate} must be positive and finite"
        )));
    }
    if pool_size == 0 || pool_size > fes.max_population() {
        return Err(Error::Config(format!(
            "pool size {pool_size} outside the aggregated station's range 1..={}",
            fes.max_population()
        )));
    }
    let capacity = fes.rate(pool_size);
    let rho = arrival_rate / capacity;
    if rho >= 1.0 {
        return Err(Error::Unstable {
            arrival_rate,
            capacity,
        });
    }

    // Unnormalized weights in the log domain: lw(n) = sum of log birth over
    // death up to n. Keeps long climbs toward the pool size from overflowing.
    let mut lw = Vec::with_capacity(pool_size + 1);
    lw.push(0.0);
    for n in 1..=pool_size {
        lw.push(lw[n - 1] + arrival_rate.ln() - fes.rate(n).ln());
    }
    let shift = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let head: f64 = lw[..pool_size].iter().map(|&v| (v - shift).exp()).sum();
    let boundary = (lw[pool_size] - shift).exp();
    let total = head + boundary / (1.0 - rho);
    let pi: Vec<f64> = lw.iter().map(|&v| (v - shift).exp() / total).collect();

    let mean_backlog = pi[pool_size] * rho / ((1.0 - rho) * (1.0 - rho));
    let mean_wait_s = mean_backlog / arrival_rate;
    Ok(ExternalQueueDistribution {
        pi,
        tail_ratio: rho,
        mean_backlog,
        mean_wait_s,
    })
}

/// Finds the fictitious pool service rate at which a closed tour of the full
/// network reproduces the real task throughput.
///
/// The closed throughput is strictly increasing in the pool rate, so the
/// fixed point is unique; bisection over (arrival, 1e6 * arrival] converges
/// to a relative width of 1e-10 in at most 200 steps.
pub fn adjusted_arrival_fixed_point(model: &SoqnModel) -> Result<f64> {
    let eta = model::solve_visit_ratios(&model.inner)?;
    adjusted_rate(&model.inner, &eta, model.arrival_rate, model.pool_size)
}

fn adjusted_rate(
    inner: &InnerNetwork,
    eta: &VisitRatios,
    arrival_rate: f64,
    pool_size: usize,
) -> Result<f64> {
    let closed = mva(&ClosedNetworkInstance::from_inner(inner, eta, pool_size)?);
    let capacity = closed.throughput(pool_size);
    if arrival_rate >= capacity {
        return Err(Error::Unstable {
            arrival_rate,
            capacity,
        });
    }
    let throughput_at = |pool_rate: f64| -> Result<f64> {
        let instance = ClosedNetworkInstance::with_pool_server(inner, eta, pool_rate, pool_size)?;
        Ok(mva(&instance).throughput(pool_size))
    };
    let mut lo = arrival_rate;
    let mut hi = arrival_rate * 1e6;
    if throughput_at(hi)? <= arrival_rate {
        // The root sits beyond any sensible adjustment, which only happens
        // with utilization so close to one that the queue is unusable.
        return Err(Error::Unstable {
            arrival_rate,
            capacity,
        });
    }
    for _ in 0..200 {
        if (hi - lo) <= 1e-10 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if throughput_at(mid)? < arrival_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which stretch of the tour counts toward a task's inner time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TurnoverDefinition {
    /// From leaving the pool until the task-completing service ends.
    #[default]
    Full,
    /// Only the time at the task-completing stations themselves, queueing
    /// included, with the travel legs between them left out.
    ExcludeTravel,
}

/// Mean time a robot works on one task, measured at the adjusted arrival
/// rate so that queueing inside the network is accounted for.
///
/// `pick_labels` names the stations whose service completes a task; a
/// robot's clock for that task stops the first time it finishes service at
/// any of them. With an empty list the clock runs until the robot returns to
/// the pool. Labels must exist and must be single-server stations.
pub fn inner_processing_time(
    model: &SoqnModel,
    adjusted_rate: f64,
    pick_labels: &[String],
    definition: TurnoverDefinition,
) -> Result<f64> {
    let inner = &model.inner;
    let eta = model::solve_visit_ratios(inner)?;
    let mut pick = vec![false; inner.node_count() + 1];
    for label in pick_labels {
        let j = inner
            .label_index(label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        if inner.node(j).discipline != ServiceDiscipline::FcfsSingleServer {
            return Err(Error::NotFcfs(label.clone()));
        }
        pick[j] = true;
    }

    let instance =
        ClosedNetworkInstance::with_pool_server(inner, &eta, adjusted_rate, model.pool_size)?;
    let profile = mva(&instance);
    let visits = visits_before_completion(inner, &pick)?;

    let mut total = 0.0;
    for j in 1..=inner.node_count() {
        if definition == TurnoverDefinition::ExcludeTravel && !pick[j] {
            continue;
        }
        // Node j sits at offset j in the pool-extended instance.
        total += visits[j - 1] * profile.sojourn(model.pool_size, j);
    }
    Ok(total)
}

/// Expected visits to each inner node on a tour that ends at the first
/// service completion on a marked node, or at pool return if none is marked.
///
/// These solve a = r0 + A a, where r0 is the routing out of the pool and A
/// is the inner routing with the rows of marked nodes removed, since a tour
/// never continues past them.
fn visits_before_completion(inner: &InnerNetwork, pick: &[bool]) -> Result<Vec<f64>> {
    let j_count = inner.node_count();
    let routing = inner.routing();
    let a = nalgebra::DMatrix::from_fn(j_count, j_count, |row, col| {
        // Row and column index inner nodes; entry (row, col) holds the
        // transposed continue probability from node col+1 to node row+1.
        let from = col + 1;
        let to = row + 1;
        let continues = if pick[from] { 0.0 } else { routing.prob(from, to) };
        let identity = if row == col { 1.0 } else { 0.0 };
        identity - continues
    });
    let b = nalgebra::DVector::from_fn(j_count, |row, _| routing.prob(0, row + 1));
    let visits = a
        .lu()
        .solve(&b)
        .ok_or(Error::NotIrreducible)?
        .iter()
        .cloned()
        .collect::<Vec<f64>>();
    if visits.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return Err(Error::NotIrreducible);
    }
    Ok(visits.into_iter().map(|v| v.max(0.0)).collect())
}

/// Analytic performance of a model, or the reason it has none.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    /// Whether the arrival rate is strictly below the sustainable rate.
    pub stable: bool,
    /// Throughput of the inner network with the full pool circulating,
    /// tasks per second.
    pub capacity: f64,
    /// Mean wait for a robot, seconds. None when unstable.
    pub external_wait_s: Option<f64>,
    /// Mean inner time under the requested definition, seconds. None when
    /// unstable.
    pub inner_processing_s: Option<f64>,
    /// External wait plus inner time, seconds. None when unstable.
    pub turnover_s: Option<f64>,
    /// The fictitious pool rate used for the inner pass. None when unstable.
    pub adjusted_arrival_rate: Option<f64>,
    /// Long-run busy fraction of each single-server station.
    pub per_node_utilization: BTreeMap<String, f64>,
}

/// Runs the full pipeline on one model.
pub fn evaluate(
    model: &SoqnModel,
    pick_labels: &[String],
    definition: TurnoverDefinition,
) -> Result<PerformanceReport> {
    let report = model::validate_model(model);
    if !report.is_ok() {
        return Err(Error::InvalidModel(report.violations));
    }
    let eta = model::solve_visit_ratios(&model.inner)?;
    let closed = mva(&ClosedNetworkInstance::from_inner(
        &model.inner,
        &eta,
        model.pool_size,
    )?);
    let capacity = closed.throughput(model.pool_size);

    let mut per_node_utilization = BTreeMap::new();
    for j in 1..=model.inner.node_count() {
        let node = model.inner.node(j);
        if node.discipline == ServiceDiscipline::FcfsSingleServer {
            per_node_utilization.insert(
                node.label.clone(),
                model.arrival_rate * eta.of(j) / node.rate,
            );
        }
    }

    if model.arrival_rate >= capacity {
        return Ok(PerformanceReport {
            stable: false,
            capacity,
            external_wait_s: None,
            inner_processing_s: None,
            turnover_s: None,
            adjusted_arrival_rate: None,
            per_node_utilization,
        });
    }

    let fes = FlowEquivalentServer::from_profile(&closed);
    let external =
        external_queue_distribution(&fes, model.arrival_rate, model.pool_size)?;
    let adjusted = adjusted_rate(&model.inner, &eta, model.arrival_rate, model.pool_size)?;
    let inner_s = inner_processing_time(model, adjusted, pick_labels, definition)?;
    Ok(PerformanceReport {
        stable: true,
        capacity,
        external_wait_s: Some(external.mean_wait_s()),
        inner_processing_s: Some(inner_s),
        turnover_s: Some(external.mean_wait_s() + inner_s),
        adjusted_arrival_rate: Some(adjusted),
        per_node_utilization,
    })
}

/// Largest arrival rate a given pool keeps stable: the closed throughput
/// with the whole pool circulating.
pub fn max_stable_arrival(inner: &InnerNetwork, pool_size: usize) -> Result<f64> {
    let fes = flow_equivalent_rates(inner, pool_size)?;
    Ok(fes.rate(pool_size))
}

/// Smallest pool that makes the arrival rate stable, searching up to `cap`.
///
/// Returns Ok(None) when every pool up to the cap is too small but the rate
/// still sits below the bottleneck, and an error when no finite pool can
/// ever catch up.
pub fn min_robots(inner: &InnerNetwork, arrival_rate: f64, cap: usize) -> Result<Option<usize>> {
    let report = model::validate_network(inner);
    if !report.is_ok() {
        return Err(Error::InvalidModel(report.violations));
    }
    if !(arrival_rate.is_finite() && arrival_rate > 0.0) {
        return Err(Error::Config(format!(
            "arrival rate {arrival_rate} must be positive and finite"
        )));
    }
    let eta = model::solve_visit_ratios(inner)?;
    let bottleneck = model::bottleneck_throughput(inner, &eta);
    if arrival_rate >= bottleneck {
        return Err(Error::ArrivalExceedsBottleneck {
            arrival_rate,
            bottleneck,
        });
    }
    let instance = ClosedNetworkInstance::from_inner(inner, &eta, cap)?;
    let profile = mva(&instance);
    for n in 1..=cap {
        if profile.throughput(n) > arrival_rate {
            return Ok(Some(n));
        }
    }
    Ok(None)
}
