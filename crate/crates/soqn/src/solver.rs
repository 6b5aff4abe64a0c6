//! Exact solvers for closed product-form networks.
//!
//! Two independent routes to the same numbers: mean value analysis works on
//! waiting times and queue lengths directly, while the convolution route goes
//! through normalizing constants. Keeping both lets every result be
//! cross-checked without trusting either implementation alone.

use crate::error::{Error, Result};
use crate::model::{InnerNetwork, NodeSpec, ServiceDiscipline, VisitRatios};

/// A closed network ready to solve: nodes, their visit ratios, and the
/// circulating population.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedNetworkInstance {
    nodes: Vec<NodeSpec>,
    eta: Vec<f64>,
    population: usize,
}

impl ClosedNetworkInstance {
    pub fn new(nodes: Vec<NodeSpec>, eta: Vec<f64>, population: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("closed network has no nodes".into()));
        }
        if nodes.len() != eta.len() {
            return Err(Error::Config(format!(
                "{} nodes but {} visit ratios",
                nodes.len(),
                eta.len()
            )));
        }
        for (node, &e) in nodes.iter().zip(&eta) {
            if !node.rate.is_finite() || node.rate <= 0.0 {
                return Err(Error::Config(format!(
                    "node {:?}: service rate {} must be positive and finite",
                    node.label, node.rate
                )));
            }
            if !e.is_finite() || e <= 0.0 {
                return Err(Error::Config(format!(
                    "node {:?}: visit ratio {e} must be positive and finite",
                    node.label
                )));
            }
        }
        Ok(ClosedNetworkInstance {
            nodes,
            eta,
            population,
        })
    }

    /// The inner network alone, pool short-circuited to a zero-delay hop.
    /// This is the network whose throughput curve becomes the flow
    /// equivalent server.
    pub fn from_inner(inner: &InnerNetwork, eta: &VisitRatios, population: usize) -> Result<Self> {
        ClosedNetworkInstance::new(inner.nodes().to_vec(), eta.inner().to_vec(), population)
    }

    /// The inner network with the pool replaced by a single-server station
    /// of the given rate, visited once per tour.
    pub fn with_pool_server(
        inner: &InnerNetwork,
        eta: &VisitRatios,
        pool_rate: f64,
        population: usize,
    ) -> Result<Self> {
        let mut nodes = Vec::with_capacity(inner.node_count() + 1);
        nodes.push(NodeSpec::fcfs("", pool_rate));
        nodes.extend_from_slice(inner.nodes());
        ClosedNetworkInstance::new(nodes, eta.as_slice().to_vec(), population)
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn visit_ratios(&self) -> &[f64] {
        &self.eta
    }

    /// Service demand eta_j / mu_j per node.
    pub fn service_demands(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.eta)
            .map(|(n, e)| e / n.rate)
            .collect()
    }
}

/// Exact results for populations 0 through N: throughput, and per-node mean
/// queue lengths and sojourn times.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputProfile {
    throughput: Vec<f64>,
    queue: Vec<Vec<f64>>,
    sojourn: Vec<Vec<f64>>,
}

impl ThroughputProfile {
    pub(crate) fn from_parts(
        throughput: Vec<f64>,
        queue: Vec<Vec<f64>>,
        sojourn: Vec<Vec<f64>>,
    ) -> Self {
        ThroughputProfile {
            throughput,
            queue,
            sojourn,
        }
    }

    pub fn population(&self) -> usize {
        self.throughput.len() - 1
    }

    /// Throughput X(n) in the visit-ratio unit, zero at an empty network.
    pub fn throughput(&self, n: usize) -> f64 {
        self.throughput[n]
    }

    pub fn throughputs(&self) -> &[f64] {
        &self.throughput
    }

    /// Mean time a robot spends per visit at node index `j` when n robots
    /// circulate.
    pub fn sojourn(&self, n: usize, j: usize) -> f64 {
        self.sojourn[n][j]
    }

    /// Mean number of robots at node index `j` when n robots circulate.
    pub fn queue_len(&self, n: usize, j: usize) -> f64 {
        self.queue[n][j]
    }
}

/// Mean value analysis, exact for this class of networks.
///
/// The recursion starts from an empty network and adds one robot at a time:
/// an arriving robot at a single-server station waits behind the mean queue
/// the network holds with one robot fewer, while an infinite-server station
/// always takes one mean service time.
pub fn mva(instance: &ClosedNetworkInstance) -> ThroughputProfile {
    let j_count = instance.node_count();
    let n_max = instance.population();
    let mut throughput = vec![0.0; n_max + 1];
    let mut queue = vec![vec![0.0; j_count]; n_max + 1];
    let mut sojourn = vec![vec![0.0; j_count]; n_max + 1];

    for n in 1..=n_max {
        let mut cycle = 0.0;
        for j in 0..j_count {
            let node = &instance.nodes[j];
            let w = match node.discipline {
                ServiceDiscipline::InfiniteServer => 1.0 / node.rate,
                ServiceDiscipline::FcfsSingleServer => (1.0 + queue[n - 1][j]) / node.rate,
            };
            sojourn[n][j] = w;
            cycle += instance.eta[j] * w;
        }
        let x = n as f64 / cycle;
        throughput[n] = x;
        for j in 0..j_count {
            queue[n][j] = x * instance.eta[j] * sojourn[n][j];
        }
    }
    ThroughputProfile {
        throughput,
        queue,
        sojourn,
    }
}

/// Normalizing constants of a closed network, held in the log domain because
/// the raw values overflow f64 well before the population sizes this crate
/// sweeps (a demand of 5 already passes 1e308 near n = 440).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizingConstants {
    log_g: Vec<f64>,
}

impl NormalizingConstants {
    pub fn population(&self) -> usize {
        self.log_g.len() - 1
    }

    /// Natural log of G(n).
    pub fn log_g(&self, n: usize) -> f64 {
        self.log_g[n]
    }

    /// G(n) itself. Prefer `log_g` or `throughput` for large populations.
    pub fn g(&self, n: usize) -> f64 {
        self.log_g[n].exp()
    }

    /// Throughput X(n) = G(n-1) / G(n), finite for any population.
    pub fn throughput(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            (self.log_g[n - 1] - self.log_g[n]).exp()
        }
    }
}

/// Convolution over nodes in the log domain with log-sum-exp folding.
///
/// Per-node factors are demand^k for a single server and demand^k / k! for an
/// infinite server; the convolution then accumulates them one node at a time.
pub fn buzen_normalizing_constants(instance: &ClosedNetworkInstance) -> NormalizingConstants {
    let n_max = instance.population();
    let demands = instance.service_demands();

    let log_factor = |node: &NodeSpec, log_demand: f64, k: usize| -> f64 {
        let base = k as f64 * log_demand;
        match node.discipline {
            ServiceDiscipline::FcfsSingleServer => base,
            ServiceDiscipline::InfiniteServer => {
                base - statrs::function::gamma::ln_gamma(k as f64 + 1.0)
            }
        }
    };

    let mut log_g: Vec<f64> = (0..=n_max)
        .map(|k| log_factor(&instance.nodes[0], demands[0].ln(), k))
        .collect();
    let mut terms = Vec::with_capacity(n_max + 1);
    for (j, node) in instance.nodes.iter().enumerate().skip(1) {
        let log_demand = demands[j].ln();
        let next: Vec<f64> = (0..=n_max)
            .map(|n| {
                terms.clear();
                for k in 0..=n {
                    terms.push(log_g[n - k] + log_factor(node, log_demand, k));
                }
                log_sum_exp(&terms)
            })
            .collect();
        log_g = next;
    }
    NormalizingConstants { log_g }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn two_node_instance(population: usize) -> ClosedNetworkInstance {
        ClosedNetworkInstance::new(
            vec![
                NodeSpec::infinite_server("t", 1.0),
                NodeSpec::fcfs("p", 1.0),
            ],
            vec![1.0, 1.0],
            population,
        )
        .unwrap()
    }

    #[test]
    fn mva_matches_hand_recursion() {
        // n = 1: W = (1, 1), X = 1/2. n = 2: the single server holds a mean
        // queue of 1/2, so W = (1, 1.5) and X = 2/2.5 = 0.8.
        let profile = mva(&two_node_instance(2));
        assert_relative_eq!(profile.throughput(1), 0.5);
        assert_relative_eq!(profile.throughput(2), 0.8);
        assert_relative_eq!(profile.sojourn(2, 1), 1.5);
        assert_relative_eq!(profile.queue_len(2, 1), 1.2);
        assert_eq!(profile.throughput(0), 0.0);
    }

    #[test]
    fn buzen_matches_hand_convolution() {
        // Two single servers with demands 1 and 0.5:
        // G = (1, 1.5, 1.75), X(2) = 1.5 / 1.75.
        let instance = ClosedNetworkInstance::new(
            vec![NodeSpec::fcfs("a", 1.0), NodeSpec::fcfs("b", 2.0)],
            vec![1.0, 1.0],
            2,
        )
        .unwrap();
        let g = buzen_normalizing_constants(&instance);
        assert_relative_eq!(g.g(0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(g.g(1), 1.5, max_relative = 1e-12);
        assert_relative_eq!(g.g(2), 1.75, max_relative = 1e-12);
        assert_relative_eq!(g.throughput(2), 1.5 / 1.75, max_relative = 1e-12);
    }

    #[test]
    fn single_server_ring_throughput_saturates_at_rate() {
        // One FCFS node visited once: X(n) = mu for every n >= 1.
        let instance = ClosedNetworkInstance::new(
            vec![NodeSpec::fcfs("only", 0.25)],
            vec![1.0],
            5,
        )
        .unwrap();
        let profile = mva(&instance);
        for n in 1..=5 {
            assert_relative_eq!(profile.throughput(n), 0.25, max_relative = 1e-12);
        }
    }

    fn random_instance(rng: &mut impl Rng, max_nodes: usize, population: usize) -> ClosedNetworkInstance {
        let j_count = rng.random_range(1..=max_nodes);
        let nodes = (0..j_count)
            .map(|j| {
                let rate = rng.random_range(0.05..5.0);
                if rng.random_bool(0.5) {
                    NodeSpec::infinite_server(format!("n{j}"), rate)
                } else {
                    NodeSpec::fcfs(format!("n{j}"), rate)
                }
            })
            .collect();
        let eta = (0..j_count).map(|_| rng.random_range(0.05..3.0)).collect();
        ClosedNetworkInstance::new(nodes, eta, population).unwrap()
    }

    #[test]
    fn mva_and_buzen_agree_on_random_instances() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5eed_0001);
        for _ in 0..60 {
            let population = rng.random_range(1..=40);
            let instance = random_instance(&mut rng, 6, population);
            let profile = mva(&instance);
            let g = buzen_normalizing_constants(&instance);
            for n in 1..=population {
                assert_relative_eq!(
                    profile.throughput(n),
                    g.throughput(n),
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn throughput_never_decreases_with_population() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5eed_0002);
        for _ in 0..40 {
            let instance = random_instance(&mut rng, 5, 30);
            let profile = mva(&instance);
            for n in 1..=30 {
                assert!(
                    profile.throughput(n) >= profile.throughput(n - 1) - 1e-12,
                    "throughput dipped at n = {n}"
                );
            }
        }
    }

    #[test]
    fn throughput_stays_below_single_server_ceilings() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5eed_0003);
        for _ in 0..40 {
            let instance = random_instance(&mut rng, 5, 25);
            let ceiling = instance
                .nodes()
                .iter()
                .zip(instance.visit_ratios())
                .filter(|(n, _)| n.discipline == ServiceDiscipline::FcfsSingleServer)
                .map(|(n, &e)| n.rate / e)
                .fold(f64::INFINITY, f64::min);
            let profile = mva(&instance);
            for n in 1..=25 {
                assert!(profile.throughput(n) <= ceiling * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn large_population_stays_finite_and_consistent() {
        let instance = ClosedNetworkInstance::new(
            vec![
                NodeSpec::infinite_server("t", 1.0 / 60.0),
                NodeSpec::fcfs("p", 0.2),
                NodeSpec::fcfs("q", 0.11),
            ],
            vec![1.0, 1.0, 0.5],
            600,
        )
        .unwrap();
        let g = buzen_normalizing_constants(&instance);
        let profile = mva(&instance);
        for n in 1..=600 {
            assert!(g.log_g(n).is_finite());
            assert!(g.throughput(n).is_finite());
            assert_relative_eq!(g.throughput(n), profile.throughput(n), max_relative = 1e-8);
        }
        // With demands 60, 5 and 4.55 the raw G(600) is astronomically
        // large; the log route keeps it usable.
        assert!(g.log_g(600) > 700.0);
    }
}
