//! Model types for a semi-open queueing network with backordering.
//!
//! Node 0 is the robot pool. Inner nodes are numbered 1 through J and hold
//! one service station each. The routing matrix lives in that combined index
//! space, so a network with J inner nodes carries a (J+1) x (J+1) matrix.

use crate::error::{Error, Result};
use serde::Deserialize;

/// How a station serves the robots queued at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceDiscipline {
    /// Every robot is served immediately; delays model travel legs.
    InfiniteServer,
    /// One server, first come first served; models pick and replenishment
    /// stations worked by a single operator.
    FcfsSingleServer,
}

/// One inner station: a label, a discipline, and an exponential service rate
/// in jobs per second.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub label: String,
    pub discipline: ServiceDiscipline,
    pub rate: f64,
}

impl NodeSpec {
    pub fn infinite_server(label: impl Into<String>, rate: f64) -> Self {
        NodeSpec {
            label: label.into(),
            discipline: ServiceDiscipline::InfiniteServer,
            rate,
        }
    }

    pub fn fcfs(label: impl Into<String>, rate: f64) -> Self {
        NodeSpec {
            label: label.into(),
            discipline: ServiceDiscipline::FcfsSingleServer,
            rate,
        }
    }

    pub fn mean_service_s(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Row-stochastic routing over the pool plus the inner nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    rows: Vec<Vec<f64>>,
}

impl RoutingMatrix {
    /// Builds a routing matrix from raw rows, renormalizing each row whose
    /// sum is within 1e-9 of one and rejecting anything further off.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("routing matrix is empty".into()));
        }
        let dim = rows.len();
        let mut normalized = Vec::with_capacity(dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Config(format!(
                    "routing row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (j, &p) in row.iter().enumerate() {
                if !p.is_finite() || !(-1e-12..=1.0 + 1e-9).contains(&p) {
                    return Err(Error::Config(format!(
                        "routing probability ({i},{j}) = {p} is outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "routing row {i} sums to {sum}, expected 1 within 1e-9"
                )));
            }
            normalized.push(row.iter().map(|&p| p.max(0.0) / sum).collect());
        }
        Ok(RoutingMatrix { rows: normalized })
    }

    /// Builds a routing matrix without checking row sums. Useful for holding
    /// deliberately broken matrices so that validation can describe them.
    pub fn new_unchecked(rows: Vec<Vec<f64>>) -> Self {
        RoutingMatrix { rows }
    }

    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from]
    }

    /// True when every node can reach every other node through positive
    /// routing probabilities.
    pub fn is_irreducible(&self) -> bool {
        let dim = self.dimension();
        if dim == 0 || self.rows.iter().any(|r| r.len() != dim) {
            return false;
        }
        let forward = |from: usize, to: usize| self.rows[from][to] > 0.0;
        let backward = |from: usize, to: usize| self.rows[to][from] > 0.0;
        reaches_all(dim, forward) && reaches_all(dim, backward)
    }
}

fn reaches_all(dim: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; dim];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(from) = stack.pop() {
        for (to, seen_to) in seen.iter_mut().enumerate() {
            if !*seen_to && edge(from, to) {
                *seen_to = true;
                stack.push(to);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// The service stations and routing seen by a robot between leaving the pool
/// and returning to it.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerNetwork {
    nodes: Vec<NodeSpec>,
    routing: RoutingMatrix,
}

impl InnerNetwork {
    pub fn new(nodes: Vec<NodeSpec>, routing: RoutingMatrix) -> Self {
        InnerNetwork { nodes, routing }
    }

    /// Number of inner nodes, J.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    /// The node at routing index `j`, which must be in 1..=J.
    pub fn node(&self, j: usize) -> &NodeSpec {
        &self.nodes[j - 1]
    }

    pub fn routing(&self) -> &RoutingMatrix {
        &self.routing
    }

    /// Routing index of the node with this label, if present.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label).map(|i| i + 1)
    }
}

/// A full model: inner network, robot pool size, and task arrival rate in
/// tasks per second.
#[derive(Debug, Clone, PartialEq)]
pub struct SoqnModel {
    pub inner: InnerNetwork,
    pub pool_size: usize,
    pub arrival_rate: f64,
}

impl SoqnModel {
    pub fn new(inner: InnerNetwork, pool_size: usize, arrival_rate: f64) -> Self {
        SoqnModel {
            inner,
            pool_size,
            arrival_rate,
        }
    }
}

/// Relative visit frequencies solved from the traffic equations, indexed like
/// the routing matrix with the pool pinned to one.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitRatios {
    eta: Vec<f64>,
}

impl VisitRatios {
    /// Visit ratio of routing index `j` (0 is the pool).
    pub fn of(&self, j: usize) -> f64 {
        self.eta[j]
    }

    /// Ratios of the inner nodes only, in routing order 1..=J.
    pub fn inner(&self) -> &[f64] {
        &self.eta[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eta
    }
}

/// Outcome of structural validation: an empty list means the model is sound.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the inner network's structural invariants and reports every
/// violation found rather than stopping at the first.
pub fn validate_network(inner: &InnerNetwork) -> ValidationReport {
    let mut violations = Vec::new();
    let j_count = inner.node_count();
    if j_count == 0 {
        violations.push("network has no inner nodes".into());
    }
    for (i, node) in inner.nodes().iter().enumerate() {
        if node.label.is_empty() {
            violations.push(format!("node {} has an empty label", i + 1));
        }
        if !node.rate.is_finite() || node.rate <= 0.0 {
            violations.push(format!(
                "node {:?}: service rate {} must be positive and finite",
                node.label, node.rate
            ));
        }
        if inner.nodes()[..i].iter().any(|n| n.label == node.label) {
            violations.push(format!("duplicate node label {:?}", node.label));
        }
    }
    let routing = inner.routing();
    let dim = routing.dimension();
    if dim != j_count + 1 {
        violations.push(format!(
            "routing matrix is {dim} x {dim}, expected {} x {} for {} inner nodes",
            j_count + 1,
            j_count + 1,
            j_count
        ));
        return ValidationReport { violations };
    }
    for i in 0..dim {
        if routing.row(i).len() != dim {
            violations.push(format!("routing row {i} is not length {dim}"));
            return ValidationReport { violations };
        }
        let sum: f64 = routing.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            let name = row_name(inner, i);
            violations.push(format!("routing row for {name} sums to {sum}, expected 1"));
        }
        for (j, &p) in routing.row(i).iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                violations.push(format!(
                    "routing probability ({i},{j}) = {p} is outside [0, 1]"
                ));
            }
        }
    }
    if routing.prob(0, 0) != 0.0 {
        violations.push(format!(
            "pool self-loop probability is {}, expected 0: every task visits \
             at least one inner node",
            routing.prob(0, 0)
        ));
    }
    if !routing.is_irreducible() {
        violations.push("routing is not irreducible".into());
    }
    ValidationReport { violations }
}

fn row_name(inner: &InnerNetwork, i: usize) -> String {
    if i == 0 {
        "the pool".into()
    } else if i <= inner.node_count() {
        format!("node {:?}", inner.node(i).label)
    } else {
        format!("index {i}")
    }
}

/// Validates the inner network plus the pool size and arrival rate.
pub fn validate_model(model: &SoqnModel) -> ValidationReport {
    let mut report = validate_network(&model.inner);
    if model.pool_size == 0 {
        report.violations.push("pool size must be at least 1".into());
    }
    if !model.arrival_rate.is_finite() || model.arrival_rate <= 0.0 {
        report.violations.push(format!(
            "arrival rate {} must be positive and finite",
            model.arrival_rate
        ));
    }
    report
}

/// Solves the traffic equations eta = eta R with the pool pinned to one.
///
/// The solution is checked back against the equations to an infinity-norm
/// residual of 1e-10 and must be strictly positive everywhere, both of which
/// hold exactly when the routing is irreducible.
pub fn solve_visit_ratios(inner: &InnerNetwork) -> Result<VisitRatios> {
    let dim = inner.node_count() + 1;
    let routing = inner.routing();
    if routing.dimension() != dim || (0..dim).any(|i| routing.row(i).len() != dim) {
        return Err(Error::Config(format!(
            "routing matrix must be {dim} x {dim} for {} inner nodes",
            inner.node_count()
        )));
    }
    // eta (R - I) = 0 plus the pin eta_0 = 1, written as a column system
    // (R^T - I) eta = 0 with row 0 replaced by the pin.
    let mut a = nalgebra::DMatrix::from_fn(dim, dim, |i, j| {
        let base = routing.prob(j, i);
        if i == j {
            base - 1.0
        } else {
            base
        }
    });
    for j in 0..dim {
        a[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    let mut b = nalgebra::DVector::zeros(dim);
    b[0] = 1.0;
    let eta = a.lu().solve(&b).ok_or(Error::NotIrreducible)?;

    let mut out = vec![0.0; dim];
    for j in 0..dim {
        out[j] = eta[j];
        if !out[j].is_finite() || out[j] <= 0.0 {
            return Err(Error::NotIrreducible);
        }
    }
    out[0] = 1.0;
    for j in 0..dim {
        let flow: f64 = (0..dim).map(|i| out[i] * routing.prob(i, j)).sum();
        if (out[j] - flow).abs() > 1e-10 {
            return Err(Error::NotIrreducible);
        }
    }
    Ok(VisitRatios { eta: out })
}

/// The throughput ceiling of the inner network: the tightest ratio of service
/// rate to visit ratio over the single-server stations. Infinite-server nodes
/// scale with the robot count and never bind, so a network without a single
/// FCFS station returns infinity.
pub fn bottleneck_throughput(inner: &InnerNetwork, eta: &VisitRatios) -> f64 {
    let mut best = f64::INFINITY;
    for j in 1..=inner.node_count() {
        let node = inner.node(j);
        if node.discipline == ServiceDiscipline::FcfsSingleServer {
            best = best.min(node.rate / eta.of(j));
        }
    }
    best
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    nodes: Vec<NodeConfig>,
    routing: Vec<Vec<f64>>,
    pool_size: usize,
    arrival_rate_per_h: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeConfig {
    label: String,
    discipline: DisciplineTag,
    rate_per_s: f64,
}

#[derive(Deserialize)]
enum DisciplineTag {
    #[serde(rename = "is")]
    Is,
    #[serde(rename = "fcfs")]
    Fcfs,
}

/// Parses a model from its JSON form and validates it.
///
/// ```json
/// {
///   "nodes": [{"label": "m", "discipline": "is", "rate_per_s": 0.054}],
///   "routing": [[0.0, 1.0], [1.0, 0.0]],
///   "pool_size": 35,
///   "arrival_rate_per_h": 468.0
/// }
/// ```
pub fn model_from_json_str(text: &str) -> Result<SoqnModel> {
    let config: ModelConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let nodes = config
        .nodes
        .into_iter()
        .map(|n| NodeSpec {
            label: n.label,
            discipline: match n.discipline {
                DisciplineTag::Is => ServiceDiscipline::InfiniteServer,
                DisciplineTag::Fcfs => ServiceDiscipline::FcfsSingleServer,
            },
            rate: n.rate_per_s,
        })
        .collect();
    let routing = RoutingMatrix::from_rows(config.routing)?;
    let model = SoqnModel::new(
        InnerNetwork::new(nodes, routing),
        config.pool_size,
        config.arrival_rate_per_h / 3600.0,
    );
    let report = validate_model(&model);
    if !report.is_ok() {
        return Err(Error::InvalidModel(report.violations));
    }
    Ok(model)
}

/// Reads and parses a model JSON file.
pub fn model_from_json_file(path: &std::path::Path) -> Result<SoqnModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    model_from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_fcfs(rate: f64) -> InnerNetwork {
        InnerNetwork::new(
            vec![NodeSpec::fcfs("s", rate)],
            RoutingMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        )
    }

    #[test]
    fn single_fcfs_visit_ratios_are_one() {
        let eta = solve_visit_ratios(&single_fcfs(2.0)).unwrap();
        assert_eq!(eta.as_slice(), &[1.0, 1.0]);
        let net = single_fcfs(2.0);
        assert_relative_eq!(bottleneck_throughput(&net, &eta), 2.0);
    }

    #[test]
    fn split_with_feedback_matches_hand_solution() {
        // Pool feeds a, a sends 0.3 of its traffic through b, the rest home.
        let net = InnerNetwork::new(
            vec![
                NodeSpec::fcfs("a", 1.0),
                NodeSpec::infinite_server("b", 0.5),
            ],
            RoutingMatrix::from_rows(vec![
                vec![0.0, 1.0, 0.0],
                vec![0.7, 0.0, 0.3],
                vec![1.0, 0.0, 0.0],
            ])
            .unwrap(),
        );
        let eta = solve_visit_ratios(&net).unwrap();
        assert_relative_eq!(eta.of(0), 1.0);
        assert_relative_eq!(eta.of(1), 1.0, max_relative = 1e-12);
        assert_relative_eq!(eta.of(2), 0.3, max_relative = 1e-12);
        assert_relative_eq!(bottleneck_throughput(&net, &eta), 1.0);
    }

    #[test]
    fn all_infinite_server_network_has_no_bottleneck() {
        let net = InnerNetwork::new(
            vec![NodeSpec::infinite_server("t", 0.1)],
            RoutingMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        );
        let eta = solve_visit_ratios(&net).unwrap();
        assert_eq!(bottleneck_throughput(&net, &eta), f64::INFINITY);
    }

    #[test]
    fn near_stochastic_rows_renormalize() {
        let eps = 3e-10;
        let routing =
            RoutingMatrix::from_rows(vec![vec![0.0, 1.0 + eps], vec![1.0 - eps, 0.0]]).unwrap();
        let sum0: f64 = routing.row(0).iter().sum();
        let sum1: f64 = routing.row(1).iter().sum();
        assert!((sum0 - 1.0).abs() <= 1e-15);
        assert!((sum1 - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn far_from_stochastic_rows_are_rejected() {
        let err =
            RoutingMatrix::from_rows(vec![vec![0.0, 0.9], vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn validation_reports_every_violation() {
        let net = InnerNetwork::new(
            vec![NodeSpec::fcfs("m", 0.0), NodeSpec::fcfs("m", 1.0)],
            RoutingMatrix::new_unchecked(vec![
                vec![0.1, 0.9, 0.0],
                vec![0.9, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
            ]),
        );
        let model = SoqnModel::new(net, 0, -1.0);
        let report = validate_model(&model);
        let text = report.violations.join("\n");
        assert!(text.contains("rate 0"), "{text}");
        assert!(text.contains("duplicate node label"), "{text}");
        assert!(text.contains("sums to 0.9"), "{text}");
        assert!(text.contains("self-loop"), "{text}");
        assert!(text.contains("not irreducible"), "{text}");
        assert!(text.contains("pool size"), "{text}");
        assert!(text.contains("arrival rate"), "{text}");
    }

    #[test]
    fn dimension_mismatch_is_reported_not_panicked() {
        let net = InnerNetwork::new(
            vec![NodeSpec::fcfs("a", 1.0), NodeSpec::fcfs("b", 1.0)],
            RoutingMatrix::new_unchecked(vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
        );
        let report = validate_network(&net);
        assert!(report.violations.iter().any(|v| v.contains("expected 3 x 3")));
        assert!(matches!(
            solve_visit_ratios(&net).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn reducible_routing_fails_to_solve() {
        // Node b only talks to itself, so nothing pinned at the pool
        // determines its ratio.
        let net = InnerNetwork::new(
            vec![NodeSpec::fcfs("a", 1.0), NodeSpec::fcfs("b", 1.0)],
            RoutingMatrix::new_unchecked(vec![
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ]),
        );
        assert!(!net.routing().is_irreducible());
        assert_eq!(solve_visit_ratios(&net).unwrap_err(), Error::NotIrreducible);
    }

    #[test]
    fn json_model_round_trips_units() {
        let text = r#"{
            "nodes": [
                {"label": "t", "discipline": "is", "rate_per_s": 0.5},
                {"label": "p", "discipline": "fcfs", "rate_per_s": 0.1}
            ],
            "routing": [
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0]
            ],
            "pool_size": 12,
            "arrival_rate_per_h": 180.0
        }"#;
        let model = model_from_json_str(text).unwrap();
        assert_eq!(model.pool_size, 12);
        assert_relative_eq!(model.arrival_rate, 0.05);
        assert_eq!(model.inner.node_count(), 2);
        assert_eq!(model.inner.label_index("p"), Some(2));
        assert_eq!(
            model.inner.node(1).discipline,
            ServiceDiscipline::InfiniteServer
        );
    }

    #[test]
    fn json_rejects_unknown_discipline_and_bad_rows() {
        let bad_discipline = r#"{
            "nodes": [{"label": "t", "discipline": "lifo", "rate_per_s": 0.5}],
            "routing": [[0.0, 1.0], [1.0, 0.0]],
            "pool_size": 1,
            "arrival_rate_per_h": 1.0
        }"#;
        assert!(matches!(
            model_from_json_str(bad_discipline).unwrap_err(),
            Error::Config(_)
        ));

        let bad_row = r#"{
            "nodes": [{"label": "t", "discipline": "is", "rate_per_s": 0.5}],
            "routing": [[0.0, 0.9], [1.0, 0.0]],
            "pool_size": 1,
            "arrival_rate_per_h": 1.0
        }"#;
        assert!(matches!(
            model_from_json_str(bad_row).unwrap_err(),
            Error::Config(_)
        ));

        let bad_rate = r#"{
            "nodes": [{"label": "t", "discipline": "is", "rate_per_s": -0.5}],
            "routing": [[0.0, 1.0], [1.0, 0.0]],
            "pool_size": 1,
            "arrival_rate_per_h": 1.0
        }"#;
        assert!(matches!(
            model_from_json_str(bad_rate).unwrap_err(),
            Error::InvalidModel(_)
        ));
    }
}
