//! Python bindings for the soqn crate, exposed as the `soqn_rs` module.
//!
//! The surface mirrors the Rust API: build a [`Model`] from a warehouse
//! layout or a JSON description, then feed it to [`evaluate`] for the
//! analytic answer or [`simulate`] for a discrete-event estimate.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::collections::BTreeMap;

use soqn::approximation::{self, TurnoverDefinition};
use soqn::model::{model_from_json_str, solve_visit_ratios, validate_model, SoqnModel};
use soqn::rmfs::{
    build_network, pick_station_labels, RmfsParameters as CoreParameters, StationLayout,
    DEFAULT_ROBOT_CAP,
};
use soqn::sim::{replicate, SimConfig, DEFAULT_SEED};

fn to_py_err(err: soqn::error::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn parse_definition(name: &str) -> PyResult<TurnoverDefinition> {
    match name {
        "full" => Ok(TurnoverDefinition::Full),
        "exclude-travel" => Ok(TurnoverDefinition::ExcludeTravel),
        other => Err(PyValueError::new_err(format!(
            "unknown turnover definition {other:?}, expected \"full\" or \"exclude-travel\""
        ))),
    }
}

fn pair(name: &str, values: &[f64]) -> PyResult<[f64; 2]> {
    match values {
        [a, b] => Ok([*a, *b]),
        _ => Err(PyValueError::new_err(format!(
            "{name} needs exactly two entries, got {}",
            values.len()
        ))),
    }
}

/// Warehouse parameters with the same defaults as the Rust side.
#[pyclass(get_all, set_all, from_py_object)]
#[derive(Clone)]
pub struct RmfsParameters {
    pub order_rate_per_h: f64,
    pub pod_order_ratio: f64,
    pub robots: usize,
    pub travel_to_pod_s: f64,
    pub travel_pod_to_pick_s: Vec<f64>,
    pub travel_pick_to_storage_s: f64,
    pub travel_pick_to_repl_s: f64,
    pub travel_repl_to_storage_s: f64,
    pub pick_time_s: f64,
    pub replenish_time_s: f64,
    pub q_pick: Vec<f64>,
    pub q_repl: Vec<f64>,
}

impl RmfsParameters {
    fn to_core(&self) -> PyResult<CoreParameters> {
        Ok(CoreParameters {
            order_rate_per_h: self.order_rate_per_h,
            pod_order_ratio: self.pod_order_ratio,
            robots: self.robots,
            travel_to_pod_s: self.travel_to_pod_s,
            travel_pod_to_pick_s: pair("travel_pod_to_pick_s", &self.travel_pod_to_pick_s)?,
            travel_pick_to_storage_s: self.travel_pick_to_storage_s,
            travel_pick_to_repl_s: self.travel_pick_to_repl_s,
            travel_repl_to_storage_s: self.travel_repl_to_storage_s,
            pick_time_s: self.pick_time_s,
            replenish_time_s: self.replenish_time_s,
            q_pick: pair("q_pick", &self.q_pick)?,
            q_repl: pair("q_repl", &self.q_repl)?,
        })
    }
}

#[pymethods]
impl RmfsParameters {
    #[new]
    #[pyo3(signature = (*, order_rate_per_h=None, pod_order_ratio=None, robots=None,
        travel_to_pod_s=None, travel_pod_to_pick_s=None, travel_pick_to_storage_s=None,
        travel_pick_to_repl_s=None, travel_repl_to_storage_s=None, pick_time_s=None,
        replenish_time_s=None, q_pick=None, q_repl=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        order_rate_per_h: Option<f64>,
        pod_order_ratio: Option<f64>,
        robots: Option<usize>,
        travel_to_pod_s: Option<f64>,
        travel_pod_to_pick_s: Option<Vec<f64>>,
        travel_pick_to_storage_s: Option<f64>,
        travel_pick_to_repl_s: Option<f64>,
        travel_repl_to_storage_s: Option<f64>,
        pick_time_s: Option<f64>,
        replenish_time_s: Option<f64>,
        q_pick: Option<Vec<f64>>,
        q_repl: Option<Vec<f64>>,
    ) -> Self {
        let d = CoreParameters::default();
        RmfsParameters {
            order_rate_per_h: order_rate_per_h.unwrap_or(d.order_rate_per_h),
            pod_order_ratio: pod_order_ratio.unwrap_or(d.pod_order_ratio),
            robots: robots.unwrap_or(d.robots),
            travel_to_pod_s: travel_to_pod_s.unwrap_or(d.travel_to_pod_s),
            travel_pod_to_pick_s: travel_pod_to_pick_s
                .unwrap_or_else(|| d.travel_pod_to_pick_s.to_vec()),
            travel_pick_to_storage_s: travel_pick_to_storage_s
                .unwrap_or(d.travel_pick_to_storage_s),
            travel_pick_to_repl_s: travel_pick_to_repl_s.unwrap_or(d.travel_pick_to_repl_s),
            travel_repl_to_storage_s: travel_repl_to_storage_s
                .unwrap_or(d.travel_repl_to_storage_s),
            pick_time_s: pick_time_s.unwrap_or(d.pick_time_s),
            replenish_time_s: replenish_time_s.unwrap_or(d.replenish_time_s),
            q_pick: q_pick.unwrap_or_else(|| d.q_pick.to_vec()),
            q_repl: q_repl.unwrap_or_else(|| d.q_repl.to_vec()),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "RmfsParameters(order_rate_per_h={}, pod_order_ratio={}, robots={})",
            self.order_rate_per_h, self.pod_order_ratio, self.robots
        )
    }
}

/// A queueing model of one warehouse configuration.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Model {
    layout: String,
    model: SoqnModel,
    pick_labels: Vec<String>,
}

#[pymethods]
impl Model {
    /// Builds one of the two warehouse layouts, "two-station" or "combi".
    #[staticmethod]
    #[pyo3(signature = (layout, params=None))]
    fn rmfs(layout: &str, params: Option<RmfsParameters>) -> PyResult<Model> {
        let layout: StationLayout = layout
            .parse()
            .map_err(|e: soqn::error::Error| to_py_err(e))?;
        let core = match params {
            Some(p) => p.to_core()?,
            None => CoreParameters::default(),
        };
        let model = build_network(layout, &core).map_err(to_py_err)?;
        Ok(Model {
            layout: layout.to_string(),
            model,
            pick_labels: pick_station_labels(),
        })
    }

    /// Parses an arbitrary network from its JSON description.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Model> {
        let model = model_from_json_str(text).map_err(to_py_err)?;
        Ok(Model {
            layout: "custom".into(),
            model,
            pick_labels: Vec::new(),
        })
    }

    #[getter]
    fn layout(&self) -> &str {
        &self.layout
    }

    #[getter]
    fn robots(&self) -> usize {
        self.model.pool_size
    }

    #[setter]
    fn set_robots(&mut self, robots: usize) -> PyResult<()> {
        if robots == 0 {
            return Err(PyValueError::new_err("at least 1 robot is required"));
        }
        self.model.pool_size = robots;
        Ok(())
    }

    #[getter]
    fn arrival_rate_per_h(&self) -> f64 {
        self.model.arrival_rate * 3600.0
    }

    #[setter]
    fn set_arrival_rate_per_h(&mut self, rate: f64) -> PyResult<()> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(PyValueError::new_err(format!(
                "arrival rate {rate} must be positive and finite"
            )));
        }
        self.model.arrival_rate = rate / 3600.0;
        Ok(())
    }

    fn node_labels(&self) -> Vec<String> {
        self.model
            .inner
            .nodes()
            .iter()
            .map(|n| n.label.clone())
            .collect()
    }

    /// Relative visit counts per station, normalized to one pool departure.
    fn visit_ratios(&self) -> PyResult<BTreeMap<String, f64>> {
        let eta = solve_visit_ratios(&self.model.inner).map_err(to_py_err)?;
        Ok(self
            .model
            .inner
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.label.clone(), eta.of(i + 1)))
            .collect())
    }

    /// Largest sustainable arrival rate for the current fleet, per hour.
    fn capacity_per_h(&self) -> PyResult<f64> {
        approximation::max_stable_arrival(&self.model.inner, self.model.pool_size)
            .map(|r| r * 3600.0)
            .map_err(to_py_err)
    }

    /// Smallest fleet that sustains the current arrival rate, or None if
    /// every fleet up to `cap` falls short.
    #[pyo3(signature = (cap=DEFAULT_ROBOT_CAP))]
    fn min_robots(&self, cap: usize) -> PyResult<Option<usize>> {
        approximation::min_robots(&self.model.inner, self.model.arrival_rate, cap)
            .map_err(to_py_err)
    }

    fn validate(&self) -> Vec<String> {
        validate_model(&self.model).violations
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(layout={:?}, robots={}, arrival_rate_per_h={})",
            self.layout,
            self.model.pool_size,
            self.model.arrival_rate * 3600.0
        )
    }
}

/// Analytic performance figures, rates per hour and times in seconds.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PerformanceReport {
    pub stable: bool,
    pub capacity_per_h: f64,
    pub external_wait_s: Option<f64>,
    pub inner_s: Option<f64>,
    pub turnover_s: Option<f64>,
    pub adjusted_arrival_per_h: Option<f64>,
    pub utilization: BTreeMap<String, f64>,
}

#[pymethods]
impl PerformanceReport {
    fn __repr__(&self) -> String {
        match self.turnover_s {
            Some(t) => format!(
                "PerformanceReport(stable=True, turnover_s={t:.3}, capacity_per_h={:.3})",
                self.capacity_per_h
            ),
            None => format!(
                "PerformanceReport(stable=False, capacity_per_h={:.3})",
                self.capacity_per_h
            ),
        }
    }
}

/// A point estimate with its 95% confidence half-width.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: Option<f64>,
}

impl From<soqn::sim::Estimate> for Estimate {
    fn from(e: soqn::sim::Estimate) -> Self {
        Estimate {
            mean: e.mean,
            half_width: e.half_width,
        }
    }
}

#[pymethods]
impl Estimate {
    fn __repr__(&self) -> String {
        match self.half_width {
            Some(hw) => format!("Estimate(mean={:.4}, half_width={:.4})", self.mean, hw),
            None => format!("Estimate(mean={:.4})", self.mean),
        }
    }
}

/// Cross-replication simulation summary.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct SimSummary {
    pub replications: usize,
    pub completed_tasks: Estimate,
    pub external_wait_s: Estimate,
    pub inner_s: Estimate,
    pub turnover_s: Estimate,
    pub robot_utilization: Estimate,
    pub near_saturation: bool,
}

#[pymethods]
impl SimSummary {
    fn __repr__(&self) -> String {
        format!(
            "SimSummary(replications={}, turnover_s={})",
            self.replications,
            self.turnover_s.__repr__()
        )
    }
}

/// Solves the model analytically.
#[pyfunction]
#[pyo3(signature = (model, turnover_definition="full"))]
fn evaluate(model: &Model, turnover_definition: &str) -> PyResult<PerformanceReport> {
    let definition = parse_definition(turnover_definition)?;
    let report =
        approximation::evaluate(&model.model, &model.pick_labels, definition).map_err(to_py_err)?;
    Ok(PerformanceReport {
        stable: report.stable,
        capacity_per_h: report.capacity * 3600.0,
        external_wait_s: report.external_wait_s,
        inner_s: report.inner_processing_s,
        turnover_s: report.turnover_s,
        adjusted_arrival_per_h: report.adjusted_arrival_rate.map(|r| r * 3600.0),
        utilization: report.per_node_utilization,
    })
}

/// Estimates the same figures by discrete-event simulation.
#[pyfunction]
#[pyo3(signature = (model, horizon_s=1_000_000.0, warmup_s=None, seed=DEFAULT_SEED,
    replications=20, turnover_definition="full"))]
fn simulate(
    model: &Model,
    horizon_s: f64,
    warmup_s: Option<f64>,
    seed: u64,
    replications: usize,
    turnover_definition: &str,
) -> PyResult<SimSummary> {
    let mut config = SimConfig::new(model.model.clone());
    config.pick_labels = model.pick_labels.clone();
    config.turnover_definition = parse_definition(turnover_definition)?;
    config.horizon_s = horizon_s;
    config.warmup_s = warmup_s.unwrap_or(horizon_s / 10.0);
    config.seed = seed;
    config.replications = replications;
    let summary = replicate(&config).map_err(to_py_err)?;
    Ok(SimSummary {
        replications: summary.replications,
        completed_tasks: summary.completed_tasks.into(),
        external_wait_s: summary.external_wait_s.into(),
        inner_s: summary.inner_processing_s.into(),
        turnover_s: summary.turnover_s.into(),
        robot_utilization: summary.robot_utilization.into(),
        near_saturation: summary.any_near_saturation,
    })
}

#[pymodule]
fn soqn_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RmfsParameters>()?;
    m.add_class::<Model>()?;
    m.add_class::<PerformanceReport>()?;
    m.add_class::<Estimate>()?;
    m.add_class::<SimSummary>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("DEFAULT_SEED", DEFAULT_SEED)?;
    m.add("DEFAULT_ROBOT_CAP", DEFAULT_ROBOT_CAP)?;
    Ok(())
}
