//! Robotic mobile fulfilment layouts as ready-made models.
//!
//! A task sends a robot from the pool to fetch a pod (m), carry it to one of
//! two pick stations (sp1/sp2, then p1/p2), and bring it back to storage.
//! After a pick the pod may need replenishment first. The two layouts differ
//! in where that happens: with separate station types the robot drives the
//! pod to a dedicated replenishment station (p1r1/p2r2 then r1/r2), while a
//! combi station replenishes in place and the extra drive disappears.

use crate::error::{Error, Result};
use crate::model::{InnerNetwork, NodeSpec, RoutingMatrix, SoqnModel};
use serde::Deserialize;

/// Hard ceiling for pool-size searches and sweeps.
pub const DEFAULT_ROBOT_CAP: usize = 550;

/// Which station arrangement to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationLayout {
    /// Dedicated pick stations and dedicated replenishment stations.
    TwoStationTypes,
    /// Combined stations that pick and replenish at the same place.
    CombiStations,
}

impl std::fmt::Display for StationLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StationLayout::TwoStationTypes => "two-station",
            StationLayout::CombiStations => "combi",
        })
    }
}

impl std::str::FromStr for StationLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-station" => Ok(StationLayout::TwoStationTypes),
            "combi" => Ok(StationLayout::CombiStations),
            other => Err(Error::Config(format!(
                "unknown layout {other:?}, expected \"two-station\" or \"combi\""
            ))),
        }
    }
}

/// Physical and demand parameters shared by both layouts. Times are in
/// seconds, the order rate in orders per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct RmfsParameters {
    pub order_rate_per_h: f64,
    /// Pod trips triggered per order; one task is one pod trip.
    pub pod_order_ratio: f64,
    pub robots: usize,
    /// Drive from the pool to the pod's storage location.
    pub travel_to_pod_s: f64,
    /// Drive from storage to each pick station.
    pub travel_pod_to_pick_s: [f64; 2],
    /// Drive from a pick station back to storage.
    pub travel_pick_to_storage_s: f64,
    /// Drive from a pick station to a replenishment station.
    pub travel_pick_to_repl_s: f64,
    /// Drive from a replenishment station back to storage.
    pub travel_repl_to_storage_s: f64,
    pub pick_time_s: f64,
    pub replenish_time_s: f64,
    /// Share of tasks sent to each pick station; must sum to one.
    pub q_pick: [f64; 2],
    /// Probability that a pod needs replenishment after a pick, per station.
    pub q_repl: [f64; 2],
}

impl Default for RmfsParameters {
    fn default() -> Self {
        RmfsParameters {
            order_rate_per_h: 468.0,
            pod_order_ratio: 1.0,
            robots: 20,
            travel_to_pod_s: 18.4,
            travel_pod_to_pick_s: [34.5, 34.5],
            travel_pick_to_storage_s: 34.5,
            travel_pick_to_repl_s: 34.5,
            travel_repl_to_storage_s: 34.5,
            pick_time_s: 10.0,
            replenish_time_s: 30.0,
            q_pick: [0.5, 0.5],
            q_repl: [0.2, 0.2],
        }
    }
}

impl RmfsParameters {
    /// Task arrival rate in tasks per second.
    pub fn task_rate_per_s(&self) -> f64 {
        self.order_rate_per_h * self.pod_order_ratio / 3600.0
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        let positive = [
            ("order_rate_per_h", self.order_rate_per_h),
            ("pod_order_ratio", self.pod_order_ratio),
            ("travel_to_pod_s", self.travel_to_pod_s),
            ("travel_pod_to_pick_s[0]", self.travel_pod_to_pick_s[0]),
            ("travel_pod_to_pick_s[1]", self.travel_pod_to_pick_s[1]),
            ("travel_pick_to_storage_s", self.travel_pick_to_storage_s),
            ("travel_pick_to_repl_s", self.travel_pick_to_repl_s),
            ("travel_repl_to_storage_s", self.travel_repl_to_storage_s),
            ("pick_time_s", self.pick_time_s),
            ("replenish_time_s", self.replenish_time_s),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                violations.push(format!("{name} = {value} must be positive and finite"));
            }
        }
        if self.robots == 0 {
            violations.push("robots must be at least 1".into());
        }
        for (name, pair) in [("q_pick", self.q_pick), ("q_repl", self.q_repl)] {
            for (i, q) in pair.iter().enumerate() {
                if !q.is_finite() || !(0.0..1.0).contains(q) || *q == 0.0 {
                    violations.push(format!("{name}[{i}] = {q} must be inside (0, 1)"));
                }
            }
        }
        let pick_sum = self.q_pick[0] + self.q_pick[1];
        if (pick_sum - 1.0).abs() > 1e-9 {
            violations.push(format!("q_pick sums to {pick_sum}, expected 1"));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    pub fn with_overrides(&self, overrides: &RmfsOverrides) -> RmfsParameters {
        let mut p = self.clone();
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = overrides.$field {
                    p.$field = v;
                }
            };
        }
        take!(order_rate_per_h);
        take!(pod_order_ratio);
        take!(robots);
        take!(travel_to_pod_s);
        take!(travel_pod_to_pick_s);
        take!(travel_pick_to_storage_s);
        take!(travel_pick_to_repl_s);
        take!(travel_repl_to_storage_s);
        take!(pick_time_s);
        take!(replenish_time_s);
        take!(q_pick);
        take!(q_repl);
        p
    }
}

/// Partial parameter set, typically parsed from a JSON file, layered over
/// the defaults. Every field is optional; unknown fields are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmfsOverrides {
    pub order_rate_per_h: Option<f64>,
    pub pod_order_ratio: Option<f64>,
    pub robots: Option<usize>,
    pub travel_to_pod_s: Option<f64>,
    pub travel_pod_to_pick_s: Option<[f64; 2]>,
    pub travel_pick_to_storage_s: Option<f64>,
    pub travel_pick_to_repl_s: Option<f64>,
    pub travel_repl_to_storage_s: Option<f64>,
    pub pick_time_s: Option<f64>,
    pub replenish_time_s: Option<f64>,
    pub q_pick: Option<[f64; 2]>,
    pub q_repl: Option<[f64; 2]>,
}

pub fn overrides_from_json_str(text: &str) -> Result<RmfsOverrides> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Labels of the stations whose service completes a task, in both layouts.
pub fn pick_station_labels() -> Vec<String> {
    vec!["p1".into(), "p2".into()]
}

/// Builds the model for a layout. The returned model always passes
/// validation; parameter problems are reported before construction.
pub fn build_network(layout: StationLayout, params: &RmfsParameters) -> Result<SoqnModel> {
    params.validate()?;
    let is = NodeSpec::infinite_server;
    let fcfs = NodeSpec::fcfs;
    let rate = |time_s: f64| 1.0 / time_s;

    let mut nodes = vec![
        is("m", rate(params.travel_to_pod_s)),
        is("sp1", rate(params.travel_pod_to_pick_s[0])),
        is("sp2", rate(params.travel_pod_to_pick_s[1])),
        fcfs("p1", rate(params.pick_time_s)),
        fcfs("p2", rate(params.pick_time_s)),
        is("p1s", rate(params.travel_pick_to_storage_s)),
        is("p2s", rate(params.travel_pick_to_storage_s)),
    ];
    match layout {
        StationLayout::TwoStationTypes => nodes.extend([
            is("p1r1", rate(params.travel_pick_to_repl_s)),
            is("p2r2", rate(params.travel_pick_to_repl_s)),
            fcfs("r1", rate(params.replenish_time_s)),
            fcfs("r2", rate(params.replenish_time_s)),
            is("r1s", rate(params.travel_repl_to_storage_s)),
            is("r2s", rate(params.travel_repl_to_storage_s)),
        ]),
        StationLayout::CombiStations => nodes.extend([
            fcfs("r1", rate(params.replenish_time_s)),
            fcfs("r2", rate(params.replenish_time_s)),
            is("r1s", rate(params.travel_repl_to_storage_s)),
            is("r2s", rate(params.travel_repl_to_storage_s)),
        ]),
    }

    let labels: Vec<&str> = nodes.iter().map(|n| n.label.as_str()).collect();
    let index = |label: &str| -> usize {
        labels.iter().position(|l| *l == label).unwrap() + 1
    };
    let dim = nodes.len() + 1;
    let mut rows = vec![vec![0.0; dim]; dim];
    let mut hop = |from: usize, to: usize, p: f64| rows[from][to] = p;

    hop(0, index("m"), 1.0);
    hop(index("m"), index("sp1"), params.q_pick[0]);
    hop(index("m"), index("sp2"), params.q_pick[1]);
    hop(index("sp1"), index("p1"), 1.0);
    hop(index("sp2"), index("p2"), 1.0);
    hop(index("p1s"), 0, 1.0);
    hop(index("p2s"), 0, 1.0);
    hop(index("r1"), index("r1s"), 1.0);
    hop(index("r2"), index("r2s"), 1.0);
    hop(index("r1s"), 0, 1.0);
    hop(index("r2s"), 0, 1.0);
    match layout {
        StationLayout::TwoStationTypes => {
            hop(index("p1"), index("p1s"), 1.0 - params.q_repl[0]);
            hop(index("p1"), index("p1r1"), params.q_repl[0]);
            hop(index("p2"), index("p2s"), 1.0 - params.q_repl[1]);
            hop(index("p2"), index("p2r2"), params.q_repl[1]);
            hop(index("p1r1"), index("r1"), 1.0);
            hop(index("p2r2"), index("r2"), 1.0);
        }
        StationLayout::CombiStations => {
            hop(index("p1"), index("p1s"), 1.0 - params.q_repl[0]);
            hop(index("p1"), index("r1"), params.q_repl[0]);
            hop(index("p2"), index("p2s"), 1.0 - params.q_repl[1]);
            hop(index("p2"), index("r2"), params.q_repl[1]);
        }
    }

    let routing = RoutingMatrix::from_rows(rows)?;
    Ok(SoqnModel::new(
        InnerNetwork::new(nodes, routing),
        params.robots,
        params.task_rate_per_s(),
    ))
}
