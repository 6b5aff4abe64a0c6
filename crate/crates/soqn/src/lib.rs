//! Solver and simulator for semi-open queueing networks with backordering,
//! built for sizing robot fleets in mobile fulfilment warehouses.
//!
//! A fixed pool of robots serves a Poisson stream of tasks. Each task claims
//! an idle robot, or waits in an unbounded external queue until one returns;
//! the robot then tours an inner network of travel legs (infinite servers)
//! and staffed stations (single-server FCFS queues). The crate answers the
//! sizing questions analytically and by simulation:
//!
//! * how many robots a given order stream needs ([`approximation::min_robots`]),
//! * how long orders wait for a robot and how long a robot works per task
//!   ([`approximation::evaluate`]),
//! * the same quantities measured from a discrete-event run ([`sim`]).
//!
//! The analytic route decomposes the system: exact mean value analysis of
//! the closed inner network, an aggregated flow equivalent server for the
//! external birth-death queue, and a fixed-point pass for the congestion a
//! real task stream induces inside. Every solver has an independent
//! counterpart (convolution against recursion, an explicit Markov chain for
//! small cases, simulation for everything), and the test suite holds them
//! against each other.
//!
//! ```
//! use soqn::rmfs::{build_network, RmfsParameters, StationLayout};
//! use soqn::approximation::{evaluate, TurnoverDefinition};
//! use soqn::rmfs::pick_station_labels;
//!
//! let mut params = RmfsParameters::default();
//! params.robots = 20;
//! let model = build_network(StationLayout::CombiStations, &params).unwrap();
//! let report = evaluate(&model, &pick_station_labels(), TurnoverDefinition::Full).unwrap();
//! assert!(report.stable);
//! assert!(report.turnover_s.unwrap() > 0.0);
//! ```

pub mod approximation;
pub mod ctmc;
pub mod error;
pub mod model;
pub mod rmfs;
pub mod sim;
pub mod solver;

pub use approximation::{
    evaluate, max_stable_arrival, min_robots, PerformanceReport, TurnoverDefinition,
};
pub use error::{Error, Result};
pub use model::{
    solve_visit_ratios, validate_model, InnerNetwork, NodeSpec, RoutingMatrix,
    ServiceDiscipline, SoqnModel, VisitRatios,
};
pub use rmfs::{build_network, RmfsParameters, StationLayout};
pub use sim::{replicate, simulate, SimConfig};
