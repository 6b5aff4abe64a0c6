//! Command-line front end: single evaluations, stability and turnover
//! sweeps, simulation runs, and method comparisons, all emitting CSV that
//! plots directly.
//!
//! Exit codes: 0 on success, 1 on configuration problems, 2 when `analyze`
//! finds the configuration unstable.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use soqn::approximation::{evaluate, PerformanceReport, TurnoverDefinition};
use soqn::error::{Error, Result};
use soqn::model::{model_from_json_file, validate_model, SoqnModel};
use soqn::rmfs::{
    build_network, overrides_from_json_str, pick_station_labels, RmfsParameters, StationLayout,
};
use soqn::sim::{replicate, ReplicationSummary, SimConfig, DEFAULT_SEED};
use soqn::solver::{mva, ClosedNetworkInstance};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const STANDARD_HEADER: &str =
    "scenario,layout,robots,lambda_per_h,method,stable,external_wait_s,inner_s,turnover_s,ci_lo_s,ci_hi_s";

#[derive(Parser)]
#[command(
    name = "soqn",
    version,
    about = "Solver and simulator for robot fleets in mobile fulfilment warehouses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one configuration analytically and print a report.
    Analyze(AnalyzeArgs),
    /// Sweep robot counts.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Run the discrete-event simulator.
    Simulate(SimulateArgs),
    /// Run solver and simulator side by side and report their gap.
    Compare(CompareArgs),
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Largest sustainable arrival rate per robot count.
    Stability(StabilityArgs),
    /// Turnover time per robot count.
    Turnover(TurnoverSweepArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LayoutArg {
    /// Dedicated picking and replenishment stations.
    #[value(name = "two-station")]
    TwoStation,
    /// Combined stations replenishing in place.
    Combi,
}

impl LayoutArg {
    fn to_layout(self) -> StationLayout {
        match self {
            LayoutArg::TwoStation => StationLayout::TwoStationTypes,
            LayoutArg::Combi => StationLayout::CombiStations,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TurnoverArg {
    /// Count a task's time from leaving the pool to pick completion.
    Full,
    /// Count only queueing and service at the picking stations.
    #[value(name = "exclude-travel")]
    ExcludeTravel,
}

impl TurnoverArg {
    fn to_definition(self) -> TurnoverDefinition {
        match self {
            TurnoverArg::Full => TurnoverDefinition::Full,
            TurnoverArg::ExcludeTravel => TurnoverDefinition::ExcludeTravel,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Approx,
    Sim,
    Both,
}

/// Flags shared by every subcommand that needs a model.
#[derive(Args, Clone)]
struct ModelArgs {
    /// Built-in layout to evaluate; ignored when --model is given.
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,

    /// JSON model file instead of a built-in layout.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,

    /// JSON file with parameter overrides layered over the defaults.
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,

    /// Robot pool size, a single number or an inclusive range A..B.
    #[arg(long, value_name = "A[..B]")]
    robots: Option<String>,

    /// Task arrival rate in tasks per hour.
    #[arg(long, value_name = "X")]
    lambda_per_h: Option<f64>,

    /// What counts toward a task's inner time.
    #[arg(long, value_enum, default_value = "full")]
    turnover_definition: TurnoverArg,

    /// Write CSV here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: ModelArgs,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: ModelArgs,
}

#[derive(Args)]
struct TurnoverSweepArgs {
    #[command(flatten)]
    common: ModelArgs,

    /// Which route produces the rows.
    #[arg(long, value_enum, default_value = "approx")]
    method: MethodArg,

    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ModelArgs,

    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: ModelArgs,

    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Args, Clone, Copy)]
struct SimFlags {
    /// Seed for all random streams.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Independent replications per configuration.
    #[arg(long, default_value_t = 20)]
    reps: usize,

    /// Simulated seconds per replication; the first tenth is warmup.
    #[arg(long, default_value_t = 1_000_000.0)]
    horizon_s: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Sweep(SweepCommand::Stability(args)) => cmd_sweep_stability(args),
        Command::Sweep(SweepCommand::Turnover(args)) => cmd_sweep_turnover(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

/// One model ready to evaluate, with a display name for the layout column.
struct Scenario {
    layout_name: String,
    model: SoqnModel,
    pick_labels: Vec<String>,
}

/// What a subcommand works on: scenarios at each pool size of the range,
/// for each requested layout (or the custom model).
struct Plan {
    robots: Vec<usize>,
    builders: Vec<ScenarioBuilder>,
    definition: TurnoverDefinition,
    out: Option<PathBuf>,
}

enum ScenarioBuilder {
    Layout {
        layout: StationLayout,
        params: RmfsParameters,
    },
    Custom {
        model: SoqnModel,
    },
}

impl ScenarioBuilder {
    fn layout_name(&self) -> String {
        match self {
            ScenarioBuilder::Layout { layout, .. } => layout.to_string(),
            ScenarioBuilder::Custom { .. } => "custom".into(),
        }
    }

    fn build(&self, robots: usize) -> Result<Scenario> {
        match self {
            ScenarioBuilder::Layout { layout, params } => {
                let mut params = params.clone();
                params.robots = robots;
                Ok(Scenario {
                    layout_name: layout.to_string(),
                    model: build_network(*layout, &params)?,
                    pick_labels: pick_station_labels(),
                })
            }
            ScenarioBuilder::Custom { model } => {
                let mut model = model.clone();
                model.pool_size = robots;
                let report = validate_model(&model);
                if !report.is_ok() {
                    return Err(Error::InvalidModel(report.violations));
                }
                Ok(Scenario {
                    layout_name: "custom".into(),
                    model,
                    pick_labels: Vec::new(),
                })
            }
        }
    }
}

/// Resolves the shared flags. `default_both_layouts` lets sweeps cover both
/// layouts when none is named, while single-shot commands default to the
/// two-station layout.
fn resolve(args: &ModelArgs, default_both_layouts: bool) -> Result<Plan> {
    let mut builders = Vec::new();
    let default_robots;
    if let Some(path) = &args.model {
        if args.params.is_some() {
            return Err(Error::Config(
                "--params applies to built-in layouts, not --model files".into(),
            ));
        }
        let mut model = model_from_json_file(path)?;
        if let Some(lambda) = args.lambda_per_h {
            model.arrival_rate = lambda / 3600.0;
        }
        default_robots = model.pool_size;
        builders.push(ScenarioBuilder::Custom { model });
    } else {
        let mut params = RmfsParameters::default();
        if let Some(path) = &args.params {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("--params {}: {e}", path.display())))?;
            params = params.with_overrides(&overrides_from_json_str(&text)?);
        }
        if let Some(lambda) = args.lambda_per_h {
            params.order_rate_per_h = lambda;
            params.pod_order_ratio = 1.0;
        }
        params.validate()?;
        default_robots = params.robots;
        let layouts: Vec<StationLayout> = match (args.layout, default_both_layouts) {
            (Some(l), _) => vec![l.to_layout()],
            (None, false) => vec![StationLayout::TwoStationTypes],
            (None, true) => vec![
                StationLayout::TwoStationTypes,
                StationLayout::CombiStations,
            ],
        };
        for layout in layouts {
            builders.push(ScenarioBuilder::Layout {
                layout,
                params: params.clone(),
            });
        }
    }
    let robots = match &args.robots {
        Some(text) => parse_robot_range(text)?,
        None => vec![default_robots],
    };
    Ok(Plan {
        robots,
        builders,
        definition: args.turnover_definition.to_definition(),
        out: args.out.clone(),
    })
}

fn parse_robot_range(text: &str) -> Result<Vec<usize>> {
    let parse_one = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("--robots: {s:?} is not a whole number")))
    };
    let range = match text.split_once("..") {
        Some((lo, hi)) => {
            let lo = parse_one(lo)?;
            let hi = parse_one(hi)?;
            if lo > hi {
                return Err(Error::Config(format!(
                    "--robots: range {text:?} is empty, expected A..B with A <= B"
                )));
            }
            (lo..=hi).collect()
        }
        None => vec![parse_one(text)?],
    };
    if range.first() == Some(&0) {
        return Err(Error::Config("--robots: at least 1 robot is required".into()));
    }
    Ok(range)
}

fn single_robots(plan: &Plan, command: &str) -> Result<usize> {
    if plan.robots.len() != 1 {
        return Err(Error::Config(format!(
            "{command} takes a single --robots value, not a range"
        )));
    }
    Ok(plan.robots[0])
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, content),
        None => {
            print_out(content);
            Ok(())
        }
    }
}

/// Writes to stdout, staying quiet when the reader has gone away, as under
/// `soqn ... | head`.
fn print_out(content: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(content.as_bytes());
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| Error::Config(format!("--out {}: {e}", path.display())))
}

fn fmt_f(value: f64) -> String {
    format!("{value:.6}")
}

fn lambda_per_h(model: &SoqnModel) -> f64 {
    model.arrival_rate * 3600.0
}

fn approx_row(scenario: &str, layout: &str, robots: usize, model: &SoqnModel, report: &PerformanceReport) -> String {
    if report.stable {
        format!(
            "{scenario},{layout},{robots},{},approx,true,{},{},{},,",
            fmt_f(lambda_per_h(model)),
            fmt_f(report.external_wait_s.unwrap()),
            fmt_f(report.inner_processing_s.unwrap()),
            fmt_f(report.turnover_s.unwrap()),
        )
    } else {
        format!(
            "{scenario},{layout},{robots},{},approx,false,,,,,",
            fmt_f(lambda_per_h(model)),
        )
    }
}

fn sim_row(scenario: &str, layout: &str, robots: usize, model: &SoqnModel, summary: &ReplicationSummary, stable: bool) -> String {
    let (ci_lo, ci_hi) = match summary.turnover_s.half_width {
        Some(hw) => (
            fmt_f(summary.turnover_s.mean - hw),
            fmt_f(summary.turnover_s.mean + hw),
        ),
        None => (String::new(), String::new()),
    };
    format!(
        "{scenario},{layout},{robots},{},sim,{stable},{},{},{},{ci_lo},{ci_hi}",
        fmt_f(lambda_per_h(model)),
        fmt_f(summary.external_wait_s.mean),
        fmt_f(summary.inner_processing_s.mean),
        fmt_f(summary.turnover_s.mean),
    )
}

fn run_simulation(
    scenario: &Scenario,
    definition: TurnoverDefinition,
    flags: SimFlags,
) -> Result<ReplicationSummary> {
    let mut config = SimConfig::new(scenario.model.clone());
    config.pick_labels = scenario.pick_labels.clone();
    config.turnover_definition = definition;
    config.seed = flags.seed;
    config.replications = flags.reps;
    config.horizon_s = flags.horizon_s;
    config.warmup_s = flags.horizon_s / 10.0;
    replicate(&config)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let plan = resolve(&args.common, false)?;
    let robots = single_robots(&plan, "analyze")?;
    let scenario = plan.builders[0].build(robots)?;
    let report = evaluate(&scenario.model, &scenario.pick_labels, plan.definition)?;

    let mut lines = vec![
        format!("layout            {}", scenario.layout_name),
        format!("robots            {robots}"),
        format!("lambda_per_h      {}", fmt_f(lambda_per_h(&scenario.model))),
        format!("stable            {}", report.stable),
        format!("capacity_per_h    {}", fmt_f(report.capacity * 3600.0)),
    ];
    if report.stable {
        lines.push(format!(
            "external_wait_s   {}",
            fmt_f(report.external_wait_s.unwrap())
        ));
        lines.push(format!(
            "inner_s           {}",
            fmt_f(report.inner_processing_s.unwrap())
        ));
        lines.push(format!(
            "turnover_s        {}",
            fmt_f(report.turnover_s.unwrap())
        ));
    }
    for (label, utilization) in &report.per_node_utilization {
        lines.push(format!("utilization {label:<6}{}", fmt_f(*utilization)));
    }
    print_out(&(lines.join("\n") + "\n"));

    if let Some(path) = &plan.out {
        let csv = format!(
            "{STANDARD_HEADER}\n{}\n",
            approx_row(
                "analyze",
                &scenario.layout_name,
                robots,
                &scenario.model,
                &report
            )
        );
        write_file(path, &csv)?;
    }
    Ok(if report.stable {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_sweep_stability(args: StabilityArgs) -> Result<ExitCode> {
    let plan = resolve(&args.common, true)?;
    let mut rows = vec!["layout,robots,max_lambda_per_h".to_string()];
    for builder in &plan.builders {
        let top = *plan.robots.last().expect("nonempty range");
        // One closed-network pass yields every pool size in the range.
        let scenario = builder.build(top)?;
        let eta = soqn::model::solve_visit_ratios(&scenario.model.inner)?;
        let instance = ClosedNetworkInstance::from_inner(&scenario.model.inner, &eta, top)?;
        let profile = mva(&instance);
        for &n in &plan.robots {
            rows.push(format!(
                "{},{n},{}",
                builder.layout_name(),
                fmt_f(profile.throughput(n) * 3600.0)
            ));
        }
    }
    emit(&plan.out, &(rows.join("\n") + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_turnover(args: TurnoverSweepArgs) -> Result<ExitCode> {
    let plan = resolve(&args.common, true)?;
    let with_approx = matches!(args.method, MethodArg::Approx | MethodArg::Both);
    let with_sim = matches!(args.method, MethodArg::Sim | MethodArg::Both);

    let points: Vec<(usize, &ScenarioBuilder, usize)> = plan
        .builders
        .iter()
        .enumerate()
        .flat_map(|(bi, b)| plan.robots.iter().map(move |&n| (bi, b, n)))
        .collect();
    let mut results: Vec<(usize, usize, Vec<String>)> = points
        .par_iter()
        .map(|&(bi, builder, robots)| -> Result<(usize, usize, Vec<String>)> {
            let scenario = builder.build(robots)?;
            let mut rows = Vec::new();
            let report = evaluate(&scenario.model, &scenario.pick_labels, plan.definition)?;
            if with_approx {
                rows.push(approx_row(
                    "turnover",
                    &scenario.layout_name,
                    robots,
                    &scenario.model,
                    &report,
                ));
            }
            if with_sim && report.stable {
                let summary = run_simulation(&scenario, plan.definition, args.sim)?;
                rows.push(sim_row(
                    "turnover",
                    &scenario.layout_name,
                    robots,
                    &scenario.model,
                    &summary,
                    true,
                ));
            }
            Ok((bi, robots, rows))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|&(bi, n, _)| (bi, n));

    let mut out = vec![STANDARD_HEADER.to_string()];
    out.extend(results.into_iter().flat_map(|(_, _, rows)| rows));
    emit(&plan.out, &(out.join("\n") + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let plan = resolve(&args.common, false)?;
    let mut out = vec![STANDARD_HEADER.to_string()];
    for builder in &plan.builders {
        for &robots in &plan.robots {
            let scenario = builder.build(robots)?;
            let report = evaluate(&scenario.model, &scenario.pick_labels, plan.definition)?;
            let summary = run_simulation(&scenario, plan.definition, args.sim)?;
            if summary.any_near_saturation {
                eprintln!(
                    "warning: {} with {robots} robots ran near saturation; \
                     estimates converge slowly there",
                    scenario.layout_name
                );
            }
            out.push(sim_row(
                "simulate",
                &scenario.layout_name,
                robots,
                &scenario.model,
                &summary,
                report.stable,
            ));
        }
    }
    emit(&plan.out, &(out.join("\n") + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let plan = resolve(&args.common, false)?;
    let mut out = vec![format!("{STANDARD_HEADER},rel_err")];
    for builder in &plan.builders {
        for &robots in &plan.robots {
            let scenario = builder.build(robots)?;
            let report = evaluate(&scenario.model, &scenario.pick_labels, plan.definition)?;
            out.push(format!(
                "{},",
                approx_row(
                    "compare",
                    &scenario.layout_name,
                    robots,
                    &scenario.model,
                    &report
                )
            ));
            if !report.stable {
                continue;
            }
            let summary = run_simulation(&scenario, plan.definition, args.sim)?;
            let rel_err =
                (report.turnover_s.unwrap() - summary.turnover_s.mean).abs() / summary.turnover_s.mean;
            out.push(format!(
                "{},{}",
                sim_row(
                    "compare",
                    &scenario.layout_name,
                    robots,
                    &scenario.model,
                    &summary,
                    true,
                ),
                fmt_f(rel_err)
            ));
        }
    }
    emit(&plan.out, &(out.join("\n") + "\n"))?;
    Ok(ExitCode::SUCCESS)
}
