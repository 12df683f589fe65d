use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use drccp::bench::{self, ExperimentConfig};
use drccp::bnc::{self, Branching, BncConfig, NodeSelection, SolveStatus};
use drccp::cuts::{separators, CutFamily, Separator};
use drccp::formulations::{build, build_saa, compute_big_m, theta_max, FormulationKind, RadiusModel};
use drccp::mip::Block;
use drccp::model::{DrccpInstance, NormChoice};
use drccp::numfmt::to_json_string;
use drccp::oracles::{lemma_certificate, worst_case_prob, DistanceProfile};
use drccp::transport::{generate, TransportInstance};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NO_INCUMBENT: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "drccp", version, about = "Wasserstein distributionally robust chance-constrained programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a transportation instance.
    Gen(GenArgs),
    /// Solve one instance by branch-and-cut.
    Solve(SolveArgs),
    /// Run the experiment matrix and write CSV.
    Bench(BenchArgs),
    /// Evaluate a decision with the worst-case probability and the certificate.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "F")]
    factories: usize,
    #[arg(long = "D")]
    centers: usize,
    #[arg(long = "N")]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InstanceArgs {
    /// Transport instance (from `gen`) or a general instance JSON.
    #[arg(long)]
    instance: PathBuf,
    /// Risk level used for transport instances.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_parser = parse_norm, default_value = "two")]
    norm: NormChoice,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[arg(long, value_parser = parse_formulation, default_value = "compact")]
    formulation: FormulationKind,
    /// Comma-separated cut families: mixing, path.
    #[arg(long, value_delimiter = ',', value_parser = parse_family)]
    cuts: Vec<CutFamily>,
    #[arg(long, conflicts_with = "theta_idx")]
    theta: Option<f64>,
    /// Grid position 1..=10 relative to the largest feasible radius.
    #[arg(long)]
    theta_idx: Option<usize>,
    #[arg(long, value_parser = parse_radius, default_value = "compact")]
    radius_model: RadiusModel,
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    gap_tol: f64,
    #[arg(long, value_parser = parse_branching, default_value = "most-fractional")]
    branching: Branching,
    #[arg(long, value_parser = parse_selection, default_value = "best-bound")]
    node_selection: NodeSelection,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the search log lines to stderr.
    #[arg(long)]
    events: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment config; defaults to the desk-scale matrix.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-cell summary table.
    #[arg(long)]
    aggregate: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InstanceArgs,
    /// JSON array of decisions, or a `solve` result with an `x` field.
    #[arg(long)]
    x: PathBuf,
    /// Radius; defaults to the instance's own (or 0.001 for transport instances).
    #[arg(long)]
    theta: Option<f64>,
}

fn parse_norm(s: &str) -> Result<NormChoice, String> {
    match s {
        "one" | "1" => Ok(NormChoice::One),
        "two" | "2" => Ok(NormChoice::Two),
        "inf" => Ok(NormChoice::Inf),
        _ => Err(format!("unknown norm `{s}` (one, two, inf)")),
    }
}

fn parse_formulation(s: &str) -> Result<FormulationKind, String> {
    s.parse::<FormulationKind>().map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> Result<CutFamily, String> {
    match s {
        "mixing" => Ok(CutFamily::Mixing),
        "path" => Ok(CutFamily::Path),
        _ => Err(format!("unknown cut family `{s}` (mixing, path)")),
    }
}

fn parse_radius(s: &str) -> Result<RadiusModel, String> {
    match s {
        "basic" => Ok(RadiusModel::Basic),
        "compact" => Ok(RadiusModel::Compact),
        _ => Err(format!("unknown radius model `{s}` (basic, compact)")),
    }
}

fn parse_branching(s: &str) -> Result<Branching, String> {
    match s {
        "most-fractional" => Ok(Branching::MostFractional),
        "pseudo-cost" => Ok(Branching::PseudoCost),
        _ => Err(format!("unknown branching rule `{s}` (most-fractional, pseudo-cost)")),
    }
}

fn parse_selection(s: &str) -> Result<NodeSelection, String> {
    match s {
        "best-bound" => Ok(NodeSelection::BestBound),
        "depth-first" => Ok(NodeSelection::DepthFirst),
        _ => Err(format!("unknown node selection `{s}` (best-bound, depth-first)")),
    }
}

/// Input problems map to the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

enum Loaded {
    Transport(TransportInstance),
    General(DrccpInstance),
}

fn load_instance(path: &Path) -> anyhow::Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(tp) = serde_json::from_str::<TransportInstance>(&text) {
        return Ok(Loaded::Transport(tp));
    }
    DrccpInstance::from_json(&text)
        .map(Loaded::General)
        .map_err(|e| usage(format!("{}: not a valid instance ({e})", path.display())))
}

fn to_drccp(loaded: &Loaded, input: &InstanceArgs, theta: f64) -> anyhow::Result<DrccpInstance> {
    match loaded {
        Loaded::Transport(tp) => tp.to_drccp(input.epsilon, theta, input.norm).map_err(|e| usage(e.to_string())),
        Loaded::General(inst) => Ok(inst.with_theta(theta)),
    }
}

fn write_out(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<u8> {
    if a.factories == 0 || a.centers == 0 || a.samples == 0 {
        return Err(usage("F, D and N must be positive"));
    }
    let tp = generate(a.factories, a.centers, a.samples, a.seed);
    write_out(&a.out, &tp.to_json())?;
    Ok(0)
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<u8> {
    let loaded = load_instance(&a.input.instance)?;
    let config = BncConfig {
        time_limit: a.time_limit,
        gap_tol: a.gap_tol,
        node_selection: a.node_selection,
        branching: a.branching,
        cuts: a.cuts.clone(),
        seed: a.seed,
        node_limit: a.node_limit,
        record_events: a.events,
        ..BncConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let default_theta = match &loaded {
        Loaded::Transport(_) => bench::THETA_FIRST,
        Loaded::General(inst) => inst.theta,
    };
    let base = to_drccp(&loaded, &a.input, default_theta)?;
    let theta = match (a.theta, a.theta_idx) {
        (Some(t), _) if !(t >= 0.0 && t.is_finite()) => return Err(usage("theta must be finite and non-negative")),
        (Some(t), _) => t,
        (None, Some(j)) if !(1..=bench::THETA_POINTS).contains(&j) => return Err(usage("theta-idx must lie in 1..=10")),
        (None, Some(j)) => {
            let radius_cfg = BncConfig { cuts: vec![], record_events: false, node_limit: None, ..config.clone() };
            match theta_max(&base, a.radius_model, &radius_cfg) {
                Ok(tm) => bench::theta_at(j, tm.value),
                Err(drccp::error::Error::NoFeasibleRadius) => {
                    eprintln!("no feasible radius: the sample average approximation is infeasible");
                    return Ok(EXIT_INFEASIBLE);
                }
                Err(drccp::error::Error::RadiusSearchIncomplete(status)) => {
                    eprintln!("radius search stopped ({status}) without a feasible radius");
                    return Ok(EXIT_NO_INCUMBENT);
                }
                Err(e) => return Err(e.into()),
            }
        }
        (None, None) => default_theta,
    };
    let inst = base.with_theta(theta);
    let model = if theta <= 0.0 {
        log::info!("theta = 0: solving the sample-average model");
        build_saa(&inst, compute_big_m(&inst)?)
    } else {
        build(a.formulation, &inst).map_err(|e| usage(e.to_string()))?
    };
    let seps: Vec<Box<dyn Separator>> = if theta > 0.0 { separators(&inst, &a.cuts) } else { Vec::new() };
    let refs: Vec<&dyn Separator> = seps.iter().map(|s| s.as_ref()).collect();
    let res = bnc::solve(&model, &refs, &config)?;
    for ev in &res.events {
        eprintln!("{ev}");
    }
    let x: Option<Vec<f64>> = res.x.as_ref().map(|v| model.block(Block::X).iter().map(|&c| v[c]).collect());
    let finite = |v: f64| if v.is_finite() { json!(v) } else { json!(null) };
    let report = json!({
        "status": res.status.name(),
        "formulation": a.formulation.name(),
        "theta": theta,
        "epsilon": inst.epsilon,
        "objective": res.objective,
        "bound": finite(res.bound),
        "gap_pct": finite(res.gap_pct),
        "root_bound": finite(res.root_bound),
        "root_gap_pct": finite(res.root_gap_pct),
        "root_time_s": res.root_time,
        "time_s": res.wall_time,
        "nodes": res.nodes,
        "lp_iterations": res.lp_iterations,
        "mixing_cuts": res.mixing_cuts,
        "path_cuts": res.path_cuts,
        "x": x,
    });
    let text = to_json_string(&report)?;
    match &a.out {
        Some(p) => write_out(p, &text)?,
        None => println!("{text}"),
    }
    Ok(match res.status {
        SolveStatus::Optimal | SolveStatus::FeasibleGap => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::NoIncumbent | SolveStatus::TimeLimit => EXIT_NO_INCUMBENT,
    })
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<u8> {
    let cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let rows = bench::run_experiments(&cfg)?;
    let mut buf = Vec::new();
    bench::write_csv(&rows, &mut buf)?;
    std::fs::write(&a.out, buf).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.aggregate {
        let mut buf = Vec::new();
        bench::write_csv(&bench::aggregate(&rows), &mut buf)?;
        std::fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(0)
}

fn read_decision(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let arr = match &v {
        serde_json::Value::Array(_) => &v,
        serde_json::Value::Object(m) => m.get("x").ok_or_else(|| usage("decision file has no `x` field"))?,
        _ => return Err(usage("decision file must hold an array or an object with `x`")),
    };
    serde_json::from_value::<Vec<f64>>(arr.clone()).map_err(|_| usage("`x` must be an array of numbers"))
}

fn cmd_oracle(a: OracleArgs) -> anyhow::Result<u8> {
    let loaded = load_instance(&a.input.instance)?;
    let theta = a.theta.unwrap_or(match &loaded {
        Loaded::Transport(_) => bench::THETA_FIRST,
        Loaded::General(inst) => inst.theta,
    });
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(usage("theta must be finite and non-negative"));
    }
    let inst = to_drccp(&loaded, &a.input, theta)?;
    let x = read_decision(&a.x)?;
    if x.len() != inst.num_decisions() {
        bail!(usage(format!("decision has {} entries, instance expects {}", x.len(), inst.num_decisions())));
    }
    let profile = DistanceProfile::of(&inst, &x);
    let wcp = worst_case_prob(&profile, theta);
    let cert = lemma_certificate(&profile, inst.epsilon, theta);
    let in_domain = inst.in_domain(&x, 1e-6);
    let verdict = if in_domain && cert.feasible() { "feasible" } else { "infeasible" };
    println!("worst_case_prob {}", drccp::numfmt::fmt_g(wcp, 12));
    println!("epsilon {}", drccp::numfmt::fmt_g(inst.epsilon, 12));
    println!("certificate t {} slack {}", drccp::numfmt::fmt_g(cert.t, 12), drccp::numfmt::fmt_g(cert.slack, 12));
    println!("in_domain {in_domain}");
    println!("verdict {verdict}");
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Oracle(a) => cmd_oracle(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
