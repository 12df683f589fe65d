//! Experiment matrix over generated transportation instances.
//!
//! Every `(F, D, N, replication)` cell gets its own instance seed, derived
//! from the base seed and the cell coordinates by chained SplitMix64 steps.
//! The largest feasible radius is computed once per instance; the radius grid
//! and the solver variants then reuse that instance.

use crate::bnc::{self, Branching, BncConfig, SolveStatus};
use crate::cuts::{separators, CutFamily, Separator};
use crate::error::{Error, Result};
use crate::formulations::{build, theta_max, FormulationKind, RadiusModel};
use crate::mip::Block;
use crate::model::{DrccpInstance, NormChoice};
use crate::oracles::{is_robust_feasible, worst_case_prob, DistanceProfile};
use crate::transport::{generate, TransportInstance};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Radius of the first grid point.
pub const THETA_FIRST: f64 = 0.001;
/// Number of grid points.
pub const THETA_POINTS: usize = 10;
/// Cells larger than this (`F * D * N`) need [`ExperimentConfig::stretch`].
pub const DESK_CELL_LIMIT: usize = 5 * 20 * 200;

/// Formulation plus cut families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Basic,
    Improved,
    Mixing,
    Path,
    MixingPath,
    BasicMixingPath,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Basic,
        Variant::Improved,
        Variant::Mixing,
        Variant::Path,
        Variant::MixingPath,
        Variant::BasicMixingPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "Basic",
            Variant::Improved => "Improved",
            Variant::Mixing => "Mixing",
            Variant::Path => "Path",
            Variant::MixingPath => "MixingPath",
            Variant::BasicMixingPath => "BasicMixingPath",
        }
    }

    pub fn formulation(self) -> FormulationKind {
        match self {
            Variant::Basic | Variant::BasicMixingPath => FormulationKind::Basic,
            _ => FormulationKind::Compact,
        }
    }

    pub fn cuts(self) -> Vec<CutFamily> {
        match self {
            Variant::Basic | Variant::Improved => vec![],
            Variant::Mixing => vec![CutFamily::Mixing],
            Variant::Path => vec![CutFamily::Path],
            Variant::MixingPath | Variant::BasicMixingPath => vec![CutFamily::Mixing, CutFamily::Path],
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInstance(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "F")]
    pub factories: Vec<usize>,
    #[serde(rename = "D")]
    pub centers: Vec<usize>,
    #[serde(rename = "N")]
    pub samples: Vec<usize>,
    pub epsilon: f64,
    /// 1-based positions on the radius grid.
    pub theta_indices: Vec<usize>,
    pub variants: Vec<Variant>,
    pub replications: usize,
    /// Seconds per solve.
    pub time_limit: f64,
    /// Processed-node budget per solve.
    pub node_limit: Option<usize>,
    pub gap_tol: f64,
    pub branching: Branching,
    pub radius_model: RadiusModel,
    pub base_seed: u64,
    pub norm: NormChoice,
    /// Fill the wall-clock columns (which makes output run-dependent).
    pub record_times: bool,
    /// Allow cells beyond [`DESK_CELL_LIMIT`].
    pub stretch: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            factories: vec![2, 5],
            centers: vec![3, 10, 20],
            samples: vec![10, 50, 200],
            epsilon: 0.1,
            theta_indices: (1..=THETA_POINTS).collect(),
            variants: Variant::ALL.to_vec(),
            replications: 3,
            time_limit: 60.0,
            node_limit: Some(200),
            gap_tol: 1e-4,
            branching: Branching::PseudoCost,
            radius_model: RadiusModel::Compact,
            base_seed: 2024,
            norm: NormChoice::Two,
            record_times: false,
            stretch: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInstance(m.to_string()));
        if self.replications < 1 {
            return bad("replications must be at least 1");
        }
        if self.factories.is_empty() || self.centers.is_empty() || self.samples.is_empty() {
            return bad("F, D and N lists must be non-empty");
        }
        if [&self.factories, &self.centers, &self.samples].iter().any(|l| l.contains(&0)) {
            return bad("F, D and N must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.variants.is_empty() {
            return bad("no variants selected");
        }
        if self.theta_indices.is_empty() || self.theta_indices.windows(2).any(|w| w[0] >= w[1]) {
            return bad("theta indices must be non-empty and strictly increasing");
        }
        if self.theta_indices.iter().any(|&j| j == 0 || j > THETA_POINTS) {
            return bad("theta indices must lie in 1..=10");
        }
        if !self.stretch {
            for (f, d, n) in self.cells() {
                if f * d * n > DESK_CELL_LIMIT {
                    return Err(Error::InvalidInstance(format!(
                        "cell F={f} D={d} N={n} exceeds the desk-scale limit; set \"stretch\": true"
                    )));
                }
            }
        }
        self.solver(&[]).validate()
    }

    /// Solver settings shared by all cells.
    pub fn solver(&self, cuts: &[CutFamily]) -> BncConfig {
        BncConfig {
            time_limit: self.time_limit,
            gap_tol: self.gap_tol,
            branching: self.branching,
            node_limit: self.node_limit,
            cuts: cuts.to_vec(),
            ..BncConfig::default()
        }
    }

    /// Radius search budget: the time limit only, never the node cap.
    pub fn radius_solver(&self) -> BncConfig {
        BncConfig { node_limit: None, ..self.solver(&[]) }
    }

    fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &f in &self.factories {
            for &d in &self.centers {
                for &n in &self.samples {
                    out.push((f, d, n));
                }
            }
        }
        out
    }

    pub fn read_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Instance seed of one cell replication.
pub fn cell_seed(base: u64, f: usize, d: usize, n: usize, rep: usize) -> u64 {
    [f, d, n, rep].iter().fold(splitmix64(base), |s, &v| splitmix64(s ^ v as u64))
}

/// Radius at 1-based grid position `j`.
pub fn theta_at(j: usize, theta_max: f64) -> f64 {
    if j == 1 {
        THETA_FIRST
    } else {
        (j - 1) as f64 / 10.0 * theta_max
    }
}

/// One solve of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub theta_idx: usize,
    pub theta: Option<f64>,
    pub variant: Variant,
    pub seed: u64,
    pub status: String,
    pub obj: Option<f64>,
    pub lb: Option<f64>,
    pub gap_pct: Option<f64>,
    pub root_time_s: Option<f64>,
    pub root_gap_pct: Option<f64>,
    pub time_s: Option<f64>,
    pub nodes: usize,
    pub mixing_cuts: usize,
    pub path_cuts: usize,
}

/// Status written for cells whose setup failed.
pub const STATUS_ERROR: &str = "error";

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Solves one variant at one radius and checks any incumbent with the
/// certificate, logging a warning when it fails.
pub fn solve_cell(
    cfg: &ExperimentConfig,
    inst: &DrccpInstance,
    variant: Variant,
) -> Result<bnc::SolveResult> {
    let model = build(variant.formulation(), inst)?;
    let cuts = variant.cuts();
    let seps: Vec<Box<dyn Separator>> = separators(inst, &cuts);
    let refs: Vec<&dyn Separator> = seps.iter().map(|s| s.as_ref()).collect();
    let res = bnc::solve(&model, &refs, &cfg.solver(&cuts))?;
    if let Some(x) = &res.x {
        let dec: Vec<f64> = model.block(Block::X).iter().map(|&c| x[c]).collect();
        if !is_robust_feasible(inst, &dec) {
            let wcp = worst_case_prob(&DistanceProfile::of(inst, &dec), inst.theta);
            log::warn!("{} incumbent fails the certificate (worst-case probability {wcp})", variant.name());
        }
    }
    Ok(res)
}

fn run_instance(cfg: &ExperimentConfig, f: usize, d: usize, n: usize, rep: usize) -> Vec<BenchRow> {
    let seed = cell_seed(cfg.base_seed, f, d, n, rep);
    let tp: TransportInstance = generate(f, d, n, seed);
    let blank = |theta_idx: usize, theta: Option<f64>, variant: Variant, status: &str| BenchRow {
        f,
        d,
        n,
        theta_idx,
        theta,
        variant,
        seed,
        status: status.to_string(),
        obj: None,
        lb: None,
        gap_pct: None,
        root_time_s: None,
        root_gap_pct: None,
        time_s: None,
        nodes: 0,
        mixing_cuts: 0,
        path_cuts: 0,
    };
    let base = tp.to_drccp(cfg.epsilon, THETA_FIRST, cfg.norm);
    let tmax = base
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|inst| theta_max(inst, cfg.radius_model, &cfg.radius_solver()).map_err(|e| e.to_string()));
    let mut rows = Vec::new();
    let (inst, tmax) = match (base, tmax) {
        (Ok(inst), Ok(t)) => (inst, t),
        (_, Err(msg)) => {
            log::warn!("F={f} D={d} N={n} rep={rep}: {msg}");
            for &j in &cfg.theta_indices {
                for &v in &cfg.variants {
                    rows.push(blank(j, None, v, STATUS_ERROR));
                }
            }
            return rows;
        }
        (Err(_), Ok(_)) => unreachable!("radius computed without an instance"),
    };
    if tmax.status != SolveStatus::Optimal {
        log::warn!("F={f} D={d} N={n} rep={rep}: radius search ended {} at gap {}%", tmax.status, tmax.gap_pct);
    }
    if f == 5 && d == 50 && !(0.1..=0.35).contains(&tmax.value) {
        log::warn!("F=5 D=50 N={n} rep={rep}: theta_max {} outside [0.1, 0.35]", tmax.value);
    }
    for &j in &cfg.theta_indices {
        let theta = theta_at(j, tmax.value);
        if theta <= 0.0 {
            for &v in &cfg.variants {
                rows.push(blank(j, Some(theta), v, STATUS_ERROR));
            }
            continue;
        }
        let at = inst.with_theta(theta);
        for &v in &cfg.variants {
            let started = Instant::now();
            match solve_cell(cfg, &at, v) {
                Ok(res) => {
                    let timed = |t: f64| cfg.record_times.then_some(t);
                    rows.push(BenchRow {
                        status: res.status.name().to_string(),
                        obj: res.objective,
                        lb: finite(res.bound),
                        gap_pct: res.objective.map(|_| res.gap_pct),
                        root_time_s: timed(res.root_time),
                        root_gap_pct: res.objective.map(|_| res.root_gap_pct),
                        time_s: timed(started.elapsed().as_secs_f64()),
                        nodes: res.nodes,
                        mixing_cuts: res.mixing_cuts,
                        path_cuts: res.path_cuts,
                        ..blank(j, Some(theta), v, "")
                    });
                }
                Err(e) => {
                    log::warn!("F={f} D={d} N={n} rep={rep} theta_idx={j} {}: {e}", v.name());
                    rows.push(blank(j, Some(theta), v, STATUS_ERROR));
                }
            }
        }
    }
    rows
}

/// Worker count: `DRCCP_THREADS` when set to a positive integer, otherwise
/// the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("DRCCP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the full matrix on `threads` workers; rows come back in canonical
/// order `(F, D, N, replication, theta index, variant)`.
pub fn run_experiments_with(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (f, d, n) in cfg.cells() {
        for rep in 0..cfg.replications {
            jobs.push((f, d, n, rep));
        }
    }
    let slots: Mutex<Vec<Option<Vec<BenchRow>>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(f, d, n, rep)) = jobs.get(i) else { break };
                let rows = run_instance(cfg, f, d, n, rep);
                slots.lock().expect("result lock")[i] = Some(rows);
            });
        }
    });
    Ok(slots.into_inner().expect("result lock").into_iter().flatten().flatten().collect())
}

/// [`run_experiments_with`] using [`worker_count`] workers.
pub fn run_experiments(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    run_experiments_with(cfg, worker_count())
}

pub fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub theta_idx: usize,
    pub variant: Variant,
    pub runs: usize,
    /// Solved to the gap tolerance.
    pub solved: usize,
    /// Finished with an incumbent.
    pub feasible: usize,
    /// `[solved/feasible]`.
    pub sf: String,
    /// Mean time of solved runs.
    pub time_s: Option<f64>,
    /// Mean final gap of runs stopped with an incumbent.
    pub gap_pct: Option<f64>,
    pub root_time_s: Option<f64>,
    /// Mean over runs with a finite root gap.
    pub root_gap_pct: Option<f64>,
    pub nodes: f64,
    pub cuts: f64,
}

fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = vals.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Groups rows by `(F, D, N, theta index, variant)`.
pub fn aggregate(rows: &[BenchRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, usize, usize, usize, Variant), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.f, r.d, r.n, r.theta_idx, r.variant)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((f, d, n, theta_idx, variant), g)| {
            let solved: Vec<&&BenchRow> = g.iter().filter(|r| r.status == SolveStatus::Optimal.name()).collect();
            let feasible = g.iter().filter(|r| r.obj.is_some()).count();
            let open = g.iter().filter(|r| r.obj.is_some() && r.status != SolveStatus::Optimal.name());
            AggregateRow {
                f,
                d,
                n,
                theta_idx,
                variant,
                runs: g.len(),
                solved: solved.len(),
                feasible,
                sf: format!("[{}/{}]", solved.len(), feasible),
                time_s: mean(solved.iter().filter_map(|r| r.time_s)),
                gap_pct: mean(open.filter_map(|r| r.gap_pct).filter(|v| v.is_finite())),
                root_time_s: mean(g.iter().filter_map(|r| r.root_time_s)),
                root_gap_pct: mean(g.iter().filter_map(|r| r.root_gap_pct).filter(|v| v.is_finite())),
                nodes: mean(g.iter().map(|r| r.nodes as f64)).unwrap_or(0.0),
                cuts: mean(g.iter().map(|r| (r.mixing_cuts + r.path_cuts) as f64)).unwrap_or(0.0),
            }
        })
        .collect()
}
