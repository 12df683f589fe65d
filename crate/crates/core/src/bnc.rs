//! LP-based branch-and-bound over the binary columns of a [`MipModel`], with a
//! cutting-plane loop at the root.
//!
//! Bounds are tracked internally for a minimization problem; maximization
//! models are negated on the way in and out.

use crate::cuts::{Cut, CutFamily, Separator};
use crate::error::{Error, Result};
use crate::lp::{Basis, LpStatus, ObjSense, Simplex};
use crate::mip::MipModel;
use crate::numfmt::fmt_g;
use crate::tol;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSelection {
    #[default]
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branching {
    #[default]
    MostFractional,
    PseudoCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BncConfig {
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Relative gap at which the search stops (1e-4 = 0.01%).
    pub gap_tol: f64,
    pub node_selection: NodeSelection,
    pub branching: Branching,
    pub cuts: Vec<CutFamily>,
    pub max_root_rounds: usize,
    /// Also separate at non-root nodes.
    pub node_cuts: bool,
    pub seed: u64,
    /// Deterministic budget on processed nodes.
    pub node_limit: Option<usize>,
    pub record_events: bool,
}

impl Default for BncConfig {
    fn default() -> Self {
        BncConfig {
            time_limit: 3600.0,
            gap_tol: 1e-4,
            node_selection: NodeSelection::BestBound,
            branching: Branching::MostFractional,
            cuts: vec![CutFamily::Mixing, CutFamily::Path],
            max_root_rounds: 30,
            node_cuts: false,
            seed: 0,
            node_limit: None,
            record_events: false,
        }
    }
}

impl BncConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit > 0.0) {
            return Err(Error::InvalidInstance("time limit must be positive".into()));
        }
        if !(self.gap_tol >= 0.0) {
            return Err(Error::InvalidInstance("gap tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// A limit stopped the search with an incumbent in hand.
    FeasibleGap,
    Infeasible,
    /// A limit stopped the search before any incumbent was found.
    NoIncumbent,
    /// The LP solver stalled.
    TimeLimit,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleGap => "feasible-gap",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NoIncumbent => "no-incumbent",
            SolveStatus::TimeLimit => "time-limit",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Branch,
    Fathom,
    Incumbent,
    Cut,
}

/// One line of the search log. Bounds are in the model's own sense.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub node: usize,
    pub lb: f64,
    pub ub: f64,
    pub depth: usize,
    pub action: Action,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let action = match self.action {
            Action::Branch => "branch",
            Action::Fathom => "fathom",
            Action::Incumbent => "incumbent",
            Action::Cut => "cut",
        };
        write!(
            f,
            "node={} lb={} ub={} depth={} action={action}",
            self.node,
            fmt_g(self.lb, 12),
            fmt_g(self.ub, 12),
            self.depth
        )
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Values of all model columns at the incumbent.
    pub x: Option<Vec<f64>>,
    /// Incumbent objective.
    pub objective: Option<f64>,
    /// Best proven bound.
    pub bound: f64,
    pub gap_pct: f64,
    pub root_bound: f64,
    pub root_time: f64,
    pub root_gap_pct: f64,
    pub nodes: usize,
    pub mixing_cuts: usize,
    pub path_cuts: usize,
    pub wall_time: f64,
    pub lp_iterations: usize,
    /// Cuts added during the search, in order.
    pub cuts: Vec<Cut>,
    pub events: Vec<Event>,
}

/// `(ub - lb) / |lb| * 100`; infinite when `lb = 0 < ub` or either side is
/// missing. Errors when `ub` is below `lb` beyond round-off.
pub fn compute_gap(ub: f64, lb: f64) -> Result<f64> {
    if ub.is_nan() || lb.is_nan() {
        return Err(Error::MalformedModel("gap of NaN bounds".into()));
    }
    if !ub.is_finite() || !lb.is_finite() {
        return Ok(f64::INFINITY);
    }
    if ub < lb - 1e-6 * (1.0 + ub.abs()) {
        return Err(Error::MalformedModel(format!("upper bound {ub} below lower bound {lb}")));
    }
    let diff = (ub - lb).max(0.0);
    if diff == 0.0 {
        return Ok(0.0);
    }
    if lb == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(diff / lb.abs() * 100.0)
}

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    fixes: Vec<(usize, f64, f64)>,
    basis: Option<Basis>,
    /// Branch that created this node: (column, went up, fractional distance, parent LP value).
    origin: Option<(usize, bool, f64, f64)>,
}

struct HeapEntry(Node);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // max-heap: smallest bound first, then oldest node
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.total_cmp(&self.0.bound).then(other.0.id.cmp(&self.0.id))
    }
}

/// Open nodes. In best-bound mode nodes wait on a depth-first stack until the
/// first incumbent exists, then everything moves to the bound-ordered heap.
struct Queue {
    heap: BinaryHeap<HeapEntry>,
    stack: Vec<Node>,
    depth_first: bool,
}

impl Queue {
    fn new(sel: NodeSelection) -> Self {
        Queue { heap: BinaryHeap::new(), stack: Vec::new(), depth_first: sel == NodeSelection::DepthFirst }
    }
    fn push(&mut self, n: Node, have_incumbent: bool) {
        if self.depth_first || !have_incumbent {
            self.stack.push(n);
        } else {
            self.heap.push(HeapEntry(n));
        }
    }
    fn pop(&mut self, have_incumbent: bool) -> Option<Node> {
        if have_incumbent && !self.depth_first && !self.stack.is_empty() {
            self.heap.extend(self.stack.drain(..).map(HeapEntry));
        }
        self.stack.pop().or_else(|| self.heap.pop().map(|e| e.0))
    }
    fn min_bound(&self) -> f64 {
        let h = self.heap.peek().map_or(f64::INFINITY, |e| e.0.bound);
        self.stack.iter().map(|n| n.bound).fold(h, f64::min)
    }
    fn is_empty(&self) -> bool {
        self.heap.is_empty() && self.stack.is_empty()
    }
}

#[derive(Default, Clone, Copy)]
struct Pseudo {
    down: (f64, usize),
    up: (f64, usize),
}

struct Search<'a> {
    model: MipModel,
    seps: Vec<&'a dyn Separator>,
    cfg: &'a BncConfig,
    sign: f64,
    lp: Simplex,
    root_lb: Vec<f64>,
    root_ub: Vec<f64>,
    binaries: Vec<usize>,
    /// Tie-break rank of each binary.
    rank: Vec<usize>,
    pseudo: Vec<Pseudo>,
    touched: Vec<usize>,
    start: Instant,
    ub: f64,
    incumbent: Option<Vec<f64>>,
    lb: f64,
    cuts: Vec<Cut>,
    events: Vec<Event>,
    nodes: usize,
    lp_iterations: usize,
}

enum NodeLp {
    Infeasible,
    Solved { value: f64, x: Vec<f64> },
}

impl<'a> Search<'a> {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn out_of_time(&self) -> bool {
        self.elapsed() >= self.cfg.time_limit
    }

    fn log(&mut self, node: usize, depth: usize, action: Action) {
        if self.cfg.record_events {
            let (lb, ub) = self.user_bounds();
            self.events.push(Event { node, lb, ub, depth, action });
        }
    }

    /// `(lower, upper)` in the model's own sense.
    fn user_bounds(&self) -> (f64, f64) {
        if self.sign > 0.0 {
            (self.lb, self.ub)
        } else {
            (-self.ub, -self.lb)
        }
    }

    fn solve_lp(&mut self) -> Result<NodeLp> {
        let sol = self.lp.solve()?;
        self.lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => Ok(NodeLp::Infeasible),
            LpStatus::Unbounded => Err(Error::MalformedModel("LP relaxation is unbounded".into())),
            LpStatus::Optimal => Ok(NodeLp::Solved { value: self.sign * sol.objective, x: sol.x }),
        }
    }

    fn prune_level(&self) -> f64 {
        if self.ub.is_finite() {
            self.ub - (self.cfg.gap_tol * self.ub.abs()).max(1e-9)
        } else {
            f64::INFINITY
        }
    }

    fn gap_closed(&self) -> bool {
        self.ub.is_finite() && self.lb >= self.prune_level()
    }

    fn offer_incumbent(&mut self, value: f64, x: Vec<f64>, node: usize, depth: usize) {
        if value >= self.ub {
            return;
        }
        let (value, x) = self.polish(value, x);
        if value < self.ub {
            self.ub = value;
            self.incumbent = Some(x);
            self.log(node, depth, Action::Incumbent);
        }
    }

    /// Rounds the binaries of a near-integral point and re-solves the
    /// continuous part with them fixed, so big-M rows hold exactly.
    fn polish(&self, value: f64, mut x: Vec<f64>) -> (f64, Vec<f64>) {
        for &j in &self.binaries {
            x[j] = x[j].round();
        }
        let mut lp = self.lp.clone();
        for &j in &self.binaries {
            if lp.set_var_bounds(j, x[j], x[j]).is_err() {
                return (value, x);
            }
        }
        match lp.solve() {
            Ok(sol) if sol.status == LpStatus::Optimal => {
                let mut y = sol.x;
                for &j in &self.binaries {
                    y[j] = x[j];
                }
                (self.sign * sol.objective, y)
            }
            _ => (value, x),
        }
    }

    /// Runs separation rounds on the current LP; returns the last LP outcome.
    fn cut_loop(&mut self, mut lp: NodeLp, rounds: usize, node: usize, depth: usize) -> Result<NodeLp> {
        for _ in 0..rounds {
            let NodeLp::Solved { x, .. } = &lp else { break };
            if self.model.is_integral(x) || self.out_of_time() {
                break;
            }
            let mut found: Vec<Cut> = Vec::new();
            for sep in &self.seps {
                found.extend(sep.separate(&self.model, x));
            }
            if found.is_empty() {
                break;
            }
            found.sort_by(|a, b| (a.row, a.family).cmp(&(b.row, b.family)).then(b.violation.total_cmp(&a.violation)));
            for cut in found {
                let serial = self.cuts.len();
                self.model.constraints.push(cut.to_constraint(serial));
                let row = crate::cuts::relax_small_terms(&crate::cuts::cut_row(&cut), &self.root_lb, &self.root_ub, tol::CUT_TERM_REL);
                self.lp.add_row(&row)?;
                self.cuts.push(cut);
            }
            self.log(node, depth, Action::Cut);
            lp = self.solve_lp()?;
        }
        Ok(lp)
    }

    fn apply_fixes(&mut self, fixes: &[(usize, f64, f64)]) -> Result<()> {
        for j in std::mem::take(&mut self.touched) {
            self.lp.set_var_bounds(j, self.root_lb[j], self.root_ub[j])?;
        }
        for &(j, lo, hi) in fixes {
            self.lp.set_var_bounds(j, lo, hi)?;
            self.touched.push(j);
        }
        Ok(())
    }

    fn pick_branch(&self, x: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (column, value, score)
        for (b, &j) in self.binaries.iter().enumerate() {
            let v = x[j];
            let frac = v - v.floor();
            let dist = frac.min(1.0 - frac);
            if dist <= tol::INTEGRALITY {
                continue;
            }
            let score = match self.cfg.branching {
                Branching::MostFractional => dist,
                Branching::PseudoCost => {
                    let pc = self.pseudo[b];
                    let avg = |(s, c): (f64, usize)| if c > 0 { s / c as f64 } else { 1.0 };
                    (frac * avg(pc.down)).max(1e-6) * ((1.0 - frac) * avg(pc.up)).max(1e-6)
                }
            };
            let better = match best {
                None => true,
                Some((bj, _, bs)) => {
                    score > bs + 1e-12 || (score >= bs - 1e-12 && self.rank_of(j) < self.rank_of(bj))
                }
            };
            if better {
                best = Some((j, v, score));
            }
        }
        best.map(|(j, v, _)| (j, v))
    }

    fn rank_of(&self, col: usize) -> usize {
        self.rank[self.binaries.binary_search(&col).expect("binary column")]
    }

    fn update_pseudo(&mut self, origin: Option<(usize, bool, f64, f64)>, value: f64) {
        let Some((col, up, dist, parent)) = origin else { return };
        if dist <= 0.0 {
            return;
        }
        let b = self.binaries.binary_search(&col).expect("binary column");
        let gain = ((value - parent) / dist).max(0.0);
        let slot = if up { &mut self.pseudo[b].up } else { &mut self.pseudo[b].down };
        slot.0 += gain;
        slot.1 += 1;
    }
}

/// Solves `model` by branch-and-cut.
pub fn solve(model: &MipModel, separators: &[&dyn Separator], config: &BncConfig) -> Result<SolveResult> {
    config.validate()?;
    model.validate()?;
    let start = Instant::now();
    let sign = match model.sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    };
    let lp_problem = model.to_lp();
    let binaries: Vec<usize> = model.binaries().collect();
    let mut rank: Vec<usize> = (0..binaries.len()).collect();
    if config.seed != 0 {
        rank.shuffle(&mut ChaCha20Rng::seed_from_u64(config.seed));
    }
    let mut s = Search {
        model: model.clone(),
        seps: separators.iter().copied().filter(|sp| config.cuts.contains(&sp.family())).collect(),
        cfg: config,
        sign,
        lp: Simplex::new(&lp_problem)?,
        root_lb: lp_problem.lb.clone(),
        root_ub: lp_problem.ub.clone(),
        pseudo: vec![Pseudo::default(); binaries.len()],
        binaries,
        rank,
        touched: Vec::new(),
        start,
        ub: f64::INFINITY,
        incumbent: None,
        lb: f64::NEG_INFINITY,
        cuts: Vec::new(),
        events: Vec::new(),
        nodes: 0,
        lp_iterations: 0,
    };

    let mut stalled = false;
    let mut limit_hit = false;
    let mut queue = Queue::new(config.node_selection);
    let mut next_id = 1usize;

    // root
    s.nodes = 1;
    let root = match s.solve_lp() {
        Ok(lp) => {
            let rounds = if s.seps.is_empty() { 0 } else { config.max_root_rounds };
            match s.cut_loop(lp, rounds, 0, 0) {
                Ok(lp) => Some(lp),
                Err(Error::LpStall { .. }) => None,
                Err(e) => return Err(e),
            }
        }
        Err(Error::LpStall { .. }) => None,
        Err(e) => return Err(e),
    };
    let root_time = s.elapsed();
    let mut root_bound = f64::NEG_INFINITY;
    match root {
        None => stalled = true,
        Some(NodeLp::Infeasible) => {
            s.lb = f64::INFINITY;
            s.log(0, 0, Action::Fathom);
        }
        Some(NodeLp::Solved { value, x }) => {
            root_bound = value;
            s.lb = value;
            if s.model.is_integral(&x) {
                s.offer_incumbent(value, x, 0, 0);
                s.log(0, 0, Action::Fathom);
            } else if let Some((col, v)) = s.pick_branch(&x) {
                let basis = s.lp.basis();
                push_children(&mut queue, s.incumbent.is_some(), &mut next_id, &[], 0, value, col, v, basis);
                s.log(0, 0, Action::Branch);
            }
        }
    }

    while !stalled {
        if queue.is_empty() {
            break;
        }
        s.lb = s.lb.max(queue.min_bound().min(s.ub));
        if s.gap_closed() {
            break;
        }
        if s.out_of_time() || config.node_limit.is_some_and(|l| s.nodes >= l) {
            limit_hit = true;
            break;
        }
        let node = queue.pop(s.incumbent.is_some()).expect("non-empty queue");
        if node.bound >= s.prune_level() {
            s.log(node.id, node.depth, Action::Fathom);
            continue;
        }
        s.nodes += 1;
        s.apply_fixes(&node.fixes)?;
        if let Some(b) = &node.basis {
            s.lp.set_basis(b);
        }
        let mut lp = match s.solve_lp() {
            Ok(lp) => lp,
            Err(Error::LpStall { .. }) => {
                stalled = true;
                queue.push(node, s.incumbent.is_some());
                break;
            }
            Err(e) => return Err(e),
        };
        if config.node_cuts && !s.seps.is_empty() {
            lp = match s.cut_loop(lp, config.max_root_rounds, node.id, node.depth) {
                Ok(lp) => lp,
                Err(Error::LpStall { .. }) => {
                    stalled = true;
                    queue.push(node, s.incumbent.is_some());
                    break;
                }
                Err(e) => return Err(e),
            };
        }
        let (value, x) = match lp {
            NodeLp::Infeasible => {
                s.log(node.id, node.depth, Action::Fathom);
                continue;
            }
            NodeLp::Solved { value, x } => (value.max(node.bound), x),
        };
        s.update_pseudo(node.origin, value);
        if value >= s.prune_level() {
            s.log(node.id, node.depth, Action::Fathom);
            continue;
        }
        if s.model.is_integral(&x) {
            s.offer_incumbent(value, x, node.id, node.depth);
            continue;
        }
        match s.pick_branch(&x) {
            Some((col, v)) => {
                let basis = s.lp.basis();
                push_children(&mut queue, s.incumbent.is_some(), &mut next_id, &node.fixes, node.depth, value, col, v, basis);
                s.log(node.id, node.depth, Action::Branch);
            }
            None => s.offer_incumbent(value, x, node.id, node.depth),
        }
    }

    let open = queue.min_bound();
    s.lb = s.lb.max(open.min(s.ub));
    if s.incumbent.is_some() && s.lb > s.ub {
        s.lb = s.ub;
    }
    let status = if stalled {
        SolveStatus::TimeLimit
    } else if limit_hit && !s.gap_closed() {
        if s.incumbent.is_some() {
            SolveStatus::FeasibleGap
        } else {
            SolveStatus::NoIncumbent
        }
    } else if s.incumbent.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };

    let gap_pct = if s.incumbent.is_some() { compute_gap(s.ub, s.lb)? } else { f64::INFINITY };
    let root_gap_pct = if s.incumbent.is_some() && root_bound.is_finite() {
        compute_gap(s.ub, root_bound.min(s.ub))?
    } else {
        f64::INFINITY
    };
    let count = |f: CutFamily| s.cuts.iter().filter(|c| c.family == f).count();
    let (mixing_cuts, path_cuts) = (count(CutFamily::Mixing), count(CutFamily::Path));
    let objective = s.incumbent.as_ref().map(|_| sign * s.ub);
    let bound = sign * s.lb;
    Ok(SolveResult {
        status,
        objective,
        bound,
        gap_pct,
        root_bound: sign * root_bound,
        root_time,
        root_gap_pct,
        nodes: s.nodes,
        mixing_cuts,
        path_cuts,
        wall_time: s.elapsed(),
        lp_iterations: s.lp_iterations,
        x: s.incumbent,
        cuts: s.cuts,
        events: s.events,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_children(
    queue: &mut Queue,
    have_incumbent: bool,
    next_id: &mut usize,
    fixes: &[(usize, f64, f64)],
    depth: usize,
    bound: f64,
    col: usize,
    value: f64,
    basis: Basis,
) {
    let frac = value - value.floor();
    let make = |id: usize, up: bool| {
        let mut f = fixes.to_vec();
        f.push(if up { (col, 1.0, 1.0) } else { (col, 0.0, 0.0) });
        Node {
            id,
            depth: depth + 1,
            bound,
            fixes: f,
            basis: Some(basis.clone()),
            origin: Some((col, up, if up { 1.0 - frac } else { frac }, bound)),
        }
    };
    // the child on the rounding side is popped first from the stack
    let up_first = frac >= 0.5;
    let order = if up_first { [false, true] } else { [true, false] };
    for up in order {
        let id = *next_id;
        *next_id += 1;
        queue.push(make(id, up), have_incumbent);
    }
}
