//! MIP formulations of the distributionally robust chance constraint.
//!
//! Every builder normalizes safety rows by `||b_p||_*` up front, so the
//! scenario rows all read
//!
//! ```text
//! -a_p'x / ||b_p|| + (coef) z_i [- t + r_i]  >=  -(b_p' xi_i + d_p) / ||b_p||
//! ```
//!
//! Row labels used in dumps:
//!
//! | label          | meaning                                          |
//! |----------------|--------------------------------------------------|
//! | `domain[j]`    | `G x <= g`                                       |
//! | `conic`        | `eps t - (1/N) sum r >= theta`                   |
//! | `bigm1[i]`     | `t - r_i + M z_i <= M`                           |
//! | `bigm2[i,p]`   | margin `+ M z_i - t + r_i >= 0`                  |
//! | `knapsack`     | `sum z <= k`                                     |
//! | `scen[i,p]`    | margin `+ M z_i >= 0`                            |
//! | `reduced[i,p]` | margin `+ h_ip z_i - t + r_i >= 0`, all `i`      |
//! | `compact[i,p]` | as `reduced`, only for surviving scenarios       |
//! | `quantile[p]`  | `(d_p - q_p - a_p'x) / ||b_p|| >= t`             |

use crate::bnc::{self, BncConfig, SolveStatus};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpRow, LpStatus, ObjSense, RowSense};
use crate::mip::{Block, MipModel, VarKind};
use crate::model::{dot, DrccpInstance};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Per-row quantile data for the strengthened formulations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileData {
    pub k: usize,
    /// `q_p`, the `(k+1)`-th largest of `-b_p' xi_i`.
    pub q: Vec<f64>,
    /// `h[p][i] = (-b_p' xi_i - q_p) / ||b_p||_*`.
    pub h: Vec<Vec<f64>>,
    /// Scenarios with `h[p][i] > 0`, sorted by `h` descending then index.
    pub surviving: Vec<Vec<usize>>,
    pub norms: Vec<f64>,
}

impl QuantileData {
    pub fn num_surviving(&self) -> usize {
        self.surviving.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulationKind {
    Saa,
    Basic,
    Knapsack,
    Reduced,
    Compact,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 5] = [
        FormulationKind::Saa,
        FormulationKind::Basic,
        FormulationKind::Knapsack,
        FormulationKind::Reduced,
        FormulationKind::Compact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulationKind::Saa => "saa",
            FormulationKind::Basic => "basic",
            FormulationKind::Knapsack => "knapsack",
            FormulationKind::Reduced => "reduced",
            FormulationKind::Compact => "compact",
        }
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FormulationKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidInstance(format!("unknown formulation `{s}`")))
    }
}

/// Minimum and maximum of `a'x` over the domain.
fn linear_range(inst: &DrccpInstance, a: &[f64]) -> Result<(f64, f64)> {
    let mut lp = LpProblem {
        objective: a.to_vec(),
        sense: ObjSense::Minimize,
        lb: inst.domain.lb.clone(),
        ub: inst.domain.ub.clone(),
        rows: inst
            .domain
            .g_mat
            .iter()
            .zip(&inst.domain.g_rhs)
            .map(|(row, &rhs)| LpRow {
                coefs: row.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect(),
                sense: RowSense::Le,
                rhs,
            })
            .collect(),
    };
    let mut out = [0.0; 2];
    for (slot, sense) in [ObjSense::Minimize, ObjSense::Maximize].into_iter().enumerate() {
        lp.sense = sense;
        let sol = solve_lp(&lp)?;
        out[slot] = match sol.status {
            LpStatus::Optimal => sol.objective,
            LpStatus::Unbounded => return Err(Error::NotCompact),
            LpStatus::Infeasible => return Err(Error::EmptyDomain),
        };
    }
    Ok((out[0], out[1]))
}

/// Smallest constant bounding every normalized margin over the domain,
/// `max_{i,p,x} |b_p' xi_i + d_p - a_p' x| / ||b_p||_*`.
pub fn compute_big_m(inst: &DrccpInstance) -> Result<f64> {
    let norms = inst.row_norms();
    let mut big_m = 0.0f64;
    for (row, nb) in inst.rows.iter().zip(&norms) {
        let (lo, hi) = if row.a.iter().all(|&v| v == 0.0) {
            (0.0, 0.0)
        } else {
            linear_range(inst, &row.a)?
        };
        for xi in inst.samples.iter() {
            let base = dot(&row.b, xi) + row.d;
            big_m = big_m.max((base - lo).abs() / nb).max((base - hi).abs() / nb);
        }
    }
    Ok(big_m)
}

/// Quantiles `q_p`, strengthened coefficients `h` and surviving sets.
pub fn compute_quantiles(inst: &DrccpInstance) -> QuantileData {
    let n = inst.num_samples();
    let k = inst.k();
    let norms = inst.row_norms();
    let mut q = Vec::with_capacity(inst.num_rows());
    let mut h = Vec::with_capacity(inst.num_rows());
    let mut surviving = Vec::with_capacity(inst.num_rows());
    for (row, &nb) in inst.rows.iter().zip(&norms) {
        let vals: Vec<f64> = inst.samples.iter().map(|xi| -dot(&row.b, xi)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        let qp = vals[order[k]];
        let hp: Vec<f64> = vals.iter().map(|v| (v - qp) / nb).collect();
        let surv: Vec<usize> = order.iter().copied().filter(|&i| vals[i] > qp).collect();
        q.push(qp);
        h.push(hp);
        surviving.push(surv);
    }
    QuantileData { k, q, h, surviving, norms }
}

/// Variable handles shared by the builders.
struct Skeleton {
    model: MipModel,
    z: Vec<usize>,
    r: Vec<usize>,
    t: Option<usize>,
    norms: Vec<f64>,
    /// `-a_p / ||b_p||` as sparse `(column, coef)` pairs.
    xcoef: Vec<Vec<(usize, f64)>>,
    /// `-(b_p' xi_i + d_p) / ||b_p||`, indexed `[p][i]`.
    base_rhs: Vec<Vec<f64>>,
}

impl Skeleton {
    fn new(inst: &DrccpInstance, with_rt: bool, sense: ObjSense) -> Self {
        let mut model = MipModel::new(sense);
        let l = inst.num_decisions();
        let n = inst.num_samples();
        let x: Vec<usize> = (0..l)
            .map(|j| model.add_var(Block::X, VarKind::Continuous, inst.domain.lb[j], inst.domain.ub[j]))
            .collect();
        let z: Vec<usize> = (0..n).map(|_| model.add_var(Block::Z, VarKind::Binary, 0.0, 1.0)).collect();
        let (r, t) = if with_rt {
            let r = (0..n)
                .map(|_| model.add_var(Block::R, VarKind::Continuous, 0.0, f64::INFINITY))
                .collect();
            let t = model.add_var(Block::T, VarKind::Continuous, 0.0, f64::INFINITY);
            (r, Some(t))
        } else {
            (Vec::new(), None)
        };
        for (j, (row, &rhs)) in inst.domain.g_mat.iter().zip(&inst.domain.g_rhs).enumerate() {
            let coefs = row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, &v)| (x[c], v)).collect();
            model.add_constraint(format!("domain[{j}]"), coefs, RowSense::Le, rhs);
        }
        if sense == ObjSense::Minimize {
            model.set_objective(
                inst.cost.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, &c)| (x[j], c)).collect(),
            );
        }
        let norms = inst.row_norms();
        let xcoef = inst
            .rows
            .iter()
            .zip(&norms)
            .map(|(row, nb)| {
                row.a.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (x[j], -a / nb)).collect()
            })
            .collect();
        let base_rhs = inst
            .rows
            .iter()
            .zip(&norms)
            .map(|(row, nb)| inst.samples.iter().map(|xi| -(dot(&row.b, xi) + row.d) / nb).collect())
            .collect();
        Skeleton { model, z, r, t, norms, xcoef, base_rhs }
    }

    fn t(&self) -> usize {
        self.t.expect("skeleton built with r and t")
    }

    /// `eps t - (1/N) sum r - [theta] >= theta_rhs`.
    fn conic(&mut self, eps: f64, theta_var: Option<usize>, theta: f64) {
        let n = self.r.len() as f64;
        let mut coefs = vec![(self.t(), eps)];
        coefs.extend(self.r.iter().map(|&r| (r, -1.0 / n)));
        if let Some(th) = theta_var {
            coefs.push((th, -1.0));
        }
        self.model.add_constraint("conic", coefs, RowSense::Ge, theta);
    }

    fn bigm1(&mut self, big_m: f64) {
        let t = self.t();
        for i in 0..self.z.len() {
            let coefs = vec![(t, 1.0), (self.r[i], -1.0), (self.z[i], big_m)];
            self.model.add_constraint(format!("bigm1[{i}]"), coefs, RowSense::Le, big_m);
        }
    }

    fn knapsack(&mut self, k: usize) {
        let coefs = self.z.iter().map(|&z| (z, 1.0)).collect();
        self.model.add_constraint("knapsack", coefs, RowSense::Le, k as f64);
    }

    /// Scenario row for `(i, p)` with `zcoef` on `z_i`, optionally `- t + r_i`.
    fn scenario_row(&mut self, label: String, i: usize, p: usize, zcoef: f64, with_rt: bool) {
        let mut coefs = self.xcoef[p].clone();
        if zcoef != 0.0 {
            coefs.push((self.z[i], zcoef));
        }
        if with_rt {
            coefs.push((self.t(), -1.0));
            coefs.push((self.r[i], 1.0));
        }
        let rhs = self.base_rhs[p][i];
        self.model.add_constraint(label, coefs, RowSense::Ge, rhs);
    }
}

fn require_radius(inst: &DrccpInstance) -> Result<()> {
    if inst.theta > 0.0 {
        Ok(())
    } else {
        Err(Error::ZeroRadius)
    }
}

/// Sample average approximation: knapsack plus big-M scenario rows.
pub fn build_saa(inst: &DrccpInstance, big_m: f64) -> MipModel {
    let mut s = Skeleton::new(inst, false, ObjSense::Minimize);
    s.knapsack(inst.k());
    for i in 0..inst.num_samples() {
        for p in 0..inst.num_rows() {
            s.scenario_row(format!("scen[{i},{p}]"), i, p, big_m, false);
        }
    }
    s.model
}

fn basic_skeleton(inst: &DrccpInstance, big_m: f64, theta_var: bool) -> Skeleton {
    let sense = if theta_var { ObjSense::Maximize } else { ObjSense::Minimize };
    let mut s = Skeleton::new(inst, true, sense);
    let th = theta_var.then(|| s.model.add_var(Block::Theta, VarKind::Continuous, 0.0, f64::INFINITY));
    if let Some(th) = th {
        s.model.set_objective(vec![(th, 1.0)]);
    }
    s.conic(inst.epsilon, th, if theta_var { 0.0 } else { inst.theta });
    s.bigm1(big_m);
    s
}

fn add_bigm2(s: &mut Skeleton, inst: &DrccpInstance, big_m: f64) {
    for i in 0..inst.num_samples() {
        for p in 0..inst.num_rows() {
            s.scenario_row(format!("bigm2[{i},{p}]"), i, p, big_m, true);
        }
    }
}

/// Distance-based big-M formulation.
pub fn build_basic(inst: &DrccpInstance, big_m: f64) -> Result<MipModel> {
    require_radius(inst)?;
    let mut s = basic_skeleton(inst, big_m, false);
    add_bigm2(&mut s, inst, big_m);
    Ok(s.model)
}

/// [`build_basic`] plus the knapsack row and big-M scenario rows on the same `z`.
pub fn build_knapsack(inst: &DrccpInstance, big_m: f64) -> Result<MipModel> {
    require_radius(inst)?;
    let mut s = basic_skeleton(inst, big_m, false);
    add_bigm2(&mut s, inst, big_m);
    s.knapsack(inst.k());
    for i in 0..inst.num_samples() {
        for p in 0..inst.num_rows() {
            s.scenario_row(format!("scen[{i},{p}]"), i, p, big_m, false);
        }
    }
    Ok(s.model)
}

/// Knapsack model whose scenario rows use `h_ip` in place of `M`.
pub fn build_reduced(inst: &DrccpInstance, quant: &QuantileData, big_m: f64) -> Result<MipModel> {
    require_radius(inst)?;
    let mut s = basic_skeleton(inst, big_m, false);
    s.knapsack(quant.k);
    for i in 0..inst.num_samples() {
        for p in 0..inst.num_rows() {
            s.scenario_row(format!("reduced[{i},{p}]"), i, p, quant.h[p][i], true);
        }
    }
    Ok(s.model)
}

fn add_compact_rows(s: &mut Skeleton, inst: &DrccpInstance, quant: &QuantileData) {
    for p in 0..inst.num_rows() {
        let mut surv = quant.surviving[p].clone();
        surv.sort_unstable();
        for i in surv {
            s.scenario_row(format!("compact[{i},{p}]"), i, p, quant.h[p][i], true);
        }
    }
    let t = s.t();
    for (p, row) in inst.rows.iter().enumerate() {
        let mut coefs = s.xcoef[p].clone();
        coefs.push((t, -1.0));
        let rhs = (quant.q[p] - row.d) / s.norms[p];
        s.model.add_constraint(format!("quantile[{p}]"), coefs, RowSense::Ge, rhs);
    }
}

/// Scenario rows only for surviving scenarios plus one quantile row per `p`.
pub fn build_compact(inst: &DrccpInstance, quant: &QuantileData, big_m: f64) -> Result<MipModel> {
    require_radius(inst)?;
    let mut s = basic_skeleton(inst, big_m, false);
    s.knapsack(quant.k);
    add_compact_rows(&mut s, inst, quant);
    Ok(s.model)
}

/// Builds `kind`, computing big-M and quantiles as needed.
pub fn build(kind: FormulationKind, inst: &DrccpInstance) -> Result<MipModel> {
    let big_m = compute_big_m(inst)?;
    match kind {
        FormulationKind::Saa => Ok(build_saa(inst, big_m)),
        FormulationKind::Basic => build_basic(inst, big_m),
        FormulationKind::Knapsack => build_knapsack(inst, big_m),
        FormulationKind::Reduced => build_reduced(inst, &compute_quantiles(inst), big_m),
        FormulationKind::Compact => build_compact(inst, &compute_quantiles(inst), big_m),
    }
}

/// Which constraint system carries the radius variable in [`theta_max`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusModel {
    /// Big-M distance model with `theta` as a variable.
    #[default]
    Basic,
    /// Quantile-reduced model with `theta` as a variable.
    Compact,
}

/// Largest-radius model: maximize `theta` subject to the distance rows.
pub fn build_theta_max(inst: &DrccpInstance, big_m: f64, which: RadiusModel) -> MipModel {
    let mut s = basic_skeleton(inst, big_m, true);
    match which {
        RadiusModel::Basic => add_bigm2(&mut s, inst, big_m),
        RadiusModel::Compact => {
            let quant = compute_quantiles(inst);
            s.knapsack(quant.k);
            add_compact_rows(&mut s, inst, &quant);
        }
    }
    s.model
}

/// Outcome of the largest-radius computation.
#[derive(Debug, Clone)]
pub struct ThetaMax {
    /// Best radius found (a feasible one).
    pub value: f64,
    /// Proven upper bound on the radius.
    pub bound: f64,
    pub gap_pct: f64,
    pub status: SolveStatus,
}

/// Largest Wasserstein radius at which the instance stays feasible.
pub fn theta_max(inst: &DrccpInstance, which: RadiusModel, config: &BncConfig) -> Result<ThetaMax> {
    let big_m = compute_big_m(inst)?;
    let model = build_theta_max(inst, big_m, which);
    let res = bnc::solve(&model, &[], config)?;
    match (res.status, res.objective) {
        (SolveStatus::Infeasible, _) => Err(Error::NoFeasibleRadius),
        (status, None) => Err(Error::RadiusSearchIncomplete(status.name().to_string())),
        (status, Some(value)) => Ok(ThetaMax { value: value.max(0.0), bound: res.bound, gap_pct: res.gap_pct, status }),
    }
}
