//! Mixing and path inequalities for the quantile-strengthened scenario rows.
//!
//! For row `p` write `g_p(x) = (d_p - q_p - a_p'x) / ||b_p||` and sort the
//! surviving scenarios by `h` descending. For a selection `j_1, ..., j_l`
//! (in that order) with `c_i = h_{j_i} - h_{j_{i+1}}` and `h_{j_{l+1}} = 0`:
//!
//! ```text
//! mixing:  g_p(x)              >= sum_i c_i (1 - z_{j_i})
//! path:    g_p(x) - t + sum r_j >= sum_i c_i (1 - z_{j_i})     (r over the selection)
//! ```
//!
//! Since the `c_i` telescope to `h_{j_1}`, both are emitted as `>=` rows with
//! right-hand side `h_{j_1} - (d_p - q_p) / ||b_p||`.

use crate::error::{Error, Result};
use crate::formulations::{compute_big_m, compute_quantiles, QuantileData};
use crate::lp::{LpProblem, LpRow, LpStatus, ObjSense, RowSense, Simplex};
use crate::mip::{Block, Constraint, MipModel};
use crate::model::DrccpInstance;
use crate::numfmt::fmt_g;
use crate::tol;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutFamily {
    Mixing,
    Path,
}

impl CutFamily {
    pub fn name(self) -> &'static str {
        match self {
            CutFamily::Mixing => "mixing",
            CutFamily::Path => "path",
        }
    }
}

impl std::str::FromStr for CutFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mixing" => Ok(CutFamily::Mixing),
            "path" => Ok(CutFamily::Path),
            other => Err(Error::InvalidInstance(format!("unknown cut family `{other}`"))),
        }
    }
}

/// Relaxation values split by block.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalPoint {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub t: f64,
}

impl FractionalPoint {
    /// Reads the `x`, `z`, `r`, `t` blocks of `model` out of `values`.
    /// Missing `r`/`t` blocks read as zero.
    pub fn from_model(model: &MipModel, values: &[f64]) -> Self {
        let pick = |b: Block| model.block(b).iter().map(|&j| values[j]).collect::<Vec<_>>();
        let z = pick(Block::Z);
        let mut r = pick(Block::R);
        if r.is_empty() {
            r = vec![0.0; z.len()];
        }
        FractionalPoint {
            x: pick(Block::X),
            z,
            r,
            t: model.var(Block::T, 0).map_or(0.0, |j| values[j]),
        }
    }
}

/// A separated inequality `coefs . v >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub family: CutFamily,
    pub row: usize,
    /// Selected scenarios, `h` non-increasing.
    pub sequence: Vec<usize>,
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
    /// `rhs - lhs` at the separating point; positive means violated.
    pub violation: f64,
}

impl Cut {
    pub fn label(&self, serial: usize) -> String {
        format!("{}[{}]#{serial}", self.family.name(), self.row)
    }

    pub fn to_constraint(&self, serial: usize) -> Constraint {
        Constraint { label: self.label(serial), coefs: self.coefs.clone(), sense: RowSense::Ge, rhs: self.rhs }
    }

    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Header line plus the row in dump format.
    pub fn dump(&self, model: &MipModel, serial: usize) -> String {
        let seq: Vec<String> = self.sequence.iter().map(usize::to_string).collect();
        let terms: Vec<String> = self
            .coefs
            .iter()
            .map(|&(j, a)| format!("{}*{}", fmt_g(a, 12), model.vars[j].name))
            .collect();
        format!(
            "{} p={} J=[{}] viol={}\n{}: {} >= {}",
            self.family.name(),
            self.row,
            seq.join(","),
            fmt_g(self.violation, 3),
            self.label(serial),
            terms.join(" + "),
            fmt_g(self.rhs, 12)
        )
    }
}

/// Instance data both separators need.
#[derive(Debug, Clone)]
pub struct CutData {
    pub quant: QuantileData,
    /// `-a_p / ||b_p||` indexed by decision position.
    pub xcoef: Vec<Vec<(usize, f64)>>,
    /// `(d_p - q_p) / ||b_p||`.
    pub offset: Vec<f64>,
}

impl CutData {
    pub fn new(inst: &DrccpInstance) -> Self {
        let quant = compute_quantiles(inst);
        let xcoef = inst
            .rows
            .iter()
            .zip(&quant.norms)
            .map(|(row, nb)| row.a.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (j, -a / nb)).collect())
            .collect();
        let offset = inst
            .rows
            .iter()
            .enumerate()
            .map(|(p, row)| (row.d - quant.q[p]) / quant.norms[p])
            .collect();
        CutData { quant, xcoef, offset }
    }

    pub fn num_rows(&self) -> usize {
        self.offset.len()
    }

    /// `g_p(x)`.
    pub fn g(&self, p: usize, x: &[f64]) -> f64 {
        self.offset[p] + self.xcoef[p].iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    fn h(&self, p: usize, i: usize) -> f64 {
        self.quant.h[p][i]
    }

    /// `(c_i)` for a selection; the last one runs down to zero.
    pub fn steps(&self, p: usize, seq: &[usize]) -> Vec<f64> {
        (0..seq.len())
            .map(|a| {
                let next = seq.get(a + 1).map_or(0.0, |&j| self.h(p, j));
                self.h(p, seq[a]) - next
            })
            .collect()
    }

    /// `sum_i c_i (1 - z_{j_i})`.
    pub fn staircase(&self, p: usize, seq: &[usize], z: &[f64]) -> f64 {
        self.steps(p, seq).iter().zip(seq).map(|(c, &j)| c * (1.0 - z[j])).sum()
    }

    fn build(
        &self,
        family: CutFamily,
        p: usize,
        seq: Vec<usize>,
        model: &MipModel,
        violation: f64,
    ) -> Cut {
        let mut coefs: Vec<(usize, f64)> =
            self.xcoef[p].iter().map(|&(j, a)| (model.var(Block::X, j).expect("x block"), a)).collect();
        if family == CutFamily::Path {
            coefs.push((model.var(Block::T, 0).expect("t variable"), -1.0));
            for &j in &seq {
                coefs.push((model.var(Block::R, j).expect("r block"), 1.0));
            }
        }
        for (c, &j) in self.steps(p, &seq).iter().zip(&seq) {
            if *c != 0.0 {
                coefs.push((model.var(Block::Z, j).expect("z block"), *c));
            }
        }
        let rhs = self.h(p, seq[0]) - self.offset[p];
        Cut { family, row: p, sequence: seq, coefs, rhs, violation }
    }
}

/// Greedy selection maximizing the mixing staircase at `z`.
pub fn mixing_selection(data: &CutData, p: usize, z: &[f64]) -> Vec<usize> {
    let mut best = 0.0;
    let mut seq = Vec::new();
    for &i in &data.quant.surviving[p] {
        let slack = 1.0 - z[i];
        if slack > best {
            best = slack;
            seq.push(i);
        }
    }
    seq
}

/// Longest-path selection maximizing `sum c_i (1 - z) - r` over non-empty
/// selections. Returns the selection and its value (`-inf` when `[N]_p` is empty).
pub fn path_selection(data: &CutData, p: usize, z: &[f64], r: &[f64]) -> (Vec<usize>, f64) {
    let order = &data.quant.surviving[p];
    let m = order.len();
    // best[a]: best value of a path starting at position a; next[a]: successor (m = sentinel)
    let mut best = vec![0.0; m + 1];
    let mut next = vec![m; m];
    for a in (0..m).rev() {
        let ja = order[a];
        let (ha, slack, ra) = (data.h(p, ja), 1.0 - z[ja], r[ja]);
        let mut val = ha * slack - ra;
        let mut succ = m;
        for b in a + 1..m {
            let cand = (ha - data.h(p, order[b])) * slack - ra + best[b];
            if cand > val {
                val = cand;
                succ = b;
            }
        }
        best[a] = val;
        next[a] = succ;
    }
    let mut start = None;
    let mut top = f64::NEG_INFINITY;
    for a in 0..m {
        if best[a] > top {
            top = best[a];
            start = Some(a);
        }
    }
    let mut seq = Vec::new();
    let mut cur = start;
    while let Some(a) = cur {
        seq.push(order[a]);
        cur = (next[a] < m).then_some(next[a]);
    }
    (seq, top)
}

/// Most violated mixing inequality for row `p`, if any.
pub fn separate_mixing(data: &CutData, model: &MipModel, point: &FractionalPoint, p: usize) -> Option<Cut> {
    let seq = mixing_selection(data, p, &point.z);
    if seq.is_empty() {
        return None;
    }
    let violation = data.staircase(p, &seq, &point.z) - data.g(p, &point.x);
    (violation > tol::CUT_VIOLATION).then(|| data.build(CutFamily::Mixing, p, seq, model, violation))
}

/// Most violated path inequality for row `p`, if any.
pub fn separate_path(data: &CutData, model: &MipModel, point: &FractionalPoint, p: usize) -> Option<Cut> {
    if model.var(Block::T, 0).is_none() || model.block(Block::R).is_empty() {
        return None;
    }
    let (seq, value) = path_selection(data, p, &point.z, &point.r);
    if seq.is_empty() {
        return None;
    }
    let u = data.g(p, &point.x) - point.t;
    let violation = value - u;
    (violation > tol::CUT_VIOLATION).then(|| data.build(CutFamily::Path, p, seq, model, violation))
}

/// A cut generator the branch-and-cut driver can call.
pub trait Separator: Send + Sync {
    fn family(&self) -> CutFamily;
    /// Violated cuts at `values`, at most one per safety row.
    fn separate(&self, model: &MipModel, values: &[f64]) -> Vec<Cut>;
}

#[derive(Debug, Clone)]
pub struct MixingSeparator(pub CutData);

#[derive(Debug, Clone)]
pub struct PathSeparator(pub CutData);

impl MixingSeparator {
    pub fn new(inst: &DrccpInstance) -> Self {
        MixingSeparator(CutData::new(inst))
    }
}

impl PathSeparator {
    pub fn new(inst: &DrccpInstance) -> Self {
        PathSeparator(CutData::new(inst))
    }
}

impl Separator for MixingSeparator {
    fn family(&self) -> CutFamily {
        CutFamily::Mixing
    }
    fn separate(&self, model: &MipModel, values: &[f64]) -> Vec<Cut> {
        let point = FractionalPoint::from_model(model, values);
        (0..self.0.num_rows()).filter_map(|p| separate_mixing(&self.0, model, &point, p)).collect()
    }
}

impl Separator for PathSeparator {
    fn family(&self) -> CutFamily {
        CutFamily::Path
    }
    fn separate(&self, model: &MipModel, values: &[f64]) -> Vec<Cut> {
        let point = FractionalPoint::from_model(model, values);
        (0..self.0.num_rows()).filter_map(|p| separate_path(&self.0, model, &point, p)).collect()
    }
}

/// Separators for the requested families.
pub fn separators(inst: &DrccpInstance, families: &[CutFamily]) -> Vec<Box<dyn Separator>> {
    let mut out: Vec<Box<dyn Separator>> = Vec::new();
    if families.contains(&CutFamily::Mixing) {
        out.push(Box::new(MixingSeparator::new(inst)));
    }
    if families.contains(&CutFamily::Path) {
        out.push(Box::new(PathSeparator::new(inst)));
    }
    out
}

/// Number of supports with at most `k` of `n` indicators set.
pub fn support_count(n: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for j in 0..=k.min(n) {
        total += binom;
        binom = binom * (n - j) as u128 / (j + 1) as u128;
    }
    total
}

/// Calls `visit` with every subset of `0..n` of size at most `k`, in
/// lexicographic order of the sorted index lists.
pub fn for_each_support(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    fn rec(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        visit(cur)?;
        if cur.len() == k {
            return Ok(());
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, visit)?;
            cur.pop();
        }
        Ok(())
    }
    rec(0, n, k, &mut Vec::with_capacity(k), &mut visit)
}

/// Default cap on enumerated supports.
pub const DEFAULT_SUPPORT_BUDGET: u128 = 1 << 16;

/// Region on which cut validity is certified: the compact rows together with
/// the big-M scenario rows `margin + M z >= 0`, which pins every scenario with
/// `z_i = 0` to the safe side.
pub fn validity_model(inst: &DrccpInstance) -> Result<MipModel> {
    let big_m = compute_big_m(inst)?;
    let quant = compute_quantiles(inst);
    let mut model = crate::formulations::build_compact(inst, &quant, big_m)?;
    let norms = &quant.norms;
    for i in 0..inst.num_samples() {
        for (p, row) in inst.rows.iter().enumerate() {
            let mut coefs: Vec<(usize, f64)> = row
                .a
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(j, a)| (model.var(Block::X, j).unwrap(), -a / norms[p]))
                .collect();
            coefs.push((model.var(Block::Z, i).unwrap(), big_m));
            let rhs = -(crate::model::dot(&row.b, inst.samples.get(i)) + row.d) / norms[p];
            model.add_constraint(format!("scen[{i},{p}]"), coefs, RowSense::Ge, rhs);
        }
    }
    Ok(model)
}

/// Minimum of `cut.lhs - cut.rhs` over the integer points of
/// [`validity_model`], found by enumerating every support with `|S| <= k` and
/// minimizing over the continuous part. `None` when the region is empty.
pub fn min_cut_slack(cut: &Cut, inst: &DrccpInstance, budget: u128) -> Result<Option<f64>> {
    let n = inst.num_samples();
    let k = inst.k();
    let needed = support_count(n, k);
    if needed > budget {
        return Err(Error::EnumerationBudget { needed, limit: budget });
    }
    let model = validity_model(inst)?;
    let mut lp: LpProblem = model.to_lp();
    lp.objective = vec![0.0; model.num_vars()];
    for &(j, a) in &cut.coefs {
        lp.objective[j] += a;
    }
    lp.sense = ObjSense::Minimize;
    let z = model.block(Block::Z).to_vec();
    let mut solver = Simplex::new(&lp)?;
    let mut worst: Option<f64> = None;
    for_each_support(n, k, |support| {
        for (i, &zj) in z.iter().enumerate() {
            let v = if support.contains(&i) { 1.0 } else { 0.0 };
            solver.set_var_bounds(zj, v, v)?;
        }
        let sol = solver.solve()?;
        let slack = match sol.status {
            LpStatus::Optimal => sol.objective - cut.rhs,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            LpStatus::Infeasible => return Ok(()),
        };
        worst = Some(worst.map_or(slack, |w: f64| w.min(slack)));
        Ok(())
    })?;
    Ok(worst)
}

/// `true` iff no enumerated integer point violates `cut` by more than
/// [`tol::CUT_VALIDITY`].
pub fn check_cut_validity(cut: &Cut, inst: &DrccpInstance, budget: u128) -> Result<bool> {
    Ok(min_cut_slack(cut, inst, budget)?.is_none_or(|s| s >= -tol::CUT_VALIDITY))
}

impl fmt::Display for CutFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cut row as an [`LpRow`] over the model columns.
pub fn cut_row(cut: &Cut) -> LpRow {
    LpRow { coefs: cut.coefs.clone(), sense: RowSense::Ge, rhs: cut.rhs }
}

/// Drops terms below `rel` times the largest coefficient, moving each one's
/// worst case over `[lb, ub]` into the right-hand side. The result is implied
/// by the input on the box. Terms on unbounded columns are kept.
pub fn relax_small_terms(row: &LpRow, lb: &[f64], ub: &[f64], rel: f64) -> LpRow {
    let big = row.coefs.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
    let mut out = LpRow { coefs: Vec::with_capacity(row.coefs.len()), sense: row.sense, rhs: row.rhs };
    for &(j, a) in &row.coefs {
        let (lo, hi) = (a * lb[j], a * ub[j]);
        if a.abs() >= rel * big || !lo.is_finite() || !hi.is_finite() {
            out.coefs.push((j, a));
            continue;
        }
        match row.sense {
            RowSense::Ge => out.rhs -= lo.max(hi),
            RowSense::Le => out.rhs -= lo.min(hi),
            RowSense::Eq => out.coefs.push((j, a)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive maximum of the staircase (minus `r`) over ordered subsets.
    fn brute(data: &CutData, p: usize, z: &[f64], r: &[f64]) -> f64 {
        let order = &data.quant.surviving[p];
        let m = order.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 1u32..(1 << m) {
            let seq: Vec<usize> = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| order[b]).collect();
            let v = data.staircase(p, &seq, z) - seq.iter().map(|&j| r[j]).sum::<f64>();
            best = best.max(v);
        }
        best
    }

    fn data_from(h: Vec<f64>) -> CutData {
        let mut order: Vec<usize> = (0..h.len()).filter(|&i| h[i] > 0.0).collect();
        order.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then(a.cmp(&b)));
        CutData {
            quant: QuantileData { k: order.len(), q: vec![0.0], h: vec![h], surviving: vec![order], norms: vec![1.0] },
            xcoef: vec![vec![]],
            offset: vec![0.0],
        }
    }

    #[test]
    fn greedy_and_dp_match_brute_force() {
        let h = vec![5.0, 0.0, 3.0, 3.0, 1.0, -2.0, 4.5];
        let d = data_from(h);
        let z = [0.2, 0.5, 0.9, 0.1, 0.0, 0.3, 0.6];
        let zero = [0.0; 7];
        let seq = mixing_selection(&d, 0, &z);
        assert!((d.staircase(0, &seq, &z) - brute(&d, 0, &z, &zero)).abs() < 1e-12);
        let r = [0.1, 0.0, 0.4, 0.2, 0.05, 0.0, 1.0];
        let (_, v) = path_selection(&d, 0, &z, &r);
        assert!((v - brute(&d, 0, &z, &r)).abs() < 1e-12);
    }

    #[test]
    fn all_ones_selects_nothing() {
        let d = data_from(vec![2.0, 1.0]);
        assert!(mixing_selection(&d, 0, &[1.0, 1.0]).is_empty());
    }

    #[test]
    fn steps_telescope() {
        let d = data_from(vec![5.0, 2.0, 3.5]);
        let steps = d.steps(0, &[0, 2, 1]);
        assert_eq!(steps, vec![1.5, 1.5, 2.0]);
        assert_eq!(steps.iter().sum::<f64>(), 5.0);
    }

    #[test]
    fn support_enumeration() {
        assert_eq!(support_count(6, 1), 7);
        assert_eq!(support_count(10, 2), 56);
        let mut seen = Vec::new();
        for_each_support(3, 2, |s| {
            seen.push(s.to_vec());
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 7);
        assert_eq!(seen[0], Vec::<usize>::new());
        assert_eq!(seen[1], vec![0]);
        assert_eq!(seen[2], vec![0, 1]);
    }
}
