//! Bounded-variable simplex.
//!
//! Every row `i` gets a logical variable `s_i = a_i' x` whose bounds encode
//! the row sense, so the constraint system is `[A | -I] (x, s) = 0` with box
//! bounds on all `n + m` columns. Nonbasic columns rest at a bound (or at zero
//! when free). Cold solves run a composite phase-1/phase-2 primal simplex;
//! warm solves after bound changes or added rows run the dual simplex first
//! and finish with a primal clean-up pass.
//!
//! The basis inverse is kept as a dense LU of the square block formed by the
//! basic structural columns restricted to the rows whose logical is nonbasic,
//! followed by an eta file of product-form updates. The factor is rebuilt
//! every [`REFACTOR_INTERVAL`](crate::tol::REFACTOR_INTERVAL) pivots.

use crate::error::{Error, Result};
use crate::tol;
use serde::{Deserialize, Serialize};

/// Sense of a linear row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl RowSense {
    pub fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }

    /// Activity bounds `[lo, hi]` implied by `rhs`.
    pub fn bounds(self, rhs: f64) -> (f64, f64) {
        match self {
            RowSense::Le => (f64::NEG_INFINITY, rhs),
            RowSense::Ge => (rhs, f64::INFINITY),
            RowSense::Eq => (rhs, rhs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ObjSense {
    #[default]
    Minimize,
    Maximize,
}

/// Sparse row `Σ coefs · x  sense  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A linear program with box bounds on every variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub sense: ObjSense,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::MalformedModel("LP needs at least one variable".into()));
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err(Error::Dimension("bound vectors must match the objective length".into()));
        }
        for (&l, &u) in self.lb.iter().zip(&self.ub) {
            if l > u || l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::BoundOrder { lb: l, ub: u });
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::MalformedModel(format!("row {i} has non-finite rhs")));
            }
            if let Some(&(j, _)) = row.coefs.iter().find(|(j, v)| *j >= n || !v.is_finite()) {
                return Err(Error::MalformedModel(format!("row {i} references bad column {j}")));
            }
        }
        Ok(())
    }

    /// Largest violation of a row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lb[j] - v).max(v - self.ub[j]);
        }
        for row in &self.rows {
            let act: f64 = row.coefs.iter().map(|&(j, a)| a * x[j]).sum();
            let (lo, hi) = row.sense.bounds(row.rhs);
            worst = worst.max(lo - act).max(act - hi);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of an LP solve.
///
/// Duals follow the convention `reduced_costs = c - A' duals`, in the sense of
/// the original objective.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    /// Row multipliers proving infeasibility.
    pub farkas: Option<Vec<f64>>,
    /// Improving direction proving unboundedness.
    pub ray: Option<Vec<f64>>,
}

/// Status of one column in a basis snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column held at zero.
    Zero,
}

/// Basis snapshot: structural columns first, then one logical per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum St {
    Basic(usize),
    Lower,
    Upper,
    Zero,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    col: Vec<(usize, f64)>,
}

/// Dense LU with row pivoting that tolerates (and reports) dependent columns.
/// The factor is kept twice, row-major (`p`) and column-major (`t`), in pivot
/// order, so both triangular sweeps read contiguous memory.
#[derive(Debug, Clone, Default)]
struct DenseLu {
    dim: usize,
    p: Vec<f64>,
    t: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factorizes `a` (row-major `dim x dim`). On rank deficiency returns the
    /// dependent columns and the rows left without a pivot.
    fn factor(mut a: Vec<f64>, dim: usize) -> std::result::Result<Self, (Vec<usize>, Vec<usize>)> {
        let mut pivoted = vec![false; dim];
        let mut perm = Vec::with_capacity(dim);
        let mut dependent = Vec::new();
        for k in 0..dim {
            let mut best = None;
            let mut best_abs = 0.0;
            let mut col_scale = 0.0f64;
            for r in 0..dim {
                if !pivoted[r] {
                    let v = a[r * dim + k].abs();
                    col_scale = col_scale.max(v);
                    if v > best_abs {
                        best_abs = v;
                        best = Some(r);
                    }
                }
            }
            let p = match best {
                Some(p) if best_abs > 1e-11 => p,
                _ => {
                    dependent.push(k);
                    continue;
                }
            };
            let _ = col_scale;
            pivoted[p] = true;
            perm.push(p);
            let piv = a[p * dim + k];
            for r in 0..dim {
                if pivoted[r] {
                    continue;
                }
                let f = a[r * dim + k];
                if f == 0.0 {
                    continue;
                }
                let m = f / piv;
                a[r * dim + k] = m;
                for c in k + 1..dim {
                    let upd = a[p * dim + c];
                    if upd != 0.0 {
                        a[r * dim + c] -= m * upd;
                    }
                }
            }
        }
        if dependent.is_empty() {
            let mut p = vec![0.0; dim * dim];
            let mut t = vec![0.0; dim * dim];
            for (k, &r) in perm.iter().enumerate() {
                p[k * dim..(k + 1) * dim].copy_from_slice(&a[r * dim..(r + 1) * dim]);
                for c in 0..dim {
                    t[c * dim + k] = a[r * dim + c];
                }
            }
            Ok(DenseLu { dim, p, t, perm })
        } else {
            let free_rows = (0..dim).filter(|&r| !pivoted[r]).collect();
            Err((dependent, free_rows))
        }
    }

    /// Solves `A x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y: Vec<f64> = self.perm.iter().map(|&r| b[r]).collect();
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                let col = &self.t[j * n..(j + 1) * n];
                for k in j + 1..n {
                    y[k] -= col[k] * yj;
                }
            }
        }
        for k in (0..n).rev() {
            let col = &self.t[k * n..(k + 1) * n];
            let xk = y[k] / col[k];
            y[k] = xk;
            if xk != 0.0 {
                for j in 0..k {
                    y[j] -= col[j] * xk;
                }
            }
        }
        y
    }

    /// Solves `A' z = c`.
    fn solve_t(&self, c: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut w = c.to_vec();
        for k in 0..n {
            let row = &self.p[k * n..(k + 1) * n];
            let wk = w[k] / row[k];
            w[k] = wk;
            if wk != 0.0 {
                for j in k + 1..n {
                    w[j] -= row[j] * wk;
                }
            }
        }
        for k in (0..n).rev() {
            let vk = w[k];
            if vk != 0.0 {
                let row = &self.p[k * n..(k + 1) * n];
                for j in 0..k {
                    w[j] -= row[j] * vk;
                }
            }
        }
        let mut z = vec![0.0; n];
        for k in 0..n {
            z[self.perm[k]] = w[k];
        }
        z
    }
}

enum Phase {
    Optimal,
    Infeasible(Vec<f64>),
    Unbounded(Vec<f64>),
}

enum DualOutcome {
    Optimal,
    Infeasible(Vec<f64>),
    NotDualFeasible,
}

/// Stateful simplex solver supporting warm starts.
#[derive(Debug, Clone)]
pub struct Simplex {
    n: usize,
    m: usize,
    sign: f64,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    stat: Vec<St>,
    head: Vec<usize>,
    x: Vec<f64>,
    // base factor
    lu: DenseLu,
    fac_struct: Vec<(usize, usize)>,
    fac_rs_rows: Vec<usize>,
    fac_logical_pos: Vec<Option<usize>>,
    etas: Vec<Eta>,
    iterations: usize,
    cap: usize,
    degenerate_streak: usize,
}

impl Simplex {
    pub fn new(problem: &LpProblem) -> Result<Self> {
        problem.validate()?;
        let n = problem.num_vars();
        let sign = match problem.sense {
            ObjSense::Minimize => 1.0,
            ObjSense::Maximize => -1.0,
        };
        let mut s = Simplex {
            n,
            m: 0,
            sign,
            cost: problem.objective.iter().map(|c| sign * c).collect(),
            lb: problem.lb.clone(),
            ub: problem.ub.clone(),
            cols: vec![Vec::new(); n],
            rows: Vec::new(),
            stat: Vec::with_capacity(n),
            head: Vec::new(),
            x: vec![0.0; n],
            lu: DenseLu::default(),
            fac_struct: Vec::new(),
            fac_rs_rows: Vec::new(),
            fac_logical_pos: Vec::new(),
            etas: Vec::new(),
            iterations: 0,
            cap: 0,
            degenerate_streak: 0,
        };
        for j in 0..n {
            let st = s.default_status(j);
            s.stat.push(st);
            s.x[j] = s.nonbasic_value(j, st);
        }
        for row in &problem.rows {
            s.push_row(row);
        }
        Ok(s)
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    fn default_status(&self, j: usize) -> St {
        let (l, u) = (self.lb[j], self.ub[j]);
        let c = if j < self.n { self.cost[j] } else { 0.0 };
        match (l.is_finite(), u.is_finite()) {
            (true, true) if c < 0.0 => St::Upper,
            (true, _) => St::Lower,
            (false, true) => St::Upper,
            (false, false) => St::Zero,
        }
    }

    fn nonbasic_value(&self, j: usize, st: St) -> f64 {
        match st {
            St::Lower => self.lb[j],
            St::Upper => self.ub[j],
            St::Zero => 0.0,
            St::Basic(_) => self.x[j],
        }
    }

    fn push_row(&mut self, row: &LpRow) {
        let i = self.m;
        let mut coefs: Vec<(usize, f64)> = row.coefs.iter().copied().filter(|&(_, v)| v != 0.0).collect();
        coefs.sort_by_key(|&(j, _)| j);
        // merge duplicate columns
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (j, v) in coefs {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        for &(j, v) in &merged {
            self.cols[j].push((i, v));
        }
        let act: f64 = merged.iter().map(|&(j, v)| v * self.x[j]).sum();
        self.rows.push(merged);
        let (lo, hi) = row.sense.bounds(row.rhs);
        self.lb.push(lo);
        self.ub.push(hi);
        self.x.push(act);
        self.stat.push(St::Basic(self.head.len()));
        self.head.push(self.n + i);
        self.m += 1;
        // the factor no longer matches the basis dimension
        self.fac_struct.clear();
        self.etas.clear();
        self.lu = DenseLu::default();
    }

    /// Appends a row; its logical enters the basis, so the current basis stays
    /// dual feasible.
    pub fn add_row(&mut self, row: &LpRow) -> Result<()> {
        if !row.rhs.is_finite() || row.coefs.iter().any(|&(j, v)| j >= self.n || !v.is_finite()) {
            return Err(Error::MalformedModel("bad cut row".into()));
        }
        self.push_row(row);
        Ok(())
    }

    /// Changes the bounds of structural column `j`.
    pub fn set_var_bounds(&mut self, j: usize, lb: f64, ub: f64) -> Result<()> {
        if j >= self.n {
            return Err(Error::Dimension(format!("column {j} out of range")));
        }
        if lb > ub {
            return Err(Error::BoundOrder { lb, ub });
        }
        self.lb[j] = lb;
        self.ub[j] = ub;
        if !matches!(self.stat[j], St::Basic(_)) {
            let st = match self.stat[j] {
                St::Lower if lb.is_finite() => St::Lower,
                St::Upper if ub.is_finite() => St::Upper,
                _ if lb.is_finite() => St::Lower,
                _ if ub.is_finite() => St::Upper,
                _ => St::Zero,
            };
            self.stat[j] = st;
            self.x[j] = self.nonbasic_value(j, st);
        }
        Ok(())
    }

    pub fn var_bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    pub fn basis(&self) -> Basis {
        Basis {
            status: self
                .stat
                .iter()
                .map(|s| match s {
                    St::Basic(_) => VarStatus::Basic,
                    St::Lower => VarStatus::AtLower,
                    St::Upper => VarStatus::AtUpper,
                    St::Zero => VarStatus::Zero,
                })
                .collect(),
        }
    }

    /// Installs a basis snapshot. Snapshots taken before rows were added are
    /// extended with basic logicals. Returns `false` (and keeps a slack basis)
    /// when the snapshot does not fit.
    pub fn set_basis(&mut self, basis: &Basis) -> bool {
        let total = self.n + self.m;
        let given = basis.status.len();
        if given < self.n || given > total {
            self.slack_basis();
            return false;
        }
        let mut status: Vec<VarStatus> = basis.status.clone();
        status.resize(total, VarStatus::Basic);
        let basics = status.iter().filter(|s| **s == VarStatus::Basic).count();
        if basics != self.m {
            self.slack_basis();
            return false;
        }
        self.head.clear();
        for (j, s) in status.iter().enumerate() {
            let st = match s {
                VarStatus::Basic => {
                    self.head.push(j);
                    St::Basic(self.head.len() - 1)
                }
                VarStatus::AtLower if self.lb[j].is_finite() => St::Lower,
                VarStatus::AtUpper if self.ub[j].is_finite() => St::Upper,
                VarStatus::Zero if !self.lb[j].is_finite() && !self.ub[j].is_finite() => St::Zero,
                _ => self.default_status(j),
            };
            self.stat[j] = st;
            if !matches!(st, St::Basic(_)) {
                self.x[j] = self.nonbasic_value(j, st);
            }
        }
        self.fac_struct.clear();
        self.etas.clear();
        true
    }

    fn slack_basis(&mut self) {
        self.head.clear();
        for j in 0..self.n {
            let st = self.default_status(j);
            self.stat[j] = st;
            self.x[j] = self.nonbasic_value(j, st);
        }
        for i in 0..self.m {
            self.stat[self.n + i] = St::Basic(i);
            self.head.push(self.n + i);
        }
        self.fac_struct.clear();
        self.etas.clear();
    }

    // ---- linear algebra -------------------------------------------------

    fn refactor(&mut self) {
        loop {
            let mut fac_struct = Vec::new();
            let mut fac_logical_pos = vec![None; self.m];
            for (pos, &v) in self.head.iter().enumerate() {
                if v < self.n {
                    fac_struct.push((pos, v));
                } else {
                    fac_logical_pos[v - self.n] = Some(pos);
                }
            }
            let rs_rows: Vec<usize> = (0..self.m).filter(|&i| fac_logical_pos[i].is_none()).collect();
            let s = fac_struct.len();
            debug_assert_eq!(s, rs_rows.len());
            let mut row_in_rs = vec![usize::MAX; self.m];
            for (r, &i) in rs_rows.iter().enumerate() {
                row_in_rs[i] = r;
            }
            let mut dense = vec![0.0; s * s];
            for (c, &(_, var)) in fac_struct.iter().enumerate() {
                for &(i, a) in &self.cols[var] {
                    let r = row_in_rs[i];
                    if r != usize::MAX {
                        dense[r * s + c] = a;
                    }
                }
            }
            match DenseLu::factor(dense, s) {
                Ok(lu) => {
                    self.lu = lu;
                    self.fac_struct = fac_struct;
                    self.fac_rs_rows = rs_rows;
                    self.fac_logical_pos = fac_logical_pos;
                    self.etas.clear();
                    self.recompute_primal();
                    return;
                }
                Err((dep_cols, free_rows)) => {
                    // swap dependent structurals for the logicals of unpivoted rows
                    for (c, r) in dep_cols.into_iter().zip(free_rows) {
                        let (pos, var) = fac_struct[c];
                        let row = rs_rows[r];
                        let st = self.default_status(var);
                        self.stat[var] = st;
                        self.x[var] = self.nonbasic_value(var, st);
                        self.head[pos] = self.n + row;
                        self.stat[self.n + row] = St::Basic(pos);
                    }
                }
            }
        }
    }

    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            self.cols[j].clone()
        } else {
            vec![(j - self.n, -1.0)]
        }
    }

    /// `B^{-1} v` for `v` indexed by rows; result indexed by basis positions.
    fn ftran(&self, v: &[f64]) -> Vec<f64> {
        let s = self.fac_struct.len();
        let rhs: Vec<f64> = self.fac_rs_rows.iter().map(|&i| v[i]).collect();
        let ws = if s > 0 { self.lu.solve(&rhs) } else { Vec::new() };
        let mut out = vec![0.0; self.m];
        let mut acc = vec![0.0; self.m];
        for (c, &(pos, var)) in self.fac_struct.iter().enumerate() {
            out[pos] = ws[c];
            if ws[c] != 0.0 {
                for &(i, a) in &self.cols[var] {
                    if self.fac_logical_pos[i].is_some() {
                        acc[i] += a * ws[c];
                    }
                }
            }
        }
        for (i, lp) in self.fac_logical_pos.iter().enumerate() {
            if let Some(pos) = lp {
                out[*pos] = acc[i] - v[i];
            }
        }
        for eta in &self.etas {
            let wr = out[eta.pos] / eta.pivot;
            if wr != 0.0 {
                for &(i, a) in &eta.col {
                    out[i] -= a * wr;
                }
            }
            out[eta.pos] = wr;
        }
        out
    }

    fn ftran_col(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        for (i, a) in self.column(j) {
            v[i] = a;
        }
        self.ftran(&v)
    }

    /// `B^{-T} c` for `c` indexed by basis positions; result indexed by rows.
    fn btran(&self, c: &[f64]) -> Vec<f64> {
        let mut c = c.to_vec();
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for &(i, a) in &eta.col {
                s -= a * c[i];
            }
            c[eta.pos] = s / eta.pivot;
        }
        let mut y = vec![0.0; self.m];
        for (i, lp) in self.fac_logical_pos.iter().enumerate() {
            if let Some(pos) = lp {
                y[i] = -c[*pos];
            }
        }
        let s = self.fac_struct.len();
        if s > 0 {
            let rhs: Vec<f64> = self
                .fac_struct
                .iter()
                .map(|&(pos, var)| {
                    let mut r = c[pos];
                    for &(i, a) in &self.cols[var] {
                        if self.fac_logical_pos[i].is_some() {
                            r -= a * y[i];
                        }
                    }
                    r
                })
                .collect();
            let ys = self.lu.solve_t(&rhs);
            for (r, &i) in self.fac_rs_rows.iter().enumerate() {
                y[i] = ys[r];
            }
        }
        y
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * y[i]).sum()
        } else {
            -y[j - self.n]
        }
    }

    fn recompute_primal(&mut self) {
        let mut v = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if matches!(self.stat[j], St::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < self.n {
                for &(i, a) in &self.cols[j] {
                    v[i] -= a * xj;
                }
            } else {
                v[j - self.n] += xj;
            }
        }
        let xb = self.ftran(&v);
        for (pos, &var) in self.head.iter().enumerate() {
            self.x[var] = xb[pos];
        }
    }

    fn pivot(&mut self, pos: usize, entering: usize, alpha: Vec<f64>, leaving_status: St) {
        let leaving = self.head[pos];
        self.stat[leaving] = leaving_status;
        self.x[leaving] = self.nonbasic_value(leaving, leaving_status);
        self.head[pos] = entering;
        self.stat[entering] = St::Basic(pos);
        let col = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta { pos, pivot: alpha[pos], col });
        if self.etas.len() >= tol::REFACTOR_INTERVAL {
            self.refactor();
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        (self.lb[j] - v).max(v - self.ub[j]).max(0.0)
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.head.iter().map(|&j| self.infeasibility(j)).fold(0.0, f64::max)
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lb[j] == self.ub[j]
    }

    fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n + self.m)
            .map(|j| {
                if matches!(self.stat[j], St::Basic(_)) {
                    0.0
                } else {
                    let c = if j < self.n { self.cost[j] } else { 0.0 };
                    c - self.col_dot(j, y)
                }
            })
            .collect()
    }

    fn phase2_duals(&self) -> Vec<f64> {
        let cb: Vec<f64> = self
            .head
            .iter()
            .map(|&j| if j < self.n { self.cost[j] } else { 0.0 })
            .collect();
        self.btran(&cb)
    }

    fn dual_violation(&self, j: usize, d: f64) -> f64 {
        if self.is_fixed(j) {
            return 0.0;
        }
        match self.stat[j] {
            St::Basic(_) => 0.0,
            St::Lower => (-d).max(0.0),
            St::Upper => d.max(0.0),
            St::Zero => d.abs(),
        }
    }

    fn iteration_cap(&self) -> usize {
        20_000usize.max(50 * (self.n + self.m))
    }

    fn warm_cap(&self) -> usize {
        2_000usize.max(5 * (self.n + self.m))
    }

    fn tick(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.cap {
            Err(Error::LpStall { iterations: self.iterations })
        } else {
            Ok(())
        }
    }

    // ---- primal simplex -------------------------------------------------

    fn primal(&mut self) -> Result<Phase> {
        let feas = tol::PRIMAL_FEAS;
        // columns whose improving direction turned out to be round-off
        let mut skip: Vec<usize> = Vec::new();
        // Harris steps may leave basics up to `feas` outside their bounds; once
        // feasible, only a clearly larger violation sends the run back to phase 1
        let mut reached_phase2 = false;
        // tiny non-degenerate steps can still cycle under the relaxed ratio test,
        // so stalling is judged by the phase objective itself
        let (mut best_merit, mut stale, mut last_phase1) = (f64::INFINITY, 0usize, None);
        loop {
            self.tick()?;
            let inf = self.max_primal_infeasibility();
            let phase1 = inf > if reached_phase2 { 10.0 * feas } else { feas };
            reached_phase2 |= !phase1;
            let merit = if phase1 {
                self.head.iter().map(|&j| self.infeasibility(j)).filter(|&v| v > feas).sum::<f64>()
            } else {
                self.cost.iter().zip(&self.x).map(|(c, v)| c * v).sum::<f64>()
            };
            if last_phase1 != Some(phase1) || merit < best_merit - 1e-9 * (1.0 + best_merit.abs()) {
                best_merit = merit;
                stale = 0;
            } else {
                stale += 1;
            }
            last_phase1 = Some(phase1);
            let cb: Vec<f64> = self
                .head
                .iter()
                .map(|&j| {
                    if phase1 {
                        let v = self.x[j];
                        if v < self.lb[j] - feas {
                            -1.0
                        } else if v > self.ub[j] + feas {
                            1.0
                        } else {
                            0.0
                        }
                    } else if j < self.n {
                        self.cost[j]
                    } else {
                        0.0
                    }
                })
                .collect();
            let y = self.btran(&cb);
            let bland = self.degenerate_streak > tol::DEGENERATE_STREAK || stale > tol::DEGENERATE_STREAK;

            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.n + self.m {
                if matches!(self.stat[j], St::Basic(_)) || self.is_fixed(j) || skip.contains(&j) {
                    continue;
                }
                let c = if phase1 || j >= self.n { 0.0 } else { self.cost[j] };
                let d = c - self.col_dot(j, &y);
                let score = match self.stat[j] {
                    St::Lower => -d,
                    St::Upper => d,
                    St::Zero => d.abs(),
                    St::Basic(_) => unreachable!(),
                };
                if score > tol::DUAL_FEAS {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if score > best {
                        best = score;
                        entering = Some((j, d));
                    }
                }
            }
            let Some((q, dq)) = entering else {
                if phase1 {
                    return Ok(Phase::Infeasible(y));
                }
                return Ok(Phase::Optimal);
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran_col(q);

            // Harris two-pass ratio test
            let mut limits: Vec<(usize, f64, f64, St)> = Vec::new(); // (pos, exact ratio, |alpha|, leaving status)
            for (pos, &a) in alpha.iter().enumerate() {
                if a.abs() <= tol::PIVOT {
                    continue;
                }
                let var = self.head[pos];
                let delta = -dir * a;
                let v = self.x[var];
                let (l, u) = (self.lb[var], self.ub[var]);
                let target = if delta < 0.0 {
                    if phase1 && v > u + feas {
                        Some((u, St::Upper))
                    } else if phase1 && v < l - feas {
                        None
                    } else if l.is_finite() {
                        Some((l, St::Lower))
                    } else {
                        None
                    }
                } else if phase1 && v < l - feas {
                    Some((l, St::Lower))
                } else if phase1 && v > u + feas {
                    None
                } else if u.is_finite() {
                    Some((u, St::Upper))
                } else {
                    None
                };
                if let Some((bound, st)) = target {
                    let ratio = (bound - v) / delta;
                    limits.push((pos, ratio.max(0.0), a.abs(), st));
                }
            }
            let range = self.ub[q] - self.lb[q];
            let tmax = limits
                .iter()
                .map(|&(_, r, aa, _)| r + feas / aa)
                .fold(f64::INFINITY, f64::min);
            let harris = limits.iter().filter(|&&(_, r, _, _)| r <= tmax);
            let chosen = if bland {
                // lowest index among the well-sized pivots of the Harris set
                let big = harris.clone().map(|c| c.2).fold(0.0, f64::max);
                harris
                    .filter(|c| c.2 >= 0.1 * big)
                    .min_by(|a, b| self.head[a.0].cmp(&self.head[b.0]))
                    .copied()
            } else {
                harris.max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0))).copied()
            };
            let row_step = chosen.map_or(f64::INFINITY, |c| c.1);
            if range.is_finite() && range <= row_step {
                // bound flip
                let step = range;
                self.apply_step(q, dir, step, &alpha);
                self.stat[q] = if dir > 0.0 { St::Upper } else { St::Lower };
                self.x[q] = self.nonbasic_value(q, self.stat[q]);
                self.note_step(step);
                continue;
            }
            let Some((pos, step, _, leave_st)) = chosen else {
                if phase1 || !self.etas.is_empty() {
                    // cannot happen with exact arithmetic; refresh and retry
                    self.refactor();
                    continue;
                }
                let mut ray = vec![0.0; self.n];
                if q < self.n {
                    ray[q] = dir;
                }
                for (p, &a) in alpha.iter().enumerate() {
                    let var = self.head[p];
                    if var < self.n {
                        ray[var] = -dir * a;
                    }
                }
                let gain: f64 = ray.iter().zip(&self.cost).map(|(r, c)| r * c).sum();
                if gain >= -tol::DUAL_FEAS {
                    skip.push(q);
                    continue;
                }
                return Ok(Phase::Unbounded(ray));
            };
            self.apply_step(q, dir, step, &alpha);
            self.pivot(pos, q, alpha, leave_st);
            self.note_step(step);
        }
    }

    fn apply_step(&mut self, q: usize, dir: f64, step: f64, alpha: &[f64]) {
        if step == 0.0 {
            return;
        }
        self.x[q] += dir * step;
        for (pos, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let var = self.head[pos];
                self.x[var] -= dir * a * step;
            }
        }
    }

    fn note_step(&mut self, step: f64) {
        if step <= 1e-12 {
            self.degenerate_streak += 1;
        } else {
            self.degenerate_streak = 0;
        }
    }

    // ---- dual simplex ---------------------------------------------------

    fn dual(&mut self) -> Result<DualOutcome> {
        let feas = tol::PRIMAL_FEAS;
        let mut y: Vec<f64> = Vec::new();
        // Devex reference weights by basis position
        let mut w = vec![1.0; self.m];
        loop {
            if self.etas.is_empty() || y.is_empty() {
                y = self.phase2_duals();
            }
            let d = self.reduced_costs(&y);
            if (0..self.n + self.m).any(|j| self.dual_violation(j, d[j]) > tol::DUAL_FEAS) {
                return Ok(DualOutcome::NotDualFeasible);
            }
            let bland = self.degenerate_streak > tol::DEGENERATE_STREAK;
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = 0.0;
            for (pos, &var) in self.head.iter().enumerate() {
                let inf = self.infeasibility(var);
                if inf > feas {
                    if bland {
                        if leave.is_none_or(|(p, _)| var < self.head[p]) {
                            leave = Some((pos, inf));
                        }
                    } else if inf * inf / w[pos] > worst {
                        worst = inf * inf / w[pos];
                        leave = Some((pos, inf));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(DualOutcome::Optimal);
            };
            self.tick()?;
            let var_r = self.head[r];
            let below = self.x[var_r] < self.lb[var_r];
            let target = if below { self.lb[var_r] } else { self.ub[var_r] };
            let mut er = vec![0.0; self.m];
            er[r] = 1.0;
            let rho = self.btran(&er);

            let mut cands: Vec<(usize, f64, f64)> = Vec::new(); // (j, ratio, alpha_rj)
            for j in 0..self.n + self.m {
                if matches!(self.stat[j], St::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                let a = self.col_dot(j, &rho);
                if a.abs() <= tol::PIVOT {
                    continue;
                }
                // x_r moves by -a per unit increase of x_j
                let ok = match self.stat[j] {
                    St::Lower => (below && a < 0.0) || (!below && a > 0.0),
                    St::Upper => (below && a > 0.0) || (!below && a < 0.0),
                    St::Zero => true,
                    St::Basic(_) => false,
                };
                if ok {
                    cands.push((j, d[j].abs() / a.abs(), a));
                }
            }
            if cands.is_empty() {
                if !self.etas.is_empty() {
                    self.refactor();
                    y.clear();
                    continue;
                }
                if self.certify_row_infeasible(&rho, var_r, below) {
                    return Ok(DualOutcome::Infeasible(rho));
                }
                // small pivots were skipped; let the primal decide
                return Ok(DualOutcome::NotDualFeasible);
            }
            let tmax = cands
                .iter()
                .map(|&(_, r, a)| r + tol::DUAL_FEAS / a.abs())
                .fold(f64::INFINITY, f64::min);
            let harris = cands.iter().filter(|c| c.1 <= tmax);
            let q = if bland {
                let big = harris.clone().map(|c| c.2.abs()).fold(0.0, f64::max);
                harris.filter(|c| c.2.abs() >= 0.1 * big).map(|c| c.0).min().unwrap()
            } else {
                harris.max_by(|a, b| a.2.abs().total_cmp(&b.2.abs()).then(b.0.cmp(&a.0))).unwrap().0
            };
            let alpha = self.ftran_col(q);
            if alpha[r].abs() <= tol::PIVOT {
                self.refactor();
                self.degenerate_streak += 1;
                continue;
            }
            let delta = (self.x[var_r] - target) / alpha[r];
            if delta != 0.0 {
                self.x[q] += delta;
                for (pos, &a) in alpha.iter().enumerate() {
                    if a != 0.0 {
                        let v = self.head[pos];
                        self.x[v] -= a * delta;
                    }
                }
            }
            let dual_step = d[q].abs();
            let theta_d = d[q] / alpha[r];
            for (yi, ri) in y.iter_mut().zip(&rho) {
                *yi += theta_d * ri;
            }
            let wr = w[r];
            for (pos, &a) in alpha.iter().enumerate() {
                if pos != r && a != 0.0 {
                    let ratio = a / alpha[r];
                    w[pos] = w[pos].max(ratio * ratio * wr);
                }
            }
            w[r] = (wr / (alpha[r] * alpha[r])).max(1.0);
            let leave_st = if below { St::Lower } else { St::Upper };
            self.pivot(r, q, alpha, leave_st);
            self.note_step(dual_step);
        }
    }

    /// Checks that row `var_r` of the tableau cannot reach its violated bound
    /// for any values of the nonbasic columns within their boxes.
    fn certify_row_infeasible(&self, rho: &[f64], var_r: usize, below: bool) -> bool {
        let mut reach = 0.0;
        for j in 0..self.n + self.m {
            if matches!(self.stat[j], St::Basic(_)) {
                continue;
            }
            let a = self.col_dot(j, rho);
            if a == 0.0 {
                continue;
            }
            // x_r = -Σ a_j x_j
            let coef = -a;
            let want_high = below;
            let bound = if (coef > 0.0) == want_high { self.ub[j] } else { self.lb[j] };
            if !bound.is_finite() {
                return false;
            }
            reach += coef * bound;
        }
        if below {
            reach < self.lb[var_r] - tol::PRIMAL_FEAS
        } else {
            reach > self.ub[var_r] + tol::PRIMAL_FEAS
        }
    }

    // ---- driver ---------------------------------------------------------

    /// Solves from the current basis, restarting once from a slack basis if
    /// the warm start stalls.
    pub fn solve(&mut self) -> Result<LpSolution> {
        match self.solve_from_basis(self.warm_cap()) {
            Err(Error::LpStall { iterations }) => {
                self.slack_basis();
                let mut sol = self.solve_from_basis(self.iteration_cap())?;
                sol.iterations += iterations;
                Ok(sol)
            }
            other => other,
        }
    }

    fn solve_from_basis(&mut self, cap: usize) -> Result<LpSolution> {
        self.cap = cap;
        self.iterations = 0;
        self.degenerate_streak = 0;
        self.refactor();
        if self.max_primal_infeasibility() > tol::PRIMAL_FEAS {
            if let DualOutcome::Infeasible(rho) = self.dual()? {
                return Ok(self.finish(LpStatus::Infeasible, Some(rho), None));
            }
        }
        let mut rounds = 0;
        loop {
            let phase = self.primal()?;
            self.refactor();
            match phase {
                Phase::Infeasible(y) => return Ok(self.finish(LpStatus::Infeasible, Some(y), None)),
                Phase::Unbounded(ray) => return Ok(self.finish(LpStatus::Unbounded, None, Some(ray))),
                Phase::Optimal => {
                    if self.max_primal_infeasibility() <= tol::PRIMAL_FEAS || rounds >= 3 {
                        return Ok(self.finish(LpStatus::Optimal, None, None));
                    }
                    rounds += 1;
                }
            }
        }
    }

    fn finish(&self, status: LpStatus, farkas: Option<Vec<f64>>, ray: Option<Vec<f64>>) -> LpSolution {
        let y = self.phase2_duals();
        let d = self.reduced_costs(&y);
        let x: Vec<f64> = self.x[..self.n].to_vec();
        let objective = self.sign * self.cost.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
        LpSolution {
            status,
            objective,
            duals: y.iter().map(|v| self.sign * v).collect(),
            reduced_costs: d[..self.n].iter().map(|v| self.sign * v).collect(),
            x,
            iterations: self.iterations,
            farkas,
            ray,
        }
    }
}

/// One-shot cold solve.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    Simplex::new(problem)?.solve()
}

/// Reads a fixed-format MPS subset (NAME, ROWS, COLUMNS, RHS, BOUNDS, ENDATA).
/// The first `N` row is the objective, which is minimized.
pub fn read_mps(text: &str) -> Result<LpProblem> {
    use std::collections::HashMap;
    #[derive(PartialEq)]
    enum Sec {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
    }
    let mut sec = Sec::None;
    let mut obj_name: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<LpRow> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut lp = LpProblem::default();
    let err = |line: usize, msg: &str| Error::Mps { line, msg: msg.to_string() };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            sec = match toks[0] {
                "NAME" => Sec::None,
                "ROWS" => Sec::Rows,
                "COLUMNS" => Sec::Columns,
                "RHS" => Sec::Rhs,
                "BOUNDS" => Sec::Bounds,
                "ENDATA" => break,
                other => return Err(err(line, &format!("unknown section {other}"))),
            };
            continue;
        }
        match sec {
            Sec::Rows => {
                if toks.len() != 2 {
                    return Err(err(line, "ROWS entry needs type and name"));
                }
                let sense = match toks[0] {
                    "N" => {
                        if obj_name.is_none() {
                            obj_name = Some(toks[1].to_string());
                        }
                        continue;
                    }
                    "L" => RowSense::Le,
                    "G" => RowSense::Ge,
                    "E" => RowSense::Eq,
                    t => return Err(err(line, &format!("bad row type {t}"))),
                };
                row_index.insert(toks[1].to_string(), rows.len());
                rows.push(LpRow { coefs: Vec::new(), sense, rhs: 0.0 });
            }
            Sec::Columns => {
                if toks.contains(&"'MARKER'") {
                    continue;
                }
                if toks.len() < 3 || toks.len().is_multiple_of(2) {
                    return Err(err(line, "COLUMNS entry needs column and row/value pairs"));
                }
                let j = *col_index.entry(toks[0].to_string()).or_insert_with(|| {
                    lp.objective.push(0.0);
                    lp.lb.push(0.0);
                    lp.ub.push(f64::INFINITY);
                    lp.objective.len() - 1
                });
                for pair in toks[1..].chunks(2) {
                    let v: f64 = pair[1].parse().map_err(|_| err(line, "bad number"))?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        lp.objective[j] = v;
                    } else {
                        let &i = row_index.get(pair[0]).ok_or_else(|| err(line, "unknown row"))?;
                        rows[i].coefs.push((j, v));
                    }
                }
            }
            Sec::Rhs => {
                if toks.len() < 3 || toks.len().is_multiple_of(2) {
                    return Err(err(line, "RHS entry needs set and row/value pairs"));
                }
                for pair in toks[1..].chunks(2) {
                    let v: f64 = pair[1].parse().map_err(|_| err(line, "bad number"))?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        continue;
                    }
                    let &i = row_index.get(pair[0]).ok_or_else(|| err(line, "unknown row"))?;
                    rows[i].rhs = v;
                }
            }
            Sec::Bounds => {
                if toks.len() < 3 {
                    return Err(err(line, "BOUNDS entry too short"));
                }
                let &j = col_index.get(toks[2]).ok_or_else(|| err(line, "unknown column"))?;
                let val = || -> Result<f64> {
                    toks.get(3)
                        .ok_or_else(|| err(line, "missing bound value"))?
                        .parse()
                        .map_err(|_| err(line, "bad number"))
                };
                match toks[0] {
                    "UP" => lp.ub[j] = val()?,
                    "LO" => lp.lb[j] = val()?,
                    "FX" => {
                        let v = val()?;
                        lp.lb[j] = v;
                        lp.ub[j] = v;
                    }
                    "FR" => {
                        lp.lb[j] = f64::NEG_INFINITY;
                        lp.ub[j] = f64::INFINITY;
                    }
                    "MI" => lp.lb[j] = f64::NEG_INFINITY,
                    "PL" => lp.ub[j] = f64::INFINITY,
                    "BV" => {
                        lp.lb[j] = 0.0;
                        lp.ub[j] = 1.0;
                    }
                    t => return Err(err(line, &format!("unsupported bound type {t}"))),
                }
            }
            Sec::None => return Err(err(line, "data outside a section")),
        }
    }
    lp.rows = rows;
    Ok(lp)
}
