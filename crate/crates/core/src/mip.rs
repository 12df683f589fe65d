//! Mixed-integer model representation shared by the formulation builders,
//! the separators and the branch-and-cut driver.

use crate::error::{Error, Result};
use crate::lp::{LpProblem, LpRow, ObjSense, RowSense};
use crate::numfmt::fmt_g;
use crate::tol;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Role of a variable inside a chance-constrained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    /// Decision vector `x`.
    X,
    /// Scenario indicators `z`.
    Z,
    /// Per-scenario slack `r`.
    R,
    /// Scalar `t`.
    T,
    /// Radius variable used by the largest-feasible-radius model.
    Theta,
    /// Anything else.
    Aux,
}

impl Block {
    const ALL: [Block; 6] = [Block::X, Block::Z, Block::R, Block::T, Block::Theta, Block::Aux];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Block::X => "x",
            Block::Z => "z",
            Block::R => "r",
            Block::T => "t",
            Block::Theta => "theta",
            Block::Aux => "aux",
        }
    }

    fn scalar(self) -> bool {
        matches!(self, Block::T | Block::Theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub block: Block,
    /// Position inside its block.
    pub index: usize,
}

/// A labelled linear row.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violates the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        let (lo, hi) = self.sense.bounds(self.rhs);
        (lo - act).max(act - hi).max(0.0)
    }

    pub fn to_lp_row(&self) -> LpRow {
        LpRow { coefs: self.coefs.clone(), sense: self.sense, rhs: self.rhs }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MipModel {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    pub sense: ObjSense,
    blocks: [Vec<usize>; 6],
}

impl MipModel {
    pub fn new(sense: ObjSense) -> Self {
        MipModel { sense, ..Default::default() }
    }

    /// Appends a variable to `block`; returns its global column index.
    pub fn add_var(&mut self, block: Block, kind: VarKind, lb: f64, ub: f64) -> usize {
        let index = self.blocks[block.slot()].len();
        let name = if block.scalar() {
            block.prefix().to_string()
        } else {
            format!("{}[{index}]", block.prefix())
        };
        let id = self.vars.len();
        self.vars.push(Variable { name, kind, lb, ub, block, index });
        self.blocks[block.slot()].push(id);
        id
    }

    pub fn add_constraint(&mut self, label: impl Into<String>, coefs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.constraints.push(Constraint { label: label.into(), coefs, sense, rhs });
    }

    pub fn set_objective(&mut self, coefs: Vec<(usize, f64)>) {
        self.objective = coefs;
    }

    /// Global indices of the variables of `block`, in block order.
    pub fn block(&self, block: Block) -> &[usize] {
        &self.blocks[block.slot()]
    }

    pub fn var(&self, block: Block, index: usize) -> Option<usize> {
        self.blocks[block.slot()].get(index).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Binary).map(|(j, _)| j)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for v in &self.vars {
            if v.lb > v.ub || v.lb.is_nan() || v.ub.is_nan() {
                return Err(Error::BoundOrder { lb: v.lb, ub: v.ub });
            }
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                return Err(Error::MalformedModel(format!("binary {} has bounds outside [0, 1]", v.name)));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(Error::MalformedModel(format!("row {} has non-finite rhs", c.label)));
            }
            if c.coefs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::MalformedModel(format!("row {} references a bad column", c.label)));
            }
        }
        if self.objective.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
            return Err(Error::MalformedModel("objective references a bad column".into()));
        }
        Ok(())
    }

    pub fn objective_dense(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.vars.len()];
        for &(j, a) in &self.objective {
            c[j] += a;
        }
        c
    }

    /// LP relaxation.
    pub fn to_lp(&self) -> LpProblem {
        LpProblem {
            objective: self.objective_dense(),
            sense: self.sense,
            lb: self.vars.iter().map(|v| v.lb).collect(),
            ub: self.vars.iter().map(|v| v.ub).collect(),
            rows: self.constraints.iter().map(Constraint::to_lp_row).collect(),
        }
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Binary columns are within [`tol::INTEGRALITY`] of 0 or 1.
    pub fn is_integral(&self, values: &[f64]) -> bool {
        self.binaries().all(|j| {
            let v = values[j];
            v.min(1.0 - v).abs() <= tol::INTEGRALITY || (v - v.round()).abs() <= tol::INTEGRALITY
        })
    }

    /// Largest row or bound violation.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lb - x).max(x - v.ub);
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(values));
        }
        worst
    }

    /// Plain-text dump: objective, variable blocks, bounds, then one line per
    /// row. Numbers use 12 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let verb = match self.sense {
            ObjSense::Minimize => "minimize",
            ObjSense::Maximize => "maximize",
        };
        let _ = writeln!(out, "{verb}: {}", self.terms(&self.objective));
        for b in Block::ALL {
            let ids = self.block(b);
            if ids.is_empty() {
                continue;
            }
            let kind = match self.vars[ids[0]].kind {
                VarKind::Binary => "binary",
                VarKind::Continuous => "continuous",
            };
            let _ = writeln!(out, "block {}: {} {kind}", b.prefix(), ids.len());
        }
        for v in &self.vars {
            let _ = writeln!(out, "bound: {} <= {} <= {}", fmt_g(v.lb, 12), v.name, fmt_g(v.ub, 12));
        }
        for c in &self.constraints {
            let _ = writeln!(out, "{}: {} {} {}", c.label, self.terms(&c.coefs), c.sense.symbol(), fmt_g(c.rhs, 12));
        }
        out
    }

    fn terms(&self, coefs: &[(usize, f64)]) -> String {
        if coefs.is_empty() {
            return "0".into();
        }
        coefs
            .iter()
            .map(|&(j, a)| format!("{}*{}", fmt_g(a, 12), self.vars[j].name))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_and_names() {
        let mut m = MipModel::new(ObjSense::Minimize);
        let x0 = m.add_var(Block::X, VarKind::Continuous, 0.0, 1.0);
        let z0 = m.add_var(Block::Z, VarKind::Binary, 0.0, 1.0);
        let x1 = m.add_var(Block::X, VarKind::Continuous, 0.0, f64::INFINITY);
        let t = m.add_var(Block::T, VarKind::Continuous, 0.0, f64::INFINITY);
        assert_eq!(m.block(Block::X), &[x0, x1]);
        assert_eq!(m.var(Block::Z, 0), Some(z0));
        assert_eq!(m.vars[x1].name, "x[1]");
        assert_eq!(m.vars[t].name, "t");
        m.add_constraint("knapsack", vec![(z0, 1.0)], RowSense::Le, 0.0);
        m.set_objective(vec![(x0, 1.0), (x1, -2.0)]);
        m.validate().unwrap();
        let dump = m.dump();
        assert!(dump.contains("minimize: 1*x[0] + -2*x[1]"));
        assert!(dump.contains("knapsack: 1*z[0] <= 0"));
        assert!(dump.contains("bound: 0 <= x[1] <= inf"));
        assert!(m.is_integral(&[0.5, 1.0 - 1e-8, 0.0, 0.0]));
        assert!(!m.is_integral(&[0.0, 0.5, 0.0, 0.0]));
    }

    #[test]
    fn rejects_bad_rows() {
        let mut m = MipModel::new(ObjSense::Minimize);
        m.add_var(Block::X, VarKind::Continuous, 0.0, 1.0);
        m.add_constraint("bad", vec![(3, 1.0)], RowSense::Le, 0.0);
        assert!(m.validate().is_err());
    }
}
