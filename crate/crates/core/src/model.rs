//! Problem data: samples, safety rows, the decision domain and the norm that
//! defines the Wasserstein distance, plus the distance-to-unsafe geometry.
//!
//! The safety set of a decision `x` is the open polyhedron
//!
//! ```text
//! S(x) = { xi : b_p' xi + d_p - a_p' x > 0 for every row p }
//! ```
//!
//! and the distance of a sample to its complement is the smallest row margin
//! divided by the dual norm of `b_p`, clipped at zero.

use crate::error::{Error, Result};
use crate::tol;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Norm used by the 1-Wasserstein transport cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    One,
    #[default]
    Two,
    Inf,
}

impl NormChoice {
    /// The norm paired with this one by duality.
    pub fn dual(self) -> NormChoice {
        match self {
            NormChoice::One => NormChoice::Inf,
            NormChoice::Two => NormChoice::Two,
            NormChoice::Inf => NormChoice::One,
        }
    }

    /// Evaluates this norm on `v`.
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            NormChoice::One => v.iter().map(|x| x.abs()).sum(),
            NormChoice::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormChoice::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl std::str::FromStr for NormChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "one" => Ok(NormChoice::One),
            "two" => Ok(NormChoice::Two),
            "inf" => Ok(NormChoice::Inf),
            other => Err(format!("unknown norm '{other}' (expected one|two|inf)")),
        }
    }
}

/// `||b||_*`, the dual norm of `b` with respect to `norm`.
pub fn dual_norm(b: &[f64], norm: NormChoice) -> Result<f64> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInstance("non-finite entry in b".into()));
    }
    let value = norm.dual().eval(b);
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::DegenerateRow)
    }
}

/// The empirical sample `xi_1, ..., xi_N`, each of dimension `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<Vec<f64>>,
    dim: usize,
}

impl SampleSet {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let dim = samples
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInstance("need at least one sample".into()))?;
        if dim == 0 {
            return Err(Error::InvalidInstance("samples must have K >= 1".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Dimension(format!(
                    "sample {i} has length {}, expected {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInstance(format!("sample {i} is not finite")));
            }
        }
        Ok(SampleSet { samples, dim })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(Vec::as_slice)
    }
}

/// One row `b' xi + d - a' x > 0` of the safety set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyRow {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: f64,
}

impl SafetyRow {
    /// Unnormalized margin `b' xi + d - a' x`.
    pub fn raw_margin(&self, x: &[f64], xi: &[f64]) -> f64 {
        dot(&self.b, xi) + self.d - dot(&self.a, x)
    }
}

/// Decision domain `{ x : G x <= g, lb <= x <= ub }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub g_mat: Vec<Vec<f64>>,
    pub g_rhs: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl Polyhedron {
    /// The box `lb <= x <= ub` with no extra rows.
    pub fn boxed(lb: Vec<f64>, ub: Vec<f64>) -> Self {
        Polyhedron { g_mat: Vec::new(), g_rhs: Vec::new(), lb, ub }
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn num_rows(&self) -> usize {
        self.g_rhs.len()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.lb.len() != dim || self.ub.len() != dim {
            return Err(Error::Dimension(format!("domain bounds must have length L = {dim}")));
        }
        if self.g_mat.len() != self.g_rhs.len() {
            return Err(Error::Dimension("G and g have different row counts".into()));
        }
        if let Some(row) = self.g_mat.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension(format!(
                "domain row has {} columns, expected {dim}",
                row.len()
            )));
        }
        for (&l, &u) in self.lb.iter().zip(&self.ub) {
            if l > u || l.is_nan() || u.is_nan() {
                return Err(Error::BoundOrder { lb: l, ub: u });
            }
        }
        Ok(())
    }
}

/// A complete distributionally robust chance-constrained program.
#[derive(Debug, Clone, PartialEq)]
pub struct DrccpInstance {
    pub samples: SampleSet,
    pub rows: Vec<SafetyRow>,
    pub domain: Polyhedron,
    pub cost: Vec<f64>,
    pub epsilon: f64,
    pub theta: f64,
    pub norm: NormChoice,
}

impl DrccpInstance {
    /// Builds and validates an instance.
    pub fn new(
        samples: SampleSet,
        rows: Vec<SafetyRow>,
        domain: Polyhedron,
        cost: Vec<f64>,
        epsilon: f64,
        theta: f64,
        norm: NormChoice,
    ) -> Result<Self> {
        let inst = DrccpInstance { samples, rows, domain, cost, epsilon, theta, norm };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_decisions();
        self.domain.validate(l)?;
        if self.rows.is_empty() {
            return Err(Error::InvalidInstance("need at least one safety row".into()));
        }
        for (p, row) in self.rows.iter().enumerate() {
            if row.a.len() != l {
                return Err(Error::Dimension(format!("row {p}: a has length {}, L = {l}", row.a.len())));
            }
            if row.b.len() != self.samples.dim() {
                return Err(Error::Dimension(format!(
                    "row {p}: b has length {}, K = {}",
                    row.b.len(),
                    self.samples.dim()
                )));
            }
            dual_norm(&row.b, self.norm)?;
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInstance(format!("epsilon = {} not in (0,1)", self.epsilon)));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(Error::InvalidInstance(format!("theta = {} must be >= 0", self.theta)));
        }
        Ok(())
    }

    /// `L`, the number of decision variables.
    pub fn num_decisions(&self) -> usize {
        self.cost.len()
    }

    /// `N`, the number of samples.
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    /// `P`, the number of safety rows.
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// `k = floor(epsilon * N)`, the number of scenarios allowed to be violated.
    pub fn k(&self) -> usize {
        violation_budget(self.epsilon, self.num_samples())
    }

    /// Dual norms `||b_p||_*` for every row.
    pub fn row_norms(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| dual_norm(&r.b, self.norm).expect("validated instance"))
            .collect()
    }

    /// A copy with a different radius.
    pub fn with_theta(&self, theta: f64) -> Self {
        DrccpInstance { theta, ..self.clone() }
    }

    /// Normalized margins `(b_p' xi_i + d_p - a_p' x) / ||b_p||_*` of scenario `i`.
    pub fn margins(&self, x: &[f64], i: usize) -> Vec<f64> {
        let xi = self.samples.get(i);
        self.rows
            .iter()
            .zip(self.row_norms())
            .map(|(row, nb)| row.raw_margin(x, xi) / nb)
            .collect()
    }

    /// Distance of every sample to the unsafe set of `x`.
    pub fn distances(&self, x: &[f64]) -> Vec<f64> {
        self.samples
            .iter()
            .map(|xi| dist_to_unsafe(x, xi, &self.rows, self.norm).expect("validated instance"))
            .collect()
    }

    /// Whether `x` lies in the decision domain, up to `tol`.
    pub fn in_domain(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.num_decisions()
            && x.iter()
                .zip(self.domain.lb.iter().zip(&self.domain.ub))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
            && self
                .domain
                .g_mat
                .iter()
                .zip(&self.domain.g_rhs)
                .all(|(row, rhs)| dot(row, x) <= rhs + tol)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: InstanceJson = serde_json::from_str(text)?;
        wire.try_into()
    }

    /// JSON text with every double printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        crate::numfmt::to_json_string(&InstanceJson::from(self)).expect("instance serializes")
    }
}

/// `floor(epsilon * N)` with a tiny upward nudge so `0.1 * 100` floors to 10.
pub fn violation_budget(epsilon: f64, n: usize) -> usize {
    let raw = (epsilon * n as f64 + tol::EPS_N_NUDGE).floor();
    (raw.max(0.0) as usize).min(n.saturating_sub(1))
}

/// Distance from `xi` to the complement of `S(x)`.
///
/// Returns zero when some row margin is non-positive, i.e. `xi` is unsafe or
/// on the boundary.
pub fn dist_to_unsafe(x: &[f64], xi: &[f64], rows: &[SafetyRow], norm: NormChoice) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (p, row) in rows.iter().enumerate() {
        if row.a.len() != x.len() || row.b.len() != xi.len() {
            return Err(Error::Dimension(format!("row {p} does not match x/xi dimensions")));
        }
        let margin = row.raw_margin(x, xi) / dual_norm(&row.b, norm)?;
        best = best.min(margin);
    }
    Ok(best.max(0.0))
}

/// Whether `xi` falls outside `S(x)` given normalized margins.
pub fn is_unsafe(margins: &[f64]) -> bool {
    margins.iter().any(|&m| m <= tol::MARGIN)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Serialize, Deserialize)]
struct DomainJson {
    #[serde(rename = "G", default)]
    g_mat: Vec<Vec<f64>>,
    #[serde(rename = "g", default)]
    g_rhs: Vec<f64>,
    lb: Vec<Option<f64>>,
    ub: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "K")]
    k: usize,
    cost: Vec<f64>,
    domain: DomainJson,
    rows: Vec<SafetyRow>,
    samples: Vec<Vec<f64>>,
    epsilon: f64,
    theta: f64,
    #[serde(default)]
    norm: NormChoice,
}

impl From<&DrccpInstance> for InstanceJson {
    fn from(inst: &DrccpInstance) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        InstanceJson {
            l: inst.num_decisions(),
            k: inst.samples.dim(),
            cost: inst.cost.clone(),
            domain: DomainJson {
                g_mat: inst.domain.g_mat.clone(),
                g_rhs: inst.domain.g_rhs.clone(),
                lb: inst.domain.lb.iter().copied().map(finite).collect(),
                ub: inst.domain.ub.iter().copied().map(finite).collect(),
            },
            rows: inst.rows.clone(),
            samples: inst.samples.iter().map(<[f64]>::to_vec).collect(),
            epsilon: inst.epsilon,
            theta: inst.theta,
            norm: inst.norm,
        }
    }
}

impl TryFrom<InstanceJson> for DrccpInstance {
    type Error = Error;

    fn try_from(w: InstanceJson) -> Result<Self> {
        if w.cost.len() != w.l {
            return Err(Error::Dimension(format!("cost has length {}, L = {}", w.cost.len(), w.l)));
        }
        let samples = SampleSet::new(w.samples)?;
        if samples.dim() != w.k {
            return Err(Error::Dimension(format!("samples have K = {}, header says {}", samples.dim(), w.k)));
        }
        let domain = Polyhedron {
            g_mat: w.domain.g_mat,
            g_rhs: w.domain.g_rhs,
            lb: w.domain.lb.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
            ub: w.domain.ub.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
        };
        DrccpInstance::new(samples, w.rows, domain, w.cost, w.epsilon, w.theta, w.norm)
    }
}
