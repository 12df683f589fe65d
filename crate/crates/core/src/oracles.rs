//! Independent checks that do not go through the MIP formulations.

use crate::cuts::{for_each_support, support_count};
use crate::error::{Error, Result};
use crate::formulations::compute_big_m;
use crate::lp::{LpProblem, LpRow, LpStatus, ObjSense, RowSense, Simplex};
use crate::model::{dot, violation_budget, DrccpInstance};
use crate::tol;

/// Distances `dist(xi_i, S(x))` of all samples for one decision `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile(pub Vec<f64>);

impl DistanceProfile {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() || d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInstance("distances must be finite and non-negative".into()));
        }
        Ok(DistanceProfile(d))
    }

    pub fn of(inst: &DrccpInstance, x: &[f64]) -> Self {
        DistanceProfile(inst.distances(x))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Worst-case probability of the unsafe event over the Wasserstein ball,
/// `min(1, inf_{t>0} theta/t + (1/N) sum max(0, 1 - d_i/t))`.
///
/// Between consecutive distances the objective is `a + b/t`, hence monotone,
/// so only the positive distances and the limit `t -> inf` (value 1) matter.
pub fn worst_case_prob(profile: &DistanceProfile, theta: f64) -> f64 {
    let d = &profile.0;
    let n = d.len() as f64;
    if theta <= 0.0 {
        return d.iter().filter(|&&v| v == 0.0).count() as f64 / n;
    }
    let mut best = 1.0f64;
    for &t in d.iter().filter(|&&v| v > 0.0) {
        let tail: f64 = d.iter().map(|&v| (1.0 - v / t).max(0.0)).sum();
        best = best.min(theta / t + tail / n);
    }
    best
}

/// CVaR value with an explicit primal/dual optimal pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Cvar {
    /// Primal value `t* + (1/(eps N)) sum r*`.
    pub value: f64,
    /// Dual value `(1/(eps N)) sum v_i y*_i`.
    pub dual_value: f64,
    pub t_star: f64,
    pub r_star: Vec<f64>,
    pub y_star: Vec<f64>,
}

/// Upper-tail CVaR at level `1 - epsilon` of an empirical distribution.
pub fn cvar(values: &[f64], epsilon: f64) -> Result<Cvar> {
    let n = values.len();
    let mass = epsilon * n as f64;
    if n == 0 || !(mass > 0.0) || epsilon >= 1.0 {
        return Err(Error::CvarMass);
    }
    let k = violation_budget(epsilon, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let t_star = values[order[k]];
    let r_star: Vec<f64> = values.iter().map(|&v| (v - t_star).max(0.0)).collect();
    let mut y_star = vec![0.0; n];
    for &i in &order[..k] {
        y_star[i] = 1.0;
    }
    y_star[order[k]] = mass - k as f64;
    let value = t_star + r_star.iter().sum::<f64>() / mass;
    let dual_value = values.iter().zip(&y_star).map(|(v, y)| v * y).sum::<f64>() / mass;
    Ok(Cvar { value, dual_value, t_star, r_star, y_star })
}

/// Certificate `(t, r)` for the distance system of a fixed decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub t: f64,
    pub r: Vec<f64>,
    /// `eps t - theta - (1/N) sum r`.
    pub slack: f64,
}

impl Certificate {
    pub fn feasible(&self) -> bool {
        self.slack >= -CERT_TOL
    }
}

/// Slack tolerance of [`Certificate::feasible`], sized for decisions that
/// come out of an LP with `1e-7` feasibility tolerance.
pub const CERT_TOL: f64 = 1e-6;

/// Builds `t` = `(k+1)`-th smallest distance, `r_i = max(0, t - d_i)`.
/// The decision is feasible iff the returned certificate is.
pub fn lemma_certificate(profile: &DistanceProfile, epsilon: f64, theta: f64) -> Certificate {
    let d = &profile.0;
    let n = d.len();
    let k = violation_budget(epsilon, n);
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let t = sorted[k];
    let r: Vec<f64> = d.iter().map(|&v| (t - v).max(0.0)).collect();
    let slack = epsilon * t - theta - r.iter().sum::<f64>() / n as f64;
    Certificate { t, r, slack }
}

/// Best decision found by [`enumerate_optimal`].
#[derive(Debug, Clone, PartialEq)]
pub struct Enumerated {
    pub objective: f64,
    pub x: Vec<f64>,
    /// Violated-scenario set of the winning support.
    pub support: Vec<usize>,
    pub lp_solves: usize,
}

/// Ground truth by enumeration: for every `z` with `|z| <= k` solve the
/// distance LP with `z` fixed and keep the cheapest. At `theta = 0` the LP
/// uses the sample-average rows instead.
pub fn enumerate_optimal(inst: &DrccpInstance, budget: u128) -> Result<Option<Enumerated>> {
    let n = inst.num_samples();
    let k = inst.k();
    let needed = support_count(n, k);
    if needed > budget {
        return Err(Error::EnumerationBudget { needed, limit: budget });
    }
    let big_m = compute_big_m(inst)?;
    let l = inst.num_decisions();
    let p_count = inst.num_rows();
    let norms = inst.row_norms();
    let saa = inst.theta <= 0.0;
    // columns: x (L), then r (N) and t unless SAA
    let ncols = if saa { l } else { l + n + 1 };
    let tcol = l + n;
    let mut lb = inst.domain.lb.clone();
    let mut ub = inst.domain.ub.clone();
    if !saa {
        lb.extend(std::iter::repeat_n(0.0, n + 1));
        ub.extend(std::iter::repeat_n(f64::INFINITY, n + 1));
    }
    let mut objective = inst.cost.clone();
    objective.resize(ncols, 0.0);
    let mut rows: Vec<LpRow> = inst
        .domain
        .g_mat
        .iter()
        .zip(&inst.domain.g_rhs)
        .map(|(g, &rhs)| LpRow {
            coefs: g.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect(),
            sense: RowSense::Le,
            rhs,
        })
        .collect();
    if !saa {
        let mut coefs = vec![(tcol, inst.epsilon)];
        coefs.extend((0..n).map(|i| (l + i, -1.0 / n as f64)));
        rows.push(LpRow { coefs, sense: RowSense::Ge, rhs: inst.theta });
    }
    let first_var_row = rows.len();
    // one row per scenario for the z-dependent bigm1 part, then one per (i, p)
    if !saa {
        for i in 0..n {
            rows.push(LpRow { coefs: vec![(tcol, 1.0), (l + i, -1.0)], sense: RowSense::Le, rhs: big_m });
        }
    }
    let first_scen_row = rows.len();
    for i in 0..n {
        for p in 0..p_count {
            let row = &inst.rows[p];
            let mut coefs: Vec<(usize, f64)> =
                row.a.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (j, -a / norms[p])).collect();
            if !saa {
                coefs.push((tcol, -1.0));
                coefs.push((l + i, 1.0));
            }
            let base = -(dot(&row.b, inst.samples.get(i)) + row.d) / norms[p];
            rows.push(LpRow { coefs, sense: RowSense::Ge, rhs: base });
        }
    }
    let base_rhs: Vec<f64> = rows.iter().map(|r| r.rhs).collect();
    let lp = LpProblem { objective, sense: ObjSense::Minimize, lb, ub, rows };

    let mut best: Option<Enumerated> = None;
    let mut solves = 0usize;
    for_each_support(n, k, |support| {
        // z enters only through right-hand sides, so each support is a fresh LP
        let mut prob = lp.clone();
        for &i in support {
            if !saa {
                let row = first_var_row + i;
                prob.rows[row].rhs = base_rhs[row] - big_m;
            }
            for p in 0..p_count {
                let row = first_scen_row + i * p_count + p;
                prob.rows[row].rhs = base_rhs[row] - big_m;
            }
        }
        let sol = Simplex::new(&prob)?.solve()?;
        solves += 1;
        match sol.status {
            LpStatus::Optimal => {
                if best.as_ref().is_none_or(|b| sol.objective < b.objective - 1e-12) {
                    best = Some(Enumerated {
                        objective: sol.objective,
                        x: sol.x[..l].to_vec(),
                        support: support.to_vec(),
                        lp_solves: 0,
                    });
                }
            }
            LpStatus::Unbounded => return Err(Error::NotCompact),
            LpStatus::Infeasible => {}
        }
        Ok(())
    })?;
    Ok(best.map(|mut b| {
        b.lp_solves = solves;
        b
    }))
}

/// `x` is feasible for the distributionally robust constraint, judged by
/// the certificate.
pub fn is_robust_feasible(inst: &DrccpInstance, x: &[f64]) -> bool {
    inst.in_domain(x, tol::PRIMAL_FEAS * 10.0)
        && lemma_certificate(&DistanceProfile::of(inst, x), inst.epsilon, inst.theta).feasible()
}
