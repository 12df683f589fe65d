use drccp::lp::{solve_lp, LpProblem, LpRow, LpStatus, ObjSense, RowSense};
use proptest::prelude::*;

/// Solves `m x = rhs` by Gaussian elimination; `None` when singular.
fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-9 {
            return None;
        }
        m.swap(c, p);
        rhs.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..n {
                    m[r][j] -= f * m[c][j];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

fn dense(row: &LpRow, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &(j, a) in &row.coefs {
        v[j] += a;
    }
    v
}

fn feasible(p: &LpProblem, x: &[f64], tol: f64) -> bool {
    let n = p.num_vars();
    let boxed = x.iter().zip(&p.lb).zip(&p.ub).all(|((&v, &l), &u)| v >= l - tol && v <= u + tol);
    boxed
        && p.rows.iter().all(|row| {
            let act: f64 = dense(row, n).iter().zip(x).map(|(a, v)| a * v).sum();
            match row.sense {
                RowSense::Le => act <= row.rhs + tol,
                RowSense::Ge => act >= row.rhs - tol,
                RowSense::Eq => (act - row.rhs).abs() <= tol,
            }
        })
}

/// Best objective over all vertices of a bounded LP, or `None` if infeasible.
fn vertex_optimum(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = p.rows.iter().map(|r| (dense(r, n), r.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), p.lb[j]));
        planes.push((e, p.ub[j]));
    }
    let mut best: Option<f64> = None;
    let total = planes.len();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let m = pick.iter().map(|&i| planes[i].0.clone()).collect();
        let rhs = pick.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(m, rhs) {
            if feasible(p, &x, 1e-9) {
                let obj: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(match (best, p.sense) {
                    (None, _) => obj,
                    (Some(b), ObjSense::Minimize) => b.min(obj),
                    (Some(b), ObjSense::Maximize) => b.max(obj),
                });
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < total - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn sense() -> impl Strategy<Value = RowSense> {
    prop_oneof![Just(RowSense::Le), Just(RowSense::Ge), Just(RowSense::Eq)]
}

prop_compose! {
    fn small_lp()(n in 1usize..=3, m in 0usize..=4)
        (objective in prop::collection::vec(-3i32..=3, n),
         bounds in prop::collection::vec((-3i32..=0, 0i32..=3), n),
         rows in prop::collection::vec((prop::collection::vec(-3i32..=3, n), sense(), -4i32..=4), m),
         maximize in any::<bool>())
        -> LpProblem
    {
        LpProblem {
            objective: objective.iter().map(|&c| c as f64).collect(),
            sense: if maximize { ObjSense::Maximize } else { ObjSense::Minimize },
            lb: bounds.iter().map(|b| b.0 as f64).collect(),
            ub: bounds.iter().map(|b| b.1 as f64).collect(),
            rows: rows
                .into_iter()
                .map(|(a, sense, rhs)| LpRow {
                    coefs: a.iter().enumerate().filter(|(_, &v)| v != 0).map(|(j, &v)| (j, v as f64)).collect(),
                    sense,
                    rhs: rhs as f64,
                })
                .collect(),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn simplex_matches_vertex_enumeration(p in small_lp()) {
        let sol = solve_lp(&p).unwrap();
        match vertex_optimum(&p) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - best).abs() <= 1e-7 * (1.0 + best.abs()), "{} vs {}", sol.objective, best);
                prop_assert!(feasible(&p, &sol.x, 1e-7));
            }
        }
    }

    #[test]
    fn duals_close_the_gap(p in small_lp()) {
        let sol = solve_lp(&p).unwrap();
        prop_assume!(sol.status == LpStatus::Optimal);
        let n = p.num_vars();
        // reduced costs are c - A'y
        for j in 0..n {
            let ay: f64 = p.rows.iter().zip(&sol.duals).map(|(r, y)| dense(r, n)[j] * y).sum();
            prop_assert!((p.objective[j] - ay - sol.reduced_costs[j]).abs() <= 1e-7);
        }
        // dual objective from row duals and the active bound of each reduced cost
        let mut dual_obj: f64 = p.rows.iter().zip(&sol.duals).map(|(r, y)| r.rhs * y).sum();
        for j in 0..n {
            let d = sol.reduced_costs[j];
            let favourable = match p.sense {
                ObjSense::Minimize => d > 0.0,
                ObjSense::Maximize => d < 0.0,
            };
            dual_obj += d * if favourable { p.lb[j] } else { p.ub[j] };
        }
        prop_assert!((dual_obj - sol.objective).abs() <= 1e-6 * (1.0 + sol.objective.abs()), "{} vs {}", dual_obj, sol.objective);
    }
}

#[test]
fn free_unbounded_direction_is_reported() {
    let p = LpProblem {
        objective: vec![-1.0, 0.0],
        sense: ObjSense::Minimize,
        lb: vec![0.0, 0.0],
        ub: vec![f64::INFINITY, 1.0],
        rows: vec![LpRow { coefs: vec![(0, 1.0), (1, -1.0)], sense: RowSense::Ge, rhs: -1.0 }],
    };
    let sol = solve_lp(&p).unwrap();
    assert_eq!(sol.status, LpStatus::Unbounded);
    let ray = sol.ray.expect("ray");
    assert!(ray[0] > 0.0);
}
