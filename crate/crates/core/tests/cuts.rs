use drccp::cuts::{check_cut_validity, cut_row, relax_small_terms, separators, CutFamily, DEFAULT_SUPPORT_BUDGET};
use drccp::formulations::{build, FormulationKind};
use drccp::lp::{solve_lp, LpRow, LpStatus, RowSense};
use drccp::model::NormChoice;
use drccp::transport::generate;
use proptest::prelude::*;

fn activity(row: &LpRow, x: &[f64]) -> f64 {
    row.coefs.iter().map(|&(j, a)| a * x[j]).sum()
}

fn holds(row: &LpRow, x: &[f64], tol: f64) -> bool {
    let act = activity(row, x);
    match row.sense {
        RowSense::Ge => act >= row.rhs - tol,
        RowSense::Le => act <= row.rhs + tol,
        RowSense::Eq => (act - row.rhs).abs() <= tol,
    }
}

prop_compose! {
    fn scaled_row()(coefs in prop::collection::vec((-1.0f64..1.0, -8i32..=0), 1..8),
                    ge in any::<bool>(),
                    rhs in -2.0f64..2.0) -> LpRow {
        LpRow {
            coefs: coefs.iter().enumerate().map(|(j, &(a, e))| (j, a * 10f64.powi(e))).collect(),
            sense: if ge { RowSense::Ge } else { RowSense::Le },
            rhs,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn relaxed_row_is_implied_on_the_box(row in scaled_row(), pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 20)) {
        let n = row.coefs.len();
        let lb = vec![-1.0; n];
        let ub = vec![1.0; n];
        let relaxed = relax_small_terms(&row, &lb, &ub, 1e-3);
        let big = row.coefs.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
        prop_assert!(relaxed.coefs.iter().all(|c| c.1.abs() >= 1e-3 * big));
        for p in &pts {
            if holds(&row, &p[..n], 0.0) {
                prop_assert!(holds(&relaxed, &p[..n], 1e-12));
            }
        }
    }
}

#[test]
fn relaxation_keeps_unbounded_columns() {
    let row = LpRow { coefs: vec![(0, 1.0), (1, 1e-6)], sense: RowSense::Ge, rhs: 1.0 };
    let kept = relax_small_terms(&row, &[0.0, 0.0], &[1.0, f64::INFINITY], 1e-3);
    assert_eq!(kept, row);
    let dropped = relax_small_terms(&row, &[0.0, 0.0], &[1.0, 2.0], 1e-3);
    assert_eq!(dropped.coefs, vec![(0, 1.0)]);
    assert!((dropped.rhs - (1.0 - 2e-6)).abs() < 1e-15);
}

#[test]
fn separated_cuts_cut_off_the_point_and_are_valid() {
    let mut checked = 0;
    for seed in 0..12u64 {
        let inst = generate(2, 3, 9, 300 + seed).to_drccp(0.25, 0.01 + 0.01 * (seed % 3) as f64, NormChoice::Two).unwrap();
        let model = build(FormulationKind::Compact, &inst).unwrap();
        let sol = solve_lp(&model.to_lp()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        for sep in separators(&inst, &[CutFamily::Mixing, CutFamily::Path]) {
            let cuts = sep.separate(&model, &sol.x);
            let mut rows: Vec<usize> = cuts.iter().map(|c| c.row).collect();
            rows.dedup();
            assert_eq!(rows.len(), cuts.len(), "one cut per safety row");
            for cut in cuts {
                assert_eq!(cut.family, sep.family());
                assert!(cut.violation > 1e-6);
                assert!((cut.rhs - cut.lhs(&sol.x) - cut.violation).abs() <= 1e-9);
                assert!(!holds(&cut_row(&cut), &sol.x, 1e-7));
                assert!(check_cut_validity(&cut, &inst, DEFAULT_SUPPORT_BUDGET).unwrap());
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}
