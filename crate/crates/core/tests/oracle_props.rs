use drccp::oracles::{cvar, lemma_certificate, worst_case_prob, DistanceProfile};
use proptest::prelude::*;

/// Worst case by moving mass: send the closest samples to the unsafe set
/// until the transport budget `theta` runs out.
fn greedy_transport(d: &[f64], theta: f64) -> f64 {
    let n = d.len() as f64;
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut budget = theta.max(0.0);
    let mut mass = 0.0;
    for &v in &sorted {
        let cost = v / n;
        if cost <= budget {
            budget -= cost;
            mass += 1.0 / n;
        } else {
            mass += budget / v;
            break;
        }
    }
    mass.min(1.0)
}

fn profile() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..5.0], 1..30)
}

fn grid_min(d: &[f64], theta: f64) -> f64 {
    let n = d.len() as f64;
    (0..4000)
        .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 3999.0))
        .map(|t| theta / t + d.iter().map(|&v| (1.0 - v / t).max(0.0)).sum::<f64>() / n)
        .fold(1.0, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_primal_transport(d in profile(), theta in 0.0f64..3.0) {
        let wcp = worst_case_prob(&DistanceProfile::new(d.clone()).unwrap(), theta);
        let primal = greedy_transport(&d, theta);
        prop_assert!((wcp - primal).abs() <= 1e-9, "{} vs {}", wcp, primal);
    }

    #[test]
    fn never_above_a_grid_search(d in profile(), theta in 1e-3f64..3.0) {
        let wcp = worst_case_prob(&DistanceProfile::new(d.clone()).unwrap(), theta);
        prop_assert!(wcp <= grid_min(&d, theta) + 1e-12);
        prop_assert!((0.0..=1.0).contains(&wcp));
    }

    #[test]
    fn monotone_in_radius_and_distance(d in profile(), a in 0.0f64..2.0, b in 0.0f64..2.0, push in 0.0f64..1.0) {
        let p = DistanceProfile::new(d.clone()).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(worst_case_prob(&p, lo) <= worst_case_prob(&p, hi) + 1e-12);
        let farther = DistanceProfile::new(d.iter().map(|v| v + push).collect()).unwrap();
        prop_assert!(worst_case_prob(&farther, hi) <= worst_case_prob(&p, hi) + 1e-12);
    }

    #[test]
    fn certificate_agrees_with_worst_case(d in profile(), theta in 0.0f64..1.0, eps in 0.05f64..0.5) {
        let p = DistanceProfile::new(d).unwrap();
        let wcp = worst_case_prob(&p, theta);
        prop_assume!((wcp - eps).abs() > 1e-7);
        let cert = lemma_certificate(&p, eps, theta);
        prop_assert_eq!(cert.feasible(), wcp <= eps, "wcp {} slack {}", wcp, cert.slack);
    }

    #[test]
    fn cvar_is_the_minimum_of_its_objective(v in prop::collection::vec(-10.0f64..10.0, 1..40), eps in 0.01f64..0.99) {
        let n = v.len();
        prop_assume!(eps * n as f64 >= 0.5);
        let c = cvar(&v, eps).unwrap();
        let mass = eps * n as f64;
        let objective = |t: f64| t + v.iter().map(|&x| (x - t).max(0.0)).sum::<f64>() / mass;
        let best = v.iter().map(|&t| objective(t)).fold(f64::INFINITY, f64::min);
        prop_assert!((c.value - best).abs() <= 1e-9 * (1.0 + best.abs()));
        prop_assert!((c.value - c.dual_value).abs() <= 1e-9 * (1.0 + best.abs()));
        prop_assert!(c.y_star.iter().all(|&y| (-1e-12..=1.0 + 1e-12).contains(&y)));
        prop_assert!((c.y_star.iter().sum::<f64>() - mass).abs() <= 1e-9);
        for (r, x) in c.r_star.iter().zip(&v) {
            prop_assert!(*r >= 0.0 && *r >= x - c.t_star - 1e-12);
        }
    }
}

#[test]
fn hand_cases() {
    let p = DistanceProfile::new(vec![1.0, 3.0]).unwrap();
    assert!((worst_case_prob(&p, 0.4) - 0.4).abs() < 1e-12);
    assert_eq!(worst_case_prob(&p, 0.0), 0.0);
    assert_eq!(worst_case_prob(&p, 10.0), 1.0);
    assert_eq!(worst_case_prob(&DistanceProfile::new(vec![0.0; 4]).unwrap(), 0.1), 1.0);
    assert_eq!(worst_case_prob(&DistanceProfile::new(vec![0.0, 2.0, 2.0, 2.0]).unwrap(), 0.0), 0.25);

    let c = cvar(&[4.0, 3.0, 2.0, 1.0], 0.25).unwrap();
    assert_eq!(c.value, 4.0);
    assert_eq!(cvar(&[2.5; 7], 0.3).unwrap().value, 2.5);
    assert!(cvar(&[1.0, 2.0], 0.0).is_err());
    assert!(cvar(&[], 0.1).is_err());
    assert!(DistanceProfile::new(vec![-1.0]).is_err());
}
