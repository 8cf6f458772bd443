mod support;

use proptest::prelude::*;
use support::oracle;
use treeshift::metrics::{dct, dft, dst, TransformType};
use treeshift::metrics::{evaluate_metric, rank_population, MetricId, METRIC_COUNT};
use treeshift::plans::{AgentProfile, Plan, Population};

fn profile(plans: &[Vec<f64>]) -> AgentProfile {
    let plans = plans.iter().map(|p| Plan::from_values(p.clone()).unwrap()).collect();
    AgentProfile::new(0, plans).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn check_all(plans: &[Vec<f64>]) -> Result<(), TestCaseError> {
    let p = profile(plans);
    for m in MetricId::all() {
        let got = evaluate_metric(m, &p).score;
        let want = oracle::evaluate(&m.name(), plans);
        prop_assert!(got.is_finite(), "{m} not finite on {plans:?}");
        prop_assert!(close(got, want, 1e-9), "{m}: {got} vs oracle {want} on {plans:?}");
    }
    Ok(())
}

/// Plans mixing small integers (ties, constant plans) with arbitrary reals.
fn plan_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=3, 1usize..=6).prop_flat_map(|(k, d)| {
        let value = prop_oneof![
            (-3i32..=3).prop_map(f64::from),
            -10.0f64..10.0,
        ];
        prop::collection::vec(prop::collection::vec(value, d), k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn every_metric_matches_the_naive_formula(plans in plan_sets()) {
        check_all(&plans)?;
    }

    #[test]
    fn correlations_ignore_a_common_shift(plans in plan_sets(), shift in -50.0f64..50.0) {
        let shifted: Vec<Vec<f64>> = plans
            .iter()
            .map(|p| p.iter().map(|v| v + shift).collect())
            .collect();
        let (a, b) = (profile(&plans), profile(&shifted));
        for m in MetricId::all().into_iter().filter(|m| m.name().contains("-corr-")) {
            let (x, y) = (evaluate_metric(m, &a).score, evaluate_metric(m, &b).score);
            prop_assert!(close(x, y, 1e-6), "{m}: {x} vs {y}");
        }
    }

    #[test]
    fn transforms_match_direct_sums(x in prop::collection::vec(-10.0f64..10.0, 2..=16)) {
        for t in TransformType::ALL {
            let got = dct(t, &x).unwrap();
            let want = oracle::dct(t.kind(), &x);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-9);
            }
            let got = dst(t, &x).unwrap();
            let want = oracle::dst(t.kind(), &x);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-9);
            }
        }
        for (g, (re, im)) in dft(&x).unwrap().iter().zip(oracle::dft(&x)) {
            prop_assert!((g.re - re).abs() < 1e-9 && (g.im - im).abs() < 1e-9);
        }
    }
}

#[test]
fn there_are_62_distinct_metrics() {
    let names: std::collections::BTreeSet<String> = MetricId::all().iter().map(|m| m.name()).collect();
    assert_eq!(names.len(), METRIC_COUNT);
    assert_eq!(METRIC_COUNT, 62);
    for name in &names {
        let parsed: MetricId = name.parse().unwrap();
        assert_eq!(&parsed.name(), name);
    }
    assert!("avg-corr-pearsons".parse::<MetricId>().is_err());
}

#[test]
fn worked_examples() {
    let score = |name: &str, plans: &[Vec<f64>]| evaluate_metric(name.parse().unwrap(), &profile(plans)).score;
    assert_eq!(score("max-value", &[vec![1.0, 2.0], vec![3.0, 0.0]]), 3.0);
    assert_eq!(score("avg-stdev", &[vec![0.0, 2.0]]), 1.0);
    assert!((score("sum-of-0-dft-coeff", &[vec![1.0; 4]]) - 4.0).abs() < 1e-12);
    assert_eq!(score("min-stdev", &[vec![0.3, 1.0, 2.0], vec![5.0; 3]]), 0.0);
    let single = vec![vec![0.2, 1.5, -0.7, 3.1]];
    assert!((score("avg-corr-pearson", &single) - 1.0).abs() < 1e-12);
    assert!((oracle::evaluate("avg-corr-pearson", &single) - 1.0).abs() < 1e-12);
}

#[test]
fn single_coordinate_and_constant_plans_stay_finite() {
    check_all(&[vec![2.5]]).unwrap();
    check_all(&[vec![1.0], vec![-4.0], vec![0.0]]).unwrap();
    check_all(&[vec![7.0; 6], vec![7.0; 6]]).unwrap();
}

#[test]
fn energy_sized_profiles_match() {
    use treeshift::plans::build_energy_style_profile;
    let base = Plan::from_values((0..144).map(|i| ((i * 37) % 23) as f64 * 0.1).collect()).unwrap();
    let p = build_energy_style_profile(0, &base, 11).unwrap();
    let plans: Vec<Vec<f64>> = p.plans().iter().map(|q| q.values().to_vec()).collect();
    for m in MetricId::all() {
        let got = evaluate_metric(m, &p).score;
        let want = oracle::evaluate(&m.name(), &plans);
        assert!(close(got, want, 1e-9), "{m}: {got} vs {want}");
    }
}

#[test]
fn ranking_keeps_agent_order_and_equal_multisets_share_stdev() {
    use treeshift::plans::build_energy_style_profile;
    let base = Plan::from_values(vec![0.4, 1.9, 0.0, 3.3, 2.2, 0.8]).unwrap();
    let agents: Vec<AgentProfile> = (0..5)
        .map(|id| build_energy_style_profile(id, &base, 100 + id as u64).unwrap())
        .collect();
    let pop = Population::new(agents).unwrap();
    let scores = rank_population("avg-stdev".parse().unwrap(), &pop);
    assert_eq!(scores.iter().map(|s| s.agent_id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    for s in &scores {
        assert!((s.score - scores[0].score).abs() < 1e-12);
    }
    let one = Population::new(vec![profile(&[vec![1.0, 2.0]])]).unwrap();
    assert_eq!(rank_population(MetricId::all()[0], &one).len(), 1);
}
