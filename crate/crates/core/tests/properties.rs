use meanpoint::central::{chaining_mechanism, Dataset};
use meanpoint::geometry::{
    chaining_decomposition, greedy_separated_set, is_cover, is_separated, metric_diameter,
    packing_profile, InsertionOrder, MetricKind, Norm, PackingMode, Universe,
};
use meanpoint::harness::{
    gen_thresholds, measure_error, read_universe_csv, universe_to_csv, ErrorSummary, MechanismSpec,
};
use meanpoint::local::{replay_server, simulate_protocol, ProtocolKind, ProtocolSpec};
use meanpoint::privacy::PrivacyBudget;
use meanpoint::projection::{certificate_holds, fw_gap, project_onto_hull, DEFAULT_TOL};
use proptest::prelude::*;

fn universe(max_dim: usize, max_len: usize) -> impl Strategy<Value = Universe> {
    (1..=max_dim, 1..=max_len).prop_flat_map(|(m, len)| {
        prop::collection::vec(-3.0f64..3.0, m * len).prop_map(move |pts| Universe::new(m, pts).unwrap())
    })
}

fn metric() -> impl Strategy<Value = MetricKind> {
    prop_oneof![Just(MetricKind::NormalizedL2), Just(MetricKind::LInf)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_sets_are_separated_covers(u in universe(6, 60), metric in metric(), frac in 0.01f64..1.2, seed in any::<u64>()) {
        let t = (metric_diameter(&u, metric) * frac).max(1e-6);
        for order in [InsertionOrder::Ascending, InsertionOrder::Shuffled { seed }] {
            let s = greedy_separated_set(&u, t, metric, order).unwrap();
            prop_assert!(is_separated(&u, &s.indices, t, metric));
            prop_assert!(is_cover(&u, &s.indices, t, metric));
        }
    }

    #[test]
    fn greedy_profile_is_non_increasing(u in universe(5, 40), metric in metric()) {
        let p = packing_profile(&u, metric, 0.05, PackingMode::Greedy, 0).unwrap();
        prop_assert!(p.windows(2).all(|w| w[0].packing >= w[1].packing && w[0].t < w[1].t));
    }

    #[test]
    fn decomposition_verifies(u in universe(5, 40), alpha in 0.02f64..1.0, linf in any::<bool>()) {
        let norm = if linf { Norm::LInf } else { Norm::L2 };
        let delta = u.max_norm(norm).max(1e-3);
        let dec = chaining_decomposition(&u, alpha, norm, delta).unwrap();
        prop_assert!(dec.verify(&u).is_empty());
    }

    #[test]
    fn projection_is_certified(u in universe(8, 25), y in prop::collection::vec(-6.0f64..6.0, 8)) {
        let y = &y[..u.dim()];
        let r = project_onto_hull(y, &u, DEFAULT_TOL, None).unwrap();
        prop_assert!(r.certified);
        let gap = fw_gap(&u, y, &r.point);
        prop_assert!(certificate_holds(gap, Norm::L2.distance(y, &r.point), DEFAULT_TOL, u.dim()));
        let again = project_onto_hull(&r.point, &u, DEFAULT_TOL, None).unwrap();
        prop_assert!(Norm::L2.distance(&again.point, &r.point) <= 1e-6 * (1.0 + Norm::L2.of(&r.point)));
    }

    #[test]
    fn csv_round_trip_is_lossless(u in universe(6, 30)) {
        let back = read_universe_csv(universe_to_csv(&u).unwrap().as_bytes()).unwrap();
        prop_assert_eq!(back, u);
    }

    #[test]
    fn chaining_ledger_is_exact(rho in 1e-4f64..10.0, alpha in 0.01f64..1.0, seed in any::<u64>()) {
        let u = gen_thresholds(6).unwrap();
        let d = Dataset::new(&u, vec![0, 1, 1, 3, 5]).unwrap();
        let out = chaining_mechanism(&d, rho, alpha, seed).unwrap();
        prop_assert_eq!(out.budget_consumed, PrivacyBudget::Zcdp { rho });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn server_replay_matches_simulation(eps in 0.1f64..1.5, alpha in 0.05f64..0.9, seed in any::<u64>(), kind in 0usize..3) {
        let u = gen_thresholds(5).unwrap();
        let parties: Vec<usize> = (0..30).map(|i| i % 5).collect();
        let protocol = [ProtocolKind::Lpm, ProtocolKind::Lcpm, ProtocolKind::Lcm][kind];
        let spec = ProtocolSpec::new(protocol, eps, Some(alpha));
        let run = simulate_protocol(&u, &parties, &spec, seed).unwrap();
        let replayed = replay_server(&u, &run.transcript, seed).unwrap();
        prop_assert_eq!(replayed.estimate, run.output.estimate);
        prop_assert_eq!(run.output.budget_consumed, PrivacyBudget::PureDp { epsilon: eps });
    }

    #[test]
    fn report_aggregates_match_trials(seed in any::<u64>(), trials in 1usize..12) {
        let u = gen_thresholds(6).unwrap();
        let d = Dataset::new(&u, (0..50).map(|i| i % 6).collect()).unwrap();
        let r = measure_error(&d, &MechanismSpec::Projection { rho: 0.2 }, trials, seed, false).unwrap();
        prop_assert_eq!(r.trials.len(), trials);
        let s = ErrorSummary::from_trials(&r.trials).unwrap();
        prop_assert_eq!(s.err2_mean, r.err2_mean);
        prop_assert_eq!(s.errinf_mean, r.errinf_mean);
        let text = serde_json::to_string(&r).unwrap();
        let back: meanpoint::harness::RunReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, r);
    }
}
