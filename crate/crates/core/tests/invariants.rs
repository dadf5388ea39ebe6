use proptest::prelude::*;

use pacman_core::mac_sim::{run_mac_sim, MacScenario, MacZone, Role, StationConfig};
use pacman_core::mdp_model::{build_mdp, detection_prob, ModelParams, StateKind};
use pacman_core::mdp_solver::{
    extract_policy, induced_chain, sojourn_by_location, stationary_distribution, value_iteration,
    StationaryOptions,
};
use pacman_core::surface::{Surface, Zone};

fn params() -> impl Strategy<Value = ModelParams> {
    (
        4u32..=12,
        1u32..=3,
        1u32..=3,
        2u32..=4,
        0.05f64..0.5,
        0.05f64..0.95,
        0.5f64..0.95,
        0.1f64..10.0,
    )
        .prop_filter_map(
            "m <= M - G",
            |(big_m, m, q, g, alpha, beta, discount, c)| {
                (m + g <= big_m).then(|| ModelParams {
                    channels: big_m,
                    sensed_per_slot: m,
                    mini_slots: q,
                    drop_threshold: g,
                    alpha,
                    beta,
                    discount,
                    ids_c: c,
                    ..ModelParams::default()
                })
            },
        )
}

fn surface() -> impl Strategy<Value = Surface> {
    prop::collection::vec(0.5f64..8.0, 7).prop_map(|w| Surface::hex7(&w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_rows_are_stochastic(p in params(), s in surface()) {
        let mdp = build_mdp(&p, &s).unwrap();
        for i in 0..mdp.len() {
            for c in mdp.choices(i) {
                let sum: f64 = c.outcomes.iter().map(|o| o.prob).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn busy_probability_is_a_floor(p in params(), s in surface()) {
        let mdp = build_mdp(&p, &s).unwrap();
        let rho = p.busy_prob();
        for i in 0..mdp.len() {
            if mdp.states()[i].kind == StateKind::Detected {
                continue;
            }
            for c in mdp.choices(i) {
                let busy: f64 = c
                    .outcomes
                    .iter()
                    .filter(|o| mdp.states()[o.next].kind == StateKind::Busy)
                    .map(|o| o.prob)
                    .sum();
                prop_assert!(busy >= rho - 1e-12, "{} {}: {busy} < {rho}", mdp.states()[i], c.action);
            }
        }
    }

    #[test]
    fn detection_rises_with_streak(c in 0.01f64..50.0, j in 1u32..50) {
        prop_assert!(detection_prob(j + 1, c).unwrap() > detection_prob(j, c).unwrap());
    }

    #[test]
    fn recatch_falls_with_streak(p in params()) {
        for j in 1..p.drop_threshold {
            prop_assert!(p.attack_prob_streak(j + 1).unwrap() > p.attack_prob_streak(j).unwrap());
        }
    }

    #[test]
    fn adjacency_is_symmetric(s in surface()) {
        for id in s.ids() {
            for n in s.neighbors(id).unwrap() {
                prop_assert!(s.neighbors(n).unwrap().contains(&id));
            }
        }
    }

    #[test]
    fn policy_stable_and_scale_invariant(p in params(), s in surface(), k in 0.5f64..4.0) {
        let mdp = build_mdp(&p, &s).unwrap();
        let vi = value_iteration(&mdp, 1e-11, 200_000).unwrap();
        let policy = extract_policy(&mdp, &vi.values);
        prop_assert_eq!(&extract_policy(&mdp, &vi.values), &policy);
        prop_assert!(vi.contracts(p.discount, 1e-9));
        let scaled = mdp.with_scaled_rewards(k);
        let vs = value_iteration(&scaled, 1e-11, 200_000).unwrap();
        for (a, b) in vs.values.values.iter().zip(&vi.values.values) {
            prop_assert!((a - k * b).abs() <= 1e-7 * (1.0 + b.abs() * k));
        }
    }

    #[test]
    fn sojourn_shares_sum_to_one(p in params(), s in surface()) {
        let mdp = build_mdp(&p, &s).unwrap();
        let vi = value_iteration(&mdp, 1e-10, 200_000).unwrap();
        let policy = extract_policy(&mdp, &vi.values);
        let chain = induced_chain(&mdp, &policy).unwrap();
        let dist = stationary_distribution(&chain, 0, StationaryOptions::default()).unwrap();
        let shares = sojourn_by_location(&dist, mdp.states());
        let total: f64 = shares.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(dist.pi.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn mac_runs_conserve_time_and_repeat(seed in any::<u64>(), n in 1usize..5, cw in 1u32..32) {
        let mut stations: Vec<_> = (0..n).map(|_| StationConfig::honest(Role::VictimUe, 4)).collect();
        stations.push(StationConfig::malicious(cw));
        let sc = MacScenario {
            zones: vec![MacZone { id: 1, stations }],
            sim_duration_s: 0.5,
            attack_start_s: 0.25,
            sample_interval_s: 0.05,
            seed,
            ..MacScenario::default()
        };
        let a = run_mac_sim(&sc).unwrap();
        let z = &a.zones[0];
        prop_assert_eq!(z.idle_ns + z.success_ns + z.collision_ns, z.elapsed_ns);
        prop_assert!(z.throughput() <= sc.throughput_bound() + 1e-12);
        prop_assert_eq!(a, run_mac_sim(&sc).unwrap());
    }
}

#[test]
fn single_zone_surface_works() {
    let s = Surface::new(
        vec![Zone {
            id: 3,
            label: "only".into(),
            weight: 2.0,
        }],
        &[],
    )
    .unwrap();
    let mdp = build_mdp(&ModelParams::default(), &s).unwrap();
    assert_eq!(mdp.len(), 10);
}
