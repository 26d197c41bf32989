use proptest::prelude::*;
use s3selmer::markov::{
    self, cij, evolve, ml_step, rank_delta_inert, rank_delta_split, stationary, tail_bound,
    tail_exact, Distribution, Parity, PrimeStep,
};

#[test]
fn transition_rows_sum_to_one() {
    for r in 0..=20 {
        for i in 1..=2u8 {
            let row: f64 = (0..=2u8).map(|j| cij(i, j, r).unwrap()).sum();
            assert!((row - 1.0).abs() < 1e-12, "i={i} r={r}");
            for j in 0..=2u8 {
                assert!(cij(i, j, r).unwrap() >= -1e-15);
            }
        }
    }
    assert_eq!(cij(1, 0, 0).unwrap(), 1.0);
    assert!(cij(2, 2, 1).unwrap().abs() < 1e-15);
    assert!(cij(3, 0, 0).is_err());
}

#[test]
fn delta_tables() {
    for lift in 0..6 {
        assert_eq!(rank_delta_split(1, 0, lift).unwrap(), 2);
        assert_eq!(rank_delta_split(1, 1, lift).unwrap(), -2);
        assert_eq!(rank_delta_split(2, 1, lift).unwrap(), 0);
        assert_eq!(rank_delta_split(2, 2, lift).unwrap(), -4);
        assert_eq!(
            rank_delta_split(2, 0, lift).unwrap(),
            if lift < 2 { 4 } else { 0 }
        );
    }
    assert!(rank_delta_split(1, 2, 0).is_err());
    assert_eq!(rank_delta_inert(0, 0).unwrap(), 0);
    assert_eq!(rank_delta_inert(1, 0).unwrap(), 2);
    assert_eq!(rank_delta_inert(1, 1).unwrap(), -2);
    assert!(rank_delta_inert(2, 0).is_err());
}

/// The law of one class-1 split step assembled from the transition table and
/// the delta rule agrees with the operator row.
#[test]
fn table_and_delta_rule_reproduce_the_operator() {
    for s in 0..30usize {
        let r = markov::r_omega(s);
        let mut law = std::collections::BTreeMap::<i64, f64>::new();
        for t in 0..=1u8 {
            for lift in 0..6u8 {
                let delta = rank_delta_split(1, t, lift).unwrap() as i64;
                *law.entry(s as i64 + delta).or_default() += cij(1, t, r).unwrap() / 6.0;
            }
        }
        let row = ml_step(&Distribution::point(s).unwrap());
        for (&target, &mass) in &law {
            if target < 0 {
                assert!(mass < 1e-15, "s={s}");
                continue;
            }
            assert!(
                (row.get(target as usize) - mass).abs() < 1e-12,
                "s={s} -> {target}"
            );
        }
        assert!((markov::up_probability(s) - cij(1, 0, r).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn single_steps() {
    let d = ml_step(&Distribution::point(0).unwrap());
    assert_eq!(d.get(2), 1.0);
    let d = ml_step(&Distribution::point(1).unwrap());
    assert_eq!(d.get(3), 1.0);
    let d = ml_step(&Distribution::point(2).unwrap());
    assert!((d.get(0) - 2.0 / 3.0).abs() < 1e-15);
    assert!((d.get(4) - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn stationary_laws_are_fixed_points() {
    for parity in [Parity::Even, Parity::Odd] {
        let e = stationary(parity);
        assert!(ml_step(&e).l1_distance(&e) < 1e-9);
        assert!(ml_step(&ml_step(&e)).l1_distance(&e) < 1e-9);
        assert!((e.total() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn stationary_table_to_four_figures() {
    let e = stationary(Parity::Even);
    let table = [
        (0, 31.9502),
        (2, 47.9253),
        (4, 17.9720),
        (6, 2.07369),
        (8, 7.77635e-2),
    ];
    for (s, pct) in table {
        let got = 100.0 * e.get(s);
        assert!(((got - pct) / pct).abs() < 5e-5, "s={s}: {got} vs {pct}");
    }
    assert!((e.get(2) / e.get(0) - 1.5).abs() < 1e-12);
    assert!((stationary(Parity::Odd).get(9) - 0.00078).abs() < 1e-5);
}

#[test]
fn tails_stay_below_the_bound() {
    for s in 4..=30 {
        let parity = Parity::of(s);
        assert!(
            tail_exact(parity, s).unwrap() < tail_bound(s).unwrap(),
            "s={s}"
        );
    }
    assert!(tail_bound(3).is_err());
    let t4 = tail_exact(Parity::Even, 4).unwrap();
    assert!((t4 - (1.0 - 0.319502 - 0.479253)).abs() < 2e-6);
    assert!((tail_bound(4).unwrap() - 0.59510).abs() < 1e-5);
}

#[test]
fn inert_class_two_is_rejected_in_simulation() {
    let stream = [PrimeStep {
        class: 2,
        split: false,
    }];
    let err = markov::simulate_chain(&Distribution::point(0).unwrap(), &stream, 10, 1);
    assert!(err.is_err());
}

#[test]
fn null_streams_resample_the_initial_law() {
    let initial = Distribution::from_pairs([(0, 0.25), (1, 0.75)]).unwrap();
    let stream = vec![
        PrimeStep {
            class: 0,
            split: true
        };
        10
    ];
    let d = markov::simulate_chain(&initial, &stream, 20_000, 5).unwrap();
    assert!(d.tv_distance(&initial) < 0.02);
    let empty = markov::simulate_chain(&initial, &[], 20_000, 5).unwrap();
    assert_eq!(empty, d);
    assert_eq!(markov::rho(&initial), 0.25);
}

#[test]
fn simulation_is_reproducible_and_thread_independent() {
    let stream: Vec<PrimeStep> = (0..30)
        .map(|k| PrimeStep {
            class: 1 + (k % 2) as u8,
            split: k % 3 != 1 || k % 2 == 1,
        })
        .collect();
    let initial = Distribution::point(0).unwrap();
    let a = markov::simulate_chain(&initial, &stream, 5000, 11).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let b = one.install(|| markov::simulate_chain(&initial, &stream, 5000, 11).unwrap());
    let c = four.install(|| markov::simulate_chain(&initial, &stream, 5000, 11).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(
        a,
        markov::simulate_chain(&initial, &stream, 5000, 12).unwrap()
    );
}

fn distribution() -> impl Strategy<Value = Distribution> {
    proptest::collection::vec((0usize..40, 0.01f64..1.0), 1..6).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut map = std::collections::BTreeMap::new();
        for (s, m) in pairs {
            *map.entry(s).or_insert(0.0) += m / total;
        }
        Distribution::from_map(&map).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_preserves_mass_and_parity(d in distribution(), w in 0usize..40) {
        let e = evolve(&d, w);
        prop_assert!((e.total() - 1.0).abs() < 1e-12);
        prop_assert!((markov::rho(&e) - markov::rho(&d)).abs() < 1e-12);
        if w == 0 {
            prop_assert_eq!(&e, &d);
        }
    }

    #[test]
    fn trajectories_keep_parity(s0 in 0usize..12, seed in any::<u64>()) {
        let stream: Vec<PrimeStep> = (0..25)
            .map(|k| PrimeStep { class: (k % 3) as u8, split: k % 3 == 2 || k % 2 == 0 })
            .collect();
        let mut rng = markov::trial_rng(seed, 0);
        if let Some(end) = markov::run_trial(&mut rng, s0, &stream).unwrap() {
            prop_assert_eq!(end % 2, s0 % 2);
        }
    }

    #[test]
    fn stationary_mixture_weights(rho in 0.0f64..=1.0) {
        let mix = markov::stationary_mixture(rho).unwrap();
        prop_assert!((markov::rho(&mix) - rho).abs() < 1e-12);
    }
}
