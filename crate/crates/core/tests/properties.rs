use proptest::prelude::*;

use dso_core::p2p::{net_trade, random_book, BookKind, Kw, NetTradePlan};
use dso_core::scenario::{generate, Forecast, ScenarioSet};

fn book_strategy() -> impl Strategy<Value = (BookKind, usize, usize, u64)> {
    (
        prop_oneof![Just(BookKind::Power), Just(BookKind::Energy)],
        2usize..6,
        0usize..5,
        any::<u64>(),
    )
}

fn forecast_strategy() -> impl Strategy<Value = Forecast<f64>> {
    (1usize..4, 1usize..6).prop_flat_map(|(n_p, h)| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, h), n_p),
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, h), n_p),
        )
            .prop_map(|(pv, load)| Forecast { pv, load })
    })
}

proptest! {
    #[test]
    fn net_trade_is_additive(a in book_strategy(), b in book_strategy()) {
        let n_p = a.1.max(b.1);
        let horizon = 6;
        let book_a = random_book(a.0, n_p, horizon, a.2, Kw(800), a.3);
        let mut book_b = random_book(b.0, n_p, horizon, b.2, Kw(800), b.3);
        for (k, c) in book_b.iter_mut().enumerate() {
            c.id = book_a.len() + k;
        }
        let whole: Vec<_> = book_a.iter().chain(&book_b).cloned().collect();
        let joint = net_trade(&whole, n_p, horizon).unwrap();
        let split = net_trade(&book_a, n_p, horizon)
            .unwrap()
            .combine(&net_trade(&book_b, n_p, horizon).unwrap());
        prop_assert_eq!(&joint, &split);
        for t in 0..horizon {
            let sum: Kw = (0..n_p).map(|i| joint.pb[i][t]).sum();
            prop_assert_eq!(sum, joint.imbalance[t]);
        }
    }

    #[test]
    fn power_books_are_balanced(n_p in 2usize..6, n in 0usize..6, seed in any::<u64>()) {
        let plan = net_trade(&random_book(BookKind::Power, n_p, 24, n, Kw(1000), seed), n_p, 24).unwrap();
        prop_assert!(plan.is_balanced());
    }

    #[test]
    fn energy_books_net_to_zero_over_the_day(n_p in 2usize..6, n in 0usize..6, seed in any::<u64>()) {
        let plan = net_trade(&random_book(BookKind::Energy, n_p, 24, n, Kw(1000), seed), n_p, 24).unwrap();
        let total: Kw = plan.imbalance.iter().copied().sum();
        prop_assert_eq!(total, Kw(0));
    }

    #[test]
    fn scenarios_reproduce_from_seed(f in forecast_strategy(), n_s in 1usize..6, seed in any::<u64>()) {
        let a = generate(&f, 0.5, 0.2, n_s, seed).unwrap();
        let b = generate(&f, 0.5, 0.2, n_s, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let w: f64 = a.omega.iter().sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
        prop_assert!(a.pv.iter().chain(&a.load).all(|&v| v >= 0.0));
    }

    #[test]
    fn scenario_csv_round_trips(f in forecast_strategy(), n_s in 1usize..4, seed in any::<u64>()) {
        let a = generate(&f, 0.5, 0.2, n_s, seed).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b: ScenarioSet<f64> = ScenarioSet::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(&a.pv, &b.pv);
        prop_assert_eq!(&a.load, &b.load);
        prop_assert_eq!(a.omega.len(), b.omega.len());
    }

    #[test]
    fn kw_round_trips_through_mw(k in -10_000_000i64..10_000_000) {
        prop_assert_eq!(Kw::from_mw(Kw(k).mw()).unwrap(), Kw(k));
    }
}

#[test]
fn zero_plan_is_both_zero_and_balanced() {
    let z = NetTradePlan::zero(3, 4);
    assert!(z.is_zero() && z.is_balanced());
}
