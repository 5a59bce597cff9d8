use fdd_core::fuzzy::Verdict;
use fdd_core::reputation::{ReputationConfig, ReputationStore};
use proptest::prelude::*;

fn verdict() -> impl Strategy<Value = Verdict> {
    prop_oneof![Just(Verdict::No), Just(Verdict::Warning), Just(Verdict::Yes)]
}

proptest! {
    #[test]
    fn level_bounded_and_directional(events in prop::collection::vec((verdict(), 0.0f64..=100.0), 1..200)) {
        let mut store = ReputationStore::new(ReputationConfig::default()).unwrap();
        store.init("v", 0).unwrap();
        for (t, (v, d)) in events.into_iter().enumerate() {
            let up = store.apply("v", v, d, t as i64 + 1).unwrap();
            prop_assert!((0.0..=1.0).contains(&up.new_r));
            match v {
                Verdict::No => prop_assert!(up.new_r >= up.old_r),
                _ => prop_assert!(up.new_r <= up.old_r),
            }
        }
    }

    #[test]
    fn decay_pulls_toward_prior(yes in 1usize..20, gap in 1i64..1_000_000) {
        let config = ReputationConfig { half_life_ms: Some(1000.0), ..Default::default() };
        let mut store = ReputationStore::new(config).unwrap();
        store.init("v", 0).unwrap();
        for t in 0..yes {
            store.apply("v", Verdict::Yes, 100.0, t as i64).unwrap();
        }
        let before = store.get_status("v").unwrap().level;
        let after = store.apply("v", Verdict::No, 0.0, yes as i64 + gap).unwrap().new_r;
        prop_assert!(after > before);
        prop_assert!(after <= 2.0 / 3.0 + 1e-12);
    }

    #[test]
    fn snapshot_round_trip(events in prop::collection::vec((0usize..5, verdict(), 0.0f64..=100.0), 0..100)) {
        let config = ReputationConfig::default();
        let mut store = ReputationStore::new(config).unwrap();
        for i in 0..5 {
            store.init(&format!("s{i}"), 0).unwrap();
        }
        for (t, (i, v, d)) in events.into_iter().enumerate() {
            store.apply(&format!("s{i}"), v, d, t as i64).unwrap();
        }
        prop_assert_eq!(ReputationStore::from_json(config, &store.to_json()).unwrap(), store);
    }
}

#[test]
fn quarantine_has_hysteresis() {
    let mut config = ReputationConfig::default();
    config.weights.no_reward = 0.05;
    let mut store = ReputationStore::new(config).unwrap();
    store.init("v", 0).unwrap();
    store.apply("v", Verdict::Yes, 100.0, 1).unwrap();
    assert!(store.apply("v", Verdict::Yes, 100.0, 2).unwrap().quarantined);
    let mut t = 3;
    let mut held = 0;
    loop {
        let up = store.apply("v", Verdict::No, 0.0, t).unwrap();
        t += 1;
        if up.new_r <= 0.35 {
            assert!(up.quarantined, "released at {}", up.new_r);
            held += (up.new_r >= 0.3) as usize;
        } else {
            assert!(!up.quarantined);
            break;
        }
    }
    assert!(held > 0);
}

#[test]
fn unknown_and_duplicate_sources() {
    let mut store = ReputationStore::new(ReputationConfig::default()).unwrap();
    assert!(store.apply("x", Verdict::No, 0.0, 0).is_err());
    store.init("x", 0).unwrap();
    assert!(store.init("x", 1).is_err());
}
