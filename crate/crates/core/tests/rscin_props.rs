mod common;

use common::{random_global, rng};
use proptest::prelude::*;
use rand::RngExt;
use zsad_core::rscin::{build_affinity, rescore, Affinity};
use zsad_core::testkit::oracle_rescore;
use zsad_core::RscinConfig;

fn instance(seed: u64, n: usize) -> (Vec<f64>, Affinity) {
    let mut g = rng(seed);
    let raw = (0..n).map(|_| g.random_range(-3.0..3.0)).collect();
    (raw, build_affinity(&random_global(&mut g, n, 4)).unwrap())
}

fn windows() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(1usize..12, 1..4)
}

proptest! {
    #[test]
    fn refined_stays_within_raw_range(seed: u64, n in 2usize..15, w in windows()) {
        let (raw, s) = instance(seed, n);
        let out = rescore(&raw, &s, &RscinConfig { windows: w }).unwrap();
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for r in out.refined {
            prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
        }
    }

    #[test]
    fn identity_affinity_keeps_raw(seed: u64, n in 2usize..15, w in windows()) {
        let (raw, _) = instance(seed, n);
        let out = rescore(&raw, &Affinity::identity(n), &RscinConfig { windows: w }).unwrap();
        for (a, b) in out.refined.iter().zip(&raw) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_of_one_keeps_raw(seed: u64, n in 2usize..15) {
        let (raw, s) = instance(seed, n);
        let out = rescore(&raw, &s, &RscinConfig { windows: vec![1] }).unwrap();
        prop_assert_eq!(out.refined, raw);
    }

    #[test]
    fn uniform_affinity_gives_the_mean(seed: u64, n in 2usize..15) {
        let (raw, _) = instance(seed, n);
        let s = Affinity::from_rows(n, vec![1.0; n * n]).unwrap();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let out = rescore(&raw, &s, &RscinConfig { windows: vec![n] }).unwrap();
        for r in out.refined {
            prop_assert!((r - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_equivariant(seed: u64, n in 2usize..15, c in -10.0f64..10.0, w in windows()) {
        let (raw, s) = instance(seed, n);
        let cfg = RscinConfig { windows: w };
        let shifted: Vec<f64> = raw.iter().map(|r| r + c).collect();
        let a = rescore(&raw, &s, &cfg).unwrap().refined;
        let b = rescore(&shifted, &s, &cfg).unwrap().refined;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x + c - y).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_reference(seed: u64, n in 2usize..15, w in windows()) {
        let (raw, s) = instance(seed, n);
        let out = rescore(&raw, &s, &RscinConfig { windows: w.clone() }).unwrap();
        for (x, y) in out.refined.iter().zip(oracle_rescore(&raw, &s, &w)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn oversized_window_is_clamped_and_reported() {
    let (raw, s) = instance(9, 4);
    let out = rescore(&raw, &s, &RscinConfig::default()).unwrap();
    assert_eq!(out.clamped_windows, vec![8, 9]);
}

#[test]
fn affinity_diagonal_is_exactly_one() {
    let mut g = rng(2);
    let s = build_affinity(&random_global(&mut g, 6, 3)).unwrap();
    for i in 0..6 {
        assert_eq!(s.get(i, i), 1.0);
        assert!(s.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
