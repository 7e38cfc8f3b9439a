mod common;

use common::{bundle_from, random_bundle, rng, uniform_vec};
use proptest::prelude::*;
use zsad_core::lnamd::{aggregate, aggregate_unnormalized};
use zsad_core::testkit::oracle_lnamd;

fn grid_and_degree() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(gh, gw)| {
        let max_r = gh.min(gw);
        let degrees: Vec<usize> = [1, 3, 5].into_iter().filter(|&r| r <= max_r).collect();
        (Just(gh), Just(gw), proptest::sample::select(degrees))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_field_is_a_fixpoint(seed: u64, (gh, gw, r) in grid_and_degree(), n in 2usize..4, dim in 1usize..6) {
        let mut g = rng(seed);
        let v = uniform_vec(&mut g, dim);
        let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let data: Vec<f32> = (0..n * gh * gw).flat_map(|_| v.iter().copied()).collect();
        let agg = aggregate(&bundle_from(n, gh, gw, vec![(dim, data)]), r).unwrap();
        for i in 0..n {
            for p in 0..gh * gw {
                for (a, b) in agg.patch(0, i, p).iter().zip(&v) {
                    prop_assert!((f64::from(*a) - f64::from(*b) / norm).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn linear_before_normalization(seed: u64, (gh, gw, r) in grid_and_degree(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
        let mut g = rng(seed);
        let (n, dim) = (2, 3);
        let f = uniform_vec(&mut g, n * gh * gw * dim);
        let h = uniform_vec(&mut g, n * gh * gw * dim);
        let mix: Vec<f32> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
        let run = |d: Vec<f32>| aggregate_unnormalized(&bundle_from(n, gh, gw, vec![(dim, d)]), r).unwrap();
        let (am, af, ah) = (run(mix), run(f), run(h));
        for k in 0..am.layers[0].data.len() {
            let expect = a * af.layers[0].data[k] + b * ah.layers[0].data[k];
            prop_assert!((am.layers[0].data[k] - expect).abs() < 1e-5);
        }
    }

    #[test]
    fn matches_double_loop_reference(seed: u64, (gh, gw, r) in grid_and_degree(), normalize: bool) {
        let mut g = rng(seed);
        let bundle = random_bundle(&mut g, 2, gh, gw, &[3, 2]);
        let agg = if normalize { aggregate(&bundle, r) } else { aggregate_unnormalized(&bundle, r) }.unwrap();
        let reference = oracle_lnamd(&bundle, r, normalize);
        for (layer, want) in agg.layers.iter().zip(&reference) {
            for (x, y) in layer.data.iter().zip(want) {
                prop_assert!((f64::from(*x) - y).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn corner_mean_of_three_by_three() {
    let data: Vec<f32> = (1..=9).chain(1..=9).map(|v| v as f32).collect();
    let agg = aggregate_unnormalized(&bundle_from(2, 3, 3, vec![(1, data)]), 3).unwrap();
    assert_eq!(agg.patch(0, 0, 0), &[3.0]);
    assert_eq!(agg.patch(0, 1, 4), &[5.0]);
}

#[test]
fn rejects_even_or_oversized_degree() {
    let mut g = rng(1);
    let bundle = random_bundle(&mut g, 2, 3, 4, &[2]);
    assert!(aggregate(&bundle, 2).is_err());
    assert!(aggregate(&bundle, 5).is_err());
    assert!(aggregate(&bundle, 3).is_ok());
}
