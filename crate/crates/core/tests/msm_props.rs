mod common;

use common::{random_bundle, rng};
use proptest::prelude::*;
use zsad_core::lnamd::aggregate;
use zsad_core::msm::{combine, min_cross_distances, mutual_score};
use zsad_core::store::LayerFeatures;
use zsad_core::testkit::{oracle_min_cross_distances, oracle_msm};
use zsad_core::{FeatureBundle, MsmConfig, Purpose};

fn permuted(bundle: &FeatureBundle, perm: &[usize]) -> FeatureBundle {
    let layers = bundle
        .layers()
        .iter()
        .map(|l| {
            let per_image = bundle.n_patches() * l.dim();
            let data = perm
                .iter()
                .flat_map(|&i| l.data()[i * per_image..(i + 1) * per_image].iter().copied())
                .collect();
            LayerFeatures::new(l.layer_id(), l.dim(), data)
        })
        .collect();
    FeatureBundle::new(
        Purpose::Segmentation,
        bundle.n_images(),
        bundle.grid_h(),
        bundle.grid_w(),
        layers,
        None,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_exhaustive_reference(seed: u64, n in 2usize..=5, gh in 1usize..=4, gw in 1usize..=4,
                                    dim in 1usize..=8, frac in 0.05f64..=1.0, budget in 4usize..4096) {
        let mut g = rng(seed);
        let agg = aggregate(&random_bundle(&mut g, n, gh, gw, &[dim, 2]), 1).unwrap();
        let cfg = MsmConfig { interval_fraction: frac, mem_budget_bytes: budget };
        let slices = mutual_score(&agg, &cfg).unwrap();
        let reference = oracle_msm(&agg, frac).unwrap();
        for (slice, want) in slices.iter().zip(&reference) {
            for (x, y) in slice.scores.iter().zip(want) {
                prop_assert!((x - y).abs() < 1e-6, "{x} vs {y}");
                prop_assert!((0.0..=2.0).contains(x));
            }
        }
        let q = n - 1;
        let d = min_cross_distances(&agg, 1, q, &cfg).unwrap();
        for (p, row) in oracle_min_cross_distances(&agg, 1, q).unwrap().iter().enumerate() {
            for (c, y) in row.iter().enumerate() {
                prop_assert!((d.get(p, c) - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn permutation_equivariant(seed: u64, n in 2usize..=6, shuffle in any::<proptest::sample::Index>()) {
        let mut g = rng(seed);
        let bundle = random_bundle(&mut g, n, 3, 3, &[4]);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(shuffle.index(n));
        perm.swap(0, n - 1);
        let cfg = MsmConfig::default();
        let base = combine(mutual_score(&aggregate(&bundle, 3).unwrap(), &cfg).unwrap()).unwrap();
        let moved = combine(mutual_score(&aggregate(&permuted(&bundle, &perm), 3).unwrap(), &cfg).unwrap()).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (x, y) in moved.image(new_i).iter().zip(base.image(old_i)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn farther_neighbors_never_lower_a_score(seed: u64, n in 2usize..=5, p in 0usize..9, other in 1usize..5) {
        let other = other % n;
        prop_assume!(other != 0);
        let mut g = rng(seed);
        let mut agg = aggregate(&random_bundle(&mut g, n, 3, 3, &[5]), 1).unwrap();
        let cfg = MsmConfig::default();
        let before = mutual_score(&agg, &cfg).unwrap()[0].image(0)[p];
        let anti: Vec<f32> = agg.patch(0, 0, p).iter().map(|v| -v).collect();
        let per_image = 9 * 5;
        for q in 0..9 {
            let at = other * per_image + q * 5;
            agg.layers[0].data[at..at + 5].copy_from_slice(&anti);
        }
        let after = mutual_score(&agg, &cfg).unwrap()[0].image(0)[p];
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn duplicate_image_zeroes_scores(seed: u64, n in 2usize..=4) {
        let mut g = rng(seed);
        let bundle = random_bundle(&mut g, n, 3, 3, &[6]);
        let mut perm: Vec<usize> = (0..n).collect();
        perm[1] = 0;
        let agg = aggregate(&permuted(&bundle, &perm), 1).unwrap();
        let slices = mutual_score(&agg, &MsmConfig::default()).unwrap();
        for s in slices[0].image(0).iter().chain(slices[0].image(1)) {
            prop_assert!(s.abs() < 1e-6);
        }
    }
}

#[test]
fn two_identical_images_score_zero_in_the_oracle() {
    let mut g = rng(3);
    let bundle = random_bundle(&mut g, 2, 2, 2, &[3]);
    let agg = aggregate(&permuted(&bundle, &[0, 0]), 1).unwrap();
    assert!(oracle_msm(&agg, 0.3).unwrap()[0]
        .iter()
        .all(|s| s.abs() < 1e-6));
}

#[test]
fn rejects_single_image_and_bad_fraction() {
    let mut g = rng(4);
    let agg = aggregate(&random_bundle(&mut g, 2, 2, 2, &[3]), 1).unwrap();
    let bad = MsmConfig {
        interval_fraction: 0.0,
        ..MsmConfig::default()
    };
    assert!(mutual_score(&agg, &bad).is_err());
    let mut single = agg.clone();
    single.n_images = 1;
    assert!(mutual_score(&single, &MsmConfig::default()).is_err());
}
