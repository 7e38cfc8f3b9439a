mod common;

use std::fs;

use common::{random_bundle, random_global, rng};
use proptest::prelude::*;
use rand::RngExt;
use zsad_core::store::{load_bundle, save_bundle};
use zsad_core::{DatasetManifest, FeatureBundle, Purpose};

fn write(bundle: &FeatureBundle, dir: &std::path::Path) -> std::path::PathBuf {
    let mut m = DatasetManifest::new(
        (0..bundle.n_images()).map(|i| format!("i{i}")).collect(),
        8,
        8,
    );
    m.bundles.push(save_bundle(bundle, dir, "f").unwrap());
    let path = dir.join("manifest.json");
    m.write(&path).unwrap();
    path
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roundtrip_is_bit_exact(seed: u64, n in 2usize..5, gh in 1usize..5, gw in 1usize..5,
                              dims in proptest::collection::vec(1usize..6, 1..4), with_global: bool) {
        let mut g = rng(seed);
        let b = random_bundle(&mut g, n, gh, gw, &dims);
        let global = with_global.then(|| random_global(&mut g, n, 3));
        let b = FeatureBundle::new(Purpose::Classification, n, gh, gw, b.layers().to_vec(), global).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let back = load_bundle(write(&b, dir.path()), Purpose::Classification).unwrap();
        prop_assert_eq!(back.layers().len(), b.layers().len());
        for (x, y) in back.layers().iter().zip(b.layers()) {
            prop_assert_eq!(x.layer_id(), y.layer_id());
            let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(xb, yb);
        }
        prop_assert_eq!(back.global_features(), b.global_features());
    }

    #[test]
    fn corrupted_inputs_error_without_panicking(seed: u64, mode in 0u8..4) {
        let mut g = rng(seed);
        let b = random_bundle(&mut g, 3, 2, 3, &[4]);
        let dir = tempfile::tempdir().unwrap();
        let path = write(&b, dir.path());
        let blob = dir.path().join("f_layer5.f32");
        let mut bytes = fs::read(&blob).unwrap();
        match mode {
            0 => bytes.truncate(g.random_range(0..bytes.len())),
            1 => bytes.extend((0..g.random_range(1..9)).map(|_| g.random::<u8>())),
            2 => {
                for _ in 0..g.random_range(1..8) {
                    let at = g.random_range(0..bytes.len());
                    bytes[at] = g.random();
                }
            }
            _ => {
                let mut text = fs::read(&path).unwrap();
                let at = g.random_range(0..text.len());
                text.truncate(at);
                text.push(g.random());
                fs::write(&path, text).unwrap();
            }
        }
        fs::write(&blob, &bytes).unwrap();
        if let Ok(loaded) = load_bundle(&path, Purpose::Segmentation) {
            prop_assert!(loaded.layers()[0].data().iter().all(|v| v.is_finite()));
            prop_assert_eq!(loaded.layers()[0].data().len(), 3 * 6 * 4);
        }
    }
}
