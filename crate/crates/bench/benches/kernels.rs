use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use zsad_core::lnamd::aggregate;
use zsad_core::metrics::{aupro, roc_auc};
use zsad_core::msm::mutual_score;
use zsad_core::testkit::{synth_bundle, SynthSpec};
use zsad_core::{AnomalyMap, AuproConfig, MsmConfig};

fn spec(n_images: usize, grid: usize) -> SynthSpec {
    SynthSpec {
        n_images,
        grid_h: grid,
        grid_w: grid,
        n_layers: 1,
        ..SynthSpec::default()
    }
}

fn bench_aggregate(c: &mut Criterion) {
    let ds = synth_bundle(&spec(16, 14)).unwrap();
    let mut group = c.benchmark_group("aggregate");
    for r in [1, 3, 5] {
        group.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            b.iter(|| aggregate(black_box(&ds.segmentation), r).unwrap())
        });
    }
    group.finish();
}

fn bench_mutual_score(c: &mut Criterion) {
    let mut group = c.benchmark_group("mutual_score");
    group.sample_size(10);
    for n in [8, 16, 32] {
        let agg = aggregate(&synth_bundle(&spec(n, 14)).unwrap().segmentation, 3).unwrap();
        group.bench_with_input(BenchmarkId::new("images", n), &agg, |b, agg| {
            b.iter(|| mutual_score(black_box(agg), &MsmConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let n = 200_000;
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 7 == 0)).collect();
    let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 10_007) as f64).collect();
    c.bench_function("roc_auc/200k", |b| {
        b.iter(|| roc_auc(black_box(&labels), black_box(&scores)).unwrap())
    });

    let ds = synth_bundle(&spec(8, 14)).unwrap();
    let masks: Vec<_> = ds.ground_truth.masks.iter().flatten().collect();
    let maps: Vec<AnomalyMap> = masks
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let values = m
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| f32::from(v) * 0.5 + ((i * 31 + k * 17) % 101) as f32 / 101.0)
                .collect();
            AnomalyMap::new(m.h, m.w, values).unwrap()
        })
        .collect();
    let map_refs: Vec<_> = maps.iter().collect();
    c.bench_function("aupro/8x224x224", |b| {
        b.iter(|| {
            aupro(
                black_box(&masks),
                black_box(&map_refs),
                &AuproConfig::default(),
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_aggregate, bench_mutual_score, bench_metrics);
criterion_main!(benches);
