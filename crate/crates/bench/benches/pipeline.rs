use criterion::{black_box, criterion_group, criterion_main, Criterion};

use jam_core::harness::{prepare_examples, scene_gradient, scene_records, RunConfig};
use jam_core::metrics::{metrics_rows, ThresholdTable};
use jam_core::model::{JamModel, Variant};
use jam_core::scene::{generate_dataset, uniform_mix, Dataset, DatasetSpec, SceneDims};

fn micro(variant: Variant) -> JamModel {
    JamModel::new(RunConfig::desk(variant).model_config().unwrap()).unwrap()
}

fn data(n: usize) -> Dataset {
    generate_dataset(&DatasetSpec {
        n_scenes: n,
        dims: SceneDims::micro(),
        mix: uniform_mix(),
        uturn_rate: 0.2,
        seed: 9,
    })
    .unwrap()
}

fn pipeline(c: &mut Criterion) {
    let ds = data(16);
    c.bench_function("datagen_16_scenes", |b| b.iter(|| data(black_box(16))));

    for variant in [Variant::Jam, Variant::JointOnestep, Variant::MarginalAware] {
        let m = micro(variant);
        let scene = &ds.scenes[0];
        c.bench_function(&format!("predict_{}", variant.name()), |b| {
            b.iter(|| m.predict(black_box(scene)).unwrap())
        });
        let ex = prepare_examples(&m, &ds, None).unwrap();
        c.bench_function(&format!("scene_gradient_{}", variant.name()), |b| {
            b.iter(|| scene_gradient(&m, black_box(&ex[0])).unwrap())
        });
    }

    let m = micro(Variant::Jam);
    let table = ThresholdTable::default();
    let records = scene_records(&m, &ds, &table).unwrap();
    c.bench_function("metrics_rows_16_scenes", |b| {
        b.iter(|| metrics_rows("jam", black_box(&records), &table).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = pipeline
}
criterion_main!(benches);
