use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use qnbm_bench::{bench_dataset, bench_model};
use qnbm_core::model::{Mode, QuantileNet};
use qnbm_core::numkit::{Matrix, RngState};
use qnbm_core::train::{adam_step, pinball_loss, AdamState};

fn forward_eval(c: &mut Criterion) {
    let dataset = bench_dataset(160);
    let model = bench_model(&dataset);
    let batch = Matrix::from_fn(128, dataset.n_features(), |r, col| {
        dataset.inputs.get(r % dataset.n_days(), col)
    });
    c.bench_function("forward_eval_128", |b| {
        b.iter(|| model.forward(&batch, Mode::Eval, None).unwrap())
    });
}

fn forward_backward(c: &mut Criterion) {
    let dataset = bench_dataset(160);
    let model = bench_model(&dataset);
    let batch = Matrix::from_fn(128, dataset.n_features(), |r, col| {
        dataset.inputs.get(r % dataset.n_days(), col)
    });
    let targets = Matrix::from_fn(128, dataset.horizon, |r, h| {
        dataset.targets.get(r % dataset.n_days(), h)
    });
    c.bench_function("train_step_128", |b| {
        b.iter_batched(
            || (model.clone(), AdamState::new(&model), RngState::seed_from(7)),
            |(mut m, mut state, mut rng)| {
                let (out, cache) = m.forward(&batch, Mode::Train, Some(&mut rng)).unwrap();
                let (_, grad) = pinball_loss(&targets, &out, m.levels()).unwrap();
                let grads = m.backward(&cache, &grad).unwrap();
                adam_step(&mut m, &grads, &mut state, 5e-4).unwrap();
                m
            },
            BatchSize::LargeInput,
        )
    });
}

fn pinball(c: &mut Criterion) {
    let dataset = bench_dataset(160);
    let model = bench_model(&dataset);
    let (out, _) = model.forward(&dataset.inputs, Mode::Eval, None).unwrap();
    c.bench_function("pinball_full_grid", |b| {
        b.iter(|| pinball_loss(&dataset.targets, &out, model.levels()).unwrap())
    });
}

fn shape_extraction(c: &mut Criterion) {
    use qnbm_core::interpret::{extract_shape, ShapeGridOptions};
    let dataset = bench_dataset(160);
    let model = bench_model(&dataset);
    let grid =
        qnbm_core::interpret::default_grid(&model, 80, ShapeGridOptions::default()).unwrap();
    c.bench_function("shape_curve_201pts", |b| {
        b.iter(|| extract_shape(&model, 80, 0.5, 12, &grid, 1.0, 0).unwrap())
    });
}

criterion_group!(benches, forward_eval, forward_backward, pinball, shape_extraction);
criterion_main!(benches);
