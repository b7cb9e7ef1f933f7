use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use scosara_bench::{desk_inputs, uniform_logits};
use scosara_core::baselines::{greedy_selection, uniform_selection};
use scosara_core::fim::{kron_apply, weight_tensor};
use scosara_core::recovery::{build_dictionary, default_lambda, fista, measurements, pair_scenario, RoiGrid};
use scosara_core::sampling::gumbel_noise;
use scosara_core::train::{loss_gradient, TrainConfig};
use scosara_core::{Roi, Sampling, StructuredSelector, C64};

fn kernels(c: &mut Criterion) {
    let (model, jacs) = desk_inputs(8, 1);
    let layout = model.layout();
    let dims = model.shape().to_vec();

    let sel = uniform_selection(&[4, 4, 4], &layout).unwrap();
    let selector = StructuredSelector::from_hard(&sel, &layout).unwrap();
    let v: Vec<C64> = (0..model.len()).map(|k| C64::new(k as f64, 1.0)).collect();
    c.bench_function("kron_apply 8x8x16", |b| b.iter(|| kron_apply(&selector, black_box(&v)).unwrap()));

    let cfg = TrainConfig::default();
    let phi = uniform_logits(layout.total(), 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let noise = gumbel_noise(layout.total(), &mut rng);
    let batch: Vec<_> = jacs.iter().collect();
    c.bench_function("loss_gradient batch 8", |b| {
        b.iter(|| loss_gradient(black_box(&phi), &batch, &layout, &cfg, 0.5, &noise).unwrap())
    });

    let w = weight_tensor(&jacs, &dims).unwrap();
    c.bench_function("greedy budget 12", |b| b.iter(|| greedy_selection(&w, 12, &layout, 1, 1.0).unwrap()));

    let roi = Roi { x_min: -1.5e-3, x_max: 1.5e-3, z_min: 12.5e-3, z_max: 15.5e-3 };
    let grid = RoiGrid::half_wavelength(&roi, &model.pulse).unwrap();
    let sampling = Sampling::Structured(uniform_selection(&[5, 5, 2], &layout).unwrap());
    let dict = build_dictionary(&grid, &model, &sampling).unwrap();
    let y = measurements(&model, &pair_scenario(&grid, 3).unwrap(), &sampling).unwrap();
    let lambda = default_lambda(&dict, &y);
    c.bench_function("fista 200 iterations", |b| b.iter(|| fista(&dict, black_box(&y), lambda, 200).unwrap()));
}


criterion_group!(benches, kernels);
criterion_main!(benches);
