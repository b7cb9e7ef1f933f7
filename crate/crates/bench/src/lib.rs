//! Inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scosara_core::model::{generate_dataset, JacobianTensor, Roi};
use scosara_core::train::dataset_jacobians;
use scosara_core::ForwardModel;

/// Desk-scale model with `count` Jacobians, seeded.
pub fn desk_inputs(count: usize, seed: u64) -> (ForwardModel, Vec<JacobianTensor>) {
    let model = ForwardModel::desk_default();
    let ds = generate_dataset(Roi::desk_default(), count, (0.5, 1.5), seed).expect("dataset");
    let jacs = dataset_jacobians(&model, &ds).expect("jacobians");
    (model, jacs)
}

pub fn uniform_logits(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
