//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use fatesim_core::agents::actor_critic::Batch;
use fatesim_core::{suite, AppModel};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn social_model() -> Arc<AppModel> {
    Arc::new(suite::generate(&suite::preset("social/20_str").expect("preset")).expect("generate"))
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Replay batch with one-hot-ish states, actions in `[-1, 1]` and sparse
/// large rewards.
pub fn random_batch(rows: usize, obs_len: usize, rng: &mut ChaCha8Rng) -> Batch {
    let state = |rng: &mut ChaCha8Rng| {
        Array2::from_shape_simple_fn((rows, obs_len), || f64::from(rng.random_bool(0.3)))
    };
    Batch {
        s: state(rng),
        a: random_matrix(rows, 3, rng),
        r: Array1::from_shape_simple_fn(rows, || if rng.random_bool(0.05) { 1000.0 } else { -1.0 }),
        s2: state(rng),
        d: Array1::zeros(rows),
    }
}
