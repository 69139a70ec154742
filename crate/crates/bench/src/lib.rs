//! Seeded inputs shared by the benchmarks.

use edgenas_core::tpe::{run_optimization, ObservationHistory};
use edgenas_core::{Configuration, SearchSpace, Surrogate, TpeSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sample_configs(space: &SearchSpace, n: usize, seed: u64) -> Vec<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| space.sample_uniform(&mut rng)).collect()
}

/// Accuracy / latency / power triples on a coarse grid, so ties occur.
pub fn objective_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                f64::from(rng.random_range(880..1000u32)) / 10.0,
                f64::from(rng.random_range(1..100u32)) / 10.0,
                f64::from(rng.random_range(1..40u32)) / 10.0,
            ]
        })
        .collect()
}

/// A finished optimizer history of `len` trials on the surrogate.
pub fn surrogate_history(space: &SearchSpace, len: usize, seed: u64) -> ObservationHistory {
    let surrogate = Surrogate::new(space.clone(), 42);
    let settings = TpeSettings {
        seed,
        budget: len,
        ..TpeSettings::default()
    };
    run_optimization(space, settings, None, |c| Ok(-surrogate.base_accuracy(c)?)).expect("surrogate never fails")
}
