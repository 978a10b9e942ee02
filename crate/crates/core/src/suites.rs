//! Seeded test families.
//!
//! Every random generator takes an explicit seed so that a failing case can
//! be replayed from the seed and index alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::{DensityFunction, TableExtension};

/// Named members of the standard suite: `f ≡ 1`, `geometric(log 2)`,
/// `gaussian_like(0.7, 1)` and `poisson_kernel(2)`.
pub fn standard_families() -> Vec<(&'static str, DensityFunction)> {
    vec![
        ("constant", DensityFunction::constant()),
        (
            "geometric(log 2)",
            DensityFunction::geometric(std::f64::consts::LN_2, 0.0).expect("valid parameters"),
        ),
        (
            "gaussian_like(0.7, 1)",
            DensityFunction::gaussian_like(0.7, 1.0).expect("valid parameters"),
        ),
        ("poisson_kernel(2)", DensityFunction::poisson_kernel(2.0).expect("valid parameters")),
    ]
}

/// The ultra-log-concave members of [`standard_families`] (the constant is
/// geometric, so it fails at `k = 1`).
pub fn standard_ulc_families() -> Vec<(&'static str, DensityFunction)> {
    standard_families()
        .into_iter()
        .filter(|(name, _)| matches!(*name, "gaussian_like(0.7, 1)" | "poisson_kernel(2)"))
        .collect()
}

/// `count` tables with log-values i.i.d. uniform on `[−2, 2]` at `0..=k_max`,
/// extended geometrically.
pub fn random_positive_tables(seed: u64, count: usize, k_max: usize) -> Vec<DensityFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let values = (0..=k_max).map(|_| rng.random_range(-2.0..=2.0f64).exp()).collect();
            DensityFunction::table(values, TableExtension::Geometric).expect("positive table")
        })
        .collect()
}

/// `count` ultra-log-concave tables `f = g/k!` on `0..=k_max` with `log g`
/// concave: first increment uniform on `[−1, 1]`, each later increment
/// smaller by a uniform draw from `[0, 0.1]`. The Poisson-tail extension
/// keeps the continuation ultra-log-concave.
pub fn random_ulc_tables(seed: u64, count: usize, k_max: usize) -> Vec<DensityFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut log_g = rng.random_range(-1.0..=1.0f64);
            let mut step = rng.random_range(-1.0..=1.0f64);
            let mut log_fact = 0.0;
            let mut values = Vec::with_capacity(k_max + 1);
            for k in 0..=k_max {
                if k > 0 {
                    log_fact += (k as f64).ln();
                    log_g += step;
                    step -= rng.random_range(0.0..=0.1f64);
                }
                values.push((log_g - log_fact).exp());
            }
            DensityFunction::table(values, TableExtension::PoissonTail).expect("positive table")
        })
        .collect()
}

/// `count` geometric densities with `a, b` uniform on `[−1, 1]`, paired with a
/// horizon drawn from `{0.5, 1, 2}`.
pub fn random_geometric(seed: u64, count: usize) -> Vec<(DensityFunction, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = rng.random_range(-1.0..=1.0f64);
            let b = rng.random_range(-1.0..=1.0f64);
            let horizon = [0.5, 1.0, 2.0][rng.random_range(0..3usize)];
            (DensityFunction::geometric(a, b).expect("finite parameters"), horizon)
        })
        .collect()
}
