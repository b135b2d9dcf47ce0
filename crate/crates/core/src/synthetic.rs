//! Seeded synthetic series for tests, smoke runs and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::series::MultichannelSeries;

/// `x_c(t) = a_c * p(t mod tau) + b_c + noise`, where `p` is a random
/// two-harmonic seasonal profile shared by all channels.
pub fn seasonal_series<T: Scalar>(
    channels: usize,
    len: usize,
    tau: usize,
    noise_std: f64,
    seed: u64,
) -> Result<MultichannelSeries<T>> {
    if tau < 2 {
        return Err(Error::arg("synthetic period must be at least 2"));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::arg("noise std must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: [f64; 2] = [rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU)];
    let amps = [1.0, rng.random_range(0.2..0.6)];
    let profile: Vec<f64> = (0..tau)
        .map(|j| {
            let w = std::f64::consts::TAU * j as f64 / tau as f64;
            amps[0] * (w + phases[0]).sin() + amps[1] * (2.0 * w + phases[1]).sin()
        })
        .collect();
    let gains: Vec<f64> = (0..channels).map(|_| rng.random_range(0.5..2.0)).collect();
    let offsets: Vec<f64> = (0..channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::arg(e.to_string()))?;
    let values = Matrix::from_fn(len, channels, |t, c| {
        T::lit(gains[c] * profile[t % tau] + offsets[c] + noise.sample(&mut rng))
    });
    let names = (0..channels).map(|c| format!("ch{c}")).collect();
    MultichannelSeries::new(values, names, format!("synthetic-seasonal-{seed}"))
}
