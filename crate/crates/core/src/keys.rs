//! Seasonal circular keys.
//!
//! Orthogonality lives at the segment scale: the base key has length `tau`
//! and its `tau x tau` circulant is orthogonal. Periodicity lives at the
//! sequence scale: the base is tiled to the full window length. A tiled key
//! of length `L > tau` spans only `tau` shift directions, so it cannot itself
//! be an orthogonal circulant of size `L`.

use std::path::Path;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::idft;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyKind {
    SeasonalOrthogonal,
    RandomNormal,
    RandomBernoulli,
    Delta,
}

impl std::str::FromStr for KeyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" | "seasonal-orthogonal" => Ok(Self::SeasonalOrthogonal),
            "random-normal" | "normal" => Ok(Self::RandomNormal),
            "random-bernoulli" | "bernoulli" => Ok(Self::RandomBernoulli),
            "delta" => Ok(Self::Delta),
            other => Err(Error::Config(format!("unknown key kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomDist {
    Normal,
    Bernoulli,
}

/// A base key of length `tau`; tile it to obtain the sequence-scale key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CircularKey<T> {
    pub base: Vec<T>,
    pub kind: KeyKind,
    /// Sum of squares of `base`, as computed.
    pub sum_sq: T,
    pub seed: u64,
}

impl<T: Scalar> CircularKey<T> {
    fn from_base(base: Vec<T>, kind: KeyKind, seed: u64) -> Self {
        let sum_sq = crate::scalar::dot(&base, &base);
        Self {
            base,
            kind,
            sum_sq,
            seed,
        }
    }

    pub fn tau(&self) -> usize {
        self.base.len()
    }

    /// The key tiled to `len` samples, `k_t = base[t mod tau]`.
    pub fn tiled(&self, len: usize) -> Vec<T> {
        tile_key(&self.base, len)
    }

    /// Builds the key described by `(kind, tau, seed)`.
    pub fn build(kind: KeyKind, tau: usize, seed: u64) -> Result<Self> {
        match kind {
            KeyKind::SeasonalOrthogonal => make_orthogonal_key(tau, seed),
            KeyKind::RandomNormal => make_random_key(tau, RandomDist::Normal, seed),
            KeyKind::RandomBernoulli => make_random_key(tau, RandomDist::Bernoulli, seed),
            KeyKind::Delta => make_delta_key(tau),
        }
    }

    /// Writes the JSON sidecar used to rebuild the key elsewhere.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let key: Self = serde_json::from_str(&text)?;
        if key.base.is_empty() {
            return Err(Error::Data(format!("{}: key has an empty base", path.display())));
        }
        Ok(key)
    }
}

fn check_tau(tau: usize) -> Result<()> {
    if tau == 0 {
        Err(Error::arg("key length tau must be at least 1"))
    } else {
        Ok(())
    }
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Real key whose spectrum has unit modulus, so its circulant is orthogonal.
///
/// Phases of the first half of the spectrum are drawn from a seeded RNG and
/// mirrored with conjugate symmetry; the DC bin (and the Nyquist bin for even
/// `tau`) get a random sign.
pub fn make_orthogonal_key<T: Scalar>(tau: usize, seed: u64) -> Result<CircularKey<T>> {
    check_tau(tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex::new(0.0f64, 0.0); tau];
    spectrum[0] = Complex::new(random_sign(&mut rng), 0.0);
    for j in 1..=(tau - 1) / 2 {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        spectrum[j] = Complex::from_polar(1.0, theta);
        spectrum[tau - j] = spectrum[j].conj();
    }
    if tau % 2 == 0 && tau >= 2 {
        spectrum[tau / 2] = Complex::new(random_sign(&mut rng), 0.0);
    }
    // `idft` already carries the 1/tau factor
    let time = idft(&spectrum);
    debug_assert!(time.iter().all(|v| v.im.abs() < 1e-10));
    let base = time.into_iter().map(|v| T::lit(v.re)).collect();
    Ok(CircularKey::from_base(base, KeyKind::SeasonalOrthogonal, seed))
}

/// `k_t = base[t mod tau]` for `t < len`.
pub fn tile_key<T: Scalar>(base: &[T], len: usize) -> Vec<T> {
    assert!(!base.is_empty(), "cannot tile an empty key");
    base.iter().copied().cycle().take(len).collect()
}

/// HRR-style random key: `N(0, 1/tau)` entries or `+-1/sqrt(tau)`.
pub fn make_random_key<T: Scalar>(tau: usize, dist: RandomDist, seed: u64) -> Result<CircularKey<T>> {
    check_tau(tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (tau as f64).sqrt();
    let (base, kind): (Vec<T>, _) = match dist {
        RandomDist::Normal => {
            let normal = Normal::new(0.0, scale).expect("positive scale");
            (
                (0..tau).map(|_| T::lit(normal.sample(&mut rng))).collect(),
                KeyKind::RandomNormal,
            )
        }
        RandomDist::Bernoulli => (
            (0..tau).map(|_| T::lit(random_sign(&mut rng) * scale)).collect(),
            KeyKind::RandomBernoulli,
        ),
    };
    Ok(CircularKey::from_base(base, kind, seed))
}

/// `[1, 0, ..., 0]`: the identity for circular convolution.
pub fn make_delta_key<T: Scalar>(tau: usize) -> Result<CircularKey<T>> {
    check_tau(tau)?;
    let mut base = vec![T::zero(); tau];
    base[0] = T::one();
    Ok(CircularKey::from_base(base, KeyKind::Delta, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dft, predictability_score};

    // explicit circulant: column j is the key cyclically shifted by j
    fn circulant(k: &[f64]) -> Vec<Vec<f64>> {
        let n = k.len();
        (0..n).map(|r| (0..n).map(|c| k[(r + n - c) % n]).collect()).collect()
    }

    fn max_gram_error(k: &[f64]) -> f64 {
        let c = circulant(k);
        let n = k.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let g: f64 = (0..n).map(|r| c[r][i] * c[r][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    #[test]
    fn scalar_orthogonal_key() {
        let k: CircularKey<f64> = make_orthogonal_key(1, 3).unwrap();
        assert_eq!(k.base.len(), 1);
        assert!((k.base[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_key_has_orthogonal_circulant() {
        for seed in 0..5 {
            let k: CircularKey<f64> = make_orthogonal_key(4, seed).unwrap();
            assert!(max_gram_error(&k.base) < 1e-10);
            assert!((k.sum_sq - 1.0).abs() < 1e-10);
        }
        let k: CircularKey<f64> = make_orthogonal_key(24, 11).unwrap();
        assert!(max_gram_error(&k.base) < 1e-8);
    }

    #[test]
    fn orthogonal_key_spectrum_is_unit_modulus() {
        for tau in [1, 2, 3, 5, 12, 30] {
            let k: CircularKey<f64> = make_orthogonal_key(tau, 99).unwrap();
            assert!(dft(&k.base).iter().all(|v| (v.norm() - 1.0).abs() < 1e-8), "tau={tau}");
        }
    }

    #[test]
    fn single_precision_key() {
        let k: CircularKey<f32> = make_orthogonal_key(12, 5).unwrap();
        assert!((k.sum_sq - 1.0).abs() < 1e-5);
    }

    #[test]
    fn keys_are_reproducible() {
        for kind in [KeyKind::SeasonalOrthogonal, KeyKind::RandomNormal, KeyKind::RandomBernoulli] {
            let a: CircularKey<f64> = CircularKey::build(kind, 17, 42).unwrap();
            let b: CircularKey<f64> = CircularKey::build(kind, 17, 42).unwrap();
            assert_eq!(
                a.base.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.base.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            let recomputed: f64 = a.base.iter().map(|v| v * v).sum();
            assert!((a.sum_sq - recomputed).abs() < 1e-12);
        }
    }

    #[test]
    fn tiling() {
        assert_eq!(tile_key(&[1.0, 0.0], 4), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(tile_key(&[1.0, 2.0, 3.0], 7), vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        let k: CircularKey<f64> = make_orthogonal_key(6, 1).unwrap();
        let tiled = k.tiled(20);
        assert!((predictability_score(&tiled, 6).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_keys() {
        let k: CircularKey<f64> = make_random_key(4, RandomDist::Bernoulli, 0).unwrap();
        assert!(k.base.iter().all(|v| v.abs() == 0.5));
        assert_eq!(k.sum_sq, 1.0);
        let k: CircularKey<f64> = make_random_key(1000, RandomDist::Normal, 2024).unwrap();
        assert!((0.8..=1.2).contains(&k.sum_sq), "{}", k.sum_sq);
    }

    #[test]
    fn delta_key() {
        let k: CircularKey<f64> = make_delta_key(3).unwrap();
        assert_eq!(k.base, vec![1.0, 0.0, 0.0]);
        assert_eq!(k.sum_sq, 1.0);
        assert!(make_delta_key::<f64>(0).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("key.json");
        let k: CircularKey<f64> = make_orthogonal_key(24, 8).unwrap();
        k.save(&path).unwrap();
        assert_eq!(CircularKey::<f64>::load(&path).unwrap(), k);
    }
}
