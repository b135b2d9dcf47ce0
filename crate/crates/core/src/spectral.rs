//! Spectral helpers: DFT, dominant-period detection, the shared LCM period,
//! PCA redundancy statistics and Pearson-based predictability.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::series::MultichannelSeries;

/// Magnitude below which a spectrum bin counts as empty, relative to the
/// L1 mass of the input (floored at 1).
pub const ZERO_ENERGY: f64 = 1e-12;

/// Forward transform `X_j = sum_t x_t exp(-2 pi i j t / n)`.
pub fn dft<T: Scalar>(x: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Normalized inverse transform, so that `idft(dft(x)) == x`.
pub fn idft<T: Scalar>(spectrum: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut buf = spectrum.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
        let n = T::from_usize_lossy(buf.len());
        for v in &mut buf {
            *v = *v / n;
        }
    }
    buf
}

/// Period of the strongest non-DC bin, `round(L / j*)`, clamped to
/// `[2, L/2]`. Ties go to the higher bin. `None` means the input carries no
/// energy outside DC.
pub fn dominant_period<T: Scalar>(x: &[T]) -> Result<Option<usize>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::arg(format!("period detection needs at least 4 samples, got {n}")));
    }
    let spectrum = dft(x);
    let mass = x.iter().map(|v| v.abs()).sum::<T>().max(T::one());
    let empty = T::lit(ZERO_ENERGY) * mass;

    let mut best: Option<(usize, T)> = None;
    for (j, bin) in spectrum.iter().enumerate().take(n / 2 + 1).skip(1) {
        let mag = bin.norm();
        if mag < empty {
            continue;
        }
        match best {
            // `>=` with a relative slack breaks near-ties toward larger j
            Some((_, top)) if mag < top * T::lit(1.0 - 1e-9) => {}
            _ => best = Some((j, mag)),
        }
    }
    Ok(best.map(|(j, _)| {
        let period = (n as f64 / j as f64).round() as usize;
        period.clamp(2, (n / 2).max(2))
    }))
}

/// Mean lagged product of the centred signal at `lag`.
fn autocovariance<T: Scalar>(x: &[T], mean: T, lag: usize) -> T {
    let pairs = x.len() - lag;
    (0..pairs).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<T>() / T::from_usize_lossy(pairs)
}

/// Spectral period refined to the integer lag of highest autocovariance
/// within one bin of resolution (`p^2 / n`) around the spectral estimate.
///
/// The periodogram alone can only return `round(n / j)`, which misses the
/// true period when `n` is not a multiple of it.
pub fn detect_period<T: Scalar>(x: &[T]) -> Result<Option<usize>> {
    let Some(p) = dominant_period(x)? else {
        return Ok(None);
    };
    let n = x.len();
    let reach = (p * p).div_ceil(n).max(1);
    let hi = (p + reach).min(n / 2);
    let lo = p.saturating_sub(reach).max(2);
    let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    let mut best = (p, autocovariance(x, mean, p));
    for lag in lo..=hi.max(lo) {
        let r = autocovariance(x, mean, lag);
        if r > best.1 {
            best = (lag, r);
        }
    }
    Ok(Some(best.0))
}

/// Per-channel periods and the period shared by all channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonalProfile {
    pub per_channel_period: Vec<usize>,
    pub shared_period: usize,
    /// The LCM exceeded `L/2` and a fallback period was chosen.
    pub capped: bool,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// LCM of the per-channel periods, or a fallback when that exceeds `L/2`.
///
/// The fallback is the candidate period `<= L/2` that the most channel
/// periods divide; among equally good candidates the largest wins.
pub fn shared_period(periods: &[usize], lookback: usize) -> Result<SeasonalProfile> {
    if periods.is_empty() {
        return Err(Error::arg("shared period of an empty period list"));
    }
    if let Some(bad) = periods.iter().find(|&&p| p < 2) {
        return Err(Error::arg(format!("seasonal periods must be >= 2, got {bad}")));
    }
    let cap = lookback / 2;
    let lcm = periods.iter().try_fold(1usize, |acc, &p| (acc / gcd(acc, p)).checked_mul(p));

    if let Some(l) = lcm.filter(|&l| l <= cap) {
        return Ok(SeasonalProfile {
            per_channel_period: periods.to_vec(),
            shared_period: l,
            capped: false,
        });
    }

    let score = |cand: usize| periods.iter().filter(|&&p| cand % p == 0).count();
    let fallback = periods
        .iter()
        .copied()
        .filter(|&p| p <= cap)
        .max_by_key(|&p| (score(p), p))
        // nothing fits under L/2: keep the shortest period
        .unwrap_or_else(|| *periods.iter().min().expect("non-empty"));
    Ok(SeasonalProfile {
        per_channel_period: periods.to_vec(),
        shared_period: fallback,
        capped: true,
    })
}

/// Variance concentration across channels (channels as variables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub pcs_at_threshold: usize,
    pub threshold: f64,
    pub top_k_var: f64,
    pub pc1_var: f64,
    pub pc2_var: f64,
    pub k: usize,
    pub channels: usize,
    /// Fewer timestamps than channels: the covariance is rank deficient.
    pub rank_deficient: bool,
    /// Explained-variance fraction per component, descending.
    pub explained: Vec<f64>,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn symmetric_eigenvalues<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "eigenvalues of a non-square matrix");
    let mut a = m.clone();
    let scale = a.as_slice().iter().map(|v| v.abs()).fold(T::zero(), T::max);
    let tol = T::epsilon() * T::epsilon() * scale * scale;

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
    eig
}

/// Population covariance of mean-centered channels, `C x C`.
pub fn channel_covariance<T: Scalar>(values: &Matrix<T>) -> Matrix<T> {
    let (rows, cols) = values.shape();
    let n = T::from_usize_lossy(rows);
    let centered: Vec<Vec<T>> = values
        .columns()
        .into_iter()
        .map(|col| {
            let m = col.iter().copied().sum::<T>() / n;
            col.into_iter().map(|v| v - m).collect()
        })
        .collect();
    let mut cov = Matrix::zeros(cols, cols);
    for i in 0..cols {
        for j in i..cols {
            let v = crate::scalar::dot(&centered[i], &centered[j]) / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// PCA summary: how many components reach `threshold` of the variance, and
/// the shares of the top `k`, first and second components.
pub fn pca_redundancy<T: Scalar>(series: &MultichannelSeries<T>, threshold: f64, k: usize) -> Result<RedundancyReport> {
    let c = series.channels();
    if c < 2 {
        return Err(Error::arg("redundancy analysis needs at least 2 channels"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::arg(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let eig: Vec<f64> = symmetric_eigenvalues(&channel_covariance(&series.values))
        .into_iter()
        .map(|v| v.as_f64().max(0.0))
        .collect();
    let total: f64 = eig.iter().sum();
    let explained: Vec<f64> = if total > 0.0 {
        eig.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; c]
    };
    let mut cumulative = Vec::with_capacity(c);
    let mut acc = 0.0;
    for f in &explained {
        acc += f;
        cumulative.push(acc);
    }
    let pcs_at_threshold = if total > 0.0 {
        cumulative
            .iter()
            .position(|&v| v >= threshold - 1e-12)
            .map_or(c, |i| i + 1)
    } else {
        0
    };
    let top = k.min(c);
    Ok(RedundancyReport {
        pcs_at_threshold,
        threshold,
        top_k_var: if top == 0 { 0.0 } else { cumulative[top - 1].min(1.0) },
        pc1_var: explained[0],
        pc2_var: explained[1],
        k,
        channels: c,
        rank_deficient: series.len() < c,
        explained,
    })
}

/// Centered correlation; `None` when either side is constant.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<Option<T>> {
    if x.len() != y.len() {
        return Err(Error::arg(format!("pearson length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::arg("pearson needs at least 2 samples"));
    }
    let mx = crate::scalar::mean(x);
    let my = crate::scalar::mean(y);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(None);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(Some(r.max(-T::one()).min(T::one())))
}

/// Correlation between the first two consecutive blocks of length `tau`.
pub fn predictability_score<T: Scalar>(y: &[T], tau: usize) -> Result<Option<T>> {
    if tau < 2 {
        return Err(Error::arg("predictability needs tau >= 2"));
    }
    if y.len() < 2 * tau {
        return Err(Error::arg(format!(
            "predictability needs at least 2*tau = {} samples, got {}",
            2 * tau,
            y.len()
        )));
    }
    pearson(&y[..tau], &y[tau..2 * tau])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    // direct O(n^2) definition
    fn dft_oracle(x: &[f64]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|j| {
                (0..n).fold(Complex::new(0.0, 0.0), |acc, t| {
                    acc + Complex::from_polar(x[t], -2.0 * PI * (j * t) as f64 / n as f64)
                })
            })
            .collect()
    }

    #[test]
    fn refined_period_off_grid() {
        // 420 / 24 is not an integer: the raw bin lands on 25
        let x: Vec<f64> = (0..420).map(|t| (2.0 * PI * t as f64 / 24.0).sin() + 0.3 * (4.0 * PI * t as f64 / 24.0).cos()).collect();
        assert_eq!(dominant_period(&x).unwrap(), Some(25));
        assert_eq!(detect_period(&x).unwrap(), Some(24));
        let x: Vec<f64> = (0..480).map(|t| (2.0 * PI * t as f64 / 24.0).sin()).collect();
        assert_eq!(detect_period(&x).unwrap(), Some(24));
        assert_eq!(detect_period(&[1.0; 16]).unwrap(), None);
    }

    #[test]
    fn dft_examples() {
        let d = dft(&[1.0, 0.0, 0.0, 0.0]);
        assert!(d.iter().all(|v| (v - Complex::new(1.0, 0.0)).norm() < 1e-12));
        let d = dft(&[1.0, 1.0, 1.0, 1.0]);
        assert!((d[0] - Complex::new(4.0, 0.0)).norm() < 1e-12);
        assert!(d[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn dft_matches_direct_sum_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=64 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = dft(&x);
            for (a, b) in fast.iter().zip(dft_oracle(&x)) {
                assert!((a - b).norm() < 1e-9, "n={n}");
            }
            for (a, b) in idft(&fast).iter().zip(&x) {
                assert!((a.re - b).abs() < 1e-9 && a.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dominant_period_examples() {
        let x: Vec<f64> = (0..240).map(|t| (2.0 * PI * t as f64 / 24.0).sin()).collect();
        assert_eq!(dominant_period(&x).unwrap(), Some(24));
        let x: Vec<f64> = (0..64).map(|t| (2.0 * PI * t as f64 / 8.0).cos()).collect();
        assert_eq!(dominant_period(&x).unwrap(), Some(8));
        assert_eq!(dominant_period(&[3.5; 32]).unwrap(), None);
        assert!(dominant_period(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn dominant_period_tie_prefers_short_period() {
        // equal energy at bins 2 and 4 of a length-16 signal
        let x: Vec<f64> = (0..16)
            .map(|t| (2.0 * PI * 2.0 * t as f64 / 16.0).cos() + (2.0 * PI * 4.0 * t as f64 / 16.0).cos())
            .collect();
        assert_eq!(dominant_period(&x).unwrap(), Some(4));
    }

    #[test]
    fn dominant_period_single_precision() {
        let x: Vec<f32> = (0..240).map(|t| (2.0 * std::f32::consts::PI * t as f32 / 24.0).sin()).collect();
        assert_eq!(dominant_period(&x).unwrap(), Some(24));
    }

    proptest! {
        #[test]
        fn dominant_period_ignores_scale_and_offset(scale in 0.01f64..100.0, shift in -50.0f64..50.0, p in 3usize..20) {
            let x: Vec<f64> = (0..120).map(|t| (2.0 * PI * t as f64 / p as f64).sin() + 0.3 * (2.0 * PI * t as f64 / 40.0).cos()).collect();
            let y: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            prop_assert_eq!(dominant_period(&x).unwrap(), dominant_period(&y).unwrap());
        }
    }

    #[test]
    fn shared_period_examples() {
        let p = shared_period(&[6, 4], 48).unwrap();
        assert_eq!((p.shared_period, p.capped), (12, false));
        assert_eq!(shared_period(&[24], 336).unwrap().shared_period, 24);
        let p = shared_period(&[7, 13, 11], 40).unwrap();
        assert_eq!((p.shared_period, p.capped), (13, true));
        assert!(shared_period(&[], 40).is_err());
    }

    #[test]
    fn shared_period_fallback_prefers_most_divisors() {
        // lcm(4, 8, 12, 5) = 120 > 30; 8 divides itself and 4, 12 divides 12 and 4
        let p = shared_period(&[4, 8, 12, 5], 60).unwrap();
        assert!(p.capped);
        assert_eq!(p.shared_period, 12);
    }

    #[test]
    fn shared_period_survives_overflow() {
        let primes = [101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157];
        let p = shared_period(&primes, 400).unwrap();
        assert!(p.capped);
        assert_eq!(p.shared_period, 157);
    }

    #[test]
    fn pca_rank_one() {
        let base: Vec<f64> = (0..50).map(|t| (t as f64 * 0.37).sin() + 0.1 * t as f64).collect();
        let m = Matrix::from_fn(50, 4, |r, c| base[r] * (c as f64 + 1.0) * if c % 2 == 0 { 1.0 } else { -2.0 });
        let rep = pca_redundancy(&MultichannelSeries::from_matrix(m).unwrap(), 0.95, 50).unwrap();
        assert_eq!(rep.pcs_at_threshold, 1);
        assert!((rep.pc1_var - 1.0).abs() < 1e-9);
        assert!((rep.top_k_var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_known_spectrum_after_rotation() {
        // two orthogonal zero-mean latents with population variances 4 and 1
        let n = 64;
        let a: Vec<f64> = (0..n).map(|t| 8f64.sqrt() * (2.0 * PI * t as f64 / 8.0).cos()).collect();
        let b: Vec<f64> = (0..n).map(|t| 2f64.sqrt() * (2.0 * PI * t as f64 / 8.0).sin()).collect();
        // orthonormal rotation of (a, b, 0)
        let (c1, s1) = (0.6, 0.8);
        let rot = [[c1, -s1 * 0.6, s1 * 0.8], [s1, c1 * 0.6, -c1 * 0.8], [0.0, 0.8, 0.6]];
        let m = Matrix::from_fn(n, 3, |r, c| rot[c][0] * a[r] + rot[c][1] * b[r]);
        let rep = pca_redundancy(&MultichannelSeries::from_matrix(m).unwrap(), 0.95, 50).unwrap();
        assert!((rep.pc1_var - 0.8).abs() < 1e-9, "{rep:?}");
        assert!((rep.pc2_var - 0.2).abs() < 1e-9);
        assert_eq!(rep.pcs_at_threshold, 2);
    }

    proptest! {
        #[test]
        fn pca_fractions_sum_to_one(seed in 0u64..1000, c in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_fn(30, c, |_, _| rng.random_range(-3.0..3.0));
            let cov = channel_covariance(&m);
            let eig = symmetric_eigenvalues(&cov);
            prop_assert!(eig.iter().all(|&v| v >= -1e-10));
            let trace: f64 = (0..c).map(|i| cov[(i, i)]).sum();
            prop_assert!((eig.iter().sum::<f64>() - trace).abs() < 1e-9 * trace.max(1.0));
            let rep = pca_redundancy(&MultichannelSeries::from_matrix(m).unwrap(), 0.95, 50).unwrap();
            prop_assert!((rep.explained.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(rep.pc2_var <= rep.pc1_var && rep.pc1_var <= 1.0);
        }
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().unwrap() + 1.0).abs() < 1e-15);
        // hand evaluation: sxy = 10.15, sxx = 5, syy = 20.6075
        let r = pearson(&x, &[2.0, 4.0, 6.0, 8.1]).unwrap().unwrap();
        let expected = 10.15 / (5.0f64 * 20.6075).sqrt();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.999927).abs() < 1e-6);
        assert_eq!(pearson(&x, &[1.0; 4]).unwrap(), None);
        assert!(pearson(&x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn predictability_examples() {
        let block = [0.3, -1.0, 2.5, 0.7, 1.1];
        let periodic: Vec<f64> = block.iter().cycle().take(15).copied().collect();
        assert!((predictability_score(&periodic, 5).unwrap().unwrap() - 1.0).abs() < 1e-9);
        let anti: Vec<f64> = block.iter().copied().chain(block.iter().map(|v| -v)).collect();
        assert!((predictability_score(&anti, 5).unwrap().unwrap() + 1.0).abs() < 1e-9);
        assert_eq!(predictability_score(&[1.0; 8], 4).unwrap(), None);
        assert!(predictability_score(&[1.0; 7], 4).is_err());
    }

    #[test]
    fn predictability_of_white_noise_is_near_zero_on_average() {
        // a single tau=16 block pair is too noisy for a tight bound, so
        // average the statistic over many seeded draws
        let draws = 400;
        let mut total = 0.0;
        for seed in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..4096).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            total += predictability_score(&y, 16).unwrap().unwrap();
        }
        assert!((total / draws as f64).abs() < 0.1);
    }
}
