use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Loss terms for one window. `regulation` and `latent` are unweighted;
/// `total = prediction + alpha * regulation + beta * latent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LossBreakdown<T> {
    pub prediction: T,
    pub regulation: T,
    pub latent: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn zero() -> Self {
        Self {
            prediction: T::zero(),
            regulation: T::zero(),
            latent: T::zero(),
            total: T::zero(),
        }
    }

    pub(crate) fn accumulate(&mut self, other: &Self, weight: T) {
        self.prediction += other.prediction * weight;
        self.regulation += other.regulation * weight;
        self.latent += other.latent * weight;
        self.total += other.total * weight;
    }

    /// Names the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("prediction", self.prediction),
            ("regulation", self.regulation),
            ("latent", self.latent),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// Weights of the auxiliary loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.1 }
    }
}

/// Composite window loss: MSE, the residual-mass regulation term and the
/// latent mean-consistency term.
///
/// `residual_out` is `None` for architectures without a residual branch, in
/// which case the regulation term is zero.
pub fn loss<T: Scalar>(
    x_hat: &Matrix<T>,
    x: &Matrix<T>,
    residual_out: Option<&Matrix<T>>,
    phi_y: T,
    phi_y_hat: T,
    alpha: T,
    beta: T,
) -> Result<LossBreakdown<T>> {
    if x_hat.shape() != x.shape() {
        return Err(Error::arg(format!(
            "forecast shape {:?} does not match target shape {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let n = T::from_usize_lossy(x.as_slice().len());
    let prediction = x_hat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        / n;
    let regulation = match residual_out {
        Some(r) => {
            if r.shape() != x.shape() {
                return Err(Error::arg("residual shape does not match target shape"));
            }
            let d = regulation_gap(r, x_hat);
            d * d
        }
        None => T::zero(),
    };
    let latent = (phi_y - phi_y_hat) * (phi_y - phi_y_hat);
    Ok(LossBreakdown {
        prediction,
        regulation,
        latent,
        total: prediction + alpha * regulation + beta * latent,
    })
}

/// `sum |R| - sum X_hat`
pub(crate) fn regulation_gap<T: Scalar>(residual: &Matrix<T>, x_hat: &Matrix<T>) -> T {
    residual.as_slice().iter().map(|v| v.abs()).sum::<T>() - x_hat.as_slice().iter().copied().sum::<T>()
}

/// Scale-invariant clipping: `g * min(1, clip_alpha * |w| / |g|)`.
///
/// Returns `g` untouched when it is zero or already within the bound, and a
/// zero vector when `w` is zero.
pub fn clip_gradient<T: Scalar>(g: &[T], w: &[T], clip_alpha: T) -> Result<Vec<T>> {
    if g.len() != w.len() {
        return Err(Error::arg(format!(
            "gradient length {} does not match weight length {}",
            g.len(),
            w.len()
        )));
    }
    let g_norm = crate::scalar::l2_norm(g);
    if g_norm == T::zero() {
        return Ok(g.to_vec());
    }
    let bound = clip_alpha * crate::scalar::l2_norm(w);
    if bound == T::zero() {
        return Ok(vec![T::zero(); g.len()]);
    }
    if g_norm <= bound {
        return Ok(g.to_vec());
    }
    let factor = bound / g_norm;
    Ok(g.iter().map(|&v| v * factor).collect())
}
