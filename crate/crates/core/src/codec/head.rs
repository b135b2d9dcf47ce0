use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Correction block applied after decoding:
/// `out = Dense(Z + conv2(relu(conv1(Z))))` with `Z` the decoded channel
/// copied to every output channel and divided by the key energy.
///
/// Convolutions run along time with zero "same" padding. `Dense` is a
/// per-timestep `C -> C` affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ReconstructionHead<T> {
    pub channels: usize,
    pub hidden: usize,
    pub kernel: usize,
    /// `hidden x channels x kernel`
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    /// `channels x hidden x kernel`
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    /// `channels x channels`, row = output channel
    pub dense_w: Vec<T>,
    pub dense_b: Vec<T>,
}

/// Gradients share the parameter layout.
pub type HeadGrad<T> = ReconstructionHead<T>;

/// Intermediates kept from the forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    pub z: Matrix<T>,
    pub pre_relu: Matrix<T>,
    pub residual: Matrix<T>,
    pub combined: Matrix<T>,
}

pub const DEFAULT_KERNEL: usize = 3;

impl<T: Scalar> ReconstructionHead<T> {
    /// Hidden width defaults to `max(C, 8)`.
    pub fn default_hidden(channels: usize) -> usize {
        channels.max(8)
    }

    /// Seeded initialization: small uniform conv weights and a dense map of
    /// `I / C`, so the untrained head outputs the channel average of the
    /// decoded sum.
    pub fn init(channels: usize, hidden: usize, kernel: usize, seed: u64) -> Self {
        assert!(channels >= 1 && hidden >= 1 && kernel % 2 == 1, "invalid head shape");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<T> {
            let a = 0.5 / (fan_in as f64).sqrt();
            (0..n).map(|_| T::lit(rng.random_range(-a..a))).collect()
        };
        let conv1_w = uniform(hidden * channels * kernel, channels * kernel);
        let conv2_w = uniform(channels * hidden * kernel, hidden * kernel);
        let mut head = Self::zeros(channels, hidden, kernel);
        head.conv1_w = conv1_w;
        head.conv2_w = conv2_w;
        let share = T::one() / T::from_usize_lossy(channels);
        for c in 0..channels {
            head.dense_w[c * channels + c] = share;
        }
        head
    }

    /// Head with a zero residual branch and identity dense map.
    pub fn passthrough(channels: usize) -> Self {
        let mut head = Self::zeros(channels, Self::default_hidden(channels), DEFAULT_KERNEL);
        for c in 0..channels {
            head.dense_w[c * channels + c] = T::one();
        }
        head
    }

    pub fn zeros(channels: usize, hidden: usize, kernel: usize) -> Self {
        Self {
            channels,
            hidden,
            kernel,
            conv1_w: vec![T::zero(); hidden * channels * kernel],
            conv1_b: vec![T::zero(); hidden],
            conv2_w: vec![T::zero(); channels * hidden * kernel],
            conv2_b: vec![T::zero(); channels],
            dense_w: vec![T::zero(); channels * channels],
            dense_b: vec![T::zero(); channels],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.channels, self.hidden, self.kernel)
    }

    pub fn param_count(&self) -> usize {
        self.to_flat().len()
    }

    /// Parameters in the fixed order conv1, conv2, dense (weights then bias).
    pub fn to_flat(&self) -> Vec<T> {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense_w,
            &self.dense_b,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length mismatch");
        let mut rest = flat;
        for part in [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
    }

    /// Clipping groups (one per layer, weights and bias together) as ranges
    /// into [`to_flat`](Self::to_flat).
    pub fn groups(&self) -> Vec<(&'static str, Range<usize>)> {
        let l1 = self.conv1_w.len() + self.conv1_b.len();
        let l2 = self.conv2_w.len() + self.conv2_b.len();
        let l3 = self.dense_w.len() + self.dense_b.len();
        vec![
            ("head.conv1", 0..l1),
            ("head.conv2", l1..l1 + l2),
            ("head.dense", l1 + l2..l1 + l2 + l3),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Runs the head on `Z` (`H x C`), keeping intermediates.
    pub fn forward(&self, z: &Matrix<T>) -> (Matrix<T>, HeadCache<T>) {
        assert_eq!(z.cols(), self.channels, "head channel mismatch");
        let pre_relu = conv_forward(z, &self.conv1_w, &self.conv1_b, self.hidden, self.kernel);
        let activated = pre_relu.map(|v| v.max(T::zero()));
        let residual = conv_forward(&activated, &self.conv2_w, &self.conv2_b, self.channels, self.kernel);
        let combined = Matrix::from_fn(z.rows(), self.channels, |t, c| z[(t, c)] + residual[(t, c)]);
        let out = dense_forward(&combined, &self.dense_w, &self.dense_b);
        (
            out,
            HeadCache {
                z: z.clone(),
                pre_relu,
                residual,
                combined,
            },
        )
    }

    /// Back-propagates `g_out` (gradient w.r.t. the head output) and an
    /// extra gradient arriving directly at the residual branch output.
    /// Returns parameter gradients and the gradient w.r.t. `Z`.
    pub fn backward(&self, cache: &HeadCache<T>, g_out: &Matrix<T>, g_residual: &Matrix<T>) -> (HeadGrad<T>, Matrix<T>) {
        let mut grad = self.zeros_like();
        let (h, c) = g_out.shape();

        // dense
        let mut g_combined: Matrix<T> = Matrix::zeros(h, c);
        for t in 0..h {
            for o in 0..c {
                let g = g_out[(t, o)];
                grad.dense_b[o] += g;
                for i in 0..c {
                    grad.dense_w[o * c + i] += g * cache.combined[(t, i)];
                    g_combined[(t, i)] += self.dense_w[o * c + i] * g;
                }
            }
        }

        let g_res = Matrix::from_fn(h, c, |t, i| g_combined[(t, i)] + g_residual[(t, i)]);
        let activated = cache.pre_relu.map(|v| v.max(T::zero()));
        let g_act = conv_backward(
            &activated,
            &self.conv2_w,
            &g_res,
            self.kernel,
            &mut grad.conv2_w,
            &mut grad.conv2_b,
        );
        let g_pre = Matrix::from_fn(h, self.hidden, |t, f| {
            if cache.pre_relu[(t, f)] > T::zero() {
                g_act[(t, f)]
            } else {
                T::zero()
            }
        });
        let g_z_conv = conv_backward(
            &cache.z,
            &self.conv1_w,
            &g_pre,
            self.kernel,
            &mut grad.conv1_w,
            &mut grad.conv1_b,
        );
        let g_z = Matrix::from_fn(h, c, |t, i| g_combined[(t, i)] + g_z_conv[(t, i)]);
        (grad, g_z)
    }
}

/// `out[t, o] = b[o] + sum_i sum_k w[o, i, k] * x[t + k - pad, i]`.
fn conv_forward<T: Scalar>(x: &Matrix<T>, w: &[T], b: &[T], out_ch: usize, kernel: usize) -> Matrix<T> {
    let (len, in_ch) = x.shape();
    let pad = kernel / 2;
    let mut out = Matrix::zeros(len, out_ch);
    for t in 0..len {
        for o in 0..out_ch {
            let mut acc = b[o];
            for k in 0..kernel {
                let Some(src) = (t + k).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                let row = x.row(src);
                let wk = &w[o * in_ch * kernel..(o + 1) * in_ch * kernel];
                for i in 0..in_ch {
                    acc += wk[i * kernel + k] * row[i];
                }
            }
            out[(t, o)] = acc;
        }
    }
    out
}

/// Accumulates weight and bias gradients of [`conv_forward`] and returns the
/// gradient w.r.t. its input.
fn conv_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &[T],
    g_out: &Matrix<T>,
    kernel: usize,
    g_w: &mut [T],
    g_b: &mut [T],
) -> Matrix<T> {
    let (len, in_ch) = x.shape();
    let out_ch = g_out.cols();
    let pad = kernel / 2;
    let mut g_x = Matrix::zeros(len, in_ch);
    for t in 0..len {
        for o in 0..out_ch {
            let g = g_out[(t, o)];
            g_b[o] += g;
            for k in 0..kernel {
                let Some(src) = (t + k).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                for i in 0..in_ch {
                    let idx = (o * in_ch + i) * kernel + k;
                    g_w[idx] += g * x[(src, i)];
                    g_x[(src, i)] += w[idx] * g;
                }
            }
        }
    }
    g_x
}

fn dense_forward<T: Scalar>(x: &Matrix<T>, w: &[T], b: &[T]) -> Matrix<T> {
    let c = x.cols();
    Matrix::from_fn(x.rows(), c, |t, o| {
        b[o] + crate::scalar::dot(&w[o * c..(o + 1) * c], x.row(t))
    })
}

/// Copies `decoded / sum_sq` to all channels and runs the head.
pub fn reconstruct<T: Scalar>(decoded: &[T], head: &ReconstructionHead<T>, sum_sq: T) -> Result<Matrix<T>> {
    if !(sum_sq > T::zero()) {
        return Err(Error::Numeric(format!("key energy must be positive, got {sum_sq}")));
    }
    if !head.is_finite() {
        return Err(Error::Numeric("reconstruction head has non-finite parameters".into()));
    }
    let z = Matrix::from_fn(decoded.len(), head.channels, |t, _| decoded[t] / sum_sq);
    Ok(head.forward(&z).0)
}
