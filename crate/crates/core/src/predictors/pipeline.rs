//! The trainable forecasting pipeline and its reverse-mode gradient.
//!
//! Forward pass for one window:
//! `compress -> normalize -> predict -> denormalize -> decode -> head`.
//! Keys are fixed; the trainable parameters are the predictor, the head and,
//! for the encoder/decoder ablations, the learned linear maps.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::loss::{loss, regulation_gap, LossBreakdown, LossWeights};
use super::model::{PredictorCache, PredictorKind, PredictorParams};
use crate::codec::head::{HeadCache, ReconstructionHead, DEFAULT_KERNEL};
use crate::codec::{compress_with_keys, compressed_len, decode, decode_adjoint, decode_gain, Mode};
use crate::error::{Error, Result};
use crate::keys::{CircularKey, KeyKind};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::series::{NormStats, WindowPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Fixed circular-key compression.
    #[default]
    Key,
    /// Learned affine `C -> 1` map.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    /// Key decode followed by the reconstruction head.
    #[default]
    Head,
    /// Key decode, scaled and broadcast to every channel.
    Bare,
    /// Learned affine `1 -> C` map.
    Linear,
}

/// Static description of a pipeline; everything needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub channels: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub tau: usize,
    pub mode: Mode,
    pub key: KeyKind,
    pub key_seed: u64,
    /// One key per channel (seeds `key_seed + c`) instead of a shared key.
    pub per_channel_keys: bool,
    pub predictor: PredictorKind,
    pub hidden_width: usize,
    /// Head hidden width; 0 selects `max(C, 8)`.
    pub head_hidden: usize,
    pub kernel: usize,
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub init_seed: u64,
}

impl PipelineSpec {
    pub fn new(channels: usize, lookback: usize, horizon: usize, tau: usize) -> Self {
        Self {
            channels,
            lookback,
            horizon,
            tau,
            mode: Mode::Sparse,
            key: KeyKind::SeasonalOrthogonal,
            key_seed: 0,
            per_channel_keys: false,
            predictor: PredictorKind::Linear,
            hidden_width: super::model::DEFAULT_HIDDEN,
            head_hidden: 0,
            kernel: DEFAULT_KERNEL,
            encoder: EncoderKind::Key,
            decoder: DecoderKind::Head,
            init_seed: 0,
        }
    }

    /// Length of the compressed history fed to the predictor.
    pub fn input_len(&self) -> usize {
        match self.encoder {
            EncoderKind::Key => compressed_len(self.lookback, self.tau, self.mode),
            EncoderKind::Linear => self.lookback,
        }
    }

    fn uses_keys(&self) -> bool {
        self.encoder == EncoderKind::Key || self.decoder != DecoderKind::Linear
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.lookback < 2 || self.horizon == 0 {
            return Err(Error::Config("channels, lookback and horizon must be positive (lookback >= 2)".into()));
        }
        if self.tau == 0 || self.tau > self.lookback {
            return Err(Error::Config(format!(
                "tau = {} must lie in [1, lookback = {}]",
                self.tau, self.lookback
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config("head kernel width must be odd".into()));
        }
        if self.mode == Mode::Sparse && self.uses_keys() && self.horizon % self.tau != 0 {
            return Err(Error::Alignment {
                horizon: self.horizon,
                tau: self.tau,
            });
        }
        if self.predictor == PredictorKind::Naive && self.tau > self.input_len() {
            return Err(Error::Config("naive predictor needs at least one full period of history".into()));
        }
        Ok(())
    }
}

/// Keys, parameters and the spec they were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Pipeline<T> {
    pub spec: PipelineSpec,
    pub keys: Vec<CircularKey<T>>,
    pub predictor: PredictorParams<T>,
    pub head: Option<ReconstructionHead<T>>,
    /// `[e_0 .. e_{C-1}, bias]` when the encoder is learned.
    pub encoder: Vec<T>,
    /// `[d_0 .. d_{C-1}, b_0 .. b_{C-1}]` when the decoder is learned.
    pub decoder: Vec<T>,
}

/// A window with its compressed history and future cached (fixed keys only).
#[derive(Debug, Clone)]
pub struct PreparedWindow<T> {
    pub history: Matrix<T>,
    pub future: Matrix<T>,
    y_hist: Vec<T>,
    y_future: Vec<T>,
}

struct Trace<T> {
    y_hist: Vec<T>,
    y_future: Vec<T>,
    stats: NormStats<T>,
    z: Vec<T>,
    pred_cache: PredictorCache<T>,
    z_hat: Vec<T>,
    y_hat: Vec<T>,
    head_cache: Option<HeadCache<T>>,
    x_hat: Matrix<T>,
    phi_y: T,
    phi_y_hat: T,
}

impl<T: Scalar> Pipeline<T> {
    /// Builds keys and seeded initial parameters.
    pub fn init(spec: PipelineSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.channels;
        let key_count = if spec.per_channel_keys { c } else { 1 };
        let keys = (0..key_count)
            .map(|i| CircularKey::build(spec.key, spec.tau, spec.key_seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let predictor = PredictorParams::init(
            spec.predictor,
            spec.input_len(),
            spec.horizon,
            spec.hidden_width,
            spec.tau,
            spec.init_seed,
        )?;
        let head = (spec.decoder == DecoderKind::Head).then(|| {
            let hidden = if spec.head_hidden == 0 {
                ReconstructionHead::<T>::default_hidden(c)
            } else {
                spec.head_hidden
            };
            ReconstructionHead::init(c, hidden, spec.kernel, spec.init_seed.wrapping_add(1))
        });
        // the learned maps start as plain channel sum / even split
        let encoder = match spec.encoder {
            EncoderKind::Key => Vec::new(),
            EncoderKind::Linear => {
                let mut e = vec![T::one(); c + 1];
                e[c] = T::zero();
                e
            }
        };
        let decoder = match spec.decoder {
            DecoderKind::Linear => {
                let mut d = vec![T::one() / T::from_usize_lossy(c); 2 * c];
                d[c..].iter_mut().for_each(|v| *v = T::zero());
                d
            }
            _ => Vec::new(),
        };
        Ok(Self {
            spec,
            keys,
            predictor,
            head,
            encoder,
            decoder,
        })
    }

    pub fn param_count(&self) -> usize {
        self.predictor.weights.len()
            + self.head.as_ref().map_or(0, |h| h.param_count())
            + self.encoder.len()
            + self.decoder.len()
    }

    /// Trainable parameters in the order predictor, head, encoder, decoder.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = self.predictor.weights.clone();
        if let Some(h) = &self.head {
            out.extend(h.to_flat());
        }
        out.extend_from_slice(&self.encoder);
        out.extend_from_slice(&self.decoder);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::arg(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        let n = self.predictor.weights.len();
        self.predictor.weights.copy_from_slice(&rest[..n]);
        rest = &rest[n..];
        if let Some(h) = &mut self.head {
            let n = h.param_count();
            h.set_flat(&rest[..n]);
            rest = &rest[n..];
        }
        let n = self.encoder.len();
        self.encoder.copy_from_slice(&rest[..n]);
        self.decoder.copy_from_slice(&rest[n..]);
        Ok(())
    }

    /// Clipping groups over [`Self::params_flat`].
    pub fn groups(&self) -> Vec<(&'static str, Range<usize>)> {
        let mut out = self.predictor.groups();
        let mut offset = self.predictor.weights.len();
        if let Some(h) = &self.head {
            out.extend(h.groups().into_iter().map(|(n, r)| (n, r.start + offset..r.end + offset)));
            offset += h.param_count();
        }
        if !self.encoder.is_empty() {
            out.push(("encoder.linear", offset..offset + self.encoder.len()));
            offset += self.encoder.len();
        }
        if !self.decoder.is_empty() {
            out.push(("decoder.linear", offset..offset + self.decoder.len()));
        }
        out
    }

    fn check_window(&self, history: &Matrix<T>, future: Option<&Matrix<T>>) -> Result<()> {
        let s = &self.spec;
        if history.shape() != (s.lookback, s.channels) {
            return Err(Error::arg(format!(
                "history shape {:?} does not match ({}, {})",
                history.shape(),
                s.lookback,
                s.channels
            )));
        }
        if let Some(f) = future {
            if f.shape() != (s.horizon, s.channels) {
                return Err(Error::arg(format!(
                    "future shape {:?} does not match ({}, {})",
                    f.shape(),
                    s.horizon,
                    s.channels
                )));
            }
        }
        Ok(())
    }

    fn encode(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        match self.spec.encoder {
            EncoderKind::Key => Ok(compress_with_keys(x, &self.keys, self.spec.mode)?.y),
            EncoderKind::Linear => {
                let c = self.spec.channels;
                Ok((0..x.rows())
                    .map(|t| crate::scalar::dot(x.row(t), &self.encoder[..c]) + self.encoder[c])
                    .collect())
            }
        }
    }

    /// Caches the compressed history and future for fixed-key encoders.
    pub fn prepare(&self, window: &WindowPair<T>) -> Result<PreparedWindow<T>> {
        self.check_window(&window.history, Some(&window.future))?;
        let (y_hist, y_future) = match self.spec.encoder {
            EncoderKind::Key => (self.encode(&window.history)?, self.encode(&window.future)?),
            EncoderKind::Linear => (Vec::new(), Vec::new()),
        };
        Ok(PreparedWindow {
            history: window.history.clone(),
            future: window.future.clone(),
            y_hist,
            y_future,
        })
    }

    fn key_index(&self, c: usize) -> usize {
        if self.keys.len() == 1 {
            0
        } else {
            c
        }
    }

    /// Decoded and gain-scaled broadcast `Z` (`H x C`).
    fn decode_broadcast(&self, y_hat: &[T]) -> Result<Matrix<T>> {
        let h = y_hat.len();
        let mut decoded = Vec::with_capacity(self.keys.len());
        for key in &self.keys {
            let gain = decode_gain(key, self.spec.mode, h);
            if !(gain > T::zero()) {
                return Err(Error::Numeric("decode gain must be positive".into()));
            }
            let x = decode(y_hat, key, self.spec.mode)?;
            decoded.push(x.into_iter().map(|v| v / gain).collect::<Vec<T>>());
        }
        Ok(Matrix::from_fn(h, self.spec.channels, |t, c| decoded[self.key_index(c)][t]))
    }

    fn decode_stage(&self, y_hat: &[T]) -> Result<(Matrix<T>, Option<HeadCache<T>>)> {
        let c = self.spec.channels;
        match self.spec.decoder {
            DecoderKind::Head => {
                let z = self.decode_broadcast(y_hat)?;
                let head = self.head.as_ref().expect("head decoder carries a head");
                let (out, cache) = head.forward(&z);
                Ok((out, Some(cache)))
            }
            DecoderKind::Bare => Ok((self.decode_broadcast(y_hat)?, None)),
            DecoderKind::Linear => Ok((
                Matrix::from_fn(y_hat.len(), c, |t, i| self.decoder[i] * y_hat[t] + self.decoder[c + i]),
                None,
            )),
        }
    }

    /// Forecast of the next `H` rows from an `L x C` history.
    pub fn forecast(&self, history: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_window(history, None)?;
        let y_hist = self.encode(history)?;
        let stats = NormStats::of(&y_hist);
        let z_hat = self.predictor.predict(&stats.apply(&y_hist))?;
        Ok(self.decode_stage(&stats.invert(&z_hat))?.0)
    }

    fn trace(&self, w: &PreparedWindow<T>) -> Result<Trace<T>> {
        let (y_hist, y_future) = match self.spec.encoder {
            EncoderKind::Key => (w.y_hist.clone(), w.y_future.clone()),
            EncoderKind::Linear => (self.encode(&w.history)?, self.encode(&w.future)?),
        };
        let stats = NormStats::of(&y_hist);
        let z = stats.apply(&y_hist);
        let (z_hat, pred_cache) = self.predictor.forward(&z)?;
        let y_hat = stats.invert(&z_hat);
        let (x_hat, head_cache) = self.decode_stage(&y_hat)?;
        let phi_y = crate::scalar::mean(&stats.apply(&y_future));
        let phi_y_hat = crate::scalar::mean(&z_hat);
        Ok(Trace {
            y_hist,
            y_future,
            stats,
            z,
            pred_cache,
            z_hat,
            y_hat,
            head_cache,
            x_hat,
            phi_y,
            phi_y_hat,
        })
    }

    fn loss_of(&self, tr: &Trace<T>, w: &PreparedWindow<T>, weights: LossWeights) -> Result<LossBreakdown<T>> {
        let l = loss(
            &tr.x_hat,
            &w.future,
            tr.head_cache.as_ref().map(|c| &c.residual),
            tr.phi_y,
            tr.phi_y_hat,
            T::lit(weights.alpha),
            T::lit(weights.beta),
        )?;
        if let Some(term) = l.non_finite_term() {
            return Err(Error::Numeric(format!("non-finite {term} loss")));
        }
        Ok(l)
    }

    /// Loss of one prepared window.
    pub fn window_loss(&self, w: &PreparedWindow<T>, weights: LossWeights) -> Result<LossBreakdown<T>> {
        let tr = self.trace(w)?;
        self.loss_of(&tr, w, weights)
    }

    /// Loss and its gradient over [`Self::params_flat`] for one window.
    pub fn grad(&self, w: &PreparedWindow<T>, weights: LossWeights) -> Result<(LossBreakdown<T>, Vec<T>)> {
        let tr = self.trace(w)?;
        let l = self.loss_of(&tr, w, weights)?;
        let alpha = T::lit(weights.alpha);
        let beta = T::lit(weights.beta);
        let two = T::lit(2.0);
        let (h, c) = tr.x_hat.shape();
        let hc = T::from_usize_lossy(h * c);

        // loss -> X_hat and residual
        let reg = tr
            .head_cache
            .as_ref()
            .map(|cache| two * alpha * regulation_gap(&cache.residual, &tr.x_hat));
        let g_x_hat = Matrix::from_fn(h, c, |t, i| {
            let mut g = two * (tr.x_hat[(t, i)] - w.future[(t, i)]) / hc;
            if let Some(r) = reg {
                g -= r;
            }
            g
        });

        // decoder -> y_hat
        let mut g_head = Vec::new();
        let mut g_decoder = Vec::new();
        let mut g_y_hat = vec![T::zero(); h];
        match self.spec.decoder {
            DecoderKind::Head | DecoderKind::Bare => {
                let g_z = if let Some(cache) = &tr.head_cache {
                    let r = reg.expect("head decoder has a regulation term");
                    let g_res = cache.residual.map(|v| r * sign(v));
                    let head = self.head.as_ref().expect("head decoder carries a head");
                    let (grad, g_z) = head.backward(cache, &g_x_hat, &g_res);
                    g_head = grad.to_flat();
                    g_z
                } else {
                    g_x_hat
                };
                for (ki, key) in self.keys.iter().enumerate() {
                    let gain = decode_gain(key, self.spec.mode, h);
                    let g_dec: Vec<T> = (0..h)
                        .map(|t| {
                            (0..c)
                                .filter(|&i| self.key_index(i) == ki)
                                .map(|i| g_z[(t, i)])
                                .sum::<T>()
                                / gain
                        })
                        .collect();
                    let back = decode_adjoint(&g_dec, key, self.spec.mode)?;
                    g_y_hat.iter_mut().zip(back).for_each(|(a, b)| *a += b);
                }
            }
            DecoderKind::Linear => {
                g_decoder = vec![T::zero(); 2 * c];
                for t in 0..h {
                    for i in 0..c {
                        let g = g_x_hat[(t, i)];
                        g_decoder[i] += g * tr.y_hat[t];
                        g_decoder[c + i] += g;
                        g_y_hat[t] += g * self.decoder[i];
                    }
                }
            }
        }

        // denormalize and latent term -> z_hat
        let std = tr.stats.std;
        let g_phi = two * beta * (tr.phi_y - tr.phi_y_hat);
        let h_c = T::from_usize_lossy(tr.z_hat.len());
        let g_z_hat: Vec<T> = g_y_hat.iter().map(|&g| g * std - g_phi / h_c).collect();
        let (g_pred, g_z) = self.predictor.backward(&tr.pred_cache, &g_z_hat);

        let mut out = g_pred;
        out.extend(g_head);

        if self.spec.encoder == EncoderKind::Linear {
            let (g_hist, g_fut) = self.normalization_backward(&tr, &g_y_hat, &g_z, g_phi);
            let mut g_enc = vec![T::zero(); c + 1];
            for (x, g) in [(&w.history, &g_hist), (&w.future, &g_fut)] {
                for (t, &gt) in g.iter().enumerate() {
                    for (i, ge) in g_enc[..c].iter_mut().enumerate() {
                        *ge += gt * x[(t, i)];
                    }
                    g_enc[c] += gt;
                }
            }
            out.extend(g_enc);
        }
        out.extend(g_decoder);
        Ok((l, out))
    }

    /// Gradients w.r.t. the encoded history and future, through the
    /// normalization statistics, denormalization and the latent target.
    fn normalization_backward(&self, tr: &Trace<T>, g_y_hat: &[T], g_z: &[T], g_phi: T) -> (Vec<T>, Vec<T>) {
        let mean = tr.stats.mean;
        let std = tr.stats.std;
        let n = T::from_usize_lossy(tr.y_hist.len());
        let n_f = T::from_usize_lossy(tr.y_future.len());
        // y_hat = z_hat * std + mean; phi_y = (mean(y_future) - mean) / std
        let mut g_mean = g_y_hat.iter().copied().sum::<T>() - g_phi / std;
        let mut g_std = crate::scalar::dot(g_y_hat, &tr.z_hat) - g_phi * tr.phi_y / std;
        // z = (y - mean) / std
        g_mean -= g_z.iter().copied().sum::<T>() / std;
        g_std -= crate::scalar::dot(g_z, &tr.z) / std;
        if tr.stats.floored {
            g_std = T::zero();
        }
        let g_hist = tr
            .y_hist
            .iter()
            .zip(g_z)
            .map(|(&y, &g)| g / std + g_mean / n + g_std * (y - mean) / (n * std))
            .collect();
        let g_fut = vec![g_phi / (n_f * std); tr.y_future.len()];
        (g_hist, g_fut)
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
