use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{clip_gradient, LossBreakdown, LossWeights};
use super::pipeline::{Pipeline, PreparedWindow};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::WindowPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub clip_alpha: f64,
    pub seed: u64,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-3,
            alpha: 0.1,
            beta: 0.1,
            clip_alpha: 1.0,
            seed: 0,
            batch: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be non-negative".into()));
        }
        if !(self.clip_alpha > 0.0) {
            return Err(Error::Config("clip_alpha must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

/// Mean loss terms over one epoch, measured before each batch update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub prediction: f64,
    pub regulation: f64,
    pub latent: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub pipeline: Pipeline<T>,
    pub history: Vec<EpochRecord>,
}

/// Mean loss and gradient over a batch, accumulated in index order.
pub fn batch_grad<T: Scalar>(
    pipeline: &Pipeline<T>,
    windows: &[&PreparedWindow<T>],
    weights: LossWeights,
) -> Result<(LossBreakdown<T>, Vec<T>)> {
    let mut total = LossBreakdown::zero();
    let mut grad = vec![T::zero(); pipeline.param_count()];
    let scale = T::one() / T::from_usize_lossy(windows.len());
    for w in windows {
        let (l, g) = pipeline.grad(w, weights)?;
        total.accumulate(&l, scale);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b * scale);
    }
    Ok((total, grad))
}

/// Mini-batch gradient descent with per-group scale-invariant clipping.
/// Window order is reshuffled every epoch from `cfg.seed`.
pub fn train<T: Scalar>(mut pipeline: Pipeline<T>, data: &[WindowPair<T>], cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let prepared = data.iter().map(|w| pipeline.prepare(w)).collect::<Result<Vec<_>>>()?;
    train_prepared(&mut pipeline, &prepared, cfg).map(|history| TrainOutcome { pipeline, history })
}

/// As [`train`], on windows already passed through [`Pipeline::prepare`].
pub fn train_prepared<T: Scalar>(
    pipeline: &mut Pipeline<T>,
    prepared: &[PreparedWindow<T>],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let weights = cfg.weights();
    let groups = pipeline.groups();
    let lr = T::lit(cfg.lr);
    let clip = T::lit(cfg.clip_alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut history: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = LossBreakdown::<T>::zero();
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&PreparedWindow<T>> = chunk.iter().map(|&i| &prepared[i]).collect();
            let diverged = |message: String| Error::Diverged {
                epoch,
                message,
                history: history.iter().map(|r| r.total).collect(),
            };
            let (l, g) = batch_grad(pipeline, &batch, weights).map_err(|e| match e {
                Error::Numeric(m) => diverged(m),
                other => other,
            })?;
            epoch_loss.accumulate(&l, T::from_usize_lossy(chunk.len()) / T::from_usize_lossy(prepared.len()));

            let mut params = pipeline.params_flat();
            for (_, range) in &groups {
                let clipped = clip_gradient(&g[range.clone()], &params[range.clone()], clip)?;
                for (p, gc) in params[range.clone()].iter_mut().zip(clipped) {
                    *p -= lr * gc;
                }
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(diverged("non-finite parameters after update".into()));
            }
            pipeline.set_params_flat(&params)?;
        }
        history.push(EpochRecord {
            epoch,
            prediction: epoch_loss.prediction.as_f64(),
            regulation: epoch_loss.regulation.as_f64(),
            latent: epoch_loss.latent.as_f64(),
            total: epoch_loss.total.as_f64(),
        });
    }
    Ok(history)
}
