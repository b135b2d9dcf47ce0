//! Predictability-aware channel compression for multichannel forecasting.
//!
//! A window of `C` channels is folded into one channel by circular
//! convolution with a seasonal key, forecast with a single-channel model,
//! decoded by circular correlation and corrected by a small residual head.

pub mod artifacts;
pub mod bench;
pub mod codec;
pub mod config;
pub mod error;
pub mod experiment;
pub mod keys;
pub mod matrix;
pub mod predictors;
pub mod scalar;
pub mod series;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// Double-precision aliases for the generic types.
pub type Series = series::MultichannelSeries<f64>;
pub type Window = series::WindowPair<f64>;
pub type Key = keys::CircularKey<f64>;
pub type Compressed = codec::CompressedSeries<f64>;
pub type Head = codec::ReconstructionHead<f64>;
pub type Predictor = predictors::PredictorParams<f64>;
pub type Model = predictors::Pipeline<f64>;
pub type Norm = series::NormStats<f64>;
