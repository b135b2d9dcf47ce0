//! Single-channel predictors, the composite loss and the training loop.

mod loss;
mod model;
mod pipeline;
mod train;

pub use loss::{clip_gradient, loss, LossBreakdown, LossWeights};
pub use model::{PredictorCache, PredictorKind, PredictorParams, ShapeEntry, DEFAULT_HIDDEN};
pub use pipeline::{DecoderKind, EncoderKind, Pipeline, PipelineSpec, PreparedWindow};
pub use train::{batch_grad, train, train_prepared, EpochRecord, TrainConfig, TrainOutcome};
