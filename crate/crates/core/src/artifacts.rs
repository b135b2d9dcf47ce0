//! Serialized model artifacts.
//!
//! A directory holds `manifest.json` (spec, scaler, fingerprints), one
//! file per trained component and the loss history as CSV. Serialization
//! has no timestamps, so identical runs write identical bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::TrainedModel;
use crate::keys::CircularKey;
use crate::predictors::{EpochRecord, Pipeline, PipelineSpec, PredictorParams};
use crate::codec::ReconstructionHead;
use crate::scalar::Scalar;
use crate::series::{ChannelScaler, NormTarget, STD_FLOOR};

pub const MANIFEST: &str = "manifest.json";
pub const KEYS: &str = "key.json";
pub const PREDICTOR: &str = "predictor.json";
pub const HEAD: &str = "head.json";
pub const HISTORY: &str = "history.csv";
pub const FORMAT_VERSION: u32 = 1;

/// How the compressed series is normalized at train and inference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConvention {
    pub applied_to: NormTarget,
    /// Statistics come from each window's own compressed history.
    pub per_window: bool,
    pub std_floor: f64,
}

impl Default for NormConvention {
    fn default() -> Self {
        Self {
            applied_to: NormTarget::CompressedSeries,
            per_window: true,
            std_floor: STD_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Manifest<T> {
    pub format_version: u32,
    pub config_fingerprint: String,
    pub data_fingerprint: String,
    pub spec: PipelineSpec,
    pub scaler: ChannelScaler<T>,
    pub norm: NormConvention,
    pub encoder: Vec<T>,
    pub decoder: Vec<T>,
    pub files: Vec<String>,
}

/// A model read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedModel<T> {
    pub pipeline: Pipeline<T>,
    pub manifest: Manifest<T>,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<S: serde::de::DeserializeOwned>(path: &Path) -> Result<S> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for r in history {
        w.serialize(r).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every artifact of `model` into `dir` and returns the paths.
pub fn save<T: Scalar>(dir: &Path, model: &TrainedModel<T>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = &model.pipeline;
    let mut files = vec![KEYS, PREDICTOR];
    if p.head.is_some() {
        files.push(HEAD);
    }
    files.push(HISTORY);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_fingerprint: model.config_fingerprint.clone(),
        data_fingerprint: model.data_fingerprint.clone(),
        spec: p.spec.clone(),
        scaler: model.scaler.clone(),
        norm: NormConvention::default(),
        encoder: p.encoder.clone(),
        decoder: p.decoder.clone(),
        files: files.iter().map(|f| f.to_string()).collect(),
    };
    write_json(&dir.join(KEYS), &p.keys)?;
    write_json(&dir.join(PREDICTOR), &p.predictor)?;
    if let Some(head) = &p.head {
        write_json(&dir.join(HEAD), head)?;
    }
    write_history(&dir.join(HISTORY), &model.history)?;
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(std::iter::once(MANIFEST).chain(files).map(|f| dir.join(f)).collect())
}

/// Reads and cross-checks the artifacts in `dir`.
pub fn load<T: Scalar>(dir: &Path) -> Result<LoadedModel<T>> {
    let manifest: Manifest<T> = read_json(&dir.join(MANIFEST))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Incompatible(format!(
            "artifact format {} is not supported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let keys: Vec<CircularKey<T>> = read_json(&dir.join(KEYS))?;
    let predictor: PredictorParams<T> = read_json(&dir.join(PREDICTOR))?;
    predictor.validate()?;
    let head: Option<ReconstructionHead<T>> = if manifest.files.iter().any(|f| f == HEAD) {
        Some(read_json(&dir.join(HEAD))?)
    } else {
        None
    };
    let spec = manifest.spec.clone();
    spec.validate()?;
    let mismatch = |what: &str| Error::Incompatible(format!("{what} does not match the manifest"));
    if keys.is_empty() || keys.iter().any(|k| k.tau() != spec.tau) {
        return Err(mismatch("key length"));
    }
    if predictor.input_len != spec.input_len() || predictor.output_len != spec.horizon {
        return Err(mismatch("predictor shape"));
    }
    if let Some(h) = &head {
        if h.channels != spec.channels || !h.is_finite() {
            return Err(mismatch("head"));
        }
    }
    if manifest.scaler.mean.len() != spec.channels {
        return Err(mismatch("scaler"));
    }
    let pipeline = Pipeline {
        spec,
        keys,
        predictor,
        head,
        encoder: manifest.encoder.clone(),
        decoder: manifest.decoder.clone(),
    };
    Ok(LoadedModel { pipeline, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::experiment::{prepare_data, train_model};
    use crate::synthetic::seasonal_series;

    #[test]
    fn save_load_round_trip() {
        let series = seasonal_series::<f64>(3, 300, 12, 0.1, 1).unwrap();
        let cfg = PipelineConfig {
            lookback: 36,
            horizon: 12,
            epochs: 2,
            lr: 0.01,
            ..PipelineConfig::default()
        };
        let data = prepare_data(&series, &cfg, None).unwrap();
        let model = train_model(&data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = save(dir.path(), &model).unwrap();
        assert!(paths.iter().all(|p| p.exists()));
        let loaded = load::<f64>(dir.path()).unwrap();
        assert_eq!(loaded.pipeline, model.pipeline);
        assert_eq!(loaded.manifest.scaler, model.scaler);

        std::fs::remove_file(dir.path().join(PREDICTOR)).unwrap();
        assert!(matches!(load::<f64>(dir.path()), Err(Error::Io { .. })));
    }
}
