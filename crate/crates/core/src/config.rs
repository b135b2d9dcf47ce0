//! Run configuration and fingerprints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::Mode;
use crate::error::{Error, Result};
use crate::keys::KeyKind;
use crate::predictors::{PredictorKind, TrainConfig};
use crate::scalar::Scalar;
use crate::series::{IngestionPolicy, SplitRatios};

/// Seasonal period setting: detected from the training rows or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "TauRepr", into = "TauRepr")]
pub enum TauSetting {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TauRepr {
    Fixed(usize),
    Named(String),
}

impl TryFrom<TauRepr> for TauSetting {
    type Error = String;

    fn try_from(r: TauRepr) -> std::result::Result<Self, String> {
        match r {
            TauRepr::Fixed(n) => Ok(Self::Fixed(n)),
            TauRepr::Named(s) => s.parse().map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<TauSetting> for TauRepr {
    fn from(t: TauSetting) -> Self {
        match t {
            TauSetting::Auto => TauRepr::Named("auto".into()),
            TauSetting::Fixed(n) => TauRepr::Fixed(n),
        }
    }
}

impl std::str::FromStr for TauSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        s.parse()
            .map(Self::Fixed)
            .map_err(|_| Error::Config(format!("tau must be \"auto\" or a positive integer, got '{s}'")))
    }
}

impl std::fmt::Display for TauSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Fixed(n) => write!(f, "{n}"),
        }
    }
}

/// Every knob of a run, in a flat layout that maps one-to-one onto the
/// config file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_path: Option<PathBuf>,
    pub ingestion: IngestionPolicy,
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub tau: TauSetting,
    pub mode: Mode,
    pub key: KeyKind,
    pub key_seed: u64,
    pub per_channel_keys: bool,
    pub predictor: PredictorKind,
    pub hidden_width: usize,
    pub head_hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub clip_alpha: f64,
    pub batch: usize,
    pub seed: u64,
    /// Per-channel z-scoring fitted on the training rows.
    pub standardize: bool,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub repetitions: usize,
    pub warmup: usize,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let split = SplitRatios::default();
        Self {
            data_path: None,
            ingestion: IngestionPolicy::Reject,
            lookback: 96,
            horizon: 24,
            stride: 1,
            tau: TauSetting::Auto,
            mode: Mode::Sparse,
            key: KeyKind::SeasonalOrthogonal,
            key_seed: 0,
            per_channel_keys: false,
            predictor: PredictorKind::Linear,
            hidden_width: crate::predictors::DEFAULT_HIDDEN,
            head_hidden: 0,
            epochs: train.epochs,
            lr: train.lr,
            alpha: train.alpha,
            beta: train.beta,
            clip_alpha: train.clip_alpha,
            batch: train.batch,
            seed: train.seed,
            standardize: true,
            train_ratio: split.train,
            val_ratio: split.val,
            test_ratio: split.test,
            repetitions: 20,
            warmup: 3,
            output_dir: PathBuf::from("pcdf-out"),
        }
    }
}

/// Keys that do not influence results and are left out of fingerprints.
const NON_RESULT_KEYS: [&str; 4] = ["output_dir", "repetitions", "warmup", "data_path"];

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml_parse(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            alpha: self.alpha,
            beta: self.beta,
            clip_alpha: self.clip_alpha,
            seed: self.seed,
            batch: self.batch,
        }
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            val: self.val_ratio,
            test: self.test_ratio,
        }
    }

    /// Checks everything that can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        if self.lookback < 2 {
            return Err(Error::Config("lookback must be at least 2".into()));
        }
        if self.horizon == 0 || self.stride == 0 {
            return Err(Error::Config("horizon and stride must be positive".into()));
        }
        if let TauSetting::Fixed(tau) = self.tau {
            if tau == 0 || tau > self.lookback {
                return Err(Error::Config(format!("tau = {tau} must lie in [1, lookback = {}]", self.lookback)));
            }
        }
        if self.predictor == PredictorKind::Mlp && self.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        self.train_config().validate()?;
        self.split_ratios().validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical JSON: keys sorted, result-neutral keys removed.
    pub fn canonical_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            for k in NON_RESULT_KEYS {
                map.remove(k);
            }
        }
        // serde_json's default map is ordered by key
        Ok(serde_json::to_string(&value)?)
    }

    /// SHA-256 of [`Self::canonical_json`].
    pub fn fingerprint(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }
}

fn toml_parse(text: &str) -> Result<PipelineConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fingerprint of the sample values (shape plus little-endian `f64` bits)
/// and of the parameters that decide the windows and splits.
pub fn data_fingerprint<T: Scalar>(values: &crate::Matrix<T>, cfg: &PipelineConfig, tau: usize) -> Result<String> {
    let mut h = Sha256::new();
    h.update((values.rows() as u64).to_le_bytes());
    h.update((values.cols() as u64).to_le_bytes());
    for v in values.as_slice() {
        h.update(v.as_f64().to_le_bytes());
    }
    let split = serde_json::json!({
        "lookback": cfg.lookback,
        "horizon": cfg.horizon,
        "stride": cfg.stride,
        "standardize": cfg.standardize,
        "ratios": [cfg.train_ratio, cfg.val_ratio, cfg.test_ratio],
        "tau": tau,
    });
    h.update(split.to_string().as_bytes());
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            lookback = 336
            horizon = 24
            tau = "auto"
            mode = "dense"
            key = "random-normal"
            predictor = "mlp"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.lookback, 336);
        assert_eq!(cfg.mode, Mode::Dense);
        assert_eq!(cfg.key, KeyKind::RandomNormal);
        assert_eq!(cfg.epochs, PipelineConfig::default().epochs);
        let fixed = PipelineConfig::from_toml_str("tau = 24").unwrap();
        assert_eq!(fixed.tau, TauSetting::Fixed(24));
        let text = toml::to_string(&fixed).unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), fixed);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(PipelineConfig::from_toml_str("lookbak = 3").is_err());
        assert!(PipelineConfig::from_toml_str("tau = \"weekly\"").is_err());
        assert!(PipelineConfig::from_toml_str("mode = \"medium\"").is_err());
        let cfg = PipelineConfig {
            lr: -1.0,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            tau: TauSetting::Fixed(200),
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn fingerprint_ignores_output_location() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            output_dir: "elsewhere".into(),
            repetitions: 3,
            ..a.clone()
        };
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        let c = PipelineConfig { epochs: 3, ..a.clone() };
        assert_ne!(a.fingerprint().unwrap(), c.fingerprint().unwrap());
        assert_eq!(a.fingerprint().unwrap().len(), 64);
    }
}
