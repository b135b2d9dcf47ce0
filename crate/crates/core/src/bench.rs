//! Metrics, timing, the complexity/information calculators and run reports.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use crate::experiment::{ablation_run, compare_predictor_cost, AblationVariant, CostComparison};

/// Mean of squared element-wise differences.
pub fn mse<T: Scalar>(x_hat: &Matrix<T>, x: &Matrix<T>) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(Error::arg(format!(
            "shape {:?} does not match {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    if x.as_slice().is_empty() {
        return Err(Error::arg("mse of an empty matrix"));
    }
    let sum: f64 = x_hat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(&a, &b)| {
            let d = (a - b).as_f64();
            d * d
        })
        .sum();
    Ok(sum / x.as_slice().len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub repetitions: usize,
}

/// Median, min and max wall-clock seconds over `repetitions` calls of `f`
/// after `warmup` discarded calls. An even count takes the lower median.
pub fn time_inference<F: FnMut()>(mut f: F, repetitions: usize, warmup: usize) -> Result<Timing> {
    if repetitions == 0 {
        return Err(Error::arg("repetitions must be at least 1"));
    }
    for _ in 0..warmup {
        f();
    }
    let mut samples: Vec<f64> = (0..repetitions)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    Ok(Timing {
        median_s: samples[(repetitions - 1) / 2],
        min_s: samples[0],
        max_s: samples[repetitions - 1],
        repetitions,
    })
}

/// `mse * runtime`, unnormalized.
pub fn cdpi(mse: f64, runtime_s: f64) -> Result<f64> {
    if !(mse >= 0.0 && runtime_s >= 0.0) {
        return Err(Error::arg(format!("cdpi needs non-negative inputs, got {mse} and {runtime_s}")));
    }
    Ok(mse * runtime_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperiorityResult {
    pub d: usize,
    pub e: usize,
    pub tau: usize,
    pub threshold: f64,
    /// Smallest integer channel count strictly above the threshold.
    pub holds_for_c: usize,
}

/// Channel count above which the compressed pipeline is cheaper than a
/// multichannel predictor: `C > DE / (DE - 1 - 1/tau)`.
pub fn superiority_threshold(d: usize, e: usize, tau: usize) -> Result<SuperiorityResult> {
    if tau == 0 {
        return Err(Error::arg("tau must be positive"));
    }
    let de = (d * e) as f64;
    let limit = 1.0 + 1.0 / tau as f64;
    if de <= limit {
        return Err(Error::Infeasible { de, limit });
    }
    let threshold = de / (de - limit);
    Ok(SuperiorityResult {
        d,
        e,
        tau,
        threshold,
        holds_for_c: threshold.floor() as usize + 1,
    })
}

/// `0.5 * ln(1 + 1 / (C L sigma^2))` in nats.
pub fn ib_bound(channels: usize, lookback: usize, sigma2: f64) -> Result<f64> {
    if channels == 0 || lookback == 0 || !(sigma2 > 0.0) {
        return Err(Error::arg("ib_bound needs positive C, L and sigma^2"));
    }
    Ok(0.5 * (1.0 / (channels as f64 * lookback as f64 * sigma2)).ln_1p())
}

/// One evaluation run. Construct with [`RunReport::new`], which derives
/// `cdpi` from `mse` and `runtime_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub mse: f64,
    pub runtime_s: f64,
    pub runtime_min_s: f64,
    pub runtime_max_s: f64,
    pub cdpi: f64,
    pub config_fingerprint: String,
    pub data_fingerprint: String,
    pub payload_bytes: usize,
    pub mode: String,
    pub channels: usize,
    /// Channels carried per transmitted channel, e.g. `"8:1"`.
    pub compression_ratio: String,
    pub compressed_channels: usize,
    pub tau: usize,
    pub test_windows: usize,
    pub baseline_mse: Option<f64>,
}

/// Fields that depend on wall-clock time.
pub const WALL_CLOCK_FIELDS: [&str; 4] = ["runtime_s", "runtime_min_s", "runtime_max_s", "cdpi"];

impl RunReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        mse: f64,
        timing: Timing,
        config_fingerprint: String,
        data_fingerprint: String,
        payload_bytes: usize,
        mode: impl Into<String>,
        channels: usize,
        tau: usize,
        test_windows: usize,
    ) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            mse,
            runtime_s: timing.median_s,
            runtime_min_s: timing.min_s,
            runtime_max_s: timing.max_s,
            cdpi: cdpi(mse, timing.median_s)?,
            config_fingerprint,
            data_fingerprint,
            payload_bytes,
            mode: mode.into(),
            channels,
            compression_ratio: format!("{channels}:1"),
            compressed_channels: 1,
            tau,
            test_windows,
            baseline_mse: None,
        })
    }

    /// Checks `cdpi == mse * runtime_s` to 1e-12 relative.
    pub fn check(&self) -> Result<()> {
        let want = self.mse * self.runtime_s;
        if (self.cdpi - want).abs() > 1e-12 * want.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Data(format!("report cdpi {} != mse * runtime {want}", self.cdpi)));
        }
        Ok(())
    }

    /// The report as JSON without wall-clock fields; equal across reruns.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            for key in WALL_CLOCK_FIELDS {
                map.remove(key);
            }
        }
        Ok(serde_json::to_string(&value)?)
    }

    pub const CSV_HEADER: [&'static str; 12] = [
        "label",
        "mse",
        "runtime_s",
        "cdpi",
        "baseline_mse",
        "payload_bytes",
        "mode",
        "channels",
        "compression_ratio",
        "tau",
        "config_fingerprint",
        "data_fingerprint",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            format!("{:e}", self.mse),
            format!("{:e}", self.runtime_s),
            format!("{:e}", self.cdpi),
            self.baseline_mse.map(|v| format!("{v:e}")).unwrap_or_default(),
            self.payload_bytes.to_string(),
            self.mode.clone(),
            self.channels.to_string(),
            self.compression_ratio.clone(),
            self.tau.to_string(),
            self.config_fingerprint.clone(),
            self.data_fingerprint.clone(),
        ]
    }
}
