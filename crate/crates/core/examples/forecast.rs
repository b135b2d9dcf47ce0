//! Trains a compressed forecaster on synthetic seasonal data and compares it
//! with seasonal persistence and with an uncompressed multichannel predictor.
//!
//! `cargo run --release -p pcdf-core --example forecast`

use pcdf_core::config::{PipelineConfig, TauSetting};
use pcdf_core::experiment::{compare_predictor_cost, evaluate, prepare_data, train_model};
use pcdf_core::synthetic::seasonal_series;

fn main() -> pcdf_core::Result<()> {
    let series = seasonal_series::<f64>(8, 2400, 24, 0.3, 9)?;
    let cfg = PipelineConfig {
        lookback: 336,
        horizon: 24,
        tau: TauSetting::Fixed(24),
        lr: 0.01,
        alpha: 0.1 / (24.0 * 8.0f64).powi(2),
        repetitions: 5,
        warmup: 1,
        ..PipelineConfig::default()
    };
    let data = prepare_data(&series, &cfg, None)?;
    let model = train_model(&data, &cfg)?;
    for e in &model.history {
        println!("epoch {:>2}  loss {:.5}", e.epoch, e.total);
    }
    let test = &data.splits.test;
    let report = evaluate(&model.pipeline, test, &cfg, "linear", &model.config_fingerprint, &model.data_fingerprint)?;
    println!("test mse {:.4}  seasonal naive {:.4}", report.mse, report.baseline_mse.unwrap_or(f64::NAN));
    let cost = compare_predictor_cost(&model.pipeline, test, cfg.repetitions, cfg.warmup)?;
    println!(
        "predictor time {:.2e} s ({} params) vs all channels {:.2e} s ({} params)",
        cost.compressed_predictor.median_s,
        cost.compressed_params,
        cost.multichannel_predictor.median_s,
        cost.multichannel_params
    );
    Ok(())
}
