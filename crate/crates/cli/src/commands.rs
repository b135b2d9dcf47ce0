use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use pcdf_core::artifacts;
use pcdf_core::bench::{ib_bound, superiority_threshold, RunReport};
use pcdf_core::config::PipelineConfig;
use pcdf_core::experiment::{
    ablation_run, analyze, compare_predictor_cost, evaluate, pipeline_spec, prepare_data, train_model, AblationVariant,
};
use pcdf_core::predictors::Pipeline;
use pcdf_core::series::load_csv;
use pcdf_core::{Error, Result, Series};
use serde::Serialize;

use crate::args::{RunArgs, TheoryCalc, OUTPUT_DIR_ENV};

pub fn resolve(args: &RunArgs) -> Result<PipelineConfig> {
    args.resolve(std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
}

fn load_series(cfg: &PipelineConfig) -> Result<Series> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| Error::Config("no data path: set data_path in the config or pass --data".into()))?;
    load_csv(path, cfg.ingestion)
}

fn output_dir(cfg: &PipelineConfig) -> Result<&Path> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(dir)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_jsonl<S: Serialize>(path: &Path, records: &[S]) -> Result<()> {
    let mut f = File::create(path).map_err(io_err(path))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?).map_err(io_err(path))?;
    }
    Ok(())
}

fn write_reports(dir: &Path, stem: &str, reports: &[RunReport]) -> Result<()> {
    write_jsonl(&dir.join(format!("{stem}.jsonl")), reports)?;
    let path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record(RunReport::CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))
}

fn print_line(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        // a closed pipe (e.g. `| head`) is not an error for a report printer
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io_err(Path::new("<stdout>"))(e)),
        _ => Ok(()),
    }
}

fn print_json<S: Serialize>(value: &S) -> Result<()> {
    print_line(&serde_json::to_string_pretty(value)?)
}

pub fn cmd_analyze(args: &RunArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let series = load_series(&cfg)?;
    let report = analyze(&series, &cfg)?;
    write_json(&output_dir(&cfg)?.join("analysis.json"), &report)?;
    print_json(&report)
}

#[derive(Serialize)]
struct TrainSummary {
    config_fingerprint: String,
    data_fingerprint: String,
    channels: usize,
    tau: usize,
    train_windows: usize,
    epochs: usize,
    final_loss: Option<f64>,
    train_seconds: f64,
    artifacts: Vec<PathBuf>,
}

pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let series = load_series(&cfg)?;
    let data = prepare_data(&series, &cfg, None)?;
    let dir = output_dir(&cfg)?;
    let model = match train_model(&data, &cfg) {
        Ok(m) => m,
        Err(Error::Diverged {
            epoch,
            message,
            history,
        }) => {
            write_json(
                &dir.join("diverged.json"),
                &serde_json::json!({ "epoch": epoch, "message": message, "history": history }),
            )?;
            return Err(Error::Diverged {
                epoch,
                message,
                history,
            });
        }
        Err(e) => return Err(e),
    };
    let files = artifacts::save(&dir.join("model"), &model)?;
    let summary = TrainSummary {
        config_fingerprint: model.config_fingerprint.clone(),
        data_fingerprint: model.data_fingerprint.clone(),
        channels: data.channels,
        tau: data.tau,
        train_windows: data.splits.train.len(),
        epochs: model.history.len(),
        final_loss: model.history.last().map(|r| r.total),
        train_seconds: model.train_seconds,
        artifacts: files,
    };
    write_json(&dir.join("train.json"), &summary)?;
    print_json(&summary)
}

pub fn cmd_eval(args: &RunArgs, artifacts_dir: Option<&Path>, split: &str) -> Result<()> {
    let cfg = resolve(args)?;
    let dir = output_dir(&cfg)?;
    let art_dir = artifacts_dir.map(Path::to_path_buf).unwrap_or_else(|| dir.join("model"));
    let loaded = artifacts::load::<f64>(&art_dir)?;
    let fingerprint = cfg.fingerprint()?;
    if loaded.manifest.config_fingerprint != fingerprint {
        return Err(Error::Incompatible(format!(
            "artifacts were trained with config {}, current config is {fingerprint}",
            loaded.manifest.config_fingerprint
        )));
    }
    let series = load_series(&cfg)?;
    let data = prepare_data(&series, &cfg, Some(loaded.manifest.scaler.clone()))?;
    if data.tau != loaded.pipeline.spec.tau || data.channels != loaded.pipeline.spec.channels {
        return Err(Error::Incompatible(format!(
            "data resolves to tau = {} with {} channels, artifacts expect tau = {} with {}",
            data.tau, data.channels, loaded.pipeline.spec.tau, loaded.pipeline.spec.channels
        )));
    }
    let windows = match split {
        "train" => &data.splits.train,
        "val" => &data.splits.val,
        "test" => &data.splits.test,
        other => return Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
    };
    let report = evaluate(
        &loaded.pipeline,
        windows,
        &cfg,
        &format!("pcdf-{split}"),
        &fingerprint,
        &data.data_fingerprint,
    )?;
    report.check()?;
    write_reports(dir, "eval", std::slice::from_ref(&report))?;
    print_json(&report)
}

pub fn cmd_ablate(args: &RunArgs, variants: &[AblationVariant]) -> Result<()> {
    let cfg = resolve(args)?;
    let series = load_series(&cfg)?;
    let data = prepare_data(&series, &cfg, None)?;
    let chosen: Vec<AblationVariant> = if variants.is_empty() {
        AblationVariant::ALL.to_vec()
    } else {
        variants.to_vec()
    };
    let mut reports = Vec::with_capacity(chosen.len());
    for v in chosen {
        let r = ablation_run(&data, v, &cfg)?;
        print_line(&serde_json::to_string(&r)?)?;
        reports.push(r);
    }
    write_reports(output_dir(&cfg)?, "ablation", &reports)
}

pub fn cmd_theory(calc: &TheoryCalc) -> Result<()> {
    match *calc {
        TheoryCalc::Superiority { d, e, tau } => print_json(&superiority_threshold(d, e, tau)?),
        TheoryCalc::Ib {
            channels,
            lookback,
            sigma2,
        } => print_json(&serde_json::json!({
            "channels": channels,
            "lookback": lookback,
            "sigma2": sigma2,
            "bound_nats": ib_bound(channels, lookback, sigma2)?,
        })),
    }
}

pub fn cmd_bench(args: &RunArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let series = load_series(&cfg)?;
    let data = prepare_data(&series, &cfg, None)?;
    let pipeline = Pipeline::<f64>::init(pipeline_spec(&cfg, data.channels, data.tau))?;
    let cost = compare_predictor_cost(&pipeline, &data.splits.test, cfg.repetitions, cfg.warmup)?;
    let record = serde_json::json!({
        "config_fingerprint": cfg.fingerprint()?,
        "data_fingerprint": data.data_fingerprint,
        "cost": cost,
        "predictor_speedup": cost.multichannel_predictor.median_s / cost.compressed_predictor.median_s.max(f64::MIN_POSITIVE),
    });
    write_jsonl(&output_dir(&cfg)?.join("bench.jsonl"), std::slice::from_ref(&record))?;
    print_json(&record)
}
