use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pcdf_core::codec::Mode;
use pcdf_core::config::{PipelineConfig, TauSetting};
use pcdf_core::experiment::AblationVariant;
use pcdf_core::keys::KeyKind;
use pcdf_core::predictors::PredictorKind;
use pcdf_core::series::IngestionPolicy;

/// Output directory override, below explicit flags and above the config file.
pub const OUTPUT_DIR_ENV: &str = "PCDF_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "pcdf", version, about = "Seasonal channel compression and single-channel forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Period detection, channel redundancy and predictability report.
    Analyze(RunArgs),
    /// Train a pipeline and write its artifacts.
    Train(RunArgs),
    /// Evaluate trained artifacts on the test split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Artifact directory (default: <output_dir>/model).
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Which split to score: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and evaluate the architecture ablation variants.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Variants to run (repeatable); all five when omitted.
        #[arg(long = "variant", value_parser = parse_variant)]
        variants: Vec<AblationVariant>,
    },
    /// Complexity and information calculators.
    Theory {
        #[command(subcommand)]
        calc: TheoryCalc,
    },
    /// Inference cost of the compressed predictor against a multichannel one.
    Bench(RunArgs),
}

#[derive(Debug, Subcommand)]
pub enum TheoryCalc {
    /// Smallest channel count for which compression is cheaper.
    Superiority {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        e: usize,
        #[arg(long)]
        tau: usize,
    },
    /// Upper bound on predictive-information loss, in nats.
    Ib {
        #[arg(long)]
        channels: usize,
        #[arg(long)]
        lookback: usize,
        #[arg(long)]
        sigma2: f64,
    },
}

fn parse_variant(s: &str) -> Result<AblationVariant, String> {
    s.parse().map_err(|e: pcdf_core::Error| e.to_string())
}

fn parse_tau(s: &str) -> Result<TauSetting, String> {
    s.parse().map_err(|e: pcdf_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: pcdf_core::Error| e.to_string())
}

fn parse_key(s: &str) -> Result<KeyKind, String> {
    s.parse().map_err(|e: pcdf_core::Error| e.to_string())
}

fn parse_predictor(s: &str) -> Result<PredictorKind, String> {
    s.parse().map_err(|e: pcdf_core::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<IngestionPolicy, String> {
    match s {
        "reject" => Ok(IngestionPolicy::Reject),
        "forward-fill" => Ok(IngestionPolicy::ForwardFill),
        other => Err(format!("unknown ingestion policy '{other}'")),
    }
}

/// Config file plus per-key overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file with the flat pipeline keys.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long = "data")]
    pub data_path: Option<PathBuf>,
    #[arg(long, value_parser = parse_policy)]
    pub ingestion: Option<IngestionPolicy>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// "auto" or an integer period.
    #[arg(long, value_parser = parse_tau)]
    pub tau: Option<TauSetting>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, value_parser = parse_key)]
    pub key: Option<KeyKind>,
    #[arg(long)]
    pub key_seed: Option<u64>,
    #[arg(long)]
    pub per_channel_keys: Option<bool>,
    #[arg(long, value_parser = parse_predictor)]
    pub predictor: Option<PredictorKind>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub clip_alpha: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub train_ratio: Option<f64>,
    #[arg(long)]
    pub val_ratio: Option<f64>,
    #[arg(long)]
    pub test_ratio: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })+
    };
}

impl RunArgs {
    /// Resolves the config: defaults, then the file, then the output-dir
    /// environment variable, then flags.
    pub fn resolve(&self, env_output_dir: Option<PathBuf>) -> pcdf_core::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(dir) = env_output_dir {
            cfg.output_dir = dir;
        }
        if let Some(p) = &self.data_path {
            cfg.data_path = Some(p.clone());
        }
        let args = self;
        overlay!(
            cfg, args, ingestion, lookback, horizon, stride, tau, mode, key, key_seed, per_channel_keys, predictor,
            hidden_width, head_hidden, epochs, lr, alpha, beta, clip_alpha, batch, seed, standardize, train_ratio,
            val_ratio, test_ratio, repetitions, warmup, output_dir,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}
