//! Training configuration from a JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use fan_core::attention::AggAxis;
use fan_core::focus_loss::LossVariant;
use fan_core::trainer::{HeadMode, OptimizerConfig, Strategy, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{read_error, CliError, CliResult};

/// Environment variable consulted for the seed when neither a flag nor
/// the config file sets one.
pub const SEED_ENV: &str = "FAN_SEED";

/// Parses a snake_case enum name the same way config files spell it.
pub fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_k_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Language,
    Vision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainOptions {
    /// JSON training config; missing fields take the preset's values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base settings: `language` (Adam 1e-3, lambda 0.1) or `vision` (SGD 5e-4, lambda 0.01).
    #[arg(long, value_parser = parse_named::<Preset>)]
    pub preset: Option<Preset>,
    /// row, mat, mat_focal or unsup.
    #[arg(long, value_parser = parse_named::<Strategy>)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub focal_r: Option<u32>,
    /// focal, l2 or smooth_l1.
    #[arg(long, value_parser = parse_named::<LossVariant>)]
    pub loss_variant: Option<LossVariant>,
    /// adam or sgd_momentum; takes that optimizer's default settings.
    #[arg(long, value_parser = parse_named::<OptimizerKind>)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Overrides the config file and FAN_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// residual or concat.
    #[arg(long, value_parser = parse_named::<HeadMode>)]
    pub head_mode: Option<HeadMode>,
    /// row or col.
    #[arg(long, value_parser = parse_named::<AggAxis>)]
    pub agg_axis: Option<AggAxis>,
    #[arg(long)]
    pub d_k: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Comma-separated K values, e.g. `1,5,10`.
    #[arg(long, value_parser = parse_k_list)]
    pub recall_k: Option<Vec<usize>>,
    #[arg(long)]
    pub no_lr_decay: bool,
    #[arg(long)]
    pub freeze_attention: bool,
    #[arg(long)]
    pub ordered_pairs: bool,
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

/// Seed from the environment, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| CliError::user(format!("{SEED_ENV}=`{v}`: {e}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::user(format!("{SEED_ENV}: {e}"))),
    }
}

/// Flag, then `fallback` (e.g. a config file's value), then FAN_SEED, then 0.
pub fn resolve_seed(flag: Option<u64>, fallback: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(fallback) {
        return Ok(s);
    }
    Ok(env_seed()?.unwrap_or(0))
}

impl TrainOptions {
    /// Merges preset, config file and flags, in increasing priority.
    pub fn resolve(&self) -> CliResult<TrainConfig> {
        let base = match self.preset.unwrap_or(Preset::Language) {
            Preset::Language => TrainConfig::language(),
            Preset::Vision => TrainConfig::vision(),
        };
        let (mut cfg, file_seed) = match &self.config {
            None => (base, None),
            Some(path) => {
                let v = read_json(path)?;
                let Value::Object(fields) = v else {
                    return Err(CliError::user(format!("{}: expected a JSON object", path.display())));
                };
                let file_seed = fields.get("seed").and_then(Value::as_u64);
                let mut merged = serde_json::to_value(&base).expect("config serializes");
                let obj = merged.as_object_mut().expect("config is an object");
                for (k, v) in fields {
                    obj.insert(k, v);
                }
                let cfg: TrainConfig = serde_json::from_value(merged)
                    .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
                (cfg, file_seed)
            }
        };
        cfg.seed = resolve_seed(self.seed, file_seed)?;
        if let Some(kind) = self.optimizer {
            cfg.optimizer = match kind {
                OptimizerKind::Adam => OptimizerConfig::adam(1e-3),
                OptimizerKind::SgdMomentum => OptimizerConfig::sgd_momentum(5e-4),
            };
        }
        if let Some(lr) = self.lr {
            cfg.optimizer = cfg.optimizer.with_lr(lr);
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(strategy, lambda, focal_r, loss_variant, epochs, batch_size, head_mode, agg_axis, d_k, eps, recall_k);
        if self.no_lr_decay {
            cfg.lr_step_decay = false;
        }
        if self.freeze_attention {
            cfg.freeze_attention = true;
        }
        if self.ordered_pairs {
            cfg.ordered_pairs = true;
        }
        cfg.validate().map_err(|e| CliError::user(format!("configuration: {e}")))?;
        Ok(cfg)
    }
}
