use std::path::PathBuf;

use clap::Args;
use fan_core::trainer::{grad_check, ModelParams};
use serde_json::json;

use super::eval::load_checkpoint;
use crate::error::{CliError, CliResult};
use crate::files::read_dataset;
use crate::options::TrainOptions;

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Dataset file (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Check only this instance; all instances otherwise.
    #[arg(long)]
    pub instance: Option<usize>,
    /// Check at these parameters instead of a fresh initialization.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Central-difference step, within [1e-7, 1e-3].
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest acceptable relative error; exceeding it exits with code 1.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    #[command(flatten)]
    pub options: TrainOptions,
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<String> {
    let data = read_dataset(&args.data)?;
    if data.is_empty() {
        return Err(CliError::user(format!("{} has no instances", args.data.display())));
    }
    let (params, config) = match &args.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => {
            let config = args.options.resolve()?;
            let classes = data.iter().map(|i| i.label).max().unwrap_or(0) + 1;
            (ModelParams::init(data[0].entities.dim(), classes, &config), config)
        }
    };
    let indices: Vec<usize> = match args.instance {
        Some(i) if i >= data.len() => {
            return Err(CliError::user(format!("unknown instance {i} ({} instances)", data.len())))
        }
        Some(i) => vec![i],
        None => (0..data.len()).collect(),
    };
    let mut worst = (0.0_f64, indices[0]);
    for &i in &indices {
        let e = grad_check(&params, &data[i], &config, args.step).map_err(|e| CliError::from_core("gradcheck", e))?;
        if e > worst.0 {
            worst = (e, i);
        }
    }
    let out = json!({
        "checked": indices.len(),
        "max_relative_error": worst.0,
        "worst_instance": worst.1,
        "step": args.step,
        "tolerance": args.tolerance,
        "config": config,
    })
    .to_string();
    if worst.0 > args.tolerance || !worst.0.is_finite() {
        return Err(CliError::internal(format!("gradient check failed: {out}")));
    }
    Ok(out)
}
