use std::path::PathBuf;

use clap::Args;
use fan_core::metrics::{top_k_pairs, word_importance, RelationPair};
use fan_core::numeric::RealMatrix;
use fan_core::trainer::{forward_task, TrainConfig};
use serde::{Deserialize, Serialize};

use super::eval::load_checkpoint;
use crate::error::{CliError, CliResult};
use crate::files::{read_dataset, write_json};

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Zero-based position of the instance in the dataset file.
    #[arg(long)]
    pub instance: usize,
    /// Number of relation proposals to list.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to redraw one instance's attention externally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub config: TrainConfig,
    pub checkpoint: String,
    pub data: String,
    pub instance: usize,
    pub label: usize,
    pub predicted: usize,
    pub logits: RealMatrix,
    pub agg_weights: RealMatrix,
    pub focus_weights: RealMatrix,
    /// Column sums of the focus weights.
    pub word_importance: Vec<f64>,
    pub top_pairs: Vec<RelationPair>,
    pub target: RealMatrix,
    /// `None` when the target labels no relation.
    pub center_mass: Option<f64>,
}

pub fn cmd_export_attention(args: &ExportArgs) -> CliResult<String> {
    let (params, config) = load_checkpoint(&args.checkpoint)?;
    let data = read_dataset(&args.data)?;
    let inst = data.get(args.instance).ok_or_else(|| {
        CliError::user(format!(
            "unknown instance {} ({} has {} instances)",
            args.instance,
            args.data.display(),
            data.len()
        ))
    })?;
    if args.top_k == 0 {
        return Err(CliError::user("--top-k must be at least 1"));
    }
    let core = |e| CliError::from_core("export-attention", e);
    params.check_compatible(inst).map_err(core)?;
    let fwd = forward_task(inst, &params, &config).map_err(core)?;
    let state = fwd.state.clone();
    let center_mass = (!inst.target.has_no_relations())
        .then(|| fan_core::focus_loss::center_mass(&state.focus_weights, &inst.target))
        .transpose()
        .map_err(core)?;
    let dump = AttentionDump {
        config: config.clone(),
        checkpoint: args.checkpoint.display().to_string(),
        data: args.data.display().to_string(),
        instance: args.instance,
        label: inst.label,
        predicted: fwd.predicted(),
        word_importance: word_importance(&state.focus_weights),
        top_pairs: top_k_pairs(&state.focus_weights, args.top_k, config.ordered_pairs).map_err(core)?,
        target: inst.target.matrix().clone(),
        center_mass,
        logits: state.logits,
        agg_weights: state.agg_weights,
        focus_weights: state.focus_weights,
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        crate::files::ensure_dir(parent)?;
    }
    write_json(&args.out, &dump)?;
    Ok(format!(
        "instance {}: {} proposals, center-mass {}",
        args.instance,
        dump.top_pairs.len(),
        dump.center_mass.map_or("n/a".to_string(), |m| format!("{m:.6}"))
    ))
}
