use std::path::{Path, PathBuf};

use clap::Args;
use fan_core::metrics::{format_float, write_metrics_csv, MetricRow};
use fan_core::trainer::{evaluate_split, summarize, Checkpoint, ModelParams, SplitSummary, TrainConfig};
use serde_json::json;

use super::{path_value, RunConfig};
use crate::error::{read_error, write_error, CliError, CliResult};
use crate::files::{ensure_dir, read_dataset, require_file, write_json, write_with};

pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated K values; the checkpoint's list if omitted.
    #[arg(long, value_delimiter = ',')]
    pub recall_k: Option<Vec<usize>>,
    #[arg(long)]
    pub ordered_pairs: bool,
}

pub fn load_checkpoint(path: &Path) -> CliResult<(ModelParams, TrainConfig)> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let ckpt = Checkpoint::from_json(&text)
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    let params = ckpt
        .params()
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    Ok((params, ckpt.config))
}

fn summary_csv(summary: &SplitSummary) -> (Vec<String>, Vec<String>) {
    let mut header: Vec<String> = ["instances", "task_loss", "relation_loss", "combined_loss", "center_mass", "accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut row = vec![
        summary.instances.to_string(),
        format_float(summary.task_loss),
        format_float(summary.relation_loss),
        format_float(summary.combined_loss),
        summary.center_mass.map(format_float).unwrap_or_default(),
        format_float(summary.accuracy),
    ];
    for r in &summary.recall {
        header.push(format!("recall@{}", r.k));
        row.push(format_float(r.recall));
    }
    header.push("vacuous_recall_instances".into());
    row.push(summary.vacuous_recall_instances.to_string());
    (header, row)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<String> {
    let (params, mut config) = load_checkpoint(&args.checkpoint)?;
    if let Some(k) = &args.recall_k {
        config.recall_k = k.clone();
    }
    if args.ordered_pairs {
        config.ordered_pairs = true;
    }
    config.validate().map_err(|e| CliError::user(format!("configuration: {e}")))?;
    let data = read_dataset(&args.data)?;
    if data.is_empty() {
        return Err(CliError::user(format!("{} has no instances", args.data.display())));
    }
    let evals = evaluate_split(&data, &params, &config).map_err(|e| CliError::from_core("eval", e))?;
    let summary = summarize(&evals, &config);

    let rows: Vec<MetricRow> = evals
        .iter()
        .enumerate()
        .flat_map(|(i, e)| {
            config.recall_k.iter().zip(&e.recall).map(move |(&k, r)| MetricRow {
                instance_id: i,
                k,
                recall: r.value(),
                center_mass: e.center_mass,
            })
        })
        .collect();

    ensure_dir(&args.out)?;
    let metrics_path = args.out.join(METRICS_CSV);
    write_with(&metrics_path, |w| write_metrics_csv(w, &rows).map_err(|e| write_error(&metrics_path, e)))?;
    let summary_path = args.out.join(SUMMARY_CSV);
    let (header, row) = summary_csv(&summary);
    write_with(&summary_path, |w| {
        use std::io::Write;
        writeln!(w, "{}\n{}", header.join(","), row.join(",")).map_err(|e| write_error(&summary_path, e))
    })?;
    write_json(&args.out.join(SUMMARY_JSON), &json!({ "config": config, "summary": summary }))?;
    RunConfig {
        command: "eval",
        inputs: json!({ "checkpoint": path_value(&args.checkpoint), "data": path_value(&args.data) }),
        outputs: vec![METRICS_CSV.into(), SUMMARY_CSV.into(), SUMMARY_JSON.into()],
        settings: serde_json::to_value(&config).map_err(|e| CliError::internal(e.to_string()))?,
    }
    .write(&args.out)?;
    serde_json::to_string(&summary).map_err(|e| CliError::internal(e.to_string()))
}
