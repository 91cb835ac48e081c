use std::path::PathBuf;

use clap::Args;
use fan_core::trainer::{train, Checkpoint};
use serde_json::json;

use super::{path_value, RunConfig};
use crate::error::{write_error, CliError, CliResult};
use crate::files::{ensure_dir, read_dataset_dir, write_json, write_with};
use crate::options::TrainOptions;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset directory holding train.jsonl and optionally test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the report and checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub options: TrainOptions,
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<String> {
    let config = args.options.resolve()?;
    let (train_set, test_set) = read_dataset_dir(&args.data)?;
    ensure_dir(&args.out)?;
    let outcome = train(&train_set, &test_set, &config).map_err(|e| CliError::from_core("train", e))?;
    let mut report = outcome.report;
    report.checkpoint = Some(CHECKPOINT_FILE.to_string());

    let ckpt = Checkpoint::new(&outcome.params, &config)
        .to_json()
        .map_err(|e| CliError::internal(e.to_string()))?;
    let ckpt_path = args.out.join(CHECKPOINT_FILE);
    std::fs::write(&ckpt_path, ckpt + "\n").map_err(|e| write_error(&ckpt_path, e))?;
    write_json(&args.out.join(REPORT_JSON), &report)?;
    let csv_path = args.out.join(REPORT_CSV);
    write_with(&csv_path, |w| report.write_csv(w).map_err(|e| write_error(&csv_path, e)))?;
    RunConfig {
        command: "train",
        inputs: json!({ "data": path_value(&args.data) }),
        outputs: vec![REPORT_JSON.into(), REPORT_CSV.into(), CHECKPOINT_FILE.into()],
        settings: serde_json::to_value(&config).map_err(|e| CliError::internal(e.to_string()))?,
    }
    .write(&args.out)?;

    let last = report.last();
    Ok(json!({
        "epochs": report.epochs.len(),
        "effective_strategy": report.effective_strategy,
        "train": last.train,
        "test": last.test,
    })
    .to_string())
}
