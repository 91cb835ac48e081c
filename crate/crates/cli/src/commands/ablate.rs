use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use fan_core::trainer::{ablate, ablation_csv_header, AblationGrid, AblationResult};
use serde_json::json;

use super::{path_value, RunConfig};
use crate::error::{read_error, write_error, CliError, CliResult};
use crate::files::{ensure_dir, read_dataset_dir};
use crate::options::TrainOptions;

pub const ABLATION_CSV: &str = "ablation.csv";
pub const CURVES_CSV: &str = "recall_curves.csv";

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    /// Grid JSON: `{"axes": [{"field": "focal_r", "values": [0, 2]}, ...]}`.
    #[arg(long)]
    pub grid: PathBuf,
    /// Dataset directory holding train.jsonl and test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cells trained concurrently. Output order does not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Keep rows already in the output and train only the missing cells.
    #[arg(long)]
    pub resume: bool,
    /// Base configuration the grid overrides.
    #[command(flatten)]
    pub options: TrainOptions,
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 fields")
}

/// `(cell, overrides)` of each row of an existing ablation table.
fn completed_cells(path: &Path, header: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    let found: Vec<String> = r
        .headers()
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(CliError::user(format!(
            "{}: columns differ from this sweep's, cannot resume",
            path.display()
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
            Ok((rec[0].to_string(), rec[1].to_string()))
        })
        .collect()
}

fn open_output(path: &Path, append: bool, header: &str) -> CliResult<File> {
    let exists = path.is_file();
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| write_error(path, e))?;
    if !(append && exists) {
        f.write_all(header.as_bytes()).map_err(|e| write_error(path, e))?;
    }
    Ok(f)
}

pub fn cmd_ablate(args: &AblateArgs) -> CliResult<String> {
    let base = args.options.resolve()?;
    let text = std::fs::read_to_string(&args.grid).map_err(|e| read_error(&args.grid, e))?;
    let grid: AblationGrid =
        serde_json::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", args.grid.display())))?;
    let cells = grid.cells(&base).map_err(|e| CliError::from_core("grid", e))?;
    if cells.is_empty() {
        return Err(CliError::user(format!("{}: the grid has no cells", args.grid.display())));
    }
    let (train_set, test_set) = read_dataset_dir(&args.data)?;
    ensure_dir(&args.out)?;

    let table_path = args.out.join(ABLATION_CSV);
    let curves_path = args.out.join(CURVES_CSV);
    let header = ablation_csv_header(&base.recall_k);
    let done = if args.resume && table_path.is_file() {
        completed_cells(&table_path, &header)?
    } else {
        Vec::new()
    };
    for (id, label) in &done {
        match cells.iter().find(|c| &c.id == id) {
            Some(c) if &c.label() == label => {}
            _ => {
                return Err(CliError::user(format!(
                    "{}: row {id} ({label}) does not belong to this grid, cannot resume",
                    table_path.display()
                )))
            }
        }
    }
    let todo: Vec<_> = cells.iter().filter(|c| !done.iter().any(|(id, _)| id == &c.id)).cloned().collect();

    let append = args.resume && !done.is_empty();
    let mut table = open_output(&table_path, append, &csv_line(&header))?;
    let curve_header = ["cell", "k", "recall"].map(String::from);
    let mut curves = open_output(&curves_path, append, &csv_line(&curve_header))?;

    let recall_k = base.recall_k.clone();
    let mut trained = 0;
    let result = ablate(&todo, &train_set, &test_set, args.jobs, |r: &AblationResult| {
        table.write_all(csv_line(&r.csv_record(&recall_k)).as_bytes())?;
        table.flush()?;
        for rec in r.curve_records() {
            curves.write_all(csv_line(&rec).as_bytes())?;
        }
        curves.flush()?;
        trained += 1;
        Ok(())
    });
    RunConfig {
        command: "ablate",
        inputs: json!({ "grid": path_value(&args.grid), "data": path_value(&args.data) }),
        outputs: vec![ABLATION_CSV.into(), CURVES_CSV.into()],
        settings: json!({
            "base": base,
            "grid": grid,
            "cells": cells.iter().map(|c| json!({ "id": c.id, "overrides": c.label(), "config": c.config })).collect::<Vec<_>>(),
            "jobs": args.jobs,
        }),
    }
    .write(&args.out)?;
    result.map_err(|e| CliError::from_core("ablate", e))?;
    Ok(format!(
        "{} cells: {} trained, {} already done",
        cells.len(),
        trained,
        done.len()
    ))
}
