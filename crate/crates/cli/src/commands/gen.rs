use std::path::PathBuf;

use clap::Args;
use fan_core::supervision::LexicalPairTable;
use fan_core::synthgen::io::write_jsonl;
use fan_core::synthgen::{generate_dataset, generate_document_dataset, DocumentSpec, WorldSpec};
use serde::de::DeserializeOwned;
use serde_json::json;

use super::{path_value, RunConfig};
use crate::error::{read_error, write_error, CliError, CliResult};
use crate::files::{ensure_dir, write_json, write_with, TEST_FILE, TRAIN_FILE};
use crate::options::resolve_seed;

pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Output directory for train.jsonl, test.jsonl and dataset.json.
    #[arg(long)]
    pub out: PathBuf,
    /// World spec JSON (a document spec with --document); the demo world if omitted.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Generate tagged token documents with lexical supervision.
    #[arg(long)]
    pub document: bool,
    /// Plain-text lexical pair table for --document.
    #[arg(long, value_name = "FILE", requires = "document")]
    pub pair_table: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub n_train: usize,
    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
    /// Overrides FAN_SEED; 0 if neither is set.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn read_spec<T: DeserializeOwned>(path: &std::path::Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<String> {
    let seed = resolve_seed(args.seed, None)?;
    let (dataset, spec_value, num_labels) = if args.document {
        let mut spec: DocumentSpec = match &args.spec {
            Some(p) => read_spec(p)?,
            None => DocumentSpec::demo(),
        };
        if let Some(p) = &args.pair_table {
            let text = std::fs::read_to_string(p).map_err(|e| read_error(p, e))?;
            let table = LexicalPairTable::parse(&text, &p.display().to_string())
                .map_err(|e| CliError::from_core("pair table", e))?;
            spec.pair_table = Some(table.iter().map(|(a, b)| [a, b]).collect());
        }
        let ds = generate_document_dataset(&spec, args.n_train, args.n_test, seed)
            .map_err(|e| CliError::from_core("document spec", e))?;
        let labels = spec.world.num_scene_labels;
        (ds, serde_json::to_value(&spec), labels)
    } else {
        let spec: WorldSpec = match &args.spec {
            Some(p) => read_spec(p)?,
            None => WorldSpec::demo(),
        };
        let ds = generate_dataset(&spec, args.n_train, args.n_test, seed)
            .map_err(|e| CliError::from_core("world spec", e))?;
        let labels = spec.num_scene_labels;
        (ds, serde_json::to_value(&spec), labels)
    };
    let spec_value = spec_value.map_err(|e| CliError::internal(e.to_string()))?;

    ensure_dir(&args.out)?;
    for (name, split) in [(TRAIN_FILE, &dataset.train), (TEST_FILE, &dataset.test)] {
        let path = args.out.join(name);
        write_with(&path, |w| write_jsonl(w, split).map_err(|e| write_error(&path, e)))?;
    }
    let summary = dataset.summary(num_labels);
    write_json(
        &args.out.join(DATASET_FILE),
        &json!({ "seed": seed, "document": args.document, "spec": spec_value, "summary": summary }),
    )?;
    RunConfig {
        command: "gen",
        inputs: json!({
            "spec": args.spec.as_deref().map(path_value),
            "pair_table": args.pair_table.as_deref().map(path_value),
        }),
        outputs: vec![TRAIN_FILE.into(), TEST_FILE.into(), DATASET_FILE.into()],
        settings: json!({
            "seed": seed,
            "n_train": args.n_train,
            "n_test": args.n_test,
            "document": args.document,
        }),
    }
    .write(&args.out)?;
    serde_json::to_string(&summary).map_err(|e| CliError::internal(e.to_string()))
}
