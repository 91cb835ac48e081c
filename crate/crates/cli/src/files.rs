//! Dataset loading and output writing shared by the subcommands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fan_core::synthgen::io::read_jsonl;
use fan_core::synthgen::Instance;
use serde::Serialize;

use crate::error::{read_error, write_error, CliError, CliResult};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::user(format!("no such file: {}", path.display())))
    }
}

pub fn read_dataset(path: &Path) -> CliResult<Vec<Instance>> {
    require_file(path)?;
    let f = File::open(path).map_err(|e| read_error(path, e))?;
    read_jsonl(BufReader::new(f), &path.display().to_string())
        .map_err(|e| CliError::from_core("dataset", e))
}

/// Train and test files of a dataset directory. The test file is optional.
pub fn dataset_paths(dir: &Path) -> CliResult<(PathBuf, Option<PathBuf>)> {
    if !dir.is_dir() {
        return Err(CliError::user(format!("no such dataset directory: {}", dir.display())));
    }
    let train = dir.join(TRAIN_FILE);
    require_file(&train)?;
    let test = dir.join(TEST_FILE);
    Ok((train, test.is_file().then_some(test)))
}

pub fn read_dataset_dir(dir: &Path) -> CliResult<(Vec<Instance>, Vec<Instance>)> {
    let (train_path, test_path) = dataset_paths(dir)?;
    let train = read_dataset(&train_path)?;
    if train.is_empty() {
        return Err(CliError::user(format!("{} has no instances", train_path.display())));
    }
    let test = match test_path {
        Some(p) => read_dataset(&p)?,
        None => Vec::new(),
    };
    Ok((train, test))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| write_error(dir, e))
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
    let f = File::create(path).map_err(|e| write_error(path, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w)?;
    w.flush().map_err(|e| write_error(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    write_with(path, |w| writeln!(w, "{text}").map_err(|e| write_error(path, e)))
}
