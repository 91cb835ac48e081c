pub mod ablate;
pub mod eval;
pub mod export;
pub mod gen;
pub mod gradcheck;
pub mod train;

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliResult;
use crate::files::write_json;

pub const RUN_FILE: &str = "run.json";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a> {
    pub command: &'a str,
    pub inputs: Value,
    pub outputs: Vec<String>,
    pub settings: Value,
}

impl RunConfig<'_> {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join(RUN_FILE), self)
    }
}

pub(crate) fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}
