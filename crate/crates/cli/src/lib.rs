//! The `fan` command line: dataset generation, training, evaluation,
//! ablation sweeps, attention export and gradient checks.
//!
//! Every subcommand is deterministic given its inputs and seed, and writes
//! a `run.json` next to its outputs recording the effective settings.
//! Exit codes: 0 on success, 1 on divergence or internal failure, 2 on bad
//! input.

pub mod commands;
pub mod error;
pub mod files;
pub mod options;

use clap::{Parser, Subcommand};

pub use commands::ablate::{cmd_ablate, AblateArgs};
pub use commands::eval::{cmd_eval, EvalArgs};
pub use commands::export::{cmd_export_attention, ExportArgs};
pub use commands::gen::{cmd_gen, GenArgs};
pub use commands::gradcheck::{cmd_gradcheck, GradcheckArgs};
pub use commands::train::{cmd_train, TrainArgs};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fan", version, about = "Supervised attention experiments on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test dataset.
    Gen(GenArgs),
    /// Train a model and write its report and checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset file.
    Eval(EvalArgs),
    /// Train every cell of a configuration grid.
    Ablate(AblateArgs),
    /// Dump one instance's attention matrices.
    ExportAttention(ExportArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

/// Runs a parsed command, returning the text to print on success.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::ExportAttention(a) => cmd_export_attention(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Usage errors map to exit code 2.
pub fn run_from<I, T>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::user(e.to_string()))?;
    run(cli)
}
