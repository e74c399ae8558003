pub mod fidelity;
pub mod gradsweep;
pub mod moments;
pub mod regression;
pub mod train;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{merge, read_config, CliError, Output};
use crate::output::{write_manifest, write_table, Table};

/// A sweep command: flags (all optional) resolve into a complete config,
/// which is what the manifest records.
pub trait Command: Serialize + Sized {
    const NAME: &'static str;
    type Args: Serialize + DeserializeOwned;

    fn resolve(args: Self::Args) -> Result<Self, CliError>;
    fn output(&self) -> &Output;
    fn seed(&self) -> u64;
    fn execute(&self) -> Result<Table, CliError>;
}

/// Resolve, run, and write the table and its manifest.
pub fn invoke<C: Command>(flags: &C::Args, file: Option<Map<String, Value>>) -> Result<(), CliError> {
    let args: C::Args = merge(flags, file)?;
    let resolved = C::resolve(args)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let table = resolved.execute()?;
    let out = resolved.output();
    write_table(&table, out)?;
    write_manifest(C::NAME, &resolved, resolved.seed(), out, table.rows.len(), started, clock.elapsed().as_secs_f64())?;
    eprintln!("{}: wrote {} rows to {}", C::NAME, table.rows.len(), out.output.display());
    Ok(())
}

/// Entry for a subcommand invoked with its own flags and an optional file.
pub fn invoke_with_file<C: Command>(flags: &C::Args, config: Option<&Path>) -> Result<(), CliError> {
    let file = config.map(|p| read_config(p, Some(C::NAME))).transpose()?;
    invoke::<C>(flags, file)
}

/// `run --config FILE`: the file names the command.
pub fn run_file(path: &Path) -> Result<(), CliError> {
    let file = read_config(path, None)?;
    let command = match file.get("command") {
        Some(Value::String(c)) => c.clone(),
        _ => return Err(CliError::config("command", "the config file must name a command")),
    };
    match command.as_str() {
        moments::Moments::NAME => invoke::<moments::Moments>(&Default::default(), Some(file)),
        fidelity::Fidelity::NAME => invoke::<fidelity::Fidelity>(&Default::default(), Some(file)),
        gradsweep::GradSweep::NAME => invoke::<gradsweep::GradSweep>(&Default::default(), Some(file)),
        train::TrainPvae::NAME => invoke::<train::TrainPvae>(&Default::default(), Some(file)),
        regression::BenchRegression::NAME => invoke::<regression::BenchRegression>(&Default::default(), Some(file)),
        other => Err(CliError::config("command", format!("unknown command '{other}'"))),
    }
}

/// Condition coordinates as `key=value` pairs for error messages.
pub(crate) fn label(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}
