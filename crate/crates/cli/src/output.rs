//! Tidy tables written as CSV or JSON, plus the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::{CliError, Format, Output};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Real(f64),
    Count(u64),
    Flag(bool),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Real)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Count(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Count(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// One row per condition, columns fixed up front.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
fn csv_field(c: &Cell) -> String {
    match c {
        Cell::Text(s) => s.clone(),
        Cell::Real(v) => format!("{v:.16e}"),
        Cell::Count(n) => n.to_string(),
        Cell::Flag(b) => b.to_string(),
        Cell::Missing => String::new(),
    }
}

fn json_value(c: &Cell) -> Value {
    match c {
        Cell::Text(s) => Value::String(s.clone()),
        Cell::Real(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
        Cell::Count(n) => Value::from(*n),
        Cell::Flag(b) => Value::Bool(*b),
        Cell::Missing => Value::Null,
    }
}

fn write_csv(table: &Table, path: &Path) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    w.write_record(&table.columns).map_err(|e| e.to_string())?;
    for row in &table.rows {
        w.write_record(row.iter().map(csv_field)).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

/// Array of flat objects with keys in column order.
fn render_json(table: &Table) -> String {
    let mut out = String::from("[\n");
    for (i, row) in table.rows.iter().enumerate() {
        let fields: Vec<String> = table
            .columns
            .iter()
            .zip(row)
            .map(|(k, c)| format!("{}: {}", Value::String(k.to_string()), json_value(c)))
            .collect();
        out.push_str("  {");
        out.push_str(&fields.join(", "));
        out.push('}');
        if i + 1 < table.rows.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]\n");
    out
}

pub fn write_table(table: &Table, out: &Output) -> Result<(), CliError> {
    if let Some(dir) = out.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::config("output", format!("{}: {e}", dir.display())))?;
    }
    let res = match out.format {
        Format::Csv => write_csv(table, &out.output),
        Format::Json => std::fs::write(&out.output, render_json(table)).map_err(|e| e.to_string()),
    };
    res.map_err(|e| CliError::config("output", format!("cannot write '{}': {e}", out.output.display())))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Sidecar with everything needed to repeat the run: feeding it back through
/// `run --config` reproduces the data file.
pub fn write_manifest<C: Serialize>(
    command: &str,
    resolved: &C,
    seed: u64,
    out: &Output,
    rows: usize,
    started_unix: f64,
    wall_clock: f64,
) -> Result<(), CliError> {
    let mut config = serde_json::to_value(resolved).expect("resolved configs serialize");
    if let Value::Object(map) = &mut config {
        map.insert("command".into(), Value::String(command.into()));
    }
    let manifest = serde_json::json!({
        "command": command,
        "config": config,
        "seed": seed,
        "version": poisson_relax::VERSION,
        "output": out.output,
        "rows": rows,
        "started_unix_seconds": started_unix,
        "wall_clock_seconds": wall_clock,
    });
    let path = manifest_path(&out.output);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::File::create(&path)
        .and_then(|mut f| writeln!(f, "{text}"))
        .map_err(|e| CliError::config("output", format!("cannot write '{}': {e}", path.display())))
}
