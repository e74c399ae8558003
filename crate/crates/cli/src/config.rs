//! Config files, flag merging and the error type that picks the exit code.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const OUT_DIR_ENV: &str = "POISRELAX_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration; exit status 2.
    Config { key: String, message: String },
    /// A computation failed; exit status 3.
    Numerical { condition: String, message: String },
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Config { key: key.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, message } => write!(f, "invalid configuration: `{key}`: {message}"),
            CliError::Numerical { condition, message } => write!(f, "computation failed at {condition}: {message}"),
        }
    }
}

/// Wraps a library error with the coordinates of the condition that raised it.
pub fn at(condition: impl Into<String>) -> impl FnOnce(poisson_relax::Error) -> CliError {
    let condition = condition.into();
    move |e| CliError::Numerical { condition, message: e.to_string() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Where a command writes its table.
#[derive(Clone, Debug, Serialize)]
pub struct Output {
    pub output: PathBuf,
    pub format: Format,
}

/// Explicit format wins, then the file extension, then CSV. Without a path
/// the file is `<command>.<ext>` in `$POISRELAX_OUT_DIR` or the working
/// directory.
pub fn resolve_output(command: &str, output: Option<PathBuf>, format: Option<Format>) -> Output {
    let from_ext = |p: &Path| match p.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Some(Format::Json),
        _ => None,
    };
    let format = format.or_else(|| output.as_deref().and_then(from_ext)).unwrap_or(Format::Csv);
    let output = output.unwrap_or_else(|| {
        let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_default();
        dir.join(format!("{command}.{}", format.extension()))
    });
    Output { output, format }
}

/// Parses an enum flag by its serialized name, so flags and config files
/// accept the same spellings.
pub fn parse_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.trim().to_string())).map_err(|e| e.to_string())
}

/// Reads a JSON config object. A run manifest is accepted too: its resolved
/// `config` object is used. A `command` key, if present, must match.
pub fn read_config(path: &Path, expected: Option<&str>) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("cannot read '{}': {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config("config", format!("'{}' is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::config("config", "the file must hold a JSON object"));
    };
    if let Some(Value::Object(inner)) = map.get("config") {
        map = inner.clone();
    }
    match (map.remove("command"), expected) {
        (Some(Value::String(c)), Some(want)) if c != want => {
            Err(CliError::config("command", format!("file is for '{c}', not '{want}'")))
        }
        (Some(Value::String(c)), _) => {
            map.insert("command".into(), Value::String(c));
            Ok(map)
        }
        (Some(_), _) => Err(CliError::config("command", "must be a string")),
        (None, _) => Ok(map),
    }
}

/// Overlays the flags that were given onto the file's settings and
/// deserializes the result, naming the offending key on failure.
pub fn merge<A: Serialize + DeserializeOwned>(flags: &A, file: Option<Map<String, Value>>) -> Result<A, CliError> {
    let mut map = file.unwrap_or_default();
    map.remove("command");
    if let Value::Object(given) = serde_json::to_value(flags).expect("flag structs serialize") {
        for (k, v) in given {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let key = if path == "." || path.is_empty() {
            inner.split('`').nth(1).unwrap_or("config").to_string()
        } else {
            path
        };
        CliError::config(key, inner)
    })
}

pub fn non_empty<T>(key: &str, v: Vec<T>) -> Result<Vec<T>, CliError> {
    if v.is_empty() {
        Err(CliError::config(key, "must not be empty"))
    } else {
        Ok(v)
    }
}

pub fn positive(key: &str, xs: &[f64]) -> Result<(), CliError> {
    match xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        Some(x) => Err(CliError::config(key, format!("{x} is not a positive number"))),
        None => Ok(()),
    }
}

pub fn non_negative(key: &str, xs: &[f64]) -> Result<(), CliError> {
    match xs.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        Some(x) => Err(CliError::config(key, format!("{x} is not a non-negative number"))),
        None => Ok(()),
    }
}

pub fn at_least(key: &str, value: usize, min: usize) -> Result<usize, CliError> {
    if value < min {
        Err(CliError::config(key, format!("must be at least {min}, got {value}")))
    } else {
        Ok(value)
    }
}

pub fn probability(key: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(CliError::config(key, format!("must lie in (0, 1), got {value}")))
    }
}
