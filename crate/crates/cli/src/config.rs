//! Flags > JSON config > built-in defaults.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{usage, CliResult};

/// Reads a config object. A run manifest is accepted too: its `params`
/// object is used, so a manifest replays the run that produced it.
pub fn load_config(path: &Path, subcommand: &str) -> CliResult<Map<String, Value>> {
    let text = fs::read_to_string(path)
        .map_err(|e| crate::error::CliError::from(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(usage(format!("config {} is not a JSON object", path.display())));
    };
    if let (Some(Value::Object(params)), Some(sub)) = (obj.get("params"), obj.get("subcommand")) {
        if sub.as_str() != Some(subcommand) {
            return Err(usage(format!(
                "manifest {} is for `{}`, not `{subcommand}`",
                path.display(),
                sub.as_str().unwrap_or("?")
            )));
        }
        return Ok(params.clone());
    }
    obj.remove("$schema");
    Ok(obj)
}

pub fn layer<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>, subcommand: &str) -> CliResult<T> {
    let mut merged = match config {
        Some(p) => load_config(p, subcommand)?,
        None => Map::new(),
    };
    if let Value::Object(over) = serde_json::to_value(flags).expect("flags serialize") {
        merged.extend(over);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))
}
