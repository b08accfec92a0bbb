//! Parameter resolution: command-line flags over a config file over defaults.
//!
//! A config file is TOML (or JSON when the extension is `.json`). Top-level
//! `seed` and `trials` apply to every subcommand; a table named after the
//! subcommand overrides individual parameters:
//!
//! ```toml
//! seed = 7
//!
//! [sgdr]
//! steps = 200
//! constant = 3.0
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

/// Keys a top-level config entry may set on any subcommand.
const GLOBAL_KEYS: [&str; 2] = ["seed", "trials"];

pub fn load_file(path: &Path) -> Result<Value, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("bad JSON in {}: {e}", path.display())))?
    } else {
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| Failure::Config(format!("bad TOML in {}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| Failure::Config(e.to_string()))?
    };
    if !value.is_object() {
        return Err(Failure::Config("config file must hold a table".into()));
    }
    Ok(value)
}

fn overlay(base: &mut Map<String, Value>, layer: &Map<String, Value>) {
    for (k, v) in layer {
        base.insert(k.clone(), v.clone());
    }
}

fn as_map(v: Value, what: &str) -> Result<Map<String, Value>, Failure> {
    match v {
        Value::Object(m) => Ok(m),
        Value::Null => Ok(Map::new()),
        _ => Err(Failure::Config(format!("{what} must be a table"))),
    }
}

/// Merges `defaults`, the file's globals and `[section]`, and `flags`, in
/// increasing precedence. Unknown keys are rejected by the target type.
pub fn resolve<P: Serialize + DeserializeOwned>(
    defaults: &P,
    file: Option<&Value>,
    section: &str,
    flags: Map<String, Value>,
) -> Result<P, Failure> {
    let mut merged = as_map(serde_json::to_value(defaults).map_err(|e| Failure::Config(e.to_string()))?, "defaults")?;
    if let Some(Value::Object(file)) = file {
        for key in GLOBAL_KEYS {
            if let Some(v) = file.get(key) {
                if merged.contains_key(key) {
                    merged.insert(key.into(), v.clone());
                }
            }
        }
        if let Some(table) = file.get(section) {
            overlay(&mut merged, &as_map(table.clone(), &format!("[{section}]"))?);
        }
    }
    overlay(&mut merged, &flags);
    serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::Config(format!("{section}: {e}")))
}

/// The provided (non-null) fields of a flag struct.
pub fn flags_of<A: Serialize>(args: &A) -> Map<String, Value> {
    match serde_json::to_value(args) {
        Ok(Value::Object(m)) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// The seed from the flags or the file.
pub fn seed(flag: Option<u64>, file: Option<&Value>) -> Result<Option<u64>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.and_then(|f| f.get("seed")) {
        None => Ok(None),
        Some(v) => {
            v.as_u64().map(Some).ok_or_else(|| Failure::Config(format!("seed must be a non-negative integer, got {v}")))
        }
    }
}
