//! Loading a [`RunConfig`] from TOML plus `key=value` overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use lagctrl_core::RunConfig;
use serde::Deserialize;
use toml::{Table, Value};

/// Parses the right-hand side of an override as a TOML value, falling back to
/// a bare string so `output.directory=runs/a` works without quotes.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn apply_override(table: &mut Table, assignment: &str) -> anyhow::Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not of the form key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override key {path:?} has an empty component");
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cursor = table;
    for (depth, key) in parents.iter().enumerate() {
        let entry = cursor
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {path:?}: {} is not a section", keys[..=depth].join(".")))?;
    }
    cursor.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the file (if any), applies overrides in order and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str::<Table>(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config = RunConfig::deserialize(Value::Table(table)).context("invalid configuration")?;
    config.validate()?;
    Ok(config)
}
