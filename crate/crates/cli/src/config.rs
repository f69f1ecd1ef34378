//! Scenario config loading, overrides and dotted-path edits.

use std::path::Path;

use coop_fusion::sim::ScenarioConfig;
use toml::{Table, Value};

use crate::CliError;

/// Reads a TOML config into a raw table so it can be edited before parsing.
pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Sets `path` (e.g. `vio_drift.x`) to `value`, creating intermediate tables.
///
/// An existing integer stays an integer when `value` is integral.
pub fn set_path(table: &mut Table, path: &str, value: f64) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("invalid parameter path `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("non-empty split");
    let mut current = table;
    for key in parents {
        let entry = current.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}` in `{path}` is not a table")))?;
    }
    let new = match current.get(*last) {
        Some(Value::Integer(_)) if value.fract() == 0.0 => Value::Integer(value as i64),
        Some(Value::Table(_)) | Some(Value::Array(_)) => {
            return Err(CliError::Config(format!("`{path}` is not a scalar")));
        }
        _ => Value::Float(value),
    };
    current.insert(last.to_string(), new);
    Ok(())
}

/// Parses and validates a config table, applying an optional seed override.
pub fn to_config(mut table: Table, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    if let Some(seed) = seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Config(format!("seed {seed} out of range")))?;
        table.insert("seed".into(), Value::Integer(seed));
    }
    let config: ScenarioConfig =
        Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

/// Complete config with every default filled in.
pub fn effective_toml(config: &ScenarioConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Io(format!("cannot serialize config: {e}")))
}
