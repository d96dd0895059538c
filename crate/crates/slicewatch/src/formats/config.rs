//! Scenario configuration files in TOML. Missing traffic knobs and slice
//! profiles fall back to their defaults.

use std::path::Path;

use slicewatch_core::traffic::ScenarioConfig;

use crate::error::{Error, Result};

pub fn scenario_to_toml(c: &ScenarioConfig) -> Result<String> {
    let fmt = |e: &dyn std::fmt::Display| Error::Format(e.to_string());
    let mut table = toml::Table::try_from(ScenarioConfig {
        seed: 0,
        ..c.clone()
    })
    .map_err(|e| fmt(&e))?;
    // seeds above i64::MAX go out as decimal strings
    let seed = match i64::try_from(c.seed) {
        Ok(v) => toml::Value::Integer(v),
        Err(_) => toml::Value::String(c.seed.to_string()),
    };
    table.insert("seed".into(), seed);
    toml::to_string_pretty(&table).map_err(|e| fmt(&e))
}

pub fn scenario_from_toml(text: &str) -> std::result::Result<ScenarioConfig, String> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let seed = match table.remove("seed") {
        Some(toml::Value::Integer(v)) => {
            u64::try_from(v).map_err(|_| "seed must not be negative".to_string())?
        }
        Some(toml::Value::String(s)) => s
            .parse()
            .map_err(|_| format!("seed `{s}` is not an unsigned integer"))?,
        Some(_) => return Err("seed must be an integer".into()),
        None => return Err("missing field `seed`".into()),
    };
    table.insert("seed".into(), toml::Value::Integer(0));
    let c: ScenarioConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| e.to_string())?;
    Ok(ScenarioConfig { seed, ..c })
}

pub fn write_scenario(path: &Path, c: &ScenarioConfig) -> Result<()> {
    std::fs::write(path, scenario_to_toml(c)?).map_err(|e| Error::io(path, e))
}

pub fn read_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scenario_from_toml(&text).map_err(|msg| Error::Parse {
        path: path.into(),
        line: 0,
        msg,
    })
}
