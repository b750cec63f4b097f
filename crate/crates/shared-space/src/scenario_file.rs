//! Versioned TOML scenario files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shared_space_core::scenario::{AgentSpec, GroupSpec, ReferenceSpec, Scenario, SimParams, World};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{origin}: unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Version { origin: String, found: i64 },
    #[error("{origin}: {location}: {message}")]
    Invalid {
        origin: String,
        location: String,
        message: String,
    },
}

/// On-disk layout: the scenario plus its schema version.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(default)]
    name: String,
    #[serde(default)]
    params: SimParams,
    #[serde(default)]
    world: World,
    #[serde(default)]
    agents: Vec<AgentSpec>,
    #[serde(default)]
    groups: Vec<GroupSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<ReferenceSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub scenario: Scenario,
    /// Defaults that were injected for missing sections.
    pub warnings: Vec<String>,
}

pub fn load_scenario(path: &Path) -> Result<Loaded, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses and validates scenario text. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Loaded, LoadError> {
    let syntax = |e: toml::de::Error| LoadError::Syntax {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    };
    let raw: toml::Table = toml::from_str(text).map_err(syntax)?;
    match raw.get("schema_version") {
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
        Some(toml::Value::Integer(v)) => {
            return Err(LoadError::Version {
                origin: origin.to_string(),
                found: *v,
            })
        }
        Some(_) => {
            return Err(LoadError::Invalid {
                origin: origin.to_string(),
                location: "schema_version".into(),
                message: "must be an integer".into(),
            })
        }
        None => {
            return Err(LoadError::Invalid {
                origin: origin.to_string(),
                location: "schema_version".into(),
                message: "missing".into(),
            })
        }
    }
    let warnings = missing_base_tables(&raw);
    for w in &warnings {
        log::warn!("{origin}: {w}");
    }
    let file: ScenarioFile = toml::from_str(text).map_err(syntax)?;
    let scenario = Scenario {
        name: file.name,
        world: file.world,
        agents: file.agents,
        groups: file.groups,
        params: file.params,
        reference: file.reference,
    };
    scenario.validate().map_err(|e| LoadError::Invalid {
        origin: origin.to_string(),
        location: e.location,
        message: e.message,
    })?;
    Ok(Loaded { scenario, warnings })
}

fn missing_base_tables(raw: &toml::Table) -> Vec<String> {
    let payoff = raw
        .get("params")
        .and_then(|p| p.get("payoff"))
        .and_then(|p| p.as_table());
    ["vehicle_pedestrian", "vehicle_vehicle"]
        .iter()
        .filter(|key| payoff.is_none_or(|t| !t.contains_key(**key)))
        .map(|key| format!("params.payoff.{key} missing; default base payoff table applied"))
        .collect()
}

pub fn scenario_to_toml(scenario: &Scenario) -> Result<String, toml::ser::Error> {
    let file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        name: scenario.name.clone(),
        params: scenario.params.clone(),
        world: scenario.world.clone(),
        agents: scenario.agents.clone(),
        groups: scenario.groups.clone(),
        reference: scenario.reference.clone(),
    };
    toml::to_string_pretty(&file)
}

pub fn write_scenario(scenario: &Scenario, path: &Path) -> anyhow::Result<()> {
    fs::write(path, scenario_to_toml(scenario)?)?;
    Ok(())
}
