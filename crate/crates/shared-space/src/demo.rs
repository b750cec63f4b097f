//! Bundled reconstructions of the three street-crossing setups.

use shared_space_core::Scenario;

use crate::scenario_file::{parse_scenario, LoadError};

pub const NAMES: [&str; 3] = ["scenario1", "scenario2", "scenario3"];

pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "scenario1" => Some(include_str!("../scenarios/scenario1.toml")),
        "scenario2" => Some(include_str!("../scenarios/scenario2.toml")),
        "scenario3" => Some(include_str!("../scenarios/scenario3.toml")),
        _ => None,
    }
}

pub fn load(name: &str) -> Option<Result<Scenario, LoadError>> {
    source(name).map(|text| parse_scenario(text, &format!("{name}.toml")).map(|l| l.scenario))
}
