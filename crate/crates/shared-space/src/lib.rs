//! File formats, deviation metrics and the command-line front end for the
//! shared-space simulator in `shared-space-core`.

pub mod demo;
pub mod metrics;
pub mod scenario_file;
pub mod trajectory;

pub use metrics::{deviation, speed_deviation, trajectory_deviation, DeviationReport};
pub use scenario_file::{load_scenario, parse_scenario, scenario_to_toml, write_scenario, Loaded};
pub use trajectory::{read_trajectories, write_trajectories, Trajectories};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SHARED_SPACE_OUT_DIR";
