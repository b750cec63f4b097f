//! Microscopic simulation of shared-space traffic.
//!
//! Pedestrians, social pedestrian groups and vehicles move under a layered
//! model: a visibility-graph planner produces free-flow paths, a social-force
//! layer handles simple interactions (repulsion, car following, reactive
//! stopping, group cohesion) and a Stackelberg game resolves implicit
//! vehicle conflicts.
//!
//! The crate is `no_std` with `alloc`; file formats and the command line
//! live in the `shared-space` companion crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

mod math;

pub mod agent;
pub mod engine;
pub mod force;
pub mod game;
pub mod geometry;
pub mod group;
pub mod planner;
pub mod scenario;

pub use agent::{ActiveStrategy, AgentId, AgentKind, RoadUser};
pub use engine::{
    GameEvent, Interaction, InteractionClass, InteractionPhase, SimError, Simulation,
    TrajectoryLog, WorldState,
};
pub use game::{FactorVector, PayoffMatrix, PayoffParams, Strategy};
pub use geometry::{FieldOfView, Segment, Vec2};
pub use group::{FsmState, GroupId, GroupParams, LeaderMethod, PedestrianGroup, Zone};
pub use planner::{ObstaclePolygon, VisibilityGraph, WaypointPath};
pub use scenario::{AgentSpec, GroupSpec, Scenario, SimParams, World, ZoneKind, ZonePolygon};
