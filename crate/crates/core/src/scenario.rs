//! Declarative scenario description and its validation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::agent::AgentKind;
use crate::force::ForceParams;
use crate::game::PayoffParams;
use crate::geometry::{on_polygon_boundary, point_in_polygon, FieldOfView, Vec2};
use crate::group::GroupParams;
use crate::planner::ObstaclePolygon;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ZoneKind {
    Pedestrian,
    Mixed,
    Road,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ZonePolygon {
    pub kind: ZoneKind,
    pub vertices: Vec<Vec2>,
}

impl ZonePolygon {
    pub fn covers(&self, p: Vec2) -> bool {
        point_in_polygon(&self.vertices, p) || on_polygon_boundary(&self.vertices, p)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct World {
    pub obstacles: Vec<Vec<Vec2>>,
    /// Areas outside every zone count as mixed.
    pub zones: Vec<ZonePolygon>,
    pub roundabouts: Vec<Vec<Vec2>>,
}

impl World {
    /// Kind of the first zone covering `p`.
    pub fn zone_at(&self, p: Vec2) -> ZoneKind {
        self.zones
            .iter()
            .find(|z| z.covers(p))
            .map(|z| z.kind)
            .unwrap_or(ZoneKind::Mixed)
    }

    pub fn in_roundabout(&self, p: Vec2) -> bool {
        self.roundabouts
            .iter()
            .any(|r| point_in_polygon(r, p) || on_polygon_boundary(r, p))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AgentSpec {
    pub name: String,
    pub kind: AgentKind,
    pub origin: Vec2,
    pub destination: Vec2,
    pub desired_speed: f64,
    /// Speed along the initial heading at t = 0.
    #[cfg_attr(feature = "serde", serde(default))]
    pub initial_speed: f64,
    /// Intermediate points; when empty the path is planned.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub waypoints: Vec<Vec2>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub relaxation_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GroupSpec {
    pub name: String,
    pub members: Vec<String>,
    /// Chosen by the leader method when absent.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub leader: Option<String>,
    /// Overrides `SimParams::group` for this group.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub params: Option<GroupParams>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimParams {
    /// Δt in seconds.
    pub dt: f64,
    pub seed: u64,
    pub max_time: f64,
    /// Conflict look-ahead in seconds.
    pub conflict_horizon: f64,
    /// Added to the sum of radii to form the conflict radius.
    pub conflict_margin: f64,
    pub pedestrian_arrival_radius: f64,
    pub vehicle_arrival_radius: f64,
    /// Distance kept from obstacle corners by planned paths.
    pub path_clearance: f64,
    pub pedestrian_fov_deg: f64,
    pub pedestrian_fov_range: f64,
    pub vehicle_fov_deg: f64,
    pub vehicle_fov_range: f64,
    pub force: ForceParams,
    pub payoff: PayoffParams,
    pub group: GroupParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            seed: 0,
            max_time: 120.0,
            conflict_horizon: 4.0,
            conflict_margin: 0.5,
            pedestrian_arrival_radius: 0.5,
            vehicle_arrival_radius: 1.5,
            path_clearance: 0.5,
            pedestrian_fov_deg: 85.0,
            pedestrian_fov_range: 10.0,
            vehicle_fov_deg: 60.0,
            vehicle_fov_range: 20.0,
            force: ForceParams::default(),
            payoff: PayoffParams::default(),
            group: GroupParams::default(),
        }
    }
}

impl SimParams {
    pub fn pedestrian_fov(&self) -> Result<FieldOfView, ScenarioError> {
        FieldOfView::from_degrees(self.pedestrian_fov_deg, self.pedestrian_fov_range)
            .map_err(|e| ScenarioError::new("params.pedestrian_fov_deg", e.to_string()))
    }

    pub fn vehicle_fov(&self) -> Result<FieldOfView, ScenarioError> {
        FieldOfView::from_degrees(self.vehicle_fov_deg, self.vehicle_fov_range)
            .map_err(|e| ScenarioError::new("params.vehicle_fov_deg", e.to_string()))
    }

    pub fn arrival_radius(&self, kind: AgentKind) -> f64 {
        match kind {
            AgentKind::Pedestrian => self.pedestrian_arrival_radius,
            AgentKind::Vehicle => self.vehicle_arrival_radius,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = [
            (self.dt, "params.dt"),
            (self.max_time, "params.max_time"),
            (self.conflict_horizon, "params.conflict_horizon"),
            (self.conflict_margin, "params.conflict_margin"),
            (self.pedestrian_arrival_radius, "params.pedestrian_arrival_radius"),
            (self.vehicle_arrival_radius, "params.vehicle_arrival_radius"),
        ];
        for (v, at) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::new(at, "must be positive and finite"));
            }
        }
        if !(self.path_clearance >= 0.0) {
            return Err(ScenarioError::new("params.path_clearance", "must be non-negative"));
        }
        self.pedestrian_fov()?;
        self.vehicle_fov()?;
        self.force
            .validate()
            .map_err(|f| ScenarioError::new(format!("params.force.{f}"), "must be positive and finite"))?;
        self.payoff
            .validate()
            .map_err(|e| ScenarioError::new("params.payoff", e.to_string()))?;
        self.group
            .validate()
            .map_err(|e| ScenarioError::new("params.group", e.to_string()))?;
        Ok(())
    }
}

/// Pairs simulated agents with ids in a recorded trajectory file.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ReferenceSpec {
    pub path: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub mapping: Vec<ReferenceMapping>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ReferenceMapping {
    pub agent: String,
    pub reference_id: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Scenario {
    #[cfg_attr(feature = "serde", serde(default))]
    pub name: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub world: World,
    #[cfg_attr(feature = "serde", serde(default))]
    pub agents: Vec<AgentSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub groups: Vec<GroupSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub params: SimParams,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub reference: Option<ReferenceSpec>,
}

/// Validation failure with the offending location, e.g. `groups[0].members[2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub location: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ScenarioError {}

impl Scenario {
    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    pub fn obstacle_polygons(&self) -> Result<Vec<ObstaclePolygon>, ScenarioError> {
        self.world
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                ObstaclePolygon::with_index(v.clone(), i)
                    .map_err(|e| ScenarioError::new(format!("world.obstacles[{i}]"), e.to_string()))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params.validate()?;
        let obstacles = self.obstacle_polygons()?;
        for (i, z) in self.world.zones.iter().enumerate() {
            if z.vertices.len() < 3 || z.vertices.iter().any(|v| !v.is_finite()) {
                return Err(ScenarioError::new(
                    format!("world.zones[{i}].vertices"),
                    "a zone needs at least three finite vertices",
                ));
            }
        }
        for (i, r) in self.world.roundabouts.iter().enumerate() {
            if r.len() < 3 || r.iter().any(|v| !v.is_finite()) {
                return Err(ScenarioError::new(
                    format!("world.roundabouts[{i}]"),
                    "a roundabout needs at least three finite vertices",
                ));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            let at = |field: &str| format!("agents[{i}].{field}");
            if a.name.is_empty() {
                return Err(ScenarioError::new(at("name"), "name must not be empty"));
            }
            if self.agents[..i].iter().any(|b| b.name == a.name) {
                return Err(ScenarioError::new(at("name"), format!("duplicate agent name \"{}\"", a.name)));
            }
            if !(a.desired_speed > 0.0 && a.desired_speed.is_finite()) {
                return Err(ScenarioError::new(at("desired_speed"), "must be positive and finite"));
            }
            if !(a.initial_speed >= 0.0 && a.initial_speed.is_finite()) {
                return Err(ScenarioError::new(at("initial_speed"), "must be non-negative and finite"));
            }
            if let Some(t) = a.relaxation_time {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(ScenarioError::new(at("relaxation_time"), "must be positive and finite"));
                }
            }
            for (field, p) in [("origin", a.origin), ("destination", a.destination)] {
                if !p.is_finite() {
                    return Err(ScenarioError::new(at(field), "must be finite"));
                }
                if let Some(k) = obstacles.iter().position(|o| o.contains(p)) {
                    return Err(ScenarioError::new(at(field), format!("lies inside obstacle {k}")));
                }
            }
            for (k, w) in a.waypoints.iter().enumerate() {
                if !w.is_finite() || obstacles.iter().any(|o| o.contains(*w)) {
                    return Err(ScenarioError::new(
                        at(&format!("waypoints[{k}]")),
                        "must be finite and outside obstacles",
                    ));
                }
            }
        }
        let mut grouped: Vec<&str> = Vec::new();
        for (g, spec) in self.groups.iter().enumerate() {
            let at = |field: &str| format!("groups[{g}].{field}");
            if spec.name.is_empty() || self.groups[..g].iter().any(|o| o.name == spec.name) {
                return Err(ScenarioError::new(at("name"), "group names must be non-empty and unique"));
            }
            if spec.members.len() < 2 {
                return Err(ScenarioError::new(at("members"), "a group needs at least two members"));
            }
            let mut destination: Option<Vec2> = None;
            for (m, name) in spec.members.iter().enumerate() {
                let here = at(&format!("members[{m}]"));
                let Some(idx) = self.agent_index(name) else {
                    return Err(ScenarioError::new(here, format!("unknown agent \"{name}\"")));
                };
                let agent = &self.agents[idx];
                if agent.kind != AgentKind::Pedestrian {
                    return Err(ScenarioError::new(here, "group member must be pedestrian"));
                }
                if grouped.contains(&name.as_str()) {
                    return Err(ScenarioError::new(here, format!("agent \"{name}\" is already in a group")));
                }
                grouped.push(name);
                match destination {
                    None => destination = Some(agent.destination),
                    Some(d) if d != agent.destination => {
                        return Err(ScenarioError::new(here, "group members must share one destination"));
                    }
                    _ => {}
                }
            }
            if let Some(l) = &spec.leader {
                if !spec.members.contains(l) {
                    return Err(ScenarioError::new(at("leader"), format!("leader \"{l}\" is not a member")));
                }
            }
            if let Some(p) = &spec.params {
                p.validate().map_err(|e| ScenarioError::new(at("params"), e.to_string()))?;
            }
        }
        if let Some(r) = &self.reference {
            for (i, m) in r.mapping.iter().enumerate() {
                if self.agent_index(&m.agent).is_none() {
                    return Err(ScenarioError::new(
                        format!("reference.mapping[{i}].agent"),
                        format!("unknown agent \"{}\"", m.agent),
                    ));
                }
            }
        }
        Ok(())
    }
}
