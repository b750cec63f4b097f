//! Road users and their per-tick decision state.

use alloc::vec::Vec;
use core::fmt;

use crate::game::Strategy;
use crate::geometry::Vec2;
use crate::group::GroupId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AgentKind {
    Pedestrian,
    Vehicle,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Vehicle => "vehicle",
        }
    }
}

/// Game decision currently being executed by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveStrategy {
    pub strategy: Strategy,
    /// Interaction that produced the decision.
    pub interaction: u32,
    /// The other side of the game: for pedestrians the vehicle, for vehicles
    /// the agents they negotiate with.
    pub counterparts: Vec<AgentId>,
    /// Current strategy target point p_α (continue / deviate).
    pub target: Option<Vec2>,
    /// Deviate only: the vehicle has entered the field of view at least once.
    pub vehicle_seen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadUser {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Vec2,
    pub velocity: Vec2,
    pub desired_speed: f64,
    /// Unit facing direction.
    pub heading: Vec2,
    pub waypoints: Vec<Vec2>,
    pub waypoint_index: usize,
    /// Relaxation time τ in seconds.
    pub relaxation_time: f64,
    /// Body radius for pedestrians, bounding radius for vehicles.
    pub radius: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub active_strategy: Option<ActiveStrategy>,
    pub group: Option<GroupId>,
    /// Coordination state: walk to this point instead of the waypoint path.
    pub temporary_goal: Option<Vec2>,
    /// Waiting state: desired velocity is zero.
    pub holding: bool,
    pub arrived: bool,
}

impl RoadUser {
    pub fn pedestrian(id: AgentId, position: Vec2, waypoints: Vec<Vec2>, desired_speed: f64) -> Self {
        Self::new(id, AgentKind::Pedestrian, position, waypoints, desired_speed)
    }

    pub fn vehicle(id: AgentId, position: Vec2, waypoints: Vec<Vec2>, desired_speed: f64) -> Self {
        Self::new(id, AgentKind::Vehicle, position, waypoints, desired_speed)
    }

    fn new(
        id: AgentId,
        kind: AgentKind,
        position: Vec2,
        waypoints: Vec<Vec2>,
        desired_speed: f64,
    ) -> Self {
        let heading = waypoints
            .iter()
            .find_map(|w| (*w - position).normalize())
            .unwrap_or(Vec2::new(1.0, 0.0));
        let (radius, half_length, half_width, tau) = match kind {
            AgentKind::Pedestrian => (0.3, 0.3, 0.3, 0.5),
            AgentKind::Vehicle => (1.5, 2.25, 0.9, 2.0),
        };
        Self {
            id,
            kind,
            position,
            velocity: Vec2::ZERO,
            desired_speed,
            heading,
            waypoints,
            waypoint_index: 0,
            relaxation_time: tau,
            radius,
            half_length,
            half_width,
            active_strategy: None,
            group: None,
            temporary_goal: None,
            holding: false,
            arrived: false,
        }
    }

    pub fn is_vehicle(&self) -> bool {
        self.kind == AgentKind::Vehicle
    }

    pub fn is_pedestrian(&self) -> bool {
        self.kind == AgentKind::Pedestrian
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Final destination E.
    pub fn goal(&self) -> Vec2 {
        self.waypoints.last().copied().unwrap_or(self.position)
    }

    /// Index of the first waypoint not yet within `arrival_radius`; the
    /// final waypoint is never skipped.
    pub fn effective_waypoint_index(&self, arrival_radius: f64) -> usize {
        let last = self.waypoints.len().saturating_sub(1);
        let mut idx = self.waypoint_index.min(last);
        while idx < last && self.waypoints[idx].distance(self.position) <= arrival_radius {
            idx += 1;
        }
        idx
    }

    pub fn current_waypoint(&self, arrival_radius: f64) -> Option<Vec2> {
        self.waypoints
            .get(self.effective_waypoint_index(arrival_radius))
            .copied()
    }

    /// Point the agent currently steers to in free flow.
    pub fn steering_target(&self, arrival_radius: f64) -> Option<Vec2> {
        self.temporary_goal
            .or_else(|| self.current_waypoint(arrival_radius))
    }

    /// Velocity the agent would like to have right now.
    pub fn desired_velocity(&self, arrival_radius: f64) -> Vec2 {
        if self.holding {
            return Vec2::ZERO;
        }
        match self.steering_target(arrival_radius) {
            Some(t) => (t - self.position).normalize_or_zero() * self.desired_speed,
            None => Vec2::ZERO,
        }
    }

    /// Desired velocity along the planned path, ignoring waiting and
    /// temporary goals.
    pub fn planned_velocity(&self, arrival_radius: f64) -> Vec2 {
        match self.current_waypoint(arrival_radius) {
            Some(t) => (t - self.position).normalize_or_zero() * self.desired_speed,
            None => Vec2::ZERO,
        }
    }

    pub fn strategy(&self) -> Option<Strategy> {
        self.active_strategy.as_ref().map(|s| s.strategy)
    }
}
