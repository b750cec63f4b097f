//! Per-tick accelerations: social forces, vehicle car following and reactive
//! stopping, group cohesion and the kinematics of game strategies.

use crate::agent::RoadUser;
use crate::game::Strategy;
use crate::geometry::{in_field_of_view, segments_intersect, FieldOfView, Segment, Vec2};
use crate::group::{FsmState, GroupParams, Zone};
use crate::math;
use crate::planner::ObstaclePolygon;

use core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ForceParams {
    /// A_ped, m/s²
    pub pedestrian_strength: f64,
    /// B_ped, m
    pub pedestrian_range: f64,
    pub obstacle_strength: f64,
    pub obstacle_range: f64,
    /// λ: weight of sources outside the field of view.
    pub anisotropy: f64,
    /// Cap on any single repulsion term.
    pub max_force: f64,
    /// Sources farther than this are ignored.
    pub interaction_cutoff: f64,
    /// Spring constant for overlapping group members (m/s² per m).
    pub contact_strength: f64,
    /// S_c = continue_offset + continue_speed_gain · speed of the vehicle.
    pub continue_offset: f64,
    pub continue_speed_gain: f64,
    /// S_d
    pub deviate_offset: f64,
    /// D_min
    pub critical_distance: f64,
    /// Time headway added to D_min for car following (s).
    pub headway: f64,
    pub lane_width: f64,
    /// Extra width of the braking corridor beyond the vehicle width.
    pub corridor_margin: f64,
    /// Extra length of the braking corridor beyond the stopping distance.
    pub corridor_buffer: f64,
    /// Comfortable braking deceleration for stopping distances (m/s²).
    pub braking_deceleration: f64,
    /// Pedestrians are capped at this multiple of their desired speed.
    pub pedestrian_speed_factor: f64,
    /// Vehicle speed limit (m/s).
    pub speed_limit: f64,
    pub pedestrian_stop_speed: f64,
    pub vehicle_stop_speed: f64,
}

impl Default for ForceParams {
    fn default() -> Self {
        Self {
            pedestrian_strength: 2.0,
            pedestrian_range: 0.8,
            obstacle_strength: 5.0,
            obstacle_range: 0.3,
            anisotropy: 0.3,
            max_force: 20.0,
            interaction_cutoff: 5.0,
            contact_strength: 50.0,
            continue_offset: 1.0,
            continue_speed_gain: 0.5,
            deviate_offset: 3.0,
            critical_distance: 7.0,
            headway: 1.5,
            lane_width: 3.0,
            corridor_margin: 1.0,
            corridor_buffer: 1.0,
            braking_deceleration: 4.0,
            pedestrian_speed_factor: 1.3,
            speed_limit: 8.33,
            pedestrian_stop_speed: 0.05,
            vehicle_stop_speed: 0.5,
        }
    }
}

impl ForceParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        let fields = [
            (self.pedestrian_strength, "pedestrian_strength"),
            (self.pedestrian_range, "pedestrian_range"),
            (self.obstacle_strength, "obstacle_strength"),
            (self.obstacle_range, "obstacle_range"),
            (self.anisotropy, "anisotropy"),
            (self.max_force, "max_force"),
            (self.interaction_cutoff, "interaction_cutoff"),
            (self.contact_strength, "contact_strength"),
            (self.continue_offset, "continue_offset"),
            (self.continue_speed_gain, "continue_speed_gain"),
            (self.deviate_offset, "deviate_offset"),
            (self.critical_distance, "critical_distance"),
            (self.headway, "headway"),
            (self.lane_width, "lane_width"),
            (self.corridor_margin, "corridor_margin"),
            (self.corridor_buffer, "corridor_buffer"),
            (self.braking_deceleration, "braking_deceleration"),
            (self.pedestrian_speed_factor, "pedestrian_speed_factor"),
            (self.speed_limit, "speed_limit"),
            (self.pedestrian_stop_speed, "pedestrian_stop_speed"),
            (self.vehicle_stop_speed, "vehicle_stop_speed"),
        ];
        for (v, name) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(name);
            }
        }
        if self.anisotropy > 1.0 {
            return Err("anisotropy");
        }
        Ok(())
    }

    /// S_c for a vehicle moving at `speed`.
    pub fn continue_scale(&self, speed: f64) -> f64 {
        self.continue_offset + self.continue_speed_gain * speed
    }
}

/// (desired_speed · unit(target − x) − v) / τ
pub fn driving_force(u: &RoadUser, target: Vec2) -> Vec2 {
    let dir = (target - u.position).normalize_or_zero();
    (dir * u.desired_speed - u.velocity) / u.relaxation_time
}

/// Driving force toward the steering target; zero velocity is desired while
/// holding.
pub fn free_flow_force(u: &RoadUser, arrival_radius: f64) -> Vec2 {
    (u.desired_velocity(arrival_radius) - u.velocity) / u.relaxation_time
}

pub fn obstacle_repulsion(u: &RoadUser, obstacles: &[ObstaclePolygon], params: &ForceParams) -> Vec2 {
    let mut total = Vec2::ZERO;
    for o in obstacles {
        let c = o.closest_point(u.position);
        let offset = u.position - c;
        let d = offset.norm();
        if d > params.interaction_cutoff {
            continue;
        }
        let inside = o.contains(u.position);
        let away = if d > 0.0 && !inside {
            offset / d
        } else if d > 0.0 {
            -offset / d
        } else {
            let centre: Vec2 = o.vertices().iter().copied().sum::<Vec2>() / o.vertices().len() as f64;
            (u.position - centre).normalize_or_zero()
        };
        let magnitude = if inside || d == 0.0 {
            params.max_force
        } else {
            (params.obstacle_strength * math::exp((u.radius - d) / params.obstacle_range))
                .min(params.max_force)
        };
        total += away * magnitude;
    }
    total
}

/// Closest point of `other`'s body to `p`: a disc for pedestrians, an
/// oriented rectangle for vehicles.
pub fn closest_body_point(other: &RoadUser, p: Vec2) -> Vec2 {
    if other.is_pedestrian() {
        return other.position;
    }
    let e = other.heading;
    let n = e.perp();
    let rel = p - other.position;
    let along = rel.dot(e).clamp(-other.half_length, other.half_length);
    let lateral = rel.dot(n).clamp(-other.half_width, other.half_width);
    other.position + e * along + n * lateral
}

/// Distance between the surfaces of `u` and `other` together with the unit
/// normal from `other` toward `u`. Coincident positions fall back to the
/// perpendicular of `u`'s heading, oriented by id order.
pub fn body_gap(u: &RoadUser, other: &RoadUser) -> (f64, Vec2) {
    let c = closest_body_point(other, u.position);
    let offset = u.position - c;
    let d = offset.norm();
    let other_r = if other.is_pedestrian() { other.radius } else { 0.0 };
    let n = if d > 0.0 {
        offset / d
    } else {
        let side = if u.id < other.id { 1.0 } else { -1.0 };
        u.heading.perp() * side
    };
    (d - u.radius - other_r, n)
}

/// Anisotropic exponential repulsion from other road users. `others` must
/// not contain `u` or members of `u`'s group.
pub fn pedestrian_repulsion<'a, I>(u: &RoadUser, others: I, fov: FieldOfView, params: &ForceParams) -> Vec2
where
    I: IntoIterator<Item = &'a RoadUser>,
{
    let mut total = Vec2::ZERO;
    for other in others {
        if other.id == u.id {
            continue;
        }
        let (gap, n) = body_gap(u, other);
        let centre_dist = u.position.distance(closest_body_point(other, u.position));
        if centre_dist > params.interaction_cutoff {
            continue;
        }
        let seen = in_field_of_view(u.position, u.heading, fov, other.position).unwrap_or(true);
        let weight = if seen { 1.0 } else { params.anisotropy };
        let magnitude =
            (params.pedestrian_strength * math::exp(-gap / params.pedestrian_range)).min(params.max_force);
        total += n * (weight * magnitude);
    }
    total
}

/// Linear push-back between overlapping bodies, used among group members.
pub fn contact_force<'a, I>(u: &RoadUser, others: I, params: &ForceParams) -> Vec2
where
    I: IntoIterator<Item = &'a RoadUser>,
{
    let mut total = Vec2::ZERO;
    for other in others {
        if other.id == u.id {
            continue;
        }
        let (gap, n) = body_gap(u, other);
        if gap < 0.0 {
            total += n * (params.contact_strength * -gap).min(params.max_force);
        }
    }
    total
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Smallest head rotation (radians, ≥ 0) from `direction` that brings every
/// point of `others` within ±half_angle. When the members span more than
/// the full field of view, the rotation that centres their arc is used.
pub fn vision_rotation(position: Vec2, direction: Vec2, others: &[Vec2], half_angle: f64) -> f64 {
    let mut bearings: alloc::vec::Vec<f64> = others
        .iter()
        .filter(|o| o.distance(position) > 0.0)
        .map(|&o| direction.angle_to(o - position))
        .collect();
    if bearings.is_empty() || direction.norm_squared() == 0.0 {
        return 0.0;
    }
    bearings.sort_by(f64::total_cmp);
    let n = bearings.len();
    // The covering arc starts right after the widest angular gap.
    let mut gap = bearings[0] + 2.0 * PI - bearings[n - 1];
    let (mut lo, mut hi) = (bearings[0], bearings[n - 1]);
    for k in 0..n - 1 {
        let g = bearings[k + 1] - bearings[k];
        if g > gap {
            gap = g;
            lo = bearings[k + 1];
            hi = bearings[k] + 2.0 * PI;
        }
    }
    if hi - lo > 2.0 * half_angle {
        return wrap_angle(0.5 * (lo + hi)).abs();
    }
    let (a, b) = (hi - half_angle, lo + half_angle);
    [-2.0 * PI, 0.0, 2.0 * PI]
        .iter()
        .map(|k| {
            let (a, b) = (a + k, b + k);
            if a <= 0.0 && 0.0 <= b {
                0.0
            } else if a > 0.0 {
                a
            } else {
                -b
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Inputs of the group force for one member.
#[derive(Debug, Clone, Copy)]
pub struct GroupForceInput<'a> {
    pub position: Vec2,
    /// V_desired: desired velocity toward the member's current waypoint.
    pub desired_velocity: Vec2,
    /// Positions of the other members of the member's group.
    pub others: &'a [Vec2],
    pub centroid: Vec2,
    pub is_leader: bool,
    pub state: FsmState,
    pub zone: Zone,
}

/// f_vis + f_att, gated off in danger zones, for waiting members and for
/// singleton groups. f_vis brakes the member in proportion to the head
/// rotation needed to keep the others in view; f_att pulls non-leaders
/// that are at least d from the centroid.
pub fn group_force(input: &GroupForceInput<'_>, fov: FieldOfView, params: &GroupParams) -> Vec2 {
    if input.zone == Zone::Danger || input.state == FsmState::Waiting || input.others.is_empty() {
        return Vec2::ZERO;
    }
    let Some(dir) = input.desired_velocity.normalize() else {
        return Vec2::ZERO;
    };
    let theta = vision_rotation(input.position, dir, input.others, fov.half_angle);
    let vision = input.desired_velocity * (-params.vision_strength * theta);
    let to_centre = input.centroid - input.position;
    let attraction = if !input.is_leader && to_centre.norm() >= params.attraction_threshold {
        to_centre.normalize_or_zero() * params.attraction_strength
    } else {
        Vec2::ZERO
    };
    vision + attraction
}

/// Crossing point p_α = x_β + S_c·e_β for a pedestrian that continues, if
/// its path to the goal crosses the vehicle's axis segment
/// [x_β + S_c·e_β, x_β − (S_c/2)·e_β].
pub fn continue_crossing_point(ped: &RoadUser, vehicle: &RoadUser, params: &ForceParams) -> Option<Vec2> {
    let s_c = params.continue_scale(vehicle.speed());
    let e = vehicle.heading;
    let front = vehicle.position + e * s_c;
    let back = vehicle.position - e * (0.5 * s_c);
    let path = Segment::new(ped.position, ped.goal()).ok()?;
    let axis = Segment::new(front, back).ok()?;
    segments_intersect(path, axis).then_some(front)
}

/// Passing point behind the vehicle, x_β − S_d·e_β.
pub fn deviate_target(vehicle: &RoadUser, s_d: f64) -> Vec2 {
    vehicle.position - vehicle.heading * s_d
}

/// Speed reduction for one tick of the decelerate strategy (m/s per tick):
/// half the speed within D_min, otherwise speed²/(distance − D_min),
/// never more than half the speed.
pub fn deceleration_rate(speed: f64, distance: f64, critical_distance: f64) -> f64 {
    let half = 0.5 * speed;
    if distance <= critical_distance {
        half
    } else {
        (speed * speed / (distance - critical_distance)).min(half)
    }
}

pub fn decelerated_vehicle_speed(speed: f64, distance: f64, critical_distance: f64) -> f64 {
    (speed - deceleration_rate(speed, distance, critical_distance)).max(0.0)
}

pub fn decelerated_pedestrian_speed(speed: f64) -> f64 {
    0.5 * speed
}

fn snap(speed: f64, threshold: f64) -> f64 {
    if speed < threshold {
        0.0
    } else {
        speed
    }
}

/// Rectangle ahead of a vehicle that it needs to stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrakingCorridor {
    pub origin: Vec2,
    pub direction: Vec2,
    pub length: f64,
    pub half_width: f64,
}

impl BrakingCorridor {
    /// Length: half the vehicle length plus the stopping distance at
    /// `braking_deceleration` plus a buffer, measured from the centre.
    pub fn of(vehicle: &RoadUser, params: &ForceParams) -> Self {
        let v = vehicle.speed();
        Self {
            origin: vehicle.position,
            direction: vehicle.heading,
            length: vehicle.half_length
                + v * v / (2.0 * params.braking_deceleration)
                + params.corridor_buffer,
            half_width: vehicle.half_width + 0.5 * params.corridor_margin,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let rel = p - self.origin;
        let along = rel.dot(self.direction);
        let lateral = rel.dot(self.direction.perp());
        (0.0..=self.length).contains(&along) && lateral.abs() <= self.half_width
    }
}

/// True when a pedestrian's position, or its position one tick ahead, lies
/// in the vehicle's braking corridor.
pub fn reactive_stop<'a, I>(vehicle: &RoadUser, pedestrians: I, dt: f64, params: &ForceParams) -> bool
where
    I: IntoIterator<Item = &'a RoadUser>,
{
    let corridor = BrakingCorridor::of(vehicle, params);
    pedestrians.into_iter().any(|p| {
        corridor.contains(p.position) || corridor.contains(p.position + p.velocity * dt)
    })
}

/// Lead vehicle ahead of `v` in its lane and field of view, with the
/// bumper-to-bumper gap.
pub fn find_lead<'a, I>(v: &RoadUser, vehicles: I, fov: FieldOfView, params: &ForceParams) -> Option<(&'a RoadUser, f64)>
where
    I: IntoIterator<Item = &'a RoadUser>,
{
    let mut best: Option<(&RoadUser, f64)> = None;
    for other in vehicles {
        if other.id == v.id || !other.is_vehicle() {
            continue;
        }
        let rel = other.position - v.position;
        let along = rel.dot(v.heading);
        let lateral = rel.dot(v.heading.perp()).abs();
        let aligned = other.heading.dot(v.heading) > 0.5;
        let seen = in_field_of_view(v.position, v.heading, fov, other.position).unwrap_or(false);
        if along <= 0.0 || lateral > 0.5 * params.lane_width || !aligned || !seen {
            continue;
        }
        let gap = along - v.half_length - other.half_length;
        if best.is_none_or(|(_, g)| gap < g) {
            best = Some((other, gap));
        }
    }
    best
}

/// Next speed under car following: brake when the gap is below D_min plus
/// the time headway, otherwise relax toward the desired speed.
pub fn car_following_speed(v: &RoadUser, gap: f64, dt: f64, params: &ForceParams) -> f64 {
    let speed = v.speed();
    if gap < params.critical_distance + speed * params.headway {
        snap(decelerated_vehicle_speed(speed, gap, params.critical_distance), params.vehicle_stop_speed)
    } else {
        free_flow_speed(v, dt, params)
    }
}

pub fn free_flow_speed(v: &RoadUser, dt: f64, params: &ForceParams) -> f64 {
    let speed = v.speed();
    let target = v.desired_speed.min(params.speed_limit);
    (speed + (target - speed) / v.relaxation_time * dt).clamp(0.0, params.speed_limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Directive {
    Stopping,
    Game,
    Following,
    FreeFlow,
}

impl Directive {
    pub fn as_str(self) -> &'static str {
        match self {
            Directive::Stopping => "stopping",
            Directive::Game => "game",
            Directive::Following => "following",
            Directive::FreeFlow => "free_flow",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VehicleInputs {
    pub stopping: bool,
    /// Game strategy with the distance to the nearest counterpart.
    pub game: Option<(Strategy, f64)>,
    /// Gap to the lead vehicle.
    pub following: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleControl {
    pub directive: Directive,
    pub next_speed: f64,
}

/// Vehicle directive in priority order stopping > game > following > free
/// flow, and the speed it produces for the next tick.
pub fn vehicle_acceleration(v: &RoadUser, inputs: &VehicleInputs, dt: f64, params: &ForceParams) -> VehicleControl {
    let speed = v.speed();
    let (directive, next) = if inputs.stopping {
        (
            Directive::Stopping,
            decelerated_vehicle_speed(speed, 0.0, params.critical_distance),
        )
    } else if let Some((strategy, distance)) = inputs.game {
        let next = match strategy {
            Strategy::Decelerate => {
                decelerated_vehicle_speed(speed, distance, params.critical_distance)
            }
            _ => free_flow_speed(v, dt, params),
        };
        (Directive::Game, next)
    } else if let Some(gap) = inputs.following {
        (Directive::Following, car_following_speed(v, gap, dt, params))
    } else {
        (Directive::FreeFlow, free_flow_speed(v, dt, params))
    };
    let next = if directive == Directive::FreeFlow
        || matches!(inputs.game, Some((Strategy::Continue, _))) && directive == Directive::Game
    {
        next
    } else {
        snap(next, params.vehicle_stop_speed)
    };
    VehicleControl {
        directive,
        next_speed: next,
    }
}

/// Kinematics of a game decision for a pedestrian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PedestrianGame {
    Continue { crossing: Option<Vec2> },
    Decelerate,
    Deviate { target: Vec2 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PedestrianControl {
    Accelerate(Vec2),
    SetVelocity(Vec2),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PedestrianForces {
    pub obstacle: Vec2,
    pub social: Vec2,
    pub group: Vec2,
    pub contact: Vec2,
}

/// A game decision overrides social and group forces; obstacle and body
/// contact terms always apply.
pub fn pedestrian_acceleration(
    u: &RoadUser,
    game: Option<PedestrianGame>,
    forces: &PedestrianForces,
    arrival_radius: f64,
    params: &ForceParams,
) -> PedestrianControl {
    let physical = forces.obstacle + forces.contact;
    match game {
        Some(PedestrianGame::Decelerate) => {
            let speed = snap(decelerated_pedestrian_speed(u.speed()), params.pedestrian_stop_speed);
            PedestrianControl::SetVelocity(u.velocity.normalize_or_zero() * speed)
        }
        Some(PedestrianGame::Continue {
            crossing: Some(target),
        })
        | Some(PedestrianGame::Deviate { target }) => {
            PedestrianControl::Accelerate(driving_force(u, target) + physical)
        }
        Some(PedestrianGame::Continue { crossing: None }) | None => PedestrianControl::Accelerate(
            free_flow_force(u, arrival_radius) + physical + forces.social + forces.group,
        ),
    }
}

/// Semi-implicit Euler step for a pedestrian; returns the new velocity
/// after the speed cap.
pub fn integrate_pedestrian(u: &mut RoadUser, control: PedestrianControl, dt: f64, params: &ForceParams) {
    let cap = params.pedestrian_speed_factor * u.desired_speed;
    let v = match control {
        PedestrianControl::Accelerate(a) => (u.velocity + a * dt).clamp_norm(cap),
        PedestrianControl::SetVelocity(v) => v.clamp_norm(cap),
    };
    u.velocity = v;
    u.position += v * dt;
    if let Some(h) = v.normalize() {
        if v.norm() > params.pedestrian_stop_speed {
            u.heading = h;
        }
    }
}

/// Moves a vehicle along its polyline at `speed` for one tick.
pub fn integrate_vehicle(u: &mut RoadUser, speed: f64, dt: f64, arrival_radius: f64) {
    let speed = speed.max(0.0);
    let mut remaining = speed * dt;
    let mut idx = u.effective_waypoint_index(arrival_radius);
    // Walk along the polyline so that corners are not cut.
    while remaining > 0.0 {
        let Some(&wp) = u.waypoints.get(idx) else { break };
        let to = wp - u.position;
        let d = to.norm();
        if d <= remaining && idx + 1 < u.waypoints.len() {
            u.position = wp;
            remaining -= d;
            idx += 1;
            continue;
        }
        if let Some(dir) = to.normalize() {
            u.heading = dir;
            u.position += dir * remaining.min(d);
        }
        break;
    }
    u.waypoint_index = idx;
    if let Some(dir) = u
        .waypoints
        .get(idx)
        .and_then(|wp| (*wp - u.position).normalize())
    {
        u.heading = dir;
    }
    u.velocity = u.heading * speed;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentId;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use crate::game::Strategy;

    fn ped_at(id: u32, x: f64, y: f64, goal: Vec2) -> RoadUser {
        RoadUser::pedestrian(AgentId(id), Vec2::new(x, y), vec![goal], 1.3)
    }

    fn car_at(id: u32, x: f64, y: f64, heading: Vec2, speed: f64) -> RoadUser {
        let p = Vec2::new(x, y);
        let mut c = RoadUser::vehicle(AgentId(id), p, vec![p + heading * 100.0], 8.0);
        c.velocity = heading * speed;
        c
    }

    #[test]
    fn driving_force_examples() {
        let mut u = ped_at(0, 0.0, 0.0, Vec2::new(10.0, 0.0));
        let f = driving_force(&u, Vec2::new(10.0, 0.0));
        assert!((f - Vec2::new(2.6, 0.0)).norm() < 1e-12);
        u.velocity = Vec2::new(1.3, 0.0);
        assert_eq!(driving_force(&u, Vec2::new(10.0, 0.0)), Vec2::ZERO);
    }

    #[test]
    fn obstacle_repulsion_examples() {
        let params = ForceParams::default();
        let wall = ObstaclePolygon::new(vec![
            Vec2::new(-10.0, 0.5),
            Vec2::new(10.0, 0.5),
            Vec2::new(10.0, 1.0),
            Vec2::new(-10.0, 1.0),
        ])
        .unwrap();
        // heading +x: the wall at y = 0.5 is on the left
        let u = ped_at(0, 0.0, 0.0, Vec2::new(10.0, 0.0));
        let f = obstacle_repulsion(&u, core::slice::from_ref(&wall), &params);
        assert!(f.y < 0.0 && f.x.abs() < 1e-12);
        let far = ped_at(0, 0.0, -10.0, Vec2::new(10.0, -10.0));
        assert_eq!(obstacle_repulsion(&far, core::slice::from_ref(&wall), &params), Vec2::ZERO);
        let oracle = |d: f64| params.obstacle_strength * libm::exp((0.3 - d) / params.obstacle_range);
        let u2 = ped_at(0, 0.0, -0.5, Vec2::new(10.0, -0.5));
        let f2 = obstacle_repulsion(&u2, core::slice::from_ref(&wall), &params);
        assert!((f.norm() - oracle(0.5)).abs() < 1e-12);
        assert!((f2.norm() - oracle(1.0)).abs() < 1e-12);
        assert!(f2.norm() < f.norm());
        let on = ped_at(0, 0.0, 0.5, Vec2::new(10.0, 0.5));
        assert_eq!(obstacle_repulsion(&on, core::slice::from_ref(&wall), &params).norm(), params.max_force);
    }

    #[test]
    fn repulsion_examples() {
        let params = ForceParams::default();
        let fov = FieldOfView::pedestrian_default();
        let a = ped_at(0, 0.0, 0.0, Vec2::new(10.0, 0.0));
        assert_eq!(pedestrian_repulsion(&a, core::iter::empty(), fov, &params), Vec2::ZERO);
        let mut a = ped_at(0, -1.0, 0.0, Vec2::new(10.0, 0.0));
        let mut b = ped_at(1, 1.0, 0.0, Vec2::new(-10.0, 0.0));
        a.velocity = Vec2::new(1.0, 0.0);
        b.velocity = Vec2::new(-1.0, 0.0);
        let fa = pedestrian_repulsion(&a, [&b], fov, &params);
        let fb = pedestrian_repulsion(&b, [&a], fov, &params);
        assert!((fa + fb).norm() < 1e-12 && fa.x < 0.0);
        // same source behind instead of in front
        let behind = ped_at(1, -3.0, 0.0, Vec2::new(-10.0, 0.0));
        let fbehind = pedestrian_repulsion(&a, [&behind], fov, &params);
        let oracle = params.pedestrian_strength * libm::exp(-(2.0 - 0.6) / params.pedestrian_range);
        assert!((fa.norm() - oracle).abs() < 1e-12);
        assert!((fbehind.norm() - params.anisotropy * oracle).abs() < 1e-12);
        // coincident
        let c = ped_at(1, -1.0, 0.0, Vec2::new(10.0, 0.0));
        let fc = pedestrian_repulsion(&a, [&c], fov, &params);
        let fd = pedestrian_repulsion(&c, [&a], fov, &params);
        assert!(fc.is_finite() && fc.norm() <= params.max_force);
        assert!((fc + fd).norm() < 1e-12 && fc.norm() > 0.0);
    }

    #[test]
    fn vision_rotation_cases() {
        let h = 85f64.to_radians();
        let dir = Vec2::new(1.0, 0.0);
        let ahead = [Vec2::new(2.0, 1.0), Vec2::new(2.0, -1.0)];
        assert_eq!(vision_rotation(Vec2::ZERO, dir, &ahead, h), 0.0);
        let behind = [Vec2::new(-1.0, 0.0)];
        assert!((vision_rotation(Vec2::ZERO, dir, &behind, h) - (PI - h)).abs() < 1e-12);
        // members at ±100°: the covering arc runs through the back (160°),
        // so the head turns until the arc's far end reaches the cone edge
        let sides = [Vec2::from_angle(100f64.to_radians()), Vec2::from_angle(-100f64.to_radians())];
        assert!((vision_rotation(Vec2::ZERO, dir, &sides, h) - 175f64.to_radians()).abs() < 1e-9);
        let spread = [Vec2::from_angle(0.0), Vec2::from_angle(2.0), Vec2::from_angle(-2.0)];
        let r = vision_rotation(Vec2::ZERO, dir, &spread, h);
        assert!(r.is_finite() && r >= 0.0);
    }

    #[test]
    fn group_force_cases() {
        let params = GroupParams::default();
        let fov = FieldOfView::pedestrian_default();
        let others = [Vec2::new(1.0, 0.5), Vec2::new(1.0, -0.5)];
        let input = GroupForceInput {
            position: Vec2::ZERO,
            desired_velocity: Vec2::new(1.3, 0.0),
            others: &others,
            centroid: Vec2::new(2.0 / 3.0, 0.0),
            is_leader: false,
            state: FsmState::Walking,
            zone: Zone::Safe,
        };
        assert_eq!(group_force(&input, fov, &params), Vec2::ZERO);
        // d + 1 from the centroid, all members ahead
        let far = GroupForceInput {
            centroid: Vec2::new(params.attraction_threshold + 1.0, 0.0),
            ..input
        };
        let f = group_force(&far, fov, &params);
        assert!((f - Vec2::new(params.attraction_strength, 0.0)).norm() < 1e-12);
        assert_eq!(group_force(&GroupForceInput { is_leader: true, ..far }, fov, &params), Vec2::ZERO);
        assert_eq!(group_force(&GroupForceInput { zone: Zone::Danger, ..far }, fov, &params), Vec2::ZERO);
        assert_eq!(group_force(&GroupForceInput { others: &[], ..far }, fov, &params), Vec2::ZERO);
        // member behind the leader: vision term brakes the leader
        let back = [Vec2::new(-2.0, 0.0)];
        let lead = GroupForceInput {
            others: &back,
            centroid: Vec2::new(-1.0, 0.0),
            is_leader: true,
            ..input
        };
        let f = group_force(&lead, fov, &params);
        let theta = PI - fov.half_angle;
        assert!((f - Vec2::new(-1.3 * theta * params.vision_strength, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn crossing_point_cases() {
        let params = ForceParams::default();
        let car = car_at(9, 0.0, 0.0, Vec2::new(1.0, 0.0), 4.0);
        let s_c = params.continue_scale(4.0);
        let crossing = ped_at(0, s_c * 0.5, -5.0, Vec2::new(s_c * 0.5, 5.0));
        assert_eq!(continue_crossing_point(&crossing, &car, &params), Some(Vec2::new(s_c, 0.0)));
        let parallel = ped_at(0, 0.0, -5.0, Vec2::new(30.0, -5.0));
        assert_eq!(continue_crossing_point(&parallel, &car, &params), None);
        let prop = ForceParams {
            continue_offset: 1e-300,
            ..params
        };
        let fast = car_at(9, 0.0, 0.0, Vec2::new(1.0, 0.0), 8.0);
        let far_ped = ped_at(0, 0.1, -5.0, Vec2::new(0.1, 5.0));
        let p1 = continue_crossing_point(&far_ped, &car, &prop).unwrap();
        let p2 = continue_crossing_point(&far_ped, &fast, &prop).unwrap();
        assert!((p2.x - 2.0 * p1.x).abs() < 1e-12);
    }

    #[test]
    fn deceleration_examples() {
        assert_eq!(deceleration_rate(8.0, 4.0, 5.0), 4.0);
        assert_eq!(decelerated_vehicle_speed(8.0, 4.0, 5.0), 4.0);
        assert_eq!(deceleration_rate(8.0, 21.0, 5.0), 4.0);
        assert_eq!(decelerated_pedestrian_speed(1.2), 0.6);
        // the far formula is capped by the emergency case just above D_min
        assert_eq!(deceleration_rate(8.0, 5.0 + 1e-9, 5.0), 4.0);
        assert!(deceleration_rate(8.0, 100.0, 5.0) < 4.0);
    }

    #[test]
    fn deviate_target_example() {
        let car = car_at(1, 10.0, 0.0, Vec2::new(1.0, 0.0), 5.0);
        assert_eq!(deviate_target(&car, 3.0), Vec2::new(7.0, 0.0));
    }

    #[test]
    fn reactive_stop_cases() {
        let params = ForceParams::default();
        let car = car_at(1, 0.0, 0.0, Vec2::new(1.0, 0.0), 8.0);
        let mid = ped_at(2, 3.0, 0.0, Vec2::new(3.0, 10.0));
        assert!(reactive_stop(&car, [&mid], 0.1, &params));
        let mut side = ped_at(3, 3.0, 3.0, Vec2::new(30.0, 3.0));
        side.velocity = Vec2::new(1.3, 0.0);
        assert!(!reactive_stop(&car, [&side], 0.1, &params));
        let corridor = BrakingCorridor::of(&car, &params);
        let mut entering = ped_at(4, 3.0, corridor.half_width + 0.05, Vec2::new(3.0, -10.0));
        entering.velocity = Vec2::new(0.0, -1.0);
        assert!(!corridor.contains(entering.position));
        assert!(corridor.contains(entering.position + entering.velocity * 0.1));
        assert!(reactive_stop(&car, [&entering], 0.1, &params));
    }

    #[test]
    fn vehicle_priority() {
        let params = ForceParams::default();
        let car = car_at(1, 0.0, 0.0, Vec2::new(1.0, 0.0), 8.0);
        let all = VehicleInputs {
            stopping: true,
            game: Some((Strategy::Continue, 20.0)),
            following: Some(3.0),
        };
        assert_eq!(vehicle_acceleration(&car, &all, 0.1, &params).directive, Directive::Stopping);
        let no_stop = VehicleInputs { stopping: false, ..all };
        assert_eq!(vehicle_acceleration(&car, &no_stop, 0.1, &params).directive, Directive::Game);
        let follow = VehicleInputs { game: None, ..no_stop };
        assert_eq!(vehicle_acceleration(&car, &follow, 0.1, &params).directive, Directive::Following);
        let free = vehicle_acceleration(&car, &VehicleInputs::default(), 0.1, &params);
        assert_eq!(free.directive, Directive::FreeFlow);
        assert_eq!(free.next_speed, 8.0);
    }

    #[test]
    fn car_following_cases() {
        let params = ForceParams::default();
        let fov = FieldOfView::vehicle_default();
        let mut car = car_at(1, 0.0, 0.0, Vec2::new(1.0, 0.0), 8.0);
        assert!(find_lead(&car, core::iter::empty(), fov, &params).is_none());
        let lead = car_at(2, 60.0, 0.0, Vec2::new(1.0, 0.0), 10.0);
        assert!(find_lead(&car, [&lead], fov, &params).is_none(), "beyond range");
        let lead = car_at(2, 19.0, 0.5, Vec2::new(1.0, 0.0), 10.0);
        let (_, gap) = find_lead(&car, [&lead], fov, &params).unwrap();
        assert!((gap - 14.5).abs() < 1e-12);
        let oncoming = car_at(3, 10.0, 3.0, Vec2::new(-1.0, 0.0), 8.0);
        assert!(find_lead(&car, [&oncoming], fov, &params).is_none());
        let mut speeds = Vec::new();
        for _ in 0..4 {
            let next = car_following_speed(&car, 2.0, 0.1, &params);
            speeds.push(next);
            car.velocity = car.heading * next;
        }
        assert_eq!(speeds, vec![4.0, 2.0, 1.0, 0.5]);
        let free = car_at(1, 0.0, 0.0, Vec2::new(1.0, 0.0), 8.0);
        assert_eq!(car_following_speed(&free, 100.0, 0.1, &params), 8.0);
    }

    #[test]
    fn game_overrides_forces() {
        let params = ForceParams::default();
        let mut u = ped_at(0, 0.0, 0.0, Vec2::new(10.0, 0.0));
        u.velocity = Vec2::new(1.2, 0.0);
        let forces = PedestrianForces {
            social: Vec2::new(0.0, 5.0),
            group: Vec2::new(0.0, 5.0),
            ..Default::default()
        };
        assert_eq!(
            pedestrian_acceleration(&u, Some(PedestrianGame::Decelerate), &forces, 0.5, &params),
            PedestrianControl::SetVelocity(Vec2::new(0.6, 0.0))
        );
        let PedestrianControl::Accelerate(a) =
            pedestrian_acceleration(&u, Some(PedestrianGame::Deviate { target: Vec2::new(0.0, -5.0) }), &forces, 0.5, &params)
        else {
            panic!()
        };
        assert!(a.y < 0.0);
        let PedestrianControl::Accelerate(a) = pedestrian_acceleration(&u, None, &PedestrianForces::default(), 0.5, &params)
        else {
            panic!()
        };
        assert_eq!(a, driving_force(&u, Vec2::new(10.0, 0.0)));
    }

    #[test]
    fn vehicle_follows_polyline() {
        let mut car = RoadUser::vehicle(
            AgentId(0),
            Vec2::ZERO,
            vec![Vec2::new(1.0, 0.0), Vec2::new(1.0, 10.0)],
            8.0,
        );
        integrate_vehicle(&mut car, 5.0, 0.1, 0.1);
        assert!((car.position - Vec2::new(0.5, 0.0)).norm() < 1e-12);
        integrate_vehicle(&mut car, 5.0, 1.0, 0.1);
        assert!((car.position - Vec2::new(1.0, 4.5)).norm() < 1e-12);
        assert!((car.heading - Vec2::new(0.0, 1.0)).norm() < 1e-12);
        assert!((car.velocity - Vec2::new(0.0, 5.0)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn compact_group_has_zero_group_force(
            cx in -10.0f64..10.0, cy in -10.0f64..10.0,
            offsets in prop::collection::vec((0.0f64..0.6, -0.4f64..0.4), 2..5),
        ) {
            // members abreast or ahead within a small patch: mutually visible
            // along the desired direction and close to the centroid
            let params = GroupParams::default();
            let fov = FieldOfView::pedestrian_default();
            let base = Vec2::new(cx, cy);
            let mut pts: Vec<Vec2> = offsets.iter().map(|&(dx, dy)| base + Vec2::new(dx, dy)).collect();
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            let rear = pts[0];
            let others: Vec<Vec2> = pts[1..].iter().copied().filter(|p| {
                let b = (*p - rear).angle().abs();
                p.distance(rear) > 0.0 && b <= fov.half_angle
            }).collect();
            let mut members = vec![rear];
            members.extend(others.iter().copied());
            let c = crate::group::centroid(&members).unwrap();
            let input = GroupForceInput {
                position: rear,
                desired_velocity: Vec2::new(1.2, 0.0),
                others: &others,
                centroid: c,
                is_leader: false,
                state: FsmState::Walking,
                zone: Zone::Safe,
            };
            prop_assert_eq!(group_force(&input, fov, &params), Vec2::ZERO);
        }

        #[test]
        fn vehicle_deceleration_is_monotone(speed in 0.0f64..15.0, distance in 0.0f64..80.0, dmin in 0.5f64..10.0) {
            let params = ForceParams { critical_distance: dmin, ..Default::default() };
            let mut s = speed;
            let mut ticks = 0;
            while s > 0.0 {
                let car = car_at(0, 0.0, 0.0, Vec2::new(1.0, 0.0), s);
                let inputs = VehicleInputs { game: Some((Strategy::Decelerate, distance)), ..Default::default() };
                let next = vehicle_acceleration(&car, &inputs, 0.1, &params).next_speed;
                prop_assert!(next <= s);
                s = next;
                ticks += 1;
                prop_assert!(ticks < 10_000);
            }
        }

        #[test]
        fn pedestrian_deceleration_is_monotone(speed in 0.0f64..2.0) {
            let params = ForceParams::default();
            let mut u = ped_at(0, 0.0, 0.0, Vec2::new(10.0, 0.0));
            u.velocity = Vec2::new(speed, 0.0);
            let mut ticks = 0;
            while u.speed() > 0.0 {
                let before = u.speed();
                let c = pedestrian_acceleration(&u, Some(PedestrianGame::Decelerate), &PedestrianForces::default(), 0.5, &params);
                integrate_pedestrian(&mut u, c, 0.1, &params);
                prop_assert!(u.speed() <= before);
                ticks += 1;
                prop_assert!(ticks < 100);
            }
        }

        #[test]
        fn pedestrian_speed_is_capped(ax in -100.0f64..100.0, ay in -100.0f64..100.0) {
            let params = ForceParams::default();
            let mut u = ped_at(0, 0.0, 0.0, Vec2::new(10.0, 0.0));
            integrate_pedestrian(&mut u, PedestrianControl::Accelerate(Vec2::new(ax, ay)), 0.1, &params);
            prop_assert!(u.speed() <= 1.3 * u.desired_speed + 1e-12);
        }

        #[test]
        fn rate_cap_holds(speed in 0.0f64..20.0, distance in 0.0f64..100.0, dmin in 0.1f64..10.0) {
            let r = deceleration_rate(speed, distance, dmin);
            prop_assert!(r <= speed / 2.0 && r >= 0.0);
        }
    }
}
