//! Fixed-step simulation loop.
//!
//! Each tick runs, in order: conflict detection and classification, games
//! for new implicit conflicts, group bookkeeping, per-agent control on a
//! snapshot, integration, interaction clean-up and logging. All iteration
//! is over agent and group indices, so a run is a pure function of the
//! scenario and the seed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{ActiveStrategy, AgentId, AgentKind, RoadUser};
use crate::force::{
    contact_force, continue_crossing_point, deviate_target, find_lead, group_force,
    integrate_pedestrian, integrate_vehicle, obstacle_repulsion, pedestrian_acceleration,
    pedestrian_repulsion, reactive_stop, vehicle_acceleration, BrakingCorridor, Directive,
    GroupForceInput, PedestrianControl, PedestrianForces, PedestrianGame, VehicleInputs,
};
use crate::game::{
    build_payoff_matrix, evaluate_factors, select_game_leader, solve_stackelberg, FactorContext,
    FactorVector, FollowerInput, GameError, Player, Strategy,
};
use crate::geometry::{in_field_of_view, FieldOfView, Segment, Vec2};
use crate::group::{
    assign_subgroup_strategies, classify_zone, group_desired_speed, local_density, select_leader,
    FsmState, GroupError, GroupId, GroupParams, LeaderContext, PedestrianGroup, Zone,
};
use crate::math;
use crate::planner::{plan_route, ObstaclePolygon, PlannerError, StaticVisibility};
use crate::scenario::{Scenario, ScenarioError, SimParams, World, ZoneKind};

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Scenario(ScenarioError),
    Planning { agent: String, error: PlannerError },
    Group { group: String, error: GroupError },
    Game(GameError),
    /// A state component became NaN or infinite.
    NonFinite { tick: u64, agent: AgentId, dump: String },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Scenario(e) => write!(f, "invalid scenario: {e}"),
            SimError::Planning { agent, error } => write!(f, "no path for agent \"{agent}\": {error}"),
            SimError::Group { group, error } => write!(f, "group \"{group}\": {error}"),
            SimError::Game(e) => write!(f, "game construction failed: {e}"),
            SimError::NonFinite { tick, agent, dump } => {
                write!(f, "non-finite state of agent {agent} at tick {tick}\n{dump}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {}

impl From<ScenarioError> for SimError {
    fn from(e: ScenarioError) -> Self {
        SimError::Scenario(e)
    }
}

impl From<GameError> for SimError {
    fn from(e: GameError) -> Self {
        SimError::Game(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionClass {
    Reactive,
    CarFollowing,
    Implicit,
}

impl InteractionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionClass::Reactive => "reactive",
            InteractionClass::CarFollowing => "car_following",
            InteractionClass::Implicit => "implicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionPhase {
    Pending,
    Decided,
    Executing,
    Done,
}

/// Strategy handed to one agent by a game.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub agent: AgentId,
    pub strategy: Strategy,
    /// Vehicle the agent reacts to; `None` for vehicles.
    pub counterpart: Option<AgentId>,
    pub vehicle_seen: bool,
    /// Deviating pedestrians are released once the vehicle left their view.
    pub released: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub id: u32,
    pub class: InteractionClass,
    pub phase: InteractionPhase,
    pub participants: Vec<AgentId>,
    pub decision: Option<Vec<Assignment>>,
    pub start_tick: u64,
    pub end_tick: Option<u64>,
}

impl Interaction {
    fn involves(&self, id: AgentId) -> bool {
        self.participants.contains(&id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameEvent {
    pub tick: u64,
    pub time: f64,
    pub interaction: u32,
    pub leader: AgentId,
    /// Players (group members are represented by their leader) and the
    /// strategy each chose.
    pub players: Vec<(AgentId, Strategy)>,
    /// Strategy executed by every participating agent.
    pub assignments: Vec<(AgentId, Strategy)>,
    /// (α, β, factors of α against β)
    pub factors: Vec<(AgentId, AgentId, FactorVector)>,
    /// Groups that split when this game started.
    pub split_groups: Vec<GroupId>,
    pub leader_payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveRecord {
    pub tick: u64,
    pub agent: AgentId,
    pub directive: Directive,
    pub stopping_active: bool,
    pub game_strategy: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tick: u64,
    pub time: f64,
    pub agent: AgentId,
    pub position: Vec2,
    pub speed: f64,
    pub fsm: Option<FsmState>,
    pub strategy: Option<Strategy>,
    pub group: Option<GroupId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMeta {
    pub id: AgentId,
    pub name: String,
    pub kind: AgentKind,
    pub group: Option<GroupId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub id: u32,
    pub class: InteractionClass,
    pub participants: Vec<AgentId>,
    pub start_tick: u64,
    pub end_tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub agents: Vec<AgentMeta>,
    pub group_names: Vec<String>,
    /// Tick-major, then by agent id.
    pub samples: Vec<Sample>,
    pub games: Vec<GameEvent>,
    pub interactions: Vec<InteractionRecord>,
    pub directives: Vec<DirectiveRecord>,
    pub timed_out: bool,
    pub ticks: u64,
}

impl TrajectoryLog {
    pub fn samples_of(&self, agent: AgentId) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.agent == agent)
    }

    pub fn agent_by_name(&self, name: &str) -> Option<AgentId> {
        self.agents.iter().find(|a| a.name == name).map(|a| a.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub tick: u64,
    pub time: f64,
    /// Indexed by agent id; arrived agents stay with `arrived` set.
    pub agents: Vec<RoadUser>,
    /// Indexed by group id.
    pub groups: Vec<PedestrianGroup>,
    pub interactions: Vec<Interaction>,
    pub fsm: Vec<Option<FsmState>>,
    pub zones: Vec<Zone>,
    /// Per group: an implicit interaction currently involves a member.
    pub group_engaged: Vec<bool>,
}

/// Pair whose extrapolated motions come within the conflict radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conflict {
    pub a: AgentId,
    pub b: AgentId,
    pub time: f64,
    pub distance: f64,
}

/// Time in [0, horizon] and distance of closest approach for relative
/// position `p` and relative velocity `w`.
pub fn closest_approach(p: Vec2, w: Vec2, horizon: f64) -> (f64, f64) {
    let w2 = w.norm_squared();
    let t = if w2 > 0.0 {
        (-p.dot(w) / w2).clamp(0.0, horizon)
    } else {
        0.0
    };
    (t, (p + w * t).norm())
}

/// Conflicts among `users` extrapolated at `velocities`. Pedestrian pairs
/// are left to the social forces and never reported.
pub fn detect_conflicts(
    users: &[&RoadUser],
    velocities: &[Vec2],
    horizon: f64,
    margin: f64,
) -> Vec<Conflict> {
    let mut out = Vec::new();
    for i in 0..users.len() {
        for j in i + 1..users.len() {
            let (a, b) = (users[i], users[j]);
            if a.is_pedestrian() && b.is_pedestrian() {
                continue;
            }
            let (t, d) = closest_approach(
                b.position - a.position,
                velocities[j] - velocities[i],
                horizon,
            );
            if d < a.radius + b.radius + margin {
                out.push(Conflict {
                    a: a.id,
                    b: b.id,
                    time: t,
                    distance: d,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Unit {
    Vehicle(AgentId),
    Pedestrian(AgentId),
    Group(usize),
}

pub struct Simulation {
    params: SimParams,
    world: World,
    obstacles: Vec<ObstaclePolygon>,
    borders: Vec<Segment>,
    pedestrian_fov: FieldOfView,
    vehicle_fov: FieldOfView,
    group_params: Vec<GroupParams>,
    state: WorldState,
    rng: ChaCha8Rng,
    log: TrajectoryLog,
    last_directive: Vec<Option<Directive>>,
    arrival_tick: Vec<Option<u64>>,
    next_interaction: u32,
    next_subgroup: u32,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let params = scenario.params.clone();
        let obstacles = scenario.obstacle_polygons()?;
        let visibility = StaticVisibility::new(&obstacles);
        let pedestrian_fov = params.pedestrian_fov()?;
        let vehicle_fov = params.vehicle_fov()?;

        let mut agents = Vec::with_capacity(scenario.agents.len());
        for (i, spec) in scenario.agents.iter().enumerate() {
            let id = AgentId(i as u32);
            let waypoints = if spec.waypoints.is_empty() {
                plan_route(&visibility, spec.origin, spec.destination, params.path_clearance)
                    .map_err(|error| SimError::Planning {
                        agent: spec.name.clone(),
                        error,
                    })?
                    .into_waypoints()
                    .into_iter()
                    .skip(1)
                    .collect()
            } else {
                let mut w = spec.waypoints.clone();
                w.push(spec.destination);
                w
            };
            let mut u = match spec.kind {
                AgentKind::Pedestrian => RoadUser::pedestrian(id, spec.origin, waypoints, spec.desired_speed),
                AgentKind::Vehicle => RoadUser::vehicle(id, spec.origin, waypoints, spec.desired_speed),
            };
            if u.waypoints.is_empty() {
                u.waypoints.push(spec.destination);
            }
            if let Some(t) = spec.relaxation_time {
                u.relaxation_time = t;
            }
            u.velocity = u.heading * spec.initial_speed;
            agents.push(u);
        }

        let borders: Vec<Segment> = scenario
            .world
            .zones
            .iter()
            .filter(|z| z.kind == ZoneKind::Road)
            .flat_map(|z| {
                let n = z.vertices.len();
                (0..n).filter_map(move |k| Segment::new(z.vertices[k], z.vertices[(k + 1) % n]).ok())
            })
            .collect();

        let mut groups = Vec::with_capacity(scenario.groups.len());
        let mut group_params = Vec::with_capacity(scenario.groups.len());
        for (g, spec) in scenario.groups.iter().enumerate() {
            let gp = spec.params.clone().unwrap_or_else(|| params.group.clone());
            let members: Vec<AgentId> = spec
                .members
                .iter()
                .map(|n| AgentId(scenario.agent_index(n).expect("validated") as u32))
                .collect();
            let goal = agents[members[0].index()].goal();
            let leader = match &spec.leader {
                Some(name) => AgentId(scenario.agent_index(name).expect("validated") as u32),
                None => {
                    let pos: Vec<(AgentId, Vec2)> =
                        members.iter().map(|&m| (m, agents[m.index()].position)).collect();
                    let ctx = LeaderContext {
                        vehicle: None,
                        destination: goal,
                        borders: &borders,
                    };
                    select_leader(&pos, gp.leader_method, &ctx).expect("group is nonempty")
                }
            };
            let mut group = PedestrianGroup::new(GroupId(g as u32), members.clone(), leader, goal)
                .map_err(|error| SimError::Group {
                    group: spec.name.clone(),
                    error,
                })?;
            group.update_boundary(|m| agents[m.index()].position);
            for &m in &members {
                let u = &mut agents[m.index()];
                u.group = Some(GroupId(g as u32));
                u.desired_speed =
                    group_desired_speed(members.len(), u.desired_speed, gp.speed_slope, gp.min_speed);
                u.velocity = u.velocity.clamp_norm(u.desired_speed);
            }
            groups.push(group);
            group_params.push(gp);
        }

        let n = agents.len();
        let mut fsm = vec![None; n];
        for g in &groups {
            for &m in &g.members {
                fsm[m.index()] = Some(FsmState::Walking);
            }
        }
        let log = TrajectoryLog {
            dt: params.dt,
            agents: scenario
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| AgentMeta {
                    id: AgentId(i as u32),
                    name: a.name.clone(),
                    kind: a.kind,
                    group: agents[i].group,
                })
                .collect(),
            group_names: scenario.groups.iter().map(|g| g.name.clone()).collect(),
            ..Default::default()
        };
        let next_subgroup = groups.len() as u32;
        let group_count = groups.len();
        let mut sim = Self {
            world: scenario.world.clone(),
            obstacles,
            borders,
            pedestrian_fov,
            vehicle_fov,
            group_params,
            state: WorldState {
                tick: 0,
                time: 0.0,
                agents,
                groups,
                interactions: Vec::new(),
                fsm,
                zones: vec![Zone::Safe; n],
                group_engaged: vec![false; group_count],
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            log,
            last_directive: vec![None; n],
            arrival_tick: vec![None; n],
            next_interaction: 0,
            next_subgroup,
            params,
        };
        sim.record();
        Ok(sim)
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Direct access for constructing situations in tests and tools.
    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.state
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn finished(&self) -> bool {
        self.state.agents.iter().all(|a| a.arrived)
    }

    /// Steps until every agent arrived or `max_time` elapsed.
    pub fn run(mut self, max_time: f64) -> Result<TrajectoryLog, SimError> {
        let max_ticks = math::ceil(max_time / self.params.dt - 1e-9).max(0.0) as u64;
        while !self.finished() && self.state.tick < max_ticks {
            self.step()?;
        }
        self.log.timed_out = !self.finished();
        Ok(self.into_log())
    }

    pub fn into_log(mut self) -> TrajectoryLog {
        let tick = self.state.tick;
        for i in &self.state.interactions {
            self.log.interactions.push(InteractionRecord {
                id: i.id,
                class: i.class,
                participants: i.participants.clone(),
                start_tick: i.start_tick,
                end_tick: i.end_tick,
            });
        }
        self.log.interactions.sort_by_key(|r| r.id);
        self.log.ticks = tick;
        self.log
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        self.detect_interactions()?;
        self.refresh_strategies();
        self.update_groups();
        let controls = self.compute_controls();
        self.integrate(&controls)?;
        self.state.tick += 1;
        self.state.time = self.state.tick as f64 * self.params.dt;
        self.finish_interactions();
        self.record();
        Ok(())
    }

    fn active(&self) -> impl Iterator<Item = &RoadUser> + '_ {
        self.state.agents.iter().filter(|a| !a.arrived)
    }

    fn arrival(&self, u: &RoadUser) -> f64 {
        self.params.arrival_radius(u.kind)
    }

    /// Velocity used for conflict extrapolation. Regrouping members move
    /// along their planned path at their desired speed.
    fn predicted_velocity(&self, u: &RoadUser) -> Vec2 {
        match self.state.fsm[u.id.index()] {
            Some(FsmState::Waiting) | Some(FsmState::Coordination) => u.planned_velocity(self.arrival(u)),
            _ => u.velocity,
        }
    }

    fn unit_of(&self, u: &RoadUser) -> Unit {
        match (u.kind, u.group) {
            (AgentKind::Vehicle, _) => Unit::Vehicle(u.id),
            (AgentKind::Pedestrian, Some(g)) => Unit::Group(g.0 as usize),
            (AgentKind::Pedestrian, None) => Unit::Pedestrian(u.id),
        }
    }

    fn unit_members(&self, unit: Unit) -> Vec<AgentId> {
        match unit {
            Unit::Vehicle(id) | Unit::Pedestrian(id) => vec![id],
            Unit::Group(g) => self.state.groups[g].members.clone(),
        }
    }

    fn representative(&self, unit: Unit) -> AgentId {
        match unit {
            Unit::Vehicle(id) | Unit::Pedestrian(id) => id,
            Unit::Group(g) => self.state.groups[g].leader,
        }
    }

    fn shares_interaction(&self, a: AgentId, b: AgentId, class: Option<InteractionClass>) -> bool {
        self.state
            .interactions
            .iter()
            .any(|i| class.is_none_or(|c| i.class == c) && i.involves(a) && i.involves(b))
    }

    // Phases 1 and 2: conflicts, classification, games.
    fn detect_interactions(&mut self) -> Result<(), SimError> {
        let users: Vec<&RoadUser> = self.active().collect();
        let velocities: Vec<Vec2> = users.iter().map(|u| self.predicted_velocity(u)).collect();
        let conflicts = detect_conflicts(
            &users,
            &velocities,
            self.params.conflict_horizon,
            self.params.conflict_margin,
        );
        let dt = self.params.dt;
        let mut simple: Vec<(InteractionClass, AgentId, AgentId)> = Vec::new();
        let mut implicit: Vec<(Unit, Unit)> = Vec::new();
        for c in &conflicts {
            if self.shares_interaction(c.a, c.b, None) {
                continue;
            }
            let (a, b) = (&self.state.agents[c.a.index()], &self.state.agents[c.b.index()]);
            let class = if a.is_vehicle() && b.is_vehicle() {
                let fov = self.vehicle_fov;
                let fp = &self.params.force;
                if find_lead(a, [b], fov, fp).is_some() || find_lead(b, [a], fov, fp).is_some() {
                    InteractionClass::CarFollowing
                } else {
                    InteractionClass::Implicit
                }
            } else {
                let (veh, ped) = if a.is_vehicle() { (a, b) } else { (b, a) };
                let corridor = BrakingCorridor::of(veh, &self.params.force);
                if corridor.contains(ped.position) || corridor.contains(ped.position + ped.velocity * dt) {
                    InteractionClass::Reactive
                } else {
                    InteractionClass::Implicit
                }
            };
            if class == InteractionClass::Implicit {
                let (ua, ub) = (self.unit_of(a), self.unit_of(b));
                // A group already negotiating with this vehicle is covered.
                let covered = self.unit_members(ua).iter().any(|&x| {
                    self.unit_members(ub)
                        .iter()
                        .any(|&y| self.shares_interaction(x, y, Some(InteractionClass::Implicit)))
                });
                if !covered && !implicit.contains(&(ua, ub)) {
                    implicit.push((ua, ub));
                }
            } else {
                simple.push((class, c.a, c.b));
            }
        }
        for (class, a, b) in simple {
            let id = self.next_interaction;
            self.next_interaction += 1;
            self.state.interactions.push(Interaction {
                id,
                class,
                phase: InteractionPhase::Executing,
                participants: vec![a, b],
                decision: None,
                start_tick: self.state.tick,
                end_tick: None,
            });
        }
        for component in connected_components(&implicit) {
            self.play_game(&component)?;
        }
        Ok(())
    }

    fn factor_context(&self, u: &RoadUser) -> FactorContext {
        let id = u.id;
        let members = self.unit_members(self.unit_of(u));
        let active_interactions = self
            .state
            .interactions
            .iter()
            .filter(|i| i.class == InteractionClass::Implicit && members.iter().any(|&m| i.involves(m)))
            .count();
        let vehicles: Vec<&RoadUser> = self.active().filter(|a| a.is_vehicle()).collect();
        let fp = &self.params.force;
        let (car_following, followed) = if u.is_vehicle() {
            (
                find_lead(u, vehicles.iter().copied(), self.vehicle_fov, fp).is_some(),
                vehicles.iter().any(|v| {
                    v.id != id
                        && find_lead(v, vehicles.iter().copied(), self.vehicle_fov, fp)
                            .is_some_and(|(lead, _)| lead.id == id)
                }),
            )
        } else {
            (false, false)
        };
        let group_leader_waiting = u.group.is_some_and(|g| {
            let g = &self.state.groups[g.0 as usize];
            g.leader == id && self.state.fsm[id.index()] == Some(FsmState::Waiting)
        });
        FactorContext {
            active_interactions,
            stopping_for_other: u.strategy() == Some(Strategy::Decelerate)
                || self.last_directive[id.index()] == Some(Directive::Stopping),
            car_following,
            followed,
            in_roundabout: self.world.in_roundabout(u.position),
            group_leader_waiting,
            in_group: u.group.is_some(),
        }
    }

    fn play_game(&mut self, units: &[Unit]) -> Result<(), SimError> {
        let tick = self.state.tick;
        let vehicle_positions: Vec<Vec2> = units
            .iter()
            .filter_map(|u| match u {
                Unit::Vehicle(id) => Some(self.state.agents[id.index()].position),
                _ => None,
            })
            .collect();

        let mut split_groups = Vec::new();
        for &unit in units {
            let Unit::Group(g) = unit else { continue };
            let centre = {
                let agents = &self.state.agents;
                self.state.groups[g].centroid(|m| agents[m.index()].position)
            };
            let nearest_vehicle = vehicle_positions
                .iter()
                .copied()
                .min_by(|a, b| a.distance(centre).total_cmp(&b.distance(centre)));
            let ctx = LeaderContext {
                vehicle: nearest_vehicle,
                destination: self.state.groups[g].goal,
                borders: &self.borders,
            };
            let agents = &self.state.agents;
            let next = self.next_subgroup;
            if self.state.groups[g].maybe_split(
                |m| agents[m.index()].position,
                &self.group_params[g],
                &ctx,
                next,
                &mut self.rng,
            ) {
                self.next_subgroup += 2;
                split_groups.push(GroupId(g as u32));
            }
        }

        let reps: Vec<(AgentId, AgentKind)> = units
            .iter()
            .map(|&u| {
                let id = self.representative(u);
                (id, self.state.agents[id.index()].kind)
            })
            .collect();
        let leader = select_game_leader(&reps, &mut self.rng)?;
        let leader_user = self.state.agents[leader.index()].clone();
        let leader_ctx = self.factor_context(&leader_user);
        let payoff = self.params.payoff.clone();

        let mut followers = Vec::new();
        let mut factors = Vec::new();
        let mut vehicle_draw: Vec<(AgentId, f64)> = Vec::new();
        for &(rep, kind) in reps.iter().filter(|(id, _)| *id != leader) {
            let user = self.state.agents[rep.index()].clone();
            let ctx = self.factor_context(&user);
            let mut lf = evaluate_factors(&leader_user, &user, &leader_ctx, &payoff, &mut self.rng);
            let mut ff = evaluate_factors(&user, &leader_user, &ctx, &payoff, &mut self.rng);
            // x9 is drawn once per vehicle and game.
            for (who, fv) in [(leader, &mut lf), (rep, &mut ff)] {
                if fv.get(9) {
                    match vehicle_draw.iter().find(|(v, _)| *v == who) {
                        Some(&(_, d)) => fv.f22 = d,
                        None => vehicle_draw.push((who, fv.f22)),
                    }
                }
            }
            factors.push((leader, rep, lf));
            factors.push((rep, leader, ff));
            followers.push(FollowerInput {
                player: Player::new(rep, kind),
                leader_factors: lf,
                follower_factors: ff,
            });
        }
        let matrix = build_payoff_matrix(&Player::new(leader, leader_user.kind), &followers, &payoff)?;
        let solution = solve_stackelberg(&matrix);
        let mut players = vec![(leader, solution.leader_strategy)];
        players.extend(
            followers
                .iter()
                .zip(&solution.follower_strategies)
                .map(|(f, &s)| (f.player.id, s)),
        );
        let vehicle_strategy = if leader_user.is_vehicle() {
            solution.leader_strategy
        } else {
            Strategy::Continue
        };

        let mut assignments = Vec::new();
        for (&unit, &(_, strategy)) in units.iter().zip(reps.iter()).map(|(u, r)| {
            let s = players.iter().find(|(id, _)| *id == r.0).expect("every player solved");
            (u, s)
        }) {
            let counterpart = leader_user.is_vehicle().then_some(leader);
            match unit {
                Unit::Vehicle(id) => assignments.push(Assignment {
                    agent: id,
                    strategy,
                    counterpart: None,
                    vehicle_seen: false,
                    released: false,
                }),
                Unit::Pedestrian(id) => assignments.push(Assignment {
                    agent: id,
                    strategy,
                    counterpart,
                    vehicle_seen: false,
                    released: false,
                }),
                Unit::Group(g) => {
                    let group = &self.state.groups[g];
                    let per_member: Vec<(AgentId, Strategy)> = match &group.subgroups {
                        Some(subs) => {
                            let lead_idx = subs
                                .iter()
                                .position(|s| s.members.contains(&group.leader))
                                .unwrap_or(0);
                            let strategies = assign_subgroup_strategies(
                                strategy,
                                vehicle_strategy,
                                subs.len(),
                                lead_idx,
                                &mut self.rng,
                            );
                            subs.iter()
                                .zip(strategies)
                                .flat_map(|(s, st)| s.members.iter().map(move |&m| (m, st)))
                                .collect()
                        }
                        None => group.members.iter().map(|&m| (m, strategy)).collect(),
                    };
                    for (m, s) in per_member {
                        if !self.state.agents[m.index()].arrived {
                            assignments.push(Assignment {
                                agent: m,
                                strategy: s,
                                counterpart,
                                vehicle_seen: false,
                                released: false,
                            });
                        }
                    }
                }
            }
        }
        assignments.sort_by_key(|a| a.agent);

        let id = self.next_interaction;
        self.next_interaction += 1;
        self.log.games.push(GameEvent {
            tick,
            time: self.state.time,
            interaction: id,
            leader,
            players,
            assignments: assignments.iter().map(|a| (a.agent, a.strategy)).collect(),
            factors,
            split_groups,
            leader_payoff: solution.leader_payoff,
        });
        self.state.interactions.push(Interaction {
            id,
            class: InteractionClass::Implicit,
            phase: InteractionPhase::Executing,
            participants: assignments.iter().map(|a| a.agent).collect(),
            decision: Some(assignments),
            start_tick: tick,
            end_tick: None,
        });
        Ok(())
    }

    /// Effective game strategy of each agent: vehicles decelerate if any of
    /// their games says so; pedestrians follow their latest game.
    fn refresh_strategies(&mut self) {
        let n = self.state.agents.len();
        let mut best: Vec<Option<(Strategy, u32, Vec<AgentId>, bool)>> = vec![None; n];
        // Deviate bookkeeping: seen once, then released when out of view.
        for inter in &mut self.state.interactions {
            let Some(decision) = &mut inter.decision else { continue };
            for a in decision.iter_mut() {
                if a.strategy != Strategy::Deviate || a.released {
                    continue;
                }
                let (Some(v), u) = (a.counterpart, &self.state.agents[a.agent.index()]) else {
                    continue;
                };
                let veh = &self.state.agents[v.index()];
                let seen = !veh.arrived
                    && in_field_of_view(u.position, u.heading, self.pedestrian_fov, veh.position).unwrap_or(false);
                if seen {
                    a.vehicle_seen = true;
                } else if a.vehicle_seen {
                    a.released = true;
                }
            }
        }
        for inter in &self.state.interactions {
            let Some(decision) = &inter.decision else { continue };
            for a in decision.iter().filter(|a| !a.released) {
                let slot = &mut best[a.agent.index()];
                let counterparts: Vec<AgentId> = match a.counterpart {
                    Some(c) => vec![c],
                    None => inter.participants.iter().copied().filter(|&p| p != a.agent).collect(),
                };
                let replace = match slot {
                    None => true,
                    Some((s, _, _, _)) if self.state.agents[a.agent.index()].is_vehicle() => {
                        *s != Strategy::Decelerate && a.strategy == Strategy::Decelerate
                    }
                    Some(_) => true,
                };
                if replace {
                    *slot = Some((a.strategy, inter.id, counterparts, a.vehicle_seen));
                } else if let Some((s, _, cs, _)) = slot {
                    if *s == a.strategy {
                        cs.extend(counterparts);
                    }
                }
            }
        }
        for (i, entry) in best.into_iter().enumerate() {
            let target = entry.as_ref().and_then(|(s, _, cs, _)| {
                let u = &self.state.agents[i];
                let veh = cs.first().map(|c| &self.state.agents[c.index()])?;
                if !u.is_pedestrian() {
                    return None;
                }
                match s {
                    Strategy::Continue => continue_crossing_point(u, veh, &self.params.force),
                    Strategy::Deviate => Some(deviate_target(veh, self.params.force.deviate_offset)),
                    Strategy::Decelerate => None,
                }
            });
            self.state.agents[i].active_strategy = entry.map(|(strategy, interaction, counterparts, vehicle_seen)| {
                ActiveStrategy {
                    strategy,
                    interaction,
                    counterparts,
                    target,
                    vehicle_seen,
                }
            });
        }
    }

    // Phase 3: zones, state machine, splits and re-forming.
    fn update_groups(&mut self) {
        let peds: Vec<Vec2> = self.active().filter(|a| a.is_pedestrian()).map(|a| a.position).collect();
        let vehicles: Vec<Vec2> = self.active().filter(|a| a.is_vehicle()).map(|a| a.position).collect();
        for g in 0..self.state.groups.len() {
            let params = self.group_params[g].clone();
            let members = self.state.groups[g].members.clone();
            let engaged = self.state.interactions.iter().any(|i| {
                i.class == InteractionClass::Implicit && members.iter().any(|&m| i.involves(m))
            });
            self.state.group_engaged[g] = engaged;
            if members.iter().any(|&m| self.state.agents[m.index()].arrived) {
                for &m in &members {
                    let u = &mut self.state.agents[m.index()];
                    u.holding = false;
                    u.temporary_goal = None;
                    self.state.fsm[m.index()] = Some(FsmState::Walking);
                    self.state.zones[m.index()] = Zone::Safe;
                }
                continue;
            }
            let vehicle_in_view = members.iter().any(|&m| {
                let u = &self.state.agents[m.index()];
                vehicles
                    .iter()
                    .any(|&v| in_field_of_view(u.position, u.heading, self.pedestrian_fov, v).unwrap_or(false))
            });
            for &m in &members {
                let p = self.state.agents[m.index()].position;
                let density = local_density(p, peds.iter().copied(), params.density_radius);
                let mixed = self.world.zone_at(p) != ZoneKind::Pedestrian;
                self.state.zones[m.index()] = classify_zone(density, mixed, vehicle_in_view, &params);
            }

            let agents = &self.state.agents;
            let zones = &self.state.zones;
            let pos = |m: AgentId| agents[m.index()].position;
            let zone = |m: AgentId| zones[m.index()];
            let group = &mut self.state.groups[g];
            if group.is_split() && !engaged {
                group.reform(pos, zone, &params);
            }
            let updates = match (&mut group.subgroups, engaged) {
                (Some(subs), true) => subs
                    .iter_mut()
                    .flat_map(|s| {
                        if s.members.len() >= 2 {
                            s.update_member_states(pos, zone, &params)
                        } else {
                            s.members.iter().map(|&m| (m, FsmState::Walking, None)).collect()
                        }
                    })
                    .collect::<Vec<_>>(),
                _ => group.update_member_states(pos, zone, &params),
            };
            for (m, state, goal) in updates {
                let u = &mut self.state.agents[m.index()];
                // Members that reached the leader wait there for the rest.
                u.holding = state == FsmState::Waiting
                    || goal.is_some_and(|g| u.position.distance(g) <= params.regroup_radius);
                u.temporary_goal = goal;
                self.state.fsm[m.index()] = Some(state);
            }
        }
    }

    /// The group (or subgroup) whose cohesion forces act on `u`.
    fn cohesion_unit(&self, u: &RoadUser) -> Option<&PedestrianGroup> {
        let g = u.group?.0 as usize;
        let group = &self.state.groups[g];
        if group.members.iter().any(|&m| self.state.agents[m.index()].arrived) {
            return None;
        }
        if self.state.group_engaged[g] {
            group.unit_of(u.id)
        } else {
            Some(group)
        }
    }

    // Phase 4: controls from the current snapshot.
    fn compute_controls(&mut self) -> Vec<Control> {
        let dt = self.params.dt;
        let fp = &self.params.force;
        let active: Vec<&RoadUser> = self.active().collect();
        let peds: Vec<&RoadUser> = active.iter().copied().filter(|a| a.is_pedestrian()).collect();
        let vehicles: Vec<&RoadUser> = active.iter().copied().filter(|a| a.is_vehicle()).collect();
        let mut controls = Vec::with_capacity(self.state.agents.len());
        let mut records = Vec::new();
        for u in &self.state.agents {
            if u.arrived {
                controls.push(Control::None);
                continue;
            }
            let arrival = self.arrival(u);
            if u.is_pedestrian() {
                let unit = self.cohesion_unit(u);
                let mates: Vec<&RoadUser> = match u.group {
                    Some(g) => self.state.groups[g.0 as usize]
                        .members
                        .iter()
                        .map(|m| &self.state.agents[m.index()])
                        .filter(|m| m.id != u.id && !m.arrived)
                        .collect(),
                    None => Vec::new(),
                };
                let strangers = active
                    .iter()
                    .copied()
                    .filter(|o| o.id != u.id && (o.group.is_none() || o.group != u.group));
                let group = match unit {
                    Some(unit) => {
                        let others: Vec<Vec2> = unit
                            .members
                            .iter()
                            .filter(|&&m| m != u.id)
                            .map(|m| self.state.agents[m.index()].position)
                            .collect();
                        let centroid = unit.centroid(|m| self.state.agents[m.index()].position);
                        group_force(
                            &GroupForceInput {
                                position: u.position,
                                desired_velocity: u.desired_velocity(arrival),
                                others: &others,
                                centroid,
                                is_leader: unit.leader == u.id,
                                state: self.state.fsm[u.id.index()].unwrap_or(FsmState::Walking),
                                zone: self.state.zones[u.id.index()],
                            },
                            self.pedestrian_fov,
                            &self.group_params[u.group.expect("unit implies group").0 as usize],
                        )
                    }
                    None => Vec2::ZERO,
                };
                let forces = PedestrianForces {
                    obstacle: obstacle_repulsion(u, &self.obstacles, fp),
                    social: pedestrian_repulsion(u, strangers, self.pedestrian_fov, fp),
                    group,
                    contact: contact_force(u, mates.iter().copied(), fp),
                };
                let game = u.active_strategy.as_ref().map(|a| match a.strategy {
                    Strategy::Continue => PedestrianGame::Continue { crossing: a.target },
                    Strategy::Decelerate => PedestrianGame::Decelerate,
                    Strategy::Deviate => PedestrianGame::Deviate {
                        target: a.target.unwrap_or(u.position),
                    },
                });
                controls.push(Control::Pedestrian(pedestrian_acceleration(u, game, &forces, arrival, fp)));
            } else {
                let stopping = reactive_stop(u, peds.iter().copied(), dt, fp);
                let game = u.active_strategy.as_ref().map(|a| {
                    let distance = a
                        .counterparts
                        .iter()
                        .map(|c| &self.state.agents[c.index()])
                        .filter(|c| !c.arrived)
                        .map(|c| u.position.distance(c.position))
                        .fold(f64::INFINITY, f64::min);
                    (a.strategy, distance)
                });
                let following = find_lead(u, vehicles.iter().copied(), self.vehicle_fov, fp).map(|(_, gap)| gap);
                let inputs = VehicleInputs {
                    stopping,
                    game,
                    following,
                };
                let control = vehicle_acceleration(u, &inputs, dt, fp);
                records.push(DirectiveRecord {
                    tick: self.state.tick,
                    agent: u.id,
                    directive: control.directive,
                    stopping_active: stopping,
                    game_strategy: game.map(|(s, _)| s),
                });
                controls.push(Control::Vehicle(control.next_speed));
            }
        }
        for r in &records {
            self.last_directive[r.agent.index()] = Some(r.directive);
        }
        self.log.directives.extend(records);
        controls
    }

    // Phase 5: semi-implicit Euler.
    fn integrate(&mut self, controls: &[Control]) -> Result<(), SimError> {
        let dt = self.params.dt;
        let tick = self.state.tick;
        for (i, control) in controls.iter().enumerate() {
            let arrival = self.params.arrival_radius(self.state.agents[i].kind);
            let fp = &self.params.force;
            let u = &mut self.state.agents[i];
            match *control {
                Control::None => continue,
                Control::Pedestrian(c) => {
                    if let PedestrianControl::Accelerate(a) = c {
                        if !a.is_finite() {
                            return Err(non_finite(tick, u));
                        }
                    }
                    integrate_pedestrian(u, c, dt, fp);
                    u.waypoint_index = u.effective_waypoint_index(arrival);
                }
                Control::Vehicle(speed) => {
                    if !speed.is_finite() {
                        return Err(non_finite(tick, u));
                    }
                    integrate_vehicle(u, speed, dt, arrival);
                }
            }
            if !u.position.is_finite() || !u.velocity.is_finite() {
                return Err(non_finite(tick, u));
            }
            let last = u.waypoints.len().saturating_sub(1);
            if u.waypoint_index >= last && u.position.distance(u.goal()) <= arrival {
                u.arrived = true;
                self.arrival_tick[i] = Some(tick + 1);
            }
        }
        Ok(())
    }

    /// Vehicle participants are extrapolated at no less than their desired
    /// speed, so a vehicle that yielded keeps its interaction until the way
    /// is clear.
    fn interaction_over(&self, inter: &Interaction) -> bool {
        let users: Vec<&RoadUser> = inter
            .participants
            .iter()
            .map(|p| &self.state.agents[p.index()])
            .filter(|u| !u.arrived)
            .collect();
        if !users.iter().any(|u| u.is_vehicle()) || users.len() < 2 {
            return true;
        }
        let velocity = |u: &RoadUser| {
            if u.is_vehicle() && inter.class == InteractionClass::Implicit {
                u.heading * u.speed().max(u.desired_speed)
            } else {
                self.predicted_velocity(u)
            }
        };
        let velocities: Vec<Vec2> = users.iter().map(|u| velocity(u)).collect();
        let conflicting = !detect_conflicts(
            &users,
            &velocities,
            self.params.conflict_horizon,
            self.params.conflict_margin,
        )
        .is_empty();
        if conflicting {
            return false;
        }
        if inter.class != InteractionClass::Implicit {
            return true;
        }
        // no vehicle/pedestrian pair is still closing in
        users.iter().filter(|u| u.is_vehicle()).all(|v| {
            users
                .iter()
                .filter(|o| o.id != v.id)
                .all(|o| (o.position - v.position).dot(o.velocity - v.velocity) >= 0.0)
        })
    }

    // Phase 6: boundaries and finished interactions.
    fn finish_interactions(&mut self) {
        let agents = &self.state.agents;
        for g in &mut self.state.groups {
            g.update_boundary(|m| agents[m.index()].position);
        }
        let tick = self.state.tick;
        let mut k = 0;
        while k < self.state.interactions.len() {
            if self.interaction_over(&self.state.interactions[k]) {
                let mut done = self.state.interactions.remove(k);
                done.phase = InteractionPhase::Done;
                done.end_tick = Some(tick);
                for &p in &done.participants {
                    let u = &mut self.state.agents[p.index()];
                    if u.active_strategy.as_ref().is_some_and(|a| a.interaction == done.id) {
                        u.active_strategy = None;
                    }
                }
                self.log.interactions.push(InteractionRecord {
                    id: done.id,
                    class: done.class,
                    participants: done.participants,
                    start_tick: done.start_tick,
                    end_tick: done.end_tick,
                });
            } else {
                k += 1;
            }
        }
    }

    // Phase 7.
    fn record(&mut self) {
        let tick = self.state.tick;
        let time = self.state.time;
        for u in &self.state.agents {
            // Arrived agents are logged on the tick they arrive only.
            if u.arrived && self.arrival_tick[u.id.index()] != Some(tick) {
                continue;
            }
            self.log.samples.push(Sample {
                tick,
                time,
                agent: u.id,
                position: u.position,
                speed: u.speed(),
                fsm: self.state.fsm[u.id.index()],
                strategy: u.strategy(),
                group: u.group,
            });
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Control {
    None,
    Pedestrian(PedestrianControl),
    Vehicle(f64),
}

fn non_finite(tick: u64, u: &RoadUser) -> SimError {
    SimError::NonFinite {
        tick,
        agent: u.id,
        dump: format!("{u:?}"),
    }
}

/// Connected components of the unit graph, in order of first appearance.
fn connected_components(edges: &[(Unit, Unit)]) -> Vec<Vec<Unit>> {
    let mut nodes: Vec<Unit> = Vec::new();
    for &(a, b) in edges {
        for u in [a, b] {
            if !nodes.contains(&u) {
                nodes.push(u);
            }
        }
    }
    let index = |u: Unit, nodes: &[Unit]| nodes.iter().position(|&n| n == u).expect("node exists");
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, index(a, &nodes)), find(&mut parent, index(b, &nodes)));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut components: Vec<(usize, Vec<Unit>)> = Vec::new();
    for (i, &u) in nodes.iter().enumerate() {
        let r = find(&mut parent, i);
        match components.iter_mut().find(|(root, _)| *root == r) {
            Some((_, c)) => c.push(u),
            None => components.push((r, vec![u])),
        }
    }
    components
        .into_iter()
        .map(|(_, mut c)| {
            c.sort();
            c
        })
        .collect()
}

/// Builds and runs a scenario.
pub fn run(scenario: &Scenario, seed: u64, max_time: f64) -> Result<TrajectoryLog, SimError> {
    Simulation::new(scenario, seed)?.run(max_time)
}
