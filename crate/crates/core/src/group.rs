//! Social groups: structure, coherence, leader choice, the member state
//! machine, zones, splitting into subgroups and re-forming.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::agent::AgentId;
use crate::game::Strategy;
use crate::geometry::{Segment, Vec2};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LeaderMethod {
    NearestVehicle,
    NearestDestination,
    NearestBorder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FsmState {
    Walking,
    Waiting,
    Coordination,
}

impl FsmState {
    pub fn as_str(self) -> &'static str {
        match self {
            FsmState::Walking => "walking",
            FsmState::Waiting => "waiting",
            FsmState::Coordination => "coordination",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Safe,
    Danger,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GroupParams {
    /// P_base
    pub split_base_probability: f64,
    /// α, added per member beyond three.
    pub split_increment: f64,
    pub split_min_size: usize,
    pub d_social: f64,
    /// d: members at least this far from the centroid are attracted.
    pub attraction_threshold: f64,
    pub leader_method: LeaderMethod,
    /// agents/m²
    pub crowd_density_threshold: f64,
    pub density_radius: f64,
    pub vision_strength: f64,
    pub attraction_strength: f64,
    /// Members within this distance of the leader count as regrouped.
    pub regroup_radius: f64,
    /// Desired speed drop per additional member (m/s).
    pub speed_slope: f64,
    pub min_speed: f64,
}

impl Default for GroupParams {
    fn default() -> Self {
        Self {
            split_base_probability: 0.5,
            split_increment: 0.1,
            split_min_size: 3,
            d_social: 2.5,
            attraction_threshold: 1.5,
            leader_method: LeaderMethod::NearestDestination,
            crowd_density_threshold: 1.5,
            density_radius: 2.0,
            vision_strength: 0.3,
            attraction_strength: 1.0,
            regroup_radius: 1.5,
            speed_slope: 0.05,
            min_speed: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupError {
    TooFewMembers,
    DuplicateMember(AgentId),
    LeaderNotMember(AgentId),
    InvalidParams(&'static str),
}

impl fmt::Display for GroupError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupError::TooFewMembers => f.write_str("a group needs at least two members"),
            GroupError::DuplicateMember(id) => write!(f, "agent {id} appears twice in a group"),
            GroupError::LeaderNotMember(id) => write!(f, "leader {id} is not a group member"),
            GroupError::InvalidParams(what) => write!(f, "invalid group parameter: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GroupError {}

impl GroupParams {
    pub fn validate(&self) -> Result<(), GroupError> {
        if !(0.0..=1.0).contains(&self.split_base_probability) {
            return Err(GroupError::InvalidParams("split_base_probability"));
        }
        if !(self.split_increment >= 0.0) {
            return Err(GroupError::InvalidParams("split_increment"));
        }
        let positive = [
            (self.d_social, "d_social"),
            (self.attraction_threshold, "attraction_threshold"),
            (self.crowd_density_threshold, "crowd_density_threshold"),
            (self.density_radius, "density_radius"),
            (self.vision_strength, "vision_strength"),
            (self.attraction_strength, "attraction_strength"),
            (self.regroup_radius, "regroup_radius"),
            (self.min_speed, "min_speed"),
        ];
        for (v, name) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GroupError::InvalidParams(name));
            }
        }
        if !(self.speed_slope >= 0.0) {
            return Err(GroupError::InvalidParams("speed_slope"));
        }
        Ok(())
    }

    /// P = clamp(P_base + (S − 3)·α, 0, 1)
    pub fn split_probability(&self, size: usize) -> f64 {
        (self.split_base_probability + (size as f64 - 3.0) * self.split_increment).clamp(0.0, 1.0)
    }
}

/// Linear speed-size relation, floored at `min_speed`.
pub fn group_desired_speed(size: usize, base_speed: f64, slope: f64, min_speed: f64) -> f64 {
    let s = size.max(1) as f64;
    (base_speed - slope * (s - 1.0)).max(min_speed.min(base_speed))
}

pub fn centroid(positions: &[Vec2]) -> Option<Vec2> {
    if positions.is_empty() {
        return None;
    }
    let sum: Vec2 = positions.iter().copied().sum();
    Some(sum / positions.len() as f64)
}

/// Leader-to-boundary distance within `d_social` (closed bound).
pub fn is_coherent(leader: Vec2, boundary: Vec2, d_social: f64) -> bool {
    leader.distance(boundary) <= d_social
}

/// What a leader choice may be measured against.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeaderContext<'a> {
    pub vehicle: Option<Vec2>,
    pub destination: Vec2,
    pub borders: &'a [Segment],
}

fn argmin_by<F: Fn(Vec2) -> f64>(members: &[(AgentId, Vec2)], cost: F) -> Option<AgentId> {
    let mut best: Option<(AgentId, f64)> = None;
    for &(id, p) in members {
        let c = cost(p);
        let better = match best {
            None => true,
            Some((bid, bc)) => c < bc || (c == bc && id < bid),
        };
        if better {
            best = Some((id, c));
        }
    }
    best.map(|(id, _)| id)
}

/// Member minimising the method's distance; ties go to the lowest id. Methods
/// whose reference is missing fall back to nearest_destination.
pub fn select_leader(
    members: &[(AgentId, Vec2)],
    method: LeaderMethod,
    ctx: &LeaderContext<'_>,
) -> Option<AgentId> {
    match method {
        LeaderMethod::NearestVehicle if ctx.vehicle.is_some() => {
            let v = ctx.vehicle.unwrap();
            argmin_by(members, |p| p.distance(v))
        }
        LeaderMethod::NearestBorder if !ctx.borders.is_empty() => argmin_by(members, |p| {
            ctx.borders
                .iter()
                .map(|s| s.closest_point(p).distance(p))
                .fold(f64::INFINITY, f64::min)
        }),
        _ => argmin_by(members, |p| p.distance(ctx.destination)),
    }
}

/// Member farthest from the leader; ties go to the lowest id.
pub fn boundary_member(members: &[(AgentId, Vec2)], leader: Vec2) -> Option<AgentId> {
    argmin_by(members, |p| -p.distance(leader))
}

/// Zone classification for one member. `in_mixed_zone` is false only in
/// pedestrian-only areas.
pub fn classify_zone(local_density: f64, in_mixed_zone: bool, vehicle_in_view: bool, params: &GroupParams) -> Zone {
    if local_density >= params.crowd_density_threshold || (in_mixed_zone && vehicle_in_view) {
        Zone::Danger
    } else {
        Zone::Safe
    }
}

/// Agents per m² inside `radius` of `center`, counting the agent itself.
pub fn local_density(center: Vec2, others: impl Iterator<Item = Vec2>, radius: f64) -> f64 {
    let n = others.filter(|p| p.distance(center) <= radius).count() as f64;
    n / (core::f64::consts::PI * radius * radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianGroup {
    pub id: GroupId,
    pub members: Vec<AgentId>,
    pub leader: AgentId,
    pub boundary_member: AgentId,
    /// One entry per member, same order as `members`.
    pub states: Vec<FsmState>,
    pub goal: Vec2,
    pub subgroups: Option<Vec<PedestrianGroup>>,
    pub parent: Option<GroupId>,
}

impl PedestrianGroup {
    pub fn new(id: GroupId, members: Vec<AgentId>, leader: AgentId, goal: Vec2) -> Result<Self, GroupError> {
        if members.len() < 2 {
            return Err(GroupError::TooFewMembers);
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].contains(m) {
                return Err(GroupError::DuplicateMember(*m));
            }
        }
        if !members.contains(&leader) {
            return Err(GroupError::LeaderNotMember(leader));
        }
        let states = alloc::vec![FsmState::Walking; members.len()];
        Ok(Self {
            id,
            boundary_member: leader,
            members,
            leader,
            states,
            goal,
            subgroups: None,
            parent: None,
        })
    }

    fn sub(id: GroupId, parent: GroupId, members: Vec<AgentId>, leader: AgentId, goal: Vec2) -> Self {
        let states = alloc::vec![FsmState::Walking; members.len()];
        Self {
            id,
            boundary_member: leader,
            members,
            leader,
            states,
            goal,
            subgroups: None,
            parent: Some(parent),
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_split(&self) -> bool {
        self.subgroups.is_some()
    }

    pub fn state_of(&self, id: AgentId) -> Option<FsmState> {
        self.members
            .iter()
            .position(|m| *m == id)
            .map(|i| self.states[i])
    }

    /// Subgroup containing `id`, or the group itself when not split.
    pub fn unit_of(&self, id: AgentId) -> Option<&PedestrianGroup> {
        match &self.subgroups {
            Some(subs) => subs.iter().find(|s| s.members.contains(&id)),
            None => self.members.contains(&id).then_some(self),
        }
    }

    pub fn positions<F: Fn(AgentId) -> Vec2>(&self, position: F) -> Vec<(AgentId, Vec2)> {
        self.members.iter().map(|&m| (m, position(m))).collect()
    }

    pub fn centroid<F: Fn(AgentId) -> Vec2>(&self, position: F) -> Vec2 {
        let ps: Vec<Vec2> = self.members.iter().map(|&m| position(m)).collect();
        centroid(&ps).expect("groups are nonempty")
    }

    pub fn update_boundary<F: Fn(AgentId) -> Vec2>(&mut self, position: F) {
        self.update_boundary_dyn(&position);
    }

    fn update_boundary_dyn(&mut self, position: &dyn Fn(AgentId) -> Vec2) {
        let lp = position(self.leader);
        let ps = self.positions(position);
        self.boundary_member = boundary_member(&ps, lp).unwrap_or(self.leader);
        if let Some(subs) = &mut self.subgroups {
            for s in subs {
                s.update_boundary_dyn(position);
            }
        }
    }

    pub fn is_coherent<F: Fn(AgentId) -> Vec2>(&self, position: F, d_social: f64) -> bool {
        is_coherent(position(self.leader), position(self.boundary_member), d_social)
    }

    /// Walking / waiting / coordination transitions. Returns the temporary
    /// goal of every member in coordination.
    pub fn update_member_states<F, Z>(
        &mut self,
        position: F,
        zone: Z,
        params: &GroupParams,
    ) -> Vec<(AgentId, FsmState, Option<Vec2>)>
    where
        F: Fn(AgentId) -> Vec2,
        Z: Fn(AgentId) -> Zone,
    {
        self.update_boundary(&position);
        let leader_pos = position(self.leader);
        let regrouping = self.states.iter().any(|s| *s != FsmState::Walking);
        let gathered = self
            .members
            .iter()
            .all(|&m| position(m).distance(leader_pos) <= params.regroup_radius);
        let regroup = if regrouping {
            !gathered
        } else {
            !self.is_coherent(&position, params.d_social)
        };
        let mut out = Vec::with_capacity(self.members.len());
        for (i, &m) in self.members.iter().enumerate() {
            let state = if !regroup || zone(m) == Zone::Danger {
                FsmState::Walking
            } else if m == self.leader {
                FsmState::Waiting
            } else {
                FsmState::Coordination
            };
            self.states[i] = state;
            let goal = (state == FsmState::Coordination).then_some(leader_pos);
            out.push((m, state, goal));
        }
        out
    }

    /// Splits with probability P into the leader's cluster (leader and its
    /// ⌈S/2⌉−1 nearest members) and the rest. Subgroup ids are `next_id`
    /// and `next_id + 1`.
    pub fn maybe_split<F, R>(
        &mut self,
        position: F,
        params: &GroupParams,
        ctx: &LeaderContext<'_>,
        next_id: u32,
        rng: &mut R,
    ) -> bool
    where
        F: Fn(AgentId) -> Vec2,
        R: Rng + ?Sized,
    {
        if self.is_split() || self.size() < params.split_min_size.max(2) {
            return false;
        }
        let p = params.split_probability(self.size());
        if rng.gen::<f64>() >= p {
            return false;
        }
        let (lead, rest) = partition_by_leader(&self.positions(&position), self.leader);
        let rest_pos: Vec<(AgentId, Vec2)> = rest.iter().map(|&m| (m, position(m))).collect();
        let rest_leader =
            select_leader(&rest_pos, params.leader_method, ctx).expect("remainder is nonempty");
        self.subgroups = Some(alloc::vec![
            Self::sub(GroupId(next_id), self.id, lead, self.leader, self.goal),
            Self::sub(GroupId(next_id + 1), self.id, rest, rest_leader, self.goal),
        ]);
        self.update_boundary(&position);
        true
    }

    /// Merges the subgroups back when every pair of subgroup leaders is
    /// within d_social and every member is in a safe zone. The original
    /// leader is kept and all members walk.
    pub fn reform<F, Z>(&mut self, position: F, zone: Z, params: &GroupParams) -> bool
    where
        F: Fn(AgentId) -> Vec2,
        Z: Fn(AgentId) -> Zone,
    {
        let Some(subs) = &self.subgroups else {
            return false;
        };
        let leaders: Vec<Vec2> = subs.iter().map(|s| position(s.leader)).collect();
        let close = leaders
            .iter()
            .enumerate()
            .all(|(i, a)| leaders[i + 1..].iter().all(|b| a.distance(*b) <= params.d_social));
        if !close || self.members.iter().any(|&m| zone(m) == Zone::Danger) {
            return false;
        }
        self.subgroups = None;
        for s in &mut self.states {
            *s = FsmState::Walking;
        }
        self.update_boundary(&position);
        true
    }
}

/// Leader plus its ⌈S/2⌉−1 nearest members (ties by id), and the remainder.
pub fn partition_by_leader(members: &[(AgentId, Vec2)], leader: AgentId) -> (Vec<AgentId>, Vec<AgentId>) {
    let lp = members
        .iter()
        .find(|(id, _)| *id == leader)
        .map(|(_, p)| *p)
        .unwrap_or(Vec2::ZERO);
    let mut others: Vec<(f64, AgentId)> = members
        .iter()
        .filter(|(id, _)| *id != leader)
        .map(|&(id, p)| (p.distance(lp), id))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let take = (math::ceil(members.len() as f64 / 2.0) as usize).saturating_sub(1);
    let mut lead: Vec<AgentId> = alloc::vec![leader];
    lead.extend(others.iter().take(take).map(|(_, id)| *id));
    let rest = others.iter().skip(take).map(|(_, id)| *id).collect();
    (lead, rest)
}

/// Strategy of each subgroup given the game outcome. The leader's subgroup
/// follows the leader. The others follow too, except: vehicle continues
/// while the leader decelerates → deviate; vehicle decelerates while the
/// leader continues → decelerate or deviate, drawn per subgroup.
pub fn assign_subgroup_strategies<R: Rng + ?Sized>(
    leader_strategy: Strategy,
    vehicle_strategy: Strategy,
    subgroup_count: usize,
    leader_subgroup: usize,
    rng: &mut R,
) -> Vec<Strategy> {
    (0..subgroup_count.max(1))
        .map(|i| {
            if i == leader_subgroup || subgroup_count <= 1 {
                return leader_strategy;
            }
            match (vehicle_strategy, leader_strategy) {
                (Strategy::Continue, Strategy::Decelerate) => Strategy::Deviate,
                (Strategy::Decelerate, Strategy::Continue) => {
                    if rng.gen_bool(0.5) {
                        Strategy::Decelerate
                    } else {
                        Strategy::Deviate
                    }
                }
                _ => leader_strategy,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(n: u32) -> Vec<AgentId> {
        (0..n).map(AgentId).collect()
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&[Vec2::ZERO, Vec2::new(2.0, 0.0)]), Some(Vec2::new(1.0, 0.0)));
        let c = centroid(&[Vec2::ZERO, Vec2::new(0.0, 2.0), Vec2::new(3.0, 1.0)]).unwrap();
        assert!((c - Vec2::new(1.0, 1.0)).norm() < 1e-12);
        assert_eq!(centroid(&[Vec2::new(4.0, 5.0)]), Some(Vec2::new(4.0, 5.0)));
        assert_eq!(centroid(&[]), None);
    }

    #[test]
    fn coherence_bounds() {
        let l = Vec2::ZERO;
        assert!(is_coherent(l, Vec2::new(1.0, 0.0), 2.5));
        assert!(is_coherent(l, Vec2::new(2.5, 0.0), 2.5));
        assert!(!is_coherent(l, Vec2::new(3.0, 0.0), 2.5));
    }

    #[test]
    fn leader_methods() {
        let goal = Vec2::new(10.0, 0.0);
        let m = [(AgentId(0), Vec2::new(5.0, 0.0)), (AgentId(1), Vec2::new(7.0, 0.0))];
        let ctx = LeaderContext {
            destination: goal,
            ..Default::default()
        };
        assert_eq!(select_leader(&m, LeaderMethod::NearestDestination, &ctx), Some(AgentId(1)));
        // no vehicle: falls back to destination
        assert_eq!(select_leader(&m, LeaderMethod::NearestVehicle, &ctx), Some(AgentId(1)));
        let east = LeaderContext {
            vehicle: Some(Vec2::new(-50.0, 0.0)),
            destination: goal,
            borders: &[],
        };
        assert_eq!(select_leader(&m, LeaderMethod::NearestVehicle, &east), Some(AgentId(0)));
        let tie = [(AgentId(4), Vec2::new(0.0, 1.0)), (AgentId(2), Vec2::new(0.0, -1.0))];
        let ctx0 = LeaderContext {
            destination: Vec2::new(5.0, 0.0),
            ..Default::default()
        };
        assert_eq!(select_leader(&tie, LeaderMethod::NearestDestination, &ctx0), Some(AgentId(2)));
        let border = [Segment::new(Vec2::new(-5.0, 0.5), Vec2::new(5.0, 0.5)).unwrap()];
        let bctx = LeaderContext {
            borders: &border,
            ..ctx0
        };
        assert_eq!(select_leader(&tie, LeaderMethod::NearestBorder, &bctx), Some(AgentId(4)));
    }

    fn line_group(spacing: f64) -> (PedestrianGroup, Vec<Vec2>) {
        let g = PedestrianGroup::new(GroupId(0), ids(4), AgentId(0), Vec2::new(30.0, 0.0)).unwrap();
        let pos = (0..4).map(|i| Vec2::new(-(i as f64) * spacing, 0.0)).collect();
        (g, pos)
    }

    #[test]
    fn fsm_transitions() {
        let params = GroupParams::default();
        let (mut g, pos) = line_group(0.5);
        let out = g.update_member_states(|m| pos[m.index()], |_| Zone::Safe, &params);
        assert!(out.iter().all(|(_, s, goal)| *s == FsmState::Walking && goal.is_none()));

        let (mut g, pos) = line_group(1.0);
        let out = g.update_member_states(|m| pos[m.index()], |_| Zone::Safe, &params);
        assert_eq!(g.boundary_member, AgentId(3));
        assert_eq!(out[0].1, FsmState::Waiting);
        for (_, s, goal) in &out[1..] {
            assert_eq!(*s, FsmState::Coordination);
            assert_eq!(*goal, Some(pos[0]));
        }
        // still regrouping while members are away
        let out = g.update_member_states(|m| pos[m.index()], |_| Zone::Safe, &params);
        assert_eq!(out[0].1, FsmState::Waiting);
        // gathered → walking
        let near: Vec<Vec2> = (0..4).map(|i| Vec2::new(-0.3 * i as f64, 0.0)).collect();
        let out = g.update_member_states(|m| near[m.index()], |_| Zone::Safe, &params);
        assert!(out.iter().all(|(_, s, _)| *s == FsmState::Walking));

        let (mut g, pos) = line_group(1.0);
        let out = g.update_member_states(|m| pos[m.index()], |_| Zone::Danger, &params);
        assert!(out.iter().all(|(_, s, _)| *s == FsmState::Walking));
    }

    #[test]
    fn zones() {
        let p = GroupParams::default();
        assert_eq!(classify_zone(0.0, false, false, &p), Zone::Safe);
        assert_eq!(classify_zone(0.0, false, true, &p), Zone::Safe);
        assert_eq!(classify_zone(0.0, true, true, &p), Zone::Danger);
        assert_eq!(classify_zone(2.0, false, false, &p), Zone::Danger);
        let d = local_density(Vec2::ZERO, [Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(5.0, 0.0)].into_iter(), 2.0);
        assert!((d - 2.0 / (core::f64::consts::PI * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn split_probability_examples() {
        let p = GroupParams::default();
        assert!((p.split_probability(5) - 0.7).abs() < 1e-12);
        assert_eq!(GroupParams { split_base_probability: 1.0, ..p.clone() }.split_probability(8), 1.0);
        let (mut g2, _) = line_group(0.5);
        g2.members.truncate(2);
        g2.states.truncate(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let always = GroupParams {
            split_base_probability: 1.0,
            ..p
        };
        for _ in 0..100 {
            assert!(!g2.maybe_split(|m| Vec2::new(m.0 as f64, 0.0), &always, &LeaderContext::default(), 10, &mut rng));
        }
    }

    #[test]
    fn six_split_into_three_and_three_then_reform() {
        let params = GroupParams {
            split_base_probability: 1.0,
            ..Default::default()
        };
        let mut g = PedestrianGroup::new(GroupId(1), ids(6), AgentId(0), Vec2::new(0.0, 20.0)).unwrap();
        let pos: Vec<Vec2> = [
            (0.0, 0.0),
            (0.5, 0.0),
            (-0.5, 0.0),
            (0.0, -5.0),
            (0.5, -5.0),
            (-0.5, -5.0),
        ]
        .iter()
        .map(|&(x, y)| Vec2::new(x, y))
        .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = LeaderContext {
            destination: g.goal,
            ..Default::default()
        };
        assert!(g.maybe_split(|m| pos[m.index()], &params, &ctx, 100, &mut rng));
        let subs = g.subgroups.as_ref().unwrap();
        assert_eq!(subs[0].members, vec![AgentId(0), AgentId(1), AgentId(2)]);
        assert_eq!(subs[1].members.len(), 3);
        assert_eq!(subs[1].parent, Some(GroupId(1)));
        assert_eq!(subs[1].leader, AgentId(3));
        assert!(!g.reform(|m| pos[m.index()], |_| Zone::Safe, &params));
        let close: Vec<Vec2> = pos.iter().map(|p| Vec2::new(p.x, p.y * 0.3)).collect();
        assert!(!g.reform(|m| close[m.index()], |_| Zone::Danger, &params));
        assert!(g.reform(|m| close[m.index()], |_| Zone::Safe, &params));
        assert_eq!(g.members, ids(6));
        assert_eq!(g.leader, AgentId(0));
    }

    #[test]
    fn subgroup_strategies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use crate::game::Strategy::*;
        assert_eq!(assign_subgroup_strategies(Continue, Decelerate, 1, 0, &mut rng), vec![Continue]);
        assert_eq!(
            assign_subgroup_strategies(Decelerate, Continue, 3, 0, &mut rng),
            vec![Decelerate, Deviate, Deviate]
        );
        assert_eq!(assign_subgroup_strategies(Decelerate, Decelerate, 2, 1, &mut rng), vec![Decelerate, Decelerate]);
        let mut seen = [false; 2];
        for _ in 0..64 {
            let s = assign_subgroup_strategies(Continue, Decelerate, 2, 0, &mut rng);
            assert_eq!(s[0], Continue);
            match s[1] {
                Decelerate => seen[0] = true,
                Deviate => seen[1] = true,
                Continue => panic!("trailing subgroup must yield"),
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn speed_size_relation() {
        assert_eq!(group_desired_speed(1, 1.3, 0.05, 0.5), 1.3);
        assert!((group_desired_speed(4, 1.3, 0.05, 0.5) - 1.15).abs() < 1e-12);
        assert_eq!(group_desired_speed(100, 1.3, 0.05, 0.5), 0.5);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            PedestrianGroup::new(GroupId(0), vec![AgentId(0)], AgentId(0), Vec2::ZERO),
            Err(GroupError::TooFewMembers)
        );
        assert_eq!(
            PedestrianGroup::new(GroupId(0), vec![AgentId(0), AgentId(0)], AgentId(0), Vec2::ZERO),
            Err(GroupError::DuplicateMember(AgentId(0)))
        );
        assert_eq!(
            PedestrianGroup::new(GroupId(0), ids(2), AgentId(7), Vec2::ZERO),
            Err(GroupError::LeaderNotMember(AgentId(7)))
        );
    }

    proptest! {
        #[test]
        fn split_partitions_members(
            n in 3usize..10,
            seed in any::<u64>(),
            coords in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 10),
        ) {
            let params = GroupParams { split_base_probability: 1.0, ..Default::default() };
            let mut g = PedestrianGroup::new(GroupId(0), ids(n as u32), AgentId(0), Vec2::ZERO).unwrap();
            let pos: Vec<Vec2> = coords.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            prop_assert!(g.maybe_split(|m| pos[m.index()], &params, &LeaderContext::default(), 1, &mut rng));
            let subs = g.subgroups.as_ref().unwrap();
            prop_assert_eq!(subs.len(), 2);
            let mut all: Vec<AgentId> = subs.iter().flat_map(|s| s.members.iter().copied()).collect();
            all.sort();
            prop_assert_eq!(all, ids(n as u32));
            prop_assert_eq!(subs[0].members.len(), n.div_ceil(2));
            for s in subs {
                prop_assert!(s.members.contains(&s.leader));
            }
        }

        #[test]
        fn coherence_is_monotone(
            lx in -5.0f64..5.0, ly in -5.0f64..5.0,
            bx in -5.0f64..5.0, by in -5.0f64..5.0,
            shrink in 0.0f64..1.0,
        ) {
            let l = Vec2::new(lx, ly);
            let b = Vec2::new(bx, by);
            let closer = l + (b - l) * shrink;
            if is_coherent(l, b, 2.5) {
                prop_assert!(is_coherent(l, closer, 2.5));
            }
        }

        #[test]
        fn speed_is_monotone_in_size(s in 1usize..50, base in 0.6f64..2.0) {
            prop_assert!(group_desired_speed(s + 1, base, 0.05, 0.5) <= group_desired_speed(s, base, 0.05, 0.5));
        }

        #[test]
        fn fsm_never_holds_in_danger(
            coords in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 5),
            danger in prop::collection::vec(any::<bool>(), 5),
        ) {
            let mut g = PedestrianGroup::new(GroupId(0), ids(5), AgentId(0), Vec2::ZERO).unwrap();
            let pos: Vec<Vec2> = coords.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let zone = |m: AgentId| if danger[m.index()] { Zone::Danger } else { Zone::Safe };
            for _ in 0..3 {
                for (m, s, _) in g.update_member_states(|m| pos[m.index()], zone, &GroupParams::default()) {
                    if zone(m) == Zone::Danger {
                        prop_assert_eq!(s, FsmState::Walking);
                    }
                }
            }
        }
    }
}
