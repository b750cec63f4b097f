//! Stackelberg decisions for implicit interactions.
//!
//! A vehicle leads; pedestrians, groups (represented by their leader) and
//! other vehicles follow. Payoffs start from an ordinal table in [-100, 4]
//! and are shifted by the impacts F1..F26 of eleven observable boolean
//! factors x1..x11.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::agent::{AgentId, AgentKind, RoadUser};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Strategy {
    /// Keep going. "Accelerate" in group-to-vehicle handling is the same
    /// non-yield strategy.
    #[cfg_attr(feature = "serde", serde(alias = "accelerate"))]
    Continue,
    Decelerate,
    /// Pedestrians only.
    Deviate,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Continue, Strategy::Decelerate, Strategy::Deviate];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Continue => "continue",
            Strategy::Decelerate => "decelerate",
            Strategy::Deviate => "deviate",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "continue" | "accelerate" => Some(Strategy::Continue),
            "decelerate" => Some(Strategy::Decelerate),
            "deviate" => Some(Strategy::Deviate),
            _ => None,
        }
    }

    /// Follower tie-break rank; lower wins (decelerate > deviate > continue).
    fn safety_rank(self) -> u8 {
        match self {
            Strategy::Decelerate => 0,
            Strategy::Deviate => 1,
            Strategy::Continue => 2,
        }
    }

    pub fn feasible_for(kind: AgentKind) -> &'static [Strategy] {
        match kind {
            AgentKind::Vehicle => &[Strategy::Continue, Strategy::Decelerate],
            AgentKind::Pedestrian => &Strategy::ALL,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameError {
    NoVehicle,
    InfeasibleStrategy { player: AgentId, strategy: Strategy },
    EmptyStrategySet { player: AgentId },
    MissingBasePayoff { leader: Strategy, follower: Strategy },
    OrdinalOutOfRange { leader: Strategy, follower: Strategy, value: f64 },
    DimensionMismatch,
    NonFinite,
}

impl fmt::Display for GameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameError::NoVehicle => f.write_str("a game needs at least one vehicle"),
            GameError::InfeasibleStrategy { player, strategy } => {
                write!(f, "strategy {strategy} is not available to agent {player}")
            }
            GameError::EmptyStrategySet { player } => {
                write!(f, "agent {player} has no strategies")
            }
            GameError::MissingBasePayoff { leader, follower } => {
                write!(f, "base payoff table has no entry for ({leader}, {follower})")
            }
            GameError::OrdinalOutOfRange {
                leader,
                follower,
                value,
            } => write!(
                f,
                "base payoff {value} for ({leader}, {follower}) is outside [-100, 4]"
            ),
            GameError::DimensionMismatch => f.write_str("payoff matrix dimensions do not match"),
            GameError::NonFinite => f.write_str("payoff matrix has a non-finite cell"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GameError {}

pub const ORDINAL_MIN: f64 = -100.0;
pub const ORDINAL_MAX: f64 = 4.0;

/// Observable factors of one player α against its counterpart β.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FactorVector {
    /// x1..x11 (index 0 is x1). x9 is set for vehicles and carries `f22`.
    pub x: [bool; 11],
    /// Sampled value of F22 when x9 is set.
    pub f22: f64,
}

impl FactorVector {
    pub fn get(&self, factor: usize) -> bool {
        self.x[factor - 1]
    }

    pub fn set(&mut self, factor: usize, value: bool) {
        self.x[factor - 1] = value;
    }
}

/// Whose payoff an impact F_k shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffOwner {
    /// The player whose factor is active.
    Own,
    /// That player's counterpart.
    Counterpart,
}

/// (F index, factor index, owner, strategy of the owner whose cells shift).
/// Indices are 1-based to match x1..x11 and F1..F26.
pub const IMPACT_MAP: [(usize, usize, PayoffOwner, Strategy); 26] = {
    use PayoffOwner::{Counterpart as O, Own as S};
    use Strategy::{Continue as C, Decelerate as D, Deviate as V};
    [
        (1, 1, S, C),
        (2, 1, S, D),
        (3, 1, S, V),
        (4, 2, S, C),
        (5, 3, S, D),
        (6, 3, S, C),
        (7, 3, S, V),
        (8, 3, O, C),
        (9, 4, S, C),
        (10, 4, S, D),
        (11, 4, O, C),
        (12, 4, O, D),
        (13, 5, S, V),
        (14, 5, S, D),
        (15, 5, S, C),
        (16, 3, O, D),
        (17, 6, S, D),
        (18, 7, S, D),
        (19, 7, S, C),
        (20, 8, S, C),
        (21, 8, S, D),
        (22, 9, S, C),
        (23, 10, O, C),
        (24, 11, O, C),
        (25, 11, S, C),
        (26, 11, S, V),
    ]
};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaseEntry {
    pub leader: Strategy,
    pub follower: Strategy,
    /// (leader ordinal, follower ordinal)
    pub payoffs: [f64; 2],
}

/// Ordinal payoffs for a two-player encounter, leader strategies as rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct BaseTable {
    pub entries: Vec<BaseEntry>,
}

impl BaseTable {
    pub fn lookup(&self, leader: Strategy, follower: Strategy) -> Result<[f64; 2], GameError> {
        self.entries
            .iter()
            .find(|e| e.leader == leader && e.follower == follower)
            .map(|e| e.payoffs)
            .ok_or(GameError::MissingBasePayoff { leader, follower })
    }

    fn from_rows(rows: &[(Strategy, Strategy, f64, f64)]) -> Self {
        Self {
            entries: rows
                .iter()
                .map(|&(leader, follower, l, f)| BaseEntry {
                    leader,
                    follower,
                    payoffs: [l, f],
                })
                .collect(),
        }
    }

    /// Mutual continue is a collision (-100); continuing while the other
    /// yields is worth 4, own deceleration 2, own deviation 1.
    pub fn vehicle_pedestrian_default() -> Self {
        use Strategy::*;
        Self::from_rows(&[
            (Continue, Continue, -100.0, -100.0),
            (Continue, Decelerate, 4.0, 2.0),
            (Continue, Deviate, 4.0, 1.0),
            (Decelerate, Continue, 2.0, 4.0),
            (Decelerate, Decelerate, 2.0, 2.0),
            (Decelerate, Deviate, 2.0, 1.0),
        ])
    }

    pub fn vehicle_vehicle_default() -> Self {
        use Strategy::*;
        Self::from_rows(&[
            (Continue, Continue, -100.0, -100.0),
            (Continue, Decelerate, 4.0, 2.0),
            (Decelerate, Continue, 2.0, 4.0),
            (Decelerate, Decelerate, 2.0, 2.0),
        ])
    }

    /// Every strategy pair must be present with ordinals in [-100, 4].
    pub fn validate(&self, follower_kind: AgentKind) -> Result<(), GameError> {
        for &l in Strategy::feasible_for(AgentKind::Vehicle) {
            for &f in Strategy::feasible_for(follower_kind) {
                let [a, b] = self.lookup(l, f)?;
                for v in [a, b] {
                    if !(ORDINAL_MIN..=ORDINAL_MAX).contains(&v) {
                        return Err(GameError::OrdinalOutOfRange {
                            leader: l,
                            follower: f,
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PayoffParams {
    /// F1..F26 (index 0 is F1). F22 is replaced by a draw from `f22_range`.
    pub f: [f64; 26],
    pub f22_range: [f64; 2],
    /// N: x2 holds while the player has fewer active interactions.
    pub max_active_interactions: usize,
    /// M in meters; `None` means braking distance at current speed + 1 m.
    pub cannot_stop_distance: Option<f64>,
    /// Deceleration (m/s²) used for the automatic M.
    pub braking_deceleration: f64,
    /// x1 holds when β's speed is below this fraction of its desired speed.
    pub slow_speed_ratio: f64,
    pub vehicle_pedestrian: BaseTable,
    pub vehicle_vehicle: BaseTable,
}

impl Default for PayoffParams {
    fn default() -> Self {
        Self {
            f: [
                -1.0, 1.0, 1.0, // x1
                1.0, // x2
                2.0, -2.0, -1.0, 1.0, // x3
                1.0, -1.0, -1.0, 1.0, // x4
                2.0, -1.0, -1.0, // x5
                -1.0, // x3 (counterpart decelerate)
                -1.0, // x6
                -10.0, 2.0, // x7
                1.0, -1.0, // x8
                0.0, // x9, sampled
                4.0, // x10
                -4.0, 1.0, -1.0, // x11
            ],
            f22_range: [-0.5, 0.5],
            max_active_interactions: 3,
            cannot_stop_distance: None,
            braking_deceleration: 4.0,
            slow_speed_ratio: 0.8,
            vehicle_pedestrian: BaseTable::vehicle_pedestrian_default(),
            vehicle_vehicle: BaseTable::vehicle_vehicle_default(),
        }
    }
}

impl PayoffParams {
    pub fn validate(&self) -> Result<(), GameError> {
        self.vehicle_pedestrian.validate(AgentKind::Pedestrian)?;
        self.vehicle_vehicle.validate(AgentKind::Vehicle)?;
        if self.f.iter().chain(self.f22_range.iter()).any(|v| !v.is_finite())
            || self.f22_range[0] > self.f22_range[1]
        {
            return Err(GameError::NonFinite);
        }
        Ok(())
    }

    /// M for a vehicle travelling at `speed`.
    pub fn cannot_stop_threshold(&self, speed: f64) -> f64 {
        self.cannot_stop_distance
            .unwrap_or(speed * speed / (2.0 * self.braking_deceleration) + 1.0)
    }

    fn impact(&self, f_index: usize, factors: &FactorVector) -> f64 {
        if f_index == 22 {
            factors.f22
        } else {
            self.f[f_index - 1]
        }
    }

    /// Total shift of the owner's payoff when it plays `strategy`, given the
    /// owner's own factors and its counterpart's factors.
    pub fn adjustment(
        &self,
        strategy: Strategy,
        own: &FactorVector,
        counterpart: &FactorVector,
    ) -> f64 {
        IMPACT_MAP
            .iter()
            .filter(|(_, _, _, s)| *s == strategy)
            .map(|&(k, factor, owner, _)| {
                let source = match owner {
                    PayoffOwner::Own => own,
                    PayoffOwner::Counterpart => counterpart,
                };
                if source.get(factor) {
                    self.impact(k, source)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Observable situation of α that cannot be read off the two road users.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FactorContext {
    pub active_interactions: usize,
    /// α already stops to give way to another user.
    pub stopping_for_other: bool,
    /// α is a vehicle following another vehicle.
    pub car_following: bool,
    /// α is a vehicle followed by another vehicle.
    pub followed: bool,
    pub in_roundabout: bool,
    /// α leads a group and is in the waiting state.
    pub group_leader_waiting: bool,
    pub in_group: bool,
}

/// Counterclockwise angle in degrees [0, 360) from `heading` to `dir`.
pub fn deviation_angle_degrees(heading: Vec2, dir: Vec2) -> f64 {
    let a = heading.angle_to(dir).to_degrees();
    if a < 0.0 {
        a + 360.0
    } else {
        a
    }
}

/// x5 band test: (58°, 113°] or [247°, 302°).
pub fn short_detour(theta_deg: f64) -> bool {
    (theta_deg > 58.0 && theta_deg <= 113.0) || (247.0..302.0).contains(&theta_deg)
}

pub fn evaluate_factors<R: Rng + ?Sized>(
    alpha: &RoadUser,
    beta: &RoadUser,
    ctx: &FactorContext,
    params: &PayoffParams,
    rng: &mut R,
) -> FactorVector {
    let mut fv = FactorVector::default();
    let vehicle = alpha.is_vehicle();
    fv.set(
        1,
        beta.speed() < params.slow_speed_ratio * beta.desired_speed,
    );
    fv.set(2, ctx.active_interactions < params.max_active_interactions);
    fv.set(3, ctx.stopping_for_other);
    fv.set(4, vehicle && ctx.car_following);
    if alpha.is_pedestrian() {
        if let Some(n) = (beta.position - alpha.position).normalize() {
            fv.set(5, short_detour(deviation_angle_degrees(beta.heading, n)));
        }
    }
    fv.set(6, vehicle && ctx.followed);
    if vehicle {
        let m = params.cannot_stop_threshold(alpha.speed());
        fv.set(7, alpha.position.distance(beta.position) < m);
        fv.set(8, ctx.in_roundabout);
        fv.set(9, true);
        let [lo, hi] = params.f22_range;
        fv.f22 = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    }
    fv.set(10, alpha.is_pedestrian() && ctx.group_leader_waiting);
    fv.set(11, alpha.is_pedestrian() && ctx.in_group);
    fv
}

/// A vehicle leads whenever one takes part; among several vehicles the
/// leader is drawn uniformly.
pub fn select_game_leader<R: Rng + ?Sized>(
    participants: &[(AgentId, AgentKind)],
    rng: &mut R,
) -> Result<AgentId, GameError> {
    let vehicles: Vec<AgentId> = participants
        .iter()
        .filter(|(_, k)| *k == AgentKind::Vehicle)
        .map(|(id, _)| *id)
        .collect();
    match vehicles.len() {
        0 => Err(GameError::NoVehicle),
        1 => Ok(vehicles[0]),
        n => Ok(vehicles[rng.gen_range(0..n)]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    pub id: AgentId,
    pub kind: AgentKind,
    pub strategies: Vec<Strategy>,
}

impl Player {
    pub fn new(id: AgentId, kind: AgentKind) -> Self {
        Self {
            id,
            kind,
            strategies: Strategy::feasible_for(kind).to_vec(),
        }
    }

    fn validate(&self) -> Result<(), GameError> {
        if self.strategies.is_empty() {
            return Err(GameError::EmptyStrategySet { player: self.id });
        }
        let feasible = Strategy::feasible_for(self.kind);
        match self.strategies.iter().find(|s| !feasible.contains(s)) {
            Some(&strategy) => Err(GameError::InfeasibleStrategy {
                player: self.id,
                strategy,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerInput {
    pub player: Player,
    /// Leader's factors evaluated against this follower.
    pub leader_factors: FactorVector,
    /// This follower's factors evaluated against the leader.
    pub follower_factors: FactorVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerPayoffs {
    pub id: AgentId,
    pub strategies: Vec<Strategy>,
    /// `payoffs[row][s]`: payoff of this follower playing its strategy `s`
    /// when the leader plays row `row`. Followers do not affect each other.
    pub payoffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    pub leader: AgentId,
    pub leader_strategies: Vec<Strategy>,
    pub followers: Vec<FollowerPayoffs>,
    /// `leader_payoffs[row][column]`, columns enumerate follower joint
    /// strategies with the first follower varying fastest.
    pub leader_payoffs: Vec<Vec<f64>>,
}

impl PayoffMatrix {
    pub fn new(
        leader: AgentId,
        leader_strategies: Vec<Strategy>,
        followers: Vec<FollowerPayoffs>,
        leader_payoffs: Vec<Vec<f64>>,
    ) -> Result<Self, GameError> {
        let m = Self {
            leader,
            leader_strategies,
            followers,
            leader_payoffs,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.leader_strategies.len()
    }

    pub fn columns(&self) -> usize {
        self.followers.iter().map(|f| f.strategies.len()).product()
    }

    /// Per-follower strategy indices for a joint column.
    pub fn decode_column(&self, mut column: usize) -> Vec<usize> {
        self.followers
            .iter()
            .map(|f| {
                let n = f.strategies.len();
                let s = column % n;
                column /= n;
                s
            })
            .collect()
    }

    pub fn encode_column(&self, choices: &[usize]) -> usize {
        let mut column = 0;
        let mut stride = 1;
        for (f, &c) in self.followers.iter().zip(choices) {
            column += c * stride;
            stride *= f.strategies.len();
        }
        column
    }

    /// (leader payoff, per-follower payoffs) of one cell.
    pub fn cell(&self, row: usize, column: usize) -> (f64, Vec<f64>) {
        let choices = self.decode_column(column);
        let followers = self
            .followers
            .iter()
            .zip(&choices)
            .map(|(f, &c)| f.payoffs[row][c])
            .collect();
        (self.leader_payoffs[row][column], followers)
    }

    fn validate(&self) -> Result<(), GameError> {
        let rows = self.rows();
        if rows == 0 {
            return Err(GameError::EmptyStrategySet {
                player: self.leader,
            });
        }
        let cols = self.columns();
        if self.leader_payoffs.len() != rows
            || self.leader_payoffs.iter().any(|r| r.len() != cols)
        {
            return Err(GameError::DimensionMismatch);
        }
        for f in &self.followers {
            if f.strategies.is_empty() {
                return Err(GameError::EmptyStrategySet { player: f.id });
            }
            if f.payoffs.len() != rows
                || f.payoffs.iter().any(|r| r.len() != f.strategies.len())
            {
                return Err(GameError::DimensionMismatch);
            }
        }
        let finite = self.leader_payoffs.iter().flatten().all(|v| v.is_finite())
            && self
                .followers
                .iter()
                .flat_map(|f| f.payoffs.iter().flatten())
                .all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(GameError::NonFinite)
        }
    }
}

/// Builds the game of `leader` against `followers`: each cell is the base
/// ordinal plus the impacts activated by both players' factor vectors. The
/// leader's payoff in a joint column is the sum of its pairwise payoffs.
pub fn build_payoff_matrix(
    leader: &Player,
    followers: &[FollowerInput],
    params: &PayoffParams,
) -> Result<PayoffMatrix, GameError> {
    leader.validate()?;
    if leader.kind != AgentKind::Vehicle {
        return Err(GameError::NoVehicle);
    }
    // pairwise[f][row][s] = (leader payoff, follower payoff)
    let mut pairwise: Vec<Vec<Vec<(f64, f64)>>> = Vec::with_capacity(followers.len());
    for input in followers {
        input.player.validate()?;
        let table = match input.player.kind {
            AgentKind::Vehicle => &params.vehicle_vehicle,
            AgentKind::Pedestrian => &params.vehicle_pedestrian,
        };
        let mut rows = Vec::with_capacity(leader.strategies.len());
        for &ls in &leader.strategies {
            let lead_adj = params.adjustment(ls, &input.leader_factors, &input.follower_factors);
            let mut row = Vec::with_capacity(input.player.strategies.len());
            for &fs in &input.player.strategies {
                let [l, f] = table.lookup(ls, fs)?;
                let follow_adj =
                    params.adjustment(fs, &input.follower_factors, &input.leader_factors);
                row.push((l + lead_adj, f + follow_adj));
            }
            rows.push(row);
        }
        pairwise.push(rows);
    }

    let follower_payoffs: Vec<FollowerPayoffs> = followers
        .iter()
        .zip(&pairwise)
        .map(|(input, rows)| FollowerPayoffs {
            id: input.player.id,
            strategies: input.player.strategies.clone(),
            payoffs: rows
                .iter()
                .map(|r| r.iter().map(|&(_, f)| f).collect())
                .collect(),
        })
        .collect();

    let mut matrix = PayoffMatrix {
        leader: leader.id,
        leader_strategies: leader.strategies.clone(),
        followers: follower_payoffs,
        leader_payoffs: Vec::new(),
    };
    let cols = matrix.columns();
    let mut leader_payoffs = vec![vec![0.0; cols]; matrix.rows()];
    for (row, out) in leader_payoffs.iter_mut().enumerate() {
        for (col, cell) in out.iter_mut().enumerate() {
            let choices = matrix.decode_column(col);
            *cell = pairwise
                .iter()
                .zip(&choices)
                .map(|(p, &c)| p[row][c].0)
                .sum();
        }
    }
    matrix.leader_payoffs = leader_payoffs;
    matrix.validate()?;
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergSolution {
    pub leader_row: usize,
    pub leader_strategy: Strategy,
    pub follower_choices: Vec<usize>,
    pub follower_strategies: Vec<Strategy>,
    pub leader_payoff: f64,
}

fn best_response(strategies: &[Strategy], payoffs: &[f64]) -> usize {
    let mut best = 0;
    for s in 1..strategies.len() {
        let better = payoffs[s] > payoffs[best]
            || (payoffs[s] == payoffs[best]
                && strategies[s].safety_rank() < strategies[best].safety_rank());
        if better {
            best = s;
        }
    }
    best
}

/// Pure-strategy Stackelberg outcome. Followers best-respond independently
/// to each leader row (ties: decelerate, then deviate, then continue); the
/// leader takes the row with the highest resulting payoff (ties: lowest row).
pub fn solve_stackelberg(m: &PayoffMatrix) -> StackelbergSolution {
    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for row in 0..m.rows() {
        let choices: Vec<usize> = m
            .followers
            .iter()
            .map(|f| best_response(&f.strategies, &f.payoffs[row]))
            .collect();
        let payoff = m.leader_payoffs[row][m.encode_column(&choices)];
        if best.as_ref().is_none_or(|(_, _, p)| payoff > *p) {
            best = Some((row, choices, payoff));
        }
    }
    let (row, choices, payoff) = best.expect("matrix has at least one row");
    StackelbergSolution {
        leader_row: row,
        leader_strategy: m.leader_strategies[row],
        follower_strategies: m
            .followers
            .iter()
            .zip(&choices)
            .map(|(f, &c)| f.strategies[c])
            .collect(),
        follower_choices: choices,
        leader_payoff: payoff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ped(id: u32) -> Player {
        Player::new(AgentId(id), AgentKind::Pedestrian)
    }

    fn car(id: u32) -> Player {
        Player::new(AgentId(id), AgentKind::Vehicle)
    }

    fn follower(player: Player, leader: FactorVector, own: FactorVector) -> FollowerInput {
        FollowerInput {
            player,
            leader_factors: leader,
            follower_factors: own,
        }
    }

    #[test]
    fn no_factors_gives_base_ordinals() {
        let params = PayoffParams::default();
        let m = build_payoff_matrix(
            &car(0),
            &[follower(ped(1), FactorVector::default(), FactorVector::default())],
            &params,
        )
        .unwrap();
        let table = &params.vehicle_pedestrian;
        for (r, &ls) in m.leader_strategies.iter().enumerate() {
            for (c, &fs) in m.followers[0].strategies.iter().enumerate() {
                let (l, f) = m.cell(r, c);
                assert_eq!([l, f[0]], table.lookup(ls, fs).unwrap());
            }
        }
    }

    #[test]
    fn slow_pedestrian_shifts_decelerate_and_continue() {
        let params = PayoffParams::default();
        let mut slow = FactorVector::default();
        slow.set(1, true);
        let base = build_payoff_matrix(
            &car(0),
            &[follower(ped(1), FactorVector::default(), FactorVector::default())],
            &params,
        )
        .unwrap();
        let m = build_payoff_matrix(
            &car(0),
            &[follower(ped(1), FactorVector::default(), slow)],
            &params,
        )
        .unwrap();
        let f = &m.followers[0];
        let b = &base.followers[0];
        for row in 0..m.rows() {
            for (s, strategy) in f.strategies.iter().enumerate() {
                let delta = f.payoffs[row][s] - b.payoffs[row][s];
                let expected = match strategy {
                    Strategy::Continue => params.f[0],
                    Strategy::Decelerate => params.f[1],
                    Strategy::Deviate => params.f[2],
                };
                assert_eq!(delta, expected);
            }
        }
        assert!(params.f[0] < 0.0 && params.f[1] > 0.0);
    }

    // Exhaustive oracle: every profile is checked for follower optimality
    // directly from the definition.
    fn enumerate(m: &PayoffMatrix) -> (usize, Vec<usize>) {
        let mut best: Option<(usize, Vec<usize>, f64)> = None;
        for row in 0..m.rows() {
            for col in 0..m.columns() {
                let choices = m.decode_column(col);
                let (lead, pays) = m.cell(row, col);
                let all_best = m.followers.iter().enumerate().all(|(i, f)| {
                    let mine = pays[i];
                    let s = f.strategies[choices[i]];
                    (0..f.strategies.len()).all(|alt| {
                        let other = f.payoffs[row][alt];
                        let rank = |st: Strategy| match st {
                            Strategy::Decelerate => 0,
                            Strategy::Deviate => 1,
                            Strategy::Continue => 2,
                        };
                        alt == choices[i]
                            || other < mine
                            || (other == mine && rank(s) < rank(f.strategies[alt]))
                    })
                });
                if all_best && best.as_ref().is_none_or(|b| lead > b.2) {
                    best = Some((row, choices, lead));
                }
            }
        }
        let (r, c, _) = best.unwrap();
        (r, c)
    }

    #[test]
    fn two_by_two_enumeration_example() {
        use Strategy::*;
        // Leader rows {continue, decelerate}; follower best responses are
        // decelerate to continue and continue to decelerate.
        let m = PayoffMatrix::new(
            AgentId(0),
            vec![Continue, Decelerate],
            vec![FollowerPayoffs {
                id: AgentId(1),
                strategies: vec![Continue, Decelerate],
                payoffs: vec![vec![-100.0, 2.0], vec![4.0, 1.0]],
            }],
            vec![vec![-100.0, 4.0], vec![2.0, 1.0]],
        )
        .unwrap();
        let sol = solve_stackelberg(&m);
        assert_eq!(sol.leader_strategy, Continue);
        assert_eq!(sol.follower_strategies, vec![Decelerate]);
        assert_eq!(sol.leader_payoff, 4.0);
        assert_eq!(enumerate(&m), (0, vec![1]));
    }

    #[test]
    fn single_strategy_each() {
        let m = PayoffMatrix::new(
            AgentId(0),
            vec![Strategy::Decelerate],
            vec![FollowerPayoffs {
                id: AgentId(1),
                strategies: vec![Strategy::Deviate],
                payoffs: vec![vec![1.0]],
            }],
            vec![vec![3.0]],
        )
        .unwrap();
        let sol = solve_stackelberg(&m);
        assert_eq!(sol.leader_strategy, Strategy::Decelerate);
        assert_eq!(sol.follower_strategies, vec![Strategy::Deviate]);
    }

    #[test]
    fn uniform_leader_payoffs_pick_row_zero() {
        let m = PayoffMatrix::new(
            AgentId(0),
            vec![Strategy::Decelerate, Strategy::Continue],
            vec![FollowerPayoffs {
                id: AgentId(1),
                strategies: vec![Strategy::Continue, Strategy::Decelerate],
                payoffs: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            }],
            vec![vec![2.0, 2.0], vec![2.0, 2.0]],
        )
        .unwrap();
        assert_eq!(solve_stackelberg(&m).leader_row, 0);
    }

    #[test]
    fn follower_ties_prefer_safety() {
        use Strategy::*;
        let m = PayoffMatrix::new(
            AgentId(0),
            vec![Continue],
            vec![FollowerPayoffs {
                id: AgentId(1),
                strategies: vec![Continue, Deviate, Decelerate],
                payoffs: vec![vec![1.0, 1.0, 1.0]],
            }],
            vec![vec![0.0, 0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(solve_stackelberg(&m).follower_strategies, vec![Decelerate]);
    }

    #[test]
    fn cannot_stop_makes_vehicle_continue() {
        use Strategy::*;
        // Constructed so that without x7 the vehicle would yield.
        let mut params = PayoffParams::default();
        params.f[23] = -4.0; // F24
        let mut group_member = FactorVector::default();
        group_member.set(11, true);
        let yielding = build_payoff_matrix(
            &car(0),
            &[follower(ped(1), FactorVector::default(), group_member)],
            &params,
        )
        .unwrap();
        assert_eq!(solve_stackelberg(&yielding).leader_strategy, Decelerate);

        let mut close = FactorVector::default();
        close.set(7, true);
        let m = build_payoff_matrix(&car(0), &[follower(ped(1), close, group_member)], &params)
            .unwrap();
        // enumeration oracle agrees and the decelerate row is penalised
        let (row, _) = enumerate(&m);
        assert_eq!(m.leader_strategies[row], Continue);
        assert_eq!(solve_stackelberg(&m).leader_strategy, Continue);
        let dec = m.leader_strategies.iter().position(|s| *s == Decelerate).unwrap();
        let dec_y = yielding.leader_payoffs[dec][0];
        assert_eq!(m.leader_payoffs[dec][0], dec_y + params.f[17]);
    }

    #[test]
    fn waiting_group_leader_gives_vehicle_priority() {
        let params = PayoffParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut lead = FactorVector::default();
            lead.set(1, true); // waiting leader is slow
            lead.set(2, true);
            lead.set(9, true);
            let [lo, hi] = params.f22_range;
            lead.f22 = rng.gen_range(lo..=hi);
            let mut grp = FactorVector::default();
            grp.set(2, true);
            grp.set(11, true);
            let courtesy =
                build_payoff_matrix(&car(0), &[follower(ped(1), lead, grp)], &params).unwrap();
            assert_eq!(solve_stackelberg(&courtesy).leader_strategy, Strategy::Decelerate);
            grp.set(10, true);
            let waiting =
                build_payoff_matrix(&car(0), &[follower(ped(1), lead, grp)], &params).unwrap();
            let sol = solve_stackelberg(&waiting);
            assert_eq!(sol.leader_strategy, Strategy::Continue);
            assert_eq!(sol.follower_strategies, vec![Strategy::Decelerate]);
        }
    }

    #[test]
    fn leader_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let group_vs_car = [
            (AgentId(3), AgentKind::Pedestrian),
            (AgentId(9), AgentKind::Vehicle),
        ];
        assert_eq!(select_game_leader(&group_vs_car, &mut rng), Ok(AgentId(9)));
        let two_cars = [
            (AgentId(1), AgentKind::Vehicle),
            (AgentId(2), AgentKind::Vehicle),
            (AgentId(5), AgentKind::Pedestrian),
        ];
        let mut seen = [false; 2];
        for _ in 0..100 {
            let l = select_game_leader(&two_cars, &mut rng).unwrap();
            assert_ne!(l, AgentId(5));
            seen[l.index() - 1] = true;
        }
        assert_eq!(seen, [true, true]);
        assert_eq!(
            select_game_leader(&[(AgentId(0), AgentKind::Pedestrian)], &mut rng),
            Err(GameError::NoVehicle)
        );
        // seeded draws are reproducible
        let a: Vec<_> = (0..10)
            .map(|_| select_game_leader(&two_cars, &mut ChaCha8Rng::seed_from_u64(3)).unwrap())
            .collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn x5_bands() {
        assert!(short_detour(90.0));
        assert!(!short_detour(0.0));
        assert!(!short_detour(58.0));
        assert!(short_detour(113.0));
        assert!(short_detour(247.0));
        assert!(!short_detour(302.0));
        let theta = deviation_angle_degrees(Vec2::new(1.0, 0.0), Vec2::new(0.0, -1.0));
        assert!((theta - 270.0).abs() < 1e-9);
    }

    #[test]
    fn factor_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = PayoffParams::default();
        let mut car = RoadUser::vehicle(AgentId(0), Vec2::new(0.0, 5.0), vec![Vec2::new(50.0, 5.0)], 8.0);
        car.velocity = Vec2::new(8.0, 0.0);
        car.heading = Vec2::new(1.0, 0.0);
        let mut p = RoadUser::pedestrian(AgentId(1), Vec2::ZERO, vec![Vec2::new(0.0, 10.0)], 1.3);
        p.velocity = Vec2::new(0.0, 1.3);
        let ctx = FactorContext {
            in_group: true,
            group_leader_waiting: true,
            ..Default::default()
        };
        // car is straight "up" from the pedestrian: 90° from the car heading
        let fp = evaluate_factors(&p, &car, &ctx, &params, &mut rng);
        assert!(fp.get(5));
        assert!(fp.get(10) && fp.get(11));
        assert!(!fp.get(9) && !fp.get(7));
        let fc = evaluate_factors(&car, &p, &FactorContext::default(), &params, &mut rng);
        assert!(fc.get(9));
        assert!(!fc.get(10) && !fc.get(11));
        // 5 m < 8²/8 + 1 = 9 m
        assert!(fc.get(7));
        assert!((params.f22_range[0]..=params.f22_range[1]).contains(&fc.f22));
    }

    #[test]
    fn vehicle_cannot_deviate() {
        let mut bad = car(0);
        bad.strategies.push(Strategy::Deviate);
        assert!(matches!(
            build_payoff_matrix(&bad, &[], &PayoffParams::default()),
            Err(GameError::InfeasibleStrategy { .. })
        ));
    }

    #[test]
    fn base_table_validation() {
        let mut params = PayoffParams::default();
        params.vehicle_pedestrian.entries[1].payoffs[0] = 7.0;
        assert!(matches!(
            params.validate(),
            Err(GameError::OrdinalOutOfRange { .. })
        ));
        let mut params = PayoffParams::default();
        params.vehicle_vehicle.entries.pop();
        assert!(matches!(
            params.validate(),
            Err(GameError::MissingBasePayoff { .. })
        ));
    }
}
