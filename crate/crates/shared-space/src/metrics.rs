//! Deviation of simulated trajectories from reference recordings.
//!
//! The reference is linearly interpolated at the simulated timestamps that
//! fall inside its time range; deviations are averaged over those
//! timestamps per agent, and per kind over the agents of that kind.

use std::fmt::Write as _;

use crate::trajectory::{Track, TrackPoint, Trajectories};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("agent {0} not found in simulated trajectories")]
    MissingSim(String),
    #[error("agent {0} not found in reference trajectories")]
    MissingReference(String),
    #[error("time ranges of {sim} and {reference} do not overlap")]
    NoOverlap { sim: String, reference: String },
}

/// One matched timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationPoint {
    pub time: f64,
    pub position_error: f64,
    pub speed_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentDeviation {
    pub agent: String,
    pub reference: String,
    pub kind: String,
    pub trajectory: f64,
    pub speed: f64,
    pub series: Vec<DeviationPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KindDeviation {
    pub kind: String,
    pub agents: usize,
    pub trajectory: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationReport {
    pub agents: Vec<AgentDeviation>,
    pub kinds: Vec<KindDeviation>,
}

/// Reference state at `time` by linear interpolation, if inside its range.
pub fn interpolate(track: &[TrackPoint], time: f64) -> Option<TrackPoint> {
    let first = track.first()?;
    let last = track.last()?;
    if time < first.time || time > last.time {
        return None;
    }
    let k = track.partition_point(|p| p.time < time);
    if track[k].time == time {
        return Some(track[k]);
    }
    let (a, b) = (track[k - 1], track[k]);
    let s = (time - a.time) / (b.time - a.time);
    Some(TrackPoint {
        time,
        position: a.position.lerp(b.position, s),
        speed: a.speed + (b.speed - a.speed) * s,
    })
}

pub fn compare_tracks(sim: &Track, reference: &Track) -> Result<AgentDeviation, MetricsError> {
    let series: Vec<DeviationPoint> = sim
        .points
        .iter()
        .filter_map(|p| {
            let r = interpolate(&reference.points, p.time)?;
            Some(DeviationPoint {
                time: p.time,
                position_error: p.position.distance(r.position),
                speed_error: (p.speed - r.speed).abs(),
            })
        })
        .collect();
    if series.is_empty() {
        return Err(MetricsError::NoOverlap {
            sim: sim.agent.clone(),
            reference: reference.agent.clone(),
        });
    }
    let n = series.len() as f64;
    Ok(AgentDeviation {
        agent: sim.agent.clone(),
        reference: reference.agent.clone(),
        kind: sim
            .kind
            .clone()
            .or_else(|| reference.kind.clone())
            .unwrap_or_else(|| "unknown".into()),
        trajectory: series.iter().map(|d| d.position_error).sum::<f64>() / n,
        speed: series.iter().map(|d| d.speed_error).sum::<f64>() / n,
        series,
    })
}

/// Compares the `(simulated, reference)` id pairs in `mapping`; with no
/// mapping every simulated agent is matched to the reference of the same id.
pub fn deviation(
    sim: &Trajectories,
    reference: &Trajectories,
    mapping: &[(String, String)],
) -> Result<DeviationReport, MetricsError> {
    let pairs: Vec<(String, String)> = if mapping.is_empty() {
        sim.tracks
            .iter()
            .map(|t| (t.agent.clone(), t.agent.clone()))
            .collect()
    } else {
        mapping.to_vec()
    };
    let mut report = DeviationReport::default();
    for (s, r) in &pairs {
        let st = sim.get(s).ok_or_else(|| MetricsError::MissingSim(s.clone()))?;
        let rt = reference
            .get(r)
            .ok_or_else(|| MetricsError::MissingReference(r.clone()))?;
        report.agents.push(compare_tracks(st, rt)?);
    }
    for a in &report.agents {
        if !report.kinds.iter().any(|k| k.kind == a.kind) {
            let members: Vec<&AgentDeviation> =
                report.agents.iter().filter(|b| b.kind == a.kind).collect();
            let n = members.len() as f64;
            report.kinds.push(KindDeviation {
                kind: a.kind.clone(),
                agents: members.len(),
                trajectory: members.iter().map(|m| m.trajectory).sum::<f64>() / n,
                speed: members.iter().map(|m| m.speed).sum::<f64>() / n,
            });
        }
    }
    Ok(report)
}

pub fn trajectory_deviation(
    sim: &Trajectories,
    reference: &Trajectories,
    mapping: &[(String, String)],
) -> Result<Vec<(String, f64)>, MetricsError> {
    Ok(deviation(sim, reference, mapping)?
        .agents
        .into_iter()
        .map(|a| (a.agent, a.trajectory))
        .collect())
}

pub fn speed_deviation(
    sim: &Trajectories,
    reference: &Trajectories,
    mapping: &[(String, String)],
) -> Result<Vec<(String, f64)>, MetricsError> {
    Ok(deviation(sim, reference, mapping)?
        .agents
        .into_iter()
        .map(|a| (a.agent, a.speed))
        .collect())
}

impl DeviationReport {
    /// Human-readable tables.
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# per agent").unwrap();
        writeln!(s, "agent,reference,kind,samples,trajectory_m,speed_mps").unwrap();
        for a in &self.agents {
            writeln!(
                s,
                "{},{},{},{},{:.6},{:.6}",
                a.agent,
                a.reference,
                a.kind,
                a.series.len(),
                a.trajectory,
                a.speed
            )
            .unwrap();
        }
        writeln!(s, "\n# per kind").unwrap();
        writeln!(s, "kind,agents,trajectory_m,speed_mps").unwrap();
        for k in &self.kinds {
            writeln!(s, "{},{},{:.6},{:.6}", k.kind, k.agents, k.trajectory, k.speed).unwrap();
        }
        s
    }

    /// Plot-ready series: agent, time, position error, speed error.
    pub fn render_series(&self) -> String {
        let mut s = String::from("agent,time,position_error,speed_error\n");
        for a in &self.agents {
            for p in &a.series {
                writeln!(
                    s,
                    "{},{:.6},{:.6},{:.6}",
                    a.agent, p.time, p.position_error, p.speed_error
                )
                .unwrap();
            }
        }
        s
    }
}
