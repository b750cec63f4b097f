//! Trajectory files: one comma-separated row per agent and tick.

use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;
use shared_space_core::engine::{Sample, TrajectoryLog};
use shared_space_core::Vec2;

pub const COLUMNS: [&str; 9] = [
    "agent_id", "kind", "time", "x", "y", "speed", "fsm_state", "strategy", "group_id",
];

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("agent {agent}: timestamps must be strictly increasing (at t = {time})")]
    NonIncreasing { agent: String, time: f64 },
}

fn fixed(v: f64) -> String {
    // avoid "-0.000000"
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn row(log: &TrajectoryLog, s: &Sample) -> [String; 9] {
    let meta = &log.agents[s.agent.index()];
    [
        meta.name.clone(),
        meta.kind.as_str().to_string(),
        fixed(s.time),
        fixed(s.position.x),
        fixed(s.position.y),
        fixed(s.speed),
        s.fsm.map(|f| f.as_str().to_string()).unwrap_or_default(),
        s.strategy.map(|st| st.as_str().to_string()).unwrap_or_default(),
        meta.group
            .and_then(|g| log.group_names.get(g.0 as usize).cloned())
            .unwrap_or_default(),
    ]
}

pub fn write_trajectories_to<W: Write>(log: &TrajectoryLog, out: W) -> Result<(), TrajectoryError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(COLUMNS)?;
    for s in &log.samples {
        w.write_record(row(log, s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories(log: &TrajectoryLog, path: &Path) -> Result<(), TrajectoryError> {
    let file = std::fs::File::create(path)?;
    write_trajectories_to(log, std::io::BufWriter::new(file))
}

pub fn trajectories_to_string(log: &TrajectoryLog) -> String {
    let mut buf = Vec::new();
    write_trajectories_to(log, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub time: f64,
    pub position: Vec2,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub agent: String,
    pub kind: Option<String>,
    pub points: Vec<TrackPoint>,
}

/// Recorded or simulated trajectories keyed by agent id, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectories {
    pub tracks: Vec<Track>,
}

impl Trajectories {
    pub fn get(&self, agent: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.agent == agent)
    }

    pub fn from_log(log: &TrajectoryLog) -> Self {
        let mut tracks: Vec<Track> = log
            .agents
            .iter()
            .map(|a| Track {
                agent: a.name.clone(),
                kind: Some(a.kind.as_str().to_string()),
                points: Vec::new(),
            })
            .collect();
        for s in &log.samples {
            tracks[s.agent.index()].points.push(TrackPoint {
                time: s.time,
                position: s.position,
                speed: s.speed,
            });
        }
        Self { tracks }
    }
}

#[derive(Deserialize)]
struct Record {
    agent_id: String,
    #[serde(default)]
    kind: Option<String>,
    time: f64,
    x: f64,
    y: f64,
    speed: f64,
}

/// Reads any file with at least the agent_id, time, x, y and speed columns.
pub fn read_trajectories_from<R: Read>(input: R) -> Result<Trajectories, TrajectoryError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Trajectories::default();
    for rec in r.deserialize() {
        let rec: Record = rec?;
        let idx = match out.tracks.iter().position(|t| t.agent == rec.agent_id) {
            Some(i) => i,
            None => {
                out.tracks.push(Track {
                    agent: rec.agent_id.clone(),
                    kind: rec.kind.clone().filter(|k| !k.is_empty()),
                    points: Vec::new(),
                });
                out.tracks.len() - 1
            }
        };
        let track = &mut out.tracks[idx];
        if track.points.last().is_some_and(|p| rec.time <= p.time) {
            return Err(TrajectoryError::NonIncreasing {
                agent: rec.agent_id,
                time: rec.time,
            });
        }
        track.points.push(TrackPoint {
            time: rec.time,
            position: Vec2::new(rec.x, rec.y),
            speed: rec.speed,
        });
    }
    Ok(out)
}

pub fn read_trajectories(path: &Path) -> Result<Trajectories, TrajectoryError> {
    read_trajectories_from(std::fs::File::open(path)?)
}

/// Game events as rows: tick, time, interaction, leader, agent, strategy.
pub fn write_games_to<W: Write>(log: &TrajectoryLog, out: W) -> Result<(), TrajectoryError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["tick", "time", "interaction", "leader", "agent", "strategy"])?;
    for g in &log.games {
        for (agent, strategy) in &g.assignments {
            w.write_record([
                g.tick.to_string(),
                fixed(g.time),
                g.interaction.to_string(),
                log.agents[g.leader.index()].name.clone(),
                log.agents[agent.index()].name.clone(),
                strategy.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
