use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use shared_space::metrics::deviation;
use shared_space::trajectory::{read_trajectories, write_games_to, write_trajectories};
use shared_space::{demo, load_scenario, OUT_DIR_ENV};
use shared_space_core::engine::{self, TrajectoryLog};
use shared_space_core::Scenario;

#[derive(Parser)]
#[command(name = "shared-space", version, about = "Shared-space traffic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file and write its trajectories.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        max_time: Option<f64>,
    },
    /// Load and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Compare simulated trajectories against a reference recording.
    Compare {
        sim: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// SIM_ID=REF_ID pairs; defaults to matching equal ids.
        #[arg(long = "map", value_parser = parse_pair)]
        mapping: Vec<(String, String)>,
    },
    /// Run one of the bundled scenarios.
    Demo {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(demo::NAMES))]
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| format!("expected SIM_ID=REF_ID, got {s:?}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            max_time,
        } => {
            let loaded = load_scenario(&scenario)?;
            simulate(&loaded.scenario, seed, max_time, &out)
        }
        Command::Validate { scenario } => {
            let loaded = load_scenario(&scenario)?;
            let s = &loaded.scenario;
            println!(
                "{}: ok ({} agents, {} groups, {} obstacles)",
                scenario.display(),
                s.agents.len(),
                s.groups.len(),
                s.world.obstacles.len()
            );
            Ok(())
        }
        Command::Compare {
            sim,
            reference,
            report,
            mapping,
        } => {
            let sim_t = read_trajectories(&sim).with_context(|| format!("reading {}", sim.display()))?;
            let ref_t = read_trajectories(&reference)
                .with_context(|| format!("reading {}", reference.display()))?;
            let result = deviation(&sim_t, &ref_t, &mapping)?;
            let tables = result.render();
            fs::write(&report, &tables).with_context(|| format!("writing {}", report.display()))?;
            let series = series_path(&report);
            fs::write(&series, result.render_series())?;
            print!("{tables}");
            println!("series written to {}", series.display());
            Ok(())
        }
        Command::Demo { name, seed, out } => {
            let Some(scenario) = demo::load(&name) else {
                bail!("unknown demo {name}");
            };
            simulate(&scenario?, seed, None, &out)
        }
    }
}

fn series_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}_series.csv"))
}

fn simulate(scenario: &Scenario, seed: Option<u64>, max_time: Option<f64>, out: &Path) -> Result<()> {
    let seed = seed.unwrap_or(scenario.params.seed);
    let max_time = max_time.unwrap_or(scenario.params.max_time);
    let log = engine::run(scenario, seed, max_time)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let name = if scenario.name.is_empty() { "scenario" } else { &scenario.name };
    let traj = out.join(format!("{name}_trajectories.csv"));
    write_trajectories(&log, &traj)?;
    let games = out.join(format!("{name}_games.csv"));
    write_games_to(&log, fs::File::create(&games)?)?;
    summarize(&log);
    println!("trajectories: {}", traj.display());
    println!("games: {}", games.display());
    if log.timed_out {
        log::warn!("max time reached before every agent arrived");
    }
    Ok(())
}

fn summarize(log: &TrajectoryLog) {
    println!(
        "simulated {:.1} s ({} ticks), {} agents, {} games, {} interactions{}",
        log.ticks as f64 * log.dt,
        log.ticks,
        log.agents.len(),
        log.games.len(),
        log.interactions.len(),
        if log.timed_out { ", timed out" } else { "" }
    );
    for g in &log.games {
        let players: Vec<String> = g
            .players
            .iter()
            .map(|(id, s)| format!("{}={}", log.agents[id.index()].name, s))
            .collect();
        println!(
            "  t={:.1}s game {} leader {}: {}",
            g.time,
            g.interaction,
            log.agents[g.leader.index()].name,
            players.join(" ")
        );
    }
}
