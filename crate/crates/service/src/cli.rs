use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rogue_core::memory::{query, read_log, EpisodeFilter, MemoryError, RogueEpisode};
use rogue_core::mpg::NodeId;
use rogue_core::sim::{self, PlantedParams, Scenario, SimError};
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig};
use crate::ServeError;

#[derive(Debug, Parser)]
#[command(name = "rogue", version, about = "Rogue-variable engine: replay, generate, serve and inspect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a scenario and write its report, trace and episode log.
    Run(RunArgs),
    /// Generate a planted-anomaly scenario.
    Plant(PlantArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// List episodes from a JSON Lines log.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario JSON file, or `case-study`, or `planted` (seeded by --seed).
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Service config file; only its `engine` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for report.json, divergence.csv and episodes.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlantArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 12)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub anomaly: usize,
    #[arg(long, default_value_t = 40)]
    pub onset: u64,
    /// Zero gives a control scenario with no anomaly.
    #[arg(long, default_value_t = 60)]
    pub duration: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub episode_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub actor: Option<String>,
    /// Earliest opening step (inclusive).
    #[arg(long)]
    pub from: Option<u64>,
    /// Latest opening step (inclusive).
    #[arg(long)]
    pub to: Option<u64>,
    /// Keep episodes whose segment contains this node.
    #[arg(long)]
    pub node: Option<String>,
    #[arg(long)]
    pub resolved: Option<bool>,
    /// Print matching records as JSON Lines instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read scenario {path}: {source}")]
    ReadScenario { path: PathBuf, source: std::io::Error },
    #[error("scenario {path}: {source}")]
    ParseScenario { path: PathBuf, source: SimError },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] MemoryError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("cannot start runtime: {0}")]
    Runtime(std::io::Error),
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Plant(a) => plant(a),
        Command::Serve(a) => serve(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn load_scenario(spec: &str, seed: u64) -> Result<Scenario, CliError> {
    match spec {
        "case-study" => Ok(sim::case_study()),
        "planted" => Ok(sim::generate_planted_with(seed, &PlantedParams::default())?),
        path => {
            let path = PathBuf::from(path);
            let text = fs::read_to_string(&path).map_err(|source| CliError::ReadScenario {
                path: path.clone(),
                source,
            })?;
            Scenario::from_json(&text).map_err(|source| CliError::ParseScenario { path, source })
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&a.scenario, a.seed)?;
    let config = ServiceConfig::load(a.config.as_deref())?;
    let replay = sim::replay(&scenario, &config.engine)?;
    let report = &replay.report;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.clone(),
            source,
        })?;
        write(&dir.join("report.json"), report.to_json()?.as_bytes())?;
        let mut csv = Vec::new();
        report.write_trace_csv(&mut csv)?;
        write(&dir.join("divergence.csv"), &csv)?;
        write(&dir.join("episodes.jsonl"), &replay.episode_log()?)?;
    }
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "steps        {}", report.trace.len());
    let _ = writeln!(out, "detections   {}", report.detections.len());
    let _ = writeln!(out, "episodes     {}", replay.episodes.len());
    if let Some(l) = report.detection_latency {
        let _ = writeln!(out, "latency      {l}");
    }
    if let Some(j) = report.segment_jaccard {
        let _ = writeln!(out, "jaccard      {j:.3}");
    }
    Ok(())
}

fn plant(a: PlantArgs) -> Result<(), CliError> {
    let scenario = sim::generate_planted(a.seed, a.nodes, a.anomaly, a.onset, a.duration)?;
    let json = scenario.to_json()?;
    match &a.out {
        Some(path) => write(path, json.as_bytes()),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = ServiceConfig::load(a.config.as_deref())?;
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(l) = a.episode_log {
        config.episode_log = Some(l);
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::Runtime)?;
    eprintln!("listening on 0.0.0.0:{}", config.port);
    rt.block_on(crate::api::serve(config))?;
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<(), CliError> {
    let episodes = read_log(&a.log)?;
    let filter = EpisodeFilter {
        actor_id: a.actor,
        opened_from: a.from,
        opened_to: a.to,
        segment_contains: a.node.map(NodeId::new),
        resolved: a.resolved,
    };
    let hits = query(&episodes, &filter);
    let mut out = std::io::stdout().lock();
    if a.json {
        for e in &hits {
            let _ = writeln!(out, "{}", serde_json::to_string(e).expect("episode serializes"));
        }
    } else {
        let _ = write!(out, "{}", table(&hits));
    }
    Ok(())
}

/// Fixed-width episode table; a header line even when `episodes` is empty.
pub fn table(episodes: &[RogueEpisode]) -> String {
    let mut s = format!(
        "{:<20} {:<16} {:>6} {:>6} {:<8} {}\n",
        "EPISODE", "ACTOR", "OPENED", "CLOSED", "RESOLVED", "SEGMENT"
    );
    for e in episodes {
        let segment: Vec<&str> = e.segment().iter().map(NodeId::as_str).collect();
        s.push_str(&format!(
            "{:<20} {:<16} {:>6} {:>6} {:<8} {}\n",
            e.episode_id,
            e.actor_id,
            e.opened_at,
            e.closed_at,
            e.resolved,
            segment.join(",")
        ));
    }
    s
}
