use std::collections::BTreeMap;

use clap::{Args, ValueEnum};
use diffusion_core::sim::{generate_world, simulate as run_cascades, GraphModel, PlantedMechanism, SimConfig, Simulation};
use serde::Serialize;
use serde_json::json;

use crate::{CliResult, Global, GridArgs};

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphArg {
    Configuration,
    SmallWorld,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Planted mechanism preset.
    #[arg(long, default_value = "complex-topical")]
    pub mechanism: String,
    #[arg(long)]
    pub users: Option<usize>,
    /// Total memes, split evenly between topical and non-topical.
    #[arg(long)]
    pub memes: Option<usize>,
    #[arg(long)]
    pub topical_memes: Option<usize>,
    #[arg(long)]
    pub nontopical_memes: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    /// Maximum adoptions per meme.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub graph_model: Option<GraphArg>,
    /// Root seed for the world and the cascades.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: GridArgs,
}

pub fn simulate(g: &Global, a: &SimulateArgs) -> CliResult<String> {
    let mechanism = PlantedMechanism::preset_or_err(&a.mechanism)?;
    let mut config = SimConfig { seed: a.seed, ..SimConfig::default() };
    if let Some(n) = a.users {
        config.users = n;
    }
    if let Some(n) = a.memes {
        config.topical_memes = n / 2;
        config.nontopical_memes = n - n / 2;
    }
    if let Some(n) = a.topical_memes {
        config.topical_memes = n;
    }
    if let Some(n) = a.nontopical_memes {
        config.nontopical_memes = n;
    }
    if let Some(n) = a.topics {
        config.topics = n;
    }
    if let Some(n) = a.epochs {
        config.epochs = n;
    }
    match a.graph_model {
        Some(GraphArg::SmallWorld) => config.graph = GraphModel::SmallWorld { neighbors: 10, rewire: 0.1 },
        Some(GraphArg::Configuration) => config.graph = GraphModel::default(),
        None => {}
    }
    config.validate()?;
    let grid = a.grid.grid()?;
    let flags = json!({ "sim": config, "mechanism": mechanism, "grid": grid });
    let mut stage = crate::stage::Stage::new(&g.workdir, "simulate", &flags, BTreeMap::new())?;

    let world = generate_world(&config)?;
    let sim = run_cascades(&world, &mechanism, config.epochs, a.seed)?;
    stage.text("log.tsv", |w| sim.write_log(&world, w))?;
    stage.text("graph.tsv", |w| Simulation::write_graph(&world, w))?;
    stage.json("truth.json", &sim.truth(&world, &mechanism, grid))?;
    let adopters: usize = sim.runs.iter().map(|r| r.adopters).sum();
    stage.finish(json!({
        "posts": sim.posts.len(),
        "adoptions": adopters,
        "window": sim.window,
        "graph_edges": world.graph.edge_count(),
    }))
}
