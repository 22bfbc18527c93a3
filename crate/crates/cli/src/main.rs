//! `diffusion`: the analysis pipeline as subcommands over a shared work directory.

mod analysis;
mod pipeline;
mod simulate;
mod stage;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl From<diffusion_core::Error> for CliError {
    fn from(e: diffusion_core::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "diffusion", version, about = "Topical diffusion analysis over follower graphs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Directory holding every stage's inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// TOML file with flag values; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse the log and graph, and build the meme catalog.
    #[command(args_override_self = true)]
    Ingest(pipeline::IngestArgs),
    /// Fit topic profiles for users and memes.
    #[command(args_override_self = true)]
    Topics(pipeline::TopicsArgs),
    /// Extract exposure events into the event spool.
    #[command(args_override_self = true)]
    Events(pipeline::EventsArgs),
    /// Adoption-probability curves and surfaces.
    #[command(args_override_self = true)]
    Curves(analysis::CurvesArgs),
    /// Split adoption probability into external and internal parts.
    #[command(args_override_self = true)]
    Decompose(analysis::DecomposeArgs),
    /// Persistence of the internal exposure curve per class filter.
    #[command(args_override_self = true)]
    Persistence(analysis::PersistenceArgs),
    /// Distribution comparisons, signatures and the artifact index.
    #[command(args_override_self = true)]
    Report(analysis::ReportArgs),
    /// Generate a synthetic log, graph and truth sidecar.
    #[command(args_override_self = true)]
    Simulate(simulate::SimulateArgs),
}

const SUBCOMMANDS: [&str; 8] = ["ingest", "topics", "events", "curves", "decompose", "persistence", "report", "simulate"];

/// Shared analysis grid flags.
#[derive(Args, Debug, Clone, Copy, Serialize)]
pub struct GridArgs {
    /// Exposure counts above this pool into the top κ bin.
    #[arg(long, default_value_t = 32)]
    pub kappa_max: usize,
    #[arg(long, default_value_t = 20)]
    pub s_bins: usize,
}

impl GridArgs {
    pub fn grid(&self) -> CliResult<diffusion_core::stats::Grid> {
        Ok(diffusion_core::stats::Grid::new(self.kappa_max, self.s_bins)?)
    }
}

#[derive(Args, Debug, Clone, Copy, Serialize)]
pub struct BootArgs {
    /// Meme-level bootstrap replicates (0 disables intervals).
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub boot_seed: u64,
}

impl BootArgs {
    pub fn config(&self) -> diffusion_core::stats::BootstrapConfig {
        diffusion_core::stats::BootstrapConfig {
            replicates: self.replicates,
            level: self.level,
            seed: self.boot_seed,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Hashtag,
    Url,
}

impl KindArg {
    pub fn kind(k: Option<KindArg>) -> Option<diffusion_core::ingest::MemeKind> {
        k.map(|k| match k {
            KindArg::Hashtag => diffusion_core::ingest::MemeKind::Hashtag,
            KindArg::Url => diffusion_core::ingest::MemeKind::Url,
        })
    }
}

/// Flag name/value pairs from the TOML file for `sub`: top-level scalars
/// first, then the `[sub]` table.
fn config_file_args(path: &Path, sub: &str) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config file {}: {e}", path.display())))?;
    let table: toml::Table =
        text.parse().map_err(|e| CliError::config(format!("config file {}: {e}", path.display())))?;
    let mut args = Vec::new();
    let mut push = |key: &str, value: &toml::Value| -> CliResult<()> {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => args.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => args.extend([flag.into(), s.into()]),
            toml::Value::Integer(i) => args.extend([flag.into(), i.to_string().into()]),
            toml::Value::Float(f) => args.extend([flag.into(), f.to_string().into()]),
            other => return Err(CliError::config(format!("config key {key}: unsupported value {other}"))),
        }
        Ok(())
    };
    for (k, v) in &table {
        if !v.is_table() && k != "config" {
            push(k, v)?;
        }
    }
    if let Some(section) = table.get(sub) {
        let section = section
            .as_table()
            .ok_or_else(|| CliError::config(format!("config key {sub} must be a table")))?;
        for (k, v) in section {
            push(k, v)?;
        }
    }
    Ok(args)
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Move the subcommand to the front and splice the config-file flags in
/// right after it, so that every flag given on the command line comes later
/// and wins.
fn expand_argv(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let Some(pos) = argv.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(argv);
    };
    let pos = pos + 1;
    let sub = argv[pos].to_string_lossy().into_owned();
    let mut out = vec![argv[0].clone(), argv[pos].clone()];
    out.extend(config_file_args(&path, &sub)?);
    out.extend(argv[1..pos].iter().cloned());
    out.extend(argv[pos + 1..].iter().cloned());
    Ok(out)
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    let hash = match &cli.command {
        Command::Ingest(a) => pipeline::ingest(g, a)?,
        Command::Topics(a) => pipeline::topics(g, a)?,
        Command::Events(a) => pipeline::events(g, a)?,
        Command::Curves(a) => analysis::curves(g, a)?,
        Command::Decompose(a) => analysis::decompose(g, a)?,
        Command::Persistence(a) => analysis::persistence(g, a)?,
        Command::Report(a) => analysis::report(g, a)?,
        Command::Simulate(a) => simulate::simulate(g, a)?,
    };
    println!("config_hash {hash}");
    Ok(())
}

fn main() -> ExitCode {
    let argv = match expand_argv(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return report_error(e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.global.log_level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(e),
    }
}

fn report_error(e: CliError) -> ExitCode {
    match e {
        CliError::Config(m) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        CliError::Data(m) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
