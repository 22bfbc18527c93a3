use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use diffusion_core::exposure::{
    extract_events, meme_metas, write_events_csv, Eligibility, ExtractConfig, ProfileIndex, SpoolWriter,
};
use diffusion_core::graph::FollowerGraph;
use diffusion_core::ingest::{
    build_catalog, build_noun_bags, parse_log, CatalogConfig, MemeCatalog, Owner, ParseMode, ParsedLog, Schema,
    ShareScope, TimeRange, Window,
};
use diffusion_core::sim::{generate_world, TruthSidecar};
use diffusion_core::topics::{fit_profiles, read_profiles_csv, write_profiles_csv, LdaConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::stage::{sha256_file, Stage};
use crate::{CliError, CliResult, Global};

pub const INGEST_STATE: &str = "ingest.json";
pub const PROFILES: &str = "profiles.csv";
pub const SPOOL: &str = "events.spool";

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaArg {
    Tsv,
    Jsonl,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    #[default]
    FullLog,
    AnalysisWindow,
}

#[derive(Args, Debug, Serialize)]
pub struct IngestArgs {
    /// Tweet log, TSV or JSON lines.
    #[arg(long)]
    #[serde(skip)]
    pub log: PathBuf,
    /// Follower edge list, `follower<TAB>followee` per line.
    #[arg(long)]
    #[serde(skip)]
    pub graph: PathBuf,
    /// Log format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub schema: Option<SchemaArg>,
    /// Abort on malformed or out-of-order lines instead of skipping them.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub emerge_start: Option<u64>,
    #[arg(long)]
    pub emerge_end: Option<u64>,
    #[arg(long)]
    pub analysis_end: Option<u64>,
    /// Start of the topic-modeling range (default: emergence start).
    #[arg(long)]
    pub topic_start: Option<u64>,
    /// End of the topic-modeling range, exclusive (default: emergence end + 1).
    #[arg(long)]
    pub topic_end: Option<u64>,
    #[arg(long, default_value_t = 0.9)]
    pub english_threshold: f64,
    #[arg(long, default_value_t = 100)]
    pub min_adopters: usize,
    /// Tweets counted for a meme's English share.
    #[arg(long, value_enum, default_value_t)]
    pub share_scope: ScopeArg,
    /// Take window defaults from a simulation truth sidecar.
    #[arg(long)]
    #[serde(skip)]
    pub truth: Option<PathBuf>,
}

/// What `ingest` resolved, so later stages can rebuild the same records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestState {
    pub log: PathBuf,
    pub graph: PathBuf,
    pub schema: String,
    pub strict: bool,
    pub catalog: CatalogConfig,
    pub topic_range: TimeRange,
    pub log_sha256: String,
    pub graph_sha256: String,
}

pub struct Ingested {
    pub log: ParsedLog,
    pub graph: FollowerGraph,
    pub catalog: MemeCatalog,
    pub state: IngestState,
}

fn schema_of(name: &str) -> Schema {
    if name == "jsonl" {
        Schema::JsonLines
    } else {
        Schema::Tsv
    }
}

fn mode(strict: bool) -> ParseMode {
    if strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    }
}

fn read_log(state: &IngestState) -> CliResult<ParsedLog> {
    Ok(ParsedLog::from_reader(parse_log(&state.log, schema_of(&state.schema), mode(state.strict))?)?)
}

/// Input map entry: file name → content hash.
pub fn input(inputs: &mut BTreeMap<String, String>, name: &str, path: &Path) -> CliResult<()> {
    inputs.insert(name.to_owned(), sha256_file(path)?);
    Ok(())
}

pub fn require(workdir: &Path, rel: &str, stage: &str) -> CliResult<PathBuf> {
    let p = workdir.join(rel);
    if !p.exists() {
        return Err(CliError::config(format!(
            "{} not found; run `{stage}` with --workdir {} first",
            p.display(),
            workdir.display()
        )));
    }
    Ok(p)
}

pub fn load_ingested(workdir: &Path) -> CliResult<Ingested> {
    let path = require(workdir, INGEST_STATE, "ingest")?;
    let text = std::fs::read_to_string(&path)?;
    let state: IngestState =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if sha256_file(&state.log)? != state.log_sha256 {
        return Err(CliError::data(format!("{} changed since ingest; rerun ingest", state.log.display())));
    }
    let log = read_log(&state)?;
    let cache = require(workdir, "graph.bin", "ingest")?;
    let graph = FollowerGraph::read_cache(BufReader::new(File::open(&cache)?))?;
    let catalog = build_catalog(&log.records, &log.symbols, &state.catalog)?;
    Ok(Ingested { log, graph, catalog, state })
}

pub fn ingest(g: &Global, a: &IngestArgs) -> CliResult<String> {
    let schema = match a.schema {
        Some(SchemaArg::Jsonl) => Schema::JsonLines,
        Some(SchemaArg::Tsv) => Schema::Tsv,
        None => Schema::from_path(&a.log),
    };
    let mut inputs = BTreeMap::new();
    input(&mut inputs, "log", &a.log)?;
    input(&mut inputs, "graph", &a.graph)?;
    let truth = match &a.truth {
        Some(p) => {
            input(&mut inputs, "truth", p)?;
            Some(TruthSidecar::read(p)?)
        }
        None => None,
    };
    let mut stage = Stage::new(&g.workdir, "ingest", a, inputs.clone())?;

    let log = ParsedLog::from_reader(parse_log(&a.log, schema, mode(a.strict))?)?;
    let (first, last) = match (log.first_timestamp(), log.last_timestamp()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(CliError::data(format!("{} holds no readable records", a.log.display()))),
    };
    let base = truth.map_or_else(|| Window::default_for_span(first, last), |t| t.window);
    let window = Window::new(
        a.emerge_start.unwrap_or(base.emergence_start),
        a.emerge_end.unwrap_or(base.emergence_end),
        a.analysis_end.unwrap_or(base.analysis_end),
    )?;
    let topic_range = TimeRange::new(
        a.topic_start.unwrap_or(window.emergence_start),
        a.topic_end.unwrap_or(window.emergence_end + 1),
    );
    if topic_range.start >= topic_range.end {
        return Err(CliError::config("empty topic range"));
    }
    if !(0.0..=1.0).contains(&a.english_threshold) {
        return Err(CliError::config(format!("english threshold {} outside [0, 1]", a.english_threshold)));
    }
    let catalog_config = CatalogConfig {
        window,
        english_threshold: a.english_threshold,
        min_adopters: a.min_adopters,
        share_scope: match a.share_scope {
            ScopeArg::FullLog => ShareScope::FullLog,
            ScopeArg::AnalysisWindow => ShareScope::AnalysisWindow,
        },
    };
    let catalog = build_catalog(&log.records, &log.symbols, &catalog_config)?;
    let graph = FollowerGraph::load_edges(&a.graph)?;

    stage.text("catalog.csv", |w| catalog.write_csv(w))?;
    stage.text("memes.csv", |w| {
        writeln!(w, "meme_id,kind,name")?;
        for (id, kind, name) in log.symbols.memes.iter() {
            writeln!(w, "{id},{kind},{name}")?;
        }
        Ok(())
    })?;
    stage.binary("graph.bin", |w| Ok(graph.write_cache(w)?))?;
    let state = IngestState {
        log: std::fs::canonicalize(&a.log)?,
        graph: std::fs::canonicalize(&a.graph)?,
        schema: if schema == Schema::JsonLines { "jsonl" } else { "tsv" }.into(),
        strict: a.strict,
        catalog: catalog_config,
        topic_range,
        log_sha256: inputs["log"].clone(),
        graph_sha256: inputs["graph"].clone(),
    };
    stage.json(INGEST_STATE, &state)?;
    let s = log.stats;
    stage.finish(json!({
        "records": s.records,
        "malformed_lines": s.malformed,
        "out_of_order_lines": s.out_of_order,
        "memes": catalog.entries().count(),
        "accepted_memes": catalog.accepted_count(),
        "graph_nodes": graph.node_count(),
        "graph_edges": graph.edge_count(),
        "window": window,
    }))
}

#[derive(Args, Debug, Serialize)]
pub struct TopicsArgs {
    /// Number of topics.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Document–topic prior (default 50/K).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, required_unless_present = "profiles_from_truth")]
    pub seed: Option<u64>,
    /// Share of each population classed topical (and non-topical).
    #[arg(long, default_value_t = 0.25)]
    pub quantile: f64,
    /// Average θ over the last n sweeps (0 = final state only).
    #[arg(long, default_value_t = 0)]
    pub average_last_n: usize,
    /// Use the planted profiles of a simulated world instead of fitting LDA.
    #[arg(long)]
    pub profiles_from_truth: bool,
    /// Truth sidecar (default: truth.json in the work directory).
    #[arg(long)]
    #[serde(skip)]
    pub truth: Option<PathBuf>,
}

pub fn topics(g: &Global, a: &TopicsArgs) -> CliResult<String> {
    let mut inputs = BTreeMap::new();
    if a.profiles_from_truth {
        let path = match &a.truth {
            Some(p) => p.clone(),
            None => require(&g.workdir, "truth.json", "simulate")?,
        };
        input(&mut inputs, "truth", &path)?;
        let truth = TruthSidecar::read(&path)?;
        let mut stage = Stage::new(&g.workdir, "topics", &json!({ "profiles_from_truth": true }), inputs)?;
        let rows = generate_world(&truth.config)?.profile_rows();
        stage.text(PROFILES, |w| write_profiles_csv(w, &rows))?;
        return stage.finish(json!({ "source": "planted", "profiles": rows.len(), "topics": truth.config.topics }));
    }

    let state_path = require(&g.workdir, INGEST_STATE, "ingest")?;
    input(&mut inputs, "ingest", &state_path)?;
    let ing = load_ingested(&g.workdir)?;
    let mut stage = Stage::new(&g.workdir, "topics", a, inputs)?;
    let mut config = LdaConfig::new(a.k, a.seed.unwrap_or_default());
    config.iterations = a.iters;
    config.beta = a.beta;
    config.average_last = a.average_last_n;
    if let Some(alpha) = a.alpha {
        config.alpha = alpha;
    }
    let (users, memes) = build_noun_bags(&ing.log.records, ing.state.topic_range);
    let memes: Vec<_> = memes
        .into_iter()
        .filter(|b| matches!(b.owner, Owner::Meme(m) if ing.catalog.is_accepted(m)))
        .collect();
    let fit = fit_profiles(&users, &memes, &ing.log.symbols, &config, a.quantile)?;
    stage.binary("lda.bin", |w| Ok(fit.model.write_checkpoint(w)?))?;
    stage.text(PROFILES, |w| write_profiles_csv(w, &fit.rows))?;
    let degenerate: Vec<&str> = fit.degenerate.iter().map(|k| k.as_str()).collect();
    stage.finish(json!({
        "source": "lda",
        "user_profiles": users.len(),
        "meme_profiles": memes.len(),
        "vocabulary": fit.model.vocab_size(),
        "degenerate_populations": degenerate,
    }))
}

#[derive(ValueEnum, Debug, Clone, Copy, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EligibilityArg {
    /// Profiled users who post inside the analysis window.
    #[default]
    ActiveProfiled,
    /// Every profiled user.
    AllProfiled,
}

#[derive(Args, Debug, Serialize)]
pub struct EventsArgs {
    #[arg(long, value_enum, default_value_t)]
    pub eligibility: EligibilityArg,
    /// Write every κ = 0 event instead of per-meme aggregates.
    #[arg(long)]
    pub materialize_zero: bool,
    /// Also write a human-readable events.csv.
    #[arg(long)]
    pub csv: bool,
    /// Memes extracted concurrently between writes; affects memory only.
    #[arg(long, default_value_t = 64)]
    #[serde(skip)]
    pub chunk: usize,
}

pub fn events(g: &Global, a: &EventsArgs) -> CliResult<String> {
    let mut inputs = BTreeMap::new();
    input(&mut inputs, "ingest", &require(&g.workdir, INGEST_STATE, "ingest")?)?;
    let profiles_path = require(&g.workdir, PROFILES, "topics")?;
    input(&mut inputs, "profiles", &profiles_path)?;
    let ing = load_ingested(&g.workdir)?;
    let rows = read_profiles_csv(BufReader::new(File::open(&profiles_path)?))?;
    let (profiles, skipped) = ProfileIndex::from_rows(&rows, &ing.log.symbols)?;
    let metas = meme_metas(&ing.catalog, &profiles);
    let config = ExtractConfig {
        eligibility: match a.eligibility {
            EligibilityArg::ActiveProfiled => Eligibility::ActiveProfiled,
            EligibilityArg::AllProfiled => Eligibility::AllProfiled,
        },
        materialize_zero: a.materialize_zero,
        chunk: a.chunk,
    };
    let mut stage = Stage::new(&g.workdir, "events", a, inputs)?;
    let mut stats = None;
    let mut dump = Vec::new();
    stage.binary(SPOOL, |w| {
        let mut spool = SpoolWriter::new(w, &metas)?;
        stats = Some(extract_events(&ing.log.records, &ing.graph, &ing.catalog, &profiles, &config, |m| {
            if a.csv {
                dump.extend(m.records());
            }
            spool.write_meme(&m)
        })?);
        spool.finish()?;
        Ok(())
    })?;
    if a.csv {
        stage.text("events.csv", |w| write_events_csv(w, dump))?;
    }
    let s = stats.expect("extraction ran");
    stage.finish(json!({
        "records": s.records,
        "memes": s.memes,
        "memes_without_profile": s.memes_without_profile,
        "eligible_users": s.eligible_users,
        "events": s.events,
        "adoptions": s.adoptions,
        "aggregated_zero_events": s.residual_events,
        "profile_rows_without_meme": skipped,
    }))
}
