use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::builder::PossibleValuesParser;
use clap::{Args, ValueEnum};
use diffusion_core::exposure::{EventRecord, MemeMeta, SpoolReader};
use diffusion_core::sim::{planted_truth, PlantedTables, TruthSidecar};
use diffusion_core::stats::{
    decompose as decompose_surface, estimate_curve_kappa, estimate_curve_s, estimate_surface, event_cdfs,
    ks_distance, mann_whitney_u, persistence_with_ci, seed_relative_alignment, topical_user_lift, write_curve_csv,
    AdoptionSurface, CurveBin, EventFilter, Grid, KappaRange, MemeTallies, Pooling, Tally,
};
use diffusion_core::topics::TopicalityClass;
use serde::Serialize;
use serde_json::{json, Value};

use crate::pipeline::{input, require, SPOOL};
use crate::stage::{read_manifest, Stage};
use crate::{BootArgs, CliError, CliResult, Global, GridArgs, KindArg};

/// Every record of the event spool, with its meme table.
struct Events {
    metas: Vec<MemeMeta>,
    records: Vec<EventRecord>,
}

fn load_events(workdir: &Path, inputs: &mut BTreeMap<String, String>) -> CliResult<Events> {
    let path = require(workdir, SPOOL, "events")?;
    input(inputs, "events", &path)?;
    let reader = SpoolReader::new(File::open(&path)?)?;
    let metas = reader.memes().to_vec();
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok(Events { metas, records })
}

fn load_truth(truth: &Option<PathBuf>, inputs: &mut BTreeMap<String, String>) -> CliResult<Option<TruthSidecar>> {
    match truth {
        Some(p) => {
            input(inputs, "truth", p)?;
            Ok(Some(TruthSidecar::read(p)?))
        }
        None => Ok(None),
    }
}

impl Events {
    fn tallies(&self, grid: Grid, filter: EventFilter) -> CliResult<MemeTallies> {
        Ok(MemeTallies::build(grid, filter, &self.metas, self.records.iter().copied())?)
    }
}

fn filter_of(class: &str, kind: Option<KindArg>) -> EventFilter {
    EventFilter::parse(class).expect("validated by clap").with_kind(KindArg::kind(kind))
}

fn label(class: &str, kind: Option<KindArg>) -> String {
    match kind {
        Some(KindArg::Hashtag) => format!("{class}_hashtags"),
        Some(KindArg::Url) => format!("{class}_urls"),
        None => class.to_owned(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn class_parser() -> PossibleValuesParser {
    PossibleValuesParser::new(EventFilter::NAMES)
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum By {
    Kappa,
    S,
    Surface,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeArg {
    #[default]
    All,
    Exposed,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingArg {
    #[default]
    Pooled,
    Macro,
}

#[derive(Args, Debug, Serialize)]
pub struct CurvesArgs {
    /// Curve over exposure count, over alignment, or the joint surface.
    #[arg(long, value_enum, default_value_t = By::Kappa)]
    pub by: By,
    #[arg(long, default_value = "all", value_parser = class_parser())]
    pub class: String,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// κ levels entering an alignment curve.
    #[arg(long, value_enum, default_value_t)]
    pub kappa_range: RangeArg,
    #[arg(long, value_enum, default_value_t)]
    pub pooling: PoolingArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub boot: BootArgs,
    /// Truth sidecar of a simulated run; adds planted-vs-estimate deltas.
    #[arg(long)]
    #[serde(skip)]
    pub truth: Option<PathBuf>,
}

/// Planted probability of each output bin, weighted by the observed exposures
/// of the grid cells the bin covers.
fn planted_bins(truth: &TruthSidecar, pooled: &Tally, by: By, range: KappaRange) -> Vec<Option<f64>> {
    let g = pooled.grid;
    let planted = planted_truth(&truth.mechanism, g);
    let mix = |cells: &mut dyn Iterator<Item = usize>| {
        let (mut w, mut acc) = (0u64, 0.0);
        for c in cells {
            let n = pooled.exposures[c];
            w += n;
            acc += n as f64 * planted.cells[c].p.unwrap_or(0.0);
        }
        (w > 0).then(|| acc / w as f64)
    };
    match by {
        By::Kappa => (0..g.kappa_bins()).map(|k| mix(&mut (0..g.s_bins).map(|s| g.cell(k, s)))).collect(),
        By::S => {
            let first = usize::from(range == KappaRange::Exposed);
            (0..g.s_bins).map(|s| mix(&mut (first..g.kappa_bins()).map(|k| g.cell(k, s)))).collect()
        }
        By::Surface => (0..g.cells()).map(|c| planted.cells[c].p).collect(),
    }
}

fn write_truth_csv(w: &mut dyn Write, bins: &[CurveBin], truth: &[Option<f64>]) -> std::io::Result<()> {
    writeln!(w, "bin_kappa,bin_s_low,bin_s_high,n_e,p,truth,delta")?;
    for (b, t) in bins.iter().zip(truth) {
        let (lo, hi) = b.s_range.map(|(l, h)| (Some(l), Some(h))).unwrap_or((None, None));
        let delta = match (b.p, t) {
            (Some(p), Some(t)) => Some(p - t),
            _ => None,
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.kappa.map(|k| k.to_string()).unwrap_or_default(),
            opt(lo),
            opt(hi),
            b.n_e,
            opt(b.p),
            opt(*t),
            opt(delta)
        )?;
    }
    Ok(())
}

pub fn curves(g: &Global, a: &CurvesArgs) -> CliResult<String> {
    let mut inputs = BTreeMap::new();
    let events = load_events(&g.workdir, &mut inputs)?;
    let truth = load_truth(&a.truth, &mut inputs)?;
    let mut stage = Stage::new(&g.workdir, "curves", a, inputs)?;
    let tallies = events.tallies(a.grid.grid()?, filter_of(&a.class, a.kind))?;
    let pooling = match a.pooling {
        PoolingArg::Pooled => Pooling::Pooled,
        PoolingArg::Macro => Pooling::Macro,
    };
    let range = match a.kappa_range {
        RangeArg::All => KappaRange::All,
        RangeArg::Exposed => KappaRange::Exposed,
    };
    let boot = a.boot.config();
    let bins = match a.by {
        By::Kappa => estimate_curve_kappa(&tallies, pooling, &boot)?,
        By::S => estimate_curve_s(&tallies, range, pooling, &boot)?,
        By::Surface => estimate_surface(&tallies, pooling, &boot)?.cells,
    };
    let by = match a.by {
        By::Kappa => "kappa",
        By::S => "s",
        By::Surface => "surface",
    };
    let name = format!("curves/{by}_{}", label(&a.class, a.kind));
    stage.text(&format!("{name}.csv"), |w| write_curve_csv(w, &bins))?;
    let mut summary = json!({ "memes": tallies.len(), "bins": bins.len(), "file": format!("{name}.csv") });
    if let Some(t) = &truth {
        let planted = planted_bins(t, &tallies.pooled(), a.by, range);
        stage.text(&format!("{name}_truth.csv"), |w| write_truth_csv(w, &bins, &planted))?;
        let worst = bins
            .iter()
            .zip(&planted)
            .filter_map(|(b, t)| Some((b.p? - (*t)?).abs()))
            .fold(0.0, f64::max);
        summary["max_abs_delta"] = json!(worst);
    }
    stage.finish(summary)
}

#[derive(Args, Debug, Serialize)]
pub struct DecomposeArgs {
    #[arg(long, default_value = "all", value_parser = class_parser())]
    pub class: String,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Clamp negative internal probabilities to zero.
    #[arg(long)]
    pub clamp: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Truth sidecar of a simulated run; adds planted columns.
    #[arg(long)]
    #[serde(skip)]
    pub truth: Option<PathBuf>,
}

fn truth_cols(estimate: Option<f64>, truth: Option<Option<f64>>) -> String {
    match truth {
        None => String::new(),
        Some(t) => {
            let delta = estimate.zip(t).map(|(e, t)| e - t);
            format!(",{},{}", opt(t), opt(delta))
        }
    }
}

pub fn decompose(g: &Global, a: &DecomposeArgs) -> CliResult<String> {
    let mut inputs = BTreeMap::new();
    let events = load_events(&g.workdir, &mut inputs)?;
    let truth = load_truth(&a.truth, &mut inputs)?;
    let mut stage = Stage::new(&g.workdir, "decompose", a, inputs)?;
    let grid = a.grid.grid()?;
    let pooled = events.tallies(grid, filter_of(&a.class, a.kind))?.pooled();
    let d = decompose_surface(&AdoptionSurface::from_tally(&pooled), a.clamp)?;
    let tables = truth.as_ref().map(|t| PlantedTables::new(&t.mechanism, grid));
    let extra = if tables.is_some() { ",truth,delta" } else { "" };
    let name = format!("decompose/{}", label(&a.class, a.kind));

    stage.text(&format!("{name}_external.csv"), |w| {
        writeln!(w, "bin_s_low,bin_s_high,n_e,p_external{extra}")?;
        for s in 0..grid.s_bins {
            let (lo, hi) = grid.s_edges(s);
            let t = tables.as_ref().map(|t| Some(t.external[s]));
            writeln!(w, "{lo},{hi},{},{}{}", pooled.exposures[s], opt(d.external[s]), truth_cols(d.external[s], t))?;
        }
        Ok(())
    })?;
    let truth_k = tables.as_ref().map(|t| t.internal_kappa(&pooled));
    stage.text(&format!("{name}_internal_kappa.csv"), |w| {
        writeln!(w, "bin_kappa,n_e,p_internal{extra}")?;
        for k in 0..grid.kappa_bins() {
            let t = truth_k.as_ref().map(|t| t[k]);
            writeln!(w, "{k},{},{}{}", d.kappa_exposures[k], opt(d.internal_kappa[k]), truth_cols(d.internal_kappa[k], t))?;
        }
        Ok(())
    })?;
    let truth_s = tables.as_ref().map(|t| t.internal_s(&pooled));
    stage.text(&format!("{name}_internal_s.csv"), |w| {
        writeln!(w, "bin_s_low,bin_s_high,n_e,p_internal{extra}")?;
        for s in 0..grid.s_bins {
            let (lo, hi) = grid.s_edges(s);
            let n: u64 = (1..grid.kappa_bins()).map(|k| pooled.exposures[grid.cell(k, s)]).sum();
            let t = truth_s.as_ref().map(|t| t[s]);
            writeln!(w, "{lo},{hi},{n},{}{}", opt(d.internal_s[s]), truth_cols(d.internal_s[s], t))?;
        }
        Ok(())
    })?;
    stage.text(&format!("{name}_internal_surface.csv"), |w| {
        writeln!(w, "bin_kappa,bin_s_low,bin_s_high,n_e,p_internal")?;
        for k in 0..grid.kappa_bins() {
            for s in 0..grid.s_bins {
                let (lo, hi) = grid.s_edges(s);
                let c = grid.cell(k, s);
                writeln!(w, "{k},{lo},{hi},{},{}", pooled.exposures[c], opt(d.internal_surface[c]))?;
            }
        }
        Ok(())
    })?;
    stage.finish(json!({
        "internal_exposed": d.internal_exposed,
        "persistence": d.persistence(),
        "negative_cells": d.negative_cells,
        "clamped": d.clamped,
    }))
}

#[derive(Args, Debug, Serialize)]
pub struct PersistenceArgs {
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub clamp: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub boot: BootArgs,
}

pub fn persistence(g: &Global, a: &PersistenceArgs) -> CliResult<String> {
    let mut inputs = BTreeMap::new();
    let events = load_events(&g.workdir, &mut inputs)?;
    let mut stage = Stage::new(&g.workdir, "persistence", a, inputs)?;
    let grid = a.grid.grid()?;
    let boot = a.boot.config();
    let mut rows = Vec::new();
    for name in EventFilter::NAMES {
        let tallies = events.tallies(grid, filter_of(name, a.kind))?;
        rows.push((name, tallies.len(), persistence_with_ci(&tallies, a.clamp, &boot)?));
    }
    stage.text("persistence.csv", |w| {
        writeln!(w, "filter,memes,persistence,ci_low,ci_high")?;
        for (name, memes, e) in &rows {
            writeln!(w, "{name},{memes},{},{},{}", opt(e.value), opt(e.ci_low), opt(e.ci_high))?;
        }
        Ok(())
    })?;
    let summary: BTreeMap<&str, Option<f64>> = rows.iter().map(|(n, _, e)| (*n, e.value)).collect();
    stage.finish(json!(summary))
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub boot: BootArgs,
}

/// Adoption κ and S samples of memes in one class.
fn adoption_samples(events: &Events, class: TopicalityClass, kind: Option<KindArg>) -> (Vec<f64>, Vec<f64>) {
    let filter = EventFilter::memes(class).with_kind(KindArg::kind(kind));
    let admitted: std::collections::HashSet<_> =
        events.metas.iter().filter(|m| filter.admits_meme(m)).map(|m| m.meme).collect();
    events
        .records
        .iter()
        .filter(|r| r.adopted && admitted.contains(&r.meme))
        .flat_map(|r| std::iter::repeat_n((r.kappa as f64, r.alignment.value()), r.weight() as usize))
        .unzip()
}

fn artifact_index(workdir: &Path) -> Vec<Value> {
    let mut out = Vec::new();
    for stage in ["simulate", "ingest", "topics", "events", "curves", "decompose", "persistence"] {
        let Some(m) = read_manifest(workdir, stage) else { continue };
        if let Some(files) = m["outputs"].as_array() {
            for f in files {
                out.push(json!({
                    "stage": stage,
                    "path": f["path"],
                    "sha256": f["sha256"],
                    "config_hash": m["config_hash"],
                }));
            }
        }
    }
    out
}

pub fn report(g: &Global, a: &ReportArgs) -> CliResult<String> {
    let mut inputs = BTreeMap::new();
    let events = load_events(&g.workdir, &mut inputs)?;
    if events.records.is_empty() || events.metas.is_empty() {
        return Err(CliError::data("the event spool holds no events; nothing to report"));
    }
    let mut stage = Stage::new(&g.workdir, "report", a, inputs)?;
    let grid = a.grid.grid()?;
    let boot = a.boot.config();
    let classes = [("topical-memes", TopicalityClass::Topical), ("non-topical-memes", TopicalityClass::NonTopical)];

    let mut cdfs = BTreeMap::new();
    for (name, class) in classes {
        let f = EventFilter::memes(class).with_kind(KindArg::kind(a.kind));
        cdfs.insert(name, event_cdfs(events.records.iter().copied(), &events.metas, &f).ok());
    }
    let ks = match (&cdfs["topical-memes"], &cdfs["non-topical-memes"]) {
        (Some(t), Some(n)) => {
            let pair = |x: &Option<_>, y: &Option<_>| match (x, y) {
                (Some(x), Some(y)) => Some(ks_distance(x, y)),
                _ => None,
            };
            json!({
                "kappa_exposure": ks_distance(&t.kappa_exposure, &n.kappa_exposure),
                "kappa_adoption": pair(&t.kappa_adoption, &n.kappa_adoption),
                "s_exposure": ks_distance(&t.s_exposure, &n.s_exposure),
                "s_adoption": pair(&t.s_adoption, &n.s_adoption),
            })
        }
        _ => Value::Null,
    };
    let (tk, ts) = adoption_samples(&events, TopicalityClass::Topical, a.kind);
    let (nk, ns) = adoption_samples(&events, TopicalityClass::NonTopical, a.kind);
    let mwu = |x: &[f64], y: &[f64]| mann_whitney_u(x, y).ok().map(|m| json!(m));
    let mann_whitney = json!({
        "adoption_kappa": mwu(&tk, &nk),
        "adoption_s": mwu(&ts, &ns),
    });

    let mut seed_alignment = BTreeMap::new();
    let mut persistence = BTreeMap::new();
    for name in ["all", "topical-memes", "non-topical-memes"] {
        let tallies = events.tallies(grid, filter_of(name, a.kind))?;
        seed_alignment.insert(name, json!(seed_relative_alignment(&tallies, &boot)?));
        persistence.insert(name, json!(persistence_with_ci(&tallies, false, &boot)?));
    }
    let mut lift = BTreeMap::new();
    for (name, class) in classes {
        let tallies = events.tallies(grid, EventFilter::memes(class).with_kind(KindArg::kind(a.kind)))?;
        lift.insert(name, json!(topical_user_lift(&tallies, &boot)?));
    }
    let adoptions: u64 = events.records.iter().filter(|r| r.adopted).map(EventRecord::weight).sum();
    let exposures: u64 = events.records.iter().map(EventRecord::weight).sum();
    let report = json!({
        "events": { "memes": events.metas.len(), "exposure_events": exposures, "adoptions": adoptions },
        "cdfs": cdfs,
        "ks_distance": ks,
        "mann_whitney": mann_whitney,
        "seed_relative_alignment": seed_alignment,
        "topical_user_lift": lift,
        "persistence": persistence,
        "artifacts": artifact_index(&g.workdir),
    });
    stage.json("report.json", &report)?;
    stage.finish(json!({ "memes": events.metas.len(), "exposure_events": exposures }))
}
