//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

mod common;

use std::collections::HashMap;
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use diffusion_core::exposure::{
    extract_events, Alignment, EventRecord, ExtractConfig, MemeMeta, ProfileIndex,
};
use diffusion_core::graph::FollowerGraph;
use diffusion_core::ingest::{
    build_catalog, format_tsv_line, CatalogConfig, LogReader, MemeKind, ParseMode, ParsedLog, Schema, Window,
};
use diffusion_core::sim::{PlantedMechanism, PlantedTables, SimConfig};
use diffusion_core::stats::*;
use diffusion_core::topics::{alignment, entropy, TopicalProfile, TopicalityClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const MIN_BIN_EVENTS: u64 = 500;
const SIM_SEED: u64 = 1;

struct Plants {
    runs: HashMap<&'static str, Analysis>,
    built: Duration,
}

impl Plants {
    fn new() -> Plants {
        Plants { runs: HashMap::new(), built: Duration::ZERO }
    }

    fn get(&mut self, name: &'static str) -> &Analysis {
        if !self.runs.contains_key(name) {
            let t = Instant::now();
            let mech = PlantedMechanism::preset(name).unwrap();
            let run = analyze(&SimConfig::default(), &mech, SIM_SEED);
            self.built += t.elapsed();
            self.runs.insert(name, run);
        }
        &self.runs[name]
    }
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut events = 0;
    for seed in 0..200 {
        let inst = random_instance(seed);
        let fast = inst.streaming();
        let slow = inst.oracle();
        ensure!(sorted_keys(&fast) == sorted_keys(&slow), "instance {seed} differs from the oracle");
        events += fast.len();
    }
    let el = t.elapsed();
    ensure!(el < Duration::from_secs(10), "took {el:.2?}");
    Ok(format!("200 instances, {events} events identical, {el:.2?}"))
}

fn hand_trace_counts() -> Outcome {
    let (log, graph, catalog, profiles) = hand_trace();
    let metas = diffusion_core::exposure::meme_metas(&catalog, &profiles);
    let mut records = Vec::new();
    extract_events(&log.records, &graph, &catalog, &profiles, &ExtractConfig::default(), |m| {
        records.extend(m.records());
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let tallies = MemeTallies::build(Grid::default(), EventFilter::all(), &metas, records).unwrap();
    let boot = BootstrapConfig { replicates: 0, ..Default::default() };
    let curve = estimate_curve_kappa(&tallies, Pooling::Pooled, &boot).unwrap();
    let got = (curve[1].n_e, curve[1].n_a, curve[2].n_e, curve[2].n_a, curve[1].p);
    ensure!(got == (2, 1, 1, 0, Some(0.5)), "got (N_e1, N_a1, N_e2, N_a2, P1) = {got:?}");
    Ok("N_e(1)=2 N_a(1)=1 N_e(2)=1 N_a(2)=0 P_a(1)=0.5".into())
}

fn random_spool(rng: &mut ChaCha8Rng) -> (Vec<MemeMeta>, Vec<EventRecord>) {
    let memes = rng.random_range(1..=8u32);
    let metas: Vec<MemeMeta> = (0..memes)
        .map(|m| MemeMeta {
            meme: m,
            kind: if rng.random_bool(0.5) { MemeKind::Hashtag } else { MemeKind::Url },
            class: TopicalityClass::Middle,
        })
        .collect();
    let n = rng.random_range(0..400);
    let records = (0..n)
        .map(|_| {
            let aggregate = rng.random_bool(0.1);
            let kappa = if aggregate || rng.random_bool(0.4) { 0 } else { rng.random_range(1..45) };
            EventRecord {
                meme: rng.random_range(0..memes),
                user: if aggregate { rng.random_range(1..60) } else { rng.random() },
                kappa,
                alignment: Alignment::from_raw(rng.random_range(0..=10_000)),
                adopted: !aggregate && rng.random_bool(0.3),
                aggregate,
                user_class: TopicalityClass::Middle,
            }
        })
        .collect();
    (metas, records)
}

fn decomposition_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut cells = 0;
    let mut empty_rows = 0;
    for i in 0..50 {
        let (metas, records) = random_spool(&mut rng);
        let tallies = MemeTallies::build(Grid::default(), EventFilter::all(), &metas, records).unwrap();
        let surface = AdoptionSurface::from_tally(&tallies.pooled());
        let grid = surface.grid;
        let d = match decompose(&surface, false) {
            Ok(d) => d,
            Err(_) => {
                let zero_row: u64 = (0..grid.s_bins).map(|s| surface.cell(0, s).n_e).sum();
                ensure!(zero_row == 0, "spool {i}: decomposition failed with a non-empty κ = 0 row");
                empty_rows += 1;
                continue;
            }
        };
        for k in 0..grid.kappa_bins() {
            for s in 0..grid.s_bins {
                let total = surface.cell(k, s).p;
                match (total, d.external[s], d.internal_surface[grid.cell(k, s)]) {
                    (Some(p), Some(e), Some(i)) => {
                        worst = worst.max((i + e - p).abs());
                        cells += 1;
                    }
                    (Some(_), Some(_), None) => return Err(format!("spool {i}: cell ({k},{s}) lost")),
                    (_, _, Some(_)) => return Err(format!("spool {i}: cell ({k},{s}) invented")),
                    _ => {}
                }
            }
        }
    }
    ensure!(worst <= 1e-12, "max |internal + external - total| = {worst:e}");
    Ok(format!("50 spools, {cells} cells, max residual {worst:e}, {empty_rows} without a κ = 0 row"))
}

/// Per-bin internal probability minus the pooled κ ≥ 1 internal probability.
struct FlatnessGaps<'a> {
    tallies: &'a MemeTallies,
    pooled: Tally,
}

fn gaps(t: &Tally) -> Vec<f64> {
    let bins = t.grid.s_bins;
    match decompose(&AdoptionSurface::from_tally(t), false) {
        Ok(d) => d
            .internal_s
            .iter()
            .map(|x| match (x, d.internal_exposed) {
                (Some(x), Some(m)) => x - m,
                _ => f64::NAN,
            })
            .collect(),
        Err(_) => vec![f64::NAN; bins],
    }
}

impl Resample for FlatnessGaps<'_> {
    fn units(&self) -> usize {
        self.tallies.len()
    }
    fn eval(&self, indices: &[usize]) -> Vec<f64> {
        gaps(&self.tallies.sum_of(indices))
    }
    fn eval_without(&self, unit: usize) -> Vec<f64> {
        gaps(&self.tallies.leave_one_out(&self.pooled, unit))
    }
}

/// Bins with at least `MIN_BIN_EVENTS` events at κ = 0 and at κ ≥ 1.
fn well_populated(t: &Tally, s: usize) -> bool {
    let g = t.grid;
    let zero = t.exposures[g.cell(0, s)];
    let exposed: u64 = (1..g.kappa_bins()).map(|k| t.exposures[g.cell(k, s)]).sum();
    zero >= MIN_BIN_EVENTS && exposed >= MIN_BIN_EVENTS
}

fn internal_recovery(plants: &mut Plants) -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for name in ["logistic-topical", "flat"] {
        let run = plants.get(name);
        let mech = PlantedMechanism::preset(name).unwrap();
        let pooled = run.tallies(EventFilter::all()).pooled();
        let d = decompose(&AdoptionSurface::from_tally(&pooled), false).map_err(|e| e.to_string())?;
        let truth = PlantedTables::new(&mech, Grid::default()).internal_s(&pooled);
        let mut worst = 0.0f64;
        let mut checked = 0;
        let (mut est, mut tru) = (Vec::new(), Vec::new());
        for s in 0..pooled.grid.s_bins {
            if !well_populated(&pooled, s) {
                continue;
            }
            let (Some(e), Some(t)) = (d.internal_s[s], truth[s]) else {
                return Err(format!("{name}: bin {s} populated but undefined"));
            };
            worst = worst.max((e - t).abs());
            checked += 1;
            est.push(e);
            tru.push(t);
        }
        ensure!(checked > 0, "{name}: no bin has {MIN_BIN_EVENTS} events");
        ensure!(worst <= 0.02, "{name}: max |P^i(S) - truth| = {worst:.4} over {checked} bins");
        notes.push(format!("{name} max err {worst:.4} on {checked} bins"));
        if name == "logistic-topical" {
            let rho = spearman(&est, &tru).unwrap_or(f64::NAN);
            ensure!(rho > 0.9, "{name}: Spearman {rho:.3}");
            notes.push(format!("rho {rho:.3}"));
        } else {
            let tallies = run.tallies(EventFilter::all());
            let stat = FlatnessGaps { pooled: tallies.pooled(), tallies: &tallies };
            let cis = bca_ci_multi(&stat, &BootstrapConfig::default()).map_err(|e| e.to_string())?;
            let covered = cis.iter().flatten().filter(|c| c.low <= 0.0 && 0.0 <= c.high).count();
            ensure!(covered >= 16, "{name}: flatness CI covers 0 in only {covered} of {} bins", cis.len());
            notes.push(format!("flat bins covering 0: {covered}/{}", cis.len()));
        }
    }
    let el = start.elapsed();
    ensure!(el < Duration::from_secs(120), "took {el:.2?}");
    Ok(format!("{}, {el:.2?}", notes.join(", ")))
}

fn persistence_signatures(plants: &mut Plants) -> Outcome {
    let boot = BootstrapConfig::default();
    let complex = persistence_with_ci(&plants.get("complex-topical").tallies(EventFilter::all()), false, &boot)
        .map_err(|e| e.to_string())?;
    let simple = persistence_with_ci(&plants.get("simple-flat").tallies(EventFilter::all()), false, &boot)
        .map_err(|e| e.to_string())?;
    let show = |e: &Estimate| format!("{:.3} [{:.3}, {:.3}]", e.value.unwrap_or(f64::NAN), e.ci_low.unwrap_or(f64::NAN), e.ci_high.unwrap_or(f64::NAN));
    ensure!(
        complex.value.is_some_and(|v| v > 1.0) && complex.excludes(1.0),
        "complex plant persistence {}",
        show(&complex)
    );
    ensure!(
        simple.value.is_some_and(|v| v < 1.0) && simple.excludes(1.0),
        "decaying plant persistence {}",
        show(&simple)
    );
    Ok(format!("complex {}, decaying {}", show(&complex), show(&simple)))
}

fn external_recovery(plants: &mut Plants) -> Outcome {
    let mut notes = Vec::new();
    for name in ["external-topical", "logistic-topical", "flat", "complex-topical"] {
        let run = plants.get(name);
        let mech = PlantedMechanism::preset(name).unwrap();
        let pooled = run.tallies(EventFilter::all()).pooled();
        let d = decompose(&AdoptionSurface::from_tally(&pooled), false).map_err(|e| e.to_string())?;
        let truth = PlantedTables::new(&mech, Grid::default()).external;
        let mut worst = 0.0f64;
        let mut checked = 0;
        for s in 0..pooled.grid.s_bins {
            if pooled.exposures[s] < MIN_BIN_EVENTS {
                continue;
            }
            worst = worst.max((d.external[s].unwrap() - truth[s]).abs());
            checked += 1;
        }
        ensure!(checked > 0, "{name}: no κ = 0 bin has {MIN_BIN_EVENTS} events");
        ensure!(worst <= 0.02, "{name}: max |P(0,S) - q_e(S)| = {worst:.4}");
        notes.push(format!("{name} {worst:.4}/{checked}"));
    }
    Ok(format!("max error/bins: {}", notes.join(", ")))
}

fn seed_alignment(plants: &mut Plants) -> Outcome {
    let boot = BootstrapConfig::default();
    let topical = seed_relative_alignment(&plants.get("external-topical").tallies(EventFilter::all()), &boot)
        .map_err(|e| e.to_string())?;
    let flat =
        seed_relative_alignment(&plants.get("flat").tallies(EventFilter::all()), &boot).map_err(|e| e.to_string())?;
    let show = |e: &Estimate| format!("{:.3} [{:.3}, {:.3}]", e.value.unwrap_or(f64::NAN), e.ci_low.unwrap_or(f64::NAN), e.ci_high.unwrap_or(f64::NAN));
    let (s, n) = (topical.seed, topical.nonseed);
    ensure!(
        s.ci_low.is_some_and(|l| l > 1.0) && s.value > n.value,
        "external-topical seed {} vs non-seed {}",
        show(&s),
        show(&n)
    );
    ensure!(
        !flat.seed.excludes(1.0) && !flat.nonseed.excludes(1.0) && flat.seed.value.is_some(),
        "flat seed {} non-seed {}",
        show(&flat.seed),
        show(&flat.nonseed)
    );
    Ok(format!(
        "external-topical seed {} non-seed {}; flat seed {} non-seed {}",
        show(&s),
        show(&n),
        show(&flat.seed),
        show(&flat.nonseed)
    ))
}

fn lda_sanity() -> Outcome {
    let cos = two_topic_recovery(11);
    ensure!(cos >= 0.8, "two-topic cosine {cos:.3}");
    let gap = tiny_corpus_gap(11);
    ensure!(gap <= 0.05, "Gibbs vs exact co-assignment gap {gap:.4}");
    Ok(format!("topic cosine {cos:.3}, posterior gap {gap:.4}"))
}

fn identities() -> Outcome {
    let h = entropy(&[0.01; 100]);
    ensure!((h - 100f64.ln()).abs() <= 1e-9, "uniform entropy {h}");
    let mut one_hot = [0.0; 100];
    one_hot[0] = 1.0;
    ensure!(entropy(&one_hot) == 0.0, "one-hot entropy {}", entropy(&one_hot));
    let a = alignment(&[0.5, 0.5], &[1.0, 0.0]);
    ensure!((a - 0.5f64.sqrt()).abs() <= 1e-12, "alignment {a}");
    let p = TopicalProfile::from_weights(vec![1.0; 100]).unwrap();
    ensure!((p.entropy - h).abs() <= 1e-12, "profile entropy {}", p.entropy);
    Ok(format!("H(uniform) - ln 100 = {:e}, S = {a:.12}", h - 100f64.ln()))
}

fn bca_coverage() -> Outcome {
    let start = Instant::now();
    let (memes, trials, p) = (50usize, 1000u64, 0.1);
    let mix = Beta::new(2.0, 18.0).unwrap();
    let boot = BootstrapConfig::default();
    let mut covered = 0;
    let reps = 500;
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + r);
        let adopted: Vec<u64> = (0..memes)
            .map(|_| Binomial::new(trials, mix.sample(&mut rng)).unwrap().sample(&mut rng))
            .collect();
        let cfg = BootstrapConfig { seed: r, ..boot };
        let ci = bca_ci(
            memes,
            |idx| idx.iter().map(|&i| adopted[i]).sum::<u64>() as f64 / (idx.len() as u64 * trials) as f64,
            &cfg,
        )
        .map_err(|e| e.to_string())?
        .ok_or("undefined interval")?;
        if ci.low <= p && p <= ci.high {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    let el = start.elapsed();
    ensure!((0.92..=0.98).contains(&rate), "coverage {rate:.3}");
    ensure!(el < Duration::from_secs(60), "took {el:.2?}");
    Ok(format!("coverage {rate:.3} over {reps} replications, {el:.2?}"))
}

fn statistical_utilities() -> Outcome {
    let cdf = |xs: &[f64]| EmpiricalCdf::from_samples(xs).unwrap();
    let same = ks_distance(&cdf(&[1.0, 2.0, 3.0]), &cdf(&[1.0, 2.0, 3.0]));
    let disjoint = ks_distance(&cdf(&[1.0, 2.0]), &cdf(&[5.0, 6.0]));
    let tied = ks_distance(&cdf(&[0.0, 0.0, 1.0, 1.0]), &cdf(&[0.0, 1.0, 1.0, 1.0]));
    ensure!(same == 0.0 && disjoint == 1.0, "KS identical {same}, disjoint {disjoint}");
    ensure!((tied - 0.25).abs() < 1e-15, "KS tied {tied}");
    let mw = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    ensure!(mw.exact && (mw.p_value - 0.1).abs() < 1e-12, "MWU {mw:?}");
    Ok(format!("KS 0 / 1 / {tied}, MWU U = {} exact p = {}", mw.u, mw.p_value))
}

/// Peak resident set of this process in kB, when the platform reports it.
fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn reset_peak_rss() -> bool {
    std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

fn throughput() -> Outcome {
    const USERS: u64 = 100_000;
    const TWEETS: u64 = 1_000_000;
    const MEMES: u64 = 2_000;
    const FOLLOWEES: usize = 20;
    const TOPICS: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let edges: Vec<(u64, u64)> = (0..USERS)
        .flat_map(|u| {
            let targets: Vec<u64> = (0..FOLLOWEES).map(|_| rng.random_range(0..USERS)).collect();
            targets.into_iter().filter(move |&v| v != u).map(move |v| (u, v))
        })
        .collect();
    let graph = FollowerGraph::from_edges(edges);
    let mut text = Vec::with_capacity(40 * TWEETS as usize);
    let names: Vec<String> = (0..MEMES).map(|m| format!("#m{m}")).collect();
    for t in 0..TWEETS {
        let user = rng.random_range(0..USERS);
        let tag = rng.random_bool(0.3).then(|| names[rng.random_range(0..MEMES as usize)].as_str());
        let tags: Vec<&str> = tag.into_iter().collect();
        text.extend_from_slice(format_tsv_line(t, user, &tags, &[], &[], "en").as_bytes());
    }
    drop(rng);

    let reset = reset_peak_rss();
    let start = Instant::now();
    let log = ParsedLog::from_reader(LogReader::new(Cursor::new(text), Schema::Tsv, ParseMode::Strict))
        .map_err(|e| e.to_string())?;
    let mut cc = CatalogConfig::new(Window::new(0, TWEETS, TWEETS).unwrap());
    cc.min_adopters = 1;
    let catalog = build_catalog(&log.records, &log.symbols, &cc).map_err(|e| e.to_string())?;
    let mut profiles = ProfileIndex::new(TOPICS);
    let mut prng = ChaCha8Rng::seed_from_u64(13);
    for u in 0..USERS {
        let w: Vec<f64> = (0..TOPICS).map(|_| prng.random::<f64>()).collect();
        profiles.insert_user(u, &TopicalProfile::from_weights(w).unwrap()).unwrap();
    }
    for m in catalog.accepted() {
        let w: Vec<f64> = (0..TOPICS).map(|_| prng.random::<f64>()).collect();
        profiles.insert_meme(m.id, &TopicalProfile::from_weights(w).unwrap()).unwrap();
    }
    let mut events = 0u64;
    let stats = extract_events(&log.records, &graph, &catalog, &profiles, &ExtractConfig::default(), |m| {
        events += m.events.len() as u64;
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let el = start.elapsed();
    let peak = peak_rss_kb();
    ensure!(stats.records as u64 == TWEETS, "processed {} records", stats.records);
    ensure!(el < Duration::from_secs(60), "took {el:.2?}");
    if let Some(kb) = peak {
        ensure!(kb < 2 * 1024 * 1024, "peak memory {} MB", kb / 1024);
    }
    let mem = match peak {
        Some(kb) => format!("peak {} MB{}", kb / 1024, if reset { "" } else { " (whole process)" }),
        None => "peak memory unavailable".into(),
    };
    Ok(format!(
        "{TWEETS} tweets, {} edges, {} memes, {events} events in {el:.2?}, {mem}",
        graph.edge_count(),
        stats.memes
    ))
}

fn main() {
    let mut plants = Plants::new();
    let criteria: Vec<(&str, Box<dyn FnMut(&mut Plants) -> Outcome>)> = vec![
        ("oracle equivalence", Box::new(|_| oracle_equivalence())),
        ("hand-trace fixture", Box::new(|_| hand_trace_counts())),
        ("decomposition identity", Box::new(|_| decomposition_identity())),
        ("planted internal recovery", Box::new(internal_recovery)),
        ("persistence signatures", Box::new(persistence_signatures)),
        ("external-channel recovery", Box::new(external_recovery)),
        ("seed-alignment signature", Box::new(seed_alignment)),
        ("LDA sanity", Box::new(|_| lda_sanity())),
        ("entropy/alignment identities", Box::new(|_| identities())),
        ("BCa coverage", Box::new(|_| bca_coverage())),
        ("statistical utilities", Box::new(|_| statistical_utilities())),
        ("throughput floor", Box::new(|_| throughput())),
    ];
    let mut failed = 0;
    for (i, (name, mut check)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut plants)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("simulated plants built in {:.2?}", plants.built);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
