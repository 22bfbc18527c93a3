#![allow(dead_code)]

use std::io::Cursor;

use diffusion_core::exposure::{extract_events, meme_metas, EventRecord, ExtractConfig, MemeMeta, ProfileIndex};
use diffusion_core::ingest::{build_catalog, CatalogConfig, LogReader, MemeCatalog, ParseMode, ParsedLog, Schema};
use diffusion_core::sim::{generate_world, simulate, PlantedMechanism, SimConfig, Simulation, World};
use diffusion_core::stats::{EventFilter, Grid, MemeTallies};

/// A simulated run pushed through parsing, cataloging and event extraction.
pub struct Analysis {
    pub world: World,
    pub sim: Simulation,
    pub log: ParsedLog,
    pub catalog: MemeCatalog,
    pub profiles: ProfileIndex,
    pub metas: Vec<MemeMeta>,
    pub records: Vec<EventRecord>,
}

pub fn parse_tsv(bytes: Vec<u8>) -> ParsedLog {
    ParsedLog::from_reader(LogReader::new(Cursor::new(bytes), Schema::Tsv, ParseMode::Strict)).unwrap()
}

pub fn analyze(config: &SimConfig, mechanism: &PlantedMechanism, seed: u64) -> Analysis {
    let world = generate_world(config).unwrap();
    let sim = simulate(&world, mechanism, config.epochs, seed).unwrap();
    let log = parse_tsv(sim.log_bytes(&world));
    let mut cc = CatalogConfig::new(sim.window);
    cc.min_adopters = 1;
    let catalog = build_catalog(&log.records, &log.symbols, &cc).unwrap();
    let profiles = world.profile_index(&log.symbols).unwrap();
    let metas = meme_metas(&catalog, &profiles);
    let mut records = Vec::new();
    extract_events(&log.records, &world.graph, &catalog, &profiles, &ExtractConfig::default(), |m| {
        records.extend(m.records());
        Ok(())
    })
    .unwrap();
    Analysis { world, sim, log, catalog, profiles, metas, records }
}

impl Analysis {
    pub fn tallies(&self, filter: EventFilter) -> MemeTallies {
        MemeTallies::build(Grid::default(), filter, &self.metas, self.records.iter().copied()).unwrap()
    }
}

use diffusion_core::exposure::{Eligibility, ExposureEvent};
use diffusion_core::graph::FollowerGraph;
use diffusion_core::ingest::Window;
use diffusion_core::topics::{TopicalProfile, TopicalityClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random log, graph and profiles for oracle comparisons.
pub struct Instance {
    pub log: ParsedLog,
    pub graph: FollowerGraph,
    pub catalog: MemeCatalog,
    pub profiles: ProfileIndex,
    pub eligibility: Eligibility,
}

const CLASSES: [TopicalityClass; 3] = [TopicalityClass::Topical, TopicalityClass::Middle, TopicalityClass::NonTopical];

fn random_profile(rng: &mut ChaCha8Rng, k: usize) -> TopicalProfile {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
    let mut p = TopicalProfile::from_weights(w).unwrap();
    p.class = CLASSES[rng.random_range(0..3)];
    p
}

/// Up to 20 users, 5 memes and 50 posts, with frequent timestamp ties.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(2..=20u64);
    let memes = rng.random_range(1..=5usize);
    let posts = rng.random_range(1..=50usize);
    let mut t = rng.random_range(0..5u64);
    let mut text = String::new();
    for _ in 0..posts {
        t += [0, 0, 1, 2][rng.random_range(0..4)];
        let user = rng.random_range(0..users);
        let tags: Vec<String> = (0..memes).filter(|_| rng.random_bool(0.35)).map(|m| format!("#m{m}")).collect();
        let tags: Vec<&str> = tags.iter().map(String::as_str).collect();
        text.push_str(&diffusion_core::ingest::format_tsv_line(t, user, &tags, &[], &["w"], "en"));
    }
    let log = parse_tsv(text.into_bytes());
    let density = rng.random_range(0.05..0.5);
    let mut edges = Vec::new();
    for a in 0..users {
        for b in 0..users {
            if a != b && rng.random_bool(density) {
                edges.push((a, b));
            }
        }
    }
    let graph = FollowerGraph::from_edges(edges);
    let first = log.first_timestamp().unwrap();
    let last = log.last_timestamp().unwrap();
    let window = if rng.random_bool(0.7) {
        Window::new(first, last, last).unwrap()
    } else {
        let a = rng.random_range(first..=last);
        let b = rng.random_range(a..=last);
        let c = rng.random_range(b..=last);
        Window::new(a, b, c).unwrap()
    };
    let mut cc = CatalogConfig::new(window);
    cc.min_adopters = rng.random_range(1..=2);
    cc.english_threshold = 0.0;
    let catalog = build_catalog(&log.records, &log.symbols, &cc).unwrap();
    let k = 3;
    let mut profiles = ProfileIndex::new(k);
    for u in 0..users {
        if rng.random_bool(0.85) {
            let p = random_profile(&mut rng, k);
            profiles.insert_user(u, &p).unwrap();
        }
    }
    for (id, _, _) in log.symbols.memes.iter() {
        if rng.random_bool(0.9) {
            let p = random_profile(&mut rng, k);
            profiles.insert_meme(id, &p).unwrap();
        }
    }
    let eligibility = if rng.random_bool(0.5) { Eligibility::ActiveProfiled } else { Eligibility::AllProfiled };
    Instance { log, graph, catalog, profiles, eligibility }
}

pub fn event_key(e: &ExposureEvent) -> (u32, u64, u32, bool, Option<u64>, u16, &'static str) {
    (e.meme, e.user, e.kappa, e.adopted, e.adoption_time, e.alignment.raw(), e.user_class.as_str())
}

pub fn sorted_keys(events: &[ExposureEvent]) -> Vec<(u32, u64, u32, bool, Option<u64>, u16, &'static str)> {
    let mut k: Vec<_> = events.iter().map(event_key).collect();
    k.sort_unstable();
    k
}

impl Instance {
    pub fn streaming(&self) -> Vec<ExposureEvent> {
        let config = ExtractConfig { eligibility: self.eligibility, materialize_zero: true, chunk: 2 };
        let mut out = Vec::new();
        extract_events(&self.log.records, &self.graph, &self.catalog, &self.profiles, &config, |m| {
            assert!(m.residuals.is_empty());
            out.extend(m.events);
            Ok(())
        })
        .unwrap();
        out
    }

    pub fn oracle(&self) -> Vec<ExposureEvent> {
        diffusion_core::exposure::brute_force_events(
            &self.log.records,
            &self.graph,
            &self.catalog,
            &self.profiles,
            self.eligibility,
        )
        .unwrap()
    }
}

/// The three-user trace: b follows a; c follows a and b; a posts m, then b.
pub fn hand_trace() -> (ParsedLog, FollowerGraph, MemeCatalog, ProfileIndex) {
    let text = "100\t1\t#m\t\tx\ten\n200\t2\t#m\t\tx\ten\n300\t3\t\t\tx\ten\n";
    let log = parse_tsv(text.as_bytes().to_vec());
    // ids: a = 1, b = 2, c = 3; edges are (follower, followee)
    let graph = FollowerGraph::from_edges([(2, 1), (3, 1), (3, 2)]);
    let mut cc = CatalogConfig::new(Window::new(100, 100, 300).unwrap());
    cc.min_adopters = 1;
    let catalog = build_catalog(&log.records, &log.symbols, &cc).unwrap();
    let mut profiles = ProfileIndex::new(2);
    for u in 1..=3 {
        profiles.insert_user(u, &TopicalProfile::from_weights(vec![0.5, 0.5]).unwrap()).unwrap();
    }
    profiles.insert_meme(0, &TopicalProfile::from_weights(vec![0.9, 0.1]).unwrap()).unwrap();
    (log, graph, catalog, profiles)
}

/// P(z_i = z_j) for every token pair under the exact collapsed LDA posterior,
/// enumerating all K^T assignments. Tokens are numbered in document order.
pub fn exhaustive_coassignment(docs: &[Vec<u32>], k: usize, alpha: f64, beta: f64) -> Vec<Vec<f64>> {
    use statrs::function::gamma::ln_gamma;
    let tokens: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.iter().map(move |&w| (d, w as usize)))
        .collect();
    let t = tokens.len();
    let v = docs.iter().flatten().map(|&w| w as usize + 1).max().unwrap_or(0);
    let total = k.pow(t as u32);
    let mut z = vec![0usize; t];
    let mut log_w = Vec::with_capacity(total);
    let mut states = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        for zi in z.iter_mut() {
            *zi = c % k;
            c /= k;
        }
        let mut dk = vec![0usize; docs.len() * k];
        let mut wk = vec![0usize; v * k];
        let mut nk = vec![0usize; k];
        for (&(d, w), &zi) in tokens.iter().zip(&z) {
            dk[d * k + zi] += 1;
            wk[w * k + zi] += 1;
            nk[zi] += 1;
        }
        let mut lp = 0.0;
        for &n in &dk {
            lp += ln_gamma(n as f64 + alpha);
        }
        for &n in &wk {
            lp += ln_gamma(n as f64 + beta);
        }
        for &n in &nk {
            lp -= ln_gamma(n as f64 + v as f64 * beta);
        }
        log_w.push(lp);
        states.push(z.clone());
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let norm: f64 = weights.iter().sum();
    let mut co = vec![vec![0.0; t]; t];
    for (w, s) in weights.iter().zip(&states) {
        for i in 0..t {
            for j in 0..t {
                if s[i] == s[j] {
                    co[i][j] += w / norm;
                }
            }
        }
    }
    co
}

/// Gibbs estimate of the same co-assignment matrix, averaged over sweeps after burn-in.
pub fn gibbs_coassignment(
    corpus: &diffusion_core::topics::Corpus,
    config: &diffusion_core::topics::LdaConfig,
    burn_in: usize,
    sweeps: usize,
) -> Vec<Vec<f64>> {
    let mut sampler = diffusion_core::topics::GibbsSampler::new(corpus, config).unwrap();
    for _ in 0..burn_in {
        sampler.sweep();
    }
    let t = corpus.token_count();
    let mut co = vec![vec![0.0; t]; t];
    for _ in 0..sweeps {
        sampler.sweep();
        let z: Vec<u16> = sampler.assignments().iter().flatten().copied().collect();
        for i in 0..t {
            for j in 0..t {
                if z[i] == z[j] {
                    co[i][j] += 1.0 / sweeps as f64;
                }
            }
        }
    }
    co
}

pub const TINY_CORPUS: [&[u32]; 3] = [&[0, 0, 1], &[1, 2, 2], &[0, 2, 3]];

/// Largest absolute gap between Gibbs and exact co-assignment on [`TINY_CORPUS`].
pub fn tiny_corpus_gap(seed: u64) -> f64 {
    let docs: Vec<Vec<u32>> = TINY_CORPUS.iter().map(|d| d.to_vec()).collect();
    let mut config = diffusion_core::topics::LdaConfig::new(2, seed);
    config.alpha = 0.5;
    config.beta = 0.5;
    let exact = exhaustive_coassignment(&docs, 2, config.alpha, config.beta);
    let corpus = diffusion_core::topics::Corpus::new(docs).unwrap();
    let gibbs = gibbs_coassignment(&corpus, &config, 500, 40_000);
    exact
        .iter()
        .flatten()
        .zip(gibbs.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Two topics over disjoint 20-word vocabularies; returns the worst
/// permutation-matched cosine between fitted and true topic–word vectors.
pub fn two_topic_recovery(seed: u64) -> f64 {
    use diffusion_core::topics::{alignment, fit_lda, Corpus, LdaConfig};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let docs: Vec<Vec<u32>> = (0..200)
        .map(|d| {
            let base = if d % 2 == 0 { 0 } else { 20 };
            (0..40).map(|_| base + rng.random_range(0..20)).collect()
        })
        .collect();
    let corpus = Corpus::new(docs).unwrap();
    let mut config = LdaConfig::new(2, seed);
    config.iterations = 300;
    let model = fit_lda(&corpus, &config).unwrap();
    let truth: Vec<Vec<f64>> = (0..2)
        .map(|k| {
            model
                .vocab()
                .iter()
                .map(|&w| if (w / 20) as usize == k { 1.0 / 20.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let fitted: Vec<Vec<f64>> = (0..2).map(|k| model.topic_word(k)).collect();
    let straight = alignment(&fitted[0], &truth[0]).min(alignment(&fitted[1], &truth[1]));
    let swapped = alignment(&fitted[0], &truth[1]).min(alignment(&fitted[1], &truth[0]));
    straight.max(swapped)
}
