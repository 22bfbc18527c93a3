use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::exposure::ProfileIndex;
use crate::graph::FollowerGraph;
use crate::ingest::{MemeKind, Symbols};
use crate::rng::{self, purpose, StreamRng};
use crate::topics::{classify_topicality, entropy, EntityKind, ProfileRow, TopicalProfile, TopicalityClass};
use crate::{Error, Result, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum GraphModel {
    /// Each user draws a follower count from a power law truncated to
    /// `[min_degree, max_degree]`, then that many distinct followers uniformly.
    Configuration { exponent: f64, min_degree: usize, max_degree: usize },
    /// Ring lattice where each user follows `neighbors` users on each side,
    /// each follow rewired to a uniform target with probability `rewire`.
    SmallWorld { neighbors: usize, rewire: f64 },
}

impl Default for GraphModel {
    fn default() -> Self {
        GraphModel::Configuration {
            exponent: 2.5,
            min_degree: 5,
            max_degree: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub users: usize,
    pub graph: GraphModel,
    pub topics: usize,
    /// Symmetric Dirichlet concentration of user profiles.
    pub user_concentration: f64,
    pub topical_concentration: f64,
    pub nontopical_concentration: f64,
    pub topical_memes: usize,
    pub nontopical_memes: usize,
    /// Maximum adoptions per meme.
    pub epochs: usize,
    pub words_per_topic: usize,
    pub activity_nouns: usize,
    pub adoption_nouns: usize,
    pub start_time: u64,
    /// Topicality quantile used to class planted profiles.
    pub quantile: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            users: 10_000,
            graph: GraphModel::default(),
            topics: 10,
            user_concentration: 0.3,
            topical_concentration: 0.1,
            nontopical_concentration: 10.0,
            topical_memes: 100,
            nontopical_memes: 100,
            epochs: 1_000_000,
            words_per_topic: 20,
            activity_nouns: 30,
            adoption_nouns: 8,
            start_time: 1_244_851_200,
            quantile: 0.25,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn memes(&self) -> usize {
        self.topical_memes + self.nontopical_memes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.users < 2 {
            return bad(format!("need at least 2 users, got {}", self.users));
        }
        if self.users > u32::MAX as usize {
            return bad("user count exceeds u32 range".into());
        }
        if self.topics == 0 || self.topics > u16::MAX as usize {
            return bad(format!("topic count {} out of range", self.topics));
        }
        for (name, c) in [
            ("user", self.user_concentration),
            ("topical meme", self.topical_concentration),
            ("non-topical meme", self.nontopical_concentration),
        ] {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("{name} concentration {c} must be positive"));
            }
        }
        if self.words_per_topic == 0 {
            return bad("words_per_topic must be positive".into());
        }
        match self.graph {
            GraphModel::Configuration { exponent, min_degree, max_degree } => {
                if !(exponent > 1.0) || min_degree == 0 || min_degree > max_degree {
                    return bad(format!(
                        "configuration model needs exponent > 1 and 1 ≤ min_degree ≤ max_degree, got {exponent}, {min_degree}, {max_degree}"
                    ));
                }
            }
            GraphModel::SmallWorld { neighbors, rewire } => {
                if neighbors == 0 || 2 * neighbors >= self.users || !(0.0..=1.0).contains(&rewire) {
                    return bad(format!("small-world model needs 0 < 2·neighbors < users and rewire in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Dirichlet(α, …, α) draw computed in log space, so tiny concentrations
/// don't underflow to all-zero vectors.
pub fn dirichlet(rng: &mut StreamRng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("positive shape");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn power_law_degree(rng: &mut StreamRng, exponent: f64, min: usize, max: usize) -> usize {
    loop {
        let u: f64 = rng.random();
        let d = (min as f64 * (1.0 - u).powf(-1.0 / (exponent - 1.0))).floor();
        if d <= max as f64 {
            return d as usize;
        }
    }
}

fn build_graph(config: &SimConfig) -> FollowerGraph {
    let n = config.users;
    let mut rng = rng::stream(config.seed, purpose::WORLD, 0);
    let mut edges: Vec<(UserId, UserId)> = Vec::new();
    match config.graph {
        GraphModel::Configuration { exponent, min_degree, max_degree } => {
            for v in 0..n {
                let d = power_law_degree(&mut rng, exponent, min_degree, max_degree).min(n - 1);
                for f in index::sample(&mut rng, n - 1, d) {
                    let f = if f >= v { f + 1 } else { f };
                    edges.push((f as UserId, v as UserId));
                }
            }
        }
        GraphModel::SmallWorld { neighbors, rewire } => {
            for v in 0..n {
                for j in 1..=neighbors {
                    for target in [(v + j) % n, (v + n - j) % n] {
                        let t = if rng.random::<f64>() < rewire {
                            let t = rng.random_range(0..n - 1);
                            if t >= v { t + 1 } else { t }
                        } else {
                            target
                        };
                        edges.push((v as UserId, t as UserId));
                    }
                }
            }
        }
    }
    FollowerGraph::from_edges(edges)
}

/// Synthetic population: follower graph, planted topic profiles, and memes.
/// User `i` has external id `i`.
#[derive(Debug)]
pub struct World {
    pub config: SimConfig,
    pub graph: FollowerGraph,
    pub user_theta: Vec<Vec<f64>>,
    pub user_class: Vec<TopicalityClass>,
    /// Topical memes first, then non-topical ones.
    pub meme_theta: Vec<Vec<f64>>,
    pub meme_class: Vec<TopicalityClass>,
    pub meme_planted_topical: Vec<bool>,
    /// Profiles keyed by user id and meme index.
    pub profiles: ProfileIndex,
}

pub fn generate_world(config: &SimConfig) -> Result<World> {
    config.validate()?;
    let graph = build_graph(config);
    let k = config.topics;
    let mut rng = rng::stream(config.seed, purpose::WORLD, 1);
    let user_theta: Vec<Vec<f64>> =
        (0..config.users).map(|_| dirichlet(&mut rng, config.user_concentration, k)).collect();
    let mut rng = rng::stream(config.seed, purpose::WORLD, 2);
    let mut meme_theta = Vec::with_capacity(config.memes());
    let mut meme_planted_topical = Vec::with_capacity(config.memes());
    for m in 0..config.memes() {
        let topical = m < config.topical_memes;
        let c = if topical { config.topical_concentration } else { config.nontopical_concentration };
        meme_theta.push(dirichlet(&mut rng, c, k));
        meme_planted_topical.push(topical);
    }
    let classes = |thetas: &[Vec<f64>]| -> Result<Vec<TopicalityClass>> {
        let h: Vec<f64> = thetas.iter().map(|t| entropy(t)).collect();
        if h.len() < (1.0 / config.quantile).ceil() as usize {
            return Ok(vec![TopicalityClass::Middle; h.len()]);
        }
        Ok(classify_topicality(&h, config.quantile)?.classes)
    };
    let user_class = classes(&user_theta)?;
    let meme_class = classes(&meme_theta)?;

    let mut profiles = ProfileIndex::new(k);
    for (u, theta) in user_theta.iter().enumerate() {
        profiles.insert_user(u as UserId, &profile(theta, user_class[u]))?;
    }
    for (m, theta) in meme_theta.iter().enumerate() {
        profiles.insert_meme(m as u32, &profile(theta, meme_class[m]))?;
    }
    Ok(World {
        config: config.clone(),
        graph,
        user_theta,
        user_class,
        meme_theta,
        meme_class,
        meme_planted_topical,
        profiles,
    })
}

fn profile(theta: &[f64], class: TopicalityClass) -> TopicalProfile {
    let mut p = TopicalProfile::from_weights(theta.to_vec()).expect("non-degenerate draw");
    p.class = class;
    p
}

impl World {
    pub fn meme_name(m: usize) -> String {
        format!("#sim{m}")
    }

    pub fn word(topic: usize, j: usize) -> String {
        format!("t{topic}w{j}")
    }

    /// Planted profiles keyed by the ids interned while parsing the simulated log.
    /// Memes that never appeared in the log are skipped.
    pub fn profile_index(&self, symbols: &Symbols) -> Result<ProfileIndex> {
        let mut index = ProfileIndex::new(self.config.topics);
        for (u, theta) in self.user_theta.iter().enumerate() {
            index.insert_user(u as UserId, &profile(theta, self.user_class[u]))?;
        }
        for (m, theta) in self.meme_theta.iter().enumerate() {
            if let Some(id) = symbols.memes.get(MemeKind::Hashtag, &Self::meme_name(m)) {
                index.insert_meme(id, &profile(theta, self.meme_class[m]))?;
            }
        }
        Ok(index)
    }

    /// Planted profiles as profile CSV rows: users, then every meme.
    pub fn profile_rows(&self) -> Vec<ProfileRow> {
        let users = self.user_theta.iter().enumerate().map(|(u, theta)| ProfileRow {
            entity_id: u.to_string(),
            kind: EntityKind::User,
            profile: profile(theta, self.user_class[u]),
        });
        let memes = self.meme_theta.iter().enumerate().map(|(m, theta)| ProfileRow {
            entity_id: Self::meme_name(m),
            kind: EntityKind::Hashtag,
            profile: profile(theta, self.meme_class[m]),
        });
        users.chain(memes).collect()
    }

    /// `count` nouns drawn from `theta`, each a uniform word of a sampled topic.
    pub(crate) fn draw_nouns(&self, theta: &[f64], count: usize, rng: &mut StreamRng) -> Vec<String> {
        (0..count)
            .map(|_| {
                let mut u: f64 = rng.random();
                let mut topic = theta.len() - 1;
                for (t, &w) in theta.iter().enumerate() {
                    if u < w {
                        topic = t;
                        break;
                    }
                    u -= w;
                }
                Self::word(topic, rng.random_range(0..self.config.words_per_topic))
            })
            .collect()
    }
}
