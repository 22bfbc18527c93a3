use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mechanism::PlantedMechanism;
use super::truth::PlantedTables;
use super::world::{SimConfig, World};
use crate::ingest::{format_tsv_line, Window};
use crate::rng::{self, purpose, StreamRng};
use crate::stats::Grid;
use crate::topics::TopicalityClass;
use crate::{Error, Result, UserId};

/// One simulated post. `meme` is `None` for the activity post every user makes
/// at the start of the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Post {
    pub timestamp: u64,
    pub meme: Option<u32>,
    pub user: UserId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemeRun {
    pub adopters: usize,
    /// Adoptions drawn at κ = 0, not counting the origin.
    pub seeds: usize,
    /// Pending adoptions cut short by an exposure (cycle breaks only).
    pub preempted: usize,
    /// Pending adoptions left when the epoch limit hit.
    pub truncated: usize,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub posts: Vec<Post>,
    pub window: Window,
    pub runs: Vec<MemeRun>,
    pub epochs: usize,
    pub seed: u64,
}

const IDLE: u8 = 0;
const PENDING: u8 = 1;
const ADOPTED: u8 = 2;
const NONE: u32 = u32::MAX;

struct Cascade<'w> {
    world: &'w World,
    mechanism: &'w PlantedMechanism,
    followers: &'w [Vec<u32>],
    followees: &'w [Vec<u32>],
    alignment: Vec<f64>,
    state: Vec<u8>,
    kappa: Vec<u32>,
    /// Pending followers of each user: adopting a user with any would cut their level short.
    pending_followers: Vec<u32>,
    free: Vec<u32>,
    free_pos: Vec<u32>,
    pending: usize,
    run: MemeRun,
}

impl Cascade<'_> {
    fn draw(&mut self, u: u32, rng: &mut StreamRng) {
        let i = u as usize;
        let p = self.mechanism.adoption_probability(self.kappa[i], self.alignment[i], self.world.user_class[i]);
        if rng.random::<f64>() < p {
            if self.kappa[i] == 0 {
                self.run.seeds += 1;
            }
            self.make_pending(u);
        }
    }

    fn add_free(&mut self, u: u32) {
        self.free_pos[u as usize] = self.free.len() as u32;
        self.free.push(u);
    }

    fn remove_free(&mut self, u: u32) {
        let pos = self.free_pos[u as usize];
        if pos == NONE {
            return;
        }
        let last = self.free.pop().expect("non-empty");
        if last != u {
            self.free[pos as usize] = last;
            self.free_pos[last as usize] = pos;
        }
        self.free_pos[u as usize] = NONE;
    }

    fn make_pending(&mut self, u: u32) {
        self.state[u as usize] = PENDING;
        self.pending += 1;
        for &x in self.followees[u as usize].iter() {
            self.pending_followers[x as usize] += 1;
            if self.state[x as usize] == PENDING && self.pending_followers[x as usize] == 1 {
                self.remove_free(x);
            }
        }
        if self.pending_followers[u as usize] == 0 {
            self.add_free(u);
        }
    }

    fn unpend(&mut self, u: u32, to: u8) {
        self.state[u as usize] = to;
        self.pending -= 1;
        self.remove_free(u);
        for &x in self.followees[u as usize].iter() {
            self.pending_followers[x as usize] -= 1;
            if self.state[x as usize] == PENDING && self.pending_followers[x as usize] == 0 {
                self.add_free(x);
            }
        }
    }

    fn next_adopter(&self, rng: &mut StreamRng) -> u32 {
        if !self.free.is_empty() {
            return self.free[rng.random_range(0..self.free.len())];
        }
        // every pending user would preempt someone: take the least disruptive
        (0..self.state.len() as u32)
            .filter(|&u| self.state[u as usize] == PENDING)
            .min_by_key(|&u| self.pending_followers[u as usize])
            .expect("pending users exist")
    }

    fn adopt(&mut self, x: u32, t: u64, meme: u32, posts: &mut Vec<Post>, rng: &mut StreamRng) {
        if self.state[x as usize] == PENDING {
            self.unpend(x, ADOPTED);
        } else {
            self.state[x as usize] = ADOPTED;
        }
        posts.push(Post { timestamp: t, meme: Some(meme), user: x as UserId });
        for &f in self.followers[x as usize].iter() {
            match self.state[f as usize] {
                ADOPTED => continue,
                PENDING => {
                    self.run.preempted += 1;
                    self.unpend(f, IDLE);
                }
                _ => {}
            }
            self.kappa[f as usize] += 1;
            self.draw(f, rng);
        }
    }

    fn run(mut self, birth: u64, epochs: usize, meme: u32, rng: &mut StreamRng) -> (Vec<Post>, MemeRun) {
        let origin = rng.random_range(0..self.state.len() as u32);
        self.state[origin as usize] = ADOPTED;
        for u in 0..self.state.len() as u32 {
            if u != origin {
                self.draw(u, rng);
            }
        }
        let mut posts = Vec::new();
        self.adopt(origin, birth, meme, &mut posts, rng);
        while self.pending > 0 && posts.len() < epochs {
            let x = self.next_adopter(rng);
            let t = birth + posts.len() as u64;
            self.adopt(x, t, meme, &mut posts, rng);
        }
        self.run.truncated = self.pending;
        self.run.adopters = posts.len();
        (posts, self.run)
    }
}

/// Run every meme of `world` under `mechanism`.
///
/// Each user sits at an exposure level until a followee adopts. On entering a
/// level (κ = 0 at the meme's birth, then at every exposure) the user decides
/// once whether they will adopt before the next exposure. Decided users adopt
/// one per second; a user is picked so that no other decided user is exposed
/// first, which keeps each level's outcome equal to its planted draw. Each meme
/// starts from one uniformly chosen origin poster, who makes no draw.
pub fn simulate(world: &World, mechanism: &PlantedMechanism, epochs: usize, seed: u64) -> Result<Simulation> {
    mechanism.validate()?;
    if epochs == 0 {
        return Err(Error::config("epochs must be positive"));
    }
    let cfg = &world.config;
    let n = cfg.users;
    let g = &world.graph;
    let mut followers = vec![Vec::new(); n];
    let mut followees = vec![Vec::new(); n];
    for d in 0..g.node_count() as u32 {
        let u = g.external_id(d) as usize;
        followers[u] = g.followers_dense(d).iter().map(|&f| g.external_id(f) as u32).collect();
        followees[u] = g.followees_dense(d).iter().map(|&f| g.external_id(f) as u32).collect();
    }
    let memes = cfg.memes();
    let start = cfg.start_time;
    let results: Vec<(Vec<Post>, MemeRun)> = (0..memes as u32)
        .into_par_iter()
        .map(|m| {
            let mut rng = rng::stream(seed, purpose::CASCADE, m as u64);
            let alignment = (0..n as u32)
                .map(|u| world.profiles.alignment_at(u, m).value())
                .collect();
            let cascade = Cascade {
                world,
                mechanism,
                followers: &followers,
                followees: &followees,
                alignment,
                state: vec![IDLE; n],
                kappa: vec![0; n],
                pending_followers: vec![0; n],
                free: Vec::new(),
                free_pos: vec![NONE; n],
                pending: 0,
                run: MemeRun::default(),
            };
            cascade.run(start + 1 + m as u64, epochs, m, &mut rng)
        })
        .collect();

    let mut posts: Vec<Post> = (0..n as UserId).map(|u| Post { timestamp: start, meme: None, user: u }).collect();
    let mut runs = Vec::with_capacity(memes);
    for (p, r) in results {
        posts.extend(p);
        if r.truncated > 0 {
            log::warn!("epoch limit left {} pending adoptions unrealized", r.truncated);
        }
        runs.push(r);
    }
    posts.sort_unstable();
    let last = posts.last().map_or(start, |p| p.timestamp);
    Ok(Simulation {
        posts,
        window: Window::new(start, start + memes as u64, last.max(start + memes as u64))?,
        runs,
        epochs,
        seed,
    })
}

impl Simulation {
    /// Serialize the log in the TSV schema. Nouns are drawn per post from
    /// dedicated streams, so output does not depend on write order.
    pub fn write_log<W: Write>(&self, world: &World, mut w: W) -> std::io::Result<()> {
        let cfg = &world.config;
        for p in &self.posts {
            let (theta, count, index) = match p.meme {
                None => (&world.user_theta[p.user as usize], cfg.activity_nouns, p.user),
                Some(m) => (
                    &world.meme_theta[m as usize],
                    cfg.adoption_nouns,
                    ((m as u64 + 1) << 32) | p.user,
                ),
            };
            let mut rng = rng::stream(self.seed, purpose::WORDS, index);
            let nouns = world.draw_nouns(theta, count, &mut rng);
            let nouns: Vec<&str> = nouns.iter().map(String::as_str).collect();
            let tag = p.meme.map(|m| World::meme_name(m as usize));
            let tags: Vec<&str> = tag.iter().map(String::as_str).collect();
            w.write_all(format_tsv_line(p.timestamp, p.user, &tags, &[], &nouns, "en").as_bytes())?;
        }
        Ok(())
    }

    pub fn log_bytes(&self, world: &World) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_log(world, &mut out).expect("writing to memory");
        out
    }

    /// Follower edge list, `follower \t followee`.
    pub fn write_graph<W: Write>(world: &World, mut w: W) -> std::io::Result<()> {
        let g = &world.graph;
        for d in 0..g.node_count() as u32 {
            let followee = g.external_id(d);
            for &f in g.followers_dense(d) {
                writeln!(w, "{}\t{}", g.external_id(f), followee)?;
            }
        }
        Ok(())
    }

    pub fn truth(&self, world: &World, mechanism: &PlantedMechanism, grid: Grid) -> TruthSidecar {
        let tables = PlantedTables::new(mechanism, grid);
        TruthSidecar {
            config: world.config.clone(),
            mechanism: mechanism.clone(),
            epochs: self.epochs,
            cascade_seed: self.seed,
            window: self.window,
            grid,
            external: tables.external,
            internal: tables.internal.chunks(grid.s_bins).map(<[f64]>::to_vec).collect(),
            memes: self
                .runs
                .iter()
                .enumerate()
                .map(|(m, r)| MemeTruth {
                    name: World::meme_name(m),
                    planted_topical: world.meme_planted_topical[m],
                    class: world.meme_class[m],
                    run: *r,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemeTruth {
    pub name: String,
    pub planted_topical: bool,
    pub class: TopicalityClass,
    #[serde(flatten)]
    pub run: MemeRun,
}

/// Everything needed to rebuild a simulated world and score estimates against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub config: SimConfig,
    pub mechanism: PlantedMechanism,
    pub epochs: usize,
    pub cascade_seed: u64,
    pub window: Window,
    pub grid: Grid,
    /// Bin-averaged q_e per S bin.
    pub external: Vec<f64>,
    /// Bin-averaged q_i, κ rows by S columns.
    pub internal: Vec<Vec<f64>>,
    pub memes: Vec<MemeTruth>,
}

impl TruthSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::data(format!("writing {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<TruthSidecar> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("truth sidecar {}: {e}", path.display())))
    }

    pub fn tables(&self) -> PlantedTables {
        PlantedTables {
            grid: self.grid,
            external: self.external.clone(),
            internal: self.internal.concat(),
        }
    }
}
