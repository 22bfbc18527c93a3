use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;

use super::{Alignment, ExposureEvent, ProfileIndex, ZeroResidual};
use crate::graph::FollowerGraph;
use crate::ingest::{MemeCatalog, TweetRecord};
use crate::topics::TopicalityClass;
use crate::{MemeId, Result, UserId};

/// Who is at risk of 0-exposure from a meme's birth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eligibility {
    /// Profiled users who post at least once inside the tracked window.
    #[default]
    ActiveProfiled,
    /// Every profiled user.
    AllProfiled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractConfig {
    pub eligibility: Eligibility,
    /// Emit every κ = 0 event individually instead of [`ZeroResidual`] aggregates.
    pub materialize_zero: bool,
    /// Memes processed concurrently between sink flushes.
    pub chunk: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            eligibility: Eligibility::ActiveProfiled,
            materialize_zero: false,
            chunk: 64,
        }
    }
}

/// First posts of one meme, in time order (input order among equal timestamps).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemeTrace {
    pub meme: MemeId,
    pub adoptions: Vec<(UserId, u64)>,
}

impl MemeTrace {
    pub fn first_poster(&self) -> Option<UserId> {
        self.adoptions.first().map(|a| a.0)
    }
}

/// Everything extracted for one meme.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemeEvents {
    pub meme: MemeId,
    pub events: Vec<ExposureEvent>,
    pub residuals: Vec<ZeroResidual>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractStats {
    pub records: usize,
    pub memes: usize,
    /// Accepted memes without a topic profile.
    pub memes_without_profile: usize,
    pub eligible_users: usize,
    pub events: u64,
    pub adoptions: u64,
    pub residual_events: u64,
}

/// Sequential pass: accepted-meme traces and the set of users active in the window.
pub fn build_traces<'a>(
    records: impl IntoIterator<Item = &'a TweetRecord>,
    catalog: &MemeCatalog,
) -> (Vec<MemeTrace>, HashSet<UserId>, usize) {
    let window = catalog.window;
    let mut traces: BTreeMap<MemeId, (Vec<(UserId, u64)>, HashSet<UserId>)> = BTreeMap::new();
    let mut active = HashSet::new();
    let mut n = 0;
    for rec in records {
        if !window.tracks(rec.timestamp) {
            continue;
        }
        n += 1;
        active.insert(rec.user);
        for m in rec.memes() {
            if !catalog.is_accepted(m) {
                continue;
            }
            let (list, seen) = traces.entry(m).or_default();
            if seen.insert(rec.user) {
                list.push((rec.user, rec.timestamp));
            }
        }
    }
    let traces = traces
        .into_iter()
        .map(|(meme, (adoptions, _))| MemeTrace { meme, adoptions })
        .collect();
    (traces, active, n)
}

const NO_SLOT: u32 = u32::MAX;

struct Eligible {
    ids: Vec<UserId>,
    profile: Vec<u32>,
    by_user: HashMap<UserId, u32>,
    by_graph: Vec<u32>,
}

impl Eligible {
    fn new(
        profiles: &ProfileIndex,
        graph: &FollowerGraph,
        active: &HashSet<UserId>,
        rule: Eligibility,
    ) -> Eligible {
        let mut ids: Vec<UserId> = profiles
            .user_ids()
            .iter()
            .copied()
            .filter(|u| rule == Eligibility::AllProfiled || active.contains(u))
            .collect();
        ids.sort_unstable();
        let profile = ids
            .iter()
            .map(|&u| profiles.user_index(u).expect("profiled"))
            .collect();
        let by_user: HashMap<UserId, u32> =
            ids.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
        let by_graph = graph
            .nodes()
            .iter()
            .map(|u| by_user.get(u).copied().unwrap_or(NO_SLOT))
            .collect();
        Eligible {
            ids,
            profile,
            by_user,
            by_graph,
        }
    }
}

#[derive(Clone, Copy)]
struct Level {
    kappa: u32,
    alignment: Alignment,
    done: bool,
}

struct Context<'a> {
    graph: &'a FollowerGraph,
    profiles: &'a ProfileIndex,
    eligible: &'a Eligible,
    config: ExtractConfig,
}

impl Context<'_> {
    fn run(&self, trace: &MemeTrace) -> MemeEvents {
        let meme = trace.meme;
        let mut out = MemeEvents {
            meme,
            ..Default::default()
        };
        let Some(meme_index) = self.profiles.meme_index(meme) else {
            return out;
        };
        let first = trace
            .first_poster()
            .and_then(|u| self.eligible.by_user.get(&u).copied())
            .unwrap_or(NO_SLOT);
        let mut levels: HashMap<u32, Level> = HashMap::new();
        let level_of = |levels: &mut HashMap<u32, Level>, slot: u32| -> Level {
            *levels.entry(slot).or_insert_with(|| Level {
                kappa: 0,
                alignment: self
                    .profiles
                    .alignment_at(self.eligible.profile[slot as usize], meme_index),
                done: false,
            })
        };
        let class = |slot: u32| self.profiles.user_class(self.eligible.profile[slot as usize]);

        let adoptions = &trace.adoptions;
        let mut start = 0;
        while start < adoptions.len() {
            let t = adoptions[start].1;
            let end = start + adoptions[start..].partition_point(|a| a.1 == t);
            let group = &adoptions[start..end];
            // adoptions close levels before same-instant exposures are applied
            for &(u, _) in group {
                let Some(&slot) = self.eligible.by_user.get(&u) else {
                    continue;
                };
                if slot == first {
                    continue;
                }
                let lvl = level_of(&mut levels, slot);
                out.events.push(ExposureEvent {
                    meme,
                    user: u,
                    kappa: lvl.kappa,
                    alignment: lvl.alignment,
                    adopted: true,
                    adoption_time: Some(t),
                    user_class: class(slot),
                });
                levels.insert(slot, Level { done: true, ..lvl });
            }
            for &(u, _) in group {
                let Some(g) = self.graph.dense_id(u) else {
                    continue;
                };
                for &f in self.graph.followers_dense(g) {
                    let slot = self.eligible.by_graph[f as usize];
                    if slot == NO_SLOT || slot == first {
                        continue;
                    }
                    let lvl = level_of(&mut levels, slot);
                    if lvl.done {
                        continue;
                    }
                    out.events.push(ExposureEvent {
                        meme,
                        user: self.eligible.ids[slot as usize],
                        kappa: lvl.kappa,
                        alignment: lvl.alignment,
                        adopted: false,
                        adoption_time: None,
                        user_class: class(slot),
                    });
                    levels.insert(
                        slot,
                        Level {
                            kappa: lvl.kappa + 1,
                            ..lvl
                        },
                    );
                }
            }
            start = end;
        }

        // censor open levels at the end of the window
        let mut open: Vec<(u32, Level)> = levels
            .iter()
            .filter(|(_, l)| !l.done)
            .map(|(&s, &l)| (s, l))
            .collect();
        open.sort_unstable_by_key(|&(s, _)| s);
        for (slot, lvl) in open {
            out.events.push(ExposureEvent {
                meme,
                user: self.eligible.ids[slot as usize],
                kappa: lvl.kappa,
                alignment: lvl.alignment,
                adopted: false,
                adoption_time: None,
                user_class: class(slot),
            });
        }

        // untouched eligible users sit at κ = 0 for the whole window
        const CLASSES: [TopicalityClass; 3] =
            [TopicalityClass::Topical, TopicalityClass::Middle, TopicalityClass::NonTopical];
        let mut residual: Vec<u64> = Vec::new();
        if !self.config.materialize_zero {
            residual = vec![0; (Alignment::SCALE as usize + 1) * CLASSES.len()];
        }
        for slot in 0..self.eligible.ids.len() as u32 {
            if slot == first || levels.contains_key(&slot) {
                continue;
            }
            let a = self
                .profiles
                .alignment_at(self.eligible.profile[slot as usize], meme_index);
            if self.config.materialize_zero {
                out.events.push(ExposureEvent {
                    meme,
                    user: self.eligible.ids[slot as usize],
                    kappa: 0,
                    alignment: a,
                    adopted: false,
                    adoption_time: None,
                    user_class: class(slot),
                });
            } else {
                let c = CLASSES.iter().position(|&c| c == class(slot)).unwrap();
                residual[a.raw() as usize * CLASSES.len() + c] += 1;
            }
        }
        out.residuals = residual
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, &count)| ZeroResidual {
                meme,
                alignment: Alignment::from_raw((i / CLASSES.len()) as u16),
                user_class: CLASSES[i % CLASSES.len()],
                count,
            })
            .collect();
        out
    }
}

/// Stream every exposure event of every accepted, profiled meme into `sink`,
/// one meme at a time in ascending meme id order.
///
/// `records` must be time-ordered. Users without a profile produce no events
/// but still expose their followers; each meme's first poster is excluded.
pub fn extract_events<'a, F>(
    records: impl IntoIterator<Item = &'a TweetRecord>,
    graph: &FollowerGraph,
    catalog: &MemeCatalog,
    profiles: &ProfileIndex,
    config: &ExtractConfig,
    mut sink: F,
) -> Result<ExtractStats>
where
    F: FnMut(MemeEvents) -> Result<()>,
{
    let (traces, active, n) = build_traces(records, catalog);
    let eligible = Eligible::new(profiles, graph, &active, config.eligibility);
    let ctx = Context {
        graph,
        profiles,
        eligible: &eligible,
        config: *config,
    };
    let mut stats = ExtractStats {
        records: n,
        eligible_users: eligible.ids.len(),
        ..Default::default()
    };
    let (with_profile, without): (Vec<&MemeTrace>, Vec<&MemeTrace>) = traces
        .iter()
        .partition(|t| profiles.meme_index(t.meme).is_some());
    stats.memes_without_profile = without.len();
    if !without.is_empty() {
        log::warn!("{} accepted memes have no topic profile and were skipped", without.len());
    }
    for chunk in with_profile.chunks(config.chunk.max(1)) {
        let batch: Vec<MemeEvents> = chunk.par_iter().map(|t| ctx.run(t)).collect();
        for b in batch {
            stats.memes += 1;
            stats.events += b.events.len() as u64;
            stats.adoptions += b.events.iter().filter(|e| e.adopted).count() as u64;
            stats.residual_events += b.residuals.iter().map(|r| r.count).sum::<u64>();
            sink(b)?;
        }
    }
    Ok(stats)
}

/// [`extract_events`] collected in memory.
pub fn collect_events<'a>(
    records: impl IntoIterator<Item = &'a TweetRecord>,
    graph: &FollowerGraph,
    catalog: &MemeCatalog,
    profiles: &ProfileIndex,
    config: &ExtractConfig,
) -> Result<Vec<MemeEvents>> {
    let mut all = Vec::new();
    extract_events(records, graph, catalog, profiles, config, |m| {
        all.push(m);
        Ok(())
    })?;
    Ok(all)
}
