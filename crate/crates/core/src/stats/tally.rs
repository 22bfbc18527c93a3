use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::exposure::{EventRecord, MemeMeta};
use crate::ingest::MemeKind;
use crate::topics::TopicalityClass;
use crate::{Error, MemeId, Result};

/// Estimator grid: κ bins `0..=kappa_max` (higher κ pooled into the top bin)
/// by `s_bins` equal-width alignment bins on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub kappa_max: usize,
    pub s_bins: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            kappa_max: 32,
            s_bins: 20,
        }
    }
}

impl Grid {
    pub fn new(kappa_max: usize, s_bins: usize) -> Result<Grid> {
        if s_bins == 0 || kappa_max == 0 {
            return Err(Error::config("grid needs at least one S bin and kappa_max ≥ 1"));
        }
        Ok(Grid { kappa_max, s_bins })
    }

    pub fn kappa_bins(&self) -> usize {
        self.kappa_max + 1
    }

    pub fn cells(&self) -> usize {
        self.kappa_bins() * self.s_bins
    }

    pub fn cell(&self, kappa: usize, s_bin: usize) -> usize {
        kappa * self.s_bins + s_bin
    }

    pub fn kappa_bin(&self, kappa: u32) -> usize {
        (kappa as usize).min(self.kappa_max)
    }

    pub fn s_edges(&self, s_bin: usize) -> (f64, f64) {
        let b = self.s_bins as f64;
        (s_bin as f64 / b, (s_bin + 1) as f64 / b)
    }
}

/// Which events enter an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventFilter {
    pub meme_class: Option<TopicalityClass>,
    pub user_class: Option<TopicalityClass>,
    pub kind: Option<MemeKind>,
}

impl EventFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn memes(class: TopicalityClass) -> Self {
        EventFilter {
            meme_class: Some(class),
            ..Self::default()
        }
    }

    pub fn users(class: TopicalityClass) -> Self {
        EventFilter {
            user_class: Some(class),
            ..Self::default()
        }
    }

    pub fn with_kind(mut self, kind: Option<MemeKind>) -> Self {
        self.kind = kind;
        self
    }

    /// `all`, `topical-memes`, `non-topical-memes`, `topical-users`, `non-topical-users`.
    pub fn parse(name: &str) -> Option<Self> {
        use TopicalityClass::*;
        Some(match name {
            "all" => Self::all(),
            "topical-memes" => Self::memes(Topical),
            "non-topical-memes" | "nontopical-memes" => Self::memes(NonTopical),
            "topical-users" => Self::users(Topical),
            "non-topical-users" | "nontopical-users" => Self::users(NonTopical),
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 5] = [
        "all",
        "topical-memes",
        "non-topical-memes",
        "topical-users",
        "non-topical-users",
    ];

    pub fn admits_meme(&self, meta: &MemeMeta) -> bool {
        self.meme_class.is_none_or(|c| c == meta.class) && self.kind.is_none_or(|k| k == meta.kind)
    }

    pub fn admits_user(&self, class: TopicalityClass) -> bool {
        self.user_class.is_none_or(|c| c == class)
    }
}

/// Event counts of one meme (or a pooled set of memes) over a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    pub grid: Grid,
    pub exposures: Vec<u64>,
    pub adoptions: Vec<u64>,
    /// Σ raw quantized alignment over exposure events, `[κ = 0, κ ≥ 1]`.
    pub s_sum_exposed: [u64; 2],
    /// Σ raw quantized alignment over adoption events, `[κ = 0, κ ≥ 1]`.
    pub s_sum_adopted: [u64; 2],
    /// Exposure and adoption counts by user class (topical, middle, non-topical).
    pub class_exposures: [u64; 3],
    pub class_adoptions: [u64; 3],
}

fn class_slot(c: TopicalityClass) -> usize {
    match c {
        TopicalityClass::Topical => 0,
        TopicalityClass::Middle => 1,
        TopicalityClass::NonTopical => 2,
    }
}

impl Tally {
    pub fn new(grid: Grid) -> Self {
        Tally {
            grid,
            exposures: vec![0; grid.cells()],
            adoptions: vec![0; grid.cells()],
            s_sum_exposed: [0; 2],
            s_sum_adopted: [0; 2],
            class_exposures: [0; 3],
            class_adoptions: [0; 3],
        }
    }

    pub fn add(&mut self, r: &EventRecord) {
        let w = r.weight();
        let cell = self
            .grid
            .cell(self.grid.kappa_bin(r.kappa), r.alignment.bin(self.grid.s_bins));
        let seed = usize::from(r.kappa > 0);
        let s = r.alignment.raw() as u64 * w;
        let c = class_slot(r.user_class);
        self.exposures[cell] += w;
        self.s_sum_exposed[seed] += s;
        self.class_exposures[c] += w;
        if r.adopted {
            self.adoptions[cell] += w;
            self.s_sum_adopted[seed] += s;
            self.class_adoptions[c] += w;
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.exposures.iter_mut().zip(&other.exposures) {
            *a += b;
        }
        for (a, b) in self.adoptions.iter_mut().zip(&other.adoptions) {
            *a += b;
        }
        for i in 0..2 {
            self.s_sum_exposed[i] += other.s_sum_exposed[i];
            self.s_sum_adopted[i] += other.s_sum_adopted[i];
        }
        for i in 0..3 {
            self.class_exposures[i] += other.class_exposures[i];
            self.class_adoptions[i] += other.class_adoptions[i];
        }
    }

    fn unmerge(&mut self, other: &Tally) {
        for (a, b) in self.exposures.iter_mut().zip(&other.exposures) {
            *a -= b;
        }
        for (a, b) in self.adoptions.iter_mut().zip(&other.adoptions) {
            *a -= b;
        }
        for i in 0..2 {
            self.s_sum_exposed[i] -= other.s_sum_exposed[i];
            self.s_sum_adopted[i] -= other.s_sum_adopted[i];
        }
        for i in 0..3 {
            self.class_exposures[i] -= other.class_exposures[i];
            self.class_adoptions[i] -= other.class_adoptions[i];
        }
    }

    pub fn total_exposures(&self) -> u64 {
        self.exposures.iter().sum()
    }

    pub fn total_adoptions(&self) -> u64 {
        self.adoptions.iter().sum()
    }

    pub fn kappa_counts(&self, kappa: usize) -> (u64, u64) {
        let r = kappa * self.grid.s_bins..(kappa + 1) * self.grid.s_bins;
        (self.exposures[r.clone()].iter().sum(), self.adoptions[r].iter().sum())
    }
}

/// Per-meme tallies under one filter; the resampling units of the bootstrap.
#[derive(Debug, Clone)]
pub struct MemeTallies {
    pub grid: Grid,
    pub filter: EventFilter,
    pub memes: Vec<MemeId>,
    pub tallies: Vec<Tally>,
}

impl MemeTallies {
    /// Accumulate `records` passing `filter`. Memes appear in ascending id order;
    /// admitted memes with no admitted events still count as (empty) units.
    pub fn build(
        grid: Grid,
        filter: EventFilter,
        metas: &[MemeMeta],
        records: impl IntoIterator<Item = EventRecord>,
    ) -> Result<MemeTallies> {
        let mut admitted: Vec<&MemeMeta> = metas.iter().filter(|m| filter.admits_meme(m)).collect();
        admitted.sort_by_key(|m| m.meme);
        let slot: HashMap<MemeId, usize> =
            admitted.iter().enumerate().map(|(i, m)| (m.meme, i)).collect();
        let known: std::collections::HashSet<MemeId> = metas.iter().map(|m| m.meme).collect();
        let mut tallies = vec![Tally::new(grid); admitted.len()];
        for r in records {
            match slot.get(&r.meme) {
                Some(&i) => {
                    if filter.admits_user(r.user_class) {
                        tallies[i].add(&r);
                    }
                }
                None if !known.contains(&r.meme) => {
                    return Err(Error::data(format!("event for meme {} missing from the meme table", r.meme)));
                }
                None => {}
            }
        }
        Ok(MemeTallies {
            grid,
            filter,
            memes: admitted.iter().map(|m| m.meme).collect(),
            tallies,
        })
    }

    pub fn len(&self) -> usize {
        self.tallies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tallies.is_empty()
    }

    pub fn pooled(&self) -> Tally {
        let mut t = Tally::new(self.grid);
        for x in &self.tallies {
            t.merge(x);
        }
        t
    }

    /// Sum of the tallies at `indices` (repeats allowed).
    pub fn sum_of(&self, indices: &[usize]) -> Tally {
        let mut t = Tally::new(self.grid);
        for &i in indices {
            t.merge(&self.tallies[i]);
        }
        t
    }

    /// Pooled tally without unit `i`.
    pub fn leave_one_out(&self, pooled: &Tally, i: usize) -> Tally {
        let mut t = pooled.clone();
        t.unmerge(&self.tallies[i]);
        t
    }
}
