use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::intern::{MemeKind, Symbols};
use super::log::TweetRecord;
use super::TimeRange;
use crate::{Error, MemeId, Result, UserId};

/// Emergence and analysis boundaries, inclusive, in epoch seconds.
///
/// Memes must be born inside `[emergence_start, emergence_end]`; adoptions
/// and exposures are tracked from birth up to `analysis_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub emergence_start: u64,
    pub emergence_end: u64,
    pub analysis_end: u64,
}

impl Window {
    pub fn new(emergence_start: u64, emergence_end: u64, analysis_end: u64) -> Result<Window> {
        let w = Window {
            emergence_start,
            emergence_end,
            analysis_end,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.emergence_start > self.emergence_end || self.emergence_end > self.analysis_end {
            return Err(Error::config(format!(
                "empty window: emergence [{}, {}], analysis end {}",
                self.emergence_start, self.emergence_end, self.analysis_end
            )));
        }
        Ok(())
    }

    /// Default split of a log spanning `[first, last]`: memes emerge during the
    /// first third, which is also the topic window; tracking runs to `last`.
    pub fn default_for_span(first: u64, last: u64) -> Window {
        let third = (last.saturating_sub(first)) / 3;
        Window {
            emergence_start: first,
            emergence_end: first + third,
            analysis_end: last,
        }
    }

    /// Topic window matching [`Window::default_for_span`].
    pub fn default_topic_range(first: u64, last: u64) -> TimeRange {
        let third = (last.saturating_sub(first)) / 3;
        TimeRange::new(first, first + third + 1)
    }

    pub fn tracks(&self, t: u64) -> bool {
        t >= self.emergence_start && t <= self.analysis_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShareScope {
    /// English share over every tweet in the log carrying the meme.
    #[default]
    FullLog,
    /// Only tweets inside the tracked window.
    AnalysisWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogConfig {
    pub window: Window,
    pub english_threshold: f64,
    pub min_adopters: usize,
    pub share_scope: ShareScope,
}

impl CatalogConfig {
    pub fn new(window: Window) -> Self {
        CatalogConfig {
            window,
            english_threshold: 0.9,
            min_adopters: 100,
            share_scope: ShareScope::FullLog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemeEntry {
    pub id: MemeId,
    pub kind: MemeKind,
    pub birth_time: u64,
    pub english_share: f64,
    pub adopters: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemeCatalog {
    pub window: Window,
    /// Indexed by meme id; memes never seen in the log have no entry.
    entries: Vec<Option<MemeEntry>>,
}

impl MemeCatalog {
    pub fn from_entries(window: Window, entries: impl IntoIterator<Item = MemeEntry>) -> Self {
        let mut slots: Vec<Option<MemeEntry>> = Vec::new();
        for e in entries {
            let i = e.id as usize;
            if slots.len() <= i {
                slots.resize(i + 1, None);
            }
            slots[i] = Some(e);
        }
        MemeCatalog {
            window,
            entries: slots,
        }
    }

    pub fn get(&self, id: MemeId) -> Option<&MemeEntry> {
        self.entries.get(id as usize).and_then(Option::as_ref)
    }

    pub fn is_accepted(&self, id: MemeId) -> bool {
        self.get(id).is_some_and(|e| e.accepted)
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemeEntry> {
        self.entries.iter().flatten()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &MemeEntry> {
        self.entries().filter(|e| e.accepted)
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted().count()
    }

    /// CSV `meme_id,kind,birth_time,english_share,adopters,accepted`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "meme_id,kind,birth_time,english_share,adopters,accepted")?;
        for e in self.entries() {
            writeln!(
                w,
                "{},{},{},{:.6},{},{}",
                e.id, e.kind, e.birth_time, e.english_share, e.adopters, e.accepted
            )?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Acc {
    birth: Option<u64>,
    tweets: usize,
    english: usize,
    adopters: HashSet<UserId>,
}

/// Mark memes that emerged inside the window, are predominantly English and
/// reach enough unique adopters. Thresholds are inclusive.
pub fn build_catalog<'a>(
    records: impl IntoIterator<Item = &'a TweetRecord>,
    symbols: &Symbols,
    config: &CatalogConfig,
) -> Result<MemeCatalog> {
    let w = config.window;
    w.validate()?;
    if !(0.0..=1.0).contains(&config.english_threshold) {
        return Err(Error::config(format!(
            "english threshold {} outside [0, 1]",
            config.english_threshold
        )));
    }
    let mut acc: Vec<Acc> = Vec::new();
    acc.resize_with(symbols.memes.len(), Acc::default);
    for rec in records {
        for m in rec.memes() {
            let i = m as usize;
            if acc.len() <= i {
                acc.resize_with(i + 1, Acc::default);
            }
            let a = &mut acc[i];
            let birth = *a.birth.get_or_insert(rec.timestamp);
            let in_scope = match config.share_scope {
                ShareScope::FullLog => true,
                ShareScope::AnalysisWindow => w.tracks(rec.timestamp),
            };
            if in_scope {
                a.tweets += 1;
                if rec.is_english() {
                    a.english += 1;
                }
            }
            if rec.timestamp >= birth && rec.timestamp <= w.analysis_end {
                a.adopters.insert(rec.user);
            }
        }
    }
    let entries = acc.into_iter().enumerate().filter_map(|(i, a)| {
        let birth_time = a.birth?;
        let id = i as MemeId;
        let english_share = if a.tweets == 0 {
            0.0
        } else {
            a.english as f64 / a.tweets as f64
        };
        let adopters = a.adopters.len();
        let accepted = birth_time >= w.emergence_start
            && birth_time <= w.emergence_end
            && english_share >= config.english_threshold
            && adopters >= config.min_adopters;
        Some(MemeEntry {
            id,
            kind: symbols.memes.kind(id).unwrap_or(MemeKind::Hashtag),
            birth_time,
            english_share,
            adopters,
            accepted,
        })
    });
    Ok(MemeCatalog::from_entries(w, entries.collect::<Vec<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{LogReader, ParseMode, ParsedLog, Schema};
    use proptest::prelude::*;
    use std::io::Cursor;

    fn log(text: &str) -> ParsedLog {
        ParsedLog::from_reader(LogReader::new(
            Cursor::new(text.to_owned()),
            Schema::Tsv,
            ParseMode::Strict,
        ))
        .unwrap()
    }

    /// `n` adopters of `#m` starting at `t0`, the first `english` of them English.
    fn meme_log(t0: u64, n: usize, english: usize) -> String {
        (0..n)
            .map(|i| {
                let lang = if i < english { "en" } else { "es" };
                format!("{}\t{}\t#m\t\t\t{}\n", t0 + i as u64, i, lang)
            })
            .collect()
    }

    fn catalog(text: &str, threshold: f64, min_adopters: usize) -> (ParsedLog, MemeCatalog) {
        let l = log(text);
        let cfg = CatalogConfig {
            window: Window::new(100, 200, 10_000).unwrap(),
            english_threshold: threshold,
            min_adopters,
            share_scope: ShareScope::FullLog,
        };
        let c = build_catalog(&l.records, &l.symbols, &cfg).unwrap();
        (l, c)
    }

    #[test]
    fn boundary_thresholds_are_inclusive() {
        let (_, c) = catalog(&meme_log(150, 100, 95), 0.9, 100);
        let e = c.get(0).unwrap();
        assert_eq!(e.adopters, 100);
        assert!((e.english_share - 0.95).abs() < 1e-12);
        assert!(e.accepted);
    }

    #[test]
    fn insufficient_english_share_rejects() {
        let (_, c) = catalog(&meme_log(150, 100, 89), 0.9, 10);
        assert!(!c.get(0).unwrap().accepted);
    }

    #[test]
    fn memes_born_before_emergence_are_rejected() {
        let (_, c) = catalog(&meme_log(50, 200, 200), 0.9, 1);
        assert_eq!(c.get(0).unwrap().birth_time, 50);
        assert!(!c.get(0).unwrap().accepted);
    }

    #[test]
    fn empty_window_is_a_config_error() {
        assert!(Window::new(10, 5, 20).unwrap_err().is_config());
        assert!(Window::new(10, 30, 20).is_err());
        assert!(Window::new(10, 10, 10).is_ok());
    }

    #[test]
    fn csv_has_expected_header() {
        let (_, c) = catalog(&meme_log(150, 3, 3), 0.9, 1);
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "meme_id,kind,birth_time,english_share,adopters,accepted\n0,hashtag,150,1.000000,3,true\n"
        );
    }

    proptest! {
        #[test]
        fn raising_min_adopters_never_adds_memes(
            posts in proptest::collection::vec((0u64..300, 0u64..30, 0u32..6, any::<bool>()), 0..120),
            lo in 0usize..10, extra in 0usize..10,
        ) {
            let mut posts = posts;
            posts.sort_by_key(|p| p.0);
            let text: String = posts.iter()
                .map(|(t, u, m, en)| format!("{t}\t{u}\t#m{m}\t\t\t{}\n", if *en { "en" } else { "fr" }))
                .collect();
            let (_, a) = catalog(&text, 0.5, lo);
            let (_, b) = catalog(&text, 0.5, lo + extra);
            for e in b.accepted() {
                prop_assert!(a.is_accepted(e.id));
            }
        }
    }
}
