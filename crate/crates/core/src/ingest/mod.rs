//! Log ingestion: tweet records, symbol interning, the meme catalog and the
//! per-entity noun bags that feed topic modeling.

mod bags;
mod catalog;
mod intern;
mod log;

pub use bags::{build_noun_bags, NounBag, Owner};
pub use catalog::{build_catalog, CatalogConfig, MemeCatalog, MemeEntry, ShareScope, Window};
pub use intern::{Interner, MemeKind, MemeTable, Symbols};
pub use log::{
    format_tsv_line, parse_log, read_log, LogReader, ParseMode, ParseStats, ParsedLog, Schema,
    TweetRecord,
};

/// Half-open time range `[start, end)` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TimeRange {
    pub start: u64,
    pub end: u64,
}

impl TimeRange {
    pub fn new(start: u64, end: u64) -> Self {
        TimeRange { start, end }
    }

    pub fn contains(&self, t: u64) -> bool {
        t >= self.start && t < self.end
    }
}
