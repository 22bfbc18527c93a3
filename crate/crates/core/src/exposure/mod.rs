//! κ-exposure events.
//!
//! A user is κ-exposed to a meme when κ distinct followees have adopted it and
//! they have not. Each exposure level becomes one [`ExposureEvent`] recording
//! whether the user adopted before the next exposure arrived. Levels at κ = 0
//! for users who were never touched by the cascade are reported in aggregate
//! ([`ZeroResidual`]) unless full materialization is requested.

mod engine;
mod oracle;
mod profiles;
mod spool;

pub use engine::{
    build_traces, extract_events, collect_events, Eligibility, ExtractConfig, ExtractStats,
    MemeEvents, MemeTrace,
};
pub use oracle::{brute_force_events, ORACLE_MAX_RECORDS};
pub use profiles::ProfileIndex;
pub use spool::{
    meme_metas, write_events_csv, EventRecord, MemeMeta, SpoolReader, SpoolWriter, SPOOL_MAGIC,
};

use serde::{Deserialize, Serialize};

use crate::topics::TopicalityClass;
use crate::{MemeId, UserId};

/// Topical alignment quantized to 1e-4 on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Alignment(u16);

impl Alignment {
    pub const SCALE: u16 = 10_000;

    pub fn from_f64(s: f64) -> Alignment {
        let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
        Alignment((s * Self::SCALE as f64).round() as u16)
    }

    pub fn from_raw(raw: u16) -> Alignment {
        Alignment(raw.min(Self::SCALE))
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    /// Index among `bins` equal-width bins on [0, 1]; 1.0 lands in the last bin.
    pub fn bin(self, bins: usize) -> usize {
        ((self.0 as usize * bins) / Self::SCALE as usize).min(bins - 1)
    }
}

/// One exposure level of one user for one meme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExposureEvent {
    pub meme: MemeId,
    pub user: UserId,
    pub kappa: u32,
    pub alignment: Alignment,
    pub adopted: bool,
    pub adoption_time: Option<u64>,
    pub user_class: TopicalityClass,
}

/// `count` never-exposed, never-adopting eligible users of one meme sharing an
/// alignment value and user class; each contributes one censored κ = 0 event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZeroResidual {
    pub meme: MemeId,
    pub alignment: Alignment,
    pub user_class: TopicalityClass,
    pub count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_quantization_and_bins() {
        assert_eq!(Alignment::from_f64(0.123_46).raw(), 1235);
        assert_eq!(Alignment::from_f64(1.0).bin(20), 19);
        assert_eq!(Alignment::from_f64(0.0).bin(20), 0);
        assert_eq!(Alignment::from_f64(0.05).bin(20), 1);
        assert_eq!(Alignment::from_f64(0.0499).bin(20), 0);
        assert_eq!(Alignment::from_f64(0.55).bin(20), 11);
        assert_eq!(Alignment::from_f64(f64::NAN).raw(), 0);
        assert_eq!(Alignment::from_f64(2.0).raw(), Alignment::SCALE);
    }
}
