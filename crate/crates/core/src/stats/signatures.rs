use serde::Serialize;

use super::bootstrap::{bca_ci_multi, BcaInterval, BootstrapConfig};
use super::curves::{ratio, PooledStat};
use super::decompose::decompose_tally;
use super::tally::{MemeTallies, Tally};
use crate::Result;

/// A point estimate with its bootstrap interval; all `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Estimate {
    pub value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl From<Option<BcaInterval>> for Estimate {
    fn from(ci: Option<BcaInterval>) -> Self {
        match ci {
            Some(ci) => Estimate {
                value: Some(ci.estimate),
                ci_low: Some(ci.low),
                ci_high: Some(ci.high),
            },
            None => Estimate::default(),
        }
    }
}

impl Estimate {
    pub fn excludes(&self, x: f64) -> bool {
        matches!((self.ci_low, self.ci_high), (Some(l), Some(h)) if x < l || x > h)
    }
}

fn scalar<F>(tallies: &MemeTallies, boot: &BootstrapConfig, f: F) -> Result<Estimate>
where
    F: Fn(&Tally) -> f64 + Sync,
{
    let stat = PooledStat::new(tallies, |t: &Tally| vec![f(t)]);
    Ok(bca_ci_multi(&stat, boot)?.pop().flatten().into())
}

/// Persistence of the internal κ curve, with a meme-bootstrap interval.
pub fn persistence_with_ci(tallies: &MemeTallies, clamp: bool, boot: &BootstrapConfig) -> Result<Estimate> {
    scalar(tallies, boot, |t| {
        decompose_tally(t, clamp)
            .ok()
            .and_then(|d| d.persistence())
            .unwrap_or(f64::NAN)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedAlignment {
    pub seed: Estimate,
    pub nonseed: Estimate,
}

fn relative_alignment(t: &Tally, i: usize) -> f64 {
    let adopted = ratio(t.s_sum_adopted[i], adoption_count(t, i));
    let exposed = ratio(t.s_sum_exposed[i], exposure_count(t, i));
    if exposed == 0.0 {
        f64::NAN
    } else {
        adopted / exposed
    }
}

fn kappa_rows(t: &Tally, i: usize) -> std::ops::Range<usize> {
    if i == 0 {
        0..1
    } else {
        1..t.grid.kappa_bins()
    }
}

fn exposure_count(t: &Tally, i: usize) -> u64 {
    kappa_rows(t, i).map(|k| t.kappa_counts(k).0).sum()
}

fn adoption_count(t: &Tally, i: usize) -> u64 {
    kappa_rows(t, i).map(|k| t.kappa_counts(k).1).sum()
}

/// ⟨S⟩ over adoptions divided by ⟨S⟩ over exposures, for seed (κ = 0) and
/// non-seed (κ ≥ 1) events.
pub fn seed_relative_alignment(tallies: &MemeTallies, boot: &BootstrapConfig) -> Result<SeedAlignment> {
    let stat = PooledStat::new(tallies, |t: &Tally| vec![relative_alignment(t, 0), relative_alignment(t, 1)]);
    let mut cis = bca_ci_multi(&stat, boot)?.into_iter();
    Ok(SeedAlignment {
        seed: cis.next().flatten().into(),
        nonseed: cis.next().flatten().into(),
    })
}

/// Adoption rate of topical users over that of non-topical users, minus one.
/// Callers pass tallies restricted to topical memes.
pub fn topical_user_lift(tallies: &MemeTallies, boot: &BootstrapConfig) -> Result<Estimate> {
    scalar(tallies, boot, |t| {
        let top = ratio(t.class_adoptions[0], t.class_exposures[0]);
        let non = ratio(t.class_adoptions[2], t.class_exposures[2]);
        if non > 0.0 {
            top / non - 1.0
        } else {
            f64::NAN
        }
    })
}
