use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bca_ci_multi, BootstrapConfig, Resample};
use super::tally::{Grid, MemeTallies, Tally};
use crate::Result;

/// Pooled sums events over memes before dividing; `Macro` averages per-meme
/// probabilities over the memes that occupy a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    Pooled,
    Macro,
}

/// Which κ levels enter an S curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaRange {
    #[default]
    All,
    /// κ ≥ 1 only.
    Exposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub kappa: Option<u32>,
    pub s_range: Option<(f64, f64)>,
    pub n_e: u64,
    pub n_a: u64,
    pub p: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl CurveBin {
    fn new(kappa: Option<u32>, s_range: Option<(f64, f64)>, n_e: u64, n_a: u64) -> Self {
        CurveBin {
            kappa,
            s_range,
            n_e,
            n_a,
            p: (n_e > 0).then(|| n_a as f64 / n_e as f64),
            ci_low: None,
            ci_high: None,
        }
    }
}

pub(crate) fn ratio(n_a: u64, n_e: u64) -> f64 {
    if n_e == 0 {
        f64::NAN
    } else {
        n_a as f64 / n_e as f64
    }
}

pub(crate) struct PooledStat<'a, F> {
    pub tallies: &'a MemeTallies,
    pub pooled: Tally,
    pub f: F,
}

impl<'a, F: Fn(&Tally) -> Vec<f64> + Sync> PooledStat<'a, F> {
    pub fn new(tallies: &'a MemeTallies, f: F) -> Self {
        PooledStat {
            tallies,
            pooled: tallies.pooled(),
            f,
        }
    }
}

impl<F: Fn(&Tally) -> Vec<f64> + Sync> Resample for PooledStat<'_, F> {
    fn units(&self) -> usize {
        self.tallies.len()
    }
    fn eval(&self, indices: &[usize]) -> Vec<f64> {
        if indices.len() == self.units() && indices.iter().enumerate().all(|(i, &j)| i == j) {
            return (self.f)(&self.pooled);
        }
        (self.f)(&self.tallies.sum_of(indices))
    }
    fn eval_without(&self, unit: usize) -> Vec<f64> {
        (self.f)(&self.tallies.leave_one_out(&self.pooled, unit))
    }
}

/// Averages of per-unit vectors, skipping non-finite entries.
struct MacroStat {
    per_unit: Vec<Vec<f64>>,
    dims: usize,
}

impl Resample for MacroStat {
    fn units(&self) -> usize {
        self.per_unit.len()
    }
    fn eval(&self, indices: &[usize]) -> Vec<f64> {
        let mut sum = vec![0.0; self.dims];
        let mut n = vec![0usize; self.dims];
        for &i in indices {
            for (d, &v) in self.per_unit[i].iter().enumerate() {
                if v.is_finite() {
                    sum[d] += v;
                    n[d] += 1;
                }
            }
        }
        sum.iter().zip(&n).map(|(&s, &k)| if k == 0 { f64::NAN } else { s / k as f64 }).collect()
    }
}

fn kappa_counts(t: &Tally) -> Vec<(u64, u64)> {
    (0..t.grid.kappa_bins()).map(|k| t.kappa_counts(k)).collect()
}

fn s_counts(t: &Tally, range: KappaRange) -> Vec<(u64, u64)> {
    let g = t.grid;
    let first = match range {
        KappaRange::All => 0,
        KappaRange::Exposed => 1,
    };
    (0..g.s_bins)
        .map(|s| {
            (first..g.kappa_bins()).fold((0, 0), |(e, a), k| {
                let c = g.cell(k, s);
                (e + t.exposures[c], a + t.adoptions[c])
            })
        })
        .collect()
}

fn cell_counts(t: &Tally) -> Vec<(u64, u64)> {
    t.exposures.iter().copied().zip(t.adoptions.iter().copied()).collect()
}

fn with_intervals<C>(
    tallies: &MemeTallies,
    mut bins: Vec<CurveBin>,
    counts: C,
    pooling: Pooling,
    boot: &BootstrapConfig,
) -> Result<Vec<CurveBin>>
where
    C: Fn(&Tally) -> Vec<(u64, u64)> + Sync,
{
    let probs = |t: &Tally| counts(t).into_iter().map(|(e, a)| ratio(a, e)).collect::<Vec<_>>();
    let intervals = match pooling {
        Pooling::Pooled => bca_ci_multi(&PooledStat::new(tallies, probs), boot)?,
        Pooling::Macro => {
            let stat = MacroStat {
                per_unit: tallies.tallies.iter().map(&probs).collect(),
                dims: bins.len(),
            };
            bca_ci_multi(&stat, boot)?
        }
    };
    for (bin, ci) in bins.iter_mut().zip(intervals) {
        if bin.n_e == 0 {
            continue;
        }
        if let Some(ci) = ci {
            bin.p = Some(ci.estimate);
            bin.ci_low = Some(ci.low);
            bin.ci_high = Some(ci.high);
        }
    }
    Ok(bins)
}

/// P_a(κ) per κ bin, pooled over the memes in `tallies`, with meme-bootstrap intervals.
pub fn estimate_curve_kappa(tallies: &MemeTallies, pooling: Pooling, boot: &BootstrapConfig) -> Result<Vec<CurveBin>> {
    let bins = kappa_counts(&tallies.pooled())
        .into_iter()
        .enumerate()
        .map(|(k, (e, a))| CurveBin::new(Some(k as u32), None, e, a))
        .collect();
    with_intervals(tallies, bins, kappa_counts, pooling, boot)
}

/// P_a(S) per alignment bin.
pub fn estimate_curve_s(
    tallies: &MemeTallies,
    range: KappaRange,
    pooling: Pooling,
    boot: &BootstrapConfig,
) -> Result<Vec<CurveBin>> {
    let g = tallies.grid;
    let bins = s_counts(&tallies.pooled(), range)
        .into_iter()
        .enumerate()
        .map(|(s, (e, a))| CurveBin::new(None, Some(g.s_edges(s)), e, a))
        .collect();
    with_intervals(tallies, bins, move |t: &Tally| s_counts(t, range), pooling, boot)
}

/// P_a(κ, S) over the full grid.
pub fn estimate_surface(tallies: &MemeTallies, pooling: Pooling, boot: &BootstrapConfig) -> Result<AdoptionSurface> {
    let mut surface = AdoptionSurface::from_tally(&tallies.pooled());
    surface.cells = with_intervals(tallies, surface.cells, cell_counts, pooling, boot)?;
    Ok(surface)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdoptionSurface {
    pub grid: Grid,
    /// Row-major: κ outer, S bin inner.
    pub cells: Vec<CurveBin>,
}

impl AdoptionSurface {
    /// Point estimates only.
    pub fn from_tally(t: &Tally) -> AdoptionSurface {
        let g = t.grid;
        let mut cells = Vec::with_capacity(g.cells());
        for k in 0..g.kappa_bins() {
            for s in 0..g.s_bins {
                let c = g.cell(k, s);
                cells.push(CurveBin::new(Some(k as u32), Some(g.s_edges(s)), t.exposures[c], t.adoptions[c]));
            }
        }
        AdoptionSurface { grid: g, cells }
    }

    pub fn cell(&self, kappa: usize, s_bin: usize) -> &CurveBin {
        &self.cells[self.grid.cell(kappa, s_bin)]
    }

    pub fn exposures(&self) -> Vec<u64> {
        self.cells.iter().map(|c| c.n_e).collect()
    }

    pub fn adoptions(&self) -> Vec<u64> {
        self.cells.iter().map(|c| c.n_a).collect()
    }

    /// Counts summed over S; no intervals.
    pub fn marginal_kappa(&self) -> Vec<CurveBin> {
        let g = self.grid;
        (0..g.kappa_bins())
            .map(|k| {
                let (e, a) = (0..g.s_bins).fold((0, 0), |(e, a), s| {
                    let c = self.cell(k, s);
                    (e + c.n_e, a + c.n_a)
                });
                CurveBin::new(Some(k as u32), None, e, a)
            })
            .collect()
    }

    pub fn marginal_s(&self, range: KappaRange) -> Vec<CurveBin> {
        let g = self.grid;
        let first = usize::from(range == KappaRange::Exposed);
        (0..g.s_bins)
            .map(|s| {
                let (e, a) = (first..g.kappa_bins()).fold((0, 0), |(e, a), k| {
                    let c = self.cell(k, s);
                    (e + c.n_e, a + c.n_a)
                });
                CurveBin::new(None, Some(g.s_edges(s)), e, a)
            })
            .collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header `bin_kappa,bin_s_low,bin_s_high,n_e,n_a,p,ci_low,ci_high`; inapplicable
/// or undefined fields are left empty.
pub fn write_curve_csv<W: Write>(mut w: W, bins: &[CurveBin]) -> std::io::Result<()> {
    writeln!(w, "bin_kappa,bin_s_low,bin_s_high,n_e,n_a,p,ci_low,ci_high")?;
    for b in bins {
        let kappa = b.kappa.map(|k| k.to_string()).unwrap_or_default();
        let (lo, hi) = b.s_range.map(|(l, h)| (Some(l), Some(h))).unwrap_or((None, None));
        writeln!(
            w,
            "{kappa},{},{},{},{},{},{},{}",
            opt(lo),
            opt(hi),
            b.n_e,
            b.n_a,
            opt(b.p),
            opt(b.ci_low),
            opt(b.ci_high)
        )?;
    }
    Ok(())
}
