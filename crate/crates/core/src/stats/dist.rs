use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::tally::EventFilter;
use crate::exposure::{EventRecord, MemeMeta};
use crate::{Error, Result};

/// Right-continuous weighted empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    points: Vec<f64>,
    cumulative: Vec<f64>,
    total: u64,
}

impl EmpiricalCdf {
    /// From `(value, weight)` pairs in any order; zero weights are ignored.
    pub fn from_weighted(pairs: impl IntoIterator<Item = (f64, u64)>) -> Result<EmpiricalCdf> {
        let mut v: Vec<(f64, u64)> = pairs.into_iter().filter(|&(_, w)| w > 0).collect();
        if v.iter().any(|(x, _)| x.is_nan()) {
            return Err(Error::data("NaN in empirical CDF sample"));
        }
        if v.is_empty() {
            return Err(Error::data("empirical CDF of an empty sample"));
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: u64 = v.iter().map(|p| p.1).sum();
        let mut points: Vec<f64> = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for (x, w) in v {
            if points.last() == Some(&x) {
                *counts.last_mut().unwrap() += w;
            } else {
                points.push(x);
                counts.push(w);
            }
        }
        let mut run = 0u64;
        let cumulative = counts
            .iter()
            .map(|&c| {
                run += c;
                run as f64 / total as f64
            })
            .collect();
        Ok(EmpiricalCdf { points, cumulative, total })
    }

    pub fn from_samples(xs: &[f64]) -> Result<EmpiricalCdf> {
        Self::from_weighted(xs.iter().map(|&x| (x, 1)))
    }

    /// Fraction of the sample ≤ `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|&p| p <= x) {
            0 => 0.0,
            i => self.cumulative[i - 1],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn total_weight(&self) -> u64 {
        self.total
    }
}

/// Sup-norm distance between two step CDFs.
pub fn ks_distance(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    a.points
        .iter()
        .chain(&b.points)
        .map(|&x| (a.eval(x) - b.eval(x)).abs())
        .fold(0.0, f64::max)
}

/// CDFs of κ and S over exposure and adoption events. Adoption CDFs are
/// `None` when no event was adopted.
#[derive(Debug, Clone, Serialize)]
pub struct EventCdfs {
    pub kappa_exposure: EmpiricalCdf,
    pub kappa_adoption: Option<EmpiricalCdf>,
    pub s_exposure: EmpiricalCdf,
    pub s_adoption: Option<EmpiricalCdf>,
}

pub fn event_cdfs(
    records: impl IntoIterator<Item = EventRecord>,
    metas: &[MemeMeta],
    filter: &EventFilter,
) -> Result<EventCdfs> {
    let admitted: std::collections::HashSet<_> =
        metas.iter().filter(|m| filter.admits_meme(m)).map(|m| m.meme).collect();
    let mut kappa: std::collections::BTreeMap<u32, [u64; 2]> = Default::default();
    let mut s = vec![[0u64; 2]; 10_001];
    for r in records {
        if !admitted.contains(&r.meme) || !filter.admits_user(r.user_class) {
            continue;
        }
        let w = r.weight();
        let k = kappa.entry(r.kappa).or_default();
        k[0] += w;
        s[r.alignment.raw() as usize][0] += w;
        if r.adopted {
            k[1] += w;
            s[r.alignment.raw() as usize][1] += w;
        }
    }
    let kappa_pairs = |i: usize| kappa.iter().map(move |(&k, c)| (k as f64, c[i]));
    let s_pairs = |i: usize| s.iter().enumerate().map(move |(raw, c)| (raw as f64 / 10_000.0, c[i]));
    let kappa_exposure = EmpiricalCdf::from_weighted(kappa_pairs(0))
        .map_err(|_| Error::data("no exposure events pass the filter"))?;
    Ok(EventCdfs {
        kappa_exposure,
        kappa_adoption: EmpiricalCdf::from_weighted(kappa_pairs(1)).ok(),
        s_exposure: EmpiricalCdf::from_weighted(s_pairs(0))?,
        s_adoption: EmpiricalCdf::from_weighted(s_pairs(1)).ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample, and Σ(t³ − t) over tie groups.
fn midranks(xs: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

const EXACT_MAX: usize = 20;

/// Two-sided Mann–Whitney U test. Exact permutation distribution (with ties)
/// when the pooled size is at most 20, otherwise the tie-corrected normal
/// approximation with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("Mann-Whitney U needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::data("NaN in Mann-Whitney sample"));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;

    if n <= EXACT_MAX {
        // doubled midranks are integers; count subsets of size na by doubled rank sum
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut dp = vec![vec![0f64; max_sum + 1]; na + 1];
        dp[0][0] = 1.0;
        for &d in &doubled {
            for k in (1..=na).rev() {
                for s in (d..=max_sum).rev() {
                    dp[k][s] += dp[k - 1][s - d];
                }
            }
        }
        let total: f64 = dp[na].iter().sum();
        let observed = (2.0 * rank_sum).round() as usize;
        let lower: f64 = dp[na][..=observed].iter().sum::<f64>() / total;
        let upper: f64 = dp[na][observed..].iter().sum::<f64>() / total;
        return Ok(MannWhitney {
            u,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            exact: true,
        });
    }

    let (fa, fb, fnn) = (na as f64, nb as f64, n as f64);
    let mean = fa * fb / 2.0;
    let var = fa * fb / 12.0 * ((fnn + 1.0) - ties / (fnn * (fnn - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * Normal::standard().sf(z)).min(1.0)
    };
    Ok(MannWhitney { u, p_value, exact: false })
}

/// Spearman rank correlation; `None` for mismatched lengths, fewer than two
/// points, or a constant sample.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| v.is_nan()) {
        return None;
    }
    let (rx, _) = midranks(x);
    let (ry, _) = midranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
