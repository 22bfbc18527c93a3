use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng::{self, purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of replicates; 0 disables intervals.
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config(format!("confidence level {} outside (0, 1)", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcaInterval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    pub z0: f64,
    pub acceleration: f64,
    /// Replicates with a finite statistic.
    pub used: usize,
}

/// A statistic over resampling units. `eval` receives unit indices, with
/// repeats; `eval_without` may be overridden when leave-one-out has a cheap form.
pub trait Resample: Sync {
    fn units(&self) -> usize;
    fn eval(&self, indices: &[usize]) -> Vec<f64>;
    fn eval_without(&self, unit: usize) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.units()).filter(|&i| i != unit).collect();
        self.eval(&idx)
    }
}

struct Scalar<F>(usize, F);

impl<F: Fn(&[usize]) -> f64 + Sync> Resample for Scalar<F> {
    fn units(&self) -> usize {
        self.0
    }
    fn eval(&self, indices: &[usize]) -> Vec<f64> {
        vec![(self.1)(indices)]
    }
}

/// BCa interval for a scalar statistic of `units` resampling units.
/// `None` when the statistic is undefined on the full sample.
pub fn bca_ci<F>(units: usize, statistic: F, config: &BootstrapConfig) -> Result<Option<BcaInterval>>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    Ok(bca_ci_multi(&Scalar(units, statistic), config)?.pop().flatten())
}

/// BCa intervals for every component of a vector statistic, sharing replicates.
pub fn bca_ci_multi<S: Resample>(stat: &S, config: &BootstrapConfig) -> Result<Vec<Option<BcaInterval>>> {
    config.validate()?;
    let n = stat.units();
    let all: Vec<usize> = (0..n).collect();
    let point = stat.eval(&all);
    let dims = point.len();
    if config.replicates == 0 || n == 0 {
        return Ok(point
            .iter()
            .map(|&p| {
                p.is_finite().then_some(BcaInterval {
                    estimate: p,
                    low: p,
                    high: p,
                    z0: 0.0,
                    acceleration: 0.0,
                    used: 0,
                })
            })
            .collect());
    }

    let reps: Vec<Vec<f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(config.seed, purpose::BOOTSTRAP, r as u64);
            let idx: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
            stat.eval(&idx)
        })
        .collect();
    let jack: Vec<Vec<f64>> = if n > 1 {
        (0..n).into_par_iter().map(|i| stat.eval_without(i)).collect()
    } else {
        Vec::new()
    };

    let normal = Normal::standard();
    let alpha = (1.0 - config.level) / 2.0;
    let z_lo = normal.inverse_cdf(alpha);
    let z_hi = normal.inverse_cdf(1.0 - alpha);

    Ok((0..dims)
        .map(|d| {
            let p = point[d];
            if !p.is_finite() {
                return None;
            }
            let mut xs: Vec<f64> = reps.iter().map(|v| v[d]).filter(|x| x.is_finite()).collect();
            let collapsed = BcaInterval {
                estimate: p,
                low: p,
                high: p,
                z0: 0.0,
                acceleration: 0.0,
                used: xs.len(),
            };
            if xs.is_empty() {
                return Some(collapsed);
            }
            xs.sort_by(f64::total_cmp);
            if xs[0] == xs[xs.len() - 1] {
                return Some(collapsed);
            }
            let m = xs.len() as f64;
            let below = xs.partition_point(|&x| x < p) as f64;
            let ties = xs.partition_point(|&x| x <= p) as f64 - below;
            let frac = ((below + 0.5 * ties) / m).clamp(0.5 / m, 1.0 - 0.5 / m);
            let z0 = normal.inverse_cdf(frac);

            let jk: Vec<f64> = jack.iter().map(|v| v[d]).filter(|x| x.is_finite()).collect();
            let a = acceleration(&jk);

            let adjust = |z: f64| {
                let s = z0 + z;
                let den = 1.0 - a * s;
                if den <= 0.0 {
                    if z < 0.0 { 0.0 } else { 1.0 }
                } else {
                    normal.cdf(z0 + s / den)
                }
            };
            let mut low = quantile(&xs, adjust(z_lo));
            let mut high = quantile(&xs, adjust(z_hi));
            if low > high {
                std::mem::swap(&mut low, &mut high);
            }
            Some(BcaInterval {
                estimate: p,
                low: low.min(p),
                high: high.max(p),
                z0,
                acceleration: a,
                used: xs.len(),
            })
        })
        .collect())
}

fn acceleration(jk: &[f64]) -> f64 {
    if jk.len() < 2 {
        return 0.0;
    }
    let mean = jk.iter().sum::<f64>() / jk.len() as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &x in jk {
        let d = mean - x;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 <= 0.0 {
        0.0
    } else {
        s3 / (6.0 * s2.powf(1.5))
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
