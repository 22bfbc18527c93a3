use serde::{Deserialize, Serialize};

use super::mechanism::PlantedMechanism;
use crate::stats::{AdoptionSurface, CurveBin, Grid, Tally};

const SUBSTEPS: usize = 256;

/// Mean of `f` over `[lo, hi]`, composite midpoint rule.
pub fn bin_average(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let h = (hi - lo) / SUBSTEPS as f64;
    (0..SUBSTEPS).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() / SUBSTEPS as f64
}

/// Planted hazards averaged over each S bin of `grid`. The top κ bin carries
/// the hazard at κ = `kappa_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTables {
    pub grid: Grid,
    pub external: Vec<f64>,
    /// Row-major κ × S, zero in the κ = 0 row.
    pub internal: Vec<f64>,
}

impl PlantedTables {
    pub fn new(mechanism: &PlantedMechanism, grid: Grid) -> PlantedTables {
        let external = (0..grid.s_bins)
            .map(|s| {
                let (lo, hi) = grid.s_edges(s);
                bin_average(|x| mechanism.external_hazard(x), lo, hi)
            })
            .collect();
        let mut internal = Vec::with_capacity(grid.cells());
        for k in 0..grid.kappa_bins() {
            for s in 0..grid.s_bins {
                let (lo, hi) = grid.s_edges(s);
                internal.push(bin_average(|x| mechanism.internal_hazard(k as u32, x), lo, hi));
            }
        }
        PlantedTables { grid, external, internal }
    }

    pub fn internal_at(&self, kappa: usize, s_bin: usize) -> f64 {
        self.internal[self.grid.cell(kappa, s_bin)]
    }

    /// Planted internal probability per S bin, averaged over κ ≥ 1 with the
    /// κ mix observed in `tally`. `None` for bins without κ ≥ 1 exposures.
    pub fn internal_s(&self, tally: &Tally) -> Vec<Option<f64>> {
        let g = self.grid;
        (0..g.s_bins)
            .map(|s| {
                let (mut w, mut acc) = (0u64, 0.0);
                for k in 1..g.kappa_bins() {
                    let n = tally.exposures[g.cell(k, s)];
                    w += n;
                    acc += n as f64 * self.internal_at(k, s);
                }
                (w > 0).then(|| acc / w as f64)
            })
            .collect()
    }

    /// Planted internal probability per κ bin under the S mix observed in `tally`.
    pub fn internal_kappa(&self, tally: &Tally) -> Vec<Option<f64>> {
        let g = self.grid;
        (0..g.kappa_bins())
            .map(|k| {
                let (mut w, mut acc) = (0u64, 0.0);
                for s in 0..g.s_bins {
                    let n = tally.exposures[g.cell(k, s)];
                    w += n;
                    acc += n as f64 * self.internal_at(k, s);
                }
                (w > 0).then(|| acc / w as f64)
            })
            .collect()
    }
}

/// Exact planted adoption probabilities `q_e(S) + q_i(κ, S)`, bin-averaged on
/// the estimator grid. Counts are zero; `p` holds the planted value.
pub fn planted_truth(mechanism: &PlantedMechanism, grid: Grid) -> AdoptionSurface {
    let t = PlantedTables::new(mechanism, grid);
    let mut cells = Vec::with_capacity(grid.cells());
    for k in 0..grid.kappa_bins() {
        for s in 0..grid.s_bins {
            cells.push(CurveBin {
                kappa: Some(k as u32),
                s_range: Some(grid.s_edges(s)),
                n_e: 0,
                n_a: 0,
                p: Some(t.external[s] + t.internal_at(k, s)),
                ci_low: None,
                ci_high: None,
            });
        }
    }
    AdoptionSurface { grid, cells }
}
