use serde::Serialize;

use super::curves::{ratio, AdoptionSurface};
use super::tally::{Grid, Tally};
use crate::{Error, Result};

/// External and internal parts of an adoption surface. Undefined entries are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub grid: Grid,
    /// P_a(0, S) per S bin.
    pub external: Vec<Option<f64>>,
    /// P_a(κ, S) − P_a(0, S), row-major like the surface.
    pub internal_surface: Vec<Option<f64>>,
    /// Internal probability per κ bin, external part removed using the
    /// S-histogram of exposures at that κ.
    pub internal_kappa: Vec<Option<f64>>,
    /// P_a(S) over κ ≥ 1 minus P_a(0, S).
    pub internal_s: Vec<Option<f64>>,
    /// Internal probability of all κ ≥ 1 events together.
    pub internal_exposed: Option<f64>,
    /// P̂(S | κ), per κ bin, per S bin.
    pub s_given_kappa: Vec<Vec<f64>>,
    /// N_e per κ bin.
    pub kappa_exposures: Vec<u64>,
    /// Internal values below zero before any clamping.
    pub negative_cells: usize,
    pub clamped: bool,
}

impl Decomposition {
    pub fn persistence(&self) -> Option<f64> {
        persistence(&self.internal_kappa, &self.kappa_exposures)
    }
}

/// Decompose a surface into its external row and internal remainder.
pub fn decompose(surface: &AdoptionSurface, clamp: bool) -> Result<Decomposition> {
    decompose_counts(surface.grid, &surface.exposures(), &surface.adoptions(), clamp)
}

pub(crate) fn decompose_tally(t: &Tally, clamp: bool) -> Result<Decomposition> {
    decompose_counts(t.grid, &t.exposures, &t.adoptions, clamp)
}

fn decompose_counts(grid: Grid, ne: &[u64], na: &[u64], clamp: bool) -> Result<Decomposition> {
    let b = grid.s_bins;
    if ne[..b].iter().all(|&e| e == 0) {
        return Err(Error::data("no κ = 0 exposures: external row missing, decomposition undefined"));
    }
    let p = |c: usize| (ne[c] > 0).then(|| na[c] as f64 / ne[c] as f64);
    let external: Vec<Option<f64>> = (0..b).map(p).collect();
    let mut negative = 0;
    let mut fix = |v: f64| {
        if v < 0.0 {
            negative += 1;
            if clamp {
                return 0.0;
            }
        }
        v
    };

    let mut internal_surface = Vec::with_capacity(grid.cells());
    for k in 0..grid.kappa_bins() {
        for s in 0..b {
            let c = grid.cell(k, s);
            internal_surface.push(match (p(c), external[s]) {
                (Some(x), Some(e)) => Some(if k == 0 { 0.0 } else { fix(x - e) }),
                _ => None,
            });
        }
    }

    // external part of a set of exposures with S-histogram `hist`, over bins
    // where P_a(0, S) is defined
    let external_share = |hist: &[u64]| -> Option<f64> {
        let (mut w, mut acc) = (0u64, 0.0);
        for (s, &h) in hist.iter().enumerate() {
            if let Some(e) = external[s] {
                w += h;
                acc += e * h as f64;
            }
        }
        (w > 0).then(|| acc / w as f64)
    };

    let mut s_given_kappa = Vec::with_capacity(grid.kappa_bins());
    let mut kappa_exposures = Vec::with_capacity(grid.kappa_bins());
    let mut internal_kappa = Vec::with_capacity(grid.kappa_bins());
    for k in 0..grid.kappa_bins() {
        let row = &ne[k * b..(k + 1) * b];
        let e: u64 = row.iter().sum();
        let a: u64 = na[k * b..(k + 1) * b].iter().sum();
        kappa_exposures.push(e);
        s_given_kappa.push(row.iter().map(|&h| if e == 0 { 0.0 } else { h as f64 / e as f64 }).collect());
        internal_kappa.push(match (e > 0, external_share(row)) {
            (true, Some(x)) => Some(if k == 0 { 0.0 } else { fix(ratio(a, e) - x) }),
            _ => None,
        });
    }

    let mut exposed_hist = vec![0u64; b];
    let mut exposed_adopt = vec![0u64; b];
    for k in 1..grid.kappa_bins() {
        for s in 0..b {
            exposed_hist[s] += ne[grid.cell(k, s)];
            exposed_adopt[s] += na[grid.cell(k, s)];
        }
    }
    let internal_s = (0..b)
        .map(|s| match (exposed_hist[s] > 0, external[s]) {
            (true, Some(e)) => Some(fix(ratio(exposed_adopt[s], exposed_hist[s]) - e)),
            _ => None,
        })
        .collect();
    let total_e: u64 = exposed_hist.iter().sum();
    let total_a: u64 = exposed_adopt.iter().sum();
    let internal_exposed = match (total_e > 0, external_share(&exposed_hist)) {
        (true, Some(x)) => Some(fix(ratio(total_a, total_e) - x)),
        _ => None,
    };

    Ok(Decomposition {
        grid,
        external,
        internal_surface,
        internal_kappa,
        internal_s,
        internal_exposed,
        s_given_kappa,
        kappa_exposures,
        negative_cells: negative,
        clamped: clamp,
    })
}

/// Exposure-weighted mean of the internal curve over κ ≥ 2, divided by its
/// value at κ = 1. `None` when P^i(1) ≤ 0 or no κ ≥ 2 bin is occupied.
pub fn persistence(internal: &[Option<f64>], exposures: &[u64]) -> Option<f64> {
    let first = (*internal.get(1)?)?;
    if first.is_nan() || first <= 0.0 || exposures.get(1).copied().unwrap_or(0) == 0 {
        return None;
    }
    let occupied: Vec<(f64, f64)> = internal
        .iter()
        .zip(exposures)
        .skip(2)
        .filter_map(|(v, &w)| match v {
            Some(v) if w > 0 && v.is_finite() => Some((*v, w as f64)),
            _ => None,
        })
        .collect();
    let total: f64 = occupied.iter().map(|&(_, w)| w).sum();
    if total == 0.0 {
        return None;
    }
    let base = occupied[0].0;
    let mean = base + occupied.iter().map(|&(v, w)| (v - base) * w).sum::<f64>() / total;
    Some(mean / first)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surface(grid: Grid, cells: &[(usize, usize, u64, u64)]) -> AdoptionSurface {
        let mut t = Tally::new(grid);
        for &(k, s, e, a) in cells {
            t.exposures[grid.cell(k, s)] = e;
            t.adoptions[grid.cell(k, s)] = a;
        }
        AdoptionSurface::from_tally(&t)
    }

    #[test]
    fn constant_curve_has_unit_persistence() {
        let c = Some(0.037);
        assert_eq!(persistence(&[Some(0.0), c, c, c, c], &[9, 3, 5, 7, 11]), Some(1.0));
    }

    #[test]
    fn persistence_ratio() {
        let v = persistence(&[Some(0.0), Some(0.02), Some(0.03), Some(0.03)], &[1, 4, 4, 2]).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn persistence_undefined_cases() {
        assert_eq!(persistence(&[Some(0.0), Some(0.0), Some(0.1)], &[1, 2, 3]), None);
        assert_eq!(persistence(&[Some(0.0), Some(-0.01), Some(0.1)], &[1, 2, 3]), None);
        assert_eq!(persistence(&[Some(0.0), Some(0.1), None], &[1, 2, 0]), None);
    }

    #[test]
    fn persistence_is_exposure_weighted() {
        let v = persistence(&[None, Some(0.1), Some(0.1), Some(0.4)], &[0, 1, 3, 1]).unwrap();
        assert!((v - 1.75).abs() < 1e-12);
    }

    #[test]
    fn pure_external_surface_has_zero_internal() {
        let g = Grid::new(3, 2).unwrap();
        let rows: Vec<_> = (0..4).flat_map(|k| [(k, 0, 10, 1), (k, 1, 20, 8)]).collect();
        let d = decompose(&surface(g, &rows), false).unwrap();
        assert!(d.internal_surface.iter().all(|v| *v == Some(0.0)));
        assert!(d.internal_kappa.iter().all(|v| v.unwrap().abs() < 1e-15));
        assert_eq!(d.negative_cells, 0);
    }

    #[test]
    fn zero_external_row_leaves_total() {
        let g = Grid::new(2, 2).unwrap();
        let s = surface(g, &[(0, 0, 5, 0), (0, 1, 5, 0), (1, 0, 4, 1), (2, 1, 8, 6)]);
        let d = decompose(&s, false).unwrap();
        assert_eq!(d.internal_surface[g.cell(1, 0)], Some(0.25));
        assert_eq!(d.internal_surface[g.cell(2, 1)], Some(0.75));
        assert_eq!(d.internal_kappa[2], Some(0.75));
    }

    #[test]
    fn missing_external_row_is_fatal() {
        let g = Grid::new(2, 2).unwrap();
        assert!(decompose(&surface(g, &[(1, 0, 4, 1)]), false).is_err());
    }

    #[test]
    fn kappa_marginal_reweights_by_s_histogram() {
        let g = Grid::new(1, 2).unwrap();
        // external 0.1 at bin 0, 0.5 at bin 1; κ = 1 exposures 3:1 across bins
        let s = surface(g, &[(0, 0, 10, 1), (0, 1, 10, 5), (1, 0, 30, 6), (1, 1, 10, 6)]);
        let d = decompose(&s, false).unwrap();
        let expected = 12.0 / 40.0 - (0.75 * 0.1 + 0.25 * 0.5);
        assert!((d.internal_kappa[1].unwrap() - expected).abs() < 1e-12);
        assert_eq!(d.s_given_kappa[1], vec![0.75, 0.25]);
    }

    #[test]
    fn clamping_is_opt_in_and_counted() {
        let g = Grid::new(1, 1).unwrap();
        let s = surface(g, &[(0, 0, 10, 5), (1, 0, 10, 2)]);
        let raw = decompose(&s, false).unwrap();
        assert!(raw.internal_surface[1].unwrap() < 0.0);
        assert!(raw.negative_cells > 0);
        let clamped = decompose(&s, true).unwrap();
        assert_eq!(clamped.internal_surface[1], Some(0.0));
        assert!(clamped.clamped);
    }
}
