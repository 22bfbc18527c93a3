//! Estimators over exposure events: adoption curves and surfaces, the
//! internal/external decomposition, persistence, event CDFs, two-sample
//! tests, and meme-level BCa bootstrap intervals.

mod bootstrap;
mod curves;
mod decompose;
mod dist;
mod signatures;
mod tally;

pub use bootstrap::{bca_ci, bca_ci_multi, BcaInterval, BootstrapConfig, Resample};
pub use curves::{
    estimate_curve_kappa, estimate_curve_s, estimate_surface, write_curve_csv, AdoptionSurface,
    CurveBin, KappaRange, Pooling,
};
pub use decompose::{decompose, persistence, Decomposition};
pub use dist::{
    event_cdfs, ks_distance, mann_whitney_u, spearman, EmpiricalCdf, EventCdfs, MannWhitney,
};
pub use signatures::{
    persistence_with_ci, seed_relative_alignment, topical_user_lift, Estimate, SeedAlignment,
};
pub use tally::{EventFilter, Grid, MemeTallies, Tally};
