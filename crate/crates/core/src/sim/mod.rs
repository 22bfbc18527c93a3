//! Synthetic worlds and cascades under planted adoption mechanisms, with the
//! exact planted probabilities for scoring the estimators.

mod cascade;
mod mechanism;
mod truth;
mod world;

pub use cascade::{simulate, MemeRun, MemeTruth, Post, Simulation, TruthSidecar};
pub use mechanism::{AlignmentCurve, InternalHazard, PlantedMechanism};
pub use truth::{bin_average, planted_truth, PlantedTables};
pub use world::{dirichlet, generate_world, GraphModel, SimConfig, World};
