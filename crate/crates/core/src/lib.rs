//! Topical and non-topical information diffusion analytics.
//!
//! The pipeline runs in stages that mirror the crate's modules:
//!
//! - [`ingest`] parses time-ordered tweet logs, builds the meme catalog and noun bags.
//! - [`graph`] stores the follower relation in compressed adjacency form.
//! - [`topics`] fits LDA topic profiles, classifies topicality and scores alignment.
//! - [`exposure`] turns the analysis stream into κ-exposure events.
//! - [`stats`] estimates adoption curves, the internal/external decomposition,
//!   persistence and the distribution tests, with meme-level BCa intervals.
//! - [`sim`] plants known adoption mechanisms on synthetic worlds for validation.

pub mod error;
pub mod exposure;
pub mod graph;
pub mod ingest;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod topics;

pub use error::{Error, Result};

/// External user identifier as it appears in logs and edge lists.
pub type UserId = u64;
/// Dense interned meme (hashtag or URL) identifier.
pub type MemeId = u32;
/// Dense interned noun token identifier.
pub type TokenId = u32;
