//! Topic profiles for users and memes: collapsed Gibbs LDA, entropy-based
//! topicality classes, and cosine alignment between profiles.

mod fit;
mod lda;
mod profile;

pub use fit::{fit_profiles, FittedProfiles};

pub use lda::{fit_lda, Corpus, GibbsSampler, LdaConfig, LdaModel, LDA_MAGIC};
pub use profile::{
    alignment, classify_topicality, entropy, read_profiles_csv, write_profiles_csv,
    Classification, EntityKind, ProfileRow, TopicalProfile, TopicalityClass,
};
