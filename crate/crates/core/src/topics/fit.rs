use super::lda::{fit_lda, Corpus, LdaConfig, LdaModel};
use super::profile::{classify_topicality, EntityKind, ProfileRow};
use crate::ingest::{MemeKind, NounBag, Owner, Symbols};
use crate::{Error, Result};

/// A joint fit over user and meme bags, with classes assigned per population.
#[derive(Debug, Clone)]
pub struct FittedProfiles {
    pub model: LdaModel,
    /// Users first, then memes, in bag order.
    pub rows: Vec<ProfileRow>,
    /// Populations whose entropies were all identical.
    pub degenerate: Vec<EntityKind>,
}

/// Fit one LDA model over every bag and classify users, hashtags and URLs
/// separately at quantile `q`. Empty populations are skipped.
pub fn fit_profiles(
    users: &[NounBag],
    memes: &[NounBag],
    symbols: &Symbols,
    config: &LdaConfig,
    q: f64,
) -> Result<FittedProfiles> {
    let corpus = Corpus::from_bags(users.iter().chain(memes))?;
    let model = fit_lda(&corpus, config)?;
    let mut rows = Vec::with_capacity(corpus.len());
    for (d, bag) in users.iter().chain(memes).enumerate() {
        let (entity_id, kind) = match bag.owner {
            Owner::User(u) => (u.to_string(), EntityKind::User),
            Owner::Meme(m) => {
                let name = symbols
                    .memes
                    .name(m)
                    .ok_or_else(|| Error::data(format!("meme {m} missing from the symbol table")))?;
                let kind = match symbols.memes.kind(m) {
                    Some(MemeKind::Url) => EntityKind::Url,
                    _ => EntityKind::Hashtag,
                };
                (name.to_owned(), kind)
            }
        };
        let profile = model
            .training_profile(d)
            .ok_or_else(|| Error::data(format!("no profile for document {d}")))?;
        rows.push(ProfileRow { entity_id, kind, profile });
    }
    let mut degenerate = Vec::new();
    for kind in [EntityKind::User, EntityKind::Hashtag, EntityKind::Url] {
        let members: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].kind == kind).collect();
        if members.is_empty() {
            continue;
        }
        let entropies: Vec<f64> = members.iter().map(|&i| rows[i].profile.entropy).collect();
        let c = classify_topicality(&entropies, q)?;
        if c.degenerate {
            degenerate.push(kind);
        }
        for (&i, class) in members.iter().zip(c.classes) {
            rows[i].profile.class = class;
        }
    }
    Ok(FittedProfiles { model, rows, degenerate })
}
