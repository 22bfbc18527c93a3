use std::collections::{BTreeMap, BTreeSet};

use super::log::TweetRecord;
use super::TimeRange;
use crate::{MemeId, TokenId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    User(UserId),
    Meme(MemeId),
}

/// Set of unique nouns attached to a user or a meme, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounBag {
    pub owner: Owner,
    pub tokens: Vec<TokenId>,
}

/// User bags (nouns the user tweeted) and meme bags (nouns of tweets carrying
/// the meme), from English tweets inside `prior`. Empty bags are omitted.
/// Output is sorted by owner id.
pub fn build_noun_bags<'a>(
    records: impl IntoIterator<Item = &'a TweetRecord>,
    prior: TimeRange,
) -> (Vec<NounBag>, Vec<NounBag>) {
    let mut users: BTreeMap<UserId, BTreeSet<TokenId>> = BTreeMap::new();
    let mut memes: BTreeMap<MemeId, BTreeSet<TokenId>> = BTreeMap::new();
    for rec in records {
        if !rec.is_english() || !prior.contains(rec.timestamp) || rec.nouns.is_empty() {
            continue;
        }
        users
            .entry(rec.user)
            .or_default()
            .extend(rec.nouns.iter().copied());
        for m in rec.memes() {
            memes.entry(m).or_default().extend(rec.nouns.iter().copied());
        }
    }
    let users = users
        .into_iter()
        .map(|(u, t)| NounBag {
            owner: Owner::User(u),
            tokens: t.into_iter().collect(),
        })
        .collect();
    let memes = memes
        .into_iter()
        .map(|(m, t)| NounBag {
            owner: Owner::Meme(m),
            tokens: t.into_iter().collect(),
        })
        .collect();
    (users, memes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u64, user: UserId, memes: &[MemeId], nouns: &[TokenId], lang: &str) -> TweetRecord {
        TweetRecord {
            timestamp: t,
            user,
            hashtags: memes.to_vec(),
            urls: vec![],
            nouns: nouns.to_vec(),
            lang: lang.into(),
        }
    }

    #[test]
    fn user_bag_is_union_of_nouns() {
        let recs = [rec(1, 5, &[], &[0, 1], "en"), rec(2, 5, &[], &[1, 2], "en")];
        let (users, memes) = build_noun_bags(&recs, TimeRange::new(0, 10));
        assert_eq!(users, vec![NounBag { owner: Owner::User(5), tokens: vec![0, 1, 2] }]);
        assert!(memes.is_empty());
    }

    #[test]
    fn non_english_and_out_of_window_tweets_are_ignored() {
        let recs = [
            rec(1, 5, &[3], &[0], "es"),
            rec(2, 6, &[3], &[1], "en"),
            rec(20, 6, &[4], &[2], "en"),
        ];
        let (users, memes) = build_noun_bags(&recs, TimeRange::new(0, 10));
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].tokens, vec![1]);
        assert_eq!(memes, vec![NounBag { owner: Owner::Meme(3), tokens: vec![1] }]);
    }

    #[test]
    fn bags_have_no_duplicates() {
        let recs = [rec(1, 1, &[0], &[4, 4, 2, 4], "en")];
        let (users, memes) = build_noun_bags(&recs, TimeRange::new(0, 10));
        assert_eq!(users[0].tokens, vec![2, 4]);
        assert_eq!(memes[0].tokens, vec![2, 4]);
    }
}
