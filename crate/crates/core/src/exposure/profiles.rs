use std::collections::HashMap;

use super::Alignment;
use crate::ingest::{MemeKind, Symbols};
use crate::topics::{EntityKind, ProfileRow, TopicalProfile, TopicalityClass};
use crate::{Error, MemeId, Result, UserId};

/// Unit-normalized topic vectors for users and memes, for O(K) alignment lookups.
#[derive(Debug, Clone, Default)]
pub struct ProfileIndex {
    topics: usize,
    users: HashMap<UserId, u32>,
    user_ids: Vec<UserId>,
    user_unit: Vec<f64>,
    user_class: Vec<TopicalityClass>,
    memes: HashMap<MemeId, u32>,
    meme_unit: Vec<f64>,
    meme_class: Vec<TopicalityClass>,
}

fn unit(theta: &[f64]) -> Vec<f64> {
    let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    theta.iter().map(|x| x / norm).collect()
}

impl ProfileIndex {
    pub fn new(topics: usize) -> Self {
        ProfileIndex {
            topics,
            ..Default::default()
        }
    }

    /// Index profile CSV rows against the ids interned while parsing a log.
    /// Returns the index and the number of meme rows naming memes absent from
    /// `symbols`, which are skipped.
    pub fn from_rows(rows: &[ProfileRow], symbols: &Symbols) -> Result<(ProfileIndex, usize)> {
        let topics = rows.first().map_or(0, |r| r.profile.topics());
        let mut index = ProfileIndex::new(topics);
        let mut skipped = 0;
        for r in rows {
            match r.kind {
                EntityKind::User => {
                    let id = r.entity_id.strip_prefix('u').unwrap_or(&r.entity_id);
                    let user = id
                        .parse::<UserId>()
                        .map_err(|_| Error::data(format!("bad user id {:?} in profiles", r.entity_id)))?;
                    index.insert_user(user, &r.profile)?;
                }
                EntityKind::Hashtag | EntityKind::Url => {
                    let kind = if r.kind == EntityKind::Url { MemeKind::Url } else { MemeKind::Hashtag };
                    match symbols.memes.get(kind, &r.entity_id) {
                        Some(m) => index.insert_meme(m, &r.profile)?,
                        None => skipped += 1,
                    }
                }
            }
        }
        Ok((index, skipped))
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    fn check(&self, p: &TopicalProfile) -> Result<()> {
        if p.topics() != self.topics {
            return Err(Error::data(format!(
                "profile has {} topics, index expects {}",
                p.topics(),
                self.topics
            )));
        }
        Ok(())
    }

    pub fn insert_user(&mut self, user: UserId, profile: &TopicalProfile) -> Result<()> {
        self.check(profile)?;
        let v = unit(&profile.theta);
        match self.users.get(&user) {
            Some(&i) => {
                let i = i as usize;
                self.user_unit[i * self.topics..(i + 1) * self.topics].copy_from_slice(&v);
                self.user_class[i] = profile.class;
            }
            None => {
                self.users.insert(user, self.user_ids.len() as u32);
                self.user_ids.push(user);
                self.user_unit.extend(v);
                self.user_class.push(profile.class);
            }
        }
        Ok(())
    }

    pub fn insert_meme(&mut self, meme: MemeId, profile: &TopicalProfile) -> Result<()> {
        self.check(profile)?;
        let v = unit(&profile.theta);
        match self.memes.get(&meme) {
            Some(&i) => {
                let i = i as usize;
                self.meme_unit[i * self.topics..(i + 1) * self.topics].copy_from_slice(&v);
                self.meme_class[i] = profile.class;
            }
            None => {
                self.memes.insert(meme, self.meme_class.len() as u32);
                self.meme_unit.extend(v);
                self.meme_class.push(profile.class);
            }
        }
        Ok(())
    }

    pub fn user_index(&self, user: UserId) -> Option<u32> {
        self.users.get(&user).copied()
    }

    pub fn meme_index(&self, meme: MemeId) -> Option<u32> {
        self.memes.get(&meme).copied()
    }

    pub fn has_user(&self, user: UserId) -> bool {
        self.users.contains_key(&user)
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    /// Profiled users in insertion order.
    pub fn user_ids(&self) -> &[UserId] {
        &self.user_ids
    }

    pub fn user_class(&self, index: u32) -> TopicalityClass {
        self.user_class[index as usize]
    }

    pub fn meme_class(&self, meme: MemeId) -> Option<TopicalityClass> {
        self.meme_index(meme).map(|i| self.meme_class[i as usize])
    }

    /// Alignment by dense indices.
    pub fn alignment_at(&self, user_index: u32, meme_index: u32) -> Alignment {
        let k = self.topics;
        let u = &self.user_unit[user_index as usize * k..(user_index as usize + 1) * k];
        let m = &self.meme_unit[meme_index as usize * k..(meme_index as usize + 1) * k];
        Alignment::from_f64(u.iter().zip(m).map(|(a, b)| a * b).sum())
    }

    pub fn alignment(&self, user: UserId, meme: MemeId) -> Option<Alignment> {
        Some(self.alignment_at(self.user_index(user)?, self.meme_index(meme)?))
    }
}
