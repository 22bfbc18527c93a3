use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{MemeId, TokenId};

/// Bijective string ↔ dense id table.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, s)| (i as u32, s.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemeKind {
    Hashtag,
    Url,
}

impl MemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MemeKind::Hashtag => "hashtag",
            MemeKind::Url => "url",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hashtag" => Some(MemeKind::Hashtag),
            "url" => Some(MemeKind::Url),
            _ => None,
        }
    }
}

impl fmt::Display for MemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Meme interning keyed by (kind, text): a hashtag and a URL with the same
/// spelling are different memes.
#[derive(Debug, Clone, Default)]
pub struct MemeTable {
    ids: HashMap<(MemeKind, String), MemeId>,
    entries: Vec<(MemeKind, String)>,
}

impl MemeTable {
    pub fn intern(&mut self, kind: MemeKind, name: &str) -> MemeId {
        if let Some(&id) = self.ids.get(&(kind, name.to_owned())) {
            return id;
        }
        let id = self.entries.len() as MemeId;
        self.entries.push((kind, name.to_owned()));
        self.ids.insert((kind, name.to_owned()), id);
        id
    }

    pub fn get(&self, kind: MemeKind, name: &str) -> Option<MemeId> {
        self.ids.get(&(kind, name.to_owned())).copied()
    }

    pub fn kind(&self, id: MemeId) -> Option<MemeKind> {
        self.entries.get(id as usize).map(|e| e.0)
    }

    pub fn name(&self, id: MemeId) -> Option<&str> {
        self.entries.get(id as usize).map(|e| e.1.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MemeId, MemeKind, &str)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (k, s))| (i as MemeId, *k, s.as_str()))
    }
}

/// All interning tables grown while parsing one log.
#[derive(Debug, Clone, Default)]
pub struct Symbols {
    pub memes: MemeTable,
    pub tokens: Interner,
}

impl Symbols {
    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.name(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn meme_kinds_are_separate_namespaces() {
        let mut t = MemeTable::default();
        let a = t.intern(MemeKind::Hashtag, "x");
        let b = t.intern(MemeKind::Url, "x");
        assert_ne!(a, b);
        assert_eq!(t.intern(MemeKind::Hashtag, "x"), a);
        assert_eq!(t.kind(b), Some(MemeKind::Url));
    }

    proptest! {
        #[test]
        fn interning_round_trips(words in proptest::collection::vec("[a-z#]{0,6}", 0..40)) {
            let mut it = Interner::new();
            let ids: Vec<u32> = words.iter().map(|w| it.intern(w)).collect();
            for (w, id) in words.iter().zip(&ids) {
                prop_assert_eq!(it.name(*id), Some(w.as_str()));
                prop_assert_eq!(it.get(w), Some(*id));
            }
            // dense
            for (id, name) in it.iter() {
                prop_assert_eq!(it.get(name), Some(id));
            }
        }
    }
}
