//! Immutable follower graph in compressed adjacency form.
//!
//! Nodes are remapped to dense ids in ascending order of their external id, so
//! dense order and external order agree and follower slices stay sorted in
//! both id spaces.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use crate::{Error, Result, UserId};

pub const CACHE_MAGIC: &[u8; 8] = b"DLGRAPH1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub edges: usize,
    pub duplicates: usize,
    pub self_loops: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    /// `pairs` are (row, column) dense ids; rows and columns come out sorted and deduplicated.
    fn build(n: usize, pairs: &mut [(u32, u32)]) -> (Csr, usize) {
        pairs.sort_unstable();
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(pairs.len());
        let mut duplicates = 0;
        let mut prev: Option<(u32, u32)> = None;
        for &p in pairs.iter() {
            if prev == Some(p) {
                duplicates += 1;
                continue;
            }
            prev = Some(p);
            offsets[p.0 as usize + 1] += 1;
            targets.push(p.1);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        (Csr { offsets, targets }, duplicates)
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    fn transpose(&self, n: usize) -> Csr {
        let mut counts = vec![0usize; n + 1];
        for &t in &self.targets {
            counts[t as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut targets = vec![0u32; self.targets.len()];
        // rows visited in ascending order keep each transposed row sorted
        for row in 0..n {
            for &col in self.row(row) {
                let c = &mut cursor[col as usize];
                targets[*c] = row as u32;
                *c += 1;
            }
        }
        Csr {
            offsets: counts,
            targets,
        }
    }
}

/// Directed follow relation indexed by followee.
#[derive(Debug)]
pub struct FollowerGraph {
    external: Vec<UserId>,
    dense: HashMap<UserId, u32>,
    followers: Csr,
    followees: OnceLock<Csr>,
    stats: LoadStats,
}

impl FollowerGraph {
    /// Build from `(follower, followee)` pairs; self-loops and duplicates are dropped and counted.
    pub fn from_edges(edges: impl IntoIterator<Item = (UserId, UserId)>) -> FollowerGraph {
        let mut stats = LoadStats::default();
        let mut raw: Vec<(UserId, UserId)> = Vec::new();
        for (follower, followee) in edges {
            if follower == followee {
                stats.self_loops += 1;
                continue;
            }
            raw.push((follower, followee));
        }
        let mut external: Vec<UserId> = raw.iter().flat_map(|&(a, b)| [a, b]).collect();
        external.sort_unstable();
        external.dedup();
        let dense: HashMap<UserId, u32> = external
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, i as u32))
            .collect();
        let mut pairs: Vec<(u32, u32)> = raw
            .iter()
            .map(|(follower, followee)| (dense[followee], dense[follower]))
            .collect();
        drop(raw);
        let (followers, duplicates) = Csr::build(external.len(), &mut pairs);
        stats.duplicates = duplicates;
        stats.edges = followers.targets.len();
        FollowerGraph {
            external,
            dense,
            followers,
            followees: OnceLock::new(),
            stats,
        }
    }

    /// Read a `follower \t followee` edge list. Blank lines and `#` comments are
    /// ignored; malformed lines are counted and skipped.
    pub fn load_edges(path: &Path) -> Result<FollowerGraph> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edges(BufReader::new(file))
    }

    pub fn read_edges<R: BufRead>(input: R) -> Result<FollowerGraph> {
        let mut malformed = 0;
        let mut edges = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parsed = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => parse_id(a).zip(parse_id(b)),
                _ => None,
            };
            match parsed {
                Some(e) => edges.push(e),
                None => malformed += 1,
            }
        }
        let mut g = Self::from_edges(edges);
        g.stats.malformed = malformed;
        Ok(g)
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    pub fn node_count(&self) -> usize {
        self.external.len()
    }

    pub fn edge_count(&self) -> usize {
        self.followers.targets.len()
    }

    pub fn dense_id(&self, user: UserId) -> Option<u32> {
        self.dense.get(&user).copied()
    }

    pub fn external_id(&self, dense: u32) -> UserId {
        self.external[dense as usize]
    }

    /// External ids in dense order (ascending).
    pub fn nodes(&self) -> &[UserId] {
        &self.external
    }

    /// Followers of a dense node as a contiguous sorted slice.
    pub fn followers_dense(&self, dense: u32) -> &[u32] {
        self.followers.row(dense as usize)
    }

    /// Users `dense` follows, sorted. The reverse index is built on first use.
    pub fn followees_dense(&self, dense: u32) -> &[u32] {
        self.followees
            .get_or_init(|| self.followers.transpose(self.external.len()))
            .row(dense as usize)
    }

    /// Followers of `user` in external ids, ascending; unknown users have none.
    pub fn followers_of(&self, user: UserId) -> Vec<UserId> {
        match self.dense_id(user) {
            Some(d) => self
                .followers_dense(d)
                .iter()
                .map(|&f| self.external[f as usize])
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn followees_of(&self, user: UserId) -> Vec<UserId> {
        match self.dense_id(user) {
            Some(d) => self
                .followees_dense(d)
                .iter()
                .map(|&f| self.external[f as usize])
                .collect(),
            None => Vec::new(),
        }
    }

    /// Binary cache: magic, node and edge counts, external ids, offsets, follower ids. Little-endian.
    pub fn write_cache<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(self.external.len() as u64).to_le_bytes())?;
        w.write_all(&(self.followers.targets.len() as u64).to_le_bytes())?;
        for &u in &self.external {
            w.write_all(&u.to_le_bytes())?;
        }
        for &o in &self.followers.offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &t in &self.followers.targets {
            w.write_all(&t.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_cache<R: Read>(r: R) -> Result<FollowerGraph> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::data("not a graph cache (bad magic)"));
        }
        let n = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let mut external = Vec::with_capacity(n);
        for _ in 0..n {
            external.push(read_u64(&mut r)?);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            offsets.push(read_u64(&mut r)? as usize);
        }
        let mut targets = Vec::with_capacity(m);
        let mut b = [0u8; 4];
        for _ in 0..m {
            r.read_exact(&mut b)?;
            targets.push(u32::from_le_bytes(b));
        }
        if offsets.last() != Some(&m) || targets.iter().any(|&t| t as usize >= n) {
            return Err(Error::data("graph cache is inconsistent"));
        }
        let dense = external
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, i as u32))
            .collect();
        Ok(FollowerGraph {
            external,
            dense,
            followers: Csr { offsets, targets },
            followees: OnceLock::new(),
            stats: LoadStats {
                edges: m,
                ..LoadStats::default()
            },
        })
    }
}

fn parse_id(s: &str) -> Option<UserId> {
    s.strip_prefix(['u', 'U']).unwrap_or(s).parse().ok()
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: UserId = 10;
    const B: UserId = 20;
    const C: UserId = 30;

    fn sample() -> FollowerGraph {
        FollowerGraph::from_edges([(B, A), (C, A), (C, B)])
    }

    #[test]
    fn followers_are_exact_and_sorted() {
        let g = sample();
        assert_eq!(g.followers_of(A), vec![B, C]);
        assert_eq!(g.followers_of(B), vec![C]);
        assert!(g.followers_of(C).is_empty());
        assert!(g.followers_of(999).is_empty());
        assert_eq!(g.followees_of(C), vec![A, B]);
    }

    #[test]
    fn duplicates_and_self_loops_are_dropped() {
        let g = FollowerGraph::from_edges([(B, A), (B, A), (A, A)]);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.stats().duplicates, 1);
        assert_eq!(g.stats().self_loops, 1);
        assert_eq!(g.followers_of(A), vec![B]);
    }

    #[test]
    fn edge_list_text_parses_with_comments_and_bad_lines() {
        let text = "# follower followee\n20\t10\n30 10\nu30\tu20\nbogus\n\n";
        let g = FollowerGraph::read_edges(text.as_bytes()).unwrap();
        assert_eq!(g.followers_of(A), vec![B, C]);
        assert_eq!(g.stats().malformed, 1);
    }

    #[test]
    fn cache_round_trip() {
        let g = sample();
        let mut buf = Vec::new();
        g.write_cache(&mut buf).unwrap();
        assert_eq!(&buf[..8], CACHE_MAGIC);
        let h = FollowerGraph::read_cache(buf.as_slice()).unwrap();
        for &u in g.nodes() {
            assert_eq!(g.followers_of(u), h.followers_of(u));
        }
        assert!(FollowerGraph::read_cache(&b"NOTAGRAPH......."[..]).is_err());
    }

    proptest! {
        #[test]
        fn adjacency_invariants(edges in proptest::collection::vec((0u64..40, 0u64..40), 0..300)) {
            let g = FollowerGraph::from_edges(edges.iter().copied());
            let mut uniq: Vec<_> = edges.iter().copied().filter(|(a, b)| a != b).collect();
            uniq.sort_unstable();
            uniq.dedup();
            let total: usize = g.nodes().iter().map(|&u| g.followers_of(u).len()).sum();
            prop_assert_eq!(total, uniq.len());
            prop_assert_eq!(g.edge_count(), uniq.len());
            for &u in g.nodes() {
                let fs = g.followers_of(u);
                prop_assert!(fs.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(!fs.contains(&u));
                for f in fs {
                    prop_assert!(g.followees_of(f).contains(&u));
                    prop_assert!(uniq.binary_search(&(f, u)).is_ok());
                }
            }
        }
    }
}
