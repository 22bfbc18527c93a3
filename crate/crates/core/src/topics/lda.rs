use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;

use super::profile::TopicalProfile;
use crate::ingest::NounBag;
use crate::rng::{self, purpose, StreamRng};
use crate::{Error, Result, TokenId};

pub const LDA_MAGIC: &[u8; 6] = b"DLLDA1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaConfig {
    pub topics: usize,
    pub iterations: usize,
    /// Symmetric doc–topic prior.
    pub alpha: f64,
    /// Symmetric topic–word prior.
    pub beta: f64,
    pub seed: u64,
    /// Average θ over the last n sweeps instead of using the final state (0 = off).
    pub average_last: usize,
}

impl LdaConfig {
    /// K topics, 1000 sweeps, alpha = 50/K, beta = 0.01.
    pub fn new(topics: usize, seed: u64) -> Self {
        LdaConfig {
            topics,
            iterations: 1000,
            alpha: 50.0 / topics.max(1) as f64,
            beta: 0.01,
            seed,
            average_last: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.topics > u16::MAX as usize {
            return Err(Error::config(format!("topic count {} out of range", self.topics)));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::config("alpha and beta must be positive"));
        }
        if self.average_last > self.iterations {
            return Err(Error::config("cannot average over more sweeps than were run"));
        }
        Ok(())
    }
}

/// Documents re-indexed over a dense vocabulary built from the corpus itself.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<Vec<u32>>,
    vocab: Vec<TokenId>,
}

impl Corpus {
    pub fn new(docs: Vec<Vec<TokenId>>) -> Result<Corpus> {
        if docs.is_empty() {
            return Err(Error::data("empty corpus"));
        }
        if let Some(i) = docs.iter().position(Vec::is_empty) {
            return Err(Error::data(format!("document {i} is empty")));
        }
        let mut index: HashMap<TokenId, u32> = HashMap::new();
        let mut vocab = Vec::new();
        let docs = docs
            .into_iter()
            .map(|doc| {
                doc.into_iter()
                    .map(|t| {
                        *index.entry(t).or_insert_with(|| {
                            vocab.push(t);
                            (vocab.len() - 1) as u32
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(Corpus { docs, vocab })
    }

    pub fn from_bags<'a>(bags: impl IntoIterator<Item = &'a NounBag>) -> Result<Corpus> {
        Self::new(bags.into_iter().map(|b| b.tokens.clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// Dense word ids of document `d`.
    pub fn doc(&self, d: usize) -> &[u32] {
        &self.docs[d]
    }
}

/// Collapsed Gibbs sampler over token–topic assignments.
pub struct GibbsSampler<'c> {
    corpus: &'c Corpus,
    k: usize,
    alpha: f64,
    beta: f64,
    z: Vec<Vec<u16>>,
    doc_topic: Vec<u32>,
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    rng: StreamRng,
    weights: Vec<f64>,
}

impl<'c> GibbsSampler<'c> {
    /// Uniformly random initial assignments drawn from the config's seed.
    pub fn new(corpus: &'c Corpus, config: &LdaConfig) -> Result<Self> {
        config.validate()?;
        let k = config.topics;
        let v = corpus.vocab_size();
        let mut rng = rng::stream(config.seed, purpose::LDA, 0);
        let mut doc_topic = vec![0u32; corpus.len() * k];
        let mut word_topic = vec![0u32; v * k];
        let mut topic_total = vec![0u32; k];
        let z = corpus
            .docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let t = rng.random_range(0..k);
                        doc_topic[d * k + t] += 1;
                        word_topic[w as usize * k + t] += 1;
                        topic_total[t] += 1;
                        t as u16
                    })
                    .collect()
            })
            .collect();
        Ok(GibbsSampler {
            corpus,
            k,
            alpha: config.alpha,
            beta: config.beta,
            z,
            doc_topic,
            word_topic,
            topic_total,
            rng,
            weights: vec![0.0; k],
        })
    }

    /// One full pass resampling every token.
    pub fn sweep(&mut self) {
        let k = self.k;
        let vbeta = self.corpus.vocab_size() as f64 * self.beta;
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            let dt = &mut self.doc_topic[d * k..(d + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let old = self.z[d][i] as usize;
                let wt = &mut self.word_topic[w as usize * k..(w as usize + 1) * k];
                dt[old] -= 1;
                wt[old] -= 1;
                self.topic_total[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (dt[t] as f64 + self.alpha) * (wt[t] as f64 + self.beta)
                        / (self.topic_total[t] as f64 + vbeta);
                    self.weights[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.partition_point(|&c| c <= u).min(k - 1);
                dt[new] += 1;
                wt[new] += 1;
                self.topic_total[new] += 1;
                self.z[d][i] = new as u16;
            }
        }
    }

    pub fn assignments(&self) -> &[Vec<u16>] {
        &self.z
    }

    /// θ_d from current counts: (n_dk + alpha) / (n_d + K·alpha).
    pub fn doc_theta(&self, d: usize) -> Vec<f64> {
        let n = self.corpus.docs[d].len() as f64;
        let denom = n + self.k as f64 * self.alpha;
        self.doc_topic[d * self.k..(d + 1) * self.k]
            .iter()
            .map(|&c| (c as f64 + self.alpha) / denom)
            .collect()
    }
}

/// A fitted topic model: topic–word counts plus the training documents' θ.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    vocab: Vec<TokenId>,
    vocab_index: HashMap<TokenId, u32>,
    /// Word-major counts: `word_topic[w * K + k]`.
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    doc_theta: Vec<Vec<f64>>,
}

/// Fit LDA by collapsed Gibbs sampling. Deterministic given the seed.
pub fn fit_lda(corpus: &Corpus, config: &LdaConfig) -> Result<LdaModel> {
    let mut sampler = GibbsSampler::new(corpus, config)?;
    let mut averaged: Vec<Vec<f64>> = vec![vec![0.0; config.topics]; corpus.len()];
    for it in 0..config.iterations {
        sampler.sweep();
        if config.average_last > 0 && it + config.average_last >= config.iterations {
            for (d, acc) in averaged.iter_mut().enumerate() {
                for (a, t) in acc.iter_mut().zip(sampler.doc_theta(d)) {
                    *a += t / config.average_last as f64;
                }
            }
        }
    }
    let doc_theta = if config.average_last > 0 {
        averaged
    } else {
        (0..corpus.len()).map(|d| sampler.doc_theta(d)).collect()
    };
    Ok(LdaModel {
        topics: config.topics,
        alpha: config.alpha,
        beta: config.beta,
        seed: config.seed,
        vocab_index: index_of(&corpus.vocab),
        vocab: corpus.vocab.clone(),
        word_topic: sampler.word_topic,
        topic_total: sampler.topic_total,
        doc_theta,
    })
}

fn index_of(vocab: &[TokenId]) -> HashMap<TokenId, u32> {
    vocab.iter().enumerate().map(|(i, &t)| (t, i as u32)).collect()
}

impl LdaModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[TokenId] {
        &self.vocab
    }

    /// φ_k over the vocabulary (in [`LdaModel::vocab`] order), summing to 1.
    pub fn topic_word(&self, topic: usize) -> Vec<f64> {
        let k = self.topics;
        let denom = self.topic_total[topic] as f64 + self.vocab.len() as f64 * self.beta;
        (0..self.vocab.len())
            .map(|w| (self.word_topic[w * k + topic] as f64 + self.beta) / denom)
            .collect()
    }

    /// Profile of training document `d`, from its final (or averaged) assignments.
    pub fn training_profile(&self, d: usize) -> Option<TopicalProfile> {
        self.doc_theta.get(d).and_then(|t| TopicalProfile::from_weights(t.clone()))
    }

    pub fn training_docs(&self) -> usize {
        self.doc_theta.len()
    }

    /// Fold an unseen document in with frozen topic–word counts.
    /// Returns the profile and the number of out-of-vocabulary tokens dropped;
    /// `None` when nothing is in vocabulary.
    pub fn fold_in(
        &self,
        tokens: &[TokenId],
        iterations: usize,
        seed: u64,
    ) -> (Option<TopicalProfile>, usize) {
        let words: Vec<usize> = tokens
            .iter()
            .filter_map(|t| self.vocab_index.get(t).map(|&w| w as usize))
            .collect();
        let dropped = tokens.len() - words.len();
        if words.is_empty() {
            return (None, dropped);
        }
        let k = self.topics;
        let vbeta = self.vocab.len() as f64 * self.beta;
        let mut rng = rng::stream(seed, purpose::FOLD_IN, 0);
        let mut counts = vec![0u32; k];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                counts[t] += 1;
                t
            })
            .collect();
        let mut weights = vec![0.0; k];
        for _ in 0..iterations {
            for (i, &w) in words.iter().enumerate() {
                counts[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (counts[t] as f64 + self.alpha)
                        * (self.word_topic[w * k + t] as f64 + self.beta)
                        / (self.topic_total[t] as f64 + vbeta);
                    weights[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = weights.partition_point(|&c| c <= u).min(k - 1);
                counts[new] += 1;
                z[i] = new;
            }
        }
        let denom = words.len() as f64 + k as f64 * self.alpha;
        let theta = counts.iter().map(|&c| (c as f64 + self.alpha) / denom).collect();
        (TopicalProfile::from_weights(theta), dropped)
    }

    /// Checkpoint: magic, K, V (u32), alpha, beta (f64), seed (u64), vocabulary
    /// token ids, then K×V word–topic counts. Little-endian. Training θ are not stored.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(LDA_MAGIC)?;
        w.write_all(&(self.topics as u32).to_le_bytes())?;
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        w.write_all(&self.alpha.to_le_bytes())?;
        w.write_all(&self.beta.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for &t in &self.vocab {
            w.write_all(&t.to_le_bytes())?;
        }
        for &c in &self.word_topic {
            w.write_all(&c.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<LdaModel> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != LDA_MAGIC {
            return Err(Error::data("not an LDA checkpoint (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let topics = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let v = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let alpha = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let beta = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut vocab = Vec::with_capacity(v);
        for _ in 0..v {
            r.read_exact(&mut b4)?;
            vocab.push(u32::from_le_bytes(b4));
        }
        let mut word_topic = Vec::with_capacity(v * topics);
        for _ in 0..v * topics {
            r.read_exact(&mut b4)?;
            word_topic.push(u32::from_le_bytes(b4));
        }
        let mut topic_total = vec![0u32; topics];
        for (i, &c) in word_topic.iter().enumerate() {
            topic_total[i % topics] += c;
        }
        Ok(LdaModel {
            topics,
            alpha,
            beta,
            seed,
            vocab_index: index_of(&vocab),
            vocab,
            word_topic,
            topic_total,
            doc_theta: Vec::new(),
        })
    }
}
