//! Collapsed Gibbs sampling for latent Dirichlet allocation.
//!
//! Documents are histories: for user topics a document is the list of items a
//! user rated and the vocabulary is the item set; for item topics a document is
//! an item's audience and the vocabulary is the user set. Token order inside a
//! document does not matter to the model.
//!
//! Each token `t` in document `d` with word `w` carries a topic `z_t`. A sweep
//! visits every token once, removes it from the counts and redraws its topic
//! from
//!
//! ```text
//! P(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + V·β)
//! ```
//!
//! After the last sweep each document gets the smoothed point estimate
//! `θ_dk = (n_dk + α) / (n_d + K·α)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LdaError {
    #[error("invalid LDA configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("the corpus contains no tokens")]
    EmptyCorpus,
    #[error("token {token} is outside the vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },
    #[error("assignment count {got} does not match token count {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("inconsistent sampler state: {0}")]
    Inconsistent(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    /// Number of topics.
    pub k: usize,
    /// Document-topic Dirichlet prior.
    pub alpha: f64,
    /// Topic-word Dirichlet prior.
    pub beta: f64,
    /// Full Gibbs sweeps.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { k: 8, alpha: 0.5, beta: 0.1, iterations: 300, seed: 1 }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<(), LdaError> {
        if self.k == 0 {
            return Err(LdaError::InvalidConfig("k must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(LdaError::InvalidConfig("alpha must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(LdaError::InvalidConfig("beta must be positive"));
        }
        if self.iterations == 0 {
            return Err(LdaError::InvalidConfig("iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Topic proportions of one document. Entries are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicVector(Vec<f64>);

impl TopicVector {
    /// Wraps proportions read back from storage. Returns `None` unless the
    /// entries are non-negative and sum to one within `1e-6`.
    pub fn from_proportions(theta: Vec<f64>) -> Option<Self> {
        let sum: f64 = theta.iter().sum();
        let valid = !theta.is_empty()
            && theta.iter().all(|&t| t >= 0.0 && t.is_finite())
            && libm::fabs(sum - 1.0) <= 1e-6;
        valid.then_some(Self(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Topic assignments and the count tables derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaState {
    k: usize,
    vocab_size: usize,
    tokens: Vec<usize>,
    // document d owns tokens[offsets[d]..offsets[d + 1]]
    offsets: Vec<usize>,
    z: Vec<usize>,
    n_dk: Vec<u32>,
    // word-major: n_wk[w * k + topic]
    n_wk: Vec<u32>,
    n_k: Vec<u32>,
    n_d: Vec<u32>,
}

impl LdaState {
    /// Builds a state with the given topic per token (documents concatenated).
    pub fn from_assignments<D: AsRef<[usize]>>(
        docs: &[D],
        vocab_size: usize,
        k: usize,
        z: Vec<usize>,
    ) -> Result<Self, LdaError> {
        if k == 0 {
            return Err(LdaError::InvalidConfig("k must be at least 1"));
        }
        let mut tokens = Vec::new();
        let mut offsets = vec![0];
        for doc in docs {
            for &token in doc.as_ref() {
                if token >= vocab_size {
                    return Err(LdaError::TokenOutOfRange { token, vocab_size });
                }
                tokens.push(token);
            }
            offsets.push(tokens.len());
        }
        if z.len() != tokens.len() {
            return Err(LdaError::AssignmentLength { expected: tokens.len(), got: z.len() });
        }
        if z.iter().any(|&t| t >= k) {
            return Err(LdaError::InvalidConfig("assignment outside topic range"));
        }

        let n_docs = docs.len();
        let mut state = Self {
            k,
            vocab_size,
            tokens,
            offsets,
            z,
            n_dk: vec![0; n_docs * k],
            n_wk: vec![0; vocab_size * k],
            n_k: vec![0; k],
            n_d: vec![0; n_docs],
        };
        for d in 0..n_docs {
            for pos in state.offsets[d]..state.offsets[d + 1] {
                state.add(d, state.tokens[pos], state.z[pos]);
            }
        }
        Ok(state)
    }

    #[inline]
    fn add(&mut self, d: usize, w: usize, topic: usize) {
        self.n_dk[d * self.k + topic] += 1;
        self.n_wk[w * self.k + topic] += 1;
        self.n_k[topic] += 1;
        self.n_d[d] += 1;
    }

    #[inline]
    fn remove(&mut self, d: usize, w: usize, topic: usize) {
        self.n_dk[d * self.k + topic] -= 1;
        self.n_wk[w * self.k + topic] -= 1;
        self.n_k[topic] -= 1;
        self.n_d[d] -= 1;
    }

    pub fn n_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn n_docs(&self) -> usize {
        self.n_d.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Topic of every token of document `d`.
    pub fn assignments(&self, d: usize) -> &[usize] {
        &self.z[self.offsets[d]..self.offsets[d + 1]]
    }

    pub fn doc_topic_counts(&self, d: usize) -> &[u32] {
        &self.n_dk[d * self.k..(d + 1) * self.k]
    }

    pub fn topic_word_count(&self, topic: usize, word: usize) -> u32 {
        self.n_wk[word * self.k + topic]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.n_k
    }

    pub fn doc_len(&self, d: usize) -> u32 {
        self.n_d[d]
    }

    /// Recomputes every count table from the assignments and compares.
    pub fn check_invariants(&self) -> Result<(), LdaError> {
        let k = self.k;
        for d in 0..self.n_docs() {
            let row: u32 = self.doc_topic_counts(d).iter().sum();
            if row != self.n_d[d] || self.n_d[d] as usize != self.offsets[d + 1] - self.offsets[d] {
                return Err(LdaError::Inconsistent("document-topic rows do not sum to document length"));
            }
        }
        let mut per_topic = vec![0u32; k];
        for row in self.n_wk.chunks(k) {
            for (total, &c) in per_topic.iter_mut().zip(row) {
                *total += c;
            }
        }
        if per_topic != self.n_k {
            return Err(LdaError::Inconsistent("topic-word columns do not sum to topic totals"));
        }
        if self.n_k.iter().map(|&c| c as usize).sum::<usize>() != self.tokens.len() {
            return Err(LdaError::Inconsistent("topic totals do not sum to token count"));
        }
        let mut dk = vec![0u32; self.n_dk.len()];
        let mut wk = vec![0u32; self.n_wk.len()];
        for d in 0..self.n_docs() {
            for pos in self.offsets[d]..self.offsets[d + 1] {
                dk[d * k + self.z[pos]] += 1;
                wk[self.tokens[pos] * k + self.z[pos]] += 1;
            }
        }
        if dk != self.n_dk || wk != self.n_wk {
            return Err(LdaError::Inconsistent("counts disagree with assignments"));
        }
        Ok(())
    }
}

/// Assigns every token a uniformly random topic.
pub fn init_assignments<D: AsRef<[usize]>, R: Rng + ?Sized>(
    docs: &[D],
    vocab_size: usize,
    config: &LdaConfig,
    rng: &mut R,
) -> Result<LdaState, LdaError> {
    config.validate()?;
    let n_tokens: usize = docs.iter().map(|d| d.as_ref().len()).sum();
    if n_tokens == 0 || vocab_size == 0 {
        return Err(LdaError::EmptyCorpus);
    }
    let z = (0..n_tokens).map(|_| rng.random_range(0..config.k)).collect();
    LdaState::from_assignments(docs, vocab_size, config.k, z)
}

/// Resamples every token once, documents in order and tokens in order.
pub fn gibbs_sweep<R: Rng + ?Sized>(state: &mut LdaState, config: &LdaConfig, rng: &mut R) {
    let k = state.k;
    let alpha = config.alpha;
    let beta = config.beta;
    let v_beta = state.vocab_size as f64 * beta;
    let mut cumulative = vec![0.0f64; k];

    for d in 0..state.n_docs() {
        for pos in state.offsets[d]..state.offsets[d + 1] {
            let w = state.tokens[pos];
            state.remove(d, w, state.z[pos]);

            let doc_row = &state.n_dk[d * k..(d + 1) * k];
            let word_row = &state.n_wk[w * k..(w + 1) * k];
            let mut total = 0.0;
            for t in 0..k {
                total += (doc_row[t] as f64 + alpha) * (word_row[t] as f64 + beta)
                    / (state.n_k[t] as f64 + v_beta);
                cumulative[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let topic = cumulative.iter().position(|&c| u < c).unwrap_or(k - 1);

            state.z[pos] = topic;
            state.add(d, w, topic);
        }
    }
    debug_assert_eq!(state.check_invariants(), Ok(()));
}

/// Smoothed topic proportions of every document.
pub fn estimate_theta(state: &LdaState, config: &LdaConfig) -> Vec<TopicVector> {
    let k = state.k;
    let alpha = config.alpha;
    (0..state.n_docs())
        .map(|d| {
            let denom = state.n_d[d] as f64 + k as f64 * alpha;
            TopicVector(state.doc_topic_counts(d).iter().map(|&c| (c as f64 + alpha) / denom).collect())
        })
        .collect()
}

/// Runs the full sampler: seeded initialization, `config.iterations` sweeps,
/// then the point estimate. One topic vector per input document.
pub fn train_lda<D: AsRef<[usize]>>(
    docs: &[D],
    vocab_size: usize,
    config: &LdaConfig,
) -> Result<Vec<TopicVector>, LdaError> {
    let mut rng = crate::seeded_rng(config.seed);
    let mut state = init_assignments(docs, vocab_size, config, &mut rng)?;
    for _ in 0..config.iterations {
        gibbs_sweep(&mut state, config, &mut rng);
    }
    Ok(estimate_theta(&state, config))
}
