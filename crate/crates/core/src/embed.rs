//! Skip-gram with negative sampling over time-ordered user histories.
//!
//! Every item in a history predicts the items up to `window` positions before
//! and after it. Each `(center, context)` pair contributes
//!
//! ```text
//! −log σ(v_center · u_context) − Σ_n log σ(−v_center · u_n)
//! ```
//!
//! where `v` rows are input vectors, `u` rows are output vectors and the `u_n`
//! are noise items drawn from the unigram distribution raised to 0.75. The
//! input vectors are the exported item vectors. There are no user vectors.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, sigmoid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("invalid skip-gram configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("the corpus contains no context pairs")]
    EmptyCorpus,
    #[error("item {item} is outside the vocabulary of size {vocab_size}")]
    ItemOutOfRange { item: usize, vocab_size: usize },
    #[error("matrix shape does not match vocabulary size and dimension")]
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Context radius.
    pub window: usize,
    /// Noise samples per positive pair.
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate; decays linearly to `lr / 100`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 8, window: 3, negatives: 5, epochs: 5, lr: 0.025, seed: 1 }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be at least 1"));
        }
        if self.window == 0 {
            return Err(EmbedError::InvalidConfig("window must be at least 1"));
        }
        if self.negatives == 0 {
            return Err(EmbedError::InvalidConfig("negatives must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(EmbedError::InvalidConfig("lr must be positive"));
        }
        Ok(())
    }
}

/// Learned latent vector of one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemVector(Vec<f64>);

impl ItemVector {
    /// Returns `None` if any entry is NaN or infinite.
    pub fn new(v: Vec<f64>) -> Option<Self> {
        v.iter().all(|x| x.is_finite()).then_some(Self(v))
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

#[derive(Debug, Clone)]
pub struct SkipGramModel {
    dim: usize,
    vocab_size: usize,
    in_vecs: Vec<f64>,
    out_vecs: Vec<f64>,
    noise: Vec<f64>,
    sampler: Option<WeightedIndex<f64>>,
}

impl SkipGramModel {
    /// Input vectors uniform in `[-0.5/dim, 0.5/dim]`, output vectors zero.
    /// `counts[i]` is the number of occurrences of item `i` in the corpus.
    pub fn new<R: Rng + ?Sized>(counts: &[usize], dim: usize, rng: &mut R) -> Result<Self, EmbedError> {
        let half = 0.5 / dim as f64;
        let in_vecs = (0..counts.len() * dim).map(|_| rng.random_range(-half..=half)).collect();
        Self::from_parts(counts, dim, in_vecs, vec![0.0; counts.len() * dim])
    }

    pub fn from_parts(
        counts: &[usize],
        dim: usize,
        in_vecs: Vec<f64>,
        out_vecs: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        if dim == 0 || in_vecs.len() != counts.len() * dim || out_vecs.len() != in_vecs.len() {
            return Err(EmbedError::Shape);
        }
        let weights: Vec<f64> = counts.iter().map(|&c| libm::pow(c as f64, 0.75)).collect();
        let total: f64 = weights.iter().sum();
        let (noise, sampler) = if total > 0.0 {
            (weights.iter().map(|w| w / total).collect(), WeightedIndex::new(&weights).ok())
        } else {
            (vec![0.0; counts.len()], None)
        };
        Ok(Self { dim, vocab_size: counts.len(), in_vecs, out_vecs, noise, sampler })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn input(&self, item: usize) -> &[f64] {
        &self.in_vecs[item * self.dim..(item + 1) * self.dim]
    }

    pub fn output(&self, item: usize) -> &[f64] {
        &self.out_vecs[item * self.dim..(item + 1) * self.dim]
    }

    pub fn input_mut(&mut self, item: usize) -> &mut [f64] {
        &mut self.in_vecs[item * self.dim..(item + 1) * self.dim]
    }

    pub fn output_mut(&mut self, item: usize) -> &mut [f64] {
        &mut self.out_vecs[item * self.dim..(item + 1) * self.dim]
    }

    /// Probability of drawing each item as a negative.
    pub fn noise_distribution(&self) -> &[f64] {
        &self.noise
    }

    /// Draws `count` noise items, dropping draws that hit `context`.
    pub fn sample_negatives<R: Rng + ?Sized>(&self, count: usize, context: usize, rng: &mut R) -> Vec<usize> {
        let Some(sampler) = &self.sampler else {
            return Vec::new();
        };
        (0..count).map(|_| sampler.sample(rng)).filter(|&n| n != context).collect()
    }

    pub fn item_vectors(&self) -> Vec<ItemVector> {
        self.in_vecs.chunks(self.dim).map(|row| ItemVector(row.to_vec())).collect()
    }
}

/// All `(center, context)` pairs of a history, `t` ascending then offset
/// ascending.
pub fn generate_pairs(doc: &[usize], window: usize) -> Vec<(usize, usize)> {
    let n = doc.len();
    let mut pairs = Vec::new();
    for t in 0..n {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(n.saturating_sub(1));
        for s in lo..=hi {
            if s != t {
                pairs.push((doc[t], doc[s]));
            }
        }
    }
    pairs
}

/// Negative-sampling loss of one pair with explicit noise items.
pub fn pair_loss(model: &SkipGramModel, center: usize, context: usize, negatives: &[usize]) -> f64 {
    let v = model.input(center);
    let mut loss = -libm::log(sigmoid(dot(v, model.output(context))));
    for &n in negatives {
        loss -= libm::log(sigmoid(-dot(v, model.output(n))));
    }
    loss
}

/// Gradient of [`pair_loss`] with respect to every parameter it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    pub center: Vec<f64>,
    /// Output-row gradients; each row appears once even if it occurs several
    /// times among the context and negatives.
    pub outputs: Vec<(usize, Vec<f64>)>,
}

pub fn pair_gradient(model: &SkipGramModel, center: usize, context: usize, negatives: &[usize]) -> SgnsGradient {
    let dim = model.dim;
    let v = model.input(center);
    let mut grad_center = vec![0.0; dim];
    let mut outputs: Vec<(usize, Vec<f64>)> = Vec::with_capacity(negatives.len() + 1);

    let targets = core::iter::once((context, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (item, label) in targets {
        let u = model.output(item);
        // d loss / d score for a logistic term with the given label
        let g = sigmoid(dot(v, u)) - label;
        for (gc, &uf) in grad_center.iter_mut().zip(u) {
            *gc += g * uf;
        }
        let row = match outputs.iter().position(|(i, _)| *i == item) {
            Some(pos) => &mut outputs[pos].1,
            None => {
                outputs.push((item, vec![0.0; dim]));
                &mut outputs.last_mut().unwrap().1
            }
        };
        for (go, &vf) in row.iter_mut().zip(v) {
            *go += g * vf;
        }
    }
    SgnsGradient { center: grad_center, outputs }
}

/// One descent step of size `lr` on the pair loss, all gradients taken at the
/// current parameters.
pub fn apply_pair_update(model: &mut SkipGramModel, center: usize, context: usize, negatives: &[usize], lr: f64) {
    let grad = pair_gradient(model, center, context, negatives);
    for (p, g) in model.input_mut(center).iter_mut().zip(&grad.center) {
        *p -= lr * g;
    }
    for (item, row) in &grad.outputs {
        for (p, g) in model.output_mut(*item).iter_mut().zip(row) {
            *p -= lr * g;
        }
    }
}

/// Samples `negatives` noise items for the pair and applies one update.
pub fn sgns_step<R: Rng + ?Sized>(
    model: &mut SkipGramModel,
    pair: (usize, usize),
    negatives: usize,
    lr: f64,
    rng: &mut R,
) {
    let noise = model.sample_negatives(negatives, pair.1, rng);
    apply_pair_update(model, pair.0, pair.1, &noise, lr);
}

/// Trains on `docs` (histories over items `0..vocab_size`) and returns the
/// model. Deterministic for a fixed seed.
pub fn train_skipgram_model<D: AsRef<[usize]>>(
    docs: &[D],
    vocab_size: usize,
    config: &SkipGramConfig,
) -> Result<SkipGramModel, EmbedError> {
    config.validate()?;
    let mut counts = vec![0usize; vocab_size];
    for doc in docs {
        for &item in doc.as_ref() {
            if item >= vocab_size {
                return Err(EmbedError::ItemOutOfRange { item, vocab_size });
            }
            counts[item] += 1;
        }
    }
    let pairs_per_epoch: usize = docs.iter().map(|d| generate_pairs(d.as_ref(), config.window).len()).sum();
    if pairs_per_epoch == 0 {
        return Err(EmbedError::EmptyCorpus);
    }

    let mut rng = crate::seeded_rng(config.seed);
    let mut model = SkipGramModel::new(&counts, config.dim, &mut rng)?;
    let total_steps = (pairs_per_epoch * config.epochs) as f64;
    let mut step = 0usize;
    for _ in 0..config.epochs {
        for doc in docs {
            for pair in generate_pairs(doc.as_ref(), config.window) {
                let lr = config.lr * (1.0 - 0.99 * step as f64 / total_steps);
                sgns_step(&mut model, pair, config.negatives, lr, &mut rng);
                step += 1;
            }
        }
    }
    Ok(model)
}

/// Trains and returns one vector per item.
pub fn train_skipgram<D: AsRef<[usize]>>(
    docs: &[D],
    vocab_size: usize,
    config: &SkipGramConfig,
) -> Result<Vec<ItemVector>, EmbedError> {
    Ok(train_skipgram_model(docs, vocab_size, config)?.item_vectors())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_model(vocab: usize, dim: usize, seed: u64) -> SkipGramModel {
        let mut rng = crate::seeded_rng(seed);
        let in_vecs = (0..vocab * dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        let out_vecs = (0..vocab * dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        SkipGramModel::from_parts(&vec![1; vocab], dim, in_vecs, out_vecs).unwrap()
    }

    #[test]
    fn pairs_window_one() {
        assert_eq!(generate_pairs(&[10, 11, 12], 1), [(10, 11), (11, 10), (11, 12), (12, 11)]);
        assert!(generate_pairs(&[4], 3).is_empty());
        assert!(generate_pairs(&[], 3).is_empty());
    }

    #[test]
    fn pair_count_identity() {
        for n in 0..12usize {
            for c in 1..5usize {
                let doc: Vec<usize> = (0..n).collect();
                let expected: usize = (0..n as i64)
                    .map(|t| {
                        (-(c as i64)..=c as i64).filter(|&j| j != 0 && t + j >= 0 && t + j < n as i64).count()
                    })
                    .sum();
                assert_eq!(generate_pairs(&doc, c).len(), expected);
            }
        }
    }

    #[test]
    fn zero_model_is_a_fixed_point() {
        let mut model = SkipGramModel::from_parts(&[1, 1, 1], 4, vec![0.0; 12], vec![0.0; 12]).unwrap();
        let before = model.clone();
        apply_pair_update(&mut model, 0, 1, &[2], 0.1);
        assert_eq!(model.in_vecs, before.in_vecs);
        assert_eq!(model.out_vecs, before.out_vecs);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..10 {
            let model = random_model(3, 4, seed);
            let negatives = [2usize, 0, 2];
            let grad = pair_gradient(&model, 0, 1, &negatives);
            let check = |analytic: f64, perturb: &dyn Fn(&mut SkipGramModel, f64)| {
                let mut plus = model.clone();
                perturb(&mut plus, h);
                let mut minus = model.clone();
                perturb(&mut minus, -h);
                let numeric = (pair_loss(&plus, 0, 1, &negatives) - pair_loss(&minus, 0, 1, &negatives)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                assert!(rel < 1e-4, "analytic {analytic} numeric {numeric}");
            };
            for f in 0..4 {
                check(grad.center[f], &|m, d| m.input_mut(0)[f] += d);
                for (item, row) in &grad.outputs {
                    check(row[f], &|m, d| m.output_mut(*item)[f] += d);
                }
            }
        }
    }

    #[test]
    fn repeated_steps_raise_pair_score() {
        let mut model = random_model(3, 4, 42);
        let mut last = dot(model.input(0), model.output(1));
        for _ in 0..200 {
            apply_pair_update(&mut model, 0, 1, &[], 0.05);
            let score = dot(model.input(0), model.output(1));
            assert!(score > last);
            last = score;
        }

        let mut model = random_model(3, 4, 43);
        let mut loss = pair_loss(&model, 0, 1, &[2]);
        for _ in 0..200 {
            apply_pair_update(&mut model, 0, 1, &[2], 0.05);
            let next = pair_loss(&model, 0, 1, &[2]);
            assert!(next < loss);
            loss = next;
        }
    }

    #[test]
    fn negatives_skip_context() {
        let model = SkipGramModel::from_parts(&[1, 0, 0], 2, vec![0.0; 6], vec![0.0; 6]).unwrap();
        // Only item 0 has mass, and it is the context.
        assert!(model.sample_negatives(10, 0, &mut crate::seeded_rng(1)).is_empty());
        assert_eq!(model.sample_negatives(3, 1, &mut crate::seeded_rng(1)), [0, 0, 0]);
    }

    #[test]
    fn noise_distribution_is_smoothed_unigram() {
        let model = SkipGramModel::from_parts(&[16, 1, 0], 1, vec![0.0; 3], vec![0.0; 3]).unwrap();
        let noise = model.noise_distribution();
        assert!((noise.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // 16^0.75 = 8
        assert!((noise[0] - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(noise[2], 0.0);
    }

    #[test]
    fn init_scheme() {
        let model = SkipGramModel::new(&[1, 2, 3], 4, &mut crate::seeded_rng(0)).unwrap();
        assert!(model.in_vecs.iter().all(|x| x.abs() <= 0.125));
        assert!(model.out_vecs.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn training_is_seeded() {
        let docs = [vec![0usize, 1, 2, 3], vec![3, 2, 4], vec![4, 0, 1]];
        let config = SkipGramConfig { epochs: 3, ..SkipGramConfig::default() };
        let a = train_skipgram(&docs, 5, &config).unwrap();
        let b = train_skipgram(&docs, 5, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|v| v.len() == 8));
    }

    #[test]
    fn degenerate_corpus_stays_finite() {
        let docs = vec![vec![0usize, 1]; 200];
        let config = SkipGramConfig { dim: 1, epochs: 50, lr: 0.5, ..SkipGramConfig::default() };
        let vecs = train_skipgram(&docs, 2, &config).unwrap();
        assert!(vecs.iter().all(|v| v.as_slice().iter().all(|x| x.is_finite())));
    }

    #[test]
    fn training_errors() {
        let config = SkipGramConfig::default();
        assert_eq!(train_skipgram(&[vec![0usize]], 1, &config), Err(EmbedError::EmptyCorpus));
        assert_eq!(
            train_skipgram(&[vec![0usize, 5]], 2, &config),
            Err(EmbedError::ItemOutOfRange { item: 5, vocab_size: 2 })
        );
        let bad = SkipGramConfig { window: 0, ..config };
        assert!(matches!(train_skipgram(&[vec![0usize, 1]], 2, &bad), Err(EmbedError::InvalidConfig(_))));
    }

    proptest! {
        #[test]
        fn pairs_are_symmetric(doc in prop::collection::vec(0usize..6, 0..20), window in 1usize..5) {
            let pairs = generate_pairs(&doc, window);
            let mut fwd = pairs.clone();
            let mut rev: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
            fwd.sort_unstable();
            rev.sort_unstable();
            prop_assert_eq!(fwd, rev);
        }
    }
}
