//! Second-order factorization machines over sparse feature vectors.
//!
//! ```text
//! ŷ(x) = w0 + Σ_j w_j x_j + Σ_{j<j'} ⟨V_j, V_j'⟩ x_j x_j'
//! ```
//!
//! The pairwise term is evaluated in `O(nnz · rank)` through
//! `½ Σ_f [(Σ_j V_jf x_j)² − Σ_j V_jf² x_j²]`.
//!
//! A [`FeatureLayout`] fixes how a rating event is spread over the input
//! dimensions: one-hot user block, one-hot item block, then optional real
//! valued user-topic and item-latent blocks. With that encoding the model
//! parameters play the familiar roles: `w0` is the global mean, the user and
//! item linear weights are biases, and the user/item factor rows are the
//! classic matrix-factorization vectors.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod encode;
mod expanded;
mod sgd;

pub use encode::{encode_baseline, encode_topic, encode_vector};
pub use expanded::{
    expanded_topic_prediction, expanded_vector_prediction, m3f_tib, m3f_tif, one_hot_latent_cross, LatentParams,
};
pub use sgd::{
    evaluate_rmse, example_gradient, example_objective, train_fm, EpochMetrics, FmGradient, SgdTrainer, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FmError {
    #[error("invalid feature layout: {0}")]
    InvalidLayout(&'static str),
    #[error("feature index {index} is outside dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("feature indices must be strictly increasing")]
    UnsortedIndices,
    #[error("feature value at index {0} is not finite")]
    NonFinite(usize),
    #[error("expected a latent vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("missing latent features for a known {0}")]
    MissingLatent(&'static str),
    #[error("the layout is for the {0:?} variant")]
    VariantMismatch(Variant),
    #[error("parameter shapes do not match the layout and rank")]
    Shape,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no examples to train or evaluate on")]
    EmptyExamples,
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
}

/// Which latent features a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// User and item ids only.
    Baseline,
    /// Ids plus LDA topic proportions of the user and/or the item.
    Topic,
    /// Ids plus the item's skip-gram vector.
    Vector,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Topic => "topic",
            Variant::Vector => "vector",
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Variant {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "topic" => Ok(Variant::Topic),
            "vector" => Ok(Variant::Vector),
            _ => Err(()),
        }
    }
}

/// Block structure of the FM input: `[users | items | user topics | item latents]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    n_users: usize,
    n_items: usize,
    k_user_topics: usize,
    k_item_latents: usize,
    variant: Variant,
}

impl FeatureLayout {
    pub fn new(
        variant: Variant,
        n_users: usize,
        n_items: usize,
        k_user_topics: usize,
        k_item_latents: usize,
    ) -> Result<Self, FmError> {
        match variant {
            Variant::Baseline if k_user_topics != 0 || k_item_latents != 0 => {
                return Err(FmError::InvalidLayout("the baseline has no latent blocks"));
            }
            Variant::Vector if k_user_topics != 0 => {
                return Err(FmError::InvalidLayout("the vector variant has no user block"));
            }
            _ => {}
        }
        Ok(Self { n_users, n_items, k_user_topics, k_item_latents, variant })
    }

    pub fn baseline(n_users: usize, n_items: usize) -> Self {
        Self { n_users, n_items, k_user_topics: 0, k_item_latents: 0, variant: Variant::Baseline }
    }

    pub fn topic(n_users: usize, n_items: usize, k_user_topics: usize, k_item_topics: usize) -> Self {
        Self { n_users, n_items, k_user_topics, k_item_latents: k_item_topics, variant: Variant::Topic }
    }

    pub fn vector(n_users: usize, n_items: usize, dim: usize) -> Self {
        Self { n_users, n_items, k_user_topics: 0, k_item_latents: dim, variant: Variant::Vector }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn k_user_topics(&self) -> usize {
        self.k_user_topics
    }

    pub fn k_item_latents(&self) -> usize {
        self.k_item_latents
    }

    /// Total number of input features.
    pub fn dim(&self) -> usize {
        self.n_users + self.n_items + self.k_user_topics + self.k_item_latents
    }

    pub fn user_index(&self, user: usize) -> usize {
        user
    }

    pub fn item_index(&self, item: usize) -> usize {
        self.n_users + item
    }

    pub fn user_topic_index(&self, k: usize) -> usize {
        self.n_users + self.n_items + k
    }

    pub fn item_latent_index(&self, l: usize) -> usize {
        self.n_users + self.n_items + self.k_user_topics + l
    }
}

/// Sparse input vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFeatureVector {
    entries: Vec<(usize, f64)>,
}

impl SparseFeatureVector {
    pub fn new(entries: Vec<(usize, f64)>, dim: usize) -> Result<Self, FmError> {
        for (pos, &(index, value)) in entries.iter().enumerate() {
            if index >= dim {
                return Err(FmError::IndexOutOfRange { index, dim });
            }
            if !value.is_finite() {
                return Err(FmError::NonFinite(index));
            }
            if pos > 0 && entries[pos - 1].0 >= index {
                return Err(FmError::UnsortedIndices);
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// One training or evaluation event.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: SparseFeatureVector,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmModel {
    layout: FeatureLayout,
    rank: usize,
    w0: f64,
    w: Vec<f64>,
    // row-major, one row of `rank` factors per feature
    v: Vec<f64>,
}

impl FmModel {
    pub fn zeros(layout: FeatureLayout, rank: usize) -> Self {
        let dim = layout.dim();
        Self { layout, rank, w0: 0.0, w: vec![0.0; dim], v: vec![0.0; dim * rank] }
    }

    /// Zero biases and weights, factors drawn from `N(0, sigma²)`.
    pub fn random<R: Rng + ?Sized>(layout: FeatureLayout, rank: usize, sigma: f64, rng: &mut R) -> Result<Self, FmError> {
        let mut model = Self::zeros(layout, rank);
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).map_err(|_| FmError::InvalidConfig("init_sigma must be finite"))?;
            for x in &mut model.v {
                *x = normal.sample(rng);
            }
        } else if sigma < 0.0 || sigma.is_nan() {
            return Err(FmError::InvalidConfig("init_sigma must be non-negative"));
        }
        Ok(model)
    }

    pub fn from_parts(layout: FeatureLayout, rank: usize, w0: f64, w: Vec<f64>, v: Vec<f64>) -> Result<Self, FmError> {
        if w.len() != layout.dim() || v.len() != layout.dim() * rank {
            return Err(FmError::Shape);
        }
        Ok(Self { layout, rank, w0, w, v })
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn set_w0(&mut self, w0: f64) {
        self.w0 = w0;
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    /// Factor row of feature `j`.
    pub fn factors(&self, j: usize) -> &[f64] {
        &self.v[j * self.rank..(j + 1) * self.rank]
    }

    pub fn factors_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.v[j * self.rank..(j + 1) * self.rank]
    }

    /// All factor rows, row-major.
    pub fn factor_matrix(&self) -> &[f64] {
        &self.v
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w.iter().all(|x| x.is_finite()) && self.v.iter().all(|x| x.is_finite())
    }

    /// Linear-time prediction.
    pub fn predict(&self, x: &SparseFeatureVector) -> f64 {
        let entries = x.entries();
        let mut y = self.w0;
        for &(j, xj) in entries {
            y += self.w[j] * xj;
        }
        for f in 0..self.rank {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for &(j, xj) in entries {
                let t = self.v[j * self.rank + f] * xj;
                sum += t;
                sum_sq += t * t;
            }
            y += 0.5 * (sum * sum - sum_sq);
        }
        y
    }

    /// Quadratic-time prediction by explicit enumeration of feature pairs.
    pub fn predict_naive(&self, x: &SparseFeatureVector) -> f64 {
        let entries = x.entries();
        let mut y = self.w0;
        for &(j, xj) in entries {
            y += self.w[j] * xj;
        }
        for (a, &(j, xj)) in entries.iter().enumerate() {
            for &(k, xk) in &entries[a + 1..] {
                let inner: f64 = self.factors(j).iter().zip(self.factors(k)).map(|(p, q)| p * q).sum();
                y += inner * xj * xk;
            }
        }
        y
    }
}
