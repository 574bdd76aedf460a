//! Term-by-term evaluators of the latent-feature prediction formulas.
//!
//! These never go through the FM's pairwise identity. They read the model's
//! parameters under their matrix-factorization names (global bias, user and
//! item biases, user/item factor vectors, per-topic weights and factor rows)
//! and add up exactly the terms each formula lists, so they serve as oracles
//! for the encoders plus [`FmModel::predict`].
//!
//! A one-hot FM encoding also produces user×latent and item×latent cross
//! terms that the topic and vector formulas do not list; those are available
//! separately through [`one_hot_latent_cross`].

use crate::linalg::dot;

use super::FmModel;

/// Parameters of one `(user, item)` pair, aliasing the model's storage.
#[derive(Debug, Clone, Copy)]
pub struct LatentParams<'a> {
    model: &'a FmModel,
    user: usize,
    item: usize,
}

impl<'a> LatentParams<'a> {
    pub fn new(model: &'a FmModel, user: usize, item: usize) -> Self {
        Self { model, user, item }
    }

    pub fn global_bias(&self) -> f64 {
        self.model.w0()
    }

    pub fn user_bias(&self) -> f64 {
        self.model.weights()[self.model.layout().user_index(self.user)]
    }

    pub fn item_bias(&self) -> f64 {
        self.model.weights()[self.model.layout().item_index(self.item)]
    }

    pub fn user_factors(&self) -> &'a [f64] {
        self.model.factors(self.model.layout().user_index(self.user))
    }

    pub fn item_factors(&self) -> &'a [f64] {
        self.model.factors(self.model.layout().item_index(self.item))
    }

    pub fn user_topic_weight(&self, k: usize) -> f64 {
        self.model.weights()[self.model.layout().user_topic_index(k)]
    }

    pub fn user_topic_factors(&self, k: usize) -> &'a [f64] {
        self.model.factors(self.model.layout().user_topic_index(k))
    }

    pub fn item_latent_weight(&self, l: usize) -> f64 {
        self.model.weights()[self.model.layout().item_latent_index(l)]
    }

    pub fn item_latent_factors(&self, l: usize) -> &'a [f64] {
        self.model.factors(self.model.layout().item_latent_index(l))
    }

    fn mf_part(&self) -> f64 {
        self.global_bias() + self.user_bias() + self.item_bias() + dot(self.user_factors(), self.item_factors())
    }
}

/// Topic-based prediction: biases, the user·item factor product, linear topic
/// weights, user-topic and item-topic self crosses (`k < l`) and every
/// user-topic × item-topic cross.
pub fn expanded_topic_prediction(params: &LatentParams<'_>, theta_user: &[f64], theta_item: &[f64]) -> f64 {
    let mut y = params.mf_part();

    for (k, &t) in theta_user.iter().enumerate() {
        y += t * params.user_topic_weight(k);
    }
    for (l, &t) in theta_item.iter().enumerate() {
        y += t * params.item_latent_weight(l);
    }

    for k in 0..theta_user.len() {
        for l in k + 1..theta_user.len() {
            y += theta_user[k] * theta_user[l] * dot(params.user_topic_factors(k), params.user_topic_factors(l));
        }
    }
    for k in 0..theta_item.len() {
        for l in k + 1..theta_item.len() {
            y += theta_item[k] * theta_item[l] * dot(params.item_latent_factors(k), params.item_latent_factors(l));
        }
    }

    for (k, &tu) in theta_user.iter().enumerate() {
        for (l, &ti) in theta_item.iter().enumerate() {
            y += tu * ti * dot(params.user_topic_factors(k), params.item_latent_factors(l));
        }
    }
    y
}

/// Vector-based prediction: biases, the user·item factor product, linear
/// weights on the item vector and the item-vector self crosses (`k < l`).
pub fn expanded_vector_prediction(params: &LatentParams<'_>, item_vector: &[f64]) -> f64 {
    let mut y = params.mf_part();
    for (l, &v) in item_vector.iter().enumerate() {
        y += v * params.item_latent_weight(l);
    }
    for k in 0..item_vector.len() {
        for l in k + 1..item_vector.len() {
            y += item_vector[k] * item_vector[l] * dot(params.item_latent_factors(k), params.item_latent_factors(l));
        }
    }
    y
}

/// The crosses between the user/item one-hots and the latent features:
/// `Σ_k x_k ⟨p_u + q_i, e_k⟩` over both latent blocks.
pub fn one_hot_latent_cross(params: &LatentParams<'_>, latent_user: &[f64], latent_item: &[f64]) -> f64 {
    let p = params.user_factors();
    let q = params.item_factors();
    let mut y = 0.0;
    for (k, &x) in latent_user.iter().enumerate() {
        let e = params.user_topic_factors(k);
        y += x * (dot(p, e) + dot(q, e));
    }
    for (l, &x) in latent_item.iter().enumerate() {
        let e = params.item_latent_factors(l);
        y += x * (dot(p, e) + dot(q, e));
    }
    y
}

/// M3F-TIB: `p_u·q_i + Σ_k θ_uk w_uk + Σ_l θ_il w_il`.
pub fn m3f_tib(
    user_factors: &[f64],
    item_factors: &[f64],
    theta_user: &[f64],
    theta_item: &[f64],
    user_topic_weights: &[f64],
    item_topic_weights: &[f64],
) -> f64 {
    dot(user_factors, item_factors) + dot(theta_user, user_topic_weights) + dot(theta_item, item_topic_weights)
}

/// M3F-TIF: `p_u·q_i + Σ_k Σ_l θ_uk θ_il e_uk·e_il`, with one topic-indexed
/// vector per user topic and per item topic.
pub fn m3f_tif<E: AsRef<[f64]>>(
    user_factors: &[f64],
    item_factors: &[f64],
    theta_user: &[f64],
    theta_item: &[f64],
    user_topic_vectors: &[E],
    item_topic_vectors: &[E],
) -> f64 {
    let mut y = dot(user_factors, item_factors);
    for (k, &tu) in theta_user.iter().enumerate() {
        for (l, &ti) in theta_item.iter().enumerate() {
            y += tu * ti * dot(user_topic_vectors[k].as_ref(), item_topic_vectors[l].as_ref());
        }
    }
    y
}
