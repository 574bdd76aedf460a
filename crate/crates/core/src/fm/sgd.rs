//! Stochastic gradient descent for the squared loss.
//!
//! Per example the objective is
//!
//! ```text
//! ½ (ŷ(x) − r)² + ½ λ0 w0² + ½ λw Σ_{j∈x} w_j² + ½ λv Σ_{j∈x} ‖V_j‖²
//! ```
//!
//! so only the parameters of active features are regularized. The pairwise
//! gradient reuses the per-factor sums `Σ_j V_jf x_j` of the prediction.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Example, FeatureLayout, FmError, FmModel, SparseFeatureVector};
use crate::corpus::RatingScale;
use crate::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Factor rank.
    pub rank: usize,
    pub lr: f64,
    pub reg_w0: f64,
    pub reg_w: f64,
    pub reg_v: f64,
    pub epochs: usize,
    /// Standard deviation of the initial factors.
    pub init_sigma: f64,
    pub seed: u64,
    /// Clamp predictions to the rating scale when measuring RMSE.
    pub clamp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            lr: 0.01,
            reg_w0: 0.01,
            reg_w: 0.01,
            reg_v: 0.01,
            epochs: 300,
            init_sigma: 0.1,
            seed: 1,
            clamp: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FmError> {
        if self.rank == 0 {
            return Err(FmError::InvalidConfig("rank must be at least 1"));
        }
        // lr = 0 is accepted: training becomes the identity.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(FmError::InvalidConfig("lr must be non-negative"));
        }
        if [self.reg_w0, self.reg_w, self.reg_v].iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(FmError::InvalidConfig("regularization must be non-negative"));
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return Err(FmError::InvalidConfig("init_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Per-example objective (see the module docs).
pub fn example_objective(model: &FmModel, x: &SparseFeatureVector, rating: f64, config: &TrainConfig) -> f64 {
    let err = model.predict(x) - rating;
    let mut reg = config.reg_w0 * model.w0() * model.w0();
    for &(j, _) in x.entries() {
        reg += config.reg_w * model.weights()[j] * model.weights()[j];
        reg += config.reg_v * model.factors(j).iter().map(|v| v * v).sum::<f64>();
    }
    0.5 * err * err + 0.5 * reg
}

/// Gradient of [`example_objective`] over the parameters it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct FmGradient {
    pub w0: f64,
    pub w: Vec<(usize, f64)>,
    pub v: Vec<(usize, Vec<f64>)>,
}

fn factor_sums(model: &FmModel, x: &SparseFeatureVector, sums: &mut [f64]) {
    sums.fill(0.0);
    for &(j, xj) in x.entries() {
        for (s, v) in sums.iter_mut().zip(model.factors(j)) {
            *s += v * xj;
        }
    }
}

pub fn example_gradient(model: &FmModel, x: &SparseFeatureVector, rating: f64, config: &TrainConfig) -> FmGradient {
    let mut sums = vec![0.0; model.rank()];
    factor_sums(model, x, &mut sums);
    let err = model.predict(x) - rating;
    FmGradient {
        w0: err + config.reg_w0 * model.w0(),
        w: x.entries().iter().map(|&(j, xj)| (j, err * xj + config.reg_w * model.weights()[j])).collect(),
        v: x
            .entries()
            .iter()
            .map(|&(j, xj)| {
                let row = model
                    .factors(j)
                    .iter()
                    .zip(&sums)
                    .map(|(&v, &s)| err * xj * (s - v * xj) + config.reg_v * v)
                    .collect();
                (j, row)
            })
            .collect(),
    }
}

// In-place step; equivalent to subtracting lr * example_gradient.
fn sgd_step(model: &mut FmModel, x: &SparseFeatureVector, rating: f64, config: &TrainConfig, sums: &mut [f64]) {
    factor_sums(model, x, sums);
    let mut pred = model.w0();
    for &(j, xj) in x.entries() {
        pred += model.weights()[j] * xj;
    }
    for (f, &s) in sums.iter().enumerate() {
        let sq: f64 = x.entries().iter().map(|&(j, xj)| { let t = model.factors(j)[f] * xj; t * t }).sum();
        pred += 0.5 * (s * s - sq);
    }
    let err = pred - rating;
    let lr = config.lr;

    let w0 = model.w0();
    model.set_w0(w0 - lr * (err + config.reg_w0 * w0));
    for &(j, xj) in x.entries() {
        let w = &mut model.weights_mut()[j];
        *w -= lr * (err * xj + config.reg_w * *w);
        for (v, &s) in model.factors_mut(j).iter_mut().zip(sums.iter()) {
            *v -= lr * (err * xj * (s - *v * xj) + config.reg_v * *v);
        }
    }
}

fn predict_for_eval(model: &FmModel, x: &SparseFeatureVector, clamp: Option<RatingScale>) -> f64 {
    let y = model.predict(x);
    match clamp {
        Some(scale) => scale.clamp(y),
        None => y,
    }
}

/// RMSE of the model over `examples`, optionally clamping predictions.
pub fn evaluate_rmse(model: &FmModel, examples: &[Example], clamp: Option<RatingScale>) -> Result<f64, FmError> {
    let preds: Vec<f64> = examples.iter().map(|e| predict_for_eval(model, &e.x, clamp)).collect();
    let truths: Vec<f64> = examples.iter().map(|e| e.rating).collect();
    crate::eval::rmse(&preds, &truths).map_err(|_| FmError::EmptyExamples)
}

/// Runs SGD epochs over a fixed model, shuffling with its own seeded stream.
#[derive(Debug, Clone)]
pub struct SgdTrainer {
    model: FmModel,
    config: TrainConfig,
    rng: SeededRng,
    clamp: Option<RatingScale>,
    epoch: usize,
    order: Vec<usize>,
    sums: Vec<f64>,
}

impl SgdTrainer {
    pub fn new(model: FmModel, config: TrainConfig, rng: SeededRng) -> Result<Self, FmError> {
        config.validate()?;
        if model.rank() != config.rank {
            return Err(FmError::Shape);
        }
        let sums = vec![0.0; model.rank()];
        Ok(Self { model, config, rng, clamp: None, epoch: 0, order: Vec::new(), sums })
    }

    /// Clamp predictions to `scale` when computing the epoch RMSE.
    pub fn with_clamp(mut self, scale: Option<RatingScale>) -> Self {
        self.clamp = scale;
        self
    }

    /// One shuffled pass. Returns the training RMSE after the pass.
    pub fn run_epoch(&mut self, examples: &[Example]) -> Result<f64, FmError> {
        if examples.is_empty() {
            return Err(FmError::EmptyExamples);
        }
        self.epoch += 1;
        self.order.clear();
        self.order.extend(0..examples.len());
        self.order.shuffle(&mut self.rng);
        for &idx in &self.order {
            let ex = &examples[idx];
            sgd_step(&mut self.model, &ex.x, ex.rating, &self.config, &mut self.sums);
        }
        if !self.model.is_finite() {
            return Err(FmError::Diverged { epoch: self.epoch });
        }
        let rmse = evaluate_rmse(&self.model, examples, self.clamp)?;
        if !rmse.is_finite() {
            return Err(FmError::Diverged { epoch: self.epoch });
        }
        Ok(rmse)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &FmModel {
        &self.model
    }

    pub fn into_model(self) -> FmModel {
        self.model
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

/// Full training run.
///
/// `w0` starts at the mean training rating, linear weights at zero and factors
/// at `N(0, init_sigma²)`. After every epoch both RMSEs are measured (clamped
/// to `scale` when `config.clamp` is set and a scale is given) and handed to
/// `on_epoch` before the next epoch starts.
pub fn train_fm(
    layout: FeatureLayout,
    train: &[Example],
    test: &[Example],
    config: &TrainConfig,
    scale: Option<RatingScale>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(FmModel, Vec<EpochMetrics>), FmError> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(FmError::EmptyExamples);
    }
    let clamp = if config.clamp { scale } else { None };
    let mut rng = crate::seeded_rng(config.seed);
    let mut model = FmModel::random(layout, config.rank, config.init_sigma, &mut rng)?;
    model.set_w0(train.iter().map(|e| e.rating).sum::<f64>() / train.len() as f64);

    let mut trainer = SgdTrainer::new(model, *config, rng)?.with_clamp(clamp);
    let mut metrics = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let train_rmse = trainer.run_epoch(train)?;
        let test_rmse = evaluate_rmse(trainer.model(), test, clamp)?;
        let m = EpochMetrics { epoch: trainer.epoch(), train_rmse, test_rmse };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok((trainer.into_model(), metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::{encode_baseline, FeatureLayout};
    use rand::Rng;

    fn random_model(seed: u64) -> (FmModel, SparseFeatureVector, f64) {
        let mut rng = crate::seeded_rng(seed);
        let layout = FeatureLayout::baseline(4, 4);
        let mut model = FmModel::random(layout, 3, 0.5, &mut rng).unwrap();
        model.set_w0(rng.random_range(-1.0..1.0));
        for w in model.weights_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        let mut entries = Vec::new();
        for j in 0..8 {
            if rng.random_bool(0.5) {
                entries.push((j, rng.random_range(-1.5..1.5)));
            }
        }
        (model, SparseFeatureVector::new(entries, 8).unwrap(), rng.random_range(1.0..5.0))
    }

    fn config() -> TrainConfig {
        TrainConfig { rank: 3, reg_w0: 0.03, reg_w: 0.05, reg_v: 0.07, ..TrainConfig::default() }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        let cfg = config();
        for seed in 0..20 {
            let (model, x, r) = random_model(seed);
            let grad = example_gradient(&model, &x, r, &cfg);
            let check = |analytic: f64, perturb: &dyn Fn(&mut FmModel, f64)| {
                let mut plus = model.clone();
                perturb(&mut plus, h);
                let mut minus = model.clone();
                perturb(&mut minus, -h);
                let numeric = (example_objective(&plus, &x, r, &cfg) - example_objective(&minus, &x, r, &cfg)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                assert!(rel < 1e-4, "analytic {analytic} numeric {numeric}");
            };
            check(grad.w0, &|m, d| m.set_w0(m.w0() + d));
            for &(j, g) in &grad.w {
                check(g, &|m, d| m.weights_mut()[j] += d);
            }
            for (j, row) in &grad.v {
                for (f, &g) in row.iter().enumerate() {
                    check(g, &|m, d| m.factors_mut(*j)[f] += d);
                }
            }
        }
    }

    #[test]
    fn step_follows_gradient() {
        let cfg = TrainConfig { lr: 0.05, ..config() };
        for seed in 0..10 {
            let (model, x, r) = random_model(seed);
            let grad = example_gradient(&model, &x, r, &cfg);
            let mut expected = model.clone();
            expected.set_w0(model.w0() - cfg.lr * grad.w0);
            for &(j, g) in &grad.w {
                expected.weights_mut()[j] -= cfg.lr * g;
            }
            for (j, row) in &grad.v {
                for (v, g) in expected.factors_mut(*j).iter_mut().zip(row) {
                    *v -= cfg.lr * g;
                }
            }
            let mut stepped = model.clone();
            sgd_step(&mut stepped, &x, r, &cfg, &mut [0.0; 3]);
            assert_eq!(stepped.w0(), expected.w0());
            for (a, b) in stepped.weights().iter().zip(expected.weights()) {
                assert!((a - b).abs() < 1e-14);
            }
            for (a, b) in stepped.factor_matrix().iter().zip(expected.factor_matrix()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    fn toy_examples() -> (FeatureLayout, Vec<Example>) {
        let layout = FeatureLayout::baseline(3, 3);
        let examples = [(0, 0, 4.0), (0, 1, 3.0), (1, 1, 2.0), (2, 2, 5.0), (1, 0, 3.5)]
            .iter()
            .map(|&(u, i, r)| Example { x: encode_baseline(Some(u), Some(i), &layout).unwrap(), rating: r })
            .collect();
        (layout, examples)
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (layout, examples) = toy_examples();
        let model = FmModel::random(layout, 3, 0.1, &mut crate::seeded_rng(1)).unwrap();
        let cfg = TrainConfig { lr: 0.0, rank: 3, ..TrainConfig::default() };
        let mut trainer = SgdTrainer::new(model.clone(), cfg, crate::seeded_rng(2)).unwrap();
        for _ in 0..3 {
            trainer.run_epoch(&examples).unwrap();
        }
        assert_eq!(trainer.model(), &model);
    }

    #[test]
    fn bias_only_fixed_point() {
        let layout = FeatureLayout::baseline(1, 1);
        let ex = [Example { x: encode_baseline(Some(0), Some(0), &layout).unwrap(), rating: 4.2 }];
        let cfg = TrainConfig {
            rank: 2,
            lr: 0.1,
            reg_w0: 0.0,
            reg_w: 0.0,
            reg_v: 0.0,
            init_sigma: 0.0,
            ..TrainConfig::default()
        };
        let mut trainer = SgdTrainer::new(FmModel::zeros(layout, 2), cfg, crate::seeded_rng(0)).unwrap();
        for _ in 0..200 {
            trainer.run_epoch(&ex).unwrap();
        }
        assert!((trainer.model().predict(&ex[0].x) - 4.2).abs() < 1e-9);
        assert!(trainer.model().factor_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_epochs_predicts_the_mean() {
        let (layout, examples) = toy_examples();
        let cfg = TrainConfig { epochs: 0, rank: 3, ..TrainConfig::default() };
        let (train, test) = examples.split_at(3);
        let (model, metrics) = train_fm(layout, train, test, &cfg, None, |_| {}).unwrap();
        assert!(metrics.is_empty());
        let mean = (4.0 + 3.0 + 2.0) / 3.0;
        let sd: f64 = (test.iter().map(|e| (e.rating - mean).powi(2)).sum::<f64>() / test.len() as f64).sqrt();
        let x = encode_baseline(Some(2), Some(2), &layout).unwrap();
        // factors are random, but a single-feature input has no pairs
        let lone = SparseFeatureVector::new(vec![x.entries()[0]], layout.dim()).unwrap();
        assert_eq!(model.predict(&lone), mean);
        let test_bias_only: Vec<Example> =
            test.iter().map(|e| Example { x: SparseFeatureVector::default(), rating: e.rating }).collect();
        assert!((evaluate_rmse(&model, &test_bias_only, None).unwrap() - sd).abs() < 1e-12);
    }

    #[test]
    fn training_is_seeded_and_clamped() {
        let (layout, examples) = toy_examples();
        let cfg = TrainConfig { epochs: 20, rank: 3, lr: 0.05, ..TrainConfig::default() };
        let scale = RatingScale::new(1.0, 5.0).unwrap();
        let mut seen = 0;
        let a = train_fm(layout, &examples, &examples, &cfg, Some(scale), |_| seen += 1).unwrap();
        let b = train_fm(layout, &examples, &examples, &cfg, Some(scale), |_| {}).unwrap();
        assert_eq!(seen, 20);
        assert_eq!(a, b);
        assert!(a.1.windows(2).take(10).all(|w| w[1].train_rmse <= w[0].train_rmse));
    }

    #[test]
    fn divergence_is_reported() {
        let (layout, examples) = toy_examples();
        let cfg = TrainConfig { epochs: 50, rank: 3, lr: 1e3, init_sigma: 1.0, ..TrainConfig::default() };
        let err = train_fm(layout, &examples, &examples, &cfg, None, |_| {}).unwrap_err();
        assert!(matches!(err, FmError::Diverged { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { rank: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { reg_v: -0.1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        let (layout, examples) = toy_examples();
        assert_eq!(
            train_fm(layout, &[], &examples, &TrainConfig::default(), None, |_| {}).unwrap_err(),
            FmError::EmptyExamples
        );
    }
}
