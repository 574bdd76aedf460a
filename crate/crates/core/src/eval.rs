//! RMSE, per-epoch metric records and the iteration summary table.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fm::Variant;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("cannot compute RMSE of empty inputs")]
    Empty,
    #[error("{predictions} predictions for {truths} ratings")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("{variant}_{latent_dim} has no records for epochs {missing:?}")]
    MissingEpochs { variant: Variant, latent_dim: usize, missing: Vec<usize> },
}

/// Root mean squared error.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let sq: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(libm::sqrt(sq / predictions.len() as f64))
}

/// One epoch of one model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub variant: Variant,
    /// Width of the latent block (0 for the baseline).
    pub latent_dim: usize,
    /// 1-based.
    pub epoch: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub wall_seconds: f64,
}

/// Test RMSE of one `(variant, latent_dim)` at selected epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: Variant,
    pub latent_dim: usize,
    /// `(epoch, test_rmse)` in the requested order.
    pub values: Vec<(usize, f64)>,
}

impl SummaryRow {
    /// `baseline`, `topic_20`, ...
    pub fn label(&self) -> alloc::string::String {
        label(self.variant, self.latent_dim)
    }
}

pub fn label(variant: Variant, latent_dim: usize) -> alloc::string::String {
    match variant {
        Variant::Baseline => alloc::string::String::from("baseline"),
        v => alloc::format!("{v}_{latent_dim}"),
    }
}

/// Projects `records` onto one row per `(variant, latent_dim)`, in order of
/// first appearance, with the test RMSE at each of `epochs`.
pub fn summarize(records: &[MetricsRecord], epochs: &[usize]) -> Result<Vec<SummaryRow>, EvalError> {
    let mut keys: Vec<(Variant, usize)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.variant, r.latent_dim)) {
            keys.push((r.variant, r.latent_dim));
        }
    }
    keys.into_iter()
        .map(|(variant, latent_dim)| {
            let mut values = Vec::with_capacity(epochs.len());
            let mut missing = Vec::new();
            for &epoch in epochs {
                let found = records
                    .iter()
                    .find(|r| r.variant == variant && r.latent_dim == latent_dim && r.epoch == epoch);
                match found {
                    Some(r) => values.push((epoch, r.test_rmse)),
                    None => missing.push(epoch),
                }
            }
            if missing.is_empty() {
                Ok(SummaryRow { variant, latent_dim, values })
            } else {
                Err(EvalError::MissingEpochs { variant, latent_dim, missing })
            }
        })
        .collect()
}
