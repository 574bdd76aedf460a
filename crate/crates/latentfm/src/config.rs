//! JSON configuration shared by every subcommand.
//!
//! ```json
//! {
//!   "dataset": { "path": "data/ml-100k/u.data", "format": "tsv", "scale": { "min": 1, "max": 5 } },
//!   "split": { "policy": "random", "fraction": 0.1, "seed": 42 },
//!   "variants": ["baseline", "topic_8", "topic_20"],
//!   "topic_sides": "both",
//!   "model": "baseline",
//!   "model_file": null,
//!   "lda": { "k": 8, "alpha": 0.5, "beta": 0.1, "iterations": 300, "seed": 1 },
//!   "skipgram": { "dim": 8, "window": 3, "negatives": 5, "epochs": 5, "lr": 0.025, "seed": 1 },
//!   "fm": { "rank": 8, "lr": 0.01, "reg_w0": 0.01, "reg_w": 0.01, "reg_v": 0.01,
//!           "epochs": 300, "init_sigma": 0.1, "seed": 1, "clamp": true },
//!   "summary_epochs": [100, 200, 300],
//!   "output": "out"
//! }
//! ```
//!
//! A file only needs the keys it changes. Unknown keys are rejected.
//! Overrides use dotted keys (`lda.k=20`); the value is parsed as JSON and
//! falls back to a plain string.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use latentfm_core::corpus::SplitPolicy;
use latentfm_core::{LdaConfig, RatingScale, SkipGramConfig, TrainConfig, Variant};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::formats::DataFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: DataFormat,
    pub scale: RatingScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Random,
    Chronological,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub policy: SplitKind,
    /// Share of records held out for testing.
    pub fraction: f64,
    /// Only used by the random policy.
    pub seed: u64,
}

impl SplitConfig {
    pub fn policy(&self) -> SplitPolicy {
        match self.policy {
            SplitKind::Random => SplitPolicy::Random { fraction: self.fraction, seed: self.seed },
            SplitKind::Chronological => SplitPolicy::Chronological { fraction: self.fraction },
        }
    }
}

/// Which sides receive topic features in topic variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicSides {
    User,
    Item,
    Both,
}

impl TopicSides {
    pub fn user(&self) -> bool {
        matches!(self, TopicSides::User | TopicSides::Both)
    }

    pub fn item(&self) -> bool {
        matches!(self, TopicSides::Item | TopicSides::Both)
    }
}

/// A model variant with its latent width: `baseline`, `topic_K` or `vector_D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariantSpec {
    pub variant: Variant,
    pub latent_dim: usize,
}

impl VariantSpec {
    pub const BASELINE: VariantSpec = VariantSpec { variant: Variant::Baseline, latent_dim: 0 };
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&latentfm_core::eval::label(self.variant, self.latent_dim))
    }
}

impl FromStr for VariantSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "baseline" {
            return Ok(Self::BASELINE);
        }
        let bad = || format!("unknown variant {s:?} (expected baseline, topic_K or vector_D)");
        let (name, dim) = s.split_once('_').ok_or_else(bad)?;
        let variant = match name {
            "topic" => Variant::Topic,
            "vector" => Variant::Vector,
            _ => return Err(bad()),
        };
        let latent_dim: usize = dim.parse().map_err(|_| bad())?;
        if latent_dim == 0 {
            return Err(format!("variant {s:?} needs a positive width"));
        }
        Ok(Self { variant, latent_dim })
    }
}

impl Serialize for VariantSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VariantSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    /// Variants compared by `experiment`.
    pub variants: Vec<VariantSpec>,
    pub topic_sides: TopicSides,
    /// Variant used by `train` and `evaluate`.
    pub model: VariantSpec,
    /// Defaults to `<output>/model.txt`.
    pub model_file: Option<PathBuf>,
    pub lda: LdaConfig,
    pub skipgram: SkipGramConfig,
    pub fm: TrainConfig,
    /// Epochs reported in the summary table.
    pub summary_epochs: Vec<usize>,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig {
                path: PathBuf::from("data/ml-100k/u.data"),
                format: DataFormat::Tsv,
                scale: RatingScale { min: 1.0, max: 5.0 },
            },
            split: SplitConfig { policy: SplitKind::Random, fraction: 0.1, seed: 42 },
            variants: vec![
                VariantSpec::BASELINE,
                VariantSpec { variant: Variant::Topic, latent_dim: 8 },
                VariantSpec { variant: Variant::Topic, latent_dim: 20 },
            ],
            topic_sides: TopicSides::Both,
            model: VariantSpec::BASELINE,
            model_file: None,
            lda: LdaConfig::default(),
            skipgram: SkipGramConfig::default(),
            fm: TrainConfig::default(),
            summary_epochs: vec![100, 200, 300],
            output: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Defaults, then `file` (if any), then each `KEY=VALUE` override.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default()).expect("default config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let user: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if !user.is_object() {
                return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
            }
            merge(&mut value, user);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Sets every seed (split, LDA, skip-gram, FM) to `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.lda.seed = seed;
        self.skipgram.seed = seed;
        self.fm.seed = seed;
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_file.clone().unwrap_or_else(|| self.output.join("model.txt"))
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |e: &dyn fmt::Display| Error::Config(e.to_string());
        RatingScale::new(self.dataset.scale.min, self.dataset.scale.max).map_err(|e| invalid(&e))?;
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return Err(Error::Config(format!("split.fraction must lie in (0, 1), got {}", self.split.fraction)));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant must be selected".into()));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return Err(Error::Config(format!("variant {v} is listed twice")));
            }
        }
        self.lda.validate().map_err(|e| invalid(&format!("lda: {e}")))?;
        self.skipgram.validate().map_err(|e| invalid(&format!("skipgram: {e}")))?;
        self.fm.validate().map_err(|e| invalid(&format!("fm: {e}")))?;
        if let Some(&e) = self.summary_epochs.iter().find(|&&e| e == 0 || e > self.fm.epochs) {
            return Err(Error::Config(format!("summary epoch {e} is outside 1..={}", self.fm.epochs)));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn apply_override(value: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not KEY=VALUE")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {} is not a section", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        slot = obj.get_mut(*part).expect("checked above");
    }
    *slot = parsed;
    Ok(())
}
