//! Rating prediction with second-order factorization machines whose inputs
//! are enriched by latent features learned from viewing histories.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the pure
//! algorithmic pieces:
//!
//! * [`corpus`]: dense-id rating datasets, train/test splits and the
//!   user/item "documents" built from viewing histories.
//! * [`lda`]: a collapsed Gibbs sampler producing per-document topic
//!   proportions.
//! * [`embed`]: skip-gram with negative sampling over time-ordered user
//!   histories, producing item vectors.
//! * [`fm`]: the factorization machine itself, the sparse feature encoders for
//!   the baseline / topic / vector variants, SGD training and explicit
//!   term-by-term reference evaluators.
//! * [`eval`]: RMSE, per-epoch metric records and tabular summaries.
//!
//! File formats, configuration, the experiment runner and the command line
//! live in the companion `latentfm` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod fm;
pub mod lda;

mod linalg;

pub use corpus::{Dataset, ItemDocument, Rating, RatingRecord, RatingScale, Split, SplitPolicy, UserDocument};
pub use embed::{ItemVector, SkipGramConfig, SkipGramModel};
pub use eval::{rmse, MetricsRecord, SummaryRow};
pub use fm::{Example, FeatureLayout, FmModel, SparseFeatureVector, TrainConfig, Variant};
pub use lda::{LdaConfig, LdaState, TopicVector};

/// The generator used for every seeded operation in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's seeded generator.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
