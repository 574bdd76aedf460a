#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ratings from two taste groups: users in a group rate that group's items
/// higher. Tab separated with timestamps.
pub fn synthetic_ratings(n_users: usize, n_items: usize, per_user: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for u in 0..n_users {
        let group = u % 2;
        let mut items: Vec<usize> = (0..n_items).collect();
        for i in (1..items.len()).rev() {
            items.swap(i, rng.random_range(0..=i));
        }
        for (t, &i) in items.iter().take(per_user).enumerate() {
            let liked = (i % 2 == group) as u8 as f64;
            let noise: f64 = rng.random_range(-0.6..0.6);
            let r = (2.0 + 2.0 * liked + noise).round().clamp(1.0, 5.0);
            writeln!(out, "u{u}\ti{i}\t{r}\t{}", 1000 + 10 * t + u).unwrap();
        }
    }
    out
}

pub fn write_synthetic(dir: &Path) -> PathBuf {
    let path = dir.join("ratings.tsv");
    std::fs::write(&path, synthetic_ratings(40, 30, 12, 7)).unwrap();
    path
}

/// A short experiment config over `data` writing to `out`.
pub fn small_config(data: &Path, out: &Path) -> String {
    serde_json::json!({
        "dataset": { "path": data, "format": "tsv" },
        "variants": ["baseline", "topic_2", "vector_4"],
        "lda": { "iterations": 30 },
        "skipgram": { "epochs": 3 },
        "fm": { "epochs": 20, "rank": 4, "lr": 0.02 },
        "summary_epochs": [10, 20],
        "output": out
    })
    .to_string()
}
