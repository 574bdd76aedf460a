//! Rating datasets with dense ids, train/test splitting and history documents.
//!
//! A [`Dataset`] is the sparse rating matrix: a list of `(user, item, rating,
//! timestamp)` records whose users and items have been mapped onto contiguous
//! indices `0..N` and `0..M`. Splits share the parent's id maps so that an
//! index means the same thing on both sides.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("invalid rating scale [{min}, {max}]")]
    InvalidScale { min: f64, max: f64 },
    #[error("rating {rating} of record {index} lies outside the scale [{min}, {max}]")]
    OutOfScale { index: usize, rating: f64, min: f64, max: f64 },
    #[error("record {index} references user {user} / item {item} outside the id range")]
    IndexOutOfRange { index: usize, user: usize, item: usize },
    #[error("duplicate rating for user {user}, item {item}")]
    DuplicatePair { user: usize, item: usize },
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("the chronological split needs a timestamp on every record")]
    MissingTimestamps,
    #[error("test pair (user {user}, item {item}) also appears in the training data")]
    Leakage { user: usize, item: usize },
}

/// Inclusive range of valid ratings, e.g. `[1, 5]` or `[0.5, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self, CorpusError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(CorpusError::InvalidScale { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }

    pub fn clamp(&self, rating: f64) -> f64 {
        rating.clamp(self.min, self.max)
    }
}

/// A rating as read from a file, with external ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    /// Seconds since the epoch.
    pub timestamp: Option<u64>,
}

/// A rating with dense user and item indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: Option<u64>,
}

/// Bijection between external id strings and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    index: BTreeMap<String, usize>,
    external: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Identity-like map whose external ids are the decimal indices.
    pub fn sequential(len: usize) -> Self {
        let mut map = Self::new();
        for idx in 0..len {
            map.get_or_insert(&idx.to_string());
        }
        map
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.external.len();
        self.index.insert(id.to_string(), idx);
        self.external.push(id.to_string());
        idx
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, idx: usize) -> Option<&str> {
        self.external.get(idx).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.external.iter().enumerate().map(|(i, s)| (i, s.as_str()))
    }
}

/// The sparse rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    users: Arc<IdMap>,
    items: Arc<IdMap>,
    records: Vec<Rating>,
    scale: RatingScale,
}

impl Dataset {
    /// Builds a dataset from external-id records.
    ///
    /// Dense ids are assigned in order of first appearance. When a
    /// `(user, item)` pair occurs more than once the record with the latest
    /// timestamp wins (the later one on ties), keeping the position of the
    /// first occurrence.
    pub fn from_records<I>(records: I, scale: RatingScale) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = RatingRecord>,
    {
        let mut users = IdMap::new();
        let mut items = IdMap::new();
        let mut out: Vec<Rating> = Vec::new();
        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();

        for (index, record) in records.into_iter().enumerate() {
            if !scale.contains(record.rating) {
                return Err(CorpusError::OutOfScale {
                    index,
                    rating: record.rating,
                    min: scale.min,
                    max: scale.max,
                });
            }
            let rating = Rating {
                user: users.get_or_insert(&record.user),
                item: items.get_or_insert(&record.item),
                rating: record.rating,
                timestamp: record.timestamp,
            };
            match seen.get(&(rating.user, rating.item)) {
                Some(&pos) => {
                    if rating.timestamp >= out[pos].timestamp {
                        out[pos] = rating;
                    }
                }
                None => {
                    seen.insert((rating.user, rating.item), out.len());
                    out.push(rating);
                }
            }
        }

        Ok(Self {
            users: Arc::new(users),
            items: Arc::new(items),
            records: out,
            scale,
        })
    }

    /// Builds a dataset directly from dense ratings. External ids are the
    /// decimal indices.
    pub fn from_dense(
        n_users: usize,
        n_items: usize,
        records: Vec<Rating>,
        scale: RatingScale,
    ) -> Result<Self, CorpusError> {
        Self::with_maps(
            Arc::new(IdMap::sequential(n_users)),
            Arc::new(IdMap::sequential(n_items)),
            records,
            scale,
        )
    }

    fn with_maps(
        users: Arc<IdMap>,
        items: Arc<IdMap>,
        records: Vec<Rating>,
        scale: RatingScale,
    ) -> Result<Self, CorpusError> {
        let mut pairs = BTreeSet::new();
        for (index, r) in records.iter().enumerate() {
            if r.user >= users.len() || r.item >= items.len() {
                return Err(CorpusError::IndexOutOfRange { index, user: r.user, item: r.item });
            }
            if !scale.contains(r.rating) {
                return Err(CorpusError::OutOfScale {
                    index,
                    rating: r.rating,
                    min: scale.min,
                    max: scale.max,
                });
            }
            if !pairs.insert((r.user, r.item)) {
                return Err(CorpusError::DuplicatePair { user: r.user, item: r.item });
            }
        }
        Ok(Self { users, items, records, scale })
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            users: Arc::clone(&self.users),
            items: Arc::clone(&self.items),
            records: indices.iter().map(|&i| self.records[i]).collect(),
            scale: self.scale,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn records(&self) -> &[Rating] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn user_map(&self) -> &IdMap {
        &self.users
    }

    pub fn item_map(&self) -> &IdMap {
        &self.items
    }

    /// True when every record carries a timestamp.
    pub fn has_timestamps(&self) -> bool {
        self.records.iter().all(|r| r.timestamp.is_some())
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        Some(self.records.iter().map(|r| r.rating).sum::<f64>() / self.records.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum SplitPolicy {
    /// Seeded uniform shuffle, then the first `fraction` of records go to test.
    Random { fraction: f64, seed: u64 },
    /// Per user, the latest `fraction` of records (by timestamp) go to test.
    Chronological { fraction: f64 },
}

impl SplitPolicy {
    pub fn fraction(&self) -> f64 {
        match *self {
            SplitPolicy::Random { fraction, .. } | SplitPolicy::Chronological { fraction } => fraction,
        }
    }
}

/// Which side of a test record is unknown to the training split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ColdStart {
    pub user: bool,
    pub item: bool,
}

impl ColdStart {
    pub fn any(&self) -> bool {
        self.user || self.item
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    /// One entry per test record.
    pub cold_start: Vec<ColdStart>,
}

fn test_count(n: usize, fraction: f64) -> usize {
    libm::round(n as f64 * fraction) as usize
}

/// Partitions `ds` into train and test. Both halves keep the parent's record
/// order and id maps.
pub fn split(ds: &Dataset, policy: SplitPolicy) -> Result<Split, CorpusError> {
    let fraction = policy.fraction();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(fraction));
    }
    let n = ds.len();
    let mut in_test = alloc::vec![false; n];
    match policy {
        SplitPolicy::Random { seed, .. } => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut crate::seeded_rng(seed));
            for &i in &order[..test_count(n, fraction)] {
                in_test[i] = true;
            }
        }
        SplitPolicy::Chronological { .. } => {
            if !ds.has_timestamps() {
                return Err(CorpusError::MissingTimestamps);
            }
            let mut by_user: Vec<Vec<usize>> = alloc::vec![Vec::new(); ds.n_users()];
            for (i, r) in ds.records.iter().enumerate() {
                by_user[r.user].push(i);
            }
            for idxs in &mut by_user {
                idxs.sort_by_key(|&i| (ds.records[i].timestamp, ds.records[i].item));
                let k = test_count(idxs.len(), fraction);
                for &i in &idxs[idxs.len() - k..] {
                    in_test[i] = true;
                }
            }
        }
    }

    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_test[i]);
    let train = ds.subset(&train_idx);
    let test = ds.subset(&test_idx);

    let mut known_users = alloc::vec![false; ds.n_users()];
    let mut known_items = alloc::vec![false; ds.n_items()];
    for r in train.records() {
        known_users[r.user] = true;
        known_items[r.item] = true;
    }
    let cold_start = test
        .records()
        .iter()
        .map(|r| ColdStart { user: !known_users[r.user], item: !known_items[r.item] })
        .collect();

    Ok(Split { train, test, cold_start })
}

/// Fails if any `(user, item)` pair of `test` also occurs in `train`.
pub fn check_disjoint(train: &Dataset, test: &Dataset) -> Result<(), CorpusError> {
    let pairs: BTreeSet<(usize, usize)> = train.records().iter().map(|r| (r.user, r.item)).collect();
    match test.records().iter().find(|r| pairs.contains(&(r.user, r.item))) {
        Some(r) => Err(CorpusError::Leakage { user: r.user, item: r.item }),
        None => Ok(()),
    }
}

/// A user's viewing history: the items they rated, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserDocument {
    pub user: usize,
    pub items: Vec<usize>,
}

/// An item's audience: the users who rated it, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemDocument {
    pub item: usize,
    pub users: Vec<usize>,
}

impl AsRef<[usize]> for UserDocument {
    fn as_ref(&self) -> &[usize] {
        &self.items
    }
}

impl AsRef<[usize]> for ItemDocument {
    fn as_ref(&self) -> &[usize] {
        &self.users
    }
}

// Groups record indices by `key`, ordering each group by timestamp and then by
// `token`. Without complete timestamps the record order is kept.
fn grouped_tokens(
    ds: &Dataset,
    groups: usize,
    key: impl Fn(&Rating) -> usize,
    token: impl Fn(&Rating) -> usize,
) -> Vec<Vec<usize>> {
    let mut grouped: Vec<Vec<&Rating>> = alloc::vec![Vec::new(); groups];
    for r in ds.records() {
        grouped[key(r)].push(r);
    }
    let timed = ds.has_timestamps();
    grouped
        .into_iter()
        .map(|mut rs| {
            if timed {
                rs.sort_by_key(|r| (r.timestamp, token(r)));
            }
            rs.into_iter().map(&token).collect()
        })
        .collect()
}

/// One document per user with at least one record, in user-index order.
pub fn build_user_documents(train: &Dataset) -> Vec<UserDocument> {
    grouped_tokens(train, train.n_users(), |r| r.user, |r| r.item)
        .into_iter()
        .enumerate()
        .filter(|(_, items)| !items.is_empty())
        .map(|(user, items)| UserDocument { user, items })
        .collect()
}

/// One document per item with at least one record, in item-index order.
pub fn build_item_documents(train: &Dataset) -> Vec<ItemDocument> {
    grouped_tokens(train, train.n_items(), |r| r.item, |r| r.user)
        .into_iter()
        .enumerate()
        .filter(|(_, users)| !users.is_empty())
        .map(|(item, users)| ItemDocument { item, users })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scale() -> RatingScale {
        RatingScale::new(1.0, 5.0).unwrap()
    }

    fn rec(user: &str, item: &str, rating: f64, ts: Option<u64>) -> RatingRecord {
        RatingRecord { user: user.into(), item: item.into(), rating, timestamp: ts }
    }

    fn dense(user: usize, item: usize, ts: u64) -> Rating {
        Rating { user, item, rating: 3.0, timestamp: Some(ts) }
    }

    #[test]
    fn three_line_fixture() {
        let ds = Dataset::from_records(
            [
                rec("1", "10", 4.0, Some(100)),
                rec("1", "11", 3.0, Some(200)),
                rec("2", "10", 5.0, Some(150)),
            ],
            scale(),
        )
        .unwrap();
        assert_eq!((ds.n_users(), ds.n_items(), ds.len()), (2, 2, 3));
        assert_eq!(ds.user_map().external(1), Some("2"));
        assert_eq!(ds.item_map().index_of("11"), Some(1));
    }

    #[test]
    fn empty_input() {
        let ds = Dataset::from_records(Vec::new(), scale()).unwrap();
        assert_eq!((ds.n_users(), ds.n_items(), ds.len()), (0, 0, 0));
    }

    #[test]
    fn duplicate_pair_keeps_latest() {
        let ds = Dataset::from_records(
            [rec("a", "x", 2.0, Some(50)), rec("a", "y", 1.0, None), rec("a", "x", 4.0, Some(10))],
            scale(),
        )
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records()[0].rating, 2.0);

        let ds = Dataset::from_records([rec("a", "x", 2.0, Some(10)), rec("a", "x", 4.0, Some(50))], scale())
            .unwrap();
        assert_eq!(ds.records(), &[Rating { user: 0, item: 0, rating: 4.0, timestamp: Some(50) }]);
    }

    #[test]
    fn out_of_scale_rating_is_rejected() {
        let err = Dataset::from_records([rec("a", "x", 2.0, None), rec("a", "y", 5.5, None)], scale())
            .unwrap_err();
        assert!(matches!(err, CorpusError::OutOfScale { index: 1, .. }));
    }

    #[test]
    fn from_dense_validates() {
        let err = Dataset::from_dense(1, 1, alloc::vec![dense(0, 1, 0)], scale()).unwrap_err();
        assert!(matches!(err, CorpusError::IndexOutOfRange { .. }));
        let err = Dataset::from_dense(1, 1, alloc::vec![dense(0, 0, 0), dense(0, 0, 1)], scale()).unwrap_err();
        assert_eq!(err, CorpusError::DuplicatePair { user: 0, item: 0 });
    }

    fn ten_records() -> Dataset {
        let records = (0..10).map(|i| dense(i % 3, i, i as u64)).collect();
        Dataset::from_dense(3, 10, records, scale()).unwrap()
    }

    #[test]
    fn random_split_is_seeded() {
        let ds = ten_records();
        let a = split(&ds, SplitPolicy::Random { fraction: 0.2, seed: 7 }).unwrap();
        let b = split(&ds, SplitPolicy::Random { fraction: 0.2, seed: 7 }).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        assert_eq!(a.test, b.test);
        assert_eq!(a.train, b.train);
        assert_eq!(a.cold_start.len(), 2);

        // Some seed in a small range must give a different test set.
        let differs = (8..20).any(|seed| {
            split(&ds, SplitPolicy::Random { fraction: 0.2, seed }).unwrap().test != a.test
        });
        assert!(differs);
    }

    #[test]
    fn chronological_split_takes_latest() {
        let mut records = Vec::new();
        for user in 0..3 {
            // Insert out of order to exercise the sort.
            for t in [3u64, 5, 1, 4, 2] {
                records.push(Rating { user, item: (t as usize - 1) + 5 * user, rating: 2.0, timestamp: Some(t) });
            }
        }
        let ds = Dataset::from_dense(3, 15, records, scale()).unwrap();
        let s = split(&ds, SplitPolicy::Chronological { fraction: 0.2 }).unwrap();
        assert_eq!(s.test.len(), 3);
        assert!(s.test.records().iter().all(|r| r.timestamp == Some(5)));
        // Every test item is new to the training split.
        assert!(s.cold_start.iter().all(|c| c.item && !c.user));
    }

    #[test]
    fn chronological_split_needs_timestamps() {
        let ds = Dataset::from_records([rec("a", "x", 2.0, None)], scale()).unwrap();
        let err = split(&ds, SplitPolicy::Chronological { fraction: 0.5 }).unwrap_err();
        assert_eq!(err, CorpusError::MissingTimestamps);
    }

    #[test]
    fn split_fraction_bounds() {
        let ds = ten_records();
        for fraction in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                split(&ds, SplitPolicy::Random { fraction, seed: 1 }),
                Err(CorpusError::InvalidFraction(_))
            ));
        }
    }

    #[test]
    fn user_documents_sorted_by_time_then_item() {
        let ds = Dataset::from_dense(
            2,
            10,
            alloc::vec![dense(0, 5, 30), dense(0, 2, 10), dense(0, 9, 20), dense(1, 7, 10), dense(1, 3, 10)],
            scale(),
        )
        .unwrap();
        let docs = build_user_documents(&ds);
        assert_eq!(docs[0], UserDocument { user: 0, items: alloc::vec![2, 9, 5] });
        assert_eq!(docs[1], UserDocument { user: 1, items: alloc::vec![3, 7] });
    }

    #[test]
    fn single_rating_gives_singleton_documents() {
        let ds = Dataset::from_dense(3, 3, alloc::vec![dense(2, 1, 0)], scale()).unwrap();
        assert_eq!(build_user_documents(&ds), [UserDocument { user: 2, items: alloc::vec![1] }]);
        assert_eq!(build_item_documents(&ds), [ItemDocument { item: 1, users: alloc::vec![2] }]);
    }

    #[test]
    fn item_documents_sorted_by_time() {
        let ds = Dataset::from_dense(2, 5, alloc::vec![dense(1, 4, 5), dense(0, 4, 9)], scale()).unwrap();
        assert_eq!(build_item_documents(&ds), [ItemDocument { item: 4, users: alloc::vec![1, 0] }]);
    }

    #[test]
    fn documents_without_timestamps_keep_input_order() {
        let ds = Dataset::from_records(
            [rec("u", "b", 1.0, None), rec("u", "a", 1.0, None), rec("u", "c", 1.0, None)],
            scale(),
        )
        .unwrap();
        assert_eq!(build_user_documents(&ds)[0].items, [0, 1, 2]);
    }

    #[test]
    fn leakage_is_detected() {
        let ds = ten_records();
        let s = split(&ds, SplitPolicy::Random { fraction: 0.3, seed: 3 }).unwrap();
        check_disjoint(&s.train, &s.test).unwrap();
        assert!(check_disjoint(&ds, &s.test).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        prop::collection::vec((0usize..12, 0usize..15, 1u8..=5, 0u64..40), 1..80).prop_map(|rows| {
            let records = rows.into_iter().map(|(u, i, r, t)| RatingRecord {
                user: alloc::format!("u{u}"),
                item: alloc::format!("i{i}"),
                rating: r as f64,
                timestamp: Some(t),
            });
            Dataset::from_records(records, RatingScale::new(1.0, 5.0).unwrap()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn document_lengths_partition_records(ds in arb_dataset()) {
            let users: usize = build_user_documents(&ds).iter().map(|d| d.items.len()).sum();
            let items: usize = build_item_documents(&ds).iter().map(|d| d.users.len()).sum();
            prop_assert_eq!(users, ds.len());
            prop_assert_eq!(items, ds.len());
        }

        #[test]
        fn split_is_a_partition(ds in arb_dataset(), seed in 0u64..1000, fraction in 0.05f64..0.95) {
            for policy in [SplitPolicy::Random { fraction, seed }, SplitPolicy::Chronological { fraction }] {
                let s = split(&ds, policy).unwrap();
                prop_assert_eq!(s.train.len() + s.test.len(), ds.len());
                check_disjoint(&s.train, &s.test).unwrap();
                let mut all: Vec<(usize, usize)> = s.train.records().iter()
                    .chain(s.test.records())
                    .map(|r| (r.user, r.item))
                    .collect();
                all.sort_unstable();
                let mut parent: Vec<(usize, usize)> = ds.records().iter().map(|r| (r.user, r.item)).collect();
                parent.sort_unstable();
                prop_assert_eq!(all, parent);
            }
        }

        #[test]
        fn id_round_trip(ds in arb_dataset()) {
            for (idx, ext) in ds.user_map().iter() {
                prop_assert_eq!(ds.user_map().index_of(ext), Some(idx));
            }
            for (idx, ext) in ds.item_map().iter() {
                prop_assert_eq!(ds.item_map().index_of(ext), Some(idx));
            }
        }
    }
}
