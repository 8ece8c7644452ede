//! Rating-log ingestion and the sparse interaction store.
//!
//! Raw logs are parsed into [`Interaction`] records with dense 0-based ids,
//! thresholded into implicit feedback, core-filtered, and split per user into
//! train/val/test partitions. Per-user item lists are kept sorted ascending so
//! membership tests during negative sampling and evaluation are `O(log n)`.
//! A dataset is immutable after construction and safe to share across threads.

mod io;
mod parse;

pub use io::{load_dataset, save_dataset, DatasetSidecar};
pub use parse::{parse_ratings, parse_ratings_file, FileFormat};

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamDomain};

/// One observed user-item interaction with dense 0-based ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    /// Seconds; used only for ordering when present.
    pub timestamp: Option<i64>,
}

/// Per-user item lists in compressed sparse row layout.
///
/// `offsets` has one entry per user plus a terminator; `row(u)` is
/// `items[offsets[u]..offsets[u + 1]]`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserItemLists {
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl UserItemLists {
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut items = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            items.extend_from_slice(&row);
            offsets.push(items.len());
        }
        UserItemLists { offsets, items }
    }

    pub(crate) fn from_raw(offsets: Vec<usize>, items: Vec<u32>) -> Self {
        UserItemLists { offsets, items }
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> usize {
        self.items.len()
    }

    pub fn row(&self, user: u32) -> &[u32] {
        let u = user as usize;
        &self.items[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.row(user).binary_search(&item).is_ok()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }
}

/// Sparse per-user interaction store with train/val/test partitions and
/// per-item train popularity counts.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    train: UserItemLists,
    val: UserItemLists,
    test: UserItemLists,
    popularity: Vec<u64>,
}

impl InteractionDataset {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn train(&self, user: u32) -> &[u32] {
        self.train.row(user)
    }

    pub fn val(&self, user: u32) -> &[u32] {
        self.val.row(user)
    }

    pub fn test(&self, user: u32) -> &[u32] {
        self.test.row(user)
    }

    pub fn train_lists(&self) -> &UserItemLists {
        &self.train
    }

    pub fn val_lists(&self) -> &UserItemLists {
        &self.val
    }

    pub fn test_lists(&self) -> &UserItemLists {
        &self.test
    }

    /// Per-item train interaction counts; sums to the train total.
    pub fn popularity(&self) -> &[u64] {
        &self.popularity
    }

    pub fn total_train(&self) -> usize {
        self.train.total()
    }

    fn from_parts(
        num_items: usize,
        train: UserItemLists,
        val: UserItemLists,
        test: UserItemLists,
    ) -> Self {
        let mut popularity = vec![0u64; num_items];
        for &v in train.items() {
            popularity[v as usize] += 1;
        }
        InteractionDataset {
            num_users: train.num_rows(),
            num_items,
            train,
            val,
            test,
            popularity,
        }
    }

    fn empty_lists(num_users: usize) -> UserItemLists {
        UserItemLists {
            offsets: vec![0; num_users + 1],
            items: Vec::new(),
        }
    }
}

/// Build a dataset from parsed interactions, dropping users with fewer than
/// `min_interactions` interactions and re-densifying ids. Everything lands in
/// the train partition; use [`split_dataset`] afterwards.
///
/// Core filtering applies to users only, so a single pass reaches the fixed
/// point: removing a user never lowers another user's count.
pub fn build_dataset(
    interactions: &[Interaction],
    min_interactions: usize,
) -> Result<InteractionDataset> {
    if interactions.is_empty() {
        return Err(Error::EmptyDataset("no interactions to build from".into()));
    }
    let mut per_user: HashMap<u32, usize> = HashMap::new();
    for it in interactions {
        *per_user.entry(it.user).or_insert(0) += 1;
    }
    let keep = |u: u32| per_user[&u] >= min_interactions.max(1);

    let mut user_ids: HashMap<u32, u32> = HashMap::new();
    let mut item_ids: HashMap<u32, u32> = HashMap::new();
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for it in interactions {
        if !keep(it.user) {
            continue;
        }
        let next_user = user_ids.len() as u32;
        let u = *user_ids.entry(it.user).or_insert(next_user);
        let next_item = item_ids.len() as u32;
        let v = *item_ids.entry(it.item).or_insert(next_item);
        if u as usize == rows.len() {
            rows.push(Vec::new());
        }
        rows[u as usize].push(v);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "all users fall below min_interactions={min_interactions}"
        )));
    }
    let num_items = item_ids.len();
    let num_users = rows.len();
    let train = UserItemLists::from_rows(rows);
    Ok(InteractionDataset::from_parts(
        num_items,
        train,
        InteractionDataset::empty_lists(num_users),
        InteractionDataset::empty_lists(num_users),
        ))
}

/// Partition each user's train items into train/val/test by `ratios`.
///
/// Sizes follow `floor(n*val)`, `floor(n*test)`, remainder to train, then a
/// repair step guarantees at least one item in each partition. Users with
/// fewer than 3 train interactions cannot satisfy the minimum and are dropped
/// (ids re-densified, count logged). Deterministic given `seed`.
pub fn split_dataset(
    ds: &InteractionDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<InteractionDataset> {
    let (r_train, r_val, r_test) = ratios;
    let sum = r_train + r_val + r_test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    if r_train < 0.0 || r_val < 0.0 || r_test < 0.0 {
        return Err(Error::Config("split ratios must be non-negative".into()));
    }

    let mut train_rows = Vec::new();
    let mut val_rows = Vec::new();
    let mut test_rows = Vec::new();
    let mut dropped = 0usize;
    for u in 0..ds.num_users() as u32 {
        let items = ds.train(u);
        let n = items.len();
        if n < 3 {
            dropped += 1;
            continue;
        }
        let mut n_val = (n as f64 * r_val).floor() as usize;
        let mut n_test = (n as f64 * r_test).floor() as usize;
        // Min-1 repair: every partition keeps at least one item.
        while n_val < 1 {
            n_val += 1;
        }
        while n_test < 1 {
            n_test += 1;
        }
        if n_val + n_test >= n {
            let over = n_val + n_test - (n - 1);
            let take_val = over.min(n_val - 1);
            n_val -= take_val;
            n_test -= over - take_val;
        }

        let mut shuffled = items.to_vec();
        let mut rng = stream_rng(seed, StreamDomain::Split, u as u64, 0);
        shuffled.shuffle(&mut rng);
        val_rows.push(shuffled[..n_val].to_vec());
        test_rows.push(shuffled[n_val..n_val + n_test].to_vec());
        train_rows.push(shuffled[n_val + n_test..].to_vec());
    }
    if train_rows.is_empty() {
        return Err(Error::EmptyDataset(
            "no user has the 3+ interactions required for splitting".into(),
        ));
    }
    if dropped > 0 {
        log::warn!("split dropped {dropped} users with fewer than 3 interactions");
    }
    Ok(InteractionDataset::from_parts(
        ds.num_items(),
        UserItemLists::from_rows(train_rows),
        UserItemLists::from_rows(val_rows),
        UserItemLists::from_rows(test_rows),
    ))
}

/// Per-item sampling weights proportional to `popularity + smoothing`,
/// normalized to sum to 1.
pub fn popularity_distribution(ds: &InteractionDataset, smoothing: f64) -> Result<Vec<f64>> {
    if !(smoothing >= 0.0) {
        return Err(Error::Config(format!(
            "popularity smoothing must be >= 0, got {smoothing}"
        )));
    }
    if ds.total_train() == 0 {
        return Err(Error::EmptyDataset("no train interactions".into()));
    }
    let raw: Vec<f64> = ds
        .popularity()
        .iter()
        .map(|&c| c as f64 + smoothing)
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config(
            "popularity weights are all zero; use smoothing > 0".into(),
        ));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn it(user: u32, item: u32) -> Interaction {
        Interaction {
            user,
            item,
            timestamp: None,
        }
    }

    #[test]
    fn build_keeps_user_at_threshold() {
        let ints: Vec<_> = (0..10).map(|v| it(0, v)).collect();
        let ds = build_dataset(&ints, 10).unwrap();
        assert_eq!(ds.num_users(), 1);
        assert_eq!(ds.train(0).len(), 10);
    }

    #[test]
    fn build_rejects_all_filtered() {
        let ints: Vec<_> = (0..9).map(|v| it(0, v)).collect();
        let err = build_dataset(&ints, 10).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn build_drops_light_user_and_redensifies() {
        let mut ints: Vec<_> = (0..12).map(|v| it(5, v + 100)).collect();
        ints.extend((0..3).map(|v| it(9, v + 200)));
        let ds = build_dataset(&ints, 10).unwrap();
        assert_eq!(ds.num_users(), 1);
        assert_eq!(ds.num_items(), 12);
        assert_eq!(ds.train(0).len(), 12);
        assert_eq!(ds.popularity().iter().sum::<u64>(), 12);
    }

    #[test]
    fn popularity_distribution_normalizes() {
        let ints = vec![it(0, 0), it(1, 0), it(2, 1), it(3, 2)];
        let ds = build_dataset(&ints, 1).unwrap();
        let w = popularity_distribution(&ds, 0.0).unwrap();
        assert_eq!(w, vec![0.5, 0.25, 0.25]);
        // popularity [3, 1] with smoothing 1 -> [4/6, 2/6]
        let ints2 = vec![it(0, 0), it(1, 0), it(2, 0), it(3, 1)];
        let ds2 = build_dataset(&ints2, 1).unwrap();
        let w2 = popularity_distribution(&ds2, 1.0).unwrap();
        assert!((w2[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w2[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn split_10_items_is_8_1_1() {
        let ints: Vec<_> = (0..10).map(|v| it(0, v)).collect();
        let ds = build_dataset(&ints, 1).unwrap();
        let split = split_dataset(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(split.train(0).len(), 8);
        assert_eq!(split.val(0).len(), 1);
        assert_eq!(split.test(0).len(), 1);
    }

    #[test]
    fn split_3_items_is_1_1_1() {
        let ints: Vec<_> = (0..3).map(|v| it(0, v)).collect();
        let ds = build_dataset(&ints, 1).unwrap();
        let split = split_dataset(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(split.train(0).len(), 1);
        assert_eq!(split.val(0).len(), 1);
        assert_eq!(split.test(0).len(), 1);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let mut ints = Vec::new();
        for u in 0..20 {
            for v in 0..(5 + u % 7) {
                ints.push(it(u, (u * 13 + v) % 40));
            }
        }
        let ds = build_dataset(&ints, 1).unwrap();
        let a = split_dataset(&ds, (0.8, 0.1, 0.1), 42).unwrap();
        let b = split_dataset(&ds, (0.8, 0.1, 0.1), 42).unwrap();
        assert_eq!(a, b);
        for u in 0..a.num_users() as u32 {
            for v in a.val(u) {
                assert!(!a.train_lists().contains(u, *v));
                assert!(!a.test_lists().contains(u, *v));
            }
            for v in a.test(u) {
                assert!(!a.train_lists().contains(u, *v));
            }
            assert!(!a.train(u).is_empty());
        }
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let ints: Vec<_> = (0..5).map(|v| it(0, v)).collect();
        let ds = build_dataset(&ints, 1).unwrap();
        let err = split_dataset(&ds, (0.8, 0.1, 0.2), 7).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
