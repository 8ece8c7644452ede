//! Construction of the per-step observed and unobserved item sets.
//!
//! One training step consumes a [`SetSample`]: `L` observed items chunked off
//! a shuffled pass over the user's train list, `K` unobserved items drawn with
//! replacement from the complement, and (optionally) an adaptive mask over the
//! observed slots that always keeps at least two survivors, so the effective
//! observed-set size varies across steps.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::error::{Error, Result};

/// One training instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetSample {
    pub user: u32,
    /// `L` items from the user's train list (padding may repeat items).
    pub pos_items: Vec<u32>,
    /// `K` items from the complement of the train list, drawn with replacement.
    pub neg_items: Vec<u32>,
    /// Optional 0/1 vector over the observed slots; at least two ones.
    pub mask: Option<Vec<u8>>,
}

/// How negatives are drawn from the unobserved complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegMode {
    Uniform,
    Popularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Observed set size L.
    pub l: usize,
    /// Unobserved set size K.
    pub k: usize,
    pub neg_mode: NegMode,
    /// Additive smoothing for popularity weights; keeps every item reachable.
    pub pop_smoothing: f64,
    pub mask_enabled: bool,
    /// Per-slot keep probability of the adaptive mask, in (0, 1].
    pub mask_keep_prob: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            l: 2,
            k: 5,
            neg_mode: NegMode::Uniform,
            pop_smoothing: 1.0,
            mask_enabled: false,
            mask_keep_prob: 0.5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 || self.k < 1 {
            return Err(Error::Config(format!(
                "set sizes must be >= 1, got L={} K={}",
                self.l, self.k
            )));
        }
        if self.mask_enabled && self.l < 2 {
            return Err(Error::Config("adaptive mask requires L >= 2".into()));
        }
        if self.mask_enabled && !(self.mask_keep_prob > 0.0 && self.mask_keep_prob <= 1.0) {
            return Err(Error::Config(format!(
                "mask_keep_prob must be in (0, 1], got {}",
                self.mask_keep_prob
            )));
        }
        if !(self.pop_smoothing >= 0.0) {
            return Err(Error::Config("pop_smoothing must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draws unobserved items for any user of one dataset.
pub struct NegativeSampler {
    weights: Option<WeightedIndex<f64>>,
    raw_weights: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(ds: &InteractionDataset, mode: NegMode, pop_smoothing: f64) -> Result<Self> {
        match mode {
            NegMode::Uniform => Ok(NegativeSampler {
                weights: None,
                raw_weights: Vec::new(),
            }),
            NegMode::Popularity => {
                let raw: Vec<f64> = ds
                    .popularity()
                    .iter()
                    .map(|&c| c as f64 + pop_smoothing)
                    .collect();
                let weights = WeightedIndex::new(raw.clone()).map_err(|e| {
                    Error::Config(format!("unusable popularity weights: {e}"))
                })?;
                Ok(NegativeSampler {
                    weights: Some(weights),
                    raw_weights: raw,
                })
            }
        }
    }

    /// Popularity sampler over explicit per-item weights.
    pub fn with_weights(weights: &[f64]) -> Result<Self> {
        let index = WeightedIndex::new(weights.to_vec())
            .map_err(|e| Error::Config(format!("unusable weights: {e}")))?;
        Ok(NegativeSampler {
            weights: Some(index),
            raw_weights: weights.to_vec(),
        })
    }

    /// Draw `k` items not interacted with by `user`, with replacement.
    ///
    /// Uniform mode is uniform over the complement; popularity mode is
    /// proportional to the weights restricted to the complement. Both reject
    /// draws that land in the train list.
    pub fn sample_unobserved(
        &self,
        ds: &InteractionDataset,
        user: u32,
        k: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<u32>> {
        let train = ds.train(user);
        let num_items = ds.num_items();
        let complement = num_items - train.len();
        if complement == 0 {
            return Err(Error::DegenerateUser { user });
        }
        let mut out = Vec::with_capacity(k);
        match &self.weights {
            None => {
                if train.len() * 2 >= num_items {
                    // Dense user: materialize the complement once instead of
                    // rejecting most draws.
                    let candidates = complement_of(train, num_items);
                    for _ in 0..k {
                        out.push(candidates[rng.gen_range(0..candidates.len())]);
                    }
                } else {
                    for _ in 0..k {
                        loop {
                            let v = rng.gen_range(0..num_items) as u32;
                            if train.binary_search(&v).is_err() {
                                out.push(v);
                                break;
                            }
                        }
                    }
                }
            }
            Some(weighted) => {
                const MAX_REJECTIONS: usize = 10_000;
                'draws: for _ in 0..k {
                    for _ in 0..MAX_REJECTIONS {
                        let v = weighted.sample(rng) as u32;
                        if train.binary_search(&v).is_err() {
                            out.push(v);
                            continue 'draws;
                        }
                    }
                    // The complement carries almost no weight; fall back to
                    // sampling its exact restricted distribution.
                    let candidates = complement_of(train, num_items);
                    let restricted: Vec<f64> = candidates
                        .iter()
                        .map(|&v| self.raw_weights[v as usize])
                        .collect();
                    let index = WeightedIndex::new(restricted).map_err(|_| {
                        Error::Numeric(format!(
                            "user {user}: unobserved items have zero total weight"
                        ))
                    })?;
                    out.push(candidates[index.sample(rng)]);
                }
            }
        }
        Ok(out)
    }
}

fn complement_of(train: &[u32], num_items: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(num_items - train.len());
    let mut t = 0;
    for v in 0..num_items as u32 {
        if t < train.len() && train[t] == v {
            t += 1;
        } else {
            out.push(v);
        }
    }
    out
}

/// One pass over all observed interactions, grouped into `l`-sized chunks.
///
/// Each user's train list is shuffled and partitioned into `ceil(n/l)` chunks;
/// a ragged final chunk is padded back to `l` by resampling uniformly from the
/// user's train list (the only place duplicates can enter). User order is
/// shuffled; chunks of one user stay consecutive.
pub fn epoch_schedule(
    ds: &InteractionDataset,
    l: usize,
    rng: &mut impl Rng,
) -> Vec<(u32, Vec<u32>)> {
    assert!(l >= 1, "chunk size must be >= 1");
    let mut per_user: Vec<(u32, Vec<Vec<u32>>)> = Vec::with_capacity(ds.num_users());
    for u in 0..ds.num_users() as u32 {
        let items = ds.train(u);
        if items.is_empty() {
            continue;
        }
        let mut shuffled = items.to_vec();
        shuffled.shuffle(rng);
        let mut chunks = Vec::with_capacity(shuffled.len().div_ceil(l));
        for chunk in shuffled.chunks(l) {
            let mut chunk = chunk.to_vec();
            while chunk.len() < l {
                chunk.push(shuffled[rng.gen_range(0..shuffled.len())]);
            }
            chunks.push(chunk);
        }
        per_user.push((u, chunks));
    }
    per_user.shuffle(rng);
    per_user
        .into_iter()
        .flat_map(|(u, chunks)| chunks.into_iter().map(move |c| (u, c)))
        .collect()
}

/// Bernoulli(`keep_prob`) mask over `l` observed slots.
///
/// When fewer than two slots survive, the draw is replaced by a mask with
/// exactly two distinct uniformly chosen ones, which bounds worst-case draw
/// time and keeps at least two observed samples in play.
pub fn generate_mask(l: usize, keep_prob: f64, rng: &mut impl Rng) -> Result<Vec<u8>> {
    if l < 2 {
        return Err(Error::Config("mask requires L >= 2".into()));
    }
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!(
            "mask keep probability must be in (0, 1], got {keep_prob}"
        )));
    }
    let mut mask: Vec<u8> = (0..l).map(|_| u8::from(rng.gen_bool(keep_prob))).collect();
    let survivors = mask.iter().filter(|&&m| m == 1).count();
    if survivors < 2 {
        mask.fill(0);
        let first = rng.gen_range(0..l);
        let mut second = rng.gen_range(0..l - 1);
        if second >= first {
            second += 1;
        }
        mask[first] = 1;
        mask[second] = 1;
    }
    Ok(mask)
}

/// Attach negatives and (optionally) a mask to one scheduled chunk.
///
/// Users whose train list has fewer than two items contribute unmasked
/// samples even when masking is enabled.
pub fn draw_sample(
    ds: &InteractionDataset,
    user: u32,
    pos_chunk: &[u32],
    config: &SamplerConfig,
    sampler: &NegativeSampler,
    rng: &mut impl Rng,
) -> Result<SetSample> {
    if pos_chunk.len() != config.l {
        return Err(Error::Shape(format!(
            "chunk of size {} does not match L={}",
            pos_chunk.len(),
            config.l
        )));
    }
    debug_assert!(pos_chunk.iter().all(|&v| ds.train_lists().contains(user, v)));
    let neg_items = sampler.sample_unobserved(ds, user, config.k, rng)?;
    let mask = if config.mask_enabled && ds.train(user).len() >= 2 {
        Some(generate_mask(config.l, config.mask_keep_prob, rng)?)
    } else {
        None
    };
    Ok(SetSample {
        user,
        pos_items: pos_chunk.to_vec(),
        neg_items,
        mask,
    })
}
