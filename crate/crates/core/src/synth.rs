//! Synthetic implicit-feedback generators for experiments and probes.
//!
//! Interactions come from a planted low-rank preference model: user and item
//! factors plus an item popularity bias, observed through Gumbel-noised
//! top-`n_u` selection (equivalent to sampling without replacement with
//! probabilities proportional to `exp(utility / noise)`). Learnable latent
//! structure and a popularity skew are what desk-scale ranking experiments
//! need from the data.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Interaction;
use crate::rng::{stream_rng, StreamDomain};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Rank of the planted preference model.
    pub latent_dim: usize,
    /// Per-user interaction counts are log-uniform over this range.
    pub items_per_user: (usize, usize),
    /// Strength of the item popularity bias.
    pub popularity_weight: f64,
    /// Gumbel noise temperature; higher drowns the latent structure.
    pub noise: f64,
    /// Fraction of each user's observed items replaced by uniform random
    /// exposure (accidental interactions carrying no preference signal).
    pub exposure_noise: f64,
    /// When > 0, items live in this many latent clusters and each user's
    /// utility is the best affinity over a handful of interest clusters
    /// (disjunctive preferences). 0 keeps the plain low-rank model.
    pub clusters: usize,
    /// Interest clusters per user in mixture mode.
    pub interests_per_user: usize,
    /// Within-cluster item scatter in mixture mode.
    pub cluster_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 900,
            num_items: 1600,
            latent_dim: 16,
            items_per_user: (40, 250),
            popularity_weight: 0.6,
            noise: 0.6,
            exposure_noise: 0.0,
            clusters: 0,
            interests_per_user: 3,
            cluster_spread: 0.4,
            seed: 0,
        }
    }
}

/// Generate interactions with dense ids `0..num_users` / `0..num_items`.
/// Deterministic given the config.
pub fn generate_interactions(cfg: &SynthConfig) -> Vec<Interaction> {
    let mut rng = stream_rng(cfg.seed, StreamDomain::Synth, 0, 0);
    let d = cfg.latent_dim;
    let unit = Normal::new(0.0, 1.0).unwrap();

    // Plain mode: one dense factor per user, utility is a scaled dot
    // product. Mixture mode: items scatter around cluster centers and a
    // user's utility is their best affinity over a few interest clusters.
    let mixture = cfg.clusters > 0;
    let centers: Vec<f64> = (0..cfg.clusters * d).map(|_| unit.sample(&mut rng)).collect();
    let item_cluster: Vec<usize> = (0..cfg.num_items)
        .map(|_| if mixture { rng.gen_range(0..cfg.clusters) } else { 0 })
        .collect();
    let item_factors: Vec<f64> = if mixture {
        let mut out = Vec::with_capacity(cfg.num_items * d);
        for v in 0..cfg.num_items {
            let c = item_cluster[v];
            for i in 0..d {
                out.push(centers[c * d + i] + cfg.cluster_spread * unit.sample(&mut rng));
            }
        }
        out
    } else {
        (0..cfg.num_items * d).map(|_| unit.sample(&mut rng)).collect()
    };
    let user_factors: Vec<f64> = if mixture {
        Vec::new()
    } else {
        (0..cfg.num_users * d).map(|_| unit.sample(&mut rng)).collect()
    };

    // Interest sets and per-interest strengths for mixture users.
    let interests_per_user = cfg.interests_per_user.max(1).min(cfg.clusters.max(1));
    let mut user_interests: Vec<(usize, f64)> = Vec::new();
    let mut interest_offsets: Vec<usize> = Vec::new();
    if mixture {
        for _ in 0..cfg.num_users {
            interest_offsets.push(user_interests.len());
            let mut picked = Vec::with_capacity(interests_per_user);
            while picked.len() < interests_per_user {
                let c = rng.gen_range(0..cfg.clusters);
                if !picked.contains(&c) {
                    picked.push(c);
                }
            }
            for c in picked {
                user_interests.push((c, 0.3 * unit.sample(&mut rng)));
            }
        }
        interest_offsets.push(user_interests.len());
    }

    // Dot products are scaled to roughly unit variance so
    // `popularity_weight` and `noise` are calibrated against the signal.
    let latent_norm = (d as f64).sqrt();
    let bias = Normal::new(0.0, 1.0).unwrap();
    let item_bias: Vec<f64> = (0..cfg.num_items)
        .map(|_| cfg.popularity_weight * bias.sample(&mut rng))
        .collect();

    let (lo, hi) = cfg.items_per_user;
    let (lo, hi) = (lo.max(1), hi.max(lo.max(1)));
    let ln_lo = (lo as f64).ln();
    let ln_hi = (hi as f64).ln();

    let mut out = Vec::new();
    let mut keyed: Vec<(f64, u32)> = Vec::with_capacity(cfg.num_items);
    for u in 0..cfg.num_users {
        let n_u = (rng.gen_range(ln_lo..=ln_hi).exp().round() as usize)
            .clamp(lo, hi)
            .min(cfg.num_items);
        keyed.clear();
        for v in 0..cfg.num_items {
            let vf = &item_factors[v * d..(v + 1) * d];
            let util = if mixture {
                let mut best = f64::NEG_INFINITY;
                for &(c, strength) in
                    &user_interests[interest_offsets[u]..interest_offsets[u + 1]]
                {
                    let cf = &centers[c * d..(c + 1) * d];
                    let mut dot = 0.0;
                    for i in 0..d {
                        dot += cf[i] * vf[i];
                    }
                    best = best.max(dot / (d as f64) + strength);
                }
                best + item_bias[v]
            } else {
                let uf = &user_factors[u * d..(u + 1) * d];
                let mut dot = 0.0;
                for i in 0..d {
                    dot += uf[i] * vf[i];
                }
                dot / latent_norm + item_bias[v]
            };
            let gumbel = -(-(rng.gen_range(f64::EPSILON..1.0)).ln()).ln();
            keyed.push((util / cfg.noise + gumbel, v as u32));
        }
        keyed.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let n_noise = ((n_u as f64) * cfg.exposure_noise.clamp(0.0, 1.0)).round() as usize;
        let n_signal = n_u - n_noise;
        let mut chosen: Vec<u32> = keyed.iter().take(n_signal).map(|&(_, v)| v).collect();
        // Pad with uniform accidental exposures from the remaining items.
        let mut pool: Vec<u32> = keyed[n_signal..].iter().map(|&(_, v)| v).collect();
        for _ in 0..n_noise.min(pool.len()) {
            let idx = rng.gen_range(0..pool.len());
            chosen.push(pool.swap_remove(idx));
        }
        for v in chosen {
            out.push(Interaction {
                user: u as u32,
                item: v,
                timestamp: None,
            });
        }
    }
    out
}

/// Write interactions as a tab-separated rating log with string ids and a
/// constant rating of 5, the shape the parser ingests.
pub fn write_ratings_tsv(
    interactions: &[Interaction],
    path: impl AsRef<std::path::Path>,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for it in interactions {
        writeln!(w, "u{}\ti{}\t5", it.user, it.item)?;
    }
    w.flush()
}
