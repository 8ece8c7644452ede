//! Objective values and analytic gradients for set-level ranking.
//!
//! All functions work on predicted scores. With observed scores
//! `x_1..x_L`, unobserved scores `y_1..y_K` and mask `m` (all ones when
//! absent):
//!
//! ```text
//! D(a, b)    = sigmoid(a - b)                       preference gain
//! F(X, y)    = sum_i D(x_i, y) * m_i                 comparison vs a set
//! L2         = sum_j ln F(X, y_j)                    item-to-set term
//! f_pos      = (1/L) sum_i ln F(X, x_i)              observed-set summary
//! f_neg      = min_j ln F(X, y_j)                    hardest unobserved item
//! g_pos      = max_i ln F(X, x_i)                    easiest observed item
//! L3         = ln D(f_neg, beta * f_pos)             set-to-set margin
//! L4         = ln D(f_neg, beta * g_pos)             "easy" variant
//! total      = L2 + lambda * L3   (or L4)
//! ```
//!
//! The trainer maximizes `total`. The `F(X, x_i)` sums include the self pair
//! `D(x_i, x_i) = 0.5`, and the `f_pos` average divides by `L` and iterates
//! all `L` slots even when a mask zeroes some of them; both follow the
//! definitions above literally (flags exist for the alternative readings).
//! Arguments of `ln` are floored at [`LossConfig::f_floor`], with zero
//! gradient through the clamp. The `min`/`max` selections break ties toward
//! the lowest index and gradients flow only through the selected element.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EmbeddingModel;
use crate::sampling::SetSample;

/// Which objective the trainer maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Pairwise `ln sigmoid(x - y)` on single-item sets.
    Bpr,
    /// Item-to-set plus margin against the observed-set summary.
    Set2set,
    /// Item-to-set plus margin against the easiest observed item.
    Set2setEasy,
}

/// Which observed-side summary the set-to-set margin uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetToSetVariant {
    /// Average distance summary over the whole observed set.
    Summary,
    /// The single easiest observed item.
    Easy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub objective: Objective,
    /// Weight of the set-to-set term.
    pub lambda: f64,
    /// Margin multiplier on the observed-side summary.
    pub beta: f64,
    pub mask_enabled: bool,
    /// Numeric floor for arguments of `ln`.
    pub f_floor: f64,
    /// Ablation switch: drop the item-to-set term, leaving `lambda * L3`.
    pub include_item_to_set: bool,
    /// Drop the `D(x_i, x_i)` self pairs inside the observed summaries.
    pub exclude_self_pairs: bool,
    /// Normalize `f_pos` by the mask survivor count instead of `L`.
    pub survivor_normalization: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            objective: Objective::Set2set,
            lambda: 1.0,
            beta: 0.5,
            mask_enabled: false,
            f_floor: 1e-12,
            include_item_to_set: true,
            exclude_self_pairs: false,
            survivor_normalization: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_floor > 0.0 && self.f_floor <= 1e-6) {
            return Err(Error::Config(format!(
                "f_floor must be in (0, 1e-6], got {}",
                self.f_floor
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        Ok(())
    }

    fn variant(&self) -> SetToSetVariant {
        match self.objective {
            Objective::Set2setEasy => SetToSetVariant::Easy,
            _ => SetToSetVariant::Summary,
        }
    }
}

/// Scores of one sample's observed and unobserved items.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleScores {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub mask: Option<Vec<u8>>,
}

impl SampleScores {
    pub fn from_sample(model: &EmbeddingModel, sample: &SetSample) -> Self {
        SampleScores {
            pos: sample
                .pos_items
                .iter()
                .map(|&v| model.score(sample.user, v))
                .collect(),
            neg: sample
                .neg_items
                .iter()
                .map(|&v| model.score(sample.user, v))
                .collect(),
            mask: sample.mask.clone(),
        }
    }
}

/// Value of one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Item-to-set term as it enters the total (0 when ablated away).
    pub item_to_set: f64,
    /// Set-to-set term (margin against summary or easiest item).
    pub set_to_set: f64,
    /// `item_to_set + lambda * set_to_set`; the quantity being maximized.
    pub total: f64,
    /// Index into the unobserved set selected as hardest.
    pub hard_neg_index: usize,
}

/// Gradient of the objective with respect to the sample's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// Gradient of the objective with respect to the embedding rows it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrad {
    pub user: u32,
    pub d_user: Vec<f64>,
    /// One accumulated entry per distinct item in `pos + neg`, in first
    /// occurrence order. Items outside the sample never appear.
    pub d_items: Vec<(u32, Vec<f64>)>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn sigmoid_deriv(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s)
}

/// `ln sigmoid(z)` without catastrophic cancellation for large `|z|`.
#[inline]
fn ln_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Preference gain `D(x, y) = sigmoid(x - y)`, strictly increasing in `x`
/// and decreasing in `y`.
pub fn pref_gain(x: f64, y: f64) -> f64 {
    sigmoid(x - y)
}

/// Comparison function `F`: the summed preference gain of every (unmasked)
/// observed sample over the candidate score `y`.
pub fn set_compare(pos_scores: &[f64], y: f64, mask: Option<&[u8]>) -> f64 {
    match mask {
        None => pos_scores.iter().map(|&x| pref_gain(x, y)).sum(),
        Some(m) => pos_scores
            .iter()
            .zip(m)
            .filter(|(_, &mi)| mi == 1)
            .map(|(&x, _)| pref_gain(x, y))
            .sum(),
    }
}

/// `F` against one of the observed scores, honoring the self-pair flag.
fn set_compare_pos(pos_scores: &[f64], i: usize, mask: Option<&[u8]>, cfg: &LossConfig) -> f64 {
    let mut acc = 0.0;
    for (ii, &x) in pos_scores.iter().enumerate() {
        if cfg.exclude_self_pairs && ii == i {
            continue;
        }
        if let Some(m) = mask {
            if m[ii] == 0 {
                continue;
            }
        }
        acc += pref_gain(x, pos_scores[i]);
    }
    acc
}

#[inline]
fn ln_floored(f: f64, floor: f64) -> f64 {
    f.max(floor).ln()
}

/// Item-to-set term: every unobserved item is encouraged below the whole
/// observed set.
pub fn item_to_set_loss(
    pos_scores: &[f64],
    neg_scores: &[f64],
    mask: Option<&[u8]>,
    cfg: &LossConfig,
) -> f64 {
    neg_scores
        .iter()
        .map(|&y| ln_floored(set_compare(pos_scores, y, mask), cfg.f_floor))
        .sum()
}

/// Observed-set summary: averaged `ln F` of each observed sample against its
/// own set. The average divides by `L` (all slots) unless survivor
/// normalization is switched on.
pub fn pos_summary(pos_scores: &[f64], mask: Option<&[u8]>, cfg: &LossConfig) -> f64 {
    let norm = pos_norm(pos_scores.len(), mask, cfg);
    let sum: f64 = (0..pos_scores.len())
        .map(|i| ln_floored(set_compare_pos(pos_scores, i, mask, cfg), cfg.f_floor))
        .sum();
    sum / norm
}

fn pos_norm(l: usize, mask: Option<&[u8]>, cfg: &LossConfig) -> f64 {
    if cfg.survivor_normalization {
        if let Some(m) = mask {
            let survivors = m.iter().filter(|&&mi| mi == 1).count();
            return survivors.max(1) as f64;
        }
    }
    l as f64
}

/// The hardest unobserved item: minimum `ln F` over the unobserved set and
/// its index; ties go to the lowest index.
pub fn hard_neg_summary(
    pos_scores: &[f64],
    neg_scores: &[f64],
    mask: Option<&[u8]>,
    cfg: &LossConfig,
) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    for (j, &y) in neg_scores.iter().enumerate() {
        let v = ln_floored(set_compare(pos_scores, y, mask), cfg.f_floor);
        if v < best {
            best = v;
            best_idx = j;
        }
    }
    (best, best_idx)
}

/// Easiest observed item: maximum `ln F` over the observed slots.
fn easy_pos_summary(pos_scores: &[f64], mask: Option<&[u8]>, cfg: &LossConfig) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for i in 0..pos_scores.len() {
        let v = ln_floored(set_compare_pos(pos_scores, i, mask, cfg), cfg.f_floor);
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    (best, best_idx)
}

/// Set-to-set margin `ln sigmoid(f_neg - beta * summary)`.
pub fn set_to_set_loss(
    pos_scores: &[f64],
    neg_scores: &[f64],
    mask: Option<&[u8]>,
    variant: SetToSetVariant,
    cfg: &LossConfig,
) -> f64 {
    let (f_neg, _) = hard_neg_summary(pos_scores, neg_scores, mask, cfg);
    let summary = match variant {
        SetToSetVariant::Summary => pos_summary(pos_scores, mask, cfg),
        SetToSetVariant::Easy => easy_pos_summary(pos_scores, mask, cfg).0,
    };
    ln_sigmoid(f_neg - cfg.beta * summary)
}

/// Evaluate the configured objective on one sample's scores.
pub fn total_loss(scores: &SampleScores, cfg: &LossConfig) -> Result<LossBreakdown> {
    check_shape(scores, cfg)?;
    let mask = scores.mask.as_deref();
    match cfg.objective {
        Objective::Bpr => {
            let value = item_to_set_loss(&scores.pos, &scores.neg, mask, cfg);
            Ok(LossBreakdown {
                item_to_set: value,
                set_to_set: 0.0,
                total: value,
                hard_neg_index: 0,
            })
        }
        Objective::Set2set | Objective::Set2setEasy => {
            let item_to_set = if cfg.include_item_to_set {
                item_to_set_loss(&scores.pos, &scores.neg, mask, cfg)
            } else {
                0.0
            };
            let (f_neg, hard_neg_index) = hard_neg_summary(&scores.pos, &scores.neg, mask, cfg);
            let summary = match cfg.variant() {
                SetToSetVariant::Summary => pos_summary(&scores.pos, mask, cfg),
                SetToSetVariant::Easy => easy_pos_summary(&scores.pos, mask, cfg).0,
            };
            let set_to_set = ln_sigmoid(f_neg - cfg.beta * summary);
            Ok(LossBreakdown {
                item_to_set,
                set_to_set,
                total: item_to_set + cfg.lambda * set_to_set,
                hard_neg_index,
            })
        }
    }
}

fn check_shape(scores: &SampleScores, cfg: &LossConfig) -> Result<()> {
    if scores.pos.is_empty() || scores.neg.is_empty() {
        return Err(Error::Shape("sample must have L >= 1 and K >= 1".into()));
    }
    if cfg.objective == Objective::Bpr
        && (scores.pos.len() != 1 || scores.neg.len() != 1 || scores.mask.is_some())
    {
        return Err(Error::Shape(format!(
            "bpr consumes L=K=1 unmasked samples, got L={} K={} mask={}",
            scores.pos.len(),
            scores.neg.len(),
            scores.mask.is_some()
        )));
    }
    if let Some(m) = &scores.mask {
        if m.len() != scores.pos.len() {
            return Err(Error::Shape(format!(
                "mask length {} does not match L={}",
                m.len(),
                scores.pos.len()
            )));
        }
        debug_assert!(m.iter().filter(|&&mi| mi == 1).count() >= 2);
    }
    Ok(())
}

/// Objective value plus its exact gradient with respect to the scores.
///
/// The argmin/argmax of the forward pass is frozen, so the min/max terms
/// contribute the subgradient of the selected element; floor-clamped `F`
/// terms contribute nothing.
pub fn score_gradients(scores: &SampleScores, cfg: &LossConfig) -> Result<(LossBreakdown, ScoreGrad)> {
    let breakdown = total_loss(scores, cfg)?;
    let mask = scores.mask.as_deref();
    let l = scores.pos.len();
    let k = scores.neg.len();
    let mut d_pos = vec![0.0; l];
    let mut d_neg = vec![0.0; k];

    let mask_at = |i: usize| -> f64 {
        match mask {
            Some(m) => f64::from(m[i]),
            None => 1.0,
        }
    };

    // F against each negative; shared by the item-to-set term and f_neg.
    let f_neg_vals: Vec<f64> = scores
        .neg
        .iter()
        .map(|&y| set_compare(&scores.pos, y, mask))
        .collect();

    let item_to_set_active = cfg.include_item_to_set || cfg.objective == Objective::Bpr;
    if item_to_set_active {
        for (j, &y) in scores.neg.iter().enumerate() {
            let f = f_neg_vals[j];
            if f < cfg.f_floor {
                continue; // clamped: zero gradient
            }
            let inv = 1.0 / f;
            let mut col_sum = 0.0;
            for (i, &x) in scores.pos.iter().enumerate() {
                let g = sigmoid_deriv(x - y) * mask_at(i);
                d_pos[i] += inv * g;
                col_sum += g;
            }
            d_neg[j] -= inv * col_sum;
        }
    }

    if cfg.objective != Objective::Bpr && cfg.lambda != 0.0 {
        let j_star = breakdown.hard_neg_index;
        let f_star = f_neg_vals[j_star];
        let f_neg_val = ln_floored(f_star, cfg.f_floor);

        // d f_neg / d scores (only the selected negative participates).
        let mut dneg_pos = vec![0.0; l];
        let mut dneg_y = 0.0;
        if f_star >= cfg.f_floor {
            let inv = 1.0 / f_star;
            for (i, &x) in scores.pos.iter().enumerate() {
                let g = sigmoid_deriv(x - scores.neg[j_star]) * mask_at(i);
                dneg_pos[i] = inv * g;
                dneg_y -= inv * g;
            }
        }

        // d summary / d pos scores for the configured variant.
        let mut dsum_pos = vec![0.0; l];
        let summary = match cfg.variant() {
            SetToSetVariant::Summary => {
                let norm = pos_norm(l, mask, cfg);
                let mut acc = 0.0;
                for i in 0..l {
                    let f = set_compare_pos(&scores.pos, i, mask, cfg);
                    acc += ln_floored(f, cfg.f_floor);
                    if f < cfg.f_floor {
                        continue;
                    }
                    let inv = 1.0 / (f * norm);
                    for (ii, &x) in scores.pos.iter().enumerate() {
                        if ii == i {
                            continue; // the self pair has zero derivative
                        }
                        let g = sigmoid_deriv(x - scores.pos[i]) * mask_at(ii);
                        dsum_pos[ii] += inv * g;
                        dsum_pos[i] -= inv * g;
                    }
                }
                acc / pos_norm(l, mask, cfg)
            }
            SetToSetVariant::Easy => {
                let (g_pos, i_star) = easy_pos_summary(&scores.pos, mask, cfg);
                let f = set_compare_pos(&scores.pos, i_star, mask, cfg);
                if f >= cfg.f_floor {
                    let inv = 1.0 / f;
                    for (ii, &x) in scores.pos.iter().enumerate() {
                        if ii == i_star {
                            continue;
                        }
                        let g = sigmoid_deriv(x - scores.pos[i_star]) * mask_at(ii);
                        dsum_pos[ii] += inv * g;
                        dsum_pos[i_star] -= inv * g;
                    }
                }
                g_pos
            }
        };

        // d L3 = sigmoid(-(z)) * dz with z = f_neg - beta * summary.
        let z = f_neg_val - cfg.beta * summary;
        let outer = cfg.lambda * sigmoid(-z);
        for i in 0..l {
            d_pos[i] += outer * (dneg_pos[i] - cfg.beta * dsum_pos[i]);
        }
        d_neg[j_star] += outer * dneg_y;
    }

    for (name, slice) in [("pos", &d_pos), ("neg", &d_neg)] {
        if let Some(bad) = slice.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite {name} score gradient {bad}"
            )));
        }
    }
    Ok((breakdown, ScoreGrad { d_pos, d_neg }))
}

/// Objective value plus the sparse gradient over the embedding rows the
/// sample touches: the user row and each distinct item row in `pos + neg`.
pub fn loss_gradients(
    sample: &SetSample,
    model: &EmbeddingModel,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, SparseGrad)> {
    let scores = SampleScores::from_sample(model, sample);
    let (breakdown, grad) = score_gradients(&scores, cfg)?;
    let dim = model.dim();
    let user_row = model.user_row(sample.user);

    let mut d_user = vec![0.0; dim];
    let mut d_items: Vec<(u32, Vec<f64>)> =
        Vec::with_capacity(sample.pos_items.len() + sample.neg_items.len());
    let accumulate = |d_items: &mut Vec<(u32, Vec<f64>)>, item: u32, coeff: f64| {
        let idx = match d_items.iter().position(|(v, _)| *v == item) {
            Some(i) => i,
            None => {
                d_items.push((item, vec![0.0; dim]));
                d_items.len() - 1
            }
        };
        for (r, &u) in d_items[idx].1.iter_mut().zip(user_row) {
            *r += coeff * u;
        }
    };

    for (idx, &v) in sample.pos_items.iter().enumerate() {
        let coeff = grad.d_pos[idx];
        let item_row = model.item_row(v);
        for (du, &e) in d_user.iter_mut().zip(item_row) {
            *du += coeff * e;
        }
        accumulate(&mut d_items, v, coeff);
    }
    for (idx, &v) in sample.neg_items.iter().enumerate() {
        let coeff = grad.d_neg[idx];
        let item_row = model.item_row(v);
        for (du, &e) in d_user.iter_mut().zip(item_row) {
            *du += coeff * e;
        }
        accumulate(&mut d_items, v, coeff);
    }

    Ok((
        breakdown,
        SparseGrad {
            user: sample.user,
            d_user,
            d_items,
        },
    ))
}
