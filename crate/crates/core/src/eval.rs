//! Full-ranking top-N evaluation.
//!
//! For each user every non-train item is a candidate, including held-out
//! items from the other split (they stay in the pool as unlabeled
//! candidates). Candidates are ordered by descending score with ties broken
//! by ascending item id, so evaluations reproduce across platforms.

use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::model::EmbeddingModel;

/// Which held-out partition supplies the target items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Val,
    Test,
}

/// Per-cutoff HR@N / NDCG@N averages over evaluable users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub cutoffs: Vec<usize>,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    /// Users with a non-empty target set; only these enter the averages.
    pub num_evaluated_users: usize,
}

/// All items the user has not interacted with in train, ordered by descending
/// score, ties broken by ascending item id.
pub fn rank_candidates(model: &EmbeddingModel, ds: &InteractionDataset, user: u32) -> Vec<u32> {
    let scores = model.score_all_items(user);
    let train = ds.train(user);
    let mut candidates = Vec::with_capacity(ds.num_items() - train.len());
    let mut t = 0;
    for v in 0..ds.num_items() as u32 {
        if t < train.len() && train[t] == v {
            t += 1;
        } else {
            candidates.push(v);
        }
    }
    candidates.sort_unstable_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .expect("scores must be finite")
            .then_with(|| a.cmp(&b))
    });
    candidates
}

/// Truncated recall: `|top-N intersecting targets| / min(N, |targets|)`.
pub fn hr_at_n(ranked: &[u32], targets: &[u32], n: usize) -> f64 {
    debug_assert!(!targets.is_empty());
    let depth = n.min(ranked.len());
    let hits = ranked[..depth]
        .iter()
        .filter(|v| targets.binary_search(v).is_ok())
        .count();
    hits as f64 / n.min(targets.len()) as f64
}

/// Binary-relevance NDCG at cutoff `n` with 1-based positions:
/// `DCG = sum 1/log2(p+1)` over hit positions, normalized by the ideal
/// prefix of `min(n, |targets|)` hits.
pub fn ndcg_at_n(ranked: &[u32], targets: &[u32], n: usize) -> f64 {
    debug_assert!(!targets.is_empty());
    let depth = n.min(ranked.len());
    let mut dcg = 0.0;
    for (idx, v) in ranked[..depth].iter().enumerate() {
        if targets.binary_search(v).is_ok() {
            dcg += 1.0 / ((idx + 2) as f64).log2();
        }
    }
    let ideal = n.min(targets.len());
    let idcg: f64 = (0..ideal).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    dcg / idcg
}

/// Average HR@N / NDCG@N over every user with a non-empty target set in
/// `split`. Accumulation runs in ascending user id, so results are a
/// deterministic function of model and dataset.
pub fn evaluate(
    model: &EmbeddingModel,
    ds: &InteractionDataset,
    split: Split,
    cutoffs: &[usize],
) -> Result<EvalReport> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::Config("cutoffs must be positive".into()));
    }
    let mut hr = vec![0.0; cutoffs.len()];
    let mut ndcg = vec![0.0; cutoffs.len()];
    let mut users = 0usize;
    for u in 0..ds.num_users() as u32 {
        let targets = match split {
            Split::Val => ds.val(u),
            Split::Test => ds.test(u),
        };
        if targets.is_empty() {
            continue;
        }
        let ranked = rank_candidates(model, ds, u);
        for (c, &n) in cutoffs.iter().enumerate() {
            hr[c] += hr_at_n(&ranked, targets, n);
            ndcg[c] += ndcg_at_n(&ranked, targets, n);
        }
        users += 1;
    }
    if users == 0 {
        return Err(Error::Eval(format!(
            "no user has target items in the {split:?} split"
        )));
    }
    for c in 0..cutoffs.len() {
        hr[c] /= users as f64;
        ndcg[c] /= users as f64;
    }
    Ok(EvalReport {
        split,
        cutoffs: cutoffs.to_vec(),
        hr,
        ndcg,
        num_evaluated_users: users,
    })
}

/// Render labeled reports as an aligned table with one HR/NDCG column pair
/// per cutoff.
pub fn render_table(rows: &[(String, &EvalReport)]) -> String {
    if rows.is_empty() {
        return String::new();
    }
    let cutoffs = &rows[0].1.cutoffs;
    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(["model".len()].into_iter())
        .max()
        .unwrap()
        .max(5);
    let mut out = String::new();
    out.push_str(&format!("{:label_width$}", "model"));
    for n in cutoffs {
        out.push_str(&format!(" | {:>8} {:>8}", format!("HR@{n}"), format!("NDCG@{n}")));
    }
    out.push('\n');
    for (label, report) in rows {
        out.push_str(&format!("{label:label_width$}"));
        for c in 0..cutoffs.len() {
            out.push_str(&format!(" | {:>8.5} {:>8.5}", report.hr[c], report.ndcg[c]));
        }
        out.push('\n');
    }
    out
}
