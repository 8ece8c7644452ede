//! User/item embedding tables scored by inner product.
//!
//! The predictor is a pure inner product `score(u, v) = e_u . e_v` with no
//! bias terms. All arithmetic is 64-bit. Reads are concurrent-safe; mutation
//! happens only through the trainer, which owns the model exclusively.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamDomain};

const MAGIC: &[u8; 8] = b"S2SR-CK1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    num_users: usize,
    num_items: usize,
    user_emb: Vec<f64>,
    item_emb: Vec<f64>,
}

impl EmbeddingModel {
    /// Initialize both tables with i.i.d. `Normal(0, init_scale^2)` entries.
    /// Deterministic given `seed`.
    pub fn init(
        num_users: usize,
        num_items: usize,
        dim: usize,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_users == 0 || num_items == 0 {
            return Err(Error::Config("model needs at least one user and item".into()));
        }
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if !(init_scale > 0.0) {
            return Err(Error::Config(format!(
                "init_scale must be > 0, got {init_scale}"
            )));
        }
        let normal = Normal::new(0.0, init_scale)
            .map_err(|e| Error::Config(format!("bad init distribution: {e}")))?;
        let mut rng = stream_rng(seed, StreamDomain::Init, 0, 0);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        };
        Ok(EmbeddingModel {
            dim,
            num_users,
            num_items,
            user_emb: draw(num_users * dim),
            item_emb: draw(num_items * dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn user_row(&self, u: u32) -> &[f64] {
        let i = u as usize * self.dim;
        &self.user_emb[i..i + self.dim]
    }

    pub fn item_row(&self, v: u32) -> &[f64] {
        let i = v as usize * self.dim;
        &self.item_emb[i..i + self.dim]
    }

    pub fn user_row_mut(&mut self, u: u32) -> &mut [f64] {
        let i = u as usize * self.dim;
        &mut self.user_emb[i..i + self.dim]
    }

    pub fn item_row_mut(&mut self, v: u32) -> &mut [f64] {
        let i = v as usize * self.dim;
        &mut self.item_emb[i..i + self.dim]
    }

    pub fn user_table(&self) -> &[f64] {
        &self.user_emb
    }

    pub fn item_table(&self) -> &[f64] {
        &self.item_emb
    }

    /// Predicted preference of user `u` for item `v`: the inner product of
    /// their embedding rows. Out-of-range ids panic like any slice index.
    pub fn score(&self, u: u32, v: u32) -> f64 {
        dot(self.user_row(u), self.item_row(v))
    }

    /// Scores of user `u` against every item, entry `v` equal to
    /// `score(u, v)`. Same loop as the scalar path, so agreement is exact.
    pub fn score_all_items(&self, u: u32) -> Vec<f64> {
        let row = self.user_row(u);
        (0..self.num_items)
            .map(|v| dot(row, self.item_row(v as u32)))
            .collect()
    }

    /// Largest-magnitude difference over both tables, for convergence and
    /// equivalence checks.
    pub fn max_abs_diff(&self, other: &EmbeddingModel) -> f64 {
        self.user_emb
            .iter()
            .zip(&other.user_emb)
            .chain(self.item_emb.iter().zip(&other.item_emb))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Add Gaussian noise to one embedding entry; test helper for
    /// perturbation-based checks.
    pub fn perturb_entry(&mut self, user_side: bool, row: u32, col: usize, delta: f64) {
        if user_side {
            self.user_row_mut(row)[col] += delta;
        } else {
            self.item_row_mut(row)[col] += delta;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Companion metadata for a checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointSidecar {
    pub config_hash: String,
    pub epoch: usize,
}

impl CheckpointSidecar {
    pub fn path_for(checkpoint_path: &Path) -> std::path::PathBuf {
        let mut name = checkpoint_path.as_os_str().to_owned();
        name.push(".json");
        name.into()
    }

    pub fn save(&self, checkpoint_path: &Path) -> Result<()> {
        let file = File::create(Self::path_for(checkpoint_path))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(checkpoint_path: &Path) -> Result<Self> {
        let file = File::open(Self::path_for(checkpoint_path))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Write the model matrices bit-exactly: magic, little-endian dims, then raw
/// little-endian f64 tables (user first).
pub fn save_checkpoint(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    for v in [model.num_users as u64, model.num_items as u64, model.dim as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for x in model.user_emb.iter().chain(&model.item_emb) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let mut u64_buf = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut u64_buf)
            .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(u64::from_le_bytes(u64_buf))
    };
    let num_users = read_u64(&mut r)? as usize;
    let num_items = read_u64(&mut r)? as usize;
    let dim = read_u64(&mut r)? as usize;
    if num_users == 0 || num_items == 0 || dim == 0 || dim > 1 << 20 {
        return Err(Error::Checkpoint("implausible dimensions".into()));
    }
    let read_table = |r: &mut BufReader<File>, n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    };
    let user_emb = read_table(&mut r, num_users * dim)?;
    let item_emb = read_table(&mut r, num_items * dim)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after matrices",
            rest.len()
        )));
    }
    Ok(EmbeddingModel {
        dim,
        num_users,
        num_items,
        user_emb,
        item_emb,
    })
}

/// Build a model with explicit tables; for tests and references.
pub fn model_from_tables(
    dim: usize,
    user_emb: Vec<f64>,
    item_emb: Vec<f64>,
) -> EmbeddingModel {
    assert!(dim > 0 && user_emb.len() % dim == 0 && item_emb.len() % dim == 0);
    EmbeddingModel {
        dim,
        num_users: user_emb.len() / dim,
        num_items: item_emb.len() / dim,
        user_emb,
        item_emb,
    }
}

/// Fill a model with uniform random entries from an explicit generator;
/// used by property tests that need many small random models.
pub fn random_model(
    num_users: usize,
    num_items: usize,
    dim: usize,
    scale: f64,
    rng: &mut impl Rng,
) -> EmbeddingModel {
    let user_emb = (0..num_users * dim)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    let item_emb = (0..num_items * dim)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    model_from_tables(dim, user_emb, item_emb)
}
