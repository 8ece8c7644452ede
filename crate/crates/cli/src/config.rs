//! Experiment configuration: TOML schema, presets, overrides and hashing.
//!
//! Precedence, lowest to highest: built-in defaults, the config file,
//! `--preset`, explicit command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use s2srank_core::data::FileFormat;
use s2srank_core::loss::{LossConfig, Objective};
use s2srank_core::sampling::{NegMode, SamplerConfig};
use s2srank_core::trainer::{Optimizer, TrainConfig};
use s2srank_core::Split;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainBlock,
    pub eval: EvalBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataBlock::default(),
            model: ModelBlock::default(),
            train: TrainBlock::default(),
            eval: EvalBlock::default(),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataBlock {
    /// Raw rating log; parsed when no prepared dataset is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Prepared binary dataset; takes precedence over `path`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub format: FileFormat,
    pub rating_threshold: f64,
    pub min_interactions: usize,
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for DataBlock {
    fn default() -> Self {
        DataBlock {
            path: None,
            dataset: None,
            format: FileFormat::Tsv,
            rating_threshold: 4.0,
            min_interactions: 10,
            split: [0.8, 0.1, 0.1],
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub dim: usize,
    pub init_scale: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            dim: 64,
            init_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub epochs: usize,
    pub lr: f64,
    /// `sgd` or `adam`.
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub l2_reg: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss: LossBlock,
    pub sampler: SamplerBlock,
}

impl Default for TrainBlock {
    fn default() -> Self {
        TrainBlock {
            epochs: 50,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            l2_reg: 1e-4,
            eval_every: 5,
            patience: 3,
            seed: 7,
            loss: LossBlock::default(),
            sampler: SamplerBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossBlock {
    pub objective: Objective,
    pub lambda: f64,
    pub beta: f64,
    pub f_floor: f64,
    pub include_item_to_set: bool,
    pub exclude_self_pairs: bool,
    pub survivor_normalization: bool,
}

impl Default for LossBlock {
    fn default() -> Self {
        LossBlock {
            objective: Objective::Set2set,
            lambda: 1.0,
            beta: 0.5,
            f_floor: 1e-12,
            include_item_to_set: true,
            exclude_self_pairs: false,
            survivor_normalization: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerBlock {
    pub l: usize,
    pub k: usize,
    pub neg_mode: NegMode,
    pub pop_smoothing: f64,
    pub mask_enabled: bool,
    pub mask_keep_prob: f64,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        SamplerBlock {
            l: 2,
            k: 5,
            neg_mode: NegMode::Uniform,
            pop_smoothing: 1.0,
            mask_enabled: false,
            mask_keep_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    pub cutoffs: Vec<usize>,
    pub split: Split,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            cutoffs: vec![10, 20, 30, 40, 50],
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<Vec<Objective>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

/// Named hyperparameter presets pinning the reproduction settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// objective=set2set, L=2, K=5, beta=0.5, lambda=1
    PaperDefault,
    /// objective=set2set with adaptive mask, beta=0.2
    PaperAdaptive,
    /// pairwise objective, L=1, same negative budget
    Bpr,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let t = &mut self.train;
        match preset {
            Preset::PaperDefault => {
                t.loss.objective = Objective::Set2set;
                t.loss.beta = 0.5;
                t.loss.lambda = 1.0;
                t.sampler.l = 2;
                t.sampler.k = 5;
                t.sampler.mask_enabled = false;
            }
            Preset::PaperAdaptive => {
                t.loss.objective = Objective::Set2set;
                t.loss.beta = 0.2;
                t.loss.lambda = 1.0;
                t.sampler.l = 2;
                t.sampler.k = 5;
                t.sampler.mask_enabled = true;
            }
            Preset::Bpr => {
                t.loss.objective = Objective::Bpr;
                t.sampler.l = 1;
                t.sampler.k = 5;
                t.sampler.mask_enabled = false;
            }
        }
    }

    /// Assemble the trainer configuration from the model and train blocks.
    pub fn to_train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            lr: t.lr,
            optimizer: match t.optimizer {
                OptimizerKind::Sgd => Optimizer::Sgd,
                OptimizerKind::Adam => Optimizer::Adam {
                    beta1: t.adam_beta1,
                    beta2: t.adam_beta2,
                    eps: t.adam_eps,
                },
            },
            l2_reg: t.l2_reg,
            eval_every: t.eval_every,
            patience: t.patience,
            seed: t.seed,
            dim: self.model.dim,
            init_scale: self.model.init_scale,
            loss: LossConfig {
                objective: t.loss.objective,
                lambda: t.loss.lambda,
                beta: t.loss.beta,
                mask_enabled: t.sampler.mask_enabled,
                f_floor: t.loss.f_floor,
                include_item_to_set: t.loss.include_item_to_set,
                exclude_self_pairs: t.loss.exclude_self_pairs,
                survivor_normalization: t.loss.survivor_normalization,
            },
            sampler: SamplerConfig {
                l: t.sampler.l,
                k: t.sampler.k,
                neg_mode: t.sampler.neg_mode,
                pop_smoothing: t.sampler.pop_smoothing,
                mask_enabled: t.sampler.mask_enabled,
                mask_keep_prob: t.sampler.mask_keep_prob,
                seed: t.seed,
            },
        }
    }

    /// Hash of the fully resolved configuration.
    pub fn hash(&self) -> String {
        hash_of(self)
    }

    /// Hash of the preparation parameters alone; identifies a prepared
    /// dataset. The `dataset` pointer itself stays out of the hash so that
    /// training against a prepared file does not change it.
    pub fn data_hash(&self) -> String {
        let mut block = self.data.clone();
        block.dataset = None;
        hash_of(&block)
    }
}

/// First 12 hex characters of the SHA-256 of the canonical JSON encoding.
pub fn hash_of(value: &impl Serialize) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(12);
    for byte in digest.iter().take(6) {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
