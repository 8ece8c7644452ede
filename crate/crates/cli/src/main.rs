//! `s2srank`: prepare data, train ranking models, evaluate and compare.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use s2srank_cli::commands::{
    cmd_compare, cmd_evaluate, cmd_prepare, cmd_probe_complexity, cmd_train, AblationFlags,
    RunContext,
};
use s2srank_cli::config::{ExperimentConfig, Preset};
use s2srank_cli::CliError;
use s2srank_core::loss::Objective;
use s2srank_core::Split;

#[derive(Parser)]
#[command(
    name = "s2srank",
    version,
    about = "Set-level collaborative ranking for implicit feedback",
    after_help = "Set RUST_LOG=info (or debug) for verbose logging."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rating log, core-filter, split and write a binary dataset.
    Prepare {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a model; writes checkpoint, sidecar and a JSONL training log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pin known-good hyperparameter sets.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Prepared dataset file; overrides data.dataset from the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Force the single-worker reproducible path (always on; accepted
        /// for compatibility with scripted runs).
        #[arg(long)]
        deterministic: bool,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Rank all non-train items per user and report HR@N / NDCG@N.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated cutoffs.
        #[arg(long, value_delimiter = ',')]
        cutoffs: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Config used for hash-mismatch detection.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train every cell of the [grid] block and emit a consolidated table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Drop the item-to-set term (margin-only objective).
        #[arg(long)]
        no_item_to_set: bool,
        /// Drop the set-to-set term (lambda = 0).
        #[arg(long)]
        no_set_to_set: bool,
        /// Worker threads for independent grid cells.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Measure per-epoch wall time across K and fit it against K + L.
    ProbeComplexity {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated K values.
        #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20, 40])]
        k: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        l: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        /// Timed epochs per K (after one warmup epoch).
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Exact output directory (default: <out-root>/<timestamp>-<hash>).
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out_root: PathBuf,
}

/// Flag-level overrides; they beat both the config file and presets.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Enable or disable the adaptive mask.
    #[arg(long)]
    mask: Option<bool>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
enum ObjectiveArg {
    Bpr,
    Set2set,
    Set2setEasy,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Bpr => Objective::Bpr,
            ObjectiveArg::Set2set => Objective::Set2set,
            ObjectiveArg::Set2setEasy => Objective::Set2setEasy,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.data.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.train.epochs = epochs;
        }
        if let Some(dim) = self.dim {
            cfg.model.dim = dim;
        }
        if let Some(lr) = self.lr {
            cfg.train.lr = lr;
        }
        if let Some(objective) = self.objective {
            cfg.train.loss.objective = objective.into();
            if matches!(objective, ObjectiveArg::Bpr) {
                cfg.train.sampler.l = 1;
                cfg.train.sampler.mask_enabled = false;
            }
        }
        if let Some(l) = self.l {
            cfg.train.sampler.l = l;
        }
        if let Some(k) = self.k {
            cfg.train.sampler.k = k;
        }
        if let Some(beta) = self.beta {
            cfg.train.loss.beta = beta;
        }
        if let Some(lambda) = self.lambda {
            cfg.train.loss.lambda = lambda;
        }
        if let Some(mask) = self.mask {
            cfg.train.sampler.mask_enabled = mask;
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare {
            config,
            out,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg);
            let ctx = RunContext::create(&out.out_root, out.run_dir.as_deref(), &cfg.hash())?;
            cmd_prepare(&cfg, &ctx)?;
        }
        Command::Train {
            config,
            preset,
            dataset,
            deterministic: _,
            out,
            overrides,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(p) = preset {
                cfg.apply_preset(p);
            }
            overrides.apply(&mut cfg);
            if let Some(ds) = dataset {
                cfg.data.dataset = Some(ds);
            }
            let ctx = RunContext::create(&out.out_root, out.run_dir.as_deref(), &cfg.hash())?;
            cmd_train(&cfg, &ctx)?;
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            cutoffs,
            split,
            config,
            out,
        } => {
            let cfg = load_config(config.as_ref())?;
            let cutoffs = cutoffs.unwrap_or_else(|| cfg.eval.cutoffs.clone());
            let hash = config.as_ref().map(|_| cfg.hash());
            let ctx = RunContext::create(
                &out.out_root,
                out.run_dir.as_deref(),
                hash.as_deref().unwrap_or("eval"),
            )?;
            cmd_evaluate(
                &checkpoint,
                &dataset,
                &cutoffs,
                split.into(),
                hash.as_deref(),
                &ctx,
            )?;
        }
        Command::Compare {
            config,
            no_item_to_set,
            no_set_to_set,
            parallel,
            out,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg);
            let ctx = RunContext::create(&out.out_root, out.run_dir.as_deref(), &cfg.hash())?;
            cmd_compare(
                &cfg,
                AblationFlags {
                    no_item_to_set,
                    no_set_to_set,
                },
                parallel.max(1),
                &ctx,
            )?;
        }
        Command::ProbeComplexity {
            dataset,
            k,
            l,
            dim,
            epochs,
            seed,
            out,
        } => {
            let ctx = RunContext::create(&out.out_root, out.run_dir.as_deref(), "probe")?;
            cmd_probe_complexity(&dataset, &k, l, dim, epochs, seed, &ctx)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
