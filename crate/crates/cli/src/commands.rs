//! Command implementations shared by the binary and the test suites.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use s2srank_core::data::{
    build_dataset, load_dataset, parse_ratings_file, save_dataset, split_dataset, DatasetSidecar,
    InteractionDataset,
};
use s2srank_core::eval::{evaluate, render_table, EvalReport};
use s2srank_core::loss::Objective;
use s2srank_core::model::{load_checkpoint, save_checkpoint, CheckpointSidecar, EmbeddingModel};
use s2srank_core::trainer::{epoch_time_probe, linear_fit, train_with, TrainConfig, TrainReport};
use s2srank_core::Split;

use crate::config::{ExperimentConfig, GridBlock};
use crate::CliError;

/// Where a command writes its artifacts.
pub struct RunContext {
    pub run_dir: PathBuf,
}

impl RunContext {
    /// Explicit directory, or `<out_root>/<timestamp>-<config_hash>`.
    pub fn create(
        out_root: &Path,
        explicit: Option<&Path>,
        config_hash: &str,
    ) -> Result<Self, CliError> {
        let run_dir = match explicit {
            Some(dir) => dir.to_path_buf(),
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
                out_root.join(format!("{stamp}-{config_hash}"))
            }
        };
        std::fs::create_dir_all(&run_dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", run_dir.display())))?;
        Ok(RunContext { run_dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }
}

/// Parse, core-filter and split the raw log; write the binary dataset plus
/// its sidecar. Returns the dataset path.
pub fn cmd_prepare(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<PathBuf, CliError> {
    let raw_path = cfg.data.path.as_ref().ok_or_else(|| {
        CliError::usage("prepare needs data.path pointing at a rating log")
    })?;
    if !raw_path.exists() {
        return Err(CliError::usage(format!(
            "input file {} does not exist",
            raw_path.display()
        )));
    }
    let interactions =
        parse_ratings_file(raw_path, cfg.data.format, cfg.data.rating_threshold)?;
    let built = build_dataset(&interactions, cfg.data.min_interactions)?;
    let [r_train, r_val, r_test] = cfg.data.split;
    let ds = split_dataset(&built, (r_train, r_val, r_test), cfg.data.seed)?;

    let out = ctx.path("dataset.s2sr");
    save_dataset(&ds, &out)?;
    DatasetSidecar {
        num_users: ds.num_users(),
        num_items: ds.num_items(),
        interactions: ds.total_train()
            + (0..ds.num_users() as u32)
                .map(|u| ds.val(u).len() + ds.test(u).len())
                .sum::<usize>(),
        split_ratios: Some(cfg.data.split),
        split_seed: Some(cfg.data.seed),
        config_hash: Some(cfg.data_hash()),
    }
    .save(&out)?;

    let total: usize = ds.total_train()
        + (0..ds.num_users() as u32)
            .map(|u| ds.val(u).len() + ds.test(u).len())
            .sum::<usize>();
    let density = total as f64 / (ds.num_users() as f64 * ds.num_items() as f64);
    println!(
        "prepared {}: {} users, {} items, {} interactions, density {:.4}%",
        out.display(),
        ds.num_users(),
        ds.num_items(),
        total,
        100.0 * density
    );
    Ok(out)
}

/// Load the prepared dataset named by the config, or build one in memory
/// from the raw log.
pub fn obtain_dataset(cfg: &ExperimentConfig) -> Result<InteractionDataset, CliError> {
    if let Some(path) = &cfg.data.dataset {
        let ds = load_dataset(path)?;
        if let Ok(sidecar) = DatasetSidecar::load(path) {
            if let Some(recorded) = &sidecar.config_hash {
                let current = cfg.data_hash();
                if recorded != &current {
                    log::warn!(
                        "dataset {} was prepared under config hash {recorded}, current data block hashes to {current}",
                        path.display()
                    );
                }
            }
        }
        return Ok(ds);
    }
    let raw_path = cfg.data.path.as_ref().ok_or_else(|| {
        CliError::usage("config needs data.dataset or data.path")
    })?;
    if !raw_path.exists() {
        return Err(CliError::usage(format!(
            "input file {} does not exist",
            raw_path.display()
        )));
    }
    let interactions =
        parse_ratings_file(raw_path, cfg.data.format, cfg.data.rating_threshold)?;
    let built = build_dataset(&interactions, cfg.data.min_interactions)?;
    let [r_train, r_val, r_test] = cfg.data.split;
    Ok(split_dataset(&built, (r_train, r_val, r_test), cfg.data.seed)?)
}

/// Train per the config; write checkpoint, sidecar and a JSONL training log.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
) -> Result<(EmbeddingModel, TrainReport), CliError> {
    let ds = obtain_dataset(cfg)?;
    let train_cfg = cfg.to_train_config();
    train_cfg.validate()?;

    let log_path = ctx.path("train_log.jsonl");
    let mut log_file = BufWriter::new(File::create(&log_path)?);
    let (model, report) = train_with(&ds, &train_cfg, |record| {
        if let Ok(line) = serde_json::to_string(record) {
            let _ = writeln!(log_file, "{line}");
            let _ = log_file.flush();
        }
        if let Some(ndcg) = record.val_ndcg10 {
            println!(
                "epoch {:>4}  objective {:>10.5}  val NDCG@10 {:.5}",
                record.epoch, record.objective, ndcg
            );
        }
    })?;

    let ck_path = ctx.path("model.ck");
    save_checkpoint(&model, &ck_path)?;
    CheckpointSidecar {
        config_hash: cfg.hash(),
        epoch: report.best_epoch,
    }
    .save(&ck_path)?;
    println!(
        "saved {} (best epoch {}, val NDCG@10 {})",
        ck_path.display(),
        report.best_epoch,
        report
            .best_val_ndcg10
            .map_or("n/a".to_string(), |v| format!("{v:.5}"))
    );
    Ok((model, report))
}

/// Evaluation artifact: the report plus run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

pub fn cmd_evaluate(
    checkpoint: &Path,
    dataset: &Path,
    cutoffs: &[usize],
    split: Split,
    current_config_hash: Option<&str>,
    ctx: &RunContext,
) -> Result<EvalArtifact, CliError> {
    if !checkpoint.exists() {
        return Err(CliError::usage(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    if !dataset.exists() {
        return Err(CliError::usage(format!(
            "dataset {} does not exist",
            dataset.display()
        )));
    }
    let model = load_checkpoint(checkpoint)?;
    let ds = load_dataset(dataset)?;
    let sidecar = CheckpointSidecar::load(checkpoint).ok();
    if let (Some(side), Some(current)) = (&sidecar, current_config_hash) {
        if side.config_hash != current {
            log::warn!(
                "checkpoint was trained under config hash {}, current config hashes to {current}",
                side.config_hash
            );
        }
    }

    let report = evaluate(&model, &ds, split, cutoffs)?;
    let artifact = EvalArtifact {
        config_hash: sidecar
            .as_ref()
            .map(|s| s.config_hash.clone())
            .or_else(|| current_config_hash.map(str::to_owned))
            .unwrap_or_default(),
        seed: 0,
        epoch: sidecar.map_or(0, |s| s.epoch),
        report,
    };

    let tag = match split {
        Split::Val => "val",
        Split::Test => "test",
    };
    write_json(&ctx.path(&format!("eval_{tag}.json")), &artifact)?;
    let table = render_table(&[("model".to_string(), &artifact.report)]);
    std::fs::write(ctx.path(&format!("eval_{tag}.txt")), &table)?;
    print!("{table}");
    Ok(artifact)
}

/// One trained and evaluated grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub l: usize,
    pub k: usize,
    pub objective: Objective,
    pub beta: f64,
    pub lambda: f64,
    pub best_epoch: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, Copy)]
pub struct AblationFlags {
    pub no_item_to_set: bool,
    pub no_set_to_set: bool,
}

/// Expand the grid, train every cell on the shared dataset and seed, and
/// write one row per cell sorted by NDCG@10.
pub fn cmd_compare(
    cfg: &ExperimentConfig,
    ablation: AblationFlags,
    parallel: usize,
    ctx: &RunContext,
) -> Result<Vec<CompareRow>, CliError> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| CliError::usage("compare needs a [grid] block"))?;
    let cells = expand_grid(cfg, grid, ablation)?;
    if cells.is_empty() {
        return Err(CliError::usage("the grid is empty"));
    }
    println!("grid has {} cells", cells.len());

    let ds = obtain_dataset(cfg)?;
    let cutoffs = cfg.eval.cutoffs.clone();
    let split = cfg.eval.split;

    let run_cell = |(label, train_cfg): &(String, TrainConfig)| -> Result<CompareRow, CliError> {
        train_cfg.validate()?;
        let (model, report) = s2srank_core::trainer::train(&ds, train_cfg)?;
        let eval = evaluate(&model, &ds, split, &cutoffs)?;
        println!("cell {label}: best epoch {}", report.best_epoch);
        Ok(CompareRow {
            label: label.clone(),
            l: train_cfg.sampler.l,
            k: train_cfg.sampler.k,
            objective: train_cfg.loss.objective,
            beta: train_cfg.loss.beta,
            lambda: train_cfg.loss.lambda,
            best_epoch: report.best_epoch,
            report: eval,
        })
    };

    let mut rows: Vec<CompareRow> = if parallel > 1 {
        let mut out: Vec<Option<Result<CompareRow, CliError>>> =
            (0..cells.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (chunk_cells, chunk_out) in cells
                .chunks(cells.len().div_ceil(parallel))
                .zip(out.chunks_mut(cells.len().div_ceil(parallel)))
            {
                scope.spawn(|| {
                    for (cell, slot) in chunk_cells.iter().zip(chunk_out.iter_mut()) {
                        *slot = Some(run_cell(cell));
                    }
                });
            }
        });
        out.into_iter()
            .map(|r| r.expect("every cell ran"))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        cells.iter().map(run_cell).collect::<Result<Vec<_>, _>>()?
    };

    // Order by NDCG at cutoff 10 when present, else at the first cutoff.
    let ndcg_col = cutoffs.iter().position(|&n| n == 10).unwrap_or(0);
    rows.sort_by(|a, b| {
        b.report.ndcg[ndcg_col]
            .partial_cmp(&a.report.ndcg[ndcg_col])
            .unwrap()
            .then_with(|| a.label.cmp(&b.label))
    });

    write_json(&ctx.path("compare.json"), &rows)?;
    let labeled: Vec<(String, &EvalReport)> = rows
        .iter()
        .map(|r| (r.label.clone(), &r.report))
        .collect();
    let table = render_table(&labeled);
    std::fs::write(ctx.path("compare.txt"), &table)?;
    print!("{table}");
    Ok(rows)
}

fn expand_grid(
    cfg: &ExperimentConfig,
    grid: &GridBlock,
    ablation: AblationFlags,
) -> Result<Vec<(String, TrainConfig)>, CliError> {
    let base = cfg.to_train_config();
    let ls = grid.l.clone().unwrap_or_else(|| vec![base.sampler.l]);
    let ks = grid.k.clone().unwrap_or_else(|| vec![base.sampler.k]);
    let objectives = grid
        .objective
        .clone()
        .unwrap_or_else(|| vec![base.loss.objective]);
    let betas = grid.beta.clone().unwrap_or_else(|| vec![base.loss.beta]);
    let lambdas = grid
        .lambda
        .clone()
        .unwrap_or_else(|| vec![base.loss.lambda]);
    if ablation.no_item_to_set && ablation.no_set_to_set {
        return Err(CliError::usage(
            "--no-item-to-set and --no-set-to-set together leave no objective",
        ));
    }

    let mut cells = Vec::new();
    for &objective in &objectives {
        for &l in &ls {
            for &k in &ks {
                for &beta in &betas {
                    for &lambda in &lambdas {
                        let mut cell = base.clone();
                        cell.loss.objective = objective;
                        cell.loss.beta = beta;
                        cell.loss.lambda = lambda;
                        cell.sampler.l = if objective == Objective::Bpr { 1 } else { l };
                        cell.sampler.k = k;
                        if objective == Objective::Bpr {
                            cell.sampler.mask_enabled = false;
                            cell.loss.mask_enabled = false;
                        }
                        if ablation.no_item_to_set {
                            cell.loss.include_item_to_set = false;
                        }
                        if ablation.no_set_to_set {
                            cell.loss.lambda = 0.0;
                        }
                        let mut label = match objective {
                            Objective::Bpr => format!("bpr(K={k})"),
                            Objective::Set2set => {
                                format!("set2set(L={l},K={k},beta={beta},lambda={lambda})")
                            }
                            Objective::Set2setEasy => {
                                format!("set2set_easy(L={l},K={k},beta={beta},lambda={lambda})")
                            }
                        };
                        if cell.sampler.mask_enabled {
                            label.push_str("+mask");
                        }
                        if ablation.no_item_to_set {
                            label.push_str("[no-item-to-set]");
                        }
                        if ablation.no_set_to_set {
                            label.push_str("[no-set-to-set]");
                        }
                        cells.push((label, cell));
                    }
                }
            }
        }
    }
    cells.dedup_by(|a, b| a.0 == b.0);
    Ok(cells)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityProbe {
    pub l: usize,
    pub dim: usize,
    pub timed_epochs: usize,
    /// `(K, mean seconds per epoch)` pairs.
    pub measurements: Vec<(usize, f64)>,
    pub fit_intercept: f64,
    pub fit_slope: f64,
    pub r_squared: f64,
}

/// Time training epochs across `K` values and fit wall time against `K + L`.
pub fn cmd_probe_complexity(
    dataset: &Path,
    k_values: &[usize],
    l: usize,
    dim: usize,
    timed_epochs: usize,
    seed: u64,
    ctx: &RunContext,
) -> Result<ComplexityProbe, CliError> {
    if !dataset.exists() {
        return Err(CliError::usage(format!(
            "dataset {} does not exist",
            dataset.display()
        )));
    }
    let ds = load_dataset(dataset)?;
    let mut cfg = TrainConfig::default();
    cfg.dim = dim;
    cfg.seed = seed;
    cfg.sampler.l = l;
    cfg.sampler.seed = seed;
    cfg.eval_every = usize::MAX - 1;
    let measurements = epoch_time_probe(&ds, &cfg, k_values, timed_epochs)?;
    let xs: Vec<f64> = measurements.iter().map(|&(k, _)| (k + l) as f64).collect();
    let ys: Vec<f64> = measurements.iter().map(|&(_, t)| t).collect();
    let (fit_intercept, fit_slope, r_squared) = linear_fit(&xs, &ys);
    let probe = ComplexityProbe {
        l,
        dim,
        timed_epochs: timed_epochs.max(3),
        measurements,
        fit_intercept,
        fit_slope,
        r_squared,
    };
    write_json(&ctx.path("complexity.json"), &probe)?;
    let mut text = String::from("K      K+L    sec/epoch\n");
    for &(k, t) in &probe.measurements {
        text.push_str(&format!("{k:<6} {:<6} {t:.4}\n", k + l));
    }
    text.push_str(&format!(
        "fit: t = {fit_intercept:.5} + {fit_slope:.5} * (K+L), R^2 = {r_squared:.4}\n"
    ));
    std::fs::write(ctx.path("complexity.txt"), &text)?;
    print!("{text}");
    Ok(probe)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut out = serde_json::to_string_pretty(value)?;
    out.push('\n');
    std::fs::write(path, out)?;
    Ok(())
}
