//! Scratch harness for sizing the desk-scale experiment. Ignored by default.

use std::time::Instant;

use s2srank_core::data::{build_dataset, split_dataset, InteractionDataset};
use s2srank_core::eval::{evaluate, Split};
use s2srank_core::loss::Objective;
use s2srank_core::synth::{generate_interactions, SynthConfig};
use s2srank_core::trainer::{train, Optimizer, TrainConfig};

fn desk_dataset(exposure_noise: f64) -> InteractionDataset {
    let cfg = SynthConfig {
        num_users: 1500,
        num_items: 4000,
        latent_dim: 24,
        items_per_user: (20, 120),
        popularity_weight: 0.3,
        noise: 0.35,
        exposure_noise,
        clusters: 30,
        interests_per_user: 4,
        cluster_spread: 0.3,
        seed: 20_250_401,
    };
    let ints = generate_interactions(&cfg);
    eprintln!("synth interactions: {}", ints.len());
    let ds = build_dataset(&ints, 10).unwrap();
    split_dataset(&ds, (0.8, 0.1, 0.1), 1234).unwrap()
}

fn base_train(seed: u64, epochs: usize, lr: f64, dim: usize) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.optimizer = Optimizer::default_adam();
    cfg.l2_reg = 1e-4;
    cfg.eval_every = 5;
    cfg.patience = 3;
    cfg.seed = seed;
    cfg.dim = dim;
    cfg.sampler.seed = seed;
    cfg
}

fn run(ds: &InteractionDataset, cfg: &TrainConfig, label: &str) -> f64 {
    let t = Instant::now();
    let (model, report) = train(ds, cfg).unwrap();
    let test = evaluate(&model, ds, Split::Test, &[10]).unwrap();
    eprintln!(
        "{label}: test NDCG@10 {:.5} (best epoch {}, {} epochs ran, {:.1}s)",
        test.ndcg[0],
        report.best_epoch,
        report.epochs.len(),
        t.elapsed().as_secs_f64()
    );
    test.ndcg[0]
}

#[test]
#[ignore]
fn tune_trajectories() {
    use s2srank_core::trainer::train_with;
    struct Probe {
        label: &'static str,
        lr: f64,
        objective: Objective,
        lambda: f64,
    }
    let probes = [
        Probe { label: "set2set", lr: 1e-3, objective: Objective::Set2set, lambda: 1.0 },
        Probe { label: "l2only ", lr: 1e-3, objective: Objective::Set2set, lambda: 0.0 },
        Probe { label: "bpr    ", lr: 1e-3, objective: Objective::Bpr, lambda: 1.0 },
    ];
    for noise in [0.0, 0.25] {
        let ds = desk_dataset(noise);
        for seed in [1u64, 2, 3] {
            for p in &probes {
                let mut cfg = base_train(seed, 150, p.lr, 64);
                cfg.l2_reg = 1e-2;
                cfg.eval_every = 5;
                cfg.patience = 4;
                cfg.loss.objective = p.objective;
                cfg.loss.lambda = p.lambda;
                if p.objective == Objective::Bpr {
                    cfg.sampler.l = 1;
                }
                let (model, report) = train_with(&ds, &cfg, |_| {}).unwrap();
                let test = evaluate(&model, &ds, Split::Test, &[10]).unwrap();
                eprintln!(
                    "noise={noise} seed={seed} {}: best val {:.4} @{} test {:.4}",
                    p.label,
                    report.best_val_ndcg10.unwrap(),
                    report.best_epoch,
                    test.ndcg[0]
                );
            }
        }
    }
}

#[test]
#[ignore]
fn tune_desk_scale() {
    let ds = desk_dataset(1.0);
    eprintln!(
        "dataset: {} users, {} items, {} train interactions",
        ds.num_users(),
        ds.num_items(),
        ds.total_train()
    );
    let epochs = 30;
    let lr = 3e-3;
    let dim = 64;
    for seed in [1u64, 2, 3] {
        let mut full = base_train(seed, epochs, lr, dim);
        full.loss.objective = Objective::Set2set;
        let n_full = run(&ds, &full, &format!("seed {seed} set2set   "));

        let mut bpr = base_train(seed, epochs, lr, dim);
        bpr.loss.objective = Objective::Bpr;
        bpr.sampler.l = 1;
        let n_bpr = run(&ds, &bpr, &format!("seed {seed} bpr       "));

        eprintln!(
            "seed {seed}: relative gain {:.2}%",
            100.0 * (n_full - n_bpr) / n_bpr
        );
    }
}
