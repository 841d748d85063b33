//! Miniature end-to-end run: frame-level pre-training, then self-critical
//! sequence-level fine-tuning, with an evaluation before and after.
//! Everything is scaled down to finish in a couple of minutes; the
//! `seqtrack` binary runs the full-size version of the same pipeline.
//!
//!     cargo run --release --example pretrain_then_slt

use seqtrack::engine::{pretrain_frame_level, train_slt, SltObjective, TrainConfig};
use seqtrack::episodes::{generate_synthetic_dataset, SyntheticSceneConfig};
use seqtrack::harness::{run_ope, EvalProtocol};
use seqtrack::nn::Adam;
use seqtrack::tracker::{TrackerConfig, TrackerModel};

fn main() -> anyhow::Result<()> {
    let scene = SyntheticSceneConfig {
        num_frames: 40,
        seed: 100,
        ..Default::default()
    };
    let train = generate_synthetic_dataset(&scene, 24);
    let test = generate_synthetic_dataset(
        &SyntheticSceneConfig {
            seed: 999,
            ..scene
        },
        8,
    );

    let mut model = TrackerModel::new(TrackerConfig::default(), 7);
    let mut adam = Adam::new(model.num_params());
    let protocol = EvalProtocol::default();

    let pretrain_cfg = TrainConfig {
        epochs: 4,
        videos_per_epoch: 128,
        lr_start: 1e-3,
        lr_end: 3e-4,
        seed: 7,
        ..Default::default()
    };
    println!("pre-training ({} steps)...", pretrain_cfg.total_steps());
    let (stats, _) =
        pretrain_frame_level(&mut model, &mut adam, 0, &train, None, &pretrain_cfg, None)?;
    println!(
        "  frame-level loss {:.3} -> {:.3}",
        stats.first().map(|s| s.loss).unwrap_or(f64::NAN),
        stats.last().map(|s| s.loss).unwrap_or(f64::NAN),
    );
    let before = run_ope(&model, &test, &protocol)?.report;
    println!("  test AO after pre-training: {:.4}", before.ao);

    let slt_cfg = TrainConfig {
        t: 8,
        k: 8,
        max_interval: 4,
        epochs: 2,
        videos_per_epoch: 160,
        lr_start: 3e-4,
        lr_end: 1e-4,
        seed: 7,
        ..Default::default()
    };
    println!("\nsequence-level fine-tuning ({} steps)...", slt_cfg.total_steps());
    let mut adam = Adam::new(model.num_params());
    let stats = train_slt(
        &mut model,
        &mut adam,
        0,
        &train,
        &slt_cfg,
        SltObjective::Scst,
        None,
    )?;
    let mid = stats.len() / 2;
    println!(
        "  mean sampled reward {:.3} -> {:.3}, mean advantage {:+.4} -> {:+.4}",
        stats[..mid].iter().map(|s| s.mean_r_sample).sum::<f64>() / mid as f64,
        stats[mid..].iter().map(|s| s.mean_r_sample).sum::<f64>() / (stats.len() - mid) as f64,
        stats[..mid].iter().map(|s| s.mean_advantage).sum::<f64>() / mid as f64,
        stats[mid..].iter().map(|s| s.mean_advantage).sum::<f64>() / (stats.len() - mid) as f64,
    );

    let after = run_ope(&model, &test, &protocol)?.report;
    println!("\ntest AO: {:.4} -> {:.4} ({:+.4})", before.ao, after.ao, after.ao - before.ao);
    println!("test AUC: {:.4} -> {:.4}", before.success_auc, after.success_auc);
    Ok(())
}
