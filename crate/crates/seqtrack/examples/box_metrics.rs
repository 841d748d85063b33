//! Tour of the box arithmetic and the sequence-level metrics.
//!
//!     cargo run --example box_metrics

use seqtrack::boxgeom::{center_distance, giou, iou, BBox};
use seqtrack::metrics::{
    average_overlap, episode_reward, normalized_precision_auc, success_auc, success_rate,
    OverlapSequence,
};

fn main() -> anyhow::Result<()> {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0);
    let b = BBox::new(1.0, 1.0, 2.0, 2.0);
    println!("iou(a, a)              = {}", iou(&a, &a));
    println!("iou(a, shifted)        = {:.6} (exactly 1/7)", iou(&a, &b));
    println!("giou(a, shifted)       = {:.6}", giou(&a, &b));
    println!("center distance        = {:.6}", center_distance(&a, &b));

    let overlaps = OverlapSequence::new(vec![0.9, 0.7, 0.55, 0.3, 0.85])?;
    println!("\naverage overlap (AO)   = {:.4}", average_overlap(&overlaps)?);
    println!("success rate @0.5      = {:.4}", success_rate(&overlaps, 0.5)?);
    println!("success rate @0.75     = {:.4}", success_rate(&overlaps, 0.75)?);
    for n in [21, 101, 10_001] {
        println!(
            "success AUC ({n:>5} thresholds) = {:.6}",
            success_auc(&overlaps, n)?
        );
    }
    println!("(the AUC converges to AO as the threshold grid refines)");

    let gt: Vec<BBox> = (0..5)
        .map(|i| BBox::new(10.0 + i as f64 * 3.0, 20.0, 8.0, 6.0))
        .collect();
    let pred: Vec<BBox> = gt
        .iter()
        .map(|g| BBox::new(g.x + 1.0, g.y - 0.5, g.w, g.h))
        .collect();
    println!("\nepisode reward r       = {:.4}", episode_reward(&pred, &gt)?);
    println!(
        "normalized precision   = {:.4}",
        normalized_precision_auc(&pred, &gt)?
    );
    Ok(())
}
