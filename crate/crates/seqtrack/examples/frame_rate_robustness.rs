//! The low-frame-rate protocol: evaluate a tracker while visiting every
//! i-th frame only, which simulates faster motion. Interval augmentation
//! during training exists to flatten exactly this degradation curve.
//!
//!     cargo run --release --example frame_rate_robustness

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqtrack::episodes::{generate_synthetic_dataset, SyntheticSceneConfig};
use seqtrack::harness::{format_sweep_table, frame_rate_sweep, EvalProtocol};
use seqtrack::tracker::{TrackerConfig, TrackerModel};

/// Fresh models zero-initialize their output heads (identical behavior),
/// so give each some random head weights.
fn jittered_model(seed: u64) -> TrackerModel {
    let mut model = TrackerModel::new(TrackerConfig::default(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<f64> = model
        .params_flat()
        .iter()
        .map(|p| p + 0.02 * seqtrack::nn::randn(&mut rng))
        .collect();
    model.set_params_flat(&params);
    model
}

fn main() -> anyhow::Result<()> {
    let dataset = generate_synthetic_dataset(
        &SyntheticSceneConfig {
            num_frames: 36,
            seed: 21,
            ..Default::default()
        },
        8,
    );
    // Two untrained trackers stand in for the SA-on/SA-off pair here; the
    // acceptance suite runs the real comparison with trained models.
    let a = jittered_model(1);
    let b = jittered_model(2);

    let rows = frame_rate_sweep(
        &[("model_a".to_string(), &a), ("model_b".to_string(), &b)],
        &dataset,
        &[1, 2, 3],
        &EvalProtocol::default(),
    )?;
    print!("{}", format_sweep_table(&rows));

    for name in ["model_a", "model_b"] {
        let ao = |i: usize| {
            rows.iter()
                .find(|r| r.model == name && r.interval == i)
                .map(|r| r.report.ao)
                .unwrap_or(f64::NAN)
        };
        println!("{name}: AO drop from i=1 to i=3 is {:+.4}", ao(3) - ao(1));
    }
    Ok(())
}
