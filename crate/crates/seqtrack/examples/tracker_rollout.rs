//! Roll a tracker over one episode in both action modes and inspect the
//! trajectories: chosen candidates, log-probabilities, per-frame overlap,
//! and the episode rewards whose difference drives the self-critical
//! update.
//!
//!     cargo run --example tracker_rollout

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqtrack::boxgeom::iou;
use seqtrack::engine::scst_rollout;
use seqtrack::episodes::{generate_synthetic_dataset, sample_episode, SyntheticSceneConfig};
use seqtrack::tracker::{TrackerConfig, TrackerModel};

fn main() -> anyhow::Result<()> {
    let dataset = generate_synthetic_dataset(
        &SyntheticSceneConfig {
            num_frames: 40,
            seed: 12,
            ..Default::default()
        },
        4,
    );
    let model = TrackerModel::new(TrackerConfig::default(), 0);
    println!(
        "tracker: {} candidates ({}x{} map), {} parameters\n",
        model.cfg.num_candidates(),
        model.cfg.score_size(),
        model.cfg.score_size(),
        model.num_params()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let episode = sample_episode(&dataset, 8, 4, &mut rng)?;
    println!(
        "episode: video {}, interval {}, T={}",
        episode.source_id,
        episode.interval,
        episode.len()
    );

    let pair = scst_rollout(&model, &episode, &mut rng)?;
    println!("\n t | sampled n_t  log p     iou    | greedy n_t   iou");
    for t in 0..episode.len() {
        println!(
            "{:>2} | {:>10} {:>8.3} {:>8.3} | {:>9} {:>8.3}",
            t + 1,
            pair.sampled.indices[t],
            pair.sampled.logprobs[t],
            iou(&pair.sampled.boxes[t], &episode.gt_boxes[t]),
            pair.greedy.indices[t],
            iou(&pair.greedy.boxes[t], &episode.gt_boxes[t]),
        );
    }
    println!(
        "\nr(sampled) = {:.4}   r(greedy) = {:.4}   advantage = {:+.4}",
        pair.sampled.reward, pair.greedy.reward, pair.advantage
    );
    println!("(an untrained tracker wanders; training is the point)");
    Ok(())
}
