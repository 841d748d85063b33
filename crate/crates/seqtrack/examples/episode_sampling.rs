//! Episode sampling with frame-interval augmentation: the interval is
//! drawn uniformly per episode up to the configured maximum, simulating
//! faster motion.
//!
//!     cargo run --example episode_sampling

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqtrack::episodes::{generate_synthetic_dataset, sample_episode, SyntheticSceneConfig};

fn main() -> anyhow::Result<()> {
    let dataset = generate_synthetic_dataset(
        &SyntheticSceneConfig {
            num_frames: 120,
            seed: 3,
            ..Default::default()
        },
        6,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (t, max_interval) = (10, 8);
    let mut histogram = vec![0usize; max_interval + 1];
    let draws = 4000;
    for _ in 0..draws {
        let episode = sample_episode(&dataset, t, max_interval, &mut rng)?;
        histogram[episode.interval] += 1;
    }

    println!("interval histogram over {draws} episodes (T={t}, max={max_interval}):");
    for (interval, count) in histogram.iter().enumerate().skip(1) {
        let bar = "#".repeat(count * 240 / draws);
        println!("  i={interval}: {count:>5} {bar}");
    }

    let episode = sample_episode(&dataset, t, max_interval, &mut rng)?;
    println!(
        "\none episode: video {}, start {}, interval {}, {} search frames",
        episode.source_id,
        episode.start_index,
        episode.interval,
        episode.len()
    );
    println!(
        "gt boxes trace source indices {:?}",
        (1..=t)
            .map(|s| episode.start_index + s * episode.interval)
            .collect::<Vec<_>>()
    );
    Ok(())
}
