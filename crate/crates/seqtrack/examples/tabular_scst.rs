//! Self-critical training on the enumerable tabular environment: expected
//! reward climbs toward the enumerated optimum.
//!
//!     cargo run --example tabular_scst

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqtrack::engine::tabular::{
    enumerate_expected_reward, train_scst_tabular, TabularPolicyEnv,
};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut env = TabularPolicyEnv::random(3, 3, &mut rng);
    let optimum = env.max_reward();
    println!(
        "start: E[r] = {:.4}, optimum = {:.4}",
        enumerate_expected_reward(&env)?,
        optimum
    );

    let trace = train_scst_tabular(&mut env, 500, 4, (0.2, 2.0), &mut rng)?;
    for (step, value) in trace.iter().enumerate() {
        if step % 50 == 49 || step == 0 {
            let frac = value / optimum;
            let bar = "#".repeat((frac * 50.0) as usize);
            println!("step {:>3}: E[r] = {value:.4} ({:>5.1}% of optimum) {bar}", step + 1, frac * 100.0);
        }
    }
    println!(
        "greedy sequence after training: {:?} with reward {:.4}",
        env.greedy_sequence(),
        env.reward_of(&env.greedy_sequence())
    );
    Ok(())
}
