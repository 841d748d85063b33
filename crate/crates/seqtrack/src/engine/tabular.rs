//! An enumerable tabular policy environment: T independent categorical
//! decisions over N actions with a reward table over whole action
//! sequences. Small enough to enumerate exactly, it provides ground-truth
//! oracles for the policy-gradient estimators used in training.

use ndarray::Array2;
use rand::Rng;

use crate::nn::softmax;
use crate::{Error, Result};

/// Enumeration guard: `N^T` must not exceed this.
pub const ENUMERATION_LIMIT: u128 = 100_000;

#[derive(Debug, Clone)]
pub struct TabularPolicyEnv {
    /// Decisions per episode (T).
    pub steps: usize,
    /// Actions per decision (N).
    pub actions: usize,
    /// Policy parameters, one logit row per step.
    pub logits: Array2<f64>,
    /// Reward per action sequence, indexed base-N, values in [0, 1].
    pub rewards: Vec<f64>,
}

impl TabularPolicyEnv {
    /// Uniform-policy environment with the given reward table.
    pub fn new(steps: usize, actions: usize, rewards: Vec<f64>) -> Self {
        assert_eq!(rewards.len(), actions.pow(steps as u32));
        Self {
            steps,
            actions,
            logits: Array2::zeros((steps, actions)),
            rewards,
        }
    }

    /// Uniform policy, i.i.d. uniform rewards in [0, 1].
    pub fn random(steps: usize, actions: usize, rng: &mut impl Rng) -> Self {
        let n = actions.pow(steps as u32);
        let rewards = (0..n).map(|_| rng.gen()).collect();
        Self::new(steps, actions, rewards)
    }

    pub fn num_sequences(&self) -> Result<usize> {
        let n = (self.actions as u128).pow(self.steps as u32);
        if n > ENUMERATION_LIMIT {
            return Err(Error::SizeGuard {
                states: n,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(n as usize)
    }

    /// Per-step action probabilities.
    pub fn probs(&self) -> Vec<Vec<f64>> {
        (0..self.steps)
            .map(|t| softmax(self.logits.row(t).as_slice().unwrap()))
            .collect()
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut seq = vec![0; self.steps];
        for t in (0..self.steps).rev() {
            seq[t] = index % self.actions;
            index /= self.actions;
        }
        seq
    }

    pub fn encode(&self, seq: &[usize]) -> usize {
        seq.iter().fold(0, |acc, &a| acc * self.actions + a)
    }

    pub fn reward_of(&self, seq: &[usize]) -> f64 {
        self.rewards[self.encode(seq)]
    }

    /// Per-step argmax actions (ties to the lowest index).
    pub fn greedy_sequence(&self) -> Vec<usize> {
        self.probs()
            .iter()
            .map(|p| crate::tracker::argmax(p))
            .collect()
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Draw one action sequence from the current policy.
    pub fn sample_sequence(&self, rng: &mut impl Rng) -> Vec<usize> {
        self.probs()
            .iter()
            .map(|p| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return i;
                    }
                }
                p.len() - 1
            })
            .collect()
    }
}

/// Exact `E_{l~π}[r(l)]` by enumeration.
pub fn enumerate_expected_reward(env: &TabularPolicyEnv) -> Result<f64> {
    let n = env.num_sequences()?;
    let probs = env.probs();
    let mut total = 0.0;
    for idx in 0..n {
        let seq = env.decode(idx);
        let p: f64 = seq.iter().zip(&probs).map(|(&a, row)| row[a]).product();
        total += p * env.rewards[idx];
    }
    Ok(total)
}

/// Exact gradient of the loss `-E[r]` with respect to the logits, by
/// enumeration: `dE/dθ[t][n] = Σ_l P(l) r(l) (1[a_t=n] - p_t(n))`.
pub fn exact_policy_gradient(env: &TabularPolicyEnv) -> Result<Array2<f64>> {
    let n = env.num_sequences()?;
    let probs = env.probs();
    let mut grad = Array2::zeros((env.steps, env.actions));
    for idx in 0..n {
        let seq = env.decode(idx);
        let p: f64 = seq.iter().zip(&probs).map(|(&a, row)| row[a]).product();
        let weight = p * env.rewards[idx];
        for (t, &a) in seq.iter().enumerate() {
            for act in 0..env.actions {
                let indicator = if act == a { 1.0 } else { 0.0 };
                grad[[t, act]] -= weight * (indicator - probs[t][act]);
            }
        }
    }
    Ok(grad)
}

/// Monte Carlo gradient estimators for the same loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Single-sample score-function estimator: `-r ∇log p`.
    Reinforce,
    /// Self-critical: `-(r - r') ∇log p` with the greedy rollout's reward
    /// `r'` as baseline.
    Scst,
}

/// One sampled loss-gradient contribution. Returns (gradient, r, baseline).
pub fn sample_gradient(
    env: &TabularPolicyEnv,
    estimator: Estimator,
    rng: &mut impl Rng,
) -> (Array2<f64>, f64, f64) {
    let probs = env.probs();
    let seq = env.sample_sequence(rng);
    let r = env.reward_of(&seq);
    let baseline = match estimator {
        Estimator::Reinforce => 0.0,
        Estimator::Scst => env.reward_of(&env.greedy_sequence()),
    };
    let advantage = r - baseline;
    let mut grad = Array2::zeros((env.steps, env.actions));
    for (t, &a) in seq.iter().enumerate() {
        for act in 0..env.actions {
            let indicator = if act == a { 1.0 } else { 0.0 };
            grad[[t, act]] = -advantage * (indicator - probs[t][act]);
        }
    }
    (grad, r, baseline)
}

/// Monte Carlo mean and per-component standard errors of an estimator.
#[derive(Debug, Clone)]
pub struct GradEstimate {
    pub mean: Array2<f64>,
    pub stderr: Array2<f64>,
    pub num_samples: usize,
}

pub fn estimate_gradient(
    env: &TabularPolicyEnv,
    estimator: Estimator,
    num_samples: usize,
    rng: &mut impl Rng,
) -> GradEstimate {
    assert!(num_samples >= 2);
    let shape = (env.steps, env.actions);
    let mut mean = Array2::zeros(shape);
    let mut m2 = Array2::zeros(shape);
    for i in 0..num_samples {
        let (g, _, _) = sample_gradient(env, estimator, rng);
        // Welford update, per component.
        let count = (i + 1) as f64;
        let delta = &g - &mean;
        mean = &mean + &(&delta / count);
        let delta2 = &g - &mean;
        m2 = &m2 + &(&delta * &delta2);
    }
    let n = num_samples as f64;
    let stderr = m2.mapv(|v: f64| (v / (n - 1.0)).max(0.0).sqrt() / n.sqrt());
    GradEstimate {
        mean,
        stderr,
        num_samples,
    }
}

/// Empirical per-component variance of single-sample gradients; used to
/// compare estimator spread under reward offsets.
pub fn gradient_variance(
    env: &TabularPolicyEnv,
    estimator: Estimator,
    num_samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let est = estimate_gradient(env, estimator, num_samples, rng);
    let n = num_samples as f64;
    // stderr = sqrt(var/n) per component; report the summed variance.
    est.stderr.mapv(|se| se * se * n).sum()
}

/// Plain SGD self-critical training on the tabular environment with a
/// linear learning-rate ramp from `lr_start` to `lr_end`. Starting small
/// keeps the policy exploratory while the advantage signal accumulates,
/// then the growing step sharpens it; equal values give a constant rate.
/// Returns the exact expected reward after each step (by enumeration).
pub fn train_scst_tabular(
    env: &mut TabularPolicyEnv,
    steps: usize,
    samples_per_step: usize,
    (lr_start, lr_end): (f64, f64),
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut grad = Array2::zeros((env.steps, env.actions));
        for _ in 0..samples_per_step {
            let (g, _, _) = sample_gradient(env, Estimator::Scst, rng);
            grad += &g;
        }
        grad /= samples_per_step as f64;
        let progress = step as f64 / (steps - 1).max(1) as f64;
        let lr = lr_start + (lr_end - lr_start) * progress;
        env.logits = &env.logits - &(grad * lr);
        trace.push(enumerate_expected_reward(env)?);
    }
    Ok(trace)
}
