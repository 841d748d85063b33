//! Training machinery: frame-level pre-training, the self-critical
//! sequence-level objective over batches of episodes, the combined loss
//! with box-regression terms, the optimizer loop with run-directory
//! artifacts, and an enumerable tabular environment providing exact
//! policy-gradient oracles.
//!
//! Gradients follow a two-phase scheme per episode: a no-grad rollout
//! first fixes the search regions, sampled actions, and advantage (the
//! non-differentiable parts), then a second cached pass differentiates the
//! surrogate loss `-(r - r') Σ log p` plus box terms through the network.
//! Finite-difference checks perturb parameters under the same frozen
//! rollout record, so analytic and numeric gradients see the same
//! function.

pub mod tabular;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{giou, giou_grad, iou, search_region, BBox, CropSpec, PerturbConfig};
use crate::episodes::{derive_seed, sample_episode, sample_frame_pair, Dataset, Episode};
use crate::img::{crop_resize, Image};
use crate::nn::{clip_global_norm, Adam, NormMode};
use crate::tracker::{
    action_distribution, apply_penalty, decode_box, run_episode, save_checkpoint, ActionMode,
    DistStyle, ModelGrads, ScoreMap, Stage, TrackState, TrackerModel, Trajectory,
};
use crate::{Error, Result};

/// All training hyper-parameters for both stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Episode length T.
    pub t: usize,
    /// Episodes (or frame pairs) per optimizer step.
    pub k: usize,
    /// Frame-interval augmentation bound; 1 disables augmentation.
    pub max_interval: usize,
    pub lambda_l1: f64,
    pub lambda_giou: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Epochs held at `lr_start` before the exponential decay begins.
    pub lr_hold_epochs: usize,
    pub epochs: usize,
    pub videos_per_epoch: usize,
    pub seed: u64,
    pub distribution_style: DistStyle,
    pub penalty_weight: f64,
    /// Keep normalization statistics fixed during sequence-level training.
    pub freeze_norm_stats: bool,
    /// Global-norm gradient clip.
    pub grad_clip: f64,
    /// Anchor perturbation for frame-level training.
    pub perturb: PerturbConfig,
    /// Extra checkpoint cadence in steps (0 = epoch boundaries only).
    pub checkpoint_every: usize,
    /// Fixed samples used for per-epoch validation during pre-training.
    pub val_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t: 24,
            k: 8,
            max_interval: 10,
            lambda_l1: 0.33,
            lambda_giou: 0.13,
            lr_start: 1e-4,
            lr_end: 1e-5,
            lr_hold_epochs: 0,
            epochs: 5,
            videos_per_epoch: 320,
            seed: 0,
            distribution_style: DistStyle::LogitSoftmax,
            penalty_weight: 0.3,
            freeze_norm_stats: true,
            grad_clip: 10.0,
            perturb: PerturbConfig::default(),
            checkpoint_every: 0,
            val_samples: 32,
        }
    }
}

impl TrainConfig {
    pub fn steps_per_epoch(&self) -> u64 {
        ((self.videos_per_epoch / self.k).max(1)) as u64
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_per_epoch() * self.epochs as u64
    }

    /// Learning rate at a global step: constant through the hold epochs,
    /// then exponential decay reaching `lr_end` at the final epoch.
    pub fn learning_rate(&self, step: u64) -> f64 {
        let epoch = (step / self.steps_per_epoch()) as usize;
        if epoch < self.lr_hold_epochs {
            return self.lr_start;
        }
        if self.epochs <= self.lr_hold_epochs + 1 {
            return self.lr_start;
        }
        let decay_epochs = (self.epochs - self.lr_hold_epochs - 1) as f64;
        let progress = (epoch - self.lr_hold_epochs) as f64 / decay_epochs;
        self.lr_start * (self.lr_end / self.lr_start).powf(progress.min(1.0))
    }

    fn norm_mode(&self) -> NormMode {
        if self.freeze_norm_stats {
            NormMode::Frozen
        } else {
            NormMode::Train
        }
    }
}

/// Which loss drives sequence-level training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SltObjective {
    /// Self-critical policy gradient plus box terms (the full objective).
    Scst,
    /// Frame-level supervised loss evaluated on the tracker's own rollout
    /// crops (the sequence-level-sampling-only ablation).
    FrameLevel,
}

impl SltObjective {
    pub fn as_str(&self) -> &'static str {
        match self {
            SltObjective::Scst => "scst",
            SltObjective::FrameLevel => "frame-level",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scst" => Some(SltObjective::Scst),
            "frame-level" | "frame_level" => Some(SltObjective::FrameLevel),
            _ => None,
        }
    }
}

/// Per-step training statistics (one CSV row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    pub mean_r_sample: f64,
    pub mean_r_greedy: f64,
    pub mean_advantage: f64,
}

impl StepStats {
    pub const CSV_HEADER: &'static str = "step,loss,mean_r_sample,mean_r_greedy,mean_advantage";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.loss, self.mean_r_sample, self.mean_r_greedy, self.mean_advantage
        )
    }
}

/// The two rollouts of one episode under shared parameters.
#[derive(Debug, Clone)]
pub struct RolloutPair {
    pub sampled: Trajectory,
    pub greedy: Trajectory,
    pub advantage: f64,
}

/// Play an episode twice from the same parameters and initial box: once
/// sampling, once greedy. The greedy trajectory ignores the rng.
pub fn scst_rollout(
    model: &TrackerModel,
    episode: &Episode,
    rng: &mut impl Rng,
) -> Result<RolloutPair> {
    let greedy = run_episode(model, episode, ActionMode::Argmax, rng)?;
    let sampled = run_episode(model, episode, ActionMode::Sample, rng)?;
    let advantage = sampled.reward - greedy.reward;
    Ok(RolloutPair {
        sampled,
        greedy,
        advantage,
    })
}

/// The self-critical loss `L = -(r - r') Σ_t log p(n_t)`. The advantage is
/// a constant; only the log-probabilities carry gradient.
pub fn scst_loss(pair: &RolloutPair) -> f64 {
    -pair.advantage * pair.sampled.sum_logprob()
}

/// Positive-label mask for frame-level classification: candidate centers
/// inside the central half-size region of the ground-truth box.
fn positive_mask(
    map: &ScoreMap,
    gt_crop: &BBox,
    cfg: &crate::tracker::TrackerConfig,
) -> Vec<bool> {
    let region = gt_crop.inflate(0.5);
    let s = map.score_size;
    let mut mask = vec![false; s * s];
    for row in 0..s {
        for col in 0..s {
            let (cx, cy) = cfg.candidate_center(row, col);
            if cx >= region.x && cx <= region.right() && cy >= region.y && cy <= region.bottom() {
                mask[row * s + col] = true;
            }
        }
    }
    mask
}

fn bce(score: f64, label: f64) -> f64 {
    let s = score.clamp(crate::tracker::SCORE_CLAMP, 1.0 - crate::tracker::SCORE_CLAMP);
    -(label * s.ln() + (1.0 - label) * (1.0 - s).ln())
}

/// Normalized-coordinate L1 between two crop-space boxes in center form,
/// averaged over the four components.
fn box_l1(pred: &BBox, gt: &BBox, norm: f64) -> f64 {
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    ((pcx - gcx).abs() + (pcy - gcy).abs() + (pred.w - gt.w).abs() + (pred.h - gt.h).abs())
        / (4.0 * norm)
}

/// d(box_l1)/d(pred center form).
fn box_l1_grad(pred: &BBox, gt: &BBox, norm: f64) -> [f64; 4] {
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let s = 1.0 / (4.0 * norm);
    [
        (pcx - gcx).signum() * s,
        (pcy - gcy).signum() * s,
        (pred.w - gt.w).signum() * s,
        (pred.h - gt.h).signum() * s,
    ]
}

/// Per-candidate classification weights: the positive and negative
/// classes contribute equally (0.5 each) and the weights sum to 1, so a
/// uniform 0.5 score map still costs exactly ln 2. With no positives every
/// candidate carries 1/N.
fn class_weights(mask: &[bool]) -> Vec<f64> {
    let n = mask.len();
    let p = mask.iter().filter(|&&m| m).count();
    if p == 0 {
        return vec![1.0 / n as f64; n];
    }
    let (w_pos, w_neg) = (0.5 / p as f64, 0.5 / (n - p) as f64);
    mask.iter().map(|&m| if m { w_pos } else { w_neg }).collect()
}

/// Frame-level supervised loss on one score map: class-balanced binary
/// cross-entropy over all candidates (positives where the candidate center
/// falls inside the ground-truth center region) plus weighted L1 and GIoU
/// box terms at the positive locations. With no positive location the box
/// terms vanish and the classification term keeps all-negative labels.
pub fn frame_level_loss(
    map: &ScoreMap,
    gt_frame: &BBox,
    cfg: &crate::tracker::TrackerConfig,
    lambda_l1: f64,
    lambda_giou: f64,
) -> f64 {
    let gt_crop = map.crop.box_to_crop(gt_frame);
    let mask = positive_mask(map, &gt_crop, cfg);
    let weights = class_weights(&mask);
    let mut cls = 0.0;
    for ((s, &pos), w) in map.scores.iter().zip(&mask).zip(&weights) {
        cls += w * bce(*s, if pos { 1.0 } else { 0.0 });
    }

    let positives: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if positives.is_empty() {
        return cls;
    }
    let p = positives.len() as f64;
    let mut l1 = 0.0;
    let mut g = 0.0;
    for &i in &positives {
        l1 += box_l1(&map.boxes[i], &gt_crop, cfg.search_size as f64);
        g += 1.0 - giou(&map.boxes[i], &gt_crop);
    }
    cls + lambda_l1 * l1 / p + lambda_giou * g / p
}

/// The combined sequence-level loss: `scst_loss` plus L1/GIoU box terms at
/// the sampled indices, restricted to frames whose decoded box overlaps
/// ground truth, averaged over those frames.
pub fn combined_loss(
    pair: &RolloutPair,
    gt_boxes: &[BBox],
    score_maps: &[ScoreMap],
    lambda_l1: f64,
    lambda_giou: f64,
    search_size: usize,
) -> f64 {
    let mut total = scst_loss(pair);
    let mut l1 = 0.0;
    let mut g = 0.0;
    let mut qualifying = 0usize;
    for t in 0..gt_boxes.len() {
        if iou(&pair.sampled.boxes[t], &gt_boxes[t]) <= 0.0 {
            continue;
        }
        qualifying += 1;
        let map = &score_maps[t];
        let pred_crop = map.boxes[pair.sampled.indices[t]];
        let gt_crop = map.crop.box_to_crop(&gt_boxes[t]);
        l1 += box_l1(&pred_crop, &gt_crop, search_size as f64);
        g += 1.0 - giou(&pred_crop, &gt_crop);
    }
    if qualifying > 0 {
        total += lambda_l1 * l1 / qualifying as f64 + lambda_giou * g / qualifying as f64;
    }
    total
}

/// A frozen training sample for one frame-level pair.
#[derive(Debug, Clone)]
pub struct FrameLevelSample {
    pub template_frame: Image,
    pub template_box: BBox,
    pub search_frame: Image,
    pub spec: CropSpec,
    pub gt_frame: BBox,
}

/// A frozen training record of one episode rollout: search regions,
/// chosen candidates, box-loss gating, and the advantage, all treated as
/// constants by the differentiable pass.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub template_frame: Image,
    pub template_box: BBox,
    pub frames: Vec<Image>,
    pub specs: Vec<CropSpec>,
    pub indices: Vec<usize>,
    pub gt_frame: Vec<BBox>,
    /// Frames whose decoded sampled box overlaps ground truth.
    pub qualify: Vec<bool>,
    pub advantage: f64,
    pub objective: SltObjective,
}

/// d(loss)/d(cls logits) for the `-adv * log p(chosen)` term, chained
/// through sigmoid, the cosine-window blend, the score clamp, and the
/// distribution style.
fn logprob_grad_wrt_logits(
    scores: &[f64],
    chosen: usize,
    advantage: f64,
    style: DistStyle,
    penalty_weight: f64,
    score_size: usize,
) -> Vec<f64> {
    let x = apply_penalty(scores, score_size, penalty_weight);
    let dist = action_distribution(&x, style);
    let mut grad = vec![0.0; scores.len()];
    for j in 0..scores.len() {
        let indicator = if j == chosen { 1.0 } else { 0.0 };
        let d_lambda = -advantage * (indicator - dist.probs[j]);
        let in_clamp_range =
            x[j] > crate::tracker::SCORE_CLAMP && x[j] < 1.0 - crate::tracker::SCORE_CLAMP;
        let d_x = match style {
            DistStyle::LogitSoftmax => {
                if in_clamp_range {
                    d_lambda / (x[j] * (1.0 - x[j]))
                } else {
                    0.0
                }
            }
            DistStyle::Softmax => d_lambda,
        };
        let d_s = d_x * (1.0 - penalty_weight);
        grad[j] = d_s * scores[j] * (1.0 - scores[j]);
    }
    grad
}

struct StepLossGrad {
    loss: f64,
    g_cls_z: Array3<f64>,
    g_box: Array3<f64>,
}

/// Loss and head gradients for one step of an [`EpisodeRecord`].
fn episode_step_loss(
    map: &ScoreMap,
    record: &EpisodeRecord,
    t: usize,
    cfg: &TrainConfig,
    tracker_cfg: &crate::tracker::TrackerConfig,
    qualifying_total: usize,
) -> StepLossGrad {
    let s = map.score_size;
    let mut g_cls_z = Array3::zeros((1, s, s));
    let mut g_box = Array3::zeros((4, s, s));
    let mut loss = 0.0;
    let stride = tracker_cfg.stride as f64;

    // Chain a center-form box gradient onto the raw head outputs at one
    // grid cell: cx = grid + tx*stride, w = base*exp(tw) => dw/dtw = w.
    let add_box_grad =
        |g_box: &mut Array3<f64>, cell: usize, pred: &BBox, grad_center: [f64; 4]| {
            let (row, col) = (cell / s, cell % s);
            g_box[[0, row, col]] += grad_center[0] * stride;
            g_box[[1, row, col]] += grad_center[1] * stride;
            g_box[[2, row, col]] += grad_center[2] * pred.w;
            g_box[[3, row, col]] += grad_center[3] * pred.h;
        };

    match record.objective {
        SltObjective::Scst => {
            let chosen = record.indices[t];
            let x = apply_penalty(&map.scores, s, cfg.penalty_weight);
            let dist = action_distribution(&x, cfg.distribution_style);
            loss += -record.advantage * dist.probs[chosen].ln();
            let g = logprob_grad_wrt_logits(
                &map.scores,
                chosen,
                record.advantage,
                cfg.distribution_style,
                cfg.penalty_weight,
                s,
            );
            for (j, v) in g.into_iter().enumerate() {
                g_cls_z[[0, j / s, j % s]] = v;
            }

            if record.qualify[t] && qualifying_total > 0 {
                let q = qualifying_total as f64;
                let gt_crop = map.crop.box_to_crop(&record.gt_frame[t]);
                let pred = map.boxes[chosen];
                let norm = tracker_cfg.search_size as f64;
                loss += cfg.lambda_l1 * box_l1(&pred, &gt_crop, norm) / q
                    + cfg.lambda_giou * (1.0 - giou(&pred, &gt_crop)) / q;
                let l1g = box_l1_grad(&pred, &gt_crop, norm);
                let gg = giou_grad(&pred, &gt_crop);
                let mut grad_center = [0.0; 4];
                for c in 0..4 {
                    grad_center[c] = (cfg.lambda_l1 * l1g[c] - cfg.lambda_giou * gg[c]) / q;
                }
                add_box_grad(&mut g_box, chosen, &pred, grad_center);
            }
        }
        SltObjective::FrameLevel => {
            let gt_crop = map.crop.box_to_crop(&record.gt_frame[t]);
            let mask = positive_mask(map, &gt_crop, tracker_cfg);
            let weights = class_weights(&mask);
            for (j, ((&score, &pos), &w)) in
                map.scores.iter().zip(&mask).zip(&weights).enumerate()
            {
                let label = if pos { 1.0 } else { 0.0 };
                loss += w * bce(score, label);
                g_cls_z[[0, j / s, j % s]] = w * (score - label);
            }
            let positives: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            if !positives.is_empty() {
                let p = positives.len() as f64;
                let norm = tracker_cfg.search_size as f64;
                for &i in &positives {
                    let pred = map.boxes[i];
                    loss += cfg.lambda_l1 * box_l1(&pred, &gt_crop, norm) / p
                        + cfg.lambda_giou * (1.0 - giou(&pred, &gt_crop)) / p;
                    let l1g = box_l1_grad(&pred, &gt_crop, norm);
                    let gg = giou_grad(&pred, &gt_crop);
                    let mut grad_center = [0.0; 4];
                    for c in 0..4 {
                        grad_center[c] = (cfg.lambda_l1 * l1g[c] - cfg.lambda_giou * gg[c]) / p;
                    }
                    add_box_grad(&mut g_box, i, &pred, grad_center);
                }
            }
        }
    }

    StepLossGrad {
        loss,
        g_cls_z,
        g_box,
    }
}

/// Differentiable pass over a frozen episode record: recomputes every
/// forward under the current parameters and accumulates gradients. The
/// template branch receives the sum of all per-step gradients.
pub fn episode_loss_and_grad(
    model: &mut TrackerModel,
    record: &EpisodeRecord,
    cfg: &TrainConfig,
    grads: &mut ModelGrads,
) -> Result<f64> {
    let tracker_cfg = model.cfg;
    let mode = cfg.norm_mode();
    let (tfeat, tcache) =
        model.template_forward_train(&record.template_frame, &record.template_box, mode)?;
    let qualifying_total = record.qualify.iter().filter(|&&q| q).count();
    let mut g_tfeat = Array3::zeros(tfeat.raw_dim());
    let mut total = 0.0;
    for t in 0..record.frames.len() {
        let crop = crop_resize(&record.frames[t], &record.specs[t]);
        let (map, cache) = model.forward_search_train(
            &tfeat,
            &crop,
            record.specs[t],
            record.frames[t].w as f64,
            record.frames[t].h as f64,
            mode,
        )?;
        let step = episode_step_loss(&map, record, t, cfg, &tracker_cfg, qualifying_total);
        total += step.loss;
        g_tfeat += &model.backward_search(&cache, &step.g_cls_z, &step.g_box, grads);
    }
    model.backbone_backward(&tcache, &g_tfeat, grads);
    Ok(total)
}

/// Loss of a frozen record under the current parameters, without
/// gradients. This is the function finite differences probe.
pub fn episode_loss_value(
    model: &mut TrackerModel,
    record: &EpisodeRecord,
    cfg: &TrainConfig,
) -> Result<f64> {
    let tracker_cfg = model.cfg;
    let mode = cfg.norm_mode();
    let (tfeat, _) =
        model.template_forward_train(&record.template_frame, &record.template_box, mode)?;
    let qualifying_total = record.qualify.iter().filter(|&&q| q).count();
    let mut total = 0.0;
    for t in 0..record.frames.len() {
        let crop = crop_resize(&record.frames[t], &record.specs[t]);
        let (map, _) = model.forward_search_train(
            &tfeat,
            &crop,
            record.specs[t],
            record.frames[t].w as f64,
            record.frames[t].h as f64,
            mode,
        )?;
        total += episode_step_loss(&map, record, t, cfg, &tracker_cfg, qualifying_total).loss;
    }
    Ok(total)
}

/// Roll one episode and freeze it into a record. For
/// [`SltObjective::Scst`] the rollout samples actions and the record
/// carries the self-critical advantage against a greedy rollout; for
/// [`SltObjective::FrameLevel`] the rollout itself is greedy (the
/// sequence-level-sampling ablation) and the advantage is zero.
pub fn build_episode_record(
    model: &TrackerModel,
    episode: &Episode,
    objective: SltObjective,
    rng: &mut impl Rng,
) -> Result<(EpisodeRecord, RolloutPair)> {
    let greedy = run_episode(model, episode, ActionMode::Argmax, rng)?;

    let mode = match objective {
        SltObjective::Scst => ActionMode::Sample,
        SltObjective::FrameLevel => ActionMode::Argmax,
    };
    // Same stepping as `run_episode`, additionally capturing the crop
    // geometry for the differentiable pass.
    let template = model.init_template(&episode.template_frame, &episode.template_box)?;
    let mut state = TrackState::new(template, episode.template_box);
    let mut specs = Vec::with_capacity(episode.len());
    let mut indices = Vec::with_capacity(episode.len());
    let mut logprobs = Vec::with_capacity(episode.len());
    let mut boxes = Vec::with_capacity(episode.len());
    for frame in &episode.search_frames {
        let anchor = state.anchor();
        let spec = search_region(&anchor, model.cfg.search_factor, model.cfg.search_size);
        let crop = crop_resize(frame, &spec);
        let map = model.forward(&state.template, &crop, spec, frame.w as f64, frame.h as f64)?;
        let x = apply_penalty(&map.scores, map.score_size, model.cfg.penalty_weight);
        let dist = action_distribution(&x, model.cfg.distribution_style);
        let (chosen, logprob) = crate::tracker::select_action(&dist, mode, rng);
        let decoded = decode_box(&map, chosen);
        specs.push(spec);
        indices.push(chosen);
        logprobs.push(logprob);
        boxes.push(decoded);
        state.advance(decoded);
    }
    let reward = crate::metrics::episode_reward(&boxes, &episode.gt_boxes)?;
    let rolled = Trajectory {
        indices: indices.clone(),
        logprobs,
        boxes: boxes.clone(),
        reward,
        mode,
    };
    let advantage = match objective {
        SltObjective::Scst => reward - greedy.reward,
        SltObjective::FrameLevel => 0.0,
    };
    let qualify = boxes
        .iter()
        .zip(&episode.gt_boxes)
        .map(|(b, g)| iou(b, g) > 0.0)
        .collect();
    let record = EpisodeRecord {
        template_frame: episode.template_frame.clone(),
        template_box: episode.template_box,
        frames: episode.search_frames.clone(),
        specs,
        indices,
        gt_frame: episode.gt_boxes.clone(),
        qualify,
        advantage,
        objective,
    };
    Ok((
        record,
        RolloutPair {
            sampled: rolled,
            greedy,
            advantage,
        },
    ))
}

struct EpisodeOutcome {
    grads: ModelGrads,
    loss: f64,
    r_sample: f64,
    r_greedy: f64,
    advantage: f64,
}

fn train_one_episode(
    model: &TrackerModel,
    episode: &Episode,
    objective: SltObjective,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<EpisodeOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (record, pair) = build_episode_record(model, episode, objective, &mut rng)?;
    let mut local = model.clone();
    let mut grads = model.zero_grads();
    let loss = episode_loss_and_grad(&mut local, &record, cfg, &mut grads)?;
    Ok(EpisodeOutcome {
        grads,
        loss,
        r_sample: pair.sampled.reward,
        r_greedy: pair.greedy.reward,
        advantage: pair.advantage,
    })
}

/// One sequence-level optimizer step over a batch of episodes: rollout
/// pairs (concurrently when statistics are frozen), batch-mean gradients
/// reduced in episode order, clip, and one Adam update.
#[allow(clippy::too_many_arguments)]
pub fn slt_train_step(
    model: &mut TrackerModel,
    episodes: &[Episode],
    episode_seeds: &[u64],
    adam: &mut Adam,
    cfg: &TrainConfig,
    objective: SltObjective,
    lr: f64,
    step: u64,
) -> Result<StepStats> {
    assert_eq!(episodes.len(), episode_seeds.len());
    let k = episodes.len();

    let outcomes: Vec<Result<EpisodeOutcome>> = if cfg.freeze_norm_stats {
        episodes
            .par_iter()
            .zip(episode_seeds.par_iter())
            .map(|(ep, &seed)| train_one_episode(model, ep, objective, cfg, seed))
            .collect()
    } else {
        // Normalization statistics update serially, in episode order.
        episodes
            .iter()
            .zip(episode_seeds.iter())
            .map(|(ep, &seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (record, pair) = build_episode_record(model, ep, objective, &mut rng)?;
                let mut grads = model.zero_grads();
                let loss = episode_loss_and_grad(model, &record, cfg, &mut grads)?;
                Ok(EpisodeOutcome {
                    grads,
                    loss,
                    r_sample: pair.sampled.reward,
                    r_greedy: pair.greedy.reward,
                    advantage: pair.advantage,
                })
            })
            .collect()
    };

    let mut total = model.zero_grads();
    let (mut loss, mut r_s, mut r_g, mut adv) = (0.0, 0.0, 0.0, 0.0);
    for outcome in outcomes {
        let o = outcome?;
        total.add(&o.grads);
        loss += o.loss;
        r_s += o.r_sample;
        r_g += o.r_greedy;
        adv += o.advantage;
    }
    let kf = k as f64;
    total.scale(1.0 / kf);
    let stats = StepStats {
        step,
        loss: loss / kf,
        mean_r_sample: r_s / kf,
        mean_r_greedy: r_g / kf,
        mean_advantage: adv / kf,
    };
    if !stats.loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            details: format!(
                "mean_r_sample={} mean_r_greedy={} mean_advantage={}",
                stats.mean_r_sample, stats.mean_r_greedy, stats.mean_advantage
            ),
        });
    }

    let mut flat = total.to_flat();
    clip_global_norm(&mut flat, cfg.grad_clip);
    let mut params = model.params_flat();
    adam.step(&mut params, &flat, lr);
    model.set_params_flat(&params);
    Ok(stats)
}

/// Frame-level loss and gradients for one training pair.
pub fn frame_level_pair_step(
    model: &mut TrackerModel,
    sample: &FrameLevelSample,
    cfg: &TrainConfig,
    mode: NormMode,
    grads: &mut ModelGrads,
) -> Result<f64> {
    let record = EpisodeRecord {
        template_frame: sample.template_frame.clone(),
        template_box: sample.template_box,
        frames: vec![sample.search_frame.clone()],
        specs: vec![sample.spec],
        indices: vec![0],
        gt_frame: vec![sample.gt_frame],
        qualify: vec![false],
        advantage: 0.0,
        objective: SltObjective::FrameLevel,
    };
    let frame_cfg = TrainConfig {
        freeze_norm_stats: mode == NormMode::Frozen,
        ..*cfg
    };
    episode_loss_and_grad(model, &record, &frame_cfg, grads)
}

fn stage_tag(stage: Stage) -> u64 {
    match stage {
        Stage::Pretrain => 0x50524554,
        Stage::Slt => 0x534c5401,
    }
}

/// The rng stream for one training episode: derived from the run seed,
/// the stage, and the global episode counter, so resumed runs reproduce.
pub fn episode_seed(run_seed: u64, stage: Stage, episode_index: u64) -> u64 {
    derive_seed(derive_seed(run_seed, stage_tag(stage)), episode_index)
}

/// Training-run artifacts (config snapshot, statistics CSV, checkpoints).
pub struct RunDir {
    root: PathBuf,
    stats: std::fs::File,
}

impl RunDir {
    pub fn create(
        root: &Path,
        cfg: &TrainConfig,
        tracker_cfg: &crate::tracker::TrackerConfig,
    ) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        let mut snapshot = config_snapshot(cfg, tracker_cfg);
        snapshot.push('\n');
        std::fs::write(root.join("config.txt"), snapshot)?;
        let mut stats = std::fs::File::create(root.join("stats.csv"))?;
        writeln!(stats, "{}", StepStats::CSV_HEADER)?;
        Ok(Self {
            root: root.to_path_buf(),
            stats,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn append_stats(&mut self, stats: &StepStats) -> Result<()> {
        writeln!(self.stats, "{}", stats.csv_row())?;
        self.stats.flush()?;
        Ok(())
    }

    pub fn checkpoint_path(&self, step: u64) -> PathBuf {
        self.root.join(format!("step-{step:06}.ckpt"))
    }

    pub fn final_checkpoint_path(&self) -> PathBuf {
        self.root.join("final.ckpt")
    }
}

/// Flat key=value snapshot of the training and architecture configuration.
pub fn config_snapshot(cfg: &TrainConfig, tracker_cfg: &crate::tracker::TrackerConfig) -> String {
    let mut lines = vec![
        format!("t={}", cfg.t),
        format!("k={}", cfg.k),
        format!("max_interval={}", cfg.max_interval),
        format!("lambda_l1={}", cfg.lambda_l1),
        format!("lambda_giou={}", cfg.lambda_giou),
        format!("lr_start={}", cfg.lr_start),
        format!("lr_end={}", cfg.lr_end),
        format!("lr_hold_epochs={}", cfg.lr_hold_epochs),
        format!("epochs={}", cfg.epochs),
        format!("videos_per_epoch={}", cfg.videos_per_epoch),
        format!("seed={}", cfg.seed),
        format!("distribution_style={}", cfg.distribution_style.as_str()),
        format!("penalty_weight={}", cfg.penalty_weight),
        format!("freeze_norm_stats={}", cfg.freeze_norm_stats),
        format!("grad_clip={}", cfg.grad_clip),
        format!("perturb_max_shift_frac={}", cfg.perturb.max_shift_frac),
        format!("perturb_max_log_scale={}", cfg.perturb.max_log_scale),
        format!("checkpoint_every={}", cfg.checkpoint_every),
        format!("val_samples={}", cfg.val_samples),
        format!(
            "channels={},{},{}",
            tracker_cfg.channels[0], tracker_cfg.channels[1], tracker_cfg.channels[2]
        ),
        format!("head_channels={}", tracker_cfg.head_channels),
        format!("template_size={}", tracker_cfg.template_size),
        format!("search_size={}", tracker_cfg.search_size),
        format!("stride={}", tracker_cfg.stride),
        format!("template_factor={}", tracker_cfg.template_factor),
        format!("search_factor={}", tracker_cfg.search_factor),
    ];
    lines.sort();
    lines.join("\n")
}

fn save_training_state(
    path: &Path,
    model: &TrackerModel,
    stage: Stage,
    step: u64,
    adam: &Adam,
) -> Result<()> {
    let mut header = BTreeMap::new();
    header.insert("step".to_string(), step.to_string());
    header.insert("adam_t".to_string(), adam.t.to_string());
    let extra = vec![
        ("adam.m".to_string(), vec![adam.m.len()], adam.m.clone()),
        ("adam.v".to_string(), vec![adam.v.len()], adam.v.clone()),
    ];
    save_checkpoint(path, model, stage, &header, &extra)
}

/// Restore (model, optimizer, completed steps, stage) from a training
/// checkpoint. Checkpoints written for evaluation only (no optimizer
/// tensors) restore a fresh optimizer at step 0.
pub fn load_training_state(path: &Path) -> Result<(TrackerModel, Adam, u64, Stage)> {
    let ck = crate::tracker::load_checkpoint(path)?;
    let model = crate::tracker::model_from_checkpoint(&ck)?;
    let mut adam = Adam::new(model.num_params());
    if let Some((shape, m)) = ck.tensors.get("adam.m") {
        if shape[0] != adam.m.len() {
            return Err(Error::Checkpoint(format!(
                "adam.m has {} entries, model has {} parameters",
                shape[0],
                adam.m.len()
            )));
        }
        adam.m = m.clone();
        adam.v = ck.tensors["adam.v"].1.clone();
        adam.t = ck.header_u64("adam_t")?;
    }
    let step = ck.header_u64("step").unwrap_or(0);
    Ok((model, adam, step, ck.stage()?))
}

fn maybe_checkpoint(
    run_dir: &mut Option<RunDir>,
    model: &TrackerModel,
    stage: Stage,
    adam: &Adam,
    cfg: &TrainConfig,
    step: u64,
) -> Result<()> {
    if let Some(dir) = run_dir {
        let epoch_boundary = step.is_multiple_of(cfg.steps_per_epoch());
        let cadence =
            cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every as u64);
        if epoch_boundary || cadence {
            save_training_state(&dir.checkpoint_path(step), model, stage, step, adam)?;
        }
    }
    Ok(())
}

/// Sequence-level training from `start_step` (0 for a fresh run) to the
/// configured total. A run resumed from a step checkpoint with the same
/// seed and config continues the statistics stream exactly.
pub fn train_slt(
    model: &mut TrackerModel,
    adam: &mut Adam,
    start_step: u64,
    dataset: &Dataset,
    cfg: &TrainConfig,
    objective: SltObjective,
    run_dir: Option<&Path>,
) -> Result<Vec<StepStats>> {
    model.cfg.penalty_weight = cfg.penalty_weight;
    model.cfg.distribution_style = cfg.distribution_style;
    let mut dir = match run_dir {
        Some(root) => Some(RunDir::create(root, cfg, &model.cfg)?),
        None => None,
    };
    let mut all_stats = Vec::new();
    for step in start_step..cfg.total_steps() {
        let mut episodes = Vec::with_capacity(cfg.k);
        let mut seeds = Vec::with_capacity(cfg.k);
        for j in 0..cfg.k {
            let seed = episode_seed(cfg.seed, Stage::Slt, step * cfg.k as u64 + j as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            episodes.push(sample_episode(dataset, cfg.t, cfg.max_interval, &mut rng)?);
            // The rollout continues on a seed drawn from the same stream.
            seeds.push(rng.gen());
        }
        let lr = cfg.learning_rate(step);
        let stats = slt_train_step(model, &episodes, &seeds, adam, cfg, objective, lr, step)?;
        if let Some(d) = dir.as_mut() {
            d.append_stats(&stats)?;
        }
        all_stats.push(stats);
        maybe_checkpoint(&mut dir, model, Stage::Slt, adam, cfg, step + 1)?;
    }
    if let Some(d) = dir.as_mut() {
        save_training_state(
            &d.final_checkpoint_path(),
            model,
            Stage::Slt,
            cfg.total_steps(),
            adam,
        )?;
    }
    Ok(all_stats)
}

/// Per-epoch validation summary recorded during pre-training.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValStats {
    pub epoch: usize,
    pub val_loss: f64,
    pub val_ao: f64,
}

/// Validation on fixed seeded samples: mean frame-level loss over pairs
/// and mean argmax-rollout reward over short episodes.
pub fn validate(
    model: &TrackerModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<ValStats> {
    let mut loss_total = 0.0;
    let mut ao_total = 0.0;
    let eval_cfg = TrainConfig {
        freeze_norm_stats: true,
        ..*cfg
    };
    for i in 0..cfg.val_samples {
        let seed = derive_seed(derive_seed(cfg.seed, 0x56414c), i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = sample_frame_pair(dataset, &cfg.perturb, &mut rng)?;
        let record = EpisodeRecord {
            template_frame: pair.template_frame,
            template_box: pair.template_box,
            specs: vec![search_region(
                &pair.anchor_box,
                model.cfg.search_factor,
                model.cfg.search_size,
            )],
            frames: vec![pair.search_frame],
            indices: vec![0],
            gt_frame: vec![pair.gt_box],
            qualify: vec![false],
            advantage: 0.0,
            objective: SltObjective::FrameLevel,
        };
        let mut scratch = model.clone();
        loss_total += episode_loss_value(&mut scratch, &record, &eval_cfg)?;

        let t = cfg.t.clamp(1, 8);
        if let Ok(episode) = sample_episode(dataset, t, 1, &mut rng) {
            let traj = run_episode(model, &episode, ActionMode::Argmax, &mut rng)?;
            ao_total += traj.reward;
        }
    }
    let n = cfg.val_samples.max(1) as f64;
    Ok(ValStats {
        epoch,
        val_loss: loss_total / n,
        val_ao: ao_total / n,
    })
}

/// Frame-level pre-training: supervised localization on perturbed
/// template/search pairs. Normalization statistics always update here
/// (this is the stage that establishes them). Records per-epoch
/// validation loss and AO when a validation dataset is supplied.
pub fn pretrain_frame_level(
    model: &mut TrackerModel,
    adam: &mut Adam,
    start_step: u64,
    dataset: &Dataset,
    val_dataset: Option<&Dataset>,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
) -> Result<(Vec<StepStats>, Vec<ValStats>)> {
    model.cfg.penalty_weight = cfg.penalty_weight;
    model.cfg.distribution_style = cfg.distribution_style;
    let mut dir = match run_dir {
        Some(root) => Some(RunDir::create(root, cfg, &model.cfg)?),
        None => None,
    };
    let mut val_file = match (&dir, val_dataset) {
        (Some(d), Some(_)) => {
            let mut f = std::fs::File::create(d.root().join("val.csv"))?;
            writeln!(f, "epoch,val_loss,val_ao")?;
            Some(f)
        }
        _ => None,
    };

    let mut all_stats = Vec::new();
    let mut all_val = Vec::new();
    for step in start_step..cfg.total_steps() {
        let mut grads = model.zero_grads();
        let mut loss_total = 0.0;
        for j in 0..cfg.k {
            let seed = episode_seed(cfg.seed, Stage::Pretrain, step * cfg.k as u64 + j as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pair = sample_frame_pair(dataset, &cfg.perturb, &mut rng)?;
            let sample = FrameLevelSample {
                spec: search_region(
                    &pair.anchor_box,
                    model.cfg.search_factor,
                    model.cfg.search_size,
                ),
                template_frame: pair.template_frame,
                template_box: pair.template_box,
                search_frame: pair.search_frame,
                gt_frame: pair.gt_box,
            };
            loss_total += frame_level_pair_step(model, &sample, cfg, NormMode::Train, &mut grads)?;
        }
        let kf = cfg.k as f64;
        let loss = loss_total / kf;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                details: "frame-level loss".to_string(),
            });
        }
        let mut flat = grads.to_flat();
        for g in &mut flat {
            *g /= kf;
        }
        clip_global_norm(&mut flat, cfg.grad_clip);
        let mut params = model.params_flat();
        adam.step(&mut params, &flat, cfg.learning_rate(step));
        model.set_params_flat(&params);

        let stats = StepStats {
            step,
            loss,
            mean_r_sample: 0.0,
            mean_r_greedy: 0.0,
            mean_advantage: 0.0,
        };
        if let Some(d) = dir.as_mut() {
            d.append_stats(&stats)?;
        }
        all_stats.push(stats);

        let next = step + 1;
        if next % cfg.steps_per_epoch() == 0 {
            if let Some(val) = val_dataset {
                let epoch = (next / cfg.steps_per_epoch()) as usize;
                let v = validate(model, val, cfg, epoch)?;
                if let Some(f) = val_file.as_mut() {
                    writeln!(f, "{},{},{}", v.epoch, v.val_loss, v.val_ao)?;
                }
                all_val.push(v);
            }
        }
        maybe_checkpoint(&mut dir, model, Stage::Pretrain, adam, cfg, next)?;
    }
    if let Some(d) = dir.as_mut() {
        save_training_state(
            &d.final_checkpoint_path(),
            model,
            Stage::Pretrain,
            cfg.total_steps(),
            adam,
        )?;
    }
    Ok((all_stats, all_val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::{generate_synthetic_dataset, SyntheticSceneConfig};
    use crate::tracker::TrackerConfig;
    use approx::assert_abs_diff_eq;

    /// Small architecture for fast tests: 32/64 crops, 9x9 score map.
    fn small_tracker_cfg() -> TrackerConfig {
        TrackerConfig {
            channels: [4, 8, 8],
            head_channels: 8,
            template_size: 32,
            search_size: 64,
            ..Default::default()
        }
    }

    fn small_dataset(seed: u64, videos: usize) -> Dataset {
        generate_synthetic_dataset(
            &SyntheticSceneConfig {
                frame_size: 64,
                num_frames: 10,
                num_distractors: 1,
                occluder_rate: 0.0,
                seed,
                ..Default::default()
            },
            videos,
        )
    }

    fn small_train_cfg() -> TrainConfig {
        TrainConfig {
            t: 2,
            k: 2,
            max_interval: 2,
            epochs: 1,
            videos_per_epoch: 2,
            ..Default::default()
        }
    }

    fn make_record(seed: u64, objective: SltObjective) -> (TrackerModel, EpisodeRecord) {
        let model = TrackerModel::new(small_tracker_cfg(), seed);
        let ds = small_dataset(seed, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let episode = sample_episode(&ds, 3, 2, &mut rng).unwrap();
        let (record, _) = build_episode_record(&model, &episode, objective, &mut rng).unwrap();
        (model, record)
    }

    #[test]
    fn scst_loss_example() {
        let traj = |reward: f64, logprobs: Vec<f64>| Trajectory {
            indices: vec![0; logprobs.len()],
            boxes: vec![BBox::new(0.0, 0.0, 1.0, 1.0); logprobs.len()],
            logprobs,
            reward,
            mode: ActionMode::Sample,
        };
        let pair = RolloutPair {
            sampled: traj(0.8, vec![-1.2, -0.8]),
            greedy: traj(0.6, vec![0.0, 0.0]),
            advantage: 0.2,
        };
        assert_abs_diff_eq!(scst_loss(&pair), 0.4, epsilon = 1e-12);

        // Equal rewards: exactly zero loss.
        let pair_zero = RolloutPair {
            advantage: 0.0,
            ..pair
        };
        assert_eq!(scst_loss(&pair_zero), 0.0);
    }

    #[test]
    fn frame_level_loss_uniform_scores_is_ln2() {
        let model = TrackerModel::new(small_tracker_cfg(), 1);
        let s = model.cfg.score_size();
        let spec = CropSpec {
            center: (32.0, 32.0),
            side: 64.0,
            output_resolution: 64,
        };
        let map = ScoreMap {
            scores: vec![0.5; s * s],
            boxes: (0..s * s)
                .map(|n| model.cfg.decode_crop_box(n / s, n % s, [0.0; 4]))
                .collect(),
            crop: spec,
            score_size: s,
            frame_w: 64.0,
            frame_h: 64.0,
        };
        let gt = BBox::from_center(32.0, 32.0, 16.0, 16.0);
        // Classification term only: zero box weights.
        let loss = frame_level_loss(&map, &gt, &model.cfg, 0.0, 0.0);
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn frame_level_loss_vanishes_in_the_perfect_limit() {
        let model = TrackerModel::new(small_tracker_cfg(), 2);
        let s = model.cfg.score_size();
        let spec = CropSpec {
            center: (32.0, 32.0),
            side: 64.0,
            output_resolution: 64,
        };
        let gt = BBox::from_center(32.0, 32.0, 16.0, 16.0);
        let gt_crop = spec.box_to_crop(&gt);
        let region = gt_crop.inflate(0.5);
        let mut scores = Vec::new();
        let mut boxes = Vec::new();
        for row in 0..s {
            for col in 0..s {
                let (cx, cy) = model.cfg.candidate_center(row, col);
                let inside = cx >= region.x
                    && cx <= region.right()
                    && cy >= region.y
                    && cy <= region.bottom();
                scores.push(if inside { 1.0 - 1e-9 } else { 1e-9 });
                boxes.push(gt_crop);
            }
        }
        let map = ScoreMap {
            scores,
            boxes,
            crop: spec,
            score_size: s,
            frame_w: 64.0,
            frame_h: 64.0,
        };
        let loss = frame_level_loss(&map, &gt, &model.cfg, 0.33, 0.13);
        // The score clamp floors the classification term near 1e-6.
        assert!(loss < 1e-5, "loss {loss}");
    }

    #[test]
    fn combined_loss_reduces_to_scst_loss() {
        let (model, record) = make_record(5, SltObjective::Scst);
        let ds = small_dataset(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let episode = sample_episode(&ds, 3, 2, &mut rng).unwrap();
        let pair = scst_rollout(&model, &episode, &mut rng).unwrap();
        // Rebuild the sampled rollout's score maps.
        let template = model
            .init_template(&episode.template_frame, &episode.template_box)
            .unwrap();
        let mut maps = Vec::new();
        let mut state = TrackState::new(template, episode.template_box);
        for (t, frame) in episode.search_frames.iter().enumerate() {
            let anchor = state.anchor();
            let spec = search_region(&anchor, model.cfg.search_factor, model.cfg.search_size);
            let crop = crop_resize(frame, &spec);
            let map = model
                .forward(&state.template, &crop, spec, frame.w as f64, frame.h as f64)
                .unwrap();
            maps.push(map);
            state.advance(pair.sampled.boxes[t]);
        }
        let zero_w = combined_loss(&pair, &episode.gt_boxes, &maps, 0.0, 0.0, 64);
        assert_abs_diff_eq!(zero_w, scst_loss(&pair), epsilon = 1e-12);
        let with_box = combined_loss(&pair, &episode.gt_boxes, &maps, 0.33, 0.13, 64);
        assert!(with_box >= zero_w - 1e-12 || pair.advantage != 0.0);
        let _ = record;
    }

    #[test]
    fn record_rollout_matches_run_episode() {
        let model = TrackerModel::new(small_tracker_cfg(), 7);
        let ds = small_dataset(7, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let episode = sample_episode(&ds, 3, 2, &mut rng).unwrap();

        let mut rng_a = ChaCha8Rng::seed_from_u64(11);
        let (record, pair) =
            build_episode_record(&model, &episode, SltObjective::Scst, &mut rng_a).unwrap();
        // The greedy rollout consumes no randomness, so a fresh stream with
        // the same seed reproduces the sampled trajectory.
        let mut rng_b = ChaCha8Rng::seed_from_u64(11);
        let direct = run_episode(&model, &episode, ActionMode::Sample, &mut rng_b).unwrap();
        assert_eq!(pair.sampled.indices, direct.indices);
        assert_eq!(pair.sampled.boxes, direct.boxes);
        assert_eq!(record.indices, direct.indices);
        assert_eq!(pair.sampled.reward, direct.reward);
    }

    #[test]
    fn surrogate_loss_equals_recorded_logprob_sum() {
        // With zero box weights and frozen stats, the record's surrogate
        // loss must equal -advantage * (sum of recorded log-probs).
        let (model, record) = make_record(9, SltObjective::Scst);
        let cfg = TrainConfig {
            lambda_l1: 0.0,
            lambda_giou: 0.0,
            ..small_train_cfg()
        };
        let ds = small_dataset(9, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let episode = sample_episode(&ds, 3, 2, &mut rng).unwrap();
        let (rec, pair) =
            build_episode_record(&model, &episode, SltObjective::Scst, &mut rng).unwrap();
        let mut scratch = model.clone();
        let loss = episode_loss_value(&mut scratch, &rec, &cfg).unwrap();
        assert_abs_diff_eq!(
            loss,
            -pair.advantage * pair.sampled.sum_logprob(),
            epsilon = 1e-9
        );
        let _ = record;
    }

    #[test]
    fn zero_advantage_gives_exactly_zero_classification_gradient() {
        let (model, mut record) = make_record(13, SltObjective::Scst);
        record.advantage = 0.0;
        record.qualify = vec![false; record.qualify.len()];
        let mut scratch = model.clone();
        let mut grads = model.zero_grads();
        let cfg = small_train_cfg();
        let loss = episode_loss_and_grad(&mut scratch, &record, &cfg, &mut grads).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
    }

    fn check_grads_fd(objective: SltObjective, seed: u64, probes: usize) {
        let (model, mut record) = make_record(seed, objective);
        if objective == SltObjective::Scst && record.advantage == 0.0 {
            record.advantage = 0.37; // ensure a non-trivial surrogate
        }
        let cfg = TrainConfig {
            lambda_l1: 0.33,
            lambda_giou: 0.13,
            ..small_train_cfg()
        };
        let mut scratch = model.clone();
        let mut grads = model.zero_grads();
        episode_loss_and_grad(&mut scratch, &record, &cfg, &mut grads).unwrap();
        let flat_grads = grads.to_flat();
        let params = model.params_flat();

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
        let eps = 1e-5;
        let mut checked = 0;
        while checked < probes {
            let idx = rng.gen_range(0..params.len());
            if flat_grads[idx].abs() < 1e-10 {
                continue; // skip dead slots; relative error is meaningless
            }
            let mut perturbed = params.clone();
            perturbed[idx] = params[idx] + eps;
            let mut m = model.clone();
            m.set_params_flat(&perturbed);
            let hi = episode_loss_value(&mut m, &record, &cfg).unwrap();
            perturbed[idx] = params[idx] - eps;
            m.set_params_flat(&perturbed);
            let lo = episode_loss_value(&mut m, &record, &cfg).unwrap();
            let fd = (hi - lo) / (2.0 * eps);
            let rel = (flat_grads[idx] - fd).abs() / flat_grads[idx].abs().max(fd.abs()).max(1e-6);
            assert!(
                rel < 1e-4,
                "param {idx}: analytic {} vs fd {fd} (rel {rel})",
                flat_grads[idx]
            );
            checked += 1;
        }
    }

    #[test]
    fn scst_gradients_match_finite_differences() {
        check_grads_fd(SltObjective::Scst, 21, 6);
    }

    #[test]
    fn frame_level_gradients_match_finite_differences() {
        check_grads_fd(SltObjective::FrameLevel, 22, 6);
    }

    #[test]
    fn slt_resume_reproduces_statistics_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset(31, 3);
        let cfg = TrainConfig {
            epochs: 2,
            videos_per_epoch: 4,
            k: 2,
            t: 2,
            lr_start: 1e-3,
            lr_end: 1e-3,
            seed: 5,
            ..small_train_cfg()
        };
        // Full run.
        let mut model = TrackerModel::new(small_tracker_cfg(), 40);
        let mut adam = Adam::new(model.num_params());
        let full_dir = dir.path().join("full");
        let full_stats =
            train_slt(&mut model, &mut adam, 0, &ds, &cfg, SltObjective::Scst, Some(&full_dir))
                .unwrap();
        assert_eq!(full_stats.len(), 4);

        // Resume from the epoch-1 checkpoint (after step 2).
        let ckpt = full_dir.join("step-000002.ckpt");
        let (mut resumed, mut adam2, start, stage) = load_training_state(&ckpt).unwrap();
        assert_eq!(stage, Stage::Slt);
        assert_eq!(start, 2);
        let resume_dir = dir.path().join("resumed");
        let resumed_stats = train_slt(
            &mut resumed,
            &mut adam2,
            start,
            &ds,
            &cfg,
            SltObjective::Scst,
            Some(&resume_dir),
        )
        .unwrap();
        assert_eq!(resumed_stats.len(), 2);
        for (a, b) in full_stats[2..].iter().zip(&resumed_stats) {
            assert_eq!(a.csv_row(), b.csv_row());
        }
        assert_eq!(resumed.params_flat(), model.params_flat());
    }

    #[test]
    fn pretrain_runs_and_validates() {
        let ds = small_dataset(51, 3);
        let cfg = TrainConfig {
            epochs: 2,
            videos_per_epoch: 4,
            k: 2,
            lr_start: 1e-3,
            lr_end: 1e-3,
            val_samples: 2,
            ..small_train_cfg()
        };
        let mut model = TrackerModel::new(small_tracker_cfg(), 60);
        let mut adam = Adam::new(model.num_params());
        let before = model.params_flat();
        let (stats, val) =
            pretrain_frame_level(&mut model, &mut adam, 0, &ds, Some(&ds), &cfg, None).unwrap();
        assert_eq!(stats.len(), 4);
        assert_eq!(val.len(), 2);
        assert!(stats.iter().all(|s| s.loss.is_finite()));
        assert_ne!(before, model.params_flat());

        // Zero epochs: parameters unchanged.
        let zero_cfg = TrainConfig {
            epochs: 0,
            ..cfg
        };
        let before = model.params_flat();
        let (stats, _) =
            pretrain_frame_level(&mut model, &mut adam, 0, &ds, None, &zero_cfg, None).unwrap();
        assert!(stats.is_empty());
        assert_eq!(before, model.params_flat());
    }

    #[test]
    fn learning_rate_schedule_shape() {
        let cfg = TrainConfig {
            epochs: 5,
            videos_per_epoch: 8,
            k: 2,
            lr_start: 1e-3,
            lr_end: 1e-5,
            lr_hold_epochs: 2,
            ..Default::default()
        };
        let spe = cfg.steps_per_epoch();
        assert_eq!(cfg.learning_rate(0), 1e-3);
        assert_eq!(cfg.learning_rate(spe * 2 - 1), 1e-3);
        let last = cfg.learning_rate(spe * 5 - 1);
        assert_abs_diff_eq!(last, 1e-5, epsilon = 1e-12);
        // Monotone non-increasing.
        let mut prev = f64::INFINITY;
        for step in 0..spe * 5 {
            let lr = cfg.learning_rate(step);
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }
}

#[cfg(test)]
mod trend_tests {
    use super::*;
    use crate::episodes::{generate_synthetic_dataset, SyntheticSceneConfig};
    use crate::tracker::TrackerConfig;

    /// Smoke run over three seeds: the smoothed frame-level training loss
    /// trends downward on a fixed tiny dataset.
    #[test]
    fn pretrain_loss_trend_is_non_increasing() {
        let ds = generate_synthetic_dataset(
            &SyntheticSceneConfig {
                frame_size: 64,
                num_frames: 10,
                num_distractors: 0,
                occluder_rate: 0.0,
                seed: 42,
                ..Default::default()
            },
            3,
        );
        let small = TrackerConfig {
            channels: [4, 8, 8],
            head_channels: 8,
            template_size: 32,
            search_size: 64,
            ..Default::default()
        };
        for seed in [1u64, 2, 3] {
            let cfg = TrainConfig {
                epochs: 3,
                videos_per_epoch: 32,
                k: 4,
                lr_start: 2e-3,
                lr_end: 5e-4,
                seed,
                ..Default::default()
            };
            let mut model = TrackerModel::new(small, seed);
            let mut adam = Adam::new(model.num_params());
            let (stats, _) =
                pretrain_frame_level(&mut model, &mut adam, 0, &ds, None, &cfg, None).unwrap();
            let epoch_mean = |e: usize| {
                let spe = cfg.steps_per_epoch() as usize;
                stats[e * spe..(e + 1) * spe]
                    .iter()
                    .map(|s| s.loss)
                    .sum::<f64>()
                    / spe as f64
            };
            let (first, last) = (epoch_mean(0), epoch_mean(2));
            assert!(
                last < first,
                "seed {seed}: epoch-mean loss did not decrease ({first:.4} -> {last:.4})"
            );
        }
    }
}
