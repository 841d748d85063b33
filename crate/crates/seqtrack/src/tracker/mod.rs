//! A small differentiable Siamese-matching tracker with the stochastic
//! action interface sequence-level training needs: per-frame candidate
//! scores, a categorical action distribution over candidates, sampling and
//! argmax action modes, box decoding, and full-episode rollouts.
//!
//! The architecture is deliberately minimal: a three-stage convolutional
//! backbone (total stride 8) shared between template and search branches,
//! depthwise cross-correlation, a classification head emitting one score
//! per spatial location, and an anchor-free box head emitting four
//! regression values per location. Search crops are 128x128, template
//! crops 64x64, so the score map is 17x17 with N = 289 candidates.

mod checkpoint;

pub use checkpoint::{load_checkpoint, model_from_checkpoint, save_checkpoint, Checkpoint, Stage};

use ndarray::{Array1, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{clip_box, search_region, BBox, CropSpec};
use crate::episodes::Episode;
use crate::img::{crop_resize, to_tensor, Image};
use crate::metrics::episode_reward;
use crate::nn::{
    self, relu, relu_backward, xcorr_depthwise, xcorr_depthwise_backward, BatchNorm2d,
    BatchNorm2dCache, BatchNorm2dGrad, Conv2d, Conv2dCache, Conv2dGrad, NormMode, ReluCache,
};
use crate::{Error, Result};

/// Scores are clamped to `[EPS, 1-EPS]` before the inverse sigmoid.
pub const SCORE_CLAMP: f64 = 1e-6;

/// How candidate scores become a categorical action distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistStyle {
    /// `p(n) ∝ exp(logit(x_n))` for scores in (0, 1).
    LogitSoftmax,
    /// `p(n) ∝ exp(x_n)` directly on the scores.
    Softmax,
}

impl DistStyle {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistStyle::LogitSoftmax => "logit-softmax",
            DistStyle::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "logit-softmax" => Some(DistStyle::LogitSoftmax),
            "softmax" => Some(DistStyle::Softmax),
            _ => None,
        }
    }
}

/// Greedy or stochastic action selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionMode {
    Sample,
    Argmax,
}

/// Architecture and test-time hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Output channels of the three backbone stages.
    pub channels: [usize; 3],
    pub head_channels: usize,
    pub template_size: usize,
    pub search_size: usize,
    /// Total backbone stride (three stride-2 stages).
    pub stride: usize,
    pub template_factor: f64,
    pub search_factor: f64,
    /// Cosine-window blend weight in [0, 1).
    pub penalty_weight: f64,
    pub distribution_style: DistStyle,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            channels: [8, 16, 16],
            head_channels: 16,
            template_size: 64,
            search_size: 128,
            stride: 8,
            template_factor: 1.0,
            search_factor: 2.0,
            penalty_weight: 0.3,
            distribution_style: DistStyle::LogitSoftmax,
        }
    }
}

impl TrackerConfig {
    /// Score-map edge length: one candidate per stride cell, inclusive of
    /// both crop edges.
    pub fn score_size(&self) -> usize {
        self.search_size / self.stride + 1
    }

    /// Number of candidates N.
    pub fn num_candidates(&self) -> usize {
        self.score_size() * self.score_size()
    }

    /// Size prior for the anchor-free box head, in crop pixels. With the
    /// default search factor the target occupies about a quarter of the
    /// crop.
    pub fn box_base(&self) -> f64 {
        self.search_size as f64 / 4.0
    }

    /// Crop-coordinate center of candidate `(row, col)`.
    pub fn candidate_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            col as f64 * self.stride as f64,
            row as f64 * self.stride as f64,
        )
    }

    /// Decode the box head's `(tx, ty, tw, th)` at a grid cell into a
    /// crop-coordinate box: center offset in stride units, log-size
    /// relative to the prior.
    pub fn decode_crop_box(&self, row: usize, col: usize, p: [f64; 4]) -> BBox {
        let (gx, gy) = self.candidate_center(row, col);
        let cx = gx + p[0] * self.stride as f64;
        let cy = gy + p[1] * self.stride as f64;
        let w = self.box_base() * p[2].exp();
        let h = self.box_base() * p[3].exp();
        BBox::from_center(cx, cy, w, h)
    }
}

/// Per-frame tracker output: candidate scores plus per-candidate boxes in
/// crop coordinates, with the crop geometry needed to map back.
#[derive(Debug, Clone)]
pub struct ScoreMap {
    /// N post-sigmoid scores, row-major over the score grid.
    pub scores: Vec<f64>,
    /// N candidate boxes in crop coordinates.
    pub boxes: Vec<BBox>,
    pub crop: CropSpec,
    pub score_size: usize,
    pub frame_w: f64,
    pub frame_h: f64,
}

/// Categorical distribution over the N candidates.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    pub style: DistStyle,
}

/// Record of one episode rollout.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub indices: Vec<usize>,
    pub logprobs: Vec<f64>,
    pub boxes: Vec<BBox>,
    pub reward: f64,
    pub mode: ActionMode,
}

impl Trajectory {
    pub fn sum_logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }
}

/// The tracker: backbone, correlation stage, and the two heads.
#[derive(Debug, Clone)]
pub struct TrackerModel {
    pub cfg: TrackerConfig,
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub conv3: Conv2d,
    pub bn3: BatchNorm2d,
    /// Normalizes the correlation output's scale before the heads.
    pub bn_corr: BatchNorm2d,
    pub cls_hidden: Conv2d,
    pub cls_out: Conv2d,
    pub box_hidden: Conv2d,
    pub box_out: Conv2d,
}

/// Parameter gradients mirroring [`TrackerModel`]'s trainable tensors.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub conv1: Conv2dGrad,
    pub bn1: BatchNorm2dGrad,
    pub conv2: Conv2dGrad,
    pub bn2: BatchNorm2dGrad,
    pub conv3: Conv2dGrad,
    pub bn3: BatchNorm2dGrad,
    pub bn_corr: BatchNorm2dGrad,
    pub cls_hidden: Conv2dGrad,
    pub cls_out: Conv2dGrad,
    pub box_hidden: Conv2dGrad,
    pub box_out: Conv2dGrad,
}

impl ModelGrads {
    pub fn add(&mut self, other: &ModelGrads) {
        self.conv1.w += &other.conv1.w;
        self.conv1.b += &other.conv1.b;
        self.bn1.gamma += &other.bn1.gamma;
        self.bn1.beta += &other.bn1.beta;
        self.conv2.w += &other.conv2.w;
        self.conv2.b += &other.conv2.b;
        self.bn2.gamma += &other.bn2.gamma;
        self.bn2.beta += &other.bn2.beta;
        self.conv3.w += &other.conv3.w;
        self.conv3.b += &other.conv3.b;
        self.bn3.gamma += &other.bn3.gamma;
        self.bn3.beta += &other.bn3.beta;
        self.bn_corr.gamma += &other.bn_corr.gamma;
        self.bn_corr.beta += &other.bn_corr.beta;
        self.cls_hidden.w += &other.cls_hidden.w;
        self.cls_hidden.b += &other.cls_hidden.b;
        self.cls_out.w += &other.cls_out.w;
        self.cls_out.b += &other.cls_out.b;
        self.box_hidden.w += &other.box_hidden.w;
        self.box_hidden.b += &other.box_hidden.b;
        self.box_out.w += &other.box_out.w;
        self.box_out.b += &other.box_out.b;
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, slice) in self.flat_parts_mut() {
            for v in slice {
                *v *= factor;
            }
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, slice) in self.flat_parts() {
            out.extend_from_slice(slice);
        }
        out
    }

    /// Gradients of the classification head only (hidden + output stage).
    pub fn cls_head_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for name in ["cls_hidden.w", "cls_hidden.b", "cls_out.w", "cls_out.b"] {
            let part = self
                .flat_parts()
                .into_iter()
                .find(|(n, _)| *n == name)
                .unwrap();
            out.extend_from_slice(part.1);
        }
        out
    }

    fn flat_parts(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("conv1.w", self.conv1.w.as_slice().unwrap()),
            ("conv1.b", self.conv1.b.as_slice().unwrap()),
            ("bn1.gamma", self.bn1.gamma.as_slice().unwrap()),
            ("bn1.beta", self.bn1.beta.as_slice().unwrap()),
            ("conv2.w", self.conv2.w.as_slice().unwrap()),
            ("conv2.b", self.conv2.b.as_slice().unwrap()),
            ("bn2.gamma", self.bn2.gamma.as_slice().unwrap()),
            ("bn2.beta", self.bn2.beta.as_slice().unwrap()),
            ("conv3.w", self.conv3.w.as_slice().unwrap()),
            ("conv3.b", self.conv3.b.as_slice().unwrap()),
            ("bn3.gamma", self.bn3.gamma.as_slice().unwrap()),
            ("bn3.beta", self.bn3.beta.as_slice().unwrap()),
            ("bn_corr.gamma", self.bn_corr.gamma.as_slice().unwrap()),
            ("bn_corr.beta", self.bn_corr.beta.as_slice().unwrap()),
            ("cls_hidden.w", self.cls_hidden.w.as_slice().unwrap()),
            ("cls_hidden.b", self.cls_hidden.b.as_slice().unwrap()),
            ("cls_out.w", self.cls_out.w.as_slice().unwrap()),
            ("cls_out.b", self.cls_out.b.as_slice().unwrap()),
            ("box_hidden.w", self.box_hidden.w.as_slice().unwrap()),
            ("box_hidden.b", self.box_hidden.b.as_slice().unwrap()),
            ("box_out.w", self.box_out.w.as_slice().unwrap()),
            ("box_out.b", self.box_out.b.as_slice().unwrap()),
        ]
    }

    fn flat_parts_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("conv1.w", self.conv1.w.as_slice_mut().unwrap()),
            ("conv1.b", self.conv1.b.as_slice_mut().unwrap()),
            ("bn1.gamma", self.bn1.gamma.as_slice_mut().unwrap()),
            ("bn1.beta", self.bn1.beta.as_slice_mut().unwrap()),
            ("conv2.w", self.conv2.w.as_slice_mut().unwrap()),
            ("conv2.b", self.conv2.b.as_slice_mut().unwrap()),
            ("bn2.gamma", self.bn2.gamma.as_slice_mut().unwrap()),
            ("bn2.beta", self.bn2.beta.as_slice_mut().unwrap()),
            ("conv3.w", self.conv3.w.as_slice_mut().unwrap()),
            ("conv3.b", self.conv3.b.as_slice_mut().unwrap()),
            ("bn3.gamma", self.bn3.gamma.as_slice_mut().unwrap()),
            ("bn3.beta", self.bn3.beta.as_slice_mut().unwrap()),
            ("bn_corr.gamma", self.bn_corr.gamma.as_slice_mut().unwrap()),
            ("bn_corr.beta", self.bn_corr.beta.as_slice_mut().unwrap()),
            ("cls_hidden.w", self.cls_hidden.w.as_slice_mut().unwrap()),
            ("cls_hidden.b", self.cls_hidden.b.as_slice_mut().unwrap()),
            ("cls_out.w", self.cls_out.w.as_slice_mut().unwrap()),
            ("cls_out.b", self.cls_out.b.as_slice_mut().unwrap()),
            ("box_hidden.w", self.box_hidden.w.as_slice_mut().unwrap()),
            ("box_hidden.b", self.box_hidden.b.as_slice_mut().unwrap()),
            ("box_out.w", self.box_out.w.as_slice_mut().unwrap()),
            ("box_out.b", self.box_out.b.as_slice_mut().unwrap()),
        ]
    }
}

/// Cached template features from [`TrackerModel::init_template`].
#[derive(Debug, Clone)]
pub struct TemplateState {
    pub feat: Array3<f64>,
}

pub struct BackboneCache {
    c1: Conv2dCache,
    b1: BatchNorm2dCache,
    r1: ReluCache,
    c2: Conv2dCache,
    b2: BatchNorm2dCache,
    r2: ReluCache,
    c3: Conv2dCache,
    b3: BatchNorm2dCache,
    r3: ReluCache,
}

/// Everything needed to backpropagate one search-branch forward.
pub struct SearchCache {
    pub backbone: BackboneCache,
    /// Search features entering the correlation.
    pub search_feat: Array3<f64>,
    /// Template features entering the correlation.
    pub template_feat: Array3<f64>,
    corr: Array3<f64>,
    bn_corr: BatchNorm2dCache,
    cls_h: Conv2dCache,
    cls_r: ReluCache,
    cls_o: Conv2dCache,
    box_h: Conv2dCache,
    box_r: ReluCache,
    box_o: Conv2dCache,
    /// Raw classification logits `[1, S, S]`.
    pub cls_z: Array3<f64>,
    /// Raw box parameters `[4, S, S]`.
    pub box_params: Array3<f64>,
}

fn zero_weights(mut conv: Conv2d) -> Conv2d {
    conv.w.fill(0.0);
    conv
}

impl TrackerModel {
    pub fn new(cfg: TrackerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c1, c2, c3] = cfg.channels;
        let hc = cfg.head_channels;
        Self {
            cfg,
            conv1: Conv2d::new(3, c1, 3, 2, 1, &mut rng),
            bn1: BatchNorm2d::new(c1),
            conv2: Conv2d::new(c1, c2, 3, 2, 1, &mut rng),
            bn2: BatchNorm2d::new(c2),
            conv3: Conv2d::new(c2, c3, 3, 2, 1, &mut rng),
            bn3: BatchNorm2d::new(c3),
            bn_corr: BatchNorm2d::new(c3),
            // 3x3 hidden convs give the heads the local peak shape, which
            // carries the scale/offset signal the 1x1 view misses.
            cls_hidden: Conv2d::new(c3, hc, 3, 1, 1, &mut rng),
            cls_out: zero_weights(Conv2d::new(hc, 1, 1, 1, 0, &mut rng)),
            box_hidden: Conv2d::new(c3, hc, 3, 1, 1, &mut rng),
            box_out: zero_weights(Conv2d::new(hc, 4, 1, 1, 0, &mut rng)),
        }
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            conv1: self.conv1.zero_grad(),
            bn1: self.bn1.zero_grad(),
            conv2: self.conv2.zero_grad(),
            bn2: self.bn2.zero_grad(),
            conv3: self.conv3.zero_grad(),
            bn3: self.bn3.zero_grad(),
            bn_corr: self.bn_corr.zero_grad(),
            cls_hidden: self.cls_hidden.zero_grad(),
            cls_out: self.cls_out.zero_grad(),
            box_hidden: self.box_hidden.zero_grad(),
            box_out: self.box_out.zero_grad(),
        }
    }

    /// Trainable parameters as one flat vector (canonical order).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, slice) in self.param_parts() {
            out.extend_from_slice(slice);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (_, slice) in self.param_parts_mut() {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        }
        assert_eq!(offset, flat.len());
    }

    pub fn num_params(&self) -> usize {
        self.param_parts().iter().map(|(_, s)| s.len()).sum()
    }

    fn param_parts(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("conv1.w", self.conv1.w.as_slice().unwrap()),
            ("conv1.b", self.conv1.b.as_slice().unwrap()),
            ("bn1.gamma", self.bn1.gamma.as_slice().unwrap()),
            ("bn1.beta", self.bn1.beta.as_slice().unwrap()),
            ("conv2.w", self.conv2.w.as_slice().unwrap()),
            ("conv2.b", self.conv2.b.as_slice().unwrap()),
            ("bn2.gamma", self.bn2.gamma.as_slice().unwrap()),
            ("bn2.beta", self.bn2.beta.as_slice().unwrap()),
            ("conv3.w", self.conv3.w.as_slice().unwrap()),
            ("conv3.b", self.conv3.b.as_slice().unwrap()),
            ("bn3.gamma", self.bn3.gamma.as_slice().unwrap()),
            ("bn3.beta", self.bn3.beta.as_slice().unwrap()),
            ("bn_corr.gamma", self.bn_corr.gamma.as_slice().unwrap()),
            ("bn_corr.beta", self.bn_corr.beta.as_slice().unwrap()),
            ("cls_hidden.w", self.cls_hidden.w.as_slice().unwrap()),
            ("cls_hidden.b", self.cls_hidden.b.as_slice().unwrap()),
            ("cls_out.w", self.cls_out.w.as_slice().unwrap()),
            ("cls_out.b", self.cls_out.b.as_slice().unwrap()),
            ("box_hidden.w", self.box_hidden.w.as_slice().unwrap()),
            ("box_hidden.b", self.box_hidden.b.as_slice().unwrap()),
            ("box_out.w", self.box_out.w.as_slice().unwrap()),
            ("box_out.b", self.box_out.b.as_slice().unwrap()),
        ]
    }

    fn param_parts_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("conv1.w", self.conv1.w.as_slice_mut().unwrap()),
            ("conv1.b", self.conv1.b.as_slice_mut().unwrap()),
            ("bn1.gamma", self.bn1.gamma.as_slice_mut().unwrap()),
            ("bn1.beta", self.bn1.beta.as_slice_mut().unwrap()),
            ("conv2.w", self.conv2.w.as_slice_mut().unwrap()),
            ("conv2.b", self.conv2.b.as_slice_mut().unwrap()),
            ("bn2.gamma", self.bn2.gamma.as_slice_mut().unwrap()),
            ("bn2.beta", self.bn2.beta.as_slice_mut().unwrap()),
            ("conv3.w", self.conv3.w.as_slice_mut().unwrap()),
            ("conv3.b", self.conv3.b.as_slice_mut().unwrap()),
            ("bn3.gamma", self.bn3.gamma.as_slice_mut().unwrap()),
            ("bn3.beta", self.bn3.beta.as_slice_mut().unwrap()),
            ("bn_corr.gamma", self.bn_corr.gamma.as_slice_mut().unwrap()),
            ("bn_corr.beta", self.bn_corr.beta.as_slice_mut().unwrap()),
            ("cls_hidden.w", self.cls_hidden.w.as_slice_mut().unwrap()),
            ("cls_hidden.b", self.cls_hidden.b.as_slice_mut().unwrap()),
            ("cls_out.w", self.cls_out.w.as_slice_mut().unwrap()),
            ("cls_out.b", self.cls_out.b.as_slice_mut().unwrap()),
            ("box_hidden.w", self.box_hidden.w.as_slice_mut().unwrap()),
            ("box_hidden.b", self.box_hidden.b.as_slice_mut().unwrap()),
            ("box_out.w", self.box_out.w.as_slice_mut().unwrap()),
            ("box_out.b", self.box_out.b.as_slice_mut().unwrap()),
        ]
    }

    /// All tensors (trainable parameters plus normalization buffers), for
    /// checkpointing.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        let mut push = |name: &str, shape: Vec<usize>, data: Vec<f64>| {
            out.push((name.to_string(), shape, data));
        };
        let conv = |c: &Conv2d| {
            (
                c.w.shape().to_vec(),
                c.w.as_slice().unwrap().to_vec(),
                c.b.as_slice().unwrap().to_vec(),
            )
        };
        for (name, layer) in [
            ("conv1", &self.conv1),
            ("conv2", &self.conv2),
            ("conv3", &self.conv3),
            ("cls_hidden", &self.cls_hidden),
            ("cls_out", &self.cls_out),
            ("box_hidden", &self.box_hidden),
            ("box_out", &self.box_out),
        ] {
            let (wshape, w, b) = conv(layer);
            let blen = b.len();
            push(&format!("{name}.w"), wshape, w);
            push(&format!("{name}.b"), vec![blen], b);
        }
        for (name, bn) in [
            ("bn1", &self.bn1),
            ("bn2", &self.bn2),
            ("bn3", &self.bn3),
            ("bn_corr", &self.bn_corr),
        ] {
            let c = bn.gamma.len();
            push(&format!("{name}.gamma"), vec![c], bn.gamma.to_vec());
            push(&format!("{name}.beta"), vec![c], bn.beta.to_vec());
            push(
                &format!("{name}.running_mean"),
                vec![c],
                bn.running_mean.to_vec(),
            );
            push(
                &format!("{name}.running_var"),
                vec![c],
                bn.running_var.to_vec(),
            );
        }
        out
    }

    pub fn set_tensor(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let fail = || Error::Checkpoint(format!("unknown tensor `{name}`"));
        let assign_conv = |c: &mut Conv2d, field: &str, data: &[f64]| -> Result<()> {
            let slot: &mut [f64] = match field {
                "w" => c.w.as_slice_mut().unwrap(),
                "b" => c.b.as_slice_mut().unwrap(),
                _ => return Err(fail()),
            };
            if slot.len() != data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}`: expected {} values, got {}",
                    slot.len(),
                    data.len()
                )));
            }
            slot.copy_from_slice(data);
            Ok(())
        };
        let assign_bn = |bn: &mut BatchNorm2d, field: &str, data: &[f64]| -> Result<()> {
            let slot: &mut Array1<f64> = match field {
                "gamma" => &mut bn.gamma,
                "beta" => &mut bn.beta,
                "running_mean" => &mut bn.running_mean,
                "running_var" => &mut bn.running_var,
                _ => return Err(fail()),
            };
            if slot.len() != data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}`: expected {} values, got {}",
                    slot.len(),
                    data.len()
                )));
            }
            slot.as_slice_mut().unwrap().copy_from_slice(data);
            Ok(())
        };
        let (layer, field) = name.split_once('.').ok_or_else(fail)?;
        match layer {
            "conv1" => assign_conv(&mut self.conv1, field, data),
            "conv2" => assign_conv(&mut self.conv2, field, data),
            "conv3" => assign_conv(&mut self.conv3, field, data),
            "cls_hidden" => assign_conv(&mut self.cls_hidden, field, data),
            "cls_out" => assign_conv(&mut self.cls_out, field, data),
            "box_hidden" => assign_conv(&mut self.box_hidden, field, data),
            "box_out" => assign_conv(&mut self.box_out, field, data),
            "bn1" => assign_bn(&mut self.bn1, field, data),
            "bn2" => assign_bn(&mut self.bn2, field, data),
            "bn3" => assign_bn(&mut self.bn3, field, data),
            "bn_corr" => assign_bn(&mut self.bn_corr, field, data),
            _ => Err(fail()),
        }
    }

    fn backbone_forward(&mut self, x: &Array3<f64>, mode: NormMode) -> (Array3<f64>, BackboneCache) {
        let (y1, c1) = self.conv1.forward(x);
        let (y1n, b1) = self.bn1.forward(&y1, mode);
        let (y1r, r1) = relu(&y1n);
        let (y2, c2) = self.conv2.forward(&y1r);
        let (y2n, b2) = self.bn2.forward(&y2, mode);
        let (y2r, r2) = relu(&y2n);
        let (y3, c3) = self.conv3.forward(&y2r);
        let (y3n, b3) = self.bn3.forward(&y3, mode);
        let (y3r, r3) = relu(&y3n);
        (
            y3r,
            BackboneCache {
                c1,
                b1,
                r1,
                c2,
                b2,
                r2,
                c3,
                b3,
                r3,
            },
        )
    }

    /// Inference-path backbone: frozen statistics, no caches.
    fn backbone_infer(&self, x: &Array3<f64>) -> Array3<f64> {
        // Frozen mode never mutates, so a scratch clone of the norm layers
        // is cheap and keeps the signature immutable.
        let mut bn1 = self.bn1.clone();
        let mut bn2 = self.bn2.clone();
        let mut bn3 = self.bn3.clone();
        let (y1, _) = self.conv1.forward(x);
        let (y1n, _) = bn1.forward(&y1, NormMode::Frozen);
        let (y1r, _) = relu(&y1n);
        let (y2, _) = self.conv2.forward(&y1r);
        let (y2n, _) = bn2.forward(&y2, NormMode::Frozen);
        let (y2r, _) = relu(&y2n);
        let (y3, _) = self.conv3.forward(&y2r);
        let (y3n, _) = bn3.forward(&y3, NormMode::Frozen);
        let (y3r, _) = relu(&y3n);
        y3r
    }

    pub fn backbone_backward(
        &self,
        cache: &BackboneCache,
        gy: &Array3<f64>,
        grads: &mut ModelGrads,
    ) -> Array3<f64> {
        let g = relu_backward(&cache.r3, gy);
        let g = self.bn3.backward(&cache.b3, &g, &mut grads.bn3);
        let g = self.conv3.backward(&cache.c3, &g, &mut grads.conv3);
        let g = relu_backward(&cache.r2, &g);
        let g = self.bn2.backward(&cache.b2, &g, &mut grads.bn2);
        let g = self.conv2.backward(&cache.c2, &g, &mut grads.conv2);
        let g = relu_backward(&cache.r1, &g);
        let g = self.bn1.backward(&cache.b1, &g, &mut grads.bn1);
        self.conv1.backward(&cache.c1, &g, &mut grads.conv1)
    }

    fn xcorr_pad(&self) -> usize {
        // Output = search_feat + 2*pad - template_feat + 1 = score_size.
        let sf = self.cfg.search_size / self.cfg.stride;
        let tf = self.cfg.template_size / self.cfg.stride;
        (self.cfg.score_size() + tf - 1 - sf).div_ceil(2)
    }

    /// Cache template features for an episode. Deterministic given the
    /// parameters, frame, and box.
    pub fn init_template(&self, frame: &Image, b: &BBox) -> Result<TemplateState> {
        if b.area() <= 0.0 {
            return Err(Error::DegenerateBox);
        }
        let spec = search_region(b, self.cfg.template_factor, self.cfg.template_size);
        let crop = crop_resize(frame, &spec);
        let feat = self.backbone_infer(&to_tensor(&crop));
        Ok(TemplateState { feat })
    }

    /// Training-path template forward with caches; `mode` follows the
    /// stage's normalization policy.
    pub fn template_forward_train(
        &mut self,
        frame: &Image,
        b: &BBox,
        mode: NormMode,
    ) -> Result<(Array3<f64>, BackboneCache)> {
        if b.area() <= 0.0 {
            return Err(Error::DegenerateBox);
        }
        let spec = search_region(b, self.cfg.template_factor, self.cfg.template_size);
        let crop = crop_resize(frame, &spec);
        Ok(self.backbone_forward(&to_tensor(&crop), mode))
    }

    #[allow(clippy::type_complexity)]
    fn heads(
        &self,
        corr_norm: &Array3<f64>,
    ) -> (
        Array3<f64>,
        Conv2dCache,
        ReluCache,
        Conv2dCache,
        Array3<f64>,
        Conv2dCache,
        ReluCache,
        Conv2dCache,
    ) {
        let (ch, cls_h) = self.cls_hidden.forward(corr_norm);
        let (chr, cls_r) = relu(&ch);
        let (cls_z, cls_o) = self.cls_out.forward(&chr);
        let (bh, box_h) = self.box_hidden.forward(corr_norm);
        let (bhr, box_r) = relu(&bh);
        let (box_params, box_o) = self.box_out.forward(&bhr);
        (cls_z, cls_h, cls_r, cls_o, box_params, box_h, box_r, box_o)
    }

    fn score_map_from_heads(
        &self,
        cls_z: &Array3<f64>,
        box_params: &Array3<f64>,
        crop: CropSpec,
        frame_w: f64,
        frame_h: f64,
    ) -> ScoreMap {
        let s = self.cfg.score_size();
        let mut scores = Vec::with_capacity(s * s);
        let mut boxes = Vec::with_capacity(s * s);
        for row in 0..s {
            for col in 0..s {
                scores.push(nn::sigmoid(cls_z[[0, row, col]]));
                let p = [
                    box_params[[0, row, col]],
                    box_params[[1, row, col]],
                    box_params[[2, row, col]],
                    box_params[[3, row, col]],
                ];
                boxes.push(self.cfg.decode_crop_box(row, col, p));
            }
        }
        ScoreMap {
            scores,
            boxes,
            crop,
            score_size: s,
            frame_w,
            frame_h,
        }
    }

    /// Inference forward over a prepared search crop: N squashed scores
    /// and N candidate boxes.
    pub fn forward(
        &self,
        template: &TemplateState,
        search_crop: &Image,
        crop: CropSpec,
        frame_w: f64,
        frame_h: f64,
    ) -> Result<ScoreMap> {
        if search_crop.w != self.cfg.search_size || search_crop.h != self.cfg.search_size {
            return Err(Error::WrongResolution {
                expected: self.cfg.search_size,
                got: search_crop.w,
            });
        }
        let fs = self.backbone_infer(&to_tensor(search_crop));
        let corr = xcorr_depthwise(&fs, &template.feat, self.xcorr_pad());
        let mut bn = self.bn_corr.clone();
        let (corr_norm, _) = bn.forward(&corr, NormMode::Frozen);
        let (cls_z, _, _, _, box_params, _, _, _) = self.heads(&corr_norm);
        Ok(self.score_map_from_heads(&cls_z, &box_params, crop, frame_w, frame_h))
    }

    /// Training forward over a prepared search crop, keeping every cache
    /// needed by [`TrackerModel::backward_search`].
    pub fn forward_search_train(
        &mut self,
        template_feat: &Array3<f64>,
        search_crop: &Image,
        crop: CropSpec,
        frame_w: f64,
        frame_h: f64,
        mode: NormMode,
    ) -> Result<(ScoreMap, SearchCache)> {
        if search_crop.w != self.cfg.search_size || search_crop.h != self.cfg.search_size {
            return Err(Error::WrongResolution {
                expected: self.cfg.search_size,
                got: search_crop.w,
            });
        }
        let (fs, backbone) = self.backbone_forward(&to_tensor(search_crop), mode);
        let corr = xcorr_depthwise(&fs, template_feat, self.xcorr_pad());
        let (corr_norm, bn_corr) = self.bn_corr.forward(&corr, mode);
        let (cls_z, cls_h, cls_r, cls_o, box_params, box_h, box_r, box_o) = self.heads(&corr_norm);
        let map = self.score_map_from_heads(&cls_z, &box_params, crop, frame_w, frame_h);
        let cache = SearchCache {
            backbone,
            search_feat: fs,
            template_feat: template_feat.clone(),
            corr,
            bn_corr,
            cls_h,
            cls_r,
            cls_o,
            box_h,
            box_r,
            box_o,
            cls_z,
            box_params,
        };
        Ok((map, cache))
    }

    /// Backpropagate head gradients through one search forward. Returns
    /// the gradient with respect to the template features so the caller
    /// can accumulate it across an episode's steps.
    pub fn backward_search(
        &self,
        cache: &SearchCache,
        g_cls_z: &Array3<f64>,
        g_box_params: &Array3<f64>,
        grads: &mut ModelGrads,
    ) -> Array3<f64> {
        let g = self.cls_out.backward(&cache.cls_o, g_cls_z, &mut grads.cls_out);
        let g = relu_backward(&cache.cls_r, &g);
        let g_corr_cls = self
            .cls_hidden
            .backward(&cache.cls_h, &g, &mut grads.cls_hidden);

        let g = self
            .box_out
            .backward(&cache.box_o, g_box_params, &mut grads.box_out);
        let g = relu_backward(&cache.box_r, &g);
        let g_corr_box = self
            .box_hidden
            .backward(&cache.box_h, &g, &mut grads.box_hidden);

        let g_corr_norm = &g_corr_cls + &g_corr_box;
        let g_corr = self
            .bn_corr
            .backward(&cache.bn_corr, &g_corr_norm, &mut grads.bn_corr);
        let (g_search, g_template) = xcorr_depthwise_backward(
            &cache.search_feat,
            &cache.template_feat,
            self.xcorr_pad(),
            &g_corr,
        );
        self.backbone_backward(&cache.backbone, &g_search, grads);
        let _ = &cache.corr;
        g_template
    }
}

/// Blend candidate scores with a centered 2-D Hann window:
/// `x = (1-w)*score + w*hann`. Stays in (0, 1) for `w` in [0, 1).
pub fn apply_penalty(scores: &[f64], score_size: usize, weight: f64) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&weight));
    let window = hann2d(score_size);
    scores
        .iter()
        .zip(&window)
        .map(|(&s, &h)| (1.0 - weight) * s + weight * h)
        .collect()
}

/// Row-major 2-D Hann window with peak 1 at the grid center.
pub fn hann2d(size: usize) -> Vec<f64> {
    let hann1d: Vec<f64> = (0..size)
        .map(|i| {
            0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (size - 1) as f64).cos())
        })
        .collect();
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            out.push(hann1d[y] * hann1d[x]);
        }
    }
    out
}

/// Turn (penalized) scores into a categorical action distribution.
///
/// Logit-softmax clamps scores to `[1e-6, 1-1e-6]` before the inverse
/// sigmoid, so probabilities stay strictly positive and finite.
pub fn action_distribution(x: &[f64], style: DistStyle) -> ActionDistribution {
    let logits: Vec<f64> = match style {
        DistStyle::LogitSoftmax => x
            .iter()
            .map(|&v| nn::logit(v.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)))
            .collect(),
        DistStyle::Softmax => x.to_vec(),
    };
    ActionDistribution {
        probs: nn::softmax(&logits),
        style,
    }
}

/// Pick an action: `Sample` draws from the distribution, `Argmax` takes
/// the most probable index (ties break to the lowest index). Returns the
/// index and its log-probability.
pub fn select_action(
    dist: &ActionDistribution,
    mode: ActionMode,
    rng: &mut impl Rng,
) -> (usize, f64) {
    let idx = match mode {
        ActionMode::Argmax => argmax(&dist.probs),
        ActionMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = dist.probs.len() - 1;
            for (i, &p) in dist.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    (idx, dist.probs[idx].ln())
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Map a candidate of `map` into frame coordinates and clip to the frame.
pub fn decode_box(map: &ScoreMap, index: usize) -> BBox {
    let crop_box = map.boxes[index];
    let frame_box = map.crop.box_to_frame(&crop_box);
    clip_box(&frame_box, map.frame_w, map.frame_h)
}

/// Rolling tracker state: cached template plus the previous prediction.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub template: TemplateState,
    pub prev_box: BBox,
    last_valid: BBox,
}

/// Boxes thinner than this are treated as collapsed and recovered from.
const MIN_BOX_EDGE: f64 = 1e-3;

impl TrackState {
    pub fn new(template: TemplateState, initial_box: BBox) -> Self {
        Self {
            template,
            prev_box: initial_box,
            last_valid: initial_box,
        }
    }

    /// The box the next search region is built around. Collapsed
    /// predictions fall back to the last valid box inflated by 10%.
    pub fn anchor(&self) -> BBox {
        if self.prev_box.w < MIN_BOX_EDGE || self.prev_box.h < MIN_BOX_EDGE {
            self.last_valid.inflate(1.1)
        } else {
            self.prev_box
        }
    }

    pub fn advance(&mut self, prediction: BBox) {
        self.prev_box = prediction;
        if prediction.w >= MIN_BOX_EDGE && prediction.h >= MIN_BOX_EDGE {
            self.last_valid = prediction;
        }
    }
}

/// Output of one tracking step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub chosen: usize,
    pub logprob: f64,
    pub box_frame: BBox,
    pub score_map: ScoreMap,
    pub dist: ActionDistribution,
}

/// One online-tracking step: crop around the previous prediction, score,
/// penalize, select an action, decode, and advance the state.
pub fn track_step(
    model: &TrackerModel,
    state: &mut TrackState,
    frame: &Image,
    mode: ActionMode,
    rng: &mut impl Rng,
) -> Result<StepResult> {
    let anchor = state.anchor();
    let spec = search_region(&anchor, model.cfg.search_factor, model.cfg.search_size);
    let crop = crop_resize(frame, &spec);
    let map = model.forward(
        &state.template,
        &crop,
        spec,
        frame.w as f64,
        frame.h as f64,
    )?;
    let penalized = apply_penalty(&map.scores, map.score_size, model.cfg.penalty_weight);
    let dist = action_distribution(&penalized, model.cfg.distribution_style);
    let (chosen, logprob) = select_action(&dist, mode, rng);
    let box_frame = decode_box(&map, chosen);
    state.advance(box_frame);
    Ok(StepResult {
        chosen,
        logprob,
        box_frame,
        score_map: map,
        dist,
    })
}

/// Play one episode in the requested mode, starting from the template
/// frame's ground truth, and score the rollout with average overlap.
pub fn run_episode(
    model: &TrackerModel,
    episode: &Episode,
    mode: ActionMode,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let template = model.init_template(&episode.template_frame, &episode.template_box)?;
    let mut state = TrackState::new(template, episode.template_box);
    let mut indices = Vec::with_capacity(episode.len());
    let mut logprobs = Vec::with_capacity(episode.len());
    let mut boxes = Vec::with_capacity(episode.len());
    for frame in &episode.search_frames {
        let step = track_step(model, &mut state, frame, mode, rng)?;
        indices.push(step.chosen);
        logprobs.push(step.logprob);
        boxes.push(step.box_frame);
    }
    let reward = episode_reward(&boxes, &episode.gt_boxes)?;
    Ok(Trajectory {
        indices,
        logprobs,
        boxes,
        reward,
        mode,
    })
}
