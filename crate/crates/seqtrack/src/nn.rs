//! Minimal f64 neural-network layers with hand-written backward passes:
//! strided convolution, spatial batch normalization with freezable running
//! statistics, ReLU, depthwise cross-correlation, and an Adam optimizer.
//!
//! The tracker's architecture is a fixed pipeline, so each layer exposes
//! `forward` returning a cache and `backward` consuming it; there is no
//! general autodiff graph. Everything is f64 so finite-difference checks
//! hold to tight tolerances.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;

/// Standard normal draw via Box-Muller (keeps rand's uniform core as the
/// only sampling dependency).
pub fn randn(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn conv_output_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// 2-D convolution over CHW tensors.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[out_c, in_c, k, k]`
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Conv2dGrad {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
}

pub struct Conv2dCache {
    x: Array3<f64>,
}

impl Conv2d {
    /// He-initialized weights, zero bias.
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (in_c * k * k) as f64).sqrt();
        let w = Array4::from_shape_simple_fn((out_c, in_c, k, k), || randn(rng) * std);
        Self {
            w,
            b: Array1::zeros(out_c),
            stride,
            pad,
        }
    }

    pub fn zero_grad(&self) -> Conv2dGrad {
        Conv2dGrad {
            w: Array4::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (in_c, h, w) = x.dim();
        let k = self.w.dim().2;
        let oh = conv_output_len(h, k, self.stride, self.pad);
        let ow = conv_output_len(w, k, self.stride, self.pad);
        let mut cols = Array2::zeros((in_c * k * k, oh * ow));
        for c in 0..in_c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..oh {
                        let sy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let sx = (ox * self.stride + kx) as isize - self.pad as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            cols[[row, oy * ow + ox]] = x[[c, sy as usize, sx as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, Conv2dCache) {
        let (out_c, _, k, _) = self.w.dim();
        let (_, h, w) = x.dim();
        let oh = conv_output_len(h, k, self.stride, self.pad);
        let ow = conv_output_len(w, k, self.stride, self.pad);
        let cols = self.im2col(x);
        let w2 = self
            .w
            .view()
            .into_shape_with_order((out_c, self.w.len() / out_c))
            .unwrap();
        let mut y2 = w2.dot(&cols);
        for (mut row, &bias) in y2.rows_mut().into_iter().zip(self.b.iter()) {
            row += bias;
        }
        let y = y2.into_shape_with_order((out_c, oh, ow)).unwrap();
        (y, Conv2dCache { x: x.clone() })
    }

    /// Returns the input gradient and accumulates parameter gradients.
    pub fn backward(
        &self,
        cache: &Conv2dCache,
        gy: &Array3<f64>,
        grad: &mut Conv2dGrad,
    ) -> Array3<f64> {
        let (out_c, in_c, k, _) = self.w.dim();
        let (_, h, w) = cache.x.dim();
        let (_, oh, ow) = gy.dim();
        let cols = self.im2col(&cache.x);
        let gy2 = gy
            .view()
            .into_shape_with_order((out_c, oh * ow))
            .unwrap();

        let gw = gy2.dot(&cols.t());
        grad.w += &gw.into_shape_with_order((out_c, in_c, k, k)).unwrap();
        grad.b += &gy2.sum_axis(ndarray::Axis(1));

        let w2 = self
            .w
            .view()
            .into_shape_with_order((out_c, self.w.len() / out_c))
            .unwrap();
        let gcols = w2.t().dot(&gy2);

        // col2im: scatter-add column gradients back onto the input.
        let mut gx = Array3::zeros((in_c, h, w));
        for c in 0..in_c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..oh {
                        let sy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let sx = (ox * self.stride + kx) as isize - self.pad as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            gx[[c, sy as usize, sx as usize]] += gcols[[row, oy * ow + ox]];
                        }
                    }
                }
            }
        }
        gx
    }
}

/// Per-channel normalization over the spatial extent with running
/// statistics. In `Train` mode batch statistics normalize and the running
/// estimates update; in `Frozen` mode the running estimates normalize and
/// nothing updates (gamma/beta still receive gradients).
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Frozen,
}

#[derive(Debug, Clone, Default)]
pub struct BatchNorm2dGrad {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

pub struct BatchNorm2dCache {
    xhat: Array3<f64>,
    inv_std: Array1<f64>,
    mode: NormMode,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn zero_grad(&self) -> BatchNorm2dGrad {
        BatchNorm2dGrad {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: NormMode) -> (Array3<f64>, BatchNorm2dCache) {
        let (c, h, w) = x.dim();
        let m = (h * w) as f64;
        let mut y = Array3::zeros((c, h, w));
        let mut xhat = Array3::zeros((c, h, w));
        let mut inv_std = Array1::zeros(c);
        for ch in 0..c {
            let plane = x.index_axis(ndarray::Axis(0), ch);
            let (mean, var) = match mode {
                NormMode::Train => {
                    let mean = plane.sum() / m;
                    let var = plane.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / m;
                    self.running_mean[ch] =
                        (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean;
                    self.running_var[ch] =
                        (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var;
                    (mean, var)
                }
                NormMode::Frozen => (self.running_mean[ch], self.running_var[ch]),
            };
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = inv;
            let (g, b) = (self.gamma[ch], self.beta[ch]);
            for yx in 0..h * w {
                let (yy, xx) = (yx / w, yx % w);
                let xh = (plane[[yy, xx]] - mean) * inv;
                xhat[[ch, yy, xx]] = xh;
                y[[ch, yy, xx]] = g * xh + b;
            }
        }
        (y, BatchNorm2dCache { xhat, inv_std, mode })
    }

    pub fn backward(
        &self,
        cache: &BatchNorm2dCache,
        gy: &Array3<f64>,
        grad: &mut BatchNorm2dGrad,
    ) -> Array3<f64> {
        let (c, h, w) = gy.dim();
        let m = (h * w) as f64;
        let mut gx = Array3::zeros((c, h, w));
        for ch in 0..c {
            let gyp = gy.index_axis(ndarray::Axis(0), ch);
            let xhp = cache.xhat.index_axis(ndarray::Axis(0), ch);
            let sum_gy = gyp.sum();
            let sum_gy_xhat = gyp.iter().zip(xhp.iter()).map(|(a, b)| a * b).sum::<f64>();
            grad.beta[ch] += sum_gy;
            grad.gamma[ch] += sum_gy_xhat;
            let scale = self.gamma[ch] * cache.inv_std[ch];
            match cache.mode {
                NormMode::Train => {
                    for yx in 0..h * w {
                        let (yy, xx) = (yx / w, yx % w);
                        gx[[ch, yy, xx]] = scale / m
                            * (m * gyp[[yy, xx]] - sum_gy - xhp[[yy, xx]] * sum_gy_xhat);
                    }
                }
                NormMode::Frozen => {
                    for yx in 0..h * w {
                        let (yy, xx) = (yx / w, yx % w);
                        gx[[ch, yy, xx]] = scale * gyp[[yy, xx]];
                    }
                }
            }
        }
        gx
    }
}

pub struct ReluCache {
    mask: Array3<f64>,
}

pub fn relu(x: &Array3<f64>) -> (Array3<f64>, ReluCache) {
    let y = x.mapv(|v| v.max(0.0));
    let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    (y, ReluCache { mask })
}

pub fn relu_backward(cache: &ReluCache, gy: &Array3<f64>) -> Array3<f64> {
    gy * &cache.mask
}

/// Depthwise cross-correlation of a search feature map with a template
/// kernel, with symmetric zero padding of the search map. Each channel is
/// correlated independently, so the output keeps the channel count.
pub fn xcorr_depthwise(search: &Array3<f64>, template: &Array3<f64>, pad: usize) -> Array3<f64> {
    let (c, hs, ws) = search.dim();
    let (ct, ht, wt) = template.dim();
    assert_eq!(c, ct);
    let oh = hs + 2 * pad + 1 - ht;
    let ow = ws + 2 * pad + 1 - wt;
    let mut out = Array3::zeros((c, oh, ow));
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ky in 0..ht {
                    let sy = (oy + ky) as isize - pad as isize;
                    if sy < 0 || sy >= hs as isize {
                        continue;
                    }
                    for kx in 0..wt {
                        let sx = (ox + kx) as isize - pad as isize;
                        if sx < 0 || sx >= ws as isize {
                            continue;
                        }
                        acc += search[[ch, sy as usize, sx as usize]] * template[[ch, ky, kx]];
                    }
                }
                out[[ch, oy, ox]] = acc;
            }
        }
    }
    out
}

/// Gradients of [`xcorr_depthwise`] with respect to both inputs.
pub fn xcorr_depthwise_backward(
    search: &Array3<f64>,
    template: &Array3<f64>,
    pad: usize,
    gy: &Array3<f64>,
) -> (Array3<f64>, Array3<f64>) {
    let (c, hs, ws) = search.dim();
    let (_, ht, wt) = template.dim();
    let (_, oh, ow) = gy.dim();
    let mut gs = Array3::zeros((c, hs, ws));
    let mut gt = Array3::zeros((c, ht, wt));
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gy[[ch, oy, ox]];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..ht {
                    let sy = (oy + ky) as isize - pad as isize;
                    if sy < 0 || sy >= hs as isize {
                        continue;
                    }
                    for kx in 0..wt {
                        let sx = (ox + kx) as isize - pad as isize;
                        if sx < 0 || sx >= ws as isize {
                            continue;
                        }
                        gs[[ch, sy as usize, sx as usize]] += g * template[[ch, ky, kx]];
                        gt[[ch, ky, kx]] += g * search[[ch, sy as usize, sx as usize]];
                    }
                }
            }
        }
    }
    (gs, gt)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Inverse sigmoid.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// First-order adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
