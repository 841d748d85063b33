//! Exact bounding-box arithmetic: overlaps, distances, the frame-level
//! perturbation used to fake previous predictions, and search-region
//! geometry.
//!
//! Boxes are `(left, top, width, height)` in continuous pixel coordinates,
//! matching the on-disk annotation format of the dataset loader. Corner
//! forms are converted at the boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Axis-aligned box in frame pixel coordinates. `(x, y)` is the top-left
/// corner; `w` and `h` extend right and down and are never negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        debug_assert!(w >= 0.0 && h >= 0.0, "negative box size {w}x{h}");
        Self { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// True when the box has no positive area.
    pub fn is_degenerate(&self) -> bool {
        self.w <= 0.0 || self.h <= 0.0
    }

    /// Box scaled about its own center by `factor` per axis.
    pub fn inflate(&self, factor: f64) -> Self {
        let (cx, cy) = self.center();
        Self::from_center(cx, cy, self.w * factor, self.h * factor)
    }

    fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }

    // Area from corner differences, so identical boxes give exactly the
    // same value as their mutual intersection.
    fn corner_area(&self) -> f64 {
        (self.right() - self.x) * (self.bottom() - self.y)
    }
}

/// Intersection over union. Degenerate unions yield 0 by convention;
/// identical positive-area boxes give exactly 1.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.corner_area() + b.corner_area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `iou - |hull \ union| / |hull|`, in [-1, 1].
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.corner_area() + b.corner_area() - inter;
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    let hull_w = a.right().max(b.right()) - a.x.min(b.x);
    let hull_h = a.bottom().max(b.bottom()) - a.y.min(b.y);
    let hull = hull_w * hull_h;
    if hull <= 0.0 {
        iou
    } else {
        iou - (hull - union) / hull
    }
}

/// Gradient of `giou(a, b)` with respect to `a` in center form
/// `(cx, cy, w, h)`, holding `b` fixed. Piecewise-smooth; at the (measure
/// zero) kink sets one branch is chosen arbitrarily. Degenerate unions or
/// hulls yield a zero gradient.
pub fn giou_grad(a: &BBox, b: &BBox) -> [f64; 4] {
    let (ax0, ay0, ax1, ay1) = (a.x, a.y, a.right(), a.bottom());
    let (bx0, by0, bx1, by1) = (b.x, b.y, b.right(), b.bottom());

    let iw = ax1.min(bx1) - ax0.max(bx0);
    let ih = ay1.min(by1) - ay0.max(by0);
    let overlap = iw > 0.0 && ih > 0.0;
    let inter = if overlap { iw * ih } else { 0.0 };

    let (aw, ah) = (ax1 - ax0, ay1 - ay0);
    let area_a = aw * ah;
    let area_b = (bx1 - bx0) * (by1 - by0);
    let union = area_a + area_b - inter;

    let hw = ax1.max(bx1) - ax0.min(bx0);
    let hh = ay1.max(by1) - ay0.min(by0);
    let hull = hw * hh;
    if union <= 0.0 || hull <= 0.0 {
        return [0.0; 4];
    }

    // d(inter)/d(corner of a): only corners that attain the min/max move
    // the intersection.
    let (mut di_x0, mut di_x1, mut di_y0, mut di_y1) = (0.0, 0.0, 0.0, 0.0);
    if overlap {
        if ax0 > bx0 {
            di_x0 = -ih;
        }
        if ax1 < bx1 {
            di_x1 = ih;
        }
        if ay0 > by0 {
            di_y0 = -iw;
        }
        if ay1 < by1 {
            di_y1 = iw;
        }
    }
    // d(area_a)/d(corners).
    let (da_x0, da_x1, da_y0, da_y1) = (-ah, ah, -aw, aw);
    // d(hull)/d(corners).
    let dh_x0 = if ax0 < bx0 { -hh } else { 0.0 };
    let dh_x1 = if ax1 > bx1 { hh } else { 0.0 };
    let dh_y0 = if ay0 < by0 { -hw } else { 0.0 };
    let dh_y1 = if ay1 > by1 { hw } else { 0.0 };

    // giou = inter/union - 1 + union/hull.
    let per_corner = |di: f64, da: f64, dh: f64| {
        let du = da - di;
        let d_iou = (di * union - inter * du) / (union * union);
        let d_pen = (du * hull - union * dh) / (hull * hull);
        d_iou + d_pen
    };
    let g_x0 = per_corner(di_x0, da_x0, dh_x0);
    let g_x1 = per_corner(di_x1, da_x1, dh_x1);
    let g_y0 = per_corner(di_y0, da_y0, dh_y0);
    let g_y1 = per_corner(di_y1, da_y1, dh_y1);

    // Chain to center form: x0 = cx - w/2, x1 = cx + w/2.
    [
        g_x0 + g_x1,
        g_y0 + g_y1,
        0.5 * (g_x1 - g_x0),
        0.5 * (g_y1 - g_y0),
    ]
}

/// Euclidean distance between box centers, in pixels.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Intersection of `b` with the frame rectangle. A box that misses the
/// frame entirely collapses to a zero-size box at the nearest frame point.
pub fn clip_box(b: &BBox, frame_w: f64, frame_h: f64) -> BBox {
    let x0 = b.x.clamp(0.0, frame_w);
    let y0 = b.y.clamp(0.0, frame_h);
    let x1 = b.right().clamp(0.0, frame_w);
    let y1 = b.bottom().clamp(0.0, frame_h);
    BBox::from_corners(x0, y0, x1.max(x0), y1.max(y0))
}

/// Magnitudes of the random perturbation applied to ground-truth boxes
/// during frame-level training, standing in for the previous prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Center shift bound as a fraction of the box size, per axis.
    pub max_shift_frac: f64,
    /// Log-scale bound; each axis is scaled by `exp(U(-b, b))`.
    pub max_log_scale: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            max_shift_frac: 0.3,
            max_log_scale: 0.25,
        }
    }
}

/// Random perturbation of a ground-truth box: uniform center shift within
/// `±max_shift_frac·(w, h)`, then independent per-axis log-uniform scaling.
///
/// Draw order is fixed (dx, dy, sx, sy) so seeded streams reproduce.
pub fn perturb(g: &BBox, cfg: &PerturbConfig, rng: &mut impl Rng) -> BBox {
    let draw = |rng: &mut dyn rand::RngCore, b: f64| {
        if b == 0.0 {
            0.0
        } else {
            rng.gen_range(-b..=b)
        }
    };
    let dx = draw(rng, cfg.max_shift_frac * g.w);
    let dy = draw(rng, cfg.max_shift_frac * g.h);
    let sx = draw(rng, cfg.max_log_scale).exp();
    let sy = draw(rng, cfg.max_log_scale).exp();
    let (cx, cy) = g.center();
    BBox::from_center(cx + dx, cy + dy, g.w * sx, g.h * sy)
}

/// A square crop window in frame coordinates together with the resolution
/// it is resampled to. The frame→crop map is affine and invertible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    /// Crop center in frame coordinates.
    pub center: (f64, f64),
    /// Square crop edge length in frame pixels.
    pub side: f64,
    /// Output edge length in crop pixels.
    pub output_resolution: usize,
}

impl CropSpec {
    /// Crop pixels per frame pixel.
    pub fn scale(&self) -> f64 {
        self.output_resolution as f64 / self.side
    }

    pub fn frame_to_crop(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let s = self.scale();
        (
            (x - (self.center.0 - self.side / 2.0)) * s,
            (y - (self.center.1 - self.side / 2.0)) * s,
        )
    }

    pub fn crop_to_frame(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let s = self.scale();
        (
            x / s + (self.center.0 - self.side / 2.0),
            y / s + (self.center.1 - self.side / 2.0),
        )
    }

    pub fn box_to_crop(&self, b: &BBox) -> BBox {
        let (x, y) = self.frame_to_crop((b.x, b.y));
        let s = self.scale();
        BBox::new(x, y, b.w * s, b.h * s)
    }

    pub fn box_to_frame(&self, b: &BBox) -> BBox {
        let (x, y) = self.crop_to_frame((b.x, b.y));
        let s = self.scale();
        BBox::new(x, y, b.w / s, b.h / s)
    }
}

/// Square search window around the previous prediction: side
/// `context_factor * sqrt((w+p)(h+p))` with context padding `p = (w+h)/2`.
/// Resampling (including mean-color fill past the frame edge) happens in
/// [`crate::img::crop_resize`].
pub fn search_region(prev: &BBox, context_factor: f64, output_resolution: usize) -> CropSpec {
    debug_assert!(prev.area() > 0.0, "search region needs a positive-area box");
    let p = (prev.w + prev.h) / 2.0;
    let side = context_factor * ((prev.w + p) * (prev.h + p)).sqrt();
    CropSpec {
        center: prev.center(),
        side,
        output_resolution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Pixel-membership oracle: fraction of cell centers on a `step`-pitch
    /// grid that land in both boxes over those landing in either.
    fn raster_iou(a: &BBox, b: &BBox, step: f64) -> f64 {
        let x0 = a.x.min(b.x) - step;
        let y0 = a.y.min(b.y) - step;
        let x1 = a.right().max(b.right()) + step;
        let y1 = a.bottom().max(b.bottom()) + step;
        let inside = |bx: &BBox, x: f64, y: f64| {
            x >= bx.x && x < bx.right() && y >= bx.y && y < bx.bottom()
        };
        let (mut inter, mut union) = (0u64, 0u64);
        let nx = ((x1 - x0) / step).ceil() as u64;
        let ny = ((y1 - y0) / step).ceil() as u64;
        for iy in 0..ny {
            let y = y0 + (iy as f64 + 0.5) * step;
            for ix in 0..nx {
                let x = x0 + (ix as f64 + 0.5) * step;
                let ia = inside(a, x, y);
                let ib = inside(b, x, y);
                if ia && ib {
                    inter += 1;
                }
                if ia || ib {
                    union += 1;
                }
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    fn int_box(rng: &mut ChaCha8Rng) -> BBox {
        BBox::new(
            rng.gen_range(0..20) as f64,
            rng.gen_range(0..20) as f64,
            rng.gen_range(1..15) as f64,
            rng.gen_range(1..15) as f64,
        )
    }

    #[test]
    fn iou_identity_disjoint_and_quarter_overlap() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        let b = BBox::new(5.0, 5.0, 1.0, 1.0);
        assert_eq!(iou(&BBox::new(0.0, 0.0, 1.0, 1.0), &b), 0.0);
        // 2x2 boxes offset by (1,1): intersection 1, union 7.
        let c = BBox::new(1.0, 1.0, 2.0, 2.0);
        assert_abs_diff_eq!(iou(&a, &c), 1.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(raster_iou(&a, &c, 0.01), 1.0 / 7.0, epsilon = 1e-6);
    }

    #[test]
    fn iou_matches_raster_oracle_on_integer_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = int_box(&mut rng);
            let b = int_box(&mut rng);
            let v = iou(&a, &b);
            assert!((v - raster_iou(&a, &b, 1.0)).abs() <= 1e-2, "{a:?} {b:?}");
        }
        // Finer grid tightens the agreement.
        for _ in 0..10 {
            let a = int_box(&mut rng);
            let b = int_box(&mut rng);
            assert!((iou(&a, &b) - raster_iou(&a, &b, 0.01)).abs() <= 1e-6);
        }
    }

    #[test]
    fn giou_identity_diagonal_and_far_limit() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(giou(&a, &a), 1.0);
        // Touching unit boxes on a diagonal: iou 0, hull 4, union 2.
        let u = BBox::new(0.0, 0.0, 1.0, 1.0);
        let v = BBox::new(1.0, 1.0, 1.0, 1.0);
        assert_abs_diff_eq!(giou(&u, &v), -0.5, epsilon = 1e-12);
        let far = BBox::new(1e6, 0.0, 1.0, 1.0);
        assert!(giou(&u, &far) < -0.99);
    }

    #[test]
    fn giou_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let eps = 1e-6;
        for _ in 0..300 {
            let mut c = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.5..6.0),
                rng.gen_range(0.5..6.0),
            ];
            let b = BBox::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.5..6.0),
                rng.gen_range(0.5..6.0),
            );
            let a = BBox::from_center(c[0], c[1], c[2], c[3]);
            let grad = giou_grad(&a, &b);
            for i in 0..4 {
                let orig = c[i];
                c[i] = orig + eps;
                let hi = giou(&BBox::from_center(c[0], c[1], c[2], c[3]), &b);
                c[i] = orig - eps;
                let lo = giou(&BBox::from_center(c[0], c[1], c[2], c[3]), &b);
                c[i] = orig;
                let fd = (hi - lo) / (2.0 * eps);
                assert!(
                    (grad[i] - fd).abs() < 1e-5,
                    "component {i}: {} vs {fd} for {a:?} {b:?}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn center_distance_cases() {
        let a = BBox::new(3.0, 4.0, 2.0, 2.0);
        assert_eq!(center_distance(&a, &a), 0.0);
        let o = BBox::from_center(0.0, 0.0, 1.0, 1.0);
        let p = BBox::from_center(3.0, 4.0, 7.0, 1.0);
        assert_abs_diff_eq!(center_distance(&o, &p), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn perturb_zero_config_is_identity() {
        let g = BBox::new(10.0, 20.0, 30.0, 40.0);
        let cfg = PerturbConfig {
            max_shift_frac: 0.0,
            max_log_scale: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(perturb(&g, &cfg, &mut rng), g);
    }

    #[test]
    fn perturb_respects_bounds() {
        let g = BBox::new(10.0, 20.0, 30.0, 40.0);
        let cfg = PerturbConfig {
            max_shift_frac: 0.3,
            max_log_scale: 0.25,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (gcx, gcy) = g.center();
        for _ in 0..2000 {
            let b = perturb(&g, &cfg, &mut rng);
            let (cx, cy) = b.center();
            assert!((cx - gcx).abs() <= 0.3 * g.w + 1e-12);
            assert!((cy - gcy).abs() <= 0.3 * g.h + 1e-12);
            assert!((b.w / g.w).ln().abs() <= 0.25 + 1e-12);
            assert!((b.h / g.h).ln().abs() <= 0.25 + 1e-12);
        }
    }

    #[test]
    fn perturb_draws_are_uniform() {
        // KS test of the shift distribution against U(-0.3w, 0.3w).
        let g = BBox::new(0.0, 0.0, 10.0, 10.0);
        let cfg = PerturbConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| {
                let b = perturb(&g, &cfg, &mut rng);
                (b.center().0 - 5.0) / (0.3 * g.w) // normalized to [-1, 1]
            })
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let cdf = (x + 1.0) / 2.0;
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            d = d.max((cdf - emp_lo).abs()).max((emp_hi - cdf).abs());
        }
        // 0.1% critical value 1.95/sqrt(n); seed is pinned.
        assert!(d < 1.95 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn search_region_side_formula() {
        let prev = BBox::new(0.0, 0.0, 10.0, 10.0);
        let spec = search_region(&prev, 2.0, 128);
        assert_abs_diff_eq!(spec.side, 40.0, epsilon = 1e-12);
        assert_eq!(spec.center, (5.0, 5.0));
    }

    #[test]
    fn crop_round_trip_is_identity() {
        let spec = CropSpec {
            center: (33.3, 71.9),
            side: 57.0,
            output_resolution: 128,
        };
        for &(x, y) in &[(0.0, 0.0), (12.7, 99.1), (-4.0, 3.5)] {
            let (cx, cy) = spec.frame_to_crop((x, y));
            let (bx, by) = spec.crop_to_frame((cx, cy));
            assert_abs_diff_eq!(bx, x, epsilon = 1e-9);
            assert_abs_diff_eq!(by, y, epsilon = 1e-9);
        }
        let b = BBox::new(5.0, 6.0, 7.0, 8.0);
        let back = spec.box_to_frame(&spec.box_to_crop(&b));
        assert_abs_diff_eq!(back.x, b.x, epsilon = 1e-9);
        assert_abs_diff_eq!(back.w, b.w, epsilon = 1e-9);
    }

    #[test]
    fn clip_box_cases() {
        let inside = BBox::new(5.0, 5.0, 10.0, 10.0);
        assert_eq!(clip_box(&inside, 100.0, 100.0), inside);
        let spill = BBox::new(-5.0, -5.0, 10.0, 10.0);
        assert_eq!(clip_box(&spill, 100.0, 100.0), BBox::new(0.0, 0.0, 5.0, 5.0));
        let outside = BBox::new(200.0, 300.0, 10.0, 10.0);
        let clipped = clip_box(&outside, 100.0, 100.0);
        assert_eq!(clipped.area(), 0.0);
        assert_eq!((clipped.x, clipped.y), (100.0, 100.0));
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            ax in -10.0..10.0, ay in -10.0..10.0, aw in 0.0..10.0, ah in 0.0..10.0,
            bx in -10.0..10.0, by in -10.0..10.0, bw in 0.0..10.0, bh in 0.0..10.0,
        ) {
            let a = BBox::new(ax, ay, aw, ah);
            let b = BBox::new(bx, by, bw, bh);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert!(giou(&a, &b) <= v + 1e-12);
            prop_assert!(giou(&a, &b) >= -1.0 - 1e-12);
        }

        #[test]
        fn iou_is_one_iff_identical_positive(
            x in -10.0..10.0, y in -10.0..10.0, w in 0.1..10.0, h in 0.1..10.0,
            dx in -5.0..5.0f64,
        ) {
            let a = BBox::new(x, y, w, h);
            prop_assert_eq!(iou(&a, &a), 1.0);
            prop_assert_eq!(giou(&a, &a), 1.0);
            if dx.abs() > 1e-9 {
                let b = BBox::new(x + dx, y, w, h);
                prop_assert!(iou(&a, &b) < 1.0);
            }
        }

        #[test]
        fn center_distance_matches_coordinates(
            ax in -10.0..10.0, ay in -10.0..10.0, aw in 0.0..10.0, ah in 0.0..10.0,
            bx in -10.0..10.0, by in -10.0..10.0, bw in 0.0..10.0, bh in 0.0..10.0,
        ) {
            let a = BBox::new(ax, ay, aw, ah);
            let b = BBox::new(bx, by, bw, bh);
            let dx = (ax + aw / 2.0) - (bx + bw / 2.0);
            let dy = (ay + ah / 2.0) - (by + bh / 2.0);
            prop_assert!((center_distance(&a, &b) - dx.hypot(dy)).abs() < 1e-12);
        }
    }
}
