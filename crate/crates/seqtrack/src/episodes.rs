//! Video ingestion, a synthetic tracking-video generator, and the two
//! sampling regimes: sequence-level episodes with frame-interval
//! augmentation, and frame-level template/search pairs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{perturb, BBox, PerturbConfig};
use crate::img::Image;
use crate::{Error, Result};

/// Frame storage: synthetic videos stay in memory, disk-backed videos
/// decode on demand (safe under concurrent readers).
#[derive(Clone)]
enum FrameStore {
    Memory(Arc<Vec<Image>>),
    Disk(Arc<Vec<PathBuf>>),
}

/// An annotated single-object video: one box per frame.
#[derive(Clone)]
pub struct Video {
    pub id: String,
    pub boxes: Vec<BBox>,
    pub frame_w: usize,
    pub frame_h: usize,
    frames: FrameStore,
}

impl fmt::Debug for Video {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Video")
            .field("id", &self.id)
            .field("len", &self.len())
            .field("frame", &(self.frame_w, self.frame_h))
            .finish()
    }
}

impl Video {
    pub fn from_frames(id: impl Into<String>, frames: Vec<Image>, boxes: Vec<BBox>) -> Self {
        assert_eq!(frames.len(), boxes.len());
        let (frame_w, frame_h) = (frames[0].w, frames[0].h);
        Self {
            id: id.into(),
            boxes,
            frame_w,
            frame_h,
            frames: FrameStore::Memory(Arc::new(frames)),
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Decode or fetch frame `idx`.
    pub fn frame(&self, idx: usize) -> Result<Image> {
        match &self.frames {
            FrameStore::Memory(v) => Ok(v[idx].clone()),
            FrameStore::Disk(paths) => Image::load(&paths[idx]),
        }
    }
}

/// An immutable collection of videos.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub videos: Vec<Video>,
}

impl Dataset {
    pub fn new(videos: Vec<Video>) -> Self {
        Self { videos }
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Load a dataset laid out as `<root>/<seq_id>/{00000001.png|jpg…,
/// groundtruth.txt}` with one `x,y,w,h` annotation line per frame.
/// Frames decode lazily; boxes are parsed eagerly so layout errors surface
/// here with sequence id and line number.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mut seq_dirs: Vec<PathBuf> = Vec::new();
    if root.exists() {
        for entry in std::fs::read_dir(root)? {
            let path = entry?.path();
            if path.is_dir() {
                seq_dirs.push(path);
            }
        }
    }
    seq_dirs.sort();

    let mut videos = Vec::with_capacity(seq_dirs.len());
    for dir in seq_dirs {
        let id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ann = dir.join("groundtruth.txt");
        if !ann.exists() {
            return Err(Error::MissingAnnotation {
                sequence: id,
                path: ann,
            });
        }

        let mut image_paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                    .unwrap_or(false)
            })
            .collect();
        image_paths.sort();

        let text = std::fs::read_to_string(&ann)?;
        let mut boxes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            boxes.push(parse_annotation_line(&id, lineno + 1, line)?);
        }

        if boxes.len() != image_paths.len() {
            return Err(Error::AnnotationCountMismatch {
                sequence: id,
                images: image_paths.len(),
                lines: boxes.len(),
            });
        }

        let first = Image::load(&image_paths[0])?;
        videos.push(Video {
            id,
            boxes,
            frame_w: first.w,
            frame_h: first.h,
            frames: FrameStore::Disk(Arc::new(image_paths)),
        });
    }
    Ok(Dataset::new(videos))
}

fn parse_annotation_line(sequence: &str, line: usize, text: &str) -> Result<BBox> {
    let malformed = |reason: String| Error::MalformedAnnotation {
        sequence: sequence.to_string(),
        line,
        reason,
    };
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(malformed(format!("expected 4 fields, got {}", parts.len())));
    }
    let mut vals = [0.0f64; 4];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p.parse().map_err(|e| malformed(format!("`{p}`: {e}")))?;
    }
    if vals[2] < 0.0 || vals[3] < 0.0 {
        return Err(malformed(format!("negative size {},{}", vals[2], vals[3])));
    }
    Ok(BBox::new(vals[0], vals[1], vals[2], vals[3]))
}

/// Write a dataset in the same layout [`load_dataset`] reads. Frames are
/// written as PNG so a write/read round trip is bit-exact.
pub fn save_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    for video in &dataset.videos {
        let dir = root.join(&video.id);
        std::fs::create_dir_all(&dir)?;
        let mut ann = String::new();
        for (i, b) in video.boxes.iter().enumerate() {
            video.frame(i)?.save(&dir.join(format!("{:08}.png", i + 1)))?;
            ann.push_str(&format!("{},{},{},{}\n", b.x, b.y, b.w, b.h));
        }
        std::fs::write(dir.join("groundtruth.txt"), ann)?;
    }
    Ok(())
}

/// Shape/color parameters for the synthetic scene generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppearanceConfig {
    /// Target half-size range in pixels (drawn per video, per axis).
    pub size_range: (f64, f64),
    /// Channel-wise jitter applied to distractor colors relative to the
    /// target color (0 = identical appearance).
    pub distractor_color_jitter: f64,
    /// Per-pixel background noise amplitude.
    pub background_noise: f64,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        Self {
            size_range: (5.0, 9.0),
            distractor_color_jitter: 30.0,
            background_noise: 8.0,
        }
    }
}

/// Parameters of one synthetic tracking video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneConfig {
    pub frame_size: usize,
    pub num_frames: usize,
    pub num_distractors: usize,
    /// Probability per frame of starting an occlusion event while none is
    /// active. During an event the target is hidden but stays annotated.
    pub occluder_rate: f64,
    /// Per-frame target speed range in pixels.
    pub target_speed: (f64, f64),
    /// Per-frame log-scale drift bound.
    pub scale_drift: f64,
    pub appearance: AppearanceConfig,
    pub seed: u64,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        Self {
            frame_size: 96,
            num_frames: 48,
            num_distractors: 3,
            occluder_rate: 0.03,
            target_speed: (0.5, 2.5),
            scale_drift: 0.02,
            appearance: AppearanceConfig::default(),
            seed: 0,
        }
    }
}

struct Mover {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    rx: f64,
    ry: f64,
    color: [u8; 3],
}

impl Mover {
    fn bbox(&self) -> BBox {
        BBox::from_center(self.cx, self.cy, 2.0 * self.rx, 2.0 * self.ry)
    }

    fn step(&mut self, rng: &mut ChaCha8Rng, speed: (f64, f64), drift: f64, bound: f64) {
        // Heading drifts smoothly; speed stays inside the configured range.
        self.vx += rng.gen_range(-0.4..=0.4);
        self.vy += rng.gen_range(-0.4..=0.4);
        let mag = self.vx.hypot(self.vy).max(1e-9);
        let clamped = mag.clamp(speed.0, speed.1);
        self.vx *= clamped / mag;
        self.vy *= clamped / mag;

        if drift > 0.0 {
            self.rx = (self.rx * rng.gen_range(-drift..=drift).exp()).clamp(3.0, bound / 4.0);
            self.ry = (self.ry * rng.gen_range(-drift..=drift).exp()).clamp(3.0, bound / 4.0);
        }

        self.cx += self.vx;
        self.cy += self.vy;
        // Bounce so the shape stays fully inside the frame.
        let (lo_x, hi_x) = (self.rx + 1.0, bound - self.rx - 1.0);
        let (lo_y, hi_y) = (self.ry + 1.0, bound - self.ry - 1.0);
        if self.cx < lo_x || self.cx > hi_x {
            self.vx = -self.vx;
            self.cx = self.cx.clamp(lo_x, hi_x);
        }
        if self.cy < lo_y || self.cy > hi_y {
            self.vy = -self.vy;
            self.cy = self.cy.clamp(lo_y, hi_y);
        }
    }
}

fn draw_ellipse(img: &mut Image, m: &Mover) {
    let x0 = ((m.cx - m.rx).floor().max(0.0)) as usize;
    let x1 = ((m.cx + m.rx).ceil().min(img.w as f64 - 1.0)) as usize;
    let y0 = ((m.cy - m.ry).floor().max(0.0)) as usize;
    let y1 = ((m.cy + m.ry).ceil().min(img.h as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - m.cx) / m.rx;
            let dy = (y as f64 + 0.5 - m.cy) / m.ry;
            if dx * dx + dy * dy <= 1.0 {
                img.put(x, y, m.color);
            }
        }
    }
}

fn jitter_color(base: [u8; 3], amount: f64, rng: &mut ChaCha8Rng) -> [u8; 3] {
    base.map(|c| {
        let v = c as f64 + rng.gen_range(-amount..=amount);
        v.round().clamp(30.0, 255.0) as u8
    })
}

/// Deterministically render one synthetic video: a colored elliptical
/// target moving among distractors of similar appearance, with optional
/// occlusion events that hide the target while its box stays annotated.
pub fn generate_synthetic_video(cfg: &SyntheticSceneConfig) -> Video {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size = cfg.frame_size;
    let bound = size as f64;
    let app = cfg.appearance;

    // Saturated target color away from the gray background.
    let target_color: [u8; 3] = {
        let hi = rng.gen_range(0..3);
        let mut c = [0u8; 3];
        for (i, v) in c.iter_mut().enumerate() {
            *v = if i == hi {
                rng.gen_range(190..=255)
            } else {
                rng.gen_range(30..=110)
            };
        }
        c
    };
    let background: [u8; 3] = {
        let v = rng.gen_range(120..=160) as u8;
        [v, v, v]
    };

    let spawn = |rng: &mut ChaCha8Rng, color: [u8; 3]| {
        let rx = rng.gen_range(app.size_range.0..=app.size_range.1);
        let ry = rng.gen_range(app.size_range.0..=app.size_range.1);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = rng.gen_range(cfg.target_speed.0..=cfg.target_speed.1.max(cfg.target_speed.0));
        Mover {
            cx: rng.gen_range(bound * 0.2..bound * 0.8),
            cy: rng.gen_range(bound * 0.2..bound * 0.8),
            vx: angle.cos() * speed,
            vy: angle.sin() * speed,
            rx,
            ry,
            color,
        }
    };

    let mut target = spawn(&mut rng, target_color);
    let mut distractors: Vec<Mover> = (0..cfg.num_distractors)
        .map(|_| {
            let color = jitter_color(target_color, app.distractor_color_jitter, &mut rng);
            spawn(&mut rng, color)
        })
        .collect();

    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut boxes = Vec::with_capacity(cfg.num_frames);
    let mut occluded_left = 0usize;

    for t in 0..cfg.num_frames {
        if t > 0 {
            target.step(&mut rng, cfg.target_speed, cfg.scale_drift, bound);
            for d in &mut distractors {
                d.step(&mut rng, cfg.target_speed, cfg.scale_drift, bound);
            }
        }
        if occluded_left == 0 && cfg.occluder_rate > 0.0 && rng.gen::<f64>() < cfg.occluder_rate {
            occluded_left = rng.gen_range(3..=8);
        }

        let mut img = Image::filled(size, size, background);
        if app.background_noise > 0.0 {
            for px in img.data.chunks_exact_mut(3) {
                let n = rng.gen_range(-app.background_noise..=app.background_noise);
                for c in px.iter_mut() {
                    *c = (*c as f64 + n).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        for d in &distractors {
            draw_ellipse(&mut img, d);
        }
        let occluded = occluded_left > 0;
        if !occluded {
            draw_ellipse(&mut img, &target);
        } else {
            // Background-colored occluder swallows the target region.
            let occluder = Mover {
                rx: target.rx * 1.6,
                ry: target.ry * 1.6,
                color: background,
                ..target
            };
            draw_ellipse(&mut img, &occluder);
            occluded_left -= 1;
        }

        frames.push(img);
        boxes.push(target.bbox());
    }

    Video::from_frames(format!("synth_{:08}", cfg.seed), frames, boxes)
}

/// Render `count` videos whose per-video seeds derive from `cfg.seed`.
/// Ids are zero-padded indices so the on-disk order matches.
pub fn generate_synthetic_dataset(cfg: &SyntheticSceneConfig, count: usize) -> Dataset {
    let videos = (0..count)
        .map(|i| {
            let mut c = *cfg;
            c.seed = derive_seed(cfg.seed, i as u64);
            let mut video = generate_synthetic_video(&c);
            video.id = format!("synth_{i:06}");
            video
        })
        .collect();
    Dataset::new(videos)
}

/// splitmix64 mixing for stable per-item seed derivation.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One unit of sequence-level training: a template frame/box plus `T`
/// annotated search frames sampled at a constant stride.
#[derive(Debug, Clone)]
pub struct Episode {
    pub template_frame: Image,
    pub template_box: BBox,
    pub search_frames: Vec<Image>,
    pub gt_boxes: Vec<BBox>,
    pub interval: usize,
    pub source_id: String,
    pub start_index: usize,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.gt_boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt_boxes.is_empty()
    }
}

/// Sample an episode of length `t` with frame-interval augmentation: the
/// interval is drawn uniformly from `{1, …, min(max_interval,
/// ⌊(len−1)/t⌋)}` and held constant across the episode. The template is the
/// stride's first frame with its ground-truth box.
pub fn sample_episode(
    dataset: &Dataset,
    t: usize,
    max_interval: usize,
    rng: &mut impl Rng,
) -> Result<Episode> {
    assert!(t >= 1 && max_interval >= 1);
    let eligible: Vec<&Video> = dataset.videos.iter().filter(|v| v.len() > t).collect();
    if eligible.is_empty() {
        return Err(Error::NoEpisodeSource { t });
    }
    let video = eligible[rng.gen_range(0..eligible.len())];
    let interval_cap = max_interval.min((video.len() - 1) / t);
    let interval = rng.gen_range(1..=interval_cap);
    let start = rng.gen_range(0..=video.len() - 1 - t * interval);

    let template_frame = video.frame(start)?;
    let template_box = video.boxes[start];
    let mut search_frames = Vec::with_capacity(t);
    let mut gt_boxes = Vec::with_capacity(t);
    for step in 1..=t {
        let idx = start + step * interval;
        search_frames.push(video.frame(idx)?);
        gt_boxes.push(video.boxes[idx]);
    }
    Ok(Episode {
        template_frame,
        template_box,
        search_frames,
        gt_boxes,
        interval,
        source_id: video.id.clone(),
        start_index: start,
    })
}

/// A frame-level training sample: template and search frame from the same
/// video, with the search anchor faked as a perturbation of ground truth.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub template_frame: Image,
    pub template_box: BBox,
    pub search_frame: Image,
    pub gt_box: BBox,
    /// ρ(g_t): the stand-in for the previous prediction.
    pub anchor_box: BBox,
    pub source_id: String,
}

/// Sample a frame-level pair. Template and search indices are independent
/// uniform draws, so they may coincide.
pub fn sample_frame_pair(
    dataset: &Dataset,
    perturb_cfg: &PerturbConfig,
    rng: &mut impl Rng,
) -> Result<FramePair> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let video = &dataset.videos[rng.gen_range(0..dataset.len())];
    let ti = rng.gen_range(0..video.len());
    let si = rng.gen_range(0..video.len());
    let gt_box = video.boxes[si];
    let anchor_box = perturb(&gt_box, perturb_cfg, rng);
    Ok(FramePair {
        template_frame: video.frame(ti)?,
        template_box: video.boxes[ti],
        search_frame: video.frame(si)?,
        gt_box,
        anchor_box,
        source_id: video.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn tiny_cfg(seed: u64) -> SyntheticSceneConfig {
        SyntheticSceneConfig {
            frame_size: 48,
            num_frames: 12,
            num_distractors: 2,
            occluder_rate: 0.05,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_synthetic_video(&tiny_cfg(9));
        let b = generate_synthetic_video(&tiny_cfg(9));
        assert_eq!(a.boxes, b.boxes);
        for i in 0..a.len() {
            assert_eq!(a.frame(i).unwrap(), b.frame(i).unwrap());
        }
    }

    #[test]
    fn target_visible_without_occluders_or_distractors() {
        let cfg = SyntheticSceneConfig {
            occluder_rate: 0.0,
            num_distractors: 0,
            appearance: AppearanceConfig {
                background_noise: 0.0,
                ..Default::default()
            },
            ..tiny_cfg(4)
        };
        let v = generate_synthetic_video(&cfg);
        for i in 0..v.len() {
            let frame = v.frame(i).unwrap();
            let b = v.boxes[i];
            let (cx, cy) = b.center();
            let px = frame.get(cx as usize, cy as usize);
            // The box center is inside the ellipse, so a saturated channel
            // must be present (background is gray).
            assert!(px.iter().any(|&c| c >= 190), "frame {i}: {px:?}");
        }
    }

    #[test]
    fn target_speed_bounds_hold() {
        let cfg = SyntheticSceneConfig {
            target_speed: (0.5, 2.0),
            scale_drift: 0.0,
            ..tiny_cfg(13)
        };
        let v = generate_synthetic_video(&cfg);
        for w in v.boxes.windows(2) {
            let (ax, ay) = w[0].center();
            let (bx, by) = w[1].center();
            // Bounces can shorten a step but never lengthen it.
            assert!((bx - ax).hypot(by - ay) <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn boxes_stay_inside_the_frame() {
        for seed in 0..5 {
            let v = generate_synthetic_video(&tiny_cfg(seed));
            for b in &v.boxes {
                assert!(b.x >= 0.0 && b.y >= 0.0);
                assert!(b.right() <= v.frame_w as f64 + 1e-9);
                assert!(b.bottom() <= v.frame_h as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(&tiny_cfg(21), 2);
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (orig, loaded) in ds.videos.iter().zip(&back.videos) {
            assert_eq!(orig.id, loaded.id);
            assert_eq!(orig.boxes, loaded.boxes);
            for i in 0..orig.len() {
                assert_eq!(orig.frame(i).unwrap(), loaded.frame(i).unwrap());
            }
        }
    }

    #[test]
    fn loader_reports_missing_and_mismatched_annotations() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).unwrap().is_empty());

        let seq = dir.path().join("seq01");
        std::fs::create_dir_all(&seq).unwrap();
        Image::filled(8, 8, [1, 2, 3])
            .save(&seq.join("00000001.png"))
            .unwrap();
        match load_dataset(dir.path()) {
            Err(Error::MissingAnnotation { sequence, .. }) => assert_eq!(sequence, "seq01"),
            other => panic!("expected missing annotation, got {other:?}"),
        }

        std::fs::write(seq.join("groundtruth.txt"), "1,2,3,4\n5,6,7,8\n").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::AnnotationCountMismatch {
                sequence,
                images,
                lines,
            }) => {
                assert_eq!(sequence, "seq01");
                assert_eq!((images, lines), (1, 2));
            }
            other => panic!("expected count mismatch, got {other:?}"),
        }

        std::fs::write(seq.join("groundtruth.txt"), "1,2,nope,4\n").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::MalformedAnnotation { sequence, line, .. }) => {
                assert_eq!(sequence, "seq01");
                assert_eq!(line, 1);
            }
            other => panic!("expected malformed annotation, got {other:?}"),
        }
    }

    #[test]
    fn episode_indices_trace_back_to_strides() {
        let ds = generate_synthetic_dataset(&tiny_cfg(3), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ep = sample_episode(&ds, 3, 4, &mut rng).unwrap();
            let video = ds.videos.iter().find(|v| v.id == ep.source_id).unwrap();
            assert_eq!(ep.template_box, video.boxes[ep.start_index]);
            for (step, gt) in ep.gt_boxes.iter().enumerate() {
                assert_eq!(*gt, video.boxes[ep.start_index + (step + 1) * ep.interval]);
            }
        }
    }

    #[test]
    fn max_interval_one_gives_consecutive_frames() {
        let ds = generate_synthetic_dataset(&tiny_cfg(3), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let ep = sample_episode(&ds, 4, 1, &mut rng).unwrap();
            assert_eq!(ep.interval, 1);
        }
    }

    #[test]
    fn interval_histogram_is_uniform() {
        // Video length 241, T=24, max 10 admits intervals 1..=10.
        let cfg = SyntheticSceneConfig {
            num_frames: 241,
            ..tiny_cfg(8)
        };
        let ds = Dataset::new(vec![generate_synthetic_video(&cfg)]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for _ in 0..n {
            let ep = sample_episode(&ds, 24, 10, &mut rng).unwrap();
            *counts.entry(ep.interval).or_default() += 1;
        }
        assert_eq!(counts.len(), 10);
        let expected = n as f64 / 10.0;
        let chi2: f64 = (1..=10)
            .map(|i| {
                let o = counts[&i] as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        // 9 degrees of freedom, 0.1% critical value 27.88; seed pinned.
        assert!(chi2 < 27.88, "chi-square {chi2}");
    }

    #[test]
    fn episode_sampling_errors_when_no_video_is_long_enough() {
        let cfg = SyntheticSceneConfig {
            num_frames: 4,
            ..tiny_cfg(1)
        };
        let ds = Dataset::new(vec![generate_synthetic_video(&cfg)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_episode(&ds, 10, 3, &mut rng),
            Err(Error::NoEpisodeSource { t: 10 })
        ));
        // T=1 still works: one template plus one search frame.
        let ep = sample_episode(&ds, 1, 3, &mut rng).unwrap();
        assert_eq!(ep.len(), 1);
    }

    #[test]
    fn frame_pair_zero_perturbation_keeps_anchor_on_gt() {
        let ds = generate_synthetic_dataset(&tiny_cfg(2), 2);
        let zero = PerturbConfig {
            max_shift_frac: 0.0,
            max_log_scale: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let p = sample_frame_pair(&ds, &zero, &mut rng).unwrap();
            assert_eq!(p.anchor_box, p.gt_box);
        }
        let cfg = PerturbConfig::default();
        for _ in 0..10_000 {
            let p = sample_frame_pair(&ds, &cfg, &mut rng).unwrap();
            let (ax, ay) = p.anchor_box.center();
            let (gx, gy) = p.gt_box.center();
            assert!((ax - gx).abs() <= cfg.max_shift_frac * p.gt_box.w + 1e-9);
            assert!((ay - gy).abs() <= cfg.max_shift_frac * p.gt_box.h + 1e-9);
        }
    }
}
