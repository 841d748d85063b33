//! One-pass evaluation, the low-frame-rate protocol, ablation
//! orchestration, frame-rate sweeps, and report emission.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod plot;

pub use manifest::RunManifest;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{center_distance, iou, BBox};
use crate::engine::{self, SltObjective, TrainConfig};
use crate::episodes::Dataset;
use crate::metrics::{EvalReport, SequenceMetrics};
use crate::nn::Adam;
use crate::tracker::{track_step, ActionMode, TrackState, TrackerModel};
use crate::{Error, Result};

/// One-pass-evaluation protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    /// Track every i-th frame only, skipping the rest.
    pub interval: usize,
    /// Success-plot grid size used for the report's AUC field.
    pub thresholds: usize,
    /// Center-error precision threshold in pixels.
    pub precision_threshold: f64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            interval: 1,
            thresholds: 101,
            precision_threshold: 20.0,
        }
    }
}

/// Per-sequence rollout output of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    /// Frame indices actually visited: 0, i, 2i, …
    pub tracked_indices: Vec<usize>,
    /// The initialization box followed by one prediction per tracked
    /// frame (mirrors the dump-file layout).
    pub boxes: Vec<BBox>,
    /// Per-evaluated-frame overlaps (excludes the init frame).
    pub overlaps: Vec<f64>,
    pub metrics: SequenceMetrics,
}

/// Full result of [`run_ope`].
#[derive(Debug, Clone, PartialEq)]
pub struct OpeResult {
    pub report: EvalReport,
    pub runs: BTreeMap<String, SequenceRun>,
    /// Sequences skipped for having fewer than two tracked frames.
    pub skipped: Vec<String>,
}

/// One-pass evaluation: initialize each sequence at frame 0 with ground
/// truth, track greedily over frames 0, i, 2i, …, and score the predicted
/// frames. Metrics are computed over tracked frames only; the aggregate is
/// the per-sequence mean. Deterministic for a fixed (model, dataset,
/// protocol).
pub fn run_ope(model: &TrackerModel, dataset: &Dataset, protocol: &EvalProtocol) -> Result<OpeResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outcomes: Vec<(String, Result<Option<SequenceRun>>)> = dataset
        .videos
        .par_iter()
        .map(|video| (video.id.clone(), evaluate_sequence(model, video, protocol)))
        .collect();

    let mut runs = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut per_sequence = BTreeMap::new();
    for (id, outcome) in outcomes {
        match outcome? {
            Some(run) => {
                per_sequence.insert(id.clone(), run.metrics);
                runs.insert(id, run);
            }
            None => {
                eprintln!("warning: sequence {id} has fewer than 2 tracked frames; skipped");
                skipped.push(id);
            }
        }
    }
    if per_sequence.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(OpeResult {
        report: EvalReport::from_sequences(per_sequence)?,
        runs,
        skipped,
    })
}

fn evaluate_sequence(
    model: &TrackerModel,
    video: &crate::episodes::Video,
    protocol: &EvalProtocol,
) -> Result<Option<SequenceRun>> {
    let tracked: Vec<usize> = (0..video.len()).step_by(protocol.interval).collect();
    if tracked.len() < 2 {
        return Ok(None);
    }
    let init_box = video.boxes[tracked[0]];
    let template = model.init_template(&video.frame(tracked[0])?, &init_box)?;
    let mut state = TrackState::new(template, init_box);
    // Argmax tracking ignores the rng; any seed works.
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut boxes = vec![init_box];
    let mut preds = Vec::with_capacity(tracked.len() - 1);
    let mut gts = Vec::with_capacity(tracked.len() - 1);
    for &idx in &tracked[1..] {
        let frame = video.frame(idx)?;
        let step = track_step(model, &mut state, &frame, ActionMode::Argmax, &mut rng)?;
        boxes.push(step.box_frame);
        preds.push(step.box_frame);
        gts.push(video.boxes[idx]);
    }
    let overlaps: Vec<f64> = preds.iter().zip(&gts).map(|(p, g)| iou(p, g)).collect();
    let metrics = SequenceMetrics::compute(
        &preds,
        &gts,
        protocol.thresholds,
        protocol.precision_threshold,
    )?;
    Ok(Some(SequenceRun {
        tracked_indices: tracked,
        boxes,
        overlaps,
        metrics,
    }))
}

/// Write per-sequence box dumps: one `x,y,w,h` line per tracked frame
/// (the first line is the initialization box), mirroring the annotation
/// format.
pub fn write_box_dumps(result: &OpeResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (id, run) in &result.runs {
        let mut text = String::new();
        for b in &run.boxes {
            text.push_str(&format!("{},{},{},{}\n", b.x, b.y, b.w, b.h));
        }
        std::fs::write(dir.join(format!("{id}.txt")), text)?;
    }
    Ok(())
}

fn read_box_dump(path: &Path) -> Result<Vec<BBox>> {
    let text = std::fs::read_to_string(path)?;
    let mut boxes = Vec::new();
    for line in text.lines() {
        let parts: Vec<f64> = line
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Checkpoint(format!("box dump {}: {e}", path.display())))?;
        boxes.push(BBox::new(parts[0], parts[1], parts[2], parts[3]));
    }
    Ok(boxes)
}

/// Rebuild an [`EvalReport`] from dumped per-frame boxes and the dataset's
/// ground truth. Bit-for-bit equal to the report `run_ope` produced.
pub fn recompute_report(
    dataset: &Dataset,
    dumps_dir: &Path,
    protocol: &EvalProtocol,
) -> Result<EvalReport> {
    let mut per_sequence = BTreeMap::new();
    for video in &dataset.videos {
        let path = dumps_dir.join(format!("{}.txt", video.id));
        if !path.exists() {
            continue; // skipped sequence
        }
        let boxes = read_box_dump(&path)?;
        let tracked: Vec<usize> = (0..video.len()).step_by(protocol.interval).collect();
        if boxes.len() != tracked.len() {
            return Err(Error::LengthMismatch {
                left: boxes.len(),
                right: tracked.len(),
            });
        }
        let preds = &boxes[1..];
        let gts: Vec<BBox> = tracked[1..].iter().map(|&i| video.boxes[i]).collect();
        per_sequence.insert(
            video.id.clone(),
            SequenceMetrics::compute(preds, &gts, protocol.thresholds, protocol.precision_threshold)?,
        );
    }
    EvalReport::from_sequences(per_sequence)
}

/// Mean success rate across sequences at evenly spaced thresholds; the
/// aggregate success plot.
pub fn success_curve(result: &OpeResult, points: usize) -> Vec<(f64, f64)> {
    let mut curve = Vec::with_capacity(points);
    for i in 0..points {
        let tau = i as f64 / (points - 1) as f64;
        let mut acc = 0.0;
        for run in result.runs.values() {
            let hits = run.overlaps.iter().filter(|&&v| v > tau).count();
            acc += hits as f64 / run.overlaps.len() as f64;
        }
        curve.push((tau, acc / result.runs.len() as f64));
    }
    curve
}

/// Mean precision across sequences at evenly spaced center-error
/// thresholds up to `max_error` pixels.
pub fn precision_curve(
    result: &OpeResult,
    dataset: &Dataset,
    points: usize,
    max_error: f64,
) -> Vec<(f64, f64)> {
    let mut errors_per_seq: Vec<Vec<f64>> = Vec::new();
    for (id, run) in &result.runs {
        let video = dataset.videos.iter().find(|v| &v.id == id).unwrap();
        let errs = run.tracked_indices[1..]
            .iter()
            .zip(&run.boxes[1..])
            .map(|(&idx, b)| center_distance(b, &video.boxes[idx]))
            .collect();
        errors_per_seq.push(errs);
    }
    (0..points)
        .map(|i| {
            let tau = max_error * i as f64 / (points - 1) as f64;
            let mut acc = 0.0;
            for errs in &errors_per_seq {
                acc += errs.iter().filter(|&&e| e <= tau).count() as f64 / errs.len() as f64;
            }
            (tau / max_error, acc / errors_per_seq.len() as f64)
        })
        .collect()
}

/// The four standard training variants of the component ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    /// Frame-level pre-trained model, no sequence-level training.
    Baseline,
    /// Sequence-level sampling with the frame-level objective.
    Ss,
    /// Sequence-level sampling plus the self-critical objective.
    SsSo,
    /// Everything plus frame-interval augmentation.
    SsSoSa,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Baseline,
        AblationVariant::Ss,
        AblationVariant::SsSo,
        AblationVariant::SsSoSa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::Baseline => "baseline",
            AblationVariant::Ss => "+SS",
            AblationVariant::SsSo => "+SS+SO",
            AblationVariant::SsSoSa => "+SS+SO+SA",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub report: EvalReport,
    /// AO gain over the baseline row.
    pub delta_ao: f64,
}

/// Train and evaluate the ablation ladder {baseline, +SS, +SS+SO,
/// +SS+SO+SA}. Every trained variant starts from the same pre-trained
/// checkpoint and runs with the same seed; SA-off variants use
/// max_interval = 1.
pub fn ablation_suite(
    pretrained: &TrackerModel,
    train_dataset: &Dataset,
    eval_dataset: &Dataset,
    cfg: &TrainConfig,
    protocol: &EvalProtocol,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    let mut baseline_ao = 0.0;
    for variant in AblationVariant::ALL {
        let report = match variant {
            AblationVariant::Baseline => run_ope(pretrained, eval_dataset, protocol)?.report,
            _ => {
                let (objective, max_interval) = match variant {
                    AblationVariant::Ss => (SltObjective::FrameLevel, 1),
                    AblationVariant::SsSo => (SltObjective::Scst, 1),
                    AblationVariant::SsSoSa => (SltObjective::Scst, cfg.max_interval.max(2)),
                    AblationVariant::Baseline => unreachable!(),
                };
                let variant_cfg = TrainConfig {
                    max_interval,
                    ..*cfg
                };
                let mut model = pretrained.clone();
                let mut adam = Adam::new(model.num_params());
                engine::train_slt(
                    &mut model,
                    &mut adam,
                    0,
                    train_dataset,
                    &variant_cfg,
                    objective,
                    None,
                )?;
                run_ope(&model, eval_dataset, protocol)?.report
            }
        };
        if variant == AblationVariant::Baseline {
            baseline_ao = report.ao;
        }
        rows.push(AblationRow {
            variant,
            delta_ao: report.ao - baseline_ao,
            report,
        });
    }
    Ok(rows)
}

/// Text table in the shape of the component-ablation comparison.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant      ao        delta     auc       precision\n");
    for row in rows {
        out.push_str(&format!(
            "{:<12} {:<9.4} {:<+9.4} {:<9.4} {:<9.4}\n",
            row.variant.name(),
            row.report.ao,
            row.delta_ao,
            row.report.success_auc,
            row.report.precision
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: String,
    pub interval: usize,
    pub report: EvalReport,
}

/// Evaluate each model at each frame interval (the low-frame-rate
/// robustness table). Intervals must lie in 1..=10.
pub fn frame_rate_sweep(
    models: &[(String, &TrackerModel)],
    dataset: &Dataset,
    intervals: &[usize],
    protocol: &EvalProtocol,
) -> Result<Vec<SweepRow>> {
    for &i in intervals {
        if !(1..=10).contains(&i) {
            return Err(Error::InvalidArgument {
                what: "interval",
                constraint: "1 <= i <= 10",
                value: i.to_string(),
            });
        }
    }
    let mut rows = Vec::new();
    for (name, model) in models {
        for &interval in intervals {
            let p = EvalProtocol {
                interval,
                ..*protocol
            };
            rows.push(SweepRow {
                model: name.clone(),
                interval,
                report: run_ope(model, dataset, &p)?.report,
            });
        }
    }
    Ok(rows)
}

pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("model                interval  ao        auc\n");
    for row in rows {
        out.push_str(&format!(
            "{:<20} {:<9} {:<9.4} {:<9.4}\n",
            row.model, row.interval, row.report.ao, row.report.success_auc
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::{generate_synthetic_dataset, SyntheticSceneConfig};
    use crate::tracker::TrackerConfig;

    fn small_model(seed: u64) -> TrackerModel {
        TrackerModel::new(
            TrackerConfig {
                channels: [4, 8, 8],
                head_channels: 8,
                template_size: 32,
                search_size: 64,
                ..Default::default()
            },
            seed,
        )
    }

    fn small_dataset(seed: u64, videos: usize, frames: usize) -> Dataset {
        generate_synthetic_dataset(
            &SyntheticSceneConfig {
                frame_size: 64,
                num_frames: frames,
                num_distractors: 0,
                occluder_rate: 0.0,
                seed,
                ..Default::default()
            },
            videos,
        )
    }

    #[test]
    fn ope_is_deterministic_and_dumps_recompute() {
        let model = small_model(3);
        let ds = small_dataset(5, 3, 8);
        let protocol = EvalProtocol::default();
        let a = run_ope(&model, &ds, &protocol).unwrap();
        let b = run_ope(&model, &ds, &protocol).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        write_box_dumps(&a, dir.path()).unwrap();
        let rebuilt = recompute_report(&ds, dir.path(), &protocol).unwrap();
        assert_eq!(rebuilt, a.report);
    }

    #[test]
    fn interval_skips_frames_and_short_sequences() {
        let model = small_model(4);
        let mut ds = small_dataset(6, 2, 9);
        // A 2-frame video is evaluable at i=1 but skipped at i=3.
        let short = generate_synthetic_dataset(
            &SyntheticSceneConfig {
                frame_size: 64,
                num_frames: 2,
                seed: 99,
                ..Default::default()
            },
            1,
        );
        let mut short_video = short.videos[0].clone();
        short_video.id = "zz_short".to_string();
        ds.videos.push(short_video);

        let p3 = EvalProtocol {
            interval: 3,
            ..Default::default()
        };
        let r = run_ope(&model, &ds, &p3).unwrap();
        assert_eq!(r.skipped, vec!["zz_short".to_string()]);
        // 9 frames at i=3: tracked 0,3,6.
        let run = r.runs.values().next().unwrap();
        assert_eq!(run.tracked_indices, vec![0, 3, 6]);
        assert_eq!(run.boxes.len(), 3);
        assert_eq!(run.overlaps.len(), 2);
    }

    #[test]
    fn sweep_at_interval_one_equals_run_ope() {
        let model = small_model(5);
        let ds = small_dataset(7, 2, 6);
        let protocol = EvalProtocol::default();
        let direct = run_ope(&model, &ds, &protocol).unwrap();
        let rows = frame_rate_sweep(
            &[("m".to_string(), &model)],
            &ds,
            &[1],
            &protocol,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].report, direct.report);

        assert!(frame_rate_sweep(&[("m".to_string(), &model)], &ds, &[11], &protocol).is_err());
    }

    #[test]
    fn success_curve_endpoints() {
        let model = small_model(6);
        let ds = small_dataset(8, 2, 6);
        let r = run_ope(&model, &ds, &EvalProtocol::default()).unwrap();
        let curve = success_curve(&r, 21);
        assert_eq!(curve.len(), 21);
        assert_eq!(curve[0].0, 0.0);
        assert_eq!(curve[20].0, 1.0);
        // Monotone non-increasing in the threshold.
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }
}
