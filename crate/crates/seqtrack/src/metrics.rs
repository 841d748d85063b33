//! Sequence-level tracking metrics and the episode reward: average overlap,
//! success rates, success-plot AUC, precision, normalized precision.
//!
//! All success-style thresholds compare strictly (`value > tau` for
//! overlaps, `error < tau` for center errors) so a threshold of 1 never
//! succeeds and a threshold of 0 never admits a positive error.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::boxgeom::{center_distance, iou, BBox};
use crate::{Error, Result};

/// Per-frame overlaps of one scored episode or benchmark sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSequence(Vec<f64>);

impl OverlapSequence {
    /// Values must lie in [0, 1].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument {
                    what: "overlap",
                    constraint: "0 <= v <= 1",
                    value: v.to_string(),
                });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Arithmetic mean of the per-frame overlaps (the AO score).
pub fn average_overlap(s: &OverlapSequence) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(s.values().iter().sum::<f64>() / s.len() as f64)
}

/// Fraction of overlaps strictly greater than `tau`.
pub fn success_rate(s: &OverlapSequence, tau: f64) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptySequence);
    }
    let hits = s.values().iter().filter(|&&v| v > tau).count();
    Ok(hits as f64 / s.len() as f64)
}

/// Mean success rate over `n_thresholds` thresholds evenly spaced on
/// [0, 1], endpoints included, with the strict comparison of
/// [`success_rate`]. Converges to [`average_overlap`] as the grid refines.
/// An overlap of exactly 1 fails the final threshold, so an all-ones
/// sequence scores `(n-1)/n` rather than 1.
pub fn success_auc(s: &OverlapSequence, n_thresholds: usize) -> Result<f64> {
    if n_thresholds < 2 {
        return Err(Error::InvalidArgument {
            what: "n_thresholds",
            constraint: ">= 2",
            value: n_thresholds.to_string(),
        });
    }
    if s.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut acc = 0.0;
    for i in 0..n_thresholds {
        let tau = i as f64 / (n_thresholds - 1) as f64;
        acc += success_rate(s, tau)?;
    }
    Ok(acc / n_thresholds as f64)
}

/// Fraction of center errors at most `threshold` pixels (OPE precision).
pub fn precision(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptySequence);
    }
    let hits = errors.iter().filter(|&&e| e <= threshold).count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Normalized precision: center errors scaled per axis by the ground-truth
/// box dimensions, averaged as a success fraction (`error < tau`, strict)
/// over 51 thresholds evenly spaced on [0, 0.5]. A zero error fails the
/// tau = 0 threshold, so a perfect prediction scores 50/51.
pub fn normalized_precision_auc(pred: &[BBox], gt: &[BBox]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut errors = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(gt) {
        if g.area() <= 0.0 {
            return Err(Error::DegenerateBox);
        }
        let (px, py) = p.center();
        let (gx, gy) = g.center();
        errors.push(((px - gx) / g.w).hypot((py - gy) / g.h));
    }
    let n = 51;
    let mut acc = 0.0;
    for i in 0..n {
        let tau = 0.5 * i as f64 / (n - 1) as f64;
        let hits = errors.iter().filter(|&&e| e < tau).count();
        acc += hits as f64 / errors.len() as f64;
    }
    Ok(acc / n as f64)
}

/// The reward `r`: average overlap between predicted and ground-truth
/// boxes over the episode's frames.
pub fn episode_reward(pred: &[BBox], gt: &[BBox]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    let overlaps: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect();
    average_overlap(&OverlapSequence::new(overlaps)?)
}

/// The metric bundle reported per sequence and in aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub ao: f64,
    pub sr_050: f64,
    pub sr_075: f64,
    pub success_auc: f64,
    pub precision: f64,
    pub norm_precision: f64,
}

impl SequenceMetrics {
    /// Compute all fields from per-frame predictions and ground truth.
    pub fn compute(
        pred: &[BBox],
        gt: &[BBox],
        auc_thresholds: usize,
        precision_threshold: f64,
    ) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: gt.len(),
            });
        }
        let overlaps =
            OverlapSequence::new(pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect())?;
        let errors: Vec<f64> = pred
            .iter()
            .zip(gt)
            .map(|(p, g)| center_distance(p, g))
            .collect();
        Ok(Self {
            ao: average_overlap(&overlaps)?,
            sr_050: success_rate(&overlaps, 0.5)?,
            sr_075: success_rate(&overlaps, 0.75)?,
            success_auc: success_auc(&overlaps, auc_thresholds)?,
            precision: precision(&errors, precision_threshold)?,
            norm_precision: normalized_precision_auc(pred, gt)?,
        })
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("ao", self.ao),
            ("sr_050", self.sr_050),
            ("sr_075", self.sr_075),
            ("success_auc", self.success_auc),
            ("precision", self.precision),
            ("norm_precision", self.norm_precision),
        ]
    }
}

/// Benchmark report: aggregate fields are the per-sequence means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ao: f64,
    pub sr_050: f64,
    pub sr_075: f64,
    pub success_auc: f64,
    pub precision: f64,
    pub norm_precision: f64,
    pub per_sequence_breakdown: BTreeMap<String, SequenceMetrics>,
}

impl EvalReport {
    pub fn from_sequences(per_sequence: BTreeMap<String, SequenceMetrics>) -> Result<Self> {
        if per_sequence.is_empty() {
            return Err(Error::EmptySequence);
        }
        let n = per_sequence.len() as f64;
        let mut sums = [0.0; 6];
        for m in per_sequence.values() {
            for (acc, (_, v)) in sums.iter_mut().zip(m.fields()) {
                *acc += v;
            }
        }
        Ok(Self {
            ao: sums[0] / n,
            sr_050: sums[1] / n,
            sr_075: sums[2] / n,
            success_auc: sums[3] / n,
            precision: sums[4] / n,
            norm_precision: sums[5] / n,
            per_sequence_breakdown: per_sequence,
        })
    }

    pub fn aggregate(&self) -> SequenceMetrics {
        SequenceMetrics {
            ao: self.ao,
            sr_050: self.sr_050,
            sr_075: self.sr_075,
            success_auc: self.success_auc,
            precision: self.precision,
            norm_precision: self.norm_precision,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per sequence plus an `aggregate` row.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "sequence",
            "ao",
            "sr_050",
            "sr_075",
            "success_auc",
            "precision",
            "norm_precision",
        ])?;
        let row = |m: &SequenceMetrics| m.fields().map(|(_, v)| format!("{v}"));
        for (id, m) in &self.per_sequence_breakdown {
            let mut rec = vec![id.clone()];
            rec.extend(row(m));
            wtr.write_record(&rec)?;
        }
        let mut rec = vec!["aggregate".to_string()];
        rec.extend(row(&self.aggregate()));
        wtr.write_record(&rec)?;
        wtr.flush()?;
        Ok(())
    }
}
