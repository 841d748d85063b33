//! Flat `key=value` configuration files with `#` comments, `--set`
//! overrides, and typed extraction into the crate's config structs.
//! Unknown keys are rejected so typos surface instead of silently using
//! defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::boxgeom::PerturbConfig;
use crate::engine::TrainConfig;
use crate::episodes::{AppearanceConfig, SyntheticSceneConfig};
use crate::harness::EvalProtocol;
use crate::tracker::{DistStyle, TrackerConfig};
use crate::{Error, Result};

/// A parsed flat configuration. Keys read during extraction are tracked so
/// [`ConfigMap::ensure_consumed`] can flag leftovers.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                path: path.to_path_buf(),
                line: i + 1,
            })?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self {
            values,
            consumed: Default::default(),
        })
    }

    /// Apply `key=value` override strings (CLI `--set`).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::ConfigValue {
                key: o.clone(),
                reason: "override must be key=value".to_string(),
            })?;
            self.values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| Error::ConfigValue {
                key: key.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    /// Error if any key was never read by an extractor.
    pub fn ensure_consumed(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for key in self.values.keys() {
            if !consumed.contains(key) {
                return Err(Error::ConfigValue {
                    key: key.clone(),
                    reason: "unknown configuration key".to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn train_config(&self, base: TrainConfig) -> Result<TrainConfig> {
        let style_raw = self
            .raw("distribution_style")
            .unwrap_or(base.distribution_style.as_str())
            .to_string();
        let distribution_style =
            DistStyle::parse(&style_raw).ok_or_else(|| Error::ConfigValue {
                key: "distribution_style".to_string(),
                reason: format!("unknown style `{style_raw}`"),
            })?;
        let cfg = TrainConfig {
            t: self.parse("t", base.t)?,
            k: self.parse("k", base.k)?,
            max_interval: self.parse("max_interval", base.max_interval)?,
            lambda_l1: self.parse("lambda_l1", base.lambda_l1)?,
            lambda_giou: self.parse("lambda_giou", base.lambda_giou)?,
            lr_start: self.parse("lr_start", base.lr_start)?,
            lr_end: self.parse("lr_end", base.lr_end)?,
            lr_hold_epochs: self.parse("lr_hold_epochs", base.lr_hold_epochs)?,
            epochs: self.parse("epochs", base.epochs)?,
            videos_per_epoch: self.parse("videos_per_epoch", base.videos_per_epoch)?,
            seed: self.parse("seed", base.seed)?,
            distribution_style,
            penalty_weight: self.parse("penalty_weight", base.penalty_weight)?,
            freeze_norm_stats: self.parse("freeze_norm_stats", base.freeze_norm_stats)?,
            grad_clip: self.parse("grad_clip", base.grad_clip)?,
            perturb: PerturbConfig {
                max_shift_frac: self
                    .parse("perturb_max_shift_frac", base.perturb.max_shift_frac)?,
                max_log_scale: self.parse("perturb_max_log_scale", base.perturb.max_log_scale)?,
            },
            checkpoint_every: self.parse("checkpoint_every", base.checkpoint_every)?,
            val_samples: self.parse("val_samples", base.val_samples)?,
        };
        for (key, constraint) in [
            ("t", cfg.t >= 1),
            ("k", cfg.k >= 1),
            ("max_interval", cfg.max_interval >= 1),
        ] {
            if !constraint {
                return Err(Error::ConfigValue {
                    key: key.to_string(),
                    reason: "must be >= 1".to_string(),
                });
            }
        }
        Ok(cfg)
    }

    pub fn eval_protocol(&self, base: EvalProtocol) -> Result<EvalProtocol> {
        let p = EvalProtocol {
            interval: self.parse("interval", base.interval)?,
            thresholds: self.parse("thresholds", base.thresholds)?,
            precision_threshold: self.parse("precision_threshold", base.precision_threshold)?,
        };
        if p.interval < 1 {
            return Err(Error::ConfigValue {
                key: "interval".to_string(),
                reason: "must be >= 1".to_string(),
            });
        }
        Ok(p)
    }

    pub fn synth_config(&self, base: SyntheticSceneConfig) -> Result<SyntheticSceneConfig> {
        Ok(SyntheticSceneConfig {
            frame_size: self.parse("frame_size", base.frame_size)?,
            num_frames: self.parse("num_frames", base.num_frames)?,
            num_distractors: self.parse("num_distractors", base.num_distractors)?,
            occluder_rate: self.parse("occluder_rate", base.occluder_rate)?,
            target_speed: (
                self.parse("target_speed_min", base.target_speed.0)?,
                self.parse("target_speed_max", base.target_speed.1)?,
            ),
            scale_drift: self.parse("scale_drift", base.scale_drift)?,
            appearance: AppearanceConfig {
                size_range: (
                    self.parse("size_min", base.appearance.size_range.0)?,
                    self.parse("size_max", base.appearance.size_range.1)?,
                ),
                distractor_color_jitter: self
                    .parse("distractor_color_jitter", base.appearance.distractor_color_jitter)?,
                background_noise: self
                    .parse("background_noise", base.appearance.background_noise)?,
            },
            seed: self.parse("seed", base.seed)?,
        })
    }

    pub fn tracker_config(&self, base: TrackerConfig) -> Result<TrackerConfig> {
        let mut channels = base.channels;
        if let Some(raw) = self.raw("channels") {
            let parts: Vec<usize> = raw
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::ConfigValue {
                    key: "channels".to_string(),
                    reason: format!("{e}"),
                })?;
            if parts.len() != 3 {
                return Err(Error::ConfigValue {
                    key: "channels".to_string(),
                    reason: "expected three comma-separated values".to_string(),
                });
            }
            channels = [parts[0], parts[1], parts[2]];
        }
        Ok(TrackerConfig {
            channels,
            head_channels: self.parse("head_channels", base.head_channels)?,
            template_size: self.parse("template_size", base.template_size)?,
            search_size: self.parse("search_size", base.search_size)?,
            stride: base.stride,
            template_factor: self.parse("template_factor", base.template_factor)?,
            search_factor: self.parse("search_factor", base.search_factor)?,
            penalty_weight: self.parse("penalty_weight", base.penalty_weight)?,
            distribution_style: base.distribution_style,
        })
    }
}
