//! Sequence-level training for visual trackers.
//!
//! A tracker is trained the way it is tested: it rolls over an episode of
//! video frames, each search region placed around its own previous
//! prediction, and the whole rollout is scored with the average-overlap
//! metric. The score difference between a stochastic rollout and a greedy
//! rollout of the same parameters drives a self-critical policy-gradient
//! update. The crate also ships the conventional frame-level baseline,
//! frame-interval augmentation for episode sampling, a synthetic video
//! generator for desk-scale experiments, exact enumeration oracles for the
//! gradient estimators, and a one-pass-evaluation harness.
//!
//! Start with the runnable programs under `examples/`; each demonstrates one
//! capability end to end. The `seqtrack` binary exposes the same machinery
//! as subcommands (`synth-gen`, `pretrain`, `slt`, `eval`, `ablate`,
//! `sweep`, `grad-check`).

pub mod boxgeom;
pub mod engine;
pub mod episodes;
pub mod harness;
pub mod img;
pub mod metrics;
pub mod nn;
pub mod tracker;

mod error;

pub use error::{Error, Result};
