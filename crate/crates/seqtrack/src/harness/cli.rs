//! Command-line entry points. The binary in `src/main.rs` is a thin shim
//! over [`run`]; everything here is library code so tests and examples can
//! drive the same paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::tabular::{
    enumerate_expected_reward, estimate_gradient, exact_policy_gradient, sample_gradient,
    Estimator, TabularPolicyEnv,
};
use crate::engine::{self, SltObjective, TrainConfig};
use crate::episodes::{generate_synthetic_dataset, load_dataset, save_dataset, SyntheticSceneConfig};
use crate::harness::config::ConfigMap;
use crate::harness::manifest::RunManifest;
use crate::harness::{
    ablation_suite, format_ablation_table, format_sweep_table, frame_rate_sweep, plot,
    precision_curve, run_ope, success_curve, write_box_dumps, EvalProtocol,
};
use crate::nn::Adam;
use crate::tracker::{load_checkpoint, model_from_checkpoint, Stage, TrackerConfig, TrackerModel};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "seqtrack",
    about = "Sequence-level tracker training: synthetic data, frame-level pre-training, self-critical fine-tuning, and one-pass evaluation.",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic tracking dataset on disk.
    SynthGen {
        /// Dataset root to write (defaults under SLT_OUT_ROOT).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of videos.
        #[arg(long, default_value_t = 20)]
        videos: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set occluder_rate=0.05 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Frame-level pre-training on perturbed template/search pairs.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
        /// Validation dataset for per-epoch loss/AO logging and the final
        /// report (defaults to the training dataset).
        #[arg(long)]
        val_dataset: Option<PathBuf>,
        /// Mid-run checkpoint to resume from (continues its step counter).
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Sequence-level training from a pre-trained checkpoint.
    Slt {
        #[arg(long)]
        dataset: PathBuf,
        /// Pre-trained checkpoint to start from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Mid-run checkpoint to resume from (continues its step counter).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Training objective: scst or frame-level.
        #[arg(long, default_value = "scst")]
        objective: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// One-pass evaluation of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Track every i-th frame only.
        #[arg(long)]
        interval: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Train and evaluate the component ablation ladder
    /// {baseline, +SS, +SS+SO, +SS+SO+SA} from one pre-trained checkpoint.
    Ablate {
        /// Training dataset.
        #[arg(long)]
        dataset: PathBuf,
        /// Held-out evaluation dataset (defaults to the training dataset).
        #[arg(long)]
        eval_dataset: Option<PathBuf>,
        /// Pre-trained checkpoint shared by all variants.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate checkpoints across frame intervals (low-frame-rate table).
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint to evaluate (repeatable).
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Comma-separated intervals, e.g. 1,2,3.
        #[arg(long, default_value = "1,2,3")]
        intervals: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the policy-gradient oracle suite; non-zero exit on any
    /// violation of the 3-sigma agreement bounds.
    GradCheck {
        /// Monte Carlo samples per estimator.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Execute a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::SynthGen {
            out,
            seed,
            videos,
            config,
            set,
        } => cmd_synth_gen(out, seed, videos, config, set),
        Command::Pretrain {
            dataset,
            val_dataset,
            resume,
            out,
            seed,
            config,
            set,
        } => cmd_pretrain(dataset, val_dataset, resume, out, seed, config, set),
        Command::Slt {
            dataset,
            checkpoint,
            resume,
            objective,
            out,
            seed,
            config,
            set,
        } => cmd_slt(dataset, checkpoint, resume, objective, out, seed, config, set),
        Command::Eval {
            dataset,
            checkpoint,
            interval,
            out,
            config,
            set,
        } => cmd_eval(dataset, checkpoint, interval, out, config, set),
        Command::Ablate {
            dataset,
            eval_dataset,
            checkpoint,
            out,
            seed,
            config,
            set,
        } => cmd_ablate(dataset, eval_dataset, checkpoint, out, seed, config, set),
        Command::Sweep {
            dataset,
            checkpoints,
            intervals,
            out,
            config,
            set,
        } => cmd_sweep(dataset, checkpoints, intervals, out, config, set),
        Command::GradCheck { samples, seed, out } => cmd_grad_check(samples, seed, out),
    }
}

fn load_config_map(
    config: &Option<PathBuf>,
    set: &[String],
    seed: Option<u64>,
) -> Result<ConfigMap> {
    let mut map = match config {
        Some(path) => ConfigMap::from_file(path)?,
        None => ConfigMap::new(),
    };
    map.apply_overrides(set)?;
    if let Some(s) = seed {
        map.set("seed", s); // flags override config keys
    }
    Ok(map)
}

/// Output directory: the --out flag, else `$SLT_OUT_ROOT/<command>`, else
/// `runs/<command>`.
fn resolve_out(out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        std::env::var_os("SLT_OUT_ROOT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(command)
    })
}

fn manifest_config(map: &ConfigMap) -> BTreeMap<String, String> {
    map.values().clone()
}

fn load_model(path: &Path) -> Result<(TrackerModel, Stage)> {
    let ck = load_checkpoint(path)?;
    let stage = ck.stage()?;
    Ok((model_from_checkpoint(&ck)?, stage))
}

fn cmd_synth_gen(
    out: Option<PathBuf>,
    seed: Option<u64>,
    videos: usize,
    config: Option<PathBuf>,
    set: Vec<String>,
) -> Result<u8> {
    let map = load_config_map(&config, &set, seed)?;
    let synth = map.synth_config(SyntheticSceneConfig {
        seed: seed.unwrap_or(0),
        ..Default::default()
    })?;
    map.ensure_consumed()?;
    let out = resolve_out(out, "synth");
    let dataset = generate_synthetic_dataset(&synth, videos);
    save_dataset(&dataset, &out)?;

    let mut cfg_snapshot = manifest_config(&map);
    cfg_snapshot.insert("videos".to_string(), videos.to_string());
    let mut manifest = RunManifest::new("synth-gen", synth.seed, cfg_snapshot);
    // Hash the sequence tree before the manifest lands inside it.
    manifest.add_dataset_dir(&out)?;
    manifest.save(&out.join("manifest.json"))?;
    println!(
        "wrote {} videos ({} frames each) to {}",
        dataset.len(),
        synth.num_frames,
        out.display()
    );
    Ok(0)
}

fn final_report(
    model: &TrackerModel,
    dataset_path: &Path,
    protocol: &EvalProtocol,
    out: &Path,
) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let result = run_ope(model, &dataset, protocol)?;
    std::fs::write(out.join("report.json"), result.report.to_json()?)?;
    let mut csv = Vec::new();
    result.report.write_csv(&mut csv)?;
    std::fs::write(out.join("report.csv"), csv)?;
    println!(
        "final report: ao={:.4} auc={:.4} precision={:.4}",
        result.report.ao, result.report.success_auc, result.report.precision
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_pretrain(
    dataset_path: PathBuf,
    val_dataset: Option<PathBuf>,
    resume: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    config: Option<PathBuf>,
    set: Vec<String>,
) -> Result<u8> {
    let map = load_config_map(&config, &set, seed)?;
    let cfg = map.train_config(TrainConfig {
        epochs: 8,
        videos_per_epoch: 256,
        lr_start: 1e-3,
        lr_end: 2e-4,
        ..Default::default()
    })?;
    let tracker_cfg = map.tracker_config(TrackerConfig::default())?;
    map.ensure_consumed()?;
    let out = resolve_out(out, "pretrain");

    let dataset = load_dataset(&dataset_path)?;
    let val_path = val_dataset.clone().unwrap_or_else(|| dataset_path.clone());
    let val = load_dataset(&val_path)?;

    let (mut model, mut adam, start_step) = match &resume {
        Some(path) => {
            let (model, adam, step, stage) = engine::load_training_state(path)?;
            if stage != Stage::Pretrain {
                return Err(Error::Checkpoint(format!(
                    "--resume expects a pretrain checkpoint, found stage `{}`",
                    stage.as_str()
                )));
            }
            (model, adam, step)
        }
        None => {
            let model = TrackerModel::new(tracker_cfg, cfg.seed);
            let adam = Adam::new(model.num_params());
            (model, adam, 0)
        }
    };
    let (stats, _) = engine::pretrain_frame_level(
        &mut model,
        &mut adam,
        start_step,
        &dataset,
        Some(&val),
        &cfg,
        Some(&out),
    )?;
    if let Some(last) = stats.last() {
        println!("pretrain finished at step {} (loss {:.4})", last.step, last.loss);
    }

    let protocol = EvalProtocol::default();
    final_report(&model, &val_path, &protocol, &out)?;

    let mut manifest = RunManifest::new("pretrain", cfg.seed, manifest_config(&map));
    manifest.add_dataset_dir(&dataset_path)?;
    manifest.add_dataset_dir(&val_path)?;
    manifest.add_checkpoint(&out.join("final.ckpt"), Stage::Pretrain.as_str())?;
    manifest.save(&out.join("manifest.json"))?;
    println!("checkpoint: {}", out.join("final.ckpt").display());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_slt(
    dataset_path: PathBuf,
    checkpoint: Option<PathBuf>,
    resume: Option<PathBuf>,
    objective: String,
    out: Option<PathBuf>,
    seed: Option<u64>,
    config: Option<PathBuf>,
    set: Vec<String>,
) -> Result<u8> {
    let objective = SltObjective::parse(&objective).ok_or_else(|| Error::ConfigValue {
        key: "objective".to_string(),
        reason: format!("unknown objective `{objective}` (scst|frame-level)"),
    })?;
    let map = load_config_map(&config, &set, seed)?;
    let cfg = map.train_config(TrainConfig::default())?;
    map.ensure_consumed()?;
    let out = resolve_out(out, "slt");
    let dataset = load_dataset(&dataset_path)?;

    let (mut model, mut adam, start_step, lineage) = match (&resume, &checkpoint) {
        (Some(path), _) => {
            let (model, adam, step, stage) = engine::load_training_state(path)?;
            if stage != Stage::Slt {
                return Err(Error::Checkpoint(format!(
                    "--resume expects an slt checkpoint, found stage `{}`",
                    stage.as_str()
                )));
            }
            (model, adam, step, path.clone())
        }
        (None, Some(path)) => {
            let (model, _, _, _) = engine::load_training_state(path)?;
            let adam = Adam::new(model.num_params());
            (model, adam, 0, path.clone())
        }
        (None, None) => {
            return Err(Error::ConfigValue {
                key: "checkpoint".to_string(),
                reason: "slt needs --checkpoint (pre-trained) or --resume".to_string(),
            })
        }
    };

    let stats = engine::train_slt(
        &mut model,
        &mut adam,
        start_step,
        &dataset,
        &cfg,
        objective,
        Some(&out),
    )?;
    if let Some(last) = stats.last() {
        println!(
            "slt finished at step {}: r_sample={:.4} r_greedy={:.4}",
            last.step, last.mean_r_sample, last.mean_r_greedy
        );
    }

    let protocol = EvalProtocol::default();
    final_report(&model, &dataset_path, &protocol, &out)?;

    let mut manifest = RunManifest::new("slt", cfg.seed, manifest_config(&map));
    manifest.add_dataset_dir(&dataset_path)?;
    manifest.add_checkpoint(&lineage, "input")?;
    manifest.add_checkpoint(&out.join("final.ckpt"), Stage::Slt.as_str())?;
    manifest.save(&out.join("manifest.json"))?;
    println!("checkpoint: {}", out.join("final.ckpt").display());
    Ok(0)
}

fn cmd_eval(
    dataset_path: PathBuf,
    checkpoint: PathBuf,
    interval: Option<usize>,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    set: Vec<String>,
) -> Result<u8> {
    let map = load_config_map(&config, &set, None)?;
    let mut protocol = map.eval_protocol(EvalProtocol::default())?;
    if let Some(i) = interval {
        protocol.interval = i; // flags override config keys
    }
    map.ensure_consumed()?;
    if protocol.interval < 1 {
        return Err(Error::ConfigValue {
            key: "interval".to_string(),
            reason: "must be >= 1".to_string(),
        });
    }
    let out = resolve_out(out, "eval");
    std::fs::create_dir_all(&out)?;

    let (model, stage) = load_model(&checkpoint)?;
    let dataset = load_dataset(&dataset_path)?;
    let result = run_ope(&model, &dataset, &protocol)?;

    std::fs::write(out.join("report.json"), result.report.to_json()?)?;
    let mut csv = Vec::new();
    result.report.write_csv(&mut csv)?;
    std::fs::write(out.join("report.csv"), csv)?;
    write_box_dumps(&result, &out.join("boxes"))?;
    plot::save_success_plot(
        &out.join("success_plot.png"),
        &[("model".to_string(), success_curve(&result, 101))],
    )?;
    plot::save_success_plot(
        &out.join("precision_plot.png"),
        &[(
            "model".to_string(),
            precision_curve(&result, &dataset, 101, 50.0),
        )],
    )?;

    let mut manifest = RunManifest::new("eval", 0, manifest_config(&map));
    manifest.add_dataset_dir(&dataset_path)?;
    manifest.add_checkpoint(&checkpoint, stage.as_str())?;
    manifest.save(&out.join("manifest.json"))?;
    println!(
        "ao={:.4} sr_050={:.4} sr_075={:.4} auc={:.4} precision={:.4} norm_precision={:.4}",
        result.report.ao,
        result.report.sr_050,
        result.report.sr_075,
        result.report.success_auc,
        result.report.precision,
        result.report.norm_precision
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    dataset_path: PathBuf,
    eval_dataset: Option<PathBuf>,
    checkpoint: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    config: Option<PathBuf>,
    set: Vec<String>,
) -> Result<u8> {
    let map = load_config_map(&config, &set, seed)?;
    let cfg = map.train_config(TrainConfig::default())?;
    let protocol = map.eval_protocol(EvalProtocol::default())?;
    map.ensure_consumed()?;
    let out = resolve_out(out, "ablate");
    std::fs::create_dir_all(&out)?;

    let (pretrained, _) = load_model(&checkpoint)?;
    let train_ds = load_dataset(&dataset_path)?;
    let eval_path = eval_dataset.clone().unwrap_or_else(|| dataset_path.clone());
    let eval_ds = load_dataset(&eval_path)?;

    let rows = ablation_suite(&pretrained, &train_ds, &eval_ds, &cfg, &protocol)?;
    let table = format_ablation_table(&rows);
    print!("{table}");
    std::fs::write(out.join("ablation.txt"), &table)?;
    let mut csv = String::from("variant,ao,delta_ao,success_auc,precision\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.variant.name(),
            row.report.ao,
            row.delta_ao,
            row.report.success_auc,
            row.report.precision
        ));
        std::fs::write(
            out.join(format!("report_{}.json", row.variant.name().replace('+', "_"))),
            row.report.to_json()?,
        )?;
    }
    std::fs::write(out.join("ablation.csv"), csv)?;

    let mut manifest = RunManifest::new("ablate", cfg.seed, manifest_config(&map));
    manifest.add_dataset_dir(&dataset_path)?;
    manifest.add_dataset_dir(&eval_path)?;
    manifest.add_checkpoint(&checkpoint, "pretrain")?;
    manifest.save(&out.join("manifest.json"))?;
    Ok(0)
}

fn cmd_sweep(
    dataset_path: PathBuf,
    checkpoints: Vec<PathBuf>,
    intervals: String,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    set: Vec<String>,
) -> Result<u8> {
    let map = load_config_map(&config, &set, None)?;
    let protocol = map.eval_protocol(EvalProtocol::default())?;
    map.ensure_consumed()?;
    let intervals: Vec<usize> = intervals
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::ConfigValue {
            key: "intervals".to_string(),
            reason: format!("{e}"),
        })?;
    let out = resolve_out(out, "sweep");
    std::fs::create_dir_all(&out)?;

    let dataset = load_dataset(&dataset_path)?;
    let mut models = Vec::new();
    for path in &checkpoints {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let (model, _) = load_model(path)?;
        models.push((name, model));
    }
    let borrowed: Vec<(String, &TrackerModel)> =
        models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let rows = frame_rate_sweep(&borrowed, &dataset, &intervals, &protocol)?;
    let table = format_sweep_table(&rows);
    print!("{table}");
    std::fs::write(out.join("sweep.txt"), &table)?;
    let mut csv = String::from("model,interval,ao,success_auc\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.model, row.interval, row.report.ao, row.report.success_auc
        ));
    }
    std::fs::write(out.join("sweep.csv"), csv)?;

    let mut manifest = RunManifest::new("sweep", 0, manifest_config(&map));
    manifest.add_dataset_dir(&dataset_path)?;
    for path in &checkpoints {
        manifest.add_checkpoint(path, "input")?;
    }
    manifest.save(&out.join("manifest.json"))?;
    Ok(0)
}

fn cmd_grad_check(samples: usize, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8> {
    let seed = seed.unwrap_or(0);
    let mut all_ok = true;
    let mut report = String::new();
    let mut check = |name: &str, ok: bool, detail: String| {
        let line = format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
        all_ok &= ok;
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = TabularPolicyEnv::random(3, 3, &mut rng);
    for v in env.logits.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let exact = exact_policy_gradient(&env)?;

    // Exact gradient vs central finite differences of the enumerated
    // expected reward.
    let eps = 1e-6;
    let mut max_diff: f64 = 0.0;
    let mut probe = env.clone();
    for t in 0..probe.steps {
        for a in 0..probe.actions {
            let orig = probe.logits[[t, a]];
            probe.logits[[t, a]] = orig + eps;
            let hi = enumerate_expected_reward(&probe)?;
            probe.logits[[t, a]] = orig - eps;
            let lo = enumerate_expected_reward(&probe)?;
            probe.logits[[t, a]] = orig;
            let fd = -(hi - lo) / (2.0 * eps);
            max_diff = max_diff.max((exact[[t, a]] - fd).abs());
        }
    }
    check(
        "exact-vs-finite-differences",
        max_diff <= 1e-8,
        format!("max |diff| = {max_diff:.3e} (bound 1e-8)"),
    );

    // Estimator means within 3 standard errors of the exact gradient.
    for (name, estimator) in [
        ("reinforce-unbiasedness", Estimator::Reinforce),
        ("scst-unbiasedness", Estimator::Scst),
    ] {
        let est = estimate_gradient(&env, estimator, samples, &mut rng);
        let mut worst: f64 = 0.0;
        for t in 0..env.steps {
            for a in 0..env.actions {
                let se = est.stderr[[t, a]].max(1e-12);
                worst = worst.max((est.mean[[t, a]] - exact[[t, a]]).abs() / se);
            }
        }
        check(
            name,
            worst <= 3.0,
            format!("max |mean - exact| = {worst:.2} standard errors (bound 3)"),
        );
    }

    // Sample-wise invariance to constant reward shifts.
    let mut shifted = env.clone();
    for r in &mut shifted.rewards {
        *r += 50.0;
    }
    let mut rng_a = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let mut rng_b = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let mut max_shift_diff: f64 = 0.0;
    for _ in 0..1000 {
        let (ga, _, _) = sample_gradient(&env, Estimator::Scst, &mut rng_a);
        let (gb, _, _) = sample_gradient(&shifted, Estimator::Scst, &mut rng_b);
        for (x, y) in ga.iter().zip(gb.iter()) {
            max_shift_diff = max_shift_diff.max((x - y).abs());
        }
    }
    check(
        "scst-reward-shift-invariance",
        max_shift_diff <= 1e-12,
        format!("max sample-wise |diff| = {max_shift_diff:.3e} (bound 1e-12)"),
    );

    let out = resolve_out(out, "grad-check");
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("grad_check.txt"), &report)?;
    let mut cfg = BTreeMap::new();
    cfg.insert("samples".to_string(), samples.to_string());
    let mut manifest = RunManifest::new("grad-check", seed, cfg);
    manifest.add_dataset_virtual("tabular-env", &format!("N=3 T=3 seed={seed}"));
    manifest.save(&out.join("manifest.json"))?;

    Ok(if all_ok { 0 } else { 1 })
}
