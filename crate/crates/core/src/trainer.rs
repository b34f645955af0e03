//! Training loop: balanced batches, augmentation, joint update of all modules.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentConfig, FrameFlagScope};
use crate::checkpoint::Checkpoint;
use crate::clips::{load_clip_strided, load_manifest, ClipRecord, Label, Split};
use crate::contrastive::{LossBreakdown, DEFAULT_TAU};
use crate::encoder::{ClipTensor, Normalization};
use crate::error::{Error, Result};
use crate::eval::{self, EvalWindows, ModelScorer};
use crate::model::{Model, ModelConfig, Sample};
use crate::optim::{clip_grad_norm, Adam, AdamConfig};
use crate::params::{Parameters, Tensor};
use crate::seed_keys;

/// Rough per-channel mean and spread of the synthetic corpus, in [0, 1] units.
const DESK_MEAN: f64 = 0.15;
const DESK_STD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaSchedule {
    /// `warmup_alpha` for epochs `1..=warmup_epochs`, then `alpha`.
    Warmup {
        warmup_epochs: usize,
        warmup_alpha: f64,
        alpha: f64,
    },
    Constant {
        alpha: f64,
    },
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        AlphaSchedule::Warmup {
            warmup_epochs: 5,
            warmup_alpha: 0.1,
            alpha: 0.5,
        }
    }
}

impl AlphaSchedule {
    fn validate(&self) -> Result<()> {
        let ok = |a: f64| (0.0..=1.0).contains(&a);
        let fine = match *self {
            AlphaSchedule::Warmup {
                warmup_alpha, alpha, ..
            } => ok(warmup_alpha) && ok(alpha),
            AlphaSchedule::Constant { alpha } => ok(alpha),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::config("alpha values must lie in [0, 1]"))
        }
    }
}

/// Weight of the contrastive term in `epoch` (1-based).
pub fn alpha_schedule(epoch: usize, schedule: &AlphaSchedule) -> f64 {
    match *schedule {
        AlphaSchedule::Warmup {
            warmup_epochs,
            warmup_alpha,
            alpha,
        } => {
            if epoch <= warmup_epochs {
                warmup_alpha
            } else {
                alpha
            }
        }
        AlphaSchedule::Constant { alpha } => alpha,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_len: usize,
    pub frame_stride: usize,
    pub tau: f64,
    pub seed: u64,
    /// Domains used for training and validation; empty means every domain except `hold_out`.
    pub train_domains: Vec<String>,
    pub hold_out: Option<String>,
    /// Stop after this many epochs without a better validation AUC; 0 disables.
    pub early_stop_patience: usize,
    /// Largest global gradient norm; 0 disables clipping.
    pub grad_clip: f64,
    /// Evaluate the validation split after every epoch.
    pub validate: bool,
    pub alpha: AlphaSchedule,
    pub model: ModelConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// 8-frame 64x64 clips with the small 3D encoder trained from scratch.
    ///
    /// Departs from [`TrainConfig::full`] where training from random weights
    /// needs it: a cross-entropy-only warm-up, gradient clipping, mean/std
    /// input normalisation and frame-level flags drawn once per clip.
    pub fn desk() -> Self {
        let mut model = ModelConfig::default();
        model.encoder.normalization = Normalization::MeanStd {
            mean: [DESK_MEAN; 3],
            std: [DESK_STD; 3],
        };
        Self {
            manifest: PathBuf::from("data/manifest.tsv"),
            out_dir: PathBuf::from("runs/desk"),
            batch_size: 16,
            learning_rate: 3e-3,
            epochs: 10,
            clip_len: 8,
            frame_stride: 1,
            tau: DEFAULT_TAU,
            seed: 0,
            train_domains: Vec::new(),
            hold_out: None,
            early_stop_patience: 3,
            grad_clip: 1.0,
            validate: true,
            alpha: AlphaSchedule::Warmup {
                warmup_epochs: 5,
                warmup_alpha: 0.0,
                alpha: 0.5,
            },
            model,
            augment: AugmentConfig {
                frame_flags: FrameFlagScope::PerClip,
                ..AugmentConfig::scaled_to(64)
            },
        }
    }

    /// 96-frame 224x224 clips, learning rate 1e-4.
    pub fn full() -> Self {
        Self {
            out_dir: PathBuf::from("runs/full"),
            learning_rate: 1e-4,
            clip_len: 96,
            epochs: 30,
            augment: AugmentConfig::default(),
            early_stop_patience: 0,
            grad_clip: 0.0,
            alpha: AlphaSchedule::default(),
            model: ModelConfig::default(),
            ..Self::desk()
        }
    }

    pub fn frame_size(&self) -> usize {
        self.augment.output_size
    }

    pub fn windows(&self) -> EvalWindows {
        EvalWindows {
            clip_len: self.clip_len,
            frame_stride: self.frame_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 4 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "batch_size must be even and at least 4 (two of each class), got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config("tau must be positive"));
        }
        if self.clip_len < 2 || self.frame_stride == 0 {
            return Err(Error::config("clip_len must be at least 2 and frame_stride positive"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::config("grad_clip must be non-negative"));
        }
        if let Some(h) = &self.hold_out {
            if self.train_domains.contains(h) {
                return Err(Error::config(format!("held-out domain {h} is also a training domain")));
            }
        }
        self.alpha.validate()?;
        self.augment.validate()?;
        self.model.validate()
    }

    /// Does `domain` take part in training and validation?
    pub fn uses_domain(&self, domain: &str) -> bool {
        if self.hold_out.as_deref() == Some(domain) {
            return false;
        }
        self.train_domains.is_empty() || self.train_domains.iter().any(|d| d == domain)
    }
}

/// Batches of `batch_size / 2` real and `batch_size / 2` fake indices into `records`.
/// Each record is used at most once; the remainder is dropped.
pub fn balanced_batches<R: Rng + ?Sized>(
    records: &[ClipRecord],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "batch_size must be even, got {batch_size}"
        )));
    }
    let mut real: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].label == Label::Real)
        .collect();
    let mut fake: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].label == Label::Fake)
        .collect();
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidInput("both real and fake records are required".into()));
    }
    real.shuffle(rng);
    fake.shuffle(rng);
    let half = batch_size / 2;
    let n = real.len().min(fake.len()) / half;
    Ok((0..n)
        .map(|b| {
            let mut batch: Vec<usize> = real[b * half..(b + 1) * half].to_vec();
            batch.extend_from_slice(&fake[b * half..(b + 1) * half]);
            batch
        })
        .collect())
}

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    /// Last completed epoch.
    pub epoch: usize,
    pub step: u64,
    pub best_val_auc: Option<f64>,
    pub stale_epochs: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let model = Model::new(config.model.clone(), config.seed)?;
        let adam = Adam::new(AdamConfig::with_lr(config.learning_rate), &model);
        Ok(Self {
            model,
            adam,
            epoch: 0,
            step: 0,
            best_val_auc: None,
            stale_epochs: 0,
        })
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        let meta = serde_json::json!({
            "kind": eval::KIND_MODEL,
            "model": config.model,
            "train": config,
            "frame_size": config.frame_size(),
            "windows": config.windows(),
            "epoch": self.epoch,
            "step": self.step,
            "adam_step": self.adam.step,
            "best_val_auc": self.best_val_auc,
            "stale_epochs": self.stale_epochs,
        });
        let names: Vec<String> = self.model.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut arrays: Vec<(String, Tensor)> = self
            .model
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("model.{n}"), t.clone()))
            .collect();
        for (n, t) in names.iter().zip(&self.adam.m) {
            arrays.push((format!("adam.m.{n}"), t.clone()));
        }
        for (n, t) in names.iter().zip(&self.adam.v) {
            arrays.push((format!("adam.v.{n}"), t.clone()));
        }
        Checkpoint { meta, arrays }
    }

    /// Restore from a checkpoint written by [`TrainState::to_checkpoint`].
    pub fn from_checkpoint(ckpt: &Checkpoint, config: &TrainConfig, path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        };
        if ckpt.meta["kind"].as_str() != Some(eval::KIND_MODEL) {
            return Err(bad("not a model checkpoint".into()));
        }
        let stored: ModelConfig = serde_json::from_value(ckpt.meta["model"].clone()).map_err(|e| bad(e.to_string()))?;
        if stored != config.model {
            return Err(bad("model configuration differs from the training config".into()));
        }
        let mut state = Self::new(config)?;
        state.model.load_arrays(&ckpt.arrays_with_prefix("model"))?;
        let names: Vec<String> = state.model.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (prefix, slot) in [("adam.m", &mut state.adam.m), ("adam.v", &mut state.adam.v)] {
            let arrays = ckpt.arrays_with_prefix(prefix);
            for (n, dst) in names.iter().zip(slot.iter_mut()) {
                let src = arrays
                    .iter()
                    .find(|(k, _)| k == n)
                    .ok_or_else(|| bad(format!("{prefix}.{n} missing")))?;
                if src.1.shape != dst.shape {
                    return Err(bad(format!("{prefix}.{n} has the wrong shape")));
                }
                dst.data.copy_from_slice(&src.1.data);
            }
        }
        let num = |k: &str| ckpt.meta[k].as_u64().ok_or_else(|| bad(format!("{k} missing")));
        state.epoch = num("epoch")? as usize;
        state.step = num("step")?;
        state.adam.step = num("adam_step")?;
        state.best_val_auc = ckpt.meta["best_val_auc"].as_f64();
        state.stale_epochs = num("stale_epochs")? as usize;
        Ok(state)
    }
}

/// Window start for a record in an epoch.
pub fn window_start(config: &TrainConfig, record: &ClipRecord, epoch: usize) -> Result<usize> {
    let span = (config.clip_len - 1) * config.frame_stride + 1;
    if record.frame_count < span {
        return Err(Error::InvalidInput(format!(
            "{}: {} frames, shorter than a {span}-frame window",
            record.video_id, record.frame_count
        )));
    }
    let mut rng = crate::seed::rng(seed_keys!(config.seed, "window", epoch, record.video_id.as_str()));
    Ok(rng.random_range(0..=record.frame_count - span))
}

/// Load and augment one training clip.
pub fn prepare_sample(config: &TrainConfig, record: &ClipRecord, epoch: usize) -> Result<Sample> {
    let start = window_start(config, record, epoch)?;
    let clip = load_clip_strided(record, config.clip_len, start, config.frame_stride)?;
    let mut rng = crate::seed::rng(seed_keys!(
        config.seed,
        "augment",
        epoch,
        record.video_id.as_str(),
        start
    ));
    let augmented = augment::apply(&clip, &mut rng, &config.augment)?;
    Ok(Sample {
        clip: ClipTensor::from_clip(&augmented, &config.model.encoder.normalization),
        label: record.label,
    })
}

/// One optimiser update on prepared samples.
pub fn train_step_samples(
    state: &mut TrainState,
    samples: &[Sample],
    alpha: f64,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let (loss, mut grads) = state.model.batch_gradients(samples, alpha, config.tau)?;
    if config.grad_clip > 0.0 {
        clip_grad_norm(&mut grads, config.grad_clip);
    }
    state.adam.update(&mut state.model, &grads);
    state.step += 1;
    Ok(loss)
}

/// Load, augment and take one step on `batch`, in `epoch` (1-based).
pub fn train_step(
    state: &mut TrainState,
    batch: &[ClipRecord],
    epoch: usize,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let samples = crate::parallel::try_map(batch, |r| prepare_sample(config, r, epoch))?;
    let alpha = alpha_schedule(epoch, &config.alpha);
    train_step_samples(state, &samples, alpha, config).map_err(|e| match e {
        Error::NonFinite(msg) => {
            let ids: Vec<&str> = batch.iter().map(|r| r.video_id.as_str()).collect();
            Error::NonFinite(format!(
                "{msg} at step {} (epoch {epoch}); batch: {}",
                state.step + 1,
                ids.join(" ")
            ))
        }
        other => other,
    })
}

pub const METRICS_HEADER: &str = "step,epoch,alpha,l_r,l_f,l_in,l_ce,l_total";
pub const VAL_HEADER: &str = "epoch,n_videos,auc,acc";

pub fn metrics_row(step: u64, epoch: usize, l: &LossBreakdown) -> String {
    format!(
        "{step},{epoch},{},{},{},{},{},{}",
        l.alpha, l.l_r, l.l_f, l.l_in, l.l_ce, l.l_total
    )
}

/// Paths written by [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last_checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub val: PathBuf,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

/// Keep the header and the rows whose first field is `<= step`.
fn truncate_log(path: &Path, header: &str, keep: impl Fn(u64) -> bool) -> Result<String> {
    let mut out = format!("{header}\n");
    if let Ok(text) = std::fs::read_to_string(path) {
        for line in text.lines().skip(1) {
            let first = line.split(',').next().and_then(|v| v.parse::<u64>().ok());
            if first.is_some_and(&keep) {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

fn append(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Train from scratch, or continue from `resume`.
pub fn train(config: &TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let records = load_manifest(&config.manifest)?;
    let train_set: Vec<ClipRecord> = records
        .iter()
        .filter(|r| r.split == Split::Train && config.uses_domain(&r.domain))
        .cloned()
        .collect();
    let val_set: Vec<ClipRecord> = records
        .iter()
        .filter(|r| r.split == Split::Val && config.uses_domain(&r.domain))
        .cloned()
        .collect();
    if let Some(h) = &config.hold_out {
        if !records.iter().any(|r| &r.domain == h) {
            return Err(Error::config(format!("held-out domain {h} is not in the manifest")));
        }
    }

    let mut state = match resume {
        Some(p) => TrainState::from_checkpoint(&Checkpoint::load(p)?, config, p)?,
        None => TrainState::new(config)?,
    };
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let metrics = out.join("metrics.csv");
    let val_path = out.join("val.csv");
    let step0 = state.step;
    let epoch0 = state.epoch as u64;
    let m = truncate_log(&metrics, METRICS_HEADER, |s| s <= step0)?;
    std::fs::write(&metrics, m).map_err(|e| Error::io(&metrics, e))?;
    let v = truncate_log(&val_path, VAL_HEADER, |e| e <= epoch0)?;
    std::fs::write(&val_path, v).map_err(|e| Error::io(&val_path, e))?;

    let mut last = out.join("last.ckpt");
    let mut stopped_early = false;
    let first = state.epoch + 1;
    if config.early_stop_patience > 0 && state.stale_epochs >= config.early_stop_patience {
        stopped_early = true;
    }
    for epoch in first..=config.epochs {
        if stopped_early {
            break;
        }
        let mut rng = crate::seed::rng(seed_keys!(config.seed, "batches", epoch));
        let batches = balanced_batches(&train_set, config.batch_size, &mut rng)?;
        let mut rows = String::new();
        for batch in &batches {
            let recs: Vec<ClipRecord> = batch.iter().map(|&i| train_set[i].clone()).collect();
            let loss = train_step(&mut state, &recs, epoch, config)?;
            writeln!(rows, "{}", metrics_row(state.step, epoch, &loss)).unwrap();
        }
        append(&metrics, &rows)?;
        state.epoch = epoch;

        if config.validate && !val_set.is_empty() {
            let scorer = ModelScorer {
                model: state.model.clone(),
                frame_size: config.frame_size(),
            };
            let scores = eval::score_videos(&val_set, &scorer, config.windows())?;
            let auc = eval::auc(&scores).unwrap_or(f64::NAN);
            let acc = eval::acc(&scores, eval::DEFAULT_THRESHOLD)?;
            append(&val_path, &format!("{epoch},{},{auc},{acc}\n", scores.len()))?;
            if state.best_val_auc.is_none_or(|b| auc > b) {
                state.best_val_auc = Some(auc);
                state.stale_epochs = 0;
            } else {
                state.stale_epochs += 1;
            }
        }
        let ckpt = state.to_checkpoint(config);
        let path = out.join(epoch_checkpoint_name(epoch));
        ckpt.save(&path)?;
        last = out.join("last.ckpt");
        ckpt.save(&last)?;
        if state.stale_epochs == 0 && state.best_val_auc.is_some() {
            ckpt.save(&out.join("best.ckpt"))?;
        }
        if config.early_stop_patience > 0 && state.stale_epochs >= config.early_stop_patience {
            stopped_early = true;
        }
    }
    if !last.exists() {
        state.to_checkpoint(config).save(&last)?;
    }
    Ok(TrainOutcome {
        last_checkpoint: last,
        metrics,
        val: val_path,
        epochs_run: state.epoch + 1 - first,
        stopped_early,
    })
}
