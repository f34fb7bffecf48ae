//! Teacher-forced training with Adam, early stopping and checkpointing.

mod adam;
mod data;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use data::{epoch_order, load_examples, make_batch, Batch, Example};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, ForwardCtx, Model, ModelConfig};
use crate::tensor::{Real, Tape};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const EPOCH_LOG: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub early_stop_delta: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            early_stop_delta: 0.2,
            early_stop_patience: 10,
            max_epochs: 100,
            seed: 0,
            clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.early_stop_delta >= 0.0
            && self.early_stop_patience >= 1
            && self.clip_norm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Contents of a `--config` file: a `[train]` and a `[model]` table, both
/// optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl TrainFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: TrainFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        f.train.validate()?;
        f.model.validate()?;
        Ok(f)
    }
}

/// Patience rule: an epoch improves when `val < best - delta`; `best` only
/// moves on improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub delta: f64,
    pub patience: usize,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(delta: f64, patience: usize) -> Self {
        Self {
            delta,
            patience,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Records one validation loss; true when training should stop.
    pub fn update(&mut self, val: f64) -> bool {
        if val < self.best - self.delta {
            self.best = val;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Checkpoint with the lowest validation loss; the starting weights when
    /// no epoch ran.
    pub best_checkpoint: PathBuf,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

/// Token-weighted mean cross-entropy over `examples` in evaluation mode.
pub fn mean_loss<T: Real>(model: &Model<T>, examples: &[Example], batch_size: usize) -> Result<f64> {
    contract!(!examples.is_empty(), "no examples to evaluate");
    let mut total = 0.0;
    let mut tokens = 0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let b = make_batch::<T>(&refs)?;
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let loss = model.loss(&bound, &b.src, &b.inputs, &b.targets, &mut ForwardCtx::eval())?;
        total += loss.item().f64() * b.tokens as f64;
        tokens += b.tokens;
    }
    Ok(total / tokens as f64)
}

fn dropout_rng(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_D80F);
    rng.set_stream(((epoch as u64) << 32) | batch as u64);
    rng
}

/// One optimizer step on a batch; returns the batch loss before the update.
pub fn train_step<T: Real>(
    model: &mut Model<T>,
    batch: &Batch<T>,
    state: &mut AdamState,
    cfg: &TrainConfig,
    ctx: &mut ForwardCtx,
) -> Result<f64> {
    let (value, grads) = {
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let loss = model.loss(&bound, &batch.src, &batch.inputs, &batch.targets, ctx)?;
        let value = loss.item().f64();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value}")));
        }
        (value, loss.backward()?)
    };
    model.params.zero_grad();
    grads.accumulate_into(&mut model.params);
    if cfg.clip_norm > 0.0 {
        clip_grad_norm(&mut model.params, cfg.clip_norm);
    }
    adam_step(&mut model.params, state, &cfg.adam())?;
    Ok(value)
}

fn create_out(out: &Path) -> Result<fs::File> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log = out.join(EPOCH_LOG);
    fs::File::create(&log).map_err(|e| Error::io(&log, e))
}

/// Trains `model` in place. Writes `best.ckpt` (lowest validation loss),
/// `last.ckpt` and one JSON line per epoch into `out`.
pub fn train<T: Real>(
    model: &mut Model<T>,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    out: impl AsRef<Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    contract!(!train_set.is_empty(), "training set is empty");
    contract!(!val_set.is_empty(), "validation set is empty");
    let out = out.as_ref();
    let mut log = create_out(out)?;
    let log_path = out.join(EPOCH_LOG);
    let best_path = out.join(BEST_CHECKPOINT);
    save_checkpoint(model, &best_path)?;

    let mut state = AdamState::new();
    let mut stopper = EarlyStopping::new(cfg.early_stop_delta, cfg.early_stop_patience);
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let order = epoch_order(train_set.len(), cfg.seed, epoch);
        let mut total = 0.0;
        let mut tokens = 0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let batch = make_batch::<T>(&refs)?;
            let mut ctx = ForwardCtx::train(model.config.dropout, dropout_rng(cfg.seed, epoch, bi));
            let loss = train_step(model, &batch, &mut state, cfg, &mut ctx)
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {bi}: {m}")),
                    e => e,
                })?;
            total += loss * batch.tokens as f64;
            tokens += batch.tokens;
        }
        let val_loss = mean_loss(model, val_set, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        let rec = EpochRecord {
            epoch,
            train_loss: total / tokens as f64,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} ({:.1} s)",
            rec.train_loss,
            rec.val_loss,
            rec.wall_seconds
        );
        writeln!(log, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(&log_path, e))?;
        epochs.push(rec);

        if best.is_none_or(|(_, b)| val_loss < b) {
            best = Some((epoch, val_loss));
            save_checkpoint(model, &best_path)?;
        }
        if stopper.update(val_loss) {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    save_checkpoint(model, out.join(LAST_CHECKPOINT))?;
    let report = TrainReport {
        epochs,
        stop_reason,
        best_checkpoint: best_path,
        best_epoch: best.map(|b| b.0),
        best_val_loss: best.map(|b| b.1),
    };
    let rp = out.join("report.json");
    fs::write(&rp, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&rp, e))?;
    Ok(report)
}

/// Loads manifests and trains.
pub fn train_manifests<T: Real>(
    model: &mut Model<T>,
    train_manifest: impl AsRef<Path>,
    val_manifest: impl AsRef<Path>,
    cfg: &TrainConfig,
    out: impl AsRef<Path>,
) -> Result<TrainReport> {
    let tr = load_examples(train_manifest)?;
    let va = load_examples(val_manifest)?;
    train(model, &tr, &va, cfg, out)
}

/// Continues training from a checkpoint with a fresh optimizer. When
/// `expected` is given, the checkpoint's architecture must match it.
pub fn finetune<T: Real>(
    checkpoint: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    out: impl AsRef<Path>,
) -> Result<(Model<T>, TrainReport)> {
    let mut model = match expected {
        Some(c) => load_checkpoint_expecting(checkpoint, c)?,
        None => load_checkpoint(checkpoint)?,
    };
    let report = train(&mut model, train_set, val_set, cfg, out)?;
    Ok((model, report))
}
