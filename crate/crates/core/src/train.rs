//! Fine-tuning loop: seeded shuffling, AdamW with decoupled decay, per-epoch
//! evaluation loss and checkpoints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::Var;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledExample, SplitDataset, DEFAULT_SEED};
use crate::model::encoder::Mode;
use crate::model::loss::{combined_loss_tensor, target_tensors};
use crate::model::DualHeadModel;
use crate::plot::{self, Series};
use crate::{Error, Result};

pub const LEARNING_CURVE_CSV: &str = "learning_curve.csv";
pub const LEARNING_CURVE_PNG: &str = "learning_curve.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub max_len: usize,
    pub device: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 2e-5,
            epochs: 3,
            weight_decay: 0.01,
            seed: DEFAULT_SEED,
            max_len: 128,
            device: "cpu".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.max_len < 2 {
            return Err(Error::InvalidConfig("max_len must be at least 2".into()));
        }
        if self.device != "cpu" {
            return Err(Error::InvalidConfig(format!("unsupported device {:?}; only cpu is available", self.device)));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let config: TrainConfig = serde_json::from_slice(&bytes)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean of the epoch's per-step batch losses.
    pub train_loss: f64,
    /// Mean per-example loss over the validation partition, inference mode.
    pub eval_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub checkpoints: Vec<PathBuf>,
    pub final_dir: PathBuf,
}

/// Biases and LayerNorm parameters are exempt from weight decay.
pub fn decays(name: &str) -> bool {
    !(name.ends_with(".bias") || name.contains("LayerNorm"))
}

/// AdamW over two parameter groups that differ only in weight decay.
pub struct GroupedAdamW {
    decayed: AdamW,
    exempt: AdamW,
}

impl GroupedAdamW {
    pub fn new(vars: Vec<(String, Var)>, learning_rate: f64, weight_decay: f64) -> Result<Self> {
        let (with, without): (Vec<_>, Vec<_>) = vars.into_iter().partition(|(n, _)| decays(n));
        let params = |wd| ParamsAdamW {
            lr: learning_rate,
            weight_decay: wd,
            ..ParamsAdamW::default()
        };
        Ok(GroupedAdamW {
            decayed: AdamW::new(with.into_iter().map(|(_, v)| v).collect(), params(weight_decay))?,
            exempt: AdamW::new(without.into_iter().map(|(_, v)| v).collect(), params(0.0))?,
        })
    }

    pub fn step(&mut self, grads: &candle_core::backprop::GradStore) -> Result<()> {
        self.decayed.step(grads)?;
        self.exempt.step(grads)?;
        Ok(())
    }
}

fn batch_loss(model: &DualHeadModel, batch: &[&LabeledExample], mode: &mut Mode) -> Result<candle_core::Tensor> {
    let inputs: Vec<_> = batch.iter().map(|e| &e.tokens).collect();
    let logits = model.forward_logits(&inputs, mode)?;
    let sev: Vec<_> = batch.iter().map(|e| e.severity).collect();
    let types: Vec<_> = batch.iter().map(|e| e.types).collect();
    let (sev_t, types_t) = target_tensors(&sev, &types, model.dtype(), model.device())?;
    Ok(combined_loss_tensor(&logits, &sev_t, &types_t)?.total)
}

/// Mean per-example combined loss in inference mode.
pub fn evaluation_loss(model: &DualHeadModel, examples: &[LabeledExample], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Data("evaluation partition is empty".into()));
    }
    let mut sum = 0.0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let loss = batch_loss(model, &refs, &mut Mode::Eval)?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
        sum += loss * chunk.len() as f64;
    }
    Ok(sum / examples.len() as f64)
}

/// Fine-tunes `model` in place. Writes `checkpoint-epoch{N}/` per epoch and the
/// final model directly into `out_dir`.
pub fn train(
    model: &mut DualHeadModel,
    dataset: &SplitDataset,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Data("training partition is empty".into()));
    }
    if dataset.validation.is_empty() {
        return Err(Error::Data("validation partition is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut optimizer = GroupedAdamW::new(model.named_vars(), config.learning_rate, config.weight_decay)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let mut step_losses = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            let loss = batch_loss(model, &batch, &mut Mode::Train(&mut dropout_rng))?;
            let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, step {}",
                    step_losses.len() + 1
                )));
            }
            optimizer.step(&loss.backward()?)?;
            step_losses.push(value);
        }
        let eval_loss = evaluation_loss(model, &dataset.validation, config.batch_size)?;
        if !eval_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite evaluation loss at epoch {epoch}")));
        }
        let log = EpochLog {
            epoch,
            train_loss: step_losses.iter().sum::<f64>() / step_losses.len() as f64,
            eval_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train_loss {:.4} eval_loss {:.4} ({:.1}s)",
            log.train_loss,
            log.eval_loss,
            log.wall_seconds
        );
        let checkpoint = out_dir.join(format!("checkpoint-epoch{epoch}"));
        model.save(&checkpoint)?;
        checkpoints.push(checkpoint);
        logs.push(log);
    }
    model.save(out_dir)?;
    Ok(TrainOutcome {
        logs,
        checkpoints,
        final_dir: out_dir.to_path_buf(),
    })
}

/// Writes `learning_curve.csv` and `learning_curve.png` into `dir`; returns the CSV path.
pub fn export_learning_curve(logs: &[EpochLog], dir: &Path) -> Result<PathBuf> {
    if logs.is_empty() {
        return Err(Error::Data("no epoch logs to export".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(LEARNING_CURVE_CSV);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
    for log in logs {
        w.serialize(log).map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let series = |name: &str, f: fn(&EpochLog) -> f64| Series {
        name: name.into(),
        points: logs.iter().map(|l| (l.epoch as f64, f(l))).collect(),
    };
    plot::line_chart(
        &dir.join(LEARNING_CURVE_PNG),
        "Learning curve",
        &[series("train loss", |l| l.train_loss), series("eval loss", |l| l.eval_loss)],
        "Epoch",
        "Loss",
    )?;
    Ok(csv_path)
}

pub fn read_learning_curve(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
        .collect()
}
