use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Confusion, PredictionRecord};
use crate::market::Example;
use crate::nn::Model;
use crate::train::adam::{adam_step, AdamConfig, AdamState};
use crate::train::loss::hinge;
use crate::train::objective::{
    objective_adversarial, objective_normal, objective_random, ObjectiveValue,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Normal,
    Adversarial,
    RandomPerturbation,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Normal => "normal",
            TrainMode::Adversarial => "adversarial",
            TrainMode::RandomPerturbation => "random_perturbation",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(TrainMode::Normal),
            "adversarial" => Ok(TrainMode::Adversarial),
            "random_perturbation" | "random" => Ok(TrainMode::RandomPerturbation),
            other => Err(Error::Config(format!("unknown training mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 coefficient.
    pub alpha: f64,
    /// Weight of the perturbed-example loss.
    pub beta: f64,
    /// Perturbation radius.
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.01,
            beta: 0.05,
            epsilon: 0.01,
            batch_size: 1024,
            epochs: 150,
            patience: 20,
            seed: 0,
            mode: TrainMode::Normal,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Weight of the perturbed term as actually used; normal training has none.
    pub fn effective_beta(&self) -> f64 {
        match self.mode {
            TrainMode::Normal => 0.0,
            _ => self.beta,
        }
    }
}

/// Losses after one epoch (epoch 0 is the initialization).
///
/// Both losses are the mean clean hinge loss; the training loss additionally
/// carries the L2 term divided by the training-set size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model of the selected epoch.
    pub best: Model,
    pub best_epoch: usize,
    pub curve: Vec<EpochStats>,
}

/// Mean hinge loss and accuracy of `model` on `examples`.
pub fn evaluate_split(model: &Model, examples: &[Example]) -> Result<(f64, f64)> {
    let records = examples
        .par_iter()
        .map(|ex| Ok(PredictionRecord::new(ex, model.predict(&ex.window)?)))
        .collect::<Result<Vec<_>>>()?;
    let loss = records
        .iter()
        .map(|r| hinge(r.label.sign(), r.confidence))
        .sum::<f64>()
        / records.len() as f64;
    Ok((loss, Confusion::from_records(&records).accuracy()?))
}

fn epoch_stats(
    model: &Model,
    epoch: usize,
    train: &[Example],
    val: &[Example],
    alpha: f64,
) -> Result<EpochStats> {
    let (train_loss, _) = evaluate_split(model, train)?;
    let train_loss = train_loss + 0.5 * alpha * model.params.squared_norm() / train.len() as f64;
    let (val_loss, val_acc) = if val.is_empty() {
        (None, None)
    } else {
        let (l, a) = evaluate_split(model, val)?;
        (Some(l), Some(a))
    };
    Ok(EpochStats {
        epoch,
        train_loss,
        val_loss,
        val_acc,
    })
}

/// Seeded mini-batch Adam training with best-validation-accuracy selection.
///
/// Batch losses are scaled by `train.len() / batch.len()` so the L2 weight
/// means the same thing for every batch size. The selected model is the
/// trained epoch with the highest validation accuracy (earliest on ties), or
/// the last epoch when there is no validation data. With zero epochs the
/// initial model is returned.
pub fn train(
    init: Model,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    if let Some(ex) = train.iter().chain(val).find(|ex| ex.lag() != init.dims.lag) {
        return Err(Error::shape(
            "example window",
            &[init.dims.lag],
            &[ex.lag()],
        ));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);

    let mut model = init;
    let mut state = AdamState::new(&model.dims);
    let mut curve = vec![epoch_stats(&model, 0, train, val, cfg.alpha)?];
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_acc = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let scale = train.len() as f64 / batch.len() as f64;
            let value = batch_objective(&model, &batch, cfg, scale, &mut noise_rng)
                .map_err(|e| diverged(epoch, e))?;
            adam_step(&mut model.params, &value.grads, &mut state, &cfg.adam)?;
            if !model.params.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: "parameters became non-finite".into(),
                });
            }
        }

        let stats =
            epoch_stats(&model, epoch, train, val, cfg.alpha).map_err(|e| diverged(epoch, e))?;
        if !stats.train_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("training loss {}", stats.train_loss),
            });
        }
        curve.push(stats);
        log::debug!("epoch {epoch}: {stats:?}");

        let acc = stats.val_acc.unwrap_or(f64::INFINITY);
        if acc > best_acc || stats.val_acc.is_none() {
            best_acc = acc;
            best_epoch = epoch;
            best = model.clone();
        } else if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        curve,
    })
}

fn batch_objective(
    model: &Model,
    batch: &[&Example],
    cfg: &TrainConfig,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ObjectiveValue> {
    match cfg.mode {
        TrainMode::Normal => objective_normal(model, batch, cfg.alpha, scale),
        TrainMode::Adversarial => {
            objective_adversarial(model, batch, cfg.alpha, cfg.beta, cfg.epsilon, scale)
        }
        TrainMode::RandomPerturbation => {
            objective_random(model, batch, cfg.alpha, cfg.beta, cfg.epsilon, scale, rng)
        }
    }
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(detail) => Error::Divergence { epoch, detail },
        other => other,
    }
}

/// Writes `epoch,train_loss,val_loss,val_acc`; missing validation values are empty.
pub fn write_loss_curve(path: &Path, curve: &[EpochStats]) -> Result<()> {
    let mut text = String::from("epoch,train_loss,val_loss,val_acc\n");
    for s in curve {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{}\n",
            s.epoch,
            s.train_loss,
            opt(s.val_loss),
            opt(s.val_acc)
        ));
    }
    crate::eval::write_text(path, &text)
}
