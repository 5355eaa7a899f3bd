//! Two-stage hyperparameter search on validation accuracy.
//!
//! Stage one trains normal models over hidden size, lag and L2 weight. Stage
//! two keeps the winning triple and trains adversarial models over the
//! perturbation weight and radius.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{predict, MetricsReport};
use crate::market::{SplitExamples, NUM_FEATURES};
use crate::nn::{Model, ModelDims};
use crate::train::trainer::{train, TrainConfig, TrainMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub hidden: Vec<usize>,
    pub lag: Vec<usize>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            hidden: vec![4, 8, 16, 32],
            lag: vec![2, 3, 4, 5, 10, 15],
            lambda: vec![0.001, 0.01, 0.1, 1.0],
            beta: vec![0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0],
            epsilon: vec![0.001, 0.005, 0.01, 0.05, 0.1],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("hidden", self.hidden.is_empty()),
            ("lag", self.lag.is_empty()),
            ("lambda", self.lambda.is_empty()),
            ("beta", self.beta.is_empty()),
            ("epsilon", self.epsilon.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("grid list `{name}` is empty")));
        }
        if self.hidden.contains(&0) || self.lag.contains(&0) {
            return Err(Error::Config("grid sizes must be >= 1".into()));
        }
        let reals = self.lambda.iter().chain(&self.beta).chain(&self.epsilon);
        if reals.into_iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("grid weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Total number of trained cells across both stages.
    pub fn num_cells(&self) -> usize {
        self.hidden.len() * self.lag.len() * self.lambda.len()
            + self.beta.len() * self.epsilon.len()
    }
}

/// One trained configuration. Stage-one cells carry `beta = epsilon = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hidden: usize,
    pub lag: usize,
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub val_acc: f64,
    pub val_mcc: f64,
}

impl GridCell {
    /// Preference order: higher accuracy, then smaller U, smaller T, then
    /// smaller (λ, β, ε) lexicographically.
    fn cmp_preference(&self, other: &GridCell) -> Ordering {
        other
            .val_acc
            .total_cmp(&self.val_acc)
            .then(self.hidden.cmp(&other.hidden))
            .then(self.lag.cmp(&other.lag))
            .then(self.lambda.total_cmp(&other.lambda))
            .then(self.beta.total_cmp(&other.beta))
            .then(self.epsilon.total_cmp(&other.epsilon))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub cells: Vec<GridCell>,
    pub best_normal: GridCell,
    pub best: GridCell,
}

fn pick_best(cells: &[GridCell]) -> GridCell {
    *cells
        .iter()
        .min_by(|a, b| a.cmp_preference(b))
        .expect("grid stages are non-empty")
}

/// Runs both stages. `mapping` is the mapping-layer width, or `None` to use
/// the hidden size. `data_for_lag` supplies the labelled splits for a lag.
pub fn grid_search<F>(
    grid: &GridSpec,
    base: &TrainConfig,
    mapping: Option<usize>,
    data_for_lag: F,
) -> Result<GridOutcome>
where
    F: Fn(usize) -> Result<SplitExamples>,
{
    grid.validate()?;
    base.validate()?;
    let mut data = BTreeMap::new();
    for &lag in &grid.lag {
        if let std::collections::btree_map::Entry::Vacant(slot) = data.entry(lag) {
            let split = data_for_lag(lag)?;
            if split.train.is_empty() || split.validation.is_empty() {
                return Err(Error::Data(format!(
                    "lag {lag}: grid search needs training and validation examples"
                )));
            }
            slot.insert(split);
        }
    }

    let run = |hidden: usize, lag: usize, lambda: f64, beta: f64, epsilon: f64, mode| {
        let split = &data[&lag];
        let dims = ModelDims::attentive(NUM_FEATURES, mapping.unwrap_or(hidden), hidden, lag);
        let init = Model::init(dims, base.seed)?;
        let cfg = TrainConfig {
            alpha: lambda,
            beta,
            epsilon,
            mode,
            ..base.clone()
        };
        let out = train(init, &split.train, &split.validation, &cfg)?;
        let report = MetricsReport::from_records(&predict(&out.best, &split.validation)?)?;
        log::info!(
            "grid U={hidden} T={lag} lambda={lambda} beta={beta} eps={epsilon}: acc {:.2}",
            report.acc
        );
        Ok(GridCell {
            hidden,
            lag,
            lambda,
            beta,
            epsilon,
            val_acc: report.acc,
            val_mcc: report.mcc,
        })
    };

    let mut stage1 = Vec::new();
    for &u in &grid.hidden {
        for &t in &grid.lag {
            for &l in &grid.lambda {
                stage1.push((u, t, l));
            }
        }
    }
    let cells1 = stage1
        .par_iter()
        .map(|&(u, t, l)| run(u, t, l, 0.0, 0.0, TrainMode::Normal))
        .collect::<Result<Vec<_>>>()?;
    let best_normal = pick_best(&cells1);

    let mut stage2 = Vec::new();
    for &b in &grid.beta {
        for &e in &grid.epsilon {
            stage2.push((b, e));
        }
    }
    let cells2 = stage2
        .par_iter()
        .map(|&(b, e)| {
            run(
                best_normal.hidden,
                best_normal.lag,
                best_normal.lambda,
                b,
                e,
                TrainMode::Adversarial,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let best = pick_best(&cells2);

    let mut cells = cells1;
    cells.extend(cells2);
    Ok(GridOutcome {
        cells,
        best_normal,
        best,
    })
}

/// Writes `U,T,lambda,beta,epsilon,val_acc,val_mcc`, one row per cell.
pub fn write_grid(path: &Path, cells: &[GridCell]) -> Result<()> {
    let mut text = String::from("U,T,lambda,beta,epsilon,val_acc,val_mcc\n");
    for c in cells {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.hidden, c.lag, c.lambda, c.beta, c.epsilon, c.val_acc, c.val_mcc
        ));
    }
    crate::eval::write_text(path, &text)
}
