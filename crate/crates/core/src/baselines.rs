//! Technical-indicator baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::PredictionRecord;
use crate::market::{Dataset, Example, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    pub mom_window: usize,
    pub mr_window: usize,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        IndicatorConfig {
            mom_window: 10,
            mr_window: 30,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mom_window < 2 || self.mr_window < 2 {
            return Err(Error::Config(format!(
                "indicator windows must be >= 2, got {} / {}",
                self.mom_window, self.mr_window
            )));
        }
        Ok(())
    }
}

/// Momentum: the sign of the `window`-day change in adjusted close, ties up.
pub fn mom_predict(adj_close: &[f64], t: usize, window: usize) -> Result<Label> {
    if t >= adj_close.len() || t < window {
        return Err(Error::Window {
            needed: window + 1,
            available: (t + 1).min(adj_close.len()),
        });
    }
    Ok(Label::from_score(adj_close[t] - adj_close[t - window]))
}

/// Mean reversion: bets against the gap between today's adjusted close and
/// its trailing `window`-day mean, ties up.
pub fn mr_predict(adj_close: &[f64], t: usize, window: usize) -> Result<Label> {
    if t >= adj_close.len() || t + 1 < window {
        return Err(Error::Window {
            needed: window,
            available: (t + 1).min(adj_close.len()),
        });
    }
    let mean = adj_close[t + 1 - window..=t].iter().sum::<f64>() / window as f64;
    let gap = adj_close[t] - mean;
    Ok(if gap > 0.0 { Label::Down } else { Label::Up })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Indicator {
    Momentum,
    MeanReversion,
}

impl Indicator {
    pub fn name(self) -> &'static str {
        match self {
            Indicator::Momentum => "MOM",
            Indicator::MeanReversion => "MR",
        }
    }
}

/// Indicator predictions for dataset examples, encoded as ±1 confidences.
pub fn indicator_records(
    dataset: &Dataset,
    examples: &[Example],
    indicator: Indicator,
    cfg: &IndicatorConfig,
) -> Result<Vec<PredictionRecord>> {
    examples
        .iter()
        .map(|ex| {
            let history = dataset
                .history_until(&ex.stock_id, ex.anchor_date)
                .ok_or_else(|| {
                    Error::Artifact(format!(
                        "no price history for {} on {}",
                        ex.stock_id, ex.anchor_date
                    ))
                })?;
            let t = history.len() - 1;
            let label = match indicator {
                Indicator::Momentum => mom_predict(history, t, cfg.mom_window)?,
                Indicator::MeanReversion => mr_predict(history, t, cfg.mr_window)?,
            };
            Ok(PredictionRecord::new(ex, label.sign()))
        })
        .collect()
}
