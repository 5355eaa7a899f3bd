use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::eod::EodRecord;

/// Number of daily features.
pub const NUM_FEATURES: usize = 11;

/// Moving-average horizons, in trading days.
pub const MA_WINDOWS: [usize; 6] = [5, 10, 15, 20, 25, 30];

/// Trading days of history (including the current day) a feature vector needs.
pub const HISTORY_DAYS: usize = 30;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "c_open",
    "c_high",
    "c_low",
    "n_close",
    "n_adj_close",
    "5-day",
    "10-day",
    "15-day",
    "20-day",
    "25-day",
    "30-day",
];

/// Price-normalized description of one trading day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Computes the daily features of `records[t]`.
///
/// Intraday shape is relative to the close, day-over-day change uses the
/// previous record, and each k-day entry compares the trailing k-day mean of
/// adjusted close against today's adjusted close.
pub fn compute_features(records: &[EodRecord], t: usize) -> Result<FeatureVector> {
    if t >= records.len() {
        return Err(Error::Contract(format!(
            "day index {t} out of range for {} records",
            records.len()
        )));
    }
    if t + 1 < HISTORY_DAYS {
        return Err(Error::Window {
            needed: HISTORY_DAYS,
            available: t + 1,
        });
    }

    let today = &records[t];
    let prev = &records[t - 1];
    let mut out = [0.0; NUM_FEATURES];
    out[0] = today.open / today.close - 1.0;
    out[1] = today.high / today.close - 1.0;
    out[2] = today.low / today.close - 1.0;
    out[3] = today.close / prev.close - 1.0;
    out[4] = today.adj_close / prev.adj_close - 1.0;
    for (slot, &k) in out[5..].iter_mut().zip(MA_WINDOWS.iter()) {
        // ratios first, so a constant series gives exactly zero
        let sum: f64 = records[t + 1 - k..=t]
            .iter()
            .map(|r| r.adj_close / today.adj_close)
            .sum();
        *slot = sum / k as f64 - 1.0;
    }

    if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "feature {} is not finite on {}",
            FEATURE_NAMES[bad], today.date
        )));
    }
    Ok(FeatureVector(out))
}
