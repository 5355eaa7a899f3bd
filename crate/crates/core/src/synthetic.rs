//! Seeded synthetic data for tests, benchmarks and demos.

use std::io::Write;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market::{
    EodRecord, Example, FeatureVector, Label, SplitExamples, StockSeries, NUM_FEATURES,
};

/// Feature direction of an up-trending regime: positive daily changes, price
/// above its trailing averages.
const TREND_PATTERN: [f64; NUM_FEATURES] =
    [0.2, 0.5, -0.5, 1.0, 1.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0];

/// Two regimes whose windows drift in opposite directions along a fixed
/// feature pattern, with Gaussian noise and randomly flipped labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub examples: usize,
    pub lag: usize,
    /// Fraction of labels flipped.
    pub label_noise: f64,
    /// Per-day drift along the trend pattern.
    pub drift: f64,
    /// Per-feature Gaussian noise.
    pub noise: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            examples: 2000,
            lag: 5,
            label_noise: 0.1,
            drift: 0.004,
            noise: 0.01,
            train_fraction: 0.7,
            val_fraction: 0.15,
        }
    }
}

/// Generates the task and splits it chronologically by anchor date.
pub fn two_regime(task: &SyntheticTask, seed: u64) -> SplitExamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date");
    let n_train = (task.examples as f64 * task.train_fraction).round() as usize;
    let n_val = (task.examples as f64 * task.val_fraction).round() as usize;

    let mut out = SplitExamples::default();
    for i in 0..task.examples {
        let regime = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let window = (0..task.lag)
            .map(|_| {
                FeatureVector(std::array::from_fn(|k| {
                    let z: f64 = rng.sample(StandardNormal);
                    regime * task.drift * TREND_PATTERN[k] + task.noise * z
                }))
            })
            .collect();
        let flipped = rng.random_bool(task.label_noise);
        let sign = if flipped { -regime } else { regime };
        let label = Label::from_score(sign);
        let ex = Example {
            stock_id: format!("SYN{:02}", i % 20),
            anchor_date: start + Days::new(i as u64),
            window,
            label,
            movement_percent: sign,
        };
        if i < n_train {
            out.train.push(ex);
        } else if i < n_train + n_val {
            out.validation.push(ex);
        } else {
            out.test.push(ex);
        }
    }
    out
}

/// Random-walk prices for `stocks` stocks over `days` consecutive weekdays.
///
/// Daily log-returns follow a persistent two-state drift so movements carry
/// some serial structure. A stock named `S{i}` skips every `gap`-th day when
/// `gap_stock == Some(i)`, which exercises alignment.
pub fn price_fixture(
    stocks: usize,
    days: usize,
    seed: u64,
    gap_stock: Option<(usize, usize)>,
) -> Vec<StockSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let calendar = weekdays(
        NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
        days,
    );
    (0..stocks)
        .map(|s| {
            let mut price = 20.0 + 10.0 * s as f64;
            let mut factor = 1.0;
            let mut regime = 1.0;
            let mut records = Vec::with_capacity(days);
            for (d, &date) in calendar.iter().enumerate() {
                if rng.random_bool(0.1) {
                    regime = -regime;
                }
                let z: f64 = rng.sample(StandardNormal);
                let ret = 0.002 * regime + 0.012 * z;
                let open = price;
                let close = price * ret.exp();
                let spread = 0.004 * rng.random::<f64>();
                // occasional dividend-style adjustment so adj_close departs from close
                if rng.random_bool(0.02) {
                    factor *= 0.99;
                }
                let record = EodRecord {
                    date,
                    open: round4(open),
                    high: round4(open.max(close) * (1.0 + spread)),
                    low: round4(open.min(close) * (1.0 - spread)),
                    close: round4(close),
                    adj_close: round4(close * factor),
                    volume: (1e5 * (1.0 + rng.random::<f64>())).round(),
                };
                price = close;
                let skip =
                    matches!(gap_stock, Some((g, every)) if g == s && d % every == every - 1);
                if !skip {
                    records.push(record);
                }
            }
            StockSeries {
                stock: format!("S{s}"),
                records,
            }
        })
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    use chrono::Datelike;
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if d.weekday().number_from_monday() <= 5 {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Writes series in the combined `stock,date,open,high,low,close,adj_close,volume` layout.
pub fn write_eod_csv(path: &Path, series: &[StockSeries]) -> Result<()> {
    let mut text = String::from("stock,date,open,high,low,close,adj_close,volume\n");
    for s in series {
        for r in &s.records {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.stock, r.date, r.open, r.high, r.low, r.close, r.adj_close, r.volume
            ));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
