//! Accuracy, MCC, robustness under attack, confidence distributions and
//! multi-run summaries.

use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{Example, Label};
use crate::nn::Model;
use crate::train::perturb::gen_adversarial;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub stock_id: String,
    pub anchor_date: NaiveDate,
    pub label: Label,
    pub confidence: f64,
    pub predicted: Label,
}

impl PredictionRecord {
    pub fn new(ex: &Example, confidence: f64) -> Self {
        PredictionRecord {
            stock_id: ex.stock_id.clone(),
            anchor_date: ex.anchor_date,
            label: ex.label,
            confidence,
            predicted: Label::from_score(confidence),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.label == self.predicted
    }
}

/// Binary confusion counts with "up" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_records(records: &[PredictionRecord]) -> Self {
        records.iter().fold(Confusion::default(), |mut c, r| {
            match (r.label, r.predicted) {
                (Label::Up, Label::Up) => c.tp += 1,
                (Label::Down, Label::Down) => c.tn += 1,
                (Label::Down, Label::Up) => c.fp += 1,
                (Label::Up, Label::Down) => c.fn_ += 1,
            }
            c
        })
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Percent correct.
    pub fn accuracy(&self) -> Result<f64> {
        let n = self.total();
        if n == 0 {
            return Err(Error::Contract("accuracy of an empty set".into()));
        }
        Ok(100.0 * (self.tp + self.tn) as f64 / n as f64)
    }

    /// Matthews correlation; zero whenever a marginal count is zero.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }
}

pub fn accuracy(records: &[PredictionRecord]) -> Result<f64> {
    Confusion::from_records(records).accuracy()
}

pub fn mcc(records: &[PredictionRecord]) -> f64 {
    Confusion::from_records(records).mcc()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Percent in `[0, 100]`.
    pub acc: f64,
    pub mcc: f64,
    pub n: u64,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self> {
        let confusion = Confusion::from_records(records);
        Ok(MetricsReport {
            acc: confusion.accuracy()?,
            mcc: confusion.mcc(),
            n: confusion.total(),
            confusion,
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Acc {:.2}  MCC {:.4}  (n={}, TP={} TN={} FP={} FN={})",
            self.acc,
            self.mcc,
            self.n,
            self.confusion.tp,
            self.confusion.tn,
            self.confusion.fp,
            self.confusion.fn_
        )
    }
}

/// Clean predictions of `model` on every example, in order.
pub fn predict(model: &Model, examples: &[Example]) -> Result<Vec<PredictionRecord>> {
    examples
        .par_iter()
        .map(|ex| Ok(PredictionRecord::new(ex, model.predict(&ex.window)?)))
        .collect()
}

/// Predictions after moving each representation by its fast-gradient
/// perturbation against `model`. Examples already outside the margin are left
/// untouched.
pub fn predict_attacked(
    model: &Model,
    examples: &[Example],
    epsilon: f64,
) -> Result<Vec<PredictionRecord>> {
    examples
        .par_iter()
        .map(|ex| {
            let trace = model.forward(&ex.window)?;
            let score = match gen_adversarial(model, &trace, ex.target(), epsilon)? {
                Some(adv) => adv.score,
                None => trace.score,
            };
            Ok(PredictionRecord::new(ex, score))
        })
        .collect()
}

/// Relative change `(attacked - clean) / clean`; `None` when `clean` is zero.
pub fn rpd(clean: f64, attacked: f64) -> Option<f64> {
    if clean == 0.0 {
        None
    } else {
        Some((attacked - clean) / clean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpdReport {
    pub acc: Option<f64>,
    pub mcc: Option<f64>,
}

impl RpdReport {
    pub fn between(clean: &MetricsReport, attacked: &MetricsReport) -> Self {
        RpdReport {
            acc: rpd(clean.acc, attacked.acc),
            mcc: rpd(clean.mcc, attacked.mcc),
        }
    }
}

/// Relative improvement of `value` over `reference`, in percent.
pub fn relative_improvement(value: f64, reference: f64) -> Option<f64> {
    if reference == 0.0 {
        None
    } else {
        Some(100.0 * (value - reference) / reference.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceHistogram {
    pub bins: Vec<HistogramBin>,
    pub min_abs: f64,
    pub max_abs: f64,
    pub mean_abs: f64,
}

/// Equal-width histogram of confidences over `[low, high]`.
///
/// Values outside the range are counted in the nearest edge bin, so counts
/// always sum to the number of records.
pub fn confidence_histogram(
    records: &[PredictionRecord],
    bins: usize,
    low: f64,
    high: f64,
) -> Result<ConfidenceHistogram> {
    if bins < 2 {
        return Err(Error::Contract(format!("need at least 2 bins, got {bins}")));
    }
    if !(low.is_finite() && high.is_finite()) || low >= high {
        return Err(Error::Contract(format!(
            "empty histogram range [{low}, {high}]"
        )));
    }
    let width = (high - low) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            low: low + i as f64 * width,
            high: if i + 1 == bins {
                high
            } else {
                low + (i + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for r in records {
        let pos = ((r.confidence - low) / width).floor();
        let idx = if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos as usize).min(bins - 1)
        };
        out[idx].count += 1;
    }

    let abs: Vec<f64> = records.iter().map(|r| r.confidence.abs()).collect();
    let (min_abs, max_abs, mean_abs) = if abs.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            abs.iter().copied().fold(f64::INFINITY, f64::min),
            abs.iter().copied().fold(0.0, f64::max),
            abs.iter().sum::<f64>() / abs.len() as f64,
        )
    };
    Ok(ConfidenceHistogram {
        bins: out,
        min_abs,
        max_abs,
        mean_abs,
    })
}

/// Mean and sample standard deviation over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl RunSummary {
    /// A single run reports a standard deviation of zero.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("summary of zero runs".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(RunSummary {
            mean,
            std,
            runs: values.len(),
        })
    }

    /// Renders as `mean±std` with the standard deviation in short scientific form.
    pub fn format(&self, decimals: usize) -> String {
        format!("{:.*}±{:.0e}", decimals, self.mean, self.std)
    }
}

/// Per-metric summaries over several runs.
pub fn multi_run_report(runs: &[MetricsReport]) -> Result<(RunSummary, RunSummary)> {
    let acc: Vec<f64> = runs.iter().map(|r| r.acc).collect();
    let mcc: Vec<f64> = runs.iter().map(|r| r.mcc).collect();
    Ok((
        RunSummary::from_values(&acc)?,
        RunSummary::from_values(&mcc)?,
    ))
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["stock", "date", "label", "confidence", "predicted"])
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.stock_id.clone(),
            r.anchor_date.to_string(),
            r.label.to_string(),
            r.confidence.to_string(),
            r.predicted.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_histogram(path: &Path, hist: &ConfidenceHistogram) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["bin_low", "bin_high", "count"])
        .map_err(|e| csv_err(path, e))?;
    for b in &hist.bins {
        w.write_record([b.low.to_string(), b.high.to_string(), b.count.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes text to a file, mapping failures to [`Error::Io`].
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: i8, predicted: i8) -> PredictionRecord {
        let label = Label::try_from(label).unwrap();
        let score = if predicted > 0 { 0.5 } else { -0.5 };
        PredictionRecord {
            stock_id: "X".into(),
            anchor_date: NaiveDate::from_ymd_opt(2015, 10, 1).unwrap(),
            label,
            confidence: score,
            predicted: Label::from_score(score),
        }
    }

    fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Vec<PredictionRecord> {
        let mut v = Vec::new();
        v.extend((0..tp).map(|_| rec(1, 1)));
        v.extend((0..tn).map(|_| rec(-1, -1)));
        v.extend((0..fp).map(|_| rec(-1, 1)));
        v.extend((0..fn_).map(|_| rec(1, -1)));
        v
    }

    #[test]
    fn accuracy_examples() {
        let r = vec![rec(1, 1), rec(-1, 1), rec(-1, -1)];
        assert_eq!(accuracy(&r).unwrap(), 200.0 / 3.0);
        assert_eq!(accuracy(&from_counts(3, 3, 0, 0)).unwrap(), 100.0);
        assert_eq!(accuracy(&from_counts(0, 0, 2, 5)).unwrap(), 0.0);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc(&from_counts(4, 6, 0, 0)), 1.0);
        assert_eq!(mcc(&from_counts(0, 0, 4, 6)), -1.0);
        // (6 - 1) / sqrt(4·4·3·3) = 5/12
        assert_eq!(mcc(&from_counts(3, 2, 1, 1)), 5.0 / 12.0);
        assert_eq!(mcc(&from_counts(5, 0, 3, 0)), 0.0);
    }

    #[test]
    fn zero_confidence_is_up() {
        let ex = Example {
            stock_id: "A".into(),
            anchor_date: NaiveDate::from_ymd_opt(2015, 1, 2).unwrap(),
            window: vec![],
            label: Label::Down,
            movement_percent: -1.0,
        };
        assert_eq!(PredictionRecord::new(&ex, 0.0).predicted, Label::Up);
    }

    #[test]
    fn rpd_examples() {
        assert_eq!(rpd(50.0, 50.0), Some(0.0));
        assert!((rpd(50.0, 45.0).unwrap() + 0.10).abs() < 1e-15);
        assert_eq!(rpd(0.0, 0.1), None);
    }

    #[test]
    fn relative_improvement_over_best_baseline() {
        let ri = relative_improvement(57.20, 54.96).unwrap();
        assert!((ri - 4.0757).abs() < 1e-3);
        assert!((relative_improvement(0.1483, 0.1043).unwrap() - 42.186).abs() < 1e-2);
    }

    #[test]
    fn histogram_single_and_symmetric() {
        let mut r = rec(1, 1);
        r.confidence = 0.2;
        let h = confidence_histogram(&[r], 10, -1.0, 1.0).unwrap();
        let hit: Vec<_> = h.bins.iter().filter(|b| b.count == 1).collect();
        assert_eq!(hit.len(), 1);
        assert!(hit[0].low <= 0.2 && 0.2 < hit[0].high);

        let recs: Vec<_> = [-0.35, 0.35, -0.8, 0.8, 5.0, -5.0]
            .iter()
            .map(|&c| {
                let mut r = rec(1, 1);
                r.confidence = c;
                r
            })
            .collect();
        let h = confidence_histogram(&recs, 8, -1.0, 1.0).unwrap();
        let counts: Vec<u64> = h.bins.iter().map(|b| b.count).collect();
        let mut rev = counts.clone();
        rev.reverse();
        assert_eq!(counts, rev);
        assert_eq!(counts.iter().sum::<u64>(), 6);
        assert_eq!(h.max_abs, 5.0);
        assert!(confidence_histogram(&recs, 1, -1.0, 1.0).is_err());
    }

    #[test]
    fn run_summaries() {
        let s = RunSummary::from_values(&[50.0, 60.0]).unwrap();
        assert_eq!(s.mean, 55.0);
        assert!((s.std - 50.0f64.sqrt()).abs() < 1e-12);
        let s = RunSummary::from_values(&[53.1, 53.1, 53.1]).unwrap();
        assert_eq!(s.std, 0.0);
        let s = RunSummary::from_values(&[57.2]).unwrap();
        assert_eq!((s.mean, s.std), (57.2, 0.0));
        assert_eq!(
            RunSummary::from_values(&[50.0, 60.0]).unwrap().format(2),
            "55.00±7e0"
        );
    }
}
