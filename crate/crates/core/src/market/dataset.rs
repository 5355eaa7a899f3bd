use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market::align::AlignedMarket;
use crate::market::features::{compute_features, FeatureVector, HISTORY_DAYS, NUM_FEATURES};

pub const DATASET_FORMAT: &str = "alstm-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Direction of the next-day move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Up,
    Down,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Up => 1.0,
            Label::Down => -1.0,
        }
    }

    /// Class of a confidence score; a score of exactly zero counts as up.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Up
        } else {
            Label::Down
        }
    }
}

impl From<Label> for i8 {
    fn from(label: Label) -> i8 {
        match label {
            Label::Up => 1,
            Label::Down => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Label::Up),
            -1 => Ok(Label::Down),
            other => Err(Error::Contract(format!(
                "label must be +1 or -1, got {other}"
            ))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

/// A labeled lag window for one stock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub stock_id: String,
    /// Last day of the lag window.
    pub anchor_date: NaiveDate,
    /// Oldest day first.
    pub window: Vec<FeatureVector>,
    pub label: Label,
    /// Next-day change of adjusted close, in percent.
    pub movement_percent: f64,
}

impl Example {
    pub fn lag(&self) -> usize {
        self.window.len()
    }

    pub fn target(&self) -> f64 {
        self.label.sign()
    }
}

/// Temporal split boundaries and labeling thresholds.
///
/// Boundaries are exclusive upper bounds on the anchor date: train anchors fall
/// before `train_end`, validation anchors in `[train_end, val_end)`, test
/// anchors in `[val_end, test_end)`. Thresholds are percents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: NaiveDate,
    pub val_end: NaiveDate,
    pub test_end: NaiveDate,
    pub lag: usize,
    pub pos_threshold: f64,
    pub neg_threshold: f64,
}

impl SplitSpec {
    pub const DEFAULT_POS_THRESHOLD: f64 = 0.55;
    pub const DEFAULT_NEG_THRESHOLD: f64 = -0.5;

    pub fn validate(&self) -> Result<()> {
        if !(self.train_end < self.val_end && self.val_end < self.test_end) {
            return Err(Error::Config(format!(
                "split boundaries must increase: {} < {} < {}",
                self.train_end, self.val_end, self.test_end
            )));
        }
        if self.lag == 0 {
            return Err(Error::Config("lag must be positive".into()));
        }
        if !(self.pos_threshold > 0.0 && self.neg_threshold < 0.0) {
            return Err(Error::Config(format!(
                "thresholds must satisfy pos > 0 > neg, got {} / {}",
                self.pos_threshold, self.neg_threshold
            )));
        }
        Ok(())
    }

    /// Label for a movement, or `None` when it falls strictly between the thresholds.
    pub fn label_for(&self, movement_percent: f64) -> Option<Label> {
        if movement_percent >= self.pos_threshold {
            Some(Label::Up)
        } else if movement_percent <= self.neg_threshold {
            Some(Label::Down)
        } else {
            None
        }
    }

    pub fn split_of(&self, anchor: NaiveDate) -> Option<Split> {
        if anchor < self.train_end {
            Some(Split::Train)
        } else if anchor < self.val_end {
            Some(Split::Validation)
        } else if anchor < self.test_end {
            Some(Split::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitExamples {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

impl SplitExamples {
    pub fn get(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<Example> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Labels every anchor day of every stock and assigns it to a split.
///
/// Anchors need a full lag of feature days behind them and one trading day
/// after them for the label. Movements strictly between the thresholds are
/// dropped. Examples are ordered by stock, then anchor date.
pub fn label_and_window(market: &AlignedMarket, spec: &SplitSpec) -> Result<SplitExamples> {
    spec.validate()?;
    let mut out = SplitExamples::default();
    let first_anchor = HISTORY_DAYS - 1 + spec.lag - 1;

    for series in &market.series {
        let records = &series.records;
        if records.len() < first_anchor + 2 {
            continue;
        }
        let features = (first_anchor + 1 - spec.lag..records.len())
            .map(|t| compute_features(records, t))
            .collect::<Result<Vec<_>>>()?;
        let offset = first_anchor + 1 - spec.lag;

        for anchor in first_anchor..records.len() - 1 {
            let Some(split) = spec.split_of(records[anchor].date) else {
                continue;
            };
            let movement =
                100.0 * (records[anchor + 1].adj_close / records[anchor].adj_close - 1.0);
            let Some(label) = spec.label_for(movement) else {
                continue;
            };
            let start = anchor + 1 - spec.lag - offset;
            out.get_mut(split).push(Example {
                stock_id: series.stock.clone(),
                anchor_date: records[anchor].date,
                window: features[start..start + spec.lag].to_vec(),
                label,
                movement_percent: movement,
            });
        }
    }

    for split in Split::ALL {
        if out.get(split).is_empty() {
            log::warn!("{} split has no labeled examples", split.name());
        }
    }
    Ok(out)
}

/// Adjusted-close history of one stock over the aligned calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTrack {
    pub stock: String,
    pub adj_close: Vec<f64>,
}

/// On-disk container for a built dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub format: String,
    pub version: u32,
    pub num_features: usize,
    pub spec: SplitSpec,
    pub excluded_stocks: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub prices: Vec<PriceTrack>,
    pub examples: SplitExamples,
}

impl Dataset {
    pub fn build(market: &AlignedMarket, spec: &SplitSpec) -> Result<Self> {
        let examples = label_and_window(market, spec)?;
        Ok(Dataset {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            num_features: NUM_FEATURES,
            spec: spec.clone(),
            excluded_stocks: market.excluded.clone(),
            calendar: market.calendar.clone(),
            prices: market
                .series
                .iter()
                .map(|s| PriceTrack {
                    stock: s.stock.clone(),
                    adj_close: s.adj_closes(),
                })
                .collect(),
            examples,
        })
    }

    pub fn lag(&self) -> usize {
        self.spec.lag
    }

    /// Adjusted closes of `stock` up to and including `date`.
    pub fn history_until(&self, stock: &str, date: NaiveDate) -> Option<&[f64]> {
        let idx = self.calendar.binary_search(&date).ok()?;
        let track = self.prices.iter().find(|p| p.stock == stock)?;
        Some(&track.adj_close[..=idx])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)
            .map_err(|e| Error::Artifact(format!("cannot serialize dataset: {e}")))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ds: Dataset = serde_json::from_slice(bytes)
            .map_err(|e| Error::Artifact(format!("cannot parse dataset: {e}")))?;
        if ds.format != DATASET_FORMAT || ds.version != DATASET_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported dataset container {} v{}",
                ds.format, ds.version
            )));
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(content_hash(&bytes))
    }

    /// Loads a dataset and returns it with the hash of its file contents.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_bytes(&bytes)?, content_hash(&bytes)))
    }
}

/// Hex SHA-256 of an artifact's bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
