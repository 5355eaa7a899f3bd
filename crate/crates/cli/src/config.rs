//! The flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the config file. Lists are
//! comma-separated. See the README for the full key reference.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use alstm_core::baselines::IndicatorConfig;
use alstm_core::market::{content_hash, SplitSpec, NUM_FEATURES};
use alstm_core::nn::ModelDims;
use alstm_core::train::{GridSpec, TrainConfig};
use alstm_core::{Error, Result};
use chrono::NaiveDate;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Vec<PathBuf>,
    pub out: PathBuf,
    pub split: SplitSpec,
    pub min_coverage: f64,
    /// Mapping width `E`; 0 means "same as `U`".
    pub mapping_dim: usize,
    pub hidden_dim: usize,
    /// Attention projection width `E'`; 0 means "same as `U`".
    pub attention_dim: usize,
    pub attention: bool,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub attack_epsilon: Option<f64>,
    pub indicators: IndicatorConfig,
    pub hist_bins: usize,
    pub hist_range: f64,
    pub grid: GridSpec,
    /// Expected dataset hash; set in run manifests so replays detect drift.
    pub dataset_hash: Option<String>,
}

const KEYS: &[&str] = &[
    "data",
    "out",
    "train_end",
    "val_end",
    "test_end",
    "lag",
    "pos_threshold",
    "neg_threshold",
    "min_coverage",
    "mapping_dim",
    "hidden_dim",
    "attention_dim",
    "attention",
    "alpha",
    "beta",
    "epsilon",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "batch_size",
    "epochs",
    "patience",
    "mode",
    "seed",
    "seeds",
    "attack_epsilon",
    "mom_window",
    "mr_window",
    "hist_bins",
    "hist_range",
    "grid_hidden",
    "grid_lag",
    "grid_lambda",
    "grid_beta",
    "grid_epsilon",
    "dataset_hash",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    /// Parses config text; `origin` only labels error messages.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            raw.set(key, value, base).map_err(err)?;
        }
        raw.finish()
    }

    pub fn model_dims(&self) -> ModelDims {
        self.dims_for(self.hidden_dim, self.split.lag)
    }

    pub fn dims_for(&self, hidden: usize, lag: usize) -> ModelDims {
        let or_u = |v: usize| if v == 0 { hidden } else { v };
        if self.attention {
            ModelDims {
                attention: or_u(self.attention_dim),
                ..ModelDims::attentive(NUM_FEATURES, or_u(self.mapping_dim), hidden, lag)
            }
        } else {
            ModelDims::plain(NUM_FEATURES, or_u(self.mapping_dim), hidden, lag)
        }
    }

    /// Seeds of the runs this config describes.
    pub fn runs(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.train.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Restricts the config to a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.seeds = vec![seed];
        self
    }

    /// Checks every downstream precondition before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return Err(Error::Config("`data` lists no input files".into()));
        }
        self.split.validate()?;
        if !(self.min_coverage > 0.0 && self.min_coverage <= 1.0) {
            return Err(Error::Config(format!(
                "min_coverage must be in (0, 1], got {}",
                self.min_coverage
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        if !self.attention && self.attention_dim != 0 {
            return Err(Error::Config(
                "attention_dim is set but attention is disabled".into(),
            ));
        }
        self.model_dims().validate()?;
        self.train.validate()?;
        self.indicators.validate()?;
        self.grid.validate()?;
        if self.hist_bins < 2 {
            return Err(Error::Config("hist_bins must be >= 2".into()));
        }
        if !(self.hist_range > 0.0 && self.hist_range.is_finite()) {
            return Err(Error::Config("hist_range must be positive".into()));
        }
        if let Some(eps) = self.attack_epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Config("attack_epsilon must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Canonical text form: every key, fixed order, resolved paths.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[String]| v.join(",");
        let paths: Vec<String> = self.data.iter().map(|p| p.display().to_string()).collect();
        let t = &self.train;
        let sp = &self.split;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("data", list(&paths));
        kv("train_end", sp.train_end.to_string());
        kv("val_end", sp.val_end.to_string());
        kv("test_end", sp.test_end.to_string());
        kv("lag", sp.lag.to_string());
        kv("pos_threshold", sp.pos_threshold.to_string());
        kv("neg_threshold", sp.neg_threshold.to_string());
        kv("min_coverage", self.min_coverage.to_string());
        kv("mapping_dim", self.mapping_dim.to_string());
        kv("hidden_dim", self.hidden_dim.to_string());
        kv("attention_dim", self.attention_dim.to_string());
        kv("attention", self.attention.to_string());
        kv("alpha", t.alpha.to_string());
        kv("beta", t.beta.to_string());
        kv("epsilon", t.epsilon.to_string());
        kv("learning_rate", t.adam.learning_rate.to_string());
        kv("adam_beta1", t.adam.beta1.to_string());
        kv("adam_beta2", t.adam.beta2.to_string());
        kv("adam_eps", t.adam.eps.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("patience", t.patience.to_string());
        kv("mode", t.mode.to_string());
        kv("seed", t.seed.to_string());
        kv("seeds", nums(&self.seeds));
        if let Some(eps) = self.attack_epsilon {
            kv("attack_epsilon", eps.to_string());
        }
        kv("mom_window", self.indicators.mom_window.to_string());
        kv("mr_window", self.indicators.mr_window.to_string());
        kv("hist_bins", self.hist_bins.to_string());
        kv("hist_range", self.hist_range.to_string());
        kv("grid_hidden", nums(&self.grid.hidden));
        kv("grid_lag", nums(&self.grid.lag));
        kv("grid_lambda", nums(&self.grid.lambda));
        kv("grid_beta", nums(&self.grid.beta));
        kv("grid_epsilon", nums(&self.grid.epsilon));
        if let Some(h) = &self.dataset_hash {
            kv("dataset_hash", h.clone());
        }
        s
    }

    /// Content hash of the canonical text, excluding the output directory.
    pub fn hash(&self) -> String {
        content_hash(self.to_text().as_bytes())
    }
}

fn nums<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Default)]
struct RawConfig {
    data: Vec<PathBuf>,
    out: Option<PathBuf>,
    dates: [Option<NaiveDate>; 3],
    lag: Option<usize>,
    pos: Option<f64>,
    neg: Option<f64>,
    min_coverage: Option<f64>,
    mapping_dim: Option<usize>,
    hidden_dim: Option<usize>,
    attention_dim: Option<usize>,
    attention: Option<bool>,
    train: TrainConfig,
    seeds: Vec<u64>,
    attack_epsilon: Option<f64>,
    indicators: IndicatorConfig,
    hist_bins: Option<usize>,
    hist_range: Option<f64>,
    grid: GridSpec,
    dataset_hash: Option<String>,
}

fn one<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

fn many<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| one(v.trim())).collect()
}

impl RawConfig {
    fn set(&mut self, key: &str, v: &str, base: &Path) -> std::result::Result<(), String> {
        let t = &mut self.train;
        match key {
            "data" => {
                self.data = v.split(',').map(|p| base.join(p.trim())).collect();
            }
            "out" => self.out = Some(base.join(v)),
            "train_end" => self.dates[0] = Some(one(v)?),
            "val_end" => self.dates[1] = Some(one(v)?),
            "test_end" => self.dates[2] = Some(one(v)?),
            "lag" => self.lag = Some(one(v)?),
            "pos_threshold" => self.pos = Some(one(v)?),
            "neg_threshold" => self.neg = Some(one(v)?),
            "min_coverage" => self.min_coverage = Some(one(v)?),
            "mapping_dim" => self.mapping_dim = Some(one(v)?),
            "hidden_dim" => self.hidden_dim = Some(one(v)?),
            "attention_dim" => self.attention_dim = Some(one(v)?),
            "attention" => self.attention = Some(one(v)?),
            "alpha" => t.alpha = one(v)?,
            "beta" => t.beta = one(v)?,
            "epsilon" => t.epsilon = one(v)?,
            "learning_rate" => t.adam.learning_rate = one(v)?,
            "adam_beta1" => t.adam.beta1 = one(v)?,
            "adam_beta2" => t.adam.beta2 = one(v)?,
            "adam_eps" => t.adam.eps = one(v)?,
            "batch_size" => t.batch_size = one(v)?,
            "epochs" => t.epochs = one(v)?,
            "patience" => t.patience = one(v)?,
            "mode" => t.mode = v.parse().map_err(|e: Error| e.to_string())?,
            "seed" => t.seed = one(v)?,
            "seeds" => self.seeds = many(v)?,
            "attack_epsilon" => self.attack_epsilon = Some(one(v)?),
            "mom_window" => self.indicators.mom_window = one(v)?,
            "mr_window" => self.indicators.mr_window = one(v)?,
            "hist_bins" => self.hist_bins = Some(one(v)?),
            "hist_range" => self.hist_range = Some(one(v)?),
            "grid_hidden" => self.grid.hidden = many(v)?,
            "grid_lag" => self.grid.lag = many(v)?,
            "grid_lambda" => self.grid.lambda = many(v)?,
            "grid_beta" => self.grid.beta = many(v)?,
            "grid_epsilon" => self.grid.epsilon = many(v)?,
            "dataset_hash" => self.dataset_hash = Some(v.to_string()),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn finish(self) -> Result<RunConfig> {
        let need = |name: &str, d: Option<NaiveDate>| {
            d.ok_or_else(|| Error::Config(format!("missing required key `{name}`")))
        };
        if self.data.is_empty() {
            return Err(Error::Config("missing required key `data`".into()));
        }
        Ok(RunConfig {
            data: self.data,
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            split: SplitSpec {
                train_end: need("train_end", self.dates[0])?,
                val_end: need("val_end", self.dates[1])?,
                test_end: need("test_end", self.dates[2])?,
                lag: self.lag.unwrap_or(5),
                pos_threshold: self.pos.unwrap_or(SplitSpec::DEFAULT_POS_THRESHOLD),
                neg_threshold: self.neg.unwrap_or(SplitSpec::DEFAULT_NEG_THRESHOLD),
            },
            min_coverage: self.min_coverage.unwrap_or(0.98),
            mapping_dim: self.mapping_dim.unwrap_or(0),
            hidden_dim: self.hidden_dim.unwrap_or(16),
            attention_dim: self.attention_dim.unwrap_or(0),
            attention: self.attention.unwrap_or(true),
            train: self.train,
            seeds: self.seeds,
            attack_epsilon: self.attack_epsilon,
            indicators: self.indicators,
            hist_bins: self.hist_bins.unwrap_or(20),
            hist_range: self.hist_range.unwrap_or(1.0),
            grid: self.grid,
            dataset_hash: self.dataset_hash,
        })
    }
}
