//! Raw end-of-day prices to labeled, temporally split lag windows.

pub mod align;
pub mod dataset;
pub mod eod;
pub mod features;

pub use align::{align_trading_days, AlignedMarket};
pub use dataset::{
    content_hash, label_and_window, Dataset, Example, Label, PriceTrack, Split, SplitExamples,
    SplitSpec,
};
pub use eod::{ingest_eod, ingest_many, EodRecord, StockSeries};
pub use features::{compute_features, FeatureVector, FEATURE_NAMES, NUM_FEATURES};
