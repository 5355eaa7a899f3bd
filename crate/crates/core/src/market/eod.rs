use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use crate::error::{Error, Result};

/// One trading day of raw prices for one stock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EodRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl EodRecord {
    /// Whether high/low bracket open and close. Violations are tolerated at
    /// ingestion and only logged.
    pub fn is_consistent(&self) -> bool {
        self.low <= self.open.min(self.close) && self.high >= self.open.max(self.close)
    }
}

/// Date-ascending price history of a single stock.
#[derive(Debug, Clone, PartialEq)]
pub struct StockSeries {
    pub stock: String,
    pub records: Vec<EodRecord>,
}

impl StockSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.records.iter().map(|r| r.date)
    }

    pub fn adj_closes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.adj_close).collect()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    stock: String,
    date: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    adj_close: f64,
    volume: f64,
}

/// Reads one CSV file with header `stock,date,open,high,low,close,adj_close,volume`.
///
/// Returns one series per stock, ordered by stock id, each sorted by date.
pub fn ingest_eod(path: &Path) -> Result<Vec<StockSeries>> {
    let mut by_stock = BTreeMap::new();
    ingest_into(path, &mut by_stock)?;
    finish(by_stock)
}

/// Like [`ingest_eod`] over several files (for example one per stock).
/// A stock may be split across files; duplicate dates are still rejected.
pub fn ingest_many<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<StockSeries>> {
    let mut by_stock = BTreeMap::new();
    for path in paths {
        ingest_into(path.as_ref(), &mut by_stock)?;
    }
    finish(by_stock)
}

type Pending = BTreeMap<String, Vec<(EodRecord, String)>>;

fn ingest_into(path: &Path, by_stock: &mut Pending) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = [
        "stock",
        "date",
        "open",
        "high",
        "low",
        "close",
        "adj_close",
        "volume",
    ];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }

    for result in reader.records() {
        let raw = result.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = raw.position().map_or(0, |p| p.line() as usize);
        let row: Row = raw.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let record = parse_row(path, line, &row)?;
        by_stock
            .entry(row.stock)
            .or_default()
            .push((record, format!("{}:{line}", path.display())));
    }
    Ok(())
}

fn parse_row(path: &Path, line: usize, row: &Row) -> Result<EodRecord> {
    let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad date `{}`: {e}", row.date),
    })?;
    let prices = [
        ("open", row.open),
        ("high", row.high),
        ("low", row.low),
        ("close", row.close),
        ("adj_close", row.adj_close),
    ];
    for (name, value) in prices {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Data(format!(
                "{}:{line}: {} {} has non-positive {name} = {value}",
                path.display(),
                row.stock,
                row.date
            )));
        }
    }
    if !(row.volume.is_finite() && row.volume >= 0.0) {
        return Err(Error::Data(format!(
            "{}:{line}: {} {} has negative volume {}",
            path.display(),
            row.stock,
            row.date,
            row.volume
        )));
    }
    let record = EodRecord {
        date,
        open: row.open,
        high: row.high,
        low: row.low,
        close: row.close,
        adj_close: row.adj_close,
        volume: row.volume,
    };
    if !record.is_consistent() {
        log::warn!(
            "{} {}: high/low do not bracket open/close",
            row.stock,
            row.date
        );
    }
    Ok(record)
}

fn finish(by_stock: Pending) -> Result<Vec<StockSeries>> {
    let mut out = Vec::with_capacity(by_stock.len());
    for (stock, mut rows) in by_stock {
        rows.sort_by_key(|(r, _)| r.date);
        if let Some(w) = rows.windows(2).find(|w| w[0].0.date == w[1].0.date) {
            return Err(Error::Data(format!(
                "duplicate date {} for stock {stock} ({} and {})",
                w[0].0.date, w[0].1, w[1].1
            )));
        }
        out.push(StockSeries {
            stock,
            records: rows.into_iter().map(|(r, _)| r).collect(),
        });
    }
    Ok(out)
}
