use std::collections::BTreeSet;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market::eod::StockSeries;

/// Stocks restricted to the trading days they all share.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedMarket {
    pub calendar: Vec<NaiveDate>,
    /// Every series has exactly `calendar.len()` records, in calendar order.
    pub series: Vec<StockSeries>,
    /// Stocks dropped for covering too few of the observed trading days.
    pub excluded: Vec<String>,
}

/// Intersects the trading days of all stocks.
///
/// A stock whose share of the union of observed dates is below `min_coverage`
/// is dropped before the intersection; pass `0.0` to keep every stock.
pub fn align_trading_days(series: &[StockSeries], min_coverage: f64) -> Result<AlignedMarket> {
    if series.is_empty() {
        return Err(Error::Alignment("no stock series to align".into()));
    }
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::Contract(format!(
            "min_coverage must lie in [0, 1], got {min_coverage}"
        )));
    }

    let union: BTreeSet<NaiveDate> = series.iter().flat_map(|s| s.dates()).collect();
    let (kept, dropped): (Vec<&StockSeries>, Vec<&StockSeries>) = series
        .iter()
        .partition(|s| s.len() as f64 >= min_coverage * union.len() as f64);
    if kept.is_empty() {
        return Err(Error::Alignment(format!(
            "every stock covers less than {:.1}% of the {} trading days",
            100.0 * min_coverage,
            union.len()
        )));
    }
    for s in &dropped {
        log::warn!(
            "excluding {}: {} of {} trading days",
            s.stock,
            s.len(),
            union.len()
        );
    }

    let mut common: BTreeSet<NaiveDate> = kept[0].dates().collect();
    for s in &kept[1..] {
        let dates: BTreeSet<NaiveDate> = s.dates().collect();
        common.retain(|d| dates.contains(d));
    }
    if common.is_empty() {
        return Err(Error::Alignment(
            "stocks share no common trading day".into(),
        ));
    }

    let aligned = kept
        .iter()
        .map(|s| StockSeries {
            stock: s.stock.clone(),
            records: s
                .records
                .iter()
                .filter(|r| common.contains(&r.date))
                .copied()
                .collect(),
        })
        .collect();

    Ok(AlignedMarket {
        calendar: common.into_iter().collect(),
        series: aligned,
        excluded: dropped.iter().map(|s| s.stock.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::eod::EodRecord;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 3, d).unwrap()
    }

    fn series(name: &str, days: &[u32]) -> StockSeries {
        StockSeries {
            stock: name.into(),
            records: days
                .iter()
                .map(|&d| EodRecord {
                    date: day(d),
                    open: 1.0,
                    high: 1.0,
                    low: 1.0,
                    close: 1.0,
                    adj_close: 1.0,
                    volume: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn intersection_of_two_stocks() {
        let a = series("A", &[1, 2, 3]);
        let b = series("B", &[1, 3]);
        let aligned = align_trading_days(&[a, b], 0.0).unwrap();
        assert_eq!(aligned.calendar, vec![day(1), day(3)]);
        assert!(aligned.series.iter().all(|s| s.len() == 2));
    }

    #[test]
    fn single_stock_is_unchanged() {
        let a = series("A", &[2, 5, 9]);
        let aligned = align_trading_days(std::slice::from_ref(&a), 0.98).unwrap();
        assert_eq!(aligned.series[0], a);
        assert_eq!(aligned.calendar, vec![day(2), day(5), day(9)]);
    }

    #[test]
    fn disjoint_dates_fail() {
        let a = series("A", &[1, 2]);
        let b = series("B", &[3, 4]);
        assert!(matches!(
            align_trading_days(&[a, b], 0.0),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn sparse_stock_is_excluded_by_coverage() {
        let full: Vec<u32> = (1..=20).collect();
        let a = series("A", &full);
        let b = series("B", &[1, 2, 3]);
        let aligned = align_trading_days(&[a, b], 0.98).unwrap();
        assert_eq!(aligned.excluded, vec!["B".to_string()]);
        assert_eq!(aligned.calendar.len(), 20);
    }
}
