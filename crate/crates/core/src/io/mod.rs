//! Price-series ingestion, run configuration, and report emission.

pub mod config;
pub mod report;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub use config::RunConfig;

/// Pool prices (token B per token A), optionally timestamped in unix seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    prices: Vec<f64>,
    timestamps: Option<Vec<i64>>,
    source: String,
}

impl PriceSeries {
    pub fn new(prices: Vec<f64>, timestamps: Option<Vec<i64>>, source: impl Into<String>) -> Result<Self> {
        if let Some((i, p)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(DataError::BadPrice {
                row: i + 1,
                value: p.to_string(),
            }
            .into());
        }
        if let Some(ts) = &timestamps {
            if ts.len() != prices.len() {
                return Err(DataError::Mismatch(format!(
                    "{} timestamps for {} prices",
                    ts.len(),
                    prices.len()
                ))
                .into());
            }
            if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
                return Err(DataError::NonAscending {
                    row: i + 2,
                    ts: ts[i + 1],
                }
                .into());
            }
        }
        Ok(Self {
            prices,
            timestamps,
            source: source.into(),
        })
    }

    /// Untimed series labelled `synthetic`.
    pub fn from_prices(prices: Vec<f64>) -> Result<Self> {
        Self::new(prices, None, "synthetic")
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Parse a price CSV.
///
/// Accepts `price` or `timestamp,price` rows, with or without a header line.
/// Rows are numbered from 1 excluding the header.
pub fn parse_prices(text: &str, source: &str) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut prices = Vec::new();
    let mut timestamps: Vec<i64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut row = 0usize;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Malformed {
            row: row + 1,
            reason: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if k == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            width = Some(record.len());
            continue;
        }
        row += 1;
        let w = *width.get_or_insert(record.len());
        if record.len() != w || !(1..=2).contains(&w) {
            return Err(DataError::Malformed {
                row,
                reason: format!("expected {} column(s), found {}", w.clamp(1, 2), record.len()),
            }
            .into());
        }
        let price_field = &record[w - 1];
        let price: f64 = price_field.parse().map_err(|_| DataError::BadPrice {
            row,
            value: price_field.to_string(),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(DataError::BadPrice {
                row,
                value: price_field.to_string(),
            }
            .into());
        }
        if w == 2 {
            let ts: i64 = record[0].parse().map_err(|_| DataError::Malformed {
                row,
                reason: format!("timestamp `{}` is not an integer", &record[0]),
            })?;
            if timestamps.last().is_some_and(|last| ts <= *last) {
                return Err(DataError::NonAscending { row, ts }.into());
            }
            timestamps.push(ts);
        }
        prices.push(price);
    }
    if prices.len() < 2 {
        return Err(DataError::TooShort {
            need: 2,
            found: prices.len(),
        }
        .into());
    }
    let timestamps = (width == Some(2)).then_some(timestamps);
    PriceSeries::new(prices, timestamps, source)
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_prices(&text, &path.display().to_string())
}

/// Render a series in the format [`parse_prices`] reads back bit-for-bit.
pub fn format_prices(series: &PriceSeries) -> String {
    let mut out = String::new();
    match series.timestamps() {
        Some(ts) => {
            out.push_str("ts,price\n");
            for (t, p) in ts.iter().zip(series.prices()) {
                out.push_str(&format!("{t},{p}\n"));
            }
        }
        None => {
            out.push_str("price\n");
            for p in series.prices() {
                out.push_str(&format!("{p}\n"));
            }
        }
    }
    out
}

pub fn write_prices(series: &PriceSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_prices(series)).map_err(|e| {
        DataError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
        .into()
    })
}
