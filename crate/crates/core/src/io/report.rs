//! Report files and the human-readable summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::calibration::{CalibrationResult, FeeCurve};
use crate::engine::BacktestReport;
use crate::error::{DataError, Error, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    DataError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
    .into()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Write `report.json`, `trajectory.csv`, `fees_by_epoch.csv`,
/// `states_summary.csv` and, for timestamped series, `monthly_fees.csv`.
pub fn write_backtest_outputs(report: &BacktestReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut written = Vec::new();

    let path = out_dir.join("report.json");
    write_json(&path, report)?;
    written.push(path);

    let path = out_dir.join("trajectory.csv");
    write_csv(
        &path,
        &["t", "price", "lp_value", "bh_value"],
        report
            .prices
            .iter()
            .zip(&report.lp_value)
            .zip(&report.bh_value)
            .enumerate()
            .map(|(t, ((p, lp), bh))| vec![t.to_string(), p.to_string(), lp.to_string(), bh.to_string()]),
    )?;
    written.push(path);

    let path = out_dir.join("fees_by_epoch.csv");
    write_csv(
        &path,
        &[
            "epoch",
            "start",
            "end",
            "final_price",
            "inflow_a",
            "inflow_b",
            "fee_a",
            "fee_b",
            "fee_converted_b",
            "volume_converted_b",
        ],
        report.fee_ledger.epochs.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                e.start.to_string(),
                e.end.to_string(),
                e.final_price.to_string(),
                e.inflow_a.to_string(),
                e.inflow_b.to_string(),
                e.fee_a.to_string(),
                e.fee_b.to_string(),
                e.fee_converted_b.to_string(),
                e.volume_converted_b.to_string(),
            ]
        }),
    )?;
    written.push(path);

    let path = out_dir.join("states_summary.csv");
    write_csv(
        &path,
        &[
            "epoch", "bucket", "lower", "upper", "liquidity", "x_start", "y_start", "x_end", "y_end",
            "inflow_a", "inflow_b",
        ],
        report.bucket_states.iter().map(|s| {
            vec![
                s.epoch.to_string(),
                s.bucket.to_string(),
                s.lower.to_string(),
                s.upper.to_string(),
                s.liquidity.to_string(),
                s.x_start.to_string(),
                s.y_start.to_string(),
                s.x_end.to_string(),
                s.y_end.to_string(),
                s.inflow_a.to_string(),
                s.inflow_b.to_string(),
            ]
        }),
    )?;
    written.push(path);

    if let Some(months) = &report.monthly {
        let path = out_dir.join("monthly_fees.csv");
        write_csv(
            &path,
            &["month", "fee_converted_b", "volume_converted_b"],
            months.iter().map(|m| {
                vec![
                    m.month.clone(),
                    m.fee_converted_b.to_string(),
                    m.volume_converted_b.to_string(),
                ]
            }),
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Write `fee_curve.csv` and, when a fit exists, `calibration.json`.
pub fn write_calibration_outputs(
    curve: &FeeCurve,
    result: Option<&CalibrationResult>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let path = out_dir.join("fee_curve.csv");
    write_csv(
        &path,
        &["variance", "model_fee"],
        curve
            .variance_grid
            .iter()
            .zip(&curve.fees)
            .map(|(v, f)| vec![v.to_string(), f.to_string()]),
    )?;
    let mut written = vec![path];
    if let Some(result) = result {
        let path = out_dir.join("calibration.json");
        write_json(&path, result)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<BacktestReport> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        DataError::Malformed {
            row: e.line(),
            reason: format!("{}: {e}", path.display()),
        }
        .into()
    })
}

/// Compact money format: `$950.25`, `$1.04k`, `$4.9m`, `$5.13b`.
pub fn format_money(v: f64) -> String {
    let sign = if v < 0.0 { "-" } else { "" };
    let a = v.abs();
    let (scaled, suffix) = if a >= 1e9 {
        (a / 1e9, "b")
    } else if a >= 1e6 {
        (a / 1e6, "m")
    } else if a >= 1e3 {
        (a / 1e3, "k")
    } else {
        (a, "")
    };
    let mut digits = format!("{scaled:.2}");
    if !suffix.is_empty() {
        while digits.ends_with('0') {
            digits.pop();
        }
        if digits.ends_with('.') {
            digits.pop();
        }
    }
    format!("{sign}${digits}{suffix}")
}

fn format_error(model: f64, fact: f64) -> String {
    format!("{:.2}%", 100.0 * (model - fact).abs() / fact.abs())
}

/// Summary table in the shape of a results sheet: W, Cost, Volume, Fees, plus
/// fact and error rows when observed values are supplied.
pub fn summary_table(report: &BacktestReport, fact_fee: Option<f64>, fact_volume: Option<f64>) -> String {
    let mut rows: Vec<(String, String, String)> = vec![
        ("W".into(), String::new(), format_money(report.capital)),
        ("Cost".into(), String::new(), format_money(report.gas_cost_b)),
        ("Volume".into(), "model".into(), format_money(report.volume_total_b)),
    ];
    if let Some(f) = fact_volume {
        rows.push((String::new(), "fact".into(), format_money(f)));
        rows.push((String::new(), "error".into(), format_error(report.volume_total_b, f)));
    }
    rows.push(("Fees".into(), "model".into(), format_money(report.fees_total_b)));
    if let Some(f) = fact_fee {
        rows.push((String::new(), "fact".into(), format_money(f)));
        rows.push((String::new(), "error".into(), format_error(report.fees_total_b, f)));
    }
    rows.push(("Epochs".into(), String::new(), report.epochs.to_string()));
    rows.push(("Profit".into(), "LP".into(), format!("{:.2}%", 100.0 * report.profit_rate)));
    rows.push((String::new(), "B&H".into(), format!("{:.2}%", 100.0 * report.bh_profit_rate)));

    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Indicator".len());
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max("Value".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<w0$}  {:<w1$}  {:>w2$}", "Indicator", "", "Value");
    let _ = writeln!(out, "{}", "-".repeat(w0 + w1 + w2 + 4));
    for (a, b, c) in rows {
        let _ = writeln!(out, "{a:<w0$}  {b:<w1$}  {c:>w2$}");
    }
    out
}
