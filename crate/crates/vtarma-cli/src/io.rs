//! Data ingestion and CSV/JSON output for the command-line tools.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// A dated return series (log-returns scaled by 100).
#[derive(Debug, Clone)]
pub struct ReturnSeries {
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
}

/// How to interpret the `value` column of an input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputMode {
    /// Values are returns already.
    Returns,
    /// Values are price levels; converted via `100 ln(p_t / p_{t-1})`.
    Prices,
}

/// Reads a `date,value` CSV and returns the (converted) return series.
///
/// Timestamps must be strictly increasing and values finite; violations
/// are reported with the offending data row number.
pub fn ingest(path: &Path, mode: InputMode) -> Result<ReturnSeries, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot open {}: {e}", path.display()))?;

    let headers = reader
        .headers()
        .map_err(|e| format!("cannot read header: {e}"))?;
    if headers.len() < 2
        || !headers[0].eq_ignore_ascii_case("date")
        || !headers[1].eq_ignore_ascii_case("value")
    {
        return Err(format!(
            "expected header `date,value`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        ));
    }

    let mut timestamps: Vec<String> = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| format!("data row {row}: {e}"))?;
        if record.len() < 2 {
            return Err(format!("data row {row}: expected two columns"));
        }
        let date = record[0].to_string();
        if let Some(prev) = timestamps.last() {
            if date.as_str() <= prev.as_str() {
                return Err(format!(
                    "data row {row}: timestamps must be strictly increasing ({prev} then {date})"
                ));
            }
        }
        let value: f64 = record[1]
            .parse()
            .map_err(|_| format!("data row {row}: cannot parse value `{}`", &record[1]))?;
        if !value.is_finite() {
            return Err(format!("data row {row}: value is not finite"));
        }
        timestamps.push(date);
        values.push(value);
    }
    if values.is_empty() {
        return Err("no data rows".to_string());
    }

    match mode {
        InputMode::Returns => Ok(ReturnSeries { timestamps, values }),
        InputMode::Prices => {
            if let Some(idx) = values.iter().position(|&p| p <= 0.0) {
                return Err(format!(
                    "data row {}: prices must be positive to form log-returns",
                    idx + 1
                ));
            }
            if values.len() < 2 {
                return Err("need at least two prices to form returns".to_string());
            }
            let returns = values
                .windows(2)
                .map(|w| 100.0 * (w[1] / w[0]).ln())
                .collect();
            Ok(ReturnSeries {
                timestamps: timestamps.split_off(1),
                values: returns,
            })
        }
    }
}

/// Writes rows of named float columns to a CSV file.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), String> {
    let mut out = String::new();
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    fs::write(path, out).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| format!("serialization: {e}"))?;
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
