//! CSV persistence for study results and calibration inputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use ensemble_calib::simulation::{Method, StudyRow, SummaryRow};

use crate::error::{CliError, Result};

pub const ROWS_HEADER: [&str; 7] =
    ["seed", "prior_mean", "method", "coverage", "mean_width", "q_used", "saturated"];
pub const SUMMARY_HEADER: [&str; 6] =
    ["prior_mean", "method", "mean_coverage", "mean_width", "n_seeds", "n_saturated"];

/// Decimal rendering with 17 significant digits, switching to exponent
/// notation for very large or very small magnitudes.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..=16).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        sci
    }
}

fn write_csv(path: &Path, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for rec in records {
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| io(e.into_error()))?;
    // Write to a sibling and rename so readers never observe a half-written file.
    let tmp = path.with_extension("csv.tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn write_rows(path: &Path, rows: &[StudyRow]) -> Result<()> {
    write_csv(
        path,
        &ROWS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.prior_mean.to_string(),
                r.method.as_str().to_string(),
                fmt17(r.coverage),
                fmt17(r.mean_width),
                fmt17(r.q_used),
                r.saturated.to_string(),
            ]
        }),
    )
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    write_csv(
        path,
        &SUMMARY_HEADER,
        summary.iter().map(|r| {
            vec![
                r.prior_mean.to_string(),
                r.method.as_str().to_string(),
                fmt17(r.mean_coverage),
                fmt17(r.mean_width),
                r.n_seeds.to_string(),
                r.n_saturated.to_string(),
            ]
        }),
    )
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("bad {name} value {raw:?}")))
}

fn record_line(rec: &csv::StringRecord, fallback: u64) -> u64 {
    rec.position().map_or(fallback, |p| p.line())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    parse_summary(path, &read_text(path)?)
}

/// `path` is only used in error messages.
pub fn parse_summary(path: &Path, text: &str) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(CliError::parse(path, 1, "empty summary: missing header")),
        Some(r) => r.map_err(|e| csv_parse_error(path, e))?,
    };
    if header.iter().map(str::trim).ne(SUMMARY_HEADER) {
        return Err(CliError::parse(
            path,
            1,
            format!("expected header {}", SUMMARY_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (k, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_parse_error(path, e))?;
        let line = record_line(&rec, k as u64 + 2);
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(CliError::parse(
                path,
                line,
                format!("expected {} fields, found {}", SUMMARY_HEADER.len(), rec.len()),
            ));
        }
        let method: Method = rec[1]
            .trim()
            .parse()
            .map_err(|_| CliError::parse(path, line, format!("unknown method {:?}", &rec[1])))?;
        out.push(SummaryRow {
            prior_mean: field(path, line, "prior_mean", &rec[0])?,
            method,
            mean_coverage: field(path, line, "mean_coverage", &rec[2])?,
            mean_width: field(path, line, "mean_width", &rec[3])?,
            n_seeds: field(path, line, "n_seeds", &rec[4])?,
            n_saturated: field(path, line, "n_saturated", &rec[5])?,
        });
    }
    if out.is_empty() {
        return Err(CliError::parse(path, 2, "empty summary: no data rows"));
    }
    Ok(out)
}

fn csv_parse_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::parse(path, line, e.to_string())
}

/// Headerless rows of predictive samples, one row per calibration point.
pub fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_samples(path, &read_text(path)?)
}

pub fn parse_samples(path: &Path, text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| field(path, k as u64 + 1, "sample", v))
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Labels from the `y` column of a CSV with a header row.
pub fn read_labels(path: &Path) -> Result<Vec<f64>> {
    parse_labels(path, &read_text(path)?)
}

pub fn parse_labels(path: &Path, text: &str) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_parse_error(path, e))?.clone();
    let Some(col) = header.iter().position(|h| h.trim() == "y") else {
        return Err(CliError::parse(path, 1, "header has no `y` column"));
    };
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_parse_error(path, e))?;
        let line = record_line(&rec, k as u64 + 2);
        out.push(field(path, line, "y", &rec[col])?);
    }
    Ok(out)
}
