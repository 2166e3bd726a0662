//! CSV and JSON emission of error reports.
//!
//! CSV layout: one `#` comment line carrying the mode and the JSON config
//! echo, a header `n,error,stderr,slope`, then one row per `n`. Floats are
//! written with 17 significant digits so equal runs give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ErrorReport, ExperimentConfig};

pub const CSV_HEADER: &str = "n,error,stderr,slope";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format '{other}'"))),
        }
    }
}

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn check_nonempty(report: &ErrorReport) -> Result<()> {
    if report.per_n.is_empty() {
        return Err(Error::Contract("report has no rows".into()));
    }
    Ok(())
}

fn echo_json(report: &ErrorReport) -> Result<String> {
    serde_json::to_string(&report.config).map_err(|e| Error::Parse(e.to_string()))
}

pub fn to_csv(report: &ErrorReport) -> Result<String> {
    check_nonempty(report)?;
    let mut out = String::new();
    let slope = report
        .fitted_slope
        .map_or_else(|| "NaN".to_string(), fmt_f64);
    let mode = serde_json::to_value(report.mode).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(
        out,
        "# mode={} config={}",
        mode.as_str().unwrap_or_default(),
        echo_json(report)?
    )
    .unwrap();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for p in &report.per_n {
        writeln!(
            out,
            "{},{},{},{}",
            p.n,
            fmt_f64(p.error),
            fmt_f64(p.stderr),
            slope
        )
        .unwrap();
    }
    Ok(out)
}

pub fn to_json(report: &ErrorReport) -> Result<String> {
    check_nonempty(report)?;
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<ErrorReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Pulls the config echo back out of a CSV report.
pub fn config_from_csv(text: &str) -> Result<ExperimentConfig> {
    let line = text
        .lines()
        .find(|l| l.starts_with('#'))
        .ok_or_else(|| Error::Parse("CSV report has no comment header".into()))?;
    let json = line
        .split_once("config=")
        .map(|(_, j)| j)
        .ok_or_else(|| Error::Parse("comment header carries no config".into()))?;
    serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))
}

pub fn render(report: &ErrorReport, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => to_csv(report),
        OutputFormat::Json => to_json(report),
    }
}

/// Renders several reports into one document: CSV blocks separated by a
/// blank line, or a JSON array.
pub fn render_many(reports: &[ErrorReport], format: OutputFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Contract("no reports to emit".into()));
    }
    match format {
        OutputFormat::Csv => Ok(reports
            .iter()
            .map(to_csv)
            .collect::<Result<Vec<_>>>()?
            .join("\n")),
        OutputFormat::Json => {
            reports.iter().try_for_each(check_nonempty)?;
            let mut s =
                serde_json::to_string_pretty(reports).map_err(|e| Error::Parse(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

pub fn emit_report(report: &ErrorReport, format: OutputFormat, path: &Path) -> Result<()> {
    let text = render(report, format)?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Fails early if `path` cannot be created.
pub fn check_writable(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let meta = fs::metadata(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            parent.display().to_string(),
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    if path.is_dir() {
        return Err(Error::io(
            path.display().to_string(),
            std::io::Error::new(
                std::io::ErrorKind::IsADirectory,
                "output path is a directory",
            ),
        ));
    }
    if meta.permissions().readonly() {
        return Err(Error::io(
            parent.display().to_string(),
            std::io::Error::new(
                std::io::ErrorKind::PermissionDenied,
                "directory is read-only",
            ),
        ));
    }
    Ok(())
}
