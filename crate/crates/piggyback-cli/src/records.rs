//! Experiment records and their pinned CSV encodings.
//!
//! Raw rows: `scenario,rep,iter,metric,value`; summary rows:
//! `scenario,iter,metric,median,p10,p90`. UTF-8, LF line endings, trailing
//! newline, rows sorted by their key, floats as shortest round-trip
//! decimals with `inf` as the overflow sentinel.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Convergence metrics tracked by the experiments. The declaration order is
/// the sort order within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    IterateDist,
    JacobianDist,
    TangentNorm,
    SetGap,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::IterateDist => "iterate_dist",
            Metric::JacobianDist => "jacobian_dist",
            Metric::TangentNorm => "tangent_norm",
            Metric::SetGap => "set_gap",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iterate_dist" => Ok(Metric::IterateDist),
            "jacobian_dist" => Ok(Metric::JacobianDist),
            "tangent_norm" => Ok(Metric::TangentNorm),
            "set_gap" => Ok(Metric::SetGap),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub rep: u64,
    pub iter: u64,
    pub metric: Metric,
    pub value: f64,
}

impl ExperimentRecord {
    fn sort_key(&self) -> (&str, u64, u64, Metric) {
        (&self.scenario, self.rep, self.iter, self.metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub iter: u64,
    pub metric: Metric,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl SummaryRow {
    fn sort_key(&self) -> (&str, u64, Metric) {
        (&self.scenario, self.iter, self.metric)
    }
}

/// Shortest round-trip decimal; infinities render as `inf` / `-inf`.
fn format_value(v: f64) -> String {
    format!("{v}")
}

fn parse_value(s: &str, line: usize) -> Result<f64, CsvError> {
    let v: f64 = s.parse().map_err(|_| CsvError::Parse {
        line,
        message: format!("bad float {s:?}"),
    })?;
    if v.is_nan() {
        return Err(CsvError::Parse {
            line,
            message: "NaN is not a valid metric value".into(),
        });
    }
    Ok(v)
}

fn parse_metric(s: &str, line: usize) -> Result<Metric, CsvError> {
    s.parse()
        .map_err(|message| CsvError::Parse { line, message })
}

fn parse_int(s: &str, line: usize, what: &str) -> Result<u64, CsvError> {
    s.parse().map_err(|_| CsvError::Parse {
        line,
        message: format!("bad {what} {s:?}"),
    })
}

fn validate_scenario(s: &str, line: usize) -> Result<(), CsvError> {
    if s.is_empty() || s.contains(',') || s.contains('\n') {
        return Err(CsvError::Parse {
            line,
            message: format!("bad scenario name {s:?}"),
        });
    }
    Ok(())
}

pub const RAW_HEADER: &str = "scenario,rep,iter,metric,value";
pub const SUMMARY_HEADER: &str = "scenario,iter,metric,median,p10,p90";

pub fn render_raw_csv(records: &[ExperimentRecord]) -> String {
    let mut sorted: Vec<&ExperimentRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut out = String::with_capacity(32 * (sorted.len() + 1));
    out.push_str(RAW_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.scenario,
            r.rep,
            r.iter,
            r.metric,
            format_value(r.value)
        ));
    }
    out
}

pub fn parse_raw_csv(text: &str) -> Result<Vec<ExperimentRecord>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RAW_HEADER => {}
        Some((_, other)) => {
            return Err(CsvError::Parse {
                line: 1,
                message: format!("expected header {RAW_HEADER:?}, got {other:?}"),
            })
        }
        None => {
            return Err(CsvError::Parse {
                line: 1,
                message: "empty input".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CsvError::Parse {
                line: lineno,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        validate_scenario(fields[0], lineno)?;
        out.push(ExperimentRecord {
            scenario: fields[0].to_string(),
            rep: parse_int(fields[1], lineno, "rep")?,
            iter: parse_int(fields[2], lineno, "iter")?,
            metric: parse_metric(fields[3], lineno)?,
            value: parse_value(fields[4], lineno)?,
        });
    }
    Ok(out)
}

pub fn render_summary_csv(rows: &[SummaryRow]) -> String {
    let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut out = String::with_capacity(40 * (sorted.len() + 1));
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scenario,
            r.iter,
            r.metric,
            format_value(r.median),
            format_value(r.p10),
            format_value(r.p90)
        ));
    }
    out
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SUMMARY_HEADER => {}
        Some((_, other)) => {
            return Err(CsvError::Parse {
                line: 1,
                message: format!("expected header {SUMMARY_HEADER:?}, got {other:?}"),
            })
        }
        None => {
            return Err(CsvError::Parse {
                line: 1,
                message: "empty input".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CsvError::Parse {
                line: lineno,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        validate_scenario(fields[0], lineno)?;
        out.push(SummaryRow {
            scenario: fields[0].to_string(),
            iter: parse_int(fields[1], lineno, "iter")?,
            metric: parse_metric(fields[2], lineno)?,
            median: parse_value(fields[3], lineno)?,
            p10: parse_value(fields[4], lineno)?,
            p90: parse_value(fields[5], lineno)?,
        });
    }
    Ok(out)
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CsvError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| CsvError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, content).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_record_list_is_header_only() {
        assert_eq!(render_raw_csv(&[]), "scenario,rep,iter,metric,value\n");
    }

    #[test]
    fn one_record_two_lines() {
        let rendered = render_raw_csv(&[ExperimentRecord {
            scenario: "ridge".into(),
            rep: 0,
            iter: 3,
            metric: Metric::IterateDist,
            value: 0.125,
        }]);
        assert_eq!(
            rendered,
            "scenario,rep,iter,metric,value\nridge,0,3,iterate_dist,0.125\n"
        );
    }

    #[test]
    fn infinity_sentinel_round_trips() {
        let records = vec![ExperimentRecord {
            scenario: "heavy_ball".into(),
            rep: 1,
            iter: 400,
            metric: Metric::TangentNorm,
            value: f64::INFINITY,
        }];
        let rendered = render_raw_csv(&records);
        assert!(rendered.contains(",inf\n"));
        assert_eq!(parse_raw_csv(&rendered).unwrap(), records);
    }

    #[test]
    fn rows_sorted_by_key() {
        let rendered = render_raw_csv(&[
            ExperimentRecord {
                scenario: "b".into(),
                rep: 0,
                iter: 0,
                metric: Metric::IterateDist,
                value: 1.0,
            },
            ExperimentRecord {
                scenario: "a".into(),
                rep: 1,
                iter: 2,
                metric: Metric::JacobianDist,
                value: 2.0,
            },
            ExperimentRecord {
                scenario: "a".into(),
                rep: 1,
                iter: 2,
                metric: Metric::IterateDist,
                value: 3.0,
            },
        ]);
        let lines: Vec<&str> = rendered.lines().collect();
        assert!(lines[1].starts_with("a,1,2,iterate_dist"));
        assert!(lines[2].starts_with("a,1,2,jacobian_dist"));
        assert!(lines[3].starts_with("b,"));
    }

    #[test]
    fn nan_rejected() {
        let text = "scenario,rep,iter,metric,value\nridge,0,0,iterate_dist,NaN\n";
        assert!(parse_raw_csv(text).is_err());
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![SummaryRow {
            scenario: "lasso".into(),
            iter: 12,
            metric: Metric::JacobianDist,
            median: 1e-7,
            p10: 5e-8,
            p90: 2e-7,
        }];
        let rendered = render_summary_csv(&rows);
        assert_eq!(parse_summary_csv(&rendered).unwrap(), rows);
    }
}
