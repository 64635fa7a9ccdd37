//! Evaluation outputs: a human-readable summary table and a per-image
//! records file that round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{EvalRecord, EvalReport};

const RECORDS_VERSION: u32 = 1;

/// Aligned accuracy table, one row per configuration.
pub fn render_table(reports: &[EvalReport]) -> String {
    let label_w = reports
        .iter()
        .map(|r| r.config_label.len())
        .chain(std::iter::once("config".len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    writeln!(
        out,
        "{:<label_w$}  {:>8}  {:>7}  {:>5}",
        "config", "accuracy", "correct", "total"
    )
    .expect("string write");
    for r in reports {
        writeln!(
            out,
            "{:<label_w$}  {:>8.4}  {:>7}  {:>5}",
            r.config_label,
            r.accuracy,
            r.correct_count(),
            r.per_image.len()
        )
        .expect("string write");
    }
    out
}

pub fn save_table(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_table(reports))?;
    Ok(())
}

/// Per-image records: `rec <image_id> <predicted_index> <0|1>`.
pub fn render_records(report: &EvalReport) -> Result<String> {
    if report.config_label.chars().any(char::is_whitespace) {
        return Err(Error::invalid(format!(
            "config label {:?} contains whitespace and cannot be saved",
            report.config_label
        )));
    }
    let mut out = String::new();
    writeln!(out, "egorec {RECORDS_VERSION}").expect("string write");
    writeln!(out, "config {}", report.config_label).expect("string write");
    writeln!(out, "accuracy {}", report.accuracy).expect("string write");
    writeln!(out, "records {}", report.per_image.len()).expect("string write");
    for rec in &report.per_image {
        writeln!(
            out,
            "rec {} {} {}",
            rec.image_id,
            rec.predicted_index,
            if rec.correct { 1 } else { 0 }
        )
        .expect("string write");
    }
    Ok(out)
}

pub fn save_records(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_records(report)?)?;
    Ok(())
}

pub fn parse_records(text: &str) -> Result<EvalReport> {
    let mut lines = text.lines().enumerate();
    let mut next = |keyword: &str| -> Result<(usize, Vec<&str>)> {
        for (idx, line) in lines.by_ref() {
            if line.trim().is_empty() {
                continue;
            }
            let mut tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.first() != Some(&keyword) {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!(
                        "expected `{keyword}`, found `{}`",
                        tokens.first().unwrap_or(&"")
                    ),
                });
            }
            tokens.remove(0);
            return Ok((idx + 1, tokens));
        }
        Err(Error::Parse {
            line: 0,
            message: format!("unexpected end of file, expected `{keyword}`"),
        })
    };

    let (num, tokens) = next("egorec")?;
    let version: u32 = parse_field(&tokens, 0, num, "version")?;
    if version != RECORDS_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: RECORDS_VERSION,
        });
    }
    let (num, tokens) = next("config")?;
    let config_label: String = parse_field(&tokens, 0, num, "config label")?;
    let (num, tokens) = next("accuracy")?;
    let accuracy: f64 = parse_field(&tokens, 0, num, "accuracy")?;
    let (num, tokens) = next("records")?;
    let count: usize = parse_field(&tokens, 0, num, "record count")?;

    let mut per_image = Vec::with_capacity(count);
    for _ in 0..count {
        let (num, tokens) = next("rec")?;
        let image_id: String = parse_field(&tokens, 0, num, "image id")?;
        let predicted_index: usize = parse_field(&tokens, 1, num, "predicted index")?;
        let flag: u8 = parse_field(&tokens, 2, num, "correct flag")?;
        if flag > 1 {
            return Err(Error::Parse {
                line: num,
                message: format!("correct flag must be 0 or 1, got {flag}"),
            });
        }
        per_image.push(EvalRecord {
            image_id,
            predicted_index,
            correct: flag == 1,
        });
    }
    if let Some((idx, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Parse {
            line: idx + 1,
            message: format!("unexpected trailing content: `{line}`"),
        });
    }

    let report = EvalReport::from_records(config_label, per_image);
    if report.accuracy.to_bits() != accuracy.to_bits() {
        return Err(Error::Parse {
            line: 0,
            message: format!(
                "stored accuracy {} disagrees with records ({})",
                accuracy, report.accuracy
            ),
        });
    }
    Ok(report)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<EvalReport> {
    parse_records(&std::fs::read_to_string(path)?)
}

fn parse_field<T: std::str::FromStr>(
    tokens: &[&str],
    idx: usize,
    line: usize,
    what: &str,
) -> Result<T> {
    let tok = tokens.get(idx).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what}: `{tok}`"),
    })
}
