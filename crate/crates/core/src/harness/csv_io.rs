//! CSV output of experiment and classification results, and CSV input of
//! labeled feature data.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::classification::{ClassificationReport, LabeledData};
use crate::harness::config::SweepParam;
use crate::harness::experiment::{AggregateResult, RepRecord};

pub const EXPERIMENT_HEADER: &str = "sweep_param,sweep_value,rep,iteration,error_l2,error_l2_signfree";
pub const CLASSIFICATION_HEADER: &str = "s_hat,epsilon,rep,misclassification_rate";

/// C `%.10e` formatting: `4000.0` becomes `4.0000000000e+03`.
pub fn format_sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{x:.10e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn parse_real(field: &str, what: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: {what} `{field}` is not a number")))
}

fn parse_count(field: &str, what: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("line {line}: {what} `{field}` is not a nonnegative integer")))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Renders one row per (sweep value, rep, iteration), in record order.
pub fn experiment_csv(result: &AggregateResult) -> String {
    let mut out = String::from(EXPERIMENT_HEADER);
    out.push('\n');
    let param = result.sweep_param.as_str();
    for r in &result.records {
        for (t, (e, e_free)) in r.errors.iter().zip(&r.errors_signfree).enumerate() {
            out.push_str(&format!(
                "{param},{},{},{t},{},{}\n",
                format_sci(r.sweep_value),
                r.rep,
                format_sci(*e),
                format_sci(*e_free)
            ));
        }
    }
    out
}

/// Writes [`experiment_csv`] to `path`, replacing any existing file.
pub fn write_experiment(result: &AggregateResult, path: &Path) -> Result<()> {
    write_file(path, &experiment_csv(result))
}

/// Parses an experiment CSV back into records and re-aggregates them.
pub fn read_experiment(path: &Path) -> Result<AggregateResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment_csv(&text)
}

pub fn parse_experiment_csv(text: &str) -> Result<AggregateResult> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != EXPERIMENT_HEADER {
        return Err(Error::Parse(format!("unexpected header, expected `{EXPERIMENT_HEADER}`")));
    }
    let mut param: Option<SweepParam> = None;
    let mut records: Vec<RepRecord> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let p = SweepParam::parse(&row[0])
            .ok_or_else(|| Error::Parse(format!("line {line}: unknown sweep parameter `{}`", &row[0])))?;
        if *param.get_or_insert(p) != p {
            return Err(Error::Parse(format!("line {line}: mixed sweep parameters")));
        }
        let value = parse_real(&row[1], "sweep_value", line)?;
        let rep = parse_count(&row[2], "rep", line)?;
        let iteration = parse_count(&row[3], "iteration", line)?;
        let e = parse_real(&row[4], "error_l2", line)?;
        let e_free = parse_real(&row[5], "error_l2_signfree", line)?;
        let continues = records
            .last()
            .is_some_and(|r| r.sweep_value.to_bits() == value.to_bits() && r.rep == rep);
        if !continues {
            records.push(RepRecord {
                sweep_value: value,
                rep,
                errors: Vec::new(),
                errors_signfree: Vec::new(),
            });
        }
        let rec = records.last_mut().expect("just pushed");
        if iteration != rec.errors.len() {
            return Err(Error::Parse(format!("line {line}: iteration {iteration} out of sequence")));
        }
        rec.errors.push(e);
        rec.errors_signfree.push(e_free);
    }
    Ok(AggregateResult::from_records(param.unwrap_or(SweepParam::N), records))
}

/// One row per (report, rep).
pub fn classification_csv(reports: &[ClassificationReport]) -> String {
    let mut out = String::from(CLASSIFICATION_HEADER);
    out.push('\n');
    for r in reports {
        for (rep, rate) in r.per_rep.iter().enumerate() {
            out.push_str(&format!("{},{},{rep},{}\n", r.s_hat, format_sci(r.epsilon), format_sci(*rate)));
        }
    }
    out
}

pub fn write_classification(reports: &[ClassificationReport], path: &Path) -> Result<()> {
    write_file(path, &classification_csv(reports))
}

/// Reads a headered CSV with one `label` column; all other columns must be numeric.
pub fn read_labeled(path: &Path) -> Result<LabeledData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labeled_csv(&text)
}

pub fn parse_labeled_csv(text: &str) -> Result<LabeledData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let label_col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Parse("no `label` column in header".to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let mut x = Vec::with_capacity(feature_names.len());
        for (j, field) in row.iter().enumerate() {
            if j == label_col {
                continue;
            }
            let v = field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Parse(format!("line {line}, column `{}`: `{field}` is not a finite number", &header[j]))
            })?;
            x.push(v);
        }
        features.push(x);
        labels.push(row[label_col].to_string());
    }
    LabeledData::new(feature_names, features, labels)
}

/// Writes labeled data in the format [`read_labeled`] accepts.
pub fn write_labeled(data: &LabeledData, path: &Path) -> Result<()> {
    let mut out = data.feature_names.join(",");
    out.push_str(",label\n");
    for (x, y) in data.features.iter().zip(&data.labels) {
        for v in x {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(y);
        out.push('\n');
    }
    write_file(path, &out)
}
