//! Delimited-file ingestion.
//!
//! Input is comma-separated UTF-8 with a header row and `.` as the decimal
//! separator. A cell that is empty, `NA` or `NaN` (any case) counts as
//! missing; rows missing any mapped column are dropped.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use sieve_ate::Dataset;

use crate::CliError;

/// Which file columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnMapping {
    pub outcome: String,
    pub treatment: String,
    /// Quantitative covariates, used as-is.
    pub covariates: Vec<String>,
    /// Qualitative covariates, expanded to 0/1 indicators.
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Rows dropped for missing values in mapped columns.
    pub dropped: usize,
    pub notes: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

fn parse_number(cell: &str, line: u64, column: &str) -> Result<f64, CliError> {
    let c = cell.trim();
    match c.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Data(format!(
            "line {line}, column `{column}`: cannot parse `{c}` as a number"
        ))),
    }
}

pub fn ingest(path: &Path, mapping: &ColumnMapping) -> Result<Ingested, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    if header.is_empty() {
        return Err(CliError::Data(format!("{} has no header row", path.display())));
    }

    let position = |name: &str| -> Result<usize, CliError> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Data(format!("column `{name}` not found in header")))
    };
    let mapped: Vec<&String> = std::iter::once(&mapping.outcome)
        .chain(std::iter::once(&mapping.treatment))
        .chain(&mapping.covariates)
        .chain(&mapping.categorical)
        .collect();
    let mut seen = BTreeSet::new();
    for name in &mapped {
        if !seen.insert(name.as_str()) {
            return Err(CliError::Usage(format!("column `{name}` is mapped more than once")));
        }
    }
    let y_col = position(&mapping.outcome)?;
    let d_col = position(&mapping.treatment)?;
    let x_cols = mapping.covariates.iter().map(|c| position(c)).collect::<Result<Vec<_>, _>>()?;
    let c_cols = mapping.categorical.iter().map(|c| position(c)).collect::<Result<Vec<_>, _>>()?;
    let all_cols: Vec<usize> = [y_col, d_col].into_iter().chain(x_cols.iter().copied()).chain(c_cols.iter().copied()).collect();

    let mut outcome = Vec::new();
    let mut treatment = Vec::new();
    let mut numeric: Vec<Vec<f64>> = Vec::new();
    let mut levels: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        let cell = |j: usize| record.get(j).unwrap_or("");
        if all_cols.iter().any(|&j| is_missing(cell(j))) {
            dropped += 1;
            continue;
        }
        outcome.push(parse_number(cell(y_col), line, &mapping.outcome)?);
        let raw_d = cell(d_col).trim();
        let d = match raw_d.parse::<f64>() {
            Ok(v) if v == 0.0 || v == 1.0 => v,
            _ => {
                return Err(CliError::Data(format!(
                    "line {line}, column `{}`: treatment must be coded 0/1, found `{raw_d}`; recode it explicitly",
                    mapping.treatment
                )))
            }
        };
        treatment.push(d);
        numeric.push(
            x_cols
                .iter()
                .zip(&mapping.covariates)
                .map(|(&j, name)| parse_number(cell(j), line, name))
                .collect::<Result<_, _>>()?,
        );
        levels.push(c_cols.iter().map(|&j| cell(j).trim().to_string()).collect());
    }

    let mut notes = Vec::new();
    if dropped > 0 {
        notes.push(format!("{dropped} rows dropped for missing values"));
    }

    let mut names: Vec<String> = mapping.covariates.clone();
    let mut indicator_levels: Vec<(usize, String)> = Vec::new();
    for (c, name) in mapping.categorical.iter().enumerate() {
        let distinct: BTreeSet<&str> = levels.iter().map(|row| row[c].as_str()).collect();
        let mut distinct = distinct.into_iter();
        if let Some(reference) = distinct.next() {
            notes.push(format!("categorical `{name}`: reference level `{reference}`"));
        }
        for level in distinct {
            names.push(format!("{name}={level}"));
            indicator_levels.push((c, level.to_string()));
        }
    }

    let n = outcome.len();
    let p = names.len();
    if n < p + 2 {
        return Err(CliError::Data(format!(
            "only {n} complete rows for {p} covariates; need at least {}",
            p + 2
        )));
    }
    let q = mapping.covariates.len();
    let covariates = DMatrix::from_fn(n, p, |i, j| {
        if j < q {
            numeric[i][j]
        } else {
            let (c, level) = &indicator_levels[j - q];
            (levels[i][*c] == *level) as u8 as f64
        }
    });
    let dataset = Dataset::new(outcome, treatment, covariates, names).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(Ingested { dataset, dropped, notes })
}

/// Writes `data` as a header-first CSV whose numbers round-trip exactly.
pub fn write_dataset(path: &Path, data: &Dataset, outcome: &str, treatment: &str) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut header = vec![outcome.to_string(), treatment.to_string()];
    header.extend(data.column_names().iter().cloned());
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    let x = data.covariates();
    for i in 0..data.n() {
        let mut row = vec![data.outcome()[i].to_string(), data.treatment()[i].to_string()];
        row.extend((0..data.p()).map(|j| x[(i, j)].to_string()));
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
