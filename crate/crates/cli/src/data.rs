//! CSV input loading with the validation the analyze path promises: named
//! columns must exist, the treatment column must be binary, and missing or
//! unparsable values are reported with their row numbers.

use std::collections::HashMap;
use std::path::Path;

use fullsub::matrix::Matrix;

use crate::error::{CliError, CliResult};

pub struct CsvTable {
    pub headers: Vec<String>,
    columns: HashMap<String, Vec<String>>,
}

impl CsvTable {
    pub fn load(path: &Path) -> CliResult<CsvTable> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns: HashMap<String, Vec<String>> =
            headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        let mut nrows = 0;
        for (i, record) in reader.records().enumerate() {
            let record = record
                .map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 2)))?;
            if record.len() != headers.len() {
                return Err(CliError::Data(format!(
                    "{} row {}: {} fields, expected {}",
                    path.display(),
                    i + 2,
                    record.len(),
                    headers.len()
                )));
            }
            for (h, v) in headers.iter().zip(record.iter()) {
                columns.get_mut(h).unwrap().push(v.trim().to_string());
            }
            nrows += 1;
        }
        if nrows == 0 {
            return Err(CliError::Data(format!(
                "{} has no data rows",
                path.display()
            )));
        }
        Ok(CsvTable { headers, columns })
    }

    fn raw_column(&self, name: &str) -> CliResult<&Vec<String>> {
        self.columns.get(name).ok_or_else(|| {
            CliError::Data(format!(
                "missing column '{name}' (available: {})",
                self.headers.join(", ")
            ))
        })
    }

    /// A numeric column; empty or unparsable cells are an error listing the
    /// offending rows.
    pub fn numeric_column(&self, name: &str) -> CliResult<Vec<f64>> {
        let raw = self.raw_column(name)?;
        let mut values = Vec::with_capacity(raw.len());
        let mut bad_rows = Vec::new();
        for (i, cell) in raw.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    bad_rows.push(i + 2);
                    values.push(f64::NAN);
                }
            }
        }
        if !bad_rows.is_empty() {
            let shown: Vec<String> = bad_rows.iter().take(20).map(usize::to_string).collect();
            let suffix = if bad_rows.len() > 20 { ", ..." } else { "" };
            return Err(CliError::Data(format!(
                "column '{name}' has {} missing or non-numeric values (rows {}{suffix})",
                bad_rows.len(),
                shown.join(", ")
            )));
        }
        Ok(values)
    }

    /// The treatment column: accepts 0/1 (also as floats) and true/false.
    pub fn treatment_column(&self, name: &str) -> CliResult<Vec<u8>> {
        let raw = self.raw_column(name)?;
        let mut z = Vec::with_capacity(raw.len());
        for (i, cell) in raw.iter().enumerate() {
            let parsed = match cell.as_str() {
                "true" => Some(1u8),
                "false" => Some(0u8),
                other => match other.parse::<f64>() {
                    Ok(v) if v == 0.0 => Some(0),
                    Ok(v) if v == 1.0 => Some(1),
                    _ => None,
                },
            };
            match parsed {
                Some(v) => z.push(v),
                None => {
                    return Err(CliError::Data(format!(
                        "treatment column '{name}' is not binary at row {}: '{cell}'",
                        i + 2
                    )))
                }
            }
        }
        let n1: usize = z.iter().map(|&v| usize::from(v != 0)).sum();
        if n1 == 0 || n1 == z.len() {
            return Err(CliError::Data(format!(
                "treatment column '{name}' has only one arm"
            )));
        }
        Ok(z)
    }

    /// Covariate columns assembled into a matrix, in the given order.
    pub fn covariate_matrix(&self, names: &[String]) -> CliResult<Matrix> {
        if names.is_empty() {
            return Err(CliError::Config("covariate list is empty".into()));
        }
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            columns.push(self.numeric_column(name)?);
        }
        Ok(Matrix::from_columns(&columns))
    }
}
