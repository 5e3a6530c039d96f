use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{default_column_names, DataError, SurvivalDataset};

/// How covariate columns are named after loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnScheme {
    /// Keep the names found in the header row.
    #[default]
    Header,
    /// Rename covariates `x1..xd` in file order.
    Positional,
}

pub fn load_csv(path: impl AsRef<Path>, scheme: ColumnScheme) -> Result<SurvivalDataset, DataError> {
    read_csv(File::open(path)?, scheme)
}

/// Parses a dataset with a header containing `y`, `delta` and the covariates.
///
/// Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, scheme: ColumnScheme) -> Result<SurvivalDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let y_col = find_column(&header, "y")?;
    let delta_col = find_column(&header, "delta")?;
    let covariate_cols: Vec<usize> = (0..header.len()).filter(|&j| j != y_col && j != delta_col).collect();
    if covariate_cols.is_empty() {
        return Err(DataError::NoCovariates);
    }

    let mut y = Vec::new();
    let mut delta = Vec::new();
    let mut values = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let yi = parse_field(&record[y_col], row, &header[y_col])?;
        if !(yi > 0.0 && yi.is_finite()) {
            return Err(DataError::InvalidDuration { row, value: yi });
        }
        y.push(yi);
        delta.push(parse_indicator(&record[delta_col], row)?);
        for &j in &covariate_cols {
            let v = parse_field(&record[j], row, &header[j])?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: header[j].clone(),
                });
            }
            values.push(v);
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, covariate_cols.len()), values)
        .map_err(|e| DataError::Shape(e.to_string()))?;
    let names = match scheme {
        ColumnScheme::Header => covariate_cols.iter().map(|&j| header[j].clone()).collect(),
        ColumnScheme::Positional => default_column_names(covariate_cols.len()),
    };
    SurvivalDataset::new(x, y, delta, names)
}

pub fn save_csv(data: &SurvivalDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_csv(data, File::create(path)?)
}

/// Writes `y,delta,<names>` using shortest round-trip decimal formatting, so
/// reading the file back reproduces every value bit for bit.
pub fn write_csv<W: Write>(data: &SurvivalDataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "delta".to_string()];
    header.extend(data.column_names().iter().cloned());
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        record.clear();
        record.push(data.y()[i].to_string());
        record.push(if data.delta()[i] { "1" } else { "0" }.to_string());
        record.extend(data.x().row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Covariates read from a file that may or may not carry outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub x: Array2<f64>,
}

impl CovariateTable {
    /// Reorders columns to match `expected`. Fails listing missing and extra names.
    pub fn aligned_to(&self, expected: &[String]) -> Result<Array2<f64>, DataError> {
        let missing: Vec<&str> = expected
            .iter()
            .filter(|e| !self.names.contains(e))
            .map(String::as_str)
            .collect();
        let extra: Vec<&str> = self
            .names
            .iter()
            .filter(|n| !expected.contains(n))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(DataError::Shape(format!(
                "covariate columns do not match the model: missing [{}], extra [{}]",
                missing.join(", "),
                extra.join(", ")
            )));
        }
        let order: Vec<usize> = expected
            .iter()
            .map(|e| self.names.iter().position(|n| n == e).unwrap())
            .collect();
        Ok(self.x.select(ndarray::Axis(1), &order))
    }
}

/// Reads every column except `y` and `delta` (when present) as a covariate.
pub fn read_covariates<R: Read>(reader: R) -> Result<CovariateTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let cols: Vec<usize> = (0..header.len())
        .filter(|&j| header[j] != "y" && header[j] != "delta")
        .collect();
    let mut values = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for &j in &cols {
            let v = parse_field(&record[j], row, &header[j])?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: header[j].clone(),
                });
            }
            values.push(v);
        }
        n += 1;
    }
    let x = Array2::from_shape_vec((n, cols.len()), values).map_err(|e| DataError::Shape(e.to_string()))?;
    Ok(CovariateTable {
        names: cols.iter().map(|&j| header[j].clone()).collect(),
        x,
    })
}

fn find_column(header: &[String], name: &str) -> Result<usize, DataError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

fn parse_field(raw: &str, row: usize, column: &str) -> Result<f64, DataError> {
    raw.trim().parse::<f64>().map_err(|_| DataError::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

fn parse_indicator(raw: &str, row: usize) -> Result<bool, DataError> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(false),
        Ok(v) if v == 1.0 => Ok(true),
        _ => Err(DataError::InvalidIndicator {
            row,
            value: raw.to_string(),
        }),
    }
}
