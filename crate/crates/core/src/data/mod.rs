//! Survival datasets, CSV ingestion and univariate Cox screening.

mod csv_io;
mod screening;

use ndarray::{Array2, Axis};
use thiserror::Error;

pub use csv_io::{load_csv, read_covariates, read_csv, save_csv, write_csv, ColumnScheme, CovariateTable};
pub use screening::{fit_univariate_cox, partial_log_likelihood, screen_top_d, ScreeningResult, UnivariateCox};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("row {row}: duration y must be positive and finite, got {value}")]
    InvalidDuration { row: usize, value: f64 },
    #[error("row {row}: censoring indicator delta must be 0 or 1, got {value}")]
    InvalidIndicator { row: usize, value: String },
    #[error("row {row}, column '{column}': non-finite covariate value")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("dataset needs at least one covariate column")]
    NoCovariates,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("column {0} is constant")]
    ConstantColumn(usize),
    #[error("no events (delta = 1) in the data")]
    NoEvents,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Covariates plus right-censored outcomes for `n` subjects.
///
/// Rows of `x` are subjects. `y` holds the observed durations `min(T, C)` and
/// `delta[i]` is true when subject `i` experienced the event.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    x: Array2<f64>,
    y: Vec<f64>,
    delta: Vec<bool>,
    column_names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(
        x: Array2<f64>,
        y: Vec<f64>,
        delta: Vec<bool>,
        column_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let (n, d) = x.dim();
        if y.len() != n || delta.len() != n {
            return Err(DataError::Shape(format!(
                "x has {n} rows but y has {} and delta {}",
                y.len(),
                delta.len()
            )));
        }
        if column_names.len() != d {
            return Err(DataError::Shape(format!(
                "x has {d} columns but {} names were given",
                column_names.len()
            )));
        }
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        if d == 0 {
            return Err(DataError::NoCovariates);
        }
        for (i, &yi) in y.iter().enumerate() {
            if !(yi > 0.0 && yi.is_finite()) {
                return Err(DataError::InvalidDuration { row: i + 1, value: yi });
            }
        }
        for ((i, j), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: i + 1,
                    column: column_names[j].clone(),
                });
            }
        }
        Ok(Self {
            x,
            y,
            delta,
            column_names,
        })
    }

    /// Builds a dataset with generated column names `x1..xd`.
    pub fn from_parts(x: Array2<f64>, y: Vec<f64>, delta: Vec<bool>) -> Result<Self, DataError> {
        let names = default_column_names(x.ncols());
        Self::new(x, y, delta, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_events(&self) -> usize {
        self.delta.iter().filter(|&&e| e).count()
    }

    /// Rows `indices`, in the given order. Duplicates are allowed.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(DataError::InvalidArgument(format!("row index {bad} out of range")));
        }
        let x = self.x.select(Axis(0), indices);
        let y = indices.iter().map(|&i| self.y[i]).collect();
        let delta = indices.iter().map(|&i| self.delta[i]).collect();
        Self::new(x, y, delta, self.column_names.clone())
    }

    /// Columns `columns`, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self, DataError> {
        if let Some(&bad) = columns.iter().find(|&&j| j >= self.d()) {
            return Err(DataError::InvalidArgument(format!("column index {bad} out of range")));
        }
        let x = self.x.select(Axis(1), columns);
        let names = columns.iter().map(|&j| self.column_names[j].clone()).collect();
        Self::new(x, self.y.clone(), self.delta.clone(), names)
    }

    /// Centers each column and scales it to unit (population) variance.
    /// Constant columns are only centered.
    pub fn standardized(&self) -> Self {
        let mut x = self.x.clone();
        let n = self.n() as f64;
        for mut col in x.columns_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
        }
        Self {
            x,
            y: self.y.clone(),
            delta: self.delta.clone(),
            column_names: self.column_names.clone(),
        }
    }
}

pub(crate) fn default_column_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}
