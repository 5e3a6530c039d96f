use thiserror::Error;

use crate::{cv::CvError, data::DataError, distributions::DistError, metrics::MetricsError};
use crate::{qnem::FitError, sim::SimError};

/// Umbrella error for callers that drive several modules at once.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Fit(e) => e.is_numerical(),
            Error::Cv(CvError::Fit(e)) => e.is_numerical(),
            Error::Sim(SimError::Fit(e)) => e.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
