//! # cmix-core
//!
//! Supervised mixture models for right-censored durations.
//!
//! A population is modelled as a mixture of `K` latent risk classes. Each
//! class has its own duration distribution (geometric, or discrete Weibull
//! with a shared scale), and the probability of belonging to a class is a
//! multinomial-logistic function of the covariates. Coefficients are
//! Elastic-Net penalized, so the model stays usable when `d` is large.
//!
//! Estimation runs an EM loop whose coefficient M-step is solved with a
//! bounded limited-memory quasi-Newton method (see [`qnem`]). The CURE
//! model is the special case in which the lowest-risk class never fails.
//!
//! The crate also provides:
//!
//! * [`data`]: datasets, CSV I/O and univariate Cox screening,
//! * [`distributions`]: duration laws and the Kaplan-Meier estimator,
//! * [`metrics`]: IPCW concordance, time-dependent AUC and selection AUC,
//! * [`cv`]: penalty grids and V-fold cross-validation with the one-SE rule,
//! * [`sim`]: the Monte Carlo generator and benchmark harness.
//!
//! ```
//! use cmix_core::qnem::{fit, FitConfig};
//! use cmix_core::sim::{SimSpec, generate_dataset};
//!
//! let spec = SimSpec { n: 80, seed: 3, ..SimSpec::default() };
//! let data = generate_dataset(&spec).unwrap().data;
//! let config = FitConfig { gamma: 0.01, ..FitConfig::default() };
//! let (params, trace) = fit(&data, &config).unwrap();
//! assert_eq!(params.n_classes(), 2);
//! assert!(trace.n_iters > 0);
//! ```

pub mod cv;
pub mod data;
pub mod distributions;
mod error;
pub mod metrics;
pub mod qnem;
pub mod sim;

pub use data::{ColumnScheme, ScreeningResult, SurvivalDataset};
pub use distributions::{DiscreteWeibullDist, GeometricDist, KaplanMeierCurve, KmTarget};
pub use error::{Error, Result};
pub use metrics::{AucCurve, RiskScores};
pub use qnem::{CmixParams, FitConfig, FitTrace, Parameterization, Posterior};
pub use sim::{Scenario, SimReport, SimSpec};
