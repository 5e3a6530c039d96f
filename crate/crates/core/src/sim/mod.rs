//! Monte Carlo generator and benchmark harness.
//!
//! A scenario draws a high-risk index set `H`, Gaussian covariates with
//! Toeplitz correlation shifted by `±gap` on the active and confusion
//! columns, latent classes from the logistic weights of
//! `β = (ν, ..., ν, 0, ..., 0)`, durations from the scenario's law, and
//! geometric censoring tuned to a target rate.

mod bench;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, SurvivalDataset};
use crate::qnem::FitError;

pub use bench::{
    run_benchmark, selection_sweep, write_auc_csv, write_replicates_csv, AucSummary, BenchOptions, ModelKind,
    ModelReport, SimReport, SweepResult, TestSet,
};

/// Pilot size used to calibrate censoring in the Cox scenario.
pub const COX_PILOT: usize = 100_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error(
        "no censoring rate in (0, 1) reaches r_c = {r_c} with alpha0 = {alpha0}, alpha1 = {alpha1}, pi0 = {pi0}"
    )]
    NoCensoringRoot { r_c: f64, alpha0: f64, alpha1: f64, pi0: f64 },
    #[error("Cox censoring calibration could not reach r_c = {r_c} (achievable range {lo:.4}..{hi:.4})")]
    Calibration { r_c: f64, lo: f64, hi: f64 },
    #[error("spec file: {0}")]
    SpecFile(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cv(#[from] Box<crate::cv::CvError>),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<crate::cv::CvError> for SimError {
    fn from(e: crate::cv::CvError) -> Self {
        match e {
            crate::cv::CvError::Fit(f) => SimError::Fit(f),
            other => SimError::Cv(Box::new(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Geometric durations for both latent classes.
    #[default]
    Cmix,
    /// Class 0 never fails; class 1 is geometric.
    Cure,
    /// Exponential proportional hazards, `T = -ln(U) exp(-xᵀβ)`.
    Cox,
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cmix" => Ok(Self::Cmix),
            "cure" => Ok(Self::Cure),
            "cox" => Ok(Self::Cox),
            other => Err(format!("unknown scenario '{other}' (expected cmix, cure or cox)")),
        }
    }
}

/// Everything needed to draw one synthetic dataset. Defaults follow the
/// reference design (`n = 100`, `d = 30`, `s = 10`, `ν = 1`, `ρ = 0.5`,
/// `π_0 = 0.75`, `gap = 0.3`, `r_cf = 0.3`, `r_c = 0.5`, `α = (0.01, 0.5)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub nu: f64,
    pub rho: f64,
    pub pi0: f64,
    pub gap: f64,
    pub r_cf: f64,
    pub r_c: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n: 100,
            d: 30,
            s: 10,
            nu: 1.0,
            rho: 0.5,
            pi0: 0.75,
            gap: 0.3,
            r_cf: 0.3,
            r_c: 0.5,
            alpha0: 0.01,
            alpha1: 0.5,
            scenario: Scenario::Cmix,
            seed: 0,
        }
    }
}

impl SimSpec {
    /// Reference design for `scenario`; cure simulations use `π_0 = 0.2`
    /// since their censoring rate can never fall below `π_0`.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let pi0 = if scenario == Scenario::Cure { 0.2 } else { 0.75 };
        Self {
            scenario,
            pi0,
            ..Self::default()
        }
    }

    /// Parses a TOML spec. Missing keys take the scenario's reference values.
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| SimError::SpecFile(e.to_string()))?;
        let mut spec: SimSpec = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| SimError::SpecFile(e.to_string()))?;
        if spec.scenario == Scenario::Cure && !table.contains_key("pi0") {
            spec.pi0 = 0.2;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::InvalidSpec(m));
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        if self.d == 0 || self.s == 0 || self.s > self.d {
            return fail(format!("need 1 <= s <= d, got s = {}, d = {}", self.s, self.d));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return fail(format!("pi0 must lie in [0, 1], got {}", self.pi0));
        }
        if !(0.0..=1.0).contains(&self.r_cf) {
            return fail(format!("r_cf must lie in [0, 1], got {}", self.r_cf));
        }
        if !(self.r_c > 0.0 && self.r_c < 1.0) {
            return fail(format!("r_c must lie in (0, 1), got {}", self.r_c));
        }
        for (name, a) in [("alpha0", self.alpha0), ("alpha1", self.alpha1)] {
            if !(a > 0.0 && a < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {a}"));
            }
        }
        if !(self.gap >= 0.0 && self.gap.is_finite()) || !self.nu.is_finite() {
            return fail("gap must be >= 0 and nu finite".into());
        }
        Ok(())
    }

    /// `(ν, ..., ν, 0, ..., 0)` with `s` active entries.
    pub fn true_beta(&self) -> Array1<f64> {
        (0..self.d).map(|j| if j < self.s { self.nu } else { 0.0 }).collect()
    }

    /// Number of shifted columns: the actives plus `⌊(d - s) r_cf⌋` confusion factors.
    pub fn shifted_columns(&self) -> usize {
        self.s + ((self.d - self.s) as f64 * self.r_cf).floor() as usize
    }
}

/// One synthetic dataset with its latent structure.
#[derive(Debug, Clone)]
pub struct SimDataset {
    pub data: SurvivalDataset,
    /// Latent class of each subject.
    pub z: Vec<usize>,
    /// Uncensored durations; `f64::INFINITY` for cured subjects.
    pub t: Vec<f64>,
    pub high_risk: Vec<bool>,
    pub beta_true: Array1<f64>,
    pub alpha_c: f64,
}

/// `⌊(1 - π_0) n⌋` indices drawn uniformly without replacement, as a membership mask.
pub fn assign_groups(spec: &SimSpec, rng: &mut impl Rng) -> Vec<bool> {
    let size = ((1.0 - spec.pi0) * spec.n as f64).floor() as usize;
    let mut mask = vec![false; spec.n];
    for i in sample(rng, spec.n, size.min(spec.n)) {
        mask[i] = true;
    }
    mask
}

/// Lower Cholesky factor of the Toeplitz correlation `Σ_jk = ρ^|j-k|`.
pub fn toeplitz_cholesky(d: usize, rho: f64) -> Array2<f64> {
    let sigma = DMatrix::from_fn(d, d, |j, k| rho.powi((j as i32 - k as i32).abs()));
    let l = sigma
        .cholesky()
        .expect("Toeplitz correlation with |rho| < 1 is positive definite")
        .l();
    Array2::from_shape_fn((d, d), |(j, k)| l[(j, k)])
}

/// Gaussian rows with Toeplitz correlation, shifted by `+gap` for high-risk
/// subjects and `-gap` otherwise on the first [`SimSpec::shifted_columns`] columns.
pub fn gen_covariates(spec: &SimSpec, high_risk: &[bool], rng: &mut impl Rng) -> Array2<f64> {
    let (n, d) = (spec.n, spec.d);
    let z = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let mut x = if spec.rho == 0.0 {
        z
    } else {
        z.dot(&toeplitz_cholesky(d, spec.rho).t())
    };
    let shifted = spec.shifted_columns();
    for i in 0..n {
        let shift = if high_risk[i] { spec.gap } else { -spec.gap };
        for j in 0..shifted {
            x[[i, j]] += shift;
        }
    }
    x
}

fn geometric(alpha: f64, rng: &mut impl Rng) -> f64 {
    (Geometric::new(alpha).expect("rate in (0, 1]").sample(rng) + 1) as f64
}

/// Latent classes and uncensored durations for the scenario.
pub fn gen_durations(spec: &SimSpec, x: &Array2<f64>, rng: &mut impl Rng) -> (Vec<f64>, Vec<usize>) {
    let beta = spec.true_beta();
    let lin = x.dot(&beta);
    let mut t = Vec::with_capacity(spec.n);
    let mut z = Vec::with_capacity(spec.n);
    for &eta in lin.iter() {
        match spec.scenario {
            Scenario::Cmix | Scenario::Cure => {
                let p = 1.0 / (1.0 + (-eta).exp());
                let class = usize::from(rng.random::<f64>() < p);
                let duration = match (spec.scenario, class) {
                    (Scenario::Cure, 0) => f64::INFINITY,
                    (_, 0) => geometric(spec.alpha0, rng),
                    _ => geometric(spec.alpha1, rng),
                };
                z.push(class);
                t.push(duration);
            }
            Scenario::Cox => {
                let u: f64 = rng.random();
                // 1 - u lies in (0, 1], so the log is finite.
                t.push(-(1.0 - u).ln() * (-eta).exp());
                z.push(0);
            }
        }
    }
    (t, z)
}

/// Geometric censoring rate giving an expected censoring fraction `r_c`
/// when class 0 (rate `alpha0`, proportion `pi0`) and class 1 (rate
/// `alpha1`) durations are censored by `C ~ G(α_c)` with `δ = 1{T <= C}`.
///
/// Writing `ᾱ = 1 - α`, the event probability `1 - r_c` leads to
/// `r̄_c ᾱ_0 ᾱ_1 ᾱ_c² + (α_0 π_0 ᾱ_1 + α_1 π̄_0 ᾱ_0 - r̄_c(ᾱ_0 + ᾱ_1)) ᾱ_c + (r̄_c - α_0 π_0 - α_1 π̄_0) = 0`.
/// `alpha0 = 0` describes a cured class.
pub fn solve_censoring_rate(r_c: f64, alpha0: f64, alpha1: f64, pi0: f64) -> Result<f64, SimError> {
    let err = || SimError::NoCensoringRoot { r_c, alpha0, alpha1, pi0 };
    if !(r_c > 0.0 && r_c < 1.0) || !(0.0..1.0).contains(&alpha0) || !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(err());
    }
    if !(0.0..=1.0).contains(&pi0) {
        return Err(err());
    }
    let rb = 1.0 - r_c;
    let (a0b, a1b, pib) = (1.0 - alpha0, 1.0 - alpha1, 1.0 - pi0);
    let a = rb * a0b * a1b;
    let b = alpha0 * pi0 * a1b + alpha1 * pib * a0b - rb * (a0b + a1b);
    let c = rb - alpha0 * pi0 - alpha1 * pib;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return Err(err());
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = [q / a, if q != 0.0 { c / q } else { f64::NAN }];
    // `ᾱ_c = 1` is the no-censoring limit; a cured class makes it a spurious root.
    let root = roots
        .into_iter()
        .filter(|r| *r > 0.0 && *r < 1.0 - 1e-12)
        .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.max(r))))
        .ok_or_else(err)?;
    Ok(1.0 - root)
}

/// Expected censoring fraction `P(C < T)` for `C ~ G(α_c)` on `{1, 2, ...}`.
fn expected_censoring(t: &[f64], alpha_c: f64) -> f64 {
    let ln_keep = (-alpha_c).ln_1p();
    t.iter().map(|&v| -(ln_keep * (v.ceil() - 1.0)).exp_m1()).sum::<f64>() / t.len() as f64
}

/// Bisection for the censoring rate of the Cox scenario, on a pilot sample of
/// durations drawn from the same covariate law.
pub fn calibrate_cox_censoring(spec: &SimSpec, rng: &mut impl Rng) -> Result<f64, SimError> {
    // The linear predictor of a shifted Toeplitz Gaussian row is itself a
    // two-component Gaussian mixture.
    let beta = spec.true_beta();
    let l = toeplitz_cholesky(spec.d, spec.rho);
    let sd = l.t().dot(&beta).mapv(|v| v * v).sum().sqrt();
    let shift: f64 = beta.iter().take(spec.shifted_columns()).sum::<f64>() * spec.gap;
    let p_high = ((1.0 - spec.pi0) * spec.n as f64).floor() / spec.n as f64;
    let pilot: Vec<f64> = (0..COX_PILOT)
        .map(|_| {
            let centre = if rng.random::<f64>() < p_high { shift } else { -shift };
            let eta = centre + sd * rng.sample::<f64, _>(StandardNormal);
            let u: f64 = rng.random();
            -(1.0 - u).ln() * (-eta).exp()
        })
        .collect();
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    let (r_lo, r_hi) = (expected_censoring(&pilot, lo), expected_censoring(&pilot, hi));
    if !(spec.r_c > r_lo && spec.r_c < r_hi) {
        return Err(SimError::Calibration {
            r_c: spec.r_c,
            lo: r_lo,
            hi: r_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_censoring(&pilot, mid) < spec.r_c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws a full dataset from `spec` using `spec.seed`.
pub fn generate_dataset(spec: &SimSpec) -> Result<SimDataset, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let high_risk = assign_groups(spec, &mut rng);
    let x = gen_covariates(spec, &high_risk, &mut rng);
    let (t, z) = gen_durations(spec, &x, &mut rng);

    let alpha_c = match spec.scenario {
        Scenario::Cmix | Scenario::Cure => {
            // Calibrate on the realized class mix: with covariate-driven
            // membership the class-0 share need not equal π_0.
            let realized_pi0 = z.iter().filter(|&&k| k == 0).count() as f64 / spec.n as f64;
            let alpha0 = if spec.scenario == Scenario::Cure { 0.0 } else { spec.alpha0 };
            solve_censoring_rate(spec.r_c, alpha0, spec.alpha1, realized_pi0)?
        }
        Scenario::Cox => calibrate_cox_censoring(spec, &mut rng)?,
    };

    let mut y = Vec::with_capacity(spec.n);
    let mut delta = Vec::with_capacity(spec.n);
    for &ti in &t {
        let c = geometric(alpha_c, &mut rng);
        y.push(ti.min(c));
        delta.push(ti <= c);
    }
    let data = SurvivalDataset::from_parts(x, y, delta)?;
    Ok(SimDataset {
        data,
        z,
        t,
        high_risk,
        beta_true: spec.true_beta(),
        alpha_c,
    })
}
