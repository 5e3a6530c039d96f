use std::io::Write;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_dataset, SimError, SimSpec};
use crate::cv::{fit_with_cv, CvPlan};
use crate::data::SurvivalDataset;
use crate::metrics::{auc_t, c_index_ipcw, default_tau, selection_auc};
use crate::qnem::{fit, predict_scores, CmixParams, FitConfig, Parameterization};

/// Model variants a benchmark can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    CmixGeometric,
    CmixWeibull,
    Cure,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::CmixGeometric, ModelKind::CmixWeibull, ModelKind::Cure];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CmixGeometric => "cmix-geometric",
            ModelKind::CmixWeibull => "cmix-weibull",
            ModelKind::Cure => "cure",
        }
    }

    pub fn fit_config(self, eta: f64) -> FitConfig {
        let (parameterization, cure_mode) = match self {
            ModelKind::CmixGeometric => (Parameterization::Geometric, false),
            ModelKind::CmixWeibull => (Parameterization::Weibull, false),
            ModelKind::Cure => (Parameterization::Geometric, true),
        };
        FitConfig {
            eta,
            parameterization,
            cure_mode,
            ..FitConfig::default()
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model '{s}' (expected cmix-geometric, cmix-weibull or cure)"))
    }
}

/// How the evaluation sample of a replicate is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSet {
    /// An independent draw of the same size as the training set.
    #[default]
    Fresh,
    /// A random 70/30 split of a single draw.
    Split70,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    pub eta: f64,
    pub cv: CvPlan,
    /// Skip cross-validation and fit every replicate at this penalty.
    pub fixed_gamma: Option<f64>,
    pub test_set: TestSet,
    /// Times at which to evaluate AUC(t) on the test sets.
    pub auc_times: Option<Vec<f64>>,
    /// Run replicates on the rayon pool.
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            eta: 0.1,
            cv: CvPlan {
                parallel: false,
                ..CvPlan::default()
            },
            fixed_gamma: None,
            test_set: TestSet::Fresh,
            auc_times: None,
            parallel: true,
        }
    }
}

/// Mean and standard deviation of AUC(t) across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub times: Vec<f64>,
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
    pub per_replicate: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    /// Test C-index per replicate; `None` where the fit or the score failed.
    pub c_index: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub failures: usize,
    pub selection_auc: Vec<Option<f64>>,
    pub selection_auc_mean: Option<f64>,
    pub chosen_gamma: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<AucSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub spec: SimSpec,
    pub n_replicates: usize,
    pub options: BenchOptions,
    pub models: Vec<ModelReport>,
}

impl SimReport {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == kind)
    }
}

/// Outcome of one model on one replicate.
#[derive(Debug, Clone, Default)]
struct Outcome {
    c_index: Option<f64>,
    selection: Option<f64>,
    gamma: Option<f64>,
    auc: Option<Vec<Option<f64>>>,
    failed: bool,
}

/// Attempts per dataset before a replicate is declared failed.
const MAX_DRAWS: usize = 50;

/// Generator of replicate `rep`: stream `rep` of a generator seeded with `seed`.
fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Draws a dataset, redrawing when the realized class mix makes the
/// censoring target unreachable (a cured share above `r_c`).
fn draw(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<super::SimDataset, SimError> {
    let mut last = None;
    for _ in 0..MAX_DRAWS {
        match generate_dataset(&SimSpec { seed: rng.random(), ..spec.clone() }) {
            Err(e @ SimError::NoCensoringRoot { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one draw"))
}

fn train_test(
    spec: &SimSpec,
    options: &BenchOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(SurvivalDataset, SurvivalDataset, Vec<f64>), SimError> {
    let train = draw(spec, rng)?;
    let beta_true = train.beta_true.to_vec();
    match options.test_set {
        TestSet::Fresh => {
            let test = draw(spec, rng)?;
            Ok((train.data, test.data, beta_true))
        }
        TestSet::Split70 => {
            let mut idx: Vec<usize> = (0..spec.n).collect();
            idx.shuffle(rng);
            let cut = ((0.7 * spec.n as f64).round() as usize).clamp(2, spec.n - 2);
            let (a, b) = idx.split_at(cut);
            Ok((train.data.subset(a)?, train.data.subset(b)?, beta_true))
        }
    }
}

fn fit_model(
    train: &SurvivalDataset,
    kind: ModelKind,
    options: &BenchOptions,
    cv_seed: u64,
) -> Result<(CmixParams, f64), SimError> {
    let template = kind.fit_config(options.eta);
    match options.fixed_gamma {
        Some(gamma) => {
            let (params, _) = fit(train, &FitConfig { gamma, ..template })?;
            Ok((params, gamma))
        }
        None => {
            let (cv, params, _) = fit_with_cv(train, &options.cv, &template, cv_seed)?;
            Ok((params, cv.chosen_gamma))
        }
    }
}

fn evaluate(
    params: &CmixParams,
    test: &SurvivalDataset,
    beta_true: &[f64],
    auc_times: Option<&[f64]>,
) -> Result<Outcome, SimError> {
    let scores = predict_scores(params, test.x())?;
    let tau = default_tau(test.y());
    let c_index = c_index_ipcw(test.y(), test.delta(), scores.as_slice(), tau).ok();
    let selection = selection_auc(params.betas[0].as_slice().expect("contiguous"), beta_true).ok();
    let auc = auc_times.map(|times| {
        let (lo, hi) = test
            .y()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        times
            .iter()
            .map(|&t| {
                if t > lo && t < hi {
                    auc_t(test.y(), test.delta(), scores.as_slice(), &[t]).ok().and_then(|c| c.auc[0])
                } else {
                    None
                }
            })
            .collect()
    });
    Ok(Outcome {
        c_index,
        selection,
        gamma: None,
        auc,
        failed: false,
    })
}

fn run_replicate(spec: &SimSpec, models: &[ModelKind], options: &BenchOptions, rep: usize) -> Vec<Outcome> {
    let mut rng = replicate_rng(spec.seed, rep);
    let data = train_test(spec, options, &mut rng);
    let cv_seed: u64 = rng.random();
    let (train, test, beta_true) = match data {
        Ok(v) => v,
        Err(e) => {
            warn!("replicate {rep}: data generation failed: {e}");
            return vec![Outcome { failed: true, ..Outcome::default() }; models.len()];
        }
    };
    models
        .iter()
        .map(|&kind| {
            let result = fit_model(&train, kind, options, cv_seed).and_then(|(params, gamma)| {
                let mut out = evaluate(&params, &test, &beta_true, options.auc_times.as_deref())?;
                out.gamma = Some(gamma);
                Ok(out)
            });
            match result {
                Ok(out) => {
                    debug!("replicate {rep} {kind}: C = {:?}", out.c_index);
                    out
                }
                Err(e) => {
                    warn!("replicate {rep} {kind}: {e}");
                    Outcome { failed: true, ..Outcome::default() }
                }
            }
        })
        .collect()
}

/// Mean and sample standard deviation of the present values.
pub(crate) fn mean_sd(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return (None, None);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

/// Simulates `n_replicates` train/test pairs, fits each model on the training
/// set and scores it on the test set.
///
/// Replicate `r` draws all of its randomness from stream `r` of a generator
/// seeded with `spec.seed`, so reports do not depend on scheduling. A failed
/// fit is recorded as a missing value and counted.
pub fn run_benchmark(
    spec: &SimSpec,
    n_replicates: usize,
    models: &[ModelKind],
    options: &BenchOptions,
) -> Result<SimReport, SimError> {
    spec.validate()?;
    if models.is_empty() {
        return Err(SimError::InvalidSpec("at least one model is required".into()));
    }
    if let Some(times) = &options.auc_times {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(SimError::InvalidSpec("AUC times must be finite".into()));
        }
    }
    let outcomes: Vec<Vec<Outcome>> = if options.parallel {
        (0..n_replicates)
            .into_par_iter()
            .map(|rep| run_replicate(spec, models, options, rep))
            .collect()
    } else {
        (0..n_replicates).map(|rep| run_replicate(spec, models, options, rep)).collect()
    };

    let reports = models
        .iter()
        .enumerate()
        .map(|(m, &kind)| {
            let rows: Vec<&Outcome> = outcomes.iter().map(|o| &o[m]).collect();
            let c_index: Vec<Option<f64>> = rows.iter().map(|o| o.c_index).collect();
            let selection: Vec<Option<f64>> = rows.iter().map(|o| o.selection).collect();
            let (mean, sd) = mean_sd(&c_index);
            let auc = options.auc_times.as_ref().map(|times| {
                let per_replicate: Vec<Vec<Option<f64>>> = rows
                    .iter()
                    .map(|o| o.auc.clone().unwrap_or_else(|| vec![None; times.len()]))
                    .collect();
                let (mean, sd) = (0..times.len())
                    .map(|t| mean_sd(&per_replicate.iter().map(|r| r[t]).collect::<Vec<_>>()))
                    .unzip();
                AucSummary {
                    times: times.clone(),
                    mean,
                    sd,
                    per_replicate,
                }
            });
            ModelReport {
                model: kind,
                mean,
                sd,
                failures: rows.iter().filter(|o| o.failed).count(),
                selection_auc_mean: mean_sd(&selection).0,
                selection_auc: selection,
                chosen_gamma: rows.iter().map(|o| o.gamma).collect(),
                c_index,
                auc,
            }
        })
        .collect();
    Ok(SimReport {
        spec: spec.clone(),
        n_replicates,
        options: options.clone(),
        models: reports,
    })
}

/// Mean selection AUC over a `gap × r_cf` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub gaps: Vec<f64>,
    pub r_cfs: Vec<f64>,
    /// `mean[g][r]` for `gaps[g]` and `r_cfs[r]`.
    pub mean: Vec<Vec<Option<f64>>>,
    pub failures: Vec<Vec<usize>>,
}

/// Selection AUC of the C-mix geometric model across a grid of gaps and
/// confusion rates. Cell `(g, r)` uses replicate streams of a seed derived
/// from the template seed and the cell position.
pub fn selection_sweep(
    gaps: &[f64],
    r_cfs: &[f64],
    template: &SimSpec,
    n_replicates: usize,
    options: &BenchOptions,
) -> Result<SweepResult, SimError> {
    if gaps.is_empty() || r_cfs.is_empty() {
        return Err(SimError::InvalidSpec("sweep grid must not be empty".into()));
    }
    let mut mean = vec![vec![None; r_cfs.len()]; gaps.len()];
    let mut failures = vec![vec![0; r_cfs.len()]; gaps.len()];
    for (g, &gap) in gaps.iter().enumerate() {
        for (r, &r_cf) in r_cfs.iter().enumerate() {
            let cell = (g * r_cfs.len() + r) as u64;
            let spec = SimSpec {
                gap,
                r_cf,
                seed: template.seed.wrapping_add(cell.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                ..template.clone()
            };
            spec.validate()?;
            let run = |rep: usize| -> Option<f64> {
                let mut rng = replicate_rng(spec.seed, rep);
                let outcome = draw(&spec, &mut rng).and_then(|sim| {
                    let (params, _) = fit_model(&sim.data, ModelKind::CmixGeometric, options, rng.random())?;
                    Ok(selection_auc(params.betas[0].as_slice().expect("contiguous"), sim.beta_true.as_slice().expect("contiguous"))?)
                });
                outcome.map_err(|e| warn!("sweep gap={gap} r_cf={r_cf} rep {rep}: {e}")).ok()
            };
            let values: Vec<Option<f64>> = if options.parallel {
                (0..n_replicates).into_par_iter().map(run).collect()
            } else {
                (0..n_replicates).map(run).collect()
            };
            failures[g][r] = values.iter().filter(|v| v.is_none()).count();
            mean[g][r] = mean_sd(&values).0;
        }
    }
    Ok(SweepResult {
        gaps: gaps.to_vec(),
        r_cfs: r_cfs.to_vec(),
        mean,
        failures,
    })
}

/// One row per replicate and model: C-index, selection AUC and chosen penalty.
pub fn write_replicates_csv(report: &SimReport, out: impl Write) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "model", "c_index", "selection_auc", "gamma"])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for rep in 0..report.n_replicates {
        for m in &report.models {
            w.write_record([
                rep.to_string(),
                m.model.to_string(),
                cell(m.c_index[rep]),
                cell(m.selection_auc[rep]),
                cell(m.chosen_gamma[rep]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard deviation of AUC(t) per model and time.
pub fn write_auc_csv(report: &SimReport, out: impl Write) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "time", "mean", "sd"])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in &report.models {
        if let Some(auc) = &m.auc {
            for (i, t) in auc.times.iter().enumerate() {
                w.write_record([m.model.to_string(), t.to_string(), cell(auc.mean[i]), cell(auc.sd[i])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
