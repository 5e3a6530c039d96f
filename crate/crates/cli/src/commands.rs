use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use cmix_core::cv::{cross_validate, fit_with_cv, CvError, CvPlan};
use cmix_core::data::{load_csv, DataError, read_covariates, save_csv, screen_top_d, ColumnScheme};
use cmix_core::metrics::{auc_t, MetricsError, concordance_ipcw, default_auc_times, default_tau, horizon_survival_auc};
use cmix_core::qnem::{fit, FitError, predict_scores, predict_survival, subgroup_curves, FitConfig, ModelFile};
use cmix_core::sim::{
    generate_dataset, run_benchmark, SimError, write_auc_csv, write_replicates_csv, BenchOptions, ModelKind, SimSpec,
};
use cmix_core::{Error, SurvivalDataset};
use log::info;
use serde::Serialize;

use crate::{Command, CvArgs, CvOptions, FitArgs, MetricsArgs, ModelArgs, PredictArgs, ScreenArgs, SimulateArgs};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        })*
    };
}

via_core_error!(DataError, FitError, CvError, MetricsError, SimError);

type Outcome = Result<(), Failure>;

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::invalid(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| io_failure(path, e))
}

/// Pretty JSON to `path`, or to standard output.
fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::invalid(e.to_string()))?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| io_failure(p, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn set_jobs(jobs: Option<usize>) -> Outcome {
    let threads = match jobs {
        Some(0) => return Err(Failure::invalid("--jobs must be at least 1")),
        Some(j) => j,
        None => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::invalid(e.to_string()))
}

fn load(path: &Path) -> Result<SurvivalDataset, Failure> {
    load_csv(path, ColumnScheme::Header).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn template(model: &ModelArgs) -> Result<FitConfig, Failure> {
    let config = FitConfig {
        eta: model.eta,
        n_classes: model.classes,
        max_iter: model.max_iter,
        rel_tol: model.tol,
        parameterization: model.parameterization.into(),
        cure_mode: model.cure,
        ..FitConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn plan(options: &CvOptions) -> CvPlan {
    let defaults = CvPlan::default();
    CvPlan {
        v_folds: options.folds.unwrap_or(defaults.v_folds),
        n_grid: options.grid_points.unwrap_or(defaults.n_grid),
        tau: options.tau,
        parallel: true,
        ..defaults
    }
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Screen(args) => cmd_screen(args),
    }
}

fn cmd_fit(args: FitArgs) -> Outcome {
    let cv_only = [
        ("--folds", args.cv_options.folds.is_some()),
        ("--grid-points", args.cv_options.grid_points.is_some()),
        ("--tau", args.cv_options.tau.is_some()),
    ];
    match (args.gamma, args.cv) {
        (Some(_), true) => return Err(Failure::invalid("--gamma and --cv are mutually exclusive")),
        (None, false) => return Err(Failure::invalid("one of --gamma or --cv is required")),
        (Some(g), false) => {
            if let Some((flag, _)) = cv_only.iter().find(|(_, set)| *set) {
                return Err(Failure::invalid(format!("{flag} only applies with --cv")));
            }
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Failure::invalid(format!("--gamma must be finite and >= 0, got {g}")));
            }
        }
        (None, true) => {}
    }
    let config = template(&args.model)?;
    set_jobs(if args.cv { args.cv_options.jobs } else { Some(1) })?;
    let data = load(&args.model.input)?;

    let (params, trace, gamma) = match args.gamma {
        Some(gamma) => {
            let (p, t) = fit(&data, &FitConfig { gamma, ..config })?;
            (p, t, gamma)
        }
        None => {
            let (cv, p, t) = fit_with_cv(&data, &plan(&args.cv_options), &config, args.cv_options.seed)?;
            info!("cross-validation chose gamma = {}", cv.chosen_gamma);
            (p, t, cv.chosen_gamma)
        }
    };
    let mut file = ModelFile::new(&params, &trace, data.column_names());
    file.eta = Some(args.model.eta);
    file.gamma = Some(gamma);
    file.subgroups = Some(subgroup_curves(&params, &data)?);
    file.save(&args.output)?;
    println!(
        "objective {:.12} iterations {} converged {} gamma {}",
        trace.final_objective().unwrap_or(f64::NAN),
        trace.n_iters,
        trace.converged,
        gamma
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Outcome {
    set_jobs(Some(1))?;
    if let Some(e) = args.epsilon {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Failure::invalid(format!("--epsilon must be finite and >= 0, got {e}")));
        }
    }
    let file = ModelFile::load(&args.model).map_err(|e| Failure::invalid(format!("{}: {e}", args.model.display())))?;
    let params = file.params()?;
    let table = read_covariates(open(&args.input)?)?;
    let x = if file.column_names.is_empty() {
        if table.names.len() != params.d() {
            return Err(Failure::invalid(format!(
                "model has {} coefficients but the input has {} covariates",
                params.d(),
                table.names.len()
            )));
        }
        table.x.clone()
    } else {
        table.aligned_to(&file.column_names)?
    };
    let scores = predict_scores(&params, &x)?;
    let survival = match args.epsilon {
        Some(eps) => {
            let curves = file
                .subgroups
                .as_ref()
                .ok_or_else(|| Failure::invalid("model file has no subgroup curves; refit it with `cmix fit`"))?;
            Some(predict_survival(&params, &x, &curves.low, &curves.high, eps)?)
        }
        None => None,
    };

    let out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Failure::invalid(e.to_string());
    if survival.is_some() {
        w.write_record(["score", "survival"]).map_err(csv_err)?;
    } else {
        w.write_record(["score"]).map_err(csv_err)?;
    }
    for (i, m) in scores.as_slice().iter().enumerate() {
        match &survival {
            Some(s) => w.write_record([m.to_string(), s[i].to_string()]),
            None => w.write_record([m.to_string()]),
        }
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Failure::invalid(e.to_string()))?;
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Outcome {
    let config = template(&args.model)?;
    set_jobs(args.cv_options.jobs)?;
    let data = load(&args.model.input)?;
    let result = cross_validate(&data, &plan(&args.cv_options), &config, args.cv_options.seed)?;
    emit_json(&result, args.output.as_deref())
}

fn read_column(path: &Path, name: &str) -> Result<Vec<f64>, Failure> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| Failure::invalid(e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Failure::invalid(format!("{}: missing column '{name}'", path.display())))?;
    let mut values = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Failure::invalid(e.to_string()))?;
        let field = record.get(col).unwrap_or("").trim();
        let v: f64 = field.parse().map_err(|_| {
            Failure::invalid(format!("{}: row {}: cannot parse '{field}' as a number", path.display(), r + 1))
        })?;
        values.push(v);
    }
    Ok(values)
}

#[derive(Serialize)]
struct MetricsReport {
    n: usize,
    tau: f64,
    c_index: f64,
    comparable_pairs: usize,
    auc_times: Vec<f64>,
    auc: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    survival_auc: Option<f64>,
}

fn cmd_metrics(args: MetricsArgs) -> Outcome {
    set_jobs(Some(1))?;
    let data = load(&args.input)?;
    let scores = read_column(&args.scores, "score")?;
    if scores.len() != data.n() {
        return Err(Failure::invalid(format!(
            "{} scores for {} subjects",
            scores.len(),
            data.n()
        )));
    }
    let tau = args.tau.unwrap_or_else(|| default_tau(data.y()));
    let conc = concordance_ipcw(data.y(), data.delta(), &scores, tau)?;
    let times = args.times.unwrap_or_else(|| default_auc_times(data.y(), data.delta()));
    let curve = auc_t(data.y(), data.delta(), &scores, &times)?;
    let survival_auc = match (args.epsilon, &args.survival) {
        (Some(eps), Some(path)) => {
            let s = read_column(path, "survival")?;
            if s.len() != data.n() {
                return Err(Failure::invalid(format!("{} survival values for {} subjects", s.len(), data.n())));
            }
            Some(horizon_survival_auc(&s, data.y(), data.delta(), eps)?)
        }
        _ => None,
    };
    let report = MetricsReport {
        n: data.n(),
        tau,
        c_index: conc.c_index,
        comparable_pairs: conc.comparable_pairs,
        auc_times: curve.times,
        auc: curve.auc,
        epsilon: args.epsilon,
        survival_auc,
    };
    emit_json(&report, args.output.as_deref())
}

fn build_spec(args: &SimulateArgs) -> Result<SimSpec, Failure> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            SimSpec::from_toml_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?
        }
        None => SimSpec::for_scenario(args.scenario.map(Into::into).unwrap_or_default()),
    };
    if let Some(s) = args.scenario {
        spec.scenario = s.into();
    }
    macro_rules! override_fields {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { spec.$f = v; } )* };
    }
    override_fields!(n, d, s, nu, rho, pi0, gap, r_cf, r_c, alpha0, alpha1, seed);
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct DatasetSummary {
    path: String,
    n: usize,
    d: usize,
    events: usize,
    alpha_c: f64,
}

#[derive(Serialize)]
struct SimulateOutput {
    spec: SimSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<DatasetSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<cmix_core::SimReport>,
}

fn cmd_simulate(args: SimulateArgs) -> Outcome {
    if args.dataset_out.is_none() && args.replicates == 0 {
        return Err(Failure::invalid("nothing to do: pass --dataset-out and/or --replicates N"));
    }
    if args.replicates == 0 && (args.replicates_csv.is_some() || args.auc_csv.is_some()) {
        return Err(Failure::invalid("--replicates-csv and --auc-csv need --replicates N"));
    }
    let spec = build_spec(&args)?;
    set_jobs(args.jobs)?;

    let dataset = match &args.dataset_out {
        Some(path) => {
            let sim = generate_dataset(&spec)?;
            save_csv(&sim.data, path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            Some(DatasetSummary {
                path: path.display().to_string(),
                n: sim.data.n(),
                d: sim.data.d(),
                events: sim.data.n_events(),
                alpha_c: sim.alpha_c,
            })
        }
        None => None,
    };

    let report = if args.replicates > 0 {
        let models: Vec<ModelKind> = args.models.iter().map(|&m| m.into()).collect();
        let defaults = BenchOptions::default();
        let options = BenchOptions {
            eta: args.eta,
            cv: CvPlan {
                v_folds: args.folds,
                n_grid: args.grid_points.unwrap_or(defaults.cv.n_grid),
                ..defaults.cv.clone()
            },
            fixed_gamma: args.gamma,
            test_set: args.test_set.into(),
            auc_times: args.auc_times.clone(),
            ..defaults
        };
        let report = run_benchmark(&spec, args.replicates, &models, &options)?;
        if let Some(path) = &args.replicates_csv {
            write_replicates_csv(&report, create(path)?)?;
        }
        if let Some(path) = &args.auc_csv {
            write_auc_csv(&report, create(path)?)?;
        }
        Some(report)
    } else {
        None
    };
    emit_json(&SimulateOutput { spec, dataset, report }, args.output.as_deref())
}

#[derive(Serialize)]
struct ScreenOutput {
    ranked: Vec<usize>,
    names: Vec<String>,
    scores: Vec<f64>,
    flagged: Vec<usize>,
}

fn cmd_screen(args: ScreenArgs) -> Outcome {
    set_jobs(Some(1))?;
    let data = load(&args.input)?;
    let result = screen_top_d(&data, args.top, args.tau)?;
    if let Some(path) = &args.dataset_out {
        let reduced = data.select_columns(&result.ranked_columns)?;
        save_csv(&reduced, path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    }
    let names = result
        .ranked_columns
        .iter()
        .map(|&j| data.column_names()[j].clone())
        .collect();
    emit_json(
        &ScreenOutput {
            ranked: result.ranked_columns,
            names,
            scores: result.scores,
            flagged: result.flagged,
        },
        args.output.as_deref(),
    )
}
