use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cmix_core::data::{load_csv, ColumnScheme};
use cmix_core::qnem::{fit, predict_scores, FitConfig};
use serde_json::Value;
use tempfile::TempDir;

fn cmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cmix(args);
    assert!(
        out.status.success(),
        "cmix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    cmix(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(name: &str, value: &Value) {
    let schema_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.json"));
    let schema: Value = serde_json::from_str(&fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("valid schema");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn toy_csv(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("toy.csv");
    fs::write(
        &path,
        "y,delta,age,dose\n3,1,0.5,1.0\n1,1,1.5,-0.2\n8,0,-0.3,0.7\n2,1,2.0,0.1\n12,1,-1.2,0.9\n\
         5,0,0.0,-1.0\n1,1,1.1,0.4\n9,1,-0.8,-0.6\n4,1,0.2,0.3\n15,0,-1.5,1.2\n",
    )
    .unwrap();
    path
}

fn simulated_csv(dir: &TempDir, n: &str, d: &str, seed: &str) -> PathBuf {
    let path = dir.path().join(format!("sim_{seed}.csv"));
    ok(&["simulate", "--n", n, "--d", d, "--s", "3", "--seed", seed, "--dataset-out", p(&path)]);
    path
}

#[test]
fn every_subcommand_has_help() {
    ok(&["--help"]);
    for sub in ["fit", "predict", "cv", "metrics", "simulate", "screen"] {
        let out = ok(&[sub, "--help"]);
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn invalid_flag_combinations_exit_2() {
    let dir = TempDir::new().unwrap();
    let input = toy_csv(&dir);
    let model = dir.path().join("m.json");
    let (i, m) = (p(&input), p(&model));
    assert_eq!(code(&["fit", "--input", i, "--output", m, "--gamma", "0.1", "--cv"]), 2);
    assert_eq!(code(&["fit", "--input", i, "--output", m]), 2);
    assert_eq!(code(&["fit", "--input", i, "--output", m, "--gamma", "0.1", "--folds", "3"]), 2);
    assert_eq!(
        code(&["fit", "--input", i, "--output", m, "--gamma", "0.1", "--cure", "--parameterization", "weibull"]),
        2
    );
    assert_eq!(code(&["fit", "--input", i, "--output", m, "--gamma", "-1"]), 2);
    assert_eq!(code(&["fit", "--input", i, "--output", m, "--gamma", "0.1", "--bogus"]), 2);
    assert_eq!(code(&["fit", "--input", "/nonexistent.csv", "--output", m, "--gamma", "0.1"]), 2);
    assert_eq!(code(&["simulate"]), 2);
    assert_eq!(code(&["simulate", "--rho", "1.5", "--dataset-out", p(&dir.path().join("x.csv"))]), 2);
    assert_eq!(code(&["metrics", "--input", i, "--scores", i, "--epsilon", "1"]), 2);
    assert!(!model.exists());
}

#[test]
fn huge_penalty_zeroes_coefficients() {
    let dir = TempDir::new().unwrap();
    let input = toy_csv(&dir);
    let model = dir.path().join("m.json");
    let out = ok(&["fit", "--input", p(&input), "--output", p(&model), "--gamma", "1e6"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("iterations"));
    let v = read_json(&model);
    assert_schema("model", &v);
    assert!(v["betas"][0].as_array().unwrap().iter().all(|b| b.as_f64() == Some(0.0)));
    assert_eq!(v["column_names"], serde_json::json!(["age", "dose"]));

    let mut broken = v.clone();
    broken.as_object_mut().unwrap().remove("betas");
    let schema: Value =
        serde_json::from_str(&fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas/model.json")).unwrap())
            .unwrap();
    assert!(!jsonschema::validator_for(&schema).unwrap().is_valid(&broken));
}

#[test]
fn cure_flag_freezes_first_rate() {
    let dir = TempDir::new().unwrap();
    let input = simulated_csv(&dir, "80", "5", "4");
    let model = dir.path().join("m.json");
    ok(&["fit", "--input", p(&input), "--output", p(&model), "--gamma", "0.01", "--cure"]);
    let v = read_json(&model);
    assert_schema("model", &v);
    assert_eq!(v["cure_mode"], true);
    assert_eq!(v["alphas"][0].as_f64(), Some(0.0));
}

#[test]
fn predictions_match_the_library() {
    let dir = TempDir::new().unwrap();
    let input = simulated_csv(&dir, "120", "6", "9");
    let model = dir.path().join("m.json");
    let scores = dir.path().join("scores.csv");
    ok(&["fit", "--input", p(&input), "--output", p(&model), "--gamma", "0.02"]);
    ok(&["predict", "--model", p(&model), "--input", p(&input), "--output", p(&scores)]);

    let data = load_csv(&input, ColumnScheme::Header).unwrap();
    let (params, _) = fit(&data, &FitConfig { gamma: 0.02, ..FitConfig::default() }).unwrap();
    let expected = predict_scores(&params, data.x()).unwrap();
    let text = fs::read_to_string(&scores).unwrap();
    let got: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(got, expected.as_slice());
}

#[test]
fn survival_at_zero_is_one_and_columns_are_checked() {
    let dir = TempDir::new().unwrap();
    let input = toy_csv(&dir);
    let model = dir.path().join("m.json");
    ok(&["fit", "--input", p(&input), "--output", p(&model), "--gamma", "0.05"]);
    let out = ok(&["predict", "--model", p(&model), "--input", p(&input), "--epsilon", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("score,survival"));
    for line in lines {
        assert_eq!(line.split(',').nth(1), Some("1"));
    }
    // Column order does not matter, names do.
    let swapped = dir.path().join("swapped.csv");
    fs::write(&swapped, "dose,age\n1.0,0.5\n-0.2,1.5\n").unwrap();
    ok(&["predict", "--model", p(&model), "--input", p(&swapped)]);
    let wrong = dir.path().join("wrong.csv");
    fs::write(&wrong, "age,weight\n1.0,0.5\n").unwrap();
    let out = cmix(&["predict", "--model", p(&model), "--input", p(&wrong)]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("dose") && msg.contains("weight"), "{msg}");
}

#[test]
fn cv_is_deterministic_given_seed() {
    let dir = TempDir::new().unwrap();
    let input = simulated_csv(&dir, "80", "5", "2");
    let run = |seed: &str| {
        let out = ok(&["cv", "--input", p(&input), "--grid-points", "8", "--seed", seed, "--jobs", "1"]);
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(run("5"), run("5"));
    let v: Value = serde_json::from_str(&run("5")).unwrap();
    assert_schema("cv", &v);
}

#[test]
fn end_to_end_pipeline_emits_valid_json() {
    let dir = TempDir::new().unwrap();
    let path = |name: &str| dir.path().join(name);
    let raw = path("raw.csv");
    let sim_json = path("sim.json");
    ok(&[
        "simulate", "--n", "150", "--d", "40", "--s", "5", "--seed", "21", "--dataset-out", p(&raw), "--output",
        p(&sim_json),
    ]);
    assert_schema("simulate", &read_json(&sim_json));

    let reduced = path("reduced.csv");
    let screen_json = path("screen.json");
    ok(&["screen", "--input", p(&raw), "--top", "10", "--dataset-out", p(&reduced), "--output", p(&screen_json)]);
    let screen = read_json(&screen_json);
    assert_schema("screen", &screen);
    assert_eq!(screen["ranked"].as_array().unwrap().len(), 10);

    let cv_json = path("cv.json");
    ok(&["cv", "--input", p(&reduced), "--grid-points", "10", "--seed", "1", "--output", p(&cv_json)]);
    assert_schema("cv", &read_json(&cv_json));

    let model = path("model.json");
    ok(&["fit", "--input", p(&reduced), "--cv", "--grid-points", "10", "--seed", "1", "--output", p(&model)]);
    let m = read_json(&model);
    assert_schema("model", &m);
    assert_eq!(m["gamma"], read_json(&cv_json)["chosen_gamma"]);

    let scores = path("scores.csv");
    ok(&["predict", "--model", p(&model), "--input", p(&reduced), "--epsilon", "3", "--output", p(&scores)]);
    let metrics_json = path("metrics.json");
    ok(&[
        "metrics", "--input", p(&reduced), "--scores", p(&scores), "--epsilon", "3", "--survival", p(&scores),
        "--output", p(&metrics_json),
    ]);
    let metrics = read_json(&metrics_json);
    assert_schema("metrics", &metrics);
    assert!(metrics["c_index"].as_f64().unwrap() > 0.5);
}

#[test]
fn simulate_benchmark_and_csv_outputs() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, "n = 60\nd = 8\ns = 3\nscenario = \"cure\"\nseed = 4\n").unwrap();
    let report = dir.path().join("report.json");
    let rows = dir.path().join("rows.csv");
    let auc = dir.path().join("auc.csv");
    let args = [
        "simulate", "--spec", p(&spec), "--replicates", "2", "--models", "cmix-geometric,cure", "--gamma", "0.01",
        "--auc-times", "2,5", "--jobs", "1", "--output", p(&report), "--replicates-csv", p(&rows), "--auc-csv",
        p(&auc),
    ];
    ok(&args);
    let v = read_json(&report);
    assert_schema("simulate", &v);
    assert_eq!(v["spec"]["pi0"].as_f64(), Some(0.2));
    assert_eq!(v["report"]["models"].as_array().unwrap().len(), 2);
    assert_eq!(fs::read_to_string(&rows).unwrap().lines().count(), 5);
    assert_eq!(fs::read_to_string(&auc).unwrap().lines().count(), 5);
    let first = fs::read_to_string(&report).unwrap();
    ok(&args);
    assert_eq!(fs::read_to_string(&report).unwrap(), first);
}
