use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::params::{CmixParams, DurationParams, FitError, FitTrace, Parameterization};
use super::predict::SubgroupCurves;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Duration parameters of one class: a geometric rate, or `[φ, μ_k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassDuration {
    Rate(f64),
    ScaleShape([f64; 2]),
}

/// On-disk representation of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: u32,
    pub parameterization: Parameterization,
    #[serde(rename = "K")]
    pub k: usize,
    pub alphas: Vec<ClassDuration>,
    pub betas: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub cure_mode: bool,
    pub trace: FitTrace,
    #[serde(default)]
    pub column_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Training subgroup curves used for survival prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroups: Option<SubgroupCurves>,
}

impl ModelFile {
    pub fn new(params: &CmixParams, trace: &FitTrace, column_names: &[String]) -> Self {
        let alphas = match &params.durations {
            DurationParams::Geometric(a) => a.iter().map(|&v| ClassDuration::Rate(v)).collect(),
            DurationParams::Weibull { phi, mu } => mu.iter().map(|&m| ClassDuration::ScaleShape([*phi, m])).collect(),
        };
        Self {
            schema: MODEL_SCHEMA_VERSION,
            parameterization: params.parameterization(),
            k: params.n_classes(),
            alphas,
            betas: params.betas.iter().map(|b| b.to_vec()).collect(),
            intercepts: params.intercepts.clone(),
            cure_mode: params.cure_mode,
            trace: trace.clone(),
            column_names: column_names.to_vec(),
            eta: None,
            gamma: None,
            subgroups: None,
        }
    }

    pub fn params(&self) -> Result<CmixParams, FitError> {
        if self.schema != MODEL_SCHEMA_VERSION {
            return Err(FitError::ModelFile(format!("unsupported schema version {}", self.schema)));
        }
        if self.alphas.len() != self.k {
            return Err(FitError::ModelFile(format!("{} duration entries for K = {}", self.alphas.len(), self.k)));
        }
        let durations = match self.parameterization {
            Parameterization::Geometric => DurationParams::Geometric(
                self.alphas
                    .iter()
                    .map(|a| match a {
                        ClassDuration::Rate(v) => Ok(*v),
                        ClassDuration::ScaleShape(_) => Err(FitError::ModelFile("geometric model with [phi, mu] entries".into())),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Parameterization::Weibull => {
                let pairs: Vec<[f64; 2]> = self
                    .alphas
                    .iter()
                    .map(|a| match a {
                        ClassDuration::ScaleShape(p) => Ok(*p),
                        ClassDuration::Rate(_) => Err(FitError::ModelFile("Weibull model with scalar entries".into())),
                    })
                    .collect::<Result<_, _>>()?;
                if pairs.len() != 2 || pairs[0][0] != pairs[1][0] {
                    return Err(FitError::ModelFile("Weibull model needs two classes with a shared phi".into()));
                }
                DurationParams::Weibull {
                    phi: pairs[0][0],
                    mu: [pairs[0][1], pairs[1][1]],
                }
            }
        };
        let params = CmixParams {
            durations,
            betas: self.betas.iter().map(|b| Array1::from(b.clone())).collect(),
            intercepts: self.intercepts.clone(),
            cure_mode: self.cure_mode,
        };
        params.validate().map_err(|e| FitError::ModelFile(e.to_string()))?;
        if !self.column_names.is_empty() && self.column_names.len() != params.d() {
            return Err(FitError::ModelFile(format!(
                "{} column names for {} coefficients",
                self.column_names.len(),
                params.d()
            )));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String, FitError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, FitError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FitError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FitError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn trace() -> FitTrace {
        FitTrace {
            objective_history: vec![1.0 / 3.0, 0.1 + 0.2],
            n_iters: 1,
            converged: true,
            flags: vec![],
        }
    }

    #[test]
    fn geometric_round_trip_is_bit_exact() {
        let params = CmixParams {
            durations: DurationParams::Geometric(vec![0.012345678901234567, 0.4999999999999999]),
            betas: vec![array![1e-300, -2.0 / 3.0, 0.0]],
            intercepts: vec![std::f64::consts::PI],
            cure_mode: false,
        };
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        let file = ModelFile::new(&params, &trace(), &names);
        let text = file.to_json().unwrap();
        let back = ModelFile::from_json(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.params().unwrap(), params);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["K"], 2);
        assert_eq!(v["schema"], 1);
        assert_eq!(v["parameterization"], "geometric");
    }

    #[test]
    fn weibull_round_trip() {
        let params = CmixParams {
            durations: DurationParams::Weibull {
                phi: 0.3,
                mu: [0.9, 2.1],
            },
            betas: vec![array![0.5]],
            intercepts: vec![-0.1],
            cure_mode: false,
        };
        let file = ModelFile::new(&params, &trace(), &["x1".to_string()]);
        let text = file.to_json().unwrap();
        assert!(text.contains("\"weibull\""));
        assert_eq!(ModelFile::from_json(&text).unwrap().params().unwrap(), params);
    }

    #[test]
    fn cure_model_keeps_zero_rate() {
        let params = CmixParams {
            durations: DurationParams::Geometric(vec![0.0, 0.3]),
            betas: vec![array![0.5]],
            intercepts: vec![0.0],
            cure_mode: true,
        };
        let text = ModelFile::new(&params, &trace(), &[]).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["cure_mode"], true);
        assert_eq!(v["alphas"][0], 0.0);
    }

    #[test]
    fn rejects_inconsistent_files() {
        let params = CmixParams {
            durations: DurationParams::Geometric(vec![0.1, 0.3]),
            betas: vec![array![0.5]],
            intercepts: vec![0.0],
            cure_mode: false,
        };
        let mut file = ModelFile::new(&params, &trace(), &[]);
        file.schema = 2;
        assert!(file.params().is_err());
        file.schema = 1;
        file.alphas.pop();
        assert!(file.params().is_err());
    }
}
