//! JSON model files: offspring law, step law, optional declared span.
//!
//! ```json
//! {
//!   "offspring": {"0": 0.6, "2": 0.4},
//!   "step": {"kind": "atoms", "atoms": [[-1, 0.5], [1, 0.5]]},
//!   "span": 1.0
//! }
//! ```
//!
//! The step may instead be `{"kind": "gaussian", "mu": 0, "sigma": 1}`.
//! Probabilities and positions may be numbers or decimal strings.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::laws::{validate_offspring, LawError, OffspringLaw, StepLaw};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("offspring key {0:?} is not a nonnegative integer")]
    BadOffspringKey(String),
    #[error("{0:?} is not a decimal number")]
    BadNumber(String),
    #[error("span declared for a gaussian step")]
    SpanOnGaussian,
    #[error(transparent)]
    Law(#[from] LawError),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub offspring: OffspringLaw,
    pub step: StepLaw,
}

#[derive(Deserialize)]
struct ModelFile {
    offspring: BTreeMap<String, NumOrStr>,
    step: StepSpec,
    #[serde(default)]
    span: Option<NumOrStr>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum StepSpec {
    Atoms { atoms: Vec<(NumOrStr, NumOrStr)> },
    Gaussian { mu: NumOrStr, sigma: NumOrStr },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

impl NumOrStr {
    fn value(&self) -> Result<f64, ModelError> {
        match self {
            NumOrStr::Num(v) => Ok(*v),
            NumOrStr::Str(s) => s.trim().parse::<f64>().map_err(|_| ModelError::BadNumber(s.clone())),
        }
    }
}

pub fn parse_model(json: &str) -> Result<Model, ModelError> {
    let file: ModelFile = serde_json::from_str(json)?;

    let mut probs: Vec<f64> = Vec::new();
    for (key, value) in &file.offspring {
        let k: usize = key.trim().parse().map_err(|_| ModelError::BadOffspringKey(key.clone()))?;
        if probs.len() <= k {
            probs.resize(k + 1, 0.0);
        }
        probs[k] = value.value()?;
    }
    let offspring = validate_offspring(&probs)?;

    let step = match &file.step {
        StepSpec::Atoms { atoms } => {
            let parsed: Result<Vec<(f64, f64)>, ModelError> =
                atoms.iter().map(|(x, p)| Ok((x.value()?, p.value()?))).collect();
            let parsed = parsed?;
            match &file.span {
                Some(s) => StepLaw::from_atoms_with_span(&parsed, s.value()?)?,
                None => StepLaw::from_atoms(&parsed)?,
            }
        }
        StepSpec::Gaussian { mu, sigma } => {
            if file.span.is_some() {
                return Err(ModelError::SpanOnGaussian);
            }
            StepLaw::gaussian(mu.value()?, sigma.value()?)?
        }
    };
    Ok(Model { offspring, step })
}
