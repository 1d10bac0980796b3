//! Experiment configuration: one TOML document with `[model]`, `[env]`,
//! `[agent]` and `[run]` sections. Matrices are row-major nested lists.

use std::path::{Path, PathBuf};

use actinf::agent::AgentConfig;
use actinf::env::EnvSpec;
use actinf::model::enumerate_policies;
use actinf::{Frozen, GenerativeModel, ModelDims, PolicySet};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Either every sequence of a given depth or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoliciesSpec {
    Enumerate { enumerate: usize },
    Explicit(Vec<Vec<usize>>),
}

fn default_beta() -> f64 {
    1.0
}

fn default_c_const() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub num_states: usize,
    pub num_obs: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// |O| rows of |S| entries.
    pub a: Vec<Vec<f64>>,
    /// One |S|×|S| matrix per action; all-ones counts when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<Vec<f64>>>>,
    /// All-ones counts when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub policies: PoliciesSpec,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_c_const")]
    pub c_const: f64,
    #[serde(default)]
    pub frozen: Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trials: usize,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub env: EnvSpec,
    pub agent: AgentConfig,
    pub run: RunSection,
}

fn matrix(field: &str, rows: &[Vec<f64>], shape: (usize, usize), errors: &mut Vec<String>) -> Option<Array2<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        errors.push(format!("{field}: expected {}x{} matrix", shape.0, shape.1));
        return None;
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec(shape, flat).ok()
}

impl ModelSection {
    /// Builds the generative model, reporting shape errors by field name.
    pub fn to_model(&self) -> std::result::Result<GenerativeModel, Vec<String>> {
        let mut errors = Vec::new();
        let (s, o) = (self.num_states, self.num_obs);
        let a = matrix("model.a", &self.a, (o, s), &mut errors);
        let b: Vec<Array2<f64>> = match &self.b {
            None => vec![Array2::ones((s, s)); self.num_actions],
            Some(blocks) => blocks
                .iter()
                .enumerate()
                .filter_map(|(u, m)| matrix(&format!("model.b[{u}]"), m, (s, s), &mut errors))
                .collect(),
        };
        let d = self.d.clone().map_or_else(|| Array1::ones(s), Array1::from);
        let policies = match &self.policies {
            PoliciesSpec::Explicit(list) => Some(PolicySet::new(list.clone())),
            PoliciesSpec::Enumerate { enumerate } => match enumerate_policies(self.num_actions, *enumerate) {
                Ok(p) => Some(p),
                Err(e) => {
                    errors.push(format!("model.policies: {e}"));
                    None
                }
            },
        };
        let (Some(a), Some(policies)) = (a, policies) else {
            return Err(errors);
        };
        if !errors.is_empty() {
            return Err(errors);
        }
        let model = GenerativeModel {
            dims: ModelDims {
                num_states: s,
                num_obs: o,
                num_actions: self.num_actions,
                horizon: self.horizon,
            },
            a,
            b,
            d,
            c: Array1::from(self.c.clone()),
            policies,
            beta: self.beta,
            c_const: self.c_const,
            frozen: self.frozen,
        };
        model
            .validate()
            .map_err(|v| v.iter().map(|x| format!("model.{x}")).collect::<Vec<_>>())?;
        Ok(model)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Every problem with the config, each prefixed by the offending field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = match self.model.to_model() {
            Ok(_) => Vec::new(),
            Err(v) => v,
        };
        if let Err(e) = self.env.validate() {
            out.push(format!("env: {e}"));
        }
        if let Err(e) = self.agent.validate() {
            out.push(format!("agent.sweeps: {e}"));
        }
        if self.run.trials == 0 {
            out.push("run.trials: must be at least 1".into());
        }
        if self.env.num_actions() != self.model.num_actions {
            out.push(format!(
                "env, model.num_actions: environment has {} actions, model has {}",
                self.env.num_actions(),
                self.model.num_actions
            ));
        }
        if self.env.num_obs() != self.model.num_obs {
            out.push(format!(
                "env, model.num_obs: environment emits {} outcomes, model expects {}",
                self.env.num_obs(),
                self.model.num_obs
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<GenerativeModel> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(CliError::Invalid(v));
        }
        self.model.to_model().map_err(CliError::Invalid)
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = ExperimentConfig::from_toml_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}
