//! Generative model declaration, validation and policy enumeration.
//!
//! Parameter matrices are stored raw so that a malformed model can still be
//! built and handed to [`GenerativeModel::validate`], which reports every
//! problem at once. Engines work with [`ParamBlock`]s obtained from a model
//! that has passed validation.

use std::fmt;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::{ln_clamped, DirichletBlock, ProbVector, SIMPLEX_TOL};

/// Default cap on the number of enumerated policies.
pub const POLICY_CAP: usize = 4096;

/// Sizes of the state, outcome and action spaces and the planning horizon T.
///
/// The current time t is not stored: it is the number of observations
/// received so far minus one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub num_states: usize,
    pub num_obs: usize,
    pub num_actions: usize,
    pub horizon: usize,
}

/// A list of action sequences, each of length T.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    pub policies: Vec<Vec<usize>>,
}

impl PolicySet {
    pub fn new(policies: Vec<Vec<usize>>) -> Self {
        Self { policies }
    }

    /// The single empty policy of a horizon-0 model.
    pub fn empty_policy() -> Self {
        Self {
            policies: vec![Vec::new()],
        }
    }

    /// Every sequence of length `horizon`; the empty policy when horizon is 0.
    pub fn for_horizon(num_actions: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            Ok(Self::empty_policy())
        } else {
            enumerate_policies(num_actions, horizon)
        }
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, k: usize) -> &[usize] {
        &self.policies[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.policies.iter()
    }
}

/// All `num_actions^depth` sequences in lexicographic order, capped at [`POLICY_CAP`].
pub fn enumerate_policies(num_actions: usize, depth: usize) -> Result<PolicySet> {
    enumerate_policies_capped(num_actions, depth, POLICY_CAP)
}

pub fn enumerate_policies_capped(num_actions: usize, depth: usize, cap: usize) -> Result<PolicySet> {
    if num_actions == 0 || depth == 0 {
        return Err(Error::Dimension(
            "policy enumeration needs num_actions >= 1 and depth >= 1".into(),
        ));
    }
    let requested = (num_actions as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::PolicyExplosion { requested, cap });
    }
    let n = requested as usize;
    let policies = (0..n)
        .map(|mut code| {
            let mut seq = vec![0; depth];
            for slot in seq.iter_mut().rev() {
                *slot = code % num_actions;
                code /= num_actions;
            }
            seq
        })
        .collect();
    Ok(PolicySet { policies })
}

/// Which parameters hold exact probabilities instead of Dirichlet counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Frozen {
    pub a: bool,
    pub b: bool,
    pub d: bool,
}

impl Frozen {
    pub fn all() -> Self {
        Self {
            a: true,
            b: true,
            d: true,
        }
    }
}

/// One invariant that a model violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Full generative model: likelihood `a` (|O|×|S|), transitions `b[u]`
/// (|S|×|S|, column = previous state), initial states `d`, preferences `c`,
/// the policy set, the precision prior rate `beta` and the constant `c_const`
/// of the Dirichlet policy prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    pub dims: ModelDims,
    pub a: Array2<f64>,
    pub b: Vec<Array2<f64>>,
    pub d: Array1<f64>,
    pub c: Array1<f64>,
    pub policies: PolicySet,
    pub beta: f64,
    pub c_const: f64,
    pub frozen: Frozen,
}

impl GenerativeModel {
    /// Returns every violated invariant.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        let dims = &self.dims;
        for (name, value) in [
            ("num_states", dims.num_states),
            ("num_obs", dims.num_obs),
            ("num_actions", dims.num_actions),
        ] {
            if value == 0 {
                v.push(Violation::new(name, "must be at least 1"));
            }
        }

        let (s, o) = (dims.num_states, dims.num_obs);
        if self.a.dim() != (o, s) {
            v.push(Violation::new(
                "a",
                format!(
                    "shape {:?} does not match (num_obs, num_states) = ({o}, {s})",
                    self.a.dim()
                ),
            ));
        } else {
            check_block(&mut v, "a", &self.a, self.frozen.a);
        }

        if self.b.len() != dims.num_actions {
            v.push(Violation::new(
                "b",
                format!(
                    "{} transition blocks for num_actions = {}",
                    self.b.len(),
                    dims.num_actions
                ),
            ));
        }
        for (u, bu) in self.b.iter().enumerate() {
            let name = format!("b[{u}]");
            if bu.dim() != (s, s) {
                v.push(Violation::new(
                    &name,
                    format!("shape {:?} does not match ({s}, {s})", bu.dim()),
                ));
            } else {
                check_block(&mut v, &name, bu, self.frozen.b);
            }
        }

        if self.d.len() != s {
            v.push(Violation::new(
                "d",
                format!("length {} does not match num_states = {s}", self.d.len()),
            ));
        } else {
            let col = self.d.view().insert_axis(Axis(1)).to_owned();
            check_block(&mut v, "d", &col, self.frozen.d);
        }
        if self.d.len() != self.a.ncols() {
            v.push(Violation::new(
                "d, a",
                format!(
                    "d has {} states but a has {} state columns",
                    self.d.len(),
                    self.a.ncols()
                ),
            ));
        }

        if self.c.len() != o {
            v.push(Violation::new(
                "C",
                format!("length {} does not match num_obs = {o}", self.c.len()),
            ));
        }
        if let Err(e) = ProbVector::new(self.c.clone()) {
            v.push(Violation::new("C", e.to_string()));
        }

        if self.policies.is_empty() {
            v.push(Violation::new("policies", "at least one policy is required"));
        }
        for (k, p) in self.policies.iter().enumerate() {
            if p.len() != dims.horizon {
                v.push(Violation::new(
                    format!("policies[{k}]"),
                    format!("policy length {} differs from horizon {}", p.len(), dims.horizon),
                ));
            }
            if let Some(u) = p.iter().find(|u| **u >= dims.num_actions) {
                v.push(Violation::new(
                    format!("policies[{k}]"),
                    format!("action {u} out of range for num_actions = {}", dims.num_actions),
                ));
            }
        }

        if !(self.beta.is_finite() && self.beta > 0.0) {
            v.push(Violation::new("beta", format!("{} must be finite and > 0", self.beta)));
        }
        if !self.c_const.is_finite() {
            v.push(Violation::new("c_const", "must be finite"));
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    /// [`validate`](Self::validate) as a `Result` with [`Error::Invalid`].
    pub fn check(&self) -> Result<()> {
        self.validate().map_err(Error::Invalid)
    }

    pub fn num_policies(&self) -> usize {
        self.policies.len()
    }

    /// Preferences over outcomes.
    pub fn preferences(&self) -> Result<ProbVector> {
        ProbVector::new(self.c.clone())
    }

    pub fn param_a(&self) -> Result<ParamBlock> {
        ParamBlock::from_matrix(self.a.clone(), self.frozen.a)
    }

    pub fn param_b(&self) -> Result<Vec<ParamBlock>> {
        self.b
            .iter()
            .map(|bu| ParamBlock::from_matrix(bu.clone(), self.frozen.b))
            .collect()
    }

    /// The initial-state parameter as an |S|×1 block.
    pub fn param_d(&self) -> Result<ParamBlock> {
        ParamBlock::from_matrix(self.d.clone().insert_axis(Axis(1)), self.frozen.d)
    }

    /// Current time implied by an observation count (`None` before the first).
    pub fn current_time(num_observations: usize) -> Option<usize> {
        num_observations.checked_sub(1)
    }

    pub(crate) fn check_observations(&self, observations: &[crate::exp_family::OneHot]) -> Result<()> {
        if observations.len() > self.dims.horizon + 1 {
            return Err(Error::HorizonExhausted {
                t: observations.len() - 1,
                horizon: self.dims.horizon,
            });
        }
        for o in observations {
            if o.dimension() != self.dims.num_obs {
                return Err(Error::Dimension(format!(
                    "observation has dimension {} but num_obs = {}",
                    o.dimension(),
                    self.dims.num_obs
                )));
            }
        }
        Ok(())
    }
}

fn check_block(v: &mut Vec<Violation>, name: &str, m: &Array2<f64>, frozen: bool) {
    if m.iter().any(|x| !x.is_finite()) {
        v.push(Violation::new(name, "entries must be finite"));
        return;
    }
    if frozen {
        if m.iter().any(|x| *x < 0.0) {
            v.push(Violation::new(name, "frozen probabilities must be non-negative"));
        }
        for (j, col) in m.axis_iter(Axis(1)).enumerate() {
            let total = col.sum();
            if (total - 1.0).abs() > SIMPLEX_TOL {
                v.push(Violation::new(
                    name,
                    format!("frozen column {j} sums to {total}, not 1"),
                ));
            }
        }
    } else if m.iter().any(|x| *x <= 0.0) {
        v.push(Violation::new(name, "non-positive Dirichlet count"));
    }
}

/// Column-normalised Dirichlet counts.
pub fn expected_params(block: &DirichletBlock) -> Array2<f64> {
    block.mean()
}

/// A parameter matrix that is either learned (Dirichlet counts) or frozen
/// (exact column-stochastic probabilities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamBlock {
    Dirichlet(DirichletBlock),
    Fixed(Array2<f64>),
}

impl ParamBlock {
    pub fn from_matrix(m: Array2<f64>, frozen: bool) -> Result<Self> {
        if frozen {
            if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidDirichlet(
                    "frozen probabilities must be finite and non-negative".into(),
                ));
            }
            Ok(Self::Fixed(m))
        } else {
            Ok(Self::Dirichlet(DirichletBlock::new(m)?))
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Self::Fixed(_))
    }

    /// Stored counts or probabilities.
    pub fn matrix(&self) -> &Array2<f64> {
        match self {
            Self::Dirichlet(b) => b.counts(),
            Self::Fixed(m) => m,
        }
    }

    /// Expected log-probabilities: digamma differences, or clamped logs when frozen.
    pub fn expected_log(&self) -> Array2<f64> {
        match self {
            Self::Dirichlet(b) => b.expected_log(),
            Self::Fixed(m) => m.mapv(ln_clamped),
        }
    }

    /// Point estimate used for predictions.
    pub fn mean(&self) -> Array2<f64> {
        match self {
            Self::Dirichlet(b) => b.mean(),
            Self::Fixed(m) => m.clone(),
        }
    }

    /// Adds counts to a learned block; frozen blocks are returned unchanged.
    pub fn add_counts(&self, delta: &Array2<f64>) -> Result<Self> {
        match self {
            Self::Dirichlet(b) => Ok(Self::Dirichlet(b.add(delta)?)),
            Self::Fixed(m) => {
                if delta.dim() != m.dim() {
                    return Err(Error::Dimension("count update shape mismatch".into()));
                }
                Ok(self.clone())
            }
        }
    }

    /// KL from `prior`; zero for frozen parameters.
    pub fn kl_to(&self, prior: &ParamBlock) -> Result<f64> {
        match (self, prior) {
            (Self::Dirichlet(q), Self::Dirichlet(p)) => q.kl_to(p),
            (Self::Fixed(_), Self::Fixed(_)) => Ok(0.0),
            _ => Err(Error::Dimension("KL between a frozen and a learned block".into())),
        }
    }
}
