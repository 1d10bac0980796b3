//! The action-perception cycle around either inference engine, action
//! selection, and the minimal exact-Bayes bandit agent.
//!
//! A trial runs T+1 cycles (t = 0..T). Each cycle observes, infers, scores
//! policies for the next cycle and, while t < T, acts. The expected free
//! energy used at cycle t is the one computed at the end of cycle t−1 (the
//! prior predictive at t = 0), so it stays fixed throughout each inference call.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::efe::{EfeSource, EfeVector};
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::exp_family::{argmax, OneHot, ProbVector};
use crate::model::{GenerativeModel, PolicySet};
use crate::structured::{classic_efe, infer_structured, StructuredOptions};
use crate::vmp::{factorised_efe, infer_vmp, VmpOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Structured,
    Vmp,
    Bandit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Act on the action with the largest summed policy posterior.
    #[default]
    Vote,
    /// Sample a whole policy and take its next action.
    SamplePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub engine: EngineKind,
    pub sweeps: usize,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub gamma_fixed: bool,
    #[serde(default)]
    pub seed: u64,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Domain("sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One action-perception cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub t: usize,
    /// Free energy after inference.
    #[serde(rename = "F")]
    pub free_energy: f64,
    /// Expected free energy that served as the policy prior.
    #[serde(rename = "G")]
    pub efe: Vec<f64>,
    /// Posterior over policies (over arms for the bandit).
    pub posterior: Vec<f64>,
    pub action: Option<usize>,
    pub observation: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub records: Vec<CycleRecord>,
}

impl TrialLog {
    /// Number of observations equal to `outcome`.
    pub fn count_outcome(&self, outcome: usize) -> usize {
        self.records.iter().filter(|r| r.observation == Some(outcome)).count()
    }
}

/// argmax_u Σ_k [U_t^k = u] π̂_k; ties go to the lowest action.
pub fn select_action_vote(policy_posterior: &ProbVector, policies: &PolicySet, t: usize) -> Result<usize> {
    if policy_posterior.len() != policies.len() {
        return Err(Error::Dimension("posterior does not match policy set".into()));
    }
    let mut votes: Vec<f64> = Vec::new();
    for (k, policy) in policies.iter().enumerate() {
        let u = *policy.get(t).ok_or(Error::HorizonExhausted {
            t,
            horizon: policy.len(),
        })?;
        if votes.len() <= u {
            votes.resize(u + 1, 0.0);
        }
        votes[u] += policy_posterior.get(k);
    }
    Ok(argmax(votes))
}

/// Samples a policy from the posterior and returns its index and its
/// remaining actions from t onwards.
pub fn select_action_sample_policy<R: Rng + ?Sized>(
    policy_posterior: &ProbVector,
    policies: &PolicySet,
    t: usize,
    rng: &mut R,
) -> Result<(usize, Vec<usize>)> {
    if policy_posterior.len() != policies.len() {
        return Err(Error::Dimension("posterior does not match policy set".into()));
    }
    let dist =
        WeightedIndex::new(policy_posterior.values().iter().copied()).map_err(|e| Error::Numeric(e.to_string()))?;
    let k = dist.sample(rng);
    let rest = policies.get(k).get(t..).unwrap_or(&[]).to_vec();
    Ok((k, rest))
}

/// P(U = j | O) ∝ A_{O j} a_j.
pub fn bandit_bayes_update(prior: &ProbVector, likelihood_row: &[f64]) -> Result<ProbVector> {
    if likelihood_row.len() != prior.len() {
        return Err(Error::Dimension(format!(
            "{} likelihoods for {} arms",
            likelihood_row.len(),
            prior.len()
        )));
    }
    if likelihood_row.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain("likelihoods must be finite and non-negative".into()));
    }
    let joint: Vec<f64> = prior.values().iter().zip(likelihood_row).map(|(p, l)| p * l).collect();
    ProbVector::from_weights(joint)
}

/// Random streams derived from a trial seed: one for the environment and one
/// for the agent's own sampling.
pub fn trial_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(1);
    let mut agent = ChaCha8Rng::seed_from_u64(seed);
    agent.set_stream(2);
    (env, agent)
}

/// An agent bound to one generative model.
#[derive(Debug, Clone)]
pub struct Agent {
    model: GenerativeModel,
    config: AgentConfig,
    observations: Vec<OneHot>,
    t: usize,
    next_efe: Option<EfeVector>,
    belief: Option<ProbVector>,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(model: GenerativeModel, config: AgentConfig, rng: ChaCha8Rng) -> Result<Self> {
        model.check()?;
        config.validate()?;
        let belief = match config.engine {
            EngineKind::Bandit => Some(ProbVector::from_weights(model.d.clone())?),
            _ => None,
        };
        Ok(Self {
            model,
            config,
            observations: Vec::new(),
            t: 0,
            next_efe: None,
            belief,
            rng,
        })
    }

    pub fn model(&self) -> &GenerativeModel {
        &self.model
    }

    pub fn observations(&self) -> &[OneHot] {
        &self.observations
    }

    /// Current belief over arms (bandit engine only).
    pub fn belief(&self) -> Option<&ProbVector> {
        self.belief.as_ref()
    }

    fn preferred_outcome(&self) -> usize {
        argmax(self.model.c.iter().copied())
    }

    /// Observe, infer, score policies, act.
    pub fn run_cycle(&mut self, env: &mut Environment) -> Result<CycleRecord> {
        let horizon = self.model.dims.horizon;
        let t = self.t;
        if t > horizon {
            return Err(Error::HorizonExhausted { t, horizon });
        }
        let observation = env.last_observation();
        let record = match self.config.engine {
            EngineKind::Bandit => self.bandit_cycle(env, observation)?,
            EngineKind::Structured | EngineKind::Vmp => self.engine_cycle(env, observation)?,
        };
        self.t += 1;
        Ok(record)
    }

    fn bandit_cycle(&mut self, env: &mut Environment, observation: Option<usize>) -> Result<CycleRecord> {
        let t = self.t;
        let prior = self
            .belief
            .clone()
            .ok_or(Error::Dimension("bandit belief missing".into()))?;
        let row: Vec<f64> = self.model.a.row(self.preferred_outcome()).to_vec();
        let evidence: f64 = prior.values().iter().zip(&row).map(|(p, l)| p * l).sum();
        let posterior = bandit_bayes_update(&prior, &row)?;
        let action = if t < self.model.dims.horizon {
            let arm = match self.config.strategy {
                Strategy::Vote => posterior.argmax(),
                Strategy::SamplePolicy => WeightedIndex::new(posterior.values().iter().copied())
                    .map_err(|e| Error::Numeric(e.to_string()))?
                    .sample(&mut self.rng),
            };
            env.step(arm)?;
            Some(arm)
        } else {
            None
        };
        self.belief = Some(posterior.clone());
        Ok(CycleRecord {
            t,
            free_energy: -evidence.ln(),
            efe: Vec::new(),
            posterior: posterior.to_vec(),
            action,
            observation,
        })
    }

    fn engine_cycle(&mut self, env: &mut Environment, observation: Option<usize>) -> Result<CycleRecord> {
        let t = self.t;
        let o = observation.ok_or_else(|| Error::Dimension("engine needs an observation every cycle".into()))?;
        self.observations.push(OneHot::new(o, self.model.dims.num_obs)?);
        let source = match self.next_efe.take() {
            Some(g) => EfeSource::Given(g),
            None => EfeSource::PriorPredictive,
        };
        let (free_energy, efe, posterior) = match self.config.engine {
            EngineKind::Structured => {
                let opts = StructuredOptions {
                    sweeps: self.config.sweeps,
                    gamma_fixed: self.config.gamma_fixed,
                    efe: source,
                };
                let post = infer_structured(&self.model, &self.observations, &opts)?;
                self.next_efe = Some(classic_efe(&post, &self.model, t + 2)?);
                (*post.free_energy.last().unwrap(), post.efe, post.pi_hat)
            }
            _ => {
                let opts = VmpOptions {
                    sweeps: self.config.sweeps,
                    efe: source,
                };
                let post = infer_vmp(&self.model, &self.observations, &opts)?;
                self.next_efe = Some(factorised_efe(&post, &self.model)?);
                (*post.free_energy.last().unwrap(), post.efe, post.alpha_tilde)
            }
        };
        let action = if t < self.model.dims.horizon {
            let u = match self.config.strategy {
                Strategy::Vote => select_action_vote(&posterior, &self.model.policies, t)?,
                Strategy::SamplePolicy => {
                    select_action_sample_policy(&posterior, &self.model.policies, t, &mut self.rng)?.1[0]
                }
            };
            env.step(u)?;
            Some(u)
        } else {
            None
        };
        Ok(CycleRecord {
            t,
            free_energy,
            efe,
            posterior: posterior.to_vec(),
            action,
            observation,
        })
    }
}

/// Runs one full trial of T+1 cycles with streams derived from `seed`.
pub fn run_trial(model: &GenerativeModel, config: &AgentConfig, env_spec: &EnvSpec, seed: u64) -> Result<TrialLog> {
    let (env_rng, agent_rng) = trial_rngs(seed);
    let mut env = Environment::new(env_spec.clone(), env_rng)?;
    let mut agent = Agent::new(model.clone(), config.clone(), agent_rng)?;
    let mut log = TrialLog::default();
    for _ in 0..=model.dims.horizon {
        log.records.push(agent.run_cycle(&mut env)?);
    }
    Ok(log)
}
