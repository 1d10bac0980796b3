//! Simulated environments: the two-state food problem and a k-armed bandit.
//!
//! Matrices are column-stochastic and row-major as nested lists:
//! `transition[u][next][prev]` and `emission[outcome][state]`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::SIMPLEX_TOL;

/// Food states.
pub const FULL: usize = 0;
pub const EMPTY: usize = 1;
/// Food outcomes.
pub const HUNGRY: usize = 0;
pub const FED: usize = 1;
/// Food actions.
pub const EAT: usize = 0;
pub const SLEEP: usize = 1;
/// Bandit outcome signalling a reward.
pub const REWARD: usize = 1;

/// True dynamics of the food problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoodSpec {
    pub transition: Vec<Vec<Vec<f64>>>,
    pub emission: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl Default for FoodSpec {
    /// p(full | eat) = 0.9, p(full | sleep, full) = 0.3, p(full | sleep, empty) = 0,
    /// p(fed | full) = 0.9, p(hungry | empty) = 0.9, p(full at start) = 0.8.
    fn default() -> Self {
        Self {
            transition: vec![
                vec![vec![0.9, 0.9], vec![0.1, 0.1]],
                vec![vec![0.3, 0.0], vec![0.7, 1.0]],
            ],
            emission: vec![vec![0.1, 0.9], vec![0.9, 0.1]],
            initial: vec![0.8, 0.2],
        }
    }
}

/// Reward probability of each arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSpec {
    pub reward_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvSpec {
    Food(FoodSpec),
    Bandit(BanditSpec),
}

fn check_probs(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidProbVector(format!("{name}: entries must lie in [0, 1]")));
    }
    Ok(())
}

fn check_columns(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!("{name}: expected {rows}x{cols}")));
    }
    for r in m {
        check_probs(name, r)?;
    }
    for j in 0..cols {
        let total: f64 = m.iter().map(|r| r[j]).sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidProbVector(format!("{name}: column {j} sums to {total}")));
        }
    }
    Ok(())
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Food(f) => {
                let n = f.initial.len();
                if n == 0 {
                    return Err(Error::Dimension("food: empty initial distribution".into()));
                }
                check_probs("initial", &f.initial)?;
                let total: f64 = f.initial.iter().sum();
                if (total - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidProbVector(format!("initial sums to {total}")));
                }
                if f.transition.is_empty() {
                    return Err(Error::Dimension("food: no actions".into()));
                }
                for (u, t) in f.transition.iter().enumerate() {
                    check_columns(&format!("transition[{u}]"), t, n, n)?;
                }
                check_columns("emission", &f.emission, f.emission.len(), n)
            }
            Self::Bandit(b) => {
                if b.reward_probs.is_empty() {
                    return Err(Error::Dimension("bandit: no arms".into()));
                }
                check_probs("reward_probs", &b.reward_probs)
            }
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Self::Food(f) => f.transition.len(),
            Self::Bandit(b) => b.reward_probs.len(),
        }
    }

    pub fn num_obs(&self) -> usize {
        match self {
            Self::Food(f) => f.emission.len(),
            Self::Bandit(_) => 2,
        }
    }
}

/// Hidden state of an environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvState {
    Food(usize),
    /// Bandits carry no state between pulls.
    Ready,
}

fn sample<R: Rng + ?Sized>(weights: impl IntoIterator<Item = f64>, rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(dist.sample(rng))
}

fn emit<R: Rng + ?Sized>(f: &FoodSpec, state: usize, rng: &mut R) -> Result<usize> {
    sample(f.emission.iter().map(|row| row[state]), rng)
}

/// Initial hidden state and first observation (none for a bandit).
pub fn env_reset<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> Result<(EnvState, Option<usize>)> {
    spec.validate()?;
    match spec {
        EnvSpec::Food(f) => {
            let s = sample(f.initial.iter().copied(), rng)?;
            Ok((EnvState::Food(s), Some(emit(f, s, rng)?)))
        }
        EnvSpec::Bandit(_) => Ok((EnvState::Ready, None)),
    }
}

/// Applies an action and returns the new hidden state and observation.
pub fn env_step<R: Rng + ?Sized>(
    spec: &EnvSpec,
    state: EnvState,
    action: usize,
    rng: &mut R,
) -> Result<(EnvState, usize)> {
    if action >= spec.num_actions() {
        return Err(Error::IndexOutOfRange {
            index: action,
            dimension: spec.num_actions(),
        });
    }
    match (spec, state) {
        (EnvSpec::Food(f), EnvState::Food(s)) => {
            let next = sample(f.transition[action].iter().map(|row| row[s]), rng)?;
            Ok((EnvState::Food(next), emit(f, next, rng)?))
        }
        (EnvSpec::Bandit(b), EnvState::Ready) => {
            let reward = rng.gen_bool(b.reward_probs[action]);
            Ok((EnvState::Ready, if reward { REWARD } else { 1 - REWARD }))
        }
        _ => Err(Error::Dimension("environment state does not match its spec".into())),
    }
}

/// An environment with its own random stream and the latest observation.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvSpec,
    state: EnvState,
    last_observation: Option<usize>,
    rng: ChaCha8Rng,
}

impl Environment {
    /// Builds and resets an environment.
    pub fn new(spec: EnvSpec, rng: ChaCha8Rng) -> Result<Self> {
        let mut env = Self {
            spec,
            state: EnvState::Ready,
            last_observation: None,
            rng,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn from_seed(spec: EnvSpec, seed: u64) -> Result<Self> {
        Self::new(spec, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn reset(&mut self) -> Result<Option<usize>> {
        let (state, obs) = env_reset(&self.spec, &mut self.rng)?;
        self.state = state;
        self.last_observation = obs;
        Ok(obs)
    }

    pub fn step(&mut self, action: usize) -> Result<usize> {
        let (state, obs) = env_step(&self.spec, self.state, action, &mut self.rng)?;
        self.state = state;
        self.last_observation = Some(obs);
        Ok(obs)
    }

    pub fn last_observation(&self) -> Option<usize> {
        self.last_observation
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }
}
