//! Exact inference by full enumeration over state sequences.
//!
//! Only frozen models are supported: the parameters are point masses, so the
//! evidence is a finite sum. Nothing here shares code with the engines or
//! the expected free energy module; it exists to check them.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::exp_family::{OneHot, ProbVector};
use crate::model::GenerativeModel;

/// Maximum number of enumerated state sequences.
pub const ORACLE_CAP: u128 = 1_000_000;

fn require_frozen(model: &GenerativeModel) -> Result<()> {
    model.check()?;
    if !model.frozen.a {
        return Err(Error::OracleNeedsFrozen("a"));
    }
    if !model.frozen.b {
        return Err(Error::OracleNeedsFrozen("b"));
    }
    if !model.frozen.d {
        return Err(Error::OracleNeedsFrozen("d"));
    }
    Ok(())
}

fn sequence_count(model: &GenerativeModel) -> Result<usize> {
    let n = (model.dims.num_states as u128)
        .checked_pow(model.dims.horizon as u32 + 1)
        .unwrap_or(u128::MAX);
    if n > ORACLE_CAP {
        return Err(Error::OracleTooLarge {
            requested: n,
            cap: ORACLE_CAP,
        });
    }
    Ok(n as usize)
}

/// Decodes sequence number `code` into states S_0..S_T (S_0 most significant).
fn decode(mut code: usize, num_states: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = code % num_states;
        code /= num_states;
    }
}

/// P(S_{0:T} = states, O_{0:n−1} = outcomes | π).
fn joint(model: &GenerativeModel, policy: &[usize], states: &[usize], outcomes: &[usize]) -> f64 {
    let mut p = model.d[states[0]];
    for tau in 1..states.len() {
        p *= model.b[policy[tau - 1]][[states[tau], states[tau - 1]]];
    }
    for (tau, &o) in outcomes.iter().enumerate() {
        p *= model.a[[o, states[tau]]];
    }
    p
}

fn check_inputs(model: &GenerativeModel, observations: &[OneHot], policy: usize) -> Result<()> {
    require_frozen(model)?;
    model.check_observations(observations)?;
    if policy >= model.num_policies() {
        return Err(Error::IndexOutOfRange {
            index: policy,
            dimension: model.num_policies(),
        });
    }
    Ok(())
}

/// Sums the joint over all state sequences, also accumulating per-τ marginals.
fn enumerate(model: &GenerativeModel, observations: &[OneHot], policy: usize) -> Result<(f64, Array2<f64>)> {
    let count = sequence_count(model)?;
    let len = model.dims.horizon + 1;
    let n = model.dims.num_states;
    let outcomes: Vec<usize> = observations.iter().map(OneHot::index).collect();
    let pol = model.policies.get(policy);
    let mut states = vec![0; len];
    let mut total = 0.0;
    let mut marginals = Array2::zeros((len, n));
    for code in 0..count {
        decode(code, n, &mut states);
        let p = joint(model, pol, &states, &outcomes);
        total += p;
        for (tau, &s) in states.iter().enumerate() {
            marginals[[tau, s]] += p;
        }
    }
    Ok((total, marginals))
}

/// ln P(o_{0:t} | π) by enumeration; `f64::NEG_INFINITY` for impossible data.
pub fn exact_evidence(model: &GenerativeModel, observations: &[OneHot], policy: usize) -> Result<f64> {
    check_inputs(model, observations, policy)?;
    let (total, _) = enumerate(model, observations, policy)?;
    Ok(if total > 0.0 { total.ln() } else { f64::NEG_INFINITY })
}

/// P(S_τ | o, π) for τ = 0..T.
pub fn exact_posterior_marginals(
    model: &GenerativeModel,
    observations: &[OneHot],
    policy: usize,
) -> Result<Vec<ProbVector>> {
    check_inputs(model, observations, policy)?;
    let (total, marginals) = enumerate(model, observations, policy)?;
    if total <= 0.0 {
        return Err(Error::ZeroEvidence);
    }
    marginals
        .rows()
        .into_iter()
        .map(|row| ProbVector::from_weights(row.to_owned()))
        .collect()
}

/// ln Σ_π P(π) P(o | π).
pub fn exact_mixture_evidence(model: &GenerativeModel, observations: &[OneHot], policy_prior: &[f64]) -> Result<f64> {
    if policy_prior.len() != model.num_policies() {
        return Err(Error::Dimension("policy prior does not match policy count".into()));
    }
    let mut total = 0.0;
    for (k, w) in policy_prior.iter().enumerate() {
        if *w > 0.0 {
            total += w * exact_evidence(model, observations, k)?.exp();
        }
    }
    Ok(if total > 0.0 { total.ln() } else { f64::NEG_INFINITY })
}

/// Joint probabilities over (policy, S_0..S_T, O_0..O_{n−1}) for a frozen
/// model and a policy prior.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    probabilities: Vec<f64>,
    num_policies: usize,
    num_sequences: usize,
    num_outcome_seqs: usize,
    num_states: usize,
    num_obs: usize,
    horizon: usize,
    num_observed: usize,
}

impl JointTable {
    pub fn build(model: &GenerativeModel, policy_prior: &ProbVector, num_observed: usize) -> Result<Self> {
        require_frozen(model)?;
        if policy_prior.len() != model.num_policies() {
            return Err(Error::Dimension("policy prior does not match policy count".into()));
        }
        if num_observed > model.dims.horizon + 1 {
            return Err(Error::Dimension("more observed steps than time steps".into()));
        }
        let num_sequences = sequence_count(model)?;
        let num_outcome_seqs = (model.dims.num_obs as u128)
            .checked_pow(num_observed as u32)
            .unwrap_or(u128::MAX);
        let cells = num_outcome_seqs
            .saturating_mul(num_sequences as u128)
            .saturating_mul(model.num_policies() as u128);
        if cells > ORACLE_CAP {
            return Err(Error::OracleTooLarge {
                requested: cells,
                cap: ORACLE_CAP,
            });
        }
        let num_outcome_seqs = num_outcome_seqs as usize;
        let (n, o) = (model.dims.num_states, model.dims.num_obs);
        let mut states = vec![0; model.dims.horizon + 1];
        let mut outcomes = vec![0; num_observed];
        let mut probabilities = Vec::with_capacity(cells as usize);
        for k in 0..model.num_policies() {
            let pol = model.policies.get(k);
            for sc in 0..num_sequences {
                decode(sc, n, &mut states);
                for oc in 0..num_outcome_seqs {
                    decode(oc, o, &mut outcomes);
                    probabilities.push(policy_prior.get(k) * joint(model, pol, &states, &outcomes));
                }
            }
        }
        Ok(Self {
            probabilities,
            num_policies: model.num_policies(),
            num_sequences,
            num_outcome_seqs,
            num_states: n,
            num_obs: o,
            horizon: model.dims.horizon,
            num_observed,
        })
    }

    fn encode(values: &[usize], base: usize) -> usize {
        values.iter().fold(0, |acc, v| acc * base + v)
    }

    /// Probability of one cell.
    pub fn get(&self, policy: usize, states: &[usize], outcomes: &[usize]) -> Result<f64> {
        if policy >= self.num_policies
            || states.len() != self.horizon + 1
            || outcomes.len() != self.num_observed
            || states.iter().any(|s| *s >= self.num_states)
            || outcomes.iter().any(|o| *o >= self.num_obs)
        {
            return Err(Error::Dimension("joint table index out of range".into()));
        }
        let sc = Self::encode(states, self.num_states);
        let oc = Self::encode(outcomes, self.num_obs);
        Ok(self.probabilities[(policy * self.num_sequences + sc) * self.num_outcome_seqs + oc])
    }

    /// Sum of every cell.
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Marginal probability of an outcome sequence, summed over policies and states.
    pub fn outcome_probability(&self, outcomes: &[usize]) -> Result<f64> {
        if outcomes.len() != self.num_observed || outcomes.iter().any(|o| *o >= self.num_obs) {
            return Err(Error::Dimension("outcome sequence does not fit the table".into()));
        }
        let oc = Self::encode(outcomes, self.num_obs);
        Ok((0..self.num_policies * self.num_sequences)
            .map(|row| self.probabilities[row * self.num_outcome_seqs + oc])
            .sum())
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Which expected free energy to re-sum.
#[derive(Debug, Clone, Copy)]
pub enum EfeVariant<'a> {
    /// Per-policy future marginals s_τ^π for τ = t+1..T.
    Classic(&'a [Vec<ProbVector>]),
    /// Shared marginals D̃_τ for τ = 0..T.
    Factorised(&'a [ProbVector]),
}

fn column_normalised(m: &Array2<f64>, frozen: bool) -> Vec<Vec<f64>> {
    let (rows, cols) = m.dim();
    let mut out = vec![vec![0.0; cols]; rows];
    for j in 0..cols {
        let mut total = 0.0;
        for i in 0..rows {
            total += m[[i, j]];
        }
        for i in 0..rows {
            out[i][j] = if frozen { m[[i, j]] } else { m[[i, j]] / total };
        }
    }
    out
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.max(1e-16).ln()
    }
}

/// Expected free energy by direct nested loops over the model's mean parameters.
#[allow(clippy::needless_range_loop)]
pub fn brute_force_efe(model: &GenerativeModel, variant: EfeVariant<'_>) -> Result<Vec<f64>> {
    model.check()?;
    let n = model.dims.num_states;
    match variant {
        EfeVariant::Classic(future) => {
            let a = column_normalised(&model.a, model.frozen.a);
            let c: Vec<f64> = model.c.to_vec();
            let mut out = Vec::with_capacity(future.len());
            for steps in future {
                let mut g = 0.0;
                for s in steps {
                    if s.len() != n {
                        return Err(Error::Dimension("marginal size".into()));
                    }
                    for o in 0..model.dims.num_obs {
                        let mut q = 0.0;
                        for j in 0..n {
                            q += a[o][j] * s.get(j);
                        }
                        if q > 0.0 && c[o] == 0.0 {
                            g = f64::INFINITY;
                        } else {
                            g += xlogy(q, q) - xlogy(q, c[o]);
                        }
                        for j in 0..n {
                            g -= s.get(j) * xlogy(a[o][j], a[o][j]);
                        }
                    }
                }
                out.push(g);
            }
            Ok(out)
        }
        EfeVariant::Factorised(d_tilde) => {
            if d_tilde.len() != model.dims.horizon + 1 {
                return Err(Error::Dimension("need marginals for τ = 0..T".into()));
            }
            let b: Vec<Vec<Vec<f64>>> = model.b.iter().map(|bu| column_normalised(bu, model.frozen.b)).collect();
            let mut out = Vec::with_capacity(model.num_policies());
            for policy in model.policies.iter() {
                let mut g = 0.0;
                for tau in 1..=model.dims.horizon {
                    let bu = &b[policy[tau - 1]];
                    for j in 0..n {
                        let mut h = 0.0;
                        for row in bu.iter() {
                            h -= xlogy(row[j], row[j]);
                        }
                        g += d_tilde[tau - 1].get(j) * h;
                    }
                }
                out.push(g);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Frozen, ModelDims, PolicySet};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn single_latent() -> GenerativeModel {
        GenerativeModel {
            dims: ModelDims {
                num_states: 2,
                num_obs: 2,
                num_actions: 1,
                horizon: 0,
            },
            a: array![[0.8, 0.3], [0.2, 0.7]],
            b: vec![array![[1.0, 0.0], [0.0, 1.0]]],
            d: array![0.5, 0.5],
            c: array![0.5, 0.5],
            policies: PolicySet::empty_policy(),
            beta: 1.0,
            c_const: 10.0,
            frozen: Frozen::all(),
        }
    }

    fn chain() -> GenerativeModel {
        GenerativeModel {
            dims: ModelDims {
                num_states: 2,
                num_obs: 2,
                num_actions: 1,
                horizon: 2,
            },
            a: array![[1.0, 0.0], [0.0, 1.0]],
            b: vec![array![[0.0, 1.0], [1.0, 0.0]]],
            d: array![1.0, 0.0],
            c: array![0.5, 0.5],
            policies: PolicySet::new(vec![vec![0, 0]]),
            beta: 1.0,
            c_const: 10.0,
            frozen: Frozen::all(),
        }
    }

    fn o(i: usize) -> OneHot {
        OneHot::new(i, 2).unwrap()
    }

    #[test]
    fn single_latent_evidence_and_marginal() {
        let m = single_latent();
        assert_abs_diff_eq!(exact_evidence(&m, &[o(0)], 0).unwrap(), 0.55f64.ln(), epsilon = 1e-15);
        let post = exact_posterior_marginals(&m, &[o(0)], 0).unwrap();
        assert_abs_diff_eq!(post[0].get(0), 0.727_272_727_272_727_3, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_chain() {
        let m = chain();
        assert_eq!(exact_evidence(&m, &[o(0), o(1), o(0)], 0).unwrap(), 0.0);
        let post = exact_posterior_marginals(&m, &[o(0)], 0).unwrap();
        assert_eq!(post[1].to_vec(), vec![0.0, 1.0]);
        assert_eq!(exact_evidence(&m, &[o(1)], 0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(exact_posterior_marginals(&m, &[o(1)], 0), Err(Error::ZeroEvidence));
    }

    #[test]
    fn uniform_model_gives_uniform_marginals() {
        let mut m = chain();
        m.a = array![[0.5, 0.5], [0.5, 0.5]];
        m.b = vec![array![[0.5, 0.5], [0.5, 0.5]]];
        m.d = array![0.5, 0.5];
        for p in exact_posterior_marginals(&m, &[o(1), o(0)], 0).unwrap() {
            assert_eq!(p.to_vec(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn learned_parameters_are_rejected() {
        let mut m = single_latent();
        m.frozen.a = false;
        assert_eq!(exact_evidence(&m, &[o(0)], 0), Err(Error::OracleNeedsFrozen("a")));
    }

    #[test]
    fn size_cap() {
        let mut m = chain();
        m.dims.horizon = 20;
        m.policies = PolicySet::new(vec![vec![0; 20]]);
        assert!(matches!(exact_evidence(&m, &[], 0), Err(Error::OracleTooLarge { .. })));
    }

    #[test]
    fn joint_table_normalises_and_mixes() {
        let mut m = chain();
        m.dims.num_actions = 2;
        m.a = array![[0.7, 0.4], [0.3, 0.6]];
        m.b.push(array![[0.6, 0.1], [0.4, 0.9]]);
        m.d = array![0.35, 0.65];
        m.policies = PolicySet::new(vec![vec![0, 1], vec![1, 1], vec![1, 0]]);
        let prior = ProbVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let table = JointTable::build(&m, &prior, 2).unwrap();
        assert_abs_diff_eq!(table.total(), 1.0, epsilon = 1e-12);
        let obs = [o(1), o(0)];
        let mixture = exact_mixture_evidence(&m, &obs, &prior.to_vec()).unwrap();
        assert_abs_diff_eq!(
            table.outcome_probability(&[1, 0]).unwrap(),
            mixture.exp(),
            epsilon = 1e-14
        );
        let cell = table.get(1, &[0, 1, 1], &[1, 0]).unwrap();
        assert_abs_diff_eq!(cell, 0.5 * 0.35 * 0.4 * 0.9 * 0.3 * 0.4, epsilon = 1e-15);
    }

    #[test]
    fn brute_force_efe_limits() {
        let mut m = chain();
        m.c = array![1.0, 0.0];
        let s = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let g = brute_force_efe(&m, EfeVariant::Classic(&[vec![s.clone()]])).unwrap();
        assert_eq!(g, vec![0.0]);
        m.b = vec![array![[0.5, 0.5], [0.5, 0.5]]];
        let d = vec![s; 3];
        let g = brute_force_efe(&m, EfeVariant::Factorised(&d)).unwrap();
        assert_abs_diff_eq!(g[0], 2.0 * 2f64.ln(), epsilon = 1e-15);
    }
}
