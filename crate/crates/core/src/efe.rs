//! Expected free energy.
//!
//! Three forms: risk plus ambiguity over future outcomes, the
//! epistemic/extrinsic split of the same quantity, and the factorised form
//! that scores policies by the conditional entropy of their transitions.
//! Predictions use the mean of each Dirichlet (or the frozen probabilities).

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::exp_family::{entropy_view, kl_view, ln_clamped, ProbVector};
use crate::model::PolicySet;

/// One expected free energy per policy. Entries may be `f64::INFINITY` when
/// a predicted outcome has zero preference.
pub type EfeVector = Vec<f64>;

/// Where an inference call takes its expected free energy from. The value is
/// held fixed for the whole call and acts as a parameter of the policy prior.
#[derive(Debug, Clone, PartialEq)]
pub enum EfeSource {
    /// Supplied by the caller, typically computed from the previous cycle.
    Given(EfeVector),
    /// Computed once from the prior by rolling the initial-state mean forward
    /// through the mean transitions.
    PriorPredictive,
}

/// Checks that a policy prior can be built from `g`: no NaN or −∞ and at
/// least one finite entry. Entries of +∞ give their policy zero prior mass.
pub fn check_efe(g: &[f64]) -> Result<()> {
    if g.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
        return Err(Error::Numeric("expected free energy must not be NaN or -inf".into()));
    }
    if !g.iter().any(|x| x.is_finite()) {
        return Err(Error::Numeric("every policy has infinite expected free energy".into()));
    }
    Ok(())
}

/// Outcome prediction `A s`.
pub fn predicted_outcomes(a_mean: &Array2<f64>, s: &ProbVector) -> Result<ProbVector> {
    if a_mean.ncols() != s.len() {
        return Err(Error::Dimension(format!(
            "likelihood has {} state columns, marginal has {} entries",
            a_mean.ncols(),
            s.len()
        )));
    }
    ProbVector::new(a_mean.dot(s.values()))
}

/// Entropy of each column of a column-stochastic matrix.
pub fn column_entropies(m: &Array2<f64>) -> Vec<f64> {
    m.axis_iter(Axis(1)).map(entropy_view).collect()
}

fn check_future(a_mean: &Array2<f64>, c: &ProbVector, future: &[Vec<ProbVector>]) -> Result<()> {
    if a_mean.nrows() != c.len() {
        return Err(Error::Dimension(format!(
            "likelihood has {} outcome rows, preferences have {} entries",
            a_mean.nrows(),
            c.len()
        )));
    }
    if future.is_empty() {
        return Err(Error::Dimension("no policies".into()));
    }
    Ok(())
}

/// Risk plus ambiguity summed over the supplied future marginals.
///
/// `future[k]` holds policy k's state marginals for τ = t+1..T.
pub fn efe_classic(a_mean: &Array2<f64>, c: &ProbVector, future: &[Vec<ProbVector>]) -> Result<EfeVector> {
    check_future(a_mean, c, future)?;
    let ambiguity = column_entropies(a_mean);
    future
        .iter()
        .map(|steps| {
            let mut g = 0.0;
            for s in steps {
                let q = predicted_outcomes(a_mean, s)?;
                let risk = kl_view(q.view(), c.view())?;
                let amb: f64 = s.values().iter().zip(&ambiguity).map(|(p, h)| p * h).sum();
                g += risk + amb;
            }
            Ok(g)
        })
        .collect()
}

/// Epistemic value (mutual information between future states and outcomes)
/// and extrinsic value (expected log preference), per policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EpistemicExtrinsic {
    pub epistemic: Vec<f64>,
    pub extrinsic: Vec<f64>,
}

pub fn efe_epistemic_extrinsic(
    a_mean: &Array2<f64>,
    c: &ProbVector,
    future: &[Vec<ProbVector>],
) -> Result<EpistemicExtrinsic> {
    check_future(a_mean, c, future)?;
    let ln_c: Vec<f64> = c.values().iter().map(|v| ln_clamped(*v)).collect();
    let mut epistemic = Vec::with_capacity(future.len());
    let mut extrinsic = Vec::with_capacity(future.len());
    for steps in future {
        let (mut info, mut value) = (0.0, 0.0);
        for s in steps {
            let q = predicted_outcomes(a_mean, s)?;
            for (o, row) in a_mean.axis_iter(Axis(0)).enumerate() {
                value += q.get(o) * ln_c[o];
                for (j, &lik) in row.iter().enumerate() {
                    let joint = s.get(j) * lik;
                    if joint > 0.0 {
                        info += joint * (ln_clamped(lik) - ln_clamped(q.get(o)));
                    }
                }
            }
        }
        epistemic.push(info.max(0.0));
        extrinsic.push(value);
    }
    Ok(EpistemicExtrinsic { epistemic, extrinsic })
}

/// Σ_{τ=1}^T Σ_j D̃_{τ−1}(j) H(B[U_{τ−1}]_{·j}) for each policy, with `b_mean[u]`
/// the point estimate of each transition matrix and `d_tilde` the state
/// marginals for τ = 0..T.
pub fn efe_factorised(b_mean: &[Array2<f64>], policies: &PolicySet, d_tilde: &[ProbVector]) -> Result<EfeVector> {
    let horizon = d_tilde
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::Dimension("no state marginals".into()))?;
    let entropies: Vec<Vec<f64>> = b_mean.iter().map(column_entropies).collect();
    policies
        .iter()
        .map(|policy| {
            if policy.len() != horizon {
                return Err(Error::Dimension(format!(
                    "policy of length {} against {} transitions",
                    policy.len(),
                    horizon
                )));
            }
            let mut g = 0.0;
            for (tau, &u) in policy.iter().enumerate() {
                let h = entropies.get(u).ok_or(Error::IndexOutOfRange {
                    index: u,
                    dimension: b_mean.len(),
                })?;
                let prev = &d_tilde[tau];
                if prev.len() != h.len() {
                    return Err(Error::Dimension("state marginal size mismatch".into()));
                }
                g += prev.values().iter().zip(h).map(|(p, e)| p * e).sum::<f64>();
            }
            Ok(g)
        })
        .collect()
}
