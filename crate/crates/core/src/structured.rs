//! Structured variational scheme: per-policy state marginals, a policy
//! posterior coupled to a gamma-distributed precision, and Dirichlet
//! posteriors over the likelihood, transition and initial-state parameters.
//!
//! The expected free energy enters as a fixed parameter of the policy prior
//! for the duration of one inference call; see [`EfeSource`].

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::efe::{check_efe, efe_classic, EfeSource, EfeVector};
use crate::error::{Error, Result};
use crate::exp_family::{log_sum_exp, softmax_array, OneHot, ProbVector};
use crate::model::{GenerativeModel, ParamBlock};
use crate::quadrature::expected_log_partition;

/// Iteration cap for the coupled precision/policy update.
pub const GAMMA_PI_MAX_ITERS: usize = 16;
/// Convergence tolerance on the policy posterior (max-norm).
pub const GAMMA_PI_TOL: f64 = 1e-6;
/// Lower bound on the posterior rate of the precision.
pub const BETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredOptions {
    pub sweeps: usize,
    /// Hold the precision at one instead of learning it.
    pub gamma_fixed: bool,
    pub efe: EfeSource,
}

impl Default for StructuredOptions {
    fn default() -> Self {
        Self {
            sweeps: 8,
            gamma_fixed: false,
            efe: EfeSource::PriorPredictive,
        }
    }
}

/// Complete state of the structured scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuredPosterior {
    /// `s[k][τ]`: state marginal at τ under policy k, τ = 0..T.
    pub s: Vec<Vec<ProbVector>>,
    pub pi_hat: ProbVector,
    /// Posterior rate of the precision; fixed at 1 when `gamma_fixed`.
    pub beta_hat: f64,
    /// Posterior mean precision, `1 / beta_hat`.
    pub gamma: f64,
    pub gamma_fixed: bool,
    /// Expected free energy used as the policy prior.
    pub efe: EfeVector,
    pub post_a: ParamBlock,
    pub post_b: Vec<ParamBlock>,
    pub post_d: ParamBlock,
    /// Free energy of the initial state followed by one entry per sweep.
    pub free_energy: Vec<f64>,
}

impl StructuredPosterior {
    /// Policy-averaged state marginal at τ.
    pub fn averaged_marginal(&self, tau: usize) -> ProbVector {
        averaged(&self.s, &self.pi_hat, tau)
    }
}

fn averaged(s: &[Vec<ProbVector>], pi_hat: &ProbVector, tau: usize) -> ProbVector {
    let mut acc = Array1::zeros(s[0][tau].len());
    for (k, seq) in s.iter().enumerate() {
        acc.scaled_add(pi_hat.get(k), seq[tau].values());
    }
    ProbVector::from_array_unchecked(acc)
}

/// Expected logs of the current parameter posteriors.
pub(crate) struct Expectations {
    pub ln_a: Array2<f64>,
    pub ln_b: Vec<Array2<f64>>,
    pub ln_d: Array1<f64>,
}

impl Expectations {
    pub fn new(a: &ParamBlock, b: &[ParamBlock], d: &ParamBlock) -> Self {
        Self {
            ln_a: a.expected_log(),
            ln_b: b.iter().map(ParamBlock::expected_log).collect(),
            ln_d: d.expected_log().column(0).to_owned(),
        }
    }
}

fn expectations(post: &StructuredPosterior) -> Expectations {
    Expectations::new(&post.post_a, &post.post_b, &post.post_d)
}

/// Uniform marginals, uniform policy posterior, priors as parameter posteriors.
pub fn initial_posterior(model: &GenerativeModel, efe: EfeVector, gamma_fixed: bool) -> Result<StructuredPosterior> {
    model.check()?;
    let k = model.num_policies();
    check_efe(&efe)?;
    if efe.len() != k {
        return Err(Error::Dimension(format!(
            "{} expected free energies for {k} policies",
            efe.len()
        )));
    }
    let uniform = ProbVector::uniform(model.dims.num_states)?;
    let beta_hat = if gamma_fixed { 1.0 } else { model.beta };
    Ok(StructuredPosterior {
        s: vec![vec![uniform; model.dims.horizon + 1]; k],
        pi_hat: ProbVector::uniform(k)?,
        beta_hat,
        gamma: 1.0 / beta_hat,
        gamma_fixed,
        efe,
        post_a: model.param_a()?,
        post_b: model.param_b()?,
        post_d: model.param_d()?,
        free_energy: Vec::new(),
    })
}

fn state_logits(s: &[ProbVector], policy: &[usize], ex: &Expectations, obs: &[OneHot], tau: usize) -> Array1<f64> {
    let horizon = s.len() - 1;
    let mut mu = if tau == 0 {
        ex.ln_d.clone()
    } else {
        ex.ln_b[policy[tau - 1]].dot(s[tau - 1].values())
    };
    if let Some(o) = obs.get(tau) {
        mu += &ex.ln_a.row(o.index());
    }
    if tau < horizon {
        mu += &ex.ln_b[policy[tau]].t().dot(s[tau + 1].values());
    }
    mu
}

/// New marginal for `s[policy][tau]` given its neighbours and the current
/// parameter posteriors.
pub fn update_state_marginal(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    observations: &[OneHot],
    tau: usize,
    policy: usize,
) -> Result<ProbVector> {
    model.check_observations(observations)?;
    if tau > model.dims.horizon {
        return Err(Error::IndexOutOfRange {
            index: tau,
            dimension: model.dims.horizon + 1,
        });
    }
    if policy >= post.s.len() {
        return Err(Error::IndexOutOfRange {
            index: policy,
            dimension: post.s.len(),
        });
    }
    let ex = expectations(post);
    let mu = state_logits(&post.s[policy], model.policies.get(policy), &ex, observations, tau);
    softmax_array(&mu.view())
}

fn entropy_term(s: &ProbVector) -> f64 {
    s.values().dot(&s.ln())
}

pub(crate) fn f_pi_with(s: &[Vec<ProbVector>], model: &GenerativeModel, ex: &Expectations, obs: &[OneHot]) -> Vec<f64> {
    s.iter()
        .zip(model.policies.iter())
        .map(|(seq, policy)| {
            let mut f = entropy_term(&seq[0]) - seq[0].values().dot(&ex.ln_d);
            for tau in 1..seq.len() {
                let pred = ex.ln_b[policy[tau - 1]].dot(seq[tau - 1].values());
                f += entropy_term(&seq[tau]) - seq[tau].values().dot(&pred);
            }
            for (tau, o) in obs.iter().enumerate() {
                f -= ex.ln_a.row(o.index()).dot(seq[tau].values());
            }
            f
        })
        .collect()
}

/// Per-policy free energy of the state marginals.
pub fn compute_f_pi(post: &StructuredPosterior, model: &GenerativeModel, observations: &[OneHot]) -> Result<Vec<f64>> {
    model.check_observations(observations)?;
    Ok(f_pi_with(&post.s, model, &expectations(post), observations))
}

/// Result of the coupled precision/policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPi {
    pub pi_hat: ProbVector,
    pub beta_hat: f64,
    pub gamma: f64,
    pub iterations: usize,
}

/// Σ_k g_k w_k over policies with finite g; the others carry no mass.
fn finite_dot<'a>(g: &[f64], w: impl IntoIterator<Item = &'a f64>) -> f64 {
    g.iter().zip(w).filter(|(x, _)| x.is_finite()).map(|(x, v)| x * v).sum()
}

fn neg_scaled(g: &[f64], scale: f64, f: Option<&[f64]>) -> Array1<f64> {
    let mut v: Array1<f64> = g.iter().map(|x| -scale * x).collect();
    if let Some(f) = f {
        v.iter_mut().zip(f).for_each(|(x, fi)| *x -= fi);
    }
    v
}

/// Coupled update of the policy posterior and the precision posterior rate.
///
/// Starting from `beta_hat`, iterates γ = 1/𝛃, π̂₀ = σ(−γG), π̂ = σ(−γG − 𝓕),
/// 𝛃 = β + G·(π̂ − π̂₀) until π̂ moves less than [`GAMMA_PI_TOL`] or
/// [`GAMMA_PI_MAX_ITERS`] is reached, then refreshes π̂ at the final 𝛃.
/// After the first step the new 𝛃 is a secant step on the residual
/// β + G·(π̂ − π̂₀) − 𝛃, kept inside the bracket of residual signs seen so
/// far; plain substitution converges too slowly when β is small.
/// With `gamma_fixed` the precision is one and π̂ = σ(−G − 𝓕).
pub fn update_gamma_and_pi(g: &[f64], f_pi: &[f64], beta: f64, beta_hat: f64, gamma_fixed: bool) -> Result<GammaPi> {
    if g.len() != f_pi.len() || g.is_empty() {
        return Err(Error::Dimension(format!(
            "{} expected free energies and {} policy free energies",
            g.len(),
            f_pi.len()
        )));
    }
    check_efe(g)?;
    if f_pi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("policy free energy must be finite".into()));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!("beta = {beta} must be > 0")));
    }
    if gamma_fixed {
        return Ok(GammaPi {
            pi_hat: softmax_array(&neg_scaled(g, 1.0, Some(f_pi)).view())?,
            beta_hat: 1.0,
            gamma: 1.0,
            iterations: 0,
        });
    }
    // Residual r(𝛃) = β + G·(π̂ − π̂₀) − 𝛃 of the fixed-point equation.
    let step = |b: f64| -> Result<(ProbVector, f64)> {
        let gamma = 1.0 / b;
        let pi0 = softmax_array(&neg_scaled(g, gamma, None).view())?;
        let pi = softmax_array(&neg_scaled(g, gamma, Some(f_pi)).view())?;
        let next = (beta + finite_dot(g, &(pi.values() - pi0.values()))).max(BETA_FLOOR);
        Ok((pi, next - b))
    };
    let mut beta_hat = beta_hat.max(BETA_FLOOR);
    let mut pi_hat: Option<ProbVector> = None;
    let mut prev: Option<(f64, f64)> = None;
    // Largest 𝛃 seen with r > 0 and smallest with r < 0.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut iterations = 0;
    for _ in 0..GAMMA_PI_MAX_ITERS {
        iterations += 1;
        let (pi, r) = step(beta_hat)?;
        let moved = pi_hat.as_ref().map_or(f64::INFINITY, |old| {
            (old.values() - pi.values()).fold(0.0, |m, d| m.max(d.abs()))
        });
        pi_hat = Some(pi);
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            lo = lo.max(beta_hat);
        } else {
            hi = hi.min(beta_hat);
        }
        let substitution = beta_hat + r;
        if moved < GAMMA_PI_TOL {
            beta_hat = substitution;
            break;
        }
        let secant = prev
            .filter(|(_, r_prev)| *r_prev != r)
            .map(|(b_prev, r_prev)| beta_hat - r * (beta_hat - b_prev) / (r - r_prev))
            .filter(|x| x.is_finite() && *x > lo && *x < hi && *x >= BETA_FLOOR);
        prev = Some((beta_hat, r));
        beta_hat = match secant {
            Some(x) => x,
            None if lo.is_finite() && hi.is_finite() => 0.5 * (lo + hi),
            None => substitution,
        };
    }
    let gamma = 1.0 / beta_hat;
    Ok(GammaPi {
        pi_hat: softmax_array(&neg_scaled(g, gamma, Some(f_pi)).view())?,
        beta_hat,
        gamma,
        iterations,
    })
}

/// Which parameter posterior to recompute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    D,
    A,
    B,
}

/// Recomputed parameter posterior(s).
#[derive(Debug, Clone, PartialEq)]
pub enum ParamUpdate {
    D(ParamBlock),
    A(ParamBlock),
    B(Vec<ParamBlock>),
}

/// Prior counts plus the expected sufficient statistics under the current
/// marginals: 𝐝 = d + s̄₀, 𝐚 = a + Σ_τ o_τ ⊗ s̄_τ,
/// 𝐛[u] = b[u] + Σ_{(k,τ): U_{τ−1}^k = u} π̂_k s_τ^k ⊗ s_{τ−1}^k.
/// Frozen parameters are returned unchanged.
pub fn update_dirichlet_params(
    kind: ParamKind,
    post: &StructuredPosterior,
    model: &GenerativeModel,
    observations: &[OneHot],
) -> Result<ParamUpdate> {
    model.check_observations(observations)?;
    match kind {
        ParamKind::D => {
            let s0 = post.averaged_marginal(0);
            let delta = s0.values().clone().insert_axis(Axis(1));
            Ok(ParamUpdate::D(model.param_d()?.add_counts(&delta)?))
        }
        ParamKind::A => {
            let mut delta = Array2::zeros((model.dims.num_obs, model.dims.num_states));
            for (tau, o) in observations.iter().enumerate() {
                let s = post.averaged_marginal(tau);
                delta.row_mut(o.index()).scaled_add(1.0, s.values());
            }
            Ok(ParamUpdate::A(model.param_a()?.add_counts(&delta)?))
        }
        ParamKind::B => {
            let n = model.dims.num_states;
            let mut deltas = vec![Array2::<f64>::zeros((n, n)); model.dims.num_actions];
            for (k, policy) in model.policies.iter().enumerate() {
                let w = post.pi_hat.get(k);
                let seq = &post.s[k];
                for tau in 1..seq.len() {
                    let cur = seq[tau].values().view().insert_axis(Axis(1));
                    let prev = seq[tau - 1].values().view().insert_axis(Axis(0));
                    deltas[policy[tau - 1]].scaled_add(w, &cur.dot(&prev));
                }
            }
            let priors = model.param_b()?;
            let blocks = priors
                .iter()
                .zip(&deltas)
                .map(|(p, d)| p.add_counts(d))
                .collect::<Result<Vec<_>>>()?;
            Ok(ParamUpdate::B(blocks))
        }
    }
}

/// −E_Q[ln P(π | γ)] + KL(Q(γ) || P(γ)).
fn policy_prior_term(post: &StructuredPosterior, beta: f64) -> f64 {
    let g = &post.efe;
    let expected_g = post
        .pi_hat
        .values()
        .iter()
        .zip(g)
        .map(|(p, x)| if *p > 0.0 { p * x } else { 0.0 })
        .sum::<f64>();
    if post.gamma_fixed {
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        expected_g + log_sum_exp(&neg)
    } else {
        let b = post.beta_hat;
        let kl_gamma = (b / beta).ln() + beta / b - 1.0;
        expected_g / b + expected_log_partition(g, b) + kl_gamma
    }
}

/// Variational free energy E_Q[ln Q − ln P] of the structured posterior.
pub fn variational_free_energy(
    post: &StructuredPosterior,
    model: &GenerativeModel,
    observations: &[OneHot],
) -> Result<f64> {
    model.check_observations(observations)?;
    let f_pi = f_pi_with(&post.s, model, &expectations(post), observations);
    free_energy_with(post, model, &f_pi)
}

fn free_energy_with(post: &StructuredPosterior, model: &GenerativeModel, f_pi: &[f64]) -> Result<f64> {
    let mut kl = post.post_a.kl_to(&model.param_a()?)? + post.post_d.kl_to(&model.param_d()?)?;
    for (q, p) in post.post_b.iter().zip(model.param_b()?.iter()) {
        kl += q.kl_to(p)?;
    }
    let neg_entropy_pi = post.pi_hat.values().dot(&post.pi_hat.ln());
    let states: f64 = post.pi_hat.values().iter().zip(f_pi).map(|(p, f)| p * f).sum();
    Ok(kl + neg_entropy_pi + policy_prior_term(post, model.beta) + states)
}

/// Expected free energy from the prior alone, for the future steps after
/// `num_observations − 1`.
pub fn prior_predictive_efe(model: &GenerativeModel, num_observations: usize) -> Result<EfeVector> {
    model.check()?;
    let b_mean: Vec<Array2<f64>> = model.param_b()?.iter().map(ParamBlock::mean).collect();
    let d_mean = model.param_d()?.mean().column(0).to_owned();
    let rollouts: Vec<Vec<ProbVector>> = model
        .policies
        .iter()
        .map(|policy| {
            let mut s = vec![ProbVector::from_array_unchecked(d_mean.clone())];
            for &u in policy {
                let next = b_mean[u].dot(s.last().unwrap().values());
                s.push(ProbVector::from_array_unchecked(next));
            }
            s
        })
        .collect();
    efe_from_marginals(model, &model.param_a()?, &rollouts, num_observations)
}

/// Risk plus ambiguity of each policy's marginals for τ ≥ `from_tau`.
pub fn classic_efe(post: &StructuredPosterior, model: &GenerativeModel, from_tau: usize) -> Result<EfeVector> {
    efe_from_marginals(model, &post.post_a, &post.s, from_tau)
}

fn efe_from_marginals(
    model: &GenerativeModel,
    a: &ParamBlock,
    s: &[Vec<ProbVector>],
    from_tau: usize,
) -> Result<EfeVector> {
    let future: Vec<Vec<ProbVector>> = s
        .iter()
        .map(|seq| seq.iter().skip(from_tau).cloned().collect())
        .collect();
    efe_classic(&a.mean(), &model.preferences()?, &future)
}

fn resolve_efe(model: &GenerativeModel, observations: &[OneHot], source: &EfeSource) -> Result<EfeVector> {
    match source {
        EfeSource::Given(g) => Ok(g.clone()),
        EfeSource::PriorPredictive => prior_predictive_efe(model, observations.len()),
    }
}

/// Coordinate descent on the free energy.
///
/// Each sweep updates every policy's marginals forward over τ = 0..T and
/// back, then the precision and policy posteriors, then the Dirichlet
/// posteriors. Zero sweeps return the initial posterior.
pub fn infer_structured(
    model: &GenerativeModel,
    observations: &[OneHot],
    options: &StructuredOptions,
) -> Result<StructuredPosterior> {
    model.check()?;
    model.check_observations(observations)?;
    let efe = resolve_efe(model, observations, &options.efe)?;
    let mut post = initial_posterior(model, efe, options.gamma_fixed)?;
    let f0 = variational_free_energy(&post, model, observations)?;
    post.free_energy.push(f0);
    let horizon = model.dims.horizon;

    for _ in 0..options.sweeps {
        let ex = expectations(&post);
        for (k, policy) in model.policies.iter().enumerate() {
            let order = (0..=horizon).chain((0..horizon).rev());
            for tau in order {
                let mu = state_logits(&post.s[k], policy, &ex, observations, tau);
                post.s[k][tau] = softmax_array(&mu.view())?;
            }
        }

        let f_pi = f_pi_with(&post.s, model, &ex, observations);
        let gp = update_gamma_and_pi(&post.efe, &f_pi, model.beta, post.beta_hat, post.gamma_fixed)?;
        post.pi_hat = gp.pi_hat;
        post.beta_hat = gp.beta_hat;
        post.gamma = gp.gamma;

        for kind in [ParamKind::D, ParamKind::A, ParamKind::B] {
            match update_dirichlet_params(kind, &post, model, observations)? {
                ParamUpdate::D(d) => post.post_d = d,
                ParamUpdate::A(a) => post.post_a = a,
                ParamUpdate::B(b) => post.post_b = b,
            }
        }
        let f = variational_free_energy(&post, model, observations)?;
        post.free_energy.push(f);
    }
    Ok(post)
}
