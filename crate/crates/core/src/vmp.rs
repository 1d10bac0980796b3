//! Fully factorised variational message passing.
//!
//! Every latent gets its own factor: one categorical per time step shared by
//! all policies, a categorical over policies, a Dirichlet over the policy
//! probabilities with prior counts θ = c − G, and Dirichlets over the
//! likelihood, transition and initial-state parameters.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::efe::{efe_factorised, EfeSource, EfeVector};
use crate::error::{Error, Result};
use crate::exp_family::{digamma_unchecked, kl_dirichlet, softmax_array, DirichletBlock, OneHot, ProbVector};
use crate::model::{GenerativeModel, ParamBlock, PolicySet};
use crate::structured::Expectations;

#[derive(Debug, Clone, PartialEq)]
pub struct VmpOptions {
    pub sweeps: usize,
    pub efe: EfeSource,
}

impl Default for VmpOptions {
    fn default() -> Self {
        Self {
            sweeps: 8,
            efe: EfeSource::PriorPredictive,
        }
    }
}

/// Complete state of the factorised scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorisedPosterior {
    /// D̃_τ for τ = 0..T.
    pub d_tilde: Vec<ProbVector>,
    /// Posterior over policies.
    pub alpha_tilde: ProbVector,
    /// Prior counts θ = c − G of the policy Dirichlet.
    pub theta: Vec<f64>,
    /// Posterior counts θ̃ of the policy Dirichlet.
    pub post_theta: Vec<f64>,
    pub efe: EfeVector,
    pub post_a: ParamBlock,
    pub post_b: Vec<ParamBlock>,
    pub post_d: ParamBlock,
    /// Free energy of the initial state followed by one entry per sweep.
    pub free_energy: Vec<f64>,
}

/// θ_i = c − G_i; every entry must come out strictly positive.
pub fn theta_from_g(c_const: f64, g: &[f64]) -> Result<Vec<f64>> {
    if g.is_empty() {
        return Err(Error::Dimension("no expected free energies".into()));
    }
    for (policy, &efe) in g.iter().enumerate() {
        if !efe.is_finite() {
            return Err(Error::Numeric(format!("policy {policy} has G = {efe}")));
        }
        if c_const - efe <= 0.0 {
            return Err(Error::ThetaNotPositive { c_const, policy, efe });
        }
    }
    Ok(g.iter().map(|x| c_const - x).collect())
}

/// Expected log policy probabilities ψ(θ_k) − ψ(Σθ).
pub fn alpha_bar(theta: &[f64]) -> Vec<f64> {
    let total = digamma_unchecked(theta.iter().sum());
    theta.iter().map(|t| digamma_unchecked(*t) - total).collect()
}

/// Conjugate count update for a single-column Dirichlet: prior + child marginal.
pub fn msg_update_counts(prior: &DirichletBlock, child: &ProbVector) -> Result<DirichletBlock> {
    if prior.shape() != (child.len(), 1) {
        return Err(Error::Dimension(format!(
            "block {:?} against marginal of length {}",
            prior.shape(),
            child.len()
        )));
    }
    DirichletBlock::new(prior.counts() + &child.values().view().insert_axis(Axis(1)))
}

fn update_column(prior: &ParamBlock, child: &ProbVector) -> Result<ParamBlock> {
    match prior {
        ParamBlock::Dirichlet(b) => Ok(ParamBlock::Dirichlet(msg_update_counts(b, child)?)),
        ParamBlock::Fixed(_) => Ok(prior.clone()),
    }
}

/// 𝐚 = a + Σ_{τ=0}^{t} o_τ ⊗ D̃_τ.
pub fn msg_update_a(prior: &ParamBlock, observations: &[OneHot], d_tilde: &[ProbVector]) -> Result<ParamBlock> {
    if observations.len() > d_tilde.len() {
        return Err(Error::Dimension("more observations than time steps".into()));
    }
    if prior.is_fixed() {
        return Ok(prior.clone());
    }
    let mut counts = prior.matrix().clone();
    for (o, d) in observations.iter().zip(d_tilde) {
        if o.index() >= counts.nrows() || d.len() != counts.ncols() {
            return Err(Error::Dimension("observation or marginal does not fit a".into()));
        }
        let mut row = counts.row_mut(o.index());
        row += d.values();
    }
    Ok(ParamBlock::Dirichlet(DirichletBlock::new(counts)?))
}

/// 𝐛[u] = b[u] + Σ over (k, τ) with U_{τ−1}^k = u of α̃_k D̃_τ ⊗ D̃_{τ−1}.
pub fn msg_update_b(
    prior: &[ParamBlock],
    d_tilde: &[ProbVector],
    alpha_tilde: &ProbVector,
    policies: &PolicySet,
) -> Result<Vec<ParamBlock>> {
    if alpha_tilde.len() != policies.len() {
        return Err(Error::Dimension("policy posterior does not match policy set".into()));
    }
    let mut out = Vec::with_capacity(prior.len());
    for (u, block) in prior.iter().enumerate() {
        if block.is_fixed() {
            out.push(block.clone());
            continue;
        }
        let mut counts = block.matrix().clone();
        for (k, policy) in policies.iter().enumerate() {
            if policy.len() + 1 != d_tilde.len() {
                return Err(Error::Dimension("policy length does not match marginals".into()));
            }
            for tau in 1..d_tilde.len() {
                if policy[tau - 1] != u {
                    continue;
                }
                let w = alpha_tilde.get(k);
                for (i, ci) in d_tilde[tau].values().iter().enumerate() {
                    for (j, pj) in d_tilde[tau - 1].values().iter().enumerate() {
                        counts[[i, j]] += w * ci * pj;
                    }
                }
            }
        }
        out.push(ParamBlock::Dirichlet(DirichletBlock::new(counts)?));
    }
    Ok(out)
}

/// 𝔽_τ(k) = D̃_τ · B̄[U_{τ−1}^k] D̃_{τ−1}, summed over τ = 1..T.
fn transition_scores(d_tilde: &[ProbVector], ln_b: &[Array2<f64>], policies: &PolicySet) -> Vec<f64> {
    policies
        .iter()
        .map(|policy| {
            (1..d_tilde.len())
                .map(|tau| {
                    d_tilde[tau]
                        .values()
                        .dot(&ln_b[policy[tau - 1]].dot(d_tilde[tau - 1].values()))
                })
                .sum()
        })
        .collect()
}

/// α̃ = σ(ᾱ + Σ_τ 𝔽_τ).
pub fn msg_update_pi(post: &FactorisedPosterior, model: &GenerativeModel, alpha_bar: &[f64]) -> Result<ProbVector> {
    if alpha_bar.len() != model.num_policies() {
        return Err(Error::Dimension("alpha_bar does not match policy count".into()));
    }
    let ln_b: Vec<Array2<f64>> = post.post_b.iter().map(ParamBlock::expected_log).collect();
    pi_logits(&post.d_tilde, &ln_b, &model.policies, alpha_bar)
}

fn pi_logits(
    d_tilde: &[ProbVector],
    ln_b: &[Array2<f64>],
    policies: &PolicySet,
    alpha_bar: &[f64],
) -> Result<ProbVector> {
    let scores = transition_scores(d_tilde, ln_b, policies);
    let logits: Array1<f64> = scores.iter().zip(alpha_bar).map(|(f, a)| f + a).collect();
    softmax_array(&logits.view())
}

fn expectations(post: &FactorisedPosterior) -> Expectations {
    Expectations::new(&post.post_a, &post.post_b, &post.post_d)
}

fn state_logits(
    d_tilde: &[ProbVector],
    alpha: &ProbVector,
    policies: &PolicySet,
    ex: &Expectations,
    obs: &[OneHot],
    tau: usize,
) -> Array1<f64> {
    let horizon = d_tilde.len() - 1;
    let mut mu = if tau == 0 {
        ex.ln_d.clone()
    } else {
        let mut past = Array1::zeros(ex.ln_d.len());
        let prev = d_tilde[tau - 1].values();
        for (k, policy) in policies.iter().enumerate() {
            past.scaled_add(alpha.get(k), &ex.ln_b[policy[tau - 1]].dot(prev));
        }
        past
    };
    if let Some(o) = obs.get(tau) {
        mu += &ex.ln_a.row(o.index());
    }
    if tau < horizon {
        let next = d_tilde[tau + 1].values();
        for (k, policy) in policies.iter().enumerate() {
            mu.scaled_add(alpha.get(k), &ex.ln_b[policy[tau]].t().dot(next));
        }
    }
    mu
}

/// New D̃_τ from its Markov blanket.
pub fn msg_update_s(
    post: &FactorisedPosterior,
    model: &GenerativeModel,
    tau: usize,
    observations: &[OneHot],
) -> Result<ProbVector> {
    model.check_observations(observations)?;
    if tau >= post.d_tilde.len() {
        return Err(Error::IndexOutOfRange {
            index: tau,
            dimension: post.d_tilde.len(),
        });
    }
    let mu = state_logits(
        &post.d_tilde,
        &post.alpha_tilde,
        &model.policies,
        &expectations(post),
        observations,
        tau,
    );
    softmax_array(&mu.view())
}

/// Uniform state and policy factors; parameter posteriors equal the priors.
pub fn initial_posterior(model: &GenerativeModel, efe: EfeVector) -> Result<FactorisedPosterior> {
    model.check()?;
    if efe.len() != model.num_policies() {
        return Err(Error::Dimension(format!(
            "{} expected free energies for {} policies",
            efe.len(),
            model.num_policies()
        )));
    }
    let theta = theta_from_g(model.c_const, &efe)?;
    Ok(FactorisedPosterior {
        d_tilde: vec![ProbVector::uniform(model.dims.num_states)?; model.dims.horizon + 1],
        alpha_tilde: ProbVector::uniform(model.num_policies())?,
        post_theta: theta.clone(),
        theta,
        efe,
        post_a: model.param_a()?,
        post_b: model.param_b()?,
        post_d: model.param_d()?,
        free_energy: Vec::new(),
    })
}

/// Variational free energy under the fully factorised posterior.
pub fn factorised_free_energy(
    post: &FactorisedPosterior,
    model: &GenerativeModel,
    observations: &[OneHot],
) -> Result<f64> {
    model.check_observations(observations)?;
    let ex = expectations(post);
    let mut f = post.post_a.kl_to(&model.param_a()?)? + post.post_d.kl_to(&model.param_d()?)?;
    for (q, p) in post.post_b.iter().zip(model.param_b()?.iter()) {
        f += q.kl_to(p)?;
    }
    f += kl_dirichlet(
        Array1::from(post.post_theta.clone()).view(),
        Array1::from(post.theta.clone()).view(),
    );
    let abar = alpha_bar(&post.post_theta);
    let alpha = post.alpha_tilde.values();
    f += alpha.dot(&post.alpha_tilde.ln()) - alpha.iter().zip(&abar).map(|(p, a)| p * a).sum::<f64>();
    for d in &post.d_tilde {
        f += d.values().dot(&d.ln());
    }
    f -= post.d_tilde[0].values().dot(&ex.ln_d);
    let scores = transition_scores(&post.d_tilde, &ex.ln_b, &model.policies);
    f -= alpha.iter().zip(&scores).map(|(p, s)| p * s).sum::<f64>();
    for (tau, o) in observations.iter().enumerate() {
        f -= ex.ln_a.row(o.index()).dot(post.d_tilde[tau].values());
    }
    Ok(f)
}

/// Factorised expected free energy of the posterior's state marginals.
pub fn factorised_efe(post: &FactorisedPosterior, model: &GenerativeModel) -> Result<EfeVector> {
    let b_mean: Vec<Array2<f64>> = post.post_b.iter().map(ParamBlock::mean).collect();
    efe_factorised(&b_mean, &model.policies, &post.d_tilde)
}

/// Factorised expected free energy of the prior: the initial-state mean is
/// rolled forward through the policy-averaged mean transitions.
pub fn prior_predictive_factorised_efe(model: &GenerativeModel) -> Result<EfeVector> {
    model.check()?;
    let b_mean: Vec<Array2<f64>> = model.param_b()?.iter().map(ParamBlock::mean).collect();
    let k = model.num_policies() as f64;
    let mut d = vec![ProbVector::from_array_unchecked(
        model.param_d()?.mean().column(0).to_owned(),
    )];
    for tau in 1..=model.dims.horizon {
        let mut next = Array1::zeros(model.dims.num_states);
        for policy in model.policies.iter() {
            next.scaled_add(1.0 / k, &b_mean[policy[tau - 1]].dot(d[tau - 1].values()));
        }
        d.push(ProbVector::from_array_unchecked(next));
    }
    efe_factorised(&b_mean, &model.policies, &d)
}

/// Coordinate descent on the factorised free energy.
///
/// Each sweep updates D̃ forward over τ = 0..T and back, then α̃, then θ̃,
/// then the Dirichlet parameter posteriors. Zero sweeps return the initial
/// posterior.
pub fn infer_vmp(
    model: &GenerativeModel,
    observations: &[OneHot],
    options: &VmpOptions,
) -> Result<FactorisedPosterior> {
    model.check()?;
    model.check_observations(observations)?;
    let efe = match &options.efe {
        EfeSource::Given(g) => g.clone(),
        EfeSource::PriorPredictive => prior_predictive_factorised_efe(model)?,
    };
    let mut post = initial_posterior(model, efe)?;
    let f0 = factorised_free_energy(&post, model, observations)?;
    post.free_energy.push(f0);
    let horizon = model.dims.horizon;

    for _ in 0..options.sweeps {
        let ex = expectations(&post);
        for tau in (0..=horizon).chain((0..horizon).rev()) {
            let mu = state_logits(
                &post.d_tilde,
                &post.alpha_tilde,
                &model.policies,
                &ex,
                observations,
                tau,
            );
            post.d_tilde[tau] = softmax_array(&mu.view())?;
        }

        let abar = alpha_bar(&post.post_theta);
        post.alpha_tilde = pi_logits(&post.d_tilde, &ex.ln_b, &model.policies, &abar)?;
        post.post_theta = post
            .theta
            .iter()
            .zip(post.alpha_tilde.values())
            .map(|(t, a)| t + a)
            .collect();

        post.post_d = update_column(&model.param_d()?, &post.d_tilde[0])?;
        post.post_a = msg_update_a(&model.param_a()?, observations, &post.d_tilde)?;
        post.post_b = msg_update_b(&model.param_b()?, &post.d_tilde, &post.alpha_tilde, &model.policies)?;

        let f = factorised_free_energy(&post, model, observations)?;
        post.free_energy.push(f);
    }
    Ok(post)
}
