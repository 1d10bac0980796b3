//! Random small models shared by the integration suites.
#![allow(dead_code)]

use actinf::model::enumerate_policies;
use actinf::{Frozen, GenerativeModel, ModelDims, OneHot, PolicySet};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

/// A point drawn uniformly from the simplex.
pub fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn stochastic<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for j in 0..cols {
        for (i, v) in simplex(rng, rows).into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

fn counts<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(0.3..3.0))
}

/// |S|, |O| in 1..=3 (at least one of them 2 or more), T in 0..=2, at most four policies.
pub fn random_model<R: Rng>(rng: &mut R, frozen: bool) -> GenerativeModel {
    let num_states = rng.gen_range(2..=3);
    let num_obs = rng.gen_range(2..=3);
    let num_actions = rng.gen_range(1..=2);
    let horizon = rng.gen_range(0..=2);
    let policies = if horizon == 0 {
        PolicySet::empty_policy()
    } else {
        let mut all = enumerate_policies(num_actions, horizon).unwrap().policies;
        all.shuffle(rng);
        let k = rng.gen_range(1..=all.len().min(4));
        all.truncate(k);
        PolicySet::new(all)
    };
    let (a, b, d) = if frozen {
        (
            stochastic(rng, num_obs, num_states),
            (0..num_actions)
                .map(|_| stochastic(rng, num_states, num_states))
                .collect(),
            Array1::from(simplex(rng, num_states)),
        )
    } else {
        (
            counts(rng, num_obs, num_states),
            (0..num_actions).map(|_| counts(rng, num_states, num_states)).collect(),
            Array1::from((0..num_states).map(|_| rng.gen_range(0.3..3.0)).collect::<Vec<_>>()),
        )
    };
    GenerativeModel {
        dims: ModelDims {
            num_states,
            num_obs,
            num_actions,
            horizon,
        },
        a,
        b,
        d,
        c: Array1::from(simplex(rng, num_obs)),
        policies,
        beta: rng.gen_range(0.5..2.0),
        c_const: 50.0,
        frozen: if frozen { Frozen::all() } else { Frozen::default() },
    }
}

/// Between one and T+1 random observations.
pub fn random_observations<R: Rng>(rng: &mut R, model: &GenerativeModel) -> Vec<OneHot> {
    let n = rng.gen_range(1..=model.dims.horizon + 1);
    (0..n)
        .map(|_| OneHot::new(rng.gen_range(0..model.dims.num_obs), model.dims.num_obs).unwrap())
        .collect()
}

/// Random expected free energies in [0, 3).
pub fn random_efe<R: Rng>(rng: &mut R, model: &GenerativeModel) -> Vec<f64> {
    (0..model.num_policies()).map(|_| rng.gen_range(0.0..3.0)).collect()
}
