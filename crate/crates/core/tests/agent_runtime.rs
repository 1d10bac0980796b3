//! The action-perception loop, action selection and the bandit agent.

use actinf::agent::{
    bandit_bayes_update, run_trial, select_action_sample_policy, select_action_vote, trial_rngs, Agent, AgentConfig,
    EngineKind, Strategy, TrialLog,
};
use actinf::env::{BanditSpec, EnvSpec, Environment, FoodSpec};
use actinf::model::enumerate_policies;
use actinf::{Error, Frozen, GenerativeModel, ModelDims, PolicySet, ProbVector};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn food_model(horizon: usize) -> GenerativeModel {
    GenerativeModel {
        dims: ModelDims {
            num_states: 2,
            num_obs: 2,
            num_actions: 2,
            horizon,
        },
        a: Array2::ones((2, 2)),
        b: vec![Array2::ones((2, 2)); 2],
        d: Array1::ones(2),
        c: array![0.1, 0.9],
        policies: enumerate_policies(2, horizon).unwrap(),
        beta: 1.0,
        c_const: 50.0,
        frozen: Frozen::default(),
    }
}

fn bandit_model(arms: &[f64]) -> GenerativeModel {
    let k = arms.len();
    let mut a = Array2::zeros((2, k));
    for (j, p) in arms.iter().enumerate() {
        a[[0, j]] = 1.0 - p;
        a[[1, j]] = *p;
    }
    GenerativeModel {
        dims: ModelDims {
            num_states: k,
            num_obs: 2,
            num_actions: k,
            horizon: 3,
        },
        a,
        b: vec![Array2::eye(k); k],
        d: Array1::ones(k),
        c: array![0.1, 0.9],
        policies: enumerate_policies(k, 3).unwrap(),
        beta: 1.0,
        c_const: 50.0,
        frozen: Frozen {
            a: true,
            b: true,
            d: false,
        },
    }
}

fn config(engine: EngineKind, strategy: Strategy) -> AgentConfig {
    AgentConfig {
        engine,
        sweeps: 4,
        strategy,
        gamma_fixed: false,
        seed: 0,
    }
}

fn food() -> EnvSpec {
    EnvSpec::Food(FoodSpec::default())
}

#[test]
fn trial_has_horizon_plus_one_cycles() {
    for engine in [EngineKind::Structured, EngineKind::Vmp] {
        let log = run_trial(&food_model(4), &config(engine, Strategy::Vote), &food(), 3).unwrap();
        assert_eq!(log.records.len(), 5);
        assert_eq!(log.records.iter().filter(|r| r.observation.is_some()).count(), 5);
        assert_eq!(log.records.iter().filter(|r| r.action.is_some()).count(), 4);
        assert!(log.records.iter().enumerate().all(|(i, r)| r.t == i));
        assert!(log.records.last().unwrap().action.is_none());
        for r in &log.records {
            assert!(r.free_energy.is_finite());
            assert_eq!(r.efe.len(), 16);
            assert!((r.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn cycles_past_the_horizon_are_refused() {
    let (env_rng, agent_rng) = trial_rngs(1);
    let mut env = Environment::new(food(), env_rng).unwrap();
    let model = food_model(2);
    let mut agent = Agent::new(model.clone(), config(EngineKind::Structured, Strategy::Vote), agent_rng).unwrap();
    for _ in 0..3 {
        agent.run_cycle(&mut env).unwrap();
    }
    assert!(matches!(
        agent.run_cycle(&mut env),
        Err(Error::HorizonExhausted { t: 3, horizon: 2 })
    ));
    assert_eq!(agent.model(), &model);
    assert_eq!(agent.observations().len(), 3);
}

#[test]
fn identical_seeds_give_identical_logs() {
    for engine in [EngineKind::Structured, EngineKind::Vmp, EngineKind::Bandit] {
        for strategy in [Strategy::Vote, Strategy::SamplePolicy] {
            let (model, env) = if engine == EngineKind::Bandit {
                (
                    bandit_model(&[0.8, 0.5, 0.2]),
                    EnvSpec::Bandit(BanditSpec {
                        reward_probs: vec![0.8, 0.5, 0.2],
                    }),
                )
            } else {
                (food_model(3), food())
            };
            let cfg = config(engine, strategy);
            assert_eq!(
                run_trial(&model, &cfg, &env, 9).unwrap(),
                run_trial(&model, &cfg, &env, 9).unwrap()
            );
        }
    }
}

fn golden_lines(log: &TrialLog) -> String {
    log.records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect()
}

#[test]
fn uniform_food_trial_replays_golden_log() {
    let log = run_trial(
        &food_model(3),
        &config(EngineKind::Structured, Strategy::Vote),
        &food(),
        42,
    )
    .unwrap();
    let golden = include_str!("golden/food_uniform_structured.jsonl");
    assert_eq!(golden_lines(&log), golden);
}

#[test]
fn single_step_policies_vote_and_sample_agree() {
    let policies = PolicySet::new(vec![vec![0], vec![1], vec![2]]);
    let pi = ProbVector::new(vec![0.2, 0.5, 0.3]).unwrap();
    assert_eq!(select_action_vote(&pi, &policies, 0).unwrap(), pi.argmax());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 3];
    for _ in 0..10_000 {
        let (k, rest) = select_action_sample_policy(&pi, &policies, 0, &mut rng).unwrap();
        assert_eq!(rest, vec![k]);
        counts[k] += 1;
    }
    let modal = (0..3).max_by_key(|i| counts[*i]).unwrap();
    assert_eq!(modal, 1);
}

#[test]
fn bandit_update_twice() {
    let uniform = ProbVector::uniform(3).unwrap();
    let row = [0.8, 0.5, 0.2];
    let once = bandit_bayes_update(&uniform, &row).unwrap();
    let twice = bandit_bayes_update(&once, &row).unwrap();
    for (x, y) in once.values().iter().zip([0.8 / 1.5, 0.5 / 1.5, 0.2 / 1.5]) {
        assert!((x - y).abs() < 1e-12);
    }
    for (x, y) in twice.values().iter().zip([0.64 / 0.93, 0.25 / 0.93, 0.04 / 0.93]) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!((twice.get(0) - 0.6882).abs() < 5e-5);
}

#[test]
fn bandit_agent_settles_on_the_best_arm() {
    let model = bandit_model(&[0.8, 0.5, 0.2]);
    let env = EnvSpec::Bandit(BanditSpec {
        reward_probs: vec![0.8, 0.5, 0.2],
    });
    let log = run_trial(&model, &config(EngineKind::Bandit, Strategy::Vote), &env, 0).unwrap();
    assert_eq!(log.records.len(), 4);
    assert!(log.records[0].observation.is_none());
    assert!(log.records.iter().take(3).all(|r| r.action == Some(0)));
    let p = &log.records[0].posterior;
    assert!((p[0] - 0.8 / 1.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn bandit_update_ignores_prior_scale(
        weights in prop::collection::vec(0.01..10.0f64, 2..6),
        scale in 0.01..100.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row: Vec<f64> = weights.iter().map(|_| rand::Rng::gen_range(&mut rng, 0.01..1.0)).collect();
        let prior = ProbVector::from_weights(weights.clone()).unwrap();
        let scaled = ProbVector::from_weights(weights.iter().map(|w| w * scale).collect::<Vec<_>>()).unwrap();
        let x = bandit_bayes_update(&prior, &row).unwrap();
        let y = bandit_bayes_update(&scaled, &row).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_prior_is_absorbing(k in 2usize..6, j in 0usize..6, seed in any::<u64>()) {
        let j = j % k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row: Vec<f64> = (0..k).map(|_| rand::Rng::gen_range(&mut rng, 0.01..1.0)).collect();
        let mut v = vec![0.0; k];
        v[j] = 1.0;
        let post = bandit_bayes_update(&ProbVector::new(v).unwrap(), &row).unwrap();
        prop_assert_eq!(post.argmax(), j);
        prop_assert!((post.get(j) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn environments_replay_from_seed(seed in any::<u64>(), actions in prop::collection::vec(0usize..2, 1..20)) {
        let mut x = Environment::from_seed(food(), seed).unwrap();
        let mut y = Environment::from_seed(food(), seed).unwrap();
        prop_assert_eq!(x.last_observation(), y.last_observation());
        for u in actions {
            let o = x.step(u).unwrap();
            prop_assert!(o < 2);
            prop_assert_eq!(o, y.step(u).unwrap());
        }
    }
}
