//! Ground-truth simulators and dataset builders.
//!
//! Rewards in [`TabularEnv`] are attached to states and collected on entry:
//! a step from `s` to `s'` earns `reward[s']`. Every episode runs for exactly
//! `horizon` steps.

mod chain;
mod tutorbot;

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::data::{Dataset, Step, Trajectory};
use crate::policy::TabularPolicy;
use crate::rng::{tags, RngSeed};

pub use chain::{
    all_up_actions, build_chain_dataset_with_copies, build_expected_composition_chain_dataset, is_all_up, make_chain_env, ChainConfig,
    DOWN, UP,
};
pub use tutorbot::{
    make_tutorbot_env, tutorbot_policy_value, tutorbot_rollout, TutorBehavior, TutorBotBuckets,
    TutorBotConfig, TutorBotDataset, TutorBotEnv, TutorBotObs, TUTORBOT_ACTIONS, TUTORBOT_CELLS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(&'static str),
    #[error("policy is {policy_states}x{policy_actions} but environment is {env_states}x{env_actions}")]
    DimensionMismatch {
        policy_states: usize,
        policy_actions: usize,
        env_states: usize,
        env_actions: usize,
    },
    #[error("environment is not a deterministic two-action chain")]
    NotAChain,
}

/// Explicit finite-horizon decision process.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularEnv {
    n_states: usize,
    n_actions: usize,
    /// `transition[(s * n_actions + a) * n_states + s']`.
    transition: Vec<f64>,
    reward: Vec<f64>,
    horizon: usize,
    initial_dist: Vec<f64>,
}

const SUM_TOL: f64 = 1e-9;

impl TabularEnv {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        horizon: usize,
        initial_dist: Vec<f64>,
    ) -> Result<Self, EnvError> {
        if n_states == 0 || n_actions == 0 {
            return Err(EnvError::Invalid("state and action counts must be positive"));
        }
        if horizon == 0 {
            return Err(EnvError::Invalid("horizon must be at least 1"));
        }
        if transition.len() != n_states * n_actions * n_states
            || reward.len() != n_states
            || initial_dist.len() != n_states
        {
            return Err(EnvError::Invalid("table sizes do not match state/action counts"));
        }
        if transition.iter().chain(&initial_dist).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(EnvError::Invalid("probabilities must lie in [0, 1]"));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(EnvError::Invalid("rewards must be finite"));
        }
        for row in transition.chunks(n_states) {
            if (row.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
                return Err(EnvError::Invalid("transition row does not sum to 1"));
            }
        }
        if (initial_dist.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
            return Err(EnvError::Invalid("initial distribution does not sum to 1"));
        }
        Ok(TabularEnv { n_states, n_actions, transition, reward, horizon, initial_dist })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reward(&self, state: usize) -> f64 {
        self.reward[state]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// `p(. | s, a)`.
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub(crate) fn check_policy(&self, policy: &TabularPolicy) -> Result<(), EnvError> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(EnvError::DimensionMismatch {
                policy_states: policy.n_states(),
                policy_actions: policy.n_actions(),
                env_states: self.n_states,
                env_actions: self.n_actions,
            });
        }
        Ok(())
    }

    /// Single deterministic successor of `(s, a)`, if the row is one-hot.
    pub fn deterministic_next(&self, state: usize, action: usize) -> Option<usize> {
        let row = self.transition_row(state, action);
        let next = row.iter().position(|&p| p == 1.0)?;
        row.iter().enumerate().all(|(i, &p)| i == next || p == 0.0).then_some(next)
    }
}

pub(crate) fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Every row uniform over the environment's actions.
pub fn uniform_behavior_policy(env: &TabularEnv) -> TabularPolicy {
    TabularPolicy::uniform(env.n_states, env.n_actions)
}

/// `n_episodes` trajectories of length `horizon` under `policy`, logging the
/// policy's action probability as the propensity. Episode `e` draws from the
/// stream `seed.derive([EPISODE, e])`.
pub fn rollout(
    env: &TabularEnv,
    policy: &TabularPolicy,
    n_episodes: usize,
    seed: RngSeed,
) -> Result<Dataset, EnvError> {
    env.check_policy(policy)?;
    let trajectories = (0..n_episodes)
        .map(|e| {
            let mut rng = seed.derive(&[tags::EPISODE, e as u64]).rng();
            let mut state = sample_categorical(&mut rng, &env.initial_dist);
            let mut steps = Vec::with_capacity(env.horizon);
            for _ in 0..env.horizon {
                let action = sample_categorical(&mut rng, policy.row(state));
                let next_state = sample_categorical(&mut rng, env.transition_row(state, action));
                steps.push(Step {
                    state,
                    action,
                    reward: env.reward[next_state],
                    next_state,
                    propensity: policy.prob(state, action),
                });
                state = next_state;
            }
            Trajectory { steps }
        })
        .collect();
    Ok(Dataset {
        trajectories,
        gamma: 1.0,
        n_states: env.n_states,
        n_actions: env.n_actions,
        env_tag: "tabular".into(),
    })
}

/// Finite-horizon value of `policy` from the initial distribution, by
/// backward induction over `horizon` steps.
pub fn exact_policy_value(env: &TabularEnv, policy: &TabularPolicy) -> Result<f64, EnvError> {
    env.check_policy(policy)?;
    let mut value = vec![0.0; env.n_states];
    let mut next = vec![0.0; env.n_states];
    for _ in 0..env.horizon {
        for (s, slot) in next.iter_mut().enumerate() {
            let mut v = 0.0;
            for a in 0..env.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                let q: f64 = env
                    .transition_row(s, a)
                    .iter()
                    .enumerate()
                    .map(|(s2, &p)| p * (env.reward[s2] + value[s2]))
                    .sum();
                v += pa * q;
            }
            *slot = v;
        }
        core::mem::swap(&mut value, &mut next);
    }
    Ok(env.initial_dist.iter().zip(&value).map(|(d, v)| d * v).sum())
}

/// Random tabular MDP: transition rows from a symmetric Dirichlet(1), rewards
/// uniform on [0, 1) on a seed-chosen `reward_sparsity` fraction of states and
/// zero elsewhere, uniform initial distribution.
pub fn make_random_mdp(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    reward_sparsity: f64,
    seed: RngSeed,
) -> Result<TabularEnv, EnvError> {
    if n_states == 0 || n_actions == 0 || horizon == 0 {
        return Err(EnvError::Invalid("sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&reward_sparsity) {
        return Err(EnvError::Invalid("reward sparsity must lie in [0, 1]"));
    }
    let mut rng = seed.rng();
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let draws: Vec<f64> = (0..n_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        transition.extend(draws.iter().map(|d| d / total));
    }
    let n_rewarded = crate::math::round(reward_sparsity * n_states as f64) as usize;
    let mut order: Vec<usize> = (0..n_states).collect();
    order.shuffle(&mut rng);
    let mut reward = vec![0.0; n_states];
    for &s in &order[..n_rewarded] {
        reward[s] = rng.random::<f64>();
    }
    let initial = vec![1.0 / n_states as f64; n_states];
    TabularEnv::new(n_states, n_actions, transition, reward, horizon, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::return_of;

    #[test]
    fn random_mdp_rows_sum_and_replay() {
        let a = make_random_mdp(5, 3, 4, 0.4, RngSeed(9)).unwrap();
        let b = make_random_mdp(5, 3, 4, 0.4, RngSeed(9)).unwrap();
        assert_eq!(a, b);
        for s in 0..5 {
            for act in 0..3 {
                assert!((a.transition_row(s, act).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(a.rewards().iter().filter(|&&r| r != 0.0).count(), 2);
    }

    #[test]
    fn zero_sparsity_means_zero_value() {
        let env = make_random_mdp(6, 2, 5, 0.0, RngSeed(1)).unwrap();
        assert!(env.rewards().iter().all(|&r| r == 0.0));
        for seed in 0..5 {
            let logits: Vec<f64> = (0..12).map(|i| ((i * 7 + seed) % 5) as f64).collect();
            let pol = TabularPolicy::softmax(6, 2, &logits, 1.0);
            assert_eq!(exact_policy_value(&env, &pol).unwrap(), 0.0);
        }
    }

    #[test]
    fn rollout_logs_propensities_and_replays() {
        let env = make_random_mdp(4, 3, 5, 0.5, RngSeed(3)).unwrap();
        let pol = uniform_behavior_policy(&env);
        let d1 = rollout(&env, &pol, 50, RngSeed(11)).unwrap();
        let d2 = rollout(&env, &pol, 50, RngSeed(11)).unwrap();
        assert_eq!(d1, d2);
        assert!(crate::data::validate_dataset(&d1).is_ok());
        assert!(d1.steps().all(|s| (s.propensity - 1.0 / 3.0).abs() < 1e-15));
        assert!(d1.trajectories.iter().all(|t| t.len() == 5));

        let det = TabularPolicy::constant(4, 3, 2);
        let d3 = rollout(&env, &det, 10, RngSeed(5)).unwrap();
        assert!(d3.steps().all(|s| s.propensity == 1.0 && s.action == 2));
    }

    #[test]
    fn rollout_rejects_mismatched_policy() {
        let env = make_random_mdp(4, 3, 5, 0.5, RngSeed(3)).unwrap();
        assert!(matches!(
            rollout(&env, &TabularPolicy::uniform(4, 2), 1, RngSeed(0)),
            Err(EnvError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exact_value_matches_monte_carlo_within_three_se() {
        for seed in 0..3u64 {
            let env = make_random_mdp(5, 2, 4, 0.6, RngSeed(100 + seed)).unwrap();
            let pol = TabularPolicy::softmax(5, 2, &[0.3, -0.2, 1.0, 0.0, 0.5, 0.5, -1.0, 2.0, 0.1, 0.0], 1.0);
            let exact = exact_policy_value(&env, &pol).unwrap();
            let ds = rollout(&env, &pol, 10_000, RngSeed(seed)).unwrap();
            let returns: Vec<f64> = ds.trajectories.iter().map(|t| return_of(t, 1.0)).collect();
            let n = returns.len() as f64;
            let mean = returns.iter().sum::<f64>() / n;
            let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
            let se = crate::math::sqrt(var / n);
            assert!((mean - exact).abs() <= 3.0 * se, "seed {seed}: {mean} vs {exact} (se {se})");
        }
    }
}
