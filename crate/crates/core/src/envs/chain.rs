//! Sparse-reward chain used to show why a single train/validation split can
//! pick the wrong learner.
//!
//! States `0..=H`, start in `0`. [`DOWN`] moves one state down (floor at 0),
//! [`UP`] one state up (ceiling at `H`). Entering state 0 pays `low_reward`,
//! entering state `H` pays `high_reward`, everything else pays 0. An episode
//! is `H` steps, so only the all-`UP` trajectory reaches `H` and it does so on
//! the last step, earning `high_reward` exactly once. Staying at the floor for
//! all `H` steps earns `H * low_reward`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{EnvError, TabularEnv};
use crate::data::{Dataset, Step, Trajectory};
use crate::math;
use crate::rng::{tags, RngSeed};

pub const DOWN: usize = 0;
pub const UP: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub horizon: usize,
    pub low_reward: f64,
    pub high_reward: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { horizon: 6, low_reward: 1.0 / 6.0, high_reward: 201.0 }
    }
}

pub fn make_chain_env(config: ChainConfig) -> Result<TabularEnv, EnvError> {
    let h = config.horizon;
    if h < 2 {
        return Err(EnvError::Invalid("chain horizon must be at least 2"));
    }
    if h > 62 {
        return Err(EnvError::Invalid("chain horizon must be at most 62"));
    }
    if !config.low_reward.is_finite() || !config.high_reward.is_finite() {
        return Err(EnvError::Invalid("chain rewards must be finite"));
    }
    let n = h + 1;
    let mut transition = vec![0.0; n * 2 * n];
    for s in 0..n {
        let down = s.saturating_sub(1);
        let up = (s + 1).min(h);
        transition[(s * 2 + DOWN) * n + down] = 1.0;
        transition[(s * 2 + UP) * n + up] = 1.0;
    }
    let mut reward = vec![0.0; n];
    reward[0] = config.low_reward;
    reward[h] = config.high_reward;
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    TabularEnv::new(n, 2, transition, reward, h, initial)
}

/// Action sequence of the highest-return trajectory.
pub fn all_up_actions(horizon: usize) -> Vec<usize> {
    vec![UP; horizon]
}

pub fn is_all_up(trajectory: &Trajectory) -> bool {
    trajectory.steps.iter().all(|s| s.action == UP)
}

fn chain_start(env: &TabularEnv) -> Result<usize, EnvError> {
    if env.n_actions() != 2 {
        return Err(EnvError::NotAChain);
    }
    for s in 0..env.n_states() {
        for a in 0..2 {
            env.deterministic_next(s, a).ok_or(EnvError::NotAChain)?;
        }
    }
    env.initial_dist().iter().position(|&p| p == 1.0).ok_or(EnvError::NotAChain)
}

/// Replays a fixed action sequence through a deterministic two-action
/// environment, logging propensity 1/2 per step.
fn replay(env: &TabularEnv, start: usize, code: u64) -> Trajectory {
    let mut state = start;
    let steps = (0..env.horizon())
        .map(|t| {
            let action = ((code >> t) & 1) as usize;
            let next_state = env.deterministic_next(state, action).expect("checked deterministic");
            let step = Step {
                state,
                action,
                reward: env.reward(next_state),
                next_state,
                propensity: 0.5,
            };
            state = next_state;
            step
        })
        .collect();
    Trajectory { steps }
}

/// Chain dataset with exactly `round(n / 2^H)` all-`UP` trajectories; the rest
/// are drawn uniformly from the other `2^H - 1` action sequences, and the
/// order is shuffled.
pub fn build_expected_composition_chain_dataset(
    env: &TabularEnv,
    n_episodes: usize,
    seed: RngSeed,
) -> Result<Dataset, EnvError> {
    let n_copies = math::round(n_episodes as f64 / (1u64 << env.horizon()) as f64) as usize;
    build_chain_dataset_with_copies(env, n_episodes, n_copies, seed)
}

/// Chain dataset with exactly `n_copies` all-`UP` trajectories; see
/// [`build_expected_composition_chain_dataset`].
pub fn build_chain_dataset_with_copies(
    env: &TabularEnv,
    n_episodes: usize,
    n_copies: usize,
    seed: RngSeed,
) -> Result<Dataset, EnvError> {
    let start = chain_start(env)?;
    let n_sequences = 1u64 << env.horizon();
    if n_copies > n_episodes {
        return Err(EnvError::Invalid("more all-UP copies than episodes"));
    }
    let mut rng = seed.derive(&[tags::DATA]).rng();
    let all_up = n_sequences - 1;
    let mut codes: Vec<u64> = vec![all_up; n_copies];
    codes.extend((n_copies..n_episodes).map(|_| rng.random_range(0..all_up)));
    codes.shuffle(&mut rng);
    let trajectories = codes.into_iter().map(|c| replay(env, start, c)).collect();
    Ok(Dataset {
        trajectories,
        gamma: 1.0,
        n_states: env.n_states(),
        n_actions: 2,
        env_tag: "chain".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{return_of, validate_dataset};
    use crate::envs::{exact_policy_value, rollout, uniform_behavior_policy};
    use crate::policy::TabularPolicy;

    /// Sum over all 2^H action sequences of probability times return.
    fn enumerate_value(env: &TabularEnv, policy: &TabularPolicy) -> f64 {
        let h = env.horizon();
        let mut total = 0.0;
        for code in 0..(1u64 << h) {
            let traj = replay(env, 0, code);
            let prob: f64 = traj.steps.iter().map(|s| policy.prob(s.state, s.action)).product();
            total += prob * return_of(&traj, 1.0);
        }
        total
    }

    #[test]
    fn default_chain_values() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let up = TabularPolicy::constant(env.n_states(), 2, UP);
        let down = TabularPolicy::constant(env.n_states(), 2, DOWN);
        assert_eq!(exact_policy_value(&env, &up).unwrap(), 201.0);
        assert!((exact_policy_value(&env, &down).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smallest_chain() {
        let env = make_chain_env(ChainConfig { horizon: 2, ..Default::default() }).unwrap();
        let up = TabularPolicy::constant(env.n_states(), 2, UP);
        assert_eq!(exact_policy_value(&env, &up).unwrap(), 201.0);
        assert!(make_chain_env(ChainConfig { horizon: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn uniform_value_matches_enumeration() {
        for h in [2, 3, 6, 8] {
            let env = make_chain_env(ChainConfig { horizon: h, ..Default::default() }).unwrap();
            let pol = uniform_behavior_policy(&env);
            let dp = exact_policy_value(&env, &pol).unwrap();
            let brute = enumerate_value(&env, &pol);
            assert!((dp - brute).abs() <= 1e-12, "H={h}: {dp} vs {brute}");
            let skew = TabularPolicy::softmax(env.n_states(), 2, &(0..2 * (h + 1)).map(|i| (i % 3) as f64).collect::<Vec<_>>(), 1.0);
            assert!((exact_policy_value(&env, &skew).unwrap() - enumerate_value(&env, &skew)).abs() <= 1e-12);
        }
    }

    #[test]
    fn only_all_up_reaches_high_reward() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        for code in 0..64u64 {
            let g = return_of(&replay(&env, 0, code), 1.0);
            if code == 63 {
                assert_eq!(g, 201.0);
            } else {
                assert!(g <= 1.0 + 1e-12, "code {code}: {g}");
            }
        }
    }

    #[test]
    fn expected_composition_counts() {
        for (h, n, want) in [(6, 200, 3), (5, 200, 6), (6, 64, 1)] {
            let env = make_chain_env(ChainConfig { horizon: h, ..Default::default() }).unwrap();
            let ds = build_expected_composition_chain_dataset(&env, n, RngSeed(4)).unwrap();
            assert_eq!(ds.len(), n);
            assert_eq!(ds.trajectories.iter().filter(|t| is_all_up(t)).count(), want);
            assert!(validate_dataset(&ds).is_ok());
        }
    }

    #[test]
    fn expected_composition_requires_chain() {
        let env = crate::envs::make_random_mdp(4, 2, 3, 0.5, RngSeed(1)).unwrap();
        assert_eq!(
            build_expected_composition_chain_dataset(&env, 10, RngSeed(0)),
            Err(EnvError::NotAChain)
        );
    }

    #[test]
    fn uniform_rollout_has_about_n_over_2h_all_up() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let pol = uniform_behavior_policy(&env);
        let mut total = 0;
        for seed in 0..200 {
            let ds = rollout(&env, &pol, 200, RngSeed(seed)).unwrap();
            total += ds.trajectories.iter().filter(|t| is_all_up(t)).count();
        }
        let mean = total as f64 / 200.0;
        // Binomial(200, 1/64) mean 3.125, sd of the 200-run average ~0.124.
        assert!((mean - 3.125).abs() < 0.5, "{mean}");
    }
}
