//! TutorBot: a simulated tutoring session for elementary school students.
//!
//! Observation per step: pre-test score in `0..=8`, anxiety (`<= 0`),
//! thinking (`>= 0`) and a pre-termination flag that is 1 on the last step.
//! Actions: 0 = encourage, 1 = guided prompt, 2 = hint.
//!
//! Session length is fixed up front, `T = round(7 - 0.46 * pretest + l)` with
//! `l ~ U[-1, 2]`. After each action, anxiety and thinking are linear
//! functions of the last four actions' stimuli:
//!
//! ```text
//! anxiety'  = [u(a_{t-3}), u(a_{t-2}), u(a_{t-1}), u(a_t)] . [0, -0.05, -0.2, -0.5]
//! thinking' = [e(a_{t-3}), e(a_{t-2}), e(a_{t-1}), e(a_t)] . [0.5, 0.3, 0.2, 0]
//! ```
//!
//! where `u` is the action's pressure and `e` its engagement (configurable,
//! history before the first step is zero). Reward is 0 except on the last
//! step, where with probability `p = clamp(anxiety + thinking, 0, 1)` the
//! student improves and earns `N(mu_improv, sd_improv)`, otherwise
//! `N(mu_base, sd_base)`.
//!
//! Tabular learners see a 72-cell discretization: 4 pre-test buckets x 3
//! anxiety buckets x 3 thinking buckets x the flag.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{sample_categorical, EnvError};
use crate::data::{return_of, Dataset, Step, Trajectory};
use crate::math;
use crate::policy::TabularPolicy;
use crate::rng::{tags, RngSeed};

pub const TUTORBOT_ACTIONS: usize = 3;
pub const TUTORBOT_CELLS: usize = 4 * 3 * 3 * 2;

const THETA_ANXIETY: [f64; 4] = [0.0, -0.05, -0.2, -0.5];
const THETA_THINKING: [f64; 4] = [0.5, 0.3, 0.2, 0.0];

/// Bucket boundaries; a value lands in the first bucket whose upper edge it
/// is strictly below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TutorBotBuckets {
    pub pretest_edges: [f64; 3],
    pub anxiety_edges: [f64; 2],
    pub thinking_edges: [f64; 2],
}

impl Default for TutorBotBuckets {
    fn default() -> Self {
        TutorBotBuckets {
            pretest_edges: [2.0, 4.0, 6.0],
            anxiety_edges: [-0.4, -0.1],
            thinking_edges: [1.0 / 3.0, 2.0 / 3.0],
        }
    }
}

fn bucket(value: f64, edges: &[f64]) -> usize {
    edges.iter().position(|&e| value < e).unwrap_or(edges.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TutorBotConfig {
    pub mu_improv: f64,
    pub mu_base: f64,
    pub sd_improv: f64,
    pub sd_base: f64,
    /// Distribution of the pre-test score over `0..=8`.
    pub pretest_dist: [f64; 9],
    /// Per-action pressure feeding anxiety.
    pub pressure: [f64; 3],
    /// Per-action engagement feeding thinking.
    pub engagement: [f64; 3],
    pub buckets: TutorBotBuckets,
}

impl Default for TutorBotConfig {
    fn default() -> Self {
        TutorBotConfig {
            mu_improv: 2.0,
            mu_base: 1.0,
            sd_improv: 1.0,
            sd_base: 0.4,
            pretest_dist: [1.0 / 9.0; 9],
            pressure: [0.0, 0.5, 1.0],
            engagement: [0.4, 1.0, 0.6],
            buckets: TutorBotBuckets::default(),
        }
    }
}

/// Observation attached to each logged step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TutorBotObs {
    pub pretest: u8,
    pub anxiety: f64,
    pub thinking: f64,
    pub pre_termination: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TutorBotEnv {
    config: TutorBotConfig,
    improv: Normal<f64>,
    base: Normal<f64>,
}

pub fn make_tutorbot_env(config: TutorBotConfig) -> Result<TutorBotEnv, EnvError> {
    if config.mu_improv.is_nan() || config.mu_base.is_nan() || config.mu_improv <= config.mu_base {
        return Err(EnvError::Invalid("mu_improv must exceed mu_base"));
    }
    if config.pretest_dist.iter().any(|p| !(0.0..=1.0).contains(p))
        || (config.pretest_dist.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(EnvError::Invalid("pre-test distribution must be a probability vector"));
    }
    if config.pressure.iter().chain(&config.engagement).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EnvError::Invalid("stimuli must be finite and non-negative"));
    }
    let improv = Normal::new(config.mu_improv, config.sd_improv)
        .map_err(|_| EnvError::Invalid("sd_improv must be finite and non-negative"))?;
    let base = Normal::new(config.mu_base, config.sd_base)
        .map_err(|_| EnvError::Invalid("sd_base must be finite and non-negative"))?;
    Ok(TutorBotEnv { config, improv, base })
}

/// How actions are chosen during a TutorBot rollout.
#[derive(Debug, Clone, PartialEq)]
pub enum TutorBehavior {
    /// Same action distribution in every state.
    StateIndependent([f64; 3]),
    /// Table over the discretized cells.
    Table(TabularPolicy),
}

impl TutorBehavior {
    pub fn uniform() -> Self {
        TutorBehavior::StateIndependent([1.0 / 3.0; 3])
    }

    fn row(&self, cell: usize) -> &[f64] {
        match self {
            TutorBehavior::StateIndependent(p) => p,
            TutorBehavior::Table(t) => t.row(cell),
        }
    }

    fn validate(&self) -> Result<(), EnvError> {
        match self {
            TutorBehavior::StateIndependent(p) => {
                if p.iter().any(|x| !(0.0..=1.0).contains(x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(EnvError::Invalid("behavior must be a distribution over 3 actions"));
                }
                Ok(())
            }
            TutorBehavior::Table(t) => {
                if t.n_states() != TUTORBOT_CELLS || t.n_actions() != TUTORBOT_ACTIONS {
                    return Err(EnvError::DimensionMismatch {
                        policy_states: t.n_states(),
                        policy_actions: t.n_actions(),
                        env_states: TUTORBOT_CELLS,
                        env_actions: TUTORBOT_ACTIONS,
                    });
                }
                Ok(())
            }
        }
    }
}

/// TutorBot dataset plus the continuous observation behind every step.
#[derive(Debug, Clone, PartialEq)]
pub struct TutorBotDataset {
    pub dataset: Dataset,
    /// `aux[i][t]` is the observation at step `t` of trajectory `i`.
    pub aux: Vec<Vec<TutorBotObs>>,
}

impl TutorBotEnv {
    pub fn config(&self) -> &TutorBotConfig {
        &self.config
    }

    /// Integer cell of an observation.
    pub fn cell(&self, obs: &TutorBotObs) -> usize {
        let b = &self.config.buckets;
        let p = bucket(obs.pretest as f64, &b.pretest_edges);
        let x = bucket(obs.anxiety, &b.anxiety_edges);
        let h = bucket(obs.thinking, &b.thinking_edges);
        ((p * 3 + x) * 3 + h) * 2 + obs.pre_termination as usize
    }

    /// Session length for a pre-test score and `l` in `[-1, 2]`.
    pub fn session_length(pretest: u8, l: f64) -> usize {
        let t = math::round(7.0 - 0.46 * pretest as f64 + l);
        if t < 1.0 {
            1
        } else {
            t as usize
        }
    }

    fn episode<R: Rng>(&self, behavior: &TutorBehavior, rng: &mut R) -> (Trajectory, Vec<TutorBotObs>) {
        let cfg = &self.config;
        let pretest = sample_categorical(rng, &cfg.pretest_dist) as u8;
        let l = rng.random::<f64>() * 3.0 - 1.0;
        let len = Self::session_length(pretest, l);
        let flag = |t: usize| u8::from(t + 1 == len);

        let mut obs = TutorBotObs { pretest, anxiety: 0.0, thinking: rng.random::<f64>(), pre_termination: flag(0) };
        let mut history: [Option<usize>; 4] = [None; 4];
        let mut steps = Vec::with_capacity(len);
        let mut aux = Vec::with_capacity(len);
        for t in 0..len {
            let cell = self.cell(&obs);
            let probs = behavior.row(cell);
            let action = sample_categorical(rng, probs);
            history.rotate_left(1);
            history[3] = Some(action);
            let mix = |theta: &[f64; 4], stimulus: &[f64; 3]| -> f64 {
                history
                    .iter()
                    .zip(theta)
                    .map(|(a, w)| a.map_or(0.0, |a| w * stimulus[a]))
                    .sum()
            };
            let next = TutorBotObs {
                pretest,
                anxiety: mix(&THETA_ANXIETY, &cfg.pressure),
                thinking: mix(&THETA_THINKING, &cfg.engagement),
                pre_termination: flag(t + 1),
            };
            let reward = if t + 1 == len {
                let p = (next.anxiety + next.thinking).clamp(0.0, 1.0);
                if rng.random::<f64>() < p {
                    self.improv.sample(rng)
                } else {
                    self.base.sample(rng)
                }
            } else {
                0.0
            };
            steps.push(Step {
                state: cell,
                action,
                reward,
                next_state: self.cell(&next),
                propensity: probs[action],
            });
            aux.push(obs);
            obs = next;
        }
        (Trajectory { steps }, aux)
    }
}

/// `n_episodes` TutorBot sessions; episode `e` uses `seed.derive([EPISODE, e])`.
pub fn tutorbot_rollout(
    env: &TutorBotEnv,
    behavior: &TutorBehavior,
    n_episodes: usize,
    seed: RngSeed,
) -> Result<TutorBotDataset, EnvError> {
    behavior.validate()?;
    let (trajectories, aux) = (0..n_episodes)
        .map(|e| env.episode(behavior, &mut seed.derive(&[tags::EPISODE, e as u64]).rng()))
        .unzip();
    Ok(TutorBotDataset {
        dataset: Dataset {
            trajectories,
            gamma: 1.0,
            n_states: TUTORBOT_CELLS,
            n_actions: TUTORBOT_ACTIONS,
            env_tag: "tutorbot".into(),
        },
        aux,
    })
}

/// Monte-Carlo mean return and its standard error.
pub fn tutorbot_policy_value(
    env: &TutorBotEnv,
    behavior: &TutorBehavior,
    n_episodes: usize,
    seed: RngSeed,
) -> Result<(f64, f64), EnvError> {
    behavior.validate()?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for e in 0..n_episodes {
        let (traj, _) = env.episode(behavior, &mut seed.derive(&[tags::EPISODE, e as u64]).rng());
        let g = return_of(&traj, 1.0);
        sum += g;
        sum_sq += g * g;
    }
    let n = n_episodes as f64;
    let mean = sum / n;
    let var = if n_episodes > 1 { (sum_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
    Ok((mean, math::sqrt(var / n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;

    #[test]
    fn pretest_eight_lengths_are_two_to_five() {
        // 7 - 3.68 + l for l in [-1, 2] spans [2.32, 5.32].
        let lens: Vec<usize> = (0..=300)
            .map(|i| TutorBotEnv::session_length(8, -1.0 + 3.0 * i as f64 / 300.0))
            .collect();
        assert_eq!(*lens.iter().min().unwrap(), 2);
        assert_eq!(*lens.iter().max().unwrap(), 5);
        for l in 2..=5 {
            assert!(lens.contains(&l));
        }
    }

    #[test]
    fn uniform_rollout_contract() {
        let env = make_tutorbot_env(TutorBotConfig::default()).unwrap();
        let data = tutorbot_rollout(&env, &TutorBehavior::uniform(), 500, RngSeed(2)).unwrap();
        assert!(validate_dataset(&data.dataset).is_ok());
        for (traj, aux) in data.dataset.trajectories.iter().zip(&data.aux) {
            let len = traj.len();
            assert_eq!(aux.len(), len);
            for (t, (step, obs)) in traj.steps.iter().zip(aux).enumerate() {
                assert!((step.propensity - 1.0 / 3.0).abs() < 1e-15);
                assert_eq!(obs.pre_termination == 1, t + 1 == len);
                assert!(obs.anxiety <= 0.0 && obs.thinking >= 0.0);
                if t + 1 < len {
                    assert_eq!(step.reward, 0.0);
                }
                assert_eq!(step.state, env.cell(obs));
            }
        }
    }

    #[test]
    fn mean_length_matches_formula() {
        // l spans three whole rounding periods, so E[round(c + l)] = c + 0.5
        // exactly; the tolerance is ~5 standard errors of the sample mean.
        let env = make_tutorbot_env(TutorBotConfig::default()).unwrap();
        let data = tutorbot_rollout(&env, &TutorBehavior::uniform(), 20_000, RngSeed(8)).unwrap();
        let mean = data.dataset.n_steps() as f64 / 20_000.0;
        let expected = 7.0 - 0.46 * 4.0 + 0.5;
        assert!((mean - expected).abs() < 0.05, "{mean} vs {expected}");
    }

    #[test]
    fn same_seed_same_data() {
        let env = make_tutorbot_env(TutorBotConfig::default()).unwrap();
        let a = tutorbot_rollout(&env, &TutorBehavior::uniform(), 30, RngSeed(1)).unwrap();
        let b = tutorbot_rollout(&env, &TutorBehavior::uniform(), 30, RngSeed(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = TutorBotConfig { mu_improv: 1.0, mu_base: 1.0, ..Default::default() };
        assert!(make_tutorbot_env(bad).is_err());
        let env = make_tutorbot_env(TutorBotConfig::default()).unwrap();
        let wrong = TutorBehavior::Table(TabularPolicy::uniform(10, 3));
        assert!(tutorbot_rollout(&env, &wrong, 1, RngSeed(0)).is_err());
    }

    #[test]
    fn uniform_value_is_in_a_plausible_range() {
        let env = make_tutorbot_env(TutorBotConfig::default()).unwrap();
        let (mean, se) = tutorbot_policy_value(&env, &TutorBehavior::uniform(), 20_000, RngSeed(3)).unwrap();
        assert!(se < 0.02);
        assert!(mean > 1.0 && mean < 2.0, "{mean}");
    }
}
