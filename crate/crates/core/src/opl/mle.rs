use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::envs::TabularEnv;

/// Count-based maximum-likelihood model of a dataset.
///
/// Rows of `transition` for pairs never observed are all zero and must not be
/// sampled from; check [`MleModel::observed`] first.
#[derive(Debug, Clone, PartialEq)]
pub struct MleModel {
    pub n_states: usize,
    pub n_actions: usize,
    /// `N(s, a)`.
    pub counts: Vec<u64>,
    /// `p(s' | s, a)` at `(s * n_actions + a) * n_states + s'`.
    pub transition: Vec<f64>,
    /// Mean reward observed after taking `a` in `s`.
    pub reward_sa: Vec<f64>,
    /// Mean reward observed on entering `s` (0 if never entered).
    pub reward_state: Vec<f64>,
    /// Number of trajectories starting in each state.
    pub initial_counts: Vec<u64>,
}

impl MleModel {
    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.n_actions + a]
    }

    pub fn observed(&self, s: usize, a: usize) -> bool {
        self.count(s, a) >= 1
    }

    pub fn state_count(&self, s: usize) -> u64 {
        self.counts[s * self.n_actions..(s + 1) * self.n_actions].iter().sum()
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward_sa[s * self.n_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// Empirical behavior probability `mu(a | s)`; 0 for unvisited states.
    pub fn behavior_prob(&self, s: usize, a: usize) -> f64 {
        let total = self.state_count(s);
        if total == 0 {
            0.0
        } else {
            self.count(s, a) as f64 / total as f64
        }
    }

    /// Empirical initial-state distribution.
    pub fn initial_dist(&self) -> Vec<f64> {
        let total: u64 = self.initial_counts.iter().sum();
        self.initial_counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
    }

    /// The model a dataset covering every pair in exact proportion would
    /// produce: one count per pair, the true transitions and expected rewards.
    pub fn from_env(env: &TabularEnv) -> MleModel {
        let (ns, na) = (env.n_states(), env.n_actions());
        let mut transition = Vec::with_capacity(ns * na * ns);
        let mut reward_sa = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                let row = env.transition_row(s, a);
                transition.extend_from_slice(row);
                reward_sa.push(row.iter().zip(env.rewards()).map(|(p, r)| p * r).sum());
            }
        }
        MleModel {
            n_states: ns,
            n_actions: na,
            counts: vec![1; ns * na],
            transition,
            reward_sa,
            reward_state: env.rewards().to_vec(),
            initial_counts: env.initial_dist().iter().map(|&p| u64::from(p > 0.0)).collect(),
        }
    }

    /// Expected next-state value `sum_s' p(s'|s,a) v(s')`.
    pub fn expected(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition_row(s, a).iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

/// Accumulates transition counts; shared by the MLE fit and the P-MDP ensemble.
#[derive(Debug, Clone)]
pub(crate) struct Counts {
    n_states: usize,
    n_actions: usize,
    sa: Vec<u64>,
    sas: Vec<u64>,
    reward_sum: Vec<f64>,
    enter_count: Vec<u64>,
    enter_reward: Vec<f64>,
    initial: Vec<u64>,
}

impl Counts {
    pub(crate) fn new(n_states: usize, n_actions: usize) -> Self {
        Counts {
            n_states,
            n_actions,
            sa: vec![0; n_states * n_actions],
            sas: vec![0; n_states * n_actions * n_states],
            reward_sum: vec![0.0; n_states * n_actions],
            enter_count: vec![0; n_states],
            enter_reward: vec![0.0; n_states],
            initial: vec![0; n_states],
        }
    }

    pub(crate) fn add_trajectory(&mut self, traj: &crate::data::Trajectory) {
        self.initial[traj.initial_state()] += 1;
        for step in &traj.steps {
            let sa = step.state * self.n_actions + step.action;
            self.sa[sa] += 1;
            self.sas[sa * self.n_states + step.next_state] += 1;
            self.reward_sum[sa] += step.reward;
            self.enter_count[step.next_state] += 1;
            self.enter_reward[step.next_state] += step.reward;
        }
    }

    pub(crate) fn model(&self) -> MleModel {
        let (ns, na) = (self.n_states, self.n_actions);
        let mut transition = vec![0.0; ns * na * ns];
        let mut reward_sa = vec![0.0; ns * na];
        for sa in 0..ns * na {
            let n = self.sa[sa];
            if n == 0 {
                continue;
            }
            reward_sa[sa] = self.reward_sum[sa] / n as f64;
            for s2 in 0..ns {
                transition[sa * ns + s2] = self.sas[sa * ns + s2] as f64 / n as f64;
            }
        }
        let reward_state = (0..ns)
            .map(|s| match self.enter_count[s] {
                0 => 0.0,
                n => self.enter_reward[s] / n as f64,
            })
            .collect();
        MleModel {
            n_states: ns,
            n_actions: na,
            counts: self.sa.clone(),
            transition,
            reward_sa,
            reward_state,
            initial_counts: self.initial.clone(),
        }
    }
}

pub fn fit_mle_mdp(dataset: &Dataset) -> MleModel {
    let mut counts = Counts::new(dataset.n_states, dataset.n_actions);
    for traj in &dataset.trajectories {
        counts.add_trajectory(traj);
    }
    counts.model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{
        all_up_actions, build_expected_composition_chain_dataset, make_chain_env, ChainConfig, DOWN, UP,
    };
    use crate::rng::RngSeed;

    fn all_up_only() -> Dataset {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = build_expected_composition_chain_dataset(&env, 200, RngSeed(0)).unwrap();
        let idx: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.trajectories[i].steps.iter().map(|s| s.action).eq(all_up_actions(6)))
            .take(1)
            .collect();
        ds.subset(&idx)
    }

    #[test]
    fn single_all_up_trajectory_model() {
        let m = fit_mle_mdp(&all_up_only());
        for s in 0..6 {
            assert!(m.observed(s, UP));
            assert!(!m.observed(s, DOWN));
            assert_eq!(m.transition_row(s, UP)[s + 1], 1.0);
            assert!(m.transition_row(s, DOWN).iter().all(|&p| p == 0.0));
        }
        assert_eq!(m.reward_state[6], 201.0);
        assert_eq!(m.reward(5, UP), 201.0);
        assert_eq!(m.state_count(6), 0);
        assert_eq!(m.initial_dist()[0], 1.0);
    }

    #[test]
    fn duplicating_data_leaves_model_unchanged() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = build_expected_composition_chain_dataset(&env, 60, RngSeed(2)).unwrap();
        let mut doubled = ds.clone();
        doubled.trajectories.extend(ds.trajectories.iter().cloned());
        let (a, b) = (fit_mle_mdp(&ds), fit_mle_mdp(&doubled));
        assert_eq!(a.transition, b.transition);
        for (x, y) in a.reward_sa.iter().zip(&b.reward_sa).chain(a.reward_state.iter().zip(&b.reward_state)) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        assert_eq!(a.initial_dist(), b.initial_dist());
        for (x, y) in a.counts.iter().zip(&b.counts) {
            assert_eq!(2 * x, *y);
        }
    }

    #[test]
    fn observed_rows_sum_to_one() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = build_expected_composition_chain_dataset(&env, 30, RngSeed(5)).unwrap();
        let m = fit_mle_mdp(&ds);
        for s in 0..m.n_states {
            for a in 0..m.n_actions {
                let sum: f64 = m.transition_row(s, a).iter().sum();
                if m.observed(s, a) {
                    assert!((sum - 1.0).abs() < 1e-9);
                } else {
                    assert_eq!(sum, 0.0);
                }
            }
        }
    }
}
