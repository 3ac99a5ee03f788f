use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::mle::Counts;
use super::{fit_mle_mdp, uniform_row, Diagnostic, Fitted, MleModel, OplError};
use crate::data::Dataset;
use crate::math;
use crate::policy::{softmax_into, TabularPolicy, TabularQ};
use crate::rng::RngSeed;

const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PmdpConfig {
    pub n_ensembles: usize,
    /// Scale of the count-based reward penalty; 0 disables it.
    pub penalty_beta: f64,
    pub confidence_delta: f64,
    pub temperature: f64,
    pub n_iterations: usize,
    /// Passes over the data; each pass reshuffles trajectories into shards.
    pub epochs: usize,
    /// Penalized rewards are clamped into `[lo, hi]`.
    pub clamp: (f64, f64),
}

impl PmdpConfig {
    fn validate(&self) -> Result<(), OplError> {
        if self.n_ensembles == 0 {
            return Err(OplError::InvalidParam("p-mdp needs at least one ensemble member"));
        }
        if !(self.penalty_beta >= 0.0 && self.penalty_beta.is_finite()) {
            return Err(OplError::InvalidParam("p-mdp beta must be finite and >= 0"));
        }
        if !(self.confidence_delta > 0.0 && self.confidence_delta < 1.0) {
            return Err(OplError::InvalidParam("p-mdp confidence must lie in (0, 1)"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(OplError::InvalidParam("p-mdp temperature must be positive"));
        }
        if self.n_iterations == 0 || self.epochs == 0 {
            return Err(OplError::InvalidParam("p-mdp iterations and epochs must be positive"));
        }
        let (lo, hi) = self.clamp;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(OplError::InvalidParam("p-mdp clamp needs finite lo < hi"));
        }
        Ok(())
    }
}

/// `beta * sqrt(2 ln(1/delta) / n)`; infinite for `n = 0` unless `beta = 0`.
pub fn hoeffding_penalty(beta: f64, confidence_delta: f64, n: u64) -> f64 {
    if beta == 0.0 {
        0.0
    } else if n == 0 {
        f64::INFINITY
    } else {
        beta * math::sqrt(2.0 * math::ln(1.0 / confidence_delta) / n as f64)
    }
}

/// Per-pair `clamp(r(s,a) - penalty, lo, hi)`, unobserved rewards taken as 0.
pub fn pessimistic_rewards(model: &MleModel, beta: f64, confidence_delta: f64, clamp: (f64, f64)) -> Vec<f64> {
    (0..model.n_states * model.n_actions)
        .map(|i| {
            let penalty = hoeffding_penalty(beta, confidence_delta, model.counts[i]);
            (model.reward_sa[i] - penalty).clamp(clamp.0, clamp.1)
        })
        .collect()
}

/// Per-pair `clamp(r(s,a), lo, hi)` with no penalty.
pub fn clamped_rewards(model: &MleModel, clamp: (f64, f64)) -> Vec<f64> {
    model.reward_sa.iter().map(|r| r.clamp(clamp.0, clamp.1)).collect()
}

/// Pessimistic MDP ensemble.
///
/// Each epoch shuffles the trajectories and deals them round-robin to the
/// members, so every member accumulates its own MLE model. Value iteration
/// then backs up each pair through one uniformly sampled member, using that
/// member's penalized reward and transitions; a member that never saw the
/// pair contributes its penalized reward with no future. The returned policy
/// is `softmax(Q / temperature)`.
pub fn fit_pmdp_ensemble(dataset: &Dataset, config: &PmdpConfig, seed: RngSeed) -> Result<Fitted, OplError> {
    config.validate()?;
    let (ns, na) = (dataset.n_states, dataset.n_actions);
    let m = config.n_ensembles;

    let mut counts = vec![Counts::new(ns, na); m];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut seed.derive(&[1, epoch as u64]).rng());
        for (j, &i) in order.iter().enumerate() {
            counts[j % m].add_trajectory(&dataset.trajectories[i]);
        }
    }
    let members: Vec<MleModel> = counts.iter().map(Counts::model).collect();
    let rewards: Vec<Vec<f64>> = members
        .iter()
        .map(|model| pessimistic_rewards(model, config.penalty_beta, config.confidence_delta, config.clamp))
        .collect();

    let mut diagnostics = Vec::new();
    for (k, model) in members.iter().enumerate() {
        for i in (0..ns * na).filter(|&i| model.counts[i] == 0) {
            diagnostics.push(Diagnostic::UnobservedPair { member: k, state: i / na, action: i % na });
        }
    }

    let mut rng = seed.derive(&[2]).rng();
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    for _ in 0..config.n_iterations {
        for s in 0..ns {
            v[s] = q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let mut change: f64 = 0.0;
        for i in 0..ns * na {
            let k = rng.random_range(0..m);
            let model = &members[k];
            let future = if model.counts[i] == 0 { 0.0 } else { model.expected(i / na, i % na, &v) };
            let new = rewards[k][i] + dataset.gamma * future;
            change = change.max((new - q[i]).abs());
            q[i] = new;
        }
        if change < TOLERANCE {
            break;
        }
    }

    let full = fit_mle_mdp(dataset);
    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        let row = &mut probs[s * na..(s + 1) * na];
        if full.state_count(s) == 0 {
            uniform_row(row);
            diagnostics.push(Diagnostic::UnvisitedState(s));
        } else {
            softmax_into(&q[s * na..(s + 1) * na], config.temperature, row);
        }
    }
    Ok(Fitted {
        policy: TabularPolicy::from_probs(ns, na, probs),
        q: Some(TabularQ::from_values(ns, na, q)),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_random_mdp, rollout, uniform_behavior_policy};

    fn config() -> PmdpConfig {
        PmdpConfig {
            n_ensembles: 3,
            penalty_beta: 0.5,
            confidence_delta: 0.1,
            temperature: 0.1,
            n_iterations: 200,
            epochs: 1,
            clamp: (-1.0, 1.0),
        }
    }

    #[test]
    fn penalty_edge_cases() {
        assert_eq!(hoeffding_penalty(0.0, 0.1, 0), 0.0);
        assert_eq!(hoeffding_penalty(1.0, 0.1, 0), f64::INFINITY);
        let want = 2.0 * (2.0 * (10.0f64).ln() / 8.0).sqrt();
        assert!((hoeffding_penalty(2.0, 0.1, 8) - want).abs() < 1e-15);
    }

    #[test]
    fn penalized_rewards_never_exceed_clamped_mle() {
        let env = make_random_mdp(6, 3, 4, 0.5, RngSeed(3)).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 40, RngSeed(4)).unwrap();
        let model = fit_mle_mdp(&ds);
        let clamped = clamped_rewards(&model, (-1.0, 1.0));
        assert_eq!(pessimistic_rewards(&model, 0.0, 0.1, (-1.0, 1.0)), clamped);
        for beta in [0.01, 0.3, 5.0] {
            for (i, (&p, &c)) in pessimistic_rewards(&model, beta, 0.1, (-1.0, 1.0)).iter().zip(&clamped).enumerate() {
                assert!(p <= c);
                if model.counts[i] == 0 {
                    assert_eq!(p, -1.0);
                }
            }
        }
    }

    #[test]
    fn members_see_every_trajectory_once_per_epoch() {
        let env = make_random_mdp(5, 2, 3, 0.5, RngSeed(1)).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 31, RngSeed(2)).unwrap();
        let fitted = fit_pmdp_ensemble(&ds, &config(), RngSeed(0)).unwrap();
        assert_eq!(fitted.policy.n_states(), 5);
        for s in 0..5 {
            let sum: f64 = fitted.policy.row(s).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn more_members_than_trajectories_leaves_empty_members() {
        let env = make_random_mdp(4, 2, 2, 0.5, RngSeed(1)).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 2, RngSeed(2)).unwrap();
        let fitted = fit_pmdp_ensemble(&ds, &PmdpConfig { n_ensembles: 5, ..config() }, RngSeed(0)).unwrap();
        let empty_members = (0..5)
            .filter(|&k| {
                (0..8).all(|i| {
                    fitted.diagnostics.contains(&Diagnostic::UnobservedPair { member: k, state: i / 2, action: i % 2 })
                })
            })
            .count();
        assert_eq!(empty_members, 3);
    }

    #[test]
    fn rejects_bad_config() {
        let env = make_random_mdp(4, 2, 2, 0.5, RngSeed(1)).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 4, RngSeed(2)).unwrap();
        for bad in [
            PmdpConfig { n_ensembles: 0, ..config() },
            PmdpConfig { temperature: 0.0, ..config() },
            PmdpConfig { confidence_delta: 1.0, ..config() },
            PmdpConfig { clamp: (1.0, -1.0), ..config() },
        ] {
            assert!(fit_pmdp_ensemble(&ds, &bad, RngSeed(0)).is_err());
        }
    }
}
