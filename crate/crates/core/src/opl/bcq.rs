use alloc::vec;
use alloc::vec::Vec;

use super::{fit_mle_mdp, uniform_row, Diagnostic, Fitted, MleModel, OplError};
use crate::data::Dataset;
use crate::policy::{argmax, TabularPolicy, TabularQ};

const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcqConfig {
    /// Actions with empirical behavior probability at or below `delta` are
    /// not admissible.
    pub delta: f64,
    pub iterations: usize,
    /// Count threshold for bootstrapping; `None` is plain BCQ.
    pub count_beta: Option<u64>,
}

/// Batch-constrained Q iteration on the MLE model.
///
/// Only admissible pairs (`mu(a|s) > delta` and at least one visit) are ever
/// updated, and the bootstrap max runs over admissible actions at the next
/// state. With `count_beta = Some(b)` the bootstrap target `Q(s', a')` is
/// replaced by 0 wherever `N(s', a') < b`.
pub fn fit_bcq_tabular(dataset: &Dataset, config: BcqConfig) -> Result<Fitted, OplError> {
    if !(0.0..1.0).contains(&config.delta) {
        return Err(OplError::InvalidParam("bcq delta must lie in [0, 1)"));
    }
    if config.iterations == 0 {
        return Err(OplError::InvalidParam("bcq needs at least one iteration"));
    }
    let model = fit_mle_mdp(dataset);
    Ok(q_iteration(&model, dataset.gamma, config))
}

/// BCQ with count-masked bootstrapping; `count_beta = 1` is plain BCQ.
pub fn fit_mbs_tabular(dataset: &Dataset, delta: f64, count_beta: u64, iterations: usize) -> Result<Fitted, OplError> {
    fit_bcq_tabular(dataset, BcqConfig { delta, iterations, count_beta: Some(count_beta) })
}

fn q_iteration(model: &MleModel, gamma: f64, config: BcqConfig) -> Fitted {
    let (ns, na) = (model.n_states, model.n_actions);
    let admissible: Vec<bool> = (0..ns * na)
        .map(|i| {
            let (s, a) = (i / na, i % na);
            model.observed(s, a) && model.behavior_prob(s, a) > config.delta
        })
        .collect();
    let masked = |s: usize, a: usize| config.count_beta.is_some_and(|b| model.count(s, a) < b);

    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    for _ in 0..config.iterations {
        for s in 0..ns {
            v[s] = (0..na)
                .filter(|&a| admissible[s * na + a])
                .map(|a| if masked(s, a) { 0.0 } else { q[s * na + a] })
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
                .unwrap_or(0.0);
        }
        let mut change: f64 = 0.0;
        for i in (0..ns * na).filter(|&i| admissible[i]) {
            let (s, a) = (i / na, i % na);
            let new = model.reward(s, a) + gamma * model.expected(s, a, &v);
            change = change.max((new - q[i]).abs());
            q[i] = new;
        }
        if change < TOLERANCE {
            break;
        }
    }

    let mut probs = vec![0.0; ns * na];
    let mut diagnostics = Vec::new();
    for s in 0..ns {
        let row = &mut probs[s * na..(s + 1) * na];
        let allowed: Vec<usize> = (0..na).filter(|&a| admissible[s * na + a]).collect();
        if allowed.is_empty() {
            uniform_row(row);
            diagnostics.push(if model.state_count(s) == 0 {
                Diagnostic::UnvisitedState(s)
            } else {
                Diagnostic::EmptyAdmissible(s)
            });
            continue;
        }
        let values: Vec<f64> = allowed.iter().map(|&a| q[s * na + a]).collect();
        row[allowed[argmax(&values)]] = 1.0;
    }
    Fitted {
        policy: TabularPolicy::from_probs(ns, na, probs),
        q: Some(TabularQ::from_values(ns, na, q)),
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{
        build_expected_composition_chain_dataset, exact_policy_value, make_chain_env, rollout,
        uniform_behavior_policy, ChainConfig, UP,
    };
    use crate::rng::RngSeed;

    fn chain_data() -> Dataset {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        build_expected_composition_chain_dataset(&env, 200, RngSeed(11)).unwrap()
    }

    #[test]
    fn unconstrained_discounted_bcq_solves_the_chain() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = Dataset { gamma: 0.9, ..chain_data() };
        let fitted = fit_bcq_tabular(&ds, BcqConfig { delta: 0.0, iterations: 25, count_beta: None }).unwrap();
        for s in 0..6 {
            assert_eq!(fitted.policy.greedy_action(s), UP);
        }
        assert_eq!(exact_policy_value(&env, &fitted.policy).unwrap(), 201.0);
    }

    #[test]
    fn large_delta_empties_every_admissible_set() {
        let ds = chain_data();
        let fitted = fit_bcq_tabular(&ds, BcqConfig { delta: 0.9, iterations: 25, count_beta: None }).unwrap();
        assert!(fitted.q.unwrap().values().iter().all(|&x| x == 0.0));
        for s in 0..ds.n_states {
            assert_eq!(fitted.policy.row(s), &[0.5, 0.5]);
        }
        assert!(fitted.diagnostics.iter().any(|d| matches!(d, Diagnostic::EmptyAdmissible(_))));
    }

    #[test]
    fn mbs_with_count_one_equals_bcq() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 150, RngSeed(2)).unwrap();
        for delta in [0.0, 0.2, 0.45] {
            let bcq = fit_bcq_tabular(&ds, BcqConfig { delta, iterations: 25, count_beta: None }).unwrap();
            let mbs = fit_mbs_tabular(&ds, delta, 1, 25).unwrap();
            assert_eq!(bcq, mbs);
        }
    }

    #[test]
    fn mbs_with_huge_count_is_one_step_reward() {
        let ds = chain_data();
        let fitted = fit_mbs_tabular(&ds, 0.0, u64::MAX, 25).unwrap();
        let model = fit_mle_mdp(&ds);
        let q = fitted.q.unwrap();
        for s in 0..ds.n_states {
            for a in 0..2 {
                let want = if model.observed(s, a) { model.reward(s, a) } else { 0.0 };
                assert_eq!(q.get(s, a), want);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let ds = chain_data();
        assert!(fit_bcq_tabular(&ds, BcqConfig { delta: 1.0, iterations: 5, count_beta: None }).is_err());
        assert!(fit_bcq_tabular(&ds, BcqConfig { delta: 0.1, iterations: 0, count_beta: None }).is_err());
    }
}
