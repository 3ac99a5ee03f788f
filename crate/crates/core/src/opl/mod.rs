//! Tabular offline policy learners: the AH family under selection.
//!
//! | id             | learner                                             |
//! |----------------|-----------------------------------------------------|
//! | `horizon`      | MLE model, `h`-step planning over observed actions  |
//! | `bc`           | behavior cloning with a safety threshold            |
//! | `bcq`          | batch-constrained Q iteration                        |
//! | `mbs-qi`       | BCQ with count-masked bootstrapping                  |
//! | `p-mdp`        | pessimistic ensemble of MLE models                   |
//! | `pois`         | importance-sampling policy gradient, ESS penalty     |
//! | `bc-pois`      | POIS initialized from BC                             |
//! | `bc-mini-pois` | BC-initialized POIS on mini-batches of trajectories  |
//!
//! Unvisited states always fall back to the uniform policy and are reported
//! in [`Fitted::diagnostics`].

mod bc;
mod bcq;
mod mle;
mod planner;
mod pmdp;
mod pois;

use alloc::vec::Vec;

use thiserror::Error;

use crate::ah::{AhSpec, Algorithm};
use crate::data::Dataset;
use crate::policy::{TabularPolicy, TabularQ};
use crate::rng::RngSeed;

pub use bc::fit_bc;
pub use bcq::{fit_bcq_tabular, fit_mbs_tabular, BcqConfig};
pub use mle::{fit_mle_mdp, MleModel};
pub use planner::plan_horizon_h;
pub use pmdp::{clamped_rewards, fit_pmdp_ensemble, hoeffding_penalty, pessimistic_rewards, PmdpConfig};
pub use pois::{fit_pois, PoisEstimator, PoisObjective, PoisParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OplError {
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(&'static str),
    #[error("planning horizon {h} outside 1..={max}")]
    Horizon { h: usize, max: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Something a learner had to work around.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnostic {
    /// No data at this state; the policy is uniform there.
    UnvisitedState(usize),
    /// Visited, but no action passed the learner's filter; uniform there.
    EmptyAdmissible(usize),
    /// BC safety threshold removed every action; plain frequencies used.
    ThresholdIgnored(usize),
    /// P-MDP member had no data for `(s, a)`; maximum penalty applied.
    UnobservedPair { member: usize, state: usize, action: usize },
    /// POIS mini-batches skipped because every weight was zero.
    SkippedBatches(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub policy: TabularPolicy,
    pub q: Option<TabularQ>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Trains the learner named by `spec` on `dataset`.
pub fn fit(spec: &AhSpec, dataset: &Dataset, seed: RngSeed) -> Result<Fitted, OplError> {
    if dataset.is_empty() {
        return Err(OplError::EmptyDataset);
    }
    match spec.algorithm {
        Algorithm::Horizon => {
            let model = fit_mle_mdp(dataset);
            plan_horizon_h(&model, spec.get_usize("h"), dataset.max_len())
        }
        Algorithm::Bc => fit_bc(dataset, spec.get("alpha")),
        Algorithm::Bcq => fit_bcq_tabular(
            dataset,
            BcqConfig { delta: spec.get("delta"), iterations: spec.get_usize("iterations"), count_beta: None },
        ),
        Algorithm::MbsQi => fit_mbs_tabular(
            dataset,
            spec.get("delta"),
            spec.get("beta") as u64,
            spec.get_usize("iterations"),
        ),
        Algorithm::Pmdp => fit_pmdp_ensemble(
            dataset,
            &PmdpConfig {
                n_ensembles: spec.get_usize("ensembles"),
                penalty_beta: spec.get("beta"),
                confidence_delta: spec.get("confidence"),
                temperature: spec.get("temperature"),
                n_iterations: spec.get_usize("iterations"),
                epochs: spec.get_usize("epochs"),
                clamp: (spec.get("clamp_lo"), spec.get("clamp_hi")),
            },
            seed,
        ),
        Algorithm::Pois | Algorithm::BcPois | Algorithm::BcMiniPois => {
            let params = PoisParams {
                safety_alpha: spec.get("alpha"),
                lambda_ess: spec.get("lambda"),
                learning_rate: spec.get("lr"),
                epochs: spec.get_usize("epochs"),
                minibatch_size: spec.get_usize("batch"),
                estimator: if spec.get("wis") == 1.0 { PoisEstimator::Wis } else { PoisEstimator::Is },
            };
            let init = match spec.algorithm {
                Algorithm::Pois => None,
                _ => Some(fit_bc(dataset, spec.get("alpha"))?.policy),
            };
            fit_pois(dataset, &params, seed, init.as_ref())
        }
    }
}

/// Uniform fallback for states with nothing to choose from.
pub(crate) fn uniform_row(probs: &mut [f64]) {
    let p = 1.0 / probs.len() as f64;
    probs.iter_mut().for_each(|x| *x = p);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{exact_policy_value, make_chain_env, rollout, uniform_behavior_policy, ChainConfig};
    use alloc::string::ToString;

    #[test]
    fn every_learner_is_pure_under_a_fixed_seed() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 80, RngSeed(1)).unwrap();
        let specs = [
            AhSpec::horizon(3),
            AhSpec::new(Algorithm::Bc, [("alpha".to_string(), 0.05)], None).unwrap(),
            AhSpec::new(Algorithm::Bcq, [("delta".to_string(), 0.1)], None).unwrap(),
            AhSpec::new(Algorithm::MbsQi, [("delta".to_string(), 0.1), ("beta".to_string(), 2.0)], None).unwrap(),
            AhSpec::new(
                Algorithm::Pmdp,
                [
                    ("ensembles".to_string(), 3.0),
                    ("beta".to_string(), 0.1),
                    ("temperature".to_string(), 0.1),
                    ("iterations".to_string(), 50.0),
                ],
                None,
            )
            .unwrap(),
            AhSpec::new(Algorithm::Pois, [("alpha".to_string(), 0.0), ("lambda".to_string(), 0.01)], None).unwrap(),
            AhSpec::new(Algorithm::BcPois, [("alpha".to_string(), 0.01), ("lambda".to_string(), 0.0)], None).unwrap(),
            AhSpec::new(Algorithm::BcMiniPois, [("alpha".to_string(), 0.0), ("lambda".to_string(), 0.05)], None)
                .unwrap(),
        ];
        for spec in &specs {
            let a = fit(spec, &ds, RngSeed(9)).unwrap();
            let b = fit(spec, &ds, RngSeed(9)).unwrap();
            assert_eq!(a, b, "{}", spec.label);
            let v = exact_policy_value(&env, &a.policy).unwrap();
            assert!(v.is_finite());
        }
    }

    #[test]
    fn planner_horizon_beyond_data_is_an_error() {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 5, RngSeed(1)).unwrap();
        assert_eq!(fit(&AhSpec::horizon(7), &ds, RngSeed(0)), Err(OplError::Horizon { h: 7, max: 6 }));
    }
}
