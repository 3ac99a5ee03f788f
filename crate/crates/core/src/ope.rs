//! Off-policy value estimators for a tabular policy on logged trajectories.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::data::{return_of, Dataset, Trajectory};
use crate::opl::fit_mle_mdp;
use crate::policy::{TabularPolicy, TabularQ};

pub const DEFAULT_CLIP: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpeError {
    /// Every importance weight is zero, so the self-normalized estimate is 0/0.
    #[error("estimate undefined: all importance weights are zero")]
    Undefined,
    #[error("policy is {policy_states}x{policy_actions} but data needs {data_states}x{data_actions}")]
    DimensionMismatch { policy_states: usize, policy_actions: usize, data_states: usize, data_actions: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),
    #[error("clip bound must be positive, got {0}")]
    BadClip(f64),
}

fn check(policy: &TabularPolicy, dataset: &Dataset) -> Result<(), OpeError> {
    if dataset.is_empty() {
        return Err(OpeError::EmptyDataset);
    }
    if policy.n_states() != dataset.n_states || policy.n_actions() != dataset.n_actions {
        return Err(OpeError::DimensionMismatch {
            policy_states: policy.n_states(),
            policy_actions: policy.n_actions(),
            data_states: dataset.n_states,
            data_actions: dataset.n_actions,
        });
    }
    Ok(())
}

/// `prod_t pi(a_t | s_t) / b_t`.
pub fn importance_weight(trajectory: &Trajectory, policy: &TabularPolicy) -> f64 {
    trajectory.steps.iter().map(|s| policy.prob(s.state, s.action) / s.propensity).product()
}

/// `(1/n) sum_i w_i G_i`.
pub fn is_estimate(policy: &TabularPolicy, dataset: &Dataset) -> Result<f64, OpeError> {
    clipped_is_estimate(policy, dataset, f64::INFINITY)
}

/// `(1/n) sum_i min(w_i, c) G_i`.
pub fn clipped_is_estimate(policy: &TabularPolicy, dataset: &Dataset, clip: f64) -> Result<f64, OpeError> {
    check(policy, dataset)?;
    if clip.is_nan() || clip <= 0.0 {
        return Err(OpeError::BadClip(clip));
    }
    let total: f64 = dataset
        .trajectories
        .iter()
        .map(|t| importance_weight(t, policy).min(clip) * return_of(t, dataset.gamma))
        .sum();
    Ok(total / dataset.len() as f64)
}

/// `sum_i w_i G_i / sum_i w_i`; [`OpeError::Undefined`] when every weight is 0.
///
/// Weights are normalized before they multiply the returns, so a dataset
/// with a single weighted trajectory gives back its return bit for bit.
pub fn wis_estimate(policy: &TabularPolicy, dataset: &Dataset) -> Result<f64, OpeError> {
    check(policy, dataset)?;
    let weights: Vec<f64> = dataset.trajectories.iter().map(|t| importance_weight(t, policy)).collect();
    let den: f64 = weights.iter().sum();
    if den == 0.0 {
        return Err(OpeError::Undefined);
    }
    Ok(dataset
        .trajectories
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w != 0.0)
        .map(|(t, &w)| (w / den) * return_of(t, dataset.gamma))
        .sum())
}

/// Consistent weighted per-decision IS.
#[derive(Debug, Clone, PartialEq)]
pub struct CwpdisEstimate {
    pub value: f64,
    /// Time steps skipped because every surviving trajectory had zero weight.
    pub undefined_steps: Vec<usize>,
}

/// `sum_t gamma^t (sum_i w_{i,t} r_{i,t}) / (sum_i w_{i,t})`, where `w_{i,t}`
/// is the weight of the first `t + 1` steps and the sums run over
/// trajectories still running at `t`. Steps with zero total weight add 0 and
/// are reported.
pub fn cwpdis_estimate(policy: &TabularPolicy, dataset: &Dataset) -> Result<CwpdisEstimate, OpeError> {
    check(policy, dataset)?;
    let horizon = dataset.max_len();
    let mut num = vec![0.0; horizon];
    let mut den = vec![0.0; horizon];
    for traj in &dataset.trajectories {
        let mut w = 1.0;
        for (t, step) in traj.steps.iter().enumerate() {
            w *= policy.prob(step.state, step.action) / step.propensity;
            num[t] += w * step.reward;
            den[t] += w;
        }
    }
    let mut value = 0.0;
    let mut discount = 1.0;
    let mut undefined_steps = Vec::new();
    for t in 0..horizon {
        if den[t] == 0.0 {
            undefined_steps.push(t);
        } else {
            value += discount * num[t] / den[t];
        }
        discount *= dataset.gamma;
    }
    Ok(CwpdisEstimate { value, undefined_steps })
}

/// Tabular fitted Q evaluation on the MLE model.
#[derive(Debug, Clone, PartialEq)]
pub struct FqeEstimate {
    pub value: f64,
    pub q: TabularQ,
}

/// Starts from `Q = 0` and applies
/// `Q(s,a) <- r(s,a) + gamma sum_s' p(s'|s,a) sum_a' pi(a'|s') Q(s',a')`
/// `iterations` times on observed pairs (unobserved pairs stay 0). The value
/// is `sum_s d0(s) sum_a pi(a|s) Q(s,a)` under the empirical start
/// distribution. With `iterations` equal to the episode length this is the
/// exact finite-horizon value of `policy` in the MLE model.
pub fn fqe_tabular(policy: &TabularPolicy, dataset: &Dataset, iterations: usize) -> Result<FqeEstimate, OpeError> {
    check(policy, dataset)?;
    let model = fit_mle_mdp(dataset);
    let (ns, na) = (model.n_states, model.n_actions);
    let state_value = |q: &[f64], s: usize| -> f64 { (0..na).map(|a| policy.prob(s, a) * q[s * na + a]).sum() };
    let mut q = vec![0.0; ns * na];
    for _ in 0..iterations {
        let v: Vec<f64> = (0..ns).map(|s| state_value(&q, s)).collect();
        for s in 0..ns {
            for a in (0..na).filter(|&a| model.observed(s, a)) {
                q[s * na + a] = model.reward(s, a) + dataset.gamma * model.expected(s, a, &v);
            }
        }
    }
    let value = model.initial_dist().iter().enumerate().map(|(s, d)| d * state_value(&q, s)).sum();
    Ok(FqeEstimate { value, q: TabularQ::from_values(ns, na, q) })
}

/// Estimator choice by identifier: `is`, `is-clip`, `wis`, `cwpdis`, `fqe`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Is,
    ClippedIs { clip: f64 },
    Wis,
    Cwpdis,
    /// `iterations: None` runs as many backups as the longest trajectory.
    Fqe { iterations: Option<usize> },
}

impl Estimator {
    pub fn parse(id: &str, clip: Option<f64>) -> Result<Self, OpeError> {
        let est = match id {
            "is" => Estimator::Is,
            "is-clip" => {
                let clip = clip.unwrap_or(DEFAULT_CLIP);
                if clip.is_nan() || clip <= 0.0 {
                    return Err(OpeError::BadClip(clip));
                }
                Estimator::ClippedIs { clip }
            }
            "wis" => Estimator::Wis,
            "cwpdis" => Estimator::Cwpdis,
            "fqe" => Estimator::Fqe { iterations: None },
            other => return Err(OpeError::UnknownEstimator(other.to_string())),
        };
        Ok(est)
    }

    pub fn id(&self) -> &'static str {
        match self {
            Estimator::Is => "is",
            Estimator::ClippedIs { .. } => "is-clip",
            Estimator::Wis => "wis",
            Estimator::Cwpdis => "cwpdis",
            Estimator::Fqe { .. } => "fqe",
        }
    }

    pub fn estimate(&self, policy: &TabularPolicy, dataset: &Dataset) -> Result<f64, OpeError> {
        match *self {
            Estimator::Is => is_estimate(policy, dataset),
            Estimator::ClippedIs { clip } => clipped_is_estimate(policy, dataset, clip),
            Estimator::Wis => wis_estimate(policy, dataset),
            Estimator::Cwpdis => cwpdis_estimate(policy, dataset).map(|e| e.value),
            Estimator::Fqe { iterations } => {
                fqe_tabular(policy, dataset, iterations.unwrap_or_else(|| dataset.max_len())).map(|e| e.value)
            }
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}
