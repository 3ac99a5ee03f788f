use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{fit_mle_mdp, uniform_row, Diagnostic, Fitted, OplError};
use crate::data::{return_of, Dataset};
use crate::math;
use crate::policy::{softmax_into, TabularPolicy};
use crate::rng::RngSeed;

const LOGIT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoisEstimator {
    /// `(1/n) sum w_i G_i`
    Is,
    /// `sum w_i G_i / sum w_i`
    Wis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoisParams {
    /// Behavior actions with empirical frequency below this are treated as
    /// unsupported: their trajectories get zero weight and the remaining
    /// propensities are renormalized.
    pub safety_alpha: f64,
    /// Weight of the `1 / ESS` penalty.
    pub lambda_ess: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means one full-batch step per epoch.
    pub minibatch_size: usize,
    pub estimator: PoisEstimator,
}

/// Penalized off-policy objective over softmax logits `theta` (row-major
/// `n_states x n_actions`):
///
/// `J(theta) = V(theta) - lambda * sum w_i^2 / (sum w_i)^2`
///
/// where `V` is the IS or WIS estimate on the chosen trajectories.
#[derive(Debug, Clone)]
pub struct PoisObjective {
    n_states: usize,
    n_actions: usize,
    estimator: PoisEstimator,
    lambda: f64,
    trajectories: Vec<Logged>,
}

#[derive(Debug, Clone)]
struct Logged {
    pairs: Vec<(usize, usize)>,
    /// `None` when some action falls below the safety threshold.
    behavior: Option<Vec<f64>>,
    ret: f64,
}

impl PoisObjective {
    pub fn new(dataset: &Dataset, safety_alpha: f64, estimator: PoisEstimator, lambda: f64) -> Self {
        let model = fit_mle_mdp(dataset);
        let na = dataset.n_actions;
        let kept_mass: Vec<f64> = (0..dataset.n_states)
            .map(|s| (0..na).map(|a| model.behavior_prob(s, a)).filter(|&p| p >= safety_alpha).sum())
            .collect();
        let trajectories = dataset
            .trajectories
            .iter()
            .map(|traj| {
                let behavior = traj
                    .steps
                    .iter()
                    .map(|st| {
                        if safety_alpha == 0.0 {
                            Some(st.propensity)
                        } else if model.behavior_prob(st.state, st.action) >= safety_alpha {
                            Some(st.propensity / kept_mass[st.state])
                        } else {
                            None
                        }
                    })
                    .collect();
                Logged {
                    pairs: traj.steps.iter().map(|st| (st.state, st.action)).collect(),
                    behavior,
                    ret: return_of(traj, dataset.gamma),
                }
            })
            .collect();
        PoisObjective { n_states: dataset.n_states, n_actions: na, estimator, lambda, trajectories }
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    fn policy(&self, theta: &[f64]) -> Vec<f64> {
        let na = self.n_actions;
        let mut probs = vec![0.0; theta.len()];
        for s in 0..self.n_states {
            softmax_into(&theta[s * na..(s + 1) * na], 1.0, &mut probs[s * na..(s + 1) * na]);
        }
        probs
    }

    fn weight(&self, probs: &[f64], i: usize) -> f64 {
        let t = &self.trajectories[i];
        match &t.behavior {
            None => 0.0,
            Some(b) => t.pairs.iter().zip(b).map(|(&(s, a), &b)| probs[s * self.n_actions + a] / b).product(),
        }
    }

    /// Objective on the trajectories in `batch`; `None` if every weight is 0.
    pub fn value(&self, theta: &[f64], batch: &[usize]) -> Option<f64> {
        let probs = self.policy(theta);
        let w: Vec<f64> = batch.iter().map(|&i| self.weight(&probs, i)).collect();
        let (a, b, c) = sums(&w, batch.iter().map(|&i| self.trajectories[i].ret));
        if b == 0.0 {
            return None;
        }
        let v = match self.estimator {
            PoisEstimator::Is => a / batch.len() as f64,
            PoisEstimator::Wis => a / b,
        };
        Some(v - self.lambda * c / (b * b))
    }

    /// Effective sample size `(sum w)^2 / sum w^2`; `None` if every weight is 0.
    pub fn ess(&self, theta: &[f64], batch: &[usize]) -> Option<f64> {
        let probs = self.policy(theta);
        let w: Vec<f64> = batch.iter().map(|&i| self.weight(&probs, i)).collect();
        let (_, b, c) = sums(&w, core::iter::repeat(0.0));
        (b > 0.0).then(|| b * b / c)
    }

    /// Objective and its gradient with respect to `theta`.
    pub fn value_and_gradient(&self, theta: &[f64], batch: &[usize]) -> Option<(f64, Vec<f64>)> {
        let na = self.n_actions;
        let probs = self.policy(theta);
        let w: Vec<f64> = batch.iter().map(|&i| self.weight(&probs, i)).collect();
        let (a, b, c) = sums(&w, batch.iter().map(|&i| self.trajectories[i].ret));
        if b == 0.0 {
            return None;
        }
        let n = batch.len() as f64;
        let value = match self.estimator {
            PoisEstimator::Is => a / n,
            PoisEstimator::Wis => a / b,
        } - self.lambda * c / (b * b);

        let mut grad = vec![0.0; theta.len()];
        for (&i, &wi) in batch.iter().zip(&w) {
            if wi == 0.0 {
                continue;
            }
            let g = self.trajectories[i].ret;
            let dv = match self.estimator {
                PoisEstimator::Is => g / n,
                PoisEstimator::Wis => g / b - a / (b * b),
            };
            let dpenalty = 2.0 * wi / (b * b) - 2.0 * c / (b * b * b);
            let coef = wi * (dv - self.lambda * dpenalty);
            // d log w_i / d theta[s, a] = sum_t 1{s_t = s} (1{a_t = a} - pi(a | s))
            for &(s, act) in &self.trajectories[i].pairs {
                grad[s * na + act] += coef;
                for x in 0..na {
                    grad[s * na + x] -= coef * probs[s * na + x];
                }
            }
        }
        Some((value, grad))
    }
}

fn sums(w: &[f64], returns: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for (&wi, g) in w.iter().zip(returns) {
        a += wi * g;
        b += wi;
        c += wi * wi;
    }
    (a, b, c)
}

/// Gradient ascent on [`PoisObjective`] over softmax logits. `init` seeds the
/// logits with `log(max(p, 1e-6))`; without it they start at 0.
pub fn fit_pois(
    dataset: &Dataset,
    params: &PoisParams,
    seed: RngSeed,
    init: Option<&TabularPolicy>,
) -> Result<Fitted, OplError> {
    if !(0.0..1.0).contains(&params.safety_alpha) {
        return Err(OplError::InvalidParam("pois alpha must lie in [0, 1)"));
    }
    if !(params.lambda_ess >= 0.0 && params.lambda_ess.is_finite()) {
        return Err(OplError::InvalidParam("pois lambda must be finite and >= 0"));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(OplError::InvalidParam("pois learning rate must be positive"));
    }
    if params.epochs == 0 {
        return Err(OplError::InvalidParam("pois needs at least one epoch"));
    }
    let (ns, na) = (dataset.n_states, dataset.n_actions);
    let objective = PoisObjective::new(dataset, params.safety_alpha, params.estimator, params.lambda_ess);
    let mut theta = match init {
        Some(p) => p.probs().iter().map(|&x| math::ln(x.max(LOGIT_FLOOR))).collect(),
        None => vec![0.0; ns * na],
    };

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut skipped = 0;
    for epoch in 0..params.epochs {
        let size = if params.minibatch_size == 0 {
            order.len()
        } else {
            order.shuffle(&mut seed.derive(&[epoch as u64]).rng());
            params.minibatch_size
        };
        for batch in order.chunks(size) {
            match objective.value_and_gradient(&theta, batch) {
                Some((_, grad)) => {
                    for (t, g) in theta.iter_mut().zip(&grad) {
                        *t += params.learning_rate * g;
                    }
                }
                None => skipped += 1,
            }
        }
    }

    let visits = fit_mle_mdp(dataset);
    let mut probs = vec![0.0; ns * na];
    let mut diagnostics = Vec::new();
    for s in 0..ns {
        let row = &mut probs[s * na..(s + 1) * na];
        if visits.state_count(s) == 0 && init.is_none() {
            uniform_row(row);
            diagnostics.push(Diagnostic::UnvisitedState(s));
        } else {
            softmax_into(&theta[s * na..(s + 1) * na], 1.0, row);
        }
    }
    if skipped > 0 {
        diagnostics.push(Diagnostic::SkippedBatches(skipped));
    }
    Ok(Fitted { policy: TabularPolicy::from_probs(ns, na, probs), q: None, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_random_mdp, rollout, uniform_behavior_policy, TabularEnv};
    use crate::rng::RngSeed;
    use rand::Rng;

    fn setup() -> (TabularEnv, Dataset) {
        let env = make_random_mdp(5, 3, 3, 0.6, RngSeed(7)).unwrap();
        let ds = rollout(&env, &uniform_behavior_policy(&env), 60, RngSeed(8)).unwrap();
        (env, ds)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, ds) = setup();
        let mut rng = RngSeed(1).rng();
        let theta: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch: Vec<usize> = (0..ds.len()).collect();
        for est in [PoisEstimator::Is, PoisEstimator::Wis] {
            for (alpha, lambda) in [(0.0, 0.0), (0.0, 0.7), (0.2, 0.3)] {
                let obj = PoisObjective::new(&ds, alpha, est, lambda);
                let (_, grad) = obj.value_and_gradient(&theta, &batch).unwrap();
                for k in 0..theta.len() {
                    let h = 1e-6;
                    let (mut up, mut down) = (theta.clone(), theta.clone());
                    up[k] += h;
                    down[k] -= h;
                    let fd = (obj.value(&up, &batch).unwrap() - obj.value(&down, &batch).unwrap()) / (2.0 * h);
                    assert!((fd - grad[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "{est:?} k={k}: {fd} vs {}", grad[k]);
                }
            }
        }
    }

    #[test]
    fn behavior_logits_give_unit_weights() {
        let (_, ds) = setup();
        let obj = PoisObjective::new(&ds, 0.0, PoisEstimator::Is, 0.0);
        let batch: Vec<usize> = (0..ds.len()).collect();
        assert!((obj.ess(&[0.0; 15], &batch).unwrap() - ds.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn ascent_improves_the_objective() {
        let (_, ds) = setup();
        let params = PoisParams {
            safety_alpha: 0.0,
            lambda_ess: 0.0,
            learning_rate: 0.1,
            epochs: 30,
            minibatch_size: 0,
            estimator: PoisEstimator::Wis,
        };
        let fitted = fit_pois(&ds, &params, RngSeed(0), None).unwrap();
        let obj = PoisObjective::new(&ds, 0.0, PoisEstimator::Wis, 0.0);
        let batch: Vec<usize> = (0..ds.len()).collect();
        let logits: Vec<f64> = fitted.policy.probs().iter().map(|p| p.ln()).collect();
        assert!(obj.value(&logits, &batch).unwrap() > obj.value(&[0.0; 15], &batch).unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        let (_, ds) = setup();
        let ok = PoisParams {
            safety_alpha: 0.0,
            lambda_ess: 0.0,
            learning_rate: 0.1,
            epochs: 1,
            minibatch_size: 0,
            estimator: PoisEstimator::Is,
        };
        for bad in [
            PoisParams { safety_alpha: 1.0, ..ok.clone() },
            PoisParams { lambda_ess: -1.0, ..ok.clone() },
            PoisParams { learning_rate: 0.0, ..ok.clone() },
            PoisParams { epochs: 0, ..ok.clone() },
        ] {
            assert!(fit_pois(&ds, &bad, RngSeed(0), None).is_err());
        }
    }
}
