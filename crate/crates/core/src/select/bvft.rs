//! Batch value-function tournament over tabular Q candidates.
//!
//! For a resolution `eps` and candidates `Q_i`, `Q_j`, transitions are grouped
//! by the cell `(floor(Q_i(s,a)/eps), floor(Q_j(s,a)/eps))`. Inside each group
//! the backup targets `r + gamma * max_a' Q_j(s', a')` are replaced by their
//! mean, and `E(Q_i, Q_j)` is the root-mean-square gap between `Q_i(s,a)` and
//! that projected target over all transitions. A candidate's loss at `eps` is
//! its worst `E` against any candidate (itself included); the overall loss is
//! the smallest of those over the grid.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::SelectError;
use crate::data::Dataset;
use crate::math;
use crate::policy::TabularQ;

pub const DEFAULT_EPS_GRID: [f64; 7] = [0.1, 0.2, 0.5, 0.7, 1.0, 3.0, 10.0];

/// `E(Q_i, Q_j)` at one resolution.
pub fn bvft_pair_error(qi: &TabularQ, qj: &TabularQ, dataset: &Dataset, gamma: f64, eps: f64) -> f64 {
    let mut groups: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    let mut keyed = Vec::with_capacity(dataset.n_steps());
    for step in dataset.steps() {
        let (s, a) = (step.state, step.action);
        let key = (math::floor(qi.get(s, a) / eps) as i64, math::floor(qj.get(s, a) / eps) as i64);
        let target = step.reward + gamma * qj.max_value(step.next_state);
        let g = groups.entry(key).or_insert((0.0, 0));
        g.0 += target;
        g.1 += 1;
        keyed.push((key, qi.get(s, a)));
    }
    if keyed.is_empty() {
        return 0.0;
    }
    let sq: f64 = keyed
        .iter()
        .map(|(key, q)| {
            let (sum, n) = groups[key];
            let d = q - sum / n as f64;
            d * d
        })
        .sum();
    math::sqrt(sq / keyed.len() as f64)
}

/// Per-candidate loss at one resolution: `max_j E(Q_i, Q_j)`.
pub fn bvft_loss_at(qs: &[TabularQ], dataset: &Dataset, gamma: f64, eps: f64) -> Vec<f64> {
    qs.iter()
        .map(|qi| qs.iter().map(|qj| bvft_pair_error(qi, qj, dataset, gamma, eps)).fold(0.0, f64::max))
        .collect()
}

/// Per-candidate loss minimized over `eps_grid`.
pub fn bvft_loss(qs: &[TabularQ], dataset: &Dataset, gamma: f64, eps_grid: &[f64]) -> Result<Vec<f64>, SelectError> {
    if eps_grid.is_empty() {
        return Err(SelectError::InvalidParam("bvft needs a non-empty resolution grid"));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(SelectError::InvalidParam("bvft resolutions must be positive"));
    }
    let mut best = alloc::vec![f64::INFINITY; qs.len()];
    for &eps in eps_grid {
        for (b, l) in best.iter_mut().zip(bvft_loss_at(qs, dataset, gamma, eps)) {
            *b = b.min(l);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Step, Trajectory};
    use alloc::vec;

    /// Two states, deterministic: (s, a) -> a, reward 1 on entering state 1.
    fn data() -> Dataset {
        let mut trajectories = Vec::new();
        for s in 0..2 {
            for a in 0..2 {
                let r = if a == 1 { 1.0 } else { 0.0 };
                trajectories.push(Trajectory { steps: vec![Step { state: s, action: a, reward: r, next_state: a, propensity: 0.5 }] });
            }
        }
        Dataset { trajectories, gamma: 0.5, n_states: 2, n_actions: 2, env_tag: "t".into() }
    }

    fn q_star() -> TabularQ {
        // V*(s) = 2 everywhere: Q(s,0) = 0 + 0.5*2, Q(s,1) = 1 + 0.5*2.
        TabularQ::new(2, 2, vec![1.0, 2.0, 1.0, 2.0]).unwrap()
    }

    #[test]
    fn fixed_point_has_zero_loss() {
        let losses = bvft_loss(&[q_star(), q_star()], &data(), 0.5, &DEFAULT_EPS_GRID).unwrap();
        assert!(losses.iter().all(|&l| l < 1e-12), "{losses:?}");
    }

    #[test]
    fn shifted_candidate_loses() {
        let shifted = q_star().map(|_, _, v| v + 10.0);
        let losses = bvft_loss(&[q_star(), shifted], &data(), 0.5, &DEFAULT_EPS_GRID).unwrap();
        assert!(losses[0] < losses[1], "{losses:?}");
    }

    #[test]
    fn single_candidate_is_its_own_residual() {
        let q = q_star().map(|s, _, v| v + s as f64);
        let ds = data();
        let at = bvft_loss_at(core::slice::from_ref(&q), &ds, 0.5, 0.1);
        assert_eq!(at[0], bvft_pair_error(&q, &q, &ds, 0.5, 0.1));
        assert!(at[0] > 0.0);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(bvft_loss(&[q_star()], &data(), 0.5, &[]).is_err());
        assert!(bvft_loss(&[q_star()], &data(), 0.5, &[0.0]).is_err());
    }
}
