use alloc::vec;
use alloc::vec::Vec;

use super::{uniform_row, Diagnostic, Fitted, MleModel, OplError};
use crate::policy::{TabularPolicy, TabularQ};

/// Greedy policy from `h` backward Bellman-optimality steps on the MLE model,
/// maximizing only over actions that appear in the data. `max_horizon` is the
/// episode length of the data; `h` must lie in `1..=max_horizon`.
///
/// The policy is stationary, so an action that reaches a reward sooner can
/// tie with one that detours first. Ties in `Q_h` are broken by `Q_{h-1}`,
/// then `Q_{h-2}` and so on, and finally by the lowest action index.
pub fn plan_horizon_h(model: &MleModel, h: usize, max_horizon: usize) -> Result<Fitted, OplError> {
    if h == 0 || h > max_horizon {
        return Err(OplError::Horizon { h, max: max_horizon });
    }
    let (ns, na) = (model.n_states, model.n_actions);
    // stages[k] = Q with k + 1 steps to go
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(h);
    let mut v = vec![0.0; ns];
    for _ in 0..h {
        let mut q = vec![0.0; ns * na];
        for s in 0..ns {
            for a in (0..na).filter(|&a| model.observed(s, a)) {
                q[s * na + a] = model.reward(s, a) + model.expected(s, a, &v);
            }
        }
        v = (0..ns)
            .map(|s| (0..na).filter(|&a| model.observed(s, a)).map(|a| q[s * na + a]).fold(None, max_opt).unwrap_or(0.0))
            .collect();
        stages.push(q);
    }

    let mut probs = vec![0.0; ns * na];
    let mut diagnostics = Vec::new();
    for s in 0..ns {
        let row = &mut probs[s * na..(s + 1) * na];
        match best_observed(model, &stages, s) {
            Some(a) => row[a] = 1.0,
            None => {
                uniform_row(row);
                diagnostics.push(Diagnostic::UnvisitedState(s));
            }
        }
    }
    let q = stages.pop().expect("h >= 1");
    Ok(Fitted {
        policy: TabularPolicy::from_probs(ns, na, probs),
        q: Some(TabularQ::from_values(ns, na, q)),
        diagnostics,
    })
}

fn max_opt(m: Option<f64>, x: f64) -> Option<f64> {
    Some(m.map_or(x, |m| m.max(x)))
}

/// Best observed action comparing `(Q_h, Q_{h-1}, .., Q_1)` lexicographically.
fn best_observed(model: &MleModel, stages: &[Vec<f64>], s: usize) -> Option<usize> {
    let na = model.n_actions;
    let better = |a: usize, b: usize| {
        for q in stages.iter().rev() {
            let (x, y) = (q[s * na + a], q[s * na + b]);
            if x != y {
                return x > y;
            }
        }
        false
    };
    let mut best: Option<usize> = None;
    for a in (0..na).filter(|&a| model.observed(s, a)) {
        if best.is_none_or(|b| better(a, b)) {
            best = Some(a);
        }
    }
    best
}
