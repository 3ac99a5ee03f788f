use alloc::vec;
use alloc::vec::Vec;

use super::{fit_mle_mdp, uniform_row, Diagnostic, Fitted, OplError};
use crate::data::Dataset;
use crate::policy::TabularPolicy;

/// Per-state action frequencies with entries below `alpha` zeroed and the row
/// renormalized. If `alpha` would remove every action in a state, the plain
/// frequencies are kept and the state is flagged.
pub fn fit_bc(dataset: &Dataset, alpha: f64) -> Result<Fitted, OplError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(OplError::InvalidParam("bc alpha must lie in [0, 1)"));
    }
    let model = fit_mle_mdp(dataset);
    let (ns, na) = (model.n_states, model.n_actions);
    let mut probs = vec![0.0; ns * na];
    let mut diagnostics = Vec::new();
    for s in 0..ns {
        let row = &mut probs[s * na..(s + 1) * na];
        if model.state_count(s) == 0 {
            uniform_row(row);
            diagnostics.push(Diagnostic::UnvisitedState(s));
            continue;
        }
        for (a, p) in row.iter_mut().enumerate() {
            *p = model.behavior_prob(s, a);
        }
        let kept: f64 = row.iter().filter(|&&p| p >= alpha).sum();
        if kept == 0.0 {
            diagnostics.push(Diagnostic::ThresholdIgnored(s));
            continue;
        }
        for p in row.iter_mut() {
            *p = if *p >= alpha { *p / kept } else { 0.0 };
        }
    }
    Ok(Fitted { policy: TabularPolicy::from_probs(ns, na, probs), q: None, diagnostics })
}
