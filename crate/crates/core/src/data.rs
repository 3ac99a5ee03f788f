//! Logged trajectory data.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("dataset has no trajectories")]
    EmptyDataset,
    #[error("invalid step: {0}")]
    InvalidStep(Violation),
    #[error("dataset failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

/// One logged transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// Probability the logging policy gave to `action` in `state`.
    pub propensity: f64,
}

impl Step {
    pub fn new(
        state: usize,
        action: usize,
        reward: f64,
        next_state: usize,
        propensity: f64,
    ) -> Result<Self, DataError> {
        let step = Step { state, action, reward, next_state, propensity };
        if let Some(kind) = step.local_violation() {
            return Err(DataError::InvalidStep(Violation { trajectory: 0, step: Some(0), kind }));
        }
        Ok(step)
    }

    fn local_violation(&self) -> Option<ViolationKind> {
        if !(self.propensity > 0.0 && self.propensity <= 1.0) {
            return Some(ViolationKind::Propensity(self.propensity));
        }
        if !self.reward.is_finite() {
            return Some(ViolationKind::NonFiniteReward(self.reward));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Builds a trajectory, checking step invariants and state chaining.
    pub fn new(steps: Vec<Step>) -> Result<Self, DataError> {
        if steps.is_empty() {
            return Err(DataError::EmptyTrajectory);
        }
        let traj = Trajectory { steps };
        let mut violations = Vec::new();
        traj.collect_violations(0, usize::MAX, usize::MAX, &mut violations);
        match violations.into_iter().next() {
            Some(v) => Err(DataError::InvalidStep(v)),
            None => Ok(traj),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn initial_state(&self) -> usize {
        self.steps[0].state
    }

    fn collect_violations(
        &self,
        index: usize,
        n_states: usize,
        n_actions: usize,
        out: &mut Vec<Violation>,
    ) {
        if self.steps.is_empty() {
            out.push(Violation { trajectory: index, step: None, kind: ViolationKind::EmptyTrajectory });
            return;
        }
        for (t, step) in self.steps.iter().enumerate() {
            let at = |kind| Violation { trajectory: index, step: Some(t), kind };
            if let Some(kind) = step.local_violation() {
                out.push(at(kind));
            }
            if step.state >= n_states {
                out.push(at(ViolationKind::StateOutOfRange(step.state)));
            }
            if step.next_state >= n_states {
                out.push(at(ViolationKind::StateOutOfRange(step.next_state)));
            }
            if step.action >= n_actions {
                out.push(at(ViolationKind::ActionOutOfRange(step.action)));
            }
            if let Some(next) = self.steps.get(t + 1) {
                if next.state != step.next_state {
                    out.push(at(ViolationKind::BrokenChain {
                        next_state: step.next_state,
                        following_state: next.state,
                    }));
                }
            }
        }
    }
}

/// Discounted return `sum_t gamma^t r_t`, with `t` starting at 0.
pub fn return_of(trajectory: &Trajectory, gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for step in &trajectory.steps {
        total += discount * step.reward;
        discount *= gamma;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub gamma: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub env_tag: String,
}

impl Dataset {
    /// Builds a dataset and rejects it if any invariant is violated.
    pub fn new(
        trajectories: Vec<Trajectory>,
        gamma: f64,
        n_states: usize,
        n_actions: usize,
        env_tag: impl Into<String>,
    ) -> Result<Self, DataError> {
        let ds = Dataset { trajectories, gamma, n_states, n_actions, env_tag: env_tag.into() };
        let report = validate_dataset(&ds);
        if report.violations.is_empty() {
            Ok(ds)
        } else {
            Err(DataError::Invalid(report.violations))
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Dataset restricted to the trajectories at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            trajectories: indices.iter().map(|&i| self.trajectories[i].clone()).collect(),
            gamma: self.gamma,
            n_states: self.n_states,
            n_actions: self.n_actions,
            env_tag: self.env_tag.clone(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn max_len(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).max().unwrap_or(0)
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.trajectories.iter().flat_map(|t| t.steps.iter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    EmptyDataset,
    EmptyTrajectory,
    Gamma(f64),
    Propensity(f64),
    NonFiniteReward(f64),
    StateOutOfRange(usize),
    ActionOutOfRange(usize),
    BrokenChain { next_state: usize, following_state: usize },
}

/// A violated invariant, located by trajectory and (when relevant) step.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub trajectory: usize,
    pub step: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loc = |f: &mut fmt::Formatter<'_>| match self.step {
            Some(t) => write!(f, "trajectory {} step {}", self.trajectory, t),
            None => write!(f, "trajectory {}", self.trajectory),
        };
        match &self.kind {
            ViolationKind::EmptyDataset => write!(f, "dataset is empty"),
            ViolationKind::Gamma(g) => write!(f, "discount {g} outside (0, 1]"),
            ViolationKind::EmptyTrajectory => {
                loc(f)?;
                write!(f, ": no steps")
            }
            ViolationKind::Propensity(p) => {
                loc(f)?;
                write!(f, ": propensity {p} outside (0, 1]")
            }
            ViolationKind::NonFiniteReward(r) => {
                loc(f)?;
                write!(f, ": non-finite reward {r}")
            }
            ViolationKind::StateOutOfRange(s) => {
                loc(f)?;
                write!(f, ": state {s} out of range")
            }
            ViolationKind::ActionOutOfRange(a) => {
                loc(f)?;
                write!(f, ": action {a} out of range")
            }
            ViolationKind::BrokenChain { next_state, following_state } => {
                let t = self.step.unwrap_or(0);
                write!(
                    f,
                    "trajectory {} steps {} and {}: next_state {} != following state {}",
                    self.trajectory,
                    t,
                    t + 1,
                    next_state,
                    following_state
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every violated dataset invariant.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    if dataset.trajectories.is_empty() {
        violations.push(Violation { trajectory: 0, step: None, kind: ViolationKind::EmptyDataset });
    }
    if !(dataset.gamma > 0.0 && dataset.gamma <= 1.0) {
        violations.push(Violation { trajectory: 0, step: None, kind: ViolationKind::Gamma(dataset.gamma) });
    }
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        traj.collect_violations(i, dataset.n_states, dataset.n_actions, &mut violations);
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn traj(rewards: &[f64]) -> Trajectory {
        let steps = rewards
            .iter()
            .map(|&r| Step { state: 0, action: 0, reward: r, next_state: 0, propensity: 0.5 })
            .collect();
        Trajectory::new(steps).unwrap()
    }

    #[test]
    fn return_examples() {
        assert_eq!(return_of(&traj(&[0.0, 0.0, 0.0, 0.0, 0.0, 201.0]), 1.0), 201.0);
        assert_eq!(return_of(&traj(&[0.0; 4]), 0.7), 0.0);
        let sixth = 1.0 / 6.0;
        assert!((return_of(&traj(&[sixth; 6]), 1.0) - 1.0).abs() < 1e-15);
        assert!((return_of(&traj(&[1.0, 1.0, 1.0]), 0.5) - 1.75).abs() < 1e-15);
    }

    fn chain_dataset() -> Dataset {
        let steps = vec![
            Step::new(0, 1, 0.0, 1, 0.5).unwrap(),
            Step::new(1, 1, 0.0, 2, 0.5).unwrap(),
            Step::new(2, 0, 0.0, 1, 0.5).unwrap(),
        ];
        Dataset::new(vec![Trajectory::new(steps).unwrap()], 1.0, 3, 2, "chain").unwrap()
    }

    #[test]
    fn well_formed_dataset_validates() {
        assert!(validate_dataset(&chain_dataset()).is_ok());
    }

    #[test]
    fn zero_propensity_is_reported_at_its_index() {
        let mut ds = chain_dataset();
        ds.trajectories[0].steps[1].propensity = 0.0;
        let report = validate_dataset(&ds);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].trajectory, 0);
        assert_eq!(report.violations[0].step, Some(1));
        assert_eq!(report.violations[0].kind, ViolationKind::Propensity(0.0));
        assert!(Step::new(0, 0, 0.0, 0, 0.0).is_err());
    }

    #[test]
    fn broken_chain_names_both_steps() {
        let mut ds = chain_dataset();
        ds.trajectories[0].steps[2].state = 0;
        let report = validate_dataset(&ds);
        assert_eq!(report.violations.len(), 1);
        let msg = alloc::format!("{}", report.violations[0]);
        assert!(msg.contains("steps 1 and 2"), "{msg}");
        assert!(Trajectory::new(ds.trajectories[0].steps.clone()).is_err());
    }

    #[test]
    fn out_of_range_and_empty_are_reported() {
        let mut ds = chain_dataset();
        ds.n_actions = 1;
        assert!(!validate_dataset(&ds).is_ok());
        let empty = Dataset { trajectories: vec![], gamma: 1.0, n_states: 1, n_actions: 1, env_tag: "x".into() };
        assert_eq!(validate_dataset(&empty).violations[0].kind, ViolationKind::EmptyDataset);
        assert!(Trajectory::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn return_is_linear_in_rewards(
            rewards in proptest::collection::vec(-10.0f64..10.0, 1..12),
            gamma in 0.01f64..=1.0,
            c in -5.0f64..5.0,
        ) {
            let base = return_of(&traj(&rewards), gamma);
            let scaled: Vec<f64> = rewards.iter().map(|r| r * c).collect();
            let got = return_of(&traj(&scaled), gamma);
            prop_assert!((got - c * base).abs() <= 1e-9 * (1.0 + base.abs() * c.abs()));
            let plain: f64 = rewards.iter().sum();
            prop_assert!((return_of(&traj(&rewards), 1.0) - plain).abs() < 1e-9);
        }
    }
}
