use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("table has {got} entries, expected {n_states}x{n_actions}")]
    Shape { n_states: usize, n_actions: usize, got: usize },
    #[error("row {state} sums to {sum}, not 1")]
    RowSum { state: usize, sum: f64 },
    #[error("entry ({state}, {action}) = {value} outside [0, 1]")]
    Entry { state: usize, action: usize, value: f64 },
    #[error("entry ({state}, {action}) is not finite")]
    NonFinite { state: usize, action: usize },
}

/// Stationary Markov policy stored as a row-major `n_states x n_actions`
/// probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

pub const ROW_TOLERANCE: f64 = 1e-9;

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, PolicyError> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(PolicyError::Shape { n_states, n_actions, got: probs.len() });
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            for (a, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(PolicyError::Entry { state: s, action: a, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(PolicyError::RowSum { state: s, sum });
            }
        }
        Ok(TabularPolicy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        TabularPolicy { n_states, n_actions, probs: vec![p; n_states * n_actions] }
    }

    /// One-hot policy taking `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        TabularPolicy { n_states: actions.len(), n_actions, probs }
    }

    pub(crate) fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        TabularPolicy { n_states, n_actions, probs }
    }

    /// Same action everywhere.
    pub fn constant(n_states: usize, n_actions: usize, action: usize) -> Self {
        Self::deterministic(n_actions, &vec![action; n_states])
    }

    /// Row-wise softmax of `logits / temperature`.
    pub fn softmax(n_states: usize, n_actions: usize, logits: &[f64], temperature: f64) -> Self {
        let mut probs = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let row = &logits[s * n_actions..(s + 1) * n_actions];
            let out = &mut probs[s * n_actions..(s + 1) * n_actions];
            softmax_into(row, temperature, out);
        }
        TabularPolicy { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Highest-probability action, lowest index on ties.
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }
}

pub(crate) fn softmax_into(row: &[f64], temperature: f64, out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = math::exp((x - max) / temperature);
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Action-value table, row-major `n_states x n_actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl TabularQ {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self, PolicyError> {
        if values.len() != n_states * n_actions {
            return Err(PolicyError::Shape { n_states, n_actions, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite { state: i / n_actions, action: i % n_actions });
        }
        Ok(TabularQ { n_states, n_actions, values })
    }

    pub(crate) fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_states * n_actions);
        TabularQ { n_states, n_actions, values }
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        TabularQ { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> TabularQ {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i / self.n_actions, i % self.n_actions, v))
            .collect();
        TabularQ { n_states: self.n_states, n_actions: self.n_actions, values }
    }
}
