//! Why one split is not enough: analytic and Monte-Carlo failure rates of
//! split-based selection on the sparse-reward chain.
//!
//! The chain dataset holds `c` copies of the all-`UP` trajectory among `N`
//! episodes. A half/half split succeeds when both sides get at least one
//! copy: the train side is needed to learn the optimal policy and the
//! validation side to see its reward. With `m = N/2` trajectories in train,
//! the number of copies landing there is hypergeometric:
//!
//! ```text
//! P(k) = C(c, k) C(N - c, m - k) / C(N, m)
//! ```
//!
//! so a single split fails with probability `P(0) + P(c)`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::ah::AhSpec;
use crate::data::Dataset;
use crate::envs::{
    build_chain_dataset_with_copies, exact_policy_value, is_all_up, make_chain_env, rollout,
    uniform_behavior_policy, ChainConfig, EnvError, TabularEnv,
};
use crate::math;
use crate::ope::wis_estimate;
use crate::opl::fit;
use crate::rng::{tags, RngSeed};
use crate::select::{rrs_splits, Executor};

/// Tolerance for "the deployed policy is optimal".
pub const OPTIMALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoremError {
    #[error("total must be even and positive, got {0}")]
    OddTotal(usize),
    #[error("{copies} copies do not fit in half of {total}")]
    TooManyCopies { copies: usize, total: usize },
    #[error("invalid configuration: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// How copies are assumed to fall into the train half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionMode {
    /// Uniformly random half of the trajectories goes to train.
    #[default]
    Hypergeometric,
    /// Every count `0..=c` equally likely.
    Uniform,
}

fn check_sizes(copies: usize, total: usize) -> Result<(), TheoremError> {
    if total == 0 || total % 2 == 1 {
        return Err(TheoremError::OddTotal(total));
    }
    if copies > total / 2 {
        return Err(TheoremError::TooManyCopies { copies, total });
    }
    Ok(())
}

/// `P(k copies in train)` for `k = 0..=copies`.
pub fn partition_distribution(copies: usize, total: usize, mode: PartitionMode) -> Result<Vec<f64>, TheoremError> {
    check_sizes(copies, total)?;
    if mode == PartitionMode::Uniform {
        return Ok(vec![1.0 / (copies + 1) as f64; copies + 1]);
    }
    let m = total / 2;
    // C(c,k) * m^(k falling) * (N-m)^((c-k) falling) / N^(c falling)
    let falling = |x: usize, n: usize| (0..n).map(|i| (x - i) as f64).product::<f64>();
    let denom = falling(total, copies);
    Ok((0..=copies)
        .map(|k| math::binomial(copies as u64, k as u64) * falling(m, k) * falling(total - m, copies - k) / denom)
        .collect())
}

/// `P(0) + P(c)`: every copy on one side.
pub fn single_split_failure_prob(copies: usize, total: usize, mode: PartitionMode) -> Result<f64, TheoremError> {
    let p = partition_distribution(copies, total, mode)?;
    Ok(if copies == 0 { 1.0 } else { p[0] + p[copies] })
}

/// `1 - P(0) - P(c)`: at least one copy on each side.
pub fn successful_split_prob(copies: usize, total: usize, mode: PartitionMode) -> Result<f64, TheoremError> {
    Ok(1.0 - single_split_failure_prob(copies, total, mode)?)
}

/// `P(Binomial(k, p) >= ceil(k/2))`.
pub fn binomial_majority_bound(k: usize, p: f64) -> f64 {
    let need = k.div_ceil(2);
    (need..=k)
        .map(|j| math::binomial(k as u64, j as u64) * math::powi(p, j as i32) * math::powi(1.0 - p, (k - j) as i32))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetMode {
    /// Exactly `n_copies` all-`UP` trajectories.
    #[default]
    ExpectedComposition,
    /// Uniform-behavior rollouts; the number of copies is random.
    Rollout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremConfig {
    pub horizon: usize,
    pub n_episodes: usize,
    /// Defaults to `round(n_episodes / 2^horizon)`.
    pub n_copies: Option<usize>,
    pub k_values: Vec<usize>,
    pub n_trials: usize,
    pub ratio: f64,
    pub dataset_mode: DatasetMode,
    pub seed: RngSeed,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig {
            horizon: 6,
            n_episodes: 200,
            n_copies: None,
            k_values: vec![1, 2, 5, 15],
            n_trials: 20_000,
            ratio: 0.5,
            dataset_mode: DatasetMode::ExpectedComposition,
            seed: RngSeed(0),
        }
    }
}

impl TheoremConfig {
    pub fn copies(&self) -> usize {
        self.n_copies
            .unwrap_or_else(|| math::round(self.n_episodes as f64 / math::powi(2.0, self.horizon as i32)) as usize)
    }

    fn validate(&self) -> Result<(), TheoremError> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(TheoremError::Invalid("k values must be positive"));
        }
        if self.copies() > self.n_episodes {
            return Err(TheoremError::Invalid("more copies than episodes"));
        }
        if self.n_episodes % 2 == 1 {
            return Err(TheoremError::OddTotal(self.n_episodes));
        }
        Ok(())
    }
}

/// What happened in one trial, for every `K` in the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    /// Chosen AH index per `K` (`None`: no AH was evaluable).
    pub chosen: Vec<Option<usize>>,
    /// Whether the retrained choice is optimal, per `K`.
    pub optimal: Vec<bool>,
    /// Whether each of the `max K` splits put copies on both sides.
    pub successful_splits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analytic {
    pub partition_p0: f64,
    pub single_split_failure: f64,
    pub successful_split: f64,
    /// `(K, P(Bin(K, p_ss) >= ceil(K/2)))` per configured `K`.
    pub majority_bound: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KResult {
    pub k: usize,
    pub failures: usize,
    pub trials: usize,
    pub rate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremResult {
    /// `None` when the configuration has an odd or uneven split.
    pub analytic: Option<Analytic>,
    pub monte_carlo: Vec<KResult>,
    /// Fraction of first splits that were successful.
    pub successful_split_rate: f64,
    pub trials: Vec<TrialOutcome>,
}

impl TheoremResult {
    /// Mean and standard error of `fail(K_b) - fail(K_a)` over trials,
    /// where `a` and `b` index `k_values`.
    pub fn paired_difference(&self, a: usize, b: usize) -> (f64, f64) {
        let d: Vec<f64> = self
            .trials
            .iter()
            .map(|t| f64::from(u8::from(!t.optimal[b])) - f64::from(u8::from(!t.optimal[a])))
            .collect();
        mean_se(&d)
    }
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var / n))
}

/// The chain environment and AH list `{A_1..A_H}` for a configuration.
pub fn trial_setup(config: &TheoremConfig) -> Result<(TabularEnv, Vec<AhSpec>), TheoremError> {
    config.validate()?;
    let env = make_chain_env(ChainConfig { horizon: config.horizon, ..Default::default() })?;
    let ahs = (1..=config.horizon).map(AhSpec::horizon).collect();
    Ok((env, ahs))
}

fn trial_dataset(config: &TheoremConfig, env: &TabularEnv, seed: RngSeed) -> Result<Dataset, TheoremError> {
    Ok(match config.dataset_mode {
        DatasetMode::ExpectedComposition => build_chain_dataset_with_copies(env, config.n_episodes, config.copies(), seed)?,
        DatasetMode::Rollout => rollout(env, &uniform_behavior_policy(env), config.n_episodes, seed)?,
    })
}

/// One replication: build a dataset, score every AH with WIS on the first
/// `max K` shared splits, and for each `K` select on the first `K` columns
/// and check whether the retrained choice is optimal.
pub fn run_trial(
    config: &TheoremConfig,
    env: &TabularEnv,
    ahs: &[AhSpec],
    trial: usize,
) -> Result<TrialOutcome, TheoremError> {
    let seed = config.seed.derive(&[tags::TRIAL, trial as u64]);
    let data = trial_dataset(config, env, seed)?;
    let k_max = *config.k_values.iter().max().expect("validated");
    let plan = rrs_splits(data.len(), k_max, config.ratio, seed.derive(&[tags::SPLIT]))
        .map_err(|_| TheoremError::Invalid("dataset too small to split"))?;

    let copies_in = |idx: &[usize]| idx.iter().filter(|&&i| is_all_up(&data.trajectories[i])).count();
    let total_copies = copies_in(&(0..data.len()).collect::<Vec<_>>());
    let successful_splits = plan
        .repetitions
        .iter()
        .map(|s| {
            let v = copies_in(&s.valid);
            v >= 1 && v < total_copies
        })
        .collect();

    // scores[i][j] for AH i on split j
    let scores: Vec<Vec<Option<f64>>> = ahs
        .iter()
        .enumerate()
        .map(|(i, ah)| {
            plan.repetitions
                .iter()
                .enumerate()
                .map(|(j, split)| {
                    let cell = seed.derive(&[tags::CELL, i as u64, j as u64]);
                    let policy = fit(ah, &data.subset(&split.train), cell).ok()?.policy;
                    wis_estimate(&policy, &data.subset(&split.valid)).ok()
                })
                .collect()
        })
        .collect();

    let mut optimal_cache: Vec<Option<bool>> = vec![None; ahs.len()];
    let mut chosen = Vec::with_capacity(config.k_values.len());
    let mut optimal = Vec::with_capacity(config.k_values.len());
    for &k in &config.k_values {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in scores.iter().enumerate() {
            let vals: Vec<f64> = row[..k].iter().flatten().copied().collect();
            if vals.is_empty() {
                continue;
            }
            let agg = vals.iter().sum::<f64>() / vals.len() as f64;
            if best.is_none_or(|(_, b)| agg > b) {
                best = Some((i, agg));
            }
        }
        let pick = best.map(|(i, _)| i);
        let ok = match pick {
            None => false,
            Some(i) => *optimal_cache[i].get_or_insert_with(|| {
                fit(&ahs[i], &data, seed.derive(&[tags::RETRAIN]))
                    .ok()
                    .and_then(|f| exact_policy_value(env, &f.policy).ok())
                    .is_some_and(|v| (v - env.reward(env.n_states() - 1)).abs() <= OPTIMALITY_TOL)
            }),
        };
        chosen.push(pick);
        optimal.push(ok);
    }
    Ok(TrialOutcome { trial, chosen, optimal, successful_splits })
}

/// Analytic values and per-`K` failure rates from finished trials.
pub fn summarize(config: &TheoremConfig, trials: Vec<TrialOutcome>) -> TheoremResult {
    let n = trials.len();
    let monte_carlo = config
        .k_values
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let failures = trials.iter().filter(|t| !t.optimal[j]).count();
            let rate = failures as f64 / n.max(1) as f64;
            KResult { k, failures, trials: n, rate, se: math::sqrt(rate * (1.0 - rate) / n.max(1) as f64) }
        })
        .collect();
    let successful_split_rate =
        trials.iter().filter(|t| t.successful_splits[0]).count() as f64 / n.max(1) as f64;
    let copies = config.copies();
    let analytic = (config.ratio == 0.5 && config.dataset_mode == DatasetMode::ExpectedComposition)
        .then(|| {
            let mode = PartitionMode::Hypergeometric;
            let p = partition_distribution(copies, config.n_episodes, mode).ok()?;
            let fail = single_split_failure_prob(copies, config.n_episodes, mode).ok()?;
            Some(Analytic {
                partition_p0: p[0],
                single_split_failure: fail,
                successful_split: 1.0 - fail,
                majority_bound: config.k_values.iter().map(|&k| (k, binomial_majority_bound(k, 1.0 - fail))).collect(),
            })
        })
        .flatten();
    TheoremResult { analytic, monte_carlo, successful_split_rate, trials }
}

/// Runs every trial through `exec` and summarizes.
pub fn run_mc_experiment<E: Executor>(config: &TheoremConfig, exec: &E) -> Result<TheoremResult, TheoremError> {
    let (env, ahs) = trial_setup(config)?;
    let outcomes = exec.map(config.n_trials, |t| run_trial(config, &env, &ahs, t));
    let trials = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(config, trials))
}

impl core::fmt::Display for KResult {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "K={}: {}/{} failures, rate {:.4} (se {:.4})", self.k, self.failures, self.trials, self.rate, self.se)
    }
}
