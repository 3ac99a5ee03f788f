//! Dataset splitting, AH scoring strategies and the final retrain step.
//!
//! Every strategy fills a [`ScoreTable`] with one row per AH pair. Cells that
//! an estimator cannot evaluate (WIS with all-zero weights) or whose learner
//! failed are kept in the table but excluded from the row mean; a row with no
//! usable cell ranks below every evaluable row.
//!
//! Seeds are derived from the pipeline seed: split plans from
//! `(SPLIT)`, the learner fit for AH `i` on repetition `k` from
//! `(CELL, i, k)`, bootstrap resample `b` from `(BOOTSTRAP, b)` and the final
//! retrain from `(RETRAIN)`.

mod bca;
mod bvft;
mod splits;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::ah::AhSpec;
use crate::data::Dataset;
use crate::ope::{fqe_tabular, Estimator, OpeError};
use crate::opl::{fit, OplError};
use crate::policy::{TabularPolicy, TabularQ};
use crate::rng::{tags, RngSeed};

pub use bca::{bca_interval, bca_score, BcaInterval, BcaMode};
pub use bvft::{bvft_loss, bvft_loss_at, bvft_pair_error, DEFAULT_EPS_GRID};
pub use splits::{kfold_splits, one_split, rrs_splits, Scheme, Split, SplitPlan};

pub const STRATEGY_IDS: [&str; 6] = ["one-split", "rrs", "cv", "nested-cv", "bca", "bvft"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("invalid strategy parameter: {0}")]
    InvalidParam(&'static str),
    #[error("splitting {n} trajectories at ratio {ratio} leaves one side empty")]
    Degenerate { n: usize, ratio: f64 },
    #[error("{m} folds requested for {n} trajectories")]
    TooManyFolds { m: usize, n: usize },
    #[error("split plan does not partition the dataset")]
    BadPlan,
    #[error("no AH pair has a usable score")]
    NoEvaluable,
    #[error("no AH pairs to select from")]
    NoCandidates,
    #[error("rankings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two items to rank")]
    TooShort,
    #[error("retraining the chosen AH failed: {0}")]
    Retrain(OplError),
}

/// Runs independent jobs `0..n` and returns their results in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Score(f64),
    /// The estimator is undefined on this validation set.
    Undefined,
    /// Training or evaluation failed; the message says why.
    Failed(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Score(v) => Some(*v),
            _ => None,
        }
    }

    fn from_estimate(r: Result<f64, OpeError>) -> Cell {
        match r {
            Ok(v) => Cell::Score(v),
            Err(OpeError::Undefined) => Cell::Undefined,
            Err(e) => Cell::Failed(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ah_specs: Vec<AhSpec>,
    /// `cells[i][k]`: AH `i` on repetition `k`.
    pub cells: Vec<Vec<Cell>>,
}

impl ScoreTable {
    pub fn n_ahs(&self) -> usize {
        self.ah_specs.len()
    }

    pub fn n_columns(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    /// Mean of the usable cells of row `i`; `None` if there are none.
    pub fn aggregate(&self, i: usize) -> Option<f64> {
        let vals: Vec<f64> = self.cells[i].iter().filter_map(Cell::value).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn aggregates(&self) -> Vec<Option<f64>> {
        (0..self.n_ahs()).map(|i| self.aggregate(i)).collect()
    }

    /// Cells in row `i` that carry no score.
    pub fn n_undefined(&self, i: usize) -> usize {
        self.cells[i].iter().filter(|c| c.value().is_none()).count()
    }

    /// Row with the largest aggregate, lowest index on ties.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, agg) in self.aggregates().into_iter().enumerate() {
            if let Some(v) = agg {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    OneSplit { ratio: f64 },
    Rrs { k: usize, ratio: f64 },
    Cv { m: usize },
    NestedCv { k: usize },
    Bca { ratio: f64, b: usize, mode: BcaMode, confidence: f64 },
    /// Ranks AHs by the tournament loss of their FQE Q-tables on the
    /// validation side; the estimator argument is not used.
    Bvft { ratio: f64, eps_grid: Vec<f64> },
}

impl Strategy {
    pub fn id(&self) -> &'static str {
        match self {
            Strategy::OneSplit { .. } => "one-split",
            Strategy::Rrs { .. } => "rrs",
            Strategy::Cv { .. } => "cv",
            Strategy::NestedCv { .. } => "nested-cv",
            Strategy::Bca { .. } => "bca",
            Strategy::Bvft { .. } => "bvft",
        }
    }

    /// The partitions the strategy scores on.
    pub fn plan(&self, n: usize, seed: RngSeed) -> Result<SplitPlan, SelectError> {
        let seed = seed.derive(&[tags::SPLIT]);
        match *self {
            Strategy::OneSplit { ratio } | Strategy::Bca { ratio, .. } | Strategy::Bvft { ratio, .. } => {
                one_split(n, ratio, seed)
            }
            Strategy::Rrs { k, ratio } => rrs_splits(n, k, ratio, seed),
            Strategy::Cv { m } => kfold_splits(n, m, seed),
            Strategy::NestedCv { k } => rrs_splits(n, k, 0.5, seed),
        }
    }
}

fn cell_seed(seed: RngSeed, i: usize, k: usize) -> RngSeed {
    seed.derive(&[tags::CELL, i as u64, k as u64])
}

fn train_and_score(ah: &AhSpec, dataset: &Dataset, split: &Split, estimator: &Estimator, seed: RngSeed) -> Cell {
    match fit(ah, &dataset.subset(&split.train), seed) {
        Ok(fitted) => Cell::from_estimate(estimator.estimate(&fitted.policy, &dataset.subset(&split.valid))),
        Err(e) => Cell::Failed(e.to_string()),
    }
}

fn check_inputs(ahs: &[AhSpec], dataset: &Dataset, plan: &SplitPlan) -> Result<(), SelectError> {
    if ahs.is_empty() {
        return Err(SelectError::NoCandidates);
    }
    plan.check(dataset.len())
}

fn reshape(cells: Vec<Cell>, ahs: &[AhSpec], cols: usize) -> ScoreTable {
    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(ahs.len());
    let mut it = cells.into_iter();
    for _ in 0..ahs.len() {
        rows.push(it.by_ref().take(cols).collect());
    }
    ScoreTable { ah_specs: ahs.to_vec(), cells: rows }
}

/// Trains each AH on every train side of `plan` and scores it on the matching
/// validation side.
pub fn score_strategy<E: Executor>(
    ahs: &[AhSpec],
    dataset: &Dataset,
    estimator: &Estimator,
    plan: &SplitPlan,
    seed: RngSeed,
    exec: &E,
) -> Result<ScoreTable, SelectError> {
    check_inputs(ahs, dataset, plan)?;
    let cols = plan.len();
    let cells = exec.map(ahs.len() * cols, |job| {
        let (i, k) = (job / cols, job % cols);
        train_and_score(&ahs[i], dataset, &plan.repetitions[k], estimator, cell_seed(seed, i, k))
    });
    Ok(reshape(cells, ahs, cols))
}

/// Two-fold scoring in both directions on every repetition of `plan`; the
/// cell is the mean of the defined directions.
pub fn score_nested_cv<E: Executor>(
    ahs: &[AhSpec],
    dataset: &Dataset,
    estimator: &Estimator,
    plan: &SplitPlan,
    seed: RngSeed,
    exec: &E,
) -> Result<ScoreTable, SelectError> {
    check_inputs(ahs, dataset, plan)?;
    let cols = plan.len();
    let cells = exec.map(ahs.len() * cols, |job| {
        let (i, k) = (job / cols, job % cols);
        let split = &plan.repetitions[k];
        let fwd = train_and_score(&ahs[i], dataset, split, estimator, cell_seed(seed, i, 2 * k));
        let back = train_and_score(&ahs[i], dataset, &split.swapped(), estimator, cell_seed(seed, i, 2 * k + 1));
        match (fwd, back) {
            (Cell::Failed(m), _) | (_, Cell::Failed(m)) => Cell::Failed(m),
            (Cell::Score(a), Cell::Score(b)) => Cell::Score((a + b) / 2.0),
            (Cell::Score(a), Cell::Undefined) | (Cell::Undefined, Cell::Score(a)) => Cell::Score(a),
            (Cell::Undefined, Cell::Undefined) => Cell::Undefined,
        }
    });
    Ok(reshape(cells, ahs, cols))
}

/// Bootstrap configuration for [`score_bca`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcaConfig {
    pub resamples: usize,
    pub mode: BcaMode,
    pub confidence: f64,
}

/// Trains each AH once on the train side and scores it by the BCa summary of
/// its estimate over bootstrap resamples of the validation trajectories.
/// Resamples are shared by all AHs; undefined resample or jackknife
/// estimates are dropped.
pub fn score_bca<E: Executor>(
    ahs: &[AhSpec],
    dataset: &Dataset,
    estimator: &Estimator,
    split: &Split,
    config: BcaConfig,
    seed: RngSeed,
    exec: &E,
) -> Result<ScoreTable, SelectError> {
    use rand::Rng;
    let plan = SplitPlan { repetitions: alloc::vec![split.clone()], scheme: Scheme::OneSplit };
    check_inputs(ahs, dataset, &plan)?;
    if config.resamples == 0 {
        return Err(SelectError::InvalidParam("bca needs at least one resample"));
    }
    if !(config.confidence > 0.0 && config.confidence < 1.0) {
        return Err(SelectError::InvalidParam("bca confidence must lie in (0, 1)"));
    }
    let valid = dataset.subset(&split.valid);
    let n = valid.len();
    let resamples: Vec<Vec<usize>> = (0..config.resamples)
        .map(|b| {
            let mut rng = seed.derive(&[tags::BOOTSTRAP, b as u64]).rng();
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect();
    let cells = exec.map(ahs.len(), |i| {
        let fitted = match fit(&ahs[i], &dataset.subset(&split.train), cell_seed(seed, i, 0)) {
            Ok(f) => f,
            Err(e) => return Cell::Failed(e.to_string()),
        };
        let point = match estimator.estimate(&fitted.policy, &valid) {
            Ok(v) => v,
            other => return Cell::from_estimate(other),
        };
        let on = |idx: &[usize]| estimator.estimate(&fitted.policy, &valid.subset(idx)).ok();
        let reps: Vec<f64> = resamples.iter().filter_map(|idx| on(idx)).collect();
        let jack: Vec<f64> = bca::leave_one_out(n).filter_map(|idx| on(&idx)).collect();
        Cell::Score(bca_score(point, &reps, &jack, config.mode, config.confidence))
    });
    Ok(reshape(cells, ahs, 1))
}

/// Trains each AH on the train side, fits FQE for its policy on the
/// validation side and scores it by the negated tournament loss.
pub fn score_bvft<E: Executor>(
    ahs: &[AhSpec],
    dataset: &Dataset,
    split: &Split,
    eps_grid: &[f64],
    seed: RngSeed,
    exec: &E,
) -> Result<ScoreTable, SelectError> {
    let plan = SplitPlan { repetitions: alloc::vec![split.clone()], scheme: Scheme::OneSplit };
    check_inputs(ahs, dataset, &plan)?;
    let valid = dataset.subset(&split.valid);
    let qs: Vec<Result<TabularQ, String>> = exec.map(ahs.len(), |i| {
        let fitted = fit(&ahs[i], &dataset.subset(&split.train), cell_seed(seed, i, 0)).map_err(|e| e.to_string())?;
        fqe_tabular(&fitted.policy, &valid, valid.max_len()).map(|e| e.q).map_err(|e| e.to_string())
    });
    let ok: Vec<TabularQ> = qs.iter().filter_map(|q| q.as_ref().ok().cloned()).collect();
    let mut losses = bvft_loss(&ok, &valid, valid.gamma, eps_grid)?.into_iter();
    let cells = qs
        .into_iter()
        .map(|q| match q {
            Ok(_) => Cell::Score(-losses.next().expect("one loss per candidate")),
            Err(m) => Cell::Failed(m),
        })
        .collect();
    Ok(reshape(cells, ahs, 1))
}

/// Scores `ahs` with `strategy`.
pub fn score<E: Executor>(
    strategy: &Strategy,
    ahs: &[AhSpec],
    dataset: &Dataset,
    estimator: &Estimator,
    seed: RngSeed,
    exec: &E,
) -> Result<ScoreTable, SelectError> {
    let plan = strategy.plan(dataset.len(), seed)?;
    match strategy {
        Strategy::OneSplit { .. } | Strategy::Rrs { .. } | Strategy::Cv { .. } => {
            score_strategy(ahs, dataset, estimator, &plan, seed, exec)
        }
        Strategy::NestedCv { .. } => score_nested_cv(ahs, dataset, estimator, &plan, seed, exec),
        Strategy::Bca { b, mode, confidence, .. } => score_bca(
            ahs,
            dataset,
            estimator,
            &plan.repetitions[0],
            BcaConfig { resamples: *b, mode: *mode, confidence: *confidence },
            seed,
            exec,
        ),
        Strategy::Bvft { eps_grid, .. } => score_bvft(ahs, dataset, &plan.repetitions[0], eps_grid, seed, exec),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub chosen_index: usize,
    pub chosen: AhSpec,
    pub table: ScoreTable,
    pub deployed_policy: TabularPolicy,
    pub strategy: String,
    pub seed: RngSeed,
    /// Seconds; filled in by callers that time the run.
    pub wall_time: Option<f64>,
}

/// Picks the best row of `table` and retrains that AH on all of `dataset`.
pub fn select_and_retrain(
    table: ScoreTable,
    dataset: &Dataset,
    strategy: &str,
    seed: RngSeed,
) -> Result<SelectionReport, SelectError> {
    let chosen_index = table.best().ok_or(SelectError::NoEvaluable)?;
    let chosen = table.ah_specs[chosen_index].clone();
    let fitted = fit(&chosen, dataset, seed.derive(&[tags::RETRAIN])).map_err(SelectError::Retrain)?;
    Ok(SelectionReport {
        chosen_index,
        chosen,
        table,
        deployed_policy: fitted.policy,
        strategy: strategy.to_string(),
        seed,
        wall_time: None,
    })
}

/// Score, select and retrain in one call.
pub fn run_selection<E: Executor>(
    strategy: &Strategy,
    ahs: &[AhSpec],
    dataset: &Dataset,
    estimator: &Estimator,
    seed: RngSeed,
    exec: &E,
) -> Result<SelectionReport, SelectError> {
    let table = score(strategy, ahs, dataset, estimator, seed, exec)?;
    select_and_retrain(table, dataset, strategy.id(), seed)
}

/// `(concordant - discordant) / C(n, 2)`; pairs tied in either list count
/// as neither.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, SelectError> {
    if a.len() != b.len() {
        return Err(SelectError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(SelectError::TooShort);
    }
    let mut net: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let prod = (a[i] - a[j]) * (b[i] - b[j]);
            if prod > 0.0 {
                net += 1;
            } else if prod < 0.0 {
                net -= 1;
            }
        }
    }
    Ok(net as f64 / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ah::Algorithm;
    use crate::envs::{
        build_expected_composition_chain_dataset, exact_policy_value, is_all_up, make_chain_env, ChainConfig,
    };
    use alloc::vec;
    use alloc::vec::Vec;

    fn horizons(h: usize) -> Vec<AhSpec> {
        (1..=h).map(AhSpec::horizon).collect()
    }

    fn chain() -> (crate::envs::TabularEnv, Dataset) {
        let env = make_chain_env(ChainConfig::default()).unwrap();
        let ds = build_expected_composition_chain_dataset(&env, 200, RngSeed(17)).unwrap();
        (env, ds)
    }

    fn copies_in(ds: &Dataset, idx: &[usize]) -> usize {
        idx.iter().filter(|&&i| is_all_up(&ds.trajectories[i])).count()
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let t = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn kendall_antisymmetric() {
        let a = [0.3, 1.0, -2.0, 5.0, 4.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rev: Vec<f64> = b.iter().map(|x| -x).collect();
        assert_eq!(kendall_tau(&a, &rev).unwrap(), -kendall_tau(&a, &b).unwrap());
    }

    #[test]
    fn successful_split_ranks_full_horizon_above_myopic() {
        let (_, ds) = chain();
        let est = Estimator::Wis;
        for seed in 0..40 {
            let plan = rrs_splits(200, 1, 0.5, RngSeed(seed)).unwrap();
            let split = &plan.repetitions[0];
            let (tr, va) = (copies_in(&ds, &split.train), copies_in(&ds, &split.valid));
            let t = score_strategy(&horizons(6), &ds, &est, &plan, RngSeed(seed), &Sequential).unwrap();
            let (a1, a6) = (t.aggregate(0), t.aggregate(5));
            if tr >= 1 && va >= 1 {
                assert!(a6.unwrap() > a1.unwrap_or(f64::NEG_INFINITY), "seed {seed}");
                assert_eq!(t.best(), Some(5));
            }
            if va == 0 {
                assert!(a6.is_none() || a6 <= a1, "seed {seed}");
            }
        }
    }

    #[test]
    fn one_split_equals_rrs_k1() {
        let (_, ds) = chain();
        let est = Estimator::Wis;
        for seed in 0..5 {
            let a = score(&Strategy::OneSplit { ratio: 0.5 }, &horizons(6), &ds, &est, RngSeed(seed), &Sequential);
            let b = score(&Strategy::Rrs { k: 1, ratio: 0.5 }, &horizons(6), &ds, &est, RngSeed(seed), &Sequential);
            assert_eq!(a.unwrap(), b.unwrap());
        }
    }

    #[test]
    fn rrs_k5_deploys_optimal_policy_when_majority_successful() {
        let (env, ds) = chain();
        let strategy = Strategy::Rrs { k: 5, ratio: 0.5 };
        let mut checked = 0;
        for seed in 0..20 {
            let plan = strategy.plan(200, RngSeed(seed)).unwrap();
            let successful = plan
                .repetitions
                .iter()
                .filter(|s| copies_in(&ds, &s.train) >= 1 && copies_in(&ds, &s.valid) >= 1)
                .count();
            if successful < 3 {
                continue;
            }
            checked += 1;
            let report = run_selection(&strategy, &horizons(6), &ds, &Estimator::Wis, RngSeed(seed), &Sequential).unwrap();
            assert_eq!(report.chosen.label, "A_6", "seed {seed}");
            assert_eq!(exact_policy_value(&env, &report.deployed_policy).unwrap(), 201.0);
        }
        assert!(checked > 10);
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let ahs = horizons(2);
        let t = ScoreTable { ah_specs: ahs, cells: vec![vec![Cell::Score(1.0)], vec![Cell::Score(1.0)]] };
        assert_eq!(t.best(), Some(0));
    }

    #[test]
    fn undefined_rows_rank_last_and_empty_tables_fail() {
        let (_, ds) = chain();
        let t = ScoreTable {
            ah_specs: horizons(2),
            cells: vec![vec![Cell::Undefined, Cell::Failed("x".into())], vec![Cell::Score(-5.0), Cell::Undefined]],
        };
        assert_eq!(t.best(), Some(1));
        assert_eq!(t.n_undefined(0), 2);
        assert_eq!(t.aggregate(1), Some(-5.0));
        let none = ScoreTable { ah_specs: horizons(1), cells: vec![vec![Cell::Undefined]] };
        assert_eq!(select_and_retrain(none, &ds, "rrs", RngSeed(0)), Err(SelectError::NoEvaluable));
    }

    #[test]
    fn aggregate_invariant_under_column_permutation() {
        let (_, ds) = chain();
        let plan = rrs_splits(200, 4, 0.5, RngSeed(2)).unwrap();
        let t = score_strategy(&horizons(6), &ds, &Estimator::Wis, &plan, RngSeed(2), &Sequential).unwrap();
        let mut p = t.clone();
        for row in &mut p.cells {
            row.reverse();
        }
        for i in 0..6 {
            match (t.aggregate(i), p.aggregate(i)) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)),
                (a, b) => assert_eq!(a, b),
            }
        }
        let scaled = ScoreTable {
            ah_specs: t.ah_specs.clone(),
            cells: t
                .cells
                .iter()
                .map(|r| r.iter().map(|c| c.value().map_or(c.clone(), |v| Cell::Score(3.5 * v))).collect())
                .collect(),
        };
        assert_eq!(scaled.best(), t.best());
    }

    #[test]
    fn nested_cv_on_mirrored_halves() {
        let (_, ds) = chain();
        // Build a dataset whose two halves are the same multiset.
        let half: Vec<usize> = (0..50).collect();
        let base = ds.subset(&half);
        let mut doubled = base.clone();
        doubled.trajectories.extend(base.trajectories.iter().cloned());
        let split = Split { train: (0..50).collect(), valid: (50..100).collect() };
        let plan = SplitPlan { repetitions: vec![split.clone()], scheme: Scheme::OneSplit };
        let ahs = horizons(3);
        let nested = score_nested_cv(&ahs, &doubled, &Estimator::Is, &plan, RngSeed(0), &Sequential).unwrap();
        let one = score_strategy(&ahs, &doubled, &Estimator::Is, &plan, RngSeed(0), &Sequential).unwrap();
        for i in 0..3 {
            assert!((nested.aggregate(i).unwrap() - one.aggregate(i).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_cv_matches_four_direct_calls() {
        let env = make_chain_env(ChainConfig { horizon: 3, ..Default::default() }).unwrap();
        let ds = build_expected_composition_chain_dataset(&env, 40, RngSeed(5)).unwrap();
        let plan = rrs_splits(40, 2, 0.5, RngSeed(8)).unwrap();
        let ahs = horizons(3);
        let est = Estimator::Is;
        let t = score_nested_cv(&ahs, &ds, &est, &plan, RngSeed(1), &Sequential).unwrap();
        for (i, ah) in ahs.iter().enumerate() {
            for (k, split) in plan.repetitions.iter().enumerate() {
                let dir = |tr: &[usize], va: &[usize]| {
                    let pol = fit(ah, &ds.subset(tr), RngSeed(0)).unwrap().policy;
                    est.estimate(&pol, &ds.subset(va)).unwrap()
                };
                let want = (dir(&split.train, &split.valid) + dir(&split.valid, &split.train)) / 2.0;
                assert_eq!(t.cells[i][k], Cell::Score(want));
            }
        }
    }

    #[test]
    fn bca_mean_mode_tracks_point_estimate() {
        let (_, ds) = chain();
        let plan = one_split(200, 0.5, RngSeed(4)).unwrap();
        let ahs = vec![AhSpec::new(Algorithm::Bc, [("alpha".to_string(), 0.0)], None).unwrap()];
        let cfg = BcaConfig { resamples: 400, mode: BcaMode::Mean, confidence: 0.9 };
        let t = score_bca(&ahs, &ds, &Estimator::Wis, &plan.repetitions[0], cfg, RngSeed(1), &Sequential).unwrap();
        let pol = fit(&ahs[0], &ds.subset(&plan.repetitions[0].train), RngSeed(0)).unwrap().policy;
        let point = Estimator::Wis.estimate(&pol, &ds.subset(&plan.repetitions[0].valid)).unwrap();
        let got = t.aggregate(0).unwrap();
        assert!((got - point).abs() < 0.5, "{got} vs {point}");
        let lo = score_bca(&ahs, &ds, &Estimator::Wis, &plan.repetitions[0], BcaConfig { mode: BcaMode::Lower, ..cfg }, RngSeed(1), &Sequential).unwrap();
        let hi = score_bca(&ahs, &ds, &Estimator::Wis, &plan.repetitions[0], BcaConfig { mode: BcaMode::Upper, ..cfg }, RngSeed(1), &Sequential).unwrap();
        assert!(lo.aggregate(0).unwrap() <= got && got <= hi.aggregate(0).unwrap());
    }

    #[test]
    fn selection_is_deterministic() {
        let (_, ds) = chain();
        for strategy in [
            Strategy::Rrs { k: 3, ratio: 0.5 },
            Strategy::Cv { m: 4 },
            Strategy::NestedCv { k: 2 },
            Strategy::Bvft { ratio: 0.5, eps_grid: DEFAULT_EPS_GRID.to_vec() },
        ] {
            let a = run_selection(&strategy, &horizons(6), &ds, &Estimator::Wis, RngSeed(3), &Sequential).unwrap();
            let b = run_selection(&strategy, &horizons(6), &ds, &Estimator::Wis, RngSeed(3), &Sequential).unwrap();
            assert_eq!(a, b);
        }
    }
}
