//! The subcommands as library calls.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ssr_core::envs::{exact_policy_value, tutorbot_policy_value, TutorBehavior};
use ssr_core::rng::tags;
use ssr_core::select::{kendall_tau, score, select_and_retrain, Cell, Executor, SelectError, SelectionReport};
use ssr_core::theorem::{
    binomial_majority_bound, partition_distribution, run_mc_experiment, single_split_failure_prob,
    successful_split_prob, PartitionMode, TheoremError, TheoremResult,
};
use ssr_core::{Dataset, TabularPolicy};
use thiserror::Error;

use crate::config::{generate, ConfigError, Env, ExperimentConfig};
use crate::io::{self, IoError, ScoreSheet, Summary, Versions};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Theorem(#[from] TheoremError),
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("cannot create {path}: {source}")]
    CreateDir { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Env(String),
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },
}

/// Files a command is about to write. Anything registered is deleted again
/// unless [`Outputs::finish`] is reached.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    /// Fails if any of `names` already exists in `dir` and `force` is off.
    pub fn create(dir: &Path, names: &[&str], force: bool) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|source| PipelineError::CreateDir { path: dir.to_path_buf(), source })?;
        if !force {
            if let Some(p) = names.iter().map(|n| dir.join(n)).find(|p| p.exists()) {
                return Err(PipelineError::Exists(p));
            }
        }
        Ok(Outputs { dir: dir.to_path_buf(), written: Vec::new(), done: false })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn finish(mut self) -> Vec<PathBuf> {
        self.done = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.done {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub const DATASET_FILE: &str = "dataset.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const POLICY_FILE: &str = "policy.csv";
pub const LOG_FILE: &str = "run.log";
pub const THEOREM_FILE: &str = "theorem.csv";

fn dataset_files() -> [String; 3] {
    let p = Path::new(DATASET_FILE);
    [
        DATASET_FILE.to_string(),
        io::meta_path(p).display().to_string(),
        io::aux_path(p).display().to_string(),
    ]
}

fn write_generated(
    out: &mut Outputs,
    ds: &Dataset,
    aux: Option<&[Vec<ssr_core::envs::TutorBotObs>]>,
) -> Result<(), PipelineError> {
    let [csv, meta, aux_name] = dataset_files();
    let path = out.path(&csv);
    out.path(&meta);
    io::write_dataset(&path, ds)?;
    if let Some(aux) = aux {
        io::write_aux(&out.path(&aux_name), aux)?;
    }
    Ok(())
}

/// Generates the configured dataset into `out_dir`.
pub fn gen_data(config: &ExperimentConfig, out_dir: &Path, force: bool) -> Result<Dataset, PipelineError> {
    let env = config.env()?;
    let names = dataset_files();
    let mut out = Outputs::create(out_dir, &names.each_ref().map(String::as_str), force)?;
    let (ds, aux) = generate(config, &env)?;
    write_generated(&mut out, &ds, aux.as_deref())?;
    out.finish();
    Ok(ds)
}

/// True value of `policy` in the configured environment, with a standard
/// error for Monte-Carlo estimates. `None` if the policy does not fit the
/// environment's state and action spaces.
pub fn true_value(
    config: &ExperimentConfig,
    env: &Env,
    policy: &TabularPolicy,
) -> Result<Option<(f64, Option<f64>)>, PipelineError> {
    match env {
        Env::Tabular { env, .. } => {
            if policy.n_states() != env.n_states() || policy.n_actions() != env.n_actions() {
                return Ok(None);
            }
            let v = exact_policy_value(env, policy).map_err(|e| PipelineError::Env(e.to_string()))?;
            Ok(Some((v, None)))
        }
        Env::TutorBot { env, .. } => {
            let behavior = TutorBehavior::Table(policy.clone());
            let seed = config.pipeline_seed().derive(&[tags::TRUE_VALUE]);
            match tutorbot_policy_value(env, &behavior, config.eval.mc_episodes, seed) {
                Ok((mean, se)) => Ok(Some((mean, Some(se)))),
                Err(_) => Ok(None),
            }
        }
    }
}

pub struct RunOutcome {
    pub report: SelectionReport,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Split, select, retrain, evaluate and write every artifact.
pub fn run<E: Executor>(
    config: &ExperimentConfig,
    out_dir: &Path,
    force: bool,
    exec: &E,
) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let env = config.env()?;
    let ahs = config.ahs()?;
    let estimator = config.estimator()?;
    let strategy = config.strategy()?;
    let seed = config.pipeline_seed();

    let mut names: Vec<String> = [SCORES_FILE, SUMMARY_FILE, POLICY_FILE, LOG_FILE].map(String::from).to_vec();
    if config.data.path.is_none() {
        names.extend(dataset_files());
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut out = Outputs::create(out_dir, &name_refs, force)?;

    let start = Instant::now();
    let dataset = match &config.data.path {
        Some(p) => io::read_dataset(p)?,
        None => {
            let (ds, aux) = generate(config, &env)?;
            write_generated(&mut out, &ds, aux.as_deref())?;
            ds
        }
    };

    let table = score(&strategy, &ahs, &dataset, &estimator, seed, exec)?;
    let mut report = select_and_retrain(table, &dataset, strategy.id(), seed)?;
    let truth = true_value(config, &env, &report.deployed_policy)?;
    report.wall_time = Some(start.elapsed().as_secs_f64());

    let sheet = ScoreSheet::from(&report.table);
    let failures = report
        .table
        .cells
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            let label = &report.table.ah_specs[i].label;
            row.iter().enumerate().filter_map(move |(k, c)| match c {
                Cell::Failed(msg) => Some(format!("{label}[{k}]: {msg}")),
                _ => None,
            })
        })
        .collect();
    let summary = Summary {
        strategy: config.strategy.id.clone(),
        estimator: estimator.id().to_string(),
        chosen_label: report.chosen.label.clone(),
        chosen_index: report.chosen_index,
        aggregate: sheet.aggregates[report.chosen_index].expect("chosen AH has a score"),
        true_value: truth.map(|t| t.0),
        true_value_se: truth.and_then(|t| t.1),
        seed: config.seed,
        versions: Versions::default(),
        ahs: (0..sheet.labels.len())
            .map(|i| io::AhRecord {
                label: sheet.labels[i].clone(),
                aggregate: sheet.aggregates[i],
                n_undefined: sheet.n_undefined[i],
            })
            .collect(),
        failures,
    };

    io::write_scores(&out.path(SCORES_FILE), &sheet)?;
    io::write_policy(&out.path(POLICY_FILE), &report.deployed_policy)?;
    io::write_summary(&out.path(SUMMARY_FILE), &summary)?;
    let log = out.path(LOG_FILE);
    let _ = fs::remove_file(&log);
    io::append_line(
        &log,
        &format!(
            "wall_time_s={:.6} strategy={} estimator={} ahs={} trajectories={}",
            report.wall_time.unwrap_or(0.0),
            summary.strategy,
            summary.estimator,
            ahs.len(),
            dataset.len()
        ),
    )?;
    let files = out.finish();
    Ok(RunOutcome { report, summary, files })
}

/// Value of the policy stored at `policy_path` in the configured environment.
pub fn eval_policy(config: &ExperimentConfig, policy_path: &Path) -> Result<(f64, Option<f64>), PipelineError> {
    let env = config.env()?;
    let policy = io::read_policy(policy_path)?;
    true_value(config, &env, &policy)?.ok_or_else(|| PipelineError::Input {
        path: policy_path.to_path_buf(),
        msg: format!(
            "a {}x{} policy does not fit the configured environment",
            policy.n_states(),
            policy.n_actions()
        ),
    })
}

/// `ah_label,true_value` rows.
pub fn read_true_values(path: &Path) -> Result<Vec<(String, f64)>, PipelineError> {
    let bad = |msg: String| PipelineError::Input { path: path.to_path_buf(), msg };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(["ah_label", "true_value"]) {
        return Err(bad("header must be ah_label,true_value".into()));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let v: f64 = rec[1].trim().parse().map_err(|_| bad(format!("cannot parse {:?}", &rec[1])))?;
        out.push((rec[0].to_string(), v));
    }
    Ok(out)
}

/// Kendall tau between the score aggregates and the true values, matched by
/// label. AHs without an aggregate rank below every scored one.
pub fn rank_report(scores_path: &Path, true_values_path: &Path) -> Result<(f64, usize), PipelineError> {
    let sheet = io::read_scores(scores_path)?;
    let truth = read_true_values(true_values_path)?;
    let mut est = Vec::with_capacity(sheet.labels.len());
    let mut tru = Vec::with_capacity(sheet.labels.len());
    for (i, label) in sheet.labels.iter().enumerate() {
        let v = truth.iter().find(|(l, _)| l == label).ok_or_else(|| PipelineError::Input {
            path: true_values_path.to_path_buf(),
            msg: format!("no true value for {label:?}"),
        })?;
        est.push(sheet.aggregates[i].unwrap_or(f64::NEG_INFINITY));
        tru.push(v.1);
    }
    Ok((kendall_tau(&est, &tru)?, est.len()))
}

/// One analytic check against its pinned target.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn ok(&self) -> bool {
        (self.value - self.target).abs() <= self.tolerance
    }
}

/// The closed-form quantities for the 3-in-200 chain dataset.
pub fn analytic_checks() -> Result<Vec<Check>, TheoremError> {
    let hyper = PartitionMode::Hypergeometric;
    let p = partition_distribution(3, 200, hyper)?;
    Ok(vec![
        Check { name: "P(0 copies in train)", value: p[0], target: 0.12311, tolerance: 1e-3 },
        Check { name: "P(3 copies in train)", value: p[3], target: 0.12311, tolerance: 1e-3 },
        Check {
            name: "single-split failure",
            value: single_split_failure_prob(3, 200, hyper)?,
            target: 0.2462,
            tolerance: 5e-4,
        },
        Check {
            name: "successful split",
            value: successful_split_prob(3, 200, hyper)?,
            target: 0.7538,
            tolerance: 1e-3,
        },
        Check {
            name: "uniform-partition failure (6 copies)",
            value: single_split_failure_prob(6, 200, PartitionMode::Uniform)?,
            target: 2.0 / 7.0,
            tolerance: 1e-12,
        },
    ])
}

pub struct TheoremReport {
    pub checks: Vec<Check>,
    pub result: TheoremResult,
}

impl TheoremReport {
    pub fn analytic_ok(&self) -> bool {
        self.checks.iter().all(Check::ok)
    }

    pub fn lines(&self, k_values: &[usize]) -> Vec<String> {
        let mut lines = vec![format!("{:<40} {:>12} {:>12} {:>8}", "analytic", "value", "target", "ok")];
        for c in &self.checks {
            lines.push(format!("{:<40} {:>12.6} {:>12.6} {:>8}", c.name, c.value, c.target, c.ok()));
        }
        lines.push(String::new());
        lines.push(format!("{:<6} {:>10} {:>10} {:>12}", "K", "mc_fail", "mc_se", "analytic"));
        for (i, r) in self.result.monte_carlo.iter().enumerate() {
            let analytic = self
                .result
                .analytic
                .as_ref()
                .map(|a| if k_values[i] == 1 { a.single_split_failure } else { 1.0 - a.majority_bound[i].1 });
            let a = analytic.map_or("-".to_string(), |v| format!("{v:.4}"));
            lines.push(format!("{:<6} {:>10.4} {:>10.4} {:>12}", r.k, r.rate, r.se, a));
        }
        lines.push(format!("first-split success rate {:.4}", self.result.successful_split_rate));
        lines
    }
}

/// Analytic checks plus the configured Monte-Carlo experiment. With an
/// output directory, also writes a per-`K` CSV.
pub fn theorem_check<E: Executor>(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
    force: bool,
    exec: &E,
) -> Result<TheoremReport, PipelineError> {
    let tc = config.theorem()?;
    let checks = analytic_checks()?;
    let result = run_mc_experiment(&tc, exec)?;
    if let Some(dir) = out_dir {
        let mut out = Outputs::create(dir, &[THEOREM_FILE], force)?;
        let path = out.path(THEOREM_FILE);
        let p_ss = result.analytic.as_ref().map(|a| a.successful_split);
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| PipelineError::Input { path: path.clone(), msg: e.to_string() })?;
        let rows = std::iter::once(["k", "failures", "trials", "rate", "se", "majority_failure_bound"].map(String::from))
            .chain(result.monte_carlo.iter().map(|r| {
                [
                    r.k.to_string(),
                    r.failures.to_string(),
                    r.trials.to_string(),
                    io::fmt_f64(r.rate),
                    io::fmt_f64(r.se),
                    p_ss.map(|p| io::fmt_f64(1.0 - binomial_majority_bound(r.k, p))).unwrap_or_default(),
                ]
            }));
        for row in rows {
            w.write_record(&row).map_err(|e| PipelineError::Input { path: path.clone(), msg: e.to_string() })?;
        }
        w.flush().map_err(|e| PipelineError::Input { path: path.clone(), msg: e.to_string() })?;
        out.finish();
    }
    Ok(TheoremReport { checks, result })
}
