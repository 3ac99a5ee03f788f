//! Experiment configuration.
//!
//! One TOML file drives every subcommand. All randomness flows from the
//! top-level `seed`:
//!
//! * dataset generation uses `data.seed` if given, else `seed`; rollouts draw
//!   from `data_seed.derive([DATA])`, the chain's expected-composition
//!   builder derives the same stream internally;
//! * a random MDP's structure comes from `env_seed.derive([DATA, 0])`, where
//!   `env_seed` is `env.seed` or else `seed`;
//! * split plans, per-cell fits, bootstrap resamples and the retrain use the
//!   derivations documented on the selection module, rooted at `seed`;
//! * Monte-Carlo true values use `seed.derive([TRUE_VALUE])`;
//! * the theorem harness uses `seed` directly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use ssr_core::ah::{expand_grid, AhSpec, Algorithm};
use ssr_core::envs::{
    build_expected_composition_chain_dataset, make_chain_env, make_random_mdp, make_tutorbot_env, rollout,
    uniform_behavior_policy, ChainConfig, EnvError, TabularEnv, TutorBehavior, TutorBotConfig, TutorBotEnv,
};
use ssr_core::ope::Estimator;
use ssr_core::rng::{tags, RngSeed};
use ssr_core::select::{BcaMode, Strategy, DEFAULT_EPS_GRID, STRATEGY_IDS};
use ssr_core::theorem::{DatasetMode, TheoremConfig};
use ssr_core::TabularPolicy;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: impl Into<String>, msg: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.into(), msg: msg.to_string() }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub env: EnvSpec,
    pub data: DataSpec,
    pub grid: GridSpec,
    pub estimator: EstimatorSpec,
    pub strategy: StrategySpec,
    pub eval: EvalSpec,
    pub theorem: TheoremSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Chain(ChainSpec),
    Tutorbot(TutorBotSpec),
    RandomMdp(RandomMdpSpec),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Chain(ChainSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSpec {
    pub horizon: usize,
    pub low_reward: f64,
    pub high_reward: f64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        let c = ChainConfig::default();
        ChainSpec { horizon: c.horizon, low_reward: c.low_reward, high_reward: c.high_reward }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TutorBotSpec {
    pub mu_improv: f64,
    pub mu_base: f64,
    pub sd_improv: f64,
    pub sd_base: f64,
    pub pretest_dist: Option<[f64; 9]>,
    pub pressure: Option<[f64; 3]>,
    pub engagement: Option<[f64; 3]>,
    /// State-independent behavior distribution over the three actions.
    pub behavior: [f64; 3],
}

impl Default for TutorBotSpec {
    fn default() -> Self {
        let c = TutorBotConfig::default();
        TutorBotSpec {
            mu_improv: c.mu_improv,
            mu_base: c.mu_base,
            sd_improv: c.sd_improv,
            sd_base: c.sd_base,
            pretest_dist: None,
            pressure: None,
            engagement: None,
            behavior: [1.0 / 3.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub sparsity: f64,
    pub seed: Option<u64>,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        RandomMdpSpec { n_states: 6, n_actions: 2, horizon: 5, sparsity: 0.5, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub n_episodes: usize,
    pub seed: Option<u64>,
    /// Chain only: exactly `round(n / 2^H)` all-up trajectories.
    pub expected_composition: bool,
    /// Load this dataset instead of generating one.
    pub path: Option<PathBuf>,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec { n_episodes: 200, seed: None, expected_composition: true, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub cap: usize,
    /// Shorthand for horizon planners `A_h`.
    pub horizons: Vec<usize>,
    pub ah: Vec<AhEntry>,
    pub product: Vec<ProductEntry>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { cap: 1000, horizons: vec![], ah: vec![], product: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AhEntry {
    pub algorithm: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductEntry {
    pub algorithm: String,
    pub axes: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub id: String,
    pub clip_max: Option<f64>,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec { id: "wis".into(), clip_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySpec {
    pub id: String,
    pub k: usize,
    pub m: usize,
    pub b: usize,
    pub ratio: f64,
    pub mode: String,
    pub confidence: f64,
    pub eps_grid: Vec<f64>,
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec {
            id: "rrs".into(),
            k: 5,
            m: 5,
            b: 100,
            ratio: 0.5,
            mode: "mean".into(),
            confidence: 0.95,
            eps_grid: DEFAULT_EPS_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// TutorBot Monte-Carlo episodes for true values.
    pub mc_episodes: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { mc_episodes: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremSpec {
    pub horizon: usize,
    pub n_episodes: usize,
    pub n_copies: Option<usize>,
    pub k_values: Vec<usize>,
    pub n_trials: usize,
    pub ratio: f64,
    /// "expected-composition" or "rollout".
    pub dataset_mode: String,
}

impl Default for TheoremSpec {
    fn default() -> Self {
        let c = TheoremConfig::default();
        TheoremSpec {
            horizon: c.horizon,
            n_episodes: c.n_episodes,
            n_copies: c.n_copies,
            k_values: c.k_values,
            n_trials: c.n_trials,
            ratio: c.ratio,
            dataset_mode: "expected-composition".into(),
        }
    }
}

/// A simulatable environment together with its logging policy.
#[derive(Debug, Clone)]
pub enum Env {
    Tabular { env: TabularEnv, behavior: TabularPolicy, chain: bool },
    TutorBot { env: TutorBotEnv, behavior: TutorBehavior },
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn pipeline_seed(&self) -> RngSeed {
        RngSeed(self.seed)
    }

    pub fn data_seed(&self) -> RngSeed {
        RngSeed(self.data.seed.unwrap_or(self.seed))
    }

    /// Checks everything that can be checked without touching the disk.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env()?;
        self.ahs()?;
        self.estimator()?;
        self.strategy()?;
        if self.data.path.is_none() && self.data.n_episodes == 0 {
            return Err(invalid("data.n_episodes", "must be positive"));
        }
        if self.eval.mc_episodes < 2 {
            return Err(invalid("eval.mc_episodes", "must be at least 2"));
        }
        Ok(())
    }

    pub fn env(&self) -> Result<Env, ConfigError> {
        let env_err = |e: EnvError| invalid("env", e);
        match &self.env {
            EnvSpec::Chain(c) => {
                let env = make_chain_env(ChainConfig {
                    horizon: c.horizon,
                    low_reward: c.low_reward,
                    high_reward: c.high_reward,
                })
                .map_err(env_err)?;
                let behavior = uniform_behavior_policy(&env);
                Ok(Env::Tabular { env, behavior, chain: true })
            }
            EnvSpec::RandomMdp(r) => {
                let seed = RngSeed(r.seed.unwrap_or(self.seed)).derive(&[tags::DATA, 0]);
                let env = make_random_mdp(r.n_states, r.n_actions, r.horizon, r.sparsity, seed).map_err(env_err)?;
                let behavior = uniform_behavior_policy(&env);
                Ok(Env::Tabular { env, behavior, chain: false })
            }
            EnvSpec::Tutorbot(t) => {
                let d = TutorBotConfig::default();
                let config = TutorBotConfig {
                    mu_improv: t.mu_improv,
                    mu_base: t.mu_base,
                    sd_improv: t.sd_improv,
                    sd_base: t.sd_base,
                    pretest_dist: t.pretest_dist.unwrap_or(d.pretest_dist),
                    pressure: t.pressure.unwrap_or(d.pressure),
                    engagement: t.engagement.unwrap_or(d.engagement),
                    buckets: d.buckets,
                };
                let env = make_tutorbot_env(config).map_err(env_err)?;
                let b = t.behavior;
                if b.iter().any(|p| !(0.0..=1.0).contains(p)) || (b.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid("env.behavior", "must be a probability vector"));
                }
                Ok(Env::TutorBot { env, behavior: TutorBehavior::StateIndependent(b) })
            }
        }
    }

    /// Explicit entries first, then `horizons`, then each product in order.
    /// An empty grid on the chain means `A_1..A_H`.
    pub fn ahs(&self) -> Result<Vec<AhSpec>, ConfigError> {
        let g = &self.grid;
        let algorithm = |key: String, id: &str| id.parse::<Algorithm>().map_err(|e| invalid(key, e));
        let mut out = Vec::new();
        for (i, entry) in g.ah.iter().enumerate() {
            let alg = algorithm(format!("grid.ah[{i}].algorithm"), &entry.algorithm)?;
            let spec = AhSpec::new(alg, entry.params.clone(), entry.label.clone())
                .map_err(|e| invalid(format!("grid.ah[{i}].params"), e))?;
            out.push(spec);
        }
        for &h in &g.horizons {
            if h == 0 {
                return Err(invalid("grid.horizons", "horizons start at 1"));
            }
            out.push(AhSpec::horizon(h));
        }
        for (i, p) in g.product.iter().enumerate() {
            let alg = algorithm(format!("grid.product[{i}].algorithm"), &p.algorithm)?;
            let left = g.cap.saturating_sub(out.len());
            let specs = expand_grid(alg, &p.axes, left).map_err(|e| invalid(format!("grid.product[{i}].axes"), e))?;
            out.extend(specs);
        }
        if out.len() > g.cap {
            return Err(invalid("grid", format!("{} AH pairs exceed the cap of {}", out.len(), g.cap)));
        }
        if out.is_empty() {
            match &self.env {
                EnvSpec::Chain(c) => out.extend((1..=c.horizon).map(AhSpec::horizon)),
                _ => return Err(invalid("grid", "no AH pairs configured")),
            }
        }
        let mut labels: Vec<&str> = out.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("grid", format!("duplicate AH label {:?}", w[0])));
        }
        Ok(out)
    }

    pub fn estimator(&self) -> Result<Estimator, ConfigError> {
        Estimator::parse(&self.estimator.id, self.estimator.clip_max).map_err(|e| invalid("estimator.id", e))
    }

    pub fn strategy(&self) -> Result<Strategy, ConfigError> {
        let s = &self.strategy;
        let ratio = || {
            if s.ratio > 0.0 && s.ratio < 1.0 {
                Ok(s.ratio)
            } else {
                Err(invalid("strategy.ratio", "must lie in (0, 1)"))
            }
        };
        let positive = |key: &str, v: usize| if v == 0 { Err(invalid(key, "must be positive")) } else { Ok(v) };
        Ok(match s.id.as_str() {
            "one-split" => Strategy::OneSplit { ratio: ratio()? },
            "rrs" => Strategy::Rrs { k: positive("strategy.k", s.k)?, ratio: ratio()? },
            "cv" => {
                if s.m < 2 {
                    return Err(invalid("strategy.m", "needs at least 2 folds"));
                }
                Strategy::Cv { m: s.m }
            }
            "nested-cv" => Strategy::NestedCv { k: positive("strategy.k", s.k)? },
            "bca" => {
                let mode = BcaMode::parse(&s.mode)
                    .ok_or_else(|| invalid("strategy.mode", format!("unknown mode {:?}; expected mean, lower or upper", s.mode)))?;
                if !(s.confidence > 0.0 && s.confidence < 1.0) {
                    return Err(invalid("strategy.confidence", "must lie in (0, 1)"));
                }
                Strategy::Bca { ratio: ratio()?, b: positive("strategy.b", s.b)?, mode, confidence: s.confidence }
            }
            "bvft" | "bvft-fqe" | "pi-fqe" | "pi-x-fqe" => {
                if s.eps_grid.is_empty() || s.eps_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(invalid("strategy.eps_grid", "must be a non-empty list of positive numbers"));
                }
                Strategy::Bvft { ratio: ratio()?, eps_grid: s.eps_grid.clone() }
            }
            other => {
                return Err(invalid(
                    "strategy.id",
                    format!("unknown strategy {other:?}; expected one of {}", STRATEGY_IDS.join(", ")),
                ))
            }
        })
    }

    pub fn theorem(&self) -> Result<TheoremConfig, ConfigError> {
        let t = &self.theorem;
        let dataset_mode = match t.dataset_mode.as_str() {
            "expected-composition" => DatasetMode::ExpectedComposition,
            "rollout" => DatasetMode::Rollout,
            other => {
                return Err(invalid(
                    "theorem.dataset_mode",
                    format!("unknown mode {other:?}; expected expected-composition or rollout"),
                ))
            }
        };
        if t.n_trials == 0 {
            return Err(invalid("theorem.n_trials", "must be positive"));
        }
        if !(t.ratio > 0.0 && t.ratio < 1.0) {
            return Err(invalid("theorem.ratio", "must lie in (0, 1)"));
        }
        Ok(TheoremConfig {
            horizon: t.horizon,
            n_episodes: t.n_episodes,
            n_copies: t.n_copies,
            k_values: t.k_values.clone(),
            n_trials: t.n_trials,
            ratio: t.ratio,
            dataset_mode,
            seed: self.pipeline_seed(),
        })
    }
}

/// A dataset plus, for TutorBot, the per-step observations.
pub type Generated = (ssr_core::Dataset, Option<Vec<Vec<ssr_core::envs::TutorBotObs>>>);

/// Generates the configured dataset; TutorBot also returns the observations.
pub fn generate(
    config: &ExperimentConfig,
    env: &Env,
) -> Result<Generated, ConfigError> {
    let n = config.data.n_episodes;
    let seed = config.data_seed();
    let env_err = |e: EnvError| invalid("data", e);
    match env {
        Env::Tabular { env, chain: true, .. } if config.data.expected_composition => {
            Ok((build_expected_composition_chain_dataset(env, n, seed).map_err(env_err)?, None))
        }
        Env::Tabular { env, behavior, chain } => {
            let mut ds = rollout(env, behavior, n, seed.derive(&[tags::DATA])).map_err(env_err)?;
            if *chain {
                ds.env_tag = "chain".into();
            }
            Ok((ds, None))
        }
        Env::TutorBot { env, behavior } => {
            let t = ssr_core::envs::tutorbot_rollout(env, behavior, n, seed.derive(&[tags::DATA])).map_err(env_err)?;
            Ok((t.dataset, Some(t.aux)))
        }
    }
}
