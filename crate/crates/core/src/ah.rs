//! Algorithm/hyperparameter (AH) pairs, the unit being selected.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AhError {
    #[error("unknown algorithm id `{0}`")]
    UnknownAlgorithm(String),
    #[error("{algorithm}: missing hyperparameter `{name}`")]
    Missing { algorithm: Algorithm, name: &'static str },
    #[error("{algorithm}: unknown hyperparameter `{name}`")]
    Unknown { algorithm: Algorithm, name: String },
    #[error("{algorithm}: hyperparameter `{name}` = {value} is invalid ({why})")]
    Invalid { algorithm: Algorithm, name: &'static str, value: f64, why: &'static str },
    #[error("grid expands to {size} AH pairs, above the cap of {cap}")]
    GridTooLarge { size: usize, cap: usize },
}

/// Registered offline learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// MLE model plus `h`-step planning.
    Horizon,
    Bc,
    Bcq,
    MbsQi,
    Pmdp,
    Pois,
    BcPois,
    BcMiniPois,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Horizon,
        Algorithm::Bc,
        Algorithm::Bcq,
        Algorithm::MbsQi,
        Algorithm::Pmdp,
        Algorithm::Pois,
        Algorithm::BcPois,
        Algorithm::BcMiniPois,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Horizon => "horizon",
            Algorithm::Bc => "bc",
            Algorithm::Bcq => "bcq",
            Algorithm::MbsQi => "mbs-qi",
            Algorithm::Pmdp => "p-mdp",
            Algorithm::Pois => "pois",
            Algorithm::BcPois => "bc-pois",
            Algorithm::BcMiniPois => "bc-mini-pois",
        }
    }

    pub fn schema(self) -> &'static [ParamSpec] {
        use ParamKind::*;
        const fn p(name: &'static str, kind: ParamKind, default: Option<f64>) -> ParamSpec {
            ParamSpec { name, kind, default }
        }
        const POIS: &[ParamSpec] = &[
            p("alpha", Fraction, None),
            p("lambda", NonNegative, None),
            p("lr", Positive, Some(0.1)),
            p("epochs", Count, Some(20.0)),
            p("batch", CountOrZero, Some(0.0)),
            p("wis", Flag, Some(0.0)),
        ];
        const MINI_POIS: &[ParamSpec] = &[
            p("alpha", Fraction, None),
            p("lambda", NonNegative, None),
            p("lr", Positive, Some(0.1)),
            p("epochs", Count, Some(20.0)),
            p("batch", CountOrZero, Some(4.0)),
            p("wis", Flag, Some(0.0)),
        ];
        const HORIZON: &[ParamSpec] = &[p("h", Count, None)];
        const BC: &[ParamSpec] = &[p("alpha", Fraction, None)];
        const BCQ: &[ParamSpec] = &[p("delta", Fraction, None), p("iterations", Count, Some(25.0))];
        const MBS: &[ParamSpec] = &[
            p("delta", Fraction, None),
            p("beta", Count, None),
            p("iterations", Count, Some(25.0)),
        ];
        const PMDP: &[ParamSpec] = &[
            p("ensembles", Count, None),
            p("beta", NonNegative, None),
            p("temperature", Positive, None),
            p("iterations", Count, Some(1000.0)),
            p("confidence", OpenUnit, Some(0.1)),
            p("epochs", Count, Some(1.0)),
            p("clamp_lo", Real, Some(-1.0)),
            p("clamp_hi", Real, Some(1.0)),
        ];
        match self {
            Algorithm::Horizon => HORIZON,
            Algorithm::Bc => BC,
            Algorithm::Bcq => BCQ,
            Algorithm::MbsQi => MBS,
            Algorithm::Pmdp => PMDP,
            Algorithm::Pois | Algorithm::BcPois => POIS,
            Algorithm::BcMiniPois => MINI_POIS,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = AhError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| AhError::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Integer >= 1.
    Count,
    /// Integer >= 0.
    CountOrZero,
    /// Real in [0, 1).
    Fraction,
    /// Real in (0, 1).
    OpenUnit,
    NonNegative,
    Positive,
    /// 0 or 1.
    Flag,
    Real,
}

impl ParamKind {
    fn check(self, v: f64) -> Result<(), &'static str> {
        let integral = v == crate::math::floor(v);
        let ok = match self {
            ParamKind::Count => integral && v >= 1.0,
            ParamKind::CountOrZero => integral && v >= 0.0,
            ParamKind::Fraction => (0.0..1.0).contains(&v),
            ParamKind::OpenUnit => v > 0.0 && v < 1.0,
            ParamKind::NonNegative => v >= 0.0,
            ParamKind::Positive => v > 0.0,
            ParamKind::Flag => v == 0.0 || v == 1.0,
            ParamKind::Real => true,
        };
        if !v.is_finite() {
            return Err("not finite");
        }
        if ok {
            Ok(())
        } else {
            Err(match self {
                ParamKind::Count => "expected an integer >= 1",
                ParamKind::CountOrZero => "expected an integer >= 0",
                ParamKind::Fraction => "expected a value in [0, 1)",
                ParamKind::OpenUnit => "expected a value in (0, 1)",
                ParamKind::NonNegative => "expected a value >= 0",
                ParamKind::Positive => "expected a value > 0",
                ParamKind::Flag => "expected 0 or 1",
                ParamKind::Real => unreachable!(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    /// `None` means required.
    pub default: Option<f64>,
}

/// A learner plus a complete hyperparameter assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct AhSpec {
    pub algorithm: Algorithm,
    pub params: BTreeMap<String, f64>,
    pub label: String,
}

impl AhSpec {
    /// Validates `params` against the learner's schema and fills defaults.
    pub fn new(
        algorithm: Algorithm,
        params: impl IntoIterator<Item = (String, f64)>,
        label: Option<String>,
    ) -> Result<Self, AhError> {
        let mut params: BTreeMap<String, f64> = params.into_iter().collect();
        let schema = algorithm.schema();
        if let Some(name) = params.keys().find(|k| !schema.iter().any(|p| p.name == k.as_str())) {
            return Err(AhError::Unknown { algorithm, name: name.clone() });
        }
        for spec in schema {
            let value = match (params.get(spec.name), spec.default) {
                (Some(&v), _) => v,
                (None, Some(d)) => {
                    params.insert(spec.name.to_string(), d);
                    d
                }
                (None, None) => return Err(AhError::Missing { algorithm, name: spec.name }),
            };
            spec.kind
                .check(value)
                .map_err(|why| AhError::Invalid { algorithm, name: spec.name, value, why })?;
        }
        let label = label.unwrap_or_else(|| default_label(algorithm, &params));
        Ok(AhSpec { algorithm, params, label })
    }

    /// Shorthand for the horizon-`h` planner labelled `A_h`.
    pub fn horizon(h: usize) -> Self {
        AhSpec::new(
            Algorithm::Horizon,
            [("h".to_string(), h as f64)],
            Some(format!("A_{h}")),
        )
        .expect("h >= 1")
    }

    pub fn get(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn get_usize(&self, name: &str) -> usize {
        self.params[name] as usize
    }
}

fn default_label(algorithm: Algorithm, params: &BTreeMap<String, f64>) -> String {
    let mut label = algorithm.id().to_string();
    for (k, v) in params {
        label.push_str(&format!("|{k}={v}"));
    }
    label
}

/// Cross product of per-parameter value lists, in lexicographic order of
/// parameter name with the last name varying fastest.
pub fn expand_grid(
    algorithm: Algorithm,
    axes: &BTreeMap<String, Vec<f64>>,
    cap: usize,
) -> Result<Vec<AhSpec>, AhError> {
    let size = axes.values().map(Vec::len).product::<usize>();
    if size > cap {
        return Err(AhError::GridTooLarge { size, cap });
    }
    let names: Vec<&String> = axes.keys().collect();
    let mut out = Vec::with_capacity(size);
    for mut flat in 0..size {
        let mut params = Vec::with_capacity(names.len());
        for name in names.iter().rev() {
            let values = &axes[*name];
            params.push(((*name).clone(), values[flat % values.len()]));
            flat /= values.len();
        }
        out.push(AhSpec::new(algorithm, params, None)?);
    }
    Ok(out)
}
