//! Scenario configuration, read from TOML.
//!
//! ```toml
//! name = "log-aa"
//! algorithm = "aa"          # aa | dfa | sg-dfa | sg-aa | ml-dfa | simplex-dfa
//! horizon = 1000
//! seed = 42
//! eta = 1.0                 # optional: the game's largest mixable rate, else 1
//! c = 1.0                   # optional: 1 when mixable at eta, else the realizability constant
//! prior = [0.5, 0.5]        # optional: uniform
//!
//! [game]
//! name = "log"
//! m = 2
//!
//! [[experts]]
//! kind = "constant"
//! decision = [0.2]
//!
//! [[experts]]
//! kind = "iid-random"
//!
//! [reality]
//! kind = "iid"
//! probs = [0.5, 0.5]
//!
//! [solver]
//! epsilon = 1e-6
//! tol = 1e-12
//! rule = "midpoint"          # midpoint | root
//! best_effort = false
//! ```
//!
//! Expert kinds: `constant`, `iid-random`, `trailing-average`,
//! `second-guess-contrarian`, `second-guess-identity`, `second-guess-flip`,
//! `second-guess-shrink`, `callback`. Reality kinds: `iid`, `adversarial`,
//! `fixed`, `simplex-dirichlet`.
//!
//! For `ml-dfa`, `[[evaluators]]` lists loss functions; every expert is
//! scored once by each evaluator, giving `experts * evaluators` evaluated
//! experts in evaluator-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::defensive::{BinaryRule, SolverConfig, DEFAULT_EPSILON, DEFAULT_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Aa,
    Dfa,
    SgDfa,
    SgAa,
    MlDfa,
    SimplexDfa,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Aa => "aa",
            Algorithm::Dfa => "dfa",
            Algorithm::SgDfa => "sg-dfa",
            Algorithm::SgAa => "sg-aa",
            Algorithm::MlDfa => "ml-dfa",
            Algorithm::SimplexDfa => "simplex-dfa",
        }
    }

    pub fn second_guessing(self) -> bool {
        matches!(self, Algorithm::SgDfa | Algorithm::SgAa)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub name: String,
    #[serde(default = "two")]
    pub m: usize,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExpertSpec {
    Constant {
        decision: Vec<f64>,
    },
    IidRandom,
    /// Smoothed frequency of the last `window` outcomes (all of them when absent).
    TrailingAverage {
        #[serde(default)]
        window: Option<usize>,
    },
    SecondGuessContrarian,
    SecondGuessIdentity,
    SecondGuessFlip,
    SecondGuessShrink {
        target: Vec<f64>,
        rate: f64,
    },
    /// Looked up by name in the run's registry.
    Callback {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSpec {
    pub game: String,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RealitySpec {
    Iid { probs: Vec<f64> },
    /// The outcome maximizing the Learner's loss, lowest index on ties.
    Adversarial,
    /// Cycles through the sequence.
    Fixed { sequence: Vec<usize> },
    SimplexDirichlet { alpha: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleSpec {
    Midpoint,
    Root,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub rule: Option<RuleSpec>,
    #[serde(default)]
    pub best_effort: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { epsilon: DEFAULT_EPSILON, tol: DEFAULT_TOL, rule: None, best_effort: false }
    }
}

/// A scenario whose bound is expected to break: it passes when the largest
/// regret reaches `min_regret_rate * horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedFailure {
    pub min_regret_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub algorithm: Algorithm,
    pub horizon: usize,
    pub seed: u64,
    pub game: GameSpec,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    pub experts: Vec<ExpertSpec>,
    #[serde(default)]
    pub evaluators: Vec<EvaluatorSpec>,
    pub reality: RealitySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub expect_failure: Option<ExpectedFailure>,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Number of experts the algorithm weighs.
    pub fn weighted_experts(&self) -> usize {
        if self.algorithm == Algorithm::MlDfa {
            self.experts.len() * self.evaluators.len().max(1)
        } else {
            self.experts.len()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("scenario {:?}: {msg}", self.name)));
        if self.experts.is_empty() {
            return bad("at least one expert is required".into());
        }
        if self.game.m < 2 {
            return bad(format!("game needs at least two outcomes, got {}", self.game.m));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("eta = {eta} must be positive"));
            }
        }
        if let Some(c) = self.c {
            if !(c >= 1.0 && c.is_finite()) {
                return bad(format!("c = {c} must be at least 1"));
            }
        }
        if let Some(p) = &self.prior {
            if p.len() != self.weighted_experts() {
                return bad(format!("prior has {} entries for {} experts", p.len(), self.weighted_experts()));
            }
        }
        if !self.algorithm.second_guessing() {
            for e in &self.experts {
                if matches!(
                    e,
                    ExpertSpec::SecondGuessContrarian
                        | ExpertSpec::SecondGuessIdentity
                        | ExpertSpec::SecondGuessFlip
                        | ExpertSpec::SecondGuessShrink { .. }
                ) {
                    return bad(format!("second-guessing experts need sg-dfa or sg-aa, not {}", self.algorithm.name()));
                }
            }
        }
        if self.algorithm == Algorithm::MlDfa && self.evaluators.is_empty() {
            return bad("ml-dfa needs at least one evaluator".into());
        }
        match &self.reality {
            RealitySpec::Iid { probs } if probs.len() != self.game.m => {
                return bad(format!("iid reality has {} probabilities for {} outcomes", probs.len(), self.game.m));
            }
            RealitySpec::Fixed { sequence } => {
                if sequence.is_empty() {
                    return bad("fixed reality needs a nonempty sequence".into());
                }
                if let Some(o) = sequence.iter().find(|o| **o >= self.game.m) {
                    return bad(format!("outcome {o} out of range"));
                }
            }
            RealitySpec::SimplexDirichlet { alpha } => {
                if alpha.len() != self.game.m || alpha.iter().any(|a| a.is_nan() || *a <= 0.0) {
                    return bad("dirichlet concentrations must be positive, one per outcome".into());
                }
                if self.algorithm != Algorithm::SimplexDfa {
                    return bad("simplex-dirichlet reality needs simplex-dfa".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let default_rule = if self.algorithm.second_guessing() { BinaryRule::Root } else { BinaryRule::Midpoint };
        SolverConfig {
            epsilon: self.solver.epsilon,
            tol: self.solver.tol,
            binary_rule: match self.solver.rule {
                Some(RuleSpec::Midpoint) => BinaryRule::Midpoint,
                Some(RuleSpec::Root) => BinaryRule::Root,
                None => default_rule,
            },
            best_effort: self.solver.best_effort,
        }
    }
}
