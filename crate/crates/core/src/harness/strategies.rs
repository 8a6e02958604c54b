//! Expert and Reality strategies for scenario runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::primitives::{Decision, DecisionDomain, Distribution, Game, LossVector};
use crate::sampling;
use crate::secondguess::{ContrarianExpert, ExpertRef, FlipExpert, IdentityExpert, SecondGuessExpert, ShrinkExpert};

use super::config::{ExpertSpec, RealitySpec};

/// What a plain expert sees before deciding.
#[derive(Debug, Clone, Copy)]
pub struct ExpertContext<'a> {
    /// 1-based round number.
    pub step: usize,
    pub domain: DecisionDomain,
    /// Outcomes of earlier rounds as distributions.
    pub history: &'a [Distribution],
}

pub type PlainCallback = Arc<dyn Fn(&ExpertContext<'_>) -> Decision + Send + Sync>;

/// Named expert callbacks that scenarios can refer to with `kind = "callback"`.
#[derive(Clone, Default)]
pub struct Registry {
    plain: BTreeMap<String, PlainCallback>,
    second_guess: BTreeMap<String, ExpertRef>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("plain", &self.plain.keys().collect::<Vec<_>>())
            .field("second_guess", &self.second_guess.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// The built-in entries: `uniform`, `last-outcome`, and the
    /// second-guessing `contrarian`, `identity`, `flip`.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register_plain("uniform", Arc::new(|ctx: &ExpertContext<'_>| uniform_decision(ctx.domain)));
        r.register_plain(
            "last-outcome",
            Arc::new(|ctx: &ExpertContext<'_>| match ctx.history.last() {
                Some(p) => distribution_to_decision(ctx.domain, p),
                None => uniform_decision(ctx.domain),
            }),
        );
        r.register_second_guess("contrarian", Arc::new(ContrarianExpert));
        r.register_second_guess("identity", Arc::new(IdentityExpert));
        r.register_second_guess("flip", Arc::new(FlipExpert));
        r
    }

    pub fn register_plain(&mut self, name: &str, f: PlainCallback) {
        self.plain.insert(name.to_string(), f);
    }

    pub fn register_second_guess(&mut self, name: &str, e: ExpertRef) {
        self.second_guess.insert(name.to_string(), e);
    }
}

pub fn uniform_decision(domain: DecisionDomain) -> Decision {
    match domain {
        DecisionDomain::UnitInterval => Decision::scalar(0.5),
        DecisionDomain::Simplex(m) => Decision(vec![1.0 / m as f64; m]),
    }
}

pub fn distribution_to_decision(domain: DecisionDomain, p: &Distribution) -> Decision {
    match domain {
        DecisionDomain::UnitInterval => Decision::scalar(p.get(1)),
        DecisionDomain::Simplex(_) => Decision(p.probs().to_vec()),
    }
}

pub fn decision_to_distribution(domain: DecisionDomain, d: &Decision) -> Result<Distribution> {
    match domain {
        DecisionDomain::UnitInterval => Distribution::binary(d.0[0]),
        DecisionDomain::Simplex(_) => Distribution::from_weights(d.0.clone()),
    }
}

/// One configured expert.
pub enum Expert {
    Constant(Decision),
    IidRandom(Box<ChaCha8Rng>),
    TrailingAverage(Option<usize>),
    Plain(PlainCallback),
    SecondGuess(ExpertRef),
}

impl fmt::Debug for Expert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expert::Constant(d) => write!(f, "Constant({:?})", d.0),
            Expert::IidRandom(_) => f.write_str("IidRandom"),
            Expert::TrailingAverage(w) => write!(f, "TrailingAverage({w:?})"),
            Expert::Plain(_) => f.write_str("Plain"),
            Expert::SecondGuess(e) => write!(f, "SecondGuess({})", e.name()),
        }
    }
}

impl Expert {
    pub fn from_spec(spec: &ExpertSpec, domain: DecisionDomain, rng: ChaCha8Rng, registry: &Registry) -> Result<Self> {
        let check = |d: &[f64]| -> Result<Decision> {
            let d = Decision(d.to_vec());
            if !domain.contains(&d, 1e-12) {
                return Err(Error::Config(format!("decision {:?} is outside the game's decision set", d.0)));
            }
            Ok(d)
        };
        Ok(match spec {
            ExpertSpec::Constant { decision } => Expert::Constant(check(decision)?),
            ExpertSpec::IidRandom => Expert::IidRandom(Box::new(rng)),
            ExpertSpec::TrailingAverage { window } => Expert::TrailingAverage(*window),
            ExpertSpec::SecondGuessContrarian => Expert::SecondGuess(Arc::new(ContrarianExpert)),
            ExpertSpec::SecondGuessIdentity => Expert::SecondGuess(Arc::new(IdentityExpert)),
            ExpertSpec::SecondGuessFlip => {
                if domain != DecisionDomain::UnitInterval {
                    return Err(Error::Config("second-guess-flip needs two outcomes".into()));
                }
                Expert::SecondGuess(Arc::new(FlipExpert))
            }
            ExpertSpec::SecondGuessShrink { target, rate } => {
                if !(0.0..=1.0).contains(rate) {
                    return Err(Error::Config(format!("shrink rate {rate} outside [0, 1]")));
                }
                Expert::SecondGuess(Arc::new(ShrinkExpert { target: check(target)?, rate: *rate }))
            }
            ExpertSpec::Callback { name } => {
                if let Some(f) = registry.plain.get(name) {
                    Expert::Plain(f.clone())
                } else if let Some(e) = registry.second_guess.get(name) {
                    Expert::SecondGuess(e.clone())
                } else {
                    return Err(Error::Config(format!("no callback named {name:?}")));
                }
            }
        })
    }

    /// The expert's decision for this round; `None` for second-guessing experts.
    pub fn decide(&mut self, ctx: &ExpertContext<'_>) -> Option<Decision> {
        match self {
            Expert::Constant(d) => Some(d.clone()),
            Expert::IidRandom(rng) => Some(sampling::random_decision(rng, ctx.domain)),
            Expert::TrailingAverage(window) => {
                let m = match ctx.domain {
                    DecisionDomain::UnitInterval => 2,
                    DecisionDomain::Simplex(m) => m,
                };
                let take = window.unwrap_or(ctx.history.len()).min(ctx.history.len());
                let recent = &ctx.history[ctx.history.len() - take..];
                let mut counts = vec![0.5; m];
                for p in recent {
                    for (c, x) in counts.iter_mut().zip(p.probs()) {
                        *c += x;
                    }
                }
                let total: f64 = counts.iter().sum();
                let freq = Distribution::from_weights(counts.iter().map(|c| c / total).collect()).ok()?;
                Some(distribution_to_decision(ctx.domain, &freq))
            }
            Expert::Plain(f) => Some(f(ctx)),
            Expert::SecondGuess(_) => None,
        }
    }

    /// The expert as a second-guessing map; plain experts become constants for this round.
    pub fn as_second_guess(&mut self, ctx: &ExpertContext<'_>) -> ExpertRef {
        match self {
            Expert::SecondGuess(e) => e.clone(),
            other => Arc::new(crate::secondguess::ConstantExpert(other.decide(ctx).expect("plain expert decides"))),
        }
    }
}

/// The configured outcome generator.
#[derive(Debug)]
pub struct Reality {
    spec: RealitySpec,
    rng: ChaCha8Rng,
    step: usize,
}

impl Reality {
    pub fn new(spec: RealitySpec, rng: ChaCha8Rng) -> Self {
        Reality { spec, rng, step: 0 }
    }

    /// The next outcome, given the Learner's loss vector over base outcomes.
    pub fn next(&mut self, m: usize, learner: &LossVector) -> Result<Distribution> {
        self.step += 1;
        let index = match &self.spec {
            RealitySpec::Iid { probs } => {
                let u: f64 = self.rng.random();
                let mut acc = 0.0;
                let mut pick = m - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
            RealitySpec::Adversarial => {
                let v = learner.values();
                let mut best = 0;
                for (i, x) in v.iter().enumerate() {
                    if *x > v[best] {
                        best = i;
                    }
                }
                best
            }
            RealitySpec::Fixed { sequence } => sequence[(self.step - 1) % sequence.len()],
            RealitySpec::SimplexDirichlet { alpha } => {
                return Distribution::from_weights(sampling::dirichlet(&mut self.rng, alpha));
            }
        };
        Ok(Distribution::point_mass(m, index))
    }
}

/// Outcome index of a point mass.
pub fn vertex_index(p: &Distribution) -> Option<usize> {
    p.probs().iter().position(|x| *x == 1.0)
}

/// Largest sup-norm change in an expert's output when the Learner's decision
/// moves by `1e-7`, over random decisions. Continuous experts give values
/// near zero.
pub fn continuity_probe(expert: &dyn SecondGuessExpert, game: &dyn Game, samples: usize, seed: u64) -> f64 {
    let mut rng = sampling::stream(seed, u64::MAX);
    let h = 1e-7;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let d = sampling::random_decision(&mut rng, game.domain());
        let e = match game.domain() {
            DecisionDomain::UnitInterval => Decision::scalar((d.0[0] + h).min(1.0)),
            DecisionDomain::Simplex(_) => {
                let mut v = d.0.clone();
                let (i, j) = (0, 1);
                let step = h.min(v[j]);
                v[i] += step;
                v[j] -= step;
                Decision(v)
            }
        };
        let a = expert.advise(game, &d, &game.prediction(&d));
        let b = expert.advise(game, &e, &game.prediction(&e));
        worst = worst.max(crate::aggregating::sup_distance(&a, &b));
    }
    worst
}
