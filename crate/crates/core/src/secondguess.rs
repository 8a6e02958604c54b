//! Experts that see the Learner's prediction before announcing their own.
//!
//! Defensive forecasting handles them directly: the step function simply
//! evaluates each expert at the candidate prediction. The aggregating
//! algorithm needs a fixed point of "mix the experts' reactions, then retract".

use std::fmt;
use std::sync::Arc;

use crate::aggregating::{log_prior, project_boundary, retraction, sup_distance};
use crate::defensive::{log_q_term, mix_terms, solve, SolverConfig, Supermartingale};
use crate::error::{Error, Result};
use crate::losses::{default_proper_loss, ProperLoss};
use crate::numeric;
use crate::primitives::{Decision, DecisionDomain, Distribution, Game, GameRef, LossVector, MEMBERSHIP_TOL};

/// An expert whose prediction is a function of the Learner's prediction.
pub trait SecondGuessExpert: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// The expert's loss vector given the Learner's decision and its loss vector.
    fn advise(&self, game: &dyn Game, learner_decision: &Decision, learner_prediction: &LossVector) -> LossVector;

    /// Whether `advise` is continuous in the Learner's prediction.
    fn is_continuous(&self) -> bool {
        true
    }
}

pub type ExpertRef = Arc<dyn SecondGuessExpert>;

/// Ignores the Learner and announces a fixed decision.
#[derive(Debug, Clone)]
pub struct ConstantExpert(pub Decision);

impl SecondGuessExpert for ConstantExpert {
    fn name(&self) -> String {
        format!("constant{:?}", self.0 .0)
    }

    fn advise(&self, game: &dyn Game, _: &Decision, _: &LossVector) -> LossVector {
        game.prediction(&self.0)
    }
}

/// Repeats the Learner's prediction.
#[derive(Debug, Clone, Copy)]
pub struct IdentityExpert;

impl SecondGuessExpert for IdentityExpert {
    fn name(&self) -> String {
        "identity".into()
    }

    fn advise(&self, _: &dyn Game, _: &Decision, learner_prediction: &LossVector) -> LossVector {
        learner_prediction.clone()
    }
}

/// Mirrors the Learner's decision: `1 - p` for two outcomes, and
/// `(1 - pi(omega)) / (m - 1)` on a simplex.
#[derive(Debug, Clone, Copy)]
pub struct ContrarianExpert;

pub(crate) fn mirror(domain: DecisionDomain, d: &Decision) -> Decision {
    match domain {
        DecisionDomain::UnitInterval => Decision::scalar(1.0 - d.0[0]),
        DecisionDomain::Simplex(m) => Decision(d.0.iter().map(|x| (1.0 - x) / (m - 1) as f64).collect()),
    }
}

impl SecondGuessExpert for ContrarianExpert {
    fn name(&self) -> String {
        "contrarian".into()
    }

    fn advise(&self, game: &dyn Game, learner_decision: &Decision, _: &LossVector) -> LossVector {
        game.prediction(&mirror(game.domain(), learner_decision))
    }
}

/// Jumps to the opposite extreme of the Learner's rounded decision. Discontinuous at `p = 1/2`.
#[derive(Debug, Clone, Copy)]
pub struct FlipExpert;

impl SecondGuessExpert for FlipExpert {
    fn name(&self) -> String {
        "flip".into()
    }

    fn advise(&self, game: &dyn Game, learner_decision: &Decision, _: &LossVector) -> LossVector {
        let p = if learner_decision.0[0] >= 0.5 { 0.0 } else { 1.0 };
        game.prediction(&Decision::scalar(p))
    }

    fn is_continuous(&self) -> bool {
        false
    }
}

/// Moves the Learner's decision a fixed fraction toward a target.
#[derive(Debug, Clone)]
pub struct ShrinkExpert {
    pub target: Decision,
    pub rate: f64,
}

impl SecondGuessExpert for ShrinkExpert {
    fn name(&self) -> String {
        format!("shrink{:?}@{}", self.target.0, self.rate)
    }

    fn advise(&self, game: &dyn Game, learner_decision: &Decision, _: &LossVector) -> LossVector {
        let d = learner_decision
            .0
            .iter()
            .zip(&self.target.0)
            .map(|(x, t)| (1.0 - self.rate) * x + self.rate * t)
            .collect();
        game.prediction(&Decision(d))
    }
}

/// Evaluates every expert at the Learner's decision.
fn react(experts: &[ExpertRef], game: &dyn Game, decision: &Decision, prediction: &LossVector) -> Vec<LossVector> {
    experts.iter().map(|e| e.advise(game, decision, prediction)).collect()
}

/// Defensive forecasting against second-guessing experts.
#[derive(Debug, Clone)]
pub struct SgDfa {
    game: GameRef,
    proper: ProperLoss,
    c: f64,
    eta: f64,
    solver: SolverConfig,
    sm: Supermartingale,
    learner_loss: f64,
    lambda_loss: f64,
    expert_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgPrediction {
    pub pi: Distribution,
    pub lambda: LossVector,
    pub decision: Decision,
    pub prediction: LossVector,
    /// Each expert's reaction to `lambda`.
    pub advice: Vec<LossVector>,
    pub max_q: f64,
    pub slack: f64,
}

impl SgDfa {
    pub fn new(
        game: GameRef,
        proper: ProperLoss,
        c: f64,
        eta: f64,
        prior: &Distribution,
        solver: SolverConfig,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) || !(c >= 1.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("need eta > 0 and c >= 1, got eta = {eta}, c = {c}")));
        }
        Ok(SgDfa {
            sm: Supermartingale::new(prior),
            expert_loss: vec![0.0; prior.len()],
            game,
            proper,
            c,
            eta,
            solver,
            learner_loss: 0.0,
            lambda_loss: 0.0,
        })
    }

    pub fn with_defaults(game: GameRef, c: f64, eta: f64, prior: &Distribution, solver: SolverConfig) -> Result<Self> {
        let proper = default_proper_loss(&game, eta, c)?;
        Self::new(game, proper, c, eta, prior, solver)
    }

    pub fn supermartingale(&self) -> &Supermartingale {
        &self.sm
    }

    pub fn learner_loss(&self) -> f64 {
        self.learner_loss
    }

    pub fn lambda_loss(&self) -> f64 {
        self.lambda_loss
    }

    pub fn expert_loss(&self) -> &[f64] {
        &self.expert_loss
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn loss_bound(&self, theta: usize) -> f64 {
        self.c * self.expert_loss[theta] + self.c / self.eta * (-self.sm.log_prior()[theta] + self.sm.slack_log())
    }

    /// `q(pi, omega) = sum_theta w_theta exp(eta (lambda(pi, omega) / c - Gamma_theta(lambda(pi, .))(omega)))`.
    pub fn step_function<'a>(&'a self, experts: &'a [ExpertRef]) -> impl Fn(&Distribution) -> Vec<f64> + 'a {
        let log_w = self.sm.normalized_log_weights();
        move |pi: &Distribution| {
            let m = self.game.m();
            let lambda = self.proper.eval(pi);
            let Some(decision) = self.game.substitution(&lambda, MEMBERSHIP_TOL) else {
                return vec![f64::INFINITY; m];
            };
            let advice = react(experts, self.game.as_ref(), &decision, &lambda);
            (0..m)
                .map(|o| {
                    let lam = lambda.get(o).value();
                    mix_terms(&log_w, advice.iter().map(|a| log_q_term(lam, a.get(o).value(), self.c, self.eta)))
                })
                .collect()
        }
    }

    pub fn predict(&self, experts: &[ExpertRef]) -> Result<SgPrediction> {
        if experts.len() != self.expert_loss.len() {
            return Err(Error::DimensionMismatch { expected: self.expert_loss.len(), got: experts.len() });
        }
        let q = self.step_function(experts);
        let sol = solve(&q, self.game.m(), 1.0, &self.solver)?;
        let lambda = self.proper.eval(&sol.pi);
        let decision = self
            .game
            .substitution(&lambda, MEMBERSHIP_TOL)
            .ok_or_else(|| Error::SubstitutionFailure { gap: self.game.superprediction_gap(&lambda) })?;
        let prediction = self.game.prediction(&decision);
        let advice = react(experts, self.game.as_ref(), &decision, &lambda);
        Ok(SgPrediction { pi: sol.pi, lambda, decision, prediction, advice, max_q: sol.max_q, slack: sol.slack })
    }

    pub fn observe(&self, pred: &SgPrediction, outcome: usize) -> Result<SgDfa> {
        if outcome >= self.game.m() {
            return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")));
        }
        let lam = pred.lambda.get(outcome).value();
        let terms: Vec<f64> =
            pred.advice.iter().map(|a| log_q_term(lam, a.get(outcome).value(), self.c, self.eta)).collect();
        let mut next = self.clone();
        next.sm = self.sm.advance(&terms, pred.slack);
        next.learner_loss += pred.prediction.get(outcome).value();
        next.lambda_loss += lam;
        for (acc, a) in next.expert_loss.iter_mut().zip(&pred.advice) {
            *acc += a.get(outcome).value();
        }
        Ok(next)
    }
}

/// One full round of [`SgDfa`].
pub fn sg_dfa_step(
    state: &SgDfa,
    experts: &[ExpertRef],
    reality: impl FnOnce(&SgPrediction) -> usize,
) -> Result<(SgPrediction, SgDfa)> {
    let pred = state.predict(experts)?;
    let outcome = reality(&pred);
    let next = state.observe(&pred, outcome)?;
    Ok((pred, next))
}

/// Which fixed-point equation the aggregating algorithm solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixedPointVariant {
    /// `gamma = F(mix(Gamma(gamma)))` for a mixable rate.
    Mixable,
    /// `gamma = V(F(mix(Gamma(gamma))))` with the boundary projection capped at `c`.
    Projected { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    /// Damping weight of the new iterate in exponential coordinates.
    pub alpha: f64,
    /// Stop once the sup-norm residual is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { alpha: 0.5, tol: 1e-10, max_iter: 10_000 }
    }
}

/// Aggregating algorithm against second-guessing experts.
#[derive(Debug, Clone)]
pub struct SgAa {
    game: GameRef,
    eta: f64,
    variant: FixedPointVariant,
    cfg: FixedPointConfig,
    log_prior: Vec<f64>,
    log_weights: Vec<f64>,
    learner_loss: f64,
    expert_loss: Vec<f64>,
    slack_log: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgAaPrediction {
    /// The fixed point.
    pub gamma: LossVector,
    pub decision: Decision,
    pub prediction: LossVector,
    /// Expert reactions at the fixed point.
    pub advice: Vec<LossVector>,
    /// Exp-mixture of `advice` (without the constant).
    pub mixture: LossVector,
    /// `sup |gamma - T(gamma)|` at termination.
    pub residual: f64,
    pub iterations: usize,
    pub slack: f64,
}

impl SgAa {
    pub fn new(
        game: GameRef,
        eta: f64,
        variant: FixedPointVariant,
        prior: &Distribution,
        cfg: FixedPointConfig,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {eta}")));
        }
        let lp = log_prior(prior);
        Ok(SgAa {
            game,
            eta,
            variant,
            cfg,
            log_weights: lp.clone(),
            expert_loss: vec![0.0; lp.len()],
            log_prior: lp,
            learner_loss: 0.0,
            slack_log: 0.0,
        })
    }

    fn c(&self) -> f64 {
        match self.variant {
            FixedPointVariant::Mixable => 1.0,
            FixedPointVariant::Projected { c } => c,
        }
    }

    pub fn learner_loss(&self) -> f64 {
        self.learner_loss
    }

    pub fn expert_loss(&self) -> &[f64] {
        &self.expert_loss
    }

    pub fn slack_log(&self) -> f64 {
        self.slack_log
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn loss_bound(&self, theta: usize) -> f64 {
        let c = self.c();
        c * self.expert_loss[theta] + c / self.eta * (-self.log_prior[theta] + self.slack_log)
    }

    fn mix(&self, advice: &[LossVector]) -> Result<LossVector> {
        let m = self.game.m();
        let z = numeric::log_sum_exp(&self.log_weights);
        if z == f64::NEG_INFINITY {
            return LossVector::new(vec![f64::INFINITY; m]);
        }
        let out = (0..m)
            .map(|o| {
                let terms: Vec<f64> = self
                    .log_weights
                    .iter()
                    .zip(advice)
                    .map(|(w, a)| {
                        let v = a.get(o);
                        if v.is_infinite() {
                            f64::NEG_INFINITY
                        } else {
                            w - z - self.eta * v.value()
                        }
                    })
                    .collect();
                let lse = numeric::log_sum_exp(&terms);
                if lse == f64::NEG_INFINITY {
                    f64::INFINITY
                } else {
                    (-lse / self.eta).max(0.0)
                }
            })
            .collect();
        LossVector::new(out)
    }

    /// `T(gamma)` together with the reactions and the mixture it came from.
    fn map(&self, experts: &[ExpertRef], gamma: &LossVector) -> Result<(LossVector, Vec<LossVector>, LossVector)> {
        let game = self.game.as_ref();
        let decision = game
            .substitution(gamma, MEMBERSHIP_TOL)
            .ok_or_else(|| Error::SubstitutionFailure { gap: game.superprediction_gap(gamma) })?;
        let advice = react(experts, game, &decision, gamma);
        let mixture = self.mix(&advice)?;
        let retracted = retraction(game, &mixture, self.eta)?;
        let image = match self.variant {
            FixedPointVariant::Mixable => retracted,
            FixedPointVariant::Projected { c } => project_boundary(game, &retracted, c)?,
        };
        Ok((image, advice, mixture))
    }

    fn chart_blend(&self, a: &LossVector, b: &LossVector) -> Result<LossVector> {
        let alpha = self.cfg.alpha;
        let v = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| {
                let u = (1.0 - alpha) * a_exp(*x, self.eta) + alpha * a_exp(*y, self.eta);
                if u <= 0.0 {
                    f64::INFINITY
                } else {
                    (-u.ln() / self.eta).max(0.0)
                }
            })
            .collect();
        LossVector::new(v)
    }

    /// Solves the fixed-point equation by damped iteration, with bisection on
    /// the decision as a fallback for one-parameter games.
    pub fn fixed_point(&self, experts: &[ExpertRef]) -> Result<(LossVector, usize, f64)> {
        let game = self.game.as_ref();
        let start = match game.domain() {
            DecisionDomain::UnitInterval => Decision::scalar(0.5),
            DecisionDomain::Simplex(m) => Decision(vec![1.0 / m as f64; m]),
        };
        let mut gamma = game.prediction(&start);
        let mut best: Option<(LossVector, f64)> = None;
        for it in 0..self.cfg.max_iter {
            let (image, _, _) = self.map(experts, &gamma)?;
            let residual = sup_distance(&gamma, &image);
            if best.as_ref().is_none_or(|b| residual < b.1) {
                best = Some((gamma.clone(), residual));
            }
            if residual <= self.cfg.tol {
                return Ok((gamma, it, residual));
            }
            let blended = self.chart_blend(&gamma, &image)?;
            gamma = match self.variant {
                FixedPointVariant::Mixable => retraction(game, &blended, self.eta).unwrap_or(blended),
                FixedPointVariant::Projected { .. } => blended,
            };
        }
        if game.domain() == DecisionDomain::UnitInterval {
            return self.bisect_decision(experts);
        }
        let (gamma, residual) = best.expect("at least one iteration");
        if residual <= 1e-8 {
            Ok((gamma, self.cfg.max_iter, residual))
        } else {
            Err(Error::NoConvergence { residual })
        }
    }

    fn bisect_decision(&self, experts: &[ExpertRef]) -> Result<(LossVector, usize, f64)> {
        let game = self.game.as_ref();
        let image_decision = |p: f64| -> Result<(f64, LossVector)> {
            let gamma = game.prediction(&Decision::scalar(p));
            let (image, _, _) = self.map(experts, &gamma)?;
            let d = game
                .substitution(&image, MEMBERSHIP_TOL)
                .ok_or_else(|| Error::SubstitutionFailure { gap: game.superprediction_gap(&image) })?;
            Ok((d.0[0], image))
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let (d, _) = image_decision(mid)?;
            if d > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = 0.5 * (lo + hi);
        let (_, image) = image_decision(p)?;
        let (again, _, _) = self.map(experts, &image)?;
        let residual = sup_distance(&image, &again);
        if residual <= 1e-8 {
            Ok((image, self.cfg.max_iter, residual))
        } else {
            Err(Error::NoConvergence { residual })
        }
    }

    pub fn predict(&self, experts: &[ExpertRef]) -> Result<SgAaPrediction> {
        if experts.len() != self.log_prior.len() {
            return Err(Error::DimensionMismatch { expected: self.log_prior.len(), got: experts.len() });
        }
        let (gamma, iterations, residual) = self.fixed_point(experts)?;
        let game = self.game.as_ref();
        let decision = game
            .substitution(&gamma, MEMBERSHIP_TOL)
            .ok_or_else(|| Error::SubstitutionFailure { gap: game.superprediction_gap(&gamma) })?;
        let prediction = game.prediction(&decision);
        let advice = react(experts, game, &decision, &gamma);
        let mixture = self.mix(&advice)?;
        let c = self.c();
        let excess = prediction.max_excess_over(&mixture.scaled(c)).max(0.0);
        let slack = (self.eta * excess / c).exp_m1();
        Ok(SgAaPrediction { gamma, decision, prediction, advice, mixture, residual, iterations, slack })
    }

    pub fn observe(&self, pred: &SgAaPrediction, outcome: usize) -> Result<SgAa> {
        if outcome >= self.game.m() {
            return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")));
        }
        let mut next = self.clone();
        for (i, a) in pred.advice.iter().enumerate() {
            let l = a.get(outcome);
            next.expert_loss[i] += l.value();
            next.log_weights[i] =
                if l.is_infinite() { f64::NEG_INFINITY } else { next.log_weights[i] - self.eta * l.value() };
        }
        next.learner_loss += pred.prediction.get(outcome).value();
        next.slack_log += pred.slack.ln_1p();
        Ok(next)
    }
}

fn a_exp(x: f64, eta: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else {
        (-eta * x).exp()
    }
}

/// Solves the fixed-point equation for one round without updating weights.
pub fn sg_aa_fixed_point(state: &SgAa, experts: &[ExpertRef]) -> Result<SgAaPrediction> {
    state.predict(experts)
}
