//! The aggregating algorithm, plus the boundary projection and coordinatewise
//! retraction used when the game is not mixable or experts second-guess.

use crate::error::{Error, Result};
use crate::numeric;
use crate::primitives::{ext_sub, Decision, Distribution, Game, GameRef, LossVector, MEMBERSHIP_TOL};

/// Weights, cumulative losses and slack of one run of the aggregating algorithm.
///
/// Steps never mutate a state; [`AaState::observe`] returns the successor.
#[derive(Debug, Clone)]
pub struct AaState {
    game: GameRef,
    c: f64,
    eta: f64,
    log_prior: Vec<f64>,
    log_weights: Vec<f64>,
    learner_loss: f64,
    expert_loss: Vec<f64>,
    slack_log: f64,
    steps: usize,
}

/// What the aggregating algorithm announces before the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct AaPrediction {
    /// `g_N`, the scaled exp-mixture of the advice.
    pub mixture: LossVector,
    pub decision: Decision,
    /// The loss vector of `decision`.
    pub prediction: LossVector,
    /// Relative slack `exp(eta * excess / c) - 1` where `prediction` exceeds `mixture`.
    pub slack: f64,
}

fn validate_rates(c: f64, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {eta} must be positive and finite")));
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("constant c = {c} must be at least 1")));
    }
    Ok(())
}

/// Natural logs of prior weights; zero weights become `-inf`.
pub(crate) fn log_prior(prior: &Distribution) -> Vec<f64> {
    prior.probs().iter().map(|p| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect()
}

impl AaState {
    pub fn new(game: GameRef, c: f64, eta: f64, prior: &Distribution) -> Result<Self> {
        validate_rates(c, eta)?;
        let log_prior = log_prior(prior);
        Ok(AaState {
            game,
            c,
            eta,
            log_weights: log_prior.clone(),
            expert_loss: vec![0.0; log_prior.len()],
            log_prior,
            learner_loss: 0.0,
            slack_log: 0.0,
            steps: 0,
        })
    }

    pub fn game(&self) -> &GameRef {
        &self.game
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn experts(&self) -> usize {
        self.log_prior.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn learner_loss(&self) -> f64 {
        self.learner_loss
    }

    pub fn expert_loss(&self) -> &[f64] {
        &self.expert_loss
    }

    /// `sum_n ln(1 + slack_n)` accumulated so far.
    pub fn slack_log(&self) -> f64 {
        self.slack_log
    }

    /// Current weights normalized to a distribution.
    pub fn normalized_weights(&self) -> Result<Distribution> {
        let z = numeric::log_sum_exp(&self.log_weights);
        if z == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter("every expert has infinite loss".into()));
        }
        Distribution::from_weights(self.log_weights.iter().map(|w| (w - z).exp()).collect())
    }

    /// `g_N(omega) = -(c / eta) ln sum_theta w_theta exp(-eta gamma_theta(omega))`.
    pub fn mix(&self, advice: &[LossVector]) -> Result<LossVector> {
        if advice.len() != self.experts() {
            return Err(Error::DimensionMismatch { expected: self.experts(), got: advice.len() });
        }
        let m = self.game.m();
        let z = numeric::log_sum_exp(&self.log_weights);
        if z == f64::NEG_INFINITY {
            // Every expert has infinite loss, so any prediction meets the bound.
            return LossVector::new(vec![f64::INFINITY; m]);
        }
        let mut out = Vec::with_capacity(m);
        let mut terms = Vec::with_capacity(advice.len());
        for o in 0..m {
            terms.clear();
            for (w, a) in self.log_weights.iter().zip(advice) {
                if a.len() != m {
                    return Err(Error::DimensionMismatch { expected: m, got: a.len() });
                }
                let v = a.get(o);
                terms.push(if v.is_infinite() || *w == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    w - z - self.eta * v.value()
                });
            }
            let lse = numeric::log_sum_exp(&terms);
            out.push(if lse == f64::NEG_INFINITY { f64::INFINITY } else { (-self.c * lse / self.eta).max(0.0) });
        }
        LossVector::new(out)
    }

    /// Mixes the advice and substitutes a decision dominated by the mixture.
    pub fn predict(&self, advice: &[LossVector]) -> Result<AaPrediction> {
        let mixture = self.mix(advice)?;
        let decision = self.game.substitution(&mixture, MEMBERSHIP_TOL).ok_or_else(|| Error::SubstitutionFailure {
            gap: self.game.superprediction_gap(&mixture),
        })?;
        let prediction = self.game.prediction(&decision);
        let excess = prediction.max_excess_over(&mixture).max(0.0);
        let slack = (self.eta * excess / self.c).exp_m1();
        Ok(AaPrediction { mixture, decision, prediction, slack })
    }

    /// Successor state after `outcome`.
    pub fn observe(&self, advice: &[LossVector], prediction: &AaPrediction, outcome: usize) -> Result<AaState> {
        if advice.len() != self.experts() {
            return Err(Error::DimensionMismatch { expected: self.experts(), got: advice.len() });
        }
        if outcome >= self.game.m() {
            return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")));
        }
        let mut next = self.clone();
        for (i, a) in advice.iter().enumerate() {
            let l = a.get(outcome);
            next.expert_loss[i] += l.value();
            next.log_weights[i] =
                if l.is_infinite() { f64::NEG_INFINITY } else { next.log_weights[i] - self.eta * l.value() };
        }
        next.learner_loss += prediction.prediction.get(outcome).value();
        next.slack_log += prediction.slack.ln_1p();
        next.steps += 1;
        Ok(next)
    }

    /// `ln sum_theta P_0(theta) exp(eta (L_N / c - L_N^theta))`, the
    /// logarithm of the quantity the algorithm keeps from growing.
    pub fn log_potential(&self) -> f64 {
        let terms: Vec<f64> = self
            .log_prior
            .iter()
            .zip(&self.expert_loss)
            .map(|(lp, le)| lp + self.eta * (self.learner_loss / self.c - le))
            .collect();
        numeric::log_sum_exp(&terms)
    }

    /// `c L^theta + (c / eta) ln(1 / P_0(theta)) + (c / eta) sum ln(1 + slack)`.
    pub fn loss_bound(&self, theta: usize) -> f64 {
        self.c * self.expert_loss[theta] + self.c / self.eta * (-self.log_prior[theta] + self.slack_log)
    }
}

/// `g_N` for the given state and advice.
pub fn aa_mix(state: &AaState, advice: &[LossVector]) -> Result<LossVector> {
    state.mix(advice)
}

/// One full round: predict, ask `reality` for the outcome, update.
pub fn aa_step(
    state: &AaState,
    advice: &[LossVector],
    reality: impl FnOnce(&AaPrediction) -> usize,
) -> Result<(AaPrediction, AaState)> {
    let pred = state.predict(advice)?;
    let outcome = reality(&pred);
    let next = state.observe(advice, &pred, outcome)?;
    Ok((pred, next))
}

/// `V(g) = R(g) g` with `R(g)` the least `r in (0, c]` putting `r g` in the
/// superprediction set. The zero vector when zero is itself a superprediction.
pub fn project_boundary(game: &dyn Game, g: &LossVector, c: f64) -> Result<LossVector> {
    if g.len() != game.m() {
        return Err(Error::DimensionMismatch { expected: game.m(), got: g.len() });
    }
    let zero = LossVector::new(vec![0.0; g.len()])?;
    if game.superprediction_gap(&zero) <= 0.0 {
        return Ok(zero);
    }
    let top = game.superprediction_gap(&g.scaled(c));
    if top > MEMBERSHIP_TOL {
        return Err(Error::NotRealizable { gap: top });
    }
    let allowance = top.max(0.0);
    let r = numeric::bisect_predicate(
        |r| game.superprediction_gap(&g.scaled(r)) <= allowance,
        0.0,
        c,
        1e-15 * c,
    );
    Ok(g.scaled(r))
}

/// `F`: lowers each coordinate in turn, in outcome order, as far as
/// membership in the exp-hull superprediction set at rate `eta` allows.
pub fn retraction(game: &dyn Game, g: &LossVector, eta: f64) -> Result<LossVector> {
    if g.len() != game.m() {
        return Err(Error::DimensionMismatch { expected: game.m(), got: g.len() });
    }
    let gap = |v: &LossVector| -> Result<f64> {
        game.hull_gap(v, eta)
            .ok_or_else(|| Error::Unsupported(format!("no hull membership test for {} at rate {eta}", game.name())))
    };
    let start = gap(g)?;
    if start > MEMBERSHIP_TOL {
        return Err(Error::InvalidParameter(format!("input is not a superprediction (gap {start:e})")));
    }
    let allowance = start.max(0.0);
    let mut cur = g.values().to_vec();
    for o in 0..cur.len() {
        let with = |t: f64, cur: &[f64]| -> Result<bool> {
            let mut v = cur.to_vec();
            v[o] = t;
            Ok(gap(&LossVector::new(v)?)? <= allowance)
        };
        if with(0.0, &cur)? {
            cur[o] = 0.0;
            continue;
        }
        let mut hi = cur[o];
        if hi == f64::INFINITY {
            let mut t = 1.0;
            while t < 1e12 && !with(t, &cur)? {
                t *= 2.0;
            }
            if t >= 1e12 {
                continue;
            }
            hi = t;
        }
        let snapshot = cur.clone();
        let t = numeric::bisect_predicate(|t| with(t, &snapshot).unwrap_or(false), 0.0, hi, 1e-15 * hi.max(1.0));
        cur[o] = t;
    }
    LossVector::new(cur)
}

/// Largest coordinatewise excess of `a` over `b` in the sup norm, with equal infinities ignored.
pub fn sup_distance(a: &LossVector, b: &LossVector) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| ext_sub(*x, *y).abs().max(ext_sub(*y, *x).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::builtin_game;

    fn lv(v: &[f64]) -> LossVector {
        LossVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn log_aa_predicts_weighted_average() {
        let game = builtin_game("log", 2).unwrap();
        let state = AaState::new(game.clone(), 1.0, 1.0, &Distribution::uniform(2)).unwrap();
        let advice = [game.prediction(&Decision::scalar(0.2)), game.prediction(&Decision::scalar(0.6))];
        let pred = state.predict(&advice).unwrap();
        assert!((pred.decision.0[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn potential_never_increases_for_mixable_game() {
        let game = builtin_game("square", 2).unwrap();
        let mut state = AaState::new(game.clone(), 1.0, 2.0, &Distribution::uniform(3)).unwrap();
        let mut prev = state.log_potential();
        for n in 0..50 {
            let advice: Vec<LossVector> = [0.1, 0.5, 0.9]
                .iter()
                .map(|p| game.prediction(&Decision::scalar((p + 0.01 * n as f64) % 1.0)))
                .collect();
            let (_, next) = aa_step(&state, &advice, |p| usize::from(p.decision.0[0] < 0.5)).unwrap();
            let cur = next.log_potential();
            assert!(cur <= prev + 1e-12);
            prev = cur;
            state = next;
        }
    }

    #[test]
    fn advice_count_mismatch_is_reported() {
        let game = builtin_game("log", 2).unwrap();
        let state = AaState::new(game.clone(), 1.0, 1.0, &Distribution::uniform(2)).unwrap();
        assert!(matches!(state.mix(&[lv(&[1.0, 1.0])]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn projection_zero_when_zero_is_a_superprediction() {
        let game = crate::losses::ParametricGame::new(
            "flat",
            crate::primitives::OutcomeSpace::indexed(2).unwrap(),
            crate::primitives::DecisionDomain::UnitInterval,
            None,
            |_, _| 0.0,
        );
        let v = project_boundary(&game, &lv(&[3.0, 4.0]), 2.0).unwrap();
        assert_eq!(v.values(), &[0.0, 0.0]);
    }

    #[test]
    fn retraction_on_infinite_coordinate() {
        let game = builtin_game("log", 2).unwrap();
        let out = retraction(game.as_ref(), &lv(&[f64::INFINITY, 0.5]), 1.0).unwrap();
        let expected = -(1.0 - (-0.5f64).exp()).ln();
        assert!((out.values()[0] - expected).abs() < 1e-12);
        assert_eq!(out.values()[1], 0.5);
    }
}
