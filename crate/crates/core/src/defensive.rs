//! Defensive forecasting: keep a test supermartingale from growing by
//! choosing, at each step, a distribution at which every outcome leaves it
//! no larger than it is now.
//!
//! The supermartingale is a prior-weighted sum over experts of products of
//! step terms `q_g(pi, omega) = exp(eta (lambda(pi, omega) / c - g(omega)))`,
//! kept in log space.

use crate::aggregating::log_prior;
use crate::error::{Error, Result};
use crate::losses::{default_proper_loss, ProperLoss};
use crate::numeric;
use crate::primitives::{Decision, Distribution, Game, GameRef, LossVector, MEMBERSHIP_TOL};
use crate::sampling;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-12;

/// `ln q` for one expert and one outcome.
///
/// An expert with infinite loss contributes nothing (`-inf`), even when the
/// Learner's loss is infinite too; otherwise an infinite Learner loss gives `+inf`.
pub fn log_q_term(lambda: f64, g: f64, c: f64, eta: f64) -> f64 {
    if g == f64::INFINITY {
        f64::NEG_INFINITY
    } else if lambda == f64::INFINITY {
        f64::INFINITY
    } else {
        eta * (lambda / c - g)
    }
}

/// `q_g(pi, omega)` for the proper loss `lambda`.
pub fn q_term(proper: &ProperLoss, c: f64, eta: f64, g: &LossVector, pi: &Distribution, omega: usize) -> f64 {
    let l = proper.eval(pi);
    log_q_term(l.get(omega).value(), g.get(omega).value(), c, eta).exp()
}

/// Outcome of [`supermartingale_property_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleReport {
    pub holds: bool,
    /// Largest `E_pi q_g(pi, .) - 1` found.
    pub max_excess: f64,
    /// Distribution and expert prediction attaining it.
    pub witness: Option<(Vec<f64>, LossVector)>,
    pub samples: usize,
}

/// Samples distributions `pi` and predictions `g` of the game and checks
/// `E_pi q_g(pi, .) <= 1 + tol`.
pub fn supermartingale_property_check(
    game: &dyn Game,
    proper: &ProperLoss,
    c: f64,
    eta: f64,
    samples: usize,
    seed: u64,
    tol: f64,
) -> SupermartingaleReport {
    let mut rng = sampling::stream(seed, 0);
    let m = game.m();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for i in 0..samples {
        let pi = if m == 2 && i < 2 {
            Distribution::point_mass(2, i)
        } else {
            Distribution::from_weights(sampling::uniform_simplex(&mut rng, m)).expect("sampled distribution")
        };
        let g = game.prediction(&sampling::random_decision(&mut rng, game.domain()));
        let lambda = proper.eval(&pi);
        let mut e = 0.0;
        for o in 0..m {
            let p = pi.get(o);
            if p == 0.0 {
                continue;
            }
            e += p * log_q_term(lambda.get(o).value(), g.get(o).value(), c, eta).exp();
        }
        let excess = e - 1.0;
        if excess > worst {
            worst = excess;
            witness = Some((pi.probs().to_vec(), g));
        }
    }
    SupermartingaleReport { holds: worst <= tol, max_excess: worst, witness, samples }
}

/// How the two-outcome solver picks among admissible distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryRule {
    /// Midpoint of the admissible interval, assuming `q(., 0)` rises and
    /// `q(., 1)` falls in `p`. Falls back to [`BinaryRule::Root`] when that
    /// assumption fails. This rule reproduces the aggregating algorithm.
    Midpoint,
    /// Endpoint checks, then bisection for `q(p, 1) = q(p, 0)`.
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Interior margin parameter for three or more outcomes.
    pub epsilon: f64,
    /// Absolute tolerance on the supermartingale level.
    pub tol: f64,
    pub binary_rule: BinaryRule,
    /// Return the best distribution found instead of failing.
    pub best_effort: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { epsilon: DEFAULT_EPSILON, tol: DEFAULT_TOL, binary_rule: BinaryRule::Midpoint, best_effort: false }
    }
}

/// A distribution chosen by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub pi: Distribution,
    /// `max_omega q(pi, omega)`.
    pub max_q: f64,
    /// `max(0, max_q / level - 1)`.
    pub slack: f64,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Two-outcome solver: returns `p` with `q(p, omega) <= level + tol` for both outcomes.
///
/// `q(0, 1) <= level` returns 0, else `q(1, 0) <= level` returns 1, else the
/// root of `q(p, 1) - q(p, 0)` found by bisection.
pub fn dfa_solve_binary(q: &dyn Fn(f64) -> [f64; 2], level: f64, tol: f64) -> Result<f64> {
    let at0 = q(0.0);
    if at0[1] <= level + tol {
        return Ok(0.0);
    }
    let at1 = q(1.0);
    if at1[0] <= level + tol {
        return Ok(1.0);
    }
    let h = |p: f64| {
        let v = q(p);
        v[1] - v[0]
    };
    if !(h(0.0) > 0.0 && h(1.0) < 0.0) {
        return Err(Error::ContractViolation(format!(
            "no sign change: q(0) = {at0:?}, q(1) = {at1:?} against level {level}"
        )));
    }
    let p = numeric::bisect_sign_change(h, 0.0, 1.0, 0.0);
    let v = max_of(&q(p));
    if v <= level + tol {
        Ok(p)
    } else {
        Err(Error::ContractViolation(format!("q reaches {v} at the crossing p = {p}, above level {level}")))
    }
}

/// `[a, b]`: the distributions with `q(p, 1) <= level` (an up-set when
/// `q(., 1)` falls) intersected with those with `q(p, 0) <= level`.
pub fn dfa_admissible_interval(q: &dyn Fn(f64) -> [f64; 2], level: f64) -> Option<(f64, f64)> {
    let a = if q(0.0)[1] <= level {
        0.0
    } else if q(1.0)[1] > level {
        return None;
    } else {
        numeric::bisect_predicate(|p| q(p)[1] <= level, 0.0, 1.0, 1e-15)
    };
    let b = if q(1.0)[0] <= level {
        1.0
    } else if q(0.0)[0] > level {
        return None;
    } else {
        1.0 - numeric::bisect_predicate(|s| q(1.0 - s)[0] <= level, 0.0, 1.0, 1e-15)
    };
    (a <= b).then_some((a, b))
}

/// Midpoint of the admissible interval, falling back to [`dfa_solve_binary`].
pub fn dfa_solve_binary_midpoint(q: &dyn Fn(f64) -> [f64; 2], level: f64, tol: f64) -> Result<f64> {
    if let Some((a, b)) = dfa_admissible_interval(q, level) {
        let p = 0.5 * (a + b);
        if max_of(&q(p)) <= level + tol {
            return Ok(p);
        }
    }
    dfa_solve_binary(q, level, tol)
}

/// Interior margin `delta = epsilon / ((1 + epsilon)(m - 1))`.
pub fn interior_margin(m: usize, epsilon: f64) -> f64 {
    epsilon / ((1.0 + epsilon) * (m - 1) as f64)
}

/// Minimizes `max_omega q(pi, omega)` over distributions with every
/// probability at least the interior margin, and requires the minimum to be
/// within `(1 + epsilon) level + tol`.
pub fn dfa_solve_simplex(
    q: &dyn Fn(&Distribution) -> Vec<f64>,
    level: f64,
    m: usize,
    epsilon: f64,
    tol: f64,
) -> Result<Solution> {
    let (pi, value) = minimize_interior(q, m, epsilon);
    let allowed = (1.0 + epsilon) * level + tol;
    if value <= allowed {
        Ok(Solution { slack: (value / level - 1.0).max(0.0), max_q: value, pi })
    } else {
        Err(Error::SlackExceeded { value, allowed, best: pi.probs().to_vec() })
    }
}

fn minimize_interior(q: &dyn Fn(&Distribution) -> Vec<f64>, m: usize, epsilon: f64) -> (Distribution, f64) {
    let delta = interior_margin(m, epsilon);
    let scale = 1.0 - m as f64 * delta;
    let lift = |nu: &[f64]| -> Vec<f64> { nu.iter().map(|x| delta + scale * x).collect() };
    let objective = |nu: &[f64]| -> f64 {
        let pi = Distribution::from_weights(lift(nu)).expect("interior point");
        max_of(&q(&pi))
    };
    let (nu, value) = numeric::minimize_on_simplex(objective, m, numeric::SimplexSearch::default());
    (Distribution::from_weights(lift(&nu)).expect("interior point"), value)
}

/// Dense-grid fallback used in best-effort mode.
fn grid_minimum(q: &dyn Fn(&Distribution) -> Vec<f64>, m: usize) -> (Distribution, f64) {
    let res = numeric::lattice_resolution(m, 20_000);
    let mut best = (Distribution::uniform(m), f64::INFINITY);
    for p in numeric::simplex_lattice(m, res) {
        let pi = Distribution::from_weights(p).expect("lattice point");
        let v = max_of(&q(&pi));
        if v < best.1 {
            best = (pi, v);
        }
    }
    best
}

/// Picks a distribution for the supermartingale step function `q`
/// (all outcomes at once) so that it does not exceed `level`.
pub fn solve(q: &dyn Fn(&Distribution) -> Vec<f64>, m: usize, level: f64, cfg: &SolverConfig) -> Result<Solution> {
    let attempt = if m == 2 {
        let qb = |p: f64| {
            let v = q(&Distribution::binary(p.clamp(0.0, 1.0)).expect("p in [0, 1]"));
            [v[0], v[1]]
        };
        let p = match cfg.binary_rule {
            BinaryRule::Midpoint => dfa_solve_binary_midpoint(&qb, level, cfg.tol),
            BinaryRule::Root => dfa_solve_binary(&qb, level, cfg.tol),
        };
        p.map(|p| {
            let pi = Distribution::binary(p).expect("p in [0, 1]");
            let max_q = max_of(&q(&pi));
            Solution { slack: (max_q / level - 1.0).max(0.0), max_q, pi }
        })
    } else {
        dfa_solve_simplex(q, level, m, cfg.epsilon, cfg.tol)
    };
    match attempt {
        Ok(s) => Ok(s),
        Err(e) if cfg.best_effort => {
            let (pi, max_q) = match &e {
                Error::SlackExceeded { best, value, .. } => (Distribution::from_weights(best.clone())?, *value),
                _ => grid_minimum(q, m),
            };
            Ok(Solution { slack: (max_q / level - 1.0).max(0.0), max_q, pi })
        }
        Err(e) => Err(e),
    }
}

/// Log-space weights of the test supermartingale, one per expert.
#[derive(Debug, Clone, PartialEq)]
pub struct Supermartingale {
    log_prior: Vec<f64>,
    log_weights: Vec<f64>,
    slack_log: f64,
    steps: usize,
}

impl Supermartingale {
    pub fn new(prior: &Distribution) -> Self {
        let lp = log_prior(prior);
        Supermartingale { log_weights: lp.clone(), log_prior: lp, slack_log: 0.0, steps: 0 }
    }

    /// `ln Q`, where `Q = sum_theta P_0(theta) prod_n q_n^theta`. Starts at zero.
    pub fn log_value(&self) -> f64 {
        numeric::log_sum_exp(&self.log_weights)
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `sum_n ln(1 + slack_n)`.
    pub fn slack_log(&self) -> f64 {
        self.slack_log
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `ln (P_N(theta) / Q_N)`: normalized log weights. All `-inf` once `Q_N = 0`.
    pub fn normalized_log_weights(&self) -> Vec<f64> {
        let z = self.log_value();
        if z == f64::NEG_INFINITY {
            return vec![f64::NEG_INFINITY; self.log_weights.len()];
        }
        self.log_weights.iter().map(|w| w - z).collect()
    }

    /// Multiplies expert `theta`'s product by `exp(log_terms[theta])`.
    pub fn advance(&self, log_terms: &[f64], slack: f64) -> Supermartingale {
        let mut next = self.clone();
        for (w, t) in next.log_weights.iter_mut().zip(log_terms) {
            *w = if *w == f64::NEG_INFINITY || *t == f64::NEG_INFINITY { f64::NEG_INFINITY } else { *w + t };
        }
        next.slack_log += slack.ln_1p();
        next.steps += 1;
        next
    }
}

/// `sum_theta w_theta exp(e_theta)` computed in log space.
pub fn mix_terms(log_w: &[f64], exponents: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = log_w
        .iter()
        .zip(exponents)
        .map(|(w, e)| if *w == f64::NEG_INFINITY || e == f64::NEG_INFINITY { f64::NEG_INFINITY } else { w + e })
        .collect();
    numeric::log_sum_exp(&terms).exp()
}

/// Defensive forecasting against experts announcing predictions in the game.
#[derive(Debug, Clone)]
pub struct Dfa {
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

/// What the defensive forecaster announces before the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DfaPrediction {
    pub pi: Distribution,
    /// `lambda(pi, .)`.
    pub lambda: LossVector,
    pub decision: Decision,
    /// Loss vector of `decision`; dominated by `lambda`.
    pub prediction: LossVector,
    pub max_q: f64,
    pub slack: f64,
}

impl Dfa {
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
        if proper.m() != game.m() {
            return Err(Error::DimensionMismatch { expected: game.m(), got: proper.m() });
        }
        Ok(Dfa {
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

    /// Uses the default proper loss for the game at this rate and constant.
    pub fn with_defaults(game: GameRef, c: f64, eta: f64, prior: &Distribution, solver: SolverConfig) -> Result<Self> {
        let proper = default_proper_loss(&game, eta, c)?;
        Self::new(game, proper, c, eta, prior, solver)
    }

    pub fn game(&self) -> &GameRef {
        &self.game
    }

    pub fn proper(&self) -> &ProperLoss {
        &self.proper
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn supermartingale(&self) -> &Supermartingale {
        &self.sm
    }

    pub fn learner_loss(&self) -> f64 {
        self.learner_loss
    }

    /// `sum_n lambda(pi_n, omega_n)`, an upper bound on the Learner's loss.
    pub fn lambda_loss(&self) -> f64 {
        self.lambda_loss
    }

    pub fn expert_loss(&self) -> &[f64] {
        &self.expert_loss
    }

    /// The step function `pi -> (q(pi, omega))_omega` for the current weights.
    pub fn step_function<'a>(&'a self, advice: &'a [LossVector]) -> impl Fn(&Distribution) -> Vec<f64> + 'a {
        let log_w = self.sm.normalized_log_weights();
        move |pi: &Distribution| {
            let l = self.proper.eval(pi);
            (0..self.game.m())
                .map(|o| {
                    let lam = l.get(o).value();
                    mix_terms(&log_w, advice.iter().map(|a| log_q_term(lam, a.get(o).value(), self.c, self.eta)))
                })
                .collect()
        }
    }

    pub fn predict(&self, advice: &[LossVector]) -> Result<DfaPrediction> {
        if advice.len() != self.expert_loss.len() {
            return Err(Error::DimensionMismatch { expected: self.expert_loss.len(), got: advice.len() });
        }
        for a in advice {
            if a.len() != self.game.m() {
                return Err(Error::DimensionMismatch { expected: self.game.m(), got: a.len() });
            }
        }
        let q = self.step_function(advice);
        let sol = solve(&q, self.game.m(), 1.0, &self.solver)?;
        let lambda = self.proper.eval(&sol.pi);
        let decision = self
            .game
            .substitution(&lambda, MEMBERSHIP_TOL)
            .ok_or_else(|| Error::SubstitutionFailure { gap: self.game.superprediction_gap(&lambda) })?;
        let prediction = self.game.prediction(&decision);
        Ok(DfaPrediction { pi: sol.pi, lambda, decision, prediction, max_q: sol.max_q, slack: sol.slack })
    }

    pub fn observe(&self, advice: &[LossVector], pred: &DfaPrediction, outcome: usize) -> Result<Dfa> {
        if outcome >= self.game.m() {
            return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")));
        }
        let lam = pred.lambda.get(outcome).value();
        let terms: Vec<f64> =
            advice.iter().map(|a| log_q_term(lam, a.get(outcome).value(), self.c, self.eta)).collect();
        let mut next = self.clone();
        next.sm = self.sm.advance(&terms, pred.slack);
        next.learner_loss += pred.prediction.get(outcome).value();
        next.lambda_loss += lam;
        for (acc, a) in next.expert_loss.iter_mut().zip(advice) {
            *acc += a.get(outcome).value();
        }
        Ok(next)
    }

    /// `c L^theta + (c / eta)(ln(1 / P_0(theta)) + sum ln(1 + slack))`.
    pub fn loss_bound(&self, theta: usize) -> f64 {
        self.c * self.expert_loss[theta] + self.c / self.eta * (-self.sm.log_prior()[theta] + self.sm.slack_log())
    }
}

/// One full round of [`Dfa`].
pub fn dfa_step(
    state: &Dfa,
    advice: &[LossVector],
    reality: impl FnOnce(&DfaPrediction) -> usize,
) -> Result<(DfaPrediction, Dfa)> {
    let pred = state.predict(advice)?;
    let outcome = reality(&pred);
    let next = state.observe(advice, &pred, outcome)?;
    Ok((pred, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::builtin_game;

    #[test]
    fn early_exit_at_zero_for_constant_q() {
        let q = |_: f64| [1.0, 1.0];
        assert_eq!(dfa_solve_binary(&q, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn two_extreme_log_experts_give_one_half() {
        let q = |p: f64| [0.5 / (1.0 - p), 0.5 / p];
        let p = dfa_solve_binary(&q, 1.0, 1e-12).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let p = dfa_solve_binary_midpoint(&q, 1.0, 1e-12).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn violated_contract_is_reported() {
        let q = |_: f64| [2.0, 2.0];
        assert!(matches!(dfa_solve_binary(&q, 1.0, 0.0), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn log_q_conventions() {
        assert_eq!(log_q_term(f64::INFINITY, f64::INFINITY, 1.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(log_q_term(1.0, f64::INFINITY, 1.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(log_q_term(f64::INFINITY, 1.0, 1.0, 1.0), f64::INFINITY);
        assert!((log_q_term(2.0, 0.5, 2.0, 3.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn single_expert_is_tracked() {
        let game = builtin_game("square", 2).unwrap();
        let dfa = Dfa::with_defaults(game.clone(), 1.0, 2.0, &Distribution::uniform(1), SolverConfig::default()).unwrap();
        let advice = [game.prediction(&Decision::scalar(0.3))];
        let pred = dfa.predict(&advice).unwrap();
        assert!((pred.decision.0[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn interior_margin_formula() {
        assert!((interior_margin(3, 0.1) - 0.1 / (1.1 * 2.0)).abs() < 1e-15);
    }
}
