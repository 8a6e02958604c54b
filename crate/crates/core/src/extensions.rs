//! Experts judged by their own loss functions, and outcomes that are
//! themselves distributions over the outcome space.

use crate::defensive::{log_q_term, mix_terms, solve, supermartingale_property_check, SolverConfig, Supermartingale};
use crate::error::{Error, Result};
use crate::losses::{builtin_game, default_proper_loss, ProperLoss};
use crate::primitives::{Decision, DecisionDomain, Distribution, GameRef, LossVector, MEMBERSHIP_TOL};
use crate::sampling;

/// An expert evaluator: the proper loss that scores it and the Learner, with
/// its own constant and rate.
#[derive(Debug, Clone)]
pub struct EvaluatedExpert {
    pub proper: ProperLoss,
    pub c: f64,
    pub eta: f64,
}

impl EvaluatedExpert {
    pub fn new(proper: ProperLoss, c: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) || !(c >= 1.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("need eta > 0 and c >= 1, got eta = {eta}, c = {c}")));
        }
        Ok(EvaluatedExpert { proper, c, eta })
    }

    /// The game's default proper loss at `(c, eta)`.
    pub fn for_game(game: &GameRef, c: f64, eta: f64) -> Result<Self> {
        Self::new(default_proper_loss(game, eta, c)?, c, eta)
    }

    /// The game's largest mixable rate with `c = 1`.
    pub fn mixable_default(game: &GameRef) -> Result<Self> {
        let eta = game
            .eta_mixable_max()
            .ok_or_else(|| Error::Unsupported(format!("{} is not mixable; pass c and eta", game.name())))?;
        Self::for_game(game, 1.0, eta)
    }
}

/// Defensive forecasting where every expert has its own loss.
///
/// The Learner announces a distribution `pi`; evaluator `theta` charges it
/// `lambda_theta(pi, omega)` and charges its expert `lambda_theta(pi_theta, omega)`.
#[derive(Debug, Clone)]
pub struct MlDfa {
    evaluators: Vec<EvaluatedExpert>,
    m: usize,
    solver: SolverConfig,
    sm: Supermartingale,
    learner_loss: Vec<f64>,
    expert_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlPrediction {
    pub pi: Distribution,
    /// `lambda_theta(pi, .)` per evaluator.
    pub learner_vectors: Vec<LossVector>,
    /// `lambda_theta(pi_theta, .)` per evaluator.
    pub expert_vectors: Vec<LossVector>,
    pub max_q: f64,
    pub slack: f64,
}

impl MlDfa {
    pub fn new(evaluators: Vec<EvaluatedExpert>, prior: &Distribution, solver: SolverConfig) -> Result<Self> {
        if evaluators.is_empty() {
            return Err(Error::Empty("evaluators"));
        }
        if evaluators.len() != prior.len() {
            return Err(Error::DimensionMismatch { expected: evaluators.len(), got: prior.len() });
        }
        let m = evaluators[0].proper.m();
        if let Some(e) = evaluators.iter().find(|e| e.proper.m() != m) {
            return Err(Error::DimensionMismatch { expected: m, got: e.proper.m() });
        }
        let k = evaluators.len();
        Ok(MlDfa {
            evaluators,
            m,
            solver,
            sm: Supermartingale::new(prior),
            learner_loss: vec![0.0; k],
            expert_loss: vec![0.0; k],
        })
    }

    pub fn evaluators(&self) -> &[EvaluatedExpert] {
        &self.evaluators
    }

    pub fn supermartingale(&self) -> &Supermartingale {
        &self.sm
    }

    /// The Learner's cumulative loss as measured by each evaluator.
    pub fn learner_loss(&self) -> &[f64] {
        &self.learner_loss
    }

    /// Each expert's cumulative loss under its own evaluator.
    pub fn expert_loss(&self) -> &[f64] {
        &self.expert_loss
    }

    pub fn loss_bound(&self, theta: usize) -> f64 {
        let e = &self.evaluators[theta];
        e.c * self.expert_loss[theta] + e.c / e.eta * (-self.sm.log_prior()[theta] + self.sm.slack_log())
    }

    fn expert_vectors(&self, advice: &[Distribution]) -> Result<Vec<LossVector>> {
        if advice.len() != self.evaluators.len() {
            return Err(Error::DimensionMismatch { expected: self.evaluators.len(), got: advice.len() });
        }
        advice
            .iter()
            .zip(&self.evaluators)
            .map(|(a, e)| {
                if a.len() != self.m {
                    return Err(Error::DimensionMismatch { expected: self.m, got: a.len() });
                }
                Ok(e.proper.eval(a))
            })
            .collect()
    }

    fn learner_vectors(&self, pi: &Distribution) -> Vec<LossVector> {
        self.evaluators.iter().map(|e| e.proper.eval(pi)).collect()
    }

    /// `q(pi, omega) = sum_theta w_theta exp(eta_theta (lambda_theta(pi, omega) / c_theta - g_theta(omega)))`.
    pub fn step_function<'a>(&'a self, expert_vectors: &'a [LossVector]) -> impl Fn(&Distribution) -> Vec<f64> + 'a {
        let log_w = self.sm.normalized_log_weights();
        move |pi: &Distribution| {
            let learner = self.learner_vectors(pi);
            (0..self.m)
                .map(|o| {
                    let exps = self.evaluators.iter().zip(&learner).zip(expert_vectors).map(|((e, l), g)| {
                        log_q_term(l.get(o).value(), g.get(o).value(), e.c, e.eta)
                    });
                    mix_terms(&log_w, exps)
                })
                .collect()
        }
    }

    pub fn predict(&self, advice: &[Distribution]) -> Result<MlPrediction> {
        let expert_vectors = self.expert_vectors(advice)?;
        let sol = {
            let q = self.step_function(&expert_vectors);
            solve(&q, self.m, 1.0, &self.solver)?
        };
        let learner_vectors = self.learner_vectors(&sol.pi);
        Ok(MlPrediction { pi: sol.pi, learner_vectors, expert_vectors, max_q: sol.max_q, slack: sol.slack })
    }

    pub fn observe(&self, pred: &MlPrediction, outcome: usize) -> Result<MlDfa> {
        if outcome >= self.m {
            return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")));
        }
        let terms: Vec<f64> = self
            .evaluators
            .iter()
            .zip(&pred.learner_vectors)
            .zip(&pred.expert_vectors)
            .map(|((e, l), g)| log_q_term(l.get(outcome).value(), g.get(outcome).value(), e.c, e.eta))
            .collect();
        let mut next = self.clone();
        next.sm = self.sm.advance(&terms, pred.slack);
        for (i, (l, g)) in pred.learner_vectors.iter().zip(&pred.expert_vectors).enumerate() {
            next.learner_loss[i] += l.get(outcome).value();
            next.expert_loss[i] += g.get(outcome).value();
        }
        Ok(next)
    }
}

/// One full round of [`MlDfa`].
pub fn ml_dfa_step(
    state: &MlDfa,
    advice: &[Distribution],
    reality: impl FnOnce(&MlPrediction) -> usize,
) -> Result<(MlPrediction, MlDfa)> {
    let pred = state.predict(advice)?;
    let outcome = reality(&pred);
    let next = state.observe(&pred, outcome)?;
    Ok((pred, next))
}

/// How a game's loss extends from vertex outcomes to points of the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexExtension {
    /// `sum_omega (p(omega) - gamma(omega))^2`.
    Brier,
    /// `sum_omega p(omega) ln(p(omega) / gamma(omega))`.
    Kl,
    /// `|gamma - p|` for two outcomes, `p` the probability of outcome 1.
    Absolute,
}

/// A game whose outcomes may be any distribution over the base outcomes.
#[derive(Debug, Clone)]
pub struct SimplexGame {
    base: GameRef,
    extension: SimplexExtension,
}

impl SimplexGame {
    pub fn new(extension: SimplexExtension, m: usize) -> Result<Self> {
        let name = match extension {
            SimplexExtension::Brier => "brier",
            SimplexExtension::Kl => "kl",
            SimplexExtension::Absolute => "absolute",
        };
        Ok(SimplexGame { base: builtin_game(name, m)?, extension })
    }

    pub fn base(&self) -> &GameRef {
        &self.base
    }

    pub fn extension(&self) -> SimplexExtension {
        self.extension
    }

    pub fn m(&self) -> usize {
        self.base.m()
    }

    fn probs(&self, d: &Decision) -> Vec<f64> {
        match self.base.domain() {
            DecisionDomain::UnitInterval => {
                let p = d.0[0].clamp(0.0, 1.0);
                vec![1.0 - p, p]
            }
            DecisionDomain::Simplex(_) => d.0.iter().map(|x| x.max(0.0)).collect(),
        }
    }

    /// The loss of `decision` when the outcome is `p`. Agrees with the base
    /// game's loss at point masses.
    pub fn loss_on_simplex(&self, decision: &Decision, p: &Distribution) -> f64 {
        let g = self.probs(decision);
        let p = p.probs();
        match self.extension {
            SimplexExtension::Brier => {
                let mut s = 0.0;
                for (x, y) in p.iter().zip(&g) {
                    let r = x - y;
                    s += r * r;
                }
                s
            }
            SimplexExtension::Kl => {
                let mut s = 0.0;
                for (x, y) in p.iter().zip(&g) {
                    if *x == 0.0 {
                        continue;
                    }
                    if *y <= 0.0 {
                        return f64::INFINITY;
                    }
                    s += x * (x.ln() - y.ln());
                }
                s
            }
            SimplexExtension::Absolute => (g[1] - p[1]).abs(),
        }
    }
}

/// Outcome of [`check_relative_exp_convexity`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpConvexityReport {
    pub holds: bool,
    /// Largest `LHS - RHS` found.
    pub worst_violation: f64,
    /// Learner decision, expert decision and outcome attaining it, when positive.
    pub witness: Option<(Decision, Decision, Distribution)>,
    pub samples: usize,
}

/// Both sides of the relative exp-convexity inequality:
/// `exp(eta (g1(p) / c - g2(p)))` and `sum_omega p(omega) exp(eta (g1(omega) / c - g2(omega)))`.
pub fn relative_exp_convexity_sides(
    sg: &SimplexGame,
    learner: &Decision,
    expert: &Decision,
    p: &Distribution,
    c: f64,
    eta: f64,
) -> (f64, f64) {
    let lhs = log_q_term(sg.loss_on_simplex(learner, p), sg.loss_on_simplex(expert, p), c, eta).exp();
    let m = sg.m();
    let mut rhs = 0.0;
    for o in 0..m {
        let w = p.get(o);
        if w == 0.0 {
            continue;
        }
        let l1 = sg.base.loss(learner, o);
        let l2 = sg.base.loss(expert, o);
        rhs += w * log_q_term(l1, l2, c, eta).exp();
    }
    (lhs, rhs)
}

fn excess(lhs: f64, rhs: f64) -> f64 {
    if rhs == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        lhs - rhs
    }
}

/// Samples pairs of decisions and interior outcomes and reports the largest
/// violation of relative exp-convexity at `(c, eta)`.
pub fn check_relative_exp_convexity(
    sg: &SimplexGame,
    c: f64,
    eta: f64,
    samples: usize,
    seed: u64,
    tol: f64,
) -> ExpConvexityReport {
    let mut rng = sampling::stream(seed, 0);
    let m = sg.m();
    let domain = sg.base.domain();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut consider = |g1: Decision, g2: Decision, p: Distribution| {
        let (lhs, rhs) = relative_exp_convexity_sides(sg, &g1, &g2, &p, c, eta);
        let e = excess(lhs, rhs);
        if e > worst {
            worst = e;
            witness = Some((g1, g2, p));
        }
    };
    // Deterministic probes on a coarse grid for two outcomes.
    if domain == DecisionDomain::UnitInterval {
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        for a in grid {
            for b in grid {
                for p in [0.25, 0.5, 0.75] {
                    consider(Decision::scalar(a), Decision::scalar(b), Distribution::binary(p).expect("valid"));
                }
            }
        }
    }
    for _ in 0..samples {
        let g1 = sampling::random_decision(&mut rng, domain);
        let g2 = sampling::random_decision(&mut rng, domain);
        let p = Distribution::from_weights(sampling::uniform_simplex(&mut rng, m)).expect("sampled distribution");
        consider(g1, g2, p);
    }
    let holds = worst <= tol;
    ExpConvexityReport { holds, worst_violation: worst, witness: if holds { None } else { witness }, samples }
}

/// Whether [`SimplexDfa::new`] runs the precondition checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verification {
    Check { samples: usize, seed: u64, tol: f64 },
    /// Steps then fail with [`Error::PreconditionUnverified`].
    Skip,
}

impl Default for Verification {
    fn default() -> Self {
        Verification::Check { samples: 2_000, seed: 0, tol: 1e-9 }
    }
}

/// Defensive forecasting when outcomes are points of the simplex.
///
/// The solver runs on the vertex game; the Learner and experts are then
/// scored at the realized point.
#[derive(Debug, Clone)]
pub struct SimplexDfa {
    sg: SimplexGame,
    proper: ProperLoss,
    c: f64,
    eta: f64,
    solver: SolverConfig,
    verified: bool,
    sm: Supermartingale,
    learner_loss: f64,
    expert_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPrediction {
    pub pi: Distribution,
    pub lambda: LossVector,
    pub decision: Decision,
    pub max_q: f64,
    pub slack: f64,
}

impl SimplexDfa {
    pub fn new(
        sg: SimplexGame,
        proper: ProperLoss,
        c: f64,
        eta: f64,
        prior: &Distribution,
        solver: SolverConfig,
        verification: Verification,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) || !(c >= 1.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("need eta > 0 and c >= 1, got eta = {eta}, c = {c}")));
        }
        let verified = match verification {
            Verification::Skip => false,
            Verification::Check { samples, seed, tol } => {
                let conv = check_relative_exp_convexity(&sg, c, eta, samples, seed, tol);
                if !conv.holds {
                    return Err(Error::PreconditionUnverified(format!(
                        "relative exp-convexity fails at c = {c}, eta = {eta} (excess {:e})",
                        conv.worst_violation
                    )));
                }
                let sm = supermartingale_property_check(sg.base.as_ref(), &proper, c, eta, samples, seed, tol);
                if !sm.holds {
                    return Err(Error::PreconditionUnverified(format!(
                        "supermartingale property fails at c = {c}, eta = {eta} (excess {:e})",
                        sm.max_excess
                    )));
                }
                true
            }
        };
        Ok(SimplexDfa {
            sm: Supermartingale::new(prior),
            expert_loss: vec![0.0; prior.len()],
            sg,
            proper,
            c,
            eta,
            solver,
            verified,
            learner_loss: 0.0,
        })
    }

    pub fn with_defaults(
        sg: SimplexGame,
        c: f64,
        eta: f64,
        prior: &Distribution,
        solver: SolverConfig,
        verification: Verification,
    ) -> Result<Self> {
        let proper = default_proper_loss(&sg.base, eta, c)?;
        Self::new(sg, proper, c, eta, prior, solver, verification)
    }

    pub fn game(&self) -> &SimplexGame {
        &self.sg
    }

    pub fn supermartingale(&self) -> &Supermartingale {
        &self.sm
    }

    pub fn learner_loss(&self) -> f64 {
        self.learner_loss
    }

    pub fn expert_loss(&self) -> &[f64] {
        &self.expert_loss
    }

    pub fn loss_bound(&self, theta: usize) -> f64 {
        self.c * self.expert_loss[theta] + self.c / self.eta * (-self.sm.log_prior()[theta] + self.sm.slack_log())
    }

    pub fn predict(&self, advice: &[Decision]) -> Result<SimplexPrediction> {
        if !self.verified {
            return Err(Error::PreconditionUnverified("simplex-outcome checks were skipped".into()));
        }
        if advice.len() != self.expert_loss.len() {
            return Err(Error::DimensionMismatch { expected: self.expert_loss.len(), got: advice.len() });
        }
        let base = self.sg.base.as_ref();
        let vectors: Vec<LossVector> = advice.iter().map(|d| base.prediction(d)).collect();
        let log_w = self.sm.normalized_log_weights();
        let m = base.m();
        let q = |pi: &Distribution| -> Vec<f64> {
            let l = self.proper.eval(pi);
            (0..m)
                .map(|o| {
                    let lam = l.get(o).value();
                    mix_terms(&log_w, vectors.iter().map(|a| log_q_term(lam, a.get(o).value(), self.c, self.eta)))
                })
                .collect()
        };
        let sol = solve(&q, m, 1.0, &self.solver)?;
        let lambda = self.proper.eval(&sol.pi);
        let decision = base
            .substitution(&lambda, MEMBERSHIP_TOL)
            .ok_or_else(|| Error::SubstitutionFailure { gap: base.superprediction_gap(&lambda) })?;
        Ok(SimplexPrediction { pi: sol.pi, lambda, decision, max_q: sol.max_q, slack: sol.slack })
    }

    pub fn observe(&self, advice: &[Decision], pred: &SimplexPrediction, outcome: &Distribution) -> Result<SimplexDfa> {
        if outcome.len() != self.sg.m() {
            return Err(Error::DimensionMismatch { expected: self.sg.m(), got: outcome.len() });
        }
        let learner = self.sg.loss_on_simplex(&pred.decision, outcome);
        let experts: Vec<f64> = advice.iter().map(|d| self.sg.loss_on_simplex(d, outcome)).collect();
        let terms: Vec<f64> = experts.iter().map(|g| log_q_term(learner, *g, self.c, self.eta)).collect();
        let mut next = self.clone();
        next.sm = self.sm.advance(&terms, pred.slack);
        next.learner_loss += learner;
        for (acc, g) in next.expert_loss.iter_mut().zip(&experts) {
            *acc += g;
        }
        Ok(next)
    }
}

/// One full round of [`SimplexDfa`].
pub fn simplex_dfa_step(
    state: &SimplexDfa,
    advice: &[Decision],
    reality: impl FnOnce(&SimplexPrediction) -> Distribution,
) -> Result<(SimplexPrediction, SimplexDfa)> {
    let pred = state.predict(advice)?;
    let outcome = reality(&pred);
    let next = state.observe(advice, &pred, &outcome)?;
    Ok((pred, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_losses_match_base_at_vertices() {
        for (ext, m) in [(SimplexExtension::Brier, 3), (SimplexExtension::Kl, 3), (SimplexExtension::Absolute, 2)] {
            let sg = SimplexGame::new(ext, m).unwrap();
            let d = match sg.base().domain() {
                DecisionDomain::UnitInterval => Decision::scalar(0.3),
                DecisionDomain::Simplex(_) => Decision(vec![0.2, 0.3, 0.5]),
            };
            for o in 0..m {
                let v = sg.loss_on_simplex(&d, &Distribution::point_mass(m, o));
                assert_eq!(v.to_bits(), sg.base().loss(&d, o).to_bits(), "{ext:?} at {o}");
            }
        }
    }

    #[test]
    fn absolute_extension_violation_witness() {
        let sg = SimplexGame::new(SimplexExtension::Absolute, 2).unwrap();
        let (lhs, rhs) = relative_exp_convexity_sides(
            &sg,
            &Decision::scalar(0.0),
            &Decision::scalar(0.5),
            &Distribution::binary(0.5).unwrap(),
            1.0,
            1.0,
        );
        assert!((lhs - 0.5f64.exp()).abs() < 1e-12);
        assert!((rhs - 0.5f64.cosh()).abs() < 1e-12);
        assert!(!check_relative_exp_convexity(&sg, 1.0, 1.0, 100, 1, 1e-9).holds);
    }

    #[test]
    fn brier_and_kl_are_relatively_exp_convex() {
        for ext in [SimplexExtension::Brier, SimplexExtension::Kl] {
            let sg = SimplexGame::new(ext, 3).unwrap();
            let r = check_relative_exp_convexity(&sg, 1.0, 1.0, 2000, 3, 1e-9);
            assert!(r.holds, "{ext:?}: {}", r.worst_violation);
        }
    }

    #[test]
    fn skipped_verification_refuses_to_step() {
        let sg = SimplexGame::new(SimplexExtension::Brier, 3).unwrap();
        let dfa = SimplexDfa::with_defaults(
            sg,
            1.0,
            1.0,
            &Distribution::uniform(1),
            SolverConfig::default(),
            Verification::Skip,
        )
        .unwrap();
        let err = dfa.predict(&[Decision(vec![1.0 / 3.0; 3])]).unwrap_err();
        assert!(matches!(err, Error::PreconditionUnverified(_)));
    }
}
