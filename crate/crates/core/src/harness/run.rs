//! The protocol loop: experts move, then the Learner, then Reality, then
//! every party's loss is updated.

use crate::aggregating::AaState;
use crate::defensive::Dfa;
use crate::error::{Error, Result};
use crate::extensions::{EvaluatedExpert, MlDfa, SimplexDfa, SimplexExtension, SimplexGame, Verification};
use crate::losses::{builtin_game, realizability_constant};
use crate::numeric;
use crate::primitives::{Decision, Distribution, Game, GameRef, LossVector, MEMBERSHIP_TOL};
use crate::sampling;
use crate::secondguess::{ExpertRef, FixedPointConfig, FixedPointVariant, SgAa, SgDfa};

use super::audit::{verify_bound, BoundReport};
use super::config::{Algorithm, ScenarioConfig};
use super::record::{reals, Real, StepRecord};
use super::strategies::{
    continuity_probe, decision_to_distribution, distribution_to_decision, Expert, ExpertContext, Reality, Registry,
};

/// Per-expert bound constants of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    pub c: Vec<f64>,
    pub eta: Vec<f64>,
    pub prior: Vec<f64>,
}

impl Constants {
    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    pub fn log_prior(&self, theta: usize) -> f64 {
        let p = self.prior[theta];
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `(c / eta) ln(1 / P_0(theta))`.
    pub fn additive_term(&self, theta: usize) -> f64 {
        -self.c[theta] / self.eta[theta] * self.log_prior(theta)
    }
}

/// Learner loss minus the bound `c L^theta + (c / eta)(ln(1 / P_0) + slack_log)`.
pub fn bound_margin(learner: f64, expert: f64, c: f64, eta: f64, log_prior: f64, slack_log: f64) -> f64 {
    let bound = c * expert + c / eta * (-log_prior + slack_log);
    if bound == f64::INFINITY {
        f64::NEG_INFINITY
    } else if learner == f64::INFINITY {
        f64::INFINITY
    } else {
        learner - bound
    }
}

fn default_eta(game: &dyn Game, eta: Option<f64>) -> f64 {
    eta.or_else(|| game.eta_mixable_max()).unwrap_or(1.0)
}

fn default_c(game: &dyn Game, eta: f64, c: Option<f64>) -> Result<f64> {
    match c {
        Some(c) => Ok(c),
        None => realizability_constant(game, eta),
    }
}

fn simplex_extension(name: &str) -> Result<SimplexExtension> {
    match name {
        "brier" => Ok(SimplexExtension::Brier),
        "kl" => Ok(SimplexExtension::Kl),
        "absolute" => Ok(SimplexExtension::Absolute),
        other => Err(Error::Config(format!("no simplex-outcome extension for game {other:?}"))),
    }
}

/// The scenario's game over base outcomes.
pub fn scenario_game(cfg: &ScenarioConfig) -> Result<GameRef> {
    if cfg.algorithm == Algorithm::SimplexDfa {
        let sg = SimplexGame::new(simplex_extension(&cfg.game.name)?, cfg.game.m)?;
        return Ok(sg.base().clone());
    }
    builtin_game(&cfg.game.name, cfg.game.m)
}

/// Resolves `c`, `eta` and the prior for every weighted expert.
pub fn constants(cfg: &ScenarioConfig) -> Result<Constants> {
    let k = cfg.weighted_experts();
    let prior = match &cfg.prior {
        Some(p) => Distribution::from_weights(p.clone())?.probs().to_vec(),
        None => Distribution::uniform(k).probs().to_vec(),
    };
    let (c, eta) = if cfg.algorithm == Algorithm::MlDfa {
        let mut cs = Vec::with_capacity(k);
        let mut etas = Vec::with_capacity(k);
        for e in &cfg.evaluators {
            let g = builtin_game(&e.game, cfg.game.m)?;
            let eta = default_eta(g.as_ref(), e.eta);
            let c = default_c(g.as_ref(), eta, e.c)?;
            for _ in &cfg.experts {
                cs.push(c);
                etas.push(eta);
            }
        }
        (cs, etas)
    } else {
        let game = scenario_game(cfg)?;
        let eta = default_eta(game.as_ref(), cfg.eta);
        let c = default_c(game.as_ref(), eta, cfg.c)?;
        (vec![c; k], vec![eta; k])
    };
    Ok(Constants { c, eta, prior })
}

enum Engine {
    Aa(AaState),
    Dfa(Dfa),
    SgDfa(SgDfa),
    SgAa(SgAa),
    Ml(MlDfa),
    Simplex(SimplexDfa),
}

fn build_engine(cfg: &ScenarioConfig, game: &GameRef, k: &Constants) -> Result<Engine> {
    let prior = Distribution::new(k.prior.clone())?;
    let (c, eta) = (k.c[0], k.eta[0]);
    let solver = cfg.solver_config();
    Ok(match cfg.algorithm {
        Algorithm::Aa => Engine::Aa(AaState::new(game.clone(), c, eta, &prior)?),
        Algorithm::Dfa => Engine::Dfa(Dfa::with_defaults(game.clone(), c, eta, &prior, solver)?),
        Algorithm::SgDfa => Engine::SgDfa(SgDfa::with_defaults(game.clone(), c, eta, &prior, solver)?),
        Algorithm::SgAa => {
            let variant =
                if game.is_mixable_at(eta) { FixedPointVariant::Mixable } else { FixedPointVariant::Projected { c } };
            Engine::SgAa(SgAa::new(game.clone(), eta, variant, &prior, FixedPointConfig::default())?)
        }
        Algorithm::MlDfa => {
            let mut evaluators = Vec::with_capacity(k.len());
            let mut theta = 0;
            for e in &cfg.evaluators {
                let g = builtin_game(&e.game, cfg.game.m)?;
                for _ in &cfg.experts {
                    evaluators.push(EvaluatedExpert::for_game(&g, k.c[theta], k.eta[theta])?);
                    theta += 1;
                }
            }
            Engine::Ml(MlDfa::new(evaluators, &prior, solver)?)
        }
        Algorithm::SimplexDfa => {
            let sg = SimplexGame::new(simplex_extension(&cfg.game.name)?, cfg.game.m)?;
            let verification = Verification::Check { samples: 2_000, seed: cfg.seed, tol: 1e-9 };
            Engine::Simplex(SimplexDfa::with_defaults(sg, c, eta, &prior, solver, verification)?)
        }
    })
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub constants: Constants,
    pub records: Vec<StepRecord>,
    pub summary: Summary,
}

/// End-of-run totals and audits.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub algorithm: Algorithm,
    pub game: String,
    pub m: usize,
    pub horizon: usize,
    pub seed: u64,
    pub learner_loss: Vec<f64>,
    pub expert_loss: Vec<f64>,
    pub slack_log: f64,
    pub audits: Vec<BoundReport>,
    /// Largest bound margin over all experts and prefixes; `-inf` for an empty run.
    pub max_bound_margin: f64,
    pub bounds_ok: bool,
    /// `max_theta (L(theta) - L^theta)`.
    pub max_regret: f64,
    /// Largest output jump seen by the continuity probe, for second-guessing runs.
    pub continuity_jump: Option<f64>,
    /// Whether the run met its expectation: bounds hold, or for an
    /// expected-failure scenario, regret reached the stated rate.
    pub passed: bool,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    run_scenario_with(cfg, &Registry::builtin())
}

fn decision_of(game: &dyn Game, v: &LossVector) -> Vec<f64> {
    game.substitution(v, MEMBERSHIP_TOL).map(|d| d.0).unwrap_or_default()
}

pub fn run_scenario_with(cfg: &ScenarioConfig, registry: &Registry) -> Result<RunResult> {
    cfg.validate()?;
    let game = scenario_game(cfg)?;
    let m = game.m();
    let domain = game.domain();
    let k = constants(cfg)?;
    let mut engine = build_engine(cfg, &game, &k)?;
    let mut experts: Vec<Expert> = cfg
        .experts
        .iter()
        .enumerate()
        .map(|(i, spec)| Expert::from_spec(spec, domain, sampling::stream(cfg.seed, 1 + i as u64), registry))
        .collect::<Result<_>>()?;
    let mut reality = Reality::new(cfg.reality.clone(), sampling::stream(cfg.seed, 0));
    let simplex = match cfg.algorithm {
        Algorithm::SimplexDfa => Some(SimplexGame::new(simplex_extension(&cfg.game.name)?, m)?),
        _ => None,
    };

    let weighted = k.len();
    let mut history: Vec<Distribution> = Vec::with_capacity(cfg.horizon);
    let mut learner_cum = vec![0.0; weighted];
    let mut expert_cum = vec![0.0; weighted];
    let mut slack_log = 0.0;
    let mut records = Vec::with_capacity(cfg.horizon);

    for step in 1..=cfg.horizon {
        let ctx = ExpertContext { step, domain, history: &history };
        let mut residual = None;
        let mut pi = None;
        let (decision, advice, advice_losses, outcome, learner_inst, expert_inst, slack, log_sm);
        match &mut engine {
            Engine::Aa(state) => {
                let decisions: Vec<Decision> = experts.iter_mut().map(|e| e.decide(&ctx).expect("plain")).collect();
                let vecs: Vec<LossVector> = decisions.iter().map(|d| game.prediction(d)).collect();
                let pred = state.predict(&vecs)?;
                let out = reality.next(m, &pred.prediction)?;
                let o = vertex(&out)?;
                *state = state.observe(&vecs, &pred, o)?;
                learner_inst = vec![pred.prediction.get(o).value(); weighted];
                expert_inst = vecs.iter().map(|v| v.get(o).value()).collect::<Vec<_>>();
                log_sm = state.log_potential();
                slack = pred.slack;
                decision = pred.decision.0;
                advice = decisions.into_iter().map(|d| d.0).collect::<Vec<_>>();
                advice_losses = vecs;
                outcome = out;
            }
            Engine::Dfa(state) => {
                let decisions: Vec<Decision> = experts.iter_mut().map(|e| e.decide(&ctx).expect("plain")).collect();
                let vecs: Vec<LossVector> = decisions.iter().map(|d| game.prediction(d)).collect();
                let pred = state.predict(&vecs)?;
                let out = reality.next(m, &pred.prediction)?;
                let o = vertex(&out)?;
                *state = state.observe(&vecs, &pred, o)?;
                learner_inst = vec![pred.prediction.get(o).value(); weighted];
                expert_inst = vecs.iter().map(|v| v.get(o).value()).collect();
                log_sm = state.supermartingale().log_value();
                slack = pred.slack;
                pi = Some(pred.pi.probs().to_vec());
                decision = pred.decision.0;
                advice = decisions.into_iter().map(|d| d.0).collect();
                advice_losses = vecs;
                outcome = out;
            }
            Engine::SgDfa(state) => {
                let sg: Vec<ExpertRef> = experts.iter_mut().map(|e| e.as_second_guess(&ctx)).collect();
                let pred = state.predict(&sg)?;
                let out = reality.next(m, &pred.prediction)?;
                let o = vertex(&out)?;
                *state = state.observe(&pred, o)?;
                learner_inst = vec![pred.prediction.get(o).value(); weighted];
                expert_inst = pred.advice.iter().map(|v| v.get(o).value()).collect();
                log_sm = state.supermartingale().log_value();
                slack = pred.slack;
                pi = Some(pred.pi.probs().to_vec());
                decision = pred.decision.0;
                advice = pred.advice.iter().map(|v| decision_of(game.as_ref(), v)).collect();
                advice_losses = pred.advice;
                outcome = out;
            }
            Engine::SgAa(state) => {
                let sg: Vec<ExpertRef> = experts.iter_mut().map(|e| e.as_second_guess(&ctx)).collect();
                let pred = state.predict(&sg)?;
                let out = reality.next(m, &pred.prediction)?;
                let o = vertex(&out)?;
                *state = state.observe(&pred, o)?;
                learner_inst = vec![pred.prediction.get(o).value(); weighted];
                expert_inst = pred.advice.iter().map(|v| v.get(o).value()).collect();
                slack = pred.slack;
                residual = Some(Real(pred.residual));
                decision = pred.decision.0;
                advice = pred.advice.iter().map(|v| decision_of(game.as_ref(), v)).collect();
                advice_losses = pred.advice;
                outcome = out;
                log_sm = f64::NAN;
            }
            Engine::Ml(state) => {
                let decisions: Vec<Decision> = experts.iter_mut().map(|e| e.decide(&ctx).expect("plain")).collect();
                let dists: Vec<Distribution> =
                    decisions.iter().map(|d| decision_to_distribution(domain, d)).collect::<Result<_>>()?;
                let per_theta: Vec<Distribution> =
                    (0..weighted).map(|t| dists[t % decisions.len()].clone()).collect();
                let pred = state.predict(&per_theta)?;
                let out = reality.next(m, &pred.learner_vectors[0])?;
                let o = vertex(&out)?;
                *state = state.observe(&pred, o)?;
                learner_inst = pred.learner_vectors.iter().map(|v| v.get(o).value()).collect();
                expert_inst = pred.expert_vectors.iter().map(|v| v.get(o).value()).collect();
                log_sm = state.supermartingale().log_value();
                slack = pred.slack;
                decision = distribution_to_decision(domain, &pred.pi).0;
                pi = Some(pred.pi.probs().to_vec());
                advice = (0..weighted).map(|t| decisions[t % decisions.len()].0.clone()).collect();
                advice_losses = pred.expert_vectors;
                outcome = out;
            }
            Engine::Simplex(state) => {
                let sg = simplex.as_ref().expect("simplex game");
                let decisions: Vec<Decision> = experts.iter_mut().map(|e| e.decide(&ctx).expect("plain")).collect();
                let pred = state.predict(&decisions)?;
                let out = reality.next(m, &game.prediction(&pred.decision))?;
                *state = state.observe(&decisions, &pred, &out)?;
                learner_inst = vec![sg.loss_on_simplex(&pred.decision, &out); weighted];
                expert_inst = decisions.iter().map(|d| sg.loss_on_simplex(d, &out)).collect();
                log_sm = state.supermartingale().log_value();
                slack = pred.slack;
                pi = Some(pred.pi.probs().to_vec());
                decision = pred.decision.0;
                advice_losses = decisions.iter().map(|d| game.prediction(d)).collect();
                advice = decisions.into_iter().map(|d| d.0).collect();
                outcome = out;
            }
        }
        slack_log += slack.ln_1p();
        for t in 0..weighted {
            learner_cum[t] += learner_inst[t];
            expert_cum[t] += expert_inst[t];
        }
        let log_sm = if log_sm.is_nan() { log_potential(&k, &learner_cum, &expert_cum) } else { log_sm };
        let margins: Vec<f64> = (0..weighted)
            .map(|t| bound_margin(learner_cum[t], expert_cum[t], k.c[t], k.eta[t], k.log_prior(t), slack_log))
            .collect();
        records.push(StepRecord {
            step,
            advice,
            advice_losses: advice_losses.iter().map(|v| reals(v.values())).collect(),
            pi,
            decision,
            outcome: super::strategies::vertex_index(&outcome),
            outcome_point: outcome.probs().to_vec(),
            learner_loss: reals(&learner_inst),
            learner_cumulative: reals(&learner_cum),
            expert_loss: reals(&expert_inst),
            expert_cumulative: reals(&expert_cum),
            log_supermartingale: Real(log_sm),
            slack: Real(slack),
            slack_log: Real(slack_log),
            bound_margin: reals(&margins),
            residual,
        });
        history.push(outcome);
    }

    let audits: Vec<BoundReport> =
        (0..weighted).map(|t| verify_bound(&records, t, k.c[t], k.eta[t], k.prior[t])).collect();
    let max_bound_margin = audits.iter().map(|a| a.worst_margin).fold(f64::NEG_INFINITY, f64::max);
    let bounds_ok = audits.iter().all(|a| a.ok);
    let max_regret = (0..weighted)
        .map(|t| if expert_cum[t].is_finite() { learner_cum[t] - expert_cum[t] } else { f64::NEG_INFINITY })
        .fold(f64::NEG_INFINITY, f64::max);
    let continuity_jump = if cfg.algorithm.second_guessing() {
        let mut worst: f64 = 0.0;
        for (i, e) in experts.iter().enumerate() {
            if let Expert::SecondGuess(sg) = e {
                worst = worst.max(continuity_probe(sg.as_ref(), game.as_ref(), 100, cfg.seed.wrapping_add(i as u64)));
            }
        }
        Some(worst)
    } else {
        None
    };
    let passed = match &cfg.expect_failure {
        Some(f) => cfg.horizon > 0 && max_regret >= f.min_regret_rate * cfg.horizon as f64,
        None => bounds_ok,
    };
    let summary = Summary {
        name: cfg.name.clone(),
        algorithm: cfg.algorithm,
        game: cfg.game.name.clone(),
        m,
        horizon: cfg.horizon,
        seed: cfg.seed,
        learner_loss: learner_cum,
        expert_loss: expert_cum,
        slack_log,
        audits,
        max_bound_margin,
        bounds_ok,
        max_regret,
        continuity_jump,
        passed,
    };
    Ok(RunResult { config: cfg.clone(), constants: k, records, summary })
}

fn vertex(p: &Distribution) -> Result<usize> {
    super::strategies::vertex_index(p)
        .ok_or_else(|| Error::Config("this protocol needs outcomes at vertices of the simplex".into()))
}

/// `ln sum_theta P_0(theta) exp(eta_theta (L(theta) / c_theta - L^theta))`.
pub fn log_potential(k: &Constants, learner: &[f64], expert: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..k.len())
        .map(|t| {
            let lp = k.log_prior(t);
            if lp == f64::NEG_INFINITY || expert[t] == f64::INFINITY {
                f64::NEG_INFINITY
            } else {
                lp + k.eta[t] * (learner[t] / k.c[t] - expert[t])
            }
        })
        .collect();
    numeric::log_sum_exp(&terms)
}

