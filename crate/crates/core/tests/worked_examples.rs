//! Worked examples for every module, checked against values computed here
//! from first principles.

use std::f64::consts::LN_2;
use std::sync::Arc;

use expert_advice::aggregating::{aa_mix, aa_step, project_boundary, retraction, AaState};
use expert_advice::defensive::{
    dfa_solve_binary, dfa_solve_simplex, dfa_step, interior_margin, q_term, supermartingale_property_check, Dfa,
    SolverConfig,
};
use expert_advice::extensions::{
    check_relative_exp_convexity, ml_dfa_step, simplex_dfa_step, EvaluatedExpert, MlDfa, SimplexDfa,
    SimplexExtension, SimplexGame, Verification,
};
use expert_advice::losses::{
    builtin_game, check_mixability, check_proper, generalized_entropy, hellinger_raw, proper_loss_from_entropy,
    realizability_constant, ProperLoss,
};
use expert_advice::primitives::{exp_mix, expected_loss, is_superprediction};
use expert_advice::secondguess::{
    sg_aa_fixed_point, sg_dfa_step, ConstantExpert, ContrarianExpert, ExpertRef, FixedPointConfig,
    FixedPointVariant, IdentityExpert, SgAa, SgDfa,
};
use expert_advice::{Decision, Distribution, Error, GameRef, LossVector};

const INF: f64 = f64::INFINITY;

fn lv(v: &[f64]) -> LossVector {
    LossVector::new(v.to_vec()).unwrap()
}

fn game(name: &str, m: usize) -> GameRef {
    builtin_game(name, m).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- core ----

#[test]
fn expected_loss_examples() {
    let half = Distribution::binary(0.5).unwrap();
    assert_eq!(expected_loss(&half, &lv(&[1.0, 3.0])).unwrap().value(), 2.0);
    let one = Distribution::new(vec![0.0, 1.0]).unwrap();
    assert_eq!(expected_loss(&one, &lv(&[INF, 2.0])).unwrap().value(), 2.0);
    let zero = Distribution::new(vec![1.0, 0.0]).unwrap();
    assert_eq!(expected_loss(&zero, &lv(&[0.0, 5.0])).unwrap().value(), 0.0);
}

#[test]
fn exp_mix_examples() {
    let g = lv(&[0.3, 1.7]);
    assert_eq!(exp_mix(std::slice::from_ref(&g), &Distribution::uniform(1), 1.0).unwrap(), g);
    let mixed = exp_mix(&[lv(&[0.0, INF]), lv(&[INF, 0.0])], &Distribution::uniform(2), 1.0).unwrap();
    let expected = -(0.5f64).ln();
    assert!(mixed.values().iter().all(|x| close(*x, expected, 1e-15)));
    let weighted = exp_mix(&[lv(&[1.0, 1.0]), lv(&[5.0, 5.0])], &Distribution::new(vec![1.0, 0.0]).unwrap(), 1.0).unwrap();
    assert!(weighted.values().iter().all(|x| close(*x, 1.0, 1e-15)));
}

#[test]
fn superprediction_examples() {
    assert!(is_superprediction(game("log", 2).as_ref(), &lv(&[LN_2, LN_2]), 1e-9).unwrap());
    assert!(!is_superprediction(game("absolute", 2).as_ref(), &lv(&[0.4, 0.4]), 1e-9).unwrap());
    for name in ["log", "square", "absolute", "brier", "hellinger"] {
        let g = game(name, 2);
        assert!(is_superprediction(g.as_ref(), &lv(&[INF, INF]), 1e-9).unwrap(), "{name}");
    }
}

// ---- losses ----

#[test]
fn builtin_loss_values() {
    assert!(close(game("log", 2).loss(&Decision::scalar(0.5), 1), LN_2, 1e-15));
    assert!(close(game("square", 2).loss(&Decision::scalar(0.3), 0), 0.09, 1e-15));
    let third = 1.0 / 3.0;
    let brier = game("brier", 3);
    for o in 0..3 {
        let l = brier.loss(&Decision(vec![third; 3]), o);
        assert!(close(l, (1.0 - third).powi(2) + 2.0 * third * third, 1e-15));
        assert!(close(l, 2.0 / 3.0, 1e-15));
    }
}

#[test]
fn entropy_examples() {
    let half = Distribution::binary(0.5).unwrap();
    assert!(close(generalized_entropy(game("brier", 2).as_ref(), &half, 1.0).unwrap().value, 0.5, 1e-9));
    assert!(close(generalized_entropy(game("log", 2).as_ref(), &half, 1.0).unwrap().value, LN_2, 1e-9));
    let vertex = Distribution::point_mass(2, 0);
    assert!(close(generalized_entropy(game("log", 2).as_ref(), &vertex, 1.0).unwrap().value, 0.0, 1e-9));
}

#[test]
fn proper_loss_examples() {
    let brier = game("brier", 3);
    let savage = proper_loss_from_entropy(&brier, 1.0).unwrap();
    for pi in [vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]] {
        let d = Distribution::new(pi.clone()).unwrap();
        let got = savage.eval(&d);
        for o in 0..3 {
            assert!(close(got.values()[o], brier.loss(&Decision(pi.clone()), o), 1e-6));
        }
    }

    let spherical = ProperLoss::canonical(&game("hellinger", 2)).unwrap();
    let v = spherical.eval(&Distribution::binary(0.4).unwrap());
    let norm = (0.36f64 + 0.16).sqrt();
    assert!(close(v.values()[0], 1.0 - 0.6 / norm, 1e-12));
    assert!(close(v.values()[1], 1.0 - 0.4 / norm, 1e-12));
    assert!(close(v.values()[0], 0.16795, 1e-5) && close(v.values()[1], 0.44530, 1e-5));

    match proper_loss_from_entropy(&game("log-dummy", 3), 1.0) {
        Err(Error::NonExtendable { point }) => assert_eq!(point, vec![0.0, 0.0, 1.0]),
        other => panic!("expected a non-extendable point, got {other:?}"),
    }
}

#[test]
fn properness_examples() {
    for name in ["log", "brier"] {
        let r = check_proper(&ProperLoss::canonical(&game(name, 2)).unwrap(), 50);
        assert!(r.proper && r.strictly_proper && r.max_violation <= 1e-9, "{name}: {r:?}");
    }
    let raw = check_proper(&hellinger_raw(2), 50);
    assert!(!raw.proper && raw.max_violation > 0.0);
}

#[test]
fn mixability_examples() {
    assert!(check_mixability(game("log", 2).as_ref(), 1.0, 2000, 1, 1e-9).unwrap().mixable);
    assert!(check_mixability(game("square", 2).as_ref(), 2.0, 2000, 1, 1e-9).unwrap().mixable);
    assert!(!check_mixability(game("absolute", 2).as_ref(), 1.0, 2000, 1, 1e-9).unwrap().mixable);
}

/// `eta / (2 ln(2 / (1 + e^-eta)))`: the least `c` with `c (x, x)` on the
/// line `x + y = 1` for the hull's diagonal point `x = -ln((1 + e^-eta) / 2) / eta`.
fn absolute_constant(eta: f64) -> f64 {
    let diagonal = -((1.0 + (-eta).exp()) / 2.0).ln() / eta;
    1.0 / (2.0 * diagonal)
}

#[test]
fn realizability_examples() {
    let abs = game("absolute", 2);
    for eta in [0.5, 1.0, 2.0] {
        let c = realizability_constant(abs.as_ref(), eta).unwrap();
        assert!(close(c, absolute_constant(eta), 1e-12), "eta {eta}: {c}");
    }
    assert!(close(realizability_constant(abs.as_ref(), 1e-4).unwrap(), 1.0, 1e-3));
    assert!(close(realizability_constant(abs.as_ref(), 1.0).unwrap(), 1.316186, 1e-6));
    assert!(close(realizability_constant(abs.as_ref(), 2.0).unwrap(), 1.7662, 1e-4));
}

// ---- aggregating ----

fn point_experts(g: &GameRef, ps: &[f64]) -> Vec<LossVector> {
    ps.iter().map(|p| g.prediction(&Decision::scalar(*p))).collect()
}

#[test]
fn aa_mix_examples() {
    let log = game("log", 2);
    let s = AaState::new(log.clone(), 1.0, 1.0, &Distribution::uniform(2)).unwrap();
    let g = aa_mix(&s, &point_experts(&log, &[0.0, 1.0])).unwrap();
    assert!(g.values().iter().all(|x| close(*x, LN_2, 1e-15)));

    let one = AaState::new(log.clone(), 1.0, 1.0, &Distribution::uniform(1)).unwrap();
    let advice = point_experts(&log, &[0.3]);
    let g = aa_mix(&one, &advice).unwrap();
    assert!(g.values().iter().zip(advice[0].values()).all(|(a, b)| close(*a, *b, 1e-14)));

    let sq = game("square", 2);
    let s = AaState::new(sq.clone(), 1.0, 2.0, &Distribution::uniform(2)).unwrap();
    let g = aa_mix(&s, &point_experts(&sq, &[0.2, 0.8])).unwrap();
    let expected = -0.5 * (0.5 * (-2.0f64 * 0.04).exp() + 0.5 * (-2.0f64 * 0.64).exp()).ln();
    assert!(close(g.values()[0], expected, 1e-14) && close(g.values()[1], expected, 1e-14));
    // -(1/2) ln 0.60058
    assert!(close(expected, 0.2549, 1e-4));
}

#[test]
fn aa_step_examples() {
    let log = game("log", 2);
    let s = AaState::new(log.clone(), 1.0, 1.0, &Distribution::uniform(2)).unwrap();
    let (pred, _) = aa_step(&s, &point_experts(&log, &[0.0, 1.0]), |_| 1).unwrap();
    assert!(close(pred.decision.0[0], 0.5, 1e-12));

    let mut one = AaState::new(log.clone(), 1.0, 1.0, &Distribution::uniform(1)).unwrap();
    for (i, p) in [0.2, 0.9, 0.5, 0.7].iter().enumerate() {
        let advice = point_experts(&log, &[*p]);
        let (pred, next) = aa_step(&one, &advice, |_| i % 2).unwrap();
        assert!(close(pred.decision.0[0], *p, 1e-9));
        one = next;
    }
    assert!(close(one.learner_loss(), one.expert_loss()[0], 1e-8));

    let abs = game("absolute", 2);
    let c = realizability_constant(abs.as_ref(), 1.0).unwrap();
    let mut s = AaState::new(abs.clone(), c, 1.0, &Distribution::uniform(2)).unwrap();
    let advice = point_experts(&abs, &[0.0, 1.0]);
    for n in 0..100 {
        let (_, next) = aa_step(&s, &advice, |_| n % 2).unwrap();
        assert!(next.log_potential() <= s.log_potential() + 1e-9);
        s = next;
    }
    assert_eq!(s.expert_loss(), &[50.0, 50.0]);
    assert!(s.learner_loss() <= c * 50.0 + c * LN_2 + 1e-7);
}

#[test]
fn project_boundary_examples() {
    let abs = game("absolute", 2);
    let v = project_boundary(abs.as_ref(), &lv(&[1.0, 1.0]), 2.0).unwrap();
    assert!(v.values().iter().all(|x| close(*x, 0.5, 1e-10)));
    let v = project_boundary(abs.as_ref(), &lv(&[0.5, 0.5]), 2.0).unwrap();
    assert!(v.values().iter().all(|x| close(*x, 0.5, 1e-10)));
    let log = game("log", 2);
    let on = lv(&[LN_2, LN_2]);
    let v = project_boundary(log.as_ref(), &on, 1.0).unwrap();
    assert!(v.values().iter().zip(on.values()).all(|(a, b)| close(*a, *b, 1e-10)));
}

#[test]
fn retraction_examples() {
    let log = game("log", 2);
    let f = retraction(log.as_ref(), &lv(&[LN_2 + 0.5, LN_2]), 1.0).unwrap();
    assert!(close(f.values()[0], -(1.0 - (-LN_2).exp()).ln(), 1e-9));
    assert!(close(f.values()[1], LN_2, 1e-15));
    let minimal = lv(&[LN_2, LN_2]);
    let f = retraction(log.as_ref(), &minimal, 1.0).unwrap();
    assert!(f.values().iter().all(|x| close(*x, LN_2, 1e-9)));
    let f = retraction(game("square", 2).as_ref(), &lv(&[1.0, 1.0]), 2.0).unwrap();
    assert!(close(f.values()[0], 0.0, 1e-9) && close(f.values()[1], 1.0, 1e-9));
}

// ---- defensive ----

#[test]
fn q_term_examples() {
    let sq = game("square", 2);
    let lambda = ProperLoss::canonical(&sq).unwrap();
    let g = sq.prediction(&Decision::scalar(0.4));
    assert!(close(q_term(&lambda, 1.0, 2.0, &g, &Distribution::binary(0.4).unwrap(), 1), 1.0, 1e-15));

    let log = game("log", 2);
    let lambda = ProperLoss::canonical(&log).unwrap();
    let g = log.prediction(&Decision::scalar(1.0));
    let half = Distribution::binary(0.5).unwrap();
    assert!(close(q_term(&lambda, 1.0, 1.0, &g, &half, 1), 2.0, 1e-14));
    assert_eq!(q_term(&lambda, 1.0, 1.0, &g, &half, 0), 0.0);
}

#[test]
fn supermartingale_examples() {
    let log = game("log", 2);
    let r = supermartingale_property_check(log.as_ref(), &ProperLoss::canonical(&log).unwrap(), 1.0, 1.0, 2000, 2, 1e-9);
    assert!(r.holds && r.max_excess <= 1e-9);
    let sq = game("square", 2);
    let lambda = ProperLoss::canonical(&sq).unwrap();
    assert!(supermartingale_property_check(sq.as_ref(), &lambda, 1.0, 2.0, 2000, 2, 1e-9).max_excess <= 1e-9);
    assert!(supermartingale_property_check(sq.as_ref(), &lambda, 1.0, 2.5, 2000, 2, 1e-9).max_excess > 0.0);
}

#[test]
fn binary_solver_examples() {
    // Log loss, lone expert at 1: q(p, 1) = 1 / p, q(p, 0) = 0.
    let q = |p: f64| [0.0, 1.0 / p];
    assert!(close(dfa_solve_binary(&q, 1.0, 1e-12).unwrap(), 1.0, 1e-12));
    // Experts at 0 and 1 with weight 1/2 each.
    let q = |p: f64| [0.5 / (1.0 - p), 0.5 / p];
    assert!(close(dfa_solve_binary(&q, 1.0, 1e-12).unwrap(), 0.5, 1e-9));
    let q = |_: f64| [1.0, 1.0];
    assert_eq!(dfa_solve_binary(&q, 1.0, 0.0).unwrap(), 0.0);
}

#[test]
fn simplex_solver_examples() {
    let eps = 1e-6;
    let q = |pi: &Distribution| vec![0.5 / pi.get(0), 0.5 / pi.get(1)];
    let s = dfa_solve_simplex(&q, 1.0, 2, eps, 1e-12).unwrap();
    let delta = interior_margin(2, eps);
    assert!((s.pi.get(1) - 0.5).abs() <= delta + 1e-9);

    let brier = game("brier", 3);
    let bary = Distribution::uniform(3);
    let lambda = ProperLoss::canonical(&brier).unwrap();
    let g = brier.prediction(&Decision(bary.probs().to_vec()));
    let q = |pi: &Distribution| (0..3).map(|o| q_term(&lambda, 1.0, 1.0, &g, pi, o)).collect::<Vec<_>>();
    let s = dfa_solve_simplex(&q, 1.0, 3, eps, 1e-12).unwrap();
    assert!(s.pi.probs().iter().all(|p| close(*p, 1.0 / 3.0, 1e-6)), "{:?}", s.pi);

    let q = |_: &Distribution| vec![0.9; 3];
    let s = dfa_solve_simplex(&q, 1.0, 3, eps, 1e-12).unwrap();
    assert!(s.pi.probs().iter().all(|p| close(*p, 1.0 / 3.0, 1e-12)));
}

#[test]
fn dfa_step_examples() {
    let log = game("log", 2);
    let advice = point_experts(&log, &[0.0, 1.0]);
    let dfa = Dfa::with_defaults(log.clone(), 1.0, 1.0, &Distribution::uniform(2), SolverConfig::default()).unwrap();
    let aa = AaState::new(log.clone(), 1.0, 1.0, &Distribution::uniform(2)).unwrap();
    let (pd, _) = dfa_step(&dfa, &advice, |_| 0).unwrap();
    let (pa, _) = aa_step(&aa, &advice, |_| 0).unwrap();
    assert!(close(pd.decision.0[0], 0.5, 1e-9) && close(pd.decision.0[0], pa.decision.0[0], 1e-9));

    let mut one = Dfa::with_defaults(log.clone(), 1.0, 1.0, &Distribution::uniform(1), SolverConfig::default()).unwrap();
    for (i, p) in [0.3, 0.8, 0.55].iter().enumerate() {
        let (pred, next) = dfa_step(&one, &point_experts(&log, &[*p]), |_| i % 2).unwrap();
        assert!(close(pred.decision.0[0], *p, 1e-9));
        one = next;
    }
    assert!(close(one.learner_loss(), one.expert_loss()[0], 1e-8));

    let sq = game("square", 2);
    let advice = point_experts(&sq, &[0.1, 0.5, 0.9]);
    let mut s = Dfa::with_defaults(sq.clone(), 1.0, 2.0, &Distribution::uniform(3), SolverConfig::default()).unwrap();
    let mut slack_log = 0.0;
    for _ in 0..500 {
        let (pred, next) = dfa_step(&s, &advice, |p| usize::from(p.decision.0[0] < 0.5)).unwrap();
        slack_log += pred.slack.ln_1p();
        s = next;
    }
    let best = s.expert_loss().iter().copied().fold(INF, f64::min);
    assert!(s.learner_loss() - best <= 0.5 * 3f64.ln() + 0.5 * slack_log + 1e-7);
}

// ---- second-guessing experts ----

#[test]
fn sg_dfa_with_constant_experts_matches_dfa() {
    let log = game("log", 2);
    let ps = [0.2, 0.7];
    let experts: Vec<ExpertRef> = ps.iter().map(|p| Arc::new(ConstantExpert(Decision::scalar(*p))) as ExpertRef).collect();
    let prior = Distribution::uniform(2);
    let mut sg = SgDfa::with_defaults(log.clone(), 1.0, 1.0, &prior, SolverConfig::default()).unwrap();
    let mut dfa = Dfa::with_defaults(log.clone(), 1.0, 1.0, &prior, SolverConfig::default()).unwrap();
    for n in 0..30 {
        let o = (n * 7 + 3) % 5 % 2;
        let (a, s2) = sg_dfa_step(&sg, &experts, |_| o).unwrap();
        let (b, d2) = dfa_step(&dfa, &point_experts(&log, &ps), |_| o).unwrap();
        assert!(close(a.decision.0[0], b.decision.0[0], 1e-9), "step {n}");
        sg = s2;
        dfa = d2;
    }
}

#[test]
fn sg_dfa_identity_expert_has_no_regret() {
    let log = game("log", 2);
    let experts: Vec<ExpertRef> = vec![Arc::new(IdentityExpert)];
    let mut sg = SgDfa::with_defaults(log.clone(), 1.0, 1.0, &Distribution::uniform(1), SolverConfig::default()).unwrap();
    for n in 0..20 {
        let (pred, next) = sg_dfa_step(&sg, &experts, |_| n % 3 % 2).unwrap();
        assert!(pred.max_q <= 1.0 + 1e-12);
        sg = next;
    }
    assert!(close(sg.learner_loss(), sg.expert_loss()[0], 1e-9));
}

#[test]
fn sg_aa_constant_experts_match_aa_and_identity_is_fixed() {
    let log = game("log", 2);
    let ps = [0.3, 0.6];
    let experts: Vec<ExpertRef> = ps.iter().map(|p| Arc::new(ConstantExpert(Decision::scalar(*p))) as ExpertRef).collect();
    let prior = Distribution::uniform(2);
    let sg = SgAa::new(log.clone(), 1.0, FixedPointVariant::Mixable, &prior, FixedPointConfig::default()).unwrap();
    let aa = AaState::new(log.clone(), 1.0, 1.0, &prior).unwrap();
    let a = sg_aa_fixed_point(&sg, &experts).unwrap();
    let b = aa.predict(&point_experts(&log, &ps)).unwrap();
    assert!(close(a.decision.0[0], b.decision.0[0], 1e-8));

    let lone: Vec<ExpertRef> = vec![Arc::new(IdentityExpert)];
    let sg = SgAa::new(log.clone(), 1.0, FixedPointVariant::Mixable, &Distribution::uniform(1), FixedPointConfig::default())
        .unwrap();
    let p = sg_aa_fixed_point(&sg, &lone).unwrap();
    assert!(p.residual <= 1e-10);
    assert!(log.superprediction_gap(&p.gamma).abs() <= 1e-9);
}

#[test]
fn contrarian_against_half_bound_and_agreement() {
    let log = game("log", 2);
    let experts: Vec<ExpertRef> = vec![Arc::new(ContrarianExpert), Arc::new(ConstantExpert(Decision::scalar(0.5)))];
    let prior = Distribution::uniform(2);
    let mut dfa = SgDfa::with_defaults(log.clone(), 1.0, 1.0, &prior, SolverConfig::default()).unwrap();
    let mut aa = SgAa::new(log.clone(), 1.0, FixedPointVariant::Mixable, &prior, FixedPointConfig::default()).unwrap();
    let mut slack_log = 0.0;
    for n in 0..300usize {
        let o = (n.wrapping_mul(2654435761) >> 7) % 2;
        let (pd, d2) = sg_dfa_step(&dfa, &experts, |_| o).unwrap();
        slack_log += pd.slack.ln_1p();
        if n < 50 {
            let pa = sg_aa_fixed_point(&aa, &experts).unwrap();
            assert!(close(pa.decision.0[0], pd.decision.0[0], 1e-4), "step {n}");
            aa = aa.observe(&pa, o).unwrap();
        }
        dfa = d2;
        for t in 0..2 {
            assert!(dfa.learner_loss() <= dfa.expert_loss()[t] + LN_2 + slack_log + 1e-7);
        }
    }
}

// ---- extensions ----

#[test]
fn ml_dfa_with_shared_loss_matches_dfa() {
    let log = game("log", 2);
    let ev = EvaluatedExpert::for_game(&log, 1.0, 1.0).unwrap();
    let prior = Distribution::uniform(2);
    let mut ml = MlDfa::new(vec![ev.clone(), ev], &prior, SolverConfig::default()).unwrap();
    let mut dfa = Dfa::with_defaults(log.clone(), 1.0, 1.0, &prior, SolverConfig::default()).unwrap();
    let ps = [0.25, 0.8];
    let dists: Vec<Distribution> = ps.iter().map(|p| Distribution::binary(*p).unwrap()).collect();
    for n in 0..25 {
        let o = n % 3 % 2;
        let (a, m2) = ml_dfa_step(&ml, &dists, |_| o).unwrap();
        let (b, d2) = dfa_step(&dfa, &point_experts(&log, &ps), |_| o).unwrap();
        assert!(close(a.pi.get(1), b.pi.get(1), 1e-9), "step {n}");
        ml = m2;
        dfa = d2;
    }
}

#[test]
fn ml_dfa_single_evaluator_has_no_regret() {
    let sq = game("square", 2);
    let ev = EvaluatedExpert::for_game(&sq, 1.0, 2.0).unwrap();
    let mut ml = MlDfa::new(vec![ev], &Distribution::uniform(1), SolverConfig::default()).unwrap();
    for n in 0..20 {
        let p = Distribution::binary(0.1 + 0.04 * n as f64).unwrap();
        let (_, next) = ml_dfa_step(&ml, &[p], |_| n % 2).unwrap();
        ml = next;
    }
    assert!(close(ml.learner_loss()[0], ml.expert_loss()[0], 1e-9));
}

#[test]
fn relative_exp_convexity_examples() {
    let brier = SimplexGame::new(SimplexExtension::Brier, 3).unwrap();
    let kl = SimplexGame::new(SimplexExtension::Kl, 3).unwrap();
    for eta in [0.3, 1.0, 3.0] {
        assert!(check_relative_exp_convexity(&brier, 1.0, eta, 1000, 3, 1e-9).holds, "brier {eta}");
        assert!(check_relative_exp_convexity(&kl, 1.0, eta, 1000, 3, 1e-9).holds, "kl {eta}");
    }
    let abs = SimplexGame::new(SimplexExtension::Absolute, 2).unwrap();
    assert!(!check_relative_exp_convexity(&abs, 1.0, 1.0, 1000, 3, 1e-9).holds);
}

#[test]
fn simplex_dfa_on_vertices_matches_dfa() {
    let sg = SimplexGame::new(SimplexExtension::Brier, 3).unwrap();
    let base = game("brier", 3);
    let prior = Distribution::uniform(2);
    let advice = [Decision(vec![0.5, 0.3, 0.2]), Decision(vec![0.1, 0.1, 0.8])];
    let vecs: Vec<LossVector> = advice.iter().map(|d| base.prediction(d)).collect();
    let mut s = SimplexDfa::with_defaults(sg, 1.0, 1.0, &prior, SolverConfig::default(), Verification::default()).unwrap();
    let mut d = Dfa::with_defaults(base.clone(), 1.0, 1.0, &prior, SolverConfig::default()).unwrap();
    for n in 0..10 {
        let o = n % 3;
        let (a, s2) = simplex_dfa_step(&s, &advice, |_| Distribution::point_mass(3, o)).unwrap();
        let (b, d2) = dfa_step(&d, &vecs, |_| o).unwrap();
        assert!(a.pi.probs().iter().zip(b.pi.probs()).all(|(x, y)| close(*x, *y, 1e-12)), "step {n}");
        s = s2;
        d = d2;
    }
    assert!(close(s.learner_loss(), d.learner_loss(), 1e-9));
}

#[test]
fn simplex_dfa_skip_refuses_to_predict() {
    let sg = SimplexGame::new(SimplexExtension::Kl, 3).unwrap();
    let s = SimplexDfa::with_defaults(sg, 1.0, 1.0, &Distribution::uniform(1), SolverConfig::default(), Verification::Skip)
        .unwrap();
    assert!(matches!(s.predict(&[Decision(vec![1.0 / 3.0; 3])]), Err(Error::PreconditionUnverified(_))));
}
