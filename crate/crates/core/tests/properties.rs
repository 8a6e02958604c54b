//! Property tests for the invariants of each module.

use proptest::prelude::*;

use expert_advice::aggregating::{project_boundary, retraction, AaState};
use expert_advice::defensive::{dfa_solve_binary, Dfa, SolverConfig};
use expert_advice::harness::{run_scenario, to_jsonl_string, ScenarioConfig};
use expert_advice::losses::{
    builtin_game, homogeneous_entropy, proper_loss_from_entropy, realizability_constant, ProperLoss,
};
use expert_advice::primitives::{exp_mix, expected_loss, is_superprediction};
use expert_advice::{Decision, Distribution, GameRef, LossVector};

fn game(name: &str) -> GameRef {
    builtin_game(name, 2).unwrap()
}

fn dist(weights: &[f64]) -> Distribution {
    Distribution::from_weights(weights.to_vec()).unwrap()
}

fn lv(v: &[f64]) -> LossVector {
    LossVector::new(v.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn expected_loss_is_linear(
        w in prop::collection::vec(0.01f64..1.0, 3),
        g1 in prop::collection::vec(0.0f64..10.0, 3),
        g2 in prop::collection::vec(0.0f64..10.0, 3),
        a in 0.0f64..5.0,
        b in 0.0f64..5.0,
    ) {
        let pi = dist(&w);
        let combo: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let lhs = expected_loss(&pi, &lv(&combo)).unwrap().value();
        let rhs = a * expected_loss(&pi, &lv(&g1)).unwrap().value() + b * expected_loss(&pi, &lv(&g2)).unwrap().value();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn exp_mix_lies_between_min_and_linear_mix(
        points in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 2), 1..5),
        raw in prop::collection::vec(0.01f64..1.0, 5),
        eta in 0.1f64..3.0,
    ) {
        let k = points.len();
        let rho = dist(&raw[..k]);
        let pts: Vec<LossVector> = points.iter().map(|p| lv(p)).collect();
        let mixed = exp_mix(&pts, &rho, eta).unwrap();
        for o in 0..2 {
            let lo = points.iter().map(|p| p[o]).fold(f64::INFINITY, f64::min);
            let linear: f64 = points.iter().zip(rho.probs()).map(|(p, w)| w * p[o]).sum();
            prop_assert!(mixed.values()[o] >= lo - 1e-12);
            prop_assert!(mixed.values()[o] <= linear + 1e-12);
        }
    }

    #[test]
    fn exp_mix_is_monotone(
        base in prop::collection::vec(0.0f64..5.0, 2),
        other in prop::collection::vec(0.0f64..5.0, 2),
        bump in prop::collection::vec(0.0f64..2.0, 2),
        w in 0.01f64..0.99,
        eta in 0.1f64..3.0,
    ) {
        let rho = dist(&[w, 1.0 - w]);
        let raised: Vec<f64> = base.iter().zip(&bump).map(|(x, d)| x + d).collect();
        let a = exp_mix(&[lv(&base), lv(&other)], &rho, eta).unwrap();
        let b = exp_mix(&[lv(&raised), lv(&other)], &rho, eta).unwrap();
        for o in 0..2 {
            prop_assert!(a.values()[o] <= b.values()[o] + 1e-12);
        }
    }

    #[test]
    fn superprediction_is_upward_closed(
        name in prop::sample::select(vec!["log", "square", "absolute", "brier", "hellinger"]),
        g in prop::collection::vec(0.0f64..2.0, 2),
        bump in prop::collection::vec(0.0f64..1.0, 2),
    ) {
        let gm = game(name);
        let raised: Vec<f64> = g.iter().zip(&bump).map(|(x, d)| x + d).collect();
        if is_superprediction(gm.as_ref(), &lv(&g), 1e-9).unwrap() {
            prop_assert!(is_superprediction(gm.as_ref(), &lv(&raised), 1e-9).unwrap());
        }
    }

    #[test]
    fn proper_loss_expectation_is_entropy(
        name in prop::sample::select(vec!["log", "square", "brier", "hellinger"]),
        p in 0.02f64..0.98,
    ) {
        let gm = game(name);
        let eta = gm.eta_mixable_max().unwrap();
        let lambda = proper_loss_from_entropy(&gm, eta).unwrap();
        let pi = Distribution::binary(p).unwrap();
        let expected = expected_loss(&pi, &lambda.eval(&pi)).unwrap().value();
        let h = homogeneous_entropy(&gm, eta, pi.probs()).unwrap();
        prop_assert!((expected - h).abs() <= 1e-6, "{} vs {}", expected, h);
    }

    #[test]
    fn entropy_extension_is_homogeneous(
        name in prop::sample::select(vec!["log", "brier", "hellinger"]),
        p in 0.02f64..0.98,
        t in prop::sample::select(vec![0.5, 2.0]),
    ) {
        let gm = game(name);
        let x = [1.0 - p, p];
        let scaled = [t * x[0], t * x[1]];
        let h = homogeneous_entropy(&gm, 1.0, &x).unwrap();
        let ht = homogeneous_entropy(&gm, 1.0, &scaled).unwrap();
        prop_assert!((ht - t * h).abs() <= 1e-8);
    }

    #[test]
    fn mixing_ignores_weight_scale(
        ps in prop::collection::vec(0.01f64..0.99, 3),
        shared in 0.25f64..3.0,
        outcome in 0usize..2,
    ) {
        // Equal losses for every expert rescale all weights by one factor.
        let sq = game("square");
        let advice: Vec<LossVector> = ps.iter().map(|p| sq.prediction(&Decision::scalar(*p))).collect();
        let a = AaState::new(sq.clone(), 1.0, 2.0, &Distribution::uniform(3)).unwrap();
        let shift = vec![lv(&[shared, shared]); 3];
        let pred = a.predict(&shift).unwrap();
        let b = a.observe(&shift, &pred, outcome).unwrap();
        let ma = a.mix(&advice).unwrap();
        let mb = b.mix(&advice).unwrap();
        for o in 0..2 {
            prop_assert!((ma.values()[o] - mb.values()[o]).abs() <= 1e-12);
        }
    }

    #[test]
    fn boundary_projection_is_idempotent(x in 0.3f64..3.0, y in 0.3f64..3.0) {
        let abs = game("absolute");
        let c = realizability_constant(abs.as_ref(), 1.0).unwrap();
        prop_assume!(x + y >= 1.0);
        // c times the input must be a superprediction.
        let inside = lv(&[x, y]).scaled(1.0 / c);
        let v = project_boundary(abs.as_ref(), &inside, c).unwrap();
        let w = project_boundary(abs.as_ref(), &v, c).unwrap();
        for o in 0..2 {
            prop_assert!((v.values()[o] - w.values()[o]).abs() <= 1e-8 * v.values()[o].max(1.0));
        }
    }

    #[test]
    fn retraction_output_is_minimal(p in 0.05f64..0.95, up0 in 0.0f64..1.0, up1 in 0.0f64..1.0) {
        let log = game("log");
        let base = log.prediction(&Decision::scalar(p));
        let g = lv(&[base.values()[0] + up0, base.values()[1] + up1]);
        let f = retraction(log.as_ref(), &g, 1.0).unwrap();
        prop_assert!(f.values()[0] <= g.values()[0] + 1e-12 && f.values()[1] <= g.values()[1] + 1e-12);
        for o in 0..2 {
            let mut lowered = f.values().to_vec();
            lowered[o] -= 1e-6;
            if lowered[o] >= 0.0 {
                prop_assert!(!is_superprediction(log.as_ref(), &lv(&lowered), 1e-12).unwrap());
            }
        }
    }

    #[test]
    fn aa_potential_never_rises_and_bound_holds(
        ps in prop::collection::vec(0.01f64..0.99, 2..5),
        outcomes in prop::collection::vec(0usize..2, 1..40),
    ) {
        let log = game("log");
        let k = ps.len();
        let advice: Vec<LossVector> = ps.iter().map(|p| log.prediction(&Decision::scalar(*p))).collect();
        let mut s = AaState::new(log.clone(), 1.0, 1.0, &Distribution::uniform(k)).unwrap();
        for o in outcomes {
            let pred = s.predict(&advice).unwrap();
            let next = s.observe(&advice, &pred, o).unwrap();
            prop_assert!(next.log_potential() <= s.log_potential() + 1e-9);
            s = next;
            for t in 0..k {
                prop_assert!(s.learner_loss() <= s.loss_bound(t) + 1e-7);
            }
        }
    }

    #[test]
    fn dfa_potential_matches_product_of_terms(
        ps in prop::collection::vec(0.01f64..0.99, 2..4),
        outcomes in prop::collection::vec(0usize..2, 1..30),
    ) {
        let sq = game("square");
        let k = ps.len();
        let advice: Vec<LossVector> = ps.iter().map(|p| sq.prediction(&Decision::scalar(*p))).collect();
        let mut d = Dfa::with_defaults(sq.clone(), 1.0, 2.0, &Distribution::uniform(k), SolverConfig::default()).unwrap();
        for o in outcomes {
            let pred = d.predict(&advice).unwrap();
            let next = d.observe(&advice, &pred, o).unwrap();
            prop_assert!(next.supermartingale().log_value() <= d.supermartingale().log_value() + pred.slack.ln_1p() + 1e-12);
            d = next;
        }
        // ln Q from the running losses of lambda and of the experts.
        let terms: Vec<f64> = d.expert_loss().iter().map(|e| (1.0 / k as f64).ln() + 2.0 * (d.lambda_loss() - e)).collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expected = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
        let got = d.supermartingale().log_value();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{} vs {}", got, expected);
    }

    #[test]
    fn binary_solver_is_deterministic_and_admissible(ps in prop::collection::vec(0.01f64..0.99, 1..4), w in prop::collection::vec(0.1f64..1.0, 4)) {
        let log = game("log");
        let lambda = ProperLoss::canonical(&log).unwrap();
        let weights = dist(&w[..ps.len()]);
        let q = |p: f64| {
            let l = lambda.eval(&Distribution::binary(p.clamp(0.0, 1.0)).unwrap());
            let mut out = [0.0; 2];
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = ps.iter().zip(weights.probs()).map(|(e, wt)| {
                    let g = log.loss(&Decision::scalar(*e), o);
                    wt * (l.values()[o] - g).exp()
                }).sum();
            }
            out
        };
        let a = dfa_solve_binary(&q, 1.0, 1e-12).unwrap();
        let b = dfa_solve_binary(&q, 1.0, 1e-12).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let v = q(a);
        prop_assert!(v[0] <= 1.0 + 1e-9 && v[1] <= 1.0 + 1e-9);
    }
}

fn small_scenario(seed: u64, algorithm: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(&format!(
        r#"
name = "prop"
algorithm = "{algorithm}"
horizon = 30
seed = {seed}
game = {{ name = "square", m = 2 }}
experts = [{{ kind = "iid-random" }}, {{ kind = "iid-random" }}, {{ kind = "trailing-average" }}]
reality = {{ kind = "iid", probs = [0.5, 0.5] }}
"#
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), algorithm in prop::sample::select(vec!["aa", "dfa"])) {
        let cfg = small_scenario(seed, algorithm);
        let a = to_jsonl_string(&run_scenario(&cfg).unwrap().records).unwrap();
        let b = to_jsonl_string(&run_scenario(&cfg).unwrap().records).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_expert_bound_holds_on_random_runs(seed in any::<u64>(), algorithm in prop::sample::select(vec!["aa", "dfa"])) {
        let run = run_scenario(&small_scenario(seed, algorithm)).unwrap();
        prop_assert!(run.summary.bounds_ok, "{:?}", run.summary.audits);
    }
}
