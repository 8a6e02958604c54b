//! Loss-bound audits of finished trajectories and a brute-force solver oracle.

use std::io::Write;

use crate::error::{Error, Result};
use crate::numeric;
use crate::primitives::Distribution;

use super::record::StepRecord;
use super::run::{bound_margin, RunResult};

/// Allowed excess of the Learner's loss over the bound.
pub const MARGIN_TOL: f64 = 1e-7;

/// Relative tolerance when checking that cumulative fields are prefix sums.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub theta: usize,
    pub ok: bool,
    /// Largest margin over prefixes; `-inf` for an empty trajectory.
    pub worst_margin: f64,
    /// Step attaining `worst_margin`.
    pub worst_step: Option<usize>,
    /// First step whose cumulative losses are not the running sum of the instantaneous ones.
    pub inconsistent_step: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Drop the solver-slack allowance from the bound.
    pub strict: bool,
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { strict: false, tol: MARGIN_TOL }
    }
}

fn agrees(cum: f64, expected: f64) -> bool {
    if cum.is_infinite() || expected.is_infinite() {
        return cum == expected;
    }
    (cum - expected).abs() <= CONSISTENCY_TOL * cum.abs().max(expected.abs()).max(1.0)
}

/// Audits `L_N(theta) <= c L_N^theta + (c / eta)(ln(1 / P_0(theta)) + slack)` at every prefix.
pub fn verify_bound(records: &[StepRecord], theta: usize, c: f64, eta: f64, prior: f64) -> BoundReport {
    verify_bound_with(records, theta, c, eta, prior, VerifyOptions::default())
}

pub fn verify_bound_with(
    records: &[StepRecord],
    theta: usize,
    c: f64,
    eta: f64,
    prior: f64,
    opts: VerifyOptions,
) -> BoundReport {
    let log_prior = if prior > 0.0 { prior.ln() } else { f64::NEG_INFINITY };
    let mut worst = f64::NEG_INFINITY;
    let mut worst_step = None;
    let mut inconsistent = None;
    let (mut learner, mut expert) = (0.0, 0.0);
    for r in records {
        let (Some(l), Some(e), Some(lc), Some(ec)) = (
            r.learner_loss.get(theta),
            r.expert_loss.get(theta),
            r.learner_cumulative.get(theta),
            r.expert_cumulative.get(theta),
        ) else {
            inconsistent.get_or_insert(r.step);
            continue;
        };
        learner += l.0;
        expert += e.0;
        if inconsistent.is_none() && !(agrees(lc.0, learner) && agrees(ec.0, expert)) {
            inconsistent = Some(r.step);
        }
        let slack = if opts.strict { 0.0 } else { r.slack_log.0 };
        let margin = bound_margin(lc.0, ec.0, c, eta, log_prior, slack);
        if worst_step.is_none() || margin > worst {
            worst = margin;
            worst_step = Some(r.step);
        }
    }
    BoundReport {
        theta,
        ok: worst <= opts.tol && inconsistent.is_none(),
        worst_margin: worst,
        worst_step,
        inconsistent_step: inconsistent,
    }
}

/// Re-audits every expert of a trajectory against the run's constants.
pub fn verify_all(
    records: &[StepRecord],
    c: &[f64],
    eta: &[f64],
    prior: &[f64],
    opts: VerifyOptions,
) -> Vec<BoundReport> {
    (0..prior.len()).map(|t| verify_bound_with(records, t, c[t], eta[t], prior[t], opts)).collect()
}

/// The brute-force minimizer found by [`oracle_dfa_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub pi: Distribution,
    /// `max_omega q(pi, omega)` at `pi`.
    pub max_q: f64,
    /// Whether `max_q <= level`.
    pub admissible: bool,
}

/// Exhaustive minimizer of `max_omega q(pi, omega)` over the barycentric grid
/// with `grid` subdivisions. Points are visited in lexicographic order of
/// their coordinates (for two outcomes, increasing probability of outcome
/// 1), and the first minimizer wins.
pub fn oracle_dfa_solve(
    q: &dyn Fn(&Distribution) -> Vec<f64>,
    level: f64,
    m: usize,
    grid: usize,
) -> Result<OracleSolution> {
    if grid < 10 {
        return Err(Error::InvalidParameter(format!("oracle grid {grid} must be at least 10")));
    }
    let mut best: Option<(Distribution, f64)> = None;
    let mut consider = |pi: Distribution| {
        let v = q(&pi).into_iter().fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((pi, v));
        }
    };
    if m == 2 {
        for i in 0..=grid {
            consider(Distribution::binary(i as f64 / grid as f64)?);
        }
    } else {
        for p in numeric::simplex_lattice(m, grid) {
            consider(Distribution::from_weights(p)?);
        }
    }
    let (pi, max_q) = best.ok_or(Error::Empty("oracle grid"))?;
    Ok(OracleSolution { pi, max_q, admissible: max_q <= level })
}

/// One CSV row per weighted expert, quoting the bound constants used.
pub fn write_summary_csv<W: Write>(out: W, run: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "scenario",
        "algorithm",
        "game",
        "m",
        "horizon",
        "seed",
        "theta",
        "c",
        "eta",
        "prior",
        "additive_term",
        "learner_loss",
        "expert_loss",
        "regret",
        "slack_log",
        "worst_margin",
        "worst_step",
        "ok",
        "passed",
    ])
    .map_err(csv_err)?;
    let s = &run.summary;
    let k = &run.constants;
    for (t, a) in s.audits.iter().enumerate() {
        let regret = s.learner_loss[t] - s.expert_loss[t];
        w.write_record([
            s.name.clone(),
            s.algorithm.name().to_string(),
            s.game.clone(),
            s.m.to_string(),
            s.horizon.to_string(),
            s.seed.to_string(),
            t.to_string(),
            k.c[t].to_string(),
            k.eta[t].to_string(),
            k.prior[t].to_string(),
            k.additive_term(t).to_string(),
            s.learner_loss[t].to_string(),
            s.expert_loss[t].to_string(),
            regret.to_string(),
            s.slack_log.to_string(),
            a.worst_margin.to_string(),
            a.worst_step.map(|x| x.to_string()).unwrap_or_default(),
            a.ok.to_string(),
            s.passed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
