//! Scenario runs, trajectory logs and bound audits.

pub mod audit;
pub mod config;
pub mod record;
pub mod run;
pub mod strategies;

use std::io::Write;

use crate::error::{Error, Result};

pub use audit::{oracle_dfa_solve, verify_all, verify_bound, verify_bound_with, BoundReport, OracleSolution, VerifyOptions};
pub use config::{Algorithm, ExpertSpec, RealitySpec, ScenarioConfig};
pub use record::{read_jsonl, to_jsonl_string, write_jsonl, Real, StepRecord};
pub use run::{constants, run_scenario, run_scenario_with, Constants, RunResult, Summary};
pub use strategies::Registry;

/// The scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eta,
    Horizon,
    /// Replaces the experts with this many `iid-random` ones.
    Experts,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepParam::Eta),
            "horizon" | "n" => Ok(SweepParam::Horizon),
            "experts" | "k" => Ok(SweepParam::Experts),
            other => Err(Error::Config(format!("cannot sweep over {other:?}; use eta, horizon or experts"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::Horizon => "horizon",
            SweepParam::Experts => "experts",
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub horizon: usize,
    /// Regret against the best expert, under that expert's own loss.
    pub regret: f64,
    /// `c L^theta - L^theta + (c / eta) ln(1 / P_0(theta))` for that expert:
    /// the regret the bound allows, without slack.
    pub allowed: f64,
    pub slack_log: f64,
    pub bounds_ok: bool,
}

/// Runs `cfg` once per value of `param`.
pub fn sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match param {
                SweepParam::Eta => {
                    c.eta = Some(v);
                }
                SweepParam::Horizon => {
                    if !(v >= 0.0 && v.fract() == 0.0) {
                        return Err(Error::Config(format!("horizon {v} is not a nonnegative integer")));
                    }
                    c.horizon = v as usize;
                }
                SweepParam::Experts => {
                    if !(v >= 1.0 && v.fract() == 0.0) {
                        return Err(Error::Config(format!("expert count {v} is not a positive integer")));
                    }
                    c.experts = vec![ExpertSpec::IidRandom; v as usize];
                    c.prior = None;
                }
            }
            let run = run_scenario(&c)?;
            let s = &run.summary;
            let k = &run.constants;
            let best = (0..k.len())
                .min_by(|&a, &b| s.expert_loss[a].total_cmp(&s.expert_loss[b]))
                .expect("at least one expert");
            Ok(SweepRow {
                value: v,
                horizon: c.horizon,
                regret: s.learner_loss[best] - s.expert_loss[best],
                allowed: (k.c[best] - 1.0) * s.expert_loss[best] + k.additive_term(best),
                slack_log: s.slack_log,
                bounds_ok: s.bounds_ok,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, param: SweepParam, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([param.name(), "horizon", "regret", "allowed", "slack_log", "bounds_ok"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.horizon.to_string(),
            r.regret.to_string(),
            r.allowed.to_string(),
            r.slack_log.to_string(),
            r.bounds_ok.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
