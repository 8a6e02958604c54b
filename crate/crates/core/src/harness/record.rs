//! Step records and their JSONL and CSV encodings.
//!
//! Field order in [`StepRecord`] is the documented key order of the JSONL
//! output. Infinite losses are written as the strings `"inf"` and `"-inf"`
//! because JSON has no infinity literal.

use std::fmt;
use std::io::{BufRead, Write};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An extended real that survives a JSON round trip.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else if self.0.is_nan() {
            s.serialize_str("nan")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

struct RealVisitor;

impl Visitor<'_> for RealVisitor {
    type Value = Real;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Real, E> {
        Ok(Real(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Real, E> {
        Ok(Real(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Real, E> {
        Ok(Real(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Real, E> {
        match v {
            "inf" => Ok(Real(f64::INFINITY)),
            "-inf" => Ok(Real(f64::NEG_INFINITY)),
            "nan" => Ok(Real(f64::NAN)),
            _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Real, D::Error> {
        d.deserialize_any(RealVisitor)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

pub fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

pub fn values(v: &[Real]) -> Vec<f64> {
    v.iter().map(|r| r.0).collect()
}

/// One round of a protocol, as logged.
///
/// Per-expert vectors are indexed by `theta`. `learner_loss[theta]` is the
/// Learner's loss as scored by expert `theta`'s evaluator; for single-loss
/// protocols every entry is the same.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based round number.
    pub step: usize,
    /// Each expert's decision.
    pub advice: Vec<Vec<f64>>,
    /// Each expert's loss vector over the base outcomes.
    pub advice_losses: Vec<Vec<Real>>,
    /// The forecaster's distribution, when the algorithm has one.
    pub pi: Option<Vec<f64>>,
    pub decision: Vec<f64>,
    /// Index of the outcome, or `None` when it is an interior point of the simplex.
    pub outcome: Option<usize>,
    /// The outcome as a distribution over base outcomes.
    pub outcome_point: Vec<f64>,
    pub learner_loss: Vec<Real>,
    pub learner_cumulative: Vec<Real>,
    pub expert_loss: Vec<Real>,
    pub expert_cumulative: Vec<Real>,
    /// Log of the supermartingale (defensive forecasting) or of the
    /// potential `sum P_0 exp(eta (L / c - L^theta))` (aggregating algorithm).
    pub log_supermartingale: Real,
    pub slack: Real,
    /// `sum ln(1 + slack)` up to and including this round.
    pub slack_log: Real,
    /// `L(theta) - c L^theta - (c / eta)(ln(1 / P_0(theta)) + slack_log)`.
    pub bound_margin: Vec<Real>,
    /// Fixed-point residual, for the fixed-point aggregating algorithm.
    pub residual: Option<Real>,
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[StepRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_jsonl_string(records: &[StepRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: StepRecord =
            serde_json::from_str(&line).map_err(|e| Error::Config(format!("trajectory line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Flat CSV trajectory: vectors are `;`-joined inside one cell.
pub fn write_trajectory_csv<W: Write>(out: W, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "step",
        "advice",
        "pi",
        "decision",
        "outcome",
        "outcome_point",
        "learner_loss",
        "learner_cumulative",
        "expert_loss",
        "expert_cumulative",
        "log_supermartingale",
        "slack",
        "slack_log",
        "bound_margin",
        "residual",
    ])
    .map_err(csv_err)?;
    for r in records {
        let advice: Vec<String> = r.advice.iter().map(|a| join(a)).collect();
        w.write_record([
            r.step.to_string(),
            advice.join("|"),
            r.pi.as_deref().map(join).unwrap_or_default(),
            join(&r.decision),
            r.outcome.map(|o| o.to_string()).unwrap_or_default(),
            join(&r.outcome_point),
            join(&r.learner_loss),
            join(&r.learner_cumulative),
            join(&r.expert_loss),
            join(&r.expert_cumulative),
            r.log_supermartingale.to_string(),
            r.slack.to_string(),
            r.slack_log.to_string(),
            join(&r.bound_margin),
            r.residual.map(|x| x.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
