//! Built-in games, generalized entropies, proper losses and property checks.
//!
//! Binary games take a single decision `p`, the probability assigned to
//! outcome 1, and their loss vectors are ordered `(loss if 0, loss if 1)`.
//! Games with three or more outcomes take a probability vector.

use std::fmt;
use std::sync::Arc;

use crate::aggregating::project_boundary;
use crate::error::{Error, Result};
use crate::numeric;
use crate::primitives::{
    argmin_decision, exp_mix, expected_loss, Decision, DecisionDomain, Distribution, Game, GameRef, LossVector,
    OutcomeSpace,
};
use crate::sampling;

/// Loss families shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinKind {
    Log,
    Square,
    Brier,
    Absolute,
    Hellinger,
    Kl,
}

impl BuiltinKind {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "log" => BuiltinKind::Log,
            "square" => BuiltinKind::Square,
            "brier" => BuiltinKind::Brier,
            "absolute" => BuiltinKind::Absolute,
            "hellinger" => BuiltinKind::Hellinger,
            "kl" => BuiltinKind::Kl,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinKind::Log => "log",
            BuiltinKind::Square => "square",
            BuiltinKind::Brier => "brier",
            BuiltinKind::Absolute => "absolute",
            BuiltinKind::Hellinger => "hellinger",
            BuiltinKind::Kl => "kl",
        }
    }
}

/// Looks up a built-in game by name.
///
/// Besides the loss families of [`BuiltinKind`] this knows `log-dummy`, the
/// three-outcome log game with a constant third loss, and `simple`, the
/// two-point game `{(0, 1), (1, 0)}`.
pub fn builtin_game(name: &str, m: usize) -> Result<GameRef> {
    if m < 2 {
        return Err(Error::Unsupported(format!("{name} needs at least two outcomes, got {m}")));
    }
    match name {
        "log-dummy" => {
            if m != 3 {
                return Err(Error::Unsupported("log-dummy has exactly three outcomes".into()));
            }
            return Ok(Arc::new(LogWithDummy::new()));
        }
        "simple" => {
            if m != 2 {
                return Err(Error::Unsupported("simple has exactly two outcomes".into()));
            }
            return Ok(Arc::new(SimplePrediction::new()));
        }
        _ => {}
    }
    let kind = BuiltinKind::parse(name).ok_or_else(|| Error::Unsupported(format!("unknown game {name:?}")))?;
    if matches!(kind, BuiltinKind::Square | BuiltinKind::Absolute) && m != 2 {
        return Err(Error::Unsupported(format!("{name} is only defined for two outcomes")));
    }
    Ok(Arc::new(BuiltinGame { kind, outcomes: OutcomeSpace::indexed(m)? }))
}

/// One of the [`BuiltinKind`] games on `m` outcomes.
#[derive(Debug, Clone)]
pub struct BuiltinGame {
    kind: BuiltinKind,
    outcomes: OutcomeSpace,
}

impl BuiltinGame {
    pub fn kind(&self) -> BuiltinKind {
        self.kind
    }

    fn probs(&self, d: &Decision) -> Vec<f64> {
        if self.m() == 2 {
            let p = d.0[0].clamp(0.0, 1.0);
            vec![1.0 - p, p]
        } else {
            d.0.iter().map(|x| x.max(0.0)).collect()
        }
    }

    fn loss_at(&self, pi: &[f64], omega: usize) -> f64 {
        match self.kind {
            BuiltinKind::Log | BuiltinKind::Kl => neg_ln(pi[omega]),
            BuiltinKind::Square => {
                let r = pi[1] - omega as f64;
                r * r
            }
            BuiltinKind::Brier => brier(pi, omega),
            BuiltinKind::Absolute => (pi[1] - omega as f64).abs(),
            BuiltinKind::Hellinger => 1.0 - pi[omega].max(0.0).sqrt(),
        }
    }

    /// `[lo, hi]` with `lambda(p, 0) <= x` iff `p <= hi` and `lambda(p, 1) <= y` iff `p >= lo`.
    fn binary_feasible(&self, x: f64, y: f64) -> (f64, f64) {
        let (lo, hi) = match self.kind {
            BuiltinKind::Log | BuiltinKind::Kl => ((-y).exp(), 1.0 - (-x).exp()),
            BuiltinKind::Square => (1.0 - y.sqrt(), x.sqrt()),
            BuiltinKind::Brier => (1.0 - (y / 2.0).sqrt(), (x / 2.0).sqrt()),
            BuiltinKind::Absolute => (1.0 - y, x),
            BuiltinKind::Hellinger => ((1.0 - y).max(0.0).powi(2), 1.0 - (1.0 - x).max(0.0).powi(2)),
        };
        (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
    }

    fn binary_crossing(&self, g: &LossVector) -> (f64, f64) {
        let l0 = |p: f64| self.loss_at(&[1.0 - p, p], 0);
        let l1 = |p: f64| self.loss_at(&[1.0 - p, p], 1);
        binary_crossing(l0, l1, g.values()[0], g.values()[1])
    }
}

fn neg_ln(x: f64) -> f64 {
    if x <= 0.0 {
        f64::INFINITY
    } else {
        -x.ln()
    }
}

fn brier(pi: &[f64], omega: usize) -> f64 {
    let mut s = 0.0;
    for (o, p) in pi.iter().enumerate() {
        let r = if o == omega { 1.0 } else { 0.0 } - p;
        s += r * r;
    }
    s
}

/// Minimizes `max(l0(p) - x, l1(p) - y)` over `[0, 1]` for nondecreasing `l0`
/// and nonincreasing `l1`. Returns the minimizer and the minimum.
pub fn binary_crossing<F0: Fn(f64) -> f64, F1: Fn(f64) -> f64>(l0: F0, l1: F1, x: f64, y: f64) -> (f64, f64) {
    let inf = f64::INFINITY;
    match (x == inf, y == inf) {
        (true, true) => return (0.5, f64::NEG_INFINITY),
        (true, false) => return (1.0, excess(l1(1.0), y)),
        (false, true) => return (0.0, excess(l0(0.0), x)),
        _ => {}
    }
    let h = |p: f64| excess(l0(p), x) - excess(l1(p), y);
    if h(0.0) >= 0.0 {
        return (0.0, excess(l0(0.0), x).max(excess(l1(0.0), y)));
    }
    if h(1.0) <= 0.0 {
        return (1.0, excess(l0(1.0), x).max(excess(l1(1.0), y)));
    }
    let p = numeric::bisect_sign_change(|p| -h(p), 0.0, 1.0, 0.0);
    (p, excess(l0(p), x).max(excess(l1(p), y)))
}

fn excess(l: f64, g: f64) -> f64 {
    if l == f64::INFINITY {
        f64::INFINITY
    } else {
        l - g
    }
}

/// Replaces infinite coordinates by a finite value large enough never to be
/// the binding constraint for a game whose losses are bounded by `bound`.
fn cap_infinite(g: &[f64], bound: f64) -> Option<Vec<f64>> {
    let finite_max = g.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if finite_max == f64::NEG_INFINITY {
        return None;
    }
    let cap = finite_max + bound + 10.0;
    Some(g.iter().map(|v| if v.is_finite() { *v } else { cap }).collect())
}

/// Brier gap via the dual `max_pi (H(pi) - E_pi g)`, which has a closed-form
/// maximizer: the projection of `-g/2` onto the simplex.
fn brier_dual(g: &[f64]) -> Option<(Vec<f64>, f64)> {
    let g = cap_infinite(g, 2.0)?;
    let v: Vec<f64> = g.iter().map(|x| -x / 2.0).collect();
    let pi = numeric::project_to_simplex(&v);
    let sq: f64 = pi.iter().map(|p| p * p).sum();
    let lin: f64 = pi.iter().zip(&g).map(|(p, x)| p * x).sum();
    Some((pi, 1.0 - sq - lin))
}

fn hellinger_gap(g: &[f64]) -> Option<f64> {
    let g = cap_infinite(g, 1.0)?;
    let min_g = g.iter().copied().fold(f64::INFINITY, f64::min);
    let mass = |d: f64| -> f64 { g.iter().map(|x| (1.0 - x - d).max(0.0).powi(2)).sum() };
    let max_g = g.iter().copied().fold(0.0, f64::max);
    let d = numeric::bisect_predicate(|d| mass(d) <= 1.0, -max_g - 2.0, 1.0, 1e-15);
    Some(d.max(-min_g))
}

fn log_gap(g: &[f64]) -> f64 {
    let terms: Vec<f64> = g.iter().filter(|v| v.is_finite()).map(|v| -v).collect();
    numeric::log_sum_exp(&terms)
}

impl Game for BuiltinGame {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn outcomes(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    fn domain(&self) -> DecisionDomain {
        if self.m() == 2 {
            DecisionDomain::UnitInterval
        } else {
            DecisionDomain::Simplex(self.m())
        }
    }

    fn loss(&self, decision: &Decision, omega: usize) -> f64 {
        self.loss_at(&self.probs(decision), omega)
    }

    fn eta_mixable_max(&self) -> Option<f64> {
        match self.kind {
            BuiltinKind::Log | BuiltinKind::Kl | BuiltinKind::Brier => Some(1.0),
            BuiltinKind::Square => Some(2.0),
            BuiltinKind::Absolute => None,
            BuiltinKind::Hellinger => (self.m() == 2).then_some(std::f64::consts::SQRT_2),
        }
    }

    fn proper_loss(&self, pi: &Distribution) -> Option<LossVector> {
        let p = pi.probs();
        let v: Vec<f64> = match self.kind {
            BuiltinKind::Log | BuiltinKind::Kl => p.iter().map(|x| neg_ln(*x)).collect(),
            BuiltinKind::Square => vec![p[1] * p[1], p[0] * p[0]],
            BuiltinKind::Brier => (0..p.len()).map(|o| brier(p, o)).collect(),
            BuiltinKind::Hellinger => {
                let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                p.iter().map(|x| 1.0 - x / norm).collect()
            }
            BuiltinKind::Absolute => return None,
        };
        LossVector::from_computed(v).ok()
    }

    fn entropy_closed_form(&self, pi: &Distribution) -> Option<f64> {
        let p = pi.probs();
        Some(match self.kind {
            BuiltinKind::Log | BuiltinKind::Kl => p.iter().filter(|x| **x > 0.0).map(|x| -x * x.ln()).sum(),
            BuiltinKind::Square => p[0] * p[1],
            BuiltinKind::Brier => 1.0 - p.iter().map(|x| x * x).sum::<f64>(),
            BuiltinKind::Hellinger => 1.0 - p.iter().map(|x| x * x).sum::<f64>().sqrt(),
            BuiltinKind::Absolute => p[0].min(p[1]),
        })
    }

    fn superprediction_gap(&self, g: &LossVector) -> f64 {
        let v = g.values();
        if v.iter().all(|x| *x == f64::INFINITY) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            BuiltinKind::Log | BuiltinKind::Kl => log_gap(v),
            BuiltinKind::Brier => brier_dual(v).map(|x| x.1).unwrap_or(f64::NEG_INFINITY),
            BuiltinKind::Hellinger => hellinger_gap(v).unwrap_or(f64::NEG_INFINITY),
            BuiltinKind::Square | BuiltinKind::Absolute => self.binary_crossing(g).1,
        }
    }

    fn substitution(&self, g: &LossVector, tol: f64) -> Option<Decision> {
        let v = g.values();
        if self.m() == 2 {
            let (lo, hi) = self.binary_feasible(v[0], v[1]);
            if lo <= hi {
                return Some(Decision::scalar(0.5 * (lo + hi)));
            }
            let (p, gap) = self.binary_crossing(g);
            return (gap <= tol).then(|| Decision::scalar(p));
        }
        let m = self.m() as f64;
        match self.kind {
            BuiltinKind::Log | BuiltinKind::Kl => {
                let e: Vec<f64> = v.iter().map(|x| (-x).exp()).collect();
                let s: f64 = e.iter().sum();
                if s <= 1.0 {
                    Some(Decision(e.iter().map(|x| x + (1.0 - s) / m).collect()))
                } else if s.ln() <= tol {
                    Some(Decision(e.iter().map(|x| x / s).collect()))
                } else {
                    None
                }
            }
            BuiltinKind::Brier => {
                let (pi, gap) = brier_dual(v)?;
                (gap <= tol).then_some(Decision(pi))
            }
            BuiltinKind::Hellinger => {
                let gap = hellinger_gap(v)?;
                if gap > tol {
                    return None;
                }
                let a: Vec<f64> = v.iter().map(|x| (1.0 - x - gap.max(0.0)).max(0.0).powi(2)).collect();
                let s: f64 = a.iter().sum();
                if s <= 1.0 {
                    Some(Decision(a.iter().map(|x| x + (1.0 - s) / m).collect()))
                } else {
                    Some(Decision(a.iter().map(|x| x / s).collect()))
                }
            }
            BuiltinKind::Square | BuiltinKind::Absolute => None,
        }
    }

    fn hull_gap(&self, g: &LossVector, eta: f64) -> Option<f64> {
        if self.is_mixable_at(eta) {
            return Some(self.superprediction_gap(g));
        }
        if self.kind == BuiltinKind::Absolute {
            return Some(two_point_hull_gap(g.values(), eta));
        }
        if self.m() == 2 {
            return Some(binary_hull_gap(self, g, eta));
        }
        None
    }

    fn hull_proper_loss(&self, pi: &Distribution, eta: f64) -> Option<LossVector> {
        if self.kind == BuiltinKind::Absolute {
            Some(two_point_hull_proper(pi.get(1), eta))
        } else {
            None
        }
    }
}

/// Hull gap for the games whose exp-image hull is bounded by the chord
/// between `(1, exp(-eta))` and `(exp(-eta), 1)`: absolute loss and simple prediction.
fn two_point_hull_gap(g: &[f64], eta: f64) -> f64 {
    let (x, y) = (g[0], g[1]);
    if x == f64::INFINITY && y == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let k = 1.0 + (-eta).exp();
    let ex = if x.is_finite() { (-eta * x).exp() } else { 0.0 };
    let ey = if y.is_finite() { (-eta * y).exp() } else { 0.0 };
    let d = ((ex + ey) / k).ln() / eta;
    let min_g = x.min(y);
    d.max(-min_g)
}

fn two_point_hull_proper(p: f64, eta: f64) -> LossVector {
    let k = 1.0 + (-eta).exp();
    let u = (k * (1.0 - p)).clamp(k - 1.0, 1.0);
    let x = -u.ln() / eta;
    let y = -(k - u).ln() / eta;
    LossVector::from_computed(vec![x.max(0.0), y.max(0.0)]).expect("finite hull loss")
}

/// Hull membership for a binary game from the upper concave envelope of its
/// exp-image, sampled on a fine grid. Accurate to the grid spacing.
pub fn binary_hull_gap<G: Game + ?Sized>(game: &G, g: &LossVector, eta: f64) -> f64 {
    let n = 2048;
    let mut pts: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let d = Decision::scalar(i as f64 / n as f64);
            let l = game.prediction(&d);
            (l.get(0).exp_neg(eta), l.get(1).exp_neg(eta))
        })
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let envelope = |u: f64| -> f64 {
        let mut best = f64::NEG_INFINITY;
        for w in hull.windows(2) {
            let ((u0, v0), (u1, v1)) = (w[0], w[1]);
            if u1 < u {
                continue;
            }
            best = best.max(v1);
            if u0 <= u && u1 > u0 {
                best = best.max(v0 + (v1 - v0) * (u - u0) / (u1 - u0));
            } else if u0 >= u {
                best = best.max(v0);
            }
        }
        if hull.len() == 1 && hull[0].0 >= u {
            best = hull[0].1;
        }
        best
    };
    let v = g.values();
    if v.iter().all(|x| *x == f64::INFINITY) {
        return f64::NEG_INFINITY;
    }
    let member = |d: f64| -> bool {
        let u = if v[0].is_finite() { (-eta * (v[0] + d)).exp() } else { 0.0 };
        let w = if v[1].is_finite() { (-eta * (v[1] + d)).exp() } else { 0.0 };
        w <= envelope(u) * (1.0 + 1e-13)
    };
    let lo = -v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    if member(lo) {
        return lo;
    }
    let mut hi = lo.abs().max(1.0);
    while !member(hi) && hi < 1e9 {
        hi *= 2.0;
    }
    numeric::bisect_predicate(member, lo, hi, 1e-13)
}

/// The three-outcome game `{(-ln p, -ln(1 - p), 1)}`: log loss on the first
/// two outcomes and a constant loss on the third. Its proper loss has no
/// continuous extension to the vertex of the third outcome.
#[derive(Debug, Clone)]
pub struct LogWithDummy {
    outcomes: OutcomeSpace,
}

impl LogWithDummy {
    pub fn new() -> Self {
        LogWithDummy { outcomes: OutcomeSpace::indexed(3).expect("three labels") }
    }
}

impl Default for LogWithDummy {
    fn default() -> Self {
        Self::new()
    }
}

impl Game for LogWithDummy {
    fn name(&self) -> String {
        "log-dummy".into()
    }

    fn outcomes(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    fn domain(&self) -> DecisionDomain {
        DecisionDomain::UnitInterval
    }

    fn loss(&self, decision: &Decision, omega: usize) -> f64 {
        let p = decision.0[0].clamp(0.0, 1.0);
        match omega {
            0 => neg_ln(p),
            1 => neg_ln(1.0 - p),
            _ => 1.0,
        }
    }

    fn eta_mixable_max(&self) -> Option<f64> {
        Some(1.0)
    }

    fn entropy_closed_form(&self, pi: &Distribution) -> Option<f64> {
        let p = pi.probs();
        let head = p[0] + p[1];
        let xlnx = |x: f64| if x > 0.0 { x * (x / head).ln() } else { 0.0 };
        Some(-xlnx(p[0]) - xlnx(p[1]) + p[2])
    }

    fn superprediction_gap(&self, g: &LossVector) -> f64 {
        let v = g.values();
        let dummy = if v[2].is_finite() { 1.0 - v[2] } else { f64::NEG_INFINITY };
        log_gap(&v[..2]).max(dummy)
    }

    fn substitution(&self, g: &LossVector, tol: f64) -> Option<Decision> {
        let v = g.values();
        if self.superprediction_gap(g) > tol {
            return None;
        }
        let lo = (-v[0]).exp();
        let hi = 1.0 - (-v[1]).exp();
        if lo <= hi {
            Some(Decision::scalar(0.5 * (lo + hi)))
        } else {
            let s = lo + (-v[1]).exp();
            Some(Decision::scalar(lo / s))
        }
    }
}

/// The two-point game `{(0, 1), (1, 0)}`: predict outcome 1 when `p >= 1/2`.
#[derive(Debug, Clone)]
pub struct SimplePrediction {
    outcomes: OutcomeSpace,
}

impl SimplePrediction {
    pub fn new() -> Self {
        SimplePrediction { outcomes: OutcomeSpace::indexed(2).expect("two labels") }
    }
}

impl Default for SimplePrediction {
    fn default() -> Self {
        Self::new()
    }
}

impl Game for SimplePrediction {
    fn name(&self) -> String {
        "simple".into()
    }

    fn outcomes(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    fn domain(&self) -> DecisionDomain {
        DecisionDomain::UnitInterval
    }

    fn loss(&self, decision: &Decision, omega: usize) -> f64 {
        let predicted = usize::from(decision.0[0] >= 0.5);
        if predicted == omega {
            0.0
        } else {
            1.0
        }
    }

    fn eta_mixable_max(&self) -> Option<f64> {
        None
    }

    fn superprediction_gap(&self, g: &LossVector) -> f64 {
        let v = g.values();
        let a = excess(0.0, v[0]).max(excess(1.0, v[1]));
        let b = excess(1.0, v[0]).max(excess(0.0, v[1]));
        let fix = |e: f64, x: f64, y: f64| if x.is_infinite() && y.is_infinite() { f64::NEG_INFINITY } else { e };
        fix(a.min(b), v[0], v[1])
    }

    fn substitution(&self, g: &LossVector, tol: f64) -> Option<Decision> {
        let v = g.values();
        let zero = excess(0.0, v[0]).max(excess(1.0, v[1]));
        let one = excess(1.0, v[0]).max(excess(0.0, v[1]));
        if zero.min(one) > tol {
            return None;
        }
        Some(Decision::scalar(if zero <= one { 0.0 } else { 1.0 }))
    }

    fn hull_gap(&self, g: &LossVector, eta: f64) -> Option<f64> {
        Some(two_point_hull_gap(g.values(), eta))
    }

    fn hull_proper_loss(&self, pi: &Distribution, eta: f64) -> Option<LossVector> {
        Some(two_point_hull_proper(pi.get(1), eta))
    }
}

type LossFn = dyn Fn(&Decision, usize) -> f64 + Send + Sync;

/// A game defined by a user-supplied loss function. Everything beyond the
/// loss itself falls back to numerical search.
#[derive(Clone)]
pub struct ParametricGame {
    name: String,
    outcomes: OutcomeSpace,
    domain: DecisionDomain,
    eta_max: Option<f64>,
    loss: Arc<LossFn>,
}

impl ParametricGame {
    pub fn new(
        name: impl Into<String>,
        outcomes: OutcomeSpace,
        domain: DecisionDomain,
        eta_max: Option<f64>,
        loss: impl Fn(&Decision, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ParametricGame { name: name.into(), outcomes, domain, eta_max, loss: Arc::new(loss) }
    }
}

impl fmt::Debug for ParametricGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricGame").field("name", &self.name).field("domain", &self.domain).finish()
    }
}

impl Game for ParametricGame {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn outcomes(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    fn domain(&self) -> DecisionDomain {
        self.domain
    }

    fn loss(&self, decision: &Decision, omega: usize) -> f64 {
        (self.loss)(decision, omega)
    }

    fn eta_mixable_max(&self) -> Option<f64> {
        self.eta_max
    }

    fn hull_gap(&self, g: &LossVector, eta: f64) -> Option<f64> {
        if self.is_mixable_at(eta) {
            Some(self.superprediction_gap(g))
        } else if self.m() == 2 && self.domain == DecisionDomain::UnitInterval {
            Some(binary_hull_gap(self, g, eta))
        } else {
            None
        }
    }
}

/// How a generalized entropy value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMethod {
    /// Minimum of the expected loss over a grid-and-refine decision search.
    DecisionSearch,
    /// Minimum over sampled exp-mixtures of predictions (non-mixable rates).
    ExpMixtureSampling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyValue {
    pub value: f64,
    pub method: EntropyMethod,
    /// Number of candidate points evaluated.
    pub samples: usize,
}

/// `H(pi)`: the smallest expected loss `E_pi g` over the superprediction set
/// of the exp-hull at rate `eta`, found numerically.
pub fn generalized_entropy(game: &dyn Game, pi: &Distribution, eta: f64) -> Result<EntropyValue> {
    if pi.len() != game.m() {
        return Err(Error::DimensionMismatch { expected: game.m(), got: pi.len() });
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {eta}")));
    }
    let expected = |d: &Decision| expected_loss(pi, &game.prediction(d)).map(|v| v.value()).unwrap_or(f64::INFINITY);
    if game.is_mixable_at(eta) {
        let mut count = 0usize;
        let (_, value) = argmin_decision(game, |d| {
            count += 1;
            expected(d)
        });
        return Ok(EntropyValue { value, method: EntropyMethod::DecisionSearch, samples: count });
    }
    let mut best = f64::INFINITY;
    let mut count = 0usize;
    let mut consider = |g: &LossVector| {
        count += 1;
        let v = expected_loss(pi, g).map(|x| x.value()).unwrap_or(f64::INFINITY);
        if v < best {
            best = v;
        }
    };
    match game.domain() {
        DecisionDomain::UnitInterval => {
            let n = 128;
            let preds: Vec<LossVector> = (0..=n).map(|i| game.prediction(&Decision::scalar(i as f64 / n as f64))).collect();
            for p in &preds {
                consider(p);
            }
            let weights = 64;
            for i in 0..preds.len() {
                for j in (i + 1)..preds.len() {
                    for k in 1..weights {
                        let w = k as f64 / weights as f64;
                        let rho = Distribution::from_weights(vec![w, 1.0 - w])?;
                        let g = exp_mix(&[preds[i].clone(), preds[j].clone()], &rho, eta)?;
                        consider(&g);
                    }
                }
            }
        }
        DecisionDomain::Simplex(m) => {
            let mut rng = sampling::stream(0x5eed, 0);
            for _ in 0..20_000 {
                let preds: Vec<LossVector> =
                    (0..m).map(|_| game.prediction(&sampling::random_decision(&mut rng, game.domain()))).collect();
                let rho = Distribution::from_weights(sampling::uniform_simplex(&mut rng, m))?;
                let g = exp_mix(&preds, &rho, eta)?;
                consider(&g);
            }
        }
    }
    Ok(EntropyValue { value: best, method: EntropyMethod::ExpMixtureSampling, samples: count })
}

/// The loss vector of a decision minimizing `E_pi lambda(decision, .)`.
pub fn direct_argmin_loss(game: &dyn Game, pi: &Distribution) -> LossVector {
    let (d, _) =
        argmin_decision(game, |d| expected_loss(pi, &game.prediction(d)).map(|v| v.value()).unwrap_or(f64::INFINITY));
    game.prediction(&d)
}

/// Whether a proper loss is defined on the whole simplex or only its interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFlag {
    WholeSimplex,
    InteriorOnly,
}

type EvalFn = dyn Fn(&Distribution) -> LossVector + Send + Sync;

/// A map from distributions to loss vectors minimizing expected loss.
#[derive(Clone)]
pub struct ProperLoss {
    name: String,
    m: usize,
    eta: f64,
    domain: DomainFlag,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for ProperLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProperLoss")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("eta", &self.eta)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ProperLoss {
    pub fn from_fn(
        name: impl Into<String>,
        m: usize,
        eta: f64,
        domain: DomainFlag,
        f: impl Fn(&Distribution) -> LossVector + Send + Sync + 'static,
    ) -> Self {
        ProperLoss { name: name.into(), m, eta, domain, eval: Arc::new(f) }
    }

    /// The game's closed-form proper loss.
    pub fn canonical(game: &GameRef) -> Result<Self> {
        let m = game.m();
        if game.proper_loss(&Distribution::uniform(m)).is_none() {
            return Err(Error::Unsupported(format!("{} has no closed-form proper loss", game.name())));
        }
        let g = game.clone();
        let eta = game.eta_mixable_max().unwrap_or(1.0);
        Ok(Self::from_fn(format!("{}-canonical", game.name()), m, eta, DomainFlag::WholeSimplex, move |pi| {
            g.proper_loss(pi).expect("closed form checked at construction")
        }))
    }

    /// Proper loss for the exp-hull at rate `eta`: closed form when the game
    /// supplies one, otherwise built from the entropy.
    pub fn hull(game: &GameRef, eta: f64) -> Result<Self> {
        let m = game.m();
        if game.hull_proper_loss(&Distribution::uniform(m), eta).is_some() {
            let g = game.clone();
            return Ok(Self::from_fn(format!("{}-hull", game.name()), m, eta, DomainFlag::WholeSimplex, move |pi| {
                g.hull_proper_loss(pi, eta).expect("closed form checked at construction")
            }));
        }
        proper_loss_from_entropy(game, eta)
    }

    /// `V o inner`: every value scaled onto the boundary of the game's
    /// superprediction set, using at most the factor `c`.
    pub fn projected(inner: ProperLoss, game: &GameRef, c: f64) -> Self {
        let g = game.clone();
        let name = format!("{}-projected", inner.name);
        let (m, eta, domain) = (inner.m, inner.eta, inner.domain);
        Self::from_fn(name, m, eta, domain, move |pi| {
            let v = inner.eval(pi);
            project_boundary(g.as_ref(), &v, c).unwrap_or(v)
        })
    }

    pub fn eval(&self, pi: &Distribution) -> LossVector {
        (self.eval)(pi)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn domain(&self) -> DomainFlag {
        self.domain
    }
}

/// The proper loss a defensive forecaster uses by default for `game` at rate
/// `eta` and constant `c`.
pub fn default_proper_loss(game: &GameRef, eta: f64, c: f64) -> Result<ProperLoss> {
    if game.is_mixable_at(eta) {
        match ProperLoss::canonical(game) {
            Ok(l) => Ok(l),
            Err(_) => proper_loss_from_entropy(game, eta),
        }
    } else {
        let hull = ProperLoss::hull(game, eta)?;
        Ok(ProperLoss::projected(hull, game, c))
    }
}

/// Which entropy the Savage construction differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropySource {
    /// Closed forms where the game has them, numerical search otherwise.
    Auto,
    /// Always the numerical [`generalized_entropy`].
    Numeric,
}

type EntropyFn = dyn Fn(&Distribution) -> f64 + Send + Sync;

fn entropy_fn(game: &GameRef, eta: f64, source: EntropySource) -> Arc<EntropyFn> {
    let g = game.clone();
    let m = game.m();
    let uniform = Distribution::uniform(m);
    if source == EntropySource::Auto {
        if game.is_mixable_at(eta) && game.entropy_closed_form(&uniform).is_some() {
            return Arc::new(move |pi| g.entropy_closed_form(pi).expect("closed form"));
        }
        if !game.is_mixable_at(eta) && game.hull_proper_loss(&uniform, eta).is_some() {
            return Arc::new(move |pi| {
                let l = g.hull_proper_loss(pi, eta).expect("closed form");
                expected_loss(pi, &l).map(|v| v.value()).unwrap_or(f64::INFINITY)
            });
        }
    }
    Arc::new(move |pi| generalized_entropy(g.as_ref(), pi, eta).map(|v| v.value).unwrap_or(f64::NAN))
}

/// `H(x / sum x) * sum x`: the degree-one homogeneous extension of the entropy
/// to the non-negative orthant.
pub fn homogeneous_entropy(game: &GameRef, eta: f64, x: &[f64]) -> Result<f64> {
    let h = entropy_fn(game, eta, EntropySource::Auto);
    homogeneous(&*h, x)
}

fn homogeneous(h: &EntropyFn, x: &[f64]) -> Result<f64> {
    let s: f64 = x.iter().sum();
    if s == 0.0 {
        return Ok(0.0);
    }
    let pi = Distribution::from_weights(x.to_vec())?;
    Ok(s * h(&pi))
}

const FD_STEP: f64 = 1e-6;

/// Savage representation `phi - sum_o pi_o d_o phi + d_omega phi` with central differences.
fn savage(h: &EntropyFn, pi: &[f64]) -> Vec<f64> {
    let m = pi.len();
    let min = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let step = FD_STEP.min(min * 1e-3);
    let phi = |x: &[f64]| homogeneous(h, x).unwrap_or(f64::NAN);
    let base = phi(pi);
    let mut grad = vec![0.0; m];
    let mut x = pi.to_vec();
    for o in 0..m {
        x[o] = pi[o] + step;
        let up = phi(&x);
        x[o] = pi[o] - step;
        let down = phi(&x);
        x[o] = pi[o];
        grad[o] = (up - down) / (2.0 * step);
    }
    let euler: f64 = pi.iter().zip(&grad).map(|(p, d)| p * d).sum();
    grad.iter().map(|d| (base - euler + d).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Limit {
    Finite(f64),
    Infinite,
    Undetermined(f64),
}

const APPROACH: [f64; 3] = [1e-3, 1e-4, 1e-5];

fn path_limit(h: &EntropyFn, pi: &[f64], target: &[f64]) -> Vec<Limit> {
    let vals: Vec<Vec<f64>> = APPROACH
        .iter()
        .map(|t| {
            let x: Vec<f64> = pi.iter().zip(target).map(|(p, q)| (1.0 - t) * p + t * q).collect();
            savage(h, &x)
        })
        .collect();
    (0..pi.len())
        .map(|o| {
            let (v1, v2, v3) = (vals[0][o], vals[1][o], vals[2][o]);
            let (d1, d2) = (v2 - v1, v3 - v2);
            if !v3.is_finite() {
                Limit::Infinite
            } else if d2.abs() <= 0.5 * d1.abs() + 1e-6 * v3.abs().max(1.0) {
                Limit::Finite(v3 + d2 * APPROACH[2] / (APPROACH[1] - APPROACH[2]))
            } else if d1 > 0.0 && d2 > 0.0 {
                Limit::Infinite
            } else {
                Limit::Undetermined(v3)
            }
        })
        .collect()
}

fn limits_agree(a: Limit, b: Limit) -> Option<bool> {
    match (a, b) {
        (Limit::Finite(x), Limit::Finite(y)) => Some((x - y).abs() <= 1e-3 * x.abs().max(1.0)),
        (Limit::Infinite, Limit::Infinite) => Some(true),
        (Limit::Finite(_), Limit::Infinite) | (Limit::Infinite, Limit::Finite(_)) => Some(false),
        _ => None,
    }
}

fn boundary_probes(m: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for i in 0..m {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        pts.push(v);
    }
    if m >= 3 {
        for i in 0..m {
            for j in (i + 1)..m {
                let mut v = vec![0.0; m];
                v[i] = 0.5;
                v[j] = 0.5;
                pts.push(v);
            }
        }
        if m >= 4 {
            for i in 0..m {
                let mut v = vec![1.0 / (m - 1) as f64; m];
                v[i] = 0.0;
                pts.push(v);
            }
        }
    }
    pts
}

fn approach_targets(m: usize) -> (Vec<f64>, Vec<f64>) {
    let uniform = vec![1.0 / m as f64; m];
    let total = (m * (m + 1) / 2) as f64;
    let skewed = (1..=m).map(|i| i as f64 / total).collect();
    (uniform, skewed)
}

/// Builds a proper loss from the generalized entropy through the Savage
/// representation, checking that it extends continuously to the boundary.
pub fn proper_loss_from_entropy(game: &GameRef, eta: f64) -> Result<ProperLoss> {
    proper_loss_from_entropy_with(game, eta, EntropySource::Auto)
}

pub fn proper_loss_from_entropy_with(game: &GameRef, eta: f64, source: EntropySource) -> Result<ProperLoss> {
    let m = game.m();
    let h = entropy_fn(game, eta, source);
    let (uniform, skewed) = approach_targets(m);
    let mut domain = DomainFlag::WholeSimplex;
    for point in boundary_probes(m) {
        let a = path_limit(&*h, &point, &uniform);
        let b = path_limit(&*h, &point, &skewed);
        for (x, y) in a.into_iter().zip(b) {
            match limits_agree(x, y) {
                Some(true) => {}
                Some(false) => return Err(Error::NonExtendable { point }),
                None => domain = DomainFlag::InteriorOnly,
            }
        }
    }
    let name = format!("{}-savage", game.name());
    Ok(ProperLoss::from_fn(name, m, eta, domain, move |pi| {
        let p = pi.probs();
        let v = if pi.on_boundary() {
            path_limit(&*h, p, &uniform)
                .into_iter()
                .map(|l| match l {
                    Limit::Finite(v) | Limit::Undetermined(v) => v.max(0.0),
                    Limit::Infinite => f64::INFINITY,
                })
                .collect()
        } else {
            savage(&*h, p)
        };
        LossVector::from_computed(v).expect("savage loss is non-negative")
    }))
}

/// The raw Hellinger loss `1 - sqrt(pi(omega))`, which is not proper.
pub fn hellinger_raw(m: usize) -> ProperLoss {
    ProperLoss::from_fn("hellinger-raw", m, 1.0, DomainFlag::WholeSimplex, |pi| {
        LossVector::from_computed(pi.probs().iter().map(|p| 1.0 - p.sqrt()).collect()).expect("bounded loss")
    })
}

/// Outcome of [`check_proper`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProperReport {
    pub proper: bool,
    pub strictly_proper: bool,
    /// Largest `E_pi lambda(pi) - E_pi lambda(pi')` over the grid; positive means a violation.
    pub max_violation: f64,
    /// `(pi, pi')` attaining the largest violation.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

/// Grid used by [`check_proper`]: `density` points on `[0, 1]` for two
/// outcomes, otherwise the barycentric lattice of resolution `max(2, density / 5)`.
pub fn proper_check_grid(m: usize, density: usize) -> Vec<Vec<f64>> {
    if m == 2 {
        let n = density.max(2) - 1;
        (0..=n).map(|i| vec![1.0 - i as f64 / n as f64, i as f64 / n as f64]).collect()
    } else {
        numeric::simplex_lattice(m, (density / 5).max(2))
    }
}

/// Checks `E_pi lambda(pi) <= E_pi lambda(pi')` on all grid pairs.
pub fn check_proper(loss: &ProperLoss, grid_density: usize) -> ProperReport {
    const TOL: f64 = 1e-12;
    let grid: Vec<Distribution> = proper_check_grid(loss.m(), grid_density)
        .into_iter()
        .map(|p| Distribution::from_weights(p).expect("grid point"))
        .collect();
    let values: Vec<LossVector> = grid.iter().map(|p| loss.eval(p)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut strict = true;
    for (i, pi) in grid.iter().enumerate() {
        let own = expected_loss(pi, &values[i]).map(|v| v.value()).unwrap_or(f64::INFINITY);
        for (j, other) in values.iter().enumerate() {
            if i == j {
                continue;
            }
            let alt = expected_loss(pi, other).map(|v| v.value()).unwrap_or(f64::INFINITY);
            let diff = if own == f64::INFINITY && alt == f64::INFINITY { 0.0 } else { own - alt };
            if diff >= -TOL {
                strict = false;
            }
            if diff > worst {
                worst = diff;
                witness = Some((pi.probs().to_vec(), grid[j].probs().to_vec()));
            }
        }
    }
    let proper = worst <= TOL;
    ProperReport { proper, strictly_proper: proper && strict, max_violation: worst, witness }
}

/// Outcome of [`check_mixability`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixabilityReport {
    pub mixable: bool,
    /// Largest superprediction gap among sampled exp-mixtures.
    pub worst_gap: f64,
    pub witness: Option<LossVector>,
    pub samples: usize,
}

/// Samples exp-mixtures of 2 to 5 random predictions and tests each for
/// membership in the superprediction set.
pub fn check_mixability(game: &dyn Game, eta: f64, samples: usize, seed: u64, tol: f64) -> Result<MixabilityReport> {
    use rand::Rng;
    let mut rng = sampling::stream(seed, 0);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..samples {
        let k = rng.random_range(2..=5);
        let preds: Vec<LossVector> =
            (0..k).map(|_| game.prediction(&sampling::random_decision(&mut rng, game.domain()))).collect();
        let rho = Distribution::from_weights(sampling::uniform_simplex(&mut rng, k))?;
        let g = exp_mix(&preds, &rho, eta)?;
        let gap = game.superprediction_gap(&g);
        if gap > worst {
            worst = gap;
            witness = Some(g);
        }
    }
    Ok(MixabilityReport { mixable: worst <= tol, worst_gap: worst, witness, samples })
}

/// Smallest `c` with `c * Sigma_eta` inside the superprediction set, where
/// `Sigma_eta` is the superprediction set of the exp-hull. One for mixable rates.
pub fn realizability_constant(game: &dyn Game, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {eta}")));
    }
    if game.is_mixable_at(eta) {
        return Ok(1.0);
    }
    let k = 1.0 + (-eta).exp();
    match game.name().as_str() {
        "absolute" => return Ok(eta / (2.0 * (2.0 / k).ln())),
        "simple" => return Ok(eta / (2.0 / k).ln()),
        _ => {}
    }
    realizability_numeric(game, eta)
}

/// Sampled estimate of the realizability constant over exp-mixtures of pairs
/// of predictions on a grid. A lower bound that converges as the grid refines.
pub fn realizability_numeric(game: &dyn Game, eta: f64) -> Result<f64> {
    if game.domain() != DecisionDomain::UnitInterval {
        return Err(Error::Unsupported("numerical realizability needs a one-parameter game".into()));
    }
    let n = 64;
    let preds: Vec<LossVector> = (0..=n).map(|i| game.prediction(&Decision::scalar(i as f64 / n as f64))).collect();
    let mut c: f64 = 1.0;
    for i in 0..preds.len() {
        for j in (i + 1)..preds.len() {
            for w in 1..32 {
                let w = w as f64 / 32.0;
                let rho = Distribution::from_weights(vec![w, 1.0 - w])?;
                let g = exp_mix(&[preds[i].clone(), preds[j].clone()], &rho, eta)?;
                c = c.max(scaling_to_boundary(game, &g, f64::INFINITY));
            }
        }
    }
    Ok(c)
}

/// `min { r in (0, cap] : r g is a superprediction }`, or `+inf` if none.
pub fn scaling_to_boundary(game: &dyn Game, g: &LossVector, cap: f64) -> f64 {
    let zero = LossVector::new(vec![0.0; g.len()]).expect("zero vector");
    if game.superprediction_gap(&zero) <= 0.0 {
        return 0.0;
    }
    let member = |r: f64| game.superprediction_gap(&g.scaled(r)) <= 0.0;
    let mut hi = if cap.is_finite() { cap } else { 1.0 };
    if !member(hi) {
        if cap.is_finite() {
            return f64::INFINITY;
        }
        while !member(hi) {
            hi *= 2.0;
            if hi > 1e12 {
                return f64::INFINITY;
            }
        }
    }
    numeric::bisect_predicate(member, 0.0, hi, 1e-14 * hi.max(1.0))
}
