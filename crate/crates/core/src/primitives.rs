//! Outcome spaces, distributions, loss vectors and the [`Game`] abstraction.
//!
//! Losses live in `[0, +inf]`. The infinite value is stored as
//! `f64::INFINITY` but every place that exponentiates a loss goes through
//! [`ExtReal::exp_neg`] so that `exp(-eta * inf) = 0` is explicit rather than
//! left to float semantics. Expectations skip outcomes of probability zero,
//! which is what keeps `0 * inf` out of the arithmetic.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric;

/// Tolerance for a distribution to count as normalized.
pub const DIST_TOL: f64 = 1e-12;

/// Default membership tolerance for superprediction tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A finite ordered set of outcome labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSpace {
    labels: Vec<String>,
}

impl OutcomeSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("outcome space"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidParameter(format!("duplicate outcome label {l:?}")));
            }
        }
        Ok(OutcomeSpace { labels })
    }

    /// Outcomes labelled `0..m`.
    pub fn indexed(m: usize) -> Result<Self> {
        Self::new((0..m).map(|i| i.to_string()).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, omega: usize) -> Option<&str> {
        self.labels.get(omega).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A loss value in `[0, +inf]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal(0.0);
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);

    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() || v < 0.0 {
            return Err(Error::InvalidLoss(format!("{v} is not in [0, +inf]")));
        }
        Ok(ExtReal(v))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// `exp(-eta * self)`, exactly zero for the infinite loss.
    pub fn exp_neg(self, eta: f64) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            (-eta * self.0).exp()
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// A function from outcomes to `[0, +inf]`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("loss vector"));
        }
        for &v in &values {
            ExtReal::new(v)?;
        }
        Ok(LossVector(values))
    }

    /// Builds a loss vector, clamping tiny negative round-off to zero.
    pub fn from_computed(mut values: Vec<f64>) -> Result<Self> {
        for v in values.iter_mut() {
            if *v < 0.0 && *v > -1e-12 {
                *v = 0.0;
            }
        }
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, omega: usize) -> ExtReal {
        ExtReal(self.0[omega])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Componentwise `self <= other + tol`, with `inf <= inf`.
    pub fn dominated_by(&self, other: &LossVector, tol: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| *b == f64::INFINITY || *a <= b + tol)
    }

    /// Largest componentwise excess `self - other`, treating equal infinities as zero.
    pub fn max_excess_over(&self, other: &LossVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| ext_sub(*a, *b))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, r: f64) -> LossVector {
        LossVector(self.0.iter().map(|v| if *v == 0.0 || r == 0.0 { 0.0 } else { r * v }).collect())
    }
}

/// `a - b` on `[0, inf]` with `inf - inf = 0`.
pub fn ext_sub(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY && b == f64::INFINITY {
        0.0
    } else {
        a - b
    }
}

/// A probability distribution on an outcome space.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Accepts non-negative weights summing to one within [`DIST_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        if probs.iter().any(|p| p.is_nan() || *p < 0.0 || p.is_infinite()) {
            return Err(Error::InvalidDistribution(format!("negative or non-finite weight in {probs:?}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > DIST_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {s}")));
        }
        Ok(Distribution(probs))
    }

    /// Normalizes non-negative weights. Fails if they are all zero.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|p| p.is_nan() || *p < 0.0 || p.is_infinite()) {
            return Err(Error::InvalidDistribution(format!("bad weights {weights:?}")));
        }
        let s: f64 = weights.iter().sum();
        if s <= 0.0 {
            return Err(Error::InvalidDistribution("all weights are zero".into()));
        }
        Ok(Distribution(weights.into_iter().map(|w| w / s).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        Distribution(vec![1.0 / m as f64; m])
    }

    pub fn point_mass(m: usize, omega: usize) -> Self {
        let mut v = vec![0.0; m];
        v[omega] = 1.0;
        Distribution(v)
    }

    /// `(1 - p, p)`: the binary distribution putting mass `p` on outcome 1.
    pub fn binary(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!("p = {p} outside [0, 1]")));
        }
        Ok(Distribution(vec![1.0 - p, p]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, omega: usize) -> f64 {
        self.0[omega]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when some outcome has probability zero.
    pub fn on_boundary(&self) -> bool {
        self.0.contains(&0.0)
    }
}

/// A decision of Learner or an expert: a point of the game's decision domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision(pub Vec<f64>);

impl Decision {
    pub fn scalar(p: f64) -> Self {
        Decision(vec![p])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Where decisions live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionDomain {
    /// A single parameter in `[0, 1]`.
    UnitInterval,
    /// A probability vector of the given length.
    Simplex(usize),
}

impl DecisionDomain {
    pub fn dim(&self) -> usize {
        match self {
            DecisionDomain::UnitInterval => 1,
            DecisionDomain::Simplex(m) => *m,
        }
    }

    pub fn contains(&self, d: &Decision, tol: f64) -> bool {
        match self {
            DecisionDomain::UnitInterval => d.0.len() == 1 && d.0[0] >= -tol && d.0[0] <= 1.0 + tol,
            DecisionDomain::Simplex(m) => {
                d.0.len() == *m
                    && d.0.iter().all(|x| *x >= -tol)
                    && (d.0.iter().sum::<f64>() - 1.0).abs() <= tol.max(DIST_TOL)
            }
        }
    }
}

/// A prediction game: outcomes, decisions and a loss function.
///
/// Only [`Game::loss`] and the descriptive methods are required. The remaining
/// methods default to numerical searches over the decision domain; built-in
/// games override them with closed forms.
pub trait Game: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn outcomes(&self) -> &OutcomeSpace;

    fn domain(&self) -> DecisionDomain;

    /// Loss of `decision` when `omega` happens, in `[0, +inf]`.
    fn loss(&self, decision: &Decision, omega: usize) -> f64;

    fn m(&self) -> usize {
        self.outcomes().size()
    }

    /// The prediction `omega -> loss(decision, omega)`.
    fn prediction(&self, decision: &Decision) -> LossVector {
        LossVector((0..self.m()).map(|o| self.loss(decision, o)).collect())
    }

    /// The game is mixable for learning rates in `(0, max]`; `None` when it is not mixable.
    fn eta_mixable_max(&self) -> Option<f64>;

    fn is_mixable_at(&self, eta: f64) -> bool {
        matches!(self.eta_mixable_max(), Some(max) if eta > 0.0 && eta <= max * (1.0 + 1e-12))
    }

    /// Closed-form canonical proper loss, if the game has one.
    fn proper_loss(&self, _pi: &Distribution) -> Option<LossVector> {
        None
    }

    /// Closed-form generalized entropy on the simplex, if known.
    fn entropy_closed_form(&self, _pi: &Distribution) -> Option<f64> {
        None
    }

    /// Smallest `max_omega (lambda(gamma, omega) - g(omega))` over decisions,
    /// ignoring outcomes where `g` is infinite. Non-positive exactly on superpredictions.
    fn superprediction_gap(&self, g: &LossVector) -> f64 {
        numeric_superprediction_gap(self, g)
    }

    /// A decision whose prediction is at most `g + tol`, chosen continuously in `g`.
    fn substitution(&self, g: &LossVector, tol: f64) -> Option<Decision> {
        numeric_substitution(self, g, tol)
    }

    /// Gap with respect to the superprediction set of the exp-hull at rate `eta`.
    /// Equals [`Game::superprediction_gap`] inside the mixable range.
    fn hull_gap(&self, g: &LossVector, eta: f64) -> Option<f64> {
        if self.is_mixable_at(eta) {
            Some(self.superprediction_gap(g))
        } else {
            None
        }
    }

    /// Closed-form proper loss for the exp-hull at a non-mixable rate.
    fn hull_proper_loss(&self, _pi: &Distribution, _eta: f64) -> Option<LossVector> {
        None
    }
}

pub type GameRef = Arc<dyn Game>;

/// Objective `max over finite g(omega) of lambda(d, omega) - g(omega)`.
pub fn domination_excess<G: Game + ?Sized>(game: &G, d: &Decision, g: &LossVector) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (o, &go) in g.values().iter().enumerate() {
        if go == f64::INFINITY {
            continue;
        }
        let l = game.loss(d, o);
        let e = if l == f64::INFINITY { f64::INFINITY } else { l - go };
        if e > worst || e.is_nan() {
            worst = e;
        }
    }
    worst
}

fn minimize_over_domain<G: Game + ?Sized, F: FnMut(&Decision) -> f64>(game: &G, mut f: F) -> (Decision, f64) {
    match game.domain() {
        DecisionDomain::UnitInterval => {
            let (p, v) = numeric::minimize_unit_interval(|p| f(&Decision::scalar(p)));
            (Decision::scalar(p), v)
        }
        DecisionDomain::Simplex(m) => {
            let (x, v) = numeric::minimize_on_simplex(
                |x| f(&Decision(x.to_vec())),
                m,
                numeric::SimplexSearch::default(),
            );
            (Decision(x), v)
        }
    }
}

/// Grid search plus local refinement for the superprediction gap.
pub fn numeric_superprediction_gap<G: Game + ?Sized>(game: &G, g: &LossVector) -> f64 {
    if g.values().iter().all(|v| *v == f64::INFINITY) {
        return f64::NEG_INFINITY;
    }
    minimize_over_domain(game, |d| domination_excess(game, d, g)).1
}

/// Numerical substitution: the minimizer of the domination excess, if within `tol`.
pub fn numeric_substitution<G: Game + ?Sized>(game: &G, g: &LossVector, tol: f64) -> Option<Decision> {
    let (d, v) = minimize_over_domain(game, |d| domination_excess(game, d, g));
    if v <= tol {
        Some(d)
    } else {
        None
    }
}

/// Minimizer of a function of decisions over the game's decision domain.
pub fn argmin_decision<G: Game + ?Sized, F: FnMut(&Decision) -> f64>(game: &G, f: F) -> (Decision, f64) {
    minimize_over_domain(game, f)
}

/// `E_pi g`, summing only over outcomes with positive probability.
pub fn expected_loss(pi: &Distribution, g: &LossVector) -> Result<ExtReal> {
    if pi.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: pi.len(), got: g.len() });
    }
    let mut s = 0.0;
    for (p, v) in pi.probs().iter().zip(g.values()) {
        if *p == 0.0 {
            continue;
        }
        if *v == f64::INFINITY {
            return Ok(ExtReal::INFINITY);
        }
        s += p * v;
    }
    Ok(ExtReal(s))
}

/// The exp-mixture `-(1/eta) ln sum_i rho_i exp(-eta g_i)`, computed per outcome.
pub fn exp_mix(points: &[LossVector], rho: &Distribution, eta: f64) -> Result<LossVector> {
    if points.is_empty() {
        return Err(Error::Empty("point list"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {eta} must be positive and finite")));
    }
    if rho.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: rho.len() });
    }
    let m = points[0].len();
    for p in points {
        if p.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: p.len() });
        }
    }
    let log_rho: Vec<f64> = rho.probs().iter().map(|r| r.ln()).collect();
    let mut out = Vec::with_capacity(m);
    let mut terms = Vec::with_capacity(points.len());
    for o in 0..m {
        terms.clear();
        for (i, p) in points.iter().enumerate() {
            if rho.get(i) == 0.0 {
                continue;
            }
            let v = p.get(o);
            terms.push(if v.is_infinite() { f64::NEG_INFINITY } else { log_rho[i] - eta * v.value() });
        }
        let lse = numeric::log_sum_exp(&terms);
        out.push(if lse == f64::NEG_INFINITY { f64::INFINITY } else { (-lse / eta).max(0.0) });
    }
    LossVector::new(out)
}

/// Whether `g` dominates some prediction of the game, up to `tol`.
pub fn is_superprediction(game: &dyn Game, g: &LossVector, tol: f64) -> Result<bool> {
    if g.len() != game.m() {
        return Err(Error::DimensionMismatch { expected: game.m(), got: g.len() });
    }
    Ok(game.superprediction_gap(g) <= tol)
}
