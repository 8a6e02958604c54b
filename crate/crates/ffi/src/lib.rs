//! C ABI for the expert-advice library.
//!
//! Every entry point returns an [`EaStatus`]. On failure the message is kept
//! per thread and can be read with [`ea_last_error_message`]. Handles are
//! opaque, created by a `*_new` function and released with the matching
//! `*_free`. A session runs in rounds: `*_predict` with the experts'
//! decisions, then `*_observe` with the outcome.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use expert_advice::aggregating::{AaPrediction, AaState};
use expert_advice::defensive::{Dfa, DfaPrediction, SolverConfig};
use expert_advice::losses::{builtin_game, realizability_constant};
use expert_advice::{Decision, Distribution, Error, GameRef, LossVector};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Substitution, realizability or solver failure.
    Numerical = 4,
    Unsupported = 5,
    /// `observe` without a pending prediction.
    WrongState = 6,
    Panic = 7,
}

/// A game: outcomes, decisions and a loss.
pub struct EaGame {
    game: GameRef,
}

/// Aggregating algorithm session.
pub struct EaAaSession {
    state: AaState,
    pending: Option<(Vec<LossVector>, AaPrediction)>,
}

/// Defensive forecasting session.
pub struct EaDfaSession {
    state: Dfa,
    pending: Option<(Vec<LossVector>, DfaPrediction)>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> EaStatus {
    match e {
        Error::DimensionMismatch { .. } => EaStatus::DimensionMismatch,
        Error::Unsupported(_) => EaStatus::Unsupported,
        Error::SubstitutionFailure { .. }
        | Error::NotRealizable { .. }
        | Error::NonExtendable { .. }
        | Error::ContractViolation(_)
        | Error::SlackExceeded { .. }
        | Error::NoConvergence { .. }
        | Error::PreconditionUnverified(_) => EaStatus::Numerical,
        _ => EaStatus::InvalidArgument,
    }
}

struct Failure(EaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EaStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            EaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            EaStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn prior(game_experts: usize, weights: *const f64) -> Result<Distribution, Failure> {
    if game_experts == 0 {
        return Err(Failure(EaStatus::InvalidArgument, "at least one expert is required".into()));
    }
    if weights.is_null() {
        return Ok(Distribution::uniform(game_experts));
    }
    Ok(Distribution::from_weights(slice(weights, game_experts, "prior")?.to_vec())?)
}

/// Expert decisions, `experts` rows of the game's decision dimension, as predictions.
unsafe fn advice(game: &GameRef, decisions: *const f64, experts: usize) -> Result<Vec<LossVector>, Failure> {
    let dim = game.domain().dim();
    let flat = slice(decisions, experts * dim, "decisions")?;
    flat.chunks(dim.max(1))
        .map(|row| {
            let d = Decision(row.to_vec());
            if !game.domain().contains(&d, 1e-9) {
                return Err(Failure(EaStatus::InvalidArgument, format!("decision {row:?} outside the decision domain")));
            }
            Ok(game.prediction(&d))
        })
        .collect()
}

unsafe fn write_decision(d: &Decision, out: *mut f64, capacity: usize) -> Result<(), Failure> {
    let v = d.values();
    if capacity < v.len() {
        return Err(Failure(EaStatus::DimensionMismatch, format!("decision needs {} slots, got {capacity}", v.len())));
    }
    if out.is_null() {
        return Err(null("decision output"));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

unsafe fn write_all(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len != values.len() {
        return Err(Failure(EaStatus::DimensionMismatch, format!("expected {} slots, got {len}", values.len())));
    }
    if len > 0 {
        if out.is_null() {
            return Err(null("output"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    }
    Ok(())
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncated to `len` bytes. Returns the length of
/// the full message without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ea_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a built-in game by name (`log`, `square`, `absolute`, `brier`,
/// `hellinger`, `simple`, ...) with `outcomes` outcomes.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ea_game_new(name: *const c_char, outcomes: usize, out: *mut *mut EaGame) -> EaStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Failure(EaStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let game = builtin_game(name, outcomes)?;
        write(out, Box::into_raw(Box::new(EaGame { game })), "out")
    })
}

/// # Safety
/// `game` must be null or a handle from [`ea_game_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ea_game_free(game: *mut EaGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Number of outcomes and length of a decision.
///
/// # Safety
/// `game` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ea_game_dims(game: *const EaGame, outcomes: *mut usize, decision_dim: *mut usize) -> EaStatus {
    guard(|| {
        let g = &handle(game, "game")?.game;
        write(outcomes, g.m(), "outcomes")?;
        write(decision_dim, g.domain().dim(), "decision_dim")
    })
}

/// Loss of `decision` (length `dim`) when `outcome` happens. May be `+inf`.
///
/// # Safety
/// `game` must be a live handle, `decision` valid for `dim` reads, `out` for a write.
#[no_mangle]
pub unsafe extern "C" fn ea_game_loss(
    game: *const EaGame,
    decision: *const f64,
    dim: usize,
    outcome: usize,
    out: *mut f64,
) -> EaStatus {
    guard(|| {
        let g = &handle(game, "game")?.game;
        if dim != g.domain().dim() {
            return Err(Error::DimensionMismatch { expected: g.domain().dim(), got: dim }.into());
        }
        if outcome >= g.m() {
            return Err(Failure(EaStatus::InvalidArgument, format!("outcome {outcome} out of range")));
        }
        let d = Decision(slice(decision, dim, "decision")?.to_vec());
        write(out, g.loss(&d, outcome), "out")
    })
}

/// Largest learning rate at which the game is mixable; `Unsupported` when it is not mixable.
///
/// # Safety
/// `game` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ea_game_max_learning_rate(game: *const EaGame, out: *mut f64) -> EaStatus {
    guard(|| {
        let g = &handle(game, "game")?.game;
        let eta = g
            .eta_mixable_max()
            .ok_or_else(|| Failure(EaStatus::Unsupported, format!("{} is not mixable", g.name())))?;
        write(out, eta, "out")
    })
}

/// Smallest `c` for which the game is realizable at learning rate `eta`.
///
/// # Safety
/// `game` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ea_game_realizability_constant(game: *const EaGame, eta: f64, out: *mut f64) -> EaStatus {
    guard(|| {
        let g = &handle(game, "game")?.game;
        write(out, realizability_constant(g.as_ref(), eta)?, "out")
    })
}

/// Starts an aggregating algorithm session over `experts` experts.
/// `prior` holds `experts` weights, or is null for the uniform prior.
///
/// # Safety
/// `game` must be a live handle; `prior` null or valid for `experts` reads; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ea_aa_new(
    game: *const EaGame,
    c: f64,
    eta: f64,
    experts: usize,
    prior: *const f64,
    out: *mut *mut EaAaSession,
) -> EaStatus {
    guard(|| {
        let g = handle(game, "game")?.game.clone();
        let p = self::prior(experts, prior)?;
        let state = AaState::new(g, c, eta, &p)?;
        write(out, Box::into_raw(Box::new(EaAaSession { state, pending: None })), "out")
    })
}

/// # Safety
/// `session` must be null or a handle from [`ea_aa_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ea_aa_free(session: *mut EaAaSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Computes the Learner's decision from the experts' decisions, given row
/// by row in `decisions` (`experts` times the decision dimension).
/// Replaces any pending prediction.
///
/// # Safety
/// `session` must be a live handle; `decisions` valid for its reads;
/// `decision_out` valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn ea_aa_predict(
    session: *mut EaAaSession,
    decisions: *const f64,
    experts: usize,
    decision_out: *mut f64,
    capacity: usize,
) -> EaStatus {
    guard(|| {
        let s = handle_mut(session, "session")?;
        if experts != s.state.experts() {
            return Err(Error::DimensionMismatch { expected: s.state.experts(), got: experts }.into());
        }
        let adv = advice(s.state.game(), decisions, experts)?;
        let pred = s.state.predict(&adv)?;
        write_decision(&pred.decision, decision_out, capacity)?;
        s.pending = Some((adv, pred));
        Ok(())
    })
}

/// Settles the pending round with `outcome`.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ea_aa_observe(session: *mut EaAaSession, outcome: usize) -> EaStatus {
    guard(|| {
        let s = handle_mut(session, "session")?;
        let (adv, pred) =
            s.pending.as_ref().ok_or_else(|| Failure(EaStatus::WrongState, "no pending prediction".into()))?;
        s.state = s.state.observe(adv, pred, outcome)?;
        s.pending = None;
        Ok(())
    })
}

/// Cumulative losses: the Learner's, and each expert's into `expert_out` (length `experts`).
///
/// # Safety
/// `session` must be a live handle; `learner_out` valid for a write;
/// `expert_out` null or valid for `experts` writes.
#[no_mangle]
pub unsafe extern "C" fn ea_aa_losses(
    session: *const EaAaSession,
    learner_out: *mut f64,
    expert_out: *mut f64,
    experts: usize,
) -> EaStatus {
    guard(|| {
        let s = handle(session, "session")?;
        write(learner_out, s.state.learner_loss(), "learner_out")?;
        if !expert_out.is_null() {
            write_all(s.state.expert_loss(), expert_out, experts)?;
        }
        Ok(())
    })
}

/// Starts a defensive forecasting session with the game's default proper loss and solver settings.
///
/// # Safety
/// As for [`ea_aa_new`].
#[no_mangle]
pub unsafe extern "C" fn ea_dfa_new(
    game: *const EaGame,
    c: f64,
    eta: f64,
    experts: usize,
    prior: *const f64,
    out: *mut *mut EaDfaSession,
) -> EaStatus {
    guard(|| {
        let g = handle(game, "game")?.game.clone();
        let p = self::prior(experts, prior)?;
        let state = Dfa::with_defaults(g, c, eta, &p, SolverConfig::default())?;
        write(out, Box::into_raw(Box::new(EaDfaSession { state, pending: None })), "out")
    })
}

/// # Safety
/// `session` must be null or a handle from [`ea_dfa_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ea_dfa_free(session: *mut EaDfaSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// As [`ea_aa_predict`]. When `pi_out` is not null it receives the chosen
/// outcome distribution (one entry per outcome).
///
/// # Safety
/// As for [`ea_aa_predict`]; `pi_out` null or valid for one write per outcome.
#[no_mangle]
pub unsafe extern "C" fn ea_dfa_predict(
    session: *mut EaDfaSession,
    decisions: *const f64,
    experts: usize,
    decision_out: *mut f64,
    capacity: usize,
    pi_out: *mut f64,
) -> EaStatus {
    guard(|| {
        let s = handle_mut(session, "session")?;
        let k = s.state.expert_loss().len();
        if experts != k {
            return Err(Error::DimensionMismatch { expected: k, got: experts }.into());
        }
        let adv = advice(s.state.game(), decisions, experts)?;
        let pred = s.state.predict(&adv)?;
        write_decision(&pred.decision, decision_out, capacity)?;
        if !pi_out.is_null() {
            write_all(pred.pi.probs(), pi_out, pred.pi.len())?;
        }
        s.pending = Some((adv, pred));
        Ok(())
    })
}

/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ea_dfa_observe(session: *mut EaDfaSession, outcome: usize) -> EaStatus {
    guard(|| {
        let s = handle_mut(session, "session")?;
        let (adv, pred) =
            s.pending.as_ref().ok_or_else(|| Failure(EaStatus::WrongState, "no pending prediction".into()))?;
        s.state = s.state.observe(adv, pred, outcome)?;
        s.pending = None;
        Ok(())
    })
}

/// # Safety
/// As for [`ea_aa_losses`].
#[no_mangle]
pub unsafe extern "C" fn ea_dfa_losses(
    session: *const EaDfaSession,
    learner_out: *mut f64,
    expert_out: *mut f64,
    experts: usize,
) -> EaStatus {
    guard(|| {
        let s = handle(session, "session")?;
        write(learner_out, s.state.learner_loss(), "learner_out")?;
        if !expert_out.is_null() {
            write_all(s.state.expert_loss(), expert_out, experts)?;
        }
        Ok(())
    })
}

/// Natural log of the defensive forecaster's test supermartingale.
///
/// # Safety
/// `session` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ea_dfa_log_supermartingale(session: *const EaDfaSession, out: *mut f64) -> EaStatus {
    guard(|| {
        let s = handle(session, "session")?;
        write(out, s.state.supermartingale().log_value(), "out")
    })
}
