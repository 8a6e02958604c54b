//! Prediction with expert advice.
//!
//! Two families of Learner strategies over a common game model:
//!
//! * the aggregating algorithm ([`aggregating`]), which mixes expert
//!   predictions in exponential coordinates and substitutes a dominated prediction;
//! * defensive forecasting ([`defensive`]), which picks a distribution that
//!   keeps a test supermartingale from growing and predicts through a proper loss.
//!
//! [`secondguess`] lets experts react to the Learner's move, [`extensions`]
//! covers several loss functions at once and outcomes that are distributions,
//! and [`harness`] runs configured scenarios and audits their loss bounds.

pub mod aggregating;
pub mod defensive;
pub mod error;
pub mod extensions;
pub mod harness;
pub mod losses;
pub mod numeric;
pub mod primitives;
pub mod sampling;
pub mod secondguess;

pub use error::{Error, Result};
pub use primitives::{
    exp_mix, expected_loss, is_superprediction, Decision, DecisionDomain, Distribution, ExtReal, Game, GameRef,
    LossVector, OutcomeSpace,
};
