//! Delay-Doppler channel parameter estimation for multiuser OTFS uplinks with
//! MU-PCP pilots.
//!
//! Two estimators share the same TF-domain pilot observation:
//! [`wmusic`] (weighted-root MUSIC over a 2D smoothed covariance) and
//! [`mp`] (a 2D matrix pencil). Both produce per-user delay/Doppler estimates
//! that [`gains`] completes with a least-squares gain fit; [`metrics`] and
//! [`harness`] score them over Monte-Carlo sweeps.

pub mod dd;
pub mod gains;
pub mod harness;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod mp;
pub mod pilot;
pub mod poly;
pub mod selftest;
pub mod synthesis;
pub mod wmusic;

pub use error::{Error, Result};
pub use linalg::C64;
