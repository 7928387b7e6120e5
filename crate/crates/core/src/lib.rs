//! Time-inhomogeneous score-based generative models with noise-schedule
//! tuning by bound minimization.
//!
//! The crate covers the full loop: noise-schedule families and their
//! closed-form forward scalars ([`schedules`]), target distributions with
//! analytic scores and bound constants ([`targets`]), exact forward and
//! discretized backward samplers ([`diffusion`]), a trainable score network
//! ([`scorenet`]), term-by-term KL/W2 upper bounds ([`bounds`]), empirical
//! divergence estimators ([`metrics`]), standardize-and-rescale
//! preprocessing ([`preprocess`]), and schedule selection by bound
//! minimization ([`tuner`]).

pub mod bounds;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod metrics;
pub mod preprocess;
pub mod rng;
pub mod schedules;
pub mod scorenet;
pub mod targets;
pub mod tuner;

pub use error::{Error, Result};
pub use schedules::{Schedule, ScheduleKind};
