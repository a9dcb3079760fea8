//! Feedback adaptation laws that self-tune dynamical systems to a bifurcation point.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it for common use.

// `!(a > b)` deliberately treats NaN as failing the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod laws;
pub mod oscillator;
pub mod quadrature;
pub mod scalar;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type Trajectory32 = dynamics::Trajectory<f32>;
pub type TimeGrid64 = dynamics::TimeGrid<f64>;
pub type TimeGrid32 = dynamics::TimeGrid<f32>;
pub type AdaptationLaw64 = laws::AdaptationLaw<f64>;
pub type AdaptationLaw32 = laws::AdaptationLaw<f32>;
pub type IntegratorParams64 = integrator::IntegratorParams<f64>;
pub type IntegratorParams32 = integrator::IntegratorParams<f32>;
pub type SaccadeSchedule64 = integrator::SaccadeSchedule<f64>;
pub type OscillatorParams64 = oscillator::OscillatorParams<f64>;
pub type OccupancyHistogram64 = averaging::OccupancyHistogram<f64>;
