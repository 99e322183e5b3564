//! Crowd-driven design-space exploration for IoT monitoring deployments.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`population`] and [`engine`] simulate visitors moving through a
//!    [`space::FloorPlan`], producing a [`engine::Trace`] of portal crossings
//!    and zone occupancy.
//! 2. [`aidc`] turns the crossings into per-device sensing opportunities.
//! 3. [`iotsim`] samples every device in its normal or critical mode and
//!    accounts for captures and energy.
//! 4. [`analysis`] scores each run against QoS (energy) and QoE (capture)
//!    goals and ranks architecture models and configurations.
//!
//! [`pack`] bundles the shipped floor plan, scenarios and catalogs.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aidc;
pub mod analysis;
pub mod engine;
pub mod iotsim;
pub mod pack;
pub mod population;
pub mod rng;
pub mod scalar;
pub mod space;

pub use scalar::Scalar;

use thiserror::Error;

/// Joules.
pub type Energy = f64;
/// Satisfaction and trade-off values in `[0, 1]`.
pub type Score = f64;
pub type Weights = analysis::Weights<Score>;
/// Exact-arithmetic score type for algebraic checks.
pub type ExactScore = num_rational::Ratio<i64>;

/// Pipeline error, tagged with the stage that produced it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("floor plan: {0}")]
    Space(#[from] space::SpaceError),
    #[error("population: {0}")]
    Scenario(#[from] population::ScenarioError),
    #[error("crowd simulation: {0}")]
    Engine(#[from] engine::EngineError),
    #[error("composition: {0}")]
    Compose(#[from] aidc::ComposeError),
    #[error("iot simulation: {0}")]
    Iot(#[from] iotsim::IotError),
    #[error("analysis: {0}")]
    Analysis(#[from] analysis::AnalysisError),
    #[error("catalog `{file}`: {message}")]
    Catalog { file: String, message: String },
}

impl Error {
    pub fn catalog(file: &str, err: impl std::fmt::Display) -> Self {
        Error::Catalog {
            file: file.to_string(),
            message: err.to_string(),
        }
    }
}
