//! Two-lane highway traffic simulation with mixed autonomous (AV) and
//! human-driven (HDV) vehicles, and a parameter-shared multi-agent
//! advantage actor-critic trainer for cooperative lane changing.
//!
//! The simulator, network and trainer are generic over [`Scalar`]; the
//! aliases at the crate root fix the scalar to `f64`, which is what training
//! and checkpoints use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod harness;
pub mod hdv;
pub mod ma2c;
pub mod nn;
pub mod scalar;
pub mod traffic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type World = traffic::WorldState<f64>;
pub type Vehicle = traffic::VehicleState<f64>;
pub type Road = traffic::RoadConfig<f64>;
pub type Obs = env::Observation<f64>;
pub type Env = env::EnvConfig<f64>;
pub type Network = nn::NetworkParams<f64>;
pub type Hyperparams = ma2c::Hyperparams<f64>;
pub type TrainConfig = ma2c::TrainConfig<f64>;
pub type EvalMetrics = ma2c::EvalMetrics<f64>;
pub type RunConfig = harness::RunConfig;
