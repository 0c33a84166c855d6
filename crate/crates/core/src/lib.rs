//! Numerical core for simulating a two-party sequential measurement with random
//! codebooks: operators, measurements, entropic rates, typicality and the protocol.
//!
//! Everything is generic over the scalar (`f32` or `f64`); the aliases below fix `f64`.

pub mod error;
pub mod measurement;
pub mod operator;
pub mod protocol;
pub mod random;
pub mod rng;
pub mod rates;
pub mod scalar;
pub mod sizing;
pub mod stats;
pub mod typicality;

pub use error::{Error, Result};
pub use scalar::{Real, Tolerances};

pub type Operator = operator::ComplexOperator<f64>;
pub type Density = operator::DensityOperator<f64>;
pub type Pure = operator::PureState<f64>;
pub type Measurement = measurement::Povm<f64>;
pub type Cq = measurement::CqState<f64>;
pub type JointModel = measurement::JointOutcomeModel<f64>;
pub type Scenario = protocol::Scenario<f64>;
pub type Setup = protocol::ProtocolSetup<f64>;
