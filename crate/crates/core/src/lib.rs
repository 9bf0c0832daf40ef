//! Simulation and characterization of dense overlapping-gate quantum-dot arrays.

pub mod error;
pub mod extraction;
pub mod fit;
pub mod instrument;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod rng;
pub mod statistics;
pub mod transport;

pub use error::{Error, ErrorClass, Result};

pub type Sample = model::SampleInstance<f64>;
pub type Dot = model::DotGroundTruth<f64>;
pub type Stack = model::OxideStack<f64>;
pub type Geometry = model::ArrayGeometry<f64>;
pub type Disorder = model::DisorderConfig<f64>;
pub type Constants = model::PhysicalConstants<f64>;
