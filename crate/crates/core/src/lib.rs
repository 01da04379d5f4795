pub mod error;
pub mod ifs;
pub mod scalar;
pub mod spec;
pub mod discretize;
pub mod dims;
pub mod fourier;
pub mod ekscan;
pub mod transforms;
pub mod cli;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the generic types.
pub type Ifs = ifs::HomogeneousIfs<f64>;
pub type Weights = ifs::WeightVector<f64>;
pub type Histogram = discretize::DyadicHistogram<f64>;
pub type Measure = spec::Measure<f64>;
pub type Estimate = dims::DimEstimate<f64>;
