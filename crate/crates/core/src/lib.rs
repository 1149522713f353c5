//! Stock panel forecasting engine built on index-guided frequency
//! decomposition and hierarchical information-guided selective state-space
//! blocks, with a cross-sectional ranking loss, synthetic factor-model data
//! and a tranche backtester.

pub mod backtest;
pub mod checkpoint;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod params;
pub mod relational;
pub mod rng;
pub mod scalar;
pub mod ssm;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use numerics::MASK_SENTINEL;
pub use params::{GradMap, Objective, ParamStore, ParamValues};
pub use scalar::Scalar;
pub use tensor::{ComplexArray, DenseArray, Tensor};
