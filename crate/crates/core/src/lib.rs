//! Quantization-based Latin hypercube sampling for dependent inputs, weighted
//! expectation estimators and HSIC screening.

pub mod copula;
pub mod csvio;
pub mod designs;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod hsic;
pub mod inputs;
pub mod matrix;
pub mod models;
pub mod quantizer;

pub use error::{Error, Result};
pub use matrix::Matrix;
