//! Hedonic house-price toolkit: listing parsing, cleaning and encoding,
//! five from-scratch regressors, evaluation, and exact Shapley attribution.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod listing_parser;
pub mod models;
pub mod preprocess;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
