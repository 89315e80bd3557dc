//! Numerical toolkit for variable-order Riesz potentials, variable-order
//! fractional maximal functions, variable-dimension Hausdorff content,
//! Choquet integrals, and Luxemburg norms on discretized bounded domains,
//! together with a verification harness for the pointwise, weak-type, decay,
//! and Sobolev-Poincare estimates these operators satisfy on rough domains.

pub mod config;
pub mod content;
pub mod domain;
pub mod field;
pub mod io;
pub mod norms;
pub mod numeric;
mod par;
pub mod potential;
pub mod verify;

pub use field::{BBox, ExponentField, Grid, Point, ScalarField, TestFunction};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {what}: {detail}")]
    Invalid { what: String, detail: String },

    #[error("hypothesis violated ({name}): {detail}")]
    Hypothesis { name: String, detail: String },

    #[error("empty mask")]
    EmptyMask,

    #[error("empty intersection with the mask")]
    EmptyIntersection,

    #[error("config parse error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Invalid { what: what.into(), detail: detail.into() }
    }

    pub fn hypothesis(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Hypothesis { name: name.into(), detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
