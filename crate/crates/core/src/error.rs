// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// No monitored transition is possible from the given state.
    #[error("dark state: jump intensity {intensity:.3e} is below the floor {floor:.1e}")]
    DarkState { intensity: f64, floor: f64 },

    #[error("rate tensor is not factorizable (relative residual {residual:.3e})")]
    NotFactorizable { residual: f64 },

    /// The rates only admit an alpha-dependent ancilla reset, which leaves
    /// system and ancilla classically correlated after each click.
    #[error(
        "rate tensor only yields a classically correlated reset (relative residual {residual:.3e})"
    )]
    ClassicalCorrelatedReset { residual: f64 },

    #[error("non-renewal channels require uniform ancilla weights d_m, got {0:?}")]
    NonUniformAncillaWeights(Vec<f64>),

    #[error("post-jump bipartite state is not separable (deviation {deviation:.3e})")]
    SeparabilityViolation { deviation: f64 },

    #[error("kernel deconvolution is ill-conditioned (inversion residual {residual:.3e})")]
    IllConditioned { residual: f64 },

    #[error("implicit step rejected at t = {t}: corrector residual {residual:.3e}")]
    StepRejected { t: f64, residual: f64 },

    #[error("state has a negative eigenvalue {eigenvalue:.3e}")]
    NonPositiveState { eigenvalue: f64 },

    #[error("closed forms need gamma' = gamma (got gamma = {gamma}, gamma' = {gamma_prime})")]
    UnsupportedRegime { gamma: f64, gamma_prime: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("times must be ordered within [0, t]: {0:?}")]
    UnorderedTimes(Vec<f64>),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
