// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Non-Markovian quantum jumps from bipartite Markovian embeddings.

pub mod bipartite;
pub mod counting;
pub mod error;
pub mod figures;
pub mod linalg;
pub mod markov;
pub mod master;
pub mod nm_traj;
pub mod propagator;
pub mod sampler;
pub mod stats;
pub mod tls;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
