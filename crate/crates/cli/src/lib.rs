// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Batch runner for the `nmjumps` binary.

pub mod commands;
pub mod config;
pub mod model;
