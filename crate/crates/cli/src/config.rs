// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration: a JSON file overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nmjumps::linalg::DensityMatrix;
use nmjumps::tls;
use serde::{Deserialize, Serialize};

use crate::model::{parse_matrix, ModelSource, TlsDoc};

/// Initial state: a name (`plus`, `minus`, `y_minus`, `x_minus`, `mixed`,
/// `basis:K`) or an explicit matrix of `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum StateDoc {
    Named(String),
    Matrix(Vec<Vec<[f64; 2]>>),
}

impl StateDoc {
    pub fn resolve(&self, d_s: usize) -> Result<DensityMatrix> {
        let two_level = |rho: DensityMatrix| {
            if d_s == 2 {
                Ok(rho)
            } else {
                Err(anyhow!("named two-level state used with d_s = {d_s}"))
            }
        };
        match self {
            StateDoc::Named(name) => match name.as_str() {
                "plus" => two_level(tls::plus()),
                "minus" => two_level(tls::minus()),
                "y_minus" => two_level(tls::y_minus()),
                "x_minus" => two_level(tls::x_minus()),
                "mixed" => Ok(DensityMatrix::maximally_mixed(d_s)),
                other => {
                    let k: usize = other
                        .strip_prefix("basis:")
                        .and_then(|k| k.parse().ok())
                        .ok_or_else(|| anyhow!("unknown initial state '{other}'"))?;
                    if k >= d_s {
                        bail!("basis:{k} out of range for d_s = {d_s}");
                    }
                    Ok(DensityMatrix::basis(d_s, k))
                }
            },
            StateDoc::Matrix(raw) => {
                let m = parse_matrix(raw, d_s, "initial_state")?;
                Ok(DensityMatrix::new(m)?)
            }
        }
    }
}

/// Every field optional; flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// `"tls"` or a path to a model JSON document (relative to the config file).
    pub model: Option<String>,
    pub tls: Option<TlsDoc>,
    pub initial_state: Option<StateDoc>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub stride: Option<usize>,
    pub n_max: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let p = e.path().to_string();
            anyhow!(
                "{}: schema error at `{p}`: {}",
                path.display(),
                e.into_inner()
            )
        })?;
        if let (Some(m), Some(dir)) = (&cfg.model, path.parent()) {
            if m != "tls" && Path::new(m).is_relative() {
                cfg.model = Some(dir.join(m).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }
}

/// Flag values; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub workers: Option<usize>,
}

/// Fully resolved configuration; echoed into the manifest.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub tls: TlsDoc,
    pub initial_state: StateDoc,
    pub t_max: f64,
    pub dt: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub stride: usize,
    pub n_max: usize,
}

pub const DEFAULT_SEED: u64 = 2024;

impl RunConfig {
    pub fn resolve(file: ConfigFile, flags: Overrides, default_out: PathBuf) -> Result<Self> {
        let model = flags.model.or(file.model).unwrap_or_else(|| "tls".into());
        let tls_doc = file.tls.unwrap_or_default();
        let default_state = if model == "tls" { "y_minus" } else { "basis:0" };
        let cfg = Self {
            initial_state: file
                .initial_state
                .unwrap_or_else(|| StateDoc::Named(default_state.into())),
            tls: tls_doc,
            t_max: flags.t_max.or(file.t_max).unwrap_or(10.0),
            dt: flags.dt.or(file.dt).unwrap_or(0.005),
            trajectories: flags.trajectories.or(file.trajectories).unwrap_or(2000),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            out: flags.out.or(file.out).unwrap_or(default_out),
            workers: flags.workers.or(file.workers),
            stride: file.stride.unwrap_or(10),
            n_max: file.n_max.unwrap_or(3),
            model,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("t_max", self.t_max), ("dt", self.dt)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if self.dt > self.t_max {
            bail!("dt = {} exceeds t_max = {}", self.dt, self.t_max);
        }
        if self.trajectories == 0 || self.stride == 0 {
            bail!("trajectories and stride must be positive");
        }
        if self.workers == Some(0) {
            bail!("workers must be positive");
        }
        Ok(())
    }

    pub fn source(&self) -> ModelSource {
        if self.model == "tls" {
            ModelSource::Tls(self.tls)
        } else {
            ModelSource::File(PathBuf::from(&self.model))
        }
    }

    /// Output stride that divides the step count; the largest divisor not
    /// above the configured one.
    pub fn effective_stride(&self) -> usize {
        let n = ((self.t_max / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (1..=self.stride.min(n))
            .rev()
            .find(|s| n % s == 0)
            .unwrap_or(1)
    }
}
