// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Command dispatch. Every command writes its artifacts and a `manifest.json`
//! into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;
use nmjumps::counting::n_jump_contribution;
use nmjumps::figures::{self, Fig2, FigureConfig};
use nmjumps::linalg::{DensityMatrix, Superoperator};
use nmjumps::markov::TimeGrid;
use nmjumps::master::{self, KernelSpec};
use nmjumps::nm_traj::{simulate_ensemble, write_trajectory_csv, NmSampler};
use nmjumps::propagator::{check_decaying_survival, extract_memory_kernel, reduced_propagator};
use nmjumps::tls::{self, TLSParams};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::model::{load_model, LoadedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Propagator,
    Trajectories,
    Master,
    Stats,
    Figures(Figure),
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Validate => "validate".into(),
            Command::Propagator => "propagator".into(),
            Command::Trajectories => "trajectories".into(),
            Command::Master => "master".into(),
            Command::Stats => "stats".into(),
            Command::Figures(f) => format!("figures {}", f.name()),
        }
    }
}

impl Figure {
    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// An internal validator result; any failed check makes the run fail.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value.is_finite() && value < threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub versions: Value,
    pub wall_time_s: f64,
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Manifest {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Collects artifacts and checks for one run.
struct Run<'a> {
    out: &'a Path,
    artifacts: Vec<Artifact>,
    checks: Vec<Check>,
}

impl Run<'_> {
    fn write(&mut self, file: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let path = self.out.join(file);
        fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(Artifact {
            file: file.into(),
            sha256: hex::encode(Sha256::digest(&buf)),
            bytes: buf.len(),
        });
        info!("wrote {} ({} bytes)", path.display(), buf.len());
        Ok(())
    }

    fn write_json(&mut self, file: &str, value: &Value) -> Result<()> {
        self.write(file, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    fn check(&mut self, c: Check) {
        info!(
            "check {}: {:.3e} ({})",
            c.name,
            c.value,
            if c.passed { "ok" } else { "FAILED" }
        );
        self.checks.push(c);
    }
}

/// Runs one command and writes `manifest.json`. The manifest is written even
/// when a check fails; callers decide the exit status from `passed`.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Manifest> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut run = Run {
        out: &cfg.out,
        artifacts: Vec::new(),
        checks: Vec::new(),
    };
    let loaded = load_model(&cfg.source())?;
    match cmd {
        Command::Validate => validate(&mut run, &loaded)?,
        Command::Propagator => propagator(&mut run, cfg, &loaded)?,
        Command::Trajectories => trajectories(&mut run, cfg, &loaded)?,
        Command::Master => master_cmd(&mut run, cfg, &loaded)?,
        Command::Stats => stats(&mut run, cfg, &loaded)?,
        Command::Figures(f) => figure(&mut run, cfg, &loaded, f)?,
    }
    let passed = run.checks.iter().all(|c| c.passed);
    let manifest = Manifest {
        command: cmd.name(),
        config: cfg.clone(),
        seed: cfg.seed,
        versions: json!({ "nmjumps": nmjumps::VERSION, "nmjumps-cli": env!("CARGO_PKG_VERSION") }),
        wall_time_s: start.elapsed().as_secs_f64(),
        artifacts: run.artifacts,
        checks: run.checks,
        passed,
    };
    let path = cfg.out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.json")
}

fn matrix_json(rho: &DensityMatrix) -> Value {
    let d = rho.dim();
    Value::Array(
        (0..d)
            .map(|i| {
                Value::Array(
                    (0..d)
                        .map(|j| {
                            let z = rho.get(i, j);
                            json!([z.re, z.im])
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

fn initial_state(cfg: &RunConfig, loaded: &LoadedModel) -> Result<DensityMatrix> {
    cfg.initial_state.resolve(loaded.model.d_s())
}

fn require_tls(loaded: &LoadedModel, what: &str) -> Result<TLSParams> {
    match loaded.tls {
        Some(p) => Ok(p),
        None => bail!("{what} needs the built-in two-level model (--model tls)"),
    }
}

fn validate(run: &mut Run, loaded: &LoadedModel) -> Result<()> {
    let cert = &loaded.certificate;
    let reset = loaded.model.reset_state(cert);
    let report = json!({
        "d_s": loaded.model.d_s(),
        "d_a": loaded.model.d_a(),
        "kind": format!("{:?}", cert.kind),
        "gamma_alpha": cert.gamma_alpha,
        "c": cert.c,
        "d": cert.d,
        "reset_ancilla": matrix_json(&cert.reset_ancilla),
        "reset_system": reset.as_ref().map(matrix_json),
        "residual": cert.residual,
    });
    run.write_json("certificate.json", &report)?;
    run.check(Check::below(
        "factorization_residual",
        cert.residual,
        nmjumps::linalg::TOL.factorization,
    ));
    Ok(())
}

fn propagator(run: &mut Run, cfg: &RunConfig, loaded: &LoadedModel) -> Result<()> {
    let rho0 = initial_state(cfg, loaded)?;
    let table = reduced_propagator(&loaded.model, &loaded.certificate, cfg.t_max, cfg.dt)?;
    run.write("propagator.csv", |buf| Ok(table.write_csv(buf)?))?;
    let report = check_decaying_survival(&table, &[rho0]);
    let worst = report
        .violations
        .iter()
        .map(|v| v.increase)
        .fold(0.0, f64::max);
    run.check(Check {
        name: "survival_decay_violations".into(),
        value: report.violations.len() as f64,
        threshold: 0.0,
        passed: report.is_clean(),
    });
    if !report.is_clean() {
        log::warn!("largest survival increase {worst:.3e}");
    }
    Ok(())
}

fn trajectories(run: &mut Run, cfg: &RunConfig, loaded: &LoadedModel) -> Result<()> {
    let rho0 = initial_state(cfg, loaded)?;
    let grid = TimeGrid::new(cfg.t_max, cfg.dt, cfg.effective_stride())?;
    let sampler = NmSampler::for_model(&loaded.model, &loaded.certificate, grid);
    info!(
        "sampling {} trajectories ({} path)",
        cfg.trajectories,
        if sampler.is_renewal() {
            "renewal"
        } else {
            "general"
        }
    );
    let ens = simulate_ensemble(
        |i| sampler.sample(&rho0, cfg.seed, i),
        cfg.trajectories,
        cfg.seed,
        1,
    )?;
    if ens.truncated > 0 {
        log::warn!("{} trajectories ended in a dark state", ens.truncated);
    }
    let traj = ens.kept.into_iter().next().expect("one trajectory kept");
    run.write("trajectory.csv", |buf| {
        Ok(write_trajectory_csv(&traj, buf)?)
    })?;
    run.write("jump_times.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["trajectory", "jump", "t"])?;
        for (i, times) in ens.jump_times.iter().enumerate() {
            for (k, t) in times.iter().enumerate() {
                w.write_record([i.to_string(), k.to_string(), format!("{t:.10}")])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let series = ens.series;
    run.check(Check::below(
        "ensemble_trace_error",
        series.max_trace_error(),
        1e-9,
    ));
    match loaded.tls {
        Some(p) => {
            let exact = series
                .t
                .iter()
                .map(|&t| tls::analytic_solution(&p, &rho0, t))
                .collect::<nmjumps::Result<Vec<_>>>()?;
            let p_exact: Vec<f64> = exact.iter().map(|r| r.get(0, 0).re).collect();
            let c_exact: Vec<f64> = exact.iter().map(|r| r.get(0, 1).im).collect();
            run.write("ensemble.csv", |buf| {
                Ok(series
                    .write_csv(buf, &[("p_plus_exact", &p_exact), ("im_c_exact", &c_exact)])?)
            })?;
            let fig = Fig2 {
                trajectory: traj,
                ensemble: series,
                exact,
            };
            run.check(Check::at_least("coverage_4sigma", fig.coverage(4.0), 0.99));
        }
        None => run.write("ensemble.csv", |buf| Ok(series.write_csv(buf, &[])?))?,
    }
    Ok(())
}

/// Σ γ_α V_α · V_α† on the system.
fn system_jump(loaded: &LoadedModel) -> Superoperator {
    let d = loaded.model.d_s();
    loaded
        .model
        .system_channels(&loaded.certificate)
        .channels()
        .iter()
        .fold(Superoperator::zeros(d), |acc, ch| {
            acc.add(&Superoperator::sandwich(&ch.op, &ch.op).scale(ch.rate))
        })
}

fn master_cmd(run: &mut Run, cfg: &RunConfig, loaded: &LoadedModel) -> Result<()> {
    let rho0 = initial_state(cfg, loaded)?;
    let table = reduced_propagator(&loaded.model, &loaded.certificate, cfg.t_max, cfg.dt)?;
    let kernel = extract_memory_kernel(&table)?;
    let reset = loaded.model.reset_state(&loaded.certificate);
    let renewal = reset.is_some();
    let spec = KernelSpec::from_kernel(&kernel, Some(system_jump(loaded)), reset);
    let full = if renewal {
        master::integrate_renewal_master(&spec, &rho0, cfg.t_max)?
    } else {
        master::integrate_local_nonlocal(&spec, &rho0, cfg.t_max)?
    };
    run.check(Check::below("trace_error", full.max_trace_error(), 1e-9));
    run.check(Check::below(
        "hermiticity_error",
        full.max_hermiticity_error(),
        1e-9,
    ));
    let series = full.subsample(cfg.effective_stride());
    match loaded.tls {
        Some(p) => {
            let inf = tls::stationary_state(&p);
            let e = master::relative_entropy_series(&series, &inf)?;
            let dev = series
                .t
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    Ok(series
                        .density(k)
                        .max_abs_diff(&tls::analytic_solution(&p, &rho0, t)?))
                })
                .collect::<nmjumps::Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            run.check(Check::below("closed_form_deviation", dev, 1e-3));
            run.write("master.csv", |buf| Ok(series.write_csv(buf, &[("E", &e)])?))?;
        }
        None => run.write("master.csv", |buf| Ok(series.write_csv(buf, &[])?))?,
    }
    Ok(())
}

fn stats(run: &mut Run, cfg: &RunConfig, loaded: &LoadedModel) -> Result<()> {
    let rho0 = initial_state(cfg, loaded)?;
    let table = reduced_propagator(&loaded.model, &loaded.certificate, cfg.t_max, cfg.dt)?;
    let exp = n_jump_contribution(&table, &rho0, cfg.n_max)?;
    run.write("stats.csv", |buf| Ok(exp.write_csv(buf)?))?;
    let min_rem = (0..exp.t.len())
        .map(|k| exp.remainder(k))
        .fold(f64::INFINITY, f64::min);
    // Trapezoid convolutions leave an O(h²) error in Σ p_n.
    run.check(Check::below(
        "negative_remainder",
        (-min_rem).max(0.0),
        1e-4,
    ));
    let min_p = (0..=exp.n_max())
        .flat_map(|n| exp.probabilities(n))
        .fold(f64::INFINITY, f64::min);
    run.check(Check::below(
        "negative_probability",
        (-min_p).max(0.0),
        1e-9,
    ));
    Ok(())
}

fn figure(run: &mut Run, cfg: &RunConfig, loaded: &LoadedModel, f: Figure) -> Result<()> {
    let p = require_tls(loaded, "figures")?;
    let fc = FigureConfig {
        t_max: cfg.t_max,
        h: cfg.dt,
        stride: cfg.effective_stride(),
        n_traj: cfg.trajectories,
        seed: cfg.seed,
    };
    match f {
        Figure::Fig1 => {
            let d = figures::fig1(&p, &fc)?;
            run.write("fig1.csv", |buf| Ok(d.write_csv(buf)?))?;
            run.check(Check::below(
                "waiting_minus_at_zero",
                d.waiting_minus[0].abs(),
                1e-12,
            ));
        }
        Figure::Fig2 => {
            let d = figures::fig2(&p, &fc)?;
            run.write("fig2_trajectory.csv", |buf| {
                Ok(write_trajectory_csv(&d.trajectory, buf)?)
            })?;
            run.write("fig2_ensemble.csv", |buf| Ok(d.write_ensemble_csv(buf)?))?;
            run.check(Check::below(
                "ensemble_trace_error",
                d.ensemble.max_trace_error(),
                1e-9,
            ));
            run.check(Check::at_least("coverage_4sigma", d.coverage(4.0), 0.99));
        }
        Figure::Fig3 => {
            let d = figures::fig3(&p, &fc)?;
            run.write("fig3.csv", |buf| Ok(d.write_csv(buf)?))?;
            let intervals =
                |v: &[(f64, f64)]| v.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>();
            run.write_json(
                "fig3_backflow.json",
                &json!({
                    "y_minus": intervals(&d.backflow_y),
                    "x_minus": intervals(&d.backflow_x),
                }),
            )?;
            let bad = d
                .entropy_y
                .iter()
                .chain(&d.entropy_x)
                .filter(|e| !(e.is_finite() && **e >= 0.0))
                .count();
            run.check(Check::below("invalid_entropy_values", bad as f64, 0.5));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigFile, Overrides};

    fn cfg(out: &Path, t_max: f64, traj: usize) -> RunConfig {
        let flags = Overrides {
            out: Some(out.to_path_buf()),
            t_max: Some(t_max),
            trajectories: Some(traj),
            ..Default::default()
        };
        RunConfig::resolve(ConfigFile::default(), flags, "unused".into()).unwrap()
    }

    fn manifest_files(dir: &Path) -> Vec<String> {
        let text = fs::read_to_string(manifest_path(dir)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        v["artifacts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["file"].as_str().unwrap().to_string())
            .collect()
    }

    #[test]
    fn validate_writes_certificate() {
        let dir = tempfile::tempdir().unwrap();
        let m = run(Command::Validate, &cfg(dir.path(), 1.0, 10)).unwrap();
        assert!(m.passed);
        assert_eq!(manifest_files(dir.path()), ["certificate.json"]);
        let cert: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap())
                .unwrap();
        assert_eq!(cert["kind"], "Renewal");
    }

    #[test]
    fn checksums_match_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = run(Command::Stats, &cfg(dir.path(), 1.0, 10)).unwrap();
        assert!(m.passed, "{:?}", m.failed_checks());
        for a in &m.artifacts {
            let bytes = fs::read(dir.path().join(&a.file)).unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), a.sha256);
            assert_eq!(bytes.len(), a.bytes);
        }
    }

    #[test]
    fn short_runs_of_every_command() {
        for cmd in [
            Command::Propagator,
            Command::Trajectories,
            Command::Master,
            Command::Figures(Figure::Fig1),
            Command::Figures(Figure::Fig3),
        ] {
            let dir = tempfile::tempdir().unwrap();
            let m = run(cmd, &cfg(dir.path(), 2.0, 200)).unwrap();
            assert!(m.passed, "{}: {:?}", cmd.name(), m.failed_checks());
        }
    }
}
