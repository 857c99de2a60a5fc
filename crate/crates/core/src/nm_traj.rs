// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Non-Markovian trajectories of a certified bipartite model.
//!
//! The conditional state is carried in the bipartite space as ρ ⊗ ρ̄_a and
//! stepped with exp(h𝔻); clicks follow the reduced survival Tr[T(t)ρ⁺] and
//! reset to Emb Tr_a[𝕁·]. Reported states are the normalized partial traces.

use std::io::Write;

use rayon::prelude::*;

use crate::bipartite::{BipartiteModel, CertificateKind, ReducedDynamics, SymmetryCertificate};
use crate::error::{Error, Result};
use crate::linalg::{c, expm_matrix, CMatrix, CVector, DensityMatrix, C64};
use crate::markov::{invert_survival, TimeGrid};
use crate::propagator::PropagatorTable;
use crate::sampler::{
    self, bisect_crossing, trajectory_rng, vec_survival, Engine, Hooks, IntervalSource, JumpTime,
    Trajectory,
};
use crate::stats::pairwise_reduce;

/// Tabulated P0(k h | ρ̄_s) with the bipartite states behind it.
#[derive(Debug, Clone)]
struct RenewalCurve {
    survival: Vec<f64>,
    states: Vec<CVector>,
}

impl RenewalCurve {
    fn new(step: &CMatrix, v0: CVector, n_steps: usize) -> Self {
        let mut states = Vec::with_capacity(n_steps + 1);
        let mut survival = Vec::with_capacity(n_steps + 1);
        let mut v = v0;
        for _ in 0..n_steps {
            survival.push(vec_survival(&v));
            let next = step * &v;
            states.push(std::mem::replace(&mut v, next));
        }
        survival.push(vec_survival(&v));
        states.push(v);
        Self { survival, states }
    }
}

/// Trajectory sampler over a reduced bipartite description.
#[derive(Debug, Clone)]
pub struct NmSampler {
    dynamics: ReducedDynamics,
    step: CMatrix,
    grid: TimeGrid,
    renewal: Option<RenewalCurve>,
}

impl NmSampler {
    /// General path: every reset state is computed from the pre-click state.
    pub fn new(dynamics: &ReducedDynamics, grid: TimeGrid) -> Self {
        let step = expm_matrix(&(&dynamics.drift * c(grid.h, 0.0)));
        Self {
            dynamics: dynamics.clone(),
            step,
            grid,
            renewal: None,
        }
    }

    /// Renewal fast path: after the first click all intervals are drawn from
    /// the single curve P0(t | ρ̄_s).
    pub fn renewal(dynamics: &ReducedDynamics, grid: TimeGrid, reset: &DensityMatrix) -> Self {
        let mut s = Self::new(dynamics, grid);
        let curve = RenewalCurve::new(&s.step, dynamics.embed(reset), s.grid.n_steps);
        s.renewal = Some(curve);
        s
    }

    /// Picks the fast path when the certificate is a renewal one.
    pub fn for_model(model: &BipartiteModel, cert: &SymmetryCertificate, grid: TimeGrid) -> Self {
        let dynamics = ReducedDynamics::new(model, cert);
        match (cert.kind, model.reset_state(cert)) {
            (CertificateKind::Renewal, Some(reset)) => Self::renewal(&dynamics, grid, &reset),
            _ => Self::new(&dynamics, grid),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn is_renewal(&self) -> bool {
        self.renewal.is_some()
    }

    /// Same sampler without the renewal fast path.
    pub fn general(&self) -> Self {
        Self {
            renewal: None,
            ..self.clone()
        }
    }

    /// Smallest t with Tr[T(t)ρ⁺] = r, bisected between grid points.
    pub fn jump_time(&self, rho_plus: &DensityMatrix, r: f64) -> JumpTime {
        invert_survival(
            &self.dynamics.drift,
            &self.step,
            self.grid.h,
            self.dynamics.embed(rho_plus),
            r,
            self.grid.n_steps,
        )
    }

    /// Interval after a reset, read off the shared renewal curve.
    fn renewal_draw(&self, curve: &RenewalCurve, r: f64) -> JumpTime {
        let h = self.grid.h;
        let k = curve.survival.partition_point(|&p| p > r);
        if k == 0 {
            return JumpTime::At(0.0);
        }
        if k < curve.survival.len() {
            let (delta, _) = bisect_crossing(&self.dynamics.drift, &curve.states[k - 1], h, r);
            return JumpTime::At((k - 1) as f64 * h + delta);
        }
        let last = curve.states.len() - 1;
        match invert_survival(
            &self.dynamics.drift,
            &self.step,
            h,
            curve.states[last].clone(),
            r,
            self.grid.n_steps,
        ) {
            JumpTime::At(t) => JumpTime::At(last as f64 * h + t),
            JumpTime::Truncated => JumpTime::Truncated,
        }
    }

    /// Trajectory `stream` of the family seeded by `seed`, from ρ₀ ⊗ ρ̄_a.
    pub fn sample(&self, rho0: &DensityMatrix, seed: u64, stream: u64) -> Trajectory {
        let mut rng = trajectory_rng(seed, stream);
        let engine = Engine {
            drift: &self.dynamics.drift,
            step: &self.step,
            h: self.grid.h,
            n_steps: self.grid.n_steps,
            stride: self.grid.stride,
        };
        let dynamics = &self.dynamics;
        let reset = |v: &CVector| dynamics.reset_vec(v);
        let observe = |v: &CVector| dynamics.reduce(v);
        let hooks = Hooks {
            reset: &reset,
            observe: &observe,
        };
        let draw;
        let source = match &self.renewal {
            Some(curve) => {
                draw = move |r: f64| self.renewal_draw(curve, r);
                IntervalSource::Renewal(&draw)
            }
            None => IntervalSource::Threshold,
        };
        sampler::run(
            &engine,
            &hooks,
            &source,
            dynamics.embed(rho0),
            &mut rng,
            seed,
            stream,
        )
    }
}

/// First click time after preparing ρ⁺, using the dynamics behind `table`.
pub fn sample_jump_time_nm(
    table: &PropagatorTable,
    rho_plus: &DensityMatrix,
    r: f64,
) -> Result<JumpTime> {
    let dynamics = table
        .dynamics()
        .ok_or_else(|| Error::Validation("propagator table carries no generator".into()))?;
    let n = table.len().saturating_sub(1).max(1);
    let grid = TimeGrid::new(n as f64 * table.h(), table.h(), 1)?;
    Ok(NmSampler::new(dynamics, grid).jump_time(rho_plus, r))
}

/// One trajectory on [0, t_max] with the table's step.
pub fn sample_trajectory_nm(
    model: &BipartiteModel,
    cert: &SymmetryCertificate,
    table: &PropagatorTable,
    rho0: &DensityMatrix,
    t_max: f64,
    seed: u64,
) -> Result<Trajectory> {
    let grid = TimeGrid::new(t_max, table.h(), 1)?;
    Ok(NmSampler::for_model(model, cert, grid).sample(rho0, seed, 0))
}

/// Pointwise ensemble mean and standard error of every matrix element.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub t: Vec<f64>,
    /// Mean state per grid point.
    pub mean: Vec<CMatrix>,
    /// Standard errors, real and imaginary parts separately.
    pub stderr: Vec<CMatrix>,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl EnsembleSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn element(&self, i: usize, j: usize) -> Vec<C64> {
        self.mean.iter().map(|m| m[(i, j)]).collect()
    }

    pub fn element_stderr(&self, i: usize, j: usize) -> Vec<C64> {
        self.stderr.iter().map(|m| m[(i, j)]).collect()
    }

    pub fn max_trace_error(&self) -> f64 {
        self.mean
            .iter()
            .map(|m| (m.trace() - c(1.0, 0.0)).norm())
            .fold(0.0, f64::max)
    }

    /// CSV: `t`, then mean re/im and stderr re/im for every ρ[i][j], then
    /// optional extra columns.
    pub fn write_csv<W: Write>(&self, out: W, extra: &[(&str, &[f64])]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.mean.first().map_or(0, |m| m.nrows());
        let mut header = vec!["t".to_string()];
        for i in 0..d {
            for j in 0..d {
                for part in ["mean_re", "mean_im", "se_re", "se_im"] {
                    header.push(format!("rho_{i}{j}_{part}"));
                }
            }
        }
        header.extend(extra.iter().map(|(name, _)| name.to_string()));
        w.write_record(&header)?;
        for (k, (m, s)) in self.mean.iter().zip(&self.stderr).enumerate() {
            let mut row = vec![format!("{:.10}", self.t[k])];
            for i in 0..d {
                for j in 0..d {
                    for v in [m[(i, j)].re, m[(i, j)].im, s[(i, j)].re, s[(i, j)].im] {
                        row.push(format!("{v:.12e}"));
                    }
                }
            }
            row.extend(extra.iter().map(|(_, col)| format!("{:.12e}", col[k])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Running sums of the flattened states of a group of trajectories.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn of(traj: &Trajectory) -> Self {
        let sum: Vec<f64> = traj
            .states
            .iter()
            .flat_map(|s| {
                s.matrix()
                    .iter()
                    .flat_map(|z| [z.re, z.im])
                    .collect::<Vec<_>>()
            })
            .collect();
        let sum_sq = sum.iter().map(|x| x * x).collect();
        Self { sum, sum_sq, n: 1 }
    }

    fn merge(a: &Self, b: &Self) -> Self {
        Self {
            sum: a.sum.iter().zip(&b.sum).map(|(x, y)| x + y).collect(),
            sum_sq: a.sum_sq.iter().zip(&b.sum_sq).map(|(x, y)| x + y).collect(),
            n: a.n + b.n,
        }
    }
}

fn check_grid(reference: &[f64], traj: &Trajectory) -> Result<()> {
    if traj.times.len() != reference.len()
        || traj
            .times
            .iter()
            .zip(reference)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::GridMismatch(format!(
            "trajectory {} has {} grid points, expected {}",
            traj.stream,
            traj.times.len(),
            reference.len()
        )));
    }
    Ok(())
}

fn finish(t: Vec<f64>, d: usize, m: &Moments, seed: u64) -> EnsembleSeries {
    let n = m.n as f64;
    let per_point = 2 * d * d;
    let mut mean = Vec::with_capacity(t.len());
    let mut stderr = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        let mut mm = CMatrix::zeros(d, d);
        let mut ss = CMatrix::zeros(d, d);
        for idx in 0..d * d {
            let mut parts = [0.0; 4];
            for p in 0..2 {
                let f = k * per_point + 2 * idx + p;
                let mu = m.sum[f] / n;
                let var = if m.n > 1 {
                    ((m.sum_sq[f] - n * mu * mu) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                parts[p] = mu;
                parts[2 + p] = (var / n).sqrt();
            }
            // Column-major flattening of the d×d matrix.
            let (i, j) = (idx % d, idx / d);
            mm[(i, j)] = c(parts[0], parts[1]);
            ss[(i, j)] = c(parts[2], parts[3]);
        }
        mean.push(mm);
        stderr.push(ss);
    }
    EnsembleSeries {
        t,
        mean,
        stderr,
        n_trajectories: m.n,
        seed,
    }
}

/// Ensemble statistics of trajectories sharing one output grid.
pub fn ensemble_average(trajectories: &[Trajectory]) -> Result<EnsembleSeries> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Validation("empty ensemble".into()))?;
    for tr in trajectories {
        check_grid(&first.times, tr)?;
    }
    let parts: Vec<Moments> = trajectories.iter().map(Moments::of).collect();
    let m = pairwise_reduce(&parts, &Moments::merge).expect("non-empty");
    Ok(finish(
        first.times.clone(),
        first.states[0].dim(),
        &m,
        first.seed,
    ))
}

/// Trajectories per deterministic reduction block.
const CHUNK: usize = 128;

/// Streaming ensemble: statistics, all jump times and the first `keep` trajectories.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub series: EnsembleSeries,
    pub jump_times: Vec<Vec<f64>>,
    pub kept: Vec<Trajectory>,
    pub truncated: usize,
}

/// Samples streams 0..n of `seed` in parallel. Blocks of fixed size are
/// reduced pairwise and then combined pairwise, so the result does not depend
/// on the number of worker threads.
pub fn simulate_ensemble(
    sample: impl Fn(u64) -> Trajectory + Sync,
    n: usize,
    seed: u64,
    keep: usize,
) -> Result<EnsembleRun> {
    if n == 0 {
        return Err(Error::Validation(
            "ensemble needs at least one trajectory".into(),
        ));
    }
    let mut blocks = Vec::new();
    let mut jump_times = Vec::with_capacity(n);
    let mut kept = Vec::new();
    let mut truncated = 0;
    let mut reference: Option<Vec<f64>> = None;
    let mut d = 0;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let trajs: Vec<Trajectory> = (start..end)
            .into_par_iter()
            .map(|i| sample(i as u64))
            .collect();
        let reference = reference.get_or_insert_with(|| trajs[0].times.clone());
        d = trajs[0].states[0].dim();
        for tr in &trajs {
            check_grid(reference, tr)?;
        }
        let parts: Vec<Moments> = trajs.iter().map(Moments::of).collect();
        blocks.push(pairwise_reduce(&parts, &Moments::merge).expect("non-empty block"));
        for tr in trajs {
            jump_times.push(tr.jump_times());
            truncated += usize::from(tr.truncated);
            if kept.len() < keep {
                kept.push(tr);
            }
        }
    }
    let m = pairwise_reduce(&blocks, &Moments::merge).expect("non-empty");
    Ok(EnsembleRun {
        series: finish(reference.expect("n > 0"), d, &m, seed),
        jump_times,
        kept,
        truncated,
    })
}

/// CSV dump of one trajectory: `t`, re/im of each ρ[i][j] and an `event`
/// column (0 grid point, 1 state just before a click, 2 state after reset).
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = traj.states.first().map_or(0, |s| s.dim());
    let mut header = vec!["t".to_string()];
    for i in 0..d {
        for j in 0..d {
            header.push(format!("rho_{i}{j}_re"));
            header.push(format!("rho_{i}{j}_im"));
        }
    }
    header.push("event".into());
    w.write_record(&header)?;
    let mut rows: Vec<(f64, u8, &DensityMatrix)> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| (t, 0, s))
        .collect();
    for j in &traj.jumps {
        rows.push((j.time, 1, &j.pre));
        rows.push((j.time, 2, &j.post));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (t, event, s) in rows {
        let mut row = vec![format!("{t:.10}")];
        for i in 0..d {
            for j in 0..d {
                let z = s.get(i, j);
                row.push(format!("{:.12e}", z.re));
                row.push(format!("{:.12e}", z.im));
            }
        }
        row.push(event.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
