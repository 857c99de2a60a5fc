// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Markovian quantum jumps: generator split, reset map, interval statistics
//! and the two trajectory algorithms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    devectorize, dissipator, expm, hamiltonian_superop, random_state, vec_trace, CMatrix, CVector,
    DensityMatrix, OperatorSet, Superoperator, ONE, TOL, ZERO,
};
use crate::sampler::{
    self, bisect_crossing, open_uniform, trajectory_rng, vec_survival, Engine, Hooks,
    IntervalSource, JumpRecord, JumpTime, Trajectory,
};

/// Unmonitored generator plus monitored channels.
#[derive(Debug, Clone)]
pub struct JumpModel {
    l0: Superoperator,
    channels: OperatorSet,
}

impl JumpModel {
    pub fn new(l0: Superoperator, channels: OperatorSet) -> Result<Self> {
        if let Some(d) = channels.dim() {
            if d != l0.dim() {
                return Err(Error::Dimension(format!(
                    "channels act on dimension {d}, L0 on {}",
                    l0.dim()
                )));
            }
        }
        Ok(Self { l0, channels })
    }

    /// Model whose unmonitored part is −i[H, ·].
    pub fn with_hamiltonian(h: &CMatrix, channels: OperatorSet) -> Result<Self> {
        Self::new(hamiltonian_superop(h)?, channels)
    }

    pub fn dim(&self) -> usize {
        self.l0.dim()
    }

    pub fn l0(&self) -> &Superoperator {
        &self.l0
    }

    pub fn channels(&self) -> &OperatorSet {
        &self.channels
    }

    /// L0 + Σ γ_α C[V_α].
    pub fn generator(&self) -> Superoperator {
        self.channels
            .channels()
            .iter()
            .fold(self.l0.clone(), |acc, ch| {
                acc.add(
                    &dissipator(&ch.op)
                        .expect("square by construction")
                        .scale(ch.rate),
                )
            })
    }
}

/// Between-click drift D and click part J, with D + J the full generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitGenerator {
    pub d: Superoperator,
    pub j: Superoperator,
}

impl SplitGenerator {
    pub fn dim(&self) -> usize {
        self.d.dim()
    }

    pub fn generator(&self) -> Superoperator {
        self.d.add(&self.j)
    }

    /// Largest |entry| of D and J; sets the default step size.
    pub fn max_rate(&self) -> f64 {
        self.d.max_abs().max(self.j.max_abs())
    }

    /// Tr[J ρ], the click intensity.
    pub fn intensity(&self, rho: &DensityMatrix) -> f64 {
        self.j.trace_of(rho)
    }
}

pub fn split(model: &JumpModel) -> SplitGenerator {
    let dim = model.dim();
    let mut j = Superoperator::zeros(dim);
    let mut d = model.l0.clone();
    for ch in model.channels.channels() {
        let vdv = ch.op.adjoint() * &ch.op;
        j = j.add(&Superoperator::sandwich(&ch.op, &ch.op).scale(ch.rate));
        let anti = Superoperator::left(&vdv).add(&Superoperator::right(&vdv));
        d = d.sub(&anti.scale(0.5 * ch.rate));
    }
    SplitGenerator { d, j }
}

/// Normalized reset J v / Tr[J v] on vectorized states.
pub(crate) fn reset_vec(j: &CMatrix, v: &CVector) -> Result<CVector> {
    let out = j * v;
    let norm = vec_trace(&out).re;
    if norm <= TOL.jump_norm_floor {
        return Err(Error::DarkState {
            intensity: norm,
            floor: TOL.jump_norm_floor,
        });
    }
    Ok(out / crate::linalg::c(norm, 0.0))
}

/// M ρ = J ρ / Tr[J ρ].
pub fn jump_map(split: &SplitGenerator, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let v = reset_vec(split.j.matrix(), &rho.to_vec())?;
    Ok(DensityMatrix::from_matrix_unchecked(devectorize(&v)?))
}

/// Survival, waiting-time density and conditional rate on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStatistics {
    pub t: Vec<f64>,
    pub survival: Vec<f64>,
    pub waiting: Vec<f64>,
    /// w / P0; NaN where P0 vanishes.
    pub conditional: Vec<f64>,
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first().is_some_and(|&t| t != 0.0) {
        return Err(Error::GridMismatch("time grid must start at 0".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridMismatch(
            "time grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// P0(t|ρ) = Tr[exp(tD) ρ] and w = −Tr[D exp(tD) ρ].
pub fn interval_statistics(
    split: &SplitGenerator,
    rho: &DensityMatrix,
    t_grid: &[f64],
) -> Result<IntervalStatistics> {
    check_grid(t_grid)?;
    let d = split.d.matrix();
    let mut v = rho.to_vec();
    let mut last = 0.0;
    let mut out = IntervalStatistics {
        t: t_grid.to_vec(),
        survival: Vec::with_capacity(t_grid.len()),
        waiting: Vec::with_capacity(t_grid.len()),
        conditional: Vec::with_capacity(t_grid.len()),
    };
    for &t in t_grid {
        if t > last {
            v = crate::linalg::expm_apply(d, &v, t - last);
            last = t;
        }
        let p = vec_survival(&v);
        let w = -vec_trace(&(d * &v)).re;
        out.survival.push(p);
        out.waiting.push(w);
        out.conditional.push(if p > 0.0 { w / p } else { f64::NAN });
    }
    Ok(out)
}

/// Outcome of [`classify_renewal`].
#[derive(Debug, Clone, PartialEq)]
pub enum RenewalClass {
    /// Every click resets to the same state.
    Renewal(DensityMatrix),
    NonRenewal,
}

const PROBE_SEED: u64 = 0x5eed_0f_9e0be;
const PROBE_COUNT: usize = 8;

/// Renewal iff every active V_α = |r_α⟩⟨u| shares one right vector and the
/// reset map is state-independent on random probes.
pub fn classify_renewal(channels: &OperatorSet) -> RenewalClass {
    let active: Vec<_> = channels
        .channels()
        .iter()
        .filter(|c| c.rate > 0.0)
        .collect();
    let Some(first) = active.first() else {
        return RenewalClass::NonRenewal;
    };
    let mut common: Option<CVector> = None;
    for ch in &active {
        let Some(u) = rank_one_right_vector(&ch.op) else {
            return RenewalClass::NonRenewal;
        };
        match &common {
            None => common = Some(u),
            Some(c) => {
                if (c.dotc(&u).norm() - 1.0).abs() > 1e-9 {
                    return RenewalClass::NonRenewal;
                }
            }
        }
    }
    let d = first.op.nrows();
    let model = JumpModel::new(Superoperator::zeros(d), channels.clone())
        .expect("dimensions validated by OperatorSet");
    let sp = split(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut reset: Option<DensityMatrix> = None;
    for _ in 0..PROBE_COUNT {
        let probe = random_state(&mut rng, d);
        let Ok(m) = jump_map(&sp, &probe) else {
            return RenewalClass::NonRenewal;
        };
        match &reset {
            None => reset = Some(m),
            Some(r) => {
                if r.max_abs_diff(&m) > TOL.renewal_probe {
                    return RenewalClass::NonRenewal;
                }
            }
        }
    }
    RenewalClass::Renewal(reset.expect("at least one probe"))
}

/// Unit right singular vector of a rank-1 operator.
fn rank_one_right_vector(v: &CMatrix) -> Option<CVector> {
    let svd = v.clone().svd(false, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s0 = svd.singular_values[order[0]];
    if s0 == 0.0 {
        return None;
    }
    if order.len() > 1 && svd.singular_values[order[1]] > 1e-12 * s0 {
        return None;
    }
    let vt = svd.v_t.expect("requested");
    Some(vt.row(order[0]).adjoint())
}

/// Uniform output grid: `n_steps` steps of `h`, recorded every `stride` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub h: f64,
    pub n_steps: usize,
    pub stride: usize,
}

impl TimeGrid {
    /// Grid reaching `t_max` with step at most `h`.
    pub fn new(t_max: f64, h: f64, stride: usize) -> Result<Self> {
        if !(t_max > 0.0 && h > 0.0 && t_max.is_finite() && h.is_finite()) {
            return Err(Error::Validation(format!(
                "grid needs positive t_max and step, got t_max = {t_max}, h = {h}"
            )));
        }
        let n_steps = ((t_max / h) - 1e-9).ceil().max(1.0) as usize;
        let stride = stride.max(1);
        if n_steps % stride != 0 {
            return Err(Error::GridMismatch(format!(
                "{n_steps} steps are not a multiple of the output stride {stride}"
            )));
        }
        Ok(Self {
            h: t_max / n_steps as f64,
            n_steps,
            stride,
        })
    }

    pub fn t_max(&self) -> f64 {
        self.h * self.n_steps as f64
    }

    pub fn output_times(&self) -> Vec<f64> {
        (0..=self.n_steps / self.stride)
            .map(|k| (k * self.stride) as f64 * self.h)
            .collect()
    }
}

/// Default step min(1/(20·rate), t_max/2000).
pub fn default_step(max_rate: f64, t_max: f64) -> f64 {
    let by_rate = if max_rate > 0.0 {
        1.0 / (20.0 * max_rate)
    } else {
        f64::INFINITY
    };
    by_rate.min(t_max / 2000.0)
}

fn observe_system(v: &CVector) -> DensityMatrix {
    DensityMatrix::from_matrix_unchecked(devectorize(v).expect("square by construction"))
}

/// Finite-interval sampler with the single-step exponential cached.
#[derive(Debug, Clone)]
pub struct MarkovSampler {
    split: SplitGenerator,
    step: CMatrix,
    grid: TimeGrid,
}

impl MarkovSampler {
    pub fn new(split: &SplitGenerator, grid: TimeGrid) -> Self {
        let step = expm(&split.d, grid.h).matrix().clone();
        Self {
            split: split.clone(),
            step,
            grid,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Trajectory `stream` of the family seeded by `seed`.
    pub fn sample(&self, rho0: &DensityMatrix, seed: u64, stream: u64) -> Trajectory {
        let mut rng = trajectory_rng(seed, stream);
        let j = self.split.j.matrix();
        let engine = Engine {
            drift: self.split.d.matrix(),
            step: &self.step,
            h: self.grid.h,
            n_steps: self.grid.n_steps,
            stride: self.grid.stride,
        };
        let reset = |v: &CVector| reset_vec(j, v);
        let hooks = Hooks {
            reset: &reset,
            observe: &observe_system,
        };
        sampler::run(
            &engine,
            &hooks,
            &IntervalSource::Threshold,
            rho0.to_vec(),
            &mut rng,
            seed,
            stream,
        )
    }

    /// First click time from `rho` for threshold `r`, doubling the search
    /// horizon (initially the grid length) up to 2¹⁰ times.
    pub fn jump_time(&self, rho: &DensityMatrix, r: f64) -> JumpTime {
        invert_survival(
            self.split.d.matrix(),
            &self.step,
            self.grid.h,
            rho.to_vec(),
            r,
            self.grid.n_steps,
        )
    }
}

/// Smallest t with Tr[exp(tA) v] = r, bracketed on the h-grid.
pub(crate) fn invert_survival(
    drift: &CMatrix,
    step: &CMatrix,
    h: f64,
    mut v: CVector,
    r: f64,
    horizon_steps: usize,
) -> JumpTime {
    let mut next = CVector::zeros(v.len());
    let mut k = 0usize;
    let mut limit = horizon_steps.max(1);
    for _ in 0..=10 {
        while k < limit {
            next.gemv(ONE, step, &v, ZERO);
            if vec_survival(&next) <= r {
                let (delta, _) = bisect_crossing(drift, &v, h, r);
                return JumpTime::At(k as f64 * h + delta);
            }
            std::mem::swap(&mut v, &mut next);
            k += 1;
        }
        limit *= 2;
    }
    JumpTime::Truncated
}

/// Finite-interval algorithm: clicks where P0(Δ | Mρ(t_n)) = r.
pub fn sample_trajectory(
    split: &SplitGenerator,
    rho0: &DensityMatrix,
    grid: TimeGrid,
    seed: u64,
    stream: u64,
) -> Trajectory {
    MarkovSampler::new(split, grid).sample(rho0, seed, stream)
}

/// Click probability within dt: dt · Tr[J ρ].
pub fn delta_p(split: &SplitGenerator, rho: &DensityMatrix, dt: f64) -> f64 {
    dt * split.intensity(rho)
}

/// Infinitesimal-step algorithm: per step, click with probability ΔP,
/// otherwise evolve with the normalized no-click propagator. A click inside
/// step k is recorded at the end of the step.
pub fn sample_trajectory_dtstep(
    split: &SplitGenerator,
    rho0: &DensityMatrix,
    grid: TimeGrid,
    seed: u64,
    stream: u64,
) -> Trajectory {
    let mut rng = trajectory_rng(seed, stream);
    let step = expm(&split.d, grid.h);
    let (j, e) = (split.j.matrix(), step.matrix());
    let mut v = rho0.to_vec();
    let mut traj = Trajectory {
        seed,
        stream,
        jumps: Vec::new(),
        times: vec![0.0],
        states: vec![rho0.clone()],
        truncated: false,
    };
    let mut warned = false;
    let mut next = CVector::zeros(v.len());
    for k in 0..grid.n_steps {
        let t_next = (k + 1) as f64 * grid.h;
        next.gemv(ONE, j, &v, ZERO);
        let dp = grid.h * vec_trace(&next).re;
        if dp > 0.1 && !warned {
            log::warn!("jump probability per step {dp:.3} exceeds 0.1; reduce dt");
            warned = true;
        }
        if open_uniform(&mut rng) < dp {
            let post = reset_vec(j, &v).expect("positive click probability");
            traj.jumps.push(JumpRecord {
                time: t_next,
                pre: observe_system(&v),
                post: observe_system(&post),
            });
            v = post;
        } else {
            next.gemv(ONE, e, &v, ZERO);
            let tr = vec_trace(&next);
            v.copy_from(&next);
            v /= tr;
        }
        if (k + 1) % grid.stride == 0 {
            traj.times.push(t_next);
            traj.states.push(observe_system(&v));
        }
    }
    traj
}
