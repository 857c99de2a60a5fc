// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Piecewise-deterministic trajectory engine shared by the Markovian and the
//! bipartite samplers.
//!
//! The engine steps an unnormalized vectorized state `v` with a cached
//! single-step exponential. Since `v` is reset to unit trace after every click,
//! `Tr v` is the survival probability of the current segment and the next
//! click happens when it falls to the drawn threshold `r`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{expm_apply, vec_trace, CMatrix, CVector, DensityMatrix, ONE, TOL};

/// Deterministic per-trajectory random stream.
pub fn trajectory_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open_uniform(rng: &mut impl Rng) -> f64 {
    loop {
        let r: f64 = rng.gen();
        if r > 0.0 {
            return r;
        }
    }
}

/// Outcome of inverting a survival curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpTime {
    At(f64),
    /// The survival probability stayed above the threshold over the whole
    /// (doubled) horizon.
    Truncated,
}

impl JumpTime {
    pub fn time(self) -> Option<f64> {
        match self {
            JumpTime::At(t) => Some(t),
            JumpTime::Truncated => None,
        }
    }
}

/// A detection event with the conditional states on both sides of it.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    /// Normalized conditional state just before the click.
    pub pre: DensityMatrix,
    /// State right after the reset.
    pub post: DensityMatrix,
}

/// One measurement record: click times plus grid-sampled conditional states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub stream: u64,
    pub jumps: Vec<JumpRecord>,
    pub times: Vec<f64>,
    /// Normalized conditional states on `times`.
    pub states: Vec<DensityMatrix>,
    /// Set when a click was requested from a dark state; no later clicks.
    pub truncated: bool,
}

impl Trajectory {
    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.time).collect()
    }

    pub fn jump_count_until(&self, t: f64) -> usize {
        self.jumps.iter().filter(|j| j.time <= t).count()
    }

    /// Intervals between consecutive clicks (first one measured from t = 0).
    pub fn intervals(&self) -> Vec<f64> {
        let mut last = 0.0;
        self.jumps
            .iter()
            .map(|j| {
                let d = j.time - last;
                last = j.time;
                d
            })
            .collect()
    }
}

pub(crate) fn vec_survival(v: &CVector) -> f64 {
    vec_trace(v).re
}

pub(crate) fn normalized(v: &CVector) -> CVector {
    v / vec_trace(v)
}

/// Smallest δ in (0, span] with Tr exp(δA) v = r, given Tr v > r ≥ Tr exp(span·A) v.
pub(crate) fn bisect_crossing(a: &CMatrix, v: &CVector, span: f64, r: f64) -> (f64, CVector) {
    let (mut lo, mut hi) = (0.0_f64, span);
    let mut hi_state = expm_apply(a, v, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let state = expm_apply(a, v, mid);
        let p = vec_survival(&state);
        if (p - r).abs() < TOL.root_find {
            return (mid, state);
        }
        if p > r {
            lo = mid;
        } else {
            hi = mid;
            hi_state = state;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    (hi, hi_state)
}

/// Stepping configuration of a trajectory.
pub(crate) struct Engine<'a> {
    /// Between-click generator on the dynamics space.
    pub drift: &'a CMatrix,
    /// exp(h · drift).
    pub step: &'a CMatrix,
    pub h: f64,
    pub n_steps: usize,
    /// Record every `stride` steps.
    pub stride: usize,
}

/// How the next click time is found after each reset.
pub(crate) enum IntervalSource<'a> {
    /// Track the stepped survival against a fresh threshold.
    Threshold,
    /// Draw the interval from a state-independent survival law (renewal).
    /// The first segment still uses the threshold, since ρ₀ is arbitrary.
    Renewal(&'a dyn Fn(f64) -> JumpTime),
}

pub(crate) struct Hooks<'a> {
    /// Maps the normalized pre-click dynamics vector to the post-click one.
    pub reset: &'a dyn Fn(&CVector) -> Result<CVector>,
    /// Maps a normalized dynamics vector to the reported (reduced) state.
    pub observe: &'a dyn Fn(&CVector) -> DensityMatrix,
}

pub(crate) fn run(
    engine: &Engine<'_>,
    hooks: &Hooks<'_>,
    source: &IntervalSource<'_>,
    v0: CVector,
    rng: &mut ChaCha8Rng,
    seed: u64,
    stream: u64,
) -> Trajectory {
    let mut traj = Trajectory {
        seed,
        stream,
        jumps: Vec::new(),
        times: vec![0.0],
        states: vec![(hooks.observe)(&normalized(&v0))],
        truncated: false,
    };
    let mut v = v0;
    let mut scratch = CVector::zeros(v.len());
    let mut threshold = open_uniform(rng);
    let mut scheduled: Option<f64> = None;
    let mut cur_t = 0.0_f64;

    for k in 0..engine.n_steps {
        let t_next = (k + 1) as f64 * engine.h;
        let mut aligned = true;
        loop {
            if let Some(tj) = scheduled {
                if tj <= t_next {
                    let pre = expm_apply(engine.drift, &v, tj - cur_t);
                    cur_t = tj;
                    aligned = false;
                    v = click(&pre, cur_t, hooks, &mut traj);
                    scheduled = next_schedule(source, cur_t, rng);
                    continue;
                }
            }
            let candidate = if aligned {
                scratch.gemv(ONE, engine.step, &v, crate::linalg::ZERO);
                scratch.clone()
            } else {
                expm_apply(engine.drift, &v, t_next - cur_t)
            };
            let tracks_threshold = scheduled.is_none() && !traj.truncated;
            if tracks_threshold && vec_survival(&candidate) <= threshold {
                let (delta, pre) = bisect_crossing(engine.drift, &v, t_next - cur_t, threshold);
                cur_t += delta;
                aligned = false;
                v = click(&pre, cur_t, hooks, &mut traj);
                threshold = open_uniform(rng);
                scheduled = next_schedule(source, cur_t, rng);
                continue;
            }
            v = candidate;
            cur_t = t_next;
            break;
        }
        if (k + 1) % engine.stride == 0 {
            traj.times.push(t_next);
            traj.states.push((hooks.observe)(&normalized(&v)));
        }
    }
    traj
}

fn next_schedule(source: &IntervalSource<'_>, now: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    match source {
        IntervalSource::Threshold => None,
        IntervalSource::Renewal(draw) => match draw(open_uniform(rng)) {
            JumpTime::At(s) => Some(now + s),
            // Never clicks again: park the schedule beyond any horizon.
            JumpTime::Truncated => Some(f64::INFINITY),
        },
    }
}

fn click(pre_unnorm: &CVector, t: f64, hooks: &Hooks<'_>, traj: &mut Trajectory) -> CVector {
    let pre = normalized(pre_unnorm);
    match (hooks.reset)(&pre) {
        Ok(post) => {
            traj.jumps.push(JumpRecord {
                time: t,
                pre: (hooks.observe)(&pre),
                post: (hooks.observe)(&post),
            });
            post
        }
        Err(Error::DarkState { .. }) | Err(_) => {
            traj.truncated = true;
            pre
        }
    }
}
