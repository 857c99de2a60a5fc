// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Datasets for the two-level example: survival and waiting-time curves,
//! trajectories with their ensemble average, and relative-entropy decay.

use std::io::Write;

use crate::error::Result;
use crate::linalg::DensityMatrix;
use crate::markov::TimeGrid;
use crate::master::{detect_backflow, relative_entropy};
use crate::nm_traj::{simulate_ensemble, EnsembleSeries, NmSampler};
use crate::sampler::Trajectory;
use crate::tls::{self, TLSParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureConfig {
    pub t_max: f64,
    pub h: f64,
    /// Output every `stride` steps.
    pub stride: usize,
    pub n_traj: usize,
    pub seed: u64,
}

impl FigureConfig {
    /// t ∈ [0, 10/γ], h = 1/(200γ), output every 10 steps, 2000 trajectories.
    pub fn standard(params: &TLSParams, seed: u64) -> Self {
        let g = if params.gamma > 0.0 {
            params.gamma
        } else {
            1.0
        };
        Self {
            t_max: 10.0 / g,
            h: 1.0 / (200.0 * g),
            stride: 10,
            n_traj: 2000,
            seed,
        }
    }

    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_max, self.h, self.stride)
    }
}

fn write_columns<W: Write>(out: W, names: &[&str], cols: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    for k in 0..cols[0].len() {
        w.write_record(cols.iter().map(|c| format!("{:.12e}", c[k])))?;
    }
    w.flush()?;
    Ok(())
}

/// P0(t|ρ) and w(t|ρ) for ρ = |y₋⟩⟨y₋| and |−⟩⟨−|.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig1 {
    pub t: Vec<f64>,
    pub survival_y: Vec<f64>,
    pub waiting_y: Vec<f64>,
    pub survival_minus: Vec<f64>,
    pub waiting_minus: Vec<f64>,
}

impl Fig1 {
    /// Columns `t, P0_y_minus, w_y_minus, P0_minus, w_minus`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_columns(
            out,
            &["t", "P0_y_minus", "w_y_minus", "P0_minus", "w_minus"],
            &[
                &self.t,
                &self.survival_y,
                &self.waiting_y,
                &self.survival_minus,
                &self.waiting_minus,
            ],
        )
    }
}

pub fn fig1(params: &TLSParams, cfg: &FigureConfig) -> Result<Fig1> {
    let t = cfg.grid()?.output_times();
    let curve = |rho: &DensityMatrix, waiting: bool| -> Result<Vec<f64>> {
        t.iter()
            .map(|&s| {
                if waiting {
                    tls::analytic_waiting(params, rho, s)
                } else {
                    tls::analytic_survival(params, rho, s)
                }
            })
            .collect()
    };
    let (y, m) = (tls::y_minus(), tls::minus());
    Ok(Fig1 {
        survival_y: curve(&y, false)?,
        waiting_y: curve(&y, true)?,
        survival_minus: curve(&m, false)?,
        waiting_minus: curve(&m, true)?,
        t,
    })
}

/// One trajectory, the ensemble average and the closed-form solution, from |y₋⟩.
#[derive(Debug, Clone)]
pub struct Fig2 {
    pub trajectory: Trajectory,
    pub ensemble: EnsembleSeries,
    pub exact: Vec<DensityMatrix>,
}

impl Fig2 {
    /// Columns `t, p_plus_mean, p_plus_se, p_plus_exact, im_c_mean, im_c_se, im_c_exact`
    /// with p⁺ = ⟨+|ρ|+⟩ and c = ⟨+|ρ|−⟩.
    pub fn write_ensemble_csv<W: Write>(&self, out: W) -> Result<()> {
        let e = &self.ensemble;
        let col = |f: &dyn Fn(usize) -> f64| (0..e.len()).map(f).collect::<Vec<f64>>();
        write_columns(
            out,
            &[
                "t",
                "p_plus_mean",
                "p_plus_se",
                "p_plus_exact",
                "im_c_mean",
                "im_c_se",
                "im_c_exact",
            ],
            &[
                &e.t,
                &col(&|k| e.mean[k][(0, 0)].re),
                &col(&|k| e.stderr[k][(0, 0)].re),
                &col(&|k| self.exact[k].get(0, 0).re),
                &col(&|k| e.mean[k][(0, 1)].im),
                &col(&|k| e.stderr[k][(0, 1)].im),
                &col(&|k| self.exact[k].get(0, 1).im),
            ],
        )
    }

    /// Fraction of grid points where both p⁺ and Im c lie within `n_sigma`
    /// standard errors of the closed form (1e-9 absolute slack).
    pub fn coverage(&self, n_sigma: f64) -> f64 {
        let e = &self.ensemble;
        let inside = (0..e.len())
            .filter(|&k| {
                let p = (e.mean[k][(0, 0)].re - self.exact[k].get(0, 0).re).abs();
                let q = (e.mean[k][(0, 1)].im - self.exact[k].get(0, 1).im).abs();
                p <= n_sigma * e.stderr[k][(0, 0)].re + 1e-9
                    && q <= n_sigma * e.stderr[k][(0, 1)].im + 1e-9
            })
            .count();
        inside as f64 / e.len() as f64
    }

    /// Largest |mean − exact| / stderr over p⁺ and Im c; points with zero
    /// stderr count only if they differ by more than 1e-9.
    pub fn max_sigma_deviation(&self) -> f64 {
        let e = &self.ensemble;
        let mut worst = 0.0_f64;
        for k in 0..e.len() {
            let pairs = [
                (
                    e.mean[k][(0, 0)].re,
                    e.stderr[k][(0, 0)].re,
                    self.exact[k].get(0, 0).re,
                ),
                (
                    e.mean[k][(0, 1)].im,
                    e.stderr[k][(0, 1)].im,
                    self.exact[k].get(0, 1).im,
                ),
            ];
            for (m, se, x) in pairs {
                let dev = (m - x).abs();
                if dev <= 1e-9 {
                    continue;
                }
                worst = worst.max(if se > 0.0 { dev / se } else { f64::INFINITY });
            }
        }
        worst
    }
}

pub fn fig2(params: &TLSParams, cfg: &FigureConfig) -> Result<Fig2> {
    let model = tls::build_tls_model(params)?;
    let cert = model.certify()?;
    let sampler = NmSampler::for_model(&model, &cert, cfg.grid()?);
    let rho0 = tls::y_minus();
    let run = simulate_ensemble(
        |i| sampler.sample(&rho0, cfg.seed, i),
        cfg.n_traj,
        cfg.seed,
        1,
    )?;
    let exact = run
        .series
        .t
        .iter()
        .map(|&t| tls::analytic_solution(params, &rho0, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fig2 {
        trajectory: run.kept.into_iter().next().expect("one trajectory kept"),
        ensemble: run.series,
        exact,
    })
}

/// E(ρ_t‖ρ∞) for ρ₀ = |y₋⟩⟨y₋| and |x₋⟩⟨x₋| with their backflow intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3 {
    pub t: Vec<f64>,
    pub entropy_y: Vec<f64>,
    pub entropy_x: Vec<f64>,
    pub backflow_y: Vec<(f64, f64)>,
    pub backflow_x: Vec<(f64, f64)>,
}

impl Fig3 {
    /// Columns `t, E_y_minus, E_x_minus`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_columns(
            out,
            &["t", "E_y_minus", "E_x_minus"],
            &[&self.t, &self.entropy_y, &self.entropy_x],
        )
    }
}

/// Entropies on the full step grid (backflow is detected there), reported on
/// the output grid.
pub fn fig3(params: &TLSParams, cfg: &FigureConfig) -> Result<Fig3> {
    let grid = TimeGrid::new(cfg.t_max, cfg.h, 1)?;
    let t = grid.output_times();
    let inf = tls::stationary_state(params);
    let series = |rho0: &DensityMatrix| -> Result<Vec<f64>> {
        t.iter()
            .map(|&s| {
                relative_entropy(
                    tls::analytic_solution(params, rho0, s)?.matrix(),
                    inf.matrix(),
                )
            })
            .collect()
    };
    let (ey, ex) = (series(&tls::y_minus())?, series(&tls::x_minus())?);
    let backflow_y = detect_backflow(&t, &ey);
    let backflow_x = detect_backflow(&t, &ex);
    let pick = |v: &[f64]| v.iter().step_by(cfg.stride).copied().collect::<Vec<f64>>();
    Ok(Fig3 {
        t: pick(&t),
        entropy_y: pick(&ey),
        entropy_x: pick(&ex),
        backflow_y,
        backflow_x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TLSParams, FigureConfig) {
        let p = TLSParams::symmetric(1.0, 4.0).unwrap();
        (p, FigureConfig::standard(&p, 2024))
    }

    #[test]
    fn fig1_antibunching() {
        let (p, cfg) = setup();
        let f = fig1(&p, &cfg).unwrap();
        assert_eq!(f.t.len(), 201);
        assert_eq!(f.waiting_minus[0], 0.0);
        assert!((f.waiting_y[0] - 0.5).abs() < 1e-14);
        assert!((f.survival_y[0] - 1.0).abs() < 1e-15);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,P0_y_minus,w_y_minus,P0_minus,w_minus\n"));
    }

    #[test]
    fn fig3_backflow_only_for_y_minus() {
        let (p, cfg) = setup();
        let f = fig3(&p, &cfg).unwrap();
        assert!(!f.backflow_y.is_empty());
        assert!(f.backflow_x.is_empty(), "{:?}", f.backflow_x);
        assert!(f
            .entropy_y
            .iter()
            .chain(&f.entropy_x)
            .all(|&e| e >= 0.0 && e.is_finite()));
        assert!(f.entropy_y.last().unwrap() < &1e-3);
    }

    #[test]
    fn fig2_small_ensemble_layout() {
        let (p, mut cfg) = setup();
        cfg.n_traj = 50;
        cfg.t_max = 2.0;
        let f = fig2(&p, &cfg).unwrap();
        assert_eq!(f.ensemble.n_trajectories, 50);
        assert_eq!(f.exact.len(), f.ensemble.len());
        let mut buf = Vec::new();
        f.write_ensemble_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + f.ensemble.len());
    }
}
