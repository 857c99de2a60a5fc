// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Integration of the closed non-local master equations
//!
//!   dρ/dt = (D₀ + J)ρ + ∫₀ᵗ D_s(t−s)ρ(s)ds                 (local + non-local)
//!   dρ/dt = Π[D₀ρ + ∫₀ᵗ D_s(t−s)ρ(s)ds],  Π = 1 − ρ̄_s Tr   (renewal)
//!
//! and the relative-entropy backflow witness.

use std::io::Write;

use nalgebra::linalg::LU;
use nalgebra::Dyn;

use crate::error::{Error, Result};
use crate::linalg::{
    c, devectorize, eigh, hermiticity_error, vectorize, CMatrix, CVector, DensityMatrix,
    Superoperator, ONE, TOL, ZERO,
};
use crate::propagator::MemoryKernel;

/// Local and smooth kernel parts on a uniform grid.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub h: f64,
    /// D₀, the δ(t) part of the memory kernel.
    pub local: Superoperator,
    /// D_s(k h), k = 0, 1, ...
    pub smooth: Vec<CMatrix>,
    /// Σ γ_α V_α · V_α†, the local click term.
    pub jump_local: Option<Superoperator>,
    /// ρ̄_s for the renewal form.
    pub reset: Option<DensityMatrix>,
}

impl KernelSpec {
    pub fn from_kernel(
        kernel: &MemoryKernel,
        jump_local: Option<Superoperator>,
        reset: Option<DensityMatrix>,
    ) -> Self {
        Self {
            h: kernel.h,
            local: kernel.local.clone(),
            smooth: kernel.smooth.clone(),
            jump_local,
            reset,
        }
    }

    pub fn dim(&self) -> usize {
        self.local.dim()
    }

    /// Every `factor`-th sample, with step `factor · h`.
    pub fn coarsen(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            h: self.h * factor as f64,
            smooth: self.smooth.iter().step_by(factor).cloned().collect(),
            ..self.clone()
        }
    }

    /// Largest time the smooth samples cover.
    pub fn horizon(&self) -> f64 {
        self.smooth.len().saturating_sub(1) as f64 * self.h
    }
}

/// States on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries {
    pub t: Vec<f64>,
    pub states: Vec<CMatrix>,
}

impl StateSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn element(&self, i: usize, j: usize) -> Vec<crate::linalg::C64> {
        self.states.iter().map(|m| m[(i, j)]).collect()
    }

    pub fn density(&self, k: usize) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(self.states[k].clone())
    }

    pub fn max_trace_error(&self) -> f64 {
        self.states
            .iter()
            .map(|m| (m.trace() - ONE).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.states
            .iter()
            .map(hermiticity_error)
            .fold(0.0, f64::max)
    }

    /// Every `factor`-th point.
    pub fn subsample(&self, factor: usize) -> Self {
        Self {
            t: self.t.iter().step_by(factor).copied().collect(),
            states: self.states.iter().step_by(factor).cloned().collect(),
        }
    }

    /// Max entrywise distance to `other` at common times (same grid required).
    pub fn max_abs_diff(&self, other: &StateSeries) -> Result<f64> {
        if self.len() != other.len()
            || self
                .t
                .iter()
                .zip(&other.t)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::GridMismatch(format!(
                "series of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| crate::linalg::max_abs(&(a - b)))
            .fold(0.0, f64::max))
    }

    /// CSV: `t`, re/im of every ρ[i][j] (row-major), then optional extra columns.
    pub fn write_csv<W: Write>(&self, out: W, extra: &[(&str, &[f64])]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.states.first().map_or(0, |m| m.nrows());
        let mut header = vec!["t".to_string()];
        for i in 0..d {
            for j in 0..d {
                header.push(format!("rho_{i}{j}_re"));
                header.push(format!("rho_{i}{j}_im"));
            }
        }
        header.extend(extra.iter().map(|(name, _)| name.to_string()));
        w.write_record(&header)?;
        for (k, m) in self.states.iter().enumerate() {
            let mut row = vec![format!("{:.10}", self.t[k])];
            for i in 0..d {
                for j in 0..d {
                    row.push(format!("{:.12e}", m[(i, j)].re));
                    row.push(format!("{:.12e}", m[(i, j)].im));
                }
            }
            row.extend(extra.iter().map(|(_, col)| format!("{:.12e}", col[k])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Implicit product-trapezoid solver for y′ = Ay + ∫₀ᵗ K(t−s)y(s)ds.
///
/// Each step solves (I − hA/2 − h²K₀/4) y_{n+1} = y_n + (h/2)F_n + (h²/2)H_{n+1}
/// exactly, where H_{n+1} holds the already-known history terms; the residual
/// of that linear solve is the step's acceptance test.
fn solve_volterra(
    a: &CMatrix,
    kernel: &[CMatrix],
    h: f64,
    n_steps: usize,
    y0: CVector,
) -> Result<Vec<CVector>> {
    let dim = y0.len();
    let id = CMatrix::identity(dim, dim);
    let lhs = &id - a * c(0.5 * h, 0.0) - &kernel[0] * c(0.25 * h * h, 0.0);
    let lu: LU<crate::linalg::C64, Dyn, Dyn> = lhs.clone().lu();
    let mut y: Vec<CVector> = Vec::with_capacity(n_steps + 1);
    y.push(y0);
    // F_0 = A y_0.
    let mut f_prev = a * &y[0];
    let mut hist = CVector::zeros(dim);
    let mut rhs = CVector::zeros(dim);
    let mut check = CVector::zeros(dim);
    for n in 0..n_steps {
        // H_{n+1} = ½K_{n+1}y_0 + Σ_{j=1}^{n} K_{n+1−j}y_j.
        hist.gemv(c(0.5, 0.0), &kernel[n + 1], &y[0], ZERO);
        for j in 1..=n {
            hist.gemv(ONE, &kernel[n + 1 - j], &y[j], ONE);
        }
        rhs.copy_from(&y[n]);
        rhs.axpy(c(0.5 * h, 0.0), &f_prev, ONE);
        rhs.axpy(c(0.5 * h * h, 0.0), &hist, ONE);
        let next = lu.solve(&rhs).ok_or(Error::StepRejected {
            t: (n + 1) as f64 * h,
            residual: f64::INFINITY,
        })?;
        check.gemv(ONE, &lhs, &next, ZERO);
        check -= &rhs;
        let residual = check.norm() / rhs.norm().max(1e-300);
        if residual > TOL.corrector {
            return Err(Error::StepRejected {
                t: (n + 1) as f64 * h,
                residual,
            });
        }
        // F_{n+1} = A y_{n+1} + h(H_{n+1} + ½K_0 y_{n+1}).
        f_prev.gemv(ONE, a, &next, ZERO);
        f_prev.axpy(c(h, 0.0), &hist, ONE);
        f_prev.gemv(c(0.5 * h, 0.0), &kernel[0], &next, ONE);
        y.push(next);
    }
    Ok(y)
}

fn steps_for(spec: &KernelSpec, t_max: f64) -> Result<usize> {
    let n = ((t_max / spec.h) - 1e-9).ceil().max(1.0) as usize;
    if spec.smooth.len() < n + 1 {
        return Err(Error::GridMismatch(format!(
            "kernel covers {} steps, integration needs {n}",
            spec.smooth.len().saturating_sub(1)
        )));
    }
    Ok(n)
}

fn to_series(h: f64, ys: Vec<CVector>) -> StateSeries {
    StateSeries {
        t: (0..ys.len()).map(|k| k as f64 * h).collect(),
        states: ys
            .iter()
            .map(|v| devectorize(v).expect("square by construction"))
            .collect(),
    }
}

/// dρ/dt = (D₀ + J)ρ + ∫₀ᵗ D_s(t−s)ρ(s)ds.
pub fn integrate_local_nonlocal(
    spec: &KernelSpec,
    rho0: &DensityMatrix,
    t_max: f64,
) -> Result<StateSeries> {
    let n = steps_for(spec, t_max)?;
    let mut a = spec.local.matrix().clone();
    if let Some(j) = &spec.jump_local {
        a += j.matrix();
    }
    let ys = solve_volterra(&a, &spec.smooth, spec.h, n, vectorize(rho0.matrix()))?;
    Ok(to_series(spec.h, ys))
}

/// dρ/dt = ∫D(t−s)ρ(s)ds − ρ̄_s ∫Tr[D(t−s)ρ(s)]ds with D = D₀δ + D_s.
pub fn integrate_renewal_master(
    spec: &KernelSpec,
    rho0: &DensityMatrix,
    t_max: f64,
) -> Result<StateSeries> {
    let reset = spec
        .reset
        .as_ref()
        .ok_or_else(|| Error::Validation("renewal master equation needs a reset state".into()))?;
    let n = steps_for(spec, t_max)?;
    let d = spec.dim();
    let id_vec = vectorize(&CMatrix::identity(d, d));
    let pi = CMatrix::identity(d * d, d * d) - reset.to_vec() * id_vec.adjoint();
    let a = &pi * spec.local.matrix();
    let kernel: Vec<CMatrix> = spec.smooth[..=n].iter().map(|k| &pi * k).collect();
    let ys = solve_volterra(&a, &kernel, spec.h, n, vectorize(rho0.matrix()))?;
    Ok(to_series(spec.h, ys))
}

/// (4 fine − coarse)/3 on the coarse grid; `fine` must use half the step.
pub fn richardson(coarse: &StateSeries, fine: &StateSeries) -> Result<StateSeries> {
    if fine.len() != 2 * coarse.len() - 1 {
        return Err(Error::GridMismatch(format!(
            "fine series has {} points, expected {}",
            fine.len(),
            2 * coarse.len() - 1
        )));
    }
    Ok(StateSeries {
        t: coarse.t.clone(),
        states: coarse
            .states
            .iter()
            .enumerate()
            .map(|(k, m)| (&fine.states[2 * k] * c(4.0, 0.0) - m) * c(1.0 / 3.0, 0.0))
            .collect(),
    })
}

/// E(ρ_t‖ρ∞) = Tr[ρ_t(log₂ρ_t − log₂ρ∞)].
///
/// Eigenvalues below the floor are dropped from ρ log ρ (x log x → 0) and
/// clamped inside log ρ∞; E is infinite when ρ_t has weight outside the
/// support of ρ∞.
pub fn relative_entropy(rho: &CMatrix, rho_inf: &CMatrix) -> Result<f64> {
    let floor = TOL.entropy_floor;
    let (lam, _) = eigh(rho);
    if let Some(&min) = lam.iter().find(|&&x| x < TOL.nonpositive) {
        return Err(Error::NonPositiveState { eigenvalue: min });
    }
    let neg_entropy: f64 = lam
        .iter()
        .filter(|&&x| x > floor)
        .map(|&x| x * x.log2())
        .sum();
    let (mu, u) = eigh(rho_inf);
    let mut cross = 0.0;
    for (k, &m) in mu.iter().enumerate() {
        let col = u.column(k);
        let weight = (col.adjoint() * rho * col)[(0, 0)].re;
        if m <= floor {
            if weight > floor {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        cross += weight * m.log2();
    }
    Ok((neg_entropy - cross).max(0.0))
}

pub fn relative_entropy_series(series: &StateSeries, rho_inf: &DensityMatrix) -> Result<Vec<f64>> {
    series
        .states
        .iter()
        .map(|m| relative_entropy(m, rho_inf.matrix()))
        .collect()
}

/// Maximal runs of strict increase whose total rise exceeds the noise floor.
pub fn detect_backflow(t: &[f64], e: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k + 1 < e.len() {
        if e[k + 1] > e[k] && e[k].is_finite() {
            let start = k;
            while k + 1 < e.len() && e[k + 1] > e[k] {
                k += 1;
            }
            if e[k] - e[start] > TOL.backflow_noise {
                out.push((t[start], t[k]));
            }
        } else {
            k += 1;
        }
    }
    out
}
