// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Counting statistics: exclusive n-click contributions, joint click
//! densities and the renewal convolution structure.
//!
//! With the click kernel 𝒥(t) = Tr_a[𝕁 exp(t𝔻)(· ⊗ ρ̄_a)],
//!
//!   σ⁽¹⁾(t) = 𝒥(t)ρ₀,   σ⁽ⁿ⁾(t) = ∫₀ᵗ 𝒥(t−s)σ⁽ⁿ⁻¹⁾(s)ds,
//!   ρ⁽⁰⁾_t = T(t)ρ₀,     ρ⁽ⁿ⁾_t = ∫₀ᵗ T(t−s)σ⁽ⁿ⁾(s)ds.
//!
//! For a Markovian split (d_a = 1) this is ρ⁽ⁿ⁾_t = ∫ T(t−s) J ρ⁽ⁿ⁻¹⁾_s ds.

use std::io::Write;

use rayon::prelude::*;

use crate::bipartite::ReducedDynamics;
use crate::error::{Error, Result};
use crate::linalg::{
    c, devectorize, expm_apply, vec_trace, CMatrix, CVector, DensityMatrix, ONE, ZERO,
};
use crate::propagator::PropagatorTable;

/// Exclusive n-click contributions on the table grid.
#[derive(Debug, Clone)]
pub struct JumpExpansion {
    pub t: Vec<f64>,
    /// ρ⁽ⁿ⁾_{t_k} as `contributions[n][k]` (unnormalized).
    pub contributions: Vec<Vec<CMatrix>>,
}

impl JumpExpansion {
    pub fn n_max(&self) -> usize {
        self.contributions.len() - 1
    }

    /// p_n(t_k) = Tr ρ⁽ⁿ⁾_{t_k}.
    pub fn probability(&self, n: usize, k: usize) -> f64 {
        self.contributions[n][k].trace().re
    }

    pub fn probabilities(&self, n: usize) -> Vec<f64> {
        (0..self.t.len()).map(|k| self.probability(n, k)).collect()
    }

    /// 1 − Σ_{n ≤ n_max} p_n(t_k): the mass of more than n_max clicks.
    pub fn remainder(&self, k: usize) -> f64 {
        1.0 - (0..=self.n_max())
            .map(|n| self.probability(n, k))
            .sum::<f64>()
    }

    /// Σ_{n ≤ n_max} ρ⁽ⁿ⁾_{t_k}.
    pub fn partial_sum(&self, k: usize) -> CMatrix {
        self.contributions
            .iter()
            .map(|per_n| per_n[k].clone())
            .reduce(|a, b| a + b)
            .expect("at least the zero-click term")
    }

    /// CSV: `t, p_0, …, p_nmax`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..=self.n_max()).map(|n| format!("p_{n}")));
        w.write_record(&header)?;
        for (k, t) in self.t.iter().enumerate() {
            let mut row = vec![format!("{t:.10}")];
            row.extend((0..=self.n_max()).map(|n| format!("{:.12e}", self.probability(n, k))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trapezoid convolution (K ∗ x)(t_k) = ∫₀^{t_k} K(t_k − s)x(s)ds.
fn convolve(kernel: &[CMatrix], x: &[CVector], h: f64) -> Vec<CVector> {
    let dim = x[0].len();
    (0..x.len())
        .into_par_iter()
        .map(|k| {
            let mut acc = CVector::zeros(dim);
            if k == 0 {
                return acc;
            }
            acc.gemv(c(0.5, 0.0), &kernel[k], &x[0], ZERO);
            for j in 1..k {
                acc.gemv(ONE, &kernel[k - j], &x[j], ONE);
            }
            acc.gemv(c(0.5, 0.0), &kernel[0], &x[k], ONE);
            acc * c(h, 0.0)
        })
        .collect()
}

/// ρ⁽ⁿ⁾ for n = 0..=n_max on the whole table grid.
pub fn n_jump_contribution(
    table: &PropagatorTable,
    rho0: &DensityMatrix,
    n_max: usize,
) -> Result<JumpExpansion> {
    let len = table.len();
    let clicks: Vec<CMatrix> = (0..len)
        .map(|k| table.click_kernel(k).cloned())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Validation("propagator table carries no click kernel".into()))?;
    let props: Vec<CMatrix> = (0..len).map(|k| table.propagator(k).clone()).collect();
    let h = table.h();
    let v0 = rho0.to_vec();
    let as_matrices = |vs: Vec<CVector>| -> Vec<CMatrix> {
        vs.iter().map(|v| devectorize(v).expect("square")).collect()
    };
    let mut contributions = vec![as_matrices(props.iter().map(|p| p * &v0).collect())];
    let mut sigma: Vec<CVector> = clicks.iter().map(|j| j * &v0).collect();
    for n in 1..=n_max {
        if n > 1 {
            sigma = convolve(&clicks, &sigma, h);
        }
        contributions.push(as_matrices(convolve(&props, &sigma, h)));
    }
    Ok(JumpExpansion {
        t: table.times(),
        contributions,
    })
}

fn check_times(times: &[f64], t: f64) -> Result<()> {
    let mut prev = 0.0;
    for &s in times {
        if !(s >= prev && s <= t) || !s.is_finite() {
            return Err(Error::UnorderedTimes(times.to_vec()));
        }
        prev = s;
    }
    Ok(())
}

/// P_n = Tr[T(t−t_n) 𝒥 … 𝒥 T(t₁) ρ₀] evaluated by exact re-propagation of
/// the bipartite state, each click mapping v ↦ Emb Tr_a[𝕁v].
pub fn joint_density(
    dynamics: &ReducedDynamics,
    rho0: &DensityMatrix,
    times: &[f64],
    t: f64,
) -> Result<f64> {
    check_times(times, t)?;
    let mut v: CVector = dynamics.embed(rho0);
    let mut prev = 0.0;
    for &s in times {
        v = expm_apply(&dynamics.drift, &v, s - prev);
        v = &dynamics.emb * (&dynamics.ptr * (&dynamics.jump * v));
        prev = s;
    }
    Ok(vec_trace(&expm_apply(&dynamics.drift, &v, t - prev)).re)
}

/// Renewal product form P0(t−t_n|ρ̄_s) Π_j w(t_j−t_{j−1}|ρ̄_s) · w(t₁|ρ₀).
pub fn joint_density_product(
    dynamics: &ReducedDynamics,
    reset: &DensityMatrix,
    rho0: &DensityMatrix,
    times: &[f64],
    t: f64,
) -> Result<f64> {
    check_times(times, t)?;
    let Some((&first, rest)) = times.split_first() else {
        return Ok(dynamics.survival(rho0, t));
    };
    let mut p = dynamics.waiting(rho0, first);
    let mut prev = first;
    for &s in rest {
        p *= dynamics.waiting(reset, s - prev);
        prev = s;
    }
    Ok(p * dynamics.survival(reset, t - prev))
}

/// f⁽ⁿ⁾ on a uniform grid: f⁽¹⁾ = w_first, f⁽ⁿ⁾ = w ∗ f⁽ⁿ⁻¹⁾ (trapezoid).
pub fn renewal_f_n(w: &[f64], w_first: &[f64], n: usize, h: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Validation("f⁽ⁿ⁾ is defined for n ≥ 1".into()));
    }
    if w.len() != w_first.len() {
        return Err(Error::GridMismatch(format!(
            "w has {} samples, w_first {}",
            w.len(),
            w_first.len()
        )));
    }
    let mut f = w_first.to_vec();
    for _ in 1..n {
        f = (0..f.len())
            .map(|k| {
                if k == 0 {
                    return 0.0;
                }
                let inner: f64 = (1..k).map(|j| w[k - j] * f[j]).sum();
                h * (0.5 * w[k] * f[0] + inner + 0.5 * w[0] * f[k])
            })
            .collect();
    }
    Ok(f)
}
