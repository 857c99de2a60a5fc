// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Tabulated reduced no-click propagator T(t) and its memory kernel.
//!
//! The kernel obeys T′(t) = D₀T(t) + ∫₀ᵗ K(t−s)T(s)ds. Differentiating once
//! more gives a Volterra equation of the second kind for K,
//!
//!   K(t) + ∫₀ᵗ K(u)T′(t−u)du = T″(t) − D₀T′(t),
//!
//! which is solved by the trapezoid rule on three nested grids and
//! Richardson-extrapolated.

use std::io::Write;

use crate::bipartite::{BipartiteModel, ReducedDynamics, SymmetryCertificate};
use crate::error::{Error, Result};
use crate::linalg::{
    c, expm_matrix, max_abs, vec_trace, CMatrix, DensityMatrix, Superoperator, ONE, TOL, ZERO,
};
use crate::markov::IntervalStatistics;

/// T(t_k) on t_k = k h, with derivatives when the generator is known.
#[derive(Debug, Clone)]
pub struct PropagatorTable {
    h: f64,
    d_s: usize,
    t: Vec<CMatrix>,
    /// T′(t_k).
    d1: Vec<CMatrix>,
    /// T″(t_k); `None` for tables built from samples only.
    d2: Option<Vec<CMatrix>>,
    /// Tr_a[𝕁 exp(t_k 𝔻)(· ⊗ ρ̄_a)]: click density kernel.
    clicks: Option<Vec<CMatrix>>,
    dynamics: Option<ReducedDynamics>,
}

impl PropagatorTable {
    /// Step the bipartite columns X_k = E_h^k Emb for `n` steps.
    pub fn from_dynamics(dynamics: &ReducedDynamics, h: f64, n: usize) -> Self {
        let dim = dynamics.drift.nrows();
        let step = expm_matrix(&(&dynamics.drift * c(h, 0.0)));
        let p_d = &dynamics.ptr * &dynamics.drift;
        let p_dd = &p_d * &dynamics.drift;
        let p_j = &dynamics.ptr * &dynamics.jump;
        let s = dynamics.d_s * dynamics.d_s;
        let mut x = dynamics.emb.clone();
        let mut next = CMatrix::zeros(dim, s);
        let mut table = Self {
            h,
            d_s: dynamics.d_s,
            t: Vec::with_capacity(n + 1),
            d1: Vec::with_capacity(n + 1),
            d2: Some(Vec::with_capacity(n + 1)),
            clicks: Some(Vec::with_capacity(n + 1)),
            dynamics: Some(dynamics.clone()),
        };
        for k in 0..=n {
            table.t.push(&dynamics.ptr * &x);
            table.d1.push(&p_d * &x);
            table.d2.as_mut().unwrap().push(&p_dd * &x);
            table.clicks.as_mut().unwrap().push(&p_j * &x);
            if k < n {
                next.gemm(ONE, &step, &x, ZERO);
                std::mem::swap(&mut x, &mut next);
            }
        }
        table
    }

    /// Table from bare samples; derivatives by second-order differences.
    pub fn from_samples(h: f64, samples: Vec<CMatrix>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::GridMismatch("need at least three samples".into()));
        }
        let s = samples[0].nrows();
        let d_s = (s as f64).sqrt().round() as usize;
        if d_s * d_s != s || samples.iter().any(|m| m.nrows() != s || m.ncols() != s) {
            return Err(Error::Dimension(
                "samples must be d²×d² superoperators".into(),
            ));
        }
        let d1 = finite_difference(&samples, h);
        Ok(Self {
            h,
            d_s,
            t: samples,
            d1,
            d2: None,
            clicks: None,
            dynamics: None,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        (self.len() - 1) as f64 * self.h
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.h).collect()
    }

    pub fn propagator(&self, k: usize) -> &CMatrix {
        &self.t[k]
    }

    pub fn derivative(&self, k: usize) -> &CMatrix {
        &self.d1[k]
    }

    pub fn click_kernel(&self, k: usize) -> Option<&CMatrix> {
        self.clicks.as_ref().map(|c| &c[k])
    }

    pub fn dynamics(&self) -> Option<&ReducedDynamics> {
        self.dynamics.as_ref()
    }

    pub fn samples(&self) -> &[CMatrix] {
        &self.t
    }

    /// Tr[T(t_k) ρ] for every k.
    pub fn survival(&self, rho: &DensityMatrix) -> Vec<f64> {
        let v = rho.to_vec();
        self.t.iter().map(|m| vec_trace(&(m * &v)).re).collect()
    }

    /// CSV: `t`, then re/im of every entry T[r][c] in row-major order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let s = self.d_s * self.d_s;
        let mut header = vec!["t".to_string()];
        for r in 0..s {
            for col in 0..s {
                header.push(format!("T_{r}_{col}_re"));
                header.push(format!("T_{r}_{col}_im"));
            }
        }
        w.write_record(&header)?;
        for (k, m) in self.t.iter().enumerate() {
            let mut row = vec![format!("{:.10}", k as f64 * self.h)];
            for r in 0..s {
                for col in 0..s {
                    row.push(format!("{:.15e}", m[(r, col)].re));
                    row.push(format!("{:.15e}", m[(r, col)].im));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Second-order differences: central inside, one-sided at the ends.
fn finite_difference(x: &[CMatrix], h: f64) -> Vec<CMatrix> {
    let n = x.len();
    let inv = c(1.0 / (2.0 * h), 0.0);
    (0..n)
        .map(|k| {
            if k == 0 {
                (&x[0] * c(-3.0, 0.0) + &x[1] * c(4.0, 0.0) - &x[2]) * inv
            } else if k == n - 1 {
                (&x[n - 1] * c(3.0, 0.0) - &x[n - 2] * c(4.0, 0.0) + &x[n - 3]) * inv
            } else {
                (&x[k + 1] - &x[k - 1]) * inv
            }
        })
        .collect()
}

/// Steps rounded up to a multiple of four so the kernel grids nest.
pub fn table_steps(t_max: f64, h: f64) -> usize {
    let n = ((t_max / h) - 1e-9).ceil().max(1.0) as usize;
    n.div_ceil(4) * 4
}

/// Reduced propagator of a certified bipartite model on [0, ≥ t_max].
pub fn reduced_propagator(
    model: &BipartiteModel,
    cert: &SymmetryCertificate,
    t_max: f64,
    h: f64,
) -> Result<PropagatorTable> {
    if !(t_max > 0.0 && h > 0.0) {
        return Err(Error::Validation(format!(
            "need positive t_max and h, got {t_max}, {h}"
        )));
    }
    let dynamics = ReducedDynamics::new(model, cert);
    Ok(PropagatorTable::from_dynamics(
        &dynamics,
        h,
        table_steps(t_max, h),
    ))
}

/// Memory kernel split into a local part D₀ and smooth samples D_s(t_k).
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    pub h: f64,
    pub local: Superoperator,
    pub smooth: Vec<CMatrix>,
}

impl MemoryKernel {
    pub fn len(&self) -> usize {
        self.smooth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smooth.is_empty()
    }

    /// Largest entry of D_s over the grid.
    pub fn smooth_sup(&self) -> f64 {
        self.smooth.iter().map(max_abs).fold(0.0, f64::max)
    }
}

/// Trapezoid solve of K(t) + ∫₀ᵗ K(u)T′(t−u)du = G(t) on every `stride`-th point.
fn deconvolve(g: &[CMatrix], tp: &[CMatrix], h: f64, stride: usize) -> Result<Vec<CMatrix>> {
    let m = (g.len() - 1) / stride + 1;
    let hs = h * stride as f64;
    let s = g[0].nrows();
    let id = CMatrix::identity(s, s);
    let a = &id + &tp[0] * c(0.5 * hs, 0.0);
    let a_inv = a.clone().try_inverse().ok_or(Error::IllConditioned {
        residual: f64::INFINITY,
    })?;
    let residual = max_abs(&(&a * &a_inv - &id));
    if residual > TOL.ill_conditioned {
        return Err(Error::IllConditioned { residual });
    }
    let mut k: Vec<CMatrix> = Vec::with_capacity(m);
    k.push(g[0].clone());
    let mut acc = CMatrix::zeros(s, s);
    for n in 1..m {
        acc.copy_from(&g[n * stride]);
        acc.gemm(c(-0.5 * hs, 0.0), &k[0], &tp[n * stride], ONE);
        for j in 1..n {
            acc.gemm(c(-hs, 0.0), &k[j], &tp[(n - j) * stride], ONE);
        }
        k.push(&acc * &a_inv);
    }
    Ok(k)
}

/// Six-point Lagrange interpolation of `coarse` (spacing `ratio` fine steps)
/// onto `n_fine + 1` points.
fn interpolate(coarse: &[CMatrix], ratio: usize, n_fine: usize) -> Vec<CMatrix> {
    let m = coarse.len();
    let width = 6.min(m);
    (0..=n_fine)
        .map(|k| {
            if k % ratio == 0 {
                return coarse[k / ratio].clone();
            }
            let x = k as f64 / ratio as f64;
            let i0 = (x.floor() as isize - (width as isize / 2 - 1)).clamp(0, (m - width) as isize)
                as usize;
            let mut out = CMatrix::zeros(coarse[0].nrows(), coarse[0].ncols());
            for i in i0..i0 + width {
                let mut w = 1.0;
                for j in i0..i0 + width {
                    if j != i {
                        w *= (x - j as f64) / (i as f64 - j as f64);
                    }
                }
                out += &coarse[i] * c(w, 0.0);
            }
            out
        })
        .collect()
}

/// Local part D₀ = T′(0⁺) and smooth part D_s(t_k) of the memory kernel.
pub fn extract_memory_kernel(table: &PropagatorTable) -> Result<MemoryKernel> {
    let n = table.len() - 1;
    let (d1, d2) = match &table.d2 {
        Some(d2) => (table.d1.clone(), d2.clone()),
        None => {
            let d2 = finite_difference(&table.d1, table.h);
            (table.d1.clone(), d2)
        }
    };
    let d0 = d1[0].clone();
    let g: Vec<CMatrix> = d2.iter().zip(&d1).map(|(tpp, tp)| tpp - &d0 * tp).collect();
    let k1 = deconvolve(&g, &d1, table.h, 1)?;
    let smooth = if n % 4 == 0 && n / 4 >= 5 {
        let k2 = deconvolve(&g, &d1, table.h, 2)?;
        let k4 = deconvolve(&g, &d1, table.h, 4)?;
        let third = c(1.0 / 3.0, 0.0);
        let r1a: Vec<CMatrix> = (0..k2.len())
            .map(|i| (&k1[2 * i] * c(4.0, 0.0) - &k2[i]) * third)
            .collect();
        let r1b: Vec<CMatrix> = (0..k4.len())
            .map(|i| (&k2[2 * i] * c(4.0, 0.0) - &k4[i]) * third)
            .collect();
        let r2: Vec<CMatrix> = (0..k4.len())
            .map(|i| (&r1a[2 * i] * c(16.0, 0.0) - &r1b[i]) * c(1.0 / 15.0, 0.0))
            .collect();
        interpolate(&r2, 4, n)
    } else {
        k1
    };
    Ok(MemoryKernel {
        h: table.h,
        local: Superoperator::from_matrix(table.d_s, d0)?,
        smooth,
    })
}

/// Fourth-order quadrature of ∫₀^{t_n} f: Simpson, with a 3/8 panel when n is odd.
pub(crate) fn quad4(n: usize, h: f64, mut f: impl FnMut(usize) -> CMatrix) -> Option<CMatrix> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => return None,
        1 => {
            w[0] = 0.5;
            w[1] = 0.5;
        }
        _ => {
            let simpson_end = if n % 2 == 0 { n } else { n - 3 };
            for i in (0..simpson_end).step_by(2) {
                w[i] += 1.0 / 3.0;
                w[i + 1] += 4.0 / 3.0;
                w[i + 2] += 1.0 / 3.0;
            }
            if n % 2 == 1 {
                let b = n - 3;
                w[b] += 3.0 / 8.0;
                w[b + 1] += 9.0 / 8.0;
                w[b + 2] += 9.0 / 8.0;
                w[b + 3] += 3.0 / 8.0;
            }
        }
    }
    let mut out: Option<CMatrix> = None;
    for (i, wi) in w.into_iter().enumerate() {
        if wi != 0.0 {
            let term = f(i) * c(wi * h, 0.0);
            out = Some(match out {
                None => term,
                Some(acc) => acc + term,
            });
        }
    }
    out
}

/// max_k ‖T′_k − D₀T_k − ∫₀^{t_k} D_s(t_k − s)T(s)ds‖ with a fourth-order rule.
pub fn reconvolution_residual(table: &PropagatorTable, kernel: &MemoryKernel) -> f64 {
    let n = table.len().min(kernel.len());
    let mut worst = 0.0_f64;
    for k in 0..n {
        let mut r = &table.d1[k] - kernel.local.matrix() * &table.t[k];
        if let Some(conv) = quad4(k, table.h, |j| &kernel.smooth[k - j] * &table.t[j]) {
            r -= conv;
        }
        worst = worst.max(max_abs(&r));
    }
    worst
}

/// Exact kernel from the projector P = Emb·Ptr onto ρ ⊗ ρ̄_a:
/// D₀ = Ptr𝔻Emb and D_s(t) = Ptr𝔻 exp(tQ𝔻Q) Q𝔻Emb with Q = 1 − P.
pub fn projection_kernel(dynamics: &ReducedDynamics, times: &[f64]) -> MemoryKernel {
    let dim = dynamics.drift.nrows();
    let p = &dynamics.emb * &dynamics.ptr;
    let q = CMatrix::identity(dim, dim) - p;
    let qdq = &q * &dynamics.drift * &q;
    let left = &dynamics.ptr * &dynamics.drift;
    let right = &q * &dynamics.drift * &dynamics.emb;
    let local = Superoperator::from_matrix(dynamics.d_s, &left * &dynamics.emb)
        .expect("square by construction");
    let smooth = times
        .iter()
        .map(|&t| &left * expm_matrix(&(&qdq * c(t, 0.0))) * &right)
        .collect();
    let h = if times.len() > 1 {
        times[1] - times[0]
    } else {
        0.0
    };
    MemoryKernel { h, local, smooth }
}

/// P0, w = −Tr[T′ρ] and w/P0 on the table grid.
pub fn nm_interval_statistics(table: &PropagatorTable, rho: &DensityMatrix) -> IntervalStatistics {
    let v = rho.to_vec();
    let survival = table.survival(rho);
    let waiting: Vec<f64> = table.d1.iter().map(|m| -vec_trace(&(m * &v)).re).collect();
    let conditional = survival
        .iter()
        .zip(&waiting)
        .map(|(p, w)| if *p > 0.0 { w / p } else { f64::NAN })
        .collect();
    IntervalStatistics {
        t: table.times(),
        survival,
        waiting,
        conditional,
    }
}

/// A grid pair t₁ < t₂ with P0(t₂) > P0(t₁) + slack.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalIncrease {
    pub probe: usize,
    pub t1: f64,
    pub t2: f64,
    pub increase: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecayReport {
    pub probes_checked: usize,
    pub violations: Vec<SurvivalIncrease>,
}

impl DecayReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that Tr[T(t)ρ] never rises above an earlier value by more than the
/// slack, for the diagonal basis states and the given extra probes.
pub fn check_decaying_survival(table: &PropagatorTable, probes: &[DensityMatrix]) -> DecayReport {
    let d = table.d_s;
    let mut all: Vec<DensityMatrix> = (0..d).map(|i| DensityMatrix::basis(d, i)).collect();
    all.extend(probes.iter().cloned());
    let mut report = DecayReport {
        probes_checked: all.len(),
        violations: Vec::new(),
    };
    for (i, rho) in all.iter().enumerate() {
        let p = table.survival(rho);
        // Worst pair ending at each t₂ uses the running minimum before it.
        let mut min_k = 0;
        for k in 1..p.len() {
            let rise = p[k] - p[min_k];
            if rise > TOL.monotone_slack {
                report.violations.push(SurvivalIncrease {
                    probe: i,
                    t1: min_k as f64 * table.h,
                    t2: k as f64 * table.h,
                    increase: rise,
                });
            }
            if p[k] < p[min_k] {
                min_k = k;
            }
        }
    }
    report
}

/// T(t)ρ at an arbitrary time by direct re-propagation (requires dynamics).
pub fn propagate_exact(
    table: &PropagatorTable,
    rho: &DensityMatrix,
    t: f64,
) -> Option<DensityMatrix> {
    table.dynamics().map(|d| d.propagate(rho, t))
}
