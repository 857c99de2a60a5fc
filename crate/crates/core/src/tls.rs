// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Two-level system coupled to a two-level ancilla.
//!
//! H₀ = (Ω/2) σx ⊗ σx, monitored channels σ ⊗ |1⟩⟨1| (rate γ) and
//! σ ⊗ |1⟩⟨2| (rate γ′), σ = |−⟩⟨+|. System basis |+⟩ = 0, |−⟩ = 1;
//! ancilla |1⟩ = 0, |2⟩ = 1. Closed forms hold for γ′ = γ.

use crate::bipartite::{BipartiteModel, RateTensor};
use crate::error::{Error, Result};
use crate::linalg::{
    c, dissipator, hamiltonian_superop, ket_bra, kron, sigma_x, sigma_y, sigma_z, CMatrix, CVector,
    DensityMatrix, Superoperator, C64, I,
};
use crate::master::KernelSpec;

/// Largest imaginary residue tolerated when a closed form is taken as real.
const IMAG_RESIDUE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TLSParams {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub omega: f64,
}

impl TLSParams {
    pub fn new(gamma: f64, gamma_prime: f64, omega: f64) -> Result<Self> {
        for (name, v) in [
            ("gamma", gamma),
            ("gamma_prime", gamma_prime),
            ("omega", omega),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "{name} = {v} must be finite and non-negative"
                )));
            }
        }
        Ok(Self {
            gamma,
            gamma_prime,
            omega,
        })
    }

    /// γ′ = γ.
    pub fn symmetric(gamma: f64, omega: f64) -> Result<Self> {
        Self::new(gamma, gamma, omega)
    }

    /// ν = √((γ/2)² − Ω²), principal branch.
    pub fn nu(&self) -> C64 {
        c(self.nu2(), 0.0).sqrt()
    }

    /// μ = √((γ/4)² − Ω²), principal branch.
    pub fn mu(&self) -> C64 {
        c(self.mu2(), 0.0).sqrt()
    }

    fn nu2(&self) -> f64 {
        0.25 * self.gamma * self.gamma - self.omega * self.omega
    }

    fn mu2(&self) -> f64 {
        0.0625 * self.gamma * self.gamma - self.omega * self.omega
    }

    fn require_symmetric(&self) -> Result<()> {
        if (self.gamma_prime - self.gamma).abs() > 1e-12 * self.gamma.max(1.0) {
            return Err(Error::UnsupportedRegime {
                gamma: self.gamma,
                gamma_prime: self.gamma_prime,
            });
        }
        Ok(())
    }
}

/// σ = |−⟩⟨+|.
pub fn sigma() -> CMatrix {
    ket_bra(2, 1, 0)
}

pub fn build_tls_model(params: &TLSParams) -> Result<BipartiteModel> {
    let h = kron(&sigma_x(), &sigma_x()) * c(0.5 * params.omega, 0.0);
    let mut rates = RateTensor::zeros(1, 2);
    rates.set(0, 0, 0, params.gamma)?;
    rates.set(0, 0, 1, params.gamma_prime)?;
    BipartiteModel::new(
        2,
        2,
        hamiltonian_superop(&h)?,
        vec![("sigma".into(), sigma())],
        rates,
    )
}

pub fn plus() -> DensityMatrix {
    DensityMatrix::basis(2, 0)
}

pub fn minus() -> DensityMatrix {
    DensityMatrix::basis(2, 1)
}

/// (|+⟩ − i|−⟩)/√2.
pub fn y_minus() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix::pure(&CVector::from_vec(vec![c(s, 0.0), -I * s]))
}

/// (|+⟩ − |−⟩)/√2.
pub fn x_minus() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix::pure(&CVector::from_vec(vec![c(s, 0.0), c(-s, 0.0)]))
}

/// cosh(νt), sinh(νt)/ν and (cosh(νt) − 1)/ν² for ν² given; regular at ν → 0.
fn hyperbolic(nu2: f64, t: f64) -> (C64, C64, C64) {
    let nu = c(nu2, 0.0).sqrt();
    let x = nu * t;
    let ch = x.cosh();
    if x.norm() < 1e-2 {
        let x2 = x * x;
        let s = (c(1.0, 0.0) + x2 / 6.0 + x2 * x2 / 120.0 + x2 * x2 * x2 / 5040.0) * t;
        let cc = (c(0.5, 0.0) + x2 / 24.0 + x2 * x2 / 720.0 + x2 * x2 * x2 / 40320.0) * (t * t);
        (ch, s, cc)
    } else {
        (ch, x.sinh() / nu, (ch - 1.0) / (nu * nu))
    }
}

fn real_part(z: C64, what: &str) -> Result<f64> {
    if z.im.abs() > IMAG_RESIDUE * z.re.abs().max(1.0) {
        return Err(Error::Validation(format!(
            "{what} has imaginary residue {:e}",
            z.im
        )));
    }
    Ok(z.re)
}

/// P0(t|ρ) = e^{−γt/2}[Tr ρ (1 + (γ²/4)C) − Tr(σzρ)(γ/2)S], C = (cosh νt − 1)/ν², S = sinh νt/ν.
pub fn analytic_survival(params: &TLSParams, rho: &DensityMatrix, t: f64) -> Result<f64> {
    params.require_symmetric()?;
    let g = params.gamma;
    let (_, s, cc) = hyperbolic(params.nu2(), t);
    let tr = rho.trace();
    let z = rho.get(0, 0).re - rho.get(1, 1).re;
    let val = (c(tr, 0.0) * (cc * (0.25 * g * g) + 1.0) - s * (0.5 * g * z)) * (-0.5 * g * t).exp();
    real_part(val, "survival")
}

/// w(t|ρ) = −dP0/dt.
pub fn analytic_waiting(params: &TLSParams, rho: &DensityMatrix, t: f64) -> Result<f64> {
    params.require_symmetric()?;
    let g = params.gamma;
    let nu2 = params.nu2();
    let (ch, s, cc) = hyperbolic(nu2, t);
    let tr = rho.trace();
    let z = rho.get(0, 0).re - rho.get(1, 1).re;
    let e = (-0.5 * g * t).exp();
    let p0 = (c(tr, 0.0) * (cc * (0.25 * g * g) + 1.0) - s * (0.5 * g * z)) * e;
    let dp = p0 * (-0.5 * g) + (s * (0.25 * g * g * tr) - ch * (0.5 * g * z)) * e;
    real_part(-dp, "waiting-time density")
}

/// Coefficients fixed by the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TLSInitialCoeffs {
    pub p0_plus: f64,
    pub p0_minus: f64,
    /// ⟨+|ρ|−⟩.
    pub c0_plus: C64,
    /// ⟨−|ρ|+⟩.
    pub c0_minus: C64,
    pub q_c: f64,
    pub q_s: f64,
    pub a: C64,
    pub b: C64,
}

/// q_c, q_s, a, b as defined for the population and coherence solutions.
/// Infinite when Ω = 0 (q) or ν = 0 (a, b); the solution itself stays regular.
pub fn coefficients(params: &TLSParams, rho: &DensityMatrix) -> TLSInitialCoeffs {
    let g2 = params.gamma * params.gamma;
    let o2 = params.omega * params.omega;
    let nu2 = params.nu2();
    let (pp, pm) = (rho.get(0, 0).re, rho.get(1, 1).re);
    let (cp, cm) = (rho.get(0, 1), rho.get(1, 0));
    TLSInitialCoeffs {
        p0_plus: pp,
        p0_minus: pm,
        c0_plus: cp,
        c0_minus: cm,
        q_c: pp * g2 / o2 + (pp - pm),
        q_s: (pp * g2 / o2 + 5.0 * pp + 3.0 * pm) / 4.0,
        a: (cp * (0.5 * g2) - (cp + cm) * o2) / nu2,
        b: (cp - cm) * o2 / nu2,
    }
}

pub fn stationary_state(params: &TLSParams) -> DensityMatrix {
    let g2 = params.gamma * params.gamma;
    let o2 = params.omega * params.omega;
    let den = g2 + 2.0 * o2;
    if den == 0.0 {
        return DensityMatrix::diagonal(&[0.5, 0.5]);
    }
    DensityMatrix::diagonal(&[o2 / den, (g2 + o2) / den])
}

/// Population and coherence closed forms; returns (p⁺, c⁺) and their time derivatives.
fn solution_parts(params: &TLSParams, rho: &DensityMatrix, t: f64) -> Result<[C64; 4]> {
    params.require_symmetric()?;
    let g = params.gamma;
    let g2 = g * g;
    let o2 = params.omega * params.omega;
    let tr = rho.trace();
    let (pp, pm) = (rho.get(0, 0).re, rho.get(1, 1).re);
    let (cp, cm) = (rho.get(0, 1), rho.get(1, 0));
    let den = g2 + 2.0 * o2;
    let (p, dp) = if den == 0.0 {
        (c(pp, 0.0), c(0.0, 0.0))
    } else {
        // Ω²/(γ²+2Ω²)·q_c and ·q_s/… written without dividing by Ω².
        let amp_c = (pp * g2 + (pp - pm) * o2) / den;
        let amp_s = (pp * g2 + (5.0 * pp + 3.0 * pm) * o2) / (4.0 * den);
        let mu2 = params.mu2();
        let (ch, s, _) = hyperbolic(mu2, t);
        let e = (-0.75 * g * t).exp();
        let bracket = ch * amp_c - s * (amp_s * g);
        let dbracket = s * (amp_c * mu2) - ch * (amp_s * g);
        (
            bracket * e + tr * o2 / den,
            (bracket * (-0.75 * g) + dbracket) * e,
        )
    };
    let (_, s, cc) = hyperbolic(params.nu2(), t);
    let e = (-0.5 * g * t).exp();
    let half_diff = (cp - cm) * (0.5 * o2);
    let inner = cp - half_diff * cc;
    let coh = inner * e;
    let dcoh = (inner * (-0.5 * g) - half_diff * s) * e;
    Ok([p, coh, dp, dcoh])
}

fn assemble(tr: f64, p: f64, coh: C64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(p, 0.0), coh, coh.conj(), c(tr - p, 0.0)])
}

/// ρ_t of the unconditional dynamics.
pub fn analytic_solution(
    params: &TLSParams,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    let [p, coh, _, _] = solution_parts(params, rho0, t)?;
    let p = real_part(p, "population")?;
    Ok(DensityMatrix::from_matrix_unchecked(assemble(
        rho0.trace(),
        p,
        coh,
    )))
}

/// dρ_t/dt of the unconditional dynamics.
pub fn analytic_derivative(params: &TLSParams, rho0: &DensityMatrix, t: f64) -> Result<CMatrix> {
    let [_, _, dp, dcoh] = solution_parts(params, rho0, t)?;
    let dp = real_part(dp, "population derivative")?;
    Ok(assemble(0.0, dp, dcoh))
}

/// Closed-form memory kernels at γ′ = γ.
#[derive(Debug, Clone, Copy)]
pub struct TlsKernels {
    params: TLSParams,
}

pub fn closed_form_kernels(params: &TLSParams) -> Result<TlsKernels> {
    params.require_symmetric()?;
    Ok(TlsKernels { params: *params })
}

impl TlsKernels {
    pub fn params(&self) -> &TLSParams {
        &self.params
    }

    fn o2(&self) -> f64 {
        self.params.omega * self.params.omega
    }

    /// Smooth part of k⁺ (its γδ(t) part is local).
    pub fn k_plus_smooth(&self, t: f64) -> f64 {
        self.k_minus(t)
    }

    pub fn k_minus(&self, t: f64) -> f64 {
        0.5 * self.o2() * (-0.5 * self.params.gamma * t).exp()
    }

    /// Smooth part of k̃ (its (γ/2)δ(t) part is local).
    pub fn k_tilde_smooth(&self, t: f64) -> f64 {
        self.k_breve(t)
    }

    pub fn k_breve(&self, t: f64) -> f64 {
        0.25 * self.o2() * (1.0 + (-self.params.gamma * t).exp())
    }

    pub fn k_x(&self, t: f64) -> f64 {
        let e = (-0.5 * self.params.gamma * t).exp();
        0.125 * self.o2() * (e + 1.0) * (e + 1.0)
    }

    pub fn k_y(&self, t: f64) -> f64 {
        -self.k_z(t)
    }

    pub fn k_z(&self, t: f64) -> f64 {
        let e = (-0.5 * self.params.gamma * t).exp();
        0.125 * self.o2() * (e - 1.0) * (e - 1.0)
    }

    /// D₀ = −(γ/2){σ†σ, ·}.
    pub fn drift_local(&self) -> Superoperator {
        let s = sigma();
        let n = s.adjoint() * &s;
        Superoperator::left(&n)
            .add(&Superoperator::right(&n))
            .scale(-0.5 * self.params.gamma)
    }

    /// J = γ σ · σ†.
    pub fn jump_local(&self) -> Superoperator {
        let s = sigma();
        Superoperator::sandwich(&s, &s).scale(self.params.gamma)
    }

    /// D₀ + (1 − δ̃)J: δ̃ = 1 for the conditional propagator, δ̃ = 0 for the
    /// unconditional populations. Only the γδ(t) gain is switched.
    pub fn local(&self, delta_tilde: f64) -> Superoperator {
        self.drift_local()
            .add(&self.jump_local().scale(1.0 - delta_tilde))
    }

    /// Smooth kernel from the population (k⁺, k⁻) and coherence (k̃, k̆) blocks.
    pub fn conditional_smooth(&self, t: f64) -> CMatrix {
        // vec index of ρ_ij is i + 2j: p⁺ → 0, c⁻ → 1, c⁺ → 2, p⁻ → 3.
        let (kp, km) = (self.k_plus_smooth(t), self.k_minus(t));
        let (kt, kb) = (self.k_tilde_smooth(t), self.k_breve(t));
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = c(-kp, 0.0);
        m[(0, 3)] = c(km, 0.0);
        m[(3, 3)] = c(-km, 0.0);
        m[(3, 0)] = c(kp, 0.0);
        m[(2, 2)] = c(-kt, 0.0);
        m[(2, 1)] = c(kb, 0.0);
        m[(1, 1)] = c(-kt, 0.0);
        m[(1, 2)] = c(kb, 0.0);
        m
    }

    /// Σ_i k^i(t) C[σ_i].
    pub fn pauli_smooth(&self, t: f64) -> CMatrix {
        let d = |m: CMatrix| dissipator(&m).expect("square").matrix().clone();
        d(sigma_x()) * c(self.k_x(t), 0.0)
            + d(sigma_y()) * c(self.k_y(t), 0.0)
            + d(sigma_z()) * c(self.k_z(t), 0.0)
    }

    fn spec(&self, h: f64, n: usize, f: impl Fn(f64) -> CMatrix) -> KernelSpec {
        KernelSpec {
            h,
            local: self.drift_local(),
            smooth: (0..=n).map(|k| f(k as f64 * h)).collect(),
            jump_local: Some(self.jump_local()),
            reset: Some(minus()),
        }
    }

    /// Conditional kernel tables with J and ρ̄_s = |−⟩⟨−| attached.
    pub fn conditional_spec(&self, h: f64, n: usize) -> KernelSpec {
        self.spec(h, n, |t| self.conditional_smooth(t))
    }

    /// γC[σ] local part plus the Pauli-channel memory kernel.
    pub fn pauli_spec(&self, h: f64, n: usize) -> KernelSpec {
        self.spec(h, n, |t| self.pauli_smooth(t))
    }
}
