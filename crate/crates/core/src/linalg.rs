// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra on Hilbert and Liouville space.
//!
//! Density matrices are vectorized by column stacking, `vec(ρ)[i + d·j] = ρ[i, j]`,
//! so the superoperator of `ρ ↦ A ρ B†` is `conj(B) ⊗ A`. Kronecker products use
//! the row-major block convention: the first factor selects the block.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Numerical thresholds shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max entrywise |ρ − ρ†| accepted as Hermitian.
    pub hermitian: f64,
    /// |Tr ρ − 1| below which a state counts as normalized.
    pub trace: f64,
    /// Smallest eigenvalue still accepted as positive semidefinite.
    pub psd_floor: f64,
    /// Tr[Jρ] at or below this is a dark state.
    pub jump_norm_floor: f64,
    /// Target |P0 − r| for jump-time root finding.
    pub root_find: f64,
    /// Reset-map agreement required by the behavioral renewal check.
    pub renewal_probe: f64,
    /// Relative residual of the rate-tensor factorization.
    pub factorization: f64,
    /// Max deviation of a post-jump bipartite state from a product.
    pub separability: f64,
    /// Slack on survival-probability monotonicity.
    pub monotone_slack: f64,
    /// Residual of the diagonal block inversion in kernel deconvolution.
    pub ill_conditioned: f64,
    /// Residual of the implicit Volterra step.
    pub corrector: f64,
    /// Eigenvalue floor inside the matrix logarithm.
    pub entropy_floor: f64,
    /// Minimum increase counted as information backflow.
    pub backflow_noise: f64,
    /// Eigenvalues below this make relative entropy undefined.
    pub nonpositive: f64,
}

pub const TOL: Tolerances = Tolerances {
    hermitian: 1e-12,
    trace: 1e-10,
    psd_floor: -1e-10,
    jump_norm_floor: 1e-14,
    root_find: 1e-10,
    renewal_probe: 1e-9,
    factorization: 1e-9,
    separability: 1e-9,
    monotone_slack: 1e-9,
    ill_conditioned: 1e-6,
    corrector: 1e-6,
    entropy_floor: 1e-14,
    backflow_noise: 1e-9,
    nonpositive: -1e-8,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOL
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Largest entrywise |m − m†|.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let mut err = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Induced 1-norm (max column sum).
pub fn norm1(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// |i⟩⟨j| in dimension `d`.
pub fn ket_bra(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = ONE;
    m
}

/// Outer product |ψ⟩⟨φ|.
pub fn outer(psi: &CVector, phi: &CVector) -> CMatrix {
    psi * phi.adjoint()
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Column-stacking vectorization.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn devectorize(v: &CVector) -> Result<CMatrix> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::Dimension(format!(
            "vector of length {} is not a vectorized square matrix",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(d, d, v.as_slice()))
}

/// Trace of a vectorized matrix, i.e. ⟨vec(I), v⟩.
pub fn vec_trace(v: &CVector) -> C64 {
    let d = (v.len() as f64).sqrt().round() as usize;
    (0..d).map(|i| v[i + d * i]).sum()
}

/// Hermitian eigenvalues in ascending order.
pub fn eigvals_hermitian(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()) * c(0.5, 0.0);
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Hermitian eigendecomposition `(eigenvalues, eigenvectors as columns)`.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Density matrix on a finite Hilbert space. Conditional (unnormalized)
/// states are allowed and carry `normalized = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
    normalized: bool,
}

impl DensityMatrix {
    /// Wraps a Hermitian matrix; normalization is detected from the trace.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "density matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let herr = hermiticity_error(&m);
        let scale = max_abs(&m).max(1.0);
        if herr > TOL.hermitian * scale {
            return Err(Error::Validation(format!(
                "matrix is not Hermitian (max |ρ − ρ†| = {herr:.3e})"
            )));
        }
        Ok(Self::from_matrix_unchecked(m))
    }

    /// No Hermiticity check; used for states produced by trusted evolution.
    pub fn from_matrix_unchecked(m: CMatrix) -> Self {
        let tr = m.trace();
        let normalized = (tr - ONE).norm() < TOL.trace;
        Self { m, normalized }
    }

    pub fn from_vec(v: &CVector) -> Result<Self> {
        Ok(Self::from_matrix_unchecked(devectorize(v)?))
    }

    pub fn pure(psi: &CVector) -> Self {
        let n = psi.norm();
        let psi = psi / c(n, 0.0);
        Self::from_matrix_unchecked(outer(&psi, &psi))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        Self::from_matrix_unchecked(ket_bra(d, i, i))
    }

    pub fn diagonal(p: &[f64]) -> Self {
        let d = p.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &pi) in p.iter().enumerate() {
            m[(i, i)] = c(pi, 0.0);
        }
        Self::from_matrix_unchecked(m)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::from_matrix_unchecked(CMatrix::identity(d, d) / c(d as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn to_vec(&self) -> CVector {
        vectorize(&self.m)
    }

    pub fn normalize(&self) -> Self {
        let tr = self.m.trace();
        Self {
            m: &self.m / tr,
            normalized: true,
        }
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.m)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvals_hermitian(&self.m)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Tr[ρ²] of the normalized state.
    pub fn purity(&self) -> f64 {
        let n = self.normalize();
        (&n.m * &n.m).trace().re
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        Self::from_matrix_unchecked(kron(&self.m, &other.m))
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        max_abs(&(&self.m - &other.m))
    }
}

/// A monitored channel: operator V with rate γ.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: String,
    pub op: CMatrix,
    pub rate: f64,
}

impl Channel {
    pub fn new(label: impl Into<String>, op: CMatrix, rate: f64) -> Self {
        Self {
            label: label.into(),
            op,
            rate,
        }
    }
}

/// Channels sharing one Hilbert dimension, with finite non-negative rates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperatorSet {
    channels: Vec<Channel>,
}

impl OperatorSet {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        if let Some(first) = channels.first() {
            let d = first.op.nrows();
            for ch in &channels {
                if ch.op.nrows() != d || ch.op.ncols() != d {
                    return Err(Error::Dimension(format!(
                        "channel '{}' is {}x{}, expected {d}x{d}",
                        ch.label,
                        ch.op.nrows(),
                        ch.op.ncols()
                    )));
                }
                if !ch.rate.is_finite() || ch.rate < 0.0 {
                    return Err(Error::Validation(format!(
                        "channel '{}' has invalid rate {}",
                        ch.label, ch.rate
                    )));
                }
            }
        }
        Ok(Self { channels })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn dim(&self) -> Option<usize> {
        self.channels.first().map(|c| c.op.nrows())
    }
}

/// Linear map on vectorized `dim × dim` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    m: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, m: CMatrix) -> Result<Self> {
        if m.nrows() != dim * dim || m.ncols() != dim * dim {
            return Err(Error::Dimension(format!(
                "superoperator on dimension {dim} must be {0}x{0}, got {1}x{2}",
                dim * dim,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { dim, m })
    }

    pub(crate) fn from_matrix_unchecked(dim: usize, m: CMatrix) -> Self {
        debug_assert_eq!(m.nrows(), dim * dim);
        Self { dim, m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            m: CMatrix::zeros(dim * dim, dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            m: CMatrix::identity(dim * dim, dim * dim),
        }
    }

    /// ρ ↦ A ρ B†.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        let dim = a.nrows();
        Self {
            dim,
            m: kron(&b.map(|z| z.conj()), a),
        }
    }

    /// ρ ↦ A ρ.
    pub fn left(a: &CMatrix) -> Self {
        let dim = a.nrows();
        Self {
            dim,
            m: kron(&CMatrix::identity(dim, dim), a),
        }
    }

    /// ρ ↦ ρ B.
    pub fn right(b: &CMatrix) -> Self {
        let dim = b.nrows();
        Self {
            dim,
            m: kron(&b.transpose(), &CMatrix::identity(dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn apply_vec(&self, v: &CVector) -> CVector {
        &self.m * v
    }

    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        devectorize(&(&self.m * vectorize(rho))).expect("square by construction")
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(self.apply_matrix(rho.matrix()))
    }

    /// Tr[S ρ].
    pub fn trace_of(&self, rho: &DensityMatrix) -> f64 {
        vec_trace(&(&self.m * rho.to_vec())).re
    }

    /// self ∘ other.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Self {
            dim: self.dim,
            m: &self.m * &other.m,
        }
    }

    pub fn add(&self, other: &Superoperator) -> Superoperator {
        Self {
            dim: self.dim,
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &Superoperator) -> Superoperator {
        Self {
            dim: self.dim,
            m: &self.m - &other.m,
        }
    }

    pub fn scale(&self, s: f64) -> Superoperator {
        Self {
            dim: self.dim,
            m: &self.m * c(s, 0.0),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        max_abs(&(&self.m - &other.m))
    }

    /// Largest |entry| of vec(I)† S; zero for trace-annihilating generators.
    pub fn trace_functional_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for col in 0..d * d {
            let s: C64 = (0..d).map(|i| self.m[(i + d * i, col)]).sum();
            worst = worst.max(s.norm());
        }
        worst
    }
}

/// Lindblad channel ρ ↦ VρV† − ½{V†V, ρ}.
pub fn dissipator(v: &CMatrix) -> Result<Superoperator> {
    if v.nrows() != v.ncols() {
        return Err(Error::Dimension(format!(
            "channel operator must be square, got {}x{}",
            v.nrows(),
            v.ncols()
        )));
    }
    let vdv = v.adjoint() * v;
    let jump = Superoperator::sandwich(v, v);
    let anti = Superoperator::left(&vdv).add(&Superoperator::right(&vdv));
    Ok(jump.sub(&anti.scale(0.5)))
}

/// ρ ↦ −i[H, ρ] with ħ absorbed into H.
pub fn hamiltonian_superop(h: &CMatrix) -> Result<Superoperator> {
    if h.nrows() != h.ncols() {
        return Err(Error::Dimension("Hamiltonian must be square".into()));
    }
    let herr = hermiticity_error(h);
    if herr > TOL.hermitian * max_abs(h).max(1.0) {
        return Err(Error::Validation(format!(
            "Hamiltonian is not Hermitian (max |H − H†| = {herr:.3e})"
        )));
    }
    let comm = Superoperator::left(h).sub(&Superoperator::right(h));
    Ok(Superoperator::from_matrix_unchecked(
        comm.dim,
        comm.m * c(0.0, -1.0),
    ))
}

/// Tr_a of a matrix on the ordered product space `system ⊗ ancilla`.
pub fn partial_trace_matrix(m: &CMatrix, d_s: usize, d_a: usize) -> Result<CMatrix> {
    if m.nrows() != d_s * d_a || m.ncols() != d_s * d_a {
        return Err(Error::Dimension(format!(
            "expected {0}x{0} bipartite matrix, got {1}x{2}",
            d_s * d_a,
            m.nrows(),
            m.ncols()
        )));
    }
    let mut out = CMatrix::zeros(d_s, d_s);
    for i in 0..d_s {
        for j in 0..d_s {
            out[(i, j)] = (0..d_a).map(|a| m[(i * d_a + a, j * d_a + a)]).sum();
        }
    }
    Ok(out)
}

pub fn partial_trace_ancilla(rho: &DensityMatrix, d_s: usize, d_a: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_matrix_unchecked(partial_trace_matrix(
        rho.matrix(),
        d_s,
        d_a,
    )?))
}

/// Matrix of vec(ρ_s) ↦ vec(ρ_s ⊗ ρ_a), shape (d_s d_a)² × d_s².
pub fn embedding_matrix(d_s: usize, rho_a: &CMatrix) -> CMatrix {
    let d_a = rho_a.nrows();
    let dsa = d_s * d_a;
    let mut out = CMatrix::zeros(dsa * dsa, d_s * d_s);
    for j in 0..d_s {
        for i in 0..d_s {
            let col = i + d_s * j;
            for a in 0..d_a {
                for b in 0..d_a {
                    let row = (i * d_a + a) + dsa * (j * d_a + b);
                    out[(row, col)] = rho_a[(a, b)];
                }
            }
        }
    }
    out
}

/// Matrix of vec(ρ_sa) ↦ vec(Tr_a ρ_sa), shape d_s² × (d_s d_a)².
pub fn partial_trace_superop(d_s: usize, d_a: usize) -> CMatrix {
    let dsa = d_s * d_a;
    let mut out = CMatrix::zeros(d_s * d_s, dsa * dsa);
    for j in 0..d_s {
        for i in 0..d_s {
            for a in 0..d_a {
                let col = (i * d_a + a) + dsa * (j * d_a + a);
                out[(i + d_s * j, col)] = ONE;
            }
        }
    }
    out
}

// Padé(13) numerator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// exp(A) by scaling and squaring with a degree-13 Padé approximant.
pub fn expm_matrix(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let id = CMatrix::identity(n, n);
    let norm = norm1(a);
    if norm == 0.0 {
        return id;
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * c(0.5f64.powi(s), 0.0);
    let b = |k: usize| c(PADE13[k], 0.0);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// exp(tS). Negative `t` is accepted for internal checks.
pub fn expm(s: &Superoperator, t: f64) -> Superoperator {
    if t < 0.0 {
        log::debug!("expm called with negative time {t}");
    }
    Superoperator::from_matrix_unchecked(s.dim, expm_matrix(&(s.matrix() * c(t, 0.0))))
}

/// exp(tA) v by a Taylor series on substeps with ‖tA/m‖₁ ≤ 1/2.
///
/// Used for short re-propagation where forming the full exponential would
/// dominate the cost.
pub fn expm_apply(a: &CMatrix, v: &CVector, t: f64) -> CVector {
    let norm = norm1(a) * t.abs();
    let substeps = ((2.0 * norm).ceil() as usize).max(1);
    let dt = c(t / substeps as f64, 0.0);
    let mut out = v.clone();
    let mut term = CVector::zeros(v.len());
    let mut scratch = CVector::zeros(v.len());
    for _ in 0..substeps {
        term.copy_from(&out);
        for k in 1..40 {
            scratch.gemv(dt / c(k as f64, 0.0), a, &term, ZERO);
            std::mem::swap(&mut term, &mut scratch);
            out += &term;
            if term.norm() <= 1e-17 * out.norm() {
                break;
            }
        }
    }
    out
}

/// Matrix with entries uniform in the unit square of the complex plane.
pub fn random_matrix(rng: &mut impl Rng, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Full-rank random state G G† / Tr[G G†].
pub fn random_state(rng: &mut impl Rng, d: usize) -> DensityMatrix {
    let a = random_matrix(rng, d);
    let m = &a * a.adjoint();
    DensityMatrix::from_matrix_unchecked(m).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plus_minus() -> (CVector, CVector) {
        (
            CVector::from_vec(vec![ONE, ZERO]),
            CVector::from_vec(vec![ZERO, ONE]),
        )
    }

    #[test]
    fn kron_identity_and_sigma_x() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), CMatrix::identity(4, 4));
        let xx = kron(&sigma_x(), &sigma_x());
        for r in 0..4 {
            for col in 0..4 {
                let expect = if r + col == 3 { ONE } else { ZERO };
                assert_eq!(xx[(r, col)], expect);
            }
        }
    }

    #[test]
    fn kron_action_on_bipartite_basis() {
        // σ = |−⟩⟨+|, system basis (+, −) = (0, 1); ancilla (1, 2) = (0, 1).
        let sigma = ket_bra(2, 1, 0);
        let op = kron(&sigma, &ket_bra(2, 0, 1));
        let basis = |s: usize, a: usize| {
            let mut v = CVector::zeros(4);
            v[s * 2 + a] = ONE;
            v
        };
        assert_eq!(&op * basis(0, 1), basis(1, 0));
        for (s, a) in [(0, 0), (1, 0), (1, 1)] {
            assert_eq!(&op * basis(s, a), CVector::zeros(4));
        }
    }

    #[test]
    fn dissipator_zero_and_hand_evaluated() {
        let z = dissipator(&CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z, Superoperator::zeros(2));

        let sigma = ket_bra(2, 1, 0);
        let rho = DensityMatrix::basis(2, 0);
        let out = dissipator(&sigma).unwrap().apply(&rho);
        let expected = ket_bra(2, 1, 1) - ket_bra(2, 0, 0);
        assert_abs_diff_eq!(max_abs(&(out.matrix() - expected)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dissipator_rejects_non_square() {
        assert!(matches!(
            dissipator(&CMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dissipator_is_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = random_matrix(&mut rng, 3);
            let rho = random_state(&mut rng, 3);
            let d = dissipator(&v).unwrap();
            assert!(d.trace_of(&rho).abs() < 1e-12);
            assert!(d.trace_functional_residual() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_commutator_by_hand() {
        assert_eq!(
            hamiltonian_superop(&CMatrix::zeros(2, 2)).unwrap(),
            Superoperator::zeros(2)
        );
        let omega = 1.7;
        let h = sigma_x() * c(omega, 0.0);
        let out = hamiltonian_superop(&h)
            .unwrap()
            .apply(&DensityMatrix::basis(2, 0));
        let expected = (ket_bra(2, 0, 1) - ket_bra(2, 1, 0)) * c(0.0, omega);
        assert_abs_diff_eq!(max_abs(&(out.matrix() - expected)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_rejects_non_hermitian() {
        let h = ket_bra(2, 0, 1);
        assert!(matches!(hamiltonian_superop(&h), Err(Error::Validation(_))));
    }

    #[test]
    fn unitary_flow_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 3);
            let h = (&a + a.adjoint()) * c(0.5, 0.0);
            let rho = random_state(&mut rng, 3);
            let t = rng.gen_range(0.0..3.0);
            let out = expm(&hamiltonian_superop(&h).unwrap(), t).apply(&rho);
            let (e0, e1) = (rho.eigenvalues(), out.eigenvalues());
            for (x, y) in e0.iter().zip(&e1) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn vectorization_convention() {
        let v = vectorize(&CMatrix::identity(2, 2));
        assert_eq!(v.as_slice(), &[ONE, ZERO, ZERO, ONE]);
        assert!(devectorize(&CVector::zeros(5)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(&mut rng, 3);
        assert_eq!(devectorize(&vectorize(&m)).unwrap(), m);
        let tr = vectorize(&CMatrix::identity(3, 3)).dot(&vectorize(&m));
        assert_abs_diff_eq!((tr - m.trace()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sandwich_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b, rho) = (
            random_matrix(&mut rng, 3),
            random_matrix(&mut rng, 3),
            random_matrix(&mut rng, 3),
        );
        let direct = &a * &rho * b.adjoint();
        let viaop = Superoperator::sandwich(&a, &b).apply_matrix(&rho);
        assert!(max_abs(&(direct - viaop)) < 1e-13);
    }

    #[test]
    fn partial_trace_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rs = random_state(&mut rng, 2);
        let ra = random_state(&mut rng, 3);
        let red = partial_trace_ancilla(&rs.kron(&ra), 2, 3).unwrap();
        assert!(red.max_abs_diff(&rs) < 1e-14);

        let s = 1.0 / 2f64.sqrt();
        let bell = CVector::from_vec(vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)]);
        let red = partial_trace_ancilla(&DensityMatrix::pure(&bell), 2, 2).unwrap();
        assert!(red.max_abs_diff(&DensityMatrix::maximally_mixed(2)) < 1e-15);

        let rsa = random_state(&mut rng, 6);
        let red = partial_trace_ancilla(&rsa, 3, 2).unwrap();
        assert_abs_diff_eq!(red.trace(), rsa.trace(), epsilon = 1e-14);
        assert!(partial_trace_ancilla(&rsa, 4, 2).is_err());
    }

    #[test]
    fn embedding_and_partial_trace_superops_compose_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ra = random_state(&mut rng, 3);
        let emb = embedding_matrix(2, ra.matrix());
        let ptr = partial_trace_superop(2, 3);
        let id = &ptr * &emb;
        assert!(max_abs(&(id - CMatrix::identity(4, 4))) < 1e-14);

        let rs = random_state(&mut rng, 2);
        let via = devectorize(&(&emb * rs.to_vec())).unwrap();
        assert!(max_abs(&(via - rs.kron(&ra).into_matrix())) < 1e-15);
    }

    #[test]
    fn expm_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = Superoperator::from_matrix(2, random_matrix(&mut rng, 4)).unwrap();
        assert_eq!(expm(&s, 0.0), Superoperator::identity(2));
        assert_eq!(
            expm(&Superoperator::zeros(2), 2.5),
            Superoperator::identity(2)
        );
    }

    #[test]
    fn expm_matches_diagonalizable_reference() {
        // S = P Λ P⁻¹ so exp(S) = P e^Λ P⁻¹ exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n = 9;
            let p = random_matrix(&mut rng, n) + CMatrix::identity(n, n) * c(2.0, 0.0);
            let pinv = p.clone().try_inverse().unwrap();
            let lam: Vec<C64> = (0..n)
                .map(|_| c(rng.gen_range(-6.0..0.5), rng.gen_range(-8.0..8.0)))
                .collect();
            let s = &p * CMatrix::from_diagonal(&CVector::from_vec(lam.clone())) * &pinv;
            let reference = &p
                * CMatrix::from_diagonal(&CVector::from_vec(lam.iter().map(|l| l.exp()).collect()))
                * &pinv;
            let got = expm_matrix(&s);
            let rel = max_abs(&(&got - &reference)) / max_abs(&reference);
            assert!(rel < 1e-9, "relative error {rel}");
        }
    }

    #[test]
    fn expm_semigroup() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = {
            let a = random_matrix(&mut rng, 3);
            (&a + a.adjoint()) * c(0.5, 0.0)
        };
        let gen = hamiltonian_superop(&h)
            .unwrap()
            .add(&dissipator(&random_matrix(&mut rng, 3)).unwrap());
        let (t1, t2) = (0.7, 1.9);
        let lhs = expm(&gen, t1 + t2);
        let rhs = expm(&gen, t1).compose(&expm(&gen, t2));
        assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }

    #[test]
    fn expm_apply_matches_expm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 16) * c(3.0, 0.0);
        let v = CVector::from_fn(16, |_, _| c(rng.gen_range(-1.0..1.0), 0.0));
        for t in [1e-4, 0.01, 0.3, 2.0] {
            let direct = expm_matrix(&(&a * c(t, 0.0))) * &v;
            let applied = expm_apply(&a, &v, t);
            assert!((&direct - applied).norm() < 1e-10 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn operator_set_validation() {
        let good = Channel {
            label: "a".into(),
            op: CMatrix::zeros(2, 2),
            rate: 1.0,
        };
        let bad_dim = Channel {
            label: "b".into(),
            op: CMatrix::zeros(3, 3),
            rate: 1.0,
        };
        let bad_rate = Channel {
            label: "c".into(),
            op: CMatrix::zeros(2, 2),
            rate: -1.0,
        };
        assert!(OperatorSet::new(vec![good.clone()]).is_ok());
        assert!(OperatorSet::new(vec![good.clone(), bad_dim]).is_err());
        assert!(OperatorSet::new(vec![good, bad_rate]).is_err());
    }

    #[test]
    fn pure_state_helpers() {
        let (p, m) = plus_minus();
        let rho = DensityMatrix::pure(&(p + m));
        assert!(rho.is_normalized());
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-14);
    }
}
