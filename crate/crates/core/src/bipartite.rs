// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! System-ancilla Lindblad models whose traced-out click record is a closed
//! non-Markovian jump process.
//!
//! Monitored operators are V_{αlm} = V_α ⊗ |a_l⟩⟨a_m| with rates γ_{αlm}.
//! When γ_{αlm} = γ_α c_l d_m every click leaves the pair in a product state
//! M[ρ_s] ⊗ ρ̄_a with ρ̄_a = Σ_l c_l |a_l⟩⟨a_l|, and the reduced no-click
//! propagator T(t) = Tr_a[exp(t𝔻)(· ⊗ ρ̄_a)] carries the memory.

use crate::error::{Error, Result};
use crate::linalg::{
    c, embedding_matrix, expm_apply, ket_bra, kron, partial_trace_superop, vec_trace, CMatrix,
    CVector, Channel, DensityMatrix, OperatorSet, Superoperator, TOL,
};
use crate::markov::{self, classify_renewal, JumpModel, RenewalClass, SplitGenerator};

/// Non-negative rates γ_{αlm}, indexed [α][l][m].
#[derive(Debug, Clone, PartialEq)]
pub struct RateTensor {
    n_alpha: usize,
    d_a: usize,
    data: Vec<f64>,
}

impl RateTensor {
    pub fn zeros(n_alpha: usize, d_a: usize) -> Self {
        Self {
            n_alpha,
            d_a,
            data: vec![0.0; n_alpha * d_a * d_a],
        }
    }

    pub fn from_fn(
        n_alpha: usize,
        d_a: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut t = Self::zeros(n_alpha, d_a);
        for a in 0..n_alpha {
            for l in 0..d_a {
                for m in 0..d_a {
                    t.set(a, l, m, f(a, l, m))?;
                }
            }
        }
        Ok(t)
    }

    /// From nested `[α][l][m]` arrays; every block must be `d_a × d_a`.
    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_alpha = nested.len();
        let d_a = nested.first().map_or(0, Vec::len);
        for (a, block) in nested.iter().enumerate() {
            if block.len() != d_a || block.iter().any(|row| row.len() != d_a) {
                return Err(Error::Dimension(format!(
                    "rates[{a}] must be a {d_a}x{d_a} array"
                )));
            }
        }
        Self::from_fn(n_alpha, d_a, |a, l, m| nested[a][l][m])
    }

    pub fn set(&mut self, alpha: usize, l: usize, m: usize, rate: f64) -> Result<()> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::Validation(format!(
                "rate[{alpha}][{l}][{m}] = {rate} must be finite and non-negative"
            )));
        }
        let i = self.index(alpha, l, m);
        self.data[i] = rate;
        Ok(())
    }

    pub fn get(&self, alpha: usize, l: usize, m: usize) -> f64 {
        self.data[self.index(alpha, l, m)]
    }

    fn index(&self, alpha: usize, l: usize, m: usize) -> usize {
        assert!(alpha < self.n_alpha && l < self.d_a && m < self.d_a);
        (alpha * self.d_a + l) * self.d_a + m
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Which factorization condition the certificate establishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// γ_{αlm} = γ_α c_l d_m with renewal channels; d_m arbitrary.
    Renewal,
    /// γ_{αlm} = γ_α c_l (uniform d_m).
    NonRenewal,
}

/// Proof that the rate tensor factorizes, with normalized factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryCertificate {
    pub kind: CertificateKind,
    pub gamma_alpha: Vec<f64>,
    /// Σ c_l = 1.
    pub c: Vec<f64>,
    /// max d_m = 1.
    pub d: Vec<f64>,
    pub reset_ancilla: DensityMatrix,
    /// ‖γ − γ_α c_l d_m‖ / ‖γ‖.
    pub residual: f64,
}

impl SymmetryCertificate {
    pub fn reconstruct(&self, alpha: usize, l: usize, m: usize) -> f64 {
        self.gamma_alpha[alpha] * self.c[l] * self.d[m]
    }
}

/// Best rank-1 fit g ⊗ c ⊗ d by marginals followed by alternating least squares.
fn rank_one_fit(t: &RateTensor) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let (na, da) = (t.n_alpha, t.d_a);
    let total: f64 = t.data.iter().sum();
    let mut g = vec![0.0; na];
    let mut cl = vec![0.0; da];
    let mut dm = vec![0.0; da];
    for a in 0..na {
        for l in 0..da {
            for m in 0..da {
                let x = t.get(a, l, m);
                g[a] += x;
                cl[l] += x;
                dm[m] += x;
            }
        }
    }
    if total > 0.0 {
        g.iter_mut().for_each(|x| *x /= total * total);
    }
    let residual = |g: &[f64], cl: &[f64], dm: &[f64]| {
        let mut r = 0.0;
        for a in 0..na {
            for l in 0..da {
                for m in 0..da {
                    r += (t.get(a, l, m) - g[a] * cl[l] * dm[m]).powi(2);
                }
            }
        }
        r.sqrt()
    };
    let norm = t.norm();
    if norm == 0.0 {
        return (g, cl, dm, 0.0);
    }
    let mut res = residual(&g, &cl, &dm);
    for _ in 0..500 {
        if res <= 1e-15 * norm {
            break;
        }
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let (sc, sd) = (sq(&cl), sq(&dm));
        for a in 0..na {
            let mut s = 0.0;
            for l in 0..da {
                for m in 0..da {
                    s += t.get(a, l, m) * cl[l] * dm[m];
                }
            }
            g[a] = if sc * sd > 0.0 { s / (sc * sd) } else { 0.0 };
        }
        let sg = sq(&g);
        for l in 0..da {
            let mut s = 0.0;
            for a in 0..na {
                for m in 0..da {
                    s += t.get(a, l, m) * g[a] * dm[m];
                }
            }
            cl[l] = if sg * sd > 0.0 { s / (sg * sd) } else { 0.0 };
        }
        let sc = sq(&cl);
        for m in 0..da {
            let mut s = 0.0;
            for a in 0..na {
                for l in 0..da {
                    s += t.get(a, l, m) * g[a] * cl[l];
                }
            }
            dm[m] = if sg * sc > 0.0 { s / (sg * sc) } else { 0.0 };
        }
        let next = residual(&g, &cl, &dm);
        let stalled = (res - next).abs() <= 1e-14 * norm;
        res = next;
        if stalled {
            break;
        }
    }
    (g, cl, dm, res / norm)
}

/// Relative residual of the best rank-1 approximation of the (α·l, m) unfolding.
fn unfolding_rank_one_residual(t: &RateTensor) -> f64 {
    let (na, da) = (t.n_alpha, t.d_a);
    let m = nalgebra::DMatrix::from_fn(na * da, da, |row, col| t.get(row / da, row % da, col));
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.iter().skip(1).map(|x| x * x).sum::<f64>().sqrt() / norm
}

/// Factor γ_{αlm} = γ_α c_l d_m, normalized to Σc = 1 and max d = 1.
pub fn validate_symmetry(rates: &RateTensor, kind: CertificateKind) -> Result<SymmetryCertificate> {
    let (mut g, mut cl, mut dm, residual) = rank_one_fit(rates);
    if residual > TOL.factorization {
        let weaker = unfolding_rank_one_residual(rates);
        return Err(if weaker <= TOL.factorization {
            Error::ClassicalCorrelatedReset { residual }
        } else {
            Error::NotFactorizable { residual }
        });
    }
    // Signs are fixed so every factor is non-negative.
    let flip = |v: &mut Vec<f64>| {
        if v.iter().sum::<f64>() < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
            true
        } else {
            false
        }
    };
    if flip(&mut cl) {
        g.iter_mut().for_each(|x| *x = -*x);
    }
    if flip(&mut dm) {
        g.iter_mut().for_each(|x| *x = -*x);
    }
    let sc: f64 = cl.iter().sum();
    let dmax = dm.iter().copied().fold(0.0, f64::max);
    if sc > 0.0 && dmax > 0.0 {
        cl.iter_mut().for_each(|x| *x = (*x / sc).max(0.0));
        dm.iter_mut().for_each(|x| *x = (*x / dmax).max(0.0));
        g.iter_mut().for_each(|x| *x = (*x * sc * dmax).max(0.0));
    } else {
        // All rates vanish: nothing clicks, any ancilla reset will do.
        cl = (0..rates.d_a)
            .map(|l| if l == 0 { 1.0 } else { 0.0 })
            .collect();
        dm = vec![1.0; rates.d_a];
        g = vec![0.0; rates.n_alpha];
    }
    if kind == CertificateKind::NonRenewal
        && dm.iter().any(|&x| (x - 1.0).abs() > TOL.factorization)
    {
        return Err(Error::NonUniformAncillaWeights(dm));
    }
    let reset_ancilla = DensityMatrix::diagonal(&cl);
    let mut cert = SymmetryCertificate {
        kind,
        gamma_alpha: g,
        c: cl,
        d: dm,
        reset_ancilla,
        residual: 0.0,
    };
    let mut r2 = 0.0;
    for a in 0..rates.n_alpha {
        for l in 0..rates.d_a {
            for m in 0..rates.d_a {
                r2 += (rates.get(a, l, m) - cert.reconstruct(a, l, m)).powi(2);
            }
        }
    }
    let norm = rates.norm();
    cert.residual = if norm > 0.0 { r2.sqrt() / norm } else { 0.0 };
    Ok(cert)
}

/// Bipartite Lindblad model with monitored V_α ⊗ |a_l⟩⟨a_m|.
#[derive(Debug, Clone)]
pub struct BipartiteModel {
    d_s: usize,
    d_a: usize,
    l0: Superoperator,
    system_ops: Vec<(String, CMatrix)>,
    rates: RateTensor,
}

impl BipartiteModel {
    pub fn new(
        d_s: usize,
        d_a: usize,
        l0: Superoperator,
        system_ops: Vec<(String, CMatrix)>,
        rates: RateTensor,
    ) -> Result<Self> {
        if d_s == 0 || d_a == 0 {
            return Err(Error::Dimension("dimensions must be positive".into()));
        }
        if l0.dim() != d_s * d_a {
            return Err(Error::Dimension(format!(
                "L0 acts on dimension {}, expected {}",
                l0.dim(),
                d_s * d_a
            )));
        }
        for (label, op) in &system_ops {
            if op.nrows() != d_s || op.ncols() != d_s {
                return Err(Error::Dimension(format!(
                    "system operator '{label}' is {}x{}, expected {d_s}x{d_s}",
                    op.nrows(),
                    op.ncols()
                )));
            }
        }
        if rates.n_alpha() != system_ops.len() || rates.d_a() != d_a {
            return Err(Error::Dimension(format!(
                "rate tensor has shape [{}][{}][{}], expected [{}][{d_a}][{d_a}]",
                rates.n_alpha(),
                rates.d_a(),
                rates.d_a(),
                system_ops.len()
            )));
        }
        Ok(Self {
            d_s,
            d_a,
            l0,
            system_ops,
            rates,
        })
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn l0(&self) -> &Superoperator {
        &self.l0
    }

    pub fn system_ops(&self) -> &[(String, CMatrix)] {
        &self.system_ops
    }

    pub fn rates(&self) -> &RateTensor {
        &self.rates
    }

    /// V_{αlm} with nonzero rate.
    pub fn monitored_channels(&self) -> OperatorSet {
        let mut out = Vec::new();
        for (a, (label, v)) in self.system_ops.iter().enumerate() {
            for l in 0..self.d_a {
                for m in 0..self.d_a {
                    let rate = self.rates.get(a, l, m);
                    if rate > 0.0 {
                        out.push(Channel {
                            label: format!("{label}[{}{}]", l + 1, m + 1),
                            op: kron(v, &ket_bra(self.d_a, l, m)),
                            rate,
                        });
                    }
                }
            }
        }
        OperatorSet::new(out).expect("dimensions checked at construction")
    }

    pub fn jump_model(&self) -> JumpModel {
        JumpModel::new(self.l0.clone(), self.monitored_channels()).expect("dimensions checked")
    }

    /// Full bipartite generator 𝔻 + 𝕁.
    pub fn generator(&self) -> Superoperator {
        self.jump_model().generator()
    }

    /// System channels V_α with the factored rates γ_α.
    pub fn system_channels(&self, cert: &SymmetryCertificate) -> OperatorSet {
        OperatorSet::new(
            self.system_ops
                .iter()
                .zip(&cert.gamma_alpha)
                .map(|((label, op), &rate)| Channel {
                    label: label.clone(),
                    op: op.clone(),
                    rate,
                })
                .collect(),
        )
        .expect("dimensions checked")
    }

    /// Classify the system channels, then factor the rates accordingly.
    pub fn certify(&self) -> Result<SymmetryCertificate> {
        // Renewal structure depends only on which channels are active, so a
        // provisional unit-rate set is enough to decide the kind.
        let provisional = OperatorSet::new(
            self.system_ops
                .iter()
                .enumerate()
                .map(|(a, (label, op))| Channel {
                    label: label.clone(),
                    op: op.clone(),
                    rate: if self.alpha_active(a) { 1.0 } else { 0.0 },
                })
                .collect(),
        )
        .expect("dimensions checked");
        let kind = match classify_renewal(&provisional) {
            RenewalClass::Renewal(_) => CertificateKind::Renewal,
            RenewalClass::NonRenewal => CertificateKind::NonRenewal,
        };
        validate_symmetry(&self.rates, kind)
    }

    fn alpha_active(&self, a: usize) -> bool {
        (0..self.d_a).any(|l| (0..self.d_a).any(|m| self.rates.get(a, l, m) > 0.0))
    }

    /// ρ̄_s for renewal certificates.
    pub fn reset_state(&self, cert: &SymmetryCertificate) -> Option<DensityMatrix> {
        match (cert.kind, classify_renewal(&self.system_channels(cert))) {
            (CertificateKind::Renewal, RenewalClass::Renewal(r)) => Some(r),
            _ => None,
        }
    }
}

pub fn bipartite_split(model: &BipartiteModel) -> SplitGenerator {
    markov::split(&model.jump_model())
}

/// System factor of 𝕄ρ_sa, after checking that 𝕄ρ_sa = ρ_s⁺ ⊗ ρ̄_a.
pub fn bipartite_jump_map(
    split: &SplitGenerator,
    cert: &SymmetryCertificate,
    rho_sa: &DensityMatrix,
) -> Result<DensityMatrix> {
    let d_a = cert.reset_ancilla.dim();
    let d_s = rho_sa.dim() / d_a;
    let post = markov::jump_map(split, rho_sa)?;
    let sys = crate::linalg::partial_trace_ancilla(&post, d_s, d_a)?;
    let deviation = post.max_abs_diff(&sys.kron(&cert.reset_ancilla));
    if deviation > TOL.separability {
        return Err(Error::SeparabilityViolation { deviation });
    }
    Ok(sys)
}

/// Reduced view of a bipartite split: embedding ρ ↦ ρ ⊗ ρ̄_a, partial trace
/// and the bipartite drift and jump parts. A Markovian split is the case
/// d_a = 1.
#[derive(Debug, Clone)]
pub struct ReducedDynamics {
    pub d_s: usize,
    pub d_a: usize,
    /// 𝔻 on the bipartite space.
    pub drift: CMatrix,
    /// 𝕁 on the bipartite space.
    pub jump: CMatrix,
    /// vec(ρ) ↦ vec(ρ ⊗ ρ̄_a).
    pub emb: CMatrix,
    /// vec(ρ_sa) ↦ vec(Tr_a ρ_sa).
    pub ptr: CMatrix,
    pub reset_ancilla: DensityMatrix,
}

impl ReducedDynamics {
    pub fn new(model: &BipartiteModel, cert: &SymmetryCertificate) -> Self {
        let sp = bipartite_split(model);
        Self {
            d_s: model.d_s,
            d_a: model.d_a,
            drift: sp.d.matrix().clone(),
            jump: sp.j.matrix().clone(),
            emb: embedding_matrix(model.d_s, cert.reset_ancilla.matrix()),
            ptr: partial_trace_superop(model.d_s, model.d_a),
            reset_ancilla: cert.reset_ancilla.clone(),
        }
    }

    pub fn markovian(split: &SplitGenerator) -> Self {
        let d = split.dim();
        let n = d * d;
        Self {
            d_s: d,
            d_a: 1,
            drift: split.d.matrix().clone(),
            jump: split.j.matrix().clone(),
            emb: CMatrix::identity(n, n),
            ptr: CMatrix::identity(n, n),
            reset_ancilla: DensityMatrix::basis(1, 0),
        }
    }

    /// Largest |entry| of 𝔻 and 𝕁.
    pub fn max_rate(&self) -> f64 {
        crate::linalg::max_abs(&self.drift).max(crate::linalg::max_abs(&self.jump))
    }

    pub fn embed(&self, rho: &DensityMatrix) -> CVector {
        &self.emb * rho.to_vec()
    }

    pub fn reduce(&self, v: &CVector) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(
            crate::linalg::devectorize(&(&self.ptr * v)).expect("square by construction"),
        )
    }

    /// T(t)ρ by direct re-propagation.
    pub fn propagate(&self, rho: &DensityMatrix, t: f64) -> DensityMatrix {
        self.reduce(&expm_apply(&self.drift, &self.embed(rho), t))
    }

    pub fn survival(&self, rho: &DensityMatrix, t: f64) -> f64 {
        vec_trace(&expm_apply(&self.drift, &self.embed(rho), t)).re
    }

    /// w(t|ρ) = −Tr[𝔻 exp(t𝔻)(ρ ⊗ ρ̄_a)].
    pub fn waiting(&self, rho: &DensityMatrix, t: f64) -> f64 {
        let v = expm_apply(&self.drift, &self.embed(rho), t);
        -vec_trace(&(&self.drift * v)).re
    }

    /// Unnormalized post-click system state Tr_a[𝕁 exp(t𝔻)(ρ ⊗ ρ̄_a)].
    pub fn click(&self, rho: &DensityMatrix, t: f64) -> DensityMatrix {
        let v = expm_apply(&self.drift, &self.embed(rho), t);
        self.reduce(&(&self.jump * v))
    }

    /// Bipartite reset v ↦ Emb Tr_a[𝕁v] / Tr[𝕁v], exact under a valid certificate.
    pub(crate) fn reset_vec(&self, v: &CVector) -> Result<CVector> {
        let jv = &self.jump * v;
        let norm = vec_trace(&jv).re;
        if norm <= TOL.jump_norm_floor {
            return Err(Error::DarkState {
                intensity: norm,
                floor: TOL.jump_norm_floor,
            });
        }
        Ok(&self.emb * (&self.ptr * jv) / c(norm, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hamiltonian_superop, random_state, sigma_x, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tls_tensor(g: f64, gp: f64) -> RateTensor {
        let mut t = RateTensor::zeros(1, 2);
        t.set(0, 0, 0, g).unwrap();
        t.set(0, 0, 1, gp).unwrap();
        t
    }

    fn tls_like(g: f64, gp: f64, omega: f64) -> BipartiteModel {
        let h = kron(&sigma_x(), &sigma_x()) * C64::new(omega / 2.0, 0.0);
        BipartiteModel::new(
            2,
            2,
            hamiltonian_superop(&h).unwrap(),
            vec![("sigma".into(), ket_bra(2, 1, 0))],
            tls_tensor(g, gp),
        )
        .unwrap()
    }

    #[test]
    fn tls_tensor_certificate() {
        let cert = validate_symmetry(&tls_tensor(1.0, 1.0), CertificateKind::Renewal).unwrap();
        assert_eq!(cert.gamma_alpha, vec![1.0]);
        assert_eq!(cert.c, vec![1.0, 0.0]);
        assert_eq!(cert.d, vec![1.0, 1.0]);
        assert!(cert.residual < 1e-15);
        assert!(cert
            .reset_ancilla
            .max_abs_diff(&DensityMatrix::basis(2, 0))
            .eq(&0.0));
        let cert0 = validate_symmetry(&tls_tensor(2.0, 0.0), CertificateKind::Renewal).unwrap();
        assert_eq!(cert0.d, vec![1.0, 0.0]);
        assert_eq!(cert0.gamma_alpha, vec![2.0]);
    }

    #[test]
    fn constructed_tensor_factors() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..2.0)).collect();
        let cl: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..2.0)).collect();
        let t = RateTensor::from_fn(3, 4, |a, l, _| g[a] * cl[l]).unwrap();
        let cert = validate_symmetry(&t, CertificateKind::NonRenewal).unwrap();
        assert!(cert.residual < 1e-12);
        assert!((cert.c.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(cert.d.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        for a in 0..3 {
            for l in 0..4 {
                for m in 0..4 {
                    assert!((cert.reconstruct(a, l, m) - t.get(a, l, m)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn additive_tensor_is_rejected() {
        let t = RateTensor::from_fn(2, 3, |a, l, m| (a + l + m) as f64 + 3.0).unwrap();
        match validate_symmetry(&t, CertificateKind::Renewal) {
            Err(Error::NotFactorizable { residual }) => assert!(residual > 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn alpha_dependent_ancilla_reset_is_diagnosed() {
        // γ_{αl} d_m with γ_{αl} not rank-1.
        let gal = [[1.0, 2.0], [3.0, 1.0]];
        let d = [1.0, 0.5];
        let t = RateTensor::from_fn(2, 2, |a, l, m| gal[a][l] * d[m]).unwrap();
        assert!(matches!(
            validate_symmetry(&t, CertificateKind::Renewal),
            Err(Error::ClassicalCorrelatedReset { .. })
        ));
    }

    #[test]
    fn non_renewal_needs_uniform_weights() {
        assert!(matches!(
            validate_symmetry(&tls_tensor(1.0, 0.5), CertificateKind::NonRenewal),
            Err(Error::NonUniformAncillaWeights(_))
        ));
    }

    #[test]
    fn negative_rates_are_rejected() {
        assert!(RateTensor::zeros(1, 2).set(0, 1, 1, -1.0).is_err());
        assert!(RateTensor::from_nested(&[vec![vec![1.0, 2.0], vec![1.0]]]).is_err());
    }

    #[test]
    fn tls_split_and_reset() {
        let model = tls_like(1.0, 1.0, 4.0);
        let cert = model.certify().unwrap();
        assert_eq!(cert.kind, CertificateKind::Renewal);
        let sp = bipartite_split(&model);
        assert!(sp.generator().max_abs_diff(&model.generator()) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let minus1 = DensityMatrix::basis(4, 2);
        for _ in 0..10 {
            let rho = random_state(&mut rng, 4);
            assert!((sp.d.trace_of(&rho) + sp.j.trace_of(&rho)).abs() < 1e-10);
            // 𝕁ρ = (γ⟨+1|ρ|+1⟩ + γ′⟨+2|ρ|+2⟩) |−1⟩⟨−1|.
            let weight = rho.get(0, 0).re + rho.get(1, 1).re;
            let jr = sp.j.apply(&rho);
            assert!(
                jr.max_abs_diff(&DensityMatrix::from_matrix_unchecked(
                    minus1.matrix() * c(weight, 0.0)
                )) < 1e-14
            );
            let sys = bipartite_jump_map(&sp, &cert, &rho).unwrap();
            assert!(sys.max_abs_diff(&DensityMatrix::basis(2, 1)) < 1e-14);
        }
        let reset = model.reset_state(&cert).unwrap();
        assert!(reset.max_abs_diff(&DensityMatrix::basis(2, 1)) < 1e-14);
    }

    #[test]
    fn zero_rates_give_no_jump_part() {
        let model = tls_like(0.0, 0.0, 1.0);
        assert_eq!(bipartite_split(&model).j, Superoperator::zeros(4));
    }

    #[test]
    fn non_renewal_reset_follows_reduced_state() {
        // Two non-renewal channels on a qubit, ancilla reset (0.3, 0.7).
        let ops = vec![
            ("down".to_string(), ket_bra(2, 1, 0)),
            ("up".to_string(), ket_bra(2, 0, 1)),
        ];
        let gamma = [1.0, 0.5];
        let cl = [0.3, 0.7];
        let rates = RateTensor::from_fn(2, 2, |a, l, _| gamma[a] * cl[l]).unwrap();
        let h = kron(&sigma_x(), &sigma_x());
        let model =
            BipartiteModel::new(2, 2, hamiltonian_superop(&h).unwrap(), ops, rates).unwrap();
        let cert = model.certify().unwrap();
        assert_eq!(cert.kind, CertificateKind::NonRenewal);
        let sp = bipartite_split(&model);
        let sys_split = markov::split(
            &JumpModel::new(Superoperator::zeros(2), model.system_channels(&cert)).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let rho = random_state(&mut rng, 4);
            let reduced = crate::linalg::partial_trace_ancilla(&rho, 2, 2).unwrap();
            let got = bipartite_jump_map(&sp, &cert, &rho).unwrap();
            let expect = markov::jump_map(&sys_split, &reduced).unwrap();
            assert!(got.max_abs_diff(&expect) < 1e-12);
            // 𝕁ρ = J[Tr_a ρ] ⊗ ρ̄_a.
            let lhs = sp.j.apply(&rho);
            let rhs = sys_split.j.apply(&reduced).kron(&cert.reset_ancilla);
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn separability_violation_is_detected() {
        // Pretend the reset ancilla is |2⟩ although the rates reset to |1⟩.
        let model = tls_like(1.0, 1.0, 4.0);
        let mut cert = model.certify().unwrap();
        cert.reset_ancilla = DensityMatrix::basis(2, 1);
        let sp = bipartite_split(&model);
        assert!(matches!(
            bipartite_jump_map(&sp, &cert, &DensityMatrix::basis(4, 0)),
            Err(Error::SeparabilityViolation { .. })
        ));
    }

    #[test]
    fn reduced_survival_matches_known_value() {
        let model = tls_like(1.0, 1.0, 4.0);
        let cert = model.certify().unwrap();
        let dyn_ = ReducedDynamics::new(&model, &cert);
        let p = dyn_.survival(&DensityMatrix::basis(2, 1), 1.0);
        // e^{-1/2}[(γ/2ν)² cosh ν − (Ω/ν)² + (γ/2ν) sinh ν] at γ = 1, Ω = 4.
        assert!((p - 0.5664401816949363).abs() < 1e-12, "{p}");
        // w(0|ρ) = Tr[𝕁(ρ ⊗ ρ̄_a)]; zero for the reset state.
        assert!(dyn_.waiting(&DensityMatrix::basis(2, 1), 0.0).abs() < 1e-15);
    }
}
