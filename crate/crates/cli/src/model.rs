// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

//! JSON model documents.
//!
//! ```json
//! {
//!   "d_s": 2,
//!   "d_a": 2,
//!   "hamiltonian": [[[0.0, 0.0], ...], ...],
//!   "system_operators": [{ "label": "sigma", "matrix": [[[0, 0], [0, 0]], [[1, 0], [0, 0]]] }],
//!   "rates": [[[1.0, 1.0], [0.0, 0.0]]]
//! }
//! ```
//!
//! Matrices are row-major arrays of `[re, im]` pairs; `hamiltonian` acts on
//! the bipartite space (index s·d_a + a) and may be omitted; `rates` is
//! indexed `[α][l][m]`.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nmjumps::bipartite::{BipartiteModel, RateTensor, SymmetryCertificate};
use nmjumps::linalg::{hamiltonian_superop, hermiticity_error, CMatrix, Superoperator, TOL};
use nmjumps::tls::{self, TLSParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type RawMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDoc {
    pub label: String,
    pub matrix: RawMatrix,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub d_s: usize,
    pub d_a: usize,
    #[serde(default)]
    pub hamiltonian: Option<RawMatrix>,
    pub system_operators: Vec<OperatorDoc>,
    pub rates: Vec<Vec<Vec<f64>>>,
}

/// Parameters of the built-in two-level model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TlsDoc {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub omega: f64,
}

impl Default for TlsDoc {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            gamma_prime: 1.0,
            omega: 4.0,
        }
    }
}

impl TlsDoc {
    pub fn params(&self) -> nmjumps::Result<TLSParams> {
        TLSParams::new(self.gamma, self.gamma_prime, self.omega)
    }
}

pub fn parse_matrix(raw: &RawMatrix, n: usize, what: &str) -> Result<CMatrix> {
    if raw.len() != n || raw.iter().any(|row| row.len() != n) {
        bail!("{what}: expected a {n}x{n} matrix");
    }
    let mut m = CMatrix::zeros(n, n);
    for (i, row) in raw.iter().enumerate() {
        for (j, [re, im]) in row.iter().enumerate() {
            if !re.is_finite() || !im.is_finite() {
                bail!("{what}[{i}][{j}]: entries must be finite");
            }
            m[(i, j)] = Complex64::new(*re, *im);
        }
    }
    Ok(m)
}

/// Parses a document, reporting the JSON path and line/column of schema errors.
pub fn parse_model_doc(text: &str) -> Result<ModelDoc> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("schema error at `{path}`: {}", e.into_inner())
    })
}

pub fn build_model(doc: &ModelDoc) -> Result<BipartiteModel> {
    let n = doc.d_s * doc.d_a;
    if n == 0 {
        bail!("d_s and d_a must be positive");
    }
    let l0 = match &doc.hamiltonian {
        Some(raw) => {
            let h = parse_matrix(raw, n, "hamiltonian")?;
            let herr = hermiticity_error(&h);
            if herr > TOL.hermitian {
                bail!("hamiltonian is not Hermitian (max |H - H†| = {herr:.3e})");
            }
            hamiltonian_superop(&h)?
        }
        None => Superoperator::zeros(n),
    };
    let ops = doc
        .system_operators
        .iter()
        .enumerate()
        .map(|(k, op)| {
            parse_matrix(
                &op.matrix,
                doc.d_s,
                &format!("system_operators[{k}].matrix"),
            )
            .map(|m| (op.label.clone(), m))
        })
        .collect::<Result<Vec<_>>>()?;
    let rates = RateTensor::from_nested(&doc.rates).context("rates")?;
    Ok(BipartiteModel::new(doc.d_s, doc.d_a, l0, ops, rates)?)
}

/// Where a model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Tls(TlsDoc),
    File(std::path::PathBuf),
}

/// A model that passed symmetry validation.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: BipartiteModel,
    pub certificate: SymmetryCertificate,
    /// Set for the built-in two-level model.
    pub tls: Option<TLSParams>,
}

pub fn load_model(source: &ModelSource) -> Result<LoadedModel> {
    let (model, tls) = match source {
        ModelSource::Tls(doc) => {
            let p = doc.params()?;
            (tls::build_tls_model(&p)?, Some(p))
        }
        ModelSource::File(path) => (load_model_file(path)?, None),
    };
    let certificate = model.certify().context("symmetry validation failed")?;
    Ok(LoadedModel {
        model,
        certificate,
        tls,
    })
}

pub fn load_model_file(path: &Path) -> Result<BipartiteModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc = parse_model_doc(&text).with_context(|| format!("in {}", path.display()))?;
    build_model(&doc).with_context(|| format!("in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nmjumps::bipartite::CertificateKind;

    const TLS_JSON: &str = r#"{
        "d_s": 2, "d_a": 2,
        "hamiltonian": [
            [[0,0],[0,0],[0,0],[2,0]],
            [[0,0],[0,0],[2,0],[0,0]],
            [[0,0],[2,0],[0,0],[0,0]],
            [[2,0],[0,0],[0,0],[0,0]]
        ],
        "system_operators": [{"label": "sigma", "matrix": [[[0,0],[0,0]],[[1,0],[0,0]]]}],
        "rates": [[[1.0, 1.0], [0.0, 0.0]]]
    }"#;

    #[test]
    fn file_model_equals_builtin() {
        let doc = parse_model_doc(TLS_JSON).unwrap();
        let m = build_model(&doc).unwrap();
        let builtin = tls::build_tls_model(&TLSParams::symmetric(1.0, 4.0).unwrap()).unwrap();
        assert!(m.generator().max_abs_diff(&builtin.generator()) < 1e-15);
        assert_eq!(m.certify().unwrap().kind, CertificateKind::Renewal);
    }

    #[test]
    fn shape_error_names_path_and_line() {
        let bad = TLS_JSON.replace(
            "\"rates\": [[[1.0, 1.0], [0.0, 0.0]]]",
            "\"rates\": [[[1.0, \"x\"]]]",
        );
        let err = parse_model_doc(&bad).unwrap_err().to_string();
        assert!(err.contains("rates[0][0][1]"), "{err}");
        assert!(err.contains("line"), "{err}");
        let ragged = TLS_JSON.replace("[[1.0, 1.0], [0.0, 0.0]]", "[[1.0, 1.0], [0.0]]");
        let err = build_model(&parse_model_doc(&ragged).unwrap()).unwrap_err();
        assert!(format!("{err:#}").contains("rates"), "{err:#}");
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let bad = TLS_JSON.replacen("[[0,0],[0,0],[0,0],[2,0]]", "[[0,0],[0,0],[0,0],[2,1]]", 1);
        assert!(build_model(&parse_model_doc(&bad).unwrap()).is_err());
    }

    #[test]
    fn non_factorizable_reports_residual() {
        let bad = TLS_JSON.replace("[[1.0, 1.0], [0.0, 0.0]]", "[[1.0, 0.0], [0.0, 1.0]]");
        let model = build_model(&parse_model_doc(&bad).unwrap()).unwrap();
        let err = model.certify().unwrap_err().to_string();
        assert!(err.contains("residual"), "{err}");
    }
}
