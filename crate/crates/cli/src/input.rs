//! Theory files and builtin names.

use std::path::Path;

use conelab::algebra::CjIso;
use conelab::builtins::{make_builtin, BuiltinKind, Theory};
use conelab::cone::{default_tolerance, Cone, PsdEmbedding};
use conelab::linalg::{CMat, RMat, RVec};
use conelab::theory::{System, Transformation};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryFile {
    pub name: String,
    pub dim: usize,
    pub backend: BackendSpec,
    /// Ray generators of the effect cone; required for the polyhedral backend.
    #[serde(default)]
    pub effect_generators: Vec<Vec<f64>>,
    pub unit_effect: Vec<f64>,
    pub reference_observable: Vec<Vec<f64>>,
    /// Row-major matrices acting on effect coordinates.
    #[serde(default)]
    pub transformation_generators: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub bipartite: Option<BipartiteSpec>,
    #[serde(default)]
    pub assert_cj: bool,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendSpec {
    Polyhedral,
    /// Effects are `sum_k v_k B_k` for the listed Hermitian `d x d` matrices.
    Psd {
        d: usize,
        basis: Vec<ComplexMatrix>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BipartiteSpec {
    /// Ray generators of the joint effect cone, replacing the minimal tensor product.
    #[serde(default)]
    pub override_generators: Option<Vec<Vec<f64>>>,
    /// Designated faithful-state candidate.
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
}

/// Builtin name (`classical:d`, `quantum:d`, `gbit`) or path to a theory file.
pub fn load(source: &str) -> Result<Theory, CliError> {
    if let Ok(kind) = source.parse::<BuiltinKind>() {
        return make_builtin(kind).map_err(CliError::from_theory);
    }
    let looks_builtin =
        source == "gbit" || source.starts_with("classical:") || source.starts_with("quantum:");
    if looks_builtin {
        return Err(CliError::Usage(format!(
            "unknown builtin theory `{source}`"
        )));
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read `{source}`: {e}")))?;
    let file: TheoryFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{source}:{}:{}: {e}", e.line(), e.column())))?;
    build(file)
}

fn finite(field: &str, values: &[f64]) -> Result<(), CliError> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(CliError::Usage(format!("{field}[{i}] is not finite"))),
        None => Ok(()),
    }
}

fn vector(field: &str, values: &[f64], dim: usize) -> Result<RVec, CliError> {
    if values.len() != dim {
        return Err(CliError::Usage(format!(
            "{field} has length {}, expected {dim}",
            values.len()
        )));
    }
    finite(field, values)?;
    Ok(RVec::from_column_slice(values))
}

fn matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<RMat, CliError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Usage(format!(
            "{field} must be a {nrows} x {ncols} matrix"
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        finite(&format!("{field}[{i}]"), r)?;
    }
    Ok(RMat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn complex_matrix(field: &str, m: &ComplexMatrix, d: usize) -> Result<CMat, CliError> {
    let re = matrix(&format!("{field}.re"), &m.re, d, d)?;
    let im = match &m.im {
        Some(rows) => matrix(&format!("{field}.im"), rows, d, d)?,
        None => RMat::zeros(d, d),
    };
    Ok(CMat::from_fn(d, d, |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    }))
}

fn vectors(field: &str, rows: &[Vec<f64>], dim: usize) -> Result<Vec<RVec>, CliError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| vector(&format!("{field}[{i}]"), r, dim))
        .collect()
}

pub fn build(file: TheoryFile) -> Result<Theory, CliError> {
    let tol = default_tolerance();
    let dim = file.dim;
    if dim == 0 {
        return Err(CliError::Usage("dim must be positive".into()));
    }
    let unit = vector("unit_effect", &file.unit_effect, dim)?;
    let reference = vectors("reference_observable", &file.reference_observable, dim)?;
    let gens = file
        .transformation_generators
        .iter()
        .enumerate()
        .map(|(i, m)| {
            matrix(&format!("transformation_generators[{i}]"), m, dim, dim).map(Transformation::new)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let effect_cone = match &file.backend {
        BackendSpec::Polyhedral => {
            if file.effect_generators.is_empty() {
                return Err(CliError::Usage(
                    "effect_generators is required for the polyhedral backend".into(),
                ));
            }
            let g = vectors("effect_generators", &file.effect_generators, dim)?;
            Cone::polyhedral(g, tol).map_err(|e| CliError::Invalid(e.to_string()))?
        }
        BackendSpec::Psd { d, basis } => {
            if basis.len() != dim {
                return Err(CliError::Usage(format!(
                    "backend.basis has {} matrices, expected {dim}",
                    basis.len()
                )));
            }
            let basis = basis
                .iter()
                .enumerate()
                .map(|(k, m)| complex_matrix(&format!("backend.basis[{k}]"), m, *d))
                .collect::<Result<Vec<_>, _>>()?;
            let emb = PsdEmbedding::new(*d, basis).map_err(|e| CliError::Invalid(e.to_string()))?;
            Cone::psd(emb, tol)
        }
    };
    let system = System::new(file.name.clone(), effect_cone, unit, reference, gens)
        .map_err(CliError::from_theory)?;

    let mut composite_override = None;
    let mut designated_phi = None;
    if let Some(b) = &file.bipartite {
        if let Some(g) = &b.override_generators {
            let g = vectors("bipartite.override_generators", g, dim * dim)?;
            composite_override =
                Some(Cone::polyhedral(g, tol).map_err(|e| CliError::Invalid(e.to_string()))?);
        }
        if let Some(p) = &b.phi {
            designated_phi = Some(vector("bipartite.phi", p, dim * dim)?);
        }
    }
    if composite_override.is_none() {
        composite_override = psd_product(&system, &system)?;
    }
    let cj = if file.assert_cj {
        if !matches!(file.backend, BackendSpec::Psd { .. }) {
            return Err(CliError::Usage("assert_cj requires the psd backend".into()));
        }
        let cj = CjIso::quantum(&system).map_err(CliError::from_theory)?;
        if !cj.asserted() {
            return Err(CliError::Invalid(
                "assert_cj: the psd basis does not span all Hermitian matrices".into(),
            ));
        }
        Some(cj)
    } else {
        None
    };
    Ok(Theory {
        system,
        kind: None,
        composite_override,
        designated_phi,
        cj,
    })
}

/// Joint psd cone spanned by Kronecker products of the two embeddings, when both
/// systems are psd.
pub fn psd_product(a: &System, b: &System) -> Result<Option<Cone>, CliError> {
    let (Some(ea), Some(eb)) = (a.effect_cone.embedding(), b.effect_cone.embedding()) else {
        return Ok(None);
    };
    let mut basis = Vec::with_capacity(ea.basis().len() * eb.basis().len());
    for x in ea.basis() {
        for y in eb.basis() {
            basis.push(x.kronecker(y));
        }
    }
    let emb =
        PsdEmbedding::new(ea.d() * eb.d(), basis).map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(Some(Cone::psd(emb, a.tolerance().min(b.tolerance()))))
}
