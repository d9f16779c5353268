//! Built-in theories: classical simplices, finite-dimensional quantum theory and the
//! square bit (gbit).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::CjIso;
use crate::composite::{compose, BipartiteSystem};
use crate::cone::{default_tolerance, Cone, PsdEmbedding};
use crate::linalg::{c, kron_vec, matrix_unit, spectral_map, CMat, CVec, RMat, RVec};
use crate::theory::{Result, System, TheoryError, Transformation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "d", rename_all = "kebab-case")]
pub enum BuiltinKind {
    Classical(usize),
    Quantum(usize),
    Gbit,
}

impl fmt::Display for BuiltinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinKind::Classical(d) => write!(f, "classical:{d}"),
            BuiltinKind::Quantum(d) => write!(f, "quantum:{d}"),
            BuiltinKind::Gbit => write!(f, "gbit"),
        }
    }
}

impl FromStr for BuiltinKind {
    type Err = TheoryError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || TheoryError::InvalidSystem(format!("unknown builtin theory `{s}`"));
        if s == "gbit" {
            return Ok(BuiltinKind::Gbit);
        }
        let (kind, d) = s.split_once(':').ok_or_else(bad)?;
        let d: usize = d.parse().map_err(|_| bad())?;
        if !(1..=8).contains(&d) {
            return Err(TheoryError::InvalidSystem(format!(
                "builtin dimension {d} outside the supported range 1..=8"
            )));
        }
        match kind {
            "classical" => Ok(BuiltinKind::Classical(d)),
            "quantum" => Ok(BuiltinKind::Quantum(d)),
            _ => Err(bad()),
        }
    }
}

/// A system together with the data needed to build its bipartite composite and, when
/// available, a designated faithful-state candidate and a Choi-Jamiolkowski model.
#[derive(Debug, Clone)]
pub struct Theory {
    pub system: System,
    pub kind: Option<BuiltinKind>,
    pub composite_override: Option<Cone>,
    pub designated_phi: Option<RVec>,
    pub cj: Option<CjIso>,
}

impl Theory {
    /// The composite of the system with a copy of itself.
    pub fn composite(&self) -> Result<BipartiteSystem> {
        compose(&self.system, &self.system, self.composite_override.clone())
    }
}

pub fn make_builtin(kind: BuiltinKind) -> Result<Theory> {
    match kind {
        BuiltinKind::Classical(d) => make_classical(d),
        BuiltinKind::Quantum(d) => make_quantum(d),
        BuiltinKind::Gbit => make_gbit(),
    }
}

fn unit(d: usize, k: usize) -> RVec {
    RVec::from_fn(d, |i, _| if i == k { 1.0 } else { 0.0 })
}

/// Classical system with `d` outcomes: orthant effect cone, simplex of states,
/// elementary maps `a -> a_j delta_k`, transpositions and the cyclic shift.
pub fn make_classical(d: usize) -> Result<Theory> {
    let tol = default_tolerance();
    let effect_cone = Cone::polyhedral((0..d).map(|k| unit(d, k)).collect(), tol)?;
    let mut gens = Vec::new();
    for k in 0..d {
        for j in 0..d {
            let mut m = RMat::zeros(d, d);
            m[(k, j)] = 1.0;
            gens.push(Transformation::new(m));
        }
    }
    let perm = |p: &dyn Fn(usize) -> usize| {
        Transformation::new(RMat::from_fn(
            d,
            d,
            |i, j| if p(i) == j { 1.0 } else { 0.0 },
        ))
    };
    for a in 0..d {
        for b in (a + 1)..d {
            gens.push(perm(&|i| {
                if i == a {
                    b
                } else if i == b {
                    a
                } else {
                    i
                }
            }));
        }
    }
    if d > 2 {
        gens.push(perm(&|i| (i + 1) % d));
    }
    let system = System::new(
        format!("classical:{d}"),
        effect_cone,
        RVec::repeat(d, 1.0),
        (0..d).map(|k| unit(d, k)).collect(),
        gens,
    )?;
    let mut phi = RVec::zeros(d * d);
    for l in 0..d {
        phi += kron_vec(&unit(d, l), &unit(d, l)) / d as f64;
    }
    Ok(Theory {
        cj: Some(CjIso::hybrid_diagonal(d)),
        system,
        kind: Some(BuiltinKind::Classical(d)),
        composite_override: None,
        designated_phi: Some(phi),
    })
}

/// Orthonormal basis of `d x d` Hermitian matrices (Hilbert-Schmidt), starting with
/// `I / sqrt d`, followed by the symmetric, antisymmetric and diagonal generalised
/// Gell-Mann matrices divided by `sqrt 2`.
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![CMat::identity(d, d) * c(1.0 / (d as f64).sqrt())];
    for j in 0..d {
        for k in (j + 1)..d {
            out.push((matrix_unit(d, j, k) + matrix_unit(d, k, j)) * c(s));
            out.push(
                (matrix_unit(d, j, k) * Complex64::new(0.0, -1.0)
                    + matrix_unit(d, k, j) * Complex64::new(0.0, 1.0))
                    * c(s),
            );
        }
    }
    for l in 1..d {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut m = CMat::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = c(norm);
        }
        m[(l, l)] = c(-(l as f64) * norm);
        out.push(m);
    }
    out
}

/// Quantum system on `C^d`: Hermitian operators in the orthonormal basis of
/// [`hermitian_basis`], positive-semidefinite effect and state cones, unitary and
/// rank-one Kraus generators, maximally entangled designated state.
pub fn make_quantum(d: usize) -> Result<Theory> {
    let tol = default_tolerance();
    let basis = hermitian_basis(d);
    let emb = PsdEmbedding::new(d, basis.clone())?;
    let effect_cone = Cone::psd(emb.clone(), tol);
    let coords = |m: &CMat| emb.coordinates(m);

    // Informationally complete observable S^{-1/2} P_a S^{-1/2} from a spanning set of
    // rank-one projectors.
    let projectors: Vec<CMat> = emb.grid_vectors().iter().map(|v| v * v.adjoint()).collect();
    let total = projectors.iter().fold(CMat::zeros(d, d), |acc, p| acc + p);
    let inv_half = spectral_map(&total, |x| 1.0 / x.sqrt());
    let reference: Vec<RVec> = projectors
        .iter()
        .map(|p| coords(&(&inv_half * p * &inv_half)))
        .collect();

    let mut kraus_sets: Vec<Vec<CMat>> = Vec::new();
    let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / d as f64);
    let shift = CMat::from_fn(d, d, |i, j| if i == (j + 1) % d { c(1.0) } else { c(0.0) });
    let clock = CMat::from_fn(
        d,
        d,
        |i, j| if i == j { omega.powu(i as u32) } else { c(0.0) },
    );
    for a in 0..d {
        for b in 0..d {
            kraus_sets.push(vec![shift.pow(a as u32) * clock.pow(b as u32)]);
        }
    }
    let units: Vec<CMat> = (0..d * d).map(|p| matrix_unit(d, p / d, p % d)).collect();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for p in 0..units.len() {
        kraus_sets.push(vec![units[p].clone()]);
        for q in (p + 1)..units.len() {
            kraus_sets.push(vec![(&units[p] + &units[q]) * c(s)]);
            kraus_sets.push(vec![
                (&units[p] + &units[q] * Complex64::new(0.0, 1.0)) * c(s),
            ]);
        }
    }
    let unit_effect = coords(&CMat::identity(d, d));
    // Build generator matrices directly; validation happens in `System::new`.
    let kraus_matrix = |kraus: &[CMat]| {
        let mut m = RMat::zeros(d * d, d * d);
        for (k, b) in basis.iter().enumerate() {
            let out = kraus
                .iter()
                .fold(CMat::zeros(d, d), |acc, op| acc + op.adjoint() * b * op);
            m.set_column(k, &coords(&out));
        }
        Transformation::new(m)
    };
    let gens: Vec<Transformation> = kraus_sets.iter().map(|k| kraus_matrix(k)).collect();
    let system = System::new(
        format!("quantum:{d}"),
        effect_cone,
        unit_effect,
        reference,
        gens,
    )?;

    let mut joint_basis = Vec::new();
    for a in &basis {
        for b in &basis {
            joint_basis.push(a.kronecker(b));
        }
    }
    let joint = PsdEmbedding::new(d * d, joint_basis)?;
    let psi = CVec::from_fn(d * d, |k, _| {
        if k / d == k % d {
            c(1.0 / (d as f64).sqrt())
        } else {
            c(0.0)
        }
    });
    let rho = &psi * psi.adjoint();
    let phi = RVec::from_fn(d * d * d * d, |k, _| {
        crate::linalg::trace_product(&joint.basis()[k], &rho)
    });
    Ok(Theory {
        cj: Some(CjIso::quantum(&system)?),
        system,
        kind: Some(BuiltinKind::Quantum(d)),
        composite_override: Some(Cone::psd(joint, tol)),
        designated_phi: Some(phi),
    })
}

/// The four extremal states `(+-1, +-1, 1)` of the square bit.
pub fn gbit_vertices() -> Vec<RVec> {
    [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .map(|&(x, y)| RVec::from_column_slice(&[x, y, 1.0]))
        .collect()
}

/// The four fiducial effects `(1 +- x)/2`, `(1 +- y)/2`.
pub fn gbit_fiducial_effects() -> Vec<RVec> {
    [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
        .iter()
        .map(|&(x, y)| RVec::from_column_slice(&[x / 2.0, y / 2.0, 0.5]))
        .collect()
}

/// Square bit: square state space, dual-square effect cone, the eight symmetries of the
/// square and the sixteen measure-and-prepare maps `a -> omega_v(a) f`.
pub fn make_gbit() -> Result<Theory> {
    let tol = default_tolerance();
    let effects = gbit_fiducial_effects();
    let effect_cone = Cone::polyhedral(effects.clone(), tol)?;
    let reference = vec![
        RVec::from_column_slice(&[0.25, 0.0, 0.25]),
        RVec::from_column_slice(&[0.0, 0.25, 0.25]),
        RVec::from_column_slice(&[-0.25, -0.25, 0.5]),
    ];
    let mut gens = Vec::new();
    let rot = RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let refl = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let mut r = RMat::identity(2, 2);
    for _ in 0..4 {
        for s in [RMat::identity(2, 2), refl.clone()] {
            let m2 = &r * s;
            let mut m = RMat::identity(3, 3);
            m.view_mut((0, 0), (2, 2)).copy_from(&m2);
            gens.push(Transformation::new(m));
        }
        r = &rot * r;
    }
    for f in &effects {
        for w in gbit_vertices() {
            gens.push(Transformation::new(f * w.transpose()));
        }
    }
    let system = System::new(
        "gbit",
        effect_cone,
        RVec::from_column_slice(&[0.0, 0.0, 1.0]),
        reference,
        gens,
    )?;
    Ok(Theory {
        system,
        kind: Some(BuiltinKind::Gbit),
        composite_override: None,
        designated_phi: None,
        cj: None,
    })
}
