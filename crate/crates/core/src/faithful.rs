//! Faithful bipartite states: dynamical and preparational faithfulness, the transpose of
//! a transformation, the marginal `chi`, the Jordan form of the faithful scalar product,
//! the induced adjoint, and check suites for the consequences of a symmetric pure
//! preparationally faithful state.
//!
//! A bipartite state `Phi` is handled through its matrix `W` with `Phi(a, b) = a^T W b`.
//! Local transformations act as `(A (x) I) Phi -> A^T W` and `(I (x) A) Phi -> W A`.

use rand::Rng;
use serde::Serialize;

use crate::builtins::Theory;
use crate::composite::{local, marginal, swap, BipartiteSystem, Slot};
use crate::cone::{check_cone_isomorphism, conic_residual, Backend, ConeError};
use crate::linalg::{complexify, rank, unvec_rows, vec_rows, CMat, RMat, RVec};
use crate::report::CheckRecord;
use crate::theory::{ginibre, System, TheoryError, Transformation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaithfulError {
    #[error("state is not dynamically faithful: the defining linear system is underdetermined")]
    NotFaithful,
    #[error("degenerate faithful form: eigenvalue {0:e} is below tolerance")]
    DegenerateForm(f64),
    #[error("fiducial basis must contain {0} linearly independent vectors")]
    BadBasis(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

impl From<ConeError> for FaithfulError {
    fn from(e: ConeError) -> Self {
        FaithfulError::Theory(e.into())
    }
}

pub type Result<T> = std::result::Result<T, FaithfulError>;

/// Number of random rank-one rays added to the grid when sampling psd cones.
pub const PSD_SAMPLES: usize = 64;

fn slot_system(bip: &BipartiteSystem, slot: Slot) -> &System {
    match slot {
        Slot::Left => &bip.left,
        Slot::Right => &bip.right,
    }
}

/// `Phi` reshaped as the matrix `W` with `Phi(a, b) = a^T W b`.
pub fn form_matrix(bip: &BipartiteSystem, phi: &RVec) -> RMat {
    bip.as_matrix(phi)
}

/// Matrix of the state `(A (x) I) Phi` (left) or `(I (x) A) Phi` (right).
fn apply_local(w: &RMat, m: &RMat, slot: Slot) -> RMat {
    match slot {
        Slot::Left => m.tr_mul(w),
        Slot::Right => w * m,
    }
}

/// True iff `A -> (A (x) I) Phi` (or the right-slot analogue) is injective on all
/// `dim x dim` matrices.
pub fn is_dynamically_faithful(bip: &BipartiteSystem, phi: &RVec, slot: Slot) -> bool {
    let w = form_matrix(bip, phi);
    let n = slot_system(bip, slot).dim;
    let mut map = RMat::zeros(phi.len(), n * n);
    for k in 0..n * n {
        let mut e = RMat::zeros(n, n);
        e[(k / n, k % n)] = 1.0;
        map.set_column(k, &vec_rows(&apply_local(&w, &e, slot)));
    }
    rank(&map, 1e-10) == n * n
}

/// Transformation matrix `M` with `(M (x) I) Phi = Psi` (or the right-slot analogue),
/// when `W` is invertible.
fn preimage(w: &RMat, psi: &RMat, slot: Slot) -> Option<RMat> {
    match slot {
        // M^T W = Psi  <=>  W^T M = Psi^T.
        Slot::Left => w.transpose().lu().solve(&psi.transpose()),
        Slot::Right => w.clone().lu().solve(psi),
    }
}

/// Extremal rays of the joint state cone (polyhedral) or the rank-one grid topped up with
/// random rank-one rays (psd).
fn joint_extremals<R: Rng + ?Sized>(bip: &BipartiteSystem, rng: &mut R) -> Result<Vec<RVec>> {
    let cone = bip.state_cone();
    Ok(match cone.backend() {
        Backend::Polyhedral(_) => cone.extremal_rays()?,
        Backend::Psd(_) => cone.sample_extremals(PSD_SAMPLES, rng),
    })
}

/// True iff every extremal joint state is reachable as `(T (x) I) Phi` (or `(I (x) T) Phi`)
/// up to a positive factor, for some `T` in the transformation cone.
pub fn is_preparationally_faithful<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    phi: &RVec,
    slot: Slot,
    rng: &mut R,
) -> Result<bool> {
    let sys = slot_system(bip, slot);
    let w = form_matrix(bip, phi);
    let (d1, d2) = bip.dims();
    let targets = joint_extremals(bip, rng)?;
    if rank(&w, 1e-10) == w.nrows().min(w.ncols()) && d1 == d2 {
        for psi in &targets {
            let m =
                preimage(&w, &unvec_rows(psi, d1, d2), slot).ok_or(FaithfulError::NotFaithful)?;
            if !sys.in_transformation_cone(&m)? {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    match sys.effect_cone.backend() {
        Backend::Polyhedral(_) => {
            // Images of the extremal rays of the transformation cone; each target must be a
            // conic combination of them.
            let images: Vec<RVec> = sys
                .atomic_rays()?
                .iter()
                .map(|t| vec_rows(&apply_local(&w, &t.matrix, slot)))
                .collect();
            for psi in &targets {
                let scale = psi.amax().max(1e-300);
                let res = conic_residual(&images, &(psi / scale))?;
                if res > sys.tolerance().max(1e-8) * 10.0 {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Backend::Psd(_) => {
            // With a singular W the targets must at least lie in the range of the local
            // map; when they do, deciding feasibility needs a semidefinite program.
            let n = sys.dim;
            let mut map = RMat::zeros(phi.len(), n * n);
            for k in 0..n * n {
                let mut e = RMat::zeros(n, n);
                e[(k / n, k % n)] = 1.0;
                map.set_column(k, &vec_rows(&apply_local(&w, &e, slot)));
            }
            for psi in &targets {
                let (_, res) = crate::linalg::lstsq(&map, psi, 1e-12);
                if res > 1e-8 * psi.norm().max(1.0) {
                    return Ok(false);
                }
            }
            Err(FaithfulError::Unsupported(
                "preparational faithfulness of a singular state on a psd system".into(),
            ))
        }
    }
}

/// `chi = Phi(e, .)`.
pub fn chi(bip: &BipartiteSystem, phi: &RVec) -> RVec {
    marginal(bip, phi, Slot::Right)
}

/// Operational transpose: the unique `T'` with `(T' (x) I) Phi = (I (x) T) Phi`,
/// `M_T' = W^{-T} M_T^T W^T`.
pub fn transpose(bip: &BipartiteSystem, phi: &RVec, t: &Transformation) -> Result<Transformation> {
    let w = form_matrix(bip, phi);
    if !is_dynamically_faithful(bip, phi, Slot::Left) {
        return Err(FaithfulError::NotFaithful);
    }
    let rhs = t.matrix.transpose() * w.transpose();
    let m = w
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or(FaithfulError::NotFaithful)?;
    Ok(Transformation::new(m))
}

/// Transpose of a complex transformation, extended linearly.
pub fn transpose_complex(bip: &BipartiteSystem, phi: &RVec, t: &CMat) -> Result<CMat> {
    let re = transpose(bip, phi, &Transformation::new(t.map(|z| z.re)))?;
    let im = transpose(bip, phi, &Transformation::new(t.map(|z| z.im)))?;
    Ok(complexify(&re.matrix) + complexify(&im.matrix) * crate::linalg::I)
}

/// Jordan form of the faithful bilinear form evaluated on a fiducial basis.
#[derive(Debug, Clone, Serialize)]
pub struct JordanForm {
    /// `Phi(l_i, l_j)` on the fiducial basis.
    pub gram: RMat,
    /// The positive-definite `|gram|`, i.e. the scalar product in fiducial coordinates.
    pub scalar_product: RMat,
    /// `pi_+ - pi_-` in fiducial coordinates.
    pub involution: RMat,
    /// The same involution acting on native effect coordinates.
    pub native_involution: RMat,
    pub signature: (usize, usize),
}

/// Eigendecomposes `gram = L^T W L` for the fiducial basis `basis` (the columns of `L`).
pub fn jordan_scalar_product(
    bip: &BipartiteSystem,
    phi: &RVec,
    basis: &[RVec],
) -> Result<JordanForm> {
    let w = form_matrix(bip, phi);
    let n = w.nrows();
    if basis.len() != n || basis.iter().any(|b| b.len() != n) {
        return Err(FaithfulError::BadBasis(n));
    }
    let l = RMat::from_columns(basis);
    let l_inv = l.clone().try_inverse().ok_or(FaithfulError::BadBasis(n))?;
    let raw = l.transpose() * &w * &l;
    let gram = (&raw + raw.transpose()) * 0.5;
    let eig = gram.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1e-300);
    let tol = bip.system.tolerance().max(1e-12) * top;
    let mut signs = RVec::zeros(n);
    let mut abs = RVec::zeros(n);
    let (mut pos, mut neg) = (0, 0);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() < tol {
            return Err(FaithfulError::DegenerateForm(lam));
        }
        if lam > 0.0 {
            pos += 1;
            signs[k] = 1.0;
        } else {
            neg += 1;
            signs[k] = -1.0;
        }
        abs[k] = lam.abs();
    }
    let v = &eig.eigenvectors;
    let involution = v * RMat::from_diagonal(&signs) * v.transpose();
    let scalar_product = v * RMat::from_diagonal(&abs) * v.transpose();
    let native_involution = &l * &involution * &l_inv;
    Ok(JordanForm {
        gram,
        scalar_product,
        involution,
        native_involution,
        signature: (pos, neg),
    })
}

/// Adjoint for the faithful sesquilinear scalar product: `T^dag = Z eta(T') Z`, with `Z` the
/// involution and `eta` the conjugation of the Cartesian parts.
pub fn adjoint(bip: &BipartiteSystem, phi: &RVec, jordan: &JordanForm, t: &CMat) -> Result<CMat> {
    let tp = transpose_complex(bip, phi, t)?;
    let z = complexify(&jordan.native_involution);
    Ok(&z * tp.map(|x| x.conj()) * &z)
}

#[derive(Debug, Clone, Serialize)]
pub struct FaithfulStateReport {
    pub phi: RVec,
    pub symmetric: bool,
    pub pure: bool,
    /// Left and right slot.
    pub dyn_faithful: [bool; 2],
    pub prep_faithful: [bool; 2],
    pub chi: RVec,
    pub gram: RMat,
    pub jordan_involution: RMat,
    pub signature: (usize, usize),
}

impl FaithfulStateReport {
    pub fn satisfies_pfaith(&self) -> bool {
        self.symmetric && self.pure && self.prep_faithful.iter().all(|&b| b)
    }
}

pub fn is_symmetric(bip: &BipartiteSystem, phi: &RVec) -> bool {
    let (d1, d2) = bip.dims();
    d1 == d2
        && (swap(phi, d1, d2) - phi).amax() <= bip.system.tolerance() * 10.0 * phi.amax().max(1.0)
}

/// Full report for a candidate state, with the Jordan form taken on the reference
/// observable of the left system.
pub fn faithful_report<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    phi: &RVec,
    rng: &mut R,
) -> Result<FaithfulStateReport> {
    let dyn_faithful = [
        is_dynamically_faithful(bip, phi, Slot::Left),
        is_dynamically_faithful(bip, phi, Slot::Right),
    ];
    let mut prep = |slot| match is_preparationally_faithful(bip, phi, slot, rng) {
        Err(FaithfulError::NotFaithful) => Ok(false),
        other => other,
    };
    let prep_faithful = [prep(Slot::Left)?, prep(Slot::Right)?];
    let symmetric = is_symmetric(bip, phi);
    let (gram, jordan_involution, signature) =
        match jordan_scalar_product(bip, phi, &bip.left.reference_observable) {
            Ok(j) => (j.gram, j.involution, j.signature),
            Err(FaithfulError::DegenerateForm(_)) => {
                let l = RMat::from_columns(&bip.left.reference_observable);
                let g = l.transpose() * form_matrix(bip, phi) * &l;
                let n = g.nrows();
                (g, RMat::zeros(n, n), (0, 0))
            }
            Err(e) => return Err(e),
        };
    Ok(FaithfulStateReport {
        phi: phi.clone(),
        symmetric,
        pure: bip.state_cone().is_extremal(phi)?,
        dyn_faithful,
        prep_faithful,
        chi: chi(bip, phi),
        gram,
        jordan_involution,
        signature,
    })
}

/// Searches for a symmetric pure preparationally faithful state. Polyhedral composites
/// scan the extremal rays of the joint state cone in generator order; psd composites test
/// the designated candidate of the theory. The first passing candidate wins.
pub fn find_pfaith_state<R: Rng + ?Sized>(
    theory: &Theory,
    bip: &BipartiteSystem,
    rng: &mut R,
) -> Result<Option<FaithfulStateReport>> {
    let e = bip.unit_effect().clone();
    let candidates: Vec<RVec> = match bip.state_cone().backend() {
        Backend::Polyhedral(_) => bip
            .state_cone()
            .extremal_rays()?
            .into_iter()
            .map(|r| {
                let p = r.dot(&e);
                r / p
            })
            .filter(|r| is_symmetric(bip, r))
            .collect(),
        Backend::Psd(_) => theory.designated_phi.iter().cloned().collect(),
    };
    for phi in candidates {
        let report = faithful_report(bip, &phi, rng)?;
        if report.satisfies_pfaith() {
            return Ok(Some(report));
        }
    }
    Ok(None)
}

/// Worst violation of the cone isomorphism `A -> (A (x) I) Phi` between the transformation
/// cone and the joint state cone, checked on generators in both directions.
fn transformation_state_isomorphism<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    phi: &RVec,
    rng: &mut R,
) -> Result<(bool, String)> {
    let sys = &bip.left;
    let w = form_matrix(bip, phi);
    let (d1, d2) = bip.dims();
    let forward: Vec<Transformation> = match sys.effect_cone.backend() {
        Backend::Polyhedral(_) => sys.atomic_rays()?,
        Backend::Psd(emb) => {
            let mut v = sys.transformation_generators.clone();
            for _ in 0..PSD_SAMPLES {
                let k = ginibre(emb.d(), emb.d(), !emb.is_real(), rng);
                v.push(sys.kraus_map(&[k])?);
            }
            v
        }
    };
    for t in &forward {
        if !bip
            .state_cone()
            .member(&vec_rows(&apply_local(&w, &t.matrix, Slot::Left)))?
        {
            return Ok((
                false,
                "a transformation maps outside the joint state cone".into(),
            ));
        }
    }
    for psi in joint_extremals(bip, rng)? {
        let m = preimage(&w, &unvec_rows(&psi, d1, d2), Slot::Left)
            .ok_or(FaithfulError::NotFaithful)?;
        if !sys.in_transformation_cone(&m)? {
            return Ok((
                false,
                "an extremal joint state has no preimage in the transformation cone".into(),
            ));
        }
    }
    Ok((
        true,
        format!(
            "{} transformations and all extremal joint states checked",
            forward.len()
        ),
    ))
}

/// Checks on a preparationally faithful `Phi`: cone isomorphisms onto the joint state cone
/// and from effects to states, the correspondence between atomic transformations and pure
/// outputs, and dynamical faithfulness.
pub fn faithful_state_checks<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    phi: &RVec,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<CheckRecord>> {
    let sys = &bip.left;
    let w = form_matrix(bip, phi);
    let mut out = Vec::new();
    let dyn_ok = is_dynamically_faithful(bip, phi, Slot::Left)
        && is_dynamically_faithful(bip, phi, Slot::Right);
    let prep_ok = matches!(
        is_preparationally_faithful(bip, phi, Slot::Left, rng),
        Ok(true)
    );
    out.push(CheckRecord::new(
        "prep-implies-dyn",
        "a preparationally faithful state is dynamically faithful",
        !prep_ok || dyn_ok,
        0.0,
        format!("preparationally faithful: {prep_ok}, dynamically faithful: {dyn_ok}"),
    ));
    if !dyn_ok {
        out.push(CheckRecord::not_applicable(
            "transformation-state-isomorphism",
            "transformations are cone-isomorphic to joint states",
            "state is not dynamically faithful",
        ));
        out.push(CheckRecord::not_applicable(
            "weak-self-duality",
            "effects are cone-isomorphic to states",
            "state is not dynamically faithful",
        ));
        return Ok(out);
    }
    let (iso, detail) = transformation_state_isomorphism(bip, phi, rng)?;
    out.push(CheckRecord::new(
        "transformation-state-isomorphism",
        "transformations are cone-isomorphic to joint states",
        iso,
        0.0,
        detail,
    ));
    let weak = check_cone_isomorphism(
        &w.transpose(),
        &sys.effect_cone,
        &sys.state_cone,
        samples,
        rng,
    )?;
    out.push(CheckRecord::new(
        "weak-self-duality",
        "effects are cone-isomorphic to states",
        weak,
        0.0,
        "a -> Phi(a, .) checked on generators of both cones",
    ));
    // Atomic transformations and only those give pure outputs.
    let mut probes: Vec<Transformation> = match sys.effect_cone.backend() {
        Backend::Polyhedral(_) => sys.atomic_rays()?,
        Backend::Psd(emb) => (0..samples.min(PSD_SAMPLES))
            .map(|_| sys.kraus_map(&[ginibre(emb.d(), emb.d(), !emb.is_real(), rng)]))
            .collect::<std::result::Result<_, _>>()?,
    };
    probes.push(Transformation::identity(sys.dim));
    for _ in 0..samples.min(16) {
        probes.push(sys.random_physical(rng));
    }
    let mut mismatches = 0;
    for t in &probes {
        let out_state = vec_rows(&apply_local(&w, &t.matrix, Slot::Left));
        if sys.is_atomic(t)? != bip.state_cone().is_extremal(&out_state)? {
            mismatches += 1;
        }
    }
    out.push(CheckRecord::new(
        "atomic-iff-pure-output",
        "a local transformation on the faithful state gives a pure output iff it is atomic",
        mismatches == 0,
        mismatches as f64,
        format!(
            "{} transformations probed, {mismatches} mismatches",
            probes.len()
        ),
    ));
    let (d1, d2) = bip.dims();
    out.push(CheckRecord::new(
        "dimension-bound",
        "a faithful state forces the first system to be at least as large as the second",
        d1 >= d2,
        0.0,
        format!("dimensions {d1} and {d2}"),
    ));
    Ok(out)
}

/// Checks of the consequences of a symmetric pure preparationally faithful state: atomic
/// identity, invariance of `chi` under transposed channels, ensemble decompositions of `chi`
/// from arbitrary observables, and internality of `chi`.
pub fn faithful_consequence_checks<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    phi: &RVec,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<CheckRecord>> {
    let sys = &bip.left;
    let chi_v = chi(bip, phi);
    let mut out = Vec::new();
    let id_atomic = sys.is_atomic(&Transformation::identity(sys.dim))?;
    out.push(CheckRecord::new(
        "identity-atomic",
        "the identity transformation is atomic",
        id_atomic,
        0.0,
        if id_atomic {
            "identity spans an extremal ray of the transformation cone".to_string()
        } else {
            "identity is refinable".to_string()
        },
    ));
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let t = sys.random_deterministic(rng);
        let tp = transpose(bip, phi, &t)?;
        worst = worst.max((tp.on_state(&chi_v) - &chi_v).amax());
    }
    let tol = sys.tolerance().max(1e-12) * 10.0;
    out.push(CheckRecord::new(
        "chi-transpose-invariant",
        "the marginal of the faithful state is invariant under transposed channels",
        worst <= tol,
        worst,
        format!("{samples} random deterministic transformations"),
    ));
    // Two observables: the reference observable and the effects of a random channel's
    // images of it.
    let w = form_matrix(bip, phi);
    let second: Vec<RVec> = {
        let t = sys.random_deterministic(rng);
        sys.reference_observable
            .iter()
            .map(|l| t.on_effect(l))
            .collect()
    };
    let mut ens_res: f64 = 0.0;
    let mut ens_ok = true;
    for obs in [&sys.reference_observable, &second] {
        let total = obs
            .iter()
            .fold(RVec::zeros(sys.dim), |acc, a| acc + w.tr_mul(a));
        ens_res = ens_res.max((total - &chi_v).amax());
        for a in obs.iter() {
            ens_ok &= sys.state_cone.member(&w.tr_mul(a))?;
        }
    }
    out.push(CheckRecord::new(
        "ensemble-decompositions",
        "every observable steers an ensemble decomposition of the marginal",
        ens_ok && ens_res <= tol,
        ens_res,
        "reference observable and a transformed copy",
    ));
    let mut margin = f64::INFINITY;
    for v in sys.state_vertices() {
        margin = margin.min(sys.state_cone.max_scale(&chi_v, v)?);
    }
    out.push(CheckRecord::new(
        "chi-internal",
        "the marginal of the faithful state is internal",
        margin > tol,
        margin,
        "smallest weight of an extremal state removable from chi",
    ));
    Ok(out)
}

/// Residual of `Phi(a, b o T) = Phi(a o T', b)` on the reference observable.
pub fn transpose_defining_residual(
    bip: &BipartiteSystem,
    phi: &RVec,
    t: &Transformation,
) -> Result<f64> {
    let w = form_matrix(bip, phi);
    let tp = transpose(bip, phi, t)?;
    let l = &bip.left.reference_observable;
    let mut worst: f64 = 0.0;
    for a in l {
        for b in l {
            let lhs = a.dot(&(&w * t.on_effect(b)));
            let rhs = tp.on_effect(a).dot(&(&w * b));
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// `(T (x) I) Phi` as a joint state vector.
pub fn local_output(bip: &BipartiteSystem, phi: &RVec, t: &Transformation) -> RVec {
    local(t, Slot::Left, bip.right.dim).on_state(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{make_classical, make_gbit, make_quantum};
    use crate::linalg::{c, cmax_abs, kron_vec, max_abs_diff};
    use crate::report::Status;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(21)
    }

    fn qubit() -> (Theory, BipartiteSystem, RVec) {
        let t = make_quantum(2).unwrap();
        let b = t.composite().unwrap();
        let phi = t.designated_phi.clone().unwrap();
        (t, b, phi)
    }

    fn unitary(theta: f64, phase: f64) -> CMat {
        let (s, co) = theta.sin_cos();
        let p = Complex64::from_polar(1.0, phase);
        CMat::from_row_slice(2, 2, &[c(co), -p.conj() * s, p * s, c(co)])
    }

    fn hs_basis(n: usize) -> Vec<RVec> {
        (0..n)
            .map(|k| RVec::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))
            .collect()
    }

    #[test]
    fn dynamical_faithfulness() {
        let (_, b, phi) = qubit();
        assert!(is_dynamically_faithful(&b, &phi, Slot::Left));
        assert!(is_dynamically_faithful(&b, &phi, Slot::Right));
        let mixed = RVec::from_column_slice(&[1.0, 0.0, 0.0, 0.0]) / 2f64.sqrt();
        assert!(!is_dynamically_faithful(
            &b,
            &kron_vec(&mixed, &mixed),
            Slot::Left
        ));
        let cl = make_classical(3).unwrap();
        let cb = cl.composite().unwrap();
        assert!(is_dynamically_faithful(
            &cb,
            cl.designated_phi.as_ref().unwrap(),
            Slot::Left
        ));
    }

    #[test]
    fn preparational_faithfulness() {
        let mut r = rng();
        let (_, b, phi) = qubit();
        assert!(is_preparationally_faithful(&b, &phi, Slot::Left, &mut r).unwrap());
        let cl = make_classical(2).unwrap();
        let cb = cl.composite().unwrap();
        let cphi = cl.designated_phi.clone().unwrap();
        assert!(is_preparationally_faithful(&cb, &cphi, Slot::Left, &mut r).unwrap());
        assert!(is_preparationally_faithful(&cb, &cphi, Slot::Right, &mut r).unwrap());
        let g = make_gbit().unwrap();
        let gb = g.composite().unwrap();
        let centre = RVec::from_column_slice(&[0.0, 0.0, 1.0]);
        let product = kron_vec(&centre, &centre);
        assert!(!is_preparationally_faithful(&gb, &product, Slot::Left, &mut r).unwrap());
        // Product states of a qubit lie off the range of the local map.
        let mixed = RVec::from_column_slice(&[1.0, 0.0, 0.0, 0.0]) / 2f64.sqrt();
        assert!(
            !is_preparationally_faithful(&b, &kron_vec(&mixed, &mixed), Slot::Left, &mut r)
                .unwrap()
        );
    }

    #[test]
    fn pfaith_search() {
        let mut r = rng();
        let (t, b, _) = qubit();
        let rep = find_pfaith_state(&t, &b, &mut r).unwrap().unwrap();
        assert!(rep.satisfies_pfaith());
        assert_eq!(rep.dyn_faithful, [true, true]);
        let g = make_gbit().unwrap();
        let gb = g.composite().unwrap();
        let rep = find_pfaith_state(&g, &gb, &mut r)
            .unwrap()
            .expect("gbit candidate");
        assert!(rep.satisfies_pfaith());
        // The candidate is a PR box: every fiducial correlator is +-1.
        let w = form_matrix(&gb, &rep.phi);
        for i in 0..2 {
            for j in 0..2 {
                assert!((w[(i, j)].abs() - 1.0).abs() < 1e-9);
            }
        }
        let cl = make_classical(2).unwrap();
        let cb = cl.composite().unwrap();
        assert!(find_pfaith_state(&cl, &cb, &mut r).unwrap().is_none());
        let crep = faithful_report(&cb, cl.designated_phi.as_ref().unwrap(), &mut r).unwrap();
        assert!(!crep.pure && crep.symmetric && crep.prep_faithful == [true, true]);
    }

    #[test]
    fn transpose_examples() {
        let (t, b, phi) = qubit();
        let id = Transformation::identity(4);
        assert!(max_abs_diff(&transpose(&b, &phi, &id).unwrap().matrix, &id.matrix) < 1e-12);
        let u = unitary(0.4, 1.1);
        let tu = t.system.kraus_map(std::slice::from_ref(&u)).unwrap();
        // State action rho -> U^T rho conj(U), i.e. Kraus operator U^T.
        let expected = t.system.kraus_map(&[u.transpose()]).unwrap();
        let got = transpose(&b, &phi, &tu).unwrap();
        assert!(max_abs_diff(&got.matrix, &expected.matrix) < 1e-12);
        let mixed = RVec::from_column_slice(&[1.0, 0.0, 0.0, 0.0]) / 2f64.sqrt();
        assert_eq!(
            transpose(&b, &kron_vec(&mixed, &mixed), &id),
            Err(FaithfulError::NotFaithful)
        );
    }

    #[test]
    fn jordan_forms() {
        let cl = make_classical(3).unwrap();
        let cb = cl.composite().unwrap();
        let j = jordan_scalar_product(
            &cb,
            cl.designated_phi.as_ref().unwrap(),
            &cl.system.reference_observable,
        )
        .unwrap();
        assert!(max_abs_diff(&j.gram, &(RMat::identity(3, 3) / 3.0)) < 1e-12);
        assert_eq!(j.signature, (3, 0));
        assert!(max_abs_diff(&j.involution, &RMat::identity(3, 3)) < 1e-12);
        let (t, b, phi) = qubit();
        // Signature oracle: Sylvester's law, the sign pattern of W itself.
        let w = form_matrix(&b, &phi);
        let ev = w.clone().symmetric_eigen().eigenvalues;
        let oracle = (
            ev.iter().filter(|&&x| x > 1e-9).count(),
            ev.iter().filter(|&&x| x < -1e-9).count(),
        );
        assert_eq!(oracle, (3, 1));
        for basis in [t.system.reference_observable.clone(), hs_basis(4)] {
            let j = jordan_scalar_product(&b, &phi, &basis).unwrap();
            assert_eq!(j.signature, oracle);
            assert!(max_abs_diff(&(&j.involution * &j.involution), &RMat::identity(4, 4)) < 1e-10);
            assert!(
                max_abs_diff(
                    &(&j.native_involution * &j.native_involution),
                    &RMat::identity(4, 4)
                ) < 1e-10
            );
        }
        let mixed = RVec::from_column_slice(&[1.0, 0.0, 0.0, 0.0]) / 2f64.sqrt();
        assert!(matches!(
            jordan_scalar_product(&b, &kron_vec(&mixed, &mixed), &hs_basis(4)),
            Err(FaithfulError::DegenerateForm(_))
        ));
    }

    #[test]
    fn adjoint_examples() {
        let (t, b, phi) = qubit();
        let j = jordan_scalar_product(&b, &phi, &hs_basis(4)).unwrap();
        let id = CMat::identity(4, 4);
        assert!(cmax_abs(&(adjoint(&b, &phi, &j, &id).unwrap() - &id)) < 1e-12);
        let u = unitary(0.7, -0.3);
        let tu = complexify(&t.system.kraus_map(std::slice::from_ref(&u)).unwrap().matrix);
        let expected = complexify(&t.system.kraus_map(&[u.adjoint()]).unwrap().matrix);
        assert!(cmax_abs(&(adjoint(&b, &phi, &j, &tu).unwrap() - expected)) < 1e-12);
    }

    #[test]
    fn suites_on_fixtures() {
        let mut r = rng();
        let (_, b, phi) = qubit();
        let recs = faithful_state_checks(&b, &phi, 40, &mut r).unwrap();
        assert!(recs.iter().all(|x| x.passed()), "{recs:#?}");
        let recs = faithful_consequence_checks(&b, &phi, 40, &mut r).unwrap();
        assert!(recs.iter().all(|x| x.passed()), "{recs:#?}");

        let cl = make_classical(3).unwrap();
        let cb = cl.composite().unwrap();
        let cphi = cl.designated_phi.clone().unwrap();
        let recs = faithful_state_checks(&cb, &cphi, 40, &mut r).unwrap();
        let iso = recs
            .iter()
            .find(|x| x.name == "transformation-state-isomorphism")
            .unwrap();
        assert_eq!(iso.status, Status::Pass);
        let recs = faithful_consequence_checks(&cb, &cphi, 40, &mut r).unwrap();
        let id = recs.iter().find(|x| x.name == "identity-atomic").unwrap();
        assert_eq!(id.status, Status::Fail);
        assert_eq!(id.detail, "identity is refinable");

        let g = make_gbit().unwrap();
        let gb = g.composite().unwrap();
        let gphi = find_pfaith_state(&g, &gb, &mut r).unwrap().unwrap().phi;
        let recs = faithful_state_checks(&gb, &gphi, 40, &mut r).unwrap();
        let weak = recs.iter().find(|x| x.name == "weak-self-duality").unwrap();
        assert_eq!(weak.status, Status::Pass);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn transpose_identities(seed in any::<u64>()) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (t, b, phi) = qubit();
            let g = make_gbit().unwrap();
            let gb = g.composite().unwrap();
            let gphi = find_pfaith_state(&g, &gb, &mut r).unwrap().unwrap().phi;
            for (sys, bip, p) in [(&t.system, &b, &phi), (&g.system, &gb, &gphi)] {
                let x = sys.random_physical(&mut r);
                let y = sys.random_physical(&mut r);
                let xp = transpose(bip, p, &x).unwrap();
                let yp = transpose(bip, p, &y).unwrap();
                prop_assert!(max_abs_diff(&transpose(bip, p, &xp).unwrap().matrix, &x.matrix) < 1e-9);
                let lhs = transpose(bip, p, &x.then(&y)).unwrap();
                prop_assert!(max_abs_diff(&lhs.matrix, &yp.then(&xp).matrix) < 1e-9);
                prop_assert!(transpose_defining_residual(bip, p, &x).unwrap() < 1e-9);
                let j = jordan_scalar_product(bip, p, &sys.reference_observable).unwrap();
                let xc = complexify(&x.matrix) + complexify(&y.matrix) * crate::linalg::I;
                let yc = complexify(&y.matrix);
                let dd = adjoint(bip, p, &j, &adjoint(bip, p, &j, &xc).unwrap()).unwrap();
                prop_assert!(cmax_abs(&(dd - &xc)) < 1e-9);
                // (A B)^dag = B^dag A^dag in matrix products.
                let ab = adjoint(bip, p, &j, &(&xc * &yc)).unwrap();
                let ba = adjoint(bip, p, &j, &yc).unwrap() * adjoint(bip, p, &j, &xc).unwrap();
                prop_assert!(cmax_abs(&(ab - ba)) < 1e-9);
            }
        }
    }
}
