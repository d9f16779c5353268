//! Faithful effects, probabilistic teleportation and purification.
//!
//! With `Phi(a, b) = a^T W b` and a joint effect `F(w, z) = w^T F z`, the contraction
//! `F_23 Phi_12 Phi_34` is the slot-1/slot-4 state with matrix `W F W`. A faithful effect
//! solves `W F W = alpha W`, so `F` is a multiple of `W^{-1}`.

use rand::Rng;
use serde::Serialize;

use crate::composite::{marginal, BipartiteSystem, Provenance, Slot};
use crate::cone::{Backend, ConeError};
use crate::faithful::{chi, form_matrix, FaithfulError};
use crate::linalg::{
    c, eigh, kron_vec, lstsq, same_ray, spectral_map, unvec_rows, vec_rows, CMat, CVec, RMat, RVec,
};
use crate::lp::LinearProgram;
use crate::report::CheckRecord;
use crate::theory::{ginibre, System, TheoryError, Transformation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtrasError {
    #[error("the faithful-effect equations are inconsistent (residual {0:e})")]
    Inconsistent(f64),
    #[error(
        "alpha from the linear system ({solved}) disagrees with the contraction ({contracted})"
    )]
    AlphaMismatch { solved: f64, contracted: f64 },
    #[error("the faithful effect is not in the joint effect cone")]
    Infeasible,
    #[error("observable is not a complete joint test")]
    InvalidObservable,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Faithful(#[from] FaithfulError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

impl From<ConeError> for ExtrasError {
    fn from(e: ConeError) -> Self {
        ExtrasError::Theory(e.into())
    }
}

impl From<crate::lp::LpError> for ExtrasError {
    fn from(e: crate::lp::LpError) -> Self {
        ExtrasError::Theory(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ExtrasError>;

#[derive(Debug, Clone, Serialize)]
pub struct FaithfulEffectReport {
    /// The faithful effect `alpha * F_hat`, when it is an effect.
    pub f: Option<RVec>,
    /// Unnormalised solution `F_hat` of `W F W = W`.
    pub f_hat: RVec,
    pub alpha: f64,
    pub alpha_max: f64,
    pub feasible: bool,
    pub cone: Provenance,
}

/// Solves `(W (x) W^T) vec(F) = vec(W)` in the least-squares sense and scales the solution
/// to the largest multiple below `e (x) e`.
pub fn solve_faithful_effect(bip: &BipartiteSystem, phi: &RVec) -> Result<FaithfulEffectReport> {
    let w = form_matrix(bip, phi);
    let system = w.kronecker(&w.transpose());
    let rhs = vec_rows(&w);
    let (f_hat, residual) = lstsq(&system, &rhs, 1e-12);
    if residual > 1e-8 * rhs.norm().max(1.0) {
        return Err(ExtrasError::Inconsistent(residual));
    }
    let cone = bip.effect_cone();
    let unit = bip.unit_effect();
    let feasible = cone.member(&f_hat)?;
    let alpha_max = alpha_max(bip, phi)?;
    if !feasible {
        return Ok(FaithfulEffectReport {
            f: None,
            f_hat,
            alpha: 0.0,
            alpha_max,
            feasible,
            cone: bip.provenance,
        });
    }
    let alpha = cone.max_scale(unit, &f_hat)?;
    let f = &f_hat * alpha;
    let (d1, d2) = bip.dims();
    let e1 = &bip.left.unit_effect;
    let contracted = e1.dot(&(&w * unvec_rows(&f, d1, d2) * &w * e1));
    if (contracted - alpha).abs() > bip.system.tolerance().max(1e-12) * 100.0 {
        return Err(ExtrasError::AlphaMismatch {
            solved: alpha,
            contracted,
        });
    }
    Ok(FaithfulEffectReport {
        f: Some(f),
        f_hat,
        alpha,
        alpha_max,
        feasible,
        cone: bip.provenance,
    })
}

/// Largest `t` with `W A W = t W` for a joint effect `A` (`0 <= A <= e (x) e`). Polyhedral
/// composites solve an LP over the effect polytope; psd composites use the spectrum of
/// `W^{-1}` relative to the unit effect.
pub fn alpha_max(bip: &BipartiteSystem, phi: &RVec) -> Result<f64> {
    let w = form_matrix(bip, phi);
    let unit = bip.unit_effect();
    match bip.effect_cone().backend() {
        Backend::Polyhedral(_) => {
            let gens = bip.system.effect_rays();
            let n = unit.len();
            let (d1, d2) = bip.dims();
            let mut lp = LinearProgram::maximize();
            let t = lp.free(1.0);
            let below: Vec<usize> = gens.iter().map(|_| lp.nonneg(0.0)).collect();
            let above: Vec<usize> = gens.iter().map(|_| lp.nonneg(0.0)).collect();
            for k in 0..n {
                let mut terms: Vec<(usize, f64)> =
                    below.iter().zip(gens).map(|(&v, g)| (v, g[k])).collect();
                terms.extend(above.iter().zip(gens).map(|(&v, g)| (v, g[k])));
                lp.eq(&terms, unit[k]);
            }
            // (W A W)_rs = sum_{ij} W_ri A_ij W_js with A = sum_k below_k g_k.
            for r in 0..d1 {
                for s in 0..d2 {
                    let mut terms: Vec<(usize, f64)> = below
                        .iter()
                        .zip(gens)
                        .map(|(&v, g)| {
                            let a = unvec_rows(g, d1, d2);
                            (v, (w.row(r) * a * w.column(s))[(0, 0)])
                        })
                        .collect();
                    terms.push((t, -w[(r, s)]));
                    lp.eq(&terms, 0.0);
                }
            }
            Ok(lp.solve()?.objective)
        }
        Backend::Psd(emb) => {
            let inv = w
                .clone()
                .try_inverse()
                .ok_or_else(|| ExtrasError::Unsupported("singular faithful state".into()))?;
            let op = emb.synthesize(&vec_rows(&inv));
            let e = emb.synthesize(unit);
            let inv_half = spectral_map(&e, |x| 1.0 / x.sqrt());
            let (vals, _) = eigh(&(&inv_half * op * &inv_half));
            let (lo, hi) = (vals[0], vals[vals.len() - 1]);
            if hi <= 0.0 || lo < -bip.system.tolerance() * hi {
                Ok(0.0)
            } else {
                Ok(1.0 / hi)
            }
        }
    }
}

/// `F_23 omega_2 Phi_34`: success probability and normalised output on slot 4.
pub fn teleport(
    bip: &BipartiteSystem,
    report: &FaithfulEffectReport,
    phi: &RVec,
    omega: &RVec,
) -> Result<(f64, RVec)> {
    let f = report.f.as_ref().ok_or(ExtrasError::Infeasible)?;
    let (d1, d2) = bip.dims();
    let w = form_matrix(bip, phi);
    let out = w.tr_mul(&unvec_rows(f, d1, d2).tr_mul(omega));
    let p = out.dot(&bip.right.unit_effect);
    if p <= bip.system.tolerance() {
        return Err(TheoryError::ZeroProbability.into());
    }
    Ok((p, out / p))
}

/// Largest deviation of `sum_l (A_l)_23 omega_2 Phi_34` from `chi` over random states.
pub fn depolarize_check<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    phi: &RVec,
    observable: &[RVec],
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let total = observable
        .iter()
        .fold(RVec::zeros(bip.unit_effect().len()), |acc, a| acc + a);
    let tol = bip.system.tolerance() * 10.0;
    if (&total - bip.unit_effect()).amax() > tol {
        return Err(ExtrasError::InvalidObservable);
    }
    for a in observable {
        if !bip.system.is_effect(a)? {
            return Err(ExtrasError::InvalidObservable);
        }
    }
    let (d1, d2) = bip.dims();
    let w = form_matrix(bip, phi);
    let target = chi(bip, phi);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let omega = bip.left.random_state(rng);
        let sum = observable.iter().fold(RVec::zeros(d2), |acc, a| {
            acc + w.tr_mul(&unvec_rows(a, d1, d2).tr_mul(&omega))
        });
        worst = worst.max((sum - &target).amax());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct PurificationEntry {
    pub state: RVec,
    pub purifiable: bool,
    /// Marginal residual of the best candidate.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PurifyReport {
    pub entries: Vec<PurificationEntry>,
    pub all_purifiable: bool,
}

impl PurifyReport {
    pub fn failing(&self) -> impl Iterator<Item = &PurificationEntry> {
        self.entries.iter().filter(|e| !e.purifiable)
    }
}

/// States probed for purifiability: extremal states, their barycentre and a few
/// asymmetric mixtures of pairs.
pub fn purification_probes(sys: &System) -> Vec<RVec> {
    let verts = sys.state_vertices();
    let mut out: Vec<RVec> = verts.to_vec();
    let bary = verts.iter().fold(RVec::zeros(sys.dim), |acc, v| acc + v) / verts.len() as f64;
    out.push(bary);
    for k in 0..verts.len().min(4) {
        let j = (k + 1) % verts.len();
        if j != k {
            out.push(&verts[k] * 0.7 + &verts[j] * 0.3);
        }
    }
    out
}

/// For each probe state, looks for a pure joint state whose first marginal is
/// proportional to it: a scan of the extremal joint rays (polyhedral) or the spectral
/// purification `sum_i sqrt(p_i) |i>|i>` (psd).
pub fn check_purify(bip: &BipartiteSystem) -> Result<PurifyReport> {
    let sys = &bip.left;
    let probes = purification_probes(sys);
    let tol = sys.tolerance().max(1e-10) * 100.0;
    let mut entries = Vec::new();
    match bip.state_cone().backend() {
        Backend::Polyhedral(_) => {
            let rays = bip.state_cone().extremal_rays()?;
            let marginals: Vec<RVec> = rays.iter().map(|r| marginal(bip, r, Slot::Left)).collect();
            for w in probes {
                let hit = marginals
                    .iter()
                    .filter(|m| m.amax() > tol)
                    .any(|m| same_ray(m, &w, tol));
                entries.push(PurificationEntry {
                    state: w,
                    purifiable: hit,
                    residual: if hit { 0.0 } else { f64::INFINITY },
                });
            }
        }
        Backend::Psd(joint) => {
            let emb = sys
                .effect_cone
                .embedding()
                .ok_or(TheoryError::Backend("psd"))?;
            let d = emb.d();
            for w in probes {
                let rho = sys.state_cone.embedding().expect("psd").synthesize(&w);
                let (vals, vecs) = eigh(&crate::linalg::hermitian(&rho));
                let mut psi = CVec::zeros(d * d);
                for i in 0..d {
                    let v = vecs.column(i);
                    psi += v.kronecker(&v.map(|z| z.conj())) * c(vals[i].max(0.0).sqrt());
                }
                let omega_op = &psi * psi.adjoint();
                let omega = joint.coordinates(&omega_op);
                let residual = (marginal(bip, &omega, Slot::Left) - &w).amax();
                let pure = bip.state_cone().is_extremal(&omega)?;
                entries.push(PurificationEntry {
                    state: w,
                    purifiable: pure && residual <= tol,
                    residual,
                });
            }
        }
    }
    let all_purifiable = entries.iter().all(|e| e.purifiable);
    Ok(PurifyReport {
        entries,
        all_purifiable,
    })
}

/// Every extremal state is an atomic transformation applied to `chi`, and every extremal
/// effect is the effect of an atomic transformation. Skipped unless both a symmetric pure
/// preparationally faithful state and purifications exist.
pub fn purify_lemma_suite<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    phi: Option<&RVec>,
    purify: &PurifyReport,
    rng: &mut R,
) -> Result<Vec<CheckRecord>> {
    let names = [
        (
            "states-from-atomic",
            "every pure state is an atomic transformation of chi",
        ),
        (
            "effects-from-atomic",
            "every extremal effect is the effect of an atomic transformation",
        ),
    ];
    let phi = match phi {
        Some(p) if purify.all_purifiable => p,
        _ => {
            let why = if phi.is_none() {
                "no symmetric pure preparationally faithful state"
            } else {
                "some states have no purification"
            };
            return Ok(names
                .iter()
                .map(|(n, a)| CheckRecord::not_applicable(*n, *a, why))
                .collect());
        }
    };
    let sys = &bip.left;
    let chi_v = chi(bip, phi);
    let tol = sys.tolerance().max(1e-10) * 100.0;
    let (state_fail, effect_fail, probes) = match sys.effect_cone.backend() {
        Backend::Polyhedral(_) => {
            let atoms = sys.atomic_rays()?;
            let outputs: Vec<RVec> = atoms.iter().map(|t| t.on_state(&chi_v)).collect();
            let effects: Vec<RVec> = atoms.iter().map(|t| sys.effect_of(t)).collect();
            let sf = sys
                .state_vertices()
                .iter()
                .filter(|w| {
                    !outputs
                        .iter()
                        .any(|o| o.amax() > tol && same_ray(o, w, tol))
                })
                .count();
            let ef = sys
                .effect_rays()
                .iter()
                .filter(|g| {
                    !effects
                        .iter()
                        .any(|f| f.amax() > tol && same_ray(f, g, tol))
                })
                .count();
            (sf, ef, sys.state_vertices().len())
        }
        Backend::Psd(emb) => {
            let d = emb.d();
            let mut vectors = emb.grid_vectors();
            for _ in 0..16 {
                vectors.push(emb.random_vector(rng));
            }
            let phi0 = ginibre(d, 1, !emb.is_real(), rng).column(0).normalize();
            let (mut sf, mut ef) = (0, 0);
            for v in &vectors {
                let v = v.normalize();
                // State: K = sqrt(d) |v><phi0| maps chi = I/d to |v><v|.
                let k = (&v * phi0.adjoint()) * c((d as f64).sqrt());
                let t = sys.kraus_map(&[k])?;
                let target = emb.rank_one(&v);
                let state = sys.state_cone.embedding().expect("psd").rank_one(&v);
                let out = t.on_state(&chi_v);
                if !(sys.is_atomic(&t)? && same_ray(&out, &state, tol)) {
                    sf += 1;
                }
                // Effect: K = |phi0><v| has K^dag K = |v><v|.
                let k = &phi0 * v.adjoint();
                let t: Transformation = sys.kraus_map(&[k])?;
                if !(sys.is_atomic(&t)? && same_ray(&sys.effect_of(&t), &target, tol)) {
                    ef += 1;
                }
            }
            (sf, ef, vectors.len())
        }
    };
    Ok(vec![
        CheckRecord::new(
            names[0].0,
            names[0].1,
            state_fail == 0,
            state_fail as f64,
            format!("{probes} pure states probed, {state_fail} without an atomic preimage"),
        ),
        CheckRecord::new(
            names[1].0,
            names[1].1,
            effect_fail == 0,
            effect_fail as f64,
            format!("{effect_fail} extremal effects without an atomic preimage"),
        ),
    ])
}

/// Residual of `F o (A' (x) I) = F o (I (x) A)` for a transformation `A`, together with the
/// rank of `A -> F o (A' (x) I)` on the full matrix space.
pub fn complete_faithfulness(
    bip: &BipartiteSystem,
    phi: &RVec,
    f: &RVec,
    a: &Transformation,
) -> Result<(f64, usize)> {
    let (d1, d2) = bip.dims();
    let fm = unvec_rows(f, d1, d2);
    let ap = crate::faithful::transpose(bip, phi, a)?;
    let left = &ap.matrix * &fm;
    let right = &fm * a.matrix.transpose();
    let residual = (left - right).amax();
    let n = d1;
    let mut map = RMat::zeros(d1 * d2, n * n);
    for k in 0..n * n {
        let mut e = RMat::zeros(n, n);
        e[(k / n, k % n)] = 1.0;
        map.set_column(k, &vec_rows(&(e * &fm)));
    }
    Ok((residual, crate::linalg::rank(&map, 1e-10)))
}

/// The `d^2` Bell projectors of a `d`-level quantum composite as joint effects.
pub fn bell_observable(bip: &BipartiteSystem) -> Result<Vec<RVec>> {
    let joint = bip
        .effect_cone()
        .embedding()
        .ok_or(TheoryError::Backend("psd"))?;
    let d = bip
        .left
        .effect_cone
        .embedding()
        .ok_or(TheoryError::Backend("psd"))?
        .d();
    let omega = num_complex::Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / d as f64);
    let mut out = Vec::new();
    for a in 0..d {
        for b in 0..d {
            let mut psi = CVec::zeros(d * d);
            for k in 0..d {
                psi[k * d + (k + a) % d] = omega.powu((b * k) as u32) * c(1.0 / (d as f64).sqrt());
            }
            let p: CMat = &psi * psi.adjoint();
            out.push(joint.coordinates(&p));
        }
    }
    Ok(out)
}

/// Products of the reference observables of the two factors.
pub fn product_observable(bip: &BipartiteSystem) -> Vec<RVec> {
    let mut out = Vec::new();
    for l in &bip.left.reference_observable {
        for m in &bip.right.reference_observable {
            out.push(kron_vec(l, m));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{make_classical, make_gbit, make_quantum, Theory};
    use crate::faithful::find_pfaith_state;
    use crate::report::Status;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(t: &Theory) -> (BipartiteSystem, RVec) {
        (t.composite().unwrap(), t.designated_phi.clone().unwrap())
    }

    #[test]
    fn qubit_faithful_effect() {
        let q = make_quantum(2).unwrap();
        let (b, phi) = setup(&q);
        let rep = solve_faithful_effect(&b, &phi).unwrap();
        assert!(rep.feasible);
        assert!((rep.alpha - 0.25).abs() < 1e-12);
        assert!((rep.alpha_max - 0.25).abs() < 1e-12);
        // The Bell projector has the same coordinates as the Bell state.
        assert!((rep.f.as_ref().unwrap() - &phi).amax() < 1e-12);
    }

    #[test]
    fn classical_faithful_effect() {
        for d in [2, 3] {
            let cl = make_classical(d).unwrap();
            let (b, phi) = setup(&cl);
            let rep = solve_faithful_effect(&b, &phi).unwrap();
            assert!(rep.feasible);
            assert!((rep.alpha - 1.0 / d as f64).abs() < 1e-9);
            assert!((rep.alpha_max - 1.0 / d as f64).abs() < 1e-9);
            let mut expected = RVec::zeros(d * d);
            for l in 0..d {
                expected[l * d + l] = 1.0;
            }
            assert!((rep.f.unwrap() - expected).amax() < 1e-9);
        }
    }

    #[test]
    fn boxworld_has_no_faithful_effect() {
        let g = make_gbit().unwrap();
        let b = g.composite().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = find_pfaith_state(&g, &b, &mut rng).unwrap().unwrap().phi;
        let rep = solve_faithful_effect(&b, &phi).unwrap();
        assert!(!rep.feasible);
        assert!(rep.f.is_none());
        assert_eq!(rep.cone, Provenance::MinTensorDefault);
        assert!(rep.alpha_max.abs() < 1e-9);
        assert!(matches!(
            teleport(&b, &rep, &phi, &phi.rows(0, 3).into_owned()),
            Err(ExtrasError::Infeasible)
        ));
    }

    #[test]
    fn teleport_examples() {
        let cl = make_classical(2).unwrap();
        let (b, phi) = setup(&cl);
        let rep = solve_faithful_effect(&b, &phi).unwrap();
        let delta = RVec::from_column_slice(&[1.0, 0.0]);
        let (p, out) = teleport(&b, &rep, &phi, &delta).unwrap();
        assert!((p - 0.5).abs() < 1e-9);
        assert!((out - delta).amax() < 1e-9);
    }

    #[test]
    fn depolarizing_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = make_quantum(2).unwrap();
        let (b, phi) = setup(&q);
        let bell = bell_observable(&b).unwrap();
        assert_eq!(bell.len(), 4);
        assert!(depolarize_check(&b, &phi, &bell, 5, &mut rng).unwrap() < 1e-12);
        let cl = make_classical(3).unwrap();
        let (cb, cphi) = setup(&cl);
        let obs = product_observable(&cb);
        assert!(depolarize_check(&cb, &cphi, &obs, 5, &mut rng).unwrap() < 1e-12);
        assert_eq!(
            depolarize_check(&cb, &cphi, &obs[..3], 5, &mut rng),
            Err(ExtrasError::InvalidObservable)
        );
    }

    #[test]
    fn purification() {
        let q = make_quantum(2).unwrap();
        let (b, phi) = setup(&q);
        let rep = check_purify(&b).unwrap();
        assert!(rep.all_purifiable);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let suite = purify_lemma_suite(&b, Some(&phi), &rep, &mut rng).unwrap();
        assert!(suite.iter().all(|r| r.passed()), "{suite:#?}");

        let cl = make_classical(2).unwrap();
        let (cb, cphi) = setup(&cl);
        let rep = check_purify(&cb).unwrap();
        assert!(!rep.all_purifiable);
        // Vertices are purified by products; the barycentre is not.
        assert!(rep.entries[0].purifiable && rep.entries[1].purifiable);
        assert!(!rep.entries[2].purifiable);
        let suite = purify_lemma_suite(&cb, Some(&cphi), &rep, &mut rng).unwrap();
        assert!(suite.iter().all(|r| r.status == Status::NotApplicable));

        let g = make_gbit().unwrap();
        let gb = g.composite().unwrap();
        let rep = check_purify(&gb).unwrap();
        assert_eq!(rep.entries.len(), 4 + 1 + 4);
        // PR boxes purify the centre of the square.
        assert!(rep.entries[4].purifiable);
    }

    #[test]
    fn purification_with_unnormalised_basis() {
        use crate::cone::{Cone, PsdEmbedding};
        use crate::linalg::{c, CMat, I};
        use crate::theory::System;
        let z = c(0.0);
        let one = c(1.0);
        let paulis = vec![
            CMat::from_row_slice(2, 2, &[one, z, z, one]),
            CMat::from_row_slice(2, 2, &[z, one, one, z]),
            CMat::from_row_slice(2, 2, &[z, -I, I, z]),
            CMat::from_row_slice(2, 2, &[one, z, z, -one]),
        ];
        let cone = Cone::psd(PsdEmbedding::new(2, paulis.clone()).unwrap(), 1e-9);
        let reference = [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
        .iter()
        .map(|n| RVec::from_column_slice(&[0.25, n[0] / 8.0, n[1] / 8.0, n[2] / 8.0]))
        .collect();
        let unit = RVec::from_column_slice(&[1.0, 0.0, 0.0, 0.0]);
        let sys = System::new("pauli", cone, unit, reference, vec![]).unwrap();
        let joint: Vec<CMat> = paulis
            .iter()
            .flat_map(|a| paulis.iter().map(move |b| a.kronecker(b)))
            .collect();
        let joint = Cone::psd(PsdEmbedding::new(4, joint).unwrap(), 1e-9);
        let bip = crate::composite::compose(&sys, &sys, Some(joint)).unwrap();
        let rep = check_purify(&bip).unwrap();
        assert!(rep.all_purifiable, "{rep:?}");
    }

    #[test]
    fn complete_faithfulness_of_the_bell_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = make_quantum(2).unwrap();
        let (b, phi) = setup(&q);
        let f = solve_faithful_effect(&b, &phi).unwrap().f.unwrap();
        for _ in 0..10 {
            let a = q.system.random_physical(&mut rng);
            let (res, rank) = complete_faithfulness(&b, &phi, &f, &a).unwrap();
            assert!(res < 1e-12);
            assert_eq!(rank, 16);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn teleportation_is_state_independent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in [make_quantum(2).unwrap(), make_classical(3).unwrap()] {
                let (b, phi) = setup(&t);
                let rep = solve_faithful_effect(&b, &phi).unwrap();
                let omega = t.system.random_state(&mut rng);
                let (p, out) = teleport(&b, &rep, &phi, &omega).unwrap();
                prop_assert!((p - rep.alpha).abs() < 1e-12);
                prop_assert!((out - omega).amax() < 1e-9);
            }
        }
    }
}
