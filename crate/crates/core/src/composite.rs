//! Bipartite composition of systems.
//!
//! Joint effect coordinates are Kronecker products, index `i * dim_right + j`. By default
//! the joint effect cone is the minimal tensor product (generated by products of
//! extremal effects), whose dual is the no-signalling state cone. An explicit effect cone
//! may be supplied instead, as done for quantum systems. Multipartite systems are built
//! by composing left-associatively.

use rand::Rng;
use serde::Serialize;

use crate::cone::{Backend, Cone};
use crate::linalg::{kron_vec, rank_of, unvec_rows, vec_rows, RMat, RVec};
use crate::theory::{Result, System, TheoryError, Transformation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    MinTensorDefault,
    ExplicitOverride,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct BipartiteSystem {
    pub left: System,
    pub right: System,
    pub provenance: Provenance,
    /// The joint system with product unit effect, product reference observable and local
    /// transformation generators.
    pub system: System,
}

impl BipartiteSystem {
    pub fn effect_cone(&self) -> &Cone {
        &self.system.effect_cone
    }

    pub fn state_cone(&self) -> &Cone {
        &self.system.state_cone
    }

    pub fn unit_effect(&self) -> &RVec {
        &self.system.unit_effect
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.left.dim, self.right.dim)
    }

    /// Reshapes a joint vector into the `dim_left x dim_right` matrix `W` with
    /// `Omega(a, b) = a^T W b`.
    pub fn as_matrix(&self, v: &RVec) -> RMat {
        unvec_rows(v, self.left.dim, self.right.dim)
    }

    pub fn from_matrix(&self, w: &RMat) -> RVec {
        vec_rows(w)
    }
}

/// Composes two systems, using `override_cone` as joint effect cone when given.
pub fn compose(s1: &System, s2: &System, override_cone: Option<Cone>) -> Result<BipartiteSystem> {
    let tol = s1.tolerance().min(s2.tolerance());
    let n = s1.dim * s2.dim;
    let (effect_cone, provenance) = match override_cone {
        Some(cone) => {
            if cone.ambient_dim() != n {
                return Err(TheoryError::DimensionMismatch {
                    expected: n,
                    found: cone.ambient_dim(),
                });
            }
            for g in s1.effect_rays() {
                for h in s2.effect_rays() {
                    if !cone.member(&kron_vec(g, h))? {
                        return Err(TheoryError::InvalidSystem(
                            "override effect cone misses a product of local effects".into(),
                        ));
                    }
                }
            }
            (cone, Provenance::ExplicitOverride)
        }
        None => {
            if !(s1.effect_cone.is_polyhedral() && s2.effect_cone.is_polyhedral()) {
                return Err(TheoryError::InvalidSystem(
                    "the minimal tensor product is only available for polyhedral cones; \
                     supply an explicit joint effect cone"
                        .into(),
                ));
            }
            let mut gens = Vec::new();
            for g in s1.effect_rays() {
                for h in s2.effect_rays() {
                    gens.push(kron_vec(g, h));
                }
            }
            (Cone::polyhedral(gens, tol)?, Provenance::MinTensorDefault)
        }
    };
    let state_cone = effect_cone.dual()?;
    if let (Backend::Polyhedral(_), Backend::Polyhedral(_)) =
        (s1.state_cone.backend(), s2.state_cone.backend())
    {
        for w in s1.state_vertices() {
            for z in s2.state_vertices() {
                if !state_cone.member(&kron_vec(w, z))? {
                    return Err(TheoryError::InvalidSystem(
                        "joint state cone misses a product of local states".into(),
                    ));
                }
            }
        }
    }
    let unit = kron_vec(&s1.unit_effect, &s2.unit_effect);
    let mut reference = Vec::with_capacity(n);
    for l in &s1.reference_observable {
        for m in &s2.reference_observable {
            reference.push(kron_vec(l, m));
        }
    }
    let mut generators = Vec::new();
    for t in &s1.transformation_generators {
        generators.push(local(t, Slot::Left, s2.dim));
    }
    for t in &s2.transformation_generators {
        generators.push(local(t, Slot::Right, s1.dim));
    }
    let system = System::with_state_cone(
        format!("{}⊙{}", s1.name, s2.name),
        effect_cone,
        state_cone,
        unit,
        reference,
        generators,
    )?;
    Ok(BipartiteSystem {
        left: s1.clone(),
        right: s2.clone(),
        provenance,
        system,
    })
}

/// Local action `T (x) I` (left slot) or `I (x) T` (right slot).
pub fn local(t: &Transformation, slot: Slot, other_dim: usize) -> Transformation {
    let id = RMat::identity(other_dim, other_dim);
    match slot {
        Slot::Left => Transformation::new(t.matrix.kronecker(&id)),
        Slot::Right => Transformation::new(id.kronecker(&t.matrix)),
    }
}

/// Marginal on `slot`, obtained by applying the unit effect on the other slot.
pub fn marginal(bip: &BipartiteSystem, omega: &RVec, slot: Slot) -> RVec {
    let w = bip.as_matrix(omega);
    match slot {
        Slot::Left => w * &bip.right.unit_effect,
        Slot::Right => w.tr_mul(&bip.left.unit_effect),
    }
}

/// Exchanges the two factors of a joint vector of a `d1 x d2` composite.
pub fn swap(v: &RVec, d1: usize, d2: usize) -> RVec {
    vec_rows(&unvec_rows(v, d1, d2).transpose())
}

#[derive(Debug, Clone, Serialize)]
pub struct NoSignalingReport {
    pub samples: usize,
    pub max_residual: f64,
}

/// Applies random deterministic transformations on one side and measures the change of
/// the marginal on the other side.
pub fn check_no_signaling<R: Rng + ?Sized>(
    bip: &BipartiteSystem,
    samples: usize,
    rng: &mut R,
) -> Result<NoSignalingReport> {
    let (d1, d2) = bip.dims();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let omega = bip.system.random_state(rng);
        let d = local(&bip.right.random_deterministic(rng), Slot::Right, d1);
        let moved = d.on_state(&omega);
        worst = worst
            .max((marginal(bip, &moved, Slot::Left) - marginal(bip, &omega, Slot::Left)).amax());
        let d = local(&bip.left.random_deterministic(rng), Slot::Left, d2);
        let moved = d.on_state(&omega);
        worst = worst
            .max((marginal(bip, &moved, Slot::Right) - marginal(bip, &omega, Slot::Right)).amax());
    }
    Ok(NoSignalingReport {
        samples,
        max_residual: worst,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalObservabilityReport {
    pub effect_span_dim: usize,
    pub product_span_dim: usize,
    pub expected: usize,
    pub holds: bool,
}

/// Compares the dimension of the joint effect span and of the span of local products with
/// `dim_left * dim_right`.
pub fn check_local_observability(bip: &BipartiteSystem) -> Result<LocalObservabilityReport> {
    let expected = bip.left.dim * bip.right.dim;
    let effect_span_dim = match bip.effect_cone().backend() {
        Backend::Polyhedral(g) => rank_of(g, 1e-9),
        Backend::Psd(e) => e.basis().len(),
    };
    let products: Vec<RVec> = bip
        .left
        .reference_observable
        .iter()
        .flat_map(|l| {
            bip.right
                .reference_observable
                .iter()
                .map(move |m| kron_vec(l, m))
        })
        .collect();
    let product_span_dim = rank_of(&products, 1e-9);
    Ok(LocalObservabilityReport {
        effect_span_dim,
        product_span_dim,
        expected,
        holds: effect_span_dim == expected && product_span_dim == expected,
    })
}

/// Physicality of `t` on the left slot when a copy of the right system is attached, i.e.
/// `T (x) I` maps the joint effect cone into itself.
pub fn is_physical_with_ancilla(bip: &BipartiteSystem, t: &Transformation) -> Result<bool> {
    bip.system.is_physical(&local(t, Slot::Left, bip.right.dim))
}
