//! Single systems of an operational probabilistic theory.
//!
//! Effects live in `R^dim`; states are stored in dual coordinates so that the pairing
//! `omega(a)` is the dot product. A transformation is a real matrix `M` acting on effects
//! from the right, `a o T = M a`; its action on states is `omega -> M^T omega`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::cone::{check_cone_isomorphism, Backend, Cone, ConeError, DEFAULT_SAMPLES};
use crate::dd::rays_of_halfspaces;
use crate::linalg::{
    c, eigh, hermitian, matrix_unit, normalized, rank, rank_c, rank_of, spectral_map,
    trace_product, vec_rows, CMat, RMat, RVec,
};
use crate::lp::{LinearProgram, LpError};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TheoryError {
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid test: {0}")]
    InvalidTest(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("pairing value {0} lies outside [0, 1]")]
    PairingOutOfRange(f64),
    #[error("conditioning on an event of zero probability")]
    ZeroProbability,
    #[error("tests not informationally complete")]
    NotInformationallyComplete,
    #[error("test-compatibility violated: the summed effect exceeds the unit effect")]
    TestCompatibility,
    #[error("negative scale factor {0}")]
    NegativeScale(f64),
    #[error("operation requires a {0} backend")]
    Backend(&'static str),
}

impl From<LpError> for TheoryError {
    fn from(e: LpError) -> Self {
        TheoryError::Cone(e.into())
    }
}

pub type Result<T> = std::result::Result<T, TheoryError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Transformation {
    pub matrix: RMat,
}

impl Transformation {
    pub fn new(matrix: RMat) -> Self {
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(RMat::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn on_effect(&self, a: &RVec) -> RVec {
        &self.matrix * a
    }

    pub fn on_state(&self, omega: &RVec) -> RVec {
        self.matrix.tr_mul(omega)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Transformation) -> Transformation {
        Transformation::new(&self.matrix * &next.matrix)
    }
}

/// A collection of events whose effects sum to the unit effect.
#[derive(Debug, Clone, PartialEq)]
pub struct Test {
    pub events: Vec<Transformation>,
}

#[derive(Debug, Clone)]
pub struct System {
    pub name: String,
    pub dim: usize,
    pub effect_cone: Cone,
    pub unit_effect: RVec,
    pub state_cone: Cone,
    pub reference_observable: Vec<RVec>,
    pub transformation_generators: Vec<Transformation>,
    effect_rays: Vec<RVec>,
    state_vertices: Vec<RVec>,
}

impl System {
    /// Validated system; the state cone is computed as the dual of the effect cone.
    pub fn new(
        name: impl Into<String>,
        effect_cone: Cone,
        unit_effect: RVec,
        reference_observable: Vec<RVec>,
        transformation_generators: Vec<Transformation>,
    ) -> Result<Self> {
        let state_cone = effect_cone.dual()?;
        Self::with_state_cone(
            name,
            effect_cone,
            state_cone,
            unit_effect,
            reference_observable,
            transformation_generators,
        )
    }

    /// Validated system with a precomputed state cone, which must be the dual of the
    /// effect cone.
    pub fn with_state_cone(
        name: impl Into<String>,
        effect_cone: Cone,
        state_cone: Cone,
        unit_effect: RVec,
        reference_observable: Vec<RVec>,
        transformation_generators: Vec<Transformation>,
    ) -> Result<Self> {
        let dim = effect_cone.ambient_dim();
        let tol = effect_cone.tolerance();
        if state_cone.ambient_dim() != dim || unit_effect.len() != dim {
            return Err(TheoryError::DimensionMismatch {
                expected: dim,
                found: unit_effect.len(),
            });
        }
        if unit_effect.amax() <= tol || !effect_cone.member(&unit_effect)? {
            return Err(TheoryError::InvalidSystem(
                "unit effect is zero or outside the effect cone".into(),
            ));
        }
        let effect_rays = match effect_cone.backend() {
            Backend::Polyhedral(_) => effect_cone.extremal_rays()?,
            Backend::Psd(_) => effect_cone.grid_extremals(),
        };
        let state_vertices: Vec<RVec> = match state_cone.backend() {
            Backend::Polyhedral(_) => state_cone.extremal_rays()?,
            Backend::Psd(_) => state_cone.grid_extremals(),
        }
        .into_iter()
        .map(|w| {
            let p = w.dot(&unit_effect);
            w / p
        })
        .collect();
        let system = Self {
            name: name.into(),
            dim,
            effect_cone,
            unit_effect,
            state_cone,
            reference_observable,
            transformation_generators,
            effect_rays,
            state_vertices,
        };
        system.validate()?;
        Ok(system)
    }

    fn validate(&self) -> Result<()> {
        let tol = self.tolerance();
        let l = &self.reference_observable;
        if l.len() != self.dim || l.iter().any(|x| x.len() != self.dim) {
            return Err(TheoryError::InvalidSystem(format!(
                "reference observable must contain {} effects of length {}",
                self.dim, self.dim
            )));
        }
        if rank_of(l, 1e-10) < self.dim {
            return Err(TheoryError::InvalidSystem(
                "reference observable is not linearly independent".into(),
            ));
        }
        let sum: RVec = l.iter().fold(RVec::zeros(self.dim), |acc, x| acc + x);
        if (&sum - &self.unit_effect).amax() > tol * 10.0 {
            return Err(TheoryError::InvalidSystem(
                "reference observable does not sum to the unit effect".into(),
            ));
        }
        for (i, x) in l.iter().enumerate() {
            if !self.is_effect(x)? {
                return Err(TheoryError::InvalidSystem(format!(
                    "reference effect {i} is not between 0 and the unit effect"
                )));
            }
        }
        for (i, t) in self.transformation_generators.iter().enumerate() {
            if t.matrix.nrows() != self.dim || t.matrix.ncols() != self.dim {
                return Err(TheoryError::DimensionMismatch {
                    expected: self.dim,
                    found: t.matrix.nrows(),
                });
            }
            if !self.is_physical(t)? {
                return Err(TheoryError::InvalidSystem(format!(
                    "transformation generator {i} is not physical"
                )));
            }
        }
        Ok(())
    }

    pub fn tolerance(&self) -> f64 {
        self.effect_cone.tolerance()
    }

    /// Extremal effect rays (polyhedral) or the rank-one grid (psd).
    pub fn effect_rays(&self) -> &[RVec] {
        &self.effect_rays
    }

    /// Normalised extremal states (polyhedral) or the normalised rank-one grid (psd).
    pub fn state_vertices(&self) -> &[RVec] {
        &self.state_vertices
    }

    fn check_len(&self, v: &RVec) -> Result<()> {
        if v.len() != self.dim {
            return Err(TheoryError::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `0 <= a <= e` in the effect-cone order.
    pub fn is_effect(&self, a: &RVec) -> Result<bool> {
        self.check_len(a)?;
        Ok(self.effect_cone.member(a)? && self.effect_cone.member(&(&self.unit_effect - a))?)
    }

    pub fn is_state(&self, omega: &RVec) -> Result<bool> {
        self.check_len(omega)?;
        Ok(self.state_cone.member(omega)?
            && (omega.dot(&self.unit_effect) - 1.0).abs() <= self.tolerance() * 10.0)
    }

    /// Probability `omega(a)`; errors if it falls outside `[-tol, 1 + tol]`.
    pub fn pairing(&self, omega: &RVec, a: &RVec) -> Result<f64> {
        self.check_len(omega)?;
        self.check_len(a)?;
        let p = omega.dot(a);
        let tol = self.tolerance();
        if p < -tol || p > 1.0 + tol {
            return Err(TheoryError::PairingOutOfRange(p));
        }
        Ok(p)
    }

    /// Effect `e o T` of a transformation.
    pub fn effect_of(&self, t: &Transformation) -> RVec {
        t.on_effect(&self.unit_effect)
    }

    /// Probability of `t` and the normalised output state.
    pub fn condition(&self, omega: &RVec, t: &Transformation) -> Result<(f64, RVec)> {
        let p = self.pairing(omega, &self.effect_of(t))?;
        if p <= self.tolerance() {
            return Err(TheoryError::ZeroProbability);
        }
        Ok((p, t.on_state(omega) / p))
    }

    /// True if `m` maps the effect cone into itself. For psd systems this is complete
    /// positivity, decided on the Choi matrix.
    pub fn in_transformation_cone(&self, m: &RMat) -> Result<bool> {
        match self.effect_cone.backend() {
            Backend::Polyhedral(_) => {
                for g in &self.effect_rays {
                    if !self.effect_cone.member(&(m * g))? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Backend::Psd(_) => {
                let choi = self.choi(m)?;
                let (vals, _) = eigh(&choi);
                let top = vals[vals.len() - 1].abs().max(1.0);
                Ok(vals[0] >= -self.tolerance() * top * 10.0)
            }
        }
    }

    /// In the transformation cone and `e o T <= e`.
    pub fn is_physical(&self, t: &Transformation) -> Result<bool> {
        Ok(self.in_transformation_cone(&t.matrix)?
            && self
                .effect_cone
                .member(&(&self.unit_effect - self.effect_of(t)))?)
    }

    /// Choi matrix `sum_rs E_rs (x) T*(E_rs)` of the effect action, psd systems only.
    pub fn choi(&self, m: &RMat) -> Result<CMat> {
        let e = self
            .effect_cone
            .embedding()
            .ok_or(TheoryError::Backend("psd"))?;
        let d = e.d();
        let mut choi = CMat::zeros(d * d, d * d);
        for r in 0..d {
            for s in 0..d {
                let (x, y) = e.complex_coordinates(&matrix_unit(d, r, s));
                let out =
                    e.synthesize(&(m * x)) + e.synthesize(&(m * y)) * Complex64::new(0.0, 1.0);
                for i in 0..d {
                    for j in 0..d {
                        choi[(r * d + i, s * d + j)] = out[(i, j)];
                    }
                }
            }
        }
        Ok(choi)
    }

    /// Effect action `a -> sum_i K_i^dagger a K_i` as a transformation, psd systems only.
    pub fn kraus_map(&self, kraus: &[CMat]) -> Result<Transformation> {
        let e = self
            .effect_cone
            .embedding()
            .ok_or(TheoryError::Backend("psd"))?;
        let n = self.dim;
        let mut m = RMat::zeros(n, n);
        for (k, b) in e.basis().iter().enumerate() {
            let mut out = CMat::zeros(e.d(), e.d());
            for op in kraus {
                out += op.adjoint() * b * op;
            }
            m.set_column(k, &e.coordinates(&out));
        }
        Ok(Transformation::new(m))
    }

    /// Halfspace rows of the transformation cone: `omega_v^T M g >= 0` for extremal
    /// states `omega_v` and extremal effects `g`, flattened row-major.
    fn transformation_halfspaces(&self) -> Vec<RVec> {
        let mut rows = Vec::new();
        for w in &self.state_vertices {
            for g in &self.effect_rays {
                rows.push(normalized(&vec_rows(&(w * g.transpose()))));
            }
        }
        rows
    }

    /// Transformation cone of a polyhedral system as a polyhedral cone over row-major
    /// flattened matrices.
    pub fn transformation_cone(&self) -> Result<Cone> {
        if !self.effect_cone.is_polyhedral() {
            return Err(TheoryError::Backend("polyhedral"));
        }
        let rows = self.transformation_halfspaces();
        let n = self.dim * self.dim;
        let rays = rays_of_halfspaces(&rows, n, self.tolerance(), crate::cone::GENERATOR_BUDGET)?;
        Ok(Cone::polyhedral(rays, self.tolerance())?)
    }

    /// Extremal rays of the transformation cone as transformations (polyhedral systems).
    pub fn atomic_rays(&self) -> Result<Vec<Transformation>> {
        let cone = self.transformation_cone()?;
        Ok(cone
            .extremal_rays()?
            .into_iter()
            .map(|v| Transformation::new(crate::linalg::unvec_rows(&v, self.dim, self.dim)))
            .collect())
    }

    /// True if `t` spans an extremal ray of the transformation cone.
    pub fn is_atomic(&self, t: &Transformation) -> Result<bool> {
        let scale = t.matrix.amax();
        if scale <= self.tolerance() {
            return Ok(false);
        }
        match self.effect_cone.backend() {
            Backend::Polyhedral(_) => {
                let v = vec_rows(&t.matrix) / scale;
                let tight_tol = self.tolerance().max(1e-10) * 10.0;
                let mut tight = Vec::new();
                for row in self.transformation_halfspaces() {
                    let s = row.dot(&v);
                    if s < -tight_tol {
                        return Ok(false);
                    }
                    if s.abs() <= tight_tol {
                        tight.push(row.transpose());
                    }
                }
                let n = self.dim * self.dim;
                Ok(!tight.is_empty() && rank(&RMat::from_rows(&tight), 1e-9) == n - 1)
            }
            Backend::Psd(_) => {
                let choi = self.choi(&t.matrix)?;
                let (vals, _) = eigh(&choi);
                let top = vals[vals.len() - 1];
                if vals[0] < -self.tolerance() * top.max(1.0) * 10.0 || top <= 0.0 {
                    return Ok(false);
                }
                Ok(rank_c(&choi, 1e-8) == 1)
            }
        }
    }

    /// Sum of events; errors if the summed effect exceeds the unit effect.
    pub fn sum_transformations(&self, ts: &[Transformation]) -> Result<Transformation> {
        let mut m = RMat::zeros(self.dim, self.dim);
        for t in ts {
            m += &t.matrix;
        }
        let t = Transformation::new(m);
        if !self
            .effect_cone
            .member(&(&self.unit_effect - self.effect_of(&t)))?
        {
            return Err(TheoryError::TestCompatibility);
        }
        Ok(t)
    }

    pub fn scale(&self, t: &Transformation, lambda: f64) -> Result<Transformation> {
        if lambda < 0.0 {
            return Err(TheoryError::NegativeScale(lambda));
        }
        Ok(Transformation::new(&t.matrix * lambda))
    }

    /// Validated test: every event physical and the effects summing to the unit effect.
    pub fn test(&self, events: Vec<Transformation>) -> Result<Test> {
        if events.is_empty() {
            return Err(TheoryError::InvalidTest(
                "a test needs at least one event".into(),
            ));
        }
        let mut sum = RVec::zeros(self.dim);
        for (i, t) in events.iter().enumerate() {
            if !self.is_physical(t)? {
                return Err(TheoryError::InvalidTest(format!(
                    "event {i} is not physical"
                )));
            }
            sum += self.effect_of(t);
        }
        if (&sum - &self.unit_effect).amax() > self.tolerance() * 10.0 {
            return Err(TheoryError::InvalidTest(
                "event effects do not sum to the unit effect".into(),
            ));
        }
        Ok(Test { events })
    }

    /// Merges the events of each block of `partition` (which must cover every event once).
    pub fn coarse_grain(&self, test: &Test, partition: &[Vec<usize>]) -> Result<Test> {
        let mut seen = vec![false; test.events.len()];
        let mut events = Vec::new();
        for block in partition {
            let mut m = RMat::zeros(self.dim, self.dim);
            for &i in block {
                if i >= seen.len() || seen[i] {
                    return Err(TheoryError::InvalidTest(format!(
                        "partition index {i} is out of range or repeated"
                    )));
                }
                seen[i] = true;
                m += &test.events[i].matrix;
            }
            events.push(Transformation::new(m));
        }
        if seen.iter().any(|s| !s) {
            return Err(TheoryError::InvalidTest(
                "partition does not cover every event".into(),
            ));
        }
        Ok(Test { events })
    }

    /// Event-wise convex combination of tests with the same number of outcomes.
    pub fn convex_combine(&self, tests: &[Test], weights: &[f64]) -> Result<Test> {
        let n = tests
            .first()
            .ok_or_else(|| TheoryError::InvalidTest("no tests to combine".into()))?
            .events
            .len();
        if tests.len() != weights.len()
            || tests.iter().any(|t| t.events.len() != n)
            || weights.iter().any(|&w| w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(TheoryError::InvalidTest(
                "convex combination needs equal outcome counts and probability weights".into(),
            ));
        }
        let events = (0..n)
            .map(|j| {
                let mut m = RMat::zeros(self.dim, self.dim);
                for (t, w) in tests.iter().zip(weights) {
                    m += &t.events[j].matrix * *w;
                }
                Transformation::new(m)
            })
            .collect();
        Ok(Test { events })
    }

    /// Largest deviation between the marginal `sum_j omega((e o B_j) o T)` and
    /// `omega(e o T)` over random states.
    pub fn nsf_marginal_check<R: Rng + ?Sized>(
        &self,
        test: &Test,
        t: &Transformation,
        samples: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        let direct = self.effect_of(t);
        let marginal = test.events.iter().fold(RVec::zeros(self.dim), |acc, b| {
            acc + t.on_effect(&self.effect_of(b))
        });
        for _ in 0..samples {
            let omega = self.random_state(rng);
            worst = worst.max((omega.dot(&marginal) - omega.dot(&direct)).abs());
        }
        Ok(worst)
    }

    /// Selects a minimal informationally complete observable from the effects of `tests`.
    ///
    /// Effects are scanned in input order and kept when they enlarge the span together
    /// with the unit effect; the `dim - 1` kept effects are scaled by a common factor and
    /// completed by the remainder so that the result sums to the unit effect.
    pub fn minimal_infocomplete(&self, tests: &[Test]) -> Result<Vec<RVec>> {
        let mut kept: Vec<RVec> = Vec::new();
        let mut span = vec![self.unit_effect.clone()];
        for t in tests {
            for ev in &t.events {
                if kept.len() + 1 == self.dim {
                    break;
                }
                let f = self.effect_of(ev);
                span.push(f.clone());
                if rank_of(&span, 1e-9) == span.len() {
                    kept.push(f);
                } else {
                    span.pop();
                }
            }
        }
        if kept.len() + 1 < self.dim {
            return Err(TheoryError::NotInformationallyComplete);
        }
        let total = kept.iter().fold(RVec::zeros(self.dim), |acc, f| acc + f);
        let lambda = self
            .effect_cone
            .max_scale(&self.unit_effect, &total)?
            .min(1.0);
        if lambda <= self.tolerance() {
            return Err(TheoryError::NotInformationallyComplete);
        }
        let mut out: Vec<RVec> = kept.iter().map(|f| f * lambda).collect();
        out.push(&self.unit_effect - total * lambda);
        Ok(out)
    }

    /// `sup { l . w : 0 <= l <= e }` for a functional `w` on effects.
    fn effect_support(&self, w: &RVec) -> Result<f64> {
        match self.effect_cone.backend() {
            Backend::Polyhedral(_) => {
                let gens = &self.effect_rays;
                let mut lp = LinearProgram::maximize();
                let cs: Vec<usize> = gens.iter().map(|g| lp.nonneg(g.dot(w))).collect();
                let ds: Vec<usize> = gens.iter().map(|_| lp.nonneg(0.0)).collect();
                for k in 0..self.dim {
                    let mut terms: Vec<(usize, f64)> =
                        cs.iter().zip(gens).map(|(&v, g)| (v, g[k])).collect();
                    terms.extend(ds.iter().zip(gens).map(|(&v, g)| (v, g[k])));
                    lp.eq(&terms, self.unit_effect[k]);
                }
                Ok(lp.solve()?.objective)
            }
            Backend::Psd(_) => {
                let y = self.whitened_state(w)?;
                Ok(eigh(&y).0.iter().filter(|&&x| x > 0.0).sum())
            }
        }
    }

    /// `E^{1/2} rho(w) E^{1/2}` with `E` the unit-effect operator.
    fn whitened_state(&self, w: &RVec) -> Result<CMat> {
        let emb = self
            .state_cone
            .embedding()
            .ok_or(TheoryError::Backend("psd"))?;
        let unit = self
            .effect_cone
            .embedding()
            .ok_or(TheoryError::Backend("psd"))?
            .synthesize(&self.unit_effect);
        let half = spectral_map(&unit, |x| x.max(0.0).sqrt());
        Ok(hermitian(&(&half * emb.synthesize(w) * &half)))
    }

    /// Natural norm of a (signed) state: `sup_{0 <= l <= e} |omega(l)|`.
    pub fn natural_norm_state(&self, omega: &RVec) -> Result<f64> {
        self.check_len(omega)?;
        Ok(self
            .effect_support(omega)?
            .max(self.effect_support(&-omega)?))
    }

    /// Natural distance `sup_{0 <= l <= e} (omega(l) - zeta(l))`.
    pub fn natural_distance(&self, omega: &RVec, zeta: &RVec) -> Result<f64> {
        self.check_len(omega)?;
        self.check_len(zeta)?;
        Ok(self.effect_support(&(omega - zeta))?.max(0.0))
    }

    /// Natural norm of an effect-space vector, dual to the state norm: the gauge of the
    /// absolutely convex hull of the effect set.
    pub fn natural_norm_effect(&self, a: &RVec) -> Result<f64> {
        self.check_len(a)?;
        match self.effect_cone.backend() {
            Backend::Polyhedral(_) => {
                let gens = &self.effect_rays;
                let n = self.dim;
                let mut lp = LinearProgram::minimize();
                let s = lp.nonneg(1.0);
                let r = lp.nonneg(1.0);
                let block = |lp: &mut LinearProgram| -> Vec<usize> {
                    gens.iter().map(|_| lp.nonneg(0.0)).collect()
                };
                let (p, p_rest, q, q_rest) = (
                    block(&mut lp),
                    block(&mut lp),
                    block(&mut lp),
                    block(&mut lp),
                );
                for k in 0..n {
                    let col = |vars: &[usize], sign: f64| -> Vec<(usize, f64)> {
                        vars.iter()
                            .zip(gens)
                            .map(|(&v, g)| (v, sign * g[k]))
                            .collect()
                    };
                    let mut t = col(&p, 1.0);
                    t.extend(col(&p_rest, 1.0));
                    t.push((s, -self.unit_effect[k]));
                    lp.eq(&t, 0.0);
                    let mut t = col(&q, 1.0);
                    t.extend(col(&q_rest, 1.0));
                    t.push((r, -self.unit_effect[k]));
                    lp.eq(&t, 0.0);
                    let mut t = col(&p, 1.0);
                    t.extend(col(&q, -1.0));
                    lp.eq(&t, a[k]);
                }
                Ok(lp.solve()?.objective)
            }
            Backend::Psd(emb) => {
                let unit = emb.synthesize(&self.unit_effect);
                let inv_half = spectral_map(&unit, |x| 1.0 / x.sqrt());
                let x = hermitian(&(&inv_half * emb.synthesize(a) * &inv_half));
                let (vals, _) = eigh(&x);
                Ok(vals[vals.len() - 1].max(0.0) + (-vals[0]).max(0.0))
            }
        }
    }

    /// Euclidean norm of the coordinates of `a` in the reference-observable basis.
    pub fn reference_norm(&self, a: &RVec) -> Result<f64> {
        Ok(self.reference_coordinates(a)?.norm())
    }

    /// Coordinates of an effect-space vector in the reference-observable basis.
    pub fn reference_coordinates(&self, a: &RVec) -> Result<RVec> {
        self.check_len(a)?;
        let l = RMat::from_columns(&self.reference_observable);
        l.lu()
            .solve(a)
            .ok_or_else(|| TheoryError::InvalidSystem("reference observable is singular".into()))
    }

    /// True if `m` (acting on state coordinates) is a normalisation-preserving
    /// automorphism of the state cone.
    pub fn is_state_automorphism<R: Rng + ?Sized>(&self, m: &RMat, rng: &mut R) -> Result<bool> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(TheoryError::DimensionMismatch {
                expected: self.dim,
                found: m.nrows(),
            });
        }
        if (m.tr_mul(&self.unit_effect) - &self.unit_effect).amax() > self.tolerance() * 10.0 {
            return Ok(false);
        }
        match check_cone_isomorphism(m, &self.state_cone, &self.state_cone, DEFAULT_SAMPLES, rng) {
            Ok(b) => Ok(b),
            Err(ConeError::SingularMap) => Ok(false),
            Err(e) => Err(e.into()),
        }
    }

    /// Random normalised state: a sparse random mixture of extremal states (polyhedral)
    /// or a random density operator of random rank (psd).
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> RVec {
        match self.effect_cone.backend() {
            Backend::Polyhedral(_) => {
                let verts = &self.state_vertices;
                let k = rng.gen_range(1..=verts.len().min(4));
                let chosen: Vec<&RVec> = verts.choose_multiple(rng, k).collect();
                let w: Vec<f64> = chosen.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = w.iter().sum();
                chosen
                    .iter()
                    .zip(&w)
                    .fold(RVec::zeros(self.dim), |acc, (v, wi)| {
                        acc + *v * (wi / total)
                    })
            }
            Backend::Psd(emb) => {
                let d = emb.d();
                let r = rng.gen_range(1..=d);
                let g = ginibre(d, r, !emb.is_real(), rng);
                let rho = &g * g.adjoint();
                let tr: f64 = (0..d).map(|i| rho[(i, i)].re).sum();
                let rho = rho / c(tr);
                self.state_coordinates(&rho)
            }
        }
    }

    /// State coordinates `omega_k = Tr(rho B_k)` of a density operator (psd systems).
    pub fn state_coordinates(&self, rho: &CMat) -> RVec {
        let emb = self.effect_cone.embedding().expect("psd system");
        RVec::from_fn(self.dim, |k, _| trace_product(&emb.basis()[k], rho))
    }

    /// Random deterministic transformation (`e o T = e`).
    pub fn random_deterministic<R: Rng + ?Sized>(&self, rng: &mut R) -> Transformation {
        match self.effect_cone.backend() {
            Backend::Polyhedral(_) => {
                let tol = self.tolerance() * 10.0;
                let mut det: Vec<&Transformation> = self
                    .transformation_generators
                    .iter()
                    .filter(|t| (self.effect_of(t) - &self.unit_effect).amax() <= tol)
                    .collect();
                let id = Transformation::identity(self.dim);
                det.push(&id);
                let mut reversible = Transformation::identity(self.dim);
                for _ in 0..rng.gen_range(1..=3) {
                    reversible = reversible.then(det.choose(rng).expect("non-empty"));
                }
                // Measure the reference observable and prepare random extremal states.
                let mut mp = RMat::zeros(self.dim, self.dim);
                for l in &self.reference_observable {
                    let w = self.state_vertices.choose(rng).expect("non-empty");
                    mp += l * w.transpose();
                }
                let p: f64 = rng.gen();
                Transformation::new(reversible.matrix * p + mp * (1.0 - p))
            }
            Backend::Psd(emb) => {
                let d = emb.d();
                let k = rng.gen_range(1..=d * d);
                let g = ginibre(k * d, d, !emb.is_real(), rng);
                let inv_half = spectral_map(&(g.adjoint() * &g), |x| 1.0 / x.sqrt());
                let v = g * inv_half;
                let kraus: Vec<CMat> = (0..k).map(|i| v.rows(i * d, d).into_owned()).collect();
                self.kraus_map(&kraus).expect("psd system")
            }
        }
    }

    /// Random physical transformation: a deterministic one scaled into `(0, 1]`.
    pub fn random_physical<R: Rng + ?Sized>(&self, rng: &mut R) -> Transformation {
        let t = self.random_deterministic(rng);
        let s: f64 = 1.0 - rng.gen::<f64>() * 0.99;
        Transformation::new(t.matrix * s)
    }
}

pub(crate) fn ginibre<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    complex: bool,
    rng: &mut R,
) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if complex {
            rng.sample(StandardNormal)
        } else {
            0.0
        };
        Complex64::new(re, im)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{make_classical, make_gbit, make_quantum};
    use crate::linalg::matrix_unit;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(d: usize, k: usize) -> RVec {
        RVec::from_fn(d, |i, _| if i == k { 1.0 } else { 0.0 })
    }

    /// Qubit state with Bloch vector `r` in Hilbert-Schmidt coordinates `(1, r) / sqrt 2`.
    fn bloch(r: [f64; 3]) -> RVec {
        RVec::from_column_slice(&[1.0, r[0], r[1], r[2]]) / 2f64.sqrt()
    }

    fn ket0_projector(sys: &System) -> Transformation {
        sys.kraus_map(&[matrix_unit(2, 0, 0)]).unwrap()
    }

    #[test]
    fn classical_pairing_and_conditioning() {
        let sys = make_classical(2).unwrap().system;
        let uniform = RVec::from_column_slice(&[0.5, 0.5]);
        assert!((sys.pairing(&uniform, &unit(2, 0)).unwrap() - 0.5).abs() < 1e-15);
        assert!((sys.pairing(&uniform, &sys.unit_effect).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sys.pairing(&uniform, &RVec::zeros(2)).unwrap(), 0.0);
        let mut m = RMat::zeros(2, 2);
        m[(0, 0)] = 1.0;
        let (p, post) = sys.condition(&uniform, &Transformation::new(m)).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((post - unit(2, 0)).amax() < 1e-15);
        let (p, post) = sys
            .condition(&uniform, &Transformation::identity(2))
            .unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(post, uniform);
        let mut m = RMat::zeros(2, 2);
        m[(1, 1)] = 1.0;
        assert_eq!(
            sys.condition(&unit(2, 0), &Transformation::new(m)),
            Err(TheoryError::ZeroProbability)
        );
        assert!(matches!(
            sys.pairing(&uniform, &RVec::zeros(3)),
            Err(TheoryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn qubit_conditioning_and_projector_effect() {
        let sys = make_quantum(2).unwrap().system;
        let t = ket0_projector(&sys);
        let f = sys.effect_of(&t);
        // |0><0| = (I + Z) / 2 in coordinates (I, X, Y, Z) / sqrt 2.
        let expected = RVec::from_column_slice(&[1.0, 0.0, 0.0, 1.0]) / 2f64.sqrt();
        assert!((f - expected).amax() < 1e-12);
        let (p, post) = sys.condition(&bloch([0.0; 3]), &t).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!((post - bloch([0.0, 0.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn test_algebra() {
        let sys = make_classical(3).unwrap().system;
        let proj = |k: usize| {
            let mut m = RMat::zeros(3, 3);
            m[(k, k)] = 1.0;
            Transformation::new(m)
        };
        let test = sys.test(vec![proj(0), proj(1), proj(2)]).unwrap();
        let coarse = sys.coarse_grain(&test, &[vec![0], vec![1, 2]]).unwrap();
        assert_eq!(coarse.events.len(), 2);
        assert_eq!(coarse.events[1].matrix, proj(1).matrix + proj(2).matrix);
        assert!(sys.coarse_grain(&test, &[vec![0], vec![1]]).is_err());
        let other = sys.test(vec![proj(2), proj(0), proj(1)]).unwrap();
        let mixed = sys
            .convex_combine(&[test.clone(), other], &[0.5, 0.5])
            .unwrap();
        let total = mixed
            .events
            .iter()
            .fold(RVec::zeros(3), |acc, t| acc + sys.effect_of(t));
        assert!((total - &sys.unit_effect).amax() < 1e-15);
        assert!(sys.test(mixed.events.clone()).is_ok());
        let zero = sys.scale(&proj(0), 0.0).unwrap();
        assert_eq!(
            sys.pairing(&unit(3, 0), &sys.effect_of(&zero)).unwrap(),
            0.0
        );
        assert!(sys.scale(&proj(0), -1.0).is_err());
        assert_eq!(
            sys.sum_transformations(&[Transformation::identity(3), proj(0)]),
            Err(TheoryError::TestCompatibility)
        );
        assert!(sys.test(vec![proj(0), proj(1)]).is_err());
    }

    #[test]
    fn nsf_marginal_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for sys in [
            make_classical(2).unwrap().system,
            make_quantum(2).unwrap().system,
            make_gbit().unwrap().system,
        ] {
            let events: Vec<Transformation> = match sys.effect_cone.backend() {
                Backend::Psd(_) => {
                    vec![
                        ket0_projector(&sys),
                        sys.kraus_map(&[matrix_unit(2, 1, 1)]).unwrap(),
                    ]
                }
                Backend::Polyhedral(_) => sys
                    .reference_observable
                    .iter()
                    .map(|l| Transformation::new(l * sys.state_vertices()[0].transpose()))
                    .collect(),
            };
            let test = sys.test(events).unwrap();
            let t = sys.random_physical(&mut rng);
            assert!(sys.nsf_marginal_check(&test, &t, 50, &mut rng).unwrap() < 1e-12);
        }
    }

    #[test]
    fn minimal_infocomplete_examples() {
        let cl = make_classical(2).unwrap().system;
        let proj = |k: usize| {
            let mut m = RMat::zeros(2, 2);
            m[(k, k)] = 1.0;
            Transformation::new(m)
        };
        let test = cl.test(vec![proj(0), proj(1)]).unwrap();
        let obs = cl.minimal_infocomplete(&[test]).unwrap();
        assert!((&obs[0] - unit(2, 0)).amax() < 1e-12);
        assert!((&obs[1] - unit(2, 1)).amax() < 1e-12);

        let q = make_quantum(2).unwrap().system;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let kets: [[Complex64; 2]; 3] = [
            [c(1.0), c(0.0)],
            [c(s), c(s)],
            [c(s), Complex64::new(0.0, s)],
        ];
        let tests: Vec<Test> = kets
            .iter()
            .map(|k| {
                let v = crate::linalg::CVec::from_column_slice(k);
                let w = crate::linalg::CVec::from_column_slice(&[-k[1].conj(), k[0].conj()]);
                let p = &v * v.adjoint();
                let r = &w * w.adjoint();
                q.test(vec![q.kraus_map(&[p]).unwrap(), q.kraus_map(&[r]).unwrap()])
                    .unwrap()
            })
            .collect();
        let obs = q.minimal_infocomplete(&tests).unwrap();
        assert_eq!(obs.len(), 4);
        assert_eq!(rank_of(&obs, 1e-9), 4);
        for l in &obs {
            assert!(q.is_effect(l).unwrap());
        }

        let g = make_gbit().unwrap().system;
        let f = crate::builtins::gbit_fiducial_effects();
        let w = &g.state_vertices()[0];
        let ev = |a: &RVec| Transformation::new(a * w.transpose());
        let t1 = g.test(vec![ev(&f[0]), ev(&f[1])]).unwrap();
        let t2 = g.test(vec![ev(&f[2]), ev(&f[3])]).unwrap();
        let t3 = g
            .convex_combine(&[t1.clone(), t2.clone()], &[0.5, 0.5])
            .unwrap();
        let obs = g.minimal_infocomplete(&[t1, t2, t3]).unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(rank_of(&obs, 1e-9), 3);
        let sum = obs.iter().fold(RVec::zeros(3), |acc, l| acc + l);
        assert!((sum - &g.unit_effect).amax() < 1e-12);

        let short = cl.test(vec![Transformation::identity(2)]).unwrap();
        assert_eq!(
            cl.minimal_infocomplete(&[short]),
            Err(TheoryError::NotInformationallyComplete)
        );
    }

    #[test]
    fn distance_examples() {
        let cl = make_classical(2).unwrap().system;
        assert!((cl.natural_distance(&unit(2, 0), &unit(2, 1)).unwrap() - 1.0).abs() < 1e-9);
        assert!(cl.natural_distance(&unit(2, 0), &unit(2, 0)).unwrap().abs() < 1e-9);
        let q = make_quantum(2).unwrap().system;
        let d = q
            .natural_distance(&bloch([0.0, 0.0, 1.0]), &bloch([0.0, 0.0, -1.0]))
            .unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!((q.natural_norm_state(&bloch([0.3, 0.0, 0.1])).unwrap() - 1.0).abs() < 1e-12);
        assert!((cl.natural_norm_effect(&cl.unit_effect).unwrap() - 1.0).abs() < 1e-9);
        assert!((q.natural_norm_effect(&q.unit_effect).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn automorphism_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = make_quantum(2).unwrap().system;
        assert!(q
            .is_state_automorphism(&RMat::identity(4, 4), &mut rng)
            .unwrap());
        let th: f64 = 0.9;
        let mut rot = RMat::identity(4, 4);
        rot[(1, 1)] = th.cos();
        rot[(1, 2)] = -th.sin();
        rot[(2, 1)] = th.sin();
        rot[(2, 2)] = th.cos();
        assert!(q.is_state_automorphism(&rot, &mut rng).unwrap());
        let mut shrink = RMat::identity(4, 4) * 0.5;
        shrink[(0, 0)] = 1.0;
        assert!(!q.is_state_automorphism(&shrink, &mut rng).unwrap());
        let g = make_gbit().unwrap().system;
        for t in &g.transformation_generators[..8] {
            assert!(g
                .is_state_automorphism(&t.matrix.transpose(), &mut rng)
                .unwrap());
        }
    }

    #[test]
    fn reference_observables_are_valid() {
        for sys in [
            make_classical(3).unwrap().system,
            make_quantum(2).unwrap().system,
            make_quantum(3).unwrap().system,
            make_gbit().unwrap().system,
        ] {
            let l = &sys.reference_observable;
            assert_eq!(rank_of(l, 1e-10), sys.dim);
            let sum = l.iter().fold(RVec::zeros(sys.dim), |acc, x| acc + x);
            assert!((sum - &sys.unit_effect).amax() < 1e-12);
        }
    }

    fn systems() -> Vec<System> {
        vec![
            make_classical(3).unwrap().system,
            make_quantum(2).unwrap().system,
            make_gbit().unwrap().system,
        ]
    }

    /// Distance computed without the library: half the L1 distance for simplices, half
    /// the Bloch distance for qubits, and half the L-infinity norm of the difference of the
    /// fiducial probabilities for the square bit.
    fn oracle_distance(kind: usize, a: &RVec, b: &RVec) -> f64 {
        let d = a - b;
        match kind {
            0 => d.iter().map(|x| x.abs()).sum::<f64>() / 2.0,
            1 => (d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt() / 2f64.sqrt(),
            _ => d[0].abs().max(d[1].abs()) / 2.0,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn metric_axioms_and_oracle(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (kind, sys) in systems().iter().enumerate() {
                let (w, z, t) = (sys.random_state(&mut rng), sys.random_state(&mut rng), sys.random_state(&mut rng));
                let dwz = sys.natural_distance(&w, &z).unwrap();
                prop_assert!((dwz - sys.natural_distance(&z, &w).unwrap()).abs() < 1e-9);
                prop_assert!((-1e-12..=1.0 + 1e-9).contains(&dwz));
                prop_assert!(dwz <= sys.natural_distance(&w, &t).unwrap() + sys.natural_distance(&t, &z).unwrap() + 1e-9);
                prop_assert!(sys.natural_distance(&w, &w).unwrap().abs() < 1e-9);
                prop_assert!((dwz - oracle_distance(kind, &w, &z)).abs() < 1e-8);
            }
        }

        #[test]
        fn monotone_under_deterministic_maps(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for sys in systems() {
                let (w, z) = (sys.random_state(&mut rng), sys.random_state(&mut rng));
                let t = sys.random_deterministic(&mut rng);
                prop_assert!(sys.is_physical(&t).unwrap());
                prop_assert!((sys.effect_of(&t) - &sys.unit_effect).amax() < 1e-9);
                let before = sys.natural_distance(&w, &z).unwrap();
                let after = sys.natural_distance(&t.on_state(&w), &t.on_state(&z)).unwrap();
                prop_assert!(after <= before + 1e-9);
            }
        }

        #[test]
        fn automorphisms_are_isometric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = make_gbit().unwrap().system;
            let q = make_quantum(2).unwrap().system;
            let m = g.transformation_generators[(seed % 8) as usize].matrix.transpose();
            let (w, z) = (g.random_state(&mut rng), g.random_state(&mut rng));
            let d0 = g.natural_distance(&w, &z).unwrap();
            prop_assert!((g.natural_distance(&(&m * &w), &(&m * &z)).unwrap() - d0).abs() < 1e-9);
            let u = q.random_deterministic(&mut rng);
            let (w, z) = (q.random_state(&mut rng), q.random_state(&mut rng));
            let ang = (seed % 1000) as f64 / 100.0;
            let mut rot = RMat::identity(4, 4);
            rot[(2, 2)] = ang.cos(); rot[(2, 3)] = -ang.sin();
            rot[(3, 2)] = ang.sin(); rot[(3, 3)] = ang.cos();
            let d0 = q.natural_distance(&w, &z).unwrap();
            prop_assert!((q.natural_distance(&(&rot * &w), &(&rot * &z)).unwrap() - d0).abs() < 1e-9);
            prop_assert!(q.natural_distance(&u.on_state(&w), &u.on_state(&z)).unwrap() <= d0 + 1e-9);
        }

        #[test]
        fn tests_have_unit_total_probability(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for sys in systems() {
                let events: Vec<Transformation> = sys.reference_observable.iter()
                    .map(|l| Transformation::new(l * sys.random_state(&mut rng).transpose()))
                    .collect();
                let test = sys.test(events).unwrap();
                let w = sys.random_state(&mut rng);
                let total: f64 = test.events.iter().map(|t| sys.pairing(&w, &sys.effect_of(t)).unwrap()).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn conditioning_reproduces_the_action(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for sys in systems() {
                let w = sys.random_state(&mut rng);
                let t = sys.random_physical(&mut rng);
                let (p, post) = sys.condition(&w, &t).unwrap();
                prop_assert!((post * p - t.on_state(&w)).amax() < 1e-12);
            }
        }
    }
}
