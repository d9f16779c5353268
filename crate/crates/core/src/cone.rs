//! Closed convex pointed cones in a finite-dimensional real space.
//!
//! Two backends are supported:
//!
//! * **polyhedral**: a finite list of generators (V-representation). Membership is a
//!   conic-feasibility LP, extremality a redundancy LP, and the dual is computed by
//!   double description.
//! * **psd-embedded**: the slice `{v : sum_k v_k B_k is positive semidefinite}` for a
//!   linearly independent family of Hermitian `d x d` matrices `B_k`. Extremal rays are
//!   the rank-one matrices, available analytically.
//!
//! All comparisons use the cone's tolerance, by default [`DEFAULT_TOLERANCE`] or the value
//! of the `CONELAB_TOLERANCE` environment variable.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dd::rays_of_halfspaces;
use crate::linalg::{
    c, complexify, eigh, hermitian, max_eigenvalue, min_eigenvalue, normalized, rank, same_ray,
    spectral_map, trace_product, CMat, CVec, RMat, RVec,
};
use crate::lp::{LinearProgram, LpError};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Upper bound on the number of intermediate rays in a double-description run.
pub const GENERATOR_BUDGET: usize = 10_000;

/// Default number of random extremal samples used for non-polyhedral checks.
pub const DEFAULT_SAMPLES: usize = 200;

/// Tolerance from `CONELAB_TOLERANCE`, falling back to [`DEFAULT_TOLERANCE`].
pub fn default_tolerance() -> f64 {
    std::env::var("CONELAB_TOLERANCE")
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|t| t.is_finite() && *t > 0.0)
        .unwrap_or(DEFAULT_TOLERANCE)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConeError {
    #[error("cone has no generators")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("generator {0} is zero")]
    ZeroGenerator(usize),
    #[error("cone is not pointed")]
    NotPointed,
    #[error("cone is not full-dimensional")]
    NotFullDimensional,
    #[error("double description exceeded the generator budget of {limit}")]
    GeneratorBudget { limit: usize },
    #[error("linear map is singular")]
    SingularMap,
    #[error("embedding is not injective")]
    NonInjectiveEmbedding,
    #[error("embedding matrix {0} is not Hermitian")]
    NonHermitianBasis(usize),
    #[error("vector is not in the cone")]
    NotMember,
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl From<LpError> for ConeError {
    fn from(e: LpError) -> Self {
        ConeError::Solver(e.to_string())
    }
}

/// Linear parametrisation `v -> sum_k v_k B_k` of Hermitian matrices.
#[derive(Debug, Clone)]
pub struct PsdEmbedding {
    d: usize,
    basis: Vec<CMat>,
    gram_inv: RMat,
    real: bool,
}

impl PsdEmbedding {
    pub fn new(d: usize, basis: Vec<CMat>) -> Result<Self, ConeError> {
        if basis.is_empty() {
            return Err(ConeError::Empty);
        }
        for (k, b) in basis.iter().enumerate() {
            if b.nrows() != d || b.ncols() != d {
                return Err(ConeError::DimensionMismatch {
                    expected: d,
                    found: b.nrows(),
                });
            }
            if (b - b.adjoint()).iter().any(|z| z.norm() > 1e-12) {
                return Err(ConeError::NonHermitianBasis(k));
            }
        }
        let n = basis.len();
        let gram = RMat::from_fn(n, n, |i, j| trace_product(&basis[i], &basis[j]));
        if rank(&gram, 1e-12) < n {
            return Err(ConeError::NonInjectiveEmbedding);
        }
        let gram_inv = gram.try_inverse().ok_or(ConeError::NonInjectiveEmbedding)?;
        let real = basis.iter().all(|b| b.iter().all(|z| z.im.abs() < 1e-15));
        Ok(Self {
            d,
            basis,
            gram_inv,
            real,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    /// True if every basis matrix is real symmetric.
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// True if the basis spans all Hermitian (or real symmetric) `d x d` matrices.
    pub fn spans_full(&self) -> bool {
        let full = if self.real {
            self.d * (self.d + 1) / 2
        } else {
            self.d * self.d
        };
        self.basis.len() == full
    }

    pub fn synthesize(&self, v: &RVec) -> CMat {
        let mut m = CMat::zeros(self.d, self.d);
        for (k, b) in self.basis.iter().enumerate() {
            if v[k] != 0.0 {
                m += b * c(v[k]);
            }
        }
        m
    }

    /// Coordinates of the orthogonal projection of a Hermitian matrix onto the span.
    pub fn coordinates(&self, op: &CMat) -> RVec {
        let h = hermitian(op);
        let b = RVec::from_fn(self.basis.len(), |k, _| trace_product(&self.basis[k], &h));
        &self.gram_inv * b
    }

    /// Coordinates of an arbitrary complex matrix split into its Hermitian and
    /// anti-Hermitian parts: `op = H(x) + i H(y)`.
    pub fn complex_coordinates(&self, op: &CMat) -> (RVec, RVec) {
        let re = hermitian(op);
        let im = (op - op.adjoint()) * Complex64::new(0.0, -0.5);
        (self.coordinates(&re), self.coordinates(&im))
    }

    /// Embedding whose parametrised cone is the dual cone under the dot product.
    pub fn dual(&self) -> Result<Self, ConeError> {
        if !self.spans_full() {
            return Err(ConeError::Unsupported(
                "dual of a psd slice that does not span all Hermitian matrices".into(),
            ));
        }
        let n = self.basis.len();
        let dual_basis: Vec<CMat> = (0..n)
            .map(|i| {
                let mut m = CMat::zeros(self.d, self.d);
                for j in 0..n {
                    m += &self.basis[j] * c(self.gram_inv[(i, j)]);
                }
                m
            })
            .collect();
        Self::new(self.d, dual_basis)
    }

    pub fn rank_one(&self, psi: &CVec) -> RVec {
        self.coordinates(&(psi * psi.adjoint()))
    }

    /// Deterministic spanning family of unit vectors:
    /// `e_k`, `(e_j + e_k)/sqrt 2` and, for complex embeddings, `(e_j + i e_k)/sqrt 2`.
    pub fn grid_vectors(&self) -> Vec<CVec> {
        let d = self.d;
        let unit = |k: usize| CVec::from_fn(d, |i, _| if i == k { c(1.0) } else { c(0.0) });
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut out: Vec<CVec> = (0..d).map(unit).collect();
        for j in 0..d {
            for k in (j + 1)..d {
                out.push((unit(j) + unit(k)) * c(s));
                if !self.real {
                    out.push((unit(j) + unit(k) * Complex64::new(0.0, 1.0)) * c(s));
                }
            }
        }
        out
    }

    pub fn random_vector<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let v = CVec::from_fn(self.d, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = if self.real {
                0.0
            } else {
                rng.sample(StandardNormal)
            };
            Complex64::new(re, im)
        });
        let n = v.norm();
        v / c(n)
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Polyhedral(Vec<RVec>),
    Psd(PsdEmbedding),
}

#[derive(Debug, Clone)]
pub struct Cone {
    backend: Backend,
    ambient_dim: usize,
    tolerance: f64,
}

impl Cone {
    /// Polyhedral cone generated by `generators`; rejects zero generators and non-pointed cones.
    pub fn polyhedral(generators: Vec<RVec>, tolerance: f64) -> Result<Self, ConeError> {
        let n = generators.first().ok_or(ConeError::Empty)?.len();
        for (i, g) in generators.iter().enumerate() {
            if g.len() != n {
                return Err(ConeError::DimensionMismatch {
                    expected: n,
                    found: g.len(),
                });
            }
            if g.amax() <= tolerance {
                return Err(ConeError::ZeroGenerator(i));
            }
        }
        // Pointed iff some linear functional is strictly positive on every generator.
        let mut lp = LinearProgram::minimize();
        let y: Vec<usize> = (0..n).map(|_| lp.free(0.0)).collect();
        for g in &generators {
            let g = normalized(g);
            let terms: Vec<(usize, f64)> = (0..n).map(|k| (y[k], g[k])).collect();
            lp.ge(&terms, 1.0);
        }
        match lp.solve() {
            Ok(_) => {}
            Err(LpError::Infeasible) => return Err(ConeError::NotPointed),
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            backend: Backend::Polyhedral(generators),
            ambient_dim: n,
            tolerance,
        })
    }

    pub fn psd(embedding: PsdEmbedding, tolerance: f64) -> Self {
        let n = embedding.basis.len();
        Self {
            backend: Backend::Psd(embedding),
            ambient_dim: n,
            tolerance,
        }
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn generators(&self) -> Option<&[RVec]> {
        match &self.backend {
            Backend::Polyhedral(g) => Some(g),
            Backend::Psd(_) => None,
        }
    }

    pub fn embedding(&self) -> Option<&PsdEmbedding> {
        match &self.backend {
            Backend::Psd(e) => Some(e),
            Backend::Polyhedral(_) => None,
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        matches!(self.backend, Backend::Polyhedral(_))
    }

    fn check_dim(&self, v: &RVec) -> Result<(), ConeError> {
        if v.len() != self.ambient_dim {
            return Err(ConeError::DimensionMismatch {
                expected: self.ambient_dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    fn scale_tol(&self, v: &RVec) -> f64 {
        self.tolerance * v.amax().max(1.0)
    }

    /// Distance-like violation: L1 residual of the best conic fit (polyhedral) or the
    /// negative part of the smallest eigenvalue (psd).
    pub fn violation(&self, v: &RVec) -> Result<f64, ConeError> {
        self.check_dim(v)?;
        match &self.backend {
            Backend::Polyhedral(gens) => conic_residual(gens, v),
            Backend::Psd(e) => Ok((-min_eigenvalue(&e.synthesize(v))).max(0.0)),
        }
    }

    pub fn member(&self, v: &RVec) -> Result<bool, ConeError> {
        Ok(self.violation(v)? <= self.scale_tol(v))
    }

    /// Dual cone with respect to the dot product.
    pub fn dual(&self) -> Result<Cone, ConeError> {
        match &self.backend {
            Backend::Polyhedral(gens) => {
                let rays =
                    rays_of_halfspaces(gens, self.ambient_dim, self.tolerance, GENERATOR_BUDGET)?;
                Cone::polyhedral(rays, self.tolerance)
            }
            Backend::Psd(e) => Ok(Cone::psd(e.dual()?, self.tolerance)),
        }
    }

    /// Irredundant generators, normalised to unit norm, in input order.
    pub fn extremal_rays(&self) -> Result<Vec<RVec>, ConeError> {
        let gens = match &self.backend {
            Backend::Polyhedral(g) => g,
            Backend::Psd(_) => {
                return Err(ConeError::Unsupported(
                    "psd cones have a continuum of extremal rays; use grid_extremals".into(),
                ))
            }
        };
        let mut list: Vec<RVec> = Vec::new();
        for g in gens {
            let g = normalized(g);
            if !list.iter().any(|h| same_ray(h, &g, self.tolerance)) {
                list.push(g);
            }
        }
        let mut keep = vec![true; list.len()];
        for i in 0..list.len() {
            let others: Vec<RVec> = (0..list.len())
                .filter(|&j| j != i && keep[j])
                .map(|j| list[j].clone())
                .collect();
            if !others.is_empty() && conic_residual(&others, &list[i])? <= self.tolerance {
                keep[i] = false;
            }
        }
        Ok(list
            .into_iter()
            .zip(keep)
            .filter_map(|(g, k)| k.then_some(g))
            .collect())
    }

    /// True if `v` spans an extremal ray.
    pub fn is_extremal(&self, v: &RVec) -> Result<bool, ConeError> {
        self.check_dim(v)?;
        if v.amax() <= self.tolerance {
            return Ok(false);
        }
        match &self.backend {
            Backend::Polyhedral(gens) => {
                if !self.member(v)? {
                    return Ok(false);
                }
                let others: Vec<RVec> = gens
                    .iter()
                    .filter(|g| !same_ray(g, v, self.tolerance.max(1e-7)))
                    .cloned()
                    .collect();
                if others.is_empty() {
                    return Ok(true);
                }
                let u = normalized(v);
                Ok(conic_residual(&others, &u)? > self.tolerance.max(1e-8))
            }
            Backend::Psd(e) => {
                let m = e.synthesize(v);
                let (vals, _) = eigh(&m);
                let top = vals[vals.len() - 1];
                if vals[0] < -self.scale_tol(v) || top <= self.tolerance {
                    return Ok(false);
                }
                let rest: f64 = vals.iter().take(vals.len() - 1).map(|x| x.abs()).sum();
                Ok(rest <= self.tolerance.max(1e-10) * top.max(1.0) * 10.0)
            }
        }
    }

    /// `sup { t >= 0 : base - t * dir in cone }`, `INFINITY` if unbounded.
    pub fn max_scale(&self, base: &RVec, dir: &RVec) -> Result<f64, ConeError> {
        self.check_dim(base)?;
        self.check_dim(dir)?;
        if !self.member(base)? {
            return Err(ConeError::NotMember);
        }
        match &self.backend {
            Backend::Polyhedral(gens) => {
                let n = self.ambient_dim;
                let mut lp = LinearProgram::maximize();
                let t = lp.nonneg(1.0);
                let cs: Vec<usize> = gens.iter().map(|_| lp.nonneg(0.0)).collect();
                let slack: Vec<(usize, usize)> =
                    (0..n).map(|_| (lp.nonneg(-1e6), lp.nonneg(-1e6))).collect();
                for k in 0..n {
                    let mut terms: Vec<(usize, f64)> =
                        cs.iter().zip(gens).map(|(&ci, g)| (ci, g[k])).collect();
                    terms.push((t, dir[k]));
                    terms.push((slack[k].0, 1.0));
                    terms.push((slack[k].1, -1.0));
                    lp.eq(&terms, base[k]);
                }
                match lp.solve() {
                    Ok(s) => Ok(s.values[t]),
                    Err(LpError::Unbounded) => Ok(f64::INFINITY),
                    Err(e) => Err(e.into()),
                }
            }
            Backend::Psd(e) => {
                let b = e.synthesize(base);
                let d = e.synthesize(dir);
                let (vals, _) = eigh(&b);
                if vals[0] > 1e-8 * vals[vals.len() - 1].max(1.0) {
                    let inv_sqrt = spectral_map(&b, |x| 1.0 / x.sqrt());
                    let top = max_eigenvalue(&(&inv_sqrt * &d * &inv_sqrt));
                    return Ok(if top <= 0.0 { f64::INFINITY } else { 1.0 / top });
                }
                // Singular base: bisect on the smallest eigenvalue of base - t dir.
                let ok = |t: f64| min_eigenvalue(&(&b - &d * c(t))) >= -self.tolerance;
                let mut hi = 1.0;
                while ok(hi) {
                    hi *= 2.0;
                    if hi > 1e12 {
                        return Ok(f64::INFINITY);
                    }
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if ok(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(lo)
            }
        }
    }

    /// Smallest value of a unit dual functional on `v`; positive iff `v` is interior.
    pub fn interior_margin(&self, v: &RVec) -> Result<f64, ConeError> {
        self.check_dim(v)?;
        match &self.backend {
            Backend::Polyhedral(gens) => {
                let rays =
                    rays_of_halfspaces(gens, self.ambient_dim, self.tolerance, GENERATOR_BUDGET)?;
                Ok(rays.iter().map(|y| y.dot(v)).fold(f64::INFINITY, f64::min))
            }
            Backend::Psd(e) => Ok(min_eigenvalue(&e.synthesize(v))),
        }
    }

    /// Generators (polyhedral) or a deterministic spanning grid of rank-one rays (psd).
    pub fn grid_extremals(&self) -> Vec<RVec> {
        match &self.backend {
            Backend::Polyhedral(g) => g.clone(),
            Backend::Psd(e) => e.grid_vectors().iter().map(|v| e.rank_one(v)).collect(),
        }
    }

    /// Grid extremals, topped up with random rank-one rays (psd) to `count`.
    pub fn sample_extremals<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<RVec> {
        let mut out = self.grid_extremals();
        if let Backend::Psd(e) = &self.backend {
            while out.len() < count.max(out.len()) {
                out.push(e.rank_one(&e.random_vector(rng)));
            }
        }
        out
    }

    pub fn random_rank_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<RVec> {
        self.embedding().map(|e| e.rank_one(&e.random_vector(rng)))
    }
}

/// Minimal L1 residual `min ||v - sum_i c_i g_i||_1` over `c >= 0`.
pub(crate) fn conic_residual(gens: &[RVec], v: &RVec) -> Result<f64, ConeError> {
    let n = v.len();
    let mut lp = LinearProgram::minimize();
    let cs: Vec<usize> = gens.iter().map(|_| lp.nonneg(0.0)).collect();
    let slack: Vec<(usize, usize)> = (0..n).map(|_| (lp.nonneg(1.0), lp.nonneg(1.0))).collect();
    for k in 0..n {
        let mut terms: Vec<(usize, f64)> = cs.iter().zip(gens).map(|(&ci, g)| (ci, g[k])).collect();
        terms.push((slack[k].0, 1.0));
        terms.push((slack[k].1, -1.0));
        lp.eq(&terms, v[k]);
    }
    let sol = lp.solve()?;
    // Residual recomputed from the primal point rather than read off the objective.
    let mut fit = RVec::zeros(n);
    for (&ci, g) in cs.iter().zip(gens) {
        fit += g * sol.values[ci].max(0.0);
    }
    Ok((v - fit).lp_norm(1))
}

/// Decides whether `map` is a linear isomorphism of `src` onto `dst`.
///
/// Polyhedral sides are checked on all generators; psd sides on the rank-one grid plus
/// random rank-one rays up to `samples`. A singular map is an error, not `false`.
pub fn check_cone_isomorphism<R: Rng + ?Sized>(
    map: &RMat,
    src: &Cone,
    dst: &Cone,
    samples: usize,
    rng: &mut R,
) -> Result<bool, ConeError> {
    if map.ncols() != src.ambient_dim() || map.nrows() != dst.ambient_dim() {
        return Err(ConeError::DimensionMismatch {
            expected: src.ambient_dim(),
            found: map.ncols(),
        });
    }
    if map.nrows() != map.ncols() || rank(map, 1e-12) < map.ncols() {
        return Err(ConeError::SingularMap);
    }
    let inv = map.clone().try_inverse().ok_or(ConeError::SingularMap)?;
    for g in src.sample_extremals(samples, rng) {
        if !dst.member(&(map * &g))? {
            return Ok(false);
        }
    }
    for h in dst.sample_extremals(samples, rng) {
        if !src.member(&(&inv * &h))? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Real symmetric embedding helper: the standard orthonormal basis of symmetric matrices.
pub fn symmetric_basis(d: usize) -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for i in 0..d {
        let mut m = RMat::zeros(d, d);
        m[(i, i)] = 1.0;
        out.push(complexify(&m));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut m = RMat::zeros(d, d);
            m[(i, j)] = s;
            m[(j, i)] = s;
            out.push(complexify(&m));
        }
    }
    out
}

#[cfg(test)]
pub(crate) fn vec_from(x: &[f64]) -> RVec {
    RVec::from_column_slice(x)
}
