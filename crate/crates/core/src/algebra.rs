//! Choi-Jamiolkowski models, the effect algebra they induce, and the reconstruction of a
//! Hilbert-space representation from the tables of a system.
//!
//! A [`CjIso`] sends a complex effect `x` (with operator `X = sum_k x_k B_k`) to the atomic
//! transformation `y -> (V^dag X V)^dag y (V^dag X V)`, for a fixed unitary gauge `V`.
//! Transformations here are complex `dim x dim` matrices acting on complex effect
//! coordinates; composition follows [`Transformation::then`](crate::theory::Transformation::then):
//! the matrix of "`S` after `T`" is `M_T M_S`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cone::Backend;
use crate::linalg::{
    c, complexify, complexify_vec, ctrace_product, cunvec_rows, cvec_rows, eigh, hermitian, lstsq,
    null_space_c, rank_c, rank_of, spectral_map, CMat, CVec, RMat, RVec, I,
};
use crate::report::CheckRecord;
use crate::theory::{ginibre, System, TheoryError, Transformation};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlgebraError {
    #[error("CJ not asserted for this theory")]
    CjNotAsserted,
    #[error("the dyad-to-transformation map is singular")]
    CjSingular,
    #[error("transformation is not atomic (its form has rank {0})")]
    NotAtomic(usize),
    #[error("the zero vector has no phase representative")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("algebra block of dimension {0} is not a perfect square")]
    NotSquareBlock(usize),
    #[error("effect algebra construction failed: {0}")]
    Construction(String),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

pub type Result<T> = std::result::Result<T, AlgebraError>;

/// Kraus-type Choi-Jamiolkowski model.
#[derive(Debug, Clone)]
pub struct CjIso {
    dim: usize,
    n: usize,
    basis: Vec<CMat>,
    dual: Vec<CMat>,
    gauge: CMat,
    asserted: bool,
}

impl CjIso {
    /// Canonical model of a quantum system, read off its psd effect-cone embedding. The
    /// isomorphism is asserted when the embedding spans all Hermitian matrices.
    pub fn quantum(system: &System) -> std::result::Result<Self, TheoryError> {
        let emb = system
            .effect_cone
            .embedding()
            .ok_or(TheoryError::Backend("psd"))?;
        let basis = emb.basis().to_vec();
        let dual = emb.dual().map_err(TheoryError::from)?.basis().to_vec();
        Ok(Self {
            dim: basis.len(),
            n: emb.d(),
            asserted: emb.spans_full() && !emb.is_real(),
            basis,
            dual,
            gauge: CMat::identity(emb.d(), emb.d()),
        })
    }

    /// Model of a classical system as a superselected hybrid of `d` one-dimensional
    /// blocks. It induces the effect algebra but is not an isomorphism.
    pub fn hybrid_diagonal(d: usize) -> Self {
        let basis: Vec<CMat> = (0..d)
            .map(|k| crate::linalg::matrix_unit(d, k, k))
            .collect();
        Self {
            dim: d,
            n: d,
            dual: basis.clone(),
            basis,
            gauge: CMat::identity(d, d),
            asserted: false,
        }
    }

    /// Same model composed with a fixed unitary conjugation `X -> V^dag X V`.
    pub fn with_gauge(mut self, v: CMat) -> Self {
        self.gauge = v;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn asserted(&self) -> bool {
        self.asserted
    }

    pub fn operator(&self, x: &CVec) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for (k, b) in self.basis.iter().enumerate() {
            m += b * x[k];
        }
        m
    }

    pub fn coordinates(&self, op: &CMat) -> CVec {
        CVec::from_fn(self.dim, |k, _| ctrace_product(&self.dual[k], op))
    }

    /// Transformation matrix of `y -> K^dag y K`.
    fn sandwich(&self, k: &CMat) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (j, b) in self.basis.iter().enumerate() {
            m.set_column(j, &self.coordinates(&(k.adjoint() * b * k)));
        }
        m
    }

    /// The atomic transformation assigned to (the ray of) `x`.
    pub fn tau(&self, x: &CVec) -> CMat {
        let k = self.gauge.adjoint() * self.operator(x) * &self.gauge;
        self.sandwich(&k)
    }

    /// Polarised transformation `(1/4) sum_k i^k tau(a + i^k b)`, i.e. `b^dag . a`.
    pub fn tau_pair(&self, b: &CVec, a: &CVec) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        let mut phase = c(1.0);
        for _ in 0..4 {
            out += self.tau(&(a + b * phase)) * phase;
            phase *= I;
        }
        out * c(0.25)
    }

    fn unit(&self, k: usize) -> CVec {
        CVec::from_fn(self.dim, |i, _| if i == k { c(1.0) } else { c(0.0) })
    }

    /// Matrix of the linear map from dyads `|e_p><e_q|` (index `p * dim + q`) to
    /// flattened transformations.
    fn dyad_map(&self) -> CMat {
        let n = self.dim;
        let mut m = CMat::zeros(n * n, n * n);
        for p in 0..n {
            for q in 0..n {
                m.set_column(
                    p * n + q,
                    &cvec_rows(&self.tau_pair(&self.unit(q), &self.unit(p))),
                );
            }
        }
        m
    }

    /// Positive form on complex effects representing `t`.
    pub fn cj_forward(&self, t: &CMat) -> Result<CMat> {
        if !self.asserted {
            return Err(AlgebraError::CjNotAsserted);
        }
        self.check(t)?;
        let n = self.dim;
        let lu = self.dyad_map().lu();
        let v = lu.solve(&cvec_rows(t)).ok_or(AlgebraError::CjSingular)?;
        Ok(cunvec_rows(&v, n, n))
    }

    /// Transformation represented by a form; inverse of [`cj_forward`](Self::cj_forward).
    pub fn cj_inverse(&self, form: &CMat) -> Result<CMat> {
        if !self.asserted {
            return Err(AlgebraError::CjNotAsserted);
        }
        self.check(form)?;
        let n = self.dim;
        Ok(cunvec_rows(&(self.dyad_map() * cvec_rows(form)), n, n))
    }

    fn check(&self, m: &CMat) -> Result<()> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(AlgebraError::DimensionMismatch {
                expected: self.dim,
                found: m.nrows(),
            });
        }
        Ok(())
    }

    /// Phase representative of the effect whose atomic transformation is `t`, or zero.
    pub fn tau_inverse(&self, t: &CMat) -> Result<CVec> {
        let form = self.cj_forward(t)?;
        let (vals, vecs) = eigh(&form);
        let top = vals[vals.len() - 1];
        if top <= 1e-12 {
            return Ok(CVec::zeros(self.dim));
        }
        let r = rank_c(&hermitian(&form), 1e-8);
        if r != 1 {
            return Err(AlgebraError::NotAtomic(r));
        }
        let v = vecs.column(vals.len() - 1) * c(top.sqrt());
        Ok(phase_representative(&v)?.0)
    }

    /// The identity effect `iota`: the representative of the identity transformation
    /// when the model is an isomorphism, otherwise the unit effect of `system`.
    pub fn identity(&self, system: &System) -> Result<CVec> {
        if self.asserted {
            self.tau_inverse(&CMat::identity(self.dim, self.dim))
        } else {
            Ok(complexify_vec(&system.unit_effect))
        }
    }
}

/// `(|x|, phi)` with `x = |x| e^{i phi}` and the first non-negligible coordinate of `|x|`
/// real positive.
pub fn phase_representative(x: &CVec) -> Result<(CVec, f64)> {
    let scale = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale <= 1e-300 {
        return Err(AlgebraError::ZeroVector);
    }
    let idx = x
        .iter()
        .position(|z| z.norm() > 1e-9 * scale)
        .expect("non-zero entry");
    let phi = x[idx].arg();
    Ok((x * Complex64::from_polar(1.0, -phi), phi))
}

/// `x^dag = x_R - i x_I` in coordinates over a Hermitian basis.
pub fn dagger(x: &CVec) -> CVec {
    x.map(|z| z.conj())
}

/// Product `ab = |a||b| e^{i phi(a) + i phi(b)}` with `|a||b|` the representative of
/// the composite of the two atomic transformations.
pub fn effect_multiply(cj: &CjIso, a: &CVec, b: &CVec) -> Result<CVec> {
    let (ra, pa) = match phase_representative(a) {
        Ok(r) => r,
        Err(AlgebraError::ZeroVector) => return Ok(CVec::zeros(cj.dim)),
        Err(e) => return Err(e),
    };
    let (rb, pb) = match phase_representative(b) {
        Ok(r) => r,
        Err(AlgebraError::ZeroVector) => return Ok(CVec::zeros(cj.dim)),
        Err(e) => return Err(e),
    };
    // tau(|a|) o tau(|b|): the effect action applies tau(|a|) first.
    let composite = cj.tau(&rb) * cj.tau(&ra);
    let rep = cj.tau_inverse(&composite)?;
    Ok(rep * Complex64::from_polar(1.0, pa + pb))
}

/// One simple summand of the effect algebra, realised on `C^hilbert_dim`.
#[derive(Debug, Clone)]
pub struct OperatorBlock {
    pub hilbert_dim: usize,
    pub weight: f64,
    module: CMat,
}

/// Finite-dimensional *-algebra on the complex effect space.
#[derive(Debug, Clone)]
pub struct EffectAlgebra {
    pub dim: usize,
    table: Vec<Vec<CVec>>,
    pub identity: CVec,
    pub blocks: Vec<OperatorBlock>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgebraResiduals {
    pub associativity: f64,
    pub dagger: f64,
    pub trace: f64,
    pub identity: f64,
    pub positivity_min_eigenvalue: f64,
    pub representation: f64,
}

impl EffectAlgebra {
    pub fn multiply(&self, a: &CVec, b: &CVec) -> CVec {
        let mut out = CVec::zeros(self.dim);
        for i in 0..self.dim {
            if a[i] == c(0.0) {
                continue;
            }
            for j in 0..self.dim {
                if b[j] != c(0.0) {
                    out += &self.table[i][j] * (a[i] * b[j]);
                }
            }
        }
        out
    }

    pub fn dagger(&self, a: &CVec) -> CVec {
        dagger(a)
    }

    /// `Phi(x) = (iota, x)`.
    pub fn trace_form(&self, x: &CVec) -> Complex64 {
        self.identity.dotc(x)
    }

    /// Matrix of `x -> a x`.
    pub fn left_matrix(&self, a: &CVec) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            m.set_column(j, &self.multiply(a, &unit_c(self.dim, j)));
        }
        m
    }

    /// Matrix of `x -> x b`.
    pub fn right_matrix(&self, b: &CVec) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            m.set_column(j, &self.multiply(&unit_c(self.dim, j), b));
        }
        m
    }

    pub fn hilbert_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.hilbert_dim).sum()
    }

    /// Block-diagonal faithful representation `O(a)`.
    pub fn operator_rep(&self, a: &CVec) -> CMat {
        let n = self.hilbert_dim();
        let la = self.left_matrix(a);
        let mut out = CMat::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            let o = b.module.adjoint() * &la * &b.module;
            out.view_mut((off, off), (b.hilbert_dim, b.hilbert_dim))
                .copy_from(&o);
            off += b.hilbert_dim;
        }
        out
    }

    /// `sum_k w_k Tr[O_k(a)^dag O_k(b)]`.
    pub fn weighted_trace(&self, a: &CVec, b: &CVec) -> Complex64 {
        let (la, lb) = (self.left_matrix(a), self.left_matrix(b));
        self.blocks
            .iter()
            .map(|blk| {
                let oa = blk.module.adjoint() * &la * &blk.module;
                let ob = blk.module.adjoint() * &lb * &blk.module;
                ctrace_product(&oa.adjoint(), &ob) * blk.weight
            })
            .sum()
    }

    /// Structural residuals on the basis and on `samples` random complex effects.
    pub fn residuals<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> AlgebraResiduals {
        let n = self.dim;
        let mut assoc: f64 = 0.0;
        let mut dag: f64 = 0.0;
        let mut trace: f64 = 0.0;
        let mut ident: f64 = 0.0;
        let mut rep: f64 = 0.0;
        let mut vectors: Vec<CVec> = (0..n).map(|k| unit_c(n, k)).collect();
        for _ in 0..samples {
            vectors.push(random_cvec(n, rng));
        }
        for (idx, a) in vectors.iter().enumerate() {
            let b = &vectors[(idx * 7 + 3) % vectors.len()];
            let cc = &vectors[(idx * 5 + 1) % vectors.len()];
            let ab = self.multiply(a, b);
            assoc = assoc
                .max((self.multiply(&ab, cc) - self.multiply(a, &self.multiply(b, cc))).amax_c());
            dag = dag.max((dagger(&ab) - self.multiply(&dagger(b), &dagger(a))).amax_c());
            trace =
                trace.max((self.trace_form(&ab) - self.trace_form(&self.multiply(b, a))).norm());
            ident = ident.max(
                (self.multiply(&self.identity, a) - a)
                    .amax_c()
                    .max((self.multiply(a, &self.identity) - a).amax_c()),
            );
            let oab = self.operator_rep(&ab);
            rep = rep.max(crate::linalg::cmax_abs(
                &(oab - self.operator_rep(a) * self.operator_rep(b)),
            ));
            rep = rep.max(
                (self.weighted_trace(a, b) - self.trace_form(&self.multiply(&dagger(a), b))).norm(),
            );
        }
        let gram = CMat::from_fn(n, n, |i, j| {
            self.trace_form(&self.multiply(&dagger(&unit_c(n, i)), &unit_c(n, j)))
        });
        AlgebraResiduals {
            associativity: assoc,
            dagger: dag,
            trace,
            identity: ident,
            positivity_min_eigenvalue: eigh(&gram).0[0],
            representation: rep,
        }
    }
}

trait AmaxC {
    fn amax_c(&self) -> f64;
}

impl AmaxC for CVec {
    fn amax_c(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn unit_c(n: usize, k: usize) -> CVec {
    CVec::from_fn(n, |i, _| if i == k { c(1.0) } else { c(0.0) })
}

fn random_cvec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    ginibre(n, 1, true, rng).column(0).into_owned()
}

/// `U(x) = iota o tau(iota, x)` as a matrix.
fn gauge_map(cj: &CjIso, iota: &CVec) -> CMat {
    let n = cj.dim;
    let mut u = CMat::zeros(n, n);
    for k in 0..n {
        u.set_column(k, &(cj.tau_pair(iota, &unit_c(n, k)) * iota));
    }
    u
}

/// Assembles the multiplication table from the polarised transformations
/// `tau(iota, a)`, whose composition is linear in both factors, and realises the
/// resulting algebra on a Hilbert space.
pub fn build_effect_algebra(system: &System, cj: &CjIso) -> Result<EffectAlgebra> {
    if cj.dim != system.dim {
        return Err(AlgebraError::DimensionMismatch {
            expected: system.dim,
            found: cj.dim,
        });
    }
    let n = cj.dim;
    let iota = cj.identity(system)?;
    let u = gauge_map(cj, &iota);
    let u_lu = u.clone().lu();
    let pol: Vec<CMat> = (0..n).map(|k| cj.tau_pair(&iota, &unit_c(n, k))).collect();
    let mut table = vec![vec![CVec::zeros(n); n]; n];
    for i in 0..n {
        for j in 0..n {
            let image = &pol[j] * (&pol[i] * &iota);
            table[i][j] = u_lu
                .solve(&image)
                .ok_or_else(|| AlgebraError::Construction("gauge map is singular".into()))?;
        }
    }
    let mut alg = EffectAlgebra {
        dim: n,
        table,
        identity: iota,
        blocks: Vec::new(),
    };
    alg.blocks = decompose(&alg)?;
    Ok(alg)
}

fn cluster(values: &[f64], gap: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &v in values {
        if out.last().is_none_or(|&l| v - l > gap) {
            out.push(v);
        }
    }
    out
}

/// Spectral projection of the self-adjoint `h` onto eigenvalue `values[k]`, relative to
/// the unit `unit` of the sub-algebra containing `h`.
fn spectral_projection(
    alg: &EffectAlgebra,
    h: &CVec,
    unit: &CVec,
    values: &[f64],
    k: usize,
) -> CVec {
    let mut p = unit.clone();
    for (j, &l) in values.iter().enumerate() {
        if j != k {
            let factor = (h - unit * c(l)) * c(1.0 / (values[k] - l));
            p = alg.multiply(&p, &factor);
        }
    }
    p
}

/// Orthonormal basis (columns) of the span of `vectors`.
fn orthonormal_span(vectors: &[CVec]) -> CMat {
    let m = CMat::from_columns(vectors);
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let top = svd.singular_values.max().max(1e-300);
    let r = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-8 * top)
        .count();
    u.columns(0, r).into_owned()
}

fn decompose(alg: &EffectAlgebra) -> Result<Vec<OperatorBlock>> {
    let n = alg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    // Centre: z with z e_j = e_j z for every basis element.
    let mut rows = CMat::zeros(n * n, n);
    for k in 0..n {
        for j in 0..n {
            let diff = &alg.table[k][j] - &alg.table[j][k];
            for r in 0..n {
                rows[(j * n + r, k)] = diff[r];
            }
        }
    }
    let centre = null_space_c(&rows, 1e-7);
    let mut h = CVec::zeros(n);
    for z in &centre {
        h += (z + dagger(z)) * c(rng.gen_range(0.5..1.5));
    }
    let lh = hermitian(&alg.left_matrix(&h));
    let spread = eigh(&lh).0;
    let values = cluster(spread.as_slice(), 1e-6 * spread.amax().max(1.0));
    let central: Vec<CVec> = if values.len() <= 1 {
        vec![alg.identity.clone()]
    } else {
        (0..values.len())
            .map(|k| spectral_projection(alg, &h, &alg.identity, &values, k))
            .collect()
    };
    let mut blocks = Vec::new();
    for p in central {
        let span: Vec<CVec> = (0..n).map(|i| alg.multiply(&unit_c(n, i), &p)).collect();
        let q = orthonormal_span(&span);
        let r = q.ncols();
        let m = (r as f64).sqrt().round() as usize;
        if m * m != r {
            return Err(AlgebraError::NotSquareBlock(r));
        }
        let minimal = if m == 1 {
            p.clone()
        } else {
            let mut found = None;
            for _ in 0..8 {
                let mut g = CVec::zeros(n);
                for i in 0..n {
                    let e = unit_c(n, i);
                    g += (&e + dagger(&e)) * c(rng.gen_range(-1.0..1.0));
                }
                let g = alg.multiply(&alg.multiply(&p, &g), &p);
                let restricted = hermitian(&(q.adjoint() * alg.left_matrix(&g) * &q));
                let ev = eigh(&restricted).0;
                let vals = cluster(ev.as_slice(), 1e-6 * ev.amax().max(1.0));
                if vals.len() == m {
                    found = Some(spectral_projection(alg, &g, &p, &vals, 0));
                    break;
                }
            }
            found.ok_or_else(|| {
                AlgebraError::Construction("no generic element with simple spectrum".into())
            })?
        };
        let module_span: Vec<CVec> = (0..n)
            .map(|i| alg.multiply(&unit_c(n, i), &minimal))
            .collect();
        let module = orthonormal_span(&module_span);
        if module.ncols() != m {
            return Err(AlgebraError::Construction(format!(
                "minimal left ideal has dimension {} instead of {m}",
                module.ncols()
            )));
        }
        let weight = alg.trace_form(&p).re / m as f64;
        blocks.push(OperatorBlock {
            hilbert_dim: m,
            weight,
            module,
        });
    }
    Ok(blocks)
}

/// `(a^dag b, a b^dag)` from the scalar-product identities `(c, a^dag b) = (ac, b)` and
/// `(c, a b^dag) = (cb, a)`, with the coordinate scalar product.
pub fn mixed_products(alg: &EffectAlgebra, a: &CVec, b: &CVec) -> (CVec, CVec) {
    (
        alg.left_matrix(a).adjoint() * b,
        alg.right_matrix(b).adjoint() * a,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct KrausActionReport {
    /// Coordinates of the gauge unitary `u` with `U(a) = u^dag a u`.
    pub gauge: Vec<(f64, f64)>,
    pub unitarity_residual: f64,
    pub gauge_residual: f64,
    pub action_residual: f64,
    pub identity_is_unit_residual: f64,
}

/// Recovers the gauge `u` and verifies `x o tau(|a|) = U(a^dag) x U(a)` on the basis
/// and on random effects, together with `iota = e`.
pub fn kraus_action_check<R: Rng + ?Sized>(
    system: &System,
    cj: &CjIso,
    alg: &EffectAlgebra,
    samples: usize,
    rng: &mut R,
) -> Result<KrausActionReport> {
    let n = cj.dim;
    let iota = &alg.identity;
    let u_map = gauge_map(cj, iota);
    let images: Vec<CVec> = (0..n).map(|k| u_map.column(k).into_owned()).collect();
    // u U(e_k) - e_k u = 0 for every k.
    let mut rows = CMat::zeros(n * n, n);
    for (k, img) in images.iter().enumerate() {
        let m = alg.right_matrix(img) - alg.left_matrix(&unit_c(n, k));
        rows.view_mut((k * n, 0), (n, n)).copy_from(&m);
    }
    let unitarity = |u: &CVec| {
        let s = alg.multiply(&dagger(u), u);
        (s - iota).amax_c()
    };
    let mut candidates: Vec<CVec> = vec![iota.clone()];
    candidates.extend(null_space_c(&rows, 1e-7));
    let mut best = iota.clone();
    let mut best_score = f64::INFINITY;
    for cand in candidates {
        let s = alg.multiply(&dagger(&cand), &cand);
        let norm = alg.trace_form(&s).re / alg.trace_form(iota).re;
        if norm <= 1e-12 {
            continue;
        }
        let u = cand * c(1.0 / norm.sqrt());
        let score = (&rows * &u).amax_c() + unitarity(&u);
        if score < best_score {
            best_score = score;
            best = u;
        }
    }
    let u = best;
    let u_dag = dagger(&u);
    let gauge_of = |a: &CVec| alg.multiply(&alg.multiply(&u_dag, a), &u);
    let mut gauge_res: f64 = 0.0;
    for (k, img) in images.iter().enumerate() {
        gauge_res = gauge_res.max((gauge_of(&unit_c(n, k)) - img).amax_c());
    }
    let mut action: f64 = 0.0;
    let mut effects: Vec<CVec> = (0..n).map(|k| unit_c(n, k)).collect();
    for _ in 0..samples {
        effects.push(random_cvec(n, rng));
    }
    for a in &effects {
        let t = cj.tau(a);
        let ua = gauge_of(a);
        let ua_dag = dagger(&ua);
        for j in 0..n {
            let x = unit_c(n, j);
            let lhs = &t * &x;
            let rhs = alg.multiply(&alg.multiply(&ua_dag, &x), &ua);
            action = action.max((lhs - rhs).amax_c());
        }
    }
    Ok(KrausActionReport {
        gauge: u.iter().map(|z| (z.re, z.im)).collect(),
        unitarity_residual: unitarity(&u),
        gauge_residual: gauge_res,
        action_residual: action,
        identity_is_unit_residual: (iota - complexify_vec(&system.unit_effect)).amax_c(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AtomicityReport {
    pub pairs_tested: usize,
    pub violations: usize,
    pub holds: bool,
}

/// Composes pairs of atomic transformations and checks that each composite is atomic or
/// zero. Polyhedral systems use the extremal rays of the transformation cone; psd systems
/// use random rank-one Kraus maps.
pub fn check_atomicity_closure<R: Rng + ?Sized>(
    system: &System,
    pairs: usize,
    rng: &mut R,
) -> Result<AtomicityReport> {
    let atoms: Vec<Transformation> = match system.effect_cone.backend() {
        Backend::Polyhedral(_) => system.atomic_rays()?,
        Backend::Psd(emb) => (0..pairs.max(2))
            .map(|_| {
                let k = ginibre(emb.d(), emb.d(), !emb.is_real(), rng);
                system.kraus_map(&[k])
            })
            .collect::<std::result::Result<_, _>>()?,
    };
    let mut all_pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..atoms.len() {
        for j in 0..atoms.len() {
            all_pairs.push((i, j));
        }
    }
    if all_pairs.len() > pairs {
        let mut chosen = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            chosen.push(all_pairs[rng.gen_range(0..all_pairs.len())]);
        }
        all_pairs = chosen;
    }
    let mut violations = 0;
    for &(i, j) in &all_pairs {
        let comp = atoms[i].then(&atoms[j]);
        let zero = comp.matrix.amax() <= system.tolerance() * atoms[i].matrix.amax().max(1.0);
        if !zero && !system.is_atomic(&comp)? {
            violations += 1;
        }
    }
    Ok(AtomicityReport {
        pairs_tested: all_pairs.len(),
        violations,
        holds: violations == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Quantum,
    Hybrid,
    NotQuantum,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionBlock {
    /// Dimension of the block's share of the effect space.
    pub effect_dim: usize,
    pub hilbert_dim: usize,
    /// Operators of the reference observable restricted to this block.
    #[serde(skip)]
    pub effect_operators: Vec<CMat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionResiduals {
    pub pairing: f64,
    pub kraus: f64,
    pub composition: f64,
    pub saturation_dim: usize,
    pub algebra_dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionResult {
    pub verdict: Verdict,
    pub blocks: Vec<ReconstructionBlock>,
    /// Kraus operators fitted to the atomic transformations, on the direct sum of the
    /// block Hilbert spaces.
    #[serde(skip)]
    pub transformation_kraus: Vec<CMat>,
    /// Input states paired with their fitted density operators.
    #[serde(skip)]
    pub fitted_states: Vec<(RVec, CMat)>,
    pub residuals: ReconstructionResiduals,
    pub notes: Vec<String>,
}

/// Block decomposition of the effect cone: matroid components of the extremal rays
/// (polyhedral) or a single block (psd). Returns, per block, a basis of its subspace.
fn effect_blocks(system: &System) -> Vec<Vec<RVec>> {
    let rays = match system.effect_cone.backend() {
        Backend::Psd(_) => {
            let n = system.dim;
            return vec![(0..n)
                .map(|k| RVec::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))
                .collect()];
        }
        Backend::Polyhedral(_) => system.effect_rays().to_vec(),
    };
    let mut basis: Vec<usize> = Vec::new();
    for (i, r) in rays.iter().enumerate() {
        let mut cand: Vec<RVec> = basis.iter().map(|&b| rays[b].clone()).collect();
        cand.push(r.clone());
        if rank_of(&cand, 1e-9) == cand.len() {
            basis.push(i);
        }
    }
    let mut parent: Vec<usize> = (0..rays.len()).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    let b_mat = RMat::from_columns(&basis.iter().map(|&b| rays[b].clone()).collect::<Vec<_>>());
    for (i, r) in rays.iter().enumerate() {
        if basis.contains(&i) {
            continue;
        }
        let (coef, _) = lstsq(&b_mat, r, 1e-12);
        for (k, &b) in basis.iter().enumerate() {
            if coef[k].abs() > 1e-9 {
                let (x, y) = (find(&mut parent, i), find(&mut parent, b));
                parent[x] = y;
            }
        }
    }
    let mut groups: Vec<(usize, Vec<RVec>)> = Vec::new();
    for (i, r) in rays.iter().enumerate() {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(g, _)| *g == root) {
            Some((_, v)) => v.push(r.clone()),
            None => groups.push((root, vec![r.clone()])),
        }
    }
    groups
        .into_iter()
        .map(|(_, v)| orthonormal_real(&v))
        .collect()
}

fn orthonormal_real(v: &[RVec]) -> Vec<RVec> {
    let m = RMat::from_columns(v);
    let svd = m.svd(true, false);
    let u = svd.u.expect("u");
    let top = svd.singular_values.max().max(1e-300);
    (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-9 * top)
        .map(|k| u.column(k).into_owned())
        .collect()
}

fn isqrt_ceil(m: usize) -> usize {
    let mut n = (m as f64).sqrt().floor() as usize;
    while n * n < m {
        n += 1;
    }
    n
}

/// Operator map `a -> O(a)` on block-diagonal Hermitian matrices with `O(e) = I`.
struct OperatorMap {
    sizes: Vec<usize>,
    total: usize,
    /// Real basis of block-diagonal Hermitian matrices.
    herm_basis: Vec<CMat>,
    /// `dim x herm_basis.len()` matrix sending coefficients to effect coordinates.
    to_effect: RMat,
    /// Inverse of `to_effect`.
    from_effect: RMat,
}

impl OperatorMap {
    fn op(&self, a: &RVec) -> CMat {
        let coef = &self.from_effect * a;
        let mut m = CMat::zeros(self.total, self.total);
        for (k, b) in self.herm_basis.iter().enumerate() {
            m += b * c(coef[k]);
        }
        m
    }

    /// Effect vector of a block-diagonal Hermitian matrix.
    fn inverse(&self, h: &CMat) -> RVec {
        let coef = RVec::from_fn(self.herm_basis.len(), |k, _| {
            crate::linalg::trace_product(&self.herm_basis[k], h)
        });
        &self.to_effect * coef
    }

    /// Effect vectors `(x, y)` with `O(x) + i O(y) = m` for a block-diagonal `m`.
    fn inverse_complex(&self, m: &CMat) -> (RVec, RVec) {
        let re = hermitian(m);
        let im = (m - m.adjoint()) * Complex64::new(0.0, -0.5);
        (self.inverse(&re), self.inverse(&im))
    }

    fn offset(&self, block: usize) -> usize {
        self.sizes[..block].iter().sum()
    }
}

/// Reconstructs a Hilbert-space model from the effect cone, the atomic transformations
/// and the states of `system`.
pub fn reconstruct(system: &System) -> Result<ReconstructionResult> {
    let n = system.dim;
    let mut notes = Vec::new();
    let blocks = effect_blocks(system);
    let mut out_blocks: Vec<ReconstructionBlock> = blocks
        .iter()
        .map(|b| ReconstructionBlock {
            effect_dim: b.len(),
            hilbert_dim: isqrt_ceil(b.len()),
            effect_operators: Vec::new(),
        })
        .collect();
    let empty = |verdict, notes, blocks| ReconstructionResult {
        verdict,
        blocks,
        transformation_kraus: Vec::new(),
        fitted_states: Vec::new(),
        residuals: ReconstructionResiduals {
            pairing: f64::NAN,
            kraus: f64::NAN,
            composition: f64::NAN,
            saturation_dim: 0,
            algebra_dim: 0,
        },
        notes,
    };
    if out_blocks.iter().map(|b| b.effect_dim).sum::<usize>() != n {
        notes.push("effect cone does not split as a direct sum of its blocks".into());
        return Ok(empty(Verdict::NotQuantum, notes, out_blocks));
    }
    for b in &out_blocks {
        if b.hilbert_dim * b.hilbert_dim != b.effect_dim {
            notes.push(format!(
                "block of dimension {} is not a perfect square",
                b.effect_dim
            ));
            return Ok(empty(Verdict::NotQuantum, notes, out_blocks));
        }
        if system.effect_cone.is_polyhedral() && b.hilbert_dim > 1 {
            notes.push(format!(
                "polyhedral block of dimension {} cannot be a positive-semidefinite cone",
                b.effect_dim
            ));
            return Ok(empty(Verdict::NotQuantum, notes, out_blocks));
        }
    }

    // Operator map with O(e) = I.
    let sizes: Vec<usize> = out_blocks.iter().map(|b| b.hilbert_dim).collect();
    let total: usize = sizes.iter().sum();
    let omap = match system.effect_cone.backend() {
        Backend::Psd(emb) => {
            let unit = emb.synthesize(&system.unit_effect);
            let inv_half = spectral_map(&unit, |x| 1.0 / x.sqrt());
            let half = spectral_map(&unit, |x| x.sqrt());
            let herm_basis = crate::builtins::hermitian_basis(total);
            // Effect vector of H: coordinates of E^{1/2} H E^{1/2}.
            let to_effect = RMat::from_columns(
                &herm_basis
                    .iter()
                    .map(|h| emb.coordinates(&(&half * h * &half)))
                    .collect::<Vec<_>>(),
            );
            let from_effect = RMat::from_fn(herm_basis.len(), n, |k, j| {
                let mut e = RVec::zeros(n);
                e[j] = 1.0;
                crate::linalg::trace_product(
                    &herm_basis[k],
                    &(&inv_half * emb.synthesize(&e) * &inv_half),
                )
            });
            OperatorMap {
                sizes: sizes.clone(),
                total,
                herm_basis,
                to_effect,
                from_effect,
            }
        }
        Backend::Polyhedral(_) => {
            // One ray per block; e = sum_i eps_i r_i and O(r_i) = E_ii / eps_i.
            let rays: Vec<RVec> = blocks.iter().map(|b| b[0].clone()).collect();
            let r_mat = RMat::from_columns(&rays);
            let eps = r_mat
                .clone()
                .lu()
                .solve(&system.unit_effect)
                .ok_or_else(|| AlgebraError::Construction("singular block rays".into()))?;
            let herm_basis: Vec<CMat> = (0..total)
                .map(|k| crate::linalg::matrix_unit(total, k, k))
                .collect();
            let to_effect =
                RMat::from_columns(&(0..total).map(|k| &rays[k] * eps[k]).collect::<Vec<_>>());
            let from_effect = to_effect
                .clone()
                .try_inverse()
                .ok_or_else(|| AlgebraError::Construction("singular block rays".into()))?;
            OperatorMap {
                sizes: sizes.clone(),
                total,
                herm_basis,
                to_effect,
                from_effect,
            }
        }
    };
    for (bi, b) in out_blocks.iter_mut().enumerate() {
        let off = omap.offset(bi);
        b.effect_operators = system
            .reference_observable
            .iter()
            .map(|l| {
                omap.op(l)
                    .view((off, off), (b.hilbert_dim, b.hilbert_dim))
                    .into_owned()
            })
            .collect();
    }

    // Atomic transformations and their Kraus operators.
    let atoms: Vec<Transformation> = match system.effect_cone.backend() {
        Backend::Polyhedral(_) => system.atomic_rays()?,
        Backend::Psd(_) => {
            let mut v = Vec::new();
            for t in &system.transformation_generators {
                if system.is_atomic(t)? {
                    v.push(t.clone());
                }
            }
            v
        }
    };
    if atoms.is_empty() {
        notes.push("no atomic transformations among the generators".into());
    }
    let unit_basis: Vec<RVec> = (0..n)
        .map(|k| RVec::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))
        .collect();
    let action_residual = |t: &Transformation, a: &CMat| -> f64 {
        unit_basis
            .iter()
            .map(|x| {
                let lhs = omap.op(&t.on_effect(x));
                let rhs = a.adjoint() * omap.op(x) * a;
                crate::linalg::cmax_abs(&(lhs - rhs))
            })
            .fold(0.0, f64::max)
    };
    let mut kraus = Vec::new();
    let mut kraus_res: f64 = 0.0;
    for t in &atoms {
        let a = fit_kraus(&omap, t);
        kraus_res = kraus_res.max(action_residual(t, &a) / t.matrix.amax().max(1.0));
        kraus.push(a);
    }
    let mut comp_res: f64 = 0.0;
    let k = atoms.len().min(6);
    for i in 0..k {
        for j in 0..k {
            let t = atoms[i].then(&atoms[j]);
            let product = &kraus[j] * &kraus[i];
            comp_res = comp_res.max(action_residual(&t, &product) / t.matrix.amax().max(1.0));
        }
    }

    // Saturation: the algebra generated by the effect operators.
    let mut span: Vec<CVec> = unit_basis.iter().map(|x| cvec_rows(&omap.op(x))).collect();
    let mut span_rank = rank_c(&CMat::from_columns(&span), 1e-9);
    loop {
        let ops: Vec<CMat> = span.iter().map(|v| cunvec_rows(v, total, total)).collect();
        let mut grown = span.clone();
        for a in &ops {
            for b in &ops {
                grown.push(cvec_rows(&(a * b)));
            }
        }
        let basis = orthonormal_span(&grown);
        let r = basis.ncols();
        span = (0..r).map(|k| basis.column(k).into_owned()).collect();
        if r == span_rank {
            break;
        }
        span_rank = r;
    }
    let algebra_dim: usize = sizes.iter().map(|s| s * s).sum();

    // States: least-squares fit, nearest positive operator, trace renormalisation.
    let mut fit_effects: Vec<RVec> = system.reference_observable.clone();
    fit_effects.extend(system.effect_rays().iter().cloned());
    let design = RMat::from_fn(fit_effects.len(), omap.herm_basis.len(), |r, k| {
        crate::linalg::trace_product(&omap.herm_basis[k], &omap.op(&fit_effects[r]))
    });
    let mut states: Vec<RVec> = system.state_vertices().to_vec();
    let bary = states.iter().fold(RVec::zeros(n), |acc, s| acc + s) / states.len() as f64;
    states.push(bary);
    let mut fitted = Vec::new();
    let mut pairing: f64 = 0.0;
    for omega in states {
        let target =
            RVec::from_iterator(fit_effects.len(), fit_effects.iter().map(|a| omega.dot(a)));
        let (coef, _) = lstsq(&design, &target, 1e-12);
        let mut rho = CMat::zeros(total, total);
        for (k, b) in omap.herm_basis.iter().enumerate() {
            rho += b * c(coef[k]);
        }
        let rho = spectral_map(&rho, |x| x.max(0.0));
        let tr: f64 = (0..total).map(|i| rho[(i, i)].re).sum();
        let norm = omega.dot(&system.unit_effect);
        let rho = if tr > 0.0 { rho * c(norm / tr) } else { rho };
        for a in &fit_effects {
            let p = crate::linalg::trace_product(&rho, &omap.op(a));
            pairing = pairing.max((p - omega.dot(a)).abs());
        }
        fitted.push((omega, rho));
    }

    let tol = 1e-8;
    let verdict = if pairing > tol || kraus_res > tol || comp_res > tol || span_rank != algebra_dim
    {
        notes.push("fitted representation does not reproduce the tables".into());
        Verdict::NotQuantum
    } else if out_blocks.len() == 1 {
        Verdict::Quantum
    } else {
        Verdict::Hybrid
    };
    Ok(ReconstructionResult {
        verdict,
        blocks: out_blocks,
        transformation_kraus: kraus,
        fitted_states: fitted,
        residuals: ReconstructionResiduals {
            pairing,
            kraus: kraus_res,
            composition: comp_res,
            saturation_dim: span_rank,
            algebra_dim,
        },
        notes,
    })
}

/// Fits `A` with `O(a o T) = A^dag O(a) A`, block pair by block pair: the compressed map
/// `X_i -> (A^dag X_i A)_jj = B^dag X_i B` is realigned into the rank-one matrix
/// `conj(b) b^T` whose leading eigenvector gives `B = A_ij` up to a phase.
fn fit_kraus(omap: &OperatorMap, t: &Transformation) -> CMat {
    let total = omap.total;
    let mut a = CMat::zeros(total, total);
    for (i, &ni) in omap.sizes.iter().enumerate() {
        let oi = omap.offset(i);
        for (j, &nj) in omap.sizes.iter().enumerate() {
            let oj = omap.offset(j);
            let mut realigned = CMat::zeros(ni * nj, ni * nj);
            for r in 0..ni {
                for s in 0..ni {
                    let unit = crate::linalg::matrix_unit(total, oi + r, oi + s);
                    let (x, y) = omap.inverse_complex(&unit);
                    let out = omap.op(&t.on_effect(&x)) + omap.op(&t.on_effect(&y)) * I;
                    for p in 0..nj {
                        for q in 0..nj {
                            realigned[(r * nj + p, s * nj + q)] = out[(oj + p, oj + q)];
                        }
                    }
                }
            }
            let (vals, vecs) = eigh(&realigned);
            let top = vals[vals.len() - 1];
            if top <= 1e-12 {
                continue;
            }
            let v = vecs.column(vals.len() - 1) * c(top.sqrt());
            for r in 0..ni {
                for p in 0..nj {
                    a[(oi + r, oj + p)] = v[r * nj + p].conj();
                }
            }
        }
    }
    a
}

/// Largest relative deviation of `||O(a)^dag O(a)||` from `||O(a)||^2` over `samples`
/// random complex effects, in the operator norm.
pub fn c_star_residual<R: Rng + ?Sized>(alg: &EffectAlgebra, samples: usize, rng: &mut R) -> f64 {
    let op_norm = |m: &CMat| m.singular_values().max();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let o = alg.operator_rep(&random_cvec(alg.dim, rng));
        let n = op_norm(&o);
        if n <= 1e-12 {
            continue;
        }
        worst = worst.max((op_norm(&(o.adjoint() * &o)) - n * n).abs() / (n * n));
    }
    worst
}

/// Checks of the Choi-Jamiolkowski model: round trip of the form map on random physical
/// transformations, rank-one form of the identity, closure of atomic transformations,
/// effect-algebra residuals, the C* norm identity and the Kraus form of `tau`.
pub fn cj_checks<R: Rng + ?Sized>(
    system: &System,
    cj: Option<&CjIso>,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<CheckRecord>> {
    let names = [
        (
            "cj-round-trip",
            "transformations correspond bijectively to positive forms",
        ),
        (
            "identity-rank-one",
            "the identity transformation has a rank-one form",
        ),
        (
            "effect-algebra",
            "effects form an associative algebra with trace and involution",
        ),
        (
            "c-star-identity",
            "the operator representation satisfies the C* norm identity",
        ),
        (
            "kraus-action",
            "atomic transformations act in Kraus form up to an inner gauge",
        ),
    ];
    let cj = match cj {
        Some(cj) if cj.asserted() => cj,
        _ => {
            return Ok(names
                .iter()
                .map(|(n, a)| {
                    CheckRecord::not_applicable(*n, *a, AlgebraError::CjNotAsserted.to_string())
                })
                .collect())
        }
    };
    let tol = system.tolerance();
    let mut out = Vec::new();

    let mut round: f64 = 0.0;
    let mut min_eig: f64 = f64::INFINITY;
    for _ in 0..samples {
        let t = complex_transformation(&system.random_physical(rng));
        let form = cj.cj_forward(&t)?;
        min_eig = min_eig.min(eigh(&hermitian(&form)).0[0]);
        round = round.max(crate::linalg::cmax_abs(&(cj.cj_inverse(&form)? - &t)));
    }
    out.push(CheckRecord::new(
        names[0].0,
        names[0].1,
        round <= tol * 10.0 && min_eig >= -tol * 10.0,
        round,
        format!("{samples} physical transformations; smallest form eigenvalue {min_eig:.3e}"),
    ));

    let id_form = cj.cj_forward(&CMat::identity(cj.dim, cj.dim))?;
    let r = rank_c(&hermitian(&id_form), 1e-8);
    out.push(CheckRecord::new(
        names[1].0,
        names[1].1,
        r == 1,
        0.0,
        format!("rank {r}"),
    ));

    let alg = build_effect_algebra(system, cj)?;
    let res = alg.residuals(samples, rng);
    let worst = res
        .associativity
        .max(res.dagger)
        .max(res.trace)
        .max(res.identity)
        .max(res.representation);
    out.push(CheckRecord::new(
        names[2].0,
        names[2].1,
        worst <= tol && res.positivity_min_eigenvalue > tol,
        worst,
        format!(
            "complex dimension {}, Hilbert dimension {}, associativity {:.1e}, dagger {:.1e}, trace {:.1e}, smallest Gram eigenvalue {:.3e}",
            alg.dim,
            alg.hilbert_dim(),
            res.associativity,
            res.dagger,
            res.trace,
            res.positivity_min_eigenvalue
        ),
    ));

    let cs = c_star_residual(&alg, samples, rng);
    out.push(CheckRecord::new(
        names[3].0,
        names[3].1,
        cs <= tol * 10.0,
        cs,
        format!("{samples} random effects"),
    ));

    let kr = kraus_action_check(system, cj, &alg, samples.min(20), rng)?;
    let worst = kr
        .unitarity_residual
        .max(kr.gauge_residual)
        .max(kr.action_residual)
        .max(kr.identity_is_unit_residual);
    out.push(CheckRecord::new(
        names[4].0,
        names[4].1,
        worst <= tol * 10.0,
        worst,
        format!(
            "identity equals the unit effect to {:.1e}",
            kr.identity_is_unit_residual
        ),
    ));
    Ok(out)
}

/// Real transformation of a complex transformation that preserves Hermiticity.
pub fn real_part(t: &CMat) -> (RMat, f64) {
    (
        t.map(|z| z.re),
        t.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
    )
}

pub fn complex_transformation(t: &Transformation) -> CMat {
    complexify(&t.matrix)
}
