//! Exterior algebra over ℝⁿ in the lexicographic multi-index basis.
//!
//! A grade-k vector in ℝⁿ is stored as its `C(n, k)` coefficients against
//! `e_{i₁} ∧ … ∧ e_{i_k}` with `i₁ < … < i_k`, ordered lexicographically.
//! The basis is orthonormal, so the inner product is the plain dot product
//! of coefficient vectors. All signs come from the parity of the sorting
//! permutation.
//!
//! The Hodge star is pinned down by the duality identity
//! `⟨ξ, ⋆z⟩ = [z ∧ ξ]_{e₁∧…∧eₙ}` for every grade-k `ξ`, which on basis
//! elements gives `⋆e_J = sgn(J, Jᶜ) e_{Jᶜ}`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{format_rational, parse_rational, Rational, Scalar};

/// Default relative rank tolerance for float-mode simplicity decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Strictly increasing 0-based indices `i₁ < … < i_k` into `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(format!("multi-index {indices:?} not strictly increasing")));
        }
        if indices.last().is_some_and(|&i| i >= n) {
            return Err(Error::Invalid(format!("multi-index {indices:?} out of range for n={n}")));
        }
        Ok(Self(indices))
    }

    /// Builds from the 1-based labels used in formulas (`{1,2}` ↦ `e₁∧e₂`).
    pub fn from_one_based(labels: &[usize], n: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::Invalid("multi-index labels start at 1".into()));
        }
        Self::new(labels.iter().map(|l| l - 1).collect(), n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn grade(&self) -> usize {
        self.0.len()
    }

    /// Lexicographic rank among the k-subsets of `0..n`.
    pub fn rank(&self, n: usize) -> usize {
        let k = self.0.len();
        let mut r = 0;
        let mut start = 0;
        for (pos, &i) in self.0.iter().enumerate() {
            for j in start..i {
                r += binomial(n - 1 - j, k - 1 - pos);
            }
            start = i + 1;
        }
        r
    }

    pub fn unrank(mut r: usize, n: usize, k: usize) -> Self {
        let mut out = Vec::with_capacity(k);
        let mut next = 0;
        for pos in 0..k {
            let mut j = next;
            loop {
                let block = binomial(n - 1 - j, k - 1 - pos);
                if r < block {
                    break;
                }
                r -= block;
                j += 1;
            }
            out.push(j);
            next = j + 1;
        }
        Self(out)
    }

    pub fn complement(&self, n: usize) -> Self {
        Self((0..n).filter(|i| !self.0.contains(i)).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

/// All k-subsets of `0..n` in lexicographic order.
pub fn multi_indices(n: usize, k: usize) -> Vec<MultiIndex> {
    (0..binomial(n, k)).map(|r| MultiIndex::unrank(r, n, k)).collect()
}

/// `(-1)^{#{(a, b) : a ∈ A, b ∈ B, a > b}}`: the sign of sorting `A ++ B`.
fn merge_sign(a: &[usize], b: &[usize]) -> bool {
    let mut inversions = 0usize;
    for &x in a {
        inversions += b.iter().filter(|&&y| x > y).count();
    }
    inversions % 2 == 1
}

/// Parity of the permutation sorting `v` (true when odd).
pub fn permutation_parity(v: &[usize]) -> bool {
    let mut odd = false;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                odd = !odd;
            }
        }
    }
    odd
}

#[derive(Clone, Debug, PartialEq)]
pub struct KVector<S: Scalar> {
    n: usize,
    k: usize,
    coeffs: Vec<S>,
}

impl<S: Scalar> KVector<S> {
    pub fn new(n: usize, k: usize, coeffs: Vec<S>) -> Result<Self> {
        if k > n {
            return Err(Error::DimensionMismatch(format!("grade {k} exceeds dimension {n}")));
        }
        let expected = binomial(n, k);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "C({n},{k}) = {expected} coefficients expected, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { n, k, coeffs })
    }

    pub fn zero(n: usize, k: usize) -> Self {
        Self { n, k, coeffs: vec![S::zero(); binomial(n, k)] }
    }

    /// `e_{i₁} ∧ … ∧ e_{i_k}` for a multi-index.
    pub fn basis(n: usize, index: &MultiIndex) -> Self {
        let mut v = Self::zero(n, index.grade());
        v.coeffs[index.rank(n)] = S::one();
        v
    }

    /// Basis blade from 1-based labels, e.g. `&[1, 2]` for `e₁∧e₂`.
    pub fn blade(n: usize, labels: &[usize]) -> Result<Self> {
        Ok(Self::basis(n, &MultiIndex::from_one_based(labels, n)?))
    }

    /// Grade-1 vector from coordinates.
    pub fn vector(v: &[S]) -> Self {
        Self { n: v.len(), k: 1, coeffs: v.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grade(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<S> {
        self.coeffs
    }

    pub fn coeff(&self, index: &MultiIndex) -> &S {
        &self.coeffs[index.rank(self.n)]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::DimensionMismatch(format!(
                "Λ_{}ℝ^{} vs Λ_{}ℝ^{}",
                self.k, self.n, other.k, other.n
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.clone() + b.clone()).collect();
        Ok(Self { n: self.n, k: self.k, coeffs })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.clone() - b.clone()).collect();
        Ok(Self { n: self.n, k: self.k, coeffs })
    }

    pub fn scale(&self, s: &S) -> Self {
        Self { n: self.n, k: self.k, coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect() }
    }

    /// Exterior product.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!("wedge of ℝ^{} and ℝ^{} vectors", self.n, other.n)));
        }
        let n = self.n;
        if self.k + other.k > n {
            return Err(Error::GradeOverflow { j: self.k, l: other.k, n });
        }
        let mut out = Self::zero(n, self.k + other.k);
        let left = multi_indices(n, self.k);
        let right = multi_indices(n, other.k);
        for (a, ca) in left.iter().zip(&self.coeffs) {
            if ca.is_zero() {
                continue;
            }
            for (b, cb) in right.iter().zip(&other.coeffs) {
                if cb.is_zero() || b.0.iter().any(|i| a.0.contains(i)) {
                    continue;
                }
                let mut merged: Vec<usize> = a.0.iter().chain(&b.0).copied().collect();
                merged.sort_unstable();
                let r = MultiIndex(merged).rank(n);
                let term = ca.clone() * cb.clone();
                if merge_sign(&a.0, &b.0) {
                    out.coeffs[r] -= &term;
                } else {
                    out.coeffs[r] += &term;
                }
            }
        }
        Ok(out)
    }

    /// Hodge star from grade `n−k` to grade `k`.
    pub fn hodge_star(&self) -> Self {
        let n = self.n;
        let mut out = Self::zero(n, n - self.k);
        for (j, c) in multi_indices(n, self.k).iter().zip(&self.coeffs) {
            let comp = j.complement(n);
            let r = comp.rank(n);
            out.coeffs[r] = if merge_sign(&j.0, &comp.0) { -c.clone() } else { c.clone() };
        }
        out
    }

    pub fn inner(&self, other: &Self) -> Result<S> {
        self.check_same_space(other)?;
        let mut acc = S::zero();
        for (a, b) in self.coeffs.iter().zip(&other.coeffs) {
            acc += &(a.clone() * b.clone());
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> S {
        let mut acc = S::zero();
        for a in &self.coeffs {
            acc += &(a.clone() * a.clone());
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().to_f64().sqrt()
    }

    pub fn to_f64(&self) -> KVector<f64> {
        KVector { n: self.n, k: self.k, coeffs: self.coeffs.iter().map(|c| c.to_f64()).collect() }
    }

    /// Matrix of `v ↦ v ∧ ξ` (rows: grade-(k+1) coefficients, columns: `e_i`).
    pub fn wedge_map_matrix(&self) -> DMatrix<S> {
        let n = self.n;
        let rows = binomial(n, self.k + 1);
        let mut m = DMatrix::from_element(rows, n, S::zero());
        for i in 0..n {
            let e = Self::basis(n, &MultiIndex(vec![i]));
            let w = e.wedge(self).expect("grade checked by caller");
            for (r, c) in w.coeffs.into_iter().enumerate() {
                m[(r, i)] = c;
            }
        }
        m
    }
}

impl<S: Scalar> Add for &KVector<S> {
    type Output = KVector<S>;
    fn add(self, rhs: Self) -> KVector<S> {
        self.try_add(rhs).expect("same space")
    }
}

impl<S: Scalar> Sub for &KVector<S> {
    type Output = KVector<S>;
    fn sub(self, rhs: Self) -> KVector<S> {
        self.try_sub(rhs).expect("same space")
    }
}

impl<S: Scalar> Neg for &KVector<S> {
    type Output = KVector<S>;
    fn neg(self) -> KVector<S> {
        KVector { n: self.n, k: self.k, coeffs: self.coeffs.iter().map(|c| -c.clone()).collect() }
    }
}

impl<S: Scalar> Mul<&S> for &KVector<S> {
    type Output = KVector<S>;
    fn mul(self, rhs: &S) -> KVector<S> {
        self.scale(rhs)
    }
}

impl KVector<f64> {
    pub fn normalized(&self) -> Result<Self> {
        let nrm = self.norm();
        if nrm == 0.0 {
            return Err(Error::ZeroVector("cannot normalize"));
        }
        Ok(self.scale(&(1.0 / nrm)))
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn to_rational(&self) -> KVector<Rational> {
        KVector { n: self.n, k: self.k, coeffs: self.coeffs.iter().map(|&c| <Rational as Scalar>::from_f64(c)).collect() }
    }

    /// Orthonormal basis (columns) of `{v : v ∧ ξ = 0}`; the wedge map's null
    /// space is cut at `tol · σ_max`.
    pub fn associated_space(&self, tol: f64) -> Result<DMatrix<f64>> {
        if self.is_zero() {
            return Err(Error::ZeroVector("associated space of 0 is all of ℝⁿ"));
        }
        if self.k == self.n {
            return Ok(DMatrix::identity(self.n, self.n));
        }
        Ok(linalg::svd_null_space(&self.wedge_map_matrix(), tol))
    }

    pub fn is_simple(&self, tol: f64) -> Result<bool> {
        Ok(self.associated_space(tol)?.ncols() == self.k)
    }

    /// Frame `W` with orthogonal columns and `wedge_cols(W) = ξ`; scale and
    /// orientation sit in the first column.
    pub fn factor_simple(&self, tol: f64) -> Result<DMatrix<f64>> {
        if self.k == 0 {
            return Err(Error::Invalid("grade-0 vectors have no frame".into()));
        }
        let basis = self.associated_space(tol)?;
        if basis.ncols() != self.k {
            return Err(Error::NotSimple { found: basis.ncols(), expected: self.k });
        }
        let unit = wedge_cols(&basis);
        let lambda = unit.inner(self)?;
        let mut w = basis;
        w.column_mut(0).scale_mut(lambda);
        let residual = wedge_cols(&w).distance(self);
        if residual > tol.max(1e-10) * self.norm() * 10.0 {
            return Err(Error::NotSimple { found: self.k, expected: self.k });
        }
        Ok(w)
    }
}

impl KVector<Rational> {
    /// Exact basis of the associated space (columns, not normalized).
    pub fn associated_space_exact(&self) -> Result<DMatrix<Rational>> {
        if self.is_zero() {
            return Err(Error::ZeroVector("associated space of 0 is all of ℝⁿ"));
        }
        if self.k == self.n {
            return Ok(linalg::identity(self.n));
        }
        let ns = linalg::null_space(&self.wedge_map_matrix());
        if ns.is_empty() {
            return Ok(DMatrix::from_element(self.n, 0, Rational::from_i64(0)));
        }
        Ok(DMatrix::from_columns(&ns))
    }

    pub fn is_simple_exact(&self) -> Result<bool> {
        Ok(self.associated_space_exact()?.ncols() == self.k)
    }

    /// Exact factorization with pairwise orthogonal columns.
    pub fn factor_simple_exact(&self) -> Result<DMatrix<Rational>> {
        if self.k == 0 {
            return Err(Error::Invalid("grade-0 vectors have no frame".into()));
        }
        let basis = self.associated_space_exact()?;
        if basis.ncols() != self.k {
            return Err(Error::NotSimple { found: basis.ncols(), expected: self.k });
        }
        // exact Gram–Schmidt without normalization
        let mut cols: Vec<nalgebra::DVector<Rational>> = Vec::new();
        for j in 0..basis.ncols() {
            let mut v = basis.column(j).into_owned();
            for q in &cols {
                let coef = q.dot(&v) / q.dot(q);
                v -= q * coef;
            }
            cols.push(v);
        }
        let mut w = DMatrix::from_columns(&cols);
        let unit = wedge_cols(&w);
        let pos = unit.coeffs.iter().position(|c| !num_traits::Zero::is_zero(c)).expect("independent columns");
        let lambda = self.coeffs[pos].clone() / unit.coeffs[pos].clone();
        if unit.scale(&lambda) != *self {
            return Err(Error::NotSimple { found: self.k, expected: self.k });
        }
        w.column_mut(0).iter_mut().for_each(|x| *x = x.clone() * lambda.clone());
        Ok(w)
    }
}

/// `w₁ ∧ … ∧ w_k` of the columns; the coefficient at `I` is the minor on rows `I`.
pub fn wedge_cols<S: Scalar>(w: &DMatrix<S>) -> KVector<S> {
    let (n, k) = w.shape();
    let coeffs = multi_indices(n, k)
        .iter()
        .map(|idx| {
            let minor = DMatrix::from_fn(k, k, |i, j| w[(idx.0[i], j)].clone());
            linalg::det(&minor)
        })
        .collect();
    KVector { n, k, coeffs }
}

/// `M(X) = (I_k ; X)` for an `(n−k)×k` matrix.
pub fn stacked_graph_matrix<S: Scalar>(x: &DMatrix<S>) -> DMatrix<S> {
    let (m, k) = x.shape();
    DMatrix::from_fn(m + k, k, |i, j| {
        if i < k {
            if i == j {
                S::one()
            } else {
                S::zero()
            }
        } else {
            x[(i - k, j)].clone()
        }
    })
}

/// The minors map `∧M(X)`.
pub fn wedge_m<S: Scalar>(x: &DMatrix<S>) -> KVector<S> {
    wedge_cols(&stacked_graph_matrix(x))
}

/// Hodge dual of the wedge of the rows of `F`; the flag is `true` when `F`
/// is rank deficient (result zero).
pub fn xi_from_hom<S: Scalar>(f: &DMatrix<S>) -> (KVector<S>, bool) {
    let (rows, n) = f.shape();
    let mut acc = KVector { n, k: 0, coeffs: vec![S::one()] };
    for r in 0..rows {
        let row: Vec<S> = f.row(r).iter().cloned().collect();
        acc = acc.wedge(&KVector::vector(&row)).expect("rows ≤ n");
    }
    let xi = acc.hodge_star();
    let degenerate = xi.is_zero();
    (xi, degenerate)
}

/// A unit simple k-vector together with an orthonormal frame wedging to it.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedPlane {
    kvector: KVector<f64>,
    frame: DMatrix<f64>,
}

impl OrientedPlane {
    /// Normalizes and factors `xi`; fails when `xi` is zero or not simple.
    /// Input that is already unit to rounding keeps its coefficients, so
    /// planes read back from files are bit-identical to the ones written.
    pub fn from_kvector(xi: &KVector<f64>) -> Result<Self> {
        let unit = if (xi.norm_sq() - 1.0).abs() <= 1e-14 { xi.clone() } else { xi.normalized()? };
        let w = unit.factor_simple(DEFAULT_RANK_TOL)?;
        let mut plane = Self::from_frame(&w)?;
        if plane.kvector.distance(&unit) <= 1e-12 {
            plane.kvector = unit;
        }
        Ok(plane)
    }

    pub fn from_frame(w: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = w.shape();
        if k == 0 || k > n {
            return Err(Error::Invalid(format!("frame of shape {n}×{k}")));
        }
        let frame = linalg::orthonormalize(w);
        let kvector = wedge_cols(&frame);
        let nrm = kvector.norm();
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!("frame columns are dependent (|ξ| = {nrm})")));
        }
        Ok(Self { kvector, frame })
    }

    /// `e_{i₁}∧…∧e_{i_k}` from 1-based labels.
    pub fn coordinate(n: usize, labels: &[usize]) -> Result<Self> {
        Self::from_kvector(&KVector::blade(n, labels)?)
    }

    pub fn kvector(&self) -> &KVector<f64> {
        &self.kvector
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.kvector.n
    }

    pub fn grade(&self) -> usize {
        self.kvector.k
    }

    pub fn reversed(&self) -> Self {
        let mut frame = self.frame.clone();
        frame.column_mut(0).neg_mut();
        Self { kvector: -&self.kvector, frame }
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.kvector.inner(&other.kvector)
    }
}

/// JSON coefficient encoding: plain numbers for floats, `"p/q"` for rationals.
pub trait JsonScalar: Scalar {
    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Option<Self>;
}

impl JsonScalar for f64 {
    fn to_json(&self) -> Value {
        serde_json::json!(self)
    }

    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::Number(x) => x.as_f64(),
            Value::String(s) => parse_rational(s).map(|r| r.to_f64()),
            _ => None,
        }
    }
}

impl JsonScalar for Rational {
    fn to_json(&self) -> Value {
        Value::String(format_rational(self))
    }

    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::String(s) => parse_rational(s),
            Value::Number(x) => x.as_f64().map(<Rational as Scalar>::from_f64),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct KVectorRepr {
    n: usize,
    k: usize,
    coeffs: Vec<Value>,
}

impl<S: JsonScalar> Serialize for KVector<S> {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        KVectorRepr { n: self.n, k: self.k, coeffs: self.coeffs.iter().map(JsonScalar::to_json).collect() }
            .serialize(s)
    }
}

impl<'de, S: JsonScalar> Deserialize<'de> for KVector<S> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = KVectorRepr::deserialize(d)?;
        let coeffs = repr
            .coeffs
            .iter()
            .map(|v| S::from_json(v).ok_or_else(|| D::Error::custom(format!("bad coefficient {v}"))))
            .collect::<std::result::Result<Vec<S>, _>>()?;
        KVector::new(repr.n, repr.k, coeffs).map_err(D::Error::custom)
    }
}

impl Serialize for OrientedPlane {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.kvector.serialize(s)
    }
}

impl<'de> Deserialize<'de> for OrientedPlane {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let xi = KVector::<f64>::deserialize(d)?;
        OrientedPlane::from_kvector(&xi).map_err(D::Error::custom)
    }
}
