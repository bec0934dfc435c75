//! Rational-slope approximation of simple k-vectors and of whole
//! decompositions, with exact identities.
//!
//! Unit simple k-vectors with rational coordinates come from exactly
//! orthogonal rational matrices: a float orthonormal frame is completed to
//! `U ∈ O(n)`, moved to its Cayley parameter `S = (I − DU)(I + DU)⁻¹` (a skew
//! matrix; `D` is a sign diagonal keeping `I + DU` well conditioned), `S` is
//! rounded entrywise by continued fractions, and mapped back by
//! `Ũ = D(I − S̃)(I + S̃)⁻¹`, which is rational and orthogonal without error.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::ser::SerializeStruct;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{binomial, multi_indices, wedge_cols, KVector, OrientedPlane};
use crate::linalg;
use crate::lp::{self, LpOutcome};
use crate::polyconvexity::Decomposition;
use crate::scalar::{format_rational, Rational, Scalar};

/// Denominator doublings before giving up.
pub const MAX_DOUBLINGS: usize = 60;
const INITIAL_DENOMINATOR: u32 = 16;

fn rat(x: f64) -> Rational {
    <Rational as Scalar>::from_f64(x)
}

/// Closest rational to `x` with denominator at most `max_den`
/// (continued-fraction convergents plus the final semiconvergent).
pub fn best_rational(x: &Rational, max_den: &BigInt) -> Rational {
    if x.denom() <= max_den {
        return x.clone();
    }
    let (mut p0, mut q0) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    let mut r = x.clone();
    loop {
        let a = r.floor().to_integer();
        let p2 = &a * &p1 + &p0;
        let q2 = &a * &q1 + &q0;
        if &q2 > max_den {
            let t = (max_den - &q0) / &q1;
            let semi = Rational::new(&p0 + &t * &p1, &q0 + &t * &q1);
            let conv = Rational::new(p1, q1);
            return if (&semi - x).abs() < (&conv - x).abs() { semi } else { conv };
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = &r - Rational::from_integer(a);
        if frac.is_zero() {
            return Rational::new(p1, q1);
        }
        r = frac.recip();
    }
}

/// Sign diagonal maximizing `|det(I + DU)|`.
fn cayley_signs(u: &DMatrix<f64>) -> Vec<f64> {
    let n = u.nrows();
    let score = |signs: &[f64]| {
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + signs[i] * u[(i, j)]);
        m.determinant().abs()
    };
    if n <= 10 {
        let mut best = (vec![1.0; n], f64::NEG_INFINITY);
        for mask in 0u32..(1 << n) {
            let signs: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let s = score(&signs);
            if s > best.1 {
                best = (signs, s);
            }
        }
        return best.0;
    }
    // coordinate ascent for large n
    let mut signs = vec![1.0; n];
    let mut current = score(&signs);
    loop {
        let mut improved = false;
        for i in 0..n {
            signs[i] = -signs[i];
            let s = score(&signs);
            if s > current {
                current = s;
                improved = true;
            } else {
                signs[i] = -signs[i];
            }
        }
        if !improved {
            return signs;
        }
    }
}

/// Exactly orthogonal rational matrix near the orthogonal `u`.
pub fn rational_orthogonal(u: &DMatrix<f64>, max_den: &BigInt) -> DMatrix<Rational> {
    let n = u.nrows();
    let signs = cayley_signs(u);
    let a = DMatrix::from_fn(n, n, |i, j| signs[i] * u[(i, j)]);
    let id = DMatrix::<f64>::identity(n, n);
    let plus_inv = (&id + &a).try_inverse().expect("sign choice keeps I + DU invertible");
    let s = (&id - &a) * plus_inv;
    let st = DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => best_rational(&rat(s[(i, j)]), max_den),
        std::cmp::Ordering::Greater => -best_rational(&rat(s[(j, i)]), max_den),
        std::cmp::Ordering::Equal => Rational::zero(),
    });
    let id_q: DMatrix<Rational> = linalg::identity(n);
    let minus = DMatrix::from_fn(n, n, |i, j| &id_q[(i, j)] - &st[(i, j)]);
    let plus = DMatrix::from_fn(n, n, |i, j| &id_q[(i, j)] + &st[(i, j)]);
    // I + S̃ is invertible for every real skew S̃
    let at = linalg::matmul(&minus, &linalg::inverse(&plus).expect("I + skew is invertible"));
    DMatrix::from_fn(n, n, |i, j| if signs[i] < 0.0 { -at[(i, j)].clone() } else { at[(i, j)].clone() })
}

fn leading_columns(m: &DMatrix<Rational>, k: usize) -> DMatrix<Rational> {
    m.columns(0, k).into_owned()
}

/// Rational orthonormal basis of ℝⁿ whose first `k` columns wedge to within
/// `eps` of `plane`.
pub fn rational_orthonormal_basis(plane: &OrientedPlane, eps: f64) -> Result<DMatrix<Rational>> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("eps must be positive, got {eps}")));
    }
    let k = plane.grade();
    let u = linalg::orthogonal_completion(plane.frame());
    let mut bound = BigInt::from(INITIAL_DENOMINATOR);
    for _ in 0..=MAX_DOUBLINGS {
        let ut = rational_orthogonal(&u, &bound);
        let kv = wedge_cols(&leading_columns(&ut, k));
        if kv.to_f64().distance(plane.kvector()) < eps {
            return Ok(ut);
        }
        bound *= 2;
    }
    Err(Error::Approximation(format!("no rational frame within {eps:e} after {MAX_DOUBLINGS} doublings")))
}

/// A simple k-vector `w₁∧…∧w_k` with rational `wᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalSimpleKVector {
    frame: DMatrix<Rational>,
    kvector: KVector<Rational>,
}

impl RationalSimpleKVector {
    pub fn from_frame(frame: DMatrix<Rational>) -> Result<Self> {
        let kvector = wedge_cols(&frame);
        if kvector.is_zero() {
            return Err(Error::ZeroVector("rational frame with dependent columns"));
        }
        Ok(Self { frame, kvector })
    }

    pub fn frame(&self) -> &DMatrix<Rational> {
        &self.frame
    }

    pub fn kvector(&self) -> &KVector<Rational> {
        &self.kvector
    }

    pub fn dim(&self) -> usize {
        self.kvector.dim()
    }

    pub fn grade(&self) -> usize {
        self.kvector.grade()
    }

    pub fn is_unit(&self) -> bool {
        self.kvector.norm_sq().is_one()
    }

    /// Float copy scaled to unit length.
    pub fn unit_f64(&self) -> KVector<f64> {
        self.kvector.to_f64().normalized().expect("nonzero by construction")
    }

    pub fn max_denominator(&self) -> BigInt {
        self.frame.iter().map(|x| x.denom().clone()).max().unwrap_or_else(BigInt::one)
    }
}

impl Serialize for RationalSimpleKVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let frame: Vec<Vec<String>> =
            self.frame.column_iter().map(|c| c.iter().map(format_rational).collect()).collect();
        let coeffs: Vec<String> = self.kvector.coeffs().iter().map(format_rational).collect();
        let mut st = s.serialize_struct("RationalSimpleKVector", 4)?;
        st.serialize_field("n", &self.dim())?;
        st.serialize_field("k", &self.grade())?;
        st.serialize_field("frame", &frame)?;
        st.serialize_field("coeffs", &coeffs)?;
        st.end()
    }
}

/// Rational unit simple k-vector within `eps` of `eta`; coordinate planes
/// come back exactly.
pub fn rational_simple_approx(eta: &OrientedPlane, eps: f64) -> Result<RationalSimpleKVector> {
    let basis = rational_orthonormal_basis(eta, eps)?;
    RationalSimpleKVector::from_frame(leading_columns(&basis, eta.grade()))
}

/// Output of [`caratheodory_reduce`]: surviving atom indices and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduced<S> {
    pub indices: Vec<usize>,
    pub weights: Vec<S>,
}

fn combination_residual<S: Scalar>(target: &[S], atoms: &[Vec<S>], idx: &[usize], w: &[S]) -> Vec<S> {
    let mut res = target.to_vec();
    for (&i, wi) in idx.iter().zip(w) {
        for (r, a) in res.iter_mut().zip(&atoms[i]) {
            *r -= &(wi.clone() * a.clone());
        }
    }
    res
}

fn residual_ok<S: Scalar>(res: &[S]) -> bool {
    if S::EXACT {
        res.iter().all(|r| r.is_zero())
    } else {
        res.iter().all(|r| r.to_f64().abs() <= 1e-10)
    }
}

/// Rewrites `target = Σ λᵢxᵢ` (λ > 0) with linearly independent atoms, hence
/// at most `M` of them, by repeatedly moving along a null combination until
/// a weight vanishes.
pub fn caratheodory_reduce<S: Scalar>(target: &[S], atoms: &[Vec<S>], weights: &[S]) -> Result<Reduced<S>> {
    if atoms.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!("{} atoms, {} weights", atoms.len(), weights.len())));
    }
    let m = target.len();
    if let Some(bad) = atoms.iter().position(|a| a.len() != m) {
        return Err(Error::DimensionMismatch(format!("atom {bad} has length {}, expected {m}", atoms[bad].len())));
    }
    if let Some(bad) = weights.iter().position(|w| w.is_negative()) {
        return Err(Error::Invalid(format!("weight {bad} is negative")));
    }
    let mut idx: Vec<usize> = (0..atoms.len()).filter(|&i| !weights[i].is_zero()).collect();
    let mut w: Vec<S> = idx.iter().map(|&i| weights[i].clone()).collect();
    if !residual_ok(&combination_residual(target, atoms, &idx, &w)) {
        return Err(Error::Invalid("weights do not reproduce the target".into()));
    }
    loop {
        if idx.is_empty() {
            break;
        }
        let mat = DMatrix::from_fn(m, idx.len(), |r, c| atoms[idx[c]][r].clone());
        let ns = linalg::null_space(&mat);
        let Some(mut v) = ns.into_iter().next() else {
            break;
        };
        if !v.iter().any(|x| *x > S::pivot_eps()) {
            v.neg_mut();
        }
        let mut pick: Option<(usize, S)> = None;
        for (j, vj) in v.iter().enumerate() {
            if *vj > S::pivot_eps() {
                let ratio = w[j].clone() / vj.clone();
                if pick.as_ref().is_none_or(|(_, best)| ratio < *best) {
                    pick = Some((j, ratio));
                }
            }
        }
        let Some((drop, t)) = pick else {
            break;
        };
        for (wj, vj) in w.iter_mut().zip(v.iter()) {
            *wj -= &(t.clone() * vj.clone());
        }
        w[drop] = S::zero();
        let keep: Vec<bool> = w.iter().map(|x| *x > S::zero()).collect();
        idx = idx.iter().zip(&keep).filter(|(_, k)| **k).map(|(i, _)| *i).collect();
        w = w.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| x).collect();
    }
    if !residual_ok(&combination_residual(target, atoms, &idx, &w)) {
        return Err(Error::Approximation("reduction lost the target beyond tolerance".into()));
    }
    Ok(Reduced { indices: idx, weights: w })
}

#[derive(Clone, Debug)]
pub struct RationalAtom {
    pub m: Rational,
    pub eta: RationalSimpleKVector,
}

/// Every bound of the approximation statement, evaluated exactly.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BoundLedger {
    pub identity_exact: bool,
    pub original_weights_kept: bool,
    pub eta0_distance: f64,
    pub eta0_within_half_eps: bool,
    /// `max |η̃ᵢ − ηᵢ|·2dmᵢ/ε` over the original atoms; below 1 when the
    /// per-atom bounds hold.
    pub atom_bound_ratio: f64,
    pub atoms_within_bound: bool,
    /// `mᵢ|η̃ᵢ − ηᵢ| < ζ•η̃₀ / d` with `ζ = η̃₀ − η₀`.
    pub zeta_bound: bool,
    pub extra_atoms: usize,
    pub max_extra_atoms: usize,
    pub extra_count_within_bound: bool,
    pub min_inner_with_eta0: f64,
    pub positively_oriented: bool,
    pub new_weights_nonnegative: bool,
    pub all_units: bool,
}

impl BoundLedger {
    pub fn all_hold(&self) -> bool {
        self.identity_exact
            && self.original_weights_kept
            && self.eta0_within_half_eps
            && self.atoms_within_bound
            && self.zeta_bound
            && self.extra_count_within_bound
            && self.positively_oriented
            && self.new_weights_nonnegative
            && self.all_units
    }
}

/// `η̃₀ = Σ mᵢη̃ᵢ` in exact arithmetic; the first `d_original` atoms
/// approximate the input atoms and keep their weights.
#[derive(Clone, Debug, Serialize)]
pub struct RationalDecomposition {
    pub eta0_tilde: RationalSimpleKVector,
    #[serde(serialize_with = "serialize_atoms")]
    pub atoms: Vec<RationalAtom>,
    pub d_original: usize,
    #[serde(rename = "N")]
    pub n_atoms: usize,
    pub eps: f64,
    pub ledger: BoundLedger,
}

fn serialize_atoms<S: serde::Serializer>(atoms: &[RationalAtom], s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Repr<'a> {
        m: String,
        eta: &'a RationalSimpleKVector,
    }
    s.collect_seq(atoms.iter().map(|a| Repr { m: format_rational(&a.m), eta: &a.eta }))
}

impl RationalDecomposition {
    pub fn identity_residual(&self) -> KVector<Rational> {
        let mut r = self.eta0_tilde.kvector().clone();
        for a in &self.atoms {
            r = &r - &a.eta.kvector().scale(&a.m);
        }
        r
    }

    /// Re-evaluates the ledger against the float decomposition it came from.
    pub fn verify(&self, original: &Decomposition, eps: f64) -> BoundLedger {
        let d = original.atoms().len();
        let eps_q = rat(eps);
        let d_q = Rational::from_i64(d as i64);
        let eta0 = original.eta0().kvector().to_rational();
        let e0 = self.eta0_tilde.kvector();
        let zeta = e0 - &eta0;
        let zeta_dot = zeta.inner(e0).expect("same space");
        let eta0_dist_sq = zeta.norm_sq();
        let four = Rational::from_i64(4);

        let mut ratio: f64 = 0.0;
        let mut atoms_ok = self.atoms.len() >= d;
        let mut zeta_ok = true;
        let mut weights_kept = self.atoms.len() >= d;
        for (orig, new) in original.atoms().iter().zip(&self.atoms) {
            let m = rat(orig.weight);
            weights_kept &= new.m == m;
            let diff_sq = (new.eta.kvector() - &orig.plane.kvector().to_rational()).norm_sq();
            // |Δ| < ε/(2dm)  ⇔  4d²m²|Δ|² < ε²
            let lhs = &four * &d_q * &d_q * &m * &m * &diff_sq;
            atoms_ok &= lhs < &eps_q * &eps_q;
            ratio = ratio.max(diff_sq.to_f64().sqrt() * 2.0 * d as f64 * orig.weight / eps);
            // m|Δ| < ζ•η̃₀/d  ⇔  d²m²|Δ|² < (ζ•η̃₀)², with ζ•η̃₀ > 0
            if !(diff_sq.is_zero() && zeta.is_zero()) {
                zeta_ok &= zeta_dot.is_positive() && &d_q * &d_q * &m * &m * &diff_sq < &zeta_dot * &zeta_dot;
            }
        }
        let (n, k) = (original.dim(), original.grade());
        let extra = self.atoms.len().saturating_sub(d);
        let inners: Vec<Rational> = self.atoms.iter().map(|a| a.eta.kvector().inner(e0).expect("same space")).collect();
        let min_inner = inners.iter().map(|x| x.to_f64()).fold(f64::INFINITY, f64::min);
        BoundLedger {
            identity_exact: self.identity_residual().is_zero(),
            original_weights_kept: weights_kept,
            eta0_distance: eta0_dist_sq.to_f64().sqrt(),
            eta0_within_half_eps: &four * &eta0_dist_sq < &eps_q * &eps_q,
            atom_bound_ratio: ratio,
            atoms_within_bound: atoms_ok,
            zeta_bound: zeta_ok,
            extra_atoms: extra,
            max_extra_atoms: binomial(n, k),
            extra_count_within_bound: extra <= binomial(n, k),
            min_inner_with_eta0: min_inner,
            positively_oriented: inners.iter().all(|x| x.is_positive()),
            new_weights_nonnegative: self.atoms.iter().skip(d).all(|a| !a.m.is_negative()),
            all_units: self.eta0_tilde.is_unit() && self.atoms.iter().all(|a| a.eta.is_unit()),
        }
    }
}

/// Rotates `plane` by `theta` towards a direction outside it.
fn rotated(plane: &OrientedPlane, theta: f64) -> Result<OrientedPlane> {
    let (n, k) = (plane.dim(), plane.grade());
    if k == n {
        return Ok(plane.clone());
    }
    let u = linalg::orthogonal_completion(plane.frame());
    let mut w = plane.frame().clone();
    let moved = w.column(0) * theta.cos() + u.column(k) * theta.sin();
    w.set_column(0, &moved);
    OrientedPlane::from_frame(&w)
}

/// Input that is already exact: unit rational atoms with an exact identity.
fn already_rational(dec: &Decomposition, eps: f64) -> Option<RationalDecomposition> {
    let to_rsk = |kv: &KVector<f64>| -> Option<RationalSimpleKVector> {
        let q = kv.to_rational();
        if !q.norm_sq().is_one() {
            return None;
        }
        RationalSimpleKVector::from_frame(q.factor_simple_exact().ok()?).ok()
    };
    let eta0 = to_rsk(dec.eta0().kvector())?;
    let atoms = dec
        .atoms()
        .iter()
        .map(|a| Some(RationalAtom { m: rat(a.weight), eta: to_rsk(a.plane.kvector())? }))
        .collect::<Option<Vec<_>>>()?;
    let d = atoms.len();
    let mut out = RationalDecomposition {
        eta0_tilde: eta0,
        atoms,
        d_original: d,
        n_atoms: d,
        eps,
        ledger: placeholder_ledger(),
    };
    if !out.identity_residual().is_zero() {
        return None;
    }
    out.ledger = out.verify(dec, eps);
    out.ledger.all_hold().then_some(out)
}

fn placeholder_ledger() -> BoundLedger {
    BoundLedger {
        identity_exact: false,
        original_weights_kept: false,
        eta0_distance: f64::NAN,
        eta0_within_half_eps: false,
        atom_bound_ratio: f64::NAN,
        atoms_within_bound: false,
        zeta_bound: false,
        extra_atoms: 0,
        max_extra_atoms: 0,
        extra_count_within_bound: false,
        min_inner_with_eta0: f64::NAN,
        positively_oriented: false,
        new_weights_nonnegative: false,
        all_units: false,
    }
}

/// Rational approximation of a positively oriented decomposition.
///
/// `η̃₀` is a rational plane at distance about `ε/4` from `η₀`, so that
/// `ζ•η̃₀ > 0` for `ζ = η̃₀ − η₀`; the atoms are approximated tightly enough
/// that the exact residual `r = η̃₀ − Σ mᵢη̃ᵢ` has `β = r•η̃₀ > 0`. The
/// component `w' = r − βη̃₀` is then absorbed by a nonnegative combination of
/// exactly unit rational planes tilted off `η̃₀` (found by an exact LP) and
/// reduced to at most `C(n, k)` atoms.
pub fn approximate_decomposition(dec: &Decomposition, eps: f64) -> Result<RationalDecomposition> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Invalid(format!("eps must be positive and finite, got {eps}")));
    }
    dec.check_orientation()?;
    if let Some(exact) = already_rational(dec, eps) {
        return Ok(exact);
    }
    let (n, k) = (dec.dim(), dec.grade());
    let d = dec.atoms().len();
    let big_m = binomial(n, k);
    let eps_q = rat(eps);
    let eta0_q = dec.eta0().kvector().to_rational();
    let weights_q: Vec<Rational> = dec.atoms().iter().map(|a| rat(a.weight)).collect();

    // η̃₀ with its rational orthonormal completion f₁..f_n
    let target0 = rotated(dec.eta0(), eps / 4.0)?;
    let mut tol0 = eps / 16.0;
    let mut chosen = None;
    for _ in 0..MAX_DOUBLINGS {
        let basis = rational_orthonormal_basis(&target0, tol0)?;
        let e0 = wedge_cols(&leading_columns(&basis, k));
        let zeta = &e0 - &eta0_q;
        let close = Rational::from_i64(4) * zeta.norm_sq() < &eps_q * &eps_q;
        if close && zeta.inner(&e0)?.is_positive() {
            chosen = Some((basis, e0));
            break;
        }
        tol0 /= 2.0;
    }
    let Some((basis, e0)) = chosen else {
        return Err(Error::Approximation(
            "could not place η̃₀ with ζ•η̃₀ > 0 inside the ε/2 ball; top-degree inputs admit no such choice".into(),
        ));
    };
    let zeta_dot = (&e0 - &eta0_q).inner(&e0)?;

    let mut delta = eta0_q.clone();
    for (a, m) in dec.atoms().iter().zip(&weights_q) {
        delta = &delta - &a.plane.kvector().to_rational().scale(m);
    }
    let slack = zeta_dot.to_f64() - delta.norm();

    // atoms η̃ᵢ and the residual split r = βη̃₀ + w'
    let mut found = None;
    for attempt in 0..MAX_DOUBLINGS {
        let shrink = 0.5f64.powi(attempt as i32 + 1);
        let mut atoms = Vec::with_capacity(d);
        let mut ok = true;
        for (a, m) in dec.atoms().iter().zip(&weights_q) {
            let mi = a.weight;
            let tol = (eps / (2.0 * d as f64 * mi)).min(slack / (d as f64 * mi)) * shrink;
            if !(tol > 0.0) {
                return Err(Error::Approximation(format!(
                    "float residual of the input identity ({:e}) swamps ζ•η̃₀ ({:e}); increase eps",
                    delta.norm(),
                    zeta_dot.to_f64()
                )));
            }
            let eta = rational_simple_approx(&a.plane, tol)?;
            let diff_sq = (eta.kvector() - &a.plane.kvector().to_rational()).norm_sq();
            let d2m2 = Rational::from_i64((d * d) as i64) * m * m;
            ok &= Rational::from_i64(4) * &d2m2 * &diff_sq < &eps_q * &eps_q
                && &d2m2 * &diff_sq < &zeta_dot * &zeta_dot
                && eta.kvector().inner(&e0)?.is_positive();
            atoms.push(RationalAtom { m: m.clone(), eta });
        }
        if !ok {
            continue;
        }
        let mut r = e0.clone();
        for a in &atoms {
            r = &r - &a.eta.kvector().scale(&a.m);
        }
        let beta = r.inner(&e0)?;
        if beta.is_positive() {
            found = Some((atoms, r, beta));
            break;
        }
    }
    let Some((mut atoms, r, beta)) = found else {
        return Err(Error::Approximation(
            "atoms could not be kept positively oriented against η̃₀; eps is too large for this input".into(),
        ));
    };

    let extra = absorb_residual(&basis, k, &r, &beta, big_m)?;
    atoms.extend(extra);
    let n_atoms = atoms.len();
    let mut out = RationalDecomposition {
        eta0_tilde: RationalSimpleKVector::from_frame(leading_columns(&basis, k))?,
        atoms,
        d_original: d,
        n_atoms,
        eps,
        ledger: placeholder_ledger(),
    };
    out.ledger = out.verify(dec, eps);
    if !out.ledger.all_hold() {
        return Err(Error::Approximation(format!("bound ledger failed: {:?}", out.ledger)));
    }
    Ok(out)
}

/// Writes `r` (with `r•e₁ = β > 0`, `e₁` the leading k-plane of `basis`) as
/// a nonnegative combination of at most `M` exactly unit rational planes.
fn absorb_residual(
    basis: &DMatrix<Rational>,
    k: usize,
    r: &KVector<Rational>,
    beta: &Rational,
    big_m: usize,
) -> Result<Vec<RationalAtom>> {
    let n = basis.nrows();
    let indices = multi_indices(n, k);
    let f_basis: Vec<KVector<Rational>> = indices
        .iter()
        .map(|idx| wedge_cols(&DMatrix::from_fn(n, k, |i, j| basis[(i, idx.indices()[j])].clone())))
        .collect();
    // coordinates of r in the orthonormal basis f_J (index 0 is e₁)
    let r_f: Vec<Rational> = f_basis.iter().map(|f| r.inner(f)).collect::<Result<_>>()?;
    let e1 = RationalSimpleKVector::from_frame(leading_columns(basis, k))?;
    if r_f[1..].iter().all(|x| x.is_zero()) {
        return Ok(vec![RationalAtom { m: beta.clone(), eta: e1 }]);
    }
    let target: Vec<Rational> = r_f[1..].iter().map(|x| x / beta).collect();

    // ρ with |w'/β| < ρ, then tan = (q²−1)/2q with tan ≥ max(1, 2ρ√(M−1))
    let w_sq: Rational = target.iter().map(|x| x * x).sum();
    let mut rho = rat(w_sq.to_f64().sqrt() * 1.01 + 1e-12);
    while &rho * &rho <= w_sq {
        rho *= Rational::from_i64(2);
    }
    let need_sq = Rational::from_i64(4) * &rho * &rho * Rational::from_i64(big_m as i64 - 1);
    let mut q = BigInt::from(((2.0 * rho.to_f64() * ((big_m - 1) as f64).sqrt() * 2.0).ceil() as i64).max(3));
    let (cos, sin) = loop {
        let q_sq = &q * &q;
        let tan = Rational::new(&q_sq - BigInt::one(), BigInt::from(2) * &q);
        if tan >= Rational::one() && &tan * &tan >= need_sq {
            let den = &q_sq + BigInt::one();
            break (Rational::new(BigInt::from(2) * &q, den.clone()), Rational::new(q_sq - BigInt::one(), den));
        }
        q *= 2;
    };

    // tilted planes: pair P = [k] \ J with D = J \ [k] and rotate each pair
    struct Candidate {
        coeffs: DMatrix<Rational>,
        f_coords: Vec<Rational>,
        lead: Rational,
    }
    let mut candidates = Vec::new();
    for idx in indices.iter().skip(1) {
        let j = idx.indices();
        let dset: Vec<usize> = j.iter().copied().filter(|&x| x >= k).collect();
        let pset: Vec<usize> = (0..k).filter(|x| !j.contains(x)).collect();
        let p = pset.len();
        for mask in 0u32..(1 << p) {
            let mut a = DMatrix::from_fn(n, k, |i, c| if i == c { Rational::one() } else { Rational::zero() });
            for (slot, (&pc, &dr)) in pset.iter().zip(&dset).enumerate() {
                a[(pc, pc)] = cos.clone();
                a[(dr, pc)] = if mask >> slot & 1 == 1 { -sin.clone() } else { sin.clone() };
            }
            let f_coords = wedge_cols(&a).into_coeffs();
            let lead = f_coords[0].clone();
            candidates.push(Candidate { coeffs: a, f_coords, lead });
        }
    }

    // y ≥ 0, Σy = 1, Σ y·u = w'/β with u = s/(s•e₁) − e₁
    let rows = big_m;
    let a_lp = DMatrix::from_fn(rows, candidates.len(), |row, c| {
        let cand = &candidates[c];
        if row + 1 < rows {
            &cand.f_coords[row + 1] / &cand.lead
        } else {
            Rational::one()
        }
    });
    let mut b = target.clone();
    b.push(Rational::one());
    let cost = vec![Rational::zero(); candidates.len()];
    let y = match lp::minimize(&a_lp, &b, &cost, lp::DEFAULT_MAX_ITERATIONS)? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Unbounded { .. } => unreachable!("zero objective is bounded"),
    };

    let weights: Vec<Rational> = y.iter().zip(&candidates).map(|(yi, c)| beta * yi / &c.lead).collect();
    let vecs: Vec<Vec<Rational>> = candidates.iter().map(|c| c.f_coords.clone()).collect();
    let reduced = caratheodory_reduce(&r_f, &vecs, &weights)?;
    reduced
        .indices
        .iter()
        .zip(reduced.weights)
        .map(|(&i, m)| {
            let frame = linalg::matmul(basis, &candidates[i].coeffs);
            Ok(RationalAtom { m, eta: RationalSimpleKVector::from_frame(frame)? })
        })
        .collect()
}
