//! Polyhedral k-chains in ℝⁿ built from oriented simplices.
//!
//! A chain is a list of `(cell, multiplicity)` pairs. The canonical form
//! sorts each cell's vertices (folding the permutation sign into the
//! multiplicity) and merges identical cells, which makes boundaries and
//! chain equality purely combinatorial.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::exterior::{permutation_parity, wedge_cols, JsonScalar, KVector, OrientedPlane};
use crate::integrands::GeometricIntegrand;
use crate::polyconvexity::Decomposition;
use crate::scalar::Scalar;

/// Planes closer than this are the same Gaussian-image atom.
pub const MERGE_TOL: f64 = 1e-9;
const MIN_VOLUME: f64 = 1e-12;

/// An oriented simplex; orientation is the vertex order.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    vertices: Vec<DVector<f64>>,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl Cell {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::Invalid("a cell needs at least one vertex".into()));
        };
        let n = first.len();
        if vertices.iter().any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch("cell vertices live in different spaces".into()));
        }
        if vertices.len() > n + 1 {
            return Err(Error::Invalid(format!("{} vertices cannot be independent in ℝ^{n}", vertices.len())));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite vertex coordinate".into()));
        }
        let cell = Self { vertices };
        if cell.grade() > 0 && cell.volume() <= MIN_VOLUME {
            return Err(Error::Invalid(format!("degenerate {}-cell (volume {:e})", cell.grade(), cell.volume())));
        }
        Ok(cell)
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        Self::new(points.iter().map(|p| DVector::from_vec(p.clone())).collect())
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn grade(&self) -> usize {
        self.vertices.len() - 1
    }

    fn edges(&self) -> DMatrix<f64> {
        let v0 = &self.vertices[0];
        DMatrix::from_columns(&self.vertices[1..].iter().map(|v| v - v0).collect::<Vec<_>>())
    }

    /// k-dimensional volume `√det(EᵀE) / k!`; points have volume 1.
    pub fn volume(&self) -> f64 {
        let k = self.grade();
        if k == 0 {
            return 1.0;
        }
        let e = self.edges();
        (e.transpose() * &e).determinant().max(0.0).sqrt() / factorial(k)
    }

    /// Oriented unit tangent plane.
    pub fn tangent(&self) -> Result<OrientedPlane> {
        if self.grade() == 0 {
            return Err(Error::Invalid("0-cells have no tangent plane".into()));
        }
        OrientedPlane::from_frame(&self.edges())
    }

    /// Unnormalized tangent `(v₁−v₀)∧…∧(v_k−v₀)`.
    pub fn tangent_kvector(&self) -> KVector<f64> {
        wedge_cols(&self.edges())
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        if vertices.len() >= 2 {
            vertices.swap(0, 1);
        }
        Self { vertices }
    }

    fn translated(&self, by: &DVector<f64>) -> Self {
        Self { vertices: self.vertices.iter().map(|v| v + by).collect() }
    }
}

type CellKey = Vec<u64>;

fn coord_bits(x: f64) -> u64 {
    // -0.0 and 0.0 are the same point
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

/// Sorted-vertex cell plus `true` when sorting was an odd permutation.
fn canonical_cell(cell: &Cell) -> (CellKey, Cell, bool) {
    let mut order: Vec<usize> = (0..cell.vertices.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (&cell.vertices[a], &cell.vertices[b]);
        va.iter().zip(vb.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let odd = permutation_parity(&order);
    let vertices: Vec<DVector<f64>> = order.iter().map(|&i| cell.vertices[i].clone()).collect();
    let key = vertices.iter().flat_map(|v| v.iter().map(|&x| coord_bits(x))).collect();
    (key, Cell { vertices }, odd)
}

/// Finite sum of oriented simplices with nonzero multiplicities.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyhedralChain<S: Scalar = f64> {
    n: usize,
    k: usize,
    cells: Vec<(Cell, S)>,
}

impl<S: Scalar> PolyhedralChain<S> {
    pub fn new(n: usize, k: usize, cells: Vec<(Cell, S)>) -> Result<Self> {
        for (i, (c, m)) in cells.iter().enumerate() {
            if c.dim() != n || c.grade() != k {
                return Err(Error::DimensionMismatch(format!(
                    "cell {i} is a {}-cell in ℝ^{}, chain is a {k}-chain in ℝ^{n}",
                    c.grade(),
                    c.dim()
                )));
            }
            if m.is_zero() {
                return Err(Error::Invalid(format!("cell {i} has zero multiplicity")));
            }
        }
        Ok(Self { n, k, cells })
    }

    pub fn empty(n: usize, k: usize) -> Self {
        Self { n, k, cells: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grade(&self) -> usize {
        self.k
    }

    pub fn cells(&self) -> &[(Cell, S)] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn merged(n: usize, k: usize, items: impl IntoIterator<Item = (Cell, S)>) -> Self {
        let mut map: BTreeMap<CellKey, (Cell, S)> = BTreeMap::new();
        for (cell, m) in items {
            let (key, canon, odd) = canonical_cell(&cell);
            let m = if odd { -m } else { m };
            map.entry(key).and_modify(|(_, acc)| *acc += &m).or_insert((canon, m));
        }
        let cells = map.into_values().filter(|(_, m)| !m.is_zero()).collect();
        Self { n, k, cells }
    }

    /// Sorted vertices, merged duplicates, zero cells dropped.
    pub fn canonical(&self) -> Self {
        Self::merged(self.n, self.k, self.cells.iter().cloned())
    }

    pub fn boundary(&self) -> Result<Self> {
        if self.k == 0 {
            return Err(Error::Invalid("0-chains have no boundary".into()));
        }
        let faces = self.cells.iter().flat_map(|(cell, m)| {
            (0..=self.k).map(move |i| {
                let mut vertices = cell.vertices.clone();
                vertices.remove(i);
                let sign = if i % 2 == 0 { m.clone() } else { -m.clone() };
                (Cell { vertices }, sign)
            })
        });
        Ok(Self::merged(self.n, self.k - 1, faces))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::merged(self.n, self.k, self.cells.iter().chain(&other.cells).cloned()))
    }

    pub fn negated(&self) -> Self {
        Self { n: self.n, k: self.k, cells: self.cells.iter().map(|(c, m)| (c.clone(), -m.clone())).collect() }
    }

    pub fn translated(&self, by: &[f64]) -> Result<Self> {
        if by.len() != self.n {
            return Err(Error::DimensionMismatch(format!("translation in ℝ^{}, chain in ℝ^{}", by.len(), self.n)));
        }
        let by = DVector::from_column_slice(by);
        Ok(Self { n: self.n, k: self.k, cells: self.cells.iter().map(|(c, m)| (c.translated(&by), m.clone())).collect() })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::DimensionMismatch(format!(
                "{}-chain in ℝ^{} vs {}-chain in ℝ^{}",
                self.k, self.n, other.k, other.n
            )));
        }
        Ok(())
    }

    /// `Σ |θᵢ|·vol(cellᵢ)`.
    pub fn mass(&self) -> f64 {
        self.cells.iter().map(|(c, m)| m.to_f64().abs() * c.volume()).sum()
    }

    pub fn gaussian_image(&self) -> Result<DiscreteGrassMeasure> {
        let atoms = self
            .cells
            .iter()
            .map(|(c, m)| Ok((c.tangent()?, m.to_f64() * c.volume())))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteGrassMeasure::new(self.n, self.k, atoms))
    }

    /// Cellwise `Σ θᵢ·vol(cellᵢ)·Ψ(τᵢ)`.
    pub fn energy(&self, psi: &GeometricIntegrand) -> Result<f64> {
        self.check_integrand(psi)?;
        let mut total = 0.0;
        for (c, m) in &self.cells {
            total += m.to_f64() * c.volume() * psi.eval(c.tangent()?.kvector())?;
        }
        Ok(total)
    }

    /// The same energy as the pairing `∫ Ψ dγ_T`.
    pub fn energy_via_gaussian_image(&self, psi: &GeometricIntegrand) -> Result<f64> {
        self.check_integrand(psi)?;
        self.gaussian_image()?.pair(psi)
    }

    fn check_integrand(&self, psi: &GeometricIntegrand) -> Result<()> {
        if psi.dim() != self.n || psi.grade() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "integrand on Λ_{}ℝ^{}, chain is a {}-chain in ℝ^{}",
                psi.grade(),
                psi.dim(),
                self.k,
                self.n
            )));
        }
        Ok(())
    }
}

/// Canonical forms agree up to `tol` in every multiplicity.
pub fn chains_equal<S: Scalar>(a: &PolyhedralChain<S>, b: &PolyhedralChain<S>, tol: f64) -> bool {
    if a.n != b.n || a.k != b.k {
        return false;
    }
    let diff = PolyhedralChain::merged(a.n, a.k, a.cells.iter().cloned().chain(b.negated().cells));
    diff.cells.iter().all(|(_, m)| m.to_f64().abs() <= tol)
}

#[derive(Serialize, Deserialize)]
struct CellRepr {
    vertices: Vec<Vec<f64>>,
    multiplicity: Value,
}

#[derive(Serialize, Deserialize)]
struct ChainRepr {
    n: usize,
    k: usize,
    cells: Vec<CellRepr>,
}

impl<S: Scalar + JsonScalar> Serialize for PolyhedralChain<S> {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        ChainRepr {
            n: self.n,
            k: self.k,
            cells: self
                .cells
                .iter()
                .map(|(c, m)| CellRepr {
                    vertices: c.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
                    multiplicity: m.to_json(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de, S: Scalar + JsonScalar> Deserialize<'de> for PolyhedralChain<S> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ChainRepr::deserialize(d)?;
        let cells = repr
            .cells
            .iter()
            .map(|c| {
                let m = S::from_json(&c.multiplicity)
                    .ok_or_else(|| D::Error::custom(format!("bad multiplicity {}", c.multiplicity)))?;
                let cell = Cell::from_points(&c.vertices).map_err(D::Error::custom)?;
                Ok((cell, m))
            })
            .collect::<std::result::Result<Vec<_>, D::Error>>()?;
        PolyhedralChain::new(repr.n, repr.k, cells).map_err(D::Error::custom)
    }
}

/// Finite signed measure on the oriented Grassmannian.
#[derive(Clone, Debug)]
pub struct DiscreteGrassMeasure {
    n: usize,
    k: usize,
    atoms: Vec<(OrientedPlane, f64)>,
}

impl DiscreteGrassMeasure {
    /// Merges atoms whose planes agree within [`MERGE_TOL`] (first plane
    /// kept) and drops atoms whose weight cancels.
    pub fn new(n: usize, k: usize, atoms: impl IntoIterator<Item = (OrientedPlane, f64)>) -> Self {
        let mut merged: Vec<(OrientedPlane, f64)> = Vec::new();
        for (plane, w) in atoms {
            match merged.iter_mut().find(|(p, _)| p.kvector().distance(plane.kvector()) < MERGE_TOL) {
                Some((_, acc)) => *acc += w,
                None => merged.push((plane, w)),
            }
        }
        merged.retain(|(_, w)| w.abs() > 1e-14);
        Self { n, k, atoms: merged }
    }

    /// `Σ mᵢδ_{ηᵢ}` of a decomposition.
    pub fn from_decomposition(dec: &Decomposition) -> Self {
        Self::new(dec.dim(), dec.grade(), dec.atoms().iter().map(|a| (a.plane.clone(), a.weight)))
    }

    pub fn atoms(&self) -> &[(OrientedPlane, f64)] {
        &self.atoms
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// `∫ Ψ dμ`.
    pub fn pair(&self, psi: &GeometricIntegrand) -> Result<f64> {
        let mut acc = 0.0;
        for (p, w) in &self.atoms {
            acc += w * psi.eval(p.kvector())?;
        }
        Ok(acc)
    }
}

/// Atomic total variation `‖μ − ν‖`.
pub fn tv_distance(mu: &DiscreteGrassMeasure, nu: &DiscreteGrassMeasure) -> Result<f64> {
    if mu.n != nu.n || mu.k != nu.k {
        return Err(Error::DimensionMismatch("measures on different Grassmannians".into()));
    }
    let diff = DiscreteGrassMeasure::new(
        mu.n,
        mu.k,
        mu.atoms.iter().cloned().chain(nu.atoms.iter().map(|(p, w)| (p.clone(), -w))),
    );
    Ok(diff.atoms.iter().map(|(_, w)| w.abs()).sum())
}

/// All permutations of `0..k` in lexicographic order.
pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Kuhn simplices of `[0,1]^k` as vertex lists, each positively oriented.
pub(crate) fn kuhn_simplices(k: usize) -> Vec<Vec<DVector<f64>>> {
    permutations(k)
        .into_iter()
        .map(|perm| {
            let mut v = DVector::zeros(k);
            let mut verts = vec![v.clone()];
            for &axis in &perm {
                v[axis] += 1.0;
                verts.push(v.clone());
            }
            if permutation_parity(&perm) {
                verts.swap(1, 2);
            }
            verts
        })
        .collect()
}

/// The unit cube of the plane `η₀` (Kuhn-triangulated, every tangent `η₀`).
pub fn unit_cube_current(eta0: &OrientedPlane) -> Result<PolyhedralChain> {
    let (n, k) = (eta0.dim(), eta0.grade());
    let frame = eta0.frame();
    let cells = kuhn_simplices(k)
        .into_iter()
        .map(|verts| Ok((Cell::new(verts.iter().map(|u| frame * u).collect())?, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    PolyhedralChain::new(n, k, cells)
}

/// `(S, D)` for a decomposition of a unit vector: `D = [0, η₀]` and `S` the
/// polyline through the partial sums `Σ_{i≤j} mᵢηᵢ`.
pub fn make_test_pair_k1(dec: &Decomposition) -> Result<(PolyhedralChain, PolyhedralChain)> {
    let (n, k) = (dec.dim(), dec.grade());
    if k != 1 {
        return Err(Error::Invalid(format!(
            "polyhedral test pairs are only constructed for k = 1 (got k = {k}); general k needs a prescribed-Gaussian-image construction that is out of scope"
        )));
    }
    let end = DVector::from_column_slice(dec.eta0().kvector().coeffs());
    let origin = DVector::zeros(n);
    let d = PolyhedralChain::new(n, 1, vec![(Cell::new(vec![origin.clone(), end.clone()])?, 1.0)])?;
    let mut points = vec![origin];
    let atoms = dec.atoms();
    for (i, a) in atoms.iter().enumerate() {
        let next = if i + 1 == atoms.len() {
            end.clone()
        } else {
            points[i].clone() + DVector::from_column_slice(a.plane.kvector().coeffs()) * a.weight
        };
        points.push(next);
    }
    let cells = points.windows(2).map(|w| Ok((Cell::new(w.to_vec())?, 1.0))).collect::<Result<Vec<_>>>()?;
    Ok((PolyhedralChain::new(n, 1, cells)?, d))
}

/// `E_Ψ(S) − E_Ψ(D) − c·(M(S) − M(D))` for chains with equal boundaries.
pub fn verify_aue(psi: &GeometricIntegrand, c: f64, s: &PolyhedralChain, d: &PolyhedralChain) -> Result<f64> {
    if s.dim() != d.dim() || s.grade() != d.grade() {
        return Err(Error::DimensionMismatch("test pair chains differ in dimension or grade".into()));
    }
    if s.grade() > 0 && !chains_equal(&s.boundary()?, &d.boundary()?, 1e-9) {
        return Err(Error::BoundaryMismatch("∂S ≠ ∂D".into()));
    }
    Ok(s.energy(psi)? - d.energy(psi)? - c * (s.mass() - d.mass()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyconvexity::{random_decomposition, Atom, OrientationMode};
    use crate::scalar::Rational;
    use std::f64::consts::SQRT_2;

    fn seg(a: &[f64], b: &[f64]) -> Cell {
        Cell::from_points(&[a.to_vec(), b.to_vec()]).unwrap()
    }

    fn sqrt2_dec() -> Decomposition {
        let eta0 = OrientedPlane::coordinate(2, &[1]).unwrap();
        let p = OrientedPlane::from_kvector(&KVector::vector(&[1.0, 1.0])).unwrap();
        let q = OrientedPlane::from_kvector(&KVector::vector(&[1.0, -1.0])).unwrap();
        let w = 1.0 / SQRT_2;
        Decomposition::new(eta0, vec![Atom { weight: w, plane: p }, Atom { weight: w, plane: q }]).unwrap()
    }

    #[test]
    fn segment_boundary() {
        let c = PolyhedralChain::new(2, 1, vec![(seg(&[0.0, 0.0], &[1.0, 0.0]), 1.0)]).unwrap();
        let b = c.boundary().unwrap();
        assert_eq!(b.cells().len(), 2);
        let expected = PolyhedralChain::new(
            2,
            0,
            vec![
                (Cell::from_points(&[vec![1.0, 0.0]]).unwrap(), 1.0),
                (Cell::from_points(&[vec![0.0, 0.0]]).unwrap(), -1.0),
            ],
        )
        .unwrap();
        assert!(chains_equal(&b, &expected, 0.0));
    }

    #[test]
    fn square_diagonal_cancels() {
        let sq = unit_cube_current(&OrientedPlane::coordinate(2, &[1, 2]).unwrap()).unwrap();
        assert_eq!(sq.cells().len(), 2);
        let b = sq.boundary().unwrap();
        assert_eq!(b.cells().len(), 4);
        assert!((b.mass() - 4.0).abs() < 1e-15);
        assert!(b.boundary().unwrap().is_empty());
    }

    #[test]
    fn boundary_of_boundary_exact() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 1.0, 0.1], [0.1, 0.4, 1.0]];
        let cell = |i: usize, j: usize, k: usize| {
            Cell::from_points(&[pts[i].to_vec(), pts[j].to_vec(), pts[k].to_vec()]).unwrap()
        };
        let q = |p: i64, d: i64| Rational::new(p.into(), d.into());
        let chain = PolyhedralChain::new(3, 2, vec![(cell(0, 1, 2), q(1, 3)), (cell(1, 3, 2), q(-5, 7)), (cell(0, 3, 1), q(2, 1))])
            .unwrap();
        assert!(chain.boundary().unwrap().boundary().unwrap().is_empty());
    }

    #[test]
    fn masses_and_volumes() {
        let c = PolyhedralChain::new(2, 1, vec![(seg(&[0.0, 0.0], &[1.0, 0.0]), -2.0)]).unwrap();
        assert_eq!(c.mass(), 2.0);
        for k in 1..=4 {
            let n = k + 1;
            let labels: Vec<usize> = (1..=k).collect();
            let cube = unit_cube_current(&OrientedPlane::coordinate(n, &labels).unwrap()).unwrap();
            assert_eq!(cube.cells().len(), (1..=k).product::<usize>());
            assert!((cube.mass() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cube_tangents_match_plane() {
        let mut rng = crate::sampling::stream_rng(3, 0);
        for k in 1..=3 {
            let eta = crate::sampling::random_plane(5, k, &mut rng);
            let cube = unit_cube_current(&eta).unwrap();
            for (c, _) in cube.cells() {
                assert!(c.tangent().unwrap().kvector().distance(eta.kvector()) < 1e-12);
            }
            assert!((cube.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_orientation() {
        let c = seg(&[0.0, 0.0], &[0.0, 3.0]);
        assert!(c.tangent().unwrap().kvector().distance(&KVector::vector(&[0.0, 1.0])) < 1e-15);
        assert!(c.reversed().tangent().unwrap().kvector().distance(&KVector::vector(&[0.0, -1.0])) < 1e-15);
        assert!(Cell::from_points(&[vec![0.0, 0.0], vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn gaussian_image_merges_parallel_segments() {
        let c = PolyhedralChain::new(
            2,
            1,
            vec![(seg(&[0.0, 0.0], &[1.0, 0.0]), 1.0), (seg(&[0.0, 1.0], &[1.0, 1.0]), 1.0)],
        )
        .unwrap();
        let g = c.gaussian_image().unwrap();
        assert_eq!(g.atoms().len(), 1);
        assert_eq!(g.atoms()[0].1, 2.0);
    }

    #[test]
    fn ellipse_energy_of_vertical_segment() {
        let psi = GeometricIntegrand::ellipse_norm(2, 1, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])))
            .unwrap();
        let c = PolyhedralChain::new(2, 1, vec![(seg(&[0.0, 0.0], &[0.0, 1.0]), 1.0)]).unwrap();
        assert!((c.energy(&psi).unwrap() - 2.0).abs() < 1e-14);
        assert!((c.energy_via_gaussian_image(&psi).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt2_test_pair() {
        let dec = sqrt2_dec();
        let (s, d) = make_test_pair_k1(&dec).unwrap();
        assert!((s.mass() - SQRT_2).abs() < 1e-14);
        assert_eq!(d.mass(), 1.0);
        assert!(chains_equal(&s.boundary().unwrap(), &d.boundary().unwrap(), 0.0));
        let psi = GeometricIntegrand::area(2, 1);
        let gap = verify_aue(&psi, 0.9, &s, &d).unwrap();
        assert!((gap - 0.1 * (SQRT_2 - 1.0)).abs() < 1e-12);
        assert!(verify_aue(&psi, 1.0, &s, &d).unwrap().abs() < 1e-12);
        let tv = tv_distance(&s.gaussian_image().unwrap(), &DiscreteGrassMeasure::from_decomposition(&dec)).unwrap();
        assert!(tv < 1e-12);
    }

    #[test]
    fn test_pair_gap_matches_instance_gap() {
        let psi = GeometricIntegrand::ellipse_norm(3, 1, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5])))
            .unwrap();
        for seed in 0..20 {
            let dec = random_decomposition(3, 1, 4, seed, OrientationMode::Any).unwrap();
            let (s, d) = make_test_pair_k1(&dec).unwrap();
            for c in [0.3, 0.9] {
                let a = verify_aue(&psi, c, &s, &d).unwrap();
                let b = crate::polyconvexity::check_instance(&psi, c, &dec, OrientationMode::Any).unwrap();
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn boundary_mismatch_is_rejected() {
        let psi = GeometricIntegrand::area(2, 1);
        let s = PolyhedralChain::new(2, 1, vec![(seg(&[0.0, 0.0], &[1.0, 1.0]), 1.0)]).unwrap();
        let d = PolyhedralChain::new(2, 1, vec![(seg(&[0.0, 0.0], &[1.0, 0.0]), 1.0)]).unwrap();
        assert!(matches!(verify_aue(&psi, 1.0, &s, &d), Err(Error::BoundaryMismatch(_))));
        assert_eq!(verify_aue(&psi, 0.7, &d, &d).unwrap(), 0.0);
        assert!(make_test_pair_k1(&random_decomposition(3, 2, 2, 0, OrientationMode::Any).unwrap()).is_err());
    }

    #[test]
    fn refinement_is_not_recognized() {
        // documented limitation: equality is combinatorial
        let whole = PolyhedralChain::new(1, 1, vec![(seg(&[0.0], &[1.0]), 1.0)]).unwrap();
        let halves =
            PolyhedralChain::new(1, 1, vec![(seg(&[0.0], &[0.5]), 1.0), (seg(&[0.5], &[1.0]), 1.0)]).unwrap();
        assert!(!chains_equal(&whole, &halves, 1e-9));
        assert!(chains_equal(&whole.boundary().unwrap(), &halves.boundary().unwrap(), 1e-9));
        assert!(!chains_equal(&whole, &whole.negated(), 1e-9));
    }

    #[test]
    fn chain_json_round_trip() {
        let sq = unit_cube_current(&OrientedPlane::coordinate(3, &[1, 3]).unwrap()).unwrap();
        let text = serde_json::to_string(&sq).unwrap();
        let back: PolyhedralChain = serde_json::from_str(&text).unwrap();
        assert!(chains_equal(&sq, &back, 0.0));
    }
}
