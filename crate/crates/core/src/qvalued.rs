//! Q-valued functions: unordered Q-tuples with the optimal matching metric,
//! piecewise-affine Q-functions on Kuhn triangulations of `[0,1]^k`, their
//! graph currents and the quasiconvexity gap against affine multigraphs.
//!
//! Grid level `L` subdivides each axis into `2^(L−1)` intervals; every small
//! cube is cut into `k!` positively oriented Kuhn simplices.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::currents::{chains_equal, permutations, Cell, PolyhedralChain};
use crate::error::{Error, Result};
use crate::exterior::permutation_parity;
use crate::integrands::QIntegrand;
use crate::sampling::{gaussian_matrix, stream_rng};

/// Tolerance of the continuity check on shared faces.
pub const CONTINUITY_TOL: f64 = 1e-10;
/// Tolerance of the boundary agreement check of test pairs.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// An unordered Q-tuple of points of ℝᵐ.
#[derive(Clone, Debug, PartialEq)]
pub struct QPoint {
    points: Vec<DVector<f64>>,
}

impl QPoint {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Invalid("a Q-point needs Q ≥ 1 points".into()));
        };
        let m = first.len();
        if points.iter().any(|p| p.len() != m) {
            return Err(Error::DimensionMismatch("Q-point entries of different dimension".into()));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_vec(r.clone())).collect())
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// Points in lexicographic order; two Q-points are equal exactly when
    /// their sorted forms agree.
    pub fn sorted(&self) -> Vec<DVector<f64>> {
        let mut p = self.points.clone();
        p.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        p
    }

    pub fn same_multiset(&self, other: &Self) -> bool {
        self.q() == other.q() && self.sorted() == other.sorted()
    }
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials, rows inserted in index order).
/// Returns `assignment[row] = column`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "square cost matrix");
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn matching(t1: &QPoint, t2: &QPoint) -> Result<(Vec<usize>, DMatrix<f64>)> {
    if t1.q() != t2.q() || t1.dim() != t2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Q-points with (Q, m) = ({}, {}) and ({}, {})",
            t1.q(),
            t1.dim(),
            t2.q(),
            t2.dim()
        )));
    }
    let q = t1.q();
    let cost = DMatrix::from_fn(q, q, |i, j| (&t1.points[i] - &t2.points[j]).norm_squared());
    Ok((hungarian(&cost), cost))
}

/// `𝒢(T₁, T₂) = min_σ (Σ |Pᵢ − S_σ(i)|²)^½`.
///
/// Evaluated in both argument orders with sorted summation, so the result
/// is exactly symmetric.
pub fn metric_g(t1: &QPoint, t2: &QPoint) -> Result<f64> {
    let one_way = |a: &QPoint, b: &QPoint| -> Result<f64> {
        let (assign, cost) = matching(a, b)?;
        let mut terms: Vec<f64> = assign.iter().enumerate().map(|(i, &j)| cost[(i, j)]).collect();
        terms.sort_by(f64::total_cmp);
        Ok(terms.iter().sum::<f64>())
    };
    Ok(one_way(t1, t2)?.min(one_way(t2, t1)?).sqrt())
}

/// One affine sheet `x ↦ a + Lx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSheet {
    #[serde(with = "vector_json")]
    pub a: DVector<f64>,
    #[serde(rename = "L", with = "matrix_json")]
    pub l: DMatrix<f64>,
}

impl AffineSheet {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a + &self.l * x
    }

    /// The affine map through `(vᵢ, yᵢ)` on a nondegenerate simplex.
    pub fn interpolate(vertices: &[DVector<f64>], values: &[DVector<f64>]) -> Result<Self> {
        let k = vertices.len() - 1;
        let m = values[0].len();
        let dv = DMatrix::from_fn(k, k, |i, j| vertices[j + 1][i] - vertices[0][i]);
        let dy = DMatrix::from_fn(m, k, |i, j| values[j + 1][i] - values[0][i]);
        let inv = dv.try_inverse().ok_or_else(|| Error::Invalid("degenerate interpolation simplex".into()))?;
        let l = dy * inv;
        let a = &values[0] - &l * &vertices[0];
        Ok(Self { a, l })
    }
}

mod vector_json {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

mod matrix_json {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

/// Kuhn triangulation of `[0,1]^k` at a dyadic level.
#[derive(Clone, Debug)]
pub struct KuhnGrid {
    k: usize,
    level: usize,
    per_axis: usize,
    perms: Vec<Vec<usize>>,
    cells: Vec<Vec<usize>>,
}

impl KuhnGrid {
    pub fn new(k: usize, level: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("domain dimension k must be positive".into()));
        }
        if level == 0 || level > 12 {
            return Err(Error::Invalid(format!("grid level must be in 1..=12, got {level}")));
        }
        let per_axis = 1usize << (level - 1);
        let perms = permutations(k);
        let mut grid = Self { k, level, per_axis, perms, cells: Vec::new() };
        let cubes = per_axis.pow(k as u32);
        for cube in 0..cubes {
            let base = grid.cube_coords(cube);
            for perm in &grid.perms {
                let mut c = base.clone();
                let mut ids = vec![grid.vertex_id(&c)];
                for &axis in perm {
                    c[axis] += 1;
                    ids.push(grid.vertex_id(&c));
                }
                if permutation_parity(perm) {
                    ids.swap(1, 2);
                }
                grid.cells.push(ids);
            }
        }
        Ok(grid)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn n_vertices(&self) -> usize {
        (self.per_axis + 1).pow(self.k as u32)
    }

    fn cube_coords(&self, mut cube: usize) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for slot in c.iter_mut() {
            *slot = cube % self.per_axis;
            cube /= self.per_axis;
        }
        c
    }

    fn vertex_id(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * (self.per_axis + 1) + c)
    }

    fn vertex_coords(&self, mut id: usize) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for slot in c.iter_mut() {
            *slot = id % (self.per_axis + 1);
            id /= self.per_axis + 1;
        }
        c
    }

    pub fn vertex(&self, id: usize) -> DVector<f64> {
        let h = self.per_axis as f64;
        DVector::from_iterator(self.k, self.vertex_coords(id).into_iter().map(|c| c as f64 / h))
    }

    pub fn is_boundary_vertex(&self, id: usize) -> bool {
        self.vertex_coords(id).iter().any(|&c| c == 0 || c == self.per_axis)
    }

    pub fn cell_vertices(&self, cell: usize) -> Vec<DVector<f64>> {
        self.cells[cell].iter().map(|&v| self.vertex(v)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        let h = 1.0 / self.per_axis as f64;
        h.powi(self.k as i32) / (1..=self.k).map(|i| i as f64).product::<f64>()
    }

    /// Index of a cell containing `x ∈ [0,1]^k`.
    pub fn locate(&self, x: &DVector<f64>) -> Result<usize> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch(format!("point in ℝ^{}, domain is [0,1]^{}", x.len(), self.k)));
        }
        if x.iter().any(|&t| !(-1e-12..=1.0 + 1e-12).contains(&t)) {
            return Err(Error::Invalid(format!("point {:?} lies outside the unit cube", x.as_slice())));
        }
        let h = self.per_axis as f64;
        let mut cube = vec![0usize; self.k];
        let mut local = vec![0.0; self.k];
        for i in 0..self.k {
            let s = (x[i].clamp(0.0, 1.0) * h).min(h);
            let c = (s.floor() as usize).min(self.per_axis - 1);
            cube[i] = c;
            local[i] = s - c as f64;
        }
        let mut perm: Vec<usize> = (0..self.k).collect();
        perm.sort_by(|&a, &b| local[b].total_cmp(&local[a]).then(a.cmp(&b)));
        let cube_index = cube.iter().rev().fold(0, |acc, &c| acc * self.per_axis + c);
        let perm_index = self.perms.iter().position(|p| *p == perm).expect("every ordering is a permutation");
        Ok(cube_index * self.perms.len() + perm_index)
    }

    /// Facets as sorted vertex ids with the cells sharing them.
    fn facets(&self) -> BTreeMap<Vec<usize>, Vec<usize>> {
        let mut map: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (ci, ids) in self.cells.iter().enumerate() {
            for skip in 0..ids.len() {
                let mut f: Vec<usize> = ids.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &v)| v).collect();
                f.sort_unstable();
                map.entry(f).or_default().push(ci);
            }
        }
        map
    }
}

fn barycenter(points: &[DVector<f64>]) -> DVector<f64> {
    let mut s = points[0].clone() * 0.0;
    for p in points {
        s += p;
    }
    s / points.len() as f64
}

/// A continuous piecewise-affine Q-valued map `[0,1]^k → 𝒜_Q(ℝᵐ)`.
#[derive(Clone, Debug)]
pub struct PiecewiseAffineQ {
    m: usize,
    q: usize,
    grid: KuhnGrid,
    sheets: Vec<Vec<AffineSheet>>,
}

impl PiecewiseAffineQ {
    /// Validates shapes and continuity across every interior facet.
    pub fn new(k: usize, m: usize, q: usize, level: usize, sheets: Vec<Vec<AffineSheet>>) -> Result<Self> {
        let grid = KuhnGrid::new(k, level)?;
        if m == 0 || q == 0 {
            return Err(Error::Invalid("m and Q must be positive".into()));
        }
        if sheets.len() != grid.cells.len() {
            return Err(Error::DimensionMismatch(format!(
                "level {level} in dimension {k} has {} cells, got {}",
                grid.cells.len(),
                sheets.len()
            )));
        }
        for (ci, cell) in sheets.iter().enumerate() {
            if cell.len() != q {
                return Err(Error::DimensionMismatch(format!("cell {ci} has {} sheets, expected {q}", cell.len())));
            }
            for s in cell {
                if s.a.len() != m || s.l.shape() != (m, k) {
                    return Err(Error::DimensionMismatch(format!("cell {ci}: sheet shape does not match m={m}, k={k}")));
                }
            }
        }
        let f = Self { m, q, grid, sheets };
        f.check_continuity()?;
        Ok(f)
    }

    /// Interpolates labelled vertex values: `values[vertex][sheet]`.
    pub fn from_vertex_values(k: usize, level: usize, values: &[Vec<DVector<f64>>]) -> Result<Self> {
        let grid = KuhnGrid::new(k, level)?;
        if values.len() != grid.n_vertices() {
            return Err(Error::DimensionMismatch(format!("{} vertex values for {} vertices", values.len(), grid.n_vertices())));
        }
        let q = values[0].len();
        let m = values[0].first().map_or(0, DVector::len);
        let sheets = (0..grid.cells.len())
            .map(|ci| {
                let verts = grid.cell_vertices(ci);
                (0..q)
                    .map(|s| {
                        let ys: Vec<DVector<f64>> = grid.cells[ci].iter().map(|&v| values[v][s].clone()).collect();
                        AffineSheet::interpolate(&verts, &ys)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(k, m, q, level, sheets)
    }

    pub fn k(&self) -> usize {
        self.grid.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn level(&self) -> usize {
        self.grid.level
    }

    pub fn grid(&self) -> &KuhnGrid {
        &self.grid
    }

    pub fn sheets(&self) -> &[Vec<AffineSheet>] {
        &self.sheets
    }

    fn eval_cell(&self, cell: usize, x: &DVector<f64>) -> QPoint {
        QPoint { points: self.sheets[cell].iter().map(|s| s.eval(x)).collect() }
    }

    fn check_continuity(&self) -> Result<()> {
        for (facet, cells) in self.grid.facets() {
            if cells.len() < 2 {
                continue;
            }
            let mut pts: Vec<DVector<f64>> = facet.iter().map(|&v| self.grid.vertex(v)).collect();
            pts.push(barycenter(&pts));
            for p in &pts {
                let a = self.eval_cell(cells[0], p);
                for &other in &cells[1..] {
                    let b = self.eval_cell(other, p);
                    let scale = 1.0 + a.points.iter().map(|y| y.amax()).fold(0.0, f64::max);
                    let dist = metric_g(&a, &b)?;
                    if dist > CONTINUITY_TOL * scale {
                        return Err(Error::Continuity(format!(
                            "cells {} and {other} disagree by {dist:e} at {:?}",
                            cells[0],
                            p.as_slice()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<QPoint> {
        Ok(self.eval_cell(self.grid.locate(x)?, x))
    }

    /// The multiset of sheet differentials on a cell.
    pub fn differential(&self, cell: usize) -> Result<Vec<DMatrix<f64>>> {
        let sheets = self.sheets.get(cell).ok_or_else(|| Error::Invalid(format!("no cell {cell}")))?;
        Ok(sheets.iter().map(|s| s.l.clone()).collect())
    }

    /// `Σ_cells vol·Σ_sheets √det(I + LᵀL)`.
    pub fn area_formula_mass(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let k = self.k();
        self.sheets
            .iter()
            .map(|cell| {
                cell.iter()
                    .map(|s| (DMatrix::identity(k, k) + s.l.transpose() * &s.l).determinant().max(0.0).sqrt())
                    .sum::<f64>()
                    * vol
            })
            .sum()
    }

    /// Per-vertex lifted values: the first cell touching a vertex fixes
    /// them, later cells snap to the nearest one.
    fn canonical_vertex_values(&self, overrides: &HashMap<usize, Vec<DVector<f64>>>) -> Vec<Option<Vec<DVector<f64>>>> {
        let mut table: Vec<Option<Vec<DVector<f64>>>> = vec![None; self.grid.n_vertices()];
        for (v, vals) in overrides {
            table[*v] = Some(vals.clone());
        }
        for (ci, ids) in self.grid.cells.iter().enumerate() {
            for &v in ids {
                if table[v].is_none() {
                    table[v] = Some(self.eval_cell(ci, &self.grid.vertex(v)).points);
                }
            }
        }
        table
    }

    fn graph_with(&self, overrides: &HashMap<usize, Vec<DVector<f64>>>) -> Result<PolyhedralChain> {
        let table = self.canonical_vertex_values(overrides);
        let (k, m) = (self.k(), self.m);
        let mut cells = Vec::with_capacity(self.sheets.len() * self.q);
        for (ci, ids) in self.grid.cells.iter().enumerate() {
            for sheet in &self.sheets[ci] {
                let lifted = ids
                    .iter()
                    .map(|&v| {
                        let x = self.grid.vertex(v);
                        let y = sheet.eval(&x);
                        let canon = table[v].as_ref().expect("every vertex is filled");
                        let (best, dist) = canon
                            .iter()
                            .map(|c| (c, (c - &y).norm()))
                            .min_by(|a, b| a.1.total_cmp(&b.1))
                            .expect("Q ≥ 1");
                        let y = if dist <= BOUNDARY_TOL * (1.0 + y.amax()) { best.clone() } else { y };
                        DVector::from_iterator(k + m, x.iter().chain(y.iter()).copied())
                    })
                    .collect();
                cells.push((Cell::new(lifted)?, 1.0));
            }
        }
        PolyhedralChain::new(k + m, k, cells)
    }

    /// The graph current in ℝ^{k+m}: every lifted cell with multiplicity 1.
    pub fn graph_current(&self) -> Result<PolyhedralChain> {
        self.graph_with(&HashMap::new())
    }

    fn check_integrand(&self, f: &QIntegrand) -> Result<()> {
        let psi = &f.base.underlying;
        if f.q != self.q || psi.grade() != self.k() || psi.dim() != self.k() + self.m {
            return Err(Error::DimensionMismatch(format!(
                "Q-integrand (Q={}, Λ_{}ℝ^{}) vs Q-function (Q={}, k={}, m={})",
                f.q,
                psi.grade(),
                psi.dim(),
                self.q,
                self.k(),
                self.m
            )));
        }
        Ok(())
    }

    /// `Σ_cells vol·ψ̄_Q(L₁,…,L_Q)`.
    pub fn q_energy(&self, f: &QIntegrand) -> Result<f64> {
        self.check_integrand(f)?;
        let vol = self.grid.cell_volume();
        let mut total = 0.0;
        for cell in &self.sheets {
            let ls: Vec<DMatrix<f64>> = cell.iter().map(|s| s.l.clone()).collect();
            total += vol * f.eval(&ls)?;
        }
        Ok(total)
    }

    /// The same energy computed on the graph current.
    pub fn q_energy_via_graph(&self, f: &QIntegrand) -> Result<f64> {
        self.check_integrand(f)?;
        self.graph_current()?.energy(&f.base.underlying)
    }
}

#[derive(Serialize, Deserialize)]
struct CellSheetsRepr {
    sheets: Vec<AffineSheet>,
}

#[derive(Serialize, Deserialize)]
struct QFunctionRepr {
    k: usize,
    m: usize,
    #[serde(rename = "Q")]
    q: usize,
    level: usize,
    cells: Vec<CellSheetsRepr>,
}

impl Serialize for PiecewiseAffineQ {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QFunctionRepr {
            k: self.k(),
            m: self.m,
            q: self.q,
            level: self.level(),
            cells: self.sheets.iter().map(|c| CellSheetsRepr { sheets: c.clone() }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PiecewiseAffineQ {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = QFunctionRepr::deserialize(d)?;
        PiecewiseAffineQ::new(r.k, r.m, r.q, r.level, r.cells.into_iter().map(|c| c.sheets).collect())
            .map_err(D::Error::custom)
    }
}

/// One group `Qⱼ⟦aⱼ + Lⱼx⟧` of an affine multigraph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineGroup {
    #[serde(rename = "Q")]
    pub multiplicity: usize,
    #[serde(flatten)]
    pub sheet: AffineSheet,
}

/// `h(x) = Σⱼ Qⱼ⟦aⱼ + Lⱼx⟧` with distinct `aⱼ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffineMultigraph {
    k: usize,
    m: usize,
    groups: Vec<AffineGroup>,
}

impl AffineMultigraph {
    pub fn new(groups: Vec<AffineGroup>) -> Result<Self> {
        let Some(first) = groups.first() else {
            return Err(Error::Invalid("an affine multigraph needs at least one group".into()));
        };
        let (m, k) = first.sheet.l.shape();
        for (j, g) in groups.iter().enumerate() {
            if g.multiplicity == 0 {
                return Err(Error::Invalid(format!("group {j} has multiplicity 0")));
            }
            if g.sheet.a.len() != m || g.sheet.l.shape() != (m, k) {
                return Err(Error::DimensionMismatch(format!("group {j} has a different shape")));
            }
            for other in &groups[..j] {
                if other.sheet.a == g.sheet.a {
                    return Err(Error::Invalid(format!("group {j} repeats an offset aⱼ")));
                }
            }
        }
        if k == 0 || m == 0 {
            return Err(Error::Invalid("k and m must be positive".into()));
        }
        Ok(Self { k, m, groups })
    }

    /// `Q⟦0⟧`-style single group.
    pub fn single(q: usize, a: DVector<f64>, l: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![AffineGroup { multiplicity: q, sheet: AffineSheet { a, l } }])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.groups.iter().map(|g| g.multiplicity).sum()
    }

    pub fn groups(&self) -> &[AffineGroup] {
        &self.groups
    }

    /// Sheets with each group repeated `Qⱼ` times.
    pub fn expanded_sheets(&self) -> Vec<AffineSheet> {
        self.groups.iter().flat_map(|g| std::iter::repeat_n(g.sheet.clone(), g.multiplicity)).collect()
    }

    pub fn eval(&self, x: &DVector<f64>) -> QPoint {
        QPoint { points: self.expanded_sheets().iter().map(|s| s.eval(x)).collect() }
    }

    pub fn to_q_function(&self, level: usize) -> Result<PiecewiseAffineQ> {
        let grid = KuhnGrid::new(self.k, level)?;
        let sheets = vec![self.expanded_sheets(); grid.cells.len()];
        PiecewiseAffineQ::new(self.k, self.m, self.q(), level, sheets)
    }
}

impl<'de> Deserialize<'de> for AffineMultigraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        struct Repr {
            groups: Vec<AffineGroup>,
        }
        AffineMultigraph::new(Repr::deserialize(d)?.groups).map_err(D::Error::custom)
    }
}

/// A Q-function and an affine multigraph agreeing on `∂[0,1]^k`, with
/// graph currents whose boundaries coincide.
#[derive(Clone, Debug)]
pub struct GraphTestPair {
    pub f: PiecewiseAffineQ,
    pub h: AffineMultigraph,
    pub h_pa: PiecewiseAffineQ,
    pub graph_f: PolyhedralChain,
    pub graph_h: PolyhedralChain,
}

/// Checks boundary agreement of `f` and `h` at the vertices and barycenters
/// of boundary facets. In strict mode the matching found at each barycenter
/// must also work at the facet's vertices.
pub fn make_graph_test_pair(f: &PiecewiseAffineQ, h: &AffineMultigraph, strict: bool) -> Result<GraphTestPair> {
    if f.k() != h.k() || f.m() != h.m() || f.q() != h.q() {
        return Err(Error::DimensionMismatch(format!(
            "f has (k, m, Q) = ({}, {}, {}), h has ({}, {}, {})",
            f.k(),
            f.m(),
            f.q(),
            h.k(),
            h.m(),
            h.q()
        )));
    }
    let grid = f.grid();
    let mut worst = (0.0f64, Vec::new());
    for (facet, cells) in grid.facets() {
        if cells.len() != 1 {
            continue;
        }
        let cell = cells[0];
        let verts: Vec<DVector<f64>> = facet.iter().map(|&v| grid.vertex(v)).collect();
        let bary = barycenter(&verts);
        let mut pts = verts.clone();
        pts.push(bary.clone());
        for p in &pts {
            let dist = metric_g(&f.eval_cell(cell, p), &h.eval(p))?;
            if dist > worst.0 {
                worst = (dist, p.iter().copied().collect());
            }
        }
        if strict {
            let (assign, _) = matching(&f.eval_cell(cell, &bary), &h.eval(&bary))?;
            for p in &verts {
                let fv = f.eval_cell(cell, p);
                let hv = h.eval(p);
                let d: f64 = assign.iter().enumerate().map(|(i, &j)| (&fv.points[i] - &hv.points[j]).norm_squared()).sum();
                if d.sqrt() > worst.0 {
                    worst = (d.sqrt(), p.iter().copied().collect());
                }
            }
        }
    }
    if worst.0 > BOUNDARY_TOL {
        return Err(Error::BoundaryMismatch(format!("f and h differ by {:e} at boundary point {:?}", worst.0, worst.1)));
    }
    // both graphs use h's values at boundary vertices, so their boundaries
    // share vertex coordinates exactly
    let overrides: HashMap<usize, Vec<DVector<f64>>> = (0..grid.n_vertices())
        .filter(|&v| grid.is_boundary_vertex(v))
        .map(|v| (v, h.eval(&grid.vertex(v)).points))
        .collect();
    let h_pa = h.to_q_function(f.level())?;
    let graph_f = f.graph_with(&overrides)?;
    let graph_h = h_pa.graph_with(&overrides)?;
    if !chains_equal(&graph_f.boundary()?, &graph_h.boundary()?, BOUNDARY_TOL) {
        return Err(Error::BoundaryMismatch("∂G_f ≠ ∂G_h under the shared boundary triangulation".into()));
    }
    Ok(GraphTestPair { f: f.clone(), h: h.clone(), h_pa, graph_f, graph_h })
}

/// `E(f) − E(h) − c·(M(G_f) − M(G_h))`.
pub fn verify_uqc(f_int: &QIntegrand, c: f64, pair: &GraphTestPair) -> Result<f64> {
    let de = pair.f.q_energy(f_int)? - pair.h_pa.q_energy(f_int)?;
    let dm = pair.f.area_formula_mass() - pair.h_pa.area_formula_mass();
    Ok(de - c * dm)
}

/// Random competitor: interior vertex values of every sheet of `h` are
/// displaced by independent offsets of size at most
/// `lipschitz_bound · spacing / 2`; boundary vertices keep `h`'s values.
pub fn random_q_function(h: &AffineMultigraph, level: usize, lipschitz_bound: f64, seed: u64) -> Result<PiecewiseAffineQ> {
    if !(lipschitz_bound >= 0.0) {
        return Err(Error::Invalid("lipschitz_bound must be non-negative".into()));
    }
    let grid = KuhnGrid::new(h.k(), level)?;
    let mut rng = stream_rng(seed, 0);
    let amplitude = lipschitz_bound * 0.5 / grid.per_axis as f64;
    let sheets = h.expanded_sheets();
    let values: Vec<Vec<DVector<f64>>> = (0..grid.n_vertices())
        .map(|v| {
            let x = grid.vertex(v);
            let boundary = grid.is_boundary_vertex(v);
            sheets
                .iter()
                .map(|s| {
                    let base = s.eval(&x);
                    if boundary {
                        base
                    } else {
                        let dir = gaussian_matrix(h.m(), 1, &mut rng).column(0).into_owned();
                        let r: f64 = rng.random::<f64>();
                        let norm = dir.norm().max(f64::MIN_POSITIVE);
                        base + dir * (amplitude * r / norm)
                    }
                })
                .collect()
        })
        .collect();
    PiecewiseAffineQ::from_vertex_values(h.k(), level, &values)
}

/// Random affine multigraph with `q` sheets split into random groups.
pub fn random_multigraph(k: usize, m: usize, q: usize, seed: u64) -> Result<AffineMultigraph> {
    if q == 0 {
        return Err(Error::Invalid("Q must be positive".into()));
    }
    let mut rng = stream_rng(seed, 1);
    let mut sizes = Vec::new();
    let mut left = q;
    while left > 0 {
        let s = rng.random_range(1..=left);
        sizes.push(s);
        left -= s;
    }
    let groups = sizes
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            let mut a = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
            a[0] += 3.0 * j as f64;
            AffineGroup { multiplicity: s, sheet: AffineSheet { a, l: gaussian_matrix(m, k, &mut rng) } }
        })
        .collect();
    AffineMultigraph::new(groups)
}

#[derive(Clone, Debug, Serialize)]
pub struct UqcSample {
    pub trial: usize,
    pub q: usize,
    pub gap: f64,
    pub mass_f: f64,
    pub mass_h: f64,
}

/// Gaps of `trials` random graph test pairs, deterministic per seed.
#[allow(clippy::too_many_arguments)]
pub fn sample_uqc(
    psi: &crate::integrands::GeometricIntegrand,
    c: f64,
    k: usize,
    q_max: usize,
    level: usize,
    trials: usize,
    lipschitz_bound: f64,
    seed: u64,
) -> Result<Vec<UqcSample>> {
    let m = psi.dim().checked_sub(k).filter(|&m| m > 0 && psi.grade() == k).ok_or_else(|| {
        Error::DimensionMismatch(format!("integrand on Λ_{}ℝ^{} cannot measure graphs over [0,1]^{k}", psi.grade(), psi.dim()))
    })?;
    if q_max == 0 {
        return Err(Error::Invalid("Q must be positive".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = crate::sampling::stream_rng(seed, t as u64).random::<u64>();
            let q = 1 + t % q_max;
            let h = random_multigraph(k, m, q, trial_seed)?;
            let f = random_q_function(&h, level, lipschitz_bound, trial_seed)?;
            let pair = make_graph_test_pair(&f, &h, false)?;
            let fq = QIntegrand::new(q, crate::integrands::ClassicalIntegrand::new(psi.clone()))?;
            Ok(UqcSample {
                trial: t,
                q,
                gap: verify_uqc(&fq, c, &pair)?,
                mass_f: pair.f.area_formula_mass(),
                mass_h: pair.h_pa.area_formula_mass(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::permutations as all_perms;
    use crate::integrands::{ClassicalIntegrand, GeometricIntegrand};

    fn brute_force(t1: &QPoint, t2: &QPoint) -> f64 {
        all_perms(t1.q())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| (&t1.points[i] - &t2.points[j]).norm_squared()).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    fn random_qpoint(q: usize, m: usize, rng: &mut impl Rng) -> QPoint {
        QPoint::new((0..q).map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))).collect()).unwrap()
    }

    fn tent(t: f64) -> (PiecewiseAffineQ, AffineMultigraph) {
        let v = |y: f64| vec![DVector::from_vec(vec![y])];
        let f = PiecewiseAffineQ::from_vertex_values(1, 2, &[v(0.0), v(t), v(0.0)]).unwrap();
        let h = AffineMultigraph::single(1, DVector::zeros(1), DMatrix::zeros(1, 1)).unwrap();
        (f, h)
    }

    #[test]
    fn metric_small_cases() {
        let a = QPoint::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let b = QPoint::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        assert!((metric_g(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(metric_g(&a, &a).unwrap(), 0.0);
        let c = QPoint::from_rows(&[vec![1.0]]).unwrap();
        assert!(metric_g(&a, &c).is_err());
    }

    #[test]
    fn hungarian_matches_enumeration() {
        let mut rng = stream_rng(5, 0);
        for q in 1..=6 {
            for _ in 0..100 {
                let a = random_qpoint(q, 2, &mut rng);
                let b = random_qpoint(q, 2, &mut rng);
                assert!((metric_g(&a, &b).unwrap() - brute_force(&a, &b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metric_axioms() {
        let mut rng = stream_rng(6, 0);
        for _ in 0..300 {
            let (a, b, c) = (random_qpoint(3, 2, &mut rng), random_qpoint(3, 2, &mut rng), random_qpoint(3, 2, &mut rng));
            assert_eq!(metric_g(&a, &b).unwrap(), metric_g(&b, &a).unwrap());
            assert!(metric_g(&a, &c).unwrap() <= metric_g(&a, &b).unwrap() + metric_g(&b, &c).unwrap() + 1e-12);
            let mut shuffled = a.points.clone();
            shuffled.reverse();
            assert!(a.same_multiset(&QPoint::new(shuffled).unwrap()));
        }
    }

    #[test]
    fn grid_and_location() {
        let g = KuhnGrid::new(2, 2).unwrap();
        assert_eq!(g.cells().len(), 8);
        assert_eq!(g.n_vertices(), 9);
        for ci in 0..g.cells().len() {
            let verts = g.cell_vertices(ci);
            let b = barycenter(&verts);
            assert_eq!(g.locate(&b).unwrap(), ci);
            let cell = Cell::new(verts).unwrap();
            assert!((cell.volume() - g.cell_volume()).abs() < 1e-15);
            assert!(cell.tangent_kvector().coeffs()[0] > 0.0);
        }
        assert!(g.locate(&DVector::from_vec(vec![1.2, 0.0])).is_err());
    }

    #[test]
    fn single_zero_sheet_graph() {
        let h = AffineMultigraph::single(1, DVector::zeros(1), DMatrix::zeros(1, 1)).unwrap();
        let f = h.to_q_function(1).unwrap();
        let g = f.graph_current().unwrap();
        assert_eq!(g.cells().len(), 1);
        let (cell, m) = &g.cells()[0];
        assert_eq!(*m, 1.0);
        assert_eq!(cell.vertices()[0].as_slice(), &[0.0, 0.0]);
        assert_eq!(cell.vertices()[1].as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn two_constant_sheets_have_mass_two() {
        let h = AffineMultigraph::new(vec![
            AffineGroup { multiplicity: 1, sheet: AffineSheet { a: DVector::zeros(1), l: DMatrix::zeros(1, 2) } },
            AffineGroup { multiplicity: 1, sheet: AffineSheet { a: DVector::from_vec(vec![1.0]), l: DMatrix::zeros(1, 2) } },
        ])
        .unwrap();
        let f = h.to_q_function(2).unwrap();
        assert!((f.graph_current().unwrap().mass() - 2.0).abs() < 1e-14);
        assert!((f.area_formula_mass() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn slope_one_area() {
        let h = AffineMultigraph::single(1, DVector::zeros(1), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let f = h.to_q_function(3).unwrap();
        assert!((f.area_formula_mass() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tent_pair_gaps() {
        let (f, h) = tent(1.0);
        let pair = make_graph_test_pair(&f, &h, true).unwrap();
        assert!((f.area_formula_mass() - 5f64.sqrt()).abs() < 1e-14);
        let fq = QIntegrand::new(1, ClassicalIntegrand::new(GeometricIntegrand::area(2, 1))).unwrap();
        assert!(verify_uqc(&fq, 1.0, &pair).unwrap().abs() < 1e-14);
        let gap = verify_uqc(&fq, 0.5, &pair).unwrap();
        assert!((gap - 0.5 * (5f64.sqrt() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn boundary_disagreement_detected() {
        let v = |y: f64| vec![DVector::from_vec(vec![y])];
        let f = PiecewiseAffineQ::from_vertex_values(1, 2, &[v(0.0), v(1.0), v(0.1)]).unwrap();
        let h = AffineMultigraph::single(1, DVector::zeros(1), DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(make_graph_test_pair(&f, &h, false), Err(Error::BoundaryMismatch(_))));
    }

    #[test]
    fn discontinuity_detected() {
        let s = |a: f64| AffineSheet { a: DVector::from_vec(vec![a]), l: DMatrix::zeros(1, 1) };
        assert!(matches!(PiecewiseAffineQ::new(1, 1, 1, 2, vec![vec![s(0.0)], vec![s(1.0)]]), Err(Error::Continuity(_))));
        // sheet order is irrelevant for continuity
        assert!(PiecewiseAffineQ::new(1, 1, 2, 2, vec![vec![s(0.0), s(1.0)], vec![s(1.0), s(0.0)]]).is_ok());
    }

    #[test]
    fn random_pairs_are_consistent() {
        let psi = GeometricIntegrand::area(4, 2);
        for seed in 0..10 {
            let q = 1 + seed as usize % 3;
            let h = random_multigraph(2, 2, q, seed).unwrap();
            let f = random_q_function(&h, 2, 1.0, seed).unwrap();
            let pair = make_graph_test_pair(&f, &h, true).unwrap();
            let graph = f.graph_current().unwrap();
            let mass = graph.mass();
            assert!((mass - f.area_formula_mass()).abs() <= 1e-9 * mass);
            let fq = QIntegrand::new(q, ClassicalIntegrand::new(psi.clone())).unwrap();
            let e1 = f.q_energy(&fq).unwrap();
            let e2 = f.q_energy_via_graph(&fq).unwrap();
            assert!((e1 - e2).abs() <= 1e-9 * e1);
            assert!(verify_uqc(&fq, 1.0, &pair).unwrap().abs() < 1e-9);
            // positively oriented lifted cells
            for (cell, _) in graph.cells() {
                assert!(cell.tangent_kvector().coeffs()[0] > 0.0);
            }
        }
    }

    #[test]
    fn zero_perturbation_reproduces_h() {
        let h = random_multigraph(2, 1, 3, 4).unwrap();
        let f = random_q_function(&h, 3, 0.0, 4).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.7]);
        assert!(metric_g(&f.eval(&x).unwrap(), &h.eval(&x)).unwrap() < 1e-12);
    }

    #[test]
    fn q_function_json_round_trip() {
        let (f, _) = tent(0.5);
        let text = serde_json::to_string(&f).unwrap();
        let back: PiecewiseAffineQ = serde_json::from_str(&text).unwrap();
        assert_eq!(back.sheets(), f.sheets());
        let h = random_multigraph(2, 1, 3, 1).unwrap();
        let back: AffineMultigraph = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }
}
