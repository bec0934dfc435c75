//! Small dense linear algebra shared by every module.
//!
//! Elimination routines are generic over [`Scalar`] and exact in rational
//! mode; the SVD/QR helpers are float-only and delegate to nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

fn pivot_row<S: Scalar>(m: &DMatrix<S>, col: usize, from: usize) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for r in from..m.nrows() {
        let v = m[(r, col)].abs();
        if v.is_negligible() {
            continue;
        }
        match &best {
            Some((_, b)) if *b >= v => {}
            _ => best = Some((r, v)),
        }
    }
    best.map(|(r, _)| r)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det<S: Scalar>(m: &DMatrix<S>) -> S {
    assert!(m.is_square(), "determinant of a non-square matrix");
    let n = m.nrows();
    let mut a = m.clone();
    let mut acc = S::one();
    for c in 0..n {
        let Some(p) = pivot_row(&a, c, c) else {
            return S::zero();
        };
        if p != c {
            a.swap_rows(p, c);
            acc = -acc;
        }
        let piv = a[(c, c)].clone();
        acc = acc * piv.clone();
        for r in c + 1..n {
            if a[(r, c)].is_zero() {
                continue;
            }
            let f = a[(r, c)].clone() / piv.clone();
            for j in c..n {
                let t = f.clone() * a[(c, j)].clone();
                a[(r, j)] -= &t;
            }
        }
    }
    acc
}

/// Reduced row echelon form and the pivot columns.
pub fn rref<S: Scalar>(m: &DMatrix<S>) -> (DMatrix<S>, Vec<usize>) {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = pivot_row(&a, c, r) else {
            for rr in r..rows {
                a[(rr, c)] = S::zero();
            }
            continue;
        };
        a.swap_rows(p, r);
        let piv = a[(r, c)].clone();
        for j in 0..cols {
            a[(r, j)] = a[(r, j)].clone() / piv.clone();
        }
        for rr in 0..rows {
            if rr == r || a[(rr, c)].is_zero() {
                continue;
            }
            let f = a[(rr, c)].clone();
            for j in 0..cols {
                let t = f.clone() * a[(r, j)].clone();
                a[(rr, j)] -= &t;
            }
            a[(rr, c)] = S::zero();
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

pub fn rank<S: Scalar>(m: &DMatrix<S>) -> usize {
    rref(m).1.len()
}

/// Basis of the right null space (one vector per free column).
pub fn null_space<S: Scalar>(m: &DMatrix<S>) -> Vec<DVector<S>> {
    let cols = m.ncols();
    let (r, pivots) = rref(m);
    let mut out = Vec::new();
    for free in (0..cols).filter(|c| !pivots.contains(c)) {
        let mut v = DVector::from_element(cols, S::zero());
        v[free] = S::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = -r[(row, free)].clone();
        }
        out.push(v);
    }
    out
}

/// Solves a square system; `None` when singular.
pub fn solve<S: Scalar>(a: &DMatrix<S>, b: &DVector<S>) -> Option<DVector<S>> {
    let n = a.nrows();
    if !a.is_square() || b.len() != n {
        return None;
    }
    let mut aug = DMatrix::from_element(n, n + 1, S::zero());
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = a[(i, j)].clone();
        }
        aug[(i, n)] = b[i].clone();
    }
    let (r, pivots) = rref(&aug);
    if pivots.len() != n || pivots.iter().any(|&p| p >= n) {
        return None;
    }
    Some(DVector::from_iterator(n, (0..n).map(|i| r[(i, n)].clone())))
}

pub fn inverse<S: Scalar>(a: &DMatrix<S>) -> Option<DMatrix<S>> {
    let n = a.nrows();
    if !a.is_square() {
        return None;
    }
    let mut aug = DMatrix::from_element(n, 2 * n, S::zero());
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = a[(i, j)].clone();
        }
        aug[(i, n + i)] = S::one();
    }
    let (r, pivots) = rref(&aug);
    if pivots.len() < n || pivots[n - 1] >= n {
        return None;
    }
    Some(r.columns(n, n).into_owned())
}

pub fn identity<S: Scalar>(n: usize) -> DMatrix<S> {
    DMatrix::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() })
}

pub fn matmul<S: Scalar>(a: &DMatrix<S>, b: &DMatrix<S>) -> DMatrix<S> {
    assert_eq!(a.ncols(), b.nrows());
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        let mut acc = S::zero();
        for l in 0..a.ncols() {
            acc += &(a[(i, l)].clone() * b[(l, j)].clone());
        }
        acc
    })
}

pub fn to_f64_matrix<S: Scalar>(m: &DMatrix<S>) -> DMatrix<f64> {
    m.map(|x| x.to_f64())
}

/// Orthonormal basis (as columns) of the numerical null space of `m`:
/// singular directions with σ ≤ `tol · σ_max`.
pub fn svd_null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad to at least n rows so the SVD returns a full right basis
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = tol * smax;
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut || smax == 0.0)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Gram–Schmidt orthonormalization that keeps the orientation of the
/// column span (QR with a positive diagonal in R).
pub fn orthonormalize(w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = w.shape();
    let mut out = DMatrix::zeros(n, k);
    for j in 0..k {
        let mut v = w.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let q = out.column(i).into_owned();
                let d = q.dot(&v);
                v -= q * d;
            }
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        out.set_column(j, &v);
    }
    out
}

/// Extends orthonormal columns to an orthonormal basis of ℝⁿ.
pub fn orthogonal_completion(w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = w.shape();
    let mut cols: Vec<DVector<f64>> = (0..k).map(|j| w.column(j).into_owned()).collect();
    while cols.len() < n {
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = -1.0;
        for e in 0..n {
            let mut v = DVector::zeros(n);
            v[e] = 1.0;
            for _ in 0..2 {
                for q in &cols {
                    let d = q.dot(&v);
                    v -= q * d;
                }
            }
            let nv = v.norm();
            if nv > best_norm {
                best_norm = nv;
                best = Some(v / nv);
            }
        }
        cols.push(best.expect("some direction survives"));
    }
    DMatrix::from_columns(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    #[test]
    fn det_matches_cofactor_expansion() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, 1.0, 3.0, 2.0, 0.0, 4.0, -1.0]);
        let cof = 2.0 * (3.0 * -1.0 - 2.0 * 4.0) - (-1.0) * (1.0 * -1.0 - 2.0 * 0.0)
            + 0.5 * (1.0 * 4.0 - 3.0 * 0.0);
        assert!((det(&m) - cof).abs() < 1e-12);
    }

    #[test]
    fn exact_inverse_round_trips() {
        let m = DMatrix::from_row_slice(2, 2, &[q(1, 2), q(1, 3), q(-2, 5), q(7, 1)]);
        let inv = inverse(&m).unwrap();
        assert_eq!(matmul(&m, &inv), identity::<Rational>(2));
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 3, &[q(1, 1), q(2, 1), q(3, 1), q(2, 1), q(4, 1), q(6, 1)]);
        let ns = null_space(&m);
        assert_eq!(ns.len(), 2);
        for v in ns {
            let prod = matmul(&m, &DMatrix::from_column_slice(3, 1, v.as_slice()));
            assert!(prod.iter().all(|x| *x == q(0, 1)));
        }
    }

    #[test]
    fn completion_is_orthogonal() {
        let w = orthonormalize(&DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 2.0, -1.0, 0.0, 1.0, 0.5, 0.5]));
        let u = orthogonal_completion(&w);
        let g = u.transpose() * &u;
        assert!((g - DMatrix::identity(4, 4)).norm() < 1e-12);
    }
}
