//! Thin helpers over `nalgebra` used across modules.

use alloc::vec::Vec;
use nalgebra::DMatrix;

/// Numerical rank from singular values, relative tolerance `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax.max(1.0)).count()
}

/// Least-squares solution of `a x = b` (columns of `b` solved independently).
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13).ok()
}

/// Orthonormal basis (rows) of the null space of `m`, with `tol` relative to the
/// largest singular value.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> Vec<Vec<f64>> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return (0..n)
            .map(|i| {
                let mut e = alloc::vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    // Pad to at least n rows so the SVD returns a full right basis.
    let mut padded = DMatrix::<f64>::zeros(m.nrows().max(n), n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thresh = tol * smax.max(1.0);
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= thresh {
            out.push(vt.row(i).iter().cloned().collect());
        }
    }
    out
}

/// Gram-Schmidt with respect to the symmetric positive-definite `gram` form.
/// Vectors that become dependent (norm below `tol`) are dropped.
pub fn orthonormalize(vectors: &[Vec<f64>], gram: &DMatrix<f64>, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = inner(gram, &w, u);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= c * ui;
                }
            }
        }
        let n = crate::math::sqrt(inner(gram, &w, &w).max(0.0));
        if n > tol {
            for wi in w.iter_mut() {
                *wi /= n;
            }
            out.push(w);
        }
    }
    out
}

pub fn inner(gram: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            s += a[i] * gram[(i, j)] * b[j];
        }
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    crate::math::sqrt(dot(a, a))
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.clone().cholesky().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_row_vector() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(dot(v, &[1.0, 1.0, 0.0]).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_detects_dependent_rows() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        assert_eq!(rank(&m, 1e-10), 1);
    }
}
