//! Group law in exponential coordinates of the first kind.
//!
//! A point `p` stands for `exp(Σ pⱼ eⱼ)`. The product is the
//! Baker-Campbell-Hausdorff series, which terminates at the algebra's depth,
//! so the law is exact for every supported algebra (depth ≤ 5).

use alloc::vec;
use alloc::vec::Vec;

use crate::algebra::CarnotAlgebra;
use crate::error::{check_dim, invalid, Result};
use crate::MAX_DIM;

/// A group element in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    coords: Vec<f64>,
}

impl GroupPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_identity(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }
}

impl From<Vec<f64>> for GroupPoint {
    fn from(coords: Vec<f64>) -> Self {
        Self::new(coords)
    }
}

impl From<&[f64]> for GroupPoint {
    fn from(coords: &[f64]) -> Self {
        Self::new(coords.to_vec())
    }
}

impl AsRef<[f64]> for GroupPoint {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// `out = a·x + b·y`, elementwise.
#[inline]
fn axpby(out: &mut [f64], a: f64, x: &[f64], b: f64, y: &[f64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = a * xi + b * yi;
    }
}

#[inline]
fn add_scaled(out: &mut [f64], c: f64, x: &[f64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o += c * xi;
    }
}

/// `log(exp(x)·exp(y))` through degree `depth`, for any nilpotent bracket.
///
/// `scratch` must hold at least `8 * x.len()` values. `out` must not alias
/// `x` or `y`.
pub fn bch_series<B>(
    x: &[f64],
    y: &[f64],
    depth: usize,
    bracket: B,
    scratch: &mut [f64],
    out: &mut [f64],
) where
    B: Fn(&[f64], &[f64], &mut [f64]),
{
    let n = x.len();
    axpby(out, 1.0, x, 1.0, y);
    if depth < 2 {
        return;
    }
    let (xy, rest) = scratch.split_at_mut(n);
    let (xxy, rest) = rest.split_at_mut(n);
    let (yxy, rest) = rest.split_at_mut(n);
    let (t1, rest) = rest.split_at_mut(n);
    let (t2, rest) = rest.split_at_mut(n);
    let (yyxy, rest) = rest.split_at_mut(n);
    let (xxxy, rest) = rest.split_at_mut(n);
    let t3 = &mut rest[..n];

    bracket(x, y, xy);
    add_scaled(out, 0.5, xy);
    if depth < 3 {
        return;
    }
    bracket(x, xy, xxy);
    bracket(y, xy, yxy);
    add_scaled(out, 1.0 / 12.0, xxy);
    add_scaled(out, -1.0 / 12.0, yxy);
    if depth < 4 {
        return;
    }
    bracket(y, xxy, t1);
    add_scaled(out, -1.0 / 24.0, t1);
    if depth < 5 {
        return;
    }
    // [Y,[Y,[Y,[Y,X]]]] = -[Y,[Y,yxy]], [X,[X,[X,[X,Y]]]] = [X,[X,xxy]]
    bracket(y, yxy, yyxy);
    bracket(y, yyxy, t1);
    add_scaled(out, 1.0 / 720.0, t1);
    bracket(x, xxy, xxxy);
    bracket(x, xxxy, t1);
    add_scaled(out, -1.0 / 720.0, t1);
    // [X,[Y,[Y,[Y,X]]]] = -[X,yyxy], [Y,[X,[X,[X,Y]]]] = [Y,xxxy]
    bracket(x, yyxy, t1);
    add_scaled(out, -1.0 / 360.0, t1);
    bracket(y, xxxy, t1);
    add_scaled(out, 1.0 / 360.0, t1);
    // [Y,[X,[Y,[X,Y]]]] = [Y,[X,yxy]], [X,[Y,[X,[Y,X]]]] = -[X,[Y,xxy]]
    bracket(x, yxy, t2);
    bracket(y, t2, t1);
    add_scaled(out, 1.0 / 120.0, t1);
    bracket(y, xxy, t2);
    bracket(x, t2, t3);
    add_scaled(out, -1.0 / 120.0, t3);
}

impl CarnotAlgebra {
    pub fn identity(&self) -> GroupPoint {
        GroupPoint::identity(self.dim())
    }

    /// Wraps coordinates after a dimension check.
    pub fn point(&self, coords: Vec<f64>) -> Result<GroupPoint> {
        check_dim(self.dim(), coords.len())?;
        Ok(GroupPoint::new(coords))
    }

    pub fn check_point(&self, p: &GroupPoint) -> Result<()> {
        check_dim(self.dim(), p.dim())
    }

    /// Group product `p·q`.
    pub fn multiply(&self, p: &GroupPoint, q: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(p)?;
        self.check_point(q)?;
        let mut out = vec![0.0; self.dim()];
        self.mul_into(p.coords(), q.coords(), &mut out);
        Ok(GroupPoint::new(out))
    }

    /// Unchecked product on raw coordinates; `out` must not alias the inputs.
    #[inline]
    pub fn mul_into(&self, p: &[f64], q: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut scratch = [0.0f64; 8 * MAX_DIM];
        bch_series(
            p,
            q,
            self.depth(),
            |v, w, o| self.bracket_into(v, w, o),
            &mut scratch[..8 * n],
            out,
        );
    }

    /// Product as a fresh vector.
    #[inline]
    pub fn mul(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.mul_into(p, q, &mut out);
        out
    }

    /// Coordinates of `p⁻¹·q`.
    #[inline]
    pub fn relative(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let mut neg = [0.0f64; MAX_DIM];
        let n = p.len();
        for (o, x) in neg[..n].iter_mut().zip(p) {
            *o = -x;
        }
        self.mul(&neg[..n], q)
    }

    pub fn inverse(&self, p: &GroupPoint) -> GroupPoint {
        GroupPoint::new(p.coords().iter().map(|x| -x).collect())
    }

    /// Homothety `h_t`: layer-`i` coordinates scale by `tⁱ`.
    pub fn dilate(&self, t: f64, p: &GroupPoint) -> Result<GroupPoint> {
        if !(t > 0.0) {
            return Err(invalid("dilation factor must be positive"));
        }
        self.check_point(p)?;
        let mut out = vec![0.0; self.dim()];
        self.dilate_into(t, p.coords(), &mut out);
        Ok(GroupPoint::new(out))
    }

    /// Unchecked dilation; any real `t` is accepted.
    #[inline]
    pub fn dilate_into(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let mut powers = [1.0f64; crate::MAX_DEPTH + 1];
        for i in 1..=self.depth() {
            powers[i] = powers[i - 1] * t;
        }
        for (j, (o, x)) in out.iter_mut().zip(p).enumerate() {
            *o = powers[self.grading().layer_of(j)] * x;
        }
    }

    #[inline]
    pub fn dilated(&self, t: f64, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.dilate_into(t, p, &mut out);
        out
    }

    /// `exp` of an algebra vector. In exponential coordinates this is a
    /// relabelling.
    pub fn exp_of(&self, v: &[f64]) -> Result<GroupPoint> {
        check_dim(self.dim(), v.len())?;
        Ok(GroupPoint::new(v.to_vec()))
    }

    /// `log` of a group element, the inverse of [`exp_of`](Self::exp_of).
    pub fn log_of(&self, p: &GroupPoint) -> Vec<f64> {
        p.coords().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::BuiltinGroup;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn h3() -> CarnotAlgebra {
        CarnotAlgebra::builtin(BuiltinGroup::Heisenberg(1)).unwrap()
    }

    /// The unipotent representation `[[1,a,c+ab/2],[0,1,b],[0,0,1]]`.
    fn to_matrix(p: &[f64]) -> [[f64; 3]; 3] {
        [
            [1.0, p[0], p[2] + p[0] * p[1] / 2.0],
            [0.0, 1.0, p[1]],
            [0.0, 0.0, 1.0],
        ]
    }

    fn from_matrix(m: &[[f64; 3]; 3]) -> [f64; 3] {
        [m[0][1], m[1][2], m[0][2] - m[0][1] * m[1][2] / 2.0]
    }

    fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    #[test]
    fn h3_basic_product() {
        let g = h3();
        let p = g.point(vec![1.0, 0.0, 0.0]).unwrap();
        let q = g.point(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(g.multiply(&p, &q).unwrap().coords(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn h3_matches_matrix_representation() {
        let g = h3();
        let mut r = rng::seeded(3);
        for _ in 0..1000 {
            let p: Vec<f64> = (0..3).map(|_| rng::uniform(&mut r, -3.0, 3.0)).collect();
            let q: Vec<f64> = (0..3).map(|_| rng::uniform(&mut r, -3.0, 3.0)).collect();
            let bch = g.mul(&p, &q);
            let mat = from_matrix(&matmul(&to_matrix(&p), &to_matrix(&q)));
            for i in 0..3 {
                assert_abs_diff_eq!(bch[i], mat[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inverse_and_identity() {
        let g = h3();
        let p = g.point(vec![0.3, -2.0, 5.0]).unwrap();
        assert_eq!(g.inverse(&p).coords(), &[-0.3, 2.0, -5.0]);
        assert!(g.inverse(&g.identity()).is_identity());
        assert_eq!(g.multiply(&p, &g.identity()).unwrap(), p);
        assert!(g
            .multiply(&p, &g.inverse(&p))
            .unwrap()
            .coords()
            .iter()
            .all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn conjugation_formula() {
        let g = h3();
        let (a, b, c) = (0.7, -1.1, 2.5);
        let (al, be, ga) = (-0.4, 0.9, 1.3);
        let r = g.relative(&[a, b, c], &[al, be, ga]);
        assert_eq!(r, vec![al - a, be - b, ga - c + 0.5 * (al * b - a * be)]);
    }

    #[test]
    fn dilation_examples() {
        let g = h3();
        let p = g.point(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(g.dilate(2.0, &p).unwrap().coords(), &[2.0, 2.0, 4.0]);
        assert_eq!(g.dilate(1.0, &p).unwrap(), p);
        assert!(g.dilate(0.0, &p).is_err());
        assert!(g.dilate(-1.0, &p).is_err());
    }

    #[test]
    fn multiply_rejects_mismatched_points() {
        let g = h3();
        let p = GroupPoint::new(vec![1.0, 0.0]);
        assert!(g.multiply(&p, &g.identity()).is_err());
    }

    #[test]
    fn exp_log_roundtrip() {
        let g = h3();
        assert_eq!(g.log_of(&g.identity()), vec![0.0; 3]);
        let p = g.point(vec![3.0, 4.0, 0.0]).unwrap();
        assert_eq!(g.log_of(&p), vec![3.0, 4.0, 0.0]);
        assert_eq!(g.exp_of(&g.log_of(&p)).unwrap(), p);
    }
}
