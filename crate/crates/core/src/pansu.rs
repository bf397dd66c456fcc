//! Pansu and metric differentials, Jacobians, multiplicity and area-formula
//! checks for maps between Carnot groups.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::algebra::{BuiltinGroup, CarnotAlgebra};
use crate::error::{check_dim, invalid, Result};
use crate::group::GroupPoint;
use crate::linalg::{self, norm};
use crate::math;
use crate::measure::{self, MembershipSet, SetSample};
use crate::metrics::{self, Metric};
use crate::rng::{self, Rng};

/// Entries that mix layers must be below this to count as zero.
const BLOCK_TOL: f64 = 1e-12;

/// Relative tolerance for one-sided disagreement and off-block components in
/// [`pansu_diff`].
pub const DIFFERENTIABILITY_TOL: f64 = 1e-6;

/// Default Pansu ladder `s ∈ {10⁻¹, …, 10⁻⁴}`.
pub const DEFAULT_SCALES: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// A linear map between Lie algebras that preserves layers, stored as a
/// `target.dim() × source.dim()` matrix in exponential coordinates.
#[derive(Debug, Clone)]
pub struct GradedHom {
    source: CarnotAlgebra,
    target: CarnotAlgebra,
    matrix: DMatrix<f64>,
    residual: f64,
}

impl GradedHom {
    /// Checks the block structure and records the bracket defect
    /// `max ‖L[eᵢ,eⱼ] − [Leᵢ, Leⱼ]‖∞` as the residual.
    pub fn new(
        source: CarnotAlgebra,
        target: CarnotAlgebra,
        mut matrix: DMatrix<f64>,
    ) -> Result<Self> {
        if matrix.nrows() != target.dim() || matrix.ncols() != source.dim() {
            return Err(invalid(format!(
                "matrix is {}×{}, expected {}×{}",
                matrix.nrows(),
                matrix.ncols(),
                target.dim(),
                source.dim()
            )));
        }
        for r in 0..matrix.nrows() {
            for c in 0..matrix.ncols() {
                if target.grading().layer_of(r) != source.grading().layer_of(c) {
                    if matrix[(r, c)].abs() > BLOCK_TOL {
                        return Err(invalid(format!("entry ({r}, {c}) mixes layers")));
                    }
                    matrix[(r, c)] = 0.0;
                }
            }
        }
        let mut hom = Self {
            source,
            target,
            matrix,
            residual: 0.0,
        };
        hom.residual = hom.bracket_defect();
        Ok(hom)
    }

    pub fn identity(alg: &CarnotAlgebra) -> Self {
        Self::dilation(alg, 1.0)
    }

    /// `h_t` as a graded map.
    pub fn dilation(alg: &CarnotAlgebra, t: f64) -> Self {
        let n = alg.dim();
        let d = DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                math::pow(t, alg.grading().layer_of(r) as f64)
            } else {
                0.0
            }
        });
        Self {
            source: alg.clone(),
            target: alg.clone(),
            matrix: d,
            residual: 0.0,
        }
    }

    /// The graded map with horizontal block `a`, higher blocks induced by
    /// `L[e, w] = [Le, Lw]` for horizontal `e` (least squares per layer).
    pub fn from_horizontal(
        source: &CarnotAlgebra,
        target: &CarnotAlgebra,
        a: &DMatrix<f64>,
    ) -> Result<Self> {
        let (m, _) = induce(source, target, a)?;
        Self::new(source.clone(), target.clone(), m)
    }

    pub fn source(&self) -> &CarnotAlgebra {
        &self.source
    }

    pub fn target(&self) -> &CarnotAlgebra {
        &self.target
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Homomorphism defect; see [`new`](Self::new) and [`pansu_diff`].
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Block mapping source layer `i` to target layer `i` (1-based).
    pub fn block(&self, i: usize) -> DMatrix<f64> {
        let rows = if i <= self.target.depth() {
            self.target.grading().layer_range(i)
        } else {
            0..0
        };
        let cols = self.source.grading().layer_range(i);
        self.matrix
            .view((rows.start, cols.start), (rows.len(), cols.len()))
            .into_owned()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target.dim()];
        for (c, &x) in v.iter().enumerate() {
            if x != 0.0 {
                for r in 0..out.len() {
                    out[r] += self.matrix[(r, c)] * x;
                }
            }
        }
        out
    }

    /// Product of the layer-block determinants: the Lebesgue (and Haar)
    /// scaling factor of `exp∘L∘log`. Zero when a block is not square.
    pub fn determinant(&self) -> f64 {
        let mut det = 1.0;
        for i in 1..=self.source.depth().max(self.target.depth()) {
            let rows = if i <= self.target.depth() {
                self.target.grading().layer_dim(i)
            } else {
                0
            };
            let cols = if i <= self.source.depth() {
                self.source.grading().layer_dim(i)
            } else {
                0
            };
            if rows != cols {
                return 0.0;
            }
            if rows > 0 {
                det *= self.block(i).determinant();
            }
        }
        det
    }

    /// `max ‖L[eᵢ,eⱼ] − [Leᵢ, Leⱼ]‖∞` over basis pairs.
    pub fn bracket_defect(&self) -> f64 {
        let n = self.source.dim();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| self.matrix.column(j).iter().cloned().collect())
            .collect();
        let mut worst = 0.0f64;
        let mut e_i = vec![0.0; n];
        let mut e_j = vec![0.0; n];
        let mut br_src = vec![0.0; n];
        let mut br_tgt = vec![0.0; self.target.dim()];
        for i in 0..n {
            for j in i + 1..n {
                e_i.iter_mut().for_each(|x| *x = 0.0);
                e_j.iter_mut().for_each(|x| *x = 0.0);
                e_i[i] = 1.0;
                e_j[j] = 1.0;
                self.source.bracket_into(&e_i, &e_j, &mut br_src);
                let lhs = self.apply(&br_src);
                self.target.bracket_into(&cols[i], &cols[j], &mut br_tgt);
                for (a, b) in lhs.iter().zip(&br_tgt) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }
}

/// Full matrix induced from horizontal block `a`, and the least-squares misfit.
fn induce(
    source: &CarnotAlgebra,
    target: &CarnotAlgebra,
    a: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let (sd1, td1) = (source.horizontal_dim(), target.horizontal_dim());
    if a.nrows() != td1 || a.ncols() != sd1 {
        return Err(invalid(format!(
            "horizontal block is {}×{}, expected {td1}×{sd1}",
            a.nrows(),
            a.ncols()
        )));
    }
    let (sn, tn) = (source.dim(), target.dim());
    let mut m = DMatrix::<f64>::zeros(tn, sn);
    m.view_mut((0, 0), (td1, sd1)).copy_from(a);
    let mut misfit = 0.0f64;
    let mut e_a = vec![0.0; sn];
    let mut e_w = vec![0.0; sn];
    let mut br = vec![0.0; sn];
    let mut br_t = vec![0.0; tn];
    for i in 1..source.depth() {
        let src_next = source.grading().layer_range(i + 1);
        if i + 1 > target.depth() {
            continue;
        }
        let tgt_next = target.grading().layer_range(i + 1);
        let src_i = source.grading().layer_range(i);
        let pairs = sd1 * src_i.len();
        let mut c = DMatrix::<f64>::zeros(pairs, src_next.len());
        let mut r = DMatrix::<f64>::zeros(pairs, tgt_next.len());
        let mut row = 0;
        for ea in 0..sd1 {
            for w in src_i.clone() {
                e_a.iter_mut().for_each(|x| *x = 0.0);
                e_w.iter_mut().for_each(|x| *x = 0.0);
                e_a[ea] = 1.0;
                e_w[w] = 1.0;
                source.bracket_into(&e_a, &e_w, &mut br);
                for (k, j) in src_next.clone().enumerate() {
                    c[(row, k)] = br[j];
                }
                let la: Vec<f64> = m.column(ea).iter().cloned().collect();
                let lw: Vec<f64> = m.column(w).iter().cloned().collect();
                target.bracket_into(&la, &lw, &mut br_t);
                for (k, j) in tgt_next.clone().enumerate() {
                    r[(row, k)] = br_t[j];
                }
                row += 1;
            }
        }
        // B C = R with C, R stored transposed: C' B' = R'.
        let bt = linalg::lstsq(&c, &r).ok_or_else(|| invalid("bracket system is singular"))?;
        let fit = &c * &bt - &r;
        misfit = misfit.max(fit.amax());
        m.view_mut(
            (tgt_next.start, src_next.start),
            (tgt_next.len(), src_next.len()),
        )
        .copy_from(&bt.transpose());
    }
    Ok((m, misfit))
}

type MapFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A map between Carnot groups in exponential coordinates.
#[derive(Clone)]
pub struct CarnotMap {
    name: String,
    source: CarnotAlgebra,
    target: CarnotAlgebra,
    function: Arc<MapFn>,
    pub lipschitz_hint: Option<f64>,
}

impl core::fmt::Debug for CarnotMap {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CarnotMap")
            .field("name", &self.name)
            .field("source", &self.source.name())
            .field("target", &self.target.name())
            .field("lipschitz_hint", &self.lipschitz_hint)
            .finish()
    }
}

fn same_shape(a: &CarnotAlgebra, b: &CarnotAlgebra) -> bool {
    a.grading() == b.grading() && a.constants() == b.constants()
}

fn is_h3(alg: &CarnotAlgebra) -> bool {
    alg.grading().layer_dims() == [2, 1]
        && alg.constants().get(0, 1, 2) == 1.0
        && alg.constants().iter().count() == 2
}

impl CarnotMap {
    /// `function` must return a point of `target` for every point of `source`.
    pub fn new(
        name: impl Into<String>,
        source: CarnotAlgebra,
        target: CarnotAlgebra,
        function: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        lipschitz_hint: Option<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            source,
            target,
            function: Arc::new(function),
            lipschitz_hint,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &CarnotAlgebra {
        &self.source
    }

    pub fn target(&self) -> &CarnotAlgebra {
        &self.target
    }

    /// Unchecked evaluation on raw coordinates.
    #[inline]
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.function)(x)
    }

    pub fn eval(&self, p: &GroupPoint) -> Result<GroupPoint> {
        self.source.check_point(p)?;
        let y = self.apply(p.coords());
        check_dim(self.target.dim(), y.len())?;
        Ok(GroupPoint::new(y))
    }

    pub fn identity(alg: &CarnotAlgebra) -> Self {
        Self::new(
            "identity",
            alg.clone(),
            alg.clone(),
            |x| x.to_vec(),
            Some(1.0),
        )
    }

    pub fn dilation(alg: &CarnotAlgebra, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(invalid("dilation factor must be positive"));
        }
        let a = alg.clone();
        Ok(Self::new(
            format!("dilate({t})"),
            alg.clone(),
            alg.clone(),
            move |x| a.dilated(t, x),
            Some(t),
        ))
    }

    /// `x ↦ g·x`.
    pub fn left_translation(alg: &CarnotAlgebra, g: &GroupPoint) -> Result<Self> {
        alg.check_point(g)?;
        let a = alg.clone();
        let gc = g.coords().to_vec();
        Ok(Self::new(
            "translate",
            alg.clone(),
            alg.clone(),
            move |x| a.mul(&gc, x),
            None,
        ))
    }

    /// The group homomorphism `exp∘L∘log`.
    pub fn graded(hom: GradedHom) -> Self {
        let (s, t) = (hom.source.clone(), hom.target.clone());
        Self::new("graded", s, t, move |x| hom.apply(x), None)
    }

    /// The automorphism of H³ with horizontal block `diag(2, 3)` (so `Z ↦ 6Z`).
    pub fn standard_automorphism(alg: &CarnotAlgebra) -> Result<Self> {
        if !is_h3(alg) {
            return Err(invalid(
                "the standard automorphism is defined on heisenberg1",
            ));
        }
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let mut m = Self::graded(GradedHom::from_horizontal(alg, alg, &a)?);
        m.name = "automorphism".into();
        Ok(m)
    }

    /// The smooth contact map `(a, b, c) ↦ (a, b + a², c + a³/6)` of H³.
    pub fn shear(alg: &CarnotAlgebra) -> Result<Self> {
        if !is_h3(alg) {
            return Err(invalid("the shear map is defined on heisenberg1"));
        }
        Ok(Self::new(
            "shear",
            alg.clone(),
            alg.clone(),
            |x| vec![x[0], x[1] + x[0] * x[0], x[2] + x[0] * x[0] * x[0] / 6.0],
            None,
        ))
    }

    /// `x ↦ |x|` on ℝ, two-to-one away from the origin.
    pub fn fold() -> Self {
        let r = CarnotAlgebra::builtin(BuiltinGroup::Abelian(1)).expect("builtin");
        Self::new("fold", r.clone(), r, |x| vec![x[0].abs()], Some(1.0))
    }

    /// Projection onto the horizontal coordinates, a homomorphism onto the
    /// abelian group of the same horizontal dimension.
    pub fn horizontal_projection(alg: &CarnotAlgebra) -> Result<Self> {
        let d1 = alg.horizontal_dim();
        let target = CarnotAlgebra::builtin(BuiltinGroup::Abelian(d1))?;
        Ok(Self::new(
            "project",
            alg.clone(),
            target,
            move |x| x[..d1].to_vec(),
            Some(1.0),
        ))
    }

    pub fn constant(
        source: &CarnotAlgebra,
        target: &CarnotAlgebra,
        value: &GroupPoint,
    ) -> Result<Self> {
        target.check_point(value)?;
        let v = value.coords().to_vec();
        Ok(Self::new(
            "constant",
            source.clone(),
            target.clone(),
            move |_| v.clone(),
            Some(0.0),
        ))
    }

    /// `x ↦ |x|_qn` into ℝ; not Pansu differentiable at the identity.
    pub fn quasi_norm(alg: &CarnotAlgebra) -> Self {
        let a = alg.clone();
        let r = CarnotAlgebra::builtin(BuiltinGroup::Abelian(1)).expect("builtin");
        Self::new(
            "qnorm",
            alg.clone(),
            r,
            move |x| vec![metrics::qnorm_coords(&a, x)],
            None,
        )
    }

    /// `f∘g`.
    pub fn compose(f: &CarnotMap, g: &CarnotMap) -> Result<Self> {
        if !same_shape(g.target(), f.source()) {
            return Err(invalid(format!(
                "cannot compose {} after {}",
                f.name, g.name
            )));
        }
        let (ff, gf) = (f.function.clone(), g.function.clone());
        Ok(Self::new(
            format!("{}∘{}", f.name, g.name),
            g.source.clone(),
            f.target.clone(),
            move |x| ff(&gf(x)),
            match (f.lipschitz_hint, g.lipschitz_hint) {
                (Some(a), Some(b)) => Some(a * b),
                _ => None,
            },
        ))
    }
}

/// Per-component polynomial extrapolation to `s = 0` (Neville, at most two
/// levels) with best-entry selection.
struct Extrapolated {
    value: Vec<f64>,
    diverged: bool,
}

fn extrapolate(scales: &[f64], seq: &[Vec<f64>], noise: &[f64]) -> Extrapolated {
    let k = seq.len();
    let dim = seq[0].len();
    let mut value = vec![0.0; dim];
    let mut diverged = false;
    for c in 0..dim {
        let mut t = vec![[0.0f64; 3]; k];
        let mut best = (seq[k - 1][c], f64::INFINITY);
        if k == 1 {
            best.0 = seq[0][c];
        }
        for i in 0..k {
            t[i][0] = seq[i][c];
            for m in 1..=i.min(2) {
                let (s_far, s_near) = (scales[i - m], scales[i]);
                t[i][m] = (s_far * t[i][m - 1] - s_near * t[i - 1][m - 1]) / (s_far - s_near);
                let err = (t[i][m] - t[i][m - 1])
                    .abs()
                    .max((t[i][m] - t[i - 1][m - 1]).abs());
                if err < best.1 {
                    best = (t[i][m], err);
                }
            }
        }
        value[c] = best.0;
        if k >= 3 {
            let diag = |i: usize| t[i][i.min(2)];
            let last = (diag(k - 1) - diag(k - 2)).abs();
            let prev = (diag(k - 2) - diag(k - 3)).abs();
            let floor = DIFFERENTIABILITY_TOL * (1.0 + diag(k - 1).abs()) + noise[c];
            if last > 10.0 * prev && last > floor {
                diverged = true;
            }
        }
    }
    Extrapolated { value, diverged }
}

/// Result of [`pansu_diff`].
#[derive(Debug, Clone)]
pub struct PansuDifferential {
    /// Its `residual` is the largest of the components below.
    pub hom: GradedHom,
    /// False when a ladder diverged, one-sided limits disagreed or the
    /// limits were not graded.
    pub differentiable: bool,
    /// `‖L[v,w] − [Lv,Lw]‖` misfit of the assembled map.
    pub bracket_residual: f64,
    /// Induced higher-layer blocks against direct difference quotients.
    pub direct_discrepancy: f64,
    /// Largest limit component outside the expected layer.
    pub off_block: f64,
    /// `‖D⁺(e) + D⁻(−e)‖` after extrapolation.
    pub one_sided_gap: f64,
}

/// Numerical Pansu differential of `f` at `x` over the ladder `scales`
/// (decreasing). Quotients `h_{1/s}(f(x)⁻¹ f(x·h_s(±e)))` are taken along
/// every basis direction, combined centrally and extrapolated to `s = 0`.
pub fn pansu_diff(f: &CarnotMap, x: &GroupPoint, scales: &[f64]) -> Result<PansuDifferential> {
    let (src, tgt) = (f.source(), f.target());
    src.check_point(x)?;
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(invalid("scale ladder must be positive"));
    }
    let (sn, tn) = (src.dim(), tgt.dim());
    let fx = f.apply(x.coords());
    check_dim(tn, fx.len())?;
    let mag = 1.0
        + fx.iter()
            .chain(x.coords())
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let s_min = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let noise: Vec<f64> = (0..tn)
        .map(|c| 1e4 * f64::EPSILON * mag / math::pow(s_min, tgt.grading().layer_of(c) as f64))
        .collect();

    let mut limits = Vec::with_capacity(sn);
    let mut diverged = false;
    let mut one_sided = 0.0f64;
    let mut step = vec![0.0; sn];
    let mut y = vec![0.0; sn];
    for j in 0..sn {
        let layer = src.grading().layer_of(j);
        let mut central = Vec::with_capacity(scales.len());
        let mut asym = Vec::with_capacity(scales.len());
        for &s in scales {
            let h = math::pow(s, layer as f64);
            let mut q = [Vec::new(), Vec::new()];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                step.iter_mut().for_each(|v| *v = 0.0);
                step[j] = sign * h;
                src.mul_into(x.coords(), &step, &mut y);
                let fy = f.apply(&y);
                q[k] = tgt.dilated(1.0 / s, &tgt.relative(&fx, &fy));
            }
            central.push(
                q[0].iter()
                    .zip(&q[1])
                    .map(|(a, b)| 0.5 * (a - b))
                    .collect::<Vec<_>>(),
            );
            asym.push(
                q[0].iter()
                    .zip(&q[1])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect::<Vec<_>>(),
            );
        }
        let c = extrapolate(scales, &central, &noise);
        let a = extrapolate(scales, &asym, &noise);
        diverged |= c.diverged || a.diverged;
        one_sided = one_sided.max(norm(&a.value));
        limits.push(c.value);
    }

    // Horizontal block from the horizontal directions.
    let (sd1, td1) = (src.horizontal_dim(), tgt.horizontal_dim());
    let a = DMatrix::from_fn(td1, sd1, |r, c| limits[c][r]);
    let (m, bracket_misfit) = induce(src, tgt, &a)?;
    let mut off_block = 0.0f64;
    let mut direct = 0.0f64;
    for j in 0..sn {
        let layer = src.grading().layer_of(j);
        for r in 0..tn {
            let v = limits[j][r];
            if tgt.grading().layer_of(r) != layer {
                off_block = off_block.max(v.abs());
            } else if layer > 1 {
                direct = direct.max((v - m[(r, j)]).abs());
            }
        }
    }
    let hom = GradedHom::new(src.clone(), tgt.clone(), m)?;
    let bracket_residual = bracket_misfit.max(hom.bracket_defect());
    let scale = 1.0 + hom.matrix().amax();
    let tol = DIFFERENTIABILITY_TOL * scale;
    let differentiable = !diverged && one_sided <= tol && off_block <= tol;
    let residual = bracket_residual.max(direct).max(off_block);
    Ok(PansuDifferential {
        hom: GradedHom { residual, ..hom },
        differentiable,
        bracket_residual,
        direct_discrepancy: direct,
        off_block,
        one_sided_gap: one_sided,
    })
}

/// `max_v d_M(f(x·h_s v), f(x)·L(h_s v)) / d_N(0, h_s v)` per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResidual {
    pub ratios: Vec<(f64, f64)>,
}

impl ApproxResidual {
    pub fn max(&self) -> f64 {
        self.ratios.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    /// Smallest factor by which the ratio drops per decade of scale between
    /// consecutive rungs.
    pub fn min_decay_per_decade(&self) -> f64 {
        self.ratios
            .windows(2)
            .map(|w| {
                let decades = math::ln(w[0].0 / w[1].0) / core::f64::consts::LN_10;
                math::pow(w[0].1 / w[1].1, 1.0 / decades)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn approx_residual(
    f: &CarnotMap,
    x: &GroupPoint,
    df: &GradedHom,
    v_samples: &[Vec<f64>],
    scales: &[f64],
) -> Result<ApproxResidual> {
    let (src, tgt) = (f.source(), f.target());
    src.check_point(x)?;
    if df.source().dim() != src.dim() || df.target().dim() != tgt.dim() {
        return Err(invalid("differential does not match the map"));
    }
    if v_samples.is_empty() {
        return Err(invalid("need at least one direction"));
    }
    let fx = f.apply(x.coords());
    let mut ratios = Vec::with_capacity(scales.len());
    for &s in scales {
        if !(s > 0.0) {
            return Err(invalid("scales must be positive"));
        }
        let mut worst = 0.0f64;
        for v in v_samples {
            check_dim(src.dim(), v.len())?;
            let hv = src.dilated(s, v);
            let size = metrics::qnorm_coords(src, &hv);
            if size == 0.0 {
                continue;
            }
            let lhs = f.apply(&src.mul(x.coords(), &hv));
            let rhs = tgt.mul(&fx, &df.apply(&hv));
            worst = worst.max(metrics::dist_qn(tgt, &lhs, &rhs) / size);
        }
        ratios.push((s, worst));
    }
    Ok(ApproxResidual { ratios })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricDiff {
    pub value: f64,
    /// `(t, d_M(f(x·h_t y₁), f(x·h_t y₂)) / t)` per rung.
    pub ratios: Vec<(f64, f64)>,
    pub converged: bool,
}

/// Metric differential `Δ_x(y₁, y₂)` with the base point held at `x`.
pub fn metric_diff(
    f: &CarnotMap,
    x: &GroupPoint,
    y1: &GroupPoint,
    y2: &GroupPoint,
    scales: &[f64],
    metric: &Metric,
) -> Result<MetricDiff> {
    let (src, tgt) = (f.source(), f.target());
    for p in [x, y1, y2] {
        src.check_point(p)?;
    }
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(invalid("scale ladder must be positive"));
    }
    let mut ratios = Vec::with_capacity(scales.len());
    for &t in scales {
        let a = f.apply(&src.mul(x.coords(), &src.dilated(t, y1.coords())));
        let b = f.apply(&src.mul(x.coords(), &src.dilated(t, y2.coords())));
        ratios.push((t, metrics::distance(tgt, metric, &a, &b)? / t));
    }
    let seq: Vec<Vec<f64>> = ratios.iter().map(|r| vec![r.1]).collect();
    let ex = extrapolate(scales, &seq, &[0.0]);
    Ok(MetricDiff {
        value: ex.value[0].max(0.0),
        ratios,
        converged: !ex.diverged,
    })
}

/// Solves `f(y) = m` by damped Newton from `y0` with a central-difference
/// Jacobian.
fn newton_preimage(f: &CarnotMap, m: &[f64], y0: &[f64]) -> Option<Vec<f64>> {
    let n = y0.len();
    if m.len() != n {
        return None;
    }
    let mut y = y0.to_vec();
    let resid = |y: &[f64]| -> Vec<f64> { f.apply(y).iter().zip(m).map(|(a, b)| a - b).collect() };
    let mut r = resid(&y);
    let mut nr = norm(&r);
    let target = 1e-11 * (1.0 + norm(m));
    let mut probe = y.clone();
    for _ in 0..40 {
        if nr <= target {
            return Some(y);
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * (1.0 + y[j].abs());
            probe.copy_from_slice(&y);
            probe[j] = y[j] + h;
            let fp = f.apply(&probe);
            probe[j] = y[j] - h;
            let fm = f.apply(&probe);
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let delta = jac.lu().solve(&DVector::from_column_slice(&r))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..n {
                probe[i] = y[i] - t * delta[i];
            }
            let r_new = resid(&probe);
            let n_new = norm(&r_new);
            if n_new < nr {
                y.copy_from_slice(&probe);
                r = r_new;
                nr = n_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return if nr <= target { Some(y) } else { None };
        }
    }
    if nr <= target {
        Some(y)
    } else {
        None
    }
}

/// Number of starting points tried per target point when inverting.
const INVERSION_STARTS: usize = 6;

/// Monte Carlo estimate of `∫ N(m) dm` (or of the image volume when
/// `multiplicity` is false) over the coordinate box enclosing the images of
/// `src_pts`, where `N(m)` counts preimages `y` with `contains(y)`. Returns the
/// estimate and its standard error.
fn image_integral(
    f: &CarnotMap,
    contains: &dyn Fn(&[f64]) -> bool,
    src_pts: &[Vec<f64>],
    mc: usize,
    multiplicity: bool,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let tn = f.target().dim();
    if f.source().dim() != tn {
        return Err(invalid(
            "image inversion needs equal topological dimensions",
        ));
    }
    let images: Vec<Vec<f64>> = src_pts.iter().map(|p| f.apply(p)).collect();
    let mut lo = vec![f64::INFINITY; tn];
    let mut hi = vec![f64::NEG_INFINITY; tn];
    for im in &images {
        for c in 0..tn {
            lo[c] = lo[c].min(im[c]);
            hi[c] = hi[c].max(im[c]);
        }
    }
    // Margins catch image points beyond the sampled extremes.
    let mut vol = 1.0;
    for c in 0..tn {
        let pad = 0.15 * (hi[c] - lo[c]);
        lo[c] -= pad;
        hi[c] += pad;
        vol *= hi[c] - lo[c];
    }
    if !(vol > 0.0) {
        return Ok((0.0, 0.0));
    }
    let k = INVERSION_STARTS.min(images.len());
    let mut total = 0usize;
    let mut total_sq = 0usize;
    let mut m = vec![0.0; tn];
    let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut found: Vec<Vec<f64>> = Vec::new();
    for _ in 0..mc {
        for c in 0..tn {
            m[c] = rng::uniform(rng, lo[c], hi[c]);
        }
        nearest.clear();
        for (i, im) in images.iter().enumerate() {
            let d: f64 = im.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
            if nearest.len() < k || d < nearest[k - 1].0 {
                let pos = nearest.partition_point(|e| e.0 <= d);
                nearest.insert(pos, (d, i));
                nearest.truncate(k);
            }
        }
        found.clear();
        for &(_, i) in &nearest {
            if let Some(y) = newton_preimage(f, &m, &src_pts[i]) {
                let dup = found.iter().any(|z| {
                    let d = z
                        .iter()
                        .zip(&y)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    d <= 1e-7 * (1.0 + norm(&y))
                });
                if !dup && contains(&y) {
                    found.push(y);
                    if !multiplicity {
                        break;
                    }
                }
            }
        }
        total += found.len();
        total_sq += found.len() * found.len();
    }
    let n = mc as f64;
    let mean = total as f64 / n;
    let var = (total_sq as f64 / n - mean * mean).max(0.0);
    Ok((vol * mean, vol * math::sqrt(var / n)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianEstimate {
    /// Weighted mean of the per-rung ratios, or the intercept of a weighted
    /// line through them when the slope is significant.
    pub value: f64,
    /// `(t, vol f(B(x,t)) / vol B(x,t))` per rung.
    pub ratios: Vec<(f64, f64)>,
}

/// Jacobian `H^k(f(B(x,t))) / H^k(B(x,t))` from Monte Carlo image volumes.
/// Volumes are Lebesgue in exponential coordinates, which is a fixed
/// multiple of `H^k` on each group.
pub fn jacobian(
    f: &CarnotMap,
    x: &GroupPoint,
    t_ladder: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<JacobianEstimate> {
    let (src, tgt) = (f.source(), f.target());
    src.check_point(x)?;
    let k = src.homogeneous_dimension();
    if tgt.homogeneous_dimension() != k {
        return Err(invalid(format!(
            "homogeneous dimensions differ ({k} vs {})",
            tgt.homogeneous_dimension()
        )));
    }
    if t_ladder.is_empty() || t_ladder.iter().any(|t| !(*t > 0.0)) || mc_samples == 0 {
        return Err(invalid("jacobian needs a positive ladder and samples"));
    }
    let unit = measure::unit_ball_volume(src, 200_000, seed ^ 0x5eed);
    let n_src = (mc_samples / 10).clamp(200, 2000);
    let mut ratios = Vec::with_capacity(t_ladder.len());
    let mut errors = Vec::with_capacity(t_ladder.len());
    for (i, &t) in t_ladder.iter().enumerate() {
        let mut r = rng::derived(seed, i as u64);
        let pts: Vec<Vec<f64>> = (0..n_src)
            .map(|_| src.mul(x.coords(), &metrics::random_qn_ball_point(src, t, &mut r)))
            .collect();
        let xc = x.coords().to_vec();
        let contains = |y: &[f64]| metrics::dist_qn(src, &xc, y) <= t;
        let (vol, se) = image_integral(f, &contains, &pts, mc_samples, false, &mut r)?;
        let scale = unit * math::pow(t, k as f64);
        ratios.push((t, vol / scale));
        errors.push(se / scale);
    }
    Ok(JacobianEstimate {
        value: zero_radius_value(&ratios, &errors),
        ratios,
    })
}

/// Zero-radius value of `(t, y)` rungs with standard errors `se`. Noise in
/// the rungs is amplified by extrapolation, so the line is only used when
/// its slope exceeds twice its own standard error.
fn zero_radius_value(rungs: &[(f64, f64)], se: &[f64]) -> f64 {
    let floor = rungs.iter().map(|r| r.1.abs()).fold(0.0, f64::max) * 1e-12 + f64::MIN_POSITIVE;
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s).max(floor)).collect();
    let sw: f64 = w.iter().sum();
    let mean = rungs.iter().zip(&w).map(|(r, w)| w * r.1).sum::<f64>() / sw;
    if rungs.len() < 3 {
        return mean;
    }
    let mt = rungs.iter().zip(&w).map(|(r, w)| w * r.0).sum::<f64>() / sw;
    let stt: f64 = rungs
        .iter()
        .zip(&w)
        .map(|(r, w)| w * (r.0 - mt) * (r.0 - mt))
        .sum();
    if !(stt > 0.0) {
        return mean;
    }
    let slope = rungs
        .iter()
        .zip(&w)
        .map(|(r, w)| w * (r.0 - mt) * (r.1 - mean))
        .sum::<f64>()
        / stt;
    if slope.abs() > 2.0 / math::sqrt(stt) {
        mean - slope * mt
    } else {
        mean
    }
}

/// Pointwise Jacobian `|det Df(x)|` of the numerical Pansu differential; zero
/// when the homogeneous dimensions differ.
pub fn pansu_jacobian(f: &CarnotMap, x: &GroupPoint) -> Result<f64> {
    if f.source().homogeneous_dimension() != f.target().homogeneous_dimension() {
        return Ok(0.0);
    }
    Ok(pansu_diff(f, x, &DEFAULT_SCALES)?.hom.determinant().abs())
}

/// Number of clusters among sample points whose image lies within `tol` of
/// `m`; points closer than `4·tol` in the source are linked.
pub fn multiplicity(f: &CarnotMap, e: &SetSample, m: &GroupPoint, tol: f64) -> Result<usize> {
    let (src, tgt) = (f.source(), f.target());
    check_dim(src.dim(), e.dim())?;
    tgt.check_point(m)?;
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let hits: Vec<&[f64]> = (0..e.len())
        .map(|i| e.point(i))
        .filter(|p| metrics::dist_qn(tgt, &f.apply(p), m.coords()) <= tol)
        .collect();
    let link = 4.0 * tol;
    let mut label = vec![usize::MAX; hits.len()];
    let mut clusters = 0;
    let mut stack = Vec::new();
    for start in 0..hits.len() {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = clusters;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for j in 0..hits.len() {
                if label[j] == usize::MAX && metrics::dist_qn(src, hits[i], hits[j]) <= link {
                    label[j] = clusters;
                    stack.push(j);
                }
            }
        }
        clusters += 1;
    }
    Ok(clusters)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaOptions {
    /// Points drawn from `E` for the left-hand side and as Newton starts.
    pub n_source: usize,
    /// Monte Carlo target points for the right-hand side.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for AreaOptions {
    fn default() -> Self {
        Self {
            n_source: 2000,
            mc_samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaReport {
    /// `∫_E J dH^k` with `J = |det Df|`.
    pub lhs: f64,
    /// `∫ N(f|_E, m) dH^k(m)`.
    pub rhs: f64,
    pub ratio: f64,
    /// Fraction of sample points where the Pansu differential was flagged.
    pub nondifferentiable_fraction: f64,
}

/// Both sides of the area formula for `f` on `E`. Measures are Lebesgue in
/// exponential coordinates on each side.
pub fn area_check(f: &CarnotMap, e: &MembershipSet, opts: &AreaOptions) -> Result<AreaReport> {
    let (src, tgt) = (f.source(), f.target());
    if src.homogeneous_dimension() != tgt.homogeneous_dimension() {
        return Err(invalid("area formula needs equal homogeneous dimensions"));
    }
    let sample = e.sample(src, opts.n_source)?;
    let mut lhs = 0.0;
    let mut flagged = 0usize;
    for i in 0..sample.len() {
        let d = pansu_diff(f, &sample.points()[i], &DEFAULT_SCALES)?;
        if !d.differentiable {
            flagged += 1;
        }
        lhs += sample.weight(i) * d.hom.determinant().abs();
    }
    let pts: Vec<Vec<f64>> = sample
        .points()
        .iter()
        .map(|p| p.coords().to_vec())
        .collect();
    let mut r = rng::derived(opts.seed, 1);
    let contains = |y: &[f64]| e.contains(y);
    let (rhs, _) = image_integral(f, &contains, &pts, opts.mc_samples, true, &mut r)?;
    let ratio = if rhs > 0.0 { lhs / rhs } else { f64::NAN };
    Ok(AreaReport {
        lhs,
        rhs,
        ratio,
        nondifferentiable_fraction: flagged as f64 / sample.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroJacobianRung {
    pub threshold: f64,
    /// Sample weight fraction with `J < threshold`.
    pub degenerate_fraction: f64,
    /// Target measure estimate of the image of the degenerate part.
    pub image_measure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroJacobianReport {
    /// Source and target homogeneous dimensions differ, so `J ≡ 0`.
    pub dimension_mismatch: bool,
    pub rungs: Vec<ZeroJacobianRung>,
}

/// Image measure of `{x ∈ E : J(x) < θ}` for each threshold `θ`, estimated as
/// `count(δ)·vol B_M(0, δ/2)` from a greedy `δ`-cover of the images.
pub fn zero_jacobian_image_check(
    f: &CarnotMap,
    e: &SetSample,
    thresholds: &[f64],
    delta: f64,
) -> Result<ZeroJacobianReport> {
    let (src, tgt) = (f.source(), f.target());
    check_dim(src.dim(), e.dim())?;
    if !(delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    let mismatch = src.homogeneous_dimension() != tgt.homogeneous_dimension();
    let jac: Vec<f64> = if mismatch {
        vec![0.0; e.len()]
    } else {
        e.points()
            .iter()
            .map(|p| pansu_jacobian(f, p))
            .collect::<Result<_>>()?
    };
    let k_m = tgt.homogeneous_dimension() as f64;
    let ball = measure::unit_ball_volume(tgt, 100_000, 7) * math::pow(delta / 2.0, k_m);
    let total = e.total_weight();
    let mut rungs = Vec::with_capacity(thresholds.len());
    for &th in thresholds {
        let idx: Vec<usize> = (0..e.len()).filter(|&i| jac[i] < th).collect();
        let weight: f64 = idx.iter().map(|&i| e.weight(i)).sum();
        let image_measure = if idx.is_empty() {
            0.0
        } else {
            let pts = idx
                .iter()
                .map(|&i| GroupPoint::new(f.apply(e.point(i))))
                .collect();
            let images = SetSample::new(pts, None, measure::SampleMeta::new("image", None, None))?;
            measure::cover_greedy(tgt, &images, delta, &Metric::Qn)?.len() as f64 * ball
        };
        rungs.push(ZeroJacobianRung {
            threshold: th,
            degenerate_fraction: weight / total,
            image_measure,
        });
    }
    Ok(ZeroJacobianReport {
        dimension_mismatch: mismatch,
        rungs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::BuiltinGroup;

    fn h3() -> CarnotAlgebra {
        CarnotAlgebra::builtin(BuiltinGroup::Heisenberg(1)).unwrap()
    }

    fn generic() -> GroupPoint {
        GroupPoint::new(vec![0.37, -0.81, 0.52])
    }

    #[test]
    fn jacobian_extrapolates_only_significant_slopes() {
        let noisy = [(0.5, 38.0), (0.35, 35.7), (0.25, 34.7)];
        let v = zero_radius_value(&noisy, &[1.2, 1.2, 1.2]);
        assert!((v - (38.0 + 35.7 + 34.7) / 3.0).abs() < 1e-12);
        let trend = [(0.5, 21.0), (0.35, 19.5), (0.25, 18.5)];
        assert!((zero_radius_value(&trend, &[0.01; 3]) - 16.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_mixing_entries() {
        let g = h3();
        let mut m = DMatrix::identity(3, 3);
        m[(2, 0)] = 0.5;
        assert!(GradedHom::new(g.clone(), g, m).is_err());
    }

    #[test]
    fn automorphism_blocks_and_determinant() {
        let g = h3();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let hom = GradedHom::from_horizontal(&g, &g, &a).unwrap();
        assert!((hom.matrix()[(2, 2)] - 6.0).abs() < 1e-12);
        assert!(hom.residual() < 1e-12);
        assert!((hom.determinant() - 36.0).abs() < 1e-9);
        // Intertwines dilations.
        let v = [0.3, -0.7, 1.1];
        let lhs = hom.apply(&g.dilated(0.4, &v));
        let rhs = g.dilated(0.4, &hom.apply(&v));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn dilation_is_its_own_differential() {
        let g = h3();
        let f = CarnotMap::dilation(&g, 2.0).unwrap();
        let d = pansu_diff(&f, &generic(), &DEFAULT_SCALES).unwrap();
        assert!(d.differentiable);
        assert!(d.hom.residual() < 1e-8, "{d:?}");
        let expect = GradedHom::dilation(&g, 2.0);
        assert!((d.hom.matrix() - expect.matrix()).amax() < 1e-8);
    }

    #[test]
    fn translation_differential_is_identity() {
        let g = h3();
        let f = CarnotMap::left_translation(&g, &GroupPoint::new(vec![1.0, 2.0, -3.0])).unwrap();
        let d = pansu_diff(&f, &generic(), &DEFAULT_SCALES).unwrap();
        assert!((d.hom.matrix() - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn automorphism_is_recovered() {
        let g = h3();
        let f = CarnotMap::standard_automorphism(&g).unwrap();
        let d = pansu_diff(&f, &generic(), &DEFAULT_SCALES).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 6.0]));
        assert!((d.hom.matrix() - expect).amax() < 1e-6);
        assert!(d.hom.residual() < 1e-8);
    }

    #[test]
    fn shear_differential() {
        let g = h3();
        let f = CarnotMap::shear(&g).unwrap();
        let x = generic();
        let d = pansu_diff(&f, &x, &DEFAULT_SCALES).unwrap();
        assert!(d.differentiable, "{d:?}");
        let a = x.coords()[0];
        let expect =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 2.0 * a, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(
            (d.hom.matrix() - expect).amax() < 1e-6,
            "{}",
            d.hom.matrix()
        );
        assert!((d.hom.determinant() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quasi_norm_is_flagged_at_the_identity() {
        let g = h3();
        let f = CarnotMap::quasi_norm(&g);
        let d = pansu_diff(&f, &g.identity(), &DEFAULT_SCALES).unwrap();
        assert!(!d.differentiable);
        assert!(d.one_sided_gap > 0.5);
    }

    #[test]
    fn non_contact_map_is_flagged() {
        let g = h3();
        let f = CarnotMap::new(
            "tilt",
            g.clone(),
            g.clone(),
            |x| vec![x[0], x[1], x[2] + x[0]],
            None,
        );
        let d = pansu_diff(&f, &generic(), &DEFAULT_SCALES).unwrap();
        assert!(!d.differentiable);
    }

    #[test]
    fn approx_residual_linear_and_shear() {
        let g = h3();
        let mut r = rng::seeded(3);
        let vs: Vec<Vec<f64>> = (0..10)
            .map(|_| metrics::random_unit_point(&g, &mut r))
            .collect();
        let aut = CarnotMap::standard_automorphism(&g).unwrap();
        let d = pansu_diff(&aut, &generic(), &DEFAULT_SCALES).unwrap();
        let res = approx_residual(&aut, &generic(), &d.hom, &vs, &[1e-1, 1e-2, 1e-3]).unwrap();
        // Vertical roundoff ε enters d_qn as √ε, then is divided by s.
        assert!(res.max() < 1e-4, "{res:?}");

        let sh = CarnotMap::shear(&g).unwrap();
        let d = pansu_diff(&sh, &generic(), &DEFAULT_SCALES).unwrap();
        let res = approx_residual(&sh, &generic(), &d.hom, &vs, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert!(res.min_decay_per_decade() >= 2.0, "{res:?}");
        assert!(res.ratios[2].1 < 0.5 * res.ratios[0].1);
    }

    #[test]
    fn metric_differential_examples() {
        let g = h3();
        let y1 = GroupPoint::new(vec![0.3, 0.1, -0.4]);
        let y2 = GroupPoint::new(vec![-0.2, 0.5, 0.2]);
        let d = metrics::d_qn(&g, &y1, &y2).unwrap();
        let id = CarnotMap::identity(&g);
        let m = metric_diff(&id, &generic(), &y1, &y2, &DEFAULT_SCALES, &Metric::Qn).unwrap();
        assert!((m.value - d).abs() < 1e-9 && m.converged);
        let dil = CarnotMap::dilation(&g, 2.0).unwrap();
        let m = metric_diff(&dil, &generic(), &y1, &y2, &DEFAULT_SCALES, &Metric::Qn).unwrap();
        assert!((m.value - 2.0 * d).abs() < 1e-9);
        let m = metric_diff(&dil, &generic(), &y1, &y1, &DEFAULT_SCALES, &Metric::Qn).unwrap();
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn jacobian_examples() {
        let g = h3();
        let ladder = [0.5, 0.35, 0.25];
        let id = jacobian(&CarnotMap::identity(&g), &generic(), &ladder, 6000, 1).unwrap();
        assert!((id.value - 1.0).abs() < 0.05, "{id:?}");
        let dil = jacobian(
            &CarnotMap::dilation(&g, 2.0).unwrap(),
            &generic(),
            &ladder,
            6000,
            2,
        )
        .unwrap();
        assert!((dil.value / 16.0 - 1.0).abs() < 0.1, "{dil:?}");
    }

    #[test]
    fn fold_multiplicity() {
        let r1 = CarnotAlgebra::builtin(BuiltinGroup::Abelian(1)).unwrap();
        let e = measure::sample_box(&r1, &r1.identity(), 1.0, 2000, 1).unwrap();
        let fold = CarnotMap::fold();
        assert_eq!(
            multiplicity(&fold, &e, &GroupPoint::new(vec![0.5]), 0.01).unwrap(),
            2
        );
        assert_eq!(
            multiplicity(&fold, &e, &GroupPoint::new(vec![3.0]), 0.01).unwrap(),
            0
        );
        let id = CarnotMap::identity(&r1);
        assert_eq!(
            multiplicity(&id, &e, &GroupPoint::new(vec![0.5]), 0.01).unwrap(),
            1
        );
    }

    #[test]
    fn area_formula_for_the_identity_and_fold() {
        let g = h3();
        let e = MembershipSet::boxed(&g, g.identity(), 1.0, 4);
        let opts = AreaOptions {
            n_source: 600,
            mc_samples: 6000,
            seed: 1,
        };
        let rep = area_check(&CarnotMap::identity(&g), &e, &opts).unwrap();
        assert!((rep.ratio - 1.0).abs() < 0.1, "{rep:?}");

        let r1 = CarnotAlgebra::builtin(BuiltinGroup::Abelian(1)).unwrap();
        let e = MembershipSet::boxed(&r1, r1.identity(), 1.0, 4);
        let rep = area_check(&CarnotMap::fold(), &e, &opts).unwrap();
        // ∫_{[-1,1]} 1 = 2 and the image [0,1] is covered twice.
        assert!((rep.lhs - 2.0).abs() < 1e-6);
        assert!((rep.ratio - 1.0).abs() < 0.1, "{rep:?}");
    }

    #[test]
    fn zero_jacobian_examples() {
        let g = h3();
        let e = measure::sample_box(&g, &g.identity(), 1.0, 300, 2).unwrap();
        let c = CarnotMap::constant(&g, &g, &GroupPoint::new(vec![1.0, 0.0, 0.0])).unwrap();
        let rep = zero_jacobian_image_check(&c, &e, &[1e-3], 0.1).unwrap();
        assert_eq!(rep.rungs[0].degenerate_fraction, 1.0);
        assert!(rep.rungs[0].image_measure < 1e-4);

        let p = CarnotMap::horizontal_projection(&g).unwrap();
        let rep = zero_jacobian_image_check(&p, &e, &[1e-3], 0.1).unwrap();
        assert!(rep.dimension_mismatch);
        assert_eq!(rep.rungs[0].degenerate_fraction, 1.0);

        let a = CarnotMap::standard_automorphism(&g).unwrap();
        let rep = zero_jacobian_image_check(&a, &e, &[1.0, 1e-3], 0.1).unwrap();
        assert!(rep
            .rungs
            .iter()
            .all(|r| r.degenerate_fraction == 0.0 && r.image_measure == 0.0));
    }
}
