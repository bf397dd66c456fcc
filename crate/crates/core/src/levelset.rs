//! Level sets of smooth real functions on a Carnot group: horizontal
//! gradients, characteristic points, surface measure, coarea, kernel
//! subgroups, Ahlfors regularity and the tangent-approximation checks.
//!
//! Gradients are taken in the left-invariant frame `Xⱼ f(x) = d/dt f(x·exp(t eⱼ))`.
//! The Riemannian completion makes the frame orthonormal on every layer
//! above the first, with `h_inner` on the first.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::algebra::{BuiltinGroup, CarnotAlgebra};
use crate::cones::{self, ApproxReport, AptanReport, SubspaceSpec, TesterOptions};
use crate::error::{check_dim, invalid, Error, Result};
use crate::group::GroupPoint;
use crate::linalg;
use crate::math;
use crate::measure::{self, SampleMeta, SetSample, RESOLUTION_GUARD};
use crate::metrics::{self, Metric};
use crate::pansu::{self, CarnotMap};
use crate::rng;

/// Newton projection onto a level set stops below this residual.
pub const PROJECTION_TOL: f64 = 1e-8;

/// Largest `|f(x) − t|` accepted as "on the level set".
pub const LEVEL_TOL: f64 = 1e-6;

/// Horizontal components below this (times the local gradient scale) count
/// as zero in [`generic_test`].
pub const GENERIC_TOL: f64 = 1e-8;

/// Pansu ladder for real-valued fields. Central quotients of a smooth field
/// carry an `s²` error that the extrapolation treats as `s`, so the ladder
/// reaches further down than the default.
pub const KERNEL_SCALES: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Step of the finite-difference frame derivatives.
const FD_STEP: f64 = 1e-5;

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A real function on a group with an optional analytic frame gradient
/// `(X₁f, …, X_n f)` over the full left-invariant frame.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    alg: CarnotAlgebra,
    eval: Arc<EvalFn>,
    gradient: Option<Arc<GradFn>>,
}

impl core::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("group", &self.alg.name())
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// Left-invariant frame at `x`: row `j` is `d/dt (x·exp(t eⱼ))` at `t = 0`.
/// The group law is polynomial of degree at most the depth in `t`, so the
/// seven-point stencil is exact up to rounding.
pub fn frame(alg: &CarnotAlgebra, x: &[f64]) -> Vec<Vec<f64>> {
    const H: f64 = 0.25;
    const C: [(f64, f64); 3] = [(1.0, 45.0), (2.0, -9.0), (3.0, 1.0)];
    let n = alg.dim();
    let mut out = Vec::with_capacity(n);
    let mut step = vec![0.0; n];
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for j in 0..n {
        let mut d = vec![0.0; n];
        for (m, c) in C {
            step[j] = m * H;
            alg.mul_into(x, &step, &mut plus);
            step[j] = -m * H;
            alg.mul_into(x, &step, &mut minus);
            for k in 0..n {
                d[k] += c * (plus[k] - minus[k]);
            }
        }
        step[j] = 0.0;
        d.iter_mut().for_each(|v| *v /= 60.0 * H);
        out.push(d);
    }
    out
}

impl ScalarField {
    pub fn new(
        name: impl Into<String>,
        alg: CarnotAlgebra,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: Option<Arc<GradFn>>,
    ) -> Self {
        Self {
            name: name.into(),
            alg,
            eval: Arc::new(eval),
            gradient,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn algebra(&self) -> &CarnotAlgebra {
        &self.alg
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Builds the frame gradient from a Euclidean coordinate gradient.
    fn from_euclidean(
        name: impl Into<String>,
        alg: &CarnotAlgebra,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        euclid: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        let a = alg.clone();
        let grad = move |x: &[f64]| {
            let g = euclid(x);
            frame(&a, x).iter().map(|v| linalg::dot(v, &g)).collect()
        };
        Self::new(name, alg.clone(), eval, Some(Arc::new(grad)))
    }

    /// `x ↦ xⱼ` (0-based coordinate).
    pub fn coordinate(alg: &CarnotAlgebra, j: usize) -> Result<Self> {
        if j >= alg.dim() {
            return Err(invalid(format!("coordinate {j} out of range")));
        }
        let n = alg.dim();
        Ok(Self::from_euclidean(
            format!("coord{j}"),
            alg,
            move |x| x[j],
            move |_| {
                let mut g = vec![0.0; n];
                g[j] = 1.0;
                g
            },
        ))
    }

    /// `((‖v₁‖²)² + ‖v₂‖²)^{1/4}` on a depth-2 group; on the first Heisenberg
    /// group this is `((a² + b²)² + c²)^{1/4}`. Smooth away from the identity.
    pub fn quasi_sphere(alg: &CarnotAlgebra) -> Result<Self> {
        if alg.depth() != 2 {
            return Err(invalid("the quasi-sphere field needs a depth-2 group"));
        }
        let g = alg.grading();
        let (r1, r2) = (g.layer_range(1), g.layer_range(2));
        let h = alg.h_inner().clone();
        let (e1, e2) = (r1.clone(), r2.clone());
        let (ah, bh) = (alg.clone(), alg.clone());
        let eval = move |x: &[f64]| {
            let s1 = ah.h_norm_sq(&x[e1.clone()]);
            let s2: f64 = x[e2.clone()].iter().map(|v| v * v).sum();
            math::sqrt(math::sqrt(s1 * s1 + s2))
        };
        let euclid = move |x: &[f64]| {
            let v1 = &x[r1.clone()];
            let s1 = bh.h_norm_sq(v1);
            let s2: f64 = x[r2.clone()].iter().map(|v| v * v).sum();
            let q = s1 * s1 + s2;
            let mut out = vec![0.0; x.len()];
            if q == 0.0 {
                return out;
            }
            // d/dx q^{1/4} = q^{-3/4}/4 · dq.
            let c = 0.25 * math::pow(q, -0.75);
            for (i, o) in out[r1.clone()].iter_mut().enumerate() {
                let hv: f64 = (0..v1.len()).map(|k| h[(i, k)] * v1[k]).sum();
                *o = c * 4.0 * s1 * hv;
            }
            for j in r2.clone() {
                out[j] = c * 2.0 * x[j];
            }
            out
        };
        Ok(Self::from_euclidean("quasi_sphere", alg, eval, euclid))
    }

    /// The quasi-norm `|x|_qn`; not smooth where a higher layer vanishes, so
    /// it has no analytic gradient.
    pub fn qnorm(alg: &CarnotAlgebra) -> Self {
        let a = alg.clone();
        Self::new(
            "qnorm",
            alg.clone(),
            move |x| metrics::qnorm_coords(&a, x),
            None,
        )
    }

    /// `x ↦ f(g⁻¹x)`; frame derivatives are left invariant.
    pub fn translated(&self, g: &GroupPoint) -> Result<Self> {
        self.alg.check_point(g)?;
        let ginv: Vec<f64> = g.coords().iter().map(|v| -v).collect();
        let (a, f) = (self.alg.clone(), self.eval.clone());
        let gi = ginv.clone();
        let eval = move |x: &[f64]| f(&a.mul(&gi, x));
        let gradient = self.gradient.clone().map(|gr| {
            let a = self.alg.clone();
            Arc::new(move |x: &[f64]| gr(&a.mul(&ginv, x))) as Arc<GradFn>
        });
        Ok(Self::new(
            format!("{}∘L", self.name),
            self.alg.clone(),
            eval,
            gradient,
        ))
    }

    /// `x ↦ f(h_{1/λ} x)`; layer-`i` derivatives pick up `λ^{-i}`.
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("dilation factor must be positive"));
        }
        let (a, f) = (self.alg.clone(), self.eval.clone());
        let eval = move |x: &[f64]| f(&a.dilated(1.0 / lambda, x));
        let gradient = self.gradient.clone().map(|gr| {
            let a = self.alg.clone();
            Arc::new(move |x: &[f64]| {
                let mut g = gr(&a.dilated(1.0 / lambda, x));
                for (j, v) in g.iter_mut().enumerate() {
                    *v *= math::pow(lambda, -(a.grading().layer_of(j) as f64));
                }
                g
            }) as Arc<GradFn>
        });
        Ok(Self::new(
            format!("{}∘δ", self.name),
            self.alg.clone(),
            eval,
            gradient,
        ))
    }

    /// The field as a map into ℝ, for the Pansu machinery.
    pub fn as_map(&self) -> CarnotMap {
        let f = self.eval.clone();
        let r = CarnotAlgebra::builtin(BuiltinGroup::Abelian(1)).expect("builtin");
        CarnotMap::new(
            self.name.clone(),
            self.alg.clone(),
            r,
            move |x| vec![f(x)],
            None,
        )
    }

    /// Frame gradient: analytic when available, else central differences.
    pub fn frame_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => frame_gradient_fd(self, x, self.alg.dim()),
        }
    }

    /// `(X₁f, …, X_d f)` over the horizontal frame.
    pub fn horizontal_components(&self, x: &[f64]) -> Vec<f64> {
        let d1 = self.alg.horizontal_dim();
        match &self.gradient {
            Some(g) => {
                let mut v = g(x);
                v.truncate(d1);
                v
            }
            None => frame_gradient_fd(self, x, d1),
        }
    }
}

/// Central differences along `t ↦ x·exp(t eⱼ)` for the first `count` frame
/// directions.
pub fn frame_gradient_fd(f: &ScalarField, x: &[f64], count: usize) -> Vec<f64> {
    let alg = &f.alg;
    let n = alg.dim();
    let mut step = vec![0.0; n];
    let mut y = vec![0.0; n];
    (0..count)
        .map(|j| {
            step[j] = FD_STEP;
            alg.mul_into(x, &step, &mut y);
            let fp = f.eval(&y);
            step[j] = -FD_STEP;
            alg.mul_into(x, &step, &mut y);
            let fm = f.eval(&y);
            step[j] = 0.0;
            (fp - fm) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `∇₀f(x)` as the horizontal vector `h⁻¹(X₁f, …, X_d f)` together with its
/// `h_inner` length.
pub fn horizontal_gradient(f: &ScalarField, x: &GroupPoint) -> Result<(Vec<f64>, f64)> {
    f.alg.check_point(x)?;
    let comps = f.horizontal_components(x.coords());
    Ok(raise_index(f.alg.h_inner(), &comps))
}

/// Turns frame derivatives (a covector) into a vector for the metric `gram`
/// and returns it with its length.
fn raise_index(gram: &DMatrix<f64>, comps: &[f64]) -> (Vec<f64>, f64) {
    let n = comps.len();
    if *gram == DMatrix::identity(n, n) {
        return (comps.to_vec(), linalg::norm(comps));
    }
    let inv = gram
        .clone()
        .try_inverse()
        .expect("inner product is positive definite");
    let v: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| inv[(i, k)] * comps[k]).sum())
        .collect();
    let len = math::sqrt(linalg::dot(&v, comps).max(0.0));
    (v, len)
}

/// Riemannian gradient vector (in the frame) and its length.
fn riemannian_gradient(f: &ScalarField, x: &[f64]) -> (Vec<f64>, f64) {
    raise_index(&f.alg.riemannian_gram(), &f.frame_gradient(x))
}

/// Local scale for relative tolerances: `max(1, |∇f|)`.
fn gradient_scale(f: &ScalarField, x: &[f64]) -> f64 {
    riemannian_gradient(f, x).1.max(1.0)
}

/// Whether `x ∈ f⁻¹(t)` is characteristic: `‖∇₀f(x)‖ < tol·max(1, |∇f(x)|)`.
pub fn characteristic_test(f: &ScalarField, t: f64, x: &GroupPoint, tol: f64) -> Result<bool> {
    f.alg.check_point(x)?;
    let residual = (f.eval(x.coords()) - t).abs();
    if residual > LEVEL_TOL.max(tol) * (1.0 + t.abs()) {
        return Err(Error::OffLevelSet { residual });
    }
    let (_, h) = horizontal_gradient(f, x)?;
    Ok(h < tol * gradient_scale(f, x.coords()))
}

/// Ratio `|∇₀f| / |∇f|` of the horizontal to the full Riemannian gradient.
pub fn surface_density(f: &ScalarField, x: &GroupPoint) -> Result<f64> {
    f.alg.check_point(x)?;
    let (_, full) = riemannian_gradient(f, x.coords());
    if !(full > 0.0) {
        return Err(Error::SingularGradient);
    }
    let (_, h) = horizontal_gradient(f, x)?;
    Ok((h / full).min(1.0))
}

/// `Box(center, radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub center: GroupPoint,
    pub radius: f64,
}

impl Region {
    pub fn new(alg: &CarnotAlgebra, center: GroupPoint, radius: f64) -> Result<Self> {
        alg.check_point(&center)?;
        if !(radius > 0.0) {
            return Err(invalid("region radius must be positive"));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, alg: &CarnotAlgebra, x: &[f64]) -> bool {
        metrics::box_gauge_coords(alg, &alg.relative(self.center.coords(), x)) < self.radius
    }

    pub fn volume(&self, alg: &CarnotAlgebra) -> f64 {
        metrics::box_volume(alg, self.radius)
    }

    fn random_point(&self, alg: &CarnotAlgebra, rg: &mut rng::Rng) -> Vec<f64> {
        alg.mul(
            self.center.coords(),
            &metrics::random_box_point(alg, self.radius, rg),
        )
    }
}

/// Newton iteration `p ← p·exp(−(f(p) − t)/|∇f|²·∇f)` along the Riemannian
/// gradient. Returns the projected point and its residual, or `None` when the
/// iteration fails to reach [`PROJECTION_TOL`].
pub fn project_to_level(f: &ScalarField, t: f64, x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let alg = &f.alg;
    let mut p = x.to_vec();
    let mut step = vec![0.0; p.len()];
    for _ in 0..60 {
        let r = f.eval(&p) - t;
        if r.abs() < PROJECTION_TOL {
            return Some((p, r.abs()));
        }
        let (v, len) = riemannian_gradient(f, &p);
        if !(len > 0.0) || !r.is_finite() {
            return None;
        }
        let c = -r / (len * len);
        for (s, vi) in step.iter_mut().zip(&v) {
            *s = c * vi;
        }
        p = alg.mul(&p, &step);
    }
    None
}

/// A sample of `f⁻¹(t)` whose weights estimate `H^{k−1}`.
#[derive(Debug, Clone)]
pub struct LevelSetSample {
    pub field: ScalarField,
    pub level: f64,
    pub sample: SetSample,
    pub residuals: Vec<f64>,
    /// Uniform draws used, accepted or not.
    pub draws: usize,
    /// Half-width of the slab `|f − t| < h` the draws were accepted from.
    pub slab: f64,
}

/// Level sample with the default slab half-width `0.05·max(1, |t|)`.
pub fn level_sample(
    f: &ScalarField,
    t: f64,
    region: &Region,
    n: usize,
    seed: u64,
) -> Result<LevelSetSample> {
    level_sample_with(f, t, region, n, seed, 0.05 * t.abs().max(1.0))
}

/// Draws uniform points of `region`, keeps those in the slab `|f − t| < slab`
/// and projects them onto `f⁻¹(t)`. A projected point `y` gets weight
/// `vol·|∇₀f(y)| / (draws·2·slab)`: the slab volume element is
/// `dA·2·slab/|∇f|`, and `|∇₀f|/|∇f|·dA` is the surface measure.
pub fn level_sample_with(
    f: &ScalarField,
    t: f64,
    region: &Region,
    n: usize,
    seed: u64,
    slab: f64,
) -> Result<LevelSetSample> {
    let alg = &f.alg;
    if n == 0 || !(slab > 0.0) {
        return Err(invalid("level sample needs n > 0 and a positive slab"));
    }
    let max_draws = 2000 * n + 100_000;
    let mut rg = rng::seeded(seed);
    let mut points = Vec::with_capacity(n);
    let mut hgrads = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut draws = 0;
    while points.len() < n && draws < max_draws {
        draws += 1;
        let x = region.random_point(alg, &mut rg);
        if (f.eval(&x) - t).abs() >= slab {
            continue;
        }
        let Some((y, res)) = project_to_level(f, t, &x) else {
            continue;
        };
        let comps = f.horizontal_components(&y);
        hgrads.push(raise_index(alg.h_inner(), &comps).1);
        residuals.push(res);
        points.push(GroupPoint::new(y));
    }
    if points.is_empty() {
        return Err(Error::EmptySample(format!(
            "no draws landed in the slab |f - {t}| < {slab}"
        )));
    }
    let scale = region.volume(alg) / (draws as f64 * 2.0 * slab);
    let weights = hgrads
        .iter()
        .map(|h| (h * scale).max(f64::MIN_POSITIVE))
        .collect();
    let k = alg.homogeneous_dimension() as f64;
    let sample = SetSample::new(
        points,
        Some(weights),
        SampleMeta::new(format!("level({}={t})", f.name), Some(seed), Some(k - 1.0)),
    )?;
    Ok(LevelSetSample {
        field: f.clone(),
        level: t,
        sample,
        residuals,
        draws,
        slab,
    })
}

/// Characteristic points of `f⁻¹(t)` in `region`: the lowest-gradient points
/// of a level sample are refined by Gauss-Newton on `(∇₀f, f − t) = 0` and
/// kept when `‖∇₀f‖ < tol`. Duplicates within `10⁻⁶` are merged.
pub fn characteristic_locus(
    f: &ScalarField,
    t: f64,
    region: &Region,
    n: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<GroupPoint>> {
    let alg = &f.alg;
    let level = level_sample(f, t, region, n, seed)?;
    let mut scored: Vec<(f64, usize)> = (0..level.sample.len())
        .map(|i| {
            (
                raise_index(
                    alg.h_inner(),
                    &f.horizontal_components(level.sample.point(i)),
                )
                .1,
                i,
            )
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = (scored.len() / 50).max(4).min(scored.len());
    let mut found: Vec<GroupPoint> = Vec::new();
    for &(_, i) in &scored[..keep] {
        let Some(p) = refine_characteristic(f, t, level.sample.point(i)) else {
            continue;
        };
        let (_, h) = raise_index(alg.h_inner(), &f.horizontal_components(&p));
        if h < tol * gradient_scale(f, &p)
            && region.contains(alg, &p)
            && !found
                .iter()
                .any(|q| metrics::dist_qn(alg, q.coords(), &p) < 1e-6)
        {
            found.push(GroupPoint::new(p));
        }
    }
    Ok(found)
}

fn refine_characteristic(f: &ScalarField, t: f64, x: &[f64]) -> Option<Vec<f64>> {
    let n = f.alg.dim();
    let residual = |p: &[f64]| {
        let mut r = f.horizontal_components(p);
        r.push(f.eval(p) - t);
        r
    };
    let mut p = x.to_vec();
    for _ in 0..50 {
        let r = residual(&p);
        if linalg::norm(&r) < 1e-14 {
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(r.len(), n);
        for j in 0..n {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += h;
            b[j] -= h;
            let (ra, rb) = (residual(&a), residual(&b));
            for i in 0..r.len() {
                jac[(i, j)] = (ra[i] - rb[i]) / (2.0 * h);
            }
        }
        let rhs = DMatrix::from_column_slice(r.len(), 1, &r);
        let dx = linalg::lstsq(&jac, &rhs)?;
        let mut moved = 0.0f64;
        for j in 0..n {
            p[j] -= dx[(j, 0)];
            moved = moved.max(dx[(j, 0)].abs());
        }
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        if moved < 1e-15 {
            break;
        }
    }
    Some(p)
}

/// Settings for [`coarea_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoareaOptions {
    /// Monte Carlo points for the volume side.
    pub n_volume: usize,
    /// Levels in the `t` grid.
    pub n_levels: usize,
    /// Accepted points per level.
    pub n_per_level: usize,
    pub seed: u64,
}

impl Default for CoareaOptions {
    fn default() -> Self {
        Self {
            n_volume: 200_000,
            n_levels: 40,
            n_per_level: 2_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoareaReport {
    /// `∫ u·|∇₀f|` over the region.
    pub lhs: f64,
    /// `∫ dt ∫_{f⁻¹(t)} u dH^{k−1}` over the level grid.
    pub rhs: f64,
    pub ratio: f64,
    /// Range of `t` covered by the grid.
    pub t_range: (f64, f64),
}

/// Both sides of the coarea formula for `f` and a weight `u ≥ 0` on `region`.
/// The `t` grid spans the values of `f` on the support of `u` seen by the
/// volume sample; each level uses a slab of half its spacing, so the slabs
/// tile the range.
pub fn coarea_check(
    f: &ScalarField,
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    region: &Region,
    opts: &CoareaOptions,
) -> Result<CoareaReport> {
    let alg = &f.alg;
    if opts.n_volume == 0 || opts.n_levels == 0 || opts.n_per_level == 0 {
        return Err(invalid("coarea needs positive sample sizes"));
    }
    let mut rg = rng::derived(opts.seed, 0);
    let vol = region.volume(alg);
    let mut lhs = 0.0;
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..opts.n_volume {
        let x = region.random_point(alg, &mut rg);
        let w = u(&x);
        if w < 0.0 {
            return Err(invalid("weight field must be non-negative"));
        }
        if w == 0.0 {
            continue;
        }
        let comps = f.horizontal_components(&x);
        lhs += w * raise_index(alg.h_inner(), &comps).1;
        let v = f.eval(&x);
        tmin = tmin.min(v);
        tmax = tmax.max(v);
    }
    lhs *= vol / opts.n_volume as f64;
    if lhs == 0.0 {
        return Ok(CoareaReport {
            lhs: 0.0,
            rhs: 0.0,
            ratio: f64::NAN,
            t_range: (0.0, 0.0),
        });
    }
    // Pad by one part in 10⁴ so extreme values fall inside the grid.
    let pad = 1e-4 * (tmax - tmin).max(1e-12);
    let (t0, t1) = (tmin - pad, tmax + pad);
    let dt = (t1 - t0) / opts.n_levels as f64;
    let mut rhs = 0.0;
    for j in 0..opts.n_levels {
        let t = t0 + (j as f64 + 0.5) * dt;
        let seed = opts.seed.wrapping_add(1 + j as u64);
        let level = match level_sample_with(f, t, region, opts.n_per_level, seed, 0.5 * dt) {
            Ok(l) => l,
            Err(Error::EmptySample(_)) => continue,
            Err(e) => return Err(e),
        };
        let s = &level.sample;
        rhs += dt
            * (0..s.len())
                .map(|i| u(s.point(i)) * s.weight(i))
                .sum::<f64>();
    }
    Ok(CoareaReport {
        lhs,
        rhs,
        ratio: lhs / rhs,
        t_range: (t0, t1),
    })
}

/// `T_x = x·ker(df_x)` from the numerical Pansu differential of `f` over
/// `scales`. The horizontal part is the null space of the horizontal block;
/// every higher layer lies in the kernel since ℝ has a single layer.
pub fn kernel_subgroup(f: &ScalarField, x: &GroupPoint, scales: &[f64]) -> Result<SubspaceSpec> {
    let alg = &f.alg;
    alg.check_point(x)?;
    let d = pansu::pansu_diff(&f.as_map(), x, scales)?;
    let row = d.hom.block(1);
    let comps: Vec<f64> = row.iter().cloned().collect();
    let (_, h) = raise_index(alg.h_inner(), &comps);
    let scale = gradient_scale(f, x.coords());
    if h < GENERIC_TOL * scale {
        return Err(Error::Characteristic { norm: h });
    }
    let n = alg.dim();
    let d1 = alg.horizontal_dim();
    let mut basis: Vec<Vec<f64>> = linalg::null_space(&row, 1e-12)
        .into_iter()
        .map(|v| {
            let mut e = vec![0.0; n];
            e[..d1].copy_from_slice(&v);
            e
        })
        .collect();
    for j in d1..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        basis.push(e);
    }
    SubspaceSpec::new(alg, basis, x.clone())
}

/// Every horizontal component of `∇₀f(x)` exceeds `tol·max(1, |∇f|)`.
pub fn generic_test(f: &ScalarField, x: &GroupPoint, tol: f64) -> Result<bool> {
    f.alg.check_point(x)?;
    let comps = f.horizontal_components(x.coords());
    let scale = gradient_scale(f, x.coords());
    Ok(comps.iter().all(|c| c.abs() > tol * scale))
}

fn require_noncharacteristic(f: &ScalarField, t: f64, x: &GroupPoint) -> Result<()> {
    if characteristic_test(f, t, x, GENERIC_TOL)? {
        let (_, h) = horizontal_gradient(f, x)?;
        return Err(Error::Characteristic { norm: h });
    }
    Ok(())
}

/// Level sample of `f⁻¹(t)` in `Box(x, ρ)`. The slab is thin enough that a
/// Newton step of Riemannian length `L` stays within `0.2ρ` in the group
/// metric: its layer-`i` part `L·|∇ᵢf|/|∇f|` must not exceed `(0.2ρ)^i`.
fn local_level_sample(
    f: &ScalarField,
    t: f64,
    x: &GroupPoint,
    rho: f64,
    n: usize,
    seed: u64,
) -> Result<LevelSetSample> {
    let alg = &f.alg;
    let region = Region::new(alg, x.clone(), rho)?;
    let (v, g) = riemannian_gradient(f, x.coords());
    let g = g.max(1e-12);
    let mut len = f64::INFINITY;
    for i in 1..=alg.depth() {
        let gi = linalg::norm(&v[alg.grading().layer_range(i)]);
        if gi > 0.0 {
            len = len.min(math::pow(0.2 * rho, i as f64) * g / gi);
        }
    }
    level_sample_with(f, t, &region, n, seed, g * len.min(0.2 * rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderReport {
    /// `(s, value, points used)` per rung.
    pub rungs: Vec<(f64, f64, usize)>,
    pub pass: bool,
}

/// `max_{x' ∈ f⁻¹(t) ∩ B(x, s)} d(x', T_x) / s` per rung of `s_ladder`
/// (decreasing); passes when the last ratio is below a quarter of the first.
pub fn cond1_check(
    f: &ScalarField,
    t: f64,
    x: &GroupPoint,
    s_ladder: &[f64],
    n: usize,
    seed: u64,
) -> Result<LadderReport> {
    require_noncharacteristic(f, t, x)?;
    let alg = &f.alg;
    let tx = kernel_subgroup(f, x, &KERNEL_SCALES)?;
    let mut rungs = Vec::with_capacity(s_ladder.len());
    for (i, &s) in s_ladder.iter().enumerate() {
        let level = local_level_sample(
            f,
            t,
            x,
            s * metrics::qn_ball_box_factor(alg),
            n,
            seed.wrapping_add(i as u64),
        )?;
        let mut worst = 0.0f64;
        let mut used = 0;
        for p in level.sample.points() {
            if metrics::dist_qn(alg, x.coords(), p.coords()) >= s {
                continue;
            }
            used += 1;
            worst = worst.max(cones::tube_dist(alg, p, &tx)?);
        }
        rungs.push((s, worst / s, used));
    }
    let pass = cones::decays(&rungs.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(LadderReport { rungs, pass })
}

/// `θ_s = min_{x' ∈ T_x ∩ B(x, s)} mass(f⁻¹(t) ∩ B(x', αs)) / s^{k−1}` per
/// rung; passes when `θ` stays positive and within a factor 4 across rungs.
pub fn cond2_check(
    f: &ScalarField,
    t: f64,
    x: &GroupPoint,
    alpha: f64,
    s_ladder: &[f64],
    n: usize,
    seed: u64,
) -> Result<LadderReport> {
    require_noncharacteristic(f, t, x)?;
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let alg = &f.alg;
    let tx = kernel_subgroup(f, x, &KERNEL_SCALES)?;
    let km1 = alg.homogeneous_dimension() as f64 - 1.0;
    let rho = metrics::qn_ball_box_factor(alg);
    let mut rungs = Vec::with_capacity(s_ladder.len());
    for (i, &s) in s_ladder.iter().enumerate() {
        let level = local_level_sample(
            f,
            t,
            x,
            (1.0 + alpha) * s * rho,
            n,
            seed.wrapping_add(i as u64),
        )?;
        let mut rg = rng::derived(seed, 1000 + i as u64);
        let mut theta = f64::INFINITY;
        let mut fewest = usize::MAX;
        for c in 0..16 {
            let nn = if c == 0 {
                vec![0.0; alg.dim()]
            } else {
                cones::random_subgroup_point(alg, &tx, s, &mut rg)
            };
            let b = alg.mul(x.coords(), &nn);
            let (mass, count) =
                measure::ball_stats(alg, &level.sample, &b, alpha * s, &Metric::Qn)?;
            theta = theta.min(mass / math::pow(s, km1));
            fewest = fewest.min(count);
        }
        rungs.push((s, theta, fewest));
    }
    let lo = rungs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = rungs.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(LadderReport {
        pass: lo > 0.0 && lo >= 0.25 * hi,
        rungs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AhlforsReport {
    /// Slope of `log mass` against `log s`, pooled over the panel.
    pub exponent: f64,
    pub r2: f64,
    /// Smallest `A` with `A⁻¹ s^{k−1} ≤ mass ≤ A s^{k−1}` on every probe.
    pub constant: f64,
    pub panel: usize,
    pub truncated: bool,
}

/// Ball masses of the level sample at up to 20 sample points `y ∈ B(x, r)`
/// over `s_ladder`. Probes with fewer than [`RESOLUTION_GUARD`] points are
/// dropped.
pub fn ahlfors_check(
    level: &LevelSetSample,
    x: &GroupPoint,
    r: f64,
    s_ladder: &[f64],
) -> Result<AhlforsReport> {
    let alg = &level.field.alg;
    alg.check_point(x)?;
    if s_ladder.is_empty() || !(r > 0.0) {
        return Err(invalid("ahlfors check needs r > 0 and a ladder"));
    }
    let km1 = alg.homogeneous_dimension() as f64 - 1.0;
    let s = &level.sample;
    let near: Vec<usize> = (0..s.len())
        .filter(|&i| metrics::dist_qn(alg, x.coords(), s.point(i)) < r)
        .collect();
    let stride = (near.len() / 20).max(1);
    let panel: Vec<usize> = near.iter().step_by(stride).take(20).cloned().collect();
    if panel.is_empty() {
        return Err(Error::EmptySample("no level-sample points near x".into()));
    }
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    let mut constant = 1.0f64;
    let mut truncated = false;
    for &i in &panel {
        for &sr in s_ladder {
            let (mass, count) = measure::ball_stats(alg, s, s.point(i), sr, &Metric::Qn)?;
            if count < RESOLUTION_GUARD {
                truncated = true;
                continue;
            }
            let ratio = mass / math::pow(sr, km1);
            constant = constant.max(ratio).max(1.0 / ratio);
            lx.push(math::ln(sr));
            ly.push(math::ln(mass));
        }
    }
    let (exponent, _, r2) = math::linear_fit(&lx, &ly)
        .ok_or_else(|| Error::DegenerateFit("too few resolved probes".into()))?;
    Ok(AhlforsReport {
        exponent,
        r2,
        constant,
        panel: panel.len(),
        truncated,
    })
}

/// Settings for [`tangent_approx_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct TangentOptions {
    pub alpha: f64,
    /// Ladder for the local conditions.
    pub s_ladder: Vec<f64>,
    /// Ladder for the approximability and cone testers.
    pub r_ladder: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Level-sample size per rung for the local conditions.
    pub n_local: usize,
    /// Level-sample size for the testers.
    pub n_tester: usize,
    pub seed: u64,
}

impl Default for TangentOptions {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            s_ladder: vec![0.1, 0.05, 0.025, 0.0125],
            r_ladder: vec![0.12, 0.08, 0.05],
            slopes: vec![0.3, 0.6],
            n_local: 4000,
            n_tester: 15_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentReport {
    /// False at characteristic points; nothing else runs there.
    pub applicable: bool,
    pub generic: bool,
    pub kernel_grading: Vec<usize>,
    pub kernel_is_subalgebra: bool,
    pub cond1: Option<LadderReport>,
    pub cond2: Option<LadderReport>,
    pub approximability: Option<ApproxReport>,
    pub aptan: Option<AptanReport>,
    pub pass: bool,
}

/// Kernel subgroup, both local conditions and the approximability and
/// tangent-cone testers at `x ∈ f⁻¹(t)` with `V = T_x`.
pub fn tangent_approx_report(
    f: &ScalarField,
    t: f64,
    x: &GroupPoint,
    opts: &TangentOptions,
) -> Result<TangentReport> {
    let alg = &f.alg;
    check_dim(alg.dim(), x.dim())?;
    if characteristic_test(f, t, x, GENERIC_TOL)? {
        return Ok(TangentReport {
            applicable: false,
            generic: false,
            kernel_grading: Vec::new(),
            kernel_is_subalgebra: false,
            cond1: None,
            cond2: None,
            approximability: None,
            aptan: None,
            pass: false,
        });
    }
    let generic = generic_test(f, x, GENERIC_TOL)?;
    let tx = kernel_subgroup(f, x, &KERNEL_SCALES)?;
    let c1 = cond1_check(f, t, x, &opts.s_ladder, opts.n_local, opts.seed)?;
    let c2 = cond2_check(
        f,
        t,
        x,
        opts.alpha,
        &opts.s_ladder,
        opts.n_local,
        opts.seed.wrapping_add(100),
    )?;
    let r_max = opts.r_ladder.iter().cloned().fold(0.0, f64::max);
    let rho = (1.0 + opts.alpha) * r_max * metrics::qn_ball_box_factor(alg);
    let level = local_level_sample(f, t, x, rho, opts.n_tester, opts.seed.wrapping_add(200))?;
    let topts = TesterOptions {
        seed: opts.seed,
        ..TesterOptions::default()
    };
    let ap = cones::approximability_test(
        alg,
        &level.sample,
        x,
        &tx,
        opts.alpha,
        &opts.r_ladder,
        &topts,
    )?;
    let at = cones::aptan_test(
        alg,
        &level.sample,
        x,
        &tx,
        &opts.slopes,
        &opts.r_ladder,
        &topts,
    )?;
    let pass = c1.pass && c2.pass && ap.pass && at.pass;
    Ok(TangentReport {
        applicable: true,
        generic,
        kernel_grading: tx.induced_grading().to_vec(),
        kernel_is_subalgebra: tx.is_subalgebra(),
        cond1: Some(c1),
        cond2: Some(c2),
        approximability: Some(ap),
        aptan: Some(at),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h3() -> CarnotAlgebra {
        CarnotAlgebra::builtin(BuiltinGroup::Heisenberg(1)).unwrap()
    }

    fn pt(c: &[f64]) -> GroupPoint {
        GroupPoint::new(c.to_vec())
    }

    #[test]
    fn frame_matches_left_invariant_fields() {
        let g = h3();
        let f = frame(&g, &[0.3, -0.8, 2.0]);
        // X = ∂a − b/2 ∂c, Y = ∂b + a/2 ∂c, Z = ∂c.
        let expect = [[1.0, 0.0, 0.4], [0.0, 1.0, 0.15], [0.0, 0.0, 1.0]];
        for j in 0..3 {
            for k in 0..3 {
                assert!((f[j][k] - expect[j][k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let g = h3();
        let a = ScalarField::coordinate(&g, 0).unwrap();
        let (v, n) = horizontal_gradient(&a, &pt(&[0.4, 2.0, -1.0])).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
        assert_eq!(n, 1.0);
        let q = ScalarField::quasi_sphere(&g).unwrap();
        let (v, _) = horizontal_gradient(&q, &pt(&[0.0, 0.0, 1.0])).unwrap();
        assert!(v.iter().all(|c| c.abs() < 1e-15));
        let c = ScalarField::new("const", g.clone(), |_| 2.0, None);
        let (_, n) = horizontal_gradient(&c, &pt(&[0.1, 0.2, 0.3])).unwrap();
        assert_eq!(n, 0.0);
    }

    #[test]
    fn analytic_and_fd_gradients_agree() {
        let g = h3();
        let mut rg = rng::seeded(4);
        let base = ScalarField::quasi_sphere(&g).unwrap();
        let fields = [
            ScalarField::coordinate(&g, 0).unwrap(),
            ScalarField::coordinate(&g, 2).unwrap(),
            base.clone(),
            base.translated(&pt(&[0.2, -0.1, 0.5])).unwrap(),
            base.dilated(1.7).unwrap(),
        ];
        for f in &fields {
            for _ in 0..20 {
                let x = metrics::random_box_point(&g, 1.0, &mut rg);
                let a = f.frame_gradient(&x);
                let d = frame_gradient_fd(f, &x, 3);
                for (u, v) in a.iter().zip(&d) {
                    assert!((u - v).abs() < 1e-5, "{}: {a:?} vs {d:?}", f.name());
                }
            }
        }
    }

    #[test]
    fn surface_density_examples() {
        let g = h3();
        let a = ScalarField::coordinate(&g, 0).unwrap();
        assert!((surface_density(&a, &pt(&[0.0, 3.0, 1.0])).unwrap() - 1.0).abs() < 1e-14);
        let c = ScalarField::coordinate(&g, 2).unwrap();
        let x = pt(&[0.6, -0.8, 0.0]);
        let expect = 0.5 / math::sqrt(0.25 + 1.0);
        assert!((surface_density(&c, &x).unwrap() - expect).abs() < 1e-12);
        let k = ScalarField::new("const", g.clone(), |_| 1.0, None);
        assert_eq!(surface_density(&k, &x), Err(Error::SingularGradient));
    }

    #[test]
    fn characteristic_examples() {
        let g = h3();
        let q = ScalarField::quasi_sphere(&g).unwrap();
        assert!(characteristic_test(&q, 1.0, &pt(&[0.0, 0.0, 1.0]), 1e-8).unwrap());
        assert!(characteristic_test(&q, 1.0, &pt(&[0.0, 0.0, -1.0]), 1e-8).unwrap());
        assert!(!characteristic_test(&q, 1.0, &pt(&[1.0, 0.0, 0.0]), 1e-8).unwrap());
        assert!(matches!(
            characteristic_test(&q, 1.0, &pt(&[0.0, 0.0, 2.0]), 1e-8),
            Err(Error::OffLevelSet { .. })
        ));
    }

    #[test]
    fn level_samples_lie_on_the_level() {
        let g = h3();
        let q = ScalarField::quasi_sphere(&g).unwrap();
        let region = Region::new(&g, g.identity(), 1.2).unwrap();
        let l = level_sample(&q, 1.0, &region, 300, 2).unwrap();
        assert_eq!(l.sample.len(), 300);
        for p in l.sample.points() {
            assert!((q.eval(p.coords()) - 1.0).abs() < PROJECTION_TOL);
        }
        let a = ScalarField::coordinate(&g, 0).unwrap();
        let l = level_sample(&a, 0.0, &region, 100, 2).unwrap();
        assert!(l
            .sample
            .points()
            .iter()
            .all(|p| p.coords()[0].abs() < PROJECTION_TOL));
    }

    #[test]
    fn kernel_examples() {
        let g = h3();
        let q = ScalarField::quasi_sphere(&g).unwrap();
        let k = kernel_subgroup(&q, &pt(&[1.0, 0.0, 0.0]), &KERNEL_SCALES).unwrap();
        assert_eq!(k.induced_grading(), &[1, 1]);
        let yz = SubspaceSpec::coordinate(&g, &[1, 2], g.identity()).unwrap();
        for v in k.orthonormal_basis() {
            let p = yz.project_algebra(&g, v);
            assert!(linalg::norm(&p.iter().zip(v).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-8);
        }
        assert!(matches!(
            kernel_subgroup(&q, &pt(&[0.0, 0.0, 1.0]), &KERNEL_SCALES),
            Err(Error::Characteristic { .. })
        ));
        let a = ScalarField::coordinate(&g, 0).unwrap();
        let k = kernel_subgroup(&a, &pt(&[0.3, 0.7, -0.2]), &KERNEL_SCALES).unwrap();
        assert!(k.is_graded_subgroup());
        assert!(k.orthonormal_basis().iter().all(|v| v[0].abs() < 1e-10));
    }

    #[test]
    fn generic_examples() {
        let g = h3();
        let q = ScalarField::quasi_sphere(&g).unwrap();
        assert!(generic_test(&q, &pt(&[0.5, 0.6, 0.2]), GENERIC_TOL).unwrap());
        assert!(!generic_test(&q, &pt(&[0.0, 0.0, 1.0]), GENERIC_TOL).unwrap());
        let a = ScalarField::coordinate(&g, 0).unwrap();
        assert!(!generic_test(&a, &pt(&[0.5, 0.6, 0.2]), GENERIC_TOL).unwrap());
    }

    #[test]
    fn flat_level_conditions() {
        let g = h3();
        let a = ScalarField::coordinate(&g, 0).unwrap();
        let x = pt(&[0.0, 0.1, 0.2]);
        let c1 = cond1_check(&a, 0.0, &x, &[0.2, 0.1, 0.05], 400, 1).unwrap();
        assert!(c1.pass && c1.rungs.iter().all(|r| r.1 < 1e-6), "{c1:?}");
        let c2 = cond2_check(&a, 0.0, &x, 0.5, &[0.2, 0.1], 1500, 1).unwrap();
        assert!(c2.pass, "{c2:?}");
        let lo = c2.rungs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let hi = c2.rungs.iter().map(|r| r.1).fold(0.0, f64::max);
        assert!(hi / lo < 2.0);
    }

    #[test]
    fn coarea_zero_weight() {
        let g = h3();
        let a = ScalarField::coordinate(&g, 0).unwrap();
        let region = Region::new(&g, g.identity(), 1.0).unwrap();
        let opts = CoareaOptions {
            n_volume: 1000,
            ..CoareaOptions::default()
        };
        let r = coarea_check(&a, &|_| 0.0, &region, &opts).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }
}
