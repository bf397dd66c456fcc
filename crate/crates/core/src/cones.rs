//! Projections, cones and tubes about a subspace of the Lie algebra, and the
//! testers for approximability and (strong) approximate tangent cones.
//!
//! All projections are taken in exponential coordinates about a single base
//! point `b`: `P_V(x) = b·exp(pr_V(log(b⁻¹x)))` with `pr_V` orthogonal for the
//! graded-orthogonal Riemannian completion, and `Q_V = P_{V⊥}`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::algebra::{BuiltinGroup, CarnotAlgebra};
use crate::error::{check_dim, invalid, Error, Result};
use crate::group::GroupPoint;
use crate::linalg;
use crate::math;
use crate::measure::{self, SetSample, RESOLUTION_GUARD};
use crate::metrics::{self, Metric};
use crate::rng::{self, Rng};

/// Relative tolerance for rank and bracket-closure decisions.
const SUBSPACE_TOL: f64 = 1e-9;

/// A linear subspace `V` of the Lie algebra together with the base point the
/// projections are taken about.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSpec {
    basis: Vec<Vec<f64>>,
    base_point: GroupPoint,
    /// Orthonormal basis of `V` (graded when `V` is homogeneous).
    ortho: Vec<Vec<f64>>,
    /// Orthonormal basis of `V⊥`.
    perp: Vec<Vec<f64>>,
    /// Orthonormal basis of `V ∩ nᵢ`, per layer.
    layer_bases: Vec<Vec<Vec<f64>>>,
    induced_grading: Vec<usize>,
    is_subalgebra: bool,
}

impl SubspaceSpec {
    /// `basis` rows span `V`; they must be linearly independent.
    pub fn new(alg: &CarnotAlgebra, basis: Vec<Vec<f64>>, base_point: GroupPoint) -> Result<Self> {
        alg.check_point(&base_point)?;
        let n = alg.dim();
        for v in &basis {
            check_dim(n, v.len())?;
        }
        let m = basis.len();
        if m > 0 {
            let b = DMatrix::from_fn(m, n, |i, j| basis[i][j]);
            if linalg::rank(&b, SUBSPACE_TOL) != m {
                return Err(invalid("subspace basis is linearly dependent"));
            }
        }
        let gram = alg.riemannian_gram();
        let g = alg.grading();

        let mut layer_bases = Vec::with_capacity(g.depth());
        for i in 1..=g.depth() {
            let range = g.layer_range(i);
            let outside: Vec<usize> = (0..n).filter(|j| !range.contains(j)).collect();
            let vecs: Vec<Vec<f64>> = if m == 0 {
                Vec::new()
            } else {
                // Coefficient vectors c with Σ cₖ basisₖ vanishing off layer i.
                let mt = DMatrix::from_fn(outside.len(), m, |r, k| basis[k][outside[r]]);
                let coeffs = if outside.is_empty() {
                    (0..m).map(|k| unit(m, k)).collect()
                } else {
                    linalg::null_space(&mt, SUBSPACE_TOL)
                };
                coeffs
                    .iter()
                    .map(|c| {
                        let mut v = vec![0.0; n];
                        for (k, ck) in c.iter().enumerate() {
                            for j in range.clone() {
                                v[j] += ck * basis[k][j];
                            }
                        }
                        v
                    })
                    .collect()
            };
            layer_bases.push(linalg::orthonormalize(&vecs, &gram, SUBSPACE_TOL));
        }
        let induced_grading: Vec<usize> = layer_bases.iter().map(Vec::len).collect();

        let homogeneous = induced_grading.iter().sum::<usize>() == m;
        let ortho = if homogeneous {
            layer_bases.iter().flatten().cloned().collect()
        } else {
            linalg::orthonormalize(&basis, &gram, SUBSPACE_TOL)
        };
        let perp = complement_basis(&ortho, &gram, n);

        let mut spec = Self {
            basis,
            base_point,
            ortho,
            perp,
            layer_bases,
            induced_grading,
            is_subalgebra: false,
        };
        spec.is_subalgebra = spec.bracket_closure_defect(alg) <= SUBSPACE_TOL;
        Ok(spec)
    }

    /// Span of the coordinate directions `indices` (0-based).
    pub fn coordinate(
        alg: &CarnotAlgebra,
        indices: &[usize],
        base_point: GroupPoint,
    ) -> Result<Self> {
        let basis = indices
            .iter()
            .map(|&j| {
                if j >= alg.dim() {
                    Err(invalid(format!("coordinate {j} out of range")))
                } else {
                    Ok(unit(alg.dim(), j))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alg, basis, base_point)
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn base_point(&self) -> &GroupPoint {
        &self.base_point
    }

    /// Orthonormal basis of `V` for the Riemannian completion.
    pub fn orthonormal_basis(&self) -> &[Vec<f64>] {
        &self.ortho
    }

    /// Orthonormal basis of the orthogonal complement `V⊥`.
    pub fn complement_basis(&self) -> &[Vec<f64>] {
        &self.perp
    }

    /// `dim(V ∩ nᵢ)` for each layer `i`.
    pub fn induced_grading(&self) -> &[usize] {
        &self.induced_grading
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_subalgebra(&self) -> bool {
        self.is_subalgebra
    }

    /// `V = ⊕ (V ∩ nᵢ)`, i.e. `exp(V)` is dilation invariant.
    pub fn is_homogeneous(&self) -> bool {
        self.induced_grading.iter().sum::<usize>() == self.dim()
    }

    /// Homogeneous and bracket closed.
    pub fn is_graded_subgroup(&self) -> bool {
        self.is_homogeneous() && self.is_subalgebra
    }

    /// `Σ i·dim(V ∩ nᵢ)`: the Hausdorff dimension of `exp(V)` when it is a
    /// graded subgroup.
    pub fn homogeneous_dimension(&self) -> usize {
        self.induced_grading
            .iter()
            .enumerate()
            .map(|(i, d)| (i + 1) * d)
            .sum()
    }

    /// Largest layer meeting `V` (0 for `V = {0}`).
    pub fn depth(&self) -> usize {
        self.induced_grading
            .iter()
            .rposition(|&d| d > 0)
            .map_or(0, |i| i + 1)
    }

    /// The orthogonal complement, about the same base point.
    pub fn complement(&self, alg: &CarnotAlgebra) -> Result<Self> {
        Self::new(alg, self.perp.clone(), self.base_point.clone())
    }

    /// The same subspace about the base point `g·b`.
    pub fn translated(&self, alg: &CarnotAlgebra, g: &GroupPoint) -> Result<Self> {
        alg.check_point(g)?;
        Ok(Self {
            base_point: GroupPoint::new(alg.mul(g.coords(), self.base_point.coords())),
            ..self.clone()
        })
    }

    /// The same subspace about another base point.
    pub fn with_base(&self, alg: &CarnotAlgebra, base_point: GroupPoint) -> Result<Self> {
        alg.check_point(&base_point)?;
        Ok(Self {
            base_point,
            ..self.clone()
        })
    }

    /// `pr_V` on algebra vectors.
    pub fn project_algebra(&self, alg: &CarnotAlgebra, v: &[f64]) -> Vec<f64> {
        project_onto(&self.ortho, &alg.riemannian_gram(), v)
    }

    /// Largest component of `[vᵢ, vⱼ]` outside `V`, relative to `1 + ‖[vᵢ, vⱼ]‖`.
    fn bracket_closure_defect(&self, alg: &CarnotAlgebra) -> f64 {
        let gram = alg.riemannian_gram();
        let mut worst = 0.0f64;
        let mut br = vec![0.0; alg.dim()];
        for (i, v) in self.basis.iter().enumerate() {
            for w in &self.basis[i + 1..] {
                alg.bracket_into(v, w, &mut br);
                let p = project_onto(&self.ortho, &gram, &br);
                let off: Vec<f64> = br.iter().zip(&p).map(|(a, b)| a - b).collect();
                let size = 1.0 + math::sqrt(linalg::inner(&gram, &br, &br));
                worst = worst.max(math::sqrt(linalg::inner(&gram, &off, &off).max(0.0)) / size);
            }
        }
        worst
    }
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

fn project_onto(ortho: &[Vec<f64>], gram: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for u in ortho {
        let c = linalg::inner(gram, v, u);
        for (o, ui) in out.iter_mut().zip(u) {
            *o += c * ui;
        }
    }
    out
}

/// Orthonormal basis of the `gram`-orthogonal complement of `span(ortho)`.
/// Projecting the coordinate vectors keeps the result graded when `V` is,
/// because the gram matrix is block diagonal.
fn complement_basis(ortho: &[Vec<f64>], gram: &DMatrix<f64>, n: usize) -> Vec<Vec<f64>> {
    let residuals: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let e = unit(n, j);
            let p = project_onto(ortho, gram, &e);
            e.iter().zip(&p).map(|(a, b)| a - b).collect()
        })
        .collect();
    linalg::orthonormalize(&residuals, gram, SUBSPACE_TOL)
}

fn project_point(
    alg: &CarnotAlgebra,
    basis: &[Vec<f64>],
    base: &GroupPoint,
    x: &[f64],
) -> Vec<f64> {
    let gram = alg.riemannian_gram();
    // Exponential coordinates: log is the identity on coordinates.
    let y = alg.relative(base.coords(), x);
    let p = project_onto(basis, &gram, &y);
    alg.mul(base.coords(), &p)
}

/// `P_V(x) = b·exp(pr_V(log(b⁻¹x)))`.
pub fn project_v(alg: &CarnotAlgebra, x: &GroupPoint, spec: &SubspaceSpec) -> Result<GroupPoint> {
    alg.check_point(x)?;
    check_dim(alg.dim(), spec.base_point.dim())?;
    Ok(GroupPoint::new(project_point(
        alg,
        &spec.ortho,
        &spec.base_point,
        x.coords(),
    )))
}

/// `Q_V = P_{V⊥}`.
pub fn project_perp(
    alg: &CarnotAlgebra,
    x: &GroupPoint,
    spec: &SubspaceSpec,
) -> Result<GroupPoint> {
    alg.check_point(x)?;
    check_dim(alg.dim(), spec.base_point.dim())?;
    Ok(GroupPoint::new(project_point(
        alg,
        &spec.perp,
        &spec.base_point,
        x.coords(),
    )))
}

/// How pairs `(x, y)` are drawn for [`holder_exponent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairGenerator {
    /// `y = x·h_ε(u)` with `u` a random unit-gauge point.
    Random,
    /// `y = x·h_ε(u)` with `u` a random horizontal unit vector: steps along
    /// the horizontal layer, which is where a vertical projection is worst.
    Horizontal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit {
    /// Slope of `log d(P x, P y)` against `log d(x, y)`.
    pub exponent: f64,
    pub r2: f64,
    /// Pairs used (degenerate ones are skipped).
    pub pairs: usize,
}

/// Fits the Hölder exponent of `P_V` over pairs at distance `ε ∈ [10⁻⁴, 10⁻¹]`
/// (log-uniform) with `x` in the unit ball about the base point.
pub fn holder_exponent(
    alg: &CarnotAlgebra,
    spec: &SubspaceSpec,
    generator: PairGenerator,
    n_pairs: usize,
    seed: u64,
    metric: &Metric,
) -> Result<HolderFit> {
    check_dim(alg.dim(), spec.base_point.dim())?;
    let mut rg = rng::seeded(seed);
    let (mut lx, mut ly) = (Vec::with_capacity(n_pairs), Vec::with_capacity(n_pairs));
    let b = spec.base_point.coords();
    let d1 = alg.horizontal_dim();
    for _ in 0..n_pairs {
        let x = alg.mul(b, &metrics::random_qn_ball_point(alg, 1.0, &mut rg));
        let eps = math::exp(rng::uniform(&mut rg, math::ln(1e-4), math::ln(1e-1)));
        let u = match generator {
            PairGenerator::Random => metrics::random_unit_point(alg, &mut rg),
            PairGenerator::Horizontal => {
                let mut u = vec![0.0; alg.dim()];
                for c in u.iter_mut().take(d1) {
                    *c = rng::normal(&mut rg);
                }
                let n = math::sqrt(alg.h_norm_sq(&u[..d1]));
                if n < 1e-12 {
                    continue;
                }
                u.iter_mut().for_each(|c| *c /= n);
                u
            }
        };
        let y = alg.mul(&x, &alg.dilated(eps, &u));
        let d = metrics::distance(alg, metric, &x, &y)?;
        let px = project_point(alg, &spec.ortho, &spec.base_point, &x);
        let py = project_point(alg, &spec.ortho, &spec.base_point, &y);
        let dp = metrics::distance(alg, metric, &px, &py)?;
        if d > 0.0 && dp > 0.0 && d.is_finite() && dp.is_finite() {
            lx.push(math::ln(d));
            ly.push(math::ln(dp));
        }
    }
    let (exponent, _, r2) = math::linear_fit(&lx, &ly)
        .ok_or_else(|| Error::DegenerateFit("fewer than two nondegenerate pairs".into()))?;
    Ok(HolderFit {
        exponent,
        r2,
        pairs: lx.len(),
    })
}

/// `X(apex, V, s)`, optionally intersected with `B(apex, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    pub apex: GroupPoint,
    pub v: SubspaceSpec,
    pub slope: f64,
    pub radius: Option<f64>,
    q_apex: Vec<f64>,
}

impl ConeSpec {
    pub fn new(
        alg: &CarnotAlgebra,
        apex: GroupPoint,
        v: SubspaceSpec,
        slope: f64,
        radius: Option<f64>,
    ) -> Result<Self> {
        alg.check_point(&apex)?;
        check_dim(alg.dim(), v.base_point.dim())?;
        if !(slope > 0.0 && slope < 1.0) {
            return Err(invalid("cone slope must lie in (0, 1)"));
        }
        if let Some(r) = radius {
            if !(r > 0.0) {
                return Err(invalid("cone radius must be positive"));
            }
        }
        let q_apex = project_point(alg, &v.perp, &v.base_point, apex.coords());
        Ok(Self {
            apex,
            v,
            slope,
            radius,
            q_apex,
        })
    }
}

/// `d(Q_V m₁, Q_V m₀) < s·d(m₁, m₀)` (and `d(m₁, m₀) < R` when a radius is set).
pub fn cone_contains(
    alg: &CarnotAlgebra,
    cone: &ConeSpec,
    m1: &GroupPoint,
    metric: &Metric,
) -> Result<bool> {
    alg.check_point(m1)?;
    cone_contains_coords(alg, cone, m1.coords(), metric)
}

fn cone_contains_coords(
    alg: &CarnotAlgebra,
    cone: &ConeSpec,
    m1: &[f64],
    metric: &Metric,
) -> Result<bool> {
    let d = metrics::distance(alg, metric, cone.apex.coords(), m1)?;
    if let Some(r) = cone.radius {
        if d >= r {
            return Ok(false);
        }
    }
    let q = project_point(alg, &cone.v.perp, &cone.v.base_point, m1);
    let dq = metrics::distance(alg, metric, &cone.q_apex, &q)?;
    Ok(dq < cone.slope * d)
}

/// Relative accuracy of [`tube_dist`].
pub const TUBE_TOL: f64 = 1e-7;

/// `d_qn(x, b·exp(V))` for a graded subgroup `exp(V)` through the base point `b`.
pub fn tube_dist(alg: &CarnotAlgebra, x: &GroupPoint, spec: &SubspaceSpec) -> Result<f64> {
    alg.check_point(x)?;
    if !spec.is_graded_subgroup() {
        return Err(invalid("tube distance needs a graded subgroup"));
    }
    Ok(tube_search(alg, spec, x.coords(), 0.0))
}

/// Minimises `|n⁻¹·b⁻¹x|_qn` over `n ∈ exp(V)`, starting from the projection.
/// Polls the coordinate directions of a graded orthonormal basis and a few
/// random directions, with steps `(σd₀)^i` in layer `i`, halving `σ` when no
/// poll improves. Returns early once the value drops to `stop`.
fn tube_search(alg: &CarnotAlgebra, spec: &SubspaceSpec, x: &[f64], stop: f64) -> f64 {
    let n = alg.dim();
    let gram = alg.riemannian_gram();
    let y = alg.relative(spec.base_point.coords(), x);
    let basis = &spec.ortho;
    let m = basis.len();
    if m == 0 {
        return metrics::qnorm_coords(alg, &y);
    }
    let layers: Vec<usize> = spec
        .layer_bases
        .iter()
        .enumerate()
        .flat_map(|(i, b)| core::iter::repeat_n(i + 1, b.len()))
        .collect();
    let mut neg = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut eval = |c: &[f64]| {
        neg.iter_mut().for_each(|v| *v = 0.0);
        for (ck, u) in c.iter().zip(basis) {
            for (o, ui) in neg.iter_mut().zip(u) {
                *o -= ck * ui;
            }
        }
        alg.mul_into(&neg, &y, &mut buf);
        metrics::qnorm_coords(alg, &buf)
    };
    let mut c: Vec<f64> = basis.iter().map(|u| linalg::inner(&gram, &y, u)).collect();
    let mut fc = eval(&c);
    let d0 = fc;
    if d0 <= stop || d0 == 0.0 {
        return fc;
    }
    let mut rg: Rng = rng::seeded(0x7ab3_u64 ^ m as u64);
    let mut sigma = 0.5;
    let mut trial = vec![0.0; m];
    let mut dir = vec![0.0; m];
    while sigma * d0 > TUBE_TOL * d0.max(1e-3) {
        let mut improved = false;
        let n_dirs = 2 * m + 2 * m.max(2);
        for k in 0..n_dirs {
            if k < 2 * m {
                dir.iter_mut().for_each(|v| *v = 0.0);
                dir[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
            } else {
                dir.iter_mut().for_each(|v| *v = rng::normal(&mut rg));
            }
            for j in 0..m {
                trial[j] = c[j] + dir[j] * math::pow(sigma * d0, layers[j] as f64);
            }
            let ft = eval(&trial);
            if ft < fc {
                fc = ft;
                c.copy_from_slice(&trial);
                improved = true;
                break;
            }
        }
        if fc <= stop {
            break;
        }
        if !improved {
            sigma *= 0.5;
        }
    }
    fc
}

/// Settings shared by the sample-based testers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TesterOptions {
    pub metric: Metric,
    /// Centres `b` sampled on `a·exp(V) ∩ B(a, r)` for inequality (1).
    pub n_centers: usize,
    pub seed: u64,
}

impl Default for TesterOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Qn,
            n_centers: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRung {
    pub r: f64,
    /// `min_b mass(E ∩ B(b, αr)) / r^k`.
    pub theta: f64,
    /// `mass(E ∩ B(a, r) \ a·N(αr)) / r^k`.
    pub outside: f64,
    /// Sample points in `B(a, r)`.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    /// Hausdorff dimension of the model subgroup.
    pub k: usize,
    pub alpha: f64,
    pub rungs: Vec<ApproxRung>,
    pub theta_min: f64,
    pub outside_max: f64,
    /// Whether rungs were dropped by the resolution guard.
    pub truncated: bool,
    pub pass: bool,
}

/// Random `n ∈ exp(V)` with `|n|_qn < r`, by rejection from the graded box of
/// the subgroup.
pub(crate) fn random_subgroup_point(
    alg: &CarnotAlgebra,
    spec: &SubspaceSpec,
    r: f64,
    rg: &mut Rng,
) -> Vec<f64> {
    let n = alg.dim();
    for _ in 0..10_000 {
        let mut p = vec![0.0; n];
        for (i, lb) in spec.layer_bases.iter().enumerate() {
            let s = math::pow(r, (i + 1) as f64);
            for u in lb {
                let c = rng::uniform(rg, -s, s);
                for (o, ui) in p.iter_mut().zip(u) {
                    *o += c * ui;
                }
            }
        }
        if metrics::qnorm_coords(alg, &p) < r {
            return p;
        }
    }
    vec![0.0; n]
}

/// Tests the two inequalities of `N`-approximability of `E` at `a` with
/// `N = exp(V)` over the ladder `r_ladder` (decreasing).
///
/// Passes when (2) stays below `α` on every rung and the empirical `θ` of (1)
/// is positive and does not fall below a quarter of its largest value.
pub fn approximability_test(
    alg: &CarnotAlgebra,
    e: &SetSample,
    a: &GroupPoint,
    spec: &SubspaceSpec,
    alpha: f64,
    r_ladder: &[f64],
    opts: &TesterOptions,
) -> Result<ApproxReport> {
    alg.check_point(a)?;
    check_dim(alg.dim(), e.dim())?;
    if !spec.is_graded_subgroup() {
        return Err(invalid("approximability needs a graded subgroup"));
    }
    if !(alpha > 0.0) || r_ladder.is_empty() {
        return Err(invalid(
            "approximability needs alpha > 0 and a radius ladder",
        ));
    }
    let spec = spec.with_base(alg, a.clone())?;
    let k = spec.homogeneous_dimension();
    let mut rungs = Vec::new();
    let mut truncated = false;
    for (idx, &r) in r_ladder.iter().enumerate() {
        let rk = math::pow(r, k as f64);
        let mut outside = 0.0;
        let mut points = 0;
        for i in 0..e.len() {
            let p = e.point(i);
            if metrics::distance(alg, &opts.metric, a.coords(), p)? > r {
                continue;
            }
            points += 1;
            if tube_search(alg, &spec, p, alpha * r) > alpha * r {
                outside += e.weight(i);
            }
        }
        if points < RESOLUTION_GUARD {
            truncated = true;
            if idx > 0 {
                break;
            }
        }
        let mut rg = rng::derived(opts.seed, idx as u64);
        let mut theta = f64::INFINITY;
        for c in 0..opts.n_centers.max(1) {
            let n = if c == 0 {
                vec![0.0; alg.dim()]
            } else {
                random_subgroup_point(alg, &spec, r, &mut rg)
            };
            let b = alg.mul(a.coords(), &n);
            theta = theta.min(measure::ball_measure(alg, e, &b, alpha * r, &opts.metric)? / rk);
        }
        rungs.push(ApproxRung {
            r,
            theta,
            outside: outside / rk,
            points,
        });
    }
    let theta_min = rungs.iter().map(|x| x.theta).fold(f64::INFINITY, f64::min);
    let theta_max = rungs.iter().map(|x| x.theta).fold(0.0, f64::max);
    let outside_max = rungs.iter().map(|x| x.outside).fold(0.0, f64::max);
    let pass = theta_min > 0.0 && theta_min >= 0.25 * theta_max && outside_max < alpha;
    Ok(ApproxReport {
        k,
        alpha,
        rungs,
        theta_min,
        outside_max,
        truncated,
        pass,
    })
}

/// Last ratio below a quarter of the first, or all ratios zero.
pub fn decays(ratios: &[f64]) -> bool {
    match (ratios.first(), ratios.last()) {
        (Some(&first), Some(&last)) => {
            if ratios.iter().all(|&x| x == 0.0) {
                true
            } else {
                ratios.len() >= 2 && last < 0.25 * first
            }
        }
        _ => false,
    }
}

/// Mass and point count of `E ∩ B(m, r)` outside the cone; the apex itself is
/// skipped since it is never inside the open cone.
fn mass_outside_cone(
    alg: &CarnotAlgebra,
    e: &SetSample,
    cone: &ConeSpec,
    r: f64,
    metric: &Metric,
) -> Result<(f64, usize)> {
    let mut mass = 0.0;
    let mut count = 0;
    for i in 0..e.len() {
        let p = e.point(i);
        let d = metrics::distance(alg, metric, cone.apex.coords(), p)?;
        if d > r || d == 0.0 {
            continue;
        }
        count += 1;
        if !cone_contains_coords(alg, cone, p, metric)? {
            mass += e.weight(i);
        }
    }
    Ok((mass, count))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AptanSeries {
    pub s: f64,
    /// `(r, mass(E ∩ B(m, r) \ X(m, V, s)) / r^k)`.
    pub ratios: Vec<(f64, f64)>,
    pub decays: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AptanReport {
    pub k: usize,
    /// `Θ^{*k}(E, m) > 0` on the ladder.
    pub applicable: bool,
    pub density_upper: f64,
    pub series: Vec<AptanSeries>,
    pub truncated: bool,
    pub pass: bool,
}

/// Approximate-tangent-cone test: for each slope `s` the ratios over the
/// ladder and a decay verdict. `k` is the homogeneous dimension of `V`.
pub fn aptan_test(
    alg: &CarnotAlgebra,
    e: &SetSample,
    m: &GroupPoint,
    spec: &SubspaceSpec,
    s_list: &[f64],
    r_ladder: &[f64],
    opts: &TesterOptions,
) -> Result<AptanReport> {
    alg.check_point(m)?;
    check_dim(alg.dim(), e.dim())?;
    if s_list.is_empty() || r_ladder.is_empty() {
        return Err(invalid("aptan needs slopes and a radius ladder"));
    }
    let k = spec.homogeneous_dimension();
    let dens = measure::density(alg, e, m.coords(), k as f64, r_ladder, &opts.metric)?;
    let applicable = dens.upper > 0.0;
    let ladder: Vec<f64> = dens.ratios.iter().map(|x| x.0).collect();
    let mut series = Vec::with_capacity(s_list.len());
    if applicable {
        for &s in s_list {
            let cone = ConeSpec::new(alg, m.clone(), spec.clone(), s, None)?;
            let mut ratios = Vec::with_capacity(ladder.len());
            for &r in &ladder {
                let (mass, _) = mass_outside_cone(alg, e, &cone, r, &opts.metric)?;
                ratios.push((r, mass / math::pow(r, k as f64)));
            }
            let d = decays(&ratios.iter().map(|x| x.1).collect::<Vec<_>>());
            series.push(AptanSeries {
                s,
                ratios,
                decays: d,
            });
        }
    }
    let pass = applicable && series.iter().all(|x| x.decays);
    Ok(AptanReport {
        k,
        applicable,
        density_upper: dens.upper,
        series,
        truncated: dens.truncated,
        pass,
    })
}

/// Denominator exponent of the strong tangent-cone ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentMode {
    /// `r^k`.
    K,
    /// `r^{k·depth(N)}`, `N = exp(V)`.
    KDepthN,
    /// `r^{k·depth(M)}`, `M` the ambient group.
    KDepthM,
}

impl ExponentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExponentMode::K => "k",
            ExponentMode::KDepthN => "k-depth-n",
            ExponentMode::KDepthM => "k-depth-m",
        }
    }
}

impl core::str::FromStr for ExponentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(ExponentMode::K),
            "k-depth-n" => Ok(ExponentMode::KDepthN),
            "k-depth-m" => Ok(ExponentMode::KDepthM),
            _ => Err(invalid(format!("unknown exponent mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaptanRung {
    pub r: f64,
    pub mass: f64,
    /// Ratio with denominator `r^k`.
    pub k: f64,
    /// Ratio with denominator `r^{k·depth(N)}`.
    pub k_depth_n: f64,
    /// Ratio with denominator `r^{k·depth(M)}`.
    pub k_depth_m: f64,
}

impl SaptanRung {
    pub fn ratio(&self, mode: ExponentMode) -> f64 {
        match mode {
            ExponentMode::K => self.k,
            ExponentMode::KDepthN => self.k_depth_n,
            ExponentMode::KDepthM => self.k_depth_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaptanReport {
    pub k: usize,
    pub depth_n: usize,
    pub depth_m: usize,
    pub mode: ExponentMode,
    pub applicable: bool,
    pub rungs: Vec<SaptanRung>,
    pub decays: bool,
    /// Probes of `B(m, ε)` lying in both `X(m, V, s)` and `X(m, V⊥, s)`.
    pub violations: usize,
    pub probes: usize,
    pub disjoint: bool,
    pub pass: bool,
}

/// Strong approximate-tangent-cone test: ratios in all three exponent modes
/// (the verdict uses `mode`) and a sampled emptiness check of
/// `X(m, V, s) ∩ X(m, V⊥, s) ∩ B(m, ε)` with `n_probes` points.
pub fn saptan_test(
    alg: &CarnotAlgebra,
    e: &SetSample,
    m: &GroupPoint,
    spec: &SubspaceSpec,
    s: f64,
    epsilon: f64,
    r_ladder: &[f64],
    mode: ExponentMode,
    n_probes: usize,
    opts: &TesterOptions,
) -> Result<SaptanReport> {
    alg.check_point(m)?;
    check_dim(alg.dim(), e.dim())?;
    if !(epsilon > 0.0) || r_ladder.is_empty() {
        return Err(invalid("saptan needs epsilon > 0 and a radius ladder"));
    }
    let k = spec.homogeneous_dimension();
    let depth_n = spec.depth().max(1);
    let depth_m = alg.depth();
    let cone = ConeSpec::new(alg, m.clone(), spec.clone(), s, None)?;
    let dens = measure::density(alg, e, m.coords(), k as f64, r_ladder, &opts.metric)?;
    let applicable = dens.upper > 0.0;
    let mut rungs = Vec::new();
    if applicable {
        for &(r, _, _) in &dens.ratios {
            let (mass, _) = mass_outside_cone(alg, e, &cone, r, &opts.metric)?;
            let kf = k as f64;
            rungs.push(SaptanRung {
                r,
                mass,
                k: mass / math::pow(r, kf),
                k_depth_n: mass / math::pow(r, kf * depth_n as f64),
                k_depth_m: mass / math::pow(r, kf * depth_m as f64),
            });
        }
    }
    let ratios: Vec<f64> = rungs.iter().map(|x| x.ratio(mode)).collect();
    let decay = applicable && decays(&ratios);

    let perp_cone = ConeSpec::new(alg, m.clone(), spec.complement(alg)?, s, None)?;
    let mut rg = rng::derived(opts.seed, 0x5a9);
    let mut violations = 0;
    for _ in 0..n_probes {
        let p = alg.mul(
            m.coords(),
            &metrics::random_qn_ball_point(alg, epsilon, &mut rg),
        );
        if cone_contains_coords(alg, &cone, &p, &opts.metric)?
            && cone_contains_coords(alg, &perp_cone, &p, &opts.metric)?
        {
            violations += 1;
        }
    }
    let disjoint = violations == 0;
    Ok(SaptanReport {
        k,
        depth_n,
        depth_m,
        mode,
        applicable,
        rungs,
        decays: decay,
        violations,
        probes: n_probes,
        disjoint,
        pass: decay && disjoint,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeMassReport {
    /// Hausdorff dimension of `N = exp(V⊥)`.
    pub k: usize,
    pub depth_n: usize,
    /// `max_{y, r<δ} mass(E ∩ X(y, r, V, s)) / (rs)^{k·depth(N)}`.
    pub lambda_empirical: f64,
    /// `max_m mass(E ∩ B(m, δ/6))`.
    pub lhs: f64,
    /// `lhs / (max(λ, λ_emp)·δ^k)`.
    pub constant: f64,
    /// `λ_emp ≤ λ`.
    pub hypothesis_holds: bool,
}

/// Evaluates both sides of the cone-mass bound on `E` over a panel of
/// `n_panel` sample points: cone masses for `r ∈ δ·{1/2, 1/4, 1/8}` and ball
/// masses at radius `δ/6`. `V` is the orthogonal complement of the model
/// subgroup's algebra, so `k` is the homogeneous dimension of `V⊥`.
pub fn cone_mass_bound_check(
    alg: &CarnotAlgebra,
    e: &SetSample,
    spec: &SubspaceSpec,
    s: f64,
    lambda: f64,
    delta: f64,
    n_panel: usize,
    opts: &TesterOptions,
) -> Result<ConeMassReport> {
    check_dim(alg.dim(), e.dim())?;
    if !(lambda > 0.0) || !(delta > 0.0) || n_panel == 0 {
        return Err(invalid(
            "cone mass check needs lambda > 0, delta > 0 and a panel",
        ));
    }
    let n_spec = spec.complement(alg)?;
    let k = n_spec.homogeneous_dimension();
    let depth_n = n_spec.depth().max(1);
    let mut rg = rng::derived(opts.seed, 0xc0e);
    let panel: Vec<usize> = (0..n_panel.min(e.len()))
        .map(|_| rng::index(&mut rg, e.len()))
        .collect();
    let mut lambda_emp = 0.0f64;
    let mut lhs = 0.0f64;
    for &i in &panel {
        let y = GroupPoint::from(e.point(i));
        for frac in [0.5, 0.25, 0.125] {
            let r = frac * delta;
            let cone = ConeSpec::new(alg, y.clone(), spec.clone(), s, Some(r))?;
            let mut mass = 0.0;
            for j in 0..e.len() {
                if j != i && cone_contains_coords(alg, &cone, e.point(j), &opts.metric)? {
                    mass += e.weight(j);
                }
            }
            lambda_emp = lambda_emp.max(mass / math::pow(r * s, (k * depth_n) as f64));
        }
        lhs = lhs.max(measure::ball_measure(
            alg,
            e,
            y.coords(),
            delta / 6.0,
            &opts.metric,
        )?);
    }
    Ok(ConeMassReport {
        k,
        depth_n,
        lambda_empirical: lambda_emp,
        lhs,
        constant: lhs / (lambda.max(lambda_emp) * math::pow(delta, k as f64)),
        hypothesis_holds: lambda_emp <= lambda,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub is_subalgebra: bool,
    pub induced_grading: Vec<usize>,
    pub is_graded_subgroup: bool,
    /// Dimensions of the lower central series `V ⊃ [V,V] ⊃ …` (subalgebras only).
    pub lower_central_series: Vec<usize>,
    /// Built-in group with the same dimension and lower central series.
    pub isomorphic_to: Option<String>,
    /// The match also has the same layer dimensions as the induced grading.
    pub graded_match: bool,
}

/// Bracket closure, induced grading and a small-dimension isomorphism guess.
pub fn subgroup_classify(alg: &CarnotAlgebra, spec: &SubspaceSpec) -> Result<Classification> {
    check_dim(alg.dim(), spec.base_point.dim())?;
    let mut cls = Classification {
        is_subalgebra: spec.is_subalgebra,
        induced_grading: spec.induced_grading.clone(),
        is_graded_subgroup: spec.is_graded_subgroup(),
        lower_central_series: Vec::new(),
        isomorphic_to: None,
        graded_match: false,
    };
    if !spec.is_subalgebra || spec.dim() == 0 {
        return Ok(cls);
    }
    let lcs = lower_central_series(alg, &spec.basis);
    let mut trimmed: Vec<usize> = spec.induced_grading.clone();
    let leading_zero = trimmed.first() == Some(&0);
    while trimmed.last() == Some(&0) {
        trimmed.pop();
    }
    for cand in candidates(spec.dim()) {
        let Ok(c) = cand.build() else { continue };
        let all: Vec<Vec<f64>> = (0..c.dim()).map(|j| unit(c.dim(), j)).collect();
        if c.dim() == spec.dim() && lower_central_series(&c, &all) == lcs {
            cls.isomorphic_to = Some(cand.to_string());
            cls.graded_match = !leading_zero && c.grading().layer_dims() == trimmed.as_slice();
            break;
        }
    }
    cls.lower_central_series = lcs;
    Ok(cls)
}

fn candidates(dim: usize) -> Vec<BuiltinGroup> {
    let mut out = vec![BuiltinGroup::Abelian(dim)];
    if dim % 2 == 1 && dim >= 3 {
        out.push(BuiltinGroup::Heisenberg(dim / 2));
    }
    out.extend(BuiltinGroup::catalogue());
    out
}

fn lower_central_series(alg: &CarnotAlgebra, basis: &[Vec<f64>]) -> Vec<usize> {
    let n = alg.dim();
    let eye = DMatrix::identity(n, n);
    let mut current = linalg::orthonormalize(basis, &eye, SUBSPACE_TOL);
    let mut dims = vec![current.len()];
    let mut br = vec![0.0; n];
    while !current.is_empty() {
        let mut next = Vec::new();
        for v in basis {
            for w in &current {
                alg.bracket_into(v, w, &mut br);
                next.push(br.clone());
            }
        }
        let scale = next
            .iter()
            .map(|v| linalg::norm(v))
            .fold(0.0, f64::max)
            .max(1.0);
        current = linalg::orthonormalize(&next, &eye, SUBSPACE_TOL * scale);
        if current.is_empty() {
            break;
        }
        dims.push(current.len());
    }
    dims
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::sample_coordinate_subspace;

    fn h3() -> CarnotAlgebra {
        CarnotAlgebra::builtin(BuiltinGroup::Heisenberg(1)).unwrap()
    }

    fn span(alg: &CarnotAlgebra, idx: &[usize]) -> SubspaceSpec {
        SubspaceSpec::coordinate(alg, idx, alg.identity()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let g = h3();
        let x = GroupPoint::new(vec![1.0, 2.0, 3.0]);
        let p = project_v(&g, &x, &span(&g, &[1, 2])).unwrap();
        assert_eq!(p.coords(), &[0.0, 2.0, 3.0]);
        let q = project_v(&g, &x, &span(&g, &[2])).unwrap();
        assert_eq!(q.coords(), &[0.0, 0.0, 3.0]);
        let qp = project_perp(&g, &x, &span(&g, &[1, 2])).unwrap();
        assert_eq!(qp.coords(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_is_idempotent_about_a_base_point() {
        let g = h3();
        let base = GroupPoint::new(vec![0.3, -0.7, 1.1]);
        let spec =
            SubspaceSpec::new(&g, vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], base).unwrap();
        let x = GroupPoint::new(vec![1.5, 0.2, -0.4]);
        let p = project_v(&g, &x, &spec).unwrap();
        let pp = project_v(&g, &p, &spec).unwrap();
        for (a, b) in p.coords().iter().zip(pp.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn induced_grading_and_closure() {
        let g = h3();
        let yz = span(&g, &[1, 2]);
        assert_eq!(yz.induced_grading(), &[1, 1]);
        assert!(yz.is_graded_subgroup());
        let z = span(&g, &[2]);
        assert_eq!(z.induced_grading(), &[0, 1]);
        assert!(z.is_subalgebra());
        let xy = span(&g, &[0, 1]);
        assert!(!xy.is_subalgebra());
        let tilted = SubspaceSpec::new(&g, vec![vec![1.0, 0.0, 1.0]], g.identity()).unwrap();
        assert_eq!(tilted.induced_grading(), &[0, 0]);
        assert!(!tilted.is_homogeneous());
        assert!(SubspaceSpec::new(
            &g,
            vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]],
            g.identity()
        )
        .is_err());
    }

    #[test]
    fn complement_is_graded() {
        let g = h3();
        let c = span(&g, &[0]).complement(&g).unwrap();
        assert_eq!(c.induced_grading(), &[1, 1]);
        assert!(c.is_graded_subgroup());
    }

    #[test]
    fn classification_examples() {
        let g = h3();
        let c = subgroup_classify(&g, &span(&g, &[1, 2])).unwrap();
        assert!(c.is_subalgebra);
        assert_eq!(c.induced_grading, vec![1, 1]);
        assert_eq!(c.isomorphic_to.as_deref(), Some("abelian2"));
        assert!(!c.graded_match);
        let c = subgroup_classify(&g, &span(&g, &[2])).unwrap();
        assert_eq!(c.induced_grading, vec![0, 1]);
        assert_eq!(c.isomorphic_to.as_deref(), Some("abelian1"));
        let c = subgroup_classify(&g, &span(&g, &[0, 1])).unwrap();
        assert!(!c.is_subalgebra);
        assert_eq!(c.isomorphic_to, None);
        let c = subgroup_classify(&g, &span(&g, &[0, 1, 2])).unwrap();
        assert_eq!(c.isomorphic_to.as_deref(), Some("heisenberg1"));
        assert!(c.graded_match);
    }

    #[test]
    fn cone_examples() {
        let g = h3();
        let spec = span(&g, &[1, 2]);
        let cone = ConeSpec::new(&g, g.identity(), spec, 0.5, None).unwrap();
        let q = Metric::Qn;
        assert!(!cone_contains(&g, &cone, &GroupPoint::new(vec![1.0, 0.0, 0.0]), &q).unwrap());
        assert!(!cone_contains(&g, &cone, &g.identity(), &q).unwrap());
        assert!(cone_contains(&g, &cone, &GroupPoint::new(vec![0.0, 1.0, 0.0]), &q).unwrap());
        let bounded = ConeSpec {
            radius: Some(0.5),
            ..cone
        };
        assert!(!cone_contains(&g, &bounded, &GroupPoint::new(vec![0.0, 1.0, 0.0]), &q).unwrap());
        assert!(ConeSpec::new(&g, g.identity(), span(&g, &[1]), 1.0, None).is_err());
    }

    #[test]
    fn tube_distance_examples() {
        let g = h3();
        let plane = span(&g, &[1, 2]);
        let d = tube_dist(&g, &GroupPoint::new(vec![1.0, 0.0, 0.0]), &plane).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "{d}");
        let on = GroupPoint::new(vec![0.0, 0.4, -0.2]);
        assert!(tube_dist(&g, &on, &plane).unwrap() < 1e-12);
        assert!(tube_dist(&g, &on, &span(&g, &[0, 1])).is_err());

        let gpt = GroupPoint::new(vec![0.5, -1.0, 2.0]);
        let x = GroupPoint::new(vec![0.3, 0.8, -0.5]);
        let line = span(&g, &[0]);
        let d0 = tube_dist(&g, &x, &line).unwrap();
        let gx = g.multiply(&gpt, &x).unwrap();
        let d1 = tube_dist(&g, &gx, &line.translated(&g, &gpt).unwrap()).unwrap();
        assert!((d0 - d1).abs() < 1e-6 * (1.0 + d0));
    }

    #[test]
    fn tube_distance_beats_projection_start() {
        // For the horizontal line the nearest point is not the projection.
        let g = h3();
        let line = span(&g, &[0]);
        let x = GroupPoint::new(vec![0.0, 1.0, 0.3]);
        let d = tube_dist(&g, &x, &line).unwrap();
        let start = metrics::qnorm_coords(&g, &[0.0, 1.0, 0.3]);
        assert!(d < start);
        // Direct scan of n = exp(tX).
        let mut best = f64::INFINITY;
        for i in -4000..=4000 {
            let t = i as f64 * 5e-4;
            best = best.min(metrics::dist_qn(&g, &[t, 0.0, 0.0], x.coords()));
        }
        assert!((d - best).abs() < 1e-5, "{d} vs {best}");
    }

    #[test]
    fn holder_exponents() {
        let g = h3();
        let q = Metric::Qn;
        let v =
            holder_exponent(&g, &span(&g, &[2]), PairGenerator::Horizontal, 400, 1, &q).unwrap();
        assert!((v.exponent - 0.5).abs() < 0.1, "{}", v.exponent);
        let w =
            holder_exponent(&g, &span(&g, &[0, 1, 2]), PairGenerator::Random, 400, 1, &q).unwrap();
        assert!((w.exponent - 1.0).abs() < 0.05, "{}", w.exponent);
        let r2 = CarnotAlgebra::builtin(BuiltinGroup::Abelian(2)).unwrap();
        let a = SubspaceSpec::new(&r2, vec![vec![1.0, 1.0]], r2.identity()).unwrap();
        let f = holder_exponent(&r2, &a, PairGenerator::Random, 400, 1, &q).unwrap();
        assert!((f.exponent - 1.0).abs() < 0.05, "{}", f.exponent);
    }

    fn plane_sample(g: &CarnotAlgebra, n: usize) -> SetSample {
        sample_coordinate_subspace(g, &g.identity(), &[1, 2], 1.0, n, 3).unwrap()
    }

    #[test]
    fn approximability_self_and_transverse() {
        let g = h3();
        let e = plane_sample(&g, 20_000);
        let opts = TesterOptions::default();
        let ladder = [0.6, 0.45, 0.3];
        let own = approximability_test(
            &g,
            &e,
            &g.identity(),
            &span(&g, &[1, 2]),
            0.5,
            &ladder,
            &opts,
        )
        .unwrap();
        assert!(own.pass, "{own:?}");
        assert_eq!(own.outside_max, 0.0);
        let other = approximability_test(
            &g,
            &e,
            &g.identity(),
            &span(&g, &[0, 2]),
            0.5,
            &ladder,
            &opts,
        )
        .unwrap();
        assert!(!other.pass, "{other:?}");
        assert_eq!(other.theta_min, 0.0);
    }

    #[test]
    fn aptan_self_and_transverse() {
        let g = h3();
        let e = plane_sample(&g, 20_000);
        let opts = TesterOptions::default();
        let ladder = [0.6, 0.4, 0.25];
        let own = aptan_test(
            &g,
            &e,
            &g.identity(),
            &span(&g, &[1, 2]),
            &[0.3, 0.6],
            &ladder,
            &opts,
        )
        .unwrap();
        assert!(own.applicable && own.pass, "{own:?}");
        let other = aptan_test(
            &g,
            &e,
            &g.identity(),
            &span(&g, &[0, 2]),
            &[0.3],
            &ladder,
            &opts,
        )
        .unwrap();
        assert!(!other.pass, "{other:?}");
        assert!(other.series[0].ratios.iter().all(|r| r.1 > 0.05));
    }

    #[test]
    fn saptan_disjointness_and_ordering() {
        let g = h3();
        let e = sample_coordinate_subspace(&g, &g.identity(), &[0], 1.0, 4000, 5).unwrap();
        let opts = TesterOptions::default();
        let rep = saptan_test(
            &g,
            &e,
            &g.identity(),
            &span(&g, &[0]),
            0.2,
            0.5,
            &[0.5, 0.25, 0.1],
            ExponentMode::KDepthN,
            5000,
            &opts,
        )
        .unwrap();
        assert!(rep.disjoint && rep.pass, "{rep:?}");
        for r in &rep.rungs {
            assert!(r.k_depth_m >= r.k && r.k_depth_n >= r.k);
        }
        // Above 1/√2 the two cones overlap.
        let wide = saptan_test(
            &g,
            &e,
            &g.identity(),
            &span(&g, &[0]),
            0.9,
            0.5,
            &[0.5],
            ExponentMode::K,
            2000,
            &opts,
        )
        .unwrap();
        assert!(!wide.disjoint);
    }

    #[test]
    fn cone_mass_constant_is_stable_on_a_subgroup() {
        let g = h3();
        // About 20 points per δ/6-ball at δ = 0.2.
        let e = sample_coordinate_subspace(&g, &g.identity(), &[1, 2], 0.5, 100_000, 3).unwrap();
        let v = span(&g, &[0]);
        let opts = TesterOptions::default();
        let a = cone_mass_bound_check(&g, &e, &v, 0.5, 1.0, 0.2, 8, &opts).unwrap();
        let b = cone_mass_bound_check(&g, &e, &v, 0.5, 1.0, 0.4, 8, &opts).unwrap();
        assert_eq!(a.k, 3);
        assert_eq!(a.lambda_empirical, 0.0);
        assert!(a.hypothesis_holds);
        let ratio = a.constant / b.constant;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "{} {}",
            a.constant,
            b.constant
        );
    }
}
