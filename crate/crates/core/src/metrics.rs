//! Gauges and distances.
//!
//! `d_qn` is the quasi-norm distance `|p⁻¹q|_qn`, with
//! `|p|_qn = (Σᵢ ‖vᵢ‖^{2/i})^{1/2}` over the layer components `vᵢ`. The first
//! layer is measured in the horizontal inner product, higher layers in the
//! coordinate norm. The Carnot-Carathéodory distance has no closed form here
//! and is bracketed numerically by [`cc_upper`].

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::algebra::CarnotAlgebra;
use crate::error::{invalid, Error, Result};
use crate::group::GroupPoint;
use crate::linalg;
use crate::math;
use crate::optim;
use crate::rng::{self, Rng};
use crate::MAX_DIM;

/// Distance used by the measure and cone estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// Quasi-norm distance; cheap and exact.
    Qn,
    /// Numerical Carnot-Carathéodory upper bound; expensive.
    Cc(CcOptions),
}

/// `|p|_qn` on raw coordinates.
#[inline]
pub fn qnorm_coords(alg: &CarnotAlgebra, p: &[f64]) -> f64 {
    let g = alg.grading();
    let r1 = g.layer_range(1);
    let mut total = alg.h_norm_sq(&p[r1]);
    for i in 2..=g.depth() {
        let sq: f64 = p[g.layer_range(i)].iter().map(|x| x * x).sum();
        if sq > 0.0 {
            // ‖v‖^{2/i} = (‖v‖²)^{1/i}
            total += math::root(sq, i);
        }
    }
    math::sqrt(total)
}

pub fn qnorm(alg: &CarnotAlgebra, p: &GroupPoint) -> f64 {
    qnorm_coords(alg, p.coords())
}

/// Unchecked `d_qn` on raw coordinates.
#[inline]
pub fn dist_qn(alg: &CarnotAlgebra, p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    let mut neg = [0.0f64; MAX_DIM];
    for (o, x) in neg[..n].iter_mut().zip(p) {
        *o = -x;
    }
    let mut rel = [0.0f64; MAX_DIM];
    alg.mul_into(&neg[..n], q, &mut rel[..n]);
    qnorm_coords(alg, &rel[..n])
}

pub fn d_qn(alg: &CarnotAlgebra, p: &GroupPoint, q: &GroupPoint) -> Result<f64> {
    alg.check_point(p)?;
    alg.check_point(q)?;
    Ok(dist_qn(alg, p.coords(), q.coords()))
}

/// Distance under `metric`; `Cc` returns the certified-endpoint upper bound.
pub fn distance(alg: &CarnotAlgebra, metric: &Metric, p: &[f64], q: &[f64]) -> Result<f64> {
    match metric {
        Metric::Qn => Ok(dist_qn(alg, p, q)),
        Metric::Cc(opts) => {
            Ok(cc_upper(alg, &GroupPoint::from(p), &GroupPoint::from(q), opts)?.upper)
        }
    }
}

/// `max_j |pⱼ|^{1/layer(j)}`.
#[inline]
pub fn box_gauge_coords(alg: &CarnotAlgebra, p: &[f64]) -> f64 {
    let g = alg.grading();
    p.iter()
        .enumerate()
        .map(|(j, x)| math::root(x.abs(), g.layer_of(j)))
        .fold(0.0, f64::max)
}

pub fn box_gauge(alg: &CarnotAlgebra, p: &GroupPoint) -> f64 {
    box_gauge_coords(alg, p.coords())
}

/// Whether `p ∈ Box(center, r)`, the open box `center·{|tⱼ| < r^{layer(j)}}`.
/// The center itself belongs to every box.
pub fn box_contains(
    alg: &CarnotAlgebra,
    center: &GroupPoint,
    r: f64,
    p: &GroupPoint,
) -> Result<bool> {
    alg.check_point(center)?;
    alg.check_point(p)?;
    if !(r > 0.0) {
        return Err(invalid("box radius must be positive"));
    }
    let rel = alg.relative(center.coords(), p.coords());
    Ok(box_gauge_coords(alg, &rel) < r)
}

/// Lebesgue volume of `Box(·, r)` in exponential coordinates.
pub fn box_volume(alg: &CarnotAlgebra, r: f64) -> f64 {
    let g = alg.grading();
    (0..alg.dim())
        .map(|j| 2.0 * math::pow(r, g.layer_of(j) as f64))
        .product()
}

/// Uniform point of `Box(0, r)`.
pub fn random_box_point(alg: &CarnotAlgebra, r: f64, rng: &mut Rng) -> Vec<f64> {
    let g = alg.grading();
    (0..alg.dim())
        .map(|j| {
            let s = math::pow(r, g.layer_of(j) as f64);
            rng::uniform(rng, -s, s)
        })
        .collect()
}

/// `ρ` with `B_qn(0, r) ⊂ Box(0, ρr)` for every `r`.
pub fn qn_ball_box_factor(alg: &CarnotAlgebra) -> f64 {
    if alg.has_orthonormal_frame() {
        return 1.0;
    }
    let lmin = alg
        .h_inner()
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    (1.0 / math::sqrt(lmin)).max(1.0)
}

/// Uniform point of `B_qn(0, r)` by rejection from the enclosing box.
pub fn random_qn_ball_point(alg: &CarnotAlgebra, r: f64, rng: &mut Rng) -> Vec<f64> {
    let rho = qn_ball_box_factor(alg) * r;
    loop {
        let p = random_box_point(alg, rho, rng);
        if qnorm_coords(alg, &p) <= r {
            return p;
        }
    }
}

/// Random point with `|p|_qn = 1`.
pub fn random_unit_point(alg: &CarnotAlgebra, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..alg.dim()).map(|_| rng::normal(rng)).collect();
        let n = qnorm_coords(alg, &v);
        if n > 1e-8 {
            return alg.dilated(1.0 / n, &v);
        }
    }
}

/// Solver settings for [`cc_upper`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcOptions {
    /// Number of constant-control pieces.
    pub segments: usize,
    /// Quasi-Newton iterations per penalty stage.
    pub max_iter: usize,
    /// Required endpoint mismatch in `d_qn`.
    pub endpoint_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CcOptions {
    fn default() -> Self {
        Self {
            segments: 32,
            max_iter: 200,
            endpoint_tol: 1e-6,
            restarts: 8,
            seed: 0,
        }
    }
}

/// Result of [`cc_upper`].
#[derive(Debug, Clone, PartialEq)]
pub struct CCDistanceEstimate {
    /// Length of the best horizontal path found.
    pub upper: f64,
    /// Horizontal length of `p⁻¹q`; a lower bound for `d_cc`.
    pub lower: f64,
    /// Piecewise-constant controls, one horizontal vector per segment.
    pub path: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Whether the last quasi-Newton stage of the winning restart met its
    /// gradient tolerance.
    pub converged: bool,
    /// `d_qn(endpoint, q)` of the returned path.
    pub mismatch: f64,
}

/// Direct shooting for horizontal paths from the identity to `target`.
struct Shooting<'a> {
    alg: &'a CarnotAlgebra,
    segments: usize,
    d1: usize,
    target: Vec<f64>,
}

impl Shooting<'_> {
    fn n_vars(&self) -> usize {
        self.segments * self.d1
    }

    /// `exp(u/N)` for one segment's control.
    fn step(&self, u: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.segments as f64;
        out.iter_mut().for_each(|x| *x = 0.0);
        for (o, x) in out[..self.d1].iter_mut().zip(u) {
            *o = inv * x;
        }
    }

    fn endpoint(&self, u: &[f64]) -> Vec<f64> {
        let n = self.alg.dim();
        let mut acc = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for seg in u.chunks(self.d1) {
            self.step(seg, &mut s);
            self.alg.mul_into(&acc, &s, &mut tmp);
            core::mem::swap(&mut acc, &mut tmp);
        }
        acc
    }

    fn constraint(&self, u: &[f64]) -> Vec<f64> {
        let mut e = self.endpoint(u);
        for (x, t) in e.iter_mut().zip(&self.target) {
            *x -= t;
        }
        e
    }

    /// Constraint value and its Jacobian (row-major `n × n_vars`), by
    /// central differences through prefix and suffix products.
    fn constraint_jacobian(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.alg.dim();
        let nseg = self.segments;
        let nv = self.n_vars();
        let mut steps = vec![0.0; nseg * n];
        for (k, seg) in u.chunks(self.d1).enumerate() {
            self.step(seg, &mut steps[k * n..(k + 1) * n]);
        }
        // prefix[k] = s_0 ⋯ s_{k-1}, suffix[k] = s_{k+1} ⋯ s_{N-1}
        let mut prefix = vec![0.0; (nseg + 1) * n];
        for k in 0..nseg {
            let (done, rest) = prefix.split_at_mut((k + 1) * n);
            self.alg
                .mul_into(&done[k * n..], &steps[k * n..(k + 1) * n], &mut rest[..n]);
        }
        let mut suffix = vec![0.0; nseg * n];
        for k in (0..nseg.saturating_sub(1)).rev() {
            let (head, tail) = suffix.split_at_mut((k + 1) * n);
            self.alg.mul_into(
                &steps[(k + 1) * n..(k + 2) * n],
                &tail[..n],
                &mut head[k * n..],
            );
        }
        let mut c = prefix[nseg * n..].to_vec();
        for (x, t) in c.iter_mut().zip(&self.target) {
            *x -= t;
        }
        let mut jac = vec![0.0; n * nv];
        let h = 1e-6;
        let mut seg = vec![0.0; self.d1];
        let mut s = vec![0.0; n];
        let mut left = vec![0.0; n];
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        for k in 0..nseg {
            for a in 0..self.d1 {
                for (sign, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                    seg.copy_from_slice(&u[k * self.d1..(k + 1) * self.d1]);
                    seg[a] += sign * h;
                    self.step(&seg, &mut s);
                    self.alg
                        .mul_into(&prefix[k * n..(k + 1) * n], &s, &mut left);
                    self.alg.mul_into(&left, &suffix[k * n..(k + 1) * n], out);
                }
                let col = k * self.d1 + a;
                for r in 0..n {
                    jac[r * nv + col] = (plus[r] - minus[r]) / (2.0 * h);
                }
            }
        }
        (c, jac)
    }

    fn energy(&self, u: &[f64]) -> f64 {
        u.chunks(self.d1)
            .map(|seg| self.alg.h_norm_sq(seg))
            .sum::<f64>()
            / self.segments as f64
    }

    fn energy_grad(&self, u: &[f64], out: &mut [f64]) {
        let h = self.alg.h_inner();
        let scale = 2.0 / self.segments as f64;
        for (seg, o) in u.chunks(self.d1).zip(out.chunks_mut(self.d1)) {
            for i in 0..self.d1 {
                o[i] = scale * (0..self.d1).map(|j| h[(i, j)] * seg[j]).sum::<f64>();
            }
        }
    }

    fn length(&self, u: &[f64]) -> f64 {
        u.chunks(self.d1)
            .map(|seg| math::sqrt(self.alg.h_norm_sq(seg)))
            .sum::<f64>()
            / self.segments as f64
    }

    fn mismatch(&self, u: &[f64]) -> f64 {
        dist_qn(self.alg, &self.endpoint(u), &self.target)
    }

    fn initial(&self, restart: usize, seed: u64) -> Vec<f64> {
        let th = &self.target[..self.d1];
        let mut u: Vec<f64> = (0..self.segments)
            .flat_map(|_| th.iter().copied())
            .collect();
        if restart == 0 {
            return u;
        }
        // Low-frequency loops: a few Fourier modes with random coefficients.
        let mut r = rng::derived(seed, restart as u64);
        for m in 1..=2usize {
            let sigma = 1.5 / m as f64;
            let a: Vec<f64> = (0..self.d1).map(|_| sigma * rng::normal(&mut r)).collect();
            let b: Vec<f64> = (0..self.d1).map(|_| sigma * rng::normal(&mut r)).collect();
            for k in 0..self.segments {
                let t = (k as f64 + 0.5) / self.segments as f64;
                let w = 2.0 * core::f64::consts::PI * m as f64 * t;
                let (cw, sw) = (math::cos(w), math::sin(w));
                for i in 0..self.d1 {
                    u[k * self.d1 + i] += a[i] * cw + b[i] * sw;
                }
            }
        }
        u
    }

    /// Augmented-Lagrangian descent followed by a minimum-norm Gauss-Newton
    /// projection onto the endpoint constraint.
    fn solve(&self, mut u: Vec<f64>, max_iter: usize, proj_tol: f64) -> (Vec<f64>, usize, bool) {
        let n = self.alg.dim();
        let nv = self.n_vars();
        let mut lambda = vec![0.0; n];
        let mut mu = 10.0;
        let mut prev = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        for _stage in 0..15 {
            let (lam, m) = (lambda.clone(), mu);
            let obj = |x: &[f64]| {
                let c = self.constraint(x);
                self.energy(x) + linalg::dot(&lam, &c) + 0.5 * m * linalg::dot(&c, &c)
            };
            let grad = |x: &[f64], out: &mut [f64]| {
                self.energy_grad(x, out);
                let (c, jac) = self.constraint_jacobian(x);
                for r in 0..n {
                    let w = lam[r] + m * c[r];
                    for v in 0..nv {
                        out[v] += w * jac[r * nv + v];
                    }
                }
            };
            let res = optim::bfgs(obj, grad, u, max_iter, 1e-9);
            u = res.x;
            iterations += res.iterations;
            converged = res.converged;
            let c = self.constraint(&u);
            let cn = linalg::norm(&c);
            if cn < 1e-10 {
                break;
            }
            for (l, ci) in lambda.iter_mut().zip(&c) {
                *l += mu * ci;
            }
            if cn > 0.25 * prev {
                mu *= 2.0;
            }
            prev = cn;
        }
        for _ in 0..30 {
            if self.mismatch(&u) < proj_tol {
                break;
            }
            let (c, jac) = self.constraint_jacobian(&u);
            let j = DMatrix::from_row_slice(n, nv, &jac);
            let rhs = DMatrix::from_column_slice(n, 1, &c);
            let Some(step) = linalg::lstsq(&j, &rhs) else {
                break;
            };
            for (x, d) in u.iter_mut().zip(step.iter()) {
                *x -= d;
            }
        }
        (u, iterations, converged)
    }
}

/// Upper bound for `d_cc(p, q)` by optimising piecewise-constant horizontal
/// controls in the left-invariant frame.
///
/// The problem is solved at unit scale (`p⁻¹q` dilated to `|·|_qn = 1`) and
/// the length rescaled, so estimates are exactly dilation covariant up to
/// rounding. Fails with [`Error::SolverFailed`] when no restart meets the
/// endpoint tolerance.
pub fn cc_upper(
    alg: &CarnotAlgebra,
    p: &GroupPoint,
    q: &GroupPoint,
    opts: &CcOptions,
) -> Result<CCDistanceEstimate> {
    alg.check_point(p)?;
    alg.check_point(q)?;
    if opts.segments == 0 || opts.restarts == 0 || !(opts.endpoint_tol > 0.0) {
        return Err(invalid(
            "cc solver needs segments, restarts and a positive endpoint tolerance",
        ));
    }
    let d1 = alg.horizontal_dim();
    let g = alg.relative(p.coords(), q.coords());
    let rho = qnorm_coords(alg, &g);
    let lower = math::sqrt(alg.h_norm_sq(&g[..d1]));
    if rho == 0.0 {
        return Ok(CCDistanceEstimate {
            upper: 0.0,
            lower: 0.0,
            path: vec![vec![0.0; d1]; opts.segments],
            iterations: 0,
            converged: true,
            mismatch: 0.0,
        });
    }
    let problem = Shooting {
        alg,
        segments: opts.segments,
        d1,
        target: alg.dilated(1.0 / rho, &g),
    };
    let unit_tol = opts.endpoint_tol / rho;
    let mut best: Option<(f64, Vec<f64>, bool, f64)> = None;
    let mut best_mismatch = f64::INFINITY;
    let mut iterations = 0;
    for k in 0..opts.restarts {
        let (u, it, conv) = problem.solve(
            problem.initial(k, opts.seed),
            opts.max_iter,
            0.01 * unit_tol,
        );
        iterations += it;
        let mismatch = problem.mismatch(&u);
        best_mismatch = best_mismatch.min(mismatch);
        if mismatch >= unit_tol {
            continue;
        }
        let len = problem.length(&u);
        if best.as_ref().is_none_or(|b| len < b.0) {
            best = Some((len, u, conv, mismatch));
        }
    }
    let Some((len, u, converged, mismatch)) = best else {
        return Err(Error::SolverFailed {
            mismatch: best_mismatch * rho,
        });
    };
    let path = u
        .chunks(d1)
        .map(|seg| seg.iter().map(|x| x * rho).collect())
        .collect();
    Ok(CCDistanceEstimate {
        upper: (len * rho).max(lower),
        lower,
        path,
        iterations,
        converged,
        mismatch: mismatch * rho,
    })
}

/// Empirical biLipschitz constant `Λ` between `d_cc` and `d_qn`.
///
/// Probes are the unit-gauge basis directions plus `n_samples` random
/// unit-gauge points; `Λ = max max(cc, qn) / min(cc, qn)`.
pub fn calibrate_equivalence(
    alg: &CarnotAlgebra,
    n_samples: usize,
    seed: u64,
    opts: &CcOptions,
) -> Result<f64> {
    let n = alg.dim();
    let mut probes: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let s = qnorm_coords(alg, &e);
            alg.dilated(1.0 / s, &e)
        })
        .collect();
    let mut r = rng::derived(seed, 0xca1);
    probes.extend((0..n_samples).map(|_| random_unit_point(alg, &mut r)));
    let origin = alg.identity();
    let mut lambda = 1.0f64;
    for (i, p) in probes.iter().enumerate() {
        let o = CcOptions {
            seed: seed.wrapping_add(i as u64),
            ..*opts
        };
        let cc = cc_upper(alg, &origin, &GroupPoint::from(p.as_slice()), &o)?.upper;
        let qn = qnorm_coords(alg, p);
        lambda = lambda.max(cc.max(qn) / cc.min(qn));
    }
    Ok(lambda)
}

/// Ball-Box comparison at one radius.
#[derive(Debug, Clone, PartialEq)]
pub struct BallBoxRung {
    pub r: f64,
    /// Smallest `C` with `Box(x, r/C) ⊂ B(x, r) ⊂ Box(x, Cr)` on the sample.
    pub constant: f64,
    /// `sup gauge/d` (outer containment).
    pub outer: f64,
    /// `sup d/gauge` (inner containment).
    pub inner: f64,
    /// Sampled points violating the containments for `C/2`.
    pub violations_at_half: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallBoxReport {
    pub rungs: Vec<BallBoxRung>,
    /// Largest constant over the ladder.
    pub constant: f64,
}

impl BallBoxReport {
    /// `C(first rung) / C(last rung)`.
    pub fn scale_ratio(&self) -> f64 {
        match (self.rungs.first(), self.rungs.last()) {
            (Some(a), Some(b)) => a.constant / b.constant,
            _ => f64::NAN,
        }
    }
}

/// Empirical Ball-Box constants across `r_ladder`. At each rung, points are
/// drawn uniformly from `Box(x, 2r)` about a random center `x`.
pub fn ball_box_check(
    alg: &CarnotAlgebra,
    metric: &Metric,
    r_ladder: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<BallBoxReport> {
    if r_ladder.is_empty() || r_ladder.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("ball-box ladder needs positive radii"));
    }
    let mut rungs = Vec::with_capacity(r_ladder.len());
    for (i, &r) in r_ladder.iter().enumerate() {
        let mut rg = rng::derived(seed, i as u64);
        let center = random_box_point(alg, 1.0, &mut rg);
        let mut ratios = Vec::with_capacity(n_samples);
        let (mut outer, mut inner) = (0.0f64, 0.0f64);
        while ratios.len() < n_samples {
            let local = random_box_point(alg, 2.0 * r, &mut rg);
            let gauge = box_gauge_coords(alg, &local);
            if gauge == 0.0 {
                continue;
            }
            let p = alg.mul(&center, &local);
            let d = distance(alg, metric, &center, &p)?;
            outer = outer.max(gauge / d);
            inner = inner.max(d / gauge);
            ratios.push((gauge / d).max(d / gauge));
        }
        let constant = outer.max(inner);
        let violations_at_half = ratios.iter().filter(|&&x| x > constant / 2.0).count();
        rungs.push(BallBoxRung {
            r,
            constant,
            outer,
            inner,
            violations_at_half,
        });
    }
    let constant = rungs.iter().map(|x| x.constant).fold(0.0, f64::max);
    Ok(BallBoxReport { rungs, constant })
}

/// Empirical quasi-triangle constant `K` of `d_qn` over random triples in
/// `Box(0, 1)`.
pub fn quasi_triangle_constant(alg: &CarnotAlgebra, n_samples: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let mut k = 1.0f64;
    for _ in 0..n_samples {
        let p = random_box_point(alg, 1.0, &mut r);
        let q = random_box_point(alg, 1.0, &mut r);
        let s = random_box_point(alg, 1.0, &mut r);
        let lhs = dist_qn(alg, &p, &s);
        let rhs = dist_qn(alg, &p, &q) + dist_qn(alg, &q, &s);
        if rhs > 0.0 {
            k = k.max(lhs / rhs);
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::BuiltinGroup;
    use approx::assert_abs_diff_eq;

    fn h3() -> CarnotAlgebra {
        CarnotAlgebra::builtin(BuiltinGroup::Heisenberg(1)).unwrap()
    }

    fn pt(c: &[f64]) -> GroupPoint {
        GroupPoint::from(c)
    }

    #[test]
    fn qnorm_examples() {
        let g = h3();
        assert_abs_diff_eq!(qnorm(&g, &pt(&[3.0, 4.0, 0.0])), 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(qnorm(&g, &pt(&[0.0, 0.0, 4.0])), 2.0, epsilon = 1e-15);
        assert_eq!(qnorm(&g, &g.identity()), 0.0);
    }

    #[test]
    fn dqn_examples() {
        let g = h3();
        let p = pt(&[0.2, -0.1, 0.7]);
        assert_eq!(d_qn(&g, &p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(
            d_qn(&g, &g.identity(), &pt(&[1.0, 1.0, 0.0])).unwrap(),
            core::f64::consts::SQRT_2,
            epsilon = 1e-15
        );
        assert!(d_qn(&g, &pt(&[1.0]), &p).is_err());
    }

    #[test]
    fn box_examples() {
        let g = h3();
        let o = g.identity();
        assert!(box_contains(&g, &o, 1.0, &pt(&[0.5, 0.5, 0.5])).unwrap());
        assert!(!box_contains(&g, &o, 0.5, &pt(&[0.0, 0.0, 0.3])).unwrap());
        let p = pt(&[3.0, -2.0, 8.0]);
        assert!(box_contains(&g, &p, 1e-9, &p).unwrap());
        assert!(box_contains(&g, &o, 0.0, &p).is_err());
    }

    #[test]
    fn weighted_horizontal_norm() {
        let mut sc = crate::StructureConstants::new();
        sc.insert_antisymmetric(0, 1, 2, 1.0);
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let g =
            CarnotAlgebra::new("h", crate::Grading::new(vec![2, 1]).unwrap(), sc, Some(h)).unwrap();
        assert_abs_diff_eq!(qnorm(&g, &pt(&[1.0, 0.0, 0.0])), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn cc_horizontal_segment() {
        let g = h3();
        let est = cc_upper(
            &g,
            &g.identity(),
            &pt(&[1.0, 0.0, 0.0]),
            &CcOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(est.upper, 1.0, epsilon = 1e-3);
        assert!(est.lower <= est.upper);
        assert!(est.mismatch < 1e-6);
    }

    #[test]
    fn cc_same_point_is_zero() {
        let g = h3();
        let p = pt(&[0.3, 0.1, -0.2]);
        assert_eq!(
            cc_upper(&g, &p, &p, &CcOptions::default()).unwrap().upper,
            0.0
        );
    }

    #[test]
    fn cc_vertical_is_close_to_isoperimetric_value() {
        let g = h3();
        let opts = CcOptions {
            restarts: 4,
            ..CcOptions::default()
        };
        let est = cc_upper(&g, &g.identity(), &pt(&[0.0, 0.0, 1.0]), &opts).unwrap();
        // A circle enclosing area 1 has length sqrt(4π); the 32-gon is slightly longer.
        let circle = math::sqrt(4.0 * core::f64::consts::PI);
        assert!(est.upper >= circle - 1e-6, "{}", est.upper);
        assert!(est.upper < circle * 1.01, "{}", est.upper);
    }

    #[test]
    fn abelian_box_constant() {
        let g = CarnotAlgebra::builtin(BuiltinGroup::Abelian(2)).unwrap();
        let rep = ball_box_check(&g, &Metric::Qn, &[1.0], 4000, 1).unwrap();
        // sup-norm against Euclidean norm in the plane
        assert!(rep.constant <= core::f64::consts::SQRT_2 + 1e-12);
        assert!(rep.constant > 1.35);
    }
}
