//! Weighted point samples, greedy covers and the Hausdorff-measure,
//! dimension and density estimators built on them.
//!
//! Weights approximate an unnormalised measure: for samples drawn uniformly
//! in exponential coordinates they are Lebesgue volumes, which is a fixed
//! multiple of the top-dimensional Hausdorff measure.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::algebra::CarnotAlgebra;
use crate::error::{check_dim, invalid, Error, Result};
use crate::group::GroupPoint;
use crate::math;
use crate::metrics::{self, box_gauge_coords, box_volume, random_box_point, Metric};
use crate::rng;

/// Minimum number of sample points a ball must hold before a ladder rung is
/// trusted.
pub const RESOLUTION_GUARD: usize = 30;

/// Provenance of a sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleMeta {
    pub generator: String,
    pub seed: Option<u64>,
    pub intended_dimension: Option<f64>,
}

impl SampleMeta {
    pub fn new(
        generator: impl Into<String>,
        seed: Option<u64>,
        intended_dimension: Option<f64>,
    ) -> Self {
        Self {
            generator: generator.into(),
            seed,
            intended_dimension,
        }
    }
}

/// A weighted finite sample of a subset of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSample {
    points: Vec<GroupPoint>,
    weights: Option<Vec<f64>>,
    pub meta: SampleMeta,
}

impl SetSample {
    /// Points must be nonempty and share a dimension; weights, when given,
    /// must match the point count and be positive.
    pub fn new(
        points: Vec<GroupPoint>,
        weights: Option<Vec<f64>>,
        meta: SampleMeta,
    ) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::EmptySample(
                "a set sample needs at least one point".into(),
            ));
        };
        let dim = first.dim();
        for p in &points {
            check_dim(dim, p.dim())?;
        }
        if let Some(w) = &weights {
            if w.len() != points.len() {
                return Err(invalid(format!(
                    "{} weights for {} points",
                    w.len(),
                    points.len()
                )));
            }
            if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(invalid("weights must be positive and finite"));
            }
        }
        Ok(Self {
            points,
            weights,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[GroupPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points[i].coords()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of point `i`; unweighted samples give every point `1/n`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.points.len() as f64,
        }
    }

    pub fn total_weight(&self) -> f64 {
        (0..self.len()).map(|i| self.weight(i)).sum()
    }

    /// Left translate `g·E`; weights are unchanged (Haar measure is left invariant).
    pub fn translated(&self, alg: &CarnotAlgebra, g: &GroupPoint) -> Result<Self> {
        alg.check_point(g)?;
        let points = self
            .points
            .iter()
            .map(|p| GroupPoint::new(alg.mul(g.coords(), p.coords())))
            .collect();
        Ok(Self {
            points,
            weights: self.weights.clone(),
            meta: self.meta.clone(),
        })
    }

    /// Dilate `h_t(E)`; weights scale by `t^s` with `s` the intended
    /// dimension when one is recorded.
    pub fn dilated(&self, alg: &CarnotAlgebra, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(invalid("dilation factor must be positive"));
        }
        let points = self
            .points
            .iter()
            .map(|p| GroupPoint::new(alg.dilated(t, p.coords())))
            .collect();
        let factor = self
            .meta
            .intended_dimension
            .map_or(1.0, |s| math::pow(t, s));
        Ok(Self {
            points,
            weights: self
                .weights
                .as_ref()
                .map(|w| w.iter().map(|x| x * factor).collect()),
            meta: self.meta.clone(),
        })
    }
}

/// A set given by a membership predicate inside a bounding box.
#[derive(Clone)]
pub struct MembershipSet {
    predicate: Arc<dyn Fn(&[f64]) -> bool + Send + Sync>,
    /// The set lies in `Box(center, radius)`.
    pub center: GroupPoint,
    pub radius: f64,
    pub sampler_seed: u64,
}

impl core::fmt::Debug for MembershipSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("MembershipSet")
            .field("center", &self.center)
            .field("radius", &self.radius)
            .field("sampler_seed", &self.sampler_seed)
            .finish_non_exhaustive()
    }
}

impl MembershipSet {
    pub fn new(
        predicate: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
        center: GroupPoint,
        radius: f64,
        sampler_seed: u64,
    ) -> Self {
        Self {
            predicate: Arc::new(predicate),
            center,
            radius,
            sampler_seed,
        }
    }

    /// `Box(center, r)` itself.
    pub fn boxed(alg: &CarnotAlgebra, center: GroupPoint, r: f64, sampler_seed: u64) -> Self {
        let a = alg.clone();
        let c = center.coords().to_vec();
        Self::new(
            move |x| box_gauge_coords(&a, &a.relative(&c, x)) < r,
            center,
            r,
            sampler_seed,
        )
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        (self.predicate)(x)
    }

    /// `g·E`.
    pub fn translated(&self, alg: &CarnotAlgebra, g: &GroupPoint) -> Self {
        let a = alg.clone();
        let inner = self.predicate.clone();
        let g_inv: Vec<f64> = g.coords().iter().map(|x| -x).collect();
        Self {
            predicate: Arc::new(move |x: &[f64]| inner(&a.mul(&g_inv, x))),
            center: GroupPoint::new(alg.mul(g.coords(), self.center.coords())),
            radius: self.radius,
            sampler_seed: self.sampler_seed,
        }
    }

    /// Uniform sample of `n` points by rejection from the bounding box;
    /// weights are `vol(box) / draws`.
    pub fn sample(&self, alg: &CarnotAlgebra, n: usize) -> Result<SetSample> {
        alg.check_point(&self.center)?;
        let mut r = rng::seeded(self.sampler_seed);
        let mut points = Vec::with_capacity(n);
        let mut draws = 0usize;
        let max_draws = 1000 * n.max(1);
        while points.len() < n {
            if draws >= max_draws {
                return Err(Error::EmptySample(format!(
                    "accepted {} of {n} points after {draws} draws",
                    points.len()
                )));
            }
            draws += 1;
            let local = random_box_point(alg, self.radius, &mut r);
            let p = alg.mul(self.center.coords(), &local);
            if self.contains(&p) {
                points.push(GroupPoint::new(p));
            }
        }
        let w = box_volume(alg, self.radius) / draws as f64;
        SetSample::new(
            points,
            Some(vec![w; n]),
            SampleMeta::new(
                "membership",
                Some(self.sampler_seed),
                Some(alg.homogeneous_dimension() as f64),
            ),
        )
    }
}

/// Uniform sample of `Box(center, r)` with Lebesgue weights.
pub fn sample_box(
    alg: &CarnotAlgebra,
    center: &GroupPoint,
    r: f64,
    n: usize,
    seed: u64,
) -> Result<SetSample> {
    alg.check_point(center)?;
    if n == 0 || !(r > 0.0) {
        return Err(invalid("box sample needs n > 0 and r > 0"));
    }
    let mut rg = rng::seeded(seed);
    let points = (0..n)
        .map(|_| GroupPoint::new(alg.mul(center.coords(), &random_box_point(alg, r, &mut rg))))
        .collect();
    let w = box_volume(alg, r) / n as f64;
    SetSample::new(
        points,
        Some(vec![w; n]),
        SampleMeta::new(
            format!("box(r={r})"),
            Some(seed),
            Some(alg.homogeneous_dimension() as f64),
        ),
    )
}

/// Uniform sample of `center·{exp(Σ_{j∈free} tⱼ eⱼ) : |tⱼ| < r^{layer(j)}}`.
/// When the free coordinates span a homogeneous subgroup this is a box in
/// that subgroup; weights are Lebesgue measure in the free coordinates.
pub fn sample_coordinate_subspace(
    alg: &CarnotAlgebra,
    center: &GroupPoint,
    free: &[usize],
    r: f64,
    n: usize,
    seed: u64,
) -> Result<SetSample> {
    alg.check_point(center)?;
    if n == 0 || !(r > 0.0) || free.is_empty() {
        return Err(invalid(
            "subspace sample needs n > 0, r > 0 and free coordinates",
        ));
    }
    if let Some(&j) = free.iter().find(|&&j| j >= alg.dim()) {
        return Err(invalid(format!("coordinate {j} out of range")));
    }
    let g = alg.grading();
    let mut rg = rng::seeded(seed);
    let mut local = vec![0.0; alg.dim()];
    let points = (0..n)
        .map(|_| {
            for &j in free {
                let s = math::pow(r, g.layer_of(j) as f64);
                local[j] = rng::uniform(&mut rg, -s, s);
            }
            GroupPoint::new(alg.mul(center.coords(), &local))
        })
        .collect();
    let vol: f64 = free
        .iter()
        .map(|&j| 2.0 * math::pow(r, g.layer_of(j) as f64))
        .product();
    let hdim: usize = free.iter().map(|&j| g.layer_of(j)).sum();
    SetSample::new(
        points,
        Some(vec![vol / n as f64; n]),
        SampleMeta::new(
            format!("coordinate-subspace{free:?}(r={r})"),
            Some(seed),
            Some(hdim as f64),
        ),
    )
}

/// A closed ball of a cover.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: GroupPoint,
    pub radius: f64,
}

/// Farthest-point (Gonzalez) ordering of a sample. The first `m` centres
/// cover every point within `radii[m - 1]`.
#[derive(Debug, Clone)]
pub struct FarthestPointOrder {
    pub order: Vec<usize>,
    pub radii: Vec<f64>,
    /// Per requested snapshot radius, the weight owned by each centre when
    /// the covering radius first reached it (nearest-centre cells).
    pub cell_masses: Vec<Vec<f64>>,
}

impl FarthestPointOrder {
    /// Builds the ordering until the covering radius drops to `min_radius`
    /// or every point is a centre.
    pub fn build(
        alg: &CarnotAlgebra,
        set: &SetSample,
        metric: &Metric,
        min_radius: f64,
    ) -> Result<Self> {
        Self::build_with_cells(alg, set, metric, min_radius, &[])
    }

    /// As [`build`](Self::build), also recording cell masses at each radius
    /// in `snapshots`.
    pub fn build_with_cells(
        alg: &CarnotAlgebra,
        set: &SetSample,
        metric: &Metric,
        min_radius: f64,
        snapshots: &[f64],
    ) -> Result<Self> {
        match metric {
            Metric::Qn => Ok(Self::build_qn(alg, set, min_radius, snapshots)),
            _ => Self::build_brute(alg, set, metric, min_radius, snapshots),
        }
    }

    fn snapshot(
        set: &SetSample,
        owner: &[u32],
        centres: usize,
        r: f64,
        snapshots: &[f64],
        cells: &mut [Vec<f64>],
    ) {
        for (k, &target) in snapshots.iter().enumerate() {
            if r <= target && cells[k].is_empty() {
                let mut m = vec![0.0; centres];
                for (i, &o) in owner.iter().enumerate() {
                    m[o as usize] += set.weight(i);
                }
                cells[k] = m;
            }
        }
    }

    fn build_brute(
        alg: &CarnotAlgebra,
        set: &SetSample,
        metric: &Metric,
        min_radius: f64,
        snapshots: &[f64],
    ) -> Result<Self> {
        let n = set.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut owner = vec![0u32; n];
        let mut cells = vec![Vec::new(); snapshots.len()];
        let mut order = Vec::new();
        let mut radii = Vec::new();
        let mut next = 0usize;
        loop {
            order.push(next);
            let c = set.point(next);
            dist[next] = 0.0;
            let mut far = 0.0f64;
            let mut far_i = next;
            for i in 0..n {
                if dist[i] > 0.0 {
                    let d = metrics::distance(alg, metric, c, set.point(i))?;
                    if d < dist[i] {
                        dist[i] = d;
                        owner[i] = (order.len() - 1) as u32;
                    }
                }
                if dist[i] > far {
                    far = dist[i];
                    far_i = i;
                }
            }
            owner[next] = (order.len() - 1) as u32;
            radii.push(far);
            Self::snapshot(set, &owner, order.len(), far, snapshots, &mut cells);
            if far <= min_radius || order.len() == n {
                break;
            }
            next = far_i;
        }
        Ok(Self {
            order,
            radii,
            cell_masses: cells,
        })
    }

    /// Same ordering as the brute-force build, with candidate points taken
    /// from a grid on horizontal coordinates: `d_qn(c, p) ≥ √λ_min ‖p_h − c_h‖`.
    fn build_qn(alg: &CarnotAlgebra, set: &SetSample, min_radius: f64, snapshots: &[f64]) -> Self {
        let n = set.len();
        let grid = HorizontalGrid::new(alg, set, min_radius);
        let mut dist = vec![f64::INFINITY; n];
        let mut owner = vec![0u32; n];
        let mut cells = vec![Vec::new(); snapshots.len()];
        let mut heap = BinaryHeap::with_capacity(n);
        let mut order = Vec::new();
        let mut radii = Vec::new();
        let mut next = 0usize;
        let mut reach = f64::INFINITY;
        let mut cand = Vec::new();
        loop {
            order.push(next);
            dist[next] = 0.0;
            let c = set.point(next);
            grid.candidates(c, reach, &mut cand);
            for &i in &cand {
                let i = i as usize;
                if dist[i] > 0.0 {
                    let d = metrics::dist_qn(alg, c, set.point(i));
                    if d < dist[i] {
                        dist[i] = d;
                        owner[i] = (order.len() - 1) as u32;
                        heap.push(Entry(d, i));
                    }
                }
            }
            let (far, far_i) = loop {
                match heap.peek() {
                    Some(&Entry(d, i)) if d != dist[i] => {
                        heap.pop();
                    }
                    Some(&Entry(d, i)) => break (d, i),
                    None => break (0.0, next),
                }
            };
            owner[next] = (order.len() - 1) as u32;
            radii.push(far);
            Self::snapshot(set, &owner, order.len(), far, snapshots, &mut cells);
            if far <= min_radius || order.len() == n {
                break;
            }
            next = far_i;
            reach = far;
        }
        Self {
            order,
            radii,
            cell_masses: cells,
        }
    }

    /// Number of centres needed for covering radius `r`, or `None` if the
    /// ordering stopped before reaching it.
    pub fn count_for_radius(&self, r: f64) -> Option<usize> {
        self.radii.iter().position(|&x| x <= r).map(|m| m + 1)
    }
}

/// Max-heap entry ordered by distance.
#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Uniform bucket grid over (up to three) horizontal coordinates.
struct HorizontalGrid {
    axes: usize,
    lo: [f64; 3],
    cell: f64,
    cells: [usize; 3],
    /// Horizontal distance per unit of `d_qn`.
    stretch: f64,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl HorizontalGrid {
    fn new(alg: &CarnotAlgebra, set: &SetSample, min_radius: f64) -> Self {
        let axes = alg.horizontal_dim().min(3);
        let mut lo = [0.0f64; 3];
        let mut hi = [0.0f64; 3];
        for a in 0..axes {
            lo[a] = (0..set.len())
                .map(|i| set.point(i)[a])
                .fold(f64::INFINITY, f64::min);
            hi[a] = (0..set.len())
                .map(|i| set.point(i)[a])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let extent = (0..axes)
            .map(|a| hi[a] - lo[a])
            .fold(0.0, f64::max)
            .max(1e-12);
        let cap = [0usize, 4096, 128, 32][axes];
        let per_axis = (math::ceil(extent / min_radius.max(1e-12)) as usize).clamp(1, cap);
        let cell = extent / per_axis as f64;
        let mut cells = [1usize; 3];
        for a in 0..axes {
            cells[a] = (math::floor((hi[a] - lo[a]) / cell) as usize + 1).min(per_axis);
        }
        let total: usize = cells.iter().product();
        let key = |p: &[f64]| -> usize {
            let mut k = 0;
            for a in (0..axes).rev() {
                let c = (((p[a] - lo[a]) / cell) as usize).min(cells[a] - 1);
                k = k * cells[a] + c;
            }
            k
        };
        let mut counts = vec![0u32; total + 1];
        for i in 0..set.len() {
            counts[key(set.point(i)) + 1] += 1;
        }
        for k in 0..total {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; set.len()];
        for i in 0..set.len() {
            let k = key(set.point(i));
            items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        let stretch = 1.0 / math::sqrt(min_eigenvalue(alg));
        Self {
            axes,
            lo,
            cell,
            cells,
            stretch,
            start: counts,
            items,
        }
    }

    /// Indices of points whose horizontal coordinates lie within
    /// `radius` (in `d_qn`) of `c`; all points when `radius` is infinite.
    fn candidates(&self, c: &[f64], radius: f64, out: &mut Vec<u32>) {
        out.clear();
        if !radius.is_finite() || self.axes == 0 {
            out.extend_from_slice(&self.items);
            return;
        }
        let reach = radius * self.stretch;
        let mut lo_c = [0usize; 3];
        let mut hi_c = [0usize; 3];
        for a in 0..self.axes {
            let lo = math::floor((c[a] - reach - self.lo[a]) / self.cell);
            let hi = math::floor((c[a] + reach - self.lo[a]) / self.cell);
            if hi < 0.0 || lo > (self.cells[a] - 1) as f64 {
                return;
            }
            lo_c[a] = lo.max(0.0) as usize;
            hi_c[a] = (hi as usize).min(self.cells[a] - 1);
        }
        for z in lo_c[2]..=hi_c[2] {
            for y in lo_c[1]..=hi_c[1] {
                let row = (z * self.cells[1] + y) * self.cells[0];
                let (a, b) = (self.start[row + lo_c[0]], self.start[row + hi_c[0] + 1]);
                out.extend_from_slice(&self.items[a as usize..b as usize]);
            }
        }
    }
}

fn min_eigenvalue(alg: &CarnotAlgebra) -> f64 {
    if alg.has_orthonormal_frame() {
        1.0
    } else {
        alg.h_inner()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Greedy farthest-point cover of the sample by closed balls of radius `δ/2`.
pub fn cover_greedy(
    alg: &CarnotAlgebra,
    set: &SetSample,
    delta: f64,
    metric: &Metric,
) -> Result<Vec<Ball>> {
    if !(delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    check_dim(alg.dim(), set.dim())?;
    let fp = FarthestPointOrder::build(alg, set, metric, delta / 2.0)?;
    let m = fp.count_for_radius(delta / 2.0).unwrap_or(fp.order.len());
    Ok(fp.order[..m]
        .iter()
        .map(|&i| Ball {
            center: set.points()[i].clone(),
            radius: delta / 2.0,
        })
        .collect())
}

/// Cover counts at each `δ` of a ladder, sharing one farthest-point ordering.
pub fn cover_counts(
    alg: &CarnotAlgebra,
    set: &SetSample,
    deltas: &[f64],
    metric: &Metric,
) -> Result<Vec<usize>> {
    check_dim(alg.dim(), set.dim())?;
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(invalid("delta ladder must be positive"));
    }
    let min = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let fp = FarthestPointOrder::build(alg, set, metric, min / 2.0)?;
    Ok(deltas
        .iter()
        .map(|d| fp.count_for_radius(d / 2.0).unwrap_or(fp.order.len()))
        .collect())
}

/// `H^s_δ` upper estimates `count(δ)·δ^s` from the greedy cover.
pub fn hausdorff_estimate(
    alg: &CarnotAlgebra,
    set: &SetSample,
    s: f64,
    deltas: &[f64],
    metric: &Metric,
) -> Result<Vec<(f64, f64)>> {
    if !(s > 0.0) {
        return Err(invalid("s must be positive"));
    }
    let counts = cover_counts(alg, set, deltas, metric)?;
    Ok(deltas
        .iter()
        .zip(counts)
        .map(|(&d, c)| (d, c as f64 * math::pow(d, s)))
        .collect())
}

/// Fraction of the sample's box-gauge radius, about its coordinate centre,
/// inside which cover centres are counted by [`dim_estimate`].
pub const DIM_WINDOW: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct DimEstimate {
    pub dimension: f64,
    pub r2: f64,
    /// `(δ, cover count, centres inside the window)` per rung.
    pub counts: Vec<(f64, usize, usize)>,
    /// Rungs kept by the resolution guard.
    pub used: Vec<bool>,
    /// False when the window held too little of the sample and whole-cover
    /// counts were fitted instead.
    pub windowed: bool,
}

/// Box-counting dimension: slope of `log count(δ)` against `log(1/δ)`.
///
/// Greedy covers put a layer of centres on the boundary of the sample, which
/// biases whole-cover slopes low at moderate `δ`. Counts are therefore taken
/// over centres lying in a fixed inner window (box gauge of `m⁻¹p` at most
/// `DIM_WINDOW` times its sample maximum, `m` the coordinate centre). The
/// window dilates with the sample, so the estimate is dilation invariant.
/// Rungs where a cover ball holds on average fewer than
/// [`RESOLUTION_GUARD`] points are dropped; at least three must remain.
pub fn dim_estimate(
    alg: &CarnotAlgebra,
    set: &SetSample,
    deltas: &[f64],
    metric: &Metric,
) -> Result<DimEstimate> {
    if deltas.len() < 4 {
        return Err(invalid("dimension fit needs at least 4 ladder rungs"));
    }
    check_dim(alg.dim(), set.dim())?;
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(invalid("delta ladder must be positive"));
    }
    let n = set.len();
    let min = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let fp = FarthestPointOrder::build(alg, set, metric, min / 2.0)?;

    let dim = alg.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in set.points() {
        for (j, &x) in p.coords().iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    let centre = GroupPoint::new(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect());
    let centre_inv = alg.inverse(&centre);
    let mut rel = vec![0.0; dim];
    let gauges: Vec<f64> = (0..n)
        .map(|i| {
            alg.mul_into(centre_inv.coords(), set.point(i), &mut rel);
            metrics::box_gauge_coords(alg, &rel)
        })
        .collect();
    let reach = gauges.iter().cloned().fold(0.0, f64::max);
    let inside_pt: Vec<bool> = gauges.iter().map(|&g| g <= DIM_WINDOW * reach).collect();
    let windowed = inside_pt.iter().filter(|&&b| b).count() * 20 >= n;
    let mut prefix = Vec::with_capacity(fp.order.len() + 1);
    prefix.push(0usize);
    for &i in &fp.order {
        let last = *prefix.last().unwrap();
        prefix.push(last + (!windowed || inside_pt[i]) as usize);
    }

    let mut counts = Vec::with_capacity(deltas.len());
    let mut used = Vec::with_capacity(deltas.len());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &d in deltas {
        let m = fp.count_for_radius(d / 2.0).unwrap_or(fp.order.len());
        let w = prefix[m];
        let ok = w > 0 && n >= RESOLUTION_GUARD * m;
        if ok {
            x.push(-math::ln(d));
            y.push(math::ln(w as f64));
        }
        counts.push((d, m, w));
        used.push(ok);
    }
    if x.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "only {} ladder rungs resolved by {} points",
            x.len(),
            n
        )));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::DegenerateFit("all cover counts equal".into()));
    }
    let (slope, _, r2) = math::linear_fit(&x, &y)
        .ok_or_else(|| Error::DegenerateFit("ladder has repeated radii".into()))?;
    Ok(DimEstimate {
        dimension: slope,
        r2,
        counts,
        used,
        windowed,
    })
}

/// Total weight within distance `r` of `x` (closed ball).
pub fn ball_measure(
    alg: &CarnotAlgebra,
    set: &SetSample,
    x: &[f64],
    r: f64,
    metric: &Metric,
) -> Result<f64> {
    Ok(ball_stats(alg, set, x, r, metric)?.0)
}

/// Weight and point count of the closed ball `B(x, r)`.
pub fn ball_stats(
    alg: &CarnotAlgebra,
    set: &SetSample,
    x: &[f64],
    r: f64,
    metric: &Metric,
) -> Result<(f64, usize)> {
    check_dim(alg.dim(), x.len())?;
    check_dim(alg.dim(), set.dim())?;
    if !(r > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let mut mass = 0.0;
    let mut count = 0;
    for i in 0..set.len() {
        let p = set.point(i);
        if metrics::distance(alg, metric, x, p)? <= r {
            mass += set.weight(i);
            count += 1;
        }
    }
    Ok((mass, count))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    /// Upper density estimate (max ratio over the ladder).
    pub upper: f64,
    /// Lower density estimate (min ratio over the ladder).
    pub lower: f64,
    /// `(r, mass/r^s, point count)` for the rungs used.
    pub ratios: Vec<(f64, f64, usize)>,
    /// Whether rungs were dropped by the resolution guard.
    pub truncated: bool,
}

/// `s`-densities of the sample at `x` over `r_ladder` (expected decreasing).
/// Rungs after the first stop once a ball holds fewer than
/// [`RESOLUTION_GUARD`] points.
pub fn density(
    alg: &CarnotAlgebra,
    set: &SetSample,
    x: &[f64],
    s: f64,
    r_ladder: &[f64],
    metric: &Metric,
) -> Result<DensityEstimate> {
    if r_ladder.is_empty() {
        return Err(invalid("density needs a radius ladder"));
    }
    let mut ratios = Vec::new();
    let mut truncated = false;
    for (i, &r) in r_ladder.iter().enumerate() {
        let (mass, count) = ball_stats(alg, set, x, r, metric)?;
        if i > 0 && count < RESOLUTION_GUARD {
            truncated = true;
            break;
        }
        ratios.push((r, mass / math::pow(r, s), count));
    }
    let upper = ratios.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let lower = ratios.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    Ok(DensityEstimate {
        upper,
        lower,
        ratios,
        truncated,
    })
}

/// Monte Carlo Lebesgue volume of `B_qn(0, 1)`.
pub fn unit_ball_volume(alg: &CarnotAlgebra, n: usize, seed: u64) -> f64 {
    let rho = metrics::qn_ball_box_factor(alg);
    let mut rg = rng::seeded(seed);
    let hits = (0..n)
        .filter(|_| metrics::qnorm_coords(alg, &random_box_point(alg, rho, &mut rg)) <= 1.0)
        .count();
    box_volume(alg, rho) * hits as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::BuiltinGroup;

    fn h3() -> CarnotAlgebra {
        CarnotAlgebra::builtin(BuiltinGroup::Heisenberg(1)).unwrap()
    }

    #[test]
    fn sample_validation() {
        assert!(matches!(
            SetSample::new(vec![], None, SampleMeta::default()),
            Err(Error::EmptySample(_))
        ));
        let pts = vec![GroupPoint::new(vec![0.0; 3]); 2];
        assert!(SetSample::new(pts.clone(), Some(vec![1.0]), SampleMeta::default()).is_err());
        assert!(SetSample::new(pts.clone(), Some(vec![1.0, -1.0]), SampleMeta::default()).is_err());
        let s = SetSample::new(pts, None, SampleMeta::default()).unwrap();
        assert_eq!(s.total_weight(), 1.0);
    }

    #[test]
    fn single_point_cover() {
        let g = h3();
        let s = SetSample::new(
            vec![GroupPoint::new(vec![0.1, 0.2, 0.3])],
            None,
            SampleMeta::default(),
        )
        .unwrap();
        for d in [1e-3, 0.1, 10.0] {
            assert_eq!(cover_greedy(&g, &s, d, &Metric::Qn).unwrap().len(), 1);
        }
        let est = hausdorff_estimate(&g, &s, 1.0, &[0.1, 0.01, 0.001], &Metric::Qn).unwrap();
        assert!(est.last().unwrap().1 <= 1e-3 + 1e-15);
    }

    #[test]
    fn cover_reaches_every_point() {
        let g = h3();
        let s = sample_box(&g, &g.identity(), 1.0, 2000, 4).unwrap();
        let cover = cover_greedy(&g, &s, 0.6, &Metric::Qn).unwrap();
        for p in s.points() {
            assert!(cover
                .iter()
                .any(|b| metrics::dist_qn(&g, b.center.coords(), p.coords()) <= b.radius));
        }
        let finer = cover_greedy(&g, &s, 0.3, &Metric::Qn).unwrap();
        assert!(finer.len() >= cover.len());
    }

    #[test]
    fn ball_measure_extremes() {
        let g = h3();
        let s = sample_box(&g, &g.identity(), 1.0, 500, 1).unwrap();
        let far = [50.0, 0.0, 0.0];
        assert_eq!(ball_measure(&g, &s, &far, 1.0, &Metric::Qn).unwrap(), 0.0);
        let all = ball_measure(&g, &s, &[0.0; 3], 100.0, &Metric::Qn).unwrap();
        assert!((all - s.total_weight()).abs() < 1e-12);
        assert!((s.total_weight() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn h3_unit_ball_volume_is_pi() {
        // vol{a² + b² + |c| ≤ 1} = ∫ 2(1 - ρ²) over the unit disc = π
        let v = unit_ball_volume(&h3(), 200_000, 2);
        assert!((v - core::f64::consts::PI).abs() < 0.03, "{v}");
    }

    #[test]
    fn dim_needs_four_rungs() {
        let g = h3();
        let s = sample_box(&g, &g.identity(), 1.0, 100, 1).unwrap();
        assert!(dim_estimate(&g, &s, &[0.5, 0.4, 0.3], &Metric::Qn).is_err());
    }

    #[test]
    fn membership_sample_weights_match_volume() {
        let g = h3();
        let set = MembershipSet::new(|x: &[f64]| x[0] > 0.0, g.identity(), 1.0, 9);
        let s = set.sample(&g, 4000).unwrap();
        assert!((s.total_weight() - 4.0).abs() < 0.2);
        assert!(s.points().iter().all(|p| p.coords()[0] > 0.0));
    }

    #[test]
    fn grid_order_matches_brute_force() {
        let g = h3();
        let s = sample_box(&g, &g.identity(), 1.0, 1500, 6).unwrap();
        let fast = FarthestPointOrder::build_qn(&g, &s, 0.2, &[0.5, 0.3]);
        let slow = FarthestPointOrder::build_brute(&g, &s, &Metric::Qn, 0.2, &[0.5, 0.3]).unwrap();
        assert_eq!(fast.order, slow.order);
        assert_eq!(fast.radii, slow.radii);
        assert_eq!(fast.cell_masses, slow.cell_masses);
        let total: f64 = fast.cell_masses[1].iter().sum();
        assert!((total - s.total_weight()).abs() < 1e-9);
    }

    #[test]
    fn ball_measure_is_left_invariant() {
        let g = h3();
        let s = sample_box(&g, &g.identity(), 1.0, 800, 2).unwrap();
        let h = GroupPoint::new(vec![0.7, -1.3, 2.1]);
        let t = s.translated(&g, &h).unwrap();
        let x = [0.1, 0.2, -0.1];
        let hx = g.mul(h.coords(), &x);
        for r in [0.2, 0.5, 0.9] {
            let (m0, c0) = ball_stats(&g, &s, &x, r, &Metric::Qn).unwrap();
            let (m1, c1) = ball_stats(&g, &t, &hx, r, &Metric::Qn).unwrap();
            assert_eq!(c0, c1);
            assert!((m0 - m1).abs() < 1e-12);
        }
    }

    #[test]
    fn density_vanishes_off_the_set() {
        let g = h3();
        let s = sample_box(&g, &g.identity(), 1.0, 2000, 3).unwrap();
        let d = density(&g, &s, &[5.0, 0.0, 0.0], 4.0, &[0.5, 0.3], &Metric::Qn).unwrap();
        assert_eq!(d.upper, 0.0);
    }

    #[test]
    fn half_space_has_half_the_ball() {
        let g = h3();
        let full = sample_box(&g, &g.identity(), 1.0, 40_000, 5).unwrap();
        let half = MembershipSet::new(|x: &[f64]| x[0] >= 0.0, g.identity(), 1.0, 5)
            .sample(&g, 20_000)
            .unwrap();
        for r in [0.6, 0.45, 0.3] {
            let a = ball_measure(&g, &half, &[0.0; 3], r, &Metric::Qn).unwrap();
            let b = ball_measure(&g, &full, &[0.0; 3], r, &Metric::Qn).unwrap();
            assert!((a / b - 0.5).abs() < 0.06, "r={r}: {}", a / b);
        }
    }

    #[test]
    fn repeated_point_is_a_degenerate_fit() {
        let g = h3();
        let s = SetSample::new(
            vec![GroupPoint::new(vec![0.0; 3]); 200],
            None,
            SampleMeta::default(),
        )
        .unwrap();
        assert!(matches!(
            dim_estimate(&g, &s, &[0.4, 0.3, 0.2, 0.1], &Metric::Qn),
            Err(Error::DegenerateFit(_))
        ));
    }
}
