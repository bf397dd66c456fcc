//! The acceptance battery: fifteen numbered checks over the whole stack.
//!
//! Each check is a pure function of the suite configuration, so results are
//! reproducible and independent of the worker count. `quick` shrinks sample
//! sizes and panels; verdicts are still computed but tolerances are not
//! expected to hold at that size.

use anyhow::{anyhow, Result};
use carnot_core::cones::{
    approximability_test, aptan_test, holder_exponent, saptan_test, ExponentMode, PairGenerator,
    SubspaceSpec, TesterOptions,
};
use carnot_core::levelset::{
    ahlfors_check, characteristic_locus, coarea_check, horizontal_gradient, kernel_subgroup,
    level_sample_with, tangent_approx_report, CoareaOptions, Region, ScalarField, TangentOptions,
    KERNEL_SCALES,
};
use carnot_core::measure::{dim_estimate, sample_box, sample_coordinate_subspace};
use carnot_core::metrics::{self, ball_box_check, cc_upper, CcOptions, Metric};
use carnot_core::pansu::{
    self, approx_residual, area_check, jacobian, pansu_diff, AreaOptions, CarnotMap,
};
use carnot_core::rng;
use carnot_core::{BuiltinGroup, CarnotAlgebra, GroupPoint, MembershipSet};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::report::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub quick: bool,
}

impl SuiteConfig {
    /// Seed for stream `k`; the default seed 0 gives `k` itself.
    fn seed(&self, k: u64) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k
    }

    fn size(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    /// One-line account of the measured values.
    pub summary: String,
    pub details: Value,
    /// Set when the check could not be evaluated.
    pub error: Option<String>,
}

impl CriterionResult {
    pub fn to_json(&self) -> Value {
        json!({
            "id": self.id,
            "title": self.title,
            "pass": self.pass,
            "summary": self.summary,
            "details": self.details,
            "error": self.error,
        })
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {}: {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.summary
        )
    }
}

type Check = fn(&SuiteConfig) -> Result<(bool, String, Value)>;

pub const CRITERIA: [(u32, &str, Check); 15] = [
    (1, "group arithmetic oracle", c1_arithmetic),
    (2, "homogeneity of the quasi-norm", c2_homogeneity),
    (3, "ball-box constant", c3_ball_box),
    (4, "cc solver", c4_cc),
    (5, "non-Lipschitz projection", c5_holder),
    (6, "dimension estimates", c6_dimension),
    (7, "Pansu differential", c7_pansu),
    (8, "Jacobian and area formula", c8_area),
    (9, "kernel subgroups", c9_kernel),
    (10, "characteristic locus", c10_characteristic),
    (11, "coarea constancy", c11_coarea),
    (12, "Ahlfors regularity", c12_ahlfors),
    (13, "tangent and approximability testers", c13_testers),
    (14, "strong approximate tangent cones", c14_saptan),
    (15, "determinism", c15_determinism),
];

pub fn run_criterion(id: u32, cfg: &SuiteConfig) -> CriterionResult {
    let Some(&(id, title, check)) = CRITERIA.iter().find(|c| c.0 == id) else {
        return CriterionResult {
            id,
            title: "unknown",
            pass: false,
            summary: String::new(),
            details: Value::Null,
            error: Some(format!("no criterion {id}")),
        };
    };
    match check(cfg) {
        Ok((pass, summary, details)) => CriterionResult {
            id,
            title,
            pass,
            summary,
            details,
            error: None,
        },
        Err(e) => CriterionResult {
            id,
            title,
            pass: false,
            summary: format!("error: {e:#}"),
            details: Value::Null,
            error: Some(format!("{e:#}")),
        },
    }
}

/// Runs the given criteria in parallel; results come back in the order of
/// `ids`.
pub fn run_suite(cfg: &SuiteConfig, ids: &[u32]) -> Vec<CriterionResult> {
    ids.par_iter().map(|&id| run_criterion(id, cfg)).collect()
}

pub fn all_ids() -> Vec<u32> {
    CRITERIA.iter().map(|c| c.0).collect()
}

pub fn summary_json(cfg: &SuiteConfig, results: &[CriterionResult]) -> Value {
    json!({
        "quick": cfg.quick,
        "passed": results.iter().filter(|r| r.pass).count(),
        "total": results.len(),
        "criteria": results.iter().map(CriterionResult::to_json).collect::<Vec<_>>(),
    })
}

pub fn summary_table(results: &[CriterionResult]) -> Table {
    let mut t = Table::new("criteria", &["id", "pass", "title"]);
    for r in results {
        t.push(vec![
            r.id.to_string(),
            r.pass.to_string(),
            r.title.to_string(),
        ]);
    }
    t
}

fn h3() -> CarnotAlgebra {
    BuiltinGroup::Heisenberg(1).build().expect("builtin")
}

fn span(alg: &CarnotAlgebra, idx: &[usize]) -> Result<SubspaceSpec> {
    Ok(SubspaceSpec::coordinate(alg, idx, alg.identity())?)
}

fn uniform_point(r: &mut rng::Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng::uniform(r, lo, hi)).collect()
}

/// `(a, b, c) ↦ [[1, a, c + ab/2], [0, 1, b], [0, 0, 1]]`.
fn unipotent(p: &[f64]) -> [[f64; 3]; 3] {
    [
        [1.0, p[0], p[2] + 0.5 * p[0] * p[1]],
        [0.0, 1.0, p[1]],
        [0.0, 0.0, 1.0],
    ]
}

fn matmul3(x: &[[f64; 3]; 3], y: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| x[i][k] * y[k][j]).sum();
        }
    }
    out
}

fn c1_arithmetic(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let n = cfg.size(10_000, 1_000);
    let mut r = rng::seeded(cfg.seed(1));
    let (mut bch_err, mut conj_err) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let p = uniform_point(&mut r, 3, -2.0, 2.0);
        let q = uniform_point(&mut r, 3, -2.0, 2.0);
        let m = matmul3(&unipotent(&p), &unipotent(&q));
        let oracle = [m[0][1], m[1][2], m[0][2] - 0.5 * m[0][1] * m[1][2]];
        let prod = g.mul(&p, &q);
        for i in 0..3 {
            bch_err = bch_err.max((prod[i] - oracle[i]).abs());
        }
        let (a, b, c) = (p[0], p[1], p[2]);
        let (al, be, ga) = (q[0], q[1], q[2]);
        let formula = [al - a, be - b, ga - c + 0.5 * (al * b - a * be)];
        let rel = g.relative(&p, &q);
        for i in 0..3 {
            conj_err = conj_err.max((rel[i] - formula[i]).abs());
        }
    }
    let pass = bch_err < 1e-12 && conj_err < 1e-12;
    Ok((
        pass,
        format!("{n} pairs, max product error {bch_err:.2e}, max relative-position error {conj_err:.2e}"),
        json!({ "pairs": n, "max_product_error": bch_err, "max_relative_error": conj_err, "tolerance": 1e-12 }),
    ))
}

fn c2_homogeneity(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let ts = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
    let n = cfg.size(500, 50);
    let mut worst = 0.0f64;
    let mut per_group = Vec::new();
    for b in BuiltinGroup::catalogue() {
        let g = b.build()?;
        let mut r = rng::derived(cfg.seed(2), per_group.len() as u64);
        let mut gw = 0.0f64;
        for _ in 0..n {
            let p = uniform_point(&mut r, g.dim(), -3.0, 3.0);
            let q = metrics::qnorm_coords(&g, &p);
            for &t in &ts {
                let lhs = metrics::qnorm_coords(&g, &g.dilated(t, &p));
                let err = (lhs - t * q).abs() / (t * q).max(1.0);
                gw = gw.max(err);
            }
        }
        worst = worst.max(gw);
        per_group.push(json!({ "group": b.to_string(), "max_error": gw }));
    }
    Ok((
        worst < 1e-12,
        format!(
            "{} built-ins, t in 0.1..10, max relative error {worst:.2e}",
            per_group.len()
        ),
        json!({ "groups": per_group, "max_error": worst, "tolerance": 1e-12 }),
    ))
}

fn c3_ball_box(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let n = cfg.size(20_000, 2_000);
    let qn = ball_box_check(&g, &Metric::Qn, &[1.0, 0.01], n, cfg.seed(3))?;
    let n_cc = cfg.size(40, 8);
    let cc_metric = Metric::Cc(CcOptions {
        seed: cfg.seed(3),
        ..CcOptions::default()
    });
    let cc = ball_box_check(&g, &cc_metric, &[1.0, 0.01], n_cc, cfg.seed(3) ^ 0xcc)?;
    let ok = |x: f64| (0.8..=1.25).contains(&x);
    let pass = qn.constant.is_finite()
        && ok(qn.scale_ratio())
        && cc.constant.is_finite()
        && ok(cc.scale_ratio());
    let rungs = |rep: &metrics::BallBoxReport| {
        rep.rungs
            .iter()
            .map(
                |r| json!({ "r": r.r, "constant": r.constant, "outer": r.outer, "inner": r.inner }),
            )
            .collect::<Vec<_>>()
    };
    Ok((
        pass,
        format!(
            "qn: C = {:.4}, C(1)/C(0.01) = {:.4}; cc: C = {:.4}, ratio = {:.4}",
            qn.constant,
            qn.scale_ratio(),
            cc.constant,
            cc.scale_ratio()
        ),
        json!({
            "qn": { "samples": n, "constant": qn.constant, "scale_ratio": qn.scale_ratio(), "rungs": rungs(&qn) },
            "cc": { "samples": n_cc, "constant": cc.constant, "scale_ratio": cc.scale_ratio(), "rungs": rungs(&cc) },
            "band": [0.8, 1.25],
        }),
    ))
}

fn c4_cc(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let opts = CcOptions {
        seed: cfg.seed(4),
        ..CcOptions::default()
    };
    let e = g.identity();
    let unit = cc_upper(&g, &e, &GroupPoint::new(vec![1.0, 0.0, 0.0]), &opts)?;
    let unit_ok = (unit.upper - 1.0).abs() <= 1e-3;

    let mut r = rng::seeded(cfg.seed(4));
    let n_pairs = cfg.size(10, 3);
    let mut sandwich_ok = true;
    let mut pairs = Vec::new();
    for _ in 0..n_pairs {
        let p = GroupPoint::new(uniform_point(&mut r, 3, -1.0, 1.0));
        let q = GroupPoint::new(uniform_point(&mut r, 3, -1.0, 1.0));
        let est = cc_upper(&g, &p, &q, &opts)?;
        sandwich_ok &= est.lower <= est.upper;
        pairs.push(json!({ "lower": est.lower, "upper": est.upper }));
    }

    let n_cov = cfg.size(3, 1);
    let mut worst = 0.0f64;
    let mut cov = Vec::new();
    for _ in 0..n_cov {
        let q = uniform_point(&mut r, 3, -1.0, 1.0);
        let base = cc_upper(&g, &e, &GroupPoint::new(q.clone()), &opts)?.upper;
        for t in [0.5, 2.0] {
            let d = cc_upper(&g, &e, &GroupPoint::new(g.dilated(t, &q)), &opts)?.upper;
            let ratio = d / (t * base);
            worst = worst.max((ratio - 1.0).abs());
            cov.push(json!({ "t": t, "ratio": ratio }));
        }
    }
    let cov_ok = worst <= 0.02;
    Ok((
        unit_ok && sandwich_ok && cov_ok,
        format!(
            "cc(0,(1,0,0)) = {:.6}; lower <= upper on {n_pairs} pairs: {sandwich_ok}; max dilation deviation {:.4}",
            unit.upper, worst
        ),
        json!({
            "unit_segment": { "upper": unit.upper, "lower": unit.lower, "mismatch": unit.mismatch },
            "sandwich": pairs,
            "dilation_covariance": cov,
            "max_dilation_deviation": worst,
        }),
    ))
}

fn c5_holder(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let n = 400;
    let g = h3();
    let vertical = holder_exponent(
        &g,
        &span(&g, &[2])?,
        PairGenerator::Horizontal,
        n,
        cfg.seed(5),
        &Metric::Qn,
    )?;
    let r3 = BuiltinGroup::Abelian(3).build()?;
    let control = holder_exponent(
        &r3,
        &span(&r3, &[2])?,
        PairGenerator::Horizontal,
        n,
        cfg.seed(5),
        &Metric::Qn,
    )?;
    let pass = (vertical.exponent - 0.5).abs() <= 0.1 && (control.exponent - 1.0).abs() <= 0.05;
    Ok((
        pass,
        format!(
            "vertical projection exponent {:.4} (r2 {:.3}); abelian control {:.4}",
            vertical.exponent, vertical.r2, control.exponent
        ),
        json!({
            "vertical": { "exponent": vertical.exponent, "r2": vertical.r2, "pairs": vertical.pairs },
            "abelian": { "exponent": control.exponent, "r2": control.r2, "pairs": control.pairs },
        }),
    ))
}

type WeightFn = dyn Fn(&[f64]) -> f64 + Sync;

fn ladder(start: f64, factor: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start * factor.powi(i as i32)).collect()
}

fn c6_dimension(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let r2 = BuiltinGroup::Abelian(2).build()?;
    let q = Metric::Qn;
    let n_box = cfg.size(400_000, 50_000);
    let n_plane = cfg.size(40_000, 10_000);
    let n_sq = cfg.size(100_000, 20_000);
    let boxed = sample_box(&g, &g.identity(), 1.0, n_box, cfg.seed(61))?;
    let plane = sample_coordinate_subspace(&g, &g.identity(), &[1, 2], 1.0, n_plane, cfg.seed(62))?;
    let square = sample_box(&r2, &r2.identity(), 1.0, n_sq, cfg.seed(63))?;
    let cases = [
        (
            "box",
            4.0,
            0.3,
            dim_estimate(&g, &boxed, &ladder(0.9, 0.93, 12), &q)?,
        ),
        (
            "plane",
            3.0,
            0.3,
            dim_estimate(&g, &plane, &ladder(0.6, 0.8, 8), &q)?,
        ),
        (
            "square",
            2.0,
            0.2,
            dim_estimate(&r2, &square, &ladder(0.5, 0.85, 20), &q)?,
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut details = Vec::new();
    for (name, target, tol, est) in &cases {
        let ok = (est.dimension - target).abs() <= *tol;
        pass &= ok;
        parts.push(format!(
            "{name} {:.3} (target {target} ± {tol})",
            est.dimension
        ));
        details.push(json!({
            "set": name,
            "dimension": est.dimension,
            "r2": est.r2,
            "target": target,
            "tolerance": tol,
            "windowed": est.windowed,
            "rungs": est.counts.iter().zip(&est.used).map(|(c, u)| json!({
                "delta": c.0, "count": c.1, "window_count": c.2, "used": u,
            })).collect::<Vec<_>>(),
        }));
    }
    Ok((pass, parts.join("; "), json!({ "estimates": details })))
}

fn c7_pansu(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let panel = cfg.size(20, 5);
    let aut = CarnotMap::standard_automorphism(&g)?;
    let shear = CarnotMap::shear(&g)?;
    let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 6.0]));
    let mut r = rng::seeded(cfg.seed(7));
    let vs: Vec<Vec<f64>> = (0..10)
        .map(|_| metrics::random_unit_point(&g, &mut r))
        .collect();
    let (mut matrix_err, mut residual, mut min_decay) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..panel {
        let x = GroupPoint::new(metrics::random_box_point(&g, 1.0, &mut r));
        let d = pansu_diff(&aut, &x, &pansu::DEFAULT_SCALES)?;
        matrix_err = matrix_err.max((d.hom.matrix() - &expect).amax());
        residual = residual.max(d.hom.residual());
        let ds = pansu_diff(&shear, &x, &pansu::DEFAULT_SCALES)?;
        let res = approx_residual(&shear, &x, &ds.hom, &vs, &[1e-1, 1e-2, 1e-3])?;
        min_decay = min_decay.min(res.min_decay_per_decade());
    }
    let pass = matrix_err < 1e-6 && residual < 1e-8 && min_decay >= 2.0;
    Ok((
        pass,
        format!(
            "{panel} points: automorphism error {matrix_err:.2e}, homomorphism residual {residual:.2e}, \
             smallest residual decay per decade {min_decay:.1}"
        ),
        json!({
            "panel": panel,
            "automorphism_matrix_error": matrix_err,
            "homomorphism_residual": residual,
            "min_decay_per_decade": min_decay,
        }),
    ))
}

fn c8_area(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let x = GroupPoint::new(vec![0.3, -0.2, 0.1]);
    let t_ladder = [0.5, 0.35, 0.25];
    let mc = cfg.size(20_000, 4000);
    let dil = CarnotMap::dilation(&g, 2.0)?;
    let aut = CarnotMap::standard_automorphism(&g)?;
    let j_dil = jacobian(&dil, &x, &t_ladder, mc, cfg.seed(81))?;
    let j_aut = jacobian(&aut, &x, &t_ladder, mc, cfg.seed(82))?;
    let mut pass =
        (j_dil.value / 16.0 - 1.0).abs() <= 0.1 && (j_aut.value / 36.0 - 1.0).abs() <= 0.1;
    let e = MembershipSet::boxed(&g, g.identity(), 1.0, cfg.seed(83));
    let opts = AreaOptions {
        n_source: cfg.size(2000, 400),
        mc_samples: cfg.size(20_000, 4000),
        seed: cfg.seed(84),
    };
    let mut areas = Vec::new();
    for f in [CarnotMap::identity(&g), dil, aut] {
        let rep = area_check(&f, &e, &opts)?;
        pass &= (rep.ratio - 1.0).abs() <= 0.15;
        areas.push((f.name().to_string(), rep));
    }
    let summary = format!(
        "J(dilate 2) = {:.3}, J(automorphism) = {:.3}; area ratios {}",
        j_dil.value,
        j_aut.value,
        areas
            .iter()
            .map(|(n, r)| format!("{n} {:.3}", r.ratio))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok((
        pass,
        summary,
        json!({
            "jacobian_dilation": { "value": j_dil.value, "expected": 16.0, "ratios": j_dil.ratios },
            "jacobian_automorphism": { "value": j_aut.value, "expected": 36.0, "ratios": j_aut.ratios },
            "area": areas.iter().map(|(n, r)| json!({
                "map": n, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio,
                "nondifferentiable_fraction": r.nondifferentiable_fraction,
            })).collect::<Vec<_>>(),
        }),
    ))
}

/// The horizontal vector of a kernel, which is graded with one horizontal
/// direction on H³.
fn horizontal_kernel_direction(k: &SubspaceSpec) -> Option<[f64; 2]> {
    k.orthonormal_basis()
        .iter()
        .find(|v| v[2].abs() < 1e-9 && v[0].hypot(v[1]) > 0.5)
        .map(|v| [v[0], v[1]])
}

/// `|sin|` of the angle between `h` and the direction `(den, num)`.
fn sin_to(h: [f64; 2], num: f64, den: f64) -> f64 {
    (h[0] * num - h[1] * den).abs() / (h[0].hypot(h[1]) * num.hypot(den))
}

fn c9_kernel(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let q = ScalarField::quasi_sphere(&g)?;
    let k = kernel_subgroup(&q, &GroupPoint::new(vec![1.0, 0.0, 0.0]), &KERNEL_SCALES)?;
    // Largest principal angle to span{Y, Z}: the X-components of an
    // orthonormal basis.
    let angle = k
        .orthonormal_basis()
        .iter()
        .map(|v| v[0] * v[0])
        .sum::<f64>()
        .sqrt()
        .asin();
    let at_x_ok = k.dim() == 2 && angle < 1e-3;

    let panel = cfg.size(20, 5);
    let mut r = rng::seeded(cfg.seed(9));
    let (mut literal, mut corrected) = (0.0f64, 0.0f64);
    let mut rows = Vec::new();
    for _ in 0..panel {
        let p = uniform_point(&mut r, 3, -1.0, 1.0);
        let x = g.dilated(1.0 / q.eval(&p), &p);
        let k = kernel_subgroup(&q, &GroupPoint::new(x.clone()), &KERNEL_SCALES)?;
        let h = horizontal_kernel_direction(&k)
            .ok_or_else(|| anyhow!("kernel at {x:?} has no horizontal direction"))?;
        let (a, b, c) = (x[0], x[1], x[2]);
        let lit = sin_to(
            h,
            c * b - a.powi(3) - a * b * b,
            c * a + a * a * b + b.powi(3),
        );
        let cor = sin_to(
            h,
            c * b / 4.0 - a.powi(3) - a * b * b,
            c * a / 4.0 + a * a * b + b.powi(3),
        );
        literal = literal.max(lit);
        corrected = corrected.max(cor);
        rows.push(json!({ "point": x, "direction": h, "literal_sin": lit, "corrected_sin": cor }));
    }
    let pass = at_x_ok && literal < 1e-6;
    Ok((
        pass,
        format!(
            "angle to span{{Y,Z}} at (1,0,0) {angle:.2e}; {panel} generic points: literal kernel formula off by \
             {literal:.2e}, formula with c/4 off by {corrected:.2e}"
        ),
        json!({
            "kernel_at_x": { "grading": k.induced_grading(), "angle": angle, "pass": at_x_ok },
            "literal_max_sin": literal,
            "corrected_max_sin": corrected,
            "corrected_pass": corrected < 1e-6,
            "panel": rows,
        }),
    ))
}

fn c10_characteristic(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let q = ScalarField::quasi_sphere(&g)?;
    let region = Region::new(&g, g.identity(), 1.3)?;
    let n = cfg.size(3000, 800);
    let locus = characteristic_locus(&q, 1.0, &region, n, cfg.seed(10), 1e-8)?;
    let mut found = Vec::new();
    let mut ok = locus.len() == 2;
    for p in &locus {
        let (_, norm) = horizontal_gradient(&q, p)?;
        let c = p.coords();
        let near_pole = c[0].abs() < 1e-6 && c[1].abs() < 1e-6 && (c[2].abs() - 1.0).abs() < 1e-6;
        ok &= near_pole && norm < 1e-8;
        found.push(json!({ "point": c, "gradient_norm": norm }));
    }
    let a = ScalarField::coordinate(&g, 0)?;
    let flat = characteristic_locus(&a, 0.0, &region, n, cfg.seed(10), 1e-8)?;
    ok &= flat.is_empty();
    let max_norm = locus
        .iter()
        .filter_map(|p| horizontal_gradient(&q, p).ok())
        .map(|(_, n)| n)
        .fold(0.0, f64::max);
    Ok((
        ok,
        format!(
            "quasi-sphere: {} characteristic points {:?}, max |grad_H| {max_norm:.1e}; f = a: {} found",
            locus.len(),
            locus.iter().map(|p| p.coords().iter().map(|c| (c * 1e6).round() / 1e6).collect::<Vec<_>>()).collect::<Vec<_>>(),
            flat.len()
        ),
        json!({ "quasi_sphere": found, "coordinate_a": flat.len() }),
    ))
}

fn c11_coarea(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let region = Region::new(&g, g.identity(), 1.2)?;
    let opts = CoareaOptions {
        n_volume: cfg.size(200_000, 40_000),
        n_levels: cfg.size(40, 20),
        n_per_level: cfg.size(2000, 400),
        seed: cfg.seed(11),
    };
    let a = ScalarField::coordinate(&g, 0)?;
    let gq = g.clone();
    let u_box = |x: &[f64]| {
        if x.iter().all(|v| v.abs() < 1.0) {
            1.0
        } else {
            0.0
        }
    };
    let u_ball = move |x: &[f64]| {
        if metrics::qnorm_coords(&gq, x) < 0.9 {
            1.0
        } else {
            0.0
        }
    };
    let u_gauss = |x: &[f64]| (-(x.iter().map(|v| v * v).sum::<f64>())).exp();
    let weights: [(&str, &WeightFn); 3] = [("box", &u_box), ("ball", &u_ball), ("gauss", &u_gauss)];
    let mut ratios = Vec::new();
    let mut details = Vec::new();
    for (name, u) in weights {
        let rep = coarea_check(&a, u, &region, &opts)?;
        ratios.push(rep.ratio);
        details.push(json!({ "field": "a", "weight": name, "lhs": rep.lhs, "rhs": rep.rhs, "ratio": rep.ratio }));
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = hi / lo - 1.0;

    let qs = ScalarField::quasi_sphere(&g)?;
    let qf = qs.clone();
    let u_shell = move |x: &[f64]| {
        let v = qf.eval(x);
        if v > 0.5 && v < 1.0 {
            1.0
        } else {
            0.0
        }
    };
    let rq = coarea_check(&qs, &u_shell, &region, &opts)?;
    details.push(json!({ "field": "quasi_sphere", "weight": "shell", "lhs": rq.lhs, "rhs": rq.rhs, "ratio": rq.ratio }));
    let cross = (rq.ratio / mean - 1.0).abs();
    Ok((
        spread <= 0.05 && cross <= 0.10,
        format!(
            "f = a ratios {} (spread {:.3}); quasi-norm field ratio {:.4} (off by {:.3})",
            ratios
                .iter()
                .map(|r| format!("{r:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            spread,
            rq.ratio,
            cross
        ),
        json!({ "runs": details, "spread": spread, "cross_field_deviation": cross }),
    ))
}

fn c12_ahlfors(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let q = ScalarField::quasi_sphere(&g)?;
    let p = [0.6, 0.5, 0.3];
    let x = GroupPoint::new(g.dilated(1.0 / q.eval(&p), &p));
    let region = Region::new(&g, x.clone(), 0.5)?;
    let n = cfg.size(40_000, 8_000);
    let level = level_sample_with(&q, 1.0, &region, n, cfg.seed(12), 0.05)?;
    let ladder = [0.2, 0.15, 0.1, 0.07];
    let mut reps = Vec::new();
    for r in [0.1, 0.2] {
        reps.push((r, ahlfors_check(&level, &x, r, &ladder)?));
    }
    let exps_ok = reps.iter().all(|(_, a)| (a.exponent - 3.0).abs() <= 0.3);
    let (c0, c1) = (reps[0].1.constant, reps[1].1.constant);
    let stable =
        c0.is_finite() && c1.is_finite() && c0 > 0.0 && c1 > 0.0 && c0.max(c1) / c0.min(c1) <= 2.0;
    Ok((
        exps_ok && stable,
        format!(
            "exponents {:.3} (r = 0.1), {:.3} (r = 0.2); constants {:.3}, {:.3}",
            reps[0].1.exponent, reps[1].1.exponent, c0, c1
        ),
        json!({
            "point": x.coords(),
            "sample": n,
            "radii": reps.iter().map(|(r, a)| json!({
                "r": r, "exponent": a.exponent, "r2": a.r2, "constant": a.constant,
                "panel": a.panel, "truncated": a.truncated,
            })).collect::<Vec<_>>(),
        }),
    ))
}

fn c13_testers(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let opts = TesterOptions {
        seed: cfg.seed(13),
        ..TesterOptions::default()
    };
    let plane = sample_coordinate_subspace(
        &g,
        &g.identity(),
        &[1, 2],
        1.0,
        cfg.size(20_000, 8_000),
        cfg.seed(131),
    )?;
    let own = span(&g, &[1, 2])?;
    let other = span(&g, &[0, 2])?;
    let e = g.identity();
    let ap_own = approximability_test(&g, &plane, &e, &own, 0.5, &[0.6, 0.45, 0.3], &opts)?;
    let ap_other = approximability_test(&g, &plane, &e, &other, 0.5, &[0.6, 0.45, 0.3], &opts)?;
    let at_own = aptan_test(&g, &plane, &e, &own, &[0.3, 0.6], &[0.6, 0.4, 0.25], &opts)?;
    let at_other = aptan_test(&g, &plane, &e, &other, &[0.3], &[0.6, 0.4, 0.25], &opts)?;
    let self_ok = ap_own.pass && ap_own.outside_max == 0.0 && at_own.applicable && at_own.pass;
    let negatives_ok = !ap_other.pass && !at_other.pass;

    let q = ScalarField::quasi_sphere(&g)?;
    let panel = cfg.size(20, 5);
    let mut r = rng::seeded(cfg.seed(13));
    let mut passes = 0;
    let mut rows = Vec::new();
    for i in 0..panel {
        let p = uniform_point(&mut r, 3, -1.0, 1.0);
        let x = GroupPoint::new(g.dilated(1.0 / q.eval(&p), &p));
        let mut topts = TangentOptions {
            seed: cfg.seed(i as u64),
            ..TangentOptions::default()
        };
        if cfg.quick {
            topts.n_local = 1500;
            topts.n_tester = 5000;
        }
        let rep = tangent_approx_report(&q, 1.0, &x, &topts)?;
        passes += rep.pass as usize;
        rows.push(json!({
            "point": x.coords(),
            "pass": rep.pass,
            "generic": rep.generic,
            "cond1": rep.cond1.as_ref().map(|c| c.pass),
            "cond2": rep.cond2.as_ref().map(|c| c.pass),
            "approximability": rep.approximability.as_ref().map(|c| c.pass),
            "aptan": rep.aptan.as_ref().map(|c| c.pass),
        }));
    }
    let fraction = passes as f64 / panel as f64;
    Ok((
        self_ok && negatives_ok && fraction >= 0.9,
        format!(
            "self-tests pass: {self_ok}; transverse subgroup rejected: {negatives_ok}; \
             quasi-sphere panel {passes}/{panel}"
        ),
        json!({
            "self": {
                "approximability": { "pass": ap_own.pass, "theta_min": ap_own.theta_min, "outside_max": ap_own.outside_max },
                "aptan": { "pass": at_own.pass, "series": at_own.series.iter().map(|s| json!({ "s": s.s, "ratios": s.ratios })).collect::<Vec<_>>() },
            },
            "transverse": {
                "approximability": { "pass": ap_other.pass, "theta_min": ap_other.theta_min, "outside_max": ap_other.outside_max },
                "aptan": { "pass": at_other.pass, "series": at_other.series.iter().map(|s| json!({ "s": s.s, "ratios": s.ratios })).collect::<Vec<_>>() },
            },
            "panel": rows,
            "panel_fraction": fraction,
            "threshold": 0.9,
        }),
    ))
}

fn c14_saptan(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let g = h3();
    let line = sample_coordinate_subspace(
        &g,
        &g.identity(),
        &[0],
        1.0,
        cfg.size(4000, 1000),
        cfg.seed(14),
    )?;
    let opts = TesterOptions {
        seed: cfg.seed(14),
        ..TesterOptions::default()
    };
    let v = span(&g, &[0])?;
    let probes = cfg.size(50_000, 5_000);
    let mut pass = true;
    let mut rows = Vec::new();
    let mut violations = 0;
    for s in [0.1, 0.2] {
        let rep = saptan_test(
            &g,
            &line,
            &g.identity(),
            &v,
            s,
            0.5,
            &[0.5, 0.25, 0.1],
            ExponentMode::KDepthN,
            probes,
            &opts,
        )?;
        // r < 1 and k ≤ k·depth(N) ≤ k·depth(M), so the ratios are ordered.
        let ordered = rep
            .rungs
            .iter()
            .all(|r| r.r >= 1.0 || (r.k <= r.k_depth_n && r.k_depth_n <= r.k_depth_m));
        pass &= rep.disjoint && ordered && rep.pass;
        violations += rep.violations;
        rows.push(json!({
            "s": s,
            "disjoint": rep.disjoint,
            "violations": rep.violations,
            "probes": rep.probes,
            "ordered": ordered,
            "pass": rep.pass,
            "depth_n": rep.depth_n,
            "depth_m": rep.depth_m,
            "rungs": rep.rungs.iter().map(|r| json!({
                "r": r.r, "mass": r.mass,
                "k": r.k, "k-depth-n": r.k_depth_n, "k-depth-m": r.k_depth_m,
            })).collect::<Vec<_>>(),
        }));
    }
    Ok((
        pass,
        format!("s in {{0.1, 0.2}}: {violations} double-cone points among {} probes each; modes ordered", probes),
        json!({ "runs": rows }),
    ))
}

/// Determinism inside one process: a cheap subset of the battery run on one
/// worker and on two must serialize identically.
fn c15_determinism(cfg: &SuiteConfig) -> Result<(bool, String, Value)> {
    let ids = [1, 2, 5, 10];
    let sub = SuiteConfig {
        quick: true,
        ..*cfg
    };
    let run = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()?;
        let res = pool.install(|| run_suite(&sub, &ids));
        Ok(serde_json::to_string(&summary_json(&sub, &res))?)
    };
    let a = run(1)?;
    let b = run(2)?;
    let same = a == b;
    Ok((
        same,
        format!("criteria {ids:?} rerun on 1 and 2 workers: identical output {same}"),
        json!({ "ids": ids, "bytes": a.len(), "identical": same }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_are_numbered_in_order() {
        assert_eq!(all_ids(), (1..=15).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_criterion_is_an_error_entry() {
        let r = run_criterion(
            99,
            &SuiteConfig {
                seed: 0,
                quick: true,
            },
        );
        assert!(!r.pass && r.error.is_some());
    }

    #[test]
    fn unipotent_product_is_the_group_law() {
        let g = h3();
        let p = [0.5, -1.0, 2.0];
        let q = [1.5, 0.25, -0.5];
        let m = matmul3(&unipotent(&p), &unipotent(&q));
        let back = [m[0][1], m[1][2], m[0][2] - 0.5 * m[0][1] * m[1][2]];
        let prod = g.mul(&p, &q);
        for i in 0..3 {
            assert!((prod[i] - back[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cheap_criteria_pass_in_quick_mode() {
        let cfg = SuiteConfig {
            seed: 0,
            quick: true,
        };
        for id in [1, 2] {
            let r = run_criterion(id, &cfg);
            assert!(r.pass, "{}", r.line());
        }
    }
}
