//! Command-line surface.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use carnot_core::cones::{
    self, approximability_test, aptan_test, cone_contains, saptan_test, subgroup_classify,
    tube_dist, ConeSpec, ExponentMode, SubspaceSpec, TesterOptions,
};
use carnot_core::levelset::{
    self, ahlfors_check, characteristic_locus, coarea_check, horizontal_gradient, level_sample,
    surface_density, tangent_approx_report, CoareaOptions, Region, TangentOptions,
};
use carnot_core::measure::{self, MembershipSet};
use carnot_core::metrics::{self, cc_upper, CcOptions, Metric};
use carnot_core::pansu::{self, area_check, jacobian, pansu_diff, AreaOptions};
use carnot_core::{CarnotAlgebra, GroupPoint};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::catalog::{field_by_name, map_by_name};
use crate::formats::{parse_basis, parse_point, parse_row, read_sample, resolve_group};
use crate::report::{Report, Table};
use crate::suite::{self, SuiteConfig};

#[derive(Debug, Parser)]
#[command(
    name = "carnot",
    version,
    about = "Carnot group arithmetic, metrics, measures and rectifiability testers"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Distance used by estimators and testers.
    #[arg(long, global = true, value_enum, default_value_t = MetricChoice::Qn)]
    pub metric: MetricChoice,
    /// JSON report path; CSV tables are written next to it. Stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "CARNOT_THREADS")]
    pub threads: Option<usize>,
    /// Record wall time in the report (makes reruns differ).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    Qn,
    Cc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistMethod {
    Qn,
    Box,
    Cc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelReport {
    Gradient,
    Characteristic,
    Ahlfors,
    Tangent,
    Coarea,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    K,
    KDepthN,
    KDepthM,
}

impl From<ModeChoice> for ExponentMode {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::K => ExponentMode::K,
            ModeChoice::KDepthN => ExponentMode::KDepthN,
            ModeChoice::KDepthM => ExponentMode::KDepthM,
        }
    }
}

/// Group source shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct GroupArg {
    /// Built-in name (heisenberg1, engel, abelian3, free_nilpotent(2,3), ..)
    /// or a JSON definition file.
    #[arg(long, default_value = "heisenberg1")]
    pub group: String,
}

#[derive(Debug, Clone, Args)]
pub struct SetArgs {
    #[command(flatten)]
    pub group: GroupArg,
    /// CSV sample, one point per row with an optional trailing weight.
    #[arg(long)]
    pub set: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a group definition.
    GroupCheck(GroupArg),
    /// Distance between two points.
    Dist {
        #[command(flatten)]
        group: GroupArg,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, value_enum, default_value_t = DistMethod::Qn)]
        method: DistMethod,
    },
    /// Greedy-cover Hausdorff measure estimates over a δ ladder.
    Hausdorff {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        s: f64,
        /// Comma-separated δ ladder.
        #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
        deltas: String,
    },
    /// Box-counting dimension of a sample.
    Dim {
        #[command(flatten)]
        set: SetArgs,
        /// Comma-separated δ ladder; geometric from 0.8 by 0.85 when absent.
        #[arg(long)]
        deltas: Option<String>,
    },
    /// Upper and lower s-densities of a sample at a point.
    Density {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        point: String,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value = "0.4,0.3,0.2,0.1")]
        radii: String,
    },
    /// Pansu differential of a named map.
    Pansu {
        #[command(flatten)]
        group: GroupArg,
        #[arg(long)]
        map: String,
        #[arg(long)]
        point: String,
        #[arg(long, default_value = "1e-1,1e-2,1e-3,1e-4")]
        scales: String,
    },
    /// Jacobian of a named map from image-ball volumes.
    Jacobian {
        #[command(flatten)]
        group: GroupArg,
        #[arg(long)]
        map: String,
        #[arg(long)]
        point: String,
        #[arg(long, default_value = "0.5,0.35,0.25")]
        radii: String,
        #[arg(long, default_value_t = 20_000)]
        mc_samples: usize,
    },
    /// Both sides of the area formula on a box.
    AreaCheck {
        #[command(flatten)]
        group: GroupArg,
        #[arg(long)]
        map: String,
        /// Centre of the box E (identity when absent).
        #[arg(long)]
        center: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 2000)]
        n_source: usize,
        #[arg(long, default_value_t = 20_000)]
        mc_samples: usize,
    },
    /// Cone membership of sample points and tube distances to the subgroup.
    ConeTest {
        #[command(flatten)]
        set: SetArgs,
        /// Basis rows separated by `;`.
        #[arg(long)]
        subspace: String,
        #[arg(long)]
        apex: Option<String>,
        #[arg(long)]
        slope: f64,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Approximability inequalities over a radius ladder.
    ApproxTest {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        subspace: String,
        #[arg(long)]
        point: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value = "0.6,0.45,0.3")]
        radii: String,
    },
    /// Approximate tangent cone decay test.
    Aptan {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        subspace: String,
        #[arg(long)]
        point: Option<String>,
        /// Comma-separated cone slopes.
        #[arg(long, default_value = "0.3,0.6")]
        slope: String,
        #[arg(long, default_value = "0.6,0.4,0.25")]
        radii: String,
    },
    /// Strong approximate tangent cone test.
    Saptan {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        subspace: String,
        #[arg(long)]
        point: Option<String>,
        #[arg(long, default_value_t = 0.2)]
        slope: f64,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long, default_value = "0.5,0.25,0.1")]
        radii: String,
        #[arg(long, value_enum, default_value_t = ModeChoice::KDepthN)]
        exponent_mode: ModeChoice,
        #[arg(long, default_value_t = 5000)]
        probes: usize,
    },
    /// Level-set reports for a named field.
    Levelset {
        #[command(flatten)]
        group: GroupArg,
        #[arg(long)]
        field: String,
        #[arg(long, default_value_t = 1.0)]
        level: f64,
        /// Base point; required for gradient, ahlfors and tangent.
        #[arg(long)]
        point: Option<String>,
        #[arg(long, value_enum)]
        report: LevelReport,
        /// Region half-width for sampling reports.
        #[arg(long, default_value_t = 1.3)]
        radius: f64,
        /// Sample size for sampling reports.
        #[arg(long, default_value_t = 3000)]
        n: usize,
    },
    /// The acceptance battery.
    Suite {
        /// Smaller samples and panels.
        #[arg(long)]
        quick: bool,
        /// Run only these criteria (comma-separated ids).
        #[arg(long)]
        only: Option<String>,
    },
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn ladder_arg(s: &str) -> Result<Vec<f64>> {
    let v = parse_row(s)?;
    if v.is_empty() || v.iter().any(|x| x.is_nan() || *x <= 0.0) {
        bail!("ladder `{s}` must be nonempty and positive");
    }
    Ok(v)
}

fn metric_of(g: &Global) -> Metric {
    match g.metric {
        MetricChoice::Qn => Metric::Qn,
        MetricChoice::Cc => Metric::Cc(CcOptions {
            seed: g.seed,
            ..CcOptions::default()
        }),
    }
}

fn metric_name(g: &Global) -> &'static str {
    match g.metric {
        MetricChoice::Qn => "qn",
        MetricChoice::Cc => "cc",
    }
}

fn point_or_identity(alg: &CarnotAlgebra, p: &Option<String>) -> Result<GroupPoint> {
    match p {
        Some(s) => parse_point(alg, s),
        None => Ok(alg.identity()),
    }
}

fn subspace(alg: &CarnotAlgebra, basis: &str, base: GroupPoint) -> Result<SubspaceSpec> {
    Ok(SubspaceSpec::new(alg, parse_basis(alg, basis)?, base)?)
}

fn execute(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.global.threads {
        // Fails only if a pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let start = Instant::now();
    let g = &cli.global;
    let (mut report, code) = dispatch(g, cli.command)?;
    if g.timing {
        report.wall_time = Some(start.elapsed());
    }
    report.emit(g.out.as_deref())?;
    Ok(code)
}

fn tester_options(g: &Global) -> TesterOptions {
    TesterOptions {
        metric: metric_of(g),
        seed: g.seed,
        ..TesterOptions::default()
    }
}

fn dispatch(g: &Global, command: Command) -> Result<(Report, i32)> {
    let metric = metric_of(g);
    let mname = metric_name(g);
    match command {
        Command::GroupCheck(ga) => {
            let alg = resolve_group(&ga.group)?;
            let v = alg.validate();
            let mut r = Report::new("group-check", Some(&alg), g.seed, mname);
            r.result = json!({
                "passed": v.passed(),
                "dimension": alg.dim(),
                "layers": alg.grading().layer_dims(),
                "homogeneous_dimension": alg.homogeneous_dimension(),
                "checks": v.checks.iter().map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail })).collect::<Vec<_>>(),
            });
            let code = if v.passed() { 0 } else { 1 };
            Ok((r, code))
        }
        Command::Dist {
            group,
            from,
            to,
            method,
        } => {
            let alg = resolve_group(&group.group)?;
            let p = parse_point(&alg, &from)?;
            let q = parse_point(&alg, &to)?;
            let mut r = Report::new("dist", Some(&alg), g.seed, mname);
            r.result = match method {
                DistMethod::Qn => {
                    let d = metrics::d_qn(&alg, &p, &q)?;
                    json!({ "method": "qn", "upper": d, "lower": d, "iterations": 0 })
                }
                DistMethod::Box => {
                    let d = metrics::box_gauge_coords(&alg, &alg.relative(p.coords(), q.coords()));
                    json!({ "method": "box", "upper": d, "lower": d, "iterations": 0 })
                }
                DistMethod::Cc => {
                    let opts = CcOptions {
                        seed: g.seed,
                        ..CcOptions::default()
                    };
                    let est = cc_upper(&alg, &p, &q, &opts)?;
                    let mut t = Table::new("path", &["segment", "control"]);
                    for (i, u) in est.path.iter().enumerate() {
                        t.push(vec![
                            i.to_string(),
                            u.iter()
                                .map(|x| x.to_string())
                                .collect::<Vec<_>>()
                                .join(" "),
                        ]);
                    }
                    r.tables.push(t);
                    json!({
                        "method": "cc",
                        "upper": est.upper,
                        "lower": est.lower,
                        "iterations": est.iterations,
                        "converged": est.converged,
                        "mismatch": est.mismatch,
                    })
                }
            };
            Ok((r, 0))
        }
        Command::Hausdorff { set, s, deltas } => {
            let alg = resolve_group(&set.group.group)?;
            let e = read_sample(&set.set, alg.dim())?;
            let ds = ladder_arg(&deltas)?;
            let est = measure::hausdorff_estimate(&alg, &e, s, &ds, &metric)?;
            let mut r = Report::new("hausdorff", Some(&alg), g.seed, mname);
            let mut t = Table::new("ladder", &["delta", "estimate"]);
            for (d, h) in &est {
                t.push_f64(&[*d, *h]);
            }
            r.tables.push(t);
            r.result = json!({
                "s": s,
                "points": e.len(),
                "ladder": est.iter().map(|(d, h)| json!({ "delta": d, "estimate": h })).collect::<Vec<_>>(),
            });
            Ok((r, 0))
        }
        Command::Dim { set, deltas } => {
            let alg = resolve_group(&set.group.group)?;
            let e = read_sample(&set.set, alg.dim())?;
            let ds = match deltas {
                Some(s) => ladder_arg(&s)?,
                None => (0..6).map(|i| 0.8 * 0.85f64.powi(i)).collect(),
            };
            let est = measure::dim_estimate(&alg, &e, &ds, &metric)?;
            let mut r = Report::new("dim", Some(&alg), g.seed, mname);
            let mut t = Table::new("ladder", &["delta", "count", "window_count", "used"]);
            for ((d, c, w), u) in est.counts.iter().zip(&est.used) {
                t.push(vec![
                    d.to_string(),
                    c.to_string(),
                    w.to_string(),
                    u.to_string(),
                ]);
            }
            r.tables.push(t);
            r.result = json!({
                "dimension": est.dimension,
                "r2": est.r2,
                "points": e.len(),
                "windowed": est.windowed,
            });
            Ok((r, 0))
        }
        Command::Density {
            set,
            point,
            s,
            radii,
        } => {
            let alg = resolve_group(&set.group.group)?;
            let e = read_sample(&set.set, alg.dim())?;
            let x = parse_point(&alg, &point)?;
            let est = measure::density(&alg, &e, x.coords(), s, &ladder_arg(&radii)?, &metric)?;
            let mut r = Report::new("density", Some(&alg), g.seed, mname);
            let mut t = Table::new("ladder", &["r", "ratio", "count"]);
            for (rr, v, c) in &est.ratios {
                t.push(vec![rr.to_string(), v.to_string(), c.to_string()]);
            }
            r.tables.push(t);
            r.result = json!({ "s": s, "upper": est.upper, "lower": est.lower, "truncated": est.truncated });
            Ok((r, 0))
        }
        Command::Pansu {
            group,
            map,
            point,
            scales,
        } => {
            let alg = resolve_group(&group.group)?;
            let f = map_by_name(&alg, &map)?;
            let x = parse_point(&alg, &point)?;
            let d = pansu_diff(&f, &x, &ladder_arg(&scales)?)?;
            let m = d.hom.matrix();
            let rows: Vec<Vec<f64>> = (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect();
            let mut r = Report::new("pansu", Some(&alg), g.seed, mname);
            r.result = json!({
                "map": f.name(),
                "point": x.coords(),
                "matrix": rows,
                "determinant": d.hom.determinant(),
                "differentiable": d.differentiable,
                "residual": d.hom.residual(),
                "bracket_residual": d.bracket_residual,
                "direct_discrepancy": d.direct_discrepancy,
                "off_block": d.off_block,
                "one_sided_gap": d.one_sided_gap,
            });
            Ok((r, 0))
        }
        Command::Jacobian {
            group,
            map,
            point,
            radii,
            mc_samples,
        } => {
            let alg = resolve_group(&group.group)?;
            let f = map_by_name(&alg, &map)?;
            let x = parse_point(&alg, &point)?;
            let est = jacobian(&f, &x, &ladder_arg(&radii)?, mc_samples, g.seed)?;
            let pointwise = pansu::pansu_jacobian(&f, &x).ok();
            let mut r = Report::new("jacobian", Some(&alg), g.seed, mname);
            let mut t = Table::new("ladder", &["t", "ratio"]);
            for (tt, v) in &est.ratios {
                t.push_f64(&[*tt, *v]);
            }
            r.tables.push(t);
            r.result =
                json!({ "map": f.name(), "value": est.value, "pansu_determinant": pointwise });
            Ok((r, 0))
        }
        Command::AreaCheck {
            group,
            map,
            center,
            radius,
            n_source,
            mc_samples,
        } => {
            let alg = resolve_group(&group.group)?;
            let f = map_by_name(&alg, &map)?;
            let c = point_or_identity(&alg, &center)?;
            let e = MembershipSet::boxed(&alg, c, radius, g.seed);
            let rep = area_check(
                &f,
                &e,
                &AreaOptions {
                    n_source,
                    mc_samples,
                    seed: g.seed,
                },
            )?;
            let mut r = Report::new("area-check", Some(&alg), g.seed, mname);
            r.result = json!({
                "map": f.name(),
                "lhs": rep.lhs,
                "rhs": rep.rhs,
                "ratio": rep.ratio,
                "nondifferentiable_fraction": rep.nondifferentiable_fraction,
            });
            Ok((r, 0))
        }
        Command::ConeTest {
            set,
            subspace: basis,
            apex,
            slope,
            radius,
        } => {
            let alg = resolve_group(&set.group.group)?;
            let e = read_sample(&set.set, alg.dim())?;
            let apex = point_or_identity(&alg, &apex)?;
            let spec = subspace(&alg, &basis, apex.clone())?;
            let cone = ConeSpec::new(&alg, apex, spec.clone(), slope, radius)?;
            let tubes = spec.is_graded_subgroup();
            let mut t = Table::new("points", &["index", "inside", "tube_dist"]);
            let mut inside = 0;
            for (i, p) in e.points().iter().enumerate() {
                let hit = cone_contains(&alg, &cone, p, &metric)?;
                inside += hit as usize;
                let td = if tubes {
                    tube_dist(&alg, p, &spec)?.to_string()
                } else {
                    String::new()
                };
                t.push(vec![i.to_string(), hit.to_string(), td]);
            }
            let cls = subgroup_classify(&alg, &spec)?;
            let mut r = Report::new("cone-test", Some(&alg), g.seed, mname);
            r.tables.push(t);
            r.result = json!({
                "points": e.len(),
                "inside": inside,
                "fraction_inside": inside as f64 / e.len() as f64,
                "slope": slope,
                "subspace": classification_json(&cls),
            });
            Ok((r, 0))
        }
        Command::ApproxTest {
            set,
            subspace: basis,
            point,
            alpha,
            radii,
        } => {
            let alg = resolve_group(&set.group.group)?;
            let e = read_sample(&set.set, alg.dim())?;
            let a = point_or_identity(&alg, &point)?;
            let spec = subspace(&alg, &basis, a.clone())?;
            let rep = approximability_test(
                &alg,
                &e,
                &a,
                &spec,
                alpha,
                &ladder_arg(&radii)?,
                &tester_options(g),
            )?;
            let mut r = Report::new("approx-test", Some(&alg), g.seed, mname);
            let mut t = Table::new("ladder", &["r", "theta", "outside", "points"]);
            for rung in &rep.rungs {
                t.push(vec![
                    rung.r.to_string(),
                    rung.theta.to_string(),
                    rung.outside.to_string(),
                    rung.points.to_string(),
                ]);
            }
            r.tables.push(t);
            r.result = json!({
                "pass": rep.pass,
                "k": rep.k,
                "alpha": rep.alpha,
                "theta_min": rep.theta_min,
                "outside_max": rep.outside_max,
                "truncated": rep.truncated,
            });
            Ok((r, 0))
        }
        Command::Aptan {
            set,
            subspace: basis,
            point,
            slope,
            radii,
        } => {
            let alg = resolve_group(&set.group.group)?;
            let e = read_sample(&set.set, alg.dim())?;
            let m = point_or_identity(&alg, &point)?;
            let spec = subspace(&alg, &basis, m.clone())?;
            let rep = aptan_test(
                &alg,
                &e,
                &m,
                &spec,
                &ladder_arg(&slope)?,
                &ladder_arg(&radii)?,
                &tester_options(g),
            )?;
            let mut r = Report::new("aptan", Some(&alg), g.seed, mname);
            let mut t = Table::new("ladder", &["s", "r", "ratio"]);
            for s in &rep.series {
                for (rr, v) in &s.ratios {
                    t.push_f64(&[s.s, *rr, *v]);
                }
            }
            r.tables.push(t);
            r.result = json!({
                "pass": rep.pass,
                "k": rep.k,
                "applicable": rep.applicable,
                "density_upper": rep.density_upper,
                "truncated": rep.truncated,
                "series": rep.series.iter().map(|s| json!({ "s": s.s, "decays": s.decays })).collect::<Vec<_>>(),
            });
            Ok((r, 0))
        }
        Command::Saptan {
            set,
            subspace: basis,
            point,
            slope,
            epsilon,
            radii,
            exponent_mode,
            probes,
        } => {
            let alg = resolve_group(&set.group.group)?;
            let e = read_sample(&set.set, alg.dim())?;
            let m = point_or_identity(&alg, &point)?;
            let spec = subspace(&alg, &basis, m.clone())?;
            let rep = saptan_test(
                &alg,
                &e,
                &m,
                &spec,
                slope,
                epsilon,
                &ladder_arg(&radii)?,
                exponent_mode.into(),
                probes,
                &tester_options(g),
            )?;
            let mut r = Report::new("saptan", Some(&alg), g.seed, mname);
            let mut t = Table::new("ladder", &["r", "mass", "k", "k_depth_n", "k_depth_m"]);
            for rung in &rep.rungs {
                t.push_f64(&[rung.r, rung.mass, rung.k, rung.k_depth_n, rung.k_depth_m]);
            }
            r.tables.push(t);
            r.result = json!({
                "pass": rep.pass,
                "k": rep.k,
                "depth_n": rep.depth_n,
                "depth_m": rep.depth_m,
                "exponent_mode": rep.mode.as_str(),
                "applicable": rep.applicable,
                "decays": rep.decays,
                "disjoint": rep.disjoint,
                "violations": rep.violations,
                "probes": rep.probes,
            });
            Ok((r, 0))
        }
        Command::Levelset {
            group,
            field,
            level,
            point,
            report,
            radius,
            n,
        } => {
            let alg = resolve_group(&group.group)?;
            let f = field_by_name(&alg, &field)?;
            let mut r = Report::new("levelset", Some(&alg), g.seed, mname);
            let need_point = || -> Result<GroupPoint> {
                let s = point.as_ref().context("this report needs --point")?;
                parse_point(&alg, s)
            };
            let body = match report {
                LevelReport::Gradient => {
                    let x = need_point()?;
                    let (v, norm) = horizontal_gradient(&f, &x)?;
                    let density = surface_density(&f, &x).ok();
                    json!({ "report": "gradient", "horizontal_gradient": v, "norm": norm, "surface_density": density })
                }
                LevelReport::Characteristic => {
                    let region = Region::new(&alg, point_or_identity(&alg, &point)?, radius)?;
                    let locus =
                        characteristic_locus(&f, level, &region, n, g.seed, levelset::GENERIC_TOL)?;
                    let mut t = Table::new("locus", &["point"]);
                    for p in &locus {
                        t.push(vec![p
                            .coords()
                            .iter()
                            .map(|c| c.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")]);
                    }
                    r.tables.push(t);
                    json!({
                        "report": "characteristic",
                        "count": locus.len(),
                        "points": locus.iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>(),
                    })
                }
                LevelReport::Ahlfors => {
                    let x = need_point()?;
                    let region = Region::new(&alg, x.clone(), radius.min(0.5))?;
                    let lvl = levelset::level_sample_with(&f, level, &region, n, g.seed, 0.05)?;
                    let s_ladder = [0.2, 0.15, 0.1, 0.07];
                    let mut t = Table::new("radii", &["r", "exponent", "constant", "r2"]);
                    let mut runs = Vec::new();
                    for rr in [0.1, 0.2] {
                        let a = ahlfors_check(&lvl, &x, rr, &s_ladder)?;
                        t.push_f64(&[rr, a.exponent, a.constant, a.r2]);
                        runs.push(json!({ "r": rr, "exponent": a.exponent, "constant": a.constant, "r2": a.r2, "panel": a.panel, "truncated": a.truncated }));
                    }
                    r.tables.push(t);
                    json!({ "report": "ahlfors", "runs": runs })
                }
                LevelReport::Tangent => {
                    let x = need_point()?;
                    let opts = TangentOptions {
                        seed: g.seed,
                        ..TangentOptions::default()
                    };
                    let rep = tangent_approx_report(&f, level, &x, &opts)?;
                    let mut t = Table::new("conditions", &["check", "s", "value", "count"]);
                    for (name, lr) in [("cond1", &rep.cond1), ("cond2", &rep.cond2)] {
                        if let Some(lr) = lr {
                            for (s, v, c) in &lr.rungs {
                                t.push(vec![
                                    name.into(),
                                    s.to_string(),
                                    v.to_string(),
                                    c.to_string(),
                                ]);
                            }
                        }
                    }
                    r.tables.push(t);
                    json!({
                        "report": "tangent",
                        "pass": rep.pass,
                        "applicable": rep.applicable,
                        "generic": rep.generic,
                        "kernel_grading": rep.kernel_grading,
                        "kernel_is_subalgebra": rep.kernel_is_subalgebra,
                        "cond1": rep.cond1.as_ref().map(|c| c.pass),
                        "cond2": rep.cond2.as_ref().map(|c| c.pass),
                        "approximability": rep.approximability.as_ref().map(|c| c.pass),
                        "aptan": rep.aptan.as_ref().map(|c| c.pass),
                    })
                }
                LevelReport::Coarea => {
                    let region = Region::new(&alg, point_or_identity(&alg, &point)?, radius)?;
                    let opts = CoareaOptions {
                        seed: g.seed,
                        ..CoareaOptions::default()
                    };
                    let rep = coarea_check(&f, &|_| 1.0, &region, &opts)?;
                    json!({ "report": "coarea", "weight": "1", "lhs": rep.lhs, "rhs": rep.rhs, "ratio": rep.ratio, "t_range": [rep.t_range.0, rep.t_range.1] })
                }
            };
            // A sample of the level set is handy for plotting.
            if matches!(report, LevelReport::Characteristic | LevelReport::Coarea)
                && g.out.is_some()
            {
                let region = Region::new(&alg, point_or_identity(&alg, &point)?, radius)?;
                if let Ok(ls) = level_sample(&f, level, &region, n.min(2000), g.seed) {
                    let mut t = Table::new("level_sample", &["point", "weight"]);
                    for i in 0..ls.sample.len() {
                        t.push(vec![
                            ls.sample
                                .point(i)
                                .iter()
                                .map(|c| c.to_string())
                                .collect::<Vec<_>>()
                                .join(" "),
                            ls.sample.weight(i).to_string(),
                        ]);
                    }
                    r.tables.push(t);
                }
            }
            r.result = json!({ "field": f.name(), "level": level, "body": body });
            Ok((r, 0))
        }
        Command::Suite { quick, only } => {
            let cfg = SuiteConfig {
                seed: g.seed,
                quick,
            };
            let ids = match only {
                Some(s) => s
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<u32>()
                            .with_context(|| format!("bad criterion id `{t}`"))
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => suite::all_ids(),
            };
            let results = suite::run_suite(&cfg, &ids);
            for res in &results {
                eprintln!("{}", res.line());
            }
            let mut r = Report::new("suite", None, g.seed, mname);
            r.tables.push(suite::summary_table(&results));
            r.result = suite::summary_json(&cfg, &results);
            let code = if results.iter().all(|x| x.pass) { 0 } else { 1 };
            Ok((r, code))
        }
    }
}

fn classification_json(c: &cones::Classification) -> Value {
    json!({
        "is_subalgebra": c.is_subalgebra,
        "induced_grading": c.induced_grading,
        "is_graded_subgroup": c.is_graded_subgroup,
        "lower_central_series": c.lower_central_series,
        "isomorphic_to": c.isomorphic_to,
        "graded_match": c.graded_match,
    })
}
