//! The group law against an independent matrix model, and algebraic
//! properties of the law, dilations and projections.

use carnot_core::cones::{cone_contains, project_perp, project_v, ConeSpec, SubspaceSpec};
use carnot_core::metrics::{dist_qn, qnorm_coords, Metric};
use carnot_core::{BuiltinGroup, CarnotAlgebra, GroupPoint};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `ad` of the algebra extended by the grading derivation `D` (which acts on
/// layer `i` by `i`). The extension makes `ad` faithful: for central `X`,
/// `[X, D] = -deg(X) X ≠ 0`. Index `n` is `D`.
fn ad_extended(alg: &CarnotAlgebra, x: &[f64]) -> DMatrix<f64> {
    let n = alg.dim();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = alg.bracket(x, &e).unwrap();
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    // [x, D] = -Σ deg(i) x_i e_i
    for i in 0..n {
        m[(i, n)] = -(alg.grading().layer_of(i) as f64) * x[i];
    }
    m
}

fn nilpotent_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.nrows();
    let mut out = DMatrix::identity(k, k);
    let mut term = DMatrix::identity(k, k);
    for j in 1..=k {
        term = &term * a / j as f64;
        out += &term;
    }
    out
}

fn unipotent_log(u: &DMatrix<f64>) -> DMatrix<f64> {
    let k = u.nrows();
    let e = u - DMatrix::identity(k, k);
    let mut out = DMatrix::zeros(k, k);
    let mut pow = DMatrix::identity(k, k);
    for j in 1..=k {
        pow = &pow * &e;
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        out += &pow * (sign / j as f64);
    }
    out
}

/// `log(exp X · exp Y)` computed in the faithful representation.
fn oracle_product(alg: &CarnotAlgebra, x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = alg.dim();
    let z =
        unipotent_log(&(nilpotent_exp(&ad_extended(alg, x)) * nilpotent_exp(&ad_extended(alg, y))));
    (0..n)
        .map(|i| -z[(i, n)] / alg.grading().layer_of(i) as f64)
        .collect()
}

fn points(alg: &CarnotAlgebra, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 3.0 - 1.5
    };
    (0..count)
        .map(|_| (0..alg.dim()).map(|_| next()).collect())
        .collect()
}

#[test]
fn group_law_matches_the_matrix_model_on_every_builtin() {
    for b in BuiltinGroup::catalogue() {
        let alg = b.build().unwrap();
        let pts = points(&alg, 60, alg.dim() as u64);
        for pair in pts.chunks(2) {
            let got = alg.mul(&pair[0], &pair[1]);
            let want = oracle_product(&alg, &pair[0], &pair[1]);
            let err = got
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(
                err < 1e-9,
                "{b}: error {err:e} at {:?} · {:?}",
                pair[0],
                pair[1]
            );
        }
    }
}

#[test]
fn oracle_reproduces_the_heisenberg_formula() {
    let h = BuiltinGroup::Heisenberg(1).build().unwrap();
    let z = oracle_product(&h, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
    assert!((z[2] - 0.5).abs() < 1e-14 && (z[0] - 1.0).abs() < 1e-14);
}

fn h3() -> CarnotAlgebra {
    BuiltinGroup::Heisenberg(1).build().unwrap()
}

fn coords(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn law_is_associative_on_engel(x in coords(4), y in coords(4), z in coords(4)) {
        let e = BuiltinGroup::Engel.build().unwrap();
        let l = e.mul(&e.mul(&x, &y), &z);
        let r = e.mul(&x, &e.mul(&y, &z));
        for (a, b) in l.iter().zip(&r) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn bracket_is_antisymmetric(x in coords(5), y in coords(5)) {
        let g = BuiltinGroup::FreeNilpotent { rank: 2, step: 3 }.build().unwrap();
        let a = g.bracket(&x, &y).unwrap();
        let b = g.bracket(&y, &x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p + q).abs() < 1e-12);
        }
    }

    #[test]
    fn quasi_norm_is_homogeneous(x in coords(3), t in 0.05f64..20.0) {
        let h = h3();
        let lhs = qnorm_coords(&h, &h.dilated(t, &x));
        let rhs = t * qnorm_coords(&h, &x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn dilations_are_automorphisms(x in coords(4), y in coords(4), t in 0.1f64..5.0) {
        let e = BuiltinGroup::Engel.build().unwrap();
        let l = e.dilated(t, &e.mul(&x, &y));
        let r = e.mul(&e.dilated(t, &x), &e.dilated(t, &y));
        for (a, b) in l.iter().zip(&r) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn projection_is_idempotent(x in coords(3), b in coords(3), vertical in any::<bool>()) {
        let h = h3();
        let idx: &[usize] = if vertical { &[1, 2] } else { &[0] };
        let spec = SubspaceSpec::coordinate(&h, idx, GroupPoint::new(b)).unwrap();
        let p = project_v(&h, &GroupPoint::new(x), &spec).unwrap();
        let pp = project_v(&h, &p, &spec).unwrap();
        for (a, c) in p.coords().iter().zip(pp.coords()) {
            prop_assert!((a - c).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn cones_are_dilation_covariant(x in coords(3), t in 0.1f64..10.0, slope in 0.1f64..0.9) {
        let h = h3();
        let spec = SubspaceSpec::coordinate(&h, &[1, 2], h.identity()).unwrap();
        let cone = ConeSpec::new(&h, h.identity(), spec.clone(), slope, None).unwrap();
        let p = GroupPoint::new(x);
        // Skip points whose membership is decided by rounding.
        let q = project_perp(&h, &p, &spec).unwrap();
        let margin = dist_qn(&h, &[0.0; 3], q.coords()) - slope * dist_qn(&h, &[0.0; 3], p.coords());
        prop_assume!(margin.abs() > 1e-9);
        let dp = GroupPoint::new(h.dilated(t, p.coords()));
        prop_assert_eq!(
            cone_contains(&h, &cone, &p, &Metric::Qn).unwrap(),
            cone_contains(&h, &cone, &dp, &Metric::Qn).unwrap()
        );
    }
}
