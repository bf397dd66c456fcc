//! Testers on a set that is rectifiable by construction: a sample of the
//! vertical plane `exp(span{Y, Z})` pushed forward by a graded automorphism
//! and a left translation.

use carnot_core::cones::{aptan_test, SubspaceSpec, TesterOptions};
use carnot_core::measure::{density, sample_coordinate_subspace, SampleMeta};
use carnot_core::metrics::Metric;
use carnot_core::pansu::{CarnotMap, GradedHom};
use carnot_core::{BuiltinGroup, CarnotAlgebra, GroupPoint, SetSample};
use nalgebra::DMatrix;

struct Pushed {
    alg: CarnotAlgebra,
    set: SetSample,
    /// Indices of sample points whose preimage lies well inside the plane
    /// patch.
    interior: Vec<usize>,
    /// Algebra of the image subgroup.
    tangent: Vec<Vec<f64>>,
}

fn pushed_plane(n: usize) -> Pushed {
    let alg = BuiltinGroup::Heisenberg(1).build().unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.1, 0.9]);
    let hom = GradedHom::from_horizontal(&alg, &alg, &a).unwrap();
    let phi = CarnotMap::compose(
        &CarnotMap::left_translation(&alg, &GroupPoint::new(vec![0.3, -0.2, 0.1])).unwrap(),
        &CarnotMap::graded(hom.clone()),
    )
    .unwrap();
    let plane = sample_coordinate_subspace(&alg, &alg.identity(), &[1, 2], 1.0, n, 7).unwrap();
    let points: Vec<GroupPoint> = plane
        .points()
        .iter()
        .map(|p| GroupPoint::new(phi.apply(p.coords())))
        .collect();
    let interior = plane
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.coords()[1].abs() < 0.4 && p.coords()[2].abs() < 0.4)
        .map(|(i, _)| i)
        .take(20)
        .collect();
    let tangent = vec![hom.apply(&[0.0, 1.0, 0.0]), hom.apply(&[0.0, 0.0, 1.0])];
    let set = SetSample::new(
        points,
        None,
        SampleMeta::new("pushed plane", Some(7), Some(3.0)),
    )
    .unwrap();
    Pushed {
        alg,
        set,
        interior,
        tangent,
    }
}

#[test]
fn aptan_passes_almost_everywhere_with_the_pushed_subgroup() {
    let p = pushed_plane(20_000);
    let opts = TesterOptions::default();
    let mut passed = 0;
    for &i in &p.interior {
        let m = p.set.points()[i].clone();
        let spec = SubspaceSpec::new(&p.alg, p.tangent.clone(), m.clone()).unwrap();
        let rep = aptan_test(
            &p.alg,
            &p.set,
            &m,
            &spec,
            &[0.3, 0.6],
            &[0.4, 0.25, 0.15],
            &opts,
        )
        .unwrap();
        passed += rep.pass as usize;
    }
    assert!(
        passed * 10 >= 9 * p.interior.len(),
        "{passed}/{}",
        p.interior.len()
    );
}

#[test]
fn upper_densities_are_nearly_constant() {
    let p = pushed_plane(40_000);
    let uppers: Vec<f64> = p
        .interior
        .iter()
        .map(|&i| {
            density(
                &p.alg,
                &p.set,
                p.set.point(i),
                3.0,
                &[0.3, 0.25, 0.2],
                &Metric::Qn,
            )
            .unwrap()
            .upper
        })
        .collect();
    let mean = uppers.iter().sum::<f64>() / uppers.len() as f64;
    let max = uppers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = uppers.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((max - min) / mean < 0.3, "{uppers:?}");
}
