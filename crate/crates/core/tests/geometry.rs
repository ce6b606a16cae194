mod common;

use common::*;
use num::Signed;
use polylab::geometry::{self, HPolytope, VertexSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bounded_instance(rng: &mut ChaCha8Rng, dim: usize) -> IntPolytope {
    loop {
        let n = rng.gen_range(dim + 2..=12);
        let p = random_int_polytope(rng, dim, n);
        if geometry::is_bounded(&p.to_float()).unwrap() {
            return p;
        }
    }
}

#[test]
fn vertices_match_exact_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..20 {
        let dim = 3 + i % 2;
        let p = bounded_instance(&mut rng, dim);
        let exact = brute_vertices(&p);
        let got = geometry::enumerate_vertices(&p.to_float()).unwrap();
        assert_eq!(got.len(), exact.len(), "instance {i}");
        for v in &exact {
            let vf = to_f64(v);
            let best = got
                .points
                .iter()
                .map(|g| max_abs_diff(g, &vf))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "instance {i}: vertex {vf:?} missing ({best})");
        }
        let dual = geometry::enumerate_vertices_dual(&p.to_float()).unwrap();
        assert_eq!(dual.len(), exact.len(), "instance {i}, dual route");
    }
}

#[test]
fn facet_counts_match_exact_incidence() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..20 {
        let dim = 3 + i % 2;
        let p = bounded_instance(&mut rng, dim);
        let exact_v = brute_vertices(&p);
        let expected = brute_facet_count(&p, &exact_v);
        let reduced = geometry::remove_redundant(&p.to_float()).unwrap();
        assert_eq!(reduced.len(), expected, "instance {i}");
        let hull = geometry::convex_hull(&VertexSet::new(dim, exact_v.iter().map(|v| to_f64(v)).collect()).unwrap()).unwrap();
        assert_eq!(hull.len(), expected, "instance {i}, hull");
    }
}

#[test]
fn hull_of_random_points_matches_exact_supporting_planes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..15 {
        let dim = 3 + i % 2;
        let n = rng.gen_range(dim + 1..=14);
        // Integer points give exact coplanarities, which the merge step must handle.
        let pts: Vec<Vec<i64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-3..=3)).collect())
            .collect();
        let exact: Vec<Vec<Q>> = pts.iter().map(|p| p.iter().map(|&v| q(v)).collect()).collect();
        let refs: Vec<&Vec<Q>> = exact.iter().collect();
        if exact_affine_rank(&refs) < dim {
            continue;
        }
        let expected = brute_hull_facet_count(&exact, dim);
        let vs = VertexSet::new(dim, pts.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect()).unwrap();
        let hull = geometry::convex_hull(&vs).unwrap();
        assert_eq!(hull.len(), expected, "instance {i}: {pts:?}");
        for p in &vs.points {
            assert!(hull.max_violation(p) <= 1e-9);
        }
    }
}

#[test]
fn volume_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..4 {
        let p = bounded_instance(&mut rng, 3).to_float();
        let v = geometry::enumerate_vertices(&p).unwrap();
        let lo: Vec<f64> = (0..3).map(|j| v.points.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..3).map(|j| v.points.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let n = 200_000;
        let mut hits = 0;
        for _ in 0..n {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
            if p.contains(&x) {
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        let mc = frac * box_vol;
        let se = box_vol * (frac * (1.0 - frac) / n as f64).sqrt();
        let exact = geometry::polytope_volume(&p).unwrap();
        assert!((mc - exact).abs() < 5.0 * se + 1e-12, "mc {mc} exact {exact} se {se}");
    }
}

#[test]
fn exact_membership_agrees_with_float_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let p = bounded_instance(&mut rng, 4);
    let hull = geometry::convex_hull(&geometry::enumerate_vertices(&p.to_float()).unwrap()).unwrap();
    let mut disagreements = 0;
    for _ in 0..20_000 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-12.0..12.0)).collect();
        let xq = from_f64_exact(&x);
        let inside = (0..p.a.len()).all(|k| !p.residual(k, &xq).is_positive());
        if inside != hull.contains(&x) {
            disagreements += 1;
        }
    }
    assert_eq!(disagreements, 0);
}

fn small_box() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-5.0..5.0f64, 3), prop::collection::vec(0.1..4.0f64, 3))
        .prop_map(|(lo, w)| (lo.clone(), lo.iter().zip(&w).map(|(a, b)| a + b).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hull_contains_its_points(pts in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 5..30)) {
        let vs = VertexSet::new(3, pts).unwrap();
        if let Ok(h) = geometry::convex_hull(&vs) {
            for p in &vs.points {
                prop_assert!(h.max_violation(p) <= 1e-8);
            }
            let v = geometry::volume(&vs).unwrap();
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn box_volume_and_vertices((lo, hi) in small_box()) {
        let b = HPolytope::bounding_box(&lo, &hi);
        let v = geometry::enumerate_vertices(&b).unwrap();
        prop_assert_eq!(v.len(), 8);
        let expected: f64 = lo.iter().zip(&hi).map(|(a, c)| c - a).product();
        prop_assert!((geometry::polytope_volume(&b).unwrap() - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn interior_distance_is_slack((lo, hi) in small_box(), t in prop::collection::vec(0.0..1.0f64, 3)) {
        let b = HPolytope::bounding_box(&lo, &hi);
        let x: Vec<f64> = lo.iter().zip(&hi).zip(&t).map(|((a, c), s)| a + s * (c - a)).collect();
        let slack = lo.iter().zip(&hi).zip(&x)
            .map(|((a, c), xi)| (xi - a).min(c - xi))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((geometry::boundary_distance(&b, &x) - slack).abs() <= 1e-9);
    }
}
