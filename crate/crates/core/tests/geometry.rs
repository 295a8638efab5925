mod common;

use banff_core::geometry::{assign_detections_chunked, Location};
use banff_core::{point_in_polygon, Point2, Polygon32, PolygonWithHoles, SpatialIndex};
use common::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn containment_matches_exact_oracle() {
    let mut r = rng(101);
    let mut boundary = 0;
    for k in 0..50 {
        let grid = k % 2 == 0;
        let poly = &random_polygon(&mut r, 400.0, grid);
        let inst = vec![banff_core::Instance::new("p", banff_core::StructureClass::Glomerulus, poly.clone())];
        for d in random_detections(&mut r, 10_000, &inst, 400.0, grid) {
            let want = oracle_contains(poly, &d.point);
            assert_eq!(point_in_polygon(&d.point, poly), want, "polygon {k}, point {:?}", d.point);
            if poly.locate(&d.point) == Location::Boundary {
                boundary += 1;
            }
        }
    }
    assert!(boundary > 1000, "only {boundary} boundary points exercised");
}

#[test]
fn f32_containment_matches_oracle_on_its_image() {
    let mut r = rng(102);
    for k in 0..20 {
        let poly = random_polygon(&mut r, 400.0, k % 2 == 0);
        let cast = |ring: &banff_core::Ring<f64>| -> Vec<Point2<f32>> {
            ring.vertices().iter().map(|p| Point2::new(p.x as f32, p.y as f32)).collect()
        };
        let Ok(p32) = Polygon32::from_rings(cast(poly.exterior()), poly.holes().iter().map(cast).collect()) else {
            continue;
        };
        let widen = |ring: &banff_core::Ring<f32>| -> Vec<P> {
            ring.vertices().iter().map(|p| P::new(p.x as f64, p.y as f64)).collect()
        };
        let p64 = PolygonWithHoles::from_rings(widen(p32.exterior()), p32.holes().iter().map(widen).collect()).unwrap();
        for _ in 0..2000 {
            let q = Point2::new(r.random_range(0.0f32..400.0), r.random_range(0.0f32..400.0));
            let q64 = P::new(q.x as f64, q.y as f64);
            assert_eq!(point_in_polygon(&q, &p32), oracle_contains(&p64, &q64));
        }
        for v in p32.exterior().vertices() {
            assert!(point_in_polygon(v, &p32));
        }
    }
}

fn exact_shoelace(vs: &[P]) -> BigRational {
    let n = vs.len();
    let mut twice = BigRational::zero();
    for i in 0..n {
        let (a, b) = (&vs[i], &vs[(i + 1) % n]);
        twice += exact(a.x) * exact(b.y) - exact(b.x) * exact(a.y);
    }
    (twice / BigRational::from_integer(BigInt::from(2))).abs()
}

#[test]
fn shoelace_matches_exact_area() {
    let mut r = rng(103);
    for _ in 0..200 {
        let poly = banff_core::Ring::new(random_polygon(&mut r, 1000.0, false).exterior().vertices().to_vec()).unwrap();
        let want = exact_shoelace(poly.vertices()).to_f64().unwrap();
        let got = poly.area();
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn twenty_gon_area() {
    let mut r = rng(104);
    for _ in 0..100 {
        let c = P::new(500.0, 500.0);
        let mut angles: Vec<f64> = (0..20).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let vs: Vec<P> = angles
            .iter()
            .map(|t| {
                let rad = r.random_range(50.0..300.0);
                P::new(c.x + rad * t.cos(), c.y + rad * t.sin())
            })
            .collect();
        let Ok(poly) = PolygonWithHoles::from_rings(vs.clone(), vec![]) else { continue };
        let want = exact_shoelace(&vs).to_f64().unwrap();
        assert!((poly.area() - want).abs() <= 1e-9 * want);
    }
}

#[test]
fn hole_area_is_subtracted() {
    let sq = |x0: f64, y0: f64, s: f64| vec![P::new(x0, y0), P::new(x0 + s, y0), P::new(x0 + s, y0 + s), P::new(x0, y0 + s)];
    let poly = PolygonWithHoles::from_rings(sq(0.0, 0.0, 10.0), vec![sq(1.0, 1.0, 2.0), sq(5.0, 5.0, 3.0)]).unwrap();
    assert_eq!(poly.area(), 100.0 - 4.0 - 9.0);
}

#[test]
fn index_query_equals_linear_scan() {
    let mut r = rng(105);
    let boxes: Vec<_> = (0..1000)
        .map(|_| {
            let (x, y) = (r.random_range(0.0..1000.0f64).round(), r.random_range(0.0..1000.0f64).round());
            let (w, h) = (r.random_range(0.0..60.0f64).round(), r.random_range(0.0..60.0f64).round());
            banff_core::BBox::new(P::new(x, y), P::new(x + w, y + h)).unwrap()
        })
        .collect();
    let index = SpatialIndex::from_boxes(&boxes);
    for _ in 0..10_000 {
        let q = P::new(r.random_range(-10.0..1070.0f64).round(), r.random_range(-10.0..1070.0f64).round());
        let want: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].contains(&q)).collect();
        assert_eq!(index.query_point(&q), want);
    }
}

#[test]
fn assignment_is_chunk_size_invariant() {
    let mut r = rng(106);
    let inst = random_instances(&mut r, 200, 2000.0, true);
    let dets = random_detections(&mut r, 20_000, &inst, 2000.0, true);
    let index = SpatialIndex::build(&inst);
    let base = assign_detections_chunked(&dets, &inst, &index, 4096).unwrap();
    assert_eq!(base, oracle_assign(&dets, &inst));
    for chunk in [1, 7, 1000, 100_000] {
        assert_eq!(assign_detections_chunked(&dets, &inst, &index, chunk).unwrap(), base);
    }
    let total: usize = base.per_instance.values().map(|a| a.count).sum();
    assert!(total + base.unassigned.len() >= dets.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_scene_agrees_with_oracle(seed in any::<u64>(), grid in any::<bool>()) {
        let mut r = rng(seed);
        let inst = random_instances(&mut r, 20, 500.0, grid);
        let dets = random_detections(&mut r, 500, &inst, 500.0, grid);
        let got = banff_core::assign_detections(&dets, &inst, &SpatialIndex::build(&inst)).unwrap();
        prop_assert_eq!(got, oracle_assign(&dets, &inst));
    }

    #[test]
    fn integer_translation_preserves_containment(seed in any::<u64>(), dx in -10_000i32..10_000, dy in -10_000i32..10_000) {
        let mut r = rng(seed);
        let poly = random_polygon(&mut r, 300.0, true);
        let moved = poly.map_points(|p| Point2::new(p.x + dx as f64, p.y + dy as f64)).unwrap();
        for _ in 0..200 {
            let q = P::new(r.random_range(0..300) as f64, r.random_range(0..300) as f64);
            let q2 = P::new(q.x + dx as f64, q.y + dy as f64);
            prop_assert_eq!(point_in_polygon(&q, &poly), point_in_polygon(&q2, &moved));
        }
    }

    #[test]
    fn vertices_are_always_contained(seed in any::<u64>(), grid in any::<bool>()) {
        let mut r = rng(seed);
        let poly = random_polygon(&mut r, 300.0, grid);
        for ring in std::iter::once(poly.exterior()).chain(poly.holes()) {
            for v in ring.vertices() {
                prop_assert_eq!(poly.locate(v), Location::Boundary);
            }
        }
    }
}
