//! Shared fixtures and brute-force oracles for the integration suites.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use banff_core::geometry::InstanceAssignment;
use banff_core::synth::{generate_scene, ClassSpec, SceneSpec};
use banff_core::{
    AssignmentTable, CellClass, Detection, Instance, Point2, PolygonWithHoles, Scene, StructureClass,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type P = Point2<f64>;

/// Exact rational value of a finite double.
pub fn exact(v: f64) -> BigRational {
    assert!(v.is_finite());
    if v == 0.0 {
        return BigRational::zero();
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let m = BigInt::from(sign) * BigInt::from(mantissa);
    if e >= 0 {
        BigRational::from_integer(m << e as usize)
    } else {
        BigRational::new(m, BigInt::from(1) << (-e) as usize)
    }
}

/// Sign of `(a - c) x (b - c)`, exact. A floating-point evaluation decides
/// when it is clearly away from zero; otherwise rationals settle it.
pub fn orient(a: &P, b: &P, c: &P) -> Ordering {
    let l = (a.x - c.x) * (b.y - c.y);
    let r = (a.y - c.y) * (b.x - c.x);
    let det = l - r;
    let bound = 1e-15 * (l.abs() + r.abs());
    if det.is_finite() && det.abs() > bound && bound.is_finite() {
        return det.partial_cmp(&0.0).unwrap();
    }
    let (ax, ay, bx, by, cx, cy) = (exact(a.x), exact(a.y), exact(b.x), exact(b.y), exact(c.x), exact(c.y));
    let d = (&ax - &cx) * (&by - &cy) - (&ay - &cy) * (&bx - &cx);
    if d.is_zero() {
        Ordering::Equal
    } else if d.is_positive() {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

fn on_closed_segment(a: &P, b: &P, p: &P) -> bool {
    p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
        && orient(a, b, p) == Ordering::Equal
}

/// Crossing-number test on a closed vertex list: `Some(true)` inside,
/// `Some(false)` outside, `None` on the boundary.
pub fn ring_side(ring: &[P], p: &P) -> Option<bool> {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (&ring[i], &ring[(i + 1) % n]);
        if on_closed_segment(a, b, p) {
            return None;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let o = orient(a, b, p);
            let upward = b.y > a.y;
            if (upward && o == Ordering::Greater) || (!upward && o == Ordering::Less) {
                inside = !inside;
            }
        }
    }
    Some(inside)
}

/// Boundary-inclusive containment in a polygon with holes.
pub fn oracle_contains(poly: &PolygonWithHoles<f64>, p: &P) -> bool {
    let b = poly.bbox();
    if p.x < b.min.x || p.x > b.max.x || p.y < b.min.y || p.y > b.max.y {
        return false;
    }
    match ring_side(poly.exterior().vertices(), p) {
        None => return true,
        Some(false) => return false,
        Some(true) => {}
    }
    for hole in poly.holes() {
        match ring_side(hole.vertices(), p) {
            None => return true,
            Some(true) => return false,
            Some(false) => {}
        }
    }
    true
}

/// All-pairs assignment with no index.
pub fn oracle_assign(dets: &[Detection<f64>], instances: &[Instance<f64>]) -> AssignmentTable {
    let mut per_instance: BTreeMap<String, InstanceAssignment> = instances
        .iter()
        .map(|i| (i.id.clone(), InstanceAssignment::default()))
        .collect();
    let mut unassigned = Vec::new();
    for d in dets {
        let mut hit = false;
        for inst in instances {
            if oracle_contains(&inst.polygon, &d.point) {
                per_instance.get_mut(&inst.id).unwrap().detection_ids.push(d.id.clone());
                hit = true;
            }
        }
        if !hit {
            unassigned.push(d.id.clone());
        }
    }
    for a in per_instance.values_mut() {
        a.detection_ids.sort();
        a.count = a.detection_ids.len();
    }
    unassigned.sort();
    AssignmentTable {
        per_instance,
        unassigned,
    }
}

fn star(rng: &mut ChaCha8Rng, c: P, r_lo: f64, r_hi: f64, n: usize, grid: bool) -> Vec<P> {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|t| {
            let r = rng.random_range(r_lo..r_hi);
            let (x, y) = (c.x + r * t.cos(), c.y + r * t.sin());
            if grid {
                P::new(x.round(), y.round())
            } else {
                P::new(x, y)
            }
        })
        .collect()
}

/// Random star-shaped instance, possibly with holes. Integer vertices when
/// `grid` is set, which puts many detections exactly on edges and vertices.
pub fn random_polygon(rng: &mut ChaCha8Rng, canvas: f64, grid: bool) -> PolygonWithHoles<f64> {
    loop {
        let r = rng.random_range(20.0..120.0);
        let c = P::new(rng.random_range(r..canvas - r), rng.random_range(r..canvas - r));
        let c = if grid { P::new(c.x.round(), c.y.round()) } else { c };
        let n = rng.random_range(3..24);
        let ext = star(rng, c, 0.6 * r, r, n, grid);
        let holes = match rng.random_range(0..3) {
            0 => vec![],
            1 => {
                let k = rng.random_range(3..10);
                vec![star(rng, c, 0.1 * r, 0.35 * r, k, grid)]
            }
            _ => {
                let off = 0.3 * r;
                let h1 = P::new(c.x - off, c.y);
                let h2 = P::new(c.x + off, c.y);
                let (h1, h2) = if grid {
                    (P::new(h1.x.round(), h1.y), P::new(h2.x.round(), h2.y))
                } else {
                    (h1, h2)
                };
                let (k1, k2) = (rng.random_range(3..8), rng.random_range(3..8));
                vec![star(rng, h1, 0.05 * r, 0.2 * r, k1, grid), star(rng, h2, 0.05 * r, 0.2 * r, k2, grid)]
            }
        };
        if let Ok(p) = PolygonWithHoles::from_rings(ext.clone(), holes) {
            return p;
        }
        if let Ok(p) = PolygonWithHoles::from_rings(ext, vec![]) {
            return p;
        }
    }
}

pub fn random_instances(rng: &mut ChaCha8Rng, n: usize, canvas: f64, grid: bool) -> Vec<Instance<f64>> {
    (0..n)
        .map(|k| {
            let class = match k % 3 {
                0 => StructureClass::Glomerulus,
                1 => StructureClass::PeritubularCapillary,
                _ => StructureClass::Artery,
            };
            Instance::new(format!("i{k:03}"), class, random_polygon(rng, canvas, grid))
        })
        .collect()
}

/// Detections mixing uniform points with points placed on vertices and edges.
pub fn random_detections(
    rng: &mut ChaCha8Rng,
    n: usize,
    instances: &[Instance<f64>],
    canvas: f64,
    grid: bool,
) -> Vec<Detection<f64>> {
    (0..n)
        .map(|k| {
            let p = match (rng.random_range(0..10), instances.is_empty()) {
                (0..=5, _) | (_, true) => {
                    let p = P::new(rng.random_range(0.0..canvas), rng.random_range(0.0..canvas));
                    if grid {
                        P::new(p.x.round(), p.y.round())
                    } else {
                        p
                    }
                }
                (kind, false) => {
                    let inst = &instances[rng.random_range(0..instances.len())];
                    let rings: Vec<_> = std::iter::once(inst.polygon.exterior()).chain(inst.polygon.holes()).collect();
                    let v = rings[rng.random_range(0..rings.len())].vertices();
                    let i = rng.random_range(0..v.len());
                    let (a, b) = (v[i], v[(i + 1) % v.len()]);
                    match kind {
                        6 | 7 => a,
                        8 => P::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0),
                        _ => {
                            let t: f64 = rng.random();
                            P::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
                        }
                    }
                }
            };
            let class = if rng.random_bool(0.5) {
                CellClass::Lymphocyte
            } else {
                CellClass::Monocyte
            };
            Detection::new(format!("d{k:05}"), p, class, rng.random_range(0.0..=1.0))
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Synthetic scene spec on a 4096 px canvas.
pub fn scene_spec(g: Vec<usize>, ptc: Vec<usize>, v: Vec<usize>, background: usize, seed: u64) -> SceneSpec {
    SceneSpec {
        section_id: None,
        canvas: [0.0, 0.0, 4096.0, 4096.0],
        glomeruli: ClassSpec::with_cells([70.0, 120.0], g),
        peritubular_capillaries: ClassSpec::with_cells([15.0, 30.0], ptc),
        arteries: ClassSpec::with_cells([50.0, 90.0], v),
        background_cells: background,
        seed,
    }
}

pub fn synth(g: Vec<usize>, ptc: Vec<usize>, v: Vec<usize>, background: usize, seed: u64) -> Scene {
    generate_scene(&scene_spec(g, ptc, v, background, seed)).unwrap().0
}

/// Random planted counts: up to 10 glomeruli, 8 capillaries and 4 arteries.
pub fn random_counts(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut draw = |max_n: usize, max_c: usize| -> Vec<usize> {
        let n = rng.random_range(0..=max_n);
        (0..n).map(|_| rng.random_range(0..=max_c)).collect()
    };
    let g = draw(10, 8);
    let ptc = draw(8, 14);
    let v = draw(4, 14);
    (g, ptc, v)
}
