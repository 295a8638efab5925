//! Planar primitives and exact point containment.
//!
//! Containment is boundary-inclusive ray casting. All orientation decisions go
//! through an adaptive-precision `orient2d`, so the result is exact for every
//! finite input, and any two correct implementations of the same rule agree
//! bit for bit.

mod assign;
mod index;

pub use assign::{assign_detections, assign_detections_chunked, AssignmentTable, InstanceAssignment};
pub use index::SpatialIndex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_squared(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    fn coord(&self) -> robust::Coord<f64> {
        robust::Coord {
            x: self.x.to_f64_exact(),
            y: self.y.to_f64_exact(),
        }
    }
}

/// Sign of the exact orientation of `c` relative to the directed line `a -> b`:
/// positive when `c` lies to the left.
#[inline]
pub(crate) fn orientation<T: Scalar>(a: &Point2<T>, b: &Point2<T>, c: &Point2<T>) -> f64 {
    robust::orient2d(a.coord(), b.coord(), c.coord())
}

/// `p` lies on the closed segment `a..b` (given exact collinearity).
#[inline]
fn within_span<T: Scalar>(a: &Point2<T>, b: &Point2<T>, p: &Point2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn on_segment<T: Scalar>(a: &Point2<T>, b: &Point2<T>, p: &Point2<T>) -> bool {
    within_span(a, b, p) && orientation(a, b, p) == 0.0
}

/// Closed segments share at least one point.
fn segments_touch<T: Scalar>(p1: &Point2<T>, p2: &Point2<T>, q1: &Point2<T>, q2: &Point2<T>) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    (d1 == 0.0 && within_span(q1, q2, p1))
        || (d2 == 0.0 && within_span(q1, q2, p2))
        || (d3 == 0.0 && within_span(p1, p2, q1))
        || (d4 == 0.0 && within_span(p1, p2, q2))
}

/// Interiors of the two segments cross at a single point.
fn segments_cross<T: Scalar>(p1: &Point2<T>, p2: &Point2<T>, q1: &Point2<T>, q2: &Point2<T>) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub min: Point2<T>,
    pub max: Point2<T>,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(min: Point2<T>, max: Point2<T>) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::degenerate("bounding box has non-finite corners"));
        }
        if min.x > max.x || min.y > max.y {
            return Err(Error::degenerate("bounding box min exceeds max"));
        }
        Ok(BoundingBox { min, max })
    }

    /// Smallest box holding every point; `None` for an empty iterator.
    pub fn enclosing<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Point2<T>>,
    {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bbox = BoundingBox {
            min: first,
            max: first,
        };
        for p in iter {
            bbox.expand_to(p);
        }
        Some(bbox)
    }

    pub fn expand_to(&mut self, p: &Point2<T>) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut out = *self;
        out.expand_to(&other.min);
        out.expand_to(&other.max);
        out
    }

    #[inline]
    pub fn contains(&self, p: &Point2<T>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn width(&self) -> T {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> T {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point2<T> {
        let two = T::one() + T::one();
        Point2::new((self.min.x + self.max.x) / two, (self.min.y + self.max.y) / two)
    }
}

/// Position of a point relative to a closed region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

/// A simple closed ring. The closing vertex is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring<T> {
    vertices: Vec<Point2<T>>,
    bbox: BoundingBox<T>,
}

impl<T: Scalar> Ring<T> {
    /// Validates and normalizes a vertex list: a repeated closing vertex and
    /// consecutive duplicates are dropped. Rejects rings with fewer than three
    /// distinct vertices, zero area, non-finite coordinates or self-intersections.
    pub fn new(mut vertices: Vec<Point2<T>>) -> Result<Self> {
        if let Some(bad) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::degenerate(format!(
                "non-finite coordinate ({:?}, {:?})",
                bad.x, bad.y
            )));
        }
        vertices.dedup();
        while vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::degenerate(format!(
                "ring has {} distinct vertices, need at least 3",
                vertices.len()
            )));
        }
        let bbox = BoundingBox::enclosing(&vertices).expect("non-empty ring");
        let ring = Ring { vertices, bbox };
        ring.check_simple()?;
        if ring.signed_area() == T::zero() {
            return Err(Error::degenerate("ring encloses zero area"));
        }
        Ok(ring)
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn bbox(&self) -> &BoundingBox<T> {
        &self.bbox
    }

    /// Edges as `(start, end)` pairs, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (&Point2<T>, &Point2<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (&self.vertices[i], &self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> T {
        let origin = self.vertices[0];
        let mut twice = T::zero();
        for (a, b) in self.edges() {
            let (ax, ay) = (a.x - origin.x, a.y - origin.y);
            let (bx, by) = (b.x - origin.x, b.y - origin.y);
            twice = twice + (ax * by - bx * ay);
        }
        twice / (T::one() + T::one())
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    fn check_simple(&self) -> Result<()> {
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            let (a1, a2) = (&v[i], &v[(i + 1) % n]);
            for j in (i + 1)..n {
                let (b1, b2) = (&v[j], &v[(j + 1) % n]);
                let adjacent_after = j == i + 1;
                let adjacent_before = i == 0 && j == n - 1;
                if adjacent_after || adjacent_before {
                    // Shared vertex is fine; folding back along the same line is not.
                    let (shared, p, q) = if adjacent_after { (a2, a1, b2) } else { (a1, a2, b1) };
                    if orientation(p, shared, q) == 0.0 {
                        let dot = (p.x - shared.x) * (q.x - shared.x) + (p.y - shared.y) * (q.y - shared.y);
                        if dot > T::zero() {
                            return Err(Error::degenerate(format!(
                                "ring folds back on itself at vertex {}",
                                if adjacent_after { i + 1 } else { 0 }
                            )));
                        }
                    }
                    continue;
                }
                if segments_touch(a1, a2, b1, b2) {
                    return Err(Error::degenerate(format!(
                        "ring self-intersects between edges {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Boundary-inclusive ray casting toward +x.
    pub fn locate(&self, p: &Point2<T>) -> Location {
        if !self.bbox.contains(p) {
            return Location::Outside;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            let a_above = a.y > p.y;
            let b_above = b.y > p.y;
            if a_above == b_above {
                // Horizontal edges and edges entirely above/below only matter
                // for the boundary test.
                if (a.y == p.y || b.y == p.y) && on_segment(a, b, p) {
                    return Location::Boundary;
                }
                continue;
            }
            let o = orientation(a, b, p);
            if o == 0.0 {
                return Location::Boundary;
            }
            // Upward edge: crossing iff p is left of it; downward: iff right.
            if (b_above && o > 0.0) || (a_above && o < 0.0) {
                inside = !inside;
            }
        }
        if inside {
            Location::Inside
        } else {
            Location::Outside
        }
    }
}

/// A polygon with a flat list of non-nested holes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonWithHoles<T> {
    exterior: Ring<T>,
    holes: Vec<Ring<T>>,
}

impl<T: Scalar> PolygonWithHoles<T> {
    pub fn new(exterior: Ring<T>, holes: Vec<Ring<T>>) -> Result<Self> {
        let rings: Vec<&Ring<T>> = std::iter::once(&exterior).chain(holes.iter()).collect();
        for (i, r) in rings.iter().enumerate() {
            for s in rings.iter().skip(i + 1) {
                if !r.bbox().intersects(s.bbox()) {
                    continue;
                }
                for (a1, a2) in r.edges() {
                    for (b1, b2) in s.edges() {
                        if segments_cross(a1, a2, b1, b2) {
                            return Err(Error::degenerate("polygon rings cross each other"));
                        }
                    }
                }
            }
        }
        for (h, hole) in holes.iter().enumerate() {
            if hole.vertices().iter().any(|p| exterior.locate(p) == Location::Outside) {
                return Err(Error::degenerate(format!("hole {h} extends outside the exterior ring")));
            }
            for (k, other) in holes.iter().enumerate() {
                if h != k && hole.vertices().iter().any(|p| other.locate(p) == Location::Inside) {
                    return Err(Error::degenerate(format!("hole {h} is nested inside hole {k}")));
                }
            }
        }
        let poly = PolygonWithHoles { exterior, holes };
        if poly.area() <= T::zero() {
            return Err(Error::degenerate("holes cover the whole exterior"));
        }
        Ok(poly)
    }

    /// Convenience constructor from raw vertex lists.
    pub fn from_rings(exterior: Vec<Point2<T>>, holes: Vec<Vec<Point2<T>>>) -> Result<Self> {
        let exterior = Ring::new(exterior)?;
        let holes = holes.into_iter().map(Ring::new).collect::<Result<Vec<_>>>()?;
        Self::new(exterior, holes)
    }

    pub fn exterior(&self) -> &Ring<T> {
        &self.exterior
    }

    pub fn holes(&self) -> &[Ring<T>] {
        &self.holes
    }

    pub fn bbox(&self) -> &BoundingBox<T> {
        self.exterior.bbox()
    }

    pub fn area(&self) -> T {
        polygon_area(self)
    }

    pub fn locate(&self, p: &Point2<T>) -> Location {
        match self.exterior.locate(p) {
            Location::Outside => return Location::Outside,
            Location::Boundary => return Location::Boundary,
            Location::Inside => {}
        }
        for hole in &self.holes {
            match hole.locate(p) {
                Location::Inside => return Location::Outside,
                Location::Boundary => return Location::Boundary,
                Location::Outside => {}
            }
        }
        Location::Inside
    }

    /// Applies `f` to every vertex and re-validates.
    pub fn map_points<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&Point2<T>) -> Point2<T>,
    {
        Self::from_rings(
            self.exterior.vertices().iter().map(&f).collect(),
            self.holes
                .iter()
                .map(|h| h.vertices().iter().map(&f).collect())
                .collect(),
        )
    }
}

/// Exterior area minus hole areas.
pub fn polygon_area<T: Scalar>(poly: &PolygonWithHoles<T>) -> T {
    poly.holes
        .iter()
        .fold(poly.exterior.area(), |acc, h| acc - h.area())
}

/// True iff `p` is inside the polygon or on any of its ring boundaries.
#[inline]
pub fn point_in_polygon<T: Scalar>(p: &Point2<T>, poly: &PolygonWithHoles<T>) -> bool {
    poly.locate(p) != Location::Outside
}
