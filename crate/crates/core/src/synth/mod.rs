//! Synthetic scenes with grades known by construction, error injection, and
//! grade-flip sensitivity measurement.
//!
//! Instances are convex polygons inscribed in non-overlapping circles, so a
//! planted cell can only ever fall in the instance it was planted in. The
//! ground-truth grades are computed from the planted counts directly, never
//! through the geometry pipeline.

mod perturb;
mod sensitivity;

pub use perturb::{perturb_scene, ClassHallucination, Hallucination, OmissionProbs, PerturbationSpec};
pub use sensitivity::{
    sensitivity_run, trial_seed, Execution, GradeHistogram, IndicatorSensitivity, SensitivityReport, TrialGrades,
};

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point2, PolygonWithHoles};
use crate::ingest::{CellClass, Detection, GroundTruthGrades, Instance, SectionScene, StructureClass};
use crate::scalar::Scalar;
use crate::scoring::{g_grade, max_count_grade, BanffGrade, GLOMERULITIS_CELL_THRESHOLD};

/// Placement attempts per instance or background cell before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Clearance kept between instance bounding circles, in pixels.
const INSTANCE_GAP: f64 = 2.0;

/// Planted cells are pulled this fraction toward the centroid so rounding
/// cannot move them onto or past the boundary.
const INTERIOR_SHRINK: f64 = 0.98;

/// Metadata key holding `x0,y0,x1,y1`.
pub const CANVAS_KEY: &str = "canvas";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    /// Equivalent-radius range `[min, max]` in pixels.
    #[serde(default = "default_radius")]
    pub radius: [f64; 2],
    /// Cells planted in each instance; its length is the instance count.
    #[serde(default)]
    pub cells: Vec<usize>,
    /// Optional explicit instance count. With empty `cells` it plants zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

fn default_radius() -> [f64; 2] {
    [40.0, 80.0]
}

impl ClassSpec {
    pub fn with_cells(radius: [f64; 2], cells: Vec<usize>) -> Self {
        ClassSpec {
            radius,
            cells,
            count: None,
        }
    }

    fn planted(&self, what: &str) -> Result<Vec<usize>> {
        match (self.count, self.cells.is_empty()) {
            (Some(n), true) => Ok(vec![0; n]),
            (Some(n), false) if n != self.cells.len() => Err(Error::InvalidSpec(format!(
                "{what}: count {n} does not match {} planted cell counts",
                self.cells.len()
            ))),
            _ => Ok(self.cells.clone()),
        }
    }
}

pub(crate) fn check_radius(radius: [f64; 2], what: &str) -> Result<()> {
    let [lo, hi] = radius;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidSpec(format!(
            "{what}: radius range [{lo}, {hi}] must satisfy 0 < min <= max"
        )));
    }
    Ok(())
}

/// Recipe for one synthetic section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_id: Option<String>,
    /// `[x0, y0, x1, y1]` in pixels.
    pub canvas: [f64; 4],
    #[serde(default)]
    pub glomeruli: ClassSpec,
    #[serde(default)]
    pub peritubular_capillaries: ClassSpec,
    #[serde(default)]
    pub arteries: ClassSpec,
    /// Stromal cells placed outside every instance.
    #[serde(default)]
    pub background_cells: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn section_id(&self) -> String {
        self.section_id.clone().unwrap_or_else(|| format!("synth-{}", self.seed))
    }

    fn classes(&self) -> [(StructureClass, &ClassSpec, &'static str); 3] {
        [
            (StructureClass::Glomerulus, &self.glomeruli, "glom"),
            (StructureClass::PeritubularCapillary, &self.peritubular_capillaries, "ptc"),
            (StructureClass::Artery, &self.arteries, "artery"),
        ]
    }
}

pub(crate) fn canvas_box(c: [f64; 4]) -> Result<BoundingBox<f64>> {
    let [x0, y0, x1, y1] = c;
    if !(x0 < x1 && y0 < y1) {
        return Err(Error::InvalidSpec(format!("canvas {c:?} is empty or inverted")));
    }
    BoundingBox::new(Point2::new(x0, y0), Point2::new(x1, y1))
        .map_err(|e| Error::InvalidSpec(e.to_string()))
}

pub fn format_canvas(c: &BoundingBox<f64>) -> String {
    format!("{},{},{},{}", c.min.x, c.min.y, c.max.x, c.max.y)
}

pub fn parse_canvas(s: &str) -> Option<BoundingBox<f64>> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    let arr: [f64; 4] = v.try_into().ok()?;
    canvas_box(arr).ok()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Circle {
    center: Point2<f64>,
    radius: f64,
}

/// Rejection sampler for non-overlapping instances and out-of-instance points.
pub(crate) struct Placer {
    canvas: BoundingBox<f64>,
    circles: Vec<Circle>,
}

impl Placer {
    pub(crate) fn new(canvas: BoundingBox<f64>) -> Self {
        Placer {
            canvas,
            circles: Vec::new(),
        }
    }

    /// Registers an existing instance by its bounding circle.
    pub(crate) fn occupy<T: Scalar>(&mut self, poly: &PolygonWithHoles<T>) {
        let b = poly.bbox();
        let (w, h) = (b.width().to_f64_exact(), b.height().to_f64_exact());
        let c = b.center();
        self.circles.push(Circle {
            center: Point2::new(c.x.to_f64_exact(), c.y.to_f64_exact()),
            radius: 0.5 * (w * w + h * h).sqrt(),
        });
    }

    fn clear_of_circles(&self, p: &Point2<f64>, r: f64, gap: f64) -> bool {
        self.circles.iter().all(|c| {
            let reach = c.radius + r + gap;
            p.distance_squared(&c.center) > reach * reach
        })
    }

    /// Places a new convex instance; returns its vertices.
    pub(crate) fn place_instance(
        &mut self,
        rng: &mut ChaCha8Rng,
        radius: [f64; 2],
        what: &str,
    ) -> Result<Vec<Point2<f64>>> {
        let c = &self.canvas;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let r = if radius[0] < radius[1] {
                rng.random_range(radius[0]..=radius[1])
            } else {
                radius[0]
            };
            if c.max.x - c.min.x <= 2.0 * r || c.max.y - c.min.y <= 2.0 * r {
                continue;
            }
            let center = Point2::new(
                rng.random_range(c.min.x + r..c.max.x - r),
                rng.random_range(c.min.y + r..c.max.y - r),
            );
            if !self.clear_of_circles(&center, r, INSTANCE_GAP) {
                continue;
            }
            let verts = ellipse_polygon(rng, center, r);
            self.circles.push(Circle { center, radius: r });
            return Ok(verts);
        }
        Err(Error::PlacementFailure(format!(
            "could not place {what} without overlap in {MAX_PLACEMENT_ATTEMPTS} attempts"
        )))
    }

    /// Uniform point on the canvas outside every occupied circle.
    pub(crate) fn place_background(&self, rng: &mut ChaCha8Rng) -> Result<Point2<f64>> {
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = uniform_in_box(rng, &self.canvas);
            if self.clear_of_circles(&p, 0.0, 1.0) {
                return Ok(p);
            }
        }
        Err(Error::PlacementFailure(format!(
            "could not place a background cell outside all instances in {MAX_PLACEMENT_ATTEMPTS} attempts"
        )))
    }
}

pub(crate) fn uniform_in_box(rng: &mut ChaCha8Rng, b: &BoundingBox<f64>) -> Point2<f64> {
    let x = if b.min.x < b.max.x { rng.random_range(b.min.x..b.max.x) } else { b.min.x };
    let y = if b.min.y < b.max.y { rng.random_range(b.min.y..b.max.y) } else { b.min.y };
    Point2::new(x, y)
}

/// Convex 12- to 24-gon on a randomly oriented ellipse with major semi-axis `r`.
fn ellipse_polygon(rng: &mut ChaCha8Rng, center: Point2<f64>, r: f64) -> Vec<Point2<f64>> {
    let n: usize = rng.random_range(12..=24);
    let minor = r * rng.random_range(0.6..=1.0);
    let rot: f64 = rng.random_range(0.0..TAU);
    let step = TAU / n as f64;
    let (sin_r, cos_r) = rot.sin_cos();
    (0..n)
        .map(|i| {
            let t = step * (i as f64 + rng.random_range(-0.3..0.3));
            let (ex, ey) = (r * t.cos(), minor * t.sin());
            Point2::new(center.x + ex * cos_r - ey * sin_r, center.y + ex * sin_r + ey * cos_r)
        })
        .collect()
}

/// Uniform point strictly inside a convex polygon (then shrunk toward the centroid).
pub(crate) fn sample_in_convex(rng: &mut ChaCha8Rng, verts: &[Point2<f64>]) -> Point2<f64> {
    let n = verts.len() as f64;
    let c = Point2::new(
        verts.iter().map(|p| p.x).sum::<f64>() / n,
        verts.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let areas: Vec<f64> = (0..verts.len())
        .map(|i| {
            let (a, b) = (verts[i], verts[(i + 1) % verts.len()]);
            0.5 * ((a.x - c.x) * (b.y - c.y) - (b.x - c.x) * (a.y - c.y)).abs()
        })
        .collect();
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut tri = areas.len() - 1;
    for (i, a) in areas.iter().enumerate() {
        if pick < *a {
            tri = i;
            break;
        }
        pick -= a;
    }
    let (a, b) = (verts[tri], verts[(tri + 1) % verts.len()]);
    let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    let q = Point2::new(
        c.x + u * (a.x - c.x) + v * (b.x - c.x),
        c.y + u * (a.y - c.y) + v * (b.y - c.y),
    );
    Point2::new(c.x + INTERIOR_SHRINK * (q.x - c.x), c.y + INTERIOR_SHRINK * (q.y - c.y))
}

pub(crate) fn random_cell(rng: &mut ChaCha8Rng) -> (CellClass, f64) {
    let class = if rng.random_bool(0.5) {
        CellClass::Lymphocyte
    } else {
        CellClass::Monocyte
    };
    (class, rng.random_range(0.6..=1.0))
}

pub(crate) fn to_point<T: Scalar>(p: Point2<f64>) -> Point2<T> {
    Point2::new(T::from_f64_lossy(p.x), T::from_f64_lossy(p.y))
}

pub(crate) fn to_polygon<T: Scalar>(verts: &[Point2<f64>]) -> Result<PolygonWithHoles<T>> {
    PolygonWithHoles::from_rings(verts.iter().map(|&p| to_point(p)).collect(), vec![])
}

/// Grades implied by planted per-instance counts.
pub fn grades_from_counts(section_id: &str, g: &[usize], ptc: &[usize], v: &[usize]) -> GroundTruthGrades {
    let g_grade_of = |counts: &[usize]| -> Option<BanffGrade> {
        (!counts.is_empty()).then(|| {
            let inflamed = counts.iter().filter(|&&c| c > GLOMERULITIS_CELL_THRESHOLD).count();
            g_grade(Ratio::new(inflamed, counts.len()))
        })
    };
    let max_grade = |counts: &[usize]| counts.iter().max().map(|&m| max_count_grade(m));
    GroundTruthGrades {
        section_id: section_id.to_string(),
        g: g_grade_of(g),
        ptc: max_grade(ptc),
        v: max_grade(v),
    }
}

/// Builds a scene from `spec` plus the grades its planted counts imply.
pub fn generate_scene<T: Scalar>(spec: &SceneSpec) -> Result<(SectionScene<T>, GroundTruthGrades)> {
    let canvas = canvas_box(spec.canvas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut placer = Placer::new(canvas);
    let mut instances = Vec::new();
    let mut detections = Vec::new();
    let mut planted: BTreeMap<&str, Vec<usize>> = BTreeMap::new();

    for (class, cs, prefix) in spec.classes() {
        let counts = cs.planted(prefix)?;
        if !counts.is_empty() {
            check_radius(cs.radius, prefix)?;
        }
        for (k, &cells) in counts.iter().enumerate() {
            let id = format!("{prefix}-{k}");
            let verts = placer.place_instance(&mut rng, cs.radius, &id)?;
            let polygon = to_polygon::<T>(&verts).map_err(|e| e.in_feature(&id))?;
            for _ in 0..cells {
                let p = sample_in_convex(&mut rng, &verts);
                let (cell_class, confidence) = random_cell(&mut rng);
                detections.push(Detection::new(
                    format!("d{}", detections.len()),
                    to_point(p),
                    cell_class,
                    confidence,
                ));
            }
            instances.push(Instance::new(id, class.clone(), polygon));
        }
        planted.insert(prefix, counts);
    }
    for _ in 0..spec.background_cells {
        let p = placer.place_background(&mut rng)?;
        let (cell_class, confidence) = random_cell(&mut rng);
        detections.push(Detection::new(
            format!("d{}", detections.len()),
            to_point(p),
            cell_class,
            confidence,
        ));
    }

    let section_id = spec.section_id();
    let mut scene = SectionScene::new(section_id.clone(), instances, detections)?;
    scene.metadata.insert(CANVAS_KEY.into(), format_canvas(&canvas));
    scene.metadata.insert("seed".into(), spec.seed.to_string());
    let gt = grades_from_counts(&section_id, &planted["glom"], &planted["ptc"], &planted["artery"]);
    Ok((scene, gt))
}

/// Canvas for a scene: explicit override, then metadata, then content bounds.
pub(crate) fn scene_canvas<T: Scalar>(scene: &SectionScene<T>, explicit: Option<[f64; 4]>) -> Result<BoundingBox<f64>> {
    if let Some(c) = explicit {
        return canvas_box(c);
    }
    if let Some(c) = scene.metadata.get(CANVAS_KEY).and_then(|s| parse_canvas(s)) {
        return Ok(c);
    }
    let pts: Vec<Point2<f64>> = scene
        .instances
        .iter()
        .flat_map(|i| [i.polygon.bbox().min, i.polygon.bbox().max])
        .chain(scene.detections.iter().map(|d| d.point))
        .map(|p| Point2::new(p.x.to_f64_exact(), p.y.to_f64_exact()))
        .collect();
    BoundingBox::enclosing(&pts)
        .filter(|b| b.width() > 0.0 && b.height() > 0.0)
        .ok_or_else(|| Error::InvalidSpec("scene has no canvas; set one in the perturbation spec".into()))
}
