use std::collections::{BTreeSet, HashMap};

use serde_json::{json, Value};

use super::geojson::{parse_json, parse_position, position};
use super::{AliasTable, CellClass, Detection};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which detections are kept when reading a detection document.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFilter {
    /// Inclusive lower bound on `probability`.
    pub min_confidence: f64,
    pub classes: BTreeSet<CellClass>,
}

impl Default for DetectionFilter {
    fn default() -> Self {
        DetectionFilter {
            min_confidence: 0.5,
            classes: CellClass::default_set(),
        }
    }
}

impl DetectionFilter {
    /// Keeps every schema-valid point of the listed classes.
    pub fn all_of(classes: BTreeSet<CellClass>) -> Self {
        DetectionFilter {
            min_confidence: 0.0,
            classes,
        }
    }

    pub fn accepts<T>(&self, det: &Detection<T>) -> bool {
        det.confidence >= self.min_confidence && self.classes.contains(&det.class)
    }
}

/// Parses `{"points": [{"name", "point": [x, y], "probability"}, ...]}`.
///
/// Ids are `d<k>` where `k` is the position in the document, so they stay
/// stable under filtering. A missing `probability` means 1.0.
pub fn parse_detections<T: Scalar>(
    bytes: &[u8],
    filter: &DetectionFilter,
    aliases: &AliasTable,
) -> Result<Vec<Detection<T>>> {
    let root = parse_json(bytes)?;
    let points = root
        .get("points")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::SchemaViolation("detection document needs a `points` array".into()))?;

    let mut out = Vec::new();
    for (k, entry) in points.iter().enumerate() {
        let name = entry
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::SchemaViolation(format!("point {k}: missing `name`")))?;
        let point = entry
            .get("point")
            .and_then(parse_position::<T>)
            .filter(|p| p.is_finite())
            .ok_or_else(|| Error::SchemaViolation(format!("point {k}: missing or invalid `point`")))?;
        let confidence = match entry.get("probability") {
            None | Some(Value::Null) => 1.0,
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::SchemaViolation(format!("point {k}: `probability` is not a number")))?,
        };
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::SchemaViolation(format!(
                "point {k}: probability {confidence} outside [0, 1]"
            )));
        }
        let det = Detection::new(format!("d{k}"), point, aliases.cell(name), confidence);
        if filter.accepts(&det) {
            out.push(det);
        }
    }
    Ok(out)
}

pub fn write_detections<T: Scalar>(detections: &[Detection<T>]) -> Vec<u8> {
    let points: Vec<Value> = detections
        .iter()
        .map(|d| {
            json!({
                "name": d.class.label(),
                "point": position(&d.point),
                "probability": d.confidence,
            })
        })
        .collect();
    super::scene_io::to_canonical_bytes(&json!({ "points": points }))
}

/// Kept points per `(class, cell x, cell y)`.
type Grid<'a> = HashMap<(&'a CellClass, i64, i64), Vec<(f64, f64)>>;

/// Greedy suppression of near-duplicate detections.
///
/// Visits detections by descending confidence (ties by id) and keeps one iff
/// no already-kept detection of the same class lies within `radius`
/// (inclusive). The survivors are returned in input order.
pub fn dedup_detections<T: Scalar>(detections: &[Detection<T>], radius: f64) -> Vec<Detection<T>> {
    let radius = radius.max(0.0);
    let r2 = radius * radius;
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.confidence
            .total_cmp(&da.confidence)
            .then_with(|| da.id.cmp(&db.id))
    });

    // Grid of kept points keyed per class. The cell side is padded a little
    // past `radius` so rounding in the division can never push two points
    // within range more than one cell apart.
    let side = radius * (1.0 + 1e-9);
    let cell = |v: f64| -> i64 {
        if radius > 0.0 {
            (v / side).floor() as i64
        } else {
            // Exact-duplicate mode: bucket on the coordinate itself.
            (v + 0.0).to_bits() as i64
        }
    };
    let span: i64 = if radius > 0.0 { 1 } else { 0 };
    let mut grid: Grid<'_> = HashMap::new();
    let mut keep = vec![false; detections.len()];

    for i in order {
        let d = &detections[i];
        let (x, y) = (d.point.x.to_f64_exact(), d.point.y.to_f64_exact());
        let (cx, cy) = (cell(x), cell(y));
        let mut suppressed = false;
        'search: for gx in cx.saturating_sub(span)..=cx.saturating_add(span) {
            for gy in cy.saturating_sub(span)..=cy.saturating_add(span) {
                if let Some(pts) = grid.get(&(&d.class, gx, gy)) {
                    if pts.iter().any(|&(px, py)| {
                        let (dx, dy) = (px - x, py - y);
                        dx * dx + dy * dy <= r2
                    }) {
                        suppressed = true;
                        break 'search;
                    }
                }
            }
        }
        if !suppressed {
            keep[i] = true;
            grid.entry((&d.class, cx, cy)).or_default().push((x, y));
        }
    }

    detections
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(d, _)| d.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    const DOC: &[u8] = br#"{"name":"lymphocytes","type":"Multiple points","points":[
        {"name":"lymphocyte","point":[10.0,20.0,0.25],"probability":0.9},
        {"name":"Monocyte","point":[30,40],"probability":0.6},
        {"name":"lymphocyte","point":[5,5]}]}"#;

    fn parse(filter: &DetectionFilter) -> Result<Vec<Detection<f64>>> {
        parse_detections(DOC, filter, &AliasTable::default())
    }

    #[test]
    fn all_points_parsed() {
        let dets = parse(&DetectionFilter::all_of(CellClass::default_set())).unwrap();
        assert_eq!(dets.len(), 3);
        assert_eq!(dets[0].point, Point2::new(10.0, 20.0));
        assert_eq!(dets[1].class, CellClass::Monocyte);
        assert_eq!(dets[2].confidence, 1.0);
        let ids: Vec<_> = dets.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["d0", "d1", "d2"]);
    }

    #[test]
    fn threshold_above_everything() {
        let filter = DetectionFilter {
            min_confidence: 1.0 + f64::EPSILON,
            classes: CellClass::default_set(),
        };
        assert!(parse(&filter).unwrap().is_empty());
    }

    #[test]
    fn class_filter_keeps_ids_stable() {
        let filter = DetectionFilter::all_of([CellClass::Monocyte].into_iter().collect());
        let dets = parse(&filter).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].id, "d1");
    }

    #[test]
    fn schema_violations() {
        let aliases = AliasTable::default();
        let f = DetectionFilter::default();
        let bad = |doc: &str| parse_detections::<f64>(doc.as_bytes(), &f, &aliases).unwrap_err();
        assert!(matches!(
            bad(r#"{"points":[{"name":"lymphocyte","point":[1,2],"probability":1.7}]}"#),
            Error::SchemaViolation(_)
        ));
        assert!(matches!(bad(r#"{"points":[{"point":[1,2]}]}"#), Error::SchemaViolation(_)));
        assert!(matches!(bad(r#"{"points":[{"name":"monocyte","point":[1]}]}"#), Error::SchemaViolation(_)));
        assert!(matches!(bad(r#"{"cells":[]}"#), Error::SchemaViolation(_)));
        assert!(matches!(bad(r#"{"points":["#), Error::MalformedDocument(_)));
    }

    fn det(id: &str, x: f64, y: f64, c: f64) -> Detection<f64> {
        Detection::new(id, Point2::new(x, y), CellClass::Lymphocyte, c)
    }

    #[test]
    fn exact_duplicate_keeps_most_confident() {
        let out = dedup_detections(&[det("a", 1.0, 1.0, 0.8), det("b", 1.0, 1.0, 0.9)], 0.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "b");
    }

    #[test]
    fn distinct_points_all_kept() {
        let input = vec![det("a", 1.0, 1.0, 0.8), det("b", 1.0, 1.5, 0.9), det("c", -0.0, 0.0, 0.5)];
        assert_eq!(dedup_detections(&input, 0.0), input);
    }

    #[test]
    fn different_classes_do_not_suppress() {
        let mut m = det("m", 1.0, 1.0, 0.5);
        m.class = CellClass::Monocyte;
        let out = dedup_detections(&[det("a", 1.0, 1.0, 0.8), m], 5.0);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn radius_is_inclusive() {
        let out = dedup_detections(&[det("a", 0.0, 0.0, 0.9), det("b", 3.0, 4.0, 0.8)], 5.0);
        assert_eq!(out.len(), 1);
    }
}
