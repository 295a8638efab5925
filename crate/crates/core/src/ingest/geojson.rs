use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::{AliasTable, GroundTruthGrades, Instance, SectionScene, StructureClass};
use crate::error::{Error, Result};
use crate::geometry::{Point2, PolygonWithHoles};
use crate::scalar::Scalar;
use crate::scoring::BanffGrade;

pub(crate) const GRADE_KEYS: [&str; 3] = ["banff_g", "banff_ptc", "banff_v"];

/// Parsed structure file: instances plus the optional collection-level section id.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureDocument<T> {
    pub section_id: Option<String>,
    pub instances: Vec<Instance<T>>,
}

pub(crate) fn parse_json(bytes: &[u8]) -> Result<Value> {
    serde_json::from_slice(bytes).map_err(|e| Error::MalformedDocument(e.to_string()))
}

/// `[x, y]` or `[x, y, z]`; any extra ordinate is ignored.
pub(crate) fn parse_position<T: Scalar>(value: &Value) -> Option<Point2<T>> {
    let arr = value.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    let x = arr[0].as_f64()?;
    let y = arr[1].as_f64()?;
    Some(Point2::new(T::from_f64_lossy(x), T::from_f64_lossy(y)))
}

pub(crate) fn parse_polygon_coords<T: Scalar>(value: &Value) -> Result<PolygonWithHoles<T>> {
    let rings = value
        .as_array()
        .ok_or_else(|| Error::MalformedDocument("polygon coordinates must be an array of rings".into()))?;
    if rings.is_empty() {
        return Err(Error::degenerate("polygon has no rings"));
    }
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let positions = ring
            .as_array()
            .ok_or_else(|| Error::MalformedDocument("ring must be an array of positions".into()))?;
        let pts = positions
            .iter()
            .map(|p| {
                parse_position(p)
                    .ok_or_else(|| Error::MalformedDocument(format!("invalid position {p}")))
            })
            .collect::<Result<Vec<Point2<T>>>>()?;
        parsed.push(pts);
    }
    let exterior = parsed.remove(0);
    PolygonWithHoles::from_rings(exterior, parsed)
}

pub(crate) fn polygon_coords<T: Scalar>(poly: &PolygonWithHoles<T>, closed: bool) -> Value {
    let ring = |r: &crate::geometry::Ring<T>| {
        let mut pts: Vec<Value> = r.vertices().iter().map(|p| position(p)).collect();
        if closed {
            pts.push(pts[0].clone());
        }
        Value::Array(pts)
    };
    Value::Array(
        std::iter::once(ring(poly.exterior()))
            .chain(poly.holes().iter().map(ring))
            .collect(),
    )
}

pub(crate) fn position<T: Scalar>(p: &Point2<T>) -> Value {
    json!([p.x.to_f64_exact(), p.y.to_f64_exact()])
}

fn feature_id(feature: &Value, index: usize) -> String {
    let from_value = |v: &Value| match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    };
    feature
        .get("id")
        .and_then(from_value)
        .or_else(|| feature.pointer("/properties/id").and_then(from_value))
        .unwrap_or_else(|| format!("feature-{index}"))
}

fn class_name(properties: Option<&Value>) -> Option<&str> {
    let props = properties?;
    props
        .pointer("/classification/name")
        .and_then(Value::as_str)
        .or_else(|| props.get("classification").and_then(Value::as_str))
        .or_else(|| props.get("class").and_then(Value::as_str))
}

fn features(root: &Value) -> Result<&Vec<Value>> {
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::MalformedDocument("expected a GeoJSON FeatureCollection".into()));
    }
    root.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::MalformedDocument("FeatureCollection without a `features` array".into()))
}

/// Parses a structure GeoJSON document.
///
/// Each `MultiPolygon` member becomes its own instance with id `<feature>#<k>`.
/// Features with unknown class labels become [`StructureClass::Other`].
pub fn parse_structure_document<T: Scalar>(
    bytes: &[u8],
    aliases: &AliasTable,
) -> Result<StructureDocument<T>> {
    let root = parse_json(bytes)?;
    let features = features(&root)?;
    let section_id = root
        .pointer("/properties/section_id")
        .and_then(Value::as_str)
        .map(str::to_string);

    let mut instances = Vec::with_capacity(features.len());
    for (index, feature) in features.iter().enumerate() {
        let id = feature_id(feature, index);
        let properties = feature.get("properties").filter(|p| !p.is_null());
        if properties.is_some_and(|p| !p.is_object()) {
            return Err(Error::MalformedDocument(format!("feature `{id}`: properties must be an object")));
        }
        let class = class_name(properties)
            .map(|n| aliases.structure(n))
            .unwrap_or_else(|| StructureClass::Other("unclassified".into()));
        let props: BTreeMap<String, Value> = properties
            .and_then(Value::as_object)
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default();

        let geometry = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| Error::SchemaViolation(format!("feature `{id}` has no geometry")))?;
        let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
        let coords = geometry
            .get("coordinates")
            .ok_or_else(|| Error::MalformedDocument(format!("feature `{id}`: geometry without coordinates")))?;
        let with_id = |e: Error, id: &str| match e {
            Error::MalformedDocument(m) => Error::MalformedDocument(format!("feature `{id}`: {m}")),
            other => other.in_feature(id),
        };
        match kind {
            "Polygon" => {
                let polygon = parse_polygon_coords(coords).map_err(|e| with_id(e, &id))?;
                instances.push(Instance {
                    id,
                    class,
                    polygon,
                    properties: props,
                });
            }
            "MultiPolygon" => {
                let members = coords.as_array().ok_or_else(|| {
                    Error::MalformedDocument(format!("feature `{id}`: MultiPolygon coordinates must be an array"))
                })?;
                if members.is_empty() {
                    return Err(Error::degenerate("MultiPolygon has no members").in_feature(&id));
                }
                for (k, member) in members.iter().enumerate() {
                    let member_id = format!("{id}#{k}");
                    let polygon = parse_polygon_coords(member).map_err(|e| with_id(e, &member_id))?;
                    instances.push(Instance {
                        id: member_id,
                        class: class.clone(),
                        polygon,
                        properties: props.clone(),
                    });
                }
            }
            other => {
                return Err(Error::SchemaViolation(format!(
                    "feature `{id}` has unsupported geometry type `{other}`"
                )))
            }
        }
    }

    let mut seen = std::collections::HashSet::new();
    for inst in &instances {
        if !seen.insert(inst.id.as_str()) {
            return Err(Error::DuplicateId(inst.id.clone()));
        }
    }
    Ok(StructureDocument {
        section_id,
        instances,
    })
}

pub fn parse_structures<T: Scalar>(bytes: &[u8], aliases: &AliasTable) -> Result<Vec<Instance<T>>> {
    parse_structure_document(bytes, aliases).map(|d| d.instances)
}

fn grade_value(key: &str, value: &Value) -> Result<Option<BanffGrade>> {
    match value {
        Value::Null => Ok(None),
        Value::Number(n) => {
            let out_of_range = || Error::GradeOutOfRange {
                key: key.to_string(),
                value: n.to_string(),
            };
            if let Some(i) = n.as_i64() {
                u8::try_from(i)
                    .ok()
                    .and_then(|g| BanffGrade::new(g).ok())
                    .map(Some)
                    .ok_or_else(out_of_range)
            } else if n.as_u64().is_some() {
                Err(out_of_range())
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f.fract() == 0.0 && (0.0..=3.0).contains(&f) {
                    Ok(Some(BanffGrade::new(f as u8)?))
                } else if f.fract() == 0.0 {
                    Err(out_of_range())
                } else {
                    Err(Error::SchemaViolation(format!("{key} must be an integer, got {n}")))
                }
            }
        }
        other => Err(Error::SchemaViolation(format!("{key} must be an integer, got {other}"))),
    }
}

fn grades_from(props: &Map<String, Value>) -> Result<[Option<BanffGrade>; 3]> {
    let mut out = [None; 3];
    for (slot, key) in out.iter_mut().zip(GRADE_KEYS) {
        if let Some(v) = props.get(key) {
            *slot = grade_value(key, v)?;
        }
    }
    Ok(out)
}

/// Extracts expert grades from `banff_g` / `banff_ptc` / `banff_v`.
///
/// Collection-level properties win per indicator; otherwise the maximum over
/// all feature-level values is used. A bare object carrying the keys at top
/// level (or in `properties`) is also accepted.
pub fn parse_ground_truth(bytes: &[u8]) -> Result<GroundTruthGrades> {
    let root = parse_json(bytes)?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::MalformedDocument("ground truth must be a JSON object".into()))?;
    let empty = Map::new();
    let top_props = obj.get("properties").and_then(Value::as_object);
    let section_id = top_props
        .and_then(|p| p.get("section_id"))
        .or_else(|| obj.get("section_id"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();

    let is_geojson = matches!(
        obj.get("type").and_then(Value::as_str),
        Some("FeatureCollection") | Some("Feature")
    );
    let mut grades = grades_from(top_props.unwrap_or(&empty))?;
    if !is_geojson {
        let bare = grades_from(obj)?;
        for (g, b) in grades.iter_mut().zip(bare) {
            *g = g.or(b);
        }
    }

    if obj.get("type").and_then(Value::as_str) == Some("FeatureCollection") {
        let feats = features(&root)?;
        let mut feature_max: [Option<BanffGrade>; 3] = [None; 3];
        for f in feats {
            let props = f.get("properties").and_then(Value::as_object).unwrap_or(&empty);
            for (m, g) in feature_max.iter_mut().zip(grades_from(props)?) {
                *m = (*m).max(g);
            }
        }
        for (g, m) in grades.iter_mut().zip(feature_max) {
            *g = g.or(m);
        }
    }

    let [g, ptc, v] = grades;
    Ok(GroundTruthGrades {
        section_id,
        g,
        ptc,
        v,
    })
}

/// Ground truth as a feature-less collection carrying collection-level grades.
pub fn write_ground_truth(gt: &GroundTruthGrades) -> Vec<u8> {
    let mut props = Map::new();
    props.insert("section_id".into(), Value::String(gt.section_id.clone()));
    for (key, grade) in GRADE_KEYS.iter().zip([gt.g, gt.ptc, gt.v]) {
        if let Some(g) = grade {
            props.insert(key.to_string(), json!(g.value()));
        }
    }
    let doc = json!({
        "type": "FeatureCollection",
        "properties": props,
        "features": [],
    });
    super::scene_io::to_canonical_bytes(&doc)
}

/// Exports a scene's instances as a structure GeoJSON document.
pub fn write_structures<T: Scalar>(scene: &SectionScene<T>) -> Vec<u8> {
    let features: Vec<Value> = scene
        .instances
        .iter()
        .map(|inst| {
            let mut props: Map<String, Value> = inst.properties.clone().into_iter().collect();
            props.insert("classification".into(), json!({ "name": inst.class.label() }));
            json!({
                "type": "Feature",
                "id": inst.id,
                "geometry": {
                    "type": "Polygon",
                    "coordinates": polygon_coords(&inst.polygon, true),
                },
                "properties": props,
            })
        })
        .collect();
    let doc = json!({
        "type": "FeatureCollection",
        "properties": { "section_id": scene.section_id },
        "features": features,
    });
    super::scene_io::to_canonical_bytes(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_in_polygon;

    fn parse(doc: &str) -> Result<Vec<Instance<f64>>> {
        parse_structures(doc.as_bytes(), &AliasTable::default())
    }

    const SQUARE: &str = "[[[0,0],[10,0],[10,10],[0,10],[0,0]]]";

    #[test]
    fn single_glomerulus() {
        let doc = format!(
            r#"{{"type":"FeatureCollection","features":[{{"type":"Feature","id":"f1",
              "geometry":{{"type":"Polygon","coordinates":{SQUARE}}},
              "properties":{{"classification":{{"name":"glomerulus","color":[1,2,3]}}}}}}]}}"#
        );
        let inst = parse(&doc).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].id, "f1");
        assert_eq!(inst[0].class, StructureClass::Glomerulus);
        assert_eq!(inst[0].polygon.exterior().vertices().len(), 4);
        assert!(inst[0].properties.contains_key("classification"));
    }

    #[test]
    fn multipolygon_expands() {
        let doc = r#"{"type":"FeatureCollection","features":[{"type":"Feature","id":"f1",
            "geometry":{"type":"MultiPolygon","coordinates":[
                [[[0,0],[1,0],[1,1],[0,0]]],
                [[[5,5],[6,5],[6,6],[5,5]]]]},
            "properties":{"class":"artery"}}]}"#;
        let inst = parse(doc).unwrap();
        let ids: Vec<_> = inst.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["f1#0", "f1#1"]);
        assert!(inst.iter().all(|i| i.class == StructureClass::Artery));
    }

    #[test]
    fn holes_follow_first_ring() {
        let doc = r#"{"type":"FeatureCollection","features":[{"type":"Feature","id":"h",
            "geometry":{"type":"Polygon","coordinates":[
                [[0,0],[10,0],[10,10],[0,10],[0,0]],
                [[4,4],[6,4],[6,6],[4,6],[4,4]]]},
            "properties":{"classification":{"name":"PTC"}}}]}"#;
        let inst = parse(doc).unwrap();
        assert_eq!(inst[0].class, StructureClass::PeritubularCapillary);
        assert_eq!(inst[0].polygon.holes().len(), 1);
        assert!(!point_in_polygon(&Point2::new(5.0, 5.0), &inst[0].polygon));
    }

    #[test]
    fn two_vertex_ring_names_feature() {
        let doc = r#"{"type":"FeatureCollection","features":[{"type":"Feature","id":"bad-7",
            "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,1],[0,0]]]},
            "properties":{"class":"glomerulus"}}]}"#;
        match parse(doc).unwrap_err() {
            Error::DegenerateGeometry { feature, .. } => assert_eq!(feature.as_deref(), Some("bad-7")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_intersecting_ring_is_rejected() {
        let doc = r#"{"type":"FeatureCollection","features":[{"type":"Feature","id":"bow",
            "geometry":{"type":"Polygon","coordinates":[[[0,0],[2,2],[2,0],[0,2],[0,0]]]},
            "properties":{"class":"artery"}}]}"#;
        let err = parse(doc).unwrap_err();
        assert!(err.to_string().contains("`bow`"), "{err}");
    }

    #[test]
    fn unknown_class_is_kept_as_other() {
        let doc = format!(
            r#"{{"type":"FeatureCollection","features":[
              {{"type":"Feature","geometry":{{"type":"Polygon","coordinates":{SQUARE}}},"properties":{{"class":"Tubule"}}}},
              {{"type":"Feature","geometry":{{"type":"Polygon","coordinates":{SQUARE}}},"properties":null}}]}}"#
        );
        let inst = parse(&doc).unwrap();
        assert_eq!(inst[0].class, StructureClass::Other("Tubule".into()));
        assert_eq!(inst[0].id, "feature-0");
        assert_eq!(inst[1].class, StructureClass::Other("unclassified".into()));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse("{not json"), Err(Error::MalformedDocument(_))));
        assert!(matches!(parse(r#"{"type":"Feature"}"#), Err(Error::MalformedDocument(_))));
        let point = r#"{"type":"FeatureCollection","features":[{"type":"Feature","id":"p",
            "geometry":{"type":"Point","coordinates":[1,2]},"properties":{}}]}"#;
        let err = parse(point).unwrap_err();
        assert!(err.to_string().contains("`p`"));
    }

    #[test]
    fn duplicate_feature_ids_are_rejected() {
        let doc = format!(
            r#"{{"type":"FeatureCollection","features":[
              {{"type":"Feature","id":"a","geometry":{{"type":"Polygon","coordinates":{SQUARE}}},"properties":{{}}}},
              {{"type":"Feature","id":"a","geometry":{{"type":"Polygon","coordinates":{SQUARE}}},"properties":{{}}}}]}}"#
        );
        assert_eq!(parse(&doc).unwrap_err(), Error::DuplicateId("a".into()));
    }

    fn grade(g: u8) -> Option<BanffGrade> {
        Some(BanffGrade::new(g).unwrap())
    }

    #[test]
    fn ground_truth_collection_level() {
        let gt = parse_ground_truth(
            br#"{"type":"FeatureCollection","properties":{"banff_g":1,"banff_ptc":0,"banff_v":0},"features":[]}"#,
        )
        .unwrap();
        assert_eq!((gt.g, gt.ptc, gt.v), (grade(1), grade(0), grade(0)));
    }

    #[test]
    fn ground_truth_feature_max() {
        let gt = parse_ground_truth(
            br#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":null,"properties":{"banff_ptc":1}},
                {"type":"Feature","geometry":null,"properties":{"banff_ptc":2,"banff_g":0}}]}"#,
        )
        .unwrap();
        assert_eq!(gt.ptc, grade(2));
        assert_eq!(gt.g, grade(0));
        assert_eq!(gt.v, None);
    }

    #[test]
    fn ground_truth_collection_wins() {
        let gt = parse_ground_truth(
            br#"{"type":"FeatureCollection","properties":{"banff_ptc":0},"features":[
                {"type":"Feature","geometry":null,"properties":{"banff_ptc":3}}]}"#,
        )
        .unwrap();
        assert_eq!(gt.ptc, grade(0));
    }

    #[test]
    fn ground_truth_bare_object() {
        let gt = parse_ground_truth(br#"{"section_id":"s1","banff_v":2,"banff_g":null}"#).unwrap();
        assert_eq!(gt.section_id, "s1");
        assert_eq!((gt.g, gt.v), (None, grade(2)));
    }

    #[test]
    fn ground_truth_out_of_range() {
        let err = parse_ground_truth(br#"{"banff_v":5}"#).unwrap_err();
        assert!(matches!(err, Error::GradeOutOfRange { .. }));
        assert!(matches!(parse_ground_truth(br#"{"banff_v":-1}"#), Err(Error::GradeOutOfRange { .. })));
        assert!(matches!(parse_ground_truth(br#"{"banff_v":1.5}"#), Err(Error::SchemaViolation(_))));
        assert!(matches!(parse_ground_truth(b"[1]"), Err(Error::MalformedDocument(_))));
    }

    #[test]
    fn ground_truth_write_parse() {
        let gt = GroundTruthGrades {
            section_id: "abc".into(),
            g: grade(3),
            ptc: None,
            v: grade(1),
        };
        assert_eq!(parse_ground_truth(&write_ground_truth(&gt)).unwrap(), gt);
    }
}
