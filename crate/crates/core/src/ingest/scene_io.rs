//! Canonical scene interchange document.
//!
//! ```json
//! {
//!   "format": "banff-scene/1",
//!   "section_id": "s1",
//!   "metadata": { "canvas": "0,0,4096,4096" },
//!   "instances": [
//!     { "id": "glom-0", "class": "glomerulus",
//!       "polygon": [[[x, y], ...], [[hx, hy], ...]], "properties": {} }
//!   ],
//!   "detections": [
//!     { "id": "d0", "class": "lymphocyte", "point": [x, y], "confidence": 0.9 }
//!   ]
//! }
//! ```
//!
//! Rings are stored open (no repeated closing vertex). Keys are sorted and
//! numbers use the shortest round-trip representation, so writing is
//! deterministic and `write(read(write(s))) == write(s)` byte for byte.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::geojson::{parse_json, parse_polygon_coords, parse_position, polygon_coords, position};
use super::{CellClass, Detection, Instance, SectionScene, StructureClass};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SCENE_FORMAT: &str = "banff-scene/1";

pub(crate) fn to_canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

pub fn scene_to_value<T: Scalar>(scene: &SectionScene<T>) -> Value {
    let instances: Vec<Value> = scene
        .instances
        .iter()
        .map(|i| {
            json!({
                "id": i.id,
                "class": i.class.token(),
                "polygon": polygon_coords(&i.polygon, false),
                "properties": i.properties,
            })
        })
        .collect();
    let detections: Vec<Value> = scene
        .detections
        .iter()
        .map(|d| {
            json!({
                "id": d.id,
                "class": d.class.token(),
                "point": position(&d.point),
                "confidence": d.confidence,
            })
        })
        .collect();
    json!({
        "format": SCENE_FORMAT,
        "section_id": scene.section_id,
        "metadata": scene.metadata,
        "instances": instances,
        "detections": detections,
    })
}

pub fn write_scene<T: Scalar>(scene: &SectionScene<T>) -> Vec<u8> {
    to_canonical_bytes(&scene_to_value(scene))
}

fn field<'a>(obj: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::MalformedDocument(format!("{ctx}: missing `{key}`")))
}

fn str_field<'a>(obj: &'a Value, key: &str, ctx: &str) -> Result<&'a str> {
    field(obj, key, ctx)?
        .as_str()
        .ok_or_else(|| Error::MalformedDocument(format!("{ctx}: `{key}` must be a string")))
}

fn array_field<'a>(obj: &'a Value, key: &str, ctx: &str) -> Result<&'a Vec<Value>> {
    field(obj, key, ctx)?
        .as_array()
        .ok_or_else(|| Error::MalformedDocument(format!("{ctx}: `{key}` must be an array")))
}

pub fn scene_from_value<T: Scalar>(root: &Value) -> Result<SectionScene<T>> {
    if !root.is_object() {
        return Err(Error::MalformedDocument("scene must be a JSON object".into()));
    }
    if let Some(fmt) = root.get("format").and_then(Value::as_str) {
        if fmt != SCENE_FORMAT {
            return Err(Error::MalformedDocument(format!("unsupported scene format `{fmt}`")));
        }
    }
    let section_id = str_field(root, "section_id", "scene")?.to_string();

    let mut instances = Vec::new();
    for (k, inst) in array_field(root, "instances", "scene")?.iter().enumerate() {
        let ctx = format!("instance {k}");
        let id = str_field(inst, "id", &ctx)?.to_string();
        let class = StructureClass::from_token(str_field(inst, "class", &ctx)?)?;
        let polygon = parse_polygon_coords(field(inst, "polygon", &ctx)?).map_err(|e| e.in_feature(&id))?;
        let properties: BTreeMap<String, Value> = match inst.get("properties") {
            None | Some(Value::Null) => BTreeMap::new(),
            Some(Value::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            Some(_) => return Err(Error::MalformedDocument(format!("{ctx}: `properties` must be an object"))),
        };
        instances.push(Instance {
            id,
            class,
            polygon,
            properties,
        });
    }

    let mut detections = Vec::new();
    for (k, det) in array_field(root, "detections", "scene")?.iter().enumerate() {
        let ctx = format!("detection {k}");
        let id = str_field(det, "id", &ctx)?.to_string();
        let class = CellClass::from_token(str_field(det, "class", &ctx)?)?;
        let point = parse_position::<T>(field(det, "point", &ctx)?)
            .ok_or_else(|| Error::MalformedDocument(format!("{ctx}: invalid `point`")))?;
        let confidence = field(det, "confidence", &ctx)?
            .as_f64()
            .ok_or_else(|| Error::MalformedDocument(format!("{ctx}: `confidence` must be a number")))?;
        detections.push(Detection::new(id, point, class, confidence));
    }

    let metadata = match root.get("metadata") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                other => Ok((k.clone(), other.to_string())),
            })
            .collect::<Result<BTreeMap<_, _>>>()?,
        Some(_) => return Err(Error::MalformedDocument("`metadata` must be an object".into())),
    };

    let mut scene = SectionScene::new(section_id, instances, detections)?;
    scene.metadata = metadata;
    Ok(scene)
}

pub fn read_scene<T: Scalar>(bytes: &[u8]) -> Result<SectionScene<T>> {
    scene_from_value(&parse_json(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, PolygonWithHoles};

    fn sample() -> SectionScene<f64> {
        let poly = PolygonWithHoles::from_rings(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(10.5, 0.0),
                Point2::new(10.5, 10.25),
                Point2::new(0.0, 10.0),
            ],
            vec![vec![Point2::new(2.0, 2.0), Point2::new(3.0, 2.0), Point2::new(3.0, 3.0)]],
        )
        .unwrap();
        let mut inst = Instance::new("glom-0", StructureClass::Glomerulus, poly);
        inst.properties.insert("source".into(), json!({"model": "x", "score": 0.7}));
        let other = Instance::new(
            "t1",
            StructureClass::Other("tubule".into()),
            PolygonWithHoles::from_rings(
                vec![Point2::new(20.0, 20.0), Point2::new(21.0, 20.0), Point2::new(20.0, 21.0)],
                vec![],
            )
            .unwrap(),
        );
        let dets = vec![
            Detection::new("d0", Point2::new(1.0 / 3.0, 2.5), CellClass::Lymphocyte, 0.9),
            Detection::new("d1", Point2::new(1e-7, 12345.678), CellClass::Other("neutrophil".into()), 0.0),
        ];
        let mut scene = SectionScene::new("s-1", vec![inst, other], dets).unwrap();
        scene.metadata.insert("canvas".into(), "0,0,100,100".into());
        scene
    }

    #[test]
    fn empty_scene_round_trips() {
        let scene = SectionScene::<f64>::empty("empty");
        assert_eq!(read_scene::<f64>(&write_scene(&scene)).unwrap(), scene);
    }

    #[test]
    fn scene_round_trips() {
        let scene = sample();
        let bytes = write_scene(&scene);
        let back = read_scene::<f64>(&bytes).unwrap();
        assert_eq!(back, scene);
        assert_eq!(write_scene(&back), bytes);
    }

    #[test]
    fn truncated_document_is_malformed() {
        let bytes = write_scene(&sample());
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(read_scene::<f64>(cut), Err(Error::MalformedDocument(_))));
    }

    #[test]
    fn keys_are_sorted() {
        let text = String::from_utf8(write_scene(&sample())).unwrap();
        let d = text.find("\"detections\"").unwrap();
        let i = text.find("\"instances\"").unwrap();
        let s = text.find("\"section_id\"").unwrap();
        assert!(d < i && i < s);
    }
}
