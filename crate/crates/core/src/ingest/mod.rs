//! Scene data model and the document formats it is read from and written to.
//!
//! * structures: GeoJSON `FeatureCollection` of `Polygon`/`MultiPolygon`
//!   features, class in `properties.classification.name` or `properties.class`
//! * detections: `{"points": [{"name", "point": [x, y], "probability"}]}`
//! * ground truth: `banff_g` / `banff_ptc` / `banff_v` grade properties
//! * scene interchange: one canonical JSON document per section

mod detections;
mod geojson;
mod scene_io;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

pub use detections::{dedup_detections, parse_detections, write_detections, DetectionFilter};
pub use geojson::{
    parse_ground_truth, parse_structure_document, parse_structures, write_ground_truth,
    write_structures, StructureDocument,
};
pub use scene_io::{read_scene, scene_from_value, scene_to_value, write_scene, SCENE_FORMAT};

use crate::error::{Error, Result};
use crate::geometry::{Point2, PolygonWithHoles};
use crate::scalar::Scalar;
use crate::scoring::BanffGrade;

/// Anatomical structure family an instance belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructureClass {
    Glomerulus,
    PeritubularCapillary,
    Artery,
    /// Any other label. Retained in scenes, never scored.
    Other(String),
}

impl StructureClass {
    /// Canonical token used by the scene interchange format.
    pub fn token(&self) -> String {
        match self {
            StructureClass::Glomerulus => "glomerulus".into(),
            StructureClass::PeritubularCapillary => "peritubular_capillary".into(),
            StructureClass::Artery => "artery".into(),
            StructureClass::Other(name) => format!("other:{name}"),
        }
    }

    pub fn from_token(token: &str) -> Result<Self> {
        match token {
            "glomerulus" => Ok(StructureClass::Glomerulus),
            "peritubular_capillary" => Ok(StructureClass::PeritubularCapillary),
            "artery" => Ok(StructureClass::Artery),
            other => other
                .strip_prefix("other:")
                .map(|n| StructureClass::Other(n.to_string()))
                .ok_or_else(|| Error::SchemaViolation(format!("unknown structure class token `{token}`"))),
        }
    }

    /// Human-readable label that the default alias table maps back to `self`.
    pub fn label(&self) -> &str {
        match self {
            StructureClass::Glomerulus => "glomerulus",
            StructureClass::PeritubularCapillary => "peritubular capillary",
            StructureClass::Artery => "artery",
            StructureClass::Other(name) => name,
        }
    }
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// Detected inflammatory cell type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellClass {
    Lymphocyte,
    Monocyte,
    Other(String),
}

impl CellClass {
    pub fn token(&self) -> String {
        match self {
            CellClass::Lymphocyte => "lymphocyte".into(),
            CellClass::Monocyte => "monocyte".into(),
            CellClass::Other(name) => format!("other:{name}"),
        }
    }

    pub fn from_token(token: &str) -> Result<Self> {
        match token {
            "lymphocyte" => Ok(CellClass::Lymphocyte),
            "monocyte" => Ok(CellClass::Monocyte),
            other => other
                .strip_prefix("other:")
                .map(|n| CellClass::Other(n.to_string()))
                .ok_or_else(|| Error::SchemaViolation(format!("unknown cell class token `{token}`"))),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            CellClass::Lymphocyte => "lymphocyte",
            CellClass::Monocyte => "monocyte",
            CellClass::Other(name) => name,
        }
    }

    /// The cell classes counted by default.
    pub fn default_set() -> BTreeSet<CellClass> {
        [CellClass::Lymphocyte, CellClass::Monocyte].into_iter().collect()
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// Maps free-text labels (case-insensitive, trimmed) onto classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    structures: BTreeMap<String, StructureClass>,
    cells: BTreeMap<String, CellClass>,
}

impl Default for AliasTable {
    fn default() -> Self {
        let structures = [
            ("glomerulus", StructureClass::Glomerulus),
            ("glomerular tuft", StructureClass::Glomerulus),
            ("ptc", StructureClass::PeritubularCapillary),
            ("peritubular capillary", StructureClass::PeritubularCapillary),
            ("artery", StructureClass::Artery),
            ("arterial", StructureClass::Artery),
        ];
        let cells = [
            ("lymphocyte", CellClass::Lymphocyte),
            ("monocyte", CellClass::Monocyte),
        ];
        AliasTable {
            structures: structures.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            cells: cells.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

fn alias_key(name: &str) -> String {
    name.trim().to_lowercase()
}

impl AliasTable {
    pub fn empty() -> Self {
        AliasTable {
            structures: BTreeMap::new(),
            cells: BTreeMap::new(),
        }
    }

    pub fn insert_structure(&mut self, alias: &str, class: StructureClass) {
        self.structures.insert(alias_key(alias), class);
    }

    pub fn insert_cell(&mut self, alias: &str, class: CellClass) {
        self.cells.insert(alias_key(alias), class);
    }

    /// Unmapped names become `Other(name)` with the name as written.
    pub fn structure(&self, name: &str) -> StructureClass {
        self.structures
            .get(&alias_key(name))
            .cloned()
            .unwrap_or_else(|| StructureClass::Other(name.to_string()))
    }

    pub fn cell(&self, name: &str) -> CellClass {
        self.cells
            .get(&alias_key(name))
            .cloned()
            .unwrap_or_else(|| CellClass::Other(name.to_string()))
    }

    pub fn structure_aliases(&self) -> impl Iterator<Item = (&str, &StructureClass)> {
        self.structures.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn cell_aliases(&self) -> impl Iterator<Item = (&str, &CellClass)> {
        self.cells.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// One segmented anatomical structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    pub id: String,
    pub class: StructureClass,
    pub polygon: PolygonWithHoles<T>,
    /// Source properties, passed through untouched.
    pub properties: BTreeMap<String, serde_json::Value>,
}

impl<T: Scalar> Instance<T> {
    pub fn new(id: impl Into<String>, class: StructureClass, polygon: PolygonWithHoles<T>) -> Self {
        Instance {
            id: id.into(),
            class,
            polygon,
            properties: BTreeMap::new(),
        }
    }
}

/// One verified inflammatory-cell point.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub id: String,
    pub point: Point2<T>,
    pub class: CellClass,
    pub confidence: f64,
}

impl<T: Scalar> Detection<T> {
    pub fn new(id: impl Into<String>, point: Point2<T>, class: CellClass, confidence: f64) -> Self {
        Detection {
            id: id.into(),
            point,
            class,
            confidence,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.point.is_finite() {
            return Err(Error::SchemaViolation(format!(
                "detection `{}` has a non-finite coordinate",
                self.id
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::SchemaViolation(format!(
                "detection `{}` confidence {} outside [0, 1]",
                self.id, self.confidence
            )));
        }
        Ok(())
    }
}

/// All structures and detections of one tissue section.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionScene<T> {
    pub section_id: String,
    pub instances: Vec<Instance<T>>,
    pub detections: Vec<Detection<T>>,
    pub metadata: BTreeMap<String, String>,
}

impl<T: Scalar> SectionScene<T> {
    /// Builds a scene, checking id uniqueness and detection validity.
    pub fn new(
        section_id: impl Into<String>,
        instances: Vec<Instance<T>>,
        detections: Vec<Detection<T>>,
    ) -> Result<Self> {
        let scene = SectionScene {
            section_id: section_id.into(),
            instances,
            detections,
            metadata: BTreeMap::new(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn empty(section_id: impl Into<String>) -> Self {
        SectionScene {
            section_id: section_id.into(),
            instances: Vec::new(),
            detections: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for inst in &self.instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for det in &self.detections {
            if !seen.insert(det.id.as_str()) {
                return Err(Error::DuplicateId(det.id.clone()));
            }
            det.validate()?;
        }
        Ok(())
    }

    pub fn instances_of<'a>(&'a self, class: &'a StructureClass) -> impl Iterator<Item = &'a Instance<T>> + 'a {
        self.instances.iter().filter(move |i| &i.class == class)
    }

    pub fn count_of(&self, class: &StructureClass) -> usize {
        self.instances_of(class).count()
    }

    /// N: number of glomeruli.
    pub fn n_glomeruli(&self) -> usize {
        self.count_of(&StructureClass::Glomerulus)
    }

    /// K: number of peritubular capillaries.
    pub fn n_peritubular_capillaries(&self) -> usize {
        self.count_of(&StructureClass::PeritubularCapillary)
    }

    /// M: number of arteries.
    pub fn n_arteries(&self) -> usize {
        self.count_of(&StructureClass::Artery)
    }
}

/// Expert grades for one section. Absent grades were not annotated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruthGrades {
    pub section_id: String,
    pub g: Option<BanffGrade>,
    pub ptc: Option<BanffGrade>,
    pub v: Option<BanffGrade>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_aliases() {
        let a = AliasTable::default();
        assert_eq!(a.structure("Glomerular Tuft"), StructureClass::Glomerulus);
        assert_eq!(a.structure(" PTC "), StructureClass::PeritubularCapillary);
        assert_eq!(a.structure("arterial"), StructureClass::Artery);
        assert_eq!(a.structure("Tubule"), StructureClass::Other("Tubule".into()));
        assert_eq!(a.cell("Monocyte"), CellClass::Monocyte);
        assert_eq!(a.cell("neutrophil"), CellClass::Other("neutrophil".into()));
    }

    #[test]
    fn alias_override() {
        let mut a = AliasTable::default();
        a.insert_structure("Glom", StructureClass::Glomerulus);
        assert_eq!(a.structure("glom"), StructureClass::Glomerulus);
    }

    #[test]
    fn tokens_round_trip() {
        for c in [
            StructureClass::Glomerulus,
            StructureClass::PeritubularCapillary,
            StructureClass::Artery,
            StructureClass::Other("tubule".into()),
        ] {
            assert_eq!(StructureClass::from_token(&c.token()).unwrap(), c);
        }
        for c in [CellClass::Lymphocyte, CellClass::Monocyte, CellClass::Other("x".into())] {
            assert_eq!(CellClass::from_token(&c.token()).unwrap(), c);
        }
        assert!(StructureClass::from_token("vessel").is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let d = Detection::new("d0", Point2::new(0.0, 0.0), CellClass::Lymphocyte, 0.5);
        let err = SectionScene::<f64>::new("s", vec![], vec![d.clone(), d]).unwrap_err();
        assert_eq!(err, Error::DuplicateId("d0".into()));
    }
}
