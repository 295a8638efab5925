//! Banff grades g, ptc and v from per-instance inflammatory cell counts.
//!
//! * g: a glomerulus is inflamed when it holds more than three cells; the
//!   inflamed fraction rho is banded 0 / (0, 1/4) / [1/4, 1/2] / above 1/2.
//!   rho is kept as an exact ratio so the band edges are never misjudged.
//! * ptc and v: the maximum count over all instances is banded
//!   0 / 1..=4 / 5..=10 / above 10.
//!
//! A section with no instance of the required class is `Unscorable`, which is
//! distinct from grade 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{assign_detections, AssignmentTable, SpatialIndex};
use crate::ingest::{dedup_detections, CellClass, Detection, Instance, SectionScene, StructureClass};
use crate::scalar::Scalar;

/// A glomerulus with strictly more cells than this is inflamed.
pub const GLOMERULITIS_CELL_THRESHOLD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct BanffGrade(u8);

impl BanffGrade {
    pub const ALL: [BanffGrade; 4] = [BanffGrade(0), BanffGrade(1), BanffGrade(2), BanffGrade(3)];

    pub fn new(value: u8) -> Result<Self> {
        if value <= 3 {
            Ok(BanffGrade(value))
        } else {
            Err(Error::GradeOutOfRange {
                key: "grade".into(),
                value: value.to_string(),
            })
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for BanffGrade {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        BanffGrade::new(value)
    }
}

impl From<BanffGrade> for u8 {
    fn from(g: BanffGrade) -> u8 {
        g.0
    }
}

impl fmt::Display for BanffGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The three indicators this engine grades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indicator {
    G,
    Ptc,
    V,
}

impl Indicator {
    pub const ALL: [Indicator; 3] = [Indicator::G, Indicator::Ptc, Indicator::V];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::G => "g",
            Indicator::Ptc => "ptc",
            Indicator::V => "v",
        }
    }

    /// Structure class whose instances the indicator counts in.
    pub fn structure(self) -> StructureClass {
        match self {
            Indicator::G => StructureClass::Glomerulus,
            Indicator::Ptc => StructureClass::PeritubularCapillary,
            Indicator::V => StructureClass::Artery,
        }
    }

    fn unscorable_reason(self) -> &'static str {
        match self {
            Indicator::G => "no glomeruli",
            Indicator::Ptc => "no peritubular capillaries",
            Indicator::V => "no arteries",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grade for a glomerulitis ratio `inflamed / total` (`total > 0`).
pub fn g_grade(rho: Ratio<usize>) -> BanffGrade {
    let quarter = Ratio::new(1, 4);
    let half = Ratio::new(1, 2);
    let zero = Ratio::from_integer(0);
    if rho == zero {
        BanffGrade(0)
    } else if rho < quarter {
        BanffGrade(1)
    } else if rho <= half {
        BanffGrade(2)
    } else {
        BanffGrade(3)
    }
}

/// Grade for a maximum per-instance count (ptc and v share the bands).
pub fn max_count_grade(max_count: usize) -> BanffGrade {
    match max_count {
        0 => BanffGrade(0),
        1..=4 => BanffGrade(1),
        5..=10 => BanffGrade(2),
        _ => BanffGrade(3),
    }
}

/// Either a graded result or the reason no grade can be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome<D> {
    Scored(D),
    Unscorable { reason: String },
}

impl<D: Graded> Outcome<D> {
    pub fn grade(&self) -> Option<BanffGrade> {
        match self {
            Outcome::Scored(d) => Some(d.grade()),
            Outcome::Unscorable { .. } => None,
        }
    }
}

impl<D> Outcome<D> {
    pub fn detail(&self) -> Option<&D> {
        match self {
            Outcome::Scored(d) => Some(d),
            Outcome::Unscorable { .. } => None,
        }
    }

    pub fn is_scored(&self) -> bool {
        matches!(self, Outcome::Scored(_))
    }
}

pub trait Graded {
    fn grade(&self) -> BanffGrade;
}

/// Exact inflamed fraction. Serialized as `{numerator, denominator, value}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rho(pub Ratio<usize>);

impl Serialize for Rho {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            numerator: usize,
            denominator: usize,
            value: f64,
        }
        Repr {
            numerator: *self.0.numer(),
            denominator: *self.0.denom(),
            value: *self.0.numer() as f64 / *self.0.denom() as f64,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rho {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            numerator: usize,
            denominator: usize,
        }
        let r = Repr::deserialize(deserializer)?;
        if r.denominator == 0 {
            return Err(serde::de::Error::custom("rho denominator is zero"));
        }
        Ok(Rho(Ratio::new(r.numerator, r.denominator)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlomerulusCount {
    pub id: String,
    pub n_k: usize,
    /// 1 iff `n_k` exceeds the inflammation threshold.
    pub delta_k: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GScoreDetail {
    pub per_glomerulus: Vec<GlomerulusCount>,
    pub n_glomeruli: usize,
    pub n_inflamed: usize,
    pub rho_g: Rho,
    pub grade: BanffGrade,
}

impl Graded for GScoreDetail {
    fn grade(&self) -> BanffGrade {
        self.grade
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCount {
    pub id: String,
    pub count: usize,
}

/// Detail for the max-count indicators (ptc: ñ, v: m̃).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxCountDetail {
    pub per_instance: Vec<InstanceCount>,
    pub max_count: usize,
    pub grade: BanffGrade,
}

impl Graded for MaxCountDetail {
    fn grade(&self) -> BanffGrade {
        self.grade
    }
}

pub fn score_g(table: &AssignmentTable) -> Outcome<GScoreDetail> {
    let n = table.per_instance.len();
    if n == 0 {
        return Outcome::Unscorable {
            reason: Indicator::G.unscorable_reason().into(),
        };
    }
    let per_glomerulus: Vec<GlomerulusCount> = table
        .per_instance
        .iter()
        .map(|(id, a)| GlomerulusCount {
            id: id.clone(),
            n_k: a.count,
            delta_k: u8::from(a.count > GLOMERULITIS_CELL_THRESHOLD),
        })
        .collect();
    let n_inflamed = per_glomerulus.iter().filter(|g| g.delta_k == 1).count();
    let rho = Ratio::new(n_inflamed, n);
    Outcome::Scored(GScoreDetail {
        per_glomerulus,
        n_glomeruli: n,
        n_inflamed,
        rho_g: Rho(rho),
        grade: g_grade(rho),
    })
}

fn score_max(table: &AssignmentTable, indicator: Indicator) -> Outcome<MaxCountDetail> {
    if table.per_instance.is_empty() {
        return Outcome::Unscorable {
            reason: indicator.unscorable_reason().into(),
        };
    }
    let per_instance: Vec<InstanceCount> = table
        .per_instance
        .iter()
        .map(|(id, a)| InstanceCount {
            id: id.clone(),
            count: a.count,
        })
        .collect();
    let max_count = per_instance.iter().map(|c| c.count).max().unwrap_or(0);
    Outcome::Scored(MaxCountDetail {
        per_instance,
        max_count,
        grade: max_count_grade(max_count),
    })
}

pub fn score_ptc(table: &AssignmentTable) -> Outcome<MaxCountDetail> {
    score_max(table, Indicator::Ptc)
}

pub fn score_v(table: &AssignmentTable) -> Outcome<MaxCountDetail> {
    score_max(table, Indicator::V)
}

/// Detection handling for [`score_section`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringConfig {
    pub min_confidence: f64,
    /// Cell classes counted for g, ptc and v respectively.
    pub g_classes: BTreeSet<CellClass>,
    pub ptc_classes: BTreeSet<CellClass>,
    pub v_classes: BTreeSet<CellClass>,
    /// Same-class suppression radius in pixels; `None` disables dedup.
    pub dedup_radius: Option<f64>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig::with_classes(CellClass::default_set())
    }
}

impl ScoringConfig {
    pub fn with_classes(classes: BTreeSet<CellClass>) -> Self {
        ScoringConfig {
            min_confidence: 0.5,
            g_classes: classes.clone(),
            ptc_classes: classes.clone(),
            v_classes: classes,
            dedup_radius: None,
        }
    }

    pub fn classes(&self, indicator: Indicator) -> &BTreeSet<CellClass> {
        match indicator {
            Indicator::G => &self.g_classes,
            Indicator::Ptc => &self.ptc_classes,
            Indicator::V => &self.v_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidSpec(format!(
                "min_confidence {} outside [0, 1]",
                self.min_confidence
            )));
        }
        if let Some(r) = self.dedup_radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidSpec(format!("dedup radius {r} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Flat key/value view embedded in every report.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let join = |set: &BTreeSet<CellClass>| {
            set.iter().map(CellClass::token).collect::<Vec<_>>().join(",")
        };
        let mut m = BTreeMap::new();
        m.insert("min_confidence".into(), self.min_confidence.to_string());
        m.insert("classes.g".into(), join(&self.g_classes));
        m.insert("classes.ptc".into(), join(&self.ptc_classes));
        m.insert("classes.v".into(), join(&self.v_classes));
        m.insert(
            "dedup_radius".into(),
            self.dedup_radius.map_or_else(|| "off".into(), |r| r.to_string()),
        );
        m
    }
}

/// Per-section output: the three indicators with their intermediates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub section_id: String,
    pub g: Outcome<GScoreDetail>,
    pub ptc: Outcome<MaxCountDetail>,
    pub v: Outcome<MaxCountDetail>,
    pub config: BTreeMap<String, String>,
}

impl ScoreReport {
    pub fn grade(&self, indicator: Indicator) -> Option<BanffGrade> {
        match indicator {
            Indicator::G => self.g.grade(),
            Indicator::Ptc => self.ptc.grade(),
            Indicator::V => self.v.grade(),
        }
    }

    pub fn grades(&self) -> [Option<BanffGrade>; 3] {
        Indicator::ALL.map(|i| self.grade(i))
    }

    /// Per-instance counts across all three indicators, keyed by instance id.
    pub fn instance_counts(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        if let Some(d) = self.g.detail() {
            out.extend(d.per_glomerulus.iter().map(|c| (c.id.as_str(), c.n_k)));
        }
        for d in [self.ptc.detail(), self.v.detail()].into_iter().flatten() {
            out.extend(d.per_instance.iter().map(|c| (c.id.as_str(), c.count)));
        }
        out
    }

    /// Deterministic JSON: sorted keys, trailing newline.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = serde_json::to_vec_pretty(&value).expect("JSON values always serialize");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedDocument(e.to_string()))
    }
}

fn indicator_table<T: Scalar>(
    instances: &[Instance<T>],
    detections: &[Detection<T>],
    indicator: Indicator,
    config: &ScoringConfig,
) -> Result<AssignmentTable> {
    let class = indicator.structure();
    let selected: Vec<Instance<T>> = instances.iter().filter(|i| i.class == class).cloned().collect();
    let classes = config.classes(indicator);
    let dets: Vec<Detection<T>> = detections
        .iter()
        .filter(|d| classes.contains(&d.class))
        .cloned()
        .collect();
    let index = SpatialIndex::build(&selected);
    assign_detections(&dets, &selected, &index)
}

/// Filters detections, assigns them to structures and grades all three indicators.
pub fn score_section<T: Scalar>(scene: &SectionScene<T>, config: &ScoringConfig) -> Result<ScoreReport> {
    config.validate()?;
    scene.validate()?;
    let mut detections: Vec<Detection<T>> = scene
        .detections
        .iter()
        .filter(|d| d.confidence >= config.min_confidence)
        .cloned()
        .collect();
    if let Some(radius) = config.dedup_radius {
        detections = dedup_detections(&detections, radius);
    }

    let g_table = indicator_table(&scene.instances, &detections, Indicator::G, config)?;
    let ptc_table = indicator_table(&scene.instances, &detections, Indicator::Ptc, config)?;
    let v_table = indicator_table(&scene.instances, &detections, Indicator::V, config)?;

    Ok(ScoreReport {
        section_id: scene.section_id.clone(),
        g: score_g(&g_table),
        ptc: score_ptc(&ptc_table),
        v: score_v(&v_table),
        config: config.snapshot(),
    })
}
