//! Rule-based Banff lesion grading for renal transplant biopsies.
//!
//! The engine grades glomerulitis (g), peritubular capillaritis (ptc) and
//! intimal arteritis (v) by assigning inflammatory-cell detections to
//! instance-segmented structures, compares the grades against expert
//! annotations, and measures how grades move under injected segmentation and
//! detection errors.
//!
//! Geometry and scenes are generic over the coordinate type ([`Scalar`]:
//! `f32` or `f64`); the aliases below fix the common `f64` case.

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod ingest;
pub mod render;
pub mod scalar;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use evaluation::{accumulate, summarize, AgreementSummary, ConfusionMatrix, GradePair};
pub use geometry::{
    assign_detections, point_in_polygon, polygon_area, AssignmentTable, BoundingBox, Point2,
    PolygonWithHoles, Ring, SpatialIndex,
};
pub use ingest::{
    AliasTable, CellClass, Detection, GroundTruthGrades, Instance, SectionScene, StructureClass,
};
pub use scoring::{score_section, BanffGrade, Indicator, Outcome, ScoreReport, ScoringConfig};

/// Tool version embedded in every emitted document.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Point = Point2<f64>;
pub type Polygon = PolygonWithHoles<f64>;
pub type BBox = BoundingBox<f64>;
pub type Scene = SectionScene<f64>;
pub type Structure = Instance<f64>;
pub type Cell = Detection<f64>;

pub type Scene32 = SectionScene<f32>;
pub type Polygon32 = PolygonWithHoles<f32>;
