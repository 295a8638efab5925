use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_radius, random_cell, sample_in_convex, scene_canvas, to_point, to_polygon, uniform_in_box, Placer};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::ingest::{Detection, Instance, SectionScene, StructureClass};
use crate::scalar::Scalar;

/// Per-class probability of dropping each instance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmissionProbs {
    pub glomerulus: f64,
    pub peritubular_capillary: f64,
    pub artery: f64,
}

impl OmissionProbs {
    pub fn get(&self, class: &StructureClass) -> f64 {
        match class {
            StructureClass::Glomerulus => self.glomerulus,
            StructureClass::PeritubularCapillary => self.peritubular_capillary,
            StructureClass::Artery => self.artery,
            StructureClass::Other(_) => 0.0,
        }
    }
}

/// Fabricated instances of one class, each planted with a uniform number of
/// cells in `cells[0]..=cells[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hallucination {
    pub count: usize,
    pub cells: [usize; 2],
    pub radius: [f64; 2],
}

impl Default for Hallucination {
    fn default() -> Self {
        Hallucination {
            count: 0,
            cells: [0, 0],
            radius: [40.0, 80.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassHallucination {
    pub glomerulus: Hallucination,
    pub peritubular_capillary: Hallucination,
    pub artery: Hallucination,
}

/// Error-injection recipe. Applied in a fixed order: omission, hallucination,
/// false-negative dropout, false-positive insertion, coordinate jitter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub omit_instance_prob: OmissionProbs,
    /// Instances removed unconditionally (targeted omission).
    pub omit_instance_ids: BTreeSet<String>,
    pub hallucinate: ClassHallucination,
    pub detection_fn_prob: f64,
    pub detection_fp_count: usize,
    pub jitter_sigma: f64,
    /// `[x0, y0, x1, y1]`; defaults to the scene's canvas metadata.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canvas: Option<[f64; 4]>,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("omit_instance_prob.glomerulus", self.omit_instance_prob.glomerulus),
            ("omit_instance_prob.peritubular_capillary", self.omit_instance_prob.peritubular_capillary),
            ("omit_instance_prob.artery", self.omit_instance_prob.artery),
            ("detection_fn_prob", self.detection_fn_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "jitter_sigma = {} must be finite and >= 0",
                self.jitter_sigma
            )));
        }
        for (name, h, _) in self.hallucinations() {
            if h.count > 0 {
                check_radius(h.radius, name)?;
                if h.cells[0] > h.cells[1] {
                    return Err(Error::InvalidSpec(format!("{name}: cells range {:?} is inverted", h.cells)));
                }
            }
        }
        Ok(())
    }

    fn hallucinations(&self) -> [(&'static str, &Hallucination, StructureClass); 3] {
        [
            ("hallucinate.glomerulus", &self.hallucinate.glomerulus, StructureClass::Glomerulus),
            (
                "hallucinate.peritubular_capillary",
                &self.hallucinate.peritubular_capillary,
                StructureClass::PeritubularCapillary,
            ),
            ("hallucinate.artery", &self.hallucinate.artery, StructureClass::Artery),
        ]
    }
}

/// Injects segmentation and detection errors into a copy of `scene`.
///
/// Deterministic for a fixed `pspec.seed`; a spec with every magnitude at zero
/// returns a scene equal to the input.
pub fn perturb_scene<T: Scalar>(scene: &SectionScene<T>, pspec: &PerturbationSpec) -> Result<SectionScene<T>> {
    pspec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(pspec.seed);
    let mut out = scene.clone();

    // 1. structural omission
    out.instances.retain(|inst| {
        if pspec.omit_instance_ids.contains(&inst.id) {
            return false;
        }
        let p = pspec.omit_instance_prob.get(&inst.class);
        !(p > 0.0 && rng.random_bool(p))
    });

    // 2. structural hallucination
    let needs_canvas = pspec.detection_fp_count > 0 || pspec.hallucinations().iter().any(|(_, h, _)| h.count > 0);
    let canvas = if needs_canvas {
        Some(scene_canvas(scene, pspec.canvas)?)
    } else {
        None
    };
    if let Some(canvas) = canvas.filter(|_| pspec.hallucinations().iter().any(|(_, h, _)| h.count > 0)) {
        let mut placer = Placer::new(canvas);
        for inst in &out.instances {
            placer.occupy(&inst.polygon);
        }
        for (_, h, class) in pspec.hallucinations() {
            let token = class.token();
            for k in 0..h.count {
                let id = format!("halluc-{token}-{k}");
                let verts = placer.place_instance(&mut rng, h.radius, &id)?;
                let polygon = to_polygon::<T>(&verts).map_err(|e| e.in_feature(&id))?;
                let cells = rng.random_range(h.cells[0]..=h.cells[1]);
                for j in 0..cells {
                    let p = sample_in_convex(&mut rng, &verts);
                    let (cell_class, confidence) = random_cell(&mut rng);
                    out.detections
                        .push(Detection::new(format!("{id}-c{j}"), to_point(p), cell_class, confidence));
                }
                out.instances.push(Instance::new(id, class.clone(), polygon));
            }
        }
    }

    // 3. detection false negatives
    let p_fn = pspec.detection_fn_prob;
    if p_fn > 0.0 {
        out.detections.retain(|_| !rng.random_bool(p_fn));
    }

    // 4. detection false positives
    if let Some(canvas) = canvas.filter(|_| pspec.detection_fp_count > 0) {
        for k in 0..pspec.detection_fp_count {
            let p = uniform_in_box(&mut rng, &canvas);
            let (cell_class, confidence) = random_cell(&mut rng);
            out.detections
                .push(Detection::new(format!("fp-{k}"), to_point(p), cell_class, confidence));
        }
    }

    // 5. coordinate jitter; points may leave their instance
    if pspec.jitter_sigma > 0.0 {
        let normal = Normal::new(0.0, pspec.jitter_sigma)
            .map_err(|e| Error::InvalidSpec(format!("jitter_sigma: {e}")))?;
        for det in &mut out.detections {
            let (dx, dy) = (normal.sample(&mut rng), normal.sample(&mut rng));
            det.point = Point2::new(
                T::from_f64_lossy(det.point.x.to_f64_exact() + dx),
                T::from_f64_lossy(det.point.y.to_f64_exact() + dy),
            );
        }
    }

    out.validate()?;
    Ok(out)
}
