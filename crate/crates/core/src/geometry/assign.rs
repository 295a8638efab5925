use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{point_in_polygon, SpatialIndex};
use crate::error::{Error, Result};
use crate::ingest::{Detection, Instance};
use crate::scalar::Scalar;

const DEFAULT_CHUNK: usize = 4096;

/// `(instance, detection)` hits and unmatched detections of one batch.
type ChunkHits = (Vec<(usize, usize)>, Vec<usize>);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceAssignment {
    pub count: usize,
    /// Contained detection ids, sorted.
    pub detection_ids: Vec<String>,
}

/// Detections contained in each instance, keyed by instance id.
///
/// A detection inside several overlapping instances appears under each of
/// them. Detections outside every instance are listed in `unassigned`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentTable {
    pub per_instance: BTreeMap<String, InstanceAssignment>,
    pub unassigned: Vec<String>,
}

impl AssignmentTable {
    /// Table with bare counts and no detection ids, for scoring precomputed counts.
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        AssignmentTable {
            per_instance: counts
                .into_iter()
                .map(|(id, count)| {
                    (
                        id.into(),
                        InstanceAssignment {
                            count,
                            detection_ids: Vec::new(),
                        },
                    )
                })
                .collect(),
            unassigned: Vec::new(),
        }
    }

    pub fn count(&self, instance_id: &str) -> Option<usize> {
        self.per_instance.get(instance_id).map(|a| a.count)
    }

    /// Keeps only the listed instances; `unassigned` is left untouched.
    pub fn restricted_to<'a, I>(&self, ids: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let per_instance = ids
            .into_iter()
            .filter_map(|id| self.per_instance.get(id).map(|a| (id.to_string(), a.clone())))
            .collect();
        AssignmentTable {
            per_instance,
            unassigned: self.unassigned.clone(),
        }
    }
}

/// Assigns every detection to all instances containing it (boundary-inclusive).
pub fn assign_detections<T: Scalar>(
    detections: &[Detection<T>],
    instances: &[Instance<T>],
    index: &SpatialIndex<T>,
) -> Result<AssignmentTable> {
    assign_detections_chunked(detections, instances, index, DEFAULT_CHUNK)
}

/// Same as [`assign_detections`], processing detections in parallel batches of
/// `chunk_size`. The result does not depend on the batch size.
pub fn assign_detections_chunked<T: Scalar>(
    detections: &[Detection<T>],
    instances: &[Instance<T>],
    index: &SpatialIndex<T>,
    chunk_size: usize,
) -> Result<AssignmentTable> {
    check_index(instances, index)?;
    let chunk_size = chunk_size.max(1);

    let partials: Vec<ChunkHits> = detections
        .par_chunks(chunk_size)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * chunk_size;
            let mut hits = Vec::new();
            let mut missed = Vec::new();
            for (offset, det) in chunk.iter().enumerate() {
                let d = base + offset;
                let mut found = false;
                index.visit_point(&det.point, |pos| {
                    if point_in_polygon(&det.point, &instances[pos].polygon) {
                        hits.push((pos, d));
                        found = true;
                    }
                });
                if !found {
                    missed.push(d);
                }
            }
            (hits, missed)
        })
        .collect();

    let mut contained: Vec<Vec<&str>> = vec![Vec::new(); instances.len()];
    let mut unassigned = Vec::new();
    for (hits, missed) in partials {
        for (pos, d) in hits {
            contained[pos].push(detections[d].id.as_str());
        }
        unassigned.extend(missed.into_iter().map(|d| detections[d].id.clone()));
    }
    unassigned.sort_unstable();

    let per_instance = instances
        .iter()
        .zip(contained)
        .map(|(inst, mut ids)| {
            ids.sort_unstable();
            (
                inst.id.clone(),
                InstanceAssignment {
                    count: ids.len(),
                    detection_ids: ids.into_iter().map(str::to_string).collect(),
                },
            )
        })
        .collect();

    Ok(AssignmentTable {
        per_instance,
        unassigned,
    })
}

fn check_index<T: Scalar>(instances: &[Instance<T>], index: &SpatialIndex<T>) -> Result<()> {
    if index.len() != instances.len() {
        return Err(Error::IndexMismatch(format!(
            "index covers {} instances, {} provided",
            index.len(),
            instances.len()
        )));
    }
    if let Some((inst, id)) = instances
        .iter()
        .zip(index.ids())
        .find(|(inst, id)| inst.id != **id)
    {
        return Err(Error::IndexMismatch(format!(
            "instance `{}` where the index expects `{}`",
            inst.id, id
        )));
    }
    Ok(())
}
