use super::{BoundingBox, Point2};
use crate::ingest::Instance;
use crate::scalar::Scalar;

const NODE_CAPACITY: usize = 16;

#[derive(Debug, Clone)]
struct Node<T> {
    bbox: BoundingBox<T>,
    /// Range into the level below (or into `items` for leaves).
    first: usize,
    len: usize,
}

/// Sort-Tile-Recursive packed R-tree over instance bounding boxes.
///
/// Built once, never mutated. A point query returns the positions (into the
/// instance list the index was built from) of every instance whose bounding
/// box contains the point, in ascending order.
#[derive(Debug, Clone)]
pub struct SpatialIndex<T> {
    ids: Vec<String>,
    /// `(bbox, instance position)` in tree order.
    items: Vec<(BoundingBox<T>, usize)>,
    /// `levels[0]` are leaves over `items`; the last level is the root level.
    levels: Vec<Vec<Node<T>>>,
}

impl<T: Scalar> SpatialIndex<T> {
    pub fn build(instances: &[Instance<T>]) -> Self {
        let boxes: Vec<BoundingBox<T>> = instances.iter().map(|i| *i.polygon.bbox()).collect();
        let mut index = Self::from_boxes(&boxes);
        index.ids = instances.iter().map(|i| i.id.clone()).collect();
        index
    }

    pub fn from_boxes(boxes: &[BoundingBox<T>]) -> Self {
        let mut items: Vec<(BoundingBox<T>, usize)> =
            boxes.iter().copied().enumerate().map(|(i, b)| (b, i)).collect();
        let mut levels = Vec::new();
        if !items.is_empty() {
            str_sort(&mut items, |(b, _)| b.center());
            let mut level = pack(&items, |(b, _)| *b);
            while level.len() > 1 {
                // Reordering this level is safe: parents are packed over the
                // reordered slice and children keep their own ranges.
                str_sort(&mut level, |n| n.bbox.center());
                let parents = pack(&level, |n| n.bbox);
                levels.push(level);
                level = parents;
            }
            levels.push(level);
        }
        SpatialIndex {
            ids: vec![String::new(); boxes.len()],
            items,
            levels,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Instance ids in construction order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Positions of all instances whose bounding box contains `p`, ascending.
    pub fn query_point(&self, p: &Point2<T>) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_point(p, |i| out.push(i));
        out.sort_unstable();
        out
    }

    pub(crate) fn visit_point<F: FnMut(usize)>(&self, p: &Point2<T>, mut f: F) {
        let Some(root_level) = self.levels.len().checked_sub(1) else {
            return;
        };
        let mut stack: Vec<(usize, usize)> = vec![(root_level, 0)];
        while let Some((level, idx)) = stack.pop() {
            let node = &self.levels[level][idx];
            if !node.bbox.contains(p) {
                continue;
            }
            let range = node.first..node.first + node.len;
            if level == 0 {
                for (bbox, pos) in &self.items[range] {
                    if bbox.contains(p) {
                        f(*pos);
                    }
                }
            } else {
                stack.extend(range.map(|child| (level - 1, child)));
            }
        }
    }
}

/// Orders entries into STR tiles: vertical slabs by x, then by y within a slab.
fn str_sort<E, T, C>(entries: &mut [E], center: C)
where
    T: Scalar,
    C: Fn(&E) -> Point2<T>,
{
    let n = entries.len();
    let node_count = n.div_ceil(NODE_CAPACITY);
    let slabs = (node_count as f64).sqrt().ceil().max(1.0) as usize;
    let slab_size = NODE_CAPACITY * node_count.div_ceil(slabs);
    let key_x = |e: &E| center(e).x.to_f64_exact();
    let key_y = |e: &E| center(e).y.to_f64_exact();
    entries.sort_by(|a, b| key_x(a).total_cmp(&key_x(b)));
    for slab in entries.chunks_mut(slab_size) {
        slab.sort_by(|a, b| key_y(a).total_cmp(&key_y(b)));
    }
}

fn pack<E, T, B>(entries: &[E], bbox_of: B) -> Vec<Node<T>>
where
    T: Scalar,
    B: Fn(&E) -> BoundingBox<T>,
{
    entries
        .chunks(NODE_CAPACITY)
        .enumerate()
        .map(|(c, chunk)| {
            let bbox = chunk
                .iter()
                .map(&bbox_of)
                .reduce(|a, b| a.union(&b))
                .expect("non-empty chunk");
            Node {
                bbox,
                first: c * NODE_CAPACITY,
                len: chunk.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox<f64> {
        BoundingBox::new(Point2::new(x0, y0), Point2::new(x1, y1)).unwrap()
    }

    #[test]
    fn empty_index_returns_nothing() {
        let index = SpatialIndex::<f64>::from_boxes(&[]);
        assert!(index.is_empty());
        assert!(index.query_point(&Point2::new(0.0, 0.0)).is_empty());
    }

    #[test]
    fn single_box() {
        let index = SpatialIndex::from_boxes(&[bbox(0.0, 0.0, 2.0, 2.0)]);
        assert_eq!(index.query_point(&Point2::new(1.0, 1.0)), vec![0]);
        assert_eq!(index.query_point(&Point2::new(2.0, 2.0)), vec![0]);
        assert!(index.query_point(&Point2::new(3.0, 1.0)).is_empty());
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 15, 16, 17, 255, 256, 257, 1000] {
            let boxes: Vec<_> = (0..n)
                .map(|_| {
                    let x: f64 = rng.random_range(0.0..1000.0);
                    let y: f64 = rng.random_range(0.0..1000.0);
                    bbox(x, y, x + rng.random_range(0.0..80.0), y + rng.random_range(0.0..80.0))
                })
                .collect();
            let index = SpatialIndex::from_boxes(&boxes);
            for _ in 0..2000 {
                let p = Point2::new(rng.random_range(-10.0..1090.0), rng.random_range(-10.0..1090.0));
                let expected: Vec<usize> = (0..n).filter(|&i| boxes[i].contains(&p)).collect();
                assert_eq!(index.query_point(&p), expected);
            }
        }
    }
}
