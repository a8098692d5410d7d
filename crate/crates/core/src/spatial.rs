//! KD-tree over 3D points with exact k-nearest-neighbor queries, and the
//! pairing of sparse anchors with their nearest ground-truth primitives.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{DENSIFY_FACTOR, ENCODER_NEIGHBORS};
use crate::types::{ColoredPoint, GaussianPrimitive, Vec3};

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced KD-tree. Point ids are positions in the build input; duplicate
/// points keep distinct ids.
#[derive(Debug, Clone)]
pub struct KdIndex {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

/// Heap entry ordered by squared distance, then id.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    id: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdIndex {
    pub fn build(points: &[Vec3]) -> Result<Self> {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &[Vec3], leaf_size: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("indexed point".into()));
        }
        let mut index = KdIndex {
            points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
            leaf_size: leaf_size.max(1),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        if end - start <= self.leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        // Split on the axis of widest spread, at the median.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &id in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[id][a]);
                hi[a] = hi[a].max(self.points[id][a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            points[i][axis].total_cmp(&points[j][axis]).then(i.cmp(&j))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[slot] = Node::Split { axis, value, left, right };
        slot
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn point(&self, id: usize) -> Vec3 {
        Vec3::from(self.points[id])
    }

    /// The `k` nearest points, ascending by distance, ties broken by lower id.
    pub fn knn(&self, query: &Vec3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.len() {
            return Err(Error::InsufficientPoints { requested: k, available: self.len() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = [query.x, query.y, query.z];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, &q, k, &mut heap);
        let mut found = heap.into_vec();
        found.sort();
        Ok(found.into_iter().map(|c| Neighbor { id: c.id, distance: c.dist2.sqrt() }).collect())
    }

    fn search(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start..end] {
                    let c = Candidate { dist2: dist2(&self.points[id], q), id };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // `<=` keeps equidistant points with lower ids reachable.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

pub fn build_index(points: &[Vec3]) -> Result<KdIndex> {
    KdIndex::build(points)
}

pub fn knn(index: &KdIndex, query: &Vec3, k: usize) -> Result<Vec<Neighbor>> {
    index.knn(query, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDelta {
    /// `μ_target − p_anchor`.
    pub position: Vec3,
    /// `C_target − C_anchor`.
    pub color: Vec3,
}

/// One sparse anchor, its encoder neighbors and its ground-truth targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub anchor: ColoredPoint,
    /// Nearest sparse points excluding the anchor itself, nearest first.
    pub neighbors: [ColoredPoint; ENCODER_NEIGHBORS],
    /// Nearest ground-truth primitives, ascending by distance of their means.
    pub targets: Vec<GaussianPrimitive>,
    pub target_ids: Vec<usize>,
    pub target_distances: Vec<f64>,
    pub target_deltas: Vec<TargetDelta>,
    /// Mean 3-NN distance of the sparse cloud; the network's scale unit.
    pub scene_scale: f64,
}

impl TrainingSample {
    pub fn new(
        anchor: ColoredPoint,
        neighbors: [ColoredPoint; ENCODER_NEIGHBORS],
        targets: Vec<GaussianPrimitive>,
        target_ids: Vec<usize>,
        scene_scale: f64,
    ) -> Self {
        let target_distances = targets.iter().map(|t| (t.mean - anchor.position).norm()).collect();
        let target_deltas = targets
            .iter()
            .map(|t| TargetDelta { position: t.mean - anchor.position, color: t.color - anchor.color })
            .collect();
        TrainingSample { anchor, neighbors, targets, target_ids, target_distances, target_deltas, scene_scale }
    }

    /// Sample with sequential target ids, for fixtures.
    pub fn synthetic(
        anchor: ColoredPoint,
        neighbors: [ColoredPoint; ENCODER_NEIGHBORS],
        targets: Vec<GaussianPrimitive>,
        scene_scale: f64,
    ) -> Self {
        let ids = (0..targets.len()).collect();
        Self::new(anchor, neighbors, targets, ids, scene_scale)
    }
}

/// Encoder neighbors of every point: its nearest other points, nearest
/// first. Clouds with fewer than four points repeat what is available
/// (the anchor itself when alone).
pub fn encoder_neighbors(index: &KdIndex, points: &[ColoredPoint]) -> Result<Vec<[usize; ENCODER_NEIGHBORS]>> {
    let k = (ENCODER_NEIGHBORS + 1).min(index.len());
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let found = index.knn(&p.position, k)?;
            let others: Vec<usize> = found.iter().map(|n| n.id).filter(|id| *id != i).take(ENCODER_NEIGHBORS).collect();
            let mut out = [i; ENCODER_NEIGHBORS];
            if !others.is_empty() {
                for (slot, id) in out.iter_mut().zip(others.iter().cycle()) {
                    *slot = *id;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Mean over points of the mean distance to their encoder neighbors.
pub fn mean_neighbor_distance(points: &[ColoredPoint], neighbors: &[[usize; ENCODER_NEIGHBORS]]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let sum: f64 = points
        .iter()
        .zip(neighbors)
        .map(|(p, ns)| ns.iter().map(|&j| (points[j].position - p.position).norm()).sum::<f64>() / ENCODER_NEIGHBORS as f64)
        .sum();
    sum / points.len() as f64
}

/// One sample per sparse point, paired with its [`DENSIFY_FACTOR`] nearest
/// ground-truth primitives.
pub fn build_training_set(sparse: &[ColoredPoint], dense_gt: &[GaussianPrimitive]) -> Result<Vec<TrainingSample>> {
    build_training_set_with(sparse, dense_gt, DENSIFY_FACTOR)
}

pub fn build_training_set_with(
    sparse: &[ColoredPoint],
    dense_gt: &[GaussianPrimitive],
    targets_per_anchor: usize,
) -> Result<Vec<TrainingSample>> {
    if dense_gt.len() < targets_per_anchor {
        return Err(Error::InsufficientGroundTruth { required: targets_per_anchor, available: dense_gt.len() });
    }
    if sparse.is_empty() {
        return Err(Error::InsufficientInput { required: 1, available: 0 });
    }
    let sparse_index = KdIndex::build(&sparse.iter().map(|p| p.position).collect::<Vec<_>>())?;
    let neighbors = encoder_neighbors(&sparse_index, sparse)?;
    let scene_scale = mean_neighbor_distance(sparse, &neighbors);
    let dense_index = KdIndex::build(&dense_gt.iter().map(|g| g.mean).collect::<Vec<_>>())?;

    sparse
        .par_iter()
        .zip(neighbors.par_iter())
        .map(|(anchor, ns)| {
            let found = dense_index.knn(&anchor.position, targets_per_anchor)?;
            let targets = found.iter().map(|n| dense_gt[n.id]).collect();
            let ids = found.iter().map(|n| n.id).collect();
            let mut sample = TrainingSample::new(*anchor, ns.map(|j| sparse[j]), targets, ids, scene_scale);
            sample.target_distances = found.iter().map(|n| n.distance).collect();
            Ok(sample)
        })
        .collect()
}
