//! Immutable 2-D KD-tree with exact k-nearest and fixed-radius queries.
//!
//! Query results are ordered by `(distance, point_index)`, so equal-distance
//! points (duplicates included) always come back in ordinal order. The
//! linear-scan functions at the bottom of this module implement the same
//! contracts exhaustively and serve as the reference the tree is checked
//! against.

use std::cmp::Ordering;

use thiserror::Error;

use crate::geometry::{euclidean_distance, Point2D};

pub const DEFAULT_BUCKET_SIZE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("cannot build a spatial index over zero points")]
    Empty,
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("too many points for a 32-bit index: {0}")]
    TooLarge(usize),
}

/// One query hit: ordinal into the indexed collection plus its true
/// Euclidean distance from the query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub point_index: usize,
    pub distance: f64,
}

impl Neighbor {
    #[inline]
    fn key_cmp(&self, other: &Neighbor) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.point_index.cmp(&other.point_index))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point2D>,
    // ordinals permuted so that every leaf owns a contiguous range
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
    bucket_size: usize,
}

impl KdTree {
    pub fn build(points: &[Point2D]) -> Result<KdTree, IndexError> {
        Self::with_bucket_size(points, DEFAULT_BUCKET_SIZE)
    }

    /// Builds over `points` with the given leaf capacity (clamped to ≥ 1).
    /// The bucket size affects speed only, never results.
    pub fn with_bucket_size(points: &[Point2D], bucket_size: usize) -> Result<KdTree, IndexError> {
        if points.is_empty() {
            return Err(IndexError::Empty);
        }
        if points.len() > u32::MAX as usize {
            return Err(IndexError::TooLarge(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(IndexError::NonFinite(i));
        }
        let bucket_size = bucket_size.max(1);
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / bucket_size + 1),
            root: 0,
            bucket_size,
        };
        tree.root = tree.build_node(0, points.len(), 0);
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize, depth: usize) -> u32 {
        let len = end - start;
        if len <= self.bucket_size {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }
        let axis = depth % 2;
        let mid = len / 2;
        let points = &self.points;
        // total order on (coordinate, ordinal) makes the split deterministic
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize]
                .coord(axis)
                .total_cmp(&points[b as usize].coord(axis))
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[start + mid] as usize].coord(axis);
        let left = self.build_node(start, start + mid, depth + 1);
        let right = self.build_node(start + mid, end, depth + 1);
        self.nodes.push(Node::Split {
            axis: axis as u8,
            value,
            left,
            right,
        });
        (self.nodes.len() - 1) as u32
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn bucket_size(&self) -> usize {
        self.bucket_size
    }

    /// Up to `k` nearest indexed points with distance ≤ `max_dist`, exact.
    pub fn knn(&self, query: Point2D, k: usize, max_dist: f64) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k.min(self.len()));
        if k == 0 {
            return best;
        }
        self.knn_node(self.root, query, k, max_dist, &mut best);
        best
    }

    fn knn_node(&self, node: u32, q: Point2D, k: usize, max_dist: f64, best: &mut Vec<Neighbor>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &ord in &self.order[start as usize..end as usize] {
                    let cand = Neighbor {
                        point_index: ord as usize,
                        distance: euclidean_distance(q, self.points[ord as usize]),
                    };
                    if !(cand.distance <= max_dist) {
                        continue;
                    }
                    if best.len() == k {
                        if cand.key_cmp(best.last().unwrap()) != Ordering::Less {
                            continue;
                        }
                        best.pop();
                    }
                    let at = best.partition_point(|b| b.key_cmp(&cand) == Ordering::Less);
                    best.insert(at, cand);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q.coord(axis as usize) - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_node(near, q, k, max_dist, best);
                let bound = if best.len() < k {
                    max_dist
                } else {
                    best.last().unwrap().distance
                };
                // `<=` keeps equal-distance candidates with lower ordinals reachable
                if diff.abs() <= bound {
                    self.knn_node(far, q, k, max_dist, best);
                }
            }
        }
    }

    /// All indexed points within distance ≤ `r` of `query`, sorted.
    pub fn radius_query(&self, query: Point2D, r: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.radius_query_into(query, r, &mut out);
        out
    }

    /// [`KdTree::radius_query`] into a caller-owned buffer (cleared first).
    pub fn radius_query_into(&self, query: Point2D, r: f64, out: &mut Vec<Neighbor>) {
        out.clear();
        self.radius_node(self.root, query, r, out);
        out.sort_unstable_by(Neighbor::key_cmp);
    }

    fn radius_node(&self, node: u32, q: Point2D, r: f64, out: &mut Vec<Neighbor>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &ord in &self.order[start as usize..end as usize] {
                    let d = euclidean_distance(q, self.points[ord as usize]);
                    if d <= r {
                        out.push(Neighbor {
                            point_index: ord as usize,
                            distance: d,
                        });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q.coord(axis as usize) - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.radius_node(near, q, r, out);
                if diff.abs() <= r {
                    self.radius_node(far, q, r, out);
                }
            }
        }
    }

    /// Checks the structural invariants: every ordinal lives in exactly one
    /// leaf, and every split separates its subtrees on the split axis.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![0u32; self.len()];
        let ok = self.check_node(self.root, &mut seen).is_some();
        ok && seen.iter().all(|&c| c == 1)
    }

    // Returns the bounding box of the subtree's points.
    fn check_node(&self, node: u32, seen: &mut [u32]) -> Option<(Point2D, Point2D)> {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                let mut lo = Point2D::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point2D::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for &ord in &self.order[start as usize..end as usize] {
                    seen[ord as usize] += 1;
                    let p = self.points[ord as usize];
                    lo = Point2D::new(lo.x.min(p.x), lo.y.min(p.y));
                    hi = Point2D::new(hi.x.max(p.x), hi.y.max(p.y));
                }
                Some((lo, hi))
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let (llo, lhi) = self.check_node(left, seen)?;
                let (rlo, rhi) = self.check_node(right, seen)?;
                let axis = axis as usize;
                if lhi.coord(axis) > value || rlo.coord(axis) < value {
                    return None;
                }
                Some((
                    Point2D::new(llo.x.min(rlo.x), llo.y.min(rlo.y)),
                    Point2D::new(lhi.x.max(rhi.x), lhi.y.max(rhi.y)),
                ))
            }
        }
    }
}

/// Exhaustive counterpart of [`KdTree::knn`].
pub fn linear_scan_knn(points: &[Point2D], query: Point2D, k: usize, max_dist: f64) -> Vec<Neighbor> {
    let mut all = linear_scan_radius(points, query, max_dist);
    all.truncate(k);
    all
}

/// Exhaustive counterpart of [`KdTree::radius_query`].
pub fn linear_scan_radius(points: &[Point2D], query: Point2D, r: f64) -> Vec<Neighbor> {
    let mut out: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| Neighbor {
            point_index: i,
            distance: euclidean_distance(query, p),
        })
        .filter(|n| n.distance <= r)
        .collect();
    out.sort_by(Neighbor::key_cmp);
    out
}
