//! Risk-zone clustering of MCP groups and zone measurement.
//!
//! Within each circuit-configuration group, MCPs are flood-filled into
//! clusters: two poles share a zone when a chain of hops, each no longer
//! than the proximity radius, connects them. Each cluster's extent is the
//! total edge length of the Euclidean minimum spanning tree over its poles,
//! which on a straight corridor is simply the pole-to-pole run length.

use std::collections::VecDeque;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{convex_hull, euclidean_distance, mean_point, BBox, Point2D, Ring, METERS_PER_MILE};
use crate::mcp_detect::{CircuitSet, McpGroup};
use crate::spatial_index::{KdTree, Neighbor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZoningError {
    #[error("invalid zoning parameters: {0}")]
    InvalidParams(String),
    #[error("invalid histogram parameters: {0}")]
    InvalidHistogram(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtentMethod {
    /// Euclidean minimum spanning tree length.
    #[default]
    Mst,
    /// Sum of hops between consecutive poles in flood-fill discovery order.
    /// Order-dependent; kept for comparison runs only.
    DiscoveryOrder,
}

impl FromStr for ExtentMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mst" => Ok(ExtentMethod::Mst),
            "discovery-order" => Ok(ExtentMethod::DiscoveryOrder),
            other => Err(format!("unknown extent method `{other}` (expected mst or discovery-order)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoningParams {
    /// Proximity radius in meters; hops of exactly this length connect.
    pub radius: f64,
    /// Zones shorter than this (meters) are not emitted.
    pub min_extent: f64,
    /// Zones with fewer poles are not emitted.
    pub min_poles: usize,
    pub extent: ExtentMethod,
}

impl Default for ZoningParams {
    fn default() -> Self {
        Self {
            radius: 200.0,
            min_extent: 200.0,
            min_poles: 2,
            extent: ExtentMethod::Mst,
        }
    }
}

impl ZoningParams {
    pub fn validate(&self) -> Result<(), ZoningError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(ZoningError::InvalidParams(format!("radius must be > 0, got {}", self.radius)));
        }
        if !(self.min_extent >= 0.0) {
            return Err(ZoningError::InvalidParams(format!(
                "min_extent must be ≥ 0, got {}",
                self.min_extent
            )));
        }
        if self.min_poles < 1 {
            return Err(ZoningError::InvalidParams("min_poles must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskZone {
    pub zone_id: String,
    pub circuits: CircuitSet,
    /// Pole ordinals in discovery order.
    pub members: Vec<usize>,
    /// Pole ids in discovery order.
    pub pole_ids: Vec<String>,
    pub extent_m: f64,
    pub pole_count: usize,
    pub hull: Ring,
    pub bbox: BBox,
    pub centroid: Point2D,
}

impl RiskZone {
    pub fn extent_mi(&self) -> f64 {
        self.extent_m / METERS_PER_MILE
    }
}

/// Flood-fill clusters of one group, as lists of indices into
/// `group.members`, each in discovery order.
pub fn cluster_member_indices(group: &McpGroup, radius: f64) -> Vec<Vec<usize>> {
    if group.members.is_empty() {
        return Vec::new();
    }
    // seed order and tie-break both follow pole ordinal
    let mut order: Vec<usize> = (0..group.members.len()).collect();
    order.sort_by_key(|&i| group.members[i].pole);
    let locations: Vec<Point2D> = order.iter().map(|&i| group.members[i].location).collect();
    let tree = KdTree::build(&locations).expect("non-empty finite locations");

    let mut visited = vec![false; locations.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    let mut hits: Vec<Neighbor> = Vec::new();
    for seed in 0..locations.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut cluster = vec![order[seed]];
        queue.push_back(seed);
        while let Some(q) = queue.pop_front() {
            tree.radius_query_into(locations[q], radius, &mut hits);
            for n in &hits {
                if !visited[n.point_index] {
                    visited[n.point_index] = true;
                    cluster.push(order[n.point_index]);
                    queue.push_back(n.point_index);
                }
            }
        }
        clusters.push(cluster);
    }
    clusters
}

/// Flood-fill clusters of one group as pole-ordinal lists.
pub fn cluster_group(group: &McpGroup, params: &ZoningParams) -> Vec<Vec<usize>> {
    cluster_member_indices(group, params.radius)
        .into_iter()
        .map(|c| c.into_iter().map(|i| group.members[i].pole).collect())
        .collect()
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Euclidean MST length of `points`; 0 for fewer than two points.
pub fn zone_extent(points: &[Point2D]) -> f64 {
    zone_extent_from(points, None)
}

/// [`zone_extent`] starting the edge search at `radius`, which is exact and
/// cheap when the points are already known to be connected at that radius.
pub fn zone_extent_within(points: &[Point2D], radius: f64) -> f64 {
    zone_extent_from(points, Some(radius))
}

// Kruskal over the graph of pairs within `reach`. If that graph is connected
// its MST is the Euclidean MST (every cut is crossed by an edge ≤ reach, so
// no EMST edge is longer). Otherwise the reach doubles.
fn zone_extent_from(points: &[Point2D], start: Option<f64>) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let tree = KdTree::build(points).expect("finite points");
    let mut reach = match start {
        Some(r) if r > 0.0 => r,
        // the longest nearest-neighbor link is a lower bound on the longest EMST edge
        _ => points
            .iter()
            .map(|&p| tree.knn(p, 2, f64::INFINITY).last().map_or(0.0, |n| n.distance))
            .fold(0.0, f64::max),
    };
    let bb = BBox::of(points).expect("non-empty");
    let diagonal = euclidean_distance(bb.min, bb.max);
    let mut hits = Vec::new();
    loop {
        let mut edges: Vec<(f64, usize, usize)> = Vec::new();
        for (i, &p) in points.iter().enumerate() {
            tree.radius_query_into(p, reach, &mut hits);
            edges.extend(hits.iter().filter(|h| h.point_index > i).map(|h| (h.distance, i, h.point_index)));
        }
        edges.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut dsu = DisjointSet::new(n);
        let mut total = 0.0;
        let mut joined = 0;
        for (d, a, b) in edges {
            if dsu.union(a, b) {
                total += d;
                joined += 1;
                if joined == n - 1 {
                    return total;
                }
            }
        }
        reach = if reach >= diagonal {
            // unreachable for finite input, kept as a guard against a stalled loop
            return total;
        } else if reach > 0.0 {
            (reach * 2.0).min(diagonal)
        } else {
            diagonal
        };
    }
}

/// Sum of consecutive hop lengths in the given order.
pub fn discovery_order_extent(points: &[Point2D]) -> f64 {
    points.windows(2).map(|w| euclidean_distance(w[0], w[1])).sum()
}

/// Stable zone identifier from the circuit set and the member pole ids.
pub fn zone_id(circuits: &CircuitSet, pole_ids: &[String]) -> String {
    let mut ids: Vec<&str> = pole_ids.iter().map(String::as_str).collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    h.update(circuits.ids().join("\u{1f}").as_bytes());
    h.update(b"\x1e");
    h.update(ids.join("\u{1f}").as_bytes());
    let digest = h.finalize();
    format!("Z-{}", &hex::encode(digest)[..12])
}

fn materialize(group: &McpGroup, cluster: &[usize], params: &ZoningParams) -> RiskZone {
    let locations: Vec<Point2D> = cluster.iter().map(|&i| group.members[i].location).collect();
    let pole_ids: Vec<String> = cluster.iter().map(|&i| group.members[i].pole_id.clone()).collect();
    let extent_m = match params.extent {
        ExtentMethod::Mst => zone_extent_within(&locations, params.radius),
        ExtentMethod::DiscoveryOrder => discovery_order_extent(&locations),
    };
    RiskZone {
        zone_id: zone_id(&group.key, &pole_ids),
        circuits: group.key.clone(),
        members: cluster.iter().map(|&i| group.members[i].pole).collect(),
        pole_count: cluster.len(),
        extent_m,
        hull: convex_hull(&locations).expect("non-empty cluster"),
        bbox: BBox::of(&locations).expect("non-empty cluster"),
        centroid: mean_point(&locations).expect("non-empty cluster"),
        pole_ids,
    }
}

/// Clusters every group, measures each cluster, drops those below the
/// emission thresholds and orders the rest by (circuits, centroid).
pub fn build_zones(groups: &[McpGroup], params: &ZoningParams) -> Result<Vec<RiskZone>, ZoningError> {
    params.validate()?;
    let mut zones: Vec<RiskZone> = groups
        .par_iter()
        .flat_map_iter(|g| {
            cluster_member_indices(g, params.radius)
                .into_iter()
                .filter(|c| c.len() >= params.min_poles)
                .map(|c| materialize(g, &c, params))
                .filter(|z| z.extent_m >= params.min_extent)
                .collect::<Vec<_>>()
        })
        .collect();
    zones.sort_by(|a, b| {
        a.circuits
            .cmp(&b.circuits)
            .then(a.centroid.x.total_cmp(&b.centroid.x))
            .then(a.centroid.y.total_cmp(&b.centroid.y))
            .then_with(|| a.zone_id.cmp(&b.zone_id))
    });
    Ok(zones)
}

/// Number of clusters across all groups before emission filtering.
pub fn count_clusters(groups: &[McpGroup], radius: f64) -> usize {
    groups.par_iter().map(|g| cluster_member_indices(g, radius).len()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width_mi: f64,
    /// Lower edge of the open-ended last bin; `None` for no overflow bin.
    pub overflow_mi: Option<f64>,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bin_width_mi: 1.0,
            overflow_mi: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo_mi: f64,
    /// `None` for the open-ended overflow bin.
    pub hi_mi: Option<f64>,
    pub count: usize,
}

/// Zone counts per half-open mile bin `[lo, hi)`.
pub fn length_histogram(zones: &[RiskZone], spec: &HistogramSpec) -> Result<Vec<HistogramBin>, ZoningError> {
    let extents: Vec<f64> = zones.iter().map(|z| z.extent_m).collect();
    histogram_from_extents(&extents, spec)
}

/// [`length_histogram`] over raw extents in meters.
pub fn histogram_from_extents(extents_m: &[f64], spec: &HistogramSpec) -> Result<Vec<HistogramBin>, ZoningError> {
    let w = spec.bin_width_mi;
    if !(w > 0.0 && w.is_finite()) {
        return Err(ZoningError::InvalidHistogram(format!("bin width must be > 0, got {w}")));
    }
    if let Some(o) = spec.overflow_mi {
        if !(o > 0.0 && o.is_finite()) {
            return Err(ZoningError::InvalidHistogram(format!("overflow edge must be > 0, got {o}")));
        }
    }
    let miles: Vec<f64> = extents_m.iter().map(|m| m / METERS_PER_MILE).collect();
    let top = match spec.overflow_mi {
        Some(o) => o,
        None => {
            let max = miles.iter().copied().fold(0.0, f64::max);
            ((max / w).floor() + 1.0) * w
        }
    };
    let mut bins = Vec::new();
    let mut i = 0usize;
    while (i as f64) * w < top {
        let lo = i as f64 * w;
        let hi = ((i + 1) as f64 * w).min(top);
        bins.push(HistogramBin {
            lo_mi: lo,
            hi_mi: Some(hi),
            count: 0,
        });
        i += 1;
    }
    if let Some(o) = spec.overflow_mi {
        bins.push(HistogramBin {
            lo_mi: o,
            hi_mi: None,
            count: 0,
        });
    }
    let regular = bins.len() - usize::from(spec.overflow_mi.is_some());
    for mi in miles {
        let slot = match spec.overflow_mi {
            Some(o) if mi >= o => regular,
            _ => ((mi / w).floor() as usize).min(regular - 1),
        };
        bins[slot].count += 1;
    }
    Ok(bins)
}
