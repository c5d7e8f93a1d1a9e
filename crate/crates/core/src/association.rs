//! Pole-to-wire association by distance-bounded k-nearest neighbors.
//!
//! The GIS carries no reliable pole/wire linkage, so each pole is attached to
//! the `k` wire segments whose centroids lie nearest to it, provided they are
//! within `d_max`. Equal distances are broken by the rank of the wire id in
//! lexicographic order, which makes the table independent of the order wire
//! records appeared in the source.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean_distance, Point2D};
use crate::ingest::{PoleSet, WireSet};
use crate::spatial_index::{IndexError, KdTree};

#[derive(Debug, Error)]
pub enum AssociationError {
    #[error("invalid association parameters: {0}")]
    InvalidParams(String),
    #[error("association needs at least one pole and one wire")]
    EmptyInput,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    /// Maximum attachments per pole.
    pub k: usize,
    /// Maximum pole-to-wire distance in meters, inclusive.
    pub d_max: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self { k: 3, d_max: 50.0 }
    }
}

impl AssociationParams {
    pub fn validate(&self) -> Result<(), AssociationError> {
        if self.k < 1 {
            return Err(AssociationError::InvalidParams(format!("k must be ≥ 1, got {}", self.k)));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(AssociationError::InvalidParams(format!(
                "d_max must be a positive finite distance, got {}",
                self.d_max
            )));
        }
        Ok(())
    }
}

/// How the pole-to-wire distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Pole to the wire's half-arc-length point.
    #[default]
    Centroid,
    /// Pole to the closest point anywhere on the wire.
    NearestPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssociationOptions {
    pub params: AssociationParams,
    pub mode: DistanceMode,
    /// Union declared `pole_ids` links into the inferred ones. Declared links
    /// bypass both `k` and `d_max`.
    pub trust_declared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attachment {
    /// Ordinal into the [`WireSet`].
    pub wire: usize,
    pub circuit_id: String,
    pub distance: f64,
}

/// Per-pole attachments, indexed by pole ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationTable {
    rows: Vec<Vec<Attachment>>,
}

impl AssociationTable {
    pub fn rows(&self) -> &[Vec<Attachment>] {
        &self.rows
    }

    pub fn for_pole(&self, ordinal: usize) -> &[Attachment] {
        &self.rows[ordinal]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn attachment_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn associated_pole_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_empty()).count()
    }

    /// Writes `pole_id,wire_id,circuit_id,distance_m` for every attachment.
    pub fn write_csv(&self, poles: &PoleSet, wires: &WireSet, path: &Path) -> Result<(), AssociationError> {
        let werr = |e: csv::Error| AssociationError::Write {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(werr)?;
        w.write_record(["pole_id", "wire_id", "circuit_id", "distance_m"]).map_err(werr)?;
        for (pole, row) in self.rows.iter().enumerate() {
            for a in row {
                w.write_record([
                    poles.poles()[pole].pole_id.as_str(),
                    wires.wires()[a.wire].wire_id.as_str(),
                    a.circuit_id.as_str(),
                    &a.distance.to_string(),
                ])
                .map_err(werr)?;
            }
        }
        w.flush().map_err(|e| AssociationError::Write {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Wire ordinals sorted by wire id; position in this list is the tie-break rank.
fn wires_by_id(wires: &WireSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..wires.len()).collect();
    order.sort_by(|&a, &b| wires.wires()[a].wire_id.cmp(&wires.wires()[b].wire_id));
    order
}

pub fn associate(
    poles: &PoleSet,
    wires: &WireSet,
    opts: &AssociationOptions,
) -> Result<AssociationTable, AssociationError> {
    let params = opts.params;
    params.validate()?;
    if poles.is_empty() || wires.is_empty() {
        return Err(AssociationError::EmptyInput);
    }
    let by_rank = wires_by_id(wires);
    let centroids: Vec<Point2D> = by_rank.iter().map(|&w| wires.wires()[w].centroid()).collect();
    let index = KdTree::build(&centroids)?;

    // A point within d_max of a polyline is within d_max + L/2 of its midpoint.
    let search_radius = match opts.mode {
        DistanceMode::Centroid => params.d_max,
        DistanceMode::NearestPoint => {
            let half = wires
                .wires()
                .iter()
                .map(|w| w.geometry.arc_length() / 2.0)
                .fold(0.0, f64::max);
            params.d_max + half + 1e-6
        }
    };

    let declared = if opts.trust_declared {
        declared_links(poles, wires, &by_rank)
    } else {
        HashMap::new()
    };

    let distance_to = |q: Point2D, rank: usize| -> f64 {
        match opts.mode {
            DistanceMode::Centroid => euclidean_distance(q, centroids[rank]),
            DistanceMode::NearestPoint => wires.wires()[by_rank[rank]].geometry.distance_to(q),
        }
    };

    let rows = poles
        .poles()
        .par_iter()
        .enumerate()
        .map(|(ordinal, pole)| {
            let q = pole.location;
            // (distance, rank) pairs, ascending
            let mut hits: Vec<(f64, usize)> = match opts.mode {
                DistanceMode::Centroid => index
                    .knn(q, params.k, params.d_max)
                    .into_iter()
                    .map(|n| (n.distance, n.point_index))
                    .collect(),
                DistanceMode::NearestPoint => {
                    let mut v: Vec<(f64, usize)> = index
                        .radius_query(q, search_radius)
                        .into_iter()
                        .map(|n| (distance_to(q, n.point_index), n.point_index))
                        .filter(|&(d, _)| d <= params.d_max)
                        .collect();
                    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    v.truncate(params.k);
                    v
                }
            };
            if let Some(extra) = declared.get(&ordinal) {
                for &rank in extra {
                    if !hits.iter().any(|&(_, r)| r == rank) {
                        hits.push((distance_to(q, rank), rank));
                    }
                }
                hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
            hits.into_iter()
                .map(|(distance, rank)| {
                    let wire = by_rank[rank];
                    Attachment {
                        wire,
                        circuit_id: wires.wires()[wire].circuit_id.clone(),
                        distance,
                    }
                })
                .collect()
        })
        .collect();
    Ok(AssociationTable { rows })
}

/// pole ordinal → wire ranks declaring that pole.
fn declared_links(poles: &PoleSet, wires: &WireSet, by_rank: &[usize]) -> HashMap<usize, Vec<usize>> {
    let mut links: HashMap<usize, Vec<usize>> = HashMap::new();
    for (rank, &w) in by_rank.iter().enumerate() {
        for id in wires.wires()[w].declared_pole_ids.iter().flatten() {
            match poles.ordinal_of(id) {
                Some(p) => links.entry(p).or_default().push(rank),
                None => log::debug!("wire `{}` declares unknown pole `{id}`", wires.wires()[w].wire_id),
            }
        }
    }
    links
}
