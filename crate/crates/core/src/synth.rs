//! Seeded synthetic territories with planted multi-circuit corridors.
//!
//! Coordinates are planar meters in a square territory centered on the
//! origin. Each corridor is a straight run of poles carrying two or more
//! circuits whose conductors are offset sideways from the pole line.
//! Background poles carry a single circuit each, with circuits assigned per
//! 1 km tile and poles kept far enough from tile edges that no pole can pick
//! up a second circuit within the association cutoff.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean_distance, point_segment_distance, Point2D, Polyline};
use crate::ingest::{
    write_poles_csv, write_poles_geojson, write_wires_csv, write_wires_geojson, IngestError, Pole,
    PoleSet, WireSegment, WireSet,
};

/// Generator recorded in ground truth output.
pub const GENERATOR: &str = "pcg64 (rand_pcg Lcg128Xsl64)";

const TILE_M: f64 = 1000.0;
const MAX_PLACEMENT_ATTEMPTS: usize = 20_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth parameters: {0}")]
    InvalidParams(String),
    #[error("cannot place corridor {index}: no separated position found in the territory")]
    Infeasible { index: usize },
    #[error("cannot place background poles: territory is too crowded")]
    BackgroundInfeasible,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("failed to write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    /// Number of distinct circuits on every corridor pole (≥ 2).
    pub circuits: usize,
    pub length_m: f64,
    pub spacing_m: f64,
    /// Direction of the pole line, degrees counterclockwise from +x.
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub seed: u64,
    /// Side length of the square territory in meters.
    pub territory_m: f64,
    pub background_poles: usize,
    /// Total background wire segments; at least one per background pole is
    /// always generated.
    pub background_wires: usize,
    pub background_circuits: usize,
    pub corridors: Vec<CorridorSpec>,
    pub jitter_m: f64,
    pub wire_offset_m: f64,
    /// Association cutoff the territory is designed against.
    pub d_max: f64,
    /// Clustering radius the territory is designed against.
    pub radius: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            territory_m: 20_000.0,
            background_poles: 0,
            background_wires: 0,
            background_circuits: 50,
            corridors: Vec::new(),
            jitter_m: 5.0,
            wire_offset_m: 10.0,
            d_max: 50.0,
            radius: 200.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if !(self.territory_m > 0.0 && self.territory_m.is_finite()) {
            return bad(format!("territory side must be > 0, got {}", self.territory_m));
        }
        if !(self.jitter_m >= 0.0 && self.jitter_m.is_finite()) {
            return bad(format!("jitter must be ≥ 0, got {}", self.jitter_m));
        }
        if !(self.d_max > 0.0 && self.radius > 0.0) {
            return bad("d_max and radius must be > 0".into());
        }
        if !(self.wire_offset_m >= 0.0 && self.wire_offset_m < self.d_max) {
            return bad(format!(
                "wire offset {} must be in [0, d_max = {})",
                self.wire_offset_m, self.d_max
            ));
        }
        if self.background_poles > 0 && self.background_circuits == 0 {
            return bad("background poles need at least one background circuit".into());
        }
        for (i, c) in self.corridors.iter().enumerate() {
            if c.circuits < 2 {
                return bad(format!("corridor {i}: needs ≥ 2 circuits, got {}", c.circuits));
            }
            if !(c.spacing_m > 0.0 && c.spacing_m <= self.radius) {
                return bad(format!(
                    "corridor {i}: spacing {} must be in (0, radius = {}]",
                    c.spacing_m, self.radius
                ));
            }
            if !(c.length_m >= c.spacing_m && c.length_m.is_finite()) {
                return bad(format!("corridor {i}: length {} is shorter than its spacing", c.length_m));
            }
            if !c.heading_deg.is_finite() {
                return bad(format!("corridor {i}: heading must be finite"));
            }
            if c.spacing_m > self.radius - 6.0 * self.jitter_m {
                log::warn!(
                    "corridor {i}: spacing {} exceeds radius − 6σ = {}; jitter may split it",
                    c.spacing_m,
                    self.radius - 6.0 * self.jitter_m
                );
            }
        }
        Ok(())
    }

    /// Lateral reach of corridor geometry around its centerline.
    fn corridor_reach(&self) -> f64 {
        self.wire_offset_m + 6.0 * self.jitter_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCorridor {
    pub spec: CorridorSpec,
    pub circuits: Vec<String>,
    pub pole_ids: Vec<String>,
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// `(n − 1) · spacing`, before jitter.
    pub expected_extent_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub generator: String,
    pub seed: u64,
    pub params: SynthParams,
    pub corridors: Vec<PlantedCorridor>,
}

#[derive(Debug, Clone)]
pub struct Territory {
    pub poles: PoleSet,
    pub wires: WireSet,
    pub truth: GroundTruth,
}

fn segments_intersect(a: Point2D, b: Point2D, c: Point2D, d: Point2D) -> bool {
    let orient = |p: Point2D, q: Point2D, r: Point2D| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

fn segment_distance(a: Point2D, b: Point2D, c: Point2D, d: Point2D) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

struct Jitter(Option<Normal<f64>>);

impl Jitter {
    fn new(sigma: f64) -> Self {
        Jitter((sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma")))
    }

    fn sample(&self, rng: &mut Pcg64) -> Point2D {
        match &self.0 {
            Some(n) => Point2D::new(n.sample(rng), n.sample(rng)),
            None => Point2D::new(0.0, 0.0),
        }
    }
}

fn add(a: Point2D, b: Point2D) -> Point2D {
    Point2D::new(a.x + b.x, a.y + b.y)
}

fn scale(a: Point2D, s: f64) -> Point2D {
    Point2D::new(a.x * s, a.y * s)
}

fn segment(a: Point2D, b: Point2D) -> Polyline {
    Polyline::new(vec![a, b]).expect("two finite vertices")
}

/// Builds the territory. The same parameters always give the same output.
pub fn generate(params: &SynthParams) -> Result<Territory, SynthError> {
    params.validate()?;
    let mut rng = Pcg64::seed_from_u64(params.seed);
    let jitter = Jitter::new(params.jitter_m);
    let half = params.territory_m / 2.0;
    let reach = params.corridor_reach();
    let separation = 2.0 * params.radius + 2.0 * reach + params.d_max;

    // Place corridor centerlines, longest first so the hard ones get room.
    let mut order: Vec<usize> = (0..params.corridors.len()).collect();
    order.sort_by(|&a, &b| params.corridors[b].length_m.total_cmp(&params.corridors[a].length_m).then(a.cmp(&b)));
    let mut lines: Vec<Option<(Point2D, Point2D)>> = vec![None; params.corridors.len()];
    let margin = params.radius + reach;
    for &i in &order {
        let spec = &params.corridors[i];
        let n = (spec.length_m / spec.spacing_m).floor() as usize + 1;
        let run = (n - 1) as f64 * spec.spacing_m;
        let theta = spec.heading_deg.to_radians();
        let dir = Point2D::new(theta.cos(), theta.sin());
        let span = scale(dir, run);
        let lo_x = -half + margin - span.x.min(0.0);
        let hi_x = half - margin - span.x.max(0.0);
        let lo_y = -half + margin - span.y.min(0.0);
        let hi_y = half - margin - span.y.max(0.0);
        if lo_x > hi_x || lo_y > hi_y {
            return Err(SynthError::Infeasible { index: i });
        }
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let start = Point2D::new(rng.random_range(lo_x..=hi_x), rng.random_range(lo_y..=hi_y));
            let end = add(start, span);
            let clear = lines
                .iter()
                .flatten()
                .all(|&(c, d)| segment_distance(start, end, c, d) > separation);
            if clear {
                placed = Some((start, end));
                break;
            }
        }
        lines[i] = Some(placed.ok_or(SynthError::Infeasible { index: i })?);
    }

    let mut poles = Vec::new();
    let mut wires = Vec::new();
    let mut planted = Vec::with_capacity(params.corridors.len());
    for (i, spec) in params.corridors.iter().enumerate() {
        let (start, end) = lines[i].expect("every corridor placed");
        let n = (spec.length_m / spec.spacing_m).floor() as usize + 1;
        let theta = spec.heading_deg.to_radians();
        let dir = Point2D::new(theta.cos(), theta.sin());
        let normal = Point2D::new(-dir.y, dir.x);
        let circuits: Vec<String> = (0..spec.circuits).map(|j| format!("K{i:02}-C{j}")).collect();
        let mut pole_ids = Vec::with_capacity(n);
        for p in 0..n {
            let nominal = add(start, scale(dir, p as f64 * spec.spacing_m));
            let pole_id = format!("K{i:02}-P{p:04}");
            poles.push(Pole {
                pole_id: pole_id.clone(),
                location: add(nominal, jitter.sample(&mut rng)),
                metadata: Default::default(),
            });
            // One conductor piece per circuit, spanning half a span either
            // side of the pole and centered beside it.
            for (j, circuit) in circuits.iter().enumerate() {
                let side = if j % 2 == 0 { 1.0 } else { -1.0 };
                let center = add(
                    add(nominal, scale(normal, side * params.wire_offset_m)),
                    jitter.sample(&mut rng),
                );
                let h = scale(dir, spec.spacing_m / 2.0);
                let g = segment(add(center, scale(h, -1.0)), add(center, h));
                wires.push(WireSegment {
                    wire_id: format!("K{i:02}-W{p:04}-{j}"),
                    circuit_id: circuit.clone(),
                    length: g.arc_length(),
                    geometry: g,
                    ampacity: None,
                    declared_pole_ids: Some(vec![pole_id.clone()]),
                });
            }
            pole_ids.push(pole_id);
        }
        planted.push(PlantedCorridor {
            spec: spec.clone(),
            circuits,
            pole_ids,
            start: [start.x, start.y],
            end: [end.x, end.y],
            expected_extent_m: (n - 1) as f64 * spec.spacing_m,
        });
    }

    generate_background(params, &mut rng, &lines, &mut poles, &mut wires)?;

    Ok(Territory {
        poles: PoleSet::new(poles)?,
        wires: WireSet::new(wires)?,
        truth: GroundTruth {
            generator: GENERATOR.into(),
            seed: params.seed,
            params: params.clone(),
            corridors: planted,
        },
    })
}

fn generate_background(
    params: &SynthParams,
    rng: &mut Pcg64,
    lines: &[Option<(Point2D, Point2D)>],
    poles: &mut Vec<Pole>,
    wires: &mut Vec<WireSegment>,
) -> Result<(), SynthError> {
    if params.background_poles == 0 {
        return Ok(());
    }
    let half = params.territory_m / 2.0;
    let tiles = (params.territory_m / TILE_M).ceil().max(1.0) as usize;
    let tile_circuit: Vec<usize> = (0..tiles * tiles)
        .map(|_| rng.random_range(0..params.background_circuits))
        .collect();
    // Every wire center stays within `wire_offset` of its pole, so poles this
    // far inside their tile only ever see their own tile's circuit.
    let inset = params.d_max + params.wire_offset_m + 1.0;
    let keep_out = 2.0 * params.radius + params.corridor_reach() + params.d_max;
    let tile_of = |v: f64| (((v + half) / TILE_M).floor() as usize).min(tiles - 1);

    let max_attempts = params.background_poles.saturating_mul(50).max(10_000);
    let mut attempts = 0;
    let mut placed: Vec<(Point2D, usize)> = Vec::with_capacity(params.background_poles);
    while placed.len() < params.background_poles {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SynthError::BackgroundInfeasible);
        }
        let p = Point2D::new(rng.random_range(-half..half), rng.random_range(-half..half));
        let (tx, ty) = (tile_of(p.x), tile_of(p.y));
        let x0 = -half + tx as f64 * TILE_M;
        let y0 = -half + ty as f64 * TILE_M;
        let x1 = (x0 + TILE_M).min(half);
        let y1 = (y0 + TILE_M).min(half);
        if p.x - x0 < inset || x1 - p.x < inset || p.y - y0 < inset || y1 - p.y < inset {
            continue;
        }
        if lines.iter().flatten().any(|&(a, b)| point_segment_distance(p, a, b) <= keep_out) {
            continue;
        }
        placed.push((p, tile_circuit[ty * tiles + tx]));
    }

    let mut add_wire = |rng: &mut Pcg64, ordinal: usize, suffix: usize, pole: Point2D, circuit: usize| {
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let center = add(pole, Point2D::new(a.cos() * params.wire_offset_m, a.sin() * params.wire_offset_m));
        let b: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let half_len = rng.random_range(20.0..60.0);
        let h = Point2D::new(b.cos() * half_len, b.sin() * half_len);
        let g = segment(add(center, scale(h, -1.0)), add(center, h));
        debug_assert!(euclidean_distance(g.midpoint(), pole) <= params.wire_offset_m + 1e-9);
        wires.push(WireSegment {
            wire_id: format!("B-W{ordinal:06}-{suffix}"),
            circuit_id: format!("BG-{circuit:04}"),
            length: g.arc_length(),
            geometry: g,
            ampacity: None,
            declared_pole_ids: None,
        });
    };

    let mut extra = vec![0usize; placed.len()];
    for _ in placed.len()..params.background_wires {
        extra[rng.random_range(0..placed.len())] += 1;
    }
    for (i, &(p, circuit)) in placed.iter().enumerate() {
        poles.push(Pole {
            pole_id: format!("B-P{i:06}"),
            location: p,
            metadata: Default::default(),
        });
        for s in 0..=extra[i] {
            add_wire(rng, i, s, p, circuit);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    /// Planar meters in GeoJSON; load with an explicit planar CRS.
    GeoJson,
}

/// Paths written by [`write_territory`].
#[derive(Debug, Clone, Serialize)]
pub struct TerritoryFiles {
    pub poles: PathBuf,
    pub wires: PathBuf,
    pub ground_truth: PathBuf,
}

/// Writes poles, wires and `ground_truth.json` into `dir`.
pub fn write_territory(t: &Territory, dir: &Path, format: OutputFormat) -> Result<TerritoryFiles, SynthError> {
    std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::GeoJson => "geojson",
    };
    let files = TerritoryFiles {
        poles: dir.join(format!("poles.{ext}")),
        wires: dir.join(format!("wires.{ext}")),
        ground_truth: dir.join("ground_truth.json"),
    };
    match format {
        OutputFormat::Csv => {
            write_poles_csv(&t.poles, &files.poles)?;
            write_wires_csv(&t.wires, &files.wires)?;
        }
        OutputFormat::GeoJson => {
            write_poles_geojson(&t.poles, &files.poles)?;
            write_wires_geojson(&t.wires, &files.wires)?;
        }
    }
    let json = serde_json::to_string_pretty(&t.truth).expect("ground truth serializes");
    std::fs::write(&files.ground_truth, json + "\n").map_err(|source| SynthError::Io {
        path: files.ground_truth.clone(),
        source,
    })?;
    Ok(files)
}
