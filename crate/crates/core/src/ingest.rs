//! Pole and wire-segment layers: loading, validation and write-back.
//!
//! Two formats are understood. GeoJSON FeatureCollections follow RFC 7946
//! and are read as WGS84 lon/lat unless the caller says otherwise; CSV files
//! are read as planar meters unless the caller says otherwise. Geographic
//! inputs are projected into the plane about a shared origin so that the
//! pole and wire layers of one run line up.
//!
//! Validation is strict by default: the first bad record aborts the load
//! with an error naming it. In lenient mode bad records are dropped and
//! reported through [`IngestIssue`]s instead.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, GeometryValue, JsonObject, JsonValue};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    project_to_plane, unproject_from_plane, GeoPoint, GeometryError, Point2D, Polyline,
};

/// Relative disagreement between a stated and a geometric length that is
/// tolerated before the stated value is replaced.
pub const LENGTH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crs {
    Planar,
    Wgs84,
}

impl FromStr for Crs {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "planar" => Ok(Crs::Planar),
            "wgs84" => Ok(Crs::Wgs84),
            other => Err(format!("unknown crs `{other}` (expected planar or wgs84)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    GeoJson,
    Csv,
}

impl Format {
    pub fn default_crs(self) -> Crs {
        match self {
            Format::GeoJson => Crs::Wgs84,
            Format::Csv => Crs::Planar,
        }
    }
}

/// A file path plus the format it should be read as.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub path: PathBuf,
    pub format: Format,
}

impl Source {
    pub fn new(path: impl Into<PathBuf>, format: Format) -> Self {
        Self {
            path: path.into(),
            format,
        }
    }

    /// Infers the format from the extension: `.csv` is CSV, anything else
    /// (`.geojson`, `.json`) is GeoJSON.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let is_csv = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let format = if is_csv { Format::Csv } else { Format::GeoJson };
        Self { path, format }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Poles,
    Wires,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Poles => "poles",
            Layer::Wires => "wires",
        })
    }
}

/// What was wrong with a single record.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordProblem {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("invalid coordinate: {0}")]
    BadCoordinate(String),
    #[error("unsupported geometry type `{0}`")]
    UnsupportedGeometry(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid value for `{field}`: {value}")]
    BadValue { field: &'static str, value: String },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{layer} record `{record}`: {problem}")]
    Record {
        layer: Layer,
        record: String,
        problem: RecordProblem,
    },
    #[error("{layer} layer contains no valid records")]
    Empty { layer: Layer },
    #[error("projection failed: {0}")]
    Projection(#[from] GeometryError),
}

/// Non-fatal findings from a load.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IngestIssue {
    /// Lenient mode dropped a record.
    Skipped { layer: String, record: String, reason: String },
    /// The stated length disagreed with the geometry; the geometric length was kept.
    LengthMismatch { wire_id: String, stated_m: f64, computed_m: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Coordinate system of the source; `None` uses the format default.
    pub crs: Option<Crs>,
    /// Projection origin for geographic sources. `None` uses the layer's own
    /// coordinate centroid.
    pub origin: Option<GeoPoint>,
    pub lenient: bool,
}

/// How stored planar coordinates relate to the source coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "crs", rename_all = "lowercase")]
pub enum CoordFrame {
    Planar,
    Wgs84 { origin: GeoPoint },
}

impl CoordFrame {
    pub fn origin(&self) -> Option<GeoPoint> {
        match self {
            CoordFrame::Planar => None,
            CoordFrame::Wgs84 { origin } => Some(*origin),
        }
    }

    /// Converts a planar point back into source coordinates.
    pub fn to_source(&self, p: Point2D) -> Result<[f64; 2], GeometryError> {
        match self {
            CoordFrame::Planar => Ok([p.x, p.y]),
            CoordFrame::Wgs84 { origin } => {
                let g = unproject_from_plane(p, *origin)?;
                Ok([g.lon, g.lat])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pole {
    pub pole_id: String,
    pub location: Point2D,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WireSegment {
    pub wire_id: String,
    pub circuit_id: String,
    pub geometry: Polyline,
    pub length: f64,
    pub ampacity: Option<f64>,
    pub declared_pole_ids: Option<Vec<String>>,
}

impl WireSegment {
    /// Half-arc-length point of the conductor geometry.
    pub fn centroid(&self) -> Point2D {
        self.geometry.midpoint()
    }
}

#[derive(Debug, Clone)]
pub struct PoleSet {
    poles: Vec<Pole>,
    by_id: HashMap<String, usize>,
    frame: CoordFrame,
    issues: Vec<IngestIssue>,
}

impl PoleSet {
    /// Builds a planar set, rejecting duplicate ids and non-finite locations.
    pub fn new(poles: Vec<Pole>) -> Result<Self, IngestError> {
        let mut by_id = HashMap::with_capacity(poles.len());
        for (i, p) in poles.iter().enumerate() {
            if !p.location.is_finite() {
                return Err(record_err(Layer::Poles, &p.pole_id, RecordProblem::BadCoordinate(p.location.to_string())));
            }
            if by_id.insert(p.pole_id.clone(), i).is_some() {
                return Err(record_err(Layer::Poles, &p.pole_id, RecordProblem::DuplicateId(p.pole_id.clone())));
            }
        }
        Ok(Self {
            poles,
            by_id,
            frame: CoordFrame::Planar,
            issues: Vec::new(),
        })
    }

    pub fn with_frame(mut self, frame: CoordFrame) -> Self {
        self.frame = frame;
        self
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> Option<&Pole> {
        self.poles.get(ordinal)
    }

    pub fn ordinal_of(&self, pole_id: &str) -> Option<usize> {
        self.by_id.get(pole_id).copied()
    }

    pub fn frame(&self) -> CoordFrame {
        self.frame
    }

    pub fn issues(&self) -> &[IngestIssue] {
        &self.issues
    }

    pub fn locations(&self) -> Vec<Point2D> {
        self.poles.iter().map(|p| p.location).collect()
    }
}

#[derive(Debug, Clone)]
pub struct WireSet {
    wires: Vec<WireSegment>,
    by_id: HashMap<String, usize>,
    frame: CoordFrame,
    issues: Vec<IngestIssue>,
}

impl WireSet {
    pub fn new(wires: Vec<WireSegment>) -> Result<Self, IngestError> {
        let mut by_id = HashMap::with_capacity(wires.len());
        for (i, w) in wires.iter().enumerate() {
            if w.circuit_id.trim().is_empty() {
                return Err(record_err(Layer::Wires, &w.wire_id, RecordProblem::MissingField("circuit_id")));
            }
            if by_id.insert(w.wire_id.clone(), i).is_some() {
                return Err(record_err(Layer::Wires, &w.wire_id, RecordProblem::DuplicateId(w.wire_id.clone())));
            }
        }
        Ok(Self {
            wires,
            by_id,
            frame: CoordFrame::Planar,
            issues: Vec::new(),
        })
    }

    pub fn with_frame(mut self, frame: CoordFrame) -> Self {
        self.frame = frame;
        self
    }

    pub fn wires(&self) -> &[WireSegment] {
        &self.wires
    }

    pub fn len(&self) -> usize {
        self.wires.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wires.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> Option<&WireSegment> {
        self.wires.get(ordinal)
    }

    pub fn ordinal_of(&self, wire_id: &str) -> Option<usize> {
        self.by_id.get(wire_id).copied()
    }

    pub fn frame(&self) -> CoordFrame {
        self.frame
    }

    pub fn issues(&self) -> &[IngestIssue] {
        &self.issues
    }
}

fn record_err(layer: Layer, record: &str, problem: RecordProblem) -> IngestError {
    IngestError::Record {
        layer,
        record: record.to_string(),
        problem,
    }
}

/// Collects per-record failures; strict mode stops at the first one.
struct Triage {
    layer: Layer,
    lenient: bool,
    issues: Vec<IngestIssue>,
}

impl Triage {
    fn new(layer: Layer, lenient: bool) -> Self {
        Self {
            layer,
            lenient,
            issues: Vec::new(),
        }
    }

    fn reject(&mut self, record: &str, problem: RecordProblem) -> Result<(), IngestError> {
        if !self.lenient {
            return Err(record_err(self.layer, record, problem));
        }
        log::warn!("skipping {} record `{}`: {}", self.layer, record, problem);
        self.issues.push(IngestIssue::Skipped {
            layer: self.layer.to_string(),
            record: record.to_string(),
            reason: problem.to_string(),
        });
        Ok(())
    }
}

/// Raw record before projection: coordinates still in source units.
struct RawPole {
    pole_id: String,
    coord: [f64; 2],
    metadata: BTreeMap<String, String>,
}

struct RawWire {
    wire_id: String,
    circuit_id: String,
    coords: Vec<[f64; 2]>,
    length: Option<f64>,
    ampacity: Option<f64>,
    declared_pole_ids: Option<Vec<String>>,
}

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(s)
}

fn parse_err(path: &Path, message: impl fmt::Display) -> IngestError {
    IngestError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_feature_collection(path: &Path) -> Result<FeatureCollection, IngestError> {
    let text = read_to_string(path)?;
    match text.parse::<GeoJson>().map_err(|e| parse_err(path, e))? {
        GeoJson::FeatureCollection(fc) => Ok(fc),
        _ => Err(parse_err(path, "expected a FeatureCollection")),
    }
}

fn json_to_text(v: &JsonValue) -> Option<String> {
    match v {
        JsonValue::Null => None,
        JsonValue::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn feature_label(f: &Feature, key: &str, index: usize) -> String {
    f.property(key)
        .and_then(json_to_text)
        .or_else(|| {
            f.id.as_ref().map(|id| match id {
                geojson::feature::Id::String(s) => s.clone(),
                geojson::feature::Id::Number(n) => n.to_string(),
            })
        })
        .unwrap_or_else(|| format!("feature #{index}"))
}

fn geometry_type_name(g: &GeometryValue) -> &'static str {
    match g {
        GeometryValue::Point { .. } => "Point",
        GeometryValue::MultiPoint { .. } => "MultiPoint",
        GeometryValue::LineString { .. } => "LineString",
        GeometryValue::MultiLineString { .. } => "MultiLineString",
        GeometryValue::Polygon { .. } => "Polygon",
        GeometryValue::MultiPolygon { .. } => "MultiPolygon",
        GeometryValue::GeometryCollection { .. } => "GeometryCollection",
    }
}

fn position_xy(p: &geojson::Position) -> Result<[f64; 2], RecordProblem> {
    let s = p.as_slice();
    if s.len() < 2 {
        return Err(RecordProblem::BadCoordinate(format!("position has {} components", s.len())));
    }
    if !(s[0].is_finite() && s[1].is_finite()) {
        return Err(RecordProblem::BadCoordinate(format!("({}, {})", s[0], s[1])));
    }
    Ok([s[0], s[1]])
}

fn optional_number(v: Option<&JsonValue>, field: &'static str) -> Result<Option<f64>, RecordProblem> {
    match v {
        None | Some(JsonValue::Null) => Ok(None),
        Some(JsonValue::Number(n)) => n
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| RecordProblem::BadValue { field, value: n.to_string() }),
        Some(JsonValue::String(s)) if s.trim().is_empty() => Ok(None),
        Some(JsonValue::String(s)) => parse_number(s, field).map(Some),
        Some(other) => Err(RecordProblem::BadValue {
            field,
            value: other.to_string(),
        }),
    }
}

fn parse_number(s: &str, field: &'static str) -> Result<f64, RecordProblem> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| RecordProblem::BadValue {
            field,
            value: s.to_string(),
        })
}

fn split_ids(s: &str) -> Vec<String> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn geojson_poles(path: &Path, triage: &mut Triage) -> Result<Vec<RawPole>, IngestError> {
    let fc = read_feature_collection(path)?;
    let mut out = Vec::with_capacity(fc.features.len());
    for (i, f) in fc.features.iter().enumerate() {
        let label = feature_label(f, "pole_id", i);
        let Some(pole_id) = f.property("pole_id").and_then(json_to_text).filter(|s| !s.trim().is_empty()) else {
            triage.reject(&label, RecordProblem::MissingField("pole_id"))?;
            continue;
        };
        let coord = match f.geometry.as_ref().map(|g| &g.value) {
            Some(GeometryValue::Point { coordinates }) => position_xy(coordinates),
            Some(other) => Err(RecordProblem::UnsupportedGeometry(geometry_type_name(other).into())),
            None => Err(RecordProblem::MissingField("geometry")),
        };
        let coord = match coord {
            Ok(c) => c,
            Err(problem) => {
                triage.reject(&label, problem)?;
                continue;
            }
        };
        let metadata = f
            .properties
            .iter()
            .flatten()
            .filter(|(k, _)| k.as_str() != "pole_id")
            .filter_map(|(k, v)| json_to_text(v).map(|t| (k.clone(), t)))
            .collect();
        out.push(RawPole {
            pole_id: pole_id.trim().to_string(),
            coord,
            metadata,
        });
    }
    Ok(out)
}

fn geojson_wires(path: &Path, triage: &mut Triage) -> Result<Vec<RawWire>, IngestError> {
    let fc = read_feature_collection(path)?;
    let mut out = Vec::with_capacity(fc.features.len());
    for (i, f) in fc.features.iter().enumerate() {
        let label = feature_label(f, "wire_id", i);
        match geojson_wire(f, &label) {
            Ok(w) => out.push(w),
            Err(problem) => triage.reject(&label, problem)?,
        }
    }
    Ok(out)
}

fn geojson_wire(f: &Feature, label: &str) -> Result<RawWire, RecordProblem> {
    let wire_id = f
        .property("wire_id")
        .and_then(json_to_text)
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().to_string())
        .or_else(|| (!label.starts_with("feature #")).then(|| label.to_string()))
        .ok_or(RecordProblem::MissingField("wire_id"))?;
    let circuit_id = f
        .property("circuit_id")
        .and_then(json_to_text)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or(RecordProblem::MissingField("circuit_id"))?;
    let coords = match f.geometry.as_ref().map(|g| &g.value) {
        Some(GeometryValue::LineString { coordinates }) => {
            coordinates.iter().map(position_xy).collect::<Result<Vec<_>, _>>()?
        }
        Some(other) => return Err(RecordProblem::UnsupportedGeometry(geometry_type_name(other).into())),
        None => return Err(RecordProblem::MissingField("geometry")),
    };
    let length = optional_number(f.property("length_m"), "length_m")?;
    let ampacity = optional_number(f.property("ampacity_a"), "ampacity_a")?;
    let declared_pole_ids = match f.property("pole_ids") {
        None | Some(JsonValue::Null) => None,
        Some(JsonValue::Array(items)) => Some(items.iter().filter_map(json_to_text).collect()),
        Some(JsonValue::String(s)) => Some(split_ids(s)),
        Some(other) => {
            return Err(RecordProblem::BadValue {
                field: "pole_ids",
                value: other.to_string(),
            })
        }
    };
    Ok(RawWire {
        wire_id,
        circuit_id,
        coords,
        length,
        ampacity,
        declared_pole_ids,
    })
}

fn csv_reader(path: &Path) -> Result<(csv::Reader<fs::File>, Vec<String>), IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    Ok((rdr, headers))
}

fn column(headers: &[String], name: &'static str, path: &Path) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_err(path, format!("missing required column `{name}`")))
}

fn csv_poles(path: &Path, triage: &mut Triage) -> Result<Vec<RawPole>, IngestError> {
    let (mut rdr, headers) = csv_reader(path)?;
    let id_col = column(&headers, "pole_id", path)?;
    let x_col = column(&headers, "x", path)?;
    let y_col = column(&headers, "y", path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let label = rec
            .get(id_col)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .unwrap_or_else(|| format!("row {}", row + 2));
        if rec.get(id_col).is_none_or(str::is_empty) {
            triage.reject(&label, RecordProblem::MissingField("pole_id"))?;
            continue;
        }
        let coord = (|| -> Result<[f64; 2], RecordProblem> {
            let x = rec.get(x_col).filter(|s| !s.is_empty()).ok_or(RecordProblem::MissingField("x"))?;
            let y = rec.get(y_col).filter(|s| !s.is_empty()).ok_or(RecordProblem::MissingField("y"))?;
            let bad = |_| RecordProblem::BadCoordinate(format!("({x}, {y})"));
            Ok([parse_number(x, "x").map_err(bad)?, parse_number(y, "y").map_err(bad)?])
        })();
        let coord = match coord {
            Ok(c) => c,
            Err(problem) => {
                triage.reject(&label, problem)?;
                continue;
            }
        };
        let metadata = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_col, x_col, y_col].contains(i))
            .filter_map(|(i, h)| rec.get(i).filter(|v| !v.is_empty()).map(|v| (h.clone(), v.to_string())))
            .collect();
        out.push(RawPole {
            pole_id: label,
            coord,
            metadata,
        });
    }
    Ok(out)
}

fn parse_wkt_linestring(text: &str) -> Result<Vec<[f64; 2]>, RecordProblem> {
    let geom = wkt::Wkt::<f64>::from_str(text)
        .map_err(|e| RecordProblem::DegenerateGeometry(format!("unparseable WKT: {e}")))?;
    match geom {
        wkt::Wkt::LineString(ls) => ls
            .coords()
            .iter()
            .map(|c| {
                if c.x.is_finite() && c.y.is_finite() {
                    Ok([c.x, c.y])
                } else {
                    Err(RecordProblem::BadCoordinate(format!("({}, {})", c.x, c.y)))
                }
            })
            .collect(),
        wkt::Wkt::Point(_) => Err(RecordProblem::UnsupportedGeometry("POINT".into())),
        wkt::Wkt::Polygon(_) => Err(RecordProblem::UnsupportedGeometry("POLYGON".into())),
        wkt::Wkt::MultiPoint(_) => Err(RecordProblem::UnsupportedGeometry("MULTIPOINT".into())),
        wkt::Wkt::MultiLineString(_) => Err(RecordProblem::UnsupportedGeometry("MULTILINESTRING".into())),
        wkt::Wkt::MultiPolygon(_) => Err(RecordProblem::UnsupportedGeometry("MULTIPOLYGON".into())),
        wkt::Wkt::GeometryCollection(_) => Err(RecordProblem::UnsupportedGeometry("GEOMETRYCOLLECTION".into())),
    }
}

fn csv_wires(path: &Path, triage: &mut Triage) -> Result<Vec<RawWire>, IngestError> {
    let (mut rdr, headers) = csv_reader(path)?;
    let id_col = column(&headers, "wire_id", path)?;
    let ckt_col = column(&headers, "circuit_id", path)?;
    let geom_col = column(&headers, "geometry_wkt", path)?;
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (len_col, amp_col, poles_col) = (find("length_m"), find("ampacity_a"), find("pole_ids"));
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let field = |c: Option<usize>| c.and_then(|c| rec.get(c)).filter(|s| !s.is_empty());
        let label = field(Some(id_col))
            .map(String::from)
            .unwrap_or_else(|| format!("row {}", row + 2));
        let wire = (|| -> Result<RawWire, RecordProblem> {
            let wire_id = field(Some(id_col)).ok_or(RecordProblem::MissingField("wire_id"))?;
            let circuit_id = field(Some(ckt_col)).ok_or(RecordProblem::MissingField("circuit_id"))?;
            let wkt = field(Some(geom_col)).ok_or(RecordProblem::MissingField("geometry_wkt"))?;
            Ok(RawWire {
                wire_id: wire_id.to_string(),
                circuit_id: circuit_id.to_string(),
                coords: parse_wkt_linestring(wkt)?,
                length: field(len_col).map(|s| parse_number(s, "length_m")).transpose()?,
                ampacity: field(amp_col).map(|s| parse_number(s, "ampacity_a")).transpose()?,
                declared_pole_ids: field(poles_col).map(split_ids),
            })
        })();
        match wire {
            Ok(w) => out.push(w),
            Err(problem) => triage.reject(&label, problem)?,
        }
    }
    Ok(out)
}

fn centroid_origin(coords: impl Iterator<Item = [f64; 2]>) -> Result<GeoPoint, GeometryError> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for [x, y] in coords {
        sx += x;
        sy += y;
        n += 1;
    }
    if n == 0 {
        return GeoPoint::new(0.0, 0.0);
    }
    GeoPoint::new(sx / n as f64, sy / n as f64)
}

/// Resolves the frame for a layer. For WGS84 the origin is the caller's,
/// otherwise the centroid of the given coordinates.
fn resolve_frame<'a>(
    crs: Crs,
    origin: Option<GeoPoint>,
    coords: impl Iterator<Item = &'a [f64; 2]>,
) -> Result<CoordFrame, IngestError> {
    Ok(match crs {
        Crs::Planar => CoordFrame::Planar,
        Crs::Wgs84 => CoordFrame::Wgs84 {
            origin: match origin {
                Some(o) => o,
                None => centroid_origin(coords.copied())?,
            },
        },
    })
}

fn to_plane(frame: CoordFrame, c: [f64; 2]) -> Result<Point2D, RecordProblem> {
    match frame {
        CoordFrame::Planar => Point2D::try_new(c[0], c[1]).map_err(|e| RecordProblem::BadCoordinate(e.to_string())),
        CoordFrame::Wgs84 { origin } => {
            let g = GeoPoint::new(c[0], c[1]).map_err(|e| RecordProblem::BadCoordinate(e.to_string()))?;
            project_to_plane(g, origin).map_err(|e| RecordProblem::BadCoordinate(e.to_string()))
        }
    }
}

/// Geographic layers must be in lon/lat range before a centroid is taken.
fn geo_valid(crs: Crs, c: &[f64; 2]) -> bool {
    crs == Crs::Planar || GeoPoint::new(c[0], c[1]).is_ok()
}

pub fn load_poles(source: &Source, opts: &LoadOptions) -> Result<PoleSet, IngestError> {
    let mut triage = Triage::new(Layer::Poles, opts.lenient);
    let raw = match source.format {
        Format::GeoJson => geojson_poles(&source.path, &mut triage)?,
        Format::Csv => csv_poles(&source.path, &mut triage)?,
    };
    let crs = opts.crs.unwrap_or(source.format.default_crs());
    let frame = resolve_frame(
        crs,
        opts.origin,
        raw.iter().map(|r| &r.coord).filter(|c| geo_valid(crs, c)),
    )?;

    let mut poles = Vec::with_capacity(raw.len());
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(raw.len());
    for r in raw {
        let location = match to_plane(frame, r.coord) {
            Ok(p) => p,
            Err(problem) => {
                triage.reject(&r.pole_id, problem)?;
                continue;
            }
        };
        if seen.contains_key(&r.pole_id) {
            triage.reject(&r.pole_id, RecordProblem::DuplicateId(r.pole_id.clone()))?;
            continue;
        }
        seen.insert(r.pole_id.clone(), poles.len());
        poles.push(Pole {
            pole_id: r.pole_id,
            location,
            metadata: r.metadata,
        });
    }
    if poles.is_empty() {
        return Err(IngestError::Empty { layer: Layer::Poles });
    }
    Ok(PoleSet {
        poles,
        by_id: seen,
        frame,
        issues: triage.issues,
    })
}

pub fn load_wires(source: &Source, opts: &LoadOptions) -> Result<WireSet, IngestError> {
    let mut triage = Triage::new(Layer::Wires, opts.lenient);
    let raw = match source.format {
        Format::GeoJson => geojson_wires(&source.path, &mut triage)?,
        Format::Csv => csv_wires(&source.path, &mut triage)?,
    };
    let crs = opts.crs.unwrap_or(source.format.default_crs());
    let frame = resolve_frame(
        crs,
        opts.origin,
        raw.iter().flat_map(|r| r.coords.iter()).filter(|c| geo_valid(crs, c)),
    )?;

    let mut wires = Vec::with_capacity(raw.len());
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(raw.len());
    for r in raw {
        let geometry = r
            .coords
            .iter()
            .map(|&c| to_plane(frame, c))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|pts| {
                Polyline::new_dedup(pts).map_err(|e| RecordProblem::DegenerateGeometry(e.to_string()))
            });
        let geometry = match geometry {
            Ok(g) => g,
            Err(problem) => {
                triage.reject(&r.wire_id, problem)?;
                continue;
            }
        };
        if seen.contains_key(&r.wire_id) {
            triage.reject(&r.wire_id, RecordProblem::DuplicateId(r.wire_id.clone()))?;
            continue;
        }
        let computed = geometry.arc_length();
        let length = match r.length {
            Some(stated) if stated > 0.0 && (stated - computed).abs() <= LENGTH_TOLERANCE * computed => stated,
            Some(stated) => {
                log::warn!(
                    "wire `{}`: stated length {stated} m disagrees with geometry ({computed} m); using geometry",
                    r.wire_id
                );
                triage.issues.push(IngestIssue::LengthMismatch {
                    wire_id: r.wire_id.clone(),
                    stated_m: stated,
                    computed_m: computed,
                });
                computed
            }
            None => computed,
        };
        seen.insert(r.wire_id.clone(), wires.len());
        wires.push(WireSegment {
            wire_id: r.wire_id,
            circuit_id: r.circuit_id,
            geometry,
            length,
            ampacity: r.ampacity,
            declared_pole_ids: r.declared_pole_ids,
        });
    }
    if wires.is_empty() {
        return Err(IngestError::Empty { layer: Layer::Wires });
    }
    Ok(WireSet {
        wires,
        by_id: seen,
        frame,
        issues: triage.issues,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), IngestError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))?;
    Ok(())
}

fn feature(geometry: GeometryValue, properties: JsonObject) -> Feature {
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(geometry)),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

/// Serializes poles as a FeatureCollection in the set's source frame.
pub fn poles_to_geojson(set: &PoleSet) -> Result<String, IngestError> {
    let frame = set.frame();
    let mut features = Vec::with_capacity(set.len());
    for p in set.poles() {
        let mut props = JsonObject::new();
        props.insert("pole_id".into(), JsonValue::String(p.pole_id.clone()));
        for (k, v) in &p.metadata {
            props.insert(k.clone(), JsonValue::String(v.clone()));
        }
        features.push(feature(GeometryValue::new_point(frame.to_source(p.location)?), props));
    }
    Ok(GeoJson::from(FeatureCollection::new(features)).to_string())
}

/// Serializes wires as a FeatureCollection in the set's source frame.
pub fn wires_to_geojson(set: &WireSet) -> Result<String, IngestError> {
    let frame = set.frame();
    let mut features = Vec::with_capacity(set.len());
    for w in set.wires() {
        let mut props = JsonObject::new();
        props.insert("wire_id".into(), JsonValue::String(w.wire_id.clone()));
        props.insert("circuit_id".into(), JsonValue::String(w.circuit_id.clone()));
        props.insert("length_m".into(), JsonValue::from(w.length));
        if let Some(a) = w.ampacity {
            props.insert("ampacity_a".into(), JsonValue::from(a));
        }
        if let Some(ids) = &w.declared_pole_ids {
            props.insert("pole_ids".into(), JsonValue::from(ids.clone()));
        }
        let coords = w
            .geometry
            .vertices()
            .iter()
            .map(|&v| frame.to_source(v))
            .collect::<Result<Vec<_>, _>>()?;
        features.push(feature(GeometryValue::new_line_string(coords), props));
    }
    Ok(GeoJson::from(FeatureCollection::new(features)).to_string())
}

pub fn write_poles_geojson(set: &PoleSet, path: &Path) -> Result<(), IngestError> {
    write_text(path, &poles_to_geojson(set)?)
}

pub fn write_wires_geojson(set: &WireSet, path: &Path) -> Result<(), IngestError> {
    write_text(path, &wires_to_geojson(set)?)
}

pub fn write_poles_csv(set: &PoleSet, path: &Path) -> Result<(), IngestError> {
    let mut meta_keys: Vec<&String> = set.poles().iter().flat_map(|p| p.metadata.keys()).collect();
    meta_keys.sort();
    meta_keys.dedup();
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    let mut header = vec!["pole_id".to_string(), "x".into(), "y".into()];
    header.extend(meta_keys.iter().map(|k| k.to_string()));
    w.write_record(&header).map_err(|e| parse_err(path, e))?;
    for p in set.poles() {
        let [x, y] = set.frame().to_source(p.location)?;
        let mut row = vec![p.pole_id.clone(), x.to_string(), y.to_string()];
        row.extend(meta_keys.iter().map(|k| p.metadata.get(*k).cloned().unwrap_or_default()));
        w.write_record(&row).map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_wires_csv(set: &WireSet, path: &Path) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    w.write_record(["wire_id", "circuit_id", "geometry_wkt", "length_m", "ampacity_a", "pole_ids"])
        .map_err(|e| parse_err(path, e))?;
    for wire in set.wires() {
        let coords = wire
            .geometry
            .vertices()
            .iter()
            .map(|&v| {
                set.frame().to_source(v).map(|[x, y]| wkt::types::Coord {
                    x,
                    y,
                    z: None,
                    m: None,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ls = wkt::types::LineString::from_coords(coords).expect("polyline has ≥ 2 vertices");
        w.write_record([
            wire.wire_id.clone(),
            wire.circuit_id.clone(),
            wkt::Wkt::LineString(ls).to_string(),
            wire.length.to_string(),
            wire.ampacity.map(|a| a.to_string()).unwrap_or_default(),
            wire.declared_pole_ids.as_ref().map(|ids| ids.join(";")).unwrap_or_default(),
        ])
        .map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}
