//! Zone and histogram output files, plus a reader for the zone summary.

use std::path::{Path, PathBuf};

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, GeometryValue, JsonObject, JsonValue};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeometryError, METERS_PER_MILE};
use crate::ingest::CoordFrame;
use crate::zoning::{HistogramBin, RiskZone};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed to write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("cannot convert zone geometry back to source coordinates: {0}")]
    Geometry(#[from] GeometryError),
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ReportError + '_ {
    move |e| ReportError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Zones as a FeatureCollection of hull polygons in the source frame.
/// Hulls with fewer than three corners become LineString or Point features.
pub fn zones_to_geojson(zones: &[RiskZone], frame: CoordFrame) -> Result<String, ReportError> {
    let mut features = Vec::with_capacity(zones.len());
    for z in zones {
        let ring = z
            .hull
            .vertices()
            .iter()
            .map(|&p| frame.to_source(p))
            .collect::<Result<Vec<[f64; 2]>, _>>()?;
        let geometry = match z.hull.corner_count() {
            1 => GeometryValue::new_point(ring[0]),
            2 => GeometryValue::new_line_string(ring[..2].to_vec()),
            _ => GeometryValue::new_polygon(vec![ring]),
        };
        let mut props = JsonObject::new();
        props.insert("zone_id".into(), JsonValue::from(z.zone_id.clone()));
        props.insert("circuits".into(), JsonValue::from(z.circuits.ids().to_vec()));
        props.insert("extent_m".into(), JsonValue::from(z.extent_m));
        props.insert("extent_mi".into(), JsonValue::from(z.extent_mi()));
        props.insert("pole_count".into(), JsonValue::from(z.pole_count));
        props.insert("pole_ids".into(), JsonValue::from(z.pole_ids.clone()));
        features.push(Feature {
            bbox: None,
            geometry: Some(Geometry::new(geometry)),
            id: None,
            properties: Some(props),
            foreign_members: None,
        });
    }
    Ok(GeoJson::from(FeatureCollection::new(features)).to_string())
}

pub fn write_zones_geojson(zones: &[RiskZone], frame: CoordFrame, path: &Path) -> Result<(), ReportError> {
    write_text(path, &(zones_to_geojson(zones, frame)? + "\n"))
}

/// `zone_id,circuits,pole_count,extent_m,extent_mi,centroid_x,centroid_y,pole_ids`
/// with `;`-joined lists and the centroid in source coordinates.
pub fn write_zones_csv(zones: &[RiskZone], frame: CoordFrame, path: &Path) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "zone_id",
        "circuits",
        "pole_count",
        "extent_m",
        "extent_mi",
        "centroid_x",
        "centroid_y",
        "pole_ids",
    ])
    .map_err(csv_err(path))?;
    for z in zones {
        let [cx, cy] = frame.to_source(z.centroid)?;
        w.write_record([
            z.zone_id.clone(),
            z.circuits.to_string(),
            z.pole_count.to_string(),
            z.extent_m.to_string(),
            z.extent_mi().to_string(),
            cx.to_string(),
            cy.to_string(),
            z.pole_ids.join(";"),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `bin_lo_mi,bin_hi_mi,count`; the open-ended bin has `inf` as its upper edge.
pub fn write_histogram_csv(bins: &[HistogramBin], path: &Path) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["bin_lo_mi", "bin_hi_mi", "count"]).map_err(csv_err(path))?;
    for b in bins {
        let hi = b.hi_mi.map_or_else(|| "inf".to_string(), |h| h.to_string());
        w.write_record([b.lo_mi.to_string(), hi, b.count.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row of a zones.csv file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneRecord {
    pub zone_id: String,
    pub circuits: Vec<String>,
    pub pole_count: usize,
    pub extent_m: f64,
    pub pole_ids: Vec<String>,
}

impl ZoneRecord {
    pub fn extent_mi(&self) -> f64 {
        self.extent_m / METERS_PER_MILE
    }
}

pub fn read_zones_csv(path: &Path) -> Result<Vec<ZoneRecord>, ReportError> {
    let fmt = |message: String| ReportError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fmt(format!("missing column `{name}`")))
    };
    let (c_id, c_circ, c_count, c_ext, c_ids) =
        (col("zone_id")?, col("circuits")?, col("pole_count")?, col("extent_m")?, col("pole_ids")?);
    let split = |s: &str| -> Vec<String> { s.split(';').filter(|t| !t.is_empty()).map(str::to_string).collect() };
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let cell = |c: usize| rec.get(c).unwrap_or_default();
        let zone_id = cell(c_id).to_string();
        let pole_count = cell(c_count)
            .parse()
            .map_err(|_| fmt(format!("row {}: bad pole_count `{}`", line + 1, cell(c_count))))?;
        let extent_m: f64 = cell(c_ext)
            .parse()
            .map_err(|_| fmt(format!("row {}: bad extent_m `{}`", line + 1, cell(c_ext))))?;
        if !(extent_m >= 0.0 && extent_m.is_finite()) {
            return Err(fmt(format!("row {}: extent_m must be a finite value ≥ 0", line + 1)));
        }
        out.push(ZoneRecord {
            zone_id,
            circuits: split(cell(c_circ)),
            pole_count,
            extent_m,
            pole_ids: split(cell(c_ids)),
        });
    }
    Ok(out)
}
