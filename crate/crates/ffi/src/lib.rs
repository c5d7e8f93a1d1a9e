//! C ABI over the mcpzone pipeline.
//!
//! Every call returns an [`McpStatus`]. On failure a message is kept per
//! thread and can be read with [`mcp_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use mcpzone::geometry::Point2D;
use mcpzone::ingest::{CoordFrame, Crs};
use mcpzone::pipeline::{compute, PipelineConfig, Stage};
use mcpzone::prioritize::{score_zone, validate_weights, FactorVector, WeightVector};
use mcpzone::report::{write_histogram_csv, write_zones_csv, write_zones_geojson};
use mcpzone::spatial_index::KdTree;
use mcpzone::zoning::{HistogramBin, RiskZone};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Coordinate system of the input layers.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McpCrs {
    /// Format default: GeoJSON is WGS84, CSV is planar.
    Auto = 0,
    Planar = 1,
    Wgs84 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McpPoint {
    pub x: f64,
    pub y: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McpNeighbor {
    pub index: usize,
    pub distance: f64,
}

/// Pipeline knobs. Fill with [`mcp_pipeline_params_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McpPipelineParams {
    pub k: usize,
    pub d_max: f64,
    pub radius: f64,
    pub min_extent: f64,
    pub min_poles: usize,
    pub crs: McpCrs,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

/// Summary of one zone. Coordinates are in the source frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McpZoneInfo {
    pub extent_m: f64,
    pub pole_count: usize,
    pub circuit_count: usize,
    pub centroid_x: f64,
    pub centroid_y: f64,
}

pub struct McpKdTree {
    tree: KdTree,
}

pub struct McpZoneSet {
    zones: Vec<RiskZone>,
    histogram: Vec<HistogramBin>,
    frame: CoordFrame,
}

struct FfiError {
    status: McpStatus,
    message: String,
}

impl FfiError {
    fn new(status: McpStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> McpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            McpStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.message);
            e.status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            McpStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), FfiError> {
    if p.is_null() {
        Err(FfiError::new(McpStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, FfiError> {
    non_null(p, name)?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| FfiError::new(McpStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Copies `s` plus a NUL into `buf`. `out_len` receives the byte length
/// without the NUL, also when the buffer is too small.
unsafe fn copy_str(s: &str, buf: *mut c_char, cap: usize, out_len: *mut usize) -> Result<(), FfiError> {
    if !out_len.is_null() {
        *out_len = s.len();
    }
    if cap < s.len() + 1 {
        return Err(FfiError::new(
            McpStatus::BufferTooSmall,
            format!("need {} bytes, got {cap}", s.len() + 1),
        ));
    }
    non_null(buf, "buf")?;
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copies the last error message of this thread into `buf`.
/// Returns the message length in bytes without the NUL, or 0 if there is
/// none. The message is truncated when `cap` is too small.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mcp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_deref() else { return 0 };
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a KD-tree over `len` points.
///
/// # Safety
/// `points` must point to `len` readable points and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_kdtree_new(points: *const McpPoint, len: usize, out: *mut *mut McpKdTree) -> McpStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(points, "points")?;
        let pts: Vec<Point2D> = std::slice::from_raw_parts(points, len)
            .iter()
            .map(|p| Point2D::new(p.x, p.y))
            .collect();
        let tree = KdTree::build(&pts).map_err(|e| FfiError::new(McpStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(McpKdTree { tree }));
        Ok(())
    })
}

/// # Safety
/// `tree` must come from [`mcp_kdtree_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcp_kdtree_free(tree: *mut McpKdTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcp_kdtree_len(tree: *const McpKdTree) -> usize {
    tree.as_ref().map_or(0, |t| t.tree.len())
}

unsafe fn write_neighbors(
    hits: &[mcpzone::spatial_index::Neighbor],
    out: *mut McpNeighbor,
    cap: usize,
    out_len: *mut usize,
) -> Result<(), FfiError> {
    non_null(out_len, "out_len")?;
    *out_len = hits.len();
    if hits.len() > cap {
        return Err(FfiError::new(
            McpStatus::BufferTooSmall,
            format!("{} neighbors found, buffer holds {cap}", hits.len()),
        ));
    }
    if !hits.is_empty() {
        non_null(out, "out")?;
    }
    for (i, h) in hits.iter().enumerate() {
        *out.add(i) = McpNeighbor {
            index: h.point_index,
            distance: h.distance,
        };
    }
    Ok(())
}

fn check_query(q: McpPoint, dist: f64, what: &str) -> Result<Point2D, FfiError> {
    if !(q.x.is_finite() && q.y.is_finite()) {
        return Err(FfiError::new(McpStatus::InvalidArgument, "query point is not finite"));
    }
    if dist.is_nan() || dist < 0.0 {
        return Err(FfiError::new(McpStatus::InvalidArgument, format!("{what} must be ≥ 0")));
    }
    Ok(Point2D::new(q.x, q.y))
}

/// Up to `k` nearest points within `max_dist` (use `INFINITY` for no
/// limit), nearest first.
///
/// # Safety
/// `tree` must be a live handle, `out` must hold `cap` neighbors and
/// `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_kdtree_knn(
    tree: *const McpKdTree,
    query: McpPoint,
    k: usize,
    max_dist: f64,
    out: *mut McpNeighbor,
    cap: usize,
    out_len: *mut usize,
) -> McpStatus {
    guard(|| {
        non_null(tree, "tree")?;
        let q = check_query(query, max_dist, "max_dist")?;
        let hits = (*tree).tree.knn(q, k, max_dist);
        write_neighbors(&hits, out, cap, out_len)
    })
}

/// All points within distance `r`, boundary included. If `cap` is too
/// small the call fails with `BUFFER_TOO_SMALL` and `out_len` holds the
/// required count, so a second call can size the buffer exactly.
///
/// # Safety
/// As for [`mcp_kdtree_knn`].
#[no_mangle]
pub unsafe extern "C" fn mcp_kdtree_radius(
    tree: *const McpKdTree,
    query: McpPoint,
    r: f64,
    out: *mut McpNeighbor,
    cap: usize,
    out_len: *mut usize,
) -> McpStatus {
    guard(|| {
        non_null(tree, "tree")?;
        let q = check_query(query, r, "r")?;
        let hits = (*tree).tree.radius_query(q, r);
        write_neighbors(&hits, out, cap, out_len)
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_pipeline_params_default(out: *mut McpPipelineParams) -> McpStatus {
    guard(|| {
        non_null(out, "out")?;
        let c = PipelineConfig::default();
        *out = McpPipelineParams {
            k: c.k,
            d_max: c.d_max,
            radius: c.radius,
            min_extent: c.min_extent,
            min_poles: c.min_poles,
            crs: McpCrs::Auto,
            threads: 0,
        };
        Ok(())
    })
}

fn stage_status(stage: Stage) -> McpStatus {
    match stage {
        Stage::Config => McpStatus::InvalidArgument,
        Stage::Ingest => McpStatus::Parse,
        Stage::Report => McpStatus::Io,
        _ => McpStatus::Validation,
    }
}

fn existing(p: &Path) -> Result<(), FfiError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(FfiError::new(McpStatus::Io, format!("{} does not exist", p.display())))
    }
}

/// Runs association, detection and clustering on a pole and a wire file
/// (CSV or GeoJSON). `params` may be null for defaults.
///
/// # Safety
/// The paths must be NUL-terminated strings, `params` null or readable,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_zones_compute(
    poles_path: *const c_char,
    wires_path: *const c_char,
    params: *const McpPipelineParams,
    out: *mut *mut McpZoneSet,
) -> McpStatus {
    guard(|| {
        non_null(out, "out")?;
        let poles = path_arg(poles_path, "poles_path")?;
        let wires = path_arg(wires_path, "wires_path")?;
        existing(&poles)?;
        existing(&wires)?;
        let mut cfg = PipelineConfig {
            poles: Some(poles),
            wires: Some(wires),
            ..Default::default()
        };
        if let Some(p) = params.as_ref() {
            cfg.k = p.k;
            cfg.d_max = p.d_max;
            cfg.radius = p.radius;
            cfg.min_extent = p.min_extent;
            cfg.min_poles = p.min_poles;
            cfg.crs = match p.crs {
                McpCrs::Auto => None,
                McpCrs::Planar => Some(Crs::Planar),
                McpCrs::Wgs84 => Some(Crs::Wgs84),
            };
            cfg.threads = (p.threads > 0).then_some(p.threads);
        }
        let run = compute(&cfg).map_err(|e| FfiError::new(stage_status(e.stage), e.to_string()))?;
        *out = Box::into_raw(Box::new(McpZoneSet {
            zones: run.zones,
            histogram: run.summary.histogram,
            frame: run.frame,
        }));
        Ok(())
    })
}

/// # Safety
/// `set` must come from [`mcp_zones_compute`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcp_zones_free(set: *mut McpZoneSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcp_zones_len(set: *const McpZoneSet) -> usize {
    set.as_ref().map_or(0, |s| s.zones.len())
}

unsafe fn zone_at<'a>(set: *const McpZoneSet, index: usize) -> Result<&'a RiskZone, FfiError> {
    non_null(set, "set")?;
    let zones = &(*set).zones;
    zones.get(index).ok_or_else(|| {
        FfiError::new(
            McpStatus::InvalidArgument,
            format!("zone index {index} out of range ({} zones)", zones.len()),
        )
    })
}

/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_zones_get(set: *const McpZoneSet, index: usize, out: *mut McpZoneInfo) -> McpStatus {
    guard(|| {
        non_null(out, "out")?;
        let z = zone_at(set, index)?;
        let [cx, cy] = (*set)
            .frame
            .to_source(z.centroid)
            .map_err(|e| FfiError::new(McpStatus::Internal, e.to_string()))?;
        *out = McpZoneInfo {
            extent_m: z.extent_m,
            pole_count: z.pole_count,
            circuit_count: z.circuits.ids().len(),
            centroid_x: cx,
            centroid_y: cy,
        };
        Ok(())
    })
}

/// Copies the zone id into `buf` (NUL-terminated).
///
/// # Safety
/// `set` must be a live handle, `buf` must hold `cap` bytes and `out_len`
/// must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_zones_id(
    set: *const McpZoneSet,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    out_len: *mut usize,
) -> McpStatus {
    guard(|| {
        let z = zone_at(set, index)?;
        copy_str(&z.zone_id, buf, cap, out_len)
    })
}

/// Writes zones.geojson, zones.csv and histogram.csv into `dir`,
/// creating it if needed.
///
/// # Safety
/// `set` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcp_zones_write(set: *const McpZoneSet, dir: *const c_char) -> McpStatus {
    guard(|| {
        non_null(set, "set")?;
        let dir = path_arg(dir, "dir")?;
        let set = &*set;
        let io = |e: &dyn std::fmt::Display| FfiError::new(McpStatus::Io, e.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| io(&e))?;
        write_zones_geojson(&set.zones, set.frame, &dir.join("zones.geojson")).map_err(|e| io(&e))?;
        write_zones_csv(&set.zones, set.frame, &dir.join("zones.csv")).map_err(|e| io(&e))?;
        write_histogram_csv(&set.histogram, &dir.join("histogram.csv")).map_err(|e| io(&e))?;
        Ok(())
    })
}

/// Weighted score in `[0, 100]` of six factor values in `[0, 1]`.
/// `weights` may be null for the default weights; otherwise its six
/// entries must be non-negative and sum to 100.
///
/// # Safety
/// `factors` must point to 6 doubles, `weights` to 6 doubles or null, and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_score_zone(factors: *const f64, weights: *const f64, out: *mut f64) -> McpStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(factors, "factors")?;
        let invalid = |e: mcpzone::prioritize::PrioritizeError| FfiError::new(McpStatus::Validation, e.to_string());
        let mut f = [0.0; 6];
        f.copy_from_slice(std::slice::from_raw_parts(factors, 6));
        let f = FactorVector::new(f).map_err(invalid)?;
        let w = if weights.is_null() {
            WeightVector::default()
        } else {
            let mut raw = [0.0; 6];
            raw.copy_from_slice(std::slice::from_raw_parts(weights, 6));
            validate_weights(raw).map_err(invalid)?
        };
        *out = score_zone(&f, &w);
        Ok(())
    })
}
