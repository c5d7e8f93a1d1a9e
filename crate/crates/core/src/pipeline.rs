//! End-to-end run: ingest, associate, detect, group, cluster, optionally
//! rank, and write reports.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{associate, AssociationOptions, AssociationParams, AssociationTable, DistanceMode};
use crate::ingest::{load_poles, load_wires, CoordFrame, Crs, IngestIssue, LoadOptions, PoleSet, Source, WireSet};
use crate::mcp_detect::{detect_mcp, group_by_configuration, write_mcp_csv, Grouping};
use crate::prioritize::{
    prepare_factors, rank_zones, read_factors_csv, MissingPolicy, Normalization, PriorityRanking, WeightVector,
};
use crate::report::{write_histogram_csv, write_zones_csv, write_zones_geojson};
use crate::zoning::{build_zones, count_clusters, length_histogram, ExtentMethod, HistogramBin, HistogramSpec, RiskZone, ZoningParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Associate,
    Detect,
    Cluster,
    Prioritize,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Associate => "associate",
            Stage::Detect => "detect",
            Stage::Cluster => "cluster",
            Stage::Prioritize => "prioritize",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, e: impl fmt::Display) -> Self {
        Self {
            stage,
            message: e.to_string(),
        }
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

/// Run configuration. Deserializable from TOML; every field is optional
/// there and falls back to the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub poles: Option<PathBuf>,
    pub wires: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    /// Source CRS for both layers; `None` uses each format's default.
    pub crs: Option<Crs>,
    pub k: usize,
    pub d_max: f64,
    pub distance: DistanceMode,
    pub trust_declared: bool,
    pub grouping: Grouping,
    pub radius: f64,
    pub min_extent: f64,
    pub min_poles: usize,
    pub extent: ExtentMethod,
    pub normalize: Normalization,
    /// Weight file; `None` uses the default weights.
    pub weights: Option<PathBuf>,
    /// Normalized value substituted for missing factors; `None` rejects them.
    pub impute: Option<f64>,
    pub bin_width_mi: f64,
    /// Lower edge of the open-ended histogram bin; `None` disables it.
    pub overflow_mi: Option<f64>,
    pub out: PathBuf,
    pub lenient: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let a = AssociationParams::default();
        let z = ZoningParams::default();
        let h = HistogramSpec::default();
        Self {
            poles: None,
            wires: None,
            factors: None,
            crs: None,
            k: a.k,
            d_max: a.d_max,
            distance: DistanceMode::default(),
            trust_declared: false,
            grouping: Grouping::default(),
            radius: z.radius,
            min_extent: z.min_extent,
            min_poles: z.min_poles,
            extent: z.extent,
            normalize: Normalization::default(),
            weights: None,
            impute: None,
            bin_width_mi: h.bin_width_mi,
            overflow_mi: h.overflow_mi,
            out: PathBuf::from("out"),
            lenient: false,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))
    }

    pub fn association(&self) -> AssociationOptions {
        AssociationOptions {
            params: AssociationParams {
                k: self.k,
                d_max: self.d_max,
            },
            mode: self.distance,
            trust_declared: self.trust_declared,
        }
    }

    pub fn zoning(&self) -> ZoningParams {
        ZoningParams {
            radius: self.radius,
            min_extent: self.min_extent,
            min_poles: self.min_poles,
            extent: self.extent,
        }
    }

    pub fn histogram(&self) -> HistogramSpec {
        HistogramSpec {
            bin_width_mi: self.bin_width_mi,
            overflow_mi: self.overflow_mi,
        }
    }

    fn missing_policy(&self) -> MissingPolicy {
        self.impute.map_or(MissingPolicy::Strict, MissingPolicy::Impute)
    }

    /// Checks that required inputs are present and exist.
    fn input_paths(&self) -> Result<(&Path, &Path), PipelineError> {
        let need = |p: &Option<PathBuf>, name: &str| -> Result<PathBuf, PipelineError> {
            p.clone()
                .ok_or_else(|| PipelineError::new(Stage::Config, format!("missing required input --{name}")))
        };
        need(&self.poles, "poles")?;
        need(&self.wires, "wires")?;
        for p in [&self.poles, &self.wires, &self.factors, &self.weights].into_iter().flatten() {
            if !p.exists() {
                return Err(PipelineError::new(
                    Stage::Ingest,
                    format!("input file {} does not exist", p.display()),
                ));
            }
        }
        Ok((self.poles.as_deref().unwrap(), self.wires.as_deref().unwrap()))
    }
}

/// Both layers in one shared planar frame.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub poles: PoleSet,
    pub wires: WireSet,
}

/// Loads poles, then wires projected about the pole layer's origin.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    let (poles_path, wires_path) = cfg.input_paths()?;
    let opts = LoadOptions {
        crs: cfg.crs,
        origin: None,
        lenient: cfg.lenient,
    };
    let poles = load_poles(&Source::from_path(poles_path), &opts).map_err(at(Stage::Ingest))?;
    let wire_opts = LoadOptions {
        origin: poles.frame().origin(),
        ..opts
    };
    let wires = load_wires(&Source::from_path(wires_path), &wire_opts).map_err(at(Stage::Ingest))?;
    if matches!(poles.frame(), CoordFrame::Planar) != matches!(wires.frame(), CoordFrame::Planar) {
        return Err(PipelineError::new(
            Stage::Ingest,
            "pole and wire layers resolve to different coordinate systems; pass --crs",
        ));
    }
    for issue in poles.issues().iter().chain(wires.issues()) {
        match issue {
            IngestIssue::Skipped { layer, record, reason } => log::warn!("skipped {layer} record `{record}`: {reason}"),
            IngestIssue::LengthMismatch {
                wire_id,
                stated_m,
                computed_m,
            } => log::warn!("wire `{wire_id}`: stated length {stated_m} m vs geometry {computed_m} m; using geometry"),
        }
    }
    Ok(Inputs { poles, wires })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageCounts {
    pub poles: usize,
    pub wires: usize,
    pub skipped_records: usize,
    pub length_mismatches: usize,
    pub attachments: usize,
    pub associated_poles: usize,
    pub mcp_poles: usize,
    pub groups: usize,
    pub clusters: usize,
    pub zones: usize,
    pub zone_poles: usize,
    pub ranked_zones: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub counts: StageCounts,
    pub histogram: Vec<HistogramBin>,
    /// Wall time per stage in milliseconds; informational only.
    pub timings_ms: Vec<(Stage, f64)>,
    pub outputs: Vec<PathBuf>,
}

/// Everything a run computed, for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub zones: Vec<RiskZone>,
    pub ranking: Option<PriorityRanking>,
    pub frame: CoordFrame,
}

struct Timer(Vec<(Stage, f64)>, Instant);

impl Timer {
    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.0.push((stage, (now - self.1).as_secs_f64() * 1e3));
        self.1 = now;
    }
}

/// Runs the analysis without writing anything.
pub fn compute(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    with_threads(cfg.threads, || compute_inner(cfg))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T, PipelineError> + Send) -> Result<T, PipelineError> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(at(Stage::Config))?
            .install(f),
    }
}

fn compute_inner(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    let opts = cfg.association();
    opts.params.validate().map_err(at(Stage::Config))?;
    let zoning = cfg.zoning();
    zoning.validate().map_err(at(Stage::Config))?;
    // weights are checked before the expensive stages run
    let weights = match &cfg.weights {
        Some(p) => WeightVector::from_file(p).map_err(at(Stage::Config))?,
        None => WeightVector::default(),
    };
    let mut timer = Timer(Vec::new(), Instant::now());

    let inputs = load_inputs(cfg)?;
    timer.lap(Stage::Ingest);
    let issues = || inputs.poles.issues().iter().chain(inputs.wires.issues());
    let mut counts = StageCounts {
        poles: inputs.poles.len(),
        wires: inputs.wires.len(),
        skipped_records: issues().filter(|i| matches!(i, IngestIssue::Skipped { .. })).count(),
        length_mismatches: issues().filter(|i| matches!(i, IngestIssue::LengthMismatch { .. })).count(),
        ..Default::default()
    };

    let assoc = associate(&inputs.poles, &inputs.wires, &opts).map_err(at(Stage::Associate))?;
    counts.attachments = assoc.attachment_count();
    counts.associated_poles = assoc.associated_pole_count();
    timer.lap(Stage::Associate);

    let mcps = detect_mcp(&assoc, &inputs.poles);
    let groups = group_by_configuration(&mcps, cfg.grouping);
    counts.mcp_poles = mcps.len();
    counts.groups = groups.len();
    timer.lap(Stage::Detect);

    counts.clusters = count_clusters(&groups, zoning.radius);
    let zones = build_zones(&groups, &zoning).map_err(at(Stage::Cluster))?;
    counts.zones = zones.len();
    counts.zone_poles = zones.iter().map(|z| z.pole_count).sum();
    let histogram = length_histogram(&zones, &cfg.histogram()).map_err(at(Stage::Cluster))?;
    timer.lap(Stage::Cluster);

    let ranking = match &cfg.factors {
        None => None,
        Some(path) => {
            let table = read_factors_csv(path).map_err(at(Stage::Prioritize))?;
            let ids: Vec<String> = zones.iter().map(|z| z.zone_id.clone()).collect();
            let prepared =
                prepare_factors(&table, &ids, cfg.normalize, cfg.missing_policy()).map_err(at(Stage::Prioritize))?;
            let r = rank_zones(&prepared, &weights);
            counts.ranked_zones = r.entries.len();
            timer.lap(Stage::Prioritize);
            Some(r)
        }
    };

    Ok(RunOutput {
        summary: RunSummary {
            counts,
            histogram,
            timings_ms: timer.0,
            outputs: Vec::new(),
        },
        zones,
        ranking,
        frame: inputs.poles.frame(),
    })
}

fn report_err(e: impl fmt::Display) -> PipelineError {
    PipelineError::new(Stage::Report, e)
}

fn create_out_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::new(Stage::Report, format!("cannot create {}: {e}", dir.display())))
}

/// Runs the full pipeline and writes zones.geojson, zones.csv,
/// histogram.csv, ranking.csv (with factors) and run_summary.json.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let started = Instant::now();
    let mut run = compute(cfg)?;
    create_out_dir(&cfg.out)?;
    let out = |name: &str| cfg.out.join(name);

    let zones_geojson = out("zones.geojson");
    write_zones_geojson(&run.zones, run.frame, &zones_geojson).map_err(report_err)?;
    let zones_csv = out("zones.csv");
    write_zones_csv(&run.zones, run.frame, &zones_csv).map_err(report_err)?;
    let histogram_csv = out("histogram.csv");
    write_histogram_csv(&run.summary.histogram, &histogram_csv).map_err(report_err)?;
    run.summary.outputs = vec![zones_geojson, zones_csv, histogram_csv];
    if let Some(r) = &run.ranking {
        let ranking_csv = out("ranking.csv");
        r.write_csv(&ranking_csv, cfg.impute.is_some()).map_err(report_err)?;
        run.summary.outputs.push(ranking_csv);
    }
    let summary_path = out("run_summary.json");
    run.summary.outputs.push(summary_path.clone());
    run.summary.timings_ms.push((Stage::Report, started.elapsed().as_secs_f64() * 1e3));
    let json = serde_json::to_string_pretty(&run.summary).map_err(report_err)?;
    std::fs::write(&summary_path, json + "\n").map_err(report_err)?;
    Ok(run.summary)
}

/// Per-layer results of an ingest-only dry run.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub poles: usize,
    pub wires: usize,
    pub issues: Vec<IngestIssue>,
}

pub fn validate_inputs(cfg: &PipelineConfig) -> Result<ValidationReport, PipelineError> {
    let inputs = load_inputs(cfg)?;
    Ok(ValidationReport {
        poles: inputs.poles.len(),
        wires: inputs.wires.len(),
        issues: inputs.poles.issues().iter().chain(inputs.wires.issues()).cloned().collect(),
    })
}

/// Writes associations.csv and mcp.csv to the output directory.
pub fn dump_association(cfg: &PipelineConfig) -> Result<(AssociationTable, usize), PipelineError> {
    with_threads(cfg.threads, || {
        let opts = cfg.association();
        let inputs = load_inputs(cfg)?;
        let assoc = associate(&inputs.poles, &inputs.wires, &opts).map_err(at(Stage::Associate))?;
        let mcps = detect_mcp(&assoc, &inputs.poles);
        create_out_dir(&cfg.out)?;
        assoc
            .write_csv(&inputs.poles, &inputs.wires, &cfg.out.join("associations.csv"))
            .map_err(at(Stage::Report))?;
        write_mcp_csv(&mcps, &cfg.out.join("mcp.csv")).map_err(at(Stage::Report))?;
        Ok((assoc, mcps.len()))
    })
}
