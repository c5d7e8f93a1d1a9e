use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcpzone::association::DistanceMode;
use mcpzone::ingest::Crs;
use mcpzone::mcp_detect::Grouping;
use mcpzone::pipeline::{dump_association, run_pipeline, validate_inputs, PipelineConfig, PipelineError, Stage};
use mcpzone::prioritize::{
    prepare_factors, rank_zones, read_factors_csv, MissingPolicy, Normalization, WeightVector,
};
use mcpzone::report::{read_zones_csv, write_histogram_csv};
use mcpzone::synth::{generate, write_territory, CorridorSpec, OutputFormat, SynthParams};
use mcpzone::zoning::{histogram_from_extents, ExtentMethod, HistogramSpec};

#[derive(Parser)]
#[command(name = "mcpzone", version, about = "Find and rank multi-circuit pole risk zones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write zone reports.
    Zone(ZoneArgs),
    /// Write the pole-to-wire association table and detected MCPs.
    Associate(AssociateArgs),
    /// Score and rank zones from an existing zones.csv and a factor table.
    Rank(RankArgs),
    /// Generate a synthetic territory with planted corridors.
    Synth(SynthArgs),
    /// Load the inputs and report record counts without running the analysis.
    Validate(InputArgs),
    /// Rebuild the extent histogram from an existing zones.csv.
    Hist(HistArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    poles: Option<PathBuf>,
    #[arg(long)]
    wires: Option<PathBuf>,
    /// Coordinate system of both layers (default: wgs84 for GeoJSON, planar for CSV).
    #[arg(long, value_parser = parse_from_str::<Crs>)]
    crs: Option<Crs>,
    /// Skip bad records instead of failing.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct AssocFlags {
    #[arg(long)]
    k: Option<usize>,
    /// Association cutoff in meters.
    #[arg(long = "d-max")]
    d_max: Option<f64>,
    #[arg(long, value_parser = parse_distance)]
    distance: Option<DistanceMode>,
    /// Also attach wires to the poles listed in their pole_ids field.
    #[arg(long)]
    trust_declared: bool,
}

#[derive(Args)]
struct ZoneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    assoc: AssocFlags,
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long, value_parser = parse_from_str::<Grouping>)]
    grouping: Option<Grouping>,
    /// Clustering radius in meters.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long = "min-extent")]
    min_extent: Option<f64>,
    #[arg(long = "min-poles")]
    min_poles: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<ExtentMethod>)]
    extent: Option<ExtentMethod>,
    #[arg(long, value_parser = parse_from_str::<Normalization>)]
    normalize: Option<Normalization>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Substitute this normalized value for missing factors.
    #[arg(long)]
    impute: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AssociateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    assoc: AssocFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// zones.csv from a previous `zone` run.
    #[arg(long)]
    zones: PathBuf,
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long, value_parser = parse_from_str::<Normalization>, default_value = "minmax")]
    normalize: Normalization,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    impute: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct HistArgs {
    #[arg(long)]
    zones: PathBuf,
    #[arg(long = "bin-width", default_value_t = 1.0)]
    bin_width: f64,
    /// Lower edge of the open-ended last bin, in miles; 0 disables it.
    #[arg(long, default_value_t = 5.0)]
    overflow: f64,
    /// Directory for histogram.csv; prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML generator parameters; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Side of the square territory in meters.
    #[arg(long)]
    territory: Option<f64>,
    #[arg(long)]
    background_poles: Option<usize>,
    #[arg(long)]
    background_wires: Option<usize>,
    #[arg(long)]
    background_circuits: Option<usize>,
    /// Planted corridor as CIRCUITS:LENGTH_M:SPACING_M:HEADING_DEG; repeatable.
    #[arg(long = "corridor", value_parser = parse_corridor)]
    corridors: Vec<CorridorSpec>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    wire_offset: Option<f64>,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    format: OutputFormat,
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn parse_distance(s: &str) -> Result<DistanceMode, String> {
    match s {
        "centroid" => Ok(DistanceMode::Centroid),
        "nearest-point" => Ok(DistanceMode::NearestPoint),
        other => Err(format!("unknown distance mode `{other}` (expected centroid or nearest-point)")),
    }
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "geojson" => Ok(OutputFormat::GeoJson),
        other => Err(format!("unknown format `{other}` (expected csv or geojson)")),
    }
}

fn parse_corridor(s: &str) -> Result<CorridorSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [c, l, sp, h] = parts[..] else {
        return Err("expected CIRCUITS:LENGTH_M:SPACING_M:HEADING_DEG".into());
    };
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    Ok(CorridorSpec {
        circuits: c.parse().map_err(|_| format!("`{c}` is not a circuit count"))?,
        length_m: num(l)?,
        spacing_m: num(sp)?,
        heading_deg: num(h)?,
    })
}

fn base_config(input: &InputArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &input.config {
        Some(p) => PipelineConfig::from_toml_file(p)?,
        None => PipelineConfig::default(),
    };
    if input.poles.is_some() {
        cfg.poles = input.poles.clone();
    }
    if input.wires.is_some() {
        cfg.wires = input.wires.clone();
    }
    cfg.crs = input.crs.or(cfg.crs);
    cfg.lenient |= input.lenient;
    cfg.threads = input.threads.or(cfg.threads);
    Ok(cfg)
}

fn apply_assoc(cfg: &mut PipelineConfig, a: &AssocFlags) {
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.d_max = a.d_max.unwrap_or(cfg.d_max);
    cfg.distance = a.distance.unwrap_or(cfg.distance);
    cfg.trust_declared |= a.trust_declared;
}

fn zone(args: ZoneArgs) -> Result<(), PipelineError> {
    let mut cfg = base_config(&args.input)?;
    apply_assoc(&mut cfg, &args.assoc);
    if args.factors.is_some() {
        cfg.factors = args.factors;
    }
    if args.weights.is_some() {
        cfg.weights = args.weights;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    cfg.grouping = args.grouping.unwrap_or(cfg.grouping);
    cfg.radius = args.radius.unwrap_or(cfg.radius);
    cfg.min_extent = args.min_extent.unwrap_or(cfg.min_extent);
    cfg.min_poles = args.min_poles.unwrap_or(cfg.min_poles);
    cfg.extent = args.extent.unwrap_or(cfg.extent);
    cfg.normalize = args.normalize.unwrap_or(cfg.normalize);
    cfg.impute = args.impute.or(cfg.impute);

    let s = run_pipeline(&cfg)?;
    let c = &s.counts;
    println!("poles: {}  wires: {}", c.poles, c.wires);
    println!("attachments: {}  associated poles: {}", c.attachments, c.associated_poles);
    println!("MCPs: {}  circuit groups: {}  clusters: {}", c.mcp_poles, c.groups, c.clusters);
    println!("zones: {}  poles in zones: {}", c.zones, c.zone_poles);
    if cfg.factors.is_some() {
        println!("ranked zones: {}", c.ranked_zones);
    }
    println!("outputs written to {}", cfg.out.display());
    Ok(())
}

fn associate_cmd(args: AssociateArgs) -> Result<(), PipelineError> {
    let mut cfg = base_config(&args.input)?;
    apply_assoc(&mut cfg, &args.assoc);
    if let Some(out) = args.out {
        cfg.out = out;
    }
    let (table, mcps) = dump_association(&cfg)?;
    println!(
        "poles: {}  attachments: {}  associated poles: {}  MCPs: {}",
        table.len(),
        table.attachment_count(),
        table.associated_pole_count(),
        mcps
    );
    println!("wrote {} and {}", cfg.out.join("associations.csv").display(), cfg.out.join("mcp.csv").display());
    Ok(())
}

fn rank(args: RankArgs) -> Result<(), PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::new(Stage::Prioritize, e);
    let factors = args
        .factors
        .ok_or_else(|| PipelineError::new(Stage::Config, "missing required input --factors"))?;
    let weights = match &args.weights {
        Some(p) => WeightVector::from_file(p).map_err(|e| PipelineError::new(Stage::Config, e))?,
        None => WeightVector::default(),
    };
    let zones = read_zones_csv(&args.zones).map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    let ids: Vec<String> = zones.into_iter().map(|z| z.zone_id).collect();
    let table = read_factors_csv(&factors).map_err(|e| err(&e))?;
    let policy = args.impute.map_or(MissingPolicy::Strict, MissingPolicy::Impute);
    let prepared = prepare_factors(&table, &ids, args.normalize, policy).map_err(|e| err(&e))?;
    let ranking = rank_zones(&prepared, &weights);
    std::fs::create_dir_all(&args.out).map_err(|e| PipelineError::new(Stage::Report, e))?;
    let path = args.out.join("ranking.csv");
    ranking
        .write_csv(&path, args.impute.is_some())
        .map_err(|e| PipelineError::new(Stage::Report, e))?;
    for e in ranking.entries.iter().take(10) {
        println!("{:>4}  {}  {:.3}", e.rank, e.zone_id, e.score);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn hist(args: HistArgs) -> Result<(), PipelineError> {
    let zones = read_zones_csv(&args.zones).map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    let extents: Vec<f64> = zones.iter().map(|z| z.extent_m).collect();
    let spec = HistogramSpec {
        bin_width_mi: args.bin_width,
        overflow_mi: (args.overflow > 0.0).then_some(args.overflow),
    };
    let bins = histogram_from_extents(&extents, &spec).map_err(|e| PipelineError::new(Stage::Config, e))?;
    match args.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| PipelineError::new(Stage::Report, e))?;
            let path = dir.join("histogram.csv");
            write_histogram_csv(&bins, &path).map_err(|e| PipelineError::new(Stage::Report, e))?;
            println!("wrote {}", path.display());
        }
        None => {
            println!("bin_lo_mi,bin_hi_mi,count");
            for b in &bins {
                let hi = b.hi_mi.map_or_else(|| "inf".to_string(), |h| h.to_string());
                println!("{},{},{}", b.lo_mi, hi, b.count);
            }
        }
    }
    Ok(())
}

fn synth_params(args: &SynthArgs) -> Result<SynthParams, PipelineError> {
    let mut p = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::new(Stage::Config, format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?
        }
        None => SynthParams::default(),
    };
    p.seed = args.seed.unwrap_or(p.seed);
    p.territory_m = args.territory.unwrap_or(p.territory_m);
    p.background_poles = args.background_poles.unwrap_or(p.background_poles);
    p.background_wires = args.background_wires.unwrap_or(p.background_wires);
    p.background_circuits = args.background_circuits.unwrap_or(p.background_circuits);
    p.jitter_m = args.jitter.unwrap_or(p.jitter_m);
    p.wire_offset_m = args.wire_offset.unwrap_or(p.wire_offset_m);
    if !args.corridors.is_empty() {
        p.corridors = args.corridors.clone();
    }
    Ok(p)
}

fn synth(args: SynthArgs) -> Result<(), PipelineError> {
    let params = synth_params(&args)?;
    let territory = generate(&params).map_err(|e| PipelineError::new(Stage::Config, e))?;
    let files =
        write_territory(&territory, &args.out, args.format).map_err(|e| PipelineError::new(Stage::Report, e))?;
    println!(
        "poles: {}  wires: {}  corridors: {}",
        territory.poles.len(),
        territory.wires.len(),
        territory.truth.corridors.len()
    );
    for p in [&files.poles, &files.wires, &files.ground_truth] {
        println!("wrote {}", p.display());
    }
    if args.format == OutputFormat::GeoJson {
        println!("coordinates are planar meters; load with --crs planar");
    }
    Ok(())
}

fn validate(input: InputArgs) -> Result<(), PipelineError> {
    let cfg = base_config(&input)?;
    let report = validate_inputs(&cfg)?;
    let name = |p: &Option<PathBuf>| p.as_deref().map(Path::display).map(|d| d.to_string()).unwrap_or_default();
    println!("poles: {} records ({})", report.poles, name(&cfg.poles));
    println!("wires: {} records ({})", report.wires, name(&cfg.wires));
    println!("issues: {}", report.issues.len());
    for issue in &report.issues {
        println!("  {}", serde_json::to_string(issue).unwrap_or_default());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Zone(a) => zone(a),
        Command::Associate(a) => associate_cmd(a),
        Command::Rank(a) => rank(a),
        Command::Synth(a) => synth(a),
        Command::Validate(a) => validate(a),
        Command::Hist(a) => hist(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
