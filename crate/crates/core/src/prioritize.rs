//! Weighted multi-factor ranking of risk zones.
//!
//! Six normalized factors in `[0, 1]` are combined linearly with percentage
//! weights that sum to 100, giving a composite score in `[0, 100]`. The
//! default weights are customer impact 30, redundancy loss 20, critical
//! infrastructure 10, asset condition 20, restoration complexity 10 and
//! outage risk 10.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    CustomerImpact,
    RedundancyLoss,
    CriticalInfrastructure,
    AssetCondition,
    RestorationComplexity,
    OutageRisk,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::CustomerImpact,
        Factor::RedundancyLoss,
        Factor::CriticalInfrastructure,
        Factor::AssetCondition,
        Factor::RestorationComplexity,
        Factor::OutageRisk,
    ];

    /// Column / key name used in factor and weight files.
    pub fn column(self) -> &'static str {
        match self {
            Factor::CustomerImpact => "customer_impact",
            Factor::RedundancyLoss => "redundancy_loss",
            Factor::CriticalInfrastructure => "critical_infrastructure",
            Factor::AssetCondition => "asset_condition",
            Factor::RestorationComplexity => "restoration_complexity",
            Factor::OutageRisk => "outage_risk",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrioritizeError {
    #[error("weight for {factor} is negative ({value})")]
    NegativeWeight { factor: Factor, value: f64 },
    #[error("weight for {factor} is not finite")]
    NonFiniteWeight { factor: Factor },
    #[error("weights sum to {0}, expected 100")]
    WeightSum(f64),
    #[error("{factor} value {value} is outside [0, 1]")]
    OutOfRange { factor: Factor, value: f64 },
    #[error("zone `{zone_id}` has no value for {factor}")]
    MissingFactor { zone_id: String, factor: Factor },
    #[error("zone `{0}` appears more than once in the factor table")]
    DuplicateZone(String),
    #[error("normalization needs at least one value")]
    EmptyColumn,
    #[error("{0}")]
    Input(String),
}

/// Six factor scores, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorVector([f64; 6]);

impl FactorVector {
    pub fn new(values: [f64; 6]) -> Result<Self, PrioritizeError> {
        for (factor, &v) in Factor::ALL.iter().zip(&values) {
            if !(0.0..=1.0).contains(&v) {
                return Err(PrioritizeError::OutOfRange { factor: *factor, value: v });
            }
        }
        Ok(Self(values))
    }

    pub fn uniform(v: f64) -> Result<Self, PrioritizeError> {
        Self::new([v; 6])
    }

    pub fn get(&self, f: Factor) -> f64 {
        self.0[f.index()]
    }

    pub fn values(&self) -> [f64; 6] {
        self.0
    }
}

/// Percentage weights for the six factors, summing to 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightVector([f64; 6]);

impl Default for WeightVector {
    fn default() -> Self {
        Self([30.0, 20.0, 10.0, 20.0, 10.0, 10.0])
    }
}

impl WeightVector {
    pub fn get(&self, f: Factor) -> f64 {
        self.0[f.index()]
    }

    pub fn values(&self) -> [f64; 6] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Loads weights from a TOML or JSON file (by extension) with one
    /// percentage per factor key.
    pub fn from_file(path: &Path) -> Result<Self, PrioritizeError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct WeightsFile {
            customer_impact: f64,
            redundancy_loss: f64,
            critical_infrastructure: f64,
            asset_condition: f64,
            restoration_complexity: f64,
            outage_risk: f64,
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| PrioritizeError::Input(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed: WeightsFile = if is_json {
            serde_json::from_str(&text).map_err(|e| PrioritizeError::Input(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| PrioritizeError::Input(format!("{}: {e}", path.display())))?
        };
        validate_weights([
            parsed.customer_impact,
            parsed.redundancy_loss,
            parsed.critical_infrastructure,
            parsed.asset_condition,
            parsed.restoration_complexity,
            parsed.outage_risk,
        ])
    }
}

/// Accepts non-negative weights summing to 100 within 1e-6 relative, and
/// rescales away that residual drift.
pub fn validate_weights(raw: [f64; 6]) -> Result<WeightVector, PrioritizeError> {
    for (factor, &w) in Factor::ALL.iter().zip(&raw) {
        if !w.is_finite() {
            return Err(PrioritizeError::NonFiniteWeight { factor: *factor });
        }
        if w < 0.0 {
            return Err(PrioritizeError::NegativeWeight { factor: *factor, value: w });
        }
    }
    let sum: f64 = raw.iter().sum();
    if (sum - 100.0).abs() > 1e-6 * 100.0 {
        return Err(PrioritizeError::WeightSum(sum));
    }
    if sum == 100.0 {
        return Ok(WeightVector(raw));
    }
    Ok(WeightVector(raw.map(|w| w * 100.0 / sum)))
}

/// Linear weighted sum `Σ w·f`, clamped to `[0, 100]` against rounding.
pub fn score_zone(f: &FactorVector, w: &WeightVector) -> f64 {
    f.0.iter()
        .zip(&w.0)
        .map(|(f, w)| f * w)
        .sum::<f64>()
        .clamp(0.0, 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `[min, max] → [0, 1]`; a constant column maps to 0.5.
    #[default]
    MinMax,
    /// `(rank − 1) / (n − 1)` with average ranks for ties; a single value maps to 0.5.
    Rank,
    /// Values already in `[0, 1]`, checked and passed through.
    Passthrough,
}

impl FromStr for Normalization {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minmax" => Ok(Normalization::MinMax),
            "rank" => Ok(Normalization::Rank),
            "passthrough" => Ok(Normalization::Passthrough),
            other => Err(format!("unknown normalization `{other}` (expected minmax, rank or passthrough)")),
        }
    }
}

pub fn normalize_factor(raw: &[f64], method: Normalization) -> Result<Vec<f64>, PrioritizeError> {
    normalize_column(raw, method, Factor::CustomerImpact)
}

fn normalize_column(raw: &[f64], method: Normalization, factor: Factor) -> Result<Vec<f64>, PrioritizeError> {
    if raw.is_empty() {
        return Err(PrioritizeError::EmptyColumn);
    }
    if let Some(&bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(PrioritizeError::OutOfRange { factor, value: bad });
    }
    Ok(match method {
        Normalization::MinMax => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi == lo {
                vec![0.5; raw.len()]
            } else {
                raw.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
            }
        }
        Normalization::Rank => {
            let n = raw.len();
            if n == 1 {
                return Ok(vec![0.5]);
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
            let mut ranks = vec![0.0; n];
            let mut i = 0;
            while i < n {
                let mut j = i;
                while j + 1 < n && raw[order[j + 1]] == raw[order[i]] {
                    j += 1;
                }
                // 1-based average rank of the tie run i..=j
                let avg = (i + j) as f64 / 2.0 + 1.0;
                for &k in &order[i..=j] {
                    ranks[k] = (avg - 1.0) / (n - 1) as f64;
                }
                i = j + 1;
            }
            ranks
        }
        Normalization::Passthrough => {
            if let Some(&bad) = raw.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(PrioritizeError::OutOfRange { factor, value: bad });
            }
            raw.to_vec()
        }
    })
}

/// One row of a factor table; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFactors {
    pub zone_id: String,
    pub values: [Option<f64>; 6],
}

/// Reads `zone_id` plus the six factor columns. Empty cells are missing values.
pub fn read_factors_csv(path: &Path) -> Result<Vec<RawFactors>, PrioritizeError> {
    let input = |e: &dyn fmt::Display| PrioritizeError::Input(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input(&e))?;
    let headers = rdr.headers().map_err(|e| input(&e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input(&format!("missing column `{name}`")))
    };
    let id_col = col("zone_id")?;
    let cols: Vec<usize> = Factor::ALL.iter().map(|f| col(f.column())).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input(&e))?;
        let zone_id = rec.get(id_col).unwrap_or_default().to_string();
        if zone_id.is_empty() {
            return Err(input(&"row with empty zone_id"));
        }
        let mut values = [None; 6];
        for (slot, (&c, factor)) in values.iter_mut().zip(cols.iter().zip(Factor::ALL)) {
            let cell = rec.get(c).unwrap_or_default();
            if !cell.is_empty() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| input(&format!("zone `{zone_id}`: bad {factor} value `{cell}`")))?;
                *slot = Some(v);
            }
        }
        rows.push(RawFactors { zone_id, values });
    }
    Ok(rows)
}

/// What to do with a zone lacking a factor value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub enum MissingPolicy {
    #[default]
    Strict,
    /// Substitute this normalized value and flag the zone.
    Impute(f64),
}

/// Normalized factors for one zone, ready to rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneFactors {
    pub zone_id: String,
    pub factors: FactorVector,
    pub imputed: bool,
}

/// Normalizes each factor column over the zones in `zone_ids` and resolves
/// missing values. Table rows for zones outside `zone_ids` are ignored.
pub fn prepare_factors(
    table: &[RawFactors],
    zone_ids: &[String],
    method: Normalization,
    missing: MissingPolicy,
) -> Result<Vec<ZoneFactors>, PrioritizeError> {
    if let MissingPolicy::Impute(v) = missing {
        if !(0.0..=1.0).contains(&v) {
            return Err(PrioritizeError::Input(format!("impute value {v} is outside [0, 1]")));
        }
    }
    let mut by_zone: HashMap<&str, &RawFactors> = HashMap::with_capacity(table.len());
    for row in table {
        if by_zone.insert(row.zone_id.as_str(), row).is_some() {
            return Err(PrioritizeError::DuplicateZone(row.zone_id.clone()));
        }
    }
    let ignored = table.len() - zone_ids.iter().filter(|z| by_zone.contains_key(z.as_str())).count();
    if ignored > 0 {
        log::warn!("{ignored} factor rows refer to zones not present and were ignored");
    }

    let mut normalized = vec![[0.0f64; 6]; zone_ids.len()];
    let mut imputed = vec![false; zone_ids.len()];
    for factor in Factor::ALL {
        let mut present_at = Vec::new();
        let mut raw = Vec::new();
        for (i, z) in zone_ids.iter().enumerate() {
            match by_zone.get(z.as_str()).and_then(|r| r.values[factor.index()]) {
                Some(v) => {
                    present_at.push(i);
                    raw.push(v);
                }
                None => match missing {
                    MissingPolicy::Strict => {
                        return Err(PrioritizeError::MissingFactor {
                            zone_id: z.clone(),
                            factor,
                        })
                    }
                    MissingPolicy::Impute(v) => {
                        normalized[i][factor.index()] = v;
                        imputed[i] = true;
                    }
                },
            }
        }
        if raw.is_empty() {
            continue;
        }
        for (&i, v) in present_at.iter().zip(normalize_column(&raw, method, factor)?) {
            normalized[i][factor.index()] = v;
        }
    }
    zone_ids
        .iter()
        .zip(normalized)
        .zip(imputed)
        .map(|((z, values), imputed)| {
            Ok(ZoneFactors {
                zone_id: z.clone(),
                factors: FactorVector::new(values)?,
                imputed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedZone {
    pub rank: usize,
    pub zone_id: String,
    pub score: f64,
    pub factors: FactorVector,
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorityRanking {
    pub entries: Vec<RankedZone>,
}

/// Orders zones by score descending; ties go to the higher customer impact,
/// then the smaller zone id.
pub fn rank_zones(zones: &[ZoneFactors], w: &WeightVector) -> PriorityRanking {
    let mut scored: Vec<(f64, &ZoneFactors)> = zones.iter().map(|z| (score_zone(&z.factors, w), z)).collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.total_cmp(sa)
            .then(
                b.factors
                    .get(Factor::CustomerImpact)
                    .total_cmp(&a.factors.get(Factor::CustomerImpact)),
            )
            .then_with(|| a.zone_id.cmp(&b.zone_id))
    });
    PriorityRanking {
        entries: scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, z))| RankedZone {
                rank: i + 1,
                zone_id: z.zone_id.clone(),
                score,
                factors: z.factors,
                imputed: z.imputed,
            })
            .collect(),
    }
}

impl PriorityRanking {
    /// `rank,zone_id,score,<six factors>`, plus a trailing `imputed` column
    /// when `flag_imputed` is set.
    pub fn write_csv(&self, path: &Path, flag_imputed: bool) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["rank", "zone_id", "score"];
        header.extend(Factor::ALL.iter().map(|f| f.column()));
        if flag_imputed {
            header.push("imputed");
        }
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.rank.to_string(), e.zone_id.clone(), e.score.to_string()];
            row.extend(e.factors.values().iter().map(|v| v.to_string()));
            if flag_imputed {
                row.push(e.imputed.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
