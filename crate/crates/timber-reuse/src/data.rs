//! Flexural-test records, per-orientation baselines, the residual-performance
//! metric `R`, standardized feature matrices, and descriptive statistics.
//!
//! `R` is a weighted retention score: a specimen that matches its unexposed
//! control baseline in both flexural modulus and maximum bending stress scores
//! exactly 1. Baselines are the group-0 (control) means computed separately
//! per grain orientation, so long and cross members are each judged against
//! their own reference.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grain orientation of the bending face layer relative to the load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Long,
    Cross,
}

impl Orientation {
    pub fn parse(token: &str) -> Option<Orientation> {
        match token.trim().to_ascii_lowercase().as_str() {
            "long" => Some(Orientation::Long),
            "cross" => Some(Orientation::Cross),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Orientation::Long => "long",
            Orientation::Cross => "cross",
        }
    }

    /// Raw model encoding: long = 0, cross = 1.
    pub fn code(&self) -> f64 {
        match self {
            Orientation::Long => 0.0,
            Orientation::Cross => 1.0,
        }
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tested member. `group` is the wet-cycle count (0 = control, 1, 2);
/// the trailing fields are optional field-measurable features.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecimenRecord {
    pub id: String,
    pub group: u8,
    pub orientation: Orientation,
    /// Flexural modulus, GPa.
    pub modulus: f64,
    /// Maximum bending stress at failure, MPa.
    pub max_stress: f64,
    /// kg/m3
    pub density: Option<f64>,
    /// percent
    pub moisture: Option<f64>,
    /// mm
    pub size: Option<f64>,
    /// dimensionless surface-hardness index
    pub hardness: Option<f64>,
}

/// Control-group means for one orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationBaseline {
    /// Mean control modulus, GPa.
    pub modulus: f64,
    /// Mean control max stress, MPa.
    pub max_stress: f64,
    pub n_controls: usize,
}

/// Per-orientation baselines; an entry exists for every orientation present
/// in the dataset it was built from.
#[derive(Debug, Clone, Default)]
pub struct BaselineTable {
    long: Option<OrientationBaseline>,
    cross: Option<OrientationBaseline>,
}

impl BaselineTable {
    pub fn get(&self, orientation: Orientation) -> Result<&OrientationBaseline> {
        let slot = match orientation {
            Orientation::Long => &self.long,
            Orientation::Cross => &self.cross,
        };
        slot.as_ref()
            .ok_or_else(|| Error::MissingBaseline(orientation.as_str().to_string()))
    }

    fn set(&mut self, orientation: Orientation, baseline: OrientationBaseline) {
        match orientation {
            Orientation::Long => self.long = Some(baseline),
            Orientation::Cross => self.cross = Some(baseline),
        }
    }
}

/// Stiffness/strength mixing weights for the residual-performance metric.
/// Must be non-negative and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    w_e: f64,
    w_sigma: f64,
}

impl MetricWeights {
    pub fn new(w_e: f64, w_sigma: f64) -> Result<MetricWeights> {
        if !(w_e >= 0.0 && w_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "metric weights must be non-negative, got ({w_e}, {w_sigma})"
            )));
        }
        if (w_e + w_sigma - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "metric weights must sum to 1, got {w_e} + {w_sigma} = {}",
                w_e + w_sigma
            )));
        }
        Ok(MetricWeights { w_e, w_sigma })
    }

    pub fn w_e(&self) -> f64 {
        self.w_e
    }

    pub fn w_sigma(&self) -> f64 {
        self.w_sigma
    }
}

impl Default for MetricWeights {
    /// Stiffness-dominant weighting: 0.8 modulus, 0.2 strength.
    fn default() -> Self {
        MetricWeights {
            w_e: 0.8,
            w_sigma: 0.2,
        }
    }
}

/// Canonical feature names accepted by [`build_features`].
pub const FEATURE_NAMES: [&str; 6] = [
    "group",
    "orientation",
    "density",
    "moisture",
    "size",
    "hardness",
];

/// Default predictor selection: the two categorical features.
pub fn default_features() -> Vec<String> {
    vec!["group".to_string(), "orientation".to_string()]
}

/// Standardization metadata kept for prediction-time reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub column_names: Vec<String>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
}

impl FeatureMeta {
    /// Standardize one raw row with the stored means/sds.
    pub fn standardize_row(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.column_names.len() {
            return Err(Error::DimensionMismatch {
                what: "feature row",
                expected: self.column_names.len(),
                actual: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(self.column_means.iter().zip(&self.column_sds))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }
}

/// N x J standardized predictor matrix. Columns are centered and scaled with
/// the population (N-denominator) standard deviation, so a balanced binary
/// column maps to exactly +/-1.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub x: Array2<f64>,
    pub column_names: Vec<String>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn meta(&self) -> FeatureMeta {
        FeatureMeta {
            column_names: self.column_names.clone(),
            column_means: self.column_means.clone(),
            column_sds: self.column_sds.clone(),
        }
    }
}

const REQUIRED_COLUMNS: [&str; 5] = [
    "id",
    "group",
    "orientation",
    "modulus_gpa",
    "max_stress_mpa",
];
const OPTIONAL_COLUMNS: [&str; 4] = ["density_kg_m3", "moisture_pct", "size_mm", "hardness"];

/// Load specimen records from a CSV file.
///
/// Header row is required; optional columns may be present in any order and
/// empty cells leave the field unset. Row order is preserved.
pub fn load_specimens<P: AsRef<Path>>(path: P) -> Result<Vec<SpecimenRecord>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::InputFile(path.display().to_string()));
    }
    let file = std::fs::File::open(path)?;
    read_specimens(file)
}

/// Parse specimen records from any CSV reader. See [`load_specimens`].
pub fn read_specimens<R: Read>(reader: R) -> Result<Vec<SpecimenRecord>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Vec<String> = csv_reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    for required in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::MissingColumn(required.to_string()));
        }
    }
    for header in &headers {
        if !REQUIRED_COLUMNS.contains(&header.as_str())
            && !OPTIONAL_COLUMNS.contains(&header.as_str())
        {
            return Err(Error::UnknownColumn(header.clone()));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let idx_id = col("id").unwrap();
    let idx_group = col("group").unwrap();
    let idx_orientation = col("orientation").unwrap();
    let idx_modulus = col("modulus_gpa").unwrap();
    let idx_stress = col("max_stress_mpa").unwrap();
    let idx_density = col("density_kg_m3");
    let idx_moisture = col("moisture_pct");
    let idx_size = col("size_mm");
    let idx_hardness = col("hardness");

    let mut records = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row = row?;
        let line = row
            .position()
            .map(|p| p.line())
            .unwrap_or((i + 2) as u64);
        let invalid = |message: String| Error::InvalidRow { row: line, message };

        let field = |idx: usize| row.get(idx).unwrap_or("").trim();
        let id = field(idx_id).to_string();
        if id.is_empty() {
            return Err(invalid("empty id".to_string()));
        }

        let group_raw = field(idx_group);
        let group: i64 = group_raw
            .parse()
            .map_err(|_| invalid(format!("group `{group_raw}` is not an integer")))?;
        if !(0..=2).contains(&group) {
            return Err(invalid(format!(
                "group `{group}` outside the wet-cycle range {{0, 1, 2}}"
            )));
        }

        let orientation_raw = field(idx_orientation);
        let orientation = Orientation::parse(orientation_raw).ok_or_else(|| {
            invalid(format!(
                "orientation `{orientation_raw}` is not one of `long`/`cross`"
            ))
        })?;

        let parse_f64 = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx);
            raw.parse::<f64>()
                .map_err(|_| invalid(format!("{name} `{raw}` is not a number")))
        };
        let modulus = parse_f64(idx_modulus, "modulus_gpa")?;
        let max_stress = parse_f64(idx_stress, "max_stress_mpa")?;
        if !(modulus > 0.0) {
            return Err(invalid(format!("modulus_gpa must be positive, got {modulus}")));
        }
        if !(max_stress > 0.0) {
            return Err(invalid(format!(
                "max_stress_mpa must be positive, got {max_stress}"
            )));
        }

        let parse_optional = |idx: Option<usize>, name: &str| -> Result<Option<f64>> {
            match idx {
                None => Ok(None),
                Some(idx) => {
                    let raw = field(idx);
                    if raw.is_empty() {
                        Ok(None)
                    } else {
                        raw.parse::<f64>()
                            .map(Some)
                            .map_err(|_| invalid(format!("{name} `{raw}` is not a number")))
                    }
                }
            }
        };

        records.push(SpecimenRecord {
            id,
            group: group as u8,
            orientation,
            modulus,
            max_stress,
            density: parse_optional(idx_density, "density_kg_m3")?,
            moisture: parse_optional(idx_moisture, "moisture_pct")?,
            size: parse_optional(idx_size, "size_mm")?,
            hardness: parse_optional(idx_hardness, "hardness")?,
        });
    }
    Ok(records)
}

/// Per-orientation control means over group-0 records.
///
/// Errors if an orientation appears in the data without any control member.
pub fn compute_baselines(records: &[SpecimenRecord]) -> Result<BaselineTable> {
    let mut table = BaselineTable::default();
    for orientation in [Orientation::Long, Orientation::Cross] {
        let present = records.iter().any(|r| r.orientation == orientation);
        if !present {
            continue;
        }
        let controls: Vec<&SpecimenRecord> = records
            .iter()
            .filter(|r| r.orientation == orientation && r.group == 0)
            .collect();
        if controls.is_empty() {
            return Err(Error::MissingBaseline(orientation.as_str().to_string()));
        }
        let n = controls.len() as f64;
        table.set(
            orientation,
            OrientationBaseline {
                modulus: controls.iter().map(|r| r.modulus).sum::<f64>() / n,
                max_stress: controls.iter().map(|r| r.max_stress).sum::<f64>() / n,
                n_controls: controls.len(),
            },
        );
    }
    Ok(table)
}

/// Residual performance of one specimen against its orientation baseline:
/// `R = w_E * (E / E_0) + w_sigma * (sigma / sigma_0)`.
pub fn residual_performance(
    record: &SpecimenRecord,
    baselines: &BaselineTable,
    weights: &MetricWeights,
) -> Result<f64> {
    let baseline = baselines.get(record.orientation)?;
    Ok(weights.w_e * (record.modulus / baseline.modulus)
        + weights.w_sigma * (record.max_stress / baseline.max_stress))
}

/// Residual performance for every record, in input order.
pub fn residual_performance_values(
    records: &[SpecimenRecord],
    baselines: &BaselineTable,
    weights: &MetricWeights,
) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| residual_performance(r, baselines, weights))
        .collect()
}

fn raw_feature(record: &SpecimenRecord, name: &str) -> Result<f64> {
    let missing = || Error::MissingFeature {
        id: record.id.clone(),
        feature: name.to_string(),
    };
    match name {
        "group" => Ok(record.group as f64),
        "orientation" => Ok(record.orientation.code()),
        "density" => record.density.ok_or_else(missing),
        "moisture" => record.moisture.ok_or_else(missing),
        "size" => record.size.ok_or_else(missing),
        "hardness" => record.hardness.ok_or_else(missing),
        other => Err(Error::UnknownFeature(other.to_string())),
    }
}

/// Build the standardized predictor matrix for the selected features.
///
/// Raw encodings: group as 0/1/2, orientation as long=0/cross=1, optional
/// features as given. Columns are centered and scaled by the population
/// standard deviation; raw means/sds are stored for prediction-time reuse.
pub fn build_features(records: &[SpecimenRecord], selected: &[String]) -> Result<FeatureMatrix> {
    if selected.is_empty() {
        return Err(Error::Config("feature selection is empty".to_string()));
    }
    for name in selected {
        if !FEATURE_NAMES.contains(&name.as_str()) {
            return Err(Error::UnknownFeature(name.clone()));
        }
    }
    let n = records.len();
    let j = selected.len();
    let mut x = Array2::<f64>::zeros((n, j));
    for (i, record) in records.iter().enumerate() {
        for (col, name) in selected.iter().enumerate() {
            x[(i, col)] = raw_feature(record, name)?;
        }
    }
    let mut means = Vec::with_capacity(j);
    let mut sds = Vec::with_capacity(j);
    for (col, name) in selected.iter().enumerate() {
        let column = x.column(col);
        let mean = column.sum() / n as f64;
        let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd <= 0.0 {
            return Err(Error::DegenerateFeature(name.clone()));
        }
        means.push(mean);
        sds.push(sd);
    }
    for i in 0..n {
        for col in 0..j {
            x[(i, col)] = (x[(i, col)] - means[col]) / sds[col];
        }
    }
    Ok(FeatureMatrix {
        x,
        column_names: selected.to_vec(),
        column_means: means,
        column_sds: sds,
    })
}

/// One row of the descriptive-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    /// Sample (N-1) standard deviation; 0 for single-member groups.
    pub sd: f64,
    /// Set when `n == 1` and the sd is therefore reported as 0.
    pub degenerate: bool,
}

/// Sample mean and sample (N-1) standard deviation per named group.
///
/// Single-member groups report `sd = 0` with the degenerate flag set instead
/// of erroring, so descriptive reporting stays total.
pub fn descriptive_stats(groups: &[(String, Vec<f64>)]) -> Result<Vec<GroupStats>> {
    let mut rows = Vec::with_capacity(groups.len());
    for (name, values) in groups {
        if values.is_empty() {
            return Err(Error::Config(format!("group `{name}` has no members")));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let (sd, degenerate) = if n == 1 {
            (0.0, true)
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            (var.sqrt(), false)
        };
        rows.push(GroupStats {
            group: name.clone(),
            n,
            mean,
            sd,
            degenerate,
        });
    }
    Ok(rows)
}

/// Conventional display names for the wet-cycle groups.
pub fn group_name(group: u8) -> &'static str {
    match group {
        0 => "Original",
        1 => "Set1",
        _ => "Set2",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(id: &str, group: u8, orientation: Orientation, e: f64, s: f64) -> SpecimenRecord {
        SpecimenRecord {
            id: id.to_string(),
            group,
            orientation,
            modulus: e,
            max_stress: s,
            density: None,
            moisture: None,
            size: None,
            hardness: None,
        }
    }

    #[test]
    fn loads_minimal_csv() {
        let csv = "id,group,orientation,modulus_gpa,max_stress_mpa\nS01,0,long,10.59,113.31\n";
        let records = read_specimens(csv.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.id, "S01");
        assert_eq!(r.group, 0);
        assert_eq!(r.orientation, Orientation::Long);
        assert_relative_eq!(r.modulus, 10.59);
        assert_relative_eq!(r.max_stress, 113.31);
        assert!(r.density.is_none());
    }

    #[test]
    fn header_only_gives_empty_list() {
        let csv = "id,group,orientation,modulus_gpa,max_stress_mpa\n";
        assert!(read_specimens(csv.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn orientation_is_case_insensitive() {
        let csv = "id,group,orientation,modulus_gpa,max_stress_mpa\nS01,0,CROSS,1.98,37.38\n";
        let records = read_specimens(csv.as_bytes()).unwrap();
        assert_eq!(records[0].orientation, Orientation::Cross);
    }

    #[test]
    fn group_outside_range_names_row() {
        let csv = "id,group,orientation,modulus_gpa,max_stress_mpa\nS01,0,long,10.0,100.0\nS02,3,long,10.0,100.0\n";
        let err = read_specimens(csv.as_bytes()).unwrap_err();
        match err {
            Error::InvalidRow { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains('3'), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_required_column_is_schema_error() {
        let csv = "id,group,orientation,modulus_gpa\nS01,0,long,10.0\n";
        match read_specimens(csv.as_bytes()).unwrap_err() {
            Error::MissingColumn(col) => assert_eq!(col, "max_stress_mpa"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unknown_column_is_rejected() {
        let csv = "id,group,orientation,modulus_gpa,max_stress_mpa,color\nS01,0,long,10.0,100.0,red\n";
        assert!(matches!(
            read_specimens(csv.as_bytes()).unwrap_err(),
            Error::UnknownColumn(c) if c == "color"
        ));
    }

    #[test]
    fn non_positive_modulus_rejected() {
        let csv = "id,group,orientation,modulus_gpa,max_stress_mpa\nS01,0,long,-1.0,100.0\n";
        assert!(matches!(
            read_specimens(csv.as_bytes()).unwrap_err(),
            Error::InvalidRow { .. }
        ));
    }

    #[test]
    fn optional_columns_parse_and_default() {
        let csv = "id,group,orientation,modulus_gpa,max_stress_mpa,density_kg_m3,moisture_pct,size_mm,hardness\n\
                   S01,1,long,9.5,105.0,480.5,12.2,20.1,55.0\n\
                   S02,1,cross,1.8,35.0,,,,\n";
        let records = read_specimens(csv.as_bytes()).unwrap();
        assert_relative_eq!(records[0].density.unwrap(), 480.5);
        assert!(records[1].density.is_none());
        assert!(records[1].hardness.is_none());
    }

    #[test]
    fn baseline_single_control() {
        let records = vec![record("a", 0, Orientation::Long, 10.59, 113.31)];
        let table = compute_baselines(&records).unwrap();
        let b = table.get(Orientation::Long).unwrap();
        assert_relative_eq!(b.modulus, 10.59);
        assert_relative_eq!(b.max_stress, 113.31);
        assert_eq!(b.n_controls, 1);
    }

    #[test]
    fn baseline_is_arithmetic_mean() {
        let records = vec![
            record("a", 0, Orientation::Long, 10.0, 100.0),
            record("b", 0, Orientation::Long, 11.18, 120.0),
        ];
        let table = compute_baselines(&records).unwrap();
        assert_relative_eq!(table.get(Orientation::Long).unwrap().modulus, 10.59);
    }

    #[test]
    fn baseline_permutation_invariant() {
        let mut records = vec![
            record("a", 0, Orientation::Long, 10.0, 100.0),
            record("b", 0, Orientation::Long, 12.0, 110.0),
            record("c", 2, Orientation::Long, 8.0, 90.0),
        ];
        let table1 = compute_baselines(&records).unwrap();
        records.reverse();
        let table2 = compute_baselines(&records).unwrap();
        assert_eq!(
            table1.get(Orientation::Long).unwrap(),
            table2.get(Orientation::Long).unwrap()
        );
    }

    #[test]
    fn missing_cross_controls_errors() {
        let records = vec![
            record("a", 0, Orientation::Long, 10.0, 100.0),
            record("b", 1, Orientation::Cross, 1.8, 35.0),
        ];
        assert!(matches!(
            compute_baselines(&records).unwrap_err(),
            Error::MissingBaseline(o) if o == "cross"
        ));
    }

    #[test]
    fn residual_matches_reported_two_cycle_values() {
        let records = vec![
            record("ctl-long", 0, Orientation::Long, 10.59, 113.31),
            record("ctl-cross", 0, Orientation::Cross, 1.98, 37.38),
        ];
        let baselines = compute_baselines(&records).unwrap();
        let weights = MetricWeights::default();

        let long2 = record("long2", 2, Orientation::Long, 8.36, 95.01);
        let r_long = residual_performance(&long2, &baselines, &weights).unwrap();
        assert!((r_long - 0.799).abs() < 1e-3, "R = {r_long}");

        let cross2 = record("cross2", 2, Orientation::Cross, 1.58, 34.38);
        let r_cross = residual_performance(&cross2, &baselines, &weights).unwrap();
        assert!((r_cross - 0.822).abs() < 1e-3, "R = {r_cross}");
    }

    #[test]
    fn control_at_baseline_is_exactly_one() {
        let records = vec![record("ctl", 0, Orientation::Long, 10.59, 113.31)];
        let baselines = compute_baselines(&records).unwrap();
        let r = residual_performance(&records[0], &baselines, &MetricWeights::default()).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn pure_weights_reduce_to_single_ratio() {
        let records = vec![record("ctl", 0, Orientation::Long, 10.0, 100.0)];
        let baselines = compute_baselines(&records).unwrap();
        let probe = record("p", 2, Orientation::Long, 8.0, 50.0);
        let stiff = MetricWeights::new(1.0, 0.0).unwrap();
        let strength = MetricWeights::new(0.0, 1.0).unwrap();
        assert_relative_eq!(
            residual_performance(&probe, &baselines, &stiff).unwrap(),
            0.8
        );
        assert_relative_eq!(
            residual_performance(&probe, &baselines, &strength).unwrap(),
            0.5
        );
    }

    #[test]
    fn residual_is_linear_in_inputs() {
        let records = vec![record("ctl", 0, Orientation::Long, 10.0, 100.0)];
        let baselines = compute_baselines(&records).unwrap();
        let weights = MetricWeights::default();
        let base = record("p", 1, Orientation::Long, 9.0, 80.0);
        let scaled = record("p", 1, Orientation::Long, 9.0 * 1.5, 80.0 * 2.0);
        let expected = weights.w_e() * 1.5 * (9.0 / 10.0) + weights.w_sigma() * 2.0 * (80.0 / 100.0);
        assert_relative_eq!(
            residual_performance(&scaled, &baselines, &weights).unwrap(),
            expected,
            epsilon = 1e-12
        );
        let _ = base;
    }

    #[test]
    fn balanced_binary_column_standardizes_to_unit() {
        let records = vec![
            record("a", 0, Orientation::Long, 10.0, 100.0),
            record("b", 2, Orientation::Cross, 8.0, 90.0),
        ];
        let fm = build_features(&records, &["group".into(), "orientation".into()]).unwrap();
        assert_relative_eq!(fm.x[(0, 0)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(fm.x[(1, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(fm.x[(0, 1)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(fm.x[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn columns_are_centered_and_unit_scale() {
        let mut records = Vec::new();
        for i in 0..9 {
            let mut r = record(
                &format!("s{i}"),
                (i % 3) as u8,
                if i % 2 == 0 {
                    Orientation::Long
                } else {
                    Orientation::Cross
                },
                10.0 + i as f64,
                100.0 + i as f64,
            );
            r.density = Some(400.0 + 13.7 * i as f64);
            r.moisture = Some(10.0 + 0.3 * (i * i) as f64);
            r.size = Some(18.0 + 0.5 * i as f64);
            records.push(r);
        }
        let selected: Vec<String> = ["group", "orientation", "density", "moisture", "size"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let fm = build_features(&records, &selected).unwrap();
        assert_eq!(fm.n_cols(), 5);
        for col in 0..fm.n_cols() {
            let column = fm.x.column(col);
            let mean = column.sum() / column.len() as f64;
            let sd =
                (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / column.len() as f64)
                    .sqrt();
            assert!(mean.abs() < 1e-10, "col {col} mean {mean}");
            assert!((sd - 1.0).abs() < 1e-10, "col {col} sd {sd}");
        }
    }

    #[test]
    fn constant_column_is_degenerate() {
        let records = vec![
            record("a", 0, Orientation::Cross, 10.0, 100.0),
            record("b", 1, Orientation::Cross, 9.0, 95.0),
        ];
        assert!(matches!(
            build_features(&records, &["group".into(), "orientation".into()]).unwrap_err(),
            Error::DegenerateFeature(c) if c == "orientation"
        ));
    }

    #[test]
    fn missing_feature_names_record() {
        let records = vec![record("s7", 0, Orientation::Long, 10.0, 100.0)];
        assert!(matches!(
            build_features(&records, &["density".into()]).unwrap_err(),
            Error::MissingFeature { id, feature } if id == "s7" && feature == "density"
        ));
    }

    #[test]
    fn destandardization_recovers_raw_columns() {
        let records = vec![
            record("a", 0, Orientation::Long, 10.0, 100.0),
            record("b", 1, Orientation::Cross, 9.0, 95.0),
            record("c", 2, Orientation::Long, 8.0, 92.0),
            record("d", 2, Orientation::Cross, 7.5, 85.0),
        ];
        let fm = build_features(&records, &["group".into(), "orientation".into()]).unwrap();
        for (i, r) in records.iter().enumerate() {
            let raw_group = fm.x[(i, 0)] * fm.column_sds[0] + fm.column_means[0];
            let rel = (raw_group - r.group as f64).abs() / (r.group as f64).max(1.0);
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn descriptive_stats_hand_values() {
        let groups = vec![
            ("Original".to_string(), vec![0.9]),
            ("Set1".to_string(), vec![0.7, 0.9]),
        ];
        let rows = descriptive_stats(&groups).unwrap();
        assert_eq!(rows[0].n, 1);
        assert_relative_eq!(rows[0].mean, 0.9);
        assert_eq!(rows[0].sd, 0.0);
        assert!(rows[0].degenerate);
        assert_relative_eq!(rows[1].mean, 0.8);
        assert!((rows[1].sd - 0.1414).abs() < 1e-4);
        assert!(!rows[1].degenerate);
    }

    #[test]
    fn descriptive_stats_reproduce_target_means() {
        let groups = vec![
            ("Original".to_string(), vec![1.0, 1.0]),
            ("Set1".to_string(), vec![0.952, 0.952]),
            ("Set2".to_string(), vec![0.748, 0.748]),
        ];
        let rows = descriptive_stats(&groups).unwrap();
        assert_eq!(rows[0].mean, 1.0);
        assert_eq!(rows[1].mean, 0.952);
        assert_eq!(rows[2].mean, 0.748);
    }

    #[test]
    fn standardize_row_roundtrip() {
        let meta = FeatureMeta {
            column_names: vec!["group".into(), "orientation".into()],
            column_means: vec![1.0, 0.5],
            column_sds: vec![0.8165, 0.5],
        };
        let z = meta.standardize_row(&[2.0, 1.0]).unwrap();
        assert_relative_eq!(z[0], (2.0 - 1.0) / 0.8165);
        assert_relative_eq!(z[1], 1.0);
    }
}
