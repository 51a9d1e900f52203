//! Census CSV ingestion, indicator derivation, and artifact export
//! (risk CSV, reference JSON, GeoJSON property join, SVG histograms).

mod exports;
mod svg;

pub use exports::{
    export_geojson_join, export_reference_json, export_risk_csv, read_reference_json,
    JoinReport,
};
pub use svg::{export_histograms, export_similarity_histogram, HISTOGRAM_BINS};

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read '{path}': {source}")]
    Io { path: String, #[source] source: std::io::Error },
    #[error("csv error in '{path}': {source}")]
    Csv { path: String, #[source] source: csv::Error },
    #[error("missing column '{column}' (logical field '{logical}') in header of '{path}'")]
    MissingColumn { path: String, column: String, logical: String },
    #[error("non-numeric cell at row {row}, column '{column}': '{value}'")]
    BadCell { row: usize, column: String, value: String },
    #[error("no data rows in '{path}'")]
    EmptyFile { path: String },
    #[error("malformed GeoJSON in '{path}': {reason}")]
    BadGeoJson { path: String, reason: String },
    #[error("malformed reference JSON in '{path}': {reason}")]
    BadReferenceJson { path: String, reason: String },
    #[error("histogram input '{0}' has no values")]
    EmptyColumn(String),
    #[error(transparent)]
    Matrix(#[from] crate::symmat::MatrixError),
}

/// One census record for a zip-code locality. Counts are stored as f64 to
/// tolerate exports that carry decimal estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusRow {
    pub zip: String,
    pub total_population: f64,
    pub total_area: f64,
    pub housing_units: f64,
    pub black_pop: f64,
    pub hispanic_pop: f64,
    pub american_indian_pop: f64,
    pub native_hawaiian_pop: f64,
    pub over65_pop: f64,
    pub under18_pop: f64,
    pub rental_units: f64,
}

/// Logical field names expected by the parser, in CSV column order used
/// by the numeric fields of [`CensusRow`].
pub const LOGICAL_FIELDS: [&str; 11] = [
    "zip",
    "total_population",
    "total_area",
    "housing_units",
    "black_pop",
    "hispanic_pop",
    "american_indian_pop",
    "native_hawaiian_pop",
    "over65_pop",
    "under18_pop",
    "rental_units",
];

/// Maps logical field names to the column headers of a concrete file.
/// Unmapped fields default to the logical name itself. The area unit is
/// whatever the file uses; it must be uniform, and only ratios survive
/// preprocessing anyway.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    mapping: HashMap<String, String>,
}

impl CsvSchema {
    pub fn new(mapping: HashMap<String, String>) -> Self {
        CsvSchema { mapping }
    }

    pub fn header_for<'a>(&'a self, logical: &'a str) -> &'a str {
        self.mapping.get(logical).map(String::as_str).unwrap_or(logical)
    }
}

/// What to do with a missing (empty) numeric cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Drop the row and log its locality id.
    #[default]
    Reject,
    /// Substitute zero, the floor of every count column.
    ImputeZero,
}

#[derive(Debug, Clone)]
pub struct DroppedRow {
    pub zip: String,
    pub reason: String,
}

/// Parse outcome diagnostics: how many rows were seen, which were dropped
/// and why, and non-fatal data quirks worth surfacing.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped: Vec<DroppedRow>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn dropped_count(&self) -> usize {
        self.dropped.len()
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} rows read, {} dropped, {} warnings",
            self.rows_read,
            self.dropped.len(),
            self.warnings.len()
        )
    }
}

/// Reads census rows from a CSV file with a header row.
///
/// Rows violating the invariants needed downstream (total_area > 0,
/// total_population > 0, housing_units > 0, all counts non-negative) are
/// dropped with a logged reason; subgroup counts exceeding the total only
/// warn, since census extracts do contain such quirks. Missing cells
/// follow `policy`. Structural problems (unreadable file, missing column,
/// non-numeric cell) are hard errors.
pub fn parse_census_csv(
    path: &Path,
    schema: &CsvSchema,
    policy: MissingPolicy,
) -> Result<(Vec<CensusRow>, IngestReport), IngestError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::Csv { path: path_str.clone(), source: e },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv { path: path_str.clone(), source: e })?
        .clone();
    let mut indices = Vec::with_capacity(LOGICAL_FIELDS.len());
    for logical in LOGICAL_FIELDS {
        let header = schema.header_for(logical);
        let idx = headers.iter().position(|h| h == header).ok_or_else(|| {
            IngestError::MissingColumn {
                path: path_str.clone(),
                column: header.to_string(),
                logical: logical.to_string(),
            }
        })?;
        indices.push(idx);
    }

    let mut rows = Vec::new();
    let mut report = IngestReport::default();
    for (rec_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        report.rows_read += 1;
        // +2: header line plus one-based numbering
        let line = rec_idx + 2;
        let zip = record.get(indices[0]).unwrap_or("").to_string();

        let mut values = [0.0_f64; 10];
        let mut drop_reason: Option<String> = None;
        for (slot, field_idx) in (1..LOGICAL_FIELDS.len()).enumerate() {
            let logical = LOGICAL_FIELDS[field_idx];
            let raw = record.get(indices[field_idx]).unwrap_or("").trim();
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("null") {
                match policy {
                    MissingPolicy::Reject => {
                        drop_reason = Some(format!("missing value for '{logical}'"));
                        break;
                    }
                    MissingPolicy::ImputeZero => {
                        report
                            .warnings
                            .push(format!("zip {zip}: imputed 0 for missing '{logical}'"));
                        values[slot] = 0.0;
                        continue;
                    }
                }
            }
            let parsed: f64 = raw.parse().map_err(|_| IngestError::BadCell {
                row: line,
                column: schema.header_for(logical).to_string(),
                value: raw.to_string(),
            })?;
            if !parsed.is_finite() {
                return Err(IngestError::BadCell {
                    row: line,
                    column: schema.header_for(logical).to_string(),
                    value: raw.to_string(),
                });
            }
            values[slot] = parsed;
        }
        if let Some(reason) = drop_reason {
            log::warn!("dropping zip {zip}: {reason}");
            report.dropped.push(DroppedRow { zip, reason });
            continue;
        }

        let row = CensusRow {
            zip: zip.clone(),
            total_population: values[0],
            total_area: values[1],
            housing_units: values[2],
            black_pop: values[3],
            hispanic_pop: values[4],
            american_indian_pop: values[5],
            native_hawaiian_pop: values[6],
            over65_pop: values[7],
            under18_pop: values[8],
            rental_units: values[9],
        };

        if let Some(reason) = invariant_violation(&row) {
            log::warn!("dropping zip {zip}: {reason}");
            report.dropped.push(DroppedRow { zip, reason });
            continue;
        }
        for warning in row_warnings(&row) {
            log::warn!("zip {zip}: {warning}");
            report.warnings.push(format!("zip {zip}: {warning}"));
        }
        rows.push(row);
    }

    if report.rows_read == 0 {
        return Err(IngestError::EmptyFile { path: path_str });
    }
    Ok((rows, report))
}

fn invariant_violation(row: &CensusRow) -> Option<String> {
    if row.total_area <= 0.0 {
        return Some(format!("total_area {} must be positive", row.total_area));
    }
    if row.total_population <= 0.0 {
        return Some(format!(
            "total_population {} must be positive",
            row.total_population
        ));
    }
    if row.housing_units <= 0.0 {
        return Some(format!("housing_units {} must be positive", row.housing_units));
    }
    let counts = [
        ("black_pop", row.black_pop),
        ("hispanic_pop", row.hispanic_pop),
        ("american_indian_pop", row.american_indian_pop),
        ("native_hawaiian_pop", row.native_hawaiian_pop),
        ("over65_pop", row.over65_pop),
        ("under18_pop", row.under18_pop),
        ("rental_units", row.rental_units),
    ];
    counts
        .iter()
        .find(|(_, v)| *v < 0.0)
        .map(|(name, v)| format!("negative count {name} = {v}"))
}

fn row_warnings(row: &CensusRow) -> Vec<String> {
    let mut warnings = Vec::new();
    let subgroups = [
        ("black_pop", row.black_pop),
        ("hispanic_pop", row.hispanic_pop),
        ("american_indian_pop", row.american_indian_pop),
        ("native_hawaiian_pop", row.native_hawaiian_pop),
        ("over65_pop", row.over65_pop),
        ("under18_pop", row.under18_pop),
    ];
    for (name, v) in subgroups {
        if v > row.total_population {
            warnings.push(format!(
                "{name} {v} exceeds total_population {}",
                row.total_population
            ));
        }
    }
    if row.rental_units > row.housing_units {
        warnings.push(format!(
            "rental_units {} exceeds housing_units {}",
            row.rental_units, row.housing_units
        ));
    }
    warnings
}

/// Which risk element an indicator feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskElement {
    Exposure,
    Vulnerability,
}

/// Derived-ratio formulas over a census row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioFormula {
    /// total_population / total_area
    PopulationDensity,
    /// housing_units / total_area
    HousingDensity,
    /// housing_units / total_population (alternate housing reading)
    HousingPerCapita,
    /// (black + hispanic + american_indian + native_hawaiian) / total_population
    MinorityRate,
    /// (over65 + under18) / total_population
    AgeExtremesRate,
    /// rental_units / housing_units
    RentalRate,
}

impl RatioFormula {
    pub fn evaluate(&self, row: &CensusRow) -> f64 {
        match self {
            RatioFormula::PopulationDensity => row.total_population / row.total_area,
            RatioFormula::HousingDensity => row.housing_units / row.total_area,
            RatioFormula::HousingPerCapita => row.housing_units / row.total_population,
            RatioFormula::MinorityRate => {
                (row.black_pop
                    + row.hispanic_pop
                    + row.american_indian_pop
                    + row.native_hawaiian_pop)
                    / row.total_population
            }
            RatioFormula::AgeExtremesRate => {
                (row.over65_pop + row.under18_pop) / row.total_population
            }
            RatioFormula::RentalRate => row.rental_units / row.housing_units,
        }
    }
}

/// One derived indicator column: its name, the risk element it feeds, the
/// ratio formula, and the aggregation group it came from.
#[derive(Debug, Clone)]
pub struct IndicatorSpec {
    pub name: &'static str,
    pub indicator: RiskElement,
    pub formula: RatioFormula,
    pub aggregation_group: Option<&'static str>,
}

/// The default indicator set: two exposure densities and three
/// vulnerability rates (ethnic, age, rental aggregation groups).
pub fn default_indicators(housing_per_capita: bool) -> Vec<IndicatorSpec> {
    vec![
        IndicatorSpec {
            name: "population_density",
            indicator: RiskElement::Exposure,
            formula: RatioFormula::PopulationDensity,
            aggregation_group: None,
        },
        IndicatorSpec {
            name: "housing_density",
            indicator: RiskElement::Exposure,
            formula: if housing_per_capita {
                RatioFormula::HousingPerCapita
            } else {
                RatioFormula::HousingDensity
            },
            aggregation_group: None,
        },
        IndicatorSpec {
            name: "minority_rate",
            indicator: RiskElement::Vulnerability,
            formula: RatioFormula::MinorityRate,
            aggregation_group: Some("race_ethnicity"),
        },
        IndicatorSpec {
            name: "age_extremes_rate",
            indicator: RiskElement::Vulnerability,
            formula: RatioFormula::AgeExtremesRate,
            aggregation_group: Some("age_wellbeing"),
        },
        IndicatorSpec {
            name: "rental_rate",
            indicator: RiskElement::Vulnerability,
            formula: RatioFormula::RentalRate,
            aggregation_group: Some("economic_status"),
        },
    ]
}

/// (population density, housing density); requires total_area > 0.
pub fn derive_exposure(row: &CensusRow) -> [f64; 2] {
    [
        RatioFormula::PopulationDensity.evaluate(row),
        RatioFormula::HousingDensity.evaluate(row),
    ]
}

/// (minority rate, age-extremes rate, rental rate); requires
/// total_population > 0 and housing_units > 0. Ratios above 1 warn.
pub fn derive_vulnerability(row: &CensusRow) -> [f64; 3] {
    let ratios = [
        RatioFormula::MinorityRate.evaluate(row),
        RatioFormula::AgeExtremesRate.evaluate(row),
        RatioFormula::RentalRate.evaluate(row),
    ];
    for (i, r) in ratios.iter().enumerate() {
        if *r > 1.0 {
            log::warn!(
                "zip {}: vulnerability ratio {} = {r:.4} exceeds 1",
                row.zip,
                ["minority_rate", "age_extremes_rate", "rental_rate"][i]
            );
        }
    }
    ratios
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "zip,total_population,total_area,housing_units,black_pop,hispanic_pop,american_indian_pop,native_hawaiian_pop,over65_pop,under18_pop,rental_units";

    #[test]
    fn parses_well_formed_file() {
        let f = write_csv(&format!(
            "{HEADER}\n\
             21001,1000,10,400,100,50,5,2,150,220,120\n\
             21002,2000,5,800,400,100,10,4,300,500,300\n\
             21003,500,20,200,10,5,1,0,80,90,40\n"
        ));
        let (rows, report) =
            parse_census_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.dropped_count(), 0);
        assert_eq!(rows[0].zip, "21001");
        assert_eq!(rows[1].housing_units, 800.0);
    }

    #[test]
    fn drops_zero_area_row_with_warning() {
        let f = write_csv(&format!(
            "{HEADER}\n\
             21001,1000,0,400,0,0,0,0,0,0,0\n\
             21002,1000,10,400,0,0,0,0,0,0,0\n"
        ));
        let (rows, report) =
            parse_census_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(report.dropped_count(), 1);
        assert_eq!(report.dropped[0].zip, "21001");
        assert!(report.dropped[0].reason.contains("total_area"));
    }

    #[test]
    fn missing_header_names_the_column() {
        let f = write_csv(
            "zip,total_population,total_area\n21001,1000,10\n",
        );
        let err =
            parse_census_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap_err();
        match err {
            IngestError::MissingColumn { column, .. } => assert_eq!(column, "housing_units"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_coordinates() {
        let f = write_csv(&format!(
            "{HEADER}\n21001,1000,ten,400,0,0,0,0,0,0,0\n"
        ));
        let err =
            parse_census_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap_err();
        match err {
            IngestError::BadCell { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "total_area");
                assert_eq!(value, "ten");
            }
            other => panic!("expected BadCell, got {other:?}"),
        }
    }

    #[test]
    fn missing_cell_policies() {
        let content = format!("{HEADER}\n21001,1000,10,400,,0,0,0,0,0,0\n21002,1,1,1,0,0,0,0,0,0,0\n");
        let f = write_csv(&content);
        let (rows, report) =
            parse_census_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(report.dropped[0].zip, "21001");

        let (rows, report) =
            parse_census_csv(f.path(), &CsvSchema::default(), MissingPolicy::ImputeZero).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].black_pop, 0.0);
        assert!(report.warnings.iter().any(|w| w.contains("imputed")));
    }

    #[test]
    fn schema_maps_logical_names() {
        let f = write_csv(
            "ZCTA,POP,AREA_KM2,HOUSES,B,H,AI,NH,O65,U18,RENT\n\
             21001,1000,10,400,1,2,3,4,5,6,7\n",
        );
        let mapping: HashMap<String, String> = LOGICAL_FIELDS
            .iter()
            .zip([
                "ZCTA", "POP", "AREA_KM2", "HOUSES", "B", "H", "AI", "NH", "O65", "U18", "RENT",
            ])
            .map(|(l, h)| (l.to_string(), h.to_string()))
            .collect();
        let (rows, _) =
            parse_census_csv(f.path(), &CsvSchema::new(mapping), MissingPolicy::Reject).unwrap();
        assert_eq!(rows[0].rental_units, 7.0);
    }

    #[test]
    fn subgroup_exceeding_total_warns_but_keeps_row() {
        let f = write_csv(&format!(
            "{HEADER}\n21001,100,10,40,150,0,0,0,0,0,0\n"
        ));
        let (rows, report) =
            parse_census_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(report.warnings.iter().any(|w| w.contains("black_pop")));
    }

    fn sample_row() -> CensusRow {
        CensusRow {
            zip: "21001".into(),
            total_population: 1000.0,
            total_area: 10.0,
            housing_units: 400.0,
            black_pop: 100.0,
            hispanic_pop: 50.0,
            american_indian_pop: 5.0,
            native_hawaiian_pop: 2.0,
            over65_pop: 150.0,
            under18_pop: 220.0,
            rental_units: 120.0,
        }
    }

    #[test]
    fn exposure_arithmetic() {
        let e = derive_exposure(&sample_row());
        assert_eq!(e, [100.0, 40.0]);
        let mut zero_pop = sample_row();
        zero_pop.total_population = 0.0;
        // derivation itself is plain arithmetic; the parser is what drops
        // non-positive populations
        assert_eq!(derive_exposure(&zero_pop)[0], 0.0);
    }

    #[test]
    fn vulnerability_arithmetic() {
        let v = derive_vulnerability(&sample_row());
        assert!((v[0] - 0.157).abs() < 1e-12);
        assert!((v[1] - 0.37).abs() < 1e-12);
        assert!((v[2] - 0.3).abs() < 1e-12);

        let mut no_minority = sample_row();
        no_minority.black_pop = 0.0;
        no_minority.hispanic_pop = 0.0;
        no_minority.american_indian_pop = 0.0;
        no_minority.native_hawaiian_pop = 0.0;
        assert_eq!(derive_vulnerability(&no_minority)[0], 0.0);

        let mut all_rental = sample_row();
        all_rental.rental_units = all_rental.housing_units;
        assert_eq!(derive_vulnerability(&all_rental)[2], 1.0);
    }

    #[test]
    fn age_ratio_above_one_is_kept_as_computed() {
        // Census quirks can push subgroup sums past the total; the ratio is
        // reported as-is (with a logged warning) rather than clamped.
        let mut row = sample_row();
        row.over65_pop = row.total_population;
        row.under18_pop = 0.3 * row.total_population;
        let v = derive_vulnerability(&row);
        assert!((v[1] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn derivation_is_deterministic() {
        let row = sample_row();
        assert_eq!(derive_exposure(&row), derive_exposure(&row));
        assert_eq!(derive_vulnerability(&row), derive_vulnerability(&row));
    }

    #[test]
    fn default_indicator_set_shape() {
        let specs = default_indicators(false);
        assert_eq!(
            specs
                .iter()
                .filter(|s| s.indicator == RiskElement::Exposure)
                .count(),
            2
        );
        assert_eq!(
            specs
                .iter()
                .filter(|s| s.indicator == RiskElement::Vulnerability)
                .count(),
            3
        );
        let alt = default_indicators(true);
        assert_eq!(alt[1].formula, RatioFormula::HousingPerCapita);
    }
}
