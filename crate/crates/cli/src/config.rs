//! Pipeline configuration: JSON config file with defaults, flag overrides
//! (flags win), and validation.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use spectral_risk::ingest::MissingPolicy;
use spectral_risk::preprocess::Polarity;
use spectral_risk::reference::TailRule;

/// Raw config file shape. Every key is optional; unknown keys are
/// rejected by name.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// logical field name → CSV column header
    pub schema: Option<HashMap<String, String>>,
    /// indicator column name → "higher" | "lower"
    pub polarity: Option<HashMap<String, String>>,
    pub tail_exposure: Option<String>,
    pub tail_vulnerability: Option<String>,
    pub gap_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub verify_fidelity: Option<bool>,
    pub run_oracle: Option<bool>,
    pub emit_histograms: Option<bool>,
    pub geojson: Option<PathBuf>,
    pub geojson_key: Option<String>,
    /// "reject" | "zero"
    pub impute: Option<String>,
    /// "per_area" | "per_capita"
    pub housing_density: Option<String>,
    pub quiet: Option<bool>,
}

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config '{}'", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("invalid config '{}'", path.display()))
    }
}

/// Command-line overrides; `None` means "not given on the command line".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub tail_exposure: Option<String>,
    pub tail_vulnerability: Option<String>,
    pub gap_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub verify_fidelity: bool,
    pub run_oracle: bool,
    pub emit_histograms: bool,
    pub geojson: Option<PathBuf>,
    pub impute: Option<String>,
    pub quiet: bool,
}

/// Fully-resolved pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub schema: HashMap<String, String>,
    pub polarity: HashMap<String, Polarity>,
    pub tail_exposure: TailRule,
    pub tail_vulnerability: TailRule,
    pub gap_tol: f64,
    pub max_iter: usize,
    pub verify_fidelity: bool,
    pub run_oracle: bool,
    pub emit_histograms: bool,
    pub geojson: Option<PathBuf>,
    pub geojson_key: String,
    pub impute: MissingPolicy,
    pub housing_per_capita: bool,
    pub quiet: bool,
}

fn parse_tail_rule(value: &str) -> Result<TailRule> {
    match value {
        "mean" => Ok(TailRule::Mean),
        "mean_std" => Ok(TailRule::MeanPlusStd),
        other => bail!("tail rule must be 'mean' or 'mean_std', got '{other}'"),
    }
}

fn parse_polarity(value: &str) -> Result<Polarity> {
    match value {
        "higher" => Ok(Polarity::HigherIsRiskier),
        "lower" => Ok(Polarity::LowerIsRiskier),
        other => bail!("polarity must be 'higher' or 'lower', got '{other}'"),
    }
}

fn parse_impute(value: &str) -> Result<MissingPolicy> {
    match value {
        "reject" => Ok(MissingPolicy::Reject),
        "zero" => Ok(MissingPolicy::ImputeZero),
        other => bail!("impute policy must be 'reject' or 'zero', got '{other}'"),
    }
}

/// Applies defaults and validates a raw config merged with overrides.
/// Defaults mirror the reference setup: mean tail for exposure,
/// mean-plus-std for vulnerability, gap tolerance 1e-8, 10000 iterations.
pub fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<PipelineConfig> {
    let input = overrides
        .input
        .clone()
        .or(raw.input)
        .context("an input CSV is required (config key 'input' or --input)")?;
    if input.as_os_str().is_empty() {
        bail!("input path is empty");
    }
    let out_dir = overrides
        .out_dir
        .clone()
        .or(raw.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));
    if out_dir.as_os_str().is_empty() {
        bail!("output directory path is empty");
    }

    let tail_exposure = overrides
        .tail_exposure
        .as_deref()
        .or(raw.tail_exposure.as_deref())
        .map_or(Ok(TailRule::Mean), parse_tail_rule)?;
    let tail_vulnerability = overrides
        .tail_vulnerability
        .as_deref()
        .or(raw.tail_vulnerability.as_deref())
        .map_or(Ok(TailRule::MeanPlusStd), parse_tail_rule)?;

    let gap_tol = overrides.gap_tol.or(raw.gap_tol).unwrap_or(1e-8);
    if gap_tol.is_nan() || gap_tol <= 0.0 {
        bail!("gap_tol must be positive, got {gap_tol}");
    }
    let max_iter = overrides.max_iter.or(raw.max_iter).unwrap_or(10_000);
    if max_iter == 0 {
        bail!("max_iter must be at least 1");
    }

    let schema = raw.schema.unwrap_or_default();
    for logical in schema.keys() {
        if !spectral_risk::ingest::LOGICAL_FIELDS.contains(&logical.as_str()) {
            bail!(
                "schema maps unknown logical field '{logical}' (expected one of {:?})",
                spectral_risk::ingest::LOGICAL_FIELDS
            );
        }
    }

    let indicator_names: Vec<&str> = spectral_risk::ingest::default_indicators(false)
        .iter()
        .map(|s| s.name)
        .collect();
    let mut polarity = HashMap::new();
    for (column, value) in raw.polarity.unwrap_or_default() {
        if !indicator_names.contains(&column.as_str()) {
            bail!(
                "polarity set for unknown indicator '{column}' (expected one of {indicator_names:?})"
            );
        }
        polarity.insert(column, parse_polarity(&value)?);
    }

    let impute = overrides
        .impute
        .as_deref()
        .or(raw.impute.as_deref())
        .map_or(Ok(MissingPolicy::Reject), parse_impute)?;

    let housing_per_capita = match raw.housing_density.as_deref() {
        None | Some("per_area") => false,
        Some("per_capita") => true,
        Some(other) => bail!("housing_density must be 'per_area' or 'per_capita', got '{other}'"),
    };

    Ok(PipelineConfig {
        input,
        out_dir,
        schema,
        polarity,
        tail_exposure,
        tail_vulnerability,
        gap_tol,
        max_iter,
        verify_fidelity: overrides.verify_fidelity || raw.verify_fidelity.unwrap_or(false),
        run_oracle: overrides.run_oracle || raw.run_oracle.unwrap_or(false),
        emit_histograms: overrides.emit_histograms || raw.emit_histograms.unwrap_or(false),
        geojson: overrides.geojson.clone().or(raw.geojson),
        geojson_key: raw.geojson_key.unwrap_or_else(|| "zip".to_string()),
        impute,
        housing_per_capita,
        quiet: overrides.quiet || raw.quiet.unwrap_or(false),
    })
}

/// Loads, defaults, and validates a config file with no flag overrides.
pub fn validate_config(path: &Path) -> Result<PipelineConfig> {
    resolve(RawConfig::from_file(path)?, &Overrides::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn config_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let f = config_file(r#"{ "input": "data.csv" }"#);
        let cfg = validate_config(f.path()).unwrap();
        assert_eq!(cfg.tail_exposure, TailRule::Mean);
        assert_eq!(cfg.tail_vulnerability, TailRule::MeanPlusStd);
        assert_eq!(cfg.gap_tol, 1e-8);
        assert_eq!(cfg.max_iter, 10_000);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        assert_eq!(cfg.impute, MissingPolicy::Reject);
        assert!(!cfg.verify_fidelity);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let f = config_file(r#"{ "input": "data.csv", "foo": 1 }"#);
        let err = validate_config(f.path()).unwrap_err();
        assert!(format!("{err:#}").contains("foo"), "error should name the key: {err:#}");
    }

    #[test]
    fn negative_gap_tol_is_rejected() {
        let f = config_file(r#"{ "input": "data.csv", "gap_tol": -1e-8 }"#);
        assert!(validate_config(f.path()).is_err());
    }

    #[test]
    fn bad_enum_is_rejected() {
        let f = config_file(r#"{ "input": "data.csv", "tail_exposure": "median" }"#);
        assert!(validate_config(f.path()).is_err());
    }

    #[test]
    fn missing_input_is_rejected() {
        let f = config_file("{}");
        assert!(validate_config(f.path()).is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let f = config_file(
            r#"{ "input": "data.csv", "gap_tol": 1e-6, "tail_exposure": "mean" }"#,
        );
        let overrides = Overrides {
            gap_tol: Some(1e-10),
            tail_exposure: Some("mean_std".to_string()),
            ..Overrides::default()
        };
        let cfg = resolve(RawConfig::from_file(f.path()).unwrap(), &overrides).unwrap();
        assert_eq!(cfg.gap_tol, 1e-10);
        assert_eq!(cfg.tail_exposure, TailRule::MeanPlusStd);
    }

    #[test]
    fn polarity_map_parses() {
        let f = config_file(
            r#"{ "input": "data.csv", "polarity": { "rental_rate": "lower" } }"#,
        );
        let cfg = validate_config(f.path()).unwrap();
        assert_eq!(cfg.polarity["rental_rate"], Polarity::LowerIsRiskier);
    }

    #[test]
    fn misspelled_schema_and_polarity_keys_are_rejected() {
        let f = config_file(r#"{ "input": "data.csv", "schema": { "zip_code": "ZCTA" } }"#);
        let err = validate_config(f.path()).unwrap_err();
        assert!(format!("{err:#}").contains("zip_code"));

        let f = config_file(
            r#"{ "input": "data.csv", "polarity": { "rental": "lower" } }"#,
        );
        let err = validate_config(f.path()).unwrap_err();
        assert!(format!("{err:#}").contains("rental"));
    }
}
