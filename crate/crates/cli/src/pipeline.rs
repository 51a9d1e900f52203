//! Pipeline orchestration behind the CLI subcommands: preprocess,
//! estimate, score, and the full run.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use spectral_risk::ingest::{
    self, default_indicators, parse_census_csv, CsvSchema, IngestReport, RiskElement,
};
use spectral_risk::preprocess::{build_feature_vectors, FeatureVector, RawFeatureTable};
use spectral_risk::reference::{
    aggregate_fidelity, estimate_reference, heuristic_vector, reference_oracle, similarity_set,
    tail_cluster, SimilaritySet, SolverOptions, SolverReport, TailCluster,
};
use spectral_risk::risk::{score_all, RiskRecord};
use spectral_risk::symmat::{fidelity, DensityMatrix};

use crate::config::PipelineConfig;

/// Grid steps for the brute-force verification oracle. Dimension 3 pays
/// for a 5-dimensional grid, so it gets a coarser step.
const ORACLE_STEP_2D: f64 = 0.01;
const ORACLE_STEP_3D: f64 = 0.05;

/// Slack allowed when comparing the solver objective against the coarse
/// grid oracle.
const ORACLE_SLACK: f64 = 1e-4;

/// Agreement required between the closed-form scores and the full
/// matrix-square-root fidelity when `--verify-fidelity` is on.
const FIDELITY_VERIFY_TOL: f64 = 1e-9;

#[derive(Debug)]
pub struct PreparedFeatures {
    pub exposure: Vec<FeatureVector>,
    pub vulnerability: Vec<FeatureVector>,
    pub ingest_report: IngestReport,
    /// Derived indicator columns (pre min-max), for histogram export.
    pub indicator_columns: Vec<(String, Vec<f64>)>,
}

/// Pipeline step 1: parse the census CSV, derive the indicator
/// columns, and preprocess them into unit feature vectors.
pub fn prepare_features(config: &PipelineConfig) -> Result<PreparedFeatures> {
    let schema = CsvSchema::new(config.schema.clone());
    let (rows, ingest_report) = parse_census_csv(&config.input, &schema, config.impute)
        .context("ingest: failed to parse census data")?;
    if rows.is_empty() {
        bail!(
            "ingest: no usable rows in '{}' ({} read, {} dropped)",
            config.input.display(),
            ingest_report.rows_read,
            ingest_report.dropped_count()
        );
    }

    let specs = default_indicators(config.housing_per_capita);
    let locality_ids: Vec<String> = rows.iter().map(|r| r.zip.clone()).collect();
    let mut table = RawFeatureTable::new(locality_ids);
    let mut indicator_columns = Vec::with_capacity(specs.len());
    for spec in &specs {
        let values: Vec<f64> = rows.iter().map(|r| spec.formula.evaluate(r)).collect();
        let polarity = config.polarity.get(spec.name).copied().unwrap_or_default();
        table
            .add_column(spec.name, values.clone(), polarity)
            .context("preprocess: building raw feature table")?;
        indicator_columns.push((spec.name.to_string(), values));
    }

    let exposure_cols: Vec<&str> = specs
        .iter()
        .filter(|s| s.indicator == RiskElement::Exposure)
        .map(|s| s.name)
        .collect();
    let vulnerability_cols: Vec<&str> = specs
        .iter()
        .filter(|s| s.indicator == RiskElement::Vulnerability)
        .map(|s| s.name)
        .collect();

    let exposure = build_feature_vectors(&table, &exposure_cols)
        .context("preprocess: exposure vectors")?;
    let vulnerability = build_feature_vectors(&table, &vulnerability_cols)
        .context("preprocess: vulnerability vectors")?;

    Ok(PreparedFeatures { exposure, vulnerability, ingest_report, indicator_columns })
}

#[derive(Debug)]
pub struct IndicatorEstimate {
    pub similarity: SimilaritySet,
    pub cluster_size: usize,
    pub threshold: f64,
    pub report: SolverReport,
    /// (solver objective, oracle objective) when the oracle ran.
    pub oracle: Option<(f64, f64)>,
}

fn estimate_indicator(
    name: &str,
    vectors: &[FeatureVector],
    rule: spectral_risk::reference::TailRule,
    config: &PipelineConfig,
) -> Result<IndicatorEstimate> {
    let dim = vectors.first().map_or(0, FeatureVector::dim);
    let heuristic = heuristic_vector(dim)
        .with_context(|| format!("reference: heuristic vector for {name}"))?;
    let similarity = similarity_set(vectors, &heuristic)
        .with_context(|| format!("reference: similarity set for {name}"))?;
    let cluster = tail_cluster(&similarity, rule)
        .with_context(|| format!("reference: tail cluster for {name}"))?;
    let opts = SolverOptions { gap_tol: config.gap_tol, max_iter: config.max_iter };
    let report = estimate_reference(&cluster, &opts)
        .with_context(|| format!("reference: estimating {name} reference"))?;

    let oracle = if config.run_oracle {
        Some(run_oracle_check(name, &cluster, &report)?)
    } else {
        None
    };

    Ok(IndicatorEstimate {
        cluster_size: cluster.len(),
        threshold: cluster.threshold(),
        similarity,
        report,
        oracle,
    })
}

fn run_oracle_check(
    name: &str,
    cluster: &TailCluster,
    report: &SolverReport,
) -> Result<(f64, f64)> {
    let dim = cluster.dim().context("reference: cluster dimensions")?;
    let step = if dim <= 2 { ORACLE_STEP_2D } else { ORACLE_STEP_3D };
    let oracle = reference_oracle(cluster, step)
        .with_context(|| format!("reference: oracle for {name}"))?;
    let oracle_obj = aggregate_fidelity(cluster, &oracle);
    if report.objective < oracle_obj - ORACLE_SLACK {
        bail!(
            "reference: {name} solver objective {:.9} fell below oracle {:.9} - {ORACLE_SLACK:e}",
            report.objective,
            oracle_obj
        );
    }
    Ok((report.objective, oracle_obj))
}

/// Pipeline steps 2 through 4: heuristic vectors, tail clusters, and the two reference
/// estimations.
pub fn estimate_references(
    config: &PipelineConfig,
    features: &PreparedFeatures,
) -> Result<(IndicatorEstimate, IndicatorEstimate)> {
    let exposure = estimate_indicator(
        "exposure",
        &features.exposure,
        config.tail_exposure,
        config,
    )?;
    let vulnerability = estimate_indicator(
        "vulnerability",
        &features.vulnerability,
        config.tail_vulnerability,
        config,
    )?;
    Ok((exposure, vulnerability))
}

fn verify_fidelity_agreement(
    vectors: &[FeatureVector],
    reference: &DensityMatrix,
    scores: impl Iterator<Item = f64>,
) -> Result<()> {
    for (v, fast) in vectors.iter().zip(scores) {
        if v.is_zero() {
            continue;
        }
        let pure = DensityMatrix::pure(v.components())
            .context("symmat: projector of a unit feature vector")?;
        let full = fidelity(&pure, reference).context("symmat: fidelity")?;
        if (full - fast).abs() > FIDELITY_VERIFY_TOL {
            bail!(
                "risk: fidelity verification failed for '{}': closed form {fast:.12} vs \
                 eigendecomposition path {full:.12}",
                v.locality_id()
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub localities: usize,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub exposure_cluster: usize,
    pub vulnerability_cluster: usize,
    pub exposure_gap: f64,
    pub vulnerability_gap: f64,
    pub exposure_oracle: Option<(f64, f64)>,
    pub vulnerability_oracle: Option<(f64, f64)>,
    pub risk_min: f64,
    pub risk_max: f64,
    pub risk_mean: f64,
}

impl fmt::Display for PipelineSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "localities: {} ({} read, {} dropped)",
            self.localities, self.rows_read, self.rows_dropped
        )?;
        writeln!(
            f,
            "exposure: cluster {} of {}, solver gap {:.3e}",
            self.exposure_cluster, self.localities, self.exposure_gap
        )?;
        if let Some((solver, oracle)) = self.exposure_oracle {
            writeln!(
                f,
                "exposure oracle: solver {solver:.9} >= oracle {oracle:.9} - 1e-4"
            )?;
        }
        writeln!(
            f,
            "vulnerability: cluster {} of {}, solver gap {:.3e}",
            self.vulnerability_cluster, self.localities, self.vulnerability_gap
        )?;
        if let Some((solver, oracle)) = self.vulnerability_oracle {
            writeln!(
                f,
                "vulnerability oracle: solver {solver:.9} >= oracle {oracle:.9} - 1e-4"
            )?;
        }
        write!(
            f,
            "risk index: min {:.8}, max {:.8}, mean {:.8}",
            self.risk_min, self.risk_max, self.risk_mean
        )
    }
}

fn risk_stats(records: &[RiskRecord]) -> (f64, f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for r in records {
        min = min.min(r.risk_index);
        max = max.max(r.risk_index);
        sum += r.risk_index;
    }
    if records.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (min, max, sum / records.len() as f64)
    }
}

fn ensure_out_dir(config: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&config.out_dir).with_context(|| {
        format!("cannot create output directory '{}'", config.out_dir.display())
    })
}

fn export_all_histograms(
    config: &PipelineConfig,
    features: &PreparedFeatures,
    exposure: &IndicatorEstimate,
    vulnerability: &IndicatorEstimate,
) -> Result<()> {
    let dir = config.out_dir.join("histograms");
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create '{}'", dir.display()))?;
    ingest::export_histograms(&features.indicator_columns, &dir)
        .context("ingest: variable histograms")?;
    for (name, estimate) in [
        ("exposure_similarity", exposure),
        ("vulnerability_similarity", vulnerability),
    ] {
        let values: Vec<f64> = estimate.similarity.similarities().collect();
        let mean = estimate.similarity.mean();
        let std = estimate.similarity.std_dev();
        ingest::export_similarity_histogram(name, &values, mean, mean + std, &dir)
            .with_context(|| format!("ingest: {name} histogram"))?;
    }
    Ok(())
}

/// The full pipeline: preprocess, estimate both references, score every
/// locality, and write all artifacts into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary> {
    ensure_out_dir(config)?;
    let features = prepare_features(config)?;
    let (exposure, vulnerability) = estimate_references(config, &features)?;

    let records = score_all(
        &features.exposure,
        &features.vulnerability,
        &exposure.report.estimate,
        &vulnerability.report.estimate,
    )
    .context("risk: scoring localities")?;

    if config.verify_fidelity {
        verify_fidelity_agreement(
            &features.exposure,
            &exposure.report.estimate,
            records.iter().map(|r| r.exposure_score),
        )?;
        verify_fidelity_agreement(
            &features.vulnerability,
            &vulnerability.report.estimate,
            records.iter().map(|r| r.vulnerability_score),
        )?;
    }

    ingest::export_risk_csv(&records, &config.out_dir.join("risk.csv"))
        .context("ingest: writing risk.csv")?;
    ingest::export_reference_json(
        &exposure.report.estimate,
        &vulnerability.report.estimate,
        (&exposure.report, &vulnerability.report),
        &config.out_dir.join("reference.json"),
    )
    .context("ingest: writing reference.json")?;

    if config.emit_histograms {
        export_all_histograms(config, &features, &exposure, &vulnerability)?;
    }
    if let Some(boundaries) = &config.geojson {
        let report = ingest::export_geojson_join(
            &records,
            boundaries,
            &config.geojson_key,
            &config.out_dir.join("risk.geojson"),
        )
        .context("ingest: geojson join")?;
        log::info!(
            "geojson join: {} matched, {} unmatched records, {} unmatched features",
            report.matched,
            report.unmatched_records.len(),
            report.unmatched_features.len()
        );
    }

    let (risk_min, risk_max, risk_mean) = risk_stats(&records);
    let summary = PipelineSummary {
        localities: records.len(),
        rows_read: features.ingest_report.rows_read,
        rows_dropped: features.ingest_report.dropped_count(),
        exposure_cluster: exposure.cluster_size,
        vulnerability_cluster: vulnerability.cluster_size,
        exposure_gap: exposure.report.final_gap,
        vulnerability_gap: vulnerability.report.final_gap,
        exposure_oracle: exposure.oracle,
        vulnerability_oracle: vulnerability.oracle,
        risk_min,
        risk_max,
        risk_mean,
    };
    if !config.quiet {
        eprintln!("{summary}");
    }
    Ok(summary)
}

fn write_feature_csv(
    path: &Path,
    names: &[&str],
    vectors: &[FeatureVector],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("zip,");
    out.push_str(&names.join(","));
    out.push_str(",norm_class\n");
    for v in vectors {
        out.push_str(v.locality_id());
        for c in v.components() {
            out.push_str(&format!(",{c:.8}"));
        }
        out.push_str(if v.is_zero() { ",zero\n" } else { ",unit\n" });
    }
    fs::write(path, out).with_context(|| format!("writing '{}'", path.display()))
}

/// `preprocess` subcommand: emit the unit feature vectors for inspection.
pub fn run_preprocess(config: &PipelineConfig) -> Result<()> {
    ensure_out_dir(config)?;
    let features = prepare_features(config)?;
    write_feature_csv(
        &config.out_dir.join("features_exposure.csv"),
        &["population_density", "housing_density"],
        &features.exposure,
    )?;
    write_feature_csv(
        &config.out_dir.join("features_vulnerability.csv"),
        &["minority_rate", "age_extremes_rate", "rental_rate"],
        &features.vulnerability,
    )?;
    if !config.quiet {
        eprintln!(
            "preprocessed {} localities ({})",
            features.exposure.len(),
            features.ingest_report
        );
    }
    Ok(())
}

/// `estimate` subcommand: references only.
pub fn run_estimate(config: &PipelineConfig) -> Result<()> {
    ensure_out_dir(config)?;
    let features = prepare_features(config)?;
    let (exposure, vulnerability) = estimate_references(config, &features)?;
    ingest::export_reference_json(
        &exposure.report.estimate,
        &vulnerability.report.estimate,
        (&exposure.report, &vulnerability.report),
        &config.out_dir.join("reference.json"),
    )
    .context("ingest: writing reference.json")?;
    if config.emit_histograms {
        export_all_histograms(config, &features, &exposure, &vulnerability)?;
    }
    if !config.quiet {
        eprintln!(
            "estimated references: exposure cluster {} (gap {:.3e}), vulnerability cluster {} (gap {:.3e})",
            exposure.cluster_size,
            exposure.report.final_gap,
            vulnerability.cluster_size,
            vulnerability.report.final_gap
        );
    }
    Ok(())
}

/// `score` subcommand: risk indices from previously estimated references.
pub fn run_score(config: &PipelineConfig, references: Option<&Path>) -> Result<()> {
    ensure_out_dir(config)?;
    let default_path = config.out_dir.join("reference.json");
    let ref_path = references.unwrap_or(&default_path);
    let (exposure_ref, vulnerability_ref) = ingest::read_reference_json(ref_path)
        .context("ingest: reading reference matrices")?;
    let features = prepare_features(config)?;
    let records = score_all(
        &features.exposure,
        &features.vulnerability,
        &exposure_ref,
        &vulnerability_ref,
    )
    .context("risk: scoring localities")?;
    ingest::export_risk_csv(&records, &config.out_dir.join("risk.csv"))
        .context("ingest: writing risk.csv")?;
    if !config.quiet {
        let (min, max, mean) = risk_stats(&records);
        eprintln!(
            "scored {} localities: min {min:.8}, max {max:.8}, mean {mean:.8}",
            records.len()
        );
    }
    Ok(())
}
