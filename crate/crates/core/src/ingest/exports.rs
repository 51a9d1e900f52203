//! File emitters: risk CSV, reference JSON, GeoJSON property join.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::IngestError;
use crate::reference::{principal_eigenvector, SolverReport};
use crate::risk::RiskRecord;
use crate::symmat::{eig, DensityMatrix, SymMatrix};

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io { path: path.display().to_string(), source }
}

/// Writes `zip,exposure_score,vulnerability_score,risk_index` with fixed
/// 8-decimal formatting, LF line endings, rows in input order.
pub fn export_risk_csv(records: &[RiskRecord], path: &Path) -> Result<(), IngestError> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str("zip,exposure_score,vulnerability_score,risk_index\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.8},{:.8},{:.8}\n",
            r.locality_id, r.exposure_score, r.vulnerability_score, r.risk_index
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn matrix_json(d: &DensityMatrix) -> Result<(Value, Value), IngestError> {
    let mat = d.mat();
    let entries: Vec<Value> = mat.entries().iter().map(|&x| json!(x)).collect();
    let dec = eig(mat)?;
    let principal = principal_eigenvector(d).map_err(|e| match e {
        crate::reference::ReferenceError::Matrix(m) => IngestError::Matrix(m),
        other => IngestError::BadReferenceJson {
            path: "<serialization>".to_string(),
            reason: other.to_string(),
        },
    })?;
    let eigen = json!({
        "eigenvalues": dec.eigenvalues(),
        "principal_eigenvector": principal,
        "trace": mat.trace(),
    });
    Ok((Value::Array(entries), eigen))
}

fn solver_json(report: &SolverReport) -> Value {
    json!({
        "iterations": report.iterations,
        "final_gap": report.final_gap,
        "objective": report.objective,
        "converged": report.converged,
    })
}

/// Serializes the estimated reference matrices with their spectra and
/// solver diagnostics. `E_hat` and `V_hat` are row-major entry arrays.
pub fn export_reference_json(
    exposure: &DensityMatrix,
    vulnerability: &DensityMatrix,
    reports: (&SolverReport, &SolverReport),
    path: &Path,
) -> Result<(), IngestError> {
    let (e_entries, e_eigen) = matrix_json(exposure)?;
    let (v_entries, v_eigen) = matrix_json(vulnerability)?;
    let doc = json!({
        "E_hat": e_entries,
        "V_hat": v_entries,
        "eigen": { "E_hat": e_eigen, "V_hat": v_eigen },
        "solver": { "E_hat": solver_json(reports.0), "V_hat": solver_json(reports.1) },
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("valid json value");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn density_from_flat(path: &Path, key: &str, value: &Value) -> Result<DensityMatrix, IngestError> {
    let bad = |reason: String| IngestError::BadReferenceJson {
        path: path.display().to_string(),
        reason,
    };
    let arr = value
        .as_array()
        .ok_or_else(|| bad(format!("'{key}' is not an array")))?;
    let entries: Vec<f64> = arr
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| bad(format!("'{key}' holds a non-number"))))
        .collect::<Result<_, _>>()?;
    let dim = (entries.len() as f64).sqrt().round() as usize;
    if dim * dim != entries.len() || dim == 0 {
        return Err(bad(format!("'{key}' length {} is not a square", entries.len())));
    }
    let mat = SymMatrix::new(dim, entries)?;
    // Tolerate rounded entries (e.g. matrices copied from reports).
    Ok(DensityMatrix::project(&mat)?)
}

/// Reads back the `E_hat`/`V_hat` matrices written by
/// [`export_reference_json`].
pub fn read_reference_json(path: &Path) -> Result<(DensityMatrix, DensityMatrix), IngestError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| IngestError::BadReferenceJson {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let get = |key: &str| {
        doc.get(key).ok_or_else(|| IngestError::BadReferenceJson {
            path: path.display().to_string(),
            reason: format!("missing key '{key}'"),
        })
    };
    let e = density_from_flat(path, "E_hat", get("E_hat")?)?;
    let v = density_from_flat(path, "V_hat", get("V_hat")?)?;
    Ok((e, v))
}

/// Join diagnostics: which zips matched features and which were left
/// over on either side.
#[derive(Debug, Clone, Default)]
pub struct JoinReport {
    pub matched: usize,
    pub unmatched_records: Vec<String>,
    pub unmatched_features: Vec<String>,
}

/// Annotates a GeoJSON FeatureCollection with a `risk_index` property on
/// every feature whose `key_property` matches a record's locality id, and
/// writes the result to `out_path`.
pub fn export_geojson_join(
    records: &[RiskRecord],
    boundaries: &Path,
    key_property: &str,
    out_path: &Path,
) -> Result<JoinReport, IngestError> {
    let bad = |reason: String| IngestError::BadGeoJson {
        path: boundaries.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(boundaries).map_err(|e| io_err(boundaries, e))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("expected a FeatureCollection".to_string()));
    }
    let features = doc
        .get_mut("features")
        .and_then(Value::as_array_mut)
        .ok_or_else(|| bad("missing 'features' array".to_string()))?;

    let index: std::collections::HashMap<&str, &RiskRecord> = records
        .iter()
        .map(|r| (r.locality_id.as_str(), r))
        .collect();
    let mut report = JoinReport::default();
    let mut matched_ids = std::collections::HashSet::new();

    for feature in features.iter_mut() {
        let key = feature
            .get("properties")
            .and_then(|p| p.get(key_property))
            .map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            });
        let Some(key) = key else {
            report.unmatched_features.push("<missing key property>".to_string());
            continue;
        };
        match index.get(key.trim()) {
            Some(record) => {
                let props = feature
                    .get_mut("properties")
                    .and_then(Value::as_object_mut)
                    .ok_or_else(|| bad("feature properties is not an object".to_string()))?;
                props.insert("risk_index".to_string(), json!(record.risk_index));
                matched_ids.insert(record.locality_id.clone());
                report.matched += 1;
            }
            None => report.unmatched_features.push(key.trim().to_string()),
        }
    }
    report.unmatched_records = records
        .iter()
        .filter(|r| !matched_ids.contains(&r.locality_id))
        .map(|r| r.locality_id.clone())
        .collect();
    if !report.unmatched_records.is_empty() || !report.unmatched_features.is_empty() {
        log::warn!(
            "geojson join: {} unmatched record(s), {} unmatched feature(s)",
            report.unmatched_records.len(),
            report.unmatched_features.len()
        );
    }

    let mut file = fs::File::create(out_path).map_err(|e| io_err(out_path, e))?;
    let text = serde_json::to_string_pretty(&sorted_value(doc)).expect("valid json");
    file.write_all(text.as_bytes()).map_err(|e| io_err(out_path, e))?;
    file.write_all(b"\n").map_err(|e| io_err(out_path, e))?;
    Ok(report)
}

/// Rebuilds object keys in sorted order so output bytes do not depend on
/// input key order.
fn sorted_value(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut sorted: Vec<(String, Value)> = map.into_iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in sorted {
                out.insert(k, sorted_value(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted_value).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::l2_normalize;
    use crate::reference::{estimate_reference, SolverOptions, TailCluster, TailRule};

    fn record(zip: &str, e: f64, v: f64) -> RiskRecord {
        RiskRecord {
            locality_id: zip.to_string(),
            exposure_score: e,
            vulnerability_score: v,
            risk_index: e * v,
        }
    }

    #[test]
    fn risk_csv_empty_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("risk.csv");
        export_risk_csv(&[], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "zip,exposure_score,vulnerability_score,risk_index\n");
    }

    #[test]
    fn risk_csv_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("risk.csv");
        export_risk_csv(&[record("21001", 0.5, 0.25)], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "21001,0.50000000,0.25000000,0.12500000");
    }

    #[test]
    fn risk_csv_round_trips_to_1e8() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("risk.csv");
        let records = vec![
            record("a", 0.123456789, 0.987654321),
            record("b", 1.0, 0.0),
        ];
        export_risk_csv(&records, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        for (line, original) in text.lines().skip(1).zip(&records) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], original.locality_id);
            let e: f64 = fields[1].parse().unwrap();
            let v: f64 = fields[2].parse().unwrap();
            let r: f64 = fields[3].parse().unwrap();
            assert!((e - original.exposure_score).abs() <= 1e-8);
            assert!((v - original.vulnerability_score).abs() <= 1e-8);
            assert!((r - original.risk_index).abs() <= 1e-8);
        }
    }

    fn sample_report(dim: usize) -> SolverReport {
        let members = vec![l2_normalize("u", &vec![1.0; dim]).unwrap()];
        let cluster = TailCluster::from_members(members, 0.0, TailRule::Mean).unwrap();
        estimate_reference(&cluster, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn reference_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reference.json");
        let e_report = sample_report(2);
        let v_report = sample_report(3);
        export_reference_json(
            &e_report.estimate,
            &v_report.estimate,
            (&e_report, &v_report),
            &path,
        )
        .unwrap();
        let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(doc["E_hat"].as_array().unwrap().len(), 4);
        assert_eq!(doc["V_hat"].as_array().unwrap().len(), 9);
        let trace = doc["eigen"]["E_hat"]["trace"].as_f64().unwrap();
        assert!((trace - 1.0).abs() <= 1e-9);
        assert!(doc["solver"]["V_hat"]["converged"].as_bool().unwrap());

        let (e, v) = read_reference_json(&path).unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(v.dim(), 3);
        let err = e
            .mat()
            .sub(e_report.estimate.mat())
            .unwrap()
            .frobenius_norm();
        assert!(err < 1e-9);
    }

    #[test]
    fn reference_json_write_to_unwritable_path_errors() {
        let e_report = sample_report(2);
        let v_report = sample_report(3);
        let err = export_reference_json(
            &e_report.estimate,
            &v_report.estimate,
            (&e_report, &v_report),
            Path::new("/nonexistent-dir/reference.json"),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }

    fn boundaries_fixture(dir: &Path) -> std::path::PathBuf {
        let path = dir.join("bounds.geojson");
        let doc = json!({
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": { "zip": "21001", "name": "A" },
                    "geometry": { "type": "Point", "coordinates": [0.0, 0.0] }
                },
                {
                    "type": "Feature",
                    "properties": { "zip": "99999", "name": "B" },
                    "geometry": { "type": "Point", "coordinates": [1.0, 1.0] }
                }
            ]
        });
        fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        path
    }

    #[test]
    fn geojson_join_annotates_matches_and_reports_leftovers() {
        let dir = tempfile::tempdir().unwrap();
        let bounds = boundaries_fixture(dir.path());
        let out = dir.path().join("risk.geojson");
        let records = vec![record("21001", 0.5, 0.5), record("21002", 1.0, 1.0)];
        let report = export_geojson_join(&records, &bounds, "zip", &out).unwrap();
        assert_eq!(report.matched, 1);
        assert_eq!(report.unmatched_records, vec!["21002".to_string()]);
        assert_eq!(report.unmatched_features, vec!["99999".to_string()]);

        let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        let features = doc["features"].as_array().unwrap();
        assert_eq!(features[0]["properties"]["risk_index"].as_f64().unwrap(), 0.25);
        assert!(features[1]["properties"].get("risk_index").is_none());
    }

    #[test]
    fn geojson_join_empty_records_passes_boundaries_through() {
        let dir = tempfile::tempdir().unwrap();
        let bounds = boundaries_fixture(dir.path());
        let out = dir.path().join("risk.geojson");
        let report = export_geojson_join(&[], &bounds, "zip", &out).unwrap();
        assert_eq!(report.matched, 0);
        assert_eq!(report.unmatched_features.len(), 2);
        let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(doc["features"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn geojson_join_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.geojson");
        fs::write(&path, "{ not json").unwrap();
        let out = dir.path().join("out.geojson");
        assert!(matches!(
            export_geojson_join(&[], &path, "zip", &out),
            Err(IngestError::BadGeoJson { .. })
        ));
        fs::write(&path, "{\"type\": \"Feature\"}").unwrap();
        assert!(matches!(
            export_geojson_join(&[], &path, "zip", &out),
            Err(IngestError::BadGeoJson { .. })
        ));
    }
}
