//! Per-locality risk indices: the rank-one product-of-inners form and the
//! generalized form against reference density matrices.

use thiserror::Error;

use crate::preprocess::FeatureVector;
use crate::symmat::{fidelity_pure, DensityMatrix, MatrixError};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("dimension mismatch for '{locality_id}': vector dim {got}, reference dim {expected}")]
    DimMismatch { locality_id: String, got: usize, expected: usize },
    #[error("exposure and vulnerability lists differ in length: {exposure} vs {vulnerability}")]
    LengthMismatch { exposure: usize, vulnerability: usize },
    #[error("locality ids disagree at {count} position(s), first offenders: {examples:?}")]
    IdMismatch { count: usize, examples: Vec<(String, String)> },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// A locality's exposure score, vulnerability score, and their product,
/// the relative risk index, all in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRecord {
    pub locality_id: String,
    pub exposure_score: f64,
    pub vulnerability_score: f64,
    pub risk_index: f64,
}

impl RiskRecord {
    fn from_scores(locality_id: String, exposure: f64, vulnerability: f64) -> Self {
        RiskRecord {
            locality_id,
            exposure_score: exposure,
            vulnerability_score: vulnerability,
            risk_index: exposure * vulnerability,
        }
    }
}

fn check_dims(v: &FeatureVector, expected: usize) -> Result<(), RiskError> {
    if v.dim() != expected {
        return Err(RiskError::DimMismatch {
            locality_id: v.locality_id().to_string(),
            got: v.dim(),
            expected,
        });
    }
    Ok(())
}

/// R = |⟨e, e*⟩| · |⟨v, v*⟩| against rank-one reference vectors.
/// Zero-class vectors contribute a factor of 0.
pub fn risk_rank_one(
    e: &FeatureVector,
    v: &FeatureVector,
    e_star: &FeatureVector,
    v_star: &FeatureVector,
) -> Result<RiskRecord, RiskError> {
    check_dims(e, e_star.dim())?;
    check_dims(v, v_star.dim())?;
    let exposure = e.dot(e_star.components()).abs().clamp(0.0, 1.0);
    let vulnerability = v.dot(v_star.components()).abs().clamp(0.0, 1.0);
    Ok(RiskRecord::from_scores(
        e.locality_id().to_string(),
        exposure,
        vulnerability,
    ))
}

/// R = √⟨eeᵀ, E⟩ · √⟨vvᵀ, V⟩ against reference density matrices, computed
/// through the pure-state fidelity closed form. Zero-class vectors
/// short-circuit to 0 without touching the reference.
pub fn risk_generalized(
    e: &FeatureVector,
    v: &FeatureVector,
    exposure_ref: &DensityMatrix,
    vulnerability_ref: &DensityMatrix,
) -> Result<RiskRecord, RiskError> {
    check_dims(e, exposure_ref.dim())?;
    check_dims(v, vulnerability_ref.dim())?;
    let exposure = fidelity_pure(e, exposure_ref)?;
    let vulnerability = fidelity_pure(v, vulnerability_ref)?;
    Ok(RiskRecord::from_scores(
        e.locality_id().to_string(),
        exposure,
        vulnerability,
    ))
}

/// Scores every locality; the two lists must be aligned by locality id and
/// the output preserves input order.
pub fn score_all(
    exposure: &[FeatureVector],
    vulnerability: &[FeatureVector],
    exposure_ref: &DensityMatrix,
    vulnerability_ref: &DensityMatrix,
) -> Result<Vec<RiskRecord>, RiskError> {
    if exposure.len() != vulnerability.len() {
        return Err(RiskError::LengthMismatch {
            exposure: exposure.len(),
            vulnerability: vulnerability.len(),
        });
    }
    let offenders: Vec<(String, String)> = exposure
        .iter()
        .zip(vulnerability)
        .filter(|(e, v)| e.locality_id() != v.locality_id())
        .map(|(e, v)| (e.locality_id().to_string(), v.locality_id().to_string()))
        .collect();
    if !offenders.is_empty() {
        return Err(RiskError::IdMismatch {
            count: offenders.len(),
            examples: offenders.into_iter().take(5).collect(),
        });
    }
    exposure
        .iter()
        .zip(vulnerability)
        .map(|(e, v)| risk_generalized(e, v, exposure_ref, vulnerability_ref))
        .collect()
}
