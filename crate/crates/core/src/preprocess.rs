//! Raw feature columns to unit-norm feature vectors: polarity orientation,
//! min-max scaling, per-locality assembly, ℓ2 normalization.

use thiserror::Error;

/// Tolerance around 1 accepted for a unit ℓ2 norm.
pub const EPS_NORM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("column '{0}' not found")]
    UnknownColumn(String),
    #[error("column '{name}' has {len} values but the table has {expected} localities")]
    ColumnLength { name: String, len: usize, expected: usize },
    #[error("column '{name}' contains a non-finite value at row {row}")]
    NonFinite { name: String, row: usize },
    #[error("negative component {value} in vector for '{locality_id}'; orient and min-max must run first")]
    NegativeComponent { locality_id: String, value: f64 },
    #[error("vector for '{locality_id}' has norm {norm} outside {{0}} ∪ [1±{slack:.0e}]")]
    InvalidNorm { locality_id: String, norm: f64, slack: f64 },
    #[error("feature vector must have at least one component")]
    Empty,
}

/// Whether larger raw values mean more risk. All default census indicators
/// are prevalence or density measures, so higher-is-riskier is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    #[default]
    HigherIsRiskier,
    LowerIsRiskier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormClass {
    Unit,
    Zero,
}

/// A locality's coordinates after the full preprocessing chain:
/// non-negative components with unit (or exactly zero) ℓ2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    locality_id: String,
    components: Vec<f64>,
    norm_class: NormClass,
}

impl FeatureVector {
    /// Validates an already-normalized vector.
    pub fn from_components(
        locality_id: impl Into<String>,
        components: Vec<f64>,
    ) -> Result<Self, PreprocessError> {
        let locality_id = locality_id.into();
        if components.is_empty() {
            return Err(PreprocessError::Empty);
        }
        if let Some(&bad) = components.iter().find(|&&c| c.is_nan() || c < 0.0) {
            return Err(PreprocessError::NegativeComponent { locality_id, value: bad });
        }
        let norm = norm2(&components);
        let norm_class = if components.iter().all(|&c| c == 0.0) {
            NormClass::Zero
        } else if (norm - 1.0).abs() <= EPS_NORM {
            NormClass::Unit
        } else {
            return Err(PreprocessError::InvalidNorm {
                locality_id,
                norm,
                slack: EPS_NORM,
            });
        };
        Ok(FeatureVector { locality_id, components, norm_class })
    }

    pub fn locality_id(&self) -> &str {
        &self.locality_id
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm_class(&self) -> NormClass {
        self.norm_class
    }

    pub fn is_zero(&self) -> bool {
        self.norm_class == NormClass::Zero
    }

    /// ⟨self, other⟩; caller guarantees equal dims.
    pub fn dot(&self, other: &[f64]) -> f64 {
        self.components.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Named raw column with its risk polarity.
#[derive(Debug, Clone)]
pub struct RawColumn {
    pub name: String,
    pub values: Vec<f64>,
    pub polarity: Polarity,
}

/// Raw per-locality feature columns prior to preprocessing.
#[derive(Debug, Clone)]
pub struct RawFeatureTable {
    locality_ids: Vec<String>,
    columns: Vec<RawColumn>,
}

impl RawFeatureTable {
    pub fn new(locality_ids: Vec<String>) -> Self {
        RawFeatureTable { locality_ids, columns: Vec::new() }
    }

    pub fn add_column(
        &mut self,
        name: impl Into<String>,
        values: Vec<f64>,
        polarity: Polarity,
    ) -> Result<(), PreprocessError> {
        let name = name.into();
        if values.len() != self.locality_ids.len() {
            return Err(PreprocessError::ColumnLength {
                name,
                len: values.len(),
                expected: self.locality_ids.len(),
            });
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(PreprocessError::NonFinite { name, row });
        }
        self.columns.push(RawColumn { name, values, polarity });
        Ok(())
    }

    pub fn locality_ids(&self) -> &[String] {
        &self.locality_ids
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Rule 1: flip lower-is-riskier columns so that larger always means
/// riskier. The following min-max shift restores non-negativity.
pub fn orient(column: &[f64], polarity: Polarity) -> Vec<f64> {
    match polarity {
        Polarity::HigherIsRiskier => column.to_vec(),
        Polarity::LowerIsRiskier => column.iter().map(|v| -v).collect(),
    }
}

/// Rule 2: x ← (x − x_min)/(x_max − x_min). A constant column carries no
/// ranking information and maps to all-zeros with a warning.
pub fn min_max(column: &[f64]) -> Vec<f64> {
    assert!(!column.is_empty(), "min_max needs at least one value");
    let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        log::warn!("constant column (all values {min}); min-max maps it to zeros");
        return vec![0.0; column.len()];
    }
    let span = max - min;
    column.iter().map(|v| (v - min) / span).collect()
}

/// Rule 3: v ← v/‖v‖₂. The zero vector is preserved as norm-class zero so
/// its risk index later evaluates to 0.
pub fn l2_normalize(
    locality_id: impl Into<String>,
    components: &[f64],
) -> Result<FeatureVector, PreprocessError> {
    let locality_id = locality_id.into();
    if components.is_empty() {
        return Err(PreprocessError::Empty);
    }
    if let Some(&bad) = components.iter().find(|&&c| c < 0.0) {
        return Err(PreprocessError::NegativeComponent { locality_id, value: bad });
    }
    let norm = norm2(components);
    if norm == 0.0 {
        return Ok(FeatureVector {
            locality_id,
            components: vec![0.0; components.len()],
            norm_class: NormClass::Zero,
        });
    }
    Ok(FeatureVector {
        locality_id,
        components: components.iter().map(|v| v / norm).collect(),
        norm_class: NormClass::Unit,
    })
}

/// Full chain over named columns, in the order given: orient → min-max →
/// per-locality assembly → ℓ2 normalization.
pub fn build_feature_vectors(
    table: &RawFeatureTable,
    columns: &[&str],
) -> Result<Vec<FeatureVector>, PreprocessError> {
    let mut scaled: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for &name in columns {
        let col = table
            .column(name)
            .ok_or_else(|| PreprocessError::UnknownColumn(name.to_string()))?;
        scaled.push(min_max(&orient(&col.values, col.polarity)));
    }
    table
        .locality_ids()
        .iter()
        .enumerate()
        .map(|(row, id)| {
            let components: Vec<f64> = scaled.iter().map(|col| col[row]).collect();
            l2_normalize(id.clone(), &components)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn orient_examples() {
        assert_eq!(orient(&[1.0, 2.0, 3.0], Polarity::HigherIsRiskier), vec![1.0, 2.0, 3.0]);
        assert_eq!(orient(&[1.0, 2.0, 3.0], Polarity::LowerIsRiskier), vec![-1.0, -2.0, -3.0]);
        assert_eq!(orient(&[5.0], Polarity::HigherIsRiskier), vec![5.0]);
        assert_eq!(orient(&[5.0], Polarity::LowerIsRiskier), vec![-5.0]);
    }

    #[test]
    fn min_max_affine() {
        let out = min_max(&[2.0, 4.0, 6.0]);
        assert_abs_diff_eq!(out[0], 0.0);
        assert_abs_diff_eq!(out[1], 0.5);
        assert_abs_diff_eq!(out[2], 1.0);
    }

    #[test]
    fn min_max_already_scaled() {
        assert_eq!(min_max(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn min_max_constant_column_is_zeros() {
        assert_eq!(min_max(&[7.0, 7.0, 7.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn l2_normalize_345() {
        let v = l2_normalize("a", &[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(v.components()[0], 0.6);
        assert_abs_diff_eq!(v.components()[1], 0.8);
        assert_eq!(v.norm_class(), NormClass::Unit);
    }

    #[test]
    fn l2_normalize_zero_vector() {
        let v = l2_normalize("a", &[0.0, 0.0]).unwrap();
        assert_eq!(v.components(), &[0.0, 0.0]);
        assert_eq!(v.norm_class(), NormClass::Zero);
        assert!(v.is_zero());
    }

    #[test]
    fn l2_normalize_axis() {
        let v = l2_normalize("a", &[5.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.components(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn l2_normalize_rejects_negative() {
        assert!(matches!(
            l2_normalize("a", &[1.0, -0.1]),
            Err(PreprocessError::NegativeComponent { .. })
        ));
    }

    #[test]
    fn build_single_column_hand_trace() {
        // Column [2, 6]: min-max gives [0, 1]; normalization keeps the zero
        // vector as zero class and the other at exactly [1].
        let mut table = RawFeatureTable::new(vec!["a".into(), "b".into()]);
        table.add_column("x", vec![2.0, 6.0], Polarity::HigherIsRiskier).unwrap();
        let vs = build_feature_vectors(&table, &["x"]).unwrap();
        assert_eq!(vs[0].components(), &[0.0]);
        assert!(vs[0].is_zero());
        assert_eq!(vs[1].components(), &[1.0]);
    }

    #[test]
    fn build_is_deterministic_for_identical_rows() {
        let mut table = RawFeatureTable::new(vec!["a".into(), "b".into(), "c".into()]);
        table.add_column("x", vec![1.0, 1.0, 3.0], Polarity::HigherIsRiskier).unwrap();
        table.add_column("y", vec![2.0, 2.0, 5.0], Polarity::HigherIsRiskier).unwrap();
        let vs = build_feature_vectors(&table, &["x", "y"]).unwrap();
        assert_eq!(vs[0].components(), vs[1].components());
    }

    #[test]
    fn build_max_locality_gets_uniform_direction() {
        let mut table = RawFeatureTable::new(vec!["a".into(), "k".into()]);
        for name in ["x", "y", "z"] {
            table.add_column(name, vec![0.0, 9.0], Polarity::HigherIsRiskier).unwrap();
        }
        let vs = build_feature_vectors(&table, &["x", "y", "z"]).unwrap();
        let r = (1.0f64 / 3.0).sqrt();
        for &c in vs[1].components() {
            assert_abs_diff_eq!(c, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn build_unknown_column_errors() {
        let table = RawFeatureTable::new(vec!["a".into()]);
        assert!(matches!(
            build_feature_vectors(&table, &["nope"]),
            Err(PreprocessError::UnknownColumn(_))
        ));
    }

    #[test]
    fn lower_is_riskier_reverses_ranking() {
        let mut table = RawFeatureTable::new(vec!["a".into(), "b".into()]);
        table.add_column("x", vec![1.0, 2.0], Polarity::LowerIsRiskier).unwrap();
        let vs = build_feature_vectors(&table, &["x"]).unwrap();
        assert_eq!(vs[0].components(), &[1.0]);
        assert!(vs[1].is_zero());
    }

    #[test]
    fn table_rejects_ragged_and_nan_columns() {
        let mut table = RawFeatureTable::new(vec!["a".into(), "b".into()]);
        assert!(table
            .add_column("short", vec![1.0], Polarity::HigherIsRiskier)
            .is_err());
        assert!(table
            .add_column("nan", vec![1.0, f64::NAN], Polarity::HigherIsRiskier)
            .is_err());
    }
}
