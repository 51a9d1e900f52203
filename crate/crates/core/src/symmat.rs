//! Dense symmetric-matrix kernel: Jacobi eigendecomposition, PSD square
//! root, trace inner product, and the fidelity measure between unit-trace
//! PSD matrices.

use thiserror::Error;

use crate::preprocess::{FeatureVector, NormClass};

/// Numerical slack below zero tolerated for "positive semi-definite".
pub const EPS_PSD: f64 = 1e-9;

/// Numerical slack around one tolerated for "unit trace".
pub const EPS_TRACE: f64 = 1e-9;

/// Floor applied inside gradient-style divisions by near-zero quadratic forms.
pub const QUADRATIC_FORM_FLOOR: f64 = 1e-14;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix dimension must be at least 1")]
    ZeroDimension,
    #[error("expected {expected} entries for a {dim}x{dim} matrix, got {got}")]
    EntryCount { dim: usize, expected: usize, got: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("vector length {len} does not match matrix dimension {dim}")]
    VectorDim { dim: usize, len: usize },
    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:.3e} below -{slack:.0e}")]
    NotPsd { eigenvalue: f64, slack: f64 },
    #[error("trace {trace} not within {slack:.0e} of 1")]
    TraceNotUnit { trace: f64, slack: f64 },
    #[error(
        "Jacobi eigendecomposition did not converge after {iterations} sweeps \
         (matrix Frobenius norm {norm:.6e})"
    )]
    EigNonConvergence { norm: f64, iterations: usize },
    #[error(
        "one-sided Jacobi SVD did not converge after {iterations} sweeps \
         (matrix Frobenius norm {norm:.6e})"
    )]
    SvdNonConvergence { norm: f64, iterations: usize },
    #[error("cannot project onto the spectrahedron: trace of clamped spectrum is {trace:.3e}")]
    DegenerateProjection { trace: f64 },
}

/// Dense symmetric matrix in row-major storage. Construction symmetrizes
/// the input as (A + Aᵀ)/2, so `get(i, j) == get(j, i)` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self, MatrixError> {
        if dim == 0 {
            return Err(MatrixError::ZeroDimension);
        }
        if entries.len() != dim * dim {
            return Err(MatrixError::EntryCount {
                dim,
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(MatrixError::NonFinite);
        }
        let mut m = SymMatrix { dim, entries };
        m.symmetrize();
        Ok(m)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        SymMatrix { dim, entries: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.entries[i * values.len() + i] = v;
        }
        m
    }

    /// Rank-one matrix vvᵀ.
    pub fn outer(v: &[f64]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.entries[i * dim + j] = v[i] * v[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.dim + j] = value;
    }

    fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, avg);
                self.set(j, i, avg);
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// vᵀ A v.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64, MatrixError> {
        if v.len() != self.dim {
            return Err(MatrixError::VectorDim { dim: self.dim, len: v.len() });
        }
        let mut acc = 0.0;
        for i in 0..self.dim {
            let row: f64 = self.entries[i * self.dim..(i + 1) * self.dim]
                .iter()
                .zip(v)
                .map(|(a, x)| a * x)
                .sum();
            acc += v[i] * row;
        }
        Ok(acc)
    }

    pub fn scale(&self, factor: f64) -> Self {
        SymMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|x| x * factor).collect(),
        }
    }

    /// a·A + b·B.
    pub fn lin_comb(a: f64, lhs: &SymMatrix, b: f64, rhs: &SymMatrix) -> Result<Self, MatrixError> {
        if lhs.dim != rhs.dim {
            return Err(MatrixError::DimMismatch { left: lhs.dim, right: rhs.dim });
        }
        let entries = lhs
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(SymMatrix { dim: lhs.dim, entries })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self, MatrixError> {
        Self::lin_comb(1.0, self, -1.0, other)
    }
}

/// A · B as a raw row-major buffer (the product of two symmetric matrices
/// is not symmetric in general).
fn mat_mul(a: &SymMatrix, b: &SymMatrix) -> Vec<f64> {
    let n = a.dim;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b.get(k, j);
            }
        }
    }
    out
}

/// Eigendecomposition A = VΛVᵀ with eigenvalues ascending and orthonormal
/// eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvector for `eigenvalues()[k]`.
    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.eigenvectors[k]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("dim >= 1")
    }

    /// VΛVᵀ with the spectrum mapped through `f`.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.eigenvalues.len();
        let mut out = SymMatrix::zeros(n);
        for (k, vk) in self.eigenvectors.iter().enumerate() {
            let lambda = f(self.eigenvalues[k]);
            if lambda == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    let val = out.get(i, j) + lambda * vk[i] * vk[j];
                    out.set(i, j, val);
                }
            }
        }
        out.symmetrize();
        out
    }
}

/// Cyclic Jacobi eigendecomposition. Pipeline dimensions are 2 and 3, so
/// simplicity and accuracy win over speed; sweeps stop once the
/// off-diagonal mass falls below `JACOBI_OFF_TOL` relative to the norm.
pub fn eig(a: &SymMatrix) -> Result<EigenDecomposition, MatrixError> {
    let n = a.dim;
    let mut m = a.clone();
    let mut v = SymMatrix::identity(n);
    let scale = a.frobenius_norm().max(1.0);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = {
            let mut acc = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    acc += m.get(p, q).abs();
                }
            }
            acc
        };
        if off <= JACOBI_OFF_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // Smaller-magnitude root of t^2 + 2θt - 1 = 0 keeps the
                // rotation angle below 45° (numerically stable choice).
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(MatrixError::EigNonConvergence {
            norm: a.frobenius_norm(),
            iterations: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(i, i)
            .partial_cmp(&m.get(j, j))
            .expect("eigenvalues are finite")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| m.get(k, k)).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| (0..n).map(|i| v.get(i, k)).collect())
        .collect();
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Matrix square root of a PSD matrix via its eigendecomposition.
/// Eigenvalues within `-EPS_PSD` of zero are clamped to zero before the
/// square root; anything more negative is rejected. Eigenvalues that are
/// numerically zero (below 1e-13 relative to the matrix norm, the Jacobi
/// round-off scale) are also flattened to zero; the square root would
/// otherwise amplify O(ε) dust into O(√ε) spurious rank.
pub fn sqrt_psd(a: &SymMatrix) -> Result<SymMatrix, MatrixError> {
    let dec = eig(a)?;
    let min = dec.min_eigenvalue();
    if min < -EPS_PSD {
        return Err(MatrixError::NotPsd { eigenvalue: min, slack: EPS_PSD });
    }
    let zero_floor = 1e-13 * a.frobenius_norm();
    Ok(dec.reassemble(|lambda| if lambda <= zero_floor { 0.0 } else { lambda.sqrt() }))
}

/// ⟨P, Q⟩ = Tr(PQ) = Σᵢⱼ `P[i,j]·Q[i,j]` for symmetric P, Q.
pub fn trace_inner(p: &SymMatrix, q: &SymMatrix) -> Result<f64, MatrixError> {
    if p.dim != q.dim {
        return Err(MatrixError::DimMismatch { left: p.dim, right: q.dim });
    }
    Ok(p.entries.iter().zip(&q.entries).map(|(a, b)| a * b).sum())
}

/// Symmetric PSD matrix with unit trace (an element of the spectrahedron).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: SymMatrix,
}

impl DensityMatrix {
    /// Validates the spectrahedron membership: smallest eigenvalue within
    /// `-EPS_PSD` and trace within `EPS_TRACE` of 1.
    pub fn new(mat: SymMatrix) -> Result<Self, MatrixError> {
        let trace = mat.trace();
        if (trace - 1.0).abs() > EPS_TRACE {
            return Err(MatrixError::TraceNotUnit { trace, slack: EPS_TRACE });
        }
        let dec = eig(&mat)?;
        let min = dec.min_eigenvalue();
        if min < -EPS_PSD {
            return Err(MatrixError::NotPsd { eigenvalue: min, slack: EPS_PSD });
        }
        Ok(DensityMatrix { mat })
    }

    /// Nearest spectrahedron point: clamps negative eigenvalues to zero and
    /// rescales the trace to 1. Accepts input outside the `new` slack, e.g.
    /// matrices rounded to a few decimals.
    pub fn project(mat: &SymMatrix) -> Result<Self, MatrixError> {
        let dec = eig(mat)?;
        let clamped = dec.reassemble(|lambda| lambda.max(0.0));
        let trace = clamped.trace();
        if trace <= 0.0 {
            return Err(MatrixError::DegenerateProjection { trace });
        }
        Ok(DensityMatrix { mat: clamped.scale(1.0 / trace) })
    }

    /// Rank-one projector uuᵀ of a unit vector.
    pub fn pure(u: &[f64]) -> Result<Self, MatrixError> {
        DensityMatrix::new(SymMatrix::outer(u))
    }

    /// I/q, the barycenter of the spectrahedron.
    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            mat: SymMatrix::identity(dim).scale(1.0 / dim as f64),
        }
    }

    pub fn mat(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim
    }
}

/// Singular values of a dense n×n matrix by one-sided Jacobi: rotate
/// column pairs until mutually orthogonal, then read off column norms.
/// Small singular values come out of column norms directly, so their
/// absolute error stays at machine scale instead of √ε. Columns whose
/// norm has shrunk to round-off (≤ 1e-14 of the matrix norm) are left
/// alone; their residue re-correlates under further rotations and would
/// never satisfy the relative orthogonality test.
fn singular_values(mut c: Vec<f64>, n: usize) -> Result<Vec<f64>, MatrixError> {
    const MAX_SWEEPS: usize = 60;
    const ORTH_TOL: f64 = 1e-15;
    const NEGLIGIBLE_COL: f64 = 1e-14;
    let scale: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let col_floor = (NEGLIGIBLE_COL * scale).powi(2);
    let col_dot = |c: &[f64], p: usize, q: usize| -> f64 {
        (0..n).map(|i| c[i * n + p] * c[i * n + q]).sum()
    };
    for _ in 0..MAX_SWEEPS {
        let mut orthogonal = true;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = col_dot(&c, p, p);
                let beta = col_dot(&c, q, q);
                let gamma = col_dot(&c, p, q);
                if alpha <= col_floor
                    || beta <= col_floor
                    || gamma.abs() <= ORTH_TOL * (alpha * beta).sqrt()
                {
                    continue;
                }
                orthogonal = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..n {
                    let cip = c[i * n + p];
                    let ciq = c[i * n + q];
                    c[i * n + p] = cs * cip - sn * ciq;
                    c[i * n + q] = sn * cip + cs * ciq;
                }
            }
        }
        if orthogonal {
            let sigma = (0..n).map(|j| col_dot(&c, j, j).sqrt()).collect();
            return Ok(sigma);
        }
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    Err(MatrixError::SvdNonConvergence { norm, iterations: MAX_SWEEPS })
}

/// Fidelity F(P,Q) = Tr√(P^{1/2} Q P^{1/2}) between two unit-trace PSD
/// matrices, evaluated as the equal nuclear norm Σᵢ σᵢ(Q^{1/2}P^{1/2})
/// (σᵢ² are exactly the eigenvalues of P^{1/2}QP^{1/2}, but the singular
/// values avoid squaring small spectrum into round-off). Symmetric in its
/// arguments and valued in [0, 1]; the final value is clamped into that
/// range once the 1e-9 tolerance check passes, so downstream code can
/// rely on the exact range.
pub fn fidelity(p: &DensityMatrix, q: &DensityMatrix) -> Result<f64, MatrixError> {
    if p.dim() != q.dim() {
        return Err(MatrixError::DimMismatch { left: p.dim(), right: q.dim() });
    }
    let sqrt_p = sqrt_psd(&p.mat)?;
    let sqrt_q = sqrt_psd(&q.mat)?;
    let product = mat_mul(&sqrt_q, &sqrt_p);
    let value: f64 = singular_values(product, p.dim())?.iter().sum();
    debug_assert!(
        (-EPS_PSD..=1.0 + EPS_PSD).contains(&value),
        "fidelity {value} outside tolerance band"
    );
    Ok(value.clamp(0.0, 1.0))
}

/// Fast path for a rank-one first argument: F(eeᵀ, ρ) = √(eᵀρe).
/// Zero-class vectors score 0.
pub fn fidelity_pure(e: &FeatureVector, rho: &DensityMatrix) -> Result<f64, MatrixError> {
    if e.norm_class() == NormClass::Zero {
        return Ok(0.0);
    }
    let form = rho.mat.quadratic_form(e.components())?;
    let value = form.max(0.0).sqrt();
    debug_assert!(value <= 1.0 + EPS_PSD);
    Ok(value.clamp(0.0, 1.0))
}
