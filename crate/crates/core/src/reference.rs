//! Reference-matrix estimation: heuristic direction, similarity ranking,
//! tail clustering, and a conditional-gradient solver that maximizes
//! aggregate fidelity over the unit-trace PSD cone.

use thiserror::Error;

use crate::preprocess::FeatureVector;
use crate::symmat::{eig, DensityMatrix, MatrixError, SymMatrix, QUADRATIC_FORM_FLOOR};

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("heuristic vector needs dimension at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: vector '{locality_id}' has dim {got}, heuristic has dim {expected}")]
    DimMismatch { locality_id: String, got: usize, expected: usize },
    #[error("similarity set is empty")]
    EmptySet,
    #[error("tail cluster is empty at threshold {threshold:.6} ({rule:?}); try a looser rule such as Mean")]
    EmptyTail { threshold: f64, rule: TailRule },
    #[error("cluster members span multiple dimensions: {0:?}")]
    MixedDims(Vec<usize>),
    #[error("every cluster member is a zero vector; the objective carries no information")]
    AllMembersZero,
    #[error("oracle supports dimension <= 3, got {0}")]
    OracleDim(usize),
    #[error("oracle grid step must be in (0, 0.2], got {0}")]
    OracleStep(f64),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// The uniform unit vector (1/√L, …, 1/√L) used as a provisional
/// high-risk direction.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicVector {
    components: Vec<f64>,
}

impl HeuristicVector {
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

pub fn heuristic_vector(dim: usize) -> Result<HeuristicVector, ReferenceError> {
    if dim == 0 {
        return Err(ReferenceError::ZeroDimension);
    }
    let value = 1.0 / (dim as f64).sqrt();
    Ok(HeuristicVector { components: vec![value; dim] })
}

#[derive(Debug, Clone)]
pub struct SimilarityEntry {
    pub locality_id: String,
    pub vector: FeatureVector,
    pub similarity: f64,
}

/// Feature vectors ranked by inner product against the heuristic
/// direction. Entries keep the vector alongside the scalar so the tail
/// construction can hand the member vectors to the solver.
#[derive(Debug, Clone)]
pub struct SimilaritySet {
    entries: Vec<SimilarityEntry>,
}

impl SimilaritySet {
    pub fn entries(&self) -> &[SimilarityEntry] {
        &self.entries
    }

    pub fn similarities(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.similarity)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.similarities().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (n−1 denominator); 0 for a single entry.
    pub fn std_dev(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self.similarities().map(|s| (s - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    #[cfg(test)]
    pub(crate) fn from_entries(entries: Vec<SimilarityEntry>) -> Self {
        SimilaritySet { entries }
    }
}

pub fn similarity_set(
    vectors: &[FeatureVector],
    h: &HeuristicVector,
) -> Result<SimilaritySet, ReferenceError> {
    if vectors.is_empty() {
        return Err(ReferenceError::EmptySet);
    }
    let entries = vectors
        .iter()
        .map(|v| {
            if v.dim() != h.dim() {
                return Err(ReferenceError::DimMismatch {
                    locality_id: v.locality_id().to_string(),
                    got: v.dim(),
                    expected: h.dim(),
                });
            }
            Ok(SimilarityEntry {
                locality_id: v.locality_id().to_string(),
                vector: v.clone(),
                similarity: v.dot(h.components()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimilaritySet { entries })
}

/// Threshold rule for selecting the right tail of the similarity
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailRule {
    Mean,
    MeanPlusStd,
}

impl TailRule {
    fn threshold(self, set: &SimilaritySet) -> f64 {
        match self {
            TailRule::Mean => set.mean(),
            TailRule::MeanPlusStd => set.mean() + set.std_dev(),
        }
    }
}

/// Members of the similarity right tail; the conditional high-risk states
/// handed to the reference solver.
#[derive(Debug, Clone)]
pub struct TailCluster {
    members: Vec<FeatureVector>,
    threshold: f64,
    rule: TailRule,
}

impl TailCluster {
    /// Manual constructor for callers that already hold the member set
    /// (tests, oracle comparisons).
    pub fn from_members(
        members: Vec<FeatureVector>,
        threshold: f64,
        rule: TailRule,
    ) -> Result<Self, ReferenceError> {
        if members.is_empty() {
            return Err(ReferenceError::EmptyTail { threshold, rule });
        }
        Ok(TailCluster { members, threshold, rule })
    }

    pub fn members(&self) -> &[FeatureVector] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn rule(&self) -> TailRule {
        self.rule
    }

    pub fn dim(&self) -> Result<usize, ReferenceError> {
        let dims: Vec<usize> = self.members.iter().map(|m| m.dim()).collect();
        let first = dims[0];
        if dims.iter().any(|&d| d != first) {
            return Err(ReferenceError::MixedDims(dims));
        }
        Ok(first)
    }
}

/// Strict ">" membership, reading the tail as everything to the right of
/// the threshold.
pub fn tail_cluster(set: &SimilaritySet, rule: TailRule) -> Result<TailCluster, ReferenceError> {
    tail_cluster_with(set, rule, false)
}

/// Variant with configurable boundary handling: `inclusive` switches
/// membership from ">" to "≥".
pub fn tail_cluster_with(
    set: &SimilaritySet,
    rule: TailRule,
    inclusive: bool,
) -> Result<TailCluster, ReferenceError> {
    if set.is_empty() {
        return Err(ReferenceError::EmptySet);
    }
    let threshold = rule.threshold(set);
    let members: Vec<FeatureVector> = set
        .entries()
        .iter()
        .filter(|e| {
            if inclusive {
                e.similarity >= threshold
            } else {
                e.similarity > threshold
            }
        })
        .map(|e| e.vector.clone())
        .collect();
    if members.is_empty() {
        return Err(ReferenceError::EmptyTail { threshold, rule });
    }
    Ok(TailCluster { members, threshold, rule })
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop once the Frank-Wolfe gap certificate falls to this level.
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { gap_tol: 1e-8, max_iter: 10_000 }
    }
}

/// Solver diagnostics plus the estimated reference matrix.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_gap: f64,
    pub objective: f64,
    pub estimate: DensityMatrix,
    pub converged: bool,
    /// Objective value at the start of each iteration; non-decreasing.
    pub objective_trace: Vec<f64>,
}

/// Σ_j F(e_je_jᵀ, ρ) = Σ_j √(e_jᵀ ρ e_j) over the cluster members: the
/// reference-estimation objective at ρ, recomputable independently of any
/// solver report.
pub fn aggregate_fidelity(cluster: &TailCluster, rho: &DensityMatrix) -> f64 {
    cluster_objective(cluster.members(), rho.mat())
}

/// Σ_j √(e_jᵀ ρ e_j) over the cluster members.
fn cluster_objective(members: &[FeatureVector], rho: &SymMatrix) -> f64 {
    members
        .iter()
        .map(|e| {
            rho.quadratic_form(e.components())
                .expect("dims checked at cluster construction")
                .max(0.0)
                .sqrt()
        })
        .sum()
}

const GOLDEN_INV: f64 = 0.618_033_988_749_894_8;
const LINE_SEARCH_TOL: f64 = 1e-12;

/// Exact line search for max_t g(t), t ∈ [0,1], where
/// g(t) = Σ_j √((1−t)·a_j + t·b_j) is concave in t.
fn golden_section_max(a: &[f64], b: &[f64]) -> f64 {
    let g = |t: f64| -> f64 {
        a.iter()
            .zip(b)
            .map(|(&aj, &bj)| ((1.0 - t) * aj + t * bj).max(0.0).sqrt())
            .sum()
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut c = hi - GOLDEN_INV * (hi - lo);
    let mut d = lo + GOLDEN_INV * (hi - lo);
    let mut gc = g(c);
    let mut gd = g(d);
    while hi - lo > LINE_SEARCH_TOL {
        if gc < gd {
            lo = c;
            c = d;
            gc = gd;
            d = lo + GOLDEN_INV * (hi - lo);
            gd = g(d);
        } else {
            hi = d;
            d = c;
            gd = gc;
            c = hi - GOLDEN_INV * (hi - lo);
            gc = g(c);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The maximum of a concave g on [0,1] may sit exactly on a boundary;
    // snap if the boundary value is at least as good.
    let gm = g(mid);
    if g(1.0) >= gm {
        1.0
    } else if g(0.0) >= gm {
        0.0
    } else {
        mid
    }
}

/// Conditional-gradient (Frank-Wolfe) maximization of
/// f(ρ) = Σ_j √(e_jᵀ ρ e_j) over {ρ ⪰ 0, Tr ρ = 1}.
///
/// The linear subproblem max_s ⟨∇f(ρ), s⟩ over the spectrahedron is solved
/// exactly by the top eigenvector of the gradient; the gap
/// λ_max(∇f) − ⟨∇f, ρ⟩ certifies suboptimality of the concave objective.
/// Starts from ρ₀ = I/q, which keeps every quadratic form strictly
/// positive for non-degenerate members.
pub fn estimate_reference(
    cluster: &TailCluster,
    opts: &SolverOptions,
) -> Result<SolverReport, ReferenceError> {
    let dim = cluster.dim()?;
    let members = cluster.members();
    if members.iter().all(|m| m.is_zero()) {
        return Err(ReferenceError::AllMembersZero);
    }

    let mut rho = SymMatrix::identity(dim).scale(1.0 / dim as f64);
    let mut objective_trace = Vec::new();
    let mut iterations = 0;
    let mut final_gap = f64::INFINITY;
    let mut converged = false;

    // `iterations` counts applied updates; the pass at k == max_iter only
    // evaluates the stopping certificate for the final iterate.
    for k in 0..=opts.max_iter {
        let objective = cluster_objective(members, &rho);
        objective_trace.push(objective);

        // ∇f(ρ) = Σ_j e_je_jᵀ / (2√(e_jᵀρe_j)), with the quadratic form
        // floored to keep the step finite when a member hits the boundary.
        // A zero member has a zero numerator and drops out entirely.
        let mut grad = SymMatrix::zeros(dim);
        let mut forms = Vec::with_capacity(members.len());
        for e in members {
            let form = rho
                .quadratic_form(e.components())
                .expect("dims checked")
                .max(0.0);
            forms.push(form);
            if e.is_zero() {
                continue;
            }
            let weight = 1.0 / (2.0 * form.max(QUADRATIC_FORM_FLOOR).sqrt());
            grad = SymMatrix::lin_comb(1.0, &grad, weight, &SymMatrix::outer(e.components()))
                .expect("same dim");
        }

        let dec = eig(&grad)?;
        let top = dec.eigenvector(dim - 1).to_vec();
        let lambda_max = dec.max_eigenvalue();
        let grad_dot_rho = crate::symmat::trace_inner(&grad, &rho)?;
        let gap = (lambda_max - grad_dot_rho).max(0.0);
        final_gap = gap;
        iterations = k;

        if gap <= opts.gap_tol {
            converged = true;
            break;
        }
        if k == opts.max_iter {
            log::warn!(
                "reference solver hit the {} iteration cap with gap {gap:.3e}",
                opts.max_iter
            );
            break;
        }

        // Along ρ(t) = (1−t)ρ + t·uuᵀ the forms are affine, so the line
        // search works on the (a_j, b_j) pairs directly.
        let b: Vec<f64> = members
            .iter()
            .map(|e| e.dot(&top).powi(2))
            .collect();
        let mut t = golden_section_max(&forms, &b);
        let vertex = SymMatrix::outer(&top);

        let step = |t: f64| -> SymMatrix {
            SymMatrix::lin_comb(1.0 - t, &rho, t, &vertex).expect("same dim")
        };
        let mut next = step(t);
        let mut next_obj = cluster_objective(members, &next);
        if next_obj < objective - 1e-12 {
            // Fall back to the open-loop schedule if the search stalled.
            t = 2.0 / (k as f64 + 2.0);
            next = step(t);
            next_obj = cluster_objective(members, &next);
            if next_obj < objective - 1e-12 {
                log::warn!(
                    "conditional-gradient line search stalled at iteration {k} (gap {gap:.3e})"
                );
                break;
            }
        }
        rho = next;
        // Keep the iterate exactly on the unit-trace slice.
        let trace = rho.trace();
        if trace > 0.0 && (trace - 1.0).abs() > 1e-15 {
            rho = rho.scale(1.0 / trace);
        }
    }

    let estimate = DensityMatrix::new(rho.clone())?;
    let objective = cluster_objective(members, &rho);
    Ok(SolverReport {
        iterations,
        final_gap,
        objective,
        estimate,
        converged,
        objective_trace,
    })
}

/// Brute-force verifier for `estimate_reference`: exhaustively scans
/// unit-trace PSD matrices parameterized by a simplex grid of eigenvalues
/// and an angle grid of rotations, entirely independent of the
/// conditional-gradient path. Objective of the returned matrix is within
/// O(grid_step) of the true optimum.
pub fn reference_oracle(
    cluster: &TailCluster,
    grid_step: f64,
) -> Result<DensityMatrix, ReferenceError> {
    if !(grid_step > 0.0 && grid_step <= 0.2) {
        return Err(ReferenceError::OracleStep(grid_step));
    }
    let dim = cluster.dim()?;
    if dim > 3 {
        return Err(ReferenceError::OracleDim(dim));
    }
    let members = cluster.members();
    if members.iter().all(|m| m.is_zero()) {
        return Err(ReferenceError::AllMembersZero);
    }

    let best = match dim {
        1 => SymMatrix::diag(&[1.0]),
        2 => oracle_2d(members, grid_step),
        _ => oracle_3d(members, grid_step),
    };
    Ok(DensityMatrix::new(best)?)
}

/// ρ(θ, t) = R diag(t, 1−t) Rᵀ with R the rotation by θ. θ only needs
/// [0, π): column sign flips leave R diag Rᵀ unchanged. The scan works on
/// precomputed member-column dot products; only the winner becomes a
/// matrix.
fn oracle_2d(members: &[FeatureVector], grid_step: f64) -> SymMatrix {
    let n = (1.0 / grid_step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.5);
    for ia in 0..n {
        let theta = std::f64::consts::PI * ia as f64 / n as f64;
        let (s, c) = theta.sin_cos();
        // squared projections of each member onto the rotated axes
        let dots: Vec<(f64, f64)> = members
            .iter()
            .map(|e| {
                let v = e.components();
                ((c * v[0] + s * v[1]).powi(2), (-s * v[0] + c * v[1]).powi(2))
            })
            .collect();
        for it in 0..=n {
            let t = it as f64 / n as f64;
            let obj: f64 = dots
                .iter()
                .map(|&(d1, d2)| (t * d1 + (1.0 - t) * d2).sqrt())
                .sum();
            if obj > best.0 {
                best = (obj, theta, t);
            }
        }
    }
    let (_, theta, t) = best;
    let (s, c) = theta.sin_cos();
    SymMatrix::new(
        2,
        vec![
            t * c * c + (1.0 - t) * s * s,
            t * c * s - (1.0 - t) * s * c,
            t * c * s - (1.0 - t) * s * c,
            t * s * s + (1.0 - t) * c * c,
        ],
    )
    .expect("2x2")
}

/// Eigenvalues on the 2-simplex grid, rotations as Z-Y-Z Euler angles.
/// Each angle only needs [0, π): diagonal sign matrices commute with the
/// eigenvalue matrix, and eigenvalue permutations are enumerated by the
/// simplex grid itself. Rotations are the outer loop so the member
/// projections are computed once per rotation.
fn oracle_3d(members: &[FeatureVector], grid_step: f64) -> SymMatrix {
    let n = (1.0 / grid_step).round() as usize;
    let simplex: Vec<[f64; 3]> = (0..=n)
        .flat_map(|i| {
            (0..=(n - i)).map(move |j| {
                let l1 = i as f64 / n as f64;
                let l2 = j as f64 / n as f64;
                [l1, l2, 1.0 - l1 - l2]
            })
        })
        .collect();
    let angles: Vec<f64> = (0..n)
        .map(|ia| std::f64::consts::PI * ia as f64 / n as f64)
        .collect();

    let mut best_obj = f64::NEG_INFINITY;
    let mut best_rotation = euler_zyz(0.0, 0.0, 0.0);
    let mut best_lambdas = [1.0 / 3.0; 3];
    let mut dots = vec![[0.0_f64; 3]; members.len()];
    for &alpha in &angles {
        for &beta in &angles {
            for &gamma in &angles {
                let r = euler_zyz(alpha, beta, gamma);
                for (dot, e) in dots.iter_mut().zip(members) {
                    let v = e.components();
                    for k in 0..3 {
                        dot[k] =
                            (r[0][k] * v[0] + r[1][k] * v[1] + r[2][k] * v[2]).powi(2);
                    }
                }
                for lambdas in &simplex {
                    let mut obj = 0.0;
                    for dot in &dots {
                        obj += (lambdas[0] * dot[0]
                            + lambdas[1] * dot[1]
                            + lambdas[2] * dot[2])
                            .sqrt();
                    }
                    if obj > best_obj {
                        best_obj = obj;
                        best_rotation = r;
                        best_lambdas = *lambdas;
                    }
                }
            }
        }
    }

    let mut entries = vec![0.0; 9];
    for row in 0..3 {
        for col in 0..3 {
            let mut acc = 0.0;
            for (k, &lk) in best_lambdas.iter().enumerate() {
                acc += lk * best_rotation[row][k] * best_rotation[col][k];
            }
            entries[row * 3 + col] = acc;
        }
    }
    SymMatrix::new(3, entries).expect("3x3")
}

fn euler_zyz(alpha: f64, beta: f64, gamma: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    [
        [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
        [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
        [-sb * cg, sb * sg, cb],
    ]
}

/// Unit eigenvector of the largest eigenvalue, sign-fixed so the
/// largest-magnitude component is positive. A degenerate top eigenvalue
/// (gap < 1e-12) logs a warning and breaks the tie lexicographically.
pub fn principal_eigenvector(m: &DensityMatrix) -> Result<Vec<f64>, ReferenceError> {
    let dec = eig(m.mat())?;
    let n = m.dim();
    let top = dec.max_eigenvalue();
    let mut candidates: Vec<Vec<f64>> = (0..n)
        .filter(|&k| top - dec.eigenvalues()[k] < 1e-12)
        .map(|k| sign_fix(dec.eigenvector(k)))
        .collect();
    if candidates.len() > 1 {
        log::warn!(
            "top eigenvalue degenerate (gap < 1e-12); breaking tie lexicographically \
             among {} eigenvectors",
            candidates.len()
        );
        candidates.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }
    Ok(candidates.pop().expect("dim >= 1"))
}

fn sign_fix(v: &[f64]) -> Vec<f64> {
    let lead = v
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite"))
        .unwrap_or(1.0);
    if lead < 0.0 {
        v.iter().map(|x| -x).collect()
    } else {
        v.to_vec()
    }
}
