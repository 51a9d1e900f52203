//! Relative heat-risk indices for geographic localities.
//!
//! The pipeline preprocesses census-derived feature columns into unit
//! vectors, ranks localities against a uniform heuristic direction,
//! clusters the right tail of that similarity distribution, estimates a
//! reference density matrix per indicator by maximizing aggregate fidelity
//! over the unit-trace PSD cone, and scores every locality as the product
//! of its exposure and vulnerability fidelities.
//!
//! Modules follow the pipeline stages:
//!
//! - [`symmat`]: symmetric-matrix kernel with eigendecomposition, PSD square
//!   root, trace inner product, fidelity.
//! - [`preprocess`]: orientation, min-max scaling, ℓ2 normalization.
//! - [`reference`](mod@reference): heuristic direction, tail clustering, the
//!   conditional-gradient reference solver and its brute-force oracle.
//! - [`risk`]: rank-one and generalized risk indices.
//! - [`ingest`]: census CSV parsing, indicator derivation, and artifact
//!   export (CSV, JSON, GeoJSON, SVG).

pub mod ingest;
pub mod preprocess;
pub mod reference;
pub mod risk;
pub mod symmat;

pub use preprocess::{FeatureVector, NormClass, Polarity, RawFeatureTable};
pub use reference::{SolverOptions, SolverReport, TailCluster, TailRule};
pub use risk::RiskRecord;
pub use symmat::{DensityMatrix, SymMatrix};
