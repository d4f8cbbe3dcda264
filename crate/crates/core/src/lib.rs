//! Data-driven Koopman / Perron-Frobenius operator learning for
//! uncertainty propagation and reachability analysis.
//!
//! The pipeline: simulate snapshot pairs of a dynamical system, lift them
//! through a basis dictionary, least-squares-fit the Koopman matrix K (so
//! that psi(y) ~ K^T psi(x)), derive its Perron-Frobenius dual P through
//! the basis Gram matrix, and then push uncertainty forward as moment
//! vectors: m_{t+1} = K^T m_t. Densities and reachable supports are
//! reconstructed from moments, and a built-in Monte-Carlo pipeline serves
//! as the accuracy/timing reference.
//!
//! Convention note: the fit minimizes sum_k ||psi(y_k) - K^T psi(x_k)||^2,
//! i.e. K = G^+ A with G the Gram of the "before" snapshots and A the
//! before/after cross matrix. Some presentations print those two sums with
//! the labels exchanged; this library uses the convention above throughout,
//! which is the one the moment update m_{t+1} = K^T m_t relies on.

pub mod commands;
pub mod config;
pub mod dictionary;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod montecarlo;
pub mod numeric;
pub mod operator;
pub mod quadrature;
pub mod reference;
pub mod uncertainty;

pub use config::{preset, ExperimentConfig, Registry, PRESET_NAMES};
pub use dictionary::{
    custom_dictionary, gram_matrix, monomial_dictionary, rbf1d_dictionary, Dictionary,
    DictionarySpec, GramMatrix,
};
pub use dynamics::{
    build_snapshot_pairs, builtin_names, builtin_system, sample_domain, simulate_trajectory,
    DynamicalSystem, SnapshotPairs, Trajectory,
};
pub use error::{Error, Result};
pub use geometry::{BoxDomain, Region};
pub use montecarlo::{
    compare_pipelines, empirical_moments, ensemble_simulate, kde_estimate, ComparisonReport,
    Ensemble,
};
pub use operator::{edmd_fit, load_operator, save_operator, OperatorModel};
pub use quadrature::QuadratureSpec;
pub use uncertainty::{
    estimate_support, initial_moments, propagate_moments, reach_marginals, DensityField,
    MomentVector, UncertaintySet,
};
