//! Higher-order nonclassicality criteria for photon-subtracted and
//! photon-added states, computed from the base state's normalization-constant
//! ladder and checked against a brute-force oracle.
//!
//! ```
//! use nclass::{build_thermal, evaluate_all, CutoffPolicy, StateModification};
//!
//! let base = build_thermal(1.0, &CutoffPolicy::default().covering_order(10)).unwrap();
//! let report = evaluate_all(&base, StateModification::add(1), 1).unwrap();
//! let q = report.mandel_q.value().unwrap();
//! assert!((q - 1.0 / 3.0).abs() < 1e-10);
//! ```

pub mod cli;
pub mod criteria;
pub mod error;
pub mod fock_states;
pub mod moment_engine;
pub mod numeric;
pub mod oracle;

pub use criteria::{
    agarwal_tara, evaluate_all, evaluate_family, lee_dh, mandel_q, mandel_q_added, mandel_q_subtracted,
    mu_from_m, poisson_central_moment, q_ell_central, q_ell_normal, stirling2, AgarwalTara, CriteriaReport,
    CriterionValue, Flag, MomentPair,
};
pub use error::{Error, Result};
pub use fock_states::{
    build_coherent, build_fock, build_squeezed_vacuum, build_thermal, choose_cutoff, CutoffPolicy,
    NumberDistribution, StateFamily,
};
pub use moment_engine::{
    added_factorial_moment, antinormal_ladder, modified_moment, normal_ladder, reorder_coefficients,
    subtracted_factorial_moment, ModificationKind, MomentLadder, Ordering, StateModification,
};
pub use oracle::{
    direct_moments, equivalence_suite, oracle_add, oracle_subtract, EquivalenceConfig, EquivalenceReport,
    OracleResult,
};
