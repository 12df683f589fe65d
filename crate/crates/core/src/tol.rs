//! Shared numerical tolerances.
//!
//! Every threshold used by the geometry, the simplex code, the separators and
//! the branch-and-cut driver lives here so the whole stack agrees on what
//! "zero", "violated" and "integral" mean.
//!
//! | constant              | value  | used for                                      |
//! |-----------------------|--------|-----------------------------------------------|
//! | [`MARGIN`]            | 1e-9   | sign tests on safety-row margins              |
//! | [`PRIMAL_FEAS`]       | 1e-7   | simplex bound feasibility                     |
//! | [`DUAL_FEAS`]         | 1e-7   | simplex reduced-cost optimality               |
//! | [`PIVOT`]             | 1e-9   | smallest admissible pivot element             |
//! | [`CUT_VIOLATION`]     | 1e-6   | a separated cut must be violated by this much |
//! | [`CUT_VALIDITY`]      | 1e-9   | allowed slack when certifying cut validity    |
//! | [`INTEGRALITY`]       | 1e-6   | a binary this close to 0/1 counts as integral |
//! | [`EPS_N_NUDGE`]       | 1e-12  | nudge before flooring `epsilon * N`           |

/// Absolute tolerance on safety-row margins.
pub const MARGIN: f64 = 1e-9;

/// Primal feasibility tolerance of the simplex code.
pub const PRIMAL_FEAS: f64 = 1e-7;

/// Dual feasibility (reduced cost) tolerance of the simplex code.
pub const DUAL_FEAS: f64 = 1e-7;

/// Pivot elements smaller than this in magnitude are rejected.
pub const PIVOT: f64 = 1e-9;

/// Minimum violation for a separated cut to be emitted.
pub const CUT_VIOLATION: f64 = 1e-6;

/// Maximum violation tolerated when certifying a cut against enumerated points.
pub const CUT_VALIDITY: f64 = 1e-9;

/// Integrality tolerance for binary variables.
pub const INTEGRALITY: f64 = 1e-6;

/// Added to `epsilon * N` before flooring.
pub const EPS_N_NUDGE: f64 = 1e-12;

/// Number of pivots between basis refactorizations.
pub const REFACTOR_INTERVAL: usize = 50;

/// Degenerate pivots in a row before the simplex switches to Bland's rule.
pub const DEGENERATE_STREAK: usize = 60;

/// Cut terms smaller than this fraction of the row's largest coefficient are
/// folded into the right-hand side before the row reaches the LP.
pub const CUT_TERM_REL: f64 = 1e-3;
