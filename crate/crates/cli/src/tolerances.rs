//! Pinned tolerances and thresholds of the verification suites.

/// `|kl2_fast - kl2_direct|` on normalized values.
pub const KL_ORACLE: f64 = 1e-9;

/// Unnormalized `S(a, b; 2^s)` against its closed form or zero.
pub const KLO2_NUMERIC: f64 = 1e-9;

/// Product of the split sums against the unsplit sum.
pub const MULTIPLICATIVITY: f64 = 1e-9;

/// Largest log-log slope of a per-level maximum ratio that counts as stable.
pub const BOUND_SLOPE: f64 = 0.05;

/// Largest log-log slope of the maximum generic count against `p`.
pub const GENERIC_COUNT_SLOPE: f64 = 0.1;

/// `|lhs - rhs|` of the Voronoi check.
pub const VORONOI: f64 = 1e-4;

/// Allowed growth of the calibrated `B^±` constant on the validation half of the grid.
pub const BPM_SLACK: f64 = 2.0;

/// Exponent toward Ramanujan–Petersson used by the moment envelopes.
pub const THETA: f64 = 7.0 / 64.0;
