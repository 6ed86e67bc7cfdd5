//! Numeric tolerances shared across the crate.

/// Absolute tolerance for a transition row to count as summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Tolerance used when comparing dynamic-programming values against an
/// enumeration oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// Number of bisection steps used to locate a critical truncation threshold.
/// `2^-40 < 1e-9`.
pub const CRITICAL_BISECTION_STEPS: usize = 40;

/// Distance from a critical threshold that boundary probes keep.
pub const BOUNDARY_PROBE: f64 = 1e-6;

/// Default cap on `|A|^(|S| H)` for exhaustive policy enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

/// Default cap on the number of samples a learner may request per batch.
pub const DEFAULT_SAMPLE_BUDGET: u64 = 10_000_000;
