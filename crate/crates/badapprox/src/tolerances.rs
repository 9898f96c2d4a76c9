//! Numerical tolerances used across the crate, kept in one place.

/// Target accuracy of the zeta evaluation.
pub const ZETA_ACCURACY: f64 = 1e-14;

/// Relative band inside which an analytic L is declared equal to η.
pub const ANALYTIC_TIE: f64 = 1e-9;

/// Number of numeric error bars inside which a grid L counts as a tie.
pub const NUMERIC_TIE_BARS: f64 = 3.0;

/// Allowed |det| deviation for a unimodular basis.
pub const UNIMODULAR: f64 = 1e-9;

/// Absolute bisection width for r_psi.
pub const BISECTION: f64 = 1e-12;

/// Relative slack on the schedule bounds, absorbing summation roundoff.
pub const SCHEDULE_SLACK: f64 = 1e-12;

/// Margin (in child-cylinder units) used when certifying containment
/// or intersection of a slab and a cylinder.
pub const CYLINDER_MARGIN: f64 = 1e-6;

/// Relative shrink of ψ applied before certifying containment.
pub const SHRINK: f64 = 1e-9;

/// Largest number of lattice points an enumeration may visit.
pub const ENUMERATION_BUDGET: u128 = 100_000_000;

/// Largest number of tree nodes a builder may hold.
pub const NODE_BUDGET: u128 = 10_000_000;
