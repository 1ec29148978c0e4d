//! Numeric tolerances shared by every module.

/// Default block-norm threshold for support detection on exact inputs.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Agreement required between a certified constant and its closed form.
pub const CERT_TOL: f64 = 1e-8;

/// Slack allowed when checking an inequality numerically.
pub const INEQUALITY_SLACK: f64 = 1e-10;

/// Max-entry tolerance for `P P - P` on orthogonal projectors.
pub const IDEMPOTENCE_TOL: f64 = 1e-12;

/// Relative gap under which two block correlations count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Relative size of the smallest `|R_ii|` below which a QR factor is rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Relative slack on decay ratios, absorbing rounding in `a / (a / alpha)`.
pub const DECAY_RATIO_TOL: f64 = 1e-12;

/// Smallest eigenvalue, relative to the spectral norm, accepted as positive definite.
pub const PD_MARGIN: f64 = 1e-12;

/// Lower end of the bisection bracket used when inverting `g_K`.
pub const G_INVERSE_FLOOR: f64 = 1e-12;

/// Default cap on the number of supports enumerated by the RIP certifier.
pub const DEFAULT_RIP_BUDGET: u64 = 2_000_000;
