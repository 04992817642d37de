//! Numerical tolerances shared by the library and its test suites.

/// Central finite-difference step.
pub const FD_EPS: f64 = 1e-5;
/// Maximum relative error accepted by gradient checks.
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Floor of the relative-error denominator in gradient checks.
pub const GRAD_REL_FLOOR: f64 = 1e-8;
/// Matching pursuit stops once the residual norm drops below this.
pub const RESIDUAL_STOP: f64 = 1e-10;
/// Gram condition estimate above which a ridge term is added.
pub const GRAM_COND_LIMIT: f64 = 1e12;
/// Ridge scale relative to the mean Gram diagonal.
pub const GRAM_RIDGE_SCALE: f64 = 1e-8;
/// Floor used in place of a zero modified n-gram precision.
pub const BLEU_SMOOTHING: f64 = 1e-9;
