//! Tolerances for every identity the crate checks.
//!
//! Closure checks are relative: the absolute discrepancy is compared against
//! `tol * max(|terms|..., 1)`, so all-zero inputs never divide by zero.

/// Product-rule closure: `b·Δx + x'·Δb` against `b'·x' − b·x`.
pub const PRODUCT_RULE: f64 = 1e-12;

/// Weighted mean residual and residual/predictor orthogonality of a fit.
pub const RESIDUAL_ORTHOGONALITY: f64 = 1e-10;

/// Relative threshold below which a column's residual norm, after projecting
/// out the preceding columns, marks it as linearly dependent.
pub const RANK: f64 = 1e-10;

/// Frequencies must sum to one within this before they are accepted as-is.
pub const FREQUENCY_SUM: f64 = 1e-9;

/// Decomposition terms against the direct mean difference.
pub const DECOMPOSITION_CLOSURE: f64 = 1e-10;

/// Per-predictor contributions against the report term they split.
pub const BREAKDOWN_SUM: f64 = 1e-12;

/// Price partition closure and agreement between its two forms.
pub const PRICE: f64 = 1e-12;

/// Post-selection frequencies against `q w / w̄` when fitness is supplied.
pub const SELECTION_CONSISTENCY: f64 = 1e-10;

/// Per-locus agreement of the two routes to Δp, and of `p α` with Δp.
pub const DELTA_P: f64 = 1e-12;

/// Σ b Δp = Cov(g, w) = Var(g), and b·Δp + p'·Δb = Δw̄.
pub const FISHER: f64 = 1e-10;

/// Lower bound on the selection term, which is a variance up to roundoff.
pub const VARIANCE_FLOOR: f64 = -1e-12;

/// Relative closure error `|lhs − rhs| / max(|scale|..., 1)`.
pub fn relative_error(lhs: f64, rhs: f64, scale: &[f64]) -> f64 {
    let denom = scale.iter().fold(1.0_f64, |m, s| m.max(s.abs()));
    (lhs - rhs).abs() / denom
}
