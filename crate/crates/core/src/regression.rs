//! Frequency-weighted least squares with an explicit intercept column.
//!
//! The fit solves `min Σ_j q_j (z_j − Σ_i b_i x_ij)²` by Householder QR of the
//! row-scaled system `√q_j x_ij`, never by forming normal equations. Columns
//! are factored in declared order; a column whose residual norm, after the
//! preceding accepted columns are projected out, falls below
//! [`tolerance::RANK`] times its own norm is reported as dependent.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::algebra::{compensated_sum, dot_unchecked, ValueVector};
use crate::error::{check_len, Error, Result};
use crate::tolerance;

/// Nonnegative weights over a population, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyVector(Vec<f64>);

impl FrequencyVector {
    /// Accepts weights summing to one within [`tolerance::FREQUENCY_SUM`].
    /// Other sums are rejected unless `normalize` is set, in which case the
    /// weights are divided by their sum.
    pub fn new(weights: Vec<f64>, normalize: bool) -> Result<Self> {
        let total = validate_weights(&weights)?;
        if (total - 1.0).abs() <= tolerance::FREQUENCY_SUM {
            Ok(Self(weights))
        } else if normalize {
            Ok(Self(weights.into_iter().map(|w| w / total).collect()))
        } else {
            Err(Error::InvalidFrequencies(format!(
                "weights sum to {total} (not 1); pass the normalize flag to rescale"
            )))
        }
    }

    /// Always divides by the sum.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        let total = validate_weights(&weights)?;
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        Self::from_unnormalized(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Number of entities with positive weight.
    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&w| w > 0.0).count()
    }
}

fn validate_weights(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidFrequencies("no entities".into()));
    }
    for (j, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite {
                context: "frequencies",
                index: j,
            });
        }
        if w < 0.0 {
            return Err(Error::InvalidFrequencies(format!(
                "negative weight {w} at entity {j}"
            )));
        }
    }
    let total = compensated_sum(weights.iter().copied());
    if total <= 0.0 {
        return Err(Error::InvalidFrequencies("all weights are zero".into()));
    }
    Ok(total)
}

impl Deref for FrequencyVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FrequencyVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v, false)
    }
}

impl From<FrequencyVector> for Vec<f64> {
    fn from(v: FrequencyVector) -> Self {
        v.0
    }
}

pub const INTERCEPT: &str = "intercept";

/// Entity-by-predictor matrix, row-major, whose column 0 is identically one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl DesignMatrix {
    /// `data` is row-major and already includes the intercept column.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidDesign("no columns".into()));
        }
        check_len("design data", rows * cols, data.len())?;
        check_len("design column names", cols, names.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "design matrix",
                index,
            });
        }
        if let Some(j) = (0..rows).find(|&j| data[j * cols] != 1.0) {
            return Err(Error::InvalidDesign(format!(
                "column 0 must be all ones; row {j} holds {}",
                data[j * cols]
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            names,
        })
    }

    /// Builds the matrix from per-entity predictor rows, prepending the
    /// intercept. Predictors are named `x1..xn`.
    pub fn from_predictor_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let names = std::iter::once(INTERCEPT.to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .collect();
        Self::from_predictor_rows_named(rows, names)
    }

    /// As [`from_predictor_rows`](Self::from_predictor_rows); `names` covers
    /// every column including the intercept.
    pub fn from_predictor_rows_named(rows: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let n = names.len().saturating_sub(1);
        let mut data = Vec::with_capacity(rows.len() * (n + 1));
        for row in rows {
            check_len("predictor row", n, row.len())?;
            data.push(1.0);
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), n + 1, data, names)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.cols + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|j| self.get(j, i)).collect()
    }

    /// Keeps the listed columns, in the given order. Column 0 must be kept first.
    pub fn select_columns(&self, keep: &[usize]) -> Result<Self> {
        if keep.first() != Some(&0) {
            return Err(Error::InvalidDesign(
                "column selection must start with the intercept".into(),
            ));
        }
        if let Some(&bad) = keep.iter().find(|&&i| i >= self.cols) {
            return Err(Error::InvalidDesign(format!("no column {bad}")));
        }
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for j in 0..self.rows {
            data.extend(keep.iter().map(|&i| self.get(j, i)));
        }
        let names = keep.iter().map(|&i| self.names[i].clone()).collect();
        Self::new(self.rows, keep.len(), data, names)
    }

    /// `x̄_i = Σ_j q_j x_ij`; entry 0 is exactly one.
    pub fn weighted_column_means(&self, q: &FrequencyVector) -> Result<ValueVector> {
        check_len("column means (frequencies)", self.rows, q.len())?;
        let mut means: Vec<f64> = (0..self.cols)
            .map(|i| dot_unchecked(&self.column(i), q))
            .collect();
        means[0] = 1.0;
        Ok(ValueVector::from_finite(means))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Drop dependent columns (coefficient fixed at 0) instead of failing.
    pub drop_dependent: bool,
    pub rank_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            drop_dependent: false,
            rank_tolerance: tolerance::RANK,
        }
    }
}

/// One context's weighted least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// `b_i`, index 0 is the intercept.
    pub coefficients: ValueVector,
    /// `g_j = Σ_i b_i x_ij` for every entity, including zero-weight ones.
    pub fitted: ValueVector,
    /// `ε_j = z_j − g_j`.
    pub residuals: ValueVector,
    pub weights: FrequencyVector,
    /// Columns dropped as dependent (only with `drop_dependent`).
    pub dropped: Vec<usize>,
}

pub fn fit_weighted_least_squares(
    x: &DesignMatrix,
    z: &[f64],
    q: &FrequencyVector,
) -> Result<RegressionFit> {
    fit_weighted_least_squares_with(x, z, q, &FitOptions::default())
}

pub fn fit_weighted_least_squares_with(
    x: &DesignMatrix,
    z: &[f64],
    q: &FrequencyVector,
    options: &FitOptions,
) -> Result<RegressionFit> {
    check_len("outcome", x.rows(), z.len())?;
    check_len("frequencies", x.rows(), q.len())?;
    if let Some(index) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "outcome",
            index,
        });
    }
    let active: Vec<usize> = (0..x.rows()).filter(|&j| q[j] > 0.0).collect();
    let (m, n) = (active.len(), x.cols());
    if m < n {
        return Err(Error::InsufficientRows {
            active: m,
            columns: n,
        });
    }

    // Column-major copy of the weight-scaled active rows.
    let mut a = vec![0.0; m * n];
    let mut y = vec![0.0; m];
    for (r, &j) in active.iter().enumerate() {
        let s = q[j].sqrt();
        for i in 0..n {
            a[i * m + r] = s * x.get(j, i);
        }
        y[r] = s * z[j];
    }

    let qr = HouseholderQr::factor(&mut a, m, n, &mut y, options.rank_tolerance);
    if !qr.dependent.is_empty() && !options.drop_dependent {
        return Err(Error::RankDeficient {
            columns: qr.dependent,
        });
    }
    let coefficients = qr.solve(&a, m, &y, n);

    let fitted: Vec<f64> = (0..x.rows())
        .map(|j| dot_unchecked(x.row(j), &coefficients))
        .collect();
    let residuals: Vec<f64> = z.iter().zip(&fitted).map(|(z, g)| z - g).collect();
    Ok(RegressionFit {
        coefficients: ValueVector::new(coefficients)?,
        fitted: ValueVector::new(fitted)?,
        residuals: ValueVector::new(residuals)?,
        weights: q.clone(),
        dropped: qr.dependent,
    })
}

/// In-place Householder QR over a column-major `m × n` buffer, factoring
/// columns in order and skipping dependent ones.
struct HouseholderQr {
    /// Accepted columns; the k-th accepted column owns row k of R.
    basis: Vec<usize>,
    dependent: Vec<usize>,
}

impl HouseholderQr {
    fn factor(a: &mut [f64], m: usize, n: usize, y: &mut [f64], tol: f64) -> Self {
        let norm = |v: &[f64]| compensated_sum(v.iter().map(|x| x * x)).sqrt();
        let original: Vec<f64> = (0..n).map(|i| norm(&a[i * m..(i + 1) * m])).collect();
        let mut basis = Vec::with_capacity(n);
        let mut dependent = Vec::new();

        for k in 0..n {
            let r = basis.len();
            let col = &a[k * m + r..(k + 1) * m];
            let tail = norm(col);
            if original[k] == 0.0 || tail <= tol * original[k] {
                dependent.push(k);
                continue;
            }
            let alpha = if col[0] > 0.0 { -tail } else { tail };
            let mut v = col.to_vec();
            v[0] -= alpha;
            let vtv = compensated_sum(v.iter().map(|x| x * x));

            let reflect = |target: &mut [f64]| {
                let s = 2.0 * dot_unchecked(&v, target) / vtv;
                for (t, vi) in target.iter_mut().zip(&v) {
                    *t -= s * vi;
                }
            };
            for later in k + 1..n {
                reflect(&mut a[later * m + r..(later + 1) * m]);
            }
            reflect(&mut y[r..]);

            a[k * m + r] = alpha;
            a[k * m + r + 1..(k + 1) * m].fill(0.0);
            basis.push(k);
        }
        Self { basis, dependent }
    }

    /// Back-substitution on the accepted columns; dependent columns get 0.
    fn solve(&self, a: &[f64], m: usize, qty: &[f64], n: usize) -> Vec<f64> {
        let mut b = vec![0.0; n];
        for (row, &k) in self.basis.iter().enumerate().rev() {
            let mut acc = qty[row];
            for &later in &self.basis[row + 1..] {
                acc -= a[later * m + row] * b[later];
            }
            b[k] = acc / a[k * m + row];
        }
        b
    }
}

/// `Σ_j q_j v_j`.
pub fn weighted_mean(v: &[f64], q: &FrequencyVector) -> Result<f64> {
    check_len("weighted mean", q.len(), v.len())?;
    Ok(dot_unchecked(v, q))
}

/// `Σ_j q_j (a_j − ā)(b_j − b̄)` with q-weighted means.
pub fn weighted_covariance(a: &[f64], b: &[f64], q: &FrequencyVector) -> Result<f64> {
    check_len("weighted covariance", q.len(), a.len())?;
    check_len("weighted covariance", q.len(), b.len())?;
    let abar = dot_unchecked(a, q);
    let bbar = dot_unchecked(b, q);
    let products: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - abar) * (y - bbar))
        .collect();
    Ok(dot_unchecked(&products, q))
}

/// `b·x̄` for a (possibly counterfactual) vector of predictor means.
pub fn predicted_mean(fit: &RegressionFit, xbar: &[f64]) -> Result<f64> {
    check_len("predicted mean", fit.coefficients.len(), xbar.len())?;
    if (xbar[0] - 1.0).abs() > tolerance::FREQUENCY_SUM {
        return Err(Error::InvalidDesign(format!(
            "intercept mean must be 1, got {}",
            xbar[0]
        )));
    }
    Ok(dot_unchecked(&fit.coefficients, xbar))
}
