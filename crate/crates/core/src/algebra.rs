//! Finite-difference product rule on dot products.
//!
//! For `z = b·x`, the change between an initial and a changed context splits
//! exactly as `Δz = b·Δx + x'·Δb`. Nothing is dropped; the differential
//! product rule is the limit in which the `Δx·Δb` cross term vanishes.
//!
//! Dot products here are accumulated with error-free transformations
//! (TwoSum / FMA-based TwoProduct), so closure errors stay at a few ulps of
//! the result regardless of vector length.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{check_len, Error, Result};

/// Error-free sum: `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free product: `a * b = p + e` exactly (barring underflow).
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated accumulator (Neumaier's variant of Kahan summation).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let (s, e) = two_sum(self.sum, value);
        self.sum = s;
        self.compensation += e;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Twice-working-precision dot product. Inputs must already have equal length.
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (&x, &y) in a.iter().zip(b) {
        let (p, e) = two_prod(x, y);
        acc.add(p);
        acc.compensation += e;
    }
    acc.value()
}

/// `Σ c_i (changed_i − initial_i)` including the rounding error of each
/// subtraction, so the result is as if `Δ` were formed exactly.
pub(crate) fn dot_delta_unchecked(c: &[f64], initial: &[f64], changed: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for ((&ci, &x0), &x1) in c.iter().zip(initial).zip(changed) {
        let (d, de) = two_sum(x1, -x0);
        let (p, pe) = two_prod(ci, d);
        acc.add(p);
        acc.compensation += pe + ci * de;
    }
    acc.value()
}

/// Σ a_i b_i.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("dot product", a.len(), b.len())?;
    Ok(dot_unchecked(a, b))
}

/// A vector of finite reals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(elements: Vec<f64>) -> Result<Self> {
        if let Some(index) = elements.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "value vector",
                index,
            });
        }
        Ok(Self(elements))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Element-wise `self + scale * other`; lengths must match.
    pub fn add_scaled(&self, other: &[f64], scale: f64) -> Result<Self> {
        check_len("add_scaled", self.len(), other.len())?;
        Self::new(
            self.0
                .iter()
                .zip(other)
                .map(|(a, b)| scale.mul_add(*b, *a))
                .collect(),
        )
    }

    pub(crate) fn from_finite(elements: Vec<f64>) -> Self {
        debug_assert!(elements.iter().all(|v| v.is_finite()));
        Self(elements)
    }
}

impl Deref for ValueVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ValueVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ValueVector> for Vec<f64> {
    fn from(v: ValueVector) -> Self {
        v.0
    }
}

/// A quantity observed in the initial and the changed (primed) context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPair {
    initial: ValueVector,
    changed: ValueVector,
}

impl DeltaPair {
    pub fn new(initial: ValueVector, changed: ValueVector) -> Result<Self> {
        check_len("delta pair", initial.len(), changed.len())?;
        Ok(Self { initial, changed })
    }

    pub fn from_vecs(initial: Vec<f64>, changed: Vec<f64>) -> Result<Self> {
        Self::new(ValueVector::new(initial)?, ValueVector::new(changed)?)
    }

    pub fn scalar(initial: f64, changed: f64) -> Result<Self> {
        Self::from_vecs(vec![initial], vec![changed])
    }

    pub fn initial(&self) -> &ValueVector {
        &self.initial
    }

    pub fn changed(&self) -> &ValueVector {
        &self.changed
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    /// `changed − initial`, element-wise.
    pub fn delta(&self) -> Vec<f64> {
        self.changed
            .iter()
            .zip(self.initial.iter())
            .map(|(c, i)| c - i)
            .collect()
    }

    /// The same pair with contexts exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            initial: self.changed.clone(),
            changed: self.initial.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductRuleTerms {
    /// `holding_coefficients + coefficient_change`.
    pub total: f64,
    /// `b·Δx`: change in `x` with `b` held at its initial value.
    pub holding_coefficients: f64,
    /// `x'·Δb`: change in `b` evaluated at the changed `x`.
    pub coefficient_change: f64,
}

/// Splits `Δ(b·x)` into `b·Δx + x'·Δb`.
pub fn product_rule_delta(b: &DeltaPair, x: &DeltaPair) -> Result<ProductRuleTerms> {
    check_len("product rule", b.len(), x.len())?;
    let holding_coefficients = dot_delta_unchecked(b.initial(), x.initial(), x.changed());
    let coefficient_change = dot_delta_unchecked(x.changed(), b.initial(), b.changed());
    Ok(ProductRuleTerms {
        total: holding_coefficients + coefficient_change,
        holding_coefficients,
        coefficient_change,
    })
}

/// `b'·x' − b·x` evaluated directly, for closure checks.
pub fn direct_difference(b: &DeltaPair, x: &DeltaPair) -> Result<f64> {
    check_len("direct difference", b.len(), x.len())?;
    Ok(dot_unchecked(b.changed(), x.changed()) - dot_unchecked(b.initial(), x.initial()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialExpansion {
    /// `b·dx + x·db`, the differential product rule.
    pub first_order: f64,
    /// `dx·db`, the second-order cross term the differential rule drops.
    pub remainder: f64,
}

/// Expands `(b+db)·(x+dx) − b·x` into its first-order part and the cross term.
pub fn differential_remainder(
    b: &[f64],
    db: &[f64],
    x: &[f64],
    dx: &[f64],
) -> Result<DifferentialExpansion> {
    let n = b.len();
    check_len("differential remainder (db)", n, db.len())?;
    check_len("differential remainder (x)", n, x.len())?;
    check_len("differential remainder (dx)", n, dx.len())?;
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        let (p, e) = two_prod(b[i], dx[i]);
        acc.add(p);
        acc.compensation += e;
        let (p, e) = two_prod(x[i], db[i]);
        acc.add(p);
        acc.compensation += e;
    }
    Ok(DifferentialExpansion {
        first_order: acc.value(),
        remainder: dot_unchecked(dx, db),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_small_cases() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 32.0);
        assert_eq!(dot(&[1.5, -2.0, 7.0], &[0.0; 3]).unwrap(), 0.0);
        assert!(matches!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn dot_survives_cancellation() {
        // Naive summation returns 0 here.
        let a = [1e16, 1.0, -1e16];
        let b = [1.0, 1.0, 1.0];
        assert_eq!(dot(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn value_vector_rejects_non_finite() {
        assert!(matches!(
            ValueVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(ValueVector::new(vec![f64::INFINITY]).is_err());
        let parsed: std::result::Result<ValueVector, _> = serde_json::from_str("[1.0, 2.5]");
        assert_eq!(parsed.unwrap().as_slice(), &[1.0, 2.5]);
    }

    #[test]
    fn delta_pair_requires_equal_lengths() {
        assert!(DeltaPair::from_vecs(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn scalar_product_rule() {
        let b = DeltaPair::scalar(2.0, 3.0).unwrap();
        let x = DeltaPair::scalar(3.0, 4.0).unwrap();
        let t = product_rule_delta(&b, &x).unwrap();
        assert_eq!(t.holding_coefficients, 2.0);
        assert_eq!(t.coefficient_change, 4.0);
        assert_eq!(t.total, 6.0);
        assert_eq!(direct_difference(&b, &x).unwrap(), 6.0);
    }

    #[test]
    fn constant_coefficients_have_no_change_term() {
        let b = DeltaPair::from_vecs(vec![1.0, -2.0, 0.5], vec![1.0, -2.0, 0.5]).unwrap();
        let x = DeltaPair::from_vecs(vec![3.0, 1.0, 4.0], vec![2.0, 2.0, 8.0]).unwrap();
        let t = product_rule_delta(&b, &x).unwrap();
        assert_eq!(t.coefficient_change, 0.0);
        assert_eq!(t.total, t.holding_coefficients);
        assert_eq!(t.total, -1.0 + -2.0 * 1.0 + 0.5 * 4.0);
    }

    #[test]
    fn product_rule_length_mismatch() {
        let b = DeltaPair::scalar(1.0, 2.0).unwrap();
        let x = DeltaPair::from_vecs(vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        assert!(product_rule_delta(&b, &x).is_err());
    }

    #[test]
    fn swapping_contexts_negates_total() {
        let b = DeltaPair::from_vecs(vec![0.3, -1.7], vec![2.2, 0.9]).unwrap();
        let x = DeltaPair::from_vecs(vec![4.1, 5.5], vec![-3.0, 1.25]).unwrap();
        let fwd = product_rule_delta(&b, &x).unwrap();
        let back = product_rule_delta(&b.swapped(), &x.swapped()).unwrap();
        assert!((fwd.total + back.total).abs() <= 1e-14);
    }

    #[test]
    fn differential_no_change() {
        let e = differential_remainder(&[1.0, 2.0], &[0.0; 2], &[3.0, 4.0], &[0.0; 2]).unwrap();
        assert_eq!(e.first_order, 0.0);
        assert_eq!(e.remainder, 0.0);
    }

    #[test]
    fn differential_scaling_orders() {
        let b = [1.0, -0.5, 2.0];
        let x = [0.25, 3.0, -1.0];
        let db0 = [0.3, 0.7, -0.2];
        let dx0 = [-0.4, 0.1, 0.9];
        let mut prev: Option<DifferentialExpansion> = None;
        for h in [1e-1, 1e-2, 1e-3] {
            let db: Vec<f64> = db0.iter().map(|v| v * h).collect();
            let dx: Vec<f64> = dx0.iter().map(|v| v * h).collect();
            let e = differential_remainder(&b, &db, &x, &dx).unwrap();
            if let Some(p) = prev {
                let r2 = e.remainder / p.remainder;
                let r1 = e.first_order / p.first_order;
                assert!((r2 - 0.01).abs() < 1e-9, "remainder ratio {r2}");
                assert!((r1 - 0.1).abs() < 1e-9, "first-order ratio {r1}");
            }
            prev = Some(e);
        }
    }

    #[test]
    fn differential_length_mismatch() {
        assert!(differential_remainder(&[1.0], &[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn compensated_sum_matches_exact_sequence() {
        let vals = [0.1; 10];
        assert_eq!(compensated_sum(vals), 1.0);
    }
}
