//! Two-context decomposition of the change in a regression's mean outcome.
//!
//! With `z̄ = b·x̄` in each context, the product rule gives
//! `Δz̄ = b·Δx̄ + x̄'·Δb`: a coefficients-fixed ("endowments") term and a
//! coefficient-change term. The alternative reference points from the
//! Oaxaca-Blinder literature are available as [`Convention`]s.

use serde::{Deserialize, Serialize};

use crate::algebra::{dot_unchecked, ValueVector};
use crate::error::{check_len, Error, Result};
use crate::regression::{
    fit_weighted_least_squares_with, weighted_mean, DesignMatrix, FitOptions, FrequencyVector,
};
use crate::tolerance;

/// One population's data.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextData {
    pub design: DesignMatrix,
    pub outcome: ValueVector,
    pub frequencies: FrequencyVector,
    pub label: String,
}

impl ContextData {
    pub fn new(
        design: DesignMatrix,
        outcome: ValueVector,
        frequencies: FrequencyVector,
        label: impl Into<String>,
    ) -> Result<Self> {
        check_len("context outcome", design.rows(), outcome.len())?;
        check_len("context frequencies", design.rows(), frequencies.len())?;
        Ok(Self {
            design,
            outcome,
            frequencies,
            label: label.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `b·Δx̄ + x̄'·Δb`
    #[default]
    PaperInitialReference,
    /// `b'·Δx̄ + x̄·Δb`
    ChangedReference,
    /// `b·Δx̄ + x̄·Δb + Δx̄·Δb`
    Threefold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub label: String,
    /// `z̄`, computed directly from outcomes and frequencies.
    pub mean_outcome: f64,
    /// `x̄`, with the intercept entry equal to one.
    pub predictor_means: ValueVector,
    pub coefficients: ValueVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorContribution {
    pub index: usize,
    pub name: String,
    pub coefficients_fixed: f64,
    pub coefficient_change: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub convention: Convention,
    /// `z̄' − z̄`.
    pub total_change: f64,
    pub coefficients_fixed_term: f64,
    pub coefficient_change_term: f64,
    /// Only under [`Convention::Threefold`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_term: Option<f64>,
    /// Sum of terms minus `total_change`.
    pub closure_error: f64,
    pub initial: ContextSummary,
    pub changed: ContextSummary,
    pub per_predictor_contributions: Vec<PredictorContribution>,
}

impl DecompositionReport {
    pub fn terms_sum(&self) -> f64 {
        self.coefficients_fixed_term
            + self.coefficient_change_term
            + self.interaction_term.unwrap_or(0.0)
    }

    /// `|closure_error|` relative to `max(|z̄|, |z̄'|, 1)`.
    pub fn relative_closure_error(&self) -> f64 {
        tolerance::relative_error(
            self.terms_sum(),
            self.total_change,
            &[self.initial.mean_outcome, self.changed.mean_outcome],
        )
    }
}

pub fn decompose_mean_change(
    initial: &ContextData,
    changed: &ContextData,
    convention: Convention,
) -> Result<DecompositionReport> {
    decompose_mean_change_with(initial, changed, convention, &FitOptions::default())
}

pub fn decompose_mean_change_with(
    initial: &ContextData,
    changed: &ContextData,
    convention: Convention,
    options: &FitOptions,
) -> Result<DecompositionReport> {
    let names = initial.design.names();
    if names != changed.design.names() {
        return Err(Error::SchemaMismatch(format!(
            "initial predictors {:?} differ from changed predictors {:?}",
            names,
            changed.design.names()
        )));
    }
    let s0 = summarize(initial, options)?;
    let s1 = summarize(changed, options)?;

    let (b0, b1) = (&s0.coefficients, &s1.coefficients);
    let (x0, x1) = (&s0.predictor_means, &s1.predictor_means);
    let dx: Vec<f64> = x1.iter().zip(x0.iter()).map(|(a, b)| a - b).collect();
    let db: Vec<f64> = b1.iter().zip(b0.iter()).map(|(a, b)| a - b).collect();

    let (fixed_coef, change_at): (&[f64], &[f64]) = match convention {
        Convention::PaperInitialReference => (b0, x1),
        Convention::ChangedReference => (b1, x0),
        Convention::Threefold => (b0, x0),
    };
    let coefficients_fixed_term = dot_unchecked(fixed_coef, &dx);
    let coefficient_change_term = dot_unchecked(change_at, &db);
    let interaction_term = (convention == Convention::Threefold).then(|| dot_unchecked(&dx, &db));

    let per_predictor_contributions = names
        .iter()
        .enumerate()
        .map(|(i, name)| PredictorContribution {
            index: i,
            name: name.clone(),
            coefficients_fixed: fixed_coef[i] * dx[i],
            coefficient_change: change_at[i] * db[i],
            interaction: interaction_term.map(|_| dx[i] * db[i]),
        })
        .collect();

    let total_change = s1.mean_outcome - s0.mean_outcome;
    let terms = coefficients_fixed_term + coefficient_change_term + interaction_term.unwrap_or(0.0);
    Ok(DecompositionReport {
        convention,
        total_change,
        coefficients_fixed_term,
        coefficient_change_term,
        interaction_term,
        closure_error: terms - total_change,
        initial: s0,
        changed: s1,
        per_predictor_contributions,
    })
}

fn summarize(ctx: &ContextData, options: &FitOptions) -> Result<ContextSummary> {
    let fit =
        fit_weighted_least_squares_with(&ctx.design, &ctx.outcome, &ctx.frequencies, options)?;
    Ok(ContextSummary {
        label: ctx.label.clone(),
        mean_outcome: weighted_mean(&ctx.outcome, &ctx.frequencies)?,
        predictor_means: ctx.design.weighted_column_means(&ctx.frequencies)?,
        coefficients: fit.coefficients,
    })
}

/// Per-predictor split of each report term.
pub fn per_predictor_breakdown(report: &DecompositionReport) -> &[PredictorContribution] {
    &report.per_predictor_contributions
}
