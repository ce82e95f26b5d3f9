//! Price partition of the change in a population mean.
//!
//! `Δz̄ = Δq·z + q'·Δz`, and when frequency change is driven by fitness
//! normalized to mean one, `Δz̄ = Cov(w, z) + E(wΔz)`.

use serde::{Deserialize, Serialize};

use crate::algebra::{compensated_sum, dot_delta_unchecked, dot_unchecked, ValueVector};
use crate::error::{check_len, Error, Result};
use crate::regression::{weighted_covariance, FrequencyVector};
use crate::tolerance;

/// Index-paired entities observed in both contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedPopulation {
    frequencies_initial: FrequencyVector,
    frequencies_changed: FrequencyVector,
    values_initial: ValueVector,
    values_changed: ValueVector,
    fitness: Option<ValueVector>,
}

impl PairedPopulation {
    /// When `fitness` is given it must be nonnegative and reproduce the
    /// changed frequencies as `q_j w_j / w̄` within
    /// [`tolerance::SELECTION_CONSISTENCY`].
    pub fn new(
        frequencies_initial: FrequencyVector,
        frequencies_changed: FrequencyVector,
        values_initial: ValueVector,
        values_changed: ValueVector,
        fitness: Option<ValueVector>,
    ) -> Result<Self> {
        let n = frequencies_initial.len();
        check_len("changed frequencies", n, frequencies_changed.len())?;
        check_len("initial values", n, values_initial.len())?;
        check_len("changed values", n, values_changed.len())?;
        if let Some(w) = &fitness {
            check_len("fitness", n, w.len())?;
            let normalized = normalize_fitness(w, &frequencies_initial)?;
            for j in 0..n {
                let implied = frequencies_initial[j] * normalized[j];
                let gap = (implied - frequencies_changed[j]).abs();
                if gap > tolerance::SELECTION_CONSISTENCY {
                    return Err(Error::InvalidFitness(format!(
                        "entity {j}: changed frequency {} differs from q w / w̄ = {implied}",
                        frequencies_changed[j]
                    )));
                }
            }
        }
        Ok(Self {
            frequencies_initial,
            frequencies_changed,
            values_initial,
            values_changed,
            fitness,
        })
    }

    /// Builds the changed frequencies from fitness: `q'_j = q_j w_j / w̄`.
    pub fn from_fitness(
        frequencies_initial: FrequencyVector,
        fitness: ValueVector,
        values_initial: ValueVector,
        values_changed: ValueVector,
    ) -> Result<Self> {
        check_len("fitness", frequencies_initial.len(), fitness.len())?;
        let normalized = normalize_fitness(&fitness, &frequencies_initial)?;
        let changed = frequencies_initial
            .iter()
            .zip(normalized.iter())
            .map(|(q, w)| q * w)
            .collect();
        let changed = FrequencyVector::from_unnormalized(changed)?;
        Self::new(
            frequencies_initial,
            changed,
            values_initial,
            values_changed,
            Some(fitness),
        )
    }

    pub fn len(&self) -> usize {
        self.frequencies_initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frequencies_initial(&self) -> &FrequencyVector {
        &self.frequencies_initial
    }

    pub fn frequencies_changed(&self) -> &FrequencyVector {
        &self.frequencies_changed
    }

    pub fn values_initial(&self) -> &ValueVector {
        &self.values_initial
    }

    pub fn values_changed(&self) -> &ValueVector {
        &self.values_changed
    }

    pub fn fitness(&self) -> Option<&ValueVector> {
        self.fitness.as_ref()
    }

    /// Entities with `q'_j = 0`: their `Δz_j` enters every sum with weight zero.
    pub fn extinct(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.frequencies_changed[j] == 0.0)
            .collect()
    }

    /// `z̄' − z̄` evaluated directly.
    pub fn mean_difference(&self) -> f64 {
        dot_unchecked(&self.frequencies_changed, &self.values_changed)
            - dot_unchecked(&self.frequencies_initial, &self.values_initial)
    }

    /// Copy with both value vectors multiplied by `c`.
    pub fn scaled_values(&self, c: f64) -> Result<Self> {
        let scale = |v: &ValueVector| ValueVector::new(v.iter().map(|x| x * c).collect());
        Ok(Self {
            values_initial: scale(&self.values_initial)?,
            values_changed: scale(&self.values_changed)?,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceForm {
    DotProduct,
    CovarianceExpectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePartition {
    /// `Δq·z`, or `Cov(w, z)`.
    pub selection_term: f64,
    /// `q'·Δz`, or `E(wΔz)`.
    pub transmission_term: f64,
    /// `z̄' − z̄`, computed directly.
    pub total: f64,
    pub form: PriceForm,
}

impl PricePartition {
    pub fn closure_error(&self) -> f64 {
        tolerance::relative_error(
            self.selection_term + self.transmission_term,
            self.total,
            &[self.selection_term, self.transmission_term, self.total],
        )
    }
}

pub fn price_partition(pop: &PairedPopulation) -> PricePartition {
    let z = &pop.values_initial;
    PricePartition {
        selection_term: dot_delta_unchecked(z, &pop.frequencies_initial, &pop.frequencies_changed),
        transmission_term: dot_delta_unchecked(
            &pop.frequencies_changed,
            &pop.values_initial,
            &pop.values_changed,
        ),
        total: pop.mean_difference(),
        form: PriceForm::DotProduct,
    }
}

pub fn price_covariance_form(pop: &PairedPopulation) -> Result<PricePartition> {
    let w = pop.fitness.as_ref().ok_or(Error::MissingFitness)?;
    let q = &pop.frequencies_initial;
    let w = normalize_fitness(w, q)?;
    let selection_term = weighted_covariance(&w, &pop.values_initial, q)?;
    let transmission_term = compensated_sum(
        (0..pop.len()).map(|j| q[j] * w[j] * (pop.values_changed[j] - pop.values_initial[j])),
    );
    Ok(PricePartition {
        selection_term,
        transmission_term,
        total: pop.mean_difference(),
        form: PriceForm::CovarianceExpectation,
    })
}

/// Rescales fitness so its q-weighted mean is one.
pub fn normalize_fitness(w: &[f64], q: &FrequencyVector) -> Result<ValueVector> {
    check_len("fitness", q.len(), w.len())?;
    if let Some(j) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidFitness(format!(
            "entity {j} has fitness {}",
            w[j]
        )));
    }
    let mean = dot_unchecked(w, q);
    if mean <= 0.0 {
        return Err(Error::ZeroMeanFitness);
    }
    if mean == 1.0 {
        return ValueVector::new(w.to_vec());
    }
    ValueVector::new(w.iter().map(|v| v / mean).collect())
}
