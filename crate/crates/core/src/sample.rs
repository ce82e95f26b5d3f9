//! Seeded random instances for the identity checks in [`crate::verify`] and
//! the test suites. Every generator draws from a caller-owned `ChaCha8Rng`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{DeltaPair, ValueVector};
use crate::decomposition::ContextData;
use crate::error::Result;
use crate::price::PairedPopulation;
use crate::regression::{DesignMatrix, FrequencyVector};

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| uniform(rng, lo, hi)).collect()
}

/// Positive weights in `[0.05, 1.05)`, normalized.
pub fn frequencies(rng: &mut ChaCha8Rng, len: usize) -> FrequencyVector {
    FrequencyVector::from_unnormalized(uniform_vec(rng, len, 0.05, 1.05))
        .expect("weights are positive")
}

/// `(b, x)` pairs of common length `len` with entries in `[-10, 10]`.
pub fn delta_pairs(rng: &mut ChaCha8Rng, len: usize) -> (DeltaPair, DeltaPair) {
    let pair = |rng: &mut ChaCha8Rng| {
        DeltaPair::from_vecs(
            uniform_vec(rng, len, -10.0, 10.0),
            uniform_vec(rng, len, -10.0, 10.0),
        )
        .expect("finite, equal lengths")
    };
    let b = pair(rng);
    let x = pair(rng);
    (b, x)
}

/// A weighted dataset with `predictors` columns besides the intercept. The
/// outcome is linear in the predictors plus uniform noise, with per-context
/// offsets drawn from `shift` so paired datasets differ in both means and
/// coefficients.
pub fn dataset(
    rng: &mut ChaCha8Rng,
    predictors: usize,
    entities: usize,
    shift: f64,
    label: &str,
) -> Result<ContextData> {
    let centre = uniform_vec(rng, predictors, -shift, shift);
    let rows: Vec<Vec<f64>> = (0..entities)
        .map(|_| {
            centre
                .iter()
                .map(|c| c + uniform(rng, -10.0, 10.0))
                .collect()
        })
        .collect();
    let b = uniform_vec(rng, predictors + 1, -3.0, 3.0);
    let z: Vec<f64> = rows
        .iter()
        .map(|r| {
            let fitted: f64 = b[0] + r.iter().zip(&b[1..]).map(|(x, b)| x * b).sum::<f64>();
            fitted + uniform(rng, -5.0, 5.0)
        })
        .collect();
    ContextData::new(
        DesignMatrix::from_predictor_rows(&rows)?,
        ValueVector::new(z)?,
        frequencies(rng, entities),
        label,
    )
}

/// Two contexts sharing a predictor count, with independent entity counts.
pub fn context_pair(
    rng: &mut ChaCha8Rng,
    predictors: usize,
    entities: (usize, usize),
) -> Result<(ContextData, ContextData)> {
    let a = dataset(rng, predictors, entities.0, 2.0, "initial")?;
    let b = dataset(rng, predictors, entities.1, 2.0, "changed")?;
    Ok((a, b))
}

/// Paired entities with fitness in `[0.1, 2]`; changed frequencies follow
/// from fitness and trait values drift by up to `±1`.
pub fn paired_population(rng: &mut ChaCha8Rng, entities: usize) -> Result<PairedPopulation> {
    let q = frequencies(rng, entities);
    let w = uniform_vec(rng, entities, 0.1, 2.0);
    let z = uniform_vec(rng, entities, -10.0, 10.0);
    let z_changed: Vec<f64> = z.iter().map(|v| v + uniform(rng, -1.0, 1.0)).collect();
    PairedPopulation::from_fitness(
        q,
        ValueVector::new(w)?,
        ValueVector::new(z)?,
        ValueVector::new(z_changed)?,
    )
}
