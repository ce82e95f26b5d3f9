//! Haploid selection: allele frequencies, average excesses and Fisher's
//! partition of the change in mean fitness.
//!
//! Mean fitness `w̄ = b·p` changes as `Δw̄ = b·Δp + p'·Δb`. The first term,
//! with average effects `b` held fixed, equals the additive genetic variance
//! `Var(g)` of the fitted genetic values. That holds for any fitness map,
//! epistatic or not, because `g` is the least-squares projection of `w`.
//!
//! Fitness is normalized to `w̄ = 1` before any identity is evaluated, so all
//! terms in a [`SelectionSummary`] are in units of initial mean fitness.

mod simulate;

pub use simulate::{
    random_population, simulate, SimulationConfig, SimulationRun, SimulationStatus,
};

use serde::{Deserialize, Serialize};

use crate::algebra::{dot_delta_unchecked, dot_unchecked, ValueVector};
use crate::error::{check_len, Error, Result};
use crate::price::normalize_fitness;
use crate::regression::{
    fit_weighted_least_squares, weighted_covariance, DesignMatrix, FrequencyVector,
};
use crate::tolerance;

/// Genotypes with 0/1 allele indicators, entity frequencies and fitness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaploidPopulation {
    genotypes: DesignMatrix,
    frequencies: FrequencyVector,
    fitness: ValueVector,
}

impl HaploidPopulation {
    pub fn new(
        genotypes: DesignMatrix,
        frequencies: FrequencyVector,
        fitness: ValueVector,
    ) -> Result<Self> {
        check_len(
            "population frequencies",
            genotypes.rows(),
            frequencies.len(),
        )?;
        check_len("population fitness", genotypes.rows(), fitness.len())?;
        for j in 0..genotypes.rows() {
            for locus in 1..genotypes.cols() {
                let value = genotypes.get(j, locus);
                if value != 0.0 && value != 1.0 {
                    return Err(Error::InvalidGenotype {
                        entity: j,
                        locus,
                        value,
                    });
                }
            }
        }
        if let Some(j) = fitness.iter().position(|&w| w < 0.0) {
            return Err(Error::InvalidFitness(format!(
                "entity {j} has negative fitness {}",
                fitness[j]
            )));
        }
        Ok(Self {
            genotypes,
            frequencies,
            fitness,
        })
    }

    pub fn genotypes(&self) -> &DesignMatrix {
        &self.genotypes
    }

    pub fn frequencies(&self) -> &FrequencyVector {
        &self.frequencies
    }

    pub fn fitness(&self) -> &ValueVector {
        &self.fitness
    }

    /// Number of loci, excluding the intercept column.
    pub fn loci(&self) -> usize {
        self.genotypes.cols() - 1
    }

    /// Same genotypes and fitness with new entity frequencies.
    pub fn with_frequencies(&self, frequencies: FrequencyVector) -> Result<Self> {
        Self::new(self.genotypes.clone(), frequencies, self.fitness.clone())
    }

    /// Loci at which every entity of positive weight carries the same allele.
    pub fn fixed_loci(&self) -> Vec<usize> {
        fixed_loci(&self.genotypes, &self.frequencies)
    }
}

fn fixed_loci(x: &DesignMatrix, q: &FrequencyVector) -> Vec<usize> {
    let active: Vec<usize> = (0..x.rows()).filter(|&j| q[j] > 0.0).collect();
    (1..x.cols())
        .filter(|&i| active.windows(2).all(|w| x.get(w[0], i) == x.get(w[1], i)))
        .collect()
}

/// `p_i = Σ_j q_j x_ij`, with `p_0 = 1`.
pub fn allele_frequencies(pop: &HaploidPopulation) -> ValueVector {
    pop.genotypes
        .weighted_column_means(&pop.frequencies)
        .expect("population lengths are validated on construction")
}

/// One round of selection: `q'_j = q_j w_j / w̄`. Genotypes and raw fitness
/// are carried over unchanged.
pub fn select(pop: &HaploidPopulation) -> Result<HaploidPopulation> {
    let w = normalize_fitness(&pop.fitness, &pop.frequencies)?;
    let weighted = pop
        .frequencies
        .iter()
        .zip(w.iter())
        .map(|(q, w)| q * w)
        .collect();
    pop.with_frequencies(FrequencyVector::from_unnormalized(weighted)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFitness {
    /// `w_i = p'_i / p_i`; `None` where the allele is absent in both contexts.
    pub marginal: Vec<Option<f64>>,
    /// `α_i = w_i − 1`.
    pub excess: Vec<Option<f64>>,
}

impl MarginalFitness {
    pub fn undefined(&self) -> Vec<usize> {
        (0..self.marginal.len())
            .filter(|&i| self.marginal[i].is_none())
            .collect()
    }
}

pub fn marginal_fitness_and_excess(p: &[f64], p_changed: &[f64]) -> Result<MarginalFitness> {
    check_len("marginal fitness", p.len(), p_changed.len())?;
    let mut marginal = Vec::with_capacity(p.len());
    for (locus, (&p0, &p1)) in p.iter().zip(p_changed).enumerate() {
        if p0 == 0.0 {
            if p1 > 0.0 {
                return Err(Error::InconsistentSelection { locus, changed: p1 });
            }
            marginal.push(None);
        } else {
            marginal.push(Some(p1 / p0));
        }
    }
    let excess = marginal.iter().map(|w| w.map(|w| w - 1.0)).collect();
    Ok(MarginalFitness { marginal, excess })
}

/// `Δp_i = Cov(x_i, w)` under the initial frequencies, with fitness
/// normalized to mean one. Entry 0 (intercept) is zero.
pub fn delta_p_via_covariance(pop: &HaploidPopulation) -> Result<ValueVector> {
    let w = normalize_fitness(&pop.fitness, &pop.frequencies)?;
    let x = &pop.genotypes;
    let mut out = vec![0.0; x.cols()];
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        *slot = weighted_covariance(&x.column(i), &w, &pop.frequencies)?;
    }
    ValueVector::new(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub p_initial: ValueVector,
    pub p_changed: ValueVector,
    pub delta_p: ValueVector,
    pub marginal_fitness: Vec<Option<f64>>,
    pub average_excess: Vec<Option<f64>>,
    /// `b`, fitted under the initial frequencies.
    pub coefficients_initial: ValueVector,
    /// `b'`, fitted under the post-selection frequencies.
    pub coefficients_changed: ValueVector,
    /// `b·Δp`.
    pub ftns_term: f64,
    /// `p'·Δb`.
    pub environment_term: f64,
    /// `w̄' − w̄`, from the data.
    pub total_change: f64,
    /// `Var(g)` under the initial frequencies.
    pub genetic_variance: f64,
    /// `Cov(g, w)` under the initial frequencies.
    pub genetic_covariance: f64,
    /// `w̄` before normalization.
    pub raw_mean_fitness: f64,
    /// Loci without variation initially; dropped from both fits.
    pub fixed_loci: Vec<usize>,
    /// Loci that lose variation through selection; `b'_i = 0` for them.
    pub fixed_after_selection: Vec<usize>,
    /// Loci where `w_i` is 0/0 and excluded from the excess sum.
    pub undefined_loci: Vec<usize>,
}

impl SelectionSummary {
    pub fn closure_error(&self) -> f64 {
        tolerance::relative_error(
            self.ftns_term + self.environment_term,
            self.total_change,
            &[self.ftns_term, self.environment_term, self.total_change],
        )
    }
}

/// Fits `w` on the genotypes in both contexts and evaluates every term of the
/// partition, checking the identities that tie them together.
pub fn fundamental_theorem_term(pop: &HaploidPopulation) -> Result<SelectionSummary> {
    let q = &pop.frequencies;
    let raw_mean_fitness = dot_unchecked(&pop.fitness, q);
    let w = normalize_fitness(&pop.fitness, q)?;
    let selected = select(pop)?;
    let q_changed = &selected.frequencies;

    let p = allele_frequencies(pop);
    let p_changed = allele_frequencies(&selected);
    let delta_p: Vec<f64> = p_changed.iter().zip(p.iter()).map(|(a, b)| a - b).collect();

    let via_cov = delta_p_via_covariance(pop)?;
    for (dp, cov) in delta_p.iter().zip(via_cov.iter()) {
        check_identity("Δp = Cov(x, w)", *dp, *cov, &[], tolerance::DELTA_P)?;
    }

    let excess = marginal_fitness_and_excess(&p, &p_changed)?;
    for i in 0..p.len() {
        if let Some(alpha) = excess.excess[i] {
            check_identity(
                "Δp = p α",
                delta_p[i],
                p[i] * alpha,
                &[],
                tolerance::DELTA_P,
            )?;
        }
    }

    let fixed = fixed_loci(&pop.genotypes, q);
    let fixed_changed = fixed_loci(&pop.genotypes, q_changed);
    let initial_fit = fit_excluding(&pop.genotypes, &w, q, &fixed)?;
    let b = &initial_fit.0;
    let b_changed = fit_excluding(&pop.genotypes, &w, q_changed, &fixed_changed)?.0;

    let ftns_term = dot_unchecked(b, &delta_p);
    let ftns_via_excess: f64 = crate::algebra::compensated_sum(
        (0..p.len()).filter_map(|i| excess.excess[i].map(|a| p[i] * a * b[i])),
    );
    check_identity(
        "Σ b Δp = Σ p α b",
        ftns_term,
        ftns_via_excess,
        &[],
        tolerance::DELTA_P,
    )?;

    let environment_term = dot_delta_unchecked(&p_changed, b, &b_changed);
    let total_change = dot_unchecked(&w, q_changed) - dot_unchecked(&w, q);
    check_identity(
        "b·Δp + p'·Δb = Δw̄",
        ftns_term + environment_term,
        total_change,
        &[ftns_term, environment_term],
        tolerance::FISHER,
    )?;

    let g = &initial_fit.1;
    let genetic_variance = weighted_covariance(g, g, q)?;
    let genetic_covariance = weighted_covariance(g, &w, q)?;
    check_identity(
        "Cov(g, w) = Var(g)",
        genetic_covariance,
        genetic_variance,
        &[],
        tolerance::FISHER,
    )?;
    check_identity(
        "Σ b Δp = Var(g)",
        ftns_term,
        genetic_variance,
        &[],
        tolerance::FISHER,
    )?;
    if ftns_term < tolerance::VARIANCE_FLOOR {
        return Err(Error::IdentityViolation {
            identity: "Σ b Δp ≥ 0",
            error: -ftns_term,
            tolerance: -tolerance::VARIANCE_FLOOR,
        });
    }

    let undefined_loci = excess.undefined();
    Ok(SelectionSummary {
        p_initial: p,
        p_changed,
        delta_p: ValueVector::new(delta_p)?,
        marginal_fitness: excess.marginal,
        average_excess: excess.excess,
        coefficients_initial: initial_fit.0,
        coefficients_changed: b_changed,
        ftns_term,
        environment_term,
        total_change,
        genetic_variance,
        genetic_covariance,
        raw_mean_fitness,
        fixed_after_selection: fixed_changed
            .into_iter()
            .filter(|i| !fixed.contains(i))
            .collect(),
        fixed_loci: fixed,
        undefined_loci,
    })
}

/// Fits on all columns except `excluded`; excluded coefficients are zero.
/// Returns the full-length coefficients and the fitted values.
fn fit_excluding(
    x: &DesignMatrix,
    w: &[f64],
    q: &FrequencyVector,
    excluded: &[usize],
) -> Result<(ValueVector, ValueVector)> {
    let keep: Vec<usize> = (0..x.cols()).filter(|i| !excluded.contains(i)).collect();
    let reduced = x.select_columns(&keep)?;
    let fit = fit_weighted_least_squares(&reduced, w, q).map_err(|e| match e {
        Error::RankDeficient { columns } => Error::RankDeficient {
            columns: columns.into_iter().map(|c| keep[c]).collect(),
        },
        other => other,
    })?;
    let mut b = vec![0.0; x.cols()];
    for (k, &i) in keep.iter().enumerate() {
        b[i] = fit.coefficients[k];
    }
    Ok((ValueVector::new(b)?, fit.fitted))
}

fn check_identity(
    identity: &'static str,
    lhs: f64,
    rhs: f64,
    scale: &[f64],
    tol: f64,
) -> Result<()> {
    let mut all = vec![lhs, rhs];
    all.extend_from_slice(scale);
    let error = tolerance::relative_error(lhs, rhs, &all);
    if error <= tol {
        Ok(())
    } else {
        Err(Error::IdentityViolation {
            identity,
            error,
            tolerance: tol,
        })
    }
}
