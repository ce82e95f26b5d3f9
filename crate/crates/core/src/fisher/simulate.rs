//! Deterministic multi-generation haploid selection.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, drawn in a fixed
//! order: additive effects (unless given), environmental drift directions,
//! pairwise epistasis for each `i < k`, initial entity weights, then
//! genotypes. Uniform draws use `rand`'s `f64` standard distribution mapped
//! linearly onto the target interval.
//!
//! Fitness in generation `t` is
//! `w_j = max(0, 1 + Σ_i (a_i + t·shift·d_i) x_ij + Σ_{i<k} e_ik x_ij x_kj)`.
//! The fitness regression only has main-effect columns, so epistasis ends
//! up in the residual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fundamental_theorem_term, select, HaploidPopulation, SelectionSummary};
use crate::algebra::ValueVector;
use crate::error::{Error, Result};
use crate::regression::{fit_weighted_least_squares, DesignMatrix, FrequencyVector};

const GENOTYPE_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub loci: usize,
    pub entities: usize,
    pub generations: usize,
    /// Explicit per-locus effects; drawn from `±additive_scale` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additive_effects: Option<Vec<f64>>,
    #[serde(default = "default_additive_scale")]
    pub additive_scale: f64,
    /// Pairwise interaction effects are drawn from `±epistasis`.
    #[serde(default)]
    pub epistasis: f64,
    /// Per-generation drift of the additive effects.
    #[serde(default)]
    pub environment_shift: f64,
}

fn default_additive_scale() -> f64 {
    0.1
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            loci: 4,
            entities: 32,
            generations: 20,
            additive_effects: None,
            additive_scale: default_additive_scale(),
            epistasis: 0.05,
            environment_shift: 0.01,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |field: &str, message: String| {
            Err(Error::InvalidConfig {
                field: field.into(),
                message,
            })
        };
        if self.loci < 1 {
            return invalid("loci", "at least one locus is required".into());
        }
        if self.entities < 2 {
            return invalid("entities", "at least two entities are required".into());
        }
        if let Some(effects) = &self.additive_effects {
            if effects.len() != self.loci {
                return invalid(
                    "additive_effects",
                    format!("expected {} entries, found {}", self.loci, effects.len()),
                );
            }
            if let Some(i) = effects.iter().position(|v| !v.is_finite()) {
                return invalid(&format!("additive_effects[{i}]"), "not finite".into());
            }
        }
        for (field, value) in [
            ("additive_scale", self.additive_scale),
            ("epistasis", self.epistasis),
            ("environment_shift", self.environment_shift),
        ] {
            if !value.is_finite() || value < 0.0 {
                return invalid(
                    field,
                    format!("must be finite and nonnegative, got {value}"),
                );
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SimulationStatus {
    Completed,
    /// The run ended early; summaries cover generations before `generation`.
    Stopped {
        generation: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub status: SimulationStatus,
    /// One summary per completed generation, in order.
    pub summaries: Vec<SelectionSummary>,
}

struct FitnessModel {
    additive: Vec<f64>,
    drift: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
    shift: f64,
}

impl FitnessModel {
    fn draw(rng: &mut ChaCha8Rng, loci: usize, config: &SimulationConfig) -> Self {
        let additive = match &config.additive_effects {
            Some(a) => a.clone(),
            None => (0..loci)
                .map(|_| symmetric(rng, config.additive_scale))
                .collect(),
        };
        let drift = (0..loci).map(|_| symmetric(rng, 1.0)).collect();
        let mut pairs = Vec::new();
        for i in 0..loci {
            for k in i + 1..loci {
                pairs.push((i, k, symmetric(rng, config.epistasis)));
            }
        }
        Self {
            additive,
            drift,
            pairs,
            shift: config.environment_shift,
        }
    }

    fn fitness(&self, genotypes: &DesignMatrix, generation: usize) -> Vec<f64> {
        let t = generation as f64;
        (0..genotypes.rows())
            .map(|j| {
                let x = &genotypes.row(j)[1..];
                let mut w = 1.0;
                for (i, xi) in x.iter().enumerate() {
                    w += (self.additive[i] + t * self.shift * self.drift[i]) * xi;
                }
                for &(i, k, e) in &self.pairs {
                    w += e * x[i] * x[k];
                }
                w.max(0.0)
            })
            .collect()
    }
}

/// Uniform on `[-scale, scale]`.
fn symmetric(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    scale * (2.0 * rng.random::<f64>() - 1.0)
}

fn draw_weights(rng: &mut ChaCha8Rng, entities: usize) -> Result<FrequencyVector> {
    FrequencyVector::from_unnormalized((0..entities).map(|_| 0.5 + rng.random::<f64>()).collect())
}

/// Draws 0/1 genotypes until the segregating loci give a full-rank design.
fn draw_genotypes(
    rng: &mut ChaCha8Rng,
    loci: usize,
    entities: usize,
    q: &FrequencyVector,
) -> Result<DesignMatrix> {
    let mut last_err = None;
    for _ in 0..GENOTYPE_ATTEMPTS {
        let rows: Vec<Vec<f64>> = (0..entities)
            .map(|_| {
                (0..loci)
                    .map(|_| f64::from(u8::from(rng.random::<bool>())))
                    .collect()
            })
            .collect();
        let x = DesignMatrix::from_predictor_rows(&rows)?;
        let probe = HaploidPopulation::new(x.clone(), q.clone(), ValueVector::zeros(entities))?;
        let mut keep = vec![0];
        keep.extend((1..=loci).filter(|i| !probe.fixed_loci().contains(i)));
        match fit_weighted_least_squares(&x.select_columns(&keep)?, &vec![0.0; entities], q) {
            Ok(_) => return Ok(x),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// A random population with fitness from generation 0 of the model above.
pub fn random_population(
    rng: &mut ChaCha8Rng,
    loci: usize,
    entities: usize,
    additive_scale: f64,
    epistasis: f64,
) -> Result<HaploidPopulation> {
    let config = SimulationConfig {
        loci,
        entities,
        additive_scale,
        epistasis,
        environment_shift: 0.0,
        ..SimulationConfig::default()
    };
    let model = FitnessModel::draw(rng, loci, &config);
    let q = draw_weights(rng, entities)?;
    let x = draw_genotypes(rng, loci, entities, &q)?;
    let w = model.fitness(&x, 0);
    HaploidPopulation::new(x, q, ValueVector::new(w)?)
}

/// Runs `config.generations` rounds of selection, summarizing each.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = FitnessModel::draw(&mut rng, config.loci, config);
    let mut q = draw_weights(&mut rng, config.entities)?;
    let genotypes = match draw_genotypes(&mut rng, config.loci, config.entities, &q) {
        Ok(x) => x,
        Err(e) => {
            return Ok(SimulationRun {
                status: SimulationStatus::Stopped {
                    generation: 0,
                    reason: e.to_string(),
                },
                summaries: Vec::new(),
            })
        }
    };

    let mut summaries = Vec::with_capacity(config.generations);
    for generation in 0..config.generations {
        let w = ValueVector::new(model.fitness(&genotypes, generation))?;
        let pop = HaploidPopulation::new(genotypes.clone(), q, w)?;
        let step = fundamental_theorem_term(&pop).and_then(|s| Ok((s, select(&pop)?)));
        match step {
            Ok((summary, next)) => {
                summaries.push(summary);
                q = next.frequencies().clone();
            }
            Err(e) => {
                return Ok(SimulationRun {
                    status: SimulationStatus::Stopped {
                        generation,
                        reason: e.to_string(),
                    },
                    summaries,
                })
            }
        }
    }
    Ok(SimulationRun {
        status: SimulationStatus::Completed,
        summaries,
    })
}
