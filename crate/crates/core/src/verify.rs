//! Randomized identity suite behind `deltamean verify`.
//!
//! Case `i` under seed `s` draws from `ChaCha8Rng::seed_from_u64(s)` on
//! stream `i`, so any single case can be replayed from `(s, i)` alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{direct_difference, dot, product_rule_delta};
use crate::decomposition::{decompose_mean_change, Convention};
use crate::error::Result;
use crate::fisher::{fundamental_theorem_term, random_population};
use crate::price::{price_covariance_form, price_partition};
use crate::regression::{fit_weighted_least_squares, weighted_mean};
use crate::{sample, tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    ProductRule,
    RegressionResiduals,
    DecompositionClosure,
    FisherClosure,
    FisherVariance,
    PriceClosure,
    PriceForms,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::ProductRule,
        Check::RegressionResiduals,
        Check::DecompositionClosure,
        Check::FisherClosure,
        Check::FisherVariance,
        Check::PriceClosure,
        Check::PriceForms,
    ];

    pub fn tolerance(self) -> f64 {
        match self {
            Check::ProductRule => tolerance::PRODUCT_RULE,
            Check::RegressionResiduals => tolerance::RESIDUAL_ORTHOGONALITY,
            Check::DecompositionClosure => tolerance::DECOMPOSITION_CLOSURE,
            Check::FisherClosure | Check::FisherVariance => tolerance::FISHER,
            Check::PriceClosure | Check::PriceForms => tolerance::PRICE,
        }
    }

    /// Whether the check measures a closure (sum of terms against a total).
    pub fn is_closure(self) -> bool {
        matches!(
            self,
            Check::ProductRule
                | Check::DecompositionClosure
                | Check::FisherClosure
                | Check::PriceClosure
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub cases: usize,
    /// Run only this case index (for replay).
    pub only_case: Option<usize>,
    /// Adds a spurious error to one check. Exercises the failure path.
    #[doc(hidden)]
    pub inject_fault: Option<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckStat {
    pub check: Check,
    pub runs: usize,
    pub worst_error: f64,
    pub tolerance: f64,
}

/// Enough to replay a failure: `verify --seed <seed> --case <case_index>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailingCase {
    pub seed: u64,
    pub case_index: usize,
    pub check: Check,
    pub error: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub cases_run: usize,
    pub passed: bool,
    pub worst_closure_error: f64,
    pub checks: Vec<CheckStat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailingCase>,
}

struct Tally {
    stats: Vec<CheckStat>,
    failure: Option<FailingCase>,
    seed: u64,
    inject: Option<Check>,
}

impl Tally {
    fn record(
        &mut self,
        case_index: usize,
        check: Check,
        mut error: f64,
        detail: impl FnOnce() -> String,
    ) {
        if self.inject == Some(check) {
            error += 1.0;
        }
        let stat = self
            .stats
            .iter_mut()
            .find(|s| s.check == check)
            .expect("every check has a slot");
        stat.runs += 1;
        if error.is_nan() || error > stat.worst_error {
            stat.worst_error = error;
        }
        if (error.is_nan() || error > stat.tolerance) && self.failure.is_none() {
            self.failure = Some(FailingCase {
                seed: self.seed,
                case_index,
                check,
                error,
                tolerance: stat.tolerance,
                detail: detail(),
            });
        }
    }

    fn fail(&mut self, case_index: usize, check: Check, err: crate::Error) {
        self.record(case_index, check, f64::INFINITY, || err.to_string());
    }
}

pub fn case_rng(seed: u64, case_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case_index as u64);
    rng
}

pub fn run(options: &VerifyOptions) -> VerifyReport {
    let mut tally = Tally {
        stats: Check::ALL
            .iter()
            .map(|&check| CheckStat {
                check,
                runs: 0,
                worst_error: 0.0,
                tolerance: check.tolerance(),
            })
            .collect(),
        failure: None,
        seed: options.seed,
        inject: options.inject_fault,
    };
    let indices: Vec<usize> = match options.only_case {
        Some(i) => vec![i],
        None => (0..options.cases).collect(),
    };
    for &i in &indices {
        run_case(options.seed, i, &mut tally);
        if tally.failure.is_some() {
            break;
        }
    }
    let cases_run = tally.stats[0].runs;
    let worst_closure_error = tally
        .stats
        .iter()
        .filter(|s| s.check.is_closure())
        .fold(0.0_f64, |m, s| m.max(s.worst_error));
    VerifyReport {
        seed: options.seed,
        cases_run,
        passed: tally.failure.is_none(),
        worst_closure_error,
        checks: tally.stats,
        failure: tally.failure,
    }
}

fn run_case(seed: u64, i: usize, tally: &mut Tally) {
    let mut rng = case_rng(seed, i);

    let len = rng.random_range(1..=100);
    let (b, x) = sample::delta_pairs(&mut rng, len);
    match product_rule_delta(&b, &x).and_then(|t| {
        let direct = direct_difference(&b, &x)?;
        let scale = [
            dot(b.changed(), x.changed())?,
            dot(b.initial(), x.initial())?,
        ];
        Ok((t.total, direct, scale))
    }) {
        Ok((total, direct, scale)) => tally.record(
            i,
            Check::ProductRule,
            tolerance::relative_error(total, direct, &scale),
            || format!("length {len}: terms {total:e} vs direct {direct:e}"),
        ),
        Err(e) => tally.fail(i, Check::ProductRule, e),
    }

    let predictors = rng.random_range(2..=6);
    let entities = rng.random_range(20..=60);
    match sample::dataset(&mut rng, predictors, entities, 2.0, "case")
        .and_then(|ctx| residual_error(&ctx))
    {
        Ok(err) => tally.record(i, Check::RegressionResiduals, err, || {
            format!("{predictors} predictors, {entities} entities")
        }),
        Err(e) => tally.fail(i, Check::RegressionResiduals, e),
    }

    let predictors = rng.random_range(1..=5);
    let sizes = (rng.random_range(12..=60), rng.random_range(12..=60));
    match sample::context_pair(&mut rng, predictors, sizes) {
        Ok((a, c)) => {
            for convention in [
                Convention::PaperInitialReference,
                Convention::ChangedReference,
                Convention::Threefold,
            ] {
                match decompose_mean_change(&a, &c, convention) {
                    Ok(r) => tally.record(
                        i,
                        Check::DecompositionClosure,
                        r.relative_closure_error(),
                        || format!("{convention:?}: closure error {:e}", r.closure_error),
                    ),
                    Err(e) => tally.fail(i, Check::DecompositionClosure, e),
                }
            }
        }
        Err(e) => tally.fail(i, Check::DecompositionClosure, e),
    }

    let loci = rng.random_range(2..=6);
    let entities = rng.random_range(16..=64);
    let epistasis = if rng.random::<bool>() { 0.1 } else { 0.0 };
    match random_population(&mut rng, loci, entities, 0.2, epistasis)
        .and_then(|p| fundamental_theorem_term(&p))
    {
        Ok(s) => {
            tally.record(i, Check::FisherClosure, s.closure_error(), || {
                format!(
                    "{loci} loci, {entities} entities: b·Δp + p'·Δb − Δw̄ = {:e}",
                    s.ftns_term + s.environment_term - s.total_change
                )
            });
            let err = (s.ftns_term - s.genetic_variance)
                .abs()
                .max((s.genetic_covariance - s.genetic_variance).abs());
            tally.record(i, Check::FisherVariance, err, || {
                format!(
                    "Σ bΔp {:e}, Cov(g,w) {:e}, Var(g) {:e}",
                    s.ftns_term, s.genetic_covariance, s.genetic_variance
                )
            });
        }
        Err(e) => {
            tally.fail(i, Check::FisherClosure, e.clone());
            tally.fail(i, Check::FisherVariance, e);
        }
    }

    let entities = rng.random_range(2..=30);
    match sample::paired_population(&mut rng, entities).and_then(|pop| {
        let dot_form = price_partition(&pop);
        let cov_form = price_covariance_form(&pop)?;
        Ok((dot_form, cov_form))
    }) {
        Ok((d, c)) => {
            let closure = d.closure_error().max(c.closure_error());
            tally.record(i, Check::PriceClosure, closure, || format!("{d:?} / {c:?}"));
            let scale = [
                d.selection_term,
                d.transmission_term,
                c.selection_term,
                c.transmission_term,
            ];
            let forms = tolerance::relative_error(d.selection_term, c.selection_term, &scale).max(
                tolerance::relative_error(d.transmission_term, c.transmission_term, &scale),
            );
            tally.record(i, Check::PriceForms, forms, || format!("{d:?} / {c:?}"));
        }
        Err(e) => {
            tally.fail(i, Check::PriceClosure, e.clone());
            tally.fail(i, Check::PriceForms, e);
        }
    }
}

/// Largest of the weighted mean residual and the per-column residual
/// moments, each relative to `max(‖z‖_q ‖x_i‖_q, 1)`.
pub fn residual_error(ctx: &crate::decomposition::ContextData) -> Result<f64> {
    let q = &ctx.frequencies;
    let fit = fit_weighted_least_squares(&ctx.design, &ctx.outcome, q)?;
    let z_norm = weighted_mean(&ctx.outcome.iter().map(|v| v * v).collect::<Vec<_>>(), q)?.sqrt();
    let mut worst = 0.0_f64;
    for i in 0..ctx.design.cols() {
        let col = ctx.design.column(i);
        let x_norm = weighted_mean(&col.iter().map(|v| v * v).collect::<Vec<_>>(), q)?.sqrt();
        let moment: Vec<f64> = fit.residuals.iter().zip(&col).map(|(e, x)| e * x).collect();
        let scale = (z_norm * x_norm).max(1.0);
        worst = worst.max(weighted_mean(&moment, q)?.abs() / scale);
    }
    Ok(worst)
}
