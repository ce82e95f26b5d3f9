//! Library results against independent computations: exact arithmetic,
//! direct evaluation of definitions, and second routes to the same value.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deltamean::algebra::{
    differential_remainder, direct_difference, dot, product_rule_delta, DeltaPair, ValueVector,
};
use deltamean::decomposition::{
    decompose_mean_change, per_predictor_breakdown, ContextData, Convention,
};
use deltamean::fisher::{
    allele_frequencies, delta_p_via_covariance, fundamental_theorem_term,
    marginal_fitness_and_excess, random_population, select,
};
use deltamean::price::{normalize_fitness, price_covariance_form, price_partition};
use deltamean::regression::{
    fit_weighted_least_squares, predicted_mean, weighted_covariance, weighted_mean, DesignMatrix,
};
use deltamean::sample;

use common::{exact_column_means, exact_dot, exact_dot_delta, exact_wls, rel, rows_of};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn dot_of_1000_elements_matches_exact() {
    let mut rng = rng(1);
    for _ in 0..20 {
        let a = sample::uniform_vec(&mut rng, 1000, -1e3, 1e3);
        let b = sample::uniform_vec(&mut rng, 1000, -1e3, 1e3);
        let got = dot(&a, &b).unwrap();
        let want = exact_dot(&a, &b);
        assert!(rel(got, want) <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn dot_survives_cancellation() {
    let a = vec![1e16, 1.0, -1e16, 1.0];
    let b = vec![1.0; 4];
    assert_eq!(dot(&a, &b).unwrap(), exact_dot(&a, &b));
    assert_eq!(dot(&a, &b).unwrap(), 2.0);
}

#[test]
fn product_rule_on_10_vectors_matches_exact_difference() {
    let mut rng = rng(2);
    for _ in 0..200 {
        let (b, x) = sample::delta_pairs(&mut rng, 10);
        let terms = product_rule_delta(&b, &x).unwrap();
        let exact = exact_dot(b.changed(), x.changed()) - exact_dot(b.initial(), x.initial());
        let scale = exact_dot(b.changed(), x.changed())
            .abs()
            .max(exact_dot(b.initial(), x.initial()).abs())
            .max(1.0);
        assert!((terms.total - exact).abs() <= 1e-12 * scale);
        let sum = terms.holding_coefficients + terms.coefficient_change;
        assert!((sum - terms.total).abs() <= 1e-12 * scale);
        // Each term against its own exact evaluation.
        let hold = exact_dot_delta(b.initial(), x.initial(), x.changed());
        let change = exact_dot_delta(x.changed(), b.initial(), b.changed());
        assert!((terms.holding_coefficients - hold).abs() <= 1e-12 * scale);
        assert!((terms.coefficient_change - change).abs() <= 1e-12 * scale);
        assert!((direct_difference(&b, &x).unwrap() - exact).abs() <= 1e-12 * scale);
    }
}

#[test]
fn remainder_is_small_relative_to_first_order() {
    for seed in 0..100 {
        let mut rng = rng(100 + seed);
        let n = rng.random_range(2..=20);
        let b = sample::uniform_vec(&mut rng, n, 1.0, 10.0);
        let x = sample::uniform_vec(&mut rng, n, 1.0, 10.0);
        let h = 1e-4;
        let db: Vec<f64> = sample::uniform_vec(&mut rng, n, 0.1, 1.0)
            .iter()
            .map(|v| v * h)
            .collect();
        let dx: Vec<f64> = sample::uniform_vec(&mut rng, n, 0.1, 1.0)
            .iter()
            .map(|v| v * h)
            .collect();
        let e = differential_remainder(&b, &db, &x, &dx).unwrap();
        assert!(e.remainder.abs() / e.first_order.abs() <= 10.0 * h);
        // First order plus remainder is the full finite difference.
        let bc: Vec<f64> = b.iter().zip(&db).map(|(a, d)| a + d).collect();
        let xc: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let full = direct_difference(
            &DeltaPair::from_vecs(b.clone(), bc).unwrap(),
            &DeltaPair::from_vecs(x.clone(), xc).unwrap(),
        )
        .unwrap();
        assert!((e.first_order + e.remainder - full).abs() <= 1e-12 * exact_dot(&b, &x).abs());
    }
}

#[test]
fn five_entity_fit_matches_exact_normal_equations() {
    let mut rng = rng(3);
    for _ in 0..100 {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| sample::uniform_vec(&mut rng, 2, -5.0, 5.0))
            .collect();
        let x = DesignMatrix::from_predictor_rows(&rows).unwrap();
        let z = sample::uniform_vec(&mut rng, 5, -10.0, 10.0);
        let q = sample::frequencies(&mut rng, 5);
        let fit = fit_weighted_least_squares(&x, &z, &q).unwrap();
        let want = exact_wls(&rows_of(&x), &z, &q);
        for (g, w) in fit.coefficients.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{g} vs {w}");
        }
    }
}

#[test]
fn weighted_mean_matches_exact() {
    let mut rng = rng(4);
    for _ in 0..100 {
        let n = rng.random_range(1..=500);
        let v = sample::uniform_vec(&mut rng, n, -1e4, 1e4);
        let q = sample::frequencies(&mut rng, n);
        let got = weighted_mean(&v, &q).unwrap();
        let want = exact_dot(&v, &q);
        assert!(rel(got, want) <= 1e-13);
    }
}

#[test]
fn weighted_covariance_matches_moment_identity() {
    let mut rng = rng(5);
    for _ in 0..100 {
        let n = rng.random_range(2..=100);
        let a = sample::uniform_vec(&mut rng, n, -10.0, 10.0);
        let b = sample::uniform_vec(&mut rng, n, -10.0, 10.0);
        let q = sample::frequencies(&mut rng, n);
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let want = exact_dot(&ab, &q) - exact_dot(&a, &q) * exact_dot(&b, &q);
        let got = weighted_covariance(&a, &b, &q).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn counterfactual_mean_matches_direct_dot() {
    let mut rng = rng(6);
    for _ in 0..50 {
        let (a, c) = sample::context_pair(&mut rng, 3, (30, 40)).unwrap();
        let fit = fit_weighted_least_squares(&a.design, &a.outcome, &a.frequencies).unwrap();
        let xbar = exact_column_means(&rows_of(&c.design), &c.frequencies);
        let got = predicted_mean(&fit, &xbar).unwrap();
        let want = exact_dot(&fit.coefficients, &xbar);
        assert!(rel(got, want) <= 1e-14);
    }
}

fn small_context(rng: &mut ChaCha8Rng, label: &str) -> ContextData {
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| sample::uniform_vec(rng, 2, 0.0, 10.0))
        .collect();
    ContextData::new(
        DesignMatrix::from_predictor_rows(&rows).unwrap(),
        ValueVector::new(sample::uniform_vec(rng, 6, -5.0, 20.0)).unwrap(),
        sample::frequencies(rng, 6),
        label,
    )
    .unwrap()
}

#[test]
fn six_entity_decomposition_matches_two_fit_oracle() {
    let mut rng = rng(7);
    for _ in 0..100 {
        let a = small_context(&mut rng, "a");
        let c = small_context(&mut rng, "c");
        let r = decompose_mean_change(&a, &c, Convention::PaperInitialReference).unwrap();
        let direct = exact_dot(&c.outcome, &c.frequencies) - exact_dot(&a.outcome, &a.frequencies);
        let scale = r
            .initial
            .mean_outcome
            .abs()
            .max(r.changed.mean_outcome.abs())
            .max(1.0);
        assert!((r.total_change - direct).abs() <= 1e-10 * scale);

        let ba = exact_wls(&rows_of(&a.design), &a.outcome, &a.frequencies);
        let bc = exact_wls(&rows_of(&c.design), &c.outcome, &c.frequencies);
        let xa = exact_column_means(&rows_of(&a.design), &a.frequencies);
        let xc = exact_column_means(&rows_of(&c.design), &c.frequencies);
        let fixed: f64 = (0..3).map(|i| ba[i] * (xc[i] - xa[i])).sum();
        let change: f64 = (0..3).map(|i| xc[i] * (bc[i] - ba[i])).sum();
        assert!((r.coefficients_fixed_term - fixed).abs() <= 1e-10 * scale);
        assert!((r.coefficient_change_term - change).abs() <= 1e-10 * scale);
    }
}

#[test]
fn per_predictor_contributions_sum_to_terms() {
    let mut rng = rng(8);
    for convention in [
        Convention::PaperInitialReference,
        Convention::ChangedReference,
        Convention::Threefold,
    ] {
        for _ in 0..30 {
            let (a, c) = sample::context_pair(&mut rng, 4, (25, 35)).unwrap();
            let r = decompose_mean_change(&a, &c, convention).unwrap();
            let rows = per_predictor_breakdown(&r);
            let scale = r
                .coefficients_fixed_term
                .abs()
                .max(r.coefficient_change_term.abs())
                .max(1.0);
            let fixed: f64 = rows.iter().map(|p| p.coefficients_fixed).sum();
            let change: f64 = rows.iter().map(|p| p.coefficient_change).sum();
            assert!((fixed - r.coefficients_fixed_term).abs() <= 1e-12 * scale);
            assert!((change - r.coefficient_change_term).abs() <= 1e-12 * scale);
            if let Some(t) = r.interaction_term {
                let inter: f64 = rows.iter().map(|p| p.interaction.unwrap()).sum();
                assert!((inter - t).abs() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn price_total_matches_direct_mean_difference() {
    let mut rng = rng(9);
    for _ in 0..200 {
        let pop = sample::paired_population(&mut rng, 8).unwrap();
        let p = price_partition(&pop);
        let direct = exact_dot(pop.values_changed(), pop.frequencies_changed())
            - exact_dot(pop.values_initial(), pop.frequencies_initial());
        let scale = p
            .selection_term
            .abs()
            .max(p.transmission_term.abs())
            .max(1.0);
        assert!((p.total - direct).abs() <= 1e-12 * scale);
        assert!((p.selection_term + p.transmission_term - direct).abs() <= 1e-12 * scale);
    }
}

#[test]
fn covariance_form_matches_dot_form_termwise() {
    let mut rng = rng(10);
    for _ in 0..200 {
        let pop = sample::paired_population(&mut rng, 8).unwrap();
        let d = price_partition(&pop);
        let c = price_covariance_form(&pop).unwrap();
        let scale = d
            .selection_term
            .abs()
            .max(d.transmission_term.abs())
            .max(1.0);
        assert!((d.selection_term - c.selection_term).abs() <= 1e-12 * scale);
        assert!((d.transmission_term - c.transmission_term).abs() <= 1e-12 * scale);
    }
}

#[test]
fn normalized_fitness_has_unit_mean() {
    let mut rng = rng(11);
    for _ in 0..200 {
        let n = rng.random_range(1..=100);
        let w = sample::uniform_vec(&mut rng, n, 0.0, 50.0);
        let q = sample::frequencies(&mut rng, n);
        let wn = normalize_fitness(&w, &q).unwrap();
        assert!((exact_dot(&wn, &q) - 1.0).abs() <= 1e-15);
    }
}

#[test]
fn allele_frequencies_are_column_means() {
    let mut rng = rng(12);
    for _ in 0..50 {
        let pop = random_population(&mut rng, 5, 40, 0.1, 0.05).unwrap();
        let p = allele_frequencies(&pop);
        let want = exact_column_means(&rows_of(pop.genotypes()), pop.frequencies());
        for i in 1..p.len() {
            assert!((p[i] - want[i]).abs() <= 1e-14);
        }
    }
}

#[test]
fn selection_renormalizes_by_fitness() {
    let mut rng = rng(13);
    for _ in 0..50 {
        let pop = random_population(&mut rng, 4, 32, 0.2, 0.1).unwrap();
        let next = select(&pop).unwrap();
        let qn = next.frequencies();
        assert!((exact_dot(qn, &vec![1.0; qn.len()]) - 1.0).abs() <= 1e-14);
        let wbar = exact_dot(pop.fitness(), pop.frequencies());
        for j in 0..qn.len() {
            let want = pop.frequencies()[j] * pop.fitness()[j] / wbar;
            assert!((qn[j] - want).abs() <= 1e-14);
        }
    }
}

#[test]
fn average_excess_reproduces_delta_p() {
    let mut rng = rng(14);
    for _ in 0..50 {
        let pop = random_population(&mut rng, 6, 48, 0.2, 0.1).unwrap();
        let p = allele_frequencies(&pop);
        let pc = allele_frequencies(&select(&pop).unwrap());
        let m = marginal_fitness_and_excess(&p, &pc).unwrap();
        for i in 1..p.len() {
            if let Some(alpha) = m.excess[i] {
                assert!((p[i] * alpha - (pc[i] - p[i])).abs() <= 1e-12);
                assert!((m.marginal[i].unwrap() - 1.0 - alpha).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn delta_p_two_routes_agree() {
    let mut rng = rng(15);
    for _ in 0..50 {
        let pop = random_population(&mut rng, 5, 64, 0.2, 0.1).unwrap();
        let via_cov = delta_p_via_covariance(&pop).unwrap();
        let p = allele_frequencies(&pop);
        let pc = allele_frequencies(&select(&pop).unwrap());
        for i in 1..p.len() {
            assert!((via_cov[i] - (pc[i] - p[i])).abs() <= 1e-12);
        }
    }
}

#[test]
fn four_locus_epistatic_summary_matches_brute_force() {
    let mut rng = rng(16);
    for _ in 0..20 {
        let pop = random_population(&mut rng, 4, 32, 0.2, 0.1).unwrap();
        let s = fundamental_theorem_term(&pop).unwrap();
        let x = pop.genotypes();
        let q = pop.frequencies();
        let keep: Vec<usize> = (0..x.cols())
            .filter(|i| !s.fixed_loci.contains(i))
            .collect();
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .map(|j| keep.iter().map(|&i| x.get(j, i)).collect())
            .collect();

        // Every sum straight from the definitions.
        let wbar = exact_dot(pop.fitness(), q);
        let w: Vec<f64> = pop.fitness().iter().map(|v| v / wbar).collect();
        let qc: Vec<f64> = (0..q.len()).map(|j| q[j] * w[j]).collect();
        let b = exact_wls(&rows, &w, q);
        let g: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&b).map(|(x, b)| x * b).sum())
            .collect();
        let gbar = exact_dot(&g, q);
        let gc: Vec<f64> = g.iter().map(|v| v - gbar).collect();
        let var: f64 = (0..q.len()).map(|j| q[j] * gc[j] * gc[j]).sum();
        let cov: f64 = (0..q.len()).map(|j| q[j] * gc[j] * (w[j] - 1.0)).sum();
        let ftns: f64 = keep
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &i)| {
                let col = x.column(i);
                b[k] * (exact_dot(&col, &qc) - exact_dot(&col, q))
            })
            .sum();
        let total = exact_dot(&w, &qc) - exact_dot(&w, q);

        for (got, want) in [
            (s.ftns_term, ftns),
            (s.genetic_variance, var),
            (s.genetic_covariance, cov),
            (s.total_change, total),
        ] {
            assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
        }
        assert!((s.ftns_term - s.genetic_covariance).abs() <= 1e-10);
        assert!((s.genetic_covariance - s.genetic_variance).abs() <= 1e-10);
        assert!((s.ftns_term + s.environment_term - s.total_change).abs() <= 1e-10);
    }
}
