//! Library results checked against the direct computations in `common`.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use dpdensity::adaptive::{penalty_lambda1, BetaGrid, PenalizedBias, SelectionTrace};
use dpdensity::densities::{make_trig_density, rejection_sample, Fixture};
use dpdensity::estimator::{fit, theoretical_rate, variance_bound, RateQuery};
use dpdensity::experiments::{mise, quadrature_mise};
use dpdensity::fourier::{empirical_coefficients, CoefficientGrid, Point};
use dpdensity::privacy::{seeded_rng, sigma_for_cutoff, PrivacyBudget};

use common::{box_indices, eval_direct, rate};

fn points(raw: &[Vec<f64>]) -> Vec<Point> {
    raw.iter().map(|c| Point::new(c.clone()).unwrap()).collect()
}

fn unit_points(dim: usize, count: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..=1.0f64, dim), 1..count)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn empirical_coefficients_match_direct_averages(dim in 1usize..=3, m in 0usize..=3, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let raw: Vec<Vec<f64>> = (0..17).map(|_| (0..dim).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()).collect();
        let grid = empirical_coefficients(&points(&raw), m).unwrap();
        let idx = box_indices(dim, m as i64);
        for (k, got) in idx.iter().zip(grid.values()) {
            let one = [Complex64::new(1.0, 0.0)];
            let want: Complex64 = raw.iter().map(|x| eval_direct(std::slice::from_ref(k), &one, x).conj()).sum::<Complex64>() / raw.len() as f64;
            prop_assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn grid_evaluation_matches_direct_sum(m in 0usize..=4, values in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 9), x in 0.0..1.0f64) {
        let vals: Vec<Complex64> = values[..2 * m + 1].iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        let grid = CoefficientGrid::from_values(1, m, vals.clone()).unwrap();
        let want = eval_direct(&box_indices(1, m as i64), &vals, &[x]);
        prop_assert!((grid.evaluate_complex(&[x]).unwrap() - want).norm() < 1e-12);
    }

    #[test]
    fn rate_matches_closed_form(n in 3.0..1e7f64, rho in 1e-4..1e2f64, beta in 0.05..5.0f64, d in 1usize..=4) {
        let q = RateQuery::new(n, PrivacyBudget::new(rho).unwrap(), beta, d).unwrap();
        let got = theoretical_rate(&q).value;
        let want = rate(n, rho, beta, d as f64);
        prop_assert!((got / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_grid_is_evenly_spaced(log_n in 1.2..12.0f64, eps in 0.05..=0.5f64) {
        let n = log_n.exp();
        let g = BetaGrid::new(n, eps).unwrap();
        let k = (n.ln().powi(2) / eps).floor() as usize;
        prop_assert!(g.len() == k || g.len() + 1 == k || g.len() == k + 1);
        let b = g.betas();
        for w in b.windows(2) {
            prop_assert!(((w[0] - w[1]) - eps / n.ln()).abs() < 1e-12);
        }
        prop_assert!(*b.last().unwrap() >= 0.0);
    }

    #[test]
    fn noiseless_fit_is_hermitian(raw in unit_points(2, 40), m in 0usize..=3) {
        let est = fit(&points(&raw), m, None, &mut seeded_rng(0)).unwrap();
        prop_assert!(est.coeffs().hermitian_defect() < 1e-12);
        prop_assert!((est.coeffs().values()[est.coeffs().zero_index()] - 1.0).norm() < 1e-12);
    }
}

#[test]
fn variance_bound_holds_on_average_for_a_trig_truth() {
    let mut rng = seeded_rng(31);
    let truth = make_trig_density(2.0, 2.0, 6, 1, &mut rng).unwrap();
    let fixture = Fixture::Trig(truth.clone());
    let (n, m, rho) = (400usize, 4usize, PrivacyBudget::new(0.5).unwrap());
    let reps = 400;
    let total: f64 = (0..reps)
        .map(|_| {
            let data = rejection_sample(&fixture, n, &mut rng).unwrap();
            let est = fit(&data, m, Some(rho), &mut rng).unwrap();
            let proj = truth.coeffs().project(m);
            dpdensity::fourier::l2_distance_sq(est.coeffs(), &proj).unwrap()
        })
        .sum();
    let mean = total / reps as f64;
    let bound = variance_bound(n, m, 1, sigma_for_cutoff(n, rho, m, 1));
    let independent = (2 * m + 1) as f64 / n as f64 + 2.0 * (2 * m + 1) as f64 * 4.0 * (2 * m + 1) as f64 / (n * n) as f64 / 0.5;
    assert!((bound - independent).abs() < 1e-12 * independent, "{bound} vs {independent}");
    assert!(mean <= bound * (1.0 + 5.0 / (reps as f64).sqrt()), "{mean} > {bound}");
}

#[test]
fn rejection_sampler_reproduces_coefficients() {
    let mut rng = seeded_rng(41);
    let truth = make_trig_density(1.5, 2.0, 5, 2, &mut rng).unwrap();
    let n = 100_000;
    let data = rejection_sample(&Fixture::Trig(truth.clone()), n, &mut rng).unwrap();
    let emp = empirical_coefficients(&data, 5).unwrap();
    let tol = 4.0 / (n as f64).sqrt();
    for (a, b) in emp.values().iter().zip(truth.coeffs().values()) {
        assert!((a - b).norm() <= tol, "{a} vs {b}");
    }
}

#[test]
fn parseval_mise_agrees_with_quadrature() {
    let mut rng = seeded_rng(51);
    let truth = make_trig_density(1.0, 2.0, 8, 1, &mut rng).unwrap();
    let fixture = Fixture::Trig(truth);
    for m in [2usize, 8, 12] {
        let data = rejection_sample(&fixture, 500, &mut rng).unwrap();
        let est = fit(&data, m, Some(PrivacyBudget::new(1.0).unwrap()), &mut rng).unwrap();
        let a = mise(&est, &fixture).unwrap();
        let b = quadrature_mise(&est, &fixture);
        assert!((a - b).abs() <= 1e-6 * a.max(1e-3), "M={m}: {a} vs {b}");
    }
}

#[test]
fn penalized_bias_trace_is_consistent() {
    let mut rng = seeded_rng(61);
    let data: Vec<Point> = (0..2000).map(|_| Point::new(vec![rand::Rng::random::<f64>(&mut rng)]).unwrap()).collect();
    let rho = PrivacyBudget::new(1.0).unwrap();
    let sel = PenalizedBias::new(vec![1, 2, 4, 8, 16]).unwrap().select(&data, rho, &mut rng).unwrap();
    let SelectionTrace::PenalizedBias(t) = &sel.trace else { panic!("wrong trace") };
    let rho_prime = PrivacyBudget::new(0.2).unwrap();
    let floor = t.candidates.iter().map(|c| penalty_lambda1(c.cutoff, 2000, rho_prime, 1)).fold(f64::INFINITY, f64::min);
    for c in &t.candidates {
        assert!(c.bias_sq.is_finite() && c.bias_sq >= -floor - 1e-12);
        let k = (2 * c.cutoff + 1) as f64;
        let lambda1 = 96.0 * k / 2000.0 + 96.0 * k * k / (2000.0 * 2000.0 * 0.2);
        assert!((c.lambda1 - lambda1).abs() < 1e-12 * lambda1);
        assert!((c.lambda2 - lambda1 - 16.0 * k * k / (2000.0 * 2000.0 * 0.2)).abs() < 1e-12 * lambda1);
    }
    let best = t.candidates.iter().map(|c| c.criterion).fold(f64::INFINITY, f64::min);
    let first = t.candidates.iter().position(|c| c.criterion == best).unwrap();
    assert_eq!(t.selected, first);
    assert_eq!(sel.trace.replay(), sel.trace.selected());
    assert!((t.rho_spent - 1.0).abs() < 1e-12);
}
