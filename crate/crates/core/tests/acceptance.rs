//! Acceptance suite. Each test prints one `criterion N [PASS|FAIL]` line to
//! stderr and then asserts its verdict.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use dpdensity::adaptive::{risk_series, Lepskii};
use dpdensity::densities::{exact_bias, random_theta, rejection_sample, Density, Fixture, PackingDensity, UniformDensity};
use dpdensity::estimator::fit;
use dpdensity::experiments::{chi2_tail_check, run_sweep, ExperimentConfig, ExperimentRecord, Mode, Sweep};
use dpdensity::fourier::CoefficientGrid;
use dpdensity::privacy::{
    add_noise, coefficient_sensitivity, derive_seed, gaussian_sigma, seeded_rng, sigma_for_cutoff, stream_rng,
    NoiseScale, PrivacyBudget,
};

use common::{box_indices, eval_direct, median, ols, rate, report};

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn acceptance_sweep(name: &str) -> Sweep {
    let cfg = ExperimentConfig::load(&config_dir().join("acceptance.json")).expect("acceptance config");
    let sc = cfg.sweeps.iter().find(|s| s.name == name).expect("sweep present");
    Sweep::from_config(sc, &config_dir()).expect("sweep resolves")
}

fn rho(v: f64) -> PrivacyBudget {
    PrivacyBudget::new(v).unwrap()
}

fn conclude(id: u32, title: &str, pass: bool, detail: String, started: Instant, limit: Option<Duration>) {
    let elapsed = started.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let detail = match limit {
        Some(l) => format!("{detail}; {:.2}s (limit {}s)", elapsed.as_secs_f64(), l.as_secs()),
        None => format!("{detail}; {:.1}s", elapsed.as_secs_f64()),
    };
    report(id, title, pass && in_time, &detail);
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(in_time, "criterion {id} exceeded its time limit: {detail}");
}

fn cell_means(records: &[ExperimentRecord], mode: &str) -> Vec<(usize, f64, f64)> {
    let mut cells: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for r in records.iter().filter(|r| r.mode == mode) {
        match cells.iter_mut().find(|c| c.0 == r.n && c.1 == r.rho) {
            Some(c) => c.2.push(r.mise),
            None => cells.push((r.n, r.rho, vec![r.mise])),
        }
    }
    cells.into_iter().map(|(n, rho, v)| (n, rho, v.iter().sum::<f64>() / v.len() as f64)).collect()
}

#[test]
fn criterion_01_calibration_identity() {
    let t0 = Instant::now();
    let mut worst = 0u64;
    let mut count = 0;
    for n in [1usize, 10, 100, 1000] {
        for m in 0..=8 {
            for d in 1..=3 {
                for r in [0.01, 0.1, 1.0, 10.0] {
                    let direct = sigma_for_cutoff(n, rho(r), m, d).sigma();
                    let two_step = gaussian_sigma(coefficient_sensitivity(n, m, d), rho(r)).unwrap().sigma();
                    worst = worst.max(direct.to_bits().abs_diff(two_step.to_bits()));
                    count += 1;
                }
            }
        }
    }
    conclude(
        1,
        "calibration identity",
        worst <= 2,
        format!("{count} tuples, worst gap {worst} ulp"),
        t0,
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn criterion_02_parseval_cross_check() {
    let t0 = Instant::now();
    let mut rng = seeded_rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(0..=4usize);
        let values: Vec<Complex64> =
            (0..2 * m + 1).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let grid = CoefficientGrid::from_values(1, m, values.clone()).unwrap();
        let idx = box_indices(1, m as i64);
        let quad: f64 = (0..4096).map(|j| eval_direct(&idx, &values, &[j as f64 / 4096.0]).norm_sqr()).sum::<f64>() / 4096.0;
        worst = worst.max((grid.l2_norm_sq() - quad).abs());
    }
    conclude(2, "Parseval cross-check", worst < 1e-6, format!("20 grids, worst gap {worst:.3e}"), t0, Some(Duration::from_secs(5)));
}

#[test]
fn criterion_03_bias_bound() {
    let t0 = Instant::now();
    let Fixture::Trig(truth) = acceptance_sweep("penalized-bias").truth else { panic!("trig fixture expected") };
    let l2 = truth.radius().powi(2);
    let idx = box_indices(1, truth.coeffs().cutoff() as i64);
    let mut pass = true;
    let mut tightest = f64::INFINITY;
    for m in 0..=16usize {
        let oracle: f64 = idx
            .iter()
            .zip(truth.coeffs().values())
            .filter(|(k, _)| k[0].unsigned_abs() as usize > m)
            .map(|(_, v)| v.norm_sqr())
            .sum();
        let lib = exact_bias(&truth, m);
        let bound = l2 / TAU4 * ((m + 1) as f64).powi(-4);
        pass &= (lib - oracle).abs() <= 1e-15 && lib <= bound;
        if lib > 0.0 {
            tightest = tightest.min(bound / lib);
        }
    }
    conclude(
        3,
        "bias bound",
        pass,
        format!("M = 0..16, smallest bound/bias ratio {tightest:.3}"),
        t0,
        Some(Duration::from_secs(1)),
    );
}

const TAU4: f64 = std::f64::consts::TAU * std::f64::consts::TAU * std::f64::consts::TAU * std::f64::consts::TAU;

#[test]
fn criterion_04_variance_bound() {
    let t0 = Instant::now();
    let reps = 500;
    let mut pass = true;
    let mut details = Vec::new();
    for (ci, n) in [1000usize, 10_000].into_iter().enumerate() {
        for m in [3usize, 7] {
            let total: f64 = (0..reps)
                .map(|r| {
                    let mut rng = stream_rng(derive_seed(4, (ci * 10 + m) as u64), r as u64);
                    let data = rejection_sample(&UniformDensity { dim: 1 }, n, &mut rng).unwrap();
                    let est = fit(&data, m, None, &mut rng).unwrap();
                    let c = est.coeffs();
                    c.values().iter().enumerate().filter(|(i, _)| *i != c.zero_index()).map(|(_, v)| v.norm_sqr()).sum::<f64>()
                        + (c.values()[c.zero_index()] - 1.0).norm_sqr()
                })
                .sum();
            let mean = total / reps as f64;
            let bound = (2 * m + 1) as f64 / n as f64 * (1.0 + 5.0 / (reps as f64).sqrt());
            pass &= mean <= bound;
            details.push(format!("n={n} M={m}: {mean:.3e} <= {bound:.3e}"));
        }
    }
    conclude(4, "variance bound", pass, details.join(", "), t0, Some(Duration::from_secs(60)));
}

#[test]
fn criterion_05_noise_variance() {
    let t0 = Instant::now();
    let (n, m) = (1000usize, 3usize);
    let sigma: NoiseScale = sigma_for_cutoff(n, rho(1.0), m, 1);
    let zero = CoefficientGrid::zeros(1, m).unwrap();
    let reps = 10_000;
    let draws: Vec<CoefficientGrid> = (0..reps).map(|r| add_noise(&zero, sigma, &mut stream_rng(5, r as u64))).collect();
    let target = 2.0 * sigma.sigma().powi(2);
    let mut worst: f64 = 0.0;
    for k in 0..zero.len() {
        let mean: Complex64 = draws.iter().map(|g| g.values()[k]).sum::<Complex64>() / reps as f64;
        let var = draws.iter().map(|g| (g.values()[k] - mean).norm_sqr()).sum::<f64>() / (reps - 1) as f64;
        worst = worst.max((var / target - 1.0).abs());
    }
    conclude(
        5,
        "noise variance",
        worst <= 0.05,
        format!("{} coefficients, worst relative gap {:.2}% from 2σ²", zero.len(), worst * 100.0),
        t0,
        Some(Duration::from_secs(10)),
    );
}

fn slope_criterion(id: u32, title: &str, sweep: &str, lo: f64, hi: f64, by_rho: bool) {
    let t0 = Instant::now();
    let report = run_sweep(&acceptance_sweep(sweep)).unwrap();
    let cells = cell_means(&report.records, "oracle-beta");
    let xs: Vec<f64> =
        cells.iter().map(|&(n, r, _)| if by_rho { (n as f64 * r.sqrt()).ln() } else { (n as f64).ln() }).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.2.ln()).collect();
    let (slope, se) = ols(&xs, &ys);
    conclude(
        id,
        title,
        (lo..=hi).contains(&slope),
        format!("slope {slope:.4} ± {se:.4} over {} cells, target [{lo}, {hi}]", cells.len()),
        t0,
        None,
    );
}

#[test]
fn criterion_06_sampling_regime_slope() {
    slope_criterion(6, "sampling-regime slope", "sampling-slope", -0.77, -0.57, false);
}

#[test]
fn criterion_07_privacy_regime_slope() {
    slope_criterion(7, "privacy-regime slope", "privacy-slope", -1.2, -0.8, true);
}

#[test]
fn criterion_08_penalized_bias_adaptivity() {
    let t0 = Instant::now();
    let report = run_sweep(&acceptance_sweep("penalized-bias")).unwrap();
    let adaptive: Vec<f64> = report.records.iter().filter(|r| r.mode == "penalized-bias").map(|r| r.mise).collect();
    let mut fixed: Vec<(usize, Vec<f64>)> = Vec::new();
    for r in report.records.iter().filter(|r| r.mode == "fixed-cutoff") {
        match fixed.iter_mut().find(|f| f.0 == r.selected_m) {
            Some(f) => f.1.push(r.mise),
            None => fixed.push((r.selected_m, vec![r.mise])),
        }
    }
    let (best_m, best) = fixed
        .iter()
        .map(|(m, v)| (*m, median(v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let ratio = median(&adaptive) / best;
    let spent_ok = report.records.iter().filter(|r| r.mode == "penalized-bias").all(|r| (r.rho_spent - 1.0).abs() < 1e-12);
    conclude(
        8,
        "penalized-bias adaptivity",
        ratio <= 10.0 && spent_ok && adaptive.len() == 20,
        format!("median ratio {ratio:.3} to best fixed M={best_m} over {} models", fixed.len()),
        t0,
        None,
    );
}

#[test]
fn criterion_09_lepskii_adaptivity() {
    let t0 = Instant::now();
    let n = 16384.0f64;
    let rho_prime = 1.0 * 0.5 / n.ln().powi(2);
    let oracle = (n.powf(1.0 / 5.0) + 1e-9).floor().min(((n * rho_prime.sqrt()).powf(1.0 / 3.0) + 1e-9).floor()) as usize;

    let practical = run_sweep(&acceptance_sweep("lepskii-practical")).unwrap();
    let selected: Vec<usize> =
        practical.records.iter().filter(|r| r.mode == "lepskii-practical").map(|r| r.selected_m).collect();
    let hits = selected.iter().filter(|&&m| m <= 4 * oracle && oracle <= 4 * m).count();
    let fraction = hits as f64 / selected.len() as f64;
    let practical_ok = selected.len() == 50 && fraction >= 0.6;

    let sweep = acceptance_sweep("lepskii-theory");
    let Mode::Lepskii { penalty } = sweep.mode.clone() else { panic!("lepskii sweep expected") };
    assert!(penalty.c >= 2f64.powi(2 + 9));
    let mut theory_zero = 0;
    let reps = 50;
    for rep in 0..reps {
        let mut rng = stream_rng(derive_seed(sweep.seed, 0), rep);
        let data = rejection_sample(&sweep.truth, 16384, &mut rng).unwrap();
        let sel = Lepskii::new(penalty).select(&data, rho(1.0), &mut rng).unwrap();
        if sel.trace.selected() == 0 {
            theory_zero += 1;
        }
    }
    let theory_ok = theory_zero == reps;
    conclude(
        9,
        "Lepskii adaptivity",
        practical_ok && theory_ok,
        format!(
            "practical: {hits}/{} within factor 4 of oracle M={oracle} (median selected {}); theory: m̂=0 in {theory_zero}/{reps}",
            selected.len(),
            median(&selected.iter().map(|&m| m as f64).collect::<Vec<_>>())
        ),
        t0,
        None,
    );
}

#[test]
fn criterion_10_packing_density() {
    let t0 = Instant::now();
    let mut rng = seeded_rng(10);
    let lattice = 1 << 14;
    let mut worst_mass: f64 = 0.0;
    let mut min_plain = f64::INFINITY;
    let mut min_halved = f64::INFINITY;
    for _ in 0..10 {
        let theta = random_theta(4, 1, &mut rng);
        for halve in [false, true] {
            let p = PackingDensity::new(theta.clone(), 4, 1.0, 1, 2.0, halve).unwrap();
            let vals: Vec<f64> = (0..lattice).map(|j| p.eval(&[j as f64 / lattice as f64])).collect();
            let mass = vals.iter().sum::<f64>() / lattice as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            worst_mass = worst_mass.max((mass - 1.0).abs());
            if halve {
                min_halved = min_halved.min(min);
            } else {
                min_plain = min_plain.min(min);
            }
        }
    }
    conclude(
        10,
        "packing density",
        worst_mass <= 1e-6 && min_plain >= 0.0 && min_halved >= 0.5 - 1e-6,
        format!("worst mass gap {worst_mass:.2e}, lattice min {min_plain:.4}, halved-h min {min_halved:.4}"),
        t0,
        Some(Duration::from_secs(10)),
    );
}

#[test]
fn criterion_11_risk_series_bound() {
    let t0 = Instant::now();
    let eps = 0.5;
    let mut pass = true;
    let mut tightest = f64::INFINITY;
    for d in 1..=3 {
        for n in [1e2, 1e4] {
            for r in [0.01, 1.0] {
                let log_n = f64::ln(n);
                let rho_prime = r * eps / (log_n * log_n);
                let k_n = (log_n * log_n / eps + 1e-9).floor() as usize;
                let sum: f64 = (0..=k_n).map(|l| rate(n, rho_prime, l as f64 * eps / log_n, d as f64)).sum();
                let bound = 4.0 * (2.0 + d as f64) / eps * log_n * log_n * (rho_prime.powf(-1.0 / (1.0 + d as f64)) + 2.0);
                let lib = risk_series(n, rho(r), d, eps).unwrap();
                pass &= sum <= bound && (lib.sum - sum).abs() <= 1e-9 * sum && (lib.bound - bound).abs() <= 1e-9 * bound;
                tightest = tightest.min(bound / sum);
            }
        }
    }
    conclude(
        11,
        "grid-risk series bound",
        pass,
        format!("12 cases, smallest bound/sum ratio {tightest:.2}"),
        t0,
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn criterion_12_chi2_tail() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for (i, (dof, delta)) in [(10usize, 1.0f64), (2, 4.0), (10, 20.0)].into_iter().enumerate() {
        let c = chi2_tail_check(dof, delta, 100_000, &mut seeded_rng(12 + i as u64)).unwrap();
        let d = dof as f64;
        let bound = f64::max((-d * delta * delta / 4.0).exp(), (-d * delta / 2.0).exp());
        let margin = 4.0 * (bound / 1e5).sqrt() + 4.0 / 1e5;
        pass &= (c.bound - bound).abs() <= 1e-15 && c.empirical <= bound + margin;
        details.push(format!("D={dof} δ={delta}: {:.4} vs bound {:.4}", c.empirical, bound));
    }
    conclude(12, "chi-squared tail bound", pass, details.join(", "), t0, Some(Duration::from_secs(10)));
}
