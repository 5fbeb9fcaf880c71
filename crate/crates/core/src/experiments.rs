//! Monte-Carlo harness: MISE, rate slopes, adaptivity comparisons and a
//! χ² concentration check, with CSV output.
//!
//! A configuration is a JSON document `{"sweeps": [...]}`. Each sweep fixes a
//! ground truth, an estimator mode and a grid of `(n, ρ)` cells; each cell runs
//! `replicates` independent sample → fit → MISE pipelines. Replicate `r` of
//! cell `c` draws everything from `stream_rng(derive_seed(seed, c), r)`, so
//! results do not depend on scheduling and CSV output is byte-identical for
//! a fixed configuration (wall-clock columns are zero unless requested).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{
    dyadic_cutoff_grid, lepskii_candidate_budget, Lepskii, NoiseMode, PenalizedBias, PenaltyConfig, SelectionTrace,
};
use crate::densities::{lattice_resolution, rejection_sample, Density, DensitySpec, Fixture};
use crate::error::{Error, Result};
use crate::estimator::{fit, optimal_cutoff_adaptive_form, CutoffRule, ProjectionEstimate};
use crate::fourier::l2_distance_sq;
use crate::privacy::{derive_seed, stream_rng, PrivacyBudget};

/// `‖f − f̂‖²`. Exact by Parseval when the truth has Fourier coefficients
/// (the sum runs over the union of both frequency supports); otherwise a
/// lattice rule over `{0, 1/N, …}^d` fine enough to integrate `|f̂|²` exactly.
pub fn mise(estimate: &ProjectionEstimate, truth: &Fixture) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(Error::DimensionMismatch { expected: truth.dim(), found: estimate.dim() });
    }
    if let Some(coeffs) = truth.coefficients() {
        return l2_distance_sq(&coeffs, estimate.coeffs());
    }
    Ok(quadrature_mise(estimate, truth))
}

/// Lattice-rule `‖f − f̂‖²` regardless of the truth type.
pub fn quadrature_mise(estimate: &ProjectionEstimate, truth: &dyn Density) -> f64 {
    let dim = truth.dim();
    let n = lattice_resolution(dim).max(2 * estimate.cutoff() + 2);
    let est = estimate.coeffs().evaluate_on_lattice(n);
    let mut x = vec![0.0; dim];
    let total: f64 = est
        .iter()
        .enumerate()
        .map(|(mut idx, v)| {
            for slot in x.iter_mut().rev() {
                *slot = (idx % n) as f64 / n as f64;
                idx /= n;
            }
            (truth.eval(&x) - v).norm_sqr()
        })
        .sum();
    total / est.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    /// Projection at the cut-off of the known smoothness.
    OracleBeta,
    /// Projection at a fixed cut-off.
    FixedCutoff,
    Lepskii,
    PenalizedBias,
}

/// Constants of the Lepskii rule as written in a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstantsSpec {
    Theory {
        #[serde(rename = "L", default = "default_radius")]
        radius: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Practical {
        #[serde(rename = "C")]
        c: f64,
        a: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_radius() -> f64 {
    PenaltyConfig::DEFAULT_RADIUS
}

fn default_eps() -> f64 {
    PenaltyConfig::DEFAULT_EPS
}

impl Default for ConstantsSpec {
    fn default() -> Self {
        ConstantsSpec::Theory { radius: default_radius(), eps: default_eps() }
    }
}

impl ConstantsSpec {
    pub fn resolve(&self, dim: usize) -> Result<PenaltyConfig> {
        match *self {
            ConstantsSpec::Theory { radius, eps } => {
                let mut cfg = PenaltyConfig::theory(dim, radius)?;
                if !(eps > 0.0 && eps.is_finite()) {
                    return Err(Error::invalid(format!("eps must be positive, got {eps}")));
                }
                cfg.eps = eps;
                Ok(cfg)
            }
            ConstantsSpec::Practical { c, a, eps } => PenaltyConfig::practical(c, a, eps),
        }
    }
}

/// Regressor of the slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeAxis {
    LogN,
    LogNSqrtRho,
}

impl SlopeAxis {
    fn value(self, n: usize, rho: f64) -> f64 {
        match self {
            SlopeAxis::LogN => (n as f64).ln(),
            SlopeAxis::LogNSqrtRho => (n as f64 * rho.sqrt()).ln(),
        }
    }
}

/// One sweep of an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    /// Inline ground truth; exclusive with `density_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
    /// Path to a density JSON, relative to the configuration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_file: Option<PathBuf>,
    pub d: usize,
    pub n: Vec<usize>,
    pub rho: Vec<f64>,
    pub mode: EstimatorMode,
    /// Smoothness for oracle mode and for the oracle reference of adaptive
    /// modes; defaults to the nominal smoothness of the density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub cutoff_rule: CutoffRule,
    /// Cut-off of `fixed-cutoff` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    /// Lepskii constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSpec>,
    /// Penalized-bias model collection; dyadic by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(default)]
    pub noise: NoiseMode,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<SlopeAxis>,
    /// Per-cell wall-clock limit in seconds; replicates not started in time
    /// are emitted with `mise = NaN`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
    #[serde(default)]
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sweeps: Vec<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Every violation, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.sweeps.is_empty() {
            errs.push("sweeps: at least one sweep is required".to_string());
        }
        let mut names = std::collections::HashSet::new();
        for (i, s) in self.sweeps.iter().enumerate() {
            let at = format!("sweeps[{i}] ({})", s.name);
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                errs.push(format!("{at}: name must be nonempty and contain no path separators"));
            }
            if !names.insert(s.name.as_str()) {
                errs.push(format!("{at}: duplicate sweep name"));
            }
            match (&s.density, &s.density_file) {
                (None, None) => errs.push(format!("{at}: one of density or density_file is required")),
                (Some(_), Some(_)) => errs.push(format!("{at}: density and density_file are exclusive")),
                _ => {}
            }
            if let Some(spec) = &s.density {
                if let Some(dim) = spec_dim(spec) {
                    if dim != s.d {
                        errs.push(format!("{at}: density dimension {dim} differs from d = {}", s.d));
                    }
                }
            }
            if s.d == 0 {
                errs.push(format!("{at}: d must be at least 1"));
            }
            if s.n.is_empty() {
                errs.push(format!("{at}: n must list at least one sample size"));
            }
            for &n in s.n.iter().filter(|&&n| n < 3) {
                errs.push(format!("{at}: sample size {n} is below 3"));
            }
            if s.rho.is_empty() {
                errs.push(format!("{at}: rho must list at least one budget"));
            }
            for &r in s.rho.iter().filter(|r| !(**r > 0.0 && r.is_finite())) {
                errs.push(format!("{at}: budget {r} is not positive"));
            }
            if s.replicates == 0 {
                errs.push(format!("{at}: replicates must be at least 1"));
            }
            if let Some(b) = s.beta {
                if !(b > 0.0 && b.is_finite()) {
                    errs.push(format!("{at}: beta {b} is not positive"));
                }
            }
            if let Some(t) = s.time_limit_s {
                if !(t > 0.0) {
                    errs.push(format!("{at}: time_limit_s must be positive"));
                }
            }
            match s.mode {
                EstimatorMode::OracleBeta => {
                    let nominal = s.density.as_ref().and_then(spec_beta);
                    if s.beta.is_none() && nominal.is_none() && s.density_file.is_none() {
                        errs.push(format!("{at}: oracle-beta mode needs beta"));
                    }
                }
                EstimatorMode::FixedCutoff => {
                    if s.cutoff.is_none() {
                        errs.push(format!("{at}: fixed-cutoff mode needs cutoff"));
                    }
                }
                EstimatorMode::Lepskii => {
                    if let Some(c) = &s.constants {
                        if let Err(e) = c.resolve(s.d.max(1)) {
                            errs.push(format!("{at}: constants: {e}"));
                        }
                    }
                }
                EstimatorMode::PenalizedBias => {
                    if s.grid.as_ref().is_some_and(|g| g.is_empty()) {
                        errs.push(format!("{at}: grid must be nonempty"));
                    }
                }
            }
            if s.mode != EstimatorMode::FixedCutoff && s.cutoff.is_some() {
                errs.push(format!("{at}: cutoff only applies to fixed-cutoff mode"));
            }
            if s.mode != EstimatorMode::Lepskii && s.constants.is_some() {
                errs.push(format!("{at}: constants only apply to lepskii mode"));
            }
            if s.mode != EstimatorMode::PenalizedBias && s.grid.is_some() {
                errs.push(format!("{at}: grid only applies to penalized-bias mode"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// A self-describing configuration with every field spelled out.
    pub fn example() -> Self {
        ExperimentConfig {
            sweeps: vec![SweepConfig {
                name: "example".into(),
                density: Some(DensitySpec::RandomTrig { d: 1, beta: 1.0, radius: 2.0, m_truth: 64, seed: 7 }),
                density_file: None,
                d: 1,
                n: vec![256, 1024, 4096],
                rho: vec![1.0],
                mode: EstimatorMode::Lepskii,
                beta: Some(1.0),
                cutoff_rule: CutoffRule::default(),
                cutoff: None,
                constants: Some(ConstantsSpec::Practical { c: 1.0, a: 1.0, eps: 0.5 }),
                grid: None,
                noise: NoiseMode::Private,
                replicates: 10,
                seed: 1,
                axis: Some(SlopeAxis::LogN),
                time_limit_s: Some(600.0),
                record_wall_time: false,
            }],
        }
    }
}

fn spec_dim(spec: &DensitySpec) -> Option<usize> {
    match spec {
        DensitySpec::Uniform { d } | DensitySpec::Packing { d, .. } | DensitySpec::RandomTrig { d, .. } => Some(*d),
        DensitySpec::Trig { coefficients, .. } => Some(coefficients.dim()),
    }
}

fn spec_beta(spec: &DensitySpec) -> Option<f64> {
    match spec {
        DensitySpec::Uniform { .. } => None,
        DensitySpec::Trig { beta, .. } | DensitySpec::Packing { beta, .. } | DensitySpec::RandomTrig { beta, .. } => {
            Some(*beta)
        }
    }
}

/// Estimator of a resolved sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    OracleBeta { beta: f64, rule: CutoffRule },
    FixedCutoff { cutoff: usize },
    Lepskii { penalty: PenaltyConfig },
    PenalizedBias { grid: Option<Vec<usize>> },
}

/// A validated sweep with its ground truth built.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub name: String,
    pub truth: Fixture,
    pub ns: Vec<usize>,
    pub rhos: Vec<f64>,
    pub mode: Mode,
    /// Smoothness used for oracle references, if known.
    pub beta: Option<f64>,
    pub rule: CutoffRule,
    pub noise: NoiseMode,
    pub replicates: usize,
    pub seed: u64,
    pub axis: SlopeAxis,
    pub time_limit: Option<Duration>,
    pub record_wall_time: bool,
}

impl Sweep {
    pub fn from_config(cfg: &SweepConfig, base_dir: &Path) -> Result<Self> {
        ExperimentConfig { sweeps: vec![cfg.clone()] }.validate()?;
        let spec = match (&cfg.density, &cfg.density_file) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => {
                let path = base_dir.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(vec![format!("density_file {}: {e}", path.display())]))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(vec![format!("density_file {}: {e}", path.display())]))?
            }
            (None, None) => unreachable!("rejected by validation"),
        };
        let truth = spec.build()?;
        if truth.dim() != cfg.d {
            return Err(Error::Config(vec![format!(
                "sweep {}: density dimension {} differs from d = {}",
                cfg.name,
                truth.dim(),
                cfg.d
            )]));
        }
        let beta = cfg.beta.or(truth.beta());
        let mode = match cfg.mode {
            EstimatorMode::OracleBeta => Mode::OracleBeta {
                beta: beta.ok_or_else(|| Error::Config(vec![format!("sweep {}: oracle-beta mode needs beta", cfg.name)]))?,
                rule: cfg.cutoff_rule,
            },
            EstimatorMode::FixedCutoff => Mode::FixedCutoff { cutoff: cfg.cutoff.unwrap_or(0) },
            EstimatorMode::Lepskii => Mode::Lepskii { penalty: cfg.constants.unwrap_or_default().resolve(cfg.d)? },
            EstimatorMode::PenalizedBias => Mode::PenalizedBias { grid: cfg.grid.clone() },
        };
        let axis = cfg.axis.unwrap_or(if cfg.rho.len() == 1 { SlopeAxis::LogN } else { SlopeAxis::LogNSqrtRho });
        Ok(Sweep {
            name: cfg.name.clone(),
            truth,
            ns: cfg.n.clone(),
            rhos: cfg.rho.clone(),
            mode,
            beta,
            rule: cfg.cutoff_rule,
            noise: cfg.noise,
            replicates: cfg.replicates,
            seed: cfg.seed,
            axis,
            time_limit: cfg.time_limit_s.map(Duration::from_secs_f64),
            record_wall_time: cfg.record_wall_time,
        })
    }

    pub fn dim(&self) -> usize {
        self.truth.dim()
    }

    /// Label written to the `mode` column.
    pub fn mode_label(&self) -> String {
        match &self.mode {
            Mode::OracleBeta { .. } => "oracle-beta".into(),
            Mode::FixedCutoff { .. } => "fixed-cutoff".into(),
            Mode::Lepskii { penalty } => match penalty.mode {
                crate::adaptive::ConstantsMode::Theory { .. } => "lepskii-theory".into(),
                crate::adaptive::ConstantsMode::Practical => "lepskii-practical".into(),
            },
            Mode::PenalizedBias { .. } => "penalized-bias".into(),
        }
    }

    /// `(n, ρ)` cells, `n` outermost.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.ns.iter().flat_map(|&n| self.rhos.iter().map(move |&r| (n, r))).collect()
    }

    fn budget(&self, rho: PrivacyBudget) -> Option<PrivacyBudget> {
        (self.noise == NoiseMode::Private).then_some(rho)
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub rho: f64,
    pub beta_nominal: Option<f64>,
    pub d: usize,
    pub mode: String,
    pub replicate: usize,
    pub selected_m: usize,
    pub rho_spent: f64,
    /// NaN for replicates skipped by the time limit.
    pub mise: f64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: [&str; 10] =
    ["n", "rho", "beta_nominal", "d", "mode", "replicate", "selected_M", "rho_spent", "mise", "wall_ms"];

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            fmt_float(r.rho),
            fmt_float(r.beta_nominal.unwrap_or(f64::NAN)),
            r.d.to_string(),
            r.mode.clone(),
            r.replicate.to_string(),
            r.selected_m.to_string(),
            fmt_float(r.rho_spent),
            fmt_float(r.mise),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ordinary least squares fit `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Absent with only two points.
    pub std_err: Option<f64>,
}

/// `None` unless at least two distinct abscissae are present.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(&x, &y)| (x, y)).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_err = (pts.len() > 2).then(|| {
        let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    });
    Some(SlopeFit { slope, intercept, std_err })
}

/// Per-cell aggregate of the primary estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub rho: f64,
    pub completed: usize,
    pub skipped: usize,
    pub mean_mise: f64,
    pub median_mise: f64,
    pub median_selected_m: f64,
}

/// Adaptive estimator against its references in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivityCell {
    pub n: usize,
    pub rho: f64,
    pub adaptive_median_mise: f64,
    /// Cut-off and median MISE of the oracle-β estimator at the full budget.
    pub oracle_cutoff: Option<usize>,
    pub oracle_median_mise: Option<f64>,
    pub ratio_to_oracle: Option<f64>,
    /// Best fixed cut-off of the penalized-bias collection, each fitted at
    /// the per-model budget, by median MISE.
    pub best_fixed_cutoff: Option<usize>,
    pub best_fixed_median_mise: Option<f64>,
    pub ratio_to_best_fixed: Option<f64>,
    /// Cut-off the selection is compared against: `M_{n,ρ'}(β)` for
    /// Lepskii, the best fixed cut-off for penalized bias.
    pub reference_cutoff: Option<usize>,
    pub fraction_within_factor_4: Option<f64>,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub name: String,
    pub mode: String,
    pub constants: Option<PenaltyConfig>,
    pub axis: SlopeAxis,
    pub slope: Option<SlopeFit>,
    pub cells: Vec<CellSummary>,
    pub adaptivity: Option<Vec<AdaptivityCell>>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
}

/// Outcome of one replicate.
#[derive(Debug, Clone, Default)]
struct Replicate {
    skipped: bool,
    selected: usize,
    rho_spent: f64,
    mise: f64,
    wall_ms: u64,
    oracle: Option<(usize, f64, f64)>,
    fixed: Vec<(usize, f64, f64)>,
}

fn run_replicate(sweep: &Sweep, n: usize, rho: f64, cell: usize, rep: usize) -> Result<Replicate> {
    let start = Instant::now();
    let mut rng = stream_rng(derive_seed(sweep.seed, cell as u64), rep as u64);
    let data = rejection_sample(&sweep.truth, n, &mut rng)?;
    let budget = PrivacyBudget::new(rho)?;
    let dim = sweep.dim();
    let nf = n as f64;
    let mut out = Replicate::default();

    let oracle_fit = |rng: &mut crate::privacy::NoiseRng, beta: f64| -> Result<(usize, f64, f64)> {
        let m = sweep.rule.cutoff(nf, budget, beta, dim)?;
        let est = fit(&data, m, sweep.budget(budget), rng)?;
        Ok((m, est.rho_spent().map_or(0.0, |r| r.rho()), mise(&est, &sweep.truth)?))
    };

    match &sweep.mode {
        Mode::OracleBeta { beta, .. } => {
            let (m, spent, err) = oracle_fit(&mut rng, *beta)?;
            (out.selected, out.rho_spent, out.mise) = (m, spent, err);
        }
        Mode::FixedCutoff { cutoff } => {
            let est = fit(&data, *cutoff, sweep.budget(budget), &mut rng)?;
            out.selected = *cutoff;
            out.rho_spent = est.rho_spent().map_or(0.0, |r| r.rho());
            out.mise = mise(&est, &sweep.truth)?;
        }
        Mode::Lepskii { penalty } => {
            let sel = Lepskii::new(*penalty).with_noise(sweep.noise).select(&data, budget, &mut rng)?;
            out.selected = sel.estimate.cutoff();
            out.rho_spent = sel.ledger.spent();
            out.mise = mise(&sel.estimate, &sweep.truth)?;
            if let Some(beta) = sweep.beta {
                out.oracle = Some(oracle_fit(&mut rng, beta)?);
            }
        }
        Mode::PenalizedBias { grid } => {
            let grid = grid.clone().unwrap_or_else(|| dyadic_cutoff_grid(n, dim));
            let sel = PenalizedBias::new(grid)?.with_noise(sweep.noise).select(&data, budget, &mut rng)?;
            out.selected = sel.estimate.cutoff();
            out.rho_spent = sel.ledger.spent();
            out.mise = mise(&sel.estimate, &sweep.truth)?;
            if let SelectionTrace::PenalizedBias(t) = &sel.trace {
                out.fixed = sel
                    .candidates
                    .iter()
                    .map(|c| Ok((c.cutoff(), t.rho_per_candidate, mise(c, &sweep.truth)?)))
                    .collect::<Result<_>>()?;
                if sweep.noise == NoiseMode::Disabled {
                    for f in &mut out.fixed {
                        f.1 = 0.0;
                    }
                }
            }
            if let Some(beta) = sweep.beta {
                out.oracle = Some(oracle_fit(&mut rng, beta)?);
            }
        }
    }
    out.wall_ms = if sweep.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 };
    Ok(out)
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Runs every cell of `sweep`. Works for all modes; adaptive modes also get
/// their comparison table.
pub fn run_sweep(sweep: &Sweep) -> Result<SweepReport> {
    let label = sweep.mode_label();
    let beta_nominal = sweep.truth.beta();
    let dim = sweep.dim();
    let mut records = Vec::new();
    let mut cells = Vec::new();
    let mut adaptivity = Vec::new();
    let adaptive = matches!(sweep.mode, Mode::Lepskii { .. } | Mode::PenalizedBias { .. });

    for (cell, (n, rho)) in sweep.cells().into_iter().enumerate() {
        let started = Instant::now();
        let reps: Vec<Replicate> = (0..sweep.replicates)
            .into_par_iter()
            .map(|rep| {
                if sweep.time_limit.is_some_and(|limit| started.elapsed() > limit) {
                    return Ok(Replicate { skipped: true, mise: f64::NAN, ..Default::default() });
                }
                run_replicate(sweep, n, rho, cell, rep)
            })
            .collect::<Result<_>>()?;

        let row = |mode: String, rep: usize, selected: usize, spent: f64, mise: f64, wall: u64| ExperimentRecord {
            n,
            rho,
            beta_nominal,
            d: dim,
            mode,
            replicate: rep,
            selected_m: selected,
            rho_spent: spent,
            mise,
            wall_ms: wall,
        };
        for (i, r) in reps.iter().enumerate() {
            records.push(row(label.clone(), i, r.selected, r.rho_spent, r.mise, r.wall_ms));
        }
        for (i, r) in reps.iter().enumerate() {
            if let Some((m, spent, err)) = r.oracle {
                records.push(row("oracle-beta".into(), i, m, spent, err, 0));
            }
        }
        let fixed_count = reps.iter().map(|r| r.fixed.len()).max().unwrap_or(0);
        for j in 0..fixed_count {
            for (i, r) in reps.iter().enumerate() {
                if let Some(&(m, spent, err)) = r.fixed.get(j) {
                    records.push(row("fixed-cutoff".into(), i, m, spent, err, 0));
                }
            }
        }

        let done: Vec<&Replicate> = reps.iter().filter(|r| !r.skipped).collect();
        let mises: Vec<f64> = done.iter().map(|r| r.mise).collect();
        let selected: Vec<usize> = done.iter().map(|r| r.selected).collect();
        let mean = if mises.is_empty() { f64::NAN } else { mises.iter().sum::<f64>() / mises.len() as f64 };
        cells.push(CellSummary {
            n,
            rho,
            completed: done.len(),
            skipped: reps.len() - done.len(),
            mean_mise: mean,
            median_mise: median(&mises),
            median_selected_m: median(&selected.iter().map(|&m| m as f64).collect::<Vec<_>>()),
        });

        if adaptive {
            adaptivity.push(adaptivity_cell(sweep, n, rho, &done)?);
        }
    }

    let xs: Vec<f64> = cells.iter().map(|c| sweep.axis.value(c.n, c.rho)).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.mean_mise.ln()).collect();
    let mut warnings = Vec::new();
    let constants = match &sweep.mode {
        Mode::Lepskii { penalty } => {
            if penalty.eps > 0.5 {
                warnings.push(format!("eps = {} exceeds 1/2: the grid-risk series bound is not established", penalty.eps));
            }
            Some(*penalty)
        }
        _ => None,
    };
    let skipped: usize = cells.iter().map(|c| c.skipped).sum();
    if skipped > 0 {
        warnings.push(format!("{skipped} replicates skipped by the time limit"));
    }
    Ok(SweepReport {
        name: sweep.name.clone(),
        mode: label,
        constants,
        axis: sweep.axis,
        slope: ols_slope(&xs, &ys),
        cells,
        adaptivity: adaptive.then_some(adaptivity),
        warnings,
        records,
    })
}

fn adaptivity_cell(sweep: &Sweep, n: usize, rho: f64, done: &[&Replicate]) -> Result<AdaptivityCell> {
    let adaptive_median = median(&done.iter().map(|r| r.mise).collect::<Vec<_>>());
    let oracle: Vec<(usize, f64)> = done.iter().filter_map(|r| r.oracle.map(|(m, _, e)| (m, e))).collect();
    let (oracle_cutoff, oracle_median) = if oracle.is_empty() {
        (None, None)
    } else {
        (Some(oracle[0].0), Some(median(&oracle.iter().map(|o| o.1).collect::<Vec<_>>())))
    };

    let mut best_fixed: Option<(usize, f64)> = None;
    if let Some(first) = done.first() {
        for (j, &(m, _, _)) in first.fixed.iter().enumerate() {
            let med = median(&done.iter().filter_map(|r| r.fixed.get(j).map(|f| f.2)).collect::<Vec<_>>());
            if best_fixed.is_none_or(|(_, b)| med < b) {
                best_fixed = Some((m, med));
            }
        }
    }

    let reference = match &sweep.mode {
        Mode::Lepskii { penalty } => match sweep.beta {
            Some(beta) => {
                let nf = n as f64;
                let rho_prime = lepskii_candidate_budget(nf, PrivacyBudget::new(rho)?, penalty.eps)?;
                Some(optimal_cutoff_adaptive_form(nf, rho_prime, beta, sweep.dim())?)
            }
            None => None,
        },
        _ => best_fixed.map(|b| b.0),
    };
    let selected: Vec<usize> = done.iter().map(|r| r.selected).collect();
    let within = reference.filter(|_| !selected.is_empty()).map(|m_ref| {
        let hits = selected.iter().filter(|&&m| within_factor(m, m_ref, 4.0)).count();
        hits as f64 / selected.len() as f64
    });
    Ok(AdaptivityCell {
        n,
        rho,
        adaptive_median_mise: adaptive_median,
        oracle_cutoff,
        oracle_median_mise: oracle_median,
        ratio_to_oracle: oracle_median.map(|o| adaptive_median / o),
        best_fixed_cutoff: best_fixed.map(|b| b.0),
        best_fixed_median_mise: best_fixed.map(|b| b.1),
        ratio_to_best_fixed: best_fixed.map(|b| adaptive_median / b.1),
        reference_cutoff: reference,
        fraction_within_factor_4: within,
        selected,
    })
}

/// `m/factor ≤ m_ref ≤ m·factor`.
pub fn within_factor(m: usize, m_ref: usize, factor: f64) -> bool {
    let (a, b) = (m as f64, m_ref as f64);
    a <= factor * b && b <= factor * a
}

/// Oracle-β or fixed-cut-off sweep. Identical to [`run_sweep`]; kept as the
/// named entry point for rate studies.
pub fn run_rate_experiment(sweep: &Sweep) -> Result<SweepReport> {
    if matches!(sweep.mode, Mode::Lepskii { .. } | Mode::PenalizedBias { .. }) {
        return Err(Error::invalid("rate experiments run in oracle-beta or fixed-cutoff mode"));
    }
    run_sweep(sweep)
}

/// Adaptive sweep with oracle and best-fixed-cut-off references.
pub fn run_adaptivity_experiment(sweep: &Sweep) -> Result<SweepReport> {
    if !matches!(sweep.mode, Mode::Lepskii { .. } | Mode::PenalizedBias { .. }) {
        return Err(Error::invalid("adaptivity experiments run in lepskii or penalized-bias mode"));
    }
    run_sweep(sweep)
}

/// Runs every sweep of `cfg`, writing `<name>.csv` per sweep and
/// `summary.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> Result<Vec<SweepReport>> {
    cfg.validate()?;
    let sweeps = cfg.sweeps.iter().map(|s| Sweep::from_config(s, base_dir)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    let mut reports = Vec::new();
    for sweep in &sweeps {
        let report = run_sweep(sweep)?;
        let file = std::fs::File::create(out_dir.join(format!("{}.csv", sweep.name)))?;
        write_records_csv(&report.records, std::io::BufWriter::new(file))?;
        reports.push(report);
    }
    let summary = serde_json::to_string_pretty(&serde_json::json!({ "sweeps": reports }))?;
    std::fs::write(out_dir.join("summary.json"), summary + "\n")?;
    Ok(reports)
}

/// Empirical `P(Z ≥ (1+δ)D)` for `Z ~ χ²_D` against
/// `max{e^{−Dδ²/4}, e^{−Dδ/2}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chi2Check {
    pub degrees: usize,
    pub delta: f64,
    pub replicates: usize,
    pub empirical: f64,
    pub bound: f64,
    /// `4√(bound/R) + 4/R`.
    pub margin: f64,
    pub passed: bool,
}

pub fn chi2_tail_bound(degrees: usize, delta: f64) -> f64 {
    let d = degrees as f64;
    (-d * delta * delta / 4.0).exp().max((-d * delta / 2.0).exp())
}

pub fn chi2_tail_check<R: Rng + ?Sized>(degrees: usize, delta: f64, replicates: usize, rng: &mut R) -> Result<Chi2Check> {
    if degrees == 0 {
        return Err(Error::invalid("degrees of freedom must be at least 1"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    if replicates < 10_000 {
        return Err(Error::invalid(format!("at least 10^4 replicates are required, got {replicates}")));
    }
    let threshold = (1.0 + delta) * degrees as f64;
    let hits = (0..replicates)
        .filter(|_| {
            let z: f64 = (0..degrees).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
            z >= threshold
        })
        .count();
    let r = replicates as f64;
    let empirical = hits as f64 / r;
    let bound = chi2_tail_bound(degrees, delta);
    let margin = 4.0 * (bound / r).sqrt() + 4.0 / r;
    Ok(Chi2Check { degrees, delta, replicates, empirical, bound, margin, passed: empirical <= bound + margin })
}
