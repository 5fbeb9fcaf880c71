//! Privacy-aware, smoothness-agnostic selection of the spectral cut-off.
//!
//! Two rules are provided, both spending budget on every candidate they fit:
//!
//! * **Lepskii risk penalization** ([`lepskii_select`]). A decreasing grid of
//!   smoothness values `β_0 > β_1 > …` with step `ε/log n` is mapped to
//!   cut-offs `M_{n,ρ'}(β_m)`, each candidate fitted with
//!   `ρ' = ρ·ε/(log n)²`. The selected index is the smallest `m` such that
//!   for every rougher candidate `ℓ ≥ m`,
//!   `‖f̂_m − f̂_ℓ‖² ≤ C (log n)^a r_{n,ρ'}(β_ℓ)`. The `k_n·ρ'` spent is at
//!   most `ρ`; the remainder is reported, not redistributed.
//! * **Penalized estimated bias** ([`penalized_bias_select`]). Over a cut-off
//!   collection `ℳ` with `ρ' = ρ/|ℳ|`, the squared bias of each `f̂_M` is
//!   estimated as `B²(M) = max_{M'∈ℳ} ‖proj_{M'} f̂_M − f̂_{M'}‖² − Λ¹(M')`
//!   and `M̂ = argmin B²(M) + Λ²(M)`, ties to the smallest `M`.
//!
//! Candidate fits share one pass of empirical coefficients at the largest
//! cut-off and draw their noise from per-candidate streams derived from a
//! single seed taken from the caller's generator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    fit_from_empirical, optimal_cutoff_adaptive_form, robust_floor, theoretical_rate, ProjectionEstimate,
    RateQuery,
};
use crate::fourier::{data_dim, empirical_coefficients, l2_distance_sq, Point};
use crate::privacy::{model_dimension, stream_rng, BudgetLedger, PrivacyBudget};

/// Decreasing smoothness grid `β_j = (k_n − j)·ε/log n`, `j = 0..k_n`, with
/// `k_n = ⌊(log n)²/ε⌋`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    eps: f64,
    n: f64,
    betas: Vec<f64>,
}

impl BetaGrid {
    pub fn new(n: f64, eps: f64) -> Result<Self> {
        if !(n >= 3.0 && n.is_finite()) {
            return Err(Error::invalid(format!("the smoothness grid needs n >= 3, got {n}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("grid step parameter must be positive, got {eps}")));
        }
        let log_n = n.ln();
        let k_n = robust_floor(log_n * log_n / eps);
        if k_n < 1.0 {
            return Err(Error::invalid(format!("grid is empty for n = {n}, eps = {eps}")));
        }
        let k_n = k_n as usize;
        let step = eps / log_n;
        let betas = (0..k_n).map(|j| (k_n - j) as f64 * step).collect();
        Ok(BetaGrid { eps, n, betas })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `k_n`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.eps / self.n.ln()
    }

    /// The grid-risk series bound is only established for `ε ≤ 1/2`.
    pub fn warning(&self) -> Option<String> {
        (self.eps > 0.5).then(|| {
            format!("eps = {} exceeds 1/2: the risk-series bound behind the theory constants does not apply", self.eps)
        })
    }
}

/// Per-candidate budget of the Lepskii rule: `ρ·ε/(log n)²`.
pub fn lepskii_candidate_budget(n: f64, rho: PrivacyBudget, eps: f64) -> Result<PrivacyBudget> {
    let log_n = n.ln();
    rho.scale(eps / (log_n * log_n))
}

/// Where the Lepskii constants come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ConstantsMode {
    /// `C = max(8L², 2^{2d+9})`, `a = 1`, as required by the risk bound.
    Theory { radius: f64 },
    /// User-supplied constants.
    Practical,
}

/// Constants of the penalized risk `C (log n)^a r_{n,ρ}(β)` and the grid step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub c: f64,
    pub a: f64,
    pub eps: f64,
    pub mode: ConstantsMode,
}

impl PenaltyConfig {
    pub const DEFAULT_EPS: f64 = 0.5;
    pub const DEFAULT_RADIUS: f64 = 2.0;

    /// Theory-mode constants for dimension `dim` and Sobolev radius `radius`.
    pub fn theory(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("Sobolev radius must be positive, got {radius}")));
        }
        let c = (8.0 * radius * radius).max(2f64.powi(2 * dim as i32 + 9));
        Ok(PenaltyConfig { c, a: 1.0, eps: Self::DEFAULT_EPS, mode: ConstantsMode::Theory { radius } })
    }

    pub fn practical(c: f64, a: f64, eps: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {c}")));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("a must be positive, got {a}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        Ok(PenaltyConfig { c, a, eps, mode: ConstantsMode::Practical })
    }

    /// `C (log n)^a r_{n,ρ}(β)`.
    pub fn penalized_risk(&self, n: f64, rho: PrivacyBudget, beta: f64, dim: usize) -> Result<f64> {
        let rate = theoretical_rate(&RateQuery::new(n, rho, beta, dim)?);
        Ok(self.c * n.ln().powf(self.a) * rate.value)
    }
}

/// Whether candidate fits are privatized. `Disabled` exists for exercising the
/// decision rules on noiseless estimates; nothing is charged to the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    #[default]
    Private,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LepskiiCandidate {
    pub index: usize,
    pub beta: f64,
    pub cutoff: usize,
    pub sigma: f64,
    /// `C (log n)^a r_{n,ρ'}(β_index)`.
    pub threshold: f64,
    /// `‖f̂_index − f̂_ℓ‖²` for `ℓ = index, index+1, …`; recorded for every
    /// candidate up to and including the selected one, empty afterwards.
    pub distances: Vec<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LepskiiTrace {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub c: f64,
    pub a: f64,
    pub mode: ConstantsMode,
    pub noise: NoiseMode,
    pub rho_total: f64,
    pub rho_per_candidate: f64,
    pub rho_spent: f64,
    pub rho_unspent: f64,
    pub candidates: Vec<LepskiiCandidate>,
    pub selected: usize,
}

impl LepskiiTrace {
    /// Re-derives the selected index from the recorded distances and thresholds.
    pub fn replay(&self) -> usize {
        let k = self.candidates.len();
        for (m, cand) in self.candidates.iter().enumerate() {
            if cand.distances.len() != k - m {
                continue;
            }
            let ok = cand
                .distances
                .iter()
                .zip(&self.candidates[m..])
                .all(|(dist, other)| *dist <= other.threshold);
            if ok {
                return m;
            }
        }
        k.saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCandidate {
    pub index: usize,
    pub cutoff: usize,
    pub sigma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `‖proj_{M'} f̂_M − f̂_{M'}‖²` for every `M'` of the collection, in order.
    pub distances: Vec<f64>,
    pub bias_sq: f64,
    pub criterion: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTrace {
    pub n: usize,
    pub d: usize,
    pub noise: NoiseMode,
    pub rho_total: f64,
    pub rho_per_candidate: f64,
    pub rho_spent: f64,
    pub candidates: Vec<BiasCandidate>,
    pub selected: usize,
}

impl BiasTrace {
    pub fn replay(&self) -> usize {
        let mut best: Option<(usize, f64)> = None;
        for (i, cand) in self.candidates.iter().enumerate() {
            let b2 = cand
                .distances
                .iter()
                .zip(&self.candidates)
                .map(|(dist, other)| dist - other.lambda1)
                .fold(f64::NEG_INFINITY, f64::max);
            let crit = b2 + cand.lambda2;
            if best.is_none_or(|(_, c)| crit < c) {
                best = Some((i, crit));
            }
        }
        best.map_or(0, |(i, _)| i)
    }
}

/// Diagnostic record of a data-driven selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SelectionTrace {
    Lepskii(LepskiiTrace),
    PenalizedBias(BiasTrace),
}

impl SelectionTrace {
    pub fn selected(&self) -> usize {
        match self {
            SelectionTrace::Lepskii(t) => t.selected,
            SelectionTrace::PenalizedBias(t) => t.selected,
        }
    }

    pub fn selected_cutoff(&self) -> usize {
        match self {
            SelectionTrace::Lepskii(t) => t.candidates[t.selected].cutoff,
            SelectionTrace::PenalizedBias(t) => t.candidates[t.selected].cutoff,
        }
    }

    pub fn replay(&self) -> usize {
        match self {
            SelectionTrace::Lepskii(t) => t.replay(),
            SelectionTrace::PenalizedBias(t) => t.replay(),
        }
    }
}

/// Outcome of a selection: the released estimate, every candidate that was
/// fitted (all of them privatized and paid for), the trace and the ledger.
#[derive(Debug, Clone)]
pub struct Selection {
    pub estimate: ProjectionEstimate,
    pub candidates: Vec<ProjectionEstimate>,
    pub trace: SelectionTrace,
    pub ledger: BudgetLedger,
}

/// Fits every cut-off in `cutoffs` from one shared pass over the data.
fn fit_candidates<R: Rng + ?Sized>(
    data: &[Point],
    cutoffs: &[usize],
    budget: Option<PrivacyBudget>,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<Vec<ProjectionEstimate>> {
    let max_cutoff = cutoffs.iter().copied().max().unwrap_or(0);
    let empirical = empirical_coefficients(data, max_cutoff)?;
    let seed: u64 = rng.random();
    cutoffs
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if let Some(b) = budget {
                ledger.charge(format!("candidate {i} (M={m})"), b)?;
            }
            let mut cand_rng = stream_rng(seed, i as u64);
            fit_from_empirical(&empirical, data.len(), m, budget, &mut cand_rng)
        })
        .collect()
}

/// Lepskii selector with explicit noise handling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lepskii {
    pub penalty: PenaltyConfig,
    pub noise: NoiseMode,
}

impl Lepskii {
    pub fn new(penalty: PenaltyConfig) -> Self {
        Lepskii { penalty, noise: NoiseMode::Private }
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn select<R: Rng + ?Sized>(&self, data: &[Point], rho: PrivacyBudget, rng: &mut R) -> Result<Selection> {
        let dim = data_dim(data)?;
        let n = data.len();
        let nf = n as f64;
        let grid = BetaGrid::new(nf, self.penalty.eps)?;
        let rho_prime = lepskii_candidate_budget(nf, rho, self.penalty.eps)?;

        let cutoffs = grid
            .betas()
            .iter()
            .map(|&b| optimal_cutoff_adaptive_form(nf, rho_prime, b, dim))
            .collect::<Result<Vec<_>>>()?;
        let thresholds = grid
            .betas()
            .iter()
            .map(|&b| self.penalty.penalized_risk(nf, rho_prime, b, dim))
            .collect::<Result<Vec<_>>>()?;

        let mut ledger = BudgetLedger::new(rho);
        let budget = (self.noise == NoiseMode::Private).then_some(rho_prime);
        let fits = fit_candidates(data, &cutoffs, budget, &mut ledger, rng)?;

        let k = fits.len();
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut selected = k - 1;
        for m in 0..k {
            let row = (m..k)
                .map(|l| l2_distance_sq(fits[m].coeffs(), fits[l].coeffs()))
                .collect::<Result<Vec<_>>>()?;
            let ok = row.iter().zip(&thresholds[m..]).all(|(dist, thr)| dist <= thr);
            rows[m] = row;
            if ok {
                selected = m;
                break;
            }
        }

        let candidates = (0..k)
            .map(|i| LepskiiCandidate {
                index: i,
                beta: grid.betas()[i],
                cutoff: cutoffs[i],
                sigma: fits[i].sigma().sigma(),
                threshold: thresholds[i],
                distances: std::mem::take(&mut rows[i]),
                accepted: i == selected,
            })
            .collect();
        let trace = LepskiiTrace {
            n,
            d: dim,
            eps: self.penalty.eps,
            c: self.penalty.c,
            a: self.penalty.a,
            mode: self.penalty.mode,
            noise: self.noise,
            rho_total: rho.rho(),
            rho_per_candidate: rho_prime.rho(),
            rho_spent: ledger.spent(),
            rho_unspent: ledger.remaining(),
            candidates,
            selected,
        };
        Ok(Selection {
            estimate: fits[selected].clone(),
            candidates: fits,
            trace: SelectionTrace::Lepskii(trace),
            ledger,
        })
    }
}

/// Lepskii risk-penalization rule with private candidates.
pub fn lepskii_select<R: Rng + ?Sized>(
    data: &[Point],
    rho: PrivacyBudget,
    cfg: PenaltyConfig,
    rng: &mut R,
) -> Result<Selection> {
    Lepskii::new(cfg).select(data, rho, rng)
}

/// `Λ¹(M) = 96(2M+1)^d/n + 96(2M+1)^{2d}/(n²ρ')`.
pub fn penalty_lambda1(cutoff: usize, n: usize, rho_prime: PrivacyBudget, dim: usize) -> f64 {
    let count = model_dimension(cutoff, dim);
    let nf = n as f64;
    96.0 * count / nf + 96.0 * count * count / (nf * nf * rho_prime.rho())
}

/// `Λ²(M) = Λ¹(M) + 16(2M+1)^{2d}/(n²ρ')`.
pub fn penalty_lambda2(cutoff: usize, n: usize, rho_prime: PrivacyBudget, dim: usize) -> f64 {
    let count = model_dimension(cutoff, dim);
    let nf = n as f64;
    penalty_lambda1(cutoff, n, rho_prime, dim) + 16.0 * count * count / (nf * nf * rho_prime.rho())
}

/// `{1, 2, 4, …, 2^⌊log₂((n^{1/d} − 1)/2)⌋}`, or `{1}` when that bound is
/// below 1. Every entry satisfies `(2M+1)^d ≤ n` unless the grid is `{1}`.
pub fn dyadic_cutoff_grid(n: usize, dim: usize) -> Vec<usize> {
    if dim == 0 || n == 0 {
        return vec![1];
    }
    let half_width = ((n as f64).powf(1.0 / dim as f64) - 1.0) / 2.0;
    if half_width < 1.0 {
        return vec![1];
    }
    let mut exponent = robust_floor(half_width.log2()) as u32;
    let fits = |e: u32| {
        (2u128 << e)
            .checked_add(1)
            .and_then(|side| side.checked_pow(dim as u32))
            .is_some_and(|v| v <= n as u128)
    };
    while exponent > 0 && !fits(exponent) {
        exponent -= 1;
    }
    (0..=exponent).map(|e| 1usize << e).collect()
}

/// Penalized-bias selector with explicit noise handling.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedBias {
    pub cutoffs: Vec<usize>,
    pub noise: NoiseMode,
}

impl PenalizedBias {
    /// The collection is sorted and deduplicated.
    pub fn new(mut cutoffs: Vec<usize>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::invalid("cut-off collection must be nonempty"));
        }
        cutoffs.sort_unstable();
        cutoffs.dedup();
        Ok(PenalizedBias { cutoffs, noise: NoiseMode::Private })
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn select<R: Rng + ?Sized>(&self, data: &[Point], rho: PrivacyBudget, rng: &mut R) -> Result<Selection> {
        let dim = data_dim(data)?;
        let n = data.len();
        let rho_prime = rho.split(self.cutoffs.len())?;

        let mut ledger = BudgetLedger::new(rho);
        let budget = (self.noise == NoiseMode::Private).then_some(rho_prime);
        let fits = fit_candidates(data, &self.cutoffs, budget, &mut ledger, rng)?;

        let lambda1: Vec<f64> = self.cutoffs.iter().map(|&m| penalty_lambda1(m, n, rho_prime, dim)).collect();
        let mut candidates = Vec::with_capacity(fits.len());
        let mut best: Option<(usize, f64)> = None;
        for (i, fit) in fits.iter().enumerate() {
            let distances = fits
                .iter()
                .map(|other| l2_distance_sq(&fit.coeffs().project(other.cutoff()), other.coeffs()))
                .collect::<Result<Vec<_>>>()?;
            let bias_sq = distances
                .iter()
                .zip(&lambda1)
                .map(|(dist, l1)| dist - l1)
                .fold(f64::NEG_INFINITY, f64::max);
            let lambda2 = penalty_lambda2(self.cutoffs[i], n, rho_prime, dim);
            let criterion = bias_sq + lambda2;
            if best.is_none_or(|(_, c)| criterion < c) {
                best = Some((i, criterion));
            }
            candidates.push(BiasCandidate {
                index: i,
                cutoff: self.cutoffs[i],
                sigma: fit.sigma().sigma(),
                lambda1: lambda1[i],
                lambda2,
                distances,
                bias_sq,
                criterion,
                accepted: false,
            });
        }
        let selected = best.map_or(0, |(i, _)| i);
        candidates[selected].accepted = true;

        let trace = BiasTrace {
            n,
            d: dim,
            noise: self.noise,
            rho_total: rho.rho(),
            rho_per_candidate: rho_prime.rho(),
            rho_spent: ledger.spent(),
            candidates,
            selected,
        };
        Ok(Selection {
            estimate: fits[selected].clone(),
            candidates: fits,
            trace: SelectionTrace::PenalizedBias(trace),
            ledger,
        })
    }
}

/// Penalized estimated-bias rule over `cutoffs` with private candidates.
pub fn penalized_bias_select<R: Rng + ?Sized>(
    data: &[Point],
    rho: PrivacyBudget,
    cutoffs: &[usize],
    rng: &mut R,
) -> Result<Selection> {
    PenalizedBias::new(cutoffs.to_vec())?.select(data, rho, rng)
}

/// Both sides of the grid-risk series inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSeries {
    /// `Σ_{ℓ=0}^{k_n} r_{n,ρ'}(ℓ·ε/log n)`, the `ℓ = 0` term being 1.
    pub sum: f64,
    /// `4(2+d)ε^{-1}(log n)²(ρ'^{-1/(1+d)} + 2)`.
    pub bound: f64,
}

pub fn risk_series(n: f64, rho: PrivacyBudget, dim: usize, eps: f64) -> Result<RiskSeries> {
    let grid = BetaGrid::new(n, eps)?;
    let rho_prime = lepskii_candidate_budget(n, rho, eps)?;
    let k_n = grid.len();
    let step = grid.step();
    let mut sum = 1.0;
    for l in 1..=k_n {
        let q = RateQuery::new(n, rho_prime, l as f64 * step, dim)?;
        sum += theoretical_rate(&q).value;
    }
    let log_n = n.ln();
    let d = dim as f64;
    let bound = 4.0 * (2.0 + d) / eps * log_n * log_n * (rho_prime.rho().powf(-1.0 / (1.0 + d)) + 2.0);
    Ok(RiskSeries { sum, bound })
}
