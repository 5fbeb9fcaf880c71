//! zCDP budgets, sensitivity of the coefficient release, and the Gaussian
//! mechanism that privatizes a coefficient grid.
//!
//! Releasing the real and imaginary parts of all `(2M+1)^d` empirical
//! coefficients has `ℓ₂` sensitivity `(2/n)·√(2(2M+1)^d)`: each coefficient
//! moves by at most `2/n` in modulus when one record changes. The Gaussian
//! mechanism with per-coordinate standard deviation `Δ/√(2ρ)` is then `ρ`-zCDP,
//! and budgets of sequentially composed mechanisms add up.
//!
//! # Randomness
//!
//! Noise is drawn from a [`ChaCha20Rng`]. Every independent stream (one per
//! replicate, one per candidate of a selection) is seeded by
//! [`derive_seed`], a SplitMix64 finalizer applied to the parent seed mixed
//! with the stream index. Streams are never shared across threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::CoefficientGrid;

/// The generator used throughout the crate.
pub type NoiseRng = ChaCha20Rng;

/// zCDP parameter `ρ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && rho > 0.0 {
            Ok(PrivacyBudget(rho))
        } else {
            Err(Error::invalid(format!("privacy budget must be positive and finite, got {rho}")))
        }
    }

    pub fn rho(self) -> f64 {
        self.0
    }

    /// One of `parts` equal shares.
    pub fn split(self, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(Error::invalid("cannot split a budget into zero parts"));
        }
        PrivacyBudget::new(self.0 / parts as f64)
    }

    pub fn scale(self, factor: f64) -> Result<Self> {
        PrivacyBudget::new(self.0 * factor)
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;

    fn try_from(rho: f64) -> Result<Self> {
        PrivacyBudget::new(rho)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(b: PrivacyBudget) -> f64 {
        b.0
    }
}

/// Standard deviation of the noise added to each real coordinate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub const ZERO: NoiseScale = NoiseScale(0.0);

    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(NoiseScale(sigma))
        } else {
            Err(Error::invalid(format!("noise scale must be nonnegative and finite, got {sigma}")))
        }
    }

    pub fn sigma(self) -> f64 {
        self.0
    }
}

/// `ℓ₂` sensitivity of the stacked real/imaginary coefficient vector:
/// `(2/n)·√(2·(2M+1)^d)`.
pub fn coefficient_sensitivity(n: usize, cutoff: usize, dim: usize) -> f64 {
    let count = model_dimension(cutoff, dim);
    (2.0 / n as f64) * (2.0 * count).sqrt()
}

/// `(2M+1)^d` as a float.
pub fn model_dimension(cutoff: usize, dim: usize) -> f64 {
    ((2 * cutoff + 1) as f64).powi(dim as i32)
}

/// Gaussian mechanism calibration `σ = Δ/√(2ρ)`.
pub fn gaussian_sigma(sensitivity: f64, budget: PrivacyBudget) -> Result<NoiseScale> {
    if !(sensitivity >= 0.0) {
        return Err(Error::invalid(format!("sensitivity must be nonnegative, got {sensitivity}")));
    }
    NoiseScale::new(sensitivity / (2.0 * budget.rho()).sqrt())
}

/// `σ_M = 2·√((2M+1)^d) / (n·√ρ)`, the scale that makes the release of all
/// `(2M+1)^d` noisy coefficients `ρ`-zCDP.
pub fn sigma_for_cutoff(n: usize, budget: PrivacyBudget, cutoff: usize, dim: usize) -> NoiseScale {
    let count = model_dimension(cutoff, dim);
    NoiseScale(2.0 * count.sqrt() / (n as f64 * budget.rho().sqrt()))
}

/// Sum of the composed budgets.
pub fn compose(budgets: &[PrivacyBudget]) -> Result<PrivacyBudget> {
    if budgets.is_empty() {
        return Err(Error::invalid("cannot compose an empty list of budgets"));
    }
    PrivacyBudget::new(budgets.iter().map(|b| b.rho()).sum())
}

/// `θ̂_k = θ̃_k + σ·(ξ_re + i·ξ_im)` with standard normal `ξ`, drawn in
/// storage order, real part first. A zero scale returns the grid untouched
/// and consumes no randomness.
pub fn add_noise<R: Rng + ?Sized>(grid: &CoefficientGrid, sigma: NoiseScale, rng: &mut R) -> CoefficientGrid {
    let mut out = grid.clone();
    if sigma.sigma() == 0.0 {
        return out;
    }
    let s = sigma.sigma();
    for v in out.values_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(s * re, s * im);
    }
    out
}

/// SplitMix64 mix of a parent seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for independent stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> NoiseRng {
    NoiseRng::seed_from_u64(derive_seed(seed, stream))
}

pub fn seeded_rng(seed: u64) -> NoiseRng {
    NoiseRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub rho: f64,
}

/// Record of every budget charge against a declared total.
///
/// Charges that would push the spent amount above the total (beyond float
/// rounding slack) are refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    total: f64,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    const SLACK: f64 = 1e-12;

    pub fn new(total: PrivacyBudget) -> Self {
        BudgetLedger { total: total.rho(), entries: Vec::new() }
    }

    pub fn charge(&mut self, label: impl Into<String>, budget: PrivacyBudget) -> Result<()> {
        let spent = self.spent();
        if spent + budget.rho() > self.total * (1.0 + Self::SLACK) {
            return Err(Error::BudgetExceeded { requested: budget.rho(), spent, total: self.total });
        }
        self.entries.push(LedgerEntry { label: label.into(), rho: budget.rho() });
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn spent(&self) -> f64 {
        self.entries.iter().map(|e| e.rho).sum()
    }

    pub fn remaining(&self) -> f64 {
        (self.total - self.spent()).max(0.0)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }
}

impl std::fmt::Display for BudgetLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "privacy ledger (zCDP), declared total rho = {}", self.total)?;
        for e in &self.entries {
            writeln!(f, "  {:<32} rho = {}", e.label, e.rho)?;
        }
        write!(f, "  spent = {}, unspent = {}", self.spent(), self.remaining())
    }
}
