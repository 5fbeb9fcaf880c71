//! Non-adaptive projection estimators, cut-off rules and the minimax rate.
//!
//! Two cut-off formulas are in use for the same problem and they disagree by
//! a `2^d` factor inside the floors:
//!
//! * [`optimal_cutoff_thm`]: `M+1 = min{⌊(n/2^d)^{1/(2β+d)}⌋, ⌊(n√ρ/2^d)^{1/(β+d)}⌋}`
//! * [`optimal_cutoff_adaptive_form`]: `M = min{⌊n^{1/(2β+d)}⌋, ⌊(n√ρ)^{1/(β+d)}⌋}`
//!
//! Both are exposed under their own name and callers pick one explicitly
//! through [`CutoffRule`].

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fourier::{data_dim, empirical_coefficients, CoefficientGrid, Point};
use crate::privacy::{add_noise, sigma_for_cutoff, BudgetLedger, NoiseScale, PrivacyBudget};

/// `⌊x⌋` that tolerates a relative rounding error of `1e-9` below an integer,
/// so that e.g. `512^{1/3}` evaluates to 8 rather than 7.
pub(crate) fn robust_floor(x: f64) -> f64 {
    (x + 1e-9 * x.abs().max(1.0)).floor()
}

fn check_rate_args(n: f64, beta: f64, dim: usize) -> Result<()> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::invalid(format!("sample size must be at least 1, got {n}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("smoothness must be positive, got {beta}")));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    Ok(())
}

/// Cut-off tuned for the non-adaptive upper bound (with the `2^d` factor),
/// clamped to `M = 0` when the floors vanish.
pub fn optimal_cutoff_thm(n: f64, rho: PrivacyBudget, beta: f64, dim: usize) -> Result<usize> {
    check_rate_args(n, beta, dim)?;
    let d = dim as f64;
    let scale = 2f64.powi(dim as i32);
    let sampling = robust_floor((n / scale).powf(1.0 / (2.0 * beta + d)));
    let privacy = robust_floor((n * rho.rho().sqrt() / scale).powf(1.0 / (beta + d)));
    let m_plus_one = sampling.min(privacy);
    Ok(if m_plus_one < 1.0 { 0 } else { m_plus_one as usize - 1 })
}

/// Cut-off `M_{n,ρ}(β)` used by the adaptive procedures (no `2^d` factor),
/// never below 1.
pub fn optimal_cutoff_adaptive_form(n: f64, rho: PrivacyBudget, beta: f64, dim: usize) -> Result<usize> {
    check_rate_args(n, beta, dim)?;
    let d = dim as f64;
    let sampling = robust_floor(n.powf(1.0 / (2.0 * beta + d)));
    let privacy = robust_floor((n * rho.rho().sqrt()).powf(1.0 / (beta + d)));
    Ok(sampling.min(privacy).max(1.0) as usize)
}

/// Which cut-off formula an oracle (known-β) estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffRule {
    /// [`optimal_cutoff_thm`].
    Theorem,
    /// [`optimal_cutoff_adaptive_form`].
    #[default]
    AdaptiveForm,
}

impl CutoffRule {
    pub fn cutoff(self, n: f64, rho: PrivacyBudget, beta: f64, dim: usize) -> Result<usize> {
        match self {
            CutoffRule::Theorem => optimal_cutoff_thm(n, rho, beta, dim),
            CutoffRule::AdaptiveForm => optimal_cutoff_adaptive_form(n, rho, beta, dim),
        }
    }
}

/// Arguments of the rate `r_{n,ρ}(β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateQuery {
    pub n: f64,
    pub rho: PrivacyBudget,
    pub beta: f64,
    pub dim: usize,
}

impl RateQuery {
    pub fn new(n: f64, rho: PrivacyBudget, beta: f64, dim: usize) -> Result<Self> {
        check_rate_args(n, beta, dim)?;
        Ok(RateQuery { n, rho, beta, dim })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Sampling,
    Privacy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    pub sampling_term: f64,
    pub privacy_term: f64,
    /// The term attaining the maximum; ties count as sampling.
    pub regime: Regime,
}

/// `r_{n,ρ}(β) = max{n^{-2β/(2β+d)}, (n√ρ)^{-2β/(β+d)}}`.
pub fn theoretical_rate(q: &RateQuery) -> Rate {
    let d = q.dim as f64;
    let b = q.beta;
    let sampling_term = q.n.powf(-2.0 * b / (2.0 * b + d));
    let privacy_term = (q.n * q.rho.rho().sqrt()).powf(-2.0 * b / (b + d));
    let (value, regime) = if privacy_term > sampling_term {
        (privacy_term, Regime::Privacy)
    } else {
        (sampling_term, Regime::Sampling)
    };
    Rate { value, sampling_term, privacy_term, regime }
}

/// Upper bound on `E‖f̂_M − f_M‖²`: `(2M+1)^d/n + 2(2M+1)^d σ²`.
pub fn variance_bound(n: usize, cutoff: usize, dim: usize, sigma: NoiseScale) -> f64 {
    let count = crate::privacy::model_dimension(cutoff, dim);
    count / n as f64 + 2.0 * count * sigma.sigma().powi(2)
}

/// A fitted projection estimator `f̃_M` (no budget) or `f̂_M` (with budget).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEstimate {
    coeffs: CoefficientGrid,
    n: usize,
    rho_spent: Option<PrivacyBudget>,
    sigma: NoiseScale,
}

impl ProjectionEstimate {
    pub fn new(
        coeffs: CoefficientGrid,
        n: usize,
        rho_spent: Option<PrivacyBudget>,
        sigma: NoiseScale,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        if let Some(rho) = rho_spent {
            let expected = sigma_for_cutoff(n, rho, coeffs.cutoff(), coeffs.dim());
            if (expected.sigma() - sigma.sigma()).abs() > 4.0 * f64::EPSILON * expected.sigma() {
                return Err(Error::invalid(format!(
                    "noise scale {} does not match the calibrated {}",
                    sigma.sigma(),
                    expected.sigma()
                )));
            }
        } else if sigma.sigma() != 0.0 {
            return Err(Error::invalid("a non-private estimate must carry zero noise"));
        }
        Ok(ProjectionEstimate { coeffs, n, rho_spent, sigma })
    }

    pub fn coeffs(&self) -> &CoefficientGrid {
        &self.coeffs
    }

    pub fn cutoff(&self) -> usize {
        self.coeffs.cutoff()
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho_spent(&self) -> Option<PrivacyBudget> {
        self.rho_spent
    }

    pub fn sigma(&self) -> NoiseScale {
        self.sigma
    }

    pub fn into_coeffs(self) -> CoefficientGrid {
        self.coeffs
    }

    /// Averages `θ̂_k` with `conj(θ̂_{−k})` so the estimate is real-valued.
    /// Post-processing: the budget and noise scale are unchanged.
    pub fn symmetrized(&self) -> ProjectionEstimate {
        ProjectionEstimate { coeffs: self.coeffs.hermitian_symmetrize(), ..self.clone() }
    }
}

/// Restricts already computed empirical coefficients to `cutoff` and, with a
/// budget, privatizes them at `σ_M` for that budget.
///
/// `empirical` must be the output of [`empirical_coefficients`] on `n` points
/// at a cut-off of at least `cutoff`.
pub fn fit_from_empirical<R: Rng + ?Sized>(
    empirical: &CoefficientGrid,
    n: usize,
    cutoff: usize,
    budget: Option<PrivacyBudget>,
    rng: &mut R,
) -> Result<ProjectionEstimate> {
    if cutoff > empirical.cutoff() {
        return Err(Error::invalid(format!(
            "requested cut-off {cutoff} exceeds the computed {}",
            empirical.cutoff()
        )));
    }
    let base = empirical.project(cutoff);
    match budget {
        None => ProjectionEstimate::new(base, n, None, NoiseScale::ZERO),
        Some(rho) => {
            let sigma = sigma_for_cutoff(n, rho, cutoff, empirical.dim());
            let noisy = add_noise(&base, sigma, rng);
            ProjectionEstimate::new(noisy, n, Some(rho), sigma)
        }
    }
}

/// Projection estimator at cut-off `cutoff`, private when `budget` is given.
pub fn fit<R: Rng + ?Sized>(
    data: &[Point],
    cutoff: usize,
    budget: Option<PrivacyBudget>,
    rng: &mut R,
) -> Result<ProjectionEstimate> {
    data_dim(data)?;
    let empirical = empirical_coefficients(data, cutoff)?;
    fit_from_empirical(&empirical, data.len(), cutoff, budget, rng)
}

/// [`fit`] with a budget that is first charged to `ledger`.
pub fn fit_recorded<R: Rng + ?Sized>(
    data: &[Point],
    cutoff: usize,
    budget: PrivacyBudget,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<ProjectionEstimate> {
    data_dim(data)?;
    ledger.charge(format!("projection estimate M={cutoff}"), budget)?;
    fit(data, cutoff, Some(budget), rng)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateJson {
    d: usize,
    #[serde(rename = "M")]
    cutoff: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    n: usize,
    rho_spent: Option<f64>,
    sigma: f64,
}

impl Serialize for ProjectionEstimate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let values = self.coeffs.values();
        EstimateJson {
            d: self.dim(),
            cutoff: self.cutoff(),
            re: values.iter().map(|v| v.re).collect(),
            im: values.iter().map(|v| v.im).collect(),
            n: self.n,
            rho_spent: self.rho_spent.map(PrivacyBudget::rho),
            sigma: self.sigma.sigma(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProjectionEstimate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = EstimateJson::deserialize(deserializer)?;
        if raw.re.len() != raw.im.len() {
            return Err(D::Error::custom("`re` and `im` differ in length"));
        }
        let values = raw
            .re
            .into_iter()
            .zip(raw.im)
            .map(|(r, i)| num_complex::Complex64::new(r, i))
            .collect();
        let coeffs = CoefficientGrid::from_values(raw.d, raw.cutoff, values).map_err(D::Error::custom)?;
        let rho = raw.rho_spent.map(PrivacyBudget::new).transpose().map_err(D::Error::custom)?;
        let sigma = NoiseScale::new(raw.sigma).map_err(D::Error::custom)?;
        ProjectionEstimate::new(coeffs, raw.n, rho, sigma).map_err(D::Error::custom)
    }
}
