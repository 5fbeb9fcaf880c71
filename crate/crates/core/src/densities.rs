//! Ground-truth densities on `[0,1]^d` with known smoothness, and rejection
//! sampling from them.
//!
//! * [`TrigDensity`]: a random trigonometric polynomial with exact Fourier
//!   coefficients, a Sobolev budget at most `L²` and a certified positive
//!   minimum.
//! * [`PackingDensity`]: the uniform density perturbed by disjoint smooth
//!   bumps on an `m^d` grid, one bit per bump.
//! * [`UniformDensity`] and [`ClippedEstimate`] (a fitted estimate turned into
//!   a proper density by clipping at zero and renormalizing).

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::ProjectionEstimate;
use crate::fourier::{CoefficientGrid, Point};
use crate::privacy::seeded_rng;

/// Ψ(x) = exp(−1/(1−‖x‖²)) inside the open unit ball, 0 outside.
pub fn bump_psi(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// `C(s) = 2^{2s}·3^{−s}/(1 − 2^{−2s})`, the Fourier tail constant of the
/// fractional Hölder part.
pub fn holder_tail_constant(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid(format!("Hölder exponent must lie in (0, 1), got {s}")));
    }
    Ok(4f64.powf(s) * 3f64.powf(-s) / (1.0 - 4f64.powf(-s)))
}

/// Per-axis lattice size used for positivity certification and quadrature.
pub fn lattice_resolution(dim: usize) -> usize {
    match dim {
        0 | 1 => 1 << 10,
        2 => 1 << 7,
        _ => 1 << 5,
    }
}

/// Complete homogeneous symmetric polynomial `h_m(y_1, …, y_d)`, i.e.
/// `Σ_{|α|=m} Π y_i^{α_i}`.
fn complete_homogeneous(m: usize, ys: &[f64]) -> f64 {
    let mut h = vec![0.0; m + 1];
    h[0] = 1.0;
    for &y in ys {
        for deg in 1..=m {
            h[deg] += y * h[deg - 1];
        }
    }
    h[m]
}

/// Sobolev weight of frequency `k` at order `⌊β⌋`:
/// `Σ_{|α|=⌊β⌋} Π (2πk_i)^{2α_i}`.
pub fn sobolev_weight(k: &[i64], beta: f64) -> f64 {
    let ys: Vec<f64> = k.iter().map(|&v| (TAU * v as f64).powi(2)).collect();
    complete_homogeneous(beta.floor() as usize, &ys)
}

/// `Σ_k sobolev_weight(k)·|θ_k|²`.
pub fn sobolev_budget(coeffs: &CoefficientGrid, beta: f64) -> f64 {
    coeffs
        .multi_indices()
        .zip(coeffs.values())
        .map(|(k, v)| sobolev_weight(&k, beta) * v.norm_sqr())
        .sum()
}

/// Evaluatable density with a known upper bound.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    /// Some `B ≥ sup f`.
    fn sup_bound(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformDensity {
    pub dim: usize,
}

impl Density for UniformDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn sup_bound(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigDensity {
    coeffs: CoefficientGrid,
    beta: f64,
    radius: f64,
    min_value: f64,
}

/// Spread of the initial coefficient magnitudes beyond the smoothness decay.
const DECAY_MARGIN: f64 = 0.51;
const SOBOLEV_SLACK: f64 = 0.9;
const MIN_DENSITY: f64 = 0.01;
const MAX_DAMPING_STEPS: usize = 60;

impl TrigDensity {
    /// Validates a coefficient grid as a density fixture and certifies its
    /// minimum on the lattice of [`lattice_resolution`].
    pub fn new(coeffs: CoefficientGrid, beta: f64, radius: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let zero = coeffs.values()[coeffs.zero_index()];
        if (zero - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::Construction(format!("θ_0 must be 1, got {zero}")));
        }
        if coeffs.hermitian_defect() > 1e-12 {
            return Err(Error::Construction("coefficients are not Hermitian-symmetric".into()));
        }
        let budget = sobolev_budget(&coeffs, beta);
        if budget > radius * radius * (1.0 + 1e-12) {
            return Err(Error::Construction(format!(
                "Sobolev budget {budget} exceeds L² = {}",
                radius * radius
            )));
        }
        let min_value = certified_minimum(&coeffs);
        if min_value < 0.0 {
            return Err(Error::Construction(format!("positivity not certified (lower bound {min_value})")));
        }
        Ok(TrigDensity { coeffs, beta, radius, min_value })
    }

    pub fn coeffs(&self) -> &CoefficientGrid {
        &self.coeffs
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn sobolev_budget(&self) -> f64 {
        sobolev_budget(&self.coeffs, self.beta)
    }
}

/// Lattice minimum of the real part minus a Lipschitz slack covering the gap
/// between lattice points.
fn certified_minimum(coeffs: &CoefficientGrid) -> f64 {
    let n = lattice_resolution(coeffs.dim());
    let lattice_min = coeffs
        .evaluate_on_lattice(n)
        .iter()
        .map(|v| v.re)
        .fold(f64::INFINITY, f64::min);
    let half_gap = 0.5 / n as f64;
    let slack: f64 = coeffs
        .multi_indices()
        .zip(coeffs.values())
        .map(|(k, v)| {
            let l1: i64 = k.iter().map(|x| x.abs()).sum();
            v.norm() * TAU * l1 as f64 * half_gap
        })
        .sum();
    lattice_min - slack
}

/// Draws a random trigonometric density of nominal smoothness `beta` with
/// frequencies up to `m_truth`, Sobolev budget at most `L²` and certified
/// minimum at least 0.01.
///
/// For each `k` after the origin in storage order, one uniform sets the
/// magnitude `u·(1+‖k‖_∞)^{−(β+d/2+0.51)}` and a second the phase; `θ_{−k}`
/// is the conjugate.
pub fn make_trig_density<R: Rng + ?Sized>(
    beta: f64,
    radius: f64,
    m_truth: usize,
    dim: usize,
    rng: &mut R,
) -> Result<TrigDensity> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if !(radius > 1.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("Sobolev radius must exceed 1, got {radius}")));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut coeffs = CoefficientGrid::uniform(dim, m_truth)?;
    if m_truth == 0 {
        return TrigDensity::new(coeffs, beta, radius);
    }
    let len = coeffs.len();
    let zero = coeffs.zero_index();
    let exponent = beta + dim as f64 / 2.0 + DECAY_MARGIN;
    for idx in zero + 1..len {
        let k = coeffs.multi_index(idx);
        let sup = k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64;
        let magnitude = rng.random::<f64>() * (1.0 + sup).powf(-exponent);
        let phase = TAU * rng.random::<f64>();
        let v = Complex64::from_polar(magnitude, phase);
        coeffs.values_mut()[idx] = v;
        coeffs.values_mut()[len - 1 - idx] = v.conj();
    }

    let origin_weight = sobolev_weight(&vec![0; dim], beta);
    let rest = sobolev_budget(&coeffs, beta) - origin_weight;
    if rest > 0.0 {
        let scale = (SOBOLEV_SLACK * (radius * radius - origin_weight) / rest).sqrt();
        scale_nonzero(&mut coeffs, scale);
    }

    for _ in 0..=MAX_DAMPING_STEPS {
        if certified_minimum(&coeffs) >= MIN_DENSITY {
            return TrigDensity::new(coeffs, beta, radius);
        }
        scale_nonzero(&mut coeffs, 0.5);
    }
    Err(Error::Construction(format!(
        "could not certify a minimum of {MIN_DENSITY} after {MAX_DAMPING_STEPS} damping steps"
    )))
}

fn scale_nonzero(coeffs: &mut CoefficientGrid, factor: f64) {
    let zero = coeffs.zero_index();
    for (i, v) in coeffs.values_mut().iter_mut().enumerate() {
        if i != zero {
            *v *= factor;
        }
    }
}

/// `Σ_{k ∉ {−M..M}^d} |θ_k|²`, the squared `L²` distance between the truth
/// and its projection at cut-off `cutoff`.
pub fn exact_bias(truth: &TrigDensity, cutoff: usize) -> f64 {
    let c = truth.coeffs();
    c.multi_indices()
        .zip(c.values())
        .filter(|(k, _)| k.iter().any(|v| v.unsigned_abs() as usize > cutoff))
        .map(|(_, v)| v.norm_sqr())
        .sum()
}

impl Density for TrigDensity {
    fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.evaluate(x).unwrap_or(f64::NAN)
    }

    fn sup_bound(&self) -> f64 {
        self.coeffs.l1_norm()
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Surface area of the unit sphere in `R^d`.
fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => TAU,
        d => TAU * sphere_area(d - 2) / (d - 2) as f64,
    }
}

/// `∫_{R^d} Ψ(x)^p dx` by radial quadrature.
fn bump_moment(dim: usize, power: f64) -> f64 {
    let radial = |r: f64| {
        if r >= 1.0 {
            0.0
        } else {
            r.powi(dim as i32 - 1) * (-power / (1.0 - r * r)).exp()
        }
    };
    sphere_area(dim) * adaptive_simpson(&radial, 0.0, 1.0, 1e-14)
}

/// `Σ_{|α|=k} ∫ (∂^α g)²` for `g = Ψ(·/2)`, by forward differences on a
/// lattice over `[−2, 2]^d`.
fn bump_derivative_energy(dim: usize, order: usize) -> f64 {
    let points: usize = match dim {
        1 => 8193,
        2 => 513,
        _ => 129,
    };
    let step = 4.0 / (points - 1) as f64;
    let total = points.pow(dim as u32);
    let base: Vec<f64> = (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; dim];
            for slot in x.iter_mut().rev() {
                *slot = -2.0 + (idx % points) as f64 * step;
                idx /= points;
            }
            let half: Vec<f64> = x.iter().map(|v| v / 2.0).collect();
            bump_psi(&half)
        })
        .collect();

    let mut energy = 0.0;
    for alpha in multi_indices_of_order(dim, order) {
        let mut data = base.clone();
        let mut shape = vec![points; dim];
        for (axis, &times) in alpha.iter().enumerate() {
            for _ in 0..times {
                (data, shape) = forward_difference(&data, &shape, axis, step);
            }
        }
        energy += data.iter().map(|v| v * v).sum::<f64>() * step.powi(dim as i32);
    }
    energy
}

fn multi_indices_of_order(dim: usize, order: usize) -> Vec<Vec<usize>> {
    if dim == 1 {
        return vec![vec![order]];
    }
    (0..=order)
        .flat_map(|first| {
            multi_indices_of_order(dim - 1, order - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn forward_difference(data: &[f64], shape: &[usize], axis: usize, step: f64) -> (Vec<f64>, Vec<usize>) {
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let mut out = Vec::with_capacity(outer * (len - 1) * inner);
    for o in 0..outer {
        for j in 0..len - 1 {
            for i in 0..inner {
                let a = data[(o * len + j) * inner + i];
                let b = data[(o * len + j + 1) * inner + i];
                out.push((b - a) / step);
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] -= 1;
    (out, new_shape)
}

/// Bump-perturbed uniform density
/// `f_θ = 1 + h^β Σ_i θ_i ψ((x − p_i)/h) − ‖θ‖₁ γ h^{β+d}`
/// with `ψ = a·Ψ(·/2)` and grid points `p_i ∈ {1/(m+1), …, m/(m+1)}^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingDensity {
    theta: Vec<bool>,
    m: usize,
    dim: usize,
    beta: f64,
    radius: f64,
    halve_h: bool,
    amplitude: f64,
    gamma: f64,
    delta: f64,
    h: f64,
}

impl PackingDensity {
    pub const MAX_DIM: usize = 3;
    pub const MAX_ORDER: usize = 4;

    /// `halve_h` uses `h = min{1/(2γ(m+1)), 1/(4(m+1))}`, which keeps the
    /// density above 1/2.
    pub fn new(theta: Vec<bool>, m: usize, beta: f64, dim: usize, radius: f64, halve_h: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("packing grid needs m >= 1"));
        }
        if dim == 0 || dim > Self::MAX_DIM {
            return Err(Error::invalid(format!("packing densities support d in 1..={}", Self::MAX_DIM)));
        }
        if !(beta > 0.0 && beta.ceil() as usize <= Self::MAX_ORDER) {
            return Err(Error::invalid(format!("packing densities support beta in (0, {}]", Self::MAX_ORDER)));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("Sobolev radius must be positive, got {radius}")));
        }
        let count = m.pow(dim as u32);
        if theta.len() != count {
            return Err(Error::invalid(format!("theta must have m^d = {count} entries, got {}", theta.len())));
        }

        // the derivative order is ⌊β⌋ in the smoothness definition; for
        // fractional β the next order is also kept below L²
        let energy = [beta.floor() as usize, beta.ceil() as usize]
            .into_iter()
            .map(|k| bump_derivative_energy(dim, k))
            .fold(0.0, f64::max);
        let amplitude = 0.5 * (radius / energy.sqrt()).min(1.0);
        let scale = 2f64.powi(dim as i32);
        let gamma = amplitude * scale * bump_moment(dim, 1.0);
        let delta = amplitude * amplitude * scale * bump_moment(dim, 2.0);
        let mp1 = (m + 1) as f64;
        let first = if halve_h { 1.0 / (2.0 * gamma * mp1) } else { 1.0 / (gamma * mp1) };
        let h = first.min(1.0 / (4.0 * mp1));
        Ok(PackingDensity { theta, m, dim, beta, radius, halve_h, amplitude, gamma, delta, h })
    }

    pub fn theta(&self) -> &[bool] {
        &self.theta
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn halve_h(&self) -> bool {
        self.halve_h
    }

    /// `a` in `ψ = a·Ψ(·/2)`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// `γ = ∫ψ`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `δ = ∫ψ²`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `‖θ‖₁ γ h^{β+d}`, the constant subtracted to restore unit mass.
    pub fn offset(&self) -> f64 {
        let ones = self.theta.iter().filter(|&&b| b).count() as f64;
        ones * self.gamma * self.h.powf(self.beta + self.dim as f64)
    }

    fn psi(&self, u: &[f64]) -> f64 {
        let half: Vec<f64> = u.iter().map(|v| v / 2.0).collect();
        self.amplitude * bump_psi(&half)
    }

    /// Values on the lattice `{0, 1/N, …}^d` in lexicographic order.
    pub fn evaluate_on_lattice(&self, points_per_axis: usize) -> Vec<f64> {
        let total = points_per_axis.pow(self.dim as u32);
        let mut x = vec![0.0; self.dim];
        (0..total)
            .map(|mut idx| {
                for slot in x.iter_mut().rev() {
                    *slot = (idx % points_per_axis) as f64 / points_per_axis as f64;
                    idx /= points_per_axis;
                }
                self.eval(&x)
            })
            .collect()
    }

    /// Lattice-rule integral of `f_θ`.
    pub fn mass(&self, points_per_axis: usize) -> f64 {
        let vals = self.evaluate_on_lattice(points_per_axis);
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn lattice_min(&self, points_per_axis: usize) -> f64 {
        self.evaluate_on_lattice(points_per_axis).into_iter().fold(f64::INFINITY, f64::min)
    }
}

impl Density for PackingDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        // supports have radius 2h ≤ 1/(2(m+1)): only the nearest grid point can contribute
        let mp1 = (self.m + 1) as f64;
        let mut flat = 0usize;
        let mut u = Vec::with_capacity(self.dim);
        for &xi in x {
            let j = (xi * mp1).round().clamp(1.0, self.m as f64);
            flat = flat * self.m + (j as usize - 1);
            u.push((xi - j / mp1) / self.h);
        }
        let bump = if self.theta[flat] { self.psi(&u) } else { 0.0 };
        1.0 + self.h.powf(self.beta) * bump - self.offset()
    }

    fn sup_bound(&self) -> f64 {
        1.0 + self.h.powf(self.beta) * self.amplitude * (-1.0f64).exp()
    }
}

/// `max(Re f̂, 0)` renormalized to unit mass: sampling from a private
/// estimate is post-processing and costs no budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedEstimate {
    coeffs: CoefficientGrid,
    mass: f64,
}

impl ClippedEstimate {
    pub fn new(estimate: &ProjectionEstimate) -> Result<Self> {
        let coeffs = estimate.coeffs().clone();
        let n = lattice_resolution(coeffs.dim()).max(4 * coeffs.cutoff() + 4);
        let vals = coeffs.evaluate_on_lattice(n);
        let mass = vals.iter().map(|v| v.re.max(0.0)).sum::<f64>() / vals.len() as f64;
        if !(mass > 1e-9) {
            return Err(Error::Sampling(format!("clipped estimate has mass {mass}; nothing to sample")));
        }
        Ok(ClippedEstimate { coeffs, mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl Density for ClippedEstimate {
    fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.evaluate(x).map_or(f64::NAN, |v| v.max(0.0) / self.mass)
    }

    fn sup_bound(&self) -> f64 {
        self.coeffs.l1_norm() / self.mass
    }
}

/// Proposals per requested point before giving up, per unit of sup-bound.
const PROPOSAL_CAP: f64 = 1000.0;

/// Draws `n` points by rejection from the uniform proposal. Each proposal
/// consumes `d` uniforms; an acceptance uniform is drawn only when
/// `f(x) < B`, so a density attaining its bound everywhere returns the raw
/// proposals.
pub fn rejection_sample<D: Density + ?Sized, R: Rng + ?Sized>(density: &D, n: usize, rng: &mut R) -> Result<Vec<Point>> {
    let bound = density.sup_bound();
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid(format!("sup bound must be positive and finite, got {bound}")));
    }
    let dim = density.dim();
    let cap = (PROPOSAL_CAP * bound.max(1.0) * n.max(1) as f64).max(1e6) as u64;
    let mut out = Vec::with_capacity(n);
    let mut proposals = 0u64;
    while out.len() < n {
        if proposals >= cap {
            return Err(Error::Sampling(format!(
                "accepted {} of {n} points after {proposals} proposals",
                out.len()
            )));
        }
        proposals += 1;
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let fx = density.eval(&x);
        if fx >= bound || rng.random::<f64>() * bound < fx {
            out.push(Point::new_unchecked(x));
        }
    }
    Ok(out)
}

/// Serialized description of a ground-truth density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform {
        d: usize,
    },
    Trig {
        beta: f64,
        #[serde(rename = "L")]
        radius: f64,
        min_value: f64,
        coefficients: CoefficientGrid,
    },
    Packing {
        d: usize,
        m: usize,
        beta: f64,
        #[serde(rename = "L")]
        radius: f64,
        theta: Vec<u8>,
        #[serde(default)]
        halve_h: bool,
    },
    /// Recipe for [`make_trig_density`] seeded with `seed`.
    RandomTrig {
        d: usize,
        beta: f64,
        #[serde(rename = "L")]
        radius: f64,
        m_truth: usize,
        seed: u64,
    },
}

/// A constructed ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    Uniform(UniformDensity),
    Trig(TrigDensity),
    Packing(PackingDensity),
}

impl Fixture {
    /// Fourier coefficients when the density is a trigonometric polynomial.
    pub fn coefficients(&self) -> Option<CoefficientGrid> {
        match self {
            Fixture::Uniform(u) => CoefficientGrid::uniform(u.dim, 0).ok(),
            Fixture::Trig(t) => Some(t.coeffs().clone()),
            Fixture::Packing(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Fixture::Uniform(_) => "uniform",
            Fixture::Trig(_) => "trig",
            Fixture::Packing(_) => "packing",
        }
    }

    /// Nominal smoothness, absent for the uniform density.
    pub fn beta(&self) -> Option<f64> {
        match self {
            Fixture::Uniform(_) => None,
            Fixture::Trig(t) => Some(t.beta()),
            Fixture::Packing(p) => Some(p.beta()),
        }
    }

    pub fn to_spec(&self) -> DensitySpec {
        DensitySpec::from(self)
    }
}

impl Density for Fixture {
    fn dim(&self) -> usize {
        match self {
            Fixture::Uniform(u) => u.dim(),
            Fixture::Trig(t) => t.dim(),
            Fixture::Packing(p) => p.dim(),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Fixture::Uniform(u) => u.eval(x),
            Fixture::Trig(t) => t.eval(x),
            Fixture::Packing(p) => p.eval(x),
        }
    }

    fn sup_bound(&self) -> f64 {
        match self {
            Fixture::Uniform(u) => u.sup_bound(),
            Fixture::Trig(t) => t.sup_bound(),
            Fixture::Packing(p) => p.sup_bound(),
        }
    }
}

impl DensitySpec {
    pub fn build(&self) -> Result<Fixture> {
        match self {
            DensitySpec::Uniform { d } => {
                if *d == 0 {
                    return Err(Error::invalid("dimension must be at least 1"));
                }
                Ok(Fixture::Uniform(UniformDensity { dim: *d }))
            }
            DensitySpec::Trig { beta, radius, coefficients, .. } => {
                Ok(Fixture::Trig(TrigDensity::new(coefficients.clone(), *beta, *radius)?))
            }
            DensitySpec::Packing { d, m, beta, radius, theta, halve_h } => {
                if let Some(bad) = theta.iter().find(|&&b| b > 1) {
                    return Err(Error::invalid(format!("theta entries must be 0 or 1, found {bad}")));
                }
                let bits = theta.iter().map(|&b| b == 1).collect();
                Ok(Fixture::Packing(PackingDensity::new(bits, *m, *beta, *d, *radius, *halve_h)?))
            }
            DensitySpec::RandomTrig { d, beta, radius, m_truth, seed } => {
                let mut rng = seeded_rng(*seed);
                Ok(Fixture::Trig(make_trig_density(*beta, *radius, *m_truth, *d, &mut rng)?))
            }
        }
    }
}

impl From<&Fixture> for DensitySpec {
    fn from(f: &Fixture) -> Self {
        match f {
            Fixture::Uniform(u) => DensitySpec::Uniform { d: u.dim },
            Fixture::Trig(t) => DensitySpec::Trig {
                beta: t.beta,
                radius: t.radius,
                min_value: t.min_value,
                coefficients: t.coeffs.clone(),
            },
            Fixture::Packing(p) => DensitySpec::Packing {
                d: p.dim,
                m: p.m,
                beta: p.beta,
                radius: p.radius,
                theta: p.theta.iter().map(|&b| u8::from(b)).collect(),
                halve_h: p.halve_h,
            },
        }
    }
}

/// Random bit vector for a packing density.
pub fn random_theta<R: Rng + ?Sized>(m: usize, dim: usize, rng: &mut R) -> Vec<bool> {
    (0..m.pow(dim as u32)).map(|_| rng.random::<bool>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::empirical_coefficients;
    use proptest::prelude::*;

    #[test]
    fn bump_examples() {
        assert!((bump_psi(&[0.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(bump_psi(&[1.0]), 0.0);
        assert_eq!(bump_psi(&[2.0, 0.0]), 0.0);
        assert!(bump_psi(&[0.999]) < 1e-200);
        assert!(bump_psi(&[0.999]) > 0.0);
    }

    proptest! {
        #[test]
        fn bump_is_symmetric(x in prop::collection::vec(-1.2f64..1.2, 3), flip in 0usize..3) {
            let v = bump_psi(&x);
            let mut y = x.clone();
            y[flip] = -y[flip];
            prop_assert_eq!(bump_psi(&y), v);
            // reordering the sum of squares moves ‖x‖² by an ulp, amplified by 1/(1-‖x‖²)²
            let z = vec![x[2], x[0], x[1]];
            let r2: f64 = x.iter().map(|t| t * t).sum();
            let tol = if r2 < 1.0 { 1e-14 * v / (1.0 - r2).powi(2) } else { 0.0 };
            prop_assert!((bump_psi(&z) - v).abs() <= tol + 1e-300);
        }
    }

    #[test]
    fn holder_constant_examples() {
        assert!((holder_tail_constant(0.5).unwrap() - 4.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((holder_tail_constant(1.0 - 1e-9).unwrap() - 16.0 / 9.0).abs() < 1e-6);
        for i in 1..10 {
            let c = holder_tail_constant(i as f64 / 10.0).unwrap();
            assert!(c.is_finite() && c > 0.0);
        }
        assert!(holder_tail_constant(0.0).is_err());
        assert!(holder_tail_constant(1.0).is_err());
    }

    #[test]
    fn complete_homogeneous_small_cases() {
        assert_eq!(complete_homogeneous(0, &[3.0, 5.0]), 1.0);
        assert_eq!(complete_homogeneous(1, &[3.0, 5.0]), 8.0);
        assert_eq!(complete_homogeneous(2, &[3.0, 5.0]), 9.0 + 15.0 + 25.0);
        assert_eq!(complete_homogeneous(2, &[2.0]), 4.0);
    }

    #[test]
    fn sobolev_budget_example() {
        let mut g = CoefficientGrid::uniform(1, 1).unwrap();
        g.set(&[1], Complex64::new(0.2, 0.0)).unwrap();
        g.set(&[-1], Complex64::new(0.2, 0.0)).unwrap();
        let b = sobolev_budget(&g, 1.0);
        assert!((b - 2.0 * TAU.powi(2) * 0.04).abs() < 1e-12);
        assert!((b - 3.158).abs() < 1e-3);
    }

    #[test]
    fn trig_zero_cutoff_is_uniform() {
        let t = make_trig_density(1.0, 2.0, 0, 2, &mut seeded_rng(0)).unwrap();
        assert_eq!(t.coeffs().len(), 1);
        assert_eq!(t.sobolev_budget(), 0.0);
        assert_eq!(t.min_value(), 1.0);
    }

    #[test]
    fn trig_fixture_invariants() {
        for &(beta, d, m) in &[(0.5, 1, 20), (1.0, 1, 16), (2.0, 1, 32), (1.0, 2, 6), (1.5, 3, 3)] {
            let t = make_trig_density(beta, 2.0, m, d, &mut seeded_rng(5)).unwrap();
            let c = t.coeffs();
            assert!(c.hermitian_defect() < 1e-15);
            assert_eq!(c.values()[c.zero_index()], Complex64::new(1.0, 0.0));
            assert!(t.sobolev_budget() <= 4.0);
            assert!(t.min_value() >= 0.01);
            let lattice = c.evaluate_on_lattice(lattice_resolution(d));
            let mass = lattice.iter().map(|v| v.re).sum::<f64>() / lattice.len() as f64;
            assert!((mass - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn trig_fixture_is_seed_deterministic() {
        let a = make_trig_density(2.0, 2.0, 8, 1, &mut seeded_rng(9)).unwrap();
        let b = make_trig_density(2.0, 2.0, 8, 1, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_bias_examples() {
        let mut g = CoefficientGrid::uniform(1, 2).unwrap();
        g.set(&[2], Complex64::new(0.1, 0.0)).unwrap();
        g.set(&[-2], Complex64::new(0.1, 0.0)).unwrap();
        let t = TrigDensity::new(g, 1.0, 2.0).unwrap();
        assert!((exact_bias(&t, 1) - 0.02).abs() < 1e-15);
        assert_eq!(exact_bias(&t, 2), 0.0);
        assert_eq!(exact_bias(&t, 0), exact_bias(&t, 1));
    }

    #[test]
    fn exact_bias_is_nonincreasing() {
        let t = make_trig_density(1.0, 3.0, 10, 1, &mut seeded_rng(1)).unwrap();
        let biases: Vec<f64> = (0..=12).map(|m| exact_bias(&t, m)).collect();
        assert!(biases.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(biases[10], 0.0);
    }

    #[test]
    fn packing_all_zero_is_uniform() {
        let p = PackingDensity::new(vec![false; 4], 4, 1.0, 1, 2.0, false).unwrap();
        for i in 0..50 {
            assert_eq!(p.eval(&[i as f64 / 50.0]), 1.0);
        }
    }

    #[test]
    fn packing_geometry() {
        let p = PackingDensity::new(vec![true; 9], 3, 1.0, 2, 2.0, false).unwrap();
        assert!(p.h() <= 1.0 / (p.gamma() * 4.0) && p.h() <= 1.0 / 16.0);
        assert!((p.mass(256) - 1.0).abs() < 1e-6);
        assert!(p.lattice_min(128) >= 0.0);
        assert!(p.sup_bound() >= p.evaluate_on_lattice(64).into_iter().fold(0.0, f64::max));
    }

    #[test]
    fn packing_rejects_bad_theta() {
        assert!(PackingDensity::new(vec![true; 3], 2, 1.0, 1, 2.0, false).is_err());
        assert!(PackingDensity::new(vec![true; 4], 2, 1.0, 4, 2.0, false).is_err());
    }

    #[test]
    fn bump_moment_one_dimension() {
        // ∫_{-1}^{1} exp(-1/(1-x²)) dx ≈ 0.443993816168
        assert!((bump_moment(1, 1.0) - 0.443_993_816_168).abs() < 1e-10);
    }

    #[test]
    fn uniform_rejection_returns_raw_proposals() {
        let pts = rejection_sample(&UniformDensity { dim: 2 }, 5, &mut seeded_rng(4)).unwrap();
        let mut rng = seeded_rng(4);
        for p in &pts {
            let x: Vec<f64> = (0..2).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
            assert_eq!(p.coords(), &x[..]);
        }
    }

    #[test]
    fn rejection_is_deterministic_and_matches_coefficients() {
        let t = make_trig_density(1.0, 2.0, 4, 1, &mut seeded_rng(2)).unwrap();
        let a = rejection_sample(&t, 20_000, &mut seeded_rng(3)).unwrap();
        let b = rejection_sample(&t, 20_000, &mut seeded_rng(3)).unwrap();
        assert_eq!(a, b);
        let emp = empirical_coefficients(&a, 4).unwrap();
        let tol = 4.0 / (a.len() as f64).sqrt();
        for (e, v) in emp.values().iter().zip(t.coeffs().values()) {
            assert!((e - v).norm() < tol);
        }
    }

    #[test]
    fn zero_bound_is_rejected() {
        struct Zero;
        impl Density for Zero {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, _: &[f64]) -> f64 {
                0.0
            }
            fn sup_bound(&self) -> f64 {
                0.0
            }
        }
        assert!(rejection_sample(&Zero, 1, &mut seeded_rng(0)).unwrap_err().is_usage());
    }

    #[test]
    fn spec_round_trip() {
        let t = make_trig_density(2.0, 2.0, 5, 1, &mut seeded_rng(0)).unwrap();
        let fixtures = vec![
            Fixture::Uniform(UniformDensity { dim: 2 }),
            Fixture::Trig(t),
            Fixture::Packing(PackingDensity::new(vec![true, false, true, true], 4, 1.0, 1, 2.0, true).unwrap()),
        ];
        for f in fixtures {
            let json = serde_json::to_string(&f.to_spec()).unwrap();
            let back: DensitySpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back.build().unwrap(), f);
        }
        let recipe = r#"{"kind":"random-trig","d":1,"beta":2.0,"L":2.0,"m_truth":8,"seed":11}"#;
        let built = serde_json::from_str::<DensitySpec>(recipe).unwrap().build().unwrap();
        let direct = make_trig_density(2.0, 2.0, 8, 1, &mut seeded_rng(11)).unwrap();
        assert_eq!(built, Fixture::Trig(direct));
        let bad = r#"{"kind":"uniform","d":1,"extra":3}"#;
        assert!(serde_json::from_str::<DensitySpec>(bad).is_err());
    }
}
