//! Complex exponential basis on `[0,1]^d` and dense coefficient grids.
//!
//! A [`CoefficientGrid`] of cut-off `M` in dimension `d` stores one complex
//! value per multi-index `k ∈ {-M..M}^d`, flattened in lexicographic order of
//! `(k_1, …, k_d)` with `k_1` the slowest-varying axis. Basis functions are
//! `φ_k(x) = exp(i·2π·⟨k, x⟩)`, orthonormal in `L²([0,1]^d)`, so the squared
//! `L²` distance between two trigonometric polynomials is the squared `ℓ²`
//! distance between their grids.
//!
//! Empirical coefficients are computed by direct summation over the data,
//! `O(n·(2M+1)^d)` complex multiply-adds; there is no FFT path because data
//! points are not gridded.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Points per partial sum when accumulating empirical coefficients.
const CHUNK: usize = 1024;

/// Phases are re-anchored with a direct `cis` call every this many steps of
/// the multiplicative recurrence.
const REANCHOR: usize = 32;

/// Frequency multi-index `k ∈ ℤ^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<i64>);

impl MultiIndex {
    pub fn new(entries: Vec<i64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("multi-index must have at least one entry"));
        }
        Ok(MultiIndex(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[i64] {
        &self.0
    }

    /// `max_i |k_i|`.
    pub fn sup_norm(&self) -> u64 {
        self.0.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0)
    }
}

impl From<MultiIndex> for Vec<i64> {
    fn from(k: MultiIndex) -> Self {
        k.0
    }
}

/// A point of the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("point must have at least one coordinate"));
        }
        if let Some(&value) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::OutOfRange { index: 0, value });
        }
        Ok(Point(coords))
    }

    /// Builds a point without range validation. Callers guarantee `[0,1]^d`.
    pub(crate) fn new_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Checks that `data` is a nonempty set of points sharing one dimension and
/// returns that dimension.
pub fn data_dim(data: &[Point]) -> Result<usize> {
    let first = data.first().ok_or(Error::EmptyData)?;
    let d = first.dim();
    for (index, p) in data.iter().enumerate() {
        if p.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.dim() });
        }
        if let Some(&value) = p.coords().iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::OutOfRange { index, value });
        }
    }
    Ok(d)
}

/// `φ_k(x) = exp(i·2π·⟨k, x⟩)`.
pub fn eval_basis(k: &MultiIndex, x: &Point) -> Result<Complex64> {
    if k.dim() != x.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), found: x.dim() });
    }
    let phase: f64 = k
        .entries()
        .iter()
        .zip(x.coords())
        .map(|(&ki, &xi)| ki as f64 * xi)
        .sum();
    Ok(Complex64::cis(TAU * phase))
}

/// Fills `out` (length `2M+1`) with `exp(sign·i·2π·k·x)` for `k = -M..=M`.
///
/// Negative frequencies are exact conjugates of the positive ones.
fn fill_axis_phases(x: f64, cutoff: usize, sign: f64, out: &mut [Complex64]) {
    debug_assert_eq!(out.len(), 2 * cutoff + 1);
    let step = Complex64::cis(sign * TAU * x);
    out[cutoff] = Complex64::new(1.0, 0.0);
    for k in 1..=cutoff {
        let v = if k % REANCHOR == 0 {
            Complex64::cis(sign * TAU * (k as f64 * x))
        } else {
            out[cutoff + k - 1] * step
        };
        out[cutoff + k] = v;
        out[cutoff - k] = v.conj();
    }
}

/// `acc[j] += prefix · Π_i rows[i][j_i]` over the tensor grid.
fn accumulate_tensor(rows: &[&[Complex64]], prefix: Complex64, acc: &mut [Complex64]) {
    match rows {
        [] => {}
        [last] => {
            for (a, r) in acc.iter_mut().zip(last.iter()) {
                *a += prefix * r;
            }
        }
        [first, rest @ ..] => {
            let stride = acc.len() / first.len();
            for (block, r) in acc.chunks_mut(stride).zip(first.iter()) {
                accumulate_tensor(rest, prefix * r, block);
            }
        }
    }
}

/// `Σ_j values[j] · Π_i rows[i][j_i]`.
fn contract_tensor(rows: &[&[Complex64]], values: &[Complex64]) -> Complex64 {
    match rows {
        [] => Complex64::new(0.0, 0.0),
        [last] => values.iter().zip(last.iter()).map(|(v, r)| v * r).sum(),
        [first, rest @ ..] => {
            let stride = values.len() / first.len();
            values
                .chunks(stride)
                .zip(first.iter())
                .map(|(block, r)| r * contract_tensor(rest, block))
                .sum()
        }
    }
}

/// Flat indices, in the grid of cut-off `big`, of every entry of the grid of
/// cut-off `small ≤ big` (same dimension), in the small grid's order.
fn embed_indices(dim: usize, small: usize, big: usize) -> Vec<usize> {
    debug_assert!(small <= big);
    let ws = 2 * small + 1;
    let wb = 2 * big + 1;
    let offset = big - small;
    let mut out = vec![0usize];
    for _ in 0..dim {
        out = out
            .iter()
            .flat_map(|&base| (0..ws).map(move |j| base * wb + j + offset))
            .collect();
    }
    out
}

/// Dense complex Fourier coefficients over `{-M..M}^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrid {
    dim: usize,
    cutoff: usize,
    values: Vec<Complex64>,
}

impl CoefficientGrid {
    pub fn zeros(dim: usize, cutoff: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let len = grid_len(dim, cutoff)?;
        Ok(CoefficientGrid { dim, cutoff, values: vec![Complex64::new(0.0, 0.0); len] })
    }

    /// The grid of the uniform density: `θ_0 = 1`, everything else zero.
    pub fn uniform(dim: usize, cutoff: usize) -> Result<Self> {
        let mut g = Self::zeros(dim, cutoff)?;
        let zero = g.zero_index();
        g.values[zero] = Complex64::new(1.0, 0.0);
        Ok(g)
    }

    pub fn from_values(dim: usize, cutoff: usize, values: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let len = grid_len(dim, cutoff)?;
        if values.len() != len {
            return Err(Error::invalid(format!(
                "grid of dimension {dim} and cut-off {cutoff} needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(CoefficientGrid { dim, cutoff, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `2M + 1`.
    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn zero_index(&self) -> usize {
        (self.len() - 1) / 2
    }

    /// Flat position of `k`, or `None` when `k` lies outside the grid.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let m = self.cutoff as i64;
        let w = self.side();
        let mut idx = 0usize;
        for &ki in k {
            if ki < -m || ki > m {
                return None;
            }
            idx = idx * w + (ki + m) as usize;
        }
        Some(idx)
    }

    /// Multi-index stored at flat position `idx`.
    pub fn multi_index(&self, mut idx: usize) -> Vec<i64> {
        let w = self.side();
        let mut k = vec![0i64; self.dim];
        for slot in k.iter_mut().rev() {
            *slot = (idx % w) as i64 - self.cutoff as i64;
            idx /= w;
        }
        k
    }

    /// Coefficient at `k`; zero outside the grid.
    pub fn get(&self, k: &[i64]) -> Complex64 {
        self.index_of(k).map_or(Complex64::new(0.0, 0.0), |i| self.values[i])
    }

    pub fn set(&mut self, k: &[i64], value: Complex64) -> Result<()> {
        let i = self
            .index_of(k)
            .ok_or_else(|| Error::invalid(format!("multi-index {k:?} outside grid")))?;
        self.values[i] = value;
        Ok(())
    }

    /// Multi-indices in storage order.
    pub fn multi_indices(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|i| self.multi_index(i))
    }

    /// Restriction to (or zero-padding up to) cut-off `cutoff`.
    pub fn project(&self, cutoff: usize) -> CoefficientGrid {
        if cutoff == self.cutoff {
            return self.clone();
        }
        let mut out = CoefficientGrid {
            dim: self.dim,
            cutoff,
            values: vec![Complex64::new(0.0, 0.0); pow_len(self.dim, cutoff)],
        };
        if cutoff < self.cutoff {
            for (dst, src) in out.values.iter_mut().zip(embed_indices(self.dim, cutoff, self.cutoff)) {
                *dst = self.values[src];
            }
        } else {
            for (src, dst) in self.values.iter().zip(embed_indices(self.dim, self.cutoff, cutoff)) {
                out.values[dst] = *src;
            }
        }
        out
    }

    /// Complex value `Σ_k θ_k φ_k(x)`.
    pub fn evaluate_complex(&self, x: &[f64]) -> Result<Complex64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        let w = self.side();
        let mut phases = vec![Complex64::new(0.0, 0.0); w * self.dim];
        for (row, &xi) in phases.chunks_mut(w).zip(x) {
            fill_axis_phases(xi, self.cutoff, 1.0, row);
        }
        let rows: Vec<&[Complex64]> = phases.chunks(w).collect();
        Ok(contract_tensor(&rows, &self.values))
    }

    /// Real part of `Σ_k θ_k φ_k(x)`. Exact for Hermitian-symmetric grids.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate_complex(x)?.re)
    }

    /// `|Im Σ_k θ_k φ_k(x)|`, the part discarded by [`evaluate`](Self::evaluate).
    pub fn imaginary_residual(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate_complex(x)?.im.abs())
    }

    /// Complex values on the periodic lattice `{0, 1/N, …, (N-1)/N}^d`, in
    /// lexicographic lattice order.
    pub fn evaluate_on_lattice(&self, points_per_axis: usize) -> Vec<Complex64> {
        let w = self.side();
        let mut table = vec![Complex64::new(0.0, 0.0); w * points_per_axis];
        for (j, row) in table.chunks_mut(w).enumerate() {
            fill_axis_phases(j as f64 / points_per_axis as f64, self.cutoff, 1.0, row);
        }
        let total = points_per_axis.pow(self.dim as u32);
        let mut out = Vec::with_capacity(total);
        let mut lattice = vec![0usize; self.dim];
        for _ in 0..total {
            let rows: Vec<&[Complex64]> =
                lattice.iter().map(|&j| &table[j * w..(j + 1) * w]).collect();
            out.push(contract_tensor(&rows, &self.values));
            for slot in lattice.iter_mut().rev() {
                *slot += 1;
                if *slot < points_per_axis {
                    break;
                }
                *slot = 0;
            }
        }
        out
    }

    /// Replaces `θ_k` by `(θ_k + conj(θ_{-k})) / 2`; the result represents a
    /// real function.
    pub fn hermitian_symmetrize(&self) -> CoefficientGrid {
        // negation reverses lexicographic order over a symmetric box: -k sits at len-1-idx
        let n = self.len();
        let values = (0..n)
            .map(|i| (self.values[i] + self.values[n - 1 - i].conj()) * 0.5)
            .collect();
        CoefficientGrid { dim: self.dim, cutoff: self.cutoff, values }
    }

    /// Largest `|θ_{-k} - conj(θ_k)|` over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| (self.values[n - 1 - i] - self.values[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `Σ_k |θ_k|`, an upper bound on `sup_x |Σ θ_k φ_k(x)|`.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum()
    }

    /// `Σ_k |θ_k|²`, the squared `L²` norm of the represented function.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

fn pow_len(dim: usize, cutoff: usize) -> usize {
    (2 * cutoff + 1).pow(dim as u32)
}

fn grid_len(dim: usize, cutoff: usize) -> Result<usize> {
    let side = 2usize
        .checked_mul(cutoff)
        .and_then(|v| v.checked_add(1))
        .ok_or_else(|| Error::invalid("cut-off too large"))?;
    side.checked_pow(dim as u32)
        .filter(|&len| len <= (1 << 28))
        .ok_or_else(|| Error::invalid(format!("grid {side}^{dim} too large")))
}

/// `θ̃_k = (1/n) Σ_j conj(φ_k(X_j))` for every `k ∈ {-M..M}^d`.
///
/// Partial sums over fixed chunks of [`CHUNK`] points are reduced in chunk
/// order, so the result does not depend on the thread count.
pub fn empirical_coefficients(data: &[Point], cutoff: usize) -> Result<CoefficientGrid> {
    let dim = data_dim(data)?;
    let len = grid_len(dim, cutoff)?;
    let w = 2 * cutoff + 1;

    let partials: Vec<Vec<Complex64>> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![Complex64::new(0.0, 0.0); len];
            let mut phases = vec![Complex64::new(0.0, 0.0); w * dim];
            for p in chunk {
                for (row, &xi) in phases.chunks_mut(w).zip(p.coords()) {
                    fill_axis_phases(xi, cutoff, -1.0, row);
                }
                let rows: Vec<&[Complex64]> = phases.chunks(w).collect();
                accumulate_tensor(&rows, Complex64::new(1.0, 0.0), &mut acc);
            }
            acc
        })
        .collect();

    let mut sum = vec![Complex64::new(0.0, 0.0); len];
    for partial in &partials {
        for (s, v) in sum.iter_mut().zip(partial) {
            *s += v;
        }
    }
    let n = data.len() as f64;
    for s in &mut sum {
        *s /= n;
    }
    CoefficientGrid::from_values(dim, cutoff, sum)
}

/// `Σ_k |a_k - b_k|²` over the union of both supports, i.e. the squared `L²`
/// distance between the two trigonometric polynomials.
pub fn l2_distance_sq(a: &CoefficientGrid, b: &CoefficientGrid) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    let (small, big) = if a.cutoff <= b.cutoff { (a, b) } else { (b, a) };
    if small.cutoff == big.cutoff {
        return Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum());
    }
    let embed = embed_indices(a.dim, small.cutoff, big.cutoff);
    let mut inside = vec![false; big.len()];
    let mut total = 0.0;
    for (s, &bi) in small.values.iter().zip(&embed) {
        inside[bi] = true;
        total += (big.values[bi] - s).norm_sqr();
    }
    total += big
        .values
        .iter()
        .zip(&inside)
        .filter(|(_, &hit)| !hit)
        .map(|(v, _)| v.norm_sqr())
        .sum::<f64>();
    Ok(total)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridJson {
    d: usize,
    #[serde(rename = "M")]
    cutoff: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for CoefficientGrid {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GridJson {
            d: self.dim,
            cutoff: self.cutoff,
            re: self.values.iter().map(|v| v.re).collect(),
            im: self.values.iter().map(|v| v.im).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientGrid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = GridJson::deserialize(deserializer)?;
        if raw.re.len() != raw.im.len() {
            return Err(serde::de::Error::custom("`re` and `im` differ in length"));
        }
        let values = raw.re.into_iter().zip(raw.im).map(|(r, i)| Complex64::new(r, i)).collect();
        CoefficientGrid::from_values(raw.d, raw.cutoff, values).map_err(serde::de::Error::custom)
    }
}
