//! Independent reference computations for integration tests. Nothing here
//! calls the library's numerical routines.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;

/// `Σ_k θ_k exp(2πi⟨k,x⟩)` by direct summation over an explicit index list.
pub fn eval_direct(indices: &[Vec<i64>], values: &[Complex64], x: &[f64]) -> Complex64 {
    indices
        .iter()
        .zip(values)
        .map(|(k, v)| {
            let phase: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
            v * Complex64::cis(TAU * phase)
        })
        .sum()
}

/// All of `{−M..M}^d` in lexicographic order, first axis slowest.
pub fn box_indices(dim: usize, cutoff: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<i64>| {
                (-cutoff..=cutoff).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

/// `max{n^{−2β/(2β+d)}, (n√ρ)^{−2β/(β+d)}}`, allowing `β = 0`.
pub fn rate(n: f64, rho: f64, beta: f64, d: f64) -> f64 {
    n.powf(-2.0 * beta / (2.0 * beta + d)).max((n * rho.sqrt()).powf(-2.0 * beta / (beta + d)))
}

/// Least-squares slope and its standard error.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let b = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - b - slope * x).powi(2)).sum();
    (slope, (ssr / (k - 2.0) / sxx).sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Writes straight to the process stderr so the line shows up even when the
/// harness captures test output.
pub fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "criterion {id:>2} [{verdict}] {title}: {detail}");
}
