//! Small numerical helpers: finite-difference weights, Gauss–Legendre rules,
//! multi-index enumeration.

use nalgebra::{DMatrix, SymmetricEigen};

/// Fornberg's algorithm. Returns `w[k][i]`: weight of node `i` for the k-th
/// derivative at `z`, for k = 0..=m.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let np = x.len();
    let mut c = vec![vec![0.0; np]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..np {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Golub–Welsch).
pub fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(npts, npts);
    for k in 1..npts {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..npts)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Composite Gauss–Legendre integral of `f` over [a, b] with `panels` panels.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, npts: usize) -> f64 {
    let (xs, ws) = gauss_legendre(npts);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in xs.iter().zip(&ws) {
            acc += w * f(lo + 0.5 * h * (x + 1.0));
        }
    }
    acc * 0.5 * h
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All multi-indices of length `n` with entries summing to at most `max`,
/// ordered by total order then lexicographically.
pub fn multi_indices(n: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=max {
        out.extend(multi_indices_exact(n, total));
    }
    out
}

/// Multi-indices of length `n` with |α| = total, lexicographically descending
/// in the first coordinate.
pub fn multi_indices_exact(n: usize, total: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in multi_indices_exact(n - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn alpha_factorial(alpha: &[u32]) -> f64 {
    alpha.iter().map(|&a| factorial(a)).product()
}

pub fn norm_order(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

/// Exact log2 of a dyadic rational 2^k, if it is one.
pub fn dyadic_exponent(x: f64) -> Option<i32> {
    if !(x > 0.0) || !x.is_finite() {
        return None;
    }
    let k = x.log2().round() as i32;
    if (2f64.powi(k) - x).abs() <= 1e-14 * x {
        Some(k)
    } else {
        None
    }
}
