//! Uniform dyadic grids and sampled functions.
//!
//! A [`GridFunction`] stores midpoint samples of a function on an axis-aligned
//! box with spacing `h = 2^{-J}`. All norms in the crate are quadratures over
//! these samples.

use crate::error::{Error, Result};
use crate::numerics::{dyadic_exponent, fornberg, multi_indices, multi_indices_exact};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Invalid("bbox corners differ in dimension".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Invalid("bbox must satisfy lower < upper".into()));
        }
        Ok(Bbox { lower, upper })
    }

    /// [lo, hi]^n
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Bbox { lower: vec![lo; n], upper: vec![hi; n] }
    }

    pub fn unit(n: usize) -> Self {
        Self::cube(n, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains_box(&self, other: &Bbox) -> bool {
        (0..self.dim()).all(|d| other.lower[d] >= self.lower[d] - 1e-12 && other.upper[d] <= self.upper[d] + 1e-12)
    }
}

/// Smoothness/integrability parameters. `exact` carries rational forms of
/// (s, p) when they were given as fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactParams {
    pub s: (i64, i64),
    pub p: (i64, i64),
}

impl SpaceParams {
    pub fn new(n: usize, s: f64, p: f64, q: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::Invalid("n must be >= 1".into()));
        }
        if !(p >= 1.0) || p.is_infinite() {
            return Err(Error::Invalid(format!("p must lie in [1, inf), got {p}")));
        }
        if !(q > 0.0) {
            return Err(Error::Invalid(format!("q must be > 0, got {q}")));
        }
        if !s.is_finite() {
            return Err(Error::Invalid("s must be finite".into()));
        }
        Ok(SpaceParams { n, s, p, q, exact: None })
    }

    /// Parameters from rational (numerator, denominator) pairs for s and p.
    pub fn rational(n: usize, s: (i64, i64), p: (i64, i64), q: f64) -> Result<Self> {
        if s.1 <= 0 || p.1 <= 0 {
            return Err(Error::Invalid("denominators must be positive".into()));
        }
        let mut out = Self::new(n, s.0 as f64 / s.1 as f64, p.0 as f64 / p.1 as f64, q)?;
        out.exact = Some(ExactParams { s, p });
        Ok(out)
    }

    pub fn with_s(&self, s: f64) -> Self {
        SpaceParams { s, exact: None, ..self.clone() }
    }

    pub fn sigma_p(&self) -> f64 {
        self.n as f64 * (1.0 / self.p - 1.0).max(0.0)
    }

    pub fn sigma_pq(&self) -> f64 {
        self.n as f64 * (1.0 / self.p.min(self.q) - 1.0).max(0.0)
    }
}

/// Parse "3/2", "0.75" or "2" into an f64 plus an optional exact fraction.
pub fn parse_fraction(text: &str) -> Result<(f64, Option<(i64, i64)>)> {
    let t = text.trim();
    if let Some((a, b)) = t.split_once('/') {
        let num: i64 = a.trim().parse().map_err(|_| Error::Invalid(format!("bad fraction {t}")))?;
        let den: i64 = b.trim().parse().map_err(|_| Error::Invalid(format!("bad fraction {t}")))?;
        if den <= 0 {
            return Err(Error::Invalid(format!("bad denominator in {t}")));
        }
        return Ok((num as f64 / den as f64, Some((num, den))));
    }
    if let Ok(k) = t.parse::<i64>() {
        return Ok((k as f64, Some((k, 1))));
    }
    let v: f64 = t.parse().map_err(|_| Error::Invalid(format!("bad number {t}")))?;
    Ok((v, None))
}

/// The centered dyadic cube Q_{nu,m} = {x : |x_i - 2^{-nu} m_i| <= 2^{-nu-1}}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub nu: i32,
    pub m: Vec<i64>,
}

impl DyadicCube {
    pub fn new(nu: i32, m: Vec<i64>) -> Self {
        DyadicCube { nu, m }
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn side(&self) -> f64 {
        2f64.powi(-self.nu)
    }

    pub fn center(&self) -> Vec<f64> {
        self.m.iter().map(|&k| k as f64 * self.side()).collect()
    }

    /// Bounding box of d·Q.
    pub fn dilated_box(&self, d: f64) -> Bbox {
        let c = self.center();
        let half = 0.5 * d * self.side();
        Bbox { lower: c.iter().map(|x| x - half).collect(), upper: c.iter().map(|x| x + half).collect() }
    }

    pub fn contains(&self, x: &[f64], d: f64) -> bool {
        let half = 0.5 * d * self.side();
        self.center().iter().zip(x).all(|(c, y)| (y - c).abs() <= half + 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    bbox: Bbox,
    level: i32,
    dims: Vec<usize>,
    values: Vec<f64>,
}

pub(crate) fn grid_dims(bbox: &Bbox, level: i32) -> Result<Vec<usize>> {
    let scale = 2f64.powi(level);
    bbox.lower
        .iter()
        .zip(&bbox.upper)
        .map(|(lo, hi)| {
            let cells = (hi - lo) * scale;
            let k = cells.round();
            if (cells - k).abs() > 1e-9 || k < 1.0 {
                Err(Error::Invalid(format!(
                    "box width {} is not a positive multiple of 2^-{level}",
                    hi - lo
                )))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

impl GridFunction {
    pub fn new(bbox: Bbox, level: i32, values: Vec<f64>) -> Result<Self> {
        let dims = grid_dims(&bbox, level)?;
        let count: usize = dims.iter().product();
        if count != values.len() {
            return Err(Error::Invalid(format!("expected {count} samples, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(GridFunction { bbox, level, dims, values })
    }

    pub fn zeros(bbox: Bbox, level: i32) -> Result<Self> {
        let dims = grid_dims(&bbox, level)?;
        let count = dims.iter().product();
        Ok(GridFunction { bbox, level, dims, values: vec![0.0; count] })
    }

    /// Zero-dimensional grid holding a single value (a point face).
    pub fn point(value: f64) -> Self {
        GridFunction { bbox: Bbox { lower: vec![], upper: vec![] }, level: 0, dims: vec![], values: vec![value] }
    }

    pub fn from_fn(bbox: Bbox, level: i32, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let mut g = Self::zeros(bbox, level)?;
        let n = g.n();
        let strides = g.strides();
        let h = g.spacing();
        let lower = g.bbox.lower.clone();
        let dims = g.dims.clone();
        g.values.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
            let mut x = vec![0.0; n];
            for (o, v) in chunk.iter_mut().enumerate() {
                let flat = c * 4096 + o;
                for d in 0..n {
                    let i = (flat / strides[d]) % dims[d];
                    x[d] = lower[d] + (i as f64 + 0.5) * h;
                }
                *v = f(&x);
            }
        });
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }
    pub fn bbox(&self) -> &Bbox {
        &self.bbox
    }
    pub fn level(&self) -> i32 {
        self.level
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn spacing(&self) -> f64 {
        2f64.powi(-self.level)
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n() as i32)
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n()];
        for d in (0..self.n()).rev() {
            idx[d] = flat % self.dims[d];
            flat /= self.dims[d];
        }
        idx
    }

    pub fn midpoint(&self, idx: &[usize]) -> Vec<f64> {
        let h = self.spacing();
        idx.iter().enumerate().map(|(d, &i)| self.bbox.lower[d] + (i as f64 + 0.5) * h).collect()
    }

    pub fn midpoint_flat(&self, flat: usize) -> Vec<f64> {
        self.midpoint(&self.unravel(flat))
    }

    /// 1-D midpoint coordinates along `axis`.
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing();
        (0..self.dims[axis]).map(|i| self.bbox.lower[axis] + (i as f64 + 0.5) * h).collect()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.level == other.level && self.dims == other.dims && self.bbox == other.bbox
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        GridFunction::new(self.bbox.clone(), self.level, values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::ResolutionMismatch("grids differ".into()));
        }
        Ok(GridFunction {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone()
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Midpoint-rule integral Σ f h^n.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for d in 0..self.n() {
            out.bbox.lower[d] += shift[d];
            out.bbox.upper[d] += shift[d];
        }
        out
    }

    fn aligned_offset(&self, target: &Bbox) -> Result<Vec<i64>> {
        let h = self.spacing();
        (0..self.n())
            .map(|d| {
                let off = (target.lower[d] - self.bbox.lower[d]) / h;
                let k = off.round();
                if (off - k).abs() > 1e-9 {
                    Err(Error::Invalid("target box not aligned with the grid".into()))
                } else {
                    Ok(k as i64)
                }
            })
            .collect()
    }

    /// Samples on a sub-box (aligned with the grid).
    pub fn restrict(&self, target: &Bbox) -> Result<Self> {
        if !self.bbox.contains_box(target) {
            return Err(Error::Invalid("restriction box exceeds the grid".into()));
        }
        let off = self.aligned_offset(target)?;
        let mut out = GridFunction::zeros(target.clone(), self.level)?;
        let strides = self.strides();
        for flat in 0..out.len() {
            let idx = out.unravel(flat);
            let src: usize = idx.iter().zip(&off).zip(&strides).map(|((&i, &o), &s)| (i as i64 + o) as usize * s).sum();
            out.values[flat] = self.values[src];
        }
        Ok(out)
    }

    /// Zero extension to a larger aligned box.
    pub fn embed(&self, target: &Bbox) -> Result<Self> {
        if !target.contains_box(&self.bbox) {
            return Err(Error::Invalid("embedding box must contain the grid".into()));
        }
        let mut out = GridFunction::zeros(target.clone(), self.level)?;
        let off = out.aligned_offset(&self.bbox)?;
        let strides = out.strides();
        for flat in 0..self.len() {
            let idx = self.unravel(flat);
            let dst: usize = idx.iter().zip(&off).zip(&strides).map(|((&i, &o), &s)| (i as i64 + o) as usize * s).sum();
            out.values[dst] = self.values[flat];
        }
        Ok(out)
    }

    /// Piecewise-constant upsampling by 2^k per axis (exact for cell-wise
    /// constant data).
    pub fn refine(&self, k: u32) -> Self {
        let f = 1usize << k;
        let dims: Vec<usize> = self.dims.iter().map(|d| d * f).collect();
        let count: usize = dims.iter().product();
        let strides = strides_of(&dims);
        let src_strides = self.strides();
        let n = self.n();
        let values = (0..count)
            .map(|flat| {
                let mut src = 0;
                for d in 0..n {
                    let i = (flat / strides[d]) % dims[d];
                    src += (i / f) * src_strides[d];
                }
                self.values[src]
            })
            .collect();
        GridFunction { bbox: self.bbox.clone(), level: self.level + k as i32, dims, values }
    }

    /// Average over the 2^n children of each coarse cell.
    pub fn coarsen(&self) -> Result<Self> {
        if self.dims.iter().any(|d| d % 2 != 0) {
            return Err(Error::GridTooCoarse("odd sample count cannot be coarsened".into()));
        }
        let mut out = GridFunction::zeros(self.bbox.clone(), self.level - 1)?;
        let n = self.n();
        let w = 1.0 / (1usize << n) as f64;
        let strides = self.strides();
        for flat in 0..self.len() {
            let mut dst = 0;
            let mut s = 1;
            for d in (0..n).rev() {
                let i = (flat / strides[d]) % self.dims[d];
                dst += (i / 2) * s;
                s *= out.dims[d];
            }
            out.values[dst] += w * self.values[flat];
        }
        Ok(out)
    }
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for d in (0..dims.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * dims[d + 1];
    }
    s
}

/// (Σ w(x)|f(x)|^p h^n)^{1/p}; p = ∞ gives max |f| over cells with w > 0.
pub fn integrate_lp(f: &GridFunction, p: f64, weight: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!("p must be >= 1, got {p}")));
    }
    let vol = f.cell_volume();
    let mut acc = 0.0f64;
    for (i, &v) in f.values.iter().enumerate() {
        let w = match weight {
            Some(w) => w(&f.midpoint_flat(i)),
            None => 1.0,
        };
        if !w.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite);
        }
        if p.is_infinite() {
            if w > 0.0 {
                acc = acc.max(v.abs());
            }
        } else {
            acc += w * v.abs().powf(p);
        }
    }
    if p.is_infinite() {
        Ok(acc)
    } else {
        Ok((acc * vol).powf(1.0 / p))
    }
}

/// One-dimensional derivative stencils of order `m` (second-order accurate)
/// for each of `len` sample positions, as (start index, weights).
pub(crate) fn derivative_stencils(len: usize, m: u32, h: f64) -> Result<Vec<(usize, Vec<f64>)>> {
    let m_us = m as usize;
    let half = (m_us + 1) / 2;
    let one_sided = m_us + 2;
    if len < 3 || len < one_sided {
        return Err(Error::GridTooCoarse(format!("{len} points for a derivative of order {m}")));
    }
    let scale = h.powi(-(m as i32));
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let (start, count) = if i >= half && i + half < len {
            (i - half, 2 * half + 1)
        } else if i < half {
            (0, one_sided)
        } else {
            (len - one_sided, one_sided)
        };
        let nodes: Vec<f64> = (start..start + count).map(|k| k as f64 - i as f64).collect();
        let w = fornberg(0.0, &nodes, m_us);
        out.push((start, w[m_us].iter().map(|c| c * scale).collect()));
    }
    Ok(out)
}

/// Apply a 1-D stencil family along `axis`.
fn apply_axis(values: &[f64], dims: &[usize], axis: usize, stencils: &[(usize, Vec<f64>)]) -> Vec<f64> {
    let strides = strides_of(dims);
    let len = dims[axis];
    let stride = strides[axis];
    let mut out = vec![0.0; values.len()];
    out.par_iter_mut().enumerate().for_each(|(flat, o)| {
        let i = (flat / stride) % len;
        let base = flat - i * stride;
        let (start, w) = &stencils[i];
        let mut acc = 0.0;
        for (k, c) in w.iter().enumerate() {
            acc += c * values[base + (start + k) * stride];
        }
        *o = acc;
    });
    out
}

/// Discrete D^α f: centered second-order differences inside, one-sided
/// second-order stencils at the box edges.
pub fn finite_diff(f: &GridFunction, alpha: &[u32]) -> Result<GridFunction> {
    if alpha.len() != f.n() {
        return Err(Error::Invalid("multi-index length differs from dimension".into()));
    }
    if alpha.iter().sum::<u32>() == 0 {
        return Err(Error::Invalid("finite_diff needs |alpha| >= 1".into()));
    }
    let h = f.spacing();
    let mut values = f.values.clone();
    for (axis, &m) in alpha.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let st = derivative_stencils(f.dims[axis], m, h)?;
        values = apply_axis(&values, &f.dims, axis, &st);
    }
    Ok(GridFunction { values, ..f.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoelderParts {
    /// Σ_{|α| ≤ k} sup |D^α f|
    pub sup_terms: f64,
    /// Σ_{|α| = k} Lip^{frac}(D^α f)
    pub seminorm: f64,
    pub total: f64,
    pub derivative_order: u32,
    pub fraction: f64,
}

/// ‖f | C^σ‖ with σ = k + frac, frac ∈ (0, 1], default pair cutoff.
pub fn hoelder_norm(f: &GridFunction, sigma: f64) -> Result<f64> {
    Ok(hoelder_parts(f, sigma, f.bbox.diameter() / 4.0)?.total)
}

pub fn hoelder_parts(f: &GridFunction, sigma: f64, cutoff: f64) -> Result<HoelderParts> {
    if !(sigma > 0.0) {
        return Err(Error::UseSupNorm);
    }
    let k = (sigma.ceil() as u32).saturating_sub(1);
    let frac = sigma - k as f64;
    let n = f.n();
    let mut sup_terms = 0.0;
    let mut seminorm = 0.0;
    for alpha in multi_indices(n, k) {
        let order: u32 = alpha.iter().sum();
        let g = if order == 0 { f.clone() } else { finite_diff(f, &alpha)? };
        sup_terms += g.max_abs();
        if order == k {
            seminorm += lipschitz_seminorm(&g, frac, cutoff);
        }
    }
    Ok(HoelderParts { sup_terms, seminorm, total: sup_terms + seminorm, derivative_order: k, fraction: frac })
}

const FULL_SCAN_LIMIT: usize = 1 << 12;
const RANDOM_PAIRS: usize = 1 << 16;

/// sup over sample pairs with 0 < |x − y| ≤ cutoff of |g(x) − g(y)| / |x − y|^σ.
pub fn lipschitz_seminorm(g: &GridFunction, sigma: f64, cutoff: f64) -> f64 {
    let n = g.n();
    let h = g.spacing();
    let len = g.len();
    let vals = &g.values;
    if len <= FULL_SCAN_LIMIT {
        let pts: Vec<Vec<f64>> = (0..len).map(|i| g.midpoint_flat(i)).collect();
        return (0..len)
            .into_par_iter()
            .map(|i| {
                let mut best = 0.0f64;
                for j in i + 1..len {
                    let d2: f64 = (0..n).map(|a| (pts[i][a] - pts[j][a]).powi(2)).sum();
                    let d = d2.sqrt();
                    if d <= cutoff + 1e-12 {
                        best = best.max((vals[i] - vals[j]).abs() / d.powf(sigma));
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max);
    }
    let strides = g.strides();
    let mut best = 0.0f64;
    // axis neighbours
    for flat in 0..len {
        let idx = g.unravel(flat);
        for d in 0..n {
            if idx[d] + 1 < g.dims[d] {
                let diff = (vals[flat] - vals[flat + strides[d]]).abs();
                best = best.max(diff / h.powf(sigma));
            }
        }
    }
    let reach = (cutoff / h).floor().max(1.0) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut done = 0;
    let mut attempts = 0;
    while done < RANDOM_PAIRS && attempts < 8 * RANDOM_PAIRS {
        attempts += 1;
        let i = rng.gen_range(0..len);
        let idx = g.unravel(i);
        let mut j = 0usize;
        let mut d2 = 0.0;
        let mut ok = true;
        let mut nonzero = false;
        for d in 0..n {
            let off = rng.gen_range(-reach..=reach);
            let t = idx[d] as i64 + off;
            if t < 0 || t >= g.dims[d] as i64 {
                ok = false;
                break;
            }
            nonzero |= off != 0;
            j += t as usize * strides[d];
            d2 += (off as f64 * h).powi(2);
        }
        if !ok || !nonzero || d2.sqrt() > cutoff + 1e-12 {
            continue;
        }
        done += 1;
        best = best.max((vals[i] - vals[j]).abs() / d2.sqrt().powf(sigma));
    }
    best
}

fn dilation_exponent(lambda: f64) -> Result<i32> {
    dyadic_exponent(lambda).ok_or(Error::NonDyadic(lambda))
}

/// Samples of f(λ(x − c) + c) on the original box (zero where the preimage
/// leaves the box). Exact sample relocation; λ must be a power of two.
pub fn dilate(f: &GridFunction, lambda: f64, center: &[f64]) -> Result<GridFunction> {
    let e = dilation_exponent(lambda)?;
    if e == 0 {
        return Ok(f.clone());
    }
    let n = f.n();
    let new_level = f.level + e;
    let mut out = GridFunction::zeros(f.bbox.clone(), new_level)?;
    let h = f.spacing();
    // y_i = λ(lo − c) + c + (i + 1/2) h; its offset from lo in cells must be an integer
    let mut shift = vec![0i64; n];
    for d in 0..n {
        let off = (lambda * (f.bbox.lower[d] - center[d]) + center[d] - f.bbox.lower[d]) / h;
        let k = off.round();
        if (off - k).abs() > 1e-9 {
            return Err(Error::Invalid("dilation center is not aligned with the grid".into()));
        }
        shift[d] = k as i64;
    }
    let src_strides = f.strides();
    for flat in 0..out.len() {
        let idx = out.unravel(flat);
        let mut src = 0usize;
        let mut inside = true;
        for d in 0..n {
            let t = idx[d] as i64 + shift[d];
            if t < 0 || t >= f.dims[d] as i64 {
                inside = false;
                break;
            }
            src += t as usize * src_strides[d];
        }
        if inside {
            out.values[flat] = f.values[src];
        }
    }
    Ok(out)
}

/// Same samples as f(λ(x − c) + c) on the full image box c + (bbox − c)/λ.
pub fn dilate_relocated(f: &GridFunction, lambda: f64, center: &[f64]) -> Result<GridFunction> {
    let e = dilation_exponent(lambda)?;
    let bbox = Bbox {
        lower: f.bbox.lower.iter().zip(center).map(|(lo, c)| c + (lo - c) / lambda).collect(),
        upper: f.bbox.upper.iter().zip(center).map(|(hi, c)| c + (hi - c) / lambda).collect(),
    };
    GridFunction::new(bbox, f.level + e, f.values.clone())
}

/// Perpendicular multi-indices: all α with |α| ≤ r supported on `axes`.
pub fn perpendicular_indices(n: usize, axes: &[usize], r: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=r {
        for sub in multi_indices_exact(axes.len(), total) {
            let mut alpha = vec![0; n];
            for (k, &a) in axes.iter().enumerate() {
                alpha[a] = sub[k];
            }
            out.push(alpha);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct GfnManifest {
    n: usize,
    bbox: Vec<Vec<f64>>,
    #[serde(rename = "J")]
    level: i32,
    dims: Vec<usize>,
    data: String,
}

/// Write a GFN manifest and its raw little-endian binary64 sample file
/// (`<stem>.f64` next to the manifest).
pub fn write_gfn(path: &Path, f: &GridFunction) -> Result<()> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
    let data_name = format!("{stem}.f64");
    let manifest = GfnManifest {
        n: f.n(),
        bbox: vec![f.bbox.lower.clone(), f.bbox.upper.clone()],
        level: f.level,
        dims: f.dims.clone(),
        data: data_name.clone(),
    };
    let value = serde_json::to_value(&manifest)?;
    std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
    let mut bytes = Vec::with_capacity(8 * f.len());
    for v in &f.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::write(dir.join(data_name), bytes)?;
    Ok(())
}

pub fn read_gfn(path: &Path) -> Result<GridFunction> {
    let text = std::fs::read_to_string(path)?;
    let m: GfnManifest = serde_json::from_str(&text)?;
    if m.bbox.len() != 2 || m.bbox[0].len() != m.n || m.bbox[1].len() != m.n || m.dims.len() != m.n {
        return Err(Error::Format("manifest dimension mismatch".into()));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let bytes = std::fs::read(dir.join(&m.data))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("data file length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let count: usize = m.dims.iter().product();
    if values.len() != count {
        return Err(Error::Format(format!("dims imply {count} samples, data has {}", values.len())));
    }
    let bbox = if m.n == 0 { Bbox { lower: vec![], upper: vec![] } } else { Bbox::new(m.bbox[0].clone(), m.bbox[1].clone())? };
    if m.n == 0 {
        return Ok(GridFunction::point(values[0]));
    }
    let g = GridFunction::new(bbox, m.level, values)?;
    if g.dims != m.dims {
        return Err(Error::Format("dims disagree with bbox and J".into()));
    }
    Ok(g)
}
