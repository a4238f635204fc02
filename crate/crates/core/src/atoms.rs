//! (s,p)_{K,L} atom checks, local-means kernels and norms, pointwise
//! multipliers and diffeomorphisms with empirical norm ratios.

use crate::error::{Error, Result};
use crate::grid::{
    dilate_relocated, finite_diff, hoelder_norm, hoelder_parts, integrate_lp, strides_of, Bbox, DyadicCube, GridFunction,
    SpaceParams, DEFAULT_SEED,
};
use crate::numerics::{binomial, integrate_gl, multi_indices};
use crate::wavelets::{wavelet_norm_with, NormMethod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// ⌊σ⌋ taken as ⌈σ⌉ − 1 for σ > 0 (so {σ} ∈ (0, 1]).
pub fn floor_star(sigma: f64) -> u32 {
    if sigma <= 0.0 {
        0
    } else {
        (sigma.ceil() as u32).saturating_sub(1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentEntry {
    pub beta: Vec<u32>,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomReport {
    pub support_ok: bool,
    /// max sup-distance of a nonzero sample outside d·Q (0 if none)
    pub overshoot: f64,
    pub hoelder_value: f64,
    pub hoelder_bound: f64,
    pub moments: Vec<MomentEntry>,
    /// (|∫ψa|, C·2^{-νKap}·‖ψ|C^L‖) for the random battery
    pub battery: Vec<(f64, f64)>,
    pub kap: f64,
    /// smallest C for which the size and moment checks pass
    pub measured_c: f64,
    pub verdict: bool,
}

pub fn kap(params: &SpaceParams, l: f64) -> f64 {
    params.s + l + params.n as f64 * (1.0 - 1.0 / params.p)
}

/// Grid-aligned hull of `target` inside the grid of f.
fn aligned_hull(f: &GridFunction, target: &Bbox) -> Result<Bbox> {
    let h = f.spacing();
    let bb = f.bbox();
    let lower: Vec<f64> = (0..f.n())
        .map(|d| {
            let k = ((target.lower[d].max(bb.lower[d]) - bb.lower[d]) / h + 1e-9).floor();
            bb.lower[d] + k * h
        })
        .collect();
    let upper: Vec<f64> = (0..f.n())
        .map(|d| {
            let k = ((target.upper[d].min(bb.upper[d]) - bb.lower[d]) / h - 1e-9).ceil();
            bb.lower[d] + k * h
        })
        .collect();
    if lower.iter().zip(&upper).any(|(a, b)| b <= a) {
        return Err(Error::Invalid("target box misses the grid".into()));
    }
    Bbox::new(lower, upper)
}

fn random_trig(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> f64 + Sync {
    let terms: Vec<(f64, Vec<f64>, f64)> = (0..3)
        .map(|_| {
            let a = rng.gen_range(-1.0..1.0);
            let w: Vec<f64> = (0..n).map(|_| scale * rng.gen_range(-2.0..2.0)).collect();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            (a, w, th)
        })
        .collect();
    move |x: &[f64]| terms.iter().map(|(a, w, th)| a * (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + th).cos()).sum()
}

pub const BATTERY_SIZE: usize = 32;

/// Verify the atom conditions for `a` at `cube` with constants (d, C).
#[allow(clippy::too_many_arguments)]
pub fn check_atom(a: &GridFunction, cube: &DyadicCube, params: &SpaceParams, k: f64, l: f64, d: f64, c: f64) -> Result<AtomReport> {
    if a.level() < cube.nu + 4 {
        return Err(Error::GridTooCoarse(format!("atom sampled at level {} < ν + 4 = {}", a.level(), cube.nu + 4)));
    }
    if !(d > 1.0) || !(c > 0.0) || k < 0.0 || l < 0.0 {
        return Err(Error::Invalid("need d > 1, C > 0, K, L ≥ 0".into()));
    }
    let n = a.n();
    let side = cube.side();
    let center = cube.center();
    let peak = a.max_abs();
    let tol = 1e-14 * peak.max(1e-300);
    let mut overshoot: f64 = 0.0;
    for (i, v) in a.values().iter().enumerate() {
        if v.abs() > tol {
            let x = a.midpoint_flat(i);
            let out = (0..n).map(|q| (x[q] - center[q]).abs() - 0.5 * d * side).fold(f64::NEG_INFINITY, f64::max);
            overshoot = overshoot.max(out.max(0.0));
        }
    }
    let support_ok = overshoot == 0.0;
    // Hölder size of a(2^{-ν}·): same samples on the box scaled by 2^ν
    let nu_scale = 2f64.powi(cube.nu);
    let rescaled = dilate_relocated(a, 1.0 / nu_scale, &vec![0.0; n])?;
    let hoelder_value = if k > 0.0 { hoelder_parts(&rescaled, k, 1.0)?.total } else { peak };
    let unit_h = 2f64.powf(-(cube.nu as f64) * (params.s - n as f64 / params.p));
    let hoelder_bound = c * unit_h;
    let mut ratio = hoelder_value / unit_h;
    let kp = kap(params, l);
    let unit_m = 2f64.powf(-(cube.nu as f64) * kp);
    let hull = aligned_hull(a, &cube.dilated_box(d))?;
    let local = a.restrict(&hull)?;
    let vol = local.cell_volume();
    let mut moments = Vec::new();
    if l > 0.0 {
        for beta in multi_indices(n, floor_star(l)) {
            let val: f64 = local
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = local.midpoint_flat(i);
                    v * beta.iter().enumerate().map(|(q, &b)| (x[q] - center[q]).powi(b as i32)).product::<f64>()
                })
                .sum::<f64>()
                * vol;
            ratio = ratio.max(val.abs() / unit_m);
            moments.push(MomentEntry { beta, value: val.abs(), bound: c * unit_m });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut battery = Vec::with_capacity(BATTERY_SIZE);
    for _ in 0..BATTERY_SIZE {
        let psi = random_trig(n, nu_scale, &mut rng);
        let g = GridFunction::from_fn(hull.clone(), a.level(), &psi)?;
        let norm = if l > 0.0 { hoelder_norm(&g, l)? } else { g.max_abs() };
        let val: f64 = g.values().iter().zip(local.values()).map(|(x, y)| x * y).sum::<f64>() * vol;
        if norm > 0.0 {
            ratio = ratio.max(val.abs() / (unit_m * norm));
        }
        battery.push((val.abs(), c * unit_m * norm));
    }
    let verdict = support_ok && ratio <= c * (1.0 + 1e-9);
    Ok(AtomReport { support_ok, overshoot, hoelder_value, hoelder_bound, moments, battery, kap: kp, measured_c: ratio, verdict })
}

/// 2^{j(s−n/p)}·a(2^{-j}·) relocated to Q_{ν−j,m}.
pub fn dilate_atom(a: &GridFunction, cube: &DyadicCube, j: i32, params: &SpaceParams) -> Result<(GridFunction, DyadicCube)> {
    if j > cube.nu {
        return Err(Error::Hypothesis(format!("dilation exponent {j} exceeds the atom level {}", cube.nu)));
    }
    if j < 0 {
        return Err(Error::Invalid("dilation exponent must be ≥ 0".into()));
    }
    let n = a.n();
    let scale = 2f64.powf(j as f64 * (params.s - n as f64 / params.p));
    let g = dilate_relocated(a, 2f64.powi(-j), &vec![0.0; n])?.scaled(scale);
    Ok((g, DyadicCube::new(cube.nu - j, cube.m.clone())))
}

/// Local-means pair: k0 = normalized tensor bump, k = Σ_d Δ^N_{δ,d} k0.
#[derive(Clone, Debug)]
pub struct LocalMeansKernels {
    pub n: usize,
    pub order: u32,
    pub e: f64,
    pub rho: f64,
    pub delta: f64,
    norm_1d: f64,
    pub k0: GridFunction,
    pub k: GridFunction,
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - t * t).powi(8)
    }
}

impl LocalMeansKernels {
    /// 1-D factor of k0.
    pub fn b1(&self, t: f64) -> f64 {
        bump(t / self.rho) / self.norm_1d
    }

    /// Δ^N_δ b1 (central).
    pub fn db1(&self, t: f64) -> f64 {
        let nn = self.order;
        let mut acc = 0.0;
        for i in 0..=nn {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binomial(nn, i) * self.b1(t + (nn as f64 / 2.0 - i as f64) * self.delta);
        }
        acc
    }

    pub fn eval_k0(&self, x: &[f64]) -> f64 {
        x.iter().map(|&t| self.b1(t)).product()
    }

    pub fn eval_k(&self, x: &[f64]) -> f64 {
        if self.order == 0 {
            return self.eval_k0(x);
        }
        (0..self.n)
            .map(|d| x.iter().enumerate().map(|(q, &t)| if q == d { self.db1(t) } else { self.b1(t) }).product::<f64>())
            .sum()
    }

    /// Support half-width of k.
    pub fn reach(&self) -> f64 {
        self.rho + self.order as f64 * self.delta / 2.0
    }
}

/// Kernels with N vanishing moments of k, supported in e·Q_{0,0}, rendered
/// at resolution `level`.
pub fn make_local_means(n: usize, order: u32, e: f64, level: i32) -> Result<LocalMeansKernels> {
    if order > 6 {
        return Err(Error::Invalid(format!("moment order {order} above desk scale (6)")));
    }
    if !(e >= 1.0) {
        return Err(Error::Invalid("support parameter e must be ≥ 1".into()));
    }
    let rho = e / 4.0;
    // dyadic δ with N δ / 2 ≤ e / 4
    let delta = if order == 0 { 1.0 } else { 2f64.powi((e / (2.0 * order as f64)).log2().floor() as i32) };
    let h = 2f64.powi(-level);
    if order > 0 && h > delta / 2.0 {
        return Err(Error::GridTooCoarse(format!("level {level} does not resolve the difference step {delta}")));
    }
    let norm_1d = integrate_gl(|t| bump(t / rho), -rho, rho, 4, 12);
    let half = ((e / 2.0) / h).ceil() * h;
    let bbox = Bbox::cube(n, -half, half);
    let mut kern = LocalMeansKernels {
        n,
        order,
        e,
        rho,
        delta,
        norm_1d,
        k0: GridFunction::zeros(bbox.clone(), level)?,
        k: GridFunction::zeros(bbox.clone(), level)?,
    };
    let k0 = GridFunction::from_fn(bbox.clone(), level, |x| kern.eval_k0(x))?;
    let k = GridFunction::from_fn(bbox, level, |x| kern.eval_k(x))?;
    kern.k0 = k0;
    kern.k = k;
    // invariant: moments of order < N vanish, ∫k0 ≠ 0
    let vol = kern.k.cell_volume();
    let mass: f64 = kern.k.values().iter().map(|v| v.abs()).sum::<f64>() * vol;
    if order > 0 {
        for alpha in multi_indices(n, order - 1) {
            let m: f64 = kern
                .k
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = kern.k.midpoint_flat(i);
                    v * alpha.iter().zip(&x).map(|(&a, &t)| t.powi(a as i32)).product::<f64>()
                })
                .sum::<f64>()
                * vol;
            if m.abs() > 1e-10 * mass.max(1.0) {
                return Err(Error::Invalid(format!("local-means moment {alpha:?} = {m:e} does not vanish")));
            }
        }
    }
    if kern.k0.sum() <= 0.0 {
        return Err(Error::Invalid("∫k0 vanishes".into()));
    }
    Ok(kern)
}

/// 1-D convolution along `axis`, zero padding: out[x] = Σ_i w[i] f[x − (i − c)].
fn conv_axis(values: &[f64], dims: &[usize], axis: usize, w: &[f64], c: usize) -> Vec<f64> {
    let strides = strides_of(dims);
    let len = dims[axis] as i64;
    let stride = strides[axis];
    let mut out = vec![0.0; values.len()];
    out.par_iter_mut().enumerate().for_each(|(flat, o)| {
        let i = ((flat / stride) as i64) % len;
        let base = flat - i as usize * stride;
        let mut acc = 0.0;
        for (t, wt) in w.iter().enumerate() {
            let src = i - (t as i64 - c as i64);
            if src >= 0 && src < len {
                acc += wt * values[base + src as usize * stride];
            }
        }
        *o = acc;
    });
    out
}

/// (k_j * f) on the grid of f with k_0 := k0 and k_j = 2^{jn} k(2^j ·).
pub fn local_mean(f: &GridFunction, kern: &LocalMeansKernels, j: u32) -> Result<GridFunction> {
    let n = f.n();
    if n != kern.n {
        return Err(Error::Invalid("kernel dimension mismatch".into()));
    }
    let h = f.spacing();
    let s = 2f64.powi(j as i32);
    if kern.order > 0 && s * h > kern.delta / 2.0 + 1e-15 {
        return Err(Error::GridTooCoarse(format!("level {j} kernel not resolved at grid level {}", f.level())));
    }
    let half = (kern.reach() / (s * h)).ceil() as usize;
    let offsets: Vec<f64> = (0..=2 * half).map(|t| (t as f64 - half as f64) * h * s).collect();
    let w0: Vec<f64> = offsets.iter().map(|&x| h * s * kern.b1(x)).collect();
    let dims = f.dims().to_vec();
    let apply_all = |first: Option<(usize, &[f64])>| {
        let mut cur = f.values().to_vec();
        for d in 0..n {
            let w: &[f64] = match first {
                Some((axis, wd)) if axis == d => wd,
                _ => &w0,
            };
            cur = conv_axis(&cur, &dims, d, w, half);
        }
        cur
    };
    let vals = if j == 0 || kern.order == 0 {
        apply_all(None)
    } else {
        let wd: Vec<f64> = offsets.iter().map(|&x| h * s * kern.db1(x)).collect();
        let mut acc = vec![0.0; f.len()];
        for d in 0..n {
            for (a, b) in acc.iter_mut().zip(apply_all(Some((d, &wd)))) {
                *a += b;
            }
        }
        acc
    };
    f.with_values(vals)
}

/// ‖k0 * f‖_p + ‖(Σ_{1≤j≤jmax} 2^{jsq} |k_j * f|^q)^{1/q}‖_p.
pub fn local_means_norm(f: &GridFunction, params: &SpaceParams, kern: &LocalMeansKernels, jmax: u32) -> Result<f64> {
    if (kern.order as f64) <= params.s {
        return Err(Error::InsufficientMoments { n_moments: kern.order, s: params.s });
    }
    let first = integrate_lp(&local_mean(f, kern, 0)?, params.p, None)?;
    let mut agg = vec![0.0f64; f.len()];
    for j in 1..=jmax {
        let g = local_mean(f, kern, j)?;
        let w = 2f64.powf(j as f64 * params.s);
        for (a, v) in agg.iter_mut().zip(g.values()) {
            let t = w * v.abs();
            if params.q.is_infinite() {
                *a = (*a).max(t);
            } else {
                *a += t.powf(params.q);
            }
        }
    }
    if params.q.is_finite() {
        for a in agg.iter_mut() {
            *a = a.powf(1.0 / params.q);
        }
    }
    Ok(first + integrate_lp(&f.with_values(agg)?, params.p, None)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplyReport {
    pub hoelder_phi: f64,
    pub norm_f: f64,
    pub norm_product: f64,
    pub ratio: f64,
}

/// φ·f with the multiplier ratio ‖φf‖ / (‖φ|C^ρ‖·‖f‖).
pub fn multiply(
    f: &GridFunction,
    phi: &GridFunction,
    params: &SpaceParams,
    rho: f64,
    method: NormMethod,
    jmax: Option<u32>,
) -> Result<(GridFunction, MultiplyReport)> {
    if !(rho > params.s.max(params.sigma_p() - params.s)) {
        return Err(Error::Hypothesis(format!("ρ = {rho} must exceed max(s, σ_p − s)")));
    }
    if phi.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let prod = f.zip_map(phi, |a, b| a * b)?;
    let hoelder_phi = hoelder_norm(phi, rho)?;
    let norm_f = wavelet_norm_with(f, params, method, jmax)?;
    let norm_product = wavelet_norm_with(&prod, params, method, jmax)?;
    let ratio = if norm_f > 0.0 && hoelder_phi > 0.0 { norm_product / (hoelder_phi * norm_f) } else { 0.0 };
    Ok((prod, MultiplyReport { hoelder_phi, norm_f, norm_product, ratio }))
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffeoReport {
    pub c1: f64,
    pub c2: f64,
    /// Hölder norms ‖∂φ_i/∂x_j | C^{ρ−1}‖ (sup norms when ρ = 1)
    pub jacobian_hoelder: Vec<Vec<f64>>,
    pub det_min: f64,
    pub det_max: f64,
    pub verdict: bool,
}

fn check_components(phi: &[GridFunction]) -> Result<()> {
    let n = phi.first().ok_or_else(|| Error::Invalid("empty map".into()))?.n();
    if phi.len() != n || phi.iter().any(|g| !g.same_grid(&phi[0])) {
        return Err(Error::Invalid("map needs n components on a common grid".into()));
    }
    Ok(())
}

/// Bi-Lipschitz constants, Jacobian bounds and Hölder norms of a sampled map.
pub fn check_diffeomorphism(phi: &[GridFunction], rho: f64) -> Result<DiffeoReport> {
    check_components(phi)?;
    if rho < 1.0 {
        return Err(Error::Invalid("ρ must be ≥ 1".into()));
    }
    let g0 = &phi[0];
    let n = g0.n();
    let len = g0.len();
    let strides = g0.strides();
    let pair = |i: usize, j: usize| -> Option<f64> {
        let x = g0.midpoint_flat(i);
        let y = g0.midpoint_flat(j);
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dx == 0.0 {
            return None;
        }
        let dp: f64 = phi.iter().map(|c| (c.values()[i] - c.values()[j]).powi(2)).sum::<f64>().sqrt();
        Some(dp / dx)
    };
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    for i in 0..len {
        let idx = g0.unravel(i);
        for d in 0..n {
            if idx[d] + 1 < g0.dims()[d] {
                if let Some(r) = pair(i, i + strides[d]) {
                    c1 = c1.min(r);
                    c2 = c2.max(r);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    for _ in 0..(1 << 14) {
        let i = rng.gen_range(0..len);
        let j = rng.gen_range(0..len);
        if let Some(r) = pair(i, j) {
            c1 = c1.min(r);
            c2 = c2.max(r);
        }
    }
    let mut jac: Vec<Vec<GridFunction>> = Vec::with_capacity(n);
    for c in phi {
        let mut row = Vec::with_capacity(n);
        for d in 0..n {
            let mut alpha = vec![0u32; n];
            alpha[d] = 1;
            row.push(finite_diff(c, &alpha)?);
        }
        jac.push(row);
    }
    let jacobian_hoelder = jac
        .iter()
        .map(|row| row.iter().map(|g| if rho > 1.0 { hoelder_norm(g, rho - 1.0) } else { Ok(g.max_abs()) }).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut det_min = f64::INFINITY;
    let mut det_max = f64::NEG_INFINITY;
    for i in 0..len {
        let m = nalgebra::DMatrix::from_fn(n, n, |a, b| jac[a][b].values()[i]);
        let det = m.determinant();
        det_min = det_min.min(det.abs());
        det_max = det_max.max(det.abs());
    }
    let verdict = c1 > 1e-9 && det_min > 1e-9 && jacobian_hoelder.iter().flatten().all(|v| v.is_finite());
    Ok(DiffeoReport { c1, c2, jacobian_hoelder, det_min, det_max, verdict })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffeoApplyReport {
    pub norm_f: f64,
    pub norm_composed: f64,
    pub ratio: f64,
}

/// f∘φ by nearest-midpoint lookup; `periodic` wraps φ(x) into the box
/// instead of rejecting escapes.
#[allow(clippy::too_many_arguments)]
pub fn diffeo_apply(
    f: &GridFunction,
    phi: &[GridFunction],
    params: &SpaceParams,
    rho: f64,
    method: NormMethod,
    jmax: Option<u32>,
    periodic: bool,
) -> Result<(GridFunction, DiffeoApplyReport)> {
    check_components(phi)?;
    let sp = params.sigma_p();
    let window = rho > params.s.max(1.0 + sp - params.s) || (rho == 1.0 && sp < params.s && params.s < 1.0);
    if !window {
        return Err(Error::Hypothesis(format!("ρ = {rho} outside the diffeomorphism window for s = {}", params.s)));
    }
    let n = f.n();
    let h = f.spacing();
    let bb = f.bbox().clone();
    let strides = f.strides();
    let mut vals = vec![0.0; phi[0].len()];
    for (i, slot) in vals.iter_mut().enumerate() {
        let mut src = 0usize;
        for d in 0..n {
            let mut y = phi[d].values()[i];
            if periodic {
                let w = bb.width(d);
                y = bb.lower[d] + (y - bb.lower[d]).rem_euclid(w);
            }
            let k = ((y - bb.lower[d]) / h).floor();
            if !(k >= 0.0 && (k as usize) < f.dims()[d]) {
                // the upper face itself maps onto the last cell
                if !periodic && (y - bb.upper[d]).abs() < 1e-12 {
                    src += (f.dims()[d] - 1) * strides[d];
                    continue;
                }
                return Err(Error::RangeEscape(i));
            }
            src += k as usize * strides[d];
        }
        *slot = f.values()[src];
    }
    let composed = GridFunction::new(phi[0].bbox().clone(), phi[0].level(), vals)?;
    let norm_f = wavelet_norm_with(f, params, method, jmax)?;
    let norm_composed = wavelet_norm_with(&composed, params, method, jmax)?;
    let ratio = if norm_f > 0.0 { norm_composed / norm_f } else { 0.0 };
    Ok((composed, DiffeoApplyReport { norm_f, norm_composed, ratio }))
}

/// Identity map components on the grid of f.
pub fn identity_map(bbox: &Bbox, level: i32) -> Result<Vec<GridFunction>> {
    (0..bbox.dim()).map(|d| GridFunction::from_fn(bbox.clone(), level, move |x| x[d])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn haar_centered(level: i32) -> GridFunction {
        GridFunction::from_fn(Bbox::cube(1, -1.0, 1.0), level, |x| {
            if x[0].abs() >= 0.5 {
                0.0
            } else if x[0] < 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .unwrap()
    }

    #[test]
    fn haar_atom_passes_and_constant_fails() {
        let params = SpaceParams::new(1, 0.5, 2.0, 2.0).unwrap();
        let cube = DyadicCube::new(0, vec![0]);
        let a = haar_centered(7);
        let rep = check_atom(&a, &cube, &params, 0.0, 1.0, 1.5, 10.0).unwrap();
        assert!(rep.support_ok && rep.verdict, "{rep:?}");
        assert!(rep.moments[0].value < 1e-14);
        let one = GridFunction::from_fn(Bbox::cube(1, -1.0, 1.0), 7, |x| if x[0].abs() < 0.75 { 1.0 } else { 0.0 }).unwrap();
        let rep = check_atom(&one, &cube, &params, 0.0, 1.0, 1.5, 0.5).unwrap();
        assert!(!rep.verdict);
        assert!((rep.moments[0].value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn kernels_kill_moments() {
        let k = make_local_means(1, 1, 2.0, 8).unwrap();
        let vol = k.k.cell_volume();
        let m0: f64 = k.k.sum();
        assert!(m0.abs() < 1e-12);
        let m1: f64 = k.k.values().iter().enumerate().map(|(i, v)| v * k.k.midpoint_flat(i)[0]).sum::<f64>() * vol;
        assert!(m1.abs() > 1e-3);
        assert!(make_local_means(2, 3, 2.0, 6).is_ok());
        let k0 = make_local_means(1, 0, 2.0, 6).unwrap();
        assert_eq!(k0.k.values(), k0.k0.values());
        let mass = k0.k0.sum();
        assert!((mass - 1.0).abs() < 1e-3, "{mass} {}", k0.norm_1d);
    }

    #[test]
    fn dilate_atom_levels() {
        let params = SpaceParams::new(1, 0.5, 2.0, 2.0).unwrap();
        let cube = DyadicCube::new(2, vec![1]);
        let a = GridFunction::zeros(Bbox::cube(1, -1.0, 1.0), 8).unwrap();
        let (g, c) = dilate_atom(&a, &cube, 2, &params).unwrap();
        assert_eq!(c.nu, 0);
        assert_eq!(g.level(), 6);
        assert!(dilate_atom(&a, &cube, 3, &params).is_err());
    }

    #[test]
    fn identity_and_linear_maps() {
        let bbox = Bbox::unit(1);
        let id = identity_map(&bbox, 6).unwrap();
        let rep = check_diffeomorphism(&id, 2.0).unwrap();
        assert!((rep.c1 - 1.0).abs() < 1e-12 && (rep.c2 - 1.0).abs() < 1e-12 && rep.verdict);
        let two = vec![id[0].scaled(2.0)];
        let rep = check_diffeomorphism(&two, 1.0).unwrap();
        assert!((rep.c1 - 2.0).abs() < 1e-12 && (rep.c2 - 2.0).abs() < 1e-12);
        let tau = std::f64::consts::TAU;
        let wobble = vec![GridFunction::from_fn(bbox, 8, |x| x[0] + 0.1 * (tau * x[0]).sin()).unwrap()];
        let rep = check_diffeomorphism(&wobble, 2.0).unwrap();
        assert!(rep.c1 >= 1.0 - 0.2 * std::f64::consts::PI - 1e-9);
        assert!(rep.c2 <= 1.0 + 0.2 * std::f64::consts::PI + 1e-9);
    }

    #[test]
    fn periodic_cell_shift_is_norm_preserving() {
        let bbox = Bbox::cube(1, 0.0, 2.0);
        let f = GridFunction::from_fn(bbox.clone(), 7, |x| (x[0] * 5.0).sin() * x[0]).unwrap();
        let shift = vec![GridFunction::from_fn(bbox, 7, |x| x[0] + 1.0).unwrap()];
        let params = SpaceParams::new(1, 0.3, 2.0, 2.0).unwrap();
        assert!(matches!(
            diffeo_apply(&f, &shift, &params, 2.0, NormMethod::Haar, None, false),
            Err(Error::RangeEscape(_))
        ));
        let (_, rep) = diffeo_apply(&f, &shift, &params, 2.0, NormMethod::Haar, None, true).unwrap();
        assert!((rep.ratio - 1.0).abs() < 1e-12, "{}", rep.ratio);
    }
}
