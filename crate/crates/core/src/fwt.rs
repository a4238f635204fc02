//! Periodized fast wavelet transform on integer boxes.
//!
//! The coefficient layout matches `Geometry::Tensor` and the box systems of
//! `wavelets`: λ_j = 2^{jn/2}·d_j where d_j are the orthonormal DWT
//! coefficients of the samples h^{n/2}·f.

use crate::daubechies::{highpass, lowpass};
use crate::error::{Error, Result};
use crate::grid::{grid_dims, Bbox, GridFunction};
use crate::seqspace::{tensor_cells, tensor_types, CoefficientField, Geometry};
use std::sync::Arc;

fn check_box(bbox: &Bbox, level: i32) -> Result<()> {
    for d in 0..bbox.dim() {
        let w = bbox.width(d);
        if (w - w.round()).abs() > 1e-12 || (bbox.lower[d] - bbox.lower[d].round()).abs() > 1e-12 || w < 1.0 {
            return Err(Error::Invalid("tensor wavelet layout needs an integer box".into()));
        }
    }
    if level < 1 {
        return Err(Error::GridTooCoarse(format!("level {level} < 1")));
    }
    Ok(())
}

fn split_axis(arr: &[f64], dims: &[usize], axis: usize, h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let len = dims[axis];
    let half = len / 2;
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut lo = vec![0.0; outer * half * inner];
    let mut hi = vec![0.0; outer * half * inner];
    for o in 0..outer {
        for k in 0..half {
            let dst = (o * half + k) * inner;
            for (i, (hv, gv)) in h.iter().zip(g).enumerate() {
                let src = (o * len + (2 * k + i) % len) * inner;
                for t in 0..inner {
                    let x = arr[src + t];
                    lo[dst + t] += hv * x;
                    hi[dst + t] += gv * x;
                }
            }
        }
    }
    (lo, hi)
}

fn merge_axis(lo: &[f64], hi: &[f64], dims: &[usize], axis: usize, h: &[f64], g: &[f64]) -> Vec<f64> {
    // dims are the merged dims
    let len = dims[axis];
    let half = len / 2;
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![0.0; outer * len * inner];
    for o in 0..outer {
        for k in 0..half {
            let src = (o * half + k) * inner;
            for (i, (hv, gv)) in h.iter().zip(g).enumerate() {
                let dst = (o * len + (2 * k + i) % len) * inner;
                for t in 0..inner {
                    out[dst + t] += hv * lo[src + t] + gv * hi[src + t];
                }
            }
        }
    }
    out
}

/// Full-depth forward transform (levels 0..J−1).
pub fn forward(f: &GridFunction, u: u32) -> Result<CoefficientField> {
    check_box(f.bbox(), f.level())?;
    let h = lowpass(u)?;
    let g = highpass(u)?;
    let n = f.n();
    let big_j = f.level() as u32;
    let geom = Arc::new(Geometry::Tensor { bbox: f.bbox().clone() });
    let mut out = CoefficientField::new(geom);
    let mut approx: Vec<f64> = f.values().iter().map(|v| v * f.cell_volume().sqrt()).collect();
    let mut dims = f.dims().to_vec();
    let mut details: Vec<(u32, Vec<Vec<f64>>)> = Vec::new();
    for j in (0..big_j).rev() {
        let mut bands = vec![approx];
        let mut bdims = dims.clone();
        for axis in 0..n {
            let mut next = Vec::with_capacity(bands.len() * 2);
            for b in &bands {
                let (lo, hi) = split_axis(b, &bdims, axis, &h, &g);
                next.push(lo);
                next.push(hi);
            }
            bdims[axis] /= 2;
            bands = next;
        }
        dims = bdims;
        approx = bands[0].clone();
        details.push((j, bands));
    }
    for (j, bands) in details {
        let scale = 2f64.powf(j as f64 * n as f64 / 2.0);
        let c_j = bands[0].len();
        let first = if j == 0 { 0 } else { 1 };
        for (eps, band) in bands.iter().enumerate().skip(first) {
            let t = eps - first;
            for (c, v) in band.iter().enumerate() {
                if *v != 0.0 {
                    out.insert(j, t * c_j + c, v * scale)?;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`forward`] onto the grid (bbox, level).
pub fn inverse(lambda: &CoefficientField, bbox: &Bbox, level: i32, u: u32) -> Result<GridFunction> {
    check_box(bbox, level)?;
    if !matches!(lambda.geometry().as_ref(), Geometry::Tensor { bbox: b } if b == bbox) {
        return Err(Error::ResolutionMismatch("coefficient geometry is not the tensor layout of this box".into()));
    }
    if let Some(fl) = lambda.finest_level() {
        if fl as i32 >= level {
            return Err(Error::ResolutionBelowFinest { resolution: level, finest: fl as i32 });
        }
    }
    let h = lowpass(u)?;
    let g = highpass(u)?;
    let n = bbox.dim();
    let nb = 1usize << n;
    let mut approx: Option<Vec<f64>> = None;
    for j in 0..level as u32 {
        let cells = tensor_cells(bbox, j);
        let c_j: usize = cells.iter().product();
        let scale = 2f64.powf(-(j as f64) * n as f64 / 2.0);
        let mut bands = vec![vec![0.0; c_j]; nb];
        if let Some(a) = approx.take() {
            bands[0] = a;
        }
        let first = if j == 0 { 0 } else { 1 };
        let ntypes = tensor_types(n, j);
        for t in 0..ntypes {
            let band = &mut bands[t + first];
            for (c, slot) in band.iter_mut().enumerate() {
                let v = lambda.get(j, t * c_j + c);
                if v != 0.0 {
                    *slot += v * scale;
                }
            }
        }
        // merge axes in reverse order
        let mut bdims = cells.clone();
        for axis in (0..n).rev() {
            let mut merged_dims = bdims.clone();
            merged_dims[axis] *= 2;
            let mut next = Vec::with_capacity(bands.len() / 2);
            for pair in bands.chunks(2) {
                next.push(merge_axis(&pair[0], &pair[1], &merged_dims, axis, &h, &g));
            }
            bands = next;
            bdims = merged_dims;
        }
        approx = Some(bands.pop().expect("one band"));
    }
    let dims = grid_dims(bbox, level)?;
    let vals = approx.unwrap_or_else(|| vec![0.0; dims.iter().product()]);
    let h_n = 2f64.powi(-level * n as i32);
    GridFunction::new(bbox.clone(), level, vals.into_iter().map(|v| v / h_n.sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_all_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for u in 0..=3 {
            for (bbox, level) in [(Bbox::unit(1), 6), (Bbox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap(), 4)] {
                let f = GridFunction::from_fn(bbox.clone(), level, |_| 0.0).unwrap();
                let vals: Vec<f64> = (0..f.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let f = f.with_values(vals).unwrap();
                let lam = forward(&f, u).unwrap();
                let back = inverse(&lam, &bbox, level, u).unwrap();
                let err = f.zip_map(&back, |a, b| a - b).unwrap().max_abs();
                assert!(err < 1e-12, "u={u} err={err}");
                // Parseval with λ = 2^{jn/2} d
                let e_f: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * f.cell_volume();
                let n = bbox.dim() as f64;
                let e_l: f64 = lam.iter().map(|(j, _, v)| v * v * 2f64.powf(-(j as f64) * n)).sum();
                assert!((e_f - e_l).abs() < 1e-10 * e_f);
            }
        }
    }

    #[test]
    fn haar_constant_has_only_scaling() {
        let f = GridFunction::from_fn(Bbox::unit(2), 3, |_| 2.0).unwrap();
        let lam = forward(&f, 0).unwrap();
        let big: Vec<_> = lam.iter().filter(|(_, _, v)| v.abs() > 1e-12).collect();
        assert_eq!(big.len(), 1);
        assert_eq!((big[0].0, big[0].1), (0, 0));
        assert!((big[0].2 - 2.0).abs() < 1e-12);
    }
}
