//! Sequence-space norms b_{p,q} and f_{p,q} for coefficient fields indexed by
//! (level j, location r).

use crate::error::{Error, Result};
use crate::grid::{grid_dims, strides_of, Bbox};
use crate::whitney::PointLattice;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Characteristic-function shape, measured in units of 2^{-j}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Indicator {
    Cube { side: f64 },
    Ball { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub x: Vec<f64>,
    pub indicator: Indicator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    /// Centered cubes Q_{j,m} with L_p-normalized indicators; r enumerates the
    /// m with Q_{j,m} ⊂ bbox in row-major order.
    Dyadic { bbox: Bbox },
    /// Explicit per-level site table (unnormalized indicators).
    Sites { bbox: Bbox, levels: BTreeMap<u32, Vec<Site>> },
    /// Tensor wavelet layout on an integer box: at level j, r = t·C_j + c
    /// where c runs row-major over the C_j aligned cells of side 2^{-j} and t
    /// over the wavelet types (2^n at j = 0 including scaling, else 2^n − 1).
    /// Indicators are the (unnormalized) cells.
    Tensor { bbox: Bbox },
}

impl Geometry {
    pub fn bbox(&self) -> &Bbox {
        match self {
            Geometry::Dyadic { bbox } | Geometry::Sites { bbox, .. } | Geometry::Tensor { bbox } => bbox,
        }
    }

    pub fn n(&self) -> usize {
        self.bbox().dim()
    }

    /// Geometry from a point lattice with balls of the given radius (units
    /// of 2^{-j}).
    pub fn from_lattice(lat: &PointLattice, radius: f64) -> Self {
        let levels = lat
            .levels
            .iter()
            .map(|(&j, pts)| (j, pts.iter().map(|x| Site { x: x.clone(), indicator: Indicator::Ball { radius } }).collect()))
            .collect();
        Geometry::Sites { bbox: lat.bbox.clone(), levels }
    }

    fn dyadic_range(bbox: &Bbox, j: u32) -> Vec<(i64, i64)> {
        let s = 2f64.powi(j as i32);
        bbox.lower
            .iter()
            .zip(&bbox.upper)
            .map(|(lo, hi)| ((lo * s + 0.5 - 1e-9).ceil() as i64, (hi * s - 0.5 + 1e-9).floor() as i64))
            .collect()
    }

    pub fn count_at(&self, j: u32) -> usize {
        match self {
            Geometry::Dyadic { bbox } => Self::dyadic_range(bbox, j).iter().map(|(a, b)| (b - a + 1).max(0) as usize).product(),
            Geometry::Sites { levels, .. } => levels.get(&j).map_or(0, |v| v.len()),
            Geometry::Tensor { bbox } => tensor_types(bbox.dim(), j) * tensor_cells(bbox, j).iter().product::<usize>(),
        }
    }

    /// Site (center, indicator, L_p normalization exponent flag).
    pub fn site(&self, j: u32, r: usize) -> Option<Site> {
        match self {
            Geometry::Dyadic { bbox } => {
                let range = Self::dyadic_range(bbox, j);
                let counts: Vec<usize> = range.iter().map(|(a, b)| (b - a + 1).max(0) as usize).collect();
                if r >= counts.iter().product() {
                    return None;
                }
                let strides = strides_of(&counts);
                let s = 2f64.powi(-(j as i32));
                let x = (0..counts.len()).map(|d| (range[d].0 + ((r / strides[d]) % counts[d]) as i64) as f64 * s).collect();
                Some(Site { x, indicator: Indicator::Cube { side: 1.0 } })
            }
            Geometry::Sites { levels, .. } => levels.get(&j).and_then(|v| v.get(r)).cloned(),
            Geometry::Tensor { bbox } => {
                let cells = tensor_cells(bbox, j);
                let c_j: usize = cells.iter().product();
                if r >= c_j * tensor_types(bbox.dim(), j) {
                    return None;
                }
                let c = r % c_j;
                let strides = strides_of(&cells);
                let s = 2f64.powi(-(j as i32));
                let x = (0..cells.len()).map(|d| bbox.lower[d] + (((c / strides[d]) % cells[d]) as f64 + 0.5) * s).collect();
                Some(Site { x, indicator: Indicator::Cube { side: 1.0 } })
            }
        }
    }

    /// Whether every site is an aligned cell of its level (f_norm is then
    /// exact at resolution = finest level).
    pub fn is_cell_aligned(&self) -> bool {
        matches!(self, Geometry::Tensor { .. })
    }

    fn normalized(&self) -> bool {
        matches!(self, Geometry::Dyadic { .. })
    }
}

/// Number of tensor wavelet types at level j.
pub fn tensor_types(n: usize, j: u32) -> usize {
    if j == 0 {
        1 << n
    } else {
        (1 << n) - 1
    }
}

/// Aligned cells of side 2^{-j} per axis of an integer box.
pub fn tensor_cells(bbox: &Bbox, j: u32) -> Vec<usize> {
    (0..bbox.dim()).map(|d| (bbox.width(d).round() as usize) << j).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    geometry: Arc<Geometry>,
    entries: BTreeMap<(u32, usize), f64>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    j: u32,
    r: usize,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct FieldRecord {
    geometry: Geometry,
    entries: Vec<EntryRecord>,
}

impl CoefficientField {
    pub fn new(geometry: Arc<Geometry>) -> Self {
        CoefficientField { geometry, entries: BTreeMap::new() }
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn insert(&mut self, j: u32, r: usize, value: f64) -> Result<()> {
        if r >= self.geometry.count_at(j) {
            return Err(Error::MissingKey(j, r));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        self.entries.insert((j, r), value);
        Ok(())
    }

    pub fn get(&self, j: u32, r: usize) -> f64 {
        self.entries.get(&(j, r)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, usize, f64)> + '_ {
        self.entries.iter().map(|(&(j, r), &v)| (j, r, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn finest_level(&self) -> Option<u32> {
        self.entries.iter().filter(|(_, v)| **v != 0.0).map(|((j, _), _)| *j).max()
    }

    pub fn scaled(&self, t: f64) -> Self {
        CoefficientField { geometry: self.geometry.clone(), entries: self.entries.iter().map(|(k, v)| (*k, t * v)).collect() }
    }

    /// a·self + other (geometries must agree).
    pub fn axpy(&self, a: f64, other: &CoefficientField) -> Result<Self> {
        if *self.geometry != *other.geometry {
            return Err(Error::Invalid("coefficient geometries differ".into()));
        }
        let mut out = other.clone();
        for (k, v) in &self.entries {
            *out.entries.entry(*k).or_insert(0.0) += a * v;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &CoefficientField) -> f64 {
        let mut keys: Vec<_> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter().map(|&(j, r)| (self.get(j, r) - other.get(j, r)).abs()).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let rec = FieldRecord {
            geometry: (*self.geometry).clone(),
            entries: self.iter().map(|(j, r, lambda)| EntryRecord { j, r, lambda }).collect(),
        };
        Ok(serde_json::to_value(rec)?)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let rec: FieldRecord = serde_json::from_value(value.clone())?;
        let mut out = CoefficientField::new(Arc::new(rec.geometry));
        for e in rec.entries {
            out.insert(e.j, e.r, e.lambda)?;
        }
        Ok(out)
    }
}

fn level_weight(j: u32, s: Option<f64>) -> f64 {
    s.map_or(1.0, |s| 2f64.powf(j as f64 * s))
}

/// ( Σ_j 2^{jsq} (Σ_r |λ_j^r|^p)^{q/p} )^{1/q}
pub fn b_norm(lambda: &CoefficientField, p: f64, q: f64, s: Option<f64>) -> Result<f64> {
    if !(p > 0.0) || !(q > 0.0) {
        return Err(Error::Invalid("p and q must be positive".into()));
    }
    let mut per_level: BTreeMap<u32, f64> = BTreeMap::new();
    for (j, _, v) in lambda.iter() {
        let e = per_level.entry(j).or_insert(0.0);
        if p.is_infinite() {
            *e = e.max(v.abs());
        } else {
            *e += v.abs().powf(p);
        }
    }
    let mut acc = 0.0f64;
    for (j, sum) in per_level {
        let inner = if p.is_infinite() { sum } else { sum.powf(1.0 / p) };
        let term = level_weight(j, s) * inner;
        if q.is_infinite() {
            acc = acc.max(term);
        } else {
            acc += term.powf(q);
        }
    }
    Ok(if q.is_infinite() { acc } else { acc.powf(1.0 / q) })
}

/// ‖(Σ_{j,r} 2^{jsq} |λ_j^r χ_j^r|^q)^{1/q} | L_p‖ by midpoint quadrature at
/// resolution finest + 2.
pub fn f_norm(lambda: &CoefficientField, p: f64, q: f64, s: Option<f64>) -> Result<f64> {
    f_norm_at(lambda, p, q, s, None)
}

pub fn f_norm_at(lambda: &CoefficientField, p: f64, q: f64, s: Option<f64>, resolution: Option<i32>) -> Result<f64> {
    if !(p > 0.0) || !(q > 0.0) {
        return Err(Error::Invalid("p and q must be positive".into()));
    }
    let Some(finest) = lambda.finest_level() else {
        return Ok(0.0);
    };
    let res = resolution.unwrap_or(finest as i32 + 2);
    if res < finest as i32 {
        return Err(Error::ResolutionBelowFinest { resolution: res, finest: finest as i32 });
    }
    let geom = &lambda.geometry;
    let bbox = geom.bbox();
    let n = bbox.dim();
    let dims = grid_dims(bbox, res)?;
    let strides = strides_of(&dims);
    let h = 2f64.powi(-res);
    let total: usize = dims.iter().product();
    let mut acc = vec![0.0f64; total];
    let normalized = geom.normalized();
    let mut lo_idx = vec![0usize; n];
    let mut hi_idx = vec![0usize; n];
    for (j, r, v) in lambda.iter() {
        if v == 0.0 {
            continue;
        }
        let site = geom.site(j, r).ok_or(Error::MissingKey(j, r))?;
        let scale = 2f64.powi(-(j as i32));
        let mut w = level_weight(j, s) * v.abs();
        if normalized && p.is_finite() {
            w *= 2f64.powf(j as f64 * n as f64 / p);
        }
        let wq = if q.is_infinite() { w } else { w.powf(q) };
        let half = match site.indicator {
            Indicator::Cube { side } => 0.5 * side * scale,
            Indicator::Ball { radius } => radius * scale,
        };
        let mut empty = false;
        for d in 0..n {
            let a = ((site.x[d] - half - bbox.lower[d]) / h - 0.5 - 1e-9).ceil().max(0.0);
            let b = ((site.x[d] + half - bbox.lower[d]) / h - 0.5 - 1e-9).ceil().min(dims[d] as f64);
            if b <= a {
                empty = true;
                break;
            }
            lo_idx[d] = a as usize;
            hi_idx[d] = b as usize;
        }
        if empty {
            continue;
        }
        let counts: Vec<usize> = (0..n).map(|d| hi_idx[d] - lo_idx[d]).collect();
        let block: usize = counts.iter().product();
        let r2 = half * half * (1.0 + 1e-12);
        for t in 0..block {
            let mut rem = t;
            let mut flat = 0;
            let mut d2 = 0.0;
            for d in (0..n).rev() {
                let i = lo_idx[d] + rem % counts[d];
                rem /= counts[d];
                flat += i * strides[d];
                let x = bbox.lower[d] + (i as f64 + 0.5) * h;
                d2 += (x - site.x[d]).powi(2);
            }
            if let Indicator::Ball { .. } = site.indicator {
                if d2 > r2 {
                    continue;
                }
            }
            if q.is_infinite() {
                acc[flat] = acc[flat].max(wq);
            } else {
                acc[flat] += wq;
            }
        }
    }
    let vol = h.powi(n as i32);
    if p.is_infinite() {
        return Ok(acc.iter().map(|a| if q.is_infinite() { *a } else { a.powf(1.0 / q) }).fold(0.0, f64::max));
    }
    let expo = if q.is_infinite() { p } else { p / q };
    let sum: f64 = acc.iter().map(|a| a.powf(expo)).sum();
    Ok((sum * vol).powf(1.0 / p))
}
