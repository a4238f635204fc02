//! Wavelet systems on integer boxes (periodized tensor Haar/Daubechies) and on
//! Whitney-decomposed domains, with analysis, synthesis and the wavelet
//! F-norm estimator.

use crate::daubechies::DaubTable;
use crate::error::{Error, Result};
use crate::grid::{grid_dims, strides_of, Bbox, GridFunction, SpaceParams};
use crate::numerics::multi_indices;
use crate::seqspace::{f_norm_at, tensor_cells, tensor_types, CoefficientField, Geometry, Indicator, Site};
use crate::whitney::{interior_lattice, WhitneyDecomposition};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockFlag {
    Interior,
    Boundary,
    Oscillating,
}

/// One axis factor of a tensor block; sample `t` sits at grid index
/// `(start + t) mod N` along the axis.
#[derive(Clone, Debug)]
pub struct AxisFactor {
    pub start: usize,
    pub values: Arc<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub j: u32,
    pub r: usize,
    /// wavelet type, bit d (axis 0 most significant) selects ψ on axis d
    pub eps: usize,
    pub flag: BlockFlag,
    pub center: Vec<f64>,
    pub factors: Vec<AxisFactor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Box,
    Domain,
}

/// Achieved constants: support radius c1, derivative bound c2, moment
/// bound c3 (all in units of the block level), interior margin c4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemStats {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: Option<f64>,
    pub blocks: usize,
}

#[derive(Clone, Debug)]
enum Layout {
    /// tables[axis][j][kind][k]
    Tensor { tables: Vec<Vec<[Vec<AxisFactor>; 2]>> },
    Explicit { blocks: Vec<Block>, level_start: BTreeMap<u32, usize> },
}

#[derive(Clone, Debug)]
pub struct WaveletSystem {
    pub u: u32,
    pub kind: SystemKind,
    pub bbox: Bbox,
    pub resolution: i32,
    pub jmax: u32,
    dims: Vec<usize>,
    layout: Layout,
    geometry: Arc<Geometry>,
    pub stats: SystemStats,
}

/// Scaled samples 2^{j/2} g((q + ½) 2^{j−J}) of φ (kind 0) or ψ (kind 1)
/// over one support.
fn base_samples(table: &DaubTable, kind: usize, j: u32, level: i32) -> Vec<f64> {
    let per = 1usize << (level as u32 - j);
    let count = (table.len - 1) * per;
    let step = 2f64.powi(j as i32 - level);
    let amp = 2f64.powf(j as f64 / 2.0);
    (0..count)
        .map(|q| {
            let x = (q as f64 + 0.5) * step;
            amp * if kind == 0 { table.phi(x) } else { table.psi(x) }
        })
        .collect()
}

fn check_integer_box(bbox: &Bbox) -> Result<()> {
    for d in 0..bbox.dim() {
        let (a, b) = (bbox.lower[d], bbox.upper[d]);
        if (a - a.round()).abs() > 1e-12 || (b - b.round()).abs() > 1e-12 || b - a < 1.0 {
            return Err(Error::Invalid("box systems need integer bbox corners".into()));
        }
    }
    Ok(())
}

/// 1-D measurements of a factor: support radius, derivative maxima up to u,
/// moments up to u (all normalized to the block level).
struct FactorStats {
    radius: f64,
    deriv: Vec<f64>,
    moments: Vec<f64>,
}

fn factor_stats(base: &[f64], j: u32, level: i32, len: usize, u: u32) -> FactorStats {
    let h = 2f64.powi(-level);
    let s = 2f64.powi(j as i32);
    let center = 0.5 * (len - 1) as f64 / s;
    let mut radius: f64 = 0.0;
    for (q, v) in base.iter().enumerate() {
        if *v != 0.0 {
            radius = radius.max(((q as f64 + 0.5) * h - center).abs() * s);
        }
    }
    let mut deriv = Vec::new();
    let mut cur: Vec<f64> = std::iter::once(0.0).chain(base.iter().copied()).chain(std::iter::once(0.0)).collect();
    for a in 0..=u {
        let m = cur.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        deriv.push(m / s.powf(0.5 + a as f64));
        cur = cur.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    }
    let moments = (0..=u)
        .map(|b| {
            let m: f64 = base.iter().enumerate().map(|(q, v)| ((q as f64 + 0.5) * h - center).powi(b as i32) * v * h).sum();
            m.abs() / s.powf(-0.5 - b as f64)
        })
        .collect();
    FactorStats { radius, deriv, moments }
}

fn combine_stats(n: usize, u: u32, per_level: &[[FactorStats; 2]]) -> (f64, f64, f64) {
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    let mut c3: f64 = 0.0;
    for st in per_level {
        let rad = st[0].radius.max(st[1].radius);
        c1 = c1.max(rad * (n as f64).sqrt());
        for alpha in multi_indices(n, u) {
            let prod: f64 = alpha.iter().map(|&a| st[0].deriv[a as usize].max(st[1].deriv[a as usize])).product();
            c2 = c2.max(prod);
        }
        if u >= 1 {
            for eps in 1..(1usize << n) {
                for beta in multi_indices(n, u - 1) {
                    let prod: f64 =
                        (0..n).map(|d| st[(eps >> (n - 1 - d)) & 1].moments[beta[d] as usize]).product();
                    c3 = c3.max(prod);
                }
            }
        }
    }
    (c1, c2, c3)
}

/// Periodized tensor system on an integer box: scaling functions at level 0
/// and all wavelet types at levels 0..=jmax.
pub fn build_box_system(n: usize, u: u32, jmax: u32, bbox: &Bbox, resolution: i32) -> Result<WaveletSystem> {
    if bbox.dim() != n {
        return Err(Error::Invalid(format!("bbox dimension {} != n = {n}", bbox.dim())));
    }
    check_integer_box(bbox)?;
    if u > 3 {
        return Err(Error::UnsupportedOrder(u));
    }
    if jmax > 10 {
        return Err(Error::Invalid(format!("jmax {jmax} above desk scale (10)")));
    }
    if resolution < jmax as i32 + 1 {
        return Err(Error::GridTooCoarse(format!("resolution {resolution} must exceed jmax {jmax}")));
    }
    let table = DaubTable::new(u, resolution as u32 + 1)?;
    let dims = grid_dims(bbox, resolution)?;
    let mut tables = Vec::with_capacity(n);
    let mut stats_levels = Vec::new();
    for d in 0..n {
        let big_n = dims[d];
        let mut per_level = Vec::new();
        for j in 0..=jmax {
            let per = 1usize << (resolution as u32 - j);
            let count_k = tensor_cells(bbox, j)[d];
            let mut kinds: [Vec<AxisFactor>; 2] = [Vec::new(), Vec::new()];
            let mut st_pair = Vec::new();
            for kind in 0..2 {
                let base = base_samples(&table, kind, j, resolution);
                if d == 0 {
                    st_pair.push(factor_stats(&base, j, resolution, table.len, u));
                }
                let folded = if base.len() > big_n {
                    let mut f = vec![0.0; big_n];
                    for (q, v) in base.iter().enumerate() {
                        f[q % big_n] += v;
                    }
                    Some(Arc::new(f))
                } else {
                    None
                };
                let shared = Arc::new(base);
                for k in 0..count_k {
                    let start = (k * per) % big_n;
                    kinds[kind].push(match &folded {
                        Some(f) => AxisFactor { start, values: f.clone() },
                        None => AxisFactor { start, values: shared.clone() },
                    });
                }
            }
            if d == 0 {
                let b = st_pair.pop().unwrap();
                let a = st_pair.pop().unwrap();
                stats_levels.push([a, b]);
            }
            per_level.push(kinds);
        }
        tables.push(per_level);
    }
    let (c1, c2, c3) = combine_stats(n, u, &stats_levels);
    let geometry = Arc::new(Geometry::Tensor { bbox: bbox.clone() });
    let blocks = (0..=jmax).map(|j| geometry.count_at(j)).sum();
    Ok(WaveletSystem {
        u,
        kind: SystemKind::Box,
        bbox: bbox.clone(),
        resolution,
        jmax,
        dims,
        layout: Layout::Tensor { tables },
        geometry,
        stats: SystemStats { c1, c2, c3, c4: None, blocks },
    })
}

/// Minimal interior margin (units of 2^{-j}) required of domain blocks.
pub const INTERIOR_MARGIN: f64 = 0.5;

/// Interior system on a Whitney decomposition: blocks centred on the
/// subcube centres of every Whitney cube Q_ν at levels ν..=jmax; the
/// Whitney-scale blocks include the scaling type, finer ones are
/// oscillating. Blocks whose support comes closer than
/// `INTERIOR_MARGIN`·2^{-j} to Γ or leaves the bbox are dropped.
pub fn build_domain_system(dec: &WhitneyDecomposition, u: u32, jmax: u32, resolution: i32) -> Result<WaveletSystem> {
    if dec.degenerate || !dec.domain.has_boundary() {
        return Err(Error::Degenerate);
    }
    if u > 3 {
        return Err(Error::UnsupportedOrder(u));
    }
    if resolution < jmax as i32 + 1 {
        return Err(Error::GridTooCoarse(format!("resolution {resolution} must exceed jmax {jmax}")));
    }
    let lattice = interior_lattice(dec, jmax)?;
    let radius = lattice.c3.unwrap_or(1.0).max(0.5);
    let n = dec.domain.n;
    let bbox = dec.domain.bbox.clone();
    let dims = grid_dims(&bbox, resolution)?;
    let table = DaubTable::new(u, resolution as u32 + 1)?;
    let len = table.len as i64;
    let mut bases: Vec<[Arc<Vec<f64>>; 2]> = Vec::new();
    let mut stats_levels = Vec::new();
    for j in 0..=jmax {
        let b0 = base_samples(&table, 0, j, resolution);
        let b1 = base_samples(&table, 1, j, resolution);
        stats_levels.push([factor_stats(&b0, j, resolution, table.len, u), factor_stats(&b1, j, resolution, table.len, u)]);
        bases.push([Arc::new(b0), Arc::new(b1)]);
    }
    let mut blocks = Vec::new();
    let mut level_start = BTreeMap::new();
    let mut sites: BTreeMap<u32, Vec<Site>> = BTreeMap::new();
    let mut c4 = f64::INFINITY;
    let h = 2f64.powi(-resolution);
    for j in 0..=jmax {
        level_start.insert(j, blocks.len());
        let s = 2f64.powi(-(j as i32));
        let per = 1i64 << (resolution as u32 - j);
        let mut r = 0usize;
        for cube in dec.cubes.iter().filter(|c| c.nu <= j) {
            let f = 1i64 << (j - cube.nu);
            let count = (f as usize).pow(n as u32);
            for t in 0..count {
                let mut rem = t;
                let mut k = vec![0i64; n];
                for d in (0..n).rev() {
                    k[d] = cube.m[d] * f + (rem % f as usize) as i64;
                    rem /= f as usize;
                }
                let shift: Vec<i64> = k.iter().map(|&kk| kk + 1 - len / 2).collect();
                let lo: Vec<f64> = shift.iter().map(|&t| t as f64 * s).collect();
                let hi: Vec<f64> = shift.iter().map(|&t| (t + len - 1) as f64 * s).collect();
                if (0..n).any(|d| lo[d] < bbox.lower[d] - 1e-12 || hi[d] > bbox.upper[d] + 1e-12) {
                    continue;
                }
                let dist = dec.domain.box_distance(&lo, &hi).unwrap_or(f64::INFINITY);
                if dist < INTERIOR_MARGIN * s - 1e-12 {
                    continue;
                }
                c4 = c4.min(dist / s);
                let center: Vec<f64> = k.iter().map(|&kk| (kk as f64 + 0.5) * s).collect();
                let first = if j == cube.nu { 0 } else { 1 };
                for eps in first..(1usize << n) {
                    let factors = (0..n)
                        .map(|d| {
                            let start = ((lo[d] - bbox.lower[d]) / h).round() as i64;
                            debug_assert!(start >= 0 && start + (len - 1) * per <= dims[d] as i64);
                            AxisFactor { start: start as usize, values: bases[j as usize][(eps >> (n - 1 - d)) & 1].clone() }
                        })
                        .collect();
                    let flag = if eps == 0 { BlockFlag::Interior } else { BlockFlag::Oscillating };
                    blocks.push(Block { j, r, eps, flag, center: center.clone(), factors });
                    sites.entry(j).or_default().push(Site { x: center.clone(), indicator: Indicator::Ball { radius } });
                    r += 1;
                }
            }
        }
    }
    let (c1, c2, c3) = combine_stats(n, u, &stats_levels);
    let count = blocks.len();
    Ok(WaveletSystem {
        u,
        kind: SystemKind::Domain,
        bbox: bbox.clone(),
        resolution,
        jmax,
        dims,
        layout: Layout::Explicit { blocks, level_start },
        geometry: Arc::new(Geometry::Sites { bbox, levels: sites }),
        stats: SystemStats { c1, c2, c3, c4: if c4.is_finite() { Some(c4) } else { None }, blocks: count },
    })
}

/// Contract `arr` along `axis` with the factor list: out[.., k, ..] = Σ_q v_q arr[.., (start_k+q) mod N, ..].
fn contract(arr: &[f64], dims: &[usize], axis: usize, factors: &[AxisFactor]) -> (Vec<f64>, Vec<usize>) {
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let kk = factors.len();
    let mut out = vec![0.0; outer * kk * inner];
    out.par_chunks_mut(kk * inner).enumerate().for_each(|(o, chunk)| {
        for (k, fac) in factors.iter().enumerate() {
            let dst = &mut chunk[k * inner..(k + 1) * inner];
            for (q, v) in fac.values.iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                let src = (o * len + (fac.start + q) % len) * inner;
                for (t, slot) in dst.iter_mut().enumerate() {
                    *slot += v * arr[src + t];
                }
            }
        }
    });
    let mut nd = dims.to_vec();
    nd[axis] = kk;
    (out, nd)
}

/// Transpose of [`contract`]: spreads a (.., K, ..) array back onto N samples.
fn expand(arr: &[f64], dims: &[usize], axis: usize, factors: &[AxisFactor], len: usize) -> (Vec<f64>, Vec<usize>) {
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let kk = dims[axis];
    let mut out = vec![0.0; outer * len * inner];
    out.par_chunks_mut(len * inner).enumerate().for_each(|(o, chunk)| {
        for (k, fac) in factors.iter().enumerate() {
            let src = (o * kk + k) * inner;
            for (q, v) in fac.values.iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                let dst = ((fac.start + q) % len) * inner;
                for t in 0..inner {
                    chunk[dst + t] += v * arr[src + t];
                }
            }
        }
    });
    let mut nd = dims.to_vec();
    nd[axis] = len;
    (out, nd)
}

impl WaveletSystem {
    pub fn n(&self) -> usize {
        self.bbox.dim()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.stats.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.stats.blocks == 0
    }

    pub fn count_at(&self, j: u32) -> usize {
        if j > self.jmax {
            return 0;
        }
        self.geometry.count_at(j)
    }

    pub fn block(&self, j: u32, r: usize) -> Option<Block> {
        if j > self.jmax {
            return None;
        }
        match &self.layout {
            Layout::Tensor { tables } => {
                let n = self.n();
                let cells = tensor_cells(&self.bbox, j);
                let c_j: usize = cells.iter().product();
                if r >= c_j * tensor_types(n, j) {
                    return None;
                }
                let eps = r / c_j + usize::from(j > 0);
                let c = r % c_j;
                let strides = strides_of(&cells);
                let s = 2f64.powi(-(j as i32));
                let k: Vec<usize> = (0..n).map(|d| (c / strides[d]) % cells[d]).collect();
                let center = (0..n).map(|d| self.bbox.lower[d] + (k[d] as f64 + 0.5) * s).collect();
                let factors = (0..n).map(|d| tables[d][j as usize][(eps >> (n - 1 - d)) & 1][k[d]].clone()).collect();
                let flag = if eps == 0 { BlockFlag::Interior } else { BlockFlag::Oscillating };
                Some(Block { j, r, eps, flag, center, factors })
            }
            Layout::Explicit { blocks, level_start } => {
                let start = *level_start.get(&j)?;
                let b = blocks.get(start + r)?;
                (b.j == j).then(|| b.clone())
            }
        }
    }

    /// All (j, r) keys in order.
    pub fn keys(&self) -> Vec<(u32, usize)> {
        (0..=self.jmax).flat_map(|j| (0..self.count_at(j)).map(move |r| (j, r))).collect()
    }

    fn visit(&self, b: &Block, mut f: impl FnMut(usize, f64)) {
        let n = self.n();
        let strides = strides_of(&self.dims);
        let axes: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|d| {
                let fa = &b.factors[d];
                fa.values
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(t, v)| (((fa.start + t) % self.dims[d]) * strides[d], *v))
                    .collect()
            })
            .collect();
        if axes.iter().any(|a| a.is_empty()) {
            return;
        }
        let mut idx = vec![0usize; n];
        loop {
            let mut off = 0;
            let mut w = 1.0;
            for d in 0..n {
                let (o, v) = axes[d][idx[d]];
                off += o;
                w *= v;
            }
            f(off, w);
            let mut d = n;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Φ_r^j sampled on the system grid.
    pub fn render(&self, j: u32, r: usize) -> Result<GridFunction> {
        let b = self.block(j, r).ok_or(Error::MissingKey(j, r))?;
        let mut g = GridFunction::zeros(self.bbox.clone(), self.resolution)?;
        let vals = g.values_mut();
        self.visit(&b, |i, w| vals[i] += w);
        Ok(g)
    }

    fn check_grid(&self, f: &GridFunction) -> Result<()> {
        if f.bbox() != &self.bbox || f.level() != self.resolution {
            return Err(Error::ResolutionMismatch(format!(
                "function on level {} over {:?}, system on level {} over {:?}",
                f.level(),
                f.bbox(),
                self.resolution,
                self.bbox
            )));
        }
        Ok(())
    }

    /// λ_r^j = 2^{jn/2} ∫ f Φ_r^j by midpoint quadrature.
    pub fn analyze(&self, f: &GridFunction) -> Result<CoefficientField> {
        self.check_grid(f)?;
        let n = self.n();
        let vol = f.cell_volume();
        let mut out = CoefficientField::new(self.geometry.clone());
        match &self.layout {
            Layout::Tensor { tables } => {
                let levels: Vec<(u32, Vec<Vec<f64>>)> = (0..=self.jmax)
                    .into_par_iter()
                    .map(|j| {
                        let mut bands = vec![(f.values().to_vec(), self.dims.clone())];
                        for d in 0..n {
                            let mut next = Vec::with_capacity(bands.len() * 2);
                            for (arr, dims) in &bands {
                                for kind in 0..2 {
                                    next.push(contract(arr, dims, d, &tables[d][j as usize][kind]));
                                }
                            }
                            bands = next;
                        }
                        (j, bands.into_iter().map(|(a, _)| a).collect())
                    })
                    .collect();
                for (j, bands) in levels {
                    let scale = vol * 2f64.powf(j as f64 * n as f64 / 2.0);
                    let first = usize::from(j > 0);
                    let c_j = bands[0].len();
                    for (eps, band) in bands.iter().enumerate().skip(first) {
                        for (c, v) in band.iter().enumerate() {
                            let lam = v * scale;
                            if lam != 0.0 {
                                out.insert(j, (eps - first) * c_j + c, lam)?;
                            }
                        }
                    }
                }
            }
            Layout::Explicit { blocks, .. } => {
                let vals = f.values();
                let lams: Vec<f64> = blocks
                    .par_iter()
                    .map(|b| {
                        let mut acc = 0.0;
                        self.visit(b, |i, w| acc += w * vals[i]);
                        acc * vol * 2f64.powf(b.j as f64 * n as f64 / 2.0)
                    })
                    .collect();
                for (b, lam) in blocks.iter().zip(lams) {
                    if lam != 0.0 {
                        out.insert(b.j, b.r, lam)?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// f = Σ λ_r^j 2^{-jn/2} Φ_r^j.
    pub fn synthesize(&self, lambda: &CoefficientField) -> Result<GridFunction> {
        self.synthesize_filtered(lambda, |_, _| true)
    }

    pub fn synthesize_filtered(&self, lambda: &CoefficientField, keep: impl Fn(u32, usize) -> bool + Sync) -> Result<GridFunction> {
        let n = self.n();
        for (j, r, _) in lambda.iter() {
            if j > self.jmax || r >= self.count_at(j) {
                return Err(Error::MissingKey(j, r));
            }
        }
        let total: usize = self.dims.iter().product();
        let mut out = vec![0.0; total];
        match &self.layout {
            Layout::Tensor { tables } => {
                let parts: Vec<Vec<f64>> = (0..=self.jmax)
                    .into_par_iter()
                    .map(|j| {
                        let cells = tensor_cells(&self.bbox, j);
                        let c_j: usize = cells.iter().product();
                        let first = usize::from(j > 0);
                        let scale = 2f64.powf(-(j as f64) * n as f64 / 2.0);
                        let mut acc = vec![0.0; total];
                        for t in 0..tensor_types(n, j) {
                            let eps = t + first;
                            let mut coef = vec![0.0; c_j];
                            let mut any = false;
                            for (c, slot) in coef.iter_mut().enumerate() {
                                let r = t * c_j + c;
                                let v = lambda.get(j, r);
                                if v != 0.0 && keep(j, r) {
                                    *slot = v * scale;
                                    any = true;
                                }
                            }
                            if !any {
                                continue;
                            }
                            let mut arr = coef;
                            let mut dims = cells.clone();
                            for d in 0..n {
                                let kind = (eps >> (n - 1 - d)) & 1;
                                let (a, nd) = expand(&arr, &dims, d, &tables[d][j as usize][kind], self.dims[d]);
                                arr = a;
                                dims = nd;
                            }
                            for (o, v) in acc.iter_mut().zip(arr) {
                                *o += v;
                            }
                        }
                        acc
                    })
                    .collect();
                for p in parts {
                    for (o, v) in out.iter_mut().zip(p) {
                        *o += v;
                    }
                }
            }
            Layout::Explicit { .. } => {
                for (j, r, v) in lambda.iter() {
                    if v == 0.0 || !keep(j, r) {
                        continue;
                    }
                    let b = self.block(j, r).ok_or(Error::MissingKey(j, r))?;
                    let c = v * 2f64.powf(-(j as f64) * n as f64 / 2.0);
                    self.visit(&b, |i, w| out[i] += c * w);
                }
            }
        }
        GridFunction::new(self.bbox.clone(), self.resolution, out)
    }
}

/// Norm estimator choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Haar,
    Db2,
    Db3,
    Db4,
}

impl NormMethod {
    pub fn u(self) -> u32 {
        match self {
            NormMethod::Haar => 0,
            NormMethod::Db2 => 1,
            NormMethod::Db3 => 2,
            NormMethod::Db4 => 3,
        }
    }

    pub fn from_u(u: u32) -> Result<Self> {
        Ok(match u {
            0 => NormMethod::Haar,
            1 => NormMethod::Db2,
            2 => NormMethod::Db3,
            3 => NormMethod::Db4,
            _ => return Err(Error::UnsupportedOrder(u)),
        })
    }

    /// Haar inside its validity range, otherwise the lowest admissible DB order.
    pub fn auto(params: &SpaceParams) -> Result<Self> {
        if haar_valid(params) {
            return Ok(NormMethod::Haar);
        }
        (1..=3).find(|&u| params.s < u as f64).map_or(Err(Error::WaveletOrderTooLow { u: 3, s: params.s }), Self::from_u)
    }
}

impl std::str::FromStr for NormMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(NormMethod::Haar),
            "db2" => Ok(NormMethod::Db2),
            "db3" => Ok(NormMethod::Db3),
            "db4" => Ok(NormMethod::Db4),
            other => Err(Error::Invalid(format!("unknown wavelet method '{other}'"))),
        }
    }
}

fn haar_valid(params: &SpaceParams) -> bool {
    params.s < (1.0 / params.p).min(1.0 / params.q)
}

/// Order/smoothness gate shared by the estimators.
pub fn check_order(u: u32, params: &SpaceParams) -> Result<()> {
    let ok = if u == 0 { haar_valid(params) } else { (u as f64) > params.s };
    if ok {
        Ok(())
    } else {
        Err(Error::WaveletOrderTooLow { u, s: params.s })
    }
}

/// f_norm of the analysis coefficients in the system's geometry.
pub fn wavelet_norm(f: &GridFunction, params: &SpaceParams, sys: &WaveletSystem) -> Result<f64> {
    check_order(sys.u, params)?;
    let lam = sys.analyze(f)?;
    coefficient_norm(&lam, params)
}

/// f^s_{p,q} norm of a coefficient field (exact resolution for cell-aligned
/// geometries).
pub fn coefficient_norm(lam: &CoefficientField, params: &SpaceParams) -> Result<f64> {
    let res = if lam.geometry().is_cell_aligned() { lam.finest_level().map(|j| j as i32) } else { None };
    f_norm_at(lam, params.p, params.q, Some(params.s), res)
}

/// Default finest wavelet level for a grid at `resolution`.
pub fn default_jmax(u: u32, resolution: i32) -> u32 {
    let margin = if u == 0 { 1 } else { 3 };
    (resolution - margin).clamp(0, 10) as u32
}

/// Box-system norm on the grid of `f`.
pub fn wavelet_norm_with(f: &GridFunction, params: &SpaceParams, method: NormMethod, jmax: Option<u32>) -> Result<f64> {
    check_order(method.u(), params)?;
    let jm = jmax.unwrap_or_else(|| default_jmax(method.u(), f.level()));
    let sys = build_box_system(f.n(), method.u(), jm, f.bbox(), f.level())?;
    wavelet_norm(f, params, &sys)
}

/// Σ over l-element axis subsets S of ‖ ‖f(·_S, x_{S^c}) | F(ℝ^l)‖ | L_p(x_{S^c}) ‖.
pub fn fubini_norm(f: &GridFunction, params: &SpaceParams, l: usize, method: NormMethod, jmax: Option<u32>) -> Result<f64> {
    let n = f.n();
    if l == 0 || l >= n {
        return Err(Error::Invalid(format!("fubini needs 1 ≤ l < n, got l = {l}, n = {n}")));
    }
    let inner_params = SpaceParams { n: l, exact: None, ..params.clone() };
    check_order(method.u(), &inner_params)?;
    let jm = jmax.unwrap_or_else(|| default_jmax(method.u(), f.level()));
    let dims = f.dims().to_vec();
    let strides = f.strides();
    let h = f.spacing();
    let mut total = 0.0;
    let subsets: Vec<Vec<usize>> = (0..1usize << n)
        .filter(|m| m.count_ones() as usize == l)
        .map(|m| (0..n).filter(|d| m >> (n - 1 - d) & 1 == 1).collect())
        .collect();
    for sub in subsets {
        let rest: Vec<usize> = (0..n).filter(|d| !sub.contains(d)).collect();
        let sbox = Bbox::new(sub.iter().map(|&d| f.bbox().lower[d]).collect(), sub.iter().map(|&d| f.bbox().upper[d]).collect())?;
        let sys = build_box_system(l, method.u(), jm, &sbox, f.level())?;
        let sdims: Vec<usize> = sub.iter().map(|&d| dims[d]).collect();
        let rdims: Vec<usize> = rest.iter().map(|&d| dims[d]).collect();
        let n_slices: usize = rdims.iter().product();
        let n_inner: usize = sdims.iter().product();
        let sstr = strides_of(&sdims);
        let rstr = strides_of(&rdims);
        let vals = f.values();
        let norms: Vec<f64> = (0..n_slices)
            .into_par_iter()
            .map(|si| {
                let base: usize = rest.iter().enumerate().map(|(a, &d)| ((si / rstr[a]) % rdims[a]) * strides[d]).sum();
                let slice: Vec<f64> = (0..n_inner)
                    .map(|ti| base + sub.iter().enumerate().map(|(a, &d)| ((ti / sstr[a]) % sdims[a]) * strides[d]).sum::<usize>())
                    .map(|i| vals[i])
                    .collect();
                let g = GridFunction::new(sbox.clone(), f.level(), slice)?;
                if g.max_abs() == 0.0 {
                    return Ok(0.0);
                }
                wavelet_norm(&g, &inner_params, &sys)
            })
            .collect::<Result<Vec<f64>>>()?;
        let outer = if params.p.is_infinite() {
            norms.iter().fold(0.0f64, |a, b| a.max(*b))
        } else {
            (norms.iter().map(|v| v.powf(params.p)).sum::<f64>() * h.powi((n - l) as i32)).powf(1.0 / params.p)
        };
        total += outer;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whitney::{whitney_decompose, DomainDescriptor};

    #[test]
    fn haar_1d_textbook_blocks() {
        let sys = build_box_system(1, 0, 1, &Bbox::unit(1), 3).unwrap();
        assert_eq!(sys.count_at(0), 2);
        assert_eq!(sys.count_at(1), 2);
        let close = |g: &GridFunction, want: &[f64]| g.values().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-14);
        assert!(close(&sys.render(0, 0).unwrap(), &[1.0; 8]));
        assert!(close(&sys.render(0, 1).unwrap(), &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]));
        let s = 2f64.sqrt();
        assert!(close(&sys.render(1, 1).unwrap(), &[0.0, 0.0, 0.0, 0.0, s, s, -s, -s]));
    }

    #[test]
    fn haar_gram_is_identity() {
        let sys = build_box_system(2, 0, 3, &Bbox::unit(2), 4).unwrap();
        let keys = sys.keys();
        let rendered: Vec<GridFunction> = keys.iter().map(|&(j, r)| sys.render(j, r).unwrap()).collect();
        let vol = rendered[0].cell_volume();
        let mut dev: f64 = 0.0;
        for a in 0..keys.len() {
            for b in a..keys.len() {
                let g: f64 = rendered[a].values().iter().zip(rendered[b].values()).map(|(x, y)| x * y).sum::<f64>() * vol;
                dev = dev.max((g - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn tensor_analysis_matches_direct_inner_products() {
        for u in [0, 1, 2] {
            let bbox = Bbox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
            let sys = build_box_system(2, u, 2, &bbox, 5).unwrap();
            let f = GridFunction::from_fn(bbox.clone(), 5, |x| (3.0 * x[0]).sin() + x[1] * x[1] * x[0]).unwrap();
            let lam = sys.analyze(&f).unwrap();
            for (j, r) in sys.keys().into_iter().step_by(7) {
                let b = sys.render(j, r).unwrap();
                let direct: f64 = b.values().iter().zip(f.values()).map(|(x, y)| x * y).sum::<f64>()
                    * f.cell_volume()
                    * 2f64.powi(j as i32);
                assert!((direct - lam.get(j, r)).abs() < 1e-10, "u={u} ({j},{r})");
            }
            // synthesis is the adjoint
            let g = sys.synthesize(&lam).unwrap();
            let mut direct = GridFunction::zeros(bbox.clone(), 5).unwrap();
            for (j, r, v) in lam.iter() {
                let b = sys.render(j, r).unwrap();
                for (o, w) in direct.values_mut().iter_mut().zip(b.values()) {
                    *o += v * 2f64.powi(-(j as i32)) * w;
                }
            }
            assert!(g.zip_map(&direct, |a, b| a - b).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn haar_box_matches_fwt() {
        let bbox = Bbox::cube(1, -2.0, 2.0);
        let f = GridFunction::from_fn(bbox.clone(), 7, |x| (x[0] * 2.3).cos() * (-x[0] * x[0]).exp()).unwrap();
        let sys = build_box_system(1, 0, 6, &bbox, 7).unwrap();
        let a = sys.analyze(&f).unwrap();
        let b = crate::fwt::forward(&f, 0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn db_moments_and_stats() {
        let sys = build_box_system(1, 1, 4, &Bbox::cube(1, 0.0, 4.0), 12).unwrap();
        assert!(sys.stats.c3 < 1e-6, "{:?}", sys.stats);
        assert!(sys.stats.c1 > 1.0 && sys.stats.c1 <= 3.0);
    }

    #[test]
    fn order_gate() {
        let f = GridFunction::zeros(Bbox::unit(1), 6).unwrap();
        let p = SpaceParams::new(1, 0.6, 2.0, 2.0).unwrap();
        assert!(matches!(wavelet_norm_with(&f, &p, NormMethod::Haar, None), Err(Error::WaveletOrderTooLow { .. })));
        assert_eq!(wavelet_norm_with(&f, &p, NormMethod::Db2, None).unwrap(), 0.0);
        assert_eq!(NormMethod::auto(&p).unwrap(), NormMethod::Db2);
    }

    #[test]
    fn single_block_norm_closed_form() {
        let bbox = Bbox::unit(1);
        let sys = build_box_system(1, 0, 4, &bbox, 6).unwrap();
        let (j, r) = (3u32, 4usize);
        let f = sys.render(j, r).unwrap();
        let params = SpaceParams::new(1, 0.3, 2.0, 2.0).unwrap();
        let v = wavelet_norm(&f, &params, &sys).unwrap();
        // λ = 2^{j/2}, χ = cell of side 2^{-j}: ‖·‖ = 2^{js} 2^{j/2} 2^{-j/2}
        let want = 2f64.powf(3.0 * 0.3);
        assert!((v - want).abs() < 1e-12, "{v} vs {want}");
    }

    #[test]
    fn domain_haar_system_is_interior_and_orthonormal() {
        let dom = DomainDescriptor::unit_cube(1);
        let dec = whitney_decompose(&dom, 4).unwrap();
        let sys = build_domain_system(&dec, 0, 4, 6).unwrap();
        assert!(sys.stats.c4.unwrap() >= INTERIOR_MARGIN);
        let keys = sys.keys();
        let mut acc = GridFunction::zeros(Bbox::unit(1), 6).unwrap();
        for &(j, r) in &keys {
            let b = sys.render(j, r).unwrap();
            for (o, w) in acc.values_mut().iter_mut().zip(b.values()) {
                *o += w.abs();
            }
        }
        // boundary layer of width 2^{-4} untouched
        let vals = acc.values();
        assert!(vals[..4].iter().chain(&vals[60..]).all(|v| *v == 0.0));
        // orthonormal
        let rendered: Vec<GridFunction> = keys.iter().map(|&(j, r)| sys.render(j, r).unwrap()).collect();
        for a in 0..rendered.len() {
            for b in a..rendered.len() {
                let g: f64 = rendered[a].values().iter().zip(rendered[b].values()).map(|(x, y)| x * y).sum::<f64>() / 64.0;
                assert!((g - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
