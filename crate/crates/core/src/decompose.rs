//! Decomposition of functions on the unit cube into an interior remainder
//! with vanishing boundary traces plus extensions of boundary data.

use crate::boundary::{check_extension_window, extend_all, extend_on, trace, ExtendOptions, FaceDescriptor, TraceBundle};
use crate::error::{Error, Result};
use crate::grid::{Bbox, GridFunction, SpaceParams};
use crate::hardy::{check_reinforce, ReinforceReport, DEFAULT_EPS};
use crate::numerics::norm_order;
use crate::seqspace::CoefficientField;
use crate::wavelets::{build_box_system, build_domain_system, coefficient_norm, default_jmax, wavelet_norm_with, NormMethod, WaveletSystem};
use crate::whitney::{whitney_decompose, DomainDescriptor};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

const TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionPlan {
    pub params: SpaceParams,
    pub l0: usize,
    /// r^l for l = l0..n−1
    pub orders: BTreeMap<usize, u32>,
    pub critical_set: Vec<usize>,
    /// s − (n−l)/p for l = 0..n−1
    pub excess: Vec<f64>,
    pub exact: bool,
}

impl DecompositionPlan {
    pub fn n(&self) -> usize {
        self.params.n
    }

    /// r with s − (n−l)/p = r at a critical dimension.
    pub fn critical_order(&self, l: usize) -> Option<u32> {
        self.critical_set.contains(&l).then(|| self.excess[l].round() as u32)
    }
}

/// Arithmetic facts about v = s − (n−l)/p.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Excess {
    positive: bool,
    nonneg: bool,
    within_step: bool,
    integer: bool,
    floor: i64,
}

fn excess_exact(s: Ratio<i64>, inv_p: Ratio<i64>, k: i64) -> Excess {
    let v = s - inv_p * k;
    let zero = Ratio::from_integer(0);
    Excess {
        positive: v > zero,
        nonneg: v >= zero,
        within_step: v <= inv_p,
        integer: v.is_integer(),
        floor: v.floor().to_integer(),
    }
}

fn excess_float(s: f64, inv_p: f64, k: i64) -> Excess {
    let v = s - inv_p * k as f64;
    let integer = (v - v.round()).abs() <= TOL;
    Excess {
        positive: v > TOL,
        nonneg: v > -TOL,
        within_step: v <= inv_p + TOL,
        integer,
        floor: if integer { v.round() as i64 } else { v.floor() as i64 },
    }
}

/// Starting dimension l₀, trace orders r^l and the critical dimensions.
pub fn plan(params: &SpaceParams) -> Result<DecompositionPlan> {
    if !(params.s > 0.0) || !(params.p >= 1.0) {
        return Err(Error::Invalid("plan needs s > 0 and p ≥ 1".into()));
    }
    let n = params.n;
    let facts: Vec<Excess> = match params.exact {
        Some(ex) => {
            let s = Ratio::new(ex.s.0, ex.s.1);
            let inv_p = Ratio::new(ex.p.1, ex.p.0);
            (0..n).map(|l| excess_exact(s, inv_p, (n - l) as i64)).collect()
        }
        None => (0..n).map(|l| excess_float(params.s, 1.0 / params.p, (n - l) as i64)).collect(),
    };
    let l0 = if facts[0].positive { 0 } else { (1..n).find(|&l| facts[l].positive && facts[l].within_step).unwrap_or(n) };
    let orders = (l0..n)
        .map(|l| {
            let f = facts[l];
            let r = if f.integer { f.floor - 1 } else { f.floor };
            (l, r as u32)
        })
        .collect();
    let critical_set = (0..n).filter(|&l| facts[l].integer && facts[l].nonneg).collect();
    Ok(DecompositionPlan {
        params: params.clone(),
        l0,
        orders,
        critical_set,
        excess: (0..n).map(|l| params.s - (n - l) as f64 / params.p).collect(),
        exact: params.exact.is_some(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualTrace {
    pub face: String,
    pub l: usize,
    pub r: u32,
    pub sup: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verification {
    pub level: i32,
    pub max_abs: f64,
    pub reconstruction_error: f64,
    pub residual_traces: Vec<ResidualTrace>,
    pub max_residual_trace: f64,
    /// sup difference between the inductive extension and per-step peeling
    pub peel_cross_check: f64,
    /// part of f_rloc not carried by the interior system (cells next to ∂Q)
    pub layer_sup: f64,
    pub layer_width_cells: usize,
    pub reinforce: Vec<ReinforceReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FaceCoefficients {
    pub face: String,
    pub alpha: Vec<u32>,
    #[serde(skip)]
    pub field: CoefficientField,
}

#[derive(Clone, Debug)]
pub struct CubeDecomposition {
    pub plan: DecompositionPlan,
    pub u: u32,
    pub level: i32,
    pub bundles: Vec<TraceBundle>,
    pub f_rloc: GridFunction,
    pub interior: CoefficientField,
    pub face_coefficients: Vec<FaceCoefficients>,
    pub layer: GridFunction,
    pub verification: Verification,
    system: WaveletSystem,
}

/// Reusable machinery for one (params, u, level): the plan and the interior
/// Haar system on the Whitney cubes of Q.
pub struct Decomposer {
    pub plan: DecompositionPlan,
    pub u: u32,
    pub level: i32,
    system: WaveletSystem,
}

fn min_level(n: usize) -> i32 {
    if n <= 2 {
        8
    } else {
        5
    }
}

impl Decomposer {
    pub fn new(params: &SpaceParams, u: u32, level: i32) -> Result<Self> {
        if !((u as f64) > params.s) {
            return Err(Error::WaveletOrderTooLow { u, s: params.s });
        }
        let n = params.n;
        if level < min_level(n) {
            return Err(Error::GridTooCoarse(format!("decomposition needs J ≥ {} in dimension {n}, got {level}", min_level(n))));
        }
        let plan = plan(params)?;
        for (&l, &r) in &plan.orders {
            check_extension_window(params, l, r, u)?;
        }
        let jmax = (level - 1) as u32;
        let dec = whitney_decompose(&DomainDescriptor::unit_cube(n), jmax)?;
        let system = build_domain_system(&dec, 0, jmax, level)?;
        Ok(Decomposer { plan, u, level, system })
    }

    fn faces(&self) -> Vec<(FaceDescriptor, u32)> {
        let n = self.plan.n();
        self.plan.orders.iter().flat_map(|(&l, &r)| FaceDescriptor::cube_faces(n, l).into_iter().map(move |f| (f, r))).collect()
    }

    fn check_input(&self, f: &GridFunction) -> Result<()> {
        if f.n() != self.plan.n() || f.bbox() != &Bbox::unit(f.n()) || f.level() != self.level {
            return Err(Error::ResolutionMismatch(format!("decomposer expects the unit cube at level {}", self.level)));
        }
        Ok(())
    }

    /// Raw boundary data tr_{Γ_l}^{r^l} f, ordered by face dimension.
    pub fn bundles(&self, f: &GridFunction) -> Result<Vec<TraceBundle>> {
        self.faces().par_iter().map(|(face, r)| trace(f, face, *r, Some(&self.plan.params))).collect()
    }

    pub fn extension(&self, bundles: &[TraceBundle]) -> Result<GridFunction> {
        if bundles.is_empty() {
            return GridFunction::zeros(Bbox::unit(self.plan.n()), self.level);
        }
        extend_all(bundles, self.level, self.u, &ExtendOptions::single_scale())
    }

    /// f minus one face extension at a time, re-tracing the current function.
    pub fn peel(&self, f: &GridFunction) -> Result<GridFunction> {
        let mut current = f.clone();
        for (face, r) in self.faces() {
            let b = trace(&current, &face, r, None)?;
            let ext = extend_on(&b, self.level, self.u, &ExtendOptions::single_scale())?;
            current = current.zip_map(&ext, |a, e| a - e)?;
        }
        Ok(current)
    }

    pub fn run(&self, f: &GridFunction) -> Result<CubeDecomposition> {
        self.check_input(f)?;
        let bundles = self.bundles(f)?;
        let ext = self.extension(&bundles)?;
        let f_rloc = f.zip_map(&ext, |a, e| a - e)?;
        let peeled = self.peel(f)?;
        let peel_cross_check = f_rloc.zip_map(&peeled, |a, b| a - b)?.max_abs();
        let interior = self.system.analyze(&f_rloc)?;
        let carried = self.system.synthesize(&interior)?;
        let layer = f_rloc.zip_map(&carried, |a, b| a - b)?;
        let mut face_coefficients = Vec::new();
        for b in &bundles {
            if b.face.l == 0 {
                continue;
            }
            let sys = build_box_system(b.face.l, 0, (self.level - 1) as u32, &b.face.face_bbox(), self.level)?;
            for (alpha, g) in &b.data {
                face_coefficients.push(FaceCoefficients { face: b.face.label(), alpha: alpha.clone(), field: sys.analyze(g)? });
            }
        }
        let residual_traces = self
            .faces()
            .par_iter()
            .map(|(face, r)| {
                let t = trace(&f_rloc, face, *r, None)?;
                Ok(ResidualTrace { face: face.label(), l: face.l, r: *r, sup: t.max_abs() })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut reinforce = Vec::new();
        for &l in &self.plan.critical_set {
            let r = self.plan.critical_order(l).expect("critical");
            for face in FaceDescriptor::cube_faces(self.plan.n(), l) {
                reinforce.push(check_reinforce(f, &face, r, self.plan.params.p, DEFAULT_EPS)?);
            }
        }
        let layer_sup = layer.max_abs();
        let cut = 1e-12 * f.max_abs().max(1e-300);
        let layer_width_cells = layer
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > cut)
            .map(|(i, _)| {
                let idx = layer.unravel(i);
                idx.iter().zip(layer.dims()).map(|(&k, &d)| k.min(d - 1 - k) + 1).min().unwrap_or(0)
            })
            .max()
            .unwrap_or(0);
        let mut dec = CubeDecomposition {
            plan: self.plan.clone(),
            u: self.u,
            level: self.level,
            bundles,
            f_rloc,
            interior,
            face_coefficients,
            layer,
            verification: Verification {
                level: self.level,
                max_abs: f.max_abs(),
                reconstruction_error: f64::NAN,
                max_residual_trace: residual_traces.iter().map(|t| t.sup).fold(0.0, f64::max),
                residual_traces,
                peel_cross_check,
                layer_sup,
                layer_width_cells,
                reinforce,
            },
            system: self.system.clone(),
        };
        let back = reconstruct(&dec)?;
        dec.verification.reconstruction_error = back.zip_map(f, |a, b| a - b)?.max_abs();
        Ok(dec)
    }
}

/// Decompose `f` on the unit cube at its own grid level.
pub fn decompose_cube(f: &GridFunction, params: &SpaceParams, u: u32) -> Result<CubeDecomposition> {
    Decomposer::new(params, u, f.level())?.run(f)
}

/// synthesize(interior) + boundary layer + extend_all(bundles).
pub fn reconstruct(dec: &CubeDecomposition) -> Result<GridFunction> {
    let mut out = dec.system.synthesize(&dec.interior)?.zip_map(&dec.layer, |a, b| a + b)?;
    if !dec.bundles.is_empty() {
        let ext = extend_all(&dec.bundles, dec.level, dec.u, &ExtendOptions::single_scale())?;
        out = out.zip_map(&ext, |a, b| a + b)?;
    }
    Ok(out)
}

impl CubeDecomposition {
    pub fn interior_system(&self) -> &WaveletSystem {
        &self.system
    }

    /// Sum of sup differences between two bundle lists on the same faces.
    pub fn bundle_distance(&self, other: &[TraceBundle]) -> Result<f64> {
        if other.len() != self.bundles.len() {
            return Err(Error::Invalid("bundle lists differ in length".into()));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.bundles.iter().zip(other) {
            worst = worst.max(a.max_abs_diff(b)?);
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Idempotence {
    pub bundle_diff: f64,
    pub coefficient_diff: f64,
    pub rloc_diff: f64,
}

/// Decompose reconstruct(dec) again and compare the data (P² = P).
pub fn check_idempotence(dec: &CubeDecomposition) -> Result<Idempotence> {
    let again = decompose_cube(&reconstruct(dec)?, &dec.plan.params, dec.u)?;
    Ok(Idempotence {
        bundle_diff: dec.bundle_distance(&again.bundles)?,
        coefficient_diff: dec.interior.max_abs_diff(&again.interior),
        rloc_diff: dec.f_rloc.zip_map(&again.f_rloc, |a, b| a - b)?.max_abs(),
    })
}

/// Even reflection of g on [0,1]^m to [−1,2]^m, times a cutoff equal to 1
/// on [−1/4, 5/4]^m and vanishing outside [−3/4, 7/4]^m.
pub fn reflect_extend(g: &GridFunction) -> Result<GridFunction> {
    let m = g.n();
    if g.bbox() != &Bbox::unit(m) {
        return Err(Error::Invalid("reflection extension needs data on the unit cube".into()));
    }
    let dims = g.dims().to_vec();
    let big = Bbox::cube(m, -1.0, 2.0);
    let strides = g.strides();
    let vals = g.values();
    GridFunction::from_fn(big, g.level(), |x| {
        let mut flat = 0usize;
        let mut weight = 1.0;
        for d in 0..m {
            let t = x[d];
            let e = (-t).max(t - 1.0).max(0.0);
            weight *= crate::hardy::cutoff(e, 0.25, 0.75);
            let r = if t < 0.0 { -t } else if t > 1.0 { 2.0 - t } else { t };
            let k = ((r * dims[d] as f64).floor() as usize).min(dims[d] - 1);
            flat += k * strides[d];
        }
        if weight == 0.0 {
            0.0
        } else {
            weight * vals[flat]
        }
    })
}

/// Box-system DB(u) norm of the reflection extension.
pub fn reflected_norm(g: &GridFunction, params: &SpaceParams, u: u32) -> Result<f64> {
    if g.n() == 0 {
        return Ok(g.values()[0].abs());
    }
    wavelet_norm_with(&reflect_extend(g)?, params, NormMethod::from_u(u)?, None)
}

#[derive(Clone, Debug, Serialize)]
pub struct RieszEntry {
    pub index: usize,
    pub interior: f64,
    pub boundary: f64,
    pub coefficient_norm: f64,
    pub direct: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RieszReport {
    pub level: i32,
    pub u: u32,
    pub entries: Vec<RieszEntry>,
    pub skipped: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// smallest C with every ratio in [1/C, C]
    pub c: f64,
    /// max ratio / min ratio
    pub band_width: f64,
}

/// Coefficient norm (interior DB(u) domain coefficients of f_rloc plus face
/// norms of the boundary data at the trace smoothness) against the direct
/// norm of the reflected function.
pub fn riesz_report(corpus: &[GridFunction], params: &SpaceParams, u: u32) -> Result<RieszReport> {
    let first = corpus.first().ok_or_else(|| Error::Invalid("empty corpus".into()))?;
    let level = first.level();
    let n = params.n;
    let decomposer = Decomposer::new(params, u, level)?;
    let jmax = default_jmax(u, level);
    let wdec = whitney_decompose(&DomainDescriptor::unit_cube(n), jmax)?;
    let db = build_domain_system(&wdec, u, jmax, level)?;
    let mut entries = Vec::new();
    let mut skipped = 0;
    for (index, f) in corpus.iter().enumerate() {
        if f.max_abs() == 0.0 {
            skipped += 1;
            continue;
        }
        let dec = decomposer.run(f)?;
        let interior = coefficient_norm(&db.analyze(&dec.f_rloc)?, params)?;
        let mut boundary = 0.0;
        for b in &dec.bundles {
            let l = b.face.l;
            for (alpha, g) in &b.data {
                let s_alpha = params.s - (n - l) as f64 / params.p - norm_order(alpha) as f64;
                boundary += if l == 0 {
                    g.values()[0].abs()
                } else {
                    reflected_norm(g, &SpaceParams::new(l, s_alpha, params.p, params.p)?, u)?
                };
            }
        }
        let direct = reflected_norm(f, params, u)?;
        let coefficient_norm = interior + boundary;
        entries.push(RieszEntry { index, interior, boundary, coefficient_norm, direct, ratio: (direct > 0.0).then(|| coefficient_norm / direct) });
    }
    let ratios: Vec<f64> = entries.iter().filter_map(|e| e.ratio).collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(RieszReport {
        level,
        u,
        entries,
        skipped,
        min_ratio,
        max_ratio,
        c: max_ratio.max(1.0 / min_ratio),
        band_width: max_ratio / min_ratio,
    })
}
