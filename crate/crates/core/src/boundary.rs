//! Traces onto cube faces and planes, the moment-corrected cutoff χ and the
//! wavelet-friendly extension operators.
//!
//! Traces are one-sided: D^α f on the face is extrapolated from the first
//! |α|+3 cell midpoints on the inner side. Extensions place the perpendicular
//! factor z^α χ(2^j z) on top of the level components of the face data, so
//! inside the χ plateau the extension is an exact polynomial in z and the
//! trace of an extension returns the data up to round-off.

use crate::error::{Error, Result};
use crate::fwt;
use crate::grid::{perpendicular_indices, read_gfn, write_gfn, Bbox, GridFunction, SpaceParams};
use crate::numerics::{alpha_factorial, binomial, fornberg, integrate_gl, norm_order};
use crate::seqspace::CoefficientField;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// An l-dimensional face: coordinates on `free` axes vary over the ambient
/// box, the `fixed` axes are pinned. `inward[k]` is the side (±1) of the
/// ambient box relative to the k-th fixed coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceDescriptor {
    pub n: usize,
    pub l: usize,
    pub j: usize,
    pub free: Vec<usize>,
    pub fixed: Vec<(usize, f64)>,
    pub inward: Vec<f64>,
    pub ambient: Bbox,
    pub plane: bool,
}

impl FaceDescriptor {
    /// All l-dimensional faces of [0,1]^n, in a fixed order (index j).
    pub fn cube_faces(n: usize, l: usize) -> Vec<FaceDescriptor> {
        let mut out = Vec::new();
        if l >= n {
            return out;
        }
        for mask in 0..(1usize << n) {
            if mask.count_ones() as usize != l {
                continue;
            }
            let free: Vec<usize> = (0..n).filter(|d| mask >> (n - 1 - d) & 1 == 1).collect();
            let fixed_axes: Vec<usize> = (0..n).filter(|d| !free.contains(d)).collect();
            for side in 0..(1usize << fixed_axes.len()) {
                let m = fixed_axes.len();
                let fixed: Vec<(usize, f64)> =
                    fixed_axes.iter().enumerate().map(|(k, &d)| (d, ((side >> (m - 1 - k)) & 1) as f64)).collect();
                let inward = fixed.iter().map(|&(_, c)| if c == 0.0 { 1.0 } else { -1.0 }).collect();
                out.push(FaceDescriptor { n, l, j: out.len(), free: free.clone(), fixed, inward, ambient: Bbox::unit(n), plane: false });
            }
        }
        out
    }

    pub fn cube_face(n: usize, l: usize, j: usize) -> Result<FaceDescriptor> {
        FaceDescriptor::cube_faces(n, l)
            .into_iter()
            .nth(j)
            .ok_or_else(|| Error::Invalid(format!("no face Γ_{{{l},{j}}} on the {n}-cube")))
    }

    /// Every face of [0,1]^n with dimension in `dims`, ordered by dimension.
    pub fn all_cube_faces(n: usize, dims: impl IntoIterator<Item = usize>) -> Vec<FaceDescriptor> {
        dims.into_iter().flat_map(|l| FaceDescriptor::cube_faces(n, l)).collect()
    }

    /// ℝ^l = {x_{l+1} = … = x_n = 0} inside `ambient`, traced from the
    /// positive side.
    pub fn plane(n: usize, l: usize, ambient: Bbox) -> Result<FaceDescriptor> {
        if l >= n || ambient.dim() != n {
            return Err(Error::Invalid(format!("plane of dimension {l} in n = {n}")));
        }
        if (l..n).any(|d| !(ambient.lower[d] < 0.0 && ambient.upper[d] > 0.0)) {
            return Err(Error::Invalid("plane must cut the ambient box".into()));
        }
        Ok(FaceDescriptor {
            n,
            l,
            j: 0,
            free: (0..l).collect(),
            fixed: (l..n).map(|d| (d, 0.0)).collect(),
            inward: vec![1.0; n - l],
            ambient,
            plane: true,
        })
    }

    pub fn perp_axes(&self) -> Vec<usize> {
        self.fixed.iter().map(|&(d, _)| d).collect()
    }

    /// The perpendicular multi-indices α with |α| ≤ r.
    pub fn perp_indices(&self, r: u32) -> Vec<Vec<u32>> {
        perpendicular_indices(self.n, &self.perp_axes(), r)
    }

    pub fn is_perpendicular(&self, alpha: &[u32]) -> bool {
        alpha.len() == self.n && self.free.iter().all(|&d| alpha[d] == 0)
    }

    /// The face parameter box (free axes of the ambient box).
    pub fn face_bbox(&self) -> Bbox {
        Bbox {
            lower: self.free.iter().map(|&d| self.ambient.lower[d]).collect(),
            upper: self.free.iter().map(|&d| self.ambient.upper[d]).collect(),
        }
    }

    /// Euclidean distance from x to the closed face.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for &(d, c) in &self.fixed {
            d2 += (x[d] - c).powi(2);
        }
        for &d in &self.free {
            let gap = (self.ambient.lower[d] - x[d]).max(x[d] - self.ambient.upper[d]).max(0.0);
            d2 += gap * gap;
        }
        d2.sqrt()
    }

    /// Perpendicular offset z (one entry per fixed axis).
    pub fn perp_offset(&self, x: &[f64]) -> Vec<f64> {
        self.fixed.iter().map(|&(d, c)| x[d] - c).collect()
    }

    pub fn label(&self) -> String {
        format!("{},{}", self.l, self.j)
    }
}

/// {g_α : α ⟂ face, |α| ≤ r}, each a grid function on the face box.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceBundle {
    pub face: FaceDescriptor,
    pub r: u32,
    pub data: BTreeMap<Vec<u32>, GridFunction>,
}

#[derive(Serialize, Deserialize)]
struct BundleManifest {
    schema: String,
    face: FaceDescriptor,
    r: u32,
    data: BTreeMap<String, String>,
}

fn alpha_key(alpha: &[u32]) -> String {
    alpha.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("_")
}

impl TraceBundle {
    pub fn zeros(face: &FaceDescriptor, r: u32, level: i32) -> Result<TraceBundle> {
        let mut data = BTreeMap::new();
        for alpha in face.perp_indices(r) {
            data.insert(alpha, face_zeros(face, level)?);
        }
        Ok(TraceBundle { face: face.clone(), r, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.values().map(|g| g.max_abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &TraceBundle) -> Result<f64> {
        let mut m = 0.0f64;
        for (alpha, g) in &self.data {
            let h = other.data.get(alpha).ok_or_else(|| Error::Invalid(format!("missing α = {alpha:?}")))?;
            m = m.max(g.zip_map(h, |a, b| a - b)?.max_abs());
        }
        Ok(m)
    }

    pub fn sub(&self, other: &TraceBundle) -> Result<TraceBundle> {
        let mut data = BTreeMap::new();
        for (alpha, g) in &self.data {
            let h = other.data.get(alpha).ok_or_else(|| Error::Invalid(format!("missing α = {alpha:?}")))?;
            data.insert(alpha.clone(), g.zip_map(h, |a, b| a - b)?);
        }
        Ok(TraceBundle { face: self.face.clone(), r: self.r, data })
    }

    pub fn level(&self) -> Option<i32> {
        self.data.values().find(|g| g.n() > 0).map(|g| g.level())
    }

    /// JSON manifest `path` plus one GFN per α next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("bundle");
        let mut data = BTreeMap::new();
        for (alpha, g) in &self.data {
            let name = format!("{stem}.g_{}.gfn", alpha_key(alpha));
            write_gfn(&dir.join(&name), g)?;
            data.insert(alpha_key(alpha), name);
        }
        let m = BundleManifest { schema: "cellwave/1".into(), face: self.face.clone(), r: self.r, data };
        let value = serde_json::to_value(&m)?;
        std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<TraceBundle> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let m: BundleManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut data = BTreeMap::new();
        for (key, file) in m.data {
            let alpha: Vec<u32> = key
                .split('_')
                .map(|t| t.parse().map_err(|_| Error::Format(format!("bad multi-index key {key}"))))
                .collect::<Result<_>>()?;
            if !m.face.is_perpendicular(&alpha) || norm_order(&alpha) > m.r {
                return Err(Error::Format(format!("α = {alpha:?} is not a perpendicular index of order ≤ {}", m.r)));
            }
            data.insert(alpha, read_gfn(&dir.join(file))?);
        }
        Ok(TraceBundle { face: m.face, r: m.r, data })
    }
}

fn face_zeros(face: &FaceDescriptor, level: i32) -> Result<GridFunction> {
    if face.l == 0 {
        Ok(GridFunction::point(0.0))
    } else {
        GridFunction::zeros(face.face_bbox(), level)
    }
}

/// Number of one-sided nodes used for a derivative of order m.
fn stencil_nodes(m: u32) -> usize {
    m as usize + 3
}

/// Grid index of the first cell on the inner side of the face along `axis`.
fn face_cell(f: &GridFunction, axis: usize, c: f64, inward: f64) -> Result<i64> {
    let t = (c - f.bbox().lower[axis]) / f.spacing();
    if (t - t.round()).abs() > 1e-9 {
        return Err(Error::Invalid(format!("face coordinate {c} is not a cell boundary")));
    }
    Ok(if inward > 0.0 { t.round() as i64 } else { t.round() as i64 - 1 })
}

/// Check the trace window s > r + (n−l)/p.
pub fn check_trace_window(params: &SpaceParams, l: usize, r: u32) -> Result<()> {
    let bound = r as f64 + (params.n - l) as f64 / params.p;
    if params.s > bound + 1e-12 {
        Ok(())
    } else {
        Err(Error::TraceWindow { l, r })
    }
}

/// tr D^α f on the face for all perpendicular |α| ≤ r.
pub fn trace(f: &GridFunction, face: &FaceDescriptor, r: u32, params: Option<&SpaceParams>) -> Result<TraceBundle> {
    if f.n() != face.n {
        return Err(Error::Invalid("face and grid dimensions differ".into()));
    }
    if let Some(p) = params {
        check_trace_window(p, face.l, r)?;
    }
    if f.level() < 4 {
        return Err(Error::GridTooCoarse(format!("trace needs J ≥ 4, got {}", f.level())));
    }
    let free_box = face.face_bbox();
    for (k, &d) in face.free.iter().enumerate() {
        if (free_box.lower[k] - f.bbox().lower[d]).abs() > 1e-12 || (free_box.upper[k] - f.bbox().upper[d]).abs() > 1e-12 {
            return Err(Error::ResolutionMismatch("grid box differs from the face's ambient box".into()));
        }
    }
    let h = f.spacing();
    let dims = f.dims();
    let strides = f.strides();
    let first: Vec<i64> =
        face.fixed.iter().zip(&face.inward).map(|(&(d, c), &s)| face_cell(f, d, c, s)).collect::<Result<_>>()?;
    let tdims: Vec<usize> = face.free.iter().map(|&d| dims[d]).collect();
    let tcount: usize = tdims.iter().product();
    let mut data = BTreeMap::new();
    for alpha in face.perp_indices(r) {
        // per fixed axis: flat offsets and weights of the one-sided stencil
        let mut axis_terms: Vec<Vec<(i64, f64)>> = Vec::new();
        for (k, &(d, _)) in face.fixed.iter().enumerate() {
            let m = alpha[d];
            let count = stencil_nodes(m);
            let s = face.inward[k];
            let nodes: Vec<f64> = (0..count).map(|i| s * (i as f64 + 0.5) * h).collect();
            let w = fornberg(0.0, &nodes, m as usize);
            let mut terms = Vec::with_capacity(count);
            for (i, wi) in w[m as usize].iter().enumerate() {
                let cell = first[k] + if s > 0.0 { i as i64 } else { -(i as i64) };
                if cell < 0 || cell >= dims[d] as i64 {
                    return Err(Error::GridTooCoarse(format!("{count} cells needed across axis {d}")));
                }
                terms.push((cell * strides[d] as i64, *wi));
            }
            axis_terms.push(terms);
        }
        let mut combos: Vec<(i64, f64)> = vec![(0, 1.0)];
        for terms in &axis_terms {
            let mut next = Vec::with_capacity(combos.len() * terms.len());
            for &(o, w) in &combos {
                for &(o2, w2) in terms {
                    next.push((o + o2, w * w2));
                }
            }
            combos = next;
        }
        let vals = f.values();
        let mut out = vec![0.0; tcount];
        for (t, slot) in out.iter_mut().enumerate() {
            let mut rem = t;
            let mut base = 0usize;
            for k in (0..face.free.len()).rev() {
                base += (rem % tdims[k]) * strides[face.free[k]];
                rem /= tdims[k];
            }
            *slot = combos.iter().map(|&(o, w)| w * vals[(base as i64 + o) as usize]).sum();
        }
        let g = if face.l == 0 { GridFunction::point(out[0]) } else { GridFunction::new(free_box.clone(), f.level(), out)? };
        data.insert(alpha, g);
    }
    Ok(TraceBundle { face: face.clone(), r, data })
}

/// Tensor cutoff χ(z) = Π χ*(z_i). χ* ≡ 1 on |z| ≤ a, vanishes for
/// |z| ≥ b, and ∫χ* z^β = 0 for 1 ≤ β ≤ L through a correction living in
/// the annulus a < |z| < b.
#[derive(Clone, Debug, Serialize)]
pub struct CutoffChi {
    pub m: usize,
    #[serde(rename = "L")]
    pub moments: u32,
    pub u: u32,
    pub a: f64,
    pub b: f64,
    pub correction: Vec<f64>,
    pub condition: f64,
    #[serde(skip)]
    pub profile: GridFunction,
}

/// C^N smoothstep t^{N+1} Σ_k C(N+k, k)(1−t)^k.
fn smoothstep(order: u32, t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let s: f64 = (0..=order).map(|k| binomial(order + k, k) * (1.0 - t).powi(k as i32)).sum();
    t.powi(order as i32 + 1) * s
}

impl CutoffChi {
    fn t(&self, z: f64) -> f64 {
        (z.abs() - self.a) / (self.b - self.a)
    }

    fn plateau(&self, z: f64) -> f64 {
        let az = z.abs();
        if az <= self.a {
            1.0
        } else if az >= self.b {
            0.0
        } else {
            1.0 - smoothstep(self.u, self.t(z))
        }
    }

    fn annulus(&self, z: f64) -> f64 {
        let az = z.abs();
        if az <= self.a || az >= self.b {
            0.0
        } else {
            let t = self.t(z);
            (t * (1.0 - t)).powi(self.u as i32 + 1)
        }
    }

    pub fn chi_star(&self, z: f64) -> f64 {
        let mut v = self.plateau(z);
        if z.abs() > self.a && z.abs() < self.b {
            let e = self.annulus(z);
            for (k, c) in self.correction.iter().enumerate() {
                v += c * e * z.powi(k as i32 + 1);
            }
        }
        v
    }

    pub fn chi(&self, z: &[f64]) -> f64 {
        z.iter().map(|&x| self.chi_star(x)).product()
    }

    /// ∫ χ* z^β dz by Gauss–Legendre on the transition pieces.
    pub fn moment(&self, beta: u32) -> f64 {
        integrate_profile(|z| self.chi_star(z) * z.powi(beta as i32), self.a, self.b)
            + if beta % 2 == 0 { 2.0 * self.a.powi(beta as i32 + 1) / (beta as f64 + 1.0) } else { 0.0 }
    }
}

/// ∫ over a < |z| < b.
fn integrate_profile(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64) -> f64 {
    integrate_gl(f, a, b, 8, 16) + integrate_gl(f, -b, -a, 8, 16)
}

/// Cube-face variant: plateau radius 1/8, support radius 1/4.
pub fn build_cutoff_chi(m: usize, moments: u32, u: u32, level: i32) -> Result<CutoffChi> {
    build_cutoff_chi_radii(m, moments, u, level, 0.125, 0.25)
}

/// Cutoff with plateau radius `a` and support radius `b`.
pub fn build_cutoff_chi_radii(m: usize, moments: u32, u: u32, level: i32, a: f64, b: f64) -> Result<CutoffChi> {
    if moments > 4 || u > 3 {
        return Err(Error::Invalid(format!("cutoff limited to L ≤ 4, u ≤ 3 (got L = {moments}, u = {u})")));
    }
    if !(0.0 < a && a < b) {
        return Err(Error::Invalid("cutoff radii must satisfy 0 < a < b".into()));
    }
    let profile_box = Bbox::new(vec![-b], vec![b])?;
    let mut chi = CutoffChi {
        m,
        moments,
        u,
        a,
        b,
        correction: vec![],
        condition: 1.0,
        profile: GridFunction::zeros(profile_box.clone(), level)?,
    };
    let lm = moments as usize;
    if lm > 0 {
        let mut mat = DMatrix::<f64>::zeros(lm, lm);
        let mut rhs = DVector::<f64>::zeros(lm);
        for beta in 1..=lm {
            rhs[beta - 1] = -chi.moment(beta as u32);
            for k in 1..=lm {
                let c = &chi;
                mat[(beta - 1, k - 1)] = integrate_profile(|z| c.annulus(z) * z.powi((k + beta) as i32), a, b);
            }
        }
        let sv = mat.clone().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(cond < 1e12) {
            return Err(Error::SingularMoments(cond));
        }
        let sol = mat.lu().solve(&rhs).ok_or(Error::SingularMoments(cond))?;
        chi.correction = sol.iter().cloned().collect();
        chi.condition = cond;
    }
    let c = chi.clone();
    chi.profile = GridFunction::from_fn(profile_box, level, move |x| c.chi_star(x[0]))?;
    Ok(chi)
}

/// Knobs of the extension operator.
#[derive(Clone, Debug)]
pub struct ExtendOptions {
    /// order of the tangential face system (0 = Haar)
    pub face_u: u32,
    /// χ moment order (default: u)
    pub moments: Option<u32>,
    /// cap on the perpendicular scale 2^j; `None` picks the largest cap whose
    /// plateau still contains every trace stencil node
    pub jcap: Option<u32>,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions { face_u: 0, moments: None, jcap: None }
    }
}

impl ExtendOptions {
    /// Level-independent perpendicular profile χ(z).
    pub fn single_scale() -> Self {
        ExtendOptions { jcap: Some(0), ..Default::default() }
    }
}

/// Hypothesis of the extension operator: u > s > r + (n−l)/p.
pub fn check_extension_window(params: &SpaceParams, l: usize, r: u32, u: u32) -> Result<()> {
    check_trace_window(params, l, r)?;
    if !((u as f64) > params.s) {
        return Err(Error::WaveletOrderTooLow { u, s: params.s });
    }
    Ok(())
}

fn cutoff_for(face: &FaceDescriptor, moments: u32, u: u32, level: i32) -> Result<CutoffChi> {
    if face.plane {
        build_cutoff_chi_radii(face.n - face.l, moments, u, level, 1.0, 2.0)
    } else {
        build_cutoff_chi(face.n - face.l, moments, u, level)
    }
}

/// Largest perpendicular level whose χ plateau covers the trace stencils of
/// a bundle of order r at grid level J.
pub fn auto_jcap(r: u32, level: i32, plateau: f64) -> Result<u32> {
    let reach = (stencil_nodes(r) as f64 - 0.5) * 2f64.powi(-level);
    let cap = (plateau / reach).log2().floor();
    if cap < 0.0 {
        return Err(Error::GridTooCoarse(format!("level {level} too coarse for an order-{r} extension")));
    }
    Ok(cap as u32)
}

/// Level components G_0, …, G_{c−1}, G_{≥c} of face data g (they sum to g).
fn level_components(g: &GridFunction, cap: u32, face_u: u32) -> Result<Vec<GridFunction>> {
    if cap == 0 || g.n() == 0 {
        return Ok(vec![g.clone()]);
    }
    let lam = fwt::forward(g, face_u)?;
    let cap = cap.min(g.level() as u32);
    let mut out = Vec::new();
    let mut rest = g.clone();
    for j in 0..cap {
        let mut part = CoefficientField::new(lam.geometry().clone());
        for (jj, r, v) in lam.iter() {
            if jj == j {
                part.insert(jj, r, v)?;
            }
        }
        let comp = fwt::inverse(&part, g.bbox(), g.level(), face_u)?;
        rest = rest.zip_map(&comp, |a, b| a - b)?;
        out.push(comp);
    }
    out.push(rest);
    Ok(out)
}

/// Ext: Σ_α (1/α!) z^α Σ_j G_{α,j}(y) χ(2^{min(j,cap)} z) on the ambient grid.
pub fn extend(bundle: &TraceBundle, params: Option<&SpaceParams>, u: u32, opts: &ExtendOptions) -> Result<GridFunction> {
    let face = &bundle.face;
    if let Some(p) = params {
        check_extension_window(p, face.l, bundle.r, u)?;
    }
    for alpha in bundle.data.keys() {
        if !face.is_perpendicular(alpha) || norm_order(alpha) > bundle.r {
            return Err(Error::Invalid(format!("α = {alpha:?} does not belong to an order-{} bundle", bundle.r)));
        }
    }
    let level = match bundle.level() {
        Some(l) => l,
        None => return Err(Error::Invalid("a point face needs the target level; use extend_on".into())),
    };
    extend_on(bundle, level, u, opts)
}

/// [`extend`] with an explicit target level (needed for point faces).
pub fn extend_on(bundle: &TraceBundle, level: i32, u: u32, opts: &ExtendOptions) -> Result<GridFunction> {
    let face = &bundle.face;
    let chi = cutoff_for(face, opts.moments.unwrap_or(u).min(4), u.min(3), level.max(1))?;
    let auto = auto_jcap(bundle.r, level, chi.a)?;
    let cap = opts.jcap.map_or(auto, |c| c.min(auto));
    let mut out = GridFunction::zeros(face.ambient.clone(), level)?;
    let dims = out.dims().to_vec();
    let strides = out.strides();
    let h = out.spacing();
    let perp = face.perp_axes();
    let pdims: Vec<usize> = perp.iter().map(|&d| dims[d]).collect();
    let pcount: usize = pdims.iter().product();
    let tdims: Vec<usize> = face.free.iter().map(|&d| dims[d]).collect();
    let tcount: usize = tdims.iter().product();
    let toff: Vec<usize> = (0..tcount)
        .map(|t| {
            let mut rem = t;
            let mut o = 0;
            for k in (0..tdims.len()).rev() {
                o += (rem % tdims[k]) * strides[face.free[k]];
                rem /= tdims[k];
            }
            o
        })
        .collect();
    // perpendicular offsets z for every perpendicular cell
    let zs: Vec<(usize, Vec<f64>)> = (0..pcount)
        .map(|pc| {
            let mut rem = pc;
            let mut idx = vec![0usize; perp.len()];
            for k in (0..perp.len()).rev() {
                idx[k] = rem % pdims[k];
                rem /= pdims[k];
            }
            let off: usize = idx.iter().zip(&perp).map(|(i, &d)| i * strides[d]).sum();
            let z: Vec<f64> =
                idx.iter().zip(&face.fixed).map(|(&i, &(d, c))| face.ambient.lower[d] + (i as f64 + 0.5) * h - c).collect();
            (off, z)
        })
        .collect();
    let vals = out.values_mut();
    for (alpha, g) in &bundle.data {
        if g.max_abs() == 0.0 {
            continue;
        }
        let inv_fact = 1.0 / alpha_factorial(alpha);
        let comps = level_components(g, cap, opts.face_u)?;
        for (c, comp) in comps.iter().enumerate() {
            let scale = 2f64.powi(c as i32);
            let cv = comp.values();
            for (off, z) in &zs {
                let mut w = chi.chi(&z.iter().map(|x| x * scale).collect::<Vec<_>>());
                if w == 0.0 {
                    continue;
                }
                for (k, &(d, _)) in face.fixed.iter().enumerate() {
                    w *= z[k].powi(alpha[d] as i32);
                }
                w *= inv_fact;
                for (t, &to) in toff.iter().enumerate() {
                    vals[off + to] += w * cv[t];
                }
            }
        }
    }
    Ok(out)
}

/// Inductive Ext_Γ: faces in the given order (ascending dimension); each
/// face extends its data minus the traces already produced by the
/// extensions built before it.
pub fn extend_all(bundles: &[TraceBundle], level: i32, u: u32, opts: &ExtendOptions) -> Result<GridFunction> {
    let mut order_of: BTreeMap<usize, u32> = BTreeMap::new();
    let mut last_l = 0;
    let ambient = match bundles.first() {
        Some(b) => b.face.ambient.clone(),
        None => return Err(Error::Invalid("no bundles".into())),
    };
    for b in bundles {
        if let Some(&r) = order_of.get(&b.face.l) {
            if r != b.r {
                return Err(Error::Invalid(format!("inconsistent orders on faces of dimension {}: {r} vs {}", b.face.l, b.r)));
            }
        }
        if b.face.l < last_l {
            return Err(Error::Invalid("bundles must be ordered by face dimension".into()));
        }
        if b.face.ambient != ambient {
            return Err(Error::Invalid("bundles live on different ambient boxes".into()));
        }
        last_l = b.face.l;
        order_of.insert(b.face.l, b.r);
    }
    let mut total = GridFunction::zeros(ambient, level)?;
    for b in bundles {
        let induced = trace(&total, &b.face, b.r, None)?;
        let corrected = b.sub(&induced)?;
        let ext = extend_on(&corrected, level, u, opts)?;
        total = total.zip_map(&ext, |a, c| a + c)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn face_enumeration() {
        assert_eq!(FaceDescriptor::cube_faces(2, 0).len(), 4);
        assert_eq!(FaceDescriptor::cube_faces(2, 1).len(), 4);
        assert_eq!(FaceDescriptor::cube_faces(3, 1).len(), 12);
        assert_eq!(FaceDescriptor::cube_faces(3, 2).len(), 6);
        let bottom = FaceDescriptor::cube_faces(2, 1).into_iter().find(|f| f.fixed == vec![(1, 0.0)]).unwrap();
        assert_eq!(bottom.free, vec![0]);
        assert_eq!(bottom.perp_indices(1), vec![vec![0, 0], vec![0, 1]]);
    }

    #[test]
    fn polynomial_trace() {
        let f = GridFunction::from_fn(Bbox::unit(2), 6, |x| x[0] + x[1]).unwrap();
        let bottom = FaceDescriptor::cube_faces(2, 1).into_iter().find(|f| f.fixed == vec![(1, 0.0)]).unwrap();
        let b = trace(&f, &bottom, 1, None).unwrap();
        let g0 = &b.data[&vec![0, 0]];
        let g1 = &b.data[&vec![0, 1]];
        for (i, v) in g0.values().iter().enumerate() {
            let x = (i as f64 + 0.5) / 64.0;
            assert!((v - x).abs() < 1e-12);
        }
        assert!(g1.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        // top face: inward is −y
        let top = FaceDescriptor::cube_faces(2, 1).into_iter().find(|f| f.fixed == vec![(1, 1.0)]).unwrap();
        let b = trace(&f, &top, 1, None).unwrap();
        assert!(b.data[&vec![0, 1]].values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        // corner
        let corner = FaceDescriptor::cube_faces(2, 0).into_iter().find(|f| f.fixed == vec![(0, 1.0), (1, 1.0)]).unwrap();
        let b = trace(&f, &corner, 0, None).unwrap();
        assert!((b.data[&vec![0, 0]].values()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trace_window_gate() {
        let f = GridFunction::zeros(Bbox::unit(2), 5).unwrap();
        let face = FaceDescriptor::cube_face(2, 1, 0).unwrap();
        let p = SpaceParams::new(2, 0.5, 2.0, 2.0).unwrap();
        assert_eq!(trace(&f, &face, 0, Some(&p)).unwrap_err(), Error::TraceWindow { l: 1, r: 0 });
        let p = SpaceParams::new(2, 0.6, 2.0, 2.0).unwrap();
        assert!(trace(&f, &face, 0, Some(&p)).is_ok());
    }

    #[test]
    fn cutoff_moments_vanish() {
        for u in 0..=3 {
            for l in 0..=4 {
                let chi = build_cutoff_chi(1, l, u, 8).unwrap();
                assert_eq!(chi.chi_star(0.0), 1.0);
                assert_eq!(chi.chi_star(0.1249), 1.0);
                assert_eq!(chi.chi_star(0.26), 0.0);
                for beta in 1..=l {
                    // independent oracle: fine Simpson rule on the full support
                    let nn = 20000;
                    let hh = 0.5 / nn as f64;
                    let mut s = 0.0;
                    for i in 0..=nn {
                        let z = -0.25 + i as f64 * hh;
                        let w = if i == 0 || i == nn { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                        s += w * chi.chi_star(z) * z.powi(beta as i32);
                    }
                    s *= hh / 3.0;
                    assert!(s.abs() < 1e-9, "u={u} L={l} β={beta}: {s}");
                    assert!(chi.moment(beta).abs() < 1e-10);
                }
                assert!(chi.moment(0) > 0.0);
            }
        }
    }

    #[test]
    fn trace_of_extension_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for face in FaceDescriptor::cube_faces(2, 1) {
            let mut b = TraceBundle::zeros(&face, 1, 8).unwrap();
            for g in b.data.values_mut() {
                for v in g.values_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            let f = extend(&b, None, 2, &ExtendOptions::default()).unwrap();
            let back = trace(&f, &face, 1, None).unwrap();
            assert!(back.max_abs_diff(&b).unwrap() < 1e-9 * b.max_abs());
        }
    }

    #[test]
    fn single_block_extension() {
        // g_0 = one Haar wavelet at level 2 on the bottom edge
        let face = FaceDescriptor::cube_faces(2, 1).into_iter().find(|f| f.fixed == vec![(1, 0.0)]).unwrap();
        let level = 8;
        let g = GridFunction::from_fn(Bbox::unit(1), level, |x| {
            let t = 4.0 * x[0] - 1.0;
            if (0.0..0.5).contains(&t) { 2.0 } else if (0.5..1.0).contains(&t) { -2.0 } else { 0.0 }
        })
        .unwrap();
        let mut b = TraceBundle::zeros(&face, 0, level).unwrap();
        b.data.insert(vec![0, 0], g.clone());
        let f = extend(&b, None, 1, &ExtendOptions::default()).unwrap();
        let chi = build_cutoff_chi(1, 1, 1, level).unwrap();
        let want = GridFunction::from_fn(Bbox::unit(2), level, |x| {
            let t = 4.0 * x[0] - 1.0;
            let phi = if (0.0..0.5).contains(&t) { 2.0 } else if (0.5..1.0).contains(&t) { -2.0 } else { 0.0 };
            phi * chi.chi_star(4.0 * x[1])
        })
        .unwrap();
        assert!(f.zip_map(&want, |a, b| a - b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn perpendicular_decoupling_and_zero() {
        let face = FaceDescriptor::cube_face(2, 1, 0).unwrap();
        let mut b = TraceBundle::zeros(&face, 1, 7).unwrap();
        let f = extend(&b, None, 2, &ExtendOptions::default()).unwrap();
        assert_eq!(f.max_abs(), 0.0);
        let perp = face.perp_indices(1)[1].clone();
        b.data.insert(perp, GridFunction::from_fn(face.face_bbox(), 7, |y| (3.0 * y[0]).sin()).unwrap());
        let f = extend(&b, None, 2, &ExtendOptions::default()).unwrap();
        let t0 = trace(&f, &face, 0, None).unwrap();
        assert!(t0.max_abs() < 1e-12);
    }

    #[test]
    fn opposite_faces_do_not_interact() {
        let faces = FaceDescriptor::cube_faces(2, 1);
        let mut b = TraceBundle::zeros(&faces[0], 1, 7).unwrap();
        for g in b.data.values_mut() {
            *g = GridFunction::from_fn(faces[0].face_bbox(), 7, |y| 1.0 + y[0]).unwrap();
        }
        let f = extend(&b, None, 2, &ExtendOptions::default()).unwrap();
        let opposite = faces.iter().find(|o| o.free == faces[0].free && o.fixed != faces[0].fixed).unwrap();
        assert_eq!(trace(&f, opposite, 1, None).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn extend_all_reproduces_compatible_bundles() {
        let level = 8;
        let f = GridFunction::from_fn(Bbox::unit(2), level, |x| (1.3 * x[0] - 0.7 * x[1]).sin() + x[0] * x[1]).unwrap();
        let mut bundles = Vec::new();
        for face in FaceDescriptor::all_cube_faces(2, [0, 1]) {
            let r = if face.l == 0 { 1 } else { 0 };
            bundles.push(trace(&f, &face, r, None).unwrap());
        }
        let g = extend_all(&bundles, level, 2, &ExtendOptions::single_scale()).unwrap();
        let tol = 5.0 * 2f64.powi(-level) * f.max_abs();
        for b in &bundles {
            let back = trace(&g, &b.face, b.r, None).unwrap();
            let err = back.max_abs_diff(b).unwrap();
            assert!(err < tol, "face {} err {err}", b.face.label());
        }
        let zero: Vec<TraceBundle> = bundles.iter().map(|b| TraceBundle::zeros(&b.face, b.r, level).unwrap()).collect();
        assert_eq!(extend_all(&zero, level, 2, &ExtendOptions::single_scale()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bundle_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let face = FaceDescriptor::cube_face(2, 1, 2).unwrap();
        let f = GridFunction::from_fn(Bbox::unit(2), 5, |x| x[0] * x[1]).unwrap();
        let b = trace(&f, &face, 1, None).unwrap();
        let path = dir.path().join("b.json");
        b.write(&path).unwrap();
        let back = TraceBundle::read(&path).unwrap();
        assert_eq!(back, b);
    }
}
