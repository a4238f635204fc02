//! Whitney decompositions and the point lattices derived from them.
//!
//! Cubes are corner-anchored dyadic cells `[k 2^{-ν}, (k+1) 2^{-ν}]` so that
//! the levels nest. All selection geometry is done in integer units of
//! `2^{-max_level}`, so the predicates are exact.

use crate::error::{Error, Result};
use crate::grid::Bbox;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainKind {
    FullSpaceBox,
    OpenUnitCube,
    /// ℝⁿ minus {x_{l+1} = … = x_n = 0}, truncated to the bbox.
    PlaneComplement { l: usize },
    /// ℝⁿ minus a closed face of the unit cube; `fixed[d]` is the pinned
    /// coordinate (0 or 1) or `None` for a free axis.
    PolyhedronFaceComplement { fixed: Vec<Option<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    #[serde(flatten)]
    pub kind: DomainKind,
    pub n: usize,
    pub bbox: Bbox,
}

impl DomainDescriptor {
    pub fn unit_cube(n: usize) -> Self {
        DomainDescriptor { kind: DomainKind::OpenUnitCube, n, bbox: Bbox::unit(n) }
    }

    pub fn plane_complement(n: usize, l: usize, bbox: Option<Bbox>) -> Result<Self> {
        if l >= n {
            return Err(Error::Invalid(format!("plane dimension {l} must be < n = {n}")));
        }
        Ok(DomainDescriptor { kind: DomainKind::PlaneComplement { l }, n, bbox: bbox.unwrap_or_else(|| Bbox::cube(n, -1.0, 1.0)) })
    }

    pub fn full_space(bbox: Bbox) -> Self {
        DomainDescriptor { kind: DomainKind::FullSpaceBox, n: bbox.dim(), bbox }
    }

    pub fn face_complement(fixed: Vec<Option<f64>>, bbox: Option<Bbox>) -> Self {
        let n = fixed.len();
        DomainDescriptor {
            kind: DomainKind::PolyhedronFaceComplement { fixed },
            n,
            bbox: bbox.unwrap_or_else(|| Bbox::cube(n, -1.0, 2.0)),
        }
    }

    pub fn has_boundary(&self) -> bool {
        !matches!(self.kind, DomainKind::FullSpaceBox)
    }

    /// Euclidean distance from a point to Γ (None for the full-space box).
    pub fn distance(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            DomainKind::FullSpaceBox => None,
            DomainKind::OpenUnitCube => Some(x.iter().map(|&t| t.min(1.0 - t)).fold(f64::INFINITY, f64::min).max(0.0)),
            DomainKind::PlaneComplement { l } => Some(x[*l..].iter().map(|t| t * t).sum::<f64>().sqrt()),
            DomainKind::PolyhedronFaceComplement { fixed } => Some(
                fixed
                    .iter()
                    .zip(x)
                    .map(|(f, &t)| match f {
                        Some(c) => (t - c).powi(2),
                        None => (t.min(0.0) - 0.0).powi(2) + (t - 1.0).max(0.0).powi(2),
                    })
                    .sum::<f64>()
                    .sqrt(),
            ),
        }
    }

    /// Distance from the closed box [lo, hi] to Γ; 0 when the box meets or
    /// leaves the domain (None for the full-space box).
    pub fn box_distance(&self, lo: &[f64], hi: &[f64]) -> Option<f64> {
        let gap = |a: f64, b: f64, c: f64, d: f64| (c - b).max(a - d).max(0.0);
        match &self.kind {
            DomainKind::FullSpaceBox => None,
            DomainKind::OpenUnitCube => {
                if lo.iter().any(|&t| t <= 0.0) || hi.iter().any(|&t| t >= 1.0) {
                    return Some(0.0);
                }
                Some(lo.iter().zip(hi).map(|(&a, &b)| a.min(1.0 - b)).fold(f64::INFINITY, f64::min))
            }
            DomainKind::PlaneComplement { l } => {
                Some((*l..self.n).map(|d| gap(lo[d], hi[d], 0.0, 0.0).powi(2)).sum::<f64>().sqrt())
            }
            DomainKind::PolyhedronFaceComplement { fixed } => Some(
                fixed
                    .iter()
                    .enumerate()
                    .map(|(d, f)| {
                        let (c0, c1) = f.map_or((0.0, 1.0), |c| (c, c));
                        gap(lo[d], hi[d], c0, c1).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt(),
            ),
        }
    }

    pub fn inside(&self, x: &[f64]) -> bool {
        match &self.kind {
            DomainKind::OpenUnitCube => x.iter().all(|&t| t > 0.0 && t < 1.0),
            _ => self.distance(x).map_or(true, |d| d > 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CubeFlag {
    Degenerate,
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCube {
    pub nu: u32,
    /// corner index: the cube is [m 2^{-ν}, (m+1) 2^{-ν}]
    pub m: Vec<i64>,
    pub dist: Option<f64>,
    pub flags: Vec<CubeFlag>,
}

impl WhitneyCube {
    pub fn side(&self) -> f64 {
        2f64.powi(-(self.nu as i32))
    }
    pub fn lower(&self) -> Vec<f64> {
        self.m.iter().map(|&k| k as f64 * self.side()).collect()
    }
    pub fn upper(&self) -> Vec<f64> {
        self.m.iter().map(|&k| (k + 1) as f64 * self.side()).collect()
    }
    pub fn center(&self) -> Vec<f64> {
        self.m.iter().map(|&k| (k as f64 + 0.5) * self.side()).collect()
    }
    pub fn diam(&self) -> f64 {
        self.side() * (self.m.len() as f64).sqrt()
    }
    /// Concentric double Q¹.
    pub fn double(&self) -> Bbox {
        let c = self.center();
        let s = self.side();
        Bbox { lower: c.iter().map(|x| x - s).collect(), upper: c.iter().map(|x| x + s).collect() }
    }
    pub fn is_truncated(&self) -> bool {
        self.flags.contains(&CubeFlag::Truncated)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyDecomposition {
    pub domain: DomainDescriptor,
    pub max_level: u32,
    pub cubes: Vec<WhitneyCube>,
    /// cells at max_level still too close to Γ (selection would occur deeper)
    pub unresolved: usize,
    /// cells never selectable because they are too far from Γ
    pub too_far: usize,
    pub degenerate: bool,
}

impl WhitneyDecomposition {
    pub fn finest_level(&self) -> u32 {
        self.cubes.iter().map(|c| c.nu).max().unwrap_or(0)
    }
    pub fn coarsest_level(&self) -> u32 {
        self.cubes.iter().map(|c| c.nu).min().unwrap_or(0)
    }
    pub fn level_counts(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for c in &self.cubes {
            *out.entry(c.nu).or_insert(0) += 1;
        }
        out
    }
}

/// Γ as integer geometry at scale 2^{max_level}.
enum IntBoundary {
    CubeShell { hi: i64 },
    Boxes(Vec<(i64, i64)>),
}

fn to_units(x: f64, scale: f64) -> Result<i64> {
    let v = x * scale;
    if (v - v.round()).abs() > 1e-9 {
        return Err(Error::Invalid(format!("coordinate {x} is not dyadic at the working scale")));
    }
    Ok(v.round() as i64)
}

impl IntBoundary {
    fn from_domain(dom: &DomainDescriptor, scale: f64) -> Result<Option<Self>> {
        Ok(match &dom.kind {
            DomainKind::FullSpaceBox => None,
            DomainKind::OpenUnitCube => Some(IntBoundary::CubeShell { hi: to_units(1.0, scale)? }),
            DomainKind::PlaneComplement { l } => {
                let mut iv = Vec::new();
                for d in 0..dom.n {
                    if d < *l {
                        iv.push((to_units(dom.bbox.lower[d], scale)?, to_units(dom.bbox.upper[d], scale)?));
                    } else {
                        iv.push((0, 0));
                    }
                }
                Some(IntBoundary::Boxes(iv))
            }
            DomainKind::PolyhedronFaceComplement { fixed } => {
                let mut iv = Vec::new();
                for f in fixed {
                    iv.push(match f {
                        Some(c) => {
                            let u = to_units(*c, scale)?;
                            (u, u)
                        }
                        None => (0, to_units(1.0, scale)?),
                    });
                }
                Some(IntBoundary::Boxes(iv))
            }
        })
    }

    /// Squared distance from the closed cell [a, b] to Γ, in squared units.
    fn dist2(&self, a: &[i64], b: &[i64]) -> i128 {
        match self {
            IntBoundary::CubeShell { hi } => {
                let d = a.iter().zip(b).map(|(&lo, &up)| lo.min(hi - up)).min().unwrap_or(0).max(0);
                (d as i128) * (d as i128)
            }
            IntBoundary::Boxes(iv) => iv
                .iter()
                .zip(a.iter().zip(b))
                .map(|(&(lo, hi), (&ca, &cb))| {
                    let gap = (lo - cb).max(ca - hi).max(0) as i128;
                    gap * gap
                })
                .sum(),
        }
    }
}

/// Greedy Whitney selection: a cell is selected iff
/// diam ≤ dist(Q, Γ) ≤ 4·diam and no ancestor was selected.
pub fn whitney_decompose(domain: &DomainDescriptor, max_level: u32) -> Result<WhitneyDecomposition> {
    if max_level < 1 {
        return Err(Error::Invalid("max_level must be >= 1".into()));
    }
    if max_level > 24 {
        return Err(Error::Invalid("max_level above 24 is not supported".into()));
    }
    let n = domain.n;
    let scale = 2f64.powi(max_level as i32);
    let lo: Vec<i64> = domain.bbox.lower.iter().map(|&x| to_units(x, 1.0)).collect::<Result<_>>()
        .map_err(|_| Error::Invalid("bbox corners must be integers".into()))?;
    let hi: Vec<i64> = domain.bbox.upper.iter().map(|&x| to_units(x, 1.0)).collect::<Result<_>>()
        .map_err(|_| Error::Invalid("bbox corners must be integers".into()))?;

    // level-0 tiling of the bbox
    let mut level0 = vec![vec![]];
    for d in 0..n {
        let mut next = Vec::new();
        for prefix in &level0 {
            for k in lo[d]..hi[d] {
                let mut p: Vec<i64> = prefix.clone();
                p.push(k);
                next.push(p);
            }
        }
        level0 = next;
    }

    let boundary = IntBoundary::from_domain(domain, scale)?;
    let Some(boundary) = boundary else {
        let cubes = level0
            .into_iter()
            .map(|m| WhitneyCube { nu: 0, m, dist: None, flags: vec![CubeFlag::Degenerate] })
            .collect();
        return Ok(WhitneyDecomposition {
            domain: domain.clone(),
            max_level,
            cubes,
            unresolved: 0,
            too_far: 0,
            degenerate: true,
        });
    };

    let unbounded = !matches!(domain.kind, DomainKind::OpenUnitCube);
    let mut cubes = Vec::new();
    let mut candidates = level0;
    let mut unresolved = 0;
    let mut too_far = 0;
    for nu in 0..=max_level {
        candidates.sort();
        let side = 1i64 << (max_level - nu);
        let diam2 = (n as i128) * (side as i128) * (side as i128);
        let mut next = Vec::new();
        for m in candidates {
            let a: Vec<i64> = m.iter().map(|k| k * side).collect();
            let b: Vec<i64> = a.iter().map(|x| x + side).collect();
            let d2 = boundary.dist2(&a, &b);
            if d2 >= diam2 && d2 <= 16 * diam2 {
                let mut flags = Vec::new();
                if unbounded
                    && (0..n).any(|d| m[d] << (max_level - nu) == lo[d] << max_level || (m[d] + 1) << (max_level - nu) == hi[d] << max_level)
                {
                    flags.push(CubeFlag::Truncated);
                }
                cubes.push(WhitneyCube { nu, m, dist: Some((d2 as f64).sqrt() / scale), flags });
            } else if d2 < diam2 {
                if nu == max_level {
                    unresolved += 1;
                } else {
                    for child in 0..(1usize << n) {
                        next.push((0..n).map(|d| 2 * m[d] + ((child >> (n - 1 - d)) & 1) as i64).collect());
                    }
                }
            } else {
                too_far += 1;
            }
        }
        candidates = next;
    }
    Ok(WhitneyDecomposition { domain: domain.clone(), max_level, cubes, unresolved, too_far, degenerate: false })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct WhitneyVerification {
    pub disjoint_violations: usize,
    pub neighbor_violations: usize,
    pub sandwich_violations: usize,
    pub coverage_violations: usize,
    pub checked_midpoints: usize,
}

impl WhitneyVerification {
    pub fn total(&self) -> usize {
        self.disjoint_violations + self.neighbor_violations + self.sandwich_violations + self.coverage_violations
    }
}

fn int_box(c: &WhitneyCube, top: u32) -> (Vec<i64>, Vec<i64>) {
    let side = 1i64 << (top - c.nu);
    let a: Vec<i64> = c.m.iter().map(|k| k * side).collect();
    let b = a.iter().map(|x| x + side).collect();
    (a, b)
}

/// Exhaustive certificate for the Whitney invariants; `jmax` is the
/// midpoint resolution used for the coverage check.
pub fn verify_whitney(dec: &WhitneyDecomposition, jmax: u32) -> Result<WhitneyVerification> {
    let mut v = WhitneyVerification::default();
    let top = dec.max_level.max(jmax);
    let boxes: Vec<_> = dec.cubes.iter().map(|c| int_box(c, top)).collect();
    let n = dec.domain.n;
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let (a1, b1) = &boxes[i];
            let (a2, b2) = &boxes[j];
            let open_overlap = (0..n).all(|d| a1[d] < b2[d] && a2[d] < b1[d]);
            let closed_touch = (0..n).all(|d| a1[d] <= b2[d] && a2[d] <= b1[d]);
            if open_overlap {
                v.disjoint_violations += 1;
            }
            if closed_touch && (dec.cubes[i].nu as i64 - dec.cubes[j].nu as i64).abs() > 1 {
                v.neighbor_violations += 1;
            }
        }
    }
    if dec.degenerate {
        return Ok(v);
    }
    let scale = 2f64.powi(top as i32);
    let boundary = IntBoundary::from_domain(&dec.domain, scale)?.expect("non-degenerate");
    for (c, (a, b)) in dec.cubes.iter().zip(&boxes) {
        let d2 = boundary.dist2(a, b) as f64;
        let side = (b[0] - a[0]) as f64;
        let diam2 = n as f64 * side * side;
        if d2 < diam2 || d2 > 16.0 * diam2 {
            v.sandwich_violations += 1;
        }
        let _ = c;
    }
    // coverage: midpoints at resolution jmax far enough from Γ
    let selected: HashSet<(u32, Vec<i64>)> =
        dec.cubes.iter().filter(|c| !c.is_truncated()).map(|c| (c.nu, c.m.clone())).collect();
    let truncated: Vec<&WhitneyCube> = dec.cubes.iter().filter(|c| c.is_truncated()).collect();
    let margin = 2f64.powi(-(dec.max_level as i32) + 2) * (n as f64).sqrt();
    let h = 2f64.powi(-(jmax as i32));
    let bb = &dec.domain.bbox;
    let dims: Vec<usize> = (0..n).map(|d| ((bb.upper[d] - bb.lower[d]) / h).round() as usize).collect();
    let total: usize = dims.iter().product();
    let mut x = vec![0.0; n];
    for flat in 0..total {
        let mut rem = flat;
        for d in (0..n).rev() {
            x[d] = bb.lower[d] + ((rem % dims[d]) as f64 + 0.5) * h;
            rem /= dims[d];
        }
        if !dec.domain.inside(&x) {
            continue;
        }
        let dist = dec.domain.distance(&x).unwrap();
        if dist <= margin {
            continue;
        }
        if truncated.iter().any(|c| {
            let (lo, up) = (c.lower(), c.upper());
            (0..n).all(|d| x[d] >= lo[d] && x[d] <= up[d])
        }) {
            continue;
        }
        v.checked_midpoints += 1;
        let covered = (0..=dec.max_level).any(|nu| {
            let s = 2f64.powi(nu as i32);
            let m: Vec<i64> = x.iter().map(|t| (t * s).floor() as i64).collect();
            selected.contains(&(nu, m))
        });
        if !covered {
            v.coverage_violations += 1;
        }
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKind {
    Interior,
    Closure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticePoint {
    pub j: u32,
    pub r: usize,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLattice {
    pub kind: LatticeKind,
    pub n: usize,
    pub bbox: Bbox,
    /// coordinates per level, indexed by r
    pub levels: BTreeMap<u32, Vec<Vec<f64>>>,
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
}

impl PointLattice {
    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        self.levels
            .iter()
            .flat_map(|(&j, pts)| pts.iter().enumerate().map(move |(r, x)| LatticePoint { j, r, x: x.clone() }))
    }
    pub fn len(&self) -> usize {
        self.levels.values().map(|v| v.len()).sum()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn count_at(&self, j: u32) -> usize {
        self.levels.get(&j).map_or(0, |v| v.len())
    }
}

fn subcube_centers(dec: &WhitneyDecomposition, jmax: u32) -> BTreeMap<u32, Vec<Vec<f64>>> {
    let n = dec.domain.n;
    let mut levels: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
    for j in 0..=jmax {
        let mut pts = Vec::new();
        for c in dec.cubes.iter().filter(|c| c.nu <= j) {
            let f = 1i64 << (j - c.nu);
            let count = (f as usize).pow(n as u32);
            let s = 2f64.powi(-(j as i32));
            for t in 0..count {
                let mut rem = t;
                let mut x = vec![0.0; n];
                for d in (0..n).rev() {
                    let off = (rem % f as usize) as i64;
                    rem /= f as usize;
                    x[d] = ((c.m[d] * f + off) as f64 + 0.5) * s;
                }
                pts.push(x);
            }
        }
        if !pts.is_empty() {
            levels.insert(j, pts);
        }
    }
    levels
}

/// Minimal same-level separation in units of 2^{-j}, via a hash of
/// half-cell integer coordinates.
fn separation(levels: &BTreeMap<u32, Vec<Vec<f64>>>) -> f64 {
    let mut best = f64::INFINITY;
    for (&j, pts) in levels {
        let s = 2f64.powi(j as i32 + 1);
        let keys: Vec<Vec<i64>> = pts.iter().map(|x| x.iter().map(|t| (t * s).round() as i64).collect()).collect();
        let set: HashSet<&Vec<i64>> = keys.iter().collect();
        let n = keys.first().map_or(0, |k| k.len());
        let offsets: Vec<Vec<i64>> = {
            let mut o = vec![vec![]];
            for _ in 0..n {
                o = o.into_iter().flat_map(|p: Vec<i64>| (-2..=2).map(move |t| { let mut q = p.clone(); q.push(t); q })).collect();
            }
            o.into_iter().filter(|v| v.iter().any(|&t| t != 0)).collect()
        };
        let mut found = false;
        for k in &keys {
            for off in &offsets {
                let nb: Vec<i64> = k.iter().zip(off).map(|(a, b)| a + b).collect();
                if set.contains(&nb) {
                    found = true;
                    let d = (off.iter().map(|t| (t * t) as f64).sum::<f64>()).sqrt() / 2.0;
                    best = best.min(d);
                }
            }
        }
        if !found && pts.len() > 1 {
            // sparse level: fall back to a direct scan
            let scale = 2f64.powi(j as i32);
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    let d: f64 = pts[a].iter().zip(&pts[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    best = best.min(d * scale);
                }
            }
        }
    }
    if best.is_infinite() {
        1.0
    } else {
        best
    }
}

/// Subcube centers of every Whitney cube at every level up to jmax.
pub fn interior_lattice(dec: &WhitneyDecomposition, jmax: u32) -> Result<PointLattice> {
    if jmax < dec.finest_level() {
        return Err(Error::Invalid(format!("jmax {jmax} below the finest Whitney level {}", dec.finest_level())));
    }
    let levels = subcube_centers(dec, jmax);
    let c2 = 0.5;
    let c3 = if dec.degenerate {
        None
    } else {
        let mut best = f64::INFINITY;
        for (&j, pts) in &levels {
            let s = 2f64.powi(j as i32);
            for x in pts {
                best = best.min(dec.domain.distance(x).unwrap() * s - c2);
            }
        }
        Some(best)
    };
    Ok(PointLattice { kind: LatticeKind::Interior, n: dec.domain.n, bbox: dec.domain.bbox.clone(), c1: separation(&levels), c2, c3, levels })
}

/// Interior lattice of the unit cube plus the 2^{-j}ℤⁿ points on ∂Q.
pub fn closure_lattice(domain: &DomainDescriptor, jmax: u32) -> Result<PointLattice> {
    if domain.kind != DomainKind::OpenUnitCube {
        return Err(Error::Invalid("closure lattice requires the open unit cube".into()));
    }
    let n = domain.n;
    let dec = whitney_decompose(domain, jmax.max(1))?;
    let mut levels = subcube_centers(&dec, jmax);
    for j in 0..=jmax {
        let k = 1i64 << j;
        let per_axis = (k + 1) as usize;
        let total = per_axis.pow(n as u32);
        let s = 2f64.powi(-(j as i32));
        let entry = levels.entry(j).or_default();
        for t in 0..total {
            let mut rem = t;
            let mut idx = vec![0i64; n];
            for d in (0..n).rev() {
                idx[d] = (rem % per_axis) as i64;
                rem /= per_axis;
            }
            if idx.iter().any(|&i| i == 0 || i == k) {
                entry.push(idx.iter().map(|&i| i as f64 * s).collect());
            }
        }
    }
    Ok(PointLattice { kind: LatticeKind::Closure, n, bbox: domain.bbox.clone(), c1: separation(&levels), c2: 0.5, c3: None, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: scan every dyadic cell and apply the predicate with
    /// the ancestor rule.
    fn oracle(domain: &DomainDescriptor, max_level: u32) -> Vec<(u32, Vec<i64>)> {
        let n = domain.n;
        let mut out: Vec<(u32, Vec<i64>)> = Vec::new();
        for nu in 0..=max_level {
            let s = 2f64.powi(nu as i32);
            let counts: Vec<i64> = (0..n).map(|d| (domain.bbox.width(d) * s) as i64).collect();
            let total: i64 = counts.iter().product();
            for t in 0..total {
                let mut rem = t;
                let mut m = vec![0i64; n];
                for d in (0..n).rev() {
                    m[d] = (domain.bbox.lower[d] * s) as i64 + rem % counts[d];
                    rem /= counts[d];
                }
                // distance of the closed cell to Γ, sampled finely on the cell
                let side = 1.0 / s;
                let a: Vec<f64> = m.iter().map(|&k| k as f64 * side).collect();
                let dist = cell_distance(domain, &a, side);
                let diam = side * (n as f64).sqrt();
                let ok = dist >= diam - 1e-12 && dist <= 4.0 * diam + 1e-12;
                let has_ancestor = out.iter().any(|(mu, mm)| {
                    *mu < nu && m.iter().zip(mm).all(|(&k, &p)| k >> (nu - mu) == p)
                });
                if ok && !has_ancestor {
                    out.push((nu, m));
                }
            }
        }
        out
    }

    fn cell_distance(domain: &DomainDescriptor, a: &[f64], side: f64) -> f64 {
        match &domain.kind {
            DomainKind::OpenUnitCube => a.iter().map(|&t| t.min(1.0 - t - side)).fold(f64::INFINITY, f64::min),
            DomainKind::PlaneComplement { l } => a[*l..]
                .iter()
                .map(|&t| if t >= 0.0 { t } else { (-(t + side)).max(0.0) })
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn interval_matches_exhaustive_scan() {
        let dom = DomainDescriptor::unit_cube(1);
        let dec = whitney_decompose(&dom, 6).unwrap();
        let mut got: Vec<(u32, Vec<i64>)> = dec.cubes.iter().map(|c| (c.nu, c.m.clone())).collect();
        let mut want = oracle(&dom, 6);
        got.sort();
        want.sort();
        assert_eq!(got, want);
        // the coarsest cubes are the two adjacent to 1/2
        let coarse = dec.coarsest_level();
        let mids: Vec<f64> = dec.cubes.iter().filter(|c| c.nu == coarse).map(|c| c.center()[0]).collect();
        assert_eq!(mids.len(), 2);
        assert!(mids.iter().all(|m| (m - 0.5).abs() < 0.25));
        // symmetry about 1/2
        let left = dec.cubes.iter().filter(|c| c.center()[0] < 0.5).count();
        assert_eq!(2 * left, dec.cubes.len());
    }

    #[test]
    fn plane_complement_matches_exhaustive_scan() {
        let dom = DomainDescriptor::plane_complement(2, 1, None).unwrap();
        let dec = whitney_decompose(&dom, 5).unwrap();
        let mut got: Vec<(u32, Vec<i64>)> = dec.cubes.iter().map(|c| (c.nu, c.m.clone())).collect();
        let mut want = oracle(&dom, 5);
        got.sort();
        want.sort();
        assert_eq!(got, want);
        for c in &dec.cubes {
            let d = c.dist.unwrap();
            assert!(d >= c.diam() - 1e-12 && d <= 4.0 * c.diam() + 1e-12);
        }
    }

    #[test]
    fn full_space_is_degenerate() {
        let dec = whitney_decompose(&DomainDescriptor::full_space(Bbox::unit(2)), 3).unwrap();
        assert!(dec.degenerate);
        assert_eq!(dec.cubes.len(), 1);
        assert_eq!(dec.cubes[0].flags, vec![CubeFlag::Degenerate]);
        let lat = interior_lattice(&dec, 2).unwrap();
        assert_eq!((lat.count_at(0), lat.count_at(1), lat.count_at(2)), (1, 4, 16));
    }

    #[test]
    fn unit_square_certificate() {
        let dec = whitney_decompose(&DomainDescriptor::unit_cube(2), 6).unwrap();
        let v = verify_whitney(&dec, 7).unwrap();
        assert_eq!(v.total(), 0, "{v:?}");
        assert!(v.checked_midpoints > 0);
    }

    #[test]
    fn interval_lattice_distance_constant() {
        let dec = whitney_decompose(&DomainDescriptor::unit_cube(1), 6).unwrap();
        let lat = interior_lattice(&dec, 6).unwrap();
        let c3 = lat.c3.unwrap();
        assert!(c3 > 0.0);
        for p in lat.points() {
            let d = p.x[0].min(1.0 - p.x[0]);
            assert!(d >= 2f64.powi(-(p.j as i32)) * c3 - 1e-12);
        }
        let sq = interior_lattice(&whitney_decompose(&DomainDescriptor::unit_cube(2), 5).unwrap(), 5).unwrap();
        assert!(sq.c1 >= 1.0);
    }

    #[test]
    fn closure_lattice_counts() {
        let l1 = closure_lattice(&DomainDescriptor::unit_cube(1), 0).unwrap();
        assert_eq!(l1.levels[&0], vec![vec![0.0], vec![1.0]]);
        let dom = DomainDescriptor::unit_cube(2);
        let lat = closure_lattice(&dom, 3).unwrap();
        let inner = interior_lattice(&whitney_decompose(&dom, 3).unwrap(), 3).unwrap();
        for j in 0..=3u32 {
            let boundary = lat.levels[&j].iter().filter(|x| x.iter().any(|&t| t == 0.0 || t == 1.0)).count();
            assert_eq!(boundary, 4 * ((1usize << j) - 1) + 4);
            for x in inner.levels.get(&j).into_iter().flatten() {
                assert!(lat.levels[&j].contains(x));
            }
        }
        assert!(closure_lattice(&DomainDescriptor::full_space(Bbox::unit(2)), 2).is_err());
    }
}
