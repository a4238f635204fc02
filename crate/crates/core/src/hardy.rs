//! Weighted L_p functionals near planes and cube faces, the critical Hardy
//! counterexample family f_J, the reinforce-property checker and the
//! refined-localization norm surrogate.

use crate::boundary::{trace, FaceDescriptor};
use crate::error::{Error, Result};
use crate::grid::{finite_diff, Bbox, GridFunction, SpaceParams};
use crate::numerics::norm_order;
use crate::wavelets::{wavelet_norm_with, NormMethod};
use crate::whitney::DomainDescriptor;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardyMode {
    Critical,
    Subcritical,
    Plain,
}

impl FromStr for HardyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "critical" => Ok(HardyMode::Critical),
            "subcritical" => Ok(HardyMode::Subcritical),
            "plain" => Ok(HardyMode::Plain),
            _ => Err(Error::Invalid(format!("unknown mode {s}"))),
        }
    }
}

/// Named weights κ: 1, log(1/t), t^{-0.1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kappa {
    One,
    Log,
    Power,
}

impl Kappa {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Kappa::One => 1.0,
            Kappa::Log => (1.0 / t).ln(),
            Kappa::Power => t.powf(-0.1),
        }
    }
}

impl FromStr for Kappa {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "one" => Ok(Kappa::One),
            "log" => Ok(Kappa::Log),
            "pow" | "power" => Ok(Kappa::Power),
            _ => Err(Error::Invalid(format!("unknown kappa {s} (use 1, log, pow)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    Bounded,
    LogGrowth,
    PowerGrowth,
    Unresolved,
}

pub const DEFAULT_EPS: f64 = 0.25;
/// Consecutive-value ratio below which a sequence counts as bounded.
pub const BOUNDED_RATIO: f64 = 1.1;

/// One evaluation of the weighted functional at the grid level of `f`.
/// Cells with 0 < d < eps contribute; d = 0 never occurs on midpoints.
pub fn weighted_value(f: &GridFunction, face: &FaceDescriptor, mode: HardyMode, s: f64, p: f64, kappa: Kappa, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if f.n() != face.n {
        return Err(Error::Invalid("face and grid dimensions differ".into()));
    }
    let codim = (face.n - face.l) as f64;
    let vol = f.cell_volume();
    let mut acc = 0.0;
    for (i, &v) in f.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let x = f.midpoint_flat(i);
        let d = face.distance(&x);
        if !(d > 0.0 && d < eps) {
            continue;
        }
        let term = match mode {
            HardyMode::Critical => (kappa.eval(d) * v / d.ln()).abs().powf(p) * d.powf(-codim),
            HardyMode::Subcritical => (kappa.eval(d) * v).abs().powf(p) * d.powf(-s * p),
            HardyMode::Plain => v.abs().powf(p) * d.powf(-s * p),
        };
        acc += term;
    }
    let out = acc * vol;
    if !out.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedFunctionalReport {
    pub levels: Vec<i32>,
    pub values: Vec<f64>,
    pub growth: Growth,
    pub rate: f64,
    pub l: usize,
    pub p: f64,
    pub s: f64,
    pub kappa: Kappa,
    pub eps: f64,
    pub mode: HardyMode,
}

/// `f` and its `count − 1` successive coarsenings, coarsest first.
pub fn refinement_ladder(f: &GridFunction, count: usize) -> Result<Vec<GridFunction>> {
    let mut out = vec![f.clone()];
    for _ in 1..count {
        let next = out.last().expect("nonempty").coarsen()?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Classify a sequence of functional values under refinement.
///
/// Increments Δ_k = v_{k+1} − v_k: roughly constant → log growth (v ∝ J),
/// growing → power growth, shrinking with consecutive ratios ≤ 1.1 → bounded.
pub fn diagnose_growth(values: &[f64]) -> (Growth, f64) {
    let k = values.len();
    if k < 3 {
        return (Growth::Unresolved, f64::NAN);
    }
    let last = values[k - 1];
    if values.iter().all(|v| v.abs() <= 1e-300) {
        return (Growth::Bounded, 0.0);
    }
    let d1 = values[k - 2] - values[k - 3];
    let d2 = last - values[k - 2];
    let max_ratio = values
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else if w[1] > 0.0 { f64::INFINITY } else { 1.0 })
        .fold(0.0, f64::max);
    let rho = if d1.abs() > 1e-14 * last.abs() { d2 / d1 } else { 0.0 };
    if d2 > 1e-3 * last.abs() && rho > 1.33 {
        return (Growth::PowerGrowth, (last / values[k - 2]).log2());
    }
    if d2 > 1e-3 * last.abs() && rho >= 0.75 {
        return (Growth::LogGrowth, d2);
    }
    if max_ratio <= BOUNDED_RATIO {
        (Growth::Bounded, max_ratio)
    } else {
        (Growth::Unresolved, max_ratio)
    }
}

/// Functional at `levels` successive refinements ending at the level of `f`.
pub fn weighted_lp(
    f: &GridFunction,
    face: &FaceDescriptor,
    mode: HardyMode,
    params: &SpaceParams,
    kappa: Kappa,
    eps: f64,
    levels: usize,
) -> Result<WeightedFunctionalReport> {
    let ladder = refinement_ladder(f, levels.max(1))?;
    let mut values = Vec::new();
    for g in &ladder {
        values.push(weighted_value(g, face, mode, params.s, params.p, kappa, eps)?);
    }
    let (growth, rate) = diagnose_growth(&values);
    Ok(WeightedFunctionalReport {
        levels: ladder.iter().map(|g| g.level()).collect(),
        values,
        growth,
        rate,
        l: face.l,
        p: params.p,
        s: params.s,
        kappa,
        eps,
        mode,
    })
}

/// Σ_{k<K} 1/(k + 1/2): the midpoint sum of ∫ dt/t over K cells.
pub fn harmonic_oracle(k: u64) -> f64 {
    (0..k).map(|i| 1.0 / (i as f64 + 0.5)).sum()
}

/// ∫_0^{1/2} |g1(t) − g2(t)|^2 / t dt by the midpoint rule, g1 and g2 on
/// the same 1-D grid starting at t = 0.
pub fn corner_compatibility(g1: &GridFunction, g2: &GridFunction) -> Result<f64> {
    if g1.n() != 1 || !g1.same_grid(g2) {
        return Err(Error::Invalid("corner diagnostic needs two 1-D functions on one grid".into()));
    }
    let h = g1.spacing();
    let lo = g1.bbox().lower[0];
    let mut acc = 0.0;
    for (i, (a, b)) in g1.values().iter().zip(g2.values()).enumerate() {
        let t = lo + (i as f64 + 0.5) * h;
        if t > 0.0 && t < 0.5 {
            acc += (a - b).powi(2) / t * h;
        }
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FjVariant {
    Overlapping,
    Disjoint,
}

impl FromStr for FjVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlapping" => Ok(FjVariant::Overlapping),
            "disjoint" => Ok(FjVariant::Disjoint),
            _ => Err(Error::Invalid(format!("unknown variant {s}"))),
        }
    }
}

/// C^3 radial cutoff: 1 on [0, a], 0 beyond b.
pub(crate) fn cutoff(t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        1.0
    } else if t >= b {
        0.0
    } else {
        let x = (t - a) / (b - a);
        // 1 − smoothstep_3
        1.0 - x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x)
    }
}

/// Radius of the tangential set S_J^l = {|x'| < X_RADIUS, |x''| < 2^{-J}}.
pub const X_RADIUS: f64 = 0.5;

/// Default grid level for f_J: two cells per 2^{-J-2}.
pub fn fj_grid_level(big_j: u32) -> i32 {
    big_j as i32 + 2
}

/// The critical counterexample f_J on [−1, 1]^n around ℝ^l.
///
/// Overlapping: J^{-1/p} Σ_{j=1}^J Θ_j with Θ_j ≡ 1 on {|x'| ≤ ½, |x''| ≤ 2^{-j}}
/// (each Θ_j is a partition-of-unity sum of level-j bumps), so f_J = J^{1/p'}
/// on S_J. Disjoint: J^{-1/p} Σ_j Σ_k ψ(2^{j−1}(x − x^{j,k})) with the
/// level-j bumps on x'' = 0 spaced 2^{2−j} apart, so supports at fixed j
/// are disjoint.
pub fn counterexample_fj(n: usize, l: usize, p: f64, big_j: u32, variant: FjVariant, level: Option<i32>) -> Result<GridFunction> {
    if l >= n {
        return Err(Error::Invalid(format!("need l < n, got l = {l}, n = {n}")));
    }
    if !(p > 1.0) {
        return Err(Error::Hypothesis("the critical Hardy construction needs 1 < p < ∞".into()));
    }
    if big_j == 0 || big_j > 8 {
        return Err(Error::Invalid(format!("J must lie in 1..=8, got {big_j}")));
    }
    let level = level.unwrap_or_else(|| fj_grid_level(big_j));
    let scale = (big_j as f64).powf(-1.0 / p);
    let bbox = Bbox::cube(n, -1.0, 1.0);
    match variant {
        FjVariant::Overlapping => GridFunction::from_fn(bbox, level, |x| {
            let xt: f64 = x[..l].iter().map(|v| v * v).sum::<f64>().sqrt();
            let xn: f64 = x[l..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let tang = cutoff(xt, X_RADIUS, 0.75);
            if tang == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for j in 1..=big_j {
                let s = 2f64.powi(-(j as i32));
                acc += cutoff(xn, s, 2.0 * s);
            }
            scale * tang * acc
        }),
        FjVariant::Disjoint => {
            // bump centres per level
            let mut centres: Vec<(u32, Vec<f64>)> = Vec::new();
            for j in 1..=big_j {
                let step = 2f64.powi(2 - j as i32);
                let m = (X_RADIUS / step).floor() as i64;
                let mut pts = vec![vec![]];
                for _ in 0..l {
                    let mut next = Vec::new();
                    for p in &pts {
                        for k in -m..=m {
                            let mut q: Vec<f64> = p.clone();
                            q.push(k as f64 * step);
                            next.push(q);
                        }
                    }
                    pts = next;
                }
                for mut p in pts {
                    if p.iter().map(|v| v * v).sum::<f64>().sqrt() <= X_RADIUS + 1e-12 {
                        p.extend(std::iter::repeat(0.0).take(n - l));
                        centres.push((j, p));
                    }
                }
            }
            GridFunction::from_fn(bbox, level, |x| {
                let mut acc = 0.0;
                for (j, c) in &centres {
                    let r = 2f64.powi(*j as i32 - 1) * x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    acc += cutoff(r, 0.5, 1.0);
                }
                scale * acc
            })
        }
    }
}

/// Mean of f_J over the midpoints of S_J^l.
pub fn fj_plateau_value(f: &GridFunction, l: usize, big_j: u32) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (i, v) in f.values().iter().enumerate() {
        let x = f.midpoint_flat(i);
        let xt: f64 = x[..l].iter().map(|v| v * v).sum::<f64>().sqrt();
        let xn: f64 = x[l..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if xt < X_RADIUS && xn < 2f64.powi(-(big_j as i32)) {
            acc += v;
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        acc / count as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaReinforce {
    pub alpha: Vec<u32>,
    pub levels: Vec<i32>,
    pub values: Vec<f64>,
    pub growth: Growth,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReinforceReport {
    pub face: String,
    pub l: usize,
    pub r: u32,
    pub p: f64,
    pub eps: f64,
    pub per_alpha: Vec<AlphaReinforce>,
    pub pass: bool,
}

/// R_l^{r,p}: d^{-(n−l)/p} D^α f ∈ L_p near the face for all perpendicular
/// |α| = r, judged on three refinements ending at the level of `f`.
pub fn check_reinforce(f: &GridFunction, face: &FaceDescriptor, r: u32, p: f64, eps: f64) -> Result<ReinforceReport> {
    check_reinforce_samples(&refinement_ladder(f, 3)?, face, r, p, eps)
}

/// As [`check_reinforce`], for one function sampled independently at
/// successive levels (coarsest first).
pub fn check_reinforce_samples(samples: &[GridFunction], face: &FaceDescriptor, r: u32, p: f64, eps: f64) -> Result<ReinforceReport> {
    if samples.len() < 3 {
        return Err(Error::Invalid("reinforce check needs three refinements".into()));
    }
    if samples.windows(2).any(|w| w[1].level() != w[0].level() + 1 || w[1].bbox() != w[0].bbox()) {
        return Err(Error::Invalid("samples must be successive refinements of one box".into()));
    }
    let s = (face.n - face.l) as f64 / p;
    let mut per_alpha = Vec::new();
    for alpha in face.perp_indices(r).into_iter().filter(|a| norm_order(a) == r) {
        let mut values = Vec::new();
        for g in samples {
            let d = if r == 0 { g.clone() } else { finite_diff(g, &alpha)? };
            values.push(weighted_value(&d, face, HardyMode::Plain, s, p, Kappa::One, eps)?);
        }
        let (growth, rate) = diagnose_growth(&values);
        per_alpha.push(AlphaReinforce { alpha, levels: samples.iter().map(|g| g.level()).collect(), values, growth, rate });
    }
    let pass = per_alpha.iter().all(|a| a.growth == Growth::Bounded);
    Ok(ReinforceReport { face: face.label(), l: face.l, r, p, eps, per_alpha, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct HardyTraceReport {
    pub levels: Vec<i32>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ratio: Vec<f64>,
    pub max_trace: f64,
}

/// ‖d^{-s} f|L_p‖ against Σ_{|α|=r} ‖d^{-s+r} D^α f|L_p‖ on three
/// refinements; requires tr D^β f = 0 for perpendicular |β| ≤ r − 1.
pub fn hardy_trace_inequality_report(f: &GridFunction, face: &FaceDescriptor, r: u32, s: f64, p: f64) -> Result<HardyTraceReport> {
    if r == 0 {
        return Err(Error::Invalid("the trace inequality needs r ≥ 1".into()));
    }
    let scale = f.max_abs();
    let bundle = trace(f, face, r - 1, None)?;
    let mut max_trace = 0.0f64;
    for g in bundle.data.values() {
        max_trace = max_trace.max(g.max_abs());
    }
    if max_trace > 1e-6 * scale.max(1e-300) {
        return Err(Error::Hypothesis(format!("traces up to order {} do not vanish (max {max_trace:e})", r - 1)));
    }
    let ladder = refinement_ladder(f, 3)?;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let big = f64::INFINITY;
    for g in &ladder {
        let left = weighted_value(g, face, HardyMode::Plain, s, p, Kappa::One, 1.0 - 1e-12)?.powf(1.0 / p);
        let mut right = 0.0;
        for alpha in face.perp_indices(r).into_iter().filter(|a| norm_order(a) == r) {
            let d = finite_diff(g, &alpha)?;
            right += weighted_value(&d, face, HardyMode::Plain, s - r as f64, p, Kappa::One, 1.0 - 1e-12)?.powf(1.0 / p);
        }
        lhs.push(left);
        rhs.push(right);
    }
    let ratio = lhs.iter().zip(&rhs).map(|(a, b)| if *b > 0.0 { a / b } else if *a == 0.0 { 0.0 } else { big }).collect();
    Ok(HardyTraceReport { levels: ladder.iter().map(|g| g.level()).collect(), lhs, rhs, ratio, max_trace })
}

/// ‖f|F‖ + ‖δ^{-s} f|L_p(Ω)‖ with δ = min(d, 1).
pub fn rloc_norm(f: &GridFunction, domain: &DomainDescriptor, params: &SpaceParams) -> Result<f64> {
    let method = NormMethod::auto(params)?;
    let w = wavelet_norm_with(f, params, method, None)?;
    let vol = f.cell_volume();
    let mut acc = 0.0;
    for (i, &v) in f.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let x = f.midpoint_flat(i);
        if !domain.inside(&x) {
            continue;
        }
        let d = domain.distance(&x).unwrap_or(1.0).min(1.0);
        acc += (v.abs() * d.powf(-params.s)).powf(params.p);
    }
    Ok(w + (acc * vol).powf(1.0 / params.p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bottom_edge() -> FaceDescriptor {
        FaceDescriptor::cube_faces(2, 1).into_iter().find(|f| f.fixed == vec![(1, 0.0)]).unwrap()
    }

    #[test]
    fn zero_function() {
        let f = GridFunction::zeros(Bbox::unit(2), 6).unwrap();
        for mode in [HardyMode::Critical, HardyMode::Subcritical, HardyMode::Plain] {
            assert_eq!(weighted_value(&f, &bottom_edge(), mode, 0.5, 2.0, Kappa::Log, 0.25).unwrap(), 0.0);
        }
        assert!(weighted_value(&f, &bottom_edge(), HardyMode::Plain, 0.5, 2.0, Kappa::One, 1.0).is_err());
    }

    #[test]
    fn harmonic_sum_oracle() {
        for level in [5, 7, 9] {
            let f = GridFunction::from_fn(Bbox::unit(2), level, |_| 1.0).unwrap();
            let v = weighted_value(&f, &bottom_edge(), HardyMode::Plain, 0.5, 2.0, Kappa::One, 0.25).unwrap();
            let want = harmonic_oracle(1u64 << (level - 2));
            assert!((v - want).abs() < 0.01 * want, "{v} vs {want}");
        }
    }

    #[test]
    fn corner_diagnostic() {
        let g = GridFunction::from_fn(Bbox::unit(1), 8, |x| x[0].sin()).unwrap();
        assert_eq!(corner_compatibility(&g, &g).unwrap(), 0.0);
        let mut prev = 0.0;
        for level in [6, 7, 8] {
            let one = GridFunction::from_fn(Bbox::unit(1), level, |_| 1.0).unwrap();
            let zero = GridFunction::zeros(Bbox::unit(1), level).unwrap();
            let v = corner_compatibility(&one, &zero).unwrap();
            if prev > 0.0 {
                assert!((v - prev - 2f64.ln()).abs() < 0.01);
            }
            prev = v;
        }
    }

    #[test]
    fn growth_classes() {
        assert_eq!(diagnose_growth(&[1.0, 1.0 + 0.69, 1.0 + 1.38]).0, Growth::LogGrowth);
        assert_eq!(diagnose_growth(&[1.0, 2.0, 4.0]).0, Growth::PowerGrowth);
        assert_eq!(diagnose_growth(&[1.0, 1.01, 1.012]).0, Growth::Bounded);
        assert_eq!(diagnose_growth(&[0.0, 0.0, 0.0]).0, Growth::Bounded);
    }

    #[test]
    fn fj_plateau_and_gate() {
        let f = counterexample_fj(2, 1, 2.0, 4, FjVariant::Overlapping, None).unwrap();
        let v = fj_plateau_value(&f, 1, 4);
        assert!((v - 2.0).abs() < 0.2, "{v}");
        let f1 = counterexample_fj(2, 1, 2.0, 1, FjVariant::Overlapping, None).unwrap();
        assert!((fj_plateau_value(&f1, 1, 1) - 1.0).abs() < 1e-12);
        assert!(matches!(counterexample_fj(2, 1, 1.0, 4, FjVariant::Overlapping, None), Err(Error::Hypothesis(_))));
        let d = counterexample_fj(2, 1, 2.0, 3, FjVariant::Disjoint, None).unwrap();
        assert!(d.max_abs() > 0.0);
    }

    #[test]
    fn reinforce_dichotomy_on_simple_functions() {
        let one = GridFunction::from_fn(Bbox::unit(2), 9, |_| 1.0).unwrap();
        let rep = check_reinforce(&one, &bottom_edge(), 0, 2.0, 0.25).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.per_alpha[0].growth, Growth::LogGrowth);
        let vanishing = GridFunction::from_fn(Bbox::unit(2), 9, |x| x[1] * (std::f64::consts::PI * x[0]).sin()).unwrap();
        let rep = check_reinforce(&vanishing, &bottom_edge(), 0, 2.0, 0.25).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn trace_inequality_gate() {
        let face = bottom_edge();
        let f = GridFunction::from_fn(Bbox::unit(2), 7, |x| 1.0 + x[0]).unwrap();
        assert!(matches!(hardy_trace_inequality_report(&f, &face, 1, 1.5, 2.0), Err(Error::Hypothesis(_))));
        let z = GridFunction::zeros(Bbox::unit(2), 7).unwrap();
        let rep = hardy_trace_inequality_report(&z, &face, 1, 1.5, 2.0).unwrap();
        assert!(rep.lhs.iter().all(|v| *v == 0.0));
        let g = GridFunction::from_fn(Bbox::unit(2), 8, |x| x[1] * (1.0 + x[0] * x[0])).unwrap();
        let rep = hardy_trace_inequality_report(&g, &face, 1, 1.2, 2.0).unwrap();
        assert!(rep.ratio.iter().all(|r| r.is_finite() && *r > 0.0));
    }

    #[test]
    fn rloc_weight_bound() {
        let dom = DomainDescriptor::unit_cube(2);
        let params = SpaceParams::new(2, 0.3, 2.0, 2.0).unwrap();
        let f = GridFunction::from_fn(Bbox::unit(2), 6, |x| {
            let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
            if r2 < 0.0625 { (1.0 - r2 / 0.0625).powi(3) } else { 0.0 }
        })
        .unwrap();
        let total = rloc_norm(&f, &dom, &params).unwrap();
        let w = wavelet_norm_with(&f, &params, NormMethod::auto(&params).unwrap(), None).unwrap();
        let lp = crate::grid::integrate_lp(&f, 2.0, None).unwrap();
        assert!(total - w <= 4f64.powf(0.3) * lp + 1e-12);
        assert_eq!(rloc_norm(&GridFunction::zeros(Bbox::unit(2), 6).unwrap(), &dom, &params).unwrap(), 0.0);
    }
}
