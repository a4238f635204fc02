use crate::output::{ensure_dir, envelope, num, read_json, sidecar, write_json, Table};
use crate::*;
use cellwave_core::atoms::{check_atom, check_diffeomorphism, diffeo_apply, identity_map, local_means_norm, make_local_means, multiply};
use cellwave_core::boundary::{check_trace_window, extend_on, trace, ExtendOptions, FaceDescriptor, TraceBundle};
use cellwave_core::corpus::smooth_corpus;
use cellwave_core::decompose::{CubeDecomposition, Decomposer, DecompositionPlan};
use cellwave_core::grid::{parse_fraction, read_gfn, write_gfn};
use cellwave_core::hardy::{check_reinforce, counterexample_fj, weighted_value, FjVariant, HardyMode, Kappa, DEFAULT_EPS};
use cellwave_core::seqspace::{b_norm, f_norm};
use cellwave_core::wavelets::{build_box_system, build_domain_system, default_jmax, wavelet_norm_with};
use cellwave_core::whitney::{verify_whitney, whitney_decompose, DomainDescriptor};
use cellwave_core::{Bbox, CoefficientField, DyadicCube, Error, GridFunction, NormMethod, Result, SpaceParams, WaveletSystem};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::Path;

pub enum Verdict {
    Pass,
    Fail(String),
}

impl Verdict {
    fn check(enabled: bool, ok: bool, why: impl FnOnce() -> String) -> Verdict {
        if enabled && !ok {
            Verdict::Fail(why())
        } else {
            Verdict::Pass
        }
    }
}

pub fn run(cli: &Cli) -> Result<Verdict> {
    match &cli.command {
        Command::Whitney(a) => whitney(a),
        Command::Seqnorm(a) => seqnorm(a),
        Command::Norm(a) => norm(a),
        Command::Analyze(a) => analyze(a),
        Command::Synthesize(a) => synthesize(a),
        Command::Atom { action: AtomAction::Check(a) } => atom_check(a),
        Command::Op { action: OpAction::Multiply(a) } => op_multiply(a),
        Command::Op { action: OpAction::Diffeo(a) } => op_diffeo(a),
        Command::Hardy(a) => hardy(a),
        Command::Reinforce(a) => reinforce(a),
        Command::Trace(a) => trace_cmd(a),
        Command::Extend(a) => extend_cmd(a),
        Command::Decompose(a) => decompose(a),
        Command::Preset(a) => preset(a, cli.seed),
    }
}

fn params(n: usize, s: &str, p: &str, q: f64) -> Result<SpaceParams> {
    let (sv, se) = parse_fraction(s)?;
    let (pv, pe) = parse_fraction(p)?;
    match (se, pe) {
        (Some(se), Some(pe)) => SpaceParams::rational(n, se, pe, q),
        _ => SpaceParams::new(n, sv, pv, q),
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Invalid(format!("bad {what} entry '{t}'"))))
        .collect()
}

fn parse_bbox(text: &str, n: usize) -> Result<Bbox> {
    let v: Vec<f64> = parse_list(text, "bbox")?;
    if v.len() == 2 {
        Bbox::new(vec![v[0]; n], vec![v[1]; n])
    } else if v.len() == 2 * n {
        Bbox::new(v[..n].to_vec(), v[n..].to_vec())
    } else {
        Err(Error::Invalid(format!("bbox needs 2 or {} numbers", 2 * n)))
    }
}

/// "l,j" → the j-th l-dimensional face of the unit cube.
fn parse_face(text: &str, n: usize) -> Result<FaceDescriptor> {
    let v: Vec<usize> = parse_list(text, "face")?;
    if v.len() != 2 {
        return Err(Error::Invalid(format!("face must be 'l,j', got '{text}'")));
    }
    FaceDescriptor::cube_face(n, v[0], v[1])
}

fn parse_method(text: &str, params: &SpaceParams) -> Result<NormMethod> {
    if text == "auto" {
        NormMethod::auto(params)
    } else {
        text.parse()
    }
}

fn parse_range(text: &str) -> Result<(u32, u32)> {
    let bad = || Error::Invalid(format!("range must look like a..b, got '{text}'"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

fn emit(out: Option<&Path>, command: &str, body: impl Serialize) -> Result<Value> {
    let value = envelope(command, body)?;
    if let Some(path) = out {
        write_json(path, &value)?;
    }
    Ok(value)
}

fn whitney(a: &WhitneyArgs) -> Result<Verdict> {
    let bbox = a.bbox.as_deref().map(|b| parse_bbox(b, a.n)).transpose()?;
    let domain = match a.domain.as_str() {
        "cube" => DomainDescriptor::unit_cube(a.n),
        "box" => DomainDescriptor::full_space(bbox.unwrap_or_else(|| Bbox::unit(a.n))),
        other => match other.strip_prefix("plane:") {
            Some(l) => {
                let l = l.parse().map_err(|_| Error::Invalid(format!("bad plane dimension in '{other}'")))?;
                DomainDescriptor::plane_complement(a.n, l, bbox)?
            }
            None => return Err(Error::Invalid(format!("unknown domain '{other}' (cube | plane:L | box)"))),
        },
    };
    let dec = whitney_decompose(&domain, a.max_level)?;
    let check = verify_whitney(&dec, a.max_level)?;
    let counts = dec.level_counts();
    let body = json!({ "decomposition": dec, "verification": check, "level_counts": counts });
    if let Some(out) = &a.out {
        emit(Some(out), "whitney", &body)?;
        let mut t = Table::new(&["level", "cubes"]);
        for (lv, c) in &counts {
            t.push(vec![lv.to_string(), c.to_string()]);
        }
        t.write(&sidecar(out))?;
    }
    println!("cubes {} violations {}", dec.cubes.len(), check.total());
    Ok(Verdict::check(a.assert, check.total() == 0, || format!("{} Whitney violations", check.total())))
}

fn read_coeffs(path: &Path) -> Result<CoefficientField> {
    let v = read_json(path)?;
    CoefficientField::from_json(&v)
}

fn write_coeffs(path: &Path, lam: &CoefficientField) -> Result<()> {
    let mut v = lam.to_json()?;
    if let Value::Object(m) = &mut v {
        m.insert("schema".into(), json!(output::SCHEMA));
    }
    write_json(path, &v)
}

fn seqnorm(a: &SeqnormArgs) -> Result<Verdict> {
    let lam = read_coeffs(&a.coeffs)?;
    let value = match a.kind.as_str() {
        "f" => f_norm(&lam, a.p, a.q, a.s)?,
        "b" => b_norm(&lam, a.p, a.q, a.s)?,
        other => return Err(Error::Invalid(format!("unknown kind '{other}' (f | b)"))),
    };
    println!("{value}");
    Ok(Verdict::Pass)
}

fn norm(a: &NormArgs) -> Result<Verdict> {
    let f = read_gfn(&a.grid)?;
    let params = params(f.n(), &a.s, &a.p, a.q)?;
    let (method, value) = if a.method == "localmeans" {
        let kern = make_local_means(f.n(), a.moments, a.e, f.level())?;
        let jmax = a.jmax.unwrap_or((f.level() - 3).max(1) as u32);
        ("localmeans".to_string(), local_means_norm(&f, &params, &kern, jmax)?)
    } else {
        let m = parse_method(&a.method, &params)?;
        (serde_json::to_value(m)?.as_str().unwrap_or("").to_string(), wavelet_norm_with(&f, &params, m, a.jmax)?)
    };
    emit(a.out.as_deref(), "norm", json!({ "method": method, "params": params, "value": value }))?;
    println!("{value}");
    Ok(Verdict::Pass)
}

/// Construction parameters of a wavelet system; rebuilding is deterministic.
#[derive(Serialize, Deserialize)]
struct SystemManifest {
    schema: String,
    kind: String,
    n: usize,
    u: u32,
    jmax: u32,
    bbox: Bbox,
    resolution: i32,
}

impl SystemManifest {
    fn build(&self) -> Result<WaveletSystem> {
        match self.kind.as_str() {
            "box" => build_box_system(self.n, self.u, self.jmax, &self.bbox, self.resolution),
            "domain" => {
                let dec = whitney_decompose(&DomainDescriptor::unit_cube(self.n), self.jmax)?;
                build_domain_system(&dec, self.u, self.jmax, self.resolution)
            }
            other => Err(Error::Format(format!("unknown system kind '{other}'"))),
        }
    }
}

fn system_manifest(a: &SystemArgs, f: &GridFunction) -> Result<SystemManifest> {
    if let Some(path) = &a.system {
        return Ok(serde_json::from_value(read_json(path)?)?);
    }
    Ok(SystemManifest {
        schema: output::SCHEMA.into(),
        kind: if a.domain { "domain" } else { "box" }.into(),
        n: f.n(),
        u: a.u,
        jmax: a.jmax.unwrap_or_else(|| default_jmax(a.u, f.level())),
        bbox: f.bbox().clone(),
        resolution: f.level(),
    })
}

fn analyze(a: &AnalyzeArgs) -> Result<Verdict> {
    let f = read_gfn(&a.grid)?;
    let manifest = system_manifest(&a.system, &f)?;
    let sys = manifest.build()?;
    let lam = sys.analyze(&f)?;
    write_coeffs(&a.out, &lam)?;
    if let Some(path) = &a.system_out {
        write_json(path, &serde_json::to_value(&manifest)?)?;
    }
    println!("coefficients {}", lam.len());
    Ok(Verdict::Pass)
}

fn synthesize(a: &SynthesizeArgs) -> Result<Verdict> {
    let manifest: SystemManifest = serde_json::from_value(read_json(&a.system)?)?;
    let sys = manifest.build()?;
    let lam = read_coeffs(&a.coeffs)?;
    let g = sys.synthesize(&lam)?;
    write_gfn(&a.out, &g)?;
    println!("max|f| {}", g.max_abs());
    Ok(Verdict::Pass)
}

fn atom_check(a: &AtomCheckArgs) -> Result<Verdict> {
    let grid = read_gfn(&a.grid)?;
    let params = params(grid.n(), &a.s, &a.p, 2.0)?;
    let cube = DyadicCube::new(a.nu, parse_list(&a.m, "m")?);
    if cube.n() != grid.n() {
        return Err(Error::Invalid(format!("cube index has {} entries, grid is {}-D", cube.n(), grid.n())));
    }
    let rep = check_atom(&grid, &cube, &params, a.k, a.l, a.d, a.c)?;
    emit(a.out.as_deref(), "atom-check", &rep)?;
    println!("verdict {} measured_c {}", rep.verdict, num(rep.measured_c));
    Ok(Verdict::check(a.assert, rep.verdict, || "atom conditions violated".into()))
}

fn op_multiply(a: &MultiplyArgs) -> Result<Verdict> {
    let c = &a.common;
    let f = read_gfn(&c.grid)?;
    let phi = read_gfn(&a.phi)?;
    let params = params(f.n(), &c.s, &c.p, c.q)?;
    let method = parse_method(&c.method, &params)?;
    let (prod, rep) = multiply(&f, &phi, &params, c.rho, method, c.jmax)?;
    if let Some(path) = &c.grid_out {
        write_gfn(path, &prod)?;
    }
    emit(c.out.as_deref(), "op-multiply", &rep)?;
    println!("ratio {}", num(rep.ratio));
    Ok(Verdict::Pass)
}

fn op_diffeo(a: &DiffeoArgs) -> Result<Verdict> {
    let c = &a.common;
    let f = read_gfn(&c.grid)?;
    let phi = match &a.map {
        Some(list) => list.split(',').map(|p| read_gfn(Path::new(p.trim()))).collect::<Result<Vec<_>>>()?,
        None => identity_map(f.bbox(), f.level())?,
    };
    let params = params(f.n(), &c.s, &c.p, c.q)?;
    let method = parse_method(&c.method, &params)?;
    let check = check_diffeomorphism(&phi, c.rho)?;
    let (composed, rep) = diffeo_apply(&f, &phi, &params, c.rho, method, c.jmax, a.periodic)?;
    if let Some(path) = &c.grid_out {
        write_gfn(path, &composed)?;
    }
    emit(c.out.as_deref(), "op-diffeo", json!({ "map": check, "composition": rep }))?;
    println!("ratio {} diffeomorphism {}", num(rep.ratio), check.verdict);
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct HardyRow {
    big_j: u32,
    level: i32,
    functional: f64,
    norm: f64,
    ratio: f64,
}

fn hardy(a: &HardyArgs) -> Result<Verdict> {
    let mode: HardyMode = a.mode.parse()?;
    let kappa: Kappa = a.kappa.parse()?;
    let variant: FjVariant = a.variant.parse()?;
    let (j0, j1) = parse_range(&a.j)?;
    let codim = a.n.checked_sub(a.l).filter(|&c| c > 0).ok_or_else(|| Error::Invalid("need l < n".into()))? as f64;
    let s = a.s.unwrap_or(match mode {
        HardyMode::Critical => codim / a.p,
        _ => codim / (2.0 * a.p),
    });
    let params = SpaceParams::new(a.n, s, a.p, a.p)?;
    let method = NormMethod::auto(&params)?;
    let face = FaceDescriptor::plane(a.n, a.l, Bbox::cube(a.n, -1.0, 1.0))?;
    let mut rows = Vec::new();
    for big_j in j0..=j1 {
        let f = counterexample_fj(a.n, a.l, a.p, big_j, variant, None)?;
        let norm = wavelet_norm_with(&f, &params, method, None)?;
        let functional = weighted_value(&f, &face, mode, s, a.p, kappa, a.eps)?;
        let ratio = if norm > 0.0 { functional / norm.powf(a.p) } else { f64::NAN };
        rows.push(HardyRow { big_j, level: f.level(), functional, norm, ratio });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let growth = ratios[ratios.len() - 1] / ratios[0];
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let spread = hi / lo;
    let body = json!({
        "mode": mode, "kappa": kappa, "variant": variant, "n": a.n, "l": a.l, "p": a.p, "s": s,
        "eps": a.eps, "method": method, "rows": rows, "growth": growth, "spread": spread,
    });
    if let Some(out) = &a.out {
        emit(Some(out), "hardy", &body)?;
        let mut t = Table::new(&["J", "level", "functional", "norm", "ratio"]);
        for r in &rows {
            t.push(vec![r.big_j.to_string(), r.level.to_string(), num(r.functional), num(r.norm), num(r.ratio)]);
        }
        t.write(&sidecar(out))?;
    }
    for r in &rows {
        println!("J={} ratio={}", r.big_j, num(r.ratio));
    }
    println!("growth {} spread {}", num(growth), num(spread));
    match &a.assert {
        None => Ok(Verdict::Pass),
        Some(spec) => {
            let (kind, bound) = spec.split_once(':').ok_or_else(|| Error::Invalid(format!("bad --assert '{spec}'")))?;
            let bound: f64 = bound.parse().map_err(|_| Error::Invalid(format!("bad --assert bound '{bound}'")))?;
            match kind {
                "grows" => Ok(Verdict::check(true, growth >= bound, || format!("growth {growth} < {bound}"))),
                "bounded" => Ok(Verdict::check(true, spread <= bound, || format!("spread {spread} > {bound}"))),
                other => Err(Error::Invalid(format!("unknown assertion '{other}' (grows | bounded)"))),
            }
        }
    }
}

fn reinforce(a: &ReinforceArgs) -> Result<Verdict> {
    let f = read_gfn(&a.grid)?;
    let face = parse_face(&a.face, f.n())?;
    let rep = check_reinforce(&f, &face, a.r, a.p, a.eps)?;
    if let Some(out) = &a.out {
        emit(Some(out), "reinforce", &rep)?;
        let mut t = Table::new(&["alpha", "level", "value"]);
        for entry in &rep.per_alpha {
            let alpha = entry.alpha.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
            for (lv, v) in entry.levels.iter().zip(&entry.values) {
                t.push(vec![alpha.clone(), lv.to_string(), num(*v)]);
            }
        }
        t.write(&sidecar(out))?;
    }
    for entry in &rep.per_alpha {
        println!("alpha={:?} growth={:?} rate={}", entry.alpha, entry.growth, num(entry.rate));
    }
    println!("pass {}", rep.pass);
    Ok(Verdict::check(a.assert, rep.pass, || format!("reinforce fails at {}", rep.face)))
}

fn trace_cmd(a: &TraceArgs) -> Result<Verdict> {
    let f = read_gfn(&a.grid)?;
    let face = parse_face(&a.face, f.n())?;
    if let Some(s) = &a.s {
        check_trace_window(&params(f.n(), s, &a.p, 2.0)?, face.l, a.r)?;
    }
    let b = trace(&f, &face, a.r, None)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    b.write(&a.out)?;
    println!("face {} components {} max {}", face.label(), b.data.len(), num(b.max_abs()));
    Ok(Verdict::Pass)
}

fn extend_cmd(a: &ExtendArgs) -> Result<Verdict> {
    let b = TraceBundle::read(&a.bundle)?;
    let level = a
        .level
        .or_else(|| b.level())
        .ok_or_else(|| Error::Invalid("a corner bundle carries no level; pass --level".into()))?;
    let opts = ExtendOptions { jcap: a.jcap, ..Default::default() };
    let g = extend_on(&b, level, a.u, &opts)?;
    write_gfn(&a.out, &g)?;
    println!("max|Ext| {}", num(g.max_abs()));
    Ok(Verdict::Pass)
}

/// plan.json, bundles/, interior.coeffs.json, remainder.gfn, verify.json.
fn write_decomposition(dir: &Path, dec: &CubeDecomposition) -> Result<()> {
    ensure_dir(&dir.join("bundles"))?;
    write_json(&dir.join("plan.json"), &envelope("plan", &dec.plan)?)?;
    for (k, b) in dec.bundles.iter().enumerate() {
        b.write(&dir.join("bundles").join(format!("bundle_{k:03}.json")))?;
    }
    write_coeffs(&dir.join("interior.coeffs.json"), &dec.interior)?;
    write_gfn(&dir.join("remainder.gfn"), &dec.f_rloc)?;
    write_gfn(&dir.join("layer.gfn"), &dec.layer)?;
    let verify = dir.join("verify.json");
    write_json(&verify, &envelope("decompose", json!({ "u": dec.u, "verification": dec.verification }))?)?;
    let mut t = Table::new(&["face", "l", "r", "sup"]);
    for rt in &dec.verification.residual_traces {
        t.push(vec![rt.face.clone(), rt.l.to_string(), rt.r.to_string(), num(rt.sup)]);
    }
    t.write(&sidecar(&verify))
}

fn tolerances_hold(dec: &CubeDecomposition) -> (bool, String) {
    let v = &dec.verification;
    let rec = 1e-3 * v.max_abs;
    let tr = 5.0 * 2f64.powi(-v.level) * v.max_abs;
    let ok = v.reconstruction_error <= rec && v.max_residual_trace <= tr;
    (ok, format!("reconstruction {} (tol {}), residual trace {} (tol {})", v.reconstruction_error, rec, v.max_residual_trace, tr))
}

fn print_plan(plan: &DecompositionPlan) {
    println!("l0 {} orders {:?} critical {:?}", plan.l0, plan.orders, plan.critical_set);
}

fn decompose(a: &DecomposeArgs) -> Result<Verdict> {
    let f = read_gfn(&a.grid)?;
    let params = params(f.n(), &a.s, &a.p, a.q)?;
    let dec = Decomposer::new(&params, a.u, f.level())?.run(&f)?;
    write_decomposition(&a.out, &dec)?;
    print_plan(&dec.plan);
    let (ok, detail) = tolerances_hold(&dec);
    println!("{detail}");
    Ok(Verdict::check(a.assert, ok, || detail.clone()))
}

#[derive(Serialize)]
struct ReinforceRow {
    function: &'static str,
    face: String,
    growth: cellwave_core::hardy::Growth,
    rate: f64,
    last: f64,
    pass: bool,
}

/// W_2^1 on the unit square: plan, decomposition of one seeded smooth
/// function, and the corner reinforce table for f, its boundary extension
/// and the remainder.
fn w21_cube(big_j: i32, out: &Path, seed: u64) -> Result<Verdict> {
    let params = SpaceParams::rational(2, (1, 1), (2, 1), 2.0)?;
    let sample = smooth_corpus(2, 1, seed).remove(0);
    let f = sample.grid(Bbox::unit(2), big_j)?;
    ensure_dir(out)?;
    write_gfn(&out.join("input.gfn"), &f)?;
    let dec = Decomposer::new(&params, 2, big_j)?.run(&f)?;
    write_decomposition(&out.join("decompose"), &dec)?;
    let ext = f.zip_map(&dec.f_rloc, |a, b| a - b)?;
    let mut rows = Vec::new();
    for &l in &dec.plan.critical_set {
        let Some(r) = dec.plan.critical_order(l) else { continue };
        if l >= 2 {
            continue;
        }
        for face in FaceDescriptor::cube_faces(2, l) {
            for (name, g) in [("f", &f), ("extension", &ext), ("remainder", &dec.f_rloc)] {
                let rep = check_reinforce(g, &face, r, params.p, DEFAULT_EPS)?;
                for a in &rep.per_alpha {
                    rows.push(ReinforceRow {
                        function: name,
                        face: face.label(),
                        growth: a.growth,
                        rate: a.rate,
                        last: *a.values.last().unwrap_or(&f64::NAN),
                        pass: rep.pass,
                    });
                }
            }
        }
    }
    let table = out.join("reinforce.json");
    write_json(&table, &envelope("reinforce-table", &rows)?)?;
    let mut t = Table::new(&["function", "face", "growth", "rate", "last", "pass"]);
    for r in &rows {
        t.push(vec![r.function.into(), r.face.clone(), format!("{:?}", r.growth), num(r.rate), num(r.last), r.pass.to_string()]);
    }
    t.write(&sidecar(&table))?;
    let (ok, detail) = tolerances_hold(&dec);
    let summary = json!({
        "preset": "w21-cube", "J": big_j, "seed": seed, "params": params, "u": 2,
        "l0": dec.plan.l0, "orders": dec.plan.orders, "critical_set": dec.plan.critical_set,
        "tolerances_hold": ok, "sample": sample,
        "reinforce_pass": rows.iter().map(|r| (format!("{}@{}", r.function, r.face), r.pass)).collect::<std::collections::BTreeMap<_, _>>(),
    });
    write_json(&out.join("report.json"), &envelope("preset", summary)?)?;
    print_plan(&dec.plan);
    println!("{detail}");
    for r in &rows {
        println!("{:<10} {:<12} {:?} pass={}", r.function, r.face, r.growth, r.pass);
    }
    Ok(Verdict::Pass)
}

fn preset(a: &PresetArgs, seed: u64) -> Result<Verdict> {
    match a.name.as_str() {
        "w21-cube" => w21_cube(a.j, &a.out, seed),
        other => Err(Error::Invalid(format!("unknown preset '{other}' (w21-cube)"))),
    }
}
