use cellwave_core::seqspace::f_norm_at;
use cellwave_core::wavelets::{build_box_system, build_domain_system, coefficient_norm, wavelet_norm};
use cellwave_core::whitney::{whitney_decompose, DomainDescriptor};
use cellwave_core::{Bbox, CoefficientField, SpaceParams, WaveletSystem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(sys: &WaveletSystem, rng: &mut ChaCha8Rng, density: f64) -> CoefficientField {
    let mut lam = CoefficientField::new(sys.geometry().clone());
    for (j, r) in sys.keys() {
        if rng.gen_bool(density) {
            // decay keeps the field in a moderate-smoothness class
            lam.insert(j, r, rng.gen_range(-1.0..1.0) * 2f64.powf(-(j as f64))).unwrap();
        }
    }
    lam
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn haar_analysis_inverts_synthesis(seed in 0u64..10_000, n in 1usize..3, density in 0.05f64..1.0) {
        let (jmax, res) = if n == 1 { (6, 7) } else { (4, 5) };
        let sys = build_box_system(n, 0, jmax, &Bbox::unit(n), res).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = random_field(&sys, &mut rng, density);
        let back = sys.analyze(&sys.synthesize(&lam).unwrap()).unwrap();
        // entries absent from λ must come back as zeros
        let mut worst: f64 = 0.0;
        for (j, r) in sys.keys() {
            worst = worst.max((back.get(j, r) - lam.get(j, r)).abs());
        }
        prop_assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn periodic_daubechies_round_trip(seed in 0u64..10_000, u in 1u32..4) {
        // sampled blocks are orthonormal only up to quadrature error, which
        // shrinks as the grid outruns the finest block level
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut errs = Vec::new();
        for res in [9, 11] {
            let sys = build_box_system(1, u, 5, &Bbox::unit(1), res).unwrap();
            let lam = random_field(&sys, &mut rng.clone(), 0.5);
            let back = sys.analyze(&sys.synthesize(&lam).unwrap()).unwrap();
            errs.push(sys.keys().iter().map(|&(j, r)| (back.get(j, r) - lam.get(j, r)).abs()).fold(0.0, f64::max));
        }
        prop_assert!(errs[1] < 1e-2 && errs[1] < 0.5 * errs[0], "u = {u}: {errs:?}");
    }
}

/// ‖synthesize(λ)‖ against ‖λ | f‖ for 20 seeded fields.
fn riesz_band(sys: &WaveletSystem, params: &SpaceParams, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..20 {
        let lam = random_field(sys, &mut rng, 0.7);
        let g = sys.synthesize(&lam).unwrap();
        let direct = wavelet_norm(&g, params, sys).unwrap();
        let seq = coefficient_norm(&lam, params).unwrap();
        let ratio = direct / seq;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}

#[test]
fn riesz_bounds_on_box_systems() {
    let params = SpaceParams::new(2, 1.0, 2.0, 2.0).unwrap();
    for u in [2, 3] {
        let sys = build_box_system(2, u, 4, &Bbox::unit(2), 7).unwrap();
        let (lo, hi) = riesz_band(&sys, &params, 40 + u as u64);
        let c = hi.max(1.0 / lo);
        assert!(c <= 16.0, "u = {u}: band [{lo}, {hi}]");
    }
}

#[test]
fn riesz_bounds_on_the_interior_system() {
    // the domain system is not orthonormal: compare the analysis of the
    // synthesized function with the seeded coefficients through f-norms
    let dec = whitney_decompose(&DomainDescriptor::unit_cube(2), 6).unwrap();
    let sys = build_domain_system(&dec, 1, 6, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut c: f64 = 1.0;
    for _ in 0..20 {
        let lam = random_field(&sys, &mut rng, 0.7);
        let back = sys.analyze(&sys.synthesize(&lam).unwrap()).unwrap();
        let a = f_norm_at(&back, 2.0, 2.0, Some(0.25), None).unwrap();
        let b = f_norm_at(&lam, 2.0, 2.0, Some(0.25), None).unwrap();
        c = c.max(a / b).max(b / a);
    }
    assert!(c <= 16.0, "C = {c}");
}

#[test]
fn interior_blocks_vanish_near_the_boundary() {
    let dec = whitney_decompose(&DomainDescriptor::unit_cube(2), 5).unwrap();
    for u in [0, 1, 2] {
        let sys = build_domain_system(&dec, u, 5, 8).unwrap();
        for (j, r) in sys.keys().into_iter().step_by(7) {
            let g = sys.render(j, r).unwrap();
            let margin = 2f64.powi(-(j as i32)) * 0.25;
            for (i, v) in g.values().iter().enumerate() {
                if *v != 0.0 {
                    let x = g.midpoint_flat(i);
                    let d = x.iter().map(|t| t.min(1.0 - t)).fold(f64::INFINITY, f64::min);
                    assert!(d > margin, "u = {u}, block ({j}, {r}) reaches d = {d}");
                }
            }
        }
    }
}
