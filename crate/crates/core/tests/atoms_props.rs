use cellwave_core::atoms::{check_atom, dilate_atom, make_local_means, LocalMeansKernels};
use cellwave_core::grid::hoelder_norm;
use cellwave_core::{DyadicCube, GridFunction, SpaceParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: f64 = 2.0;

fn params() -> SpaceParams {
    SpaceParams::new(1, 0.5, 2.0, 2.0).unwrap()
}

/// 2^{-ν(s−n/p)} k(2^ν(x − c)) sampled on 2·Q at resolution ν + 8.
fn atom_from_kernel(kern: &LocalMeansKernels, cube: &DyadicCube, params: &SpaceParams, amp: f64) -> GridFunction {
    let c = cube.center();
    let scale = 2f64.powi(cube.nu);
    let h = 2f64.powf(-(cube.nu as f64) * (params.s - params.n as f64 / params.p));
    GridFunction::from_fn(cube.dilated_box(D), cube.nu + 8, |x| {
        let y: Vec<f64> = x.iter().zip(&c).map(|(t, ci)| (t - ci) * scale).collect();
        amp * h * kern.eval_k(&y)
    })
    .unwrap()
}

/// Ten seeded 1-D atoms with 0–3 vanishing moments at levels 2–4.
fn corpus() -> Vec<(GridFunction, DyadicCube)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = params();
    (0..10)
        .map(|_| {
            let order = rng.gen_range(0..4u32);
            let e = rng.gen_range(1.0..1.8);
            let kern = make_local_means(1, order, e, 10).unwrap();
            let cube = DyadicCube::new(rng.gen_range(2..5), vec![rng.gen_range(-3..4)]);
            let amp = rng.gen_range(0.2..1.0);
            (atom_from_kernel(&kern, &cube, &p, amp), cube)
        })
        .collect()
}

fn moment_ratio(r: &cellwave_core::atoms::AtomReport) -> f64 {
    r.moments.iter().map(|m| m.value / m.bound).fold(0.0, f64::max)
}

#[test]
fn conditions_weaken_with_smaller_indices() {
    // an atom for (K, L) with constant C is one for every (K', L') ≤ (K, L)
    let p = params();
    let steps = [0.0, 1.0, 1.5, 2.0];
    for (i, (a, cube)) in corpus().iter().enumerate() {
        let c = check_atom(a, cube, &p, 2.0, 2.0, D, 1.0).unwrap().measured_c;
        for &k in &steps {
            for &l in &steps {
                let r = check_atom(a, cube, &p, k, l, D, c).unwrap();
                assert!(r.verdict, "atom {i} at (K, L) = ({k}, {l}): {} > {c}", r.measured_c);
            }
        }
    }
}

#[test]
fn dilation_preserves_the_size_condition() {
    let p = params();
    for (i, (a, cube)) in corpus().iter().enumerate() {
        let base = check_atom(a, cube, &p, 1.5, 1.5, D, 1.0).unwrap();
        for j in 1..=cube.nu.min(2) {
            let (b, bc) = dilate_atom(a, cube, j, &p).unwrap();
            assert_eq!(bc.nu, cube.nu - j);
            let r = check_atom(&b, &bc, &p, 1.5, 1.5, D, base.measured_c).unwrap();
            // hoelder_bound carries the C it was checked with
            let (x, y) = (base.hoelder_value / base.hoelder_bound, r.hoelder_value / r.hoelder_bound * base.measured_c);
            assert!((x - y).abs() <= 1e-9 * x, "atom {i}, j = {j}: {x} vs {y}");
            // moments of order < L only get relatively smaller at coarser levels
            assert!(r.verdict, "atom {i}, j = {j}: {} > {}", r.measured_c, base.measured_c);
        }
    }
}

#[test]
fn smooth_multipliers_keep_atoms() {
    // ‖φa‖_atom ≤ c·‖φ|C^ρ‖·‖a‖_atom with ρ = 2 > max(K, L); observed c ≤ 1/4
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for (a, cube) in corpus() {
        let base = check_atom(&a, &cube, &p, 1.5, 1.5, D, 1.0).unwrap().measured_c;
        for _ in 0..3 {
            let (c0, c1, w) = (rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-4.0..4.0));
            let phi = GridFunction::from_fn(a.bbox().clone(), a.level(), |x| c0 + c1 * (w * x[0]).sin()).unwrap();
            let prod = a.zip_map(&phi, |u, v| u * v).unwrap();
            let r = check_atom(&prod, &cube, &p, 1.5, 1.5, D, 1.0).unwrap();
            assert!(r.support_ok);
            worst = worst.max(r.measured_c / (hoelder_norm(&phi, 2.0).unwrap() * base));
        }
    }
    assert!(worst <= 1.0, "c = {worst}");
}

#[test]
fn local_means_kernels_are_atoms_below_their_order() {
    // 2^{-ν(s−n/p)} k(2^ν ·) has N vanishing moments: the atom constant is
    // level independent for L ≤ N, while for L > N the moment of order N
    // grows like 2^{ν(L−N)} and eventually breaks any fixed C
    let p = params();
    for order in [1u32, 2] {
        let kern = make_local_means(1, order, 1.0, 10).unwrap();
        let at = |nu: i32, l: f64| {
            let cube = DyadicCube::new(nu, vec![0]);
            check_atom(&atom_from_kernel(&kern, &cube, &p, 1.0), &cube, &p, 0.0, l, D, 1.0).unwrap()
        };
        let n = order as f64;
        let c = at(1, n).measured_c;
        for l in [n - 0.5, n] {
            for nu in [1, 4, 8, 12, 16] {
                let r = at(nu, l);
                assert!((r.measured_c - c).abs() <= 1e-9 * c, "N = {order}, L = {l}, ν = {nu}: {}", r.measured_c);
                assert!(moment_ratio(&r) < 1e-4);
            }
        }
        let l = n + 0.5;
        let ratios: Vec<f64> = [4, 8, 12, 16].iter().map(|&nu| moment_ratio(&at(nu, l))).collect();
        for w in ratios.windows(2) {
            assert!((w[1] / w[0] - 4.0).abs() < 1e-6, "N = {order}: {ratios:?}");
        }
        assert!(at(16, l).measured_c > 2.0 * c, "N = {order}: {ratios:?}");
    }
}
