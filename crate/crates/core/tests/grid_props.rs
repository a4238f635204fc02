use cellwave_core::corpus::smooth_corpus;
use cellwave_core::grid::{finite_diff, hoelder_norm, integrate_lp, read_gfn, write_gfn};
use cellwave_core::{Bbox, GridFunction};
use proptest::prelude::*;

fn grid_from(values: Vec<f64>, n: usize, level: i32) -> GridFunction {
    GridFunction::new(Bbox::unit(n), level, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quadrature_is_absolutely_homogeneous(
        values in prop::collection::vec(-10.0f64..10.0, 256),
        a in -5.0f64..5.0,
        p in 1.0f64..4.0,
    ) {
        let f = grid_from(values, 2, 4);
        let lhs = integrate_lp(&f.scaled(a), p, None).unwrap();
        let rhs = a.abs() * integrate_lp(&f, p, None).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300), "{lhs} vs {rhs}");
    }

    #[test]
    fn finite_diff_commutes_with_cell_shifts(
        shift in 0usize..16,
        order in 1u32..3,
        axis in 0usize..2,
        seed in 0u64..1000,
    ) {
        // one field on [0,2]×[0,1]; two unit windows offset by `shift` cells
        let level = 5;
        let c = (seed as f64) * 0.01;
        let big = GridFunction::from_fn(Bbox::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(), level, |x| {
            (3.0 * x[0] + c).sin() * (1.0 + x[1] * x[1]) + (x[0] * x[1] - c).cos()
        })
        .unwrap();
        let h = big.spacing();
        let a = big.restrict(&Bbox::unit(2)).unwrap();
        let b = big.restrict(&Bbox::new(vec![shift as f64 * h, 0.0], vec![1.0 + shift as f64 * h, 1.0]).unwrap()).unwrap();
        let mut alpha = vec![0u32; 2];
        alpha[axis] = order;
        let da = finite_diff(&a, &alpha).unwrap();
        let db = finite_diff(&b, &alpha).unwrap();
        let dims = a.dims().to_vec();
        let margin = 2;
        for i in margin..dims[0] - margin - shift {
            for k in margin..dims[1] - margin {
                let x = da.values()[a.flat(&[i + shift, k])];
                let y = db.values()[b.flat(&[i, k])];
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn gfn_write_read_write_is_byte_stable(values in prop::collection::vec(prop::num::f64::NORMAL, 64)) {
        let dir = tempfile::tempdir().unwrap();
        let f = grid_from(values, 1, 6);
        let first = dir.path().join("a.gfn");
        let second = dir.path().join("b.gfn");
        write_gfn(&first, &f).unwrap();
        let back = read_gfn(&first).unwrap();
        prop_assert_eq!(&back, &f);
        write_gfn(&second, &back).unwrap();
        prop_assert_eq!(std::fs::read(dir.path().join("a.f64")).unwrap(), std::fs::read(dir.path().join("b.f64")).unwrap());
        let m1 = std::fs::read_to_string(&first).unwrap().replace("a.f64", "X");
        let m2 = std::fs::read_to_string(&second).unwrap().replace("b.f64", "X");
        prop_assert_eq!(m1, m2);
    }
}

#[test]
fn quadrature_errors_shrink_under_refinement() {
    let f = |x: &[f64]| (x[0] * x[1] + 0.3).exp() * (2.0 * x[0]).cos();
    let vals: Vec<f64> = (6..=10)
        .map(|level| integrate_lp(&GridFunction::from_fn(Bbox::unit(2), level, f).unwrap(), 2.0, None).unwrap())
        .collect();
    let steps: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in steps.windows(2) {
        assert!(w[1] < w[0], "{steps:?}");
    }
    // midpoint rule: the steps shrink by about 4 per level
    assert!(steps[0] / steps[1] > 3.0);
}

#[test]
fn hoelder_product_bound_on_corpus() {
    let corpus: Vec<GridFunction> = smooth_corpus(2, 10, 3).iter().map(|s| s.grid(Bbox::unit(2), 5).unwrap()).collect();
    for sigma in [0.5, 1.5] {
        let mut c: f64 = 0.0;
        for (i, f) in corpus.iter().enumerate() {
            for g in [&corpus[(i + 1) % 10], &corpus[(i + 3) % 10]] {
                let prod = f.zip_map(g, |a, b| a * b).unwrap();
                let ratio = hoelder_norm(&prod, sigma).unwrap() / (hoelder_norm(f, sigma).unwrap() * hoelder_norm(g, sigma).unwrap());
                c = c.max(ratio);
            }
        }
        // Leibniz rule with sup-norm parts: the constant stays below 2^{⌈σ⌉}
        assert!(c.is_finite() && c <= 2f64.powi(sigma.ceil() as i32), "σ = {sigma}: C = {c}");
    }
}
