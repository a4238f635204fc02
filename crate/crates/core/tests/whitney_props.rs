use cellwave_core::whitney::{verify_whitney, whitney_decompose, DomainDescriptor};
use cellwave_core::Bbox;
use proptest::prelude::*;

fn domain(kind: u8, n: usize, l: usize, corner: u8) -> DomainDescriptor {
    match kind {
        0 => DomainDescriptor::unit_cube(n),
        1 => DomainDescriptor::plane_complement(n, l.min(n - 1), None).unwrap(),
        _ => {
            // complement of a closed face of the unit cube
            let fixed = (0..n).map(|d| if d < n - l.min(n - 1) { Some(((corner >> d) & 1) as f64) } else { None }).collect();
            DomainDescriptor::face_complement(fixed, None)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn whitney_certificates_hold(kind in 0u8..3, n in 1usize..3, l in 0usize..2, corner in 0u8..4, max_level in 3u32..8) {
        let d = domain(kind, n, l, corner);
        let dec = whitney_decompose(&d, max_level).unwrap();
        prop_assert!(!dec.cubes.is_empty());
        let v = verify_whitney(&dec, max_level).unwrap();
        prop_assert_eq!(v.total(), 0, "{:?} at level {}: {:?}", d.kind, max_level, v);
        if max_level >= 5 {
            prop_assert!(v.checked_midpoints > 0);
        }
    }
}

#[test]
fn three_dimensional_spot_checks() {
    for d in [
        DomainDescriptor::unit_cube(3),
        DomainDescriptor::plane_complement(3, 1, Some(Bbox::cube(3, -1.0, 1.0))).unwrap(),
        DomainDescriptor::face_complement(vec![Some(0.0), Some(1.0), None], None),
    ] {
        let dec = whitney_decompose(&d, 5).unwrap();
        let v = verify_whitney(&dec, 5).unwrap();
        assert_eq!(v.total(), 0, "{:?}: {v:?}", d.kind);
    }
}

#[test]
fn cube_counts_grow_with_the_boundary() {
    // the number of cubes at level ν scales like the boundary measure 2^{ν(n−1)}
    let dec = whitney_decompose(&DomainDescriptor::unit_cube(2), 9).unwrap();
    let counts = dec.level_counts();
    let levels: Vec<u32> = counts.keys().copied().filter(|&j| (5..9).contains(&j)).collect();
    for w in levels.windows(2) {
        let ratio = counts[&w[1]] as f64 / counts[&w[0]] as f64;
        assert!((1.8..2.4).contains(&ratio), "{counts:?}");
    }
}
