//! Daubechies filters and exact dyadic values of φ and ψ.
//!
//! Values at the integers come from the eigenvector of the refinement
//! matrix; values at finer dyadics follow from the refinement equation,
//! so every table entry is exact up to round-off (no cascade truncation).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Low-pass filter of DB(u+1); u = 0 is Haar.
pub fn lowpass(u: u32) -> Result<Vec<f64>> {
    Ok(match u {
        0 => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
        1 => {
            let s3 = 3f64.sqrt();
            let d = 4.0 * 2f64.sqrt();
            vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
        }
        2 => vec![
            0.332_670_552_950_082_6,
            0.806_891_509_311_092_5,
            0.459_877_502_118_491_5,
            -0.135_011_020_010_254_5,
            -0.085_441_273_882_026_7,
            0.035_226_291_885_709_5,
        ],
        3 => vec![
            0.230_377_813_308_896_4,
            0.714_846_570_552_915_4,
            0.630_880_767_929_858_7,
            -0.027_983_769_416_859_9,
            -0.187_034_811_719_093_1,
            0.030_841_381_835_560_7,
            0.032_883_011_666_885_2,
            -0.010_597_401_785_069_0,
        ],
        _ => return Err(Error::UnsupportedOrder(u)),
    })
}

/// High-pass filter g_k = (−1)^k h_{L−1−k}.
pub fn highpass(u: u32) -> Result<Vec<f64>> {
    let h = lowpass(u)?;
    let l = h.len();
    Ok((0..l).map(|k| if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] }).collect())
}

/// φ and ψ sampled at x = i 2^{-depth}, i = 0..=(L−1) 2^{depth}.
#[derive(Clone, Debug)]
pub struct DaubTable {
    pub u: u32,
    pub depth: u32,
    pub len: usize,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DaubTable {
    pub fn new(u: u32, depth: u32) -> Result<Self> {
        let h = lowpass(u)?;
        let g = highpass(u)?;
        let l = h.len();
        let sq2 = 2f64.sqrt();
        // φ at the integers 0..L−1
        let mut ints = vec![0.0; l];
        if l == 2 {
            ints[0] = 1.0;
        } else {
            let m = l - 2;
            let mut a = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                for k in 0..m {
                    let idx = 2 * (i + 1) as i64 - (k + 1) as i64;
                    if idx >= 0 && (idx as usize) < l {
                        a[(i, k)] = sq2 * h[idx as usize];
                    }
                }
                a[(i, i)] -= 1.0;
            }
            for k in 0..m {
                a[(m - 1, k)] = 1.0;
            }
            let mut rhs = DVector::<f64>::zeros(m);
            rhs[m - 1] = 1.0;
            let v = a.lu().solve(&rhs).ok_or_else(|| Error::Invalid("refinement system singular".into()))?;
            for k in 0..m {
                ints[k + 1] = v[k];
            }
        }
        let mut phi = ints;
        for d in 1..=depth + 1 {
            let step = 1usize << (d - 1);
            let size = (l - 1) * (1usize << d) + 1;
            let mut next = vec![0.0; size];
            for (i, slot) in next.iter_mut().enumerate() {
                if i % 2 == 0 {
                    *slot = phi[i / 2];
                    continue;
                }
                let mut acc = 0.0;
                for (k, hk) in h.iter().enumerate() {
                    let idx = i as i64 - (k * step) as i64;
                    if idx >= 0 && (idx as usize) < phi.len() {
                        acc += hk * phi[idx as usize];
                    }
                }
                *slot = sq2 * acc;
            }
            phi = next;
        }
        // phi now at depth+1; ψ(i/2^D) = √2 Σ g_k φ((2i − k 2^D)/2^D)
        let fine = 1usize << depth;
        let size = (l - 1) * fine + 1;
        let mut psi = vec![0.0; size];
        for (i, slot) in psi.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                // index at depth+1 of 2x − k is 2·(2i) − k·2^{depth+1}... use depth+1 grid
                let idx = 2 * (2 * i) as i64 - (k * 2 * fine) as i64;
                if idx >= 0 && (idx as usize) < phi.len() {
                    acc += gk * phi[idx as usize];
                }
            }
            *slot = sq2 * acc;
        }
        let phi_d: Vec<f64> = (0..size).map(|i| phi[2 * i]).collect();
        Ok(DaubTable { u, depth, len: l, phi: phi_d, psi })
    }

    fn lookup(&self, table: &[f64], x: f64) -> f64 {
        let s = 2f64.powi(self.depth as i32);
        let t = x * s;
        let i = t.round();
        debug_assert!((t - i).abs() < 1e-6, "non-dyadic evaluation point {x}");
        if i < 0.0 || i as usize >= table.len() {
            return 0.0;
        }
        table[i as usize]
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.lookup(&self.phi, x)
    }

    pub fn psi(&self, x: f64) -> f64 {
        self.lookup(&self.psi, x)
    }

    pub fn support(&self) -> f64 {
        (self.len - 1) as f64
    }
}
