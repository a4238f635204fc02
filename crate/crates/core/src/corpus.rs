//! Seeded smooth test functions shared by the experiments.

use crate::error::Result;
use crate::grid::{Bbox, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// c + ⟨b, x⟩ + Σ a_k exp(−|x − x_k|²/(2σ_k²)) + Σ a'_k cos(⟨w_k, x⟩ + θ_k).
#[derive(Clone, Debug, Serialize)]
pub struct SmoothSample {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub bumps: Vec<(f64, Vec<f64>, f64)>,
    pub waves: Vec<(f64, Vec<f64>, f64)>,
}

impl SmoothSample {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant + self.linear.iter().zip(x).map(|(b, t)| b * t).sum::<f64>();
        for (a, c, s) in &self.bumps {
            let r2: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci).powi(2)).sum();
            v += a * (-r2 / (2.0 * s * s)).exp();
        }
        for (a, w, th) in &self.waves {
            v += a * (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + th).cos();
        }
        v
    }

    pub fn grid(&self, bbox: Bbox, level: i32) -> Result<GridFunction> {
        GridFunction::from_fn(bbox, level, |x| self.eval(x))
    }
}

/// `count` smooth functions on the unit cube, none vanishing on the boundary.
pub fn smooth_corpus(n: usize, count: usize, seed: u64) -> Vec<SmoothSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| SmoothSample {
            constant: rng.gen_range(0.5..1.5),
            linear: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bumps: (0..2)
                .map(|_| {
                    let a = rng.gen_range(-1.0..1.0);
                    let c = (0..n).map(|_| rng.gen_range(-0.2..1.2)).collect();
                    (a, c, rng.gen_range(0.15..0.4))
                })
                .collect(),
            waves: (0..2)
                .map(|_| {
                    let a = rng.gen_range(-0.5..0.5);
                    let w = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
                    (a, w, rng.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect(),
        })
        .collect()
}
