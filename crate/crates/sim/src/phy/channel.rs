use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Antenna spacing in wavelengths, transmit and receive side.
pub const ANTENNA_SPACING: f64 = 0.5;

pub type Mat2 = [[Complex64; 2]; 2];

/// Unit-norm steering vector `(1, exp(−j2πΔ cos φ)) / √2`.
pub fn steering_vector(phi: f64, spacing: f64) -> [Complex64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        Complex64::new(s, 0.0),
        Complex64::from_polar(s, -2.0 * PI * spacing * phi.cos()),
    ]
}

/// A 2×2 channel realization; rows index receive antennas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub h: Mat2,
}

impl Channel {
    /// `H = √snr · Σ_i a_i e_r(φ_r,i) e_t(φ_t,i)^H` over `paths` paths with
    /// `a_i ~ CN(0, 1/paths)` and angles uniform on `[0, 2π)`.
    pub fn draw<R: Rng + ?Sized>(snr_linear: f64, paths: u8, rng: &mut R) -> Self {
        assert!(paths >= 1, "channel needs at least one path");
        let gain_std = (0.5 / f64::from(paths)).sqrt();
        let normal = Normal::new(0.0, gain_std).expect("finite std");
        let amp = snr_linear.sqrt();
        let mut h = [[Complex64::new(0.0, 0.0); 2]; 2];
        for _ in 0..paths {
            let a = Complex64::new(normal.sample(rng), normal.sample(rng));
            let er = steering_vector(rng.random_range(0.0..2.0 * PI), ANTENNA_SPACING);
            let et = steering_vector(rng.random_range(0.0..2.0 * PI), ANTENNA_SPACING);
            for (r, row) in h.iter_mut().enumerate() {
                for (t, entry) in row.iter_mut().enumerate() {
                    *entry += a * er[r] * et[t].conj();
                }
            }
        }
        for entry in h.iter_mut().flatten() {
            *entry *= amp;
        }
        Self { h }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut h = self.h;
        for entry in h.iter_mut().flatten() {
            *entry *= factor;
        }
        Self { h }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.h.iter().flatten().map(Complex64::norm_sqr).sum()
    }

    pub fn det(&self) -> Complex64 {
        self.h[0][0] * self.h[1][1] - self.h[0][1] * self.h[1][0]
    }

    pub fn apply(&self, x: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.h[0][0] * x[0] + self.h[0][1] * x[1],
            self.h[1][0] * x[0] + self.h[1][1] * x[1],
        ]
    }

    /// Zero-forcing equalizer: the inverse when `H` is well conditioned,
    /// otherwise the rank-one pseudo-inverse `H^H / ‖H‖²_F`. `None` for `H = 0`.
    pub fn zero_forcing(&self) -> Option<Mat2> {
        let f2 = self.frobenius_sq();
        if f2 == 0.0 {
            return None;
        }
        let h = &self.h;
        let det = self.det();
        if det.norm_sqr() < 1e-12 * f2 * f2 {
            let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
            for (r, row) in g.iter_mut().enumerate() {
                for (c, entry) in row.iter_mut().enumerate() {
                    *entry = h[c][r].conj() / f2;
                }
            }
            return Some(g);
        }
        Some([
            [h[1][1] / det, -h[0][1] / det],
            [-h[1][0] / det, h[0][0] / det],
        ])
    }
}
