//! Transverse field profiles on a common plane.
//!
//! All profiles are unit-normalized. One-dimensional profiles integrate to one
//! over `x`; radial profiles integrate to one with the measure `2πr dr`.

use num_complex::Complex64;
use std::f64::consts::{PI, SQRT_2};

use crate::beam::BeamState;
use crate::numerics::special::{hermite_functions, laguerre};

/// Spot radius and complex curvature `1/q` of a beam at plane `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBeam {
    pub spot: f64,
    /// `1/q`, whose real part is the wavefront curvature.
    pub inv_q: Complex64,
    pub wavenumber: f64,
}

impl PlaneBeam {
    pub fn of(beam: &BeamState, z: f64) -> Self {
        Self {
            spot: beam.spot_radius(z),
            inv_q: beam.q_at(z).0.inv(),
            wavenumber: beam.wavenumber(),
        }
    }

    /// `exp(-i k x² / 2q)`, i.e. Gaussian amplitude times curvature phase.
    fn envelope(&self, x2: f64) -> Complex64 {
        (Complex64::new(0.0, -0.5 * self.wavenumber * x2) * self.inv_q).exp()
    }

    fn curvature_phase(&self, x2: f64) -> Complex64 {
        Complex64::from_polar(1.0, -0.5 * self.wavenumber * x2 * self.inv_q.re)
    }

    /// Normalized fundamental Gaussian along one transverse axis.
    pub fn gaussian_1d(&self, x: f64) -> Complex64 {
        self.envelope(x * x) * (2.0 / PI).powf(0.25) / self.spot.sqrt()
    }

    /// Normalized axially symmetric fundamental Gaussian.
    pub fn gaussian_radial(&self, r: f64) -> Complex64 {
        self.envelope(r * r) * (2.0 / PI).sqrt() / self.spot
    }

    /// Hermite-Gauss profiles of orders `0..out.len()` along one axis, Gouy phase omitted.
    pub fn hermite_gauss_1d(&self, x: f64, scratch: &mut [f64], out: &mut [Complex64]) {
        let xi = SQRT_2 * x / self.spot;
        hermite_functions(xi, scratch);
        let norm = (SQRT_2 / self.spot).sqrt();
        let phase = self.curvature_phase(x * x);
        for (o, h) in out.iter_mut().zip(scratch.iter()) {
            *o = phase * (h * norm);
        }
    }

    /// Radial Laguerre-Gauss `LG_p0`, Gouy phase omitted.
    pub fn laguerre_gauss_radial(&self, p: usize, r: f64) -> Complex64 {
        let u = 2.0 * r * r / (self.spot * self.spot);
        let amp = (2.0 / PI).sqrt() / self.spot * laguerre(p, u) * (-0.5 * u).exp();
        self.curvature_phase(r * r) * amp
    }
}
