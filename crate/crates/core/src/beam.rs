//! Fundamental Gaussian beams and the complex beam parameter.
//!
//! `q` here is the ordinary (not index-reduced) beam parameter,
//! `q(z) = (z - z0) + i·zR` with `zR = π·w0²·n/λ`, where `n` is the index of the
//! medium the beam is currently in. Ray-transfer matrices act on `(x, θ)` with
//! physical ray angles, so the plain law `q' = (A·q + B)/(C·q + D)` holds across
//! index steps and an element's determinant is `n_in/n_out`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::abcd::RayTransferElement;
use crate::error::{invalid, Error, Result};

/// A fundamental (TEM00) Gaussian mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamState {
    /// 1/e² intensity radius at the waist, m.
    pub waist_radius: f64,
    /// Axial waist position relative to the reference plane, m.
    pub waist_position: f64,
    /// Vacuum wavelength, m.
    pub wavelength: f64,
    pub medium_index: f64,
}

impl BeamState {
    pub fn new(waist_radius: f64, waist_position: f64, wavelength: f64, medium_index: f64) -> Result<Self> {
        if !(waist_radius > 0.0 && waist_radius.is_finite()) {
            return Err(invalid(format!("waist radius must be positive, got {waist_radius}")));
        }
        if !waist_position.is_finite() {
            return Err(invalid("waist position must be finite"));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(invalid(format!("wavelength must be positive, got {wavelength}")));
        }
        if !(medium_index >= 1.0 && medium_index.is_finite()) {
            return Err(invalid(format!("medium index must be >= 1, got {medium_index}")));
        }
        Ok(Self {
            waist_radius,
            waist_position,
            wavelength,
            medium_index,
        })
    }

    /// A beam in vacuum.
    pub fn in_vacuum(waist_radius: f64, waist_position: f64, wavelength: f64) -> Result<Self> {
        Self::new(waist_radius, waist_position, wavelength, 1.0)
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist_radius * self.waist_radius * self.medium_index / self.wavelength
    }

    /// Wavenumber inside the medium, rad/m.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.medium_index / self.wavelength
    }

    /// 1/e² intensity radius at axial position `z`.
    pub fn spot_radius(&self, z: f64) -> f64 {
        let u = (z - self.waist_position) / self.rayleigh_range();
        self.waist_radius * (1.0 + u * u).sqrt()
    }

    /// Wavefront radius of curvature at `z`; infinite at the waist.
    /// Positive when the beam is diverging (waist behind the plane).
    pub fn curvature_radius(&self, z: f64) -> f64 {
        let dz = z - self.waist_position;
        if dz == 0.0 {
            return f64::INFINITY;
        }
        let zr = self.rayleigh_range();
        dz + zr * zr / dz
    }

    pub fn q_at(&self, z: f64) -> ComplexBeamParameter {
        ComplexBeamParameter(Complex64::new(z - self.waist_position, self.rayleigh_range()))
    }

    /// Rebuilds the beam from `q` observed at the plane `plane_z`.
    pub fn from_q(q: ComplexBeamParameter, plane_z: f64, wavelength: f64, medium_index: f64) -> Result<Self> {
        let waist = q.waist_of(wavelength, medium_index)?;
        Self::new(waist.radius, plane_z + waist.offset, wavelength, medium_index)
    }

    /// Same beam with the reference plane moved to `origin` (old coordinates).
    pub fn shifted(&self, origin: f64) -> Self {
        Self {
            waist_position: self.waist_position - origin,
            ..*self
        }
    }
}

/// Waist location relative to the plane where `q` was observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waist {
    pub radius: f64,
    /// Signed distance from the plane to the waist, `-Re(q)`.
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexBeamParameter(pub Complex64);

impl ComplexBeamParameter {
    pub fn new(re: f64, im: f64) -> Self {
        Self(Complex64::new(re, im))
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }

    /// `q' = (A·q + B)/(C·q + D)`.
    pub fn apply(&self, el: &RayTransferElement) -> Result<Self> {
        let q = self.0;
        let den = q * el.c + el.d;
        if den.norm() <= f64::EPSILON * (el.c.abs() * q.norm() + el.d.abs()) {
            return Err(Error::SingularPropagation);
        }
        Ok(Self((q * el.a + el.b) / den))
    }

    pub fn waist_of(&self, wavelength: f64, medium_index: f64) -> Result<Waist> {
        let im = self.0.im;
        if !(im > 0.0) {
            return Err(Error::NonPhysicalBeam { im_q: im });
        }
        if !(wavelength > 0.0 && medium_index >= 1.0) {
            return Err(invalid("wavelength and index must be physical"));
        }
        Ok(Waist {
            radius: (wavelength * im / (PI * medium_index)).sqrt(),
            offset: -self.0.re,
        })
    }
}
