//! Knife-edge beam profiling: synthetic scans and Gaussian-beam fits.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{PI, SQRT_2};

use crate::beam::BeamState;
use crate::error::{invalid, Error, Result};
use crate::numerics::optimize::{levenberg_marquardt, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnifeEdgeSample {
    /// Axial plane, m.
    pub z: f64,
    /// Knife position across the beam, m (edge blocks `x' < x`).
    pub x: f64,
    /// Transmitted power fraction.
    pub power_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnifeEdgeDataset {
    pub samples: Vec<KnifeEdgeSample>,
}

/// Ideal transmitted fraction past an edge at `x` for spot radius `w`.
pub fn edge_transmission(x: f64, w: f64) -> f64 {
    0.5 * libm::erfc(SQRT_2 * x / w)
}

impl KnifeEdgeDataset {
    pub fn new(samples: Vec<KnifeEdgeSample>) -> Result<Self> {
        for s in &samples {
            if !(s.z.is_finite() && s.x.is_finite() && s.power_fraction.is_finite()) {
                return Err(invalid("knife-edge samples must be finite"));
            }
            if !(0.0..=1.0).contains(&s.power_fraction) {
                return Err(invalid(format!(
                    "power fraction {} outside [0, 1]",
                    s.power_fraction
                )));
            }
        }
        Ok(Self { samples })
    }

    /// Distinct axial planes in ascending order.
    pub fn planes(&self) -> Vec<f64> {
        let mut zs: Vec<f64> = self.samples.iter().map(|s| s.z).collect();
        zs.sort_by(f64::total_cmp);
        zs.dedup();
        zs
    }

    fn plane(&self, z: f64) -> Vec<KnifeEdgeSample> {
        let mut v: Vec<_> = self.samples.iter().filter(|s| s.z == z).copied().collect();
        v.sort_by(|a, b| a.x.total_cmp(&b.x));
        v
    }

    /// Whether the transmitted fraction never increases with `x` in any plane.
    /// Always true for noiseless data.
    pub fn is_monotone(&self) -> bool {
        self.planes()
            .into_iter()
            .all(|z| self.plane(z).windows(2).all(|w| w[1].power_fraction <= w[0].power_fraction))
    }
}

/// Samples `½·erfc(√2·x/w(z))` on the `z_list × x_list` grid, adding Gaussian
/// noise of standard deviation `noise_rms` and clamping to `[0, 1]`.
pub fn simulate_knife_edge<R: Rng + ?Sized>(
    beam: &BeamState,
    z_list: &[f64],
    x_list: &[f64],
    noise_rms: f64,
    rng: &mut R,
) -> KnifeEdgeDataset {
    let normal = Normal::new(0.0, noise_rms.max(0.0)).expect("finite standard deviation");
    let mut samples = Vec::with_capacity(z_list.len() * x_list.len());
    for &z in z_list {
        let w = beam.spot_radius(z);
        for &x in x_list {
            let mut p = edge_transmission(x, w);
            if noise_rms > 0.0 {
                p = (p + normal.sample(rng)).clamp(0.0, 1.0);
            }
            samples.push(KnifeEdgeSample { z, x, power_fraction: p });
        }
    }
    KnifeEdgeDataset { samples }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamFit {
    pub beam: BeamState,
    /// Covariance of `(w0, z0)`, m².
    pub covariance: [[f64; 2]; 2],
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
}

impl BeamFit {
    pub fn waist_radius_std(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn waist_position_std(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

fn plane_width(samples: &[KnifeEdgeSample]) -> Option<f64> {
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    if !(span > 0.0) {
        return None;
    }
    let fit = levenberg_marquardt(
        |p| {
            samples
                .iter()
                .map(|s| edge_transmission(s.x, p[0].abs().max(1e-12)) - s.power_fraction)
                .collect()
        },
        &[span / 4.0],
        &[span / 4.0],
        LmOptions::default(),
    )
    .ok()?;
    Some(fit.params[0].abs())
}

/// Least-squares fit of a Gaussian beam `(w0, z0)` in vacuum to knife-edge data.
pub fn fit_beam(data: &KnifeEdgeDataset, wavelength: f64) -> Result<BeamFit> {
    if !(wavelength > 0.0) {
        return Err(invalid("wavelength must be positive"));
    }
    let planes = data.planes();
    if planes.len() < 2 {
        return Err(invalid(format!(
            "need at least 2 distinct z planes, got {}",
            planes.len()
        )));
    }
    let mut widths = Vec::new();
    for &z in &planes {
        let plane = data.plane(z);
        if plane.len() < 5 {
            return Err(invalid(format!(
                "plane z = {z:e} m has {} edge positions, need at least 5",
                plane.len()
            )));
        }
        if let Some(w) = plane_width(&plane) {
            widths.push((z, w));
        }
    }
    if widths.len() < 2 {
        return Err(Error::FitFailure {
            iterations: 0,
            cost: f64::NAN,
            reason: "could not estimate per-plane widths".into(),
        });
    }

    // Start from w² = a·z² + b·z + c through the per-plane widths.
    let (w_min_z, w_min) = widths
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let mut start = (w_min, w_min_z);
    if widths.len() >= 3 {
        let zbar = widths.iter().map(|p| p.0).sum::<f64>() / widths.len() as f64;
        let zs = widths.iter().map(|p| (p.0 - zbar).abs()).fold(0.0, f64::max).max(1e-12);
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for &(z, w) in &widths {
            let u = (z - zbar) / zs;
            let row = nalgebra::Vector3::new(u * u, u, 1.0);
            ata += row * row.transpose();
            atb += row * (w * w);
        }
        if let Some(sol) = ata.lu().solve(&atb) {
            let (a, b, c) = (sol[0], sol[1], sol[2]);
            if a > 0.0 {
                let w0sq = c - b * b / (4.0 * a);
                if w0sq > 0.0 {
                    start = (w0sq.sqrt(), zbar - b / (2.0 * a) * zs);
                }
            }
        }
    }

    let residuals = |p: &[f64]| -> Vec<f64> {
        let w0 = p[0].abs().max(1e-12);
        let zr = PI * w0 * w0 / wavelength;
        data.samples
            .iter()
            .map(|s| {
                let u = (s.z - p[1]) / zr;
                edge_transmission(s.x, w0 * (1.0 + u * u).sqrt()) - s.power_fraction
            })
            .collect()
    };
    let zr0 = PI * start.0 * start.0 / wavelength;
    let fit = levenberg_marquardt(
        residuals,
        &[start.0, start.1],
        &[start.0, zr0],
        LmOptions {
            max_iterations: 300,
            ..Default::default()
        },
    )?;
    let beam = BeamState::in_vacuum(fit.params[0].abs(), fit.params[1], wavelength)?;
    let c = &fit.covariance;
    Ok(BeamFit {
        beam,
        covariance: [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]],
        cost: fit.cost,
        iterations: fit.iterations,
    })
}
