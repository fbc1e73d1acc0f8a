//! Two-mirror Fabry-Pérot resonator: eigenmode, resonance comb, aperture
//! clipping and finesse.
//!
//! Mirror 1 is the input mirror at `z = 0`; mirror 2 sits at `z = L`. Mirror
//! radii are positive when concave towards the cavity. Higher-order modes are
//! labelled by Hermite-Gauss indices `(n, m)`; all modes of equal total order
//! `n + m` share one resonance frequency.

use std::f64::consts::PI;
use std::fmt;

use crate::abcd::RayTransferElement;
use crate::beam::BeamState;
use crate::error::{invalid, Error, Result};
use crate::numerics::quadrature::{integrate_to_infinity, Tolerance};
use crate::numerics::special::hermite_functions;
use crate::units::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    pub length: f64,
    pub r1: f64,
    pub r2: f64,
    /// Effective mirror aperture radii, m.
    pub aperture1: f64,
    pub aperture2: f64,
    /// Mirror power transmissions.
    pub t1: f64,
    pub t2: f64,
    /// Excess (absorption and scatter) loss per mirror.
    pub loss1: f64,
    pub loss2: f64,
    pub wavelength: f64,
}

/// Default mirror transmission (50 ppm).
pub const DEFAULT_MIRROR_TRANSMISSION: f64 = 50e-6;
/// Coating excess loss per mirror (20 ppm).
pub const DEFAULT_MIRROR_LOSS: f64 = 20e-6;
/// Default radius of the ablated mirror structure; the effective aperture is 0.8 of it.
pub const DEFAULT_STRUCTURE_RADIUS: f64 = 50e-6;
pub const APERTURE_FILL_FACTOR: f64 = 0.8;

impl CavityGeometry {
    /// Geometry with default apertures, transmissions and losses.
    pub fn new(length: f64, r1: f64, r2: f64, wavelength: f64) -> Result<Self> {
        let a = APERTURE_FILL_FACTOR * DEFAULT_STRUCTURE_RADIUS;
        Self {
            length,
            r1,
            r2,
            aperture1: a,
            aperture2: a,
            t1: DEFAULT_MIRROR_TRANSMISSION,
            t2: DEFAULT_MIRROR_TRANSMISSION,
            loss1: DEFAULT_MIRROR_LOSS,
            loss2: DEFAULT_MIRROR_LOSS,
            wavelength,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(invalid(format!("cavity length must be positive, got {}", self.length)));
        }
        if !(self.r1 > 0.0 && self.r2 > 0.0) {
            return Err(invalid("mirror radii must be positive (concave)"));
        }
        if !(self.aperture1 > 0.0 && self.aperture2 > 0.0) {
            return Err(invalid("mirror apertures must be positive"));
        }
        for (name, v) in [("t1", self.t1), ("t2", self.t2), ("loss1", self.loss1), ("loss2", self.loss2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.wavelength > 0.0) {
            return Err(invalid("wavelength must be positive"));
        }
        Ok(self)
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self { length, ..*self }.validated()
    }

    pub fn g1(&self) -> f64 {
        1.0 - self.length / self.r1
    }

    pub fn g2(&self) -> f64 {
        1.0 - self.length / self.r2
    }

    pub fn is_stable(&self) -> bool {
        let p = self.g1() * self.g2();
        p > 0.0 && p < 1.0
    }

    /// Round trip starting just after mirror 1, heading towards mirror 2.
    pub fn round_trip_matrix(&self) -> Result<RayTransferElement> {
        let gap = RayTransferElement::free_space(self.length, 1.0)?;
        RayTransferElement::chain(&[
            gap,
            RayTransferElement::mirror(self.r2, 1.0)?,
            gap,
            RayTransferElement::mirror(self.r1, 1.0)?,
        ])
    }
}

/// Hermite-Gauss transverse order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeOrder {
    pub n: u32,
    pub m: u32,
}

impl ModeOrder {
    pub const FUNDAMENTAL: ModeOrder = ModeOrder { n: 0, m: 0 };

    pub fn new(n: u32, m: u32) -> Self {
        Self { n, m }
    }

    pub fn total(&self) -> u32 {
        self.n + self.m
    }

    /// All orders with `n + m <= max_total`, sorted by total order.
    pub fn up_to(max_total: u32) -> Vec<ModeOrder> {
        (0..=max_total)
            .flat_map(|t| (0..=t).rev().map(move |n| ModeOrder::new(n, t - n)))
            .collect()
    }
}

impl fmt::Display for ModeOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TEM{}{}", self.n, self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mirror {
    One,
    Two,
}

/// Solved fundamental eigenmode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityMode {
    pub waist_radius: f64,
    /// Waist distance from mirror 1.
    pub waist_position: f64,
    pub g1: f64,
    pub g2: f64,
    /// Free spectral range, Hz.
    pub fsr: f64,
    /// One-way Gouy phase, rad; order `N` resonates `N·gouy/π` FSR above the fundamental.
    pub gouy: f64,
    pub spot_mirror1: f64,
    pub spot_mirror2: f64,
    pub geometry: CavityGeometry,
}

impl CavityMode {
    /// The mode as a vacuum beam with `z` measured from mirror 1.
    pub fn beam(&self) -> BeamState {
        BeamState {
            waist_radius: self.waist_radius,
            waist_position: self.waist_position,
            wavelength: self.geometry.wavelength,
            medium_index: 1.0,
        }
    }

    /// Waist distance from mirror 2.
    pub fn waist_from_mirror2(&self) -> f64 {
        self.geometry.length - self.waist_position
    }

    pub fn spot_on(&self, mirror: Mirror) -> f64 {
        match mirror {
            Mirror::One => self.spot_mirror1,
            Mirror::Two => self.spot_mirror2,
        }
    }
}

/// `c / 2L`.
pub fn fsr(length: f64) -> f64 {
    SPEED_OF_LIGHT / (2.0 * length)
}

/// Closed-form two-mirror eigenmode.
pub fn solve_mode(geom: &CavityGeometry) -> Result<CavityMode> {
    let geom = geom.validated()?;
    let (l, lambda) = (geom.length, geom.wavelength);
    let (g1, g2) = (geom.g1(), geom.g2());
    let fsr = fsr(l);
    let confocal = g1 == 0.0 && g2 == 0.0;
    if !confocal && !geom.is_stable() {
        return Err(Error::Unstable { g1, g2 });
    }
    let den = g1 + g2 - 2.0 * g1 * g2;
    let (w0_sq, z1, w1_sq, w2_sq, gouy);
    if confocal || den.abs() < 1e-12 {
        // Symmetric confocal neighbourhood: expand about g1 = g2 = g.
        let g = 0.5 * (g1 + g2);
        w0_sq = l * lambda / (2.0 * PI) * ((1.0 + g) / (1.0 - g)).sqrt();
        z1 = 0.5 * l;
        w1_sq = l * lambda / PI / (1.0 - g * g).sqrt();
        w2_sq = w1_sq;
        gouy = if confocal { 0.5 * PI } else { (g1 * g2).sqrt().acos() };
    } else {
        let p = g1 * g2;
        w0_sq = l * lambda / PI * (p * (1.0 - p)).sqrt() / den.abs();
        z1 = if geom.r1 == geom.r2 { 0.5 * l } else { l * g2 * (1.0 - g1) / den };
        w1_sq = l * lambda / PI * (g2 / (g1 * (1.0 - p))).sqrt();
        w2_sq = l * lambda / PI * (g1 / (g2 * (1.0 - p))).sqrt();
        gouy = (g1.signum() * p.sqrt()).acos();
    }
    Ok(CavityMode {
        waist_radius: w0_sq.sqrt(),
        waist_position: z1,
        g1,
        g2,
        fsr,
        gouy,
        spot_mirror1: w1_sq.sqrt(),
        spot_mirror2: w2_sq.sqrt(),
        geometry: geom,
    })
}

/// Resonance offsets of `orders` relative to the fundamental, folded into `[0, FSR)`.
pub fn resonance_offsets(mode: &CavityMode, orders: &[ModeOrder]) -> Vec<f64> {
    orders
        .iter()
        .map(|o| {
            let frac = (o.total() as f64 * mode.gouy / PI).rem_euclid(1.0);
            mode.fsr * frac
        })
        .collect()
}

/// Power fraction of the HG `order` intensity with spot radius `spot` that
/// falls outside a circular aperture of radius `aperture`.
pub fn aperture_loss(order: ModeOrder, spot: f64, aperture: f64) -> Result<f64> {
    if !(spot > 0.0 && aperture > 0.0) {
        return Err(invalid("spot radius and aperture must be positive"));
    }
    let total = order.total() as usize;
    let (n, m) = (order.n as usize, order.m as usize);
    let k = 4 * total + 8;
    let trig: Vec<(f64, f64)> = (0..k).map(|j| (2.0 * PI * j as f64 / k as f64).sin_cos()).collect();
    let mut hx = vec![0.0; n + 1];
    let mut hy = vec![0.0; m + 1];
    // In ξ = √2 r / w the HG intensity integrates to 1 with measure ξ dξ dθ.
    let radial = |xi: f64| -> f64 {
        let mut acc = 0.0;
        for &(s, c) in &trig {
            hermite_functions(xi * c, &mut hx);
            hermite_functions(xi * s, &mut hy);
            acc += hx[n] * hx[n] * hy[m] * hy[m];
        }
        acc * 2.0 * PI / k as f64 * xi
    };
    let xi_a = std::f64::consts::SQRT_2 * aperture / spot;
    let outside = integrate_to_infinity(
        radial,
        xi_a,
        1.0,
        Tolerance {
            abs: 1e-15,
            rel: 1e-10,
            max_intervals: 2000,
        },
    )?;
    Ok(if outside < 1e-80 { 0.0 } else { outside.min(1.0) })
}

/// Per-reflection clipping loss of `order` on `mirror`.
pub fn clipping_loss(mode: &CavityMode, order: ModeOrder, mirror: Mirror) -> Result<f64> {
    let aperture = match mirror {
        Mirror::One => mode.geometry.aperture1,
        Mirror::Two => mode.geometry.aperture2,
    };
    aperture_loss(order, mode.spot_on(mirror), aperture)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinesseReport {
    pub finesse: f64,
    /// FWHM linewidth, Hz.
    pub linewidth: f64,
    pub total_loss: f64,
    pub clip1: f64,
    pub clip2: f64,
}

/// Finesse from total round-trip loss, `F = 2π / (T1 + T2 + L1 + L2 + clip1 + clip2)`.
pub fn finesse_from_losses(fsr: f64, losses: &[f64]) -> Result<FinesseReport> {
    let total: f64 = losses.iter().sum();
    if !(total > 0.0 && total < 1.0) {
        return Err(Error::Overdamped { loss: total });
    }
    let finesse = 2.0 * PI / total;
    Ok(FinesseReport {
        finesse,
        linewidth: fsr / finesse,
        total_loss: total,
        clip1: 0.0,
        clip2: 0.0,
    })
}

pub fn finesse(mode: &CavityMode, order: ModeOrder) -> Result<FinesseReport> {
    let g = &mode.geometry;
    let clip1 = clipping_loss(mode, order, Mirror::One)?;
    let clip2 = clipping_loss(mode, order, Mirror::Two)?;
    let report = finesse_from_losses(mode.fsr, &[g.t1, g.t2, g.loss1, g.loss2, clip1, clip2])?;
    Ok(FinesseReport { clip1, clip2, ..report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LAMBDA: f64 = 854e-9;

    fn reference_geom(l: f64) -> CavityGeometry {
        CavityGeometry::new(l, 700e-6, 540e-6, LAMBDA).unwrap()
    }

    #[test]
    fn fsr_values() {
        assert!((fsr(132e-6) - 1.1355e12).abs() < 0.0005e12, "{}", fsr(132e-6));
        assert!((fsr(426e-6) - 351.9e9).abs() < 0.05e9, "{}", fsr(426e-6));
        assert_relative_eq!(fsr(2.0 * 300e-6), 0.5 * fsr(300e-6), max_relative = 1e-15);
    }

    #[test]
    fn reference_cavity_at_460() {
        let m = solve_mode(&reference_geom(460e-6)).unwrap();
        assert!((m.g1 - 0.3429).abs() < 1e-4);
        assert!((m.g2 - 0.1481).abs() < 1e-4);
        assert!((m.waist_radius - 8.4e-6).abs() < 0.05e-6, "{}", m.waist_radius);
        assert!((m.waist_position - 115e-6).abs() < 1e-9, "{}", m.waist_position);
    }

    #[test]
    fn operating_point_is_stable() {
        assert!(solve_mode(&reference_geom(426e-6)).is_ok());
        assert!(matches!(solve_mode(&reference_geom(600e-6)), Err(Error::Unstable { .. })));
    }

    #[test]
    fn confocal_limit() {
        let g = CavityGeometry::new(500e-6, 500e-6, 500e-6, LAMBDA).unwrap();
        let m = solve_mode(&g).unwrap();
        assert_relative_eq!(m.waist_radius.powi(2), 500e-6 * LAMBDA / (2.0 * PI), max_relative = 1e-12);
        assert_eq!(m.waist_position, 250e-6);
        assert_relative_eq!(m.gouy, 0.5 * PI);
        let offs = resonance_offsets(&m, &[ModeOrder::new(1, 0), ModeOrder::new(1, 2), ModeOrder::new(2, 0)]);
        assert_relative_eq!(offs[0], 0.5 * m.fsr, max_relative = 1e-12);
        assert_relative_eq!(offs[1], 0.5 * m.fsr, max_relative = 1e-12);
        assert!(offs[2] < 1e-9 * m.fsr || (m.fsr - offs[2]) < 1e-9 * m.fsr);
    }

    #[test]
    fn near_planar_orders_are_degenerate() {
        let g = CavityGeometry::new(1e-6, 1.0, 1.0, LAMBDA).unwrap();
        let m = solve_mode(&g).unwrap();
        let offs = resonance_offsets(&m, &[ModeOrder::new(1, 0), ModeOrder::new(2, 2)]);
        assert!(offs.iter().all(|o| *o / m.fsr < 0.01), "{offs:?}");
    }

    #[test]
    fn symmetric_waist_is_centered() {
        for l in [100e-6, 333.3e-6, 777.7e-6] {
            let g = CavityGeometry::new(l, 800e-6, 800e-6, LAMBDA).unwrap();
            assert_eq!(solve_mode(&g).unwrap().waist_position, l / 2.0);
        }
    }

    #[test]
    fn fundamental_clipping_matches_closed_form() {
        for ratio in [0.5, 1.0, 1.7, 3.0] {
            let w = 10e-6;
            let loss = aperture_loss(ModeOrder::FUNDAMENTAL, w, ratio * w).unwrap();
            assert!((loss - (-2.0 * ratio * ratio).exp()).abs() < 1e-6 * (-2.0 * ratio * ratio).exp().max(1e-9));
        }
        assert!((aperture_loss(ModeOrder::FUNDAMENTAL, 1.0, 1.0).unwrap() - 0.135_335_283).abs() < 1e-6);
        assert_eq!(aperture_loss(ModeOrder::FUNDAMENTAL, 1e-6, 10e-6).unwrap(), 0.0);
    }

    #[test]
    fn clipping_grows_with_order() {
        let (w, a) = (10e-6, 18e-6);
        let mut prev = 0.0;
        for n in 0..=6 {
            let loss = aperture_loss(ModeOrder::new(n, 0), w, a).unwrap();
            assert!(loss >= prev, "order {n}: {loss} < {prev}");
            prev = loss;
        }
    }

    #[test]
    fn finesse_examples() {
        let f = finesse_from_losses(1.0, &[50e-6, 50e-6]).unwrap();
        assert!((f.finesse - 62_831.85).abs() < 0.01);
        let f = finesse_from_losses(1.0, &[50e-6, 50e-6, 20e-6, 20e-6]).unwrap();
        assert!((f.finesse - 2.0 * PI / 1.4e-4).abs() < 1e-6);
        assert!((f.finesse - 44_880.0).abs() < 1.0);
        assert!(matches!(finesse_from_losses(1.0, &[0.7, 0.5]), Err(Error::Overdamped { .. })));
        assert!(finesse_from_losses(1.0, &[0.0]).is_err());
    }

    #[test]
    fn finesse_collapses_at_stability_edge() {
        let plateau = finesse(&solve_mode(&reference_geom(300e-6)).unwrap(), ModeOrder::FUNDAMENTAL).unwrap();
        let edge = finesse(&solve_mode(&reference_geom(538e-6)).unwrap(), ModeOrder::FUNDAMENTAL).unwrap();
        assert!((plateau.finesse - 2.0 * PI / 1.4e-4).abs() / plateau.finesse < 1e-3);
        assert!(edge.finesse < 0.1 * plateau.finesse, "{edge:?}");
        assert_relative_eq!(plateau.linewidth * plateau.finesse, fsr(300e-6), max_relative = 1e-14);
    }

    #[test]
    fn invalid_geometries() {
        assert!(CavityGeometry::new(0.0, 1e-3, 1e-3, LAMBDA).is_err());
        assert!(CavityGeometry::new(1e-4, -1e-3, 1e-3, LAMBDA).is_err());
        let g = CavityGeometry { t1: 1.0, ..reference_geom(1e-4) };
        assert!(g.validated().is_err());
    }

    proptest! {
        #[test]
        fn mode_fields_are_consistent(l in 20e-6..1.2e-3f64, r1 in 100e-6..2e-3f64, r2 in 100e-6..2e-3f64) {
            let g = CavityGeometry::new(l, r1, r2, LAMBDA).unwrap();
            prop_assume!(g.is_stable());
            let p = g.g1() * g.g2();
            prop_assume!(p > 1e-3 && p < 1.0 - 1e-3);
            let m = solve_mode(&g).unwrap();
            let b = m.beam();
            prop_assert!((m.waist_position + m.waist_from_mirror2() - l).abs() < 1e-15);
            prop_assert!(((b.spot_radius(0.0) - m.spot_mirror1) / m.spot_mirror1).abs() < 1e-9);
            prop_assert!(((b.spot_radius(l) - m.spot_mirror2) / m.spot_mirror2).abs() < 1e-9);
            prop_assert!(m.spot_mirror1 >= m.waist_radius && m.spot_mirror2 >= m.waist_radius);
        }

        #[test]
        fn finesse_decreases_with_any_loss(base in 1e-6..1e-3f64, extra in 1e-7..1e-3f64, which in 0usize..4) {
            let mut losses = [base, base, base, base];
            let f0 = finesse_from_losses(1e9, &losses).unwrap().finesse;
            losses[which] += extra;
            prop_assert!(finesse_from_losses(1e9, &losses).unwrap().finesse < f0);
        }
    }
}
