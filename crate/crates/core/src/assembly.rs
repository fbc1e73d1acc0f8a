//! The SM → GRIN → MM mode-matching fiber assembly.
//!
//! The single-mode fiber's fundamental mode (radius scaled by the splice
//! factor) is launched at the SM-GRIN splice, focused by the parabolic GRIN
//! section, propagates freely in the multimode spacer and leaves through the
//! ablated end facet. Output beams are expressed in vacuum with `z = 0` at the
//! end facet and `z > 0` outside the fiber.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::abcd::RayTransferElement;
use crate::beam::{BeamState, ComplexBeamParameter};
use crate::error::{invalid, DesignResidual, Error, Result};
use crate::numerics::optimize::{levenberg_marquardt, nelder_mead, LmOptions, SimplexOptions};

/// Parabolic GRIN index profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrinProfile {
    /// On-axis index.
    pub n0: f64,
    /// Gradient constant, 1/m.
    pub g: f64,
    pub core_radius: f64,
}

/// Gradient constant reproducing a 8.1 µm waist 230 µm beyond the facet for
/// 492 µm of GRIN and 402 µm of spacer at 854 nm (with facet lensing).
pub const CALIBRATED_GRIN_G: f64 = 3818.794_722_114_268;
/// Splice mode-field scale found together with [`CALIBRATED_GRIN_G`].
pub const CALIBRATED_SPLICE_MFD_SCALE: f64 = 0.825_013_145_616_621;

pub const DEFAULT_SM_MODE_FIELD_RADIUS: f64 = 2.7e-6;
pub const DEFAULT_FIBER_INDEX: f64 = 1.45;
pub const DEFAULT_GRIN_N0: f64 = 1.47;
pub const DEFAULT_GRIN_CORE_RADIUS: f64 = 31e-6;
pub const DEFAULT_MM_CORE_RADIUS: f64 = 52.5e-6;
pub const DEFAULT_FACET_ROC: f64 = 700e-6;

impl GrinProfile {
    pub fn new(n0: f64, g: f64, core_radius: f64) -> Result<Self> {
        if !(n0 > 1.0 && n0.is_finite()) {
            return Err(invalid(format!("GRIN n0 must exceed 1, got {n0}")));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(invalid(format!("GRIN gradient constant must be positive, got {g}")));
        }
        if !(core_radius > 0.0) {
            return Err(invalid("GRIN core radius must be positive"));
        }
        Ok(Self { n0, g, core_radius })
    }

    pub fn calibrated() -> Self {
        Self {
            n0: DEFAULT_GRIN_N0,
            g: CALIBRATED_GRIN_G,
            core_radius: DEFAULT_GRIN_CORE_RADIUS,
        }
    }

    /// Length for which `g·ℓ = π`.
    pub fn half_pitch(&self) -> f64 {
        PI / self.g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiberSegmentSpec {
    SingleMode {
        length: f64,
        mode_field_radius: f64,
        index: f64,
    },
    GradedIndex {
        length: f64,
        profile: GrinProfile,
    },
    MultimodeSpacer {
        length: f64,
        index: f64,
        core_radius: f64,
    },
}

impl FiberSegmentSpec {
    pub fn length(&self) -> f64 {
        match *self {
            FiberSegmentSpec::SingleMode { length, .. }
            | FiberSegmentSpec::GradedIndex { length, .. }
            | FiberSegmentSpec::MultimodeSpacer { length, .. } => length,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FiberSegmentSpec::SingleMode { .. } => "single_mode",
            FiberSegmentSpec::GradedIndex { .. } => "graded_index",
            FiberSegmentSpec::MultimodeSpacer { .. } => "multimode_spacer",
        }
    }

    fn validate(&self) -> Result<()> {
        let length = self.length();
        if !(length >= 0.0 && length.is_finite()) {
            return Err(invalid(format!("{} length must be >= 0, got {length}", self.kind())));
        }
        match *self {
            FiberSegmentSpec::SingleMode { mode_field_radius, index, .. } => {
                if !(mode_field_radius > 0.0) {
                    return Err(invalid("single-mode field radius must be positive"));
                }
                if !(index >= 1.0) {
                    return Err(invalid("single-mode index must be >= 1"));
                }
            }
            FiberSegmentSpec::GradedIndex { profile, .. } => {
                GrinProfile::new(profile.n0, profile.g, profile.core_radius)?;
            }
            FiberSegmentSpec::MultimodeSpacer { index, core_radius, .. } => {
                if !(index >= 1.0) {
                    return Err(invalid("multimode spacer index must be >= 1"));
                }
                if !(core_radius > 0.0) {
                    return Err(invalid("multimode spacer core radius must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// A validated SM/GRIN/MM stack with its end-facet mirror curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblySpec {
    segments: [FiberSegmentSpec; 3],
    /// Concave mirror radius on the spacer end facet, m.
    pub facet_roc: f64,
    /// Factor applied to the SM mode-field radius at the SM-GRIN splice.
    pub splice_mfd_scale: f64,
}

impl AssemblySpec {
    pub fn new(segments: &[FiberSegmentSpec], facet_roc: f64, splice_mfd_scale: f64) -> Result<Self> {
        let [sm, grin, mm] = segments else {
            return Err(invalid(format!(
                "an assembly needs exactly three segments (single_mode, graded_index, multimode_spacer), got {}",
                segments.len()
            )));
        };
        let order_ok = matches!(sm, FiberSegmentSpec::SingleMode { .. })
            && matches!(grin, FiberSegmentSpec::GradedIndex { .. })
            && matches!(mm, FiberSegmentSpec::MultimodeSpacer { .. });
        if !order_ok {
            return Err(invalid(format!(
                "segments must be ordered single_mode, graded_index, multimode_spacer; got {}, {}, {}",
                sm.kind(),
                grin.kind(),
                mm.kind()
            )));
        }
        for s in segments {
            s.validate()?;
        }
        if !(facet_roc != 0.0 && !facet_roc.is_nan()) {
            return Err(invalid("facet radius of curvature must be nonzero"));
        }
        if !(0.8..=1.3).contains(&splice_mfd_scale) {
            return Err(invalid(format!(
                "splice_mfd_scale must lie in [0.8, 1.3], got {splice_mfd_scale}"
            )));
        }
        Ok(Self {
            segments: [*sm, *grin, *mm],
            facet_roc,
            splice_mfd_scale,
        })
    }

    /// Calibrated default stack with the given GRIN and spacer lengths.
    pub fn with_default_fibers(grin_length: f64, mm_length: f64) -> Result<Self> {
        Self::new(
            &[
                FiberSegmentSpec::SingleMode {
                    length: 0.0,
                    mode_field_radius: DEFAULT_SM_MODE_FIELD_RADIUS,
                    index: DEFAULT_FIBER_INDEX,
                },
                FiberSegmentSpec::GradedIndex {
                    length: grin_length,
                    profile: GrinProfile::calibrated(),
                },
                FiberSegmentSpec::MultimodeSpacer {
                    length: mm_length,
                    index: DEFAULT_FIBER_INDEX,
                    core_radius: DEFAULT_MM_CORE_RADIUS,
                },
            ],
            DEFAULT_FACET_ROC,
            CALIBRATED_SPLICE_MFD_SCALE,
        )
    }

    pub fn segments(&self) -> &[FiberSegmentSpec; 3] {
        &self.segments
    }

    pub fn sm_mode_field_radius(&self) -> f64 {
        match self.segments[0] {
            FiberSegmentSpec::SingleMode { mode_field_radius, .. } => mode_field_radius,
            _ => unreachable!("validated order"),
        }
    }

    pub fn grin_profile(&self) -> GrinProfile {
        match self.segments[1] {
            FiberSegmentSpec::GradedIndex { profile, .. } => profile,
            _ => unreachable!("validated order"),
        }
    }

    pub fn grin_length(&self) -> f64 {
        self.segments[1].length()
    }

    pub fn mm_length(&self) -> f64 {
        self.segments[2].length()
    }

    fn mm_params(&self) -> (f64, f64) {
        match self.segments[2] {
            FiberSegmentSpec::MultimodeSpacer { index, core_radius, .. } => (index, core_radius),
            _ => unreachable!("validated order"),
        }
    }

    pub fn with_lengths(&self, grin_length: f64, mm_length: f64) -> Result<Self> {
        let mut segments = self.segments;
        if let FiberSegmentSpec::GradedIndex { length, .. } = &mut segments[1] {
            *length = grin_length;
        }
        if let FiberSegmentSpec::MultimodeSpacer { length, .. } = &mut segments[2] {
            *length = mm_length;
        }
        Self::new(&segments, self.facet_roc, self.splice_mfd_scale)
    }

    pub fn with_grin_profile(&self, profile: GrinProfile) -> Result<Self> {
        let mut segments = self.segments;
        if let FiberSegmentSpec::GradedIndex { profile: p, .. } = &mut segments[1] {
            *p = profile;
        }
        Self::new(&segments, self.facet_roc, self.splice_mfd_scale)
    }

    pub fn with_splice_scale(&self, scale: f64) -> Result<Self> {
        Self::new(&self.segments, self.facet_roc, scale)
    }

    /// Beam parameter at the SM-GRIN splice, inside the GRIN medium.
    fn launch_q(&self, wavelength: f64) -> Complex64 {
        let w = self.sm_mode_field_radius() * self.splice_mfd_scale;
        Complex64::new(0.0, PI * w * w * self.grin_profile().n0 / wavelength)
    }

    fn facet(&self, include_facet_lensing: bool) -> Result<RayTransferElement> {
        let (n_mm, _) = self.mm_params();
        if include_facet_lensing {
            RayTransferElement::curved_interface(self.facet_roc, n_mm, 1.0)
        } else {
            RayTransferElement::flat_interface(n_mm, 1.0)
        }
    }

    /// Whole-assembly matrix from the splice to the vacuum side of the facet.
    pub fn transfer_matrix(&self, include_facet_lensing: bool) -> Result<RayTransferElement> {
        let p = self.grin_profile();
        let (n_mm, _) = self.mm_params();
        RayTransferElement::chain(&[
            RayTransferElement::grin_section(self.grin_length(), p.n0, p.g)?,
            RayTransferElement::flat_interface(p.n0, n_mm)?,
            RayTransferElement::free_space(self.mm_length(), n_mm)?,
            self.facet(include_facet_lensing)?,
        ])
    }
}

fn radius_of(q: Complex64, wavelength: f64, n: f64) -> f64 {
    // w² = λ/(π n Im(-1/q))
    let inv = -q.inv();
    (wavelength / (PI * n * inv.im)).sqrt()
}

/// Output mode of the assembly in vacuum, `z` measured from the end facet.
///
/// Fails with [`Error::CoreClipping`] when the 1/e² radius exceeds the GRIN or
/// spacer core radius anywhere along the stack.
pub fn output_mode(asm: &AssemblySpec, wavelength: f64, include_facet_lensing: bool) -> Result<BeamState> {
    if !(wavelength > 0.0) {
        return Err(invalid("wavelength must be positive"));
    }
    let p = asm.grin_profile();
    let (n_mm, mm_core) = asm.mm_params();
    let q0 = ComplexBeamParameter(asm.launch_q(wavelength));

    // The radius oscillates inside the GRIN, so sample it.
    const SAMPLES: usize = 64;
    for k in 0..=SAMPLES {
        let z = asm.grin_length() * k as f64 / SAMPLES as f64;
        let q = q0.apply(&RayTransferElement::grin_section(z, p.n0, p.g)?)?;
        let w = radius_of(q.0, wavelength, p.n0);
        if w > p.core_radius {
            return Err(Error::CoreClipping {
                segment: "graded_index",
                z: -(asm.mm_length() + asm.grin_length() - z),
                beam_radius: w,
                core_radius: p.core_radius,
            });
        }
    }
    let q_grin = q0.apply(&RayTransferElement::grin_section(asm.grin_length(), p.n0, p.g)?)?;
    let q_mm_in = q_grin.apply(&RayTransferElement::flat_interface(p.n0, n_mm)?)?;
    let q_mm_out = q_mm_in.apply(&RayTransferElement::free_space(asm.mm_length(), n_mm)?)?;
    // Free-space radius is convex in z: the endpoints bound it.
    for (q, z) in [(q_mm_in, -asm.mm_length()), (q_mm_out, 0.0)] {
        let w = radius_of(q.0, wavelength, n_mm);
        if w > mm_core {
            return Err(Error::CoreClipping {
                segment: "multimode_spacer",
                z,
                beam_radius: w,
                core_radius: mm_core,
            });
        }
    }
    let q_out = q_mm_out.apply(&asm.facet(include_facet_lensing)?)?;
    BeamState::from_q(q_out, 0.0, wavelength, 1.0)
}

/// Analytic derivatives `[[∂w0/∂ℓ_GRIN, ∂w0/∂ℓ_MM], [∂z0/∂ℓ_GRIN, ∂z0/∂ℓ_MM]]`
/// of the vacuum output waist.
pub fn output_mode_jacobian(asm: &AssemblySpec, wavelength: f64, include_facet_lensing: bool) -> Result<[[f64; 2]; 2]> {
    let p = asm.grin_profile();
    let (n_mm, _) = asm.mm_params();
    let q0 = asm.launch_q(wavelength);
    let grin = RayTransferElement::grin_section(asm.grin_length(), p.n0, p.g)?;
    let after = RayTransferElement::chain(&[
        RayTransferElement::flat_interface(p.n0, n_mm)?,
        RayTransferElement::free_space(asm.mm_length(), n_mm)?,
        asm.facet(include_facet_lensing)?,
    ])?;
    let total = grin.then(&after)?;
    let (s, c) = (p.g * asm.grin_length()).sin_cos();
    // d(GRIN)/dℓ, premultiplied by the rest of the chain.
    let dg = [[-p.g * s, c], [-p.g * p.g * c, -p.g * s]];
    let mul = |m: &RayTransferElement, d: [[f64; 2]; 2]| {
        [
            [m.a * d[0][0] + m.b * d[1][0], m.a * d[0][1] + m.b * d[1][1]],
            [m.c * d[0][0] + m.d * d[1][0], m.c * d[0][1] + m.d * d[1][1]],
        ]
    };
    let d_grin = mul(&after, dg);
    // d(free space)/dℓ = [[0,1],[0,0]], premultiplied by the facet and followed by the rest.
    let facet = asm.facet(include_facet_lensing)?;
    let flat = RayTransferElement::flat_interface(p.n0, n_mm)?;
    let pre = grin.then(&flat)?;
    let df = [[0.0, facet.a], [0.0, facet.c]];
    let d_mm = [
        [df[0][0] * pre.a + df[0][1] * pre.c, df[0][0] * pre.b + df[0][1] * pre.d],
        [df[1][0] * pre.a + df[1][1] * pre.c, df[1][0] * pre.b + df[1][1] * pre.d],
    ];
    let den = total.c * q0 + total.d;
    let num = total.a * q0 + total.b;
    let q_out = num / den;
    let w0 = (wavelength * q_out.im / PI).sqrt();
    let dq = |d: [[f64; 2]; 2]| -> Complex64 {
        ((d[0][0] * q0 + d[0][1]) * den - num * (d[1][0] * q0 + d[1][1])) / (den * den)
    };
    let (dqg, dqm) = (dq(d_grin), dq(d_mm));
    let dw = |d: Complex64| wavelength * d.im / (2.0 * PI * w0);
    Ok([[dw(dqg), dw(dqm)], [-dqg.re, -dqm.re]])
}

/// Allowed length ranges for [`design_assembly`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignConstraints {
    pub grin_length: (f64, f64),
    pub mm_length: (f64, f64),
}

impl DesignConstraints {
    /// First half pitch of the GRIN and up to 2 mm of spacer.
    pub fn first_half_pitch(profile: &GrinProfile) -> Self {
        Self {
            grin_length: (0.0, profile.half_pitch()),
            mm_length: (0.0, 2e-3),
        }
    }

    fn contains(&self, lg: f64, lm: f64) -> bool {
        lg >= self.grin_length.0 && lg <= self.grin_length.1 && lm >= self.mm_length.0 && lm <= self.mm_length.1
    }

    fn clamp(&self, lg: f64, lm: f64) -> (f64, f64) {
        (
            lg.clamp(self.grin_length.0, self.grin_length.1),
            lm.clamp(self.mm_length.0, self.mm_length.1),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyDesign {
    pub grin_length: f64,
    pub mm_length: f64,
    pub residual: DesignResidual,
}

fn mismatch(asm: &AssemblySpec, target: &BeamState, lensing: bool) -> Result<DesignResidual> {
    let out = output_mode(asm, target.wavelength, lensing)?;
    Ok(DesignResidual {
        waist_radius: out.waist_radius - target.waist_radius,
        waist_position: out.waist_position - target.waist_position,
    })
}

/// Damped Newton polish on the two-equation waist system.
fn polish(
    template: &AssemblySpec,
    target: &BeamState,
    constraints: &DesignConstraints,
    lensing: bool,
    start: (f64, f64),
) -> Option<AssemblyDesign> {
    let (mut lg, mut lm) = constraints.clamp(start.0, start.1);
    let mut res = mismatch(&template.with_lengths(lg, lm).ok()?, target, lensing).ok()?;
    for _ in 0..60 {
        let asm = template.with_lengths(lg, lm).ok()?;
        let j = output_mode_jacobian(&asm, target.wavelength, lensing).ok()?;
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (fw, fz) = (res.waist_radius, res.waist_position);
        let dlg = -(j[1][1] * fw - j[0][1] * fz) / det;
        let dlm = -(-j[1][0] * fw + j[0][0] * fz) / det;
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-6 {
            let (nlg, nlm) = constraints.clamp(lg + t * dlg, lm + t * dlm);
            if let Ok(next) = template
                .with_lengths(nlg, nlm)
                .and_then(|a| mismatch(&a, target, lensing))
            {
                if next.norm() < res.norm() || next.norm() == 0.0 {
                    lg = nlg;
                    lm = nlm;
                    res = next;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        let step = (t * dlg).abs().max((t * dlm).abs());
        if !improved || step < 1e-15 {
            break;
        }
    }
    Some(AssemblyDesign {
        grin_length: lg,
        mm_length: lm,
        residual: res,
    })
}

/// Finds GRIN and spacer lengths whose output waist matches `target`
/// (a vacuum beam referenced to the end facet).
///
/// Simplex search from four starts spread over the first half pitch, then
/// Newton refinement. When several lengths pairs converge the one with the
/// shortest GRIN wins.
pub fn design_assembly(
    target: &BeamState,
    template: &AssemblySpec,
    constraints: &DesignConstraints,
    include_facet_lensing: bool,
) -> Result<AssemblyDesign> {
    if target.waist_position < 0.0 {
        return Err(invalid("target waist must lie outside the facet (z0 >= 0)"));
    }
    if target.medium_index != 1.0 {
        return Err(invalid("target beam must be specified in vacuum"));
    }
    let (g_lo, g_hi) = constraints.grin_length;
    let (m_lo, m_hi) = constraints.mm_length;
    if !(g_lo >= 0.0 && g_hi >= g_lo && m_lo >= 0.0 && m_hi >= m_lo) {
        return Err(invalid("design constraint ranges are empty or negative"));
    }
    let um = 1e-6;
    let objective = |x: &[f64]| -> f64 {
        let (lg, lm) = (x[0] * um, x[1] * um);
        let (cg, cm) = constraints.clamp(lg, lm);
        let penalty = ((lg - cg).powi(2) + (lm - cm).powi(2)) / (um * um);
        match template.with_lengths(cg, cm).and_then(|a| mismatch(&a, target, include_facet_lensing)) {
            Ok(r) => r.norm().powi(2) * 1e-6 + penalty * 1e6,
            Err(_) => f64::INFINITY,
        }
    };
    let half = template.grin_profile().half_pitch();
    let mut candidates: Vec<AssemblyDesign> = Vec::new();
    let mut best: Option<AssemblyDesign> = None;
    for k in 0..4 {
        let lg0 = ((k as f64 + 0.5) / 4.0 * half).clamp(g_lo, g_hi);
        let lm0 = 0.5 * (m_lo + m_hi.min(m_lo + 1e-3));
        let found = nelder_mead(
            objective,
            &[lg0 / um, lm0 / um],
            &[0.1 * half / um, 50.0],
            SimplexOptions {
                max_evaluations: 3000,
                value_tolerance: 1e-14,
                size_tolerance: 1e-6,
            },
        );
        let start = (found.point[0] * um, found.point[1] * um);
        if let Some(design) = polish(template, target, constraints, include_facet_lensing, start) {
            if design.residual.converged() && constraints.contains(design.grin_length, design.mm_length) {
                candidates.push(design);
            }
            if best.is_none_or(|b| design.residual.norm() < b.residual.norm()) {
                best = Some(design);
            }
        }
    }
    // The bare-fiber corner is a common exact answer the simplex can miss.
    if let Some(design) = polish(template, target, constraints, include_facet_lensing, (g_lo, m_lo)) {
        if design.residual.converged() && constraints.contains(design.grin_length, design.mm_length) {
            candidates.push(design);
        }
    }
    candidates
        .into_iter()
        .min_by(|a, b| a.grin_length.total_cmp(&b.grin_length))
        .ok_or(Error::NoSolution {
            best: best.map(|b| b.residual).unwrap_or(DesignResidual {
                waist_radius: f64::INFINITY,
                waist_position: f64::INFINITY,
            }),
        })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrinCalibration {
    pub profile: GrinProfile,
    pub splice_mfd_scale: f64,
    pub residual: DesignResidual,
}

/// Solves for the GRIN gradient constant and splice mode-field scale such that
/// `template` (with its own lengths) produces `target`.
///
/// One free parameter cannot match both waist radius and position, so the
/// splice scale is fitted alongside `g` and must stay within `[0.8, 1.3]`.
pub fn calibrate_grin(
    template: &AssemblySpec,
    target: &BeamState,
    include_facet_lensing: bool,
) -> Result<GrinCalibration> {
    let base = template.grin_profile();
    let eval = |g: f64, scale: f64| -> Result<DesignResidual> {
        let asm = template
            .with_grin_profile(GrinProfile { g, ..base })?
            .with_splice_scale(scale)?;
        mismatch(&asm, target, include_facet_lensing)
    };
    let residuals = |p: &[f64]| -> Vec<f64> {
        let scale = p[1].clamp(0.8, 1.3);
        match eval(p[0].abs().max(1.0), scale) {
            Ok(r) => vec![
                r.waist_radius / 1e-9,
                r.waist_position / 10e-9,
                (p[1] - scale) * 1e6,
            ],
            Err(_) => vec![1e12; 3],
        }
    };
    // Coarse scan over gradient constants whose half pitch exceeds the GRIN length.
    let g_max = PI / template.grin_length().max(1e-9);
    let mut starts = Vec::new();
    for i in 1..=60 {
        let g = g_max * i as f64 / 60.0;
        for scale in [0.8, 0.9, 1.0, 1.1, 1.2, 1.3] {
            let r = residuals(&[g, scale]);
            let cost: f64 = r.iter().map(|v| v * v).sum();
            starts.push((cost, g, scale));
        }
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<GrinCalibration> = None;
    for &(_, g, scale) in starts.iter().take(6) {
        let Ok(fit) = levenberg_marquardt(residuals, &[g, scale], &[g, 1.0], LmOptions::default()) else {
            continue;
        };
        let (g, scale) = (fit.params[0], fit.params[1]);
        if !(0.8..=1.3).contains(&scale) || g <= 0.0 {
            continue;
        }
        let Ok(residual) = eval(g, scale) else { continue };
        let cal = GrinCalibration {
            profile: GrinProfile { g, ..base },
            splice_mfd_scale: scale,
            residual,
        };
        if best.is_none_or(|b| residual.norm() < b.residual.norm()) {
            best = Some(cal);
        }
    }
    match best {
        Some(cal) if cal.residual.converged() => Ok(cal),
        Some(cal) => Err(Error::NoSolution { best: cal.residual }),
        None => Err(Error::NoSolution {
            best: DesignResidual {
                waist_radius: f64::INFINITY,
                waist_position: f64::INFINITY,
            },
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LAMBDA: f64 = 854e-9;

    fn plain(grin: f64, mm: f64) -> AssemblySpec {
        AssemblySpec::with_default_fibers(grin, mm)
            .unwrap()
            .with_splice_scale(1.0)
            .unwrap()
    }

    #[test]
    fn bare_sm_facet() {
        let out = output_mode(&plain(0.0, 0.0), LAMBDA, false).unwrap();
        assert_relative_eq!(out.waist_radius, DEFAULT_SM_MODE_FIELD_RADIUS, max_relative = 1e-12);
        assert!(out.waist_position.abs() < 1e-18);
    }

    #[test]
    fn calibrated_defaults_reproduce_fa_mode() {
        let asm = AssemblySpec::with_default_fibers(492e-6, 402e-6).unwrap();
        let out = output_mode(&asm, LAMBDA, true).unwrap();
        assert!((out.waist_radius - 8.1e-6).abs() < 1e-12, "{out:?}");
        assert!((out.waist_position - 230e-6).abs() < 1e-11, "{out:?}");
    }

    #[test]
    fn quarter_pitch_images_waist_onto_facet() {
        let grin = GrinProfile::calibrated();
        let asm = plain(0.5 * grin.half_pitch(), 0.0);
        let out = output_mode(&asm, LAMBDA, false).unwrap();
        assert!(out.waist_position.abs() < 1e-15, "{out:?}");
        // Collimated radius λ/(π n0 g w_in) inside the GRIN, unchanged by the flat exits.
        let expect = LAMBDA / (PI * grin.n0 * grin.g * DEFAULT_SM_MODE_FIELD_RADIUS);
        assert_relative_eq!(out.waist_radius, expect, max_relative = 1e-12);
    }

    #[test]
    fn half_pitch_self_images() {
        let grin = GrinProfile::calibrated();
        let asm = plain(grin.half_pitch(), 300e-6);
        let out = output_mode(&asm, LAMBDA, false).unwrap();
        // SM waist re-imaged at the GRIN exit, then seen through 300 µm of n = 1.45 glass.
        assert_relative_eq!(out.waist_radius, DEFAULT_SM_MODE_FIELD_RADIUS, max_relative = 1e-9);
        assert_relative_eq!(out.waist_position, -300e-6 / DEFAULT_FIBER_INDEX, max_relative = 1e-9);
    }

    #[test]
    fn spacer_clipping_reported() {
        let mut segs = *AssemblySpec::with_default_fibers(0.0, 5e-3).unwrap().segments();
        if let FiberSegmentSpec::MultimodeSpacer { core_radius, .. } = &mut segs[2] {
            *core_radius = 10e-6;
        }
        let asm = AssemblySpec::new(&segs, 700e-6, 1.0).unwrap();
        match output_mode(&asm, LAMBDA, true) {
            Err(Error::CoreClipping { segment, z, .. }) => {
                assert_eq!(segment, "multimode_spacer");
                assert_eq!(z, 0.0);
            }
            other => panic!("expected clipping, got {other:?}"),
        }
    }

    #[test]
    fn assembly_validation() {
        let good = *AssemblySpec::with_default_fibers(1e-4, 1e-4).unwrap().segments();
        assert!(AssemblySpec::new(&good[..2], 700e-6, 1.0).is_err());
        assert!(AssemblySpec::new(&[good[1], good[0], good[2]], 700e-6, 1.0).is_err());
        assert!(AssemblySpec::new(&good, 700e-6, 1.4).is_err());
        assert!(AssemblySpec::new(&good, 0.0, 1.0).is_err());
        assert!(AssemblySpec::with_default_fibers(-1e-6, 0.0).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for &(lg, lm, lens) in &[(492e-6, 402e-6, true), (600e-6, 100e-6, false), (450e-6, 800e-6, true)] {
            let asm = AssemblySpec::with_default_fibers(lg, lm).unwrap();
            let j = output_mode_jacobian(&asm, LAMBDA, lens).unwrap();
            let h = 1e-9;
            let f = |a: f64, b: f64| output_mode(&AssemblySpec::with_default_fibers(a, b).unwrap(), LAMBDA, lens).unwrap();
            let (gp, gm) = (f(lg + h, lm), f(lg - h, lm));
            let (mp, mm) = (f(lg, lm + h), f(lg, lm - h));
            let fd = [
                [(gp.waist_radius - gm.waist_radius) / (2.0 * h), (mp.waist_radius - mm.waist_radius) / (2.0 * h)],
                [(gp.waist_position - gm.waist_position) / (2.0 * h), (mp.waist_position - mm.waist_position) / (2.0 * h)],
            ];
            for r in 0..2 {
                for c in 0..2 {
                    assert!(
                        (j[r][c] - fd[r][c]).abs() <= 1e-6 * j[r][c].abs().max(1e-3),
                        "({r},{c}) analytic {} vs fd {}",
                        j[r][c],
                        fd[r][c]
                    );
                }
            }
        }
    }

    #[test]
    fn design_bare_target_is_zero_lengths() {
        let template = AssemblySpec::with_default_fibers(0.0, 0.0).unwrap();
        let bare = output_mode(&template, LAMBDA, false).unwrap();
        assert_eq!(bare.waist_position, 0.0);
        let c = DesignConstraints::first_half_pitch(&template.grin_profile());
        let d = design_assembly(&bare, &template, &c, false);
        let d = d.unwrap();
        assert!(d.grin_length.abs() < 1e-12 && d.mm_length.abs() < 1e-12, "{d:?}");
    }

    #[test]
    fn design_fa_target() {
        let template = AssemblySpec::with_default_fibers(0.0, 0.0).unwrap();
        let target = BeamState::in_vacuum(8.1e-6, 230e-6, LAMBDA).unwrap();
        let c = DesignConstraints::first_half_pitch(&template.grin_profile());
        let d = design_assembly(&target, &template, &c, true).unwrap();
        assert!((d.grin_length - 492e-6).abs() < 1e-9, "{d:?}");
        assert!((d.mm_length - 402e-6).abs() < 1e-9, "{d:?}");
    }

    #[test]
    fn unreachable_target_reports_residual() {
        let template = AssemblySpec::with_default_fibers(0.0, 0.0).unwrap();
        let target = BeamState::in_vacuum(100e-6, 10e-6, LAMBDA).unwrap();
        let c = DesignConstraints::first_half_pitch(&template.grin_profile());
        match design_assembly(&target, &template, &c, true) {
            Err(Error::NoSolution { best }) => assert!(best.norm() > 1.0),
            other => panic!("expected no solution, got {other:?}"),
        }
    }

    #[test]
    fn calibration_reproduces_shipped_constants() {
        let template = AssemblySpec::with_default_fibers(492e-6, 402e-6).unwrap();
        let target = BeamState::in_vacuum(8.1e-6, 230e-6, LAMBDA).unwrap();
        let cal = calibrate_grin(&template, &target, true).unwrap();
        assert!((cal.profile.g - CALIBRATED_GRIN_G).abs() < 1e-6 * CALIBRATED_GRIN_G, "{cal:?}");
        assert!((cal.splice_mfd_scale - CALIBRATED_SPLICE_MFD_SCALE).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn design_inverts_output_mode(frac in 0.52..0.95f64, lm in 0.0..1e-3f64) {
            let template = AssemblySpec::with_default_fibers(0.0, 0.0).unwrap();
            let lg = frac * template.grin_profile().half_pitch();
            let asm = template.with_lengths(lg, lm).unwrap();
            let out = output_mode(&asm, LAMBDA, true);
            prop_assume!(out.is_ok());
            let out = out.unwrap();
            prop_assume!(out.waist_position >= 0.0);
            let c = DesignConstraints::first_half_pitch(&template.grin_profile());
            let d = design_assembly(&out, &template, &c, true).unwrap();
            prop_assert!((d.grin_length - lg).abs() < 1e-9, "{:?} vs ({lg}, {lm})", d);
            prop_assert!((d.mm_length - lm).abs() < 1e-9, "{:?} vs ({lg}, {lm})", d);
        }
    }
}
