//! Mode matching of an input beam onto the cavity eigenmodes.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::beam::BeamState;
use crate::cavity::{CavityMode, ModeOrder};
use crate::error::{invalid, Error, Result};
use crate::field::PlaneBeam;
use crate::numerics::quadrature::{integrate_complex_real_line, integrate_complex_to_infinity, Tolerance};

/// Highest supported mode order per axis in [`decompose`].
pub const MAX_DECOMPOSITION_ORDER: u32 = 20;

const OVERLAP_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-11,
    max_intervals: 4000,
};

/// Lateral and angular misalignment of the input. Only the aligned case is modelled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Misalignment {
    pub offset: f64,
    pub tilt: f64,
}

fn check_comparable(a: &BeamState, b: &BeamState) -> Result<()> {
    if (a.wavelength - b.wavelength).abs() > 1e-12 * a.wavelength.max(b.wavelength) {
        return Err(Error::InvalidComparison(format!(
            "wavelengths differ: {:.6e} m vs {:.6e} m",
            a.wavelength, b.wavelength
        )));
    }
    if (a.medium_index - b.medium_index).abs() > 1e-12 {
        return Err(Error::InvalidComparison(format!(
            "media differ: n = {} vs n = {}",
            a.medium_index, b.medium_index
        )));
    }
    Ok(())
}

/// Power coupling between two coaxial fundamental Gaussians sharing a `z` axis.
pub fn gaussian_coupling(a: &BeamState, b: &BeamState) -> Result<f64> {
    check_comparable(a, b)?;
    let (wa, wb) = (a.waist_radius, b.waist_radius);
    let ratio = wa / wb + wb / wa;
    let defocus = a.wavelength / a.medium_index * (a.waist_position - b.waist_position) / (PI * wa * wb);
    Ok(4.0 / (ratio * ratio + defocus * defocus))
}

/// Fundamental-mode coupling efficiency of `input` into the cavity.
/// Both beams use `z` measured from mirror 1.
pub fn eta00(input: &BeamState, mode: &CavityMode) -> Result<f64> {
    gaussian_coupling(input, &mode.beam())
}

pub fn eta00_misaligned(input: &BeamState, mode: &CavityMode, mis: Misalignment) -> Result<f64> {
    if mis.offset != 0.0 || mis.tilt != 0.0 {
        return Err(Error::Unimplemented("coupling with lateral offset or tilt"));
    }
    eta00(input, mode)
}

/// `|∫ u_a u_b* 2πr dr|²` for two unit-normalized radial fields, by quadrature.
///
/// `scale` is a length comparable to the field radii.
pub fn numeric_overlap_oracle<A, B>(field_a: A, field_b: B, scale: f64) -> Result<f64>
where
    A: Fn(f64) -> Complex64,
    B: Fn(f64) -> Complex64,
{
    let tol = OVERLAP_TOLERANCE;
    for (name, f) in [("first", &field_a as &dyn Fn(f64) -> Complex64), ("second", &field_b)] {
        let norm = integrate_complex_to_infinity(|r| Complex64::new(2.0 * PI * r * f(r).norm_sqr(), 0.0), 0.0, scale, tol)?.re;
        if (norm - 1.0).abs() > 1e-6 {
            return Err(invalid(format!("{name} field is not normalized (power {norm:.9})")));
        }
    }
    let amp = integrate_complex_to_infinity(|r| field_a(r) * field_b(r).conj() * (2.0 * PI * r), 0.0, scale, tol)?;
    Ok(amp.norm_sqr())
}

/// Power fractions of an input beam in the cavity's Hermite-Gauss basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    pub n_max: u32,
    entries: BTreeMap<ModeOrder, f64>,
}

impl CouplingSet {
    pub fn from_entries(n_max: u32, entries: BTreeMap<ModeOrder, f64>) -> Self {
        Self { n_max, entries }
    }

    pub fn eta(&self, order: ModeOrder) -> f64 {
        self.entries.get(&order).copied().unwrap_or(0.0)
    }

    pub fn eta00(&self) -> f64 {
        self.eta(ModeOrder::FUNDAMENTAL)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeOrder, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Power not captured by the truncated basis.
    pub fn residual(&self) -> f64 {
        1.0 - self.total()
    }

    /// Summed efficiency of the degenerate group `n + m = total`.
    pub fn group(&self, total: u32) -> f64 {
        self.iter().filter(|(o, _)| o.total() == total).map(|(_, e)| e).sum()
    }
}

/// One-dimensional projections of the input onto cavity HG orders `0..=n_max` at plane `z`.
fn axis_amplitudes(input: &PlaneBeam, cavity: &PlaneBeam, n_max: usize) -> Result<Vec<Complex64>> {
    let mut scratch = vec![0.0; n_max + 1];
    let mut basis = vec![Complex64::default(); n_max + 1];
    (0..=n_max)
        .map(|n| {
            if n % 2 == 1 {
                // Odd Hermite functions against an even input vanish identically.
                return Ok(Complex64::default());
            }
            integrate_complex_real_line(
                |x| {
                    cavity.hermite_gauss_1d(x, &mut scratch, &mut basis);
                    input.gaussian_1d(x) * basis[n].conj()
                },
                cavity.spot,
                OVERLAP_TOLERANCE,
            )
        })
        .collect()
}

/// Hermite-Gauss decomposition of `input` up to order `n_max` per axis.
pub fn decompose(input: &BeamState, mode: &CavityMode, n_max: u32) -> Result<CouplingSet> {
    if n_max > MAX_DECOMPOSITION_ORDER {
        return Err(invalid(format!(
            "decomposition order {n_max} exceeds the supported maximum {MAX_DECOMPOSITION_ORDER}"
        )));
    }
    let cav = mode.beam();
    check_comparable(input, &cav)?;
    let a = axis_amplitudes(&PlaneBeam::of(input, 0.0), &PlaneBeam::of(&cav, 0.0), n_max as usize)?;
    let p: Vec<f64> = a.iter().map(|c| c.norm_sqr()).collect();
    let mut entries = BTreeMap::new();
    for n in 0..=n_max {
        for m in 0..=n_max {
            entries.insert(ModeOrder::new(n, m), p[n as usize] * p[m as usize]);
        }
    }
    Ok(CouplingSet { n_max, entries })
}

/// Power in the radial Laguerre-Gauss modes `LG_p0`, `p = 0..=p_max`.
pub fn radial_decompose(input: &BeamState, mode: &CavityMode, p_max: usize) -> Result<Vec<f64>> {
    let cav = mode.beam();
    check_comparable(input, &cav)?;
    let (pi, pc) = (PlaneBeam::of(input, 0.0), PlaneBeam::of(&cav, 0.0));
    (0..=p_max)
        .map(|p| {
            integrate_complex_to_infinity(
                |r| pi.gaussian_radial(r) * pc.laguerre_gauss_radial(p, r).conj() * (2.0 * PI * r),
                0.0,
                pc.spot,
                OVERLAP_TOLERANCE,
            )
            .map(|c| c.norm_sqr())
        })
        .collect()
}

/// Fundamental fraction `η00 / Σ η`.
pub fn beta(set: &CouplingSet) -> Result<f64> {
    let total = set.total();
    if total <= 0.0 {
        return Err(invalid("coupling set carries no power"));
    }
    Ok(set.eta00() / total)
}

/// Fundamental fraction from measured transmissions `T00 / Σ T`.
pub fn beta_from_transmissions<'a, I>(transmissions: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a ModeOrder, &'a f64)>,
{
    let (mut t00, mut total) = (None, 0.0);
    for (order, &t) in transmissions {
        if !(t >= 0.0) {
            return Err(invalid(format!("transmission of {order} is negative or NaN")));
        }
        if *order == ModeOrder::FUNDAMENTAL {
            t00 = Some(t);
        }
        total += t;
    }
    let t00 = t00.ok_or_else(|| invalid("no fundamental transmission"))?;
    if total <= 0.0 {
        return Err(invalid("transmissions sum to zero"));
    }
    Ok(t00 / total)
}

/// Parameters of `T_nm = η̃ · η_nm · F_nm² · I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionModel {
    /// Order-independent scale `η̃` (mirror transmissions, detector response).
    pub efficiency: f64,
    pub input_intensity: f64,
    pub default_finesse: f64,
    pub finesse: BTreeMap<ModeOrder, f64>,
}

impl TransmissionModel {
    pub fn uniform(efficiency: f64, input_intensity: f64, finesse: f64) -> Self {
        Self {
            efficiency,
            input_intensity,
            default_finesse: finesse,
            finesse: BTreeMap::new(),
        }
    }

    pub fn with_order_finesse(mut self, order: ModeOrder, finesse: f64) -> Self {
        self.finesse.insert(order, finesse);
        self
    }

    pub fn finesse_for(&self, order: ModeOrder) -> f64 {
        self.finesse.get(&order).copied().unwrap_or(self.default_finesse)
    }
}

/// Peak transmissions of every order in `set`.
///
/// With `double_sided` the output is collected by a second, identical fiber
/// assembly, so each order is weighted by the output overlap as well. Orders
/// in one degenerate group `n + m = N` share a resonance and add coherently
/// at the output, giving `T_nm ∝ η_nm · η_N`; for a single-member group this
/// is `η_nm²`.
pub fn transmissions(set: &CouplingSet, model: &TransmissionModel, double_sided: bool) -> Result<BTreeMap<ModeOrder, f64>> {
    if !(model.efficiency > 0.0 && model.efficiency <= 1.0) {
        return Err(invalid(format!("transmission efficiency {} outside (0, 1]", model.efficiency)));
    }
    if !(model.input_intensity > 0.0) {
        return Err(invalid("input intensity must be positive"));
    }
    let mut groups: BTreeMap<u32, f64> = BTreeMap::new();
    if double_sided {
        for (o, e) in set.iter() {
            *groups.entry(o.total()).or_default() += e;
        }
    }
    set.iter()
        .map(|(o, e)| {
            let f = model.finesse_for(o);
            if !(f > 0.0) {
                return Err(invalid(format!("finesse of {o} must be positive")));
            }
            let weight = if double_sided { e * groups[&o.total()] } else { e };
            Ok((o, model.efficiency * weight * f * f * model.input_intensity))
        })
        .collect()
}

/// A fundamental-mode transmission measured at one cavity length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMeasurement {
    pub transmission: f64,
    pub finesse: f64,
}

/// Relative tolerance by which an inferred efficiency may exceed one before
/// the data are rejected as inconsistent.
pub const INFERENCE_TOLERANCE: f64 = 1e-6;

/// Infers `η00` at a second length from a reference with known efficiency,
/// `η = η_ref · (T / T_ref) · (F_ref / F)²`.
pub fn infer_eta_at_length(measured: FundamentalMeasurement, reference: FundamentalMeasurement, reference_eta: f64) -> Result<f64> {
    let all = [measured.transmission, measured.finesse, reference.transmission, reference.finesse];
    if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("transmissions and finesses must be positive"));
    }
    if !(reference_eta > 0.0 && reference_eta <= 1.0) {
        return Err(invalid(format!("reference efficiency {reference_eta} outside (0, 1]")));
    }
    let eta = reference_eta * (measured.transmission / reference.transmission)
        * (reference.finesse / measured.finesse).powi(2);
    if eta > 1.0 + INFERENCE_TOLERANCE {
        return Err(Error::InconsistentData { value: eta });
    }
    Ok(eta.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{solve_mode, CavityGeometry};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LAMBDA: f64 = 854e-9;

    fn fa_beam() -> BeamState {
        BeamState::in_vacuum(8.1e-6, 230e-6, LAMBDA).unwrap()
    }

    fn mode(l: f64) -> CavityMode {
        solve_mode(&CavityGeometry::new(l, 700e-6, 540e-6, LAMBDA).unwrap()).unwrap()
    }

    #[test]
    fn matched_beam_couples_fully() {
        let m = mode(426e-6);
        assert_relative_eq!(eta00(&m.beam(), &m).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fa_beam_examples() {
        let e = eta00(&fa_beam(), &mode(426e-6)).unwrap();
        assert!((e - 0.9567).abs() < 5e-4, "{e}");
        let e = eta00(&fa_beam(), &mode(180e-6)).unwrap();
        assert!((e - 0.892).abs() < 1e-3, "{e}");
    }

    #[test]
    fn mismatched_wavelength_or_medium_is_rejected() {
        let m = mode(426e-6);
        let b = BeamState::in_vacuum(8.1e-6, 230e-6, 780e-9).unwrap();
        assert!(matches!(eta00(&b, &m), Err(Error::InvalidComparison(_))));
        let b = BeamState::new(8.1e-6, 230e-6, LAMBDA, 1.45).unwrap();
        assert!(matches!(eta00(&b, &m), Err(Error::InvalidComparison(_))));
    }

    #[test]
    fn misalignment_is_reserved() {
        let m = mode(426e-6);
        let mis = Misalignment { offset: 1e-6, tilt: 0.0 };
        assert!(matches!(eta00_misaligned(&fa_beam(), &m, mis), Err(Error::Unimplemented(_))));
        let e = eta00_misaligned(&fa_beam(), &m, Misalignment::default()).unwrap();
        assert_eq!(e, eta00(&fa_beam(), &m).unwrap());
    }

    #[test]
    fn numeric_overlap_agrees_with_closed_form() {
        let m = mode(460e-6);
        let input = fa_beam();
        let (pi, pc) = (PlaneBeam::of(&input, 0.0), PlaneBeam::of(&m.beam(), 0.0));
        let num = numeric_overlap_oracle(|r| pi.gaussian_radial(r), |r| pc.gaussian_radial(r), pc.spot).unwrap();
        assert_relative_eq!(num, eta00(&input, &m).unwrap(), max_relative = 1e-6);
    }

    #[test]
    fn oracle_rejects_unnormalized_fields() {
        let pc = PlaneBeam::of(&mode(460e-6).beam(), 0.0);
        let r = numeric_overlap_oracle(|r| pc.gaussian_radial(r) * 1.1, |r| pc.gaussian_radial(r), pc.spot);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn decomposition_selection_rules_and_closure() {
        let m = mode(426e-6);
        let set = decompose(&fa_beam(), &m, 12).unwrap();
        assert_relative_eq!(set.eta00(), eta00(&fa_beam(), &m).unwrap(), max_relative = 1e-6);
        for (o, e) in set.iter() {
            if o.n % 2 == 1 || o.m % 2 == 1 {
                assert_eq!(e, 0.0, "{o}");
            }
            assert_eq!(e, set.eta(ModeOrder::new(o.m, o.n)));
        }
        assert!(set.residual() >= -1e-9 && set.residual() < 1e-6, "{}", set.residual());
    }

    #[test]
    fn radial_modes_follow_the_geometric_law() {
        let m = mode(426e-6);
        let input = fa_beam();
        let lg = radial_decompose(&input, &m, 4).unwrap();
        let e0 = eta00(&input, &m).unwrap();
        let set = decompose(&input, &m, 10).unwrap();
        for (p, e) in lg.iter().enumerate() {
            assert_relative_eq!(*e, e0 * (1.0 - e0).powi(p as i32), max_relative = 1e-5);
            assert_relative_eq!(set.group(2 * p as u32), *e, max_relative = 1e-5);
        }
    }

    #[test]
    fn decomposition_order_is_capped() {
        assert!(decompose(&fa_beam(), &mode(426e-6), 21).is_err());
    }

    #[test]
    fn double_sided_squares_single_member_groups() {
        let mut entries = BTreeMap::new();
        entries.insert(ModeOrder::FUNDAMENTAL, 0.9);
        entries.insert(ModeOrder::new(2, 0), 0.1);
        let set = CouplingSet::from_entries(2, entries);
        let model = TransmissionModel::uniform(1.0, 1.0, 1.0);
        let t = transmissions(&set, &model, true).unwrap();
        assert_relative_eq!(t[&ModeOrder::FUNDAMENTAL], 0.81);
        assert_relative_eq!(t[&ModeOrder::new(2, 0)], 0.01);
        let single = transmissions(&set, &model, false).unwrap();
        assert_relative_eq!(beta_from_transmissions(&single).unwrap(), 0.9);
    }

    #[test]
    fn per_order_finesse_enters_squared() {
        let m = mode(426e-6);
        let set = decompose(&fa_beam(), &m, 4).unwrap();
        let model = TransmissionModel::uniform(0.5, 2.0, 1000.0).with_order_finesse(ModeOrder::new(2, 0), 500.0);
        let t = transmissions(&set, &model, false).unwrap();
        let ratio = t[&ModeOrder::new(2, 0)] / t[&ModeOrder::new(0, 2)];
        assert_relative_eq!(ratio, 0.25, max_relative = 1e-12);
        assert_relative_eq!(t[&ModeOrder::FUNDAMENTAL], 0.5 * set.eta00() * 1e6 * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn inference_round_trip_and_inconsistency() {
        let r = FundamentalMeasurement { transmission: 1.0, finesse: 60_000.0 };
        let m = FundamentalMeasurement { transmission: 0.9, finesse: 60_000.0 };
        assert_relative_eq!(infer_eta_at_length(m, r, 0.95).unwrap(), 0.855);
        let m = FundamentalMeasurement { transmission: 1.2, finesse: 60_000.0 };
        assert!(matches!(infer_eta_at_length(m, r, 0.95), Err(Error::InconsistentData { .. })));
        let m = FundamentalMeasurement { transmission: 1.0, finesse: 0.0 };
        assert!(infer_eta_at_length(m, r, 0.95).is_err());
    }

    proptest! {
        #[test]
        fn coupling_is_symmetric_and_bounded(
            wa in 1e-6..30e-6f64, wb in 1e-6..30e-6f64,
            za in -1e-3..1e-3f64, zb in -1e-3..1e-3f64,
        ) {
            let a = BeamState::in_vacuum(wa, za, LAMBDA).unwrap();
            let b = BeamState::in_vacuum(wb, zb, LAMBDA).unwrap();
            let ab = gaussian_coupling(&a, &b).unwrap();
            let ba = gaussian_coupling(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-14);
            prop_assert!(ab > 0.0 && ab <= 1.0 + 1e-15);
        }

        #[test]
        fn coupling_depends_only_on_relative_position(
            wa in 2e-6..20e-6f64, wb in 2e-6..20e-6f64, dz in -5e-4..5e-4f64, shift in -1e-3..1e-3f64,
        ) {
            let a = BeamState::in_vacuum(wa, dz, LAMBDA).unwrap();
            let b = BeamState::in_vacuum(wb, 0.0, LAMBDA).unwrap();
            let e = gaussian_coupling(&a, &b).unwrap();
            let e2 = gaussian_coupling(&a.shifted(-shift), &b.shifted(-shift)).unwrap();
            prop_assert!((e - e2).abs() < 1e-12);
        }
    }
}
