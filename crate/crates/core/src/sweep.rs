//! Cavity-length sweeps of mode matching and transmission.

use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::beam::BeamState;
use crate::cavity::{finesse, solve_mode, CavityGeometry, CavityMode, ModeOrder};
use crate::coupling::{beta_from_transmissions, decompose, transmissions, CouplingSet, TransmissionModel};
use crate::error::{invalid, Error, Result};

/// Orders below this efficiency are left out of per-order finesse and β.
pub const MIN_TRACKED_ETA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Stable,
    /// Outside `0 < g1 g2 < 1`.
    Unstable,
    /// The fundamental's round-trip loss reaches one (clipping at the stability edge).
    Overdamped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub length: f64,
    pub status: RowStatus,
    pub waist_radius: f64,
    pub waist_position: f64,
    pub fsr: f64,
    pub finesse: f64,
    pub eta00: f64,
    pub beta: f64,
    /// Fundamental peak transmission as a fraction of the input power.
    pub t00: f64,
}

impl SweepRow {
    fn flagged(length: f64, status: RowStatus) -> Self {
        Self {
            length,
            status,
            waist_radius: f64::NAN,
            waist_position: f64::NAN,
            fsr: f64::NAN,
            finesse: f64::NAN,
            eta00: f64::NAN,
            beta: f64::NAN,
            t00: f64::NAN,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.status == RowStatus::Stable
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub n_max: u32,
    pub double_sided: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            n_max: 12,
            double_sided: false,
        }
    }
}

/// `start, start + step, …` up to `stop` inclusive; a zero step yields `[start]`.
pub fn length_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop.is_finite() && step >= 0.0) {
        return Err(invalid("sweep needs a positive start and a non-negative step"));
    }
    if step == 0.0 {
        return Ok(vec![start]);
    }
    if stop < start {
        return Err(invalid("sweep stop lies before start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Transmission model with each tracked order's own clipping-limited finesse
/// and `η̃ = T1·T2/π²`, so `T00` is the fractional peak transmission.
/// Returns the model and the orders with `η ≥ MIN_TRACKED_ETA`.
/// Fails with [`Error::Overdamped`] when the fundamental itself is overdamped.
pub fn clipped_model(mode: &CavityMode, set: &CouplingSet) -> Result<(TransmissionModel, CouplingSet)> {
    let geom = &mode.geometry;
    let f00 = finesse(mode, ModeOrder::FUNDAMENTAL)?.finesse;
    let mut model = TransmissionModel::uniform(geom.t1 * geom.t2 / (PI * PI), 1.0, f00);
    // Clipping is symmetric under n ↔ m on a circular aperture.
    let mut by_pair: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut tracked = BTreeMap::new();
    for (order, eta) in set.iter().filter(|(_, e)| *e >= MIN_TRACKED_ETA) {
        let key = (order.n.min(order.m), order.n.max(order.m));
        let f = match by_pair.get(&key) {
            Some(f) => *f,
            None => {
                // An overdamped higher order transmits nothing resolvable.
                let f = finesse(mode, order).map(|r| r.finesse).or_else(|e| match e {
                    Error::Overdamped { .. } => Ok(f64::MIN_POSITIVE),
                    e => Err(e),
                })?;
                by_pair.insert(key, f);
                f
            }
        };
        model = model.with_order_finesse(order, f);
        tracked.insert(order, eta);
    }
    Ok((model, CouplingSet::from_entries(set.n_max, tracked)))
}

fn evaluate(input: &BeamState, template: &CavityGeometry, length: f64, opts: SweepOptions) -> Result<SweepRow> {
    let geom = template.with_length(length)?;
    let mode = match solve_mode(&geom) {
        Ok(m) => m,
        Err(Error::Unstable { .. }) => return Ok(SweepRow::flagged(length, RowStatus::Unstable)),
        Err(e) => return Err(e),
    };
    let set = decompose(input, &mode, opts.n_max)?;
    let partial = SweepRow {
        waist_radius: mode.waist_radius,
        waist_position: mode.waist_position,
        fsr: mode.fsr,
        eta00: set.eta00(),
        ..SweepRow::flagged(length, RowStatus::Overdamped)
    };
    let (model, tracked) = match clipped_model(&mode, &set) {
        Ok(v) => v,
        Err(Error::Overdamped { .. }) => return Ok(partial),
        Err(e) => return Err(e),
    };
    let t = transmissions(&tracked, &model, opts.double_sided)?;
    Ok(SweepRow {
        status: RowStatus::Stable,
        finesse: model.default_finesse,
        beta: beta_from_transmissions(&t)?,
        t00: t[&ModeOrder::FUNDAMENTAL],
        ..partial
    })
}

/// Evaluates the fundamental coupling, finesse and β at each length.
/// Rows come back in input order; unstable lengths are flagged, not dropped.
pub fn sweep_length(input: &BeamState, template: &CavityGeometry, lengths: &[f64], opts: SweepOptions) -> Result<Vec<SweepRow>> {
    if lengths.is_empty() {
        return Err(Error::NoData);
    }
    let rows: Vec<SweepRow> = lengths
        .par_iter()
        .map(|&l| evaluate(input, template, l, opts))
        .collect::<Result<_>>()?;
    if !rows.iter().any(|r| r.status != RowStatus::Unstable) {
        return Err(Error::NoData);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::eta00;
    use approx::assert_relative_eq;

    const LAMBDA: f64 = 854e-9;

    fn template() -> CavityGeometry {
        CavityGeometry::new(426e-6, 700e-6, 540e-6, LAMBDA).unwrap()
    }

    fn fa() -> BeamState {
        BeamState::in_vacuum(8.1e-6, 230e-6, LAMBDA).unwrap()
    }

    #[test]
    fn grid() {
        assert_eq!(length_grid(100e-6, 100e-6, 0.0).unwrap(), vec![100e-6]);
        let g = length_grid(100e-6, 600e-6, 5e-6).unwrap();
        assert_eq!(g.len(), 101);
        assert_relative_eq!(*g.last().unwrap(), 600e-6, max_relative = 1e-12);
        assert!(length_grid(100e-6, 50e-6, 1e-6).is_err());
    }

    #[test]
    fn single_point_matches_direct_coupling() {
        let m = solve_mode(&template()).unwrap();
        let rows = sweep_length(&m.beam(), &template(), &[426e-6], SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].eta00 - 1.0).abs() < 1e-6);
        assert!((rows[0].beta - 1.0).abs() < 1e-6);
        let rows = sweep_length(&fa(), &template(), &[426e-6], SweepOptions::default()).unwrap();
        let direct = eta00(&fa(), &m).unwrap();
        assert!((rows[0].eta00 - direct).abs() < 1e-6);
    }

    #[test]
    fn equal_finesse_gives_beta_equal_eta00() {
        let rows = sweep_length(&fa(), &template(), &[300e-6], SweepOptions::default()).unwrap();
        let r = rows[0];
        // Mid-range clipping is negligible, so β tracks η00 up to the truncation residual.
        assert!((r.beta - r.eta00).abs() < 1e-4, "{} vs {}", r.beta, r.eta00);
        assert_relative_eq!(r.t00, 4.0 * 50e-6 * 50e-6 / (140e-6 * 140e-6) * r.eta00, max_relative = 1e-6);
    }

    #[test]
    fn unstable_rows_are_flagged_in_order() {
        let ls = [500e-6, 700e-6, 300e-6];
        let rows = sweep_length(&fa(), &template(), &ls, SweepOptions::default()).unwrap();
        assert_eq!(rows.iter().map(|r| r.length).collect::<Vec<_>>(), ls);
        assert!(rows[0].is_stable() && rows[2].is_stable());
        assert_eq!(rows[1].status, RowStatus::Unstable);
        assert!(rows[1].eta00.is_nan());
    }

    #[test]
    fn all_unstable_is_no_data() {
        let r = sweep_length(&fa(), &template(), &[600e-6, 650e-6], SweepOptions::default());
        assert!(matches!(r, Err(Error::NoData)));
        assert!(matches!(sweep_length(&fa(), &template(), &[], SweepOptions::default()), Err(Error::NoData)));
    }

    #[test]
    fn double_sided_raises_beta() {
        let one = sweep_length(&fa(), &template(), &[200e-6], SweepOptions::default()).unwrap()[0];
        let opts = SweepOptions {
            double_sided: true,
            ..SweepOptions::default()
        };
        let two = sweep_length(&fa(), &template(), &[200e-6], opts).unwrap()[0];
        assert!(two.beta > one.beta);
    }
}
