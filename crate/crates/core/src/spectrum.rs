//! Piezo-scan transmission spectra: synthesis and peak analysis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

use crate::cavity::{resonance_offsets, CavityMode, ModeOrder};
use crate::coupling::{transmissions, CouplingSet, TransmissionModel};
use crate::error::{invalid, Error, Result};
use crate::numerics::optimize::{levenberg_marquardt, LmOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Full detuning span, Hz, centered on the fundamental resonance.
    pub span: f64,
    pub samples: usize,
    /// EOM sideband frequency, Hz. Zero disables sidebands.
    pub sideband_frequency: f64,
    /// Power in each first-order sideband, as a fraction of the laser power.
    pub sideband_fraction: f64,
    /// Additive Gaussian noise RMS relative to the tallest noiseless sample.
    pub noise_rms: f64,
    /// Output collected through a second fiber assembly.
    pub double_sided: bool,
    /// Ratio of the recorded detuning axis to the true one (piezo calibration error).
    pub scan_stretch: f64,
    pub seed: u64,
    /// Relative spread of fitted linewidths tolerated before finesse is
    /// reported as order dependent.
    pub finesse_tolerance: f64,
}

impl ScanConfig {
    /// One free spectral range with enough samples for ~10 points per linewidth at `F ≈ 5·10⁴`.
    pub fn one_fsr(fsr: f64) -> Self {
        Self {
            span: fsr,
            samples: 1 << 19,
            sideband_frequency: 0.0,
            sideband_fraction: 0.0,
            noise_rms: 0.0,
            double_sided: false,
            scan_stretch: 1.0,
            seed: 0,
            finesse_tolerance: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.span > 0.0 && self.span.is_finite()) {
            return Err(invalid("scan span must be positive"));
        }
        if self.samples < 100 {
            return Err(invalid(format!("scan needs at least 100 samples, got {}", self.samples)));
        }
        if !(self.sideband_frequency >= 0.0 && self.sideband_frequency.is_finite()) {
            return Err(invalid("sideband frequency must be non-negative"));
        }
        if !(0.0..=0.5).contains(&self.sideband_fraction) {
            return Err(invalid(format!("sideband fraction {} outside [0, 0.5]", self.sideband_fraction)));
        }
        if !(self.noise_rms >= 0.0 && self.noise_rms.is_finite()) {
            return Err(invalid("noise RMS must be non-negative"));
        }
        if !(self.scan_stretch > 0.0 && self.scan_stretch.is_finite()) {
            return Err(invalid("scan stretch must be positive"));
        }
        if !(self.finesse_tolerance > 0.0) {
            return Err(invalid("finesse tolerance must be positive"));
        }
        Ok(())
    }

    fn has_sidebands(&self) -> bool {
        self.sideband_frequency > 0.0 && self.sideband_fraction > 0.0
    }
}

/// A resonance present in synthetic data, on the true frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TruePeak {
    pub center: f64,
    pub height: f64,
    pub fwhm: f64,
    pub orders: Vec<ModeOrder>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransmissionSpectrum {
    /// Recorded detuning, Hz.
    pub detuning: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Free spectral range when the cavity length is known.
    pub fsr: Option<f64>,
    /// Carrier resonances of synthetic spectra.
    pub annotations: Vec<TruePeak>,
}

impl TransmissionSpectrum {
    pub fn new(detuning: Vec<f64>, intensity: Vec<f64>, fsr: Option<f64>) -> Result<Self> {
        if detuning.len() != intensity.len() {
            return Err(invalid("detuning and intensity lengths differ"));
        }
        if intensity.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("intensity must be finite and non-negative"));
        }
        if detuning.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("detuning must be strictly increasing"));
        }
        Ok(Self {
            detuning,
            intensity,
            fsr,
            annotations: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.detuning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detuning.is_empty()
    }

    /// Trapezoid integral over the recorded axis.
    pub fn integral(&self) -> f64 {
        self.detuning
            .windows(2)
            .zip(self.intensity.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

fn lorentzian(x: f64, center: f64, hwhm: f64) -> f64 {
    let u = (x - center) / hwhm;
    1.0 / (1.0 + u * u)
}

/// Peak transmissions merged into resolvable lines: orders sharing a
/// resonance and a linewidth collapse into one peak.
fn lines(mode: &CavityMode, coupling: &CouplingSet, tm: &TransmissionModel, double_sided: bool) -> Result<Vec<TruePeak>> {
    let t = transmissions(coupling, tm, double_sided)?;
    let mut merged: BTreeMap<(u32, u64), TruePeak> = BTreeMap::new();
    for (order, height) in t {
        if height <= 0.0 {
            continue;
        }
        let f = tm.finesse_for(order);
        let center = resonance_offsets(mode, &[order])[0];
        let center = if center >= 0.5 * mode.fsr { center - mode.fsr } else { center };
        let entry = merged.entry((order.total(), f.to_bits())).or_insert_with(|| TruePeak {
            center,
            height: 0.0,
            fwhm: mode.fsr / f,
            orders: Vec::new(),
        });
        entry.height += height;
        entry.orders.push(order);
    }
    let mut out: Vec<TruePeak> = merged.into_values().collect();
    let tallest = out.iter().map(|p| p.height).fold(0.0, f64::max);
    out.retain(|p| p.height > 1e-14 * tallest);
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(out)
}

/// Lorentzian tails below this fraction of the tallest line are not summed.
const TAIL_CUTOFF: f64 = 1e-10;

/// Sum of Lorentzian resonances seen through a piezo scan.
pub fn synthesize(
    mode: &CavityMode,
    coupling: &CouplingSet,
    tm: &TransmissionModel,
    scan: &ScanConfig,
) -> Result<TransmissionSpectrum> {
    scan.validate()?;
    if !(mode.fsr > 0.0 && mode.fsr.is_finite()) {
        return Err(invalid("free spectral range must be positive"));
    }
    let peaks = lines(mode, coupling, tm, scan.double_sided)?;
    if peaks.is_empty() {
        return Err(invalid("coupling set has no populated orders"));
    }
    let replicas = (scan.span / scan.scan_stretch / (2.0 * mode.fsr)).ceil() as i64 + 1;
    let carrier = 1.0 - 2.0 * scan.sideband_fraction;
    let mut components: Vec<(f64, f64, f64)> = Vec::new();
    for p in &peaks {
        for k in -replicas..=replicas {
            let c = p.center + k as f64 * mode.fsr;
            components.push((c, p.height * carrier, 0.5 * p.fwhm));
            if scan.has_sidebands() {
                for s in [-1.0, 1.0] {
                    components.push((c + s * scan.sideband_frequency, p.height * scan.sideband_fraction, 0.5 * p.fwhm));
                }
            }
        }
    }
    let n = scan.samples;
    let step = scan.span / (n - 1) as f64;
    let detuning: Vec<f64> = (0..n).map(|i| -0.5 * scan.span + i as f64 * step).collect();
    let mut intensity = vec![0.0; n];
    let floor = TAIL_CUTOFF * components.iter().map(|c| c.1).fold(0.0, f64::max);
    for &(c, h, g) in &components {
        if h <= floor {
            continue;
        }
        let reach = g * (h / floor - 1.0).sqrt() * scan.scan_stretch;
        let centre = c * scan.scan_stretch + 0.5 * scan.span;
        let lo = ((centre - reach) / step).ceil().max(0.0);
        let hi = ((centre + reach) / step).floor().min((n - 1) as f64);
        if lo > hi {
            continue;
        }
        let (a, b) = (1.0 / (scan.scan_stretch * g), c / g);
        for (v, &x) in intensity[lo as usize..=hi as usize].iter_mut().zip(&detuning[lo as usize..=hi as usize]) {
            let u = x * a - b;
            *v += h / (1.0 + u * u);
        }
    }
    if scan.noise_rms > 0.0 {
        let peak = intensity.iter().copied().fold(0.0, f64::max);
        let normal = Normal::new(0.0, scan.noise_rms * peak).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
        for v in &mut intensity {
            *v = (*v + normal.sample(&mut rng)).max(0.0);
        }
    }
    Ok(TransmissionSpectrum {
        detuning,
        intensity,
        fsr: Some(mode.fsr),
        annotations: peaks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPeak {
    /// Calibrated detuning, Hz.
    pub center: f64,
    pub height: f64,
    pub fwhm: f64,
    pub fwhm_std: f64,
    pub prominence: f64,
    pub sideband: bool,
    /// Number of true resonances merged into this peak (synthetic data only).
    pub multiplicity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAnalysis {
    /// Mode peaks and sidebands, ordered by center.
    pub peaks: Vec<FittedPeak>,
    pub beta: f64,
    /// Fundamental FWHM on the calibrated axis, Hz.
    pub linewidth: f64,
    pub finesse: Option<f64>,
    /// Factor applied to the recorded axis; 1 without calibration.
    pub axis_scale: f64,
    pub calibrated: bool,
    /// Whether all mode linewidths agree with the fundamental within tolerance.
    pub uniform_finesse: bool,
    pub warnings: Vec<String>,
}

impl SpectrumAnalysis {
    pub fn fundamental(&self) -> &FittedPeak {
        self.peaks
            .iter()
            .filter(|p| !p.sideband)
            .max_by(|a, b| a.height.total_cmp(&b.height))
            .expect("analysis always holds a fundamental")
    }

    pub fn mode_peaks(&self) -> impl Iterator<Item = &FittedPeak> {
        self.peaks.iter().filter(|p| !p.sideband)
    }
}

fn boxcar(y: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return y.to_vec();
    }
    let n = y.len();
    let mut out = Vec::with_capacity(n);
    let mut sum: f64 = y[..(half + 1).min(n)].iter().sum();
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        out.push(sum / (hi - lo) as f64);
        if hi < n {
            sum += y[hi];
        }
        if i >= half {
            sum -= y[i - half];
        }
    }
    out
}

/// Samples between the half-maximum crossings around index `i`.
fn half_width_samples(y: &[f64], i: usize) -> usize {
    let half = 0.5 * y[i];
    let left = (0..i).rev().find(|&j| y[j] < half).unwrap_or(0);
    let right = (i + 1..y.len()).find(|&j| y[j] < half).unwrap_or(y.len() - 1);
    (right - left).max(1)
}

struct Candidate {
    index: usize,
    prominence: f64,
}

const BLOCK: usize = 1024;

/// Per-block minima and maxima, used to skip long monotone stretches.
struct BlockExtrema {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl BlockExtrema {
    fn new(y: &[f64]) -> Self {
        let (min, max) = y
            .chunks(BLOCK)
            .map(|c| c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
            .unzip();
        Self { min, max }
    }

    /// Lowest value met walking left from `i - 1` before anything exceeds `top`.
    fn left_min(&self, y: &[f64], i: usize, top: f64) -> f64 {
        let mut low = top;
        let mut k = i;
        while k > 0 {
            if k % BLOCK == 0 && self.max[k / BLOCK - 1] <= top {
                low = low.min(self.min[k / BLOCK - 1]);
                k -= BLOCK;
                continue;
            }
            k -= 1;
            if y[k] > top {
                break;
            }
            low = low.min(y[k]);
        }
        low
    }

    /// Lowest value met walking right from `j + 1` before anything exceeds `top`.
    fn right_min(&self, y: &[f64], j: usize, top: f64) -> f64 {
        let mut low = top;
        let mut k = j + 1;
        while k < y.len() {
            if k % BLOCK == 0 && k + BLOCK <= y.len() && self.max[k / BLOCK] <= top {
                low = low.min(self.min[k / BLOCK]);
                k += BLOCK;
                continue;
            }
            if y[k] > top {
                break;
            }
            low = low.min(y[k]);
            k += 1;
        }
        low
    }
}

/// Local maxima of `y` whose topographic prominence reaches `threshold`.
fn prominent_maxima(y: &[f64], threshold: f64) -> Vec<Candidate> {
    let n = y.len();
    let blocks = BlockExtrema::new(y);
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] < threshold || y[i] <= y[i - 1] {
            i += 1;
            continue;
        }
        // Walk across a flat top.
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 < n && y[j + 1] > y[i] {
            i = j + 1;
            continue;
        }
        let top = y[i];
        let prominence = top - blocks.left_min(y, i, top).max(blocks.right_min(y, j, top));
        if prominence >= threshold {
            out.push(Candidate {
                index: (i + j) / 2,
                prominence,
            });
        }
        i = j + 1;
    }
    out
}

struct LocalFit {
    height: f64,
    center: f64,
    fwhm: f64,
    fwhm_std: f64,
}

/// Mean of `max(0, mu + noise)` for Gaussian noise of RMS `sigma`: the
/// expected reading of a detector whose output is floored at zero.
fn floored_mean(mu: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return mu;
    }
    let t = mu / sigma;
    let cdf = 0.5 * libm::erfc(-t / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    mu * cdf + sigma * pdf
}

/// Lorentzian plus constant baseline, fitted against the floored-noise
/// expectation so that clipped tails do not bias the width.
fn fit_lorentzian(x: &[f64], y: &[f64], center: f64, height: f64, fwhm: f64, noise: f64) -> Result<LocalFit> {
    let base0 = y.first().unwrap().min(*y.last().unwrap()).max(0.0);
    let p0 = [height - base0, center, 0.5 * fwhm, base0];
    let scales = [height.abs().max(1e-300), fwhm, fwhm, height.abs().max(1e-300) * 1e-2];
    let residual = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| floored_mean(p[3] + p[0] * lorentzian(xi, p[1], p[2]), noise) - yi)
            .collect()
    };
    let fit = levenberg_marquardt(residual, &p0, &scales, LmOptions::default())?;
    let p = &fit.params;
    let hwhm = p[2].abs();
    if !(p[0] > 0.0 && hwhm > 0.0 && p.iter().all(|v| v.is_finite())) {
        return Err(Error::FitFailure {
            iterations: fit.iterations,
            cost: fit.cost,
            reason: "non-physical Lorentzian parameters".into(),
        });
    }
    Ok(LocalFit {
        height: p[0],
        center: p[1],
        fwhm: 2.0 * hwhm,
        fwhm_std: 2.0 * fit.covariance[(2, 2)].max(0.0).sqrt(),
    })
}

/// Finds the pair of peaks symmetric about the carrier at index `carrier`
/// that best matches the nominal sideband spacing. Returns the recorded spacing.
fn find_sidebands(peaks: &[FittedPeak], carrier: usize, omega: f64, fraction: f64) -> Option<f64> {
    let c0 = peaks[carrier].center;
    let h0 = peaks[carrier].height;
    let expected = fraction / (1.0 - 2.0 * fraction).max(1e-12);
    let plausible = |p: &FittedPeak, side: f64| {
        let d = side * (p.center - c0);
        d > 0.75 * omega && d < 1.35 * omega && p.height < 3.0 * expected * h0 && p.height > expected * h0 / 3.0
    };
    let mut best: Option<(f64, f64)> = None;
    for l in peaks.iter().filter(|p| plausible(p, -1.0)) {
        for r in peaks.iter().filter(|p| plausible(p, 1.0)) {
            let asym = ((r.center - c0) - (c0 - l.center)).abs();
            let spacing = 0.5 * (r.center - l.center);
            if asym < 0.5 * peaks[carrier].fwhm.max(l.fwhm).max(r.fwhm) && best.is_none_or(|(a, _)| asym < a) {
                best = Some((asym, spacing));
            }
        }
    }
    best.map(|(_, s)| s)
}

/// Detects and fits the resonances of a recorded spectrum.
pub fn analyze(sp: &TransmissionSpectrum, scan: &ScanConfig) -> Result<SpectrumAnalysis> {
    scan.validate()?;
    if sp.len() < 3 {
        return Err(Error::EmptySpectrum { threshold: 0.0 });
    }
    let (x, y) = (&sp.detuning, &sp.intensity);
    let ymax = y.iter().copied().fold(0.0, f64::max);
    let noise = scan.noise_rms * ymax;
    let threshold = (5.0 * noise).max(1e-4 * ymax);
    if ymax <= 0.0 {
        return Err(Error::EmptySpectrum { threshold });
    }
    let top = y.iter().position(|&v| v == ymax).unwrap();
    let fwhm_samples = half_width_samples(y, top);
    let smoothed = boxcar(y, fwhm_samples / 8);
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let fwhm_guess = fwhm_samples as f64 * step;

    let mut cands = prominent_maxima(&smoothed, threshold);
    if cands.is_empty() {
        return Err(Error::EmptySpectrum { threshold });
    }
    cands.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    let min_sep = (fwhm_samples / 2).max(1);
    let mut accepted: Vec<Candidate> = Vec::new();
    for c in cands {
        if accepted.iter().all(|a| a.index.abs_diff(c.index) >= min_sep) {
            accepted.push(c);
        }
    }
    accepted.sort_by_key(|c| c.index);

    let mut warnings = Vec::new();
    let mut peaks = Vec::with_capacity(accepted.len());
    for (k, c) in accepted.iter().enumerate() {
        let reach = 8 * fwhm_samples.max(4);
        let mut lo = c.index.saturating_sub(reach);
        let mut hi = (c.index + reach + 1).min(x.len());
        if k > 0 {
            lo = lo.max((accepted[k - 1].index + c.index) / 2);
        }
        if k + 1 < accepted.len() {
            hi = hi.min((accepted[k + 1].index + c.index) / 2 + 1);
        }
        let height = smoothed[c.index];
        match fit_lorentzian(&x[lo..hi], &y[lo..hi], x[c.index], height, fwhm_guess, noise) {
            Ok(f) => peaks.push(FittedPeak {
                center: f.center,
                height: f.height,
                fwhm: f.fwhm,
                fwhm_std: f.fwhm_std,
                prominence: c.prominence,
                sideband: false,
                multiplicity: None,
            }),
            Err(e) => warnings.push(format!("peak at {:.6e} Hz not fitted: {e}", x[c.index])),
        }
    }
    if peaks.is_empty() {
        return Err(Error::EmptySpectrum { threshold });
    }
    let carrier = (0..peaks.len()).max_by(|&a, &b| peaks[a].height.total_cmp(&peaks[b].height)).unwrap();

    let mut axis_scale = 1.0;
    let mut calibrated = false;
    if scan.has_sidebands() {
        match find_sidebands(&peaks, carrier, scan.sideband_frequency, scan.sideband_fraction) {
            Some(spacing) => {
                axis_scale = scan.sideband_frequency / spacing;
                calibrated = true;
            }
            None => warnings.push("sideband calibration missing; using the nominal frequency axis".into()),
        }
    }
    for p in &mut peaks {
        p.center *= axis_scale;
        p.fwhm *= axis_scale;
        p.fwhm_std *= axis_scale;
    }
    let c0 = peaks[carrier].center;

    if scan.has_sidebands() {
        let omega = scan.sideband_frequency;
        let ratio = scan.sideband_fraction / (1.0 - 2.0 * scan.sideband_fraction).max(1e-12);
        let snapshot = peaks.clone();
        for p in &mut peaks {
            p.sideband = snapshot.iter().any(|q| {
                q.height > p.height
                    && ((p.center - q.center).abs() - omega).abs() < q.fwhm.max(p.fwhm)
                    && p.height < 3.0 * ratio * q.height
            });
        }
    }

    if !sp.annotations.is_empty() {
        for p in peaks.iter_mut().filter(|p| !p.sideband) {
            let count: usize = sp
                .annotations
                .iter()
                .filter(|a| (a.center - p.center).abs() < 0.5 * p.fwhm.max(a.fwhm))
                .map(|a| a.orders.len())
                .sum();
            p.multiplicity = Some(count);
        }
    }

    let fundamental = &peaks[carrier];
    let in_window = |p: &FittedPeak| match sp.fsr {
        Some(fsr) => {
            let d = p.center - c0;
            d >= -0.5 * fsr && d < 0.5 * fsr
        }
        None => true,
    };
    let total: f64 = peaks.iter().filter(|p| !p.sideband && in_window(p)).map(|p| p.height).sum();
    let beta = fundamental.height / total;
    let linewidth = fundamental.fwhm;
    let uniform_finesse = peaks
        .iter()
        .filter(|p| !p.sideband)
        .all(|p| ((p.fwhm - linewidth) / linewidth).abs() <= scan.finesse_tolerance);
    let finesse = sp.fsr.map(|fsr| fsr / linewidth);
    Ok(SpectrumAnalysis {
        peaks,
        beta,
        linewidth,
        finesse,
        axis_scale,
        calibrated,
        uniform_finesse,
        warnings,
    })
}
