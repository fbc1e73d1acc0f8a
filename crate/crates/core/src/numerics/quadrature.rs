//! Adaptive Gauss-Kronrod (7/15) quadrature on finite, semi-infinite and
//! infinite intervals. Infinite ranges are mapped onto `[0, 1)` with
//! `x = a + t / (1 - t)`.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and subdivision budget for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    Segment {
        a,
        b,
        value,
        error,
    }
}

/// Integrates a complex-valued `f` over the finite interval `[a, b]`.
pub fn integrate_complex<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Complex64>
where
    F: FnMut(f64) -> Complex64,
{
    if a == b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let first = gk15(&mut f, a, b);
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut count = 1;
    while total_err > tol.abs.max(tol.rel * total.norm()) {
        if count >= tol.max_intervals {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{a:e}, {b:e}] after {count} intervals (error estimate {total_err:e})"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Numerical(format!(
                "quadrature interval collapsed near x = {mid:e}"
            )));
        }
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        count += 1;
        if total_err < 0.0 {
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    // Re-sum to avoid drift from the running updates.
    Ok(heap.iter().map(|s| s.value).sum())
}

pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_complex(|x| Complex64::new(f(x), 0.0), a, b, tol).map(|z| z.re)
}

/// Integrates over `[a, ∞)` through `x = a + scale·t/(1-t)`. `scale` should be
/// comparable to the width of the integrand.
pub fn integrate_complex_to_infinity<F>(mut f: F, a: f64, scale: f64, tol: Tolerance) -> Result<Complex64>
where
    F: FnMut(f64) -> Complex64,
{
    integrate_complex(
        |t| {
            if t >= 1.0 {
                return Complex64::new(0.0, 0.0);
            }
            let s = 1.0 - t;
            let v = f(a + scale * t / s);
            if v.re == 0.0 && v.im == 0.0 {
                v
            } else {
                v * (scale / (s * s))
            }
        },
        0.0,
        1.0,
        tol,
    )
}

pub fn integrate_to_infinity<F>(mut f: F, a: f64, scale: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_complex_to_infinity(|x| Complex64::new(f(x), 0.0), a, scale, tol).map(|z| z.re)
}

/// Integrates over the whole real line, folding `f(x) + f(-x)` onto `[0, ∞)`.
pub fn integrate_complex_real_line<F>(mut f: F, scale: f64, tol: Tolerance) -> Result<Complex64>
where
    F: FnMut(f64) -> Complex64,
{
    integrate_complex_to_infinity(|x| f(x) + f(-x), 0.0, scale, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x - 2.0 * x + 1.0, -1.0, 2.0, Tolerance::default()).unwrap();
        assert!((v - 9.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_tail_and_line() {
        let tol = Tolerance::default();
        let half = integrate_to_infinity(|x| (-x * x).exp(), 0.0, 1.0, tol).unwrap();
        assert!((half - PI.sqrt() / 2.0).abs() < 1e-12);
        let line = integrate_complex_real_line(|x| Complex64::new((-x * x).exp(), 0.0), 1.0, tol).unwrap();
        assert!((line.re - PI.sqrt()).abs() < 1e-12);
        // erfc(3)·√π/2 from the tail integral
        let tail = integrate_to_infinity(|x| (-x * x).exp(), 3.0, 1.0, tol).unwrap();
        assert!((tail - libm::erfc(3.0) * PI.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn oscillatory_complex() {
        // ∫ exp(-x²) exp(i x) dx = √π exp(-1/4)
        let v = integrate_complex_real_line(
            |x| Complex64::from_polar((-x * x).exp(), x),
            1.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v.re - PI.sqrt() * (-0.25f64).exp()).abs() < 1e-11);
        assert!(v.im.abs() < 1e-12);
    }

    #[test]
    fn scale_resolves_narrow_integrands() {
        let w = 1e-5;
        let v = integrate_to_infinity(|x| (-x * x / (w * w)).exp(), 0.0, w, Tolerance::default()).unwrap();
        assert!((v / (0.5 * PI.sqrt() * w) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let tol = Tolerance {
            abs: 1e-300,
            rel: 0.0,
            max_intervals: 5,
        };
        assert!(integrate(|x| (50.0 * x).sin().abs(), 0.0, 10.0, tol).is_err());
    }
}
