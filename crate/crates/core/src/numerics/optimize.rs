//! Levenberg-Marquardt least squares and a Nelder-Mead simplex minimizer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which the fit is considered converged.
    pub cost_tolerance: f64,
    /// Relative parameter step below which the fit is considered converged.
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-14,
            step_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Sum of squared residuals at the solution.
    pub cost: f64,
    /// `(JᵀJ)⁻¹` at the solution.
    pub inverse_hessian: DMatrix<f64>,
    /// `s² (JᵀJ)⁻¹` with `s² = cost / (N - p)`.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub residual_count: usize,
}

fn jacobian<R>(residuals: &R, p: &[f64], scales: &[f64], r0: &DVector<f64>) -> DMatrix<f64>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let n = r0.len();
    let mut jac = DMatrix::zeros(n, p.len());
    let mut work = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(scales[k]);
        work[k] = p[k] + h;
        let up = residuals(&work);
        work[k] = p[k] - h;
        let down = residuals(&work);
        work[k] = p[k];
        for i in 0..n {
            jac[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes `Σ residuals(p)²` starting from `p0`.
///
/// `scales` gives a typical magnitude per parameter; it sets the finite
/// difference step for parameters that start at zero.
pub fn levenberg_marquardt<R>(
    residuals: R,
    p0: &[f64],
    scales: &[f64],
    opts: LmOptions,
) -> Result<LmFit>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    assert_eq!(p0.len(), scales.len());
    let np = p0.len();
    let mut p = p0.to_vec();
    let mut r = DVector::from_vec(residuals(&p));
    let m = r.len();
    if m < np {
        return Err(Error::InvalidParameter(format!(
            "{m} residuals cannot determine {np} parameters"
        )));
    }
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::FitFailure {
            iterations: 0,
            cost,
            reason: "initial residuals are not finite".into(),
        });
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = jacobian(&residuals, &p, scales, &r);
    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let tr = DVector::from_vec(residuals(&trial));
            let tcost = tr.norm_squared();
            if tcost.is_finite() && tcost <= cost {
                let rel_step = step
                    .iter()
                    .zip(p.iter().zip(scales))
                    .map(|(d, (x, s))| d.abs() / x.abs().max(*s))
                    .fold(0.0, f64::max);
                let rel_cost = (cost - tcost) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = tr;
                cost = tcost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_step < opts.step_tolerance
                    || rel_cost < opts.cost_tolerance
                    || cost < 1e-28 * m as f64
                {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill step exists at any damping: we are at a minimum.
            converged = true;
        }
        if converged {
            break;
        }
        jac = jacobian(&residuals, &p, scales, &r);
    }
    if !converged {
        return Err(Error::FitFailure {
            iterations,
            cost,
            reason: "iteration cap reached".into(),
        });
    }
    let jac = jacobian(&residuals, &p, scales, &r);
    let jtj = jac.transpose() * &jac;
    let inverse_hessian = jtj.clone().try_inverse().ok_or_else(|| Error::FitFailure {
        iterations,
        cost,
        reason: "singular normal matrix at the solution".into(),
    })?;
    let dof = (m - np).max(1) as f64;
    let covariance = &inverse_hessian * (cost / dof);
    Ok(LmFit {
        params: p,
        cost,
        inverse_hessian,
        covariance,
        iterations,
        residual_count: m,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evaluations: usize,
    /// Stop once the spread of function values across the simplex drops below this.
    pub value_tolerance: f64,
    /// Stop once every vertex is within this distance of the best one.
    pub size_tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 2000,
            value_tolerance: 1e-12,
            size_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder-Mead minimization from `start` with initial edge lengths `steps`.
pub fn nelder_mead<F>(mut f: F, start: &[f64], steps: &[f64], opts: SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start, &mut evals)));
    for k in 0..n {
        let mut x = start.to_vec();
        x[k] += steps[k];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    while evals < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.value_tolerance && size <= opts.size_tolerance {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let reflected = combine(&centroid, &simplex[n].0, -1.0);
        let fr = eval(&reflected, &mut evals);
        if fr < best {
            let expanded = combine(&centroid, &simplex[n].0, -2.0);
            let fe = eval(&expanded, &mut evals);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst {
                let c = combine(&centroid, &reflected, 0.5);
                let v = eval(&c, &mut evals);
                (c, v)
            } else {
                let c = combine(&centroid, &simplex[n].0, 0.5);
                let v = eval(&c, &mut evals);
                (c, v)
            };
            if fc < fr.min(worst) {
                simplex[n] = (contracted, fc);
            } else {
                let anchor = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = combine(&anchor, &vertex.0, 0.5);
                    let v = eval(&x, &mut evals);
                    *vertex = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (point, value) = simplex.swap_remove(0);
    SimplexResult {
        point,
        value,
        evaluations: evals,
    }
}
