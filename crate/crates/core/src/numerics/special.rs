//! Orthonormal Hermite functions and Laguerre polynomials.

/// Fills `out[k]` with the orthonormal Hermite function of order `k` at `xi`:
/// `H_k(xi) exp(-xi²/2) / sqrt(2^k k! sqrt(pi))`.
pub fn hermite_functions(xi: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * xi * out[0];
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] =
            (2.0 / (kf + 1.0)).sqrt() * xi * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

pub fn hermite_function(n: usize, xi: f64) -> f64 {
    let mut buf = vec![0.0; n + 1];
    hermite_functions(xi, &mut buf);
    buf[n]
}

/// Laguerre polynomial `L_p(x)`.
pub fn laguerre(p: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if p == 0 {
        return prev;
    }
    for k in 1..p {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}
