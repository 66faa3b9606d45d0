//! Closed-form quantities of the covering argument.

use crate::error::{ChromaError, Result};

/// `1/(2 n ln n)` clamped to `(0, 0.9]`.
pub fn default_delta(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(ChromaError::domain(format!("default delta needs n >= 2, got {n}")));
    }
    let n = n as f64;
    Ok((1.0 / (2.0 * n * n.ln())).min(0.9))
}

fn check(phi: f64, lambda: f64, delta: f64) -> Result<()> {
    if !(phi > 0.0 && phi <= std::f64::consts::FRAC_PI_4) {
        return Err(ChromaError::domain(format!("phi = {phi} outside (0, pi/4]")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(ChromaError::domain(format!("lambda = {lambda} outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ChromaError::domain(format!("delta = {delta} outside (0, 1)")));
    }
    Ok(())
}

/// Net angle `beta` with `sin(2 beta) = lambda delta sin(phi)`.
pub fn net_angle(phi: f64, lambda: f64, delta: f64) -> Result<f64> {
    check(phi, lambda, delta)?;
    Ok(0.5 * (lambda * delta * phi.sin()).asin())
}

/// Angular radius `gamma'` of the inner pieces: `sin(gamma') = lambda (1 - delta) sin(2 phi)`.
pub fn inner_gamma(phi: f64, lambda: f64, delta: f64) -> Result<f64> {
    check(phi, lambda, delta)?;
    Ok((lambda * (1.0 - delta) * (2.0 * phi).sin()).asin())
}

/// Upper bound `(1 + gamma'/beta)^n sqrt(2 pi (n+1)) / sin^n(phi)` on the
/// number of net points in one rotated inner set.
pub fn edge_size_bound(phi: f64, lambda: f64, n: usize, delta: f64) -> Result<f64> {
    let beta = net_angle(phi, lambda, delta)?;
    let gamma = inner_gamma(phi, lambda, delta)?;
    let nf = n as f64;
    Ok((nf * ((1.0 + gamma / beta).ln() - phi.sin().ln()) + 0.5 * (2.0 * std::f64::consts::PI * (nf + 1.0)).ln()).exp())
}

/// Natural log of the explicit bound on the number of rotated copies of
/// the forbidden set needed to cover the sphere:
///
/// ```text
/// lambda^-n (1-delta)^-n sqrt((1 - lambda^2 (1-delta)^2 sin^2 2phi) / (1 - sin^2 2phi))
///   * (1 + n ln(1 + gamma'/beta) - n ln sin(phi) + ln(2 pi (n+1)) / 2)
/// ```
///
/// Infinite at the degenerate angle `phi = pi/4`.
pub fn ln_bound_pre(phi: f64, lambda: f64, n: usize, delta: f64) -> Result<f64> {
    check(phi, lambda, delta)?;
    let nf = n as f64;
    let s2 = (2.0 * phi).sin().powi(2);
    let den = 1.0 - s2;
    if den <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let shrunk = lambda * (1.0 - delta);
    let beta = net_angle(phi, lambda, delta)?;
    let gamma = inner_gamma(phi, lambda, delta)?;
    let factor = 1.0 + nf * (1.0 + gamma / beta).ln() - nf * phi.sin().ln()
        + 0.5 * (2.0 * std::f64::consts::PI * (nf + 1.0)).ln();
    Ok(-nf * shrunk.ln() + 0.5 * ((1.0 - shrunk * shrunk * s2).ln() - den.ln()) + factor.ln())
}

pub fn bound_pre(phi: f64, lambda: f64, n: usize, delta: f64) -> Result<f64> {
    Ok(ln_bound_pre(phi, lambda, n, delta)?.exp())
}

/// `bound_pre^(1/n)`, evaluated in log space so that large `n` stays finite.
pub fn bound_pre_base(phi: f64, lambda: f64, n: usize, delta: f64) -> Result<f64> {
    Ok((ln_bound_pre(phi, lambda, n, delta)? / n as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{lambda0, solve_phi};

    #[test]
    fn default_delta_values() {
        assert!((default_delta(2).unwrap() - 1.0 / (4.0 * 2f64.ln())).abs() < 1e-15);
        assert!((default_delta(100).unwrap() - 1.0 / (200.0 * 100f64.ln())).abs() < 1e-15);
        assert!(default_delta(1).is_err());
    }

    #[test]
    fn bound_at_two_is_finite_and_large() {
        let phi = solve_phi(2.0).unwrap();
        let lambda = 0.95 * lambda0(2.0).unwrap();
        let b = bound_pre(phi, lambda, 2, default_delta(2).unwrap()).unwrap();
        assert!(b.is_finite() && b > 1.0 / lambda.powi(2));
    }

    #[test]
    fn degenerate_angle_is_infinite() {
        let b = bound_pre(std::f64::consts::FRAC_PI_4, 0.5, 3, 0.1).unwrap();
        assert!(b.is_infinite());
        assert!(bound_pre(0.3, 1.0, 3, 0.1).is_err());
        assert!(bound_pre(0.3, 0.5, 3, 0.0).is_err());
    }

    #[test]
    fn base_decreases_toward_inverse_lambda() {
        let phi = solve_phi(2.0).unwrap();
        let lambda = 0.95 * lambda0(2.0).unwrap();
        let bases: Vec<f64> = [10usize, 100, 1000, 10_000]
            .iter()
            .map(|&n| bound_pre_base(phi, lambda, n, default_delta(n).unwrap()).unwrap())
            .collect();
        assert!(bases.windows(2).all(|w| w[1] < w[0]), "{bases:?}");
        assert!(bases.iter().all(|&b| b > 1.0 / lambda));
    }
}
