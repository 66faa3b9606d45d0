//! Parameter solving: the packing angle `phi(R)`, the critical shrink
//! coefficient `lambda0(R)`, the bound base `x(R)`, and the shell schedule
//! used to color balls.
//!
//! For `R > sqrt(5)/2` the triple `(phi, lambda0, alpha)` is the unique
//! solution with `phi < pi/4` of
//!
//! ```text
//! 2 R lambda0 sin(2 phi) = 1
//! sin(alpha)             = lambda0 sin(phi)
//! 2 R sin(phi - alpha)   = 1
//! ```
//!
//! i.e. the largest shrink at which one piece has Euclidean diameter 1 and two
//! pieces are exactly distance 1 apart.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{ChromaError, Result};

/// `sqrt(5)/2`, the threshold between the two regimes.
pub const SQRT5_HALF: f64 = 1.118_033_988_749_895;

/// Agreement required between the two closed forms of `lambda0`.
pub const CLOSED_FORM_TOL: f64 = 1e-10;

/// Upper end of the bracket used to locate `r*`.
const R_STAR_BRACKET_HI: f64 = 1e9;

/// Discriminant `1/4 - (5R^2 - 1)/(16 R^4)`; non-negative for `R >= 1`.
fn discriminant(r: f64) -> f64 {
    let r2 = r * r;
    0.25 - (5.0 * r2 - 1.0) / (16.0 * r2 * r2)
}

/// Closed form of `cos^2(phi)` (root with the plus sign); also the function
/// `g(r)` of the shell construction. Defined for `r >= 1`.
pub fn cos_sq_phi(r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(ChromaError::domain(format!("cos^2(phi) closed form needs R >= 1, got {r}")));
    }
    Ok(0.5 - 0.25 / (r * r) + discriminant(r).max(0.0).sqrt())
}

/// `sin^2(phi) = 1 - cos^2(phi)`, rationalized to avoid cancellation at large `R`.
fn sin_sq_phi(r: f64) -> f64 {
    let r2 = r * r;
    (9.0 / (16.0 * r2)) / (0.5 + 0.25 / r2 + discriminant(r).max(0.0).sqrt())
}

fn require_large(r: f64) -> Result<()> {
    if r > SQRT5_HALF && r.is_finite() {
        Ok(())
    } else {
        Err(ChromaError::Regime { radius: r })
    }
}

/// Packing angle `phi(R)` in `(0, pi/4)`.
pub fn solve_phi(r: f64) -> Result<f64> {
    require_large(r)?;
    Ok(sin_sq_phi(r).sqrt().asin())
}

/// `1 + 8 cos^2(phi) - 16 R^2 sin^2(phi) cos^2(phi)`, zero at the solution.
pub fn phi_equation_residual(r: f64, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    1.0 + 8.0 * c * c - 16.0 * r * r * s * s * c * c
}

/// Both closed forms of `lambda0`: `1/sqrt(1 + 8 cos^2 phi)` and `1/(2R sin 2phi)`.
pub fn lambda0_forms(r: f64) -> Result<(f64, f64)> {
    let phi = solve_phi(r)?;
    let c2 = 1.0 - sin_sq_phi(r);
    let first = 1.0 / (1.0 + 8.0 * c2).sqrt();
    let second = 1.0 / (2.0 * r * (2.0 * phi).sin());
    Ok((first, second))
}

pub fn lambda0(r: f64) -> Result<f64> {
    let (a, b) = lambda0_forms(r)?;
    if (a - b).abs() > CLOSED_FORM_TOL * a {
        return Err(ChromaError::State(format!(
            "lambda0 closed forms disagree at R = {r}: {a} vs {b}"
        )));
    }
    Ok(a)
}

/// The large-radius closed form of `x(R)`, evaluated without a regime check
/// (valid for `R >= 1`), so that both branches can be compared at `sqrt(5)/2`.
pub fn x_large_branch(r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(ChromaError::domain(format!("x(R) closed form needs R >= 1, got {r}")));
    }
    let r2 = r * r;
    let inner = (1.0 - (5.0 * r2 - 1.0) / (4.0 * r2 * r2)).max(0.0);
    Ok((5.0 - 2.0 / r2 + 4.0 * inner.sqrt()).sqrt())
}

/// Base of the exponential bound: the closed form for `R > sqrt(5)/2`, `2R` below.
pub fn x_of_r(r: f64) -> Result<f64> {
    if !(r > 0.5 && r.is_finite()) {
        return Err(ChromaError::domain(format!("x(R) is defined for R > 1/2, got {r}")));
    }
    if r > SQRT5_HALF {
        x_large_branch(r)
    } else {
        Ok(2.0 * r)
    }
}

/// Piece diameter `2 R lambda sin(2 phi)` and cross-piece separation
/// `2 R sin(phi - arcsin(lambda sin phi))` for a shrink `lambda`.
pub fn margins(r: f64, phi: f64, lambda: f64) -> (f64, f64) {
    let diameter = 2.0 * r * lambda * (2.0 * phi).sin();
    let separation = 2.0 * r * (phi - (lambda * phi.sin()).asin()).sin();
    (diameter, separation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    LargeR,
    SmallR,
}

/// Solved parameters at one radius.
///
/// In the large regime `lambda0` is the critical shrink; in the small regime
/// it is the caller-tuned `1/(2R sin 2phi + eps)` and `x` the matching base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusParams {
    #[serde(rename = "R")]
    pub radius: f64,
    pub phi: f64,
    pub lambda0: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub x: f64,
    pub regime: Regime,
    pub eps: Option<f64>,
    pub diameter_bound: f64,
    pub separation_bound: f64,
}

impl RadiusParams {
    pub fn large(r: f64) -> Result<Self> {
        let phi = solve_phi(r)?;
        let lambda0 = lambda0(r)?;
        let (diameter_bound, separation_bound) = margins(r, phi, lambda0);
        Ok(RadiusParams {
            radius: r,
            phi,
            lambda0,
            alpha: (lambda0 * phi.sin()).asin(),
            gamma: (lambda0 * (2.0 * phi).sin()).asin(),
            x: 1.0 / lambda0,
            regime: Regime::LargeR,
            eps: None,
            diameter_bound,
            separation_bound,
        })
    }

    /// Whether every pair in one piece is closer than 1 and every cross-piece
    /// pair farther than 1.
    pub fn avoids_unit_distance(&self) -> bool {
        self.diameter_bound < 1.0 && self.separation_bound > 1.0
    }

    /// `(D, S)` for an arbitrary shrink at this radius and angle.
    pub fn margins_for(&self, lambda: f64) -> (f64, f64) {
        margins(self.radius, self.phi, lambda)
    }
}

/// Parameters for `1/2 < R <= sqrt(5)/2` with a free angle and slack.
///
/// The piece diameter is strictly below 1 by construction. The separation
/// bound is reported as computed; it falls below 1 throughout this regime
/// (e.g. 0.815 at `R = 1`), which [`RadiusParams::avoids_unit_distance`]
/// exposes and the forbidden-set certificate rejects.
pub fn small_r_params(r: f64, phi: f64, eps: f64) -> Result<RadiusParams> {
    if !(r > 0.5 && r <= SQRT5_HALF) {
        return Err(ChromaError::domain(format!("small-radius regime needs 1/2 < R <= sqrt(5)/2, got {r}")));
    }
    if !(phi > 0.0 && phi < FRAC_PI_4) {
        return Err(ChromaError::domain(format!("phi = {phi} outside (0, pi/4)")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ChromaError::domain(format!("eps = {eps} must be positive")));
    }
    let base = 2.0 * r * (2.0 * phi).sin() + eps;
    let lambda = 1.0 / base;
    let (diameter_bound, separation_bound) = margins(r, phi, lambda);
    Ok(RadiusParams {
        radius: r,
        phi,
        lambda0: lambda,
        alpha: (lambda * phi.sin()).asin(),
        gamma: (lambda * (2.0 * phi).sin()).asin(),
        x: base,
        regime: Regime::SmallR,
        eps: Some(eps),
        diameter_bound,
        separation_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemResiduals {
    /// `|2 R lambda0 sin 2phi - 1|`
    pub diameter: f64,
    /// `|sin alpha - lambda0 sin phi|`
    pub alpha: f64,
    /// `|2 R sin(phi - alpha) - 1|`
    pub separation: f64,
}

impl SystemResiduals {
    pub fn max(&self) -> f64 {
        self.diameter.max(self.alpha).max(self.separation)
    }
}

pub fn verify_system(p: &RadiusParams) -> SystemResiduals {
    let r = p.radius;
    SystemResiduals {
        diameter: (2.0 * r * p.lambda0 * (2.0 * p.phi).sin() - 1.0).abs(),
        alpha: (p.alpha.sin() - p.lambda0 * p.phi.sin()).abs(),
        separation: (2.0 * r * (p.phi - p.alpha).sin() - 1.0).abs(),
    }
}

/// How a shell's sphere is colored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShellMode {
    /// Rotated copies of the shrunken-cell set with the shell's `(phi, lambda)`.
    Pieces,
    /// One color per Voronoi cell of a packing with angle `cell_phi`, chosen
    /// so that cells have diameter `1 - delta`.
    Cells { cell_phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellParams {
    pub r: f64,
    pub eps: f64,
    pub r_star: f64,
    pub phi_r: f64,
    pub lambda_r: f64,
    /// `min{1 - 2 r lambda sin 2phi, 2 r sin(phi - arcsin(lambda sin phi)) - 1}`.
    pub delta_formula: f64,
    /// Half-width of the forbidden distance window actually guaranteed.
    pub delta_r: f64,
    pub mode: ShellMode,
}

/// Solves `g(r*) = 1/2 + eps` on `(sqrt(5)/2, 1e9)` by bisection.
pub fn r_star(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(ChromaError::param(format!(
            "eps = {eps} leaves no r* in (sqrt(5)/2, inf); need 0 < eps < 1/2"
        )));
    }
    let target = 0.5 + eps;
    let g = |r: f64| cos_sq_phi(r).expect("bracket lies in r >= 1");
    let (mut lo, mut hi) = (SQRT5_HALF, R_STAR_BRACKET_HI);
    // g increases on the bracket; check on a log grid before trusting bisection.
    let mut prev = g(lo);
    for k in 1..=64 {
        let r = lo * (hi / lo).powf(k as f64 / 64.0);
        let v = g(r);
        if v < prev - 1e-15 {
            return Err(ChromaError::State(format!("g is not increasing near r = {r}")));
        }
        prev = v;
    }
    if g(hi) <= target {
        return Err(ChromaError::param(format!("eps = {eps} too close to 1/2: r* beyond 1e9")));
    }
    while hi - lo > 1e-12 * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shell schedule for a fixed `eps`.
///
/// Above `r*` the shell uses the shrunken-cell construction with the
/// continuous `phi(r)` and `lambda(r) = 1/(x(r) + eps)`. At and below `r*`
/// the clamped parameters stop separating pieces (the separation term turns
/// negative just under `r*`), so those shells use a cell coloring with the
/// window `delta(r*)`, which keeps `delta` continuous and bounded below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSchedule {
    pub eps: f64,
    pub r_star: f64,
    pub cell_margin: f64,
}

impl ShellSchedule {
    pub fn new(eps: f64) -> Result<Self> {
        let r_star = r_star(eps)?;
        let mut s = ShellSchedule { eps, r_star, cell_margin: 0.0 };
        let (_, _, d) = s.formula(r_star);
        if !(d > 0.0) {
            return Err(ChromaError::State(format!("delta(r*) = {d} is not positive")));
        }
        s.cell_margin = d;
        Ok(s)
    }

    /// `(phi(r), lambda(r), delta formula)` exactly as defined for all `r >= 1/2`.
    pub fn formula(&self, r: f64) -> (f64, f64, f64) {
        let g = cos_sq_phi(r.max(self.r_star)).expect("r* > 1");
        let phi = g.sqrt().acos();
        let lambda = 1.0 / ((1.0 + 8.0 * g).sqrt() + self.eps);
        let (diameter, separation) = margins(r, phi, lambda);
        (phi, lambda, (1.0 - diameter).min(separation - 1.0))
    }

    pub fn at(&self, r: f64) -> Result<ShellParams> {
        if !(r >= 0.5 && r.is_finite()) {
            return Err(ChromaError::domain(format!("shell radius {r} below 1/2")));
        }
        let (phi_r, lambda_r, delta_formula) = self.formula(r);
        let (mode, delta_r) = if r > self.r_star {
            (ShellMode::Pieces, delta_formula)
        } else {
            let cell_phi = 0.5 * ((1.0 - self.cell_margin) / (2.0 * r)).asin();
            (ShellMode::Cells { cell_phi }, self.cell_margin)
        };
        Ok(ShellParams {
            r,
            eps: self.eps,
            r_star: self.r_star,
            phi_r,
            lambda_r,
            delta_formula,
            delta_r,
            mode,
        })
    }

    /// `R_1 = R`, `R_{k+1} = R_k - delta(R_k)/2`, ending with the first term below 1/2.
    pub fn radii(&self, radius: f64) -> Result<Vec<f64>> {
        if !(radius > 0.5 && radius.is_finite()) {
            return Err(ChromaError::domain(format!("ball radius {radius} must exceed 1/2")));
        }
        const MAX_SHELLS: usize = 10_000_000;
        let mut radii = vec![radius];
        let mut r = radius;
        while r >= 0.5 {
            let delta = self.at(r)?.delta_r;
            r -= 0.5 * delta;
            radii.push(r);
            if radii.len() > MAX_SHELLS {
                return Err(ChromaError::State("shell recursion did not terminate".into()));
            }
        }
        Ok(radii)
    }
}

pub fn shell_functions(r: f64, eps: f64) -> Result<ShellParams> {
    ShellSchedule::new(eps)?.at(r)
}

pub fn shell_radii(radius: f64, eps: f64) -> Result<Vec<f64>> {
    ShellSchedule::new(eps)?.radii(radius)
}

/// Both terms of the `delta` formula with `lambda` replaced by `lambda0(r)`;
/// they vanish when the parameter system is consistent.
pub fn critical_delta_terms(r: f64) -> Result<(f64, f64)> {
    let phi = solve_phi(r)?;
    let lambda = lambda0(r)?;
    let (d, s) = margins(r, phi, lambda);
    Ok((1.0 - d, s - 1.0))
}
