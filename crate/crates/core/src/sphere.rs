//! Geometry of the sphere of radius `R` in `R^{n+1}`: points, distances, caps,
//! normalized cap measure, and uniform sampling of points and rotations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ChromaError, Result};
use crate::quadrature;
use crate::rng::{self, tag};

/// Relative tolerance for a vector to count as lying on the sphere.
pub const ON_SPHERE_TOL: f64 = 1e-12;

/// Entrywise tolerance on `M^T M = I` for rotations.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

const CAP_MEASURE_REL_TOL: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Angle between two non-zero vectors, accurate near 0 and near pi.
#[inline]
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// `S^n_R`: the sphere of radius `R` in `(n+1)`-dimensional space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
}

impl SphereSpec {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        if n < 2 {
            return Err(ChromaError::domain(format!("sphere dimension n = {n} must be >= 2")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ChromaError::domain(format!("radius {radius} must be positive")));
        }
        Ok(SphereSpec { n, radius })
    }

    /// Ambient dimension `n + 1`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// Wraps coordinates as a point, renormalizing within [`ON_SPHERE_TOL`].
    pub fn point(&self, coords: Vec<f64>) -> Result<SpherePoint> {
        self.check_dim(&coords)?;
        let r = norm(&coords);
        if ((r - self.radius) / self.radius).abs() > ON_SPHERE_TOL {
            return Err(ChromaError::InvalidPoint { norm: r, radius: self.radius });
        }
        let scale = self.radius / r;
        Ok(SpherePoint(coords.into_iter().map(|c| c * scale).collect()))
    }

    /// Projects an arbitrary non-zero vector radially onto the sphere.
    pub fn project(&self, coords: &[f64]) -> Result<SpherePoint> {
        self.check_dim(coords)?;
        let r = norm(coords);
        if !(r > 0.0) {
            return Err(ChromaError::domain("cannot project the zero vector"));
        }
        Ok(SpherePoint(coords.iter().map(|c| c * self.radius / r).collect()))
    }

    /// The point `R e_axis`.
    pub fn pole(&self, axis: usize) -> SpherePoint {
        let mut v = vec![0.0; self.dim()];
        v[axis] = self.radius;
        SpherePoint(v)
    }

    pub fn cap_measure(&self, phi: f64) -> Result<f64> {
        cap_measure(self.n, phi)
    }

    fn check_dim(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.dim() {
            return Err(ChromaError::Dimension { expected: self.dim(), got: coords.len() });
        }
        Ok(())
    }

    fn check_point(&self, p: &SpherePoint) -> Result<()> {
        self.check_dim(&p.0)?;
        let r = norm(&p.0);
        if ((r - self.radius) / self.radius).abs() > ON_SPHERE_TOL {
            return Err(ChromaError::InvalidPoint { norm: r, radius: self.radius });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Caller guarantees the coordinates lie on the intended sphere.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        SpherePoint(coords)
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Vec<f64> {
        self.0.iter().map(|c| c * factor).collect()
    }

    pub fn neg(&self) -> SpherePoint {
        SpherePoint(self.0.iter().map(|c| -c).collect())
    }
}

/// Closed cap `C(center, angular_radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: SpherePoint,
    pub angular_radius: f64,
}

impl Cap {
    pub fn new(center: SpherePoint, angular_radius: f64) -> Result<Self> {
        if !(angular_radius > 0.0 && angular_radius <= PI) {
            return Err(ChromaError::domain(format!(
                "cap radius {angular_radius} outside (0, pi]"
            )));
        }
        Ok(Cap { center, angular_radius })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        angle_between(self.center.coords(), p) <= self.angular_radius
    }

    /// Euclidean diameter `2 R sin(phi)` for caps up to a hemisphere, `2R` beyond.
    pub fn chord_diameter(&self, spec: &SphereSpec) -> f64 {
        2.0 * spec.radius * self.angular_radius.min(PI / 2.0).sin()
    }
}

pub fn angular_distance(spec: &SphereSpec, p: &SpherePoint, q: &SpherePoint) -> Result<f64> {
    spec.check_point(p)?;
    spec.check_point(q)?;
    Ok(angle_between(p.coords(), q.coords()))
}

pub fn chord_distance(spec: &SphereSpec, p: &SpherePoint, q: &SpherePoint) -> Result<f64> {
    let theta = angular_distance(spec, p, q)?;
    Ok(chord_from_angle(spec.radius, theta))
}

#[inline]
pub fn chord_from_angle(radius: f64, theta: f64) -> f64 {
    2.0 * radius * (0.5 * theta).sin()
}

/// Angle subtending a chord of the given length; chords longer than the
/// diameter map to pi.
#[inline]
pub fn angle_from_chord(radius: f64, chord: f64) -> f64 {
    2.0 * (0.5 * chord / radius).min(1.0).asin()
}

/// Normalized measure `Theta(phi)` of a cap of angular radius `phi` on `S^n`.
pub fn cap_measure(n: usize, phi: f64) -> Result<f64> {
    if n < 1 {
        return Err(ChromaError::domain("cap measure needs n >= 1"));
    }
    if !(phi > 0.0 && phi <= PI) {
        return Err(ChromaError::domain(format!("cap radius {phi} outside (0, pi]")));
    }
    let k = (n - 1) as i32;
    let f = move |t: f64| t.sin().powi(k);
    let whole = quadrature::integrate(f, 0.0, PI, CAP_MEASURE_REL_TOL);
    if phi == PI {
        return Ok(1.0);
    }
    let part = quadrature::integrate(f, 0.0, phi, CAP_MEASURE_REL_TOL);
    Ok((part / whole).clamp(0.0, 1.0))
}

/// Uniform point from an isotropic Gaussian, rescaled to radius `R`.
pub fn random_point_with<R: Rng + ?Sized>(spec: &SphereSpec, rng: &mut R) -> SpherePoint {
    let mut v = vec![0.0; spec.dim()];
    fill_random_point(spec, rng, &mut v);
    SpherePoint(v)
}

/// Allocation-free variant of [`random_point_with`].
pub fn fill_random_point<R: Rng + ?Sized>(spec: &SphereSpec, rng: &mut R, out: &mut [f64]) {
    loop {
        for c in out.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        let r = norm(out);
        if r > 1e-300 {
            let s = spec.radius / r;
            out.iter_mut().for_each(|c| *c *= s);
            return;
        }
    }
}

pub fn random_point(spec: &SphereSpec, seed: u64) -> SpherePoint {
    random_point_with(spec, &mut rng::stream(seed, tag::POINT, 0))
}

/// Uniform point in the cap `C(center, theta_max)` with `theta_max <= pi/2`.
///
/// The polar angle has density proportional to `sin^{n-1}`; it is drawn by
/// rejection against the uniform density on `[0, theta_max]`.
pub fn fill_random_in_cap<R: Rng + ?Sized>(
    spec: &SphereSpec,
    center: &[f64],
    theta_max: f64,
    rng: &mut R,
    out: &mut [f64],
) {
    debug_assert!(theta_max > 0.0 && theta_max <= PI / 2.0 + 1e-12);
    let k = (spec.n - 1) as i32;
    let smax = theta_max.sin();
    let theta = loop {
        let t: f64 = rng.random::<f64>() * theta_max;
        let u: f64 = rng.random();
        if u <= (t.sin() / smax).powi(k) {
            break t;
        }
    };
    let r = spec.radius;
    let pole: Vec<f64> = center.iter().map(|c| c / r).collect();
    // Uniform tangent direction.
    loop {
        for c in out.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        let h = dot(out, &pole);
        out.iter_mut().zip(&pole).for_each(|(c, p)| *c -= h * p);
        let t = norm(out);
        if t > 1e-12 {
            let (s, c) = theta.sin_cos();
            for (o, p) in out.iter_mut().zip(&pole) {
                *o = r * (c * p + s * *o / t);
            }
            return;
        }
    }
}

/// Orientation-preserving orthogonal matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    dim: usize,
    #[serde(rename = "matrix")]
    entries: Vec<f64>,
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Rotation { dim, entries }
    }

    /// Validates orthogonality and positive determinant.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(ChromaError::Dimension { expected: dim * dim, got: entries.len() });
        }
        let rot = Rotation { dim, entries };
        if rot.orthogonality_error() > ORTHOGONALITY_TOL || rot.determinant() <= 0.0 {
            return Err(ChromaError::domain("matrix is not a rotation"));
        }
        Ok(rot)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_major(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.entries[i * self.dim..(i + 1) * self.dim], v);
        }
    }

    /// `M^T v`, the inverse rotation.
    #[inline]
    pub fn apply_inverse_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            let row = &self.entries[i * self.dim..(i + 1) * self.dim];
            for (o, m) in out.iter_mut().zip(row) {
                *o += m * vi;
            }
        }
    }

    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        let mut out = vec![0.0; self.dim];
        self.apply_into(p.coords(), &mut out);
        SpherePoint(out)
    }

    pub fn apply_inverse(&self, p: &SpherePoint) -> SpherePoint {
        let mut out = vec![0.0; self.dim];
        self.apply_inverse_into(p.coords(), &mut out);
        SpherePoint(out)
    }

    /// Maximum entrywise deviation of `M^T M` from the identity.
    pub fn orthogonality_error(&self) -> f64 {
        let m = self.matrix();
        let g = m.transpose() * &m;
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }
}

/// Haar-distributed rotation of `R^dim`.
///
/// QR of a Gaussian matrix with the diagonal of `R` made positive gives a
/// Haar-distributed orthogonal `Q`; flipping the first column of a
/// reflection maps the other coset onto `SO(dim)` measure-preservingly.
pub fn random_rotation_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Rotation {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    let mut entries = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            entries.push(q[(i, j)]);
        }
    }
    Rotation { dim, entries }
}

pub fn random_rotation(spec: &SphereSpec, seed: u64) -> Rotation {
    random_rotation_with(spec.dim(), &mut rng::stream(seed, tag::ROTATION, 0))
}
