//! Colorings of the ball `B^{n+1}_R` by nested shells.
//!
//! Shell `j` is `R_{j+1} < |p| <= R_j`. Its points take the color of their
//! radial projection onto `S^n_{R_j}`, offset so that shells never share
//! colors. The projection moves a point by less than `delta(R_j)/2`, and the
//! sphere coloring of `S^n_{R_j}` has no monochromatic pair at any distance
//! in `(1 - delta, 1 + delta)`. The inner ball of radius below `1/2` gets
//! one reserved color.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{color_sphere_with, Construction, CoverFile, SphereColoring, SphereConfig, SphereReport};
use crate::error::{ChromaError, Result};
use crate::forbidden::PackingConfig;
use crate::params::{ShellMode, ShellParams, ShellSchedule};
use crate::rng::{self, derive_seed, tag};
use crate::sphere::{norm, SphereSpec};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellPlan {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub eps: f64,
    /// `R_1 = R > R_2 > ... > R_k`, with only the last entry below 1/2.
    pub radii: Vec<f64>,
    /// Parameters of shell `j`, evaluated at its outer radius `R_j`.
    pub shells: Vec<ShellParams>,
    pub inner_radius: f64,
}

impl ShellPlan {
    pub fn shell_count(&self) -> usize {
        self.shells.len()
    }

    /// Shell containing a point at distance `rho` from the origin, or `None`
    /// for the inner ball. Outer boundaries belong to the shell.
    pub fn shell_of(&self, rho: f64) -> Option<usize> {
        let above = self.radii.partition_point(|&r| r >= rho);
        (above > 0 && above < self.radii.len()).then(|| above - 1)
    }
}

pub fn plan_shells(n: usize, radius: f64, eps: f64) -> Result<ShellPlan> {
    SphereSpec::new(n, radius)?;
    let schedule = ShellSchedule::new(eps)?;
    let radii = schedule.radii(radius)?;
    let shells = radii[..radii.len() - 1]
        .iter()
        .map(|&r| schedule.at(r))
        .collect::<Result<Vec<_>>>()?;
    let inner_radius = *radii.last().expect("radii are nonempty");
    Ok(ShellPlan { n, radius, eps, radii, shells, inner_radius })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallConfig {
    pub eps: f64,
    /// Settings for every shell's sphere coloring; its seed is ignored in
    /// favor of one derived from `seed` and the shell index.
    pub sphere: SphereConfig,
    pub seed: u64,
}

impl Default for BallConfig {
    fn default() -> Self {
        let light = PackingConfig { max_rejections: 300, probes: 20_000, max_rounds: 40 };
        BallConfig {
            eps: 0.01,
            sphere: SphereConfig { packing: light, net: light, ..SphereConfig::default() },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BallColoring {
    pub plan: ShellPlan,
    pub shells: Vec<SphereColoring>,
    /// First color of each shell.
    pub color_bases: Vec<usize>,
    pub reserved_color: usize,
    pub shell_reports: Vec<SphereReport>,
    pub shell_files: Vec<CoverFile>,
}

fn shell_construction(shell: &ShellParams) -> Construction {
    match shell.mode {
        ShellMode::Pieces => Construction::Pieces { phi: shell.phi_r, lambda: shell.lambda_r },
        ShellMode::Cells { cell_phi } => Construction::Cells { phi: cell_phi },
    }
}

pub fn color_ball(n: usize, radius: f64, config: &BallConfig) -> Result<BallColoring> {
    let plan = plan_shells(n, radius, config.eps)?;
    let built = plan
        .shells
        .par_iter()
        .enumerate()
        .map(|(j, shell)| {
            let spec = SphereSpec::new(n, shell.r)?;
            let sphere = SphereConfig { seed: derive_seed(config.seed, j as u64), ..config.sphere };
            color_sphere_with(&spec, shell_construction(shell), &sphere)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut color_bases = Vec::with_capacity(built.len());
    let mut next = 0;
    let (mut shells, mut shell_reports, mut shell_files) = (Vec::new(), Vec::new(), Vec::new());
    for b in built {
        color_bases.push(next);
        next += b.coloring.color_count();
        shells.push(b.coloring);
        shell_reports.push(b.report);
        shell_files.push(b.file);
    }
    Ok(BallColoring { plan, shells, color_bases, reserved_color: next, shell_reports, shell_files })
}

impl BallColoring {
    /// Per-shell counts plus the reserved color.
    pub fn total_colors(&self) -> usize {
        self.shells.iter().map(SphereColoring::color_count).sum::<usize>() + 1
    }

    /// Color of `p`, or `None` if its projection is left uncovered.
    pub(crate) fn color_raw(&self, p: &[f64], buf: &mut [f64], proj: &mut [f64], scratch: &mut [f64]) -> Option<usize> {
        let rho = norm(p);
        let j = match self.plan.shell_of(rho) {
            Some(j) => j,
            None => return Some(self.reserved_color),
        };
        let scale = self.plan.radii[j] / rho;
        proj.iter_mut().zip(p).for_each(|(o, x)| *o = x * scale);
        self.shells[j].color_raw(proj, buf, scratch).map(|c| c + self.color_bases[j])
    }

    pub fn color_ball_point(&self, p: &[f64]) -> Result<usize> {
        let dim = self.plan.n + 1;
        if p.len() != dim {
            return Err(ChromaError::Dimension { expected: dim, got: p.len() });
        }
        let rho = norm(p);
        if !(rho <= self.plan.radius) {
            return Err(ChromaError::domain(format!("|p| = {rho} exceeds the ball radius {}", self.plan.radius)));
        }
        let (mut buf, mut proj, mut scratch) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        self.color_raw(p, &mut buf, &mut proj, &mut scratch)
            .ok_or_else(|| ChromaError::State(format!("point at radius {rho} is not covered by its shell coloring")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallCertificate {
    /// Pairs from a uniform point of the ball and a uniform direction.
    pub uniform_pairs: usize,
    /// Pairs with both endpoints in one randomly chosen shell.
    pub same_shell_pairs: usize,
    pub monochromatic: usize,
    pub uncolored: usize,
    /// Every shell is thinner than its forbidden window: `delta/2 < delta`.
    pub thickness_ok: bool,
    pub min_delta: f64,
    pub passed: bool,
}

fn fill_unit<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        out.iter_mut().for_each(|c| *c = rng.sample(StandardNormal));
        let t = norm(out);
        if t > 1e-12 {
            out.iter_mut().for_each(|c| *c /= t);
            return;
        }
    }
}

/// Unit vector at angle `theta` from the unit vector `u`.
fn fill_unit_at_angle<R: Rng + ?Sized>(u: &[f64], theta: f64, rng: &mut R, out: &mut [f64]) {
    loop {
        fill_unit(rng, out);
        let h: f64 = out.iter().zip(u).map(|(a, b)| a * b).sum();
        out.iter_mut().zip(u).for_each(|(o, ui)| *o -= h * ui);
        let t = norm(out);
        if t > 1e-9 {
            let (s, c) = theta.sin_cos();
            out.iter_mut().zip(u).for_each(|(o, ui)| *o = c * ui + s * *o / t);
            return;
        }
    }
}

/// Samples pairs at Euclidean distance 1 inside the ball and counts
/// monochromatic or uncolored ones. Half the pairs use a uniform point and
/// direction; the other half put both endpoints in the same shell.
pub fn certify_ball(bc: &BallColoring, pairs: usize, seed: u64) -> BallCertificate {
    let dim = bc.plan.n + 1;
    let radius = bc.plan.radius;
    let shell_count = bc.plan.shell_count();
    let (uniform, same, mono, uncolored) = rng::chunks(pairs, CHUNK)
        .into_par_iter()
        .map(|(chunk, len)| {
            let mut rng = rng::stream(seed, tag::BALL_PAIRS, chunk);
            let (mut p, mut q, mut u, mut v) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
            let (mut buf, mut proj, mut scratch) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
            let mut counts = (0usize, 0usize, 0usize, 0usize);
            for k in 0..len {
                let global = chunk as usize * CHUNK + k;
                if global.is_multiple_of(2) || shell_count == 0 {
                    loop {
                        fill_unit(&mut rng, &mut u);
                        let rho = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                        fill_unit(&mut rng, &mut v);
                        p.iter_mut().zip(&u).for_each(|(o, x)| *o = rho * x);
                        q.iter_mut().zip(&p).zip(&v).for_each(|((o, x), d)| *o = x + d);
                        if norm(&q) <= radius {
                            break;
                        }
                    }
                    counts.0 += 1;
                } else {
                    loop {
                        let j = rng.random_range(0..shell_count);
                        let (hi, lo) = (bc.plan.radii[j], bc.plan.radii[j + 1]);
                        let r1 = hi - (hi - lo) * rng.random::<f64>();
                        let r2 = hi - (hi - lo) * rng.random::<f64>();
                        let c = (r1 * r1 + r2 * r2 - 1.0) / (2.0 * r1 * r2);
                        if !(-1.0..=1.0).contains(&c) {
                            continue;
                        }
                        fill_unit(&mut rng, &mut u);
                        fill_unit_at_angle(&u, c.acos(), &mut rng, &mut v);
                        p.iter_mut().zip(&u).for_each(|(o, x)| *o = r1 * x);
                        q.iter_mut().zip(&v).for_each(|(o, x)| *o = r2 * x);
                        break;
                    }
                    counts.1 += 1;
                }
                let a = bc.color_raw(&p, &mut buf, &mut proj, &mut scratch);
                let b = bc.color_raw(&q, &mut buf, &mut proj, &mut scratch);
                match (a, b) {
                    (Some(a), Some(b)) if a == b => counts.2 += 1,
                    (Some(_), Some(_)) => {}
                    _ => counts.3 += 1,
                }
            }
            counts
        })
        .reduce(|| (0, 0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
    let thickness_ok = bc.plan.radii.windows(2).zip(&bc.plan.shells).all(|(w, s)| w[0] - w[1] < s.delta_r);
    let min_delta = bc.plan.shells.iter().map(|s| s.delta_r).fold(f64::INFINITY, f64::min);
    BallCertificate {
        uniform_pairs: uniform,
        same_shell_pairs: same,
        monochromatic: mono,
        uncolored,
        thickness_ok,
        min_delta,
        passed: mono == 0 && uncolored == 0 && thickness_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BallColoring {
        let config = BallConfig { eps: 0.05, seed: 3, ..BallConfig::default() };
        color_ball(2, 0.51, &config).unwrap()
    }

    #[test]
    fn tiny_plan() {
        let plan = plan_shells(2, 0.51, 0.05).unwrap();
        assert!((1..=2).contains(&plan.shell_count()), "{}", plan.shell_count());
        assert_eq!(plan.radii[0], 0.51);
        assert!(plan.inner_radius < 0.5);
        for (w, s) in plan.radii.windows(2).zip(&plan.shells) {
            assert_eq!(w[0] - s.delta_r / 2.0, w[1]);
        }
    }

    #[test]
    fn shell_lookup_is_outer_closed() {
        let plan = plan_shells(2, 1.3, 0.05).unwrap();
        assert_eq!(plan.shell_of(1.3), Some(0));
        assert_eq!(plan.shell_of(plan.radii[1]), Some(1));
        assert_eq!(plan.shell_of(plan.radii[1] + 1e-12), Some(0));
        assert_eq!(plan.shell_of(plan.inner_radius), None);
        assert_eq!(plan.shell_of(0.0), None);
        for k in 0..2000 {
            let rho = plan.inner_radius + 1e-9 + (1.3 - plan.inner_radius - 1e-9) * k as f64 / 1999.0;
            let j = plan.shell_of(rho).unwrap();
            assert!(plan.radii[j + 1] < rho && rho <= plan.radii[j]);
        }
    }

    #[test]
    fn point_colors() {
        let bc = small();
        assert_eq!(bc.total_colors(), bc.shells.iter().map(|s| s.color_count()).sum::<usize>() + 1);
        assert_eq!(bc.color_ball_point(&[0.0, 0.0, 0.0]).unwrap(), bc.reserved_color);
        let p = [0.51, 0.0, 0.0];
        let on_sphere = bc.shells[0].color(&bc.shells[0].spec().point(p.to_vec()).unwrap()).unwrap().unwrap();
        assert_eq!(bc.color_ball_point(&p).unwrap(), on_sphere);
        let inside = [0.509, 0.0, 0.0];
        assert_eq!(bc.color_ball_point(&inside).unwrap(), on_sphere);
        assert!(bc.color_ball_point(&[0.52, 0.0, 0.0]).is_err());
        assert!(bc.color_ball_point(&[0.1, 0.0]).is_err());
    }

    #[test]
    fn color_ranges_are_disjoint() {
        let bc = small();
        let mut ranges: Vec<(usize, usize)> =
            bc.color_bases.iter().zip(&bc.shells).map(|(&b, s)| (b, b + s.color_count())).collect();
        ranges.push((bc.reserved_color, bc.reserved_color + 1));
        ranges.sort_unstable();
        assert!(ranges.windows(2).all(|w| w[0].1 <= w[1].0));
    }

    #[test]
    fn small_ball_certificate() {
        let cert = certify_ball(&small(), 20_000, 1);
        assert!(cert.passed, "{cert:?}");
        assert!(cert.same_shell_pairs > 0);
    }
}
