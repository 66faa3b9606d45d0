//! Covering the sphere by rotated copies of the forbidden set.
//!
//! A `2 beta`-separated saturated net `W` is covered by sampled rotations of
//! the inner set `Psi''` (shrink `(1 - delta) lambda`). Every sphere point is
//! within `2 beta` of `W`, and that neighborhood of `Psi''` lies inside
//! `Psi'`, so the chosen rotations of `Psi'` cover the whole sphere. Color
//! `i` is the `i`-th chosen copy.

mod bounds;
mod hypergraph;
mod lp;

pub use bounds::{
    bound_pre, bound_pre_base, default_delta, edge_size_bound, inner_gamma, ln_bound_pre, net_angle,
};
pub use hypergraph::Hypergraph;
pub use lp::{fractional_cover_exact, FractionalCover, LP_TOL, MAX_EDGES, MAX_VERTICES};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ChromaError, Result};
use crate::forbidden::{mc_density, CapPacking, DensityEstimate, ForbiddenSet, PackingConfig, SaturationReport};
use crate::params::{lambda0, solve_phi, SQRT5_HALF};
use crate::rng::{self, derive_seed, tag};
use crate::sphere::{
    chord_from_angle, dot, fill_random_point, norm, random_rotation_with, Rotation, SpherePoint, SphereSpec,
};

const CHUNK: usize = 8192;

/// Saturated set with pairwise angular separation above `2 beta`.
#[derive(Debug, Clone)]
pub struct Net(CapPacking);

impl Net {
    pub fn build(spec: &SphereSpec, beta: f64, config: &PackingConfig, seed: u64) -> Result<Self> {
        Ok(Net(CapPacking::build_tagged(spec, beta, config, seed, (tag::NET, tag::NET_PROBE))?))
    }

    pub fn beta(&self) -> f64 {
        self.0.phi()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.0.center(i)
    }

    pub fn saturation(&self) -> SaturationReport {
        self.0.saturation
    }

    pub fn min_separation(&self) -> f64 {
        self.0.min_separation()
    }

    pub fn as_packing(&self) -> &CapPacking {
        &self.0
    }
}

/// Net, inner and outer forbidden sets, and sampled rotations with their
/// edges `{w in W : A^-1 w in Psi''}`.
#[derive(Debug, Clone)]
pub struct CoverInstance {
    pub net: Net,
    pub fs_outer: ForbiddenSet,
    pub fs_inner: ForbiddenSet,
    pub delta: f64,
    pub beta: f64,
    pub rotations: Vec<Rotation>,
    pub edges: Vec<Vec<u32>>,
    seed: u64,
    include_identity: bool,
}

impl CoverInstance {
    /// Builds `Psi''` and the net; no rotations yet.
    pub fn new(fs_outer: ForbiddenSet, delta: f64, net_config: &PackingConfig, seed: u64, include_identity: bool) -> Result<Self> {
        let spec = *fs_outer.spec();
        let beta = net_angle(fs_outer.phi(), fs_outer.lambda, delta)?;
        let fs_inner = fs_outer.with_lambda((1.0 - delta) * fs_outer.lambda)?;
        let net = Net::build(&spec, beta, net_config, seed)?;
        Ok(CoverInstance {
            net,
            fs_outer,
            fs_inner,
            delta,
            beta,
            rotations: Vec::new(),
            edges: Vec::new(),
            seed,
            include_identity,
        })
    }

    fn rotation(&self, k: usize) -> Rotation {
        let dim = self.fs_outer.spec().dim();
        if k == 0 && self.include_identity {
            Rotation::identity(dim)
        } else {
            random_rotation_with(dim, &mut rng::stream(self.seed, tag::COVER_ROTATION, k as u64))
        }
    }

    /// Net points in `A Psi''`, ascending.
    pub fn edge_for(&self, rot: &Rotation) -> Vec<u32> {
        let spec = self.fs_inner.spec();
        let dim = spec.dim();
        let packing = &self.fs_inner.packing;
        let reach = chord_from_angle(spec.radius, self.fs_inner.gamma) * (1.0 + 1e-9);
        let (mut c, mut u, mut scratch) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        let mut out = Vec::new();
        for i in 0..packing.len() {
            rot.apply_into(packing.center(i), &mut c);
            self.net.as_packing().index().for_each_within(&c, reach, |j, _| {
                rot.apply_inverse_into(self.net.point(j), &mut u);
                if self.fs_inner.in_piece(i, &u, &mut scratch) {
                    out.push(j as u32);
                }
                true
            });
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Extends the candidate family to `m` rotations. Rotation `k` depends
    /// only on the seed and `k`, so growing `m` keeps earlier candidates.
    pub fn sample_edges(&mut self, m: usize) {
        let start = self.rotations.len();
        if m <= start {
            return;
        }
        let fresh: Vec<(Rotation, Vec<u32>)> = (start..m)
            .into_par_iter()
            .map(|k| {
                let rot = self.rotation(k);
                let edge = self.edge_for(&rot);
                (rot, edge)
            })
            .collect();
        for (rot, edge) in fresh {
            self.rotations.push(rot);
            self.edges.push(edge);
        }
    }

    pub fn hypergraph(&self) -> Hypergraph {
        Hypergraph {
            vertices: self.net.len(),
            edges: self.edges.iter().map(|e| e.iter().map(|&v| v as usize).collect()).collect(),
        }
    }

    pub fn max_edge(&self) -> usize {
        self.edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_size_bound(&self) -> Result<f64> {
        let n = self.fs_outer.spec().n;
        edge_size_bound(self.fs_outer.phi(), self.fs_outer.lambda, n, self.delta)
    }

    /// Greedy cover of the net by the sampled edges.
    pub fn greedy_cover(&self) -> Result<CoverResult> {
        let chosen = self.hypergraph().greedy_cover()?;
        Ok(CoverResult { cover_size: chosen.len(), chosen, verified_net: true, verified_sphere_samples: 0, violations: 0 })
    }

    /// Rotations selected by `result`, in color order.
    pub fn chosen_rotations(&self, result: &CoverResult) -> Vec<Rotation> {
        result.chosen.iter().map(|&i| self.rotations[i].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverResult {
    /// Rotation indices in selection order; color `i` is `chosen[i]`.
    pub chosen: Vec<usize>,
    pub cover_size: usize,
    pub verified_net: bool,
    pub verified_sphere_samples: usize,
    pub violations: usize,
}

/// Samples uniform sphere points and counts those outside every chosen
/// copy `A Psi'`. Refused unless the net cover was verified.
pub fn transfer_cover(
    result: &CoverResult,
    fs_outer: &ForbiddenSet,
    chosen: &[Rotation],
    samples: usize,
    seed: u64,
) -> Result<CoverResult> {
    if !result.verified_net || chosen.is_empty() {
        return Err(ChromaError::State("transfer refused: the net cover is not verified".into()));
    }
    let spec = *fs_outer.spec();
    let dim = spec.dim();
    let violations: usize = rng::chunks(samples, CHUNK)
        .into_par_iter()
        .map(|(chunk, len)| {
            let mut rng = rng::stream(seed, tag::TRANSFER, chunk);
            let (mut p, mut u, mut scratch) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
            (0..len)
                .filter(|_| {
                    fill_random_point(&spec, &mut rng, &mut p);
                    !chosen.iter().any(|rot| {
                        rot.apply_inverse_into(&p, &mut u);
                        fs_outer.piece_of(&u, &mut scratch).is_some()
                    })
                })
                .count()
        })
        .sum();
    Ok(CoverResult { verified_sphere_samples: samples, violations, ..result.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaarReport {
    pub rotations: usize,
    pub hits: usize,
    pub fraction: f64,
    pub fraction_std_error: f64,
    pub density: DensityEstimate,
    /// `|fraction - density| / sqrt(se_1^2 + se_2^2)`.
    pub z: f64,
    pub passed: bool,
}

/// Fraction of Haar rotations `A` with `A w in fs`, compared against the
/// Monte Carlo density of `fs`.
pub fn haar_check(fs: &ForbiddenSet, w: &SpherePoint, m: usize, seed: u64) -> HaarReport {
    let dim = fs.spec().dim();
    let hits: usize = rng::chunks(m, CHUNK)
        .into_par_iter()
        .map(|(chunk, len)| {
            let mut rng = rng::stream(seed, tag::HAAR, chunk);
            let (mut u, mut scratch) = (vec![0.0; dim], vec![0.0; dim]);
            (0..len)
                .filter(|_| {
                    let rot = random_rotation_with(dim, &mut rng);
                    rot.apply_into(w.coords(), &mut u);
                    fs.piece_of(&u, &mut scratch).is_some()
                })
                .count()
        })
        .sum();
    let frac = DensityEstimate::from_counts(m, hits);
    let density = mc_density(fs, m, derive_seed(seed, 1));
    let se = frac.std_error.hypot(density.std_error);
    let diff = (frac.estimate - density.estimate).abs();
    let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
    HaarReport {
        rotations: m,
        hits,
        fraction: frac.estimate,
        fraction_std_error: frac.std_error,
        density,
        z,
        passed: z <= 3.0,
    }
}

/// How a sphere is colored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    /// Rotated copies of the shrunken-cell set.
    Pieces { phi: f64, lambda: f64 },
    /// One color per Voronoi cell of a packing with angle `phi`.
    Cells { phi: f64 },
}

/// A coloring of one sphere. `color` returns `None` only for points the
/// chosen copies fail to cover.
#[derive(Debug, Clone)]
pub enum SphereColoring {
    Pieces { fs: ForbiddenSet, rotations: Vec<Rotation> },
    Cells { packing: CapPacking },
}

impl SphereColoring {
    pub fn spec(&self) -> &SphereSpec {
        match self {
            SphereColoring::Pieces { fs, .. } => fs.spec(),
            SphereColoring::Cells { packing } => packing.spec(),
        }
    }

    pub fn color_count(&self) -> usize {
        match self {
            SphereColoring::Pieces { rotations, .. } => rotations.len(),
            SphereColoring::Cells { packing } => packing.len(),
        }
    }

    /// Color of a point given in raw coordinates on this sphere. `buf` and
    /// `scratch` have ambient length.
    pub fn color_raw(&self, p: &[f64], buf: &mut [f64], scratch: &mut [f64]) -> Option<usize> {
        match self {
            SphereColoring::Pieces { fs, rotations } => rotations.iter().position(|rot| {
                rot.apply_inverse_into(p, buf);
                fs.piece_of(buf, scratch).is_some()
            }),
            SphereColoring::Cells { packing } => Some(packing.nearest_raw(p)),
        }
    }

    pub fn color(&self, p: &SpherePoint) -> Result<Option<usize>> {
        let dim = self.spec().dim();
        if p.coords().len() != dim {
            return Err(ChromaError::Dimension { expected: dim, got: p.coords().len() });
        }
        let (mut buf, mut scratch) = (vec![0.0; dim], vec![0.0; dim]);
        Ok(self.color_raw(p.coords(), &mut buf, &mut scratch))
    }

    /// Serializable form; `candidates` is the number of sampled rotations
    /// and `chosen` their selected indices.
    pub fn to_file(&self, candidates: usize, chosen: &[usize]) -> CoverFile {
        let spec = *self.spec();
        match self {
            SphereColoring::Pieces { fs, rotations } => CoverFile {
                n: spec.n,
                radius: spec.radius,
                construction: Construction::Pieces { phi: fs.phi(), lambda: fs.lambda },
                centers: fs.packing.centers().map(<[f64]>::to_vec).collect(),
                candidate_count: candidates,
                chosen: chosen.to_vec(),
                rotations: rotations.iter().map(|r| r.row_major().to_vec()).collect(),
            },
            SphereColoring::Cells { packing } => CoverFile {
                n: spec.n,
                radius: spec.radius,
                construction: Construction::Cells { phi: packing.phi() },
                centers: packing.centers().map(<[f64]>::to_vec).collect(),
                candidate_count: 0,
                chosen: Vec::new(),
                rotations: Vec::new(),
            },
        }
    }
}

/// On-disk sphere coloring (`cover.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverFile {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub construction: Construction,
    pub centers: Vec<Vec<f64>>,
    pub candidate_count: usize,
    pub chosen: Vec<usize>,
    /// Chosen rotations in color order, row-major.
    pub rotations: Vec<Vec<f64>>,
}

impl CoverFile {
    pub fn into_coloring(self) -> Result<SphereColoring> {
        let spec = SphereSpec::new(self.n, self.radius)?;
        let dim = spec.dim();
        match self.construction {
            Construction::Pieces { phi, lambda } => {
                let packing = CapPacking::from_centers(&spec, phi, self.centers)?;
                let fs = ForbiddenSet::new(packing, lambda)?;
                let rotations = self
                    .rotations
                    .into_iter()
                    .map(|m| Rotation::from_row_major(dim, m))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SphereColoring::Pieces { fs, rotations })
            }
            Construction::Cells { phi } => {
                Ok(SphereColoring::Cells { packing: CapPacking::from_centers(&spec, phi, self.centers)? })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereConfig {
    /// Shrink as a fraction of the critical coefficient.
    pub lambda_fraction: f64,
    /// Inner shrink fraction; `None` uses `1/(2 n ln n)`.
    pub delta: Option<f64>,
    /// Initial number of sampled rotations; doubled until the net is covered.
    pub rotations: usize,
    pub max_rotations: usize,
    pub include_identity: bool,
    pub packing: PackingConfig,
    pub net: PackingConfig,
    /// Window `eta` of the cell coloring below `sqrt(5)/2`: cells have diameter `1 - eta`.
    pub cell_margin: f64,
    /// Uniform points for the transfer check (0 skips it).
    pub transfer_samples: usize,
    /// Samples for the density of `Psi''` behind the fractional-cover proxy (0 skips it).
    pub density_samples: usize,
    pub seed: u64,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig {
            lambda_fraction: 0.95,
            delta: None,
            rotations: 256,
            max_rotations: 1 << 14,
            include_identity: true,
            packing: PackingConfig::default(),
            net: PackingConfig::default(),
            cell_margin: 0.01,
            transfer_samples: 0,
            density_samples: 0,
            seed: 0,
        }
    }
}

/// Statistics of the rotation cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverStats {
    pub delta: f64,
    pub beta: f64,
    pub net_size: usize,
    pub net_saturation: SaturationReport,
    pub rotations_sampled: usize,
    pub max_edge: usize,
    pub edge_size_bound: f64,
    pub edge_bound_holds: bool,
    pub bound_pre: f64,
    pub inner_density: Option<DensityEstimate>,
    /// `1 / rho(Psi'')`, the Haar-averaged fractional cover value.
    pub tau_star_proxy: Option<f64>,
    pub result: CoverResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereReport {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub construction: Construction,
    pub colors: usize,
    pub packing_size: usize,
    pub packing_saturation: SaturationReport,
    pub cover: Option<CoverStats>,
}

#[derive(Debug, Clone)]
pub struct ColoredSphere {
    pub coloring: SphereColoring,
    pub report: SphereReport,
    pub file: CoverFile,
}

/// Construction used for a radius: pieces above `sqrt(5)/2`, cells below.
pub fn default_construction(radius: f64, config: &SphereConfig) -> Result<Construction> {
    if !(radius > 0.5 && radius.is_finite()) {
        return Err(ChromaError::domain(format!("sphere coloring needs R > 1/2, got {radius}")));
    }
    if radius > SQRT5_HALF {
        if !(config.lambda_fraction > 0.0 && config.lambda_fraction < 1.0) {
            return Err(ChromaError::param(format!(
                "lambda fraction {} outside (0, 1)",
                config.lambda_fraction
            )));
        }
        Ok(Construction::Pieces { phi: solve_phi(radius)?, lambda: config.lambda_fraction * lambda0(radius)? })
    } else {
        Ok(Construction::Cells { phi: cell_angle(radius, config.cell_margin)? })
    }
}

/// Packing angle whose cells have chord diameter `1 - eta` on `S^n_r`.
pub fn cell_angle(radius: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(ChromaError::param(format!("cell margin {eta} outside (0, 1)")));
    }
    let s = (1.0 - eta) / (2.0 * radius);
    if !(s > 0.0 && s < 1.0) {
        return Err(ChromaError::domain(format!("no cell angle for R = {radius}, margin {eta}")));
    }
    Ok(0.5 * s.asin())
}

pub fn color_sphere(spec: &SphereSpec, config: &SphereConfig) -> Result<ColoredSphere> {
    let construction = default_construction(spec.radius, config)?;
    color_sphere_with(spec, construction, config)
}

pub fn color_sphere_with(spec: &SphereSpec, construction: Construction, config: &SphereConfig) -> Result<ColoredSphere> {
    match construction {
        Construction::Cells { phi } => {
            let packing = CapPacking::build(spec, phi, &config.packing, config.seed)?;
            let coloring = SphereColoring::Cells { packing };
            let SphereColoring::Cells { packing } = &coloring else { unreachable!() };
            let report = SphereReport {
                n: spec.n,
                radius: spec.radius,
                construction,
                colors: packing.len(),
                packing_size: packing.len(),
                packing_saturation: packing.saturation,
                cover: None,
            };
            let file = coloring.to_file(0, &[]);
            Ok(ColoredSphere { coloring, report, file })
        }
        Construction::Pieces { phi, lambda } => {
            let delta = match config.delta {
                Some(d) => d,
                None => default_delta(spec.n)?,
            };
            if !(delta > 0.0 && delta < 1.0) {
                return Err(ChromaError::param(format!("delta = {delta} outside (0, 1)")));
            }
            if config.rotations == 0 || config.max_rotations < config.rotations {
                return Err(ChromaError::param("need 0 < rotations <= max_rotations"));
            }
            let packing = CapPacking::build(spec, phi, &config.packing, config.seed)?;
            let packing_saturation = packing.saturation;
            let packing_size = packing.len();
            let fs = ForbiddenSet::new(packing, lambda)?;
            let mut ci = CoverInstance::new(fs, delta, &config.net, config.seed, config.include_identity)?;
            let mut m = config.rotations;
            let mut result = loop {
                ci.sample_edges(m);
                match ci.greedy_cover() {
                    Ok(r) => break r,
                    Err(ChromaError::IncompleteCover { .. }) if m < config.max_rotations => {
                        m = (2 * m).min(config.max_rotations);
                    }
                    Err(e) => return Err(e),
                }
            };
            let chosen = ci.chosen_rotations(&result);
            if config.transfer_samples > 0 {
                result = transfer_cover(&result, &ci.fs_outer, &chosen, config.transfer_samples, config.seed)?;
            }
            let edge_bound = ci.edge_size_bound()?;
            let inner_density =
                (config.density_samples > 0).then(|| mc_density(&ci.fs_inner, config.density_samples, config.seed));
            let stats = CoverStats {
                delta,
                beta: ci.beta,
                net_size: ci.net.len(),
                net_saturation: ci.net.saturation(),
                rotations_sampled: ci.rotations.len(),
                max_edge: ci.max_edge(),
                edge_size_bound: edge_bound,
                edge_bound_holds: ci.max_edge() as f64 <= edge_bound,
                bound_pre: bound_pre(phi, lambda, spec.n, delta)?,
                inner_density,
                tau_star_proxy: inner_density.filter(|d| d.hits > 0).map(|d| 1.0 / d.estimate),
                result: result.clone(),
            };
            let coloring = SphereColoring::Pieces { fs: ci.fs_outer, rotations: chosen };
            let file = coloring.to_file(ci.rotations.len(), &result.chosen);
            let report = SphereReport {
                n: spec.n,
                radius: spec.radius,
                construction,
                colors: coloring.color_count(),
                packing_size,
                packing_saturation,
                cover: Some(stats),
            };
            Ok(ColoredSphere { coloring, report, file })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitPairReport {
    pub pairs: usize,
    pub monochromatic: usize,
    pub uncolored: usize,
    pub passed: bool,
}

/// Point at angular distance `theta` from `p` in a uniform tangent direction.
pub(crate) fn fill_at_angle<R: Rng + ?Sized>(spec: &SphereSpec, p: &[f64], theta: f64, rng: &mut R, out: &mut [f64]) {
    let r = spec.radius;
    loop {
        fill_random_point(spec, rng, out);
        let h = dot(out, p) / (r * r);
        out.iter_mut().zip(p).for_each(|(o, pi)| *o -= h * pi);
        let t = norm(out);
        if t > 1e-9 * r {
            let (s, c) = theta.sin_cos();
            out.iter_mut().zip(p).for_each(|(o, pi)| *o = c * pi + s * r * *o / t);
            return;
        }
    }
}

/// Samples pairs at chord distance exactly 1 and counts monochromatic or
/// uncolored ones.
pub fn certify_unit_pairs(coloring: &SphereColoring, pairs: usize, seed: u64) -> Result<UnitPairReport> {
    let spec = *coloring.spec();
    if spec.radius < 0.5 {
        return Err(ChromaError::domain("sphere too small to contain unit-distance pairs"));
    }
    let dim = spec.dim();
    let theta = 2.0 * (0.5 / spec.radius).asin();
    let (mono, uncolored) = rng::chunks(pairs, CHUNK)
        .into_par_iter()
        .map(|(chunk, len)| {
            let mut rng = rng::stream(seed, tag::UNIT_PAIRS, chunk);
            let (mut p, mut q) = (vec![0.0; dim], vec![0.0; dim]);
            let (mut buf, mut scratch) = (vec![0.0; dim], vec![0.0; dim]);
            let (mut mono, mut uncolored) = (0usize, 0usize);
            for _ in 0..len {
                fill_random_point(&spec, &mut rng, &mut p);
                fill_at_angle(&spec, &p, theta, &mut rng, &mut q);
                match (coloring.color_raw(&p, &mut buf, &mut scratch), coloring.color_raw(&q, &mut buf, &mut scratch)) {
                    (Some(a), Some(b)) if a == b => mono += 1,
                    (Some(_), Some(_)) => {}
                    _ => uncolored += 1,
                }
            }
            (mono, uncolored)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(UnitPairReport { pairs, monochromatic: mono, uncolored, passed: mono == 0 && uncolored == 0 })
}
