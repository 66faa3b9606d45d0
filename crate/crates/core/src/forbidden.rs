//! The set `Psi'`: Voronoi cells of a saturated cap packing, each shrunk
//! toward its center by the map `f_{x,lambda}`.
//!
//! `f_{x,lambda}` scales the component of a point orthogonal to `x` by
//! `lambda` and lifts it back onto the hemisphere around `x`, so that
//! `sin(theta') = lambda sin(theta)` for the angular distances to `x`. With
//! `lambda` below the critical value every piece has Euclidean diameter
//! below 1 and distinct pieces stay more than 1 apart.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ChromaError, Result};
use crate::params::margins;
use crate::rng::{self, tag};
use crate::spatial::SpatialHash;
use crate::sphere::{
    angle_between, chord_from_angle, dot, fill_random_in_cap, fill_random_point, norm, Rotation,
    SpherePoint, SphereSpec,
};

/// Pairs sampled per parallel work item.
const CHUNK: usize = 8192;

/// Controls greedy saturation of a packing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingConfig {
    /// Stop random insertion after this many consecutive rejected candidates.
    pub max_rejections: usize,
    /// Saturation is certified once this many consecutive probes land within
    /// `2 phi` of a center.
    pub probes: usize,
    /// Probe budget, in multiples of `probes`.
    pub max_rounds: usize,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig { max_rejections: 1000, probes: 100_000, max_rounds: 16 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    /// Candidates drawn during random insertion.
    pub candidates: usize,
    /// Probes drawn during certification.
    pub probes: usize,
    /// Probes farther than `2 phi` from every center; each became a center.
    pub probe_insertions: usize,
    /// Whether the final `PackingConfig::probes` probes were all covered.
    pub certified: bool,
}

/// Greedy maximal set with pairwise angular separation above `2 * half_angle`.
pub(crate) fn build_separated(
    spec: &SphereSpec,
    half_angle: f64,
    config: &PackingConfig,
    seed: u64,
    tags: (u16, u16),
) -> (SpatialHash, SaturationReport) {
    let dim = spec.dim();
    let reach = chord_from_angle(spec.radius, 2.0 * half_angle);
    let mut set = SpatialHash::new(dim, reach);
    let mut report = SaturationReport::default();
    let mut p = vec![0.0; dim];

    let mut rng = rng::stream(seed, tags.0, 0);
    let mut run = 0;
    while run < config.max_rejections {
        fill_random_point(spec, &mut rng, &mut p);
        report.candidates += 1;
        if set.any_within(&p, reach) {
            run += 1;
        } else {
            set.insert(&p);
            run = 0;
        }
    }

    let mut rng = rng::stream(seed, tags.1, 0);
    let budget = config.probes.saturating_mul(config.max_rounds);
    let mut run = 0;
    while run < config.probes && report.probes < budget {
        fill_random_point(spec, &mut rng, &mut p);
        report.probes += 1;
        if set.any_within(&p, reach) {
            run += 1;
        } else {
            set.insert(&p);
            report.probe_insertions += 1;
            run = 0;
        }
    }
    report.certified = run >= config.probes;
    (set, report)
}

/// Centers of pairwise disjoint caps `C(x, phi)`.
#[derive(Debug, Clone)]
pub struct CapPacking {
    spec: SphereSpec,
    phi: f64,
    centers: SpatialHash,
    pub saturation: SaturationReport,
}

impl CapPacking {
    pub fn build(spec: &SphereSpec, phi: f64, config: &PackingConfig, seed: u64) -> Result<Self> {
        Self::build_tagged(spec, phi, config, seed, (tag::PACKING, tag::PACKING_PROBE))
    }

    pub(crate) fn build_tagged(
        spec: &SphereSpec,
        phi: f64,
        config: &PackingConfig,
        seed: u64,
        tags: (u16, u16),
    ) -> Result<Self> {
        if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_4) {
            return Err(ChromaError::domain(format!("packing angle {phi} outside (0, pi/4)")));
        }
        let (centers, saturation) = build_separated(spec, phi, config, seed, tags);
        Ok(CapPacking { spec: *spec, phi, centers, saturation })
    }

    /// Rebuilds a packing from stored centers, checking separation.
    pub fn from_centers(spec: &SphereSpec, phi: f64, centers: Vec<Vec<f64>>) -> Result<Self> {
        let reach = chord_from_angle(spec.radius, 2.0 * phi);
        let mut set = SpatialHash::new(spec.dim(), reach);
        for c in centers {
            let p = spec.point(c)?;
            if set.any_within(p.coords(), reach) {
                return Err(ChromaError::domain("centers violate the 2*phi separation"));
            }
            set.insert(p.coords());
        }
        Ok(CapPacking { spec: *spec, phi, centers: set, saturation: SaturationReport::default() })
    }

    pub fn spec(&self) -> &SphereSpec {
        &self.spec
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        self.centers.point(i)
    }

    pub fn center_point(&self, i: usize) -> SpherePoint {
        SpherePoint::from_raw(self.center(i).to_vec())
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.centers.flat().chunks_exact(self.spec.dim())
    }

    pub(crate) fn index(&self) -> &SpatialHash {
        &self.centers
    }

    /// Index of the nearest center (largest inner product), lowest index on ties.
    pub fn nearest_center(&self, p: &SpherePoint) -> Result<usize> {
        if self.is_empty() {
            return Err(ChromaError::State("nearest center of an empty packing".into()));
        }
        if p.coords().len() != self.spec.dim() {
            return Err(ChromaError::Dimension { expected: self.spec.dim(), got: p.coords().len() });
        }
        Ok(self.nearest_raw(p.coords()))
    }

    pub(crate) fn nearest_raw(&self, p: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, c) in self.centers().enumerate() {
            let d = dot(c, p);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }

    /// Whether center `i` is the (tie-broken) nearest center of `p`.
    #[inline]
    pub(crate) fn is_nearest(&self, i: usize, p: &[f64]) -> bool {
        let own = dot(self.center(i), p);
        for (j, c) in self.centers().enumerate() {
            if j == i {
                continue;
            }
            let d = dot(c, p);
            if d > own || (d == own && j < i) {
                return false;
            }
        }
        true
    }

    /// Smallest pairwise angular distance between centers (exhaustive).
    pub fn min_separation(&self) -> f64 {
        let mut best = std::f64::consts::PI;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(angle_between(self.center(i), self.center(j)));
            }
        }
        best
    }

    /// Centers whose Voronoi cells can touch cell `i` (within `4 phi`).
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let reach = chord_from_angle(self.spec.radius, 4.0 * self.phi) * (1.0 + 1e-9);
        let mut out = Vec::new();
        self.centers.for_each_within(self.center(i), reach, |j, _| {
            if j != i {
                out.push(j);
            }
            true
        });
        out.sort_unstable();
        out
    }

    pub fn rotated(&self, rot: &Rotation) -> CapPacking {
        let dim = self.spec.dim();
        let mut set = SpatialHash::new(dim, chord_from_angle(self.spec.radius, 2.0 * self.phi));
        let mut buf = vec![0.0; dim];
        for c in self.centers() {
            rot.apply_into(c, &mut buf);
            set.insert(&buf);
        }
        CapPacking { spec: self.spec, phi: self.phi, centers: set, saturation: self.saturation }
    }

    pub fn to_file(&self) -> PackingFile {
        PackingFile {
            n: self.spec.n,
            radius: self.spec.radius,
            phi: self.phi,
            centers: self.centers().map(|c| c.to_vec()).collect(),
        }
    }
}

/// On-disk packing: `{n, R, phi, centers: [[...]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingFile {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub phi: f64,
    pub centers: Vec<Vec<f64>>,
}

impl PackingFile {
    pub fn into_packing(self) -> Result<CapPacking> {
        let spec = SphereSpec::new(self.n, self.radius)?;
        CapPacking::from_centers(&spec, self.phi, self.centers)
    }
}

/// `f_{x,lambda}(a)` on raw coordinates; `false` if `a` is outside the closed
/// hemisphere around `x`.
pub(crate) fn shrink_raw(x: &[f64], radius: f64, lambda: f64, a: &[f64], out: &mut [f64]) -> bool {
    let h = dot(a, x) / radius;
    if h < -1e-12 * radius {
        return false;
    }
    let mut t2 = 0.0;
    for ((o, &ai), &xi) in out.iter_mut().zip(a).zip(x) {
        *o = lambda * (ai - h * xi / radius);
        t2 += *o * *o;
    }
    let t = t2.sqrt().min(radius);
    let h_new = ((radius - t) * (radius + t)).sqrt();
    for (o, &xi) in out.iter_mut().zip(x) {
        *o += h_new * xi / radius;
    }
    true
}

/// Inverse of [`shrink_raw`]; `false` if `a'` has no preimage.
pub(crate) fn unshrink_raw(x: &[f64], radius: f64, lambda: f64, a: &[f64], out: &mut [f64]) -> bool {
    let h = dot(a, x) / radius;
    if h < 0.0 {
        return false;
    }
    let mut t2 = 0.0;
    for ((o, &ai), &xi) in out.iter_mut().zip(a).zip(x) {
        *o = (ai - h * xi / radius) / lambda;
        t2 += *o * *o;
    }
    let t = t2.sqrt();
    if t > radius * (1.0 + 1e-12) {
        return false;
    }
    let t = t.min(radius);
    let h_new = ((radius - t) * (radius + t)).sqrt();
    for (o, &xi) in out.iter_mut().zip(x) {
        *o += h_new * xi / radius;
    }
    true
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(ChromaError::domain(format!("shrink coefficient {lambda} outside (0, 1]")))
    }
}

/// The shrink map `f_{x,lambda}` on the closed hemisphere around `x`.
pub fn shrink(spec: &SphereSpec, x: &SpherePoint, lambda: f64, a: &SpherePoint) -> Result<SpherePoint> {
    check_lambda(lambda)?;
    let mut out = vec![0.0; spec.dim()];
    if !shrink_raw(x.coords(), spec.radius, lambda, a.coords(), &mut out) {
        return Err(ChromaError::domain("point lies outside the hemisphere around the pole"));
    }
    Ok(SpherePoint::from_raw(out))
}

/// Preimage of `a'` under the shrink map.
pub fn unshrink(spec: &SphereSpec, x: &SpherePoint, lambda: f64, a_prime: &SpherePoint) -> Result<SpherePoint> {
    check_lambda(lambda)?;
    let mut out = vec![0.0; spec.dim()];
    if !unshrink_raw(x.coords(), spec.radius, lambda, a_prime.coords(), &mut out) {
        let r = spec.radius;
        let h = dot(a_prime.coords(), x.coords()) / r;
        let tangential = (norm(a_prime.coords()).powi(2) - h * h).max(0.0).sqrt();
        return Err(ChromaError::NoPreimage { tangential, limit: lambda * r });
    }
    Ok(SpherePoint::from_raw(out))
}

/// Union of shrunken Voronoi cells `Psi' = U f_{x,lambda}(psi_x)`.
#[derive(Debug, Clone)]
pub struct ForbiddenSet {
    pub packing: CapPacking,
    pub lambda: f64,
    /// `sin(gamma) = lambda sin(2 phi)`: every piece lies in `C(x, gamma)`.
    pub gamma: f64,
    cos_gamma: f64,
}

impl ForbiddenSet {
    pub fn new(packing: CapPacking, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ChromaError::domain(format!("shrink coefficient {lambda} outside (0, 1)")));
        }
        if packing.is_empty() {
            return Err(ChromaError::State("forbidden set over an empty packing".into()));
        }
        let gamma = (lambda * (2.0 * packing.phi()).sin()).asin();
        Ok(ForbiddenSet { packing, lambda, gamma, cos_gamma: gamma.cos() })
    }

    pub fn spec(&self) -> &SphereSpec {
        self.packing.spec()
    }

    pub fn phi(&self) -> f64 {
        self.packing.phi()
    }

    /// Same packing, different coefficient.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        ForbiddenSet::new(self.packing.clone(), lambda)
    }

    /// `(D, S)`: piece diameter bound and cross-piece separation bound.
    pub fn margins(&self) -> (f64, f64) {
        margins(self.spec().radius, self.phi(), self.lambda)
    }

    pub fn contains(&self, p: &SpherePoint) -> bool {
        let mut scratch = vec![0.0; self.spec().dim()];
        self.piece_of(p.coords(), &mut scratch).is_some()
    }

    /// Index of the piece containing `p`, if any. `scratch` has ambient length.
    pub fn piece_of(&self, p: &[f64], scratch: &mut [f64]) -> Option<usize> {
        (0..self.packing.len()).find(|&i| self.in_piece(i, p, scratch))
    }

    /// Whether `p` lies in piece `i`.
    #[inline]
    pub fn in_piece(&self, i: usize, p: &[f64], scratch: &mut [f64]) -> bool {
        let x = self.packing.center(i);
        let r = self.spec().radius;
        dot(x, p) >= self.cos_gamma * r * r
            && unshrink_raw(x, r, self.lambda, p, scratch)
            && self.packing.is_nearest(i, scratch)
    }

    /// Point of piece `i`: a uniform point of the Voronoi cell pushed through the shrink map.
    pub fn sample_piece_point<R: Rng + ?Sized>(&self, i: usize, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        let spec = *self.spec();
        let x = self.packing.center(i);
        let reach = (2.0 * self.phi()).min(FRAC_PI_2);
        loop {
            fill_random_in_cap(&spec, x, reach, rng, scratch);
            if self.packing.is_nearest(i, scratch) {
                shrink_raw(x, spec.radius, self.lambda, scratch, out);
                return;
            }
        }
    }

    /// Uniform point of `Psi'` by rejection; returns its piece.
    pub fn sample_uniform_point<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) -> usize {
        let spec = *self.spec();
        loop {
            fill_random_point(&spec, rng, out);
            if let Some(i) = self.piece_of(out, scratch) {
                return i;
            }
        }
    }

    pub fn rotated(&self, rot: &Rotation) -> ForbiddenSet {
        ForbiddenSet {
            packing: self.packing.rotated(rot),
            lambda: self.lambda,
            gamma: self.gamma,
            cos_gamma: self.cos_gamma,
        }
    }

    pub fn to_file(&self) -> ForbiddenSetFile {
        let p = self.packing.to_file();
        ForbiddenSetFile {
            n: p.n,
            radius: p.radius,
            phi: p.phi,
            centers: p.centers,
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }
}

/// On-disk forbidden set: the packing file plus `{lambda, gamma}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenSetFile {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub phi: f64,
    pub centers: Vec<Vec<f64>>,
    pub lambda: f64,
    pub gamma: f64,
}

impl ForbiddenSetFile {
    pub fn into_forbidden_set(self) -> Result<ForbiddenSet> {
        let packing = PackingFile { n: self.n, radius: self.radius, phi: self.phi, centers: self.centers }
            .into_packing()?;
        ForbiddenSet::new(packing, self.lambda)
    }
}

/// Margin by which `D < target < S` must hold, and the width trimmed from
/// each end of the forbidden window when counting violations.
pub const GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenCertificate {
    pub target_distance: f64,
    pub diameter_bound: f64,
    pub separation_bound: f64,
    pub tolerance: f64,
    pub pairs: usize,
    pub within_piece_pairs: usize,
    pub cross_piece_pairs: usize,
    /// Pairs with chord distance in `[D + tol, S - tol]`.
    pub violations: usize,
    pub max_within_piece: f64,
    pub min_cross_piece: f64,
    pub passed: bool,
}

#[derive(Clone, Copy)]
struct PairStats {
    pairs: usize,
    within: usize,
    cross: usize,
    violations: usize,
    max_within: f64,
    min_cross: f64,
}

impl PairStats {
    fn empty() -> Self {
        PairStats { pairs: 0, within: 0, cross: 0, violations: 0, max_within: 0.0, min_cross: f64::INFINITY }
    }

    fn merge(self, o: Self) -> Self {
        PairStats {
            pairs: self.pairs + o.pairs,
            within: self.within + o.within,
            cross: self.cross + o.cross,
            violations: self.violations + o.violations,
            max_within: self.max_within.max(o.max_within),
            min_cross: self.min_cross.min(o.min_cross),
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Certifies that `Psi'` has no pair at `target_distance`.
///
/// A quarter of the pairs lie in one piece, a quarter in neighboring pieces
/// (where the cross-piece minimum is attained), and half are independent
/// uniform points of `Psi'`.
pub fn certify_forbidden(
    fs: &ForbiddenSet,
    target_distance: f64,
    pair_samples: usize,
    seed: u64,
) -> Result<ForbiddenCertificate> {
    let (d, s) = fs.margins();
    if !(d + GAP_TOL < target_distance && target_distance < s - GAP_TOL) {
        return Err(ChromaError::param(format!(
            "margins do not bracket the target distance: D = {d}, target = {target_distance}, S = {s}"
        )));
    }
    let dim = fs.spec().dim();
    let k = fs.packing.len();
    let neighbors: Vec<Vec<usize>> = (0..k).map(|i| fs.packing.neighbors(i)).collect();
    let (lo, hi) = (d + GAP_TOL, s - GAP_TOL);

    let stats = rng::chunks(pair_samples, CHUNK)
        .into_par_iter()
        .map(|(chunk, len)| {
            let mut rng = rng::stream(seed, tag::PAIRS, chunk);
            let mut scratch = vec![0.0; dim];
            let (mut p, mut q) = (vec![0.0; dim], vec![0.0; dim]);
            let mut st = PairStats::empty();
            for j in 0..len {
                let global = (chunk as usize) * CHUNK + j;
                let (pi, qi) = match global % 4 {
                    0 => {
                        let i = rng.random_range(0..k);
                        fs.sample_piece_point(i, &mut rng, &mut scratch, &mut p);
                        fs.sample_piece_point(i, &mut rng, &mut scratch, &mut q);
                        (i, i)
                    }
                    1 => {
                        let i = rng.random_range(0..k);
                        let nb = &neighbors[i];
                        let jdx = if nb.is_empty() { i } else { nb[rng.random_range(0..nb.len())] };
                        fs.sample_piece_point(i, &mut rng, &mut scratch, &mut p);
                        fs.sample_piece_point(jdx, &mut rng, &mut scratch, &mut q);
                        (i, jdx)
                    }
                    _ => {
                        let a = fs.sample_uniform_point(&mut rng, &mut scratch, &mut p);
                        let b = fs.sample_uniform_point(&mut rng, &mut scratch, &mut q);
                        (a, b)
                    }
                };
                let dist = euclid(&p, &q);
                st.pairs += 1;
                if pi == qi {
                    st.within += 1;
                    st.max_within = st.max_within.max(dist);
                } else {
                    st.cross += 1;
                    st.min_cross = st.min_cross.min(dist);
                }
                if dist >= lo && dist <= hi {
                    st.violations += 1;
                }
            }
            st
        })
        .reduce(PairStats::empty, PairStats::merge);

    let passed = stats.violations == 0 && stats.max_within <= d + GAP_TOL && stats.min_cross >= s - GAP_TOL;
    Ok(ForbiddenCertificate {
        target_distance,
        diameter_bound: d,
        separation_bound: s,
        tolerance: GAP_TOL,
        pairs: stats.pairs,
        within_piece_pairs: stats.within,
        cross_piece_pairs: stats.cross,
        violations: stats.violations,
        max_within_piece: stats.max_within,
        min_cross_piece: stats.min_cross,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearanceReport {
    pub samples: usize,
    pub boundary_samples: usize,
    /// `phi - alpha` with `sin(alpha) = lambda sin(phi)`.
    pub required: f64,
    pub min_clearance: f64,
    /// Distinct (center, neighbor) bisectors that attained a per-sample minimum.
    pub active_facets: usize,
    pub cross_pairs: usize,
    pub min_cross_angle: f64,
    pub passed: bool,
}

/// Angular distance from `p` (in cell `i`) to the boundary of cell `i`,
/// with the bisector that attains it. The boundary of a spherical Voronoi
/// cell inside a hemisphere is at the distance of the nearest bisecting
/// great sphere, so the minimum over all other centers is exact.
fn clearance(packing: &CapPacking, i: usize, p: &[f64]) -> (f64, usize) {
    let x = packing.center(i);
    let pn = norm(p);
    let mut best = f64::INFINITY;
    let mut arg = i;
    for (j, y) in packing.centers().enumerate() {
        if j == i {
            continue;
        }
        let mut nn = 0.0;
        let mut s = 0.0;
        for ((a, b), c) in x.iter().zip(y).zip(p) {
            let d = a - b;
            nn += d * d;
            s += d * c;
        }
        let v = (s / (nn.sqrt() * pn)).clamp(-1.0, 1.0).asin();
        if v < best {
            best = v;
            arg = j;
        }
    }
    (best, arg)
}

/// Last point of cell `i` along the geodesic from its center in direction `dir`.
fn cell_boundary_point(packing: &CapPacking, i: usize, dir: &[f64], out: &mut [f64]) {
    let x = packing.center(i);
    let r = packing.spec().radius;
    let at = |t: f64, out: &mut [f64]| {
        let (s, c) = t.sin_cos();
        for ((o, xi), di) in out.iter_mut().zip(x).zip(dir) {
            *o = c * xi + s * r * di;
        }
    };
    let mut hi = 2.0 * packing.phi();
    at(hi, out);
    if packing.is_nearest(i, out) {
        return;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        at(mid, out);
        if packing.is_nearest(i, out) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo, out);
}

/// Sampled check that every piece keeps angular distance at least
/// `phi - alpha` from the boundary of its Voronoi cell. Half of the samples
/// are shrunken images of cell-boundary points, where the clearance is smallest.
pub fn check_clearance(fs: &ForbiddenSet, samples: usize, seed: u64) -> ClearanceReport {
    let spec = *fs.spec();
    let dim = spec.dim();
    let k = fs.packing.len();
    let alpha = (fs.lambda * fs.phi().sin()).asin();
    let required = fs.phi() - alpha;
    let mut rng = rng::stream(seed, tag::CLEARANCE, 0);
    let mut scratch = vec![0.0; dim];
    let (mut b, mut p, mut q, mut dir) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut min_clearance = f64::INFINITY;
    let mut min_cross = f64::INFINITY;
    let mut facets = std::collections::BTreeSet::new();
    let mut boundary_samples = 0;
    let mut cross_pairs = 0;
    let neighbors: Vec<Vec<usize>> = (0..k).map(|i| fs.packing.neighbors(i)).collect();
    for s in 0..samples {
        let i = rng.random_range(0..k);
        if s % 2 == 0 {
            // unit tangent direction at the center
            let x = fs.packing.center(i);
            loop {
                fill_random_point(&spec, &mut rng, &mut dir);
                let h = dot(&dir, x) / (spec.radius * spec.radius);
                dir.iter_mut().zip(x).for_each(|(d, xi)| *d -= h * xi);
                let t = norm(&dir);
                if t > 1e-9 {
                    dir.iter_mut().for_each(|d| *d /= t);
                    break;
                }
            }
            cell_boundary_point(&fs.packing, i, &dir, &mut b);
            shrink_raw(x, spec.radius, fs.lambda, &b, &mut p);
            boundary_samples += 1;
        } else {
            fs.sample_piece_point(i, &mut rng, &mut scratch, &mut p);
        }
        let (c, j) = clearance(&fs.packing, i, &p);
        if s % 2 == 0 {
            facets.insert((i.min(j), i.max(j)));
        }
        min_clearance = min_clearance.min(c);
        if let Some(&nb) = neighbors[i].get(rng.random_range(0..neighbors[i].len().max(1))) {
            fs.sample_piece_point(nb, &mut rng, &mut scratch, &mut q);
            min_cross = min_cross.min(angle_between(&p, &q));
            cross_pairs += 1;
        }
    }
    let passed = min_clearance >= required - GAP_TOL && min_cross >= 2.0 * required - GAP_TOL;
    ClearanceReport {
        samples,
        boundary_samples,
        required,
        min_clearance,
        active_facets: facets.len(),
        cross_pairs,
        min_cross_angle: min_cross,
        passed,
    }
}

/// Natural log of `lambda^n sqrt((1 - sin^2 2phi) / (1 - lambda^2 sin^2 2phi))`.
pub fn ln_density_bound(phi: f64, lambda: f64, n: usize) -> Result<f64> {
    let s = (2.0 * phi).sin();
    if !(lambda > 0.0 && lambda * s < 1.0 && s <= 1.0) {
        return Err(ChromaError::domain(format!("density bound needs 0 < lambda sin 2phi < 1 (phi={phi}, lambda={lambda})")));
    }
    let num = (1.0 - s * s).max(0.0);
    if num == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(n as f64 * lambda.ln() + 0.5 * (num.ln() - (1.0 - lambda * lambda * s * s).ln()))
}

/// Lower bound on the density of the shrunken-cell set; `0` at the
/// degenerate angle `phi = pi/4`.
pub fn analytic_density_bound(phi: f64, lambda: f64, n: usize) -> Result<f64> {
    Ok(ln_density_bound(phi, lambda, n)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub samples: usize,
    pub hits: usize,
    pub estimate: f64,
    pub std_error: f64,
}

impl DensityEstimate {
    pub fn from_counts(samples: usize, hits: usize) -> Self {
        let p = hits as f64 / samples.max(1) as f64;
        DensityEstimate { samples, hits, estimate: p, std_error: (p * (1.0 - p) / samples.max(1) as f64).sqrt() }
    }
}

/// Fraction of uniform sphere points that fall in the set.
pub fn mc_density(fs: &ForbiddenSet, samples: usize, seed: u64) -> DensityEstimate {
    let spec = *fs.spec();
    let dim = spec.dim();
    let hits: usize = rng::chunks(samples, CHUNK)
        .into_par_iter()
        .map(|(chunk, len)| {
            let mut rng = rng::stream(seed, tag::DENSITY, chunk);
            let (mut p, mut scratch) = (vec![0.0; dim], vec![0.0; dim]);
            (0..len)
                .filter(|_| {
                    fill_random_point(&spec, &mut rng, &mut p);
                    fs.piece_of(&p, &mut scratch).is_some()
                })
                .count()
        })
        .sum();
    DensityEstimate::from_counts(samples, hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{lambda0, solve_phi};
    use crate::sphere::{angular_distance, random_point_with, random_rotation};
    use proptest::prelude::*;
    use rand::Rng;

    fn small_config() -> PackingConfig {
        PackingConfig { max_rejections: 300, probes: 20_000, max_rounds: 8 }
    }

    fn r2_set(frac: f64) -> ForbiddenSet {
        let spec = SphereSpec::new(2, 2.0).unwrap();
        let phi = solve_phi(2.0).unwrap();
        let packing = CapPacking::build(&spec, phi, &small_config(), 5).unwrap();
        ForbiddenSet::new(packing, frac * lambda0(2.0).unwrap()).unwrap()
    }

    #[test]
    fn packing_is_separated_saturated_and_bounded() {
        let spec = SphereSpec::new(2, 2.0).unwrap();
        let phi = solve_phi(2.0).unwrap();
        let packing = CapPacking::build(&spec, phi, &small_config(), 1).unwrap();
        assert!(packing.min_separation() > 2.0 * phi);
        assert!(packing.saturation.certified);
        let bound = 1.0 / spec.cap_measure(phi).unwrap();
        assert!((packing.len() as f64) <= bound, "{} > {bound}", packing.len());
        let again = CapPacking::build(&spec, phi, &small_config(), 1).unwrap();
        assert_eq!(packing.to_file(), again.to_file());
    }

    #[test]
    fn coarse_packing_has_at_least_two_caps() {
        let spec = SphereSpec::new(3, 1.0).unwrap();
        let packing = CapPacking::build(&spec, 0.78, &small_config(), 2).unwrap();
        assert!(packing.len() >= 2);
    }

    #[test]
    fn nearest_center_sandwich() {
        let fs = r2_set(0.95);
        let p = &fs.packing;
        let spec = *p.spec();
        let mut rng = rng::stream(9, tag::POINT, 0);
        for i in 0..p.len() {
            assert_eq!(p.nearest_center(&p.center_point(i)).unwrap(), i);
        }
        let mut q = vec![0.0; 3];
        for _ in 0..20_000 {
            let i = rng.random_range(0..p.len());
            fill_random_in_cap(&spec, p.center(i), p.phi(), &mut rng, &mut q);
            assert_eq!(p.nearest_raw(&q), i);
            let z = random_point_with(&spec, &mut rng);
            let j = p.nearest_center(&z).unwrap();
            assert!(angle_between(p.center(j), z.coords()) <= 2.0 * p.phi());
        }
        let empty = CapPacking::from_centers(&spec, 0.3, vec![]).unwrap();
        assert!(matches!(empty.nearest_center(&spec.pole(0)), Err(ChromaError::State(_))));
    }

    #[test]
    fn shrink_examples() {
        let spec = SphereSpec::new(2, 1.0).unwrap();
        let x = spec.pole(2);
        assert_eq!(shrink(&spec, &x, 0.5, &x).unwrap(), x);
        let a = spec.pole(0);
        let fa = shrink(&spec, &x, 0.5, &a).unwrap();
        assert!((angular_distance(&spec, &x, &fa).unwrap() - std::f64::consts::FRAC_PI_6).abs() < 1e-14);
        // direct construction: (0.5, 0, sqrt(3)/2)
        assert!((fa.coords()[0] - 0.5).abs() < 1e-15 && (fa.coords()[2] - 0.75f64.sqrt()).abs() < 1e-15);
        assert!(shrink(&spec, &x, 0.5, &x.neg()).is_err());
    }

    #[test]
    fn unshrink_examples() {
        let spec = SphereSpec::new(2, 1.0).unwrap();
        let x = spec.pole(2);
        let lambda: f64 = 0.4;
        assert_eq!(unshrink(&spec, &x, lambda, &x).unwrap(), x);
        let t = lambda.asin();
        let edge = spec.point(vec![t.sin(), 0.0, t.cos()]).unwrap();
        let pre = unshrink(&spec, &x, lambda, &edge).unwrap();
        assert!((angular_distance(&spec, &x, &pre).unwrap() - FRAC_PI_2).abs() < 1e-7);
        let t = lambda.asin() + 1e-3;
        let beyond = spec.point(vec![t.sin(), 0.0, t.cos()]).unwrap();
        assert!(matches!(unshrink(&spec, &x, lambda, &beyond), Err(ChromaError::NoPreimage { .. })));
    }

    proptest! {
        #[test]
        fn shrink_law_and_roundtrip(seed in any::<u64>(), lambda in 0.05f64..0.99) {
            let spec = SphereSpec::new(4, 1.3).unwrap();
            let mut rng = rng::stream(seed, tag::POINT, 1);
            let x = random_point_with(&spec, &mut rng);
            let mut a = vec![0.0; 5];
            fill_random_in_cap(&spec, x.coords(), FRAC_PI_2 - 0.01, &mut rng, &mut a);
            let a = spec.point(a).unwrap();
            let fa = shrink(&spec, &x, lambda, &a).unwrap();
            let th = angular_distance(&spec, &x, &a).unwrap();
            let th2 = angular_distance(&spec, &x, &fa).unwrap();
            prop_assert!((th2.sin() - lambda * th.sin()).abs() < 1e-12);
            let back = unshrink(&spec, &x, lambda, &fa).unwrap();
            for (u, v) in back.coords().iter().zip(a.coords()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn membership_examples() {
        let fs = r2_set(0.95);
        let spec = *fs.spec();
        for i in 0..fs.packing.len() {
            assert!(fs.contains(&fs.packing.center_point(i)));
        }
        let mut rng = rng::stream(4, tag::POINT, 0);
        let (mut q, mut out, mut scratch) = (vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
        for _ in 0..5000 {
            let i = rng.random_range(0..fs.packing.len());
            fill_random_in_cap(&spec, fs.packing.center(i), fs.phi(), &mut rng, &mut q);
            shrink_raw(fs.packing.center(i), 2.0, fs.lambda, &q, &mut out);
            assert_eq!(fs.piece_of(&out, &mut scratch), Some(i));
            let z = random_point_with(&spec, &mut rng);
            let far = fs.packing.centers().all(|c| angle_between(c, z.coords()) > fs.gamma);
            if far {
                assert!(!fs.contains(&z));
            }
        }
    }

    #[test]
    fn membership_is_rotation_equivariant() {
        let fs = r2_set(0.9);
        let spec = *fs.spec();
        let rot = random_rotation(&spec, 77);
        let moved = fs.rotated(&rot);
        let mut rng = rng::stream(8, tag::POINT, 0);
        let mut agree = 0;
        let total = 20_000;
        for _ in 0..total {
            let p = random_point_with(&spec, &mut rng);
            if fs.contains(&p) == moved.contains(&rot.apply(&p)) {
                agree += 1;
            }
        }
        // Only points within rounding of a piece boundary may disagree.
        assert!(total - agree <= 2, "{} disagreements", total - agree);
    }

    #[test]
    fn certificate_small_run() {
        let fs = r2_set(0.95);
        let cert = certify_forbidden(&fs, 1.0, 40_000, 3).unwrap();
        assert!(cert.passed, "{cert:?}");
        assert!((cert.diameter_bound - 0.95).abs() < 1e-12);
        assert!(cert.separation_bound > 1.0);
        assert!(cert.max_within_piece <= cert.diameter_bound + 1e-9);
        let at_critical = r2_set(1.0 - 1e-15);
        let fs_crit = at_critical.with_lambda(lambda0(2.0).unwrap()).unwrap();
        assert!(matches!(certify_forbidden(&fs_crit, 1.0, 10, 0), Err(ChromaError::InvalidParameter(_))));
    }

    #[test]
    fn clearance_small_run() {
        let fs = r2_set(0.95);
        let rep = check_clearance(&fs, 4000, 1);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.active_facets > 0);
        // At the center the clearance is at least phi.
        let (c, _) = clearance(&fs.packing, 0, fs.packing.center(0));
        assert!(c >= fs.phi() - 1e-12);
    }

    #[test]
    fn density_bound_values() {
        assert!((analytic_density_bound(0.3, 1.0 - 1e-16, 3).unwrap() - 1.0).abs() < 1e-12);
        let phi = solve_phi(2.0).unwrap();
        let v = analytic_density_bound(phi, 0.95 * lambda0(2.0).unwrap(), 2).unwrap();
        assert!(v > 0.0 && v < 1.0);
        assert_eq!(analytic_density_bound(std::f64::consts::FRAC_PI_4, 0.5, 2).unwrap(), 0.0);
        let near = analytic_density_bound(std::f64::consts::FRAC_PI_4 - 1e-8, 0.5, 2).unwrap();
        assert!(near < 1e-4);
    }

    #[test]
    fn density_estimate_behaviour() {
        let fs = r2_set(0.95);
        let a = mc_density(&fs, 100_000, 1);
        let bound = analytic_density_bound(fs.phi(), fs.lambda, 2).unwrap();
        assert!(a.estimate >= bound - 3.0 * a.std_error);
        let b = mc_density(&fs, 200_000, 1);
        let ratio = a.std_error / b.std_error;
        assert!((ratio - 2f64.sqrt()).abs() < 0.05);
        let tiny = fs.with_lambda(1e-3).unwrap();
        assert!(mc_density(&tiny, 50_000, 2).estimate < 1e-3);
    }
}
