//! Uniform-grid hash over ambient coordinates for fixed-radius neighbor queries.
//!
//! Above [`MAX_GRID_DIM`] ambient dimensions the grid degenerates into a
//! linear scan.

use rustc_hash::FxHashMap;

use crate::sphere::dot;

pub const MAX_GRID_DIM: usize = 6;

#[derive(Debug, Clone)]
pub struct SpatialHash {
    dim: usize,
    cell: f64,
    points: Vec<f64>,
    buckets: FxHashMap<Box<[i64]>, Vec<u32>>,
}

impl SpatialHash {
    pub fn new(dim: usize, cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        SpatialHash { dim, cell, points: Vec::new(), buckets: FxHashMap::default() }
    }

    pub fn from_points(dim: usize, cell: f64, flat: &[f64]) -> Self {
        let mut h = SpatialHash::new(dim, cell);
        for p in flat.chunks_exact(dim) {
            h.insert(p);
        }
        h
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    fn gridded(&self) -> bool {
        self.dim <= MAX_GRID_DIM
    }

    fn cell_of(&self, p: &[f64], out: &mut [i64]) {
        for (o, c) in out.iter_mut().zip(p) {
            *o = (c / self.cell).floor() as i64;
        }
    }

    pub fn insert(&mut self, p: &[f64]) -> usize {
        debug_assert_eq!(p.len(), self.dim);
        let idx = self.len();
        self.points.extend_from_slice(p);
        if self.gridded() {
            let mut cell = [0i64; MAX_GRID_DIM];
            self.cell_of(p, &mut cell[..self.dim]);
            self.buckets.entry(cell[..self.dim].into()).or_default().push(idx as u32);
        }
        idx
    }

    /// Calls `visit(i, <p_i, q>)` for every stored point whose Euclidean
    /// distance to `q` is at most `radius`. Stops early when `visit` returns
    /// `false`; returns whether it ran to completion.
    pub fn for_each_within<F: FnMut(usize, f64) -> bool>(&self, q: &[f64], radius: f64, mut visit: F) -> bool {
        let qq = dot(q, q);
        let r2 = radius * radius;
        let mut check = |i: usize| -> bool {
            let p = self.point(i);
            let pq = dot(p, q);
            let d2 = dot(p, p) - 2.0 * pq + qq;
            if d2 <= r2 {
                visit(i, pq)
            } else {
                true
            }
        };
        let reach = (radius / self.cell).ceil().max(1.0) as i64;
        let span = (2 * reach + 1) as f64;
        if !self.gridded() || span.powi(self.dim as i32) > self.len() as f64 {
            return (0..self.len()).all(&mut check);
        }
        let dim = self.dim;
        let mut base = [0i64; MAX_GRID_DIM];
        self.cell_of(q, &mut base[..dim]);
        let mut offset = [-reach; MAX_GRID_DIM];
        let mut cell = [0i64; MAX_GRID_DIM];
        loop {
            for ((c, b), o) in cell.iter_mut().zip(&base).zip(&offset).take(dim) {
                *c = b + o;
            }
            if let Some(bucket) = self.buckets.get(&cell[..dim]) {
                for &i in bucket {
                    if !check(i as usize) {
                        return false;
                    }
                }
            }
            // odometer increment
            let mut d = 0;
            loop {
                if d == dim {
                    return true;
                }
                offset[d] += 1;
                if offset[d] > reach {
                    offset[d] = -reach;
                    d += 1;
                } else {
                    break;
                }
            }
        }
    }

    pub fn any_within(&self, q: &[f64], radius: f64) -> bool {
        !self.for_each_within(q, radius, |_, _| false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};
    use crate::sphere::{fill_random_point, SphereSpec};

    #[test]
    fn matches_brute_force() {
        for n in [2usize, 3, 6] {
            let spec = SphereSpec::new(n, 1.5).unwrap();
            let dim = spec.dim();
            let mut rng = stream(3, tag::POINT, n as u64);
            let mut flat = vec![0.0; 400 * dim];
            for p in flat.chunks_exact_mut(dim) {
                fill_random_point(&spec, &mut rng, p);
            }
            let index = SpatialHash::from_points(dim, 0.3, &flat);
            let mut q = vec![0.0; dim];
            for _ in 0..50 {
                fill_random_point(&spec, &mut rng, &mut q);
                for radius in [0.1, 0.3, 0.8] {
                    let mut got = Vec::new();
                    index.for_each_within(&q, radius, |i, _| {
                        got.push(i);
                        true
                    });
                    got.sort_unstable();
                    let want: Vec<usize> = (0..400)
                        .filter(|&i| {
                            let p = &flat[i * dim..(i + 1) * dim];
                            p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
                        })
                        .collect();
                    assert_eq!(got, want);
                }
            }
        }
    }
}
