//! Exact fractional covering number of a small hypergraph.
//!
//! Solves the packing LP `max 1'y  s.t.  sum_{v in E} y_v <= 1, y >= 0` with a
//! dense tableau simplex (Bland's rule). The optimal cover weights are read
//! off the slack reduced costs, and primal feasibility plus a zero duality
//! gap are checked before returning.

use serde::{Deserialize, Serialize};

use super::hypergraph::Hypergraph;
use crate::error::{ChromaError, Result};

/// Largest instance accepted by the dense solver.
pub const MAX_VERTICES: usize = 100;
pub const MAX_EDGES: usize = 200;

const PIVOT_TOL: f64 = 1e-12;
/// Feasibility and duality-gap tolerance of the returned certificate.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalCover {
    pub value: f64,
    /// One weight per edge, `sum_{E contains v} w_E >= 1` for every vertex.
    pub weights: Vec<f64>,
    /// Optimal vertex packing `y`, certifying the lower bound.
    pub packing: Vec<f64>,
}

pub fn fractional_cover_exact(h: &Hypergraph) -> Result<FractionalCover> {
    if h.vertices > MAX_VERTICES || h.edges.len() > MAX_EDGES {
        return Err(ChromaError::param(format!(
            "exact LP limited to {MAX_VERTICES} vertices and {MAX_EDGES} edges, got {} and {}",
            h.vertices,
            h.edges.len()
        )));
    }
    if let Some(&v) = h.uncoverable().first() {
        return Err(ChromaError::Infeasible { vertex: v });
    }
    let k = h.vertices;
    let m = h.edges.len();
    let width = k + m + 1;
    let rhs = k + m;
    // rows 0..m: constraints; row m: objective (reduced costs of max problem).
    let mut t = vec![vec![0.0; width]; m + 1];
    for (i, e) in h.edges.iter().enumerate() {
        e.iter().for_each(|&v| t[i][v] = 1.0);
        t[i][k + i] = 1.0;
        t[i][rhs] = 1.0;
    }
    t[m][..k].iter_mut().for_each(|c| *c = -1.0);
    let mut basis: Vec<usize> = (k..k + m).collect();

    loop {
        let Some(col) = (0..k + m).find(|&j| t[m][j] < -PIVOT_TOL) else { break };
        let mut row = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let a = t[i][col];
            if a > PIVOT_TOL {
                let ratio = t[i][rhs] / a;
                let better = match row {
                    None => true,
                    Some(r) => ratio < best - PIVOT_TOL || (ratio <= best + PIVOT_TOL && basis[i] < basis[r]),
                };
                if better {
                    best = ratio;
                    row = Some(i);
                }
            }
        }
        let Some(row) = row else {
            return Err(ChromaError::State("packing LP unbounded despite every vertex being coverable".into()));
        };
        let p = t[row][col];
        t[row].iter_mut().for_each(|c| *c /= p);
        let pivot_row = t[row].clone();
        for (i, r) in t.iter_mut().enumerate() {
            if i != row {
                let f = r[col];
                if f != 0.0 {
                    r.iter_mut().zip(&pivot_row).for_each(|(c, q)| *c -= f * q);
                }
            }
        }
        basis[row] = col;
    }

    let value = t[m][rhs];
    let weights: Vec<f64> = (0..m).map(|i| t[m][k + i].max(0.0)).collect();
    let mut packing = vec![0.0; k];
    for (i, &b) in basis.iter().enumerate() {
        if b < k {
            packing[b] = t[i][rhs];
        }
    }
    certify(h, value, &weights, &packing)?;
    Ok(FractionalCover { value, weights, packing })
}

fn certify(h: &Hypergraph, value: f64, weights: &[f64], packing: &[f64]) -> Result<()> {
    let mut load = vec![0.0; h.vertices];
    for (e, w) in h.edges.iter().zip(weights) {
        e.iter().for_each(|&v| load[v] += w);
        let used: f64 = e.iter().map(|&v| packing[v]).sum();
        if used > 1.0 + LP_TOL {
            return Err(ChromaError::State(format!("packing violates an edge constraint: {used}")));
        }
    }
    if let Some(v) = load.iter().position(|&l| l < 1.0 - LP_TOL) {
        return Err(ChromaError::State(format!("cover weights leave vertex {v} at {}", load[v])));
    }
    let primal: f64 = weights.iter().sum();
    let dual: f64 = packing.iter().sum();
    if (primal - value).abs() > LP_TOL || (dual - value).abs() > LP_TOL {
        return Err(ChromaError::State(format!("duality gap: cover {primal}, packing {dual}, tableau {value}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};
    use rand::Rng;

    fn lp(k: usize, edges: Vec<Vec<usize>>) -> f64 {
        fractional_cover_exact(&Hypergraph::new(k, edges).unwrap()).unwrap().value
    }

    #[test]
    fn trivial_instances() {
        assert!((lp(6, vec![vec![0, 1], (0..6).collect()]) - 1.0).abs() < 1e-12);
        assert!((lp(5, (0..5).map(|v| vec![v]).collect()) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_is_three_halves() {
        assert!((lp(3, vec![vec![0, 1], vec![0, 2], vec![1, 2]]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn odd_cycle() {
        // C_5 with edges as vertex pairs: fractional cover 5/2.
        let edges = (0..5).map(|i| vec![i, (i + 1) % 5]).collect();
        assert!((lp(5, edges) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fano_plane() {
        // 7 lines of 3 points each, every point on 3 lines: 7/3.
        let lines = vec![
            vec![0, 1, 2], vec![0, 3, 4], vec![0, 5, 6], vec![1, 3, 5],
            vec![1, 4, 6], vec![2, 3, 6], vec![2, 4, 5],
        ];
        assert!((lp(7, lines) - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_vertex() {
        let h = Hypergraph::new(3, vec![vec![0, 1]]).unwrap();
        assert!(matches!(fractional_cover_exact(&h), Err(ChromaError::Infeasible { vertex: 2 })));
    }

    #[test]
    fn weak_duality_on_random_instances() {
        let mut rng = stream(11, tag::HYPERGRAPH, 0);
        for _ in 0..50 {
            let k = rng.random_range(1..=12);
            let m = rng.random_range(1..=30);
            let mut edges: Vec<Vec<usize>> = (0..m)
                .map(|_| (0..k).filter(|_| rng.random_bool(0.3)).collect())
                .collect();
            edges.push((0..k).filter(|v| v % 2 == 0).collect());
            edges.push((0..k).filter(|v| v % 2 == 1).collect());
            let h = Hypergraph::new(k, edges).unwrap();
            let f = fractional_cover_exact(&h).unwrap();
            let tau = h.exact_cover_number().unwrap() as f64;
            assert!(f.value <= tau + 1e-9);
            assert!(f.value >= k as f64 / h.max_edge() as f64 - 1e-9);
        }
    }

    #[test]
    fn size_limit() {
        let h = Hypergraph::new(101, vec![(0..101).collect()]).unwrap();
        assert!(matches!(fractional_cover_exact(&h), Err(ChromaError::InvalidParameter(_))));
    }
}
