//! Finite hypergraphs, the greedy cover, and exact covering numbers for
//! small instances.

use serde::{Deserialize, Serialize};

use crate::error::{ChromaError, Result};

/// Vertices `0..vertices`; each edge is a sorted, deduplicated vertex list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypergraph {
    pub vertices: usize,
    pub edges: Vec<Vec<usize>>,
}

/// Fixed-width bitset over the vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Bits(Vec<u64>);

impl Bits {
    pub(crate) fn empty(len: usize) -> Self {
        Bits(vec![0; len.div_ceil(64)])
    }

    pub(crate) fn full(len: usize) -> Self {
        let mut b = Bits::empty(len);
        for v in 0..len {
            b.set(v);
        }
        b
    }

    pub(crate) fn set(&mut self, v: usize) {
        self.0[v / 64] |= 1 << (v % 64);
    }

    pub(crate) fn get(&self, v: usize) -> bool {
        self.0[v / 64] >> (v % 64) & 1 == 1
    }

    pub(crate) fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub(crate) fn overlap(&self, other: &Bits) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    pub(crate) fn remove_all(&mut self, other: &Bits) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a &= !b);
    }

    pub(crate) fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(i, &w)| {
            (0..64).filter(move |b| w >> b & 1 == 1).map(move |b| i * 64 + b)
        })
    }
}

impl Hypergraph {
    pub fn new(vertices: usize, edges: Vec<Vec<usize>>) -> Result<Self> {
        let mut clean = Vec::with_capacity(edges.len());
        for mut e in edges {
            e.sort_unstable();
            e.dedup();
            if let Some(&v) = e.last() {
                if v >= vertices {
                    return Err(ChromaError::domain(format!("edge vertex {v} out of range 0..{vertices}")));
                }
            }
            clean.push(e);
        }
        Ok(Hypergraph { vertices, edges: clean })
    }

    pub fn max_edge(&self) -> usize {
        self.edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub(crate) fn edge_bits(&self) -> Vec<Bits> {
        self.edges
            .iter()
            .map(|e| {
                let mut b = Bits::empty(self.vertices);
                e.iter().for_each(|&v| b.set(v));
                b
            })
            .collect()
    }

    /// Vertices in no edge.
    pub fn uncoverable(&self) -> Vec<usize> {
        let mut hit = Bits::empty(self.vertices);
        self.edges.iter().flatten().for_each(|&v| hit.set(v));
        (0..self.vertices).filter(|&v| !hit.get(v)).collect()
    }

    /// Greedy cover: repeatedly takes the edge covering the most uncovered
    /// vertices, lowest edge index on ties. Returns chosen edge indices in
    /// selection order.
    pub fn greedy_cover(&self) -> Result<Vec<usize>> {
        let bits = self.edge_bits();
        let mut uncovered = Bits::full(self.vertices);
        let mut chosen = Vec::new();
        while uncovered.count() > 0 {
            let mut best = None;
            let mut best_gain = 0;
            for (i, e) in bits.iter().enumerate() {
                let gain = e.overlap(&uncovered);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(i);
                }
            }
            let Some(i) = best else {
                return Err(ChromaError::IncompleteCover { uncovered: uncovered.ones().collect() });
            };
            uncovered.remove_all(&bits[i]);
            chosen.push(i);
        }
        Ok(chosen)
    }

    /// Whether the listed edges cover every vertex.
    pub fn is_cover(&self, chosen: &[usize]) -> bool {
        let mut hit = Bits::empty(self.vertices);
        chosen.iter().flat_map(|&i| &self.edges[i]).for_each(|&v| hit.set(v));
        hit.count() == self.vertices
    }

    /// Minimum number of edges covering all vertices, by branch and bound on
    /// the lowest uncovered vertex. Exponential; meant for small instances.
    pub fn exact_cover_number(&self) -> Result<usize> {
        if let Some(&v) = self.uncoverable().first() {
            return Err(ChromaError::Infeasible { vertex: v });
        }
        let bits = self.edge_bits();
        let mut containing: Vec<Vec<usize>> = vec![Vec::new(); self.vertices];
        for (i, e) in self.edges.iter().enumerate() {
            e.iter().for_each(|&v| containing[v].push(i));
        }
        let max_edge = self.max_edge().max(1);
        let mut best = self.greedy_cover()?.len();
        let mut uncovered = Bits::full(self.vertices);
        search(&bits, &containing, max_edge, &mut uncovered, 0, &mut best);
        Ok(best)
    }
}

fn search(bits: &[Bits], containing: &[Vec<usize>], max_edge: usize, uncovered: &mut Bits, used: usize, best: &mut usize) {
    let left = uncovered.count();
    if left == 0 {
        *best = (*best).min(used);
        return;
    }
    if used + left.div_ceil(max_edge) >= *best {
        return;
    }
    let v = uncovered.ones().next().expect("nonzero count");
    for &e in &containing[v] {
        let saved = uncovered.clone();
        uncovered.remove_all(&bits[e]);
        search(bits, containing, max_edge, uncovered, used + 1, best);
        *uncovered = saved;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_full_edge() {
        let h = Hypergraph::new(5, vec![vec![0, 1], (0..5).collect(), vec![3]]).unwrap();
        assert_eq!(h.greedy_cover().unwrap(), vec![1]);
        assert_eq!(h.exact_cover_number().unwrap(), 1);
    }

    #[test]
    fn singletons() {
        let h = Hypergraph::new(4, (0..4).map(|v| vec![v]).collect()).unwrap();
        assert_eq!(h.greedy_cover().unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(h.exact_cover_number().unwrap(), 4);
    }

    #[test]
    fn incomplete_cover_reports_uncovered() {
        let h = Hypergraph::new(4, vec![vec![0, 2]]).unwrap();
        match h.greedy_cover() {
            Err(ChromaError::IncompleteCover { uncovered }) => assert_eq!(uncovered, vec![1, 3]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(h.exact_cover_number(), Err(ChromaError::Infeasible { vertex: 1 })));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let h = Hypergraph::new(4, vec![vec![2, 3], vec![0, 1], vec![1, 2]]).unwrap();
        assert_eq!(h.greedy_cover().unwrap(), vec![0, 1]);
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        // Greedy takes the big middle edge first and then needs both halves.
        let h = Hypergraph::new(
            6,
            vec![vec![0, 1, 2], vec![3, 4, 5], vec![1, 2, 3, 4]],
        )
        .unwrap();
        assert_eq!(h.greedy_cover().unwrap().len(), 3);
        assert_eq!(h.exact_cover_number().unwrap(), 2);
    }

    #[test]
    fn out_of_range_vertex() {
        assert!(Hypergraph::new(2, vec![vec![0, 2]]).is_err());
    }
}
