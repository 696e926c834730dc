//! Weighted, delayed directed graph.
//!
//! Terminology note: the Laplacian follows `L = D - A` with `D` holding the
//! row sums of `A`, i.e. the total weight a node *receives*. Some texts call
//! this quantity the in-degree; here it is the diagonal of `D` regardless of
//! name.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed link: `dst` hears `src` with amplitude `gain` after `delay_s`
/// seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub dst: usize,
    pub src: usize,
    pub gain: f64,
    pub delay_s: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<Edge>,
}

/// Directed graph with positive gains and finite nonnegative delays.
///
/// Edges are kept sorted by `(dst, src)` so that the links heard by node `i`
/// form the contiguous slice returned by [`Digraph::incoming`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Digraph {
    n: usize,
    edges: Vec<Edge>,
    row_start: Vec<usize>,
}

impl Digraph {
    pub fn new(n: usize, mut edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("node count must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.dst >= n || e.src >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 0..{n}",
                    e.dst, e.src
                )));
            }
            if e.dst == e.src {
                return Err(Error::InvalidGraph(format!("self-loop on node {}", e.dst)));
            }
            if !(e.gain.is_finite() && e.gain > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has non-positive gain {}",
                    e.dst, e.src, e.gain
                )));
            }
            if !(e.delay_s.is_finite() && e.delay_s >= 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has invalid delay {}",
                    e.dst, e.src, e.delay_s
                )));
            }
            if !seen.insert((e.dst, e.src)) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.dst, e.src
                )));
            }
        }
        edges.sort_by_key(|e| (e.dst, e.src));
        let mut row_start = vec![0; n + 1];
        for e in &edges {
            row_start[e.dst + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        Ok(Self {
            n,
            edges,
            row_start,
        })
    }

    /// Convenience constructor from `(dst, src, gain, delay_s)` tuples.
    pub fn from_tuples(n: usize, edges: &[(usize, usize, f64, f64)]) -> Result<Self> {
        Self::new(
            n,
            edges
                .iter()
                .map(|&(dst, src, gain, delay_s)| Edge {
                    dst,
                    src,
                    gain,
                    delay_s,
                })
                .collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Links heard by node `i`, sorted by source.
    pub fn incoming(&self, i: usize) -> &[Edge] {
        &self.edges[self.row_start[i]..self.row_start[i + 1]]
    }

    /// Total gain received by node `i` (row sum of the adjacency matrix).
    pub fn inflow(&self, i: usize) -> f64 {
        self.incoming(i).iter().map(|e| e.gain).sum()
    }

    /// Total gain node `j` delivers to its listeners (column sum).
    pub fn outflow(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for e in &self.edges {
            out[e.src] += e.gain;
        }
        out
    }

    pub fn max_delay(&self) -> f64 {
        self.edges.iter().map(|e| e.delay_s).fold(0.0, f64::max)
    }

    /// Same topology and gains with every delay replaced by `f(edge)`.
    pub fn with_delays(&self, mut f: impl FnMut(&Edge) -> f64) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                delay_s: f(e),
                ..*e
            })
            .collect();
        Self::new(self.n, edges)
    }
}

impl TryFrom<GraphJson> for Digraph {
    type Error = Error;

    fn try_from(value: GraphJson) -> Result<Self> {
        Digraph::new(value.n, value.edges)
    }
}

impl From<Digraph> for GraphJson {
    fn from(g: Digraph) -> Self {
        GraphJson {
            n: g.n,
            edges: g.edges,
        }
    }
}

/// `L = D - A` with `A[i][j] = a_ij` and `D` the diagonal of row sums of `A`.
pub fn laplacian(g: &Digraph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        l[(e.dst, e.src)] -= e.gain;
        l[(e.dst, e.dst)] += e.gain;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_laplacian() {
        let g = Digraph::from_tuples(2, &[(0, 1, 1.0, 0.0)]).unwrap();
        let l = laplacian(&g);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn empty_graph_laplacian_is_zero() {
        let g = Digraph::new(3, vec![]).unwrap();
        assert_eq!(laplacian(&g), DMatrix::zeros(3, 3));
    }

    #[test]
    fn cycle_laplacian_rows() {
        // 0 <- 1 <- 2 <- 0
        let g = Digraph::from_tuples(3, &[(0, 1, 1.0, 0.0), (1, 2, 1.0, 0.0), (2, 0, 1.0, 0.0)])
            .unwrap();
        let l = laplacian(&g);
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0, 1.0]);
        assert_eq!(l, expected);
        for r in 0..3 {
            assert_eq!(l.row(r).sum(), 0.0);
        }
    }

    #[test]
    fn rejects_malformed_edges() {
        assert!(Digraph::new(0, vec![]).is_err());
        assert!(Digraph::from_tuples(2, &[(0, 0, 1.0, 0.0)]).is_err());
        assert!(Digraph::from_tuples(2, &[(0, 2, 1.0, 0.0)]).is_err());
        assert!(Digraph::from_tuples(2, &[(0, 1, 0.0, 0.0)]).is_err());
        assert!(Digraph::from_tuples(2, &[(0, 1, 1.0, -1.0)]).is_err());
        assert!(Digraph::from_tuples(2, &[(0, 1, 1.0, f64::INFINITY)]).is_err());
        assert!(Digraph::from_tuples(2, &[(0, 1, 1.0, 0.0), (0, 1, 2.0, 0.0)]).is_err());
    }

    #[test]
    fn json_duplicate_pair_is_load_error() {
        let text = r#"{"n": 2, "edges": [
            {"dst": 0, "src": 1, "gain": 1.0, "delay_s": 0.0},
            {"dst": 0, "src": 1, "gain": 0.5, "delay_s": 0.1}]}"#;
        let err = Digraph::from_json(text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let g = Digraph::from_tuples(3, &[(2, 0, 0.25, 0.05), (0, 1, 1.5, 0.0)]).unwrap();
        let back = Digraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        assert_eq!(back.incoming(0)[0].src, 1);
    }

    #[test]
    fn incoming_slices_are_grouped() {
        let g = Digraph::from_tuples(3, &[(2, 1, 1.0, 0.0), (0, 2, 1.0, 0.0), (2, 0, 3.0, 0.0)])
            .unwrap();
        assert_eq!(g.incoming(0).len(), 1);
        assert!(g.incoming(1).is_empty());
        assert_eq!(g.inflow(2), 4.0);
        assert_eq!(g.outflow(), vec![3.0, 1.0, 1.0]);
    }
}
