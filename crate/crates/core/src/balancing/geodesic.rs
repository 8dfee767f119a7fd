//! Treatment-topology graphs and the isometry penalty that pulls treatment
//! embeddings toward the graph's shortest-path metric.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::matrix::{sq_dist, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    dist: Matrix,
}

impl GeodesicGraph {
    /// Undirected graph with hop-count distances. Must be connected.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); nodes];
        for &(a, b) in edges {
            if a >= nodes || b >= nodes {
                return Err(Error::InvalidArgument(format!("edge ({a},{b}) outside {nodes} nodes")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = Matrix::zeros(nodes, nodes);
        for src in 0..nodes {
            let mut seen = vec![usize::MAX; nodes];
            seen[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if seen[v] == usize::MAX {
                        seen[v] = seen[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if let Some(unreached) = seen.iter().position(|&d| d == usize::MAX) {
                return Err(Error::InvalidArgument(format!("graph disconnected: {src} cannot reach {unreached}")));
            }
            for (dst, &d) in seen.iter().enumerate() {
                dist.set(src, dst, d as f64);
            }
        }
        Ok(Self {
            nodes,
            edges: edges.to_vec(),
            dist,
        })
    }

    pub fn path(nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..nodes).map(|i| (i - 1, i)).collect();
        Self::from_edges(nodes, &edges)
    }

    pub fn cycle(nodes: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..nodes).map(|i| (i - 1, i)).collect();
        if nodes > 2 {
            edges.push((nodes - 1, 0));
        }
        Self::from_edges(nodes, &edges)
    }

    /// Complete binary tree in heap order: node `i` has children `2i+1`, `2i+2`.
    pub fn binary_tree(depth: u32) -> Result<Self> {
        let nodes = (1usize << depth) - 1;
        let edges: Vec<_> = (1..nodes).map(|i| ((i - 1) / 2, i)).collect();
        Self::from_edges(nodes, &edges)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist.get(a, b)
    }

    pub fn distances(&self) -> &Matrix {
        &self.dist
    }
}

/// Mean over ordered pairs `i ≠ j` of `(‖e_i − e_j‖ − d(i, j))²`, with its
/// gradient with respect to the embedding table.
pub fn geodesic_penalty(table: &Matrix, graph: &GeodesicGraph, want_grad: bool) -> Result<(f64, Option<Matrix>)> {
    let k = table.rows();
    if k < 2 {
        return Err(Error::Degenerate(format!("geodesic penalty needs >= 2 treatments, got {k}")));
    }
    if k != graph.nodes() {
        return Err(Error::shape("geodesic_penalty", graph.nodes(), k));
    }
    let pairs = (k * (k - 1)) as f64;
    let mut value = 0.0;
    let mut grad = want_grad.then(|| Matrix::zeros(k, table.cols()));
    for i in 0..k {
        for j in i + 1..k {
            let dist = sq_dist(table.row(i), table.row(j)).sqrt();
            let dev = dist - graph.distance(i, j);
            // each unordered pair counts twice
            value += 2.0 * dev * dev;
            if let Some(g) = grad.as_mut() {
                if dist > 0.0 {
                    let coef = 4.0 * dev / (dist * pairs);
                    for c in 0..table.cols() {
                        let diff = table.get(i, c) - table.get(j, c);
                        g.add_at(i, c, coef * diff);
                        g.add_at(j, c, -coef * diff);
                    }
                }
            }
        }
    }
    Ok((value / pairs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hop_distances() {
        let c = GeodesicGraph::cycle(8).unwrap();
        assert_eq!(c.distance(0, 7), 1.0);
        assert_eq!(c.distance(0, 4), 4.0);
        let t = GeodesicGraph::binary_tree(3).unwrap();
        assert_eq!(t.nodes(), 7);
        assert_eq!(t.distance(3, 6), 4.0);
        assert_eq!(t.distance(3, 4), 2.0);
        assert!(GeodesicGraph::from_edges(3, &[(0, 1)]).is_err());
    }

    #[test]
    fn metric_axioms_hold() {
        for g in [GeodesicGraph::cycle(8).unwrap(), GeodesicGraph::binary_tree(3).unwrap()] {
            let n = g.nodes();
            for a in 0..n {
                assert_eq!(g.distance(a, a), 0.0);
                for b in 0..n {
                    assert_eq!(g.distance(a, b), g.distance(b, a));
                    for c in 0..n {
                        assert!(g.distance(a, c) <= g.distance(a, b) + g.distance(b, c));
                    }
                }
            }
        }
    }

    #[test]
    fn penalty_hand_values() {
        let g = GeodesicGraph::path(2).unwrap();
        let exact = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(geodesic_penalty(&exact, &g, false).unwrap().0.abs() < 1e-15);
        let collapsed = Matrix::zeros(2, 2);
        assert!((geodesic_penalty(&collapsed, &g, false).unwrap().0 - 1.0).abs() < 1e-15);
        let line = Matrix::column(&[0.0, 1.0, 2.0]);
        assert!(geodesic_penalty(&line, &GeodesicGraph::path(3).unwrap(), false).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn penalty_needs_two_nodes() {
        let g = GeodesicGraph::path(1).unwrap();
        assert!(matches!(geodesic_penalty(&Matrix::zeros(1, 2), &g, false), Err(Error::Degenerate(_))));
    }
}
