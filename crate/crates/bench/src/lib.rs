//! Shared fixtures for the criterion benchmarks.

use glmfunk::{gen_beta, gen_design, gen_outcomes, hub_feature_graph, sample_icar, Family, Graph};
use ndarray::{Array1, Array2};

/// A moderate Poisson instance over a grid lattice with hub-structured
/// features.
pub struct BenchInstance {
    pub unit_graph: Graph,
    pub feature_graph: Graph,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

pub fn grid_graph(rows: usize, cols: usize) -> Graph {
    let idx = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((idx(r, c), idx(r, c + 1), 1.0));
            }
            if r + 1 < rows {
                edges.push((idx(r, c), idx(r + 1, c), 1.0));
            }
        }
    }
    Graph::new(rows * cols, edges).unwrap()
}

pub fn poisson_instance(rows: usize, cols: usize, p: usize, s: usize) -> BenchInstance {
    let unit_graph = grid_graph(rows, cols);
    let n = unit_graph.node_count();
    let alpha = sample_icar(&unit_graph, 0.3, 1).unwrap();
    let x = gen_design(n, p, s, 2).unwrap();
    let beta = gen_beta(p, s, 0.3).unwrap();
    let offsets = Array1::from_elem(n, -1.0);
    let y = gen_outcomes(Family::Poisson, &alpha, &x, &beta, Some(&offsets), 3).unwrap();
    let feature_graph = hub_feature_graph(p, s).unwrap();
    BenchInstance {
        unit_graph,
        feature_graph,
        x,
        y,
    }
}
