//! Weighted undirected graphs and the linear algebra derived from them:
//! Laplacians, incidence matrices, harmonic extension of node values, and
//! adjacency-constrained cross-validation folds.

use crate::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node index {index} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) has non-positive weight {w}")]
    NonPositiveWeight { i: usize, j: usize, w: f64 },
    #[error("expected {expected} training values, got {got}")]
    TrainLengthMismatch { expected: usize, got: usize },
    #[error("duplicate training node {0}")]
    DuplicateTrainNode(usize),
    #[error("fold count {k} exceeds node count {n}")]
    TooManyFolds { k: usize, n: usize },
    #[error("fold count must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("edge list parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("linear solve failed for the test-block Laplacian")]
    SolveFailed,
}

/// An undirected edge with a strictly positive weight. Endpoints are stored
/// with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Weighted undirected graph over nodes `0..node_count`, no self-loops, each
/// unordered pair at most once.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (i, j, w) in edges {
            if i >= node_count {
                return Err(GraphError::NodeOutOfRange {
                    index: i,
                    node_count,
                });
            }
            if j >= node_count {
                return Err(GraphError::NodeOutOfRange {
                    index: j,
                    node_count,
                });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if w <= 0.0 || !w.is_finite() {
                return Err(GraphError::NonPositiveWeight { i, j, w });
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if !seen.insert((a, b)) {
                return Err(GraphError::DuplicateEdge(a, b));
            }
            out.push(Edge { i: a, j: b, w });
        }
        out.sort_by_key(|e| (e.i, e.j));
        Ok(Graph {
            node_count,
            edges: out,
        })
    }

    /// Graph with no edges.
    pub fn empty(node_count: usize) -> Self {
        Graph {
            node_count,
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Array1<f64> {
        let mut d = Array1::zeros(self.node_count);
        for e in &self.edges {
            d[e.i] += e.w;
            d[e.j] += e.w;
        }
        d
    }

    /// Adjacency lists (neighbor indices only).
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        adj
    }

    /// Connected-component label for every node, labels are 0-based and
    /// assigned in order of the smallest node in each component.
    pub fn components(&self) -> Vec<usize> {
        let adj = self.adjacency_lists();
        let mut label = vec![usize::MAX; self.node_count];
        let mut next = 0;
        for start in 0..self.node_count {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Induced subgraph on `nodes` (need not be sorted; duplicates rejected).
    /// Returns the subgraph with nodes relabeled `0..nodes.len()` in the
    /// given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph, GraphError> {
        let mut pos = vec![usize::MAX; self.node_count];
        for (k, &v) in nodes.iter().enumerate() {
            if v >= self.node_count {
                return Err(GraphError::NodeOutOfRange {
                    index: v,
                    node_count: self.node_count,
                });
            }
            if pos[v] != usize::MAX {
                return Err(GraphError::DuplicateTrainNode(v));
            }
            pos[v] = k;
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| pos[e.i] != usize::MAX && pos[e.j] != usize::MAX)
            .map(|e| (pos[e.i], pos[e.j], e.w));
        Graph::new(nodes.len(), edges)
    }

    /// Parse the edge-list text format: one `i<TAB>j[<TAB>w]` edge per line,
    /// 0-based indices, weight defaults to 1.0, `#` lines ignored.
    /// The node count is `max index + 1` unless a larger count is given.
    pub fn parse_edge_list(text: &str, min_nodes: Option<usize>) -> Result<Self, GraphError> {
        let mut triplets = Vec::new();
        let mut max_node = 0usize;
        let mut any = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(GraphError::Parse {
                    line: lineno + 1,
                    msg: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let parse_idx = |s: &str| -> Result<usize, GraphError> {
                s.trim().parse().map_err(|_| GraphError::Parse {
                    line: lineno + 1,
                    msg: format!("invalid node index {s:?}"),
                })
            };
            let i = parse_idx(fields[0])?;
            let j = parse_idx(fields[1])?;
            let w = if fields.len() == 3 {
                fields[2].trim().parse().map_err(|_| GraphError::Parse {
                    line: lineno + 1,
                    msg: format!("invalid weight {:?}", fields[2]),
                })?
            } else {
                1.0
            };
            max_node = max_node.max(i).max(j);
            any = true;
            triplets.push((i, j, w));
        }
        let n = if any { max_node + 1 } else { 0 };
        Graph::new(n.max(min_nodes.unwrap_or(0)), triplets)
    }

    /// Serialize to the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for e in &self.edges {
            s.push_str(&format!("{}\t{}\t{}\n", e.i, e.j, e.w));
        }
        s
    }
}

/// Graph Laplacian L = D − A with the weighted degree vector.
#[derive(Debug, Clone)]
pub struct LaplacianView {
    pub matrix: CsrMatrix,
    pub degree: Array1<f64>,
}

impl LaplacianView {
    /// αᵀLα, evaluated as the weighted sum of squared edge differences.
    pub fn quadratic_form(&self, alpha: &Array1<f64>) -> f64 {
        self.matrix.quadratic_form(alpha.view())
    }

    /// Largest eigenvalue estimate by power iteration.
    pub fn max_eigenvalue(&self, steps: usize) -> f64 {
        // L is symmetric PSD so ‖L‖₂² = λ_max²
        self.matrix.spectral_norm_sq(steps).sqrt()
    }
}

/// Edge incidence matrix: row per edge (i, j) with `+w` at the lower index
/// `i` and `−w` at `j`.
#[derive(Debug, Clone)]
pub struct IncidenceView {
    pub matrix: CsrMatrix,
}

/// L = D − A.
pub fn laplacian(g: &Graph) -> LaplacianView {
    let n = g.node_count();
    let degree = g.degrees();
    let mut triplets = Vec::with_capacity(n + 2 * g.edge_count());
    for (i, &d) in degree.iter().enumerate() {
        if d != 0.0 {
            triplets.push((i, i, d));
        }
    }
    for e in g.edges() {
        triplets.push((e.i, e.j, -e.w));
        triplets.push((e.j, e.i, -e.w));
    }
    LaplacianView {
        matrix: CsrMatrix::from_triplets(n, n, triplets),
        degree,
    }
}

/// Signed edge incidence matrix; rows follow the graph's sorted edge order.
pub fn incidence(g: &Graph) -> IncidenceView {
    let triplets = g.edges().iter().enumerate().flat_map(|(r, e)| {
        [(r, e.i, e.w), (r, e.j, -e.w)]
    });
    IncidenceView {
        matrix: CsrMatrix::from_triplets(g.edge_count(), g.node_count(), triplets),
    }
}

/// Ridge added to the test-block Laplacian when it is singular (test
/// components with no training neighbors). Reproduces the zero-extension
/// convention on such components.
pub const DELTA_PRED: f64 = 1e-8;

/// Result of extending training-node values to the remaining nodes.
#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    /// Test nodes in ascending index order.
    pub test_nodes: Vec<usize>,
    /// Extended value per test node, aligned with `test_nodes`.
    pub values: Vec<f64>,
    /// Flags test nodes whose component contains no training node; those
    /// receive the value 0.
    pub no_train_component: Vec<bool>,
}

/// Minimize the Laplacian quadratic form over the unknown (test) node values
/// given values on `train_nodes`: solves L₂₂ α_tst = −L₂₁ α_trn.
pub fn harmonic_extend(
    g_full: &Graph,
    train_nodes: &[usize],
    alpha_train: &[f64],
) -> Result<HarmonicExtension, GraphError> {
    let n = g_full.node_count();
    if train_nodes.len() != alpha_train.len() {
        return Err(GraphError::TrainLengthMismatch {
            expected: train_nodes.len(),
            got: alpha_train.len(),
        });
    }
    let mut train_value = vec![f64::NAN; n];
    let mut is_train = vec![false; n];
    for (&v, &a) in train_nodes.iter().zip(alpha_train) {
        if v >= n {
            return Err(GraphError::NodeOutOfRange {
                index: v,
                node_count: n,
            });
        }
        if is_train[v] {
            return Err(GraphError::DuplicateTrainNode(v));
        }
        is_train[v] = true;
        train_value[v] = a;
    }

    let test_nodes: Vec<usize> = (0..n).filter(|&v| !is_train[v]).collect();
    let m = test_nodes.len();
    let mut test_pos = vec![usize::MAX; n];
    for (k, &v) in test_nodes.iter().enumerate() {
        test_pos[v] = k;
    }

    // components without any training node get the zero convention
    let comp = g_full.components();
    let mut comp_has_train = vec![false; n.max(1)];
    for &v in train_nodes {
        comp_has_train[comp[v]] = true;
    }
    let no_train_component: Vec<bool> = test_nodes
        .iter()
        .map(|&v| !comp_has_train[comp[v]])
        .collect();

    if m == 0 {
        return Ok(HarmonicExtension {
            test_nodes,
            values: Vec::new(),
            no_train_component,
        });
    }

    // assemble L22 and the right-hand side −L21 α_trn
    let mut l22 = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for e in g_full.edges() {
        match (test_pos[e.i], test_pos[e.j]) {
            (usize::MAX, usize::MAX) => {}
            (a, usize::MAX) => {
                l22[(a, a)] += e.w;
                rhs[a] += e.w * train_value[e.j];
            }
            (usize::MAX, b) => {
                l22[(b, b)] += e.w;
                rhs[b] += e.w * train_value[e.i];
            }
            (a, b) => {
                l22[(a, a)] += e.w;
                l22[(b, b)] += e.w;
                l22[(a, b)] -= e.w;
                l22[(b, a)] -= e.w;
            }
        }
    }

    let values = match l22.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            for d in 0..m {
                l22[(d, d)] += DELTA_PRED;
            }
            l22.cholesky().ok_or(GraphError::SolveFailed)?.solve(&rhs)
        }
    };

    Ok(HarmonicExtension {
        test_nodes,
        values: values.iter().copied().collect(),
        no_train_component,
    })
}

/// How many randomized coloring attempts before giving up on the adjacency
/// constraint.
pub const FOLD_RESTART_BUDGET: usize = 100;

/// K-fold assignment of graph nodes.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    /// Fold index in `0..k` per node.
    pub folds: Vec<usize>,
    pub k: usize,
    /// False when the adjacency constraint was requested but infeasible
    /// within the restart budget, in which case plain random folds are
    /// returned.
    pub constraint_satisfied: bool,
}

/// Random partition of nodes into `k` folds. With `adjacency_constraint`, no
/// two adjacent nodes share a fold (randomized greedy coloring with
/// restarts); infeasible instances fall back to unconstrained folds.
pub fn constrained_folds(
    g: &Graph,
    k: usize,
    seed: u64,
    adjacency_constraint: bool,
) -> Result<FoldAssignment, GraphError> {
    let n = g.node_count();
    if k < 2 {
        return Err(GraphError::TooFewFolds(k));
    }
    if k > n {
        return Err(GraphError::TooManyFolds { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if adjacency_constraint {
        let adj = g.adjacency_lists();
        for _ in 0..FOLD_RESTART_BUDGET {
            if let Some(folds) = try_greedy_coloring(n, k, &adj, &mut rng) {
                return Ok(FoldAssignment {
                    folds,
                    k,
                    constraint_satisfied: true,
                });
            }
        }
    }

    let folds = random_balanced_folds(n, k, &mut rng);
    Ok(FoldAssignment {
        folds,
        k,
        constraint_satisfied: !adjacency_constraint,
    })
}

fn random_balanced_folds(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![0usize; n];
    for (pos, &node) in order.iter().enumerate() {
        folds[node] = pos % k;
    }
    folds
}

/// One randomized balanced coloring attempt: visit nodes in random order,
/// assign each the least-occupied fold not used by an already-colored
/// neighbor, ties broken randomly. None when a node has no feasible fold.
fn try_greedy_coloring(
    n: usize,
    k: usize,
    adj: &[Vec<usize>],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![usize::MAX; n];
    let mut sizes = vec![0usize; k];
    for &node in &order {
        let mut blocked = vec![false; k];
        for &nb in &adj[node] {
            if folds[nb] != usize::MAX {
                blocked[folds[nb]] = true;
            }
        }
        let feasible: Vec<usize> = (0..k).filter(|&f| !blocked[f]).collect();
        if feasible.is_empty() {
            return None;
        }
        let min_size = feasible.iter().map(|&f| sizes[f]).min().unwrap();
        let best: Vec<usize> = feasible
            .into_iter()
            .filter(|&f| sizes[f] == min_size)
            .collect();
        let chosen = best[rng.random_range(0..best.len())];
        folds[node] = chosen;
        sizes[chosen] += 1;
    }
    Some(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn path3() -> Graph {
        Graph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_path_graph() {
        let l = laplacian(&path3()).matrix.to_dense();
        let expect = array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        assert_eq!(l, expect);
    }

    #[test]
    fn laplacian_single_node() {
        let l = laplacian(&Graph::empty(1)).matrix.to_dense();
        assert_eq!(l, array![[0.0]]);
    }

    #[test]
    fn laplacian_weighted_pair() {
        let g = Graph::new(2, vec![(0, 1, 2.0)]).unwrap();
        let l = laplacian(&g).matrix.to_dense();
        assert_eq!(l, array![[2.0, -2.0], [-2.0, 2.0]]);
    }

    #[test]
    fn incidence_single_edge() {
        let g = Graph::new(2, vec![(0, 1, 1.0)]).unwrap();
        let j = incidence(&g).matrix.to_dense();
        assert_eq!(j, array![[1.0, -1.0]]);
    }

    #[test]
    fn incidence_gram_equals_laplacian_for_unit_weights() {
        let g = Graph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let j = incidence(&g).matrix.to_dense();
        let l = laplacian(&g).matrix.to_dense();
        let jtj = j.t().dot(&j);
        assert_abs_diff_eq!(jtj, l, epsilon = 1e-14);
    }

    #[test]
    fn incidence_gram_differs_for_weighted_edge() {
        let g = Graph::new(2, vec![(0, 1, 3.0)]).unwrap();
        let j = incidence(&g).matrix.to_dense();
        assert_eq!(j, array![[3.0, -3.0]]);
        let jtj = j.t().dot(&j);
        assert_eq!(jtj, array![[9.0, -9.0], [-9.0, 9.0]]);
        let l = laplacian(&g).matrix.to_dense();
        assert_eq!(l, array![[3.0, -3.0], [-3.0, 3.0]]);
        assert_ne!(jtj, l);
    }

    #[test]
    fn graph_rejects_invalid_edges() {
        assert!(matches!(
            Graph::new(2, vec![(0, 0, 1.0)]),
            Err(GraphError::SelfLoop(0))
        ));
        assert!(matches!(
            Graph::new(2, vec![(0, 1, 1.0), (1, 0, 2.0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            Graph::new(2, vec![(0, 1, 0.0)]),
            Err(GraphError::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            Graph::new(2, vec![(0, 3, 1.0)]),
            Err(GraphError::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn harmonic_extension_averages_train_neighbors() {
        // node 2 is a test node tied to train nodes 0 and 1
        let g = Graph::new(3, vec![(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let ext = harmonic_extend(&g, &[0, 1], &[0.2, 0.4]).unwrap();
        assert_eq!(ext.test_nodes, vec![2]);
        assert_abs_diff_eq!(ext.values[0], 0.3, epsilon = 1e-12);
        assert!(!ext.no_train_component[0]);
    }

    #[test]
    fn harmonic_extension_isolated_node_is_zero() {
        let g = Graph::new(3, vec![(0, 1, 1.0)]).unwrap();
        let ext = harmonic_extend(&g, &[0, 1], &[1.0, 2.0]).unwrap();
        assert_eq!(ext.test_nodes, vec![2]);
        assert_eq!(ext.values[0], 0.0);
        assert!(ext.no_train_component[0]);
    }

    #[test]
    fn harmonic_extension_chain() {
        // train node 0 with alpha 1, test chain 1 - 2
        let g = Graph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let ext = harmonic_extend(&g, &[0], &[1.0]).unwrap();
        assert_eq!(ext.test_nodes, vec![1, 2]);
        assert_abs_diff_eq!(ext.values[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ext.values[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn harmonic_extension_rejects_bad_input() {
        let g = path3();
        assert!(matches!(
            harmonic_extend(&g, &[0, 1], &[1.0]),
            Err(GraphError::TrainLengthMismatch { .. })
        ));
        assert!(matches!(
            harmonic_extend(&g, &[7], &[1.0]),
            Err(GraphError::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn folds_balanced_without_edges() {
        let g = Graph::empty(4);
        let f = constrained_folds(&g, 2, 7, true).unwrap();
        assert!(f.constraint_satisfied);
        let c0 = f.folds.iter().filter(|&&x| x == 0).count();
        assert_eq!(c0, 2);
        let again = constrained_folds(&g, 2, 7, true).unwrap();
        assert_eq!(f.folds, again.folds);
    }

    #[test]
    fn folds_triangle_three_folds() {
        let g = Graph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let f = constrained_folds(&g, 3, 1, true).unwrap();
        assert!(f.constraint_satisfied);
        let mut sorted = f.folds.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn folds_triangle_two_folds_falls_back() {
        let g = Graph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let f = constrained_folds(&g, 2, 1, true).unwrap();
        assert!(!f.constraint_satisfied);
        assert_eq!(f.folds.len(), 3);
    }

    #[test]
    fn folds_reject_k_larger_than_n() {
        let g = Graph::empty(2);
        assert!(matches!(
            constrained_folds(&g, 3, 0, false),
            Err(GraphError::TooManyFolds { .. })
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::new(4, vec![(0, 1, 1.5), (2, 3, 1.0)]).unwrap();
        let text = g.to_edge_list();
        let h = Graph::parse_edge_list(&text, Some(4)).unwrap();
        assert_eq!(h.node_count(), 4);
        assert_eq!(h.edges(), g.edges());
    }

    #[test]
    fn edge_list_defaults_and_comments() {
        let text = "# comment\n0\t1\n1\t2\t0.5\n";
        let g = Graph::parse_edge_list(text, None).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges()[0].w, 1.0);
        assert_eq!(g.edges()[1].w, 0.5);
    }

    #[test]
    fn induced_subgraph_relabels() {
        let g = Graph::new(4, vec![(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0)]).unwrap();
        let sub = g.induced_subgraph(&[1, 2]).unwrap();
        assert_eq!(sub.node_count(), 2);
        assert_eq!(sub.edges().len(), 1);
        assert_eq!(sub.edges()[0], Edge { i: 0, j: 1, w: 2.0 });
    }
}
