//! Signed weighted undirected graphs, their Laplacians, node-set pairs and
//! Kron reduction.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{schur_complement, SymMatrix};

/// Reduced edges with `|w|` below this are dropped.
pub const KRON_PRUNE: f64 = 1e-12;

/// Undirected edge stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected graph with nonzero real edge weights of either sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGraph {
    n: usize,
    edges: Vec<Edge>,
    labels: Option<Vec<String>>,
}

impl SignedGraph {
    /// Rejects self-loops, duplicate pairs, zero or non-finite weights and
    /// out-of-range endpoints. Edges are stored with the lower index first.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if w == 0.0 || !w.is_finite() {
                return Err(Error::InvalidGraph(format!("edge ({a},{b}) has weight {w}")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
            out.push(Edge { i, j, w });
        }
        Ok(SignedGraph {
            n,
            edges: out,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::InvalidGraph("label count differs from node count".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of node `i`, falling back to its index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    pub fn negative_edges(&self) -> Vec<Edge> {
        self.edges.iter().copied().filter(|e| e.w < 0.0).collect()
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    pub fn ensure_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::Disconnected)
        }
    }
}

/// Two disjoint nonempty node sets; the complement is derived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSetPair {
    n: usize,
    a: Vec<usize>,
    b: Vec<usize>,
}

impl NodeSetPair {
    /// Sets are sorted and deduplicated.
    pub fn new(n: usize, a: &[usize], b: &[usize]) -> Result<Self> {
        let norm = |s: &[usize]| {
            let mut v = s.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let (a, b) = (norm(a), norm(b));
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidPair("both node sets must be nonempty".into()));
        }
        if let Some(&bad) = a.iter().chain(&b).find(|&&k| k >= n) {
            return Err(Error::InvalidPair(format!("node {bad} out of range")));
        }
        if a.iter().any(|k| b.binary_search(k).is_ok()) {
            return Err(Error::InvalidPair("node sets overlap".into()));
        }
        Ok(NodeSetPair { n, a, b })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    /// Nodes in neither set, ascending.
    pub fn c(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|k| self.a.binary_search(k).is_err() && self.b.binary_search(k).is_err())
            .collect()
    }

    pub fn swapped(&self) -> NodeSetPair {
        NodeSetPair {
            n: self.n,
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}

/// Nested chain over a base set, stored as a visiting order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequentialInclusion {
    order: Vec<usize>,
}

impl SequentialInclusion {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut s = order.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != order.len() {
            return Err(Error::InvalidPair("sequential inclusion repeats a node".into()));
        }
        Ok(SequentialInclusion { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The first `k` nodes.
    pub fn prefix(&self, k: usize) -> &[usize] {
        &self.order[..k]
    }
}

/// Oriented incidence matrix, each edge from its lower to its higher endpoint.
pub fn incidence_matrix(g: &SignedGraph) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(g.n, g.edges.len());
    for (k, edge) in g.edges.iter().enumerate() {
        e[(edge.i, k)] = 1.0;
        e[(edge.j, k)] = -1.0;
    }
    e
}

pub fn laplacian(g: &SignedGraph) -> SymMatrix {
    let mut l = DMatrix::zeros(g.n, g.n);
    for e in &g.edges {
        l[(e.i, e.i)] += e.w;
        l[(e.j, e.j)] += e.w;
        l[(e.i, e.j)] -= e.w;
        l[(e.j, e.i)] -= e.w;
    }
    SymMatrix::new(l)
}

/// Builds a graph from a Laplacian-shaped matrix, dropping tiny couplings.
pub(crate) fn graph_from_laplacian(l: &SymMatrix, prune: f64) -> Result<SignedGraph> {
    let n = l.order();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = -l[(i, j)];
            if w.abs() >= prune {
                edges.push((i, j, w));
            }
        }
    }
    SignedGraph::new(n, edges)
}

/// Eliminates `eliminate` via the Schur complement. Node `k` of the result is
/// the `k`-th retained node in ascending order and keeps its label.
pub fn kron_reduce(g: &SignedGraph, eliminate: &[usize]) -> Result<SignedGraph> {
    let mut drop = vec![false; g.n];
    for &k in eliminate {
        if k >= g.n {
            return Err(Error::InvalidGraph(format!("node {k} out of range")));
        }
        drop[k] = true;
    }
    let keep: Vec<usize> = (0..g.n).filter(|&k| !drop[k]).collect();
    if keep.len() < 2 {
        return Err(Error::InvalidGraph("Kron reduction must retain at least two nodes".into()));
    }
    let s = schur_complement(&laplacian(g), &keep).map_err(|e| match e {
        Error::SingularBlock(m) => Error::SingularBlock(format!("eliminated block is singular, reduction is nonphysical ({m})")),
        other => other,
    })?;
    let labels = keep.iter().map(|&k| g.label(k)).collect();
    graph_from_laplacian(&s, KRON_PRUNE)?.with_labels(labels)
}

/// `Pᵀ·L·P` with cluster `a` at index 0, cluster `b` at 1, then `V_c` ascending.
pub fn cluster_laplacian(g: &SignedGraph, pair: &NodeSetPair) -> SymMatrix {
    cluster_matrix(&laplacian(g), pair)
}

pub(crate) fn cluster_matrix(l: &SymMatrix, pair: &NodeSetPair) -> SymMatrix {
    let c = pair.c();
    let n = l.order();
    let mut p = DMatrix::zeros(n, c.len() + 2);
    for &k in pair.a() {
        p[(k, 0)] = 1.0;
    }
    for &k in pair.b() {
        p[(k, 1)] = 1.0;
    }
    for (col, &k) in c.iter().enumerate() {
        p[(k, col + 2)] = 1.0;
    }
    SymMatrix::new(p.transpose() * l.matrix() * p)
}

/// Endpoints of negative-weight edges, ascending.
pub fn negative_nodes(g: &SignedGraph) -> Vec<usize> {
    let mut v: Vec<usize> = g
        .edges
        .iter()
        .filter(|e| e.w < 0.0)
        .flat_map(|e| [e.i, e.j])
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `density`, positive weights in `[0.5, 2)`, and `n_negative`
/// edges (capped at the edge count) flipped to weights in `[-1.5, -0.05)`.
pub fn random_connected<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64, n_negative: usize) -> SignedGraph {
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    let tree: HashSet<(usize, usize)> = pairs.iter().copied().collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if !tree.contains(&(i, j)) && rng.gen_bool(density) {
                pairs.push((i, j));
            }
        }
    }
    pairs.shuffle(rng);
    let edges: Vec<(usize, usize, f64)> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let w = if k < n_negative { -rng.gen_range(0.05..1.5) } else { rng.gen_range(0.5..2.0) };
            (i, j, w)
        })
        .collect();
    SignedGraph::new(n.max(1), edges).expect("generated edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SignedGraph {
        SignedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert!(SignedGraph::new(2, [(0, 0, 1.0)]).is_err());
        assert!(SignedGraph::new(2, [(0, 1, 0.0)]).is_err());
        assert!(SignedGraph::new(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(SignedGraph::new(2, [(0, 2, 1.0)]).is_err());
        let g = SignedGraph::new(2, [(1, 0, 2.0)]).unwrap();
        assert_eq!(g.edges()[0], Edge { i: 0, j: 1, w: 2.0 });
    }

    #[test]
    fn connectivity() {
        assert!(triangle().is_connected());
        let g = SignedGraph::new(3, [(0, 1, 1.0)]).unwrap();
        assert!(!g.is_connected());
        assert_eq!(g.ensure_connected(), Err(Error::Disconnected));
    }

    #[test]
    fn incidence_single_edge_and_triangle() {
        let g = SignedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(incidence_matrix(&g), DMatrix::from_column_slice(2, 1, &[1.0, -1.0]));
        let e = incidence_matrix(&triangle());
        assert_eq!(e.shape(), (3, 3));
        for k in 0..3 {
            assert_eq!(e.column(k).sum(), 0.0);
        }
    }

    #[test]
    fn laplacian_equals_ewet() {
        let g = SignedGraph::new(4, [(0, 1, -0.5), (1, 2, 2.0), (2, 3, 1.0), (0, 3, 3.0), (0, 2, 0.7)]).unwrap();
        let e = incidence_matrix(&g);
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(5, g.edges().iter().map(|e| e.w)));
        let ewe = &e * w * e.transpose();
        assert!((laplacian(&g).matrix() - ewe).amax() < 1e-14);
    }

    #[test]
    fn laplacian_examples() {
        let g = SignedGraph::new(2, [(0, 1, 2.0)]).unwrap();
        assert_eq!(laplacian(&g).matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        let c = SignedGraph::new(4, [(0, 1, -1.0 / 3.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]).unwrap();
        let l = laplacian(&c);
        assert!((l[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        for i in 0..4 {
            assert!(l.matrix().row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn kron_examples() {
        let r = kron_reduce(&triangle(), &[2]).unwrap();
        assert_eq!(r.node_count(), 2);
        assert!((r.edges()[0].w - 1.5).abs() < 1e-12);
        let path = SignedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let r = kron_reduce(&path, &[1]).unwrap();
        assert!((r.edges()[0].w - 0.5).abs() < 1e-12);
        assert_eq!(r.labels().unwrap(), &["0".to_string(), "2".to_string()]);
    }

    #[test]
    fn kron_needs_two_retained() {
        assert!(kron_reduce(&triangle(), &[0, 1]).is_err());
    }

    #[test]
    fn kron_singular_block() {
        let g = SignedGraph::new(3, [(0, 2, 1.0), (2, 1, -1.0), (0, 1, 1.0)]).unwrap();
        assert!(matches!(kron_reduce(&g, &[2]), Err(Error::SingularBlock(_))));
    }

    #[test]
    fn cluster_examples() {
        let g = SignedGraph::new(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]).unwrap();
        let pair = NodeSetPair::new(3, &[0, 1], &[2]).unwrap();
        let p = cluster_laplacian(&g, &pair);
        assert_eq!(p.order(), 2);
        assert!((p[(0, 0)] - 5.0).abs() < 1e-14);
        assert!((p[(0, 1)] + 5.0).abs() < 1e-14);
        let single = NodeSetPair::new(3, &[2], &[0]).unwrap();
        let p = cluster_laplacian(&g, &single);
        let l = laplacian(&g);
        let perm = [2, 0, 1];
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(p[(r, c)], l[(perm[r], perm[c])]);
            }
        }
    }

    #[test]
    fn negative_node_examples() {
        assert!(negative_nodes(&triangle()).is_empty());
        let c = SignedGraph::new(4, [(0, 1, -1.0 / 3.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]).unwrap();
        assert_eq!(negative_nodes(&c), vec![0, 1]);
    }

    #[test]
    fn pair_validation() {
        assert!(NodeSetPair::new(3, &[], &[1]).is_err());
        assert!(NodeSetPair::new(3, &[0, 1], &[1]).is_err());
        assert!(NodeSetPair::new(3, &[0], &[5]).is_err());
        let p = NodeSetPair::new(5, &[3, 1], &[0]).unwrap();
        assert_eq!(p.a(), &[1, 3]);
        assert_eq!(p.c(), vec![2, 4]);
    }

    #[test]
    fn sequential_inclusion_prefixes() {
        let s = SequentialInclusion::new(vec![3, 1, 4]).unwrap();
        assert_eq!(s.prefix(2), &[3, 1]);
        assert!(SequentialInclusion::new(vec![1, 1]).is_err());
    }
}
