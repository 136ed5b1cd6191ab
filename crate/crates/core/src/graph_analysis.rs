//! Network views of a co-trading matrix: maximum spanning tree, top-fraction
//! edge thresholding, eigenvector centrality and the sector meta-network.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected edges with `i < j`, no duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<Edge>,
}

impl EdgeList {
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `(i, j)` pairs, handy for set comparisons.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }
}

/// Result of Kruskal's algorithm on the positive-weight graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningForest {
    pub edges: EdgeList,
    /// `true` when the tree spans all vertices (`n − 1` edges).
    pub connected: bool,
    pub components: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
        true
    }
}

fn check_square(matrix: &DMatrix<f64>) -> Result<usize> {
    if !matrix.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            found: format!("{:?}", matrix.shape()),
        });
    }
    Ok(matrix.nrows())
}

/// Upper-triangle edges in `(weight desc, i, j)` order.
fn ranked_edges(matrix: &DMatrix<f64>) -> Vec<Edge> {
    let n = matrix.nrows();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push(Edge {
                i,
                j,
                weight: matrix[(i, j)],
            });
        }
    }
    edges.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    edges
}

/// Maximum spanning tree over strictly positive edges (Kruskal). Returns a
/// spanning forest, flagged, when the positive graph is disconnected.
pub fn max_spanning_tree(matrix: &DMatrix<f64>) -> Result<SpanningForest> {
    let n = check_square(matrix)?;
    if n < 2 {
        return Err(invalid("a spanning tree needs at least two vertices"));
    }
    let mut sets = DisjointSet::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    for edge in ranked_edges(matrix) {
        if !(edge.weight > 0.0) {
            break;
        }
        if sets.union(edge.i, edge.j) {
            tree.push(edge);
            if tree.len() == n - 1 {
                break;
            }
        }
    }
    let components = n - tree.len();
    if components > 1 {
        log::warn!("positive-weight graph is disconnected: spanning forest with {components} components");
    }
    Ok(SpanningForest {
        edges: EdgeList { n, edges: tree },
        connected: components == 1,
        components,
    })
}

/// Keeps the `⌈p·E⌉` heaviest off-diagonal edges (`E = n(n−1)/2`), ties at
/// the cutoff resolved lexicographically by `(i, j)`. Zero-weight edges are
/// not network edges and are dropped from the result.
pub fn threshold_top_fraction(matrix: &DMatrix<f64>, p: f64) -> Result<EdgeList> {
    let n = check_square(matrix)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("fraction must lie in (0, 1], got {p}")));
    }
    let total = n * n.saturating_sub(1) / 2;
    let keep = ((p * total as f64).ceil() as usize).min(total);
    let mut edges: Vec<Edge> = ranked_edges(matrix)
        .into_iter()
        .take(keep)
        .filter(|e| e.weight > 0.0)
        .collect();
    edges.sort_by(|a, b| a.i.cmp(&b.i).then(a.j.cmp(&b.j)));
    Ok(EdgeList { n, edges })
}

pub const DEFAULT_CENTRALITY_TOL: f64 = 1e-10;
pub const DEFAULT_CENTRALITY_MAX_ITER: usize = 10_000;

/// Dominant eigenvector of a non-negative symmetric matrix by power
/// iteration from the uniform vector, returned with unit Euclidean norm.
///
/// The iteration runs on `C + s·I` with `s` the largest entry of `C`, which
/// leaves eigenvectors unchanged and keeps bipartite graphs from
/// oscillating. It stops once successive iterates differ by less than `tol`
/// in max-norm.
pub fn eigenvector_centrality(matrix: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let n = check_square(matrix)?;
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    if matrix.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(invalid("centrality requires a finite non-negative matrix"));
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let shift = matrix.max();
    if shift == 0.0 {
        return Ok(v);
    }
    let mut delta = f64::INFINITY;
    for _ in 0..max_iter {
        let mut next = matrix * &v + &v * shift;
        let norm = next.norm();
        if norm == 0.0 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
        next /= norm;
        delta = (&next - &v).amax();
        v = next;
        if delta < tol {
            return Ok(v);
        }
    }
    let lambda = v.dot(&(matrix * &v));
    let residual = (matrix * &v - &v * lambda).amax();
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: residual.max(delta),
    })
}

/// Sector-level averages of a symbol-level matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorNetwork {
    /// Sector names in sorted order; row `a` of `values` is `sectors[a]`.
    pub sectors: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Averages scores over sector pairs. Off-diagonal entries are means over
/// all cross-sector symbol pairs; the diagonal holds the mean over
/// unordered within-sector pairs (0 for single-symbol sectors).
pub fn sector_meta_network(matrix: &DMatrix<f64>, labels: &[String]) -> Result<SectorNetwork> {
    let n = check_square(matrix)?;
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} sector labels"),
            found: labels.len().to_string(),
        });
    }
    if let Some(pos) = labels.iter().position(|l| l.trim().is_empty()) {
        return Err(Error::MissingSector(format!("symbol {pos}")));
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels {
        index.entry(label.as_str()).or_insert(0);
    }
    for (k, slot) in index.values_mut().enumerate() {
        *slot = k;
    }
    let groups: Vec<usize> = labels.iter().map(|l| index[l.as_str()]).collect();
    let s = index.len();
    let mut sums = DMatrix::<f64>::zeros(s, s);
    let mut counts = DMatrix::<f64>::zeros(s, s);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (groups[i].min(groups[j]), groups[i].max(groups[j]));
            sums[(a, b)] += matrix[(i, j)];
            counts[(a, b)] += 1.0;
        }
    }
    let mut values = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let mean = if counts[(a, b)] > 0.0 {
                sums[(a, b)] / counts[(a, b)]
            } else {
                0.0
            };
            values[(a, b)] = mean;
            values[(b, a)] = mean;
        }
    }
    Ok(SectorNetwork {
        sectors: index.keys().map(|k| k.to_string()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j, w) in entries {
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
        m
    }

    #[test]
    fn triangle_keeps_two_heaviest() {
        let m = sym(3, &[(0, 1, 3.0), (1, 2, 2.0), (0, 2, 1.0)]);
        let t = max_spanning_tree(&m).unwrap();
        assert!(t.connected);
        assert_eq!(t.edges.pairs(), vec![(0, 1), (1, 2)]);
        assert_eq!(t.edges.total_weight(), 5.0);
    }

    #[test]
    fn path_graph_is_its_own_tree() {
        let m = sym(4, &[(0, 1, 0.5), (1, 2, 0.1), (2, 3, 0.7)]);
        let t = max_spanning_tree(&m).unwrap();
        let mut pairs = t.edges.pairs();
        pairs.sort();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn disconnected_graph_gives_flagged_forest() {
        let m = sym(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let t = max_spanning_tree(&m).unwrap();
        assert!(!t.connected);
        assert_eq!(t.components, 2);
        assert_eq!(t.edges.len(), 2);
        assert!(max_spanning_tree(&DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn equal_weights_break_ties_lexicographically() {
        let m = sym(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        assert_eq!(max_spanning_tree(&m).unwrap().edges.pairs(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn threshold_selects_top_edges() {
        // 5 nodes → 10 edges with distinct weights
        let mut m = DMatrix::zeros(5, 5);
        let mut w = 1.0;
        for i in 0..5 {
            for j in (i + 1)..5 {
                m[(i, j)] = w;
                m[(j, i)] = w;
                w += 1.0;
            }
        }
        let top = threshold_top_fraction(&m, 0.2).unwrap();
        assert_eq!(top.pairs(), vec![(2, 4), (3, 4)]);
        assert_eq!(threshold_top_fraction(&m, 1.0).unwrap().len(), 10);
        assert!(threshold_top_fraction(&m, 0.0).is_err());
        assert!(threshold_top_fraction(&m, 1.5).is_err());
    }

    #[test]
    fn threshold_ties_take_lexicographic_prefix() {
        let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let half = threshold_top_fraction(&m, 0.5).unwrap();
        assert_eq!(half.pairs(), vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn threshold_drops_zero_edges() {
        let m = sym(3, &[(0, 1, 2.0)]);
        assert_eq!(threshold_top_fraction(&m, 1.0).unwrap().pairs(), vec![(0, 1)]);
    }

    #[test]
    fn two_node_centrality_is_uniform() {
        let m = sym(2, &[(0, 1, 1.0)]);
        let v = eigenvector_centrality(&m, 1e-10, 100).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((v[0] - h).abs() < 1e-12 && (v[1] - h).abs() < 1e-12);
    }

    #[test]
    fn bipartite_star_converges() {
        let m = sym(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]);
        let v = eigenvector_centrality(&m, 1e-12, 10_000).unwrap();
        assert!((v[0] - 1.0 / 2f64.sqrt()).abs() < 1e-9);
        assert!((v[1] - 1.0 / 6f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn centrality_reports_non_convergence() {
        let m = sym(3, &[(0, 1, 1.0), (1, 2, 0.9), (0, 2, 0.2)]);
        match eigenvector_centrality(&m, 1e-15, 2) {
            Err(Error::NoConvergence { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(eigenvector_centrality(&sym(2, &[(0, 1, -1.0)]), 1e-10, 10).is_err());
    }

    #[test]
    fn meta_network_single_sector() {
        let m = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.7 });
        let labels = vec!["X".to_string(); 3];
        let meta = sector_meta_network(&m, &labels).unwrap();
        assert_eq!(meta.sectors, vec!["X"]);
        assert!((meta.values[(0, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn meta_network_hand_example() {
        // 0,1 in A; 2,3 in B
        let m = sym(
            4,
            &[
                (0, 1, 1.0),
                (0, 2, 0.2),
                (0, 3, 0.4),
                (1, 2, 0.6),
                (1, 3, 0.8),
                (2, 3, 3.0),
            ],
        );
        let labels: Vec<String> = ["A", "A", "B", "B"].iter().map(|s| s.to_string()).collect();
        let meta = sector_meta_network(&m, &labels).unwrap();
        assert_eq!(meta.values[(0, 0)], 1.0);
        assert_eq!(meta.values[(1, 1)], 3.0);
        assert!((meta.values[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(meta.values[(0, 1)], meta.values[(1, 0)]);
    }

    #[test]
    fn meta_network_zero_cross_scores() {
        let m = sym(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let labels: Vec<String> = ["A", "A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let meta = sector_meta_network(&m, &labels).unwrap();
        assert_eq!(meta.values[(0, 1)], 0.0);
        // singleton sectors have a zero diagonal
        assert_eq!(meta.values[(1, 1)], 0.0);
        assert!(sector_meta_network(&m, &labels[..3]).is_err());
        let mut bad = labels.clone();
        bad[2] = String::new();
        assert!(matches!(sector_meta_network(&m, &bad), Err(Error::MissingSector(_))));
    }
}
