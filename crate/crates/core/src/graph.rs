//! Graph and graph-pair representation.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node and one feature dimension, got {nodes}x{features}")]
    Empty { nodes: usize, features: usize },
    #[error("adjacency has {adjacency} nodes but feature matrix has {features} rows")]
    NodeCountMismatch { adjacency: usize, features: usize },
    #[error("coordinate matrix has {coords} rows, expected {nodes}")]
    CoordMismatch { coords: usize, nodes: usize },
    #[error("edge ({0}, {1}) is out of range or a self-loop")]
    BadEdge(usize, usize),
    #[error("ground-truth pair ({0}, {1}) is out of bounds")]
    GtOutOfBounds(usize, usize),
    #[error("ground-truth matching is not injective at ({0}, {1})")]
    GtNotInjective(usize, usize),
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("non-finite node feature")]
    NonFiniteFeature,
}

/// Symmetric, loop-free adjacency over `n` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adj = Self::empty(n);
        for &(a, b) in edges {
            adj.insert(a, b)?;
        }
        Ok(adj)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn insert(&mut self, a: usize, b: usize) -> Result<(), GraphError> {
        if a == b || a >= self.n || b >= self.n {
            return Err(GraphError::BadEdge(a, b));
        }
        self.bits[a * self.n + b] = true;
        self.bits[b * self.n + a] = true;
        Ok(())
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        if a < self.n && b < self.n {
            self.bits[a * self.n + b] = false;
            self.bits[b * self.n + a] = false;
        }
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        a < self.n && b < self.n && self.bits[a * self.n + b]
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if self.bits[a * self.n + b] {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count() / 2
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&u| self.bits[v * self.n + u])
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).count()
    }

    pub fn to_dense<T: Scalar>(&self) -> Array2<T> {
        Array2::from_shape_fn((self.n, self.n), |(a, b)| {
            if self.bits[a * self.n + b] {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Row-normalized adjacency `D^-1 A`; isolated nodes get a zero row.
    pub fn mean_operator<T: Scalar>(&self) -> Array2<T> {
        let mut m = self.to_dense::<T>();
        for mut row in m.rows_mut() {
            let deg = row.sum();
            if deg > T::zero() {
                row.mapv_inplace(|x| x / deg);
            }
        }
        m
    }

    /// Adjacency restricted to `keep`, re-indexed in the order given.
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut out = Self::empty(keep.len());
        for (i, &a) in keep.iter().enumerate() {
            for (j, &b) in keep.iter().enumerate() {
                if self.contains(a, b) {
                    out.bits[i * keep.len() + j] = true;
                }
            }
        }
        out
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::empty(self.n);
        for (a, b) in self.edges() {
            out.insert(perm[a], perm[b]).expect("permutation preserves validity");
        }
        out
    }
}

/// Attributed undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T: Scalar = f64> {
    pub node_features: Array2<T>,
    pub adjacency: Adjacency,
    /// Unit-square positions, when the graph was built from points.
    pub coords: Option<Vec<[f64; 2]>>,
    pub graph_id: String,
    pub class_id: usize,
}

impl<T: Scalar> Graph<T> {
    pub fn new(
        node_features: Array2<T>,
        adjacency: Adjacency,
        coords: Option<Vec<[f64; 2]>>,
    ) -> Result<Self, GraphError> {
        let g = Self {
            node_features,
            adjacency,
            coords,
            graph_id: String::new(),
            class_id: 0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_id(mut self, graph_id: impl Into<String>, class_id: usize) -> Self {
        self.graph_id = graph_id.into();
        self.class_id = class_id;
        self
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let (n, f) = self.node_features.dim();
        if n == 0 || f == 0 {
            return Err(GraphError::Empty { nodes: n, features: f });
        }
        if self.adjacency.len() != n {
            return Err(GraphError::NodeCountMismatch {
                adjacency: self.adjacency.len(),
                features: n,
            });
        }
        if let Some(c) = &self.coords {
            if c.len() != n {
                return Err(GraphError::CoordMismatch {
                    coords: c.len(),
                    nodes: n,
                });
            }
        }
        if self.node_features.iter().any(|x| !x.is_finite()) {
            return Err(GraphError::NonFiniteFeature);
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    /// Subgraph on `keep` (re-indexed in the given order) with induced edges.
    pub fn induced(&self, keep: &[usize]) -> Result<Self, GraphError> {
        if let Some(&bad) = keep.iter().find(|&&v| v >= self.num_nodes()) {
            return Err(GraphError::NodeOutOfRange(bad));
        }
        let features = self.node_features.select(ndarray::Axis(0), keep);
        let coords = self.coords.as_ref().map(|c| keep.iter().map(|&v| c[v]).collect());
        let g = Graph {
            node_features: features,
            adjacency: self.adjacency.induced(keep),
            coords,
            graph_id: self.graph_id.clone(),
            class_id: self.class_id,
        };
        g.validate()?;
        Ok(g)
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.num_nodes();
        let mut inverse = vec![0; n];
        for (v, &p) in perm.iter().enumerate() {
            inverse[p] = v;
        }
        Graph {
            node_features: self.node_features.select(ndarray::Axis(0), &inverse),
            adjacency: self.adjacency.permuted(perm),
            coords: self.coords.as_ref().map(|c| inverse.iter().map(|&v| c[v]).collect()),
            graph_id: self.graph_id.clone(),
            class_id: self.class_id,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Graph<U> {
        Graph {
            node_features: self.node_features.mapv(|x| U::of(x.as_f64())),
            adjacency: self.adjacency.clone(),
            coords: self.coords.clone(),
            graph_id: self.graph_id.clone(),
            class_id: self.class_id,
        }
    }
}

/// Two graphs plus their ground-truth node correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair<T: Scalar = f64> {
    pub source: Graph<T>,
    pub target: Graph<T>,
    /// `(source index, target index)`, sorted.
    pub gt_matching: Vec<(usize, usize)>,
}

impl<T: Scalar> GraphPair<T> {
    pub fn new(source: Graph<T>, target: Graph<T>, mut gt_matching: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        gt_matching.sort_unstable();
        let pair = Self {
            source,
            target,
            gt_matching,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        self.source.validate()?;
        self.target.validate()?;
        let (ns, nt) = (self.source.num_nodes(), self.target.num_nodes());
        let mut seen_s = HashSet::new();
        let mut seen_t = HashSet::new();
        for &(s, t) in &self.gt_matching {
            if s >= ns || t >= nt {
                return Err(GraphError::GtOutOfBounds(s, t));
            }
            if !seen_s.insert(s) || !seen_t.insert(t) {
                return Err(GraphError::GtNotInjective(s, t));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> GraphPair<U> {
        GraphPair {
            source: self.source.cast(),
            target: self.target.cast(),
            gt_matching: self.gt_matching.clone(),
        }
    }
}

/// Text-friendly form of a [`Graph`]: features as rows, adjacency as a
/// sorted edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub id: String,
    pub class_id: usize,
    pub features: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<[f64; 2]>>,
}

impl<T: Scalar> From<&Graph<T>> for GraphRecord {
    fn from(g: &Graph<T>) -> Self {
        Self {
            id: g.graph_id.clone(),
            class_id: g.class_id,
            features: g
                .node_features
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|x| x.as_f64()).collect())
                .collect(),
            edges: g.adjacency.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            coords: g.coords.clone(),
        }
    }
}

impl GraphRecord {
    pub fn to_graph<T: Scalar>(&self) -> Result<Graph<T>, GraphError> {
        let n = self.features.len();
        let f = self.features.first().map_or(0, Vec::len);
        if self.features.iter().any(|r| r.len() != f) {
            return Err(GraphError::Empty { nodes: n, features: 0 });
        }
        let flat: Vec<T> = self.features.iter().flatten().map(|&x| T::of(x)).collect();
        let features = Array2::from_shape_vec((n, f), flat).expect("rectangular rows checked");
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let adjacency = Adjacency::from_edges(n, &edges)?;
        Ok(Graph::new(features, adjacency, self.coords.clone())?.with_id(self.id.clone(), self.class_id))
    }
}
