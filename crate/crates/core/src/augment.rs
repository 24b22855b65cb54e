//! Graph augmentations and the self-labeled correspondence between views.
//!
//! Every augmentation returns the view together with `origin_of`, mapping
//! each view node back to the original node it came from (or `None` for an
//! inserted dummy). Two views of the same graph are then matched by equal
//! origins, which is the only supervision used during pre-training.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Adjacency, Graph};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugError {
    #[error("augmentation parameter out of range: {0}")]
    InvalidSpec(String),
    #[error("augmentation produced an empty view")]
    EmptyView,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugKind {
    Identity,
    NodeInsertion,
    NodeReplacement,
    EdgeRemoval,
    FeatureScaleUnivariate,
    FeatureScaleMultivariate,
    NodeDropping,
    FeatureMasking,
    Mixup,
}

impl AugKind {
    pub const ALL: [AugKind; 9] = [
        AugKind::Identity,
        AugKind::NodeInsertion,
        AugKind::NodeReplacement,
        AugKind::EdgeRemoval,
        AugKind::FeatureScaleUnivariate,
        AugKind::FeatureScaleMultivariate,
        AugKind::NodeDropping,
        AugKind::FeatureMasking,
        AugKind::Mixup,
    ];

    /// Whether the augmentation keeps the node count unchanged.
    pub fn preserves_node_count(self) -> bool {
        !matches!(self, AugKind::NodeInsertion | AugKind::NodeDropping)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Max,
}

/// Dummy-node construction shared by insertion and replacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DummyParams {
    /// Fraction of nodes inserted (or replaced).
    pub p: f64,
    /// Size of the node subset aggregated into each dummy.
    pub k: usize,
    pub aggr: Aggregation,
    /// Edges attached to each dummy.
    pub e: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum AugSpec {
    Identity,
    NodeInsertion(DummyParams),
    NodeReplacement(DummyParams),
    EdgeRemoval { p: f64 },
    FeatureScaleUnivariate { lo: f64, hi: f64 },
    FeatureScaleMultivariate { lo: f64, hi: f64 },
    NodeDropping { p: f64 },
    FeatureMasking { p: f64 },
    Mixup { mu: f64 },
}

pub const FRACTION_RANGE: (f64, f64) = (0.1, 0.9);
pub const SCALE_LO_RANGE: (f64, f64) = (0.2, 0.8);
pub const SCALE_HI_RANGE: (f64, f64) = (1.2, 1.8);
/// Sampling range for subset sizes (the family only requires `k >= 2`).
pub const SUBSET_RANGE: (usize, usize) = (2, 5);
/// Sampling range for per-dummy edge counts (the family only requires `e >= 1`).
pub const EDGE_RANGE: (usize, usize) = (1, 3);

fn in_range(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

impl AugSpec {
    pub fn kind(&self) -> AugKind {
        match self {
            AugSpec::Identity => AugKind::Identity,
            AugSpec::NodeInsertion(_) => AugKind::NodeInsertion,
            AugSpec::NodeReplacement(_) => AugKind::NodeReplacement,
            AugSpec::EdgeRemoval { .. } => AugKind::EdgeRemoval,
            AugSpec::FeatureScaleUnivariate { .. } => AugKind::FeatureScaleUnivariate,
            AugSpec::FeatureScaleMultivariate { .. } => AugKind::FeatureScaleMultivariate,
            AugSpec::NodeDropping { .. } => AugKind::NodeDropping,
            AugSpec::FeatureMasking { .. } => AugKind::FeatureMasking,
            AugSpec::Mixup { .. } => AugKind::Mixup,
        }
    }

    /// Draws parameters for `kind` uniformly from their allowed ranges.
    pub fn sample(kind: AugKind, rng: &mut impl Rng) -> Self {
        let frac = |rng: &mut dyn rand::RngCore| rng.random_range(FRACTION_RANGE.0..=FRACTION_RANGE.1);
        let dummy = |rng: &mut dyn rand::RngCore| DummyParams {
            p: frac(rng),
            k: rng.random_range(SUBSET_RANGE.0..=SUBSET_RANGE.1),
            aggr: if rng.random_bool(0.5) {
                Aggregation::Mean
            } else {
                Aggregation::Max
            },
            e: rng.random_range(EDGE_RANGE.0..=EDGE_RANGE.1),
        };
        let scale = |rng: &mut dyn rand::RngCore| {
            (
                rng.random_range(SCALE_LO_RANGE.0..=SCALE_LO_RANGE.1),
                rng.random_range(SCALE_HI_RANGE.0..=SCALE_HI_RANGE.1),
            )
        };
        match kind {
            AugKind::Identity => AugSpec::Identity,
            AugKind::NodeInsertion => AugSpec::NodeInsertion(dummy(rng)),
            AugKind::NodeReplacement => AugSpec::NodeReplacement(dummy(rng)),
            AugKind::EdgeRemoval => AugSpec::EdgeRemoval { p: frac(rng) },
            AugKind::FeatureScaleUnivariate => {
                let (lo, hi) = scale(rng);
                AugSpec::FeatureScaleUnivariate { lo, hi }
            }
            AugKind::FeatureScaleMultivariate => {
                let (lo, hi) = scale(rng);
                AugSpec::FeatureScaleMultivariate { lo, hi }
            }
            AugKind::NodeDropping => AugSpec::NodeDropping { p: frac(rng) },
            AugKind::FeatureMasking => AugSpec::FeatureMasking { p: frac(rng) },
            AugKind::Mixup => AugSpec::Mixup { mu: frac(rng) },
        }
    }

    pub fn validate(&self) -> Result<(), AugError> {
        let bad = |m: String| Err(AugError::InvalidSpec(m));
        match *self {
            AugSpec::Identity => Ok(()),
            AugSpec::NodeInsertion(d) | AugSpec::NodeReplacement(d) => {
                if !in_range(d.p, FRACTION_RANGE) {
                    return bad(format!("fraction {} outside [0.1, 0.9]", d.p));
                }
                if d.k < 2 {
                    return bad(format!("subset size {} < 2", d.k));
                }
                if d.e < 1 {
                    return bad("edge count must be at least 1".into());
                }
                Ok(())
            }
            AugSpec::EdgeRemoval { p }
            | AugSpec::NodeDropping { p }
            | AugSpec::FeatureMasking { p }
            | AugSpec::Mixup { mu: p } => {
                if in_range(p, FRACTION_RANGE) {
                    Ok(())
                } else {
                    bad(format!("probability {p} outside [0.1, 0.9]"))
                }
            }
            AugSpec::FeatureScaleUnivariate { lo, hi } | AugSpec::FeatureScaleMultivariate { lo, hi } => {
                if in_range(lo, SCALE_LO_RANGE) && in_range(hi, SCALE_HI_RANGE) {
                    Ok(())
                } else {
                    bad(format!("scale bounds ({lo}, {hi}) outside [0.2,0.8] x [1.2,1.8]"))
                }
            }
        }
    }
}

/// What an augmentation did to the node set, in original-node terms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugTrace {
    /// Original nodes removed, ascending.
    pub removed: Vec<usize>,
    /// Dummy nodes appended after the surviving originals.
    pub inserted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView<T: Scalar = f64> {
    pub graph: Graph<T>,
    /// Original index of each view node; `None` for dummies.
    pub origin_of: Vec<Option<usize>>,
    pub trace: AugTrace,
}

/// `ceil(p * n)` without spurious round-up from representation error.
pub fn fraction_count(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

pub fn apply<T: Scalar>(spec: &AugSpec, g: &Graph<T>, rng: &mut impl Rng) -> Result<AugmentedView<T>, AugError> {
    spec.validate()?;
    let n = g.num_nodes();
    let identity_origins: Vec<Option<usize>> = (0..n).map(Some).collect();
    let same_nodes = |graph: Graph<T>| AugmentedView {
        graph,
        origin_of: identity_origins.clone(),
        trace: AugTrace::default(),
    };
    let view = match *spec {
        AugSpec::Identity => same_nodes(g.clone()),
        AugSpec::NodeInsertion(d) => {
            let count = fraction_count(d.p, n);
            let survivors: Vec<usize> = (0..n).collect();
            let graph = with_dummies(g, &survivors, count, &d, rng);
            AugmentedView {
                graph,
                origin_of: identity_origins
                    .iter()
                    .copied()
                    .chain(std::iter::repeat_n(None, count))
                    .collect(),
                trace: AugTrace {
                    removed: vec![],
                    inserted: count,
                },
            }
        }
        AugSpec::NodeReplacement(d) => {
            let count = fraction_count(d.p, n).min(n.saturating_sub(1));
            let mut removed = index::sample(rng, n, count).into_vec();
            removed.sort_unstable();
            let survivors: Vec<usize> = (0..n).filter(|v| removed.binary_search(v).is_err()).collect();
            let graph = with_dummies(g, &survivors, count, &d, rng);
            AugmentedView {
                graph,
                origin_of: survivors
                    .iter()
                    .map(|&v| Some(v))
                    .chain(std::iter::repeat_n(None, count))
                    .collect(),
                trace: AugTrace {
                    removed,
                    inserted: count,
                },
            }
        }
        AugSpec::EdgeRemoval { p } => {
            let mut out = g.clone();
            for (a, b) in g.adjacency.edges() {
                if rng.random_bool(p) {
                    out.adjacency.remove(a, b);
                }
            }
            same_nodes(out)
        }
        AugSpec::FeatureScaleUnivariate { lo, hi } => {
            let mut out = g.clone();
            for mut row in out.node_features.rows_mut() {
                let s = T::of(rng.random_range(lo..hi));
                row.mapv_inplace(|x| x * s);
            }
            same_nodes(out)
        }
        AugSpec::FeatureScaleMultivariate { lo, hi } => {
            let mut out = g.clone();
            out.node_features.mapv_inplace(|x| x * T::of(rng.random_range(lo..hi)));
            same_nodes(out)
        }
        AugSpec::NodeDropping { p } => {
            let mut keep: Vec<usize> = (0..n).filter(|_| !rng.random_bool(p)).collect();
            if keep.is_empty() {
                keep.push(rng.random_range(0..n));
            }
            let graph = g.induced(&keep).map_err(|_| AugError::EmptyView)?;
            AugmentedView {
                graph,
                origin_of: keep.iter().map(|&v| Some(v)).collect(),
                trace: AugTrace {
                    removed: (0..n).filter(|v| keep.binary_search(v).is_err()).collect(),
                    inserted: 0,
                },
            }
        }
        AugSpec::FeatureMasking { p } => {
            let mut out = g.clone();
            for mut col in out.node_features.columns_mut() {
                if rng.random_bool(p) {
                    col.fill(T::zero());
                }
            }
            same_nodes(out)
        }
        AugSpec::Mixup { mu } => {
            let mut out = g.clone();
            let mean = g.node_features.mean_axis(Axis(0)).expect("non-empty graph");
            let (keep, mix) = (T::of(1.0 - mu), T::of(mu));
            for mut row in out.node_features.rows_mut() {
                row.zip_mut_with(&mean, |x, &m| *x = keep * *x + mix * m);
            }
            same_nodes(out)
        }
    };
    if view.graph.num_nodes() == 0 {
        return Err(AugError::EmptyView);
    }
    Ok(view)
}

/// Keeps `survivors` (in order) and appends `count` dummies. Each dummy
/// aggregates the features of a random subset of survivors and is linked to
/// up to `e` survivors outside that subset.
fn with_dummies<T: Scalar>(
    g: &Graph<T>,
    survivors: &[usize],
    count: usize,
    d: &DummyParams,
    rng: &mut impl Rng,
) -> Graph<T> {
    let base = survivors.len();
    let total = base + count;
    let f = g.feature_dim();
    let mut features = Array2::zeros((total, f));
    for (i, &v) in survivors.iter().enumerate() {
        features.row_mut(i).assign(&g.node_features.row(v));
    }
    let mut adjacency = Adjacency::empty(total);
    let kept = g.adjacency.induced(survivors);
    for (a, b) in kept.edges() {
        adjacency.insert(a, b).expect("induced edges are valid");
    }
    for dummy in 0..count {
        let idx = base + dummy;
        let k = d.k.min(base);
        let subset = index::sample(rng, base, k).into_vec();
        let rows = features.select(Axis(0), &subset);
        let agg = match d.aggr {
            Aggregation::Mean => rows.mean_axis(Axis(0)).expect("subset non-empty"),
            Aggregation::Max => rows.fold_axis(Axis(0), T::neg_infinity(), |&m, &x| m.max(x)),
        };
        features.row_mut(idx).assign(&agg);
        let candidates: Vec<usize> = (0..base).filter(|v| !subset.contains(v)).collect();
        let e = d.e.min(candidates.len());
        for pick in index::sample(rng, candidates.len(), e) {
            adjacency
                .insert(idx, candidates[pick])
                .expect("dummy edges join distinct nodes");
        }
    }
    // Dummies have no position, so the view carries no coordinates.
    Graph {
        node_features: features,
        adjacency,
        coords: None,
        graph_id: g.graph_id.clone(),
        class_id: g.class_id,
    }
}

/// Self-labeled correspondence between two views of one graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    pub rows: usize,
    pub cols: usize,
    /// `(view A index, view B index)`, sorted by row.
    pub pairs: Vec<(usize, usize)>,
}

impl Correspondence {
    pub fn to_dense<T: Scalar>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.rows, self.cols));
        for &(i, j) in &self.pairs {
            m[[i, j]] = T::one();
        }
        m
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn transposed(&self) -> Self {
        let mut pairs: Vec<_> = self.pairs.iter().map(|&(i, j)| (j, i)).collect();
        pairs.sort_unstable();
        Self {
            rows: self.cols,
            cols: self.rows,
            pairs,
        }
    }
}

/// Entry `(i, j)` is set iff view node `i` of `a` and view node `j` of `b`
/// come from the same original node.
pub fn self_ground_truth<T: Scalar>(a: &AugmentedView<T>, b: &AugmentedView<T>) -> Correspondence {
    let by_origin: HashMap<usize, usize> = b
        .origin_of
        .iter()
        .enumerate()
        .filter_map(|(j, o)| o.map(|o| (o, j)))
        .collect();
    let pairs = a
        .origin_of
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.and_then(|o| by_origin.get(&o).map(|&j| (i, j))))
        .collect();
    Correspondence {
        rows: a.graph.num_nodes(),
        cols: b.graph.num_nodes(),
        pairs,
    }
}
