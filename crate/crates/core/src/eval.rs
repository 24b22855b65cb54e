//! F1 scoring, dataset-level evaluation and the learning-free baselines.

use std::collections::{BTreeMap, HashSet};

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, GraphPair};
use crate::matching::{predict_with, Discretize, MatchError, MatchResult, Setting};
use crate::model::Model;
use crate::{seeded_rng, Scalar};

/// Pairwise F1. Both sets empty scores 1; no overlap scores 0.
pub fn f1_score(pred: &[(usize, usize)], gt: &[(usize, usize)]) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    let gt_set: HashSet<_> = gt.iter().collect();
    let pred_set: HashSet<_> = pred.iter().collect();
    let hits = pred_set.iter().filter(|p| gt_set.contains(*p)).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / pred_set.len() as f64;
    let recall = hits / gt_set.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub class_id: usize,
    pub source_id: String,
    pub target_id: String,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub method: String,
    pub pairs: Vec<PairScore>,
    pub mean: f64,
    /// Population standard deviation of the per-pair F1.
    pub std: f64,
    pub per_class: BTreeMap<usize, f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_scores(setting: Setting, method: impl Into<String>, pairs: Vec<PairScore>) -> Self {
        let f1s: Vec<f64> = pairs.iter().map(|p| p.f1).collect();
        let (mean, std) = mean_std(&f1s);
        let mut by_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for p in &pairs {
            by_class.entry(p.class_id).or_default().push(p.f1);
        }
        let per_class = by_class.into_iter().map(|(c, v)| (c, mean_std(&v).0)).collect();
        Self {
            setting,
            method: method.into(),
            pairs,
            mean,
            std,
            per_class,
        }
    }

    /// One row per pair: `class_id,source,target,f1`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class_id", "source", "target", "f1"])
            .expect("in-memory write");
        for p in &self.pairs {
            w.write_record([
                p.class_id.to_string(),
                p.source_id.clone(),
                p.target_id.clone(),
                p.f1.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

/// Runs `matcher` over every pair in parallel and aggregates in input order.
pub fn evaluate_with<T: Scalar>(
    pairs: &[GraphPair<T>],
    setting: Setting,
    method: &str,
    matcher: impl Fn(&GraphPair<T>) -> Result<MatchResult<T>, MatchError> + Sync,
) -> Result<EvalReport, MatchError> {
    let scores = pairs
        .par_iter()
        .map(|pair| {
            let r = matcher(pair)?;
            Ok(PairScore {
                class_id: pair.source.class_id,
                source_id: pair.source.graph_id.clone(),
                target_id: pair.target.graph_id.clone(),
                f1: r.f1.unwrap_or(0.0),
            })
        })
        .collect::<Result<Vec<_>, MatchError>>()?;
    Ok(EvalReport::from_scores(setting, method, scores))
}

pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    pairs: &[GraphPair<T>],
    setting: Setting,
) -> Result<EvalReport, MatchError> {
    evaluate_with(pairs, setting, "model", |p| crate::matching::predict(p, model, setting))
}

/// Leading eigenvector of a symmetric operator by power iteration from the
/// all-ones start. Returns the unit vector and the iterations used.
pub fn power_iteration<T: Scalar>(
    apply: impl Fn(&Array1<T>) -> Array1<T>,
    n: usize,
    max_iters: usize,
    tol: f64,
) -> (Array1<T>, usize) {
    let mut v = Array1::from_elem(n, T::one() / T::from_usize(n.max(1)).unwrap().sqrt());
    let tol = T::of(tol);
    for it in 1..=max_iters {
        let w = apply(&v);
        let norm = w.dot(&w).sqrt();
        if norm == T::zero() {
            return (v, it);
        }
        let w = w / norm;
        let diff = (&w - &v).mapv(|x| x * x).sum().sqrt();
        v = w;
        if diff < tol {
            return (v, it);
        }
    }
    (v, max_iters)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// Weight of the neighbourhood-consistency term.
    pub beta: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            max_iters: 200,
            tol: 1e-9,
        }
    }
}

fn row_cosines<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let unit = |m: &Array2<T>| {
        let mut m = m.clone();
        for mut r in m.rows_mut() {
            let n = r.dot(&r).sqrt().max(T::of(1e-12));
            r /= n;
        }
        m
    };
    unit(a).dot(&unit(b).t())
}

/// Spectral scores `N_A x N_B`: the leading eigenvector of
/// `K vec(V) = vec(D * V + beta * A V B^T)`, where `D` holds the node
/// affinities `(1 + cos) / 2`.
pub fn spectral_scores<T: Scalar>(a: &Graph<T>, b: &Graph<T>, cfg: &SpectralConfig) -> Array2<T> {
    let (na, nb) = (a.num_nodes(), b.num_nodes());
    let d = row_cosines(&a.node_features, &b.node_features).mapv(|c| (T::one() + c) / T::of(2.0));
    let adj_a: Array2<T> = a.adjacency.to_dense();
    let adj_b: Array2<T> = b.adjacency.to_dense();
    let beta = T::of(cfg.beta);
    let apply = |v: &Array1<T>| {
        let m = v.view().into_shape_with_order((na, nb)).expect("length na * nb");
        let out = &d * &m + &(adj_a.dot(&m).dot(&adj_b.t()) * beta);
        out.into_shape_with_order(na * nb).expect("contiguous")
    };
    let (v, _) = power_iteration(apply, na * nb, cfg.max_iters, cfg.tol);
    v.into_shape_with_order((na, nb)).expect("length na * nb")
}

/// Repeatedly takes the largest remaining entry and retires its row and column.
pub fn greedy_assignment<T: Scalar>(s: &Array2<T>) -> Vec<(usize, usize)> {
    let (r, c) = s.dim();
    let mut cells: Vec<(usize, usize)> = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).collect();
    cells.sort_by(|&x, &y| s[[y.0, y.1]].partial_cmp(&s[[x.0, x.1]]).unwrap().then(x.cmp(&y)));
    let (mut row_used, mut col_used) = (vec![false; r], vec![false; c]);
    let mut out = Vec::with_capacity(r.min(c));
    for (i, j) in cells {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

pub fn spectral_match<T: Scalar>(
    pair: &GraphPair<T>,
    setting: Setting,
    cfg: &SpectralConfig,
) -> Result<MatchResult<T>, MatchError> {
    predict_with(pair, setting, Discretize::Greedy, |a, b| Ok(spectral_scores(a, b, cfg)))
}

/// Uniformly random injection, seeded per pair.
pub fn random_match<T: Scalar>(pair: &GraphPair<T>, setting: Setting, seed: u64) -> Result<MatchResult<T>, MatchError> {
    let stream = crate::matching::stable_hash(&format!("{}|{}", pair.source.graph_id, pair.target.graph_id));
    let mut rng = seeded_rng(seed, &[stream]);
    predict_with(pair, setting, Discretize::Hungarian, |a, b| {
        Ok(Array2::from_shape_fn((a.num_nodes(), b.num_nodes()), |_| {
            T::of(rng.random::<f64>())
        }))
    })
}
