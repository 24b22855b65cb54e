//! Affinity, Sinkhorn normalization, Hungarian discretization and pairwise
//! prediction.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{DiffError, Tape, Var};
use crate::delaunay::triangulate;
use crate::eval::f1_score;
use crate::graph::{Graph, GraphError, GraphPair};
use crate::model::Model;
use crate::{seeded_rng, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("affinity matrix contains a non-finite entry")]
    NonFiniteAffinity,
    #[error("graph pair shares no ground-truth node")]
    EmptyIntersection,
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// Sinkhorn temperature applied to the affinity before exponentiation.
    pub tau: f64,
    pub max_iters: usize,
    /// Stop once every row and column sum is within this of 1.
    pub eps: f64,
    /// Logit given to padding rows/columns of a rectangular input.
    pub dummy_logit: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            max_iters: 100,
            eps: 1e-6,
            dummy_logit: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    /// Both graphs restricted to their ground-truth shared nodes.
    #[serde(rename = "intsec")]
    Intersection,
    /// Graphs used as-is, outliers included.
    #[serde(rename = "unfilt")]
    Unfiltered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MatchResult<T: Scalar = f64> {
    /// Soft matching, `N_A x N_B`.
    pub soft: Array2<T>,
    /// Discrete partial injection, sorted by row.
    pub assignment: Vec<(usize, usize)>,
    /// Total soft score of the assignment.
    pub score: T,
    /// F1 against the ground truth, when one was supplied.
    pub f1: Option<f64>,
}

/// `H_A W H_B^T`.
pub fn affinity<T: Scalar>(tape: &Tape<T>, ha: Var, hb: Var, w: Var) -> Result<Var, DiffError> {
    let left = tape.matmul(ha, w)?;
    let hb_t = tape.transpose(hb)?;
    tape.matmul(left, hb_t)
}

/// Output of [`sinkhorn`]: the `N_A x N_B` block, the padded square matrix,
/// and the number of normalization rounds run.
pub struct SinkhornOutput {
    pub soft: Var,
    pub padded: Var,
    pub iterations: usize,
}

/// Log-domain Sinkhorn on `exp(M / tau)`, padded to square with
/// `dummy_logit` entries. Differentiable through every round run.
pub fn sinkhorn<T: Scalar>(tape: &Tape<T>, m: Var, cfg: &MatcherConfig) -> Result<SinkhornOutput, MatchError> {
    if tape.value(m).iter().any(|x| !x.is_finite()) {
        return Err(MatchError::NonFiniteAffinity);
    }
    let (na, nb) = tape.shape(m);
    let mut logits = tape.scale(m, T::one() / T::of(cfg.tau))?;
    let dummy = T::of(cfg.dummy_logit);
    if na < nb {
        let pad = tape.constant(Array2::from_elem((nb - na, nb), dummy));
        logits = tape.concat_rows(logits, pad)?;
    } else if nb < na {
        let pad = tape.constant(Array2::from_elem((na, na - nb), dummy));
        logits = tape.concat_cols(logits, pad)?;
    }
    let tol = T::of(cfg.eps);
    let mut iterations = 0;
    for _ in 0..cfg.max_iters.max(1) {
        logits = tape.log_normalize_rows(logits)?;
        logits = tape.log_normalize_cols(logits)?;
        iterations += 1;
        // columns are exact after the column step; rows decide convergence
        let worst = tape
            .value(logits)
            .rows()
            .into_iter()
            .map(|r| (r.iter().fold(T::zero(), |a, &x| a + x.exp()) - T::one()).abs())
            .fold(T::zero(), T::max);
        if worst < tol {
            break;
        }
    }
    let padded = tape.exp(logits)?;
    let soft = tape.slice_rows(padded, 0, na)?;
    let soft = tape.slice_cols(soft, 0, nb)?;
    Ok(SinkhornOutput {
        soft,
        padded,
        iterations,
    })
}

/// [`sinkhorn`] on a plain matrix.
pub fn sinkhorn_matrix<T: Scalar>(m: &Array2<T>, cfg: &MatcherConfig) -> Result<Array2<T>, MatchError> {
    let tape = Tape::new();
    let mv = tape.constant(m.clone());
    let out = sinkhorn(&tape, mv, cfg)?;
    let soft = tape.value(out.soft).clone();
    Ok(soft)
}

/// Maximum-total-score partial injection of size `min(rows, cols)`.
///
/// Minimizes `max(S) - S` with the shortest-augmenting-path form of the
/// Hungarian method, O(n^2 m). Strict comparisons make ties resolve toward
/// lower indices.
pub fn hungarian<T: Scalar>(s: &Array2<T>) -> Vec<(usize, usize)> {
    let (r, c) = s.dim();
    if r == 0 || c == 0 {
        return Vec::new();
    }
    if r > c {
        let t = s.t().to_owned();
        let mut out: Vec<(usize, usize)> = hungarian(&t).into_iter().map(|(j, i)| (i, j)).collect();
        out.sort_unstable();
        return out;
    }
    let top = s.iter().copied().fold(T::neg_infinity(), T::max);
    let cost = |i: usize, j: usize| top - s[[i, j]];
    let inf = T::infinity();
    // 1-based potentials; column 0 is the virtual root
    let mut u = vec![T::zero(); r + 1];
    let mut v = vec![T::zero(); c + 1];
    let mut owner = vec![0usize; c + 1];
    let mut way = vec![0usize; c + 1];
    for i in 1..=r {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; c + 1];
        let mut used = vec![false; c + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=c {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=c {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=c)
        .filter(|&j| owner[j] > 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    out.sort_unstable();
    out
}

pub fn assignment_score<T: Scalar>(s: &Array2<T>, assignment: &[(usize, usize)]) -> T {
    assignment.iter().fold(T::zero(), |a, &(i, j)| a + s[[i, j]])
}

/// Subgraph on `keep`, re-triangulated from coordinates when possible and
/// with induced edges otherwise.
fn restrict<T: Scalar>(g: &Graph<T>, keep: &[usize]) -> Result<Graph<T>, GraphError> {
    let mut sub = g.induced(keep)?;
    if let Some(coords) = &sub.coords {
        if let Ok(adj) = triangulate(coords) {
            sub.adjacency = adj;
        }
    }
    Ok(sub)
}

/// FNV-1a, used to derive stable per-graph random streams.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Matches one evaluation pair with a frozen model.
///
/// Target nodes are presented to the model in a shuffled order (fixed per
/// target graph id) so that score ties cannot line up with the dataset's
/// index correspondence; the returned assignment is in original indices.
pub fn predict<T: Scalar>(
    pair: &GraphPair<T>,
    model: &Model<T>,
    setting: Setting,
) -> Result<MatchResult<T>, MatchError> {
    predict_with(pair, setting, Discretize::Hungarian, |a, b| model.soft_match(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretize {
    Hungarian,
    Greedy,
}

/// [`predict`] with an arbitrary soft matcher and discretization.
pub fn predict_with<T: Scalar>(
    pair: &GraphPair<T>,
    setting: Setting,
    discretize: Discretize,
    soft_match: impl FnOnce(&Graph<T>, &Graph<T>) -> Result<Array2<T>, MatchError>,
) -> Result<MatchResult<T>, MatchError> {
    let (src_keep, tgt_keep): (Vec<usize>, Vec<usize>) = match setting {
        Setting::Intersection => {
            if pair.gt_matching.is_empty() {
                return Err(MatchError::EmptyIntersection);
            }
            pair.gt_matching.iter().copied().unzip()
        }
        Setting::Unfiltered => (
            (0..pair.source.num_nodes()).collect(),
            (0..pair.target.num_nodes()).collect(),
        ),
    };
    let mut tgt_order = tgt_keep.clone();
    tgt_order.shuffle(&mut seeded_rng(stable_hash(&pair.target.graph_id), &[0x5eed]));
    let (source, target) = match setting {
        Setting::Intersection => (restrict(&pair.source, &src_keep)?, restrict(&pair.target, &tgt_order)?),
        Setting::Unfiltered => (pair.source.clone(), pair.target.induced(&tgt_order)?),
    };
    let soft_sub = soft_match(&source, &target)?;
    let local = match discretize {
        Discretize::Hungarian => hungarian(&soft_sub),
        Discretize::Greedy => crate::eval::greedy_assignment(&soft_sub),
    };
    let score = assignment_score(&soft_sub, &local);
    let assignment: Vec<(usize, usize)> = {
        let mut a: Vec<_> = local.iter().map(|&(i, j)| (src_keep[i], tgt_order[j])).collect();
        a.sort_unstable();
        a
    };
    let mut soft = Array2::zeros((pair.source.num_nodes(), pair.target.num_nodes()));
    for (i, &si) in src_keep.iter().enumerate() {
        for (j, &tj) in tgt_order.iter().enumerate() {
            soft[[si, tj]] = soft_sub[[i, j]];
        }
    }
    let f1 = f1_score(&assignment, &pair.gt_matching);
    Ok(MatchResult {
        soft,
        assignment,
        score,
        f1: Some(f1),
    })
}
