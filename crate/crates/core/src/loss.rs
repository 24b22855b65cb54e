//! Contrastive node loss and the self-supervised matching loss.
//!
//! For an anchor `i` of view A with positive `i'` in view B, the anchor loss is
//! `-log( exp(cos(z_i, z_i')/T) / (intra_i + inter_i) )`, where `intra_i` sums
//! `exp(cos/T)` over the other nodes of A and `inter_i` over all nodes of B
//! (the positive included). Anchors without a positive are skipped and the
//! sum over both views is divided by `N_A + N_B`.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::Correspondence;
use crate::autodiff::{DiffError, Tape, Var};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("no anchor has a positive counterpart")]
    NoPositives,
    #[error("correspondence is {expected:?} but prediction is {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingLossKind {
    Permutation,
    Hamming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub temperature: f64,
    pub matching: MatchingLossKind,
    /// Normalize positive and negative cross-entropy terms separately.
    pub balanced: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            matching: MatchingLossKind::Permutation,
            balanced: true,
        }
    }
}

fn cosine<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    let guard = T::of(crate::autodiff::NORM_GUARD);
    let na = a.dot(&a).sqrt().max(guard);
    let nb = b.dot(&b).sqrt().max(guard);
    a.dot(&b) / (na * nb)
}

/// `sum_{j != i} exp(cos(z_i, z_j) / T)` within one view.
pub fn intra_term<T: Scalar>(z: &Array2<T>, i: usize, temperature: T) -> T {
    (0..z.nrows())
        .filter(|&j| j != i)
        .map(|j| (cosine(z.row(i), z.row(j)) / temperature).exp())
        .fold(T::zero(), |a, b| a + b)
}

/// `sum_j exp(cos(z_i^A, z_j^B) / T)` across views.
pub fn inter_term<T: Scalar>(za: &Array2<T>, zb: &Array2<T>, i: usize, temperature: T) -> T {
    (0..zb.nrows())
        .map(|j| (cosine(za.row(i), zb.row(j)) / temperature).exp())
        .fold(T::zero(), |a, b| a + b)
}

/// Sum of anchor losses for the anchors (rows) of `za`.
fn one_side<T: Scalar>(tape: &Tape<T>, za: Var, zb: Var, corr: &Correspondence, inv_t: T) -> Result<Var, DiffError> {
    let na = tape.shape(za).0;
    let zb_t = tape.transpose(zb)?;
    let za_t = tape.transpose(za)?;
    let cross = tape.matmul(za, zb_t)?;
    let within = tape.matmul(za, za_t)?;

    let off_diag = tape.constant(Array2::from_shape_fn((na, na), |(i, j)| {
        if i == j {
            T::zero()
        } else {
            T::one()
        }
    }));
    let w = tape.scale(within, inv_t)?;
    let w = tape.exp(w)?;
    let w = tape.mul(w, off_diag)?;
    let intra = tape.sum_each_row(w)?;

    let c = tape.scale(cross, inv_t)?;
    let c = tape.exp(c)?;
    let inter = tape.sum_each_row(c)?;

    let denom = tape.add(intra, inter)?;
    let log_denom = tape.log(denom)?;

    let gt = tape.constant(corr.to_dense());
    let pos = tape.mul(cross, gt)?;
    let pos = tape.sum_each_row(pos)?;
    let pos = tape.scale(pos, inv_t)?;

    let mut has_pos = Array2::zeros((na, 1));
    for &(i, _) in &corr.pairs {
        has_pos[[i, 0]] = T::one();
    }
    let mask = tape.constant(has_pos);
    let per_anchor = tape.sub(log_denom, pos)?;
    let per_anchor = tape.mul(per_anchor, mask)?;
    tape.sum(per_anchor)
}

/// Symmetric contrastive loss between projected views `za` (`N_A x d`) and
/// `zb` (`N_B x d`) with positives given by `corr`.
pub fn node_contrastive_loss<T: Scalar>(
    tape: &Tape<T>,
    za: Var,
    zb: Var,
    corr: &Correspondence,
    temperature: T,
) -> Result<Var, LossError> {
    let (na, nb) = (tape.shape(za).0, tape.shape(zb).0);
    if (corr.rows, corr.cols) != (na, nb) {
        return Err(LossError::ShapeMismatch {
            expected: (corr.rows, corr.cols),
            found: (na, nb),
        });
    }
    if corr.is_empty() {
        return Err(LossError::NoPositives);
    }
    let za = tape.row_l2_normalize(za)?;
    let zb = tape.row_l2_normalize(zb)?;
    let inv_t = T::one() / temperature;
    let a = one_side(tape, za, zb, corr, inv_t)?;
    let b = one_side(tape, zb, za, &corr.transposed(), inv_t)?;
    let total = tape.add(a, b)?;
    Ok(tape.scale(total, T::one() / T::from_usize(na + nb).unwrap())?)
}

/// Loss between the soft matching `g_hat` (entries in `[0, 1]`) and the
/// self-labeled correspondence. Returns a constant zero when there are no
/// positives.
pub fn matching_loss<T: Scalar>(
    tape: &Tape<T>,
    g_hat: Var,
    g_self: &Correspondence,
    cfg: &LossConfig,
) -> Result<Var, LossError> {
    let shape = tape.shape(g_hat);
    if shape != (g_self.rows, g_self.cols) {
        return Err(LossError::ShapeMismatch {
            expected: (g_self.rows, g_self.cols),
            found: shape,
        });
    }
    if g_self.is_empty() {
        log::warn!("matching loss with no positives; contributing zero");
        return Ok(tape.constant(Array2::zeros((1, 1))));
    }
    let gt: Array2<T> = g_self.to_dense();
    match cfg.matching {
        MatchingLossKind::Hamming => {
            let flip = tape.constant(gt.mapv(|g| T::one() - g - g));
            let d = tape.mul(g_hat, flip)?;
            let s = tape.sum(d)?;
            let s = tape.add_scalar(s, gt.sum())?;
            let n = T::from_usize(shape.0 * shape.1).unwrap();
            Ok(tape.scale(s, T::one() / n)?)
        }
        MatchingLossKind::Permutation => {
            let mut neg = Array2::zeros(shape);
            let mut rows_with_pos = 0usize;
            for (i, mut row) in neg.rows_mut().into_iter().enumerate() {
                if gt.row(i).iter().any(|&g| g > T::zero()) {
                    rows_with_pos += 1;
                    row.assign(&gt.row(i).mapv(|g| T::one() - g));
                }
            }
            let n_neg = neg.sum();
            let pos_mask = tape.constant(gt);
            let neg_mask = tape.constant(neg);
            let log_p = tape.log(g_hat)?;
            let one_minus = tape.scale(g_hat, -T::one())?;
            let one_minus = tape.add_scalar(one_minus, T::one())?;
            let log_q = tape.log(one_minus)?;
            let pos = tape.mul(log_p, pos_mask)?;
            let pos = tape.sum(pos)?;
            let neg = tape.mul(log_q, neg_mask)?;
            let neg = tape.sum(neg)?;
            let rows = T::from_usize(rows_with_pos).unwrap();
            if cfg.balanced {
                let pos = tape.scale(pos, -T::one() / rows)?;
                if n_neg > T::zero() {
                    let neg = tape.scale(neg, -T::one() / n_neg)?;
                    Ok(tape.add(pos, neg)?)
                } else {
                    Ok(pos)
                }
            } else {
                let both = tape.add(pos, neg)?;
                Ok(tape.scale(both, -T::one() / rows)?)
            }
        }
    }
}

/// Unweighted sum of the contrastive and matching losses.
pub fn total_loss<T: Scalar>(tape: &Tape<T>, node: Var, matching: Var) -> Result<Var, DiffError> {
    tape.add(node, matching)
}
