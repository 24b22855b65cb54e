//! GraphSAGE-style node encoder and the contrastive projection head.
//!
//! Each layer computes
//! `relu(H W_self + mean_neighbors(H) W_neigh + b) + skip(H)`, where `skip`
//! is the identity when widths match and a learned linear map otherwise.
//! The graph embedding is the mean of the final node embeddings.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DiffError, Tape, Var};
use crate::graph::Graph;
use crate::{seeded_rng, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub input: usize,
    pub hidden: usize,
    pub projection: usize,
    pub layers: usize,
}

impl EncoderDims {
    pub fn new(input: usize) -> Self {
        Self {
            input,
            hidden: 64,
            projection: 32,
            layers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SageLayer<T: Scalar> {
    pub w_self: Array2<T>,
    pub w_neigh: Array2<T>,
    pub bias: Array2<T>,
    pub w_skip: Option<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProjectionHead<T: Scalar> {
    pub w1: Array2<T>,
    pub b1: Array2<T>,
    pub w2: Array2<T>,
    pub b2: Array2<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EncoderParams<T: Scalar> {
    pub dims: EncoderDims,
    pub layers: Vec<SageLayer<T>>,
    pub head: ProjectionHead<T>,
}

/// Glorot-uniform matrix.
pub fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| T::of(rng.random_range(-limit..=limit)))
}

impl<T: Scalar> EncoderParams<T> {
    pub fn init(seed: u64, dims: EncoderDims) -> Self {
        let mut rng = seeded_rng(seed, &[0xE1C0]);
        let mut layers = Vec::with_capacity(dims.layers);
        let mut width = dims.input;
        for _ in 0..dims.layers {
            layers.push(SageLayer {
                w_self: glorot(width, dims.hidden, &mut rng),
                w_neigh: glorot(width, dims.hidden, &mut rng),
                bias: Array2::zeros((1, dims.hidden)),
                w_skip: (width != dims.hidden).then(|| glorot(width, dims.hidden, &mut rng)),
            });
            width = dims.hidden;
        }
        let head = ProjectionHead {
            w1: glorot(dims.hidden, dims.hidden, &mut rng),
            b1: Array2::zeros((1, dims.hidden)),
            w2: glorot(dims.hidden, dims.projection, &mut rng),
            b2: Array2::zeros((1, dims.projection)),
        };
        Self { dims, layers, head }
    }

    /// Every trainable matrix in a fixed order.
    pub fn tensors(&self) -> Vec<&Array2<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([&l.w_self, &l.w_neigh, &l.bias]);
            out.extend(l.w_skip.as_ref());
        }
        let h = &self.head;
        out.extend([&h.w1, &h.b1, &h.w2, &h.b2]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w_self);
            out.push(&mut l.w_neigh);
            out.push(&mut l.bias);
            if let Some(s) = l.w_skip.as_mut() {
                out.push(s);
            }
        }
        let h = &mut self.head;
        out.push(&mut h.w1);
        out.push(&mut h.b1);
        out.push(&mut h.w2);
        out.push(&mut h.b2);
        out
    }

    /// Records the parameters on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &Tape<T>, trainable: bool) -> BoundEncoder {
        let put = |m: &Array2<T>| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        BoundEncoder {
            layers: self
                .layers
                .iter()
                .map(|l| BoundLayer {
                    w_self: put(&l.w_self),
                    w_neigh: put(&l.w_neigh),
                    bias: put(&l.bias),
                    w_skip: l.w_skip.as_ref().map(put),
                })
                .collect(),
            w1: put(&self.head.w1),
            b1: put(&self.head.b1),
            w2: put(&self.head.w2),
            b2: put(&self.head.b2),
        }
    }

    /// Node and graph embeddings without recording gradients.
    pub fn embed(&self, g: &Graph<T>) -> Result<(Array2<T>, Array1<T>), DiffError> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let (h, hg) = bound.encode(&tape, g)?;
        let nodes = tape.value(h).clone();
        let graph = tape.value(hg).row(0).to_owned();
        Ok((nodes, graph))
    }
}

pub struct BoundLayer {
    pub w_self: Var,
    pub w_neigh: Var,
    pub bias: Var,
    pub w_skip: Option<Var>,
}

/// Encoder parameters recorded on a tape.
pub struct BoundEncoder {
    pub layers: Vec<BoundLayer>,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl BoundEncoder {
    /// All parameter handles, in the same order as [`EncoderParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([l.w_self, l.w_neigh, l.bias]);
            out.extend(l.w_skip);
        }
        out.extend([self.w1, self.b1, self.w2, self.b2]);
        out
    }

    /// Returns `(H, h_G)`: `N x hidden` node embeddings and the `1 x hidden`
    /// mean readout.
    pub fn encode<T: Scalar>(&self, tape: &Tape<T>, g: &Graph<T>) -> Result<(Var, Var), DiffError> {
        let mean_op = tape.constant(g.adjacency.mean_operator());
        let mut h = tape.constant(g.node_features.clone());
        for l in &self.layers {
            let agg = tape.matmul(mean_op, h)?;
            let own = tape.matmul(h, l.w_self)?;
            let neigh = tape.matmul(agg, l.w_neigh)?;
            let pre = tape.add(own, neigh)?;
            let pre = tape.add_row(pre, l.bias)?;
            let act = tape.relu(pre)?;
            let skip = match l.w_skip {
                Some(w) => tape.matmul(h, w)?,
                None => h,
            };
            h = tape.add(act, skip)?;
        }
        let readout = tape.mean_rows(h)?;
        Ok((h, readout))
    }

    /// `relu(H W1 + b1) W2 + b2`.
    pub fn project<T: Scalar>(&self, tape: &Tape<T>, h: Var) -> Result<Var, DiffError> {
        let a = tape.matmul(h, self.w1)?;
        let a = tape.add_row(a, self.b1)?;
        let a = tape.relu(a)?;
        let z = tape.matmul(a, self.w2)?;
        tape.add_row(z, self.b2)
    }
}
