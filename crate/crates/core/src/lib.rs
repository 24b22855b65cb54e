//! Self-supervised graph matching.
//!
//! A node-embedding encoder is pre-trained contrastively on pairs of augmented
//! views of single graphs. Augmentation pairs come from a large pool and are
//! drawn by an adaptive, boosting-style sampler that favours pairs the model
//! currently matches poorly. At inference the frozen encoder and affinity
//! form feed a Sinkhorn layer and a Hungarian discretization to match nodes
//! between unseen graph pairs.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the bottom of this file pin the common double-precision instantiations.

// config validation writes `!(x > 0.0)` on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod autodiff;
pub mod dataset;
pub mod delaunay;
pub mod encoder;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod matching;
pub mod model;
pub mod optim;
pub mod pool;
pub mod synthetic;
pub mod train;

use std::fmt::{Debug, Display};

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point element type of every matrix in the crate.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + ndarray::LinalgScalar
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`, used for hyperparameters and constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub use augment::{AugKind, AugSpec, AugmentedView};
pub use autodiff::{DiffError, Tape, Var};
pub use encoder::{EncoderDims, EncoderParams};
pub use eval::{f1_score, EvalReport};
pub use graph::{Graph, GraphError, GraphPair};
pub use matching::{MatchError, MatchResult, MatcherConfig, Setting};
pub use model::{Checkpoint, Model};
pub use pool::{AugPairEntry, BiasConfig, Pool, SamplerKind};
pub use synthetic::SyntheticConfig;
pub use train::{TrainConfig, TrainLog};

pub type Graph64 = Graph<f64>;
pub type Graph32 = Graph<f32>;
pub type GraphPair64 = GraphPair<f64>;
pub type Tape64 = Tape<f64>;
pub type EncoderParams64 = EncoderParams<f64>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
pub type MatchResult64 = MatchResult<f64>;

/// Deterministic RNG for the stream identified by `path` under `seed`.
///
/// Each path component is folded in with a splitmix64 step, so distinct
/// paths give statistically independent streams.
pub fn seeded_rng(seed: u64, path: &[u64]) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut state = splitmix(seed);
    for &p in path {
        state = splitmix(state ^ splitmix(p));
    }
    rand_chacha::ChaCha8Rng::seed_from_u64(state)
}
