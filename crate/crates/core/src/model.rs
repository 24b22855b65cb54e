//! The trainable matcher: encoder, bilinear affinity and solver settings, plus
//! the checkpoint file that carries it.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Var};
use crate::encoder::{glorot, BoundEncoder, EncoderDims, EncoderParams};
use crate::graph::Graph;
use crate::matching::{affinity, sinkhorn, MatchError, MatcherConfig};
use crate::pool::Pool;
use crate::{seeded_rng, Scalar};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Model<T: Scalar = f64> {
    pub encoder: EncoderParams<T>,
    /// Bilinear affinity form, `hidden x hidden`.
    pub w_aff: Array2<T>,
    pub matcher: MatcherConfig,
}

/// Model parameters recorded on a tape.
pub struct BoundModel {
    pub encoder: BoundEncoder,
    pub w_aff: Var,
}

impl BoundModel {
    /// All parameter handles, in the order of [`Model::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars();
        v.push(self.w_aff);
        v
    }

    /// Soft matching `N_A x N_B` between two graphs, plus both node
    /// embedding matrices.
    pub fn soft_match<T: Scalar>(
        &self,
        tape: &Tape<T>,
        a: &Graph<T>,
        b: &Graph<T>,
        cfg: &MatcherConfig,
    ) -> Result<(Var, Var, Var), MatchError> {
        let (ha, _) = self.encoder.encode(tape, a)?;
        let (hb, _) = self.encoder.encode(tape, b)?;
        let m = affinity(tape, ha, hb, self.w_aff)?;
        let s = sinkhorn(tape, m, cfg)?;
        Ok((s.soft, ha, hb))
    }
}

impl<T: Scalar> Model<T> {
    pub fn init(seed: u64, dims: EncoderDims, matcher: MatcherConfig) -> Self {
        let mut rng = seeded_rng(seed, &[0xAFF]);
        Self {
            encoder: EncoderParams::init(seed, dims),
            w_aff: glorot(dims.hidden, dims.hidden, &mut rng),
            matcher,
        }
    }

    pub fn tensors(&self) -> Vec<&Array2<T>> {
        let mut v = self.encoder.tensors();
        v.push(&self.w_aff);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut v = self.encoder.tensors_mut();
        v.push(&mut self.w_aff);
        v
    }

    pub fn bind(&self, tape: &Tape<T>, trainable: bool) -> BoundModel {
        BoundModel {
            encoder: self.encoder.bind(tape, trainable),
            w_aff: if trainable {
                tape.param(self.w_aff.clone())
            } else {
                tape.constant(self.w_aff.clone())
            },
        }
    }

    /// Frozen forward pass to the Sinkhorn output.
    pub fn soft_match(&self, a: &Graph<T>, b: &Graph<T>) -> Result<Array2<T>, MatchError> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let (s, _, _) = bound.soft_match(&tape, a, b, &self.matcher)?;
        let out = tape.value(s).clone();
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let conv = |m: &Array2<T>| m.mapv(|x| U::of(x.as_f64()));
        let mut out = Model {
            encoder: EncoderParams::init(0, self.encoder.dims),
            w_aff: conv(&self.w_aff),
            matcher: self.matcher.clone(),
        };
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = conv(src);
        }
        out
    }
}

/// A trained model together with the final augmentation pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T: Scalar = f64> {
    pub version: u32,
    pub model: Model<T>,
    pub pool: Pool,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: Model<T>, pool: Pool) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model,
            pool,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path)?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(CheckpointError::Version(version));
        }
        Ok(serde_json::from_value(raw)?)
    }
}
